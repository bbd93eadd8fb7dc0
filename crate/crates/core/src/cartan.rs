//! Moving frames: coframe and connection form of a triple (g, B, ∇ᴱ), the
//! Pfaff system dA = 𝐖A, the Poincaré system df = wA, and holonomy.
//!
//! Row a of the frame A is the ambient image of the a-th adapted frame vector:
//! rows 0..d are f_*e_a for the g-orthonormal frame e_a = Σ_j E[j][a] ∂_j with
//! E = L⁻ᵀ (g = LLᵀ), rows d..d+k are the normals ν_α. The connection form is
//! 𝐖_i[a][b] = ⟨∂ᵢA_a, A_b⟩, so that ∂ᵢA = 𝐖_i A, and the coframe is
//! w_i[a] = L[i][a] (zero in the normal columns), so that ∂ᵢf = w_i A.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::curvature::christoffel;
use crate::error::{shape_mismatch, Error, Result};
use crate::fields::{
    typed_field, Chart, Field, ImmersionField, MetricField, NormalConnectionField, SecondFormField,
};
use crate::linalg;

typed_field!(
    /// Augmented coframe, shape `[d, d+k]`: row i holds w(∂ᵢ).
    CoframeField
);

typed_field!(
    /// so(d+k)-valued 1-form, shape `[d, d+k, d+k]`.
    ConnectionForm
);

typed_field!(
    /// SO(d+k)-valued frame, shape `[d+k, d+k]`.
    FrameField
);

impl CoframeField {
    pub fn new(field: Field) -> Result<Self> {
        let c = field.chart();
        if field.shape() != [c.dim(), c.ambient()] {
            return Err(shape_mismatch([c.dim(), c.ambient()], field.shape()));
        }
        field.check_finite()?;
        Ok(Self(field))
    }
}

impl ConnectionForm {
    pub fn new(field: Field) -> Result<Self> {
        let c = field.chart();
        let n = c.ambient();
        if field.shape() != [c.dim(), n, n] {
            return Err(shape_mismatch([c.dim(), n, n], field.shape()));
        }
        field.check_finite()?;
        Ok(Self(field))
    }

    /// 𝐖_i at point `p`.
    pub fn component(&self, p: usize, i: usize) -> DMatrix<f64> {
        self.block(p, i)
    }

    /// Largest |𝐖 + 𝐖ᵀ| entry.
    pub fn antisymmetry_defect(&self) -> f64 {
        let (d, n) = (self.shape()[0], self.shape()[1]);
        let mut worst: f64 = 0.0;
        for p in 0..self.n_points() {
            for i in 0..d {
                let w = self.component(p, i);
                worst = worst.max((&w + w.transpose()).abs().max());
            }
        }
        let _ = n;
        worst
    }
}

impl FrameField {
    pub fn new(field: Field) -> Result<Self> {
        let c = field.chart();
        let n = c.ambient();
        if field.shape() != [n, n] {
            return Err(shape_mismatch([n, n], field.shape()));
        }
        for p in 0..field.n_points() {
            let a = field.matrix(p);
            let defect = linalg::orthogonality_defect(&a);
            let det = a.determinant();
            if defect > 1e-9 || det <= 0.0 {
                return Err(Error::NotSpecialOrthogonal { defect, det });
            }
        }
        Ok(Self(field))
    }

    /// Largest ‖AᵀA − I‖_F over the grid.
    pub fn orthogonality_defect(&self) -> f64 {
        (0..self.n_points())
            .map(|p| linalg::orthogonality_defect(&self.matrix(p)))
            .fold(0.0, f64::max)
    }
}

/// g-orthonormal frame E = L⁻ᵀ (shape `[d, d]`, columns are frame vectors in
/// coordinates) and the augmented coframe.
pub fn orthonormal_frame(g: &MetricField) -> Result<(Field, CoframeField)> {
    let chart = g.chart();
    let (d, n) = (chart.dim(), chart.ambient());
    let mut e = Field::zeros(chart, &[d, d]);
    let mut w = Field::zeros(chart, &[d, n]);
    for p in 0..chart.n_points() {
        let gm = g.matrix(p);
        let l = linalg::cholesky_lower(&gm).ok_or(Error::NotPositiveDefinite {
            point: p,
            eigenvalue: linalg::min_eigenvalue(&gm),
        })?;
        let linv = l.clone().try_inverse().ok_or(Error::NotPositiveDefinite {
            point: p,
            eigenvalue: linalg::min_eigenvalue(&gm),
        })?;
        e.set_matrix(p, &linv.transpose());
        let wv = w.at_mut(p);
        for i in 0..d {
            for a in 0..d {
                wv[i * n + a] = l[(i, a)];
            }
        }
    }
    Ok((e, CoframeField(w)))
}

fn same_grid(a: &Chart, b: &Chart) -> Result<()> {
    if a.resolution() != b.resolution() || a.extent() != b.extent() {
        return Err(shape_mismatch(a.resolution(), b.resolution()));
    }
    Ok(())
}

/// 𝐖 = [[ω, B̂], [−B̂ᵀ, ∇ᴱ]] assembled in the adapted orthonormal frame.
pub fn connection_form(g: &MetricField, b: &SecondFormField, ne: &NormalConnectionField) -> Result<ConnectionForm> {
    same_grid(g.chart(), b.chart())?;
    same_grid(g.chart(), ne.chart())?;
    let chart = g.chart();
    let (d, k, n) = (chart.dim(), b.codim(), chart.ambient());
    if k + d != n || ne.shape()[1] != k {
        return Err(shape_mismatch(n, d + k));
    }
    let (e, _) = orthonormal_frame(g)?;
    let de = e.grad();
    let gamma = christoffel(g);
    let mut out = Field::zeros(chart, &[d, n, n]);
    for p in 0..chart.n_points() {
        let gm = g.matrix(p);
        let em = e.matrix(p);
        let dev = de.at(p);
        let nv = ne.at(p);
        for i in 0..d {
            // D_i[m][a] = ∂ᵢE[m][a] + Γᵐ_ij E[j][a]
            let dm = DMatrix::from_fn(d, d, |m, a| {
                dev[(i * d + m) * d + a] + (0..d).map(|j| gamma.get(p, m, i, j) * em[(j, a)]).sum::<f64>()
            });
            let tang = linalg::skew(&(dm.transpose() * &gm * &em));
            let mut w = DMatrix::zeros(n, n);
            w.view_mut((0, 0), (d, d)).copy_from(&tang);
            for al in 0..k {
                let bm = b.slice(p, al);
                for a in 0..d {
                    let v: f64 = (0..d).map(|j| bm[(i, j)] * em[(j, a)]).sum();
                    w[(a, d + al)] = v;
                    w[(d + al, a)] = -v;
                }
                for be in 0..k {
                    w[(d + al, d + be)] = nv[(i * k + al) * k + be];
                }
            }
            out.set_block(p, i, &w);
        }
    }
    Ok(ConnectionForm(out))
}

/// Visits grid edges outward from `x0`: axis `order[0]` first, then each
/// subsequent axis from every point reached so far. `step(from, to, axis, sign)`
/// is called with `from` already visited.
fn sweep(chart: &Chart, x0: &[usize], order: &[usize], mut step: impl FnMut(usize, usize, usize, f64)) {
    let mut reached = vec![chart.index(x0)];
    for &axis in order {
        let stride = chart.stride(axis);
        let n = chart.resolution()[axis];
        let mut fresh = Vec::new();
        for &p in &reached {
            let i = (p / stride) % n;
            let mut cur = p;
            for _ in i + 1..n {
                let next = cur + stride;
                step(cur, next, axis, 1.0);
                fresh.push(next);
                cur = next;
            }
            cur = p;
            for _ in 0..i {
                let next = cur - stride;
                step(cur, next, axis, -1.0);
                fresh.push(next);
                cur = next;
            }
        }
        reached.extend(fresh);
    }
}

fn check_order(chart: &Chart, order: &[usize]) -> Result<()> {
    let mut sorted = order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..chart.dim()).collect::<Vec<_>>() {
        return Err(Error::InvalidArgument(format!("axis order {order:?} is not a permutation")));
    }
    Ok(())
}

/// Solves dA = 𝐖A with A(x0) = A0, sweeping axes in natural order.
pub fn integrate_pfaff(w: &ConnectionForm, a0: &DMatrix<f64>, x0: &[usize]) -> Result<FrameField> {
    let order: Vec<usize> = (0..w.chart().dim()).collect();
    integrate_pfaff_ordered(w, a0, x0, &order)
}

/// [`integrate_pfaff`] with an explicit axis order.
pub fn integrate_pfaff_ordered(
    w: &ConnectionForm,
    a0: &DMatrix<f64>,
    x0: &[usize],
    order: &[usize],
) -> Result<FrameField> {
    let chart = w.chart();
    let n = chart.ambient();
    check_order(chart, order)?;
    if !chart.contains(x0) {
        return Err(Error::OffGrid(x0.to_vec()));
    }
    if a0.nrows() != n || a0.ncols() != n {
        return Err(shape_mismatch([n, n], [a0.nrows(), a0.ncols()]));
    }
    let defect = linalg::orthogonality_defect(a0);
    let det = a0.determinant();
    if defect > 1e-9 || det <= 0.0 {
        return Err(Error::NotSpecialOrthogonal { defect, det });
    }
    let mut out = Field::zeros(chart, &[n, n]);
    out.set_matrix(chart.index(x0), a0);
    sweep(chart, x0, order, |from, to, axis, sign| {
        let h = chart.spacing(axis) * sign;
        let wm = (w.component(from, axis) + w.component(to, axis)) * (0.5 * h);
        let next = linalg::polar(&(linalg::expm_skew(&wm) * out.matrix(from)));
        out.set_matrix(to, &next);
    });
    Ok(FrameField(out))
}

/// Solves df = wA with f(x0) = f0, sweeping axes in natural order.
pub fn integrate_poincare(
    cof: &CoframeField,
    a: &FrameField,
    f0: &DVector<f64>,
    x0: &[usize],
) -> Result<ImmersionField> {
    let order: Vec<usize> = (0..cof.chart().dim()).collect();
    integrate_poincare_ordered(cof, a, f0, x0, &order)
}

pub fn integrate_poincare_ordered(
    cof: &CoframeField,
    a: &FrameField,
    f0: &DVector<f64>,
    x0: &[usize],
    order: &[usize],
) -> Result<ImmersionField> {
    let chart = cof.chart();
    same_grid(chart, a.chart())?;
    check_order(chart, order)?;
    let n = chart.ambient();
    if f0.len() != n || a.shape() != [n, n] {
        return Err(shape_mismatch(n, f0.len()));
    }
    if !chart.contains(x0) {
        return Err(Error::OffGrid(x0.to_vec()));
    }
    let rate = |p: usize, axis: usize| -> DVector<f64> {
        let row = DMatrix::from_row_slice(1, n, &cof.at(p)[axis * n..(axis + 1) * n]);
        (row * a.matrix(p)).transpose().column(0).into_owned()
    };
    let mut out = Field::zeros(chart, &[n]);
    out.at_mut(chart.index(x0)).copy_from_slice(f0.as_slice());
    sweep(chart, x0, order, |from, to, axis, sign| {
        let h = chart.spacing(axis) * sign;
        let incr = (rate(from, axis) + rate(to, axis)) * (0.5 * h);
        let base = DVector::from_column_slice(out.at(from));
        out.at_mut(to).copy_from_slice((base + incr).as_slice());
    });
    ImmersionField::new(out.with_chart(chart)?)
}

/// ‖A_loop − I‖_F for every plaquette, with A_loop the product of the four
/// edge exponentials around it.
pub fn holonomy_defects(w: &ConnectionForm) -> Vec<f64> {
    let chart = w.chart();
    let d = chart.dim();
    let n = chart.ambient();
    let eye = DMatrix::<f64>::identity(n, n);
    let edge = |p: usize, q: usize, axis: usize, sign: f64| {
        let h = chart.spacing(axis) * sign;
        linalg::expm_skew(&((w.component(p, axis) + w.component(q, axis)) * (0.5 * h)))
    };
    let mut out = Vec::new();
    for a in 0..d {
        for b in a + 1..d {
            let (sa, sb) = (chart.stride(a), chart.stride(b));
            let (na, nb) = (chart.resolution()[a], chart.resolution()[b]);
            for p in 0..chart.n_points() {
                let (ia, ib) = ((p / sa) % na, (p / sb) % nb);
                if ia + 1 >= na || ib + 1 >= nb {
                    continue;
                }
                let (pa, pb, pab) = (p + sa, p + sb, p + sa + sb);
                let loop_m = edge(p, pb, b, -1.0)
                    * edge(pb, pab, a, -1.0) * edge(pa, pab, b, 1.0) * edge(p, pa, a, 1.0);
                out.push((loop_m - &eye).norm());
            }
        }
    }
    out
}

/// Largest plaquette holonomy defect.
pub fn holonomy_defect(w: &ConnectionForm) -> f64 {
    holonomy_defects(w).into_iter().fold(0.0, f64::max)
}

/// Lᵖ norm over plaquettes of dw − w∧𝐖 evaluated at plaquette centres.
pub fn first_structural_residual(cof: &CoframeField, w: &ConnectionForm, p: f64) -> Result<f64> {
    let chart = cof.chart();
    same_grid(chart, w.chart())?;
    if !(p >= 1.0) {
        return Err(Error::InvalidArgument(format!("p = {p} < 1")));
    }
    let d = chart.dim();
    let n = chart.ambient();
    let row = |q: usize, i: usize| DVector::from_column_slice(&cof.at(q)[i * n..(i + 1) * n]);
    let wedge = |q: usize, i: usize, j: usize| -> DVector<f64> {
        (w.component(q, j).transpose() * row(q, i)) - (w.component(q, i).transpose() * row(q, j))
    };
    let mut acc = 0.0;
    let mut worst: f64 = 0.0;
    for a in 0..d {
        for b in a + 1..d {
            let (sa, sb) = (chart.stride(a), chart.stride(b));
            let (na, nb) = (chart.resolution()[a], chart.resolution()[b]);
            let (ha, hb) = (chart.spacing(a), chart.spacing(b));
            for q in 0..chart.n_points() {
                let (ia, ib) = ((q / sa) % na, (q / sb) % nb);
                if ia + 1 >= na || ib + 1 >= nb {
                    continue;
                }
                let corners = [q, q + sa, q + sb, q + sa + sb];
                let db_a = ((row(q + sa, b) + row(q + sa + sb, b)) - (row(q, b) + row(q + sb, b))) * (0.5 / ha);
                let da_b = ((row(q + sb, a) + row(q + sa + sb, a)) - (row(q, a) + row(q + sa, a))) * (0.5 / hb);
                let wedge_c = corners.iter().fold(DVector::zeros(n), |s, &c| s + wedge(c, a, b)) * 0.25;
                let r = (db_a - da_b - wedge_c).norm();
                worst = worst.max(r);
                acc += r.powf(if p.is_infinite() { 1.0 } else { p }) * ha * hb;
            }
        }
    }
    Ok(if p.is_infinite() { worst } else { acc.powf(1.0 / p) })
}

/// Resolution and safety factor of the holonomy calibration.
pub const HOLONOMY_CALIBRATION_RESOLUTION: usize = 33;

/// κ_hol in the holonomy threshold κ_hol·h³, calibrated once on the
/// harvested unit-sphere cap at [`HOLONOMY_CALIBRATION_RESOLUTION`] with a
/// factor of 10.
pub fn calibrated_holonomy_kappa() -> f64 {
    static KAPPA: OnceLock<f64> = OnceLock::new();
    *KAPPA.get_or_init(|| {
        let f = crate::fixtures::Fixture::SphereCap.immersion(HOLONOMY_CALIBRATION_RESOLUTION);
        let g = crate::immersion::induced_metric(&f).expect("sphere cap is an immersion");
        let (b, ne) = crate::immersion::second_form(&f).expect("sphere cap is an immersion");
        let w = connection_form(&g, &b, &ne).expect("sphere connection form");
        let h = f.chart().h();
        10.0 * holonomy_defect(&w) / h.powi(3)
    })
}

pub fn holonomy_threshold(chart: &Chart) -> f64 {
    calibrated_holonomy_kappa() * chart.h().powi(3)
}

/// Everything produced by integrating a triple (g, B, ∇ᴱ).
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub frame: FrameField,
    pub immersion: ImmersionField,
    pub coframe: CoframeField,
    pub connection: ConnectionForm,
    pub diagnostics: ReconstructionDiagnostics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionDiagnostics {
    pub holonomy_defect: f64,
    pub holonomy_threshold: f64,
    pub first_structural_residual: f64,
    pub isometry_defect: f64,
    pub frame_orthogonality_defect: f64,
}

/// Integrates the Pfaff then the Poincaré system from `x0` (default: lowest
/// corner) with A(x0) = A0 (default I) and f(x0) = f0 (default 0).
pub fn reconstruct(
    g: &MetricField,
    b: &SecondFormField,
    ne: &NormalConnectionField,
    a0: Option<&DMatrix<f64>>,
    f0: Option<&DVector<f64>>,
    x0: Option<&[usize]>,
) -> Result<Reconstruction> {
    let chart = g.chart().with_codim(b.codim())?;
    let g = MetricField::new(g.field().clone().with_chart(&chart)?)?;
    let n = chart.ambient();
    let eye = DMatrix::identity(n, n);
    let origin = DVector::zeros(n);
    let corner = chart.origin_index();
    let a0 = a0.unwrap_or(&eye);
    let f0 = f0.unwrap_or(&origin);
    let x0 = x0.unwrap_or(&corner);
    let connection = connection_form(&g, b, ne)?;
    let (_, coframe) = orthonormal_frame(&g)?;
    let frame = integrate_pfaff(&connection, a0, x0)?;
    let immersion = integrate_poincare(&coframe, &frame, f0, x0)?;
    let isometry_defect = match crate::immersion::induced_metric(&immersion) {
        Ok(gf) => gf.sub(&g)?.max_abs(),
        Err(_) => f64::INFINITY,
    };
    let diagnostics = ReconstructionDiagnostics {
        holonomy_defect: holonomy_defect(&connection),
        holonomy_threshold: holonomy_threshold(&chart),
        first_structural_residual: first_structural_residual(&coframe, &connection, 2.0)?,
        isometry_defect,
        frame_orthogonality_defect: frame.orthogonality_defect(),
    };
    Ok(Reconstruction {
        frame,
        immersion,
        coframe,
        connection,
        diagnostics,
    })
}
