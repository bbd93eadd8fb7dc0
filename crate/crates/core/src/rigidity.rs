//! Maps into the round sphere: distance of the differential to SO(g, can),
//! the Riemannian cofactor, the weak Piola identity, and the rigidity
//! estimate ‖df − ℛ‖ ≤ C‖dist(df, SO)‖ for perturbed rotations.
//!
//! Everything is expressed through F̂ = Tᵀ·J·E, the differential in a
//! g-orthonormal source frame E and an orthonormal target frame T of
//! T_{f(x)}Sᵈ (columns of an m×d matrix, m = d+1).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{shape_mismatch, Error, Result};
use crate::fields::{Chart, Field, ImmersionField, MetricField, SineDictionary, VectorOneFormField};
use crate::fixtures;
use crate::immersion::{self, RigidMotion};
use crate::linalg;

/// Tolerance on |f| − 1 for sphere-valued maps.
pub const UNIT_TOLERANCE: f64 = 1e-12;

/// Defects and distances below this are reported as exact zeros.
pub const ROUNDING_FLOOR: f64 = 1e-12;

/// Unit-vector field f: M → Sᵈ ⊂ ℝ^{d+1}.
#[derive(Clone, Debug)]
pub struct SphereMap {
    field: ImmersionField,
    differential: Option<VectorOneFormField>,
    boundary_reference: Option<ImmersionField>,
}

impl SphereMap {
    pub fn new(field: ImmersionField) -> Result<Self> {
        if field.chart().codim() != 1 {
            return Err(Error::InvalidArgument(format!(
                "sphere maps need codimension one, got {}",
                field.chart().codim()
            )));
        }
        let (point, defect) = field.unit_length_defect();
        if defect > UNIT_TOLERANCE {
            let norm = field.point(point).norm();
            return Err(Error::NotUnitLength { point, norm });
        }
        Ok(Self {
            field,
            differential: None,
            boundary_reference: None,
        })
    }

    /// Attaches a closed-form differential, used instead of finite differences.
    pub fn with_differential(mut self, df: VectorOneFormField) -> Result<Self> {
        if df.chart() != self.field.chart() || df.width() != self.field.ambient() {
            return Err(shape_mismatch(self.field.shape(), df.shape()));
        }
        self.differential = Some(df);
        Ok(self)
    }

    /// Records the boundary map f should agree with.
    pub fn with_boundary_reference(mut self, reference: ImmersionField) -> Result<Self> {
        if reference.chart() != self.field.chart() {
            return Err(shape_mismatch(self.field.chart().resolution(), reference.chart().resolution()));
        }
        self.boundary_reference = Some(reference);
        Ok(self)
    }

    pub fn field(&self) -> &ImmersionField {
        &self.field
    }

    pub fn chart(&self) -> &Chart {
        self.field.chart()
    }

    pub fn differential(&self) -> VectorOneFormField {
        match &self.differential {
            Some(df) => df.clone(),
            None => immersion::jacobian(&self.field),
        }
    }

    /// max over boundary points of |f − f_ref|; `None` without a reference.
    pub fn boundary_deviation(&self) -> Option<f64> {
        let reference = self.boundary_reference.as_ref()?;
        let chart = self.chart();
        let mut worst: f64 = 0.0;
        for p in 0..chart.n_points() {
            let idx = chart.multi_index(p);
            let on_boundary = idx.iter().zip(chart.resolution()).any(|(&i, &n)| i == 0 || i + 1 == n);
            if on_boundary {
                worst = worst.max((self.field.point(p) - reference.point(p)).norm());
            }
        }
        Some(worst)
    }
}

/// Orthonormal frame of f(x)^⊥, shape `[m, d]`, with det[T | f] > 0.
///
/// The ambient axes other than the last are projected and orthonormalized.
/// Where |f_last| is small that projection degenerates, and the axis most
/// aligned with f is dropped instead.
pub fn sphere_frames(f: &ImmersionField) -> Field {
    let m = f.ambient();
    let d = m - 1;
    let threshold = 0.5 / (m as f64).sqrt();
    f.map_points(&[m, d], |_, v, out| {
        let fv = DVector::from_column_slice(v);
        let drop = if fv[m - 1].abs() >= threshold {
            m - 1
        } else {
            (0..m).max_by(|&a, &b| fv[a].abs().total_cmp(&fv[b].abs())).unwrap_or(m - 1)
        };
        let mut cols: Vec<DVector<f64>> = Vec::with_capacity(d);
        for axis in (0..m).filter(|&a| a != drop) {
            let mut e = DVector::zeros(m);
            e[axis] = 1.0;
            e -= &fv * fv[axis];
            for c in &cols {
                let proj = c.dot(&e);
                e -= c * proj;
            }
            cols.push(e.normalize());
        }
        let mut t = DMatrix::from_columns(&cols);
        let mut full = t.clone().insert_column(d, 0.0);
        full.set_column(d, &fv);
        if full.determinant() < 0.0 {
            let neg = -t.column(d - 1);
            t.set_column(d - 1, &neg);
        }
        for a in 0..m {
            for b in 0..d {
                out[a * d + b] = t[(a, b)];
            }
        }
    })
}

fn check_inputs(df: &VectorOneFormField, g: &MetricField, frames: &Field) -> Result<()> {
    let chart = df.chart();
    let same = |c: &Chart| c.resolution() == chart.resolution() && c.extent() == chart.extent();
    if !same(g.chart()) || !same(frames.chart()) {
        return Err(shape_mismatch(chart.resolution(), g.chart().resolution()));
    }
    let d = chart.dim();
    if frames.shape() != [df.width(), d] {
        return Err(shape_mismatch([df.width(), d], frames.shape()));
    }
    Ok(())
}

struct PointFrames {
    /// Source frame E = L⁻ᵀ.
    e: DMatrix<f64>,
    /// E⁻¹ = Lᵀ.
    e_inv: DMatrix<f64>,
    t: DMatrix<f64>,
    /// m×d matrix with columns ∂ᵢf.
    j: DMatrix<f64>,
}

fn point_frames(df: &VectorOneFormField, g: &MetricField, frames: &Field, p: usize) -> Result<PointFrames> {
    let gm = g.matrix(p);
    let l = linalg::cholesky_lower(&gm).ok_or(Error::NotPositiveDefinite {
        point: p,
        eigenvalue: linalg::min_eigenvalue(&gm),
    })?;
    let e = l
        .clone()
        .try_inverse()
        .ok_or(Error::NotPositiveDefinite {
            point: p,
            eigenvalue: linalg::min_eigenvalue(&gm),
        })?
        .transpose();
    Ok(PointFrames {
        e,
        e_inv: l.transpose(),
        t: frames.matrix(p),
        j: df.matrix(p).transpose(),
    })
}

/// F̂ = Tᵀ J E per point, shape `[d, d]`.
pub fn frame_matrix(df: &VectorOneFormField, g: &MetricField, frames: &Field) -> Result<Field> {
    check_inputs(df, g, frames)?;
    let d = g.dim();
    let mut out = Field::zeros(g.chart(), &[d, d]);
    for p in 0..g.n_points() {
        let pf = point_frames(df, g, frames, p)?;
        out.set_matrix(p, &(pf.t.transpose() * pf.j * pf.e));
    }
    Ok(out)
}

/// Pointwise Frobenius distance of F̂ to SO(d), from signed singular values.
pub fn dist_to_so(df: &VectorOneFormField, g: &MetricField, frames: &Field) -> Result<Field> {
    let fhat = frame_matrix(df, g, frames)?;
    Ok(fhat.map_points(&[], |p, _, out| out[0] = linalg::dist_to_so(&fhat.matrix(p))))
}

/// cof(df) = T·cof(F̂)·E⁻¹, stored like `df` (row i is the value on ∂ᵢ).
pub fn riemannian_cofactor(df: &VectorOneFormField, g: &MetricField, frames: &Field) -> Result<VectorOneFormField> {
    check_inputs(df, g, frames)?;
    let (d, m) = (g.dim(), df.width());
    let mut out = Field::zeros(g.chart(), &[d, m]);
    for p in 0..g.n_points() {
        let pf = point_frames(df, g, frames, p)?;
        let fhat = pf.t.transpose() * &pf.j * &pf.e;
        let cof = &pf.t * linalg::cofactor(&fhat) * &pf.e_inv;
        out.set_matrix(p, &cof.transpose());
    }
    VectorOneFormField::new(out)
}

/// Weak Piola defect for a sphere map: for each dictionary scalar φ and each
/// ambient direction c, with ζ = φ e_c,
///
///   LHS_c = ∫ g^{ij} (cof df)_i[c] ∂ⱼφ dV_g,
///   RHS_c = ∫ g^{ij} ⟨∂ᵢf, (cof df)_j⟩ f[c] φ dV_g.
///
/// Returns the largest Euclidean norm of the vector (LHS − RHS)_c over the
/// dictionary, which makes the value invariant under rotations of the target.
pub fn piola_residual(f: &SphereMap, g: &MetricField, dictionary_size: usize) -> Result<f64> {
    let df = f.differential();
    let frames = sphere_frames(f.field());
    let cof = riemannian_cofactor(&df, g, &frames)?;
    let chart = g.chart();
    let dict = SineDictionary::new(chart, dictionary_size)?;
    let (d, m) = (chart.dim(), f.field().ambient());
    let vw = g.volume_weights();
    // per point: a[i][c] = Σ_j g^{ij} cof_j[c] and the scalar g^{ij}⟨∂ᵢf, cof_j⟩
    let mut a = vec![0.0; chart.n_points() * d * m];
    let mut tr = vec![0.0; chart.n_points()];
    for p in 0..chart.n_points() {
        let gi = g.inverse(p);
        let cm = cof.matrix(p);
        let jm = df.matrix(p);
        for i in 0..d {
            for c in 0..m {
                a[(p * d + i) * m + c] = (0..d).map(|j| gi[(i, j)] * cm[(j, c)]).sum();
            }
        }
        tr[p] = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| gi[(i, j)] * jm.row(i).dot(&cm.row(j)))
            .sum();
    }
    let mut worst: f64 = 0.0;
    for k in 0..dict.len() {
        let mut r = DVector::<f64>::zeros(m);
        for p in 0..chart.n_points() {
            let grad = dict.gradient(k, p);
            let phi = dict.value(k, p);
            let fv = f.field().at(p);
            for c in 0..m {
                let lhs: f64 = (0..d).map(|i| a[(p * d + i) * m + c] * grad[i]).sum();
                r[c] += vw[p] * (lhs - tr[p] * fv[c] * phi);
            }
        }
        worst = worst.max(r.norm());
    }
    Ok(worst)
}

/// Rotation Q minimizing ∫‖Q f_ref − f‖² dV_g.
pub fn best_sphere_rigid_motion(f: &SphereMap, f_ref: &SphereMap, g: &MetricField) -> Result<RigidMotion> {
    if f.chart() != f_ref.chart() {
        return Err(shape_mismatch(f_ref.chart().resolution(), f.chart().resolution()));
    }
    let a: Vec<_> = (0..f.field().n_points()).map(|p| f_ref.field().point(p)).collect();
    let b: Vec<_> = (0..f.field().n_points()).map(|p| f.field().point(p)).collect();
    Ok(immersion::weighted_procrustes(&a, &b, &g.volume_weights(), false))
}

/// Rotation Q minimizing ‖df − Q dι‖_{L²(dV_g)}, the norm on the left of the
/// rigidity estimate.
pub fn best_differential_rotation(
    df: &VectorOneFormField,
    d_iota: &VectorOneFormField,
    g: &MetricField,
) -> Result<DMatrix<f64>> {
    if df.shape() != d_iota.shape() || df.chart() != d_iota.chart() {
        return Err(shape_mismatch(d_iota.shape(), df.shape()));
    }
    let (d, m) = (g.dim(), df.width());
    let vw = g.volume_weights();
    let mut h = DMatrix::zeros(m, m);
    for p in 0..g.n_points() {
        let gi = g.inverse(p);
        let (jf, ji) = (df.matrix(p), d_iota.matrix(p));
        for i in 0..d {
            for j in 0..d {
                h += ji.row(j).transpose() * jf.row(i) * (vw[p] * gi[(i, j)]);
            }
        }
    }
    Ok(linalg::procrustes(&h))
}

/// ‖df − Q dι‖_{L²(dV_g)} with the pointwise norm taken in a g-orthonormal frame.
pub fn differential_distance(
    df: &VectorOneFormField,
    d_iota: &VectorOneFormField,
    q: &DMatrix<f64>,
    g: &MetricField,
) -> Result<f64> {
    if df.shape() != d_iota.shape() || df.chart() != d_iota.chart() {
        return Err(shape_mismatch(d_iota.shape(), df.shape()));
    }
    let vw = g.volume_weights();
    let mut acc = 0.0;
    for p in 0..g.n_points() {
        let diff = df.matrix(p).transpose() - q * d_iota.matrix(p).transpose();
        let gi = g.inverse(p);
        // |X|²_g = tr(X g⁻¹ Xᵀ) for X with columns X(∂ᵢ)
        acc += vw[p] * (&diff * gi * diff.transpose()).trace();
    }
    Ok(acc.sqrt())
}

/// ‖dist(df, SO(g, can))‖_{L²(dV_g)}.
pub fn rigidity_defect(f: &SphereMap, g: &MetricField) -> Result<f64> {
    let dist = dist_to_so(&f.differential(), g, &sphere_frames(f.field()))?;
    let vw = g.volume_weights();
    Ok(dist.data().iter().zip(&vw).map(|(v, w)| v * v * w).sum::<f64>().sqrt())
}

/// Unit-sphere chart (φ, θ) with its round metric and closed-form differential.
#[derive(Clone, Debug)]
pub struct SphereChart {
    pub metric: MetricField,
    pub iota: ImmersionField,
    pub d_iota: VectorOneFormField,
}

impl SphereChart {
    /// The sphere-cap fixture chart at resolution n×n.
    pub fn cap(n: usize) -> Self {
        Self::on(&fixtures::Fixture::SphereCap.chart(n))
    }

    pub fn on(chart: &Chart) -> Self {
        let iota = ImmersionField::from_fn(chart, |x| fixtures::unit_sphere(x[0], x[1]).to_vec()).expect("sphere");
        let d_iota = VectorOneFormField::new(Field::from_fn(chart, &[2, 3], |x, out| {
            out.copy_from_slice(fixtures::sphere_jacobian(x[0], x[1]).transpose().as_slice())
        }))
        .expect("sphere differential");
        Self {
            metric: fixtures::round_sphere_metric(chart),
            iota,
            d_iota,
        }
    }

    /// ι as a sphere map carrying its exact differential.
    pub fn identity_map(&self) -> SphereMap {
        SphereMap::new(self.iota.clone())
            .and_then(|s| s.with_differential(self.d_iota.clone()))
            .expect("unit sphere chart")
    }
}

/// f_t = (Q₀ι + t·b·v)/|Q₀ι + t·b·v| with the bump b = Π sin(π·sᵢ) in the
/// normalized chart coordinates sᵢ ∈ [0, 1], so f_t = Q₀ι on the boundary.
/// The defect and ‖df − ℛ‖ are both first order in t.
#[derive(Clone, Debug)]
pub struct PerturbedRotationFamily {
    pub base: SphereChart,
    pub rotation: DMatrix<f64>,
    pub direction: DVector<f64>,
}

impl PerturbedRotationFamily {
    pub fn new(base: SphereChart, rotation: DMatrix<f64>, direction: DVector<f64>) -> Result<Self> {
        let defect = linalg::orthogonality_defect(&rotation);
        let det = rotation.determinant();
        if rotation.nrows() != 3 || defect > 1e-9 || det <= 0.0 {
            return Err(Error::NotSpecialOrthogonal { defect, det });
        }
        if direction.len() != 3 {
            return Err(shape_mismatch(3, direction.len()));
        }
        Ok(Self {
            base,
            rotation,
            direction,
        })
    }

    pub fn member(&self, t: f64) -> Result<SphereMap> {
        let chart = self.base.iota.chart().clone();
        let ext = chart.extent().to_vec();
        let m = 3;
        let mut values = Field::zeros(&chart, &[m]);
        let mut diff = Field::zeros(&chart, &[2, m]);
        for p in 0..chart.n_points() {
            let x = chart.coords(p);
            let s: Vec<f64> = (0..2).map(|a| (x[a] - ext[a].0) / (ext[a].1 - ext[a].0)).collect();
            let pi = std::f64::consts::PI;
            let bump = (pi * s[0]).sin() * (pi * s[1]).sin();
            let dbump = [
                pi / (ext[0].1 - ext[0].0) * (pi * s[0]).cos() * (pi * s[1]).sin(),
                pi / (ext[1].1 - ext[1].0) * (pi * s[0]).sin() * (pi * s[1]).cos(),
            ];
            let u = &self.rotation * self.base.iota.point(p) + &self.direction * (t * bump);
            let norm = u.norm();
            let fv = &u / norm;
            let proj = DMatrix::identity(m, m) - &fv * fv.transpose();
            values.at_mut(p).copy_from_slice(fv.as_slice());
            let jd = self.base.d_iota.matrix(p);
            for i in 0..2 {
                let du = &self.rotation * jd.row(i).transpose() + &self.direction * (t * dbump[i]);
                let dfi = &proj * du / norm;
                diff.at_mut(p)[i * m..(i + 1) * m].copy_from_slice(dfi.as_slice());
            }
        }
        let reference = ImmersionField::from_fn(&chart, |x| {
            (&self.rotation * DVector::from_column_slice(&fixtures::unit_sphere(x[0], x[1]))).as_slice().to_vec()
        })?;
        SphereMap::new(ImmersionField::new(values)?)?
            .with_differential(VectorOneFormField::new(diff)?)?
            .with_boundary_reference(reference)
    }
}

fn nan_as_null<'de, D: Deserializer<'de>>(de: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(de)?.unwrap_or(f64::NAN))
}

/// One member of a rigidity experiment.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RigidityReport {
    pub t: f64,
    /// ‖dist(df, SO(g, can))‖_{L²}.
    pub defect: f64,
    /// ‖df − ℛ‖_{L²} for the optimal rotation ℛ = Q∘ι.
    pub lhs: f64,
    /// lhs / defect; NaN (serialized as null) for an exact isometry.
    #[serde(deserialize_with = "nan_as_null")]
    pub ratio: f64,
    pub exact_isometry: bool,
    pub best_motion: RigidMotion,
    pub boundary_deviation: Option<f64>,
}

impl RigidityReport {
    pub fn compute(t: f64, f: &SphereMap, base: &SphereChart) -> Result<Self> {
        let g = &base.metric;
        let mut defect = rigidity_defect(f, g)?;
        let df = f.differential();
        let q = best_differential_rotation(&df, &base.d_iota, g)?;
        let mut lhs = differential_distance(&df, &base.d_iota, &q, g)?;
        if defect < ROUNDING_FLOOR {
            defect = 0.0;
        }
        if lhs < ROUNDING_FLOOR {
            lhs = 0.0;
        }
        let exact_isometry = defect == 0.0;
        let ratio = if exact_isometry { f64::NAN } else { lhs / defect };
        let best_motion = RigidMotion::new(q, DVector::zeros(f.field().ambient()))?;
        Ok(Self {
            t,
            defect,
            lhs,
            ratio,
            exact_isometry,
            best_motion,
            boundary_deviation: f.boundary_deviation(),
        })
    }
}

/// One report per t, in input order.
pub fn rigidity_experiment(family: &PerturbedRotationFamily, t_values: &[f64]) -> Result<Vec<RigidityReport>> {
    t_values
        .iter()
        .map(|&t| RigidityReport::compute(t, &family.member(t)?, &family.base))
        .collect()
}

/// Least-squares slope of log y against log x.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |s, p| (s.0 + p.0 / n, s.1 + p.1 / n));
    let (sxy, sxx) = pts
        .iter()
        .fold((0.0, 0.0), |s, p| (s.0 + (p.0 - mx) * (p.1 - my), s.1 + (p.0 - mx).powi(2)));
    sxy / sxx
}
