//! Forward geometry of an immersion f: chart → ℝ^{d+k}, rigid alignment and
//! distances modulo rigid motions.
//!
//! The normal frame is oriented so that (∂₁f, …, ∂_d f, ν₁, …, ν_k) is a
//! positively oriented basis of ℝ^{d+k}.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{shape_mismatch, Error, Result};
use crate::fields::{
    Field, ImmersionField, MetricField, NormalConnectionField, SecondFormField, VectorOneFormField, SPD_FLOOR,
};
use crate::linalg;

/// Rows ∂ᵢf, shape `[d, m]`.
pub fn jacobian(f: &ImmersionField) -> VectorOneFormField {
    VectorOneFormField(f.grad())
}

/// g = dfᵀ df.
pub fn induced_metric(f: &ImmersionField) -> Result<MetricField> {
    metric_from_jacobian(&jacobian(f))
}

pub(crate) fn metric_from_jacobian(j: &VectorOneFormField) -> Result<MetricField> {
    let d = j.chart().dim();
    let m = j.width();
    let g = j.map_points(&[d, d], |_, jv, out| {
        for a in 0..d {
            for b in 0..d {
                out[a * d + b] = (0..m).map(|c| jv[a * m + c] * jv[b * m + c]).sum();
            }
        }
    });
    let bad: Vec<usize> = (0..g.n_points())
        .filter(|&p| !(linalg::min_eigenvalue(&g.matrix(p)) > SPD_FLOOR))
        .collect();
    if !bad.is_empty() {
        return Err(Error::DegenerateImmersion { points: bad });
    }
    MetricField::new(g)
}

/// ‖dfᵀdf − g‖_∞.
pub fn isometry_defect(f: &ImmersionField, g: &MetricField) -> Result<f64> {
    let gf = induced_metric(f)?;
    Ok(gf.sub(g)?.max_abs())
}

/// Orthonormal projector onto the normal space of the rows of `j`.
fn normal_projector(j: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let m = j.ncols();
    let gi = linalg::inv_spd(&(j * j.transpose()))?;
    Some(DMatrix::identity(m, m) - j.transpose() * gi * j)
}

fn gram_schmidt(vs: &mut [DVector<f64>]) -> bool {
    for a in 0..vs.len() {
        for b in 0..a {
            let proj = vs[a].dot(&vs[b]);
            let vb = vs[b].clone();
            vs[a] -= vb * proj;
        }
        let n = vs[a].norm();
        if n < 1e-12 {
            return false;
        }
        vs[a] /= n;
    }
    true
}

fn orientation(j: &DMatrix<f64>, normals: &[DVector<f64>]) -> f64 {
    let (d, m) = (j.nrows(), j.ncols());
    DMatrix::from_fn(m, m, |r, c| if r < d { j[(r, c)] } else { normals[r - d][c] }).determinant()
}

/// Unit normal of a hypersurface from the cofactors of the last row.
fn hypersurface_normal(j: &DMatrix<f64>) -> DVector<f64> {
    let (d, m) = (j.nrows(), j.ncols());
    let mut nu = DVector::from_fn(m, |c, _| {
        let minor = j.clone().remove_column(c);
        let sign = if (d + c) % 2 == 0 { 1.0 } else { -1.0 };
        sign * minor.determinant()
    });
    let n = nu.norm();
    nu /= n;
    nu
}

/// Orthonormal normal frame per point, shape `[k, m]`.
pub fn normal_field(f: &ImmersionField) -> Result<Field> {
    let jf = jacobian(f);
    normal_field_from(f, &jf)
}

fn normal_field_from(f: &ImmersionField, jf: &VectorOneFormField) -> Result<Field> {
    let chart = f.chart();
    let (k, m) = (chart.codim(), chart.ambient());
    metric_from_jacobian(jf)?;
    let jac = |p: usize| jf.matrix(p);
    let mut out = Field::zeros(chart, &[k, m]);
    if k == 1 {
        for p in 0..chart.n_points() {
            let nu = hypersurface_normal(&jac(p));
            out.at_mut(p).copy_from_slice(nu.as_slice());
        }
        return Ok(out);
    }
    // Reference normals at the centre: largest projections of the ambient axes.
    let centre = chart.centre_index();
    let proj = normal_projector(&jac(centre)).ok_or(Error::DegenerateImmersion { points: vec![centre] })?;
    let mut cols: Vec<usize> = (0..m).collect();
    cols.sort_by(|&a, &b| proj.column(b).norm().total_cmp(&proj.column(a).norm()));
    let mut reference: Vec<DVector<f64>> = Vec::new();
    for c in cols {
        let mut cand = reference.clone();
        cand.push(proj.column(c).into_owned());
        if gram_schmidt(&mut cand) {
            reference = cand;
        }
        if reference.len() == k {
            break;
        }
    }
    for p in 0..chart.n_points() {
        let j = jac(p);
        let pr = normal_projector(&j).ok_or(Error::DegenerateImmersion { points: vec![p] })?;
        let mut vs: Vec<DVector<f64>> = reference.iter().map(|r| &pr * r).collect();
        if !gram_schmidt(&mut vs) {
            return Err(Error::DegenerateImmersion { points: vec![p] });
        }
        if orientation(&j, &vs) < 0.0 {
            vs[k - 1] *= -1.0;
        }
        let o = out.at_mut(p);
        for (a, v) in vs.iter().enumerate() {
            o[a * m..(a + 1) * m].copy_from_slice(v.as_slice());
        }
    }
    Ok(out)
}

/// Second fundamental form, normal connection and the largest asymmetry of
/// the raw B before symmetrization.
pub fn second_form_with_asymmetry(f: &ImmersionField) -> Result<(SecondFormField, NormalConnectionField, f64)> {
    let chart = f.chart();
    let (d, k, m) = (chart.dim(), chart.codim(), chart.ambient());
    let jf = jacobian(f);
    let nu = normal_field_from(f, &jf)?;
    let hess = jf.grad();
    let mut asym: f64 = 0.0;
    let b = nu.map_points(&[k, d, d], |p, nv, out| {
        let h = hess.at(p);
        for a in 0..k {
            let n = &nv[a * m..(a + 1) * m];
            for i in 0..d {
                for j in 0..d {
                    let hij = &h[(i * d + j) * m..(i * d + j + 1) * m];
                    out[(a * d + i) * d + j] = hij.iter().zip(n).map(|(x, y)| x * y).sum();
                }
            }
            for i in 0..d {
                for j in i + 1..d {
                    asym = asym.max((out[(a * d + i) * d + j] - out[(a * d + j) * d + i]).abs());
                }
            }
        }
    });
    let dnu = nu.grad();
    let ne = nu.map_points(&[d, k, k], |p, nv, out| {
        let dn = dnu.at(p);
        for i in 0..d {
            for a in 0..k {
                for c in 0..k {
                    let da = &dn[(i * k + a) * m..(i * k + a + 1) * m];
                    out[(i * k + a) * k + c] = da.iter().zip(&nv[c * m..(c + 1) * m]).map(|(x, y)| x * y).sum();
                }
            }
        }
    });
    Ok((SecondFormField::new(b)?, NormalConnectionField::new(ne)?, asym))
}

/// B^α_ij = ⟨∂ᵢ∂ⱼf, ν_α⟩ and N_i[α][β] = ⟨∂ᵢν_α, ν_β⟩.
pub fn second_form(f: &ImmersionField) -> Result<(SecondFormField, NormalConnectionField)> {
    let (b, n, _) = second_form_with_asymmetry(f)?;
    Ok((b, n))
}

/// x ↦ Q x + t with Q ∈ SO(m).
#[derive(Clone, Debug, PartialEq)]
pub struct RigidMotion {
    pub rotation: DMatrix<f64>,
    pub translation: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct RigidMotionRepr {
    rotation: Vec<Vec<f64>>,
    translation: Vec<f64>,
}

impl Serialize for RigidMotion {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RigidMotionRepr {
            rotation: self.rotation.row_iter().map(|r| r.iter().copied().collect()).collect(),
            translation: self.translation.iter().copied().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RigidMotion {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = RigidMotionRepr::deserialize(d)?;
        let n = r.rotation.len();
        if r.rotation.iter().any(|row| row.len() != n) || r.translation.len() != n {
            return Err(serde::de::Error::custom("rigid motion must be square with matching translation"));
        }
        Ok(RigidMotion {
            rotation: DMatrix::from_fn(n, n, |i, j| r.rotation[i][j]),
            translation: DVector::from_vec(r.translation),
        })
    }
}

impl RigidMotion {
    pub fn identity(m: usize) -> Self {
        Self {
            rotation: DMatrix::identity(m, m),
            translation: DVector::zeros(m),
        }
    }

    pub fn new(rotation: DMatrix<f64>, translation: DVector<f64>) -> Result<Self> {
        let defect = linalg::orthogonality_defect(&rotation);
        let det = rotation.determinant();
        if defect > 1e-9 || det <= 0.0 {
            return Err(Error::NotSpecialOrthogonal { defect, det });
        }
        if translation.len() != rotation.nrows() {
            return Err(shape_mismatch(rotation.nrows(), translation.len()));
        }
        Ok(Self { rotation, translation })
    }

    pub fn apply_point(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.rotation * x + &self.translation
    }

    pub fn apply(&self, f: &ImmersionField) -> ImmersionField {
        let m = f.ambient();
        ImmersionField(f.map_points(&[m], |_, v, out| {
            let y = self.apply_point(&DVector::from_column_slice(v));
            out.copy_from_slice(y.as_slice());
        }))
    }

    pub fn inverse(&self) -> Self {
        let qt = self.rotation.transpose();
        let t = -(&qt * &self.translation);
        Self { rotation: qt, translation: t }
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: &self.rotation * &other.rotation,
            translation: &self.rotation * &other.translation + &self.translation,
        }
    }
}

/// Weighted Procrustes: rotation minimizing Σ w‖Q aᵢ + t − bᵢ‖², with
/// optional translation (centroid subtraction).
pub fn weighted_procrustes(a: &[DVector<f64>], b: &[DVector<f64>], w: &[f64], translate: bool) -> RigidMotion {
    let m = a[0].len();
    let wsum: f64 = w.iter().sum();
    let (ca, cb) = if translate {
        let ca = a.iter().zip(w).fold(DVector::zeros(m), |acc, (x, &wi)| acc + x * wi) / wsum;
        let cb = b.iter().zip(w).fold(DVector::zeros(m), |acc, (x, &wi)| acc + x * wi) / wsum;
        (ca, cb)
    } else {
        (DVector::zeros(m), DVector::zeros(m))
    };
    let mut h = DMatrix::zeros(m, m);
    for ((x, y), &wi) in a.iter().zip(b).zip(w) {
        h += (x - &ca) * (y - &cb).transpose() * wi;
    }
    let q = linalg::procrustes(&h);
    let t = if translate { &cb - &q * &ca } else { DVector::zeros(m) };
    RigidMotion { rotation: q, translation: t }
}

fn points(f: &ImmersionField) -> Vec<DVector<f64>> {
    (0..f.n_points()).map(|p| f.point(p)).collect()
}

/// Kabsch alignment of `f` onto `f_ref` with uniform point weights.
pub fn best_rigid_motion(f: &ImmersionField, f_ref: &ImmersionField) -> Result<RigidMotion> {
    if f.chart() != f_ref.chart() {
        return Err(shape_mismatch(f_ref.chart().resolution(), f.chart().resolution()));
    }
    let w = vec![1.0; f.n_points()];
    Ok(weighted_procrustes(&points(f), &points(f_ref), &w, true))
}

/// Σ‖Q f + t − f_ref‖² over grid points.
pub fn alignment_residual(motion: &RigidMotion, f: &ImmersionField, f_ref: &ImmersionField) -> f64 {
    (0..f.n_points())
        .map(|p| (motion.apply_point(&f.point(p)) - f_ref.point(p)).norm_squared())
        .sum()
}

/// Sobolev distance after Kabsch alignment of `f` onto `f_ref`.
pub fn quotient_distance(f: &ImmersionField, f_ref: &ImmersionField, order: usize, p: f64) -> Result<f64> {
    let motion = best_rigid_motion(f, f_ref)?;
    motion.apply(f).sub(f_ref)?.sobolev_norm(order, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::{ResidualReport, NormKind};
    use crate::fields::Chart;
    use crate::fixtures::{self, Fixture};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn rot3(a: f64, b: f64, c: f64) -> DMatrix<f64> {
        linalg::expm_skew(&DMatrix::from_row_slice(3, 3, &[0.0, -c, b, c, 0.0, -a, -b, a, 0.0]))
    }

    #[test]
    fn chart_embedding_forms() {
        let f = Fixture::Plane.immersion(9);
        let g = induced_metric(&f).unwrap();
        assert!(g.sub(&MetricField::identity(f.chart())).unwrap().max_abs() < 1e-13);
        let nu = normal_field(&f).unwrap();
        for p in 0..nu.n_points() {
            assert_abs_diff_eq!(nu.at(p)[2], 1.0, epsilon = 1e-14);
        }
        let (b, _) = second_form(&f).unwrap();
        assert!(b.max_abs() < 1e-12);
        let g2 = induced_metric(&ImmersionField(f.scale(2.0))).unwrap();
        assert!(g2.sub(&MetricField::identity(f.chart()).scale(4.0).unwrap()).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn cylinder_forms() {
        let fx = Fixture::Cylinder;
        let n = 65;
        let f = fx.immersion(n);
        let h = f.chart().h();
        let g = induced_metric(&f).unwrap();
        assert!(g.sub(&fx.metric(n)).unwrap().max_abs() < h * h);
        let nu = normal_field(&f).unwrap();
        let mut err: f64 = 0.0;
        for p in 0..nu.n_points() {
            let u = f.chart().coords(p)[0];
            err = err.max((nu.at(p)[0] - u.cos()).abs()).max((nu.at(p)[1] - u.sin()).abs());
        }
        assert!(err < h * h);
        let (b, _) = second_form(&f).unwrap();
        assert!(b.sub(&fx.second_form(n)).unwrap().max_abs() < 2.0 * h * h);
    }

    #[test]
    fn sphere_normal_is_position_and_b_is_minus_g() {
        let fx = Fixture::SphereCap;
        let n = 65;
        let f = fx.immersion(n);
        let h = f.chart().h();
        let nu = normal_field(&f).unwrap();
        assert!(nu.reshape(&[3]).unwrap().sub(&f).unwrap().max_abs() < h * h);
        let (b, _) = second_form(&f).unwrap();
        let g = fx.metric(n);
        let b_minus = SecondFormField::new(g.field().scale(-1.0).reshape(&[1, 2, 2]).unwrap()).unwrap();
        assert!(b.sub(&b_minus).unwrap().max_abs() < 2.0 * h * h);
    }

    #[test]
    fn degenerate_immersion_reported() {
        let chart = Chart::cube(2, 0.0, 1.0, 5, 1).unwrap();
        let f = ImmersionField::from_fn(&chart, |x| vec![x[0], x[0], 0.0]).unwrap();
        match induced_metric(&f) {
            Err(Error::DegenerateImmersion { points }) => assert_eq!(points.len(), 25),
            other => panic!("expected degenerate immersion, got {other:?}"),
        }
    }

    #[test]
    fn codim2_normal_frame_orthonormal_and_oriented() {
        let f = fixtures::codim2_graph(17);
        let nu = normal_field(&f).unwrap();
        let j = jacobian(&f);
        for p in 0..f.n_points() {
            let jm = j.matrix(p);
            let vs: Vec<DVector<f64>> = (0..2).map(|a| DVector::from_column_slice(&nu.at(p)[a * 4..a * 4 + 4])).collect();
            for a in 0..2 {
                assert_abs_diff_eq!(vs[a].norm(), 1.0, epsilon = 1e-12);
                for i in 0..2 {
                    assert!(jm.row(i).transpose().dot(&vs[a]).abs() < 1e-12);
                }
            }
            assert!(vs[0].dot(&vs[1]).abs() < 1e-12);
            assert!(orientation(&jm, &vs) > 0.0);
        }
    }

    #[test]
    fn harvested_codim2_satisfies_gcr() {
        let res = |n: usize| {
            let f = fixtures::codim2_graph(n);
            let g = induced_metric(&f).unwrap();
            let (b, ne) = second_form(&f).unwrap();
            ResidualReport::compute(&g, &b, &ne, NormKind::Lp { p: f64::INFINITY }).unwrap()
        };
        let (a, b) = (res(33), res(65));
        println!("codim-2 residuals n=33 {a:?}\n n=65 {b:?}");
        for (x, y) in [(a.gauss, b.gauss), (a.codazzi, b.codazzi), (a.ricci, b.ricci)] {
            assert!((x / y).log2() > 1.8, "{x} -> {y}");
        }
        assert!(b.ricci < 1e-2);
    }

    #[test]
    fn kabsch_recovers_motion() {
        let f_ref = Fixture::Saddle.immersion(9);
        let q0 = rot3(0.3, -1.1, 0.7);
        let t0 = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let moved = RigidMotion::new(q0.clone(), t0).unwrap().apply(&f_ref);
        let m = best_rigid_motion(&moved, &f_ref).unwrap();
        assert!(alignment_residual(&m, &moved, &f_ref) < 1e-20);
        assert!((&m.rotation - q0.transpose()).norm() < 1e-12);
        let id = best_rigid_motion(&f_ref, &f_ref).unwrap();
        assert!((id.rotation - DMatrix::<f64>::identity(3, 3)).norm() < 1e-12);
        assert!(id.translation.norm() < 1e-12);
        assert!(quotient_distance(&moved, &f_ref, 2, 4.0).unwrap() < 1e-9);
    }

    #[test]
    fn quotient_distance_sandwich() {
        let fx = Fixture::SphereCap;
        let f_ref = fx.immersion(17);
        let chart = f_ref.chart().clone();
        let (a0, b0) = (chart.extent()[0], chart.extent()[1]);
        let bump = ImmersionField::from_fn(&chart, |x| {
            let s = ((x[0] - a0.0) / (a0.1 - a0.0) * std::f64::consts::PI).sin()
                * ((x[1] - b0.0) / (b0.1 - b0.0) * std::f64::consts::PI).sin();
            vec![0.0, 0.0, s * s]
        })
        .unwrap();
        let eps = 1e-2;
        let pert = ImmersionField(f_ref.add(&bump.scale(eps)).unwrap());
        let q = quotient_distance(&pert, &f_ref, 2, 4.0).unwrap();
        assert!(q > 0.0);
        assert!(q <= bump.scale(eps).sobolev_norm(2, 4.0).unwrap() + 1e-15);
        let shifted = ImmersionField(f_ref.map_points(&[3], |_, v, o| {
            o.copy_from_slice(&[v[0] + 1.0, v[1] - 3.0, v[2] + 0.25]);
        }));
        assert!(quotient_distance(&shifted, &f_ref, 2, 4.0).unwrap() < 1e-9);
    }

    #[test]
    fn noise_residual_bounded_by_identity() {
        let f_ref = Fixture::Cylinder.immersion(9);
        let noisy = ImmersionField(f_ref.map_points(&[3], |p, v, o| {
            for c in 0..3 {
                o[c] = v[c] + 1e-3 * (((p * 7 + c * 13) % 11) as f64 - 5.0) / 5.0;
            }
        }));
        let m = best_rigid_motion(&noisy, &f_ref).unwrap();
        let ident = RigidMotion::identity(3);
        assert!(alignment_residual(&m, &noisy, &f_ref) <= alignment_residual(&ident, &noisy, &f_ref) + 1e-18);
    }

    #[test]
    fn rigid_motion_json_round_trip() {
        let m = RigidMotion::new(rot3(0.1, 0.2, 0.3), DVector::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: RigidMotion = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
        assert!(RigidMotion::new(-DMatrix::<f64>::identity(3, 3), DVector::zeros(3)).is_err());
    }

    proptest! {
        #[test]
        fn induced_metric_rigidly_invariant(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0,
                                            tx in -5.0f64..5.0, ty in -5.0f64..5.0) {
            let f = Fixture::Saddle.immersion(9);
            let m = RigidMotion::new(rot3(a, b, c), DVector::from_vec(vec![tx, ty, 0.5])).unwrap();
            let g0 = induced_metric(&f).unwrap();
            let g1 = induced_metric(&m.apply(&f)).unwrap();
            prop_assert!(g0.sub(&g1).unwrap().max_abs() < 1e-12);
            let (b0, _) = second_form(&f).unwrap();
            let (b1, _) = second_form(&m.apply(&f)).unwrap();
            prop_assert!(b0.sub(&b1).unwrap().max_abs() < 1e-10);
        }

        #[test]
        fn alignment_residual_invariant_under_common_motion(a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0) {
            let f_ref = Fixture::SphereCap.immersion(7);
            let f = ImmersionField::from_fn(f_ref.chart(), |x| Fixture::Saddle.position(x)).unwrap();
            let r0 = { let m = best_rigid_motion(&f, &f_ref).unwrap(); alignment_residual(&m, &f, &f_ref) };
            let common = RigidMotion::new(rot3(a, b, c), DVector::from_vec(vec![0.3, -0.2, 1.0])).unwrap();
            let (g, g_ref) = (common.apply(&f), common.apply(&f_ref));
            let r1 = { let m = best_rigid_motion(&g, &g_ref).unwrap(); alignment_residual(&m, &g, &g_ref) };
            prop_assert!((r0 - r1).abs() < 1e-10 * (1.0 + r0), "{} {}", r0, r1);
        }
    }
}
