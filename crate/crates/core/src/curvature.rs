//! Christoffel symbols, the Riemann tensor and discrete residuals of the
//! Gauss, Codazzi and Ricci equations.
//!
//! Conventions. Γ is stored as `Γ[k][i][j] = Γᵏ_ij`. The curvature operator is
//! R(∂ᵢ,∂ⱼ)∂ₖ = Rˡ_ijk ∂ₗ with
//! Rˡ_ijk = ∂ᵢΓˡ_jk − ∂ⱼΓˡ_ik + Γˡ_im Γᵐ_jk − Γˡ_jm Γᵐ_ik,
//! and the lowered tensor is R_ijkl = g(R(∂ᵢ,∂ⱼ)∂ₗ, ∂ₖ) = g_km Rᵐ_ijl, so that the
//! round sphere has R₁₂₁₂ = det g and the Gauss equation reads
//! R_ijkl = Σ_α (B^α_jl B^α_ik − B^α_il B^α_jk).
//!
//! The normal connection is N_i[α][β] = ⟨∇ᴱ_i η_α, η_β⟩ and the Ricci equation
//! is checked in the form
//! (B^α g⁻¹ B^β − B^β g⁻¹ B^α)_ji = ∂ᵢN_j − ∂ⱼN_i + N_j N_i − N_i N_j  at [α][β].

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{shape_mismatch, Result};
use crate::fields::{
    negative_norm_estimate, typed_field, Chart, Field, MetricField, NormalConnectionField, SecondFormField,
};

typed_field!(
    /// Γᵏ_ij per point, shape `[d, d, d]` indexed `[k][i][j]`.
    ChristoffelField
);

typed_field!(
    /// Fully lowered R_ijkl per point, shape `[d, d, d, d]`.
    RiemannField
);

fn same_grid(a: &Chart, b: &Chart) -> Result<()> {
    if a.resolution() != b.resolution() || a.extent() != b.extent() {
        return Err(shape_mismatch(a.resolution(), b.resolution()));
    }
    Ok(())
}

/// Γᵏ_ij = ½ gᵏˡ(∂ᵢg_jl + ∂ⱼg_il − ∂ₗg_ij).
pub fn christoffel(g: &MetricField) -> ChristoffelField {
    let d = g.dim();
    let dg = g.grad();
    let out = g.map_points(&[d, d, d], |p, _, out| {
        let gi = g.inverse(p);
        let dgp = dg.at(p);
        let dgv = |l: usize, i: usize, j: usize| dgp[(l * d + i) * d + j];
        for k in 0..d {
            for i in 0..d {
                for j in i..d {
                    let mut s = 0.0;
                    for l in 0..d {
                        s += gi[(k, l)] * (dgv(i, j, l) + dgv(j, i, l) - dgv(l, i, j));
                    }
                    out[(k * d + i) * d + j] = 0.5 * s;
                    out[(k * d + j) * d + i] = 0.5 * s;
                }
            }
        }
    });
    ChristoffelField(out)
}

impl ChristoffelField {
    pub fn dim(&self) -> usize {
        self.shape()[0]
    }

    /// Γᵏ_ij at point `p`.
    #[inline]
    pub fn get(&self, p: usize, k: usize, i: usize, j: usize) -> f64 {
        let d = self.dim();
        self.at(p)[(k * d + i) * d + j]
    }
}

/// Lowered Riemann tensor of g.
pub fn riemann(g: &MetricField) -> RiemannField {
    riemann_from(g, &christoffel(g))
}

pub(crate) fn riemann_from(g: &MetricField, gamma: &ChristoffelField) -> RiemannField {
    let d = g.dim();
    let dgamma = gamma.grad();
    let out = g.map_points(&[d, d, d, d], |p, gv, out| {
        let gm = gamma.at(p);
        let dg = dgamma.at(p);
        let gam = |k: usize, i: usize, j: usize| gm[(k * d + i) * d + j];
        let dgam = |m: usize, k: usize, i: usize, j: usize| dg[((m * d + k) * d + i) * d + j];
        // Rˡ_ijk
        let mut up = vec![0.0; d * d * d * d];
        for l in 0..d {
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        let mut s = dgam(i, l, j, k) - dgam(j, l, i, k);
                        for m in 0..d {
                            s += gam(l, i, m) * gam(m, j, k) - gam(l, j, m) * gam(m, i, k);
                        }
                        up[((l * d + i) * d + j) * d + k] = s;
                    }
                }
            }
        }
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let mut s = 0.0;
                        for m in 0..d {
                            s += gv[k * d + m] * up[((m * d + i) * d + j) * d + l];
                        }
                        out[((i * d + j) * d + k) * d + l] = s;
                    }
                }
            }
        }
    });
    RiemannField(out)
}

impl RiemannField {
    pub fn dim(&self) -> usize {
        self.shape()[0]
    }

    #[inline]
    pub fn get(&self, p: usize, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let d = self.dim();
        self.at(p)[((i * d + j) * d + k) * d + l]
    }

    /// Largest violation of the algebraic symmetries: antisymmetry in each
    /// pair, pair symmetry and the first Bianchi identity.
    pub fn symmetry_defect(&self) -> f64 {
        let d = self.dim();
        let mut worst: f64 = 0.0;
        for p in 0..self.n_points() {
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        for l in 0..d {
                            let r = self.get(p, i, j, k, l);
                            worst = worst
                                .max((r + self.get(p, j, i, k, l)).abs())
                                .max((r + self.get(p, i, j, l, k)).abs())
                                .max((r - self.get(p, k, l, i, j)).abs())
                                .max((r + self.get(p, j, k, i, l) + self.get(p, k, i, j, l)).abs());
                        }
                    }
                }
            }
        }
        worst
    }
}

/// Σ_α (B^α_jl B^α_ik − B^α_il B^α_jk) − R_ijkl, shape `[d, d, d, d]`.
pub fn gauss_residual_field(g: &MetricField, b: &SecondFormField) -> Result<Field> {
    same_grid(g.chart(), b.chart())?;
    let d = g.dim();
    let k = b.codim();
    let r = riemann(g);
    Ok(g.map_points(&[d, d, d, d], |p, _, out| {
        let bv = b.at(p);
        let bb = |a: usize, i: usize, j: usize| bv[(a * d + i) * d + j];
        for i in 0..d {
            for j in 0..d {
                for kk in 0..d {
                    for l in 0..d {
                        let mut s = 0.0;
                        for a in 0..k {
                            s += bb(a, j, l) * bb(a, i, kk) - bb(a, i, l) * bb(a, j, kk);
                        }
                        out[((i * d + j) * d + kk) * d + l] = s - r.get(p, i, j, kk, l);
                    }
                }
            }
        }
    }))
}

/// Antisymmetrized covariant derivative ∇ᵢB^β_jk − ∇ⱼB^β_ik, shape `[k, d, d, d]`
/// indexed `[β][i][j][k]`.
pub fn codazzi_residual_field(
    g: &MetricField,
    b: &SecondFormField,
    ne: &NormalConnectionField,
) -> Result<Field> {
    same_grid(g.chart(), b.chart())?;
    same_grid(g.chart(), ne.chart())?;
    let d = g.dim();
    let kc = b.codim();
    let gamma = christoffel(g);
    let db = b.grad();
    Ok(g.map_points(&[kc, d, d, d], |p, _, out| {
        let bv = b.at(p);
        let dbv = db.at(p);
        let nv = ne.at(p);
        let bb = |a: usize, i: usize, j: usize| bv[(a * d + i) * d + j];
        let dbb = |m: usize, a: usize, i: usize, j: usize| dbv[((m * kc + a) * d + i) * d + j];
        let nn = |i: usize, a: usize, c: usize| nv[(i * kc + a) * kc + c];
        let gm = |m: usize, i: usize, j: usize| gamma.get(p, m, i, j);
        for be in 0..kc {
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        let mut s = dbb(i, be, j, k) - dbb(j, be, i, k);
                        for m in 0..d {
                            s += gm(m, j, k) * bb(be, i, m) - gm(m, i, k) * bb(be, j, m);
                        }
                        for a in 0..kc {
                            s += nn(i, a, be) * bb(a, j, k) - nn(j, a, be) * bb(a, i, k);
                        }
                        out[((be * d + i) * d + j) * d + k] = s;
                    }
                }
            }
        }
    }))
}

/// Ricci mismatch, shape `[d, d, k, k]` indexed `[i][j][α][β]`.
pub fn ricci_residual_field(
    g: &MetricField,
    b: &SecondFormField,
    ne: &NormalConnectionField,
) -> Result<Field> {
    same_grid(g.chart(), b.chart())?;
    same_grid(g.chart(), ne.chart())?;
    let d = g.dim();
    let kc = b.codim();
    let dn = ne.grad();
    Ok(g.map_points(&[d, d, kc, kc], |p, _, out| {
        let gi = g.inverse(p);
        let slices: Vec<_> = (0..kc).map(|a| b.slice(p, a)).collect();
        let nv = ne.at(p);
        let dnv = dn.at(p);
        let nn = |i: usize, a: usize, c: usize| nv[(i * kc + a) * kc + c];
        let dnn = |m: usize, i: usize, a: usize, c: usize| dnv[((m * d + i) * kc + a) * kc + c];
        for a in 0..kc {
            for be in 0..kc {
                let comm = &slices[a] * &gi * &slices[be] - &slices[be] * &gi * &slices[a];
                for i in 0..d {
                    for j in 0..d {
                        let mut curv = dnn(i, j, a, be) - dnn(j, i, a, be);
                        for c in 0..kc {
                            curv += nn(j, a, c) * nn(i, c, be) - nn(i, a, c) * nn(j, c, be);
                        }
                        out[((i * d + j) * kc + a) * kc + be] = comm[(j, i)] - curv;
                    }
                }
            }
        }
    }))
}

/// How residual fields are reduced to a single number.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NormKind {
    /// Discrete Lᵖ over points and index tuples (p may be ∞).
    Lp { p: f64 },
    /// Dictionary surrogate of W^{-1,r}.
    NegDict { r: f64, size: usize },
}

impl NormKind {
    pub fn measure(&self, field: &Field) -> Result<f64> {
        match *self {
            NormKind::Lp { p } => field.lp_norm_entrywise(p),
            NormKind::NegDict { r, size } => negative_norm_estimate(field, r, size),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            NormKind::Lp { .. } => "L^p",
            NormKind::NegDict { .. } => "neg-dict",
        }
    }

    pub fn exponent(&self) -> f64 {
        match *self {
            NormKind::Lp { p } => p,
            NormKind::NegDict { r, .. } => r,
        }
    }
}

pub fn gauss_residual(g: &MetricField, b: &SecondFormField, p: f64) -> Result<f64> {
    gauss_residual_field(g, b)?.lp_norm_entrywise(p)
}

pub fn codazzi_residual(g: &MetricField, b: &SecondFormField, ne: &NormalConnectionField, p: f64) -> Result<f64> {
    codazzi_residual_field(g, b, ne)?.lp_norm_entrywise(p)
}

/// Ricci residual and whether it was vacuous (codimension one).
pub fn ricci_residual(
    g: &MetricField,
    b: &SecondFormField,
    ne: &NormalConnectionField,
    p: f64,
) -> Result<(f64, bool)> {
    if b.codim() == 1 {
        return Ok((0.0, true));
    }
    Ok((ricci_residual_field(g, b, ne)?.lp_norm_entrywise(p)?, false))
}

mod exponent {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(p: &f64, s: S) -> Result<S::Ok, S::Error> {
        if p.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*p)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("bad exponent {t:?}"))),
        }
    }
}

pub const RICCI_VACUOUS: &str = "codimension-one: Ricci vacuous";

/// Per-equation residual norms of a triple (g, B, ∇ᴱ).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub gauss: f64,
    pub codazzi: f64,
    pub ricci: f64,
    pub norm_kind: String,
    /// Exponent of the norm; written as `"inf"` for p = ∞.
    #[serde(with = "exponent")]
    pub p: f64,
    pub flags: Vec<String>,
}

impl ResidualReport {
    pub fn compute(
        g: &MetricField,
        b: &SecondFormField,
        ne: &NormalConnectionField,
        norm: NormKind,
    ) -> Result<Self> {
        let gauss = norm.measure(&gauss_residual_field(g, b)?)?;
        let codazzi = norm.measure(&codazzi_residual_field(g, b, ne)?)?;
        let mut flags = Vec::new();
        let ricci = if b.codim() == 1 {
            flags.push(RICCI_VACUOUS.to_string());
            0.0
        } else {
            norm.measure(&ricci_residual_field(g, b, ne)?)?
        };
        Ok(Self {
            gauss,
            codazzi,
            ricci,
            norm_kind: norm.label().into(),
            p: norm.exponent(),
            flags,
        })
    }

    pub fn max(&self) -> f64 {
        self.gauss.max(self.codazzi).max(self.ricci)
    }
}

/// Resolution at which the compatibility constant is calibrated.
pub const CALIBRATION_RESOLUTION: usize = 33;
/// Safety factor applied to the calibration residual.
pub const CALIBRATION_FACTOR: f64 = 10.0;

/// κ in the compatibility threshold κ·h²·(1 + ‖B‖²_∞).
///
/// Calibrated once from the L^∞ Gauss/Codazzi residual of the unit-sphere cap
/// harvested at the calibration resolution, times [`CALIBRATION_FACTOR`].
pub fn calibrated_kappa() -> f64 {
    static KAPPA: OnceLock<f64> = OnceLock::new();
    *KAPPA.get_or_init(|| {
        let fx = crate::fixtures::Fixture::SphereCap;
        let f = fx.immersion(CALIBRATION_RESOLUTION);
        let g = crate::immersion::induced_metric(&f).expect("sphere cap is an immersion");
        let (b, ne) = crate::immersion::second_form(&f).expect("sphere cap is an immersion");
        let rep = ResidualReport::compute(&g, &b, &ne, NormKind::Lp { p: f64::INFINITY })
            .expect("sphere residuals");
        let h = f.chart().h();
        let bmax = b.max_abs();
        CALIBRATION_FACTOR * rep.max() / (h * h * (1.0 + bmax * bmax))
    })
}

/// Residual level below which a triple on `chart` counts as compatible.
pub fn compatibility_threshold(chart: &Chart, b: &SecondFormField) -> f64 {
    let h = chart.h();
    let bmax = b.max_abs();
    calibrated_kappa() * h * h * (1.0 + bmax * bmax)
}

/// L^∞ residual report plus the compatibility verdict.
pub fn check_compatibility(
    g: &MetricField,
    b: &SecondFormField,
    ne: &NormalConnectionField,
) -> Result<(ResidualReport, f64, bool)> {
    let rep = ResidualReport::compute(g, b, ne, NormKind::Lp { p: f64::INFINITY })?;
    let thr = compatibility_threshold(g.chart(), b);
    let ok = rep.max() <= thr;
    Ok((rep, thr, ok))
}
