//! Oscillating membrane sequences Φᵉ∘Fᵉ: pullback forms, the eight-term
//! splitting of R̂ᵉ − R, and weak-limit diagnostics for the second forms.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::curvature::{christoffel, compatibility_threshold, gauss_residual, riemann, ChristoffelField};
use crate::error::{shape_mismatch, Error, Result};
use crate::fields::{
    Chart, Field, ImmersionField, MetricField, SecondFormField, SineDictionary,
};
use crate::fixtures::Fixture;
use crate::immersion;
use crate::rigidity::loglog_slope;

/// Analytically tractable membrane families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Generator {
    /// Φᵉ(x, y) = (x, y, ε² sin(x/ε)) over the flat unit square, Fᵉ = id.
    Wrinkle,
    /// The wrinkle graph precomposed with Fᵉ(x, y) = (x + aε² sin(y/ε), y).
    ShearedWrinkle { shear: f64 },
    /// Φᵉ(x, y) = (x, y, 0).
    Flat,
    /// A fixture immersion, independent of ε.
    Static { fixture: String },
}

impl Generator {
    pub fn default_resolution(&self) -> Vec<usize> {
        match self {
            Generator::Wrinkle => vec![513, 17],
            Generator::ShearedWrinkle { .. } => vec![257, 257],
            Generator::Flat | Generator::Static { .. } => vec![33, 33],
        }
    }

    pub fn chart(&self, resolution: Option<Vec<usize>>) -> Result<Chart> {
        let res = resolution.unwrap_or_else(|| self.default_resolution());
        let extent = match self {
            Generator::Static { fixture } => Fixture::from_name(fixture)?.extent(),
            _ => vec![(0.0, 1.0), (0.0, 1.0)],
        };
        Chart::new(extent, res, 1)
    }

    /// Φᵉ∘Fᵉ at a chart point.
    pub fn position(&self, eps: f64, x: &[f64]) -> Result<Vec<f64>> {
        let wrinkle = |u: f64, v: f64| vec![u, v, eps * eps * (u / eps).sin()];
        Ok(match self {
            Generator::Wrinkle => wrinkle(x[0], x[1]),
            Generator::ShearedWrinkle { shear } => {
                wrinkle(x[0] + shear * eps * eps * (x[1] / eps).sin(), x[1])
            }
            Generator::Flat => vec![x[0], x[1], 0.0],
            Generator::Static { fixture } => Fixture::from_name(fixture)?.position(x),
        })
    }

    /// Jacobian of Fᵉ at a chart point.
    pub fn diffeo_jacobian(&self, eps: f64, x: &[f64]) -> DMatrix<f64> {
        match self {
            Generator::ShearedWrinkle { shear } => {
                DMatrix::from_row_slice(2, 2, &[1.0, shear * eps * (x[1] / eps).cos(), 0.0, 1.0])
            }
            _ => DMatrix::identity(2, 2),
        }
    }

    pub fn base_metric(&self, chart: &Chart) -> Result<MetricField> {
        match self {
            Generator::Static { fixture } => {
                let f = Fixture::from_name(fixture)?;
                MetricField::from_fn(chart, |x| f.metric_at(x))
            }
            _ => Ok(MetricField::identity(chart)),
        }
    }

    /// Closed-form ‖ĝᵉ − g‖_{L^q} + ‖∇(ĝᵉ − g)‖_{L^q} where available.
    ///
    /// For the wrinkle ĝᵉ − g = ε² cos²(x/ε) dx², whose derivative
    /// −ε sin(2x/ε) dominates: the norm is first order in ε.
    pub fn analytic_metric_error(&self, eps: f64, q: f64) -> Option<f64> {
        match self {
            Generator::Wrinkle => {
                let n = 400_000;
                let (mut a, mut b) = (0.0, 0.0);
                for i in 0..n {
                    let x = (i as f64 + 0.5) / n as f64;
                    a += (eps * eps * (x / eps).cos().powi(2)).abs().powf(q);
                    b += (eps * (2.0 * x / eps).sin()).abs().powf(q);
                }
                Some((a / n as f64).powf(1.0 / q) + (b / n as f64).powf(1.0 / q))
            }
            Generator::Flat | Generator::Static { .. } => Some(0.0),
            Generator::ShearedWrinkle { .. } => None,
        }
    }
}

/// Composed immersions Φᵉ∘Fᵉ over a fixed chart with base metric g.
#[derive(Clone, Debug)]
pub struct MembraneSequence {
    eps: Vec<f64>,
    immersions: Vec<ImmersionField>,
    base_metric: MetricField,
    lipschitz: f64,
}

impl MembraneSequence {
    pub fn generate(generator: &Generator, eps: &[f64], resolution: Option<Vec<usize>>) -> Result<Self> {
        let chart = generator.chart(resolution)?;
        let mut immersions = Vec::with_capacity(eps.len());
        let mut lipschitz: f64 = 1.0;
        for &e in eps {
            if !(e > 0.0) {
                return Err(Error::InvalidArgument(format!("ε = {e} must be positive")));
            }
            let mut data = Field::zeros(&chart, &[3]);
            for p in 0..chart.n_points() {
                let x = chart.coords(p);
                data.at_mut(p).copy_from_slice(&generator.position(e, &x)?);
                let s = crate::linalg::svd(&generator.diffeo_jacobian(e, &x)).1;
                lipschitz = lipschitz.max(s[0]).max(1.0 / s[s.len() - 1]);
            }
            immersions.push(ImmersionField::new(data)?);
        }
        Self::from_immersions(eps.to_vec(), immersions, generator.base_metric(&chart)?, lipschitz)
    }

    /// Wraps precomputed composed immersions; `lipschitz` is the recorded
    /// uniform bi-Lipschitz constant of the Fᵉ.
    pub fn from_immersions(
        eps: Vec<f64>,
        immersions: Vec<ImmersionField>,
        base_metric: MetricField,
        lipschitz: f64,
    ) -> Result<Self> {
        if eps.is_empty() || eps.len() != immersions.len() {
            return Err(Error::InvalidArgument("need one immersion per ε".into()));
        }
        if eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidArgument("ε values must be strictly decreasing".into()));
        }
        for f in &immersions {
            if f.chart() != base_metric.chart() {
                return Err(shape_mismatch(base_metric.chart().resolution(), f.chart().resolution()));
            }
            immersion::induced_metric(f)?;
        }
        Ok(Self {
            eps,
            immersions,
            base_metric,
            lipschitz,
        })
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    pub fn chart(&self) -> &Chart {
        self.base_metric.chart()
    }

    pub fn base_metric(&self) -> &MetricField {
        &self.base_metric
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn immersion(&self, i: usize) -> &ImmersionField {
        &self.immersions[i]
    }

    /// ĝᵉ, the metric induced by Φᵉ∘Fᵉ.
    pub fn pullback_metric(&self, i: usize) -> Result<MetricField> {
        immersion::induced_metric(&self.immersions[i])
    }

    /// B̂ᵉ, the second form of Φᵉ∘Fᵉ.
    pub fn pullback_second_form(&self, i: usize) -> Result<SecondFormField> {
        Ok(immersion::second_form(&self.immersions[i])?.0)
    }
}

/// Four coordinate vector fields (X, Y, Z, W), each of shape `[d]`.
#[derive(Clone, Debug)]
pub struct TestFields {
    pub x: Field,
    pub y: Field,
    pub z: Field,
    pub w: Field,
}

impl TestFields {
    /// X = (1+y, x), Y = (y², 1), Z = (xy, x²), W = (1, 1).
    pub fn standard(chart: &Chart) -> Self {
        let v = |f: fn(f64, f64) -> [f64; 2]| Field::from_fn(chart, &[2], |x, out| out.copy_from_slice(&f(x[0], x[1])));
        Self {
            x: v(|x, y| [1.0 + y, x]),
            y: v(|_, y| [y * y, 1.0]),
            z: v(|x, y| [x * y, x * x]),
            w: v(|_, _| [1.0, 1.0]),
        }
    }

    fn swapped(&self) -> Self {
        Self {
            x: self.y.clone(),
            y: self.x.clone(),
            z: self.z.clone(),
            w: self.w.clone(),
        }
    }
}

/// Γ(U, V)^k = Γᵏ_ij Uⁱ Vʲ.
fn gamma_apply(gamma: &ChristoffelField, u: &Field, v: &Field) -> Field {
    let d = gamma.dim();
    u.map_points(&[d], |p, uv, out| {
        let vv = v.at(p);
        for (k, o) in out.iter_mut().enumerate() {
            *o = (0..d)
                .flat_map(|i| (0..d).map(move |j| (i, j)))
                .map(|(i, j)| gamma.get(p, k, i, j) * uv[i] * vv[j])
                .sum();
        }
    })
}

/// (Γ̂ − Γ)(U, V).
fn gamma_diff_apply(hat: &ChristoffelField, base: &ChristoffelField, u: &Field, v: &Field) -> Field {
    gamma_apply(hat, u, v).sub(&gamma_apply(base, u, v)).expect("same shape")
}

/// Directional derivative U(V)^k = Uⁱ ∂ᵢVᵏ.
fn directional(u: &Field, v: &Field) -> Field {
    let d = u.shape()[0];
    let dv = v.grad();
    u.map_points(&[d], |p, uv, out| {
        let g = dv.at(p);
        for (k, o) in out.iter_mut().enumerate() {
            *o = (0..d).map(|i| uv[i] * g[i * d + k]).sum();
        }
    })
}

/// ∇_U V.
fn covariant(gamma: &ChristoffelField, u: &Field, v: &Field) -> Field {
    directional(u, v).add(&gamma_apply(gamma, u, v)).expect("same shape")
}

/// [U, V].
fn bracket(u: &Field, v: &Field) -> Field {
    directional(u, v).sub(&directional(v, u)).expect("same shape")
}

/// h(U, V) for a symmetric 2-tensor field h of shape `[d, d]`.
fn pair_tensor(h: &Field, u: &Field, v: &Field) -> Field {
    let d = u.shape()[0];
    h.map_points(&[], |p, hv, out| {
        let (uv, vv) = (u.at(p), v.at(p));
        out[0] = (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .map(|(i, j)| hv[i * d + j] * uv[i] * vv[j])
            .sum();
    })
}

/// The eight terms, the quadratic remainder and R̂ − R, all as scalar fields.
#[derive(Clone, Debug)]
pub struct DecompositionFields {
    pub terms: [Field; 8],
    /// g((Γ̂−Γ)(X, (Γ̂−Γ)(Y,Z)), W) minus the same with X and Y swapped.
    pub remainder: Field,
    /// R̂(X,Y,Z,W) − R(X,Y,Z,W) from the curvature tensors.
    pub curvature_difference: Field,
}

/// First-order half of the splitting for the pair (X, Y):
/// (ĝ−g)(∇̂_X∇̂_Y Z, W), g((∇̂_X−∇_X)∇_Y Z, W), g(∇_X(∇̂_Y−∇_Y)Z, W), and the
/// quadratic piece g((∇̂_X−∇_X)(∇̂_Y−∇_Y)Z, W).
fn half_terms(
    g: &MetricField,
    dg: &Field,
    hat: &ChristoffelField,
    base: &ChristoffelField,
    t: &TestFields,
) -> [Field; 4] {
    let yz_hat = covariant(hat, &t.y, &t.z);
    let yz = covariant(base, &t.y, &t.z);
    let a1 = covariant(hat, &t.x, &yz_hat);
    let j1 = pair_tensor(dg, &a1, &t.w);
    let j2 = pair_tensor(g.field(), &gamma_diff_apply(hat, base, &t.x, &yz), &t.w);
    let dyz = gamma_diff_apply(hat, base, &t.y, &t.z);
    let j3 = pair_tensor(g.field(), &covariant(base, &t.x, &dyz), &t.w);
    let q = pair_tensor(g.field(), &gamma_diff_apply(hat, base, &t.x, &dyz), &t.w);
    [j1, j2, j3, q]
}

/// Splits R̂(X,Y,Z,W) − R(X,Y,Z,W) for metrics ĝ and g on one chart:
///
///   J₁ = (ĝ−g)(∇̂_X∇̂_Y Z, W)        J₄ = −J₁ with X ↔ Y
///   J₂ = g((∇̂_X−∇_X)∇_Y Z, W)       J₅ = −J₂ with X ↔ Y
///   J₃ = g(∇_X(∇̂_Y−∇_Y)Z, W)        J₆ = −J₃ with X ↔ Y
///   J₇ = −(ĝ−g)(∇̂_{[X,Y]}Z, W)      J₈ = −g((∇̂_{[X,Y]}−∇_{[X,Y]})Z, W)
///
/// so that R̂ − R = ΣJ_ℓ + remainder, with the remainder quadratic in Γ̂ − Γ.
pub fn decomposition_fields(g_hat: &MetricField, g: &MetricField, t: &TestFields) -> Result<DecompositionFields> {
    let chart = g.chart();
    if g_hat.chart().resolution() != chart.resolution() || g_hat.chart().extent() != chart.extent() {
        return Err(shape_mismatch(chart.resolution(), g_hat.chart().resolution()));
    }
    let d = chart.dim();
    for v in [&t.x, &t.y, &t.z, &t.w] {
        if v.shape() != [d] || v.chart().resolution() != chart.resolution() {
            return Err(shape_mismatch([d], v.shape()));
        }
    }
    let dg = g_hat.sub(g)?;
    let hat = christoffel(g_hat);
    let base = christoffel(g);
    let [j1, j2, j3, q_xy] = half_terms(g, &dg, &hat, &base, t);
    let [j4, j5, j6, q_yx] = half_terms(g, &dg, &hat, &base, &t.swapped());
    let xy = bracket(&t.x, &t.y);
    let j7 = pair_tensor(&dg, &covariant(&hat, &xy, &t.z), &t.w).scale(-1.0);
    let j8 = pair_tensor(g.field(), &gamma_diff_apply(&hat, &base, &xy, &t.z), &t.w).scale(-1.0);
    let (r_hat, r) = (riemann(g_hat), riemann(g));
    let curvature_difference = g.map_points(&[], |p, _, out| {
        let (xv, yv, zv, wv) = (t.x.at(p), t.y.at(p), t.z.at(p), t.w.at(p));
        let mut s = 0.0;
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        s += (r_hat.get(p, i, j, k, l) - r.get(p, i, j, k, l)) * xv[i] * yv[j] * wv[k] * zv[l];
                    }
                }
            }
        }
        out[0] = s;
    });
    Ok(DecompositionFields {
        terms: [j1, j2, j3, j4.scale(-1.0), j5.scale(-1.0), j6.scale(-1.0), j7, j8],
        remainder: q_xy.sub(&q_yx)?,
        curvature_difference,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorDecomposition {
    pub eps: f64,
    /// Negative-norm estimates of J₁ … J₈.
    pub terms: [f64; 8],
    /// Σ‖J_ℓ‖.
    pub total: f64,
    /// ‖ΣJ_ℓ‖, the residual of the approximate Gauss equation.
    pub combined: f64,
    pub remainder: f64,
}

/// Default exponent r of the W^{-1,r} surrogate.
pub const DEFAULT_NEGATIVE_EXPONENT: f64 = 1.5;

/// The eight J-norms for member `i` of the sequence against its base metric.
pub fn error_decomposition(
    seq: &MembraneSequence,
    i: usize,
    t: &TestFields,
    r: f64,
    dictionary_size: usize,
) -> Result<ErrorDecomposition> {
    let g_hat = seq.pullback_metric(i)?;
    let fields = decomposition_fields(&g_hat, seq.base_metric(), t)?;
    let dict = SineDictionary::new(seq.chart(), dictionary_size)?;
    let mut terms = [0.0; 8];
    for (out, f) in terms.iter_mut().zip(&fields.terms) {
        *out = dict.negative_norm(f, r)?;
    }
    let sum = fields.terms.iter().skip(1).try_fold(fields.terms[0].clone(), |acc, f| acc.add(f))?;
    Ok(ErrorDecomposition {
        eps: seq.eps()[i],
        terms,
        total: terms.iter().sum(),
        combined: dict.negative_norm(&sum, r)?,
        remainder: dict.negative_norm(&fields.remainder, r)?,
    })
}

/// Dictionary-pairing diagnostics for the weak limit of B̂ᵉ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakLimitReport {
    pub eps: Vec<f64>,
    /// max over dictionary and components of |⟨B̂ᵉ⁽ⁱ⁺¹⁾ − B̂ᵉ⁽ⁱ⁾, ζ⟩|.
    pub pairing_deltas: Vec<f64>,
    /// Successive delta ratios δᵢ/δᵢ₊₁.
    pub contraction: Vec<f64>,
    /// Every ratio ≥ [`MIN_CONTRACTION`], or the sequence is constant.
    pub cauchy: bool,
    pub constant_sequence: bool,
    /// Geometric (Richardson) extrapolation of the pairings, `[j][component]`.
    pub limit_pairings: Vec<Vec<f64>>,
    /// max |limit pairing − pairing of the second form of the extrapolated immersion|.
    pub limit_consistency: f64,
    /// Largest initial pairing magnitude, the scale for `limit_consistency`.
    pub pairing_scale: f64,
    /// ‖B̂ᵉ − B_lim‖_{L^p} per ε.
    pub strong_distances: Vec<f64>,
    /// min strong distance ≥ 0.1 × the first one.
    pub weak_not_strong: bool,
    pub gauss_residual: f64,
    pub gauss_threshold: f64,
    pub gauss_ok: bool,
}

/// Required shrink factor of pairing deltas per step.
pub const MIN_CONTRACTION: f64 = 1.5;

fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Projects dictionary pairings back onto the span of the dictionary, with
/// the trapezoid Gram matrix, giving a `[1, d, d]` second form.
fn synthesize(dict: &SineDictionary, pairings: &[Vec<f64>], shape: &[usize]) -> Result<SecondFormField> {
    let chart = dict.chart();
    let n = dict.len();
    let elems: Vec<Field> = (0..n).map(|j| dict.element(j)).collect();
    let gram = DMatrix::from_fn(n, n, |a, b| dict.pair(&elems[b], a).map(|v| v[0]).unwrap_or(0.0));
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::InvalidArgument("dictionary Gram matrix is singular".into()))?;
    let comps = pairings.first().map_or(0, |v| v.len());
    let mut out = Field::zeros(chart, shape);
    for c in 0..comps {
        let rhs = nalgebra::DVector::from_iterator(n, pairings.iter().map(|v| v[c]));
        let coef = chol.solve(&rhs);
        for (j, e) in elems.iter().enumerate() {
            if coef[j] == 0.0 {
                continue;
            }
            for p in 0..chart.n_points() {
                out.at_mut(p)[c] += coef[j] * e.at(p)[0];
            }
        }
    }
    SecondFormField::new(out)
}

/// Checks that B̂ᵉ converges weakly (pairings are Cauchy), extrapolates the
/// limit, and tests it against the Gauss equation of the base metric.
pub fn weak_limit_check(seq: &MembraneSequence, dictionary_size: usize, p: f64) -> Result<(WeakLimitReport, SecondFormField)> {
    let n = seq.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("weak-limit check needs at least 3 ε values, got {n}")));
    }
    let dict = SineDictionary::new(seq.chart(), dictionary_size)?;
    let forms: Vec<SecondFormField> = (0..n).map(|i| seq.pullback_second_form(i)).collect::<Result<_>>()?;
    let pairings: Vec<Vec<Vec<f64>>> = forms.iter().map(|b| dict.pair_all(b)).collect::<Result<_>>()?;
    let deltas: Vec<f64> = pairings.windows(2).map(|w| max_abs_diff(&w[1], &w[0])).collect();
    let scale = pairings[0].iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    let constant_sequence = deltas.iter().all(|&d| d <= 1e-14 * scale.max(1.0));
    let contraction: Vec<f64> = deltas.windows(2).map(|w| w[0] / w[1]).collect();
    let cauchy = constant_sequence || contraction.iter().all(|&c| c >= MIN_CONTRACTION);

    let last = &pairings[n - 1];
    let prev = &pairings[n - 2];
    let (limit_pairings, limit_form, f_lim) = if constant_sequence {
        (last.clone(), forms[n - 1].clone(), seq.immersion(n - 1).clone())
    } else {
        // δ_{n} ≈ ρ δ_{n−1}: the tail sums to δ ρ/(1−ρ)
        let rho = (deltas[n - 2] / deltas[n - 3]).min(0.9);
        let k = rho / (1.0 - rho);
        let lp: Vec<Vec<f64>> = last
            .iter()
            .zip(prev)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + (x - y) * k).collect())
            .collect();
        let form = synthesize(&dict, &lp, forms[0].shape())?;
        let (fl, fp, fpp) = (seq.immersion(n - 1), seq.immersion(n - 2), seq.immersion(n - 3));
        let d1 = fl.sub(fp)?;
        let rho_f = (d1.max_norm() / fp.sub(fpp)?.max_norm()).min(0.9);
        let f_lim = if rho_f.is_finite() {
            ImmersionField::new(fl.lincomb(1.0, &d1, rho_f / (1.0 - rho_f))?)?
        } else {
            fl.clone()
        };
        (lp, form, f_lim)
    };
    let limit_consistency = match immersion::second_form(&f_lim) {
        Ok((b, _)) => max_abs_diff(&dict.pair_all(&b)?, &limit_pairings),
        Err(_) => f64::INFINITY,
    };
    let strong_distances: Vec<f64> = forms
        .iter()
        .map(|b| b.sub(&limit_form)?.lp_norm(p))
        .collect::<Result<_>>()?;
    let min_strong = strong_distances.iter().cloned().fold(f64::INFINITY, f64::min);
    let weak_not_strong = !constant_sequence && min_strong >= 0.1 * strong_distances[0];
    let g = seq.base_metric();
    let gauss = gauss_residual(g, &limit_form, f64::INFINITY)?;
    let threshold = compatibility_threshold(g.chart(), &limit_form);
    Ok((
        WeakLimitReport {
            eps: seq.eps().to_vec(),
            pairing_deltas: deltas,
            contraction,
            cauchy,
            constant_sequence,
            limit_pairings,
            limit_consistency,
            pairing_scale: scale,
            strong_distances,
            weak_not_strong,
            gauss_residual: gauss,
            gauss_threshold: threshold,
            gauss_ok: gauss <= threshold,
        },
        limit_form,
    ))
}

/// Dictionary size whose modes kπ stay at or below the first frequency above
/// the coarsest oscillation 1/ε₀: K = ⌈1/(π ε₀)⌉. Larger dictionaries contain
/// modes resonant with sin(x/ε) for the leading ε, whose pairings do not
/// contract until 1/ε leaves the dictionary band.
pub fn band_limited_dictionary_size(eps_max: f64) -> usize {
    ((1.0 / (std::f64::consts::PI * eps_max)).ceil() as usize).max(1)
}

/// One ε of a convergence study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub eps: f64,
    /// ‖ĝᵉ − g‖_{W^{1,p'}}.
    pub metric_error: f64,
    /// Closed-form value of `metric_error`, if the generator has one.
    pub metric_error_analytic: Option<f64>,
    /// ‖B̂ᵉ‖_{L^p}.
    pub second_form_norm: f64,
    pub decomposition: ErrorDecomposition,
    /// Pairing delta to the previous ε (absent for the first).
    pub pairing_delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub p: f64,
    pub p_dual: f64,
    pub r: f64,
    pub dictionary_size: usize,
    pub weak_dictionary_size: usize,
    pub lipschitz: f64,
    pub rows: Vec<ConvergenceRow>,
    pub metric_error_slope: f64,
    pub metric_error_analytic_slope: Option<f64>,
    pub term_slopes: [f64; 8],
    pub total_slope: f64,
    pub weak_limit: WeakLimitReport,
}

/// Runs every diagnostic over the sequence. The J-terms use
/// `dictionary_size`; the weak-limit pairings use `weak_dictionary_size`,
/// by default [`band_limited_dictionary_size`] of the first ε.
pub fn convergence_study(
    seq: &MembraneSequence,
    generator: Option<&Generator>,
    p: f64,
    r: f64,
    dictionary_size: usize,
    weak_dictionary_size: Option<usize>,
) -> Result<ConvergenceStudy> {
    if !(p > 1.0) {
        return Err(Error::InvalidArgument(format!("p = {p} must exceed 1")));
    }
    let p_dual = if p.is_infinite() { 1.0 } else { p / (p - 1.0) };
    let tf = TestFields::standard(seq.chart());
    let weak_dictionary_size = weak_dictionary_size.unwrap_or_else(|| band_limited_dictionary_size(seq.eps()[0]));
    let (weak, _) = weak_limit_check(seq, weak_dictionary_size, p)?;
    let mut rows = Vec::with_capacity(seq.len());
    for i in 0..seq.len() {
        let g_hat = seq.pullback_metric(i)?;
        rows.push(ConvergenceRow {
            eps: seq.eps()[i],
            metric_error: g_hat.sub(seq.base_metric())?.sobolev_norm(1, p_dual)?,
            metric_error_analytic: generator.and_then(|g| g.analytic_metric_error(seq.eps()[i], p_dual)),
            second_form_norm: seq.pullback_second_form(i)?.lp_norm(p)?,
            decomposition: error_decomposition(seq, i, &tf, r, dictionary_size)?,
            pairing_delta: if i == 0 { None } else { Some(weak.pairing_deltas[i - 1]) },
        });
    }
    let eps = seq.eps();
    let col = |f: &dyn Fn(&ConvergenceRow) -> f64| -> Vec<f64> { rows.iter().map(f).collect() };
    let analytic: Option<Vec<f64>> = rows.iter().map(|r| r.metric_error_analytic).collect();
    let term_slopes = std::array::from_fn(|l| loglog_slope(eps, &col(&|r| r.decomposition.terms[l])));
    Ok(ConvergenceStudy {
        p,
        p_dual,
        r,
        dictionary_size,
        weak_dictionary_size,
        lipschitz: seq.lipschitz(),
        metric_error_slope: loglog_slope(eps, &col(&|r| r.metric_error)),
        metric_error_analytic_slope: analytic.map(|a| loglog_slope(eps, &a)),
        term_slopes,
        total_slope: loglog_slope(eps, &col(&|r| r.decomposition.total)),
        rows,
        weak_limit: weak,
    })
}

/// ε ∈ {2⁻², …, 2⁻⁶}.
pub fn default_eps() -> Vec<f64> {
    (2..=6).map(|k| 2f64.powi(-k)).collect()
}
