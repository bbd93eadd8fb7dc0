//! Finite-dictionary surrogate for negative Sobolev norms.
//!
//! The dictionary holds the tensor-product sine bumps
//! ζ_j(x) = Π_a sin(j_a π (x_a − a_a) / L_a), 1 ≤ j_a ≤ N, which vanish on the
//! chart boundary. A field u is measured by max_j |⟨u, ζ_j⟩| / ‖ζ_j‖_{W^{1,r'}},
//! with ⟨·,·⟩ the trapezoidal L² pairing and the Euclidean norm taken over
//! tensor components.

use std::f64::consts::PI;

use super::{Chart, Field};
use crate::error::{shape_mismatch, Error, Result};

/// Default number of modes per axis.
pub const DEFAULT_DICTIONARY_SIZE: usize = 8;

#[derive(Clone, Debug)]
pub struct SineDictionary {
    chart: Chart,
    size: usize,
    /// sin and derivative tables: [axis][mode-1][i].
    sin: Vec<Vec<Vec<f64>>>,
    dsin: Vec<Vec<Vec<f64>>>,
    weights: Vec<f64>,
}

impl SineDictionary {
    pub fn new(chart: &Chart, size: usize) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidArgument("dictionary size must be at least 1".into()));
        }
        let mut sin = Vec::new();
        let mut dsin = Vec::new();
        for axis in 0..chart.dim() {
            let (a, b) = chart.extent()[axis];
            let len = b - a;
            let n = chart.resolution()[axis];
            let mut s_axis = Vec::with_capacity(size);
            let mut d_axis = Vec::with_capacity(size);
            for j in 1..=size {
                let k = j as f64 * PI / len;
                let xs = (0..n).map(|i| chart.coord(axis, i) - a);
                s_axis.push(xs.clone().map(|x| (k * x).sin()).collect());
                d_axis.push(xs.map(|x| k * (k * x).cos()).collect());
            }
            sin.push(s_axis);
            dsin.push(d_axis);
        }
        Ok(Self {
            chart: chart.clone(),
            size,
            sin,
            dsin,
            weights: chart.weights(),
        })
    }

    pub fn chart(&self) -> &Chart {
        &self.chart
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.size.pow(self.chart.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Per-axis mode numbers (1-based) of dictionary element `j`.
    pub fn modes(&self, mut j: usize) -> Vec<usize> {
        let mut out = vec![0; self.chart.dim()];
        for axis in (0..self.chart.dim()).rev() {
            out[axis] = j % self.size + 1;
            j /= self.size;
        }
        out
    }

    /// ζ_j at grid point `p`.
    pub fn value(&self, j: usize, p: usize) -> f64 {
        let modes = self.modes(j);
        let idx = self.chart.multi_index(p);
        (0..self.chart.dim())
            .map(|a| self.sin[a][modes[a] - 1][idx[a]])
            .product()
    }

    /// Analytic gradient of ζ_j at grid point `p`.
    pub fn gradient(&self, j: usize, p: usize) -> Vec<f64> {
        let modes = self.modes(j);
        let idx = self.chart.multi_index(p);
        let d = self.chart.dim();
        (0..d)
            .map(|b| {
                (0..d)
                    .map(|a| {
                        let t = if a == b { &self.dsin } else { &self.sin };
                        t[a][modes[a] - 1][idx[a]]
                    })
                    .product()
            })
            .collect()
    }

    /// ζ_j sampled on the grid.
    pub fn element(&self, j: usize) -> Field {
        let mut f = Field::zeros(&self.chart, &[]);
        for p in 0..self.chart.n_points() {
            f.data_mut()[p] = self.value(j, p);
        }
        f
    }

    /// ‖ζ_j‖_{L^q} + ‖∇ζ_j‖_{L^q} with trapezoidal quadrature and analytic gradient.
    pub fn w1_norm(&self, j: usize, q: f64) -> f64 {
        let mut a = 0.0;
        let mut b = 0.0;
        for p in 0..self.chart.n_points() {
            let w = self.weights[p];
            a += self.value(j, p).abs().powf(q) * w;
            let g = self.gradient(j, p);
            b += g.iter().map(|v| v * v).sum::<f64>().sqrt().powf(q) * w;
        }
        a.powf(1.0 / q) + b.powf(1.0 / q)
    }

    /// Componentwise trapezoidal pairing ⟨u, ζ_j⟩.
    pub fn pair(&self, field: &Field, j: usize) -> Result<Vec<f64>> {
        if field.chart().resolution() != self.chart.resolution() || field.chart().extent() != self.chart.extent() {
            return Err(shape_mismatch(self.chart.resolution(), field.chart().resolution()));
        }
        let comp = field.components();
        let mut out = vec![0.0; comp];
        for p in 0..self.chart.n_points() {
            let z = self.value(j, p) * self.weights[p];
            if z == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(field.at(p)) {
                *o += v * z;
            }
        }
        Ok(out)
    }

    /// Pairings against every dictionary element, `[j][component]`.
    pub fn pair_all(&self, field: &Field) -> Result<Vec<Vec<f64>>> {
        (0..self.len()).map(|j| self.pair(field, j)).collect()
    }

    /// max_j |⟨u, ζ_j⟩| / ‖ζ_j‖_{W^{1,r'}}.
    pub fn negative_norm(&self, field: &Field, r: f64) -> Result<f64> {
        if !(r > 1.0) {
            return Err(Error::InvalidArgument(format!("r = {r} must exceed 1")));
        }
        let rp = if r.is_infinite() { 1.0 } else { r / (r - 1.0) };
        let mut best: f64 = 0.0;
        for j in 0..self.len() {
            let pr = self.pair(field, j)?;
            let mag = pr.iter().map(|v| v * v).sum::<f64>().sqrt();
            best = best.max(mag / self.w1_norm(j, rp));
        }
        Ok(best)
    }
}

/// Dictionary estimate of ‖u‖_{W^{-1,r}}.
pub fn negative_norm_estimate(field: &Field, r: f64, dictionary_size: usize) -> Result<f64> {
    SineDictionary::new(field.chart(), dictionary_size)?.negative_norm(field, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn chart(n: usize) -> Chart {
        Chart::cube(2, 0.0, 1.0, n, 1).unwrap()
    }

    #[test]
    fn zero_field() {
        let c = chart(17);
        assert_eq!(negative_norm_estimate(&Field::zeros(&c, &[2]), 1.5, 4).unwrap(), 0.0);
    }

    #[test]
    fn self_pairing_positive() {
        let c = chart(33);
        let dict = SineDictionary::new(&c, 3).unwrap();
        let z = dict.element(0);
        let expect = dict.pair(&z, 0).unwrap()[0] / dict.w1_norm(0, 3.0);
        let got = dict.negative_norm(&z, 1.5).unwrap();
        assert!(expect > 0.0);
        assert!(got >= expect - 1e-15);
        assert_abs_diff_eq!(dict.pair(&z, 0).unwrap()[0], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn analytic_gradient_matches_differences() {
        let c = chart(65);
        let dict = SineDictionary::new(&c, 3).unwrap();
        let j = 5;
        let fd = dict.element(j).grad();
        for p in (0..c.n_points()).step_by(97) {
            let g = dict.gradient(j, p);
            assert_abs_diff_eq!(fd.at(p)[0], g[0], epsilon = 0.05);
            assert_abs_diff_eq!(fd.at(p)[1], g[1], epsilon = 0.05);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let c = chart(9);
        assert!(SineDictionary::new(&c, 0).is_err());
        assert!(negative_norm_estimate(&Field::zeros(&c, &[]), 1.0, 2).is_err());
    }

    /// ∫₀¹ sin(aπx) sin(jπx) dx for non-integer a.
    fn pairing_1d(a: f64, j: f64) -> f64 {
        let s = |t: f64| (t * PI).sin() / (t * PI);
        0.5 * (s(a - j) - s(a + j))
    }

    #[test]
    fn oscillation_decays_above_band_limit() {
        let c = Chart::new(vec![(0.0, 1.0), (0.0, 1.0)], vec![1025, 9], 1).unwrap();
        let size = 4;
        let dict = SineDictionary::new(&c, size).unwrap();
        let mut previous = f64::INFINITY;
        for m in [8usize, 16, 32, 64] {
            let a = m as f64 + 0.5;
            let field = Field::from_fn(&c, &[2], |x, out| {
                let s = (a * PI * x[0]).sin();
                out[0] = 0.6 * s;
                out[1] = 0.8 * s;
            });
            let value = dict.negative_norm(&field, 1.5).unwrap();
            let ny = c.resolution()[1];
            let hy = c.spacing(1);
            let oracle = (0..dict.len())
                .map(|j| {
                    let modes = dict.modes(j);
                    let y: f64 = (0..ny)
                        .map(|i| {
                            let w = if i == 0 || i + 1 == ny { 0.5 * hy } else { hy };
                            w * (modes[1] as f64 * PI * c.coord(1, i)).sin()
                        })
                        .sum();
                    (pairing_1d(a, modes[0] as f64) * y).abs() / dict.w1_norm(j, 3.0)
                })
                .fold(0.0, f64::max);
            assert!((value - oracle).abs() <= 0.02 * oracle, "m = {m}: {value} vs {oracle}");
            assert!(value < previous);
            previous = value;
        }
    }
}
