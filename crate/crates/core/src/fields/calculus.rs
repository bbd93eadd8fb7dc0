//! Finite differences and discrete Lebesgue/Sobolev norms.
//!
//! Interior points use the centred 3-point stencil. Edge points use a 5-point
//! one-sided stencil whose leading error term, h² f‴/6, coincides with the
//! centred one, so the truncation error stays a smooth function across the
//! edge and repeated differencing keeps second order. Axes with fewer than
//! five points fall back to the 3-point one-sided stencil.

use super::{Field, MetricField};
use crate::error::{shape_mismatch, Error, Result};

const LEFT5: [f64; 5] = [-2.5, 5.5, -5.0, 2.5, -0.5];
const LEFT3: [f64; 3] = [-1.5, 2.0, -0.5];

impl Field {
    /// Derivative along every chart axis. The new slot is the leading one:
    /// output shape is `[d] ++ shape`.
    pub fn grad(&self) -> Field {
        let chart = self.chart();
        let d = chart.dim();
        let comp = self.components();
        let mut shape = vec![d];
        shape.extend_from_slice(self.shape());
        let mut out = Field::zeros(chart, &shape);
        let src = self.data();
        let dst = out.data_mut();
        for axis in 0..d {
            let n = chart.resolution()[axis];
            let stride = chart.stride(axis);
            let inv_h = 1.0 / chart.spacing(axis);
            for p in 0..chart.n_points() {
                let i = (p / stride) % n;
                let base = p - i * stride;
                let at = |j: usize, c: usize| src[(base + j * stride) * comp + c];
                let o = p * d * comp + axis * comp;
                for c in 0..comp {
                    let v = if i > 0 && i + 1 < n {
                        0.5 * (at(i + 1, c) - at(i - 1, c))
                    } else {
                        // weights sum to zero; differencing against the edge
                        // value keeps constants exact in floating point
                        let stencil: &[f64] = if n >= 5 { &LEFT5 } else { &LEFT3 };
                        if i == 0 {
                            (1..stencil.len()).map(|j| stencil[j] * (at(j, c) - at(0, c))).sum::<f64>()
                        } else {
                            -(1..stencil.len())
                                .map(|j| stencil[j] * (at(n - 1 - j, c) - at(n - 1, c)))
                                .sum::<f64>()
                        }
                    };
                    dst[o + c] = v * inv_h;
                }
            }
        }
        out
    }

    /// Discrete Lᵖ norm with trapezoidal weights and Frobenius pointwise norm.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        self.lp_norm_weighted(p, None)
    }

    /// Lᵖ norm with an optional Riemannian volume weight √det g.
    pub fn lp_norm_weighted(&self, p: f64, metric: Option<&MetricField>) -> Result<f64> {
        if !(p >= 1.0) {
            return Err(Error::InvalidArgument(format!("p = {p} < 1")));
        }
        if let Some(g) = metric {
            if g.chart().resolution() != self.chart().resolution() {
                return Err(shape_mismatch(g.chart().resolution(), self.chart().resolution()));
            }
        }
        let chart = self.chart();
        let pointwise = |q: usize| self.at(q).iter().map(|v| v * v).sum::<f64>().sqrt();
        if p.is_infinite() {
            return Ok((0..chart.n_points()).map(pointwise).fold(0.0, f64::max));
        }
        let mut acc = 0.0;
        for q in 0..chart.n_points() {
            let w = chart.weight(q) * metric.map_or(1.0, |g| g.sqrt_det(q));
            acc += pointwise(q).powf(p) * w;
        }
        Ok(acc.powf(1.0 / p))
    }

    /// Lᵖ over points and components jointly: (Σ_x w(x) Σ_c |u_c(x)|ᵖ)^{1/p},
    /// or the largest |u_c(x)| for p = ∞.
    pub fn lp_norm_entrywise(&self, p: f64) -> Result<f64> {
        if !(p >= 1.0) {
            return Err(Error::InvalidArgument(format!("p = {p} < 1")));
        }
        if p.is_infinite() {
            return Ok(self.max_abs());
        }
        let chart = self.chart();
        let acc: f64 = (0..chart.n_points())
            .map(|q| chart.weight(q) * self.at(q).iter().map(|v| v.abs().powf(p)).sum::<f64>())
            .sum();
        Ok(acc.powf(1.0 / p))
    }

    /// ‖u‖_{Lᵖ} + ‖∇u‖_{Lᵖ} (+ ‖∇²u‖_{Lᵖ} for order 2).
    pub fn sobolev_norm(&self, order: usize, p: f64) -> Result<f64> {
        if !(1..=2).contains(&order) {
            return Err(Error::InvalidArgument(format!("Sobolev order {order} not in {{1, 2}}")));
        }
        let mut total = self.lp_norm(p)?;
        let mut current = self.grad();
        total += current.lp_norm(p)?;
        if order == 2 {
            current = current.grad();
            total += current.lp_norm(p)?;
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::super::Chart;
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unit(n: usize) -> Chart {
        Chart::cube(2, 0.0, 1.0, n, 1).unwrap()
    }

    #[test]
    fn entrywise_norm_examples() {
        let c = unit(9);
        let f = Field::from_fn(&c, &[2], |_, out| out.copy_from_slice(&[1.0, -2.0]));
        assert_eq!(f.lp_norm_entrywise(f64::INFINITY).unwrap(), 2.0);
        assert_abs_diff_eq!(f.lp_norm_entrywise(1.0).unwrap(), 3.0, epsilon = 1e-12);
        let s = Field::scalar(&c, |x| x[0] - 0.4 * x[1]);
        assert_abs_diff_eq!(s.lp_norm_entrywise(2.0).unwrap(), s.lp_norm(2.0).unwrap(), epsilon = 1e-14);
        assert!(f.lp_norm_entrywise(0.5).is_err());
    }

    #[test]
    fn constant_has_zero_gradient() {
        let f = Field::scalar(&unit(7), |_| 3.5);
        assert_eq!(f.grad().max_abs(), 0.0);
    }

    #[test]
    fn affine_is_exact() {
        for n in [3, 4, 9] {
            let f = Field::scalar(&unit(n), |x| x[0]);
            let g = f.grad();
            for p in 0..g.n_points() {
                assert_abs_diff_eq!(g.at(p)[0], 1.0, epsilon = 1e-13);
                assert_abs_diff_eq!(g.at(p)[1], 0.0, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn quadratic_central_value() {
        let c = Chart::new(vec![(0.0, 1.0), (0.0, 1.0)], vec![11, 3], 1).unwrap();
        let f = Field::scalar(&c, |x| x[0] * x[0]);
        let g = f.grad();
        let p = c.index(&[5, 1]);
        assert_abs_diff_eq!(g.at(p)[0], 1.0, epsilon = 1e-14);
    }

    #[test]
    fn quadratic_exact_at_edges() {
        let c = Chart::new(vec![(0.0, 1.0), (0.0, 1.0)], vec![9, 4], 1).unwrap();
        let f = Field::scalar(&c, |x| 3.0 * x[0] * x[0] - x[1] * x[1] + x[0] * x[1]);
        let g = f.grad();
        for p in 0..c.n_points() {
            let x = c.coords(p);
            assert_abs_diff_eq!(g.at(p)[0], 6.0 * x[0] + x[1], epsilon = 1e-12);
            assert_abs_diff_eq!(g.at(p)[1], -2.0 * x[1] + x[0], epsilon = 1e-12);
        }
    }

    #[test]
    fn gradient_slot_layout() {
        let c = unit(5);
        let f = Field::from_fn(&c, &[2], |x, out| {
            out[0] = x[0];
            out[1] = 2.0 * x[1];
        });
        let g = f.grad();
        assert_eq!(g.shape(), &[2, 2]);
        let v = g.at(7);
        assert_abs_diff_eq!(v[0], 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(v[1], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(v[2], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(v[3], 2.0, epsilon = 1e-13);
    }

    #[test]
    fn norms_of_simple_fields() {
        let c = unit(9);
        assert_eq!(Field::zeros(&c, &[3]).lp_norm(2.0).unwrap(), 0.0);
        assert_abs_diff_eq!(Field::scalar(&c, |_| 1.0).lp_norm(2.0).unwrap(), 1.0, epsilon = 1e-14);
        let line = Chart::new(vec![(0.0, 1.0), (0.0, 1.0)], vec![101, 3], 1).unwrap();
        let f = Field::scalar(&line, |x| x[0]);
        assert_abs_diff_eq!(f.lp_norm(2.0).unwrap(), (1.0f64 / 3.0).sqrt(), epsilon = 1e-3);
        assert!(f.lp_norm(0.5).is_err());
    }

    #[test]
    fn sobolev_examples() {
        let c = unit(9);
        let one = Field::scalar(&c, |_| 1.0);
        assert_abs_diff_eq!(one.sobolev_norm(1, 2.0).unwrap(), one.lp_norm(2.0).unwrap());
        let line = Chart::new(vec![(0.0, 1.0), (0.0, 1.0)], vec![101, 3], 1).unwrap();
        let f = Field::scalar(&line, |x| x[0]);
        assert_abs_diff_eq!(f.sobolev_norm(1, 2.0).unwrap(), (1.0f64 / 3.0).sqrt() + 1.0, epsilon = 1e-3);
        assert_eq!(Field::zeros(&c, &[]).sobolev_norm(2, 2.0).unwrap(), 0.0);
        assert!(one.sobolev_norm(3, 2.0).is_err());
    }

    #[test]
    fn weighted_norm_uses_volume() {
        let c = unit(9);
        let g = MetricField::from_fn(&c, |_| nalgebra::DMatrix::identity(2, 2) * 4.0).unwrap();
        let one = Field::scalar(&c, |_| 1.0);
        assert_abs_diff_eq!(one.lp_norm_weighted(1.0, Some(&g)).unwrap(), 4.0, epsilon = 1e-13);
    }

    #[test]
    fn sine_gradient_second_order() {
        let err = |n: usize| {
            let c = unit(n);
            let pi = std::f64::consts::PI;
            let f = Field::scalar(&c, |x| (pi * x[0]).sin() * (pi * x[1]).sin());
            let exact = Field::from_fn(&c, &[2], |x, out| {
                out[0] = pi * (pi * x[0]).cos() * (pi * x[1]).sin();
                out[1] = pi * (pi * x[0]).sin() * (pi * x[1]).cos();
            });
            f.grad().reshape(&[2]).unwrap().sub(&exact).unwrap().max_abs()
        };
        let (e1, e2, e3) = (err(17), err(33), err(65));
        let o1 = (e1 / e2).log2();
        let o2 = (e2 / e3).log2();
        println!("grad refinement orders: {o1:.3} {o2:.3}");
        assert!(o1 >= 1.9 && o2 >= 1.9);
    }

    proptest! {
        #[test]
        fn grad_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, s in 0.1f64..4.0) {
            let c = unit(6);
            let u = Field::scalar(&c, |x| (s * x[0]).sin() + x[1] * x[1]);
            let v = Field::scalar(&c, |x| (x[0] * x[1] * s).exp());
            let lhs = u.lincomb(a, &v, b).unwrap().grad();
            let rhs = u.grad().lincomb(a, &v.grad(), b).unwrap();
            prop_assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-11 * (1.0 + rhs.max_abs()));
        }

        #[test]
        fn grad_exact_on_affine(a in -5.0f64..5.0, b in -5.0f64..5.0, c0 in -5.0f64..5.0, n in 3usize..12) {
            let c = unit(n);
            let f = Field::scalar(&c, |x| a * x[0] + b * x[1] + c0);
            let g = f.grad();
            for p in 0..g.n_points() {
                prop_assert!((g.at(p)[0] - a).abs() < 1e-11);
                prop_assert!((g.at(p)[1] - b).abs() < 1e-11);
            }
        }

        #[test]
        fn lp_homogeneous(alpha in -10.0f64..10.0, p in 1.0f64..6.0) {
            let c = unit(7);
            let u = Field::scalar(&c, |x| x[0] - x[1] * 0.3 + 0.2);
            let lhs = u.scale(alpha).lp_norm(p).unwrap();
            let rhs = alpha.abs() * u.lp_norm(p).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs));
        }
    }
}
