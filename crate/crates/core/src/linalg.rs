//! Small dense linear algebra used pointwise by the field kernels.

use nalgebra::{DMatrix, DVector};

/// Inverse of a symmetric positive-definite matrix.
///
/// Closed forms for d ≤ 3, Cholesky otherwise. Returns `None` when the
/// matrix is singular or the factorization fails.
pub fn inv_spd(g: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = g.nrows();
    match n {
        1 => (g[(0, 0)] != 0.0).then(|| DMatrix::from_element(1, 1, 1.0 / g[(0, 0)])),
        2 => {
            let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
            if det == 0.0 || !det.is_finite() {
                return None;
            }
            Some(DMatrix::from_row_slice(
                2,
                2,
                &[g[(1, 1)] / det, -g[(0, 1)] / det, -g[(1, 0)] / det, g[(0, 0)] / det],
            ))
        }
        3 => {
            let adj = adjugate(g);
            let det = (0..3).map(|j| g[(0, j)] * adj[(j, 0)]).sum::<f64>();
            if det == 0.0 || !det.is_finite() {
                return None;
            }
            Some(adj / det)
        }
        _ => g.clone().cholesky().map(|c| c.inverse()),
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(g: &DMatrix<f64>) -> f64 {
    if g.nrows() == 2 {
        let (a, b, c) = (g[(0, 0)], 0.5 * (g[(0, 1)] + g[(1, 0)]), g[(1, 1)]);
        let m = 0.5 * (a + c);
        let r = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        return m - r;
    }
    g.clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Lower-triangular Cholesky factor with positive diagonal.
pub fn cholesky_lower(g: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    g.clone().cholesky().map(|c| c.unpack())
}

/// Exponential of an antisymmetric matrix.
///
/// Closed form for 2×2, Rodrigues for 3×3, Padé scaling-and-squaring otherwise.
pub fn expm_skew(w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = w.nrows();
    match n {
        2 => {
            let t = w[(1, 0)];
            let (s, c) = t.sin_cos();
            DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
        }
        3 => {
            let (a, b, c) = (w[(2, 1)], w[(0, 2)], w[(1, 0)]);
            let theta2 = a * a + b * b + c * c;
            let theta = theta2.sqrt();
            let (s1, s2) = if theta < 1e-6 {
                (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
            } else {
                (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
            };
            let w2 = w * w;
            DMatrix::identity(3, 3) + w * s1 + w2 * s2
        }
        _ => w.clone().exp(),
    }
}

/// Thin SVD of a square matrix by one-sided Jacobi rotations: `(U, σ, V)`
/// with `A = U diag(σ) Vᵀ` and σ sorted descending.
///
/// Used instead of nalgebra's bidiagonal SVD, which returns a wrong
/// factorization for some nearly-rank-deficient 3×3 inputs.
pub fn svd(a: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let n = a.ncols();
    assert_eq!(a.nrows(), n, "svd expects a square matrix");
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(n, n);
    for _ in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                let gamma = w.column(p).dot(&w.column(q));
                if gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for m in [&mut w, &mut v] {
                    for r in 0..n {
                        let (x, y) = (m[(r, p)], m[(r, q)]);
                        m[(r, p)] = c * x - s * y;
                        m[(r, q)] = s * x + c * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| w.column(j).norm()).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let sigma = DVector::from_iterator(n, order.iter().map(|&j| norms[j]));
    let v = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    let scale = sigma[0].max(f64::MIN_POSITIVE);
    let mut u = DMatrix::<f64>::zeros(n, n);
    let mut filled = Vec::new();
    for (c, &j) in order.iter().enumerate() {
        if norms[j] > 1e-14 * scale {
            u.set_column(c, &(w.column(j) / norms[j]));
            filled.push(c);
        }
    }
    // complete U with an orthonormal basis of the left null space
    let mut basis = 0;
    for c in 0..n {
        if filled.contains(&c) {
            continue;
        }
        loop {
            let mut e = DVector::<f64>::zeros(n);
            e[basis] = 1.0;
            basis += 1;
            for &k in &filled {
                let proj = u.column(k).dot(&e);
                e -= u.column(k) * proj;
            }
            let norm = e.norm();
            if norm > 1e-8 {
                u.set_column(c, &(e / norm));
                filled.push(c);
                break;
            }
        }
    }
    (u, sigma, v)
}

/// Closest orthogonal matrix in the Frobenius norm (orthogonal polar factor).
pub fn polar(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (u, _, v) = svd(a);
    u * v.transpose()
}

/// Singular values sorted descending, with the smallest negated when det < 0.
pub fn signed_singular_values(f: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = svd(f).1.iter().copied().collect();
    if f.determinant() < 0.0 {
        if let Some(last) = s.last_mut() {
            *last = -*last;
        }
    }
    s
}

/// Frobenius distance from a square matrix to SO(d).
pub fn dist_to_so(f: &DMatrix<f64>) -> f64 {
    signed_singular_values(f)
        .iter()
        .map(|s| (s - 1.0) * (s - 1.0))
        .sum::<f64>()
        .sqrt()
}

/// Cofactor matrix, C[i][j] = (-1)^(i+j) det(minor_ij), i.e. the transposed adjugate.
pub fn cofactor(f: &DMatrix<f64>) -> DMatrix<f64> {
    let n = f.nrows();
    if n == 1 {
        return DMatrix::from_element(1, 1, 1.0);
    }
    DMatrix::from_fn(n, n, |i, j| {
        let minor = f.clone().remove_row(i).remove_column(j);
        let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
        sign * minor.determinant()
    })
}

/// Classical adjugate, the transpose of [`cofactor`].
pub fn adjugate(f: &DMatrix<f64>) -> DMatrix<f64> {
    cofactor(f).transpose()
}

/// Rotation `Q ∈ SO(n)` maximizing `tr(Q · H)`.
///
/// With `H = U Σ Vᵀ` the maximizer is `V diag(1, …, 1, det(V Uᵀ)) Uᵀ`; the
/// sign correction sits on the smallest singular value.
pub fn procrustes(h: &DMatrix<f64>) -> DMatrix<f64> {
    let n = h.nrows();
    let (u, _, v) = svd(h);
    let det = (&v * u.transpose()).determinant();
    let mut d = DVector::from_element(n, 1.0);
    d[n - 1] = det.signum();
    &v * DMatrix::from_diagonal(&d) * u.transpose()
}

/// Orthogonality defect ‖QᵀQ − I‖_F.
pub fn orthogonality_defect(q: &DMatrix<f64>) -> f64 {
    (q.transpose() * q - DMatrix::identity(q.ncols(), q.ncols())).norm()
}

/// Antisymmetric part ½(A − Aᵀ).
pub fn skew(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a - a.transpose()) * 0.5
}

/// Symmetric part ½(A + Aᵀ).
pub fn sym(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn skew3(a: f64, b: f64, c: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[0.0, -c, b, c, 0.0, -a, -b, a, 0.0])
    }

    #[test]
    fn rodrigues_matches_pade() {
        let w = skew3(0.3, -0.7, 1.1);
        let r = expm_skew(&w);
        let e = w.clone().exp();
        assert_relative_eq!(r, e, epsilon = 1e-13);
        assert!(orthogonality_defect(&r) < 1e-14);
        assert_relative_eq!(r.determinant(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn small_angle_rodrigues() {
        let w = skew3(1e-8, 2e-8, -1e-8);
        assert_relative_eq!(expm_skew(&w), w.clone().exp(), epsilon = 1e-15);
    }

    #[test]
    fn exp_2x2_is_rotation() {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, -0.4, 0.4, 0.0]);
        assert_relative_eq!(expm_skew(&w), w.clone().exp(), epsilon = 1e-14);
    }

    #[test]
    fn inverse_closed_forms() {
        let g3 = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let gi = inv_spd(&g3).unwrap();
        assert_relative_eq!(&g3 * gi, DMatrix::identity(3, 3), epsilon = 1e-14);
        let g4 = DMatrix::<f64>::identity(4, 4) * 2.0;
        assert_relative_eq!(inv_spd(&g4).unwrap(), DMatrix::identity(4, 4) * 0.5, epsilon = 1e-15);
    }

    #[test]
    fn cholesky_of_diag() {
        let g = DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 1.0]);
        let l = cholesky_lower(&g).unwrap();
        assert_relative_eq!(l, DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 1.0]));
    }

    #[test]
    fn dist_examples() {
        assert_relative_eq!(dist_to_so(&DMatrix::identity(2, 2)), 0.0);
        assert_relative_eq!(dist_to_so(&(DMatrix::identity(2, 2) * 2.0)), 2f64.sqrt(), epsilon = 1e-14);
        let refl = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert_relative_eq!(dist_to_so(&refl), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn cofactor_2x2() {
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(cofactor(&f), DMatrix::from_row_slice(2, 2, &[4.0, -3.0, -2.0, 1.0]));
    }

    #[test]
    fn cofactor_is_det_times_inverse_transpose() {
        let f = DMatrix::from_row_slice(3, 3, &[2.0, 0.1, -0.3, 0.4, 1.5, 0.2, -0.1, 0.3, 0.9]);
        let expect = f.clone().try_inverse().unwrap().transpose() * f.determinant();
        assert_relative_eq!(cofactor(&f), expect, epsilon = 1e-13);
    }

    #[test]
    fn procrustes_recovers_rotation() {
        let q0 = expm_skew(&skew3(0.4, 1.2, -0.5));
        let q = procrustes(&q0.transpose());
        assert_relative_eq!(q, q0, epsilon = 1e-12);
    }

    #[test]
    fn procrustes_det_correction() {
        let h = -DMatrix::<f64>::identity(3, 3);
        let q = procrustes(&h);
        assert_relative_eq!(q.determinant(), 1.0, epsilon = 1e-12);
        assert!(orthogonality_defect(&q) < 1e-12);
    }

    #[test]
    fn polar_projects_perturbed_rotation() {
        let q0 = expm_skew(&skew3(0.1, 0.2, 0.3));
        let a = &q0 + DMatrix::from_element(3, 3, 1e-6);
        let p = polar(&a);
        assert!(orthogonality_defect(&p) < 1e-14);
        assert!((p - q0).norm() < 1e-5);
    }

    #[test]
    fn jacobi_svd_reconstructs_hard_case() {
        let h = DMatrix::from_row_slice(
            3,
            3,
            &[
                2.338171443886997,
                -2.0234058281206817,
                0.8212994463388429,
                -0.4635156509992381,
                -0.884180744695928,
                3.282933951530716,
                -0.9312332708501551,
                0.03577336953030835,
                1.7374458905802816,
            ],
        );
        let (u, s, v) = svd(&h);
        assert!((&u * DMatrix::from_diagonal(&s) * v.transpose() - &h).norm() < 1e-13);
        assert!(orthogonality_defect(&u) < 1e-14 && orthogonality_defect(&v) < 1e-14);
    }

    #[test]
    fn jacobi_svd_rank_deficient() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 0.0, 0.0]);
        let (u, s, v) = svd(&a);
        assert!(s[1].abs() < 1e-14 && s[2].abs() < 1e-14);
        assert!(orthogonality_defect(&u) < 1e-14);
        assert!((&u * DMatrix::from_diagonal(&s) * v.transpose() - &a).norm() < 1e-13);
    }

    proptest::proptest! {
        #[test]
        fn jacobi_svd_factorizes(data in proptest::collection::vec(-3.0f64..3.0, 16)) {
            let a = DMatrix::from_row_slice(4, 4, &data);
            let (u, s, v) = svd(&a);
            proptest::prop_assert!((&u * DMatrix::from_diagonal(&s) * v.transpose() - &a).norm() < 1e-12);
            proptest::prop_assert!(orthogonality_defect(&u) < 1e-12);
            proptest::prop_assert!(orthogonality_defect(&v) < 1e-12);
            proptest::prop_assert!(s.iter().zip(s.iter().skip(1)).all(|(a, b)| a >= b));
        }
    }
}
