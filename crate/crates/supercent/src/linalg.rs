//! Dense linear-algebra primitives shared by the estimators: leading singular
//! triple / eigenpair via power iteration, ordinary least squares, and
//! projections onto column-space complements.
//!
//! Everything here is deterministic. The power iterations start from the
//! normalized all-ones vector (perturbed in the first coordinate by 1e-6 if
//! the iteration collapses to zero), so repeated runs are bit-identical
//! without any RNG dependency.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Reciprocal-condition threshold below which a design matrix is treated as
/// singular. Matches double-precision limits.
pub const RCOND_THRESHOLD: f64 = 1e-12;

/// Leading singular triple (d, u, v) with unit-norm u and v and d >= 0.
#[derive(Debug, Clone)]
pub struct SingularTriple {
    pub d: f64,
    pub u: Array1<f64>,
    pub v: Array1<f64>,
    /// Number of power-iteration sweeps performed.
    pub iterations: usize,
}

pub fn norm2(z: ArrayView1<f64>) -> f64 {
    z.dot(&z).sqrt()
}

pub fn frobenius_norm(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// sin of the angle between two nonzero vectors; also equals
/// ||P_a - P_b||_2 for the rank-one projectors onto their spans.
pub fn sin_angle(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let na = norm2(a);
    let nb = norm2(b);
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    let c = a.dot(&b) / (na * nb);
    (1.0 - (c * c).min(1.0)).max(0.0).sqrt()
}

fn all_ones_start(len: usize) -> Array1<f64> {
    Array1::from_elem(len, 1.0 / (len as f64).sqrt())
}

/// Leading singular triple of a dense matrix by alternating power iteration.
///
/// Starts from the normalized all-ones right vector. If an iterate collapses
/// (the image is numerically zero while the matrix is not), the first
/// coordinate is perturbed by 1e-6 and iteration continues. Convergence is
/// declared when ||A^T u - d v|| <= tol * ||A||_F.
pub fn leading_singular_triple(
    a: ArrayView2<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<SingularTriple> {
    if tol <= 0.0 {
        return Err(Error::DegenerateInput("tol must be positive".into()));
    }
    let (m, n) = a.dim();
    if m == 0 || n == 0 {
        return Err(Error::DegenerateInput("empty matrix".into()));
    }
    let norm_f = frobenius_norm(a);
    if norm_f == 0.0 {
        // Zero matrix: d = 0 with the canonical start vectors.
        return Ok(SingularTriple {
            d: 0.0,
            u: all_ones_start(m),
            v: all_ones_start(n),
            iterations: 0,
        });
    }

    let mut v = all_ones_start(n);
    let mut u = Array1::<f64>::zeros(m);
    let mut d = 0.0;
    let mut perturbed = false;

    for it in 1..=max_iter {
        let av = a.dot(&v);
        let nav = norm2(av.view());
        if nav <= norm_f * f64::EPSILON * 16.0 {
            if perturbed {
                return Err(Error::DegenerateNetwork);
            }
            // Start vector (numerically) orthogonal to the leading direction.
            v[0] += 1e-6;
            let nv = norm2(v.view());
            v.mapv_inplace(|x| x / nv);
            perturbed = true;
            continue;
        }
        u = av / nav;
        d = nav;

        let atu = a.t().dot(&u);
        let residual = {
            let r = &atu - &(&v * d);
            norm2(r.view())
        };
        if residual <= tol * norm_f {
            return Ok(SingularTriple { d, u, v, iterations: it });
        }
        let natu = norm2(atu.view());
        v = atu / natu;
    }

    Err(Error::NonConvergence {
        max_iter,
        residual: {
            let r = &a.t().dot(&u) - &(&v * d);
            norm2(r.view())
        },
        last_d: d,
        last_u: u.to_vec(),
        last_v: v.to_vec(),
    })
}

/// Eigenpair of largest |eigenvalue| of a symmetric matrix by power iteration.
pub fn leading_eigenpair(
    a: ArrayView2<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, Array1<f64>)> {
    if tol <= 0.0 {
        return Err(Error::DegenerateInput("tol must be positive".into()));
    }
    let (m, n) = a.dim();
    if m != n {
        return Err(Error::DimensionMismatch(format!("expected square matrix, got {m}x{n}")));
    }
    check_symmetric(a)?;
    let norm_f = frobenius_norm(a);
    if norm_f == 0.0 {
        return Ok((0.0, all_ones_start(n)));
    }

    let mut x = all_ones_start(n);
    let mut perturbed = false;
    let mut lambda = 0.0;
    for _ in 1..=max_iter {
        let y = a.dot(&x);
        lambda = x.dot(&y);
        let residual = {
            let r = &y - &(&x * lambda);
            norm2(r.view())
        };
        if residual <= tol * norm_f {
            return Ok((lambda, x));
        }
        let ny = norm2(y.view());
        if ny <= norm_f * f64::EPSILON * 16.0 {
            if perturbed {
                return Err(Error::DegenerateNetwork);
            }
            x[0] += 1e-6;
            let nx = norm2(x.view());
            x.mapv_inplace(|e| e / nx);
            perturbed = true;
            continue;
        }
        x = y / ny;
    }
    Err(Error::NonConvergence {
        max_iter,
        residual: {
            let y = a.dot(&x);
            let r = &y - &(&x * lambda);
            norm2(r.view())
        },
        last_d: lambda,
        last_u: x.to_vec(),
        last_v: x.to_vec(),
    })
}

/// Max |a_ij - a_ji| must stay within 1e-10 (relative to the largest entry).
pub fn check_symmetric(a: ArrayView2<f64>) -> Result<()> {
    let n = a.nrows();
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    let mut max_asym = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            max_asym = max_asym.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    if max_asym > 1e-10 * scale {
        return Err(Error::Asymmetric { max_asymmetry: max_asym });
    }
    Ok(())
}

/// Eigendecomposition of a small symmetric matrix by cyclic Jacobi rotations.
/// Returns (eigenvalues, eigenvectors as columns), unordered.
pub fn jacobi_eigh(s: ArrayView2<f64>) -> (Array1<f64>, Array2<f64>) {
    let n = s.nrows();
    let mut a = s.to_owned();
    let mut q = Array2::<f64>::eye(n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[[i, j]] * a[[i, j]];
            }
        }
        if off.sqrt() <= 1e-15 * (frobenius_norm(a.view()) + 1e-300) {
            break;
        }
        for p in 0..n {
            for r in (p + 1)..n {
                let apr = a[[p, r]];
                if apr.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[[r, r]] - a[[p, p]]) / (2.0 * apr);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akr = a[[k, r]];
                    a[[k, p]] = c * akp - sn * akr;
                    a[[k, r]] = sn * akp + c * akr;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let ark = a[[r, k]];
                    a[[p, k]] = c * apk - sn * ark;
                    a[[r, k]] = sn * apk + c * ark;
                }
                for k in 0..n {
                    let qkp = q[[k, p]];
                    let qkr = q[[k, r]];
                    q[[k, p]] = c * qkp - sn * qkr;
                    q[[k, r]] = sn * qkp + c * qkr;
                }
            }
        }
    }
    let eig = Array1::from_iter((0..n).map(|i| a[[i, i]]));
    (eig, q)
}

/// Solve the symmetric positive system S x = b through the Jacobi
/// eigendecomposition, reporting the reciprocal condition estimate.
fn eigh_solve(s: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    let (eig, q) = jacobi_eigh(s);
    let max_ev = eig.iter().fold(0.0f64, |m, &e| m.max(e.abs()));
    let min_ev = eig.iter().fold(f64::INFINITY, |m, &e| m.min(e.abs()));
    let rcond = if max_ev == 0.0 { 0.0 } else { min_ev / max_ev };
    if rcond < RCOND_THRESHOLD {
        return Err(Error::SingularDesign { rcond, threshold: RCOND_THRESHOLD });
    }
    let qtb = q.t().dot(&b);
    let scaled = Array1::from_iter(qtb.iter().zip(eig.iter()).map(|(x, e)| x / e));
    Ok(q.dot(&scaled))
}

/// Symmetric positive-definite inverse via Jacobi; used for the small
/// (X^T X)^{-1} and C_uv^{-1} factors in the variance formulas.
pub fn sym_inverse(s: ArrayView2<f64>) -> Result<Array2<f64>> {
    let (eig, q) = jacobi_eigh(s);
    let max_ev = eig.iter().fold(0.0f64, |m, &e| m.max(e.abs()));
    let min_ev = eig.iter().fold(f64::INFINITY, |m, &e| m.min(e.abs()));
    let rcond = if max_ev == 0.0 { 0.0 } else { min_ev / max_ev };
    if rcond < RCOND_THRESHOLD {
        return Err(Error::SingularDesign { rcond, threshold: RCOND_THRESHOLD });
    }
    let n = s.nrows();
    let mut inv = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for k in 0..n {
                acc += q[[i, k]] * q[[j, k]] / eig[k];
            }
            inv[[i, j]] = acc;
        }
    }
    Ok(inv)
}

/// Ordinary least squares: beta minimizing ||y - W beta||_2^2 via the normal
/// equations. Errors with `SingularDesign` when the reciprocal condition
/// estimate of W^T W falls below `RCOND_THRESHOLD`.
pub fn ols_fit(w: ArrayView2<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>> {
    let (n, q) = w.dim();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "design has {n} rows but response has {} entries",
            y.len()
        )));
    }
    if n <= q {
        return Err(Error::DegenerateInput(format!(
            "need more rows than columns for least squares ({n} rows, {q} cols)"
        )));
    }
    let wtw = w.t().dot(&w);
    let wty = w.t().dot(&y);
    eigh_solve(wtw.view(), wty.view())
}

/// Projection of z onto the orthogonal complement of the column space of X:
/// (I - P_X) z.
pub fn project_complement(x: ArrayView2<f64>, z: ArrayView1<f64>) -> Result<Array1<f64>> {
    let beta = ols_fit(x, z)?;
    Ok(&z - &x.dot(&beta))
}

/// Dense LU solve with partial pivoting, for the n x n linear system of the
/// symmetric solver variant.
pub fn lu_solve(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::DimensionMismatch("lu_solve needs a square system".into()));
    }
    let mut lu = a.to_owned();
    let mut x = b.to_owned();
    let scale = lu.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    for k in 0..n {
        let mut piv = k;
        let mut best = lu[[k, k]].abs();
        for i in (k + 1)..n {
            if lu[[i, k]].abs() > best {
                best = lu[[i, k]].abs();
                piv = i;
            }
        }
        if best <= scale * 1e-14 {
            return Err(Error::DegenerateUpdate(format!(
                "linear system singular at elimination step {k}"
            )));
        }
        if piv != k {
            for j in 0..n {
                lu.swap([k, j], [piv, j]);
            }
            x.swap(k, piv);
        }
        for i in (k + 1)..n {
            let f = lu[[i, k]] / lu[[k, k]];
            lu[[i, k]] = f;
            for j in (k + 1)..n {
                lu[[i, j]] -= f * lu[[k, j]];
            }
            x[i] -= f * x[k];
        }
    }
    for i in (0..n).rev() {
        let mut acc = x[i];
        for j in (i + 1)..n {
            acc -= lu[[i, j]] * x[j];
        }
        x[i] = acc / lu[[i, i]];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn svd_oracle(a: &Array2<f64>) -> (f64, Array1<f64>, Array1<f64>) {
        let (m, n) = a.dim();
        let na = nalgebra::DMatrix::from_row_iterator(m, n, a.iter().cloned());
        let svd = na.svd(true, true);
        let mut top = 0;
        for i in 0..svd.singular_values.len() {
            if svd.singular_values[i] > svd.singular_values[top] {
                top = i;
            }
        }
        let u = svd.u.as_ref().unwrap().column(top);
        let v = svd.v_t.as_ref().unwrap().row(top);
        (
            svd.singular_values[top],
            Array1::from_iter(u.iter().cloned()),
            Array1::from_iter(v.iter().cloned()),
        )
    }

    #[test]
    fn diagonal_matrix_triple() {
        let a = array![[2.0, 0.0], [0.0, 1.0]];
        let t = leading_singular_triple(a.view(), 1e-12, 10_000).unwrap();
        assert!((t.d - 2.0).abs() < 1e-10);
        assert!(t.u[0].abs() - 1.0 < 1e-8 && t.u[1].abs() < 1e-8);
        assert!(t.v[0].abs() - 1.0 < 1e-8 && t.v[1].abs() < 1e-8);
    }

    #[test]
    fn exact_rank_one_triple() {
        let a_dir = array![3.0, 4.0] / 5.0;
        let b_dir = array![1.0, 2.0, 2.0] / 3.0;
        let mut m = Array2::<f64>::zeros((2, 3));
        for i in 0..2 {
            for j in 0..3 {
                m[[i, j]] = 3.0 * a_dir[i] * b_dir[j];
            }
        }
        let t = leading_singular_triple(m.view(), 1e-12, 10_000).unwrap();
        assert!((t.d - 3.0).abs() < 1e-10);
        assert!(sin_angle(t.u.view(), a_dir.view()) < 1e-8);
        assert!(sin_angle(t.v.view(), b_dir.view()) < 1e-8);
    }

    #[test]
    fn random_triple_matches_dense_svd() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let a = Array2::from_shape_fn((8, 8), |_| rng.gen_range(-1.0..1.0));
        let t = leading_singular_triple(a.view(), 1e-12, 200_000).unwrap();
        let (d, u, v) = svd_oracle(&a);
        assert!((t.d - d).abs() < 1e-8);
        assert!(sin_angle(t.u.view(), u.view()) < 1e-6);
        assert!(sin_angle(t.v.view(), v.view()) < 1e-6);
    }

    #[test]
    fn ones_orthogonal_to_leading_direction_falls_back() {
        // Rank-one with right vector orthogonal to all-ones: the first image
        // is exactly zero, forcing the documented perturbation fallback.
        let b_dir = array![1.0, -1.0] / (2.0f64).sqrt();
        let a_dir = array![1.0, 0.0];
        let mut m = Array2::<f64>::zeros((2, 2));
        for i in 0..2 {
            for j in 0..2 {
                m[[i, j]] = 2.0 * a_dir[i] * b_dir[j];
            }
        }
        let t = leading_singular_triple(m.view(), 1e-12, 10_000).unwrap();
        assert!((t.d - 2.0).abs() < 1e-9);
        assert!(sin_angle(t.v.view(), b_dir.view()) < 1e-7);
    }

    #[test]
    fn zero_matrix_gives_zero_triple() {
        let a = Array2::<f64>::zeros((3, 3));
        let t = leading_singular_triple(a.view(), 1e-12, 100).unwrap();
        assert_eq!(t.d, 0.0);
    }

    #[test]
    fn eigen_diagonal() {
        let a = array![[5.0, 0.0], [0.0, -1.0]];
        let (l, x) = leading_eigenpair(a.view(), 1e-12, 10_000).unwrap();
        assert!((l - 5.0).abs() < 1e-10);
        assert!(x[0].abs() > 1.0 - 1e-8);
    }

    #[test]
    fn eigen_rank_one() {
        let a_dir = array![2.0, 1.0, 2.0] / 3.0;
        let mut m = Array2::<f64>::zeros((3, 3));
        for i in 0..3 {
            for j in 0..3 {
                m[[i, j]] = 4.0 * a_dir[i] * a_dir[j];
            }
        }
        let (l, x) = leading_eigenpair(m.view(), 1e-12, 10_000).unwrap();
        assert!((l - 4.0).abs() < 1e-9);
        assert!(sin_angle(x.view(), a_dir.view()) < 1e-7);
    }

    #[test]
    fn eigen_negative_dominant() {
        // Dominant eigenvalue by magnitude is negative.
        let a = array![[-6.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]];
        let (l, x) = leading_eigenpair(a.view(), 1e-12, 10_000).unwrap();
        assert!((l + 6.0).abs() < 1e-9);
        assert!(x[0].abs() > 1.0 - 1e-8);
    }

    #[test]
    fn eigen_matches_dense_oracle() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut a = Array2::from_shape_fn((6, 6), |_| rng.gen_range(-1.0..1.0));
        a = (&a + &a.t()) / 2.0;
        let (l, x) = leading_eigenpair(a.view(), 1e-13, 500_000).unwrap();
        let na = nalgebra::DMatrix::from_row_iterator(6, 6, a.iter().cloned());
        let eig = na.symmetric_eigen();
        let mut top = 0;
        for i in 0..6 {
            if eig.eigenvalues[i].abs() > eig.eigenvalues[top].abs() {
                top = i;
            }
        }
        assert!((l - eig.eigenvalues[top]).abs() < 1e-8);
        let xo = Array1::from_iter(eig.eigenvectors.column(top).iter().cloned());
        assert!(sin_angle(x.view(), xo.view()) < 1e-6);
    }

    #[test]
    fn eigen_rejects_asymmetric() {
        let a = array![[0.0, 1.0], [0.5, 0.0]];
        assert!(matches!(
            leading_eigenpair(a.view(), 1e-10, 100),
            Err(Error::Asymmetric { .. })
        ));
    }

    #[test]
    fn ols_single_column() {
        let x = array![1.0, 2.0, 3.0];
        let w = x.clone().insert_axis(ndarray::Axis(1));
        let y = &x * 2.0;
        let beta = ols_fit(w.view(), y.view()).unwrap();
        assert!((beta[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ols_intercept_only() {
        let w = Array2::from_elem((5, 1), 1.0);
        let y = Array1::from_elem(5, 3.25);
        let beta = ols_fit(w.view(), y.view()).unwrap();
        assert!((beta[0] - 3.25).abs() < 1e-12);
    }

    #[test]
    fn ols_noiseless_recovery() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let w = Array2::from_shape_fn((10, 3), |_| rng.gen_range(-1.0..1.0));
        let beta_true = array![0.5, -1.5, 2.0];
        let y = w.dot(&beta_true);
        let beta = ols_fit(w.view(), y.view()).unwrap();
        for k in 0..3 {
            assert!((beta[k] - beta_true[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn ols_residual_orthogonality() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let w = Array2::from_shape_fn((20, 4), |_| rng.gen_range(-1.0..1.0));
        let y = Array1::from_shape_fn(20, |_| rng.gen_range(-1.0..1.0));
        let beta = ols_fit(w.view(), y.view()).unwrap();
        let resid = &y - &w.dot(&beta);
        let grad = w.t().dot(&resid);
        let ny = norm2(y.view());
        for g in grad.iter() {
            assert!(g.abs() <= 1e-8 * ny);
        }
    }

    #[test]
    fn ols_detects_singular_design() {
        let mut w = Array2::<f64>::zeros((6, 2));
        for i in 0..6 {
            w[[i, 0]] = i as f64;
            w[[i, 1]] = 2.0 * i as f64;
        }
        let y = Array1::from_elem(6, 1.0);
        assert!(matches!(
            ols_fit(w.view(), y.view()),
            Err(Error::SingularDesign { .. })
        ));
    }

    #[test]
    fn complement_of_ones_centers() {
        let x = Array2::from_elem((4, 1), 1.0);
        let z = array![1.0, 2.0, 3.0, 6.0];
        let r = project_complement(x.view(), z.view()).unwrap();
        let mean = 3.0;
        for i in 0..4 {
            assert!((r[i] - (z[i] - mean)).abs() < 1e-12);
        }
    }

    #[test]
    fn complement_of_own_column_space_is_zero() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let x = Array2::from_shape_fn((8, 2), |_| rng.gen_range(-1.0..1.0));
        let coef = array![2.0, -0.5];
        let z = x.dot(&coef);
        let r = project_complement(x.view(), z.view()).unwrap();
        assert!(norm2(r.view()) < 1e-10 * norm2(z.view()).max(1.0));
    }

    #[test]
    fn complement_matches_explicit_projector() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        let x = Array2::from_shape_fn((12, 2), |_| rng.gen_range(-1.0..1.0));
        let z = Array1::from_shape_fn(12, |_| rng.gen_range(-1.0..1.0));
        // Explicit (I - X (X^T X)^{-1} X^T) z.
        let xtx = x.t().dot(&x);
        let inv = sym_inverse(xtx.view()).unwrap();
        let proj = x.dot(&inv).dot(&x.t());
        let expected = &z - &proj.dot(&z);
        let got = project_complement(x.view(), z.view()).unwrap();
        for i in 0..12 {
            assert!((got[i] - expected[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn lu_solves_small_system() {
        let a = array![[2.0, 1.0], [1.0, 3.0]];
        let b = array![5.0, 10.0];
        let x = lu_solve(a.view(), b.view()).unwrap();
        assert!((a.dot(&x)[0] - 5.0).abs() < 1e-12);
        assert!((a.dot(&x)[1] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_d_consistency() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let a = Array2::from_shape_fn((6, 6), |_| rng.gen_range(-1.0..1.0));
            let tol = 1e-11;
            let t = leading_singular_triple(a.view(), tol, 500_000).unwrap();
            assert!(t.d >= 0.0);
            let dd = t.u.dot(&a.dot(&t.v));
            assert!((t.d - dd).abs() <= tol * frobenius_norm(a.view()));
        }
    }
}
