//! Brute-force oracle machinery shared by the integration tests: literal
//! Kronecker-product assembly of the asymptotic covariance blocks, kept
//! deliberately independent of the closed-form implementation paths.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use supercent::linalg;

pub fn kron(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    let (ma, na) = a.dim();
    let (mb, nb) = b.dim();
    let mut out = Array2::<f64>::zeros((ma * mb, na * nb));
    for i in 0..ma {
        for j in 0..na {
            for k in 0..mb {
                for l in 0..nb {
                    out[[i * mb + k, j * nb + l]] = a[[i, j]] * b[[k, l]];
                }
            }
        }
    }
    out
}

/// Commutation matrix K with K vec(E) = vec(E^T) for n x n matrices under
/// column-major stacking: entry (a, b) of E sits at index a + b n, so
/// vec(E^T)[a + b n] = E[b, a], which vec(E) stores at b + a n.
pub fn commutation(n: usize) -> Array2<f64> {
    let mut k = Array2::<f64>::zeros((n * n, n * n));
    for a in 0..n {
        for b in 0..n {
            k[[a + b * n, b + a * n]] = 1.0;
        }
    }
    k
}

/// Projector onto the column space of M.
pub fn col_projector(m: ArrayView2<f64>) -> Array2<f64> {
    let mtm = m.t().dot(&m);
    let inv = linalg::sym_inverse(mtm.view()).unwrap();
    m.dot(&inv).dot(&m.t())
}

/// Rank-one projector z z^T / (z^T z).
pub fn vec_projector(z: ArrayView1<f64>) -> Array2<f64> {
    let n = z.len();
    let zz = z.dot(&z);
    let mut p = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            p[[i, j]] = z[i] * z[j] / zz;
        }
    }
    p
}

fn eye(n: usize) -> Array2<f64> {
    Array2::<f64>::eye(n)
}

fn row_norms_sq(m: &Array2<f64>) -> Array1<f64> {
    Array1::from_iter(m.rows().into_iter().map(|r| r.dot(&r)))
}

pub struct BruteForceCov {
    /// Var(A_hat_ij), indexed (i, j).
    pub var_a: Array2<f64>,
    /// Var(u_hat_i).
    pub var_u: Array1<f64>,
    /// Var(v_hat_j).
    pub var_v: Array1<f64>,
    /// Cov(u_hat_i, v_hat_j).
    pub cov_uv: Array2<f64>,
}

/// Assemble the joint asymptotic covariance of the supervised estimator
/// literally from its block definition: the centrality blocks
///   (C11 C12; C21 C22) = (lambda d^2)^{-1}
///       (I_2n - (lambda d^2 + bu^2 + bv^2)^{-1} M (x) (I - P_W))
///       (bu (I - P_W)      lambda d/n  v^T (x) (I - P_u)
///        bv (I - P_W)      lambda d/n (u^T (x) (I - P_v)) K),
/// and the network rows
///   (C31 C32) = (d (v (x) I)   d K (u (x) I)   P_v (x) P_u)
///               stacked over (C11 C12; C21 C22; 0 I).
/// Everything is materialized densely; per-entry variances are the row
/// norms against the noise covariance diag(sy2 I_n, sa2 I_{n^2}).
#[allow(clippy::too_many_arguments)]
pub fn brute_force_supercent_cov(
    u: &Array1<f64>,
    v: &Array1<f64>,
    x: ArrayView2<f64>,
    beta_u: f64,
    beta_v: f64,
    d: f64,
    lambda: f64,
    sigma_y_sq: f64,
    sigma_a_sq: f64,
) -> BruteForceCov {
    let n = u.len();
    let nf = n as f64;
    let mut w = Array2::<f64>::zeros((n, x.ncols() + 2));
    for i in 0..n {
        for j in 0..x.ncols() {
            w[[i, j]] = x[[i, j]];
        }
        w[[i, x.ncols()]] = u[i];
        w[[i, x.ncols() + 1]] = v[i];
    }
    let o_w = &eye(n) - &col_projector(w.view());
    let p_u = vec_projector(u.view());
    let p_v = vec_projector(v.view());
    let o_u = &eye(n) - &p_u;
    let o_v = &eye(n) - &p_v;
    let k = commutation(n);

    let s = 1.0 / (lambda * d * d + beta_u * beta_u + beta_v * beta_v);
    let m2 = ndarray::array![
        [beta_u * beta_u, beta_u * beta_v],
        [beta_u * beta_v, beta_v * beta_v]
    ];
    let f1 = {
        let mut f = eye(2 * n);
        let mo = kron(&m2, &o_w);
        f = &f - &(&mo * s);
        f / (lambda * d * d)
    };

    // Second factor, 2n x (n + n^2).
    let mut f2 = Array2::<f64>::zeros((2 * n, n + n * n));
    let u_row = Array2::from_shape_vec((1, n), u.to_vec()).unwrap();
    let v_row = Array2::from_shape_vec((1, n), v.to_vec()).unwrap();
    let top_right = kron(&v_row, &o_u) * (lambda * d / nf);
    let bot_right = kron(&u_row, &o_v).dot(&k) * (lambda * d / nf);
    for i in 0..n {
        for j in 0..n {
            f2[[i, j]] = beta_u * o_w[[i, j]];
            f2[[n + i, j]] = beta_v * o_w[[i, j]];
        }
        for j in 0..n * n {
            f2[[i, n + j]] = top_right[[i, j]];
            f2[[n + i, n + j]] = bot_right[[i, j]];
        }
    }
    let c = f1.dot(&f2);
    let c11 = c.slice(ndarray::s![..n, ..n]).to_owned();
    let c12 = c.slice(ndarray::s![..n, n..]).to_owned();
    let c21 = c.slice(ndarray::s![n.., ..n]).to_owned();
    let c22 = c.slice(ndarray::s![n.., n..]).to_owned();

    let u_col = Array2::from_shape_vec((n, 1), u.to_vec()).unwrap();
    let v_col = Array2::from_shape_vec((n, 1), v.to_vec()).unwrap();
    let lift_v = kron(&v_col, &eye(n));
    let lift_u = k.dot(&kron(&u_col, &eye(n)));
    let c31 = &lift_v.dot(&c11) * d + &lift_u.dot(&c21) * d;
    let c32 = {
        let mut m = &lift_v.dot(&c12) * d + &lift_u.dot(&c22) * d;
        m = &m + &kron(&p_v, &p_u);
        m
    };

    let var_vec =
        &row_norms_sq(&c31) * sigma_y_sq + &row_norms_sq(&c32) * sigma_a_sq;
    let mut var_a = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            var_a[[i, j]] = var_vec[j * n + i];
        }
    }
    let var_u = &row_norms_sq(&c11) * sigma_y_sq + &row_norms_sq(&c12) * sigma_a_sq;
    let var_v = &row_norms_sq(&c21) * sigma_y_sq + &row_norms_sq(&c22) * sigma_a_sq;
    let cov_uv = &c11.dot(&c21.t()) * sigma_y_sq + &c12.dot(&c22.t()) * sigma_a_sq;

    BruteForceCov { var_a, var_u, var_v, cov_uv }
}

/// Literal Kronecker assembly of the two-stage per-entry network variance:
/// sigma_a^2 diag(C32 C32^T) with
/// C32 = (I-P_v) (x) P_u + P_v (x) (I-P_u) + P_v (x) P_u.
pub fn brute_force_two_stage_entry_var(
    u: &Array1<f64>,
    v: &Array1<f64>,
    sigma_a_sq: f64,
) -> Array2<f64> {
    let n = u.len();
    let p_u = vec_projector(u.view());
    let p_v = vec_projector(v.view());
    let o_u = &eye(n) - &p_u;
    let o_v = &eye(n) - &p_v;
    let c32 = &(&kron(&o_v, &p_u) + &kron(&p_v, &o_u)) + &kron(&p_v, &p_u);
    let diag = row_norms_sq(&c32) * sigma_a_sq;
    let mut var = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            var[[i, j]] = diag[j * n + i];
        }
    }
    var
}
