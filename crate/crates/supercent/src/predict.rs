//! Out-of-sample centrality estimation from an augmented network and
//! response prediction for new nodes.
//!
//! New-node centralities come from the leading singular vectors of the full
//! augmented network: signs are matched against the fitted training
//! centralities, the new-node coordinates are sliced out, and both slices
//! are rescaled by sqrt(n_train) / ||training slice|| so they live on the
//! same scale as the training fit.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg;
use crate::two_stage::FitResult;

/// Training network plus new nodes: rows/columns 0..n_train are the
/// training block, the rest are new.
#[derive(Debug, Clone)]
pub struct AugmentedNetwork {
    pub a_all: Array2<f64>,
    pub n_train: usize,
    pub n_new: usize,
}

impl AugmentedNetwork {
    pub fn new(a_all: Array2<f64>, n_train: usize) -> Result<Self> {
        let total = a_all.nrows();
        if a_all.ncols() != total {
            return Err(Error::DimensionMismatch("augmented network must be square".into()));
        }
        if n_train < 2 || n_train >= total {
            return Err(Error::DegenerateInput(format!(
                "need 2 <= n_train < total ({n_train} of {total})"
            )));
        }
        if a_all.iter().any(|e| !e.is_finite()) {
            return Err(Error::DegenerateInput("non-finite entry in augmented network".into()));
        }
        Ok(AugmentedNetwork { a_all, n_train, n_new: total - n_train })
    }
}

/// Shared slice/sign/rescale step: given the leading singular vectors of the
/// full network (any nonzero scale), orient them against the fitted training
/// centralities and return the rescaled entries at `val_idx`.
pub(crate) fn slice_and_rescale(
    u_all: &Array1<f64>,
    v_all: &Array1<f64>,
    train_idx: &[usize],
    val_idx: &[usize],
    u_ref: ArrayView1<f64>,
    v_ref: ArrayView1<f64>,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let n_train = train_idx.len();
    if u_ref.len() != n_train || v_ref.len() != n_train {
        return Err(Error::DimensionMismatch(
            "reference centralities must have one entry per training node".into(),
        ));
    }
    let mut dot_u = 0.0;
    let mut dot_v = 0.0;
    let mut norm_u_tr = 0.0;
    let mut norm_v_tr = 0.0;
    for (k, &i) in train_idx.iter().enumerate() {
        dot_u += u_ref[k] * u_all[i];
        dot_v += v_ref[k] * v_all[i];
        norm_u_tr += u_all[i] * u_all[i];
        norm_v_tr += v_all[i] * v_all[i];
    }
    if dot_u == 0.0 || dot_v == 0.0 {
        return Err(Error::SignAmbiguity(
            "training slice is orthogonal to the reference centralities".into(),
        ));
    }
    if norm_u_tr == 0.0 || norm_v_tr == 0.0 {
        return Err(Error::DegenerateInput(
            "training slice of a singular vector is zero".into(),
        ));
    }
    let sqrt_n = (n_train as f64).sqrt();
    let scale_u = dot_u.signum() * sqrt_n / norm_u_tr.sqrt();
    let scale_v = dot_v.signum() * sqrt_n / norm_v_tr.sqrt();
    let u_star = Array1::from_iter(val_idx.iter().map(|&i| scale_u * u_all[i]));
    let v_star = Array1::from_iter(val_idx.iter().map(|&i| scale_v * v_all[i]));
    Ok((u_star, v_star))
}

/// Estimate the new-node centralities from the augmented network.
/// `u_ref`, `v_ref` are the fitted training centralities (length n_train).
pub fn estimate_new_centralities(
    aug: &AugmentedNetwork,
    u_ref: ArrayView1<f64>,
    v_ref: ArrayView1<f64>,
    svd_tol: f64,
    svd_max_iter: usize,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let triple = linalg::leading_singular_triple(aug.a_all.view(), svd_tol, svd_max_iter)?;
    if triple.d <= 0.0 {
        return Err(Error::DegenerateNetwork);
    }
    let train_idx: Vec<usize> = (0..aug.n_train).collect();
    let val_idx: Vec<usize> = (aug.n_train..aug.n_train + aug.n_new).collect();
    slice_and_rescale(&triple.u, &triple.v, &train_idx, &val_idx, u_ref, v_ref)
}

/// y_star = X_star beta_x + u_star beta_u + v_star beta_v.
pub fn predict_response(
    x_star: ArrayView2<f64>,
    u_star: ArrayView1<f64>,
    v_star: ArrayView1<f64>,
    fit: &FitResult,
) -> Result<Array1<f64>> {
    let m = x_star.nrows();
    if x_star.ncols() != fit.beta_x_hat.len() {
        return Err(Error::DimensionMismatch(format!(
            "X_star has {} columns but the fit has {} covariate coefficients",
            x_star.ncols(),
            fit.beta_x_hat.len()
        )));
    }
    if u_star.len() != m || v_star.len() != m {
        return Err(Error::DimensionMismatch(
            "centrality predictions must match X_star rows".into(),
        ));
    }
    let mut y = x_star.dot(&fit.beta_x_hat);
    for i in 0..m {
        y[i] += fit.beta_u_hat * u_star[i] + fit.beta_v_hat * v_star[i];
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::derive_stream;
    use crate::two_stage::Method;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn rank_one_augmented(
        n: usize,
        n_star: usize,
        d: f64,
        sigma: f64,
        seed: u64,
    ) -> (AugmentedNetwork, Array1<f64>, Array1<f64>) {
        let total = n + n_star;
        let mut rng = derive_stream(seed, 0, 0);
        let u_all = Array1::from_iter((0..total).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let v_all = Array1::from_iter((0..total).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let mut a = Array2::<f64>::zeros((total, total));
        for i in 0..total {
            for j in 0..total {
                let noise: f64 = if sigma > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
                a[[i, j]] = d * u_all[i] * v_all[j] + sigma * noise;
            }
        }
        (AugmentedNetwork::new(a, n).unwrap(), u_all, v_all)
    }

    /// Training-scale reference and expected validation slice for a vector.
    fn reference_and_expected(
        z_all: &Array1<f64>,
        n: usize,
    ) -> (Array1<f64>, Array1<f64>) {
        let train = z_all.slice(ndarray::s![..n]).to_owned();
        let factor = (n as f64).sqrt() / linalg::norm2(train.view());
        let z_ref = &train * factor;
        let expected = &z_all.slice(ndarray::s![n..]).to_owned() * factor;
        (z_ref, expected)
    }

    #[test]
    fn exact_rank_one_recovery() {
        let (aug, u_all, v_all) = rank_one_augmented(24, 6, 2.0, 0.0, 1);
        let (u_ref, u_expected) = reference_and_expected(&u_all, 24);
        let (v_ref, v_expected) = reference_and_expected(&v_all, 24);
        let (u_star, v_star) =
            estimate_new_centralities(&aug, u_ref.view(), v_ref.view(), 1e-12, 100_000).unwrap();
        for i in 0..6 {
            assert!((u_star[i] - u_expected[i]).abs() < 1e-8);
            assert!((v_star[i] - v_expected[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn sign_flip_of_svd_output_is_canonicalized() {
        let (_, u_all, v_all) = rank_one_augmented(16, 4, 1.0, 0.0, 2);
        let (u_ref, _) = reference_and_expected(&u_all, 16);
        let (v_ref, _) = reference_and_expected(&v_all, 16);
        let train: Vec<usize> = (0..16).collect();
        let val: Vec<usize> = (16..20).collect();
        let (a1, b1) =
            slice_and_rescale(&u_all, &v_all, &train, &val, u_ref.view(), v_ref.view()).unwrap();
        let neg_u = u_all.mapv(|e| -e);
        let neg_v = v_all.mapv(|e| -e);
        let (a2, b2) =
            slice_and_rescale(&neg_u, &neg_v, &train, &val, u_ref.view(), v_ref.view()).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(b1, b2);
    }

    #[test]
    fn noisy_instance_matches_dense_svd_oracle() {
        let (aug, u_all, v_all) = rank_one_augmented(32, 8, 1.5, 0.05, 3);
        let (u_ref, _) = reference_and_expected(&u_all, 32);
        let (v_ref, _) = reference_and_expected(&v_all, 32);
        let (u_star, v_star) =
            estimate_new_centralities(&aug, u_ref.view(), v_ref.view(), 1e-12, 500_000).unwrap();

        // Dense SVD of A_all, same slice/rescale steps.
        let total = 40;
        let na = nalgebra::DMatrix::from_row_iterator(total, total, aug.a_all.iter().cloned());
        let svd = na.svd(true, true);
        let mut top = 0;
        for i in 0..svd.singular_values.len() {
            if svd.singular_values[i] > svd.singular_values[top] {
                top = i;
            }
        }
        let gu = Array1::from_iter(svd.u.as_ref().unwrap().column(top).iter().cloned());
        let gv = Array1::from_iter(svd.v_t.as_ref().unwrap().row(top).iter().cloned());
        let train: Vec<usize> = (0..32).collect();
        let val: Vec<usize> = (32..40).collect();
        let (ou, ov) =
            slice_and_rescale(&gu, &gv, &train, &val, u_ref.view(), v_ref.view()).unwrap();
        for i in 0..8 {
            assert!((u_star[i] - ou[i]).abs() < 1e-7, "{} vs {}", u_star[i], ou[i]);
            assert!((v_star[i] - ov[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn training_slice_rescale_is_exact() {
        let (aug, u_all, v_all) = rank_one_augmented(20, 5, 1.0, 0.1, 4);
        let (u_ref, _) = reference_and_expected(&u_all, 20);
        let (v_ref, _) = reference_and_expected(&v_all, 20);
        let triple = linalg::leading_singular_triple(aug.a_all.view(), 1e-12, 500_000).unwrap();
        let train: Vec<usize> = (0..20).collect();
        let all: Vec<usize> = (0..25).collect();
        let (u_scaled, _) =
            slice_and_rescale(&triple.u, &triple.v, &train, &all, u_ref.view(), v_ref.view())
                .unwrap();
        let tr_norm: f64 = (0..20).map(|i| u_scaled[i] * u_scaled[i]).sum::<f64>().sqrt();
        assert!((tr_norm - (20.0f64).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn new_node_permutation_equivariance() {
        let (aug, u_all, v_all) = rank_one_augmented(16, 4, 1.0, 0.2, 5);
        let (u_ref, _) = reference_and_expected(&u_all, 16);
        let (v_ref, _) = reference_and_expected(&v_all, 16);
        let (u_star, v_star) =
            estimate_new_centralities(&aug, u_ref.view(), v_ref.view(), 1e-12, 500_000).unwrap();

        // Swap the order of the last two new nodes in the augmented matrix.
        let perm = [16usize, 17, 19, 18];
        let total = 20;
        let mut a2 = Array2::<f64>::zeros((total, total));
        let full_perm: Vec<usize> = (0..16).chain(perm.iter().cloned()).collect();
        for (i2, &i) in full_perm.iter().enumerate() {
            for (j2, &j) in full_perm.iter().enumerate() {
                a2[[i2, j2]] = aug.a_all[[i, j]];
            }
        }
        let aug2 = AugmentedNetwork::new(a2, 16).unwrap();
        let (u2, v2) =
            estimate_new_centralities(&aug2, u_ref.view(), v_ref.view(), 1e-12, 500_000).unwrap();
        let expect = |z: &Array1<f64>, k: usize| z[perm[k] - 16];
        for k in 0..4 {
            assert!((u2[k] - expect(&u_star, k)).abs() < 1e-9);
            assert!((v2[k] - expect(&v_star, k)).abs() < 1e-9);
        }
    }

    #[test]
    fn response_prediction_cases() {
        let fit = FitResult {
            method: Method::TwoStage,
            d_hat: 1.0,
            u_hat: Array1::zeros(4),
            v_hat: Array1::zeros(4),
            beta_x_hat: Array1::from_vec(vec![2.0, -1.0]),
            beta_u_hat: 3.0,
            beta_v_hat: 0.5,
            sigma_y_hat_sq: 0.0,
            sigma_a_hat_sq: 0.0,
            iterations: 0,
            converged: true,
        };
        let x_star = ndarray::array![[1.0, 1.0], [1.0, 2.0]];
        let u_star = ndarray::array![1.0, -1.0];
        let v_star = ndarray::array![0.0, 2.0];
        let y = predict_response(x_star.view(), u_star.view(), v_star.view(), &fit).unwrap();
        assert!((y[0] - (2.0 - 1.0 + 3.0)).abs() < 1e-14);
        assert!((y[1] - (2.0 - 2.0 - 3.0 + 1.0)).abs() < 1e-14);

        // Zero coefficients give the zero vector.
        let mut fit0 = fit.clone();
        fit0.beta_x_hat = Array1::zeros(2);
        fit0.beta_u_hat = 0.0;
        fit0.beta_v_hat = 0.0;
        let y0 = predict_response(x_star.view(), u_star.view(), v_star.view(), &fit0).unwrap();
        assert!(y0.iter().all(|e| *e == 0.0));

        // Zero centralities leave X_star beta_x.
        let z = Array1::zeros(2);
        let yx = predict_response(x_star.view(), z.view(), z.view(), &fit).unwrap();
        assert!((yx[0] - 1.0).abs() < 1e-14);
        assert!((yx[1] - 0.0).abs() < 1e-14);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let fit = FitResult {
            method: Method::TwoStage,
            d_hat: 1.0,
            u_hat: Array1::zeros(4),
            v_hat: Array1::zeros(4),
            beta_x_hat: Array1::from_vec(vec![2.0]),
            beta_u_hat: 0.0,
            beta_v_hat: 0.0,
            sigma_y_hat_sq: 0.0,
            sigma_a_hat_sq: 0.0,
            iterations: 0,
            converged: true,
        };
        let x_star = ndarray::array![[1.0, 1.0]];
        let u_star = ndarray::array![1.0];
        assert!(predict_response(x_star.view(), u_star.view(), u_star.view(), &fit).is_err());
    }
}
