//! The baseline two-stage estimator: leading-SVD centrality extraction
//! followed by OLS on the estimated centralities, plus the closed-form
//! measurement-error bias and rate expressions used as oracles.

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::inference;
use crate::linalg;
use crate::model::{Dataset, UnifiedModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    TwoStage,
    SuperCent,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::TwoStage => "two-stage",
            Method::SuperCent => "supercent",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "two-stage" => Ok(Method::TwoStage),
            "supercent" => Ok(Method::SuperCent),
            other => Err(Error::DegenerateInput(format!("unknown method tag {other:?}"))),
        }
    }
}

/// Estimated model from either estimator. u_hat and v_hat carry the
/// identifiability scale ||.|| = sqrt(n); signs are canonicalized so the
/// largest-|entry| coordinate of u_hat is positive.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub method: Method,
    pub d_hat: f64,
    pub u_hat: Array1<f64>,
    pub v_hat: Array1<f64>,
    pub beta_x_hat: Array1<f64>,
    pub beta_u_hat: f64,
    pub beta_v_hat: f64,
    pub sigma_y_hat_sq: f64,
    pub sigma_a_hat_sq: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn n(&self) -> usize {
        self.u_hat.len()
    }

    /// The denoised network estimate d_hat * u_hat v_hat^T.
    pub fn network_estimate(&self) -> Array2<f64> {
        let n = self.n();
        let mut a = Array2::<f64>::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                a[[i, j]] = self.d_hat * self.u_hat[i] * self.v_hat[j];
            }
        }
        a
    }

    /// Fitted response X beta_x + u_hat beta_u + v_hat beta_v.
    pub fn fitted_response(&self, x: ArrayView2<f64>) -> Array1<f64> {
        let mut y = x.dot(&self.beta_x_hat);
        for i in 0..self.n() {
            y[i] += self.beta_u_hat * self.u_hat[i] + self.beta_v_hat * self.v_hat[i];
        }
        y
    }
}

/// Build the augmented design W = (X, u, v).
pub(crate) fn augmented_design(
    x: ArrayView2<f64>,
    u: &Array1<f64>,
    v: &Array1<f64>,
) -> Array2<f64> {
    let n = x.nrows();
    let p = x.ncols();
    let mut w = Array2::<f64>::zeros((n, p + 2));
    for i in 0..n {
        for j in 0..p {
            w[[i, j]] = x[[i, j]];
        }
        w[[i, p]] = u[i];
        w[[i, p + 1]] = v[i];
    }
    w
}

/// Make the largest-|entry| coordinate of u_hat positive. Because only the
/// product u_hat v_hat^T is identified (d_hat > 0 fixed), u_hat and v_hat
/// flip together, and beta_u, beta_v flip in tandem so u_hat * beta_u and
/// v_hat * beta_v are unchanged.
pub fn align_signs(mut fit: FitResult) -> FitResult {
    let mut idx = 0;
    for (i, e) in fit.u_hat.iter().enumerate() {
        if e.abs() > fit.u_hat[idx].abs() {
            idx = i;
        }
    }
    if fit.u_hat[idx] < 0.0 {
        fit.u_hat.mapv_inplace(|e| -e);
        fit.v_hat.mapv_inplace(|e| -e);
        fit.beta_u_hat = -fit.beta_u_hat;
        fit.beta_v_hat = -fit.beta_v_hat;
    }
    fit
}

/// Fit by SVD then OLS. d_hat is the leading singular value divided by n so
/// that A ~ d_hat u_hat v_hat^T on the sqrt(n) scale.
pub fn fit_two_stage(data: &Dataset, svd_tol: f64, svd_max_iter: usize) -> Result<FitResult> {
    let n = data.n();
    let p = data.p();
    let triple = linalg::leading_singular_triple(data.a.view(), svd_tol, svd_max_iter)?;
    if triple.d <= 0.0 {
        return Err(Error::DegenerateNetwork);
    }
    let sqrt_n = (n as f64).sqrt();
    let u_hat = &triple.u * sqrt_n;
    let v_hat = &triple.v * sqrt_n;
    let d_hat = triple.d / n as f64;

    let w = augmented_design(data.x.view(), &u_hat, &v_hat);
    let beta = linalg::ols_fit(w.view(), data.y.view())?;
    let beta_x_hat = beta.slice(ndarray::s![..p]).to_owned();
    let beta_u_hat = beta[p];
    let beta_v_hat = beta[p + 1];

    let resid = &data.y - &w.dot(&beta);
    let sigma_y_hat_sq = resid.dot(&resid) / (n - p - 2) as f64;

    let mut a_resid_sq = 0.0;
    for i in 0..n {
        for j in 0..n {
            let r = data.a[[i, j]] - d_hat * u_hat[i] * v_hat[j];
            a_resid_sq += r * r;
        }
    }
    let sigma_a_hat_sq = a_resid_sq / (n as f64 * n as f64);

    Ok(align_signs(FitResult {
        method: Method::TwoStage,
        d_hat,
        u_hat,
        v_hat,
        beta_x_hat,
        beta_u_hat,
        beta_v_hat,
        sigma_y_hat_sq,
        sigma_a_hat_sq,
        iterations: triple.iterations,
        converged: true,
    }))
}

/// Probability limits of the two-stage centrality coefficients when the
/// network noise does not vanish: with kappa = sigma_a^2/(d^2 n) and
/// rho = cor(u, v),
///   plim beta_u_hat = ((1 + kappa - rho^2) beta_u + kappa rho beta_v)
///                     / ((1 + kappa)^2 - rho^2),
/// and symmetrically for beta_v.
pub fn plim_bias(beta_u: f64, beta_v: f64, rho: f64, kappa: f64) -> Result<(f64, f64)> {
    if kappa < 0.0 {
        return Err(Error::DegenerateInput("kappa must be nonnegative".into()));
    }
    if rho.abs() >= 1.0 {
        return Err(Error::DegenerateInput("|rho| must be < 1".into()));
    }
    let denom = (1.0 + kappa) * (1.0 + kappa) - rho * rho;
    if denom == 0.0 {
        return Err(Error::DegenerateInput("(1 + kappa)^2 equals rho^2".into()));
    }
    let num_u = (1.0 + kappa - rho * rho) * beta_u + kappa * rho * beta_v;
    let num_v = (1.0 + kappa - rho * rho) * beta_v + kappa * rho * beta_u;
    Ok((num_u / denom, num_v / denom))
}

/// Leading-term theoretical losses for the two-stage estimator in the
/// consistent regime.
#[derive(Debug, Clone, Copy)]
pub struct RateOracle {
    /// E ||u_hat - u||^2 / n
    pub mse_u: f64,
    /// E ||v_hat - v||^2 / n
    pub mse_v: f64,
    /// E ||A_hat - A_0||_F^2 / ||A_0||_F^2
    pub mse_a_rel: f64,
    /// Var(beta_u_hat)
    pub var_bu: f64,
    /// Var(beta_v_hat)
    pub var_bv: f64,
}

/// Evaluate the two-stage rate expressions at the true parameters. X is the
/// realized fixed design (needed for the projected centralities in the
/// coefficient variances).
pub fn two_stage_rate_oracle(
    params: &UnifiedModelParams,
    x: ArrayView2<f64>,
) -> Result<RateOracle> {
    params.validate()?;
    let n = params.n as f64;
    let d2 = params.d * params.d;
    let sa2 = params.sigma_a * params.sigma_a;
    let mse_u = sa2 * (n - 1.0) / (d2 * n * n);
    let mse_a_rel = sa2 * (2.0 * n - 1.0) / (d2 * n * n);
    let se = inference::se_beta_closed_form(
        params.u.view(),
        params.v.view(),
        x,
        params.beta_u,
        params.beta_v,
        params.d,
        params.sigma_y * params.sigma_y,
        sa2,
    )?;
    Ok(RateOracle {
        mse_u,
        mse_v: mse_u,
        mse_a_rel,
        var_bu: se.se_bu * se.se_bu,
        var_bv: se.se_bv * se.se_bv,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive_stream, generate_dataset, toy_config};

    fn small_noiseless() -> (UnifiedModelParams, Dataset) {
        let mut cfg = toy_config();
        cfg.n = 48;
        cfg.sigma_a = 0.0;
        cfg.sigma_y = 0.0;
        let mut rng = derive_stream(2, 0, 0);
        let params = cfg.realize(&mut rng).unwrap();
        let data = generate_dataset(&params, &mut rng).unwrap();
        (params, data)
    }

    #[test]
    fn noiseless_recovery() {
        let (params, data) = small_noiseless();
        let fit = fit_two_stage(&data, 1e-12, 100_000).unwrap();
        // Orient the fit to the truth (joint flip only).
        let sign = if fit.u_hat.dot(&params.u) + fit.v_hat.dot(&params.v) < 0.0 {
            -1.0
        } else {
            1.0
        };
        assert!((fit.d_hat - params.d).abs() < 1e-8);
        for i in 0..params.n {
            assert!((sign * fit.u_hat[i] - params.u[i]).abs() < 1e-8);
            assert!((sign * fit.v_hat[i] - params.v[i]).abs() < 1e-8);
        }
        assert!((sign * fit.beta_u_hat - params.beta_u).abs() < 1e-8);
        assert!((sign * fit.beta_v_hat - params.beta_v).abs() < 1e-8);
        for k in 0..params.p {
            assert!((fit.beta_x_hat[k] - params.beta_x[k]).abs() < 1e-8);
        }
        assert!(fit.sigma_y_hat_sq < 1e-16);
        assert!(fit.sigma_a_hat_sq < 1e-16);
    }

    #[test]
    fn residuals_orthogonal_and_d_consistent() {
        let mut cfg = toy_config();
        cfg.n = 64;
        cfg.sigma_a = 0.5;
        cfg.sigma_y = 0.5;
        let mut rng = derive_stream(8, 0, 0);
        let params = cfg.realize(&mut rng).unwrap();
        let data = generate_dataset(&params, &mut rng).unwrap();
        let fit = fit_two_stage(&data, 1e-12, 200_000).unwrap();
        let w = augmented_design(data.x.view(), &fit.u_hat, &fit.v_hat);
        let mut beta = fit.beta_x_hat.to_vec();
        beta.push(fit.beta_u_hat);
        beta.push(fit.beta_v_hat);
        let beta = Array1::from_vec(beta);
        let resid = &data.y - &w.dot(&beta);
        let grad = w.t().dot(&resid);
        let ny = linalg::norm2(data.y.view());
        for g in grad.iter() {
            assert!(g.abs() <= 1e-8 * ny);
        }
        // First-order stationarity: d_hat = u_hat^T A v_hat / n^2.
        let n2 = (cfg.n * cfg.n) as f64;
        let d_check = fit.u_hat.dot(&data.a.dot(&fit.v_hat)) / n2;
        assert!((fit.d_hat - d_check).abs() < 1e-10);
    }

    #[test]
    fn align_signs_idempotent_and_product_invariant() {
        let mut rng = derive_stream(14, 0, 0);
        for _ in 0..100 {
            let mut cfg = toy_config();
            cfg.n = 16;
            cfg.sigma_a = 1.0;
            cfg.sigma_y = 1.0;
            let params = cfg.realize(&mut rng).unwrap();
            let data = generate_dataset(&params, &mut rng).unwrap();
            let fit = fit_two_stage(&data, 1e-10, 100_000).unwrap();

            // Flipping both (u_hat, beta_u) and (v_hat, beta_v) then
            // re-canonicalizing gives the identical result.
            let mut flipped = fit.clone();
            flipped.u_hat.mapv_inplace(|e| -e);
            flipped.v_hat.mapv_inplace(|e| -e);
            flipped.beta_u_hat = -flipped.beta_u_hat;
            flipped.beta_v_hat = -flipped.beta_v_hat;
            let re = align_signs(flipped);
            assert_eq!(re.u_hat, fit.u_hat);
            assert_eq!(re.beta_u_hat, fit.beta_u_hat);
            assert_eq!(re.v_hat, fit.v_hat);
            assert_eq!(re.beta_v_hat, fit.beta_v_hat);

            // Canonicalization is idempotent.
            let again = align_signs(fit.clone());
            assert_eq!(again.u_hat, fit.u_hat);

            // d u v^T is invariant by construction.
            let prod = fit.network_estimate();
            let prod2 = again.network_estimate();
            assert_eq!(prod, prod2);
        }
    }

    #[test]
    fn plim_special_cases() {
        // kappa = 0: no bias.
        let (bu, bv) = plim_bias(16.0, 1.0, 0.4, 0.0).unwrap();
        assert!((bu - 16.0).abs() < 1e-12);
        assert!((bv - 1.0).abs() < 1e-12);
        // rho = 0: attenuation by 1/(1 + kappa).
        let (bu, bv) = plim_bias(16.0, 1.0, 0.0, 0.25).unwrap();
        assert!((bu - 16.0 / 1.25).abs() < 1e-12);
        assert!((bv - 1.0 / 1.25).abs() < 1e-12);
        // Toy inconsistent point: attenuated beta_u, inflated beta_v.
        let rho = 0.5 / (1.25f64).sqrt();
        let (bu, bv) = plim_bias(16.0, 1.0, rho, 0.0625).unwrap();
        assert!((bu - 14.886).abs() < 5e-3, "plim_bu = {bu}");
        assert!(bv > 1.0);
    }

    #[test]
    fn rate_oracle_zero_noise() {
        let (params, data) = small_noiseless();
        let r = two_stage_rate_oracle(&params, data.x.view()).unwrap();
        assert_eq!(r.mse_u, 0.0);
        assert_eq!(r.mse_v, 0.0);
        assert_eq!(r.mse_a_rel, 0.0);
        assert_eq!(r.var_bu, 0.0);
        assert_eq!(r.var_bv, 0.0);
    }

    #[test]
    fn rate_oracle_arithmetic() {
        let mut cfg = toy_config();
        cfg.sigma_a = 0.25;
        let mut rng = derive_stream(4, 0, 0);
        let params = cfg.realize(&mut rng).unwrap();
        let r_u = params.sigma_a.powi(2) * 255.0 / (256.0 * 256.0);
        let data = generate_dataset(&params, &mut rng).unwrap();
        let r = two_stage_rate_oracle(&params, data.x.view()).unwrap();
        assert!((r.mse_u - r_u).abs() < 1e-15);
        assert!((r_u - 2.43e-4).abs() < 1e-6);
    }

    #[test]
    fn sigma_y_overestimated_in_inconsistent_regime() {
        // kappa = 2^-4 and beta_u = 4: the two-stage residual variance
        // estimate exceeds sigma_y^2 on average.
        let mut cfg = toy_config();
        cfg.n = 128;
        cfg.beta_u = 4.0;
        cfg.sigma_y = 0.25;
        cfg.sigma_a = ((2.0f64).powi(-4) * 128.0).sqrt();
        let mut total = 0.0;
        let reps = 60;
        for rep in 0..reps {
            let mut rng = derive_stream(31, 0, rep);
            let params = cfg.realize(&mut rng).unwrap();
            let data = generate_dataset(&params, &mut rng).unwrap();
            let fit = fit_two_stage(&data, 1e-10, 200_000).unwrap();
            total += fit.sigma_y_hat_sq;
        }
        let mean = total / reps as f64;
        assert!(
            mean > cfg.sigma_y * cfg.sigma_y,
            "mean sigma_y_hat_sq = {mean} not above {}",
            cfg.sigma_y * cfg.sigma_y
        );
    }

    #[test]
    fn zero_network_errors() {
        let n = 12;
        let a = Array2::<f64>::zeros((n, n));
        let mut x = Array2::<f64>::zeros((n, 1));
        for i in 0..n {
            x[[i, 0]] = 1.0;
        }
        let y = Array1::zeros(n);
        let data = Dataset::new(a, x, y).unwrap();
        assert!(matches!(
            fit_two_stage(&data, 1e-10, 1000),
            Err(Error::DegenerateNetwork)
        ));
    }
}
