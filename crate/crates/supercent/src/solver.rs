//! The SuperCENT solver: joint estimation of the rank-one network structure
//! and the regression coefficients by block coordinate descent on
//!
//!   (1/n) ||y - X b_x - u b_u - v b_v||^2 + (lambda/n^2) ||A - d u v^T||_F^2
//!
//! with ||u|| = ||v|| = sqrt(n), together with the symmetric (eigenvector
//! centrality) variant and tuning-parameter selection (oracle, plug-in, and
//! K-fold cross-validation).

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Dataset, RngStream, UnifiedModelParams};
use crate::predict;
use crate::two_stage::{align_signs, augmented_design, FitResult, Method};

/// Solver controls. `tol_rho` bounds the spectral-norm change of the
/// rank-one projectors P_u, P_v between sweeps (equal to the sine of the
/// angle between successive iterates).
#[derive(Debug, Clone, Copy)]
pub struct SolverSettings {
    pub lambda: f64,
    pub tol_rho: f64,
    pub max_iter: usize,
    pub record_trace: bool,
}

impl SolverSettings {
    pub fn new(lambda: f64) -> Self {
        SolverSettings { lambda, tol_rho: 1e-4, max_iter: 1000, record_trace: false }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::DegenerateInput(format!(
                "lambda must be positive, got {}",
                self.lambda
            )));
        }
        if !(self.tol_rho > 0.0) {
            return Err(Error::DegenerateInput("tol_rho must be positive".into()));
        }
        Ok(())
    }
}

/// Initialization triple on the sqrt(n) scale, normally the two-stage first
/// stage (leading SVD of A).
#[derive(Debug, Clone)]
pub struct SolverInit {
    pub d: f64,
    pub u: Array1<f64>,
    pub v: Array1<f64>,
}

impl SolverInit {
    pub fn from_svd(a: ArrayView2<f64>, tol: f64, max_iter: usize) -> Result<Self> {
        let n = a.nrows();
        let triple = linalg::leading_singular_triple(a, tol, max_iter)?;
        if triple.d <= 0.0 {
            return Err(Error::DegenerateNetwork);
        }
        let sqrt_n = (n as f64).sqrt();
        Ok(SolverInit {
            d: triple.d / n as f64,
            u: &triple.u * sqrt_n,
            v: &triple.v * sqrt_n,
        })
    }
}

/// Fit plus the objective trace (one value per sweep, starting with the
/// objective at initialization; empty unless `record_trace` is set).
#[derive(Debug, Clone)]
pub struct SolverOutcome {
    pub fit: FitResult,
    pub objective_trace: Vec<f64>,
}

/// The joint objective of the method, evaluated at arbitrary parameters.
pub fn supercent_objective(
    data: &Dataset,
    d: f64,
    u: &Array1<f64>,
    v: &Array1<f64>,
    beta_x: &Array1<f64>,
    beta_u: f64,
    beta_v: f64,
    lambda: f64,
) -> f64 {
    let n = data.n() as f64;
    let mut resid = &data.y - &data.x.dot(beta_x);
    for i in 0..data.n() {
        resid[i] -= beta_u * u[i] + beta_v * v[i];
    }
    let rss = resid.dot(&resid);
    let mut frob = 0.0;
    for i in 0..data.n() {
        for j in 0..data.n() {
            let r = data.a[[i, j]] - d * u[i] * v[j];
            frob += r * r;
        }
    }
    rss / n + lambda * frob / (n * n)
}

/// Fit SuperCENT by block updates in the fixed order
/// beta -> d -> u (renormalized) -> v (renormalized), stopping when the
/// larger of the two projector changes drops to `tol_rho`. A `max_iter`
/// overrun returns the last iterate with `converged = false` rather than an
/// error, so harness runs always complete.
pub fn fit_supercent(
    data: &Dataset,
    settings: &SolverSettings,
    init: Option<&SolverInit>,
) -> Result<SolverOutcome> {
    settings.validate()?;
    let n = data.n();
    let p = data.p();
    let nf = n as f64;
    let sqrt_n = nf.sqrt();
    let lambda = settings.lambda;

    let owned_init;
    let init = match init {
        Some(i) => i,
        None => {
            owned_init = SolverInit::from_svd(data.a.view(), 1e-10, 100_000)?;
            &owned_init
        }
    };
    let mut u = init.u.clone();
    let mut v = init.v.clone();
    let mut d = init.d;

    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    for t in 1..=settings.max_iter {
        // beta update: OLS on (X, u, v).
        let w = augmented_design(data.x.view(), &u, &v);
        let beta = linalg::ols_fit(w.view(), data.y.view())?;
        let beta_x = beta.slice(ndarray::s![..p]).to_owned();
        let beta_u = beta[p];
        let beta_v = beta[p + 1];

        if settings.record_trace && t == 1 {
            trace.push(supercent_objective(data, d, &u, &v, &beta_x, beta_u, beta_v, lambda));
        }

        // d update.
        let av = data.a.dot(&v);
        d = u.dot(&av) / (nf * nf);

        let denom_u = beta_u * beta_u + lambda * d * d;
        if denom_u == 0.0 {
            return Err(Error::DegenerateUpdate(
                "beta_u^2 + lambda d^2 vanished in the u update".into(),
            ));
        }

        // u update, then renormalize to sqrt(n).
        let base = &data.y - &data.x.dot(&beta_x);
        let mut u_new = Array1::<f64>::zeros(n);
        for i in 0..n {
            u_new[i] = (beta_u * (base[i] - beta_v * v[i]) + lambda * d * av[i] / nf) / denom_u;
        }
        let nu = linalg::norm2(u_new.view());
        if nu == 0.0 {
            return Err(Error::DegenerateUpdate("u update collapsed to zero".into()));
        }
        u_new.mapv_inplace(|e| e * sqrt_n / nu);

        let denom_v = beta_v * beta_v + lambda * d * d;
        if denom_v == 0.0 {
            return Err(Error::DegenerateUpdate(
                "beta_v^2 + lambda d^2 vanished in the v update".into(),
            ));
        }

        // v update with the freshly updated u, then renormalize.
        let atu = data.a.t().dot(&u_new);
        let mut v_new = Array1::<f64>::zeros(n);
        for i in 0..n {
            v_new[i] =
                (beta_v * (base[i] - beta_u * u_new[i]) + lambda * d * atu[i] / nf) / denom_v;
        }
        let nv = linalg::norm2(v_new.view());
        if nv == 0.0 {
            return Err(Error::DegenerateUpdate("v update collapsed to zero".into()));
        }
        v_new.mapv_inplace(|e| e * sqrt_n / nv);

        let change = linalg::sin_angle(u_new.view(), u.view())
            .max(linalg::sin_angle(v_new.view(), v.view()));
        u = u_new;
        v = v_new;
        iterations = t;

        if settings.record_trace {
            trace.push(supercent_objective(data, d, &u, &v, &beta_x, beta_u, beta_v, lambda));
        }

        if change <= settings.tol_rho {
            converged = true;
            break;
        }
    }

    // Refresh beta and the noise estimates at the final (u, v).
    let w = augmented_design(data.x.view(), &u, &v);
    let beta = linalg::ols_fit(w.view(), data.y.view())?;
    let beta_x_hat = beta.slice(ndarray::s![..p]).to_owned();
    let beta_u_hat = beta[p];
    let beta_v_hat = beta[p + 1];
    let resid = &data.y - &w.dot(&beta);
    let sigma_y_hat_sq = resid.dot(&resid) / (n - p - 2) as f64;
    let mut a_resid_sq = 0.0;
    for i in 0..n {
        for j in 0..n {
            let r = data.a[[i, j]] - d * u[i] * v[j];
            a_resid_sq += r * r;
        }
    }
    let sigma_a_hat_sq = a_resid_sq / (nf * nf);

    let fit = align_signs(FitResult {
        method: Method::SuperCent,
        d_hat: d,
        u_hat: u,
        v_hat: v,
        beta_x_hat,
        beta_u_hat,
        beta_v_hat,
        sigma_y_hat_sq,
        sigma_a_hat_sq,
        iterations,
        converged,
    });
    Ok(SolverOutcome { fit, objective_trace: trace })
}

/// Relative residuals of the five stationarity relations at a fit:
/// the OLS normal equations, the d identity, collinearity of u and v with
/// their unnormalized update targets, and the norm constraints.
pub fn stationarity_residuals(data: &Dataset, fit: &FitResult, lambda: f64) -> [f64; 5] {
    let n = data.n() as f64;
    let w = augmented_design(data.x.view(), &fit.u_hat, &fit.v_hat);
    let mut beta = fit.beta_x_hat.to_vec();
    beta.push(fit.beta_u_hat);
    beta.push(fit.beta_v_hat);
    let beta = Array1::from_vec(beta);
    let resid = &data.y - &w.dot(&beta);
    let grad = w.t().dot(&resid);
    let r_beta = linalg::norm2(grad.view()) / linalg::norm2(data.y.view()).max(1e-300);

    let av = data.a.dot(&fit.v_hat);
    let d_target = fit.u_hat.dot(&av) / (n * n);
    let r_d = (fit.d_hat - d_target).abs() / fit.d_hat.abs().max(1e-300);

    let base = &data.y - &data.x.dot(&fit.beta_x_hat);
    let mut u_target = Array1::<f64>::zeros(data.n());
    for i in 0..data.n() {
        u_target[i] = fit.beta_u_hat * (base[i] - fit.beta_v_hat * fit.v_hat[i])
            + lambda * fit.d_hat * av[i] / n;
    }
    let r_u = linalg::sin_angle(u_target.view(), fit.u_hat.view());

    let atu = data.a.t().dot(&fit.u_hat);
    let mut v_target = Array1::<f64>::zeros(data.n());
    for i in 0..data.n() {
        v_target[i] = fit.beta_v_hat * (base[i] - fit.beta_u_hat * fit.u_hat[i])
            + lambda * fit.d_hat * atu[i] / n;
    }
    let r_v = linalg::sin_angle(v_target.view(), fit.v_hat.view());

    let nu = fit.u_hat.dot(&fit.u_hat);
    let nv = fit.v_hat.dot(&fit.v_hat);
    let r_norm = ((nu - n).abs() / n).max((nv - n).abs() / n);

    [r_beta, r_d, r_u, r_v, r_norm]
}

/// Maximize b'c + (1/2) sum_i h_i c_i^2 over ||c||^2 = n_target: the
/// sphere-constrained quadratic subproblem in a diagonalizing basis. The
/// solution is c_i = b_i / (gamma - h_i) with the multiplier gamma above
/// max(h_i) fixed by the norm constraint (top-eigendirection mass is added
/// directly in the degenerate case where b has none).
fn sphere_quadratic_max(b: &Array1<f64>, h: &Array1<f64>, n_target: f64) -> Array1<f64> {
    let n = b.len();
    let hmax = h.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let top = (0..n).find(|&i| h[i] == hmax).unwrap();
    let scale = h.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1.0);
    let near_top = |i: usize| hmax - h[i] <= 1e-13 * scale;

    let norm_b = b.dot(b).sqrt();
    if norm_b == 0.0 {
        let mut c = Array1::<f64>::zeros(n);
        c[top] = n_target.sqrt();
        return c;
    }

    let phi = |gamma: f64| -> f64 {
        let mut acc = 0.0;
        for i in 0..n {
            let r = b[i] / (gamma - h[i]);
            acc += r * r;
        }
        acc
    };

    // Mass on the top eigendirections bounds the root away from hmax; if
    // there is none the boundary solution needs an explicit top component.
    let eps = 1e-12 * scale;
    let lo = hmax + eps;
    if phi(lo) < n_target {
        let mut c = Array1::<f64>::zeros(n);
        let mut partial = 0.0;
        for i in 0..n {
            if !near_top(i) {
                c[i] = b[i] / (hmax - h[i]);
                partial += c[i] * c[i];
            }
        }
        if partial < n_target {
            c[top] = (n_target - partial).sqrt();
            return c;
        }
        // phi(lo) was truncated by the epsilon offset; fall through and
        // bisect from lo anyway.
    }
    let mut lo = lo;
    let mut hi = hmax + norm_b / n_target.sqrt() + eps;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) > n_target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
            break;
        }
    }
    let gamma = 0.5 * (lo + hi);
    Array1::from_iter((0..n).map(|i| b[i] / (gamma - h[i])))
}

/// Symmetric-network variant (eigenvector centrality): the model drops v,
/// and each u update solves the sphere-constrained quadratic subproblem
/// exactly in the eigenbasis of A (one eigendecomposition per fit), so the
/// objective decreases at every sweep. The returned fit aliases v_hat to
/// u_hat with beta_v_hat = 0.
pub fn fit_supercent_symmetric(data: &Dataset, settings: &SolverSettings) -> Result<SolverOutcome> {
    settings.validate()?;
    linalg::check_symmetric(data.a.view())?;
    let n = data.n();
    let p = data.p();
    let nf = n as f64;
    let sqrt_n = nf.sqrt();
    let lambda = settings.lambda;

    let (eigvals, eigvecs) = linalg::jacobi_eigh(data.a.view());
    let mut top = 0;
    for i in 0..n {
        if eigvals[i].abs() > eigvals[top].abs() {
            top = i;
        }
    }
    if eigvals[top] == 0.0 {
        return Err(Error::DegenerateNetwork);
    }
    let mut u = eigvecs.column(top).to_owned() * sqrt_n;
    let mut d = eigvals[top] / nf;

    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    let sym_objective = |d: f64, u: &Array1<f64>, beta_x: &Array1<f64>, beta_u: f64| {
        let mut resid = &data.y - &data.x.dot(beta_x);
        for i in 0..n {
            resid[i] -= beta_u * u[i];
        }
        let rss = resid.dot(&resid);
        let mut frob = 0.0;
        for i in 0..n {
            for j in 0..n {
                let r = data.a[[i, j]] - d * u[i] * u[j];
                frob += r * r;
            }
        }
        rss / nf + lambda * frob / (nf * nf)
    };

    for t in 1..=settings.max_iter {
        let mut w = Array2::<f64>::zeros((n, p + 1));
        for i in 0..n {
            for j in 0..p {
                w[[i, j]] = data.x[[i, j]];
            }
            w[[i, p]] = u[i];
        }
        let beta = linalg::ols_fit(w.view(), data.y.view())?;
        let beta_x = beta.slice(ndarray::s![..p]).to_owned();
        let beta_u = beta[p];

        if settings.record_trace && t == 1 {
            trace.push(sym_objective(d, &u, &beta_x, beta_u));
        }

        let au = data.a.dot(&u);
        d = u.dot(&au) / (nf * nf);

        // On the sphere ||u||^2 = n the objective in u reduces (up to
        // constants) to -(2/n) [beta_u r'u + (lambda d / n) u'A u] with
        // r = y - X beta_x; maximize that exactly in the eigenbasis.
        let r = (&data.y - &data.x.dot(&beta_x)) * beta_u;
        let b = eigvecs.t().dot(&r);
        let h = eigvals.mapv(|mu| 2.0 * lambda * d * mu / nf);
        let c = sphere_quadratic_max(&b, &h, nf);
        let mut u_new = eigvecs.dot(&c);
        let nu = linalg::norm2(u_new.view());
        if nu == 0.0 {
            return Err(Error::DegenerateUpdate("u update collapsed to zero".into()));
        }
        u_new.mapv_inplace(|e| e * sqrt_n / nu);

        let change = linalg::sin_angle(u_new.view(), u.view());
        u = u_new;
        iterations = t;

        if settings.record_trace {
            trace.push(sym_objective(d, &u, &beta_x, beta_u));
        }
        if change <= settings.tol_rho {
            converged = true;
            break;
        }
    }

    let mut w = Array2::<f64>::zeros((n, p + 1));
    for i in 0..n {
        for j in 0..p {
            w[[i, j]] = data.x[[i, j]];
        }
        w[[i, p]] = u[i];
    }
    let beta = linalg::ols_fit(w.view(), data.y.view())?;
    let beta_x_hat = beta.slice(ndarray::s![..p]).to_owned();
    let beta_u_hat = beta[p];
    let resid = &data.y - &w.dot(&beta);
    let sigma_y_hat_sq = resid.dot(&resid) / (n - p - 1) as f64;
    let au = data.a.dot(&u);
    d = u.dot(&au) / (nf * nf);
    let mut a_resid_sq = 0.0;
    for i in 0..n {
        for j in 0..n {
            let r = data.a[[i, j]] - d * u[i] * u[j];
            a_resid_sq += r * r;
        }
    }
    let sigma_a_hat_sq = a_resid_sq / (nf * nf);

    let fit = align_signs(FitResult {
        method: Method::SuperCent,
        d_hat: d,
        v_hat: u.clone(),
        u_hat: u,
        beta_x_hat,
        beta_u_hat,
        beta_v_hat: 0.0,
        sigma_y_hat_sq,
        sigma_a_hat_sq,
        iterations,
        converged,
    });
    Ok(SolverOutcome { fit, objective_trace: trace })
}

/// Oracle tuning value lambda_0 = n sigma_y^2 / sigma_a^2.
pub fn lambda_oracle(params: &UnifiedModelParams) -> Result<f64> {
    if params.sigma_a == 0.0 {
        return Err(Error::InfiniteLambda);
    }
    Ok(params.n as f64 * params.sigma_y * params.sigma_y
        / (params.sigma_a * params.sigma_a))
}

/// Plug-in estimate n * sigma_y_hat^2 / sigma_a_hat^2 from a two-stage fit.
pub fn lambda_plugin(ts_fit: &FitResult) -> Result<f64> {
    let n = ts_fit.n() as f64;
    // Guard against a numerically noiseless network, where the plug-in
    // blows up: the scaled ratio sigma_a_hat^2 / (d_hat^2 n) must stay
    // meaningfully above double-precision round-off.
    let kappa_hat = ts_fit.sigma_a_hat_sq / (ts_fit.d_hat * ts_fit.d_hat * n);
    if !kappa_hat.is_finite() || kappa_hat < 1e-15 {
        return Err(Error::DegenerateInput(format!(
            "network residual variance {:.3e} is numerically zero; use the two-stage fit",
            ts_fit.sigma_a_hat_sq
        )));
    }
    Ok(n * ts_fit.sigma_y_hat_sq / ts_fit.sigma_a_hat_sq)
}

/// Scalar core of the two-stage/SuperCENT risk discrepancy, shared with the
/// inference formulas (which plug in estimated parameters).
pub(crate) fn delta_scalar(
    n: f64,
    d: f64,
    beta_u: f64,
    beta_v: f64,
    sigma_a_sq: f64,
    sigma_y_sq: f64,
    lambda: f64,
) -> f64 {
    let d2 = d * d;
    let b2 = beta_u * beta_u + beta_v * beta_v;
    let s = 1.0 / (lambda * d2 + b2);
    s * s * ((2.0 * lambda * d2 + b2) * sigma_a_sq / (d2 * n) - sigma_y_sq)
}

/// The discrepancy between the two-stage and SuperCENT centrality risks:
/// delta = (lambda d^2 + b_u^2 + b_v^2)^{-2}
///         [ (2 lambda d^2 + b_u^2 + b_v^2) sigma_a^2 / (d^2 n) - sigma_y^2 ].
pub fn delta_ts_sc(params: &UnifiedModelParams, lambda: f64) -> f64 {
    delta_scalar(
        params.n as f64,
        params.d,
        params.beta_u,
        params.beta_v,
        params.sigma_a * params.sigma_a,
        params.sigma_y * params.sigma_y,
        lambda,
    )
}

/// Leading-term theoretical losses for SuperCENT at a given lambda.
#[derive(Debug, Clone, Copy)]
pub struct SuperCentRateOracle {
    pub mse_u: f64,
    pub mse_v: f64,
    pub mse_a_rel: f64,
}

pub fn supercent_rate_oracle(params: &UnifiedModelParams, lambda: f64) -> SuperCentRateOracle {
    let n = params.n as f64;
    let d2 = params.d * params.d;
    let sa2 = params.sigma_a * params.sigma_a;
    let delta = delta_ts_sc(params, lambda);
    let dof = (params.n - params.p - 2) as f64 / n;
    let bu2 = params.beta_u * params.beta_u;
    let bv2 = params.beta_v * params.beta_v;
    SuperCentRateOracle {
        mse_u: sa2 * (n - 1.0) / (d2 * n * n) - dof * bu2 * delta,
        mse_v: sa2 * (n - 1.0) / (d2 * n * n) - dof * bv2 * delta,
        mse_a_rel: sa2 * (2.0 * n - 1.0) / (d2 * n * n) - dof * (bu2 + bv2) * delta,
    }
}

/// How the tuning parameter is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaMethod {
    Oracle,
    Plugin,
    Cv,
    Fixed,
}

impl LambdaMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            LambdaMethod::Oracle => "oracle",
            LambdaMethod::Plugin => "plugin",
            LambdaMethod::Cv => "cv",
            LambdaMethod::Fixed => "fixed",
        }
    }
}

/// Cross-validation inputs. The default grid is 21 log-spaced points
/// anchored at the plug-in estimate, lambda_hat * 2^{-5..5}.
#[derive(Debug, Clone)]
pub struct LambdaSelection {
    pub method: LambdaMethod,
    pub grid: Vec<f64>,
    pub k_folds: usize,
}

impl LambdaSelection {
    pub fn cv_with_grid(grid: Vec<f64>) -> Self {
        LambdaSelection { method: LambdaMethod::Cv, grid, k_folds: 10 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::DegenerateInput("lambda grid is empty".into()));
        }
        let mut prev = 0.0;
        for &l in &self.grid {
            if !(l > 0.0) {
                return Err(Error::DegenerateInput("lambda grid must be positive".into()));
            }
            if l <= prev {
                return Err(Error::DegenerateInput(
                    "lambda grid must be strictly increasing".into(),
                ));
            }
            prev = l;
        }
        if self.k_folds < 2 {
            return Err(Error::DegenerateInput("need at least 2 folds".into()));
        }
        Ok(())
    }
}

/// The default 21-point grid anchored at a center value: center * 2^{-5..5}
/// in half-power steps.
pub fn default_lambda_grid(center: f64) -> Vec<f64> {
    (0..21).map(|i| center * (2.0f64).powf(-5.0 + 0.5 * i as f64)).collect()
}

/// Per-node fold assignment for cross-validation.
#[derive(Debug, Clone)]
pub struct CrossSectionSplit {
    pub fold_assignments: Vec<usize>,
    pub k: usize,
}

impl CrossSectionSplit {
    /// Uniform random partition: nodes are shuffled and split into k chunks
    /// whose sizes differ by at most one (remainders spread one per fold).
    pub fn random(n: usize, k: usize, rng: &mut RngStream) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut assignments = vec![0usize; n];
        let base = n / k;
        let extra = n % k;
        let mut pos = 0;
        for fold in 0..k {
            let size = base + usize::from(fold < extra);
            for _ in 0..size {
                assignments[order[pos]] = fold;
                pos += 1;
            }
        }
        CrossSectionSplit { fold_assignments: assignments, k }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        let n = self.fold_assignments.len();
        for fold in 0..self.k {
            let size = self.fold_assignments.iter().filter(|&&f| f == fold).count();
            if size == 0 {
                return Err(Error::DegenerateInput(format!("fold {fold} is empty")));
            }
            if n - size <= p + 2 {
                return Err(Error::DegenerateInput(format!(
                    "training side of fold {fold} has only {} rows",
                    n - size
                )));
            }
        }
        Ok(())
    }

    pub fn fold_indices(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut val = Vec::new();
        for (i, &f) in self.fold_assignments.iter().enumerate() {
            if f == fold {
                val.push(i);
            } else {
                train.push(i);
            }
        }
        (train, val)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellStatus {
    Ok,
    Failed,
}

impl CellStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::Failed => "failed",
        }
    }
}

/// One (lambda, fold) cross-validation cell.
#[derive(Debug, Clone)]
pub struct CvCell {
    pub lambda: f64,
    pub fold: usize,
    pub sse: f64,
    pub status: CellStatus,
}

#[derive(Debug, Clone)]
pub struct CvReport {
    pub lambda_min: f64,
    pub table: Vec<CvCell>,
    pub k_folds: usize,
    pub grid: Vec<f64>,
}

fn gather_matrix(a: ArrayView2<f64>, rows: &[usize], cols: &[usize]) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((rows.len(), cols.len()));
    for (i, &r) in rows.iter().enumerate() {
        for (j, &c) in cols.iter().enumerate() {
            out[[i, j]] = a[[r, c]];
        }
    }
    out
}

fn gather_rows(x: ArrayView2<f64>, rows: &[usize]) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((rows.len(), x.ncols()));
    for (i, &r) in rows.iter().enumerate() {
        out.row_mut(i).assign(&x.row(r));
    }
    out
}

fn gather_vec(y: &Array1<f64>, rows: &[usize]) -> Array1<f64> {
    Array1::from_iter(rows.iter().map(|&r| y[r]))
}

/// K-fold cross-validation over the lambda grid.
///
/// Each fold fits SuperCENT on the induced training subnetwork; the held-out
/// nodes' centralities are read off the leading singular vectors of the full
/// network (sign-matched to the fold fit and rescaled to the training norm).
/// A cell's score is the total prediction error on everything held out from
/// the fold fit: the response SSE on the validation nodes plus the
/// reconstruction SSE on the held-out network entries (the blocks outside
/// the training subnetwork). The response part alone cannot identify the
/// tuning weight when the network noise is large: validation centralities
/// carry that noise, so response prediction systematically favors
/// attenuated coefficients, i.e. arbitrarily large lambda. A failed
/// (lambda, fold) fit marks the cell and removes that lambda from
/// contention.
pub fn cross_validate_lambda(
    data: &Dataset,
    selection: &LambdaSelection,
    settings: &SolverSettings,
    rng: &mut RngStream,
) -> Result<CvReport> {
    selection.validate()?;
    let n = data.n();
    let p = data.p();
    let split = CrossSectionSplit::random(n, selection.k_folds, rng);
    split.validate(p)?;

    // The full-network SVD is fold- and lambda-independent.
    let full = linalg::leading_singular_triple(data.a.view(), 1e-10, 100_000)?;
    if full.d <= 0.0 {
        return Err(Error::DegenerateNetwork);
    }

    struct FoldContext {
        train: Vec<usize>,
        val: Vec<usize>,
        data: Dataset,
        init: Option<SolverInit>,
        x_val: Array2<f64>,
        y_val: Array1<f64>,
    }

    let mut folds = Vec::with_capacity(selection.k_folds);
    for fold in 0..selection.k_folds {
        let (train, val) = split.fold_indices(fold);
        let a_tr = gather_matrix(data.a.view(), &train, &train);
        let x_tr = gather_rows(data.x.view(), &train);
        let y_tr = gather_vec(&data.y, &train);
        let x_val = gather_rows(data.x.view(), &val);
        let y_val = gather_vec(&data.y, &val);
        let init = SolverInit::from_svd(a_tr.view(), 1e-10, 100_000).ok();
        let data_tr = Dataset::new(a_tr, x_tr, y_tr)?;
        folds.push(FoldContext { train, val, data: data_tr, init, x_val, y_val });
    }

    let mut table = Vec::with_capacity(selection.grid.len() * selection.k_folds);
    let mut totals: Vec<Option<f64>> = vec![Some(0.0); selection.grid.len()];

    for (li, &lambda) in selection.grid.iter().enumerate() {
        for (fi, ctx) in folds.iter().enumerate() {
            let cell = (|| -> Result<f64> {
                let init = ctx
                    .init
                    .as_ref()
                    .ok_or(Error::DegenerateNetwork)?;
                let mut s = *settings;
                s.lambda = lambda;
                s.record_trace = false;
                let outcome = fit_supercent(&ctx.data, &s, Some(init))?;
                let fit = &outcome.fit;
                let (u_val, v_val) = predict::slice_and_rescale(
                    &full.u,
                    &full.v,
                    &ctx.train,
                    &ctx.val,
                    fit.u_hat.view(),
                    fit.v_hat.view(),
                )?;
                // Response prediction error on the validation nodes.
                let mut pred = ctx.x_val.dot(&fit.beta_x_hat);
                for i in 0..ctx.val.len() {
                    pred[i] += fit.beta_u_hat * u_val[i] + fit.beta_v_hat * v_val[i];
                }
                let diff = &ctx.y_val - &pred;
                let sse_y = diff.dot(&diff);

                // Reconstruction error on the held-out network entries
                // (every entry outside the training-by-training block).
                let mut u_all = vec![0.0; n];
                let mut v_all = vec![0.0; n];
                let mut in_train = vec![false; n];
                for (k, &i) in ctx.train.iter().enumerate() {
                    u_all[i] = fit.u_hat[k];
                    v_all[i] = fit.v_hat[k];
                    in_train[i] = true;
                }
                for (k, &i) in ctx.val.iter().enumerate() {
                    u_all[i] = u_val[k];
                    v_all[i] = v_val[k];
                }
                let mut sse_a = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        if in_train[i] && in_train[j] {
                            continue;
                        }
                        let r = data.a[[i, j]] - fit.d_hat * u_all[i] * v_all[j];
                        sse_a += r * r;
                    }
                }
                Ok(sse_y + sse_a)
            })();
            match cell {
                Ok(sse) => {
                    if let Some(t) = totals[li].as_mut() {
                        *t += sse;
                    }
                    table.push(CvCell { lambda, fold: fi, sse, status: CellStatus::Ok });
                }
                Err(_) => {
                    totals[li] = None;
                    table.push(CvCell {
                        lambda,
                        fold: fi,
                        sse: f64::NAN,
                        status: CellStatus::Failed,
                    });
                }
            }
        }
    }

    let mut best: Option<(f64, f64)> = None;
    for (li, total) in totals.iter().enumerate() {
        if let Some(t) = total {
            let lambda = selection.grid[li];
            if best.map_or(true, |(_, bt)| *t < bt) {
                best = Some((lambda, *t));
            }
        }
    }
    let (lambda_min, _) = best.ok_or_else(|| {
        Error::SelectionFailed("every lambda had at least one failed fold".into())
    })?;

    Ok(CvReport {
        lambda_min,
        table,
        k_folds: selection.k_folds,
        grid: selection.grid.clone(),
    })
}

/// Convenience wrapper: resolve a tuning method to a concrete lambda,
/// running the two-stage plug-in or cross-validation as needed.
pub fn resolve_lambda(
    data: &Dataset,
    method: LambdaMethod,
    fixed: Option<f64>,
    truth: Option<&UnifiedModelParams>,
    settings: &SolverSettings,
    k_folds: usize,
    rng: &mut RngStream,
) -> Result<(f64, Option<CvReport>)> {
    match method {
        LambdaMethod::Fixed => {
            let l = fixed.ok_or_else(|| {
                Error::DegenerateInput("fixed lambda requested but none supplied".into())
            })?;
            Ok((l, None))
        }
        LambdaMethod::Oracle => {
            let params = truth.ok_or_else(|| Error::MissingInput {
                variant: "oracle".into(),
                what: "true model parameters".into(),
            })?;
            Ok((lambda_oracle(params)?, None))
        }
        LambdaMethod::Plugin => {
            let ts = crate::two_stage::fit_two_stage(data, 1e-10, 100_000)?;
            Ok((lambda_plugin(&ts)?, None))
        }
        LambdaMethod::Cv => {
            let ts = crate::two_stage::fit_two_stage(data, 1e-10, 100_000)?;
            let center = lambda_plugin(&ts)?;
            let mut selection = LambdaSelection::cv_with_grid(default_lambda_grid(center));
            selection.k_folds = k_folds;
            let report = cross_validate_lambda(data, &selection, settings, rng)?;
            Ok((report.lambda_min, Some(report)))
        }
    }
}
