//! Closed-form asymptotic standard errors and confidence intervals for the
//! regression coefficients, the centralities, and every entry of the
//! denoised network, for both estimators.
//!
//! The coefficient variances take the same closed form for the two-stage and
//! SuperCENT fits; the difference across interval variants is only which
//! point estimate is centered and whether true or plugged-in parameters feed
//! the formulas. The entrywise network variances differ: SuperCENT's
//! supervision shrinks the centrality covariance by delta_{ts,sc} times the
//! projector onto the complement of span(X, u, v), and the per-entry
//! variance is assembled from those pieces in O(n^2 p) without ever forming
//! an n^2 x n^2 covariance.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{Dataset, UnifiedModelParams};
use crate::solver::delta_scalar;
use crate::two_stage::{augmented_design, FitResult};

/// Inverse standard-normal CDF (Wichura's AS 241, double precision).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile needs p in (0, 1), got {p}");
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        let num = (((((((2.509_080_928_730_122_7e3 * r + 3.343_057_558_358_812_8e4) * r
            + 6.726_577_092_700_870_1e4)
            * r
            + 4.592_195_393_154_987_1e4)
            * r
            + 1.373_169_376_550_946_1e4)
            * r
            + 1.971_590_950_306_551_3e3)
            * r
            + 1.331_416_678_917_843_8e2)
            * r
            + 3.387_132_872_796_366_608)
            * q;
        let den = ((((((5.226_495_278_852_545_611_8e3 * r + 2.872_908_573_572_194_267_6e4) * r
            + 3.930_789_580_009_271_061e4)
            * r
            + 2.121_379_430_158_659_586_7e4)
            * r
            + 5.394_196_021_424_751_107_7e3)
            * r
            + 6.871_870_074_920_579_083e2)
            * r
            + 4.231_333_070_160_091_125_2e1)
            * r
            + 1.0;
        return num / den;
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-r.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        let num = ((((((7.745_450_142_783_414_076_4e-4 * r + 2.272_384_498_926_918_458_33e-2)
            * r
            + 2.417_807_251_774_506_117_7e-1)
            * r
            + 1.270_458_252_452_368_382_58)
            * r
            + 3.647_848_324_763_204_605_04)
            * r
            + 5.769_497_221_460_691_405_5)
            * r
            + 4.630_337_846_156_545_295_9)
            * r
            + 1.423_437_110_749_683_577_34;
        let den = ((((((1.050_750_071_644_416_843_24e-9 * r
            + 5.475_938_084_995_344_946e-4)
            * r
            + 1.519_866_656_361_645_719_66e-2)
            * r
            + 1.481_039_764_274_800_745_9e-1)
            * r
            + 6.897_673_349_851_000_045_5e-1)
            * r
            + 1.676_384_830_183_803_849_4)
            * r
            + 2.053_191_626_637_758_821_87)
            * r
            + 1.0;
        num / den
    } else {
        r -= 5.0;
        let num = ((((((2.010_334_399_292_288_132_65e-7 * r
            + 2.711_555_568_743_487_578_15e-5)
            * r
            + 1.242_660_947_388_078_438_6e-3)
            * r
            + 2.653_218_952_657_612_309_3e-2)
            * r
            + 2.965_605_718_285_048_912_3e-1)
            * r
            + 1.784_826_539_917_291_335_8)
            * r
            + 5.463_784_911_164_114_369_9)
            * r
            + 6.657_904_643_501_103_777_2;
        let den = ((((((2.044_263_103_389_939_785_64e-15 * r
            + 1.421_511_758_316_445_888_7e-7)
            * r
            + 1.846_318_317_510_054_681_8e-5)
            * r
            + 7.868_691_311_456_132_591e-4)
            * r
            + 1.487_536_129_085_061_485_25e-2)
            * r
            + 1.369_298_809_227_358_053_1e-1)
            * r
            + 5.998_322_065_558_879_376_9e-1)
            * r
            + 1.0;
        num / den
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

/// The five confidence-interval constructions compared in the simulations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CiVariant {
    /// Classical OLS intervals treating the estimated centralities as fixed.
    TsAdhoc,
    /// Two-stage estimate with the closed-form SE at the true parameters.
    TsOracle,
    /// Two-stage estimate with the closed-form SE at the two-stage estimates.
    Ts,
    /// SuperCENT estimate with the closed-form SE at the true parameters.
    ScOracle,
    /// SuperCENT estimate with the closed-form SE at the SuperCENT estimates.
    ScCv,
}

impl CiVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            CiVariant::TsAdhoc => "ts-adhoc",
            CiVariant::TsOracle => "ts-oracle",
            CiVariant::Ts => "ts",
            CiVariant::ScOracle => "sc-oracle",
            CiVariant::ScCv => "sc-cv",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "ts-adhoc" => CiVariant::TsAdhoc,
            "ts-oracle" => CiVariant::TsOracle,
            "ts" => CiVariant::Ts,
            "sc-oracle" => CiVariant::ScOracle,
            "sc-cv" => CiVariant::ScCv,
            other => {
                return Err(Error::DegenerateInput(format!("unknown CI variant {other:?}")))
            }
        })
    }

    pub const ALL: [CiVariant; 5] = [
        CiVariant::TsAdhoc,
        CiVariant::TsOracle,
        CiVariant::Ts,
        CiVariant::ScOracle,
        CiVariant::ScCv,
    ];
}

/// Point estimate with standard error and a two-sided interval at level
/// 1 - alpha.
#[derive(Debug, Clone)]
pub struct CoefficientInference {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub alpha: f64,
    pub variant: CiVariant,
}

impl CoefficientInference {
    fn new(name: String, estimate: f64, se: f64, alpha: f64, variant: CiVariant) -> Self {
        let z = normal_quantile(1.0 - alpha / 2.0);
        CoefficientInference {
            name,
            estimate,
            se,
            ci_lo: estimate - z * se,
            ci_hi: estimate + z * se,
            alpha,
            variant,
        }
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.ci_lo <= truth && truth <= self.ci_hi
    }

    pub fn width(&self) -> f64 {
        self.ci_hi - self.ci_lo
    }
}

/// Per-entry standard errors for the denoised network entries.
#[derive(Debug, Clone)]
pub struct NetworkEntryInference {
    pub se: Array2<f64>,
    pub alpha: f64,
}

impl NetworkEntryInference {
    /// Fraction of entries of `truth` covered by the intervals centered at
    /// `center`, and the average interval width.
    pub fn coverage_and_width(&self, center: &Array2<f64>, truth: &Array2<f64>) -> (f64, f64) {
        let z = normal_quantile(1.0 - self.alpha / 2.0);
        let n2 = (self.se.nrows() * self.se.ncols()) as f64;
        let mut covered = 0usize;
        let mut width_sum = 0.0;
        for ((c, t), s) in center.iter().zip(truth.iter()).zip(self.se.iter()) {
            let half = z * s;
            if (t - c).abs() <= half {
                covered += 1;
            }
            width_sum += 2.0 * half;
        }
        (covered as f64 / n2, width_sum / n2)
    }
}

/// Closed-form coefficient standard errors.
#[derive(Debug, Clone)]
pub struct BetaSe {
    pub se_bu: f64,
    pub se_bv: f64,
    pub cov_bx: Array2<f64>,
}

/// Asymptotic variances of the centrality coefficients and covariates.
///
/// With the projected centralities tu = (I - P_X) u, tv = (I - P_X) v and
/// c = (tu'tu)(tv'tv) - (tu'tv)^2:
///   Var(b_u) = sigma_y^2 tv'tv / c
///     + sigma_a^2/(c^2 d^2 n) [ b_v^2 (tv'tv)^2 tu'(I-P_v)tu
///                             + b_u^2 (tu'tv)^2 tv'(I-P_u)tv ],
/// symmetrically for b_v, and the three-part covariance for b_x. The same
/// expressions serve both estimators.
pub fn se_beta_closed_form(
    u: ArrayView1<f64>,
    v: ArrayView1<f64>,
    x: ArrayView2<f64>,
    beta_u: f64,
    beta_v: f64,
    d: f64,
    sigma_y_sq: f64,
    sigma_a_sq: f64,
) -> Result<BetaSe> {
    let n = u.len();
    if v.len() != n || x.nrows() != n {
        return Err(Error::DimensionMismatch("u, v, X row counts differ".into()));
    }
    let nf = n as f64;
    let tu = linalg::project_complement(x, u)?;
    let tv = linalg::project_complement(x, v)?;
    let tu_tu = tu.dot(&tu);
    let tv_tv = tv.dot(&tv);
    let tu_tv = tu.dot(&tv);
    let c = tu_tu * tv_tv - tu_tv * tu_tv;
    if c <= 0.0 {
        return Err(Error::DegenerateInput(
            "projected centralities are collinear (c <= 0)".into(),
        ));
    }
    // tu'(I - P_v)tu and tv'(I - P_u)tv; note v'tu = tv'tu exactly.
    let tu_opv_tu = tu_tu - tu_tv * tu_tv / nf;
    let tv_opu_tv = tv_tv - tu_tv * tu_tv / nf;

    let d2n = d * d * nf;
    let var_bu = sigma_y_sq * tv_tv / c
        + sigma_a_sq / (c * c * d2n)
            * (beta_v * beta_v * tv_tv * tv_tv * tu_opv_tu
                + beta_u * beta_u * tu_tv * tu_tv * tv_opu_tv);
    let var_bv = sigma_y_sq * tu_tu / c
        + sigma_a_sq / (c * c * d2n)
            * (beta_u * beta_u * tu_tu * tu_tu * tv_opu_tv
                + beta_v * beta_v * tu_tv * tu_tv * tu_opv_tu);

    // Cov(beta_x): sigma_y^2 [ (X'X)^{-1} + B Cuv^{-1} B' ]
    //   + sigma_a^2/(d^2 n) [ (X'X)^{-1} X'(b_u^2 (I-P_u) + b_v^2 (I-P_v)) X (X'X)^{-1}
    //                         + B Cuv^{-1} D Cuv^{-1} B' ]
    // with B = (X'X)^{-1} X'(u v), D = diag(b_v^2 tu'(I-P_v)tu, b_u^2 tv'(I-P_u)tv).
    let p = x.ncols();
    let xtx = x.t().dot(&x);
    let xtx_inv = linalg::sym_inverse(xtx.view())?;
    let xtu = x.t().dot(&u);
    let xtv = x.t().dot(&v);
    let mut b = Array2::<f64>::zeros((p, 2));
    let bu_col = xtx_inv.dot(&xtu);
    let bv_col = xtx_inv.dot(&xtv);
    for i in 0..p {
        b[[i, 0]] = bu_col[i];
        b[[i, 1]] = bv_col[i];
    }
    let cuv_inv = {
        let mut m = Array2::<f64>::zeros((2, 2));
        m[[0, 0]] = tv_tv / c;
        m[[0, 1]] = -tu_tv / c;
        m[[1, 0]] = -tu_tv / c;
        m[[1, 1]] = tu_tu / c;
        m
    };
    let part1 = {
        let mid = b.dot(&cuv_inv).dot(&b.t());
        (&xtx_inv + &mid) * sigma_y_sq
    };
    let part2a = {
        // X'(b_u^2 (I-P_u) + b_v^2 (I-P_v)) X
        let bu2 = beta_u * beta_u;
        let bv2 = beta_v * beta_v;
        let mut m = &xtx * (bu2 + bv2);
        for i in 0..p {
            for j in 0..p {
                m[[i, j]] -= bu2 * xtu[i] * xtu[j] / nf + bv2 * xtv[i] * xtv[j] / nf;
            }
        }
        xtx_inv.dot(&m).dot(&xtx_inv) * (sigma_a_sq / d2n)
    };
    let part2b = {
        let mut dm = Array2::<f64>::zeros((2, 2));
        dm[[0, 0]] = beta_v * beta_v * tu_opv_tu;
        dm[[1, 1]] = beta_u * beta_u * tv_opu_tv;
        b.dot(&cuv_inv).dot(&dm).dot(&cuv_inv).dot(&b.t()) * (sigma_a_sq / d2n)
    };
    let cov_bx = &part1 + &part2a + &part2b;

    Ok(BetaSe { se_bu: var_bu.max(0.0).sqrt(), se_bv: var_bv.max(0.0).sqrt(), cov_bx })
}

fn coefficient_list(
    fit: &FitResult,
    se_bx: &[f64],
    se_bu: f64,
    se_bv: f64,
    alpha: f64,
    variant: CiVariant,
) -> Vec<CoefficientInference> {
    let mut out = Vec::with_capacity(se_bx.len() + 2);
    for (k, &se) in se_bx.iter().enumerate() {
        out.push(CoefficientInference::new(
            format!("beta_x_{}", k + 1),
            fit.beta_x_hat[k],
            se,
            alpha,
            variant,
        ));
    }
    out.push(CoefficientInference::new(
        "beta_u".into(),
        fit.beta_u_hat,
        se_bu,
        alpha,
        variant,
    ));
    out.push(CoefficientInference::new(
        "beta_v".into(),
        fit.beta_v_hat,
        se_bv,
        alpha,
        variant,
    ));
    out
}

/// Confidence intervals for all regression coefficients under the requested
/// variant. Oracle variants need the true parameters; SuperCENT variants
/// need a SuperCENT fit.
pub fn ci_beta(
    data: &Dataset,
    ts_fit: &FitResult,
    sc_fit: Option<&FitResult>,
    truth: Option<&UnifiedModelParams>,
    variant: CiVariant,
    alpha: f64,
) -> Result<Vec<CoefficientInference>> {
    let p = data.p();
    let need_truth = || {
        truth.ok_or_else(|| Error::MissingInput {
            variant: variant.as_str().into(),
            what: "true model parameters".into(),
        })
    };
    let need_sc = || {
        sc_fit.ok_or_else(|| Error::MissingInput {
            variant: variant.as_str().into(),
            what: "a SuperCENT fit".into(),
        })
    };
    match variant {
        CiVariant::TsAdhoc => {
            let w = augmented_design(data.x.view(), &ts_fit.u_hat, &ts_fit.v_hat);
            let wtw = w.t().dot(&w);
            let inv = linalg::sym_inverse(wtw.view())?;
            let ses: Vec<f64> = (0..p + 2)
                .map(|k| (ts_fit.sigma_y_hat_sq * inv[[k, k]]).max(0.0).sqrt())
                .collect();
            Ok(coefficient_list(ts_fit, &ses[..p], ses[p], ses[p + 1], alpha, variant))
        }
        CiVariant::TsOracle | CiVariant::ScOracle => {
            let t = need_truth()?;
            let se = se_beta_closed_form(
                t.u.view(),
                t.v.view(),
                data.x.view(),
                t.beta_u,
                t.beta_v,
                t.d,
                t.sigma_y * t.sigma_y,
                t.sigma_a * t.sigma_a,
            )?;
            let fit = if variant == CiVariant::TsOracle { ts_fit } else { need_sc()? };
            let se_bx: Vec<f64> =
                (0..p).map(|k| se.cov_bx[[k, k]].max(0.0).sqrt()).collect();
            Ok(coefficient_list(fit, &se_bx, se.se_bu, se.se_bv, alpha, variant))
        }
        CiVariant::Ts | CiVariant::ScCv => {
            let fit = if variant == CiVariant::Ts { ts_fit } else { need_sc()? };
            let se = se_beta_closed_form(
                fit.u_hat.view(),
                fit.v_hat.view(),
                data.x.view(),
                fit.beta_u_hat,
                fit.beta_v_hat,
                fit.d_hat,
                fit.sigma_y_hat_sq,
                fit.sigma_a_hat_sq,
            )?;
            let se_bx: Vec<f64> =
                (0..p).map(|k| se.cov_bx[[k, k]].max(0.0).sqrt()).collect();
            Ok(coefficient_list(fit, &se_bx, se.se_bu, se.se_bv, alpha, variant))
        }
    }
}

/// Two-stage per-entry standard errors of the denoised network:
/// Var(A_hat_ij) = sigma_a^2 (h_i + g_j - h_i g_j) with h_i = u_i^2/n,
/// g_j = v_j^2/n. The signal strength d cancels.
pub fn se_network_entries_two_stage(
    u: ArrayView1<f64>,
    v: ArrayView1<f64>,
    sigma_a_sq: f64,
    alpha: f64,
) -> NetworkEntryInference {
    let n = u.len();
    let nf = n as f64;
    let mut se = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let h = u[i] * u[i] / nf;
        for j in 0..n {
            let g = v[j] * v[j] / nf;
            se[[i, j]] = (sigma_a_sq * (h + g - h * g)).max(0.0).sqrt();
        }
    }
    NetworkEntryInference { se, alpha }
}

/// The complement projector I - P_(X,u,v).
fn complement_projector(
    x: ArrayView2<f64>,
    u: &Array1<f64>,
    v: &Array1<f64>,
) -> Result<Array2<f64>> {
    let w = augmented_design(x, u, v);
    let wtw = w.t().dot(&w);
    let inv = linalg::sym_inverse(wtw.view())?;
    let g = w.dot(&inv);
    let mut omega = g.dot(&w.t()) * -1.0;
    let n = x.nrows();
    for i in 0..n {
        omega[[i, i]] += 1.0;
    }
    Ok(omega)
}

/// SuperCENT per-entry standard errors of the denoised network at a given
/// lambda. The linearization d(delta_u v^T + u delta_v^T) + P_u E P_v gives
///   Var(A_hat_ij) = d^2 [ v_j^2 Var(du_i) + u_i^2 Var(dv_j)
///                         + 2 u_i v_j Cov(du_i, dv_j) ]
///                   + sigma_a^2 h_i g_j,
/// with Var(du) = sigma_a^2/(d^2 n) (I - P_u) - b_u^2 delta (I - P_W) and
/// Cov(du, dv) = -b_u b_v delta (I - P_W), W = (X, u, v).
#[allow(clippy::too_many_arguments)]
pub fn se_network_entries_supercent(
    u: ArrayView1<f64>,
    v: ArrayView1<f64>,
    x: ArrayView2<f64>,
    beta_u: f64,
    beta_v: f64,
    d: f64,
    lambda: f64,
    sigma_y_sq: f64,
    sigma_a_sq: f64,
    alpha: f64,
) -> Result<NetworkEntryInference> {
    if !(lambda > 0.0) {
        return Err(Error::DegenerateInput("lambda must be positive".into()));
    }
    let n = u.len();
    let nf = n as f64;
    let u_own = u.to_owned();
    let v_own = v.to_owned();
    let omega = complement_projector(x, &u_own, &v_own)?;
    let delta = delta_scalar(nf, d, beta_u, beta_v, sigma_a_sq, sigma_y_sq, lambda);
    let base = sigma_a_sq / (d * d * nf);

    let var_u: Vec<f64> = (0..n)
        .map(|i| (base * (1.0 - u[i] * u[i] / nf) - beta_u * beta_u * delta * omega[[i, i]]).max(0.0))
        .collect();
    let var_v: Vec<f64> = (0..n)
        .map(|j| (base * (1.0 - v[j] * v[j] / nf) - beta_v * beta_v * delta * omega[[j, j]]).max(0.0))
        .collect();

    let mut se = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let h = u[i] * u[i] / nf;
        for j in 0..n {
            let g = v[j] * v[j] / nf;
            let cov_uv = -beta_u * beta_v * delta * omega[[i, j]];
            let var = d * d
                * (v[j] * v[j] * var_u[i] + u[i] * u[i] * var_v[j] + 2.0 * u[i] * v[j] * cov_uv)
                + sigma_a_sq * h * g;
            se[[i, j]] = var.max(0.0).sqrt();
        }
    }
    Ok(NetworkEntryInference { se, alpha })
}

/// Per-entry asymptotic sd of the two-stage centrality estimates:
/// se(u_i)^2 = sigma_a^2/(d^2 n) (1 - u_i^2/n).
pub fn se_centrality_entries_two_stage(
    u: ArrayView1<f64>,
    v: ArrayView1<f64>,
    d: f64,
    sigma_a_sq: f64,
) -> (Array1<f64>, Array1<f64>) {
    let nf = u.len() as f64;
    let base = sigma_a_sq / (d * d * nf);
    let se_u = u.mapv(|ui| (base * (1.0 - ui * ui / nf)).max(0.0).sqrt());
    let se_v = v.mapv(|vj| (base * (1.0 - vj * vj / nf)).max(0.0).sqrt());
    (se_u, se_v)
}

/// Per-entry asymptotic sd of the SuperCENT centrality estimates; the
/// supervision term subtracts beta^2 delta times the diagonal of I - P_W.
#[allow(clippy::too_many_arguments)]
pub fn se_centrality_entries_supercent(
    u: ArrayView1<f64>,
    v: ArrayView1<f64>,
    x: ArrayView2<f64>,
    beta_u: f64,
    beta_v: f64,
    d: f64,
    lambda: f64,
    sigma_y_sq: f64,
    sigma_a_sq: f64,
) -> Result<(Array1<f64>, Array1<f64>)> {
    let n = u.len();
    let nf = n as f64;
    let u_own = u.to_owned();
    let v_own = v.to_owned();
    // Only the diagonal of I - P_W is needed here.
    let w = augmented_design(x, &u_own, &v_own);
    let wtw = w.t().dot(&w);
    let inv = linalg::sym_inverse(wtw.view())?;
    let g = w.dot(&inv);
    let omega_diag: Vec<f64> = (0..n)
        .map(|i| 1.0 - g.row(i).dot(&w.row(i)))
        .collect();
    let delta = delta_scalar(nf, d, beta_u, beta_v, sigma_a_sq, sigma_y_sq, lambda);
    let base = sigma_a_sq / (d * d * nf);
    let se_u = Array1::from_iter((0..n).map(|i| {
        (base * (1.0 - u[i] * u[i] / nf) - beta_u * beta_u * delta * omega_diag[i])
            .max(0.0)
            .sqrt()
    }));
    let se_v = Array1::from_iter((0..n).map(|j| {
        (base * (1.0 - v[j] * v[j] / nf) - beta_v * beta_v * delta * omega_diag[j])
            .max(0.0)
            .sqrt()
    }));
    Ok((se_u, se_v))
}
