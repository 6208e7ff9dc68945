//! Monte Carlo harness: loss metrics, replication panels over noise/signal
//! grids, confidence-interval coverage and width, and the introductory toy
//! experiment.
//!
//! Determinism contract: a panel is a pure function of its spec. Each
//! (configuration, replication) pair owns a derived RNG stream, replications
//! are reduced in index order, and the aggregation is sequential, so the
//! resulting table is bit-identical at any parallelism degree.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inference::{
    ci_beta, se_network_entries_supercent, se_network_entries_two_stage, CiVariant,
};
use crate::model::{
    derive_substream, generate_dataset, toy_config, Dataset, SimulationConfig,
    UnifiedModelParams,
};
use crate::solver::{
    cross_validate_lambda, default_lambda_grid, fit_supercent, lambda_oracle, lambda_plugin,
    LambdaSelection, SolverInit, SolverSettings,
};
use crate::two_stage::{fit_two_stage, FitResult};

/// Squared spectral norm of the projector difference,
/// ||P_zhat - P_z||_2^2 = sin^2(angle) = 1 - (zhat'z)^2 / (|zhat|^2 |z|^2).
pub fn loss_subspace(z_hat: ArrayView1<f64>, z: ArrayView1<f64>) -> Result<f64> {
    let nh = z_hat.dot(&z_hat);
    let nz = z.dot(&z);
    if nh == 0.0 || nz == 0.0 {
        return Err(Error::DegenerateInput("zero vector in subspace loss".into()));
    }
    let c = z_hat.dot(&z);
    Ok((1.0 - (c * c / (nh * nz)).min(1.0)).max(0.0))
}

/// Sign-aligned scaled Euclidean loss ||zhat - sign(zhat'z) z||^2 / n for
/// vectors on the sqrt(n) scale.
pub fn loss_scaled_euclidean(z_hat: ArrayView1<f64>, z: ArrayView1<f64>) -> Result<f64> {
    if z_hat.dot(&z_hat) == 0.0 || z.dot(&z) == 0.0 {
        return Err(Error::DegenerateInput("zero vector in euclidean loss".into()));
    }
    let sign = if z_hat.dot(&z) < 0.0 { -1.0 } else { 1.0 };
    let n = z.len() as f64;
    let mut acc = 0.0;
    for (a, b) in z_hat.iter().zip(z.iter()) {
        let dta = a - sign * b;
        acc += dta * dta;
    }
    Ok(acc / n)
}

/// Relative squared Frobenius loss ||A_hat - A_0||_F^2 / ||A_0||_F^2.
pub fn loss_network(a_hat: &Array2<f64>, a0: &Array2<f64>) -> Result<f64> {
    if a_hat.dim() != a0.dim() {
        return Err(Error::DimensionMismatch("network loss shapes differ".into()));
    }
    let denom: f64 = a0.iter().map(|e| e * e).sum();
    if denom == 0.0 {
        return Err(Error::UndefinedLoss);
    }
    let num: f64 = a_hat.iter().zip(a0.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(num / denom)
}

/// Normalized squared error (b_hat - b)^2 / b^2.
pub fn loss_coef(b_hat: f64, b: f64) -> Result<f64> {
    if b == 0.0 {
        return Err(Error::UndefinedLoss);
    }
    Ok((b_hat - b) * (b_hat - b) / (b * b))
}

/// Like `loss_coef` but falls back to the raw squared error when the
/// reference is zero; the flag reports the fallback.
pub fn loss_coef_or_raw(b_hat: f64, b: f64) -> (f64, bool) {
    match loss_coef(b_hat, b) {
        Ok(l) => (l, false),
        Err(_) => ((b_hat - b) * (b_hat - b), true),
    }
}

/// Estimators a panel can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    TwoStage,
    ScOracle,
    ScPlugin,
    ScCv,
}

impl Estimator {
    pub fn as_str(&self) -> &'static str {
        match self {
            Estimator::TwoStage => "two-stage",
            Estimator::ScOracle => "sc-oracle",
            Estimator::ScPlugin => "sc-plugin",
            Estimator::ScCv => "sc-cv",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "two-stage" => Estimator::TwoStage,
            "sc-oracle" => Estimator::ScOracle,
            "sc-plugin" => Estimator::ScPlugin,
            "sc-cv" => Estimator::ScCv,
            other => {
                return Err(Error::DegenerateInput(format!("unknown estimator {other:?}")))
            }
        })
    }
}

/// A grid of simulation configurations with the estimators and interval
/// variants to evaluate.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub base: SimulationConfig,
    pub sweep_sigma_a: Vec<f64>,
    pub sweep_sigma_y: Vec<f64>,
    pub sweep_beta_u: Vec<f64>,
    pub estimators: Vec<Estimator>,
    pub ci_variants: Vec<CiVariant>,
    pub replications: usize,
    pub alpha: f64,
    pub master_seed: u64,
    pub parallelism: usize,
    /// K for the sc-cv estimator.
    pub k_folds: usize,
}

impl ExperimentSpec {
    pub fn new(base: SimulationConfig) -> Self {
        ExperimentSpec {
            base,
            sweep_sigma_a: Vec::new(),
            sweep_sigma_y: Vec::new(),
            sweep_beta_u: Vec::new(),
            estimators: vec![Estimator::TwoStage],
            ci_variants: Vec::new(),
            replications: 200,
            alpha: 0.05,
            master_seed: 0,
            parallelism: 1,
            k_folds: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::DegenerateInput("need at least one replication".into()));
        }
        if self.sweep_sigma_a.is_empty()
            || self.sweep_sigma_y.is_empty()
            || self.sweep_beta_u.is_empty()
        {
            return Err(Error::DegenerateInput("sweep lists must be nonempty".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::DegenerateInput("alpha must lie in (0, 1)".into()));
        }
        Ok(())
    }

    /// The swept configurations in deterministic order: sigma_a outermost,
    /// then sigma_y, then beta_u.
    pub fn configs(&self) -> Vec<SimulationConfig> {
        let mut out = Vec::new();
        for &sa in &self.sweep_sigma_a {
            for &sy in &self.sweep_sigma_y {
                for &bu in &self.sweep_beta_u {
                    let mut cfg = self.base.clone();
                    cfg.sigma_a = sa;
                    cfg.sigma_y = sy;
                    cfg.beta_u = bu;
                    out.push(cfg);
                }
            }
        }
        out
    }
}

/// One aggregated cell of a panel.
#[derive(Debug, Clone)]
pub struct MetricsRow {
    pub sigma_a: f64,
    pub sigma_y: f64,
    pub beta_u: f64,
    /// Estimator tag, or CI-variant tag for coverage/width metrics.
    pub estimator: String,
    pub metric: String,
    pub mean: f64,
    pub median: f64,
    /// Sample sd across replications; for coverage metrics this is the
    /// binomial Monte Carlo standard error sqrt(p (1-p) / R).
    pub sd: f64,
    pub q05: f64,
    pub q95: f64,
    pub n_ok: usize,
    pub n_fail: usize,
}

#[derive(Debug, Clone, Default)]
pub struct MetricsTable {
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn get(&self, sigma_a: f64, sigma_y: f64, beta_u: f64, estimator: &str, metric: &str) -> Option<&MetricsRow> {
        self.rows.iter().find(|r| {
            r.sigma_a == sigma_a
                && r.sigma_y == sigma_y
                && r.beta_u == beta_u
                && r.estimator == estimator
                && r.metric == metric
        })
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    if sorted.len() == 1 {
        return sorted[0];
    }
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Joint sign flip of a fit towards the truth, for truth-referenced metrics.
/// Only the joint (u, v) flip preserves the fitted model exactly.
pub fn orient_to_truth(fit: &FitResult, params: &UnifiedModelParams) -> FitResult {
    if fit.u_hat.dot(&params.u) + fit.v_hat.dot(&params.v) < 0.0 {
        let mut f = fit.clone();
        f.u_hat.mapv_inplace(|e| -e);
        f.v_hat.mapv_inplace(|e| -e);
        f.beta_u_hat = -f.beta_u_hat;
        f.beta_v_hat = -f.beta_v_hat;
        f
    } else {
        fit.clone()
    }
}

type Key = (String, String);

struct RepResult {
    values: Vec<(Key, f64)>,
    failures: Vec<String>,
}

fn estimator_metrics(
    label: &str,
    fit: &FitResult,
    params: &UnifiedModelParams,
    a0: &Array2<f64>,
    out: &mut Vec<(Key, f64)>,
) -> Result<()> {
    let f = orient_to_truth(fit, params);
    let lu = loss_subspace(f.u_hat.view(), params.u.view())?;
    let lv = loss_subspace(f.v_hat.view(), params.v.view())?;
    let lue = loss_scaled_euclidean(f.u_hat.view(), params.u.view())?;
    let lve = loss_scaled_euclidean(f.v_hat.view(), params.v.view())?;
    let la = loss_network(&f.network_estimate(), a0)?;
    let (lbu, _) = loss_coef_or_raw(f.beta_u_hat, params.beta_u);
    let (lbv, _) = loss_coef_or_raw(f.beta_v_hat, params.beta_v);
    let push = |out: &mut Vec<(Key, f64)>, metric: &str, value: f64| {
        out.push(((label.to_string(), metric.to_string()), value));
    };
    push(out, "loss_u", lu);
    push(out, "loss_v", lv);
    push(out, "sin_u", lu.sqrt());
    push(out, "loss_u_euclid", lue);
    push(out, "loss_v_euclid", lve);
    push(out, "loss_A", la);
    push(out, "loss_beta_u", lbu);
    push(out, "loss_beta_v", lbv);
    push(out, "bias_beta_u", f.beta_u_hat - params.beta_u);
    push(out, "bias_beta_v", f.beta_v_hat - params.beta_v);
    push(out, "converged", if f.converged { 1.0 } else { 0.0 });
    push(out, "iterations", f.iterations as f64);
    Ok(())
}

struct VariantInputs<'a> {
    data: &'a Dataset,
    params: &'a UnifiedModelParams,
    a0: &'a Array2<f64>,
    ts_fit: Option<&'a FitResult>,
    sc_oracle: Option<&'a FitResult>,
    sc_cv: Option<&'a (FitResult, f64)>,
    alpha: f64,
}

fn variant_metrics(variant: CiVariant, inp: &VariantInputs, out: &mut Vec<(Key, f64)>) -> Result<()> {
    let label = variant.as_str().to_string();
    let ts = inp.ts_fit.ok_or_else(|| Error::MissingInput {
        variant: label.clone(),
        what: "two-stage fit".into(),
    })?;
    let ts_oriented = orient_to_truth(ts, inp.params);

    // Coefficient intervals.
    let (sc_for_variant, lambda_for_entries): (Option<FitResult>, Option<f64>) = match variant {
        CiVariant::ScOracle => {
            let f = inp.sc_oracle.ok_or_else(|| Error::MissingInput {
                variant: label.clone(),
                what: "sc-oracle fit".into(),
            })?;
            let l0 = lambda_oracle(inp.params)?;
            (Some(orient_to_truth(f, inp.params)), Some(l0))
        }
        CiVariant::ScCv => {
            let (f, l) = inp.sc_cv.ok_or_else(|| Error::MissingInput {
                variant: label.clone(),
                what: "sc-cv fit".into(),
            })?;
            (Some(orient_to_truth(f, inp.params)), Some(*l))
        }
        _ => (None, None),
    };
    let cis = ci_beta(
        inp.data,
        &ts_oriented,
        sc_for_variant.as_ref(),
        Some(inp.params),
        variant,
        inp.alpha,
    )?;
    let p = inp.data.p();
    let ci_bu = &cis[p];
    let ci_bv = &cis[p + 1];
    let push = |out: &mut Vec<(Key, f64)>, metric: &str, value: f64| {
        out.push(((label.clone(), metric.to_string()), value));
    };
    push(out, "cover_beta_u", if ci_bu.covers(inp.params.beta_u) { 1.0 } else { 0.0 });
    push(out, "width_beta_u", ci_bu.width());
    push(out, "cover_beta_v", if ci_bv.covers(inp.params.beta_v) { 1.0 } else { 0.0 });
    push(out, "width_beta_v", ci_bv.width());

    // Entrywise network intervals, averaged over entries.
    let entries = match variant {
        CiVariant::TsAdhoc | CiVariant::Ts => se_network_entries_two_stage(
            ts.u_hat.view(),
            ts.v_hat.view(),
            ts.sigma_a_hat_sq,
            inp.alpha,
        ),
        CiVariant::TsOracle => se_network_entries_two_stage(
            inp.params.u.view(),
            inp.params.v.view(),
            inp.params.sigma_a * inp.params.sigma_a,
            inp.alpha,
        ),
        CiVariant::ScOracle => se_network_entries_supercent(
            inp.params.u.view(),
            inp.params.v.view(),
            inp.data.x.view(),
            inp.params.beta_u,
            inp.params.beta_v,
            inp.params.d,
            lambda_for_entries.unwrap(),
            inp.params.sigma_y * inp.params.sigma_y,
            inp.params.sigma_a * inp.params.sigma_a,
            inp.alpha,
        )?,
        CiVariant::ScCv => {
            let f = sc_for_variant.as_ref().unwrap();
            se_network_entries_supercent(
                f.u_hat.view(),
                f.v_hat.view(),
                inp.data.x.view(),
                f.beta_u_hat,
                f.beta_v_hat,
                f.d_hat,
                lambda_for_entries.unwrap(),
                f.sigma_y_hat_sq,
                f.sigma_a_hat_sq,
                inp.alpha,
            )?
        }
    };
    let center = match variant {
        CiVariant::TsAdhoc | CiVariant::Ts | CiVariant::TsOracle => ts.network_estimate(),
        CiVariant::ScOracle => inp.sc_oracle.unwrap().network_estimate(),
        CiVariant::ScCv => inp.sc_cv.unwrap().0.network_estimate(),
    };
    let (cover_a, width_a) = entries.coverage_and_width(&center, inp.a0);
    push(out, "cover_A", cover_a);
    push(out, "width_A", width_a);
    Ok(())
}

fn needs_sc_oracle(spec: &ExperimentSpec) -> bool {
    spec.estimators.contains(&Estimator::ScOracle)
        || spec.ci_variants.contains(&CiVariant::ScOracle)
}

fn needs_sc_cv(spec: &ExperimentSpec) -> bool {
    spec.estimators.contains(&Estimator::ScCv) || spec.ci_variants.contains(&CiVariant::ScCv)
}

fn run_replication(
    spec: &ExperimentSpec,
    cfg: &SimulationConfig,
    config_idx: u64,
    rep: u64,
) -> RepResult {
    let mut values = Vec::new();
    let mut failures = Vec::new();

    let mut rng = derive_substream(spec.master_seed, config_idx, rep, 0);
    let (params, data) = match cfg.realize(&mut rng).and_then(|p| {
        let d = generate_dataset(&p, &mut rng)?;
        Ok((p, d))
    }) {
        Ok(pd) => pd,
        Err(_) => {
            for e in &spec.estimators {
                failures.push(e.as_str().to_string());
            }
            for v in &spec.ci_variants {
                failures.push(v.as_str().to_string());
            }
            return RepResult { values, failures };
        }
    };
    let a0 = params.true_network();

    let ts_fit = fit_two_stage(&data, 1e-10, 100_000).ok();
    let init = ts_fit.as_ref().map(|f| SolverInit {
        d: f.d_hat,
        u: f.u_hat.clone(),
        v: f.v_hat.clone(),
    });

    let sc_oracle_fit: Option<FitResult> = if needs_sc_oracle(spec) {
        lambda_oracle(&params).ok().and_then(|l0| {
            fit_supercent(&data, &SolverSettings::new(l0), init.as_ref())
                .ok()
                .map(|o| o.fit)
        })
    } else {
        None
    };

    let sc_plugin_fit: Option<FitResult> = if spec.estimators.contains(&Estimator::ScPlugin) {
        ts_fit.as_ref().and_then(|ts| {
            lambda_plugin(ts).ok().and_then(|l| {
                fit_supercent(&data, &SolverSettings::new(l), init.as_ref())
                    .ok()
                    .map(|o| o.fit)
            })
        })
    } else {
        None
    };

    let sc_cv_fit: Option<(FitResult, f64)> = if needs_sc_cv(spec) {
        ts_fit.as_ref().and_then(|ts| {
            let center = lambda_plugin(ts).ok()?;
            let mut selection = LambdaSelection::cv_with_grid(default_lambda_grid(center));
            selection.k_folds = spec.k_folds;
            let mut cv_rng = derive_substream(spec.master_seed, config_idx, rep, 1);
            let settings = SolverSettings::new(center);
            let report = cross_validate_lambda(&data, &selection, &settings, &mut cv_rng).ok()?;
            let fit = fit_supercent(
                &data,
                &SolverSettings::new(report.lambda_min),
                init.as_ref(),
            )
            .ok()?
            .fit;
            Some((fit, report.lambda_min))
        })
    } else {
        None
    };

    for est in &spec.estimators {
        let label = est.as_str();
        let fit = match est {
            Estimator::TwoStage => ts_fit.as_ref(),
            Estimator::ScOracle => sc_oracle_fit.as_ref(),
            Estimator::ScPlugin => sc_plugin_fit.as_ref(),
            Estimator::ScCv => sc_cv_fit.as_ref().map(|(f, _)| f),
        };
        match fit {
            Some(f) => {
                if estimator_metrics(label, f, &params, &a0, &mut values).is_err() {
                    failures.push(label.to_string());
                }
            }
            None => failures.push(label.to_string()),
        }
    }

    for variant in &spec.ci_variants {
        let inp = VariantInputs {
            data: &data,
            params: &params,
            a0: &a0,
            ts_fit: ts_fit.as_ref(),
            sc_oracle: sc_oracle_fit.as_ref(),
            sc_cv: sc_cv_fit.as_ref(),
            alpha: spec.alpha,
        };
        if variant_metrics(*variant, &inp, &mut values).is_err() {
            failures.push(variant.as_str().to_string());
        }
    }

    RepResult { values, failures }
}

/// Run the full panel. Deterministic for a fixed spec regardless of
/// `parallelism`.
pub fn run_panel(spec: &ExperimentSpec) -> Result<MetricsTable> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.parallelism.max(1))
        .build()
        .map_err(|e| Error::DegenerateInput(format!("thread pool: {e}")))?;

    let mut table = MetricsTable::default();
    for (config_idx, cfg) in spec.configs().iter().enumerate() {
        let reps: Vec<RepResult> = pool.install(|| {
            (0..spec.replications as u64)
                .into_par_iter()
                .map(|rep| run_replication(spec, cfg, config_idx as u64, rep))
                .collect()
        });

        // Ordered reduction.
        let mut samples: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
        let mut fails: BTreeMap<String, usize> = BTreeMap::new();
        for label in spec.estimators.iter().map(|e| e.as_str().to_string()).chain(
            spec.ci_variants.iter().map(|v| v.as_str().to_string()),
        ) {
            fails.entry(label).or_insert(0);
        }
        for rep in &reps {
            for (key, value) in &rep.values {
                samples.entry(key.clone()).or_default().push(*value);
            }
            for f in &rep.failures {
                *fails.entry(f.clone()).or_insert(0) += 1;
            }
        }

        for (key, vals) in &samples {
            let n_ok = vals.len();
            let n_fail = fails.get(&key.0).copied().unwrap_or(0);
            let mean = vals.iter().sum::<f64>() / n_ok as f64;
            let mut sorted = vals.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let median = quantile(&sorted, 0.5);
            let sd = if key.1.starts_with("cover") {
                (mean * (1.0 - mean) / n_ok as f64).sqrt()
            } else if n_ok > 1 {
                (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (n_ok - 1) as f64)
                    .sqrt()
            } else {
                0.0
            };
            table.rows.push(MetricsRow {
                sigma_a: cfg.sigma_a,
                sigma_y: cfg.sigma_y,
                beta_u: cfg.beta_u,
                estimator: key.0.clone(),
                metric: key.1.clone(),
                mean,
                median,
                sd,
                q05: quantile(&sorted, 0.05),
                q95: quantile(&sorted, 0.95),
                n_ok,
                n_fail,
            });
        }
    }
    Ok(table)
}

/// The introductory toy experiment: the toy configuration swept over a
/// sigma_a grid, comparing the two-stage (with ad-hoc intervals) against
/// SuperCENT tuned by cross-validation.
pub fn toy_experiment(
    sigma_a_grid: &[f64],
    replications: usize,
    master_seed: u64,
    parallelism: usize,
) -> Result<MetricsTable> {
    if sigma_a_grid.is_empty() {
        return Err(Error::DegenerateInput("sigma_a grid is empty".into()));
    }
    let base = toy_config();
    let mut spec = ExperimentSpec::new(base.clone());
    spec.sweep_sigma_a = sigma_a_grid.to_vec();
    spec.sweep_sigma_y = vec![base.sigma_y];
    spec.sweep_beta_u = vec![base.beta_u];
    spec.estimators = vec![Estimator::TwoStage, Estimator::ScCv];
    spec.ci_variants = vec![CiVariant::TsAdhoc, CiVariant::ScCv];
    spec.replications = replications;
    spec.master_seed = master_seed;
    spec.parallelism = parallelism;
    run_panel(&spec)
}

/// The default Figure-style sigma_a grid for the toy experiment:
/// 2^1, 2^1.5, ..., 2^5.
pub fn toy_sigma_a_grid() -> Vec<f64> {
    (0..9).map(|i| (2.0f64).powf(1.0 + 0.5 * i as f64)).collect()
}
