//! File formats: headerless CSV matrices, dataset directories with a JSON
//! manifest, fit/selection/inference JSON reports, the metrics-table CSV,
//! and a minimal SVG line chart for panel output.
//!
//! Numbers are written with Rust's shortest round-trip formatting (dot
//! decimal separator, locale independent), so write-then-read is lossless.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::CoefficientInference;
use crate::model::{Dataset, SimulationConfig, UnifiedModelParams};
use crate::sim::{MetricsRow, MetricsTable};
use crate::solver::{CellStatus, CvReport};
use crate::two_stage::{FitResult, Method};

pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn parse_cell(raw: &str, row: usize, col: usize) -> Result<f64> {
    let t = raw.trim();
    match t {
        "NaN" | "nan" => return Ok(f64::NAN),
        "inf" => return Ok(f64::INFINITY),
        "-inf" => return Ok(f64::NEG_INFINITY),
        _ => {}
    }
    t.parse::<f64>().map_err(|e| Error::Parse {
        row,
        col,
        message: format!("{t:?} is not a number: {e}"),
    })
}

pub fn matrix_to_csv(a: &Array2<f64>) -> String {
    let mut out = String::new();
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format_f64(a[[i, j]]));
        }
        out.push('\n');
    }
    out
}

pub fn matrix_from_csv(text: &str) -> Result<Array2<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (j, cell) in line.split(',').enumerate() {
            row.push(parse_cell(cell, i + 1, j + 1)?);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse {
                    row: i + 1,
                    col: row.len(),
                    message: format!(
                        "expected {} columns but found {}",
                        first.len(),
                        row.len()
                    ),
                });
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse { row: 0, col: 0, message: "empty matrix file".into() });
    }
    let ncols = rows[0].len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    let nrows = flat.len() / ncols;
    Array2::from_shape_vec((nrows, ncols), flat)
        .map_err(|e| Error::DimensionMismatch(e.to_string()))
}

pub fn write_matrix_csv(path: &Path, a: &Array2<f64>) -> Result<()> {
    fs::write(path, matrix_to_csv(a))?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    matrix_from_csv(&fs::read_to_string(path)?)
}

pub fn vector_to_csv(v: &Array1<f64>) -> String {
    let mut out = String::new();
    for e in v.iter() {
        out.push_str(&format_f64(*e));
        out.push('\n');
    }
    out
}

pub fn vector_from_csv(text: &str) -> Result<Array1<f64>> {
    let m = matrix_from_csv(text)?;
    if m.ncols() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "expected a single column, found {}",
            m.ncols()
        )));
    }
    Ok(m.column(0).to_owned())
}

pub fn write_vector_csv(path: &Path, v: &Array1<f64>) -> Result<()> {
    fs::write(path, vector_to_csv(v))?;
    Ok(())
}

pub fn read_vector_csv(path: &Path) -> Result<Array1<f64>> {
    vector_from_csv(&fs::read_to_string(path)?)
}

/// Generative truth recorded alongside a simulated dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestParams {
    pub d: f64,
    pub beta_x: Vec<f64>,
    pub beta_u: f64,
    pub beta_v: f64,
    pub sigma_a: f64,
    pub sigma_y: f64,
    pub v_mixing: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    pub params: ManifestParams,
}

impl Manifest {
    pub fn from_truth(cfg: &SimulationConfig, params: &UnifiedModelParams) -> Self {
        Manifest {
            n: params.n,
            p: params.p,
            seed: cfg.seed,
            params: ManifestParams {
                d: params.d,
                beta_x: params.beta_x.to_vec(),
                beta_u: params.beta_u,
                beta_v: params.beta_v,
                sigma_a: params.sigma_a,
                sigma_y: params.sigma_y,
                v_mixing: cfg.v_mixing,
                u: params.u.to_vec(),
                v: params.v.to_vec(),
            },
        }
    }

    pub fn to_params(&self) -> UnifiedModelParams {
        UnifiedModelParams {
            n: self.n,
            p: self.p,
            d: self.params.d,
            u: Array1::from_vec(self.params.u.clone()),
            v: Array1::from_vec(self.params.v.clone()),
            beta_x: Array1::from_vec(self.params.beta_x.clone()),
            beta_u: self.params.beta_u,
            beta_v: self.params.beta_v,
            sigma_a: self.params.sigma_a,
            sigma_y: self.params.sigma_y,
        }
    }
}

/// Write A.csv, X.csv, y.csv and manifest.json into a directory.
pub fn write_dataset(dir: &Path, data: &Dataset, manifest: Option<&Manifest>) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_matrix_csv(&dir.join("A.csv"), &data.a)?;
    write_matrix_csv(&dir.join("X.csv"), &data.x)?;
    write_vector_csv(&dir.join("y.csv"), &data.y)?;
    if let Some(m) = manifest {
        fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(m)?)?;
    }
    Ok(())
}

/// Read a dataset directory; the manifest is optional (real data has none).
pub fn read_dataset(dir: &Path) -> Result<(Dataset, Option<Manifest>)> {
    let a = read_matrix_csv(&dir.join("A.csv"))?;
    let x = read_matrix_csv(&dir.join("X.csv"))?;
    let y = read_vector_csv(&dir.join("y.csv"))?;
    let data = Dataset::new(a, x, y)?;
    let manifest_path = dir.join("manifest.json");
    let manifest = if manifest_path.exists() {
        Some(serde_json::from_str(&fs::read_to_string(manifest_path)?)?)
    } else {
        None
    };
    Ok((data, manifest))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResultJson {
    pub method: String,
    pub d_hat: f64,
    pub u_hat: Vec<f64>,
    pub v_hat: Vec<f64>,
    pub beta_x_hat: Vec<f64>,
    pub beta_u_hat: f64,
    pub beta_v_hat: f64,
    pub sigma_y_hat_sq: f64,
    pub sigma_a_hat_sq: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl From<&FitResult> for FitResultJson {
    fn from(f: &FitResult) -> Self {
        FitResultJson {
            method: f.method.as_str().into(),
            d_hat: f.d_hat,
            u_hat: f.u_hat.to_vec(),
            v_hat: f.v_hat.to_vec(),
            beta_x_hat: f.beta_x_hat.to_vec(),
            beta_u_hat: f.beta_u_hat,
            beta_v_hat: f.beta_v_hat,
            sigma_y_hat_sq: f.sigma_y_hat_sq,
            sigma_a_hat_sq: f.sigma_a_hat_sq,
            iterations: f.iterations,
            converged: f.converged,
        }
    }
}

impl FitResultJson {
    pub fn to_fit(&self) -> Result<FitResult> {
        Ok(FitResult {
            method: Method::parse(&self.method)?,
            d_hat: self.d_hat,
            u_hat: Array1::from_vec(self.u_hat.clone()),
            v_hat: Array1::from_vec(self.v_hat.clone()),
            beta_x_hat: Array1::from_vec(self.beta_x_hat.clone()),
            beta_u_hat: self.beta_u_hat,
            beta_v_hat: self.beta_v_hat,
            sigma_y_hat_sq: self.sigma_y_hat_sq,
            sigma_a_hat_sq: self.sigma_a_hat_sq,
            iterations: self.iterations,
            converged: self.converged,
        })
    }
}

pub fn write_fit(path: &Path, fit: &FitResult) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(&FitResultJson::from(fit))?)?;
    Ok(())
}

pub fn read_fit(path: &Path) -> Result<FitResult> {
    let json: FitResultJson = serde_json::from_str(&fs::read_to_string(path)?)?;
    json.to_fit()
}

pub fn cv_table_to_csv(report: &CvReport) -> String {
    let mut out = String::from("lambda,fold,sse,status\n");
    for cell in &report.table {
        out.push_str(&format!(
            "{},{},{},{}\n",
            format_f64(cell.lambda),
            cell.fold,
            if cell.status == CellStatus::Ok { format_f64(cell.sse) } else { "NaN".into() },
            cell.status.as_str()
        ));
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SelectionSummary {
    pub lambda_min: f64,
    pub method: String,
    pub grid: Vec<f64>,
    pub k_folds: usize,
}

pub fn write_cv_outputs(dir: &Path, report: &CvReport, method: &str) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("cv_table.csv"), cv_table_to_csv(report))?;
    let summary = SelectionSummary {
        lambda_min: report.lambda_min,
        method: method.into(),
        grid: report.grid.clone(),
        k_folds: report.k_folds,
    };
    fs::write(dir.join("selection.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoefficientJson {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InferenceReport {
    pub variant: String,
    pub alpha: f64,
    pub coefficients: Vec<CoefficientJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub network_se_csv_path: Option<String>,
}

impl InferenceReport {
    pub fn new(
        variant: &str,
        alpha: f64,
        cis: &[CoefficientInference],
        network_se_csv_path: Option<String>,
    ) -> Self {
        InferenceReport {
            variant: variant.into(),
            alpha,
            coefficients: cis
                .iter()
                .map(|c| CoefficientJson {
                    name: c.name.clone(),
                    estimate: c.estimate,
                    se: c.se,
                    ci_lo: c.ci_lo,
                    ci_hi: c.ci_hi,
                })
                .collect(),
            network_se_csv_path,
        }
    }
}

pub fn metrics_to_csv(table: &MetricsTable) -> String {
    let mut out =
        String::from("sigma_a,sigma_y,beta_u,estimator,metric,mean,median,sd,q05,q95,n_ok,n_fail\n");
    for r in &table.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            format_f64(r.sigma_a),
            format_f64(r.sigma_y),
            format_f64(r.beta_u),
            r.estimator,
            r.metric,
            format_f64(r.mean),
            format_f64(r.median),
            format_f64(r.sd),
            format_f64(r.q05),
            format_f64(r.q95),
            r.n_ok,
            r.n_fail
        ));
    }
    out
}

pub fn write_metrics_csv(path: &Path, table: &MetricsTable) -> Result<()> {
    fs::write(path, metrics_to_csv(table))?;
    Ok(())
}

/// Minimal SVG line chart of one metric's mean against sigma_a (log2 x-axis,
/// log10 y-axis when all values are positive), one polyline per estimator.
pub fn metric_chart_svg(table: &MetricsTable, metric: &str) -> String {
    let rows: Vec<&MetricsRow> = table.rows.iter().filter(|r| r.metric == metric).collect();
    let mut estimators: Vec<String> = rows.iter().map(|r| r.estimator.clone()).collect();
    estimators.sort();
    estimators.dedup();

    let (w, h, ml, mb) = (640.0, 420.0, 60.0, 40.0);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    if rows.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let log_y = rows.iter().all(|r| r.mean > 0.0);
    let xs: Vec<f64> = rows.iter().map(|r| r.sigma_a.log2()).collect();
    let ys: Vec<f64> =
        rows.iter().map(|r| if log_y { r.mean.log10() } else { r.mean }).collect();
    let (xmin, xmax) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    let (ymin, ymax) = ys
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| (lo.min(y), hi.max(y)));
    let xspan = (xmax - xmin).max(1e-9);
    let yspan = (ymax - ymin).max(1e-9);
    let px = |x: f64| ml + (x - xmin) / xspan * (w - ml - 20.0);
    let py = |y: f64| (h - mb) - (y - ymin) / yspan * (h - mb - 20.0);

    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n",
        h - mb,
        w - 20.0
    ));
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"20\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" font-size=\"12\">log2 sigma_a</text>\n",
        w / 2.0 - 40.0,
        h - 8.0
    ));
    svg.push_str(&format!(
        "<text x=\"12\" y=\"{}\" font-size=\"12\" transform=\"rotate(-90 12 {})\">{}{}</text>\n",
        h / 2.0,
        h / 2.0,
        if log_y { "log10 " } else { "" },
        metric
    ));

    let colors = ["#d62728", "#2ca02c", "#1f77b4", "#9467bd", "#ff7f0e"];
    for (k, est) in estimators.iter().enumerate() {
        let mut pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| &r.estimator == est)
            .map(|r| (r.sigma_a.log2(), if log_y { r.mean.log10() } else { r.mean }))
            .collect();
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let path: Vec<String> =
            pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let color = colors[k % colors.len()];
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n",
            path.join(" ")
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"{color}\">{est}</text>\n",
            w - 150.0,
            30.0 + 16.0 * k as f64
        ));
    }
    svg.push_str("</svg>\n");
    svg
}
