//! Domain types for the unified network-plus-regression framework and
//! deterministic synthetic data generation.
//!
//! The generative model is
//!   A = d u v^T + E,            E_ij iid N(0, sigma_a^2)
//!   y = X beta_x + u beta_u + v beta_v + eps,   eps_i iid N(0, sigma_y^2)
//! with the identifiability scale ||u|| = ||v|| = sqrt(n).
//!
//! All generation takes an explicit ChaCha8 stream (never a global RNG); a
//! replication's stream is derived from (master seed, config index, rep
//! index), so parallel Monte Carlo runs are reproducible in isolation.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// The RNG used for all data generation: ChaCha8, seeded from the master
/// seed with one independent stream per (configuration, replication) pair.
pub type RngStream = ChaCha8Rng;

/// Derive an independent stream for a (configuration, replication, purpose)
/// triple. The indices are packed into the 64-bit ChaCha stream id
/// (8 purpose bits, 24 config bits, 32 replication bits), so distinct
/// triples never collide.
pub fn derive_substream(
    master_seed: u64,
    config_idx: u64,
    rep_idx: u64,
    purpose: u8,
) -> RngStream {
    debug_assert!(config_idx < (1 << 24) && rep_idx < (1 << 32));
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(
        ((purpose as u64) << 56) | ((config_idx & 0xFF_FFFF) << 32) | (rep_idx & 0xFFFF_FFFF),
    );
    rng
}

/// Data-generation stream for a (configuration, replication) pair.
pub fn derive_stream(master_seed: u64, config_idx: u64, rep_idx: u64) -> RngStream {
    derive_substream(master_seed, config_idx, rep_idx, 0)
}

/// Ground-truth generative parameters.
#[derive(Debug, Clone)]
pub struct UnifiedModelParams {
    pub n: usize,
    pub p: usize,
    /// Network signal strength.
    pub d: f64,
    /// True hub centrality, ||u|| = sqrt(n).
    pub u: Array1<f64>,
    /// True authority centrality, ||v|| = sqrt(n).
    pub v: Array1<f64>,
    pub beta_x: Array1<f64>,
    pub beta_u: f64,
    pub beta_v: f64,
    pub sigma_a: f64,
    pub sigma_y: f64,
}

impl UnifiedModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.n <= self.p + 2 {
            return Err(Error::DegenerateInput(format!(
                "need n > p + 2 (n = {}, p = {})",
                self.n, self.p
            )));
        }
        if self.u.len() != self.n || self.v.len() != self.n {
            return Err(Error::DimensionMismatch("centrality length != n".into()));
        }
        if self.beta_x.len() != self.p {
            return Err(Error::DimensionMismatch("beta_x length != p".into()));
        }
        if self.d <= 0.0 {
            return Err(Error::DegenerateInput("d must be positive".into()));
        }
        if self.sigma_a < 0.0 || self.sigma_y < 0.0 {
            return Err(Error::DegenerateInput("noise sds must be nonnegative".into()));
        }
        let sqrt_n = (self.n as f64).sqrt();
        for (name, z) in [("u", &self.u), ("v", &self.v)] {
            let norm = linalg::norm2(z.view());
            if (norm - sqrt_n).abs() > 1e-8 {
                return Err(Error::DegenerateInput(format!(
                    "||{name}|| = {norm} but sqrt(n) = {sqrt_n}"
                )));
            }
        }
        Ok(())
    }

    /// Scaled network noise-to-signal ratio kappa = sigma_a^2 / (d^2 n).
    pub fn kappa(&self) -> f64 {
        self.sigma_a * self.sigma_a / (self.d * self.d * self.n as f64)
    }

    /// The noiseless network A_0 = d u v^T.
    pub fn true_network(&self) -> Array2<f64> {
        let mut a0 = Array2::<f64>::zeros((self.n, self.n));
        for i in 0..self.n {
            for j in 0..self.n {
                a0[[i, j]] = self.d * self.u[i] * self.v[j];
            }
        }
        a0
    }
}

/// Observed data triple.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub a: Array2<f64>,
    pub x: Array2<f64>,
    pub y: Array1<f64>,
}

impl Dataset {
    /// Validates mutual dimensions, finiteness, and invertibility of X^T X.
    pub fn new(a: Array2<f64>, x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "network must be square, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if x.nrows() != n || y.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "inconsistent dimensions: A is {n}x{n}, X has {} rows, y has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        let p = x.ncols();
        if n <= p + 2 {
            return Err(Error::DegenerateInput(format!(
                "need n > p + 2 (n = {n}, p = {p})"
            )));
        }
        if a.iter().any(|e| !e.is_finite())
            || x.iter().any(|e| !e.is_finite())
            || y.iter().any(|e| !e.is_finite())
        {
            return Err(Error::DegenerateInput("non-finite entry in dataset".into()));
        }
        // X^T X must be invertible.
        let xtx = x.t().dot(&x);
        linalg::sym_inverse(xtx.view())?;
        Ok(Dataset { a, x, y })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// One simulation configuration; `realize` draws the centralities and
/// `generate_dataset` draws the observed data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n: usize,
    pub p: usize,
    pub d: f64,
    pub beta_x: Vec<f64>,
    pub beta_u: f64,
    pub beta_v: f64,
    pub sigma_a: f64,
    pub sigma_y: f64,
    /// Coefficient linking the raw authority draw to the hub draw
    /// (v = v_mixing * u + noise before rescaling).
    pub v_mixing: f64,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sigma_a < 0.0 || self.sigma_y < 0.0 {
            return Err(Error::DegenerateInput("noise sds must be nonnegative".into()));
        }
        if self.beta_x.len() != self.p {
            return Err(Error::DimensionMismatch("beta_x length != p".into()));
        }
        if self.n <= self.p + 2 {
            return Err(Error::DegenerateInput("need n > p + 2".into()));
        }
        Ok(())
    }

    /// Draw the true centralities for one replication.
    pub fn realize(&self, rng: &mut RngStream) -> Result<UnifiedModelParams> {
        self.validate()?;
        let (u, v) = make_centrality_pair(self.n, self.v_mixing, rng)?;
        Ok(UnifiedModelParams {
            n: self.n,
            p: self.p,
            d: self.d,
            u,
            v,
            beta_x: Array1::from_vec(self.beta_x.clone()),
            beta_u: self.beta_u,
            beta_v: self.beta_v,
            sigma_a: self.sigma_a,
            sigma_y: self.sigma_y,
        })
    }

    /// Population correlation of (u, v) implied by the mixing construction:
    /// v_mixing / sqrt(v_mixing^2 + 1).
    pub fn population_rho(&self) -> f64 {
        self.v_mixing / (self.v_mixing * self.v_mixing + 1.0).sqrt()
    }
}

/// Rescale a nonzero vector to length sqrt(n).
pub fn rescale_to_sqrt_n(z: ArrayView1<f64>) -> Result<Array1<f64>> {
    let norm = linalg::norm2(z);
    if norm == 0.0 {
        return Err(Error::DegenerateInput("cannot rescale the zero vector".into()));
    }
    let target = (z.len() as f64).sqrt();
    Ok(&z * (target / norm))
}

/// Hub/authority centrality pair: u from iid N(0,1) draws, v from
/// v_mixing * u + fresh N(0,1) noise, both rescaled to norm sqrt(n).
pub fn make_centrality_pair(
    n: usize,
    v_mixing: f64,
    rng: &mut RngStream,
) -> Result<(Array1<f64>, Array1<f64>)> {
    if n < 2 {
        return Err(Error::DegenerateInput(format!("need n >= 2, got {n}")));
    }
    let u_raw = Array1::from_iter((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let eps = Array1::from_iter((0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let v_raw = &u_raw * v_mixing + &eps;
    let u = rescale_to_sqrt_n(u_raw.view())?;
    let v = rescale_to_sqrt_n(v_raw.view())?;
    Ok((u, v))
}

/// Draw the observed triple (A, X, y). X gets a leading column of ones and
/// p - 1 iid N(0,1) columns (filled column by column); E is drawn row-major.
pub fn generate_dataset(params: &UnifiedModelParams, rng: &mut RngStream) -> Result<Dataset> {
    params.validate()?;
    let n = params.n;
    let p = params.p;

    let mut x = Array2::<f64>::zeros((n, p));
    for i in 0..n {
        x[[i, 0]] = 1.0;
    }
    for j in 1..p {
        for i in 0..n {
            x[[i, j]] = rng.sample::<f64, _>(StandardNormal);
        }
    }

    let mut a = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let noise: f64 = rng.sample(StandardNormal);
            a[[i, j]] = params.d * params.u[i] * params.v[j] + params.sigma_a * noise;
        }
    }

    let mut y = x.dot(&params.beta_x);
    for i in 0..n {
        let noise: f64 = rng.sample(StandardNormal);
        y[i] += params.beta_u * params.u[i] + params.beta_v * params.v[i]
            + params.sigma_y * noise;
    }

    Dataset::new(a, x, y)
}

/// The introductory toy experiment configuration: n = 256, p = 3,
/// A = u v^T + E (d = 1), beta_x = (1, 3, 5), y = X beta_x + 16 u + v + eps
/// with sigma_y^2 = 2^-4. The network noise sd sigma_a is the sweep
/// parameter; the default here is the low end of the sweep grid.
pub fn toy_config() -> SimulationConfig {
    SimulationConfig {
        n: 256,
        p: 3,
        d: 1.0,
        beta_x: vec![1.0, 3.0, 5.0],
        beta_u: 16.0,
        beta_v: 1.0,
        sigma_a: 2.0,
        sigma_y: (2.0f64).powi(-4).sqrt(),
        v_mixing: 0.5,
        seed: 0,
    }
}
