//! The knowledge model: a double-exponential capacity law whose parameters
//! are tracked against data-driven measurements by a particle filter.

mod fit;

pub use fit::{fit_initial, FitResult};

use nalgebra::{Matrix4, Vector4};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DegradationError {
    #[error("parameter vector contains a non-finite component")]
    NonFiniteParams,
    #[error("too few points in fitting window: {got} (need at least {need})")]
    TooFewPoints { got: usize, need: usize },
    #[error("weights are not normalized: sum {0}")]
    UnnormalizedWeights(f64),
    #[error("initial covariance is not positive semidefinite")]
    BadCovariance,
}

/// Lower clamp for the amplitudes `a`, `c`.
pub const MIN_AMPLITUDE: f64 = 1e-6;
/// Upper clamp for the decay rates `b`, `d` (kept strictly negative).
pub const MAX_RATE: f64 = -1e-9;

/// Parameters of the capacity law `C(k) = a*exp(b*k) + c*exp(d*k)`.
///
/// The feasible set keeps amplitudes positive and rates negative: the first
/// term captures fast early-life loss, the second slow long-term aging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradationParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl DegradationParams {
    pub fn as_array(&self) -> [f64; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        DegradationParams { a: v[0], b: v[1], c: v[2], d: v[3] }
    }

    pub fn is_feasible(&self) -> bool {
        self.a >= MIN_AMPLITUDE && self.c >= MIN_AMPLITUDE && self.b <= MAX_RATE && self.d <= MAX_RATE
    }
}

/// Capacity of the law at cycle `k`, in ampere-hours.
pub fn eval_capacity(theta: &DegradationParams, k: u32) -> f64 {
    let k = k as f64;
    theta.a * (theta.b * k).exp() + theta.c * (theta.d * k).exp()
}

/// Componentwise clamp onto the feasible set. Idempotent.
pub fn project(raw: [f64; 4]) -> Result<DegradationParams, DegradationError> {
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(DegradationError::NonFiniteParams);
    }
    Ok(DegradationParams {
        a: raw[0].max(MIN_AMPLITUDE),
        b: raw[1].min(MAX_RATE),
        c: raw[2].max(MIN_AMPLITUDE),
        d: raw[3].min(MAX_RATE),
    })
}

/// Particle filter settings.
#[derive(Debug, Clone)]
pub struct PfConfig {
    /// Particle count.
    pub n: usize,
    /// Process-noise covariance diagonal. `None` derives a scale-aware
    /// default: per-component std `1e-3 * |theta_hat|`.
    pub q_diag: Option<[f64; 4]>,
    /// Measurement-noise standard deviation in ampere-hours.
    pub sigma_err: f64,
    /// Resample when ESS drops below this fraction of `n`.
    pub ess_threshold_fraction: f64,
    /// First cycle of the least-squares fitting window (skips noisy
    /// early measurements).
    pub k_ini: u32,
    pub seed: u64,
    /// When set, replaces the fitted covariance at particle initialization
    /// with this diagonal; all zeros gives a degenerate (noise-free) start.
    pub init_spread: Option<[f64; 4]>,
}

impl Default for PfConfig {
    fn default() -> Self {
        PfConfig {
            n: 500,
            q_diag: None,
            sigma_err: 0.01,
            ess_threshold_fraction: 0.5,
            k_ini: 3,
            seed: 0,
            init_spread: None,
        }
    }
}

impl PfConfig {
    /// Resolve the process-noise diagonal against a reference estimate.
    pub fn resolve_q_diag(&self, theta_hat: &DegradationParams) -> [f64; 4] {
        self.q_diag.unwrap_or_else(|| {
            let t = theta_hat.as_array();
            [0, 1, 2, 3].map(|i| {
                let s = 1e-3 * t[i].abs();
                s * s
            })
        })
    }
}

/// Weighted parameter hypotheses tracked by the filter.
#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    particles: Vec<DegradationParams>,
    weights: Vec<f64>,
    rng: ChaCha8Rng,
    /// Set when a weight update underflowed everywhere and was reset.
    pub weights_reset: bool,
}

impl ParticleEnsemble {
    pub fn n(&self) -> usize {
        self.particles.len()
    }

    pub fn particles(&self) -> &[DegradationParams] {
        &self.particles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Build from explicit parts with uniform weights; used by tests.
    pub fn from_particles(particles: Vec<DegradationParams>, seed: u64) -> Self {
        assert!(particles.len() >= 2, "need at least two particles");
        let n = particles.len();
        ParticleEnsemble {
            particles,
            weights: vec![1.0 / n as f64; n],
            rng: ChaCha8Rng::seed_from_u64(seed),
            weights_reset: false,
        }
    }

    pub fn set_weights(&mut self, weights: Vec<f64>) {
        assert_eq!(weights.len(), self.particles.len());
        self.weights = weights;
    }

    /// Propagate every particle through the random-walk state model:
    /// `theta += eta`, `eta ~ N(0, diag(q_diag))`, then project back onto
    /// the feasible set. Weights are unchanged.
    pub fn propagate(&mut self, q_diag: &[f64; 4]) {
        let stds = q_diag.map(|v| v.max(0.0).sqrt());
        for p in &mut self.particles {
            let mut raw = p.as_array();
            for (i, r) in raw.iter_mut().enumerate() {
                if stds[i] > 0.0 {
                    let z: f64 = StandardNormal.sample(&mut self.rng);
                    *r += stds[i] * z;
                }
            }
            *p = project(raw).expect("finite after Gaussian perturbation");
        }
    }

    /// Gaussian likelihood update against the data-driven measurement
    /// `y_hat` at cycle `k`, in log domain, followed by normalization.
    ///
    /// If every log-weight underflows to -inf the weights are reset to
    /// uniform and `weights_reset` is flagged.
    pub fn update_weights(&mut self, y_hat: f64, k: u32, sigma_err: f64) {
        let inv_two_var = 1.0 / (2.0 * sigma_err * sigma_err);
        let mut log_w: Vec<f64> = self
            .particles
            .iter()
            .zip(&self.weights)
            .map(|(p, &w)| {
                let v = y_hat - eval_capacity(p, k);
                let lw = if w > 0.0 { w.ln() } else { f64::NEG_INFINITY };
                lw - v * v * inv_two_var
            })
            .collect();
        let max = log_w.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        if !max.is_finite() {
            let n = self.particles.len() as f64;
            self.weights = vec![1.0 / n; self.particles.len()];
            self.weights_reset = true;
            return;
        }
        for lw in &mut log_w {
            *lw = (*lw - max).exp();
        }
        let sum: f64 = log_w.iter().sum();
        for lw in &mut log_w {
            *lw /= sum;
        }
        self.weights = log_w;
    }

    /// Multinomial resampling when the effective sample size drops below
    /// `threshold_fraction * n`. Returns the drawn ancestor indices so
    /// parallel per-particle state can be carried along.
    pub fn resample_if_needed(
        &mut self,
        threshold_fraction: f64,
    ) -> Result<Option<Vec<usize>>, DegradationError> {
        let n = self.particles.len();
        let ess = effective_sample_size(&self.weights)?;
        if ess >= threshold_fraction * n as f64 {
            return Ok(None);
        }
        let mut cumulative = Vec::with_capacity(n);
        let mut acc = 0.0;
        for &w in &self.weights {
            acc += w;
            cumulative.push(acc);
        }
        let mut ancestors = Vec::with_capacity(n);
        let mut new_particles = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = self.rng.random();
            let idx = match cumulative.binary_search_by(|c| c.total_cmp(&u)) {
                Ok(i) => i,
                Err(i) => i.min(n - 1),
            };
            ancestors.push(idx);
            new_particles.push(self.particles[idx]);
        }
        self.particles = new_particles;
        self.weights = vec![1.0 / n as f64; n];
        Ok(Some(ancestors))
    }

    /// Weighted posterior mean of the parameters, projected onto the
    /// feasible set.
    pub fn estimate_state(&self) -> DegradationParams {
        let mut acc = [0.0; 4];
        for (p, &w) in self.particles.iter().zip(&self.weights) {
            let arr = p.as_array();
            for i in 0..4 {
                acc[i] += w * arr[i];
            }
        }
        project(acc).expect("weighted mean of feasible particles is finite")
    }
}

/// `1 / sum(w_i^2)` for normalized weights.
pub fn effective_sample_size(weights: &[f64]) -> Result<f64, DegradationError> {
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(DegradationError::UnnormalizedWeights(sum));
    }
    let sq: f64 = weights.iter().map(|w| w * w).sum();
    Ok(1.0 / sq)
}

/// Sample `cfg.n` particles from a Gaussian around the fitted estimate, then
/// project each onto the feasible set; weights start uniform.
///
/// A zero covariance degenerates to every particle equal to `theta_hat`.
pub fn init_particles(
    theta_hat: &DegradationParams,
    sigma: &Matrix4<f64>,
    cfg: &PfConfig,
) -> Result<ParticleEnsemble, DegradationError> {
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(DegradationError::BadCovariance);
    }
    // Cholesky of the covariance; fall back to the diagonal when the matrix
    // is only semidefinite (e.g. all zeros).
    let chol = sigma.cholesky().map(|c| c.l());
    let diag_stds: [f64; 4] = {
        let mut s = [0.0; 4];
        for i in 0..4 {
            let v = sigma[(i, i)];
            if v < -1e-12 {
                return Err(DegradationError::BadCovariance);
            }
            s[i] = v.max(0.0).sqrt();
        }
        s
    };

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base = Vector4::from_column_slice(&theta_hat.as_array());
    let mut particles = Vec::with_capacity(cfg.n);
    for _ in 0..cfg.n {
        let z = Vector4::from_fn(|_, _| StandardNormal.sample(&mut rng));
        let sample = match &chol {
            Some(l) => base + l * z,
            None => Vector4::from_fn(|i, _| base[i] + diag_stds[i] * z[i]),
        };
        particles.push(project([sample[0], sample[1], sample[2], sample[3]])?);
    }
    let n = cfg.n;
    assert!(n >= 2, "particle count must be >= 2");
    Ok(ParticleEnsemble {
        particles,
        weights: vec![1.0 / n as f64; n],
        rng: ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e3779b97f4a7c15)),
        weights_reset: false,
    })
}

/// Write one particle per row as `a,b,c,d,weight`.
pub fn write_ensemble_csv(
    ensemble: &ParticleEnsemble,
    path: impl AsRef<std::path::Path>,
) -> std::io::Result<()> {
    use std::io::Write;
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "a,b,c,d,weight")?;
    for (p, w) in ensemble.particles().iter().zip(ensemble.weights()) {
        writeln!(f, "{},{},{},{},{}", p.a, p.b, p.c, p.d, w)?;
    }
    Ok(())
}
