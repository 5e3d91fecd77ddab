//! Variational mode decomposition of capacity time series.
//!
//! The solver runs the standard frequency-domain alternating scheme on the
//! positive half-spectrum: per-mode Wiener updates, center-of-gravity
//! frequency updates, and optional dual ascent on the reconstruction
//! constraint. Signals are mirror-extended by half their length at each end
//! before the transform and cropped afterwards to suppress edge ringing on
//! short capacity series.

use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::pso::{self, SwarmConfig};

#[derive(Debug, Error)]
pub enum VmdError {
    #[error("signal too short: {0} samples (need at least 8)")]
    SignalTooShort(usize),
    #[error("signal contains a non-finite sample at index {0}")]
    NonFiniteInput(usize),
    #[error("empty search space: {0}")]
    EmptySearchSpace(String),
}

/// Initial placement of the mode center frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OmegaInit {
    /// Evenly spaced over [0, 0.5).
    Uniform,
    /// All modes start at zero frequency.
    Zero,
}

/// Decomposition parameters.
#[derive(Debug, Clone)]
pub struct VmdConfig {
    /// Number of modes to extract.
    pub k_max: usize,
    /// Bandwidth penalty; larger values give narrower modes.
    pub alpha: f64,
    /// Dual ascent step for the reconstruction multiplier. 0 leaves the
    /// residual to absorb measurement noise.
    pub tau: f64,
    /// Convergence tolerance on the summed relative mode change per sweep.
    pub tol: f64,
    pub max_iters: usize,
    pub init_omega: OmegaInit,
}

impl Default for VmdConfig {
    fn default() -> Self {
        VmdConfig {
            k_max: 3,
            alpha: 2000.0,
            tau: 0.0,
            tol: 1e-7,
            max_iters: 500,
            init_omega: OmegaInit::Uniform,
        }
    }
}

impl VmdConfig {
    fn validate(&self) {
        assert!(self.k_max >= 1, "k_max must be >= 1");
        assert!(self.alpha > 0.0, "alpha must be positive");
        assert!(self.tau >= 0.0, "tau must be non-negative");
        assert!(self.tol > 0.0, "tol must be positive");
        assert!(self.max_iters >= 1, "max_iters must be >= 1");
    }
}

/// The intrinsic mode functions of one decomposition.
#[derive(Debug, Clone)]
pub struct ImfSet {
    modes: Vec<Vec<f64>>,
    omegas: Vec<f64>,
    residual: Vec<f64>,
    iterations_used: usize,
    converged: bool,
}

impl ImfSet {
    /// Band-limited components, sorted by ascending center frequency. Each
    /// has the input length.
    pub fn modes(&self) -> &[Vec<f64>] {
        &self.modes
    }

    /// Center frequencies in cycles per sample, in [0, 0.5], sorted ascending.
    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    /// Input minus the sum of all modes.
    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn iterations_used(&self) -> usize {
        self.iterations_used
    }

    /// False when the sweep hit `max_iters` before meeting `tol`.
    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn num_modes(&self) -> usize {
        self.modes.len()
    }

    pub fn len(&self) -> usize {
        self.modes.first().map(|m| m.len()).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.residual.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Build directly from parts; intended for tests and tooling.
    pub fn from_parts(modes: Vec<Vec<f64>>, omegas: Vec<f64>, residual: Vec<f64>) -> Self {
        assert_eq!(modes.len(), omegas.len());
        ImfSet { modes, omegas, residual, iterations_used: 0, converged: true }
    }
}

/// Pointwise sum of all modes (residual excluded).
pub fn reconstruct(imfs: &ImfSet) -> Vec<f64> {
    let n = imfs.len();
    let mut out = vec![0.0; n];
    for mode in imfs.modes() {
        for (o, v) in out.iter_mut().zip(mode) {
            *o += *v;
        }
    }
    out
}

fn fft(data: &mut [Complex64], inverse: bool) {
    let mut planner = FftPlanner::new();
    let f = if inverse {
        planner.plan_fft_inverse(data.len())
    } else {
        planner.plan_fft_forward(data.len())
    };
    f.process(data);
}

/// Mirror-extend by half the length at each end. Returns the extended signal
/// and the offset of the original within it.
fn mirror_extend(signal: &[f64]) -> (Vec<f64>, usize) {
    let n = signal.len();
    let half = n / 2;
    let mut out = Vec::with_capacity(n + 2 * half);
    out.extend(signal[..half].iter().rev());
    out.extend_from_slice(signal);
    out.extend(signal[n - half..].iter().rev());
    (out, half)
}

/// Decompose `signal` into `config.k_max` band-limited modes.
///
/// Hitting `max_iters` is not an error; the result is returned with
/// `converged() == false`.
pub fn decompose(signal: &[f64], config: &VmdConfig) -> Result<ImfSet, VmdError> {
    config.validate();
    if signal.len() < 8 {
        return Err(VmdError::SignalTooShort(signal.len()));
    }
    if let Some(i) = signal.iter().position(|v| !v.is_finite()) {
        return Err(VmdError::NonFiniteInput(i));
    }

    let n = signal.len();
    let (ext, offset) = mirror_extend(signal);
    let t = ext.len();
    let m = t / 2 + 1; // positive-frequency bins, nu in [0, 0.5]
    let nu: Vec<f64> = (0..m).map(|i| i as f64 / t as f64).collect();

    let mut spectrum: Vec<Complex64> = ext.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft(&mut spectrum, false);
    let f_hat: Vec<Complex64> = spectrum[..m].to_vec();

    let k = config.k_max;
    let mut u_hat = vec![vec![Complex64::ZERO; m]; k];
    let mut u_prev = vec![vec![Complex64::ZERO; m]; k];
    let mut lambda_hat = vec![Complex64::ZERO; m];
    let mut omega: Vec<f64> = (0..k)
        .map(|i| match config.init_omega {
            OmegaInit::Uniform => 0.5 * i as f64 / k as f64,
            OmegaInit::Zero => 0.0,
        })
        .collect();

    let mut iterations = 0;
    let mut converged = false;
    for iter in 0..config.max_iters {
        for (kk, prev) in u_prev.iter_mut().enumerate() {
            prev.copy_from_slice(&u_hat[kk]);
        }

        // Gauss-Seidel sweep over modes.
        for kk in 0..k {
            let mut others = vec![Complex64::ZERO; m];
            for (jj, mode) in u_hat.iter().enumerate() {
                if jj != kk {
                    for (o, v) in others.iter_mut().zip(mode) {
                        *o += *v;
                    }
                }
            }
            let w = omega[kk];
            for i in 0..m {
                let num = f_hat[i] - others[i] + lambda_hat[i] * 0.5;
                let d = nu[i] - w;
                u_hat[kk][i] = num / (1.0 + 2.0 * config.alpha * d * d);
            }
            // Center of gravity of the mode's power spectrum.
            let mut weighted = 0.0;
            let mut power = 0.0;
            for i in 0..m {
                let p = u_hat[kk][i].norm_sqr();
                weighted += nu[i] * p;
                power += p;
            }
            if power > 1e-300 {
                omega[kk] = weighted / power;
            }
        }

        if config.tau > 0.0 {
            for i in 0..m {
                let total: Complex64 = u_hat.iter().map(|mode| mode[i]).sum();
                lambda_hat[i] += config.tau * (f_hat[i] - total);
            }
        }

        iterations = iter + 1;
        if iter > 0 {
            let mut change = 0.0;
            for kk in 0..k {
                let mut diff = 0.0;
                let mut prev_sq = 0.0;
                for i in 0..m {
                    diff += (u_hat[kk][i] - u_prev[kk][i]).norm_sqr();
                    prev_sq += u_prev[kk][i].norm_sqr();
                }
                if prev_sq > 1e-300 {
                    change += diff / prev_sq;
                }
            }
            if change < config.tol {
                converged = true;
                break;
            }
        }
    }

    // Back to the time domain via Hermitian completion, then crop the
    // mirror extension.
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| omega[a].total_cmp(&omega[b]));

    let mut modes = Vec::with_capacity(k);
    let mut omegas = Vec::with_capacity(k);
    for &kk in &order {
        let mut full = vec![Complex64::ZERO; t];
        full[0] = u_hat[kk][0];
        for i in 1..m {
            full[i] = u_hat[kk][i];
            if i != t - i {
                full[t - i] = u_hat[kk][i].conj();
            }
        }
        fft(&mut full, true);
        let scale = 1.0 / t as f64;
        let mode: Vec<f64> = full[offset..offset + n].iter().map(|c| c.re * scale).collect();
        modes.push(mode);
        omegas.push(omega[kk]);
    }

    let mut residual = signal.to_vec();
    for mode in &modes {
        for (r, v) in residual.iter_mut().zip(mode) {
            *r -= *v;
        }
    }

    Ok(ImfSet { modes, omegas, residual, iterations_used: iterations, converged })
}

/// Search bounds and swarm settings for [`tune_vmd`].
#[derive(Debug, Clone)]
pub struct PsoConfig {
    pub swarm: SwarmConfig,
    /// Inclusive bounds on the number of modes.
    pub k_bounds: (usize, usize),
    pub alpha_bounds: (f64, f64),
    /// Decomposition settings used while evaluating candidates; its `k_max`
    /// and `alpha` fields are overridden by the search.
    pub eval: VmdConfig,
}

impl Default for PsoConfig {
    fn default() -> Self {
        PsoConfig {
            swarm: SwarmConfig::default(),
            k_bounds: (2, 10),
            alpha_bounds: (100.0, 10_000.0),
            eval: VmdConfig::default(),
        }
    }
}

/// Envelope of a signal via the magnitude of its analytic signal.
fn envelope(signal: &[f64]) -> Vec<f64> {
    let t = signal.len();
    let mut spec: Vec<Complex64> = signal.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    fft(&mut spec, false);
    let half = t / 2;
    for (i, v) in spec.iter_mut().enumerate() {
        if i == 0 || (t % 2 == 0 && i == half) {
            // DC and Nyquist stay single-counted
        } else if i < half || (t % 2 == 1 && i == half) {
            *v *= 2.0;
        } else {
            *v = Complex64::ZERO;
        }
    }
    fft(&mut spec, true);
    let scale = 1.0 / t as f64;
    spec.iter().map(|c| (c * scale).norm()).collect()
}

/// Shannon entropy of the normalized envelope.
fn envelope_entropy(signal: &[f64]) -> f64 {
    let env = envelope(signal);
    let total: f64 = env.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut h = 0.0;
    for e in env {
        let p = e / total;
        if p > 0.0 {
            h -= p * p.ln();
        }
    }
    h
}

/// Decomposition quality used by the parameter search: energy-weighted mean
/// envelope entropy across modes, plus the log relative reconstruction error
/// and a penalty on near-empty modes (an empty mode means `k` is too large).
pub fn vmd_fitness(signal: &[f64], k_max: usize, alpha: f64, eval: &VmdConfig) -> f64 {
    let cfg = VmdConfig { k_max, alpha, ..eval.clone() };
    let imfs = match decompose(signal, &cfg) {
        Ok(i) => i,
        Err(_) => return f64::INFINITY,
    };

    let energies: Vec<f64> = imfs.modes().iter().map(|m| m.iter().map(|v| v * v).sum()).collect();
    let total_energy: f64 = energies.iter().sum::<f64>().max(1e-300);

    let mut weighted_entropy = 0.0;
    let mut dead_modes = 0usize;
    for (mode, &energy) in imfs.modes().iter().zip(&energies) {
        let share = energy / total_energy;
        if share < 1e-3 {
            dead_modes += 1;
        }
        weighted_entropy += share * envelope_entropy(mode);
    }

    let recon = reconstruct(&imfs);
    let mut err = 0.0;
    let mut sig = 0.0;
    for (r, s) in recon.iter().zip(signal) {
        err += (r - s) * (r - s);
        sig += s * s;
    }
    let rel_err = (err / sig.max(1e-300)).sqrt();

    weighted_entropy + (1.0 + rel_err).ln() + 0.5 * dead_modes as f64
}

/// Search for the `(k_max, alpha)` pair minimizing [`vmd_fitness`].
/// Deterministic for a fixed seed; integer `k_max` is handled by rounding.
pub fn tune_vmd(signal: &[f64], search: &PsoConfig) -> Result<(usize, f64), VmdError> {
    let (k_lo, k_hi) = search.k_bounds;
    let (a_lo, a_hi) = search.alpha_bounds;
    if k_lo < 1 || k_lo > k_hi {
        return Err(VmdError::EmptySearchSpace(format!("k bounds [{k_lo}, {k_hi}]")));
    }
    if !(a_lo > 0.0 && a_lo <= a_hi) {
        return Err(VmdError::EmptySearchSpace(format!("alpha bounds [{a_lo}, {a_hi}]")));
    }
    if signal.len() < 8 {
        return Err(VmdError::SignalTooShort(signal.len()));
    }

    let bounds = [(k_lo as f64, k_hi as f64), (a_lo, a_hi)];
    let (best, _) = pso::minimize(&bounds, &search.swarm, |p| {
        let k = p[0].round() as usize;
        vmd_fitness(signal, k.clamp(k_lo, k_hi), p[1], &search.eval)
    });
    let k = (best[0].round() as usize).clamp(k_lo, k_hi);
    Ok((k, best[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Naive O(n^2) DFT magnitude over positive bins; the test-side oracle.
    fn dft_peak_omega(signal: &[f64]) -> f64 {
        let n = signal.len();
        let mut best = (0usize, 0.0f64);
        for bin in 1..=n / 2 {
            let mut re = 0.0;
            let mut im = 0.0;
            for (i, &x) in signal.iter().enumerate() {
                let phase = -2.0 * PI * bin as f64 * i as f64 / n as f64;
                re += x * phase.cos();
                im += x * phase.sin();
            }
            let mag = re * re + im * im;
            if mag > best.1 {
                best = (bin, mag);
            }
        }
        best.0 as f64 / n as f64
    }

    fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den.max(1e-300)).sqrt()
    }

    fn tone(n: usize, fs: f64, hz: f64, amp: f64) -> Vec<f64> {
        (0..n).map(|i| amp * (2.0 * PI * hz * i as f64 / fs).sin()).collect()
    }

    pub(crate) fn two_tone_fixture() -> Vec<f64> {
        // 2 Hz + 25 Hz at 100 samples/s over 2 s: normalized 0.02 and 0.25.
        let a = tone(200, 100.0, 2.0, 1.0);
        let b = tone(200, 100.0, 25.0, 0.8);
        a.iter().zip(&b).map(|(x, y)| x + y).collect()
    }

    #[test]
    fn single_sinusoid_recovered() {
        let signal = tone(200, 100.0, 10.0, 1.0);
        let cfg = VmdConfig { k_max: 1, ..Default::default() };
        let imfs = decompose(&signal, &cfg).unwrap();
        let oracle = dft_peak_omega(&signal);
        assert!(
            (imfs.omegas()[0] - oracle).abs() / oracle < 0.05,
            "omega {} vs oracle {oracle}",
            imfs.omegas()[0]
        );
        assert!(rel_l2(&imfs.modes()[0], &signal) < 1e-2);
    }

    #[test]
    fn two_tone_frequencies_match_dft_oracle() {
        let signal = two_tone_fixture();
        let cfg = VmdConfig { k_max: 2, ..Default::default() };
        let imfs = decompose(&signal, &cfg).unwrap();
        // oracle per mode: DFT peak of each isolated tone
        let lo = dft_peak_omega(&tone(200, 100.0, 2.0, 1.0));
        let hi = dft_peak_omega(&tone(200, 100.0, 25.0, 0.8));
        assert!((imfs.omegas()[0] - lo).abs() / lo < 0.05, "low {} vs {lo}", imfs.omegas()[0]);
        assert!((imfs.omegas()[1] - hi).abs() / hi < 0.05, "high {} vs {hi}", imfs.omegas()[1]);
        let recon = reconstruct(&imfs);
        assert!(rel_l2(&recon, &signal) <= 1e-2, "recon err {}", rel_l2(&recon, &signal));
    }

    #[test]
    fn constant_signal_zero_bandwidth() {
        let signal = vec![3.25; 64];
        let cfg = VmdConfig { k_max: 1, ..Default::default() };
        let imfs = decompose(&signal, &cfg).unwrap();
        assert!(imfs.omegas()[0] < 1e-6);
        for v in &imfs.modes()[0] {
            assert!((v - 3.25).abs() < 1e-9, "mode value {v}");
        }
        assert!(imfs.max_abs_residual() < 1e-9);
    }

    #[test]
    fn reconstruct_is_mode_sum() {
        let imfs = ImfSet::from_parts(
            vec![vec![1.0, 2.0], vec![-1.0, -2.0]],
            vec![0.1, 0.2],
            vec![0.0, 0.0],
        );
        assert_eq!(reconstruct(&imfs), vec![0.0, 0.0]);
        let single = ImfSet::from_parts(vec![vec![0.0; 4]], vec![0.0], vec![0.0; 4]);
        assert_eq!(reconstruct(&single), vec![0.0; 4]);
    }

    #[test]
    fn short_and_nonfinite_inputs_rejected() {
        let cfg = VmdConfig::default();
        assert!(matches!(decompose(&[1.0; 7], &cfg), Err(VmdError::SignalTooShort(7))));
        let mut bad = vec![1.0; 16];
        bad[3] = f64::NAN;
        assert!(matches!(decompose(&bad, &cfg), Err(VmdError::NonFiniteInput(3))));
    }

    #[test]
    fn max_iters_is_not_an_error() {
        let signal = two_tone_fixture();
        let cfg = VmdConfig { k_max: 2, max_iters: 1, ..Default::default() };
        let imfs = decompose(&signal, &cfg).unwrap();
        assert_eq!(imfs.iterations_used(), 1);
        assert!(!imfs.converged());
    }

    #[test]
    fn determinism() {
        let signal = two_tone_fixture();
        let cfg = VmdConfig { k_max: 3, ..Default::default() };
        let a = decompose(&signal, &cfg).unwrap();
        let b = decompose(&signal, &cfg).unwrap();
        assert_eq!(a.modes(), b.modes());
        assert_eq!(a.omegas(), b.omegas());
    }

    /// Second spectral moment of a mode about its center frequency, computed
    /// with the naive DFT (independent of the solver's spectra).
    fn mode_bandwidth(mode: &[f64], omega: f64) -> f64 {
        let n = mode.len();
        let mut weighted = 0.0;
        let mut power = 0.0;
        for bin in 0..=n / 2 {
            let mut re = 0.0;
            let mut im = 0.0;
            for (i, &x) in mode.iter().enumerate() {
                let phase = -2.0 * PI * bin as f64 * i as f64 / n as f64;
                re += x * phase.cos();
                im += x * phase.sin();
            }
            let p = re * re + im * im;
            let nu = bin as f64 / n as f64;
            weighted += (nu - omega) * (nu - omega) * p;
            power += p;
        }
        weighted / power.max(1e-300)
    }

    #[test]
    fn alpha_increase_narrows_modes() {
        let signal = two_tone_fixture();
        let mean_bw = |alpha: f64| {
            let cfg = VmdConfig { k_max: 2, alpha, ..Default::default() };
            let imfs = decompose(&signal, &cfg).unwrap();
            let sum: f64 = imfs
                .modes()
                .iter()
                .zip(imfs.omegas())
                .map(|(m, &w)| mode_bandwidth(m, w))
                .sum();
            sum / imfs.num_modes() as f64
        };
        assert!(mean_bw(2000.0) <= mean_bw(200.0) * (1.0 + 1e-9));
    }

    #[test]
    fn constant_offset_moves_only_lowest_mode() {
        let signal = two_tone_fixture();
        let shifted: Vec<f64> = signal.iter().map(|v| v + 3.0).collect();
        let cfg = VmdConfig { k_max: 2, ..Default::default() };
        let base = decompose(&signal, &cfg).unwrap();
        let offs = decompose(&shifted, &cfg).unwrap();
        // the higher-frequency mode is essentially unchanged
        let hi_diff: f64 = base.modes()[1]
            .iter()
            .zip(&offs.modes()[1])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(hi_diff < 0.05, "high mode moved by {hi_diff}");
        // reconstruction still holds on the shifted signal
        assert!(rel_l2(&reconstruct(&offs), &shifted) <= 1e-2);
    }

    #[test]
    fn dft_roundtrip_identity() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.random_range(8..200);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            fft(&mut buf, false);
            fft(&mut buf, true);
            for (orig, got) in x.iter().zip(&buf) {
                assert!((orig - got.re / n as f64).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn tune_singleton_space() {
        let signal = two_tone_fixture();
        let search = PsoConfig {
            k_bounds: (3, 3),
            alpha_bounds: (2000.0, 2000.0),
            ..Default::default()
        };
        let (k, alpha) = tune_vmd(&signal, &search).unwrap();
        assert_eq!(k, 3);
        assert_eq!(alpha, 2000.0);
    }

    #[test]
    fn tune_deterministic() {
        let signal = two_tone_fixture();
        let search = PsoConfig {
            k_bounds: (2, 4),
            alpha_bounds: (500.0, 5000.0),
            swarm: SwarmConfig { swarm_size: 8, iterations: 6, seed: 42, ..Default::default() },
            ..Default::default()
        };
        let a = tune_vmd(&signal, &search).unwrap();
        let b = tune_vmd(&signal, &search).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tune_two_tone_matches_grid_oracle() {
        let signal = two_tone_fixture();
        let eval = VmdConfig::default();
        // exhaustive grid over the small bound set
        let alphas = [500.0, 1000.0, 2000.0, 4000.0, 8000.0];
        let mut best = (0usize, f64::INFINITY);
        for k in 2..=4 {
            for &a in &alphas {
                let fit = vmd_fitness(&signal, k, a, &eval);
                if fit < best.1 {
                    best = (k, fit);
                }
            }
        }
        assert_eq!(best.0, 2, "grid oracle should prefer 2 modes, fitness {:?}", best);
        let search = PsoConfig {
            k_bounds: (2, 4),
            alpha_bounds: (500.0, 8000.0),
            swarm: SwarmConfig { swarm_size: 10, iterations: 10, seed: 3, ..Default::default() },
            ..Default::default()
        };
        let (k, _) = tune_vmd(&signal, &search).unwrap();
        assert_eq!(k, 2);
    }

    #[test]
    fn tune_empty_space_rejected() {
        let signal = two_tone_fixture();
        let search = PsoConfig { k_bounds: (5, 2), ..Default::default() };
        assert!(matches!(tune_vmd(&signal, &search), Err(VmdError::EmptySearchSpace(_))));
    }
}
