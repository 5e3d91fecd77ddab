//! A standard global-best particle swarm optimizer for small box-constrained
//! search spaces.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Swarm hyperparameters. Defaults are the widely used constricted settings.
#[derive(Debug, Clone)]
pub struct SwarmConfig {
    pub swarm_size: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub seed: u64,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        SwarmConfig {
            swarm_size: 20,
            iterations: 30,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            seed: 0,
        }
    }
}

/// Minimize `f` over the axis-aligned box `bounds`, returning the best
/// position and its value. Deterministic for a fixed seed.
///
/// Velocities are clamped to the box extent per dimension; positions are
/// clamped back into the box after every move.
pub fn minimize<F>(bounds: &[(f64, f64)], cfg: &SwarmConfig, mut f: F) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> f64,
{
    assert!(!bounds.is_empty(), "search space must have at least one dimension");
    assert!(bounds.iter().all(|(lo, hi)| hi >= lo), "invalid bounds");
    let dim = bounds.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let extent: Vec<f64> = bounds.iter().map(|(lo, hi)| hi - lo).collect();
    let mut pos = vec![vec![0.0; dim]; cfg.swarm_size];
    let mut vel = vec![vec![0.0; dim]; cfg.swarm_size];
    for p in 0..cfg.swarm_size {
        for d in 0..dim {
            let (lo, hi) = bounds[d];
            pos[p][d] = if hi > lo { rng.random_range(lo..hi) } else { lo };
            vel[p][d] = if extent[d] > 0.0 {
                rng.random_range(-extent[d]..extent[d]) * 0.1
            } else {
                0.0
            };
        }
    }

    let mut best_pos = pos.clone();
    let mut best_val: Vec<f64> = pos.iter().map(|x| f(x)).collect();
    let (mut gbest_idx, _) = best_val
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty swarm");
    let mut gbest_pos = best_pos[gbest_idx].clone();
    let mut gbest_val = best_val[gbest_idx];

    for _ in 0..cfg.iterations {
        for p in 0..cfg.swarm_size {
            for d in 0..dim {
                let r1: f64 = rng.random();
                let r2: f64 = rng.random();
                vel[p][d] = cfg.inertia * vel[p][d]
                    + cfg.cognitive * r1 * (best_pos[p][d] - pos[p][d])
                    + cfg.social * r2 * (gbest_pos[d] - pos[p][d]);
                let vmax = extent[d].max(1e-12);
                vel[p][d] = vel[p][d].clamp(-vmax, vmax);
                pos[p][d] = (pos[p][d] + vel[p][d]).clamp(bounds[d].0, bounds[d].1);
            }
            let val = f(&pos[p]);
            if val < best_val[p] {
                best_val[p] = val;
                best_pos[p] = pos[p].clone();
                if val < gbest_val {
                    gbest_val = val;
                    gbest_idx = p;
                    gbest_pos = best_pos[p].clone();
                }
            }
        }
    }
    let _ = gbest_idx;
    (gbest_pos, gbest_val)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_quadratic_minimum() {
        let bounds = [(-5.0, 5.0), (-5.0, 5.0)];
        let cfg = SwarmConfig { iterations: 60, ..Default::default() };
        let (x, v) = minimize(&bounds, &cfg, |p| {
            (p[0] - 1.5).powi(2) + 2.0 * (p[1] + 0.5).powi(2)
        });
        assert!(v < 1e-3, "value {v}");
        assert!((x[0] - 1.5).abs() < 0.05, "x0 {}", x[0]);
        assert!((x[1] + 0.5).abs() < 0.05, "x1 {}", x[1]);
    }

    #[test]
    fn deterministic_under_seed() {
        let bounds = [(0.0, 10.0)];
        let cfg = SwarmConfig { seed: 7, ..Default::default() };
        let a = minimize(&bounds, &cfg, |p| (p[0] - 3.0).abs());
        let b = minimize(&bounds, &cfg, |p| (p[0] - 3.0).abs());
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_singleton_box() {
        let bounds = [(2.0, 2.0)];
        let (x, _) = minimize(&bounds, &SwarmConfig::default(), |p| p[0]);
        assert_eq!(x[0], 2.0);
    }
}
