//! Monte-Carlo check that a Root barrier embeds its target marginal, and
//! barrier-set comparison.
//!
//! Paths are unit-volatility geometric Brownian motions on the solver clock,
//! one ChaCha stream per path index, so samples do not depend on scheduling.

use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;
use rand_chacha::ChaCha8Rng;
use rand_core::SeedableRng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::barrier::{Barrier, BarrierKind};
use crate::error::{Error, Result};
use crate::potentials::PotentialCurve;
use crate::pricing::DiscreteMeasure;

/// Largest unstopped fraction tolerated.
pub const MAX_UNSTOPPED: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppedSample {
    pub n_paths: usize,
    pub seed: u64,
    pub stopped_values: Vec<f64>,
    pub stopping_times: Vec<f64>,
    /// Paths still running at the horizon; excluded from the sample.
    pub unstopped: usize,
}

fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// Barrier lookup in `ξ = ln x` on a uniform log grid.
struct LogBarrier<'a> {
    xi0: f64,
    inv_dx: f64,
    times: &'a [f64],
}

impl<'a> LogBarrier<'a> {
    fn new(b: &'a Barrier) -> Result<Self> {
        let n = b.x_grid.len();
        if n < 2 || b.times.len() != n {
            return Err(Error::Usage("barrier grid too small".into()));
        }
        let xi0 = b.x_grid[0].ln();
        let dx = (b.x_grid[n - 1].ln() - xi0) / (n - 1) as f64;
        Ok(Self { xi0, inv_dx: 1.0 / dx, times: &b.times })
    }

    fn time(&self, xi: f64) -> f64 {
        let n = self.times.len();
        let p = (xi - self.xi0) * self.inv_dx;
        if p <= 0.0 {
            return self.times[0];
        }
        if p >= (n - 1) as f64 {
            return self.times[n - 1];
        }
        let j = p as usize;
        let (a, b) = (self.times[j], self.times[j + 1]);
        if a.is_infinite() || b.is_infinite() {
            return f64::INFINITY;
        }
        let w = p - j as f64;
        a + w * (b - a)
    }
}

/// Runs `n_paths` log-Euler paths from `p0` with step `dt_mc`, stopping each at
/// the first `j·dt_mc ≥ R(X)`.
///
/// No path can stop before the smallest barrier time, so the first stretch
/// is taken as one Gaussian increment of matching variance. Paths alive at
/// `horizon` count as unstopped; more than 0.1% of them is an error.
pub fn simulate_root_embedding(
    barrier: &Barrier,
    p0: f64,
    n_paths: usize,
    seed: u64,
    dt_mc: f64,
    horizon: f64,
) -> Result<StoppedSample> {
    if barrier.kind != BarrierKind::Root {
        return Err(Error::Usage("Monte-Carlo verification applies to Root barriers only".into()));
    }
    if !(dt_mc > 0.0) || !(horizon > 0.0) || n_paths == 0 {
        return Err(Error::Usage(format!("invalid simulation settings dt {dt_mc}, horizon {horizon}, paths {n_paths}")));
    }
    let lb = LogBarrier::new(barrier)?;
    let min_time = barrier.times.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_steps = (horizon / dt_mc).ceil() as usize;
    let skip = if min_time.is_finite() { ((min_time / dt_mc).ceil() as usize).min(max_steps) } else { max_steps };
    let sd = dt_mc.sqrt();
    let drift = -0.5 * dt_mc;
    let xi_start = p0.ln();

    let mut values = Vec::with_capacity(n_paths);
    let mut times = Vec::with_capacity(n_paths);
    let mut unstopped = 0;
    for path in 0..n_paths {
        let mut rng = path_rng(seed, path);
        let mut xi = xi_start;
        let mut j = 0usize;
        if skip > 0 {
            let z: f64 = StandardNormal.sample(&mut rng);
            xi += drift * skip as f64 + sd * (skip as f64).sqrt() * z;
            j = skip;
        }
        loop {
            let t = j as f64 * dt_mc;
            if t >= lb.time(xi) {
                values.push(xi.exp());
                times.push(t);
                break;
            }
            if j >= max_steps {
                unstopped += 1;
                break;
            }
            let z: f64 = StandardNormal.sample(&mut rng);
            xi += drift + sd * z;
            j += 1;
        }
    }
    if unstopped as f64 > MAX_UNSTOPPED * n_paths as f64 {
        return Err(Error::Verification(format!("{unstopped} of {n_paths} paths unstopped at the horizon {horizon}")));
    }
    Ok(StoppedSample { n_paths, seed, stopped_values: values, stopping_times: times, unstopped })
}

/// `sup |Û − U|` over masked nodes, with `Û(x) = −(1/n)Σ|X_i − x|`.
pub fn potential_distance(sample: &[f64], target: &PotentialCurve, mask: &[bool]) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptyInput);
    }
    if mask.len() != target.x_grid.len() {
        return Err(Error::Usage("mask length differs from potential grid".into()));
    }
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut prefix = Vec::with_capacity(xs.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in &xs {
        acc += v;
        prefix.push(acc);
    }
    let total = acc;
    let mut worst = 0.0f64;
    for ((&x, &u), &m) in target.x_grid.iter().zip(&target.values).zip(mask) {
        if !m {
            continue;
        }
        let below = xs.partition_point(|&v| v <= x);
        let lo_sum = prefix[below];
        let hi_sum = total - lo_sum;
        let abs_sum = (below as f64) * x - lo_sum + hi_sum - (xs.len() - below) as f64 * x;
        worst = worst.max((-abs_sum / n - u).abs());
    }
    Ok(worst)
}

/// Distance threshold `4·sd_μ/√n` for `n` samples from `measure`.
pub fn distance_threshold(measure: &DiscreteMeasure, n: usize) -> f64 {
    4.0 * measure.std_dev() / (n as f64).sqrt()
}

/// Draws directly from `measure`, spreading each node's mass uniformly over
/// the surrounding half-cells.
pub fn sample_measure(measure: &DiscreteMeasure, n: usize, seed: u64) -> Vec<f64> {
    let xs = &measure.x_grid;
    let k = xs.len();
    let mut cdf = Vec::with_capacity(k);
    let mut acc = 0.0;
    for &m in &measure.masses {
        acc += m;
        cdf.push(acc);
    }
    let mut rng = path_rng(seed, 0);
    let unit = Uniform::new(0.0f64, 1.0).expect("valid range");
    (0..n)
        .map(|_| {
            let u = unit.sample(&mut rng) * acc;
            let i = cdf.partition_point(|&c| c < u).min(k - 1);
            let lo = if i == 0 { xs[0] } else { 0.5 * (xs[i - 1] + xs[i]) };
            let hi = if i + 1 == k { xs[k - 1] } else { 0.5 * (xs[i] + xs[i + 1]) };
            lo + unit.sample(&mut rng) * (hi - lo)
        })
        .collect()
}

/// Empirical direct-sampling distances used to validate the threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCalibration {
    pub n: usize,
    pub threshold: f64,
    pub distances: Vec<f64>,
    pub p99: f64,
}

/// Potential distances of `seeds` direct samples of size `n` from `measure`.
pub fn calibrate_threshold(
    measure: &DiscreteMeasure,
    target: &PotentialCurve,
    mask: &[bool],
    n: usize,
    seeds: usize,
) -> Result<ThresholdCalibration> {
    let mut distances = Vec::with_capacity(seeds);
    for s in 0..seeds {
        let sample = sample_measure(measure, n, 1000 + s as u64);
        distances.push(potential_distance(&sample, target, mask)?);
    }
    let mut sorted = distances.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((0.99 * seeds as f64).ceil() as usize).clamp(1, seeds) - 1;
    Ok(ThresholdCalibration { n, threshold: distance_threshold(measure, n), p99: sorted[idx], distances })
}

/// Largest time difference over nodes confident and finite in both barriers.
pub fn compare_barrier_sets(a: &Barrier, b: &Barrier) -> Result<f64> {
    if a.x_grid != b.x_grid {
        return Err(Error::Usage("barriers live on different grids".into()));
    }
    if a.kind != b.kind {
        return Err(Error::Usage("barriers are of different kinds".into()));
    }
    let mut worst = 0.0f64;
    for i in 0..a.times.len() {
        if a.mask[i] && b.mask[i] && a.times[i].is_finite() && b.times[i].is_finite() {
            worst = worst.max((a.times[i] - b.times[i]).abs());
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::initial_potential;
    use alloc::vec;

    fn grid() -> Vec<f64> {
        (0..201).map(|i| 100.0 * (-1.0 + i as f64 / 100.0).exp()).collect()
    }

    fn flat(kind: BarrierKind, t: f64) -> Barrier {
        let x = grid();
        Barrier { kind, maturity_index: 0, maturity: 1.0, mask: vec![true; x.len()], times: vec![t; x.len()], x_grid: x }
    }

    #[test]
    fn constant_barrier_stops_at_that_time() {
        let s = simulate_root_embedding(&flat(BarrierKind::Root, 0.04), 100.0, 2000, 7, 1e-3, 1.0).unwrap();
        assert!(s.stopping_times.iter().all(|&t| (t - 0.04).abs() < 1e-12));
        let logs: Vec<f64> = s.stopped_values.iter().map(|v| (v / 100.0).ln()).collect();
        let mean = logs.iter().sum::<f64>() / logs.len() as f64;
        let var = logs.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / (logs.len() - 1) as f64;
        assert!((mean + 0.02).abs() < 4.0 * (0.04f64 / 2000.0).sqrt());
        assert!((var - 0.04).abs() < 0.005, "{var}");
    }

    #[test]
    fn zero_barrier_stops_immediately() {
        let s = simulate_root_embedding(&flat(BarrierKind::Root, 0.0), 100.0, 100, 1, 1e-3, 1.0).unwrap();
        assert!(s.stopping_times.iter().all(|&t| t == 0.0));
        assert!(s.stopped_values.iter().all(|&v| (v - 100.0).abs() < 1e-12));
    }

    #[test]
    fn seeds_are_deterministic_and_rost_is_refused() {
        let mut b = flat(BarrierKind::Root, 0.02);
        b.times[100] = 0.01;
        let a = simulate_root_embedding(&b, 100.0, 300, 3, 1e-3, 1.0).unwrap();
        let c = simulate_root_embedding(&b, 100.0, 300, 3, 1e-3, 1.0).unwrap();
        assert_eq!(a, c);
        assert!(simulate_root_embedding(&flat(BarrierKind::Rost, 0.1), 100.0, 10, 1, 1e-3, 1.0).is_err());
    }

    #[test]
    fn never_stopping_is_a_verification_error() {
        let b = flat(BarrierKind::Root, f64::INFINITY);
        assert!(matches!(simulate_root_embedding(&b, 100.0, 50, 1, 1e-2, 0.1), Err(Error::Verification(_))));
    }

    #[test]
    fn potential_distance_cases() {
        let x = grid();
        let tent = initial_potential(100.0, &x);
        let mask = vec![true; x.len()];
        assert_eq!(potential_distance(&[100.0], &tent, &mask).unwrap(), 0.0);
        // shifting the atom by s moves the potential by s at the old atom
        let d = potential_distance(&[105.0], &tent, &mask).unwrap();
        assert!((d - 5.0).abs() < 1e-12);
        assert!(potential_distance(&[], &tent, &mask).is_err());
    }

    #[test]
    fn barrier_comparison() {
        let a = flat(BarrierKind::Root, 0.05);
        assert_eq!(compare_barrier_sets(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        for t in b.times.iter_mut() {
            *t += 0.01;
        }
        assert!((compare_barrier_sets(&a, &b).unwrap() - 0.01).abs() < 1e-15);
        b.times[3] = f64::INFINITY;
        b.mask[4] = false;
        assert!((compare_barrier_sets(&a, &b).unwrap() - 0.01).abs() < 1e-15);
        assert!(compare_barrier_sets(&a, &flat(BarrierKind::Rost, 0.05)).is_err());
    }
}
