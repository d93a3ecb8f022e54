//! Discrete marginals from forward call curves and robust variance-option
//! bounds `∫ f(R(x)) dμ(x)` from Root (lower) and Rost (upper) barriers.

use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::barrier::{Barrier, BarrierKind};
use crate::error::{Error, Result};
use crate::models::CallCurve;
use crate::potentials::PotentialCurve;

/// Masses below this may sit on sentinel barrier nodes; they are dropped.
pub const NEGLIGIBLE_MASS: f64 = 1e-12;

/// Probability masses on the solver grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub x_grid: Vec<f64>,
    pub masses: Vec<f64>,
    /// `Σ x·m − P₀`; the mean is not renormalised.
    pub mean_deviation: f64,
}

impl DiscreteMeasure {
    pub fn mean(&self) -> f64 {
        self.x_grid.iter().zip(&self.masses).map(|(x, m)| x * m).sum()
    }

    pub fn std_dev(&self) -> f64 {
        let m = self.mean();
        self.x_grid.iter().zip(&self.masses).map(|(x, w)| w * (x - m) * (x - m)).sum::<f64>().sqrt()
    }

    /// Log-contract value `−2∫ln(y/P₀) dμ(y)`, the fair variance-swap strike.
    pub fn log_contract(&self, p0: f64) -> f64 {
        -2.0 * self.x_grid.iter().zip(&self.masses).map(|(x, m)| m * (x / p0).ln()).sum::<f64>()
    }
}

/// Masses from the slope jumps of forward call values `c` on `x_grid`.
///
/// The mass below the first node (slope change from `−1`) and above the
/// last (slope change to `0`) is lumped onto the end nodes. Negative masses
/// below `−1e−10` are an error; smaller ones are clipped before the total is
/// renormalised to one.
pub fn measure_from_calls(x_grid: &[f64], c: &[f64], p0: f64) -> Result<DiscreteMeasure> {
    let n = x_grid.len();
    if n < 3 || c.len() != n {
        return Err(Error::Usage("measure needs matching grids of at least 3 nodes".into()));
    }
    let slope = |i: usize| (c[i + 1] - c[i]) / (x_grid[i + 1] - x_grid[i]);
    let mut masses = Vec::with_capacity(n);
    masses.push(slope(0) + 1.0);
    for i in 1..n - 1 {
        masses.push(slope(i) - slope(i - 1));
    }
    masses.push(-slope(n - 2));
    if let Some(i) = masses.iter().position(|&m| m < -1e-10 || !m.is_finite()) {
        return Err(Error::InvalidCurve { index: i, message: format!("negative mass {} at x={}", masses[i], x_grid[i]) });
    }
    let mut total = 0.0;
    for m in masses.iter_mut() {
        *m = m.max(0.0);
        total += *m;
    }
    if !(total > 0.0) {
        return Err(Error::InvalidCurve { index: 0, message: "curve carries no mass".into() });
    }
    for m in masses.iter_mut() {
        *m /= total;
    }
    let mut out = DiscreteMeasure { x_grid: x_grid.to_vec(), masses, mean_deviation: 0.0 };
    out.mean_deviation = out.mean() - p0;
    Ok(out)
}

/// Breeden–Litzenberger masses of a forward call curve on `x_grid`.
pub fn marginal_density(curve: &CallCurve, x_grid: &[f64]) -> Result<DiscreteMeasure> {
    let ev = curve.evaluator()?;
    let c = x_grid.iter().map(|&x| ev.value(x)).collect::<Result<Vec<f64>>>()?;
    measure_from_calls(x_grid, &c, curve.zero_strike_value)
}

/// Same masses read off a potential through `c = (P₀ − x − U)/2`.
pub fn measure_from_potential(pot: &PotentialCurve, p0: f64) -> Result<DiscreteMeasure> {
    let c: Vec<f64> = pot.x_grid.iter().zip(&pot.values).map(|(x, u)| 0.5 * (p0 - x - u)).collect();
    measure_from_calls(&pot.x_grid, &c, p0)
}

/// Payoff `f` applied to the realised variance `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Payoff {
    /// `(s − K)^+`
    Call,
    /// `s − K`
    Swap,
    /// Piecewise-linear `f(s − K)` through the given points, flat beyond them.
    Tabulated { s: Vec<f64>, f: Vec<f64> },
}

impl Payoff {
    pub fn eval(&self, s: f64, strike: f64) -> f64 {
        match self {
            Payoff::Call => (s - strike).max(0.0),
            Payoff::Swap => s - strike,
            Payoff::Tabulated { s: xs, f } => {
                let y = s - strike;
                let n = xs.len();
                if n == 0 {
                    return 0.0;
                }
                if y <= xs[0] {
                    return f[0];
                }
                if y >= xs[n - 1] {
                    return f[n - 1];
                }
                let j = xs.partition_point(|&v| v <= y) - 1;
                f[j] + (y - xs[j]) / (xs[j + 1] - xs[j]) * (f[j + 1] - f[j])
            }
        }
    }
}

/// `Σ_i f(R(x_i) − K)·m_i`, with the number of negligible-mass sentinel nodes dropped.
pub fn expected_payoff(barrier: &Barrier, measure: &DiscreteMeasure, payoff: &Payoff, strike: f64) -> Result<(f64, usize)> {
    if barrier.x_grid.len() != measure.x_grid.len() {
        return Err(Error::Usage("barrier and measure grids differ".into()));
    }
    let mut acc = 0.0;
    let mut dropped = 0;
    for (i, (&t, &m)) in barrier.times.iter().zip(&measure.masses).enumerate() {
        if m == 0.0 {
            continue;
        }
        if !t.is_finite() {
            if m >= NEGLIGIBLE_MASS {
                return Err(Error::Pricing {
                    node: i,
                    message: format!("mass {m} at x={} has no barrier contact before the horizon", measure.x_grid[i]),
                });
            }
            dropped += 1;
            continue;
        }
        acc += payoff.eval(t, strike) * m;
    }
    Ok((acc, dropped))
}

/// Lower and upper robust prices of variance calls for one maturity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsCurve {
    pub maturity: f64,
    pub strikes: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Negligible-mass sentinel nodes skipped across both barriers.
    pub dropped_nodes: usize,
}

/// Weighted upper quartile of the finite Rost times under `measure`.
pub fn default_strikes(rost: &Barrier, measure: &DiscreteMeasure, count: usize) -> Vec<f64> {
    let mut pts: Vec<(f64, f64)> = rost
        .times
        .iter()
        .zip(&measure.masses)
        .filter(|(t, m)| t.is_finite() && **m > 0.0)
        .map(|(&t, &m)| (t, m))
        .collect();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let total: f64 = pts.iter().map(|p| p.1).sum();
    let mut acc = 0.0;
    let mut q75 = 0.0;
    for &(t, m) in &pts {
        acc += m;
        q75 = t;
        if acc >= 0.75 * total {
            break;
        }
    }
    let hi = 1.5 * q75;
    (0..count).map(|j| hi * j as f64 / (count.max(2) - 1) as f64).collect()
}

/// Root gives the lower bound and Rost the upper, strike by strike.
pub fn variance_option_bounds(
    root: &Barrier,
    rost: &Barrier,
    measure: &DiscreteMeasure,
    strikes: &[f64],
    payoff: &Payoff,
) -> Result<BoundsCurve> {
    if root.kind != BarrierKind::Root || rost.kind != BarrierKind::Rost {
        return Err(Error::Usage("bounds need a Root and a Rost barrier".into()));
    }
    if root.x_grid != rost.x_grid {
        return Err(Error::Usage("Root and Rost barriers use different grids".into()));
    }
    let mut lower = Vec::with_capacity(strikes.len());
    let mut upper = Vec::with_capacity(strikes.len());
    let mut dropped = 0;
    for &k in strikes {
        let (lo, d1) = expected_payoff(root, measure, payoff, k)?;
        let (hi, d2) = expected_payoff(rost, measure, payoff, k)?;
        lower.push(lo);
        upper.push(hi);
        dropped = d1 + d2;
    }
    Ok(BoundsCurve { maturity: root.maturity, strikes: strikes.to_vec(), lower, upper, dropped_nodes: dropped })
}

/// Calendar-time price path built from a driving path by time change.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PricePath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Stopping times `τ_k` on the driving clock.
    pub taus: Vec<f64>,
}

/// Maps a unit-volatility driving path onto calendar time.
///
/// `driving[j]` is the driving value at solver time `j·h`, read as a
/// right-continuous step function. The stopping times chain through the
/// barriers, `τ_k = inf{t ≥ τ_{k−1} : t ≥ R_k(X_t)}`, and on
/// `(T_{k−1}, T_k]` the clock runs as `τ_{k−1} + min((t−T_{k−1})/(T_k−t), τ_k−τ_{k−1})`.
pub fn reconstruct_price_path(
    driving: &[f64],
    h: f64,
    barriers: &[Barrier],
    maturities: &[f64],
    calendar: &[f64],
) -> Result<PricePath> {
    if barriers.len() != maturities.len() || maturities.is_empty() {
        return Err(Error::Usage("one barrier per maturity required".into()));
    }
    if driving.is_empty() || !(h > 0.0) {
        return Err(Error::Usage("empty driving path".into()));
    }
    if maturities.windows(2).any(|w| !(w[1] > w[0])) || !(maturities[0] > 0.0) {
        return Err(Error::Usage("maturities must be positive and increasing".into()));
    }
    let mut taus = Vec::with_capacity(barriers.len());
    let mut j = 0usize;
    for b in barriers {
        loop {
            if j >= driving.len() {
                return Err(Error::Simulation(format!("driving path exhausted before reaching τ_{}", taus.len() + 1)));
            }
            let t = j as f64 * h;
            if t >= b.time_at(driving[j]) {
                break;
            }
            j += 1;
        }
        taus.push(j as f64 * h);
    }
    let at = |s: f64| -> f64 {
        let idx = ((s / h) + 1e-9).floor() as usize;
        driving[idx.min(driving.len() - 1)]
    };
    let mut values = Vec::with_capacity(calendar.len());
    for &t in calendar {
        let s = if t <= 0.0 {
            0.0
        } else if t >= maturities[maturities.len() - 1] {
            taus[taus.len() - 1]
        } else {
            let k = maturities.partition_point(|&m| m < t);
            let (t0, tau0) = if k == 0 { (0.0, 0.0) } else { (maturities[k - 1], taus[k - 1]) };
            let span = taus[k] - tau0;
            let clock = if t >= maturities[k] { span } else { ((t - t0) / (maturities[k] - t)).min(span) };
            tau0 + clock
        };
        values.push(at(s));
    }
    Ok(PricePath { times: calendar.to_vec(), values, taus })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::normal::norm_cdf;
    use alloc::vec;

    fn log_grid(p0: f64, n: usize, l: f64) -> Vec<f64> {
        (0..n).map(|i| p0 * (-l + 2.0 * l * i as f64 / (n - 1) as f64).exp()).collect()
    }

    fn lognormal_calls(p0: f64, s: f64, x: &[f64]) -> Vec<f64> {
        x.iter()
            .map(|&k| {
                let d1 = ((p0 / k).ln() + 0.5 * s * s) / s;
                p0 * norm_cdf(d1) - k * norm_cdf(d1 - s)
            })
            .collect()
    }

    #[test]
    fn point_mass_lands_on_centre() {
        let x = log_grid(100.0, 201, 1.0);
        let mut x = x;
        x[100] = 100.0;
        let c: Vec<f64> = x.iter().map(|&k| (100.0 - k).max(0.0)).collect();
        let m = measure_from_calls(&x, &c, 100.0).unwrap();
        assert!((m.masses[100] - 1.0).abs() < 1e-12);
        assert!(m.mean_deviation.abs() < 1e-12);
    }

    #[test]
    fn lognormal_masses_match_density() {
        let (p0, s) = (2833.0f64, 0.153f64);
        let x = log_grid(p0, 401, 4.0 * s);
        let c = lognormal_calls(p0, s, &x);
        let m = measure_from_calls(&x, &c, p0).unwrap();
        assert!((m.masses.iter().sum::<f64>() - 1.0).abs() < 1e-8);
        assert!(m.mean_deviation.abs() < 1e-4 * p0);
        let mut worst = 0.0f64;
        for i in 1..400 {
            let y = x[i];
            let z = ((y / p0).ln() + 0.5 * s * s) / s;
            let dens = (-0.5 * z * z).exp() / ((2.0 * core::f64::consts::PI).sqrt() * s * y);
            let width = 0.5 * (x[i + 1] - x[i - 1]);
            worst = worst.max((m.masses[i] - dens * width).abs());
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn negative_mass_is_rejected() {
        let x = log_grid(100.0, 51, 0.5);
        let mut c: Vec<f64> = x.iter().map(|&k| (100.0 - k).max(0.0)).collect();
        c[10] += 1.0;
        assert!(matches!(measure_from_calls(&x, &c, 100.0), Err(Error::InvalidCurve { index: 10, .. })));
    }

    fn barrier(kind: BarrierKind, x: &[f64], times: Vec<f64>) -> Barrier {
        Barrier { kind, maturity_index: 0, maturity: 1.0, x_grid: x.to_vec(), mask: vec![true; x.len()], times }
    }

    #[test]
    fn constant_barrier_gives_intrinsic_bounds() {
        let x = log_grid(100.0, 11, 0.5);
        let m = DiscreteMeasure { x_grid: x.clone(), masses: vec![1.0 / 11.0; 11], mean_deviation: 0.0 };
        let r = barrier(BarrierKind::Root, &x, vec![0.04; 11]);
        let mut rost_t = vec![0.04; 11];
        rost_t[0] = 0.08;
        rost_t[5] = 0.0;
        let rb = barrier(BarrierKind::Rost, &x, rost_t);
        let strikes = [0.0, 0.02, 0.04, 0.06];
        let b = variance_option_bounds(&r, &rb, &m, &strikes, &Payoff::Call).unwrap();
        for (k, lo) in strikes.iter().zip(&b.lower) {
            assert!((lo - (0.04 - k).max(0.0)).abs() < 1e-15);
        }
        assert!(b.upper.iter().zip(&b.lower).all(|(u, l)| u >= l));
        assert_eq!(b.upper[0], b.lower[0]);
    }

    #[test]
    fn sentinel_with_mass_is_an_error_without_mass_dropped() {
        let x = log_grid(100.0, 5, 0.5);
        let mut times = vec![0.1; 5];
        times[4] = f64::INFINITY;
        let r = barrier(BarrierKind::Root, &x, times);
        let m = DiscreteMeasure { x_grid: x.clone(), masses: vec![0.25, 0.25, 0.25, 0.25, 0.0], mean_deviation: 0.0 };
        let (v, dropped) = expected_payoff(&r, &m, &Payoff::Swap, 0.0).unwrap();
        assert!((v - 0.1).abs() < 1e-15 && dropped == 0);
        let m2 = DiscreteMeasure { masses: vec![0.25, 0.25, 0.25, 0.25 - 1e-13, 1e-13], ..m.clone() };
        assert_eq!(expected_payoff(&r, &m2, &Payoff::Swap, 0.0).unwrap().1, 1);
        let m3 = DiscreteMeasure { masses: vec![0.2; 5], ..m };
        assert!(matches!(expected_payoff(&r, &m3, &Payoff::Swap, 0.0), Err(Error::Pricing { node: 4, .. })));
    }

    #[test]
    fn tabulated_payoff_interpolates() {
        let p = Payoff::Tabulated { s: vec![0.0, 1.0], f: vec![0.0, 2.0] };
        assert_eq!(p.eval(0.75, 0.25), 1.0);
        assert_eq!(p.eval(5.0, 0.0), 2.0);
    }

    #[test]
    fn path_reconstruction_hits_driving_values() {
        let h = 0.001;
        let driving: Vec<f64> = (0..2000).map(|j| 100.0 + j as f64 * 0.01).collect();
        let x = log_grid(100.0, 11, 1.0);
        let b1 = barrier(BarrierKind::Root, &x, vec![0.3; 11]);
        let b2 = barrier(BarrierKind::Root, &x, vec![0.9; 11]);
        let cal = [0.0, 0.25, 0.5, 0.75, 1.0];
        let p = reconstruct_price_path(&driving, h, &[b1.clone(), b2.clone()], &[0.5, 1.0], &cal).unwrap();
        assert_eq!(p.values[0], 100.0);
        assert!((p.taus[0] - 0.3).abs() < 1e-12 && (p.taus[1] - 0.9).abs() < 1e-12);
        assert_eq!(p.values[2], driving[300]);
        assert_eq!(p.values[4], driving[900]);
        assert!(reconstruct_price_path(&driving[..500], h, &[b1, b2], &[0.5, 1.0], &cal).is_err());
    }
}
