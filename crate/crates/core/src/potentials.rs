//! Forward-measure call curves and potential functions
//! `U_m(x) = −∫|x−y| dm(y)`, plus the convex-order check between maturities.

use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{CallCurve, TailMeta, TailPiece};

/// Potential of one marginal sampled on a price grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialCurve {
    pub maturity: f64,
    pub x_grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Tail-correction knees in forward price units, if any were spliced.
    pub knees: Option<TailMeta>,
}

impl PotentialCurve {
    /// Strikes inside both knees (all strikes when uncorrected).
    pub fn inside_knees(&self, x: f64) -> bool {
        match self.knees {
            None => true,
            Some(m) => m.left.map_or(true, |p| x >= p.knee) && m.right.map_or(true, |p| x <= p.knee),
        }
    }
}

/// Moves a spot-measure call curve to the forward price process:
/// `c(x,T) = e^{qT}·𝒞(e^{(r−q)T}·x, T)`.
///
/// Strikes are rescaled and prices multiplied, so the result has
/// `c(0) = P₀` and unit discount; tails transform with them.
pub fn forward_call_curve(curve: &CallCurve, rate: f64, dividend: f64) -> Result<CallCurve> {
    if !rate.is_finite() || !dividend.is_finite() {
        return Err(Error::Domain("rate and dividend must be finite".into()));
    }
    let t = curve.maturity;
    let growth = ((rate - dividend) * t).exp();
    let up = (dividend * t).exp();
    let strikes: Vec<f64> = curve.strikes.iter().map(|k| k / growth).collect();
    let prices: Vec<f64> = curve.prices.iter().map(|c| c * up).collect();
    let v0 = curve.zero_strike_value * up;
    let delta = curve.discount * up * growth;
    let mut out = CallCurve::new(t, strikes, prices, v0, delta)?;
    out.tail_meta = curve.tail_meta.map(|m| TailMeta {
        left: m.left.map(|p| TailPiece { knee: p.knee / growth, a: p.a * up, b: p.b * growth }),
        right: m.right.map(|p| TailPiece { knee: p.knee / growth, a: p.a * up, b: p.b * growth }),
    });
    Ok(out)
}

/// Spot-measure strikes whose forward images cover `x_grid` with one spare
/// node beyond each end, plus the zero strike.
pub fn covering_strikes(x_grid: &[f64], maturity: f64, rate: f64, dividend: f64) -> Vec<f64> {
    let n = x_grid.len();
    let growth = ((rate - dividend) * maturity).exp();
    let mut out = Vec::with_capacity(n + 3);
    out.push(0.0);
    if n >= 2 {
        out.push(x_grid[0] * x_grid[0] / x_grid[1] * growth);
    }
    out.extend(x_grid.iter().map(|x| x * growth));
    if n >= 2 {
        out.push(x_grid[n - 1] * x_grid[n - 1] / x_grid[n - 2] * growth);
    }
    out
}

/// `U_λ(x) = −|x − P₀|` for the point mass at `P₀`.
pub fn initial_potential(p0: f64, x_grid: &[f64]) -> PotentialCurve {
    PotentialCurve {
        maturity: 0.0,
        x_grid: x_grid.to_vec(),
        values: x_grid.iter().map(|&x| -(x - p0).abs()).collect(),
        knees: None,
    }
}

/// Largest concavity violation accepted in a potential, relative to `P₀`.
///
/// Matches the tail-correction convexity threshold so any corrected curve
/// passes.
pub const CONCAVITY_TOL: f64 = 1e-8;

/// `U_μ(x) = P₀ − 2c(x) − x` from a forward call curve, on `x_grid`.
pub fn potential_from_calls(curve: &CallCurve, x_grid: &[f64]) -> Result<PotentialCurve> {
    if x_grid.len() < 3 || x_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("potential grid must be increasing with at least 3 nodes".into()));
    }
    let p0 = curve.zero_strike_value;
    let ev = curve.evaluator()?;
    let mut values = Vec::with_capacity(x_grid.len());
    for &x in x_grid {
        values.push(p0 - 2.0 * ev.value(x)? - x);
    }
    let neg: Vec<f64> = values.iter().map(|u| -u).collect();
    let conv = crate::models::curve_convexity(x_grid, &neg);
    if let Some(i) = (1..x_grid.len() - 1).find(|&i| conv[i] < -CONCAVITY_TOL * p0) {
        return Err(Error::InvalidCurve {
            index: i,
            message: format!("potential at T={} not concave at x={} (second difference {})", curve.maturity, x_grid[i], -conv[i]),
        });
    }
    Ok(PotentialCurve { maturity: curve.maturity, x_grid: x_grid.to_vec(), values, knees: curve.tail_meta })
}

/// Convex-order diagnostics for one adjacent pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairOrdering {
    pub earlier: f64,
    pub later: f64,
    /// `max_x (U_later(x) − U_earlier(x))`; non-positive when ordered.
    pub max_excess: f64,
    pub argmax_x: f64,
    pub ordered: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    pub pairs: Vec<PairOrdering>,
    pub tolerance: f64,
    pub ordered: bool,
}

/// Default tolerance of [`check_convex_order`], relative to `P₀`.
pub const ORDER_TOL: f64 = 1e-7;

/// Checks `U_{k} ≤ U_{k−1}` for each adjacent pair, to `ORDER_TOL·P₀`.
///
/// The first curve is compared with `initial` when given. Returns the report
/// either way; the caller decides whether a violation is fatal.
pub fn check_convex_order(p0: f64, initial: Option<&PotentialCurve>, seq: &[PotentialCurve]) -> Result<OrderingReport> {
    let tolerance = ORDER_TOL * p0;
    let chain: Vec<&PotentialCurve> = initial.into_iter().chain(seq.iter()).collect();
    if let Some(first) = chain.first() {
        if chain.iter().any(|c| c.x_grid != first.x_grid || c.values.len() != first.x_grid.len()) {
            return Err(Error::Usage("potential curves do not share a grid".into()));
        }
    }
    let mut pairs = Vec::new();
    for w in chain.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mut max_excess = f64::NEG_INFINITY;
        let mut argmax_x = f64::NAN;
        for ((&ua, &ub), &x) in a.values.iter().zip(&b.values).zip(&a.x_grid) {
            if ub - ua > max_excess {
                max_excess = ub - ua;
                argmax_x = x;
            }
        }
        pairs.push(PairOrdering { earlier: a.maturity, later: b.maturity, max_excess, argmax_x, ordered: max_excess <= tolerance });
    }
    let ordered = pairs.iter().all(|p| p.ordered);
    Ok(OrderingReport { pairs, tolerance, ordered })
}
