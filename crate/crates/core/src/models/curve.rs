use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::interp::MonotoneCubic;

/// Exponential tail attached beyond a knee strike.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailPiece {
    pub knee: f64,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TailMeta {
    /// `c(x) = V₀ − δx + a·e^{b(x − knee)}` for `x < knee`.
    pub left: Option<TailPiece>,
    /// `c(x) = a·e^{−b(x − knee)}` for `x > knee`.
    pub right: Option<TailPiece>,
}

/// Discounted call prices on a strike grid for one maturity.
///
/// `zero_strike_value` is `c(0)` and `discount` the limiting slope `−c'(0)`,
/// so the curve's forward is `zero_strike_value / discount`. Spot-measure
/// curves carry `(P₀e^{−qT}, e^{−rT})`; forward-measure curves `(P₀, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallCurve {
    pub maturity: f64,
    pub strikes: Vec<f64>,
    pub prices: Vec<f64>,
    pub zero_strike_value: f64,
    pub discount: f64,
    pub tail_meta: Option<TailMeta>,
}

impl CallCurve {
    pub fn new(maturity: f64, strikes: Vec<f64>, prices: Vec<f64>, zero_strike_value: f64, discount: f64) -> Result<Self> {
        if strikes.len() != prices.len() {
            return Err(Error::Domain("strike and price lengths differ".into()));
        }
        if strikes.len() < 2 {
            return Err(Error::InsufficientData(format!("call curve needs at least 2 strikes, got {}", strikes.len())));
        }
        if strikes.windows(2).any(|w| !(w[1] > w[0])) || strikes[0] < 0.0 {
            return Err(Error::Domain("call curve strikes must be non-negative and strictly increasing".into()));
        }
        if prices.iter().any(|p| !p.is_finite()) || !(zero_strike_value > 0.0) || !(discount > 0.0) || !(maturity > 0.0) {
            return Err(Error::Domain("call curve values must be finite and positive".into()));
        }
        Ok(Self { maturity, strikes, prices, zero_strike_value, discount, tail_meta: None })
    }

    pub fn forward(&self) -> f64 {
        self.zero_strike_value / self.discount
    }

    /// Builds a reusable evaluator for [`CurveEvaluator::value`].
    pub fn evaluator(&self) -> Result<CurveEvaluator> {
        Ok(CurveEvaluator {
            spline: MonotoneCubicDecreasing::new(&self.strikes, &self.prices)?,
            tails: self.tail_meta.unwrap_or_default(),
            v0: self.zero_strike_value,
            discount: self.discount,
        })
    }

    /// Interpolated value at strike `x`; see [`CurveEvaluator::value`].
    pub fn value_at(&self, x: f64) -> Result<f64> {
        self.evaluator()?.value(x)
    }
}

/// Shape-preserving interpolant for a non-increasing call curve.
///
/// Works on `−c`, which is non-decreasing, so the monotone spline applies.
#[derive(Debug, Clone)]
struct MonotoneCubicDecreasing(MonotoneCubic);

impl MonotoneCubicDecreasing {
    fn new(x: &[f64], y: &[f64]) -> Result<Self> {
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        Ok(Self(MonotoneCubic::new(x, &neg)?))
    }
}

/// Evaluates a [`CallCurve`] without rebuilding the spline on every call.
#[derive(Debug, Clone)]
pub struct CurveEvaluator {
    spline: MonotoneCubicDecreasing,
    tails: TailMeta,
    v0: f64,
    discount: f64,
}

impl CurveEvaluator {
    /// Tail formula beyond a knee, the monotone spline inside the strike
    /// range, a domain error elsewhere.
    pub fn value(&self, x: f64) -> Result<f64> {
        if let Some(t) = self.tails.right {
            if x > t.knee {
                return Ok(t.a * (-t.b * (x - t.knee)).exp());
            }
        }
        if let Some(t) = self.tails.left {
            if x < t.knee {
                return Ok(self.v0 - self.discount * x + t.a * (t.b * (x - t.knee)).exp());
            }
        }
        match self.spline.0.eval(x) {
            Some(v) => Ok(-v),
            None => {
                let (lo, hi) = self.spline.0.domain();
                Err(Error::Domain(format!("strike {x} outside curve domain [{lo}, {hi}] and no tail covers it")))
            }
        }
    }
}

/// Local convexity at each interior node, measured as a slope jump scaled by
/// the mean neighbouring spacing (the plain second difference on uniform grids).
pub(crate) fn convexity(strikes: &[f64], prices: &[f64]) -> Vec<f64> {
    let n = strikes.len();
    let mut j = alloc::vec![0.0; n];
    for i in 1..n - 1 {
        let hl = strikes[i] - strikes[i - 1];
        let hr = strikes[i + 1] - strikes[i];
        let sl = (prices[i] - prices[i - 1]) / hl;
        let sr = (prices[i + 1] - prices[i]) / hr;
        j[i] = (sr - sl) * 0.5 * (hl + hr);
    }
    j
}

/// Slope decrease tolerated at a node before the curve counts as non-convex.
/// Slope jumps are the implied point masses, so this sits two decades below
/// the negative-mass limit of the pricing measure.
pub const TAIL_SLOPE_TOL: f64 = 1e-12;

fn slope_jumps(strikes: &[f64], prices: &[f64]) -> Vec<f64> {
    let n = strikes.len();
    let mut j = alloc::vec![0.0; n];
    for i in 1..n - 1 {
        let sl = (prices[i] - prices[i - 1]) / (strikes[i] - strikes[i - 1]);
        let sr = (prices[i + 1] - prices[i]) / (strikes[i + 1] - strikes[i]);
        j[i] = sr - sl;
    }
    j
}

/// Replaces non-convex wings by exponential tails fitted at the last
/// convex strike on each side of the money.
///
/// Scanning outward from the strike nearest the forward, the first node whose
/// slope jump falls below `−TAIL_SLOPE_TOL` marks the failure; the knee is
/// the node just inside it. The right tail `a·e^{−b(x − knee)}` and left tail
/// `V₀ − δx + a·e^{b(x − knee)}` match value and one-sided slope at the knee; when the
/// fitted parameters are unusable the knee moves inward. A curve with no
/// failure is returned unchanged.
pub fn tail_correct(curve: &CallCurve) -> Result<CallCurve> {
    let n = curve.strikes.len();
    if n < 4 {
        return Err(Error::TailCorrection(format!("curve at T={} has only {n} strikes", curve.maturity)));
    }
    let x = &curve.strikes;
    let c = &curve.prices;
    let thr = -TAIL_SLOPE_TOL;
    let conv = slope_jumps(x, c);
    let fwd = curve.forward();
    let atm = (0..n)
        .min_by(|&a, &b| (x[a] - fwd).abs().partial_cmp(&(x[b] - fwd).abs()).unwrap())
        .unwrap()
        .clamp(1, n - 2);
    if conv[atm] < thr {
        return Err(Error::TailCorrection(format!("curve at T={} is not convex at the money", curve.maturity)));
    }

    let right_fail = (atm..n - 1).find(|&i| conv[i] < thr);
    let left_fail = (1..=atm).rev().find(|&i| conv[i] < thr);
    if right_fail.is_none() && left_fail.is_none() {
        return Ok(curve.clone());
    }

    let mut out = curve.clone();
    let mut meta = curve.tail_meta.unwrap_or_default();

    if let Some(fail) = right_fail {
        let mut k = fail - 1;
        let piece = loop {
            if k <= atm.saturating_sub(1) || k == 0 {
                return Err(Error::TailCorrection(format!("no valid right knee at T={}", curve.maturity)));
            }
            let cval = c[k];
            let d = (c[k] - c[k - 1]) / (x[k] - x[k - 1]);
            if cval > 0.0 && d < 0.0 {
                let b = -d / cval;
                break TailPiece { knee: x[k], a: cval, b };
            }
            k -= 1;
        };
        for i in k + 1..n {
            out.prices[i] = piece.a * (-piece.b * (x[i] - piece.knee)).exp();
        }
        meta.right = Some(piece);
    }

    if let Some(fail) = left_fail {
        let v0 = curve.zero_strike_value;
        let delta = curve.discount;
        let right_limit = meta.right.map(|p| p.knee).unwrap_or(f64::INFINITY);
        let mut k = fail + 1;
        let piece = loop {
            if k >= n - 1 || x[k] >= right_limit || k > atm + 1 {
                return Err(Error::TailCorrection(format!("no valid left knee at T={}", curve.maturity)));
            }
            let a_gap = c[k] - v0 + delta * x[k];
            let d = (c[k + 1] - c[k]) / (x[k + 1] - x[k]);
            let b = (d + delta) / a_gap;
            if a_gap > 0.0 && b > 0.0 && b.is_finite() {
                break TailPiece { knee: x[k], a: a_gap, b };
            }
            k += 1;
        };
        for i in 0..k {
            out.prices[i] = v0 - delta * x[i] + piece.a * (piece.b * (x[i] - piece.knee)).exp();
        }
        meta.left = Some(piece);
    }

    out.tail_meta = Some(meta);
    Ok(out)
}
