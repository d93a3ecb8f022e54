//! Smoothing models for the quoted surface: Black-Scholes and Heston pricing
//! and calibration, plus the call-curve container with its exponential tail
//! correction.

mod black_scholes;
mod calibration;
mod curve;
mod heston;

pub use black_scholes::{bs_call, bs_put, bs_price, implied_vol, BsParams};
pub use calibration::{
    calibrate_bs, calibrate_heston, BsFit, HestonCalibrationConfig, HestonFit, StartOutcome,
};
pub use curve::{tail_correct, CallCurve, CurveEvaluator, TailMeta, TailPiece, TAIL_SLOPE_TOL};
pub(crate) use curve::convexity as curve_convexity;
pub use heston::{heston_call, heston_calls, heston_put, HestonParams, HestonQuadrature};

use crate::market_data::OptionKind;

/// Pricing model selector.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum ModelParams {
    Bs(BsParams),
    Heston(HestonParams),
}

impl ModelParams {
    /// Call prices on a strike list for one maturity.
    pub fn call_prices(
        &self,
        spot: f64,
        strikes: &[f64],
        maturity: f64,
        rate: f64,
        dividend: f64,
    ) -> crate::Result<alloc::vec::Vec<f64>> {
        match self {
            ModelParams::Bs(p) => strikes
                .iter()
                .map(|&k| bs_call(spot, k, maturity, rate, dividend, p))
                .collect(),
            ModelParams::Heston(p) => heston_calls(spot, strikes, maturity, rate, dividend, p),
        }
    }

    /// Spot-measure call curve on `strikes`.
    pub fn call_curve(&self, spot: f64, strikes: alloc::vec::Vec<f64>, maturity: f64, rate: f64, dividend: f64) -> crate::Result<CallCurve> {
        use num_traits::Float;
        let prices = self.call_prices(spot, &strikes, maturity, rate, dividend)?;
        CallCurve::new(maturity, strikes, prices, spot * (-dividend * maturity).exp(), (-rate * maturity).exp())
    }
}

/// Converts a call price into the price of `kind` by put–call parity.
pub(crate) fn from_call(kind: OptionKind, call: f64, spot: f64, strike: f64, maturity: f64, rate: f64, dividend: f64) -> f64 {
    use num_traits::Float;
    match kind {
        OptionKind::Call => call,
        OptionKind::Put => call - spot * (-dividend * maturity).exp() + strike * (-rate * maturity).exp(),
    }
}
