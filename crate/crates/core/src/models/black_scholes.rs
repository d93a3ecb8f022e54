use alloc::format;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::OptionKind;
use crate::math::normal::norm_cdf;
use crate::math::optimize::brent_root;

/// Lognormal volatility per square-root year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsParams {
    pub vol: f64,
}

fn check(spot: f64, strike: f64, maturity: f64, rate: f64, dividend: f64, vol: f64) -> Result<()> {
    let all_finite = [spot, strike, maturity, rate, dividend, vol].iter().all(|v| v.is_finite());
    if !all_finite || !(spot > 0.0) || !(maturity > 0.0) || strike < 0.0 || vol < 0.0 {
        return Err(Error::Domain(format!(
            "Black-Scholes inputs out of domain: spot {spot}, strike {strike}, T {maturity}, r {rate}, q {dividend}, vol {vol}"
        )));
    }
    Ok(())
}

/// Discounted lognormal call price `e^{−rT} E[(P_T − K)^+]` with carry `r − q`.
pub fn bs_call(spot: f64, strike: f64, maturity: f64, rate: f64, dividend: f64, params: &BsParams) -> Result<f64> {
    check(spot, strike, maturity, rate, dividend, params.vol)?;
    let df_q = (-dividend * maturity).exp();
    let df_r = (-rate * maturity).exp();
    if strike == 0.0 {
        return Ok(spot * df_q);
    }
    let sd = params.vol * maturity.sqrt();
    let fwd = spot * ((rate - dividend) * maturity).exp();
    if sd == 0.0 {
        return Ok(df_r * (fwd - strike).max(0.0));
    }
    let d1 = ((fwd / strike).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    Ok(spot * df_q * norm_cdf(d1) - strike * df_r * norm_cdf(d2))
}

pub fn bs_put(spot: f64, strike: f64, maturity: f64, rate: f64, dividend: f64, params: &BsParams) -> Result<f64> {
    check(spot, strike, maturity, rate, dividend, params.vol)?;
    let df_q = (-dividend * maturity).exp();
    let df_r = (-rate * maturity).exp();
    if strike == 0.0 {
        return Ok(0.0);
    }
    let sd = params.vol * maturity.sqrt();
    let fwd = spot * ((rate - dividend) * maturity).exp();
    if sd == 0.0 {
        return Ok(df_r * (strike - fwd).max(0.0));
    }
    let d1 = ((fwd / strike).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    Ok(strike * df_r * norm_cdf(-d2) - spot * df_q * norm_cdf(-d1))
}

pub fn bs_price(
    kind: OptionKind,
    spot: f64,
    strike: f64,
    maturity: f64,
    rate: f64,
    dividend: f64,
    params: &BsParams,
) -> Result<f64> {
    match kind {
        OptionKind::Call => bs_call(spot, strike, maturity, rate, dividend, params),
        OptionKind::Put => bs_put(spot, strike, maturity, rate, dividend, params),
    }
}

/// Scalar implied-volatility inversion on `[1e-6, 5]`.
pub fn implied_vol(
    price: f64,
    kind: OptionKind,
    spot: f64,
    strike: f64,
    maturity: f64,
    rate: f64,
    dividend: f64,
) -> Result<f64> {
    let f = |v: f64| {
        bs_price(kind, spot, strike, maturity, rate, dividend, &BsParams { vol: v }).unwrap_or(f64::NAN) - price
    };
    brent_root(f, 1e-6, 5.0, 1e-15, 300)
}
