//! Synthetic quote books priced by a model, in the CSV input format.
//!
//! Strikes sit on a fixed step inside a moneyness band that widens with
//! `√T`; every strike gets a call and a put. With a positive tick the bid and
//! ask are the model price minus/plus a half spread, rounded outward to the
//! tick, so mids carry rounding noise the way exchange quotes do.

use serde::{Deserialize, Serialize};
use varbound_core::market_data::{OptionKind, Quote, QuoteSet};
use varbound_core::models::{HestonParams, ModelParams};
use varbound_core::Result;

/// Maturities of the twelve monthly-and-longer expiries used by default.
pub const PAPER_MATURITIES: [f64; 12] = [0.085, 0.16, 0.25, 0.33, 0.5, 0.75, 1.01, 1.25, 1.5, 1.75, 2.25, 2.75];

pub const PAPER_SPOT: f64 = 2833.0;
pub const PAPER_RATE: f64 = 0.0265;
pub const PAPER_DIVIDEND: f64 = 0.0185;
pub const PAPER_BS_VOL: f64 = 0.153;

pub fn paper_heston() -> HestonParams {
    HestonParams { v0: 0.0158, vbar: 0.0361, rho: -0.5199, kappa: 2.6280, sigma_v: 0.7902 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub model: ModelParams,
    pub spot: f64,
    pub rate: f64,
    pub dividend: f64,
    pub maturities: Vec<f64>,
    pub strike_step: f64,
    /// Band half-width in standard deviations of log-moneyness.
    pub band_sd: f64,
    /// Price tick; `0` quotes the exact model price as bid and ask.
    pub tick: f64,
    /// Half spread as a fraction of the price, floored at one tick.
    pub relative_spread: f64,
}

impl SynthConfig {
    /// Twelve expiries on a 2833 spot with 25-point strikes and 0.05 ticks.
    pub fn paper_like(model: ModelParams) -> Self {
        Self {
            model,
            spot: PAPER_SPOT,
            rate: PAPER_RATE,
            dividend: PAPER_DIVIDEND,
            maturities: PAPER_MATURITIES.to_vec(),
            strike_step: 25.0,
            band_sd: 3.0,
            tick: 0.05,
            relative_spread: 0.01,
        }
    }

    fn vol_scale(&self) -> f64 {
        match self.model {
            ModelParams::Bs(p) => p.vol,
            ModelParams::Heston(p) => p.vbar.max(p.v0).sqrt(),
        }
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<QuoteSet> {
    let mut quotes = Vec::new();
    let vol = cfg.vol_scale();
    for &t in &cfg.maturities {
        let fwd = cfg.spot * ((cfg.rate - cfg.dividend) * t).exp();
        let w = cfg.band_sd * vol * t.sqrt();
        let lo = (fwd * (-w).exp() / cfg.strike_step).ceil().max(1.0) as i64;
        let hi = (fwd * w.exp() / cfg.strike_step).floor() as i64;
        let strikes: Vec<f64> = (lo..=hi).map(|j| j as f64 * cfg.strike_step).collect();
        let calls = cfg.model.call_prices(cfg.spot, &strikes, t, cfg.rate, cfg.dividend)?;
        for (&k, &c) in strikes.iter().zip(&calls) {
            let p = c - cfg.spot * (-cfg.dividend * t).exp() + k * (-cfg.rate * t).exp();
            for (kind, price) in [(OptionKind::Call, c), (OptionKind::Put, p)] {
                let (bid, ask) = quote(price.max(0.0), cfg.tick, cfg.relative_spread);
                quotes.push(Quote::new(kind, k, t, bid, ask)?);
            }
        }
    }
    QuoteSet::new(cfg.spot, quotes)
}

fn quote(price: f64, tick: f64, rel: f64) -> (f64, f64) {
    if tick <= 0.0 {
        return (price, price);
    }
    let h = (rel * price).max(tick);
    let bid = ((price - h) / tick).floor().max(0.0) * tick;
    let ask = ((price + h) / tick).ceil() * tick;
    // keep the decimal representation short
    (round_to(bid, tick), round_to(ask, tick))
}

fn round_to(v: f64, tick: f64) -> f64 {
    let digits = (-tick.log10()).ceil().max(0.0) as i32 + 1;
    let s = 10f64.powi(digits);
    (v * s).round() / s
}

#[cfg(test)]
mod tests {
    use super::*;
    use varbound_core::models::BsParams;

    #[test]
    fn paper_like_book_has_twelve_expiries_and_pairs() {
        let qs = generate(&SynthConfig::paper_like(ModelParams::Bs(BsParams { vol: PAPER_BS_VOL }))).unwrap();
        assert_eq!(qs.maturities.len(), 12);
        assert_eq!(qs.maturities[0], 0.085);
        assert_eq!(qs.maturities[11], 2.75);
        for &t in &qs.maturities {
            assert!(qs.parity_pairs(t).len() >= 2, "T={t}");
        }
        for q in &qs.quotes {
            assert!(q.ask >= q.bid && q.bid >= 0.0);
            assert!(((q.ask / 0.05).round() * 0.05 - q.ask).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_tick_quotes_exact_prices() {
        let mut cfg = SynthConfig::paper_like(ModelParams::Bs(BsParams { vol: 0.2 }));
        cfg.tick = 0.0;
        cfg.maturities = vec![1.0];
        let qs = generate(&cfg).unwrap();
        assert!(qs.quotes.iter().all(|q| q.bid == q.ask));
    }
}
