use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{Quote, QuoteSet};
use crate::math::optimize::{brent_minimize, levenberg_marquardt, LmConfig};
use crate::models::black_scholes::{bs_price, BsParams};
use crate::models::heston::{heston_calls_with, HestonParams, HestonQuadrature};
use crate::models::from_call;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsFit {
    pub params: BsParams,
    /// Weighted root-mean-square price error.
    pub rmse: f64,
}

/// Result of one local search from a fixed starting point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StartOutcome {
    pub start: HestonParams,
    pub params: HestonParams,
    pub rmse: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HestonFit {
    pub params: HestonParams,
    pub rmse: f64,
    pub starts: Vec<StartOutcome>,
}

#[derive(Debug, Clone)]
pub struct HestonCalibrationConfig {
    pub lm: LmConfig,
    pub kappa_starts: Vec<f64>,
    pub rho_starts: Vec<f64>,
    pub sigma_v_starts: Vec<f64>,
    /// Iterations each start gets before only the best one is refined.
    pub screen_iter: usize,
    /// Pricing accuracy inside the objective.
    pub quadrature: HestonQuadrature,
}

impl Default for HestonCalibrationConfig {
    fn default() -> Self {
        Self {
            lm: LmConfig { max_iter: 60, ..LmConfig::default() },
            kappa_starts: vec![0.5, 3.0],
            rho_starts: vec![-0.8, -0.2],
            sigma_v_starts: vec![0.3, 1.0],
            screen_iter: 4,
            quadrature: HestonQuadrature { rel_tol: 1e-10, ..HestonQuadrature::default() },
        }
    }
}

const KAPPA_MAX: f64 = 20.0;
const SIGMA_V_MAX: f64 = 5.0;
const RHO_MAX: f64 = 0.999;

fn check_inputs(qs: &QuoteSet, rate: f64, dividend: f64) -> Result<()> {
    if qs.quotes.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !rate.is_finite() || !dividend.is_finite() {
        return Err(Error::Domain(format!("rate {rate} / dividend {dividend} not finite")));
    }
    Ok(())
}

fn total_weight(quotes: &[Quote]) -> f64 {
    quotes.iter().map(|q| q.weight()).sum()
}

/// Least-squares Black–Scholes volatility in price space.
///
/// A coarse log-spaced scan on `[1e-3, 3]` brackets the minimum, which Brent
/// then refines.
pub fn calibrate_bs(qs: &QuoteSet, rate: f64, dividend: f64) -> Result<BsFit> {
    check_inputs(qs, rate, dividend)?;
    let quotes = qs.sorted_quotes();
    let wsum = total_weight(&quotes);
    let objective = |vol: f64| -> f64 {
        let p = BsParams { vol };
        let mut acc = 0.0;
        for q in &quotes {
            match bs_price(q.option_kind, qs.spot, q.strike, q.maturity, rate, dividend, &p) {
                Ok(v) => acc += q.weight() * (v - q.mid) * (v - q.mid),
                Err(_) => return f64::INFINITY,
            }
        }
        acc / wsum
    };
    let n = 60;
    let (lo, hi) = (1e-3f64, 3.0f64);
    let grid: Vec<f64> = (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect();
    let vals: Vec<f64> = grid.iter().map(|&v| objective(v)).collect();
    let best = (0..n)
        .min_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(core::cmp::Ordering::Equal))
        .unwrap();
    if !vals[best].is_finite() {
        return Err(Error::Calibration { message: "Black-Scholes objective not finite".into(), best_objective: f64::INFINITY });
    }
    let a = grid[best.saturating_sub(1)];
    let b = grid[(best + 1).min(n - 1)];
    let (vol, obj) = brent_minimize(objective, a, b, 1e-12, 200);
    if best == 0 || best == n - 1 {
        return Err(Error::Calibration {
            message: format!("Black-Scholes volatility {vol} at the edge of the search range"),
            best_objective: obj.sqrt(),
        });
    }
    Ok(BsFit { params: BsParams { vol }, rmse: obj.sqrt() })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn to_params(theta: &[f64]) -> HestonParams {
    HestonParams {
        v0: theta[0].exp(),
        vbar: theta[1].exp(),
        rho: RHO_MAX * theta[2].tanh(),
        kappa: KAPPA_MAX * sigmoid(theta[3]),
        sigma_v: SIGMA_V_MAX * sigmoid(theta[4]),
    }
}

fn to_theta(p: &HestonParams) -> Vec<f64> {
    vec![
        p.v0.ln(),
        p.vbar.ln(),
        (p.rho / RHO_MAX).atanh(),
        logit(p.kappa / KAPPA_MAX),
        logit(p.sigma_v / SIGMA_V_MAX),
    ]
}

/// Quotes grouped by maturity with the distinct strikes each group needs.
struct Slice {
    maturity: f64,
    strikes: Vec<f64>,
    /// For every quote in the slice, its index into `strikes`.
    quote_strike: Vec<usize>,
    quotes: Vec<Quote>,
}

fn slices(qs: &QuoteSet) -> Vec<Slice> {
    qs.maturities
        .iter()
        .map(|&t| {
            let mut quotes: Vec<Quote> = qs.quotes_at(t).cloned().collect();
            quotes.sort_by(|a, b| a.strike.partial_cmp(&b.strike).unwrap().then((a.option_kind as u8).cmp(&(b.option_kind as u8))));
            let mut strikes: Vec<f64> = quotes.iter().map(|q| q.strike).collect();
            strikes.dedup();
            let quote_strike = quotes
                .iter()
                .map(|q| strikes.partition_point(|&k| k < q.strike))
                .collect();
            Slice { maturity: t, strikes, quote_strike, quotes }
        })
        .collect()
}

/// Weighted least-squares Heston fit in price space.
///
/// Every combination of the configured `κ`, `ρ`, `σ_v` starting values is run
/// through Levenberg–Marquardt in unconstrained coordinates (`v₀ = e^θ`,
/// `ρ = tanh θ`, `κ` and `σ_v` through scaled sigmoids), with `v₀ = v̄` taken
/// from the Black–Scholes fit. Each start gets `screen_iter` iterations; the
/// best of them is then refined with the remaining iteration budget.
pub fn calibrate_heston(
    qs: &QuoteSet,
    rate: f64,
    dividend: f64,
    cfg: &HestonCalibrationConfig,
) -> Result<HestonFit> {
    check_inputs(qs, rate, dividend)?;
    let bs = calibrate_bs(qs, rate, dividend)?;
    let var0 = bs.params.vol * bs.params.vol;
    let slices = slices(qs);
    let m = qs.quotes.len();
    let wsum = total_weight(&qs.quotes);
    let spot = qs.spot;

    let mut residuals = |theta: &[f64], out: &mut [f64]| -> Result<()> {
        let p = to_params(theta);
        let mut r = 0;
        for s in &slices {
            let calls = heston_calls_with(spot, &s.strikes, s.maturity, rate, dividend, &p, &cfg.quadrature)?;
            for (q, &ki) in s.quotes.iter().zip(&s.quote_strike) {
                let v = from_call(q.option_kind, calls[ki], spot, q.strike, q.maturity, rate, dividend);
                out[r] = (q.weight() / wsum).sqrt() * (v - q.mid);
                r += 1;
            }
        }
        Ok(())
    };

    // Screen every start briefly, then refine the most promising one.
    let screen = LmConfig { max_iter: cfg.screen_iter.min(cfg.lm.max_iter), ..cfg.lm };
    let mut outcomes = Vec::new();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut last_err = None;
    for &kappa in &cfg.kappa_starts {
        for &rho in &cfg.rho_starts {
            for &sigma_v in &cfg.sigma_v_starts {
                let start = HestonParams { v0: var0, vbar: var0, rho, kappa, sigma_v };
                match levenberg_marquardt(&mut residuals, &to_theta(&start), m, &screen) {
                    Ok(res) => {
                        let rmse = (2.0 * res.cost).sqrt();
                        outcomes.push(StartOutcome { start, params: to_params(&res.x), rmse, iterations: res.iterations });
                        if best.as_ref().map_or(true, |(_, b)| rmse < *b) {
                            best = Some((res.x, rmse));
                        }
                    }
                    Err(e) => last_err = Some(e),
                }
            }
        }
    }
    let Some((theta, screened)) = best.filter(|b| b.1.is_finite()) else {
        return Err(Error::Calibration {
            message: format!("no Heston start converged: {last_err:?}"),
            best_objective: f64::INFINITY,
        });
    };
    let refine = LmConfig { max_iter: cfg.lm.max_iter.saturating_sub(screen.max_iter).max(1), ..cfg.lm };
    match levenberg_marquardt(&mut residuals, &theta, m, &refine) {
        Ok(res) if (2.0 * res.cost).sqrt() <= screened => {
            Ok(HestonFit { params: to_params(&res.x), rmse: (2.0 * res.cost).sqrt(), starts: outcomes })
        }
        _ => Ok(HestonFit { params: to_params(&theta), rmse: screened, starts: outcomes }),
    }
}
