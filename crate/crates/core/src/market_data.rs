//! Option quotes and put–call-parity estimates of the implied interest rate
//! and dividend yield.
//!
//! Parity `C − P = P0·e^{−qT} − K·e^{−rT}` gives, per strike,
//! `∂/∂K (P − C) = e^{−rT}`, hence `r(K,T) = −ln(∂/∂K (P − C)) / T`, and then
//! `q(K,T) = −ln((C − P + K·e^{−rT}) / P0) / T`. The estimates are the plain
//! averages over all usable (strike, maturity) pairs.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptionKind {
    Call,
    Put,
}

/// Weight of a zero-bid quote in calibration objectives.
pub const ZERO_BID_WEIGHT: f64 = 0.25;

/// A single bid/ask quote. `mid` is the plain bid/ask midpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quote {
    pub option_kind: OptionKind,
    pub strike: f64,
    pub maturity: f64,
    pub bid: f64,
    pub ask: f64,
    pub mid: f64,
}

impl Quote {
    /// Validates `ask ≥ bid ≥ 0`, `strike > 0`, `maturity > 0`.
    pub fn new(option_kind: OptionKind, strike: f64, maturity: f64, bid: f64, ask: f64) -> Result<Self> {
        let finite = strike.is_finite() && maturity.is_finite() && bid.is_finite() && ask.is_finite();
        if !finite || !(strike > 0.0) || !(maturity > 0.0) || !(bid >= 0.0) || !(ask >= bid) {
            return Err(Error::Domain(format!(
                "quote violates invariants: strike {strike}, maturity {maturity}, bid {bid}, ask {ask}"
            )));
        }
        Ok(Self {
            option_kind,
            strike,
            maturity,
            bid,
            ask,
            mid: 0.5 * (bid + ask),
        })
    }

    pub fn is_zero_bid(&self) -> bool {
        self.bid == 0.0
    }

    pub fn weight(&self) -> f64 {
        if self.is_zero_bid() {
            ZERO_BID_WEIGHT
        } else {
            1.0
        }
    }
}

/// Quotes on one underlying, with the distinct maturities in increasing order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuoteSet {
    pub spot: f64,
    pub quotes: Vec<Quote>,
    pub maturities: Vec<f64>,
}

impl QuoteSet {
    pub fn new(spot: f64, quotes: Vec<Quote>) -> Result<Self> {
        if !(spot > 0.0) || !spot.is_finite() {
            return Err(Error::Domain(format!("spot must be positive, got {spot}")));
        }
        if quotes.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut maturities: Vec<f64> = quotes.iter().map(|q| q.maturity).collect();
        maturities.sort_by(f64::total_cmp);
        maturities.dedup();
        Ok(Self {
            spot,
            quotes,
            maturities,
        })
    }

    pub fn quotes_at(&self, maturity: f64) -> impl Iterator<Item = &Quote> + '_ {
        self.quotes.iter().filter(move |q| q.maturity == maturity)
    }

    /// Keeps only quotes whose maturity satisfies `keep`.
    pub fn retain_maturities<F: FnMut(f64) -> bool>(&self, mut keep: F) -> Result<Self> {
        let quotes: Vec<Quote> = self.quotes.iter().copied().filter(|q| keep(q.maturity)).collect();
        Self::new(self.spot, quotes)
    }

    /// Quotes in canonical (maturity, kind, strike, bid, ask) order.
    pub fn sorted_quotes(&self) -> Vec<Quote> {
        let mut q = self.quotes.clone();
        q.sort_by(|a, b| {
            a.maturity
                .total_cmp(&b.maturity)
                .then(a.option_kind.cmp(&b.option_kind))
                .then(a.strike.total_cmp(&b.strike))
                .then(a.bid.total_cmp(&b.bid))
                .then(a.ask.total_cmp(&b.ask))
        });
        q
    }

    /// Strikes at `maturity` carrying both a call and a put with non-zero bid,
    /// as `(strike, call_mid, put_mid)` sorted by strike. Duplicate quotes are
    /// averaged.
    pub fn parity_pairs(&self, maturity: f64) -> Vec<(f64, f64, f64)> {
        let mut calls: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
        let mut puts: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
        for q in self.sorted_quotes().iter().filter(|q| q.maturity == maturity && !q.is_zero_bid()) {
            let book = match q.option_kind {
                OptionKind::Call => &mut calls,
                OptionKind::Put => &mut puts,
            };
            let e = book.entry(strike_key(q.strike)).or_insert((0.0, 0));
            e.0 += q.mid;
            e.1 += 1;
        }
        calls
            .iter()
            .filter_map(|(k, &(c, nc))| {
                puts.get(k)
                    .map(|&(p, np)| (f64::from_bits(*k), c / nc as f64, p / np as f64))
            })
            .collect()
    }
}

/// Quotes parsed from delimited text, with the number of rows rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedQuotes {
    pub quote_set: QuoteSet,
    pub dropped: usize,
}

const COLUMNS: [&str; 5] = ["kind", "strike", "maturity_years", "bid", "ask"];

/// Parses comma-separated quotes with a header naming the columns
/// `kind,strike,maturity_years,bid,ask` (any order, extra columns ignored).
///
/// `kind` is `C`/`P` or `call`/`put`, case-insensitive. Rows that fail to
/// parse or violate the quote invariants are dropped and counted; blank
/// lines and lines starting with `#` are skipped.
pub fn parse_quotes(text: &str, spot: f64) -> Result<ParsedQuotes> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = lines.next().ok_or(Error::EmptyInput)?;
    let names: Vec<&str> = header.trim_start_matches('\u{feff}').split(',').map(str::trim).collect();
    let mut idx = [0usize; 5];
    for (slot, col) in idx.iter_mut().zip(COLUMNS) {
        *slot = names
            .iter()
            .position(|n| n.eq_ignore_ascii_case(col))
            .ok_or_else(|| Error::Parse(format!("header `{header}` lacks column `{col}`")))?;
    }
    let mut quotes = Vec::new();
    let mut dropped = 0;
    for line in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        match parse_row(&fields, &idx) {
            Some(q) => quotes.push(q),
            None => dropped += 1,
        }
    }
    if quotes.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(ParsedQuotes { quote_set: QuoteSet::new(spot, quotes)?, dropped })
}

fn parse_row(fields: &[&str], idx: &[usize; 5]) -> Option<Quote> {
    let get = |c: usize| fields.get(idx[c]).copied();
    let kind = match get(0)?.to_ascii_lowercase().as_str() {
        "c" | "call" => OptionKind::Call,
        "p" | "put" => OptionKind::Put,
        _ => return None,
    };
    let num = |c: usize| get(c)?.parse::<f64>().ok();
    Quote::new(kind, num(1)?, num(2)?, num(3)?, num(4)?).ok()
}

/// Serialises quotes in canonical order; [`parse_quotes`] reads it back
/// unchanged.
pub fn format_quotes(qs: &QuoteSet) -> alloc::string::String {
    use core::fmt::Write;
    let mut out = alloc::string::String::from("kind,strike,maturity_years,bid,ask\n");
    for q in qs.sorted_quotes() {
        let k = match q.option_kind {
            OptionKind::Call => "C",
            OptionKind::Put => "P",
        };
        let _ = writeln!(out, "{k},{},{},{},{}", q.strike, q.maturity, q.bid, q.ask);
    }
    out
}

// Positive finite floats order like their bit patterns.
fn strike_key(strike: f64) -> u64 {
    strike.to_bits()
}

/// One per-pair estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairValue {
    pub strike: f64,
    pub maturity: f64,
    pub value: f64,
}

/// Result of a parity-based estimation. `rate` is set by
/// [`estimate_implied_rate`], `dividend` by [`estimate_implied_dividend`];
/// `per_pair_values` holds the per-(K,T) values of the estimated quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rate: Option<f64>,
    pub dividend: Option<f64>,
    pub per_pair_values: Vec<PairValue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Pairs with maturity below this are excluded (1/T amplifies noise).
    pub min_maturity: f64,
    /// Symmetric quantile trim applied before averaging; `None` keeps all.
    pub trim_quantile: Option<f64>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            min_maturity: 0.02,
            trim_quantile: None,
        }
    }
}

/// Implied interest rate from the strike slope of `P − C`.
///
/// Slopes use centred differences on interior strikes and one-sided
/// differences at the ends of each maturity's strike list.
pub fn estimate_implied_rate(qs: &QuoteSet, cfg: &EstimatorConfig) -> Result<RateEstimate> {
    let mut values = Vec::new();
    for &t in qs.maturities.iter().filter(|&&t| t >= cfg.min_maturity) {
        let pairs = qs.parity_pairs(t);
        if pairs.len() < 2 {
            continue;
        }
        let n = pairs.len();
        let diff = |i: usize| pairs[i].2 - pairs[i].1;
        for i in 0..n {
            let (lo, hi) = match i {
                0 => (0, 1),
                _ if i == n - 1 => (n - 2, n - 1),
                _ => (i - 1, i + 1),
            };
            let slope = (diff(hi) - diff(lo)) / (pairs[hi].0 - pairs[lo].0);
            if slope > 0.0 && slope.is_finite() {
                values.push(PairValue {
                    strike: pairs[i].0,
                    maturity: t,
                    value: -slope.ln() / t,
                });
            }
        }
    }
    if values.is_empty() {
        return Err(Error::InsufficientData(
            "no maturity has two strikes with matched call and put quotes".into(),
        ));
    }
    let rate = trimmed_mean(&values, cfg.trim_quantile);
    Ok(RateEstimate {
        rate: Some(rate),
        dividend: None,
        per_pair_values: values,
    })
}

/// Implied dividend yield given a rate, one value per matched strike.
pub fn estimate_implied_dividend(qs: &QuoteSet, rate: f64, cfg: &EstimatorConfig) -> Result<RateEstimate> {
    if !rate.is_finite() {
        return Err(Error::Domain(format!("rate must be finite, got {rate}")));
    }
    let mut values = Vec::new();
    for &t in qs.maturities.iter().filter(|&&t| t >= cfg.min_maturity) {
        let pairs = qs.parity_pairs(t);
        if pairs.len() < 2 {
            continue;
        }
        for &(k, c, p) in &pairs {
            let arg = (c - p + k * (-rate * t).exp()) / qs.spot;
            if arg > 0.0 && arg.is_finite() {
                values.push(PairValue {
                    strike: k,
                    maturity: t,
                    value: -arg.ln() / t,
                });
            }
        }
    }
    if values.is_empty() {
        return Err(Error::InsufficientData(
            "no usable (strike, maturity) pair for the dividend estimate".into(),
        ));
    }
    let dividend = trimmed_mean(&values, cfg.trim_quantile);
    Ok(RateEstimate {
        rate: Some(rate),
        dividend: Some(dividend),
        per_pair_values: values,
    })
}

fn trimmed_mean(values: &[PairValue], trim: Option<f64>) -> f64 {
    let mut v: Vec<f64> = values.iter().map(|p| p.value).collect();
    match trim {
        Some(alpha) if alpha > 0.0 && alpha < 0.5 => {
            v.sort_by(f64::total_cmp);
            let cut = (alpha * v.len() as f64).floor() as usize;
            let kept = &v[cut..v.len() - cut];
            if kept.is_empty() {
                mean(&v)
            } else {
                mean(kept)
            }
        }
        _ => mean(&v),
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rows_and_counts_rejects() {
        let text = "kind,strike,maturity_years,bid,ask\nC,2800,1.0,120.0,122.0\nP,2800,1.0,5,3\nX,1,1,1,1\nP,2800,1.0,80,81\n";
        let p = parse_quotes(text, 2833.0).unwrap();
        assert_eq!(p.dropped, 2);
        assert_eq!(p.quote_set.quotes.len(), 2);
        assert_eq!(p.quote_set.quotes[0].mid, 121.0);
        assert_eq!(p.quote_set.quotes[0].option_kind, OptionKind::Call);
    }

    #[test]
    fn header_order_is_free_but_columns_required() {
        let p = parse_quotes("ask,bid,maturity_years,strike,kind,extra\n2,1,0.5,100,put,z\n", 100.0).unwrap();
        assert_eq!(p.quote_set.quotes[0].strike, 100.0);
        assert_eq!(p.quote_set.quotes[0].option_kind, OptionKind::Put);
        assert!(matches!(parse_quotes("kind,strike,bid,ask\nC,1,1,2\n", 100.0), Err(Error::Parse(_))));
        assert!(matches!(parse_quotes("kind,strike,maturity_years,bid,ask\n", 100.0), Err(Error::EmptyInput)));
        assert!(matches!(parse_quotes("", 100.0), Err(Error::EmptyInput)));
    }

    #[test]
    fn format_round_trips() {
        let text = "kind,strike,maturity_years,bid,ask\nP,2800,1,80.05,81.1\nC,2800,0.5,120,122\nC,0.1,0.085,0,0.05\n";
        let once = format_quotes(&parse_quotes(text, 2833.0).unwrap().quote_set);
        let twice = format_quotes(&parse_quotes(&once, 2833.0).unwrap().quote_set);
        assert_eq!(once, twice);
        assert!(once.starts_with("kind,strike,maturity_years,bid,ask\nC,0.1,0.085,0,0.05\n"));
    }
    use crate::models::{bs_call, bs_put, BsParams};
    use alloc::vec;
    use proptest::prelude::*;

    fn synthetic(spot: f64, r: f64, q: f64, vol: f64) -> QuoteSet {
        let params = BsParams { vol };
        let mut quotes = Vec::new();
        for &t in &[0.1, 0.5, 1.0, 2.0] {
            for i in 0..25 {
                let k = spot * (0.7 + 0.025 * i as f64);
                let c = bs_call(spot, k, t, r, q, &params).unwrap();
                let p = bs_put(spot, k, t, r, q, &params).unwrap();
                quotes.push(Quote::new(OptionKind::Call, k, t, c, c).unwrap());
                quotes.push(Quote::new(OptionKind::Put, k, t, p, p).unwrap());
            }
        }
        QuoteSet::new(spot, quotes).unwrap()
    }

    #[test]
    fn mid_is_midpoint_and_invalid_rows_rejected() {
        let q = Quote::new(OptionKind::Call, 2800.0, 1.0, 120.0, 122.0).unwrap();
        assert_eq!(q.mid, 121.0);
        assert!(Quote::new(OptionKind::Call, 2800.0, 1.0, 5.0, 3.0).is_err());
        assert!(Quote::new(OptionKind::Put, 0.0, 1.0, 1.0, 2.0).is_err());
        assert!(Quote::new(OptionKind::Put, 10.0, 0.0, 1.0, 2.0).is_err());
        assert_eq!(Quote::new(OptionKind::Put, 10.0, 1.0, 0.0, 0.1).unwrap().weight(), ZERO_BID_WEIGHT);
    }

    #[test]
    fn recovers_rate_and_dividend_from_black_scholes_quotes() {
        let qs = synthetic(2833.0, 0.02, 0.01, 0.2);
        let cfg = EstimatorConfig::default();
        let r = estimate_implied_rate(&qs, &cfg).unwrap().rate.unwrap();
        assert!((r - 0.02).abs() < 1e-3, "rate {r}");
        let q = estimate_implied_dividend(&qs, r, &cfg).unwrap().dividend.unwrap();
        assert!((q - 0.01).abs() < 1e-3, "dividend {q}");
    }

    #[test]
    fn unit_slope_gives_zero_rate_and_exact_parity_zero_dividend() {
        let spot = 100.0;
        let mut quotes = Vec::new();
        for &t in &[0.5, 1.0] {
            for &k in &[90.0, 100.0, 110.0] {
                // P − C = K − spot: slope exactly 1, q = 0 with r = 0
                let c = 20.0f64;
                let p = c + k - spot;
                quotes.push(Quote::new(OptionKind::Call, k, t, c, c).unwrap());
                quotes.push(Quote::new(OptionKind::Put, k, t, p, p).unwrap());
            }
        }
        let qs = QuoteSet::new(spot, quotes).unwrap();
        let cfg = EstimatorConfig::default();
        let est = estimate_implied_rate(&qs, &cfg).unwrap();
        assert!(est.rate.unwrap().abs() < 1e-14);
        assert_eq!(est.per_pair_values.len(), 6);
        let q = estimate_implied_dividend(&qs, 0.0, &cfg).unwrap().dividend.unwrap();
        assert!(q.abs() < 1e-14);
    }

    #[test]
    fn insufficient_data_errors() {
        let quotes = vec![
            Quote::new(OptionKind::Call, 100.0, 1.0, 5.0, 5.0).unwrap(),
            Quote::new(OptionKind::Put, 100.0, 1.0, 4.0, 4.0).unwrap(),
            Quote::new(OptionKind::Call, 110.0, 1.0, 2.0, 2.0).unwrap(),
            // zero-bid put: excluded from parity pairs
            Quote::new(OptionKind::Put, 110.0, 1.0, 0.0, 9.0).unwrap(),
        ];
        let qs = QuoteSet::new(100.0, quotes).unwrap();
        let cfg = EstimatorConfig::default();
        assert!(matches!(estimate_implied_rate(&qs, &cfg), Err(Error::InsufficientData(_))));
        // arg of the log negative for every pair
        let quotes = vec![
            Quote::new(OptionKind::Call, 100.0, 1.0, 1.0, 1.0).unwrap(),
            Quote::new(OptionKind::Put, 100.0, 1.0, 300.0, 300.0).unwrap(),
            Quote::new(OptionKind::Call, 110.0, 1.0, 1.0, 1.0).unwrap(),
            Quote::new(OptionKind::Put, 110.0, 1.0, 300.0, 300.0).unwrap(),
        ];
        let qs = QuoteSet::new(100.0, quotes).unwrap();
        assert!(matches!(
            estimate_implied_dividend(&qs, 0.0, &cfg),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn short_maturities_excluded_and_trim_option() {
        let mut qs = synthetic(100.0, 0.03, 0.0, 0.25);
        let extra = Quote::new(OptionKind::Call, 100.0, 0.01, 1.0, 1.0).unwrap();
        qs.quotes.push(extra);
        qs.quotes.push(Quote::new(OptionKind::Put, 100.0, 0.01, 9.0, 9.0).unwrap());
        qs.quotes.push(Quote::new(OptionKind::Call, 101.0, 0.01, 1.0, 1.0).unwrap());
        qs.quotes.push(Quote::new(OptionKind::Put, 101.0, 0.01, 1.0, 1.0).unwrap());
        let qs = QuoteSet::new(qs.spot, qs.quotes).unwrap();
        let est = estimate_implied_rate(&qs, &EstimatorConfig::default()).unwrap();
        assert!(est.per_pair_values.iter().all(|p| p.maturity >= 0.02));
        let trimmed = estimate_implied_rate(
            &qs,
            &EstimatorConfig {
                trim_quantile: Some(0.1),
                ..Default::default()
            },
        )
        .unwrap();
        assert!((trimmed.rate.unwrap() - 0.03).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn estimators_are_permutation_invariant(seed in 0u64..1000) {
            let qs = synthetic(2833.0, 0.0265, 0.0185, 0.18);
            let mut shuffled = qs.quotes.clone();
            // deterministic Fisher–Yates driven by a tiny LCG
            let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            for i in (1..shuffled.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (s >> 33) as usize % (i + 1);
                shuffled.swap(i, j);
            }
            let qs2 = QuoteSet::new(qs.spot, shuffled).unwrap();
            let cfg = EstimatorConfig::default();
            let a = estimate_implied_rate(&qs, &cfg).unwrap();
            let b = estimate_implied_rate(&qs2, &cfg).unwrap();
            prop_assert_eq!(a.rate.unwrap().to_bits(), b.rate.unwrap().to_bits());
            let qa = estimate_implied_dividend(&qs, 0.0265, &cfg).unwrap();
            let qb = estimate_implied_dividend(&qs2, 0.0265, &cfg).unwrap();
            prop_assert_eq!(qa.dividend.unwrap().to_bits(), qb.dividend.unwrap().to_bits());
        }
    }
}
