//! Run configuration: a TOML file layered under command-line flags.
//!
//! Every setting is optional in both layers; [`Settings::merge`] applies the
//! command line over the file and [`Settings::resolve`] fills the remaining
//! gaps with defaults and validates the result.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use varbound_core::barrier::TimeEstimate;
use varbound_core::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelChoice {
    Bs,
    Heston,
}

/// A rate or yield that is either estimated from the quotes or fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateMode {
    Estimate,
    Fixed(f64),
}

impl std::str::FromStr for RateMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("estimate") {
            return Ok(RateMode::Estimate);
        }
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(RateMode::Fixed)
            .ok_or_else(|| format!("expected `estimate` or a number, got `{s}`"))
    }
}

/// TOML accepts `rate = "estimate"` as well as `rate = 0.0265`.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawRate {
    Number(f64),
    Text(String),
}

fn de_rate<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Option<RateMode>, D::Error> {
    match Option::<RawRate>::deserialize(d)? {
        None => Ok(None),
        Some(RawRate::Number(v)) => Ok(Some(RateMode::Fixed(v))),
        Some(RawRate::Text(s)) => s.parse().map(Some).map_err(serde::de::Error::custom),
    }
}

/// One configuration layer. Field names double as TOML keys.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub input: Option<PathBuf>,
    pub spot: Option<f64>,
    pub model: Option<ModelChoice>,
    #[serde(default, deserialize_with = "de_rate")]
    pub rate: Option<RateMode>,
    #[serde(default, deserialize_with = "de_rate")]
    pub dividend: Option<RateMode>,
    /// Keep only these maturities (years, matched to 1e−9).
    pub maturities: Option<Vec<f64>>,
    pub nx: Option<usize>,
    /// Log-price half-width; derived from the surface when absent.
    pub half_width: Option<f64>,
    pub tmax: Option<f64>,
    pub stability_factor: Option<f64>,
    pub epsilon: Option<f64>,
    pub contact_tol: Option<f64>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub mc_paths: Option<usize>,
    pub barrier_estimate: Option<TimeEstimate>,
    pub bound_strikes: Option<usize>,
    /// Solve the multi-marginal problems as well as the single ones.
    pub multi: Option<bool>,
    /// Widen the grid until the last marginal has little mass at the ends.
    pub widen_tails: Option<bool>,
    pub threads: Option<usize>,
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("config {}: {e}", path.display())))
    }

    /// `self` wins wherever it is set.
    pub fn merge(self, under: Settings) -> Settings {
        Settings {
            input: self.input.or(under.input),
            spot: self.spot.or(under.spot),
            model: self.model.or(under.model),
            rate: self.rate.or(under.rate),
            dividend: self.dividend.or(under.dividend),
            maturities: self.maturities.or(under.maturities),
            nx: self.nx.or(under.nx),
            half_width: self.half_width.or(under.half_width),
            tmax: self.tmax.or(under.tmax),
            stability_factor: self.stability_factor.or(under.stability_factor),
            epsilon: self.epsilon.or(under.epsilon),
            contact_tol: self.contact_tol.or(under.contact_tol),
            out: self.out.or(under.out),
            seed: self.seed.or(under.seed),
            mc_paths: self.mc_paths.or(under.mc_paths),
            barrier_estimate: self.barrier_estimate.or(under.barrier_estimate),
            bound_strikes: self.bound_strikes.or(under.bound_strikes),
            multi: self.multi.or(under.multi),
            widen_tails: self.widen_tails.or(under.widen_tails),
            threads: self.threads.or(under.threads),
        }
    }

    pub fn resolve(self) -> Result<PipelineConfig, Error> {
        let model = self.model.unwrap_or(ModelChoice::Bs);
        let cfg = PipelineConfig {
            input_path: self.input.ok_or_else(|| Error::Config("no input file given".into()))?,
            spot: self.spot.ok_or_else(|| Error::Config("no spot price given".into()))?,
            model,
            rate_mode: self.rate.unwrap_or(RateMode::Estimate),
            dividend_mode: self.dividend.unwrap_or(RateMode::Estimate),
            maturities_filter: self.maturities,
            nx: self.nx.unwrap_or(401),
            half_width: self.half_width,
            t_max: self.tmax,
            stability_factor: self.stability_factor.unwrap_or(0.9),
            epsilon: self.epsilon.unwrap_or(match model {
                ModelChoice::Bs => 0.01,
                ModelChoice::Heston => 0.0002,
            }),
            contact_tol: self.contact_tol.unwrap_or(1e-7),
            output_dir: self.out.unwrap_or_else(|| PathBuf::from("out")),
            seed: self.seed.unwrap_or(0),
            mc_paths: self.mc_paths.unwrap_or(100_000),
            barrier_estimate: self.barrier_estimate.unwrap_or_default(),
            bound_strikes: self.bound_strikes.unwrap_or(200),
            multi: self.multi.unwrap_or(true),
            widen_tails: self.widen_tails.unwrap_or(true),
            threads: self.threads,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Fully resolved run settings, recorded verbatim in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub input_path: PathBuf,
    pub spot: f64,
    pub model: ModelChoice,
    pub rate_mode: RateMode,
    pub dividend_mode: RateMode,
    pub maturities_filter: Option<Vec<f64>>,
    pub nx: usize,
    pub half_width: Option<f64>,
    pub t_max: Option<f64>,
    pub stability_factor: f64,
    pub epsilon: f64,
    pub contact_tol: f64,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub mc_paths: usize,
    pub barrier_estimate: TimeEstimate,
    pub bound_strikes: usize,
    pub multi: bool,
    pub widen_tails: bool,
    /// Worker threads for independent solves; not part of the results.
    #[serde(skip)]
    pub threads: Option<usize>,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.spot > 0.0) || !self.spot.is_finite() {
            return bad(format!("spot must be positive, got {}", self.spot));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.nx < 200 {
            return bad(format!("nx must be at least 200, got {}", self.nx));
        }
        if let Some(t) = self.t_max {
            if !(t > 0.0) {
                return bad(format!("tmax must be positive, got {t}"));
            }
        }
        if let Some(l) = self.half_width {
            if !(l > 0.0) {
                return bad(format!("half_width must be positive, got {l}"));
            }
        }
        if !(self.contact_tol > 0.0) {
            return bad(format!("contact_tol must be positive, got {}", self.contact_tol));
        }
        if self.mc_paths == 0 || self.bound_strikes < 2 {
            return bad("mc_paths must be positive and bound_strikes at least 2".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        Ok(())
    }
}
