//! The batch pipeline: ingest, rates, calibrate, potentials, solve, price,
//! verify. Each stage writes its artifacts before the next one starts; a
//! failing stage renames everything written so far to `*.partial` and leaves
//! a `manifest.json.partial` naming the stage.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{info, warn};
use serde::Serialize;
use varbound_core::barrier::{
    build_grid, confident_mask, extract_barrier_with, solve_sequence, Barrier, BarrierKind, Grid, GridConfig, SolverConfig,
};
use varbound_core::market_data::{estimate_implied_dividend, estimate_implied_rate, EstimatorConfig, ParsedQuotes, RateEstimate};
use varbound_core::mc_verify::{calibrate_threshold, compare_barrier_sets, potential_distance, simulate_root_embedding};
use varbound_core::models::{calibrate_bs, calibrate_heston, tail_correct, CallCurve, HestonCalibrationConfig, ModelParams, StartOutcome};
use varbound_core::potentials::{
    check_convex_order, covering_strikes, forward_call_curve, initial_potential, potential_from_calls, OrderingReport, PotentialCurve,
};
use varbound_core::pricing::{default_strikes, expected_payoff, measure_from_potential, variance_option_bounds, BoundsCurve, DiscreteMeasure, Payoff};
use varbound_core::{Error, ErrorKind};

use crate::config::{ModelChoice, PipelineConfig, RateMode};
use crate::io::{self, ArtifactRecord, ArtifactWriter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Rates,
    Calibrate,
    Potentials,
    Solve,
    Price,
    Verify,
}

impl Stage {
    pub const ALL: [Stage; 7] = [Stage::Ingest, Stage::Rates, Stage::Calibrate, Stage::Potentials, Stage::Solve, Stage::Price, Stage::Verify];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Rates => "rates",
            Stage::Calibrate => "calibrate",
            Stage::Potentials => "potentials",
            Stage::Solve => "solve",
            Stage::Price => "price",
            Stage::Verify => "verify",
        }
    }
}

/// Process exit status for an error class.
pub fn exit_code(kind: ErrorKind) -> i32 {
    match kind {
        ErrorKind::Config => 2,
        ErrorKind::Data => 3,
        ErrorKind::Numeric => 4,
        ErrorKind::Verification => 5,
    }
}

/// Grid widening stops once both end nodes of the last marginal carry at
/// most this much lumped mass.
pub const END_LUMP: f64 = 1e-4;
pub const WIDEN_FACTOR: f64 = 1.25;
pub const MAX_WIDENINGS: usize = 8;

/// Monte-Carlo steps resolve at least this many steps of the mean barrier time.
pub const MC_STEPS_PER_MEAN: f64 = 4000.0;
pub const THRESHOLD_SEEDS: usize = 50;

/// Relative tolerance of the variance-swap identity and of the `K = 0`
/// agreement between the two bounds.
pub const IDENTITY_TOL: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
    pub quotes: usize,
    pub dropped_rows: usize,
    pub maturities: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateRecord {
    pub mode: &'static str,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationRecord {
    pub params: ModelParams,
    pub rmse: f64,
    /// Heston multi-start outcomes; empty for Black-Scholes.
    pub starts: Vec<StartOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridRecord {
    pub reference_vol: f64,
    pub nx: usize,
    pub half_width: f64,
    pub dx: f64,
    pub dt: f64,
    pub nt: usize,
    pub t_max: f64,
    pub widenings: usize,
    pub end_lumps: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureRecord {
    pub stage: Stage,
    pub exit_code: i32,
    pub message: String,
}

/// Run manifest: everything needed to recompute the artifacts, and their digests.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub config: PipelineConfig,
    pub solver: SolverConfig,
    pub mc_rule: String,
    pub input: Option<InputRecord>,
    pub rate: Option<RateRecord>,
    pub dividend: Option<RateRecord>,
    pub calibration: Option<CalibrationRecord>,
    pub grid: Option<GridRecord>,
    pub ordering: Option<OrderingReport>,
    pub completed_stages: Vec<Stage>,
    pub verification_passed: Option<bool>,
    pub failure: Option<FailureRecord>,
    pub artifacts: Vec<ArtifactRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub mode: &'static str,
    pub kind: BarrierKind,
    pub barrier_integral: f64,
    pub log_contract: f64,
    pub rel_err: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureCheck {
    pub mode: &'static str,
    /// Smallest `upper − lower`; may dip to `−IDENTITY_TOL·log_contract`.
    pub min_gap: f64,
    pub gap_tol: f64,
    pub monotone: bool,
    pub convex: bool,
    pub zero_strike_rel_diff: f64,
    /// Black-Scholes only: `max |lower − (σ²T − K)^+|` against `2·dx`.
    pub bs_lower_err: Option<f64>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BracketCheck {
    /// Largest `lower_single − lower_multi` and `upper_multi − upper_single`.
    pub lower_excess: f64,
    pub upper_excess: f64,
    pub tol: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoincidenceCheck {
    pub kind: BarrierKind,
    pub max_diff: f64,
    pub tol: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McCheck {
    pub n_paths: usize,
    pub seed: u64,
    pub dt_mc: f64,
    pub horizon: f64,
    pub unstopped: usize,
    pub mean_stopping_time: f64,
    pub barrier_integral: f64,
    pub distance: f64,
    /// `4·sd_μ/√n`.
    pub formula_threshold: f64,
    /// 99th percentile of direct-sampling distances over `THRESHOLD_SEEDS` seeds.
    pub direct_p99: f64,
    pub threshold: f64,
    pub passed: bool,
    /// Wall time of the simulation and threshold calibration; kept out of
    /// the report so reruns stay byte-identical.
    #[serde(skip)]
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaturityReport {
    pub maturity: f64,
    pub identities: Vec<IdentityCheck>,
    pub structure: Vec<StructureCheck>,
    pub bracket: Option<BracketCheck>,
    pub coincidence: Vec<CoincidenceCheck>,
    pub mc: McCheck,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub maturities: Vec<MaturityReport>,
    pub passed: bool,
}

/// Root and Rost barriers of one maturity.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierPair {
    pub root: Barrier,
    pub rost: Barrier,
}

/// Everything the stages computed, kept in memory for callers and tests.
#[derive(Debug, Clone, Default)]
pub struct RunState {
    pub quotes: Option<ParsedQuotes>,
    pub rate: Option<f64>,
    pub dividend: Option<f64>,
    pub model: Option<ModelParams>,
    pub grid: Option<Grid>,
    pub initial: Option<PotentialCurve>,
    pub curves: Vec<CallCurve>,
    pub potentials: Vec<PotentialCurve>,
    pub measures: Vec<DiscreteMeasure>,
    pub masks: Vec<Vec<bool>>,
    pub single: Vec<BarrierPair>,
    pub multi: Vec<BarrierPair>,
    pub bounds_single: Vec<BoundsCurve>,
    pub bounds_multi: Vec<BoundsCurve>,
    pub verification: Option<VerificationReport>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub state: RunState,
    pub manifest: Manifest,
}

#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub error: Error,
    pub manifest: Manifest,
    pub state: RunState,
}

impl StageError {
    pub fn exit_code(&self) -> i32 {
        exit_code(self.error.kind())
    }
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage `{}` failed: {}", self.stage.name(), self.error)
    }
}

impl std::error::Error for StageError {}

struct Pipeline<'a> {
    cfg: &'a PipelineConfig,
    solver: SolverConfig,
    threads: usize,
    writer: ArtifactWriter,
    manifest: Manifest,
    state: RunState,
}

/// Runs every stage up to and including `through`.
///
/// Verification gates that fail are reported as a `verify` stage error after
/// `verification.json` has been written.
pub fn run_pipeline(cfg: &PipelineConfig, through: Stage) -> Result<RunOutcome, Box<StageError>> {
    let solver = SolverConfig { contact_tol: cfg.contact_tol, ..SolverConfig::default() };
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: cfg.clone(),
        solver,
        mc_rule: format!("dt_mc = min(dt/4, barrier_integral/{MC_STEPS_PER_MEAN}), horizon = 2*t_max"),
        input: None,
        rate: None,
        dividend: None,
        calibration: None,
        grid: None,
        ordering: None,
        completed_stages: Vec::new(),
        verification_passed: None,
        failure: None,
        artifacts: Vec::new(),
    };
    let writer = match ArtifactWriter::new(&cfg.output_dir) {
        Ok(w) => w,
        Err(error) => return Err(Box::new(StageError { stage: Stage::Ingest, error, manifest, state: RunState::default() })),
    };
    let threads = cfg.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let mut p = Pipeline { cfg, solver, threads, writer, manifest, state: RunState::default() };
    for stage in Stage::ALL.into_iter().filter(|&s| s <= through) {
        info!("stage {}", stage.name());
        let result = match stage {
            Stage::Ingest => p.ingest(),
            Stage::Rates => p.rates(),
            Stage::Calibrate => p.calibrate(),
            Stage::Potentials => p.potentials(),
            Stage::Solve => p.solve(),
            Stage::Price => p.price(),
            Stage::Verify => p.verify(),
        };
        if let Err(error) = result {
            return Err(Box::new(p.fail(stage, error)));
        }
        p.manifest.completed_stages.push(stage);
    }
    p.manifest.artifacts = p.writer.records().to_vec();
    if let Err(error) = p.writer.write_json("manifest.json", &p.manifest) {
        return Err(Box::new(p.fail(through, error)));
    }
    Ok(RunOutcome { state: p.state, manifest: p.manifest })
}

/// Maturities match a filter entry within this distance.
const MATURITY_MATCH: f64 = 1e-9;

impl Pipeline<'_> {
    fn fail(mut self, stage: Stage, error: Error) -> StageError {
        warn!("stage {} failed: {error}", stage.name());
        self.writer.mark_partial();
        self.manifest.artifacts = self.writer.records().to_vec();
        self.manifest.failure = Some(FailureRecord { stage, exit_code: exit_code(error.kind()), message: error.to_string() });
        let dir = self.writer.dir().to_path_buf();
        // an older complete manifest would misdescribe the directory
        let _ = std::fs::remove_file(dir.join("manifest.json"));
        if let Ok(mut text) = serde_json::to_string_pretty(&self.manifest) {
            text.push('\n');
            if let Err(e) = std::fs::write(dir.join("manifest.json.partial"), text) {
                warn!("cannot write partial manifest: {e}");
            }
        }
        StageError { stage, error, manifest: self.manifest, state: self.state }
    }

    fn quotes(&self) -> &ParsedQuotes {
        self.state.quotes.as_ref().expect("ingest runs first")
    }

    fn rates_pair(&self) -> (f64, f64) {
        (self.state.rate.expect("rates run first"), self.state.dividend.expect("rates run first"))
    }

    fn ingest(&mut self) -> Result<(), Error> {
        let (mut parsed, sha) = io::read_quotes(&self.cfg.input_path, self.cfg.spot)?;
        if let Some(keep) = &self.cfg.maturities_filter {
            for &t in keep {
                if !parsed.quote_set.maturities.iter().any(|&m| (m - t).abs() <= MATURITY_MATCH) {
                    return Err(Error::InsufficientData(format!("maturity {t} is not quoted")));
                }
            }
            parsed.quote_set = parsed.quote_set.retain_maturities(|m| keep.iter().any(|&t| (m - t).abs() <= MATURITY_MATCH))?;
        }
        if parsed.dropped > 0 {
            warn!("dropped {} unusable quote rows", parsed.dropped);
        }
        info!("{} quotes over {} maturities", parsed.quote_set.quotes.len(), parsed.quote_set.maturities.len());
        self.manifest.input = Some(InputRecord {
            path: self.cfg.input_path.display().to_string(),
            sha256: sha,
            quotes: parsed.quote_set.quotes.len(),
            dropped_rows: parsed.dropped,
            maturities: parsed.quote_set.maturities.clone(),
        });
        self.writer.write_json("quotes.json", &parsed.quote_set)?;
        self.state.quotes = Some(parsed);
        Ok(())
    }

    fn rates(&mut self) -> Result<(), Error> {
        let est = EstimatorConfig::default();
        let qs = &self.quotes().quote_set;
        let (rate, rate_doc) = match self.cfg.rate_mode {
            RateMode::Fixed(r) => (r, None),
            RateMode::Estimate => {
                let e = estimate_implied_rate(qs, &est)?;
                (e.rate.expect("rate estimator sets the rate"), Some(e))
            }
        };
        let (dividend, div_doc) = match self.cfg.dividend_mode {
            RateMode::Fixed(q) => (q, None),
            RateMode::Estimate => {
                let e = estimate_implied_dividend(qs, rate, &est)?;
                (e.dividend.expect("dividend estimator sets the dividend"), Some(e))
            }
        };
        info!("rate {rate}, dividend {dividend}");
        let record = |mode: RateMode, value| RateRecord {
            mode: if matches!(mode, RateMode::Estimate) { "estimate" } else { "fixed" },
            value,
        };
        self.manifest.rate = Some(record(self.cfg.rate_mode, rate));
        self.manifest.dividend = Some(record(self.cfg.dividend_mode, dividend));
        let docs: [(&str, Option<RateEstimate>); 2] = [("rate_estimate.json", rate_doc), ("dividend_estimate.json", div_doc)];
        for (name, doc) in docs {
            if let Some(d) = doc {
                self.writer.write_json(name, &d)?;
            }
        }
        self.state.rate = Some(rate);
        self.state.dividend = Some(dividend);
        Ok(())
    }

    fn calibrate(&mut self) -> Result<(), Error> {
        let (r, q) = self.rates_pair();
        let qs = &self.quotes().quote_set;
        let record = match self.cfg.model {
            ModelChoice::Bs => {
                let fit = calibrate_bs(qs, r, q)?;
                CalibrationRecord { params: ModelParams::Bs(fit.params), rmse: fit.rmse, starts: Vec::new() }
            }
            ModelChoice::Heston => {
                let fit = calibrate_heston(qs, r, q, &HestonCalibrationConfig::default())?;
                CalibrationRecord { params: ModelParams::Heston(fit.params), rmse: fit.rmse, starts: fit.starts }
            }
        };
        info!("calibrated {:?}, rmse {}", record.params, record.rmse);
        self.writer.write_json("calibration.json", &record)?;
        self.state.model = Some(record.params);
        self.manifest.calibration = Some(record);
        Ok(())
    }

    fn potential_at(&self, grid: &Grid, t: f64) -> Result<(CallCurve, PotentialCurve), Error> {
        let (r, q) = self.rates_pair();
        let model = self.state.model.expect("calibrate runs first");
        let curve = tail_correct(&model.call_curve(grid.p0, covering_strikes(&grid.x, t, r, q), t, r, q)?)?;
        let pot = potential_from_calls(&forward_call_curve(&curve, r, q)?, &grid.x)?;
        Ok((curve, pot))
    }

    /// Grid sized for the surface; see [`END_LUMP`] for the widening rule.
    fn build_grid(&self) -> Result<(Grid, GridRecord), Error> {
        let model = self.state.model.expect("calibrate runs first");
        let maturities = &self.quotes().quote_set.maturities;
        let t_last = *maturities.last().ok_or(Error::EmptyInput)?;
        let sigma = reference_vol(&model, t_last);
        let mut base = GridConfig::for_surface(sigma, t_last, self.cfg.nx);
        base.stability_factor = self.cfg.stability_factor;
        if let Some(t) = self.cfg.t_max {
            base.t_max = t;
        }
        let fixed = self.cfg.half_width.is_some() || !self.cfg.widen_tails;
        if let Some(l) = self.cfg.half_width {
            base.half_width = l;
        }
        let l0 = base.half_width;
        let mut widenings = 0;
        loop {
            let scale = WIDEN_FACTOR.powi(widenings as i32);
            let half = (self.cfg.nx - 1) as f64 / 2.0;
            let nx = 2 * (half * scale - 1e-9).ceil() as usize + 1;
            let gc = GridConfig { nx, half_width: l0 * scale, ..base };
            let grid = build_grid(self.cfg.spot, &gc)?;
            let (_, pot) = self.potential_at(&grid, t_last)?;
            let m = measure_from_potential(&pot, grid.p0)?;
            let lumps = [m.masses[0], m.masses[grid.nx - 1]];
            let wide_enough = lumps[0] <= END_LUMP && lumps[1] <= END_LUMP;
            if fixed || wide_enough || widenings == MAX_WIDENINGS {
                if !wide_enough {
                    warn!("end nodes of the last marginal hold {lumps:?}");
                }
                let rec = GridRecord {
                    reference_vol: sigma,
                    nx: grid.nx,
                    half_width: gc.half_width,
                    dx: grid.dx,
                    dt: grid.dt,
                    nt: grid.nt,
                    t_max: grid.t_max,
                    widenings,
                    end_lumps: lumps,
                };
                return Ok((grid, rec));
            }
            widenings += 1;
        }
    }

    fn potentials(&mut self) -> Result<(), Error> {
        let (grid, rec) = self.build_grid()?;
        info!("grid nx {} dx {} dt {} nt {}", grid.nx, grid.dx, grid.dt, grid.nt);
        self.manifest.grid = Some(rec);
        let init = initial_potential(grid.p0, &grid.x);
        let maturities = self.quotes().quote_set.maturities.clone();
        let (mut curves, mut pots) = (Vec::new(), Vec::new());
        for &t in &maturities {
            let (curve, pot) = self.potential_at(&grid, t)?;
            let tag = io::maturity_tag(t);
            self.writer.write(&format!("curve_{tag}.csv"), io::curve_csv(&curve).as_bytes())?;
            self.writer.write(&format!("potential_{tag}.csv"), io::potential_csv(&pot).as_bytes())?;
            curves.push(curve);
            pots.push(pot);
        }
        let report = check_convex_order(grid.p0, Some(&init), &pots)?;
        let ordered = report.ordered;
        self.manifest.ordering = Some(report);
        if !ordered {
            return Err(Error::ConvexOrder("calibrated potentials are not in convex order; see the manifest ordering report".into()));
        }
        self.state.measures = pots.iter().map(|p| measure_from_potential(p, grid.p0)).collect::<Result<_, _>>()?;
        self.state.masks = pots.iter().map(|p| confident_mask(p, &init, grid.p0, self.cfg.epsilon)).collect();
        self.state.curves = curves;
        self.state.potentials = pots;
        self.state.initial = Some(init);
        self.state.grid = Some(grid);
        Ok(())
    }

    fn solve(&mut self) -> Result<(), Error> {
        let grid = self.state.grid.as_ref().expect("potentials run first");
        let init = self.state.initial.as_ref().expect("potentials run first");
        let pots = &self.state.potentials;
        let n = pots.len();
        // one job per single-marginal solve, then one per multi-marginal kind
        let kinds = [BarrierKind::Root, BarrierKind::Rost];
        let mut jobs: Vec<(BarrierKind, Option<usize>)> = Vec::new();
        for &kind in &kinds {
            jobs.extend((0..n).map(|k| (kind, Some(k))));
        }
        if self.cfg.multi {
            jobs.extend(kinds.iter().map(|&kind| (kind, None)));
        }
        let estimate = self.cfg.barrier_estimate;
        let masks = &self.state.masks;
        let solver = &self.solver;
        let results = run_jobs(jobs.len(), self.threads, |j| -> Result<Vec<Barrier>, Error> {
            let (kind, which) = jobs[j];
            let levels = match which {
                Some(k) => std::slice::from_ref(&pots[k]),
                None => pots.as_slice(),
            };
            let vfs = solve_sequence(kind, grid, init, levels, solver)?;
            let offset = which.unwrap_or(0);
            vfs.iter()
                .enumerate()
                .map(|(i, vf)| {
                    vf.check_invariants()?;
                    for w in &vf.warnings {
                        warn!("{} level {}: {w}", kind.name(), offset + i);
                    }
                    let k = offset + i;
                    let mut b = extract_barrier_with(vf, pots[k].maturity, masks[k].clone(), estimate)?;
                    b.maturity_index = k;
                    Ok(b)
                })
                .collect()
        });
        let mut single: Vec<Vec<Option<Barrier>>> = vec![vec![None; n]; 2];
        let mut multi: Vec<Vec<Barrier>> = Vec::new();
        for (&(kind, which), r) in jobs.iter().zip(results) {
            let bs = r?;
            let ki = usize::from(kind == BarrierKind::Rost);
            match which {
                Some(k) => single[ki][k] = bs.into_iter().next(),
                None => multi.push(bs),
            }
        }
        let pair = |root: Barrier, rost: Barrier| BarrierPair { root, rost };
        let [root_s, rost_s]: [Vec<Option<Barrier>>; 2] = single.try_into().expect("two kinds");
        self.state.single = root_s.into_iter().zip(rost_s).map(|(a, b)| pair(a.expect("solved"), b.expect("solved"))).collect();
        // empty when the multi-marginal solves were skipped
        let [root_m, rost_m] = <[Vec<Barrier>; 2]>::try_from(multi).unwrap_or_default();
        self.state.multi = root_m.into_iter().zip(rost_m).map(|(a, b)| pair(a, b)).collect();
        for (mode, set) in [("single", &self.state.single), ("multi", &self.state.multi)] {
            for bp in set {
                let tag = io::maturity_tag(bp.root.maturity);
                for b in [&bp.root, &bp.rost] {
                    let rel = format!("{mode}/barrier_{}_{tag}.csv", b.kind.name());
                    self.writer.write(&rel, io::barrier_csv(b).as_bytes())?;
                }
            }
        }
        Ok(())
    }

    fn price(&mut self) -> Result<(), Error> {
        let mut single = Vec::new();
        let mut multi = Vec::new();
        for (k, m) in self.state.measures.iter().enumerate() {
            let s = &self.state.single[k];
            let strikes = default_strikes(&s.rost, m, self.cfg.bound_strikes);
            single.push(variance_option_bounds(&s.root, &s.rost, m, &strikes, &Payoff::Call)?);
            if let Some(mm) = self.state.multi.get(k) {
                multi.push(variance_option_bounds(&mm.root, &mm.rost, m, &strikes, &Payoff::Call)?);
            }
        }
        for (mode, set) in [("single", &single), ("multi", &multi)] {
            for b in set {
                if b.dropped_nodes > 0 {
                    warn!("T={}: {} negligible-mass sentinel nodes dropped", b.maturity, b.dropped_nodes);
                }
                let rel = format!("{mode}/bounds_{}.csv", io::maturity_tag(b.maturity));
                self.writer.write(&rel, io::bounds_csv(b).as_bytes())?;
            }
        }
        self.state.bounds_single = single;
        self.state.bounds_multi = multi;
        Ok(())
    }

    fn verify(&mut self) -> Result<(), Error> {
        let grid = self.state.grid.as_ref().expect("potentials run first");
        let p0 = grid.p0;
        let coincide_tol = 2.0 * grid.dt.max(grid.dx);
        let bs_var = match self.state.model {
            Some(ModelParams::Bs(p)) => Some(p.vol * p.vol),
            _ => None,
        };
        let st = &self.state;
        let cfg = self.cfg;
        let mc = run_jobs(st.measures.len(), self.threads, |k| {
            mc_check(&st.single[k].root, &st.measures[k], &st.potentials[k], &st.masks[k], grid, cfg)
        });
        let mut reports = Vec::new();
        for (k, mc) in mc.into_iter().enumerate() {
            let mc = mc?;
            let m = &st.measures[k];
            let lc = m.log_contract(p0);
            let mut modes = vec![("single", &st.single[k], &st.bounds_single[k])];
            if let (Some(bp), Some(b)) = (st.multi.get(k), st.bounds_multi.get(k)) {
                modes.push(("multi", bp, b));
            }
            let mut identities = Vec::new();
            let mut structure = Vec::new();
            for &(mode, bp, bounds) in &modes {
                for b in [&bp.root, &bp.rost] {
                    let integral = expected_payoff(b, m, &Payoff::Swap, 0.0)?.0;
                    let rel_err = integral / lc - 1.0;
                    identities.push(IdentityCheck {
                        mode,
                        kind: b.kind,
                        barrier_integral: integral,
                        log_contract: lc,
                        rel_err,
                        passed: rel_err.abs() <= IDENTITY_TOL,
                    });
                }
                structure.push(structure_check(mode, bounds, lc, bs_var.map(|v| v * bounds.maturity), 2.0 * grid.dx));
            }
            let bracket = st.bounds_multi.get(k).map(|mb| bracket_check(&st.bounds_single[k], mb, 2.0 * grid.dx * m.masses.iter().sum::<f64>()));
            let mut coincidence = Vec::new();
            if let Some(mm) = st.multi.get(k) {
                for (a, b) in [(&st.single[k].root, &mm.root), (&st.single[k].rost, &mm.rost)] {
                    let d = compare_barrier_sets(a, b)?;
                    coincidence.push(CoincidenceCheck { kind: a.kind, max_diff: d, tol: coincide_tol, passed: d <= coincide_tol });
                }
            }
            let passed = mc.passed
                && identities.iter().all(|c| c.passed)
                && structure.iter().all(|c| c.passed)
                && bracket.as_ref().map_or(true, |c| c.passed)
                && coincidence.iter().all(|c| c.passed);
            if !passed {
                warn!("verification fails at T={}", m_maturity(st, k));
            }
            reports.push(MaturityReport { maturity: m_maturity(st, k), identities, structure, bracket, coincidence, mc, passed });
        }
        let failed: Vec<f64> = reports.iter().filter(|r| !r.passed).map(|r| r.maturity).collect();
        let report = VerificationReport { passed: failed.is_empty(), maturities: reports };
        self.writer.write_json("verification.json", &report)?;
        self.manifest.verification_passed = Some(report.passed);
        self.state.verification = Some(report);
        if !failed.is_empty() {
            return Err(Error::Verification(format!("gates fail at maturities {failed:?}; see verification.json")));
        }
        Ok(())
    }
}

fn m_maturity(st: &RunState, k: usize) -> f64 {
    st.potentials[k].maturity
}

/// Volatility whose square is the model's mean variance over `[0, t]`.
pub fn reference_vol(model: &ModelParams, t: f64) -> f64 {
    match model {
        ModelParams::Bs(p) => p.vol,
        ModelParams::Heston(p) => {
            let kt = p.kappa * t;
            let w = if kt > 1e-8 { (1.0 - (-kt).exp()) / kt } else { 1.0 };
            (p.vbar + (p.v0 - p.vbar) * w).max(0.0).sqrt()
        }
    }
}

fn mc_check(root: &Barrier, m: &DiscreteMeasure, pot: &PotentialCurve, mask: &[bool], grid: &Grid, cfg: &PipelineConfig) -> Result<McCheck, Error> {
    let start = std::time::Instant::now();
    let integral = expected_payoff(root, m, &Payoff::Swap, 0.0)?.0;
    // short maturities need steps well below the mean stopping time
    let dt_mc = (grid.dt / 4.0).min(integral / MC_STEPS_PER_MEAN);
    let horizon = 2.0 * grid.t_max;
    let sample = simulate_root_embedding(root, grid.p0, cfg.mc_paths, cfg.seed, dt_mc, horizon)?;
    let distance = potential_distance(&sample.stopped_values, pot, mask)?;
    let cal = calibrate_threshold(m, pot, mask, cfg.mc_paths, THRESHOLD_SEEDS)?;
    let threshold = cal.threshold.max(cal.p99);
    let mean = sample.stopping_times.iter().sum::<f64>() / sample.stopping_times.len().max(1) as f64;
    info!("T={}: MC distance {distance:.4} threshold {threshold:.4} (p99 {:.4})", root.maturity, cal.p99);
    Ok(McCheck {
        n_paths: cfg.mc_paths,
        seed: cfg.seed,
        dt_mc,
        horizon,
        unstopped: sample.unstopped,
        mean_stopping_time: mean,
        barrier_integral: integral,
        distance,
        formula_threshold: cal.threshold,
        direct_p99: cal.p99,
        threshold,
        passed: distance <= threshold,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// Convexity and monotonicity of the bound curves in strike, the ordering of
/// the two bounds, and their agreement at `K = 0`.
///
/// In exact arithmetic `upper ≥ lower` everywhere with equality at `K = 0`.
/// Both sides carry their own discretisation error there, bounded by the
/// identity tolerance, so the ordering is checked to that same tolerance.
pub fn structure_check(mode: &'static str, b: &BoundsCurve, log_contract: f64, bs_total_var: Option<f64>, bs_tol: f64) -> StructureCheck {
    let n = b.strikes.len();
    let scale = b.lower.first().copied().unwrap_or(0.0).abs().max(b.upper.first().copied().unwrap_or(0.0).abs());
    let round = 1e-9 * scale;
    let gap_tol = IDENTITY_TOL * log_contract;
    let min_gap = (0..n).map(|j| b.upper[j] - b.lower[j]).fold(f64::INFINITY, f64::min);
    let monotone = [&b.lower, &b.upper].iter().all(|v| v.windows(2).all(|w| w[1] <= w[0] + round));
    let convex = [&b.lower, &b.upper].iter().all(|v| {
        (1..n.saturating_sub(1)).all(|j| {
            let (h0, h1) = (b.strikes[j] - b.strikes[j - 1], b.strikes[j + 1] - b.strikes[j]);
            let s0 = (v[j] - v[j - 1]) / h0;
            let s1 = (v[j + 1] - v[j]) / h1;
            s1 >= s0 - round / h0.min(h1)
        })
    });
    let zero_strike_rel_diff = if n > 0 && b.strikes[0] == 0.0 { (b.upper[0] - b.lower[0]).abs() / log_contract } else { f64::NAN };
    let bs_lower_err =
        bs_total_var.map(|c| (0..n).map(|j| (b.lower[j] - (c - b.strikes[j]).max(0.0)).abs()).fold(0.0, f64::max));
    let passed = min_gap >= -gap_tol
        && monotone
        && convex
        && zero_strike_rel_diff <= IDENTITY_TOL
        && bs_lower_err.map_or(true, |e| e <= bs_tol);
    StructureCheck { mode, min_gap, gap_tol, monotone, convex, zero_strike_rel_diff, bs_lower_err, passed }
}

/// Multi-marginal bounds lie inside the single-marginal ones up to `tol`.
pub fn bracket_check(single: &BoundsCurve, multi: &BoundsCurve, tol: f64) -> BracketCheck {
    let lower_excess = single.lower.iter().zip(&multi.lower).map(|(s, m)| s - m).fold(f64::NEG_INFINITY, f64::max);
    let upper_excess = multi.upper.iter().zip(&single.upper).map(|(m, s)| m - s).fold(f64::NEG_INFINITY, f64::max);
    BracketCheck { lower_excess, upper_excess, tol, passed: lower_excess <= tol && upper_excess <= tol }
}

/// Runs `f(0..n)` on up to `threads` workers; results come back in index order.
pub fn run_jobs<T: Send, F: Fn(usize) -> T + Sync>(n: usize, threads: usize, f: F) -> Vec<T> {
    let workers = threads.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let j = next.fetch_add(1, Ordering::Relaxed);
                if j >= n {
                    break;
                }
                let r = f(j);
                slots.lock().expect("no worker panics while holding the lock")[j] = Some(r);
            });
        }
    });
    slots.into_inner().expect("workers finished").into_iter().map(|r| r.expect("every job ran")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jobs_return_in_index_order() {
        let out = run_jobs(37, 4, |j| j * j);
        assert_eq!(out, (0..37).map(|j| j * j).collect::<Vec<_>>());
        assert!(run_jobs(0, 3, |j| j).is_empty());
    }

    #[test]
    fn exit_codes_follow_error_classes() {
        assert_eq!(exit_code(Error::Config("x".into()).kind()), 2);
        assert_eq!(exit_code(Error::ConvexOrder("x".into()).kind()), 3);
        assert_eq!(exit_code(Error::Numeric("x".into()).kind()), 4);
        assert_eq!(exit_code(Error::Verification("x".into()).kind()), 5);
    }

    #[test]
    fn structure_check_accepts_exact_bs_bounds_and_flags_disorder() {
        let strikes: Vec<f64> = (0..11).map(|j| j as f64 * 0.001).collect();
        let c = 0.005;
        let lower: Vec<f64> = strikes.iter().map(|k| (c - k).max(0.0)).collect();
        let b = BoundsCurve { maturity: 1.0, strikes, lower: lower.clone(), upper: lower.clone(), dropped_nodes: 0 };
        let s = structure_check("single", &b, c, Some(c), 1e-9);
        assert!(s.passed && s.convex && s.bs_lower_err.unwrap() < 1e-15);
        let raised = BoundsCurve { lower: lower.iter().map(|v| v + 0.001).collect(), ..b };
        let s = structure_check("single", &raised, c, None, 0.0);
        assert!(!s.passed && s.min_gap < -s.gap_tol);
    }

    #[test]
    fn reference_vol_is_the_mean_variance() {
        let hp = crate::synth::paper_heston();
        let v = reference_vol(&ModelParams::Heston(hp), 1e-12);
        assert!((v * v - hp.v0).abs() < 1e-9);
        let long = reference_vol(&ModelParams::Heston(hp), 1e6);
        assert!((long * long - hp.vbar).abs() < 1e-6);
    }
}
