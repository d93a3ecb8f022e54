use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;
use varbound::config::{ModelChoice, RateMode, Settings};
use varbound::pipeline::{exit_code, run_pipeline, Stage};
use varbound::synth::{self, SynthConfig};
use varbound_core::market_data::format_quotes;
use varbound_core::models::{BsParams, ModelParams};
use varbound_core::Error;

/// Robust lower and upper bounds for variance options from option quotes.
///
/// Each pipeline subcommand runs every stage up to and including its own and
/// writes the artifacts of those stages.
#[derive(Parser, Debug)]
#[command(name = "varbound", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and clean the quote file.
    Ingest(RunArgs),
    /// Estimate the interest rate and dividend yield.
    Rates(RunArgs),
    /// Fit the smoothing model.
    Calibrate(RunArgs),
    /// Build call curves and potentials on the solver grid.
    Potentials(RunArgs),
    /// Solve the Root and Rost obstacle problems.
    Solve(RunArgs),
    /// Price variance calls from the barriers.
    Price(RunArgs),
    /// Run the verification gates.
    Verify(RunArgs),
    /// Full pipeline.
    Run(RunArgs),
    /// Write a synthetic quote book priced by a model.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML configuration; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Quote file (`kind,strike,maturity_years,bid,ask`).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<ModelChoice>,
    #[arg(long)]
    spot: Option<f64>,
    /// `estimate` or a fixed continuously compounded rate.
    #[arg(long)]
    rate: Option<RateMode>,
    /// `estimate` or a fixed dividend yield.
    #[arg(long)]
    dividend: Option<RateMode>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    mc_paths: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
}

impl RunArgs {
    fn settings(&self) -> Result<Settings, Error> {
        let cli = Settings {
            input: self.input.clone(),
            spot: self.spot,
            model: self.model,
            rate: self.rate,
            dividend: self.dividend,
            epsilon: self.epsilon,
            nx: self.nx,
            tmax: self.tmax,
            seed: self.seed,
            out: self.out.clone(),
            mc_paths: self.mc_paths,
            threads: self.threads,
            ..Settings::default()
        };
        let file = match &self.config {
            Some(p) => Settings::from_file(p)?,
            None => Settings::default(),
        };
        Ok(cli.merge(file))
    }
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "bs")]
    model: ModelChoice,
    /// Black-Scholes volatility.
    #[arg(long, default_value_t = synth::PAPER_BS_VOL)]
    vol: f64,
    /// Price tick; 0 quotes exact model prices.
    #[arg(long, default_value_t = 0.05)]
    tick: f64,
    #[arg(long)]
    out: PathBuf,
}

fn run(stage: Stage, args: &RunArgs) -> u8 {
    let cfg = match args.settings().and_then(Settings::resolve) {
        Ok(c) => c,
        Err(e) => {
            error!("{e}");
            return exit_code(e.kind()) as u8;
        }
    };
    match run_pipeline(&cfg, stage) {
        Ok(outcome) => {
            println!("{} artifacts written to {}", outcome.manifest.artifacts.len(), cfg.output_dir.display());
            0
        }
        Err(e) => {
            error!("{e}");
            e.exit_code() as u8
        }
    }
}

fn synth_cmd(args: &SynthArgs) -> u8 {
    let model = match args.model {
        ModelChoice::Bs => ModelParams::Bs(BsParams { vol: args.vol }),
        ModelChoice::Heston => ModelParams::Heston(synth::paper_heston()),
    };
    let mut cfg = SynthConfig::paper_like(model);
    cfg.tick = args.tick;
    let written = synth::generate(&cfg).map(|qs| format_quotes(&qs)).and_then(|text| {
        std::fs::write(&args.out, text).map_err(|e| Error::Config(format!("cannot write {}: {e}", args.out.display())))
    });
    match written {
        Ok(()) => 0,
        Err(e) => {
            error!("{e}");
            exit_code(e.kind()) as u8
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let code = match &cli.command {
        Command::Ingest(a) => run(Stage::Ingest, a),
        Command::Rates(a) => run(Stage::Rates, a),
        Command::Calibrate(a) => run(Stage::Calibrate, a),
        Command::Potentials(a) => run(Stage::Potentials, a),
        Command::Solve(a) => run(Stage::Solve, a),
        Command::Price(a) => run(Stage::Price, a),
        Command::Verify(a) | Command::Run(a) => run(Stage::Verify, a),
        Command::Synth(a) => synth_cmd(a),
    };
    ExitCode::from(code)
}
