use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use hypolearn::config::{ConfigError, ExperimentConfig};
use hypolearn::data::{self, DataError, FeatureTable, Schema};
use hypolearn::expr::{self, ExprError, Hypothesis, HypothesisFile};
use hypolearn::forge::{self, ForgeError};
use hypolearn::learning::{self, LearnError};
use hypolearn::report::{self, ReportInputs};
use hypolearn::selfcheck;
use hypolearn::synth::{self, PlantedLaw, SynthConfig};

/// Environment variable that overrides the configured output directory.
const OUTPUT_DIR_ENV: &str = "HYPOLEARN_OUTPUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "hypolearn", version, about = "Hypothesis-driven active learning over molecular feature tables")]
struct Cli {
    /// JSON configuration file; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate candidate hypotheses from the hypothesis subset.
    Forge(ConfigFlags),
    /// Run the reward-driven exploration loop.
    Learn(ConfigFlags),
    /// Aggregate traces into plot-ready CSVs.
    Report(ReportArgs),
    /// Run the oracle suites.
    Selfcheck,
    /// Write a synthetic feature table.
    Synth(SynthArgs),
}

/// One flag per configuration key.
#[derive(Args, Debug, Default)]
struct ConfigFlags {
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    hypotheses: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    n_seed: Option<String>,
    #[arg(long)]
    n_steps: Option<String>,
    #[arg(long)]
    n_init: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    pool_subsample: Option<String>,
    #[arg(long)]
    hypothesis_subset: Option<String>,
    /// JSON list, e.g. '["TPSA"]'.
    #[arg(long)]
    gp_inputs: Option<String>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    lengthscale_prior_sd: Option<String>,
    #[arg(long)]
    noise_prior_fraction: Option<String>,
    #[arg(long)]
    warmup: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    thin: Option<String>,
    #[arg(long)]
    leapfrog_min: Option<String>,
    #[arg(long)]
    leapfrog_max: Option<String>,
    #[arg(long)]
    target_accept: Option<String>,
    #[arg(long)]
    adapt_metric: Option<String>,
    #[arg(long)]
    record_time: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    /// Forge settings as a JSON object.
    #[arg(long)]
    forge: Option<String>,
    /// Use the desk-scale protocol as the base configuration.
    #[arg(long)]
    desk: bool,
}

impl ConfigFlags {
    fn pairs(&self) -> Vec<(&'static str, &str)> {
        let all: [(&'static str, &Option<String>); 25] = [
            ("dataset", &self.dataset),
            ("hypotheses", &self.hypotheses),
            ("output_dir", &self.output_dir),
            ("seed", &self.seed),
            ("n_seed", &self.n_seed),
            ("n_steps", &self.n_steps),
            ("n_init", &self.n_init),
            ("epsilon", &self.epsilon),
            ("pool_subsample", &self.pool_subsample),
            ("hypothesis_subset", &self.hypothesis_subset),
            ("gp_inputs", &self.gp_inputs),
            ("target", &self.target),
            ("kernel", &self.kernel),
            ("lengthscale_prior_sd", &self.lengthscale_prior_sd),
            ("noise_prior_fraction", &self.noise_prior_fraction),
            ("warmup", &self.warmup),
            ("samples", &self.samples),
            ("thin", &self.thin),
            ("leapfrog_min", &self.leapfrog_min),
            ("leapfrog_max", &self.leapfrog_max),
            ("target_accept", &self.target_accept),
            ("adapt_metric", &self.adapt_metric),
            ("record_time", &self.record_time),
            ("workers", &self.workers),
            ("forge", &self.forge),
        ];
        all.into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect()
    }
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Trace CSVs written by `learn`.
    #[arg(long = "trace", required = true, num_args = 1..)]
    traces: Vec<PathBuf>,
    /// Dataset for the target histogram; defaults to the configured one.
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    bins: usize,
    /// Size of the leading subset compared against the full table.
    #[arg(long)]
    subset: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LawArg {
    /// FE = IE + 0.000944/MW.
    Enthalpy,
    /// FE = IE*(1+(TPSA/SP)^2) on per-row features.
    Model1,
    /// FE = -1*(1+(TPSA/1)^2), the Model-1 form at fixed parameters.
    Model1Fixed,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 500)]
    rows: usize,
    #[arg(long, default_value_t = 20220117)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = LawArg::Enthalpy)]
    law: LawArg,
    /// Gaussian noise standard deviation as a fraction of the target spread.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 120.0)]
    tpsa_max: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ExprError> for CliError {
    fn from(e: ExprError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ForgeError> for CliError {
    fn from(e: ForgeError) -> Self {
        match e {
            ForgeError::Config(_) => CliError::Usage(e.to_string()),
            ForgeError::NoCarrier(_) | ForgeError::Expr(_) | ForgeError::Io(_) => CliError::Data(e.to_string()),
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::Config(_) => CliError::Usage(e.to_string()),
            LearnError::Sgp(_) | LearnError::PoolExhausted => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

fn resolve_config(base: Option<&Path>, flags: &ConfigFlags) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match base {
        Some(p) => ExperimentConfig::load(p)?,
        None if flags.desk => ExperimentConfig::desk(),
        None => ExperimentConfig::default(),
    };
    if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
        cfg.output_dir = PathBuf::from(dir);
    }
    let cfg = cfg.with_overrides(flags.pairs())?;
    cfg.validate()?;
    Ok(cfg)
}

fn load_table(cfg: &ExperimentConfig) -> Result<FeatureTable, CliError> {
    match &cfg.dataset {
        Some(p) => Ok(data::load_feature_table(p, &Schema::canonical())?),
        None => Ok(data::bundled_sample()),
    }
}

fn load_hypotheses(cfg: &ExperimentConfig) -> Result<Vec<Hypothesis>, CliError> {
    match &cfg.hypotheses {
        Some(p) => Ok(expr::load_hypotheses(p)?),
        None => Ok(expr::bundled_hypotheses()),
    }
}

fn provenance_lines(cfg: &ExperimentConfig) -> Vec<String> {
    vec![format!("config_hash={}", cfg.hash()), format!("seed={}", cfg.seed)]
}

fn write_config(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(cfg).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(cfg.output_dir.join("config.json"), text + "\n")?;
    Ok(())
}

fn cmd_forge(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let table = load_table(cfg)?;
    let part = data::partition_first_n(&table, cfg.hypothesis_subset)?;
    let subset = &table.records()[..part.hypothesis_subset.len()];
    let outcome = forge::forge(subset, &cfg.forge)?;
    fs::create_dir_all(&cfg.output_dir)?;
    write_config(cfg)?;

    let hypotheses_path = cfg.output_dir.join("hypotheses.json");
    let file = HypothesisFile {
        config_hash: Some(cfg.hash()),
        seed: Some(cfg.seed),
        hypotheses: outcome.hypotheses.iter().map(Hypothesis::to_spec).collect(),
    };
    expr::write_hypotheses(&hypotheses_path, &file)?;
    let bundled = HypothesisFile {
        config_hash: Some(cfg.hash()),
        seed: Some(cfg.seed),
        hypotheses: expr::bundled_hypotheses().iter().map(Hypothesis::to_spec).collect(),
    };
    expr::write_hypotheses(&cfg.output_dir.join("bundled_hypotheses.json"), &bundled)?;
    let report_path = cfg.output_dir.join("descriptors.csv");
    forge::write_descriptor_report(&report_path, &outcome, &provenance_lines(cfg))?;

    println!(
        "expanded {} descriptors ({} skipped), {} candidates, {} screened, lambda {:.4e}",
        outcome.n_expanded, outcome.n_skipped, outcome.n_candidates, outcome.n_screened, outcome.lambda
    );
    for h in &outcome.hypotheses {
        println!("{}: {}", h.name(), h.canonical());
    }
    println!("wrote {} and {}", hypotheses_path.display(), report_path.display());
    Ok(())
}

fn cmd_learn(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let table = load_table(cfg)?;
    let hypotheses = load_hypotheses(cfg)?;
    fs::create_dir_all(&cfg.output_dir)?;
    write_config(cfg)?;
    let out = learning::run(table.records(), &hypotheses, cfg, Some(&cfg.output_dir)).map_err(|f| {
        log::error!(
            "initialization {} stopped after {} steps; its trace is in {}",
            f.init,
            f.completed.len(),
            learning::trace_path(&cfg.output_dir, f.init).display()
        );
        CliError::from(f.error)
    })?;
    for m in &out.summary.models {
        println!(
            "{:<12} average_reward {:+.4}  selections {:>4}  cumulative {:+}",
            m.name, m.average_reward, m.selections, m.final_cumulative
        );
    }
    println!("ranking: {}", out.summary.ranking.join(" > "));
    println!("wrote {}", cfg.output_dir.display());
    Ok(())
}

fn cmd_report(cfg: &ExperimentConfig, args: &ReportArgs) -> Result<(), CliError> {
    let traces = args
        .traces
        .iter()
        .map(|p| learning::read_trace(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display()))))
        .collect::<Result<Vec<_>, _>>()?;
    let table = match &args.dataset {
        Some(p) => data::load_feature_table(p, &Schema::canonical())?,
        None => load_table(cfg)?,
    };
    let subset = args.subset.unwrap_or(cfg.hypothesis_subset);
    let dir = args.output_dir.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let written = report::write_report(
        &dir,
        &ReportInputs {
            traces: &traces,
            histogram: Some((&table, cfg.target, subset, args.bins)),
        },
    )?;
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn cmd_selfcheck() -> Result<(), CliError> {
    let results = selfcheck::run_all();
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed == 0 {
        Ok(())
    } else {
        Err(CliError::Numerical(format!("{failed} of {} checks failed", results.len())))
    }
}

fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let law = match args.law {
        LawArg::Enthalpy => PlantedLaw::Enthalpy,
        LawArg::Model1 => PlantedLaw::Model1Features,
        LawArg::Model1Fixed => PlantedLaw::Model1Fixed { ie: -1.0, sp: 1.0 },
    };
    let cfg = SynthConfig {
        rows: args.rows,
        seed: args.seed,
        law,
        noise_fraction: args.noise,
        tpsa_max: args.tpsa_max,
    };
    let table = synth::synth_table(&cfg)?;
    table.write_csv(&args.out)?;
    println!("wrote {} rows to {}", table.len(), args.out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    let base = cli.config.as_deref();
    match &cli.command {
        Command::Forge(flags) => cmd_forge(&resolve_config(base, flags)?),
        Command::Learn(flags) => cmd_learn(&resolve_config(base, flags)?),
        Command::Report(args) => {
            let flags = ConfigFlags {
                output_dir: args.output_dir.as_ref().map(|p| p.display().to_string()),
                ..Default::default()
            };
            cmd_report(&resolve_config(base, &flags)?, args)
        }
        Command::Selfcheck => cmd_selfcheck(),
        Command::Synth(args) => cmd_synth(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hypolearn: {e}");
            ExitCode::from(e.code())
        }
    }
}
