use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use countquant::pipeline::{Pipeline, Stage};
use countquant::report::{report, summarize};
use countquant::{CliError, CliResult, Overrides, RunConfig};
use countquant_core::quantile::QuantileMode;

/// Bayesian quantile regression for count data with Pitman-Yor mixtures of
/// truncated normal kernels.
#[derive(Parser, Debug)]
#[command(name = "countquant", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a simulation setting with its true quantile curves.
    Simulate,
    /// Run the Gibbs sampler and write the pooled posterior draws.
    Fit,
    /// Conditional quantile draws for every observation.
    Quantile,
    /// Penalized regression of the quantile draws on the covariates.
    Regress,
    /// Continuous-Poisson and jittering baseline curves.
    Baseline,
    /// ISE of every method relative to the proposed one (simulated data).
    Compare,
    /// All stages in order.
    Run,
    /// Summarize the run recorded in the output directory.
    Report {
        #[arg(long)]
        json: bool,
    },
    /// Mean and SD of the response and covariates of the input data.
    Summary,
    /// Print the effective configuration as TOML.
    Config,
}

#[derive(Args, Debug)]
struct Flags {
    /// TOML configuration file; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated quantile levels.
    #[arg(long, global = true, value_delimiter = ',')]
    taus: Option<Vec<f64>>,
    /// Fit on the raw covariate scale.
    #[arg(long, global = true)]
    no_standardize: bool,
    /// Input CSV with a header row.
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    #[arg(long, global = true)]
    response: Option<String>,
    #[arg(long, global = true, value_delimiter = ',')]
    covariates: Option<Vec<String>>,
    /// Comma-separated 1-based data rows to drop.
    #[arg(long, global = true, value_delimiter = ',')]
    exclude_rows: Option<Vec<usize>>,
    /// Simulation setting, 1 or 2.
    #[arg(long, global = true)]
    setting: Option<u8>,
    /// Simulated sample size.
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true)]
    burn_in: Option<usize>,
    #[arg(long, global = true)]
    iterations: Option<usize>,
    #[arg(long, global = true)]
    thin: Option<usize>,
    /// Auxiliary draws per fresh-cluster proposal.
    #[arg(long, global = true)]
    m: Option<usize>,
    #[arg(long, global = true)]
    chains: Option<usize>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    discount: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    strength: Option<f64>,
    /// Prior mean of the number of clusters (with --cluster-sd).
    #[arg(long, global = true)]
    cluster_mean: Option<f64>,
    #[arg(long, global = true)]
    cluster_sd: Option<f64>,
    /// Sample from the prior, ignoring the likelihood.
    #[arg(long, global = true)]
    prior_only: bool,
    /// paper or exact covariate weights in the conditional quantile.
    #[arg(long, global = true, value_parser = parse_mode)]
    quantile_mode: Option<QuantileMode>,
    #[arg(long, global = true)]
    bootstrap: Option<usize>,
    #[arg(long, global = true)]
    n_jitters: Option<usize>,
}

fn parse_mode(s: &str) -> Result<QuantileMode, String> {
    match s {
        "paper" => Ok(QuantileMode::Paper),
        "exact" => Ok(QuantileMode::Exact),
        _ => Err(format!("expected paper or exact, got {s}")),
    }
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            output_dir: self.output_dir.clone(),
            seed: self.seed,
            taus: self.taus.clone(),
            no_standardize: self.no_standardize,
            input: self.input.clone(),
            response: self.response.clone(),
            covariates: self.covariates.clone(),
            exclude_rows: self.exclude_rows.clone(),
            setting: self.setting,
            n: self.n,
            burn_in: self.burn_in,
            iterations: self.iterations,
            thin: self.thin,
            m: self.m,
            chains: self.chains,
            discount: self.discount,
            strength: self.strength,
            cluster_mean: self.cluster_mean,
            cluster_sd: self.cluster_sd,
            prior_only: self.prior_only,
            quantile_mode: self.quantile_mode,
            bootstrap: self.bootstrap,
            n_jitters: self.n_jitters,
        }
    }
}

fn execute(cli: &Cli) -> CliResult<()> {
    let config = RunConfig::load(cli.flags.config.as_deref(), &cli.flags.overrides())?;
    let pipeline = Pipeline::new(config);
    let stages = |s: Stage| vec![s];
    let (name, plan) = match &cli.command {
        Command::Simulate => ("simulate", stages(Stage::Simulate)),
        Command::Fit => ("fit", stages(Stage::Fit)),
        Command::Quantile => ("quantile", stages(Stage::Quantile)),
        Command::Regress => ("regress", stages(Stage::Regress)),
        Command::Baseline => ("baseline", stages(Stage::Baseline)),
        Command::Compare => ("compare", stages(Stage::Compare)),
        Command::Run => ("run", pipeline.full_stages()),
        Command::Report { json } => {
            let r = report(pipeline.dir())?;
            if *json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&r).expect("report serializes")
                );
            } else {
                print!("{r}");
            }
            return Ok(());
        }
        Command::Summary => {
            let (data, _) = pipeline.load_data()?;
            print!("{}", summarize(&data, &pipeline.config.data.response));
            return Ok(());
        }
        Command::Config => {
            print!("{}", pipeline.config.to_toml());
            return Ok(());
        }
    };
    let m = pipeline.run(name, &plan)?;
    for s in &m.stages {
        log::info!(
            "{}: {} file(s), {:.1}s",
            s.stage,
            s.files.len(),
            s.wall_clock_seconds
        );
    }
    eprintln!(
        "{name}: done in {:.1}s, manifest at {}",
        m.wall_clock_seconds,
        pipeline
            .dir()
            .join(countquant::manifest::MANIFEST_FILE)
            .display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.flags.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let CliError::Numeric { source, .. } = &e {
                let mut s = std::error::Error::source(source);
                while let Some(inner) = s {
                    eprintln!("  caused by: {inner}");
                    s = inner.source();
                }
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
