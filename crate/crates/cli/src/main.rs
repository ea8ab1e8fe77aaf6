//! `afl`: run, compare and inspect agnostic federated averaging experiments.
//!
//! On failure the last line on stderr is a JSON object
//! `{"error": {"kind": ..., "message": ...}}` and the exit code is 1.

use std::path::PathBuf;
use std::process::ExitCode;

use agnostic_fl::harness::{self, ExperimentConfig};
use agnostic_fl::server::Algorithm;
use agnostic_fl::{tasks, Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "afl", version, about = "Agnostic federated averaging experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment, writing metrics CSV and plots.
    Run {
        #[command(flatten)]
        source: ConfigSource,
        /// Output directory (overrides output.out_dir).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run several algorithms on identical data and seeds and print a table.
    Compare {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long, value_delimiter = ',', default_value = "fedavg,afa")]
        algorithms: Vec<AlgorithmArg>,
    },
    /// Write the generated client datasets in the line-oriented text format.
    GenData {
        #[command(flatten)]
        source: ConfigSource,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the fully resolved configuration as TOML.
    ShowConfig {
        #[command(flatten)]
        source: ConfigSource,
    },
}

#[derive(Args)]
struct ConfigSource {
    /// TOML experiment configuration.
    #[arg(long, required_unless_present = "preset", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration instead of a file.
    #[arg(long)]
    preset: Option<Preset>,
    /// Override any field by dotted path, e.g. algorithm.rounds=200.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Toy,
    Classification,
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Fedavg,
    Afa,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Fedavg => Algorithm::Fedavg,
            AlgorithmArg::Afa => Algorithm::Afa,
        }
    }
}

impl ConfigSource {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("seed={seed}"));
        }
        match (&self.config, self.preset) {
            (Some(path), _) => ExperimentConfig::load(path, &overrides),
            (None, Some(preset)) => {
                let base = match preset {
                    Preset::Toy => ExperimentConfig::toy(),
                    Preset::Classification => ExperimentConfig::classification(),
                };
                ExperimentConfig::from_toml_with_overrides(&base.to_toml_string()?, &overrides)
            }
            (None, None) => Err(Error::Config("either --config or --preset is required".into())),
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { source, out_dir } => {
            let mut cfg = source.load()?;
            if let Some(dir) = out_dir {
                cfg.output.out_dir = dir;
            }
            let art = harness::run_to_disk(&cfg)?;
            println!("metrics: {}", art.metrics.display());
            if let Some(plots) = &art.plots {
                for p in plots {
                    println!("plot: {}", p.display());
                }
            }
            if let Some(last) = art.outcome.reports.last() {
                println!("rounds: {}", last.round);
                println!("final lambda: {:?}", last.lambda);
                println!("comm_params_cumulative: {}", last.comm_params_cumulative);
            }
            let eval = &art.outcome.final_eval;
            println!("final per-domain loss: {:?}", eval.loss);
            if !eval.accuracy.is_empty() {
                println!("final per-domain accuracy: {:?}", eval.accuracy);
            }
            println!("final worst-domain loss: {}", eval.worst_loss());
            if let Some(oracle) = art.outcome.oracle {
                println!("final w: {:?} (oracle {oracle})", art.outcome.final_state.params().as_slice());
            }
        }
        Command::Compare { source, algorithms } => {
            let cfg = source.load()?;
            let algs: Vec<Algorithm> = algorithms.into_iter().map(Into::into).collect();
            let rows = harness::compare(&cfg, &algs)?;
            print!("{}", harness::format_compare_table(&rows));
        }
        Command::GenData { source, out } => {
            let cfg = source.load()?;
            let (data, _) = harness::build_population(&cfg)?;
            tasks::write_datasets(&out, &data)?;
            println!("wrote {} clients to {}", data.len(), out.display());
        }
        Command::ShowConfig { source } => {
            print!("{}", source.load()?.to_toml_string()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let line = serde_json::json!({
                "error": { "kind": e.kind(), "message": e.to_string().trim_end() }
            });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
