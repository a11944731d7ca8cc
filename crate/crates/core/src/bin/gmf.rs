use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gmf::experiments::{self, selftest_counts, ExperimentConfig, GRAPHON_NAMES};
use gmf::model::presets;
use gmf::Error;

#[derive(Parser)]
#[command(name = "gmf", version, about = "Graphon mean-field particle system experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config file.
    Run { config: PathBuf },
    /// Run the transport oracle checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Describe a model preset.
    Info { preset: String },
}

const CONFIG_ERROR: u8 = 2;
const ALL_DIVERGED: u8 = 3;
const SELFTEST_FAILED: u8 = 4;

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidConfig(_) | Error::Json(_) | Error::Domain { .. } | Error::NonNested(_) | Error::DimensionMismatch(_)
    )
}

fn run(path: PathBuf) -> ExitCode {
    let cfg = match ExperimentConfig::from_path(&path) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("gmf: config error: {e}");
            return ExitCode::from(CONFIG_ERROR);
        }
    };
    match experiments::run_to_dir(&cfg) {
        Ok(result) => {
            println!(
                "{}: {} rows, {}/{} cells failed, written to {}",
                result.experiment,
                result.rows.len(),
                result.failed_cells,
                result.cells,
                cfg.out_dir.display()
            );
            if result.all_failed() {
                eprintln!("gmf: every cell diverged");
                ExitCode::from(ALL_DIVERGED)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) if is_config_error(&e) => {
            eprintln!("gmf: config error: {e}");
            ExitCode::from(CONFIG_ERROR)
        }
        Err(e) => {
            eprintln!("gmf: {e}");
            ExitCode::FAILURE
        }
    }
}

fn selftest(seed: u64) -> ExitCode {
    match selftest_counts(seed) {
        Ok(c) => {
            println!("oracle     {}/{} (max diff {:e})", c.oracle_matches, c.oracle_instances, c.oracle_max_diff);
            println!("symmetry   max diff {:e}", c.symmetry_max_diff);
            println!("triangle   {}/{}", c.triangle_passes, experiments::AXIOM_PAIRS);
            println!("W1 <= W2   {}/{}", c.lyapunov_passes, experiments::AXIOM_PAIRS);
            println!("dirac      {}/{}", c.dirac_passes, experiments::DIRAC_PAIRS);
            if c.failures() == 0 {
                println!("selftest passed");
                ExitCode::SUCCESS
            } else {
                println!("selftest FAILED ({} failures)", c.failures());
                ExitCode::from(SELFTEST_FAILED)
            }
        }
        Err(e) => {
            eprintln!("gmf: {e}");
            ExitCode::from(SELFTEST_FAILED)
        }
    }
}

fn info(preset: &str) -> ExitCode {
    match presets::describe(preset) {
        Some(text) => {
            println!("{preset}: {text}");
            ExitCode::SUCCESS
        }
        None => {
            eprintln!("gmf: unknown preset {preset:?}");
            eprintln!("models: {}", presets::NAMES.join(", "));
            eprintln!("graphons: {}", GRAPHON_NAMES.join(", "));
            ExitCode::from(CONFIG_ERROR)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config } => run(config),
        Command::Selftest { seed } => selftest(seed),
        Command::Info { preset } => info(&preset),
    }
}
