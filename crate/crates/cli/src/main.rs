use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vswap_cli::{exit_code, load_config, mc, parse_frequencies, price, report_table2, sweep_cmd, Format, RunConfig};
use vswap_core::Error;

#[derive(Parser)]
#[command(name = "vswap", version, about = "Variance swap fair strikes under a regime-switching Heston-CIR model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Write the artifact here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's `format`.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's `mc_paths`.
    #[arg(long)]
    paths: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic fair strike.
    Price {
        #[command(flatten)]
        common: Common,
    },
    /// Monte Carlo fair strike.
    Mc {
        #[command(flatten)]
        common: Common,
    },
    /// Analytic strike over several sampling frequencies.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Comma-separated list, ranges allowed (`1-52`).
        #[arg(long, default_value = "4,12,26,52", value_parser = frequency_list)]
        frequencies: Frequencies,
        /// Add Monte Carlo columns.
        #[arg(long)]
        mc: bool,
    },
    /// Reference tables.
    Report {
        #[command(subcommand)]
        which: Report,
    },
}

#[derive(Subcommand)]
enum Report {
    /// Every initial regime at N = 4, 12, 26, 52 against published values.
    Table2 {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone)]
struct Frequencies(Vec<usize>);

fn frequency_list(text: &str) -> Result<Frequencies, String> {
    parse_frequencies(text).map(Frequencies)
}

fn configure_threads() -> Result<(), Error> {
    let Ok(v) = std::env::var("VSWAP_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| Error::Config(format!("VSWAP_THREADS = '{v}' is not a count")))?;
    // 0 leaves the choice to rayon
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn load(common: &Common) -> Result<(RunConfig, Format), Error> {
    let mut cfg = load_config(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.mc.seed = seed;
    }
    if let Some(paths) = common.paths {
        cfg.mc.paths = paths;
    }
    let format = common.format.unwrap_or(cfg.format);
    Ok((cfg, format))
}

fn emit(common: &Common, text: &str) -> Result<(), Error> {
    match &common.out {
        Some(path) => fs::write(path, text).map_err(|e| Error::Config(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    configure_threads()?;
    match cli.command {
        Command::Price { common } => {
            let (cfg, format) = load(&common)?;
            emit(&common, &price(&cfg, format)?.1)
        }
        Command::Mc { common } => {
            let (cfg, format) = load(&common)?;
            emit(&common, &mc(&cfg, format)?.1)
        }
        Command::Sweep { common, frequencies, mc } => {
            let (cfg, format) = load(&common)?;
            emit(&common, &sweep_cmd(&cfg, &frequencies.0, mc, format)?.1)
        }
        Command::Report { which: Report::Table2 { common } } => {
            let (cfg, format) = load(&common)?;
            emit(&common, &report_table2(&cfg, format)?.1)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(exit_code(&e))
        }
    }
}
