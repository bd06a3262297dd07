use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ferro_cli::commands::{self, Outcome, TimeNormRequest};
use ferro_cli::config::parse_config;
use ferro_cli::CliError;

/// Pseudospectral micropolar ferrofluid experiments on the periodic box.
#[derive(Parser, Debug)]
#[command(name = "ferro", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment configuration (key=value lines).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the solver, dumping snapshots and writing energy.csv.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Also report the H^gamma-in-time norm with values in H^{-n_bound}.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long, default_value_t = 2.0)]
        n_bound: f64,
    },
    /// Fit the algebraic energy decay rate.
    Decay {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.4)]
        alpha: f64,
        /// Start of the fit window; defaults to a tenth of the horizon.
        #[arg(long)]
        fit_start: Option<f64>,
        /// End of the fit window; defaults to the horizon.
        #[arg(long)]
        fit_end: Option<f64>,
    },
    /// Run two trajectories a perturbation apart and audit the stability envelope.
    Twin {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1e-6)]
        eps: f64,
    },
    /// Audit the Sobolev budget for each index.
    Regsweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, default_value = "1.5")]
        s: Vec<f64>,
    },
    /// Littlewood-Paley checks: reconstruction, Bernstein, commutator and product probes.
    Lpcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Magnetostatic solve, constraint residuals and the per-mode field bound.
    Magcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn run(cli: Cli) -> Result<(Outcome, PathBuf), CliError> {
    let common = match &cli.command {
        Command::Simulate { common, .. }
        | Command::Decay { common, .. }
        | Command::Twin { common, .. }
        | Command::Regsweep { common, .. }
        | Command::Lpcheck { common, .. }
        | Command::Magcheck { common, .. } => common,
    };
    let text = std::fs::read_to_string(&common.config).map_err(|e| CliError::io(&common.config, e))?;
    let cfg = parse_config(&text)?;
    let out = common.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let outcome = match cli.command {
        Command::Simulate { gamma, n_bound, .. } => {
            commands::simulate(&cfg, &out, gamma.map(|gamma| TimeNormRequest { gamma, n_bound }))?
        }
        Command::Decay {
            alpha,
            fit_start,
            fit_end,
            ..
        } => {
            let window = (fit_start.unwrap_or(cfg.t_end / 10.0), fit_end.unwrap_or(cfg.t_end));
            commands::decay(&cfg, &out, alpha, window)?
        }
        Command::Twin { eps, .. } => commands::twin(&cfg, &out, eps)?,
        Command::Regsweep { s, .. } => commands::regsweep(&cfg, &out, &s)?,
        Command::Lpcheck { trials, seed, .. } => commands::lpcheck(&cfg, &out, trials, seed)?,
        Command::Magcheck { trials, seed, .. } => commands::magcheck(&cfg, &out, trials, seed)?,
    };
    Ok((outcome, out))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok((outcome, out)) => {
            for path in &outcome.written {
                println!("wrote {}", path.display());
            }
            let list = out.join("failures.txt");
            let body: String = outcome.failures.iter().map(|f| format!("{f}\n")).collect();
            if let Err(e) = std::fs::write(&list, body) {
                eprintln!("error: {}", CliError::io(&list, e));
                return ExitCode::from(2);
            }
            for f in &outcome.failures {
                eprintln!("FAIL {f}");
            }
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
