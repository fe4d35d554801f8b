use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shearmix_cli::config::{Command, RunConfig};
use shearmix_cli::error::{CliError, EXIT_NON_FINDING};
use shearmix_cli::run::run;

#[derive(Parser)]
#[command(name = "shearmix", version, about = "Random alternating shear flows on the torus")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// One seeded trajectory of the one-point chain.
    Simulate(Flags),
    /// Top Lyapunov exponent estimates.
    Lyapunov(Flags),
    /// Zero-set separation and bracket-rank witnesses.
    Hypotheses(Flags),
    /// Drift bounds and Monte Carlo drift ratios near the excluded set.
    Drift(Flags),
    /// Two-point correlation decay.
    Correlations(Flags),
    /// Exact steering plan between two points.
    Steer(Flags),
    /// Mixing scale of an advected scalar.
    Mix(Flags),
}

#[derive(Args)]
struct Flags {
    /// Plain-text `key = value` file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// pierrehumbert, chirikov or custom
    #[arg(long)]
    model: Option<String>,
    /// Profile of a custom model: `identity` or `cos=a0,a1;sin=b1,b2`
    #[arg(long)]
    f1: Option<String>,
    #[arg(long)]
    f2: Option<String>,
    /// Duration bound (duration cap for steer)
    #[arg(long = "T")]
    horizon: Option<String>,
    /// Comma-separated horizons for lyapunov
    #[arg(long = "T-grid")]
    horizon_grid: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Steps
    #[arg(long)]
    m: Option<String>,
    #[arg(long)]
    samples: Option<String>,
    /// Grid points per side for mix
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    beta: Option<String>,
    /// Two-point drift exponent
    #[arg(long)]
    h: Option<String>,
    /// Comma-separated, strictly decreasing mixing radii
    #[arg(long)]
    radii: Option<String>,
    /// `q,p`
    #[arg(long)]
    start: Option<String>,
    /// `q,p`
    #[arg(long)]
    target: Option<String>,
    /// Output directory
    #[arg(long)]
    out: Option<String>,
}

impl Flags {
    fn overrides(&self) -> Vec<(String, String)> {
        [
            ("model", &self.model),
            ("f1", &self.f1),
            ("f2", &self.f2),
            ("T", &self.horizon),
            ("T_grid", &self.horizon_grid),
            ("seed", &self.seed),
            ("m", &self.m),
            ("samples", &self.samples),
            ("grid", &self.grid),
            ("beta", &self.beta),
            ("h", &self.h),
            ("radii", &self.radii),
            ("start", &self.start),
            ("target", &self.target),
            ("out", &self.out),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k.to_string(), v.clone())))
        .collect()
    }
}

fn execute(cli: Cli) -> Result<ExitCode, CliError> {
    let (command, flags) = match cli.command {
        Sub::Simulate(f) => (Command::Simulate, f),
        Sub::Lyapunov(f) => (Command::Lyapunov, f),
        Sub::Hypotheses(f) => (Command::Hypotheses, f),
        Sub::Drift(f) => (Command::Drift, f),
        Sub::Correlations(f) => (Command::Correlations, f),
        Sub::Steer(f) => (Command::Steer, f),
        Sub::Mix(f) => (Command::Mix, f),
    };
    let cfg = RunConfig::resolve(command, flags.config.as_deref(), &flags.overrides())?;
    let outcome = run(&cfg)?;
    println!("{}", outcome.summary);
    for path in &outcome.artifacts {
        println!("wrote {}", path.display());
    }
    if outcome.finding {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("{}: completed without a positive finding", command.name());
        Ok(ExitCode::from(EXIT_NON_FINDING))
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
