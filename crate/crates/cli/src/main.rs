use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use heisenberg_cli::commands;
use heisenberg_cli::config::{parse_literal, Settings};
use heisenberg_cli::error::CliResult;
use toml::Value;

#[derive(Parser)]
#[command(name = "heis", version, about = "Numerical checks and solvers on the Heisenberg group H¹")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML settings file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one setting, e.g. `--set solver.n=24` (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    sets: Vec<String>,
    /// Suites to run (repeatable or comma-separated; `all` by default)
    #[arg(long, value_delimiter = ',', global = true)]
    suite: Vec<String>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, global = true)]
    format: Option<FormatArg>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Multiplies every quadrature and grid size
    #[arg(long, global = true)]
    resolution_scale: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Run verifier suites and write report.json / report.csv
    Verify,
    /// Print the boundary-term constant c_n
    Cn,
    /// Sample the calibrated bubble over a box
    Bubble,
    /// Evaluate both sides of the Pohozaev identity
    Pohozaev,
    /// Export the radial profile w̄ of a bubble
    Profile,
    /// Solve the Dirichlet problem with bubble boundary data
    Solve,
    /// Run the concentration sweep over p
    Sweep,
    /// Recompute the normal-coordinate order tables
    Orders,
}

impl Common {
    fn settings(&self) -> CliResult<Settings> {
        let mut s = Settings::load(self.config.as_deref(), &self.sets)?;
        if !self.suite.is_empty() {
            s.set("suite", Value::Array(self.suite.iter().map(|x| Value::String(x.trim().into())).collect()))?;
        }
        if let Some(o) = &self.out {
            s.set("out", Value::String(o.display().to_string()))?;
        }
        if let Some(f) = self.format {
            let name = match f {
                FormatArg::Json => "json",
                FormatArg::Csv => "csv",
                FormatArg::Both => "both",
            };
            s.set("format", Value::String(name.into()))?;
        }
        if let Some(seed) = self.seed {
            s.set("seed", parse_literal(&seed.to_string()))?;
        }
        if let Some(r) = self.resolution_scale {
            s.set("resolution_scale", Value::Float(r))?;
        }
        Ok(s)
    }
}

fn run(cli: &Cli) -> CliResult<i32> {
    let s = cli.common.settings()?;
    match cli.command {
        Command::Verify => commands::verify(&s),
        Command::Cn => commands::cn(&s),
        Command::Bubble => commands::bubble(&s),
        Command::Pohozaev => commands::pohozaev(&s),
        Command::Profile => commands::profile(&s),
        Command::Solve => commands::solve(&s),
        Command::Sweep => commands::sweep(&s),
        Command::Orders => commands::orders(&s),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("heis: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
