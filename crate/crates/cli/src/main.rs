use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use escapekit_cli::{run, Command, ModelSource, Overrides};

/// Learn SDEs from sample paths and compute exit statistics.
#[derive(Parser)]
#[command(name = "escapekit", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate trajectories of the configured model.
    Simulate(Common),
    /// Fit a coefficient table to the simulated trajectories.
    Learn(Common),
    /// Solve the mean residence time and escape problems.
    Solve(WithModel),
    /// Compare the true and learned solves.
    Compare(Common),
    /// Monte Carlo exit statistics at interior probe points.
    Oracle(WithModel),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Replaces simulate.seed and oracle.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Replaces output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct WithModel {
    #[command(flatten)]
    common: Common,
    /// `true` or `learned`.
    #[arg(long, default_value = "true")]
    model: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (command, common, model) = match cli.command {
        Cmd::Simulate(c) => (Command::Simulate, c, None),
        Cmd::Learn(c) => (Command::Learn, c, None),
        Cmd::Compare(c) => (Command::Compare, c, None),
        Cmd::Solve(w) => (Command::Solve, w.common, Some(w.model)),
        Cmd::Oracle(w) => (Command::Oracle, w.common, Some(w.model)),
    };
    let source = match model.as_deref().map(str::parse::<ModelSource>).transpose() {
        Ok(s) => s.unwrap_or_default(),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let overrides = Overrides {
        seed: common.seed,
        out: common.out,
    };
    match run(command, &common.config, &overrides, source) {
        Ok(report) => {
            print!("{}", report.to_text());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
