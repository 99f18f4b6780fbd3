use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use exitbound::pipeline::{execute, resolve_out_dir, Command, RunOptions};
use exitbound::scenario::Scenario;

#[derive(Parser)]
#[command(
    name = "exitbound",
    version,
    about = "Verify the exit-time perturbation bound for coupled diffusions"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// Scenario file
    scenario: PathBuf,
    /// Worker threads for the Monte Carlo stage
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Output directory (overrides EXITBOUND_OUT and the scenario)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Base seed (overrides mc.base_seed)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the mean exit time problem for both processes
    SolvePde(Common),
    /// Simulate coupled exit times
    Simulate(Common),
    /// Estimate both sides of the bound and run the consistency checks
    VerifyBound(Common),
    /// Spatial and time-step convergence study
    Convergence(Common),
}

fn main() -> ExitCode {
    // usage errors share the validation status so that 2 means a violation
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (command, args) = match cli.command {
        Cmd::SolvePde(a) => (Command::SolvePde, a),
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::VerifyBound(a) => (Command::VerifyBound, a),
        Cmd::Convergence(a) => (Command::Convergence, a),
    };
    let scn = match Scenario::load(&args.scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    };
    if args.workers == 0 {
        eprintln!("error: --workers must be at least 1");
        return ExitCode::from(3);
    }
    let env = std::env::var_os("EXITBOUND_OUT")
        .filter(|v| !v.is_empty())
        .map(PathBuf::from);
    let opts = RunOptions {
        workers: args.workers,
        out_dir: resolve_out_dir(args.out, env, &scn),
        seed: args.seed,
    };
    match execute(command, &scn, &opts) {
        Ok(summary) => {
            print!("{}", summary.text);
            for f in &summary.files {
                println!("wrote {}", f.display());
            }
            ExitCode::from(summary.exit_code as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
