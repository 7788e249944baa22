use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use skyrlab_cli::{run, Overrides, TaskKind};

#[derive(Parser)]
#[command(name = "skyrlab", version, about = "Exact diagonalization and qubit dynamics of DMI spin lattices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lowest eigenpairs and ground-state observables.
    Diagonalize(RunArgs),
    /// Phase diagram over a (J, B) grid.
    Sweep(RunArgs),
    /// Time evolution in the full Hilbert space.
    Evolve(RunArgs),
    /// Gate drive on the lattice qubit.
    Gate(RunArgs),
    /// Two-level Lindblad dynamics.
    Lindblad(RunArgs),
    /// Readout rotations and the Bell circuit.
    Readout(RunArgs),
    /// Static or dynamic observables over a series of DMI strengths.
    DmiSeries(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write lattice.json to the output directory.
    #[arg(long)]
    dump_lattice: bool,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (task, args) = match cli.command {
        Command::Diagonalize(a) => (TaskKind::Diagonalize, a),
        Command::Sweep(a) => (TaskKind::Sweep, a),
        Command::Evolve(a) => (TaskKind::Evolve, a),
        Command::Gate(a) => (TaskKind::Gate, a),
        Command::Lindblad(a) => (TaskKind::Lindblad, a),
        Command::Readout(a) => (TaskKind::Readout, a),
        Command::DmiSeries(a) => (TaskKind::DmiSeries, a),
    };
    let ov = Overrides {
        workers: args.workers,
        seed: args.seed,
        out: args.out,
        dump_lattice: args.dump_lattice,
    };
    match run(task, &args.config, &ov) {
        Ok(summary) => {
            println!("{}", summary.line());
            ExitCode::SUCCESS
        }
        Err(e) => {
            let code = e.exit_code();
            eprintln!("skyrlab: {e}");
            println!(
                "{}",
                serde_json::json!({ "task": task.block_name(), "error": e.to_string(), "exit_code": code })
            );
            ExitCode::from(code as u8)
        }
    }
}
