use std::path::PathBuf;

use clap::{Parser, Subcommand};
use conical_cli::{execute, Command, Invocation};

#[derive(Parser)]
#[command(name = "conical", version, about = "Broken Hamiltonian flow and semiclassical Wigner diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(clap::Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the config's `output`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for the eps sweep and particle push-forward.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Sub {
    /// Broken classical trajectory: CSV samples plus a JSON list of crossings.
    Trajectory(Common),
    /// Split-step evolution for every eps; binary snapshots plus manifest.
    Evolve(Common),
    /// Wigner transforms and symbol pairings of `evolve` snapshots.
    Wigner {
        #[command(flatten)]
        common: Common,
        /// Manifest written by `evolve` (default: <out>/manifest_evolve.json).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Quantum vs push-forward pairings over the eps list.
    EgorovCheck {
        #[command(flatten)]
        common: Common,
        /// Exit with status 4 when a criterion fails.
        #[arg(long)]
        check: bool,
    },
    /// Inner/outer/bulk split of a two-scale observable on the (eps, R, delta) lattice.
    TwoMicrolocal(Common),
}

fn main() {
    let (common, command) = match Cli::parse().command {
        Sub::Trajectory(c) => (c, Command::Trajectory),
        Sub::Evolve(c) => (c, Command::Evolve),
        Sub::Wigner { common, input } => (common, Command::Wigner { input }),
        Sub::EgorovCheck { common, check } => (common, Command::EgorovCheck { check }),
        Sub::TwoMicrolocal(c) => (c, Command::TwoMicrolocal),
    };
    let inv = Invocation { config: common.config, out: common.out, threads: common.threads, seed: common.seed, command };
    std::process::exit(execute(&inv));
}
