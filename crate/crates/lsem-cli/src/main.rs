//! `lsem` — seeded command-line workbench for linear structural equation
//! models on bow-free mixed graphs.

mod commands;
mod config;
mod errors;
mod io;

use clap::{Parser, Subcommand};
use commands::{experiments, tools};

#[derive(Parser)]
#[command(
    name = "lsem",
    version,
    about = "Forward simulation, parameter recovery and conditioning analysis for linear SEMs on bow-free mixed graphs",
    after_help = "Exit codes: 0 success, 2 validation error, 3 numerical failure."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Near-diagonal covariance magnitudes of random path instances
    LocalDominance(experiments::LocalDominanceArgs),
    /// Perturb-and-recover experiment (sampling and/or perturbation error)
    Perturb(experiments::PerturbArgs),
    /// Condition ratios on jittered copies of the unstable 4-node instance
    BadRegion(experiments::BadRegionArgs),
    /// Mean condition ratio under data-level noise, over a grid of levels
    EpsSweep(experiments::EpsSweepArgs),
    /// Condition histogram for a clique-of-paths / layered / path family
    GraphFamilies(experiments::GraphFamiliesArgs),
    /// Perturb-recover-average verdict: well- or ill-conditioned
    Heuristic(tools::HeuristicArgs),
    /// Generate a random instance (parameters JSON, optional covariance)
    Generate(tools::GenerateArgs),
    /// Exact covariance of a parameters file
    Forward(tools::ForwardArgs),
    /// Draw Gaussian observations from a parameters file
    Sample(tools::SampleArgs),
    /// Recover edge weights (optionally noise covariance) from covariance or data
    Recover(tools::RecoverArgs),
    /// Randomized condition report for a covariance and graph
    Condition(tools::ConditionArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::LocalDominance(args) => experiments::local_dominance(args),
        Command::Perturb(args) => experiments::perturb_experiment(args),
        Command::BadRegion(args) => experiments::bad_region(args),
        Command::EpsSweep(args) => experiments::eps_sweep(args),
        Command::GraphFamilies(args) => experiments::graph_families(args),
        Command::Heuristic(args) => tools::heuristic(args),
        Command::Generate(args) => tools::generate(args),
        Command::Forward(args) => tools::forward(args),
        Command::Sample(args) => tools::sample(args),
        Command::Recover(args) => tools::recover(args),
        Command::Condition(args) => tools::condition(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
