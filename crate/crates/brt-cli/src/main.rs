use clap::{Parser, Subcommand};

use brt_cli::commands::{
    cmd_cluster, cmd_gp_regress, cmd_optimize, cmd_oracle, cmd_partitions, cmd_sample,
    ClusterArgs, GpRegressArgs, OptimizeArgs, OracleArgs, PartitionsArgs, SampleArgs,
};

/// Bayesian rose tree clustering: mixtures over tree-consistent
/// partitions with arbitrary branching.
#[derive(Parser)]
#[command(name = "brt", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Greedily build a cluster tree for a binary dataset.
    Cluster(ClusterArgs),
    /// Alternate tree building with hyperparameter optimization.
    Optimize(OptimizeArgs),
    /// Compare greedy trees against exhaustive search on sampled data.
    Oracle(OracleArgs),
    /// Density regression with a mixture of GP experts.
    GpRegress(GpRegressArgs),
    /// Inspect the partitions of a stored tree document.
    Partitions(PartitionsArgs),
    /// Draw a synthetic dataset from the generative model.
    Sample(SampleArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Cluster(args) => cmd_cluster(args),
        Command::Optimize(args) => cmd_optimize(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::GpRegress(args) => cmd_gp_regress(args),
        Command::Partitions(args) => cmd_partitions(args),
        Command::Sample(args) => cmd_sample(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
