//! Implementations of the CLI verbs. Each command reads CSV in, reports
//! to stdout, and writes JSON documents, Newick trees, or CSV reports as
//! requested.

use std::fs;
use std::path::PathBuf;

use clap::{Args, ValueEnum};

use brt::bernoulli::Hyperparams;
use brt::builder::{build, BuildMode};
use brt::datagen::{random_rose_tree, sample_dataset_with_rng, toy_dataset, trial_rng};
use brt::gp::{optimize_kernel, predictive_density, GpExperts, InputPriorParams, KernelParams};
use brt::hyperopt::em_alternation;
use brt::math::AscentOptions;
use brt::oracle::{optimality_experiment, ExperimentConfig};
use brt::partition::{count_partitions, enumerate_partitions};
use brt::tree::TreeFactory;
use brt::BetaBernoulli;

use crate::document::{build_document, HyperDoc, TreeDocument};
use crate::error::{CliError, CliResult};
use crate::ingest::{ingest, write_csv, BinarizeRule, Dataset};
use crate::newick::export_newick;

fn f17(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Join, absorb, and collapse merges (arbitrary branching).
    Rose,
    /// Join-only merges (binary trees, constant mixing proportion).
    Binary,
}

impl From<Mode> for BuildMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Rose => BuildMode::Rose,
            Mode::Binary => BuildMode::BinaryOnly,
        }
    }
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Input CSV path.
    #[arg(long)]
    pub data: PathBuf,
    /// Field delimiter (single character; use '\t' via --delimiter=$'\t').
    #[arg(long, default_value = ",")]
    pub delimiter: String,
    /// Binarization rule: none, nonzero, presence, or threshold:K.
    #[arg(long, default_value = "none")]
    pub binarize: BinarizeRule,
}

impl DataArgs {
    fn delimiter_byte(&self) -> CliResult<u8> {
        let bytes = self.delimiter.as_bytes();
        if bytes.len() != 1 {
            return Err(CliError::Usage(format!(
                "--delimiter must be a single character, got '{}'",
                self.delimiter
            )));
        }
        Ok(bytes[0])
    }

    pub fn load(&self) -> CliResult<Dataset> {
        ingest(&self.data, self.delimiter_byte()?, self.binarize)
    }
}

#[derive(Debug, Args)]
pub struct HyperArgs {
    /// Mixing hyperparameter γ ∈ (0, 1).
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    /// Beta prior α, broadcast across dimensions.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Beta prior β, broadcast across dimensions.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
}

impl HyperArgs {
    fn hyperparams(&self, dims: usize) -> CliResult<Hyperparams> {
        Ok(Hyperparams::new(
            self.gamma,
            vec![self.alpha; dims],
            vec![self.beta; dims],
        )?)
    }
}

fn write_if_requested(path: &Option<PathBuf>, content: &str) -> CliResult<()> {
    if let Some(p) = path {
        fs::write(p, content)?;
    }
    Ok(())
}

fn bb_document(
    tree: &std::sync::Arc<brt::RoseTree<brt::ClusterStats>>,
    hyper: &Hyperparams,
    dataset: &Dataset,
) -> TreeDocument {
    build_document(
        tree,
        HyperDoc::BetaBernoulli {
            gamma: hyper.gamma,
            alpha: hyper.alpha.clone(),
            beta: hyper.beta.clone(),
        },
        &dataset.rows,
        dataset.n_cols(),
        dataset.row_labels.clone(),
    )
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Merge operators available to the greedy search.
    #[arg(long, value_enum, default_value_t = Mode::Rose)]
    pub mode: Mode,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    #[arg(long)]
    pub out_newick: Option<PathBuf>,
}

/// Greedy clustering: builds the tree, reports the marginal and the
/// partition count, and writes the requested exports.
pub fn cmd_cluster(args: &ClusterArgs) -> CliResult<()> {
    let dataset = args.data.load()?;
    let hyper = args.hyper.hyperparams(dataset.n_cols())?;
    let model = BetaBernoulli::from_hyper(dataset.to_binary()?, &hyper)?;
    let tree = build(&model, hyper.gamma, args.mode.into())?;

    println!("n_points: {}", tree.n_leaves());
    println!("dims: {}", dataset.n_cols());
    println!(
        "mode: {}",
        match args.mode {
            Mode::Rose => "rose",
            Mode::Binary => "binary",
        }
    );
    println!("gamma: {}", f17(hyper.gamma));
    println!("log_marginal: {}", f17(tree.log_marginal()));
    println!("n_partitions: {}", count_partitions(&tree));

    let doc = bb_document(&tree, &hyper, &dataset);
    write_if_requested(&args.out_json, &doc.to_json()?)?;
    write_if_requested(&args.out_newick, &format!("{}\n", export_newick(&doc)?))?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long, value_enum, default_value_t = Mode::Rose)]
    pub mode: Mode,
    /// Alternation rounds (tree build, then hyperparameter refit).
    #[arg(long, default_value_t = 10)]
    pub rounds: usize,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
    #[arg(long)]
    pub out_newick: Option<PathBuf>,
    /// Per-round score log as CSV.
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

/// Alternating fit: rebuild the tree and refit γ and the beta priors,
/// keeping the best-scoring pair seen.
pub fn cmd_optimize(args: &OptimizeArgs) -> CliResult<()> {
    let dataset = args.data.load()?;
    let hyper = args.hyper.hyperparams(dataset.n_cols())?;
    let model = BetaBernoulli::from_hyper(dataset.to_binary()?, &hyper)?;
    let outcome = em_alternation(
        model,
        hyper.gamma,
        args.mode.into(),
        args.rounds,
        1e-6,
        AscentOptions::default(),
    )?;

    println!("rounds_run: {}", outcome.rounds.len());
    for round in &outcome.rounds {
        println!(
            "round {}: build {} optimized {} best {}",
            round.round,
            f17(round.build_score),
            f17(round.optimized_score),
            f17(round.best_so_far)
        );
    }
    println!("gamma: {}", f17(outcome.gamma));
    println!("log_marginal: {}", f17(outcome.best_score));
    println!("n_partitions: {}", count_partitions(&outcome.tree));

    if let Some(path) = &args.out_csv {
        let mut csv = String::from("round,build_score,optimized_score,best_so_far\n");
        for round in &outcome.rounds {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                round.round,
                f17(round.build_score),
                f17(round.optimized_score),
                f17(round.best_so_far)
            ));
        }
        fs::write(path, csv)?;
    }

    let fitted = Hyperparams::new(
        outcome.gamma,
        outcome.model.alpha().to_vec(),
        outcome.model.beta().to_vec(),
    )?;
    let doc = bb_document(&outcome.tree, &fitted, &dataset);
    write_if_requested(&args.out_json, &doc.to_json()?)?;
    write_if_requested(&args.out_newick, &format!("{}\n", export_newick(&doc)?))?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long, default_value_t = 2)]
    pub n_min: usize,
    #[arg(long, default_value_t = 8)]
    pub n_max: usize,
    /// Datasets per size.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 64)]
    pub dims: usize,
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
}

/// Greedy-versus-optimal experiment: per-size mean excess bits per data
/// vector for the rose and binary-only builders against exhaustive search.
pub fn cmd_oracle(args: &OracleArgs) -> CliResult<()> {
    let cfg = ExperimentConfig {
        n_min: args.n_min,
        n_max: args.n_max,
        trials: args.trials,
        dims: args.dims,
        gamma: args.gamma,
        seed: args.seed,
    };
    let rows = optimality_experiment(&cfg)?;
    let header =
        "n,trials,delta_rose_mean,delta_rose_se,delta_binary_mean,delta_binary_se,rose_optimum_rate,binary_optimum_rate";
    println!("{header}");
    let mut csv = format!("{header}\n");
    for row in &rows {
        let line = format!(
            "{},{},{},{},{},{},{},{}",
            row.n,
            row.trials,
            f17(row.delta_rose_mean),
            f17(row.delta_rose_se),
            f17(row.delta_binary_mean),
            f17(row.delta_binary_se),
            f17(row.rose_optimum_rate),
            f17(row.binary_optimum_rate)
        );
        println!("{line}");
        csv.push_str(&line);
        csv.push('\n');
    }
    if let Some(path) = &args.out_csv {
        fs::write(path, csv)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct GpRegressArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0.5)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.3)]
    pub length_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    pub signal_variance: f64,
    #[arg(long, default_value_t = 0.1)]
    pub noise_variance: f64,
    /// Fit kernel parameters on the pooled data before building.
    #[arg(long, default_value_t = false)]
    pub optimize_kernel: bool,
    /// Input grid resolution.
    #[arg(long, default_value_t = 40)]
    pub grid_x: usize,
    /// Output grid resolution.
    #[arg(long, default_value_t = 80)]
    pub grid_y: usize,
    /// Output grid padding in standard deviations of y.
    #[arg(long, default_value_t = 3.0)]
    pub y_pad: f64,
    /// Density grid (x, y, density) rows.
    #[arg(long)]
    pub out_csv: Option<PathBuf>,
    /// Per-internal-node posterior mean curves.
    #[arg(long)]
    pub out_means: Option<PathBuf>,
    #[arg(long)]
    pub out_json: Option<PathBuf>,
}

/// Density regression with a mixture of GP experts: builds the tree over
/// (x, y) pairs and emits a predictive density grid plus per-node mean
/// curves.
pub fn cmd_gp_regress(args: &GpRegressArgs) -> CliResult<()> {
    let dataset = args.data.load()?;
    let (inputs, outputs) = dataset.to_xy()?;
    if inputs.first().map_or(0, |x| x.len()) != 1 {
        return Err(CliError::Usage(
            "density-grid output requires exactly one input column".into(),
        ));
    }
    let prior = InputPriorParams::from_data(&inputs)?;
    let mut kernel = KernelParams::new(args.length_scale, args.signal_variance, args.noise_variance)?;
    if args.optimize_kernel {
        kernel = optimize_kernel(&inputs, &outputs, kernel, AscentOptions::default())?;
    }
    let model = GpExperts::new(inputs.clone(), outputs.clone(), kernel, prior.clone())?;
    let single_gp = model.pooled_log_f()?;
    let tree = build(&model, args.gamma, BuildMode::Rose)?;

    println!("n_points: {}", tree.n_leaves());
    println!("gamma: {}", f17(args.gamma));
    println!("length_scale: {}", f17(kernel.length_scale));
    println!("signal_variance: {}", f17(kernel.signal_variance));
    println!("noise_variance: {}", f17(kernel.noise_variance));
    println!("log_marginal: {}", f17(tree.log_marginal()));
    println!("single_gp_log_marginal: {}", f17(single_gp));
    println!("n_partitions: {}", count_partitions(&tree));

    let xs: Vec<f64> = inputs.iter().map(|x| x[0]).collect();
    let (x_min, x_max) = xs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let y_mean = outputs.iter().sum::<f64>() / outputs.len() as f64;
    let y_sd = (outputs.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>()
        / outputs.len() as f64)
        .sqrt()
        .max(1e-6);
    let (y_min, y_max) = outputs
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &y| {
            (lo.min(y), hi.max(y))
        });
    let y_lo = y_min - args.y_pad * y_sd;
    let y_hi = y_max + args.y_pad * y_sd;

    let x_grid: Vec<f64> = (0..args.grid_x)
        .map(|i| x_min + (x_max - x_min) * i as f64 / (args.grid_x.max(2) - 1) as f64)
        .collect();
    let y_grid: Vec<f64> = (0..args.grid_y)
        .map(|j| y_lo + (y_hi - y_lo) * j as f64 / (args.grid_y.max(2) - 1) as f64)
        .collect();

    if let Some(path) = &args.out_csv {
        let mut csv = String::from("x,y,density\n");
        for &x in &x_grid {
            let density = predictive_density(&tree, &model, &[x], &y_grid)?;
            for (y, d) in y_grid.iter().zip(&density) {
                csv.push_str(&format!("{},{},{}\n", f17(x), f17(*y), f17(*d)));
            }
        }
        fs::write(path, csv)?;
    }

    if let Some(path) = &args.out_means {
        let mut csv = String::from("node_id,n_leaves,x,mean,variance\n");
        let mut nodes: Vec<(u64, usize, brt::gp::GpStats)> = Vec::new();
        tree.for_each_node(&mut |node| {
            if !node.is_leaf() {
                nodes.push((node.id(), node.n_leaves(), node.stats().clone()));
            }
        });
        for (id, n_leaves, stats) in &nodes {
            for &x in &x_grid {
                let (mean, var) = model.posterior_mean_var(stats, &[x])?;
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    id,
                    n_leaves,
                    f17(x),
                    f17(mean),
                    f17(var)
                ));
            }
        }
        fs::write(path, csv)?;
    }

    if let Some(path) = &args.out_json {
        let doc = build_document(
            &tree,
            HyperDoc::GpExperts {
                gamma: args.gamma,
                length_scale: kernel.length_scale,
                signal_variance: kernel.signal_variance,
                noise_variance: kernel.noise_variance,
                prior_mean: prior.mean_location.iter().cloned().collect(),
                prior_scale_count: prior.scale_count,
                prior_dof: prior.dof,
                prior_scale_matrix: prior.scale_matrix.iter().cloned().collect(),
            },
            &dataset.rows,
            dataset.n_cols(),
            dataset.row_labels.clone(),
        );
        fs::write(path, doc.to_json()?)?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct PartitionsArgs {
    /// Tree document produced by cluster/optimize/gp-regress.
    #[arg(long)]
    pub in_json: PathBuf,
    /// Also list the partitions (bounded by --limit).
    #[arg(long, default_value_t = false)]
    pub list: bool,
    #[arg(long, default_value_t = 10_000)]
    pub limit: u64,
}

/// Reports (and optionally lists) the tree-consistent partitions of a
/// stored tree document.
pub fn cmd_partitions(args: &PartitionsArgs) -> CliResult<()> {
    let text = fs::read_to_string(&args.in_json)?;
    let doc = TreeDocument::from_json(&text)?;
    let shape = doc.to_shape()?;

    // Topology-only scoring model; partition structure ignores the data.
    let dummy = BetaBernoulli::with_uniform_prior(vec![vec![0_u8]; doc.n_points])?;
    let tree = TreeFactory::new(&dummy, doc.hyperparameters.gamma())?.from_shape(&shape)?;
    let count = count_partitions(&tree);
    println!("n_points: {}", doc.n_points);
    println!("n_partitions: {count}");
    if args.list {
        if count > num_bigint::BigUint::from(args.limit) {
            return Err(CliError::Usage(format!(
                "{count} partitions exceed --limit {}",
                args.limit
            )));
        }
        for phi in enumerate_partitions(&tree) {
            println!("{phi}");
        }
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Number of data points (≤ 8; drawn from a uniformly random rose
    /// tree).
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = 16)]
    pub dims: usize,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Emit the handcrafted 48×12 three-block toy matrix instead.
    #[arg(long, default_value_t = false)]
    pub toy: bool,
    #[arg(long)]
    pub out_csv: PathBuf,
}

/// Draws a synthetic binary dataset from the generative model (or the
/// toy construction) and writes it as CSV.
pub fn cmd_sample(args: &SampleArgs) -> CliResult<()> {
    let rows: Vec<Vec<u8>> = if args.toy {
        toy_dataset(args.seed)
    } else {
        let mut rng = trial_rng(args.seed, 1, 0);
        let shape = random_rose_tree(&(0..args.n).collect::<Vec<_>>(), &mut rng)?;
        let hyper = args.hyper.hyperparams(args.dims)?;
        sample_dataset_with_rng(&shape, &hyper, args.dims, &mut rng)?
    };
    let dataset = Dataset {
        rows: rows
            .iter()
            .map(|r| r.iter().map(|&b| b as f64).collect())
            .collect(),
        row_labels: None,
        col_labels: None,
    };
    let mut buf = Vec::new();
    write_csv(&dataset, &mut buf)?;
    fs::write(&args.out_csv, &buf)?;
    println!("rows: {}", dataset.n_rows());
    println!("cols: {}", dataset.n_cols());
    println!("written: {}", args.out_csv.display());
    Ok(())
}

