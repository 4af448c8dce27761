use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use blocknet::experiment::{self, EvalPaths, ExperimentConfig, DEFAULT_N_MC, DEFAULT_TEST_SIZE};
use blocknet::generate::{BenchmarkKind, BenchmarkSpec};
use blocknet::{Anneal, ChainConfig, Hyperparams, PriorKind};

/// Bayesian network structure learning with block-structured graph priors.
#[derive(Parser)]
#[command(name = "blocknet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a benchmark network and sample training and test sets.
    Generate {
        #[command(flatten)]
        bench: BenchArgs,
        /// Training-set sizes, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "75")]
        sizes: Vec<usize>,
        /// Rows in test.csv.
        #[arg(long, default_value_t = DEFAULT_TEST_SIZE)]
        test_size: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Search for structures and write results_<prior>.json.
    Learn {
        /// Dataset CSV (header of names, integer rows).
        #[arg(long)]
        data: PathBuf,
        /// Structure prior.
        #[arg(long, default_value = "block")]
        prior: PriorKind,
        #[command(flatten)]
        hyper: HyperArgs,
        #[command(flatten)]
        search: SearchArgs,
        /// Seed of the search chains.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare learned results with the generating network.
    Eval {
        /// Results JSON written by `learn`.
        #[arg(long)]
        results: PathBuf,
        /// Network JSON with CPTs (and optionally classes).
        #[arg(long)]
        network: PathBuf,
        /// Training CSV the results were learned from.
        #[arg(long)]
        train: PathBuf,
        /// Optional test CSV for the held-out log-likelihood.
        #[arg(long)]
        test: Option<PathBuf>,
        /// Monte Carlo draws for the KL estimate.
        #[arg(long, default_value_t = DEFAULT_N_MC)]
        n_mc: usize,
        /// Seed of the evaluation stream.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate, learn and evaluate every (sample size, prior) cell.
    Experiment {
        #[command(flatten)]
        bench: BenchArgs,
        /// Training-set sizes, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "75")]
        sizes: Vec<usize>,
        /// Priors to compare, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "uniform,block,ordered-block")]
        priors: Vec<PriorKind>,
        #[command(flatten)]
        hyper: HyperArgs,
        #[command(flatten)]
        search: SearchArgs,
        /// Rows in test.csv.
        #[arg(long, default_value_t = DEFAULT_TEST_SIZE)]
        test_size: usize,
        /// Monte Carlo draws for the KL estimate.
        #[arg(long, default_value_t = DEFAULT_N_MC)]
        n_mc: usize,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct BenchArgs {
    /// layered12, sparse_random, qmr_like, regulatory or hepar_subset.
    #[arg(long, default_value = "layered12")]
    benchmark: BenchmarkKind,
    /// Dirichlet parameter for sampled CPTs.
    #[arg(long, default_value_t = 0.5)]
    dirichlet: f64,
    /// Master seed; also seeds the search in `experiment`.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl BenchArgs {
    fn spec(&self) -> BenchmarkSpec {
        BenchmarkSpec {
            kind: self.benchmark.clone(),
            seed: self.seed,
            dirichlet: self.dirichlet,
        }
    }
}

#[derive(Args)]
struct HyperArgs {
    /// CRP concentration.
    #[arg(long, default_value_t = 0.5)]
    alpha: f64,
    /// Beta prior on class-pair edge probabilities, first parameter.
    #[arg(long, default_value_t = 1.0)]
    beta1: f64,
    /// Beta prior, second parameter.
    #[arg(long, default_value_t = 1.0)]
    beta2: f64,
    /// Symmetric Dirichlet parameter of the CPT prior.
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
}

impl HyperArgs {
    fn get(&self) -> blocknet::Result<Hyperparams> {
        Hyperparams::new(self.alpha, self.beta1, self.beta2, self.gamma)
    }
}

#[derive(Args)]
struct SearchArgs {
    /// Sweeps per restart.
    #[arg(long, default_value_t = 2000)]
    iters: usize,
    /// Independent restarts.
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    /// Distinct top states kept for model averaging.
    #[arg(long, default_value_t = 100)]
    top_k: usize,
    /// Anneal linearly from this temperature down to 1.
    #[arg(long, value_name = "T0")]
    anneal: Option<f64>,
}

impl SearchArgs {
    fn config(&self, prior: PriorKind, seed: u64) -> ChainConfig {
        ChainConfig {
            prior,
            iterations: self.iters,
            restarts: self.restarts,
            top_k: self.top_k,
            seed,
            anneal: self.anneal.map(|t| Anneal { start_temperature: t }),
        }
    }
}

fn run(cli: Cli) -> blocknet::Result<()> {
    match cli.command {
        Command::Generate { bench, sizes, test_size, out } => {
            experiment::generate_files(&bench.spec(), &sizes, test_size, &out)?;
        }
        Command::Learn { data, prior, hyper, search, seed, out } => {
            let path = experiment::learn_files(&data, &search.config(prior, seed), &hyper.get()?, &out)?;
            println!("{}", path.display());
        }
        Command::Eval { results, network, train, test, n_mc, seed, out } => {
            let paths = EvalPaths {
                results: &results,
                network: &network,
                train: &train,
                test: test.as_deref(),
                out: &out,
            };
            let report = experiment::eval_files(&paths, n_mc, seed)?;
            println!("kl {:.6} +- {:.6}", report.kl.estimate, report.kl.stderr);
        }
        Command::Experiment { bench, sizes, priors, hyper, search, test_size, n_mc, out } => {
            let cfg = ExperimentConfig {
                benchmark: bench.spec(),
                sample_sizes: sizes,
                priors,
                chain: search.config(PriorKind::Block, bench.seed),
                hyper: hyper.get()?,
                out,
                test_size,
                n_mc,
            };
            let outcome = experiment::run_experiment(&cfg)?;
            for (m, prior, msg) in &outcome.failures {
                eprintln!("cell M={m} prior={prior} failed: {msg}");
            }
        }
    }
    Ok(())
}

fn error_line(kind: &str, message: &str) {
    let line = serde_json::json!({ "kind": kind, "message": message });
    eprintln!("error: {line}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            error_line("usage", &e.kind().to_string());
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error_line(e.kind(), &e.to_string());
            ExitCode::FAILURE
        }
    }
}
