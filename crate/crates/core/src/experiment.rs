//! The generate / learn / eval / experiment workflows behind the command
//! line tool, as library functions over files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::evaluate::{
    coclass_accuracy, coclass_marginals, edge_marginals, expected_hamming, kl_estimate, Predictive,
};
use crate::generate::{build_benchmark, Benchmark, BenchmarkSpec};
use crate::graph::{BayesNet, Dataset, Hyperparams};
use crate::io::{self, finite_or_none, LearnResults, NetworkFile, Report};
use crate::likelihood::FamilyCache;
use crate::mcmc::{run_search, ChainConfig, ModelPool, SamplerState};
use crate::priors::{ClassOrdering, Partition, PriorKind};
use crate::seeds;

/// Monte Carlo sample size for KL estimates.
pub const DEFAULT_N_MC: usize = 5000;
pub const DEFAULT_TEST_SIZE: usize = 1000;

pub fn train_file_name(m: usize) -> String {
    format!("train_{m}.csv")
}

pub fn results_file_name(prior: PriorKind) -> String {
    format!("results_{prior}.json")
}

/// Training set of size `m`. Each size has its own stream, so adding a
/// size to an experiment leaves the other sets unchanged.
pub fn training_set(bench: &Benchmark, seed: u64, m: usize) -> Dataset {
    bench.sample(m, &mut seeds::stream(seed, "train", m as u64))
}

pub fn test_set(bench: &Benchmark, seed: u64, size: usize) -> Dataset {
    bench.sample(size, &mut seeds::stream(seed, "test", 0))
}

/// Writes `network.json`, one `train_<M>.csv` per size and `test.csv`.
pub fn generate_files(spec: &BenchmarkSpec, sizes: &[usize], test_size: usize, out: &Path) -> Result<Benchmark> {
    let bench = build_benchmark(spec)?;
    io::ensure_dir(out)?;
    io::write_network(&out.join("network.json"), &NetworkFile::from_benchmark(&bench))?;
    for &m in sizes {
        io::write_dataset(&out.join(train_file_name(m)), &training_set(&bench, spec.seed, m))?;
    }
    io::write_dataset(&out.join("test.csv"), &test_set(&bench, spec.seed, test_size))?;
    Ok(bench)
}

/// Runs the search and packages the pool as a results file.
pub fn learn(data: &Dataset, cfg: &ChainConfig, h: &Hyperparams) -> Result<(ModelPool, LearnResults)> {
    h.validate()?;
    let pool = run_search(cfg, data, h)?;
    let results = LearnResults {
        prior: cfg.prior,
        hyperparams: *h,
        variables: data.names().to_vec(),
        edge_marginals: edge_marginals(&pool)?,
        coclass_marginals: coclass_marginals(&pool)?,
        kl: None,
        top_models: LearnResults::top_models(&pool),
    };
    Ok((pool, results))
}

/// Reads `data`, learns, and writes `results_<prior>.json` into `out`.
pub fn learn_files(data: &Path, cfg: &ChainConfig, h: &Hyperparams, out: &Path) -> Result<PathBuf> {
    let data = io::read_dataset(data, None)?;
    let (_, results) = learn(&data, cfg, h)?;
    let path = out.join(results_file_name(cfg.prior));
    io::write_json(&path, &results)?;
    Ok(path)
}

/// Ground truth used to evaluate a learning run.
#[derive(Clone, Debug)]
pub struct Truth {
    pub net: BayesNet,
    pub classes: Option<Partition>,
    pub ordering: Option<ClassOrdering>,
}

impl Truth {
    pub fn from_benchmark(b: &Benchmark) -> Self {
        Truth {
            net: b.net.clone(),
            classes: Some(b.classes.clone()),
            ordering: Some(b.ordering.clone()),
        }
    }

    pub fn from_file(file: &NetworkFile) -> Result<Self> {
        Ok(Truth {
            net: file.bayes_net()?,
            classes: file.partition()?,
            ordering: file.class_ordering()?,
        })
    }

    /// Joint score of the true structure under `prior`, or `None` if the
    /// prior needs classes or an ordering the truth does not provide.
    pub fn score(&self, train: &Dataset, h: &Hyperparams, prior: PriorKind) -> Result<Option<f64>> {
        let n = self.net.n();
        let classes = match (&self.classes, prior.has_classes()) {
            (Some(p), _) => p.clone(),
            (None, false) => Partition::single_class(n),
            (None, true) => return Ok(None),
        };
        let ordering = match &self.ordering {
            Some(o) if o.k() == classes.k() => Some(o.clone()),
            _ if prior.is_ordered() => return Ok(None),
            _ => None,
        };
        let state = SamplerState::new(
            self.net.dag().clone(),
            classes,
            ordering,
            train,
            h,
            prior,
            &mut FamilyCache::new(),
        )?;
        Ok(finite_or_none(state.log_score()))
    }
}

/// Everything needed to evaluate one learned pool.
pub struct EvalInput<'a> {
    pub pool: &'a ModelPool,
    pub truth: &'a Truth,
    pub train: &'a Dataset,
    pub test: Option<&'a Dataset>,
    pub h: &'a Hyperparams,
    pub n_mc: usize,
    pub seed: u64,
}

/// Evaluation report plus the marginal matrices it was computed from.
pub struct CellEvaluation {
    pub report: Report,
    pub edge_marginals: Vec<Vec<f64>>,
    pub coclass_marginals: Vec<Vec<f64>>,
}

/// KL against the truth, expected edge Hamming distance, co-class
/// accuracy, mean test log-likelihood and the best and true scores.
pub fn evaluate_cell(input: &EvalInput) -> Result<CellEvaluation> {
    let EvalInput { pool, truth, train, test, h, n_mc, seed } = *input;
    let n = pool.n_nodes();
    if truth.net.n() != n || train.n_vars() != n {
        return Err(Error::InvalidInput(format!(
            "results have {n} variables, network {} and training data {}",
            truth.net.n(),
            train.n_vars()
        )));
    }
    if truth.net.arities() != train.arities() {
        return Err(Error::InvalidInput("network and training data disagree on arities".to_string()));
    }
    let edges = edge_marginals(pool)?;
    let coclass = coclass_marginals(pool)?;
    let mut rng = seeds::stream(seed, "evaluation", 0);
    let kl = kl_estimate(pool, &truth.net, train, n_mc, h.gamma, &mut rng)?;
    let test_log_likelihood = match test {
        Some(t) if t.n_rows() > 0 => {
            if t.n_vars() != n {
                return Err(Error::InvalidInput(format!("test data has {} variables, expected {n}", t.n_vars())));
            }
            let predictive = Predictive::new(pool, train, h.gamma)?;
            let total = t.rows().map(|r| predictive.log_prob(r)).sum::<Result<f64>>()?;
            Some(total / t.n_rows() as f64)
        }
        _ => None,
    };
    let report = Report {
        prior: pool.prior(),
        kl,
        expected_hamming: expected_hamming(&edges, truth.net.dag()),
        coclass_accuracy: truth.classes.as_ref().map(|p| coclass_accuracy(&coclass, p)),
        test_log_likelihood,
        best_score: pool.best().and_then(|s| finite_or_none(s.log_score())),
        truth_score: truth.score(train, h, pool.prior())?,
    };
    Ok(CellEvaluation {
        report,
        edge_marginals: edges,
        coclass_marginals: coclass,
    })
}

/// Paths for [`eval_files`].
pub struct EvalPaths<'a> {
    pub results: &'a Path,
    pub network: &'a Path,
    pub train: &'a Path,
    pub test: Option<&'a Path>,
    pub out: &'a Path,
}

/// Writes `report.json`, `edges.ppm` and `coclass.ppm` into `paths.out`.
pub fn eval_files(paths: &EvalPaths, n_mc: usize, seed: u64) -> Result<Report> {
    let results: LearnResults = io::read_json(paths.results)?;
    let file = io::read_network(paths.network)?;
    let n = file.variables.len();
    if results.variables.len() != n {
        return Err(Error::InvalidInput(format!(
            "results have {} variables, network has {n}",
            results.variables.len()
        )));
    }
    let truth = Truth::from_file(&file)?;
    let arities = file.arities();
    let train = io::read_dataset(paths.train, Some(&arities))?;
    let test = paths.test.map(|p| io::read_dataset(p, Some(&arities))).transpose()?;
    let pool = results.pool()?;
    let eval = evaluate_cell(&EvalInput {
        pool: &pool,
        truth: &truth,
        train: &train,
        test: test.as_ref(),
        h: &results.hyperparams,
        n_mc,
        seed,
    })?;
    write_eval_outputs(paths.out, &eval)?;
    Ok(eval.report)
}

fn write_eval_outputs(out: &Path, eval: &CellEvaluation) -> Result<()> {
    io::write_json(&out.join("report.json"), &eval.report)?;
    io::write_heatmap(&out.join("edges.ppm"), &eval.edge_marginals)?;
    io::write_heatmap(&out.join("coclass.ppm"), &eval.coclass_marginals)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub benchmark: BenchmarkSpec,
    pub sample_sizes: Vec<usize>,
    pub priors: Vec<PriorKind>,
    /// Search settings; `prior` is overridden per cell.
    pub chain: ChainConfig,
    pub hyper: Hyperparams,
    pub out: PathBuf,
    pub test_size: usize,
    pub n_mc: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sample_sizes.is_empty() {
            return Err(invalid_arg!("at least one sample size is required"));
        }
        if self.sample_sizes.contains(&0) {
            return Err(invalid_arg!("sample sizes must be positive"));
        }
        if self.priors.is_empty() {
            return Err(invalid_arg!("at least one prior is required"));
        }
        self.chain.validate()?;
        self.hyper.validate()?;
        self.benchmark.kind.validate()
    }
}

/// One line of `summary.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub benchmark: String,
    #[serde(rename = "M")]
    pub m: usize,
    pub prior: PriorKind,
    pub kl: f64,
    pub kl_stderr: f64,
    pub hamming: f64,
    pub coclass_acc: Option<f64>,
    pub best_score: Option<f64>,
    pub truth_score: Option<f64>,
}

pub const SUMMARY_HEADER: [&str; 9] = [
    "benchmark",
    "M",
    "prior",
    "kl",
    "kl_stderr",
    "hamming",
    "coclass_acc",
    "best_score",
    "truth_score",
];

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub rows: Vec<SummaryRow>,
    /// `(M, prior, message)` for each cell that failed.
    pub failures: Vec<(usize, PriorKind, String)>,
}

fn run_cell(
    cfg: &ExperimentConfig,
    bench: &Benchmark,
    truth: &Truth,
    train: &Dataset,
    test: &Dataset,
    m: usize,
    prior: PriorKind,
) -> Result<SummaryRow> {
    let dir = cfg.out.join(format!("M{m}")).join(prior.as_str());
    let chain = ChainConfig {
        prior,
        ..cfg.chain.clone()
    };
    let (pool, results) = learn(train, &chain, &cfg.hyper)?;
    io::write_json(&dir.join(results_file_name(prior)), &results)?;
    let eval = evaluate_cell(&EvalInput {
        pool: &pool,
        truth,
        train,
        test: Some(test),
        h: &cfg.hyper,
        n_mc: cfg.n_mc,
        seed: cfg.chain.seed,
    })?;
    write_eval_outputs(&dir, &eval)?;
    let r = eval.report;
    Ok(SummaryRow {
        benchmark: bench.name.clone(),
        m,
        prior,
        kl: r.kl.estimate,
        kl_stderr: r.kl.stderr,
        hamming: r.expected_hamming,
        coclass_acc: r.coclass_accuracy,
        best_score: r.best_score,
        truth_score: r.truth_score,
    })
}

/// Generates the benchmark once, then learns and evaluates every
/// (sample size, prior) cell. Failed cells are listed in `errors.txt` and
/// left out of `summary.csv`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let bench = generate_files(&cfg.benchmark, &cfg.sample_sizes, cfg.test_size, &cfg.out)?;
    let truth = Truth::from_benchmark(&bench);
    let test = test_set(&bench, cfg.benchmark.seed, cfg.test_size);
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &m in &cfg.sample_sizes {
        let train = training_set(&bench, cfg.benchmark.seed, m);
        for &prior in &cfg.priors {
            match run_cell(cfg, &bench, &truth, &train, &test, m, prior) {
                Ok(row) => rows.push(row),
                Err(e) => failures.push((m, prior, e.to_string())),
            }
        }
    }
    io::write_csv_rows(&cfg.out.join("summary.csv"), &rows, &SUMMARY_HEADER)?;
    let errors_path = cfg.out.join("errors.txt");
    if failures.is_empty() {
        if errors_path.exists() {
            fs::remove_file(&errors_path).map_err(|e| Error::io(&errors_path, e))?;
        }
    } else {
        let mut text = String::new();
        for (m, prior, msg) in &failures {
            let _ = writeln!(text, "M={m} prior={prior}: {msg}");
        }
        fs::write(&errors_path, text).map_err(|e| Error::io(&errors_path, e))?;
    }
    Ok(ExperimentOutcome { rows, failures })
}
