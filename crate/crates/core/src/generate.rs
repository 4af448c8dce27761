//! Forward generation: block-prior draws, synthetic benchmark networks,
//! CPT sampling and ancestral sampling of datasets.

use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::graph::{config_count, Dag, Dataset, Hyperparams};
use crate::graph::{default_names, BayesNet};
use crate::priors::{ClassOrdering, Partition};
use crate::seeds;

/// Rejection samplers give up after this many draws.
pub const DEFAULT_RETRY_CAP: usize = 1_000_000;

/// Retry cap for [`sample_sparse_dag`]. At 12 nodes, edge probability 0.3
/// and degree cap 4 only about 2.7e-6 of draws are accepted.
pub const SPARSE_RETRY_CAP: usize = 10_000_000;

/// Class-pair edge probabilities, indexed by class label.
#[derive(Clone, Debug, PartialEq)]
pub struct EtaMatrix {
    k: usize,
    eta: Vec<f64>,
}

impl EtaMatrix {
    pub fn new(k: usize, eta: Vec<f64>) -> Result<Self> {
        if eta.len() != k * k {
            return Err(invalid_arg!("eta needs {} entries, got {}", k * k, eta.len()));
        }
        if eta.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid_arg!("eta entries must lie in [0,1]"));
        }
        Ok(EtaMatrix { k, eta })
    }

    pub fn zeros(k: usize) -> Self {
        EtaMatrix {
            k,
            eta: vec![0.0; k * k],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.eta[a * self.k + b]
    }
}

/// Sequential CRP seating.
pub fn sample_partition<R: Rng + ?Sized>(n: usize, alpha: f64, rng: &mut R) -> Result<Partition> {
    if n == 0 {
        return Err(invalid_arg!("partition needs at least one node"));
    }
    if !(alpha > 0.0) {
        return Err(invalid_arg!("alpha must be positive"));
    }
    let mut labels = Vec::with_capacity(n);
    let mut sizes: Vec<usize> = Vec::new();
    for i in 0..n {
        let u = rng.random::<f64>() * (i as f64 + alpha);
        let mut acc = 0.0;
        let mut table = sizes.len();
        for (k, &m) in sizes.iter().enumerate() {
            acc += m as f64;
            if u < acc {
                table = k;
                break;
            }
        }
        if table == sizes.len() {
            sizes.push(0);
        }
        sizes[table] += 1;
        labels.push(table);
    }
    Ok(Partition::from_labels(&labels))
}

/// Draws each edge `i -> j` with probability `eta(z_i, z_j)`. Returns
/// `None` if the draw is cyclic.
pub fn sample_graph_given_eta<R: Rng + ?Sized>(p: &Partition, eta: &EtaMatrix, rng: &mut R) -> Option<Dag> {
    let n = p.n();
    let mut g = Dag::empty(n).ok()?;
    for i in 0..n {
        for j in 0..n {
            if i != j && rng.random::<f64>() < eta.get(p.label(i), p.label(j)) {
                g.flip(i, j);
            }
        }
    }
    g.is_acyclic().then_some(g)
}

/// Draws a graph from the (ordered) blockmodel given a partition.
///
/// In the unordered model, cyclic draws are rejected and both the edge
/// probabilities and the graph are redrawn, which makes the generator agree
/// with the collapsed score used during inference.
pub fn sample_block_dag<R: Rng + ?Sized>(
    p: &Partition,
    h: &Hyperparams,
    ordered: bool,
    rng: &mut R,
) -> Result<(Dag, EtaMatrix, Option<ClassOrdering>)> {
    sample_block_dag_capped(p, h, ordered, DEFAULT_RETRY_CAP, rng)
}

pub fn sample_block_dag_capped<R: Rng + ?Sized>(
    p: &Partition,
    h: &Hyperparams,
    ordered: bool,
    retry_cap: usize,
    rng: &mut R,
) -> Result<(Dag, EtaMatrix, Option<ClassOrdering>)> {
    h.validate()?;
    let k = p.k();
    let beta = Beta::new(h.beta1, h.beta2).map_err(|e| invalid_arg!("beta: {e}"))?;
    if ordered {
        let mut seq: Vec<usize> = (0..k).collect();
        seq.shuffle(rng);
        let ord = ClassOrdering::from_sequence(&seq)?;
        let mut eta = EtaMatrix::zeros(k);
        for a in 0..k {
            for b in 0..k {
                if ord.allows(a, b) {
                    eta.eta[a * k + b] = beta.sample(rng);
                }
            }
        }
        let g = sample_graph_given_eta(p, &eta, rng).expect("order-respecting graphs are acyclic");
        return Ok((g, eta, Some(ord)));
    }
    for _ in 0..retry_cap {
        let eta = EtaMatrix {
            k,
            eta: (0..k * k).map(|_| beta.sample(rng)).collect(),
        };
        if let Some(g) = sample_graph_given_eta(p, &eta, rng) {
            return Ok((g, eta, None));
        }
    }
    Err(Error::GenerationFailure(format!(
        "no acyclic blockmodel draw within {retry_cap} attempts"
    )))
}

/// Each ordered pair is an edge with probability `edge_prob`; draws that are
/// cyclic or have an in- or out-degree above `max_degree` are rejected.
pub fn sample_sparse_dag<R: Rng + ?Sized>(
    n: usize,
    edge_prob: f64,
    max_degree: usize,
    rng: &mut R,
) -> Result<Dag> {
    sample_sparse_dag_capped(n, edge_prob, max_degree, SPARSE_RETRY_CAP, rng)
}

pub fn sample_sparse_dag_capped<R: Rng + ?Sized>(
    n: usize,
    edge_prob: f64,
    max_degree: usize,
    retry_cap: usize,
    rng: &mut R,
) -> Result<Dag> {
    if !(0.0..=1.0).contains(&edge_prob) {
        return Err(invalid_arg!("edge probability {edge_prob} outside [0,1]"));
    }
    let empty = Dag::empty(n)?;
    if edge_prob == 0.0 {
        return Ok(empty);
    }
    'attempt: for _ in 0..retry_cap {
        let mut g = empty.clone();
        // Degree violations abort the draw early; the accepted
        // distribution is unchanged.
        for i in 0..n {
            for j in 0..n {
                if i != j && rng.random::<f64>() < edge_prob {
                    g.flip(i, j);
                    if g.out_degree(i) > max_degree || g.in_degree(j) > max_degree {
                        continue 'attempt;
                    }
                }
            }
        }
        if g.is_acyclic() {
            return Ok(g);
        }
    }
    Err(Error::GenerationFailure(format!(
        "no acyclic graph with degrees <= {max_degree} within {retry_cap} attempts"
    )))
}

fn dirichlet_row<R: Rng + ?Sized>(gamma: &Gamma<f64>, width: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let draws: Vec<f64> = (0..width).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = draws.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            return draws.into_iter().map(|x| x / sum).collect();
        }
    }
}

/// Independent symmetric Dirichlet draw for every CPT row.
pub fn sample_dirichlet_cpts<R: Rng + ?Sized>(
    g: &Dag,
    arities: &[usize],
    dirichlet_param: f64,
    rng: &mut R,
) -> Result<BayesNet> {
    if !(dirichlet_param > 0.0 && dirichlet_param.is_finite()) {
        return Err(invalid_arg!("Dirichlet parameter must be positive"));
    }
    if arities.len() != g.n() {
        return Err(invalid_arg!("{} arities for {} nodes", arities.len(), g.n()));
    }
    let gamma = Gamma::new(dirichlet_param, 1.0).map_err(|e| invalid_arg!("gamma: {e}"))?;
    let cpts = (0..g.n())
        .map(|i| {
            let rows = config_count(&g.parent_set(i), arities);
            (0..rows).map(|_| dirichlet_row(&gamma, arities[i], rng)).collect()
        })
        .collect();
    BayesNet::new(g.clone(), arities.to_vec(), cpts)
}

/// Noisy-OR tables for binary variables:
/// `P(child = 1) = 1 - (1 - leak) * prod over active parents of (1 - w)`,
/// with one activation weight `w` per edge drawn uniformly from
/// `activation`. Root nodes get `P(1) = leak`.
pub fn noisy_or_cpts<R: Rng + ?Sized>(
    g: &Dag,
    arities: &[usize],
    leak: f64,
    activation: (f64, f64),
    rng: &mut R,
) -> Result<BayesNet> {
    if arities.len() != g.n() {
        return Err(invalid_arg!("{} arities for {} nodes", arities.len(), g.n()));
    }
    if let Some(v) = arities.iter().position(|&a| a != 2) {
        return Err(invalid_arg!("noisy-OR needs binary variables; variable {v} has arity {}", arities[v]));
    }
    let (lo, hi) = activation;
    if !(0.0..=1.0).contains(&leak) || !(0.0 <= lo && lo <= hi && hi <= 1.0) {
        return Err(invalid_arg!("noisy-OR parameters outside [0,1]"));
    }
    let cpts = (0..g.n())
        .map(|i| {
            let parents = g.parent_set(i);
            let weights: Vec<f64> = parents.iter().map(|_| rng.random_range(lo..=hi)).collect();
            noisy_or_table(&weights, leak)
        })
        .collect();
    BayesNet::new(g.clone(), arities.to_vec(), cpts)
}

/// Noisy-OR table over binary parents in mixed-radix order.
pub fn noisy_or_table(weights: &[f64], leak: f64) -> Vec<Vec<f64>> {
    (0..1usize << weights.len())
        .map(|config| {
            let inhibit: f64 = weights
                .iter()
                .enumerate()
                .filter(|(bit, _)| config >> bit & 1 == 1)
                .map(|(_, w)| 1.0 - w)
                .product();
            let on = 1.0 - (1.0 - leak) * inhibit;
            vec![1.0 - on, on]
        })
        .collect()
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (k, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last = k;
        }
        acc += p;
        if u < acc {
            return k;
        }
    }
    last
}

/// `m` i.i.d. rows by ancestral sampling.
pub fn forward_sample<R: Rng + ?Sized>(bn: &BayesNet, m: usize, rng: &mut R) -> Dataset {
    let order = bn.dag().topological_order().expect("network graph is acyclic");
    let n = bn.n();
    let rows = (0..m)
        .map(|_| {
            let mut row = vec![0; n];
            for &v in &order {
                row[v] = sample_categorical(bn.conditional(v, &row), rng);
            }
            row
        })
        .collect();
    Dataset::new(default_names(n), bn.arities().to_vec(), rows).expect("sampled rows respect arities")
}

/// The synthetic network families used in the experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum BenchmarkKind {
    /// Feed-forward layers; each pair in adjacent layers is an edge with
    /// probability `edge_prob`.
    Layered12 {
        layers: usize,
        width: usize,
        edge_prob: f64,
    },
    SparseRandom {
        n: usize,
        edge_prob: f64,
        max_degree: usize,
    },
    /// Bipartite disease -> symptom network with noisy-OR tables.
    QmrLike {
        diseases: usize,
        symptoms: usize,
        max_parents: usize,
        leak: f64,
        activation: (f64, f64),
        prevalence: (f64, f64),
    },
    /// Regulators with a few edges among themselves, each target driven by
    /// one or two regulators.
    Regulatory {
        regulators: usize,
        targets: usize,
        within_edges: usize,
        max_parents: usize,
    },
    /// Risk factors -> diseases -> symptoms.
    HeparSubset {
        risk_factors: usize,
        diseases: usize,
        symptoms: usize,
    },
}

impl BenchmarkKind {
    pub const NAMES: [&'static str; 5] = ["layered12", "sparse_random", "qmr_like", "regulatory", "hepar_subset"];

    /// Default parameters for a named benchmark.
    pub fn by_name(name: &str) -> Result<Self> {
        Ok(match name {
            "layered12" => BenchmarkKind::Layered12 {
                layers: 3,
                width: 4,
                edge_prob: 0.6,
            },
            "sparse_random" => BenchmarkKind::SparseRandom {
                n: 12,
                edge_prob: 0.3,
                max_degree: 4,
            },
            "qmr_like" => BenchmarkKind::QmrLike {
                diseases: 6,
                symptoms: 14,
                max_parents: 3,
                leak: 0.01,
                activation: (0.4, 0.9),
                prevalence: (0.2, 0.5),
            },
            "regulatory" => BenchmarkKind::Regulatory {
                regulators: 4,
                targets: 12,
                within_edges: 2,
                max_parents: 2,
            },
            "hepar_subset" => BenchmarkKind::HeparSubset {
                risk_factors: 6,
                diseases: 5,
                symptoms: 10,
            },
            other => {
                return Err(invalid_arg!(
                    "unknown benchmark '{other}' (expected one of {})",
                    Self::NAMES.join(", ")
                ))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            BenchmarkKind::Layered12 { .. } => "layered12",
            BenchmarkKind::SparseRandom { .. } => "sparse_random",
            BenchmarkKind::QmrLike { .. } => "qmr_like",
            BenchmarkKind::Regulatory { .. } => "regulatory",
            BenchmarkKind::HeparSubset { .. } => "hepar_subset",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            BenchmarkKind::Layered12 { layers, width, edge_prob } => {
                layers >= 1 && width >= 1 && (0.0..=1.0).contains(&edge_prob)
            }
            BenchmarkKind::SparseRandom { n, edge_prob, .. } => n >= 1 && (0.0..=1.0).contains(&edge_prob),
            BenchmarkKind::QmrLike {
                diseases,
                symptoms,
                max_parents,
                prevalence: (lo, hi),
                ..
            } => diseases >= 1 && symptoms >= 1 && max_parents >= 1 && 0.0 <= lo && lo <= hi && hi <= 1.0,
            BenchmarkKind::Regulatory {
                regulators,
                targets,
                within_edges,
                max_parents,
            } => {
                regulators >= 1
                    && targets >= 1
                    && max_parents >= 1
                    && within_edges <= regulators * (regulators - 1) / 2
            }
            BenchmarkKind::HeparSubset {
                risk_factors,
                diseases,
                symptoms,
            } => risk_factors >= 1 && diseases >= 1 && symptoms >= 1,
        };
        if ok {
            Ok(())
        } else {
            Err(invalid_arg!("invalid parameters for benchmark {}", self.name()))
        }
    }
}

impl FromStr for BenchmarkKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BenchmarkKind::by_name(s)
    }
}

impl fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub kind: BenchmarkKind,
    pub seed: u64,
    /// Dirichlet parameter for the CPT draws of non-noisy-OR benchmarks.
    pub dirichlet: f64,
}

impl BenchmarkSpec {
    pub fn named(name: &str, seed: u64) -> Result<Self> {
        Ok(BenchmarkSpec {
            kind: BenchmarkKind::by_name(name)?,
            seed,
            dirichlet: 0.5,
        })
    }
}

/// A ground-truth network with its intended class structure.
#[derive(Clone, Debug)]
pub struct Benchmark {
    pub name: String,
    pub names: Vec<String>,
    pub net: BayesNet,
    pub classes: Partition,
    pub ordering: ClassOrdering,
}

impl Benchmark {
    /// Forward-samples `m` rows carrying this benchmark's variable names.
    pub fn sample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Dataset {
        let d = forward_sample(&self.net, m, rng);
        let rows = d.rows().map(|r| r.to_vec()).collect();
        Dataset::new(self.names.clone(), d.arities().to_vec(), rows).expect("names match network")
    }
}

fn tier_names(tiers: &[(&str, usize)]) -> Vec<String> {
    tiers
        .iter()
        .flat_map(|&(prefix, count)| (0..count).map(move |i| format!("{prefix}{i}")))
        .collect()
}

fn tier_labels(sizes: &[usize]) -> Vec<usize> {
    sizes
        .iter()
        .enumerate()
        .flat_map(|(t, &s)| std::iter::repeat_n(t, s))
        .collect()
}

/// Each node of `children` gets between 1 and `max_parents` distinct
/// parents drawn from `pool`.
fn attach_parents<R: Rng + ?Sized>(
    edges: &mut Vec<(usize, usize)>,
    pool: &[usize],
    children: std::ops::Range<usize>,
    max_parents: usize,
    rng: &mut R,
) {
    for child in children {
        let count = rng.random_range(1..=max_parents.min(pool.len()));
        let mut chosen: Vec<usize> = pool.choose_multiple(rng, count).copied().collect();
        chosen.sort_unstable();
        edges.extend(chosen.into_iter().map(|p| (p, child)));
    }
}

/// Builds a benchmark network. Deterministic in `spec`.
pub fn build_benchmark(spec: &BenchmarkSpec) -> Result<Benchmark> {
    spec.kind.validate()?;
    let mut rng = seeds::stream(spec.seed, "generation", 0);
    let rng = &mut rng;
    let dirichlet = spec.dirichlet;
    let name = spec.kind.name().to_string();
    let bench = match spec.kind {
        BenchmarkKind::Layered12 { layers, width, edge_prob } => {
            let n = layers * width;
            let mut edges = Vec::new();
            for layer in 0..layers.saturating_sub(1) {
                for a in 0..width {
                    for b in 0..width {
                        if rng.random::<f64>() < edge_prob {
                            edges.push((layer * width + a, (layer + 1) * width + b));
                        }
                    }
                }
            }
            let g = Dag::from_edges(n, &edges)?;
            let names = (0..n).map(|i| format!("L{}_{}", i / width, i % width)).collect();
            Benchmark {
                name,
                names,
                net: sample_dirichlet_cpts(&g, &vec![2; n], dirichlet, rng)?,
                classes: Partition::from_labels(&tier_labels(&vec![width; layers])),
                ordering: ClassOrdering::identity(layers),
            }
        }
        BenchmarkKind::SparseRandom {
            n,
            edge_prob,
            max_degree,
        } => {
            let g = sample_sparse_dag(n, edge_prob, max_degree, rng)?;
            Benchmark {
                name,
                names: default_names(n),
                net: sample_dirichlet_cpts(&g, &vec![2; n], dirichlet, rng)?,
                classes: Partition::single_class(n),
                ordering: ClassOrdering::identity(1),
            }
        }
        BenchmarkKind::QmrLike {
            diseases,
            symptoms,
            max_parents,
            leak,
            activation,
            prevalence,
        } => {
            let n = diseases + symptoms;
            let pool: Vec<usize> = (0..diseases).collect();
            let mut edges = Vec::new();
            attach_parents(&mut edges, &pool, diseases..n, max_parents, rng);
            let g = Dag::from_edges(n, &edges)?;
            let noisy = noisy_or_cpts(&g, &vec![2; n], leak, activation, rng)?;
            // Diseases are roots; give them a prevalence instead of the leak.
            let mut cpts = noisy.cpts().to_vec();
            for table in cpts.iter_mut().take(diseases) {
                let on = rng.random_range(prevalence.0..=prevalence.1);
                *table = vec![vec![1.0 - on, on]];
            }
            Benchmark {
                name,
                names: tier_names(&[("D", diseases), ("S", symptoms)]),
                net: BayesNet::new(g, vec![2; n], cpts)?,
                classes: Partition::from_labels(&tier_labels(&[diseases, symptoms])),
                ordering: ClassOrdering::identity(2),
            }
        }
        BenchmarkKind::Regulatory {
            regulators,
            targets,
            within_edges,
            max_parents,
        } => {
            let n = regulators + targets;
            let mut pairs: Vec<(usize, usize)> = (0..regulators)
                .flat_map(|a| (a + 1..regulators).map(move |b| (a, b)))
                .collect();
            pairs.shuffle(rng);
            let mut edges: Vec<(usize, usize)> = pairs.into_iter().take(within_edges).collect();
            edges.sort_unstable();
            let pool: Vec<usize> = (0..regulators).collect();
            attach_parents(&mut edges, &pool, regulators..n, max_parents, rng);
            let g = Dag::from_edges(n, &edges)?;
            Benchmark {
                name,
                names: tier_names(&[("R", regulators), ("T", targets)]),
                net: sample_dirichlet_cpts(&g, &vec![2; n], dirichlet, rng)?,
                classes: Partition::from_labels(&tier_labels(&[regulators, targets])),
                ordering: ClassOrdering::identity(2),
            }
        }
        BenchmarkKind::HeparSubset {
            risk_factors,
            diseases,
            symptoms,
        } => {
            let n = risk_factors + diseases + symptoms;
            let risks: Vec<usize> = (0..risk_factors).collect();
            let dis: Vec<usize> = (risk_factors..risk_factors + diseases).collect();
            let mut edges = Vec::new();
            attach_parents(&mut edges, &risks, risk_factors..risk_factors + diseases, 2, rng);
            attach_parents(&mut edges, &dis, risk_factors + diseases..n, 2, rng);
            let g = Dag::from_edges(n, &edges)?;
            Benchmark {
                name,
                names: tier_names(&[("risk", risk_factors), ("disease", diseases), ("symptom", symptoms)]),
                net: sample_dirichlet_cpts(&g, &vec![2; n], dirichlet, rng)?,
                classes: Partition::from_labels(&tier_labels(&[risk_factors, diseases, symptoms])),
                ordering: ClassOrdering::identity(3),
            }
        }
    };
    Ok(bench)
}
