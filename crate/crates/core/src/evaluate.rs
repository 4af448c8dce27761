//! Posterior summaries from a model pool, posterior predictive and KL
//! estimation, and exact enumeration for tiny problems.

use std::collections::HashMap;

use itertools::Itertools;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::generate::forward_sample;
use crate::graph::{config_count, config_index, mask_to_vec, BayesNet, Dag, Dataset, Hyperparams};
use crate::likelihood::{joint_log_score, FamilyCache};
use crate::math::{log_sum_exp, softmax, IMPOSSIBLE};
use crate::mcmc::{ModelPool, SamplerState};
use crate::priors::{ClassOrdering, Partition, PriorKind};

pub type Matrix = Vec<Vec<f64>>;

/// Softmax of the pool's joint log-scores, in [`ModelPool::states`] order.
pub fn pool_weights(pool: &ModelPool) -> Result<Vec<f64>> {
    if pool.is_empty() {
        return Err(invalid_arg!("model pool is empty"));
    }
    let scores: Vec<f64> = pool.states().iter().map(|s| s.log_score()).collect();
    Ok(softmax(&scores))
}

fn weighted_matrix(pool: &ModelPool, indicator: impl Fn(&SamplerState, usize, usize) -> bool) -> Result<Matrix> {
    let weights = pool_weights(pool)?;
    let n = pool.n_nodes();
    let mut m = vec![vec![0.0; n]; n];
    for (state, w) in pool.states().into_iter().zip(weights) {
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                if indicator(state, i, j) {
                    *cell += w;
                }
            }
        }
    }
    Ok(m)
}

/// Posterior probability of each edge `i -> j` under selective model
/// averaging.
pub fn edge_marginals(pool: &ModelPool) -> Result<Matrix> {
    weighted_matrix(pool, |s, i, j| s.dag().has_edge(i, j))
}

/// Posterior probability that two nodes share a class. All ones under the
/// uniform prior.
pub fn coclass_marginals(pool: &ModelPool) -> Result<Matrix> {
    weighted_matrix(pool, |s, i, j| s.partition().label(i) == s.partition().label(j))
}

/// Weighted distribution of the number of classes, indexed by class count.
pub fn class_count_distribution(pool: &ModelPool) -> Result<Vec<f64>> {
    let weights = pool_weights(pool)?;
    let mut dist = vec![0.0; pool.n_nodes() + 1];
    for (s, w) in pool.states().into_iter().zip(weights) {
        dist[s.partition().k()] += w;
    }
    Ok(dist)
}

/// Most probable class count (smallest on ties).
pub fn modal_class_count(pool: &ModelPool) -> Result<usize> {
    let dist = class_count_distribution(pool)?;
    Ok(dist
        .iter()
        .enumerate()
        .fold((0, -1.0), |best, (k, &p)| if p > best.1 { (k, p) } else { best })
        .0)
}

/// Expected number of edge indicators that differ from `truth`.
pub fn expected_hamming(edge_marginals: &Matrix, truth: &Dag) -> f64 {
    let n = truth.n();
    (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| {
            let p = edge_marginals[i][j];
            if truth.has_edge(i, j) {
                1.0 - p
            } else {
                p
            }
        })
        .sum()
}

/// Expected fraction of node pairs `i < j` whose same-class status agrees
/// with `truth`.
pub fn coclass_accuracy(coclass: &Matrix, truth: &Partition) -> f64 {
    let n = truth.n();
    if n < 2 {
        return 1.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let p = coclass[i][j];
            total += if truth.label(i) == truth.label(j) { p } else { 1.0 - p };
        }
    }
    total / (n * (n - 1) / 2) as f64
}

/// Train-set counts of one family, keyed by parent configuration.
struct FamilyTable {
    parents: Vec<usize>,
    counts: HashMap<usize, Vec<u64>>,
}

impl FamilyTable {
    fn new(train: &Dataset, child: usize, mask: u64) -> Self {
        let parents = mask_to_vec(mask);
        let r = train.arities()[child];
        let mut counts: HashMap<usize, Vec<u64>> = HashMap::new();
        for row in train.rows() {
            let c = config_index(&parents, train.arities(), row);
            counts.entry(c).or_insert_with(|| vec![0; r])[row[child]] += 1;
        }
        FamilyTable { parents, counts }
    }

    /// Dirichlet posterior mean `(N_jk + gamma) / (N_j + r * gamma)`.
    fn prob(&self, arities: &[usize], child: usize, row: &[usize], gamma: f64) -> f64 {
        let r = arities[child] as f64;
        match self.counts.get(&config_index(&self.parents, arities, row)) {
            Some(c) => {
                let n_j: u64 = c.iter().sum();
                (c[row[child]] as f64 + gamma) / (n_j as f64 + r * gamma)
            }
            None => 1.0 / r,
        }
    }
}

/// Model-averaged posterior predictive over a pool.
pub struct Predictive {
    weights: Vec<f64>,
    parent_masks: Vec<Vec<u64>>,
    tables: HashMap<(usize, u64), FamilyTable>,
    arities: Vec<usize>,
    gamma: f64,
}

impl Predictive {
    pub fn new(pool: &ModelPool, train: &Dataset, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(invalid_arg!("gamma must be positive"));
        }
        if train.n_vars() != pool.n_nodes() {
            return Err(invalid_arg!(
                "training data has {} variables, pool has {} nodes",
                train.n_vars(),
                pool.n_nodes()
            ));
        }
        let weights = pool_weights(pool)?;
        let mut tables = HashMap::new();
        let mut parent_masks = Vec::with_capacity(weights.len());
        for state in pool.states() {
            let g = state.dag();
            let masks: Vec<u64> = (0..g.n()).map(|j| g.parent_mask(j)).collect();
            for (j, &m) in masks.iter().enumerate() {
                tables.entry((j, m)).or_insert_with(|| FamilyTable::new(train, j, m));
            }
            parent_masks.push(masks);
        }
        Ok(Predictive {
            weights,
            parent_masks,
            tables,
            arities: train.arities().to_vec(),
            gamma,
        })
    }

    /// Mixture weights; identical to [`pool_weights`].
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn log_prob(&self, row: &[usize]) -> Result<f64> {
        if row.len() != self.arities.len() || row.iter().zip(&self.arities).any(|(&x, &a)| x >= a) {
            return Err(invalid_arg!("observation does not match the variable arities"));
        }
        let terms: Vec<f64> = self
            .weights
            .iter()
            .zip(&self.parent_masks)
            .map(|(&w, masks)| {
                let lp: f64 = masks
                    .iter()
                    .enumerate()
                    .map(|(j, &m)| self.tables[&(j, m)].prob(&self.arities, j, row, self.gamma).ln())
                    .sum();
                w.ln() + lp
            })
            .collect();
        Ok(log_sum_exp(&terms))
    }
}

pub fn predictive_log_prob(pool: &ModelPool, train: &Dataset, row: &[usize], gamma: f64) -> Result<f64> {
    Predictive::new(pool, train, gamma)?.log_prob(row)
}

/// Network whose CPT rows are the Dirichlet posterior means given `train`.
pub fn smoothed_network(g: &Dag, train: &Dataset, gamma: f64) -> Result<BayesNet> {
    if train.n_vars() != g.n() {
        return Err(invalid_arg!("data and graph sizes differ"));
    }
    let arities = train.arities();
    let cpts = (0..g.n())
        .map(|j| {
            let table = FamilyTable::new(train, j, g.parent_mask(j));
            let parents = g.parent_set(j);
            (0..config_count(&parents, arities))
                .map(|c| {
                    // any row realizing configuration c
                    let mut row = vec![0; g.n()];
                    let mut rest = c;
                    for &p in &parents {
                        row[p] = rest % arities[p];
                        rest /= arities[p];
                    }
                    (0..arities[j])
                        .map(|k| {
                            row[j] = k;
                            table.prob(arities, j, &row, gamma)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    BayesNet::new(g.clone(), arities.to_vec(), cpts)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KlEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub n_mc: usize,
}

/// Monte Carlo estimate of `KL(truth || posterior predictive)` from `n_mc`
/// fresh draws of the true network.
pub fn kl_estimate<R: Rng + ?Sized>(
    pool: &ModelPool,
    truth: &BayesNet,
    train: &Dataset,
    n_mc: usize,
    gamma: f64,
    rng: &mut R,
) -> Result<KlEstimate> {
    if n_mc < 1 {
        return Err(invalid_arg!("n_mc must be at least 1"));
    }
    if truth.arities() != train.arities() {
        return Err(invalid_arg!("true network and training data disagree on arities"));
    }
    let predictive = Predictive::new(pool, train, gamma)?;
    let sample = forward_sample(truth, n_mc, rng);
    let diffs = sample
        .rows()
        .map(|row| Ok(truth.log_prob(row) - predictive.log_prob(row)?))
        .collect::<Result<Vec<f64>>>()?;
    let n = n_mc as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let stderr = if n_mc > 1 {
        let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(KlEstimate {
        estimate: mean,
        stderr,
        n_mc,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSummary {
    pub edge_marginals: Matrix,
    pub coclass_marginals: Matrix,
    pub pool_weights: Vec<f64>,
    pub kl: Option<KlEstimate>,
}

impl PosteriorSummary {
    pub fn from_pool(pool: &ModelPool) -> Result<Self> {
        Ok(PosteriorSummary {
            edge_marginals: edge_marginals(pool)?,
            coclass_marginals: coclass_marginals(pool)?,
            pool_weights: pool_weights(pool)?,
            kl: None,
        })
    }
}

/// Largest problem [`exact_posterior_small`] accepts.
pub const EXACT_MAX_NODES: usize = 4;

/// Every DAG on `n` nodes, in increasing order of the edge-indicator bitmask
/// over off-diagonal pairs (row-major).
pub fn enumerate_dags(n: usize) -> Result<Vec<Dag>> {
    if n > EXACT_MAX_NODES {
        return Err(Error::SizeLimit(format!(
            "DAG enumeration supports at most {EXACT_MAX_NODES} nodes, got {n}"
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let empty = Dag::empty(n)?;
    let mut out = Vec::new();
    for mask in 0u64..1 << pairs.len() {
        let mut g = empty.clone();
        for (bit, &(i, j)) in pairs.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                g.flip(i, j);
            }
        }
        if g.is_acyclic() {
            out.push(g);
        }
    }
    Ok(out)
}

/// Every set partition of `n` items as canonical restricted-growth strings.
pub fn enumerate_partitions(n: usize) -> Vec<Partition> {
    fn extend(prefix: &mut Vec<usize>, n: usize, next: usize, out: &mut Vec<Partition>) {
        if prefix.len() == n {
            out.push(Partition::from_labels(prefix));
            return;
        }
        for label in 0..=next {
            prefix.push(label);
            extend(prefix, n, next.max(label + 1), out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        out.push(Partition::from_labels(&[]));
    } else {
        extend(&mut Vec::with_capacity(n), n, 0, &mut out);
    }
    out
}

#[derive(Clone, Debug)]
pub struct ExactState {
    pub dag: Dag,
    pub partition: Partition,
    pub ordering: Option<ClassOrdering>,
    pub log_score: f64,
    pub prob: f64,
}

/// Fully normalized posterior over every state of a tiny model.
#[derive(Clone, Debug)]
pub struct ExactPosterior {
    pub prior: PriorKind,
    pub states: Vec<ExactState>,
    pub log_normalizer: f64,
    pub edge_marginals: Matrix,
    pub coclass_marginals: Matrix,
}

impl ExactPosterior {
    pub fn best(&self) -> &ExactState {
        self.states
            .iter()
            .max_by(|a, b| a.log_score.total_cmp(&b.log_score))
            .expect("posterior has at least one state")
    }

    pub fn total_prob(&self) -> f64 {
        self.states.iter().map(|s| s.prob).sum()
    }
}

/// Enumerates every graph (and for block priors every partition and
/// ordering), scores each with the joint and normalizes.
pub fn exact_posterior_small(data: &Dataset, h: &Hyperparams, prior: PriorKind) -> Result<ExactPosterior> {
    let n = data.n_vars();
    if n > EXACT_MAX_NODES {
        return Err(Error::SizeLimit(format!(
            "exact enumeration supports at most {EXACT_MAX_NODES} variables, got {n}"
        )));
    }
    h.validate()?;
    let dags = enumerate_dags(n)?;
    let latent: Vec<(Partition, Option<ClassOrdering>)> = match prior {
        PriorKind::Uniform => vec![(Partition::single_class(n), None)],
        PriorKind::Block => enumerate_partitions(n).into_iter().map(|p| (p, None)).collect(),
        PriorKind::OrderedBlock => enumerate_partitions(n)
            .into_iter()
            .flat_map(|p| {
                (0..p.k()).permutations(p.k()).map(move |seq| {
                    let o = ClassOrdering::from_sequence(&seq).expect("permutation");
                    (p.clone(), Some(o))
                })
            })
            .collect(),
    };
    let mut cache = FamilyCache::new();
    let mut states = Vec::new();
    for (p, ord) in &latent {
        for g in &dags {
            let state = SamplerState::from_parts(g.clone(), p.clone(), ord.clone(), 0.0)?;
            let score = joint_log_score(&state, data, h, prior, &mut cache)?;
            if score != IMPOSSIBLE {
                states.push(ExactState {
                    dag: g.clone(),
                    partition: p.clone(),
                    ordering: ord.clone(),
                    log_score: score,
                    prob: 0.0,
                });
            }
        }
    }
    let scores: Vec<f64> = states.iter().map(|s| s.log_score).collect();
    let log_normalizer = log_sum_exp(&scores);
    let mut edges = vec![vec![0.0; n]; n];
    let mut coclass = vec![vec![0.0; n]; n];
    for s in &mut states {
        s.prob = (s.log_score - log_normalizer).exp();
        for i in 0..n {
            for j in 0..n {
                if s.dag.has_edge(i, j) {
                    edges[i][j] += s.prob;
                }
                if s.partition.label(i) == s.partition.label(j) {
                    coclass[i][j] += s.prob;
                }
            }
        }
    }
    Ok(ExactPosterior {
        prior,
        states,
        log_normalizer,
        edge_marginals: edges,
        coclass_marginals: coclass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool_of(scores_and_edges: &[(f64, Vec<(usize, usize)>, Vec<usize>)]) -> ModelPool {
        let mut pool = ModelPool::new(3, PriorKind::Block, 10);
        for (score, edges, labels) in scores_and_edges {
            let g = Dag::from_edges(3, edges).unwrap();
            let s = SamplerState::from_parts(g, Partition::from_labels(labels), None, *score).unwrap();
            assert!(pool.offer(&s));
        }
        pool
    }

    #[test]
    fn weights_examples() {
        let single = pool_of(&[(-4.0, vec![], vec![0, 0, 0])]);
        assert_eq!(pool_weights(&single).unwrap(), vec![1.0]);
        let even = pool_of(&[(-1.0, vec![], vec![0, 0, 0]), (-1.0, vec![(0, 1)], vec![0, 0, 0])]);
        assert_eq!(pool_weights(&even).unwrap(), vec![0.5, 0.5]);
        let skew = pool_of(&[(3f64.ln(), vec![], vec![0, 0, 0]), (0.0, vec![(0, 1)], vec![0, 0, 0])]);
        let w = pool_weights(&skew).unwrap();
        assert!((w[0] - 0.75).abs() < 1e-15 && (w[1] - 0.25).abs() < 1e-15);
        assert!(pool_weights(&ModelPool::new(3, PriorKind::Uniform, 3)).is_err());
    }

    #[test]
    fn marginal_examples() {
        let single = pool_of(&[(-2.0, vec![(0, 1), (1, 2)], vec![0, 1, 1])]);
        let e = edge_marginals(&single).unwrap();
        assert_eq!(e[0][1], 1.0);
        assert_eq!(e[1][0], 0.0);
        let c = coclass_marginals(&single).unwrap();
        assert_eq!(c[1][2], 1.0);
        assert_eq!(c[0][1], 0.0);
        assert_eq!(c[0][0], 1.0);

        let split = pool_of(&[
            (-1.0, vec![(0, 1)], vec![0, 0, 0]),
            (-1.0, vec![], vec![0, 1, 1]),
        ]);
        assert_eq!(edge_marginals(&split).unwrap()[0][1], 0.5);
        assert_eq!(coclass_marginals(&split).unwrap()[0][1], 0.5);
    }

    #[test]
    fn empty_graph_predictive_without_data() {
        let pool = pool_of(&[(0.0, vec![], vec![0, 0, 0])]);
        let train = Dataset::with_arities(vec![2, 2, 2], vec![]).unwrap();
        let lp = predictive_log_prob(&pool, &train, &[1, 0, 1], 0.5).unwrap();
        assert!((lp - 3.0 * 0.5f64.ln()).abs() < 1e-12);
        assert!(predictive_log_prob(&pool, &train, &[2, 0, 1], 0.5).is_err());
    }

    #[test]
    fn two_state_mixture_by_hand() {
        // 2 nodes: state A empty graph, state B 0->1, weights 3/4 and 1/4.
        let mut pool = ModelPool::new(2, PriorKind::Uniform, 5);
        let a = SamplerState::from_parts(Dag::empty(2).unwrap(), Partition::single_class(2), None, 3f64.ln()).unwrap();
        let b = SamplerState::from_parts(Dag::from_edges(2, &[(0, 1)]).unwrap(), Partition::single_class(2), None, 0.0)
            .unwrap();
        pool.offer(&a);
        pool.offer(&b);
        let train = Dataset::with_arities(vec![2, 2], vec![vec![1, 1], vec![1, 1], vec![0, 1]]).unwrap();
        let g: f64 = 0.5;
        // node 0: P(1) = (2+g)/(3+2g)
        let p0 = (2.0 + g) / (3.0 + 2.0 * g);
        // A: node 1 P(1) = (3+g)/(3+2g)
        let pa = p0 * (3.0 + g) / (3.0 + 2.0 * g);
        // B: node 1 | x0=1: (2+g)/(2+2g)
        let pb = p0 * (2.0 + g) / (2.0 + 2.0 * g);
        let expected = (0.75 * pa + 0.25 * pb).ln();
        let lp = predictive_log_prob(&pool, &train, &[1, 1], g).unwrap();
        assert!((lp - expected).abs() < 1e-12);
    }

    #[test]
    fn accuracy_metrics() {
        let truth = Dag::from_edges(2, &[(0, 1)]).unwrap();
        assert_eq!(expected_hamming(&vec![vec![0.0, 1.0], vec![0.0, 0.0]], &truth), 0.0);
        assert_eq!(expected_hamming(&vec![vec![0.0, 0.5], vec![0.5, 0.0]], &truth), 1.0);
        let p = Partition::from_labels(&[0, 0, 1]);
        let perfect = vec![vec![1.0, 1.0, 0.0], vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert_eq!(coclass_accuracy(&perfect, &p), 1.0);
        let ones = vec![vec![1.0; 3]; 3];
        assert!((coclass_accuracy(&ones, &p) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn enumeration_counts() {
        let counts: Vec<usize> = (1..=4).map(|n| enumerate_dags(n).unwrap().len()).collect();
        assert_eq!(counts, vec![1, 3, 25, 543]);
        let bell: Vec<usize> = (1..=5).map(|n| enumerate_partitions(n).len()).collect();
        assert_eq!(bell, vec![1, 2, 5, 15, 52]);
        assert!(matches!(enumerate_dags(5), Err(Error::SizeLimit(_))));
    }

    #[test]
    fn exact_posterior_examples() {
        let h = Hyperparams::default();
        let one = Dataset::with_arities(vec![2], vec![vec![0]]).unwrap();
        let post = exact_posterior_small(&one, &h, PriorKind::Uniform).unwrap();
        assert_eq!(post.states.len(), 1);
        assert!((post.states[0].prob - 1.0).abs() < 1e-15);

        let empty = Dataset::with_arities(vec![2, 2], vec![]).unwrap();
        let post = exact_posterior_small(&empty, &h, PriorKind::Uniform).unwrap();
        assert_eq!(post.states.len(), 3);
        for s in &post.states {
            assert!((s.prob - 1.0 / 3.0).abs() < 1e-12);
        }

        let five = Dataset::with_arities(vec![2; 5], vec![]).unwrap();
        assert!(matches!(
            exact_posterior_small(&five, &h, PriorKind::Uniform),
            Err(Error::SizeLimit(_))
        ));
    }

    #[test]
    fn smoothed_network_matches_predictive() {
        let train = Dataset::with_arities(vec![2, 3], vec![vec![1, 2], vec![0, 1], vec![1, 2]]).unwrap();
        let g = Dag::from_edges(2, &[(0, 1)]).unwrap();
        let net = smoothed_network(&g, &train, 0.5).unwrap();
        let mut pool = ModelPool::new(2, PriorKind::Uniform, 1);
        pool.offer(&SamplerState::from_parts(g, Partition::single_class(2), None, 0.0).unwrap());
        for row in [[0, 0], [1, 2], [0, 2]] {
            let a = net.log_prob(&row);
            let b = predictive_log_prob(&pool, &train, &row, 0.5).unwrap();
            assert!((a - b).abs() < 1e-12);
        }
    }
}
