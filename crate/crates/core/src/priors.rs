//! Structure priors: CRP partitions, class orderings and the collapsed
//! blockmodel graph score.
//!
//! Node pairs `(i, i)` never enter the block counts. Self-edges cannot
//! exist, so a diagonal factor would only add a constant `(1 - eta)` term
//! per node and skew the preference between class sizes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::graph::{Dag, Hyperparams};
use crate::math::{ln_beta, ln_factorial, ln_gamma, IMPOSSIBLE};

/// Which structure prior scores a graph.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorKind {
    Uniform,
    Block,
    OrderedBlock,
}

impl PriorKind {
    pub const ALL: [PriorKind; 3] = [PriorKind::Uniform, PriorKind::Block, PriorKind::OrderedBlock];

    pub fn as_str(self) -> &'static str {
        match self {
            PriorKind::Uniform => "uniform",
            PriorKind::Block => "block",
            PriorKind::OrderedBlock => "ordered-block",
        }
    }

    pub fn has_classes(self) -> bool {
        !matches!(self, PriorKind::Uniform)
    }

    pub fn is_ordered(self) -> bool {
        matches!(self, PriorKind::OrderedBlock)
    }
}

impl fmt::Display for PriorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PriorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(PriorKind::Uniform),
            "block" => Ok(PriorKind::Block),
            "ordered-block" | "ordered_block" => Ok(PriorKind::OrderedBlock),
            other => Err(invalid_arg!(
                "unknown prior '{other}' (expected uniform, block or ordered-block)"
            )),
        }
    }
}

/// Class assignment with canonical labels: labels appear in order of first
/// occurrence, so `z[0] == 0` and each new label is one past the largest
/// seen so far.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Partition {
    z: Vec<usize>,
    sizes: Vec<usize>,
}

impl Partition {
    /// Canonicalizes arbitrary labels.
    pub fn from_labels(labels: &[usize]) -> Self {
        Self::canonicalize(labels).0
    }

    /// Canonicalizes `labels` and returns the old-label to new-label map
    /// (`None` for labels that do not occur).
    pub fn canonicalize(labels: &[usize]) -> (Self, Vec<Option<usize>>) {
        let span = labels.iter().max().map_or(0, |&m| m + 1);
        let mut map = vec![None; span];
        let mut sizes = Vec::new();
        let z = labels
            .iter()
            .map(|&l| {
                let c = *map[l].get_or_insert_with(|| {
                    sizes.push(0);
                    sizes.len() - 1
                });
                sizes[c] += 1;
                c
            })
            .collect();
        (Partition { z, sizes }, map)
    }

    pub fn single_class(n: usize) -> Self {
        Self::from_labels(&vec![0; n])
    }

    pub fn is_canonical(labels: &[usize]) -> bool {
        let mut next = 0;
        for &l in labels {
            if l > next {
                return false;
            }
            if l == next {
                next += 1;
            }
        }
        true
    }

    pub fn labels(&self) -> &[usize] {
        &self.z
    }

    pub fn label(&self, i: usize) -> usize {
        self.z[i]
    }

    pub fn n(&self) -> usize {
        self.z.len()
    }

    /// Number of occupied classes.
    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
}

/// Ranks of the classes of a partition: `rank(a) < rank(b)` means class `a`
/// is causally earlier than class `b`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassOrdering {
    ranks: Vec<usize>,
}

impl ClassOrdering {
    pub fn new(ranks: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; ranks.len()];
        for &r in &ranks {
            if r >= ranks.len() || std::mem::replace(&mut seen[r], true) {
                return Err(invalid_arg!("ordering {ranks:?} is not a permutation"));
            }
        }
        Ok(ClassOrdering { ranks })
    }

    pub fn identity(k: usize) -> Self {
        ClassOrdering {
            ranks: (0..k).collect(),
        }
    }

    /// Builds the ordering from classes listed earliest first.
    pub fn from_sequence(classes: &[usize]) -> Result<Self> {
        let mut ranks = vec![usize::MAX; classes.len()];
        for (rank, &c) in classes.iter().enumerate() {
            if c >= classes.len() || ranks[c] != usize::MAX {
                return Err(invalid_arg!("sequence {classes:?} is not a permutation"));
            }
            ranks[c] = rank;
        }
        Ok(ClassOrdering { ranks })
    }

    pub fn ranks(&self) -> &[usize] {
        &self.ranks
    }

    pub fn rank(&self, class: usize) -> usize {
        self.ranks[class]
    }

    pub fn k(&self) -> usize {
        self.ranks.len()
    }

    /// Classes listed earliest first.
    pub fn sequence(&self) -> Vec<usize> {
        let mut seq = vec![0; self.ranks.len()];
        for (c, &r) in self.ranks.iter().enumerate() {
            seq[r] = c;
        }
        seq
    }

    /// Whether an edge from class `a` to class `b` is permitted.
    pub fn allows(&self, a: usize, b: usize) -> bool {
        self.ranks[a] < self.ranks[b]
    }
}

/// Present and absent edge counts per class pair, row-major `k * k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockCounts {
    k: usize,
    plus: Vec<u64>,
    minus: Vec<u64>,
}

impl BlockCounts {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n_plus(&self, a: usize, b: usize) -> u64 {
        self.plus[a * self.k + b]
    }

    pub fn n_minus(&self, a: usize, b: usize) -> u64 {
        self.minus[a * self.k + b]
    }
}

/// Edge tallies over ordered node pairs `(i, j)`, `i != j`, grouped by
/// class pair. `total` counts eligible pairs regardless of edges.
#[derive(Clone, Debug)]
pub(crate) struct PairTallies {
    pub k: usize,
    pub plus: Vec<u64>,
    pub total: Vec<u64>,
}

impl PairTallies {
    pub fn new(k: usize) -> Self {
        PairTallies {
            k,
            plus: vec![0; k * k],
            total: vec![0; k * k],
        }
    }

    pub fn from_graph(g: &Dag, labels: &[usize], k: usize) -> Self {
        let mut t = PairTallies::new(k);
        let n = g.n();
        for i in 0..n {
            let row = labels[i] * k;
            for j in 0..n {
                if i != j {
                    let cell = row + labels[j];
                    t.total[cell] += 1;
                    if g.has_edge(i, j) {
                        t.plus[cell] += 1;
                    }
                }
            }
        }
        t
    }

    /// Collapsed Beta-Bernoulli score of these tallies. With `ranks`, cells
    /// not strictly above the diagonal in rank space must be edge-free and
    /// contribute nothing.
    pub fn score(&self, ranks: Option<&[usize]>, h: &Hyperparams) -> f64 {
        let base = ln_beta(h.beta1, h.beta2);
        let mut s = 0.0;
        for a in 0..self.k {
            for b in 0..self.k {
                let cell = a * self.k + b;
                let (plus, total) = (self.plus[cell], self.total[cell]);
                if let Some(r) = ranks {
                    if r[a] >= r[b] {
                        if plus > 0 {
                            return IMPOSSIBLE;
                        }
                        continue;
                    }
                }
                if total > 0 {
                    s += cell_term(plus, total - plus, h) - base;
                }
            }
        }
        s
    }
}

/// `ln B(beta1 + plus, beta2 + minus)`.
#[inline]
pub(crate) fn cell_term(plus: u64, minus: u64, h: &Hyperparams) -> f64 {
    ln_beta(h.beta1 + plus as f64, h.beta2 + minus as f64)
}

fn check_shapes(g: &Dag, p: &Partition, ord: Option<&ClassOrdering>) -> Result<()> {
    if p.n() != g.n() {
        return Err(invalid_arg!(
            "partition covers {} nodes, graph has {}",
            p.n(),
            g.n()
        ));
    }
    if let Some(o) = ord {
        if o.k() != p.k() {
            return Err(invalid_arg!(
                "ordering ranks {} classes, partition has {}",
                o.k(),
                p.k()
            ));
        }
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(invalid_arg!("alpha must be positive, got {alpha}"))
    }
}

/// Log-probability of a partition under the Chinese restaurant process.
pub fn crp_log_prob(p: &Partition, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if p.n() == 0 {
        return Ok(0.0);
    }
    let k = p.k() as f64;
    let tables: f64 = p.sizes().iter().map(|&m| ln_factorial(m - 1)).sum();
    Ok(k * alpha.ln() + ln_gamma(alpha) - ln_gamma(p.n() as f64 + alpha) + tables)
}

/// Uniform prior over the `K!` orderings of the partition's classes.
pub fn ordering_log_prob(p: &Partition) -> f64 {
    -ln_factorial(p.k())
}

/// Counts over ordered node pairs. Without an ordering every class pair is
/// counted; with one, only pairs ranked strictly earlier to later.
pub fn block_counts(g: &Dag, p: &Partition, ord: Option<&ClassOrdering>) -> Result<BlockCounts> {
    check_shapes(g, p, ord)?;
    let t = PairTallies::from_graph(g, p.labels(), p.k());
    let k = p.k();
    let mut plus = t.plus;
    let mut minus: Vec<u64> = t.total.iter().zip(&plus).map(|(&tot, &pl)| tot - pl).collect();
    if let Some(o) = ord {
        for a in 0..k {
            for b in 0..k {
                if !o.allows(a, b) {
                    plus[a * k + b] = 0;
                    minus[a * k + b] = 0;
                }
            }
        }
    }
    Ok(BlockCounts { k, plus, minus })
}

/// Graph log-score with the class-pair edge probabilities integrated out.
/// Returns [`IMPOSSIBLE`] in ordered mode when an edge does not go from an
/// earlier to a strictly later class. In unordered mode the score ignores
/// the partition-dependent acyclicity normalizer.
pub fn collapsed_graph_log_score(
    g: &Dag,
    p: &Partition,
    ord: Option<&ClassOrdering>,
    h: &Hyperparams,
) -> Result<f64> {
    check_shapes(g, p, ord)?;
    if !g.is_acyclic() {
        return Err(invalid_arg!("graph is cyclic"));
    }
    let t = PairTallies::from_graph(g, p.labels(), p.k());
    Ok(t.score(ord.map(|o| o.ranks()), h))
}

/// The uniform baseline assigns every acyclic graph the same score.
pub fn uniform_graph_log_score(g: &Dag) -> Result<f64> {
    if !g.is_acyclic() {
        return Err(invalid_arg!("graph is cyclic"));
    }
    Ok(0.0)
}

/// Seating log-probabilities for one more customer: one entry per existing
/// class, then the new-class entry.
pub fn crp_seat_log_probs(p_minus_i: &Partition, alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    let denom = (p_minus_i.n() as f64 + alpha).ln();
    let mut out: Vec<f64> = p_minus_i
        .sizes()
        .iter()
        .map(|&m| (m as f64).ln() - denom)
        .collect();
    out.push(alpha.ln() - denom);
    Ok(out)
}

/// Log structure prior of `(g, p, ord)` under `kind`, without the data term.
pub fn structure_log_prior(
    g: &Dag,
    p: &Partition,
    ord: Option<&ClassOrdering>,
    h: &Hyperparams,
    kind: PriorKind,
) -> Result<f64> {
    match kind {
        PriorKind::Uniform => uniform_graph_log_score(g),
        PriorKind::Block => {
            Ok(crp_log_prob(p, h.alpha)? + collapsed_graph_log_score(g, p, None, h)?)
        }
        PriorKind::OrderedBlock => {
            let o = ord.ok_or_else(|| invalid_arg!("ordered prior needs a class ordering"))?;
            Ok(crp_log_prob(p, h.alpha)?
                + ordering_log_prob(p)
                + collapsed_graph_log_score(g, p, Some(o), h)?)
        }
    }
}
