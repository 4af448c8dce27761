//! Dirichlet-multinomial marginal likelihood of complete data.
//!
//! Each CPT row has a symmetric Dirichlet prior with pseudo-count `gamma`
//! per cell, giving the Cooper-Herskovits family score
//!
//! ```text
//! sum_j [ lnG(r*gamma) - lnG(r*gamma + N_j) + sum_k (lnG(gamma + N_jk) - lnG(gamma)) ]
//! ```
//!
//! Parent configurations without observations contribute exactly zero and
//! are skipped, so sparse and dense tallies give bit-identical sums.

use std::collections::HashMap;

use crate::error::{invalid_arg, Result};
use crate::graph::{config_count, config_index, mask_to_vec, Dag, Dataset, Hyperparams};
use crate::math::ln_gamma;
use crate::mcmc::SamplerState;
use crate::priors::{structure_log_prior, PriorKind};

/// Contingency table of a child against its joint parent configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FamilyCounts {
    pub child: usize,
    pub parents: Vec<usize>,
    pub child_arity: usize,
    /// Row-major `configs x child_arity`.
    pub counts: Vec<u64>,
}

impl FamilyCounts {
    pub fn n_configs(&self) -> usize {
        self.counts.len() / self.child_arity
    }

    pub fn row(&self, config: usize) -> &[u64] {
        &self.counts[config * self.child_arity..(config + 1) * self.child_arity]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

fn check_family(data: &Dataset, child: usize, parents: &[usize]) -> Result<()> {
    let n = data.n_vars();
    if child >= n {
        return Err(invalid_arg!("child {child} out of range for {n} variables"));
    }
    if parents.contains(&child) {
        return Err(invalid_arg!("node {child} listed as its own parent"));
    }
    if let Some(p) = parents.iter().find(|&&p| p >= n) {
        return Err(invalid_arg!("parent {p} out of range for {n} variables"));
    }
    Ok(())
}

fn sorted_parents(parents: &[usize]) -> Vec<usize> {
    let mut ps = parents.to_vec();
    ps.sort_unstable();
    ps.dedup();
    ps
}

/// Exact counts `N_jk`. Parents are taken in ascending order regardless of
/// the order given.
pub fn family_counts(data: &Dataset, child: usize, parents: &[usize]) -> Result<FamilyCounts> {
    check_family(data, child, parents)?;
    let parents = sorted_parents(parents);
    let arities = data.arities();
    let r = arities[child];
    let mut counts = vec![0u64; config_count(&parents, arities) * r];
    for row in data.rows() {
        counts[config_index(&parents, arities, row) * r + row[child]] += 1;
    }
    Ok(FamilyCounts {
        child,
        parents,
        child_arity: r,
        counts,
    })
}

fn check_gamma(gamma: f64) -> Result<()> {
    if gamma > 0.0 && gamma.is_finite() {
        Ok(())
    } else {
        Err(invalid_arg!("gamma must be positive, got {gamma}"))
    }
}

struct RowScorer {
    r: usize,
    gamma: f64,
    ln_g_rg: f64,
    ln_g_g: f64,
}

impl RowScorer {
    fn new(r: usize, gamma: f64) -> Self {
        RowScorer {
            r,
            gamma,
            ln_g_rg: ln_gamma(r as f64 * gamma),
            ln_g_g: ln_gamma(gamma),
        }
    }

    /// Score of one observed configuration; `cells` yields its nonzero
    /// `N_jk` in ascending `k`.
    fn score(&self, n_j: u64, cells: impl Iterator<Item = u64>) -> f64 {
        let mut s = self.ln_g_rg - ln_gamma(self.r as f64 * self.gamma + n_j as f64);
        for n_jk in cells {
            s += ln_gamma(self.gamma + n_jk as f64) - self.ln_g_g;
        }
        s
    }
}

/// Log marginal likelihood of one family.
pub fn family_log_marginal(fc: &FamilyCounts, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let scorer = RowScorer::new(fc.child_arity, gamma);
    let mut total = 0.0;
    for j in 0..fc.n_configs() {
        let row = fc.row(j);
        let n_j: u64 = row.iter().sum();
        if n_j > 0 {
            total += scorer.score(n_j, row.iter().copied().filter(|&c| c > 0));
        }
    }
    Ok(total)
}

/// Same value as `family_log_marginal(family_counts(..))` without
/// materializing the dense table.
fn family_log_marginal_sparse(data: &Dataset, child: usize, parents: &[usize], gamma: f64) -> f64 {
    let arities = data.arities();
    let r = arities[child];
    let mut keys: Vec<usize> = data
        .rows()
        .map(|row| config_index(parents, arities, row) * r + row[child])
        .collect();
    keys.sort_unstable();
    let scorer = RowScorer::new(r, gamma);
    let mut total = 0.0;
    let mut start = 0;
    while start < keys.len() {
        let config = keys[start] / r;
        let mut end = start;
        while end < keys.len() && keys[end] / r == config {
            end += 1;
        }
        let group = &keys[start..end];
        let cells = group.chunk_by(|a, b| a == b).map(|c| c.len() as u64);
        total += scorer.score(group.len() as u64, cells);
        start = end;
    }
    total
}

/// Memo of family log-marginals keyed by `(child, parent bitset)`.
///
/// A cache belongs to one dataset; it is cleared automatically if queried
/// with a different `gamma`.
#[derive(Clone, Debug, Default)]
pub struct FamilyCache {
    gamma_bits: Option<u64>,
    scores: HashMap<(usize, u64), f64>,
    hits: u64,
    misses: u64,
}

impl FamilyCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn hits(&self) -> u64 {
        self.hits
    }

    pub fn misses(&self) -> u64 {
        self.misses
    }

    /// Family score of `child` with the parents in `parent_mask`. Indices
    /// must already be validated against `data`.
    pub(crate) fn family(&mut self, data: &Dataset, gamma: f64, child: usize, parent_mask: u64) -> f64 {
        let bits = gamma.to_bits();
        if self.gamma_bits != Some(bits) {
            self.scores.clear();
            self.gamma_bits = Some(bits);
        }
        if let Some(&s) = self.scores.get(&(child, parent_mask)) {
            self.hits += 1;
            return s;
        }
        self.misses += 1;
        let s = family_log_marginal_sparse(data, child, &mask_to_vec(parent_mask), gamma);
        self.scores.insert((child, parent_mask), s);
        s
    }
}

pub(crate) fn check_data_matches(data: &Dataset, g: &Dag) -> Result<()> {
    if data.n_vars() != g.n() {
        return Err(invalid_arg!(
            "dataset has {} variables but graph has {} nodes",
            data.n_vars(),
            g.n()
        ));
    }
    Ok(())
}

/// Per-node family scores of `g`, in node order.
pub(crate) fn family_scores(data: &Dataset, g: &Dag, gamma: f64, cache: &mut FamilyCache) -> Result<Vec<f64>> {
    check_data_matches(data, g)?;
    check_gamma(gamma)?;
    Ok((0..g.n())
        .map(|j| cache.family(data, gamma, j, g.parent_mask(j)))
        .collect())
}

/// Log marginal likelihood of the data given the graph.
pub fn graph_log_marginal(data: &Dataset, g: &Dag, gamma: f64, cache: &mut FamilyCache) -> Result<f64> {
    if !g.is_acyclic() {
        return Err(invalid_arg!("graph is cyclic"));
    }
    Ok(family_scores(data, g, gamma, cache)?.iter().sum())
}

/// Structure prior plus data likelihood of a sampler state.
pub fn joint_log_score(
    state: &SamplerState,
    data: &Dataset,
    h: &Hyperparams,
    prior: PriorKind,
    cache: &mut FamilyCache,
) -> Result<f64> {
    let ord = if prior.is_ordered() {
        state.ordering()
    } else {
        None
    };
    let structure = structure_log_prior(state.dag(), state.partition(), ord, h, prior)?;
    Ok(structure + graph_log_marginal(data, state.dag(), h.gamma, cache)?)
}
