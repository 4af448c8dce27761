//! Collapsed MCMC over graphs, class assignments and class orderings.
//!
//! One iteration is a Gibbs sweep over every ordered node pair (in a fresh
//! random order) followed by one class-assignment move per node (also in
//! random order; skipped under the uniform prior). Each edge move compares
//! only the current graph and the graph with that edge toggled; candidates
//! that would be cyclic or violate the class ordering get zero mass.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::graph::{Dag, Dataset, Hyperparams};
use crate::likelihood::{check_data_matches, family_scores, joint_log_score, FamilyCache};
use crate::math::{ln_factorial, sample_log_weights, IMPOSSIBLE};
use crate::priors::{cell_term, crp_log_prob, ClassOrdering, PairTallies, Partition, PriorKind};
use crate::seeds::{self, StreamRng};

/// How often (in moves) the incrementally maintained score is replaced by a
/// from-scratch recomputation.
const RESYNC_INTERVAL: u32 = 100;
const RESYNC_TOLERANCE: f64 = 1e-9;

/// A point of the chain: graph, partition, optional class ordering and its
/// joint log-score.
#[derive(Clone, Debug)]
pub struct SamplerState {
    g: Dag,
    p: Partition,
    ord: Option<ClassOrdering>,
    log_score: f64,
}

impl SamplerState {
    /// Scores `(g, p, ord)` from scratch under `prior`.
    pub fn new(
        g: Dag,
        p: Partition,
        ord: Option<ClassOrdering>,
        data: &Dataset,
        h: &Hyperparams,
        prior: PriorKind,
        cache: &mut FamilyCache,
    ) -> Result<Self> {
        if prior.is_ordered() && ord.is_none() {
            return Err(invalid_arg!("ordered prior needs a class ordering"));
        }
        let ord = if prior.is_ordered() { ord } else { None };
        let mut state = SamplerState {
            g,
            p,
            ord,
            log_score: 0.0,
        };
        state.log_score = joint_log_score(&state, data, h, prior, cache)?;
        Ok(state)
    }

    /// Builds a state with a caller-supplied score, e.g. when loading a
    /// saved pool.
    pub fn from_parts(g: Dag, p: Partition, ord: Option<ClassOrdering>, log_score: f64) -> Result<Self> {
        if !g.is_acyclic() {
            return Err(invalid_arg!("state graph is cyclic"));
        }
        if p.n() != g.n() {
            return Err(invalid_arg!("partition size does not match graph"));
        }
        if let Some(o) = &ord {
            if o.k() != p.k() {
                return Err(invalid_arg!("ordering size does not match partition"));
            }
        }
        Ok(SamplerState { g, p, ord, log_score })
    }

    pub fn dag(&self) -> &Dag {
        &self.g
    }

    pub fn partition(&self) -> &Partition {
        &self.p
    }

    pub fn ordering(&self) -> Option<&ClassOrdering> {
        self.ord.as_ref()
    }

    pub fn log_score(&self) -> f64 {
        self.log_score
    }

    fn key(&self) -> StateKey {
        (self.g.clone(), self.p.clone(), self.ord.clone())
    }
}

type StateKey = (Dag, Partition, Option<ClassOrdering>);

/// Linear temperature schedule from `start_temperature` down to 1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anneal {
    pub start_temperature: f64,
}

impl Anneal {
    pub fn temperature(&self, iteration: usize, iterations: usize) -> f64 {
        if iterations <= 1 {
            return 1.0;
        }
        let frac = iteration as f64 / (iterations - 1) as f64;
        self.start_temperature + (1.0 - self.start_temperature) * frac
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub prior: PriorKind,
    /// Full sweeps per chain.
    pub iterations: usize,
    pub restarts: usize,
    pub top_k: usize,
    pub seed: u64,
    pub anneal: Option<Anneal>,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            prior: PriorKind::Block,
            iterations: 2000,
            restarts: 10,
            top_k: 100,
            seed: 0,
            anneal: None,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.restarts < 1 {
            return Err(invalid_arg!("restarts must be at least 1"));
        }
        if self.top_k < 1 {
            return Err(invalid_arg!("top_k must be at least 1"));
        }
        if let Some(a) = self.anneal {
            if !(a.start_temperature > 0.0 && a.start_temperature.is_finite()) {
                return Err(invalid_arg!("anneal temperature must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct PoolEntry {
    state: SamplerState,
    seq: u64,
}

/// The highest-scoring distinct states seen, at most `capacity` of them.
/// Among equal scores the earlier insertion wins.
#[derive(Clone, Debug)]
pub struct ModelPool {
    n: usize,
    prior: PriorKind,
    capacity: usize,
    entries: Vec<PoolEntry>,
    keys: HashSet<StateKey>,
    next_seq: u64,
    /// Index of the entry evicted next (lowest score, latest among ties).
    weakest: Option<usize>,
}

impl ModelPool {
    pub fn new(n: usize, prior: PriorKind, capacity: usize) -> Self {
        ModelPool {
            n,
            prior,
            capacity,
            entries: Vec::new(),
            keys: HashSet::new(),
            next_seq: 0,
            weakest: None,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n
    }

    pub fn prior(&self) -> PriorKind {
        self.prior
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Offers a state; returns whether it was inserted.
    pub fn offer(&mut self, state: &SamplerState) -> bool {
        let score = state.log_score;
        if score == IMPOSSIBLE || score.is_nan() {
            return false;
        }
        let full = self.entries.len() >= self.capacity;
        if full {
            let w = &self.entries[self.weakest.expect("full pool has a weakest entry")];
            if score <= w.state.log_score {
                return false;
            }
        }
        let key = state.key();
        if self.keys.contains(&key) {
            return false;
        }
        let entry = PoolEntry {
            state: state.clone(),
            seq: self.next_seq,
        };
        self.next_seq += 1;
        if full {
            let w = self.weakest.unwrap();
            let old = std::mem::replace(&mut self.entries[w], entry);
            self.keys.remove(&old.state.key());
        } else {
            self.entries.push(entry);
        }
        self.keys.insert(key);
        self.refresh_weakest();
        true
    }

    fn refresh_weakest(&mut self) {
        self.weakest = self
            .entries
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                a.state
                    .log_score
                    .total_cmp(&b.state.log_score)
                    .then(b.seq.cmp(&a.seq))
            })
            .map(|(idx, _)| idx);
    }

    fn ranked_entries(&self) -> Vec<&PoolEntry> {
        let mut out: Vec<&PoolEntry> = self.entries.iter().collect();
        out.sort_by(|a, b| {
            b.state
                .log_score
                .total_cmp(&a.state.log_score)
                .then(a.seq.cmp(&b.seq))
        });
        out
    }

    /// States by descending score, ties in insertion order.
    pub fn states(&self) -> Vec<&SamplerState> {
        self.ranked_entries().into_iter().map(|e| &e.state).collect()
    }

    pub fn best(&self) -> Option<&SamplerState> {
        self.states().into_iter().next()
    }

    /// Merges pools in the given order, keeping the global top `capacity`.
    pub fn merge(pools: Vec<ModelPool>, capacity: usize) -> Result<ModelPool> {
        let first = pools
            .first()
            .ok_or_else(|| invalid_arg!("no pools to merge"))?;
        let mut out = ModelPool::new(first.n, first.prior, capacity);
        for pool in &pools {
            if pool.n != out.n || pool.prior != out.prior {
                return Err(invalid_arg!("cannot merge pools over different models"));
            }
            let mut entries: Vec<&PoolEntry> = pool.entries.iter().collect();
            entries.sort_by_key(|e| e.seq);
            for e in entries {
                out.offer(&e.state);
            }
        }
        Ok(out)
    }
}

/// One MCMC chain. Owns its likelihood cache and the incremental score
/// bookkeeping; randomness is supplied per call.
pub struct Chain<'a> {
    data: &'a Dataset,
    h: Hyperparams,
    prior: PriorKind,
    cache: FamilyCache,
    state: SamplerState,
    family: Vec<f64>,
    tallies: PairTallies,
    temperature: f64,
    since_resync: u32,
}

impl<'a> Chain<'a> {
    /// Starts from the empty graph with every node in one class.
    pub fn new(data: &'a Dataset, h: Hyperparams, prior: PriorKind) -> Result<Self> {
        let n = data.n_vars();
        let ord = prior.is_ordered().then(|| ClassOrdering::identity(1));
        Self::from_state(data, h, prior, Dag::empty(n)?, Partition::single_class(n), ord)
    }

    pub fn from_state(
        data: &'a Dataset,
        h: Hyperparams,
        prior: PriorKind,
        g: Dag,
        p: Partition,
        ord: Option<ClassOrdering>,
    ) -> Result<Self> {
        h.validate()?;
        check_data_matches(data, &g)?;
        let mut cache = FamilyCache::new();
        let state = SamplerState::new(g, p, ord, data, &h, prior, &mut cache)?;
        if state.log_score == IMPOSSIBLE {
            return Err(invalid_arg!("initial state has zero probability"));
        }
        let family = family_scores(data, &state.g, h.gamma, &mut cache)?;
        let tallies = PairTallies::from_graph(&state.g, state.p.labels(), state.p.k());
        Ok(Chain {
            data,
            h,
            prior,
            cache,
            state,
            family,
            tallies,
            temperature: 1.0,
            since_resync: 0,
        })
    }

    pub fn state(&self) -> &SamplerState {
        &self.state
    }

    pub fn prior(&self) -> PriorKind {
        self.prior
    }

    pub fn cache(&self) -> &FamilyCache {
        &self.cache
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Scores are divided by `t` when normalizing move probabilities.
    pub fn set_temperature(&mut self, t: f64) {
        self.temperature = t;
    }

    /// Difference between the maintained score and a from-scratch
    /// recomputation.
    pub fn score_drift(&mut self) -> Result<f64> {
        let fresh = joint_log_score(&self.state, self.data, &self.h, self.prior, &mut self.cache)?;
        Ok(self.state.log_score - fresh)
    }

    fn ranks(&self) -> Option<&[usize]> {
        self.state.ord.as_ref().map(|o| o.ranks())
    }

    fn structure_score(&self) -> f64 {
        match self.prior {
            PriorKind::Uniform => 0.0,
            PriorKind::Block | PriorKind::OrderedBlock => {
                let crp = crp_log_prob(&self.state.p, self.h.alpha).expect("alpha validated");
                let ord = if self.prior.is_ordered() {
                    -ln_factorial(self.state.p.k())
                } else {
                    0.0
                };
                crp + ord + self.tallies.score(self.ranks(), &self.h)
            }
        }
    }

    fn rescore(&mut self) {
        self.state.log_score = self.structure_score() + self.family.iter().sum::<f64>();
    }

    fn count_move(&mut self) {
        self.since_resync += 1;
        if self.since_resync >= RESYNC_INTERVAL {
            self.since_resync = 0;
            let fresh = joint_log_score(&self.state, self.data, &self.h, self.prior, &mut self.cache)
                .expect("chain state is always scorable");
            debug_assert!(
                (fresh - self.state.log_score).abs() <= RESYNC_TOLERANCE,
                "score drift {} exceeds tolerance",
                fresh - self.state.log_score
            );
            self.state.log_score = fresh;
        }
    }

    /// Gibbs step on the indicator of edge `i -> j`. Returns whether the
    /// graph changed.
    pub fn gibbs_edge<R: Rng + ?Sized>(&mut self, i: usize, j: usize, rng: &mut R) -> bool {
        self.count_move();
        let g = &self.state.g;
        let present = g.has_edge(i, j);
        let (a, b) = (self.state.p.label(i), self.state.p.label(j));
        if !present {
            if let Some(o) = &self.state.ord {
                if !o.allows(a, b) {
                    return false;
                }
            }
            if g.adding_creates_cycle(i, j) {
                return false;
            }
        }
        let prior_delta = if self.prior.has_classes() {
            let cell = a * self.tallies.k + b;
            let plus = self.tallies.plus[cell];
            let minus = self.tallies.total[cell] - plus;
            let (np, nm) = if present { (plus - 1, minus + 1) } else { (plus + 1, minus - 1) };
            cell_term(np, nm, &self.h) - cell_term(plus, minus, &self.h)
        } else {
            0.0
        };
        let toggled_mask = g.parent_mask(j) ^ (1u64 << i);
        let fam = self.cache.family(self.data, self.h.gamma, j, toggled_mask);
        let delta = prior_delta + fam - self.family[j];
        let p_toggle = 1.0 / (1.0 + (-delta / self.temperature).exp());
        if rng.random::<f64>() >= p_toggle {
            return false;
        }
        self.state.g.flip(i, j);
        self.family[j] = fam;
        if self.prior.has_classes() {
            let cell = a * self.tallies.k + b;
            if present {
                self.tallies.plus[cell] -= 1;
            } else {
                self.tallies.plus[cell] += 1;
            }
        }
        self.state.log_score += delta;
        true
    }

    /// One Gibbs pass over all ordered pairs in random order; `visit` sees
    /// the state after every accepted change.
    pub fn gibbs_edge_sweep<R, F>(&mut self, rng: &mut R, mut visit: F)
    where
        R: Rng + ?Sized,
        F: FnMut(&SamplerState),
    {
        let n = self.state.g.n();
        let mut pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        pairs.shuffle(rng);
        for (i, j) in pairs {
            if self.gibbs_edge(i, j, rng) {
                visit(&self.state);
            }
        }
    }

    /// Resamples the class of `node` given everything else; in the ordered
    /// model a new class may be inserted at any free rank. The graph is left
    /// unchanged. Returns whether the state changed.
    pub fn gibbs_class_resample<R: Rng + ?Sized>(&mut self, node: usize, rng: &mut R) -> Result<bool> {
        if !self.prior.has_classes() {
            return Err(Error::InvalidOperation(
                "class moves need a block prior".to_string(),
            ));
        }
        let n = self.state.g.n();
        if node >= n {
            return Err(invalid_arg!("node {node} out of range"));
        }
        self.count_move();
        let ordered = self.prior.is_ordered();
        let labels = self.state.p.labels();
        let k = self.state.p.k();
        let old = labels[node];
        let singleton = self.state.p.sizes()[old] == 1;
        let kr = if singleton { k - 1 } else { k };
        let reduce = |c: usize| if singleton && c > old { c - 1 } else { c };
        let reduced: Vec<usize> = labels.iter().map(|&c| reduce(c)).collect();

        // Remaining classes keep their relative order.
        let reduced_ranks: Vec<usize> = match &self.state.ord {
            Some(o) => {
                let old_rank = o.rank(old);
                (0..k)
                    .filter(|&c| !(singleton && c == old))
                    .map(|c| {
                        let r = o.rank(c);
                        if singleton && r > old_rank { r - 1 } else { r }
                    })
                    .collect()
            }
            None => Vec::new(),
        };

        // Tallies over pairs not involving `node`, with room for a new class.
        let width = kr + 1;
        let mut base = PairTallies::new(width);
        let mut sizes = vec![0u64; width];
        let mut out_plus = vec![0u64; width];
        let mut in_plus = vec![0u64; width];
        let g = &self.state.g;
        for u in (0..n).filter(|&u| u != node) {
            let cu = reduced[u];
            sizes[cu] += 1;
            out_plus[cu] += g.has_edge(node, u) as u64;
            in_plus[cu] += g.has_edge(u, node) as u64;
            for v in (0..n).filter(|&v| v != node && v != u) {
                let cell = cu * width + reduced[v];
                base.total[cell] += 1;
                base.plus[cell] += g.has_edge(u, v) as u64;
            }
        }
        let with_node = |c: usize| {
            let mut t = base.clone();
            for b in 0..width {
                t.plus[c * width + b] += out_plus[b];
                t.total[c * width + b] += sizes[b];
                t.plus[b * width + c] += in_plus[b];
                t.total[b * width + c] += sizes[b];
            }
            t
        };

        let seat_norm = ((n - 1) as f64 + self.h.alpha).ln();
        let mut candidates: Vec<(usize, Option<Vec<usize>>)> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for c in 0..kr {
            let t = with_node(c);
            let ranks = ordered.then(|| {
                let mut r = reduced_ranks.clone();
                r.push(kr);
                r
            });
            let mut s = (sizes[c] as f64).ln() - seat_norm;
            if ordered {
                s -= ln_factorial(kr);
            }
            s += t.score(ranks.as_deref(), &self.h);
            weights.push(s / self.temperature);
            candidates.push((c, ranks.map(|mut r| {
                r.pop();
                r
            })));
        }
        let t_new = with_node(kr);
        let new_seat = self.h.alpha.ln() - seat_norm;
        if ordered {
            for pos in 0..=kr {
                let mut ranks: Vec<usize> = reduced_ranks
                    .iter()
                    .map(|&r| if r >= pos { r + 1 } else { r })
                    .collect();
                ranks.push(pos);
                let s = new_seat - ln_factorial(kr + 1) + t_new.score(Some(&ranks), &self.h);
                weights.push(s / self.temperature);
                candidates.push((kr, Some(ranks)));
            }
        } else {
            weights.push((new_seat + t_new.score(None, &self.h)) / self.temperature);
            candidates.push((kr, None));
        }

        let pick = sample_log_weights(&weights, rng);
        let (class, ranks) = candidates.swap_remove(pick);
        let mut new_labels = reduced;
        new_labels[node] = class;
        let (p, map) = Partition::canonicalize(&new_labels);
        let ord = match ranks {
            Some(r) => {
                let mut canon = vec![0; p.k()];
                for (c, &rank) in r.iter().enumerate() {
                    if let Some(Some(nc)) = map.get(c) {
                        canon[*nc] = rank;
                    }
                }
                Some(ClassOrdering::new(canon).expect("ranks form a permutation"))
            }
            None => None,
        };
        let changed = p != self.state.p || ord != self.state.ord;
        if changed {
            self.state.p = p;
            self.state.ord = ord;
            self.tallies = PairTallies::from_graph(&self.state.g, self.state.p.labels(), self.state.p.k());
            self.rescore();
        }
        Ok(changed)
    }

    /// Class moves for every node in random order.
    pub fn class_sweep<R, F>(&mut self, rng: &mut R, mut visit: F) -> Result<()>
    where
        R: Rng + ?Sized,
        F: FnMut(&SamplerState),
    {
        let mut nodes: Vec<usize> = (0..self.state.g.n()).collect();
        nodes.shuffle(rng);
        for i in nodes {
            if self.gibbs_class_resample(i, rng)? {
                visit(&self.state);
            }
        }
        Ok(())
    }
}

/// Runs one chain, calling `observe` with the state after each iteration.
pub fn run_chain_observed<R, F>(
    cfg: &ChainConfig,
    data: &Dataset,
    h: &Hyperparams,
    rng: &mut R,
    mut observe: F,
) -> Result<ModelPool>
where
    R: Rng + ?Sized,
    F: FnMut(&SamplerState),
{
    cfg.validate()?;
    let mut chain = Chain::new(data, *h, cfg.prior)?;
    let mut pool = ModelPool::new(data.n_vars(), cfg.prior, cfg.top_k);
    pool.offer(chain.state());
    for t in 0..cfg.iterations {
        let temp = cfg.anneal.map_or(1.0, |a| a.temperature(t, cfg.iterations));
        chain.set_temperature(temp);
        chain.gibbs_edge_sweep(rng, |s| {
            pool.offer(s);
        });
        if cfg.prior.has_classes() {
            chain.class_sweep(rng, |s| {
                pool.offer(s);
            })?;
        }
        observe(chain.state());
    }
    Ok(pool)
}

pub fn run_chain<R: Rng + ?Sized>(
    cfg: &ChainConfig,
    data: &Dataset,
    h: &Hyperparams,
    rng: &mut R,
) -> Result<ModelPool> {
    run_chain_observed(cfg, data, h, rng, |_| {})
}

/// Random stream used by restart `index` of a search seeded with `seed`.
pub fn chain_rng(seed: u64, index: usize) -> StreamRng {
    seeds::stream(seed, "chain", index as u64)
}

/// `cfg.restarts` independent chains (run in parallel), merged in restart
/// order. The result depends only on the arguments.
pub fn run_search(cfg: &ChainConfig, data: &Dataset, h: &Hyperparams) -> Result<ModelPool> {
    cfg.validate()?;
    let pools = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| run_chain(cfg, data, h, &mut chain_rng(cfg.seed, r)))
        .collect::<Result<Vec<_>>>()?;
    ModelPool::merge(pools, cfg.top_k)
}
