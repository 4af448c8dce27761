//! Graphs, datasets and parameterized networks.

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};

/// Largest supported node count. Adjacency rows are stored as `u64` bitsets.
pub const MAX_NODES: usize = 64;

/// Directed graph over `n` nodes without self-edges, stored densely as
/// per-node parent and child bitsets.
///
/// Every constructor validates acyclicity. The only way to obtain a cyclic
/// value is [`Dag::toggle_edge`], which exists so that proposals can be
/// evaluated before being rejected.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Dag {
    n: usize,
    parents: Vec<u64>,
    children: Vec<u64>,
}

impl Dag {
    pub fn empty(n: usize) -> Result<Self> {
        if n > MAX_NODES {
            return Err(invalid_arg!("{n} nodes exceeds the limit of {MAX_NODES}"));
        }
        Ok(Dag {
            n,
            parents: vec![0; n],
            children: vec![0; n],
        })
    }

    /// Builds a graph from an edge list, rejecting self-edges, duplicate
    /// edges and cycles.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut dag = Dag::empty(n)?;
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(invalid_arg!("edge {i}->{j} out of range for {n} nodes"));
            }
            if i == j {
                return Err(invalid_arg!("self-edge on node {i}"));
            }
            if dag.has_edge(i, j) {
                return Err(invalid_arg!("duplicate edge {i}->{j}"));
            }
            dag.flip(i, j);
        }
        if !dag.is_acyclic() {
            return Err(invalid_arg!("edge list contains a cycle"));
        }
        Ok(dag)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.children[i] >> j & 1 == 1
    }

    /// Bitset of the parents of `j`.
    pub fn parent_mask(&self, j: usize) -> u64 {
        self.parents[j]
    }

    pub fn child_mask(&self, i: usize) -> u64 {
        self.children[i]
    }

    /// Parents of `j` in ascending order.
    pub fn parent_set(&self, j: usize) -> Vec<usize> {
        mask_to_vec(self.parents[j])
    }

    pub fn in_degree(&self, j: usize) -> usize {
        self.parents[j].count_ones() as usize
    }

    pub fn out_degree(&self, i: usize) -> usize {
        self.children[i].count_ones() as usize
    }

    pub fn edge_count(&self) -> usize {
        self.children.iter().map(|c| c.count_ones() as usize).sum()
    }

    /// Edges in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|i| mask_to_vec(self.children[i]).into_iter().map(move |j| (i, j)))
            .collect()
    }

    pub fn adjacency(&self) -> Vec<Vec<bool>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.has_edge(i, j)).collect())
            .collect()
    }

    /// Returns a copy with edge `i -> j` flipped. The result may be cyclic.
    pub fn toggle_edge(&self, i: usize, j: usize) -> Result<Dag> {
        if i >= self.n || j >= self.n {
            return Err(invalid_arg!("node pair ({i},{j}) out of range"));
        }
        if i == j {
            return Err(invalid_arg!("cannot toggle self-edge ({i},{i})"));
        }
        let mut out = self.clone();
        out.flip(i, j);
        Ok(out)
    }

    pub(crate) fn flip(&mut self, i: usize, j: usize) {
        self.children[i] ^= 1 << j;
        self.parents[j] ^= 1 << i;
    }

    /// Kahn's algorithm from scratch; `None` when the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let mut indegree: Vec<u32> = self.parents.iter().map(|p| p.count_ones()).collect();
        let mut ready: Vec<usize> = (0..self.n).filter(|&v| indegree[v] == 0).collect();
        ready.reverse();
        let mut order = Vec::with_capacity(self.n);
        while let Some(v) = ready.pop() {
            order.push(v);
            let mut rest = self.children[v];
            while rest != 0 {
                let c = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(c);
                }
            }
        }
        (order.len() == self.n).then_some(order)
    }

    /// Reference acyclicity test.
    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// Whether a directed path `from ~> to` exists (length zero counts).
    pub fn reaches(&self, from: usize, to: usize) -> bool {
        let target = 1u64 << to;
        let mut seen = 1u64 << from;
        let mut frontier = seen;
        while frontier != 0 {
            if seen & target != 0 {
                return true;
            }
            let mut next = 0u64;
            let mut rest = frontier;
            while rest != 0 {
                let v = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                next |= self.children[v];
            }
            frontier = next & !seen;
            seen |= next;
        }
        seen & target != 0
    }

    /// Incremental check: would adding `i -> j` to this acyclic graph close
    /// a cycle?
    pub fn adding_creates_cycle(&self, i: usize, j: usize) -> bool {
        self.reaches(j, i)
    }
}

pub(crate) fn mask_to_vec(mut mask: u64) -> Vec<usize> {
    let mut out = Vec::with_capacity(mask.count_ones() as usize);
    while mask != 0 {
        out.push(mask.trailing_zeros() as usize);
        mask &= mask - 1;
    }
    out
}

/// Mixed-radix index of the joint parent configuration in `row`. The
/// lowest-index parent varies fastest.
pub fn config_index(parents: &[usize], arities: &[usize], row: &[usize]) -> usize {
    let mut idx = 0;
    let mut stride = 1;
    for &p in parents {
        idx += row[p] * stride;
        stride *= arities[p];
    }
    idx
}

pub fn config_count(parents: &[usize], arities: &[usize]) -> usize {
    parents.iter().map(|&p| arities[p]).product()
}

/// Complete discrete observations, stored row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    names: Vec<String>,
    arities: Vec<usize>,
    values: Vec<usize>,
}

impl Dataset {
    pub fn new(names: Vec<String>, arities: Vec<usize>, rows: Vec<Vec<usize>>) -> Result<Self> {
        if names.len() != arities.len() {
            return Err(invalid_arg!(
                "{} names for {} variables",
                names.len(),
                arities.len()
            ));
        }
        if arities.is_empty() {
            return Err(invalid_arg!("dataset needs at least one variable"));
        }
        if let Some(v) = arities.iter().position(|&a| a < 2) {
            return Err(invalid_arg!("variable {v} has arity {} (< 2)", arities[v]));
        }
        let mut values = Vec::with_capacity(rows.len() * arities.len());
        for (r, row) in rows.iter().enumerate() {
            check_row(&arities, row).map_err(|e| invalid_arg!("row {r}: {e}"))?;
            values.extend_from_slice(row);
        }
        Ok(Dataset {
            names,
            arities,
            values,
        })
    }

    /// Dataset with variables named `X0, X1, ...`.
    pub fn with_arities(arities: Vec<usize>, rows: Vec<Vec<usize>>) -> Result<Self> {
        let names = default_names(arities.len());
        Dataset::new(names, arities, rows)
    }

    pub fn n_vars(&self) -> usize {
        self.arities.len()
    }

    pub fn n_rows(&self) -> usize {
        self.values.len() / self.arities.len()
    }

    pub fn arities(&self) -> &[usize] {
        &self.arities
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, r: usize) -> &[usize] {
        let n = self.n_vars();
        &self.values[r * n..(r + 1) * n]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, usize> {
        self.values.chunks_exact(self.n_vars())
    }

    /// First `m` rows as a new dataset.
    pub fn head(&self, m: usize) -> Dataset {
        let m = m.min(self.n_rows());
        Dataset {
            names: self.names.clone(),
            arities: self.arities.clone(),
            values: self.values[..m * self.n_vars()].to_vec(),
        }
    }

    /// Validates a single observation against this dataset's arities.
    pub fn check_row(&self, row: &[usize]) -> Result<()> {
        check_row(&self.arities, row)
    }
}

pub(crate) fn default_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("X{i}")).collect()
}

fn check_row(arities: &[usize], row: &[usize]) -> Result<()> {
    if row.len() != arities.len() {
        return Err(invalid_arg!(
            "observation has {} values, expected {}",
            row.len(),
            arities.len()
        ));
    }
    for (v, (&x, &a)) in row.iter().zip(arities).enumerate() {
        if x >= a {
            return Err(invalid_arg!("value {x} of variable {v} outside arity {a}"));
        }
    }
    Ok(())
}

/// A DAG with one conditional probability table per node.
///
/// `cpts[i][c][k]` is `P(X_i = k | parents in configuration c)`, where `c`
/// is the [`config_index`] over the parents of `i` in ascending order.
#[derive(Clone, Debug, PartialEq)]
pub struct BayesNet {
    dag: Dag,
    arities: Vec<usize>,
    cpts: Vec<Vec<Vec<f64>>>,
}

const CPT_ROW_TOLERANCE: f64 = 1e-9;

impl BayesNet {
    pub fn new(dag: Dag, arities: Vec<usize>, cpts: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if arities.len() != dag.n() || cpts.len() != dag.n() {
            return Err(invalid_arg!(
                "network has {} nodes but {} arities and {} tables",
                dag.n(),
                arities.len(),
                cpts.len()
            ));
        }
        if let Some(v) = arities.iter().position(|&a| a < 2) {
            return Err(invalid_arg!("variable {v} has arity < 2"));
        }
        for (i, table) in cpts.iter().enumerate() {
            let expected = config_count(&dag.parent_set(i), &arities);
            if table.len() != expected {
                return Err(invalid_arg!(
                    "node {i}: {} CPT rows, expected {expected}",
                    table.len()
                ));
            }
            for (c, row) in table.iter().enumerate() {
                if row.len() != arities[i] {
                    return Err(invalid_arg!("node {i} row {c}: wrong width {}", row.len()));
                }
                if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                    return Err(invalid_arg!("node {i} row {c}: entry outside [0,1]"));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > CPT_ROW_TOLERANCE {
                    return Err(invalid_arg!("node {i} row {c}: sums to {sum}"));
                }
            }
        }
        Ok(BayesNet { dag, arities, cpts })
    }

    pub fn dag(&self) -> &Dag {
        &self.dag
    }

    pub fn arities(&self) -> &[usize] {
        &self.arities
    }

    pub fn cpts(&self) -> &[Vec<Vec<f64>>] {
        &self.cpts
    }

    pub fn n(&self) -> usize {
        self.dag.n()
    }

    /// `P(X_i = · | parents as in row)`.
    pub fn conditional(&self, i: usize, row: &[usize]) -> &[f64] {
        let parents = self.dag.parent_set(i);
        &self.cpts[i][config_index(&parents, &self.arities, row)]
    }

    /// Exact joint log-probability of a complete observation.
    pub fn log_prob(&self, row: &[usize]) -> f64 {
        (0..self.n())
            .map(|i| self.conditional(i, row)[row[i]].ln())
            .sum()
    }
}

/// Model hyperparameters: CRP concentration, Beta shapes for the class-pair
/// edge probabilities and the per-cell Dirichlet pseudo-count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub gamma: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            alpha: 0.5,
            beta1: 1.0,
            beta2: 1.0,
            gamma: 0.5,
        }
    }
}

impl Hyperparams {
    pub fn new(alpha: f64, beta1: f64, beta2: f64, gamma: f64) -> Result<Self> {
        let h = Hyperparams {
            alpha,
            beta1,
            beta2,
            gamma,
        };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta1", self.beta1),
            ("beta2", self.beta2),
            ("gamma", self.gamma),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}
