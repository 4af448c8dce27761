//! File formats: network JSON, dataset CSV, results and report JSON, and
//! binary PGM-style heatmaps (`P5`).

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Error, Result};
use crate::evaluate::{KlEstimate, Matrix};
use crate::generate::Benchmark;
use crate::graph::{BayesNet, Dag, Dataset, Hyperparams};
use crate::mcmc::{ModelPool, SamplerState};
use crate::priors::{ClassOrdering, Partition, PriorKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub arity: usize,
}

/// Network description. `cpts[i][c][k]` follows the mixed-radix parent
/// configuration order; `ordering[a]` is the rank of class `a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub variables: Vec<Variable>,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpts: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classes: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordering: Option<Vec<usize>>,
}

impl NetworkFile {
    pub fn from_net(names: &[String], net: &BayesNet) -> Self {
        NetworkFile {
            variables: names
                .iter()
                .zip(net.arities())
                .map(|(name, &arity)| Variable {
                    name: name.clone(),
                    arity,
                })
                .collect(),
            edges: net.dag().edges().into_iter().map(|(i, j)| [i, j]).collect(),
            cpts: Some(net.cpts().to_vec()),
            classes: None,
            ordering: None,
        }
    }

    pub fn from_benchmark(b: &Benchmark) -> Self {
        NetworkFile {
            classes: Some(b.classes.labels().to_vec()),
            ordering: Some(b.ordering.ranks().to_vec()),
            ..NetworkFile::from_net(&b.names, &b.net)
        }
    }

    pub fn names(&self) -> Vec<String> {
        self.variables.iter().map(|v| v.name.clone()).collect()
    }

    pub fn arities(&self) -> Vec<usize> {
        self.variables.iter().map(|v| v.arity).collect()
    }

    pub fn dag(&self) -> Result<Dag> {
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        Dag::from_edges(self.variables.len(), &edges)
    }

    pub fn bayes_net(&self) -> Result<BayesNet> {
        let cpts = self
            .cpts
            .clone()
            .ok_or_else(|| Error::InvalidInput("network file has no CPTs".to_string()))?;
        BayesNet::new(self.dag()?, self.arities(), cpts)
    }

    pub fn partition(&self) -> Result<Option<Partition>> {
        match &self.classes {
            None => Ok(None),
            Some(z) if z.len() != self.variables.len() => Err(Error::InvalidInput(format!(
                "{} class labels for {} variables",
                z.len(),
                self.variables.len()
            ))),
            Some(z) => Ok(Some(Partition::from_labels(z))),
        }
    }

    /// Ordering over the canonical classes of [`NetworkFile::partition`].
    pub fn class_ordering(&self) -> Result<Option<ClassOrdering>> {
        let (Some(z), Some(ranks)) = (&self.classes, &self.ordering) else {
            return Ok(None);
        };
        let (p, map) = Partition::canonicalize(z);
        let mut canon = vec![usize::MAX; p.k()];
        for (old, new) in map.iter().enumerate() {
            if let Some(new) = new {
                let rank = *ranks.get(old).ok_or_else(|| {
                    Error::InvalidInput(format!("ordering has no rank for class {old}"))
                })?;
                canon[*new] = rank;
            }
        }
        // Re-rank densely in case the file ranks classes that never occur.
        let mut seq: Vec<usize> = (0..canon.len()).collect();
        seq.sort_by_key(|&c| canon[c]);
        Ok(Some(ClassOrdering::from_sequence(&seq)?))
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_to_string(path)?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

pub fn read_network(path: &Path) -> Result<NetworkFile> {
    read_json(path)
}

pub fn write_network(path: &Path, net: &NetworkFile) -> Result<()> {
    write_json(path, net)
}

/// Header of variable names, then one integer row per observation.
pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(data.names()).map_err(csv_err)?;
    for row in data.rows() {
        w.write_record(row.iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    write_bytes(path, &bytes)
}

/// Reads a dataset CSV. Without explicit arities each variable's arity is
/// inferred as `max(2, largest value + 1)`.
pub fn read_dataset(path: &Path, arities: Option<&[usize]>) -> Result<Dataset> {
    let text = read_to_string(path)?;
    parse_dataset(path, &text, arities)
}

pub fn parse_dataset(path: &Path, text: &str, arities: Option<&[usize]>) -> Result<Dataset> {
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if names.is_empty() || names.iter().all(|n| n.is_empty()) {
        return Err(parse_err(1, "missing header row".to_string()));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != names.len() {
            return Err(parse_err(
                line,
                format!("expected {} values, found {}", names.len(), record.len()),
            ));
        }
        let row = record
            .iter()
            .map(|field| {
                field
                    .parse::<usize>()
                    .map_err(|_| parse_err(line, format!("'{field}' is not a nonnegative integer")))
            })
            .collect::<Result<Vec<usize>>>()?;
        if let Some(a) = arities {
            if let Some(v) = (0..row.len()).find(|&v| row[v] >= a[v]) {
                return Err(parse_err(line, format!("value {} of '{}' exceeds arity {}", row[v], names[v], a[v])));
            }
        }
        rows.push(row);
    }
    let arities = match arities {
        Some(a) if a.len() != names.len() => {
            return Err(invalid_arg!("{} arities for {} columns", a.len(), names.len()))
        }
        Some(a) => a.to_vec(),
        None => (0..names.len())
            .map(|v| rows.iter().map(|r| r[v] + 1).max().unwrap_or(0).max(2))
            .collect(),
    };
    Dataset::new(names, arities, rows)
}

/// One pool state as stored in a results file. `score` is `null` for
/// impossible states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopModel {
    pub score: Option<f64>,
    pub edges: Vec<[usize; 2]>,
    pub classes: Vec<usize>,
    pub ordering: Option<Vec<usize>>,
}

/// Output of a learning run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnResults {
    pub prior: PriorKind,
    pub hyperparams: Hyperparams,
    pub variables: Vec<String>,
    pub edge_marginals: Matrix,
    pub coclass_marginals: Matrix,
    pub kl: Option<KlEstimate>,
    pub top_models: Vec<TopModel>,
}

pub fn finite_or_none(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

impl LearnResults {
    pub fn top_models(pool: &ModelPool) -> Vec<TopModel> {
        pool.states()
            .into_iter()
            .map(|s| TopModel {
                score: finite_or_none(s.log_score()),
                edges: s.dag().edges().into_iter().map(|(i, j)| [i, j]).collect(),
                classes: s.partition().labels().to_vec(),
                ordering: s.ordering().map(|o| o.ranks().to_vec()),
            })
            .collect()
    }

    /// Rebuilds the model pool, in stored order.
    pub fn pool(&self) -> Result<ModelPool> {
        let n = self.variables.len();
        let mut pool = ModelPool::new(n, self.prior, self.top_models.len().max(1));
        for (idx, m) in self.top_models.iter().enumerate() {
            let bad = |msg: String| Error::InvalidInput(format!("top_models[{idx}]: {msg}"));
            let edges: Vec<(usize, usize)> = m.edges.iter().map(|e| (e[0], e[1])).collect();
            let g = Dag::from_edges(n, &edges).map_err(|e| bad(e.to_string()))?;
            if m.classes.len() != n {
                return Err(bad(format!("{} class labels for {n} nodes", m.classes.len())));
            }
            let p = Partition::from_labels(&m.classes);
            let ord = match &m.ordering {
                Some(r) => Some(ClassOrdering::new(r.clone()).map_err(|e| bad(e.to_string()))?),
                None => None,
            };
            let score = m.score.ok_or_else(|| bad("missing score".to_string()))?;
            let state = SamplerState::from_parts(g, p, ord, score).map_err(|e| bad(e.to_string()))?;
            pool.offer(&state);
        }
        Ok(pool)
    }
}

/// Evaluation of a learning run against the generating network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub prior: PriorKind,
    pub kl: KlEstimate,
    pub expected_hamming: f64,
    pub coclass_accuracy: Option<f64>,
    pub test_log_likelihood: Option<f64>,
    pub best_score: Option<f64>,
    pub truth_score: Option<f64>,
}

/// Heatmap bytes: `P5` header, one byte per cell, `round(255 * (1 - p))`,
/// row-major.
pub fn encode_heatmap(m: &Matrix) -> Vec<u8> {
    let h = m.len();
    let w = m.first().map_or(0, Vec::len);
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for row in m {
        out.extend(row.iter().map(|&p| (255.0 * (1.0 - p.clamp(0.0, 1.0))).round() as u8));
    }
    out
}

/// Parses a heatmap produced by [`encode_heatmap`] back into intensities.
pub fn decode_heatmap(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let bad = |m: &str| Error::InvalidInput(format!("heatmap: {m}"));
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(bad("not an 8-bit P5 image"));
    }
    let w: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("height"))?;
    let body = bytes.get(pos..).unwrap_or_default();
    if body.len() != w * h {
        return Err(bad("pixel count does not match header"));
    }
    Ok((w, h, body.to_vec()))
}

pub fn write_heatmap(path: &Path, m: &Matrix) -> Result<()> {
    write_bytes(path, &encode_heatmap(m))
}

/// Writes rows through the CSV serializer.
pub fn write_csv_rows<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.serialize(r).map_err(err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io(path, std::io::Error::other(e.to_string())))?;
    write_bytes(path, &bytes)
}

pub fn ensure_dir(path: &Path) -> Result<PathBuf> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}
