//! Runs a small experiment grid and writes the usual output tree (network,
//! datasets, per-cell results, reports, heatmaps and summary.csv) to the
//! directory given as the first argument, or a temporary one.

use std::path::PathBuf;

use blocknet::experiment::{run_experiment, ExperimentConfig};
use blocknet::generate::BenchmarkSpec;
use blocknet::*;

fn main() -> Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("blocknet-example"));
    let cfg = ExperimentConfig {
        benchmark: BenchmarkSpec::named("regulatory", 0)?,
        sample_sizes: vec![50, 200],
        priors: PriorKind::ALL.to_vec(),
        chain: ChainConfig { iterations: 200, restarts: 4, top_k: 50, ..ChainConfig::default() },
        hyper: Hyperparams::default(),
        out: out.clone(),
        test_size: 500,
        n_mc: 2000,
    };
    let outcome = run_experiment(&cfg)?;
    for r in &outcome.rows {
        println!("M={:<4} {:<14} KL {:.4}  hamming {:.2}", r.m, r.prior.as_str(), r.kl, r.hamming);
    }
    for (m, prior, msg) in &outcome.failures {
        eprintln!("M={m} {}: {msg}", prior.as_str());
    }
    println!("wrote {}", out.join("summary.csv").display());
    Ok(())
}
