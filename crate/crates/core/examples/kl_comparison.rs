//! Compares the predictive KL divergence of the three priors on one training
//! set of the sparse random benchmark.

use blocknet::evaluate::kl_estimate;
use blocknet::experiment::training_set;
use blocknet::generate::{build_benchmark, BenchmarkSpec};
use blocknet::seeds::stream;
use blocknet::*;

fn main() -> Result<()> {
    let bench = build_benchmark(&BenchmarkSpec::named("sparse_random", 3)?)?;
    let h = Hyperparams::default();
    for m in [50, 400] {
        let train = training_set(&bench, 3, m);
        for prior in PriorKind::ALL {
            let cfg = ChainConfig { prior, iterations: 300, restarts: 4, top_k: 100, seed: 3, anneal: None };
            let pool = run_search(&cfg, &train, &h)?;
            let kl = kl_estimate(&pool, &bench.net, &train, 5000, h.gamma, &mut stream(3, "evaluation", 0))?;
            println!("M={m:<4} {:<14} KL {:.4} ± {:.4}", prior.as_str(), kl.estimate, kl.stderr);
        }
    }
    Ok(())
}
