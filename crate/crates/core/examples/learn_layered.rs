//! Learns the three-layer benchmark with each prior and reports the modal
//! number of classes and the expected Hamming distance to the true graph.

use blocknet::evaluate::{coclass_accuracy, coclass_marginals, edge_marginals, expected_hamming, modal_class_count};
use blocknet::experiment::training_set;
use blocknet::generate::{build_benchmark, BenchmarkSpec};
use blocknet::*;

fn main() -> Result<()> {
    let bench = build_benchmark(&BenchmarkSpec::named("layered12", 0)?)?;
    let train = training_set(&bench, 0, 200);
    let h = Hyperparams::default();
    for prior in PriorKind::ALL {
        let cfg = ChainConfig { prior, iterations: 500, restarts: 4, top_k: 100, seed: 0, anneal: None };
        let pool = run_search(&cfg, &train, &h)?;
        let hamming = expected_hamming(&edge_marginals(&pool)?, bench.net.dag());
        let acc = coclass_accuracy(&coclass_marginals(&pool)?, &bench.classes);
        println!(
            "{:<14} best {:>10.2}  hamming {:>5.2}  classes {}  co-class accuracy {:.3}",
            prior.as_str(),
            pool.best().expect("non-empty pool").log_score(),
            hamming,
            modal_class_count(&pool)?,
            acc,
        );
    }
    Ok(())
}
