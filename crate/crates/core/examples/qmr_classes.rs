//! Recovers the disease/symptom split of the noisy-OR benchmark.

use blocknet::evaluate::coclass_marginals;
use blocknet::experiment::training_set;
use blocknet::generate::{build_benchmark, BenchmarkSpec};
use blocknet::*;

fn main() -> Result<()> {
    let bench = build_benchmark(&BenchmarkSpec::named("qmr_like", 0)?)?;
    let train = training_set(&bench, 0, 300);
    let cfg = ChainConfig { prior: PriorKind::OrderedBlock, iterations: 400, restarts: 4, top_k: 100, seed: 0, anneal: None };
    let pool = run_search(&cfg, &train, &Hyperparams::default())?;
    let best = pool.best().expect("non-empty pool");
    println!("true classes:    {:?}", bench.classes.labels());
    println!("best partition:  {:?}", best.partition().labels());
    let c = coclass_marginals(&pool)?;
    let (diseases, symptoms) = (0..6, 6..bench.net.n());
    let mean = |pairs: Vec<(usize, usize)>| pairs.iter().map(|&(i, j)| c[i][j]).sum::<f64>() / pairs.len() as f64;
    let same: Vec<_> = symptoms.clone().flat_map(|i| symptoms.clone().filter(move |&j| j != i).map(move |j| (i, j))).collect();
    let cross: Vec<_> = diseases.flat_map(|i| symptoms.clone().map(move |j| (i, j))).collect();
    println!("mean co-class probability: symptom pairs {:.3}, disease-symptom pairs {:.3}", mean(same), mean(cross));
    Ok(())
}
