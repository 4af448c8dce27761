//! Enumerates the full posterior of a three-variable problem and checks that
//! the sampler's pool puts its best state on the exact MAP.

use blocknet::evaluate::exact_posterior_small;
use blocknet::generate::{forward_sample, sample_dirichlet_cpts};
use blocknet::seeds::stream;
use blocknet::*;

fn main() -> Result<()> {
    let mut rng = stream(1, "exact-example", 0);
    let truth = sample_dirichlet_cpts(&Dag::from_edges(3, &[(0, 1), (1, 2)])?, &[2, 2, 2], 0.5, &mut rng)?;
    let data = forward_sample(&truth, 60, &mut rng);
    let h = Hyperparams::default();
    for prior in PriorKind::ALL {
        let exact = exact_posterior_small(&data, &h, prior)?;
        let best = exact.best();
        let cfg = ChainConfig { prior, iterations: 300, restarts: 4, top_k: 50, seed: 1, anneal: None };
        let pool = run_search(&cfg, &data, &h)?;
        let found = pool.best().expect("pool is never empty");
        println!(
            "{:<14} states {:>5}  MAP {:?} ({:.3})  sampler best {:?} ({:.3})",
            prior.as_str(),
            exact.states.len(),
            best.dag.edges(),
            best.prob,
            found.dag().edges(),
            (found.log_score() - exact.log_normalizer).exp(),
        );
    }
    Ok(())
}
