//! Draws partitions from the Chinese restaurant process and compares the
//! empirical frequencies of each class count with the exact prior.

use blocknet::evaluate::enumerate_partitions;
use blocknet::generate::sample_partition;
use blocknet::seeds::stream;
use blocknet::crp_log_prob;

fn main() -> blocknet::Result<()> {
    let (n, alpha, draws) = (5, 1.0, 50_000);
    let mut exact = vec![0.0; n + 1];
    for p in enumerate_partitions(n) {
        exact[p.k()] += crp_log_prob(&p, alpha)?.exp();
    }
    let mut rng = stream(0, "crp-example", 0);
    let mut seen = vec![0usize; n + 1];
    for _ in 0..draws {
        seen[sample_partition(n, alpha, &mut rng)?.k()] += 1;
    }
    println!("K  exact    sampled");
    for k in 1..=n {
        println!("{k}  {:.4}   {:.4}", exact[k], seen[k] as f64 / draws as f64);
    }
    Ok(())
}
