//! Log-domain numerics shared by the scoring code.

pub use statrs::function::gamma::ln_gamma;

/// Log-score flag for impossible states. Propagates through sums and
/// exponentiates to exactly zero.
pub const IMPOSSIBLE: f64 = f64::NEG_INFINITY;

pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// `ln(n!)` for small integer `n`.
pub fn ln_factorial(n: usize) -> f64 {
    ln_gamma(n as f64 + 1.0)
}

/// Max-shifted `ln(sum(exp(x)))`. Returns `IMPOSSIBLE` when every term is.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return IMPOSSIBLE;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Normalizes log-weights into probabilities. All-impossible input yields
/// all zeros.
pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let z = log_sum_exp(xs);
    if z == IMPOSSIBLE {
        return vec![0.0; xs.len()];
    }
    xs.iter().map(|&x| (x - z).exp()).collect()
}

/// Draws an index from unnormalized log-weights.
pub fn sample_log_weights<R: rand::Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    let probs = softmax(log_weights);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_possible = 0;
    for (idx, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_possible = idx;
        }
        acc += p;
        if u < acc {
            return idx;
        }
    }
    last_possible
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_handles_large_offsets() {
        let v = log_sum_exp(&[-1000.0, -1000.0]);
        assert!((v - (-1000.0 + 2f64.ln())).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[IMPOSSIBLE, IMPOSSIBLE]), IMPOSSIBLE);
        assert_eq!(log_sum_exp(&[IMPOSSIBLE, 0.5]), 0.5);
    }

    #[test]
    fn impossible_maps_to_zero_weight() {
        let p = softmax(&[IMPOSSIBLE, 0.0, 0.0]);
        assert_eq!(p[0], 0.0);
        assert!((p[1] - 0.5).abs() < 1e-15);
        assert_eq!(IMPOSSIBLE.exp(), 0.0);
    }

    #[test]
    fn ln_beta_matches_closed_form() {
        // B(2,3) = 1!2!/4! = 1/12
        assert!((ln_beta(2.0, 3.0) - (1.0f64 / 12.0).ln()).abs() < 1e-13);
        assert!((ln_factorial(5) - 120f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn sampler_never_picks_impossible() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let k = sample_log_weights(&[IMPOSSIBLE, 0.0, IMPOSSIBLE], &mut rng);
            assert_eq!(k, 1);
        }
    }
}
