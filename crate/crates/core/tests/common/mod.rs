//! Brute-force oracles shared by the integration tests. Nothing here calls
//! into the library's own enumeration or scoring code.

#![allow(dead_code)]

use blocknet::{Dag, Dataset};

/// All set partitions of `n` items as restricted-growth label vectors.
pub fn partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, max: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        let limit = if prefix.is_empty() { 0 } else { max + 1 };
        for c in 0..=limit {
            prefix.push(c);
            rec(prefix, max.max(c), n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        rec(&mut Vec::new(), 0, n, &mut out);
    }
    out
}

pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            out.push(q);
        }
    }
    out
}

/// Off-diagonal ordered pairs in row-major order.
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect()
}

/// Acyclicity by repeatedly stripping nodes without incoming edges.
pub fn acyclic(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut alive = vec![true; n];
    for _ in 0..n {
        let Some(v) = (0..n).find(|&v| alive[v] && !edges.iter().any(|&(a, b)| b == v && alive[a])) else {
            return false;
        };
        alive[v] = false;
    }
    true
}

/// Edge lists of every DAG on `n` nodes.
pub fn all_dag_edge_sets(n: usize) -> Vec<Vec<(usize, usize)>> {
    let ps = pairs(n);
    (0u64..1 << ps.len())
        .map(|mask| {
            ps.iter()
                .enumerate()
                .filter(|(b, _)| mask >> b & 1 == 1)
                .map(|(_, &e)| e)
                .collect::<Vec<_>>()
        })
        .filter(|e| acyclic(n, e))
        .collect()
}

pub fn dag(n: usize, edges: &[(usize, usize)]) -> Dag {
    Dag::from_edges(n, edges).unwrap()
}

/// Adaptive Simpson quadrature with a relative tolerance.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1)
            + rec(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    // Coarse pass to size the absolute tolerance.
    let rough = rec(f, a, fa, b, fb, m, fm, whole, 1e-3 * whole.abs().max(1e-300), 12);
    rec(f, a, fa, b, fb, m, fm, whole, rel_tol * rough.abs(), 50)
}

/// `∫_0^1 η^(a-1) (1-η)^(b-1) dη` via `η = sin²θ`, which removes the endpoint
/// singularities for `a, b >= 1/2`.
pub fn beta_integral(a: f64, b: f64) -> f64 {
    let f = move |t: f64| 2.0 * t.sin().powf(2.0 * a - 1.0) * t.cos().powf(2.0 * b - 1.0);
    integrate(&f, 0.0, std::f64::consts::FRAC_PI_2, 1e-12)
}

/// Marginal likelihood as a product of sequential posterior predictives:
/// row `r` is predicted from rows `0..r` with Dirichlet(`gamma`) smoothing.
pub fn chain_rule_log_marginal(data: &Dataset, parents: &[Vec<usize>], gamma: f64) -> f64 {
    use std::collections::HashMap;
    let arity = data.arities();
    let mut counts: Vec<HashMap<Vec<usize>, Vec<f64>>> = vec![HashMap::new(); data.n_vars()];
    let mut total = 0.0;
    for row in data.rows() {
        for (j, pa) in parents.iter().enumerate() {
            let key: Vec<usize> = pa.iter().map(|&p| row[p]).collect();
            let c = counts[j].entry(key).or_insert_with(|| vec![0.0; arity[j]]);
            let n: f64 = c.iter().sum();
            total += ((c[row[j]] + gamma) / (n + arity[j] as f64 * gamma)).ln();
            c[row[j]] += 1.0;
        }
    }
    total
}

/// ln Γ by the Lanczos approximation, independent of the library's version.
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let t = x + G + 0.5;
    let s = C[0] + (1..9).map(|i| C[i] / (x + i as f64)).sum::<f64>();
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + s.ln()
}
