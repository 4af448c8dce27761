//! Library results checked against brute-force enumeration.

mod common;

use blocknet::evaluate::{enumerate_dags, enumerate_partitions, exact_posterior_small};
use blocknet::math::ln_gamma as lib_ln_gamma;
use blocknet::seeds::stream;
use blocknet::*;
use rand::Rng;

use common::*;

#[test]
fn dag_construction_matches_acyclicity_oracle() {
    for n in 1..=4 {
        let ps = pairs(n);
        let mut accepted = 0;
        for mask in 0u64..1 << ps.len() {
            let edges: Vec<_> = ps.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &e)| e).collect();
            let ok = acyclic(n, &edges);
            assert_eq!(Dag::from_edges(n, &edges).is_ok(), ok, "{edges:?}");
            accepted += ok as usize;
        }
        assert_eq!(accepted, [1, 3, 25, 543][n - 1]);
    }
}

#[test]
fn toggled_graphs_report_cycles_correctly() {
    for edges in all_dag_edge_sets(4) {
        let g = dag(4, &edges);
        for (i, j) in pairs(4) {
            let t = g.toggle_edge(i, j).unwrap();
            let mut e = edges.clone();
            if let Some(pos) = e.iter().position(|&x| x == (i, j)) {
                e.remove(pos);
            } else {
                e.push((i, j));
            }
            assert_eq!(t.is_acyclic(), acyclic(4, &e));
            if !g.has_edge(i, j) {
                assert_eq!(g.adding_creates_cycle(i, j), !acyclic(4, &e));
            }
        }
    }
}

#[test]
fn library_enumerations_match_oracle_counts() {
    for n in 1..=4 {
        let lib: Vec<Vec<(usize, usize)>> = enumerate_dags(n).unwrap().iter().map(Dag::edges).collect();
        let mut want = all_dag_edge_sets(n);
        let mut got = lib.clone();
        want.iter_mut().for_each(|e| e.sort());
        got.iter_mut().for_each(|e| e.sort());
        want.sort();
        got.sort();
        assert_eq!(got, want);
        let parts: Vec<Vec<usize>> = enumerate_partitions(n).iter().map(|p| p.labels().to_vec()).collect();
        assert_eq!(parts, partitions(n));
    }
    assert_eq!(partitions(5).len(), 52);
    assert_eq!(partitions(8).len(), 4140);
}

#[test]
fn crp_normalizes_up_to_eight_nodes() {
    for n in 1..=8 {
        for alpha in [0.1, 0.5, 1.0, 3.7] {
            let total: f64 = partitions(n)
                .iter()
                .map(|z| crp_log_prob(&Partition::from_labels(z), alpha).unwrap().exp())
                .sum();
            assert!((total - 1.0).abs() < 1e-10, "n={n} alpha={alpha}: {total}");
        }
    }
}

#[test]
fn crp_matches_sequential_seating() {
    // Product of seating probabilities in label order.
    for z in partitions(6) {
        let alpha = 0.7;
        let mut sizes: Vec<f64> = Vec::new();
        let mut lp = 0.0;
        for (i, &c) in z.iter().enumerate() {
            let denom = i as f64 + alpha;
            if c == sizes.len() {
                lp += (alpha / denom).ln();
                sizes.push(1.0);
            } else {
                lp += (sizes[c] / denom).ln();
                sizes[c] += 1.0;
            }
        }
        let got = crp_log_prob(&Partition::from_labels(&z), alpha).unwrap();
        assert!((got - lp).abs() < 1e-12);
    }
}

#[test]
fn ln_gamma_agrees_with_independent_lanczos() {
    for x in [0.3, 0.5, 1.0, 2.5, 7.0, 20.25, 133.0] {
        assert!((lib_ln_gamma(x) - ln_gamma(x)).abs() < 1e-10 * (1.0 + ln_gamma(x).abs()));
    }
}

#[test]
fn ordered_prior_is_normalized_over_graphs_for_four_nodes() {
    let h = Hyperparams::new(0.5, 0.8, 1.6, 0.5).unwrap();
    let dags = all_dag_edge_sets(4);
    for z in partitions(4) {
        let p = Partition::from_labels(&z);
        for ranks in permutations(p.k()) {
            let ord = ClassOrdering::new(ranks).unwrap();
            let mass: f64 = dags
                .iter()
                .map(|e| collapsed_graph_log_score(&dag(4, e), &p, Some(&ord), &h).unwrap().exp())
                .sum();
            assert!((mass - 1.0).abs() < 1e-10, "{z:?}: {mass}");
        }
    }
}

#[test]
fn unordered_prior_mass_on_dags_is_below_one() {
    let h = Hyperparams::default();
    for n in 2..=4 {
        let dags = all_dag_edge_sets(n);
        for z in partitions(n) {
            let p = Partition::from_labels(&z);
            let mass: f64 = dags
                .iter()
                .map(|e| collapsed_graph_log_score(&dag(n, e), &p, None, &h).unwrap().exp())
                .sum();
            // Cyclic graphs hold the missing mass.
            assert!(mass < 1.0 && mass > 0.0, "{z:?}: {mass}");
        }
    }
}

#[test]
fn marginal_likelihood_sums_to_one_over_datasets() {
    // Every dataset of M rows over two binary variables plus one ternary.
    let arities = [2, 3, 2];
    let states: Vec<Vec<usize>> = (0..12).map(|s| vec![s % 2, (s / 2) % 3, s / 6]).collect();
    for edges in [vec![], vec![(0, 1)], vec![(0, 1), (1, 2), (0, 2)], vec![(2, 0), (1, 0)]] {
        let g = dag(3, &edges);
        for m in 0..=2u32 {
            let mut total = 0.0;
            for idx in 0..12usize.pow(m) {
                let rows: Vec<Vec<usize>> = (0..m).map(|r| states[idx / 12usize.pow(r) % 12].clone()).collect();
                let d = Dataset::with_arities(arities.to_vec(), rows).unwrap();
                total += graph_log_marginal(&d, &g, 0.7, &mut FamilyCache::new()).unwrap().exp();
            }
            assert!((total - 1.0).abs() < 1e-12, "{edges:?} m={m}: {total}");
        }
    }
}

#[test]
fn marginal_likelihood_matches_chain_rule_on_larger_data() {
    let mut rng = stream(11, "oracle", 0);
    for _ in 0..50 {
        let n = 4;
        let arities: Vec<usize> = (0..n).map(|_| rng.random_range(2..=4)).collect();
        let m = rng.random_range(0..40);
        let rows = (0..m).map(|_| arities.iter().map(|&a| rng.random_range(0..a)).collect()).collect();
        let data = Dataset::with_arities(arities, rows).unwrap();
        let dags = all_dag_edge_sets(n);
        let edges = &dags[rng.random_range(0..dags.len())];
        let parents: Vec<Vec<usize>> = (0..n).map(|j| edges.iter().filter(|e| e.1 == j).map(|e| e.0).collect()).collect();
        let want = chain_rule_log_marginal(&data, &parents, 0.5);
        let got = graph_log_marginal(&data, &dag(n, edges), 0.5, &mut FamilyCache::new()).unwrap();
        assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn exact_posterior_normalizes_and_agrees_with_brute_force() {
    let mut rng = stream(12, "oracle", 0);
    let rows = (0..15).map(|_| (0..3).map(|_| rng.random_range(0..2)).collect()).collect();
    let data = Dataset::with_arities(vec![2; 3], rows).unwrap();
    let h = Hyperparams::default();
    for prior in PriorKind::ALL {
        let post = exact_posterior_small(&data, &h, prior).unwrap();
        assert!((post.total_prob() - 1.0).abs() < 1e-10);
        // Recompute edge marginals from unnormalized brute-force scores.
        let mut weights = Vec::new();
        for edges in all_dag_edge_sets(3) {
            let g = dag(3, &edges);
            let lik = graph_log_marginal(&data, &g, h.gamma, &mut FamilyCache::new()).unwrap();
            let latent: Vec<(Vec<usize>, Option<Vec<usize>>)> = match prior {
                PriorKind::Uniform => vec![(vec![0; 3], None)],
                PriorKind::Block => partitions(3).into_iter().map(|z| (z, None)).collect(),
                PriorKind::OrderedBlock => partitions(3)
                    .into_iter()
                    .flat_map(|z| {
                        let k = z.iter().max().unwrap() + 1;
                        permutations(k).into_iter().map(move |r| (z.clone(), Some(r)))
                    })
                    .collect(),
            };
            for (z, ranks) in latent {
                let p = Partition::from_labels(&z);
                let ord = ranks.map(|r| ClassOrdering::new(r).unwrap());
                let prior_lp = match prior {
                    PriorKind::Uniform => 0.0,
                    _ => {
                        let k = p.k();
                        crp_log_prob(&p, h.alpha).unwrap()
                            + collapsed_graph_log_score(&g, &p, ord.as_ref(), &h).unwrap()
                            - if ord.is_some() { ln_gamma(k as f64 + 1.0) } else { 0.0 }
                    }
                };
                weights.push((edges.clone(), z, (prior_lp + lik).exp()));
            }
        }
        let total: f64 = weights.iter().map(|w| w.2).sum();
        for (i, j) in pairs(3) {
            let want: f64 = weights.iter().filter(|w| w.0.contains(&(i, j))).map(|w| w.2).sum::<f64>() / total;
            assert!((post.edge_marginals[i][j] - want).abs() < 1e-10, "{prior} {i}->{j}");
            let same: f64 = weights.iter().filter(|w| w.1[i] == w.1[j]).map(|w| w.2).sum::<f64>() / total;
            assert!((post.coclass_marginals[i][j] - same).abs() < 1e-10, "{prior} z{i}=z{j}");
        }
    }
}
