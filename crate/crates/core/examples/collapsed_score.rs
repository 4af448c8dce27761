//! Scores a few graphs under the uniform, block and ordered block priors.

use blocknet::*;

fn main() -> Result<()> {
    let h = Hyperparams::default();
    let p = Partition::from_labels(&[0, 0, 1, 1]);
    let ord = ClassOrdering::identity(2);
    let graphs = [
        ("empty", vec![]),
        ("between classes", vec![(0, 2), (1, 3)]),
        ("within a class", vec![(0, 1), (2, 3)]),
        ("against the order", vec![(2, 0)]),
    ];
    println!("{:<18} {:>10} {:>10} {:>10}", "graph", "uniform", "block", "ordered");
    for (name, edges) in graphs {
        let g = Dag::from_edges(4, &edges)?;
        println!(
            "{name:<18} {:>10.4} {:>10.4} {:>10.4}",
            uniform_graph_log_score(&g)?,
            collapsed_graph_log_score(&g, &p, None, &h)?,
            collapsed_graph_log_score(&g, &p, Some(&ord), &h)?,
        );
    }
    Ok(())
}
