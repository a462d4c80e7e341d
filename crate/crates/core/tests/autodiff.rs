mod common;

use common::fd::check_graph;

#[test]
fn composite_graph_gradients_match_finite_differences() {
    for seed in 0..10 {
        let c = check_graph(seed);
        assert!(c.max_rel < 1e-4, "graph {seed}: max relative error {:e} over {} entries", c.max_rel, c.entries);
    }
}
