//! Shared input builders for the engine benchmarks.

use resalloc_core::cost::{random_quad_lse_ensemble, random_quartic_ensemble, CostEnsemble};
use resalloc_core::graph::{cycle_graph, scale_free_tree, GraphSchedule, GraphSnapshot};
use resalloc_core::rng::{stream, Stream};
use rand::Rng;

pub struct RhsInput {
    pub graph: GraphSnapshot,
    pub costs: CostEnsemble,
    pub x: Vec<f64>,
}

/// A 100-agent scale-free snapshot with softplus costs, the shape of the
/// switching reference scenario.
pub fn scale_free_input(seed: u64) -> RhsInput {
    let mut wrng = stream(seed, Stream::Weights);
    let graph = scale_free_tree(100, 0.5, 1.5, &mut wrng).unwrap();
    let mut crng = stream(seed, Stream::Costs);
    let costs = random_quad_lse_ensemble(100, &mut crng);
    let mut irng = stream(seed, Stream::Initials);
    let x: Vec<f64> = (0..100).map(|_| irng.random_range(-5.0..5.0)).collect();
    RhsInput { graph, costs, x }
}

/// The 10-agent cycle with quartic costs, the shape of the cycle reference.
pub fn cycle_input(seed: u64) -> (GraphSchedule, CostEnsemble, Vec<f64>) {
    let mut wrng = stream(seed, Stream::Weights);
    let graph = cycle_graph(10, 0.5, 1.5, &mut wrng).unwrap();
    let mut crng = stream(seed, Stream::Costs);
    let costs = random_quartic_ensemble(10, &mut crng);
    let mut irng = stream(seed, Stream::Initials);
    let mut x: Vec<f64> = (0..10).map(|_| irng.random_range(-6.0..6.0)).collect();
    let offset = x.iter().sum::<f64>() / 10.0;
    for v in &mut x {
        *v -= offset;
    }
    (GraphSchedule::static_graph(graph), costs, x)
}
