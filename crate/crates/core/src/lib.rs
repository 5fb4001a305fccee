//! Simulation engine for distributed resource allocation over time-varying
//! undirected networks.
//!
//! A group of `n` agents jointly minimizes `F(x) = sum_i f_i(x_i)` subject to
//! `sum_i x_i = K`, where each agent knows only its own strictly convex cost
//! and exchanges gradient values with its current neighbors. The engine
//! provides:
//!
//! * consensus-type gradient protocols: the linear baseline, the sign-power
//!   baseline, and the combined two-exponent dynamics (plus its vector-valued
//!   extension), integrated with fixed-step explicit Euler over a
//!   piecewise-constant graph schedule ([`dynamics`]);
//! * weighted undirected graphs, switching schedules, and the joint
//!   connectivity check on unions of snapshots ([`graph`]);
//! * strictly convex cost families with gradients and monotone gradient
//!   inversion ([`cost`]);
//! * an independent KKT oracle for the constrained optimum, cross-checked by
//!   brute-force grid search ([`oracle`]);
//! * scenario assembly, metrics, protocol comparisons, and the built-in
//!   reference scenarios ([`harness`]), driven by a plain-text config format
//!   ([`config`]).
//!
//! All randomness derives from a single scenario seed through fixed,
//! documented streams ([`rng`]), so every run is bit-reproducible.

pub mod config;
pub mod cost;
pub mod dynamics;
pub mod graph;
pub mod harness;
pub mod oracle;
pub mod rng;

pub use cost::{CostEnsemble, CostError, CostFunction};
pub use dynamics::{
    sgn_pow, sgn_pow_vec, DynamicsError, ProtocolKind, ProtocolSpec, SimState, Termination,
    Trajectory,
};
pub use graph::{GraphError, GraphSchedule, GraphSnapshot};
pub use harness::{ComparisonReport, MetricSample, Scenario};
pub use oracle::{KktSolution, OracleError};
