//! Protocol right-hand sides and the fixed-step integrator.
//!
//! Each agent `i` shares its gradient `psi_i = df_i/dx_i` with its current
//! neighbors and moves against the weighted disagreement:
//!
//! ```text
//! dx_i/dt = - sum_{j in N_i} W_ij ( eta1 sgn_pow(psi_i - psi_j, v1)
//!                                 + eta2 sgn_pow(psi_i - psi_j, v2) )
//! ```
//!
//! where `sgn_pow(x, v) = x |x|^(v-1)` is the odd power map. With
//! `v1 = v2 = 1` this is the classic linear protocol; with `0 < v1 < 1` the
//! flow is non-Lipschitz at consensus and fast close to it; with `v2 > 1` it
//! is superlinear far from consensus. The combined form is fast in both
//! regimes. The vector-valued variant applies the power map to the gradient
//! difference vector scaled by its Euclidean norm.
//!
//! Because the weights are symmetric and the power map is odd, every pairwise
//! exchange moves resources between exactly two agents, so the allocated
//! total is conserved to rounding. Integration is explicit Euler
//! with a fixed step, mirroring how such protocols are simulated in practice;
//! higher-order integrators buy nothing against a non-Lipschitz right-hand
//! side. Graph switching is aligned to step boundaries, so the topology under
//! each step is unambiguous.

use crate::cost::CostEnsemble;
use crate::graph::{GraphSchedule, GraphSnapshot};

/// Below this magnitude the power map returns exactly zero, guarding zero
/// raised to a negative power.
const SGN_POW_ZERO: f64 = 1e-300;

/// Errors from protocol validation and integration.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DynamicsError {
    /// Gains/exponents outside the protocol's admissible ranges.
    #[error("invalid protocol: {0}")]
    InvalidSpec(String),
    /// State, cost, or graph dimensions disagree.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    /// A gradient became non-finite during integration.
    #[error("numerical divergence at agent {agent}{}", t.map(|t| format!(" at t = {t}")).unwrap_or_default())]
    NumericalDivergence { agent: usize, t: Option<f64> },
    /// A segment duration is not an integer multiple of the step size.
    #[error("schedule segment {segment} duration {duration} is not an integer multiple of step size {h}")]
    UnalignedSchedule { segment: usize, duration: f64, h: f64 },
    /// Invalid integration options.
    #[error("invalid run options: {0}")]
    InvalidOptions(String),
}

/// Which right-hand side to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    /// `v1 = v2 = 1`: plain weighted gradient disagreement.
    Linear,
    /// Single non-Lipschitz term, `0 < v1 < 1`, `eta2 = 0`.
    SignPower,
    /// Both terms; fast near and far from consensus for `0 < v1 < 1 < v2`.
    Combined,
    /// Combined dynamics on d-dimensional states with Euclidean-norm scaling.
    CombinedVector,
}

impl ProtocolKind {
    /// Short machine-friendly name, used in file names and reports.
    pub fn slug(&self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::SignPower => "sign-power",
            Self::Combined => "combined",
            Self::CombinedVector => "combined-vector",
        }
    }
}

/// A fully parameterized protocol right-hand side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProtocolSpec {
    pub kind: ProtocolKind,
    pub eta1: f64,
    pub eta2: f64,
    pub v1: f64,
    pub v2: f64,
    pub dim: usize,
}

impl ProtocolSpec {
    pub fn linear(eta1: f64) -> Result<Self, DynamicsError> {
        let spec = Self { kind: ProtocolKind::Linear, eta1, eta2: 0.0, v1: 1.0, v2: 1.0, dim: 1 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn sign_power(eta1: f64, v1: f64) -> Result<Self, DynamicsError> {
        let spec = Self { kind: ProtocolKind::SignPower, eta1, eta2: 0.0, v1, v2: 1.0, dim: 1 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn combined(eta1: f64, eta2: f64, v1: f64, v2: f64) -> Result<Self, DynamicsError> {
        let spec = Self { kind: ProtocolKind::Combined, eta1, eta2, v1, v2, dim: 1 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn combined_vector(
        eta1: f64,
        eta2: f64,
        v1: f64,
        v2: f64,
        dim: usize,
    ) -> Result<Self, DynamicsError> {
        let spec = Self { kind: ProtocolKind::CombinedVector, eta1, eta2, v1, v2, dim };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks the admissible parameter ranges.
    ///
    /// The exponents allow the closed boundaries `v1 = 1` and `v2 = 1`, where
    /// the combined dynamics degenerates to the linear one; the reduction
    /// identities rely on constructing exactly that. The fast-convergence
    /// regime is the strict `0 < v1 < 1 < v2`.
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let fail = |msg: String| Err(DynamicsError::InvalidSpec(msg));
        if !self.eta1.is_finite() || self.eta1 <= 0.0 {
            return fail(format!("eta1 must be positive, got {}", self.eta1));
        }
        if !self.eta2.is_finite() || self.eta2 < 0.0 {
            return fail(format!("eta2 must be nonnegative, got {}", self.eta2));
        }
        if !self.v1.is_finite() || self.v1 <= 0.0 || self.v1 > 1.0 {
            return fail(format!("v1 must lie in (0, 1], got {}", self.v1));
        }
        if !self.v2.is_finite() || self.v2 < 1.0 {
            return fail(format!("v2 must be >= 1, got {}", self.v2));
        }
        if self.dim == 0 {
            return fail("dim must be at least 1".into());
        }
        match self.kind {
            ProtocolKind::Linear => {
                if self.v1 != 1.0 || self.v2 != 1.0 {
                    return fail("linear protocol fixes v1 = v2 = 1".into());
                }
            }
            ProtocolKind::SignPower => {
                if self.v1 >= 1.0 {
                    return fail(format!("sign-power requires 0 < v1 < 1, got {}", self.v1));
                }
                if self.eta2 != 0.0 {
                    return fail(format!("sign-power requires eta2 = 0, got {}", self.eta2));
                }
            }
            ProtocolKind::Combined => {}
            ProtocolKind::CombinedVector => return Ok(()),
        }
        if self.dim != 1 {
            return fail(format!("{} protocol is scalar; got dim = {}", self.kind.slug(), self.dim));
        }
        Ok(())
    }

    /// One-line description for summaries.
    pub fn describe(&self) -> String {
        match self.kind {
            ProtocolKind::Linear => format!("linear eta1={}", self.eta1),
            ProtocolKind::SignPower => format!("sign-power eta1={} v1={}", self.eta1, self.v1),
            ProtocolKind::Combined => format!(
                "combined eta1={} eta2={} v1={} v2={}",
                self.eta1, self.eta2, self.v1, self.v2
            ),
            ProtocolKind::CombinedVector => format!(
                "combined-vector eta1={} eta2={} v1={} v2={} dim={}",
                self.eta1, self.eta2, self.v1, self.v2, self.dim
            ),
        }
    }
}

/// The odd power map `sgn_pow(x, v) = x |x|^(v-1)`.
///
/// Odd exactly: `sgn_pow(-x, v) == -sgn_pow(x, v)` bit for bit. Returns
/// exactly zero when `|x| < 1e-300`, which guards zero (and denormals)
/// raised to a negative power for `v < 1`.
pub fn sgn_pow(x: f64, v: f64) -> f64 {
    debug_assert!(v > 0.0);
    if x.abs() < SGN_POW_ZERO {
        return 0.0;
    }
    x * x.abs().powf(v - 1.0)
}

/// Vector power map `x ||x||^(v-1)` with the Euclidean norm.
///
/// The zero vector maps to the zero vector; a 1-dimensional input reduces
/// exactly to [`sgn_pow`] (the norm is taken as the absolute value, not
/// `sqrt(x^2)`).
pub fn sgn_pow_vec(x: &[f64], v: f64) -> Vec<f64> {
    debug_assert!(v > 0.0);
    let norm = if x.len() == 1 {
        x[0].abs()
    } else {
        x.iter().map(|&c| c * c).sum::<f64>().sqrt()
    };
    if norm < SGN_POW_ZERO {
        return vec![0.0; x.len()];
    }
    let scale = norm.powf(v - 1.0);
    x.iter().map(|&c| c * scale).collect()
}

/// Multi-agent state at one instant: `x` holds `n * dim` entries,
/// agent-major (`x[i * dim + c]`).
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub x: Vec<f64>,
}

impl SimState {
    pub fn new(t: f64, x: Vec<f64>) -> Self {
        Self { t, x }
    }
}

/// Why a run stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    /// Ran to `t_end`.
    Completed,
    /// Gradient dispersion stayed below the stop tolerance long enough.
    ToleranceReached { t: f64 },
    /// A gradient or the total cost became non-finite.
    Diverged { agent: usize, t: f64 },
    /// The total cost rose beyond the discretization allowance for three
    /// consecutive samples; the step size is too large for this scenario.
    StepTooLarge { t: f64 },
}

impl Termination {
    /// True for terminations that indicate numerical failure.
    pub fn is_failure(&self) -> bool {
        matches!(self, Self::Diverged { .. } | Self::StepTooLarge { .. })
    }
}

/// One recorded sample of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePoint {
    pub step: usize,
    pub t: f64,
    /// Agent states, `n * dim` entries, agent-major.
    pub x: Vec<f64>,
    /// Total cost `F(x)`.
    pub cost: f64,
    /// Gradient dispersion: `max psi - min psi` for scalar states, the
    /// largest pairwise gradient distance for vector states.
    pub dispersion: f64,
}

/// Recorded time series of a run. Sample times are strictly increasing;
/// the initial state and the final reached state are always included.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub n: usize,
    pub dim: usize,
    pub h: f64,
    pub sample_every: usize,
    pub samples: Vec<SamplePoint>,
    pub termination: Termination,
}

impl Trajectory {
    /// The last recorded sample.
    pub fn last(&self) -> &SamplePoint {
        self.samples.last().expect("a trajectory always has the initial sample")
    }
}

/// Integration parameters for [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Integration step size.
    pub h: f64,
    pub t_end: f64,
    /// Record every this many steps (the final state is always recorded).
    pub sample_every: usize,
    /// Stop early once dispersion stays below this for `stop_patience`
    /// consecutive samples.
    pub stop_tol: Option<f64>,
    pub stop_patience: usize,
}

impl RunOptions {
    pub fn new(h: f64, t_end: f64, sample_every: usize) -> Self {
        Self { h, t_end, sample_every, stop_tol: None, stop_patience: 3 }
    }

    fn validate(&self) -> Result<(), DynamicsError> {
        if !self.h.is_finite() || self.h <= 0.0 {
            return Err(DynamicsError::InvalidOptions(format!("h must be positive, got {}", self.h)));
        }
        if !self.t_end.is_finite() || self.t_end <= 0.0 {
            return Err(DynamicsError::InvalidOptions(format!(
                "t_end must be positive, got {}",
                self.t_end
            )));
        }
        if self.sample_every == 0 {
            return Err(DynamicsError::InvalidOptions("sample_every must be at least 1".into()));
        }
        if self.stop_tol.is_some() && self.stop_patience == 0 {
            return Err(DynamicsError::InvalidOptions("stop_patience must be at least 1".into()));
        }
        Ok(())
    }
}

fn check_dimensions(
    spec: &ProtocolSpec,
    n: usize,
    costs: &[CostEnsemble],
    x: &[f64],
) -> Result<(), DynamicsError> {
    if costs.len() != spec.dim {
        return Err(DynamicsError::DimensionMismatch(format!(
            "expected {} cost ensembles for dim = {}, got {}",
            spec.dim,
            spec.dim,
            costs.len()
        )));
    }
    for (c, ensemble) in costs.iter().enumerate() {
        if ensemble.n() != n {
            return Err(DynamicsError::DimensionMismatch(format!(
                "cost ensemble {c} has {} agents, graph has {n}",
                ensemble.n()
            )));
        }
    }
    if x.len() != n * spec.dim {
        return Err(DynamicsError::DimensionMismatch(format!(
            "state has {} entries, expected n * dim = {}",
            x.len(),
            n * spec.dim
        )));
    }
    Ok(())
}

/// Writes all agent gradients into `psi`; reports the first agent whose
/// gradient is non-finite.
fn gradients_into(costs: &[CostEnsemble], x: &[f64], psi: &mut [f64]) -> Result<(), usize> {
    let dim = costs.len();
    for (i, chunk) in x.chunks_exact(dim).enumerate() {
        for (c, (&xc, ensemble)) in chunk.iter().zip(costs).enumerate() {
            let g = ensemble.cost(i).grad(xc);
            if !g.is_finite() {
                return Err(i);
            }
            psi[i * dim + c] = g;
        }
    }
    Ok(())
}

/// Total cost `F(x)` summed over agents and coordinates.
fn total_cost(costs: &[CostEnsemble], x: &[f64]) -> f64 {
    let dim = costs.len();
    x.chunks_exact(dim)
        .enumerate()
        .map(|(i, chunk)| {
            chunk.iter().zip(costs).map(|(&xc, e)| e.cost(i).eval(xc)).sum::<f64>()
        })
        .sum()
}

/// Gradient dispersion over the ensemble.
fn dispersion_of(psi: &[f64], n: usize, dim: usize) -> f64 {
    if dim == 1 {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &p in psi {
            lo = lo.min(p);
            hi = hi.max(p);
        }
        if n == 0 {
            0.0
        } else {
            hi - lo
        }
    } else {
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in (i + 1)..n {
                let d2: f64 = (0..dim)
                    .map(|c| {
                        let d = psi[i * dim + c] - psi[j * dim + c];
                        d * d
                    })
                    .sum();
                worst = worst.max(d2.sqrt());
            }
        }
        worst
    }
}

/// Accumulates the protocol right-hand side into `deriv`.
///
/// Each undirected link is visited once and its contribution applied with
/// opposite signs to the two endpoints, so a pair exchange is exactly
/// antisymmetric in floating point, which is what conserves the state sum.
fn accumulate_rhs(spec: &ProtocolSpec, graph: &GraphSnapshot, psi: &[f64], deriv: &mut [f64]) {
    let n = graph.n();
    let dim = spec.dim;
    deriv.fill(0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            let w = graph.weight(i, j);
            if w == 0.0 {
                continue;
            }
            if dim == 1 {
                let delta = psi[i] - psi[j];
                let g = spec.eta1 * sgn_pow(delta, spec.v1) + spec.eta2 * sgn_pow(delta, spec.v2);
                let term = w * g;
                deriv[i] -= term;
                deriv[j] += term;
            } else {
                let (pi, pj) = (i * dim, j * dim);
                let norm = (0..dim)
                    .map(|c| {
                        let d = psi[pi + c] - psi[pj + c];
                        d * d
                    })
                    .sum::<f64>()
                    .sqrt();
                if norm < SGN_POW_ZERO {
                    continue;
                }
                let scale =
                    spec.eta1 * norm.powf(spec.v1 - 1.0) + spec.eta2 * norm.powf(spec.v2 - 1.0);
                for c in 0..dim {
                    let delta = psi[pi + c] - psi[pj + c];
                    let term = w * scale * delta;
                    deriv[pi + c] -= term;
                    deriv[pj + c] += term;
                }
            }
        }
    }
}

/// Evaluates the protocol right-hand side at state `x` under `graph`.
///
/// `costs` holds one ensemble per state coordinate (one entry for scalar
/// protocols).
pub fn rhs(
    spec: &ProtocolSpec,
    graph: &GraphSnapshot,
    costs: &[CostEnsemble],
    x: &[f64],
) -> Result<Vec<f64>, DynamicsError> {
    spec.validate()?;
    check_dimensions(spec, graph.n(), costs, x)?;
    let mut psi = vec![0.0; x.len()];
    gradients_into(costs, x, &mut psi)
        .map_err(|agent| DynamicsError::NumericalDivergence { agent, t: None })?;
    let mut deriv = vec![0.0; x.len()];
    accumulate_rhs(spec, graph, &psi, &mut deriv);
    Ok(deriv)
}

/// One explicit Euler step under the snapshot governing `state.t`.
pub fn step(
    spec: &ProtocolSpec,
    schedule: &GraphSchedule,
    costs: &[CostEnsemble],
    state: &SimState,
    h: f64,
) -> Result<SimState, DynamicsError> {
    if !h.is_finite() || h <= 0.0 {
        return Err(DynamicsError::InvalidOptions(format!("h must be positive, got {h}")));
    }
    let graph = schedule
        .snapshot_at(state.t)
        .map_err(|e| DynamicsError::InvalidOptions(e.to_string()))?;
    let deriv = rhs(spec, graph, costs, &state.x)?;
    let x = state.x.iter().zip(&deriv).map(|(&xi, &di)| xi + h * di).collect();
    Ok(SimState::new(state.t + h, x))
}

/// Segment lookup in integer step space, so switch instants never depend on
/// accumulated floating-point time.
struct ScheduleCursor<'a> {
    schedule: &'a GraphSchedule,
    prefix: Vec<usize>, // cumulative step counts per segment
    total: usize,
    time_invariant: bool,
}

impl<'a> ScheduleCursor<'a> {
    fn new(schedule: &'a GraphSchedule, h: f64) -> Result<Self, DynamicsError> {
        let segments = schedule.segments();
        if segments.len() == 1 {
            return Ok(Self { schedule, prefix: vec![], total: 0, time_invariant: true });
        }
        let mut prefix = Vec::with_capacity(segments.len());
        let mut total = 0usize;
        for (idx, (duration, _)) in segments.iter().enumerate() {
            let ratio = duration / h;
            let steps = ratio.round();
            if steps < 1.0 || (ratio - steps).abs() > 1e-6 * ratio.max(1.0) {
                return Err(DynamicsError::UnalignedSchedule {
                    segment: idx,
                    duration: *duration,
                    h,
                });
            }
            total += steps as usize;
            prefix.push(total);
        }
        Ok(Self { schedule, prefix, total, time_invariant: false })
    }

    fn snapshot(&self, k: usize) -> &'a GraphSnapshot {
        let segments = self.schedule.segments();
        if self.time_invariant {
            return &segments[0].1;
        }
        let pos = if self.schedule.cyclic() {
            k % self.total
        } else if k >= self.total {
            return &segments[segments.len() - 1].1;
        } else {
            k
        };
        let idx = self.prefix.partition_point(|&cum| cum <= pos);
        &segments[idx].1
    }
}

/// Integrates the protocol from `x0` over the schedule.
///
/// Samples are recorded at `t = 0`, every `sample_every` steps, and at the
/// final reached state. Runtime failures (divergence, or the total cost
/// rising beyond `1e-6 * max(1, |F(x0)|)` for three consecutive samples)
/// abort the run but keep the partial trajectory, with the cause in
/// [`Trajectory::termination`].
pub fn run(
    spec: &ProtocolSpec,
    schedule: &GraphSchedule,
    costs: &[CostEnsemble],
    x0: &[f64],
    opts: &RunOptions,
) -> Result<Trajectory, DynamicsError> {
    spec.validate()?;
    opts.validate()?;
    let n = schedule.n();
    let dim = spec.dim;
    check_dimensions(spec, n, costs, x0)?;
    let cursor = ScheduleCursor::new(schedule, opts.h)?;
    let total_steps = (opts.t_end / opts.h).round().max(1.0) as usize;

    let mut x = x0.to_vec();
    let mut psi = vec![0.0; n * dim];
    let mut deriv = vec![0.0; n * dim];

    let mut samples = Vec::with_capacity(total_steps / opts.sample_every + 2);
    let mut termination = Termination::Completed;

    let f0 = total_cost(costs, &x);
    let eps_disc = 1e-6 * f0.abs().max(1.0);
    let mut prev_cost = f0;
    let mut rises = 0usize;
    let mut calm = 0usize;

    match gradients_into(costs, &x, &mut psi) {
        Ok(()) => {
            samples.push(SamplePoint {
                step: 0,
                t: 0.0,
                x: x.clone(),
                cost: f0,
                dispersion: dispersion_of(&psi, n, dim),
            });
        }
        Err(agent) => {
            return Ok(Trajectory {
                n,
                dim,
                h: opts.h,
                sample_every: opts.sample_every,
                samples,
                termination: Termination::Diverged { agent, t: 0.0 },
            });
        }
    }

    for k in 0..total_steps {
        let graph = cursor.snapshot(k);
        if let Err(agent) = gradients_into(costs, &x, &mut psi) {
            termination = Termination::Diverged { agent, t: k as f64 * opts.h };
            break;
        }
        accumulate_rhs(spec, graph, &psi, &mut deriv);
        for (xi, di) in x.iter_mut().zip(&deriv) {
            *xi += opts.h * di;
        }
        let done = k + 1;
        if done % opts.sample_every == 0 || done == total_steps {
            let t = done as f64 * opts.h;
            if let Err(agent) = gradients_into(costs, &x, &mut psi) {
                termination = Termination::Diverged { agent, t };
                break;
            }
            let cost = total_cost(costs, &x);
            if !cost.is_finite() {
                let agent = x
                    .iter()
                    .position(|v| !v.is_finite())
                    .map(|idx| idx / dim)
                    .unwrap_or(0);
                termination = Termination::Diverged { agent, t };
                break;
            }
            let disp = dispersion_of(&psi, n, dim);
            samples.push(SamplePoint { step: done, t, x: x.clone(), cost, dispersion: disp });
            if cost > prev_cost + eps_disc {
                rises += 1;
                if rises >= 3 {
                    termination = Termination::StepTooLarge { t };
                    break;
                }
            } else {
                rises = 0;
            }
            prev_cost = cost;
            if let Some(tol) = opts.stop_tol {
                if disp < tol {
                    calm += 1;
                    if calm >= opts.stop_patience {
                        termination = Termination::ToleranceReached { t };
                        break;
                    }
                } else {
                    calm = 0;
                }
            }
        }
    }

    Ok(Trajectory {
        n,
        dim,
        h: opts.h,
        sample_every: opts.sample_every,
        samples,
        termination,
    })
}
