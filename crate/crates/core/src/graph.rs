//! Weighted undirected graphs, switching schedules, and connectivity checks.
//!
//! A [`GraphSnapshot`] is the network at one instant: a symmetric nonnegative
//! weight matrix with zero diagonal, `W_ij > 0` exactly when agents `i` and
//! `j` can exchange messages. A [`GraphSchedule`] is a piecewise-constant
//! sequence of snapshots, optionally repeated periodically. The joint
//! connectivity condition on a schedule (every window-length union of
//! snapshots is connected) is what the convergence of the dynamics rests on,
//! even when no individual snapshot is connected.

use rand::Rng;

/// Errors from snapshot validation and schedule queries.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GraphError {
    /// `W_ij != W_ji` at the reported index pair.
    #[error("asymmetric weights at ({i}, {j}): {w_ij} vs {w_ji}")]
    SymmetryViolation { i: usize, j: usize, w_ij: f64, w_ji: f64 },
    /// A negative weight at the reported index pair.
    #[error("negative weight {w} at ({i}, {j})")]
    NegativeWeight { i: usize, j: usize, w: f64 },
    /// A nonzero diagonal entry (self-loops are not allowed).
    #[error("nonzero diagonal entry {w} at ({i}, {i})")]
    NonzeroDiagonal { i: usize, w: f64 },
    /// Snapshots with different agent counts were combined.
    #[error("agent count mismatch: {expected} vs {got}")]
    DimensionMismatch { expected: usize, got: usize },
    /// A schedule was queried at a negative time.
    #[error("invalid query time {t}: schedules start at t = 0")]
    InvalidTime { t: f64 },
    /// Malformed snapshot or schedule construction input.
    #[error("{0}")]
    InvalidInput(String),
    /// Doubly stochastic scaling did not converge for this graph.
    #[error("doubly stochastic normalization failed: {0}")]
    NormalizationFailed(String),
}

/// Validates a raw row-major `n x n` weight matrix.
///
/// Checks, in order for each index pair `(i, j)` with `i < j`: symmetry, then
/// sign; the diagonal must be exactly zero. Reports the first violation in
/// row-major scan order.
pub fn validate_weights(n: usize, weights: &[f64]) -> Result<(), GraphError> {
    if weights.len() != n * n {
        return Err(GraphError::InvalidInput(format!(
            "expected {} weights for n = {n}, got {}",
            n * n,
            weights.len()
        )));
    }
    for i in 0..n {
        let d = weights[i * n + i];
        if d != 0.0 {
            return Err(GraphError::NonzeroDiagonal { i, w: d });
        }
        for j in (i + 1)..n {
            let w_ij = weights[i * n + j];
            let w_ji = weights[j * n + i];
            if w_ij != w_ji {
                return Err(GraphError::SymmetryViolation { i, j, w_ij, w_ji });
            }
            if w_ij < 0.0 {
                return Err(GraphError::NegativeWeight { i, j, w: w_ij });
            }
            if !w_ij.is_finite() {
                return Err(GraphError::InvalidInput(format!(
                    "non-finite weight {w_ij} at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// The communication network at one instant.
///
/// Immutable after construction; construction validates the invariants, so a
/// snapshot in hand is always symmetric, nonnegative, and hollow. Dense
/// storage: the target sizes are at most a few hundred agents.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSnapshot {
    n: usize,
    weights: Vec<f64>, // row-major n x n
}

impl GraphSnapshot {
    /// Builds a snapshot from a row-major weight matrix, validating it.
    pub fn new(n: usize, weights: Vec<f64>) -> Result<Self, GraphError> {
        validate_weights(n, &weights)?;
        Ok(Self { n, weights })
    }

    /// Builds a snapshot from undirected edges `(i, j, w)`.
    ///
    /// Each edge is written symmetrically. Duplicate edges and self-loops are
    /// rejected; weights must be positive (an absent edge is simply omitted).
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        let mut weights = vec![0.0; n * n];
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(GraphError::InvalidInput(format!(
                    "edge ({i}, {j}) out of range for n = {n}"
                )));
            }
            if i == j {
                return Err(GraphError::NonzeroDiagonal { i, w });
            }
            if w < 0.0 {
                return Err(GraphError::NegativeWeight { i: i.min(j), j: i.max(j), w });
            }
            if weights[i * n + j] != 0.0 {
                return Err(GraphError::InvalidInput(format!("duplicate edge ({i}, {j})")));
            }
            weights[i * n + j] = w;
            weights[j * n + i] = w;
        }
        Self::new(n, weights)
    }

    /// Graph with no edges.
    pub fn empty(n: usize) -> Self {
        Self { n, weights: vec![0.0; n * n] }
    }

    /// Agent count.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Weight of the link `(i, j)`; zero when absent.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n + j]
    }

    /// Raw row-major weight matrix.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Neighbors of `i` with their link weights.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let row = &self.weights[i * self.n..(i + 1) * self.n];
        row.iter().enumerate().filter(|&(_, &w)| w > 0.0).map(|(j, &w)| (j, w))
    }

    /// Undirected edges `(i, j, w)` with `i < j`, row-major order.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let w = self.weight(i, j);
                if w > 0.0 {
                    out.push((i, j, w));
                }
            }
        }
        out
    }

    /// Edge pairs `(i, j)` with `i < j`, ignoring weights.
    pub fn edge_set(&self) -> Vec<(usize, usize)> {
        self.edges().into_iter().map(|(i, j, _)| (i, j)).collect()
    }

    /// Re-checks the construction invariants.
    pub fn validate(&self) -> Result<(), GraphError> {
        validate_weights(self.n, &self.weights)
    }

    /// Whether the graph contains a spanning tree.
    ///
    /// For undirected graphs this is exactly connectivity, checked by an
    /// iterative traversal from vertex 0. The empty and single-vertex graphs
    /// count as connected.
    pub fn has_spanning_tree(&self) -> bool {
        if self.n <= 1 {
            return true;
        }
        let mut seen = vec![false; self.n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for (j, _) in self.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == self.n
    }

    /// Edge-wise union of snapshots: a link is present iff present in any
    /// input, with the union weight being the sum of input weights.
    ///
    /// The summed weight is a convention; connectivity checks only care about
    /// the edge set.
    pub fn union(snapshots: &[GraphSnapshot]) -> Result<GraphSnapshot, GraphError> {
        let first = snapshots
            .first()
            .ok_or_else(|| GraphError::InvalidInput("union of empty snapshot list".into()))?;
        let n = first.n;
        let mut weights = vec![0.0; n * n];
        for snap in snapshots {
            if snap.n != n {
                return Err(GraphError::DimensionMismatch { expected: n, got: snap.n });
            }
            for (dst, src) in weights.iter_mut().zip(&snap.weights) {
                *dst += src;
            }
        }
        Ok(GraphSnapshot { n, weights })
    }

    /// Symmetric doubly stochastic rescaling `W' = D W D` via Sinkhorn
    /// iteration, for baseline comparisons that assume stochastic weights.
    ///
    /// Not every symmetric hollow matrix admits such a scaling (a star graph
    /// does not); iteration failure is reported rather than forced.
    pub fn normalize_doubly_stochastic(&self, tol: f64, max_iters: usize) -> Result<GraphSnapshot, GraphError> {
        let n = self.n;
        let mut d = vec![1.0; n];
        let mut row_sums = vec![0.0; n];
        for _ in 0..max_iters {
            let mut worst: f64 = 0.0;
            for i in 0..n {
                let r: f64 = (0..n).map(|j| d[i] * d[j] * self.weight(i, j)).sum();
                if !r.is_finite() || r <= 0.0 {
                    return Err(GraphError::NormalizationFailed(format!(
                        "row {i} scaling collapsed to {r}; no symmetric doubly stochastic form"
                    )));
                }
                row_sums[i] = r;
                worst = worst.max((r - 1.0).abs());
            }
            if worst <= tol {
                let mut weights = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        weights[i * n + j] = d[i] * d[j] * self.weight(i, j);
                    }
                }
                // Symmetrize exactly against rounding in the scale products.
                for i in 0..n {
                    for j in (i + 1)..n {
                        let w = weights[i * n + j];
                        weights[j * n + i] = w;
                    }
                }
                return Ok(GraphSnapshot { n, weights });
            }
            for i in 0..n {
                d[i] /= row_sums[i].sqrt();
            }
        }
        Err(GraphError::NormalizationFailed(format!(
            "no convergence within {max_iters} iterations"
        )))
    }
}

/// A piecewise-constant, optionally periodic sequence of snapshots.
///
/// Segment intervals are right-open: a query exactly at a segment join
/// belongs to the later segment, so lookups at switch instants are
/// deterministic. When not cyclic, the last snapshot persists forever.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSchedule {
    segments: Vec<(f64, GraphSnapshot)>,
    cyclic: bool,
}

impl GraphSchedule {
    /// Builds a schedule from `(duration, snapshot)` segments.
    ///
    /// Durations must be strictly positive and all snapshots must share the
    /// same agent count.
    pub fn new(segments: Vec<(f64, GraphSnapshot)>, cyclic: bool) -> Result<Self, GraphError> {
        let first = segments
            .first()
            .ok_or_else(|| GraphError::InvalidInput("schedule needs at least one segment".into()))?;
        let n = first.1.n();
        for (dur, snap) in &segments {
            if !dur.is_finite() || *dur <= 0.0 {
                return Err(GraphError::InvalidInput(format!(
                    "segment duration must be positive and finite, got {dur}"
                )));
            }
            if snap.n() != n {
                return Err(GraphError::DimensionMismatch { expected: n, got: snap.n() });
            }
        }
        Ok(Self { segments, cyclic })
    }

    /// A schedule that holds one snapshot forever.
    pub fn static_graph(snapshot: GraphSnapshot) -> Self {
        Self { segments: vec![(1.0, snapshot)], cyclic: true }
    }

    /// Agent count shared by all segments.
    pub fn n(&self) -> usize {
        self.segments[0].1.n()
    }

    /// The `(duration, snapshot)` segments.
    pub fn segments(&self) -> &[(f64, GraphSnapshot)] {
        &self.segments
    }

    /// Whether the schedule repeats periodically.
    pub fn cyclic(&self) -> bool {
        self.cyclic
    }

    /// Total duration of one pass over the segments.
    pub fn cycle_len(&self) -> f64 {
        self.segments.iter().map(|(d, _)| d).sum()
    }

    /// The snapshot governing time `t`.
    ///
    /// Segments are right-open, cyclic schedules wrap `t` modulo the cycle
    /// length, and non-cyclic schedules persist their last snapshot.
    pub fn snapshot_at(&self, t: f64) -> Result<&GraphSnapshot, GraphError> {
        if !t.is_finite() || t < 0.0 {
            return Err(GraphError::InvalidTime { t });
        }
        let total = self.cycle_len();
        let mut tau = if self.cyclic { t % total } else { t };
        for (dur, snap) in &self.segments {
            if tau < *dur {
                return Ok(snap);
            }
            tau -= dur;
        }
        // Only reachable past the end of a non-cyclic schedule, or at the
        // exact cycle boundary after rounding; both map to the edges below.
        if self.cyclic {
            Ok(&self.segments[0].1)
        } else {
            Ok(&self.segments[self.segments.len() - 1].1)
        }
    }

    /// Union of every snapshot active in the window `[start, start + window)`.
    pub fn union_over(&self, start: f64, window: f64) -> Result<GraphSnapshot, GraphError> {
        if !start.is_finite() || start < 0.0 {
            return Err(GraphError::InvalidTime { t: start });
        }
        if !window.is_finite() || window <= 0.0 {
            return Err(GraphError::InvalidInput(format!("window must be positive, got {window}")));
        }
        let total = self.cycle_len();
        let mut active: Vec<&GraphSnapshot> = Vec::new();
        if self.cyclic && window >= total {
            active.extend(self.segments.iter().map(|(_, s)| s));
        } else {
            // Walk segment boundaries from `start` until the window is covered.
            let mut t = start;
            let end = start + window;
            while t < end {
                let snap = self.snapshot_at(t)?;
                if !active.iter().any(|s| std::ptr::eq(*s, snap)) {
                    active.push(snap);
                }
                let into = if self.cyclic { t % total } else { t };
                if !self.cyclic && into >= total {
                    break; // last snapshot persists; nothing more changes
                }
                // Distance to the end of the current segment.
                let mut acc = 0.0;
                let mut remaining = 0.0;
                for (dur, _) in &self.segments {
                    acc += dur;
                    if into < acc {
                        remaining = acc - into;
                        break;
                    }
                }
                t += remaining.max(f64::EPSILON);
            }
        }
        let snaps: Vec<GraphSnapshot> = active.into_iter().cloned().collect();
        GraphSnapshot::union(&snaps)
    }

    /// Joint connectivity over `window`-length intervals.
    ///
    /// True iff the union of snapshots over every window starting at a
    /// segment boundary within one cycle is connected. This is the checkable
    /// form of the standing connectivity assumption: unions over bounded
    /// intervals must contain a spanning tree even when no snapshot does.
    pub fn check_assumption_tree(&self, window: f64) -> bool {
        if !window.is_finite() || window <= 0.0 {
            return false;
        }
        let mut boundary = 0.0;
        for (dur, _) in &self.segments {
            match self.union_over(boundary, window) {
                Ok(union) => {
                    if !union.has_spanning_tree() {
                        return false;
                    }
                }
                Err(_) => return false,
            }
            boundary += dur;
        }
        true
    }
}

/// Cycle graph on `n` vertices with link weights drawn from `[w_min, w_max]`.
pub fn cycle_graph<R: Rng>(n: usize, w_min: f64, w_max: f64, rng: &mut R) -> Result<GraphSnapshot, GraphError> {
    if n < 3 {
        return Err(GraphError::InvalidInput(format!("cycle graph needs n >= 3, got {n}")));
    }
    let edges: Vec<(usize, usize, f64)> = (0..n)
        .map(|i| (i, (i + 1) % n, rng.random_range(w_min..=w_max)))
        .collect();
    let edges: Vec<_> = edges.into_iter().map(|(i, j, w)| (i.min(j), i.max(j), w)).collect();
    GraphSnapshot::from_edges(n, &edges)
}

/// Scale-free tree by preferential attachment, weights in `[w_min, w_max]`.
///
/// Every new vertex attaches to an existing vertex chosen proportionally to
/// degree, giving the hub-dominated structure typical of scale-free networks
/// while staying connected with the minimum number of links.
pub fn scale_free_tree<R: Rng>(n: usize, w_min: f64, w_max: f64, rng: &mut R) -> Result<GraphSnapshot, GraphError> {
    if n < 2 {
        return Err(GraphError::InvalidInput(format!("scale-free tree needs n >= 2, got {n}")));
    }
    let mut edges = Vec::with_capacity(n - 1);
    // Each vertex appears in `targets` once per incident edge.
    let mut targets = vec![0usize];
    for v in 1..n {
        let u = targets[rng.random_range(0..targets.len())];
        let w = rng.random_range(w_min..=w_max);
        edges.push((u.min(v), u.max(v), w));
        targets.push(u);
        targets.push(v);
    }
    GraphSnapshot::from_edges(n, &edges)
}

/// Splits a connected base graph into `count` snapshots by random link
/// deletions, such that every snapshot is disconnected but the union over
/// one cycle recovers the base graph's connectivity.
///
/// Each snapshot drops each base link with probability `deletion_fraction`
/// (at least one link always drops, which disconnects tree-like bases). The
/// whole deletion set is regenerated until the union of the snapshots is
/// connected; deterministic under the given generator.
pub fn snapshots_by_deletion<R: Rng>(
    base: &GraphSnapshot,
    count: usize,
    deletion_fraction: f64,
    rng: &mut R,
) -> Result<Vec<GraphSnapshot>, GraphError> {
    if count == 0 {
        return Err(GraphError::InvalidInput("need at least one snapshot".into()));
    }
    if !(0.0..1.0).contains(&deletion_fraction) {
        return Err(GraphError::InvalidInput(format!(
            "deletion fraction must be in [0, 1), got {deletion_fraction}"
        )));
    }
    if !base.has_spanning_tree() {
        return Err(GraphError::InvalidInput("base graph must be connected".into()));
    }
    let edges = base.edges();
    const MAX_ATTEMPTS: usize = 1000;
    for _ in 0..MAX_ATTEMPTS {
        let mut snapshots = Vec::with_capacity(count);
        for _ in 0..count {
            let mut deleted: Vec<bool> =
                (0..edges.len()).map(|_| rng.random::<f64>() < deletion_fraction).collect();
            if !deleted.iter().any(|&d| d) {
                deleted[rng.random_range(0..edges.len())] = true;
            }
            let kept: Vec<_> = edges
                .iter()
                .zip(&deleted)
                .filter(|(_, &d)| !d)
                .map(|(&e, _)| e)
                .collect();
            snapshots.push(GraphSnapshot::from_edges(base.n(), &kept)?);
        }
        let union = GraphSnapshot::union(&snapshots)?;
        if union.has_spanning_tree() && snapshots.iter().all(|s| !s.has_spanning_tree()) {
            return Ok(snapshots);
        }
    }
    Err(GraphError::InvalidInput(format!(
        "could not produce a jointly connected deletion split in {MAX_ATTEMPTS} attempts"
    )))
}
