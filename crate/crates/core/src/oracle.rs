//! Independent computation of the constrained optimum.
//!
//! At the optimum of `min sum_i f_i(x_i)` subject to `sum_i x_i = K`, all
//! gradients take a common value `psi*` (the Lagrange multiplier of the sum
//! constraint). Since each gradient is invertible, the allocation at a given
//! multiplier is `x_i(psi) = grad_inverse(f_i, psi)` and the total
//! `S(psi) = sum_i x_i(psi)` is continuous and nondecreasing, strictly
//! increasing for the families here. Solving `S(psi*) = K` by safeguarded
//! bisection pins the optimum to far better precision than any simulation
//! tolerance, which is what makes it usable as a ground-truth oracle.
//!
//! For small ensembles, [`brute_force_check`] minimizes the cost over the
//! feasible slice directly by grid search, touching none of the KKT
//! machinery; this is the cross-check that keeps the oracle honest.

use crate::cost::{CostEnsemble, CostError};

/// Errors from the KKT solve and the grid cross-check.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OracleError {
    /// Bracket expansion or bisection failed.
    #[error("oracle failure: {0}")]
    OracleFailure(String),
    /// A gradient inversion failed while evaluating the allocation sum.
    #[error("oracle failure in gradient inversion: {0}")]
    Inversion(#[from] CostError),
    /// `brute_force_check` is only meant for tiny ensembles.
    #[error("brute-force check limited to n <= 4, got n = {0}")]
    TooManyAgents(usize),
}

/// The constrained optimum: allocation, multiplier, value, and the
/// feasibility residual actually achieved.
#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution {
    pub x_star: Vec<f64>,
    pub psi_star: f64,
    pub f_star: f64,
    pub residual: f64,
}

fn allocation_sum(costs: &CostEnsemble, psi: f64) -> Result<f64, CostError> {
    let mut sum = 0.0;
    for f in costs.costs() {
        sum += f.grad_inverse(psi)?;
    }
    Ok(sum)
}

const MAX_DOUBLINGS: usize = 200;

/// Brackets `S(psi) = k` starting from `psi = 0` with symmetric geometric
/// expansion (+-1, +-2, +-4, ...). Returns `(lo, hi)` with
/// `S(lo) <= k <= S(hi)`.
fn bracket_multiplier(costs: &CostEnsemble, k: f64) -> Result<(f64, f64), OracleError> {
    let s0 = allocation_sum(costs, 0.0)?;
    if s0 == k {
        return Ok((0.0, 0.0));
    }
    let mut prev = 0.0;
    let mut step = 1.0;
    if s0 < k {
        for _ in 0..MAX_DOUBLINGS {
            let psi = step;
            if allocation_sum(costs, psi)? >= k {
                return Ok((prev, psi));
            }
            prev = psi;
            step *= 2.0;
        }
    } else {
        for _ in 0..MAX_DOUBLINGS {
            let psi = -step;
            if allocation_sum(costs, psi)? <= k {
                return Ok((psi, prev));
            }
            prev = psi;
            step *= 2.0;
        }
    }
    Err(OracleError::OracleFailure(format!(
        "could not bracket multiplier for K = {k} within {MAX_DOUBLINGS} doublings"
    )))
}

/// Solves for the unique optimum of the allocation problem.
///
/// Bisection terminates when the feasibility residual drops to
/// `1e-12 * max(1, |K|)` or the multiplier interval falls below
/// `1e-14 * max(1, |psi|)`, whichever comes first. The returned solution
/// always reports the residual it actually achieved.
pub fn solve_kkt(costs: &CostEnsemble, k: f64) -> Result<KktSolution, OracleError> {
    let (mut lo, mut hi) = bracket_multiplier(costs, k)?;
    let k_tol = 1e-12 * k.abs().max(1.0);
    let mut psi = 0.5 * (lo + hi);
    for _ in 0..4096 {
        psi = 0.5 * (lo + hi);
        if hi - lo <= 1e-14 * psi.abs().max(1.0) {
            break;
        }
        if psi <= lo || psi >= hi {
            break; // interval below float resolution
        }
        let s = allocation_sum(costs, psi)?;
        if (s - k).abs() <= k_tol {
            break;
        }
        if s < k {
            lo = psi;
        } else {
            hi = psi;
        }
    }
    let mut x_star = Vec::with_capacity(costs.n());
    for f in costs.costs() {
        x_star.push(f.grad_inverse(psi)?);
    }
    let total: f64 = x_star.iter().sum();
    let residual = (total - k).abs();
    let f_star = costs.total(&x_star);
    let solution = KktSolution { x_star, psi_star: psi, f_star, residual };
    // The oracle has to dominate every downstream tolerance; refuse to hand
    // out a solution that does not meet its own contract.
    if residual > 1e-9 * k.abs().max(1.0) {
        return Err(OracleError::OracleFailure(format!(
            "residual {residual} exceeds 1e-9 * max(1, |K|) for K = {k}"
        )));
    }
    for (i, f) in costs.costs().iter().enumerate() {
        let g = f.grad(solution.x_star[i]);
        if (g - psi).abs() > 1e-8 {
            return Err(OracleError::OracleFailure(format!(
                "gradient consensus violated at agent {i}: {g} vs psi* = {psi}"
            )));
        }
    }
    Ok(solution)
}

/// Result of the grid cross-check: best feasible point found and its value.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub x: Vec<f64>,
    pub f: f64,
}

/// Minimizes the total cost over the feasible slice by grid search, for
/// `n <= 4` agents.
///
/// The first `n - 1` coordinates sweep a box derived from the gradient
/// inverses at the multiplier bracket endpoints plus a margin; the last
/// coordinate is pinned by the constraint. Deliberately independent of
/// [`solve_kkt`]'s root finding.
pub fn brute_force_check(
    costs: &CostEnsemble,
    k: f64,
    grid: f64,
) -> Result<BruteForceResult, OracleError> {
    let n = costs.n();
    if n > 4 {
        return Err(OracleError::TooManyAgents(n));
    }
    assert!(grid > 0.0, "grid resolution must be positive");
    let (lo_psi, hi_psi) = bracket_multiplier(costs, k)?;
    let margin = 10.0 * grid;
    let mut boxes = Vec::with_capacity(n);
    for f in costs.costs() {
        let lo = f.grad_inverse(lo_psi)? - margin;
        let hi = f.grad_inverse(hi_psi)? + margin;
        boxes.push((lo, hi));
    }

    let mut best_x = vec![0.0; n];
    let mut best_f = f64::INFINITY;
    let counts: Vec<usize> = boxes[..n - 1]
        .iter()
        .map(|&(lo, hi)| ((hi - lo) / grid).ceil() as usize + 1)
        .collect();
    let mut idx = vec![0usize; n - 1];
    'sweep: loop {
        let mut partial = 0.0;
        let mut x = vec![0.0; n];
        for (dim, &i) in idx.iter().enumerate() {
            x[dim] = boxes[dim].0 + i as f64 * grid;
            partial += x[dim];
        }
        x[n - 1] = k - partial;
        let f = costs.total(&x);
        if f < best_f {
            best_f = f;
            best_x = x;
        }
        // Odometer increment over the swept dimensions.
        for dim in 0..n - 1 {
            idx[dim] += 1;
            if idx[dim] < counts[dim] {
                continue 'sweep;
            }
            idx[dim] = 0;
        }
        break;
    }
    Ok(BruteForceResult { x: best_x, f: best_f })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{random_quartic_ensemble, CostFunction};
    use crate::rng::{stream, Stream};

    fn quartic_pair() -> CostEnsemble {
        CostEnsemble::new(vec![
            CostFunction::quartic(1.0, 0.0).unwrap(),
            CostFunction::quartic(2.0, 0.0).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn identical_costs_split_evenly() {
        let costs = CostEnsemble::new(vec![CostFunction::quadratic(2.0, 1.0).unwrap(); 5]).unwrap();
        let sol = solve_kkt(&costs, 10.0).unwrap();
        for &x in &sol.x_star {
            assert!((x - 2.0).abs() < 1e-9, "expected 2, got {x}");
        }
    }

    #[test]
    fn feasible_unconstrained_minimum_has_zero_multiplier() {
        // Quartic wells at a = (1, 2, -3) with K = 0 = sum(a): the optimum
        // sits at the well bottoms.
        let costs = CostEnsemble::new(vec![
            CostFunction::quartic(1.0, 1.0).unwrap(),
            CostFunction::quartic(2.0, 2.0).unwrap(),
            CostFunction::quartic(0.5, -3.0).unwrap(),
        ])
        .unwrap();
        let sol = solve_kkt(&costs, 0.0).unwrap();
        assert!(sol.psi_star.abs() < 1e-12);
        assert!(sol.f_star.abs() < 1e-30);
        for (x, a) in sol.x_star.iter().zip([1.0, 2.0, -3.0]) {
            assert!((x - a).abs() < 1e-9);
        }
    }

    #[test]
    fn two_agent_quartic_case() {
        // grad_i(x) = 4 b_i x^3, so x_i(psi) = (psi / 4 b_i)^(1/3) and the
        // multiplier solves cbrt(psi) (4^(-1/3) + 8^(-1/3)) = 3.
        let costs = quartic_pair();
        let sol = solve_kkt(&costs, 3.0).unwrap();
        let scale = 0.25f64.cbrt() + 0.125f64.cbrt();
        let psi_expected = (3.0 / scale).powi(3);
        assert!(
            (sol.psi_star - psi_expected).abs() < 1e-9 * psi_expected,
            "psi* = {}, expected {psi_expected}",
            sol.psi_star
        );
        assert!((sol.psi_star - 18.71431559243086).abs() < 1e-7);
        assert!((sol.x_star[0] - 1.6725199979266734).abs() < 1e-9);
        assert!((sol.x_star[1] - 1.3274800020733262).abs() < 1e-9);
        assert!((sol.f_star - 14.035736694323141).abs() < 1e-8);
    }

    #[test]
    fn brute_force_identical_quadratics() {
        let costs = CostEnsemble::new(vec![CostFunction::quadratic(1.0, 0.0).unwrap(); 2]).unwrap();
        let grid = 1e-3;
        let res = brute_force_check(&costs, 2.0, grid).unwrap();
        assert!((res.x[0] - 1.0).abs() <= grid, "x0 = {}", res.x[0]);
        assert!((res.x[1] - 1.0).abs() <= grid, "x1 = {}", res.x[1]);
    }

    #[test]
    fn brute_force_agrees_with_kkt_on_quartic_pair() {
        let costs = quartic_pair();
        let sol = solve_kkt(&costs, 3.0).unwrap();
        let res = brute_force_check(&costs, 3.0, 1e-4).unwrap();
        assert!(
            (res.f - sol.f_star).abs() < 1e-6,
            "grid {} vs oracle {}",
            res.f,
            sol.f_star
        );
        assert!(res.f >= sol.f_star - 1e-9, "grid must not beat the optimum");
    }

    #[test]
    fn brute_force_three_agents_within_grid_bound() {
        let mut rng = stream(42, Stream::Costs);
        let costs = random_quartic_ensemble(3, &mut rng);
        let k = 2.0;
        let grid = 5e-3;
        let sol = solve_kkt(&costs, k).unwrap();
        let res = brute_force_check(&costs, k, grid).unwrap();
        // Curvature bound over the search box.
        let max_curv = costs
            .costs()
            .iter()
            .zip(&res.x)
            .map(|(f, &x)| f.curvature(x - 1.0).max(f.curvature(x + 1.0)))
            .fold(0.0f64, f64::max);
        let bound = 10.0 * grid * grid * max_curv.max(1.0);
        assert!(
            (res.f - sol.f_star).abs() <= bound,
            "grid {} vs oracle {} (bound {bound})",
            res.f,
            sol.f_star
        );
    }

    #[test]
    fn brute_force_rejects_large_ensembles() {
        let costs = CostEnsemble::new(vec![CostFunction::quadratic(1.0, 0.0).unwrap(); 5]).unwrap();
        assert!(matches!(brute_force_check(&costs, 1.0, 0.1), Err(OracleError::TooManyAgents(5))));
    }

    #[test]
    fn residual_and_consensus_meet_the_contract() {
        let mut rng = stream(7, Stream::Costs);
        for k in [-10.0, 0.0, 4.0, 100.0] {
            let costs = random_quartic_ensemble(20, &mut rng);
            let sol = solve_kkt(&costs, k).unwrap();
            assert!(sol.residual <= 1e-9 * k.abs().max(1.0));
            for (f, &x) in costs.costs().iter().zip(&sol.x_star) {
                assert!((f.grad(x) - sol.psi_star).abs() <= 1e-8);
            }
        }
    }

    #[test]
    fn multiplier_is_monotone_in_k() {
        let mut rng = stream(13, Stream::Costs);
        let costs = crate::cost::random_quad_lse_ensemble(10, &mut rng);
        let mut prev = f64::NEG_INFINITY;
        for k in [-20.0, -5.0, 0.0, 3.0, 12.0, 50.0] {
            let sol = solve_kkt(&costs, k).unwrap();
            assert!(sol.psi_star >= prev, "psi* not monotone at K = {k}");
            prev = sol.psi_star;
        }
    }
}
