//! Strictly convex per-agent cost functions.
//!
//! Three families cover the scenarios: a quartic well `b (x - a)^4`, a
//! quadratic-plus-softplus `a/2 (x - c)^2 + log(1 + exp(b (x - d)))`, and a
//! plain quadratic `p/2 (x - q)^2`. All have continuous, nondecreasing
//! gradients whose range is the whole real line, so the gradient can be
//! inverted for any target value, the operation the KKT oracle is built on.
//! The quartic's second derivative vanishes at its minimizer; its gradient is
//! still strictly increasing, which is what uniqueness of the optimum needs.

use rand::Rng;

/// Errors from cost construction and gradient inversion.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CostError {
    /// A leading coefficient was not strictly positive.
    #[error("{family} requires {param} > 0, got {value}")]
    NonConvex { family: &'static str, param: &'static str, value: f64 },
    /// Gradient inversion could not bracket the target value.
    #[error("gradient inversion failed for target {psi}: bracket expansion exceeded {doublings} doublings")]
    InversionFailure { psi: f64, doublings: usize },
}

/// Numerically safe `log(1 + exp(z))`.
///
/// For large positive `z` the naive form overflows; rewrite as
/// `z + log(1 + exp(-z))`.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Logistic function, evaluated on the non-overflowing branch.
fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One agent's strictly convex cost.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CostFunction {
    /// `f(x) = b (x - a)^4` with `b > 0`.
    Quartic { b: f64, a: f64 },
    /// `f(x) = a/2 (x - c)^2 + log(1 + exp(b (x - d)))` with `a > 0`.
    QuadLse { a: f64, b: f64, c: f64, d: f64 },
    /// `f(x) = p/2 (x - q)^2` with `p > 0`.
    Quadratic { p: f64, q: f64 },
}

impl CostFunction {
    pub fn quartic(b: f64, a: f64) -> Result<Self, CostError> {
        if !b.is_finite() || b <= 0.0 {
            return Err(CostError::NonConvex { family: "Quartic", param: "b", value: b });
        }
        Ok(Self::Quartic { b, a })
    }

    pub fn quad_lse(a: f64, b: f64, c: f64, d: f64) -> Result<Self, CostError> {
        if !a.is_finite() || a <= 0.0 {
            return Err(CostError::NonConvex { family: "QuadLse", param: "a", value: a });
        }
        Ok(Self::QuadLse { a, b, c, d })
    }

    pub fn quadratic(p: f64, q: f64) -> Result<Self, CostError> {
        if !p.is_finite() || p <= 0.0 {
            return Err(CostError::NonConvex { family: "Quadratic", param: "p", value: p });
        }
        Ok(Self::Quadratic { p, q })
    }

    /// Cost value `f(x)`.
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Self::Quartic { b, a } => {
                let u = x - a;
                b * u * u * u * u
            }
            Self::QuadLse { a, b, c, d } => {
                let u = x - c;
                0.5 * a * u * u + softplus(b * (x - d))
            }
            Self::Quadratic { p, q } => {
                let u = x - q;
                0.5 * p * u * u
            }
        }
    }

    /// Gradient `df/dx`, the value agents share with their neighbors.
    pub fn grad(&self, x: f64) -> f64 {
        match *self {
            Self::Quartic { b, a } => {
                let u = x - a;
                4.0 * b * u * u * u
            }
            Self::QuadLse { a, b, c, d } => a * (x - c) + b * logistic(b * (x - d)),
            Self::Quadratic { p, q } => p * (x - q),
        }
    }

    /// Second derivative.
    pub fn curvature(&self, x: f64) -> f64 {
        match *self {
            Self::Quartic { b, a } => {
                let u = x - a;
                12.0 * b * u * u
            }
            Self::QuadLse { a, b, d, .. } => {
                let s = logistic(b * (x - d));
                a + b * b * s * (1.0 - s)
            }
            Self::Quadratic { p, .. } => p,
        }
    }

    /// The unique `x` with `grad(x) = psi`.
    ///
    /// Closed-form for the quartic and quadratic families; safeguarded
    /// bisection for the softplus family, on a bracket expanded geometrically
    /// until the gradient straddles `psi`, to absolute tolerance 1e-12 in `x`.
    pub fn grad_inverse(&self, psi: f64) -> Result<f64, CostError> {
        match *self {
            Self::Quartic { b, a } => Ok(a + (psi / (4.0 * b)).cbrt()),
            Self::Quadratic { p, q } => Ok(q + psi / p),
            Self::QuadLse { a, b, c, .. } => {
                // Start from the quadratic part's solution; the softplus
                // contributes at most |b| to the gradient.
                let guess = c + psi / a;
                let mut lo = guess;
                let mut hi = guess;
                let mut step = (b.abs() / a).max(1.0);
                const MAX_DOUBLINGS: usize = 200;
                let mut doublings = 0;
                while self.grad(lo) > psi {
                    lo -= step;
                    step *= 2.0;
                    doublings += 1;
                    if doublings > MAX_DOUBLINGS {
                        return Err(CostError::InversionFailure { psi, doublings });
                    }
                }
                step = (b.abs() / a).max(1.0);
                while self.grad(hi) < psi {
                    hi += step;
                    step *= 2.0;
                    doublings += 1;
                    if doublings > MAX_DOUBLINGS {
                        return Err(CostError::InversionFailure { psi, doublings });
                    }
                }
                while hi - lo > 1e-12 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break; // interval below float resolution
                    }
                    if self.grad(mid) < psi {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                Ok(0.5 * (lo + hi))
            }
        }
    }
}

/// The costs of all agents, indexed like the state vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CostEnsemble {
    costs: Vec<CostFunction>,
}

impl CostEnsemble {
    pub fn new(costs: Vec<CostFunction>) -> Result<Self, CostError> {
        assert!(!costs.is_empty(), "ensemble needs at least one agent");
        Ok(Self { costs })
    }

    pub fn n(&self) -> usize {
        self.costs.len()
    }

    pub fn cost(&self, i: usize) -> &CostFunction {
        &self.costs[i]
    }

    pub fn costs(&self) -> &[CostFunction] {
        &self.costs
    }

    /// Total cost `F(x) = sum_i f_i(x_i)`.
    pub fn total(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.costs.len());
        self.costs.iter().zip(x).map(|(f, &xi)| f.eval(xi)).sum()
    }

    /// Per-agent gradients.
    pub fn gradients(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.costs.len());
        self.costs.iter().zip(x).map(|(f, &xi)| f.grad(xi)).collect()
    }
}

/// Draws a quartic ensemble with `b` in `[0, 5]` (resampled while below 1e-3
/// to keep strict convexity) and `a` in `[-2, 8]`.
pub fn random_quartic_ensemble<R: Rng>(n: usize, rng: &mut R) -> CostEnsemble {
    let costs = (0..n)
        .map(|_| {
            let mut b = rng.random_range(0.0..=5.0);
            while b < 1e-3 {
                b = rng.random_range(0.0..=5.0);
            }
            let a = rng.random_range(-2.0..=8.0);
            CostFunction::Quartic { b, a }
        })
        .collect();
    CostEnsemble::new(costs).expect("n >= 1")
}

/// Draws a softplus ensemble with `a` in `[0, 2]` floored at 1e-3, `b` in
/// `[-2, 2]`, and `c`, `d` in `[-3, 3]`.
pub fn random_quad_lse_ensemble<R: Rng>(n: usize, rng: &mut R) -> CostEnsemble {
    let costs = (0..n)
        .map(|_| {
            let a = rng.random_range(0.0f64..=2.0).max(1e-3);
            let b = rng.random_range(-2.0..=2.0);
            let c = rng.random_range(-3.0..=3.0);
            let d = rng.random_range(-3.0..=3.0);
            CostFunction::QuadLse { a, b, c, d }
        })
        .collect();
    CostEnsemble::new(costs).expect("n >= 1")
}

/// Draws a quadratic ensemble with `p` in `[0, 5]` floored at 1e-3 and `q`
/// in `[-5, 5]`.
pub fn random_quadratic_ensemble<R: Rng>(n: usize, rng: &mut R) -> CostEnsemble {
    let costs = (0..n)
        .map(|_| {
            let p = rng.random_range(0.0f64..=5.0).max(1e-3);
            let q = rng.random_range(-5.0..=5.0);
            CostFunction::Quadratic { p, q }
        })
        .collect();
    CostEnsemble::new(costs).expect("n >= 1")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use proptest::prelude::*;

    #[test]
    fn quartic_eval() {
        let f = CostFunction::quartic(2.0, 1.0).unwrap();
        assert_eq!(f.eval(3.0), 32.0);
    }

    #[test]
    fn quartic_eval_at_root() {
        let f = CostFunction::quartic(3.7, -1.25).unwrap();
        assert_eq!(f.eval(-1.25), 0.0);
    }

    #[test]
    fn quad_lse_eval_with_flat_softplus() {
        // b = 0 collapses the softplus to a log(2) constant.
        let f = CostFunction::quad_lse(2.0, 0.0, 0.0, 0.0).unwrap();
        let got = f.eval(1.0);
        assert!((got - (1.0 + 2.0_f64.ln())).abs() < 1e-15, "got {got}");
    }

    #[test]
    fn quartic_grad() {
        let f = CostFunction::quartic(1.0, 0.0).unwrap();
        assert_eq!(f.grad(2.0), 32.0);
    }

    #[test]
    fn quad_lse_grad_at_logistic_midpoint() {
        let f = CostFunction::quad_lse(1.0, 2.0, 0.0, 0.0).unwrap();
        assert_eq!(f.grad(0.0), 1.0); // 0 + 2 * logistic(0) = 1
    }

    #[test]
    fn grad_vanishes_at_unconstrained_minimizer() {
        for f in [
            CostFunction::quartic(2.5, 1.5).unwrap(),
            CostFunction::quad_lse(1.2, -0.7, 0.3, -2.0).unwrap(),
            CostFunction::quadratic(3.0, -4.0).unwrap(),
        ] {
            let x_min = f.grad_inverse(0.0).unwrap();
            assert!(f.grad(x_min).abs() < 1e-10, "{f:?}: grad {}", f.grad(x_min));
        }
    }

    #[test]
    fn quartic_grad_inverse_closed_form() {
        let f = CostFunction::quartic(1.0, 0.0).unwrap();
        assert_eq!(f.grad_inverse(32.0).unwrap(), 2.0);
        let g = CostFunction::quartic(2.0, 1.0).unwrap();
        assert_eq!(g.grad_inverse(0.0).unwrap(), 1.0);
    }

    #[test]
    fn quad_lse_grad_inverse_by_bisection() {
        let f = CostFunction::quad_lse(1.0, 2.0, 0.0, 0.0).unwrap();
        let x = f.grad_inverse(1.0).unwrap();
        assert!(x.abs() < 1e-10, "expected 0, got {x}");
        assert!((f.grad(x) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn quartic_curvature() {
        let f = CostFunction::quartic(1.0, 0.0).unwrap();
        assert_eq!(f.curvature(1.0), 12.0);
    }

    #[test]
    fn quartic_curvature_vanishes_at_minimizer() {
        let f = CostFunction::quartic(4.0, 2.5).unwrap();
        assert_eq!(f.curvature(2.5), 0.0);
    }

    #[test]
    fn quad_lse_curvature_with_flat_softplus() {
        let f = CostFunction::quad_lse(2.0, 0.0, 1.0, -1.0).unwrap();
        assert_eq!(f.curvature(17.3), 2.0);
        assert_eq!(f.curvature(-5.0), 2.0);
    }

    #[test]
    fn softplus_is_overflow_safe() {
        let f = CostFunction::quad_lse(1.0, 2.0, 0.0, 0.0).unwrap();
        let big = f.eval(1e6);
        assert!(big.is_finite());
        // For large z, log(1 + e^z) = z to machine precision.
        assert!((big - (0.5 * 1e12 + 2e6)).abs() < 1.0, "got {big}");
        assert!(f.eval(-1e6).is_finite());
        assert!(f.grad(1e6).is_finite());
        assert!(f.grad(-1e6).is_finite());
    }

    #[test]
    fn rejects_degenerate_leading_coefficients() {
        assert!(CostFunction::quartic(0.0, 1.0).is_err());
        assert!(CostFunction::quartic(-1.0, 1.0).is_err());
        assert!(CostFunction::quad_lse(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(CostFunction::quadratic(-2.0, 0.0).is_err());
    }

    #[test]
    fn generators_respect_parameter_floors() {
        let mut rng = stream(11, Stream::Costs);
        for _ in 0..20 {
            let e = random_quartic_ensemble(50, &mut rng);
            for f in e.costs() {
                let CostFunction::Quartic { b, a } = f else { panic!("family") };
                assert!(*b >= 1e-3 && *b <= 5.0);
                assert!((-2.0..=8.0).contains(a));
            }
            let e = random_quad_lse_ensemble(50, &mut rng);
            for f in e.costs() {
                let CostFunction::QuadLse { a, b, c, d } = f else { panic!("family") };
                assert!(*a >= 1e-3 && *a <= 2.0);
                assert!((-2.0..=2.0).contains(b));
                assert!((-3.0..=3.0).contains(c) && (-3.0..=3.0).contains(d));
            }
        }
    }

    fn arb_cost() -> impl Strategy<Value = CostFunction> {
        prop_oneof![
            (1e-3..5.0, -2.0..8.0).prop_map(|(b, a)| CostFunction::Quartic { b, a }),
            (1e-3..2.0, -2.0..2.0, -3.0..3.0, -3.0..3.0)
                .prop_map(|(a, b, c, d)| CostFunction::QuadLse { a, b, c, d }),
            (1e-3..5.0, -5.0..5.0).prop_map(|(p, q)| CostFunction::Quadratic { p, q }),
        ]
    }

    proptest! {
        #[test]
        fn grad_inverse_round_trips(f in arb_cost(), x in -10.0..10.0) {
            let psi = f.grad(x);
            let back = f.grad_inverse(psi).unwrap();
            // The quartic gradient is cube-flat near its minimizer, so compare
            // in gradient space as well as state space.
            let ok_x = (back - x).abs() <= 1e-10 * x.abs().max(1.0);
            let ok_psi = (f.grad(back) - psi).abs() <= 1e-10 * psi.abs().max(1.0);
            prop_assert!(ok_x || ok_psi, "x = {x}, back = {back}");
        }

        #[test]
        fn grad_matches_finite_differences(f in arb_cost(), x in -10.0..10.0) {
            let h = 1e-5;
            let fd = (f.eval(x + h) - f.eval(x - h)) / (2.0 * h);
            let g = f.grad(x);
            let scale = g.abs().max(fd.abs()).max(1.0);
            prop_assert!((g - fd).abs() <= 1e-5 * scale, "grad {g} vs fd {fd}");
        }

        #[test]
        fn curvature_matches_finite_differences(f in arb_cost(), x in -10.0..10.0) {
            let h = 1e-5;
            let fd = (f.grad(x + h) - f.grad(x - h)) / (2.0 * h);
            let c = f.curvature(x);
            let scale = c.abs().max(fd.abs()).max(1.0);
            prop_assert!((c - fd).abs() <= 1e-5 * scale, "curvature {c} vs fd {fd}");
        }

        #[test]
        fn grad_is_nondecreasing(f in arb_cost(), xs in proptest::collection::vec(-10.0..10.0f64, 2..40)) {
            let mut xs = xs;
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for w in xs.windows(2) {
                prop_assert!(f.grad(w[0]) <= f.grad(w[1]) + 1e-12);
            }
        }
    }
}
