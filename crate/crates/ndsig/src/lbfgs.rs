//! Limited-memory BFGS with Armijo backtracking, for input-space
//! optimisation of a single signal.
//!
//! The search direction comes from the usual two-loop recursion over at most
//! `history` curvature pairs. Each iteration backtracks from a unit step
//! until the Armijo condition holds. If backtracking fails the history is
//! cleared and a short normalised gradient step is tried; if that does not
//! decrease the objective either, the run stops.

use std::collections::VecDeque;

use crate::error::{EngineError, Result};
use crate::tensor::{axpy, dot};

#[derive(Clone, Debug, PartialEq)]
pub struct LbfgsConfig {
    pub history: usize,
    pub max_iters: usize,
    pub armijo_c: f64,
    pub shrink: f64,
    pub max_backtracks: usize,
    /// Length of the fallback step along `-g / ‖g‖`.
    pub fallback_step: f64,
    /// Stop once `‖g‖₂` drops to this value.
    pub grad_tol: f64,
    /// Curvature pairs with `sᵀy` at or below this are discarded.
    pub curvature_eps: f64,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self {
            history: 10,
            max_iters: 150,
            armijo_c: 1e-4,
            shrink: 0.5,
            max_backtracks: 20,
            fallback_step: 1e-3,
            grad_tol: 1e-10,
            curvature_eps: 1e-12,
        }
    }
}

impl LbfgsConfig {
    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    MaxIterations,
    GradientTolerance,
    Stalled,
}

#[derive(Clone, Debug)]
pub struct LbfgsOutcome {
    /// Best iterate seen.
    pub x: Vec<f64>,
    pub value: f64,
    pub initial_value: f64,
    /// Objective after each accepted step, starting with the initial value.
    pub trajectory: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub final_grad_norm: f64,
    pub termination: Termination,
}

/// Curvature-pair ring buffer.
#[derive(Clone, Debug)]
pub struct LbfgsState {
    capacity: usize,
    pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)>,
}

impl LbfgsState {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            pairs: VecDeque::with_capacity(capacity),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
    }

    /// Stores `(s, y)` unless `sᵀy <= eps`. Returns whether it was kept.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>, eps: f64) -> bool {
        let sy = dot(&s, &y);
        if !(sy > eps) || self.capacity == 0 {
            return false;
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back((s, y, 1.0 / sy));
        true
    }

    /// `-H g` by two-loop recursion; steepest descent scaled to unit length
    /// when the history is empty.
    pub fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        if self.pairs.is_empty() {
            let n = dot(g, g).sqrt();
            let scale = if n > 0.0 { -1.0 / n } else { 0.0 };
            q.iter_mut().for_each(|v| *v *= scale);
            return q;
        }
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for (s, y, rho) in self.pairs.iter().rev() {
            let a = rho * dot(s, &q);
            axpy(&mut q, -a, y);
            alphas.push(a);
        }
        let (s, y, _) = self.pairs.back().expect("non-empty");
        let gamma = dot(s, y) / dot(y, y);
        q.iter_mut().for_each(|v| *v *= gamma);
        for ((s, y, rho), a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            axpy(&mut q, a - b, s);
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}

/// Minimises `objective`, which returns `(value, gradient)` at a point.
pub fn lbfgs_minimize<F>(mut objective: F, x0: &[f64], config: &LbfgsConfig) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if config.max_iters == 0 {
        return Err(EngineError::InvalidArgument("max_iters must be at least 1".into()));
    }
    let mut x = x0.to_vec();
    let (mut f, mut g) = objective(&x)?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(EngineError::NonFinite("objective at starting point".into()));
    }
    let initial_value = f;
    let mut evaluations = 1;
    let mut trajectory = vec![f];
    let mut state = LbfgsState::new(config.history);
    let mut iterations = 0;
    let mut termination = Termination::MaxIterations;

    while iterations < config.max_iters {
        let gnorm = dot(&g, &g).sqrt();
        if gnorm <= config.grad_tol {
            termination = Termination::GradientTolerance;
            break;
        }
        let mut d = state.direction(&g);
        let mut slope = dot(&g, &d);
        if !(slope < 0.0) {
            state.clear();
            d = state.direction(&g);
            slope = dot(&g, &d);
        }

        let mut accepted = None;
        let mut t = 1.0;
        for _ in 0..=config.max_backtracks {
            let mut xn = x.clone();
            axpy(&mut xn, t, &d);
            let (fn_, gn) = objective(&xn)?;
            evaluations += 1;
            if fn_.is_finite()
                && gn.iter().all(|v| v.is_finite())
                && fn_ <= f + config.armijo_c * t * slope
            {
                accepted = Some((xn, fn_, gn));
                break;
            }
            t *= config.shrink;
        }
        if accepted.is_none() {
            state.clear();
            let mut xn = x.clone();
            axpy(&mut xn, -config.fallback_step / gnorm, &g);
            let (fn_, gn) = objective(&xn)?;
            evaluations += 1;
            if fn_.is_finite() && gn.iter().all(|v| v.is_finite()) && fn_ < f {
                accepted = Some((xn, fn_, gn));
            }
        }
        let Some((xn, fn_, gn)) = accepted else {
            termination = Termination::Stalled;
            break;
        };
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        state.push(s, y, config.curvature_eps);
        x = xn;
        f = fn_;
        g = gn;
        trajectory.push(f);
        iterations += 1;
    }

    let final_grad_norm = dot(&g, &g).sqrt();
    if termination == Termination::MaxIterations && final_grad_norm <= config.grad_tol {
        termination = Termination::GradientTolerance;
    }
    Ok(LbfgsOutcome {
        x,
        value: f,
        initial_value,
        trajectory,
        iterations,
        evaluations,
        final_grad_norm,
        termination,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shifted_quadratic(c: Vec<f64>) -> impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)> {
        move |x: &[f64]| {
            let f = x.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum();
            let g = x.iter().zip(&c).map(|(a, b)| 2.0 * (a - b)).collect();
            Ok((f, g))
        }
    }

    #[test]
    fn converges_to_shift() {
        let out = lbfgs_minimize(
            shifted_quadratic(vec![3.0, -1.0]),
            &[0.0, 0.0],
            &LbfgsConfig::default().with_max_iters(20),
        )
        .unwrap();
        assert!(out.final_grad_norm <= 1e-8, "{}", out.final_grad_norm);
        assert!((out.x[0] - 3.0).abs() < 1e-8 && (out.x[1] + 1.0).abs() < 1e-8);
    }

    #[test]
    fn optimal_start_short_circuits() {
        let out = lbfgs_minimize(
            shifted_quadratic(vec![1.0, 2.0]),
            &[1.0, 2.0],
            &LbfgsConfig::default(),
        )
        .unwrap();
        assert_eq!(out.x, vec![1.0, 2.0]);
        assert_eq!(out.iterations, 0);
        assert_eq!(out.termination, Termination::GradientTolerance);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let r = lbfgs_minimize(
            |_x: &[f64]| Ok((f64::NAN, vec![0.0])),
            &[0.0],
            &LbfgsConfig::default(),
        );
        assert!(matches!(r, Err(EngineError::NonFinite(_))));
    }

    #[test]
    fn rejects_non_positive_curvature() {
        let mut st = LbfgsState::new(2);
        assert!(!st.push(vec![1.0], vec![-1.0], 1e-12));
        assert!(!st.push(vec![1e-7], vec![1e-7], 1e-12));
        assert!(st.push(vec![1.0], vec![1.0], 1e-12));
        assert!(st.push(vec![1.0], vec![2.0], 1e-12));
        assert!(st.push(vec![1.0], vec![3.0], 1e-12));
        assert_eq!(st.len(), 2);
    }
}
