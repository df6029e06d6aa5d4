//! Limited-memory BFGS minimizer with a backtracking Armijo line search.

use std::collections::VecDeque;
use std::time::Instant;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsConfig {
    pub history: usize,
    pub max_iterations: usize,
    /// Stop when `|f_prev - f| / max(|f_prev|, |f|, 1)` falls below this.
    pub tolerance: f64,
    pub max_line_search: usize,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        LbfgsConfig {
            history: 10,
            max_iterations: 500,
            tolerance: 1e-6,
            max_line_search: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub seconds: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: Vec<IterationRecord>,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_finite(value: f64, grad: &[f64]) -> Result<()> {
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("objective evaluated to {value}")));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient coordinate {i} is {}", grad[i])));
    }
    Ok(())
}

/// Minimizes `f` starting from `x0`. `f` returns the value and gradient.
/// Every accepted step strictly decreases the value.
pub fn minimize<F>(mut f: F, x0: Vec<f64>, config: &LbfgsConfig, mut on_iteration: impl FnMut(&IterationRecord)) -> Result<LbfgsOutcome>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut x = x0;
    let (mut value, mut grad) = f(&x)?;
    check_finite(value, &grad)?;

    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(config.history);
    let mut iterations = Vec::new();
    let mut converged = false;

    for iteration in 1..=config.max_iterations {
        let started = Instant::now();
        let gnorm = norm(&grad);
        if gnorm == 0.0 {
            converged = true;
            break;
        }

        // two-loop recursion
        let mut direction: Vec<f64> = grad.iter().map(|g| -g).collect();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &direction);
            for (d, yi) in direction.iter_mut().zip(y) {
                *d -= a * yi;
            }
            alphas.push(a);
        }
        if let Some((s, y, _)) = history.back() {
            let gamma = dot(s, y) / dot(y, y);
            direction.iter_mut().for_each(|d| *d *= gamma);
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &direction);
            for (d, si) in direction.iter_mut().zip(s) {
                *d += (a - b) * si;
            }
        }
        let mut slope = dot(&grad, &direction);
        if slope >= 0.0 {
            history.clear();
            direction = grad.iter().map(|g| -g).collect();
            slope = -gnorm * gnorm;
        }

        let mut step = if history.is_empty() { 1.0 / norm(&direction) } else { 1.0 };
        let mut evaluations = 0;
        let mut accepted = None;
        while evaluations < config.max_line_search {
            let candidate: Vec<f64> = x.iter().zip(&direction).map(|(xi, d)| xi + step * d).collect();
            let (v, g) = f(&candidate)?;
            evaluations += 1;
            if v.is_finite() && v <= value + 1e-4 * step * slope && v < value {
                check_finite(v, &g)?;
                accepted = Some((candidate, v, g));
                break;
            }
            step *= 0.5;
        }
        let Some((new_x, new_value, new_grad)) = accepted else {
            log::debug!("line search failed at iteration {iteration}; stopping");
            break;
        };

        let s: Vec<f64> = new_x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = new_grad.iter().zip(&grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-10 {
            if history.len() == config.history {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }

        let change = (value - new_value).abs() / value.abs().max(new_value.abs()).max(1.0);
        x = new_x;
        value = new_value;
        grad = new_grad;

        let record = IterationRecord {
            iteration,
            value,
            grad_norm: norm(&grad),
            seconds: started.elapsed().as_secs_f64(),
            evaluations,
        };
        on_iteration(&record);
        iterations.push(record);

        if change < config.tolerance {
            converged = true;
            break;
        }
    }

    Ok(LbfgsOutcome {
        x,
        value,
        iterations,
        converged,
    })
}
