//! Steepest-descent refinement with central-difference gradients and a
//! halving line search.
//!
//! Work happens in normalised gene coordinates `u = (x - lower) / span`, so
//! a single step length means the same thing for millimetre lengths and
//! pivot coordinates alike.

use serde::{Deserialize, Serialize};

use super::GeneRange;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DescentConfig {
    /// Finite-difference step as a fraction of each gene's span.
    pub fd_step: f64,
    /// Initial and maximum step length in normalised units.
    pub initial_step: f64,
    pub max_step: f64,
    /// Line search gives up below this step length.
    pub min_step: f64,
    /// Stop once an accepted step improves less than this, relatively.
    pub relative_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for DescentConfig {
    fn default() -> Self {
        Self {
            fd_step: 1e-4,
            initial_step: 0.05,
            max_step: 0.5,
            min_step: 1e-10,
            relative_tolerance: 1e-9,
            max_iterations: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DescentOutcome {
    pub point: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    /// Objective at the start and after every accepted step.
    pub accepted: Vec<f64>,
}

/// Central-difference gradient of `f` at `x` with per-coordinate steps.
///
/// A coordinate whose probe fails (`None` or non-finite) gets a zero
/// component.
pub fn central_gradient<F>(f: &F, x: &[f64], steps: &[f64]) -> Vec<f64>
where
    F: Fn(&[f64]) -> Option<f64>,
{
    let mut probe = x.to_vec();
    steps
        .iter()
        .enumerate()
        .map(|(i, &h)| {
            probe[i] = x[i] + h;
            let plus = f(&probe);
            probe[i] = x[i] - h;
            let minus = f(&probe);
            probe[i] = x[i];
            match (plus, minus) {
                (Some(p), Some(m)) if p.is_finite() && m.is_finite() => (p - m) / (2.0 * h),
                _ => 0.0,
            }
        })
        .collect()
}

/// Minimises `objective` from `start` inside `ranges`.
///
/// The search direction comes from the gradient of `smooth`, which should be
/// the objective minus any piecewise-constant terms; a step is only accepted
/// when the full `objective` strictly decreases, so the accepted sequence
/// never increases.
pub fn steepest_descent<F, G>(
    objective: F,
    smooth: G,
    start: &[f64],
    ranges: &[GeneRange],
    config: &DescentConfig,
) -> DescentOutcome
where
    F: Fn(&[f64]) -> Option<f64>,
    G: Fn(&[f64]) -> Option<f64>,
{
    let to_x = |u: &[f64]| -> Vec<f64> {
        u.iter()
            .zip(ranges)
            .map(|(u, r)| r.lower + u * r.span())
            .collect()
    };
    let full = |u: &[f64]| objective(&to_x(u)).filter(|v| v.is_finite());
    let smooth_u = |u: &[f64]| smooth(&to_x(u)).filter(|v| v.is_finite());

    let mut u: Vec<f64> = start
        .iter()
        .zip(ranges)
        .map(|(x, r)| {
            if r.span() > 0.0 {
                (x - r.lower) / r.span()
            } else {
                0.0
            }
        })
        .collect();
    let Some(mut value) = full(&u) else {
        return DescentOutcome {
            point: start.to_vec(),
            value: f64::INFINITY,
            iterations: 0,
            accepted: vec![],
        };
    };
    let mut accepted = vec![value];
    let steps = vec![config.fd_step; u.len()];
    let mut step = config.initial_step;
    let mut iterations = 0;

    while iterations < config.max_iterations {
        iterations += 1;
        let gradient = central_gradient(&smooth_u, &u, &steps);
        let norm = gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            break;
        }

        let mut improved = None;
        while step >= config.min_step {
            let trial: Vec<f64> = u
                .iter()
                .zip(&gradient)
                .map(|(u, g)| (u - step * g / norm).clamp(0.0, 1.0))
                .collect();
            match full(&trial) {
                Some(v) if v < value => {
                    improved = Some((trial, v));
                    break;
                }
                _ => step *= 0.5,
            }
        }
        let Some((trial, next)) = improved else { break };

        let gain = value - next;
        u = trial;
        value = next;
        accepted.push(value);
        if gain <= config.relative_tolerance * value.abs() {
            break;
        }
        step = (2.0 * step).min(config.max_step);
    }

    DescentOutcome {
        point: to_x(&u),
        value,
        iterations,
        accepted,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_gradient_of_quadratic_is_exact() {
        let f = |x: &[f64]| Some(3.0 * x[0] * x[0] + x[0] * x[1] - 2.0 * x[1]);
        let g = central_gradient(&f, &[1.0, 2.0], &[1e-3, 1e-3]);
        assert!((g[0] - 8.0).abs() < 1e-9);
        assert!((g[1] - (1.0 - 2.0)).abs() < 1e-9);
    }

    #[test]
    fn failed_probe_gives_zero_component() {
        let f = |x: &[f64]| if x[0] > 1.0 { None } else { Some(x[0] + x[1]) };
        let g = central_gradient(&f, &[1.0, 0.0], &[0.125, 0.125]);
        assert_eq!(g, vec![0.0, 1.0]);
    }

    #[test]
    fn no_descent_returns_start() {
        let ranges = [GeneRange::new(0.0, 1.0)];
        let out = steepest_descent(
            |_| Some(1.0),
            |_| Some(1.0),
            &[0.3],
            &ranges,
            &DescentConfig::default(),
        );
        assert_eq!(out.point, vec![0.3]);
        assert_eq!(out.accepted, vec![1.0]);
    }

    #[test]
    fn stays_inside_bounds() {
        let ranges = [GeneRange::new(0.0, 1.0), GeneRange::new(-1.0, 1.0)];
        let f = |x: &[f64]| Some(x[0] + x[1]);
        let out = steepest_descent(f, f, &[0.5, 0.5], &ranges, &DescentConfig::default());
        assert!((out.point[0] - 0.0).abs() < 1e-12 && (out.point[1] + 1.0).abs() < 1e-12);
    }
}
