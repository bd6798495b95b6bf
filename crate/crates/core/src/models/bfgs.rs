//! Dense BFGS minimiser with Armijo backtracking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BfgsOptions {
    pub max_iterations: usize,
    /// Stop when the gradient infinity-norm falls below this.
    pub tolerance: f64,
    /// Sufficient-decrease constant of the Armijo condition.
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-6,
            armijo: 1e-4,
            max_backtracks: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Gradient,
    MaxIterations,
    /// No step along the search direction decreased the objective.
    LineSearch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BfgsReport {
    pub iterations: usize,
    pub termination: Termination,
    /// Times the inverse-Hessian estimate was reset to a scaled identity.
    pub resets: usize,
    /// Objective value before the first step and after each accepted step.
    pub history: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check(f: f64, g: &[f64], iteration: usize) -> Result<()> {
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "objective or gradient is not finite at iteration {iteration}"
        )));
    }
    Ok(())
}

/// Minimise `objective`, which returns the value and writes the gradient.
/// `x` holds the start point on entry and the minimiser on exit.
pub fn minimize<F>(mut objective: F, x: &mut [f64], opts: &BfgsOptions) -> Result<BfgsReport>
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut f = objective(x, &mut g);
    check(f, &g, 0)?;
    // inverse Hessian estimate, row-major; `None` means identity
    let mut h: Option<Vec<f64>> = None;
    let mut resets = 0;
    let mut history = vec![f];
    let mut d = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut hy = vec![0.0; n];

    for it in 1..=opts.max_iterations {
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < opts.tolerance {
            return Ok(report(it - 1, Termination::Gradient, resets, history));
        }
        match &h {
            None => d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi),
            Some(hm) => {
                for i in 0..n {
                    d[i] = -dot(&hm[i * n..(i + 1) * n], &g);
                }
            }
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            h = None;
            resets += 1;
            d.iter_mut().zip(&g).for_each(|(di, gi)| *di = -gi);
            slope = dot(&g, &d);
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..opts.max_backtracks {
            for i in 0..n {
                x_new[i] = x[i] + step * d[i];
            }
            let f_new = objective(&x_new, &mut g_new);
            if f_new.is_finite() && f_new <= f + opts.armijo * step * slope {
                check(f_new, &g_new, it)?;
                accepted = Some(f_new);
                break;
            }
            step *= 0.5;
        }
        let Some(f_new) = accepted else {
            return Ok(report(it - 1, Termination::LineSearch, resets, history));
        };
        for i in 0..n {
            s[i] = x_new[i] - x[i];
            y[i] = g_new[i] - g[i];
        }
        x.copy_from_slice(&x_new);
        g.copy_from_slice(&g_new);
        f = f_new;
        history.push(f);

        let sy = dot(&s, &y);
        if sy <= 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() || sy <= 0.0 {
            // curvature condition failed: fall back to steepest descent
            if h.is_some() {
                resets += 1;
            }
            h = None;
        } else {
            let hm = h.get_or_insert_with(|| {
                let scale = sy / dot(&y, &y);
                let mut m = vec![0.0; n * n];
                for i in 0..n {
                    m[i * n + i] = scale;
                }
                m
            });
            // H <- (I - r s y^T) H (I - r y s^T) + r s s^T
            let r = 1.0 / sy;
            for i in 0..n {
                hy[i] = dot(&hm[i * n..(i + 1) * n], &y);
            }
            let yhy = dot(&y, &hy);
            let c = (1.0 + r * yhy) * r;
            for i in 0..n {
                for j in 0..n {
                    hm[i * n + j] += c * s[i] * s[j] - r * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
    }
    Ok(report(
        opts.max_iterations,
        Termination::MaxIterations,
        resets,
        history,
    ))
}

fn report(iterations: usize, termination: Termination, resets: usize, history: Vec<f64>) -> BfgsReport {
    BfgsReport {
        iterations,
        termination,
        resets,
        history,
    }
}
