//! Proximal gradient solver for ℓ(Σ) + Σ_g w_g ‖θ_g‖_∞ over positive Σ.

use log::{debug, trace};
use serde::{Deserialize, Serialize};

use crate::error::{KgmError, Result};
use crate::groups::ParamGroups;
use crate::objective::{q_values, weighted_sum, Evaluation, Likelihood};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Relative objective change that ends the iteration (two consecutive
    /// accepted steps must satisfy it).
    pub tol: f64,
    /// First trial step. `None` picks 1/((N−n)/2).
    pub initial_step: Option<f64>,
    pub backtrack: f64,
    /// Smallest admissible grid eigenvalue of Σ.
    pub margin: f64,
    /// Use Barzilai-Borwein trial steps instead of reusing the last
    /// accepted step.
    pub acceleration: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 5000,
            tol: 1e-10,
            initial_step: None,
            backtrack: 0.5,
            margin: 1e-9,
            acceleration: true,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !(self.margin >= 0.0) || self.max_iterations == 0 {
            return Err(KgmError::InvalidArgument(
                "solver tolerance and iteration cap must be positive".into(),
            ));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(KgmError::InvalidArgument(
                "backtracking factor must lie in (0, 1)".into(),
            ));
        }
        if let Some(s) = self.initial_step {
            if !(s > 0.0) {
                return Err(KgmError::InvalidArgument("initial step must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIters,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub params: Vec<f64>,
    /// Smooth part ℓ at the returned point.
    pub loglike: f64,
    /// Full objective over accepted iterates, starting with the initial point.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub status: SolveStatus,
}

impl SolveResult {
    pub fn objective(&self) -> f64 {
        *self.trace.last().expect("trace holds the initial point")
    }
}

/// Euclidean projection onto {x : Σ|x_i| ≤ radius}.
pub fn project_l1_ball(v: &[f64], radius: f64) -> Vec<f64> {
    let l1: f64 = v.iter().map(|x| x.abs()).sum();
    if l1 <= radius {
        return v.to_vec();
    }
    if radius <= 0.0 {
        return vec![0.0; v.len()];
    }
    let mut u: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut tau = 0.0;
    for (i, &ui) in u.iter().enumerate() {
        cum += ui;
        let t = (cum - radius) / (i + 1) as f64;
        if ui > t {
            tau = t;
        } else {
            break;
        }
    }
    v.iter()
        .map(|&x| x.signum() * (x.abs() - tau).max(0.0))
        .collect()
}

/// Minimizer of ½‖x − v‖² + step·w·‖x‖_∞. An infinite weight gives zero.
pub fn prox_group_supnorm(v: &[f64], w: f64, step: f64) -> Vec<f64> {
    let t = step * w;
    if t <= 0.0 {
        return v.to_vec();
    }
    if t.is_infinite() {
        return vec![0.0; v.len()];
    }
    let p = project_l1_ball(v, t);
    v.iter().zip(&p).map(|(a, b)| a - b).collect()
}

fn prox_all<G: ParamGroups + ?Sized>(x: &mut [f64], groups: &G, weights: &[f64], step: f64) {
    let mut buf = Vec::new();
    for (g, &w) in weights.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let pos = groups.group(g);
        buf.clear();
        buf.extend(pos.iter().map(|&p| x[p]));
        let out = prox_group_supnorm(&buf, w, step);
        for (&p, v) in pos.iter().zip(out) {
            x[p] = v;
        }
    }
}

/// Minimizes ℓ(θ) + Σ_g w_g max_{i∈g}|θ_i| from `init` by proximal gradient
/// with backtracking. Groups with infinite weight are held at zero.
pub fn solve_regml<G: ParamGroups + ?Sized>(
    lik: &Likelihood,
    groups: &G,
    weights: &[f64],
    init: &[f64],
    opts: &SolverOptions,
) -> Result<SolveResult> {
    opts.validate()?;
    if weights.len() != groups.group_count() || init.len() != lik.num_params() {
        return Err(KgmError::Dimension(format!(
            "{} weights for {} groups, {} parameters for {}",
            weights.len(),
            groups.group_count(),
            init.len(),
            lik.num_params()
        )));
    }
    if groups.num_params() != lik.num_params() {
        return Err(KgmError::Dimension("group index does not match the likelihood".into()));
    }
    if weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(KgmError::InvalidArgument("group weights must be nonnegative".into()));
    }

    let mut x = init.to_vec();
    for (g, &w) in weights.iter().enumerate() {
        if w.is_infinite() {
            for &p in groups.group(g) {
                x[p] = 0.0;
            }
        }
    }
    let penalty = |p: &[f64]| weighted_sum(&q_values(p, groups), weights);
    let mut cur: Evaluation = lik.evaluate(&x, opts.margin)?;
    let mut obj = cur.value + penalty(&x);
    let mut trace = vec![obj];
    let mut step = opts.initial_step.unwrap_or(1.0 / lik.scale());
    let mut calm = 0;
    let mut status = SolveStatus::MaxIters;
    let mut iterations = 0;
    let mut z = vec![0.0; x.len()];

    while iterations < opts.max_iterations {
        iterations += 1;
        let mut tries = 0;
        let next = loop {
            tries += 1;
            for ((zi, xi), gi) in z.iter_mut().zip(&x).zip(&cur.gradient) {
                *zi = xi - step * gi;
            }
            prox_all(&mut z, groups, weights, step);
            let ok = match lik.evaluate(&z, opts.margin) {
                Ok(e) => {
                    let mut lin = 0.0;
                    let mut sq = 0.0;
                    for ((zi, xi), gi) in z.iter().zip(&x).zip(&cur.gradient) {
                        let d = zi - xi;
                        lin += gi * d;
                        sq += d * d;
                    }
                    let model = cur.value + lin + sq / (2.0 * step);
                    if e.value <= model + 1e-12 * cur.value.abs() {
                        Some(e)
                    } else {
                        None
                    }
                }
                Err(_) => None,
            };
            if let Some(e) = ok {
                break Some(e);
            }
            step *= opts.backtrack;
            if tries > 200 || step < f64::MIN_POSITIVE {
                break None;
            }
        };
        let Some(next) = next else {
            debug!("step search failed at iteration {iterations}");
            break;
        };
        let new_obj = next.value + penalty(&z);
        // A step that raises the objective only through rounding is refused.
        if new_obj > obj {
            trace!("non-decreasing step at iteration {iterations}; stopping");
            status = SolveStatus::Converged;
            break;
        }
        let (mut ss, mut sy) = (0.0, 0.0);
        for i in 0..x.len() {
            let s = z[i] - x[i];
            let y = next.gradient[i] - cur.gradient[i];
            ss += s * s;
            sy += s * y;
        }
        std::mem::swap(&mut x, &mut z);
        cur = next;
        let rel = (obj - new_obj).abs() / obj.abs().max(1.0);
        obj = new_obj;
        trace.push(obj);
        if opts.acceleration && sy > 0.0 && (ss / sy).is_finite() {
            step = ss / sy;
        }
        if rel < opts.tol {
            calm += 1;
            if calm >= 2 || ss == 0.0 {
                status = SolveStatus::Converged;
                break;
            }
        } else {
            calm = 0;
        }
    }
    trace!("solve finished: {iterations} iterations, objective {obj}");
    Ok(SolveResult {
        params: x,
        loglike: cur.value,
        trace,
        iterations,
        status,
    })
}
