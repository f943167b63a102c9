//! Outer estimation loops, support extraction and edge residual spectra.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use log::{debug, info, warn};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::data::{toeplitz_check, CovLags};
use crate::error::{KgmError, Result};
use crate::groups::{BinaryMatrix, GroupIndex, KroneckerSupport, SparseGroupIndex};
use crate::hyper;
use crate::linalg;
use crate::objective::{
    group_weights_max, group_weights_mult, group_weights_sparse, q_values, surrogate_max,
    surrogate_mult, surrogate_sparse, HyperParams, Likelihood, SparseWeights,
};
use crate::solver::{solve_regml, SolveStatus, SolverOptions};
use crate::spectral::{FreqGrid, PseudoPoly, DEFAULT_GRID_POINTS};
use crate::synth::yule_walker_me;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    /// Max prior, Σ → Λ → Γ.
    K1,
    /// Max prior, Σ → Γ → Λ.
    K2,
    /// Multiplicative prior, Σ → Λ → Γ.
    P1,
    /// Multiplicative prior, Σ → Γ → Λ.
    P2,
    /// Unstructured sparse prior.
    S,
    /// Maximum-entropy estimate without regularization.
    Burg,
    /// Maximum likelihood with a known Kronecker support.
    Hard,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::K1,
        Method::K2,
        Method::P1,
        Method::P2,
        Method::S,
        Method::Burg,
        Method::Hard,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::K1 => "K1",
            Method::K2 => "K2",
            Method::P1 => "P1",
            Method::P2 => "P2",
            Method::S => "S",
            Method::Burg => "BURG",
            Method::Hard => "HARD",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = KgmError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .copied()
            .ok_or_else(|| KgmError::InvalidArgument(format!("unknown method {s:?}")))
    }
}

/// Threshold on group values q above which a tuple counts as active.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupportRule {
    /// τ = δ · max q.
    Relative(f64),
    Absolute(f64),
}

impl Default for SupportRule {
    fn default() -> Self {
        SupportRule::Relative(1e-4)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    pub method: Method,
    pub m1: usize,
    pub m2: usize,
    /// Rate ε of the exponential hyperprior.
    pub eps: f64,
    /// Outer stopping tolerance on the surrogate change.
    pub outer_tol: f64,
    pub max_outer: usize,
    pub init_tol: f64,
    pub init_max_sweeps: usize,
    pub support_rule: SupportRule,
    pub solver: SolverOptions,
    pub grid_points: usize,
    /// Required for [`Method::Hard`].
    pub known_support: Option<KroneckerSupport>,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            method: Method::K1,
            m1: 1,
            m2: 1,
            eps: 1e-3,
            outer_tol: 1e-3,
            max_outer: 50,
            init_tol: 1e-4,
            init_max_sweeps: 100,
            support_rule: SupportRule::default(),
            solver: SolverOptions::default(),
            grid_points: DEFAULT_GRID_POINTS,
            known_support: None,
        }
    }
}

impl EstimationConfig {
    pub fn new(method: Method, m1: usize, m2: usize) -> Self {
        EstimationConfig {
            method,
            m1,
            m2,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m1 == 0 || self.m2 == 0 {
            return Err(KgmError::Config("m1 and m2 must be positive".into()));
        }
        if !(self.eps > 0.0) || !(self.outer_tol > 0.0) || !(self.init_tol > 0.0) {
            return Err(KgmError::Config("eps and tolerances must be positive".into()));
        }
        if self.max_outer == 0 || self.init_max_sweeps == 0 {
            return Err(KgmError::Config("iteration caps must be positive".into()));
        }
        match self.support_rule {
            SupportRule::Relative(d) | SupportRule::Absolute(d) if !(d >= 0.0) => {
                return Err(KgmError::Config("support threshold must be nonnegative".into()))
            }
            _ => {}
        }
        FreqGrid::new(self.grid_points)?;
        self.solver.validate()?;
        if self.method == Method::Hard {
            let ks = self.known_support.as_ref().ok_or_else(|| {
                KgmError::Config("method HARD requires a known support".into())
            })?;
            if ks.m1() != self.m1 || ks.m2() != self.m2 {
                return Err(KgmError::Config("known support does not match m1, m2".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OuterStatus {
    Converged,
    MaxOuter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportEstimate {
    /// Active flag per tuple of the group index.
    pub raw: Vec<bool>,
    pub support: KroneckerSupport,
    /// Fraction of tuples where `raw` differs from Ê1 ⊗ Ê2.
    pub defect: f64,
}

#[derive(Debug, Clone)]
pub struct EstimationResult {
    pub method: Method,
    pub m1: usize,
    pub m2: usize,
    pub sigma: PseudoPoly,
    pub hyper: Option<HyperParams>,
    pub omega: Option<SparseWeights>,
    pub support: SupportEstimate,
    /// ℓ̃ after initialization and after every outer iteration.
    pub surrogate_trace: Vec<f64>,
    pub inner_iterations: Vec<usize>,
    pub status: OuterStatus,
    pub init_converged: bool,
    /// ℓ at Σ̂.
    pub loglike: f64,
    pub elapsed: Duration,
}

impl EstimationResult {
    pub fn outer_iterations(&self) -> usize {
        self.inner_iterations.len()
    }

    pub fn total_inner_iterations(&self) -> usize {
        self.inner_iterations.iter().sum()
    }
}

/// Tuples with q above the threshold, Ê1/Ê2 by the any-active rule, and the
/// mismatch between the raw pattern and its Kronecker closure.
pub fn extract_support(sigma: &PseudoPoly, gi: &GroupIndex, rule: SupportRule) -> SupportEstimate {
    let q = q_values(sigma.params(), gi);
    let tau = match rule {
        SupportRule::Relative(d) => d * q.iter().copied().fold(0.0, f64::max),
        SupportRule::Absolute(t) => t,
    };
    let raw: Vec<bool> = q.iter().map(|&v| v > tau).collect();
    support_from_raw(&raw, gi)
}

pub fn support_from_raw(raw: &[bool], gi: &GroupIndex) -> SupportEstimate {
    let mut e1 = BinaryMatrix::identity(gi.m1());
    let mut e2 = BinaryMatrix::identity(gi.m2());
    for (t, &on) in gi.tuples().iter().zip(raw) {
        if on {
            e1.set(t.h, t.j, true);
            e1.set(t.j, t.h, true);
            e2.set(t.k, t.l, true);
            e2.set(t.l, t.k, true);
        }
    }
    let mismatched = gi
        .tuples()
        .iter()
        .zip(raw)
        .filter(|(t, &on)| on != (e1.get(t.h, t.j) && e2.get(t.k, t.l)))
        .count();
    SupportEstimate {
        raw: raw.to_vec(),
        support: KroneckerSupport { e1, e2 },
        defect: mismatched as f64 / gi.tuples().len() as f64,
    }
}

fn full_support(gi: &GroupIndex) -> SupportEstimate {
    support_from_raw(&vec![true; gi.tuples().len()], gi)
}

/// Runs the configured estimator on sample lags.
pub fn estimate(lags: &CovLags, cfg: &EstimationConfig) -> Result<EstimationResult> {
    cfg.validate()?;
    let start = Instant::now();
    let m = cfg.m1 * cfg.m2;
    if lags.dim() != m {
        return Err(KgmError::Dimension(format!(
            "lags have {} channels but m1·m2 = {m}",
            lags.dim()
        )));
    }
    let tc = toeplitz_check(lags);
    if !tc.positive_definite {
        return Err(KgmError::ToeplitzNotPositiveDefinite {
            min_eigenvalue: tc.min_eigenvalue,
        });
    }
    let n = lags.order();
    let grid = FreqGrid::new(cfg.grid_points)?;
    let gi = GroupIndex::new(cfg.m1, cfg.m2, n)?;
    let lik = Likelihood::new(lags, &grid)?;
    let me = yule_walker_me(lags)?;
    info!("estimating {} with m1={}, m2={}, n={n}", cfg.method, cfg.m1, cfg.m2);

    let finish = |sigma: PseudoPoly,
                  loglike: f64,
                  support: SupportEstimate,
                  hyper: Option<HyperParams>,
                  omega: Option<SparseWeights>,
                  trace: Vec<f64>,
                  inner: Vec<usize>,
                  status: OuterStatus,
                  init_converged: bool| EstimationResult {
        method: cfg.method,
        m1: cfg.m1,
        m2: cfg.m2,
        sigma,
        hyper,
        omega,
        support,
        surrogate_trace: trace,
        inner_iterations: inner,
        status,
        init_converged,
        loglike,
        elapsed: start.elapsed(),
    };

    match cfg.method {
        Method::Burg => {
            let ll = lik.evaluate(me.params(), 0.0)?.value;
            Ok(finish(
                me,
                ll,
                full_support(&gi),
                None,
                None,
                Vec::new(),
                Vec::new(),
                OuterStatus::Converged,
                true,
            ))
        }
        Method::Hard => {
            let ks = cfg.known_support.as_ref().expect("validated");
            let weights: Vec<f64> = gi
                .tuples()
                .iter()
                .map(|t| {
                    if ks.e1.get(t.h, t.j) && ks.e2.get(t.k, t.l) {
                        0.0
                    } else {
                        f64::INFINITY
                    }
                })
                .collect();
            // constant diagonal part of the ME estimate is always feasible
            let mut init = PseudoPoly::zeros(m, n);
            for r in 0..m {
                init.set(0, r, r, me.get(0, r, r));
            }
            let sol = solve_regml(&lik, &gi, &weights, init.params(), &cfg.solver)?;
            let raw: Vec<bool> = weights.iter().map(|w| *w == 0.0).collect();
            let sigma = PseudoPoly::from_params(m, n, sol.params)?;
            let status = match sol.status {
                SolveStatus::Converged => OuterStatus::Converged,
                SolveStatus::MaxIters => OuterStatus::MaxOuter,
            };
            Ok(finish(
                sigma,
                sol.loglike,
                support_from_raw(&raw, &gi),
                None,
                None,
                Vec::new(),
                vec![sol.iterations],
                status,
                true,
            ))
        }
        Method::S => {
            let sg = SparseGroupIndex::new(m, n);
            let mut sigma = me.clone();
            let mut omega = hyper::update_omega_sparse(&q_values(sigma.params(), &sg), &sg, cfg.eps);
            let ll0 = lik.evaluate(sigma.params(), 0.0)?.value;
            let mut trace = vec![surrogate_sparse(ll0, &q_values(sigma.params(), &sg), &sg, &omega, cfg.eps)];
            let mut inner = Vec::new();
            let mut status = OuterStatus::MaxOuter;
            let mut loglike = ll0;
            for r in 0..cfg.max_outer {
                let w = group_weights_sparse(&sg, &omega);
                let sol = solve_regml(&lik, &sg, &w, sigma.params(), &cfg.solver)?;
                inner.push(sol.iterations);
                loglike = sol.loglike;
                sigma = PseudoPoly::from_params(m, n, sol.params)?;
                let q = q_values(sigma.params(), &sg);
                omega = hyper::update_omega_sparse(&q, &sg, cfg.eps);
                let value = surrogate_sparse(loglike, &q, &sg, &omega, cfg.eps);
                debug!("S outer {r}: surrogate {value}");
                let prev = *trace.last().expect("initial value");
                trace.push(value);
                if (value - prev).abs() <= cfg.outer_tol {
                    status = OuterStatus::Converged;
                    break;
                }
            }
            if status == OuterStatus::MaxOuter {
                warn!("S stopped at the outer iteration cap");
            }
            let support = extract_support(&sigma, &gi, cfg.support_rule);
            Ok(finish(
                sigma,
                loglike,
                support,
                None,
                Some(omega),
                trace,
                inner,
                status,
                true,
            ))
        }
        Method::K1 | Method::K2 | Method::P1 | Method::P2 => {
            let mult = matches!(cfg.method, Method::P1 | Method::P2);
            let lambda_first = matches!(cfg.method, Method::K1 | Method::P1);
            let mut sigma = me.clone();
            let q0 = q_values(sigma.params(), &gi);
            let init = if mult {
                hyper::init_hyper_mult(&q0, &gi, cfg.eps, cfg.init_tol, cfg.init_max_sweeps)
            } else {
                hyper::init_hyper(&q0, &gi, cfg.eps, cfg.init_tol, cfg.init_max_sweeps)
            };
            let mut hp = init.hyper;
            let surrogate = |ll: f64, q: &[f64], hp: &HyperParams| {
                if mult {
                    surrogate_mult(ll, q, &gi, hp, cfg.eps)
                } else {
                    surrogate_max(ll, q, &gi, hp, cfg.eps)
                }
            };
            let ll0 = lik.evaluate(sigma.params(), 0.0)?.value;
            let mut trace = vec![surrogate(ll0, &q0, &hp)];
            let mut inner = Vec::new();
            let mut status = OuterStatus::MaxOuter;
            let mut loglike = ll0;
            for r in 0..cfg.max_outer {
                let w = if mult {
                    group_weights_mult(&gi, &hp)
                } else {
                    group_weights_max(&gi, &hp)
                };
                let sol = solve_regml(&lik, &gi, &w, sigma.params(), &cfg.solver)?;
                inner.push(sol.iterations);
                loglike = sol.loglike;
                sigma = PseudoPoly::from_params(m, n, sol.params)?;
                let q = q_values(sigma.params(), &gi);
                let update_lambda = |hp: &HyperParams| {
                    if mult {
                        hyper::sweep_lambda_mult(&q, &gi, hp, cfg.eps)
                    } else {
                        hyper::sweep_lambda_max(&q, &gi, hp, cfg.eps)
                    }
                };
                let update_gamma = |hp: &HyperParams| {
                    if mult {
                        hyper::sweep_gamma_mult(&q, &gi, hp, cfg.eps)
                    } else {
                        hyper::sweep_gamma_max(&q, &gi, hp, cfg.eps)
                    }
                };
                if lambda_first {
                    hp.lambda = update_lambda(&hp);
                    hp.gamma = update_gamma(&hp);
                } else {
                    hp.gamma = update_gamma(&hp);
                    hp.lambda = update_lambda(&hp);
                }
                let value = surrogate(loglike, &q, &hp);
                debug!("{} outer {r}: surrogate {value}, inner {}", cfg.method, sol.iterations);
                let prev = *trace.last().expect("initial value");
                trace.push(value);
                if (value - prev).abs() <= cfg.outer_tol {
                    status = OuterStatus::Converged;
                    break;
                }
            }
            if status == OuterStatus::MaxOuter {
                warn!("{} stopped at the outer iteration cap", cfg.method);
            }
            let support = extract_support(&sigma, &gi, cfg.support_rule);
            Ok(finish(
                sigma,
                loglike,
                support,
                Some(hp),
                None,
                trace,
                inner,
                status,
                init.converged,
            ))
        }
    }
}

/// Recomputes ℓ̃ at the stored estimate and weights.
pub fn recompute_surrogate(result: &EstimationResult, lags: &CovLags, cfg: &EstimationConfig) -> Result<f64> {
    let grid = FreqGrid::new(cfg.grid_points)?;
    let lik = Likelihood::new(lags, &grid)?;
    let ll = lik.evaluate(result.sigma.params(), 0.0)?.value;
    let n = lags.order();
    let gi = GroupIndex::new(result.m1, result.m2, n)?;
    match (result.method, &result.hyper, &result.omega) {
        (Method::K1 | Method::K2, Some(hp), _) => {
            Ok(surrogate_max(ll, &q_values(result.sigma.params(), &gi), &gi, hp, cfg.eps))
        }
        (Method::P1 | Method::P2, Some(hp), _) => {
            Ok(surrogate_mult(ll, &q_values(result.sigma.params(), &gi), &gi, hp, cfg.eps))
        }
        (Method::S, _, Some(sw)) => {
            let sg = SparseGroupIndex::new(result.m1 * result.m2, n);
            Ok(surrogate_sparse(ll, &q_values(result.sigma.params(), &sg), &sg, sw, cfg.eps))
        }
        _ => Ok(ll),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Grouping {
    Modules,
    Nodes,
}

impl FromStr for Grouping {
    type Err = KgmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "modules" | "module" => Ok(Grouping::Modules),
            "nodes" | "node" => Ok(Grouping::Nodes),
            _ => Err(KgmError::InvalidArgument(format!("unknown grouping {s:?}"))),
        }
    }
}

/// Frobenius norm of the cross block of (Σ̂ restricted to the pair's
/// components)⁻¹ at each grid point. Zero means conditional independence of
/// the two modules (or nodes) at that frequency.
pub fn edge_residual_spectrum(
    sigma: &PseudoPoly,
    m1: usize,
    m2: usize,
    grouping: Grouping,
    pair: (usize, usize),
    grid: &FreqGrid,
) -> Result<Vec<f64>> {
    if m1 * m2 != sigma.dim() {
        return Err(KgmError::Dimension(format!(
            "m1·m2 = {} but Σ̂ has size {}",
            m1 * m2,
            sigma.dim()
        )));
    }
    let (a, b) = pair;
    let (limit, block): (usize, Box<dyn Fn(usize) -> Vec<usize>>) = match grouping {
        Grouping::Modules => (m1, Box::new(move |h| (0..m2).map(|k| h * m2 + k).collect())),
        Grouping::Nodes => (m2, Box::new(move |k| (0..m1).map(|h| h * m2 + k).collect())),
    };
    if a >= limit || b >= limit || a == b {
        return Err(KgmError::InvalidArgument(format!(
            "pair ({a}, {b}) must hold two distinct indices below {limit}"
        )));
    }
    let mut idx = block(a);
    let first = idx.len();
    idx.extend(block(b));
    let k = idx.len();
    let mut out = Vec::with_capacity(grid.len());
    for theta in grid.thetas() {
        let v = sigma.value_at(theta);
        let sub = DMatrix::from_fn(k, k, |r, c| v[(idx[r], idx[c])]);
        let inv: DMatrix<Complex64> = linalg::hermitian_inverse(&sub)
            .ok_or(KgmError::NotPositiveDefinite { theta })?;
        out.push(inv.view((0, first), (first, k - first)).norm());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!("burg".parse::<Method>().unwrap(), Method::Burg);
        assert!("K3".parse::<Method>().is_err());
    }

    #[test]
    fn diagonal_sigma_gives_identity_supports() {
        let gi = GroupIndex::new(2, 3, 1).unwrap();
        let s = extract_support(&PseudoPoly::identity(6, 1, 2.0), &gi, SupportRule::default());
        assert_eq!(s.support, KroneckerSupport::identity(2, 3));
        assert_eq!(s.defect, 0.0);
    }

    #[test]
    fn non_factorizable_pattern_reports_defect() {
        let gi = GroupIndex::new(2, 2, 0).unwrap();
        let mut raw = vec![false; gi.tuples().len()];
        for (i, t) in gi.tuples().iter().enumerate() {
            if (t.h == t.j && t.k == t.l) || (t.h, t.j, t.k, t.l) == (1, 0, 1, 0) {
                raw[i] = true;
            }
        }
        let s = support_from_raw(&raw, &gi);
        assert_eq!(s.support, KroneckerSupport::full(2, 2));
        assert!(s.defect > 0.0);
        let closure = s.support.kron();
        // the closure contains every raw active entry
        for (t, &on) in gi.tuples().iter().zip(&raw) {
            if on {
                assert!(closure.get(t.h * 2 + t.k, t.j * 2 + t.l));
            }
        }
    }

    #[test]
    fn edge_spectrum_identity_and_symmetry() {
        let grid = FreqGrid::new(16).unwrap();
        let id = PseudoPoly::identity(4, 1, 1.0);
        let c = edge_residual_spectrum(&id, 2, 2, Grouping::Modules, (0, 1), &grid).unwrap();
        assert!(c.iter().all(|&v| v == 0.0));

        let mut p = PseudoPoly::identity(4, 1, 2.0);
        p.set(1, 2, 0, 0.3);
        p.set(0, 3, 1, 0.2);
        let a = edge_residual_spectrum(&p, 2, 2, Grouping::Modules, (0, 1), &grid).unwrap();
        let b = edge_residual_spectrum(&p, 2, 2, Grouping::Modules, (1, 0), &grid).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x, y, epsilon = 1e-12);
        }
        assert!(edge_residual_spectrum(&p, 2, 2, Grouping::Nodes, (0, 0), &grid).is_err());
    }

    #[test]
    fn edge_spectrum_scalar_nodes_schur() {
        // m1 = 2 modules of one node: the restricted block is Σ itself and the
        // cross entry of its inverse is −σ12/(σ11σ22 − σ12²)
        let mut p = PseudoPoly::identity(2, 0, 1.0);
        p.set(0, 0, 0, 2.0);
        p.set(0, 1, 1, 3.0);
        p.set(0, 1, 0, 0.5);
        let grid = FreqGrid::new(8).unwrap();
        let c = edge_residual_spectrum(&p, 2, 1, Grouping::Modules, (0, 1), &grid).unwrap();
        let expected = 0.5 / (6.0 - 0.25);
        assert!(c.iter().all(|v| (v - expected).abs() < 1e-14));
    }
}
