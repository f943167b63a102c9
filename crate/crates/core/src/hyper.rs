//! Empirical-Bayes updates of the prior weights.

use log::warn;

use crate::groups::{GroupIndex, SparseGroupIndex};
use crate::objective::{HyperParams, SparseWeights, SymMatrix};

/// One term of a single-coordinate objective: the competing weight, the
/// group value q and the exponent α.
#[derive(Debug, Clone, Copy)]
pub struct MaxTerm {
    pub other: f64,
    pub q: f64,
    pub alpha: f64,
}

/// Σ_i [max{x, o_i} q_i − α_i log max{x, o_i}] + εx, +∞ where a log argument
/// vanishes.
pub fn max_coordinate_objective(x: f64, terms: &[MaxTerm], eps: f64) -> f64 {
    let mut f = eps * x;
    for t in terms {
        let w = x.max(t.other);
        if w <= 0.0 {
            return f64::INFINITY;
        }
        f += w * t.q - t.alpha * w.ln();
    }
    f
}

/// Exact minimizer of [`max_coordinate_objective`] over x ≥ 0.
///
/// On each interval between consecutive distinct `other` values the
/// objective is `x·Σq − Σα log x + εx + const` over the terms whose `other`
/// lies below x, so the global minimum is attained at 0, at a breakpoint,
/// or at one of the stationary values Σα/(Σq + ε).
pub fn minimize_max_coordinate(terms: &[MaxTerm], eps: f64) -> f64 {
    let mut levels: Vec<f64> = terms.iter().map(|t| t.other).collect();
    levels.sort_unstable_by(f64::total_cmp);
    levels.dedup();

    let mut candidates = vec![0.0];
    candidates.extend(levels.iter().copied());
    for &level in &levels {
        let (a, q) = terms
            .iter()
            .filter(|t| t.other <= level)
            .fold((0.0, 0.0), |(a, q), t| (a + t.alpha, q + t.q));
        candidates.push(a / (q + eps));
    }

    let mut best = (f64::INFINITY, f64::INFINITY);
    for &c in &candidates {
        if !(c >= 0.0) || !c.is_finite() {
            continue;
        }
        let f = max_coordinate_objective(c, terms, eps);
        if f < best.1 || (f == best.1 && c < best.0) {
            best = (c, f);
        }
    }
    best.0
}

fn lambda_terms(q: &[f64], gi: &GroupIndex, gamma: &SymMatrix, h: usize, j: usize) -> Vec<MaxTerm> {
    gi.tuples()
        .iter()
        .zip(q)
        .filter(|(t, _)| t.h == h && t.j == j)
        .map(|(t, &q)| MaxTerm {
            other: gamma.get(t.k, t.l),
            q,
            alpha: t.alpha as f64,
        })
        .collect()
}

fn gamma_terms(q: &[f64], gi: &GroupIndex, lambda: &SymMatrix, k: usize, l: usize) -> Vec<MaxTerm> {
    gi.tuples()
        .iter()
        .zip(q)
        .filter(|(t, _)| t.k == k && t.l == l)
        .map(|(t, &q)| MaxTerm {
            other: lambda.get(t.h, t.j),
            q,
            alpha: t.alpha as f64,
        })
        .collect()
}

/// λ̂_hj minimizing the max-prior surrogate with Γ fixed.
pub fn update_lambda_max(q: &[f64], gi: &GroupIndex, hp: &HyperParams, eps: f64, h: usize, j: usize) -> f64 {
    minimize_max_coordinate(&lambda_terms(q, gi, &hp.gamma, h, j), eps)
}

/// γ̂_kl minimizing the max-prior surrogate with Λ fixed.
pub fn update_gamma_max(q: &[f64], gi: &GroupIndex, hp: &HyperParams, eps: f64, k: usize, l: usize) -> f64 {
    minimize_max_coordinate(&gamma_terms(q, gi, &hp.lambda, k, l), eps)
}

/// The (max_1) objective of a single λ_hj, for checks and diagnostics.
pub fn lambda_max_objective(
    x: f64,
    q: &[f64],
    gi: &GroupIndex,
    hp: &HyperParams,
    eps: f64,
    h: usize,
    j: usize,
) -> f64 {
    max_coordinate_objective(x, &lambda_terms(q, gi, &hp.gamma, h, j), eps)
}

pub fn gamma_max_objective(
    x: f64,
    q: &[f64],
    gi: &GroupIndex,
    hp: &HyperParams,
    eps: f64,
    k: usize,
    l: usize,
) -> f64 {
    max_coordinate_objective(x, &gamma_terms(q, gi, &hp.lambda, k, l), eps)
}

/// All λ_hj updated with Γ held fixed.
pub fn sweep_lambda_max(q: &[f64], gi: &GroupIndex, hp: &HyperParams, eps: f64) -> SymMatrix {
    let mut out = hp.lambda.clone();
    for h in 0..gi.m1() {
        for j in 0..=h {
            out.set(h, j, update_lambda_max(q, gi, hp, eps, h, j));
        }
    }
    out
}

/// All γ_kl updated with Λ held fixed.
pub fn sweep_gamma_max(q: &[f64], gi: &GroupIndex, hp: &HyperParams, eps: f64) -> SymMatrix {
    let mut out = hp.gamma.clone();
    for k in 0..gi.m2() {
        for l in 0..=k {
            out.set(k, l, update_gamma_max(q, gi, hp, eps, k, l));
        }
    }
    out
}

/// Numerator of the multiplicative λ update: Σ_{k≥l} α_{hk,jl}.
pub fn mult_numerator(m_other: usize, n: usize, diagonal: bool) -> f64 {
    let m = m_other as f64;
    let c = (2 * n + 1) as f64;
    if diagonal {
        0.5 * (m + m * m * c)
    } else {
        m * m * c
    }
}

pub fn update_lambda_mult(q: &[f64], gi: &GroupIndex, hp: &HyperParams, eps: f64, h: usize, j: usize) -> f64 {
    let denom: f64 = gi
        .tuples()
        .iter()
        .zip(q)
        .filter(|(t, _)| t.h == h && t.j == j)
        .map(|(t, &q)| hp.gamma.get(t.k, t.l) * q)
        .sum();
    mult_numerator(gi.m2(), gi.order(), h == j) / (denom + eps)
}

pub fn update_gamma_mult(q: &[f64], gi: &GroupIndex, hp: &HyperParams, eps: f64, k: usize, l: usize) -> f64 {
    let denom: f64 = gi
        .tuples()
        .iter()
        .zip(q)
        .filter(|(t, _)| t.k == k && t.l == l)
        .map(|(t, &q)| hp.lambda.get(t.h, t.j) * q)
        .sum();
    mult_numerator(gi.m1(), gi.order(), k == l) / (denom + eps)
}

pub fn sweep_lambda_mult(q: &[f64], gi: &GroupIndex, hp: &HyperParams, eps: f64) -> SymMatrix {
    let mut out = hp.lambda.clone();
    for h in 0..gi.m1() {
        for j in 0..=h {
            out.set(h, j, update_lambda_mult(q, gi, hp, eps, h, j));
        }
    }
    out
}

pub fn sweep_gamma_mult(q: &[f64], gi: &GroupIndex, hp: &HyperParams, eps: f64) -> SymMatrix {
    let mut out = hp.gamma.clone();
    for k in 0..gi.m2() {
        for l in 0..=k {
            out.set(k, l, update_gamma_mult(q, gi, hp, eps, k, l));
        }
    }
    out
}

/// ω = α_S/(q_S + ε) for every entry pair.
pub fn update_omega_sparse(q: &[f64], sg: &SparseGroupIndex, eps: f64) -> SparseWeights {
    let mut omega = SymMatrix::filled(sg.dim(), 0.0);
    for ((&(r, c), &a), &qv) in sg.pairs().iter().zip(sg.alphas()).zip(q) {
        omega.set(r, c, a as f64 / (qv + eps));
    }
    SparseWeights { omega }
}

#[derive(Debug, Clone)]
pub struct InitOutcome {
    pub hyper: HyperParams,
    pub sweeps: usize,
    pub converged: bool,
}

/// Alternating Λ/Γ max-prior updates from Γ = 1 with q frozen, until both
/// change by at most `tol` in max-abs norm.
pub fn init_hyper(q: &[f64], gi: &GroupIndex, eps: f64, tol: f64, max_sweeps: usize) -> InitOutcome {
    alternate(q, gi, eps, tol, max_sweeps, sweep_lambda_max, sweep_gamma_max)
}

/// Same scheme with the multiplicative-prior updates.
pub fn init_hyper_mult(q: &[f64], gi: &GroupIndex, eps: f64, tol: f64, max_sweeps: usize) -> InitOutcome {
    alternate(q, gi, eps, tol, max_sweeps, sweep_lambda_mult, sweep_gamma_mult)
}

type Sweep = fn(&[f64], &GroupIndex, &HyperParams, f64) -> SymMatrix;

fn alternate(
    q: &[f64],
    gi: &GroupIndex,
    eps: f64,
    tol: f64,
    max_sweeps: usize,
    lambda_step: Sweep,
    gamma_step: Sweep,
) -> InitOutcome {
    let mut hp = HyperParams::filled(gi.m1(), gi.m2(), 0.0, 1.0);
    for sweep in 1..=max_sweeps {
        let lambda = lambda_step(q, gi, &hp, eps);
        let dl = lambda.max_abs_diff(&hp.lambda);
        hp.lambda = lambda;
        let gamma = gamma_step(q, gi, &hp, eps);
        let dg = gamma.max_abs_diff(&hp.gamma);
        hp.gamma = gamma;
        if dl <= tol && dg <= tol {
            return InitOutcome {
                hyper: hp,
                sweeps: sweep,
                converged: true,
            };
        }
    }
    warn!("hyperparameter initialization stopped after {max_sweeps} sweeps");
    InitOutcome {
        hyper: hp,
        sweeps: max_sweeps,
        converged: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn forced_lambda_regime() {
        let gi = GroupIndex::new(2, 1, 0).unwrap();
        let hp = HyperParams::filled(2, 1, 0.0, 0.0);
        let q = vec![1.0; gi.tuples().len()];
        let lam = update_lambda_max(&q, &gi, &hp, 1e-3, 1, 0);
        assert_relative_eq!(lam, 1.0 / 1.001, epsilon = 1e-15);
    }

    #[test]
    fn huge_gamma_gives_zero_lambda() {
        let gi = GroupIndex::new(2, 2, 1).unwrap();
        let hp = HyperParams::filled(2, 2, 0.0, 1e9);
        let q = vec![0.3; gi.tuples().len()];
        assert_eq!(update_lambda_max(&q, &gi, &hp, 1e-3, 1, 0), 0.0);
    }

    #[test]
    fn numerators_match_alpha_sums() {
        assert_eq!(mult_numerator(3, 2, true), 24.0);
        assert_eq!(mult_numerator(3, 2, false), 45.0);
        let gi = GroupIndex::new(2, 3, 2).unwrap();
        let sum = |h: usize, j: usize| -> u32 {
            gi.tuples().iter().filter(|t| t.h == h && t.j == j).map(|t| t.alpha).sum()
        };
        assert_eq!(sum(0, 0) as f64, mult_numerator(3, 2, true));
        assert_eq!(sum(1, 0) as f64, mult_numerator(3, 2, false));
    }

    #[test]
    fn zero_q_multiplicative() {
        let gi = GroupIndex::new(2, 2, 1).unwrap();
        let hp = HyperParams::filled(2, 2, 1.0, 1.0);
        let q = vec![0.0; gi.tuples().len()];
        assert_relative_eq!(update_lambda_mult(&q, &gi, &hp, 1e-3, 0, 0), mult_numerator(2, 1, true) / 1e-3);
    }

    #[test]
    fn omega_formula() {
        let sg = SparseGroupIndex::new(2, 2);
        let sw = update_omega_sparse(&[1.0, 0.0, 2.0], &sg, 1e-3);
        assert_relative_eq!(sw.omega.get(0, 0), 3.0 / 1.001);
        assert_relative_eq!(sw.omega.get(1, 0), 5.0 / 1e-3);
        assert_relative_eq!(sw.omega.get(1, 1), 3.0 / 2.001);
    }

    #[test]
    fn init_preserves_symmetry_and_is_idempotent() {
        let gi = GroupIndex::new(3, 2, 1).unwrap();
        let q = vec![5.0; gi.tuples().len()];
        let out = init_hyper(&q, &gi, 1e-3, 1e-4, 100);
        assert!(out.converged);
        let l = out.hyper.lambda.packed();
        let diag: Vec<f64> = (0..3).map(|h| out.hyper.lambda.get(h, h)).collect();
        assert!(diag.windows(2).all(|w| w[0] == w[1]));
        assert!(l.iter().all(|x| x.is_finite() && *x >= 0.0));
        let again_l = sweep_lambda_max(&q, &gi, &out.hyper, 1e-3);
        assert!(again_l.max_abs_diff(&out.hyper.lambda) <= 1e-4);
    }
}
