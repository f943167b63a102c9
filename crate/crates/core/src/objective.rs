//! Whittle-type negative log-likelihood, group values, penalties and the
//! surrogate objectives minimized by the empirical-Bayes loops.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::data::CovLags;
use crate::error::{KgmError, Result};
use crate::groups::{pair_index, GroupIndex, ParamGroups, SparseGroupIndex};
use crate::spectral::{num_params, param_index, FreqGrid, PseudoPoly};

/// Symmetric matrix stored by its packed lower triangle. Serialized as a
/// full nested array.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
pub struct SymMatrix {
    size: usize,
    packed: Vec<f64>,
}

impl SymMatrix {
    pub fn filled(size: usize, value: f64) -> Self {
        SymMatrix {
            size,
            packed: vec![value; size * (size + 1) / 2],
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        let (a, b) = if a >= b { (a, b) } else { (b, a) };
        self.packed[pair_index(a, b)]
    }

    pub fn set(&mut self, a: usize, b: usize, value: f64) {
        let (a, b) = if a >= b { (a, b) } else { (b, a) };
        self.packed[pair_index(a, b)] = value;
    }

    /// Entries in packed order (a ≥ b).
    pub fn packed(&self) -> &[f64] {
        &self.packed
    }

    /// Σ_{a≥b} entries.
    pub fn lower_sum(&self) -> f64 {
        self.packed.iter().sum()
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        self.packed
            .iter()
            .zip(&other.packed)
            .map(|(a, b)| {
                if a == b {
                    0.0
                } else {
                    (a - b).abs()
                }
            })
            .fold(0.0, f64::max)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(s: SymMatrix) -> Self {
        (0..s.size)
            .map(|a| (0..s.size).map(|b| s.get(a, b)).collect())
            .collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = String;

    fn try_from(rows: Vec<Vec<f64>>) -> std::result::Result<Self, String> {
        let size = rows.len();
        let mut s = SymMatrix::filled(size, 0.0);
        for (a, row) in rows.iter().enumerate() {
            if row.len() != size {
                return Err(format!("row {a} has length {}, expected {size}", row.len()));
            }
            for b in 0..=a {
                if row[b] != rows[b][a] {
                    return Err(format!("matrix not symmetric at ({a}, {b})"));
                }
                s.set(a, b, row[b]);
            }
        }
        Ok(s)
    }
}

/// Module weights Λ (m1×m1) and node weights Γ (m2×m2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub lambda: SymMatrix,
    pub gamma: SymMatrix,
}

impl HyperParams {
    pub fn filled(m1: usize, m2: usize, lambda: f64, gamma: f64) -> Self {
        HyperParams {
            lambda: SymMatrix::filled(m1, lambda),
            gamma: SymMatrix::filled(m2, gamma),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |v: &f64| !(*v >= 0.0);
        if self.lambda.packed().iter().any(bad) || self.gamma.packed().iter().any(bad) {
            return Err(KgmError::InvalidArgument(
                "hyperparameters must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Weights Ω of the unstructured sparse penalty, one per unordered entry pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseWeights {
    pub omega: SymMatrix,
}

/// Result of one likelihood evaluation.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub value: f64,
    pub gradient: Vec<f64>,
}

/// Precomputed data for repeated evaluation of ℓ(y^N; Σ) and its gradient.
///
/// Σ(−θ) is the conjugate of Σ(θ), so only grid points in [−π, 0] are visited
/// and interior points are counted twice.
#[derive(Debug, Clone)]
pub struct Likelihood {
    m: usize,
    n: usize,
    scale: f64,
    grid: FreqGrid,
    lags: Vec<Vec<f64>>,
    linear: Vec<f64>,
    weights: Vec<f64>,
    /// e^{−itθ_g} for t = 0..=n at each visited point.
    phases: Vec<Vec<Complex64>>,
    thetas: Vec<f64>,
}

impl Likelihood {
    pub fn new(lags: &CovLags, grid: &FreqGrid) -> Result<Self> {
        let m = lags.dim();
        let n = lags.order();
        let g = grid.len();
        if 2 * n >= g {
            return Err(KgmError::GridTooCoarse {
                order: n,
                points: g,
            });
        }
        let mut linear = vec![0.0; num_params(m, n)];
        for r in 0..m {
            for c in 0..=r {
                let v = lags.lag(0)[(r, c)];
                linear[param_index(m, 0, r, c)] = if r == c { v } else { 2.0 * v };
            }
        }
        for t in 1..=n {
            for r in 0..m {
                for c in 0..m {
                    linear[param_index(m, t, r, c)] = lags.lag(t)[(r, c)];
                }
            }
        }
        let half = g / 2;
        let mut weights = Vec::with_capacity(half + 1);
        let mut phases = Vec::with_capacity(half + 1);
        let mut thetas = Vec::with_capacity(half + 1);
        for idx in 0..=half {
            let th = grid.theta(idx);
            let w = if idx == 0 || idx == half { 1.0 } else { 2.0 };
            weights.push(w / g as f64);
            phases.push((0..=n).map(|t| Complex64::from_polar(1.0, -(t as f64) * th)).collect());
            thetas.push(th);
        }
        Ok(Likelihood {
            m,
            n,
            scale: lags.scale(),
            grid: *grid,
            lags: lags
                .lags()
                .iter()
                .map(|r| {
                    let mut v = Vec::with_capacity(m * m);
                    for i in 0..m {
                        for j in 0..m {
                            v.push(r[(i, j)]);
                        }
                    }
                    v
                })
                .collect(),
            linear,
            weights,
            phases,
            thetas,
        })
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> &FreqGrid {
        &self.grid
    }

    pub fn num_params(&self) -> usize {
        self.linear.len()
    }

    /// The factor (N − n)/2 in front of the normalized integral.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Value and gradient at `params`. Fails with the first grid angle where
    /// Σ is not positive definite or its smallest eigenvalue is provably
    /// below `margin` (checked through tr Σ⁻¹ ≤ 1/margin).
    pub fn evaluate(&self, params: &[f64], margin: f64) -> Result<Evaluation> {
        let m = self.m;
        let n = self.n;
        debug_assert_eq!(params.len(), self.linear.len());
        let mut a = vec![Complex64::new(0.0, 0.0); m * m];
        let mut x = vec![Complex64::new(0.0, 0.0); m * m];
        let mut inv = vec![Complex64::new(0.0, 0.0); m * m];
        let mut coef = vec![vec![0.0; m * m]; n + 1];
        let mut logdet_mean = 0.0;

        let s0 = m * (m + 1) / 2;
        for (p, phase) in self.phases.iter().enumerate() {
            // Σ(θ) in row-major order
            for r in 0..m {
                for c in 0..=r {
                    let v = Complex64::new(params[r * (r + 1) / 2 + c], 0.0);
                    a[r * m + c] = v;
                    a[c * m + r] = v;
                }
            }
            for t in 1..=n {
                let e = phase[t] * 0.5;
                let ec = e.conj();
                let base = s0 + (t - 1) * m * m;
                let st = &params[base..base + m * m];
                for r in 0..m {
                    for c in 0..m {
                        a[r * m + c] += e * st[r * m + c] + ec * st[c * m + r];
                    }
                }
            }
            let logdet = match cholesky_in_place(&mut a, m) {
                Some(l) => l,
                None => {
                    return Err(KgmError::NotPositiveDefinite {
                        theta: self.thetas[p],
                    })
                }
            };
            hermitian_inverse_from_cholesky(&a, &mut x, &mut inv, m);
            let trace: f64 = (0..m).map(|i| inv[i * m + i].re).sum();
            if !(trace.is_finite() && trace * margin <= 1.0) {
                return Err(KgmError::NotPositiveDefinite {
                    theta: self.thetas[p],
                });
            }
            let w = self.weights[p];
            logdet_mean += w * logdet;
            // Re(Σ⁻¹ e^{itθ}), accumulated with the pair weight
            for (t, acc) in coef.iter_mut().enumerate() {
                let e = phase[t].conj() * w;
                for (dst, v) in acc.iter_mut().zip(&inv) {
                    *dst += v.re * e.re - v.im * e.im;
                }
            }
        }

        let lin: f64 = self.linear.iter().zip(params).map(|(a, b)| a * b).sum();
        let value = self.scale * (lin - logdet_mean);

        let mut gradient = vec![0.0; self.linear.len()];
        for r in 0..m {
            for c in 0..=r {
                let d = self.lags[0][r * m + c]
                    - 0.5 * (coef[0][r * m + c] + coef[0][c * m + r]);
                gradient[r * (r + 1) / 2 + c] = self.scale * if r == c { d } else { 2.0 * d };
            }
        }
        for t in 1..=n {
            let base = s0 + (t - 1) * m * m;
            for k in 0..m * m {
                gradient[base + k] = self.scale * (self.lags[t][k] - coef[t][k]);
            }
        }
        Ok(Evaluation { value, gradient })
    }
}

/// In-place lower Cholesky factor of a Hermitian row-major matrix. Returns
/// log det on success.
fn cholesky_in_place(a: &mut [Complex64], m: usize) -> Option<f64> {
    let mut logdet = 0.0;
    for j in 0..m {
        let mut d = a[j * m + j].re;
        for k in 0..j {
            d -= a[j * m + k].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let ljj = d.sqrt();
        logdet += 2.0 * ljj.ln();
        a[j * m + j] = Complex64::new(ljj, 0.0);
        let inv = 1.0 / ljj;
        for i in (j + 1)..m {
            let mut s = a[i * m + j];
            for k in 0..j {
                s -= a[i * m + k] * a[j * m + k].conj();
            }
            a[i * m + j] = s * inv;
        }
    }
    Some(logdet)
}

/// Σ⁻¹ = L⁻ᴴ L⁻¹ from the lower factor stored in `l`.
fn hermitian_inverse_from_cholesky(
    l: &[Complex64],
    x: &mut [Complex64],
    out: &mut [Complex64],
    m: usize,
) {
    // X = L⁻¹, lower triangular, stored transposed (column j in row j) so
    // that the inner loops run over contiguous memory.
    for v in x.iter_mut() {
        *v = Complex64::new(0.0, 0.0);
    }
    for j in 0..m {
        x[j * m + j] = Complex64::new(1.0 / l[j * m + j].re, 0.0);
        for i in (j + 1)..m {
            let mut s = Complex64::new(0.0, 0.0);
            for k in j..i {
                s += l[i * m + k] * x[j * m + k];
            }
            x[j * m + i] = -s / l[i * m + i].re;
        }
    }
    // out[i][j] = Σ_{k ≥ max(i,j)} conj(X[k][i]) X[k][j]
    for i in 0..m {
        for j in 0..=i {
            let mut s = Complex64::new(0.0, 0.0);
            for k in i..m {
                s += x[i * m + k].conj() * x[j * m + k];
            }
            out[i * m + j] = s;
            out[j * m + i] = s.conj();
        }
    }
}

/// ℓ(y^N; Σ) = ((N−n)/4π)∫[−log|Σ| + tr(Φ̂_p Σ)]dθ, constant dropped.
pub fn neg_loglike(poly: &PseudoPoly, lags: &CovLags, grid: &FreqGrid) -> Result<f64> {
    check_shapes(poly, lags)?;
    Ok(Likelihood::new(lags, grid)?.evaluate(poly.params(), 0.0)?.value)
}

/// Gradient of [`neg_loglike`] with respect to the free parameters.
pub fn neg_loglike_gradient(poly: &PseudoPoly, lags: &CovLags, grid: &FreqGrid) -> Result<Vec<f64>> {
    check_shapes(poly, lags)?;
    Ok(Likelihood::new(lags, grid)?
        .evaluate(poly.params(), 0.0)?
        .gradient)
}

fn check_shapes(poly: &PseudoPoly, lags: &CovLags) -> Result<()> {
    if poly.dim() != lags.dim() || poly.order() != lags.order() {
        return Err(KgmError::Dimension(format!(
            "polynomial of size {} order {} against lags of size {} order {}",
            poly.dim(),
            poly.order(),
            lags.dim(),
            lags.order()
        )));
    }
    Ok(())
}

/// q_g = max |θ_i| over the positions of each group.
pub fn q_values<G: ParamGroups + ?Sized>(params: &[f64], groups: &G) -> Vec<f64> {
    (0..groups.group_count())
        .map(|i| {
            groups
                .group(i)
                .iter()
                .map(|&p| params[p].abs())
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Per-tuple weights max{λ_hj, γ_kl}.
pub fn group_weights_max(gi: &GroupIndex, hp: &HyperParams) -> Vec<f64> {
    gi.tuples()
        .iter()
        .map(|t| hp.lambda.get(t.h, t.j).max(hp.gamma.get(t.k, t.l)))
        .collect()
}

/// Per-tuple weights λ_hj·γ_kl.
pub fn group_weights_mult(gi: &GroupIndex, hp: &HyperParams) -> Vec<f64> {
    gi.tuples()
        .iter()
        .map(|t| hp.lambda.get(t.h, t.j) * hp.gamma.get(t.k, t.l))
        .collect()
}

/// Per-group weights ω_rc of the sparse penalty.
pub fn group_weights_sparse(sg: &SparseGroupIndex, sw: &SparseWeights) -> Vec<f64> {
    sg.pairs().iter().map(|&(r, c)| sw.omega.get(r, c)).collect()
}

/// Σ_g w_g q_g, with a zero contribution wherever q_g = 0.
pub fn weighted_sum(q: &[f64], weights: &[f64]) -> f64 {
    q.iter()
        .zip(weights)
        .map(|(&q, &w)| if q == 0.0 { 0.0 } else { w * q })
        .sum()
}

pub fn penalty_max(q: &[f64], gi: &GroupIndex, hp: &HyperParams) -> f64 {
    weighted_sum(q, &group_weights_max(gi, hp))
}

pub fn penalty_mult(q: &[f64], gi: &GroupIndex, hp: &HyperParams) -> f64 {
    weighted_sum(q, &group_weights_mult(gi, hp))
}

pub fn penalty_sparse(poly: &PseudoPoly, sg: &SparseGroupIndex, sw: &SparseWeights) -> f64 {
    weighted_sum(&q_values(poly.params(), sg), &group_weights_sparse(sg, sw))
}

/// ℓ̃ for the max prior: ℓ + Σ max{λ,γ}q − Σ α log max{λ,γ} + εΣλ + εΣγ.
pub fn surrogate_max(ell: f64, q: &[f64], gi: &GroupIndex, hp: &HyperParams, eps: f64) -> f64 {
    let w = group_weights_max(gi, hp);
    let mut logs = 0.0;
    for (t, &wt) in gi.tuples().iter().zip(&w) {
        if wt <= 0.0 {
            return f64::INFINITY;
        }
        logs += t.alpha as f64 * wt.ln();
    }
    ell + weighted_sum(q, &w) - logs + eps * (hp.lambda.lower_sum() + hp.gamma.lower_sum())
}

/// ℓ̃ for the multiplicative prior: ℓ + Σ λγq − Σ α log(λγ) + εΣλ + εΣγ.
pub fn surrogate_mult(ell: f64, q: &[f64], gi: &GroupIndex, hp: &HyperParams, eps: f64) -> f64 {
    let mut logs = 0.0;
    for t in gi.tuples() {
        let (l, g) = (hp.lambda.get(t.h, t.j), hp.gamma.get(t.k, t.l));
        if l <= 0.0 || g <= 0.0 {
            return f64::INFINITY;
        }
        logs += t.alpha as f64 * (l.ln() + g.ln());
    }
    ell + penalty_mult(q, gi, hp) - logs + eps * (hp.lambda.lower_sum() + hp.gamma.lower_sum())
}

/// ℓ̃ for the sparse baseline: ℓ + Σ ωq − Σ α_S log ω + εΣω.
pub fn surrogate_sparse(
    ell: f64,
    q: &[f64],
    sg: &SparseGroupIndex,
    sw: &SparseWeights,
    eps: f64,
) -> f64 {
    let w = group_weights_sparse(sg, sw);
    let mut logs = 0.0;
    for (&a, &wt) in sg.alphas().iter().zip(&w) {
        if wt <= 0.0 {
            return f64::INFINITY;
        }
        logs += a as f64 * wt.ln();
    }
    ell + weighted_sum(q, &w) - logs + eps * sw.omega.lower_sum()
}
