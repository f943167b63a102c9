//! Ground-truth models, spectral factorization, AR simulation, the
//! Yule-Walker maximum-entropy estimator and the evaluation metrics.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{block_toeplitz, CovLags, Series};
use crate::error::{KgmError, Result};
use crate::groups::{BinaryMatrix, KroneckerSupport};
use crate::linalg::{self, reverse_cholesky};
use crate::spectral::{FreqGrid, PseudoPoly};

/// AR factor with Σ(θ) = A(θ)ᴴA(θ), A(θ) = Σ_k A_k e^{ikθ}. The process obeys
/// A_0 y(t) + Σ_{k≥1} A_k y(t−k) = e(t) with white e of identity covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct ArModel {
    coeffs: Vec<DMatrix<f64>>,
}

impl ArModel {
    pub fn new(coeffs: Vec<DMatrix<f64>>) -> Result<Self> {
        let m = coeffs
            .first()
            .ok_or_else(|| KgmError::InvalidArgument("empty AR model".into()))?
            .nrows();
        if coeffs.iter().any(|a| a.nrows() != m || a.ncols() != m) {
            return Err(KgmError::Dimension("AR coefficients of unequal shape".into()));
        }
        Ok(ArModel { coeffs })
    }

    pub fn dim(&self) -> usize {
        self.coeffs[0].nrows()
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[DMatrix<f64>] {
        &self.coeffs
    }

    /// The pseudo-polynomial A(θ)ᴴA(θ): S_t = 2 Σ_j A_{j+t}ᵀ A_j.
    pub fn to_poly(&self) -> PseudoPoly {
        let n = self.order();
        let mats: Vec<DMatrix<f64>> = (0..=n)
            .map(|t| {
                let mut s = DMatrix::zeros(self.dim(), self.dim());
                for j in 0..=(n - t) {
                    s += self.coeffs[j + t].transpose() * &self.coeffs[j];
                }
                if t == 0 {
                    s
                } else {
                    s * 2.0
                }
            })
            .collect();
        PseudoPoly::from_coeffs(&mats).expect("square coefficients")
    }

    /// Spectral radius of the companion matrix of y(t) = −A_0⁻¹ Σ A_k y(t−k).
    pub fn spectral_radius(&self) -> Result<f64> {
        let m = self.dim();
        let n = self.order();
        if n == 0 {
            return Ok(0.0);
        }
        let a0inv = self.coeffs[0]
            .clone()
            .try_inverse()
            .ok_or_else(|| KgmError::Numerical("singular leading AR coefficient".into()))?;
        let mut comp = DMatrix::zeros(n * m, n * m);
        for k in 1..=n {
            let blk = -(&a0inv * &self.coeffs[k]);
            comp.view_mut((0, (k - 1) * m), (m, m)).copy_from(&blk);
        }
        for i in 1..n {
            comp.view_mut((i * m, (i - 1) * m), (m, m))
                .copy_from(&DMatrix::identity(m, m));
        }
        Ok(comp
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max))
    }
}

/// Relative L² residual ‖Σ − AᴴA‖ / ‖Σ‖ on the grid.
pub fn factorization_residual(sigma: &PseudoPoly, ar: &ArModel, grid: &FreqGrid) -> Result<f64> {
    let a = sigma.evaluate(grid);
    let b = ar.to_poly().evaluate(grid);
    Ok((a.mean_sq_distance(&b)? / a.mean_sq_norm()).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorOptions {
    pub tol: f64,
    pub max_depth: usize,
}

impl Default for FactorOptions {
    fn default() -> Self {
        FactorOptions {
            tol: 1e-6,
            max_depth: 4096,
        }
    }
}

/// Bauer's method: banded block Cholesky of the growing block-Toeplitz
/// matrix of Σ's coefficients; the last block row converges to the
/// minimum-phase factor. Depth is checked at every power of two.
pub fn spectral_factorize(sigma: &PseudoPoly, opts: &FactorOptions) -> Result<ArModel> {
    let m = sigma.dim();
    let n = sigma.order();
    let grid = FreqGrid::new((4 * (n + 1)).next_power_of_two().max(64))?;
    // T_{p,q} = Q_{p−q} with Q_t the e^{−itθ} coefficient: Q_0 = S_0,
    // Q_t = ½S_t below the diagonal
    let below: Vec<DMatrix<f64>> = (0..=n)
        .map(|t| if t == 0 { sigma.coeff(0) } else { sigma.coeff(t) * 0.5 })
        .collect();

    // rows[r][k] = L_{p, p−k} for the last n+1 block rows, newest last
    let mut rows: Vec<Vec<DMatrix<f64>>> = Vec::new();
    let mut diag_chol: Vec<DMatrix<f64>> = Vec::new();
    let mut last_residual = f64::INFINITY;
    let mut checkpoint = 8usize;
    for p in 0..opts.max_depth {
        let mut row: Vec<DMatrix<f64>> = vec![DMatrix::zeros(m, m); n + 1];
        let nb = n.min(p);
        // off-diagonal blocks, q = p−k for k = nb..1
        for k in (1..=nb).rev() {
            let q_row = &rows[rows.len() - k];
            let mut acc = below[k].clone();
            // Σ_i L_{p,i} L_{q,i}ᵀ over i < q within both bands
            for kk in (k + 1)..=nb {
                let i_off_q = kk - k;
                if i_off_q <= n {
                    acc -= &row[kk] * q_row[i_off_q].transpose();
                }
            }
            let lqq = &diag_chol[diag_chol.len() - k];
            // L_{p,q} = acc · L_{q,q}⁻ᵀ
            let sol = lqq
                .solve_lower_triangular(&acc.transpose())
                .ok_or_else(|| KgmError::Numerical("singular Cholesky block".into()))?;
            row[k] = sol.transpose();
        }
        let mut d = below[0].clone();
        for blk in row.iter().take(nb + 1).skip(1) {
            d -= blk * blk.transpose();
        }
        let d = (&d + d.transpose()) * 0.5;
        let chol = nalgebra::Cholesky::new(d).ok_or(KgmError::NotPositiveDefinite { theta: f64::NAN })?;
        let l = chol.unpack();
        row[0] = l.clone();
        rows.push(row);
        diag_chol.push(l);
        if rows.len() > n + 1 {
            rows.remove(0);
            diag_chol.remove(0);
        }
        if p + 1 == checkpoint || p + 1 == opts.max_depth {
            checkpoint *= 2;
            if p < n {
                continue;
            }
            let last = rows.last().expect("at least one row");
            let ar = normalize_factor(last.iter().map(|b| b.transpose()).collect())?;
            last_residual = factorization_residual(sigma, &ar, &grid)?;
            if last_residual <= opts.tol {
                return Ok(ar);
            }
        }
    }
    Err(KgmError::FactorizationNotConverged {
        residual: last_residual,
        depth: opts.max_depth,
    })
}

/// Rotates a factor so that A_0 is lower triangular with positive diagonal.
fn normalize_factor(coeffs: Vec<DMatrix<f64>>) -> Result<ArModel> {
    let a0 = &coeffs[0];
    let gram = a0.transpose() * a0;
    let l = reverse_cholesky(&gram)
        .ok_or_else(|| KgmError::Numerical("leading factor is singular".into()))?;
    let a0inv = a0
        .clone()
        .try_inverse()
        .ok_or_else(|| KgmError::Numerical("leading factor is singular".into()))?;
    let q = &l * a0inv;
    let mut out: Vec<DMatrix<f64>> = coeffs.iter().map(|a| &q * a).collect();
    // exact triangular shape
    let m = out[0].nrows();
    for r in 0..m {
        for c in (r + 1)..m {
            out[0][(r, c)] = 0.0;
        }
    }
    ArModel::new(out)
}

/// Samples y(t) from A_0 y(t) = e(t) − Σ_k A_k y(t−k) from a zero state,
/// discarding the first `burnin` samples.
pub fn simulate<R: Rng + ?Sized>(ar: &ArModel, len: usize, burnin: usize, rng: &mut R) -> Result<Series> {
    let m = ar.dim();
    let n = ar.order();
    let a0 = &ar.coeffs()[0];
    if (0..m).any(|i| !(a0[(i, i)] != 0.0)) {
        return Err(KgmError::Numerical("leading AR coefficient is singular".into()));
    }
    let total = len + burnin;
    let mut hist: Vec<Vec<f64>> = vec![vec![0.0; m]; n];
    let mut out = DMatrix::zeros(len, m);
    let mut rhs = vec![0.0; m];
    for t in 0..total {
        for v in rhs.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        for k in 1..=n {
            let past = &hist[(t + n - k) % n.max(1)];
            let a = &ar.coeffs()[k];
            for (r, v) in rhs.iter_mut().enumerate() {
                let mut s = 0.0;
                for c in 0..m {
                    s += a[(r, c)] * past[c];
                }
                *v -= s;
            }
        }
        // forward substitution with lower-triangular A_0
        let mut y = vec![0.0; m];
        for r in 0..m {
            let mut s = rhs[r];
            for c in 0..r {
                s -= a0[(r, c)] * y[c];
            }
            y[r] = s / a0[(r, r)];
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(KgmError::Numerical("simulation diverged".into()));
        }
        if t >= burnin {
            for c in 0..m {
                out[(t - burnin, c)] = y[c];
            }
        }
        if n > 0 {
            hist[t % n] = y;
        }
    }
    Series::new(out)
}

/// Maximum-entropy (Yule-Walker) estimate Σ_ME = ĀᴴΛ⁻¹Ā whose inverse matches
/// the lags R̂_0..R̂_n.
pub fn yule_walker_me(lags: &CovLags) -> Result<PseudoPoly> {
    let m = lags.dim();
    let n = lags.order();
    let r = lags.lags();
    let mut b: Vec<DMatrix<f64>> = vec![DMatrix::identity(m, m)];
    let innov = if n == 0 {
        r[0].clone()
    } else {
        // [Ā_1 … Ā_n] T = [R_1ᵀ … R_nᵀ] with T_{k,s} = E[y(t−k) y(t−s)ᵀ]
        let t_mat = DMatrix::from_fn(n * m, n * m, |row, col| {
            let (k, s) = (row / m, col / m);
            let (i, j) = (row % m, col % m);
            if s >= k {
                r[s - k][(j, i)]
            } else {
                r[k - s][(i, j)]
            }
        });
        let rhs = DMatrix::from_fn(m, n * m, |i, col| r[col / m + 1][(col % m, i)]);
        let chol = nalgebra::Cholesky::new(t_mat.clone()).ok_or_else(|| {
            KgmError::ToeplitzNotPositiveDefinite {
                min_eigenvalue: linalg::symmetric_min_eigenvalue(&block_toeplitz(lags)),
            }
        })?;
        let abar = chol.solve(&rhs.transpose()).transpose();
        let mut innov = r[0].clone();
        for k in 1..=n {
            let ak = abar.view((0, (k - 1) * m), (m, m)).into_owned();
            innov -= &ak * &r[k];
            b.push(-ak);
        }
        (&innov + innov.transpose()) * 0.5
    };
    let linv = nalgebra::Cholesky::new(innov.clone())
        .ok_or(KgmError::ToeplitzNotPositiveDefinite {
            min_eigenvalue: linalg::symmetric_min_eigenvalue(&innov),
        })?
        .inverse();
    let mats: Vec<DMatrix<f64>> = (0..=n)
        .map(|t| {
            let mut s = DMatrix::zeros(m, m);
            for j in 0..=(n - t) {
                s += b[j + t].transpose() * &linv * &b[j];
            }
            if t == 0 {
                (&s + s.transpose()) * 0.5
            } else {
                s * 2.0
            }
        })
        .collect();
    PseudoPoly::from_coeffs(&mats)
}

/// Symmetric support with unit diagonal and round(η·m(m−1)/2) off-diagonal
/// pairs chosen uniformly.
pub fn random_support<R: Rng + ?Sized>(m: usize, eta: f64, rng: &mut R) -> BinaryMatrix {
    let total = m * (m.saturating_sub(1)) / 2;
    let k = ((eta.clamp(0.0, 1.0) * total as f64).round() as usize).min(total);
    let mut b = BinaryMatrix::identity(m);
    if total == 0 {
        return b;
    }
    let pairs: Vec<(usize, usize)> = (1..m).flat_map(|r| (0..r).map(move |c| (r, c))).collect();
    for idx in sample(rng, total, k).into_iter() {
        let (r, c) = pairs[idx];
        b.set(r, c, true);
        b.set(c, r, true);
    }
    b
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOptions {
    /// Coefficients are drawn from U[−a, a] with a = amplitude/(n+1).
    pub amplitude: f64,
    /// Smallest grid eigenvalue after the diagonal shift.
    pub margin: f64,
    pub grid_points: usize,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            amplitude: 0.4,
            margin: 0.5,
            grid_points: crate::spectral::DEFAULT_GRID_POINTS,
        }
    }
}

/// Random Σ ∈ Q⁺ with coefficient support inside E1 ⊗ E2.
pub fn random_kgm_model<R: Rng + ?Sized>(
    m1: usize,
    m2: usize,
    n: usize,
    eta1: f64,
    eta2: f64,
    opts: &ModelOptions,
    rng: &mut R,
) -> Result<(PseudoPoly, KroneckerSupport)> {
    if m1 == 0 || m2 == 0 {
        return Err(KgmError::InvalidArgument("m1 and m2 must be positive".into()));
    }
    let ks = KroneckerSupport::new(random_support(m1, eta1, rng), random_support(m2, eta2, rng))?;
    let pattern = ks.kron();
    let m = m1 * m2;
    let a = opts.amplitude / (n + 1) as f64;
    let mut p = PseudoPoly::zeros(m, n);
    for r in 0..m {
        for c in 0..=r {
            if pattern.get(r, c) {
                p.set(0, r, c, rng.random_range(-a..=a));
            }
        }
    }
    for t in 1..=n {
        for r in 0..m {
            for c in 0..m {
                if pattern.get(r, c) {
                    p.set(t, r, c, rng.random_range(-a..=a));
                }
            }
        }
    }
    let grid = FreqGrid::new(opts.grid_points)?;
    let min_eig = p.min_grid_eigenvalue(&grid);
    p.shift_diagonal((-min_eig).max(0.0) + opts.margin);
    Ok((p, ks))
}

/// Fraction of entries where E1⊗E2 and Ê1⊗Ê2 differ.
pub fn metric_esp(truth: &KroneckerSupport, est: &KroneckerSupport) -> Result<f64> {
    let a = truth.kron();
    let b = est.kron();
    let m = a.size();
    Ok(a.hamming(&b)? as f64 / (m * m) as f64)
}

/// ∫‖Σ̂ − Σ‖²_F / ∫‖Σ‖²_F by grid quadrature.
pub fn metric_err(est: &PseudoPoly, truth: &PseudoPoly, grid: &FreqGrid) -> Result<f64> {
    if est.dim() != truth.dim() {
        return Err(KgmError::Dimension("estimate and truth differ in size".into()));
    }
    // pad to a common order
    let n = est.order().max(truth.order());
    let a = pad_order(est, n).evaluate(grid);
    let b = pad_order(truth, n).evaluate(grid);
    Ok(a.mean_sq_distance(&b)? / b.mean_sq_norm())
}

/// Same polynomial with zero coefficients appended up to order `n`.
pub fn pad_order(p: &PseudoPoly, n: usize) -> PseudoPoly {
    if p.order() >= n {
        return p.clone();
    }
    let mut c = p.coeffs();
    c.resize(n + 1, DMatrix::zeros(p.dim(), p.dim()));
    PseudoPoly::from_coeffs(&c).expect("consistent shapes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::covariance_lags;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(v: &[f64]) -> Vec<DMatrix<f64>> {
        v.iter().map(|&x| DMatrix::from_element(1, 1, x)).collect()
    }

    #[test]
    fn factor_scalar_quadratic() {
        let sigma = PseudoPoly::from_coeffs(&scalar(&[1.25, 1.0])).unwrap();
        let ar = spectral_factorize(&sigma, &FactorOptions::default()).unwrap();
        assert_relative_eq!(ar.coeffs()[0][(0, 0)], 1.0, epsilon = 1e-6);
        assert_relative_eq!(ar.coeffs()[1][(0, 0)], 0.5, epsilon = 1e-6);
        let one = PseudoPoly::identity(1, 0, 1.0);
        let ar = spectral_factorize(&one, &FactorOptions::default()).unwrap();
        assert_relative_eq!(ar.coeffs()[0][(0, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn random_model_factorizes_and_is_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (sigma, ks) = random_kgm_model(2, 2, 2, 0.5, 0.5, &ModelOptions::default(), &mut rng).unwrap();
        let pattern = ks.kron();
        for t in 0..=2 {
            for r in 0..4 {
                for c in 0..4 {
                    if !pattern.get(r, c) {
                        assert_eq!(sigma.get(t, r, c), 0.0);
                    }
                }
            }
        }
        assert!(sigma.min_grid_eigenvalue(&FreqGrid::default()) >= 0.5 - 1e-12);
        let ar = spectral_factorize(&sigma, &FactorOptions::default()).unwrap();
        assert!(factorization_residual(&sigma, &ar, &FreqGrid::default()).unwrap() <= 1e-6);
        assert!(ar.spectral_radius().unwrap() < 1.0);
        let a0 = &ar.coeffs()[0];
        assert!(a0[(0, 1)] == 0.0 && a0[(0, 0)] > 0.0);
    }

    #[test]
    fn yule_walker_scalar_ar1() {
        let lags = CovLags::new(100, scalar(&[1.0, 0.5])).unwrap();
        let me = yule_walker_me(&lags).unwrap();
        // Σ_ME = |1 − ½e^{iθ}|²/(3/4): S_0 = (1 + 1/4)/(3/4), S_1 = 2·(−½)/(3/4)
        assert_relative_eq!(me.get(0, 0, 0), 1.25 / 0.75, epsilon = 1e-12);
        assert_relative_eq!(me.get(1, 0, 0), -1.0 / 0.75, epsilon = 1e-12);
        let phi = me.evaluate(&FreqGrid::default()).invert().unwrap();
        let c = phi.fourier_coefficients(1).unwrap();
        assert_relative_eq!(c[0][(0, 0)], 1.0, epsilon = 1e-10);
        assert_relative_eq!(c[1][(0, 0)], 0.5, epsilon = 1e-10);
    }

    #[test]
    fn yule_walker_order_zero() {
        let r0 = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let me = yule_walker_me(&CovLags::new(10, vec![r0.clone()]).unwrap()).unwrap();
        assert!((me.coeff(0) - r0.try_inverse().unwrap()).norm() < 1e-12);
    }

    #[test]
    fn simulate_ar1_autocorrelation() {
        let ar = ArModel::new(scalar(&[1.0, 0.5])).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let s = simulate(&ar, 100_000, 1000, &mut rng).unwrap();
        let lags = covariance_lags(&s, 1).unwrap();
        // y(t) + ½y(t−1) = e(t) has lag-one autocorrelation −½
        let rho = lags.lag(1)[(0, 0)] / lags.lag(0)[(0, 0)];
        assert!((rho + 0.5).abs() < 0.01, "rho = {rho}");
    }

    #[test]
    fn support_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(random_support(5, 0.0, &mut rng), BinaryMatrix::identity(5));
        assert_eq!(random_support(5, 1.0, &mut rng), BinaryMatrix::ones(5));
        for _ in 0..20 {
            let b = random_support(6, 0.3, &mut rng);
            assert!(b.is_symmetric() && b.has_unit_diagonal());
            assert_eq!((b.count_ones() - 6) / 2, 5);
        }
    }

    #[test]
    fn metric_cases() {
        let e1 = BinaryMatrix::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let e2 = BinaryMatrix::from_edges(4, &[(0, 1), (1, 2), (1, 3)]).unwrap();
        let truth = KroneckerSupport::new(e1, e2).unwrap();
        assert_eq!(metric_esp(&truth, &truth).unwrap(), 0.0);
        let id = KroneckerSupport::identity(3, 4);
        assert_relative_eq!(metric_esp(&truth, &id).unwrap(), 58.0 / 144.0);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (sigma, _) = random_kgm_model(2, 2, 1, 1.0, 1.0, &ModelOptions::default(), &mut rng).unwrap();
        let grid = FreqGrid::default();
        assert_eq!(metric_err(&sigma, &sigma, &grid).unwrap(), 0.0);
        let double = sigma.combine(2.0, &sigma, 0.0).unwrap();
        assert_relative_eq!(metric_err(&double, &sigma, &grid).unwrap(), 1.0, epsilon = 1e-12);
    }
}
