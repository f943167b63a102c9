//! Matrix pseudo-polynomials and Hermitian spectral fields on a uniform grid.
//!
//! A [`PseudoPoly`] of size `m` and order `n` represents
//!
//! ```text
//! Σ(θ) = S_0 + ½ Σ_{t=1..n} (S_t e^{-itθ} + S_tᵀ e^{itθ})
//! ```
//!
//! with `S_0` symmetric and `S_1..S_n` unrestricted. Its free parameters are
//! kept in one flat vector: the packed lower triangle of `S_0` followed by the
//! row-major entries of `S_1, …, S_n`. The optimizer works directly on that
//! vector, so symmetry of `S_0` is structural.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{KgmError, Result};
use crate::linalg;

pub const DEFAULT_GRID_POINTS: usize = 256;

/// Uniform frequency grid θ_g = −π + 2πg/G, g = 0..G.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreqGrid {
    points: usize,
}

impl Default for FreqGrid {
    fn default() -> Self {
        FreqGrid {
            points: DEFAULT_GRID_POINTS,
        }
    }
}

impl FreqGrid {
    /// `points` must be a power of two and at least 4.
    pub fn new(points: usize) -> Result<Self> {
        if points < 4 || !points.is_power_of_two() {
            return Err(KgmError::InvalidArgument(format!(
                "grid size must be a power of two >= 4, got {points}"
            )));
        }
        Ok(FreqGrid { points })
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points == 0
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.points as f64
    }

    pub fn theta(&self, g: usize) -> f64 {
        -PI + self.spacing() * g as f64
    }

    pub fn thetas(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points).map(move |g| self.theta(g))
    }
}

/// Coefficient list (S_0, …, S_n) of a matrix pseudo-polynomial. Serialized
/// as the list of row-major coefficient matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<Vec<f64>>>", try_from = "Vec<Vec<Vec<f64>>>")]
pub struct PseudoPoly {
    m: usize,
    n: usize,
    params: Vec<f64>,
}

/// Number of free parameters of a size-`m`, order-`n` pseudo-polynomial.
pub fn num_params(m: usize, n: usize) -> usize {
    m * (m + 1) / 2 + n * m * m
}

/// Flat parameter index of entry `(r, c)` of `S_t`. For `t = 0` the pair is
/// mapped onto the lower triangle.
#[inline]
pub fn param_index(m: usize, t: usize, r: usize, c: usize) -> usize {
    if t == 0 {
        let (r, c) = if r >= c { (r, c) } else { (c, r) };
        r * (r + 1) / 2 + c
    } else {
        m * (m + 1) / 2 + (t - 1) * m * m + r * m + c
    }
}

impl PseudoPoly {
    pub fn zeros(m: usize, n: usize) -> Self {
        PseudoPoly {
            m,
            n,
            params: vec![0.0; num_params(m, n)],
        }
    }

    /// Constant polynomial `scale · I`.
    pub fn identity(m: usize, n: usize, scale: f64) -> Self {
        let mut p = Self::zeros(m, n);
        for r in 0..m {
            p.params[param_index(m, 0, r, r)] = scale;
        }
        p
    }

    pub fn from_params(m: usize, n: usize, params: Vec<f64>) -> Result<Self> {
        if params.len() != num_params(m, n) {
            return Err(KgmError::Dimension(format!(
                "expected {} parameters for m={m}, n={n}, got {}",
                num_params(m, n),
                params.len()
            )));
        }
        Ok(PseudoPoly { m, n, params })
    }

    /// Builds a polynomial from square coefficient matrices. Only the lower
    /// triangle of `S_0` is read.
    pub fn from_coeffs(coeffs: &[DMatrix<f64>]) -> Result<Self> {
        let first = coeffs
            .first()
            .ok_or_else(|| KgmError::InvalidArgument("empty coefficient list".into()))?;
        let m = first.nrows();
        let n = coeffs.len() - 1;
        for (t, c) in coeffs.iter().enumerate() {
            if c.nrows() != m || c.ncols() != m {
                return Err(KgmError::Dimension(format!(
                    "coefficient {t} is {}x{}, expected {m}x{m}",
                    c.nrows(),
                    c.ncols()
                )));
            }
        }
        let mut p = Self::zeros(m, n);
        for r in 0..m {
            for c in 0..=r {
                p.params[param_index(m, 0, r, c)] = first[(r, c)];
            }
        }
        for (t, s) in coeffs.iter().enumerate().skip(1) {
            for r in 0..m {
                for c in 0..m {
                    p.params[param_index(m, t, r, c)] = s[(r, c)];
                }
            }
        }
        Ok(p)
    }

    /// Inverse of [`SpectralField::fourier_coefficients`] for a field that is a
    /// pseudo-polynomial: S_0 = C_0 and S_t = 2·C_t.
    pub fn from_fourier(coeffs: &[DMatrix<f64>]) -> Result<Self> {
        let scaled: Vec<DMatrix<f64>> = coeffs
            .iter()
            .enumerate()
            .map(|(t, c)| if t == 0 { c.clone() } else { c * 2.0 })
            .collect();
        Self::from_coeffs(&scaled)
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn into_params(self) -> Vec<f64> {
        self.params
    }

    pub fn get(&self, t: usize, r: usize, c: usize) -> f64 {
        self.params[param_index(self.m, t, r, c)]
    }

    pub fn set(&mut self, t: usize, r: usize, c: usize, value: f64) {
        self.params[param_index(self.m, t, r, c)] = value;
    }

    /// Dense copy of `S_t` (symmetric for `t = 0`).
    pub fn coeff(&self, t: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.m, self.m, |r, c| self.get(t, r, c))
    }

    pub fn coeffs(&self) -> Vec<DMatrix<f64>> {
        (0..=self.n).map(|t| self.coeff(t)).collect()
    }

    /// `a·self + b·other`.
    pub fn combine(&self, a: f64, other: &PseudoPoly, b: f64) -> Result<PseudoPoly> {
        if self.m != other.m || self.n != other.n {
            return Err(KgmError::Dimension(
                "pseudo-polynomials of different shape".into(),
            ));
        }
        let params = self
            .params
            .iter()
            .zip(&other.params)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Ok(PseudoPoly {
            m: self.m,
            n: self.n,
            params,
        })
    }

    /// Adds `shift · I` to `S_0`.
    pub fn shift_diagonal(&mut self, shift: f64) {
        for r in 0..self.m {
            self.params[param_index(self.m, 0, r, r)] += shift;
        }
    }

    pub fn value_at(&self, theta: f64) -> DMatrix<Complex64> {
        let m = self.m;
        let mut v = DMatrix::from_fn(m, m, |r, c| Complex64::new(self.get(0, r, c), 0.0));
        for t in 1..=self.n {
            let e = Complex64::from_polar(0.5, -(t as f64) * theta);
            let ec = e.conj();
            for r in 0..m {
                for c in 0..m {
                    v[(r, c)] += e * self.get(t, r, c) + ec * self.get(t, c, r);
                }
            }
        }
        v
    }

    pub fn evaluate(&self, grid: &FreqGrid) -> SpectralField {
        let values = grid.thetas().map(|th| self.value_at(th)).collect();
        SpectralField {
            grid: *grid,
            values,
        }
    }

    /// Smallest eigenvalue of Σ(θ_g) over the grid.
    pub fn min_grid_eigenvalue(&self, grid: &FreqGrid) -> f64 {
        self.evaluate(grid).min_grid_eigenvalue()
    }
}

impl From<PseudoPoly> for Vec<Vec<Vec<f64>>> {
    fn from(p: PseudoPoly) -> Self {
        p.coeffs().iter().map(linalg::matrix_to_rows).collect()
    }
}

impl TryFrom<Vec<Vec<Vec<f64>>>> for PseudoPoly {
    type Error = String;

    fn try_from(mats: Vec<Vec<Vec<f64>>>) -> std::result::Result<Self, String> {
        let coeffs = mats
            .iter()
            .map(|m| linalg::rows_to_square(m))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if let Some(s0) = coeffs.first() {
            if (s0 - s0.transpose()).amax() > 0.0 {
                return Err("S_0 is not symmetric".into());
            }
        }
        PseudoPoly::from_coeffs(&coeffs).map_err(|e| e.to_string())
    }
}

/// Hermitian matrix values of a spectral function on a [`FreqGrid`].
#[derive(Debug, Clone)]
pub struct SpectralField {
    grid: FreqGrid,
    values: Vec<DMatrix<Complex64>>,
}

impl SpectralField {
    pub fn new(grid: FreqGrid, values: Vec<DMatrix<Complex64>>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(KgmError::Dimension(format!(
                "{} values for a grid of {} points",
                values.len(),
                grid.len()
            )));
        }
        let m = values.first().map(|v| v.nrows()).unwrap_or(0);
        if values.iter().any(|v| v.nrows() != m || v.ncols() != m) {
            return Err(KgmError::Dimension("field values of unequal shape".into()));
        }
        Ok(SpectralField { grid, values })
    }

    /// Field with a per-point value computed by `f(θ)`.
    pub fn from_fn(grid: FreqGrid, f: impl Fn(f64) -> DMatrix<Complex64>) -> Result<Self> {
        Self::new(grid, grid.thetas().map(f).collect())
    }

    pub fn grid(&self) -> &FreqGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.values.first().map(|v| v.nrows()).unwrap_or(0)
    }

    pub fn values(&self) -> &[DMatrix<Complex64>] {
        &self.values
    }

    /// Largest relative deviation from Hermitian symmetry over the grid.
    pub fn hermitian_defect(&self) -> f64 {
        self.values
            .iter()
            .map(|v| {
                let scale = v.norm().max(f64::MIN_POSITIVE);
                (v - v.adjoint()).norm() / scale
            })
            .fold(0.0, f64::max)
    }

    /// C_t = (1/2π)∫F(θ)e^{itθ}dθ for t = 0..=n by rectangle quadrature on the
    /// grid. Imaginary parts are dropped and C_0 is symmetrized.
    pub fn fourier_coefficients(&self, n: usize) -> Result<Vec<DMatrix<f64>>> {
        let g = self.grid.len();
        if 2 * n >= g {
            return Err(KgmError::GridTooCoarse {
                order: n,
                points: g,
            });
        }
        let m = self.dim();
        let mut out = Vec::with_capacity(n + 1);
        for t in 0..=n {
            let mut acc = DMatrix::<f64>::zeros(m, m);
            for (idx, v) in self.values.iter().enumerate() {
                let e = Complex64::from_polar(1.0, t as f64 * self.grid.theta(idx));
                for r in 0..m {
                    for c in 0..m {
                        acc[(r, c)] += (v[(r, c)] * e).re;
                    }
                }
            }
            acc /= g as f64;
            if t == 0 {
                acc = (&acc + acc.transpose()) * 0.5;
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// Pointwise inverse. Fails at the first non-positive-definite grid point.
    pub fn invert(&self) -> Result<SpectralField> {
        let mut values = Vec::with_capacity(self.values.len());
        for (g, v) in self.values.iter().enumerate() {
            let inv = linalg::hermitian_inverse(v).ok_or(KgmError::Singular {
                theta: self.grid.theta(g),
            })?;
            values.push(inv);
        }
        Ok(SpectralField {
            grid: self.grid,
            values,
        })
    }

    pub fn min_grid_eigenvalue(&self) -> f64 {
        self.values
            .iter()
            .map(linalg::hermitian_min_eigenvalue)
            .fold(f64::INFINITY, f64::min)
    }

    /// `self + shift · I` at every grid point.
    pub fn shifted(&self, shift: f64) -> SpectralField {
        let values = self
            .values
            .iter()
            .map(|v| {
                let mut w = v.clone();
                for i in 0..w.nrows() {
                    w[(i, i)] += Complex64::new(shift, 0.0);
                }
                w
            })
            .collect();
        SpectralField {
            grid: self.grid,
            values,
        }
    }

    /// (1/2π)∫‖F(θ)‖_F² dθ by grid quadrature.
    pub fn mean_sq_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_squared()).sum::<f64>() / self.grid.len() as f64
    }

    /// (1/2π)∫‖F(θ) − G(θ)‖_F² dθ by grid quadrature.
    pub fn mean_sq_distance(&self, other: &SpectralField) -> Result<f64> {
        if self.grid != other.grid || self.dim() != other.dim() {
            return Err(KgmError::Dimension("fields on different grids".into()));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_squared())
            .sum::<f64>()
            / self.grid.len() as f64)
    }
}
