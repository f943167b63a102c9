//! Time-series ingestion, preprocessing and covariance lags.

use std::io::Read;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{KgmError, Result};
use crate::linalg;
use crate::spectral::{FreqGrid, PseudoPoly, SpectralField};

/// Multivariate samples, one row per time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    data: DMatrix<f64>,
    names: Option<Vec<String>>,
}

impl Series {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if let Some((i, _)) = data.iter().enumerate().find(|(_, x)| !x.is_finite()) {
            let (r, c) = (i % data.nrows(), i / data.nrows());
            return Err(KgmError::InvalidArgument(format!(
                "non-finite value at sample {r}, channel {c}"
            )));
        }
        Ok(Series { data, names: None })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.channels() {
            return Err(KgmError::Dimension(format!(
                "{} names for {} channels",
                names.len(),
                self.channels()
            )));
        }
        self.names = Some(names);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn channels(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let csv_err = |e: csv::Error| KgmError::Io(std::io::Error::other(e));
        if let Some(names) = &self.names {
            w.write_record(names).map_err(csv_err)?;
        }
        for r in 0..self.len() {
            w.write_record(self.data.row(r).iter().map(|x| format!("{x:e}")))
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub delimiter: u8,
    pub header: bool,
    /// Zero-based columns to keep, in output order. `None` keeps all.
    pub columns: Option<Vec<usize>>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            delimiter: b',',
            header: false,
            columns: None,
        }
    }
}

pub fn load_series(path: &Path, opts: &LoadOptions) -> Result<Series> {
    read_series(std::fs::File::open(path)?, opts)
}

/// Parses delimited text. Missing or non-numeric cells are rejected with the
/// offending line number (1-based, counting the header).
pub fn read_series<R: Read>(reader: R, opts: &LoadOptions) -> Result<Series> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(opts.delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let mut names = None;
    let mut width = None;
    let mut values = Vec::new();
    let mut rows = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| KgmError::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(i + 1),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 1);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        match width {
            None => width = Some(rec.len()),
            Some(w) if w != rec.len() => {
                return Err(KgmError::Parse {
                    line,
                    message: format!("expected {w} fields, found {}", rec.len()),
                })
            }
            _ => {}
        }
        let cols: Vec<usize> = match &opts.columns {
            Some(c) => c.clone(),
            None => (0..rec.len()).collect(),
        };
        if let Some(&bad) = cols.iter().find(|&&c| c >= rec.len()) {
            return Err(KgmError::Parse {
                line,
                message: format!("column {bad} out of range ({} fields)", rec.len()),
            });
        }
        if opts.header && names.is_none() {
            names = Some(cols.iter().map(|&c| rec[c].to_string()).collect::<Vec<_>>());
            continue;
        }
        for &c in &cols {
            let cell = &rec[c];
            let v: f64 = cell.parse().map_err(|_| KgmError::Parse {
                line,
                message: format!("column {}: cannot parse {cell:?} as a number", c + 1),
            })?;
            if !v.is_finite() {
                return Err(KgmError::Parse {
                    line,
                    message: format!("column {}: missing or non-finite value {cell:?}", c + 1),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(KgmError::Parse {
            line: 0,
            message: "no data rows".into(),
        });
    }
    let m = values.len() / rows;
    let series = Series::new(DMatrix::from_row_slice(rows, m, &values))?;
    match names {
        Some(n) => series.with_names(n),
        None => Ok(series),
    }
}

/// Non-overlapping window means. A trailing partial window is dropped.
pub fn aggregate(s: &Series, window: usize) -> Result<Series> {
    if window == 0 {
        return Err(KgmError::InvalidArgument("window must be at least 1".into()));
    }
    if s.len() < window {
        return Err(KgmError::InvalidArgument(format!(
            "series of length {} shorter than window {window}",
            s.len()
        )));
    }
    let len = s.len() / window;
    let data = DMatrix::from_fn(len, s.channels(), |r, c| {
        (0..window).map(|k| s.data[(r * window + k, c)]).sum::<f64>() / window as f64
    });
    Ok(Series {
        data,
        names: s.names.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizeOptions {
    pub remove_mean: bool,
    pub linear_detrend: bool,
    pub unit_variance: bool,
}

impl Default for NormalizeOptions {
    fn default() -> Self {
        NormalizeOptions {
            remove_mean: true,
            linear_detrend: true,
            unit_variance: true,
        }
    }
}

impl NormalizeOptions {
    pub fn none() -> Self {
        NormalizeOptions {
            remove_mean: false,
            linear_detrend: false,
            unit_variance: false,
        }
    }
}

/// Per channel: mean removal, least-squares linear detrend, then scaling to
/// unit sample variance (1/(N−1) normalization), each optional.
pub fn normalize_detrend(s: &Series, opts: &NormalizeOptions) -> Result<Series> {
    let n = s.len();
    if n < 2 {
        return Err(KgmError::InvalidArgument("need at least 2 samples".into()));
    }
    let mut data = s.data.clone();
    let tbar = (n as f64 - 1.0) / 2.0;
    let stt: f64 = (0..n).map(|t| (t as f64 - tbar).powi(2)).sum();
    for c in 0..s.channels() {
        let mut col: Vec<f64> = data.column(c).iter().copied().collect();
        if opts.remove_mean {
            let mean = col.iter().sum::<f64>() / n as f64;
            col.iter_mut().for_each(|x| *x -= mean);
        }
        if opts.linear_detrend {
            let mean = col.iter().sum::<f64>() / n as f64;
            let slope = col
                .iter()
                .enumerate()
                .map(|(t, x)| (t as f64 - tbar) * (x - mean))
                .sum::<f64>()
                / stt;
            for (t, x) in col.iter_mut().enumerate() {
                *x -= mean + slope * (t as f64 - tbar);
            }
        }
        if opts.unit_variance {
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            let magnitude = s.data.column(c).amax();
            if var.sqrt() <= 1e-12 * magnitude || var == 0.0 {
                return Err(KgmError::InvalidArgument(format!(
                    "channel {c} has zero variance"
                )));
            }
            let sd = var.sqrt();
            col.iter_mut().for_each(|x| *x /= sd);
        }
        for (t, x) in col.into_iter().enumerate() {
            data[(t, c)] = x;
        }
    }
    Ok(Series {
        data,
        names: s.names.clone(),
    })
}

/// Stacks `m1` consecutive samples into one: output sample t holds
/// x(t·m1), …, x(t·m1 + m1 − 1) as consecutive channel blocks.
pub fn stack(s: &Series, m1: usize) -> Result<Series> {
    if m1 == 0 {
        return Err(KgmError::InvalidArgument("m1 must be at least 1".into()));
    }
    if s.len() < m1 {
        return Err(KgmError::InvalidArgument(format!(
            "series of length {} shorter than stacking factor {m1}",
            s.len()
        )));
    }
    let m2 = s.channels();
    let len = s.len() / m1;
    let data = DMatrix::from_fn(len, m1 * m2, |t, idx| {
        s.data[(t * m1 + idx / m2, idx % m2)]
    });
    let names = s.names.as_ref().map(|names| {
        (0..m1)
            .flat_map(|h| names.iter().map(move |nm| format!("{nm}@{h}")))
            .collect()
    });
    Ok(Series { data, names })
}

/// Sample covariance lags R̂_0, …, R̂_n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "LagsRepr", try_from = "LagsRepr")]
pub struct CovLags {
    /// Number of samples the lags were computed from.
    pub nobs: usize,
    lags: Vec<DMatrix<f64>>,
}

impl CovLags {
    pub fn new(nobs: usize, lags: Vec<DMatrix<f64>>) -> Result<Self> {
        let m = lags
            .first()
            .ok_or_else(|| KgmError::InvalidArgument("empty lag list".into()))?
            .nrows();
        if lags.iter().any(|r| r.nrows() != m || r.ncols() != m) {
            return Err(KgmError::Dimension("lag matrices of unequal shape".into()));
        }
        if nobs < lags.len() {
            return Err(KgmError::InvalidArgument(format!(
                "{nobs} samples for order {}",
                lags.len() - 1
            )));
        }
        Ok(CovLags { nobs, lags })
    }

    pub fn order(&self) -> usize {
        self.lags.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.lags[0].nrows()
    }

    pub fn lag(&self, s: usize) -> &DMatrix<f64> {
        &self.lags[s]
    }

    pub fn lags(&self) -> &[DMatrix<f64>] {
        &self.lags
    }

    /// Likelihood scale (N − n)/2.
    pub fn scale(&self) -> f64 {
        (self.nobs - self.order()) as f64 / 2.0
    }

    /// The pseudo-polynomial whose Fourier coefficients are the lags.
    pub fn periodogram_poly(&self) -> PseudoPoly {
        PseudoPoly::from_fourier(&self.lags).expect("lags have consistent shape")
    }

    /// Permutes channels: lag (r, c) of the result is lag (perm[r], perm[c]).
    pub fn permuted(&self, perm: &[usize]) -> CovLags {
        let m = self.dim();
        CovLags {
            nobs: self.nobs,
            lags: self
                .lags
                .iter()
                .map(|r| DMatrix::from_fn(m, m, |i, j| r[(perm[i], perm[j])]))
                .collect(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LagsRepr {
    nobs: usize,
    lags: Vec<Vec<Vec<f64>>>,
}

impl From<CovLags> for LagsRepr {
    fn from(l: CovLags) -> Self {
        LagsRepr {
            nobs: l.nobs,
            lags: l.lags.iter().map(linalg::matrix_to_rows).collect(),
        }
    }
}

impl TryFrom<LagsRepr> for CovLags {
    type Error = String;

    fn try_from(r: LagsRepr) -> std::result::Result<Self, String> {
        let lags = r
            .lags
            .iter()
            .map(|m| linalg::rows_to_square(m))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        CovLags::new(r.nobs, lags).map_err(|e| e.to_string())
    }
}

/// R̂_s = (1/(N−n)) Σ_{t=1}^{N−s} y(t) y(t+s)ᵀ for s = 0..=n.
pub fn covariance_lags(s: &Series, n: usize) -> Result<CovLags> {
    let big_n = s.len();
    if big_n <= n {
        return Err(KgmError::InvalidArgument(format!(
            "need more than {n} samples, got {big_n}"
        )));
    }
    let m = s.channels();
    let denom = (big_n - n) as f64;
    let y = &s.data;
    let mut lags = Vec::with_capacity(n + 1);
    for lag in 0..=n {
        let head = y.rows(0, big_n - lag);
        let tail = y.rows(lag, big_n - lag);
        let mut r = head.transpose() * tail / denom;
        if lag == 0 {
            r = (&r + r.transpose()) * 0.5;
        }
        debug_assert_eq!(r.nrows(), m);
        lags.push(r);
    }
    CovLags::new(big_n, lags)
}

/// Truncated periodogram Φ̂_p(θ) = Σ_{|s|≤n} R̂_s e^{−isθ} with R̂_{−s} = R̂_sᵀ.
pub fn truncated_periodogram(lags: &CovLags, grid: &FreqGrid) -> SpectralField {
    lags.periodogram_poly().evaluate(grid)
}

/// Symmetric block-Toeplitz matrix with first block row [R̂_0 R̂_1 … R̂_n].
pub fn block_toeplitz(lags: &CovLags) -> DMatrix<f64> {
    let m = lags.dim();
    let k = lags.order() + 1;
    DMatrix::from_fn(k * m, k * m, |r, c| {
        let (bi, bj) = (r / m, c / m);
        let (i, j) = (r % m, c % m);
        if bj >= bi {
            lags.lag(bj - bi)[(i, j)]
        } else {
            lags.lag(bi - bj)[(j, i)]
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToeplitzReport {
    pub min_eigenvalue: f64,
    pub positive_definite: bool,
}

pub fn toeplitz_check(lags: &CovLags) -> ToeplitzReport {
    let min_eigenvalue = linalg::symmetric_min_eigenvalue(&block_toeplitz(lags));
    ToeplitzReport {
        min_eigenvalue,
        positive_definite: min_eigenvalue > 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn col(values: &[f64]) -> Series {
        Series::new(DMatrix::from_column_slice(values.len(), 1, values)).unwrap()
    }

    #[test]
    fn reads_plain_csv() {
        let s = read_series("1,2\n3,4\n5,6".as_bytes(), &LoadOptions::default()).unwrap();
        assert_eq!((s.len(), s.channels()), (3, 2));
        assert_eq!(s.data()[(2, 1)], 6.0);
        assert!(s.names().is_none());
    }

    #[test]
    fn reads_header_names() {
        let opts = LoadOptions {
            header: true,
            ..Default::default()
        };
        let s = read_series("a,b\n1,2\n".as_bytes(), &opts).unwrap();
        assert_eq!(s.names().unwrap(), ["a", "b"]);
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn rejects_nan_with_line() {
        let err = read_series("1,2\n3,NaN\n".as_bytes(), &LoadOptions::default()).unwrap_err();
        match err {
            KgmError::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("column 2"), "{message}");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn rejects_ragged_and_text() {
        let e = read_series("1,2\n3\n".as_bytes(), &LoadOptions::default()).unwrap_err();
        assert!(matches!(e, KgmError::Parse { line: 2, .. }));
        let e = read_series("1,2\n3,x\n".as_bytes(), &LoadOptions::default()).unwrap_err();
        assert!(matches!(e, KgmError::Parse { line: 2, .. }));
        let e = read_series("".as_bytes(), &LoadOptions::default()).unwrap_err();
        assert!(matches!(e, KgmError::Parse { .. }));
    }

    #[test]
    fn column_selection() {
        let opts = LoadOptions {
            columns: Some(vec![2, 0]),
            ..Default::default()
        };
        let s = read_series("1,2,3\n4,5,6\n".as_bytes(), &opts).unwrap();
        assert_eq!(s.data().row(1).iter().copied().collect::<Vec<_>>(), vec![6.0, 4.0]);
    }

    #[test]
    fn aggregate_means() {
        let s = col(&[1.0, 3.0, 5.0, 7.0, 100.0]);
        let a = aggregate(&s, 2).unwrap();
        assert_eq!(a.data().as_slice(), &[2.0, 6.0]);
        assert_eq!(aggregate(&s, 1).unwrap(), s);
    }

    #[test]
    fn normalize_two_points() {
        let s = col(&[0.0, 2.0]);
        let opts = NormalizeOptions {
            remove_mean: true,
            linear_detrend: false,
            unit_variance: true,
        };
        let out = normalize_detrend(&s, &opts).unwrap();
        let h = 1.0 / 2f64.sqrt();
        assert_abs_diff_eq!(out.data()[0], -h, epsilon = 1e-15);
        assert_abs_diff_eq!(out.data()[1], h, epsilon = 1e-15);
    }

    #[test]
    fn normalize_constant_and_ramp() {
        let c = col(&[3.0; 5]);
        let mean_only = NormalizeOptions {
            remove_mean: true,
            ..NormalizeOptions::none()
        };
        assert!(normalize_detrend(&c, &mean_only).unwrap().data().iter().all(|&x| x == 0.0));
        assert!(normalize_detrend(&c, &NormalizeOptions::default()).is_err());

        let ramp = col(&(0..50).map(|t| 2.0 + 0.3 * t as f64).collect::<Vec<_>>());
        let detrend = NormalizeOptions {
            linear_detrend: true,
            ..NormalizeOptions::none()
        };
        let d = normalize_detrend(&ramp, &detrend).unwrap();
        assert!(d.data().iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn stack_scalar() {
        let s = col(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let st = stack(&s, 2).unwrap();
        assert_eq!((st.len(), st.channels()), (2, 2));
        assert_eq!(st.data().row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0]);
        assert_eq!(st.data().row(1).iter().copied().collect::<Vec<_>>(), vec![3.0, 4.0]);
        assert_eq!(stack(&s, 1).unwrap(), s);
        assert!(stack(&s, 6).is_err());
    }

    #[test]
    fn lags_hand_example() {
        let lags = covariance_lags(&col(&[1.0, -1.0, 1.0]), 1).unwrap();
        assert_abs_diff_eq!(lags.lag(0)[(0, 0)], 1.5);
        assert_abs_diff_eq!(lags.lag(1)[(0, 0)], -1.0);
        assert!(covariance_lags(&col(&[1.0]), 1).is_err());
    }

    #[test]
    fn toeplitz_examples() {
        let l = CovLags::new(10, vec![DMatrix::identity(2, 2), DMatrix::zeros(2, 2)]).unwrap();
        assert_abs_diff_eq!(toeplitz_check(&l).min_eigenvalue, 1.0, epsilon = 1e-12);
        let l = CovLags::new(10, vec![DMatrix::from_element(1, 1, 1.0); 2]).unwrap();
        let rep = toeplitz_check(&l);
        assert_abs_diff_eq!(rep.min_eigenvalue, 0.0, epsilon = 1e-12);
        assert!(!rep.positive_definite || rep.min_eigenvalue <= 1e-12);
    }

    #[test]
    fn periodogram_round_trip() {
        let lags = CovLags::new(
            10,
            vec![
                DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
                DMatrix::from_row_slice(2, 2, &[0.2, -0.1, 0.4, 0.1]),
                DMatrix::from_row_slice(2, 2, &[0.05, 0.0, 0.1, -0.02]),
            ],
        )
        .unwrap();
        let f = truncated_periodogram(&lags, &FreqGrid::new(16).unwrap());
        assert!(f.hermitian_defect() < 1e-14);
        let back = f.fourier_coefficients(2).unwrap();
        for (a, b) in back.iter().zip(lags.lags()) {
            assert!((a - b).norm() < 1e-13);
        }
    }
}
