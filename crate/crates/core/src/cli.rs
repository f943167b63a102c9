//! Run configuration files and the file-level commands behind the `kgm`
//! binary.

use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use crate::data::{
    aggregate, covariance_lags, load_series, normalize_detrend, stack, CovLags, LoadOptions,
    NormalizeOptions, Series,
};
use crate::error::{KgmError, Result};
use crate::io::{self, ModelFile, ResultFile};
use crate::montecarlo::{generate_dataset, monte_carlo, MonteCarloConfig, MonteCarloReport, SimulationConfig};
use crate::pipeline::{edge_residual_spectrum, estimate, recompute_surrogate, EstimationConfig, Grouping, Method};
use crate::spectral::FreqGrid;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub path: Option<PathBuf>,
    pub header: bool,
    pub delimiter: char,
    pub columns: Option<Vec<usize>>,
}

impl Default for InputConfig {
    fn default() -> Self {
        InputConfig {
            path: None,
            header: false,
            delimiter: ',',
            columns: None,
        }
    }
}

impl InputConfig {
    pub fn load_options(&self) -> Result<LoadOptions> {
        if !self.delimiter.is_ascii() {
            return Err(KgmError::Config("delimiter must be a single ASCII character".into()));
        }
        Ok(LoadOptions {
            delimiter: self.delimiter as u8,
            header: self.header,
            columns: self.columns.clone(),
        })
    }

    pub fn load(&self) -> Result<Series> {
        let path = self
            .path
            .as_ref()
            .ok_or_else(|| KgmError::Config("no input series given".into()))?;
        load_series(path, &self.load_options()?)
    }
}

/// Aggregation window, normalization and stacking factor, applied in that
/// order.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub window: usize,
    pub normalize: NormalizeOptions,
    pub stack: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            window: 1,
            normalize: NormalizeOptions::none(),
            stack: 1,
        }
    }
}

impl PreprocessConfig {
    /// Hourly readings to 2-hour means, detrended and scaled, then 12
    /// consecutive samples per stacked vector (one day).
    pub fn pollution() -> Self {
        PreprocessConfig {
            window: 2,
            normalize: NormalizeOptions::default(),
            stack: 12,
        }
    }

    pub fn apply(&self, s: &Series) -> Result<Series> {
        let a = aggregate(s, self.window)?;
        if !s.len().is_multiple_of(self.window) {
            info!("aggregation dropped {} trailing rows", s.len() % self.window);
        }
        let b = normalize_detrend(&a, &self.normalize)?;
        let c = stack(&b, self.stack)?;
        if b.len() % self.stack != 0 {
            info!("stacking dropped {} trailing rows", b.len() % self.stack);
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloSection {
    pub runs: usize,
    pub methods: Vec<Method>,
    pub threads: usize,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        let d = MonteCarloConfig::default();
        MonteCarloSection {
            runs: d.runs,
            methods: d.methods,
            threads: d.threads,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeConfig {
    pub result: Option<PathBuf>,
    pub grouping: Grouping,
    pub pair: (usize, usize),
}

impl Default for EdgeConfig {
    fn default() -> Self {
        EdgeConfig {
            result: None,
            grouping: Grouping::Modules,
            pair: (0, 1),
        }
    }
}

/// Contents of a `--config` TOML file. Every section is optional and
/// unknown keys are rejected.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    /// AR order used by `estimate`.
    pub order: Option<usize>,
    /// Also write spectra.csv from `estimate`.
    pub spectra: bool,
    pub input: InputConfig,
    pub simulation: SimulationConfig,
    pub estimation: EstimationConfig,
    pub montecarlo: MonteCarloSection,
    pub preprocess: PreprocessConfig,
    pub edge: EdgeConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| KgmError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn montecarlo_config(&self) -> MonteCarloConfig {
        MonteCarloConfig {
            runs: self.montecarlo.runs,
            seed: self.seed,
            methods: self.montecarlo.methods.clone(),
            threads: self.montecarlo.threads,
            simulation: self.simulation.clone(),
            estimation: self.estimation.clone(),
        }
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Writes model.json and series.csv.
pub fn cmd_simulate(cfg: &RunConfig) -> Result<(PathBuf, PathBuf)> {
    let sim = &cfg.simulation;
    let data = generate_dataset(sim, cfg.seed)?;
    let dir = cfg.out_dir();
    ensure_dir(&dir)?;
    let model = ModelFile::new(
        cfg.seed,
        sim.m1,
        sim.m2,
        sim.model.grid_points,
        data.sigma,
        data.support,
        &data.ar,
    );
    let model_path = dir.join("model.json");
    let series_path = dir.join("series.csv");
    io::write_json(&model_path, &model)?;
    data.series.save_csv(&series_path)?;
    Ok((model_path, series_path))
}

/// Estimates from the configured input series and writes result.json (and
/// spectra.csv when requested).
pub fn cmd_estimate(cfg: &RunConfig) -> Result<PathBuf> {
    let series = cfg.input.load()?;
    let est = &cfg.estimation;
    if series.channels() != est.m1 * est.m2 {
        return Err(KgmError::Config(format!(
            "series has {} channels but m1·m2 = {}",
            series.channels(),
            est.m1 * est.m2
        )));
    }
    let n = cfg.order.unwrap_or(cfg.simulation.n);
    let lags = covariance_lags(&series, n)?;
    let result = estimate(&lags, est)?;
    info!(
        "{}: {} outer iterations, {} inner, defect {:.4}",
        result.method,
        result.outer_iterations(),
        result.total_inner_iterations(),
        result.support.defect
    );
    let dir = cfg.out_dir();
    ensure_dir(&dir)?;
    let path = dir.join("result.json");
    io::write_json(&path, &ResultFile::new(&result, &lags, est))?;
    if cfg.spectra {
        let grid = FreqGrid::new(est.grid_points)?;
        let phi = result.sigma.evaluate(&grid).invert()?;
        let mut w = csv::Writer::from_path(dir.join("spectra.csv")).map_err(csv_err)?;
        let mut header = vec!["theta".to_string()];
        header.extend((0..phi.dim()).map(|c| format!("phi_{c}")));
        w.write_record(&header).map_err(csv_err)?;
        for (theta, v) in grid.thetas().zip(phi.values()) {
            let mut row = vec![format!("{theta:e}")];
            row.extend((0..phi.dim()).map(|c| format!("{:e}", v[(c, c)].re)));
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
    }
    Ok(path)
}

pub fn cmd_montecarlo(cfg: &MonteCarloConfig, out: &Path) -> Result<MonteCarloReport> {
    let report = monte_carlo(cfg)?;
    report.save(out)?;
    Ok(report)
}

/// aggregate → normalize/detrend → stack, written as series.csv.
pub fn cmd_preprocess(cfg: &RunConfig) -> Result<(PathBuf, Series)> {
    let input = cfg.input.load()?;
    let out = cfg.preprocess.apply(&input)?;
    info!(
        "preprocessed {}×{} into {}×{}",
        input.len(),
        input.channels(),
        out.len(),
        out.channels()
    );
    let dir = cfg.out_dir();
    ensure_dir(&dir)?;
    let path = dir.join("series.csv");
    out.save_csv(&path)?;
    Ok((path, out))
}

/// Writes curve.csv with columns theta, norm.
pub fn cmd_edge_spectrum(cfg: &RunConfig, grid_points: Option<usize>) -> Result<PathBuf> {
    let path = cfg
        .edge
        .result
        .as_ref()
        .ok_or_else(|| KgmError::Config("no result file given".into()))?;
    let res = io::load_result(path)?;
    let grid = FreqGrid::new(grid_points.unwrap_or(res.config.grid_points))?;
    let curve = edge_residual_spectrum(&res.sigma, res.m1, res.m2, cfg.edge.grouping, cfg.edge.pair, &grid)?;
    let dir = cfg.out_dir();
    ensure_dir(&dir)?;
    let out = dir.join("curve.csv");
    let mut w = csv::Writer::from_path(&out).map_err(csv_err)?;
    w.write_record(["theta", "norm"]).map_err(csv_err)?;
    for (theta, v) in grid.thetas().zip(curve) {
        w.write_record([format!("{theta:e}"), format!("{v:e}")]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verification {
    pub stored: f64,
    pub recomputed: f64,
}

impl Verification {
    pub fn passes(&self, tol: f64) -> bool {
        (self.stored - self.recomputed).abs() <= tol * self.stored.abs().max(1.0)
    }
}

/// Recomputes ℓ̃ (or ℓ for unpenalized methods) from a stored result.
pub fn cmd_verify(path: &Path) -> Result<Verification> {
    let file = io::load_result(path)?;
    verify_result(&file)
}

pub fn verify_result(file: &ResultFile) -> Result<Verification> {
    let res = file.to_result();
    let lags: &CovLags = &file.lags;
    let recomputed = recompute_surrogate(&res, lags, &file.config)?;
    let stored = file.surrogate_trace.last().copied().unwrap_or(file.loglike);
    Ok(Verification { stored, recomputed })
}

fn csv_err(e: csv::Error) -> KgmError {
    KgmError::Io(std::io::Error::other(e.to_string()))
}

/// Writes a short human-readable summary of a Monte Carlo report.
pub fn print_summary<W: Write>(report: &MonteCarloReport, mut w: W) -> Result<()> {
    writeln!(w, "{:<6} {:>5} {:>5} {:>10} {:>10}", "method", "runs", "fail", "med e_SP", "med err")?;
    for (name, s) in report.summary() {
        let fmt = |q: Option<crate::montecarlo::Quartiles>| {
            q.map(|q| format!("{:.4}", q.median)).unwrap_or_else(|| "-".into())
        };
        writeln!(w, "{:<6} {:>5} {:>5} {:>10} {:>10}", name, s.runs, s.failures, fmt(s.esp), fmt(s.err))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("seed = 3\n").is_ok());
        assert!(RunConfig::from_toml("sed = 3\n").is_err());
        assert!(RunConfig::from_toml("[estimation]\nmethodd = \"K1\"\n").is_err());
        let c = RunConfig::from_toml("[estimation]\nmethod = \"K2\"\nm1 = 3\n[edge]\npair = [1, 2]\n").unwrap();
        assert_eq!(c.estimation.method, Method::K2);
        assert_eq!(c.estimation.m1, 3);
        assert_eq!(c.edge.pair, (1, 2));
    }

    #[test]
    fn identity_preprocess_passes_through() {
        let s = Series::new(nalgebra::DMatrix::from_fn(7, 2, |r, c| (r * 3 + c) as f64)).unwrap();
        let out = PreprocessConfig::default().apply(&s).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn pollution_preset_shapes() {
        let s = Series::new(nalgebra::DMatrix::from_fn(9336, 3, |r, c| {
            ((r as f64) * 0.1 + c as f64).sin() + 0.01 * r as f64
        }))
        .unwrap();
        let out = PreprocessConfig::pollution().apply(&s).unwrap();
        assert_eq!(out.channels(), 36);
        assert_eq!(out.len(), 389);
    }
}
