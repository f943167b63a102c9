//! Seeded synthetic experiments: model draw, simulation and estimator
//! comparison over many runs.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use log::{info, warn};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{covariance_lags, Series};
use crate::error::{KgmError, Result};
use crate::groups::KroneckerSupport;
use crate::pipeline::{estimate, EstimationConfig, Method, OuterStatus};
use crate::spectral::{FreqGrid, PseudoPoly};
use crate::synth::{
    metric_err, metric_esp, random_kgm_model, simulate, spectral_factorize, ArModel, FactorOptions,
    ModelOptions,
};

pub const DEFAULT_BURNIN: usize = 1000;

/// Everything needed to draw one ground-truth model and a realization of it.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub m1: usize,
    pub m2: usize,
    pub n: usize,
    pub nobs: usize,
    pub eta1: f64,
    pub eta2: f64,
    pub burnin: usize,
    pub model: ModelOptions,
    pub factor: FactorOptions,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            m1: 3,
            m2: 3,
            n: 1,
            nobs: 1000,
            eta1: 0.3,
            eta2: 0.3,
            burnin: DEFAULT_BURNIN,
            model: ModelOptions::default(),
            factor: FactorOptions::default(),
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m1 == 0 || self.m2 == 0 {
            return Err(KgmError::Config("m1 and m2 must be positive".into()));
        }
        if self.nobs <= self.n + 1 {
            return Err(KgmError::Config("series length must exceed n + 1".into()));
        }
        for eta in [self.eta1, self.eta2] {
            if !(0.0..=1.0).contains(&eta) {
                return Err(KgmError::Config(format!("edge fraction {eta} outside [0, 1]")));
            }
        }
        if !(self.model.amplitude >= 0.0) || !(self.model.margin > 0.0) {
            return Err(KgmError::Config("model amplitude and margin must be positive".into()));
        }
        FreqGrid::new(self.model.grid_points)?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub sigma: PseudoPoly,
    pub support: KroneckerSupport,
    pub ar: ArModel,
    pub series: Series,
}

/// Draws a model with Kronecker support, factorizes it and simulates it,
/// all from a single seeded stream.
pub fn generate_dataset(cfg: &SimulationConfig, seed: u64) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (sigma, support) = random_kgm_model(cfg.m1, cfg.m2, cfg.n, cfg.eta1, cfg.eta2, &cfg.model, &mut rng)?;
    let ar = spectral_factorize(&sigma, &cfg.factor)?;
    let series = simulate(&ar, cfg.nobs, cfg.burnin, &mut rng)?;
    Ok(Dataset {
        sigma,
        support,
        ar,
        series,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub runs: usize,
    pub seed: u64,
    pub methods: Vec<Method>,
    /// Worker threads; 0 lets the pool decide.
    pub threads: usize,
    pub simulation: SimulationConfig,
    /// Shared estimator settings; method, m1 and m2 are set per run.
    pub estimation: EstimationConfig,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig {
            runs: 20,
            seed: 0,
            methods: vec![Method::K1, Method::K2, Method::S, Method::Burg],
            threads: 0,
            simulation: SimulationConfig::default(),
            estimation: EstimationConfig::default(),
        }
    }
}

impl MonteCarloConfig {
    /// Full-scale study: m1 = m2 = 6, n = 2, N = 1000, η = 0.3, 200 runs.
    pub fn full() -> Self {
        MonteCarloConfig {
            runs: 200,
            simulation: SimulationConfig {
                m1: 6,
                m2: 6,
                n: 2,
                nobs: 1000,
                eta1: 0.3,
                eta2: 0.3,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(KgmError::Config("runs must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(KgmError::Config("no methods selected".into()));
        }
        self.simulation.validate()
    }
}

/// Seed of run `run`: the first word of stream `run` of the master generator.
pub fn run_seed(master: u64, run: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(run as u64);
    rng.next_u64()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub method: Method,
    pub esp: Option<f64>,
    pub err: Option<f64>,
    pub defect: Option<f64>,
    pub outer_iterations: Option<usize>,
    pub inner_iterations: Option<usize>,
    pub converged: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub run: usize,
    pub method: Method,
    pub seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub runs: usize,
    pub failures: usize,
    pub esp: Option<Quartiles>,
    pub err: Option<Quartiles>,
    pub outer_iterations: Option<Quartiles>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub config: MonteCarloConfig,
    pub records: Vec<RunRecord>,
    #[serde(skip)]
    pub timings: Vec<TimingRecord>,
}

/// Linear-interpolation quantile of a sorted slice.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Quartiles of the finite values, or `None` if there are none.
pub fn quartiles(values: impl IntoIterator<Item = f64>) -> Option<Quartiles> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_unstable_by(f64::total_cmp);
    Some(Quartiles {
        q1: quantile(&v, 0.25),
        median: quantile(&v, 0.5),
        q3: quantile(&v, 0.75),
    })
}

impl MonteCarloReport {
    pub fn summary(&self) -> BTreeMap<String, MethodSummary> {
        self.config
            .methods
            .iter()
            .map(|&m| {
                let rows: Vec<&RunRecord> = self.records.iter().filter(|r| r.method == m).collect();
                let s = MethodSummary {
                    runs: rows.len(),
                    failures: rows.iter().filter(|r| r.error.is_some()).count(),
                    esp: quartiles(rows.iter().filter_map(|r| r.esp)),
                    err: quartiles(rows.iter().filter_map(|r| r.err)),
                    outer_iterations: quartiles(
                        rows.iter().filter_map(|r| r.outer_iterations.map(|v| v as f64)),
                    ),
                };
                (m.name().to_string(), s)
            })
            .collect()
    }

    pub fn median_esp(&self, m: Method) -> Option<f64> {
        quartiles(self.records.iter().filter(|r| r.method == m).filter_map(|r| r.esp)).map(|q| q.median)
    }

    pub fn median_err(&self, m: Method) -> Option<f64> {
        quartiles(self.records.iter().filter(|r| r.method == m).filter_map(|r| r.err)).map(|q| q.median)
    }

    pub fn write_runs_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.records {
            wr.serialize(r).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn write_timings_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.timings {
            wr.serialize(r).map_err(csv_err)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Writes runs.csv, timings.csv and summary.json into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        self.write_runs_csv(std::fs::File::create(dir.join("runs.csv"))?)?;
        self.write_timings_csv(std::fs::File::create(dir.join("timings.csv"))?)?;
        let summary = serde_json::json!({
            "version": crate::io::FORMAT_VERSION,
            "config": self.config,
            "methods": self.summary(),
        });
        let mut f = std::fs::File::create(dir.join("summary.json"))?;
        serde_json::to_writer_pretty(&mut f, &summary)?;
        writeln!(f)?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> KgmError {
    KgmError::Io(std::io::Error::other(e.to_string()))
}

fn one_run(cfg: &MonteCarloConfig, run: usize) -> (Vec<RunRecord>, Vec<TimingRecord>) {
    let seed = run_seed(cfg.seed, run);
    let blank = |method: Method, error: Option<String>| RunRecord {
        run,
        seed,
        method,
        esp: None,
        err: None,
        defect: None,
        outer_iterations: None,
        inner_iterations: None,
        converged: None,
        error,
    };
    let sim = &cfg.simulation;
    let prepared = generate_dataset(sim, seed)
        .and_then(|d| covariance_lags(&d.series, sim.n).map(|lags| (d, lags)));
    let (data, lags) = match prepared {
        Ok(v) => v,
        Err(e) => {
            warn!("run {run}: data generation failed: {e}");
            let msg = format!("data generation: {e}");
            return (
                cfg.methods.iter().map(|&m| blank(m, Some(msg.clone()))).collect(),
                Vec::new(),
            );
        }
    };
    let grid = FreqGrid::new(cfg.estimation.grid_points).unwrap_or_default();
    let mut records = Vec::with_capacity(cfg.methods.len());
    let mut timings = Vec::with_capacity(cfg.methods.len());
    for &method in &cfg.methods {
        let mut ec = cfg.estimation.clone();
        ec.method = method;
        ec.m1 = sim.m1;
        ec.m2 = sim.m2;
        if method == Method::Hard {
            ec.known_support = Some(data.support.clone());
        }
        let start = Instant::now();
        let outcome = estimate(&lags, &ec).and_then(|res| {
            let esp = metric_esp(&data.support, &res.support.support)?;
            let err = metric_err(&res.sigma, &data.sigma, &grid)?;
            Ok((res, esp, err))
        });
        timings.push(TimingRecord {
            run,
            method,
            seconds: start.elapsed().as_secs_f64(),
        });
        records.push(match outcome {
            Ok((res, esp, err)) => RunRecord {
                esp: Some(esp),
                err: Some(err),
                defect: Some(res.support.defect),
                outer_iterations: Some(res.outer_iterations()),
                inner_iterations: Some(res.total_inner_iterations()),
                converged: Some(res.status == OuterStatus::Converged),
                ..blank(method, None)
            },
            Err(e) => {
                warn!("run {run}, {method}: {e}");
                blank(method, Some(e.to_string()))
            }
        });
    }
    (records, timings)
}

/// Runs the study in parallel. Records come back ordered by run then method
/// regardless of scheduling.
pub fn monte_carlo(cfg: &MonteCarloConfig) -> Result<MonteCarloReport> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| KgmError::Config(format!("thread pool: {e}")))?;
    info!(
        "monte carlo: {} runs, methods {:?}, {} threads",
        cfg.runs,
        cfg.methods,
        pool.current_num_threads()
    );
    let per_run: Vec<(Vec<RunRecord>, Vec<TimingRecord>)> =
        pool.install(|| (0..cfg.runs).into_par_iter().map(|r| one_run(cfg, r)).collect());
    let mut records = Vec::new();
    let mut timings = Vec::new();
    for (r, t) in per_run {
        records.extend(r);
        timings.extend(t);
    }
    Ok(MonteCarloReport {
        config: cfg.clone(),
        records,
        timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quartile_interpolation() {
        let q = quartiles([4.0, 1.0, 3.0, 2.0, f64::NAN]).unwrap();
        assert_eq!(q.median, 2.5);
        assert_eq!(q.q1, 1.75);
        assert_eq!(q.q3, 3.25);
        assert!(quartiles(std::iter::empty()).is_none());
    }

    #[test]
    fn run_seeds_differ_and_repeat() {
        assert_eq!(run_seed(7, 3), run_seed(7, 3));
        assert_ne!(run_seed(7, 3), run_seed(7, 4));
        assert_ne!(run_seed(7, 3), run_seed(8, 3));
    }

    #[test]
    fn dataset_is_reproducible() {
        let cfg = SimulationConfig {
            m1: 2,
            m2: 2,
            nobs: 200,
            ..Default::default()
        };
        let a = generate_dataset(&cfg, 42).unwrap();
        let b = generate_dataset(&cfg, 42).unwrap();
        assert_eq!(a.series.data(), b.series.data());
        assert_eq!(a.sigma, b.sigma);
    }

    #[test]
    fn failed_generation_is_recorded() {
        let mut cfg = MonteCarloConfig {
            runs: 2,
            methods: vec![Method::Burg],
            ..Default::default()
        };
        cfg.simulation.factor.max_depth = 1;
        cfg.simulation.n = 1;
        cfg.simulation.m1 = 2;
        cfg.simulation.m2 = 2;
        cfg.simulation.nobs = 100;
        let rep = monte_carlo(&cfg).unwrap();
        assert_eq!(rep.records.len(), 2);
        assert!(rep.records.iter().all(|r| r.error.is_some() && r.esp.is_none()));
        assert_eq!(rep.summary()["BURG"].failures, 2);
    }
}
