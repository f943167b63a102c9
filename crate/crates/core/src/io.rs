//! Versioned JSON files for ground-truth models and estimation results.

use std::path::Path;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::data::CovLags;
use crate::error::{KgmError, Result};
use crate::groups::KroneckerSupport;
use crate::linalg::{matrix_to_rows, rows_to_square};
use crate::objective::{HyperParams, SparseWeights};
use crate::pipeline::{EstimationConfig, EstimationResult, Method, OuterStatus, SupportEstimate};
use crate::spectral::PseudoPoly;
use crate::synth::ArModel;

pub const FORMAT_VERSION: u32 = 1;

fn check_version(found: u32) -> Result<()> {
    if found != FORMAT_VERSION {
        return Err(KgmError::Config(format!(
            "file format version {found} is not supported (expected {FORMAT_VERSION})"
        )));
    }
    Ok(())
}

/// Ground truth written by the simulate command.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub version: u32,
    pub seed: u64,
    pub m1: usize,
    pub m2: usize,
    pub n: usize,
    pub grid_points: usize,
    pub sigma: PseudoPoly,
    pub support: KroneckerSupport,
    /// A_0..A_n of the minimum-phase factor, row-major.
    pub ar: Vec<Vec<Vec<f64>>>,
}

impl ModelFile {
    pub fn new(seed: u64, m1: usize, m2: usize, grid_points: usize, sigma: PseudoPoly, support: KroneckerSupport, ar: &ArModel) -> Self {
        ModelFile {
            version: FORMAT_VERSION,
            seed,
            m1,
            m2,
            n: sigma.order(),
            grid_points,
            sigma,
            support,
            ar: ar.coeffs().iter().map(matrix_to_rows).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_version(self.version)?;
        if self.m1 * self.m2 != self.sigma.dim() || self.n != self.sigma.order() {
            return Err(KgmError::Config("model dimensions disagree with Σ".into()));
        }
        KroneckerSupport::new(self.support.e1.clone(), self.support.e2.clone())?;
        if self.support.m1() != self.m1 || self.support.m2() != self.m2 {
            return Err(KgmError::Config("support dimensions disagree with m1, m2".into()));
        }
        self.ar_model()?;
        Ok(())
    }

    pub fn ar_model(&self) -> Result<ArModel> {
        let coeffs = self
            .ar
            .iter()
            .map(|rows| rows_to_square(rows).map_err(KgmError::Config))
            .collect::<Result<Vec<_>>>()?;
        ArModel::new(coeffs)
    }
}

/// Everything needed to inspect an estimate and to re-evaluate ℓ̃ offline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultFile {
    pub version: u32,
    pub method: Method,
    pub m1: usize,
    pub m2: usize,
    pub n: usize,
    pub config: EstimationConfig,
    pub lags: CovLags,
    pub sigma: PseudoPoly,
    pub hyper: Option<HyperParams>,
    pub omega: Option<SparseWeights>,
    pub raw_support: Vec<bool>,
    pub support: KroneckerSupport,
    pub defect: f64,
    pub surrogate_trace: Vec<f64>,
    pub inner_iterations: Vec<usize>,
    pub status: OuterStatus,
    pub init_converged: bool,
    pub loglike: f64,
}

impl ResultFile {
    pub fn new(result: &EstimationResult, lags: &CovLags, config: &EstimationConfig) -> Self {
        ResultFile {
            version: FORMAT_VERSION,
            method: result.method,
            m1: result.m1,
            m2: result.m2,
            n: result.sigma.order(),
            config: config.clone(),
            lags: lags.clone(),
            sigma: result.sigma.clone(),
            hyper: result.hyper.clone(),
            omega: result.omega.clone(),
            raw_support: result.support.raw.clone(),
            support: result.support.support.clone(),
            defect: result.support.defect,
            surrogate_trace: result.surrogate_trace.clone(),
            inner_iterations: result.inner_iterations.clone(),
            status: result.status,
            init_converged: result.init_converged,
            loglike: result.loglike,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_version(self.version)?;
        let m = self.m1 * self.m2;
        if m != self.sigma.dim() || m != self.lags.dim() || self.n != self.sigma.order() || self.n != self.lags.order() {
            return Err(KgmError::Config("result dimensions are inconsistent".into()));
        }
        KroneckerSupport::new(self.support.e1.clone(), self.support.e2.clone())?;
        Ok(())
    }

    pub fn to_result(&self) -> EstimationResult {
        EstimationResult {
            method: self.method,
            m1: self.m1,
            m2: self.m2,
            sigma: self.sigma.clone(),
            hyper: self.hyper.clone(),
            omega: self.omega.clone(),
            support: SupportEstimate {
                raw: self.raw_support.clone(),
                support: self.support.clone(),
                defect: self.defect,
            },
            surrogate_trace: self.surrogate_trace.clone(),
            inner_iterations: self.inner_iterations.clone(),
            status: self.status,
            init_converged: self.init_converged,
            loglike: self.loglike,
            elapsed: Duration::ZERO,
        }
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json_string(value)?)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_model(path: &Path) -> Result<ModelFile> {
    let m: ModelFile = read_json(path)?;
    m.validate()?;
    Ok(m)
}

pub fn load_result(path: &Path) -> Result<ResultFile> {
    let r: ResultFile = read_json(path)?;
    r.validate()?;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::{generate_dataset, SimulationConfig};

    #[test]
    fn model_round_trip() {
        let cfg = SimulationConfig {
            m1: 2,
            m2: 2,
            nobs: 100,
            ..Default::default()
        };
        let d = generate_dataset(&cfg, 9).unwrap();
        let mf = ModelFile::new(9, 2, 2, 256, d.sigma.clone(), d.support.clone(), &d.ar);
        let text = to_json_string(&mf).unwrap();
        let back: ModelFile = serde_json::from_str(&text).unwrap();
        back.validate().unwrap();
        assert_eq!(back.sigma, d.sigma);
        assert_eq!(back.ar_model().unwrap(), d.ar);
        assert_eq!(to_json_string(&back).unwrap(), text);
    }

    #[test]
    fn version_mismatch_is_rejected() {
        assert!(check_version(FORMAT_VERSION + 1).is_err());
    }
}
