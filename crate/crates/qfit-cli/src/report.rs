use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use qfit::numerics::ComplexMatrix;
use qfit::optimizer::{InstantiationResult, OptimizerConfig, Termination};
use qfit::resynth::ResynthReport;
use qfit::sim::OpCounter;

/// Wall-clock fields live in this dedicated sub-object so reports stay
/// byte-comparable after stripping it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub wall_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstantiationSummary {
    pub termination: Termination,
    pub c_train: f64,
    pub c_val: f64,
    pub iterations: u64,
    pub restarts: u32,
    pub final_m: usize,
    pub states_drawn: usize,
    pub start_index: usize,
    pub counters: OpCounter,
}

impl From<&InstantiationResult> for InstantiationSummary {
    fn from(r: &InstantiationResult) -> Self {
        Self {
            termination: r.termination,
            c_train: r.c_train,
            c_val: r.c_val,
            iterations: r.iterations,
            restarts: r.restarts,
            final_m: r.final_m,
            states_drawn: r.states_drawn,
            start_index: r.start_index,
            counters: r.counters,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: OptimizerConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instantiation: Option<InstantiationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resynth: Option<ResynthReport>,
    pub timing: Timing,
}

impl RunReport {
    pub fn new(command: &str, config: &OptimizerConfig, wall_s: f64) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: config.seed,
            config: config.clone(),
            instantiation: None,
            resynth: None,
            timing: Timing { wall_s },
        }
    }
}

/// On-disk unitary format: row-major real and imaginary parts, `4^n` doubles
/// each.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnitaryFile {
    pub n: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl UnitaryFile {
    pub fn from_matrix(n: usize, m: &ComplexMatrix) -> Self {
        Self {
            n,
            re: m.entries().iter().map(|z| z.re).collect(),
            im: m.entries().iter().map(|z| z.im).collect(),
        }
    }

    pub fn to_matrix(&self) -> Result<ComplexMatrix> {
        let dim = 1usize
            .checked_shl(self.n as u32)
            .context("qubit count overflows")?;
        let want = dim * dim;
        if self.re.len() != want || self.im.len() != want {
            bail!(
                "unitary file for n={} needs {want} re/im entries, got {}/{}",
                self.n,
                self.re.len(),
                self.im.len()
            );
        }
        let entries = self
            .re
            .iter()
            .zip(&self.im)
            .map(|(&re, &im)| {
                if !(re.is_finite() && im.is_finite()) {
                    bail!("unitary file has non-finite entries");
                }
                Ok(num_complex_from(re, im))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ComplexMatrix::new(dim, dim, entries)?)
    }
}

fn num_complex_from(re: f64, im: f64) -> qfit::num_complex::Complex64 {
    qfit::num_complex::Complex64::new(re, im)
}

pub fn load_unitary(path: &Path) -> Result<ComplexMatrix> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading unitary file {}", path.display()))?;
    let file: UnitaryFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing unitary file {}", path.display()))?;
    file.to_matrix()
}

pub fn save_unitary(path: &Path, n: usize, m: &ComplexMatrix) -> Result<()> {
    let file = UnitaryFile::from_matrix(n, m);
    std::fs::write(path, serde_json::to_string(&file)?)
        .with_context(|| format!("writing unitary file {}", path.display()))?;
    Ok(())
}
