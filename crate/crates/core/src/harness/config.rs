use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithms::AlgorithmKind;
use crate::error::{Error, Result};
use crate::graph::Topology;
use crate::problem::{LassoSpec, REFERENCE_TOL};

pub const SCHEMA_VERSION: u32 = 1;

/// Edge probability used by the desk preset; `G(10, 0.1)` is almost never
/// connected.
pub const DESK_ER_RATIO: f64 = 0.4;
pub const DESK_SEED: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    Lasso(LassoSpec),
    /// Instance file written by `generate`.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TopologySpec {
    ErdosRenyi { ratio: f64 },
    Explicit(Topology),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlSpec {
    Constant { a: f64 },
    /// `a_t = c/√(t+1)`
    InverseSqrt { c: f64 },
    /// Largest constant step passing the admissibility test.
    MaxAdmissible,
    /// `a = 1/m`
    InverseDimension,
    /// `a = k/L`
    InverseSmoothness { k: f64 },
}

fn default_stride() -> usize {
    1
}

fn default_reference_tol() -> Option<f64> {
    Some(REFERENCE_TOL)
}

/// One simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub problem: ProblemSpec,
    pub topology: TopologySpec,
    pub algorithm: AlgorithmKind,
    pub control: ControlSpec,
    /// Number of rounds T.
    pub horizon: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    pub seed: u64,
    /// Output directory for `trace.csv`, `result.json` and `checks.json`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Run N-DDA even when the constant step fails the admissibility test.
    #[serde(default)]
    pub force: bool,
    /// Residual tolerance of the reference solver; `null` skips it.
    #[serde(default = "default_reference_tol")]
    pub reference_tol: Option<f64>,
    /// Fill the `round_seconds` trace column (breaks byte-identical traces).
    #[serde(default)]
    pub record_timing: bool,
}

impl RunConfig {
    /// n=10, m=100, pᵢ=10, 5-sparse signal, σ²=0.01, T=10⁴.
    pub fn desk(algorithm: AlgorithmKind) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            problem: ProblemSpec::Lasso(LassoSpec { n: 10, m: 100, p: 10, noise_sigma2: 0.01, sparsity: 5 }),
            topology: TopologySpec::ErdosRenyi { ratio: DESK_ER_RATIO },
            algorithm,
            control: default_control(algorithm),
            horizon: 10_000,
            stride: 1,
            seed: DESK_SEED,
            output: None,
            force: false,
            reference_tol: Some(REFERENCE_TOL),
            record_timing: false,
        }
    }

    /// n=50, m=10⁴, pᵢ=20, 50-sparse signal, σ²=0.01, ratio 0.1, T=10³;
    /// N-DDA uses a = 1/m, forced through the admissibility test.
    pub fn paper(algorithm: AlgorithmKind) -> Self {
        let control = match algorithm {
            AlgorithmKind::Ndda => ControlSpec::InverseDimension,
            other => default_control(other),
        };
        Self {
            schema_version: SCHEMA_VERSION,
            problem: ProblemSpec::Lasso(LassoSpec { n: 50, m: 10_000, p: 20, noise_sigma2: 0.01, sparsity: 50 }),
            topology: TopologySpec::ErdosRenyi { ratio: 0.1 },
            algorithm,
            control,
            horizon: 1_000,
            stride: 1,
            seed: DESK_SEED,
            output: None,
            force: algorithm == AlgorithmKind::Ndda,
            reference_tol: Some(REFERENCE_TOL),
            record_timing: false,
        }
    }

    /// The desk instance with N-DDA at `a = 1/L`, forced past the
    /// admissibility test. At full scale `a = 1/m` gives `aL ≈ 1.1`, so this
    /// keeps the comparison in the same regime.
    pub fn desk_compare(algorithm: AlgorithmKind) -> Self {
        let mut cfg = Self::desk(algorithm);
        if algorithm == AlgorithmKind::Ndda {
            cfg.control = ControlSpec::InverseSmoothness { k: 1.0 };
            cfg.force = true;
        }
        cfg
    }

    pub fn preset(name: &str, algorithm: AlgorithmKind) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk(algorithm)),
            "desk-compare" => Ok(Self::desk_compare(algorithm)),
            "paper" => Ok(Self::paper(algorithm)),
            other => Err(Error::Config(format!(
                "unknown preset '{other}' (expected desk, desk-compare or paper)"
            ))),
        }
    }

    /// Parses JSON, reporting schema violations with their field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("{path}: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon: must be at least 1".into()));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride: must be at least 1".into()));
        }
        match &self.problem {
            ProblemSpec::Lasso(spec) => spec.validate().map_err(|e| Error::Config(format!("problem.lasso: {e}")))?,
            ProblemSpec::File { path } => {
                if !path.is_file() {
                    return Err(Error::Config(format!("problem.file.path: {} does not exist", path.display())));
                }
            }
        }
        if let TopologySpec::ErdosRenyi { ratio } = self.topology {
            if !(ratio > 0.0 && ratio <= 1.0) {
                return Err(Error::Config(format!("topology.erdos_renyi.ratio: {ratio} not in (0, 1]")));
            }
        }
        match self.control {
            ControlSpec::Constant { a } if !(a.is_finite() && a > 0.0) => {
                return Err(Error::Config(format!("control.constant.a: must be positive, got {a}")));
            }
            ControlSpec::InverseSqrt { c } if !(c.is_finite() && c > 0.0) => {
                return Err(Error::Config(format!("control.inverse_sqrt.c: must be positive, got {c}")));
            }
            ControlSpec::InverseSmoothness { k } if !(k.is_finite() && k > 0.0) => {
                return Err(Error::Config(format!("control.inverse_smoothness.k: must be positive, got {k}")));
            }
            ControlSpec::InverseSqrt { .. } if self.algorithm == AlgorithmKind::Ndda => {
                return Err(Error::Config("control: ndda needs a constant control sequence".into()));
            }
            _ => {}
        }
        if let Some(tol) = self.reference_tol {
            if !(tol > 0.0) {
                return Err(Error::Config(format!("reference_tol: must be positive, got {tol}")));
            }
        }
        Ok(())
    }

    /// Same instance, topology and round grid.
    pub fn comparable_with(&self, other: &RunConfig) -> bool {
        self.problem == other.problem
            && self.topology == other.topology
            && self.seed == other.seed
            && self.reference_tol == other.reference_tol
            && self.horizon == other.horizon
            && self.stride == other.stride
    }
}

/// Settings used for each method in the LASSO comparison.
pub fn default_control(algorithm: AlgorithmKind) -> ControlSpec {
    match algorithm {
        AlgorithmKind::Ndda | AlgorithmKind::Cda => ControlSpec::MaxAdmissible,
        AlgorithmKind::Dda | AlgorithmKind::Dpg => ControlSpec::InverseSqrt { c: 1.0 },
    }
}
