//! Declarative run configuration (TOML).
//!
//! Every settings struct provides defaults, so a config file only has to
//! name the problem kind and the optimizer variant. `blocks = 0` on a
//! blockwise compressor means "auto": min(d, 512) is filled in when the
//! problem dimension is known.

use crate::compressors::{CompressorKind, CompressorSpec};
use crate::optimizers::OptimizerConfig;
use crate::problems::{Logistic, LogisticConfig, Mlp, MlpConfig, Problem, Quadratic, QuadraticConfig};
use crate::syncfabric::{FabricConfig, ReductionOrder};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ProblemConfig {
    Quadratic(QuadraticConfig),
    Logistic(LogisticConfig),
    Mlp(MlpConfig),
}

impl ProblemConfig {
    pub fn workers(&self) -> usize {
        match self {
            ProblemConfig::Quadratic(c) => c.n,
            ProblemConfig::Logistic(c) => c.n,
            ProblemConfig::Mlp(c) => c.n,
        }
    }

    pub fn build(&self) -> Result<Problem> {
        Ok(match self {
            ProblemConfig::Quadratic(c) => Problem::Quadratic(Quadratic::new(c)?),
            ProblemConfig::Logistic(c) => Problem::Logistic(Logistic::new(c)?),
            ProblemConfig::Mlp(c) => Problem::Mlp(Mlp::new(c)?),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FabricSettings {
    pub reduction_order: ReductionOrder,
    pub threads: usize,
}

impl Default for FabricSettings {
    fn default() -> Self {
        FabricSettings { reduction_order: ReductionOrder::SequentialById, threads: 1 }
    }
}

impl FabricSettings {
    pub fn to_config(self, n: usize) -> FabricConfig {
        FabricConfig { n, reduction_order: self.reduction_order, threads: self.threads }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSettings {
    /// Total rounds T.
    pub rounds: u64,
    /// One independent run per seed.
    pub seeds: Vec<u64>,
    /// Metrics every `cadence` rounds; the last round is always reported.
    pub cadence: u64,
    /// Output directory for CSV/JSON metric files.
    pub out: PathBuf,
    /// Series label; defaults to the optimizer variant name.
    pub label: Option<String>,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            rounds: 2000,
            seeds: vec![1, 2, 3, 4, 5],
            cadence: 10,
            out: PathBuf::from("out"),
            label: None,
        }
    }
}

/// A complete experiment description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub fabric: FabricSettings,
    #[serde(default)]
    pub run: RunSettings,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let mut cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.fill_auto_blocks();
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn load(path: &std::path::Path) -> Result<RunConfig> {
        RunConfig::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn label(&self) -> String {
        self.run.label.clone().unwrap_or_else(|| self.optimizer.variant.name().to_string())
    }

    fn dim_hint(&self) -> usize {
        match &self.problem {
            ProblemConfig::Quadratic(c) => c.d,
            ProblemConfig::Logistic(c) => c.d,
            ProblemConfig::Mlp(c) => {
                c.hidden * c.input_dim + c.hidden + c.hidden + 1
            }
        }
    }

    /// Resolves `blocks = 0` to the auto default min(d, 512).
    pub fn fill_auto_blocks(&mut self) {
        let d = self.dim_hint();
        let fill = |s: &mut CompressorSpec| {
            if s.kind == CompressorKind::Grbs && s.blocks == 0 {
                s.blocks = d.min(512);
            }
        };
        fill(&mut self.optimizer.c1);
        fill(&mut self.optimizer.c2);
    }

    /// All constraint violations across sections.
    pub fn validate(&self) -> Result<()> {
        let mut violations = Vec::new();
        let d = self.dim_hint();
        if let Err(Error::Config(v)) = self.optimizer.validate(d) {
            violations.extend(v);
        }
        violations.extend(self.fabric.to_config(self.problem.workers()).violations());
        if self.run.rounds == 0 {
            violations.push("run: rounds must be >= 1".into());
        }
        if self.run.seeds.is_empty() {
            violations.push("run: seeds must be non-empty".into());
        }
        if self.run.cadence == 0 {
            violations.push("run: cadence must be >= 1".into());
        }
        // the problem section validates on build
        if let Err(Error::Config(v)) = self.problem.build().map(|_| ()) {
            violations.extend(v);
        }
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(violations))
        }
    }
}
