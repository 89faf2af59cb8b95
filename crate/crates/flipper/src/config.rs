//! The single JSON config file. Any subset of fields may be given; missing
//! fields keep their defaults, nested objects are merged key by key.

use std::path::Path;

use flipper_core::pipeline::{hard_stair_world, test_worlds, BenchCase, PipelineConfig, WorldEntry};
use flipper_core::planner::PlanConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::{io, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub cases: Vec<BenchCase>,
    pub worlds: Vec<WorldEntry>,
    pub runs: usize,
    pub hard_world: WorldEntry,
    /// Fine-resolution unguided case run on `hard_world`.
    pub hard_case: PlanConfig,
    /// Budget on the hard world as a multiple of the mean expansions of the
    /// first unguided case.
    pub hard_budget_factor: f64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        let unguided = PlanConfig {
            actions: 3,
            dt: 1.0,
            guide_bias: 0.0,
            max_expansions: 5000,
            ..PlanConfig::default()
        };
        let guided = PlanConfig { guide_bias: 0.8, ..unguided };
        Self {
            cases: vec![
                BenchCase { label: 1, guided: false, plan: unguided },
                BenchCase { label: 2, guided: true, plan: guided },
                BenchCase { label: 3, guided: true, plan: PlanConfig { actions: 7, ..guided } },
                BenchCase { label: 4, guided: true, plan: PlanConfig { actions: 7, dt: 0.2, ..guided } },
            ],
            worlds: test_worlds(),
            runs: 10,
            hard_world: hard_stair_world(),
            hard_case: PlanConfig { dt: 0.2, ..unguided },
            hard_budget_factor: 7.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CliConfig {
    /// Master seed; copied into the pipeline config.
    pub seed: u64,
    /// Worlds for `gen-worlds` and `plan`.
    pub worlds: Vec<WorldEntry>,
    pub plan: PlanConfig,
    pub plan_runs: usize,
    pub pipeline: PipelineConfig,
    pub bench: BenchConfig,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            worlds: test_worlds(),
            plan: PlanConfig {
                guide_bias: 0.0,
                ..PlanConfig::default()
            },
            plan_runs: 1,
            pipeline: PipelineConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

impl CliConfig {
    /// Parses `text` as overrides on top of the defaults.
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let over: Value = io::from_json(text, path)?;
        if !over.is_object() {
            return Err(Error::Config(format!("{}: top level must be an object", path.display())));
        }
        let mut base = serde_json::to_value(Self::default()).expect("default config serializes");
        merge(&mut base, over);
        let cfg: Self = serde_json::from_value(base).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Ok(cfg.resolved())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::Missing(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        Self::from_json(&text, path)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.resolved()
    }

    fn resolved(mut self) -> Self {
        self.pipeline.seed = self.seed;
        self
    }
}
