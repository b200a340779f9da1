//! Flat key/value configuration files.
//!
//! One `key = value` pair per line, `#` starts a comment, strings are
//! double-quoted and lists use brackets (`epsilons = [0.01, 0.05]`). This is
//! TOML without tables. Unknown keys are rejected. Command-line flags take
//! precedence over file values, which take precedence over built-in defaults.
//!
//! Keys: `rho`, `beta`, `gamma`, `theta`, `epsilon`, `tau`, `outer_iters`,
//! `inner_iters`, `seed`, `fairness`, `kappa_mode` (`"derived"` or
//! `"printed"`), `lower_bound`, `task_column`, `protected_column`,
//! `target_column`, `a_label`, `betas`, `epsilons`, `folds`, `repeats`.

use std::path::Path;

use anyhow::Context;
use rankfair_core::{CsvSchema, KappaMode, SolverConfig};
use serde::{Deserialize, Serialize};

use crate::UsageError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub rho: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub theta: Option<f64>,
    pub epsilon: Option<f64>,
    pub tau: Option<u64>,
    pub outer_iters: Option<usize>,
    pub inner_iters: Option<usize>,
    pub seed: Option<u64>,
    pub fairness: Option<bool>,
    pub kappa_mode: Option<KappaMode>,
    pub lower_bound: Option<f64>,
    pub task_column: Option<String>,
    pub protected_column: Option<String>,
    pub target_column: Option<String>,
    pub a_label: Option<String>,
    pub betas: Option<Vec<f64>>,
    pub epsilons: Option<Vec<f64>>,
    pub folds: Option<usize>,
    pub repeats: Option<usize>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        toml::from_str(text).map_err(|e| UsageError(format!("bad config: {e}")).into())
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn load_optional(path: Option<&Path>) -> anyhow::Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    /// Overlay onto `base`; `None` fields keep the base value.
    pub fn solver(&self, mut base: SolverConfig) -> SolverConfig {
        macro_rules! take {
            ($($field:ident),*) => {
                $(if let Some(v) = self.$field { base.$field = v; })*
            };
        }
        take!(
            rho,
            beta,
            gamma,
            theta,
            epsilon,
            tau,
            outer_iters,
            inner_iters,
            seed,
            kappa_mode
        );
        if let Some(f) = self.fairness {
            base.fairness_enabled = f;
        }
        if self.lower_bound.is_some() {
            base.lower_bound = self.lower_bound;
        }
        base
    }

    pub fn schema(&self, mut base: CsvSchema) -> CsvSchema {
        if let Some(v) = &self.task_column {
            base.task_column = v.clone();
        }
        if let Some(v) = &self.protected_column {
            base.protected_column = v.clone();
        }
        if let Some(v) = &self.target_column {
            base.target_column = v.clone();
        }
        if self.a_label.is_some() {
            base.a_label = self.a_label.clone();
        }
        base
    }
}
