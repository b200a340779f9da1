use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::Context;
use rankfair_core::{generate_synthetic, SyntheticSpec};
use serde::{Deserialize, Serialize};

use super::Produced;
use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateSettings {
    pub alpha: f64,
    pub k: usize,
    pub h: usize,
    pub n: usize,
    pub sd: f64,
    pub mean_gap: Option<f64>,
    pub seed: u64,
    pub output: String,
}

impl GenerateSettings {
    pub fn spec(&self) -> SyntheticSpec {
        SyntheticSpec {
            alpha: self.alpha,
            k: self.k,
            h: self.h,
            n: self.n,
            mean_gap: self.mean_gap,
            sd: self.sd,
            seed: self.seed,
        }
    }

    pub(crate) fn validate(&self) -> anyhow::Result<()> {
        if self.k == 0 || self.h == 0 || self.n == 0 {
            return Err(UsageError("--k, --h and --n must be positive".into()).into());
        }
        Ok(())
    }

    pub(crate) fn execute(&self, dir: &Path) -> anyhow::Result<Produced> {
        let data = generate_synthetic(&self.spec())?;
        let path = dir.join(&self.output);
        let file =
            File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        data.write_csv(BufWriter::new(file))?;
        println!(
            "wrote {} rows ({} tasks x {}) to {}",
            data.len(),
            data.k(),
            data.h(),
            path.display()
        );
        Ok(Produced {
            inputs: Vec::new(),
            outputs: vec![self.output.clone()],
        })
    }
}
