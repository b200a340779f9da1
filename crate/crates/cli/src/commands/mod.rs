//! Resolved command invocations. Each one carries every setting needed to
//! reproduce its outputs and is echoed verbatim into the run manifest.

pub mod evaluate;
pub mod generate;
pub mod project;
pub mod replay;
pub mod sweep;
pub mod train;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::manifest::{manifest_path, FileDigest, RunManifest};

pub use evaluate::EvaluateSettings;
pub use generate::GenerateSettings;
pub use project::ProjectSettings;
pub use sweep::SweepSettings;
pub use train::TrainSettings;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Invocation {
    Generate(GenerateSettings),
    Train(TrainSettings),
    Evaluate(EvaluateSettings),
    Sweep(SweepSettings),
    Project(ProjectSettings),
}

/// Files read and written by one command; outputs are names inside the
/// output directory.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Produced {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<String>,
}

impl Invocation {
    /// File stem shared by the outputs and the manifest.
    pub fn stem(&self) -> String {
        match self {
            Invocation::Generate(s) => Path::new(&s.output)
                .file_stem()
                .map_or_else(|| s.output.clone(), |x| x.to_string_lossy().into_owned()),
            Invocation::Train(s) => s.stem.clone(),
            Invocation::Evaluate(s) => s.stem.clone(),
            Invocation::Sweep(s) => s.stem.clone(),
            Invocation::Project(s) => s.stem.clone(),
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        match self {
            Invocation::Generate(s) => s.validate(),
            Invocation::Train(_) | Invocation::Evaluate(_) => Ok(()),
            Invocation::Sweep(s) => s.validate(),
            Invocation::Project(s) => s.validate(),
        }
    }

    pub fn execute(&self, dir: &Path) -> anyhow::Result<Produced> {
        match self {
            Invocation::Generate(s) => s.execute(dir),
            Invocation::Train(s) => s.execute(dir),
            Invocation::Evaluate(s) => s.execute(dir),
            Invocation::Sweep(s) => s.execute(dir),
            Invocation::Project(s) => s.execute(dir),
        }
    }
}

/// Execute and write `<stem>.manifest.json` into `dir`.
pub fn run_invocation(inv: &Invocation, dir: &Path) -> anyhow::Result<PathBuf> {
    let start = Instant::now();
    let produced = inv.execute(dir)?;
    let inputs = produced
        .inputs
        .iter()
        .map(|p| FileDigest::of(p))
        .collect::<anyhow::Result<Vec<_>>>()?;
    let outputs = produced
        .outputs
        .iter()
        .map(|name| {
            Ok(FileDigest {
                path: PathBuf::from(name),
                sha256: crate::manifest::sha256_file(&dir.join(name))?,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let manifest = RunManifest {
        tool: "rankfair".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        invocation: inv.clone(),
        inputs,
        outputs,
        elapsed_ms: start.elapsed().as_millis(),
    };
    let path = manifest_path(dir, &inv.stem());
    manifest.write(&path)?;
    Ok(path)
}

pub(crate) fn csv_writer(path: &Path) -> anyhow::Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}
