use std::path::{Path, PathBuf};

use anyhow::Context;

use super::run_invocation;
use crate::manifest::{sha256_file, RunManifest};
use crate::EXIT_FAILURE;

/// Hash comparison between a manifest and its replay.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub dir: PathBuf,
    pub matched: Vec<PathBuf>,
    pub mismatched: Vec<PathBuf>,
}

impl ReplayReport {
    pub fn identical(&self) -> bool {
        self.mismatched.is_empty()
    }
}

/// Re-run the manifest's invocation into `out_dir` (default: `replay/` next
/// to the manifest) and compare every output hash.
pub fn replay_into(manifest_path: &Path, out_dir: Option<&Path>) -> anyhow::Result<ReplayReport> {
    let manifest = RunManifest::load(manifest_path)?;
    for input in &manifest.inputs {
        let now = sha256_file(&input.path)?;
        anyhow::ensure!(
            now == input.sha256,
            "input {} changed since the manifest was written",
            input.path.display()
        );
    }
    let original_dir = match manifest_path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let dir = match out_dir {
        Some(d) => d.to_owned(),
        None => original_dir.join("replay"),
    };
    if std::path::absolute(&dir)? == std::path::absolute(original_dir)? {
        anyhow::bail!(crate::UsageError(
            "replay output directory must differ from the manifest's".into()
        ));
    }
    std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    run_invocation(&manifest.invocation, &dir)?;

    let mut report = ReplayReport {
        dir: dir.clone(),
        matched: Vec::new(),
        mismatched: Vec::new(),
    };
    for out in &manifest.outputs {
        let now = sha256_file(&dir.join(&out.path))?;
        if now == out.sha256 {
            report.matched.push(out.path.clone());
        } else {
            report.mismatched.push(out.path.clone());
        }
    }
    Ok(report)
}

pub fn replay(manifest_path: &Path, out_dir: Option<&Path>) -> anyhow::Result<i32> {
    let report = replay_into(manifest_path, out_dir)?;
    for p in &report.matched {
        println!("identical  {}", p.display());
    }
    for p in &report.mismatched {
        println!("DIFFERS    {}", p.display());
    }
    Ok(if report.identical() { 0 } else { EXIT_FAILURE })
}
