use std::path::{Path, PathBuf};

use rankfair_core::{
    load_csv, run, standardize, CsvSchema, RunOutput, SolverConfig, StandardizationParams,
    TaskDataset,
};
use serde::{Deserialize, Serialize};

use super::{csv_writer, Produced};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub data: PathBuf,
    pub schema: CsvSchema,
    pub solver: SolverConfig,
    pub stem: String,
}

/// A finished run with its predictions mapped back to target units.
#[derive(Debug, Clone)]
pub struct Trained {
    pub data: TaskDataset,
    pub params: StandardizationParams,
    pub output: RunOutput,
    /// `XW` in target units.
    pub raw: Vec<f64>,
    /// `M_S` in target units; demoted entries sit at the target mean.
    pub projected: Vec<f64>,
}

/// Standardize, run the solver and invert the predictions.
pub fn fit(data: TaskDataset, solver: &SolverConfig) -> rankfair_core::Result<Trained> {
    let (standardized, params) = standardize(&data);
    let output = run(&standardized, solver)?;
    let raw = params.invert_targets(&output.raw);
    let projected = params.invert_targets(&output.m_s);
    Ok(Trained {
        data,
        params,
        output,
        raw,
        projected,
    })
}

impl TrainSettings {
    pub fn fit(&self) -> anyhow::Result<Trained> {
        let data = load_csv(&self.data, &self.schema)?;
        Ok(fit(data, &self.solver)?)
    }

    pub(crate) fn execute(&self, dir: &Path) -> anyhow::Result<Produced> {
        let t = self.fit()?;
        let names = [
            format!("{}.predictions.csv", self.stem),
            format!("{}.weights.csv", self.stem),
            format!("{}.trace.csv", self.stem),
        ];
        write_predictions(&dir.join(&names[0]), &t)?;
        write_weights(&dir.join(&names[1]), &t)?;
        write_trace(&dir.join(&names[2]), &t)?;

        let spec = &t.output.spec;
        println!(
            "trained {} tasks x {} rows; band [{}, {}]",
            t.data.k(),
            t.data.h(),
            spec.c,
            spec.upper()
        );
        if let Some(last) = t.output.trace.last() {
            println!(
                "iteration {}: objective {:.6}, r_A {}, AUC {:.4}, feasible {}",
                last.iteration, last.objective, last.achieved_r_a, last.auc, last.feasible
            );
        }
        Ok(Produced {
            inputs: vec![self.data.clone()],
            outputs: names.to_vec(),
        })
    }
}

fn write_predictions(path: &Path, t: &Trained) -> anyhow::Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record([
        "index",
        "task_id",
        "protected",
        "target",
        "raw",
        "projected",
        "demoted",
    ])?;
    let targets = t.data.targets_flat();
    let h = t.data.h();
    for i in 0..t.data.len() {
        let g = t.data.protected()[i];
        w.write_record([
            i.to_string(),
            t.data.task_ids()[i / h].clone(),
            t.data.group_label(g).to_string(),
            targets[i].to_string(),
            t.raw[i].to_string(),
            t.projected[i].to_string(),
            u8::from(t.output.demoted[i]).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_weights(path: &Path, t: &Trained) -> anyhow::Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["task_id".to_string()];
    header.extend(t.data.feature_names().iter().cloned());
    w.write_record(&header)?;
    for (j, id) in t.data.task_ids().iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(t.output.w.row(j).iter().map(|x| x.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn write_trace(path: &Path, t: &Trained) -> anyhow::Result<()> {
    let mut w = csv_writer(path)?;
    for r in &t.output.trace.records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
