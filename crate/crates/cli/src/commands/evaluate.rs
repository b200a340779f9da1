use std::path::{Path, PathBuf};

use anyhow::Context;
use rankfair_core::{load_csv, CsvSchema, Error, MetricsReport, TaskDataset};
use serde::{Deserialize, Serialize};

use super::{csv_writer, write_json, Produced};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateSettings {
    pub predictions: PathBuf,
    pub data: PathBuf,
    pub schema: CsvSchema,
    pub stem: String,
}

/// Prediction columns read back from a predictions CSV.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Predictions {
    pub raw: Vec<f64>,
    pub projected: Option<Vec<f64>>,
    pub demoted: Option<Vec<bool>>,
}

pub fn read_predictions(path: &Path) -> anyhow::Result<Predictions> {
    let mut r = csv::Reader::from_path(path)
        .with_context(|| format!("cannot read predictions {}", path.display()))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let raw_col = col("raw").ok_or_else(|| Error::Parse {
        path: path.to_owned(),
        row: 0,
        column: "raw".into(),
        reason: "missing column".into(),
    })?;
    let proj_col = col("projected");
    let dem_col = col("demoted");
    let mut out = Predictions {
        projected: proj_col.map(|_| Vec::new()),
        demoted: dem_col.map(|_| Vec::new()),
        ..Default::default()
    };
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let number = |c: usize, name: &str| -> anyhow::Result<f64> {
            rec.get(c)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| {
                    Error::Parse {
                        path: path.to_owned(),
                        row: row + 1,
                        column: name.into(),
                        reason: format!("not a finite number: {:?}", rec.get(c).unwrap_or("")),
                    }
                    .into()
                })
        };
        out.raw.push(number(raw_col, "raw")?);
        if let (Some(c), Some(v)) = (proj_col, out.projected.as_mut()) {
            v.push(number(c, "projected")?);
        }
        if let (Some(c), Some(v)) = (dem_col, out.demoted.as_mut()) {
            v.push(number(c, "demoted")? != 0.0);
        }
    }
    Ok(out)
}

/// Rows "data" (targets against themselves), "raw" and, when present,
/// "projected" (scored under the demotion ranking).
pub fn evaluate(
    data: &TaskDataset,
    preds: &Predictions,
) -> rankfair_core::Result<Vec<MetricsReport>> {
    if preds.raw.len() != data.len() {
        return Err(Error::LengthMismatch {
            expected: data.len(),
            actual: preds.raw.len(),
        });
    }
    let y = data.targets_flat();
    let p = data.protected();
    let mut rows = vec![
        MetricsReport::compute("data", &y, &y, p, None)?,
        MetricsReport::compute("raw", &y, &preds.raw, p, None)?,
    ];
    if let Some(projected) = &preds.projected {
        let mask = preds
            .demoted
            .clone()
            .unwrap_or_else(|| vec![false; y.len()]);
        rows.push(MetricsReport::compute(
            "projected",
            &y,
            projected,
            p,
            Some(&mask),
        )?);
    }
    Ok(rows)
}

impl EvaluateSettings {
    pub(crate) fn execute(&self, dir: &Path) -> anyhow::Result<Produced> {
        let data = load_csv(&self.data, &self.schema)?;
        let preds = read_predictions(&self.predictions)?;
        let rows = evaluate(&data, &preds).context("predictions do not match the dataset rows")?;

        let csv_name = format!("{}.csv", self.stem);
        let json_name = format!("{}.json", self.stem);
        let mut w = csv_writer(&dir.join(&csv_name))?;
        w.write_record(MetricsReport::CSV_HEADER)?;
        for r in &rows {
            w.write_record(r.csv_record())?;
        }
        w.flush()?;
        write_json(&dir.join(&json_name), &rows)?;

        println!(
            "{:<10} {:>8} {:>10} {:>10} {:>8} {:>10}",
            "", "AUC", "MD", "BR", "IRR", "RMSE"
        );
        for r in &rows {
            println!(
                "{:<10} {:>8.3} {:>10.3} {:>10.3} {:>8.3} {:>10.3}{}",
                r.label,
                r.auc,
                r.md,
                r.br,
                r.irr,
                r.rmse,
                if r.irr_flagged { "  (IRR < 0.8)" } else { "" }
            );
        }
        Ok(Produced {
            inputs: vec![self.predictions.clone(), self.data.clone()],
            outputs: vec![csv_name, json_name],
        })
    }
}
