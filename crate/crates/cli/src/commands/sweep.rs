use std::path::{Path, PathBuf};

use rankfair_core::{
    load_csv, project_onto_q, rmse, run, split_folds, standardize, CsvSchema, Fold, MetricsReport,
    SolverConfig, TaskDataset,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{csv_writer, write_json, Produced};
use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub data: PathBuf,
    pub schema: CsvSchema,
    /// Base config; `beta` and `epsilon` are replaced per grid point.
    pub solver: SolverConfig,
    pub betas: Vec<f64>,
    pub epsilons: Vec<f64>,
    pub folds: usize,
    pub repeats: usize,
    /// Worker threads. Outputs do not depend on it.
    pub jobs: usize,
    pub stem: String,
}

/// `10^-4, 10^-3, ..., 10^4`.
pub fn default_betas() -> Vec<f64> {
    (-4..=4).map(|e| 10f64.powi(e)).collect()
}

pub fn default_epsilons() -> Vec<f64> {
    vec![0.01, 0.05, 0.1, 0.25]
}

/// Validation metrics of one (grid point, repeat, fold) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub beta: f64,
    pub epsilon: f64,
    pub repeat: usize,
    pub fold: usize,
    /// Projected validation predictions against validation targets.
    pub metrics: MetricsReport,
    pub rmse_raw: f64,
    /// Both the last training projection and the validation projection landed in the band.
    pub feasible: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample standard deviation; 0 for a single value.
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let std = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// One grid point aggregated over folds (averaged) and repeats (mean, std).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub beta: f64,
    pub epsilon: f64,
    pub rmse: MeanStd,
    pub rmse_raw: MeanStd,
    pub auc: MeanStd,
    pub md: MeanStd,
    pub br: MeanStd,
    pub irr: MeanStd,
    pub feasible_runs: usize,
    pub total_runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    /// Lowest mean validation RMSE per epsilon; epsilon is reported, not selected.
    pub per_epsilon: Vec<GridPoint>,
    pub selected: GridPoint,
    /// The winning configuration, ready to pass to `train`.
    pub config: SolverConfig,
}

/// Train on the fold's training rows (standardized on their own statistics)
/// and score the projected validation predictions.
pub fn run_fold(
    data: &TaskDataset,
    fold: &Fold,
    config: &SolverConfig,
) -> rankfair_core::Result<(MetricsReport, f64, bool)> {
    let train_raw = data.subset(&fold.train)?;
    let val_raw = data.subset(&fold.validation)?;
    let (train, params) = standardize(&train_raw);
    let val = params.apply(&val_raw);
    let out = run(&train, config)?;
    let trained_feasible = out.trace.last().is_some_and(|r| r.feasible);

    let pred = val.predict(&out.w);
    let spec = config.constraint_spec(val.protected())?;
    let zeros = vec![0.0; pred.len()];
    let proj = project_onto_q(&pred, &zeros, &spec, val.protected(), config.tau)?;
    let mask = proj.demoted_mask();

    let y = val_raw.targets_flat();
    let raw = params.invert_targets(&pred);
    let projected = params.invert_targets(&proj.m_s);
    let metrics =
        MetricsReport::compute("validation", &y, &projected, val.protected(), Some(&mask))?;
    Ok((metrics, rmse(&y, &raw)?, trained_feasible && proj.feasible))
}

impl SweepSettings {
    pub(crate) fn validate(&self) -> anyhow::Result<()> {
        let bad = |m: &str| Err(UsageError(m.into()).into());
        if self.betas.is_empty() || self.epsilons.is_empty() {
            return bad("beta and epsilon grids must be nonempty");
        }
        if self.betas.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return bad("betas must be finite and >= 0");
        }
        if self.epsilons.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return bad("epsilons must be finite and >= 0");
        }
        if self.folds < 2 {
            return bad("--folds must be at least 2");
        }
        if self.repeats == 0 {
            return bad("--repeats must be at least 1");
        }
        Ok(())
    }

    fn point_config(&self, beta: f64, epsilon: f64) -> SolverConfig {
        SolverConfig {
            beta,
            epsilon,
            ..self.solver
        }
    }

    /// Every fold result, in grid order (epsilon, beta, repeat, fold).
    pub fn fold_results(&self, data: &TaskDataset) -> anyhow::Result<Vec<FoldResult>> {
        let splits = (0..self.repeats)
            .map(|r| split_folds(data, self.folds, self.solver.seed.wrapping_add(r as u64)))
            .collect::<rankfair_core::Result<Vec<_>>>()?;
        let mut jobs = Vec::new();
        for &epsilon in &self.epsilons {
            for &beta in &self.betas {
                for (repeat, folds) in splits.iter().enumerate() {
                    for fold in 0..folds.len() {
                        jobs.push((beta, epsilon, repeat, fold));
                    }
                }
            }
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()?;
        let results = pool.install(|| {
            jobs.par_iter()
                .map(|&(beta, epsilon, repeat, fold)| {
                    let config = self.point_config(beta, epsilon);
                    let (metrics, rmse_raw, feasible) =
                        run_fold(data, &splits[repeat][fold], &config)?;
                    Ok(FoldResult {
                        beta,
                        epsilon,
                        repeat,
                        fold,
                        metrics,
                        rmse_raw,
                        feasible,
                    })
                })
                .collect::<rankfair_core::Result<Vec<_>>>()
        })?;
        Ok(results)
    }

    pub fn aggregate(&self, results: &[FoldResult]) -> Vec<GridPoint> {
        let mut grid = Vec::new();
        for &epsilon in &self.epsilons {
            for &beta in &self.betas {
                let runs: Vec<&FoldResult> = results
                    .iter()
                    .filter(|r| r.beta == beta && r.epsilon == epsilon)
                    .collect();
                let per_repeat = |f: &dyn Fn(&FoldResult) -> f64| -> MeanStd {
                    let means: Vec<f64> = (0..self.repeats)
                        .map(|rep| {
                            let xs: Vec<f64> = runs
                                .iter()
                                .filter(|r| r.repeat == rep)
                                .map(|r| f(r))
                                .collect();
                            xs.iter().sum::<f64>() / xs.len() as f64
                        })
                        .collect();
                    MeanStd::of(&means)
                };
                grid.push(GridPoint {
                    beta,
                    epsilon,
                    rmse: per_repeat(&|r| r.metrics.rmse),
                    rmse_raw: per_repeat(&|r| r.rmse_raw),
                    auc: per_repeat(&|r| r.metrics.auc),
                    md: per_repeat(&|r| r.metrics.md),
                    br: per_repeat(&|r| r.metrics.br),
                    irr: per_repeat(&|r| r.metrics.irr),
                    feasible_runs: runs.iter().filter(|r| r.feasible).count(),
                    total_runs: runs.len(),
                });
            }
        }
        grid
    }

    pub fn summarize(&self, grid: &[GridPoint]) -> SweepSummary {
        let best = |points: Vec<&GridPoint>| -> GridPoint {
            points
                .into_iter()
                .min_by(|a, b| a.rmse.mean.total_cmp(&b.rmse.mean))
                .cloned()
                .expect("nonempty grid")
        };
        let per_epsilon: Vec<GridPoint> = self
            .epsilons
            .iter()
            .map(|&e| best(grid.iter().filter(|p| p.epsilon == e).collect()))
            .collect();
        let selected = best(grid.iter().collect());
        SweepSummary {
            config: self.point_config(selected.beta, selected.epsilon),
            per_epsilon,
            selected,
        }
    }

    pub(crate) fn execute(&self, dir: &Path) -> anyhow::Result<Produced> {
        let data = load_csv(&self.data, &self.schema)?;
        let results = self.fold_results(&data)?;
        let grid = self.aggregate(&results);
        let summary = self.summarize(&grid);

        let curve = format!("{}.curve.csv", self.stem);
        let grid_name = format!("{}.grid.csv", self.stem);
        let best = format!("{}.best.json", self.stem);

        let mut w = csv_writer(&dir.join(&curve))?;
        w.write_record(["epsilon", "rmse"])?;
        for p in &summary.per_epsilon {
            w.write_record([p.epsilon.to_string(), p.rmse.mean.to_string()])?;
        }
        w.flush()?;

        let mut w = csv_writer(&dir.join(&grid_name))?;
        let mut header = vec!["beta".to_string(), "epsilon".into()];
        for m in ["auc", "md", "br", "irr", "rmse", "rmse_raw"] {
            header.push(format!("{m}_mean"));
            header.push(format!("{m}_std"));
        }
        header.extend(["feasible_runs".to_string(), "total_runs".into()]);
        w.write_record(&header)?;
        for p in &grid {
            let mut rec = vec![p.beta.to_string(), p.epsilon.to_string()];
            for m in [p.auc, p.md, p.br, p.irr, p.rmse, p.rmse_raw] {
                rec.push(m.mean.to_string());
                rec.push(m.std.to_string());
            }
            rec.push(p.feasible_runs.to_string());
            rec.push(p.total_runs.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        write_json(&dir.join(&best), &summary)?;

        println!(
            "{:>10} {:>10} {:>16} {:>16} {:>10}",
            "epsilon", "beta", "RMSE", "AUC", "feasible"
        );
        for p in &summary.per_epsilon {
            println!(
                "{:>10} {:>10} {:>8.4} ± {:<6.4} {:>7.4} ± {:<6.4} {:>5}/{}",
                p.epsilon,
                p.beta,
                p.rmse.mean,
                p.rmse.std,
                p.auc.mean,
                p.auc.std,
                p.feasible_runs,
                p.total_runs
            );
        }
        println!(
            "selected beta {} (epsilon {}), mean RMSE {:.4}",
            summary.selected.beta, summary.selected.epsilon, summary.selected.rmse.mean
        );
        Ok(Produced {
            inputs: vec![self.data.clone()],
            outputs: vec![curve, grid_name, best],
        })
    }
}
