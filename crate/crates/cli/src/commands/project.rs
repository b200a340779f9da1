use std::path::{Path, PathBuf};

use anyhow::Context;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rankfair_core::projection::ORACLE_LIMIT;
use rankfair_core::{
    brute_force_project, constraint_bounds_with, project_onto_q, ConstraintSpec, Error, Group,
    KappaMode, ProjectionOutcome, Route,
};
use serde::{Deserialize, Serialize};

use super::{csv_writer, write_json, Produced};
use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectSettings {
    pub input: Option<PathBuf>,
    pub epsilon: f64,
    pub tau: u64,
    pub kappa_mode: KappaMode,
    pub lower_bound: Option<f64>,
    pub oracle: bool,
    pub fuzz: Option<usize>,
    pub fuzz_size: usize,
    pub seed: u64,
    pub stem: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    /// Oracle kept mass minus heuristic kept mass.
    pub absolute: f64,
    /// Heuristic kept mass over oracle kept mass (1 when both are 0).
    pub ratio: f64,
}

impl Gap {
    pub fn between(heuristic: &ProjectionOutcome, oracle: &ProjectionOutcome) -> Self {
        let ratio = if oracle.objective == 0.0 {
            1.0
        } else {
            heuristic.objective / oracle.objective
        };
        Self {
            absolute: oracle.objective - heuristic.objective,
            ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectReport {
    pub c: f64,
    pub kappa: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub heuristic: ProjectionOutcome,
    pub oracle: Option<ProjectionOutcome>,
    pub gap: Option<Gap>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzRecord {
    pub instance: usize,
    pub n: usize,
    pub n_a: usize,
    pub route: Route,
    pub heuristic_feasible: bool,
    /// The heuristic's reported feasibility agrees with a pairwise recount of `r_A`.
    pub verified: bool,
    pub oracle_feasible: bool,
    pub heuristic_objective: f64,
    pub oracle_objective: f64,
    /// Set when both are feasible.
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzSummary {
    pub instances: usize,
    pub heuristic_feasible: usize,
    pub oracle_feasible: usize,
    pub verification_failures: usize,
    /// Heuristic feasible but oracle infeasible; must be 0.
    pub implication_violations: usize,
    pub both_feasible: usize,
    pub ratio_min: Option<f64>,
    pub ratio_p10: Option<f64>,
    pub ratio_median: Option<f64>,
    /// Share of jointly feasible instances whose ratio is at least 0.7.
    pub share_ratio_at_least_0_7: Option<f64>,
}

/// `r_A` under the demotion ordering by direct pair counting: A instance `i`
/// scores 1 plus the number of instances ranked below it (ties 1/2).
pub fn pairwise_r_a(values: &[f64], protected: &[Group], demoted: &[bool]) -> f64 {
    let below = |i: usize, j: usize| -> f64 {
        match (demoted[i], demoted[j]) {
            (true, true) => f64::from(u8::from(j < i)),
            (false, true) => 1.0,
            (true, false) => 0.0,
            (false, false) if values[j] < values[i] => 1.0,
            (false, false) if values[j] == values[i] => 0.5,
            (false, false) => 0.0,
        }
    };
    (0..values.len())
        .filter(|&i| protected[i] == Group::A)
        .map(|i| {
            1.0 + (0..values.len())
                .filter(|&j| j != i)
                .map(|j| below(i, j))
                .sum::<f64>()
        })
        .sum()
}

/// Random labelled vector with both partitions present. Half of the
/// instances draw from a coarse grid so that ties are common.
pub fn random_instance(rng: &mut impl Rng, n: usize) -> (Vec<f64>, Vec<Group>) {
    assert!(n >= 2, "need room for both partitions");
    loop {
        let coarse = rng.random_bool(0.5);
        let values: Vec<f64> = (0..n)
            .map(|_| {
                if coarse {
                    f64::from(rng.random_range(-6i32..=6)) / 2.0
                } else {
                    rng.random_range(-3.0..3.0)
                }
            })
            .collect();
        let labels: Vec<Group> = (0..n)
            .map(|_| {
                if rng.random_bool(0.5) {
                    Group::A
                } else {
                    Group::B
                }
            })
            .collect();
        if labels.contains(&Group::A) && labels.contains(&Group::B) {
            return (values, labels);
        }
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

impl ProjectSettings {
    pub(crate) fn validate(&self) -> anyhow::Result<()> {
        match (&self.input, self.fuzz) {
            (None, None) => Err(UsageError("give an input CSV or --fuzz N".into()).into()),
            (Some(_), Some(_)) => {
                Err(UsageError("--fuzz does not take an input file".into()).into())
            }
            (None, Some(_)) if !(3..=ORACLE_LIMIT).contains(&self.fuzz_size) => {
                Err(UsageError(format!("--fuzz-size must lie in [3, {ORACLE_LIMIT}]")).into())
            }
            _ => Ok(()),
        }
    }

    pub fn spec(&self, protected: &[Group]) -> rankfair_core::Result<ConstraintSpec> {
        let n_a = protected.iter().filter(|&&g| g == Group::A).count();
        let spec =
            constraint_bounds_with(n_a, protected.len() - n_a, self.epsilon, self.kappa_mode)?;
        Ok(match self.lower_bound {
            Some(c) => spec.with_lower_bound(c),
            None => spec,
        })
    }

    pub fn project(
        &self,
        values: &[f64],
        offsets: &[f64],
        protected: &[Group],
    ) -> anyhow::Result<ProjectReport> {
        let spec = self.spec(protected)?;
        let heuristic = project_onto_q(values, offsets, &spec, protected, self.tau)?;
        let (oracle, gap) = if self.oracle {
            let m_p: Vec<f64> = values.iter().zip(offsets).map(|(a, b)| a + b).collect();
            let o = brute_force_project(&m_p, &spec, protected)?;
            let gap = Gap::between(&heuristic, &o);
            (Some(o), Some(gap))
        } else {
            (None, None)
        };
        Ok(ProjectReport {
            c: spec.c,
            kappa: spec.kappa,
            n_a: spec.n_a,
            n_b: spec.n_b,
            heuristic,
            oracle,
            gap,
        })
    }

    /// Heuristic against oracle on `count` seeded random instances.
    pub fn fuzz_records(&self, count: usize) -> anyhow::Result<Vec<FuzzRecord>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut records = Vec::with_capacity(count);
        for instance in 0..count {
            let n = rng.random_range(3..=self.fuzz_size);
            let (values, labels) = random_instance(&mut rng, n);
            let spec = self.spec(&labels)?;
            let h = project_onto_q(&values, &vec![0.0; n], &spec, &labels, self.tau)?;
            let o = brute_force_project(&values, &spec, &labels)?;
            let verified =
                spec.contains(pairwise_r_a(&values, &labels, &h.demoted_mask())) == h.feasible;
            let ratio = (h.feasible && o.feasible).then(|| Gap::between(&h, &o).ratio);
            records.push(FuzzRecord {
                instance,
                n,
                n_a: spec.n_a,
                route: h.route,
                heuristic_feasible: h.feasible,
                verified,
                oracle_feasible: o.feasible,
                heuristic_objective: h.objective,
                oracle_objective: o.objective,
                ratio,
            });
        }
        Ok(records)
    }

    pub fn summarize(records: &[FuzzRecord]) -> FuzzSummary {
        let mut ratios: Vec<f64> = records.iter().filter_map(|r| r.ratio).collect();
        ratios.sort_by(f64::total_cmp);
        let some = |f: &dyn Fn(&[f64]) -> f64| (!ratios.is_empty()).then(|| f(&ratios));
        FuzzSummary {
            instances: records.len(),
            heuristic_feasible: records.iter().filter(|r| r.heuristic_feasible).count(),
            oracle_feasible: records.iter().filter(|r| r.oracle_feasible).count(),
            verification_failures: records.iter().filter(|r| !r.verified).count(),
            implication_violations: records
                .iter()
                .filter(|r| r.heuristic_feasible && !r.oracle_feasible)
                .count(),
            both_feasible: ratios.len(),
            ratio_min: some(&|r| r[0]),
            ratio_p10: some(&|r| quantile(r, 0.1)),
            ratio_median: some(&|r| quantile(r, 0.5)),
            share_ratio_at_least_0_7: some(&|r| {
                r.iter().filter(|&&x| x >= 0.7).count() as f64 / r.len() as f64
            }),
        }
    }

    pub(crate) fn execute(&self, dir: &Path) -> anyhow::Result<Produced> {
        let json_name = format!("{}.json", self.stem);
        if let Some(count) = self.fuzz {
            let records = self.fuzz_records(count)?;
            let summary = Self::summarize(&records);
            let csv_name = format!("{}.fuzz.csv", self.stem);
            let mut w = csv_writer(&dir.join(&csv_name))?;
            for r in &records {
                w.serialize(r)?;
            }
            w.flush()?;
            write_json(&dir.join(&json_name), &summary)?;
            println!(
                "{} instances: heuristic feasible {}, oracle feasible {}, violations {}, verification failures {}",
                summary.instances,
                summary.heuristic_feasible,
                summary.oracle_feasible,
                summary.implication_violations,
                summary.verification_failures
            );
            if let (Some(median), Some(share)) =
                (summary.ratio_median, summary.share_ratio_at_least_0_7)
            {
                println!("kept-mass ratio median {median:.4}, share >= 0.7: {share:.3}");
            }
            return Ok(Produced {
                inputs: Vec::new(),
                outputs: vec![csv_name, json_name],
            });
        }

        let input = self.input.as_ref().expect("validated");
        let (values, offsets, labels) = read_vector(input)?;
        let report = self.project(&values, &offsets, &labels)?;
        write_json(&dir.join(&json_name), &report)?;
        let h = &report.heuristic;
        println!(
            "route {:?}: r_A {} in [{}, {}]: {}, demoted {}, kept mass {:.6}",
            h.route,
            h.achieved_r_a,
            report.c,
            report.c + report.kappa,
            h.feasible,
            h.demoted.len(),
            h.objective
        );
        if let (Some(o), Some(g)) = (&report.oracle, &report.gap) {
            println!(
                "oracle: feasible {}, kept mass {:.6}; gap {:.6} (ratio {:.4})",
                o.feasible, o.objective, g.absolute, g.ratio
            );
        }
        Ok(Produced {
            inputs: vec![input.clone()],
            outputs: vec![json_name],
        })
    }
}

/// `value`, `protected` (A/B or 1/0, 1 meaning A) and optional `offset` columns.
pub fn read_vector(path: &Path) -> anyhow::Result<(Vec<f64>, Vec<f64>, Vec<Group>)> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let headers = r.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let missing = |name: &str| Error::Parse {
        path: path.to_owned(),
        row: 0,
        column: name.into(),
        reason: "missing column".into(),
    };
    let vc = col("value").ok_or_else(|| missing("value"))?;
    let pc = col("protected").ok_or_else(|| missing("protected"))?;
    let oc = col("offset");
    let (mut values, mut offsets, mut labels) = (Vec::new(), Vec::new(), Vec::new());
    for (row, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = |column: &str, reason: String| Error::Parse {
            path: path.to_owned(),
            row: row + 1,
            column: column.into(),
            reason,
        };
        let number = |c: usize, name: &str| -> Result<f64, Error> {
            let s = rec.get(c).unwrap_or("").trim();
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad(name, format!("not a finite number: {s:?}")))
        };
        values.push(number(vc, "value")?);
        offsets.push(match oc {
            Some(c) => number(c, "offset")?,
            None => 0.0,
        });
        labels.push(match rec.get(pc).unwrap_or("").trim() {
            "A" | "a" | "1" => Group::A,
            "B" | "b" | "0" => Group::B,
            other => {
                return Err(bad("protected", format!("expected A/B or 1/0, got {other:?}")).into())
            }
        });
    }
    Ok((values, offsets, labels))
}
