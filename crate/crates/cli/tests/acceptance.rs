//! End-to-end acceptance checks. Each test prints one `PASS` or `FAIL` line
//! straight to stdout (bypassing capture) before asserting.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rankfair_cli::commands::evaluate::{evaluate, Predictions};
use rankfair_cli::commands::project::ProjectSettings;
use rankfair_cli::commands::replay::replay_into;
use rankfair_cli::commands::sweep::SweepSettings;
use rankfair_cli::commands::train::fit;
use rankfair_core::nalgebra::{DMatrix, DVector};
use rankfair_core::{
    assign_ranks, auc, auc_from_u, generate_synthetic, group_shrink, mann_whitney_u,
    pseudo_inverse, run, standardize, sum_rank_partition, CsvSchema, Group, KappaMode,
    MetricsReport, ProximalParams, ProximalState, SolverConfig, SyntheticSpec, TaskDataset,
};

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "[{verdict}] criterion {id:>2}: {name}: {detail}").unwrap();
    out.flush().unwrap();
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<Group> {
    loop {
        let g: Vec<Group> = (0..n)
            .map(|_| {
                if rng.random_bool(0.5) {
                    Group::A
                } else {
                    Group::B
                }
            })
            .collect();
        if g.contains(&Group::A) && g.contains(&Group::B) {
            return g;
        }
    }
}

fn count(g: &[Group], which: Group) -> usize {
    g.iter().filter(|&&x| x == which).count()
}

/// Data, raw and projected metric rows for the five default runs at alpha 0.9.
fn default_runs() -> &'static [Vec<MetricsReport>] {
    static RUNS: OnceLock<Vec<Vec<MetricsReport>>> = OnceLock::new();
    RUNS.get_or_init(|| {
        (1..=5)
            .map(|seed| {
                let data = generate_synthetic(&SyntheticSpec::new(0.9, seed)).unwrap();
                let t = fit(data, &SolverConfig::default()).unwrap();
                let preds = Predictions {
                    raw: t.raw.clone(),
                    projected: Some(t.projected.clone()),
                    demoted: Some(t.output.demoted.clone()),
                };
                evaluate(&t.data, &preds).unwrap()
            })
            .collect()
    })
}

fn row<'a>(rows: &'a [MetricsReport], label: &str) -> &'a MetricsReport {
    rows.iter().find(|r| r.label == label).unwrap()
}

#[test]
fn criterion_01_synthetic_fairness() {
    let runs = default_runs();
    let aucs: Vec<f64> = runs.iter().map(|r| row(r, "projected").auc).collect();
    let irrs: Vec<f64> = runs.iter().map(|r| row(r, "projected").irr).collect();
    let (a, i) = (mean(&aucs), mean(&irrs));
    let pass = (0.45..=0.55).contains(&a) && i >= 0.90;
    report(
        1,
        "synthetic fairness",
        pass,
        &format!("mean projected AUC {a:.4}, mean IRR {i:.4} over 5 seeds"),
    );
    assert!(pass);
}

#[test]
fn criterion_02_synthetic_calibration() {
    let mut worst = 0.0f64;
    let mut detail = Vec::new();
    for alpha in [0.6, 0.7, 0.8, 0.9] {
        let aucs: Vec<f64> = (0..10)
            .map(|seed| {
                let d = generate_synthetic(&SyntheticSpec::new(alpha, seed)).unwrap();
                auc(&d.targets_flat(), d.protected()).unwrap()
            })
            .collect();
        let m = mean(&aucs);
        worst = worst.max((m - alpha).abs());
        detail.push(format!("{alpha}: {m:.4}"));
    }
    let pass = worst <= 0.03;
    report(
        2,
        "data calibration",
        pass,
        &format!("{} (max deviation {worst:.4})", detail.join(", ")),
    );
    assert!(pass);
}

#[test]
fn criterion_03_metric_trend() {
    let runs = default_runs();
    let improved = runs
        .iter()
        .filter(|r| {
            let (pre, post) = (row(r, "raw"), row(r, "projected"));
            post.md.abs() < pre.md.abs() && post.irr > pre.irr
        })
        .count();
    let pass = improved >= 4;
    let pairs: Vec<String> = runs
        .iter()
        .map(|r| {
            let (pre, post) = (row(r, "raw"), row(r, "projected"));
            format!(
                "|MD| {:.3}->{:.3} IRR {:.3}->{:.3}",
                pre.md.abs(),
                post.md.abs(),
                pre.irr,
                post.irr
            )
        })
        .collect();
    report(
        3,
        "metric trend",
        pass,
        &format!("{improved}/5 seeds improve; {}", pairs.join("; ")),
    );
    assert!(pass);
}

#[test]
fn criterion_04_u_complementarity() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut failures = 0;
    let mut tie_free = 0;
    for tied in [false, true] {
        for _ in 0..1000 {
            let n = rng.random_range(2..=60);
            let g = labels(&mut rng, n);
            let values: Vec<f64> = if tied {
                (0..n).map(|_| f64::from(rng.random_range(0..5))).collect()
            } else {
                (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
            };
            let ranks = assign_ranks(&values).unwrap();
            let total: f64 = ranks.ranks.iter().sum();
            if total != (n * (n + 1)) as f64 / 2.0 {
                failures += 1;
            }
            if ranks.tie_groups.is_empty() {
                tie_free += 1;
                let (n_a, n_b) = (count(&g, Group::A), count(&g, Group::B));
                let u_a = mann_whitney_u(sum_rank_partition(&ranks, &g, Group::A).unwrap(), n_a);
                let u_b = mann_whitney_u(sum_rank_partition(&ranks, &g, Group::B).unwrap(), n_b);
                if u_a + u_b != (n_a * n_b) as f64 {
                    failures += 1;
                }
            }
        }
    }
    let pass = failures == 0 && tie_free >= 1000;
    report(
        4,
        "U complementarity",
        pass,
        &format!("{tie_free} tie-free and 2000 rank-sum checks, {failures} failures"),
    );
    assert!(pass);
}

#[test]
fn criterion_05_two_path_auc() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..=80);
        let g = labels(&mut rng, n);
        let values: Vec<f64> = (0..n)
            .map(|_| f64::from(rng.random_range(0..8)) / 4.0)
            .collect();
        let (n_a, n_b) = (count(&g, Group::A), count(&g, Group::B));
        let mut wins = 0.0;
        for i in (0..n).filter(|&i| g[i] == Group::A) {
            for j in (0..n).filter(|&j| g[j] == Group::B) {
                wins += match values[i].total_cmp(&values[j]) {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Less => 0.0,
                };
            }
        }
        let pairwise = wins / (n_a * n_b) as f64;
        let r_a = sum_rank_partition(&assign_ranks(&values).unwrap(), &g, Group::A).unwrap();
        let via_u = auc_from_u(mann_whitney_u(r_a, n_a), n_a, n_b).unwrap();
        let sorted = auc(&values, &g).unwrap();
        worst = worst
            .max((pairwise - via_u).abs())
            .max((pairwise - sorted).abs());
    }
    let pass = worst <= 1e-12;
    report(
        5,
        "two-path AUC",
        pass,
        &format!("1000 tied instances, max difference {worst:e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_06_least_squares_oracle() {
    let config = SolverConfig {
        beta: 0.0,
        fairness_enabled: false,
        outer_iters: 200,
        ..Default::default()
    };
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let spec = SyntheticSpec {
            k: 4,
            h: 25,
            n: 5,
            ..SyntheticSpec::new(0.8, 100 + seed)
        };
        let data = standardize(&generate_synthetic(&spec).unwrap()).0;
        let out = run(&data, &config).unwrap();
        let mut ls = DMatrix::zeros(data.k(), data.n());
        for j in 0..data.k() {
            let w: DVector<f64> = pseudo_inverse(&data.features()[j]) * &data.targets()[j];
            ls.set_row(j, &w.transpose());
        }
        worst = worst.max((&out.w - &ls).norm() / ls.norm());
    }
    let pass = worst <= 1e-4;
    report(
        6,
        "least-squares oracle",
        pass,
        &format!("20 problems, max relative Frobenius error {worst:e}"),
    );
    assert!(pass);
}

/// A single task whose design is `[I; 0]`, so `c = (y + gamma m + lambda) / (1 + gamma)`
/// restricted to the first `n` rows.
fn shrink_case(first: &[f64], params: ProximalParams) -> DVector<f64> {
    let (h, n) = (6, first.len());
    let mut x = DMatrix::zeros(h, n);
    for i in 0..n {
        x[(i, i)] = 1.0;
    }
    let data = TaskDataset::new(vec![x], vec![DVector::zeros(h)], vec![Group::A; h]).unwrap();
    let mut state = ProximalState::new(&data, params, vec![0.0; h]).unwrap();
    for (i, &v) in first.iter().enumerate() {
        // lambda / (1 + gamma) = v exactly for gamma = 1
        state.lambda[i] = 2.0 * v;
    }
    state.update_w_group_shrink(&data);
    state.w.row(0).transpose()
}

#[test]
fn criterion_07_shrink_boundary() {
    let params = ProximalParams {
        gamma: 1.0,
        theta: 0.01,
        beta: 1.0,
        rho: 0.001,
    };
    let t = params.shrink_threshold();
    let mut failures = Vec::new();
    let mut check = |label: &str, c: Vec<f64>, zeroed: bool| {
        let direct = group_shrink(&DVector::from_vec(c.clone()), t);
        let via_state = shrink_case(&c, params);
        for (path, row) in [
            ("group_shrink", direct),
            ("update_w_group_shrink", via_state),
        ] {
            if (row.norm() == 0.0) != zeroed {
                failures.push(format!("{path} {label}"));
            }
        }
    };
    for axis in 0..3 {
        for sign in [1.0, -1.0] {
            let at = |norm: f64| {
                let mut c = vec![0.0; 3];
                c[axis] = sign * norm;
                c
            };
            check("at threshold", at(t), true);
            check("1e-12 below", at(t - 1e-12), true);
            check("1e-12 above", at(t + 1e-12), false);
        }
    }
    // 3-4-5 rows: the norm is exact.
    let scaled = |s: f64| vec![0.6 * s, 0.8 * s, 0.0];
    check("3-4-5 far below", scaled(t * 0.5), true);
    check("3-4-5 far above", scaled(t * 2.0), false);
    let pass = failures.is_empty();
    report(
        7,
        "shrink boundary",
        pass,
        &format!("threshold {t}, failures {failures:?}"),
    );
    assert!(pass);
}

#[test]
fn criterion_08_projection_oracle_suite() {
    let mut lines = Vec::new();
    let mut pass = true;
    for epsilon in [0.01, 0.1] {
        let settings = ProjectSettings {
            input: None,
            epsilon,
            tau: rankfair_core::projection::DEFAULT_TAU,
            kappa_mode: KappaMode::Derived,
            lower_bound: None,
            oracle: true,
            fuzz: Some(200),
            fuzz_size: 12,
            seed: 8,
            stem: "fuzz".into(),
        };
        let records = settings.fuzz_records(200).unwrap();
        let s = ProjectSettings::summarize(&records);
        let share = s.share_ratio_at_least_0_7.unwrap_or(0.0);
        pass &= s.verification_failures == 0 && s.implication_violations == 0 && share >= 0.8;

        let ratios: Vec<f64> = records.iter().filter_map(|r| r.ratio).collect();
        let bins = [
            (0.0, 0.5, "[0,0.5)"),
            (0.5, 0.7, "[0.5,0.7)"),
            (0.7, 0.9, "[0.7,0.9)"),
            (0.9, 0.99, "[0.9,0.99)"),
            (0.99, f64::INFINITY, "[0.99,1]"),
        ];
        let hist: Vec<String> = bins
            .iter()
            .map(|&(lo, hi, label)| {
                format!(
                    "{label}:{}",
                    ratios.iter().filter(|&&r| r >= lo && r < hi).count()
                )
            })
            .collect();
        lines.push(format!(
            "eps {epsilon}: heuristic feasible {}/{}, oracle feasible {}, verification failures {}, \
             implication violations {}, share >= 0.7 {share:.3}, ratio min {:.3} p10 {:.3} median {:.3}, bins {}",
            s.heuristic_feasible,
            s.instances,
            s.oracle_feasible,
            s.verification_failures,
            s.implication_violations,
            s.ratio_min.unwrap_or(f64::NAN),
            s.ratio_p10.unwrap_or(f64::NAN),
            s.ratio_median.unwrap_or(f64::NAN),
            hist.join(" ")
        ));
    }
    report(8, "projection oracle suite", pass, &lines.join(" | "));
    assert!(pass);
}

#[test]
fn criterion_09_epsilon_rmse_curve() {
    let data = generate_synthetic(&SyntheticSpec::new(0.9, 9)).unwrap();
    let settings = SweepSettings {
        data: "in-memory".into(),
        schema: CsvSchema::default(),
        solver: SolverConfig::default(),
        betas: vec![SolverConfig::default().beta],
        epsilons: vec![0.01, 0.05, 0.1, 0.25],
        folds: 10,
        repeats: 1,
        jobs: std::thread::available_parallelism().map_or(1, |n| n.get()),
        stem: "sweep".into(),
    };
    let results = settings.fold_results(&data).unwrap();
    let grid = settings.aggregate(&results);
    let summary = settings.summarize(&grid);
    let curve: Vec<(f64, f64)> = summary
        .per_epsilon
        .iter()
        .map(|p| (p.epsilon, p.rmse.mean))
        .collect();
    let feasible = results.iter().filter(|r| r.feasible).count();
    let pass =
        curve.len() == 4 && curve.iter().all(|(_, r)| r.is_finite()) && feasible == results.len();
    let points: Vec<String> = curve.iter().map(|(e, r)| format!("{e}: {r:.4}")).collect();
    report(
        9,
        "epsilon-RMSE curve",
        pass,
        &format!(
            "{} ; feasible runs {feasible}/{}",
            points.join(", "),
            results.len()
        ),
    );
    assert!(pass);
}

fn cli(dir: &Path, args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_rankfair"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn criterion_10_manifest_replay() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let configs: [(&str, &[&str], &[&str]); 3] = [
        (
            "a",
            &["--alpha", "0.9", "--k", "10", "--seed", "1"],
            &["--outer-iters", "5"],
        ),
        (
            "b",
            &["--alpha", "0.7", "--k", "8", "--h", "20", "--seed", "2"],
            &[
                "--epsilon",
                "0.05",
                "--kappa-mode",
                "printed",
                "--outer-iters",
                "4",
                "--seed",
                "9",
            ],
        ),
        (
            "c",
            &["--alpha", "0.8", "--k", "6", "--seed", "3"],
            &["--no-fairness", "--outer-iters", "3"],
        ),
    ];
    let mut checked = 0;
    let mut mismatched = Vec::new();
    for (name, gen_args, train_args) in configs {
        let csv = format!("{name}.csv");
        cli(d, &[&["generate"][..], gen_args, &["-o", &csv]].concat());
        let stem = format!("{name}-train");
        cli(
            d,
            &[&["train", &csv][..], train_args, &["-o", &stem]].concat(),
        );
        let manifests = [
            (
                d.join(format!("{name}.manifest.json")),
                format!("replay-{name}"),
            ),
            (
                d.join(format!("{stem}.manifest.json")),
                format!("replay-{stem}"),
            ),
        ];
        for (m, out) in manifests {
            let r = replay_into(&m, Some(&d.join(out))).unwrap();
            checked += r.matched.len() + r.mismatched.len();
            mismatched.extend(r.mismatched);
        }
    }
    let pass = mismatched.is_empty() && checked > 0;
    report(
        10,
        "manifest replay",
        pass,
        &format!("3 configurations, {checked} files compared, mismatches {mismatched:?}"),
    );
    assert!(pass);
}
