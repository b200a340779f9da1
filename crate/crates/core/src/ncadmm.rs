//! The outer NC-ADMM loop: proximal step, projection onto the rank band,
//! scaled dual update.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Group, TaskDataset};
use crate::error::{Error, Result};
use crate::projection::{project_onto_q, ProjectionOutcome, Route, DEFAULT_TAU};
use crate::proximal::{ProximalParams, ProximalState};
use crate::ranking::{
    assign_ranks, auc_from_u, constraint_bounds_with, mann_whitney_u, sum_rank_partition,
    ConstraintSpec, KappaMode,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub rho: f64,
    pub beta: f64,
    pub gamma: f64,
    pub theta: f64,
    pub epsilon: f64,
    pub tau: u64,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub seed: u64,
    pub fairness_enabled: bool,
    pub kappa_mode: KappaMode,
    /// Replaces `C`, keeping the band width. For probing the band; `None`
    /// uses the independence value.
    #[serde(default)]
    pub lower_bound: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rho: 0.001,
            beta: 0.01,
            gamma: 1.0,
            theta: 0.01,
            epsilon: 0.01,
            tau: DEFAULT_TAU,
            outer_iters: 30,
            inner_iters: 50,
            seed: 0,
            fairness_enabled: true,
            kappa_mode: KappaMode::Derived,
            lower_bound: None,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        self.proximal_params().validate()?;
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(invalid(
                "epsilon",
                format!("must be finite and >= 0, got {}", self.epsilon),
            ));
        }
        if let Some(c) = self.lower_bound {
            if !c.is_finite() {
                return Err(invalid("lower_bound", format!("must be finite, got {c}")));
            }
        }
        if self.tau == 0 {
            return Err(invalid("tau", "must be a positive integer".into()));
        }
        if self.outer_iters == 0 {
            return Err(invalid("outer_iters", "must be a positive integer".into()));
        }
        if self.inner_iters == 0 {
            return Err(invalid("inner_iters", "must be a positive integer".into()));
        }
        Ok(())
    }

    /// Returns the config if every constraint holds.
    pub fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn proximal_params(&self) -> ProximalParams {
        ProximalParams {
            gamma: self.gamma,
            theta: self.theta,
            beta: self.beta,
            rho: self.rho,
        }
    }

    pub fn constraint_spec(&self, protected: &[Group]) -> Result<ConstraintSpec> {
        let n_a = protected.iter().filter(|&&g| g == Group::A).count();
        let spec =
            constraint_bounds_with(n_a, protected.len() - n_a, self.epsilon, self.kappa_mode)?;
        Ok(match self.lower_bound {
            Some(c) => spec.with_lower_bound(c),
            None => spec,
        })
    }
}

fn invalid(name: &'static str, reason: String) -> Error {
    Error::InvalidParameter { name, reason }
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    /// `1/2 ||XW - Y||^2 + beta ||W||_{2,1}` after the proximal step.
    pub objective: f64,
    /// `||M - M_S||_2`.
    pub primal_residual: f64,
    pub feasible: bool,
    pub achieved_r_a: f64,
    /// AUC of `M_S` under the demotion ranking.
    pub auc: f64,
    pub inner_sweeps: usize,
    pub route: Route,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub records: Vec<TraceRecord>,
}

impl SolverTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }
}

/// Iterates `(W, M, lambda)` of the proximal step plus `M_S` and `V`.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub prox: ProximalState,
    pub m_s: Vec<f64>,
    pub v: Vec<f64>,
    /// Demotion mask of the latest projection.
    pub demoted: Vec<bool>,
    pub spec: ConstraintSpec,
    iteration: usize,
}

impl SolverState {
    /// `M`, `M_S` and `V` uniform on `[0, 1)` from the config seed; `W` and
    /// `lambda` zero. Without fairness `M_S = M` and `V = 0`.
    pub fn init(data: &TaskDataset, config: &SolverConfig) -> Result<Self> {
        config.validate()?;
        let spec = config.constraint_spec(data.protected())?;
        let n = data.len();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let uniform =
            |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..n).map(|_| rng.random::<f64>()).collect() };
        let m = uniform(&mut rng);
        let (m_s, v) = if config.fairness_enabled {
            let m_s = uniform(&mut rng);
            let v = uniform(&mut rng);
            (m_s, v)
        } else {
            (m.clone(), vec![0.0; n])
        };
        let prox = ProximalState::new(data, config.proximal_params(), m)?;
        Ok(Self {
            prox,
            m_s,
            v,
            demoted: vec![false; n],
            spec,
            iteration: 0,
        })
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.prox.w
    }

    pub fn m(&self) -> &[f64] {
        &self.prox.m
    }

    /// Proximal solve anchored at `(M_S^t, V^t)`, projection of `M + V`,
    /// then `V <- V + M - M_S`.
    pub fn step(&mut self, data: &TaskDataset, config: &SolverConfig) -> Result<TraceRecord> {
        let inner = self
            .prox
            .solve_inner(data, &self.m_s, &self.v, config.inner_iters)?;
        let protected = data.protected();

        let outcome = if config.fairness_enabled {
            project_onto_q(&self.prox.m, &self.v, &self.spec, protected, config.tau)?
        } else {
            let ranks = assign_ranks(&self.prox.m)?;
            let r_a = sum_rank_partition(&ranks, protected, Group::A)?;
            ProjectionOutcome {
                m_s: self.prox.m.clone(),
                demoted: Vec::new(),
                kept: (0..self.prox.m.len()).collect(),
                achieved_r_a: r_a,
                feasible: self.spec.contains(r_a),
                objective: self.prox.m.iter().map(|x| x * x).sum(),
                route: Route::Identity,
            }
        };
        self.demoted = outcome.demoted_mask();
        self.m_s = outcome.m_s;
        if config.fairness_enabled {
            for i in 0..self.v.len() {
                self.v[i] += self.prox.m[i] - self.m_s[i];
            }
        }

        self.iteration += 1;
        let primal_residual = self
            .prox
            .m
            .iter()
            .zip(&self.m_s)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let u = mann_whitney_u(outcome.achieved_r_a, self.spec.n_a);
        Ok(TraceRecord {
            iteration: self.iteration,
            objective: self.prox.loss(data),
            primal_residual,
            feasible: outcome.feasible,
            achieved_r_a: outcome.achieved_r_a,
            auc: auc_from_u(u, self.spec.n_a, self.spec.n_b)?,
            inner_sweeps: inner.sweeps,
            route: outcome.route,
        })
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub w: DMatrix<f64>,
    /// Raw model outputs `XW`.
    pub raw: Vec<f64>,
    /// Final projected predictions `M_S`.
    pub m_s: Vec<f64>,
    pub demoted: Vec<bool>,
    pub spec: ConstraintSpec,
    pub trace: SolverTrace,
}

/// Exactly `outer_iters` steps; no convergence test.
pub fn run(data: &TaskDataset, config: &SolverConfig) -> Result<RunOutput> {
    let mut state = SolverState::init(data, config)?;
    let mut trace = SolverTrace::default();
    for _ in 0..config.outer_iters {
        trace.records.push(state.step(data, config)?);
    }
    Ok(RunOutput {
        raw: data.predict(&state.prox.w),
        w: state.prox.w,
        m_s: state.m_s,
        demoted: state.demoted,
        spec: state.spec,
        trace,
    })
}
