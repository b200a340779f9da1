//! Convex proximal step: minimize
//!
//! ```text
//! 1/2 ||XW - Y||^2 + beta ||W||_{2,1} + rho/2 ||M - M_S + V||^2   s.t.  XW = M
//! ```
//!
//! by alternating directions on the augmented Lagrangian
//! `... - lambda^T (XW - M) + gamma/2 ||XW - M||^2`:
//!
//! * W: per task `c = X^+ (y + gamma M + lambda) / (1 + gamma)`, then the row
//!   is shrunk towards zero by `beta / (1 + gamma)` in Euclidean norm.
//! * M: the Lagrangian is strictly convex in M; setting its gradient
//!   `rho (M - M_S + V) + lambda - gamma (XW - M)` to zero gives
//!   `M = (rho (M_S - V) - lambda + gamma XW) / (rho + gamma)`.
//! * lambda: `lambda <- lambda - theta (XW - M)`, a gradient step on the dual
//!   consistent with the `-lambda^T (XW - M)` term.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::TaskDataset;
use crate::error::{Error, Result};

/// Relative cutoff below which singular values are treated as zero.
pub const PINV_RCOND: f64 = 1e-10;

/// Early-exit tolerance for the inner sweeps.
pub const INNER_TOL: f64 = 1e-8;

/// Moore-Penrose pseudo-inverse via SVD.
pub fn pseudo_inverse(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (rows, cols) = x.shape();
    if rows == 0 || cols == 0 {
        return DMatrix::zeros(cols, rows);
    }
    let svd = x.clone().svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let s_max = svd.singular_values.max();
    let cutoff = PINV_RCOND * s_max;
    let mut out = DMatrix::zeros(cols, rows);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            // out += v_i u_i^T / s
            out += (v_t.row(i).transpose() / s) * u.column(i).transpose();
        }
    }
    out
}

/// `max(||c|| - threshold, 0) c / ||c||`, zero when `c` is zero.
pub fn group_shrink(c: &DVector<f64>, threshold: f64) -> DVector<f64> {
    let norm = c.norm();
    if norm == 0.0 || norm <= threshold {
        return DVector::zeros(c.len());
    }
    c * ((norm - threshold) / norm)
}

/// Penalty and step parameters of the proximal step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProximalParams {
    pub gamma: f64,
    pub theta: f64,
    pub beta: f64,
    pub rho: f64,
}

impl ProximalParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive, got {v}"),
                })
            }
        };
        positive("gamma", self.gamma)?;
        positive("theta", self.theta)?;
        positive("rho", self.rho)?;
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: format!("must be >= 0, got {}", self.beta),
            });
        }
        Ok(())
    }

    pub fn shrink_threshold(&self) -> f64 {
        self.beta / (self.gamma + 1.0)
    }
}

/// Iterates of the inner solver. Owned by a single solver run.
#[derive(Debug, Clone)]
pub struct ProximalState {
    pub params: ProximalParams,
    /// `k x n`, one row per task.
    pub w: DMatrix<f64>,
    /// Flat, task-major.
    pub m: Vec<f64>,
    pub lambda: Vec<f64>,
    pinv: Vec<DMatrix<f64>>,
}

/// Per-sweep record of [`ProximalState::solve_inner`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InnerReport {
    pub objectives: Vec<f64>,
    pub sweeps: usize,
}

impl ProximalState {
    /// Zero W and lambda; M starts at `m0`.
    pub fn new(data: &TaskDataset, params: ProximalParams, m0: Vec<f64>) -> Result<Self> {
        params.validate()?;
        if m0.len() != data.len() {
            return Err(Error::LengthMismatch {
                expected: data.len(),
                actual: m0.len(),
            });
        }
        Ok(Self {
            params,
            w: DMatrix::zeros(data.k(), data.n()),
            m: m0,
            lambda: vec![0.0; data.len()],
            pinv: data.features().iter().map(pseudo_inverse).collect(),
        })
    }

    pub fn pinv_cache(&self) -> &[DMatrix<f64>] {
        &self.pinv
    }

    /// The intermediate `c^j` before shrinkage.
    pub fn group_centers(&self, data: &TaskDataset) -> Vec<DVector<f64>> {
        let h = data.h();
        let g = self.params.gamma;
        data.targets()
            .iter()
            .enumerate()
            .map(|(j, y)| {
                let rhs = DVector::from_iterator(
                    h,
                    (0..h).map(|r| y[r] + g * self.m[j * h + r] + self.lambda[j * h + r]),
                ) / (1.0 + g);
                &self.pinv[j] * rhs
            })
            .collect()
    }

    pub fn update_w_group_shrink(&mut self, data: &TaskDataset) {
        let threshold = self.params.shrink_threshold();
        for (j, c) in self.group_centers(data).iter().enumerate() {
            let row = group_shrink(c, threshold);
            self.w.set_row(j, &row.transpose());
        }
    }

    pub fn update_m_quadratic(&mut self, data: &TaskDataset, m_s: &[f64], v: &[f64]) {
        let ProximalParams { rho, gamma, .. } = self.params;
        let xw = data.predict(&self.w);
        for i in 0..self.m.len() {
            self.m[i] = (rho * (m_s[i] - v[i]) - self.lambda[i] + gamma * xw[i]) / (rho + gamma);
        }
    }

    pub fn update_lambda(&mut self, data: &TaskDataset) {
        let theta = self.params.theta;
        let xw = data.predict(&self.w);
        for i in 0..self.lambda.len() {
            self.lambda[i] -= theta * (xw[i] - self.m[i]);
        }
    }

    /// `1/2 ||XW - Y||^2 + beta ||W||_{2,1}`.
    pub fn loss(&self, data: &TaskDataset) -> f64 {
        let xw = data.predict(&self.w);
        let fit: f64 = xw
            .iter()
            .zip(data.targets().iter().flat_map(|y| y.iter()))
            .map(|(p, y)| (p - y).powi(2))
            .sum();
        let group: f64 = self.w.row_iter().map(|r| r.norm()).sum();
        0.5 * fit + self.params.beta * group
    }

    /// `1/2 ||XW - Y||^2 + beta ||W||_{2,1} + rho/2 ||M - M_S + V||^2`.
    pub fn objective(&self, data: &TaskDataset, m_s: &[f64], v: &[f64]) -> f64 {
        let prox: f64 = (0..self.m.len())
            .map(|i| (self.m[i] - m_s[i] + v[i]).powi(2))
            .sum();
        self.loss(data) + 0.5 * self.params.rho * prox
    }

    /// Run up to `iters` W/M/lambda sweeps, stopping early once both the
    /// primal residual `||XW - M||_inf` and the change in W fall below
    /// [`INNER_TOL`].
    pub fn solve_inner(
        &mut self,
        data: &TaskDataset,
        m_s: &[f64],
        v: &[f64],
        iters: usize,
    ) -> Result<InnerReport> {
        if iters == 0 {
            return Err(Error::InvalidParameter {
                name: "inner_iters",
                reason: "must be at least 1".into(),
            });
        }
        for len in [m_s.len(), v.len()] {
            if len != data.len() {
                return Err(Error::LengthMismatch {
                    expected: data.len(),
                    actual: len,
                });
            }
        }
        let mut report = InnerReport::default();
        for _ in 0..iters {
            let w_prev = self.w.clone();
            self.update_w_group_shrink(data);
            self.update_m_quadratic(data, m_s, v);
            self.update_lambda(data);
            report.objectives.push(self.objective(data, m_s, v));
            report.sweeps += 1;

            let xw = data.predict(&self.w);
            let residual = xw
                .iter()
                .zip(&self.m)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            let w_change = (&self.w - &w_prev).abs().max();
            if residual < INNER_TOL && w_change < INNER_TOL {
                break;
            }
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Group;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut impl Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn params(beta: f64) -> ProximalParams {
        ProximalParams {
            gamma: 1.0,
            theta: 0.01,
            beta,
            rho: 0.001,
        }
    }

    #[test]
    fn moore_penrose_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..40 {
            let r = rng.random_range(1..=50);
            let c = rng.random_range(1..=20);
            let mut a = random_matrix(&mut rng, r, c);
            if rng.random_bool(0.3) && c > 1 {
                // rank deficient: duplicate a column
                let col = a.column(0).clone_owned();
                a.set_column(c - 1, &col);
            }
            let p = pseudo_inverse(&a);
            let tol = 1e-8;
            assert!((&a * &p * &a - &a).abs().max() < tol);
            assert!((&p * &a * &p - &p).abs().max() < tol);
            assert!(((&a * &p).transpose() - &a * &p).abs().max() < tol);
            assert!(((&p * &a).transpose() - &p * &a).abs().max() < tol);
        }
    }

    #[test]
    fn pinv_of_zero_is_zero() {
        assert_eq!(pseudo_inverse(&DMatrix::zeros(3, 2)), DMatrix::zeros(2, 3));
    }

    #[test]
    fn shrink_examples() {
        let c = DVector::from_vec(vec![3.0, 4.0]);
        let w = group_shrink(&c, 1.0);
        assert!((w[0] - 2.4).abs() < 1e-15 && (w[1] - 3.2).abs() < 1e-15);
        assert_eq!(group_shrink(&c, 0.0), c);
        assert_eq!(group_shrink(&c, 5.0), DVector::zeros(2));
        assert_eq!(group_shrink(&DVector::zeros(2), 0.0), DVector::zeros(2));
    }

    #[test]
    fn shrink_boundary_is_exact() {
        let c = DVector::from_vec(vec![0.6, 0.8]);
        let norm = c.norm();
        assert!(group_shrink(&c, norm).iter().all(|&v| v == 0.0));
        assert!(group_shrink(&c, norm + 1e-12).iter().all(|&v| v == 0.0));
        assert!(group_shrink(&c, norm - 1e-12).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn shrink_never_grows_the_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..200 {
            let c = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
            let t = rng.random_range(0.0..3.0);
            let w = group_shrink(&c, t);
            assert!(w.norm() <= c.norm() + 1e-15);
            if t > 0.0 {
                assert!(w.norm() < c.norm());
            }
        }
    }

    fn single_task(x: DMatrix<f64>, y: Vec<f64>) -> TaskDataset {
        let h = x.nrows();
        TaskDataset::new(vec![x], vec![DVector::from_vec(y)], vec![Group::A; h]).unwrap()
    }

    #[test]
    fn m_update_by_hand() {
        let d = single_task(DMatrix::zeros(1, 1), vec![0.0]);
        let mut s = ProximalState::new(
            &d,
            ProximalParams {
                gamma: 1.0,
                theta: 0.01,
                beta: 0.0,
                rho: 1.0,
            },
            vec![0.0],
        )
        .unwrap();
        s.update_m_quadratic(&d, &[2.0], &[0.0]);
        assert_eq!(s.m, vec![1.0]);
    }

    #[test]
    fn m_update_consensus_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = single_task(random_matrix(&mut rng, 4, 2), vec![1.0, 2.0, 3.0, 4.0]);
        let mut s = ProximalState::new(&d, params(0.0), vec![0.0; 4]).unwrap();
        s.w = DMatrix::from_row_slice(1, 2, &[0.5, -1.0]);
        let xw = d.predict(&s.w);
        s.update_m_quadratic(&d, &xw, &[0.0; 4]);
        for (a, b) in s.m.iter().zip(&xw) {
            assert!((a - b).abs() < 1e-12);
        }
        // penalty dominance
        s.params.gamma = 1e12;
        s.update_m_quadratic(&d, &[100.0; 4], &[0.0; 4]);
        for (a, b) in s.m.iter().zip(&xw) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn lambda_updates() {
        let d = single_task(DMatrix::from_element(2, 1, 1.0), vec![0.0, 0.0]);
        let mut s = ProximalState::new(&d, params(0.0), vec![0.0; 2]).unwrap();
        s.w[(0, 0)] = 1.0;
        // zero residual leaves lambda alone
        s.m = vec![1.0, 1.0];
        s.update_lambda(&d);
        assert_eq!(s.lambda, vec![0.0, 0.0]);
        // residual of one per entry
        s.m = vec![0.0, 0.0];
        s.update_lambda(&d);
        assert_eq!(s.lambda, vec![-0.01, -0.01]);
        s.update_lambda(&d);
        assert!((s.lambda[0] + 0.02).abs() < 1e-15);
    }

    #[test]
    fn zero_problem_stays_zero() {
        let d = single_task(DMatrix::zeros(3, 2), vec![0.0; 3]);
        let mut s = ProximalState::new(&d, params(0.5), vec![0.0; 3]).unwrap();
        s.solve_inner(&d, &[0.0; 3], &[0.0; 3], 1).unwrap();
        assert_eq!(s.w, DMatrix::zeros(1, 2));
        assert_eq!(s.m, vec![0.0; 3]);
    }

    #[test]
    fn square_system_converges_to_inverse_solution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_matrix(&mut rng, 4, 4) + DMatrix::identity(4, 4) * 2.0;
        let y: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let expected = x.clone().lu().solve(&DVector::from_vec(y.clone())).unwrap();
        let d = single_task(x, y);
        let mut s = ProximalState::new(
            &d,
            ProximalParams {
                gamma: 1.0,
                theta: 0.01,
                beta: 0.0,
                rho: 1e-9,
            },
            vec![0.0; 4],
        )
        .unwrap();
        // rho -> 0: the proximal anchor is irrelevant.
        for _ in 0..20 {
            let anchor = s.m.clone();
            s.solve_inner(&d, &anchor, &[0.0; 4], 50).unwrap();
        }
        let w = s.w.row(0).transpose();
        assert!((&w - &expected).norm() / expected.norm() < 1e-4);
    }

    #[test]
    fn objective_is_finite_and_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = single_task(
            random_matrix(&mut rng, 6, 3),
            (0..6).map(|i| i as f64).collect(),
        );
        let mut s = ProximalState::new(&d, params(0.3), vec![0.5; 6]).unwrap();
        let r = s.solve_inner(&d, &[0.2; 6], &[0.1; 6], 30).unwrap();
        assert!(r.objectives.iter().all(|o| o.is_finite() && *o >= 0.0));
        assert!(s.solve_inner(&d, &[0.2; 6], &[0.1; 6], 0).is_err());
    }

    #[test]
    fn rejects_bad_params() {
        let d = single_task(DMatrix::zeros(1, 1), vec![0.0]);
        for p in [
            ProximalParams {
                gamma: 0.0,
                ..params(0.0)
            },
            ProximalParams {
                theta: -1.0,
                ..params(0.0)
            },
            ProximalParams {
                rho: 0.0,
                ..params(0.0)
            },
            params(-0.1),
        ] {
            assert!(ProximalState::new(&d, p, vec![0.0]).is_err());
        }
    }
}
