//! Quadratic-penalty least squares for problems of the form
//!
//! ```text
//! minimise |A x|²  subject to  c(x) = 0
//! ```
//!
//! with `A` linear and invertible and `c` smooth. Each penalty weight in
//! the schedule is handled by Levenberg–Marquardt on the stacked residual
//! `[A x; sqrt(mu) c(x)]`; a final Gauss–Newton projection in the
//! `AᵀA` metric restores feasibility to roundoff.

use nalgebra::{DMatrix, DVector};

/// Central-difference step for constraint Jacobians.
pub const FD_STEP: f64 = 1e-5;

#[derive(Clone, Debug)]
pub struct PenaltySchedule {
    pub weights: Vec<f64>,
    pub max_iter: usize,
    pub polish_iter: usize,
}

impl Default for PenaltySchedule {
    fn default() -> Self {
        Self {
            weights: vec![1e2, 1e3, 1e4, 1e5, 1e6, 1e7],
            max_iter: 200,
            polish_iter: 30,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PenaltyOutcome {
    pub x: Vec<f64>,
    /// `|A x|²` at the returned point.
    pub objective: f64,
    /// Constraint values at the returned point.
    pub constraint: Vec<f64>,
    pub iterations: usize,
}

/// Central-difference Jacobian of `f` at `x`.
pub fn fd_jacobian(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[f64], rows: usize) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(rows, x.len());
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let orig = xp[j];
        xp[j] = orig + FD_STEP;
        let fp = f(&xp);
        xp[j] = orig - FD_STEP;
        let fm = f(&xp);
        xp[j] = orig;
        for i in 0..rows {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * FD_STEP);
        }
    }
    jac
}

fn sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn solve(
    a: &DMatrix<f64>,
    constraint: &dyn Fn(&[f64]) -> Vec<f64>,
    x0: &[f64],
    schedule: &PenaltySchedule,
) -> PenaltyOutcome {
    let nvar = x0.len();
    let ata = a.transpose() * a;
    let mut x = DVector::from_column_slice(x0);
    let mut c = constraint(x.as_slice());
    let rows = c.len();
    let mut iterations = 0;

    for &mu in &schedule.weights {
        let merit = |x: &DVector<f64>, c: &[f64]| (a * x).norm_squared() + mu * sq(c);
        let mut f = merit(&x, &c);
        let mut lambda = 1e-3;
        let mut jc = fd_jacobian(constraint, x.as_slice(), rows);
        for _ in 0..schedule.max_iter {
            iterations += 1;
            let cv = DVector::from_column_slice(&c);
            let grad = &ata * &x + mu * jc.transpose() * &cv;
            let hess = &ata + mu * jc.transpose() * &jc;
            let scale = hess.trace() / nvar as f64;
            let mut accepted = false;
            for _ in 0..30 {
                let damped = &hess + DMatrix::identity(nvar, nvar) * (lambda * scale);
                let Some(chol) = damped.cholesky() else {
                    lambda *= 4.0;
                    continue;
                };
                let step = -chol.solve(&grad);
                let trial = &x + &step;
                let ct = constraint(trial.as_slice());
                let ft = merit(&trial, &ct);
                if ft < f {
                    let done = step.norm() <= 1e-13 * (1.0 + x.norm()) || (f - ft) <= 1e-15 * f;
                    x = trial;
                    c = ct;
                    f = ft;
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = !done;
                    break;
                }
                lambda *= 4.0;
                if lambda > 1e12 {
                    break;
                }
            }
            if !accepted {
                break;
            }
            jc = fd_jacobian(constraint, x.as_slice(), rows);
        }
    }

    // Feasibility restoration: minimum AᵀA-norm corrections.
    if let Some(m_chol) = ata.clone().cholesky() {
        for _ in 0..schedule.polish_iter {
            if sq(&c).sqrt() < 1e-15 {
                break;
            }
            let jc = fd_jacobian(constraint, x.as_slice(), rows);
            let minv_jt = m_chol.solve(&jc.transpose());
            let gram = &jc * &minv_jt;
            let reg = 1e-14 * gram.trace().max(1e-300) / rows as f64;
            let gram = gram + DMatrix::identity(rows, rows) * reg;
            let Some(g_chol) = gram.cholesky() else { break };
            let cv = DVector::from_column_slice(&c);
            let step = -(&minv_jt * g_chol.solve(&cv));
            let trial = &x + &step;
            let ct = constraint(trial.as_slice());
            if sq(&ct) >= sq(&c) {
                break;
            }
            x = trial;
            c = ct;
        }
    }

    PenaltyOutcome {
        objective: (a * &x).norm_squared(),
        x: x.iter().copied().collect(),
        constraint: c,
        iterations,
    }
}
