//! Primal-dual splitting for
//!
//! ```text
//! min_{||b|| <= R}  b^T H b - 2 q^T b + c0 + lambda ||A b - c||
//! ```
//!
//! The norm term is dualised, `lambda ||r|| = max_{||u|| <= lambda} u^T r`, so
//! every step is a gradient step on the quadratic, a projection onto the
//! primal ball and a radial projection onto the dual ball (Condat-Vu). The
//! dual function is evaluated exactly with [`BallQuadratic`], which gives a
//! certified primal-dual gap.

use nalgebra::{DMatrix, DVector};

use super::ball_qp::BallQuadratic;
use crate::diff_ops::{AffineSubspace, PenaltyForm};
use crate::error::Result;
use crate::poly_space::project_euclidean_ball;

const GAP_CHECK_EVERY: usize = 20;

pub(crate) struct SoftNormProblem<'a> {
    pub h: &'a DMatrix<f64>,
    pub q: &'a DVector<f64>,
    /// Constant `||y||^2 / n`.
    pub c0: f64,
    pub form: &'a PenaltyForm,
    pub lambda: f64,
    pub radius: f64,
    pub qp: &'a BallQuadratic,
    pub bisection_tol: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct PrimalDualOutcome {
    pub b: DVector<f64>,
    pub primal: f64,
    pub dual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Gap relative to `1 + primal`; the objective is nonnegative.
pub(crate) fn relative_gap(primal: f64, dual: f64) -> f64 {
    (primal - dual).max(0.0) / (1.0 + primal.abs())
}

impl SoftNormProblem<'_> {
    pub fn smooth(&self, b: &DVector<f64>) -> f64 {
        b.dot(&(self.h * b)) - 2.0 * self.q.dot(b) + self.c0
    }

    pub fn primal(&self, b: &DVector<f64>) -> f64 {
        self.smooth(b) + self.lambda * self.form.value(b)
    }

    /// `min_{||b|| <= R} f(b) + u^T (A b - c)` for `||u|| <= lambda`.
    pub fn dual(&self, u: &DVector<f64>) -> Result<f64> {
        let shifted = self.q - self.form.matrix.transpose() * u * 0.5;
        let sol = self.qp.solve(&shifted, self.radius, self.bisection_tol)?;
        Ok(self.smooth(&sol.b) + u.dot(&(&self.form.matrix * &sol.b - &self.form.rhs)))
    }

    /// Dual certificate for a candidate on the kink `A b = c`: least-squares
    /// multiplier from the stationarity condition, clipped to the dual ball.
    pub fn kink_multiplier(&self, b: &DVector<f64>, nu: f64) -> DVector<f64> {
        let grad = (self.h * b - self.q + b * nu) * 2.0;
        let at = self.form.matrix.transpose();
        let svd = at.svd(true, true);
        let u = svd.solve(&(-grad), 1e-12).unwrap_or_else(|_| DVector::zeros(self.form.matrix.nrows()));
        project_euclidean_ball(&u, self.lambda)
    }

    pub fn solve(
        &self,
        start: &DVector<f64>,
        max_iters: usize,
        rel_tol: f64,
        candidates: &[(DVector<f64>, DVector<f64>)],
    ) -> Result<PrimalDualOutcome> {
        let a = &self.form.matrix;
        let at = a.transpose();
        let m = a.nrows();
        let mut best_b = project_euclidean_ball(start, self.radius);
        let mut best_primal = self.primal(&best_b);
        let mut best_dual = self.dual(&DVector::zeros(m))?;

        for (cb, cu) in candidates {
            let p = self.primal(cb);
            if p < best_primal {
                best_primal = p;
                best_b = cb.clone();
            }
            best_dual = best_dual.max(self.dual(cu)?);
        }
        if self.lambda == 0.0 || relative_gap(best_primal, best_dual) <= rel_tol {
            // With lambda = 0 the dual ball is {0} and D(0) is the exact optimum.
            if self.lambda == 0.0 {
                let sol = self.qp.solve(self.q, self.radius, self.bisection_tol)?;
                let p = self.primal(&sol.b);
                return Ok(PrimalDualOutcome { b: sol.b, primal: p, dual: best_dual, iterations: 0, converged: true });
            }
            return Ok(PrimalDualOutcome {
                b: best_b,
                primal: best_primal,
                dual: best_dual,
                iterations: 0,
                converged: true,
            });
        }

        let a_norm = operator_norm(a);
        let h_max = self.qp.max_eigenvalue().max(1e-12);
        // Condat-Vu: 1/tau - sigma ||A||^2 >= L/2 with L = 2 lambda_max(H).
        let sigma = h_max / (a_norm * a_norm).max(1e-300);
        let tau = 0.95 / (h_max + sigma * a_norm * a_norm);

        let mut b = best_b.clone();
        let mut u = DVector::zeros(m);
        let mut iterations = 0;
        let mut converged = false;
        while iterations < max_iters {
            iterations += 1;
            let grad = (self.h * &b - self.q) * 2.0 + &at * &u;
            let b_next = project_euclidean_ball(&(&b - grad * tau), self.radius);
            let extrap = &b_next * 2.0 - &b;
            u = project_euclidean_ball(&(&u + (a * extrap - &self.form.rhs) * sigma), self.lambda);
            b = b_next;

            if iterations % GAP_CHECK_EVERY == 0 {
                let p = self.primal(&b);
                if p < best_primal {
                    best_primal = p;
                    best_b = b.clone();
                }
                best_dual = best_dual.max(self.dual(&u)?);
                if relative_gap(best_primal, best_dual) <= rel_tol {
                    converged = true;
                    break;
                }
            }
        }
        Ok(PrimalDualOutcome { b: best_b, primal: best_primal, dual: best_dual, iterations, converged })
    }
}

/// Largest singular value by power iteration on `A^T A`.
pub(crate) fn operator_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    let ata = a.transpose() * a;
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64) * 1e-3);
    v /= v.norm();
    let mut est = 0.0;
    for _ in 0..500 {
        let w = &ata * &v;
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        let next = nw.sqrt();
        v = w / nw;
        if (next - est).abs() <= 1e-12 * next {
            est = next;
            break;
        }
        est = next;
    }
    est
}

/// Hard-constraint candidate `argmin f` over `{A b = c} ∩ ball`, returned
/// with its ball multiplier, or `None` when the intersection is empty.
pub(crate) fn kink_candidate(
    h: &DMatrix<f64>,
    q: &DVector<f64>,
    subspace: &AffineSubspace,
    radius: f64,
    tol: f64,
) -> Result<Option<(DVector<f64>, f64)>> {
    let slack = radius * radius - subspace.offset.norm_squared();
    if slack < 0.0 {
        return Ok(None);
    }
    let n = &subspace.basis;
    if n.ncols() == 0 {
        return Ok(Some((subspace.offset.clone(), 0.0)));
    }
    let hz = n.transpose() * h * n;
    let qz = n.transpose() * (q - h * &subspace.offset);
    let qp = BallQuadratic::new(&hz);
    let sol = qp.solve(&qz, slack.sqrt(), tol)?;
    Ok(Some((subspace.point(&sol.b), sol.nu)))
}
