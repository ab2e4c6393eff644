//! `min b^T H b - 2 q^T b` subject to `||b|| <= R`, for symmetric positive
//! semidefinite `H`.
//!
//! The stationarity condition is `(H + nu I) b = q` with `nu >= 0` and
//! `nu (||b|| - R) = 0`. `H` is diagonalised once; each right-hand side then
//! costs one bisection on `nu`.

use nalgebra::{DMatrix, DVector};

use crate::error::{PislabError, Result};

const MAX_BISECTIONS: usize = 400;

#[derive(Debug, Clone)]
pub(crate) struct BallQuadratic {
    eigvals: DVector<f64>,
    eigvecs: DMatrix<f64>,
    null_cut: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct BallSolution {
    pub b: DVector<f64>,
    pub nu: f64,
    pub iterations: usize,
}

impl BallQuadratic {
    pub fn new(h: &DMatrix<f64>) -> Self {
        let sym = (h + h.transpose()) * 0.5;
        let eig = sym.symmetric_eigen();
        let eigvals = eig.eigenvalues.map(|v| v.max(0.0));
        let scale = eigvals.max().max(f64::MIN_POSITIVE);
        Self { eigvals, eigvecs: eig.eigenvectors, null_cut: 1e-12 * scale }
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.eigvals.max()
    }

    fn solution(&self, qhat: &DVector<f64>, nu: f64) -> DVector<f64> {
        let coords = DVector::from_fn(qhat.len(), |i, _| {
            let denom = self.eigvals[i] + nu;
            if denom > self.null_cut || nu > 0.0 {
                qhat[i] / denom
            } else {
                0.0
            }
        });
        &self.eigvecs * coords
    }

    fn norm_at(&self, qhat: &DVector<f64>, nu: f64) -> f64 {
        qhat.iter()
            .zip(self.eigvals.iter())
            .map(|(&q, &l)| {
                let denom = l + nu;
                if denom > self.null_cut || nu > 0.0 {
                    (q / denom).powi(2)
                } else if q.abs() > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn solve(&self, q: &DVector<f64>, radius: f64, tol: f64) -> Result<BallSolution> {
        let qnorm = q.norm();
        if qnorm == 0.0 {
            return Ok(BallSolution { b: DVector::zeros(q.len()), nu: 0.0, iterations: 0 });
        }
        let qhat = self.eigvecs.transpose() * q;
        // Unconstrained minimum-norm solution, valid when q lies in range(H).
        let in_range = qhat
            .iter()
            .zip(self.eigvals.iter())
            .all(|(&c, &l)| l > self.null_cut || c.abs() <= 1e-12 * qnorm);
        if in_range {
            let trimmed = DVector::from_fn(qhat.len(), |i, _| {
                if self.eigvals[i] > self.null_cut {
                    qhat[i]
                } else {
                    0.0
                }
            });
            if self.norm_at(&trimmed, 0.0) <= radius {
                return Ok(BallSolution { b: self.solution(&trimmed, 0.0), nu: 0.0, iterations: 0 });
            }
        }
        if radius <= 0.0 {
            return Ok(BallSolution { b: DVector::zeros(q.len()), nu: f64::INFINITY, iterations: 0 });
        }
        let mut lo = 0.0;
        let mut hi = qnorm / radius;
        if self.norm_at(&qhat, hi) > radius * (1.0 + tol) {
            return Err(PislabError::Solver(format!(
                "ball multiplier bracket failed: norm {} at nu {hi} exceeds radius {radius}",
                self.norm_at(&qhat, hi)
            )));
        }
        let mut iterations = 0;
        let mut nu = hi;
        while iterations < MAX_BISECTIONS {
            iterations += 1;
            let mid = 0.5 * (lo + hi);
            let norm = self.norm_at(&qhat, mid);
            if (norm - radius).abs() <= tol * radius {
                nu = mid;
                break;
            }
            if norm > radius {
                lo = mid;
            } else {
                hi = mid;
            }
            nu = hi;
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                break;
            }
        }
        Ok(BallSolution { b: self.solution(&qhat, nu), nu, iterations })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random_psd(d: usize, rank: usize, seed: u64) -> DMatrix<f64> {
        let mut r = rng::stream(seed, &[]);
        let a = DMatrix::from_fn(rank, d, |_, _| r.random_range(-1.0..1.0));
        a.transpose() * a
    }

    #[test]
    fn interior_solution_solves_normal_equations() {
        let h = random_psd(5, 8, 1);
        let q = DVector::from_vec(vec![0.1, -0.2, 0.05, 0.0, 0.3]);
        let qp = BallQuadratic::new(&h);
        let s = qp.solve(&q, 1e6, 1e-12).unwrap();
        assert_eq!(s.nu, 0.0);
        assert!((&h * &s.b - &q).norm() < 1e-10);
    }

    #[test]
    fn active_ball_satisfies_kkt() {
        let h = random_psd(6, 10, 2);
        let q = DVector::from_fn(6, |i, _| 3.0 + i as f64);
        let qp = BallQuadratic::new(&h);
        let s = qp.solve(&q, 0.01, 1e-12).unwrap();
        assert!(s.nu > 0.0);
        assert!((s.b.norm() - 0.01).abs() < 1e-10);
        let kkt = (&h * &s.b + &s.b * s.nu - &q).norm();
        assert!(kkt < 1e-8 * q.norm(), "kkt residual {kkt}");
    }

    #[test]
    fn singular_hessian_outside_range_needs_multiplier() {
        let h = random_psd(6, 3, 3);
        let q = DVector::from_fn(6, |i, _| if i % 2 == 0 { 1.0 } else { -0.5 });
        let qp = BallQuadratic::new(&h);
        let s = qp.solve(&q, 2.0, 1e-12).unwrap();
        assert!((s.b.norm() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let qp = BallQuadratic::new(&random_psd(4, 4, 4));
        let s = qp.solve(&DVector::zeros(4), 1.0, 1e-12).unwrap();
        assert_eq!(s.b.norm(), 0.0);
    }

    #[test]
    fn beats_random_feasible_points() {
        let h = random_psd(5, 5, 5);
        let q = DVector::from_fn(5, |i, _| (i as f64 - 2.0) * 4.0);
        let qp = BallQuadratic::new(&h);
        let s = qp.solve(&q, 0.7, 1e-12).unwrap();
        let obj = |b: &DVector<f64>| b.dot(&(&h * b)) - 2.0 * q.dot(b);
        let best = obj(&s.b);
        let mut r = rng::stream(6, &[]);
        for _ in 0..2000 {
            let mut b = DVector::from_fn(5, |_, _| r.random_range(-1.0..1.0));
            if b.norm() > 0.7 {
                b *= 0.7 / b.norm();
            }
            assert!(obj(&b) >= best - 1e-10);
        }
    }
}
