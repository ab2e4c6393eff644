//! Collocation approximations of the penalty and the sup-deviation
//! `sup_f |Psi_tilde(f) - Psi(f)|` over the ball.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diff_ops::{PenaltyForm, PenaltySpec};
use crate::error::{PislabError, Result};
use crate::poly_space::{design_matrix, evaluate, project_euclidean_ball, CoefficientVector, DomainConfig, FunctionClass};
use crate::rng;

pub const DEFAULT_PROBES: usize = 2000;
pub const ASCENT_STEPS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CollocationKind {
    FixedGrid,
    Random { seed: u64 },
}

impl CollocationKind {
    pub fn name(&self) -> &'static str {
        match self {
            CollocationKind::FixedGrid => "fixed_grid",
            CollocationKind::Random { .. } => "random",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollocationSet {
    pub points: Vec<(f64, f64)>,
    pub kind: CollocationKind,
}

impl CollocationSet {
    pub fn m(&self) -> usize {
        self.points.len()
    }
}

/// Equally spaced tensor grid including the endpoints, `m_per_axis^2` points.
pub fn fixed_grid(m_per_axis: usize, domain: &DomainConfig) -> Result<CollocationSet> {
    if m_per_axis == 0 {
        return Err(PislabError::Config("m_per_axis must be at least 1".into()));
    }
    let step = |k: usize, len: f64| {
        if m_per_axis == 1 {
            0.0
        } else {
            len * k as f64 / (m_per_axis - 1) as f64
        }
    };
    let mut points = Vec::with_capacity(m_per_axis * m_per_axis);
    for i in 0..m_per_axis {
        for j in 0..m_per_axis {
            points.push((step(i, 1.0), step(j, domain.t_max)));
        }
    }
    Ok(CollocationSet { points, kind: CollocationKind::FixedGrid })
}

/// `m` points drawn uniformly on the domain.
pub fn random_collocation(m: usize, domain: &DomainConfig, seed: u64) -> Result<CollocationSet> {
    if m == 0 {
        return Err(PislabError::Config("collocation needs at least one point".into()));
    }
    let mut r = rng::stream(seed, &[0xC011, m as u64]);
    let points = (0..m).map(|_| (r.random::<f64>(), r.random::<f64>() * domain.t_max)).collect();
    Ok(CollocationSet { points, kind: CollocationKind::Random { seed } })
}

/// `sqrt((1/m) sum (D h - g)(Z_i)^2)`.
pub fn psi_tilde(spec: &PenaltySpec, a: &CoefficientVector, colloc: &CollocationSet) -> Result<f64> {
    if colloc.m() == 0 {
        return Err(PislabError::Empty("collocation set is empty"));
    }
    let r = spec.residual(a)?;
    let vals = evaluate(&r, &colloc.points)?;
    Ok((vals.norm_squared() / colloc.m() as f64).sqrt())
}

/// `Psi_tilde` as a penalty form `||A b - c||` in orthonormal coordinates.
///
/// The `m` collocation rows are compressed by a QR factorisation, so the
/// form has at most `d + 1` rows whatever `m` is.
pub fn collocation_form(spec: &PenaltySpec, colloc: &CollocationSet) -> PenaltyForm {
    let d = spec.gram.dim();
    let m = colloc.m().max(1);
    let phi = design_matrix(&colloc.points, &spec.gram.domain)
        .map(|dm| dm.matrix)
        .unwrap_or_else(|_| DMatrix::zeros(1, d));
    let scale = 1.0 / (m as f64).sqrt();
    let op = &phi * &spec.operator.matrix * spec.gram.whitening.to_monomial() * scale;
    let rhs = &phi * &spec.forcing.coeffs * scale;
    let mut stacked = DMatrix::zeros(op.nrows(), d + 1);
    stacked.view_mut((0, 0), (op.nrows(), d)).copy_from(&op);
    stacked.set_column(d, &rhs);
    let reduced = if stacked.nrows() > d + 1 { stacked.qr().r() } else { stacked };
    PenaltyForm {
        matrix: reduced.columns(0, d).into_owned(),
        rhs: reduced.column(d).into_owned(),
    }
}

fn uniform_in_ball(r: &mut impl Rng, dim: usize, radius: f64) -> DVector<f64> {
    let mut v = DVector::from_fn(dim, |_, _| r.sample::<f64, _>(StandardNormal));
    let n = v.norm();
    if n > 0.0 {
        v /= n;
    }
    v * (radius * r.random::<f64>().powf(1.0 / dim as f64))
}

/// Gradient of `sqrt(||A b - c||^2 + eta^2)`.
fn smoothed_grad(form: &PenaltyForm, b: &DVector<f64>, eta: f64) -> DVector<f64> {
    let r = &form.matrix * b - &form.rhs;
    let denom = (r.norm_squared() + eta * eta).sqrt();
    form.matrix.transpose() * r / denom
}

/// Lower estimate of `sup_{f in class} |Psi_tilde(f) - Psi(f)|`: the best of
/// `probes` uniform ball points, refined by projected gradient ascent on the
/// smoothed deviation.
pub fn sup_deviation(
    spec: &PenaltySpec,
    class: &FunctionClass,
    colloc: &CollocationSet,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    if probes == 0 {
        return Err(PislabError::Config("probes must be at least 1".into()));
    }
    let exact = spec.form();
    let approx = collocation_form(spec, colloc);
    sup_deviation_forms(&exact, &approx, class.radius, probes, seed)
}

pub(crate) fn sup_deviation_forms(
    exact: &PenaltyForm,
    approx: &PenaltyForm,
    radius: f64,
    probes: usize,
    seed: u64,
) -> Result<f64> {
    let dim = exact.dim();
    let dev = |b: &DVector<f64>| approx.value(b) - exact.value(b);
    let scored: Vec<(f64, usize)> = (0..probes)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::stream(seed, &[0x5D, k as u64]);
            let b = uniform_in_ball(&mut r, dim, radius);
            (dev(&b).abs(), k)
        })
        .collect();
    let (_, best_k) = scored
        .iter()
        .copied()
        .fold((f64::NEG_INFINITY, 0), |acc, s| if s.0 > acc.0 { s } else { acc });
    let mut b = uniform_in_ball(&mut rng::stream(seed, &[0x5D, best_k as u64]), dim, radius);
    let sign = dev(&b).signum();
    let objective = |b: &DVector<f64>| sign * dev(b);
    let mut best = objective(&b);
    let eta = 1e-8 * radius.max(1.0);
    let mut step = radius * 0.1;
    for _ in 0..ASCENT_STEPS {
        let g = (smoothed_grad(approx, &b, eta) - smoothed_grad(exact, &b, eta)) * sign;
        let gn = g.norm();
        if gn == 0.0 || !gn.is_finite() {
            break;
        }
        let cand = project_euclidean_ball(&(&b + g * (step / gn)), radius);
        let val = objective(&cand);
        if val > best {
            best = val;
            b = cand;
            step *= 1.5;
        } else {
            step *= 0.5;
        }
    }
    Ok(best.max(0.0))
}
