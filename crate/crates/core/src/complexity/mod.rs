//! Monte Carlo estimates of the local Rademacher parameters `r_Q` and `r_M`,
//! the multiplier oscillation quantile `gamma_O`, the critical weight
//! `lambda_0`, small-ball constants and the excess-loss decomposition.
//!
//! Every supremum over a class of functions is a supremum of a linear
//! functional of the orthonormal coefficients over an intersection of
//! balls and a penalty ellipsoid; see [`geometry`].

mod geometry;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diff_ops::PenaltySpec;
use crate::error::{PislabError, Result};
use crate::estimators::Dataset;
use crate::poly_space::{evaluate, orthonormal_design, CoefficientVector, DomainConfig, FunctionClass, GramMatrix};
use crate::rng;

use geometry::PreparedSet;

/// Distribution of the additive noise `e` in `Y = u*(X) + e`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseModel {
    #[default]
    None,
    Gaussian { sigma: f64 },
    StudentT { nu: f64, scale: f64 },
}

impl NoiseModel {
    pub fn sample(&self, r: &mut impl Rng) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::Gaussian { sigma } => sigma * r.sample::<f64, _>(StandardNormal),
            NoiseModel::StudentT { nu, scale } => {
                scale * StudentT::new(nu).expect("validated degrees of freedom").sample(r)
            }
        }
    }

    /// `E e^2`; infinite for Student-t with `nu <= 2`.
    pub fn second_moment(&self) -> f64 {
        match *self {
            NoiseModel::None => 0.0,
            NoiseModel::Gaussian { sigma } => sigma * sigma,
            NoiseModel::StudentT { nu, scale } if nu > 2.0 => scale * scale * nu / (nu - 2.0),
            NoiseModel::StudentT { .. } => f64::INFINITY,
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, NoiseModel::None)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            NoiseModel::None => true,
            NoiseModel::Gaussian { sigma } => sigma >= 0.0 && sigma.is_finite(),
            NoiseModel::StudentT { nu, scale } => nu > 0.0 && scale >= 0.0 && scale.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(PislabError::Config(format!("invalid noise model {self:?}")))
        }
    }
}

/// Penalty constraint `Psi(f) <= bound`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsiLevel {
    pub spec: PenaltySpec,
    pub bound: f64,
}

/// Intersection of the class ball, an optional ball around the centre and
/// an optional penalty level set.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSet {
    pub gram: GramMatrix,
    pub ball_radius: f64,
    pub center: CoefficientVector,
    pub locality_radius: Option<f64>,
    pub psi_level: Option<PsiLevel>,
}

impl ConstraintSet {
    pub fn ball(class: &FunctionClass, center: CoefficientVector) -> Self {
        Self { gram: class.gram.clone(), ball_radius: class.radius, center, locality_radius: None, psi_level: None }
    }

    pub fn with_locality(&self, r: f64) -> Self {
        Self { locality_radius: Some(r), ..self.clone() }
    }

    pub fn with_psi_level(&self, spec: PenaltySpec, bound: f64) -> Self {
        Self { psi_level: Some(PsiLevel { spec, bound }), ..self.clone() }
    }

    /// Membership up to `tol` in Gram-norm units.
    pub fn contains(&self, a: &CoefficientVector, tol: f64) -> Result<bool> {
        a.check_compatible(&self.gram.domain)?;
        Ok(self.prepare()?.contains(&self.gram.whitening.whiten(&a.coeffs), tol))
    }

    fn prepare(&self) -> Result<PreparedSet> {
        self.center.check_compatible(&self.gram.domain)?;
        let centre = self.gram.whitening.whiten(&self.center.coeffs);
        let penalty = self.psi_level.as_ref().map(|l| (l.spec.form(), l.bound));
        PreparedSet::new(self.ball_radius, centre, self.locality_radius, penalty)
    }
}

/// Family `F(rho, Psi) = {f in class : Psi(f) <= Psi(h*) + rho}` around `f*`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyFamily {
    pub class: FunctionClass,
    pub f_star: CoefficientVector,
    pub spec: PenaltySpec,
    pub psi_hstar: f64,
}

impl PenaltyFamily {
    pub fn full(&self) -> ConstraintSet {
        ConstraintSet::ball(&self.class, self.f_star.clone())
    }

    pub fn level_set(&self, rho: f64) -> ConstraintSet {
        self.full().with_psi_level(self.spec.clone(), self.psi_hstar + rho)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SupLinear {
    pub value: f64,
    pub maximizer: CoefficientVector,
    /// False when a random feasible probe beat the ascent.
    pub certified: bool,
}

/// `max |v^T (a - center)|` over the set, with `v` acting on monomial coefficients.
pub fn sup_linear(v: &DVector<f64>, set: &ConstraintSet) -> Result<SupLinear> {
    crate::error::check_dim(set.gram.dim(), v.len())?;
    let prepared = set.prepare()?;
    let g = set.gram.whitening.to_monomial().transpose() * v;
    let m = prepared.sup_linear(&g, Some(0))?;
    Ok(SupLinear {
        value: m.value,
        maximizer: CoefficientVector { domain: set.gram.domain, coeffs: set.gram.whitening.unwhiten(&m.maximiser) },
        certified: m.certified,
    })
}

/// Largest `|v^T (a - center)|` over `probes` random points of the set: uniform
/// draws from the smallest ball pulled back towards a feasible point. A lower
/// bound on the supremum, used to cross-check `sup_linear`.
pub fn probe_sup(v: &DVector<f64>, set: &ConstraintSet, probes: usize, seed: u64) -> Result<f64> {
    crate::error::check_dim(set.gram.dim(), v.len())?;
    let prepared = set.prepare()?;
    let g = set.gram.whitening.to_monomial().transpose() * v;
    let centre = set.gram.whitening.whiten(&set.center.coeffs);
    const CHUNK: usize = 10_000;
    let chunks = probes.div_ceil(CHUNK);
    let best = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(seed, &[0x9B0E, c as u64]);
            let count = CHUNK.min(probes - c * CHUNK);
            (0..count).map(|_| g.dot(&(prepared.random_point(&mut r) - &centre)).abs()).fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(best)
}

/// Number of points of the default radius grid.
pub const GRID_POINTS: usize = 25;

/// `points` log-spaced radii spanning `[1e-4 K, 2 K]`.
pub fn radius_grid(k: f64, points: usize) -> Vec<f64> {
    let (lo, hi) = ((1e-4 * k).ln(), (2.0 * k).ln());
    if points == 1 {
        return vec![2.0 * k];
    }
    (0..points).map(|i| (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp()).collect()
}

/// Monte Carlo sizes shared by the estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarlo {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
}

/// Target and noise that generate `xi = f*(X) - u*(X) - e`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSource {
    pub u_star: CoefficientVector,
    pub noise: NoiseModel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityEstimate {
    pub value: f64,
    pub grid: Vec<f64>,
    /// Monte Carlo statistic at each grid point (mean or quantile).
    pub curve: Vec<f64>,
    pub reps: usize,
    pub seed: u64,
    pub standard_error: Option<f64>,
    /// The criterion never held on the grid; `value` is the grid maximum.
    pub right_censored: bool,
    /// The criterion already held at the smallest radius; `value` is the grid minimum.
    pub left_censored: bool,
}

impl ComplexityEstimate {
    pub fn censored(&self) -> bool {
        self.left_censored || self.right_censored
    }
}

fn check_mc(mc: &MonteCarlo, tau: f64) -> Result<()> {
    if mc.n == 0 || mc.reps == 0 {
        return Err(PislabError::Config("n and reps must be at least 1".into()));
    }
    if !(tau > 0.0) {
        return Err(PislabError::Config(format!("tau must be positive, got {tau}")));
    }
    Ok(())
}

fn check_delta(delta: f64, reps: usize) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(PislabError::Config(format!("delta must lie in (0, 1), got {delta}")));
    }
    if (reps as f64) < 20.0 / delta {
        return Err(PislabError::Config(format!("reps = {reps} is below 20 / delta = {}", 20.0 / delta)));
    }
    Ok(())
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|&r| !(r > 0.0)) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(PislabError::Config("radius grid must be nonempty, positive and increasing".into()));
    }
    Ok(())
}

/// Uniform points on the domain.
pub fn sample_points(domain: &DomainConfig, n: usize, r: &mut impl Rng) -> Vec<(f64, f64)> {
    (0..n).map(|_| (r.random::<f64>(), r.random::<f64>() * domain.t_max)).collect()
}

fn rademacher(r: &mut impl Rng) -> f64 {
    if r.random::<bool>() {
        1.0
    } else {
        -1.0
    }
}

/// Smallest grid radius whose statistic meets `stat <= bound(r)`, linearly
/// interpolated in `log r` between the bracketing grid points.
fn first_crossing(grid: &[f64], curve: &[f64], bound: impl Fn(f64) -> f64) -> (f64, usize, bool, bool) {
    if curve.iter().all(|&c| c == 0.0) {
        return (0.0, 0, false, false);
    }
    let excess: Vec<f64> = grid.iter().zip(curve).map(|(&r, &c)| c / bound(r) - 1.0).collect();
    match excess.iter().position(|&e| e <= 0.0) {
        None => (*grid.last().expect("nonempty grid"), grid.len() - 1, true, false),
        Some(0) => (grid[0], 0, false, true),
        Some(i) => {
            let (x0, x1) = (grid[i - 1].ln(), grid[i].ln());
            let (e0, e1) = (excess[i - 1], excess[i]);
            let x = x0 + (x1 - x0) * e0 / (e0 - e1);
            (x.exp(), i, false, false)
        }
    }
}

fn prepare_grid(base: &ConstraintSet, grid: &[f64]) -> Result<Vec<PreparedSet>> {
    grid.iter().map(|&r| base.with_locality(r).prepare()).collect()
}

/// Sups of `|g_rep^T (b - b*)|` for every replicate and grid set.
fn sup_table(
    sets: &[PreparedSet],
    reps: usize,
    functional: impl Fn(usize) -> Result<DVector<f64>> + Sync,
) -> Result<Vec<Vec<f64>>> {
    (0..reps)
        .into_par_iter()
        .map(|rep| {
            let g = functional(rep)?;
            sets.iter().map(|s| s.sup_linear(&g, None).map(|m| m.value)).collect()
        })
        .collect()
}

fn mean_and_se(xs: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = xs.collect();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Order statistic `ceil((1 - delta) reps)` (1-based).
pub fn upper_quantile(values: &[f64], delta: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = ((1.0 - delta) * v.len() as f64).ceil() as usize;
    v[k.clamp(1, v.len()) - 1]
}

/// `r_Q`: smallest `r` with `E sup |(1/n) sum eps_i (f - f*)(X_i)| <= tau r`
/// over `base ∩ r D_{f*}`.
pub fn estimate_rq(base: &ConstraintSet, tau: f64, mc: MonteCarlo, grid: &[f64]) -> Result<ComplexityEstimate> {
    check_mc(&mc, tau)?;
    check_grid(grid)?;
    let sets = prepare_grid(base, grid)?;
    let n = mc.n as f64;
    let table = sup_table(&sets, mc.reps, |rep| {
        let mut r = rng::stream(mc.seed, &[0x52_51, mc.n as u64, rep as u64]);
        let points = sample_points(&base.gram.domain, mc.n, &mut r);
        let signs = DVector::from_fn(mc.n, |_, _| rademacher(&mut r));
        Ok(orthonormal_design(&points, &base.gram)?.transpose() * signs / n)
    })?;
    let stats: Vec<(f64, f64)> = (0..grid.len()).map(|j| mean_and_se(table.iter().map(|row| row[j]))).collect();
    let curve: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let (value, idx, right, left) = first_crossing(grid, &curve, |r| tau * r);
    Ok(ComplexityEstimate {
        value,
        grid: grid.to_vec(),
        curve,
        reps: mc.reps,
        seed: mc.seed,
        standard_error: Some(stats[idx].1),
        right_censored: right,
        left_censored: left,
    })
}

/// `xi_i = f*(X_i) - u*(X_i) - e_i` for one replicate.
fn draw_xi(
    f_star: &CoefficientVector,
    source: &NoiseSource,
    points: &[(f64, f64)],
    r: &mut impl Rng,
) -> Result<DVector<f64>> {
    let diff = CoefficientVector::from_vector(f_star.domain, &f_star.coeffs - &source.u_star.coeffs)?;
    let mut xi = evaluate(&diff, points)?;
    for v in xi.iter_mut() {
        *v -= source.noise.sample(r);
    }
    Ok(xi)
}

/// `r_M`: smallest `s` whose `(1 - delta)` quantile of
/// `sup |n^-1/2 sum eps_i xi_i (f - f*)(X_i)|` is at most `tau s^2 sqrt(n)`.
pub fn estimate_rm(
    base: &ConstraintSet,
    tau: f64,
    delta: f64,
    mc: MonteCarlo,
    source: &NoiseSource,
    grid: &[f64],
) -> Result<ComplexityEstimate> {
    check_mc(&mc, tau)?;
    check_delta(delta, mc.reps)?;
    check_grid(grid)?;
    source.noise.validate()?;
    let sets = prepare_grid(base, grid)?;
    let root_n = (mc.n as f64).sqrt();
    let table = sup_table(&sets, mc.reps, |rep| {
        let mut r = rng::stream(mc.seed, &[0x52_4D, mc.n as u64, rep as u64]);
        let points = sample_points(&base.gram.domain, mc.n, &mut r);
        let xi = draw_xi(&base.center, source, &points, &mut r)?;
        let weights = DVector::from_fn(mc.n, |i, _| rademacher(&mut r) * xi[i]);
        Ok(orthonormal_design(&points, &base.gram)?.transpose() * weights / root_n)
    })?;
    let curve: Vec<f64> = (0..grid.len())
        .map(|j| upper_quantile(&table.iter().map(|row| row[j]).collect::<Vec<_>>(), delta))
        .collect();
    let (value, _, right, left) = first_crossing(grid, &curve, |s| tau * s * s * root_n);
    Ok(ComplexityEstimate {
        value,
        grid: grid.to_vec(),
        curve,
        reps: mc.reps,
        seed: mc.seed,
        standard_error: None,
        right_censored: right,
        left_censored: left,
    })
}

/// Draws of `O(rho) = sup |P_n M_{f - f*}|` over `F(rho, Psi) ∩ r D_{f*}`.
///
/// The centring `E xi (f - f*)(X) = <f* - u*, f - f*>` is exact because the
/// noise is independent of `X` with mean zero.
pub fn oscillation_draws(
    family: &PenaltyFamily,
    rho: f64,
    r: f64,
    mc: MonteCarlo,
    source: &NoiseSource,
) -> Result<Vec<f64>> {
    check_mc(&mc, 1.0)?;
    source.noise.validate()?;
    let set = family.level_set(rho).with_locality(r);
    let prepared = set.prepare()?;
    let gram = &family.class.gram;
    let centring = gram.whitening.whiten(&(&family.f_star.coeffs - &source.u_star.coeffs));
    let n = mc.n as f64;
    (0..mc.reps)
        .into_par_iter()
        .map(|rep| {
            let mut rg = rng::stream(mc.seed, &[0x4F, mc.n as u64, rep as u64]);
            let points = sample_points(&gram.domain, mc.n, &mut rg);
            let xi = draw_xi(&family.f_star, source, &points, &mut rg)?;
            let g = orthonormal_design(&points, gram)?.transpose() * xi / n - &centring;
            Ok(prepared.sup_linear(&g, None)?.value)
        })
        .collect()
}

/// `gamma_O(rho, tau, delta)`: the `(1 - delta)` quantile of `O(rho)` over `tau`.
pub fn estimate_gamma_o(
    family: &PenaltyFamily,
    rho: f64,
    r: f64,
    tau: f64,
    delta: f64,
    mc: MonteCarlo,
    source: &NoiseSource,
) -> Result<ComplexityEstimate> {
    check_mc(&mc, tau)?;
    check_delta(delta, mc.reps)?;
    let draws = oscillation_draws(family, rho, r, mc, source)?;
    let q = upper_quantile(&draws, delta);
    Ok(ComplexityEstimate {
        value: q / tau,
        grid: vec![rho],
        curve: vec![q],
        reps: mc.reps,
        seed: mc.seed,
        standard_error: None,
        right_censored: false,
        left_censored: false,
    })
}

/// `lambda_0 = max_rho gamma_O(rho) / rho` at the fixed `f*` of the family.
pub fn estimate_lambda0(
    family: &PenaltyFamily,
    rho_grid: &[f64],
    radius_of: &(dyn Fn(f64) -> Result<f64> + Sync),
    tau: f64,
    delta: f64,
    mc: MonteCarlo,
    source: &NoiseSource,
) -> Result<ComplexityEstimate> {
    if rho_grid.is_empty() || rho_grid.iter().any(|&r| !(r > 0.0)) {
        return Err(PislabError::Config("rho grid must be nonempty and positive".into()));
    }
    let mut curve = Vec::with_capacity(rho_grid.len());
    for &rho in rho_grid {
        let gamma = estimate_gamma_o(family, rho, radius_of(rho)?, tau, delta, mc, source)?;
        curve.push(gamma.value / rho);
    }
    let value = curve.iter().copied().fold(0.0, f64::max);
    Ok(ComplexityEstimate {
        value,
        grid: rho_grid.to_vec(),
        curve,
        reps: mc.reps,
        seed: mc.seed,
        standard_error: None,
        right_censored: false,
        left_censored: false,
    })
}

/// Constants `kappa`, `epsilon` of the small-ball condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallBallConstants {
    pub kappa: f64,
    pub epsilon: f64,
}

/// `r(rho) = max{r_M(F(rho), kappa^2 eps / 80, delta / 4), r_Q(F(rho), kappa eps / 32)}`.
pub fn radius_from_small_ball(
    family: &PenaltyFamily,
    rho: f64,
    sb: SmallBallConstants,
    delta: f64,
    mc: MonteCarlo,
    source: &NoiseSource,
    grid: &[f64],
) -> Result<f64> {
    let set = family.level_set(rho);
    let (kappa, epsilon) = (sb.kappa, sb.epsilon);
    let rm = estimate_rm(&set, kappa * kappa * epsilon / 80.0, delta / 4.0, mc, source, grid)?;
    let rq = estimate_rq(&set, kappa * epsilon / 32.0, mc, grid)?;
    Ok(rm.value.max(rq.value))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallBallRow {
    pub kappa: f64,
    pub epsilon_hat: f64,
    pub pairs: usize,
    pub x_samples: usize,
}

/// Monte Carlo `Pr(|d(X)| >= kappa ||d||)` for each `kappa`, with `d` in
/// orthonormal coordinates.
fn tail_probabilities(d: &DVector<f64>, gram: &GramMatrix, kappas: &[f64], x_samples: usize, r: &mut impl Rng) -> Result<Vec<f64>> {
    let norm = d.norm();
    let points = sample_points(&gram.domain, x_samples, r);
    let vals = orthonormal_design(&points, gram)? * d;
    Ok(kappas
        .iter()
        .map(|&k| vals.iter().filter(|v| v.abs() >= k * norm).count() as f64 / x_samples as f64)
        .collect())
}

/// `Pr(|f - h|(X) >= kappa ||f - h||)` for one difference `f - h`.
pub fn small_ball_probability(
    diff: &CoefficientVector,
    gram: &GramMatrix,
    kappas: &[f64],
    x_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let d = gram.whitening.whiten(&diff.coeffs);
    tail_probabilities(&d, gram, kappas, x_samples, &mut rng::stream(seed, &[0x5B]))
}

/// `eps_hat(kappa)`: the smallest tail probability over random pairs of the ball.
pub fn estimate_smallball(
    class: &FunctionClass,
    kappas: &[f64],
    pair_samples: usize,
    x_samples: usize,
    seed: u64,
) -> Result<Vec<SmallBallRow>> {
    if kappas.is_empty() || pair_samples == 0 || x_samples == 0 {
        return Err(PislabError::Config("small-ball grids must be nonempty".into()));
    }
    let set = ConstraintSet::ball(class, CoefficientVector::zeros(class.domain)).prepare()?;
    let per_pair: Vec<Option<Vec<f64>>> = (0..pair_samples)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::stream(seed, &[0x5B, k as u64]);
            let f = set.random_point(&mut r);
            let h = set.random_point(&mut r);
            let d = f - h;
            if d.norm() < 1e-12 {
                return Ok(None);
            }
            tail_probabilities(&d, &class.gram, kappas, x_samples, &mut r).map(Some)
        })
        .collect::<Result<_>>()?;
    Ok(kappas
        .iter()
        .enumerate()
        .map(|(j, &kappa)| SmallBallRow {
            kappa,
            epsilon_hat: per_pair.iter().flatten().map(|p| p[j]).fold(1.0, f64::min),
            pairs: pair_samples,
            x_samples,
        })
        .collect())
}

/// `P_n L_f`, `P_n Q_{f - f*}` and `P_n M_{f - f*}` on one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExcessLoss {
    pub excess: f64,
    pub quadratic: f64,
    pub multiplier: f64,
    /// `E xi (f - f*)(X)`.
    pub centring: f64,
    /// `P_n L >= P_n Q - 2 |P_n M|` up to `1e-10`.
    pub lower_bound_holds: bool,
}

/// Splits the empirical excess loss of `f` over `f*` into its product and
/// multiplier parts, with `xi_i = f*(X_i) - Y_i`.
pub fn decompose_excess_loss(
    f: &CoefficientVector,
    f_star: &CoefficientVector,
    u_star: &CoefficientVector,
    data: &Dataset,
    gram: &GramMatrix,
) -> Result<ExcessLoss> {
    if data.n() == 0 {
        return Err(PislabError::Empty("dataset has no samples"));
    }
    f.check_compatible(&gram.domain)?;
    f_star.check_compatible(&gram.domain)?;
    u_star.check_compatible(&gram.domain)?;
    let n = data.n() as f64;
    let fv = evaluate(f, &data.points)?;
    let sv = evaluate(f_star, &data.points)?;
    let xi = &sv - &data.targets;
    let diff = &fv - &sv;
    let excess = ((&fv - &data.targets).norm_squared() - xi.norm_squared()) / n;
    let quadratic = diff.norm_squared() / n;
    let centring = gram.inner(&(&f_star.coeffs - &u_star.coeffs), &(&f.coeffs - &f_star.coeffs));
    let multiplier = xi.dot(&diff) / n - centring;
    let lower_bound_holds = excess >= quadratic - 2.0 * multiplier.abs() - 1e-10;
    Ok(ExcessLoss { excess, quadratic, multiplier, centring, lower_bound_holds })
}

/// Fraction of trials in which `(1/n) sum (f - f*)^2(X_i) >= theta ||f - f*||^2`
/// for a random `f` of the ball at distance at least `min_distance` from `f*`.
pub fn product_lower_bound_frequency(
    class: &FunctionClass,
    f_star: &CoefficientVector,
    theta: f64,
    min_distance: f64,
    mc: MonteCarlo,
) -> Result<f64> {
    check_mc(&mc, 1.0)?;
    let set = ConstraintSet::ball(class, f_star.clone()).prepare()?;
    let b_star = class.gram.whitening.whiten(&f_star.coeffs);
    let hits: Vec<Option<bool>> = (0..mc.reps)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::stream(mc.seed, &[0x9A, mc.n as u64, k as u64]);
            let mut tries = 0;
            let d = loop {
                let d = set.random_point(&mut r) - &b_star;
                tries += 1;
                if d.norm() >= min_distance {
                    break Some(d);
                }
                if tries > 1000 {
                    break None;
                }
            };
            let Some(d) = d else { return Ok(None) };
            let points = sample_points(&class.domain, mc.n, &mut r);
            let vals = orthonormal_design(&points, &class.gram)? * &d;
            Ok(Some(vals.norm_squared() / mc.n as f64 >= theta * d.norm_squared()))
        })
        .collect::<Result<_>>()?;
    let used: Vec<bool> = hits.into_iter().flatten().collect();
    if used.is_empty() {
        return Err(PislabError::Empty("no function of the ball is that far from the centre"));
    }
    Ok(used.iter().filter(|&&h| h).count() as f64 / used.len() as f64)
}
