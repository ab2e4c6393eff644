//! Maximising a linear functional over an intersection of balls and one
//! penalty ellipsoid, in orthonormal coordinates.
//!
//! With no penalty constraint, or a penalty level of zero (an affine
//! subspace), the set is the intersection of at most two Euclidean balls
//! inside an affine subspace and the maximiser has a closed form. Otherwise
//! every constraint is a convex quadratic in the eigenbasis of the penalty
//! matrix and the Lagrange dual is a smooth function of at most three
//! multipliers, minimised by projected Newton. Dual values are upper bounds
//! and pulled-back primal points lower bounds, so the gap certifies the result.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::diff_ops::{AffineSubspace, PenaltyForm, RANK_TOLERANCE};
use crate::error::{PislabError, Result};
use crate::rng;

const DYKSTRA_MAX_CYCLES: usize = 20_000;
const DYKSTRA_TOL: f64 = 1e-13;
const FEAS_TOL: f64 = 1e-12;
pub(crate) const CERTIFY_PROBES: usize = 500;
const CERTIFY_REL: f64 = 1e-6;
const DUAL_MAX_ITERS: usize = 200;
const DUAL_GAP_TOL: f64 = 1e-13;
const DUAL_CERTIFIED_GAP: f64 = 1e-8;

/// `{ ||A b - c|| <= level }` with `A^T A` diagonalised once.
#[derive(Debug, Clone)]
pub(crate) struct Ellipsoid {
    form: PenaltyForm,
    level: f64,
    v: DMatrix<f64>,
    s2: DVector<f64>,
    /// Centre of the ellipsoid in the rotated coordinates `y = V^T b`.
    centre: DVector<f64>,
    /// Squared radius after removing the part of `c` outside the range of `A`.
    budget: f64,
}

impl Ellipsoid {
    fn new(form: PenaltyForm, level: f64) -> Result<Self> {
        let ata = form.matrix.transpose() * &form.matrix;
        let eig = ata.symmetric_eigen();
        let s2 = eig.eigenvalues.map(|v| v.max(0.0));
        let v = eig.eigenvectors;
        let atc = &v.transpose() * (form.matrix.transpose() * &form.rhs);
        let cut = RANK_TOLERANCE * s2.max().max(f64::MIN_POSITIVE);
        let mut centre = DVector::zeros(s2.len());
        let mut in_range = 0.0;
        for i in 0..s2.len() {
            if s2[i] > cut {
                centre[i] = atc[i] / s2[i];
                in_range += atc[i] * atc[i] / s2[i];
            }
        }
        let budget = level * level - (form.rhs.norm_squared() - in_range).max(0.0);
        if budget < 0.0 {
            return Err(PislabError::Infeasible {
                reason: format!("penalty level {level} is below the smallest attainable penalty"),
                residual: -budget,
            });
        }
        Ok(Self { form, level, v, s2, centre, budget })
    }

    fn excess(&self, b: &DVector<f64>) -> f64 {
        self.form.value(b) - self.level
    }

    fn project(&self, b: &DVector<f64>) -> DVector<f64> {
        if self.excess(b) <= 0.0 {
            return b.clone();
        }
        let y0 = self.v.transpose() * b;
        let w0 = &y0 - &self.centre;
        let size = |mu: f64| -> f64 {
            w0.iter().zip(self.s2.iter()).map(|(&w, &s)| s * (w / (1.0 + mu * s)).powi(2)).sum()
        };
        if size(0.0) <= self.budget {
            return b.clone();
        }
        let mut lo = 0.0;
        let mut hi = 1.0;
        while size(hi) > self.budget {
            lo = hi;
            hi *= 2.0;
            if hi > 1e300 {
                break;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if size(mid) > self.budget {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        let w = DVector::from_fn(w0.len(), |i, _| w0[i] / (1.0 + hi * self.s2[i]));
        &self.v * (w + &self.centre)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Ball {
    pub centre: DVector<f64>,
    pub radius: f64,
}

impl Ball {
    fn excess(&self, b: &DVector<f64>) -> f64 {
        (b - &self.centre).norm() - self.radius
    }

    fn project(&self, b: &DVector<f64>) -> DVector<f64> {
        let d = b - &self.centre;
        let n = d.norm();
        if n <= self.radius {
            b.clone()
        } else {
            &self.centre + d * (self.radius / n)
        }
    }
}

/// Closed form: balls intersected with an affine subspace.
#[derive(Debug, Clone)]
struct ExactSet {
    subspace: Option<AffineSubspace>,
    /// Radii and centres of the balls in subspace coordinates.
    outer: f64,
    inner: Option<(DVector<f64>, f64)>,
}

impl ExactSet {
    fn dim(&self, centre: &DVector<f64>) -> usize {
        match &self.subspace {
            Some(s) => s.dimension(),
            None => centre.len(),
        }
    }
}

/// `sum_i w_i y_i^2 - 2 p_i y_i + k <= 0` in rotated coordinates.
#[derive(Debug, Clone)]
struct Quadratic {
    w: DVector<f64>,
    p: DVector<f64>,
    k: f64,
}

impl Quadratic {
    fn ball(ball: &Ball, v: &DMatrix<f64>) -> Self {
        let z = v.transpose() * &ball.centre;
        let k = z.norm_squared() - ball.radius * ball.radius;
        Self { w: DVector::from_element(z.len(), 1.0), p: z, k }
    }

    fn ellipsoid(e: &Ellipsoid) -> Self {
        let p = e.v.transpose() * (e.form.matrix.transpose() * &e.form.rhs);
        Self { w: e.s2.clone(), p, k: e.form.rhs.norm_squared() - e.level * e.level }
    }

    fn value(&self, y: &DVector<f64>) -> f64 {
        (0..y.len()).map(|i| y[i] * (self.w[i] * y[i] - 2.0 * self.p[i])).sum::<f64>() + self.k
    }
}

#[derive(Debug, Clone)]
pub(crate) struct GeneralSet {
    balls: Vec<Ball>,
    ellipsoid: Ellipsoid,
    anchor: DVector<f64>,
    scale: f64,
    quadratics: Vec<Quadratic>,
    anchor_y: DVector<f64>,
}

#[derive(Debug, Clone)]
enum Shape {
    Exact(ExactSet),
    General(GeneralSet),
}

/// A convex set in orthonormal coordinates together with the point the
/// functional is centred at.
#[derive(Debug, Clone)]
pub(crate) struct PreparedSet {
    centre: DVector<f64>,
    shape: Shape,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct LinearMax {
    pub value: f64,
    pub maximiser: DVector<f64>,
    pub certified: bool,
}

fn infeasible(reason: &str, residual: f64) -> PislabError {
    PislabError::Infeasible { reason: reason.to_string(), residual }
}

impl PreparedSet {
    /// `{||b|| <= radius} ∩ {||b - centre|| <= local} ∩ {||A b - c|| <= level}`.
    pub fn new(
        radius: f64,
        centre: DVector<f64>,
        local: Option<f64>,
        penalty: Option<(PenaltyForm, f64)>,
    ) -> Result<Self> {
        let shape = match penalty {
            Some((form, level)) if level > 0.0 => {
                let ellipsoid = Ellipsoid::new(form, level)?;
                let mut balls = vec![Ball { centre: DVector::zeros(centre.len()), radius }];
                if let Some(r) = local {
                    balls.push(Ball { centre: centre.clone(), radius: r });
                }
                let anchor = feasible_anchor(&balls, &ellipsoid, &centre)?;
                let mut quadratics: Vec<Quadratic> = balls.iter().map(|b| Quadratic::ball(b, &ellipsoid.v)).collect();
                quadratics.push(Quadratic::ellipsoid(&ellipsoid));
                let anchor_y = ellipsoid.v.transpose() * &anchor;
                let scale = balls.iter().map(|b| b.radius).fold(f64::INFINITY, f64::min);
                Shape::General(GeneralSet { balls, ellipsoid, anchor, scale, quadratics, anchor_y })
            }
            penalty => {
                let subspace = match penalty {
                    Some((form, _)) => Some(form.affine_kernel(RANK_TOLERANCE)?),
                    None => None,
                };
                let (offset_sq, rel_centre) = match &subspace {
                    Some(s) => (s.offset.norm_squared(), s.basis.transpose() * (&centre - &s.offset)),
                    None => (0.0, centre.clone()),
                };
                let outer_sq = radius * radius - offset_sq;
                if outer_sq < 0.0 {
                    return Err(infeasible("penalty constraint misses the ball", offset_sq.sqrt() - radius));
                }
                let inner = match local {
                    Some(r) => {
                        let perp_sq = match &subspace {
                            Some(s) => (&centre - s.point(&rel_centre)).norm_squared(),
                            None => 0.0,
                        };
                        let inner_sq = r * r - perp_sq;
                        if inner_sq < 0.0 {
                            return Err(infeasible("locality ball misses the constraint set", perp_sq.sqrt() - r));
                        }
                        let inner = inner_sq.sqrt();
                        if rel_centre.norm() > outer_sq.sqrt() + inner {
                            return Err(infeasible(
                                "locality ball misses the class ball",
                                rel_centre.norm() - outer_sq.sqrt() - inner,
                            ));
                        }
                        Some((rel_centre, inner))
                    }
                    None => None,
                };
                Shape::Exact(ExactSet { subspace, outer: outer_sq.sqrt(), inner })
            }
        };
        Ok(Self { centre, shape })
    }

    pub fn contains(&self, b: &DVector<f64>, tol: f64) -> bool {
        match &self.shape {
            Shape::Exact(e) => {
                let z = match &e.subspace {
                    Some(s) => {
                        let z = s.basis.transpose() * (b - &s.offset);
                        if (s.point(&z) - b).norm() > tol.max(1e-9) {
                            return false;
                        }
                        z
                    }
                    None => b.clone(),
                };
                z.norm() <= e.outer + tol && e.inner.as_ref().is_none_or(|(c, r)| (&z - c).norm() <= r + tol)
            }
            Shape::General(g) => max_excess(&g.balls, &g.ellipsoid, b) <= tol,
        }
    }

    /// `max |g^T (b - centre)|` over the set.
    pub fn sup_linear(&self, g: &DVector<f64>, certify: Option<u64>) -> Result<LinearMax> {
        let mut best = match &self.shape {
            Shape::Exact(e) => self.exact_max(e, g),
            Shape::General(s) => self.general_max(s, g)?,
        };
        if let (Some(seed), Shape::General(s)) = (certify, &self.shape) {
            let probe = self.probe_max(s, g, CERTIFY_PROBES, seed);
            if probe.value > best.value * (1.0 + CERTIFY_REL) + f64::MIN_POSITIVE {
                log::warn!("sup_linear: probe value {} exceeds ascent value {}", probe.value, best.value);
                best = LinearMax { certified: false, ..probe };
            }
        }
        Ok(best)
    }

    fn exact_max(&self, e: &ExactSet, g: &DVector<f64>) -> LinearMax {
        let (h, to_full): (DVector<f64>, Box<dyn Fn(&DVector<f64>) -> DVector<f64>>) = match &e.subspace {
            Some(s) => (s.basis.transpose() * g, Box::new(move |z: &DVector<f64>| s.point(z))),
            None => (g.clone(), Box::new(|z: &DVector<f64>| z.clone())),
        };
        let offset = to_full(&DVector::zeros(h.len()));
        let mut shift = &offset - &self.centre;
        // A centre on the subspace up to rounding is on it.
        if shift.norm() <= 64.0 * f64::EPSILON * (offset.norm() + self.centre.norm()) {
            shift.fill(0.0);
        }
        let constant = g.dot(&shift);
        let (up, z_up) = two_ball_max(&h, e.outer, e.inner.as_ref());
        let (down, z_down) = two_ball_max(&(-&h), e.outer, e.inner.as_ref());
        let plus = constant + up;
        let minus = -constant + down;
        let (value, z) = if plus >= minus { (plus, z_up) } else { (minus, z_down) };
        LinearMax { value: value.max(0.0), maximiser: to_full(&z), certified: true }
    }

    fn general_max(&self, s: &GeneralSet, g: &DVector<f64>) -> Result<LinearMax> {
        let gn = g.norm();
        if gn == 0.0 {
            return Ok(LinearMax { value: 0.0, maximiser: s.anchor.clone(), certified: true });
        }
        let h = s.ellipsoid.v.transpose() * (g / gn);
        let mut best: Option<LinearMax> = None;
        for sign in [1.0, -1.0] {
            let (y, gap) = dual_max(&s.quadratics, &(&h * sign), &s.anchor_y, s.scale);
            // Rotating back may leave a rounding-level violation.
            let x = pull_back(&s.balls, &s.ellipsoid, &s.anchor, &(&s.ellipsoid.v * y));
            let value = (g.dot(&(&x - &self.centre))).abs();
            let certified = gap <= DUAL_CERTIFIED_GAP * s.scale;
            if best.as_ref().is_none_or(|b| value > b.value) {
                best = Some(LinearMax { value, maximiser: x, certified });
            }
        }
        Ok(best.expect("two signs evaluated"))
    }

    /// Best of `probes` random feasible points.
    pub fn probe_max(&self, s: &GeneralSet, g: &DVector<f64>, probes: usize, seed: u64) -> LinearMax {
        let mut best = LinearMax { value: (g.dot(&(&s.anchor - &self.centre))).abs(), maximiser: s.anchor.clone(), certified: false };
        for k in 0..probes {
            let mut r = rng::stream(seed, &[0xCE27, k as u64]);
            let x = random_feasible(s, &mut r);
            let value = (g.dot(&(&x - &self.centre))).abs();
            if value > best.value {
                best = LinearMax { value, maximiser: x, certified: false };
            }
        }
        best
    }

    /// A random point of the set: a uniform draw from the smallest ball,
    /// pulled back towards a feasible point when it falls outside.
    pub fn random_point(&self, r: &mut impl Rng) -> DVector<f64> {
        match &self.shape {
            Shape::General(s) => random_feasible(s, r),
            Shape::Exact(e) => {
                let (_, inside) = two_ball_max(&DVector::zeros(e.dim(&self.centre)), e.outer, e.inner.as_ref());
                let (c, rad) = match &e.inner {
                    Some((c, rad)) if *rad < e.outer => (c.clone(), *rad),
                    _ => (DVector::zeros(inside.len()), e.outer),
                };
                let z = &c + uniform_ball(r, c.len(), rad);
                let ok = |z: &DVector<f64>| {
                    z.norm() <= e.outer && e.inner.as_ref().is_none_or(|(c, rr)| (z - c).norm() <= *rr)
                };
                let z = if ok(&z) {
                    z
                } else {
                    let (mut lo, mut hi) = (0.0, 1.0);
                    for _ in 0..100 {
                        let mid = 0.5 * (lo + hi);
                        if ok(&(&inside + (&z - &inside) * mid)) {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    &inside + (&z - &inside) * lo
                };
                match &e.subspace {
                    Some(s) => s.point(&z),
                    None => z,
                }
            }
        }
    }

    #[cfg(test)]
    pub fn general(&self) -> Option<&GeneralSet> {
        match &self.shape {
            Shape::General(s) => Some(s),
            Shape::Exact(_) => None,
        }
    }
}

/// `max h^T z` over `{||z|| <= outer} ∩ {||z - c|| <= inner}`.
fn two_ball_max(h: &DVector<f64>, outer: f64, inner: Option<&(DVector<f64>, f64)>) -> (f64, DVector<f64>) {
    let hn = h.norm();
    let Some((c, r2)) = inner else {
        return if hn == 0.0 { (0.0, DVector::zeros(h.len())) } else { (outer * hn, h * (outer / hn)) };
    };
    let cn = c.norm();
    if hn == 0.0 {
        let z = if cn <= outer { c.clone() } else { c * ((cn - r2).max(0.0) / cn) };
        return (0.0, z);
    }
    let unit = h / hn;
    let first = &unit * outer;
    if (&first - c).norm() <= *r2 {
        return (outer * hn, first);
    }
    let second = c + &unit * *r2;
    if second.norm() <= outer {
        return (h.dot(&second), second);
    }
    // Both constraints active: the maximiser lies on the circle where the
    // two spheres meet.
    let chat = c / cn;
    let alpha = (outer * outer - r2 * r2 + cn * cn) / (2.0 * cn);
    let rho = (outer * outer - alpha * alpha).max(0.0).sqrt();
    let h_par = h.dot(&chat);
    let h_perp = h - &chat * h_par;
    let hp = h_perp.norm();
    let z = if hp > 0.0 { &chat * alpha + h_perp * (rho / hp) } else { &chat * alpha };
    (h.dot(&z), z)
}

fn max_excess(balls: &[Ball], ellipsoid: &Ellipsoid, b: &DVector<f64>) -> f64 {
    balls.iter().map(|ball| ball.excess(b)).fold(ellipsoid.excess(b), f64::max)
}

/// Dykstra's alternating projections of `x0` onto the intersection.
fn dykstra(balls: &[Ball], ellipsoid: &Ellipsoid, x0: &DVector<f64>) -> DVector<f64> {
    let sets = balls.len() + 1;
    let mut incr = vec![DVector::zeros(x0.len()); sets];
    let mut x = x0.clone();
    let scale = x0.norm().max(1.0);
    for _ in 0..DYKSTRA_MAX_CYCLES {
        let prev = x.clone();
        for (j, p) in incr.iter_mut().enumerate() {
            let shifted = &x + &*p;
            let y = if j < balls.len() { balls[j].project(&shifted) } else { ellipsoid.project(&shifted) };
            *p = shifted - &y;
            x = y;
        }
        if (&x - &prev).norm() <= DYKSTRA_TOL * scale {
            break;
        }
    }
    x
}

struct DualPoint {
    value: f64,
    y: DVector<f64>,
    grad: DVector<f64>,
    hess: DMatrix<f64>,
}

/// Dual function of `max h^T y` over the quadratics at multipliers `mu`.
/// `None` when the Lagrangian is unbounded.
fn dual_eval(qs: &[Quadratic], h: &DVector<f64>, mu: &[f64], fallback: &DVector<f64>) -> Option<DualPoint> {
    let d = h.len();
    let mut m = DVector::zeros(d);
    let mut y = DVector::zeros(d);
    for i in 0..d {
        let (mut mi, mut num) = (0.0, h[i]);
        for (q, &u) in qs.iter().zip(mu) {
            mi += u * q.w[i];
            num += 2.0 * u * q.p[i];
        }
        m[i] = mi;
        y[i] = if mi > 0.0 {
            num / (2.0 * mi)
        } else if num == 0.0 {
            fallback[i]
        } else {
            return None;
        };
    }
    let vals: Vec<f64> = qs.iter().map(|q| q.value(&y)).collect();
    let value = h.dot(&y) - mu.iter().zip(&vals).map(|(u, v)| u * v).sum::<f64>();
    if !value.is_finite() {
        return None;
    }
    let grad = DVector::from_iterator(qs.len(), vals.iter().map(|v| -v));
    let u: Vec<DVector<f64>> =
        qs.iter().map(|q| DVector::from_fn(d, |i, _| 2.0 * (q.w[i] * y[i] - q.p[i]))).collect();
    let hess = DMatrix::from_fn(qs.len(), qs.len(), |j, k| {
        (0..d).filter(|&i| m[i] > 0.0).map(|i| u[j][i] * u[k][i] / (2.0 * m[i])).sum()
    });
    Some(DualPoint { value, y, grad, hess })
}

/// Largest step from `anchor` towards `y` keeping every quadratic nonpositive.
fn pull_back_quadratics(qs: &[Quadratic], anchor: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    let ok = |z: &DVector<f64>| qs.iter().all(|q| q.value(z) <= 0.0);
    if ok(y) {
        return y.clone();
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ok(&(anchor + (y - anchor) * mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    anchor + (y - anchor) * lo
}

/// Projected Newton on the dual of `max h^T y` for unit `h`. Returns the best
/// feasible point found and its duality gap.
fn dual_max(qs: &[Quadratic], h: &DVector<f64>, anchor: &DVector<f64>, scale: f64) -> (DVector<f64>, f64) {
    let k = qs.len();
    let mut mu = vec![0.5 / scale; k];
    let mut best_y = anchor.clone();
    let mut lower = h.dot(anchor);
    let mut upper = f64::INFINITY;
    let Some(mut cur) = dual_eval(qs, h, &mu, anchor) else {
        return (best_y, upper);
    };
    for _ in 0..DUAL_MAX_ITERS {
        let primal = pull_back_quadratics(qs, anchor, &cur.y);
        if h.dot(&primal) > lower {
            lower = h.dot(&primal);
            best_y = primal;
        }
        upper = upper.min(cur.value);
        if upper - lower <= DUAL_GAP_TOL * scale {
            break;
        }
        // Multipliers pinned at zero with the gradient pushing them negative stay fixed.
        let free: Vec<usize> = (0..k).filter(|&j| mu[j] > 0.0 || cur.grad[j] < 0.0).collect();
        if free.is_empty() {
            break;
        }
        let hf = DMatrix::from_fn(free.len(), free.len(), |a, b| cur.hess[(free[a], free[b])]);
        let gf = DVector::from_iterator(free.len(), free.iter().map(|&j| cur.grad[j]));
        let ridge = 1e-14 * hf.trace().max(f64::MIN_POSITIVE);
        let newton = (hf + DMatrix::identity(free.len(), free.len()) * ridge).cholesky().map(|c| -c.solve(&gf));
        let mut accepted = false;
        for dir in newton.into_iter().chain(std::iter::once(-&gf)) {
            if dir.dot(&gf) >= 0.0 {
                continue;
            }
            let mut step = 1.0;
            for _ in 0..60 {
                let mut trial = mu.clone();
                for (a, &j) in free.iter().enumerate() {
                    trial[j] = (mu[j] + step * dir[a]).max(0.0);
                }
                let decrease: f64 = (0..k).map(|j| cur.grad[j] * (trial[j] - mu[j])).sum();
                if let Some(next) = dual_eval(qs, h, &trial, anchor) {
                    if next.value <= cur.value + 1e-4 * decrease {
                        mu = trial;
                        cur = next;
                        accepted = true;
                        break;
                    }
                }
                step *= 0.5;
            }
            if accepted {
                break;
            }
        }
        if !accepted {
            break;
        }
    }
    let primal = pull_back_quadratics(qs, anchor, &cur.y);
    if h.dot(&primal) > lower {
        lower = h.dot(&primal);
        best_y = primal;
    }
    upper = upper.min(cur.value);
    (best_y, (upper - lower).max(0.0))
}

/// Largest step from `anchor` towards `x` that stays feasible.
fn pull_back(balls: &[Ball], ellipsoid: &Ellipsoid, anchor: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
    if max_excess(balls, ellipsoid, x) <= 0.0 {
        return x.clone();
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if max_excess(balls, ellipsoid, &(anchor + (x - anchor) * mid)) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    anchor + (x - anchor) * lo
}

/// A point satisfying every constraint, preferably `centre` itself.
fn feasible_anchor(balls: &[Ball], ellipsoid: &Ellipsoid, centre: &DVector<f64>) -> Result<DVector<f64>> {
    if max_excess(balls, ellipsoid, centre) <= 0.0 {
        return Ok(centre.clone());
    }
    let x = dykstra(balls, ellipsoid, centre);
    let excess = max_excess(balls, ellipsoid, &x);
    if excess <= FEAS_TOL * (1.0 + x.norm()) {
        Ok(x)
    } else {
        Err(infeasible("constraint sets do not intersect", excess))
    }
}

fn uniform_ball(r: &mut impl Rng, dim: usize, radius: f64) -> DVector<f64> {
    if dim == 0 {
        return DVector::zeros(0);
    }
    let mut v = DVector::from_fn(dim, |_, _| r.sample::<f64, _>(StandardNormal));
    let n = v.norm();
    if n > 0.0 {
        v /= n;
    }
    v * (radius * r.random::<f64>().powf(1.0 / dim as f64))
}

fn random_feasible(s: &GeneralSet, r: &mut impl Rng) -> DVector<f64> {
    let small = s.balls.iter().min_by(|a, b| a.radius.total_cmp(&b.radius)).expect("class ball present");
    let x = &small.centre + uniform_ball(r, s.anchor.len(), small.radius);
    pull_back(&s.balls, &s.ellipsoid, &s.anchor, &x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_vec(d: usize, seed: u64) -> DVector<f64> {
        let mut r = rng::stream(seed, &[]);
        DVector::from_fn(d, |_, _| r.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn single_ball_is_radius_times_norm() {
        let c = rand_vec(5, 1) * 0.1;
        let set = PreparedSet::new(100.0, c.clone(), Some(0.7), None).unwrap();
        let g = rand_vec(5, 2);
        let m = set.sup_linear(&g, None).unwrap();
        assert!((m.value - 0.7 * g.norm()).abs() < 1e-12);
        assert_eq!(set.sup_linear(&DVector::zeros(5), None).unwrap().value, 0.0);
    }

    #[test]
    fn two_balls_match_sampling() {
        let c = DVector::from_vec(vec![1.2, 0.3, -0.4]);
        let set = PreparedSet::new(1.0, c.clone(), Some(0.9), None).unwrap();
        let g = DVector::from_vec(vec![0.2, 1.0, 0.5]);
        let m = set.sup_linear(&g, None).unwrap();
        assert!(set.contains(&m.maximiser, 1e-12));
        let mut r = rng::stream(3, &[]);
        let mut best: f64 = 0.0;
        for _ in 0..200_000 {
            let z = set.random_point(&mut r);
            best = best.max(g.dot(&(&z - &c)).abs());
        }
        assert!(best <= m.value * (1.0 + 1e-12));
        assert!(best >= m.value * 0.97);
    }

    #[test]
    fn general_path_agrees_with_closed_form_for_loose_ellipsoid() {
        // A penalty level so large it never binds reduces to two balls.
        let d = 4;
        let form = PenaltyForm { matrix: DMatrix::identity(d, d), rhs: DVector::zeros(d) };
        let c = rand_vec(d, 5) * 0.2;
        let g = rand_vec(d, 6);
        let loose = PreparedSet::new(1.0, c.clone(), Some(0.8), Some((form, 1e3))).unwrap();
        let exact = PreparedSet::new(1.0, c, Some(0.8), None).unwrap();
        let a = loose.sup_linear(&g, Some(1)).unwrap();
        let b = exact.sup_linear(&g, None).unwrap();
        assert!((a.value - b.value).abs() <= 1e-8 * b.value);
    }

    #[test]
    fn tight_ellipsoid_against_probes() {
        let d = 4;
        let mut r = rng::stream(7, &[]);
        let a = DMatrix::from_fn(2, d, |_, _| r.random_range(-1.0..1.0));
        let form = PenaltyForm { matrix: a, rhs: DVector::from_vec(vec![0.1, -0.2]) };
        let c = DVector::zeros(d);
        let set = PreparedSet::new(1.0, c, Some(0.6), Some((form, 0.3))).unwrap();
        let g = rand_vec(d, 8);
        let m = set.sup_linear(&g, Some(9)).unwrap();
        assert!(m.certified);
        assert!(set.contains(&m.maximiser, 1e-12));
        let s = set.general().unwrap();
        let probe = set.probe_max(s, &g, 20_000, 10);
        assert!(probe.value <= m.value * (1.0 + 1e-9));
    }

    #[test]
    fn empty_intersections_are_reported() {
        let c = DVector::from_vec(vec![5.0, 0.0]);
        assert!(matches!(
            PreparedSet::new(1.0, c.clone(), Some(1.0), None),
            Err(PislabError::Infeasible { .. })
        ));
        let form = PenaltyForm { matrix: DMatrix::identity(2, 2), rhs: DVector::from_vec(vec![5.0, 0.0]) };
        assert!(matches!(
            PreparedSet::new(1.0, DVector::zeros(2), None, Some((form, 1.0))),
            Err(PislabError::Infeasible { .. })
        ));
    }

    #[test]
    fn doubling_the_functional_doubles_the_value() {
        let d = 4;
        let mut r = rng::stream(11, &[]);
        let a = DMatrix::from_fn(3, d, |_, _| r.random_range(-1.0..1.0));
        let form = PenaltyForm { matrix: a, rhs: DVector::zeros(3) };
        let set = PreparedSet::new(2.0, DVector::zeros(d), Some(1.5), Some((form, 0.4))).unwrap();
        let g = rand_vec(d, 12);
        let one = set.sup_linear(&g, None).unwrap().value;
        let two = set.sup_linear(&(&g * 2.0), None).unwrap().value;
        assert!((two - 2.0 * one).abs() <= 1e-12 * two);
    }
}
