//! Tensor monomial basis on `[0, 1] x [0, T]` and the geometry of `L2(mu)`
//! under the uniform probability measure.
//!
//! A function `h(x, t) = sum a[i, j] x^i t^j` with `0 <= i, j <= p` is stored as
//! a coefficient vector in flat order `k = i * (p + 1) + j`.
//!
//! The monomial Gram matrix is Hilbert-like and badly conditioned, so every
//! norm, distance and solver in the crate works through an exact change of
//! basis to tensor products of orthonormal shifted Legendre polynomials
//! ([`Whitening`]). In those coordinates the Gram matrix is the identity.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, PislabError, Result};

/// Highest per-coordinate degree for which the monomial Gram matrix is
/// considered well enough conditioned.
pub const DEFAULT_DEGREE_CAP: usize = 6;

/// Default radius of the `L2(mu)` ball class.
pub const DEFAULT_RADIUS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainConfig {
    /// Time horizon `T`.
    pub t_max: f64,
    /// Maximum degree `p` in each coordinate.
    pub degree: usize,
    #[serde(default = "default_cap")]
    pub degree_cap: usize,
}

fn default_cap() -> usize {
    DEFAULT_DEGREE_CAP
}

impl DomainConfig {
    pub fn new(t_max: f64, degree: usize) -> Result<Self> {
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(PislabError::Config(format!("t_max must be positive, got {t_max}")));
        }
        Ok(Self { t_max, degree, degree_cap: DEFAULT_DEGREE_CAP })
    }

    pub fn with_cap(mut self, cap: usize) -> Self {
        self.degree_cap = cap;
        self
    }

    /// Number of basis monomials, `(p + 1)^2`.
    pub fn basis_size(&self) -> usize {
        (self.degree + 1) * (self.degree + 1)
    }

    pub fn flat(&self, i: usize, j: usize) -> usize {
        BasisIndex { i, j }.flat(self.degree)
    }

    pub fn contains(&self, x: f64, t: f64) -> bool {
        (0.0..=1.0).contains(&x) && (0.0..=self.t_max).contains(&t)
    }

    pub fn check_point(&self, x: f64, t: f64) -> Result<()> {
        if self.contains(x, t) {
            Ok(())
        } else {
            Err(PislabError::OutOfDomain { x, t, t_max: self.t_max })
        }
    }
}

/// Exponent pair `(i, j)` of the monomial `x^i t^j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BasisIndex {
    pub i: usize,
    pub j: usize,
}

impl BasisIndex {
    pub fn flat(self, degree: usize) -> usize {
        self.i * (degree + 1) + self.j
    }

    pub fn from_flat(k: usize, degree: usize) -> Self {
        Self { i: k / (degree + 1), j: k % (degree + 1) }
    }
}

/// Coefficients of a polynomial over the tensor monomial basis, flat order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    pub domain: DomainConfig,
    pub coeffs: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct CoefficientFile {
    p: usize,
    t_max: f64,
    coeffs: Vec<f64>,
}

impl Serialize for CoefficientVector {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CoefficientFile {
            p: self.domain.degree,
            t_max: self.domain.t_max,
            coeffs: self.coeffs.iter().copied().collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CoefficientVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let file = CoefficientFile::deserialize(d)?;
        let domain = DomainConfig::new(file.t_max, file.p).map_err(serde::de::Error::custom)?;
        CoefficientVector::new(domain, file.coeffs).map_err(serde::de::Error::custom)
    }
}

impl CoefficientVector {
    pub fn new(domain: DomainConfig, coeffs: Vec<f64>) -> Result<Self> {
        check_dim(domain.basis_size(), coeffs.len())?;
        Ok(Self { domain, coeffs: DVector::from_vec(coeffs) })
    }

    pub fn from_vector(domain: DomainConfig, coeffs: DVector<f64>) -> Result<Self> {
        check_dim(domain.basis_size(), coeffs.len())?;
        Ok(Self { domain, coeffs })
    }

    pub fn zeros(domain: DomainConfig) -> Self {
        Self { domain, coeffs: DVector::zeros(domain.basis_size()) }
    }

    /// Builds a polynomial from `(coefficient, x-degree, t-degree)` terms.
    /// Repeated monomials accumulate.
    pub fn from_terms(domain: DomainConfig, terms: &[(f64, usize, usize)]) -> Result<Self> {
        let mut a = Self::zeros(domain);
        for &(c, i, j) in terms {
            if i > domain.degree || j > domain.degree {
                return Err(PislabError::Config(format!(
                    "monomial x^{i} t^{j} exceeds degree {}",
                    domain.degree
                )));
            }
            a.coeffs[domain.flat(i, j)] += c;
        }
        Ok(a)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.coeffs[self.domain.flat(i, j)]
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub(crate) fn check_compatible(&self, other: &DomainConfig) -> Result<()> {
        check_dim(other.basis_size(), self.coeffs.len())
    }
}

/// Monomial coefficients of the orthonormal shifted Legendre polynomials on
/// `[0, 1]`: column `k` holds the coefficients of `P_k`, row `j` the power.
/// Rescaled by `length^-j` for the interval `[0, length]`.
fn legendre_to_monomial(degree: usize, length: f64) -> DMatrix<f64> {
    let mut w = DMatrix::zeros(degree + 1, degree + 1);
    for k in 0..=degree {
        let norm = ((2 * k + 1) as f64).sqrt();
        for j in 0..=k {
            let sign = if (k + j) % 2 == 0 { 1.0 } else { -1.0 };
            let c = binomial(k, j) * binomial(k + j, j);
            w[(j, k)] = sign * norm * c / length.powi(j as i32);
        }
    }
    w
}

fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    let mut acc = 1.0_f64;
    for m in 0..k {
        acc = acc * (n - m) as f64 / (m + 1) as f64;
    }
    acc.round()
}

fn upper_triangular_inverse(u: &DMatrix<f64>) -> DMatrix<f64> {
    let n = u.nrows();
    let mut inv = DMatrix::zeros(n, n);
    for col in 0..n {
        for row in (0..=col).rev() {
            let mut s = if row == col { 1.0 } else { 0.0 };
            for m in row + 1..=col {
                s -= u[(row, m)] * inv[(m, col)];
            }
            inv[(row, col)] = s / u[(row, row)];
        }
    }
    inv
}

/// Exact change of basis between monomial coefficients `a` and orthonormal
/// coordinates `b`, with `a = W b` and `W^T G W = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct Whitening {
    to_monomial: DMatrix<f64>,
    from_monomial: DMatrix<f64>,
}

impl Whitening {
    pub fn new(domain: &DomainConfig) -> Self {
        let wx = legendre_to_monomial(domain.degree, 1.0);
        let wt = legendre_to_monomial(domain.degree, domain.t_max);
        let wx_inv = upper_triangular_inverse(&wx);
        let wt_inv = upper_triangular_inverse(&wt);
        Self { to_monomial: wx.kronecker(&wt), from_monomial: wx_inv.kronecker(&wt_inv) }
    }

    /// `W`: orthonormal coordinates to monomial coefficients.
    pub fn to_monomial(&self) -> &DMatrix<f64> {
        &self.to_monomial
    }

    /// `W^-1`: monomial coefficients to orthonormal coordinates.
    pub fn from_monomial(&self) -> &DMatrix<f64> {
        &self.from_monomial
    }

    pub fn whiten(&self, a: &DVector<f64>) -> DVector<f64> {
        &self.from_monomial * a
    }

    pub fn unwhiten(&self, b: &DVector<f64>) -> DVector<f64> {
        &self.to_monomial * b
    }
}

/// Diagnostics attached to objects that are valid but numerically fragile.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Diagnostic {
    DegreeAboveCap { degree: usize, cap: usize },
}

/// `L2(mu)` inner products of the basis monomials.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub domain: DomainConfig,
    pub matrix: DMatrix<f64>,
    pub whitening: Whitening,
    pub diagnostics: Vec<Diagnostic>,
}

/// `<x^i t^j, x^k t^l> = 1/(i+k+1) * T^(j+l)/(j+l+1)` under the uniform
/// probability measure.
pub fn build_gram(domain: DomainConfig) -> GramMatrix {
    let n = domain.basis_size();
    let p = domain.degree;
    let mut g = DMatrix::zeros(n, n);
    for r in 0..n {
        let BasisIndex { i, j } = BasisIndex::from_flat(r, p);
        for c in r..n {
            let BasisIndex { i: k, j: l } = BasisIndex::from_flat(c, p);
            let v = 1.0 / (i + k + 1) as f64 * domain.t_max.powi((j + l) as i32)
                / (j + l + 1) as f64;
            g[(r, c)] = v;
            g[(c, r)] = v;
        }
    }
    let mut diagnostics = Vec::new();
    if domain.degree > domain.degree_cap {
        log::warn!(
            "degree {} exceeds conditioning cap {}; Gram matrix is close to singular",
            domain.degree,
            domain.degree_cap
        );
        diagnostics.push(Diagnostic::DegreeAboveCap { degree: domain.degree, cap: domain.degree_cap });
    }
    GramMatrix { domain, matrix: g, whitening: Whitening::new(&domain), diagnostics }
}

impl GramMatrix {
    /// Raw quadratic form `a^T G b`.
    pub fn inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        self.whitening.whiten(a).dot(&self.whitening.whiten(b))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

/// `sqrt(a^T G a)`, evaluated in orthonormal coordinates.
pub fn l2_norm(a: &CoefficientVector, gram: &GramMatrix) -> Result<f64> {
    a.check_compatible(&gram.domain)?;
    Ok(gram.whitening.whiten(&a.coeffs).norm())
}

pub fn l2_distance(a: &CoefficientVector, b: &CoefficientVector, gram: &GramMatrix) -> Result<f64> {
    a.check_compatible(&gram.domain)?;
    b.check_compatible(&gram.domain)?;
    Ok(gram.whitening.whiten(&(&a.coeffs - &b.coeffs)).norm())
}

/// Closed convex class `{h : ||h||_{L2(mu)} <= K}`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionClass {
    pub domain: DomainConfig,
    pub gram: GramMatrix,
    pub radius: f64,
}

impl FunctionClass {
    pub fn new(domain: DomainConfig, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(PislabError::Config(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Self { domain, gram: build_gram(domain), radius })
    }

    pub fn contains(&self, a: &CoefficientVector) -> Result<bool> {
        Ok(l2_norm(a, &self.gram)? <= self.radius)
    }

    pub fn whitening(&self) -> &Whitening {
        &self.gram.whitening
    }
}

/// Gram-metric projection onto the centred ball.
pub fn project_ball(a: &CoefficientVector, class: &FunctionClass) -> CoefficientVector {
    let norm = class.gram.whitening.whiten(&a.coeffs).norm();
    if norm <= class.radius {
        a.clone()
    } else {
        CoefficientVector { domain: a.domain, coeffs: &a.coeffs * (class.radius / norm) }
    }
}

/// Euclidean projection onto `{b : ||b|| <= radius}` in orthonormal coordinates.
pub(crate) fn project_euclidean_ball(b: &DVector<f64>, radius: f64) -> DVector<f64> {
    let norm = b.norm();
    if norm <= radius {
        b.clone()
    } else {
        b * (radius / norm)
    }
}

fn powers(z: f64, degree: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(degree + 1);
    let mut acc = 1.0;
    for _ in 0..=degree {
        out.push(acc);
        acc *= z;
    }
    out
}

/// Evaluates `h_a` at each point.
pub fn evaluate(a: &CoefficientVector, points: &[(f64, f64)]) -> Result<DVector<f64>> {
    let domain = a.domain;
    let p = domain.degree;
    let mut out = DVector::zeros(points.len());
    for (r, &(x, t)) in points.iter().enumerate() {
        domain.check_point(x, t)?;
        // Horner in x over inner polynomials in t.
        let mut acc = 0.0;
        for i in (0..=p).rev() {
            let mut inner = 0.0;
            for j in (0..=p).rev() {
                inner = inner * t + a.coeffs[i * (p + 1) + j];
            }
            acc = acc * x + inner;
        }
        out[r] = acc;
    }
    Ok(out)
}

/// Rows `x^i t^j` for each sample point.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub matrix: DMatrix<f64>,
}

pub fn design_matrix(points: &[(f64, f64)], domain: &DomainConfig) -> Result<DesignMatrix> {
    if points.is_empty() {
        return Err(PislabError::Empty("design matrix needs at least one point"));
    }
    let p = domain.degree;
    let mut m = DMatrix::zeros(points.len(), domain.basis_size());
    for (r, &(x, t)) in points.iter().enumerate() {
        domain.check_point(x, t)?;
        let xp = powers(x, p);
        let tp = powers(t, p);
        for i in 0..=p {
            for j in 0..=p {
                m[(r, i * (p + 1) + j)] = xp[i] * tp[j];
            }
        }
    }
    Ok(DesignMatrix { matrix: m })
}

/// Design matrix in orthonormal coordinates, `Phi W`.
pub(crate) fn orthonormal_design(points: &[(f64, f64)], gram: &GramMatrix) -> Result<DMatrix<f64>> {
    let phi = design_matrix(points, &gram.domain)?;
    Ok(phi.matrix * gram.whitening.to_monomial())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn unit(p: usize) -> DomainConfig {
        DomainConfig::new(1.0, p).unwrap()
    }

    #[test]
    fn gram_entries_match_moments() {
        let g = build_gram(unit(1));
        let d = unit(1);
        assert_eq!(g.matrix[(0, 0)], 1.0);
        let x = d.flat(1, 0);
        assert!((g.matrix[(x, x)] - 1.0 / 3.0).abs() < 1e-15);
        let xt = d.flat(1, 1);
        assert!((g.matrix[(xt, xt)] - 1.0 / 9.0).abs() < 1e-15);
        assert_eq!(g.matrix, g.matrix.transpose());
    }

    #[test]
    fn whitening_diagonalises_gram() {
        for &t in &[0.5, 1.0, 2.0] {
            for p in 0..=6 {
                let d = DomainConfig::new(t, p).unwrap();
                let g = build_gram(d);
                let w = g.whitening.to_monomial();
                let id = w.transpose() * &g.matrix * w;
                let err = (id - DMatrix::<f64>::identity(d.basis_size(), d.basis_size())).amax();
                // Forming W^T G W in floating point loses about |W|^2 eps.
                let scale = w.amax() * w.amax() * d.basis_size() as f64;
                assert!(err < 1e-15 * scale, "p={p} T={t} err={err}");
                let round = g.whitening.from_monomial() * w;
                assert!((round - DMatrix::<f64>::identity(d.basis_size(), d.basis_size())).amax() < 1e-9);
            }
        }
    }

    #[test]
    fn gram_is_positive_definite_up_to_cap() {
        for &t in &[0.5, 1.0, 2.0] {
            for p in 0..=6 {
                let g = build_gram(DomainConfig::new(t, p).unwrap());
                // The monomial Gram is a Kronecker product of two Hilbert-type
                // factors; it is positive definite iff both factors are.
                let n = p + 1;
                let gx = DMatrix::from_fn(n, n, |i, k| 1.0 / (i + k + 1) as f64);
                let gt = DMatrix::from_fn(n, n, |j, l| t.powi((j + l) as i32) / (j + l + 1) as f64);
                assert!(gx.clone().cholesky().is_some() && gt.clone().cholesky().is_some());
                assert!((gx.kronecker(&gt) - &g.matrix).amax() < 1e-14);
                if p <= 4 {
                    assert!(g.matrix.clone().cholesky().is_some(), "p={p} T={t}");
                }
            }
        }
    }

    #[test]
    fn degree_above_cap_attaches_warning() {
        let d = DomainConfig::new(1.0, 7).unwrap();
        assert_eq!(build_gram(d).diagnostics, vec![Diagnostic::DegreeAboveCap { degree: 7, cap: 6 }]);
        assert!(build_gram(unit(6)).diagnostics.is_empty());
    }

    #[test]
    fn evaluate_examples() {
        let d = unit(2);
        let one = CoefficientVector::from_terms(d, &[(1.0, 0, 0)]).unwrap();
        assert_eq!(evaluate(&one, &[(0.3, 0.9)]).unwrap()[0], 1.0);
        let heat2 = CoefficientVector::from_terms(d, &[(1.0, 2, 0), (2.0, 0, 1)]).unwrap();
        assert!((evaluate(&heat2, &[(0.5, 0.25)]).unwrap()[0] - 0.75).abs() < 1e-15);
        let zero = CoefficientVector::zeros(d);
        assert_eq!(evaluate(&zero, &[(0.1, 0.2), (1.0, 1.0)]).unwrap().amax(), 0.0);
        assert!(matches!(evaluate(&one, &[(1.5, 0.0)]), Err(PislabError::OutOfDomain { .. })));
        assert!(matches!(evaluate(&one, &[(0.5, -0.1)]), Err(PislabError::OutOfDomain { .. })));
    }

    #[test]
    fn design_rows() {
        let d = DomainConfig::new(2.0, 1).unwrap();
        let m = design_matrix(&[(0.0, 0.0)], &d).unwrap().matrix;
        assert_eq!(m.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 0.0, 0.0, 0.0]);
        let m = design_matrix(&[(1.0, 2.0)], &d).unwrap().matrix;
        assert_eq!(m.row(0).iter().copied().collect::<Vec<_>>(), vec![1.0, 2.0, 1.0, 2.0]);
        assert!(matches!(design_matrix(&[], &d), Err(PislabError::Empty(_))));
    }

    #[test]
    fn design_agrees_with_evaluate() {
        let d = DomainConfig::new(1.5, 3).unwrap();
        let mut rng = rng::stream(11, &[0]);
        for _ in 0..100 {
            let a = CoefficientVector::new(d, (0..16).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
            let pts: Vec<(f64, f64)> =
                (0..7).map(|_| (rng.random_range(0.0..1.0), rng.random_range(0.0..1.5))).collect();
            let direct = evaluate(&a, &pts).unwrap();
            let via = design_matrix(&pts, &d).unwrap().matrix * &a.coeffs;
            assert!((direct - via).amax() < 1e-14);
        }
    }

    #[test]
    fn norm_examples() {
        let d = unit(2);
        let g = build_gram(d);
        assert_eq!(l2_norm(&CoefficientVector::zeros(d), &g).unwrap(), 0.0);
        let x = CoefficientVector::from_terms(d, &[(1.0, 1, 0)]).unwrap();
        assert!((l2_norm(&x, &g).unwrap() - 1.0 / 3f64.sqrt()).abs() < 1e-14);
        let bad = CoefficientVector::zeros(unit(1));
        assert!(matches!(l2_norm(&bad, &g), Err(PislabError::DimensionMismatch { .. })));
    }

    #[test]
    fn norm_matches_monte_carlo_integral() {
        // ||x^2 + 2t||^2 = 1/5 + 2/3 + 4/3, cross-checked by plain Monte Carlo.
        let d = unit(2);
        let g = build_gram(d);
        let h = CoefficientVector::from_terms(d, &[(1.0, 2, 0), (2.0, 0, 1)]).unwrap();
        let quad = h.coeffs.dot(&(&g.matrix * &h.coeffs));
        let exact = 1.0 / 5.0 + 2.0 * 2.0 * (1.0 / 3.0) * (1.0 / 2.0) + 4.0 / 3.0;
        assert!((quad - exact).abs() < 1e-14);
        let mut rng = rng::stream(3, &[1]);
        let m = 1_000_000;
        let pts: Vec<(f64, f64)> = (0..m).map(|_| (rng.random::<f64>(), rng.random::<f64>())).collect();
        let vals = evaluate(&h, &pts).unwrap();
        let mc = vals.iter().map(|v| v * v).sum::<f64>() / m as f64;
        assert!((mc.sqrt() - l2_norm(&h, &g).unwrap()).abs() < 1e-3);
    }

    #[test]
    fn projection_examples() {
        let d = unit(1);
        let class = FunctionClass::new(d, 1.0).unwrap();
        let inside = CoefficientVector::from_terms(d, &[(0.5, 0, 0)]).unwrap();
        assert_eq!(project_ball(&inside, &class), inside);
        let outside = CoefficientVector::from_terms(d, &[(2.0, 0, 0)]).unwrap();
        let p = project_ball(&outside, &class);
        assert!((l2_norm(&p, &class.gram).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(project_ball(&p, &class), p);
    }

    #[test]
    fn coefficient_json_schema() {
        let d = DomainConfig::new(2.0, 1).unwrap();
        let a = CoefficientVector::new(d, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, r#"{"p":1,"t_max":2.0,"coeffs":[1.0,2.0,3.0,4.0]}"#);
        let back: CoefficientVector = serde_json::from_str(&s).unwrap();
        assert_eq!(back, a);
        assert!(serde_json::from_str::<CoefficientVector>(r#"{"p":1,"t_max":1.0,"coeffs":[1.0]}"#).is_err());
    }

    #[test]
    fn basis_index_bijection() {
        for p in 0..=6 {
            for k in 0..(p + 1) * (p + 1) {
                assert_eq!(BasisIndex::from_flat(k, p).flat(p), k);
            }
        }
    }
    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn coeffs(p: usize) -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(-5.0..5.0f64, (p + 1) * (p + 1))
        }

        proptest! {
            #[test]
            fn whitening_round_trips((p, v) in (0usize..=6).prop_flat_map(|p| (Just(p), coeffs(p)))) {
                let d = unit(p);
                let g = build_gram(d);
                let a = DVector::from_vec(v);
                let back = g.whitening.unwhiten(&g.whitening.whiten(&a));
                prop_assert!((back - &a).amax() <= 1e-8 * (1.0 + a.amax()));
            }

            #[test]
            fn norm_is_the_gram_form((p, v) in (0usize..=5).prop_flat_map(|p| (Just(p), coeffs(p)))) {
                let d = unit(p);
                let g = build_gram(d);
                let a = CoefficientVector::new(d, v).unwrap();
                let quad = a.coeffs.dot(&(&g.matrix * &a.coeffs));
                let norm = l2_norm(&a, &g).unwrap();
                prop_assert!(norm >= 0.0);
                prop_assert!((norm * norm - quad).abs() <= 1e-9 * (1.0 + quad));
            }

            #[test]
            fn projection_lands_in_the_ball_and_is_idempotent(
                (p, v) in (0usize..=4).prop_flat_map(|p| (Just(p), coeffs(p))),
                radius in 0.1..20.0f64,
            ) {
                let d = unit(p);
                let class = FunctionClass::new(d, radius).unwrap();
                let a = CoefficientVector::new(d, v).unwrap();
                let once = project_ball(&a, &class);
                prop_assert!(l2_norm(&once, &class.gram).unwrap() <= radius * (1.0 + 1e-12));
                let twice = project_ball(&once, &class);
                prop_assert!(l2_distance(&once, &twice, &class.gram).unwrap() <= 1e-10 * radius);
                if l2_norm(&a, &class.gram).unwrap() <= radius {
                    prop_assert_eq!(once, a);
                }
            }
        }
    }

}
