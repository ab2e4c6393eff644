//! Constant-coefficient linear differential operators acting on coefficient
//! vectors, the penalty `Psi(h) = ||D h - g||_{L2(mu)}`, and kernel /
//! particular-solution decompositions of `D a = c`.
//!
//! Derivatives of monomials beyond degree `p` are dropped: coefficients
//! `a[i, j]` with `max(i, j) > p` are read as zero.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, PislabError, Result};
use crate::poly_space::{CoefficientVector, DomainConfig, GramMatrix};

/// Singular values below `RANK_TOLERANCE * sigma_max` count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

/// One term `coeff * d^dt/dt^dt d^dx/dx^dx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorTerm {
    pub coeff: f64,
    pub dt: usize,
    pub dx: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearOperator {
    pub domain: DomainConfig,
    /// Maps coefficients of `h` to coefficients of `D h`.
    pub matrix: DMatrix<f64>,
    pub terms: Vec<OperatorTerm>,
}

/// Serialised form `{"p": .., "terms": [{"coeff", "dt", "dx"}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorFile {
    pub p: usize,
    pub terms: Vec<OperatorTerm>,
}

impl LinearOperator {
    pub fn apply(&self, a: &CoefficientVector) -> Result<CoefficientVector> {
        a.check_compatible(&self.domain)?;
        Ok(CoefficientVector { domain: self.domain, coeffs: &self.matrix * &a.coeffs })
    }

    pub fn to_file(&self) -> OperatorFile {
        OperatorFile { p: self.domain.degree, terms: self.terms.clone() }
    }

    pub fn from_file(file: &OperatorFile, t_max: f64) -> Result<Self> {
        let domain = DomainConfig::new(t_max, file.p)?;
        custom_operator(&file.terms, &domain)
    }
}

fn shift_matrix(domain: &DomainConfig, along_x: bool) -> DMatrix<f64> {
    let p = domain.degree;
    let n = domain.basis_size();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..=p {
        for j in 0..=p {
            let (si, sj, factor) = if along_x { (i + 1, j, i + 1) } else { (i, j + 1, j + 1) };
            if si <= p && sj <= p {
                m[(domain.flat(i, j), domain.flat(si, sj))] = factor as f64;
            }
        }
    }
    m
}

/// `(dx a)[i, j] = a[i + 1, j] (i + 1)`.
pub fn dx_matrix(domain: &DomainConfig) -> LinearOperator {
    LinearOperator {
        domain: *domain,
        matrix: shift_matrix(domain, true),
        terms: vec![OperatorTerm { coeff: 1.0, dt: 0, dx: 1 }],
    }
}

/// `(dt a)[i, j] = a[i, j + 1] (j + 1)`.
pub fn dt_matrix(domain: &DomainConfig) -> LinearOperator {
    LinearOperator {
        domain: *domain,
        matrix: shift_matrix(domain, false),
        terms: vec![OperatorTerm { coeff: 1.0, dt: 1, dx: 0 }],
    }
}

/// Heat operator `dt - dxx`.
pub fn heat_operator(domain: &DomainConfig) -> LinearOperator {
    let dx = shift_matrix(domain, true);
    let dt = shift_matrix(domain, false);
    LinearOperator {
        domain: *domain,
        matrix: dt - &dx * &dx,
        terms: vec![
            OperatorTerm { coeff: 1.0, dt: 1, dx: 0 },
            OperatorTerm { coeff: -1.0, dt: 0, dx: 2 },
        ],
    }
}

/// `sum coeff * dt^a dx^b` over the term list.
pub fn custom_operator(terms: &[OperatorTerm], domain: &DomainConfig) -> Result<LinearOperator> {
    let p = domain.degree;
    let n = domain.basis_size();
    let dx = shift_matrix(domain, true);
    let dt = shift_matrix(domain, false);
    let mut matrix = DMatrix::zeros(n, n);
    for term in terms {
        if term.dt > p || term.dx > p {
            return Err(PislabError::Config(format!(
                "derivative order (dt {}, dx {}) exceeds degree {p}",
                term.dt, term.dx
            )));
        }
        let mut block = DMatrix::identity(n, n);
        for _ in 0..term.dt {
            block = &dt * block;
        }
        for _ in 0..term.dx {
            block = &dx * block;
        }
        matrix += block * term.coeff;
    }
    Ok(LinearOperator { domain: *domain, matrix, terms: terms.to_vec() })
}

/// Operator, forcing and Gram matrix defining `Psi`.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec {
    pub operator: LinearOperator,
    pub forcing: CoefficientVector,
    pub gram: GramMatrix,
}

impl PenaltySpec {
    pub fn new(operator: LinearOperator, forcing: CoefficientVector, gram: GramMatrix) -> Result<Self> {
        let n = gram.domain.basis_size();
        check_dim(n, operator.matrix.nrows())?;
        check_dim(n, forcing.len())?;
        Ok(Self { operator, forcing, gram })
    }

    /// Homogeneous problem `D h = 0`.
    pub fn homogeneous(operator: LinearOperator, gram: GramMatrix) -> Result<Self> {
        let forcing = CoefficientVector::zeros(gram.domain);
        Self::new(operator, forcing, gram)
    }

    /// Coefficients of the residual `D h - g`.
    pub fn residual(&self, a: &CoefficientVector) -> Result<CoefficientVector> {
        a.check_compatible(&self.gram.domain)?;
        Ok(CoefficientVector {
            domain: self.gram.domain,
            coeffs: &self.operator.matrix * &a.coeffs - &self.forcing.coeffs,
        })
    }

    /// The penalty expressed in orthonormal coordinates.
    pub fn form(&self) -> PenaltyForm {
        let w = &self.gram.whitening;
        PenaltyForm {
            matrix: w.from_monomial() * &self.operator.matrix * w.to_monomial(),
            rhs: w.whiten(&self.forcing.coeffs),
        }
    }
}

/// `sqrt((D a - c)^T G (D a - c))`.
pub fn psi_exact(spec: &PenaltySpec, a: &CoefficientVector) -> Result<f64> {
    let r = spec.residual(a)?;
    Ok(spec.gram.whitening.whiten(&r.coeffs).norm())
}

/// A penalty `||A b - c||_2` over orthonormal coordinates `b`. The exact
/// penalty and its collocation approximations both reduce to this form.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyForm {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl PenaltyForm {
    pub fn value(&self, b: &DVector<f64>) -> f64 {
        (&self.matrix * b - &self.rhs).norm()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// Solution set of `A b = c` as an affine subspace.
    pub fn affine_kernel(&self, tolerance: f64) -> Result<AffineSubspace> {
        let d = self.dim();
        let svd = self.matrix.clone().svd(true, true);
        let u = svd.u.as_ref().expect("requested U");
        let v_t = svd.v_t.as_ref().expect("requested V^T");
        let sigma_max = svd.singular_values.max();
        let cut = tolerance * sigma_max;
        let mut offset = DVector::zeros(d);
        let mut kept = Vec::new();
        for (k, &s) in svd.singular_values.iter().enumerate() {
            if s > cut && s > 0.0 {
                let coef = u.column(k).dot(&self.rhs) / s;
                offset += v_t.row(k).transpose() * coef;
                kept.push(k);
            }
        }
        let residual = (&self.matrix * &offset - &self.rhs).norm();
        if residual > tolerance.sqrt() * self.rhs.norm().max(1.0) {
            return Err(PislabError::Infeasible {
                reason: "forcing is not in the range of the operator".into(),
                residual,
            });
        }
        let null: Vec<DVector<f64>> = null_vectors(v_t, &kept, d);
        let basis = if null.is_empty() { DMatrix::zeros(d, 0) } else { DMatrix::from_columns(&null) };
        Ok(AffineSubspace::new(offset, basis))
    }
}

fn null_vectors(v_t: &DMatrix<f64>, kept: &[usize], d: usize) -> Vec<DVector<f64>> {
    let rows = v_t.nrows();
    let mut out: Vec<DVector<f64>> =
        (0..rows).filter(|k| !kept.contains(k)).map(|k| v_t.row(k).transpose()).collect();
    // Thin SVDs of wide matrices return fewer rows than columns; complete the
    // basis with the orthogonal complement of the row space.
    if rows < d {
        let mut span: Vec<DVector<f64>> = (0..rows).map(|k| v_t.row(k).transpose()).collect();
        for e in 0..d {
            let mut cand = DVector::zeros(d);
            cand[e] = 1.0;
            for s in &span {
                let c = s.dot(&cand);
                cand -= s * c;
            }
            let nrm = cand.norm();
            if nrm > 1e-8 {
                cand /= nrm;
                span.push(cand.clone());
                out.push(cand);
            }
            if span.len() == d {
                break;
            }
        }
    }
    out
}

/// `{offset + basis z}` with orthonormal basis columns and `offset`
/// orthogonal to them, in orthonormal function coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineSubspace {
    pub offset: DVector<f64>,
    pub basis: DMatrix<f64>,
}

impl AffineSubspace {
    pub(crate) fn new(offset: DVector<f64>, basis: DMatrix<f64>) -> Self {
        let offset = if basis.ncols() > 0 {
            let along = basis.transpose() * &offset;
            offset - &basis * along
        } else {
            offset
        };
        Self { offset, basis }
    }

    pub fn dimension(&self) -> usize {
        self.basis.ncols()
    }

    pub fn point(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.offset + &self.basis * z
    }

    /// Orthogonal projection of `b` onto the subspace.
    pub fn project(&self, b: &DVector<f64>) -> DVector<f64> {
        let z = self.basis.transpose() * (b - &self.offset);
        self.point(&z)
    }
}

/// Particular solution and Gram-orthonormal null space of `D a = c`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelDecomposition {
    /// Minimum Euclidean-norm least-squares solution.
    pub particular: CoefficientVector,
    /// Gram norm of the particular solution.
    pub particular_gram_norm: f64,
    /// Columns form a Gram-orthonormal basis of the null space.
    pub nullspace_basis: DMatrix<f64>,
    pub dimension: usize,
    pub rank: usize,
    pub residual: f64,
}

impl KernelDecomposition {
    /// The solution set in orthonormal coordinates.
    pub fn whitened(&self, gram: &GramMatrix) -> AffineSubspace {
        let w = &gram.whitening;
        let basis = w.from_monomial() * &self.nullspace_basis;
        AffineSubspace::new(w.whiten(&self.particular.coeffs), basis)
    }
}

pub fn kernel_decomposition(
    operator: &LinearOperator,
    forcing: &CoefficientVector,
    gram: &GramMatrix,
    tolerance: f64,
) -> Result<KernelDecomposition> {
    let d = gram.domain.basis_size();
    check_dim(d, operator.matrix.ncols())?;
    check_dim(d, forcing.len())?;
    let svd = operator.matrix.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested U");
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let sigma_max = svd.singular_values.max();
    let cut = tolerance * sigma_max;
    let mut particular = DVector::zeros(d);
    let mut kept = Vec::new();
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cut && s > 0.0 {
            particular += v_t.row(k).transpose() * (u.column(k).dot(&forcing.coeffs) / s);
            kept.push(k);
        }
    }
    let residual = (&operator.matrix * &particular - &forcing.coeffs).norm();
    if residual > tolerance * forcing.coeffs.norm().max(1.0) * sigma_max.max(1.0) {
        return Err(PislabError::Infeasible {
            reason: "forcing is not in the column space of the operator".into(),
            residual,
        });
    }
    let rank = kept.len();
    let null = null_vectors(v_t, &kept, d);
    let dimension = null.len();
    let nullspace_basis = if dimension == 0 {
        DMatrix::zeros(d, 0)
    } else {
        // Gram-orthonormalise: QR of the whitened columns, mapped back.
        let whitened = gram.whitening.from_monomial() * DMatrix::from_columns(&null);
        let q = whitened.qr().q();
        gram.whitening.to_monomial() * q
    };
    let particular = CoefficientVector { domain: gram.domain, coeffs: particular };
    let particular_gram_norm = gram.whitening.whiten(&particular.coeffs).norm();
    Ok(KernelDecomposition { particular, particular_gram_norm, nullspace_basis, dimension, rank, residual })
}

/// Heat polynomials `v_0 .. v_k` (`1, x, x^2 + 2t, x^3 + 6xt, ...`), the
/// polynomial solutions of `u_t = u_xx`. Requires `k <= p`.
pub fn heat_polynomial(domain: DomainConfig, k: usize) -> Result<CoefficientVector> {
    // v_k(x, t) = sum_{m <= k/2} k! / (m! (k - 2m)!) x^(k-2m) t^m
    let mut terms = Vec::new();
    let fact = |n: usize| (1..=n).map(|v| v as f64).product::<f64>();
    for m in 0..=k / 2 {
        terms.push((fact(k) / (fact(m) * fact(k - 2 * m)), k - 2 * m, m));
    }
    CoefficientVector::from_terms(domain, &terms)
}
