//! Closed-form error bounds and their hypothesis checks.
//!
//! Everything here is plain arithmetic on measured or assumed constants; the
//! Monte Carlo quantities (`r(rho)`, `lambda_0`, `d_n`) come from elsewhere.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complexity::{sample_points, upper_quantile, NoiseModel};
use crate::error::{PislabError, Result};
use crate::poly_space::{evaluate, l2_distance, CoefficientVector, GramMatrix};
use crate::rng;

/// Constants entering the bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoremInputs {
    /// `Psi(f*)`.
    pub psi_fstar: f64,
    /// `sup Psi` over the target set.
    pub psi_hstar: f64,
    /// Expected risk `L(h*)`.
    #[serde(rename = "L_hstar")]
    pub l_hstar: f64,
    pub d_n: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub tau: f64,
    pub lambda: f64,
    /// Critical weight `lambda_0(delta, tau)`; zero without noise.
    #[serde(default)]
    pub lambda0: f64,
    pub rho: f64,
    /// `r(rho)` from the complexity estimates.
    pub r_rho: f64,
    pub n: u64,
}

impl TheoremInputs {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("psi_fstar", self.psi_fstar),
            ("psi_hstar", self.psi_hstar),
            ("L_hstar", self.l_hstar),
            ("d_n", self.d_n),
            ("gamma", self.gamma),
            ("kappa", self.kappa),
            ("tau", self.tau),
            ("lambda", self.lambda),
            ("lambda0", self.lambda0),
            ("rho", self.rho),
            ("r_rho", self.r_rho),
        ];
        for (name, v) in fields {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(PislabError::Config(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(PislabError::Config(format!("epsilon must lie in (0, 1], got {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(PislabError::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        Ok(())
    }

    /// `exp(-n eps^2 / 2)`.
    fn tail(&self) -> f64 {
        (-(self.n as f64) * self.epsilon * self.epsilon / 2.0).exp()
    }

    /// `theta = kappa^2 eps / 16`.
    pub fn theta(&self) -> f64 {
        self.kappa * self.kappa * self.epsilon / 16.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    /// The quantity being constrained and the threshold it is compared to.
    pub value: f64,
    pub threshold: f64,
    pub satisfied: bool,
}

impl Condition {
    fn greater(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.to_string(), value, threshold, satisfied: value > threshold }
    }

    fn less(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.to_string(), value, threshold, satisfied: value < threshold }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub conditions: Vec<Condition>,
    pub hypotheses_satisfied: bool,
    pub bound_value: Option<f64>,
    /// Confidence level clamped to `[0, 1]`.
    pub probability: f64,
    /// The unclamped confidence expression.
    pub raw_probability: f64,
    /// True when the raw confidence is not positive.
    pub vacuous: bool,
}

impl Certificate {
    fn new(conditions: Vec<Condition>, bound_value: Option<f64>, raw_probability: f64) -> Self {
        Self {
            hypotheses_satisfied: conditions.iter().all(|c| c.satisfied),
            conditions,
            bound_value,
            probability: raw_probability.clamp(0.0, 1.0),
            raw_probability,
            vacuous: raw_probability <= 0.0,
        }
    }

    pub fn condition(&self, name: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

/// `tau_n(rho) = 1/2 - (2 Psi(f*) + L(h*) + d_n + gamma) / (2 rho)`.
pub fn tau_n(rho: f64, inputs: &TheoremInputs) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(PislabError::Config(format!("rho must be positive, got {rho}")));
    }
    Ok(0.5 - (2.0 * inputs.psi_fstar + inputs.l_hstar + inputs.d_n + inputs.gamma) / (2.0 * rho))
}

/// Hypotheses under which `Psi(h_hat) - Psi(h*) <= rho` for the soft-penalised fit.
pub fn theorem1_certificate(inputs: &TheoremInputs) -> Result<Certificate> {
    inputs.validate()?;
    let i = inputs;
    let rho_floor = (2.0 * i.psi_fstar + i.l_hstar + i.d_n + i.gamma).max(i.psi_fstar - i.psi_hstar);
    let tau_max = tau_n(i.rho, i).unwrap_or(f64::NEG_INFINITY);
    let conditions = vec![
        Condition::greater("rho", i.rho, rho_floor),
        Condition::greater("lambda", i.lambda, i.lambda0.max(1.0)),
        Condition::greater("tau_positive", i.tau, 0.0),
        Condition::less("tau", i.tau, tau_max),
    ];
    Ok(Certificate::new(conditions, None, 1.0 - 2.0 * i.delta - 4.0 * i.tail()))
}

/// `||h_hat - f*|| <= max{ r(rho), sqrt(32 lambda Psi(f*) / (kappa^2 eps)) }`.
pub fn theorem2_bound(inputs: &TheoremInputs) -> Result<Certificate> {
    inputs.validate()?;
    let i = inputs;
    if !(i.kappa > 0.0) {
        return Err(PislabError::Config("kappa must be positive".into()));
    }
    let penalty_term = (32.0 * i.lambda * i.psi_fstar / (i.kappa * i.kappa * i.epsilon)).sqrt();
    let tau_max = if i.rho > 0.0 { 0.5 - i.psi_fstar / i.rho } else { f64::NEG_INFINITY };
    let conditions = vec![
        Condition::greater("rho", i.rho, 2.0 * i.psi_fstar),
        Condition::greater("tau_positive", i.tau, 0.0),
        Condition::less("tau", i.tau, tau_max),
    ];
    Ok(Certificate::new(conditions, Some(i.r_rho.max(penalty_term)), 1.0 - 2.0 * i.delta - 2.0 * i.tail()))
}

/// Complexity parameters at which the ERM bound is stated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErmParameters {
    pub theta: f64,
    /// `r_M` is evaluated at `(theta / 5, delta / 4)`.
    pub tau_m: f64,
    pub delta_m: f64,
    /// `r_Q` is evaluated at `kappa eps / 32`.
    pub tau_q: f64,
}

pub fn erm_parameters(inputs: &TheoremInputs) -> ErmParameters {
    let theta = inputs.theta();
    ErmParameters { theta, tau_m: theta / 5.0, delta_m: inputs.delta / 4.0, tau_q: inputs.kappa * inputs.epsilon / 32.0 }
}

/// `||g_hat - f*|| <= max{ r_M, r_Q }` for least squares over a closed convex class.
pub fn erm_bound(r_m: f64, r_q: f64, inputs: &TheoremInputs) -> Result<Certificate> {
    inputs.validate()?;
    if !(r_m >= 0.0 && r_q >= 0.0) {
        return Err(PislabError::Config(format!("complexity estimates must be nonnegative, got {r_m}, {r_q}")));
    }
    Ok(Certificate::new(Vec::new(), Some(r_m.max(r_q)), 1.0 - inputs.delta - 2.0 * inputs.tail()))
}

/// `sqrt(2 lambda / theta (Psi(h*) + L(h*) + d_n + gamma))` with `theta = kappa^2 eps / 16`.
///
/// This bound does not shrink with `n` and is not useful in general; it is
/// what the argument gives before the complexity parameters are brought in.
pub fn bound_h(inputs: &TheoremInputs) -> Result<f64> {
    let theta = inputs.theta();
    if !(theta > 0.0) {
        return Err(PislabError::Config("theta = kappa^2 eps / 16 must be positive".into()));
    }
    let sum = inputs.psi_hstar + inputs.l_hstar + inputs.d_n + inputs.gamma;
    Ok((2.0 * inputs.lambda / theta * sum).sqrt())
}

/// `L(h) = ||h - u*||_G^2 + E e^2`.
pub fn expected_risk(h: &CoefficientVector, u_star: &CoefficientVector, gram: &GramMatrix, noise: &NoiseModel) -> Result<f64> {
    Ok(l2_distance(h, u_star, gram)?.powi(2) + noise.second_moment())
}

/// Inputs to the `d_n(eps)` estimate.
#[derive(Debug, Clone)]
pub struct DnProblem<'a> {
    /// Members of the target set; a singleton `{f*}` for convex classes.
    pub targets: &'a [CoefficientVector],
    pub u_star: &'a CoefficientVector,
    pub gram: &'a GramMatrix,
    pub noise: NoiseModel,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DnEstimate {
    pub value: f64,
    /// Quantile level `1 - 2 exp(-n eps^2 / 2)`.
    pub level: f64,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
}

/// Empirical quantile of `sup_h |L_n(h) - L(h)|` over the target set. The
/// samples depend only on `(seed, n, rep)`, so enlarging the target set
/// never decreases the estimate.
pub fn estimate_dn(problem: &DnProblem, n: usize, reps: usize, seed: u64) -> Result<DnEstimate> {
    if problem.targets.is_empty() {
        return Err(PislabError::Empty("target set"));
    }
    if n == 0 || reps == 0 {
        return Err(PislabError::Config("n and reps must be positive".into()));
    }
    problem.noise.validate()?;
    let domain = problem.u_star.domain;
    let risks = problem
        .targets
        .iter()
        .map(|h| expected_risk(h, problem.u_star, problem.gram, &problem.noise))
        .collect::<Result<Vec<_>>>()?;
    let draws = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut r = rng::stream(seed, &[0xD0, n as u64, rep as u64]);
            let points = sample_points(&domain, n, &mut r);
            let clean = evaluate(problem.u_star, &points)?;
            let y: Vec<f64> = clean.iter().map(|v| v + problem.noise.sample(&mut r)).collect();
            let mut sup: f64 = 0.0;
            for (h, risk) in problem.targets.iter().zip(&risks) {
                let fitted = evaluate(h, &points)?;
                let ln = fitted.iter().zip(&y).map(|(f, y)| (f - y).powi(2)).sum::<f64>() / n as f64;
                sup = sup.max((ln - risk).abs());
            }
            Ok(sup)
        })
        .collect::<Result<Vec<_>>>()?;
    let level = 1.0 - 2.0 * (-(n as f64) * problem.epsilon.powi(2) / 2.0).exp();
    Ok(DnEstimate { value: upper_quantile(&draws, 1.0 - level), level, n, reps, seed })
}
