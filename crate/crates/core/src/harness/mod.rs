//! Synthetic experiments: data generation, fit sweeps and their summaries.
//!
//! Every configuration is a JSON document in which each field has a default
//! and unknown fields are rejected. The defaults reproduce experiment E1.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complexity::{sample_points, NoiseModel, NoiseSource, PenaltyFamily};
use crate::diff_ops::{custom_operator, heat_operator, psi_exact, OperatorTerm, PenaltySpec};
use crate::error::{PislabError, Result};
use crate::estimators::{check_minimiser_inequality, fit, Dataset, FitConfig, FitMode, PenaltyEval, SolverSettings};
use crate::penalty_mc::{fixed_grid, random_collocation};
use crate::poly_space::{evaluate, l2_distance, project_ball, CoefficientVector, DomainConfig, FunctionClass};
use crate::rng;

pub mod presets;


/// One monomial `coeff * x^x * t^t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub coeff: f64,
    pub x: usize,
    pub t: usize,
}

fn to_coefficients(domain: DomainConfig, terms: &[Term]) -> Result<CoefficientVector> {
    let triples: Vec<(f64, usize, usize)> = terms.iter().map(|t| (t.coeff, t.x, t.t)).collect();
    CoefficientVector::from_terms(domain, &triples)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorChoice {
    /// `u_t - u_xx`.
    #[default]
    Heat,
    Custom { terms: Vec<OperatorTerm> },
}

/// Domain, class, target and penalty shared by every experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub t_max: f64,
    pub degree: usize,
    /// Radius `K` of the `L2(mu)` ball.
    pub radius: f64,
    /// `u*`, possibly outside the ball.
    pub target: Vec<Term>,
    pub operator: OperatorChoice,
    /// Forcing `g` of `D h = g`.
    pub forcing: Vec<Term>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            t_max: 1.0,
            degree: 4,
            radius: 10.0,
            target: vec![Term { coeff: 1.0, x: 2, t: 0 }, Term { coeff: 2.0, x: 0, t: 1 }],
            operator: OperatorChoice::Heat,
            forcing: Vec::new(),
        }
    }
}

/// A `ProblemConfig` with its derived objects.
#[derive(Debug, Clone)]
pub struct Problem {
    pub domain: DomainConfig,
    pub class: FunctionClass,
    pub spec: PenaltySpec,
    pub u_star: CoefficientVector,
    pub f_star: CoefficientVector,
}

impl ProblemConfig {
    pub fn build(&self) -> Result<Problem> {
        let domain = DomainConfig::new(self.t_max, self.degree)?;
        if self.degree > domain.degree_cap {
            return Err(PislabError::Config(format!("degree {} exceeds the cap {}", self.degree, domain.degree_cap)));
        }
        let class = FunctionClass::new(domain, self.radius)?;
        let operator = match &self.operator {
            OperatorChoice::Heat => heat_operator(&domain),
            OperatorChoice::Custom { terms } => custom_operator(terms, &domain)?,
        };
        let spec = PenaltySpec::new(operator, to_coefficients(domain, &self.forcing)?, class.gram.clone())?;
        let u_star = to_coefficients(domain, &self.target)?;
        let f_star = compute_fstar(&u_star, &class);
        Ok(Problem { domain, class, spec, u_star, f_star })
    }
}

impl Problem {
    /// The family `F(rho, Psi)` around `f*`, with `h* = f*` (convex class).
    pub fn family(&self) -> Result<PenaltyFamily> {
        Ok(PenaltyFamily {
            class: self.class.clone(),
            f_star: self.f_star.clone(),
            spec: self.spec.clone(),
            psi_hstar: psi_exact(&self.spec, &self.f_star)?,
        })
    }

    pub fn source(&self, noise: NoiseModel) -> NoiseSource {
        NoiseSource { u_star: self.u_star.clone(), noise }
    }
}

/// `f* = argmin_{f in class} E (f(X) - Y)^2`: the Gram projection of `u*`
/// onto the ball, a radial scaling when `u*` lies outside.
pub fn compute_fstar(u_star: &CoefficientVector, class: &FunctionClass) -> CoefficientVector {
    project_ball(u_star, class)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    Plain,
    Hard,
    SoftNorm,
    SoftSquared,
}

impl ModeKind {
    pub const ALL: [ModeKind; 4] = [ModeKind::Plain, ModeKind::Hard, ModeKind::SoftNorm, ModeKind::SoftSquared];

    pub fn name(self) -> &'static str {
        match self {
            ModeKind::Plain => "plain",
            ModeKind::Hard => "hard",
            ModeKind::SoftNorm => "soft_norm",
            ModeKind::SoftSquared => "soft_squared",
        }
    }

    pub fn uses_lambda(self) -> bool {
        matches!(self, ModeKind::SoftNorm | ModeKind::SoftSquared)
    }

    fn fit_mode(self, lambda: f64, epsilon: f64) -> FitMode {
        match self {
            ModeKind::Plain => FitMode::Plain,
            ModeKind::Hard => FitMode::Hard { epsilon },
            ModeKind::SoftNorm => FitMode::SoftNorm { lambda },
            ModeKind::SoftSquared => FitMode::SoftSquared { lambda },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PenaltyEvalConfig {
    #[default]
    Exact,
    FixedGrid { m_per_axis: usize },
    Random { m: usize, seed: u64 },
}

impl PenaltyEvalConfig {
    pub fn build(&self, domain: &DomainConfig) -> Result<PenaltyEval> {
        Ok(match *self {
            PenaltyEvalConfig::Exact => PenaltyEval::Exact,
            PenaltyEvalConfig::FixedGrid { m_per_axis } => PenaltyEval::Collocation(fixed_grid(m_per_axis, domain)?),
            PenaltyEvalConfig::Random { m, seed } => PenaltyEval::Collocation(random_collocation(m, domain, seed)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub noise: NoiseModel,
    pub n_grid: Vec<usize>,
    pub lambda_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    pub modes: Vec<ModeKind>,
    /// Constraint level of the hard mode.
    pub hard_epsilon: f64,
    pub penalty_eval: PenaltyEvalConfig,
    pub solver: SolverSettings,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemConfig::default(),
            noise: NoiseModel::Gaussian { sigma: 0.1 },
            n_grid: vec![32, 64, 128, 256, 512, 1024, 2048],
            lambda_grid: vec![0.01, 0.1, 1.0, 10.0, 100.0],
            seeds: (0..30).collect(),
            modes: ModeKind::ALL.to_vec(),
            hard_epsilon: 0.0,
            penalty_eval: PenaltyEvalConfig::Exact,
            solver: SolverSettings::default(),
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(PislabError::Config(msg));
        if self.n_grid.is_empty() || self.seeds.is_empty() || self.modes.is_empty() {
            return bad("n_grid, seeds and modes must be nonempty".into());
        }
        if self.modes.iter().any(|m| m.uses_lambda()) && self.lambda_grid.is_empty() {
            return bad("lambda_grid must be nonempty for soft modes".into());
        }
        if self.n_grid.contains(&0) {
            return bad("sample sizes must be positive".into());
        }
        if self.lambda_grid.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return bad("lambda values must be finite and nonnegative".into());
        }
        if !(self.hard_epsilon >= 0.0) {
            return bad("hard_epsilon must be nonnegative".into());
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        self.noise.validate()
    }

    /// The fit cells `(mode, n, lambda, seed)` in output order.
    fn cells(&self) -> Vec<(ModeKind, usize, f64, u64)> {
        let mut modes = self.modes.clone();
        modes.sort();
        modes.dedup();
        let mut cells = Vec::new();
        for mode in modes {
            let lambdas = if mode.uses_lambda() { self.lambda_grid.clone() } else { vec![0.0] };
            for &n in &self.n_grid {
                for &lambda in &lambdas {
                    for &seed in &self.seeds {
                        cells.push((mode, n, lambda, seed));
                    }
                }
            }
        }
        cells.sort_by(|a, b| (a.0, a.1, a.2, a.3).partial_cmp(&(b.0, b.1, b.2, b.3)).expect("finite lambdas"));
        cells
    }
}

/// `Y = u*(X) + e` with `X` uniform on the domain. The sample depends only
/// on `(seed, n)`, so all modes and weights see the same data.
pub fn generate_data(problem: &Problem, noise: &NoiseModel, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(PislabError::Config("n must be at least 1".into()));
    }
    let mut r = rng::stream(seed, &[0xDA7A, n as u64]);
    let points = sample_points(&problem.domain, n, &mut r);
    let clean = evaluate(&problem.u_star, &points)?;
    let targets = clean.iter().map(|v| v + noise.sample(&mut r)).collect();
    Dataset::new(points, targets)
}

/// One fitted cell of a sweep. Solver failures are kept with `NaN` errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mode: ModeKind,
    pub n: usize,
    pub lambda: f64,
    pub seed: u64,
    /// `||h_hat - f*||_G`.
    pub error: f64,
    pub empirical_error: f64,
    pub psi_value: f64,
    pub converged: bool,
}

/// The minimiser inequality against `f*` for one converged fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinimiserRow {
    pub mode: ModeKind,
    pub n: usize,
    pub lambda: f64,
    pub seed: u64,
    pub slack: f64,
    pub violated: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub minimiser: Vec<MinimiserRow>,
    /// `(cell, message)` for cells whose solver returned an error.
    pub failures: Vec<(SweepRow, String)>,
}

impl SweepOutput {
    pub fn violations(&self) -> impl Iterator<Item = &MinimiserRow> {
        self.minimiser.iter().filter(|m| m.violated)
    }
}

/// Fits every `(mode, n, lambda, seed)` cell; errors are measured against `f*`.
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepOutput> {
    config.validate()?;
    let problem = config.problem.build()?;
    let mut template = FitConfig::new(FitMode::Plain, problem.class.clone(), problem.spec.clone());
    template.penalty_eval = config.penalty_eval.build(&problem.domain)?;
    template.solver = config.solver;
    // f* is a valid comparison point for the hard fit only when it is feasible.
    let fstar_feasible = psi_exact(&problem.spec, &problem.f_star)? <= config.hard_epsilon + 1e-12;
    let cells = config.cells();
    let results: Vec<(SweepRow, Option<MinimiserRow>, Option<String>)> = cells
        .par_iter()
        .map(|&(mode, n, lambda, seed)| {
            let nan = SweepRow { mode, n, lambda, seed, error: f64::NAN, empirical_error: f64::NAN, psi_value: f64::NAN, converged: false };
            let data = generate_data(&problem, &config.noise, n, seed)?;
            let fit_config = template.with_mode(mode.fit_mode(lambda, config.hard_epsilon));
            let result = match fit(&data, &fit_config) {
                Ok(r) => r,
                Err(e) => return Ok((nan, None, Some(e.to_string()))),
            };
            let row = SweepRow {
                error: l2_distance(&result.a_hat, &problem.f_star, &problem.class.gram)?,
                empirical_error: result.empirical_error,
                psi_value: result.psi_exact,
                converged: result.converged,
                ..nan
            };
            let check = if result.converged && (mode != ModeKind::Hard || fstar_feasible) {
                let c = check_minimiser_inequality(&result, &problem.f_star, lambda, &data, &fit_config)?;
                Some(MinimiserRow { mode, n, lambda, seed, slack: c.slack, violated: c.violated })
            } else {
                None
            };
            Ok((row, check, None))
        })
        .collect::<Result<_>>()?;
    let mut out = SweepOutput::default();
    for (row, check, failure) in results {
        if let Some(msg) = failure {
            log::warn!("{} n={} lambda={} seed={}: {msg}", row.mode.name(), row.n, row.lambda, row.seed);
            out.failures.push((row.clone(), msg));
        }
        out.rows.push(row);
        out.minimiser.extend(check);
    }
    Ok(out)
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sweep_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(PislabError::from)).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 0 {
        0.5 * (v[m - 1] + v[m])
    } else {
        v[m]
    }
}

/// Median over seeds of the finite errors at each `n`, for one mode and,
/// for soft modes, one weight.
pub fn median_errors(rows: &[SweepRow], mode: ModeKind, lambda: Option<f64>) -> BTreeMap<usize, f64> {
    let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for row in rows {
        if row.mode == mode && lambda.is_none_or(|l| row.lambda == l) && row.error.is_finite() {
            groups.entry(row.n).or_default().push(row.error);
        }
    }
    groups.into_iter().map(|(n, v)| (n, median(v))).collect()
}

/// Least-squares slope of `log(median error)` against `log n`.
pub fn rate_slope(rows: &[SweepRow], mode: ModeKind, lambda: Option<f64>) -> Result<f64> {
    if lambda.is_none() {
        let mut weights: Vec<f64> = rows.iter().filter(|r| r.mode == mode).map(|r| r.lambda).collect();
        weights.sort_by(f64::total_cmp);
        weights.dedup();
        if weights.len() > 1 {
            return Err(PislabError::Config(format!("{} rows mix several lambdas; choose one", mode.name())));
        }
    }
    let med = median_errors(rows, mode, lambda);
    if med.len() < 3 {
        return Err(PislabError::Config(format!("rate slope needs at least 3 sample sizes, got {}", med.len())));
    }
    if med.values().any(|&e| !(e > 0.0)) {
        return Err(PislabError::Config("rate slope needs positive errors".into()));
    }
    let pts: Vec<(f64, f64)> = med.iter().map(|(&n, &e)| ((n as f64).ln(), e.ln())).collect();
    Ok(log_log_slope(&pts))
}

/// Ordinary least-squares slope.
pub fn log_log_slope(pts: &[(f64, f64)]) -> f64 {
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}
