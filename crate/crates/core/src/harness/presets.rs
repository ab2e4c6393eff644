//! Preset experiments E1-E5 and the single-purpose jobs behind the CLI.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    generate_data, log_log_slope, median, median_errors, run_sweep, ExperimentConfig, ModeKind, OperatorChoice,
    PenaltyEvalConfig, ProblemConfig, SweepOutput, SweepRow,
};
use crate::bounds::{bound_h, erm_parameters, tau_n, theorem1_certificate, theorem2_bound, Certificate, ErmParameters, TheoremInputs};
use crate::complexity::{
    estimate_gamma_o, estimate_lambda0, estimate_rm, estimate_rq, estimate_smallball, radius_grid, MonteCarlo, NoiseModel,
    SmallBallRow, GRID_POINTS,
};
use crate::diff_ops::{custom_operator, heat_operator, kernel_decomposition, RANK_TOLERANCE};
use crate::error::{PislabError, Result};
use crate::estimators::{check_minimiser_inequality, fit, Dataset, FitConfig, FitMode, FitResult, MinimiserCheck, SolverSettings};
use crate::penalty_mc::{fixed_grid, random_collocation, sup_deviation, CollocationSet, DEFAULT_PROBES};
use crate::poly_space::{build_gram, l2_distance, CoefficientVector, DomainConfig};

/// Reads a JSON config; a missing path gives the defaults.
pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => Ok(serde_json::from_str(&std::fs::read_to_string(p)?)?),
        None => Ok(T::default()),
    }
}

/// Median error per `(mode, lambda, n)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub mode: ModeKind,
    pub lambda: f64,
    pub n: usize,
    pub median_error: f64,
    pub seeds: usize,
}

pub fn summarise(rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(ModeKind, f64)> = rows.iter().map(|r| (r.mode, r.lambda)).collect();
    keys.sort_by(|a, b| a.partial_cmp(b).expect("finite lambdas"));
    keys.dedup();
    let mut out = Vec::new();
    for (mode, lambda) in keys {
        for (n, median_error) in median_errors(rows, mode, Some(lambda)) {
            let seeds = rows.iter().filter(|r| r.mode == mode && r.lambda == lambda && r.n == n && r.error.is_finite()).count();
            out.push(SummaryRow { mode, lambda, n, median_error, seeds });
        }
    }
    out
}

/// E1: soft, hard and plain fits of the heat polynomial `x^2 + 2t`.
pub fn e1_config() -> ExperimentConfig {
    ExperimentConfig::default()
}

pub struct E1Report {
    pub sweep: SweepOutput,
    pub summary: Vec<SummaryRow>,
}

pub fn run_e1(config: &ExperimentConfig) -> Result<E1Report> {
    let sweep = run_sweep(config)?;
    let summary = summarise(&sweep.rows);
    Ok(E1Report { sweep, summary })
}

/// E2: median error of the soft fit over the hard fit.
pub fn e2_config() -> ExperimentConfig {
    ExperimentConfig { modes: vec![ModeKind::Hard, ModeKind::SoftNorm], ..ExperimentConfig::default() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub lambda: f64,
    pub n: usize,
    pub soft_median: f64,
    pub hard_median: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct E2Report {
    pub ratios: Vec<RatioRow>,
    /// The weight whose largest ratio over `n` is smallest.
    pub best_lambda: f64,
    /// `max_n` of the ratio at `best_lambda`.
    pub max_ratio: f64,
}

pub fn e2_ratios(rows: &[SweepRow]) -> Result<E2Report> {
    let hard = median_errors(rows, ModeKind::Hard, None);
    let mut lambdas: Vec<f64> = rows.iter().filter(|r| r.mode == ModeKind::SoftNorm).map(|r| r.lambda).collect();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    if hard.is_empty() || lambdas.is_empty() {
        return Err(PislabError::Config("E2 needs hard and soft_norm rows".into()));
    }
    let mut ratios = Vec::new();
    let mut best: Option<(f64, f64)> = None;
    for &lambda in &lambdas {
        let soft = median_errors(rows, ModeKind::SoftNorm, Some(lambda));
        let mut worst: f64 = 0.0;
        for (n, &h) in &hard {
            if let Some(&s) = soft.get(n) {
                let ratio = s / h;
                worst = worst.max(ratio);
                ratios.push(RatioRow { lambda, n: *n, soft_median: s, hard_median: h, ratio });
            }
        }
        if best.is_none_or(|(_, w)| worst < w) {
            best = Some((lambda, worst));
        }
    }
    let (best_lambda, max_ratio) = best.expect("at least one lambda");
    Ok(E2Report { ratios, best_lambda, max_ratio })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    pub t_max: f64,
    pub degrees: Vec<usize>,
    pub operator: OperatorChoice,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { t_max: 1.0, degrees: (2..=6).collect(), operator: OperatorChoice::Heat }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelRow {
    pub p: usize,
    pub kernel_dim: usize,
    pub ambient_dim: usize,
    pub rank: usize,
}

/// E3: kernel dimension of the truncated operator against `(p + 1)^2`.
pub fn kernel_dimensions(config: &KernelConfig) -> Result<Vec<KernelRow>> {
    config
        .degrees
        .iter()
        .map(|&p| {
            let domain = DomainConfig::new(config.t_max, p)?;
            if p > domain.degree_cap {
                return Err(PislabError::Config(format!("degree {p} exceeds the cap {}", domain.degree_cap)));
            }
            let op = match &config.operator {
                OperatorChoice::Heat => heat_operator(&domain),
                OperatorChoice::Custom { terms } => custom_operator(terms, &domain)?,
            };
            let gram = build_gram(domain);
            let dec = kernel_decomposition(&op, &CoefficientVector::zeros(domain), &gram, RANK_TOLERANCE)?;
            Ok(KernelRow { p, kernel_dim: dec.dimension, ambient_dim: domain.basis_size(), rank: dec.rank })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CollocationChoice {
    #[default]
    Random,
    FixedGrid,
}

/// E4: how fast the collocation penalty approaches `Psi` uniformly on the ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltyMcConfig {
    pub problem: ProblemConfig,
    pub m_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub kind: CollocationChoice,
    pub probes: usize,
}

impl Default for PenaltyMcConfig {
    fn default() -> Self {
        Self {
            problem: ProblemConfig::default(),
            m_grid: vec![100, 1_000, 10_000, 100_000],
            seeds: (0..5).collect(),
            kind: CollocationChoice::Random,
            probes: DEFAULT_PROBES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationRow {
    pub m: usize,
    pub seed: u64,
    pub kind: String,
    pub deviation: f64,
}

pub struct PenaltyMcReport {
    pub rows: Vec<DeviationRow>,
    /// Log-log slope of the median deviation against `m`.
    pub slope: Option<f64>,
}

pub fn run_penalty_mc(config: &PenaltyMcConfig) -> Result<PenaltyMcReport> {
    if config.m_grid.is_empty() || config.seeds.is_empty() {
        return Err(PislabError::Config("m_grid and seeds must be nonempty".into()));
    }
    let problem = config.problem.build()?;
    let mut rows = Vec::new();
    for &m in &config.m_grid {
        for &seed in &config.seeds {
            let colloc: CollocationSet = match config.kind {
                CollocationChoice::Random => random_collocation(m, &problem.domain, seed)?,
                CollocationChoice::FixedGrid => fixed_grid(((m as f64).sqrt().round() as usize).max(1), &problem.domain)?,
            };
            let deviation = sup_deviation(&problem.spec, &problem.class, &colloc, config.probes, seed)?;
            rows.push(DeviationRow { m: colloc.m(), seed, kind: colloc.kind.name().to_string(), deviation });
        }
    }
    let mut ms: Vec<usize> = rows.iter().map(|r| r.m).collect();
    ms.dedup();
    let pts: Vec<(f64, f64)> = ms
        .iter()
        .map(|&m| {
            let med = median(rows.iter().filter(|r| r.m == m).map(|r| r.deviation).collect());
            ((m as f64).ln(), med.ln())
        })
        .collect();
    let slope = (pts.len() >= 2 && pts.iter().all(|p| p.1.is_finite())).then(|| log_log_slope(&pts));
    Ok(PenaltyMcReport { rows, slope })
}

/// Which complexity parameters to estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quantity {
    #[serde(rename = "rQ")]
    RQ,
    #[serde(rename = "rM")]
    RM,
    #[serde(rename = "gammaO")]
    GammaO,
    #[serde(rename = "lambda0")]
    Lambda0,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComplexityConfig {
    pub problem: ProblemConfig,
    pub noise: NoiseModel,
    pub quantities: Vec<Quantity>,
    pub n_grid: Vec<usize>,
    pub tau: f64,
    pub delta: f64,
    pub reps: usize,
    pub seed: u64,
    /// Penalty levels for `gamma_O` and `lambda_0`.
    pub rho_grid: Vec<f64>,
    /// Radius `r(rho)` of the ball around `f*` used by `gamma_O`.
    pub locality_radius: f64,
}

impl Default for ComplexityConfig {
    fn default() -> Self {
        Self {
            problem: ProblemConfig::default(),
            noise: NoiseModel::Gaussian { sigma: 0.1 },
            quantities: vec![Quantity::RQ, Quantity::RM, Quantity::GammaO, Quantity::Lambda0],
            n_grid: vec![64, 256, 1024],
            tau: 0.3,
            delta: 0.1,
            reps: 200,
            seed: 0,
            rho_grid: vec![0.1, 1.0, 10.0],
            locality_radius: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexityRow {
    pub quantity: Quantity,
    pub set: String,
    pub n: usize,
    pub rho: Option<f64>,
    pub tau: f64,
    pub delta: Option<f64>,
    pub seed: u64,
    pub estimate: f64,
    pub censored_flag: bool,
}

pub fn run_complexity(config: &ComplexityConfig) -> Result<Vec<ComplexityRow>> {
    if config.n_grid.is_empty() {
        return Err(PislabError::Config("n_grid must be nonempty".into()));
    }
    let problem = config.problem.build()?;
    let family = problem.family()?;
    let source = problem.source(config.noise);
    let grid = radius_grid(problem.class.radius, GRID_POINTS);
    let sets = [("full", family.full()), ("constrained", family.level_set(0.0))];
    let mut rows = Vec::new();
    for &n in &config.n_grid {
        let mc = MonteCarlo { n, reps: config.reps, seed: config.seed };
        let row = |quantity, set: &str, rho, delta, estimate, censored_flag| ComplexityRow {
            quantity,
            set: set.to_string(),
            n,
            rho,
            tau: config.tau,
            delta,
            seed: config.seed,
            estimate,
            censored_flag,
        };
        for &q in &config.quantities {
            match q {
                Quantity::RQ => {
                    for (name, set) in &sets {
                        let e = estimate_rq(set, config.tau, mc, &grid)?;
                        rows.push(row(q, name, None, None, e.value, e.censored()));
                    }
                }
                Quantity::RM => {
                    for (name, set) in &sets {
                        let e = estimate_rm(set, config.tau, config.delta, mc, &source, &grid)?;
                        rows.push(row(q, name, None, Some(config.delta), e.value, e.censored()));
                    }
                }
                Quantity::GammaO => {
                    for &rho in &config.rho_grid {
                        let e = estimate_gamma_o(&family, rho, config.locality_radius, config.tau, config.delta, mc, &source)?;
                        rows.push(row(q, "constrained", Some(rho), Some(config.delta), e.value, false));
                    }
                }
                Quantity::Lambda0 => {
                    let r = config.locality_radius;
                    let e = estimate_lambda0(&family, &config.rho_grid, &move |_| Ok(r), config.tau, config.delta, mc, &source)?;
                    rows.push(row(q, "constrained", None, Some(config.delta), e.value, false));
                }
            }
        }
    }
    Ok(rows)
}

/// E5: `r_Q` of the kernel-constrained set against the full ball over `n`.
pub fn e5_config() -> ComplexityConfig {
    ComplexityConfig { quantities: vec![Quantity::RQ], ..ComplexityConfig::default() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmallBallConfig {
    pub problem: ProblemConfig,
    pub kappas: Vec<f64>,
    pub pairs: usize,
    pub x_samples: usize,
    pub seed: u64,
}

impl Default for SmallBallConfig {
    fn default() -> Self {
        Self {
            problem: ProblemConfig::default(),
            kappas: vec![0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.75, 1.0],
            pairs: 200,
            x_samples: 5000,
            seed: 0,
        }
    }
}

pub fn run_smallball(config: &SmallBallConfig) -> Result<Vec<SmallBallRow>> {
    let problem = config.problem.build()?;
    estimate_smallball(&problem.class, &config.kappas, config.pairs, config.x_samples, config.seed)
}

/// A single fit on generated data or on a CSV file with columns `x,t,y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitJob {
    pub problem: ProblemConfig,
    pub noise: NoiseModel,
    pub n: usize,
    pub seed: u64,
    pub mode: FitMode,
    pub penalty_eval: PenaltyEvalConfig,
    pub solver: SolverSettings,
    pub data: Option<PathBuf>,
}

impl Default for FitJob {
    fn default() -> Self {
        Self {
            problem: ProblemConfig::default(),
            noise: NoiseModel::Gaussian { sigma: 0.1 },
            n: 256,
            seed: 0,
            mode: FitMode::SoftNorm { lambda: 1.0 },
            penalty_eval: PenaltyEvalConfig::Exact,
            solver: SolverSettings::default(),
            data: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub result: FitResult,
    /// `||h_hat - f*||_G`.
    pub error: f64,
    pub minimiser: MinimiserCheck,
}

pub fn run_fit(job: &FitJob) -> Result<FitReport> {
    let problem = job.problem.build()?;
    let data = match &job.data {
        Some(path) => Dataset::from_csv(std::fs::File::open(path)?)?,
        None => generate_data(&problem, &job.noise, job.n, job.seed)?,
    };
    let mut config = FitConfig::new(job.mode, problem.class.clone(), problem.spec.clone());
    config.penalty_eval = job.penalty_eval.build(&problem.domain)?;
    config.solver = job.solver;
    let result = fit(&data, &config)?;
    let error = l2_distance(&result.a_hat, &problem.f_star, &problem.class.gram)?;
    let minimiser = check_minimiser_inequality(&result, &problem.f_star, job.mode.lambda(), &data, &config)?;
    Ok(FitReport { result, error, minimiser })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertifyReport {
    pub inputs: TheoremInputs,
    pub tau_n: Option<f64>,
    pub theorem1: Certificate,
    pub theorem2: Certificate,
    /// Absent when `kappa^2 eps = 0`.
    pub bound_h: Option<f64>,
    pub erm_parameters: ErmParameters,
}

pub fn run_certify(inputs: &TheoremInputs) -> Result<CertifyReport> {
    Ok(CertifyReport {
        inputs: *inputs,
        tau_n: tau_n(inputs.rho, inputs).ok(),
        theorem1: theorem1_certificate(inputs)?,
        theorem2: theorem2_bound(inputs)?,
        bound_h: bound_h(inputs).ok(),
        erm_parameters: erm_parameters(inputs),
    })
}
