use super::*;
use crate::diff_ops::{custom_operator, heat_operator, OperatorTerm};
use crate::penalty_mc::random_collocation;
use crate::poly_space::{build_gram, l2_distance, l2_norm, DomainConfig};
use crate::rng;
use rand::Rng;
use rand_distr::StandardNormal;

fn domain(p: usize) -> DomainConfig {
    DomainConfig::new(1.0, p).unwrap()
}

fn heat_config(p: usize, radius: f64, mode: FitMode) -> FitConfig {
    let d = domain(p);
    let class = FunctionClass::new(d, radius).unwrap();
    let spec = PenaltySpec::homogeneous(heat_operator(&d), build_gram(d)).unwrap();
    FitConfig::new(mode, class, spec)
}

fn target(p: usize) -> CoefficientVector {
    CoefficientVector::from_terms(domain(p), &[(1.0, 2, 0), (2.0, 0, 1)]).unwrap()
}

fn sample(u: &CoefficientVector, n: usize, sigma: f64, seed: u64) -> Dataset {
    let mut r = rng::stream(seed, &[n as u64]);
    let points: Vec<(f64, f64)> =
        (0..n).map(|_| (r.random::<f64>(), r.random::<f64>() * u.domain.t_max)).collect();
    let clean = crate::poly_space::evaluate(u, &points).unwrap();
    let targets = clean.iter().map(|v| v + sigma * r.sample::<f64, _>(StandardNormal)).collect();
    Dataset::new(points, targets).unwrap()
}

fn random_in_ball(config: &FitConfig, seed: u64) -> CoefficientVector {
    let d = config.class.domain;
    let mut r = rng::stream(seed, &[]);
    let mut b = DVector::from_fn(d.basis_size(), |_, _| r.sample::<f64, _>(StandardNormal));
    b *= config.class.radius * r.random::<f64>() / b.norm();
    CoefficientVector::from_vector(d, config.class.whitening().unwhiten(&b)).unwrap()
}

fn objective_at(a: &CoefficientVector, data: &Dataset, config: &FitConfig) -> f64 {
    let b = config.class.whitening().whiten(&a.coeffs);
    let psi = config.penalty_form().value(&b);
    let l = empirical_error(a, data).unwrap();
    match config.mode {
        FitMode::SoftNorm { lambda } => l + lambda * psi,
        FitMode::SoftSquared { lambda } => l + lambda * psi * psi,
        _ => l,
    }
}

#[test]
fn empirical_error_examples() {
    let d = domain(2);
    let u = target(2);
    let data = sample(&u, 10, 0.0, 1);
    assert!(empirical_error(&u, &data).unwrap() < 1e-28);
    let ones = Dataset::new(data.points.clone(), vec![1.0; 10]).unwrap();
    assert!((empirical_error(&CoefficientVector::zeros(d), &ones).unwrap() - 1.0).abs() < 1e-15);
    let single = Dataset::new(vec![(0.5, 0.5)], vec![2.0]).unwrap();
    assert_eq!(empirical_error(&CoefficientVector::zeros(d), &single).unwrap(), 4.0);
    let empty = Dataset::new(vec![], vec![]).unwrap();
    assert!(matches!(empirical_error(&u, &empty), Err(PislabError::Empty(_))));
    assert!(Dataset::new(vec![(0.0, 0.0)], vec![]).is_err());
}

#[test]
fn dataset_csv_round_trip() {
    let data = sample(&target(2), 5, 0.1, 2);
    let mut buf = Vec::new();
    data.to_csv(&mut buf).unwrap();
    assert!(String::from_utf8_lossy(&buf).starts_with("x,t,y\n"));
    let back = Dataset::from_csv(buf.as_slice()).unwrap();
    assert_eq!(back, data);
}

#[test]
fn plain_recovers_noiseless_interior_target() {
    let cfg = heat_config(2, 10.0, FitMode::Plain);
    let u = target(2);
    let data = sample(&u, 30, 0.0, 3);
    let fit = fit_plain(&data, &cfg).unwrap();
    assert!((&fit.a_hat.coeffs - &u.coeffs).amax() < 1e-8);
    assert_eq!(fit.ball_multiplier, 0.0);
}

#[test]
fn plain_zero_targets_give_zero() {
    let cfg = heat_config(3, 10.0, FitMode::Plain);
    let mut data = sample(&target(3), 20, 0.0, 4);
    data.targets.fill(0.0);
    assert_eq!(fit_plain(&data, &cfg).unwrap().a_hat.coeffs.amax(), 0.0);
}

#[test]
fn plain_with_tiny_ball_is_active_and_stationary() {
    let cfg = heat_config(2, 0.01, FitMode::Plain);
    let data = sample(&target(2), 40, 0.1, 5);
    let fit = fit_plain(&data, &cfg).unwrap();
    let norm = l2_norm(&fit.a_hat, &cfg.class.gram).unwrap();
    assert!((norm - 0.01).abs() <= 1e-10 * 0.01 + 1e-14, "{norm}");
    // (Phi^T Phi / n + nu G) a = Phi^T y / n in monomial coordinates.
    let phi = crate::poly_space::design_matrix(&data.points, &cfg.class.domain).unwrap().matrix;
    let n = data.n() as f64;
    let lhs = (phi.transpose() * &phi / n + &cfg.class.gram.matrix * fit.ball_multiplier) * &fit.a_hat.coeffs;
    let rhs = phi.transpose() * &data.targets / n;
    assert!((lhs - &rhs).norm() < 1e-8 * rhs.norm());
}

#[test]
fn plain_handles_fewer_points_than_coefficients() {
    let cfg = heat_config(4, 10.0, FitMode::Plain);
    let data = sample(&target(4), 7, 0.1, 6);
    let fit = fit_plain(&data, &cfg).unwrap();
    assert!(fit.empirical_error < 1e-12);
    assert!(l2_norm(&fit.a_hat, &cfg.class.gram).unwrap() <= 10.0 * (1.0 + 1e-8));
}

#[test]
fn hard_zero_recovers_kernel_target() {
    let cfg = heat_config(4, 10.0, FitMode::Hard { epsilon: 0.0 });
    let u = target(4);
    let data = sample(&u, 12, 0.0, 7);
    let fit = fit_hard(&data, &cfg).unwrap();
    assert!((&fit.a_hat.coeffs - &u.coeffs).amax() < 1e-8, "{}", fit.a_hat.coeffs);
    assert!(fit.psi_value < 1e-10 && fit.psi_exact < 1e-10);
}

#[test]
fn hard_inactive_constraint_equals_plain() {
    let cfg = heat_config(3, 10.0, FitMode::Hard { epsilon: 1e6 });
    let data = sample(&target(3), 40, 0.2, 8);
    let hard = fit_hard(&data, &cfg).unwrap();
    let plain = fit_plain(&data, &cfg).unwrap();
    assert_eq!(hard.a_hat.coeffs, plain.a_hat.coeffs);
}

#[test]
fn hard_positive_epsilon_meets_constraint() {
    let cfg = heat_config(3, 10.0, FitMode::Plain);
    let data = sample(&target(3), 40, 0.5, 9);
    let plain = fit_plain(&data, &cfg).unwrap();
    let eps = 0.3 * plain.psi_value;
    let hard = fit_hard(&data, &cfg.with_mode(FitMode::Hard { epsilon: eps })).unwrap();
    assert!((hard.psi_value - eps).abs() <= 1e-6 * eps.max(1.0));
    assert!(hard.empirical_error >= plain.empirical_error - 1e-12);
    // Minimality against random points of the constraint set.
    for s in 0..200 {
        let a = random_in_ball(&cfg, 900 + s);
        let b = cfg.class.whitening().whiten(&a.coeffs);
        if cfg.penalty_form().value(&b) <= eps {
            assert!(empirical_error(&a, &data).unwrap() >= hard.empirical_error - 1e-9);
        }
    }
}

#[test]
fn hard_zero_with_infeasible_forcing_errors() {
    let d = domain(2);
    let class = FunctionClass::new(d, 10.0).unwrap();
    // d_t maps onto polynomials of t-degree < p, so t^2 is unreachable.
    let op = custom_operator(&[OperatorTerm { coeff: 1.0, dt: 1, dx: 0 }], &d).unwrap();
    let forcing = CoefficientVector::from_terms(d, &[(1.0, 0, 2)]).unwrap();
    let spec = PenaltySpec::new(op, forcing, build_gram(d)).unwrap();
    let cfg = FitConfig::new(FitMode::Hard { epsilon: 0.0 }, class, spec);
    let data = sample(&target(2), 20, 0.1, 10);
    assert!(matches!(fit_hard(&data, &cfg), Err(PislabError::Infeasible { .. })));
}

#[test]
fn hard_zero_outside_ball_errors() {
    let d = domain(2);
    let class = FunctionClass::new(d, 0.5).unwrap();
    let op = custom_operator(&[OperatorTerm { coeff: 1.0, dt: 0, dx: 0 }], &d).unwrap();
    // Identity operator with g = 3: the only solution has norm 3 > K.
    let forcing = CoefficientVector::from_terms(d, &[(3.0, 0, 0)]).unwrap();
    let spec = PenaltySpec::new(op, forcing, build_gram(d)).unwrap();
    let cfg = FitConfig::new(FitMode::Hard { epsilon: 0.0 }, class, spec);
    let data = sample(&target(2), 20, 0.1, 11);
    assert!(matches!(fit_hard(&data, &cfg), Err(PislabError::Infeasible { .. })));
}

#[test]
fn hard_zero_matches_kernel_grid_search() {
    // p = 2: the heat kernel is 3-dimensional; search it on a 101^3 grid.
    let cfg = heat_config(2, 3.0, FitMode::Hard { epsilon: 0.0 });
    let u = CoefficientVector::from_terms(domain(2), &[(4.0, 2, 0), (8.0, 0, 1), (1.0, 1, 0)]).unwrap();
    let data = sample(&u, 25, 0.3, 12);
    let fit = fit_hard(&data, &cfg).unwrap();
    let sub = cfg.penalty.form().affine_kernel(1e-10).unwrap();
    assert_eq!(sub.dimension(), 3);
    let zr = (9.0 - sub.offset.norm_squared()).sqrt();
    let problem = Problem::new(&data, &cfg.class).unwrap();
    let obj = |z: &DVector<f64>| problem.empirical_error(&sub.point(z), &data);
    let steps = 101;
    let h = 2.0 * zr / (steps - 1) as f64;
    let mut grid_best = f64::INFINITY;
    for i in 0..steps {
        for j in 0..steps {
            for k in 0..steps {
                let z = DVector::from_vec(vec![-zr + h * i as f64, -zr + h * j as f64, -zr + h * k as f64]);
                if z.norm() <= zr {
                    grid_best = grid_best.min(obj(&z));
                }
            }
        }
    }
    // Lipschitz bound of the objective over the ball times the grid half-diagonal.
    let hz = sub.basis.transpose() * &problem.h * &sub.basis;
    let lip = 2.0 * (hz.norm() * zr + (sub.basis.transpose() * (&problem.q - &problem.h * &sub.offset)).norm());
    let resolution = lip * h * 3f64.sqrt() / 2.0;
    assert!(fit.empirical_error <= grid_best + 1e-12);
    assert!(grid_best - fit.empirical_error <= resolution);
}

#[test]
fn soft_norm_with_zero_lambda_is_plain() {
    let cfg = heat_config(4, 10.0, FitMode::SoftNorm { lambda: 0.0 });
    let data = sample(&target(4), 50, 0.2, 13);
    let soft = fit_soft_norm(&data, &cfg).unwrap();
    let plain = fit_plain(&data, &cfg).unwrap();
    assert!(l2_distance(&soft.a_hat, &plain.a_hat, &cfg.class.gram).unwrap() < 1e-6);
    assert!(soft.converged);
}

#[test]
fn soft_norm_large_lambda_matches_hard() {
    let cfg = heat_config(4, 10.0, FitMode::SoftNorm { lambda: 1e6 });
    let data = sample(&target(4), 50, 0.1, 14);
    let soft = fit_soft_norm(&data, &cfg).unwrap();
    let hard = fit_hard(&data, &cfg.with_mode(FitMode::Hard { epsilon: 0.0 })).unwrap();
    assert!(soft.psi_value <= 1e-4);
    assert!(l2_distance(&soft.a_hat, &hard.a_hat, &cfg.class.gram).unwrap() <= 1e-3);
}

#[test]
fn soft_norm_objective_identity_and_gap() {
    for (k, lambda) in [0.01, 0.1, 1.0, 10.0].into_iter().enumerate() {
        let cfg = heat_config(3, 10.0, FitMode::SoftNorm { lambda });
        let u = CoefficientVector::from_terms(domain(3), &[(1.0, 2, 0), (1.0, 1, 1), (0.5, 0, 2)]).unwrap();
        let data = sample(&u, 60, 0.2, 15 + k as u64);
        let fit = fit_soft_norm(&data, &cfg).unwrap();
        assert!(fit.converged, "lambda {lambda}: gap {} after {}", fit.gap, fit.iterations);
        assert!(fit.gap <= 1e-9);
        assert!((fit.objective - (fit.empirical_error + lambda * fit.psi_value)).abs() < 1e-12 * (1.0 + fit.objective));
    }
}

/// Pattern search over the ball from `start`, halving the step on failure.
fn refine(mut b: DVector<f64>, radius: f64, mut step: f64, f: &dyn Fn(&DVector<f64>) -> f64) -> (DVector<f64>, f64) {
    let mut best = f(&b);
    while step > 1e-10 {
        let mut improved = false;
        for i in 0..b.len() {
            for sgn in [-1.0, 1.0] {
                let mut c = b.clone();
                c[i] += sgn * step;
                let c = project_euclidean_ball(&c, radius);
                let v = f(&c);
                if v < best {
                    best = v;
                    b = c;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (b, best)
}

#[test]
fn soft_norm_matches_grid_search_for_linear_polynomials() {
    let radius = 2.0;
    let cfg = heat_config(1, radius, FitMode::SoftNorm { lambda: 0.3 });
    let u = CoefficientVector::from_terms(domain(1), &[(0.5, 0, 0), (1.0, 1, 0), (0.8, 0, 1), (-0.6, 1, 1)]).unwrap();
    let data = sample(&u, 30, 0.2, 20);
    let fit = fit_soft_norm(&data, &cfg).unwrap();
    let problem = Problem::new(&data, &cfg.class).unwrap();
    let form = cfg.penalty_form();
    let f = |b: &DVector<f64>| problem.empirical_error(b, &data) + 0.3 * form.value(b);
    let steps = 41;
    let h = 2.0 * radius / (steps - 1) as f64;
    let coord = |k: usize| -radius + h * k as f64;
    let mut best = (f64::INFINITY, DVector::zeros(4));
    for i in 0..steps {
        for j in 0..steps {
            for k in 0..steps {
                for l in 0..steps {
                    let b = DVector::from_vec(vec![coord(i), coord(j), coord(k), coord(l)]);
                    if b.norm() <= radius {
                        let v = f(&b);
                        if v < best.0 {
                            best = (v, b);
                        }
                    }
                }
            }
        }
    }
    let (_, refined) = refine(best.1, radius, h, &f);
    assert!(fit.objective <= refined + 1e-6, "{} vs {}", fit.objective, refined);
}

#[test]
fn smoothed_fallback_agrees_with_primal_dual() {
    let cfg = heat_config(3, 10.0, FitMode::SoftNorm { lambda: 0.5 });
    let data = sample(&target(3), 60, 0.3, 21);
    let a = fit_soft_norm(&data, &cfg).unwrap();
    let b = fit_soft_norm_smoothed(&data, &cfg).unwrap();
    assert!(b.objective >= a.objective - 1e-9);
    assert!(b.objective - a.objective <= 1e-4 * (1.0 + a.objective));
}

#[test]
fn soft_squared_examples() {
    let data = sample(&target(3), 40, 0.2, 22);
    let cfg = heat_config(3, 10.0, FitMode::SoftSquared { lambda: 0.0 });
    let sq = fit_soft_squared(&data, &cfg).unwrap();
    let plain = fit_plain(&data, &cfg).unwrap();
    assert!(l2_distance(&sq.a_hat, &plain.a_hat, &cfg.class.gram).unwrap() < 1e-10);

    let noiseless = sample(&target(3), 40, 0.0, 23);
    let big = fit_soft_squared(&noiseless, &cfg.with_mode(FitMode::SoftSquared { lambda: 1e8 })).unwrap();
    assert!(big.psi_value <= 1e-4);

    let d = domain(3);
    let op = custom_operator(&[OperatorTerm { coeff: 1.0, dt: 0, dx: 0 }], &d).unwrap();
    let spec = PenaltySpec::homogeneous(op, build_gram(d)).unwrap();
    let ridge = FitConfig::new(FitMode::SoftSquared { lambda: 0.0 }, cfg.class.clone(), spec);
    for s in 0..5 {
        let data = sample(&target(3), 30, 0.5, 30 + s);
        let a0 = fit_soft_squared(&data, &ridge).unwrap();
        let a1 = fit_soft_squared(&data, &ridge.with_mode(FitMode::SoftSquared { lambda: 1.0 })).unwrap();
        assert!(l2_norm(&a1.a_hat, &ridge.class.gram).unwrap() < l2_norm(&a0.a_hat, &ridge.class.gram).unwrap());
    }
}

#[test]
fn invalid_settings_are_rejected() {
    let data = sample(&target(2), 10, 0.1, 40);
    let cfg = heat_config(2, 10.0, FitMode::SoftNorm { lambda: -1.0 });
    assert!(matches!(fit(&data, &cfg), Err(PislabError::Config(_))));
    let cfg = heat_config(2, 10.0, FitMode::Hard { epsilon: -0.1 });
    assert!(matches!(fit(&data, &cfg), Err(PislabError::Config(_))));
    let mut cfg = heat_config(2, 10.0, FitMode::Plain);
    cfg.solver.rel_tol = 0.0;
    assert!(matches!(fit(&data, &cfg), Err(PislabError::Config(_))));
    let cfg = heat_config(2, 10.0, FitMode::Plain);
    assert!(matches!(fit_soft_norm(&data, &cfg), Err(PislabError::Config(_))));
}

#[test]
fn minimiser_inequality_examples() {
    let cfg = heat_config(3, 10.0, FitMode::SoftNorm { lambda: 0.2 });
    let data = sample(&target(3), 50, 0.3, 41);
    let fit = fit_soft_norm(&data, &cfg).unwrap();
    let own = check_minimiser_inequality(&fit, &fit.a_hat, 0.2, &data, &cfg).unwrap();
    assert_eq!(own.slack, 0.0);
    for s in 0..50 {
        let reference = random_in_ball(&cfg, 500 + s);
        let rep = check_minimiser_inequality(&fit, &reference, 0.2, &data, &cfg).unwrap();
        assert!(!rep.violated && rep.slack >= -1e-6);
    }
    let plain_cfg = cfg.with_mode(FitMode::SoftNorm { lambda: 0.0 });
    let plain = fit_soft_norm(&data, &plain_cfg).unwrap();
    let reference = random_in_ball(&cfg, 600);
    let rep = check_minimiser_inequality(&plain, &reference, 0.0, &data, &plain_cfg).unwrap();
    assert_eq!(rep.rhs, 0.0);
    assert!(rep.lhs <= 0.0);
}

#[test]
fn every_mode_beats_random_feasible_points() {
    let modes = [
        FitMode::Plain,
        FitMode::Hard { epsilon: 0.0 },
        FitMode::Hard { epsilon: 0.05 },
        FitMode::SoftNorm { lambda: 0.5 },
        FitMode::SoftSquared { lambda: 0.5 },
    ];
    let data = sample(&target(3), 40, 0.3, 42);
    for mode in modes {
        let cfg = heat_config(3, 10.0, mode);
        let fit = fit(&data, &cfg).unwrap();
        assert!(l2_norm(&fit.a_hat, &cfg.class.gram).unwrap() <= 10.0 * (1.0 + 1e-8));
        if let FitMode::Hard { epsilon } = mode {
            assert!(fit.psi_exact <= epsilon + 1e-8);
        }
        let kernel = cfg.penalty.form().affine_kernel(1e-10).unwrap();
        for s in 0..100 {
            let mut a = random_in_ball(&cfg, 700 + s);
            if let FitMode::Hard { epsilon } = mode {
                let b = kernel.project(&cfg.class.whitening().whiten(&a.coeffs));
                a = CoefficientVector::from_vector(cfg.class.domain, cfg.class.whitening().unwhiten(&b)).unwrap();
                if l2_norm(&a, &cfg.class.gram).unwrap() > 10.0 {
                    continue;
                }
                assert!(cfg.penalty_form().value(&b) <= epsilon + 1e-10);
            }
            assert!(objective_at(&a, &data, &cfg) >= fit.objective - 1e-9, "{mode:?}");
        }
    }
}

#[test]
fn penalty_path_is_monotone() {
    let lambdas = [0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0, 3.0];
    for s in 0..20 {
        let data = sample(&target(3), 40, 0.3, 1000 + s);
        let fits: Vec<FitResult> = lambdas
            .iter()
            .map(|&l| fit_soft_norm(&data, &heat_config(3, 10.0, FitMode::SoftNorm { lambda: l })).unwrap())
            .collect();
        for w in fits.windows(2) {
            assert!(w[0].psi_value >= w[1].psi_value - 1e-6, "seed {s}");
            assert!(w[0].empirical_error <= w[1].empirical_error + 1e-6, "seed {s}");
        }
    }
}

#[test]
fn collocation_penalty_drives_the_fit() {
    let mut cfg = heat_config(3, 10.0, FitMode::SoftSquared { lambda: 1e6 });
    let colloc = random_collocation(200, &cfg.class.domain, 3).unwrap();
    cfg.penalty_eval = PenaltyEval::Collocation(colloc.clone());
    let data = sample(&target(3), 40, 0.0, 43);
    let fit = fit(&data, &cfg).unwrap();
    let direct = crate::penalty_mc::psi_tilde(&cfg.penalty, &fit.a_hat, &colloc).unwrap();
    assert!((fit.psi_value - direct).abs() < 1e-9);
    assert!(fit.psi_value < 1e-3);
    let hard = fit_hard(&data, &cfg.with_mode(FitMode::Hard { epsilon: 0.0 })).unwrap();
    assert!(hard.psi_value < 1e-8);
}

#[test]
fn fit_mode_json_shape() {
    let m: FitMode = serde_json::from_str(r#"{"kind":"soft_norm","lambda":2.5}"#).unwrap();
    assert_eq!(m, FitMode::SoftNorm { lambda: 2.5 });
    let m: FitMode = serde_json::from_str(r#"{"kind":"hard","epsilon":0.0}"#).unwrap();
    assert_eq!(m, FitMode::Hard { epsilon: 0.0 });
    assert!(serde_json::from_str::<FitMode>(r#"{"kind":"ridge"}"#).is_err());
}

mod properties {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn soft_norm_fit_is_feasible_and_beats_references(
            n in 12usize..120,
            seed in 0u64..1_000,
            log_lambda in -3.0..3.0f64,
            sigma in 0.0..0.5f64,
        ) {
            let lambda = 10f64.powf(log_lambda);
            let cfg = heat_config(3, 10.0, FitMode::SoftNorm { lambda });
            let data = sample(&target(3), n, sigma, seed);
            let fit = fit_soft_norm(&data, &cfg).unwrap();
            prop_assert!(fit.converged, "gap {}", fit.gap);
            prop_assert!(l2_norm(&fit.a_hat, &cfg.class.gram).unwrap() <= 10.0 * (1.0 + 1e-9));
            let tol = 1e-7 * (1.0 + fit.objective);
            for reference in [
                fit_plain(&data, &cfg.with_mode(FitMode::Plain)).unwrap().a_hat,
                fit_hard(&data, &cfg.with_mode(FitMode::Hard { epsilon: 0.0 })).unwrap().a_hat,
                random_in_ball(&cfg, seed),
            ] {
                prop_assert!(fit.objective <= objective_at(&reference, &data, &cfg) + tol);
                let check = check_minimiser_inequality(&fit, &reference, lambda, &data, &cfg).unwrap();
                prop_assert!(!check.violated, "slack {}", check.slack);
            }
        }

        #[test]
        fn plain_fit_minimises_over_the_ball(n in 5usize..80, seed in 0u64..1_000, radius in 0.1..20.0f64) {
            let cfg = heat_config(2, radius, FitMode::Plain);
            let data = sample(&target(2), n, 0.3, seed);
            let fit = fit_plain(&data, &cfg).unwrap();
            prop_assert!(l2_norm(&fit.a_hat, &cfg.class.gram).unwrap() <= radius * (1.0 + 1e-9));
            let other = random_in_ball(&cfg, seed + 1);
            prop_assert!(fit.empirical_error <= empirical_error(&other, &data).unwrap() + 1e-9);
        }
    }
}
