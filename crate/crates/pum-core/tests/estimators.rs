mod common;

use approx::assert_abs_diff_eq;
use common::{l2, linf, logit_mle};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use pum_core::data::{generate_synthetic, SyntheticSpec};
use pum_core::estimators::*;
use pum_core::rng::rng_from_seed;
use pum_core::{empirical_risk, fy_loss, ChoiceDataset, Observation, Perturbation, PumError, SolverConfig};
use rand_distr::{Distribution, StandardNormal};

const BETA_STAR: [f64; 3] = [1.0, 2.0, 0.5];

fn synthetic(pert: &Perturbation, n: usize, seed: u64) -> ChoiceDataset {
    generate_synthetic(&SyntheticSpec::new(n, 3, BETA_STAR.to_vec(), pert.clone(), seed)).unwrap()
}

fn tight() -> SolverConfig {
    SolverConfig::default().with_tol_kkt(1e-10)
}

/// Q = AᵀA + I with standard normal A, plus a random β*, both seed-fixed.
fn nonseparable_instance(k: usize, d: usize, mu: f64, seed: u64) -> (Perturbation, Vec<f64>) {
    let mut rng = rng_from_seed(seed);
    let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
    let a = DMatrix::from_fn(k, k, |_, _| normal());
    let q = a.transpose() * &a + DMatrix::identity(k, k);
    let beta = (0..d).map(|_| normal()).collect();
    (Perturbation::non_separable_quadratic(mu, q).unwrap(), beta)
}

#[test]
fn nag_recovers_beta_at_large_n() {
    let pert = Perturbation::shannon(1.0).unwrap();
    let data = synthetic(&pert, 5000, 17);
    let est = estimate_fy_nag(&pert, &data, &SolverConfig::default()).unwrap();
    assert!(est.converged);
    assert!(l2(&est.beta, &BETA_STAR) < 0.15, "{:?}", est.beta);
    assert!(est.final_kkt().unwrap() <= 1e-9);
}

#[test]
fn nag_reports_separation_as_nonconvergence() {
    let pert = Perturbation::shannon(1.0).unwrap();
    let data = ChoiceDataset::new(2, 1, vec![1.0, 0.0], vec![0], None).unwrap();
    let est = estimate_fy_nag(&pert, &data, &SolverConfig::default().with_max_iter(2000)).unwrap();
    assert!(!est.converged);
    assert_eq!(est.iterations, 2000);
    assert!(est.beta[0] > 5.0, "{:?}", est.beta);
    assert_eq!(est.kkt_trace.len(), est.objective_trace.len());
}

#[test]
fn nag_matches_direct_likelihood_maximization() {
    let pert = Perturbation::shannon(1.0).unwrap();
    for seed in 0..3 {
        let data = synthetic(&pert, 500, seed);
        let est = estimate_fy_nag(&pert, &data, &tight()).unwrap();
        let mle = logit_mle(3, 3, data.features(), data.choices(), 1.0);
        assert!(linf(&est.beta, &mle) < 1e-4, "seed {seed}");
    }
}

#[test]
fn nag_objective_trace_starts_at_zero_beta() {
    let pert = Perturbation::cauchy(0.8).unwrap();
    let data = synthetic(&pert, 200, 5);
    let est = estimate_fy_nag(&pert, &data, &SolverConfig::default().with_tol_kkt(1e-7)).unwrap();
    let at_zero = empirical_risk(&pert, &[0.0; 3], &data).unwrap();
    assert_abs_diff_eq!(est.objective_trace[0], at_zero, epsilon = 1e-12);
    assert!(est.final_objective().unwrap() <= at_zero);
}

#[test]
fn extragradient_on_nonseparable_instance() {
    let (pert, beta) = nonseparable_instance(10, 10, 1.0, 7);
    let data = generate_synthetic(&SyntheticSpec::new(5000, 10, beta, pert.clone(), 11)).unwrap();
    let eg = estimate_fy_extragradient(&pert, &data, &SolverConfig::default().with_max_iter(500).with_tol_kkt(1e-7))
        .unwrap();
    assert!(eg.final_kkt().unwrap() < 1e-3);
    for w in eg.kkt_trace[10..].windows(2) {
        assert!(w[1] <= 1.05 * w[0], "{} -> {}", w[0], w[1]);
    }
    let nag = estimate_fy_nag(&pert, &data, &SolverConfig::default().with_tol_kkt(1e-8)).unwrap();
    assert!(linf(&eg.beta, &nag.beta) < 1e-3);
}

#[test]
fn extragradient_with_identity_q_is_sparsemax() {
    let q = Perturbation::non_separable_quadratic(1.0, DMatrix::identity(3, 3)).unwrap();
    let sparsemax = Perturbation::quadratic(1.0).unwrap();
    let data = synthetic(&sparsemax, 300, 2);
    let eg = estimate_fy_extragradient(&q, &data, &SolverConfig::default().with_max_iter(20_000).with_tol_kkt(1e-9))
        .unwrap();
    let nag = estimate_fy_nag(&sparsemax, &data, &tight()).unwrap();
    assert!(eg.converged);
    assert!(linf(&eg.beta, &nag.beta) < 1e-4);
}

#[test]
fn extragradient_shannon_uses_entropic_steps() {
    let pert = Perturbation::shannon(1.0).unwrap();
    let data = synthetic(&pert, 300, 8);
    let eg = estimate_fy_extragradient(&pert, &data, &SolverConfig::default().with_max_iter(20_000).with_tol_kkt(1e-8))
        .unwrap();
    let nag = estimate_fy_nag(&pert, &data, &tight()).unwrap();
    assert!(eg.converged);
    assert!(linf(&eg.beta, &nag.beta) < 1e-5);
}

#[test]
fn extragradient_rejects_cauchy() {
    let pert = Perturbation::cauchy(1.0).unwrap();
    let data = synthetic(&pert, 20, 1);
    assert!(matches!(estimate_fy_extragradient(&pert, &data, &SolverConfig::default()), Err(PumError::Unsupported(_))));
}

#[test]
fn extragradient_point_is_a_first_order_saddle() {
    use rand::Rng;
    let pert = Perturbation::quadratic(1.0).unwrap();
    let data = synthetic(&pert, 200, 4);
    let eg = estimate_fy_extragradient(&pert, &data, &SolverConfig::default().with_max_iter(20_000).with_tol_kkt(1e-8))
        .unwrap();
    let value = eg.final_objective().unwrap();
    // At the saddle the dual blocks are the choice probabilities and the value is J(β̂).
    assert_abs_diff_eq!(value, empirical_risk(&pert, &eg.beta, &data).unwrap(), epsilon = 1e-4);
    let (k, n) = (data.k(), data.len() as f64);
    let p_hat: Vec<Vec<f64>> =
        data.iter().map(|o| pert.choice_probabilities(&o.utilities(&eg.beta)).unwrap().into_inner()).collect();
    let lagrangian = |beta: &[f64], p: &[Vec<f64>]| -> f64 {
        data.iter()
            .zip(p)
            .map(|(o, pn)| {
                let v = o.utilities(beta);
                (0..k).map(|i| pn[i] * v[i]).sum::<f64>() - v[o.y] - pert.lambda_value(pn).unwrap()
            })
            .sum::<f64>()
            / n
    };
    let mut rng = rng_from_seed(99);
    for _ in 0..50 {
        let b: Vec<f64> = eg.beta.iter().map(|x| x + rng.random_range(-0.5..0.5)).collect();
        assert!(lagrangian(&b, &p_hat) >= value - 1e-4);
        let p: Vec<Vec<f64>> = (0..data.len())
            .map(|_| {
                let w: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
                let s: f64 = w.iter().sum();
                w.iter().map(|x| x / s).collect()
            })
            .collect();
        assert!(lagrangian(&eg.beta, &p) <= value + 1e-4);
    }
}

#[test]
fn dro_with_vanishing_budget_is_the_plain_estimator() {
    let pert = Perturbation::shannon(1.0).unwrap();
    let data = synthetic(&pert, 100, 3);
    let dro = estimate_dro_bilinear(
        &pert,
        &data,
        &DroConfig::new(1e-9, 1e6),
        &SolverConfig::default().with_max_iter(50_000).with_tol_kkt(1e-8),
    )
    .unwrap();
    let nag = estimate_fy_nag(&pert, &data, &tight()).unwrap();
    assert!(dro.converged);
    assert!(linf(&dro.beta, &nag.beta) < 1e-3);
}

#[test]
fn dro_converges_on_small_nonseparable_instance() {
    let (pert, beta) = nonseparable_instance(10, 10, 1.0, 7);
    let data = generate_synthetic(&SyntheticSpec::new(50, 10, beta, pert.clone(), 3)).unwrap();
    let est = estimate_dro_bilinear(
        &pert,
        &data,
        &DroConfig::new(0.05, 1.0),
        &SolverConfig::default().with_max_iter(5000).with_tol_kkt(1e-4),
    )
    .unwrap();
    assert!(est.converged);
    assert!(est.final_kkt().unwrap() < 1e-4);
    assert!(est.oscillation.unwrap() < 1e-6);
}

#[test]
fn dro_objective_dominates_nominal_risk() {
    let pert = Perturbation::quadratic(1.0).unwrap();
    let data = synthetic(&pert, 60, 6);
    let cfg = DroConfig::new(0.1, 0.5);
    let est =
        estimate_dro_bilinear(&pert, &data, &cfg, &SolverConfig::default().with_max_iter(50_000).with_tol_kkt(1e-7))
            .unwrap();
    let gamma = est.gamma.unwrap();
    assert!(gamma >= lipschitz_constant(&cfg, &est.beta) - 1e-9);
    let obj = dro_objective(&pert, &data, &est.beta, gamma, &cfg).unwrap();
    assert_abs_diff_eq!(obj, est.final_objective().unwrap(), epsilon = 1e-5);
    assert!(obj >= empirical_risk(&pert, &est.beta, &data).unwrap());
}

#[test]
fn dro_matches_l2_limit_for_large_kappa() {
    let pert = Perturbation::shannon(1.0).unwrap();
    for seed in 0..3 {
        let data = synthetic(&pert, 100, seed);
        let cfg = DroConfig::new(0.05, 1e6);
        let dro = estimate_dro_bilinear(
            &pert,
            &data,
            &cfg,
            &SolverConfig::default().with_max_iter(20_000).with_tol_kkt(1e-7),
        )
        .unwrap();
        let reg = estimate_l2_limit(&pert, &data, 0.05 * cfg.c_s(), &tight()).unwrap();
        assert!(l2(&dro.beta, &reg.beta) < 1e-2);
    }
}

#[test]
fn dro_infinite_kappa_freezes_labels() {
    let pert = Perturbation::shannon(1.0).unwrap();
    let data = synthetic(&pert, 80, 12);
    let cfg = DroConfig::new(0.05, KAPPA_INFINITE);
    assert!(cfg.kappa_is_infinite());
    let dro =
        estimate_dro_bilinear(&pert, &data, &cfg, &SolverConfig::default().with_max_iter(20_000).with_tol_kkt(1e-8))
            .unwrap();
    let reg = estimate_l2_limit(&pert, &data, 0.05 * cfg.c_s(), &tight()).unwrap();
    assert!(l2(&dro.beta, &reg.beta) < 1e-5);
}

#[test]
fn dro_rejects_zero_budget() {
    let pert = Perturbation::shannon(1.0).unwrap();
    let data = synthetic(&pert, 10, 1);
    assert!(estimate_dro_bilinear(&pert, &data, &DroConfig::new(0.0, 1.0), &SolverConfig::default()).is_err());
    assert!(estimate_dro_bilinear(&pert, &data, &DroConfig::new(0.1, 0.0), &SolverConfig::default()).is_err());
}

#[test]
fn l2_limit_examples() {
    let pert = Perturbation::shannon(1.0).unwrap();
    let data = synthetic(&pert, 200, 21);
    let nag = estimate_fy_nag(&pert, &data, &tight()).unwrap();
    let zero = estimate_l2_limit(&pert, &data, 0.0, &tight()).unwrap();
    assert!(linf(&zero.beta, &nag.beta) < 1e-6);
    let huge = estimate_l2_limit(&pert, &data, 1e6, &tight()).unwrap();
    assert_eq!(huge.beta, vec![0.0; 3]);
    assert!(huge.converged);
}

#[test]
fn l2_displacement_follows_inverse_hessian() {
    let pert = Perturbation::shannon(1.0).unwrap();
    let data = synthetic(&pert, 500, 31);
    let cfg = SolverConfig::default().with_tol_kkt(1e-12);
    let b0 = estimate_l2_limit(&pert, &data, 0.0, &cfg).unwrap().beta;
    let lambda = 1e-3;
    let bl = estimate_l2_limit(&pert, &data, lambda, &cfg).unwrap().beta;
    let h = sandwich_covariance(&pert, &data, &b0).unwrap().hessian;
    let u = DVector::from_column_slice(&b0) / l2(&b0, &[0.0; 3]);
    let predicted = -(h.lu().solve(&u).unwrap() * lambda);
    let actual = DVector::from_iterator(3, bl.iter().zip(&b0).map(|(a, b)| a - b));
    let rel = (&actual - &predicted).norm() / predicted.norm();
    assert!(rel < 0.1, "relative error {rel}");
}

#[test]
fn l2_norm_shrinks_monotonically() {
    let pert = Perturbation::quadratic(1.0).unwrap();
    let data = synthetic(&pert, 100, 41);
    let mut last = f64::INFINITY;
    for lambda in [0.0, 0.01, 0.03, 0.1, 0.3, 1.0, 3.0] {
        let b = estimate_l2_limit(&pert, &data, lambda, &tight()).unwrap().beta;
        let n = l2(&b, &[0.0; 3]);
        assert!(n <= last + 1e-9, "λ = {lambda}: {n} > {last}");
        last = n;
    }
}

#[test]
fn hinge_with_priced_out_adversary_is_the_plain_estimator() {
    let pert = Perturbation::shannon(1.0).unwrap();
    let data = synthetic(&pert, 100, 13);
    let hinge =
        estimate_hinge_limit(&pert, &data, 1e9, &SolverConfig::default().with_max_iter(100_000).with_tol_kkt(1e-6))
            .unwrap();
    let nag = estimate_fy_nag(&pert, &data, &tight()).unwrap();
    assert!(hinge.converged, "{} after {}", hinge.final_kkt().unwrap(), hinge.iterations);
    assert!(linf(&hinge.beta, &nag.beta) < 1e-3);
}

#[test]
fn hinge_at_zero_margin_dominates_nominal_risk() {
    let pert = Perturbation::shannon(1.0).unwrap();
    let data = synthetic(&pert, 50, 14);
    for beta in [[0.0; 3], BETA_STAR, [-1.0, 0.3, 2.0]] {
        let h = hinge_objective(&pert, &data, &beta, 0.0).unwrap();
        let upper: f64 = data
            .iter()
            .map(|o| {
                let nominal = fy_loss(&pert, &beta, o).unwrap();
                let v = o.utilities(&beta);
                (0..3).map(|i| nominal + v[o.y] - v[i]).fold(f64::NEG_INFINITY, f64::max)
            })
            .sum::<f64>()
            / 50.0;
        assert_abs_diff_eq!(h, upper, epsilon = 1e-12);
        assert!(h >= empirical_risk(&pert, &beta, &data).unwrap());
    }
}

#[test]
fn dro_objective_approaches_the_bilevel_hinge_value() {
    let pert = Perturbation::shannon(1.0).unwrap();
    let data = synthetic(&pert, 40, 4);
    let nu = 0.2;
    let bilevel = estimate_hinge_bilevel(
        &pert,
        &data,
        nu,
        20.0,
        &SolverConfig::default().with_max_iter(50_000).with_tol_kkt(1e-7),
        40,
    )
    .unwrap();
    let mut values = Vec::new();
    for t in [1e-1, 1e-2, 1e-3] {
        let cfg = DroConfig::new(t * nu, t);
        let r = estimate_dro_bilinear(
            &pert,
            &data,
            &cfg,
            &SolverConfig::default().with_max_iter(50_000).with_tol_kkt(1e-6),
        )
        .unwrap();
        values.push(dro_objective(&pert, &data, &r.beta, r.gamma.unwrap(), &cfg).unwrap());
    }
    // Shrinking t relaxes the cone, so the value can only fall toward the limit.
    assert!(values.windows(2).all(|w| w[1] <= w[0] + 1e-6), "{values:?}");
    let gap = (values[2] - bilevel.value).abs() / bilevel.value.abs();
    assert!(gap < 0.05, "{values:?} vs {}", bilevel.value);
}

#[test]
fn every_estimator_descends_from_zero() {
    let pert = Perturbation::quadratic(1.0).unwrap();
    let data = synthetic(&pert, 60, 51);
    let cfg = SolverConfig::default().with_max_iter(20_000).with_tol_kkt(1e-6);
    let j0 = empirical_risk(&pert, &[0.0; 3], &data).unwrap();
    let nag = estimate_fy_nag(&pert, &data, &cfg).unwrap();
    assert!(empirical_risk(&pert, &nag.beta, &data).unwrap() <= j0);
    let eg = estimate_fy_extragradient(&pert, &data, &cfg).unwrap();
    assert!(empirical_risk(&pert, &eg.beta, &data).unwrap() <= j0);
    let lambda = 0.05;
    let reg = estimate_l2_limit(&pert, &data, lambda, &cfg).unwrap();
    assert!(empirical_risk(&pert, &reg.beta, &data).unwrap() + lambda * l2(&reg.beta, &[0.0; 3]) <= j0);
    let tau = 1.0;
    let hinge = estimate_hinge_limit(&pert, &data, tau, &cfg).unwrap();
    assert!(
        hinge_objective(&pert, &data, &hinge.beta, tau).unwrap()
            <= hinge_objective(&pert, &data, &[0.0; 3], tau).unwrap()
    );
    let dcfg = DroConfig::new(0.05, 0.5);
    let dro = estimate_dro_bilinear(&pert, &data, &dcfg, &cfg).unwrap();
    let at_zero = dro_objective(&pert, &data, &[0.0; 3], 0.0, &dcfg).unwrap();
    assert!(dro_objective(&pert, &data, &dro.beta, dro.gamma.unwrap(), &dcfg).unwrap() <= at_zero);
}

#[test]
fn scaling_law_examples() {
    let norm = 5.25f64.sqrt();
    assert_abs_diff_eq!(scaling_law_reg(3, 100, norm), 0.13 * 0.173205 / 2.291288, epsilon = 1e-6);
    assert_abs_diff_eq!(scaling_law_reg(3, 100, norm), 0.0098271, epsilon = 1e-7);
    assert_abs_diff_eq!(scaling_law_reg(7, 7, 0.13), 1.0, epsilon = 1e-15);
    assert_abs_diff_eq!(scaling_law_reg(3, 50, 2.0) / scaling_law_reg(3, 100, 2.0), 2f64.sqrt(), epsilon = 1e-14);
    assert_abs_diff_eq!(scaling_law_flip(3, 100, norm), 2.9 * 2.291288 / 0.173205, epsilon = 1e-4);
    assert_abs_diff_eq!(scaling_law_flip(3, 100, norm), 38.3634, epsilon = 1e-4);
    assert_abs_diff_eq!(scaling_law_flip(3, 400, 2.0) / scaling_law_flip(3, 100, 2.0), 2.0, epsilon = 1e-14);
    for (d, n, b) in [(3, 100, 1.0), (10, 37, 0.2), (1, 5000, 9.0)] {
        assert_abs_diff_eq!(scaling_law_reg(d, n, b) * scaling_law_flip(d, n, b), 0.377, epsilon = 1e-12);
    }
}

#[test]
fn sandwich_fair_coin_example() {
    let pert = Perturbation::shannon(1.0).unwrap();
    let h = surplus_hessian(&pert, &[0.0, 0.0]).unwrap();
    assert_abs_diff_eq!(h.as_slice(), [0.25, -0.25, -0.25, 0.25].as_slice(), epsilon = 1e-15);
    let data = ChoiceDataset::new(2, 1, vec![1.0, 0.0], vec![0], None).unwrap();
    let s = sandwich_covariance(&pert, &data, &[0.0]).unwrap();
    assert_abs_diff_eq!(s.hessian[(0, 0)], 0.25, epsilon = 1e-15);
    assert!(!s.hessian_may_be_singular);
}

#[test]
fn sandwich_information_equality_at_the_mle() {
    let pert = Perturbation::shannon(1.0).unwrap();
    let data = synthetic(&pert, 5000, 61);
    let est = estimate_fy_nag(&pert, &data, &tight()).unwrap();
    let s = sandwich_covariance(&pert, &data, &est.beta).unwrap();
    let rel = (&s.hessian - &s.score_covariance).norm() / s.hessian.norm();
    assert!(rel < 0.05, "{rel}");
    assert!(s.covariance.symmetric_eigen().eigenvalues.min() > 0.0);
}

#[test]
fn sandwich_fd_hessian_matches_sparsemax_jacobian() {
    // p = [0.55, 0.45, 0]: on the support the Jacobian is (I − 11ᵀ/2)/μ.
    let quad = Perturbation::quadratic(2.0).unwrap();
    let h = surplus_hessian(&quad, &[1.0, 0.8, -3.0]).unwrap();
    let expect = [0.25, -0.25, 0.0, -0.25, 0.25, 0.0, 0.0, 0.0, 0.0];
    assert_abs_diff_eq!(h.as_slice(), expect.as_slice(), epsilon = 1e-8);
}

#[test]
fn sandwich_flags_and_rejects_flat_hessians() {
    let quad = Perturbation::quadratic(1.0).unwrap();
    let data = synthetic(&quad, 200, 71);
    let est = estimate_fy_nag(&quad, &data, &tight()).unwrap();
    assert!(sandwich_covariance(&quad, &data, &est.beta).unwrap().hessian_may_be_singular);
    // Every observation at a vertex: zero curvature everywhere.
    let flat = ChoiceDataset::new(2, 1, vec![50.0, 0.0, 40.0, 0.0], vec![0, 0], None).unwrap();
    let err = sandwich_covariance(&quad, &flat, &[1.0]).unwrap_err();
    assert!(matches!(err, PumError::SingularHessian { .. }));
    assert!(err.to_string().contains("Hessian not positive definite"));
}

#[test]
fn lipschitz_constant_examples() {
    let e = DroConfig::new(0.1, 1.0);
    assert_abs_diff_eq!(lipschitz_constant(&e, &[1.0, 0.0]), 2f64.sqrt(), epsilon = 1e-15);
    assert_eq!(lipschitz_constant(&e, &[0.0, 0.0]), 0.0);
    let m = DroConfig::new(0.1, 1.0).with_metric(DMatrix::identity(4, 4) * 2.0);
    assert_abs_diff_eq!(lipschitz_constant(&m, &[0.6, 0.8]), 2.0, epsilon = 1e-7);
}

#[test]
fn robustified_loss_examples() {
    let pert = Perturbation::shannon(1.0).unwrap();
    let obs = Observation::new(2, 1, vec![0.0, 0.0], 0).unwrap();
    for gk in [0.0, 0.3, 10.0] {
        assert_abs_diff_eq!(robustified_loss(&pert, &[1.0], gk, 1.0, obs.view()).unwrap(), 2f64.ln(), epsilon = 1e-15);
    }
    let obs = Observation::new(3, 1, vec![2.0, -1.0, 0.5], 0).unwrap();
    let nominal = fy_loss(&pert, &[1.0], obs.view()).unwrap();
    assert_abs_diff_eq!(robustified_loss(&pert, &[1.0], 1e3, 1.0, obs.view()).unwrap(), nominal, epsilon = 1e-15);
    // γκ = 0: the worst label, here the least attractive alternative.
    assert_abs_diff_eq!(robustified_loss(&pert, &[1.0], 0.0, 5.0, obs.view()).unwrap(), nominal + 3.0, epsilon = 1e-13);
    assert_abs_diff_eq!(
        robustified_loss(&pert, &[1.0], 0.7, KAPPA_INFINITE, obs.view()).unwrap(),
        nominal,
        epsilon = 1e-15
    );
}

#[test]
fn cone_projection() {
    let (b, g) = project_cone(&[3.0, 4.0], 1.0, 1.0);
    // r = (5 + 1)/2 = 3 along the direction of b.
    assert_abs_diff_eq!(b.as_slice(), [1.8, 2.4].as_slice(), epsilon = 1e-14);
    assert_abs_diff_eq!(g, 3.0, epsilon = 1e-14);
    assert_eq!(project_cone(&[0.3, 0.4], 1.0, 1.0), (vec![0.3, 0.4], 1.0));
    assert_eq!(project_cone(&[0.3, 0.4], -5.0, 1.0), (vec![0.0, 0.0], 0.0));
}

#[test]
fn oracle_examples() {
    let pert = Perturbation::shannon(1.0).unwrap();
    let data = ChoiceDataset::new(2, 1, vec![0.5, -0.2, -0.4, 0.9, 0.1, 0.3], vec![0, 1, 1], None).unwrap();
    let grid = FeatureGrid::new(41);
    let beta = [1.3];
    // Transport priced out: only the observed point and label survive.
    let gamma = 1e6;
    let cfg = DroConfig::new(0.01, 1.0);
    let o = exact_dro_oracle(&pert, &data, &beta, gamma, &cfg, &grid).unwrap();
    assert_abs_diff_eq!(o, gamma * 0.01 + empirical_risk(&pert, &beta, &data).unwrap(), epsilon = 1e-9);
    // Degenerate ball at β = 0: every candidate has the same loss.
    let cfg = DroConfig::new(0.0, KAPPA_INFINITE);
    let o = exact_dro_oracle(&pert, &data, &[0.0], 0.0, &cfg, &grid).unwrap();
    assert_abs_diff_eq!(o, empirical_risk(&pert, &[0.0], &data).unwrap(), epsilon = 1e-15);
}

#[test]
fn oracle_refuses_large_grids() {
    let pert = Perturbation::shannon(1.0).unwrap();
    let data = synthetic(&pert, 5, 1);
    let err =
        exact_dro_oracle(&pert, &data, &[0.0; 3], 1.0, &DroConfig::new(0.1, 1.0), &FeatureGrid::new(11)).unwrap_err();
    assert!(matches!(err, PumError::OracleTooLarge { .. }));
    assert!(err.to_string().contains("oracle restricted to desk scale"));
}

#[test]
fn safe_approximation_dominates_the_oracle() {
    let pert = Perturbation::shannon(1.0).unwrap();
    let data = generate_synthetic(&SyntheticSpec::new(3, 2, vec![1.5], pert.clone(), 5)).unwrap();
    let cfg = DroConfig::new(0.1, 0.5);
    let est =
        estimate_dro_bilinear(&pert, &data, &cfg, &SolverConfig::default().with_max_iter(50_000).with_tol_kkt(1e-8))
            .unwrap();
    let gamma = est.gamma.unwrap();
    let tractable = dro_objective(&pert, &data, &est.beta, gamma, &cfg).unwrap();
    let oracle = exact_dro_oracle(&pert, &data, &est.beta, gamma, &cfg, &FeatureGrid::default()).unwrap();
    assert!(tractable >= oracle - 1e-12, "{tractable} < {oracle}");
}

#[test]
fn estimate_result_record_is_flat() {
    let pert = Perturbation::shannon(1.0).unwrap();
    let data = synthetic(&pert, 30, 2);
    let est = estimate_fy_nag(&pert, &data, &SolverConfig::default()).unwrap();
    let rec = est.record();
    assert_eq!(rec[0].0, "beta_0");
    assert!(rec.iter().any(|(k, v)| k == "converged" && v == "true"));
}

#[test]
fn beta_traces_are_opt_in_and_aligned() {
    let pert = Perturbation::quadratic(1.0).unwrap();
    let data = synthetic(&pert, 40, 3);
    let cfg = SolverConfig::default().with_max_iter(30).with_tol_kkt(1e-12);
    assert!(estimate_fy_nag(&pert, &data, &cfg).unwrap().beta_trace.is_empty());
    let cfg = cfg.with_beta_trace();
    let runs = [
        estimate_fy_nag(&pert, &data, &cfg).unwrap(),
        estimate_fy_extragradient(&pert, &data, &cfg).unwrap(),
        estimate_dro_bilinear(&pert, &data, &DroConfig::new(0.05, 1.0), &cfg).unwrap(),
    ];
    for r in &runs {
        assert_eq!(r.beta_trace.len(), r.kkt_trace.len());
        assert_eq!(r.beta_trace.len(), 31);
        assert_eq!(r.beta_trace.last().unwrap(), &r.beta);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn robustified_loss_dominates_nominal(f in 0usize..3, gamma in 0.0f64..5.0, kappa in 0.0f64..5.0, seed in 0u64..1000) {
        use rand::Rng;
        let pert = match f { 0 => Perturbation::shannon(1.0), 1 => Perturbation::quadratic(0.5), _ => Perturbation::cauchy(2.0) }.unwrap();
        let mut rng = rng_from_seed(seed);
        let x: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
        let obs = Observation::new(4, 2, x, rng.random_range(0..4)).unwrap();
        let beta = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        prop_assert!(robustified_loss(&pert, &beta, gamma, kappa, obs.view()).unwrap() >= fy_loss(&pert, &beta, obs.view()).unwrap());
    }

    #[test]
    fn cone_projection_is_feasible_and_idempotent(b in prop::collection::vec(-3.0f64..3.0, 3), g in -3.0f64..3.0, c in 0.1f64..3.0) {
        let (pb, pg) = project_cone(&b, g, c);
        prop_assert!(c * l2(&pb, &[0.0; 3]) <= pg + 1e-12);
        let (qb, qg) = project_cone(&pb, pg, c);
        prop_assert!(l2(&qb, &pb) <= 1e-12 && (qg - pg).abs() <= 1e-12);
    }
}
