mod common;

use std::sync::Arc;

use rand::Rng;

use common::{dense_global_gradient, norm, rng, toy_problem};
use gradcomp::codec::QuantizerConfig;
use gradcomp::protocol::{plan_step, run_training, AgentState, RunSetup, Scheme, StepContext};
use gradcomp::theory::{
    certificate_curve, check_variance, estimate_smoothness_convexity, first_moment_check, fit_dissimilarity,
    gradient_norms, probe_frozen_state, CertificateParams, CheckStatus, GradientNorms, RunConstants,
    SmoothnessEstimate,
};
use gradcomp::trigger::TriggerSchedule;
use gradcomp::wire::Precision;
use gradcomp::workload::{partition_uniform, Dataset, LossConfig};

#[test]
fn lipschitz_estimate_survives_random_pairs() {
    let (shards, loss) = toy_problem(400, 20, 4, 21);
    let est = estimate_smoothness_convexity(&shards, &loss);
    let mut r = rng(21);
    for _ in 0..1000 {
        let scale = 10f64.powf(r.gen_range(-3.0..1.0));
        let x: Vec<f64> = (0..20).map(|_| r.gen_range(-scale..scale)).collect();
        let y: Vec<f64> = (0..20).map(|_| r.gen_range(-scale..scale)).collect();
        let gx = dense_global_gradient(&x, &shards, &loss);
        let gy = dense_global_gradient(&y, &shards, &loss);
        let dg: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a - b).collect();
        let dx: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        assert!(norm(&dg) <= est.l_hat * norm(&dx) * (1.0 + 1e-12));
        // Strong convexity: <grad f(x) - grad f(y), x - y> >= mu ||x - y||^2.
        let inner: f64 = dg.iter().zip(&dx).map(|(a, b)| a * b).sum();
        assert!(inner >= est.mu_hat * norm(&dx).powi(2) * (1.0 - 1e-12));
    }
}

#[test]
fn smoothness_of_degenerate_problems() {
    let one = Dataset::new(vec![vec![1.0, 0.0]], vec![1.0]).unwrap();
    let shards = partition_uniform(Arc::new(one), 1).unwrap();
    let est = estimate_smoothness_convexity(&shards, &LossConfig::new(0.0, 1).unwrap());
    assert_eq!(est.l_hat, 0.25);

    let zeros = Dataset::new(vec![vec![0.0; 3]; 4], vec![1.0, -1.0, 1.0, -1.0]).unwrap();
    let shards = partition_uniform(Arc::new(zeros), 2).unwrap();
    let loss = LossConfig::new(0.01, 2).unwrap();
    let est = estimate_smoothness_convexity(&shards, &loss);
    assert_eq!(est.l_hat, est.mu_hat);
    // A pure quadratic: the gradient difference ratio is the same everywhere.
    let x = [1.0, -2.0, 0.5];
    let y = [0.0, 3.0, 1.0];
    let gx = dense_global_gradient(&x, &shards, &loss);
    let gy = dense_global_gradient(&y, &shards, &loss);
    let dg: Vec<f64> = gx.iter().zip(&gy).map(|(a, b)| a - b).collect();
    let dx: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
    assert!((norm(&dg) / norm(&dx) - est.mu_hat).abs() < 1e-12);
}

#[test]
fn dissimilarity_degenerate_cases() {
    let single = [GradientNorms { agents_sq: vec![4.0], global_sq: 4.0 }];
    let fit = fit_dissimilarity(&single).unwrap();
    assert_eq!((fit.g_sq, fit.b_sq), (0.0, 1.0));
    assert_eq!(fit.b_sq_without_g, Some(1.0));

    let cancel = [GradientNorms { agents_sq: vec![2.0, 2.0], global_sq: 0.0 }];
    let fit = fit_dissimilarity(&cancel).unwrap();
    assert!(fit.g_sq >= 2.0);
    assert_eq!(fit.b_sq_without_g, None);
}

#[test]
fn dissimilarity_envelope_covers_the_run() {
    let (shards, loss) = toy_problem(500, 20, 5, 22);
    let scheme = Scheme::proposed(2, TriggerSchedule::linear_decay(1000.0, 5).unwrap(), QuantizerConfig::new(3.0, Precision::Bits16).unwrap());
    let mut setup = RunSetup::new(shards, loss, scheme, 0.05, 0.0);
    setup.max_iters = 120;
    setup.target_gap = f64::INFINITY;
    let h = run_training(&setup).unwrap();
    let norms = gradient_norms(&h);
    let fit = fit_dissimilarity(&norms).unwrap();
    assert!(norms.iter().all(|n| fit.covers(n)));
    assert!(fit.slack.iter().all(|&s| s >= 0.0));
    assert_eq!(fit.slack.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
}

#[test]
fn probe_at_a_frozen_state_passes_both_checks() {
    let (shards, loss) = toy_problem(500, 20, 5, 23);
    let scheme = Scheme::proposed(2, TriggerSchedule::constant(0.02).unwrap(), QuantizerConfig::new(3.0, Precision::Bits16).unwrap());
    let agents: Vec<AgentState> = shards.iter().map(|s| AgentState::new(s.clone(), &scheme, 0)).collect();
    let x = vec![0.05; 20];
    let plans: Vec<_> = agents
        .iter()
        .map(|a| plan_step(a, &x, &scheme, &loss, &StepContext { t: 1, laq_model_term: 0.0 }).unwrap())
        .collect();
    assert!(plans.iter().all(|p| p.transmit()));
    let probe = probe_frozen_state(&plans, &scheme, 5, 20_000).unwrap();
    assert_eq!(first_moment_check(&probe).status, CheckStatus::Pass);
    let norms = GradientNorms { agents_sq: probe.agent_grad_norms_sq.clone(), global_sq: probe.g_norm_sq };
    let fit = fit_dissimilarity(&[norms]).unwrap();
    let var = check_variance(&probe, &fit);
    assert_eq!(var.status, CheckStatus::Pass, "{var:?}");
    assert!(probe.var_estimate.unwrap() > 0.0);

    // Same seed, same answer.
    assert_eq!(probe_frozen_state(&plans, &scheme, 5, 20_000).unwrap(), probe);
}

#[test]
fn noiseless_certificate_is_a_pure_geometric_decay() {
    let smooth = SmoothnessEstimate { l_hat: 4.0, mu_hat: 0.2 };
    let constants = RunConstants { b: 0.0, c: 0.0, alpha_bar: 1.0 };
    let fit = fit_dissimilarity(&[GradientNorms { agents_sq: vec![1.0, 3.0], global_sq: 1.0 }]).unwrap();
    let params = CertificateParams::new(smooth, 0.1, constants, 2, &fit).unwrap();
    assert_eq!(params.floor(), 0.0);
    let cert = certificate_curve(&params, 2.0, 5).unwrap();
    assert_eq!(cert.bounds[0], 2.0);
    for (t, b) in cert.bounds.iter().enumerate() {
        assert!((b - 2.0 * (1.0 - 0.02f64).powi(t as i32)).abs() < 1e-15);
    }
    assert!(cert.applicable);
}

#[test]
fn measured_gap_stays_under_certificate_with_small_step() {
    let (shards, loss) = toy_problem(400, 12, 4, 24);
    let smooth = estimate_smoothness_convexity(&shards, &loss);
    let scheme = Scheme::proposed(2, TriggerSchedule::constant(0.002).unwrap(), QuantizerConfig::new(3.0, Precision::Bits16).unwrap());
    let fstar = gradcomp::protocol::reference_optimum(&shards, &loss, 0.02, 1e-10, 1_000_000).unwrap().fstar;
    let mut gamma = 0.05;
    for _ in 0..10 {
        let mut setup = RunSetup::new(shards.clone(), loss, scheme.clone(), gamma, fstar);
        setup.max_iters = 150;
        setup.target_gap = f64::INFINITY;
        let h = run_training(&setup).unwrap();
        let fit = fit_dissimilarity(&gradient_norms(&h)).unwrap();
        let params = CertificateParams::new(smooth, gamma, RunConstants::from_history(&h), 4, &fit).unwrap();
        if params.step_condition_holds() {
            let cert = certificate_curve(&params, h.initial_gap, h.iterations() + 1).unwrap();
            for r in &h.records {
                assert!(r.loss_gap <= cert.bounds[r.t], "t={} gap {} bound {}", r.t, r.loss_gap, cert.bounds[r.t]);
            }
            return;
        }
        // b >= 1 leaves no admissible step; a smaller step keeps the run
        // further from the optimum, where b is smaller.
        let limit = params.step_size_limit();
        gamma = if limit > 0.0 { 0.9 * limit.min(gamma) } else { gamma / 4.0 };
    }
    panic!("step-size condition never held");
}
