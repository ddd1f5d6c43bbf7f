mod common;

use alphasne::divergence::{alpha_divergence, Embedding};
use alphasne::eda::*;
use alphasne::optimizer::{run_embedding, OptimizerConfig};
use rand::Rng;

/// `D_beta` from its three-term definition, `beta` not in {0, -1}.
fn beta_divergence_reference(u: f64, mu: f64, beta: f64) -> f64 {
    u.powf(beta + 1.0) / (beta * (beta + 1.0)) + mu.powf(beta + 1.0) / (beta + 1.0) - u * mu.powf(beta) / beta
}

#[test]
fn transformed_divergences_agree() {
    let mut rng = common::rng(31);
    for _ in 0..25 {
        let n = rng.random_range(2..12);
        let v = common::random_distribution(n, &mut rng);
        let m = common::random_distribution(n, &mut rng);
        for alpha in [0.25, 0.5, 0.75, 1.0] {
            let beta = beta_from_alpha(alpha).unwrap();
            let u = transform_to_beta(&v, alpha).unwrap();
            let mu = transform_to_beta(&m, alpha).unwrap();
            let db: f64 = u.iter().zip(&mu).map(|(a, b)| beta_divergence(*a, *b, beta)).sum();
            let da = alpha_divergence(&v, &m, alpha).unwrap();
            assert!((db - da).abs() < 1e-9, "alpha {alpha}: {db} vs {da}");
            if beta != 0.0 {
                let r: f64 = u.iter().zip(&mu).map(|(a, b)| beta_divergence_reference(*a, *b, beta)).sum();
                assert!((r - da).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn normalized_density_integrates_to_one() {
    for (beta, phi, mu) in [(2.0, 0.3, 1.2), (0.0, 0.5, 0.7), (-2.0, 0.2, 1.5), (0.6, 1.0, 2.0)] {
        let params = EdaParams::new(beta, phi).unwrap();
        let log_z = log_normalizer(&params, mu).unwrap();
        // midpoint rule over ln u
        let (lo, hi, steps) = (-30.0_f64, 6.0_f64, 400_000);
        let h = (hi - lo) / steps as f64;
        let mut total = 0.0;
        for k in 0..steps {
            let s = lo + (k as f64 + 0.5) * h;
            let u = s.exp();
            total += (eda_log_density_unnormalized(u, mu, &params).unwrap() - log_z).exp() * u * h;
        }
        assert!((total - 1.0).abs() < 1e-6, "beta {beta}: {total}");
    }
}

#[test]
fn tabulated_likelihood_matches_direct_quadrature() {
    let mut rng = common::rng(32);
    let v = common::random_distribution(40, &mut rng);
    let m = common::random_distribution(40, &mut rng);
    for alpha in [0.3, 0.6, 1.0] {
        let ev = LikelihoodEvaluator::new(&v, &m, alpha).unwrap();
        for phi in [1e-3, 0.05, 2.0] {
            let table = ev.log_likelihood(phi).unwrap();
            let direct = eda_log_likelihood(&v, &m, alpha, phi).unwrap();
            assert!((table - direct).abs() < 1e-6 * direct.abs().max(1.0), "alpha {alpha} phi {phi}: {table} vs {direct}");
        }
    }
}

#[test]
fn score_matching_is_quadratic_in_inverse_dispersion() {
    let mut rng = common::rng(33);
    let v = common::random_distribution(30, &mut rng);
    let m = common::random_distribution(30, &mut rng);
    let fit = fit_candidate(&v, &m, 0.5, false).unwrap();
    for phi in [fit.score_matching_data.phi * 0.5, fit.score_matching_data.phi * 2.0] {
        assert!(score_matching_objective_data(&v, &m, 0.5, phi).unwrap() >= fit.score_matching_data.value - 1e-9);
    }
    assert!(fit.log_likelihood.is_none());
}

fn small_problem() -> (alphasne::NeighborProbabilities, impl Fn(f64) -> alphasne::Result<Embedding> + Sync) {
    let mut rng = common::rng(34);
    let (data, labels) = common::clusters(3, 10, 4, 1.0, &mut rng);
    let ds = alphasne::Dataset::new("c", data, Some(labels)).unwrap();
    let p = alphasne::affinities(&ds, 8.0).unwrap().0;
    let p2 = p.clone();
    let embed = move |alpha: f64| {
        let c = OptimizerConfig {
            max_iters: 200,
            ..OptimizerConfig::default().with_alpha(alpha).with_seed(2)
        };
        run_embedding(&p2, &c).map(|r| r.embedding)
    };
    (p, embed)
}

#[test]
fn single_candidate_is_selected() {
    let (p, embed) = small_problem();
    let fit = estimate_alpha(&p, &embed, &[0.4], EstimateOptions::default()).unwrap();
    assert_eq!(fit.selected_alpha, 0.4);
    assert_eq!(fit.objectives.len(), 1);
    assert!(fit.failures.is_empty());
}

#[test]
fn estimation_is_deterministic_and_records_every_objective() {
    let (p, embed) = small_problem();
    let grid = [0.3, 0.6, 0.9];
    let a = estimate_alpha(&p, &embed, &grid, EstimateOptions::default()).unwrap();
    let b = estimate_alpha(&p, &embed, &grid, EstimateOptions::default()).unwrap();
    assert_eq!(a, b);
    for c in a.candidates.iter().flatten() {
        assert!(c.log_likelihood.is_some());
        assert!(c.score_matching.value.is_finite() && c.score_matching_data.value.is_finite());
    }
    let best = a.objectives.iter().cloned().fold(f64::INFINITY, f64::min);
    assert_eq!(a.objectives[grid.iter().position(|g| *g == a.selected_alpha).unwrap()], best);

    let ml = estimate_alpha(&p, &embed, &grid, EstimateOptions::with_method(EdaMethod::MaxLikelihood)).unwrap();
    let best = ml.objectives.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(ml.objectives[grid.iter().position(|g| *g == ml.selected_alpha).unwrap()], best);
}

#[test]
fn failed_candidates_are_reported() {
    let (p, embed) = small_problem();
    let flaky = |alpha: f64| {
        if alpha < 0.5 {
            Err(alphasne::Error::Numerical("diverged".into()))
        } else {
            embed(alpha)
        }
    };
    let fit = estimate_alpha(&p, flaky, &[0.2, 0.8], EstimateOptions::default()).unwrap();
    assert_eq!(fit.selected_alpha, 0.8);
    assert_eq!(fit.failures.len(), 1);
    assert!(fit.objectives[0].is_nan());
    let all_bad = |_: f64| -> alphasne::Result<Embedding> { Err(alphasne::Error::Numerical("x".into())) };
    assert!(estimate_alpha(&p, all_bad, &[0.2, 0.8], EstimateOptions::default()).is_err());
    assert!(estimate_alpha(&p, &embed, &[], EstimateOptions::default()).is_err());
}
