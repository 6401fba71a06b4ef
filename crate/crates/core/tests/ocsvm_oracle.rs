//! Solver-vs-oracle equivalence on desk-scale instances.

mod common;

use common::brute_force_ocsvm;
use driftguard_core::featurize::FeatureVector;
use driftguard_core::ocsvm::{fit_ocsvm, KernelConfig, KernelKind, OcsvmConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn config(nu: f64, gamma: f64) -> OcsvmConfig {
    OcsvmConfig {
        nu,
        kernel: KernelConfig {
            kind: KernelKind::Rbf,
            gamma,
        },
        tol: 1e-8,
        max_iter: 200_000,
    }
}

fn to_features(points: &[Vec<f64>]) -> Vec<FeatureVector> {
    points
        .iter()
        .map(|p| FeatureVector::from_values(p.clone()))
        .collect()
}

#[test]
fn five_clustered_points_match_oracle() {
    let points = vec![
        vec![0.10, 0.20],
        vec![0.15, 0.25],
        vec![0.05, 0.18],
        vec![0.20, 0.10],
        vec![0.12, 0.30],
    ];
    let cfg = config(0.4, 1.0);
    let model = fit_ocsvm(&to_features(&points), &cfg).unwrap();
    assert!(model.converged);
    let oracle = brute_force_ocsvm(&points, 0.4, 1.0);
    assert!(
        (model.dual_objective() - oracle.objective).abs() < 1e-6,
        "objective {} vs oracle {}",
        model.dual_objective(),
        oracle.objective
    );

    // Held-out probes: an in-cluster point and a distant one.
    let inlier = vec![0.12, 0.22];
    let outlier = vec![3.0, -2.0];
    for probe in [inlier, outlier] {
        let f_model = model
            .decision(&FeatureVector::from_values(probe.clone()))
            .unwrap();
        let f_oracle = oracle.decision(&probe);
        assert_eq!(
            f_model < 0.0,
            f_oracle < 0.0,
            "sign mismatch at {probe:?}: {f_model} vs {f_oracle}"
        );
    }
}

#[test]
fn randomized_instances_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for instance in 0..6 {
        let n = rng.random_range(3..=8);
        let d = rng.random_range(2..=4);
        let nu = [0.3, 0.5, 0.8][instance % 3];
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let model = fit_ocsvm(&to_features(&points), &config(nu, 1.0)).unwrap();
        let oracle = brute_force_ocsvm(&points, nu, 1.0);
        let gap = (model.dual_objective() - oracle.objective).abs();
        assert!(gap < 1e-6, "instance {instance}: objective gap {gap}");
    }
}

#[test]
fn decision_invariant_under_training_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let points: Vec<Vec<f64>> = (0..6)
        .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut shuffled = points.clone();
    shuffled.reverse();
    shuffled.swap(0, 2);

    let cfg = config(0.5, 1.2);
    let a = fit_ocsvm(&to_features(&points), &cfg).unwrap();
    let b = fit_ocsvm(&to_features(&shuffled), &cfg).unwrap();
    for _ in 0..20 {
        let probe: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let fv = FeatureVector::from_values(probe);
        let fa = a.decision(&fv).unwrap();
        let fb = b.decision(&fv).unwrap();
        assert!((fa - fb).abs() < 1e-6, "decisions diverge: {fa} vs {fb}");
    }
}

#[test]
fn nu_property_on_random_training_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let n = 20usize;
    for nu in [0.3, 0.5, 0.8] {
        for _ in 0..10 {
            let points: Vec<FeatureVector> = (0..n)
                .map(|_| {
                    FeatureVector::from_values(
                        (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    )
                })
                .collect();
            let cfg = config(nu, 1.0);
            let model = fit_ocsvm(&points, &cfg).unwrap();
            let outliers = points
                .iter()
                .filter(|p| model.decision(p).unwrap() < -cfg.tol)
                .count();
            let support = model.alphas.len();
            assert!(
                outliers as f64 <= nu * n as f64 + 1.0,
                "nu={nu}: {outliers} training outliers"
            );
            assert!(
                support as f64 >= nu * n as f64 - 1.0,
                "nu={nu}: only {support} support vectors"
            );
        }
    }
}
