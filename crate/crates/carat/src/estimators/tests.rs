use approx::assert_abs_diff_eq;
use ndarray::Array2;

use super::designs::TREATMENT_COL;
use super::*;
use crate::linalg;
use crate::testutil::random_trial;

fn no_cov(y: Vec<f64>, a: Vec<u8>, b: Vec<usize>, pi: f64) -> TrialData {
    let n = y.len();
    TrialData::new(y, a, b, Array2::zeros((n, 0)), pi)
}

/// Closed form against the treatment coefficient of the defining regression.
fn assert_matches_regression(kind: &EstimatorKind, data: &TrialData) {
    let est = build_estimator(kind);
    let tau = est.estimate(data).unwrap();
    let design = est.design(data).unwrap();
    let fit = linalg::fit(&design, &data.y_array()).unwrap();
    let tol = 1e-10 * tau.abs().max(1.0);
    assert!(
        (tau - fit.coef[TREATMENT_COL]).abs() <= tol,
        "{}: closed form {tau} vs regression {}",
        kind.name(),
        fit.coef[TREATMENT_COL]
    );
}

#[test]
fn diff_simple_cases() {
    let data = no_cov(vec![5.0, 5.0, 3.0, 3.0], vec![1, 1, 0, 0], vec![1, 1, 1, 1], 0.5);
    assert_abs_diff_eq!(tau_diff(&data).unwrap(), 2.0);

    let constant = no_cov(vec![4.0; 6], vec![1, 0, 1, 0, 1, 0], vec![1; 6], 0.5);
    assert_abs_diff_eq!(tau_diff(&constant).unwrap(), 0.0);

    let empty = no_cov(vec![1.0, 2.0], vec![1, 1], vec![1, 1], 0.5);
    assert_eq!(tau_diff(&empty).unwrap_err(), Error::EmptyArm);
}

#[test]
fn adj_single_stratum_equals_diff() {
    let data = random_trial(30, 1, 0, 0.5, 3);
    assert_abs_diff_eq!(
        tau_adj(&data).unwrap(),
        tau_diff(&data).unwrap(),
        epsilon = 1e-12
    );
}

#[test]
fn adj_equal_allocation_reduces_to_share_weights() {
    // Two strata with identical realized proportions: omega = p_nk, so
    // tau_adj equals tau_interact exactly.
    let data = no_cov(
        vec![1.0, 2.0, 3.0, 4.0, 10.0, 12.0, 14.0, 16.0],
        vec![1, 1, 0, 0, 1, 1, 0, 0],
        vec![1, 1, 1, 1, 2, 2, 2, 2],
        0.5,
    );
    assert_abs_diff_eq!(
        tau_adj(&data).unwrap(),
        tau_interact(&data).unwrap(),
        epsilon = 1e-12
    );
}

#[test]
fn adj_zero_weight_for_empty_arm_stratum() {
    // Stratum 2 has no controls: weight 0, estimate driven by stratum 1.
    let data = no_cov(
        vec![3.0, 1.0, 9.0, 9.0],
        vec![1, 0, 1, 1],
        vec![1, 1, 2, 2],
        0.5,
    );
    assert_abs_diff_eq!(tau_adj(&data).unwrap(), 2.0, epsilon = 1e-12);

    let all_empty = no_cov(vec![1.0, 2.0, 3.0, 4.0], vec![1, 1, 0, 0], vec![1, 1, 2, 2], 0.5);
    assert_eq!(tau_adj(&all_empty).unwrap_err(), Error::AllWeightsZero);
}

#[test]
fn interact_constant_stratum_effects() {
    // Every stratum has difference c = 2.
    let data = no_cov(
        vec![3.0, 1.0, 5.0, 3.0, 8.0, 6.0],
        vec![1, 0, 1, 0, 1, 0],
        vec![1, 1, 2, 2, 2, 2],
        0.5,
    );
    assert_abs_diff_eq!(tau_interact(&data).unwrap(), 2.0, epsilon = 1e-12);

    let missing_arm = no_cov(vec![1.0, 2.0, 3.0, 4.0], vec![1, 0, 1, 1], vec![1, 1, 2, 2], 0.5);
    assert_eq!(
        tau_interact(&missing_arm).unwrap_err(),
        Error::EmptyArmInStratum { stratum: 2 }
    );
}

#[test]
fn star_balanced_uncorrelated_covariate_equals_diff() {
    // X identical across arms and uncorrelated with Y: gamma adjustment
    // vanishes and the denominator cross term cancels.
    let x = Array2::from_shape_vec(
        (6, 1),
        vec![-1.0, 0.0, 1.0, -1.0, 0.0, 1.0],
    )
    .unwrap();
    let data = TrialData::new(
        vec![4.0, 4.0, 4.0, 1.0, 1.0, 1.0],
        vec![1, 1, 1, 0, 0, 0],
        vec![1; 6],
        x,
        0.5,
    );
    assert_abs_diff_eq!(
        tau_star(&data).unwrap(),
        tau_diff(&data).unwrap(),
        epsilon = 1e-12
    );
}

#[test]
fn star_requires_covariates() {
    let data = random_trial(20, 2, 0, 0.5, 5);
    assert_eq!(tau_star(&data).unwrap_err(), Error::NoCovariates);
}

#[test]
fn star_perfect_fit_agrees_with_regression() {
    // Y exactly linear in X with identical arm responses.
    let mut data = random_trial(40, 1, 2, 0.5, 11);
    for i in 0..data.n() {
        data.y[i] = 1.0 + 2.0 * data.x[[i, 0]] - 0.5 * data.x[[i, 1]];
    }
    assert_matches_regression(&EstimatorKind::StarDiff, &data);
    assert_abs_diff_eq!(tau_star(&data).unwrap(), 0.0, epsilon = 1e-9);
}

#[test]
fn star_adj_without_covariates_reduces_to_adj() {
    let data = random_trial(36, 3, 0, 0.5, 7);
    let (tau, beta) = tau_star_adj(&data).unwrap();
    assert!(beta.is_empty());
    assert_abs_diff_eq!(tau, tau_adj(&data).unwrap(), epsilon = 1e-12);
}

#[test]
fn star_adj_with_stratum_constant_covariate_removed_matches_adj() {
    // A covariate constant within every stratum must be removed by the
    // caller; the regression route then reduces to the stratum-only fit.
    let mut data = random_trial(40, 2, 1, 0.5, 13);
    for i in 0..data.n() {
        data.x[[i, 0]] = data.b[i] as f64 * 3.0;
    }
    // With the collinear column present the regression is rank deficient.
    let design = designs::design_star_adj(&data);
    assert!(matches!(
        linalg::fit(&design, &data.y_array()),
        Err(Error::RankDeficient { .. })
    ));
    // Removing it leaves the stratum-indicator estimator.
    let removed = TrialData::new(
        data.y.clone(),
        data.a.clone(),
        data.b.clone(),
        Array2::zeros((data.n(), 0)),
        0.5,
    );
    assert_abs_diff_eq!(
        tau_star_adj(&removed).unwrap().0,
        tau_adj(&removed).unwrap(),
        epsilon = 1e-12
    );
}

#[test]
fn star_interact_without_covariates_reduces_to_interact() {
    let data = random_trial(36, 3, 0, 0.5, 17);
    let (tau, b1, b0) = tau_star_interact(&data).unwrap();
    assert!(b1.is_empty() && b0.is_empty());
    assert_abs_diff_eq!(tau, tau_interact(&data).unwrap(), epsilon = 1e-12);
}

#[test]
fn star_interact_zero_slopes_reduce_to_interact() {
    // Y constant within arm-by-stratum cells forces zero fitted slopes.
    let mut data = random_trial(40, 2, 2, 0.5, 19);
    for i in 0..data.n() {
        data.y[i] = (data.b[i] * 10 + data.a[i] as usize * 3) as f64;
    }
    let (tau, b1, b0) = tau_star_interact(&data).unwrap();
    for j in 0..2 {
        assert_abs_diff_eq!(b1[j], 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(b0[j], 0.0, epsilon = 1e-10);
    }
    assert_abs_diff_eq!(tau, tau_interact(&data).unwrap(), epsilon = 1e-10);
}

#[test]
fn closed_forms_match_defining_regressions() {
    let kinds = [
        EstimatorKind::Diff,
        EstimatorKind::Adj,
        EstimatorKind::Interact,
        EstimatorKind::StarDiff,
        EstimatorKind::StarAdj,
        EstimatorKind::StarInteract,
    ];
    for seed in 0..10 {
        let data = random_trial(60, 3, 2, if seed % 2 == 0 { 0.5 } else { 2.0 / 3.0 }, 100 + seed);
        for kind in &kinds {
            assert_matches_regression(kind, &data);
        }
    }
}

#[test]
fn general_estimator_special_cases() {
    let data = random_trial(50, 2, 2, 0.5, 23);

    // Zero adjustment with pooled weighting is the difference in means.
    let zero = vec![0.0, 0.0];
    assert_abs_diff_eq!(
        tau_general(&data, &zero, &zero, Weighting::Pooled).unwrap(),
        tau_diff(&data).unwrap(),
        epsilon = 1e-12
    );

    // Plugging the fitted arm-specific coefficients reproduces the
    // interaction estimator exactly.
    let (tau, b1, b0) = tau_star_interact(&data).unwrap();
    assert_abs_diff_eq!(
        tau_general(&data, &b1, &b0, Weighting::StratumShares).unwrap(),
        tau,
        epsilon = 1e-12
    );
}

#[test]
fn general_common_vector_matches_interact_closed_form() {
    // When the two arms share one adjustment vector, the stratum-share form
    // coincides with the interaction closed form evaluated at that vector.
    let data = random_trial(60, 2, 2, 0.5, 29);
    let (_, b1, b0) = tau_star_interact(&data).unwrap();
    let common: Vec<f64> = b1
        .iter()
        .zip(&b0)
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let via_general =
        tau_general(&data, &common, &common, Weighting::StratumShares).unwrap();

    // Independent evaluation of the stratified display at the common vector.
    let (summaries, _) = summarize(&data, &data.y).unwrap();
    let mut expect = 0.0;
    for s in &summaries {
        let adj1: f64 = (0..2)
            .map(|j| (s.xbar_k1[j] - s.xbar_k[j]) * common[j])
            .sum();
        let adj0: f64 = (0..2)
            .map(|j| (s.xbar_k0[j] - s.xbar_k[j]) * common[j])
            .sum();
        expect += s.p_nk * ((s.rbar_k1 - adj1) - (s.rbar_k0 - adj0));
    }
    assert_abs_diff_eq!(via_general, expect, epsilon = 1e-12);
}

#[test]
fn location_invariance() {
    let data = random_trial(48, 2, 2, 0.5, 31);
    let taus: Vec<f64> = EstimatorKind::all_six()
        .iter()
        .map(|k| build_estimator(k).estimate(&data).unwrap())
        .collect();

    // Shifting every outcome leaves all six unchanged.
    let mut shifted = data.clone();
    for y in &mut shifted.y {
        *y += 17.5;
    }
    for (kind, &tau) in EstimatorKind::all_six().iter().zip(&taus) {
        let t = build_estimator(kind).estimate(&shifted).unwrap();
        assert_abs_diff_eq!(t, tau, epsilon = 1e-9);
    }

    // Shifting only treated outcomes shifts all six by exactly the shift.
    let mut treated_shift = data.clone();
    for i in 0..treated_shift.n() {
        if treated_shift.a[i] == 1 {
            treated_shift.y[i] += 3.25;
        }
    }
    for (kind, &tau) in EstimatorKind::all_six().iter().zip(&taus) {
        let t = build_estimator(kind).estimate(&treated_shift).unwrap();
        assert_abs_diff_eq!(t, tau + 3.25, epsilon = 1e-9);
    }
}

#[test]
fn affine_covariate_invariance() {
    let data = random_trial(60, 2, 2, 2.0 / 3.0, 37);
    let t_star = tau_star(&data).unwrap();
    let t_adj = tau_star_adj(&data).unwrap().0;
    let t_int = tau_star_interact(&data).unwrap().0;

    // X -> X M + 1 v' with invertible M.
    let m = [[2.0, 0.5], [-1.0, 1.5]];
    let v = [3.0, -4.0];
    let mut x2 = Array2::zeros((data.n(), 2));
    for i in 0..data.n() {
        for j in 0..2 {
            x2[[i, j]] = data.x[[i, 0]] * m[0][j] + data.x[[i, 1]] * m[1][j] + v[j];
        }
    }
    let transformed = TrialData::new(data.y.clone(), data.a.clone(), data.b.clone(), x2, data.pi_target);
    assert_abs_diff_eq!(tau_star(&transformed).unwrap(), t_star, epsilon = 1e-8);
    assert_abs_diff_eq!(tau_star_adj(&transformed).unwrap().0, t_adj, epsilon = 1e-8);
    assert_abs_diff_eq!(
        tau_star_interact(&transformed).unwrap().0,
        t_int,
        epsilon = 1e-8
    );
}

#[test]
fn identical_stratum_proportions_make_adj_equal_interact() {
    for seed in 0..5 {
        let data = random_trial(48, 3, 0, 0.5, 200 + seed);
        // Force exactly balanced arms per stratum.
        let mut y = Vec::new();
        let mut a = Vec::new();
        let mut b = Vec::new();
        for s in &summarize(&data, &data.y).unwrap().0 {
            let m = s.n_k1.min(s.n_k0);
            let mut kept1 = 0;
            let mut kept0 = 0;
            for i in 0..data.n() {
                if data.b[i] != s.k {
                    continue;
                }
                if data.a[i] == 1 && kept1 < m {
                    kept1 += 1;
                } else if data.a[i] == 0 && kept0 < m {
                    kept0 += 1;
                } else {
                    continue;
                }
                y.push(data.y[i]);
                a.push(data.a[i]);
                b.push(data.b[i]);
            }
        }
        let n = y.len();
        let balanced = TrialData::new(y, a, b, Array2::zeros((n, 0)), 0.5);
        assert_abs_diff_eq!(
            tau_adj(&balanced).unwrap(),
            tau_interact(&balanced).unwrap(),
            epsilon = 1e-12
        );
    }
}

#[test]
fn registry_names_round_trip() {
    for name in estimator_names() {
        let kind = EstimatorKind::from_name(name).unwrap();
        assert_eq!(kind.name(), name);
        assert_eq!(build_estimator(&kind).name(), name);
    }
    assert!(EstimatorKind::from_name("bogus").is_none());
}
