use super::*;
use crate::rng::rng;

fn profiles_uniform(n: usize, k: usize, seed: u64) -> Vec<UnitProfile> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| UnitProfile::stratum_only(r.gen_range(1..=k)))
        .collect()
}

fn spec(name: &str, pi: f64) -> SchemeSpec {
    spec_from_name(name, pi, &SchemeParams::default()).unwrap()
}

#[test]
fn block_forces_completion() {
    // pi = 1/2, block size 6: after three treated in the first three slots
    // the remaining slots are control with probability one.
    let scheme = StratifiedBlock::new(0.5, 6);
    let mut state = AssignmentState::new();
    let profile = UnitProfile::stratum_only(1);
    for _ in 0..3 {
        state.record(&profile, 1);
        scheme.post_update(&mut state, &profile, 1);
    }
    assert_eq!(scheme.treat_prob(&state, &profile), 0.0);

    // Mirror image: three controls force the rest to treatment.
    let mut state = AssignmentState::new();
    for _ in 0..3 {
        state.record(&profile, 0);
        scheme.post_update(&mut state, &profile, 0);
    }
    assert_eq!(scheme.treat_prob(&state, &profile), 1.0);
}

#[test]
fn simple_marginal_probability_chi_square() {
    // Two-cell chi-square against Bin(n, pi) at alpha = 0.001.
    let s = spec("simple", 0.5);
    let profiles = vec![UnitProfile::stratum_only(1); 10_000];
    let a = assign_all(&s, &profiles, 99).unwrap();
    let treated = a.iter().filter(|&&x| x == 1).count() as f64;
    let n = 10_000.0;
    let chi2 = (treated - n * 0.5).powi(2) / (n * 0.5 * 0.5);
    assert!(chi2 < 10.828, "chi-square {chi2} too large");
}

#[test]
fn efron_probabilities_match_rule() {
    let scheme = StratifiedEfron::new(0.5, 0.5);
    let profile = UnitProfile::stratum_only(1);
    let mut state = AssignmentState::new();
    assert_eq!(scheme.treat_prob(&state, &profile), 0.5);

    // Over-assigned stratum: probability drops to 0.25.
    state.record(&profile, 1);
    assert_eq!(scheme.treat_prob(&state, &profile), 0.25);

    // Under-assigned: rises to 0.75.
    state.record(&profile, 0);
    state.record(&profile, 0);
    assert_eq!(scheme.treat_prob(&state, &profile), 0.75);

    // Unequal target: exact balance uses pi itself.
    let scheme = StratifiedEfron::new(2.0 / 3.0, 0.5);
    let mut state = AssignmentState::new();
    state.record(&profile, 1);
    state.record(&profile, 1);
    state.record(&profile, 0);
    assert_eq!(scheme.treat_prob(&state, &profile), 2.0 / 3.0);
}

#[test]
fn assign_all_is_deterministic() {
    for name in scheme_names() {
        let s = spec(name, 0.5);
        let profiles: Vec<UnitProfile> = profiles_uniform(200, 3, 5)
            .into_iter()
            .map(|mut p| {
                p.margins = vec![p.stratum, 1 + p.stratum % 2];
                p
            })
            .collect();
        let a1 = assign_all(&s, &profiles, 1234).unwrap();
        let a2 = assign_all(&s, &profiles, 1234).unwrap();
        assert_eq!(a1, a2, "{name} not deterministic");
    }
}

#[test]
fn block_full_blocks_are_exact() {
    // n = 1000 with pi = 2/3 and block size 6: check a single stratum whose
    // size is divisible by the block size gets exactly round(pi n_k) treated.
    let s = spec("block", 2.0 / 3.0);
    let profiles = vec![UnitProfile::stratum_only(1); 996];
    let a = assign_all(&s, &profiles, 7).unwrap();
    let treated: usize = a.iter().map(|&x| x as usize).sum();
    assert_eq!(treated, 996 * 2 / 3);

    // Every completed block holds exactly four treated.
    for chunk in a.chunks(6) {
        assert_eq!(chunk.iter().map(|&x| x as usize).sum::<usize>(), 4);
    }

    // Multi-stratum run: within-stratum imbalance is exactly zero whenever
    // the stratum count is divisible by the block size.
    let s = spec("block", 0.5);
    let mut profiles = Vec::new();
    for _ in 0..120 {
        profiles.push(UnitProfile::stratum_only(1));
        profiles.push(UnitProfile::stratum_only(2));
    }
    let a = assign_all(&s, &profiles, 11).unwrap();
    for stratum in 1..=2 {
        let treated: i64 = profiles
            .iter()
            .zip(&a)
            .filter(|(p, _)| p.stratum == stratum)
            .map(|(_, &x)| i64::from(x))
            .sum();
        assert_eq!(treated, 60);
    }
}

#[test]
fn minimization_prefers_balancing_arm() {
    let scheme = PocockSimon::new(0.5, 0.75, vec![0.5, 0.5]);
    let mut state = AssignmentState::new();
    let profile = UnitProfile { stratum: 1, margins: vec![1, 1] };
    // Seed the margins with treated-heavy history.
    for _ in 0..3 {
        state.record(&profile, 1);
    }
    state.record(&profile, 0);
    assert_eq!(scheme.treat_prob(&state, &profile), 0.25);

    // Fresh margins tie; falls back to the target proportion.
    let other = UnitProfile { stratum: 2, margins: vec![2, 2] };
    assert_eq!(scheme.treat_prob(&state, &other), 0.5);
}

#[test]
fn minimization_requires_margins() {
    let s = spec("minimization", 0.5);
    let profiles = vec![UnitProfile::stratum_only(1)];
    assert!(matches!(
        assign_all(&s, &profiles, 1),
        Err(Error::ProfileMismatch(_))
    ));
}

#[test]
fn huhu_prefers_balancing_arm() {
    let scheme = HuHu::new(0.5, 0.75, 1.0 / 3.0, 1.0 / 3.0, vec![1.0 / 6.0, 1.0 / 6.0]);
    let mut state = AssignmentState::new();
    let profile = UnitProfile { stratum: 1, margins: vec![1, 1] };
    assert_eq!(scheme.treat_prob(&state, &profile), 0.5);
    state.record(&profile, 1);
    assert_eq!(scheme.treat_prob(&state, &profile), 0.25);
    state.record(&profile, 0);
    state.record(&profile, 0);
    assert_eq!(scheme.treat_prob(&state, &profile), 0.75);
}

#[test]
fn theory_q_values() {
    assert_eq!(spec("simple", 0.5).q_known, Some(0.25));
    assert_eq!(spec("block", 0.5).q_known, Some(0.0));
    assert_eq!(spec("efron", 0.5).q_known, Some(0.0));
    assert_eq!(spec("huhu", 0.5).q_known, Some(0.0));
    assert_eq!(spec("urn", 0.5).q_known, None);
    assert_eq!(spec("minimization", 0.5).q_known, None);
}

#[test]
fn block_size_must_divide_target() {
    assert!(spec_from_name(
        "block",
        2.0 / 3.0,
        &SchemeParams { block_size: Some(5), ..Default::default() }
    )
    .is_err());
}

fn uniform_atoms(k: usize) -> Vec<(f64, UnitProfile)> {
    (1..=k)
        .map(|s| (1.0 / k as f64, UnitProfile::stratum_only(s)))
        .collect()
}

#[test]
fn estimate_q_simple_recovers_bernoulli_variance() {
    let s = spec("simple", 0.5);
    let q = estimate_q(&s, &uniform_atoms(2), 2000, 5000, 21).unwrap();
    for e in &q {
        assert!(
            (e.q_hat - 0.25).abs() < 0.02,
            "stratum {} q_hat {}",
            e.stratum,
            e.q_hat
        );
    }
}

#[test]
fn estimate_q_block_is_strongly_balanced() {
    let s = spec("block", 0.5);
    let q = estimate_q(&s, &uniform_atoms(2), 2000, 2000, 22).unwrap();
    for e in &q {
        assert!(e.q_hat >= 0.0 && e.q_hat <= 0.01, "q_hat {}", e.q_hat);
    }
}

#[test]
fn estimate_q_urn_lies_strictly_between() {
    let s = spec("urn", 0.5);
    let q = estimate_q(&s, &uniform_atoms(2), 2000, 2000, 23).unwrap();
    for e in &q {
        assert!(
            e.q_hat > 0.02 && e.q_hat < 0.23,
            "urn q_hat {} not strictly inside (0, 0.25)",
            e.q_hat
        );
    }
}

#[test]
fn estimate_q_needs_enough_reps() {
    let s = spec("simple", 0.5);
    assert!(estimate_q(&s, &uniform_atoms(1), 100, 50, 1).is_err());
}

#[test]
fn imbalance_grows_sublinearly() {
    // mean |D| over replications grows slower than n for every scheme.
    let reps = 200usize;
    for name in scheme_names() {
        let s = spec(name, 0.5);
        let mean_abs_d = |n: usize| -> f64 {
            let mut total = 0.0;
            for rep in 0..reps {
                let mut r = rng(40_000 + rep as u64);
                let profiles: Vec<UnitProfile> = (0..n)
                    .map(|_| {
                        let stratum = r.gen_range(1..=2usize);
                        UnitProfile { stratum, margins: vec![stratum, r.gen_range(1..=2)] }
                    })
                    .collect();
                let a = assign_all(&s, &profiles, 90_000 + rep as u64).unwrap();
                let d: f64 = profiles
                    .iter()
                    .zip(&a)
                    .filter(|(p, _)| p.stratum == 1)
                    .map(|(_, &x)| f64::from(x) - 0.5)
                    .sum();
                total += d.abs();
            }
            total / reps as f64
        };
        let small = mean_abs_d(200);
        let large = mean_abs_d(2000);
        assert!(
            large < 5.0 * small.max(1.0),
            "{name}: mean|D| grew from {small} to {large} over a 10x n increase"
        );
    }
}

#[test]
fn q_override_is_validated() {
    let s = spec("urn", 0.5);
    assert!(s.clone().with_q(0.1).is_ok());
    assert!(s.clone().with_q(0.3).is_err());
    assert_eq!(s.with_q(0.1).unwrap().q_per_stratum(3), Some(vec![0.1; 3]));
}
