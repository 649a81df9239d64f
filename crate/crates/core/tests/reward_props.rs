//! Reward features, outcome and action distances, and profile regression.

mod support;

use causaldrive::agent::Action;
use causaldrive::causal::{action_distance, ActionDistanceConfig};
use causaldrive::linalg::Matrix;
use causaldrive::reward::{
    learn_profile, outcome_distance, reward, reward_features, solve_profile, Outcome, OutcomeDistanceConfig,
    RewardConfig, RewardProfile,
};
use proptest::prelude::*;
use support::*;

fn outcome() -> impl Strategy<Value = Outcome> {
    (
        0i32..3,
        0.0f64..45.0,
        proptest::option::of(0.0f64..200.0),
        0.0f64..5000.0,
        any::<bool>(),
    )
        .prop_map(|(lt, fs, dh, ef, ad)| Outcome { lt, fs, dh, ef, ad })
}

fn action() -> impl Strategy<Value = Action> {
    (0.0f64..45.0, 0.0f64..10.0, 0usize..4, 0.0f64..10.0).prop_map(|(v, ts, l, tl)| Action::new(v, ts, l, tl))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn outcome_distance_is_a_symmetric_nonnegative_dissimilarity(a in outcome(), b in outcome()) {
        let cfg = OutcomeDistanceConfig::default();
        let (ab, ba) = (outcome_distance(&a, &b, &cfg), outcome_distance(&b, &a, &cfg));
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
        prop_assert_eq!(outcome_distance(&a, &a, &cfg), 0.0);
    }

    #[test]
    fn action_distance_is_a_symmetric_nonnegative_dissimilarity(a in action(), b in action()) {
        let cfg = ActionDistanceConfig::default();
        let (ab, ba) = (action_distance(&a, &b, &cfg), action_distance(&b, &a, &cfg));
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - ba).abs() <= 1e-12 * ab.max(1.0));
        prop_assert_eq!(action_distance(&a, &a, &cfg), 0.0);
    }

    #[test]
    fn reward_features_stay_in_range(o in outcome()) {
        let r = reward_features(&o, &RewardConfig::default());
        prop_assert!(r[0] > 0.0 && r[0] < 1.0);
        prop_assert!((0.0..=1.0).contains(&r[1]));
        prop_assert!(r[2] > 0.0);
        prop_assert!(r[3] > 0.0 && r[3] <= 1.0);
        prop_assert!(r[4] == 0.0 || r[4] == 1.0);
        prop_assert_eq!(r[5], 1.0);
    }

    #[test]
    fn reward_features_are_monotone(o in outcome(), dv in 0.01f64..10.0, dd in 0.01f64..50.0) {
        let cfg = RewardConfig::default();
        let r = reward_features(&o, &cfg);
        let faster = reward_features(&Outcome { fs: o.fs + dv, ..o }, &cfg);
        prop_assert!(faster[2] > r[2]);
        prop_assert!(faster[3] < r[3]);
        if o.fs > 0.0 {
            if let Some(dh) = o.dh {
                let further = reward_features(&Outcome { dh: Some(dh + dd), ..o }, &cfg);
                prop_assert!(further[1] >= r[1]);
            }
        }
    }

    #[test]
    fn argmax_is_invariant_to_positive_scaling(seed in any::<u64>(), c in 0.01f64..100.0, pick in 0usize..5) {
        let cfg = RewardConfig::default();
        let mut rng = rng(seed);
        let outcomes = planner_candidates(&mut rng);
        let p = RewardProfile(TRUE_PROFILES[pick]);
        let scores: Vec<f64> = outcomes.iter().map(|o| reward(o, &p, &cfg)).collect();
        let scaled: Vec<f64> = outcomes.iter().map(|o| reward(o, &p.scaled(c), &cfg)).collect();
        let best = argmax(&outcomes, &p, &cfg);
        let best_scaled = argmax(&outcomes, &p.scaled(c), &cfg);
        // Equal up to rounding ties.
        prop_assert!(best == best_scaled || (scores[best] - scores[best_scaled]).abs() <= 1e-12 * scores[best].abs().max(1.0));
        prop_assert!(scaled.iter().zip(&scores).all(|(s, r)| (s - c * r).abs() <= 1e-9 * (c * r).abs().max(1.0)));
    }
}

#[test]
fn feature_anchors() {
    let cfg = RewardConfig::default();
    let o = Outcome {
        lt: 0,
        fs: 31.3,
        dh: None,
        ef: 0.0,
        ad: true,
    };
    let r = reward_features(&o, &cfg);
    assert_eq!(r[0], 0.5);
    assert_eq!(r[2], 1.0);
    assert_eq!(r[3], (-0.05f64 * 31.3).exp());
    let lt1 = reward_features(&Outcome { lt: 1, ..o }, &cfg);
    assert!((lt1[0] - 1.0 / (1.0 + std::f64::consts::E)).abs() < 1e-15);
    let boundary = reward_features(&Outcome { dh: Some(62.6), ..o }, &cfg);
    assert_eq!(boundary[1], 1.0);
    let p = RewardProfile([1.0; 6]);
    assert!((reward(&o, &p, &cfg) - (4.5 + (-1.565f64).exp())).abs() < 1e-12);
}

#[test]
fn distance_anchors() {
    let o = Outcome {
        lt: 0,
        fs: 20.0,
        dh: Some(30.0),
        ef: 100.0,
        ad: true,
    };
    let d = outcome_distance(&o, &Outcome { lt: 1, ..o }, &OutcomeDistanceConfig::default());
    assert!((d - 1.0).abs() < 1e-12);
    let a = Action::new(25.0, 4.0, 0, 4.0);
    let d = action_distance(&a, &Action::new(25.0, 4.0, 1, 4.0), &ActionDistanceConfig::default());
    assert!((d - 0.1 * 10f64.sqrt()).abs() < 1e-12);
    assert!((d - 0.31623).abs() < 1e-5);
}

#[test]
fn qr_matches_normal_equations_on_random_systems() {
    let mut rng = rng(2);
    for _ in 0..100 {
        let a = random_matrix(&mut rng, 20, 6);
        let b: Vec<f64> = (0..20).map(|i| ((i * 7 % 11) as f64 - 5.0) / 3.0).collect();
        let fit = solve_profile(&a, b.clone());
        assert!(!fit.rank_deficient);
        let oracle = normal_equations(&a, &b);
        assert!((fit.residual - residual(&a, &oracle, &b)).abs() < 1e-8);
    }
}

#[test]
fn exact_systems_recover_the_generating_profile() {
    use rand::Rng;
    let mut rng = rng(3);
    for _ in 0..100 {
        let a = random_matrix(&mut rng, 20, 6);
        let p: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
        let fit = solve_profile(&a, a.mul_vec(&p));
        for (got, want) in fit.profile.0.iter().zip(&p) {
            assert!((got - want).abs() < 1e-8, "{got} {want}");
        }
    }
}

#[test]
fn single_hypothetical_is_rank_deficient() {
    let o = Outcome {
        lt: 0,
        fs: 25.0,
        dh: Some(40.0),
        ef: 250.0,
        ad: true,
    };
    let fit = learn_profile(&o, &[o], &RewardConfig::default(), &OutcomeDistanceConfig::default()).unwrap();
    assert!(fit.rank_deficient);
    assert_eq!(fit.targets, vec![1.0]);
    assert!((reward(&o, &fit.profile, &RewardConfig::default()) - 1.0).abs() < 1e-12);
}

#[test]
fn rank_deficient_systems_still_minimise_the_residual() {
    // Duplicated columns: any split of the weight between them is optimal.
    let mut rng = rng(4);
    let base = random_matrix(&mut rng, 12, 5);
    let rows: Vec<Vec<f64>> = (0..12)
        .map(|r| {
            let mut row: Vec<f64> = (0..5).map(|c| base.get(r, c)).collect();
            row.push(base.get(r, 0));
            row
        })
        .collect();
    let a = Matrix::from_rows(&rows);
    let b: Vec<f64> = (0..12).map(|i| (i as f64).sin()).collect();
    let fit = solve_profile(&a, b.clone());
    assert!(fit.rank_deficient);
    assert_eq!(fit.rank, 5);
    let oracle = normal_equations(&base, &b);
    assert!((fit.residual - residual(&base, &oracle, &b)).abs() < 1e-8);
}

#[test]
fn learned_profile_reproduces_the_observed_choice() {
    let cfg_r = RewardConfig::default();
    let cfg_d = OutcomeDistanceConfig::default();
    for p in TRUE_PROFILES {
        let p = RewardProfile(p);
        let mut rng = rng(99);
        let agree = (0..200)
            .filter(|_| {
                let c = planner_candidates(&mut rng);
                let chosen = argmax(&c, &p, &cfg_r);
                let fit = learn_profile(&c[chosen], &c, &cfg_r, &cfg_d).unwrap();
                argmax(&c, &fit.profile, &cfg_r) == chosen
            })
            .count();
        // Long-run agreement is 85% to 97% depending on the profile.
        assert!(agree >= 160, "{:?}: {agree}/200", p.0);
    }
}
