//! End-to-end causal discovery on synthetic and recorded scenes.

mod support;

use std::collections::BTreeSet;

use causaldrive::causal::{discover, top_motive, Manoeuvre, PairResult, SceneAnalysis};
use causaldrive::config::AnalysisConfig;
use causaldrive::data::{
    extract_convoy_scenes, is_convoy, load_recording, read_scene, synth_scene, write_scene, AgentPair, ConvoyConfig,
    DataError, ScenarioSpec, SceneModel, Template,
};
use proptest::prelude::*;

fn scene(t: Template, seed: u64) -> SceneModel {
    synth_scene(&ScenarioSpec::new(t), seed).unwrap()
}

#[test]
fn lead_brake_causes_follower_to_slow() {
    let cfg = AnalysisConfig::default();
    let s = scene(Template::ConvoyBrake, 1);
    let d = discover(&s, &cfg);
    let g = d.graph(0.0);
    assert_eq!(g.agent_adjacency(), BTreeSet::from([AgentPair::new("c0", "c1")]));
    let link = &g.edges[0];
    assert_eq!((link.cause.agent.as_str(), link.effect.agent.as_str()), ("c0", "c1"));
    assert_eq!(link.cause_manoeuvre, Manoeuvre::SlowDown);
    assert_eq!(link.effect_manoeuvre, Manoeuvre::SlowDown);
    // Without the brake the follower would keep a higher speed.
    assert!(link.counterfactual_plan.speed.target > link.factual_plan.speed.target);
    let text = &d.explanations(&g)[0];
    assert!(
        text.starts_with("c0 slowing down caused c1 to slow down, as c1 wishes to prioritise "),
        "{text}"
    );
}

#[test]
fn independent_vehicles_are_never_linked() {
    let cfg = AnalysisConfig::default();
    for seed in 0..3 {
        let d = discover(&scene(Template::Independent, seed), &cfg);
        assert!(d.graph(0.0).edges.is_empty());
        assert!(
            d.tests.iter().all(|t| t.result.distance() == Some(0.0)),
            "{:?}",
            d.tests
        );
    }
}

#[test]
fn follower_profile_values_collision_avoidance() {
    let cfg = AnalysisConfig::default();
    for seed in 0..4 {
        let s = scene(Template::ConvoyBrake, seed);
        let analysis = SceneAnalysis::new(&s, &cfg);
        let effect = analysis.actions()["c1"][1].clone();
        let p = analysis.learn_effect_profile(&effect).unwrap().fit.profile;
        let w = p.weights();
        let strongest_positive = (1..5).max_by(|&a, &b| w[a].total_cmp(&w[b])).unwrap();
        assert_eq!(strongest_positive, 4, "{w:?}");
        assert!(w[4] > 0.0);
        assert!(!top_motive(&p).is_empty());
    }
}

#[test]
fn only_cross_agent_pairs_in_temporal_order_are_tested() {
    let cfg = AnalysisConfig::default();
    let d = discover(&scene(Template::Merge, 4), &cfg);
    for t in &d.tests {
        assert_ne!(t.cause.agent, t.effect.agent);
        assert!(t.cause.t_a < t.effect.t_a);
    }
    let mut expected = 0;
    for c in &d.actions {
        for e in &d.actions {
            if c.agent != e.agent && c.t_a < e.t_a {
                expected += 1;
            }
        }
    }
    assert_eq!(d.tests.len(), expected);
}

#[test]
fn first_actions_never_cause_anything() {
    let cfg = AnalysisConfig::default();
    let d = discover(&scene(Template::Overtake, 2), &cfg);
    for t in d.tests.iter().filter(|t| t.cause.t_a == 0.0) {
        assert_eq!(t.result, PairResult::Unchanged);
    }
}

#[test]
fn discovery_is_deterministic() {
    let cfg = AnalysisConfig::default();
    let s = scene(Template::Merge, 6);
    let a = serde_json::to_string(&discover(&s, &cfg)).unwrap();
    let b = serde_json::to_string(&discover(&s, &cfg)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn highd_fixture_yields_a_convoy_scene() {
    let dir = tempfile::tempdir().unwrap();
    support::write_highd_fixture(dir.path(), "01_");
    let rec = load_recording(
        &dir.path().join("01_tracks.csv"),
        &dir.path().join("01_recordingMeta.csv"),
        None,
    )
    .unwrap();
    assert_eq!(rec.tracks.len(), 2);
    assert_eq!(rec.frame_rate, 25.0);
    for t in &rec.tracks {
        assert!(t.frames.iter().all(|f| (0.0..=70.0).contains(&f.velocity.norm())));
        assert!(t.frames.iter().all(|f| f.lane == t.frames[0].lane));
    }
    let cfg = ConvoyConfig::default();
    let scenes = extract_convoy_scenes(&rec, &cfg);
    assert_eq!(scenes.len(), 1);
    assert!(is_convoy(&scenes[0], &cfg));
    assert_eq!(scenes[0].agents(), vec!["c0", "c1"]);

    let d = discover(&scenes[0], &AnalysisConfig::default());
    assert!(d.extraction_failures.is_empty());
    assert!(
        d.tests.iter().all(|t| !matches!(t.result, PairResult::Failed { .. })),
        "{:?}",
        d.tests
    );
}

#[test]
fn malformed_highd_rows_report_their_line() {
    let dir = tempfile::tempdir().unwrap();
    support::write_highd_fixture(dir.path(), "");
    let path = dir.path().join("tracks.csv");
    let mut text = std::fs::read_to_string(&path).unwrap();
    text = text.replacen(",30.0000,0,", ",95.0000,0,", 1);
    std::fs::write(&path, text).unwrap();
    let err = load_recording(&path, &dir.path().join("recordingMeta.csv"), None).unwrap_err();
    assert!(matches!(err, DataError::MalformedRecord { line: 2, .. }), "{err}");
}

fn scene_strategy() -> impl Strategy<Value = SceneModel> {
    (
        prop::sample::select(Template::ALL.to_vec()),
        0u64..1000,
        0usize..3,
        2.0f64..6.0,
    )
        .prop_map(|(t, seed, n, dur)| {
            let spec = ScenarioSpec {
                independents: n,
                duration: dur,
                ..ScenarioSpec::new(t)
            };
            synth_scene(&spec, seed).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn scenes_round_trip_through_files(s in scene_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scene.json");
        write_scene(&path, &s).unwrap();
        prop_assert_eq!(read_scene(&path).unwrap(), s);
    }
}
