use std::collections::BTreeMap;

use proptest::prelude::*;

use mtraj_core::dataio::{
    load_dataset, load_scene, read_report, read_tracks, save_scene, write_report, write_tracks, SceneMeta,
    TrackRecord,
};
use mtraj_core::fixtures::{self, FixtureSpec, Fixtures};
use mtraj_core::harness::{run_suite, ConstantVelocitySut};
use mtraj_core::metrics::LabelCriterion;
use mtraj_core::report::{threshold_sweep, DEFAULT_SWEEP_THRESHOLDS};
use mtraj_core::stats::is_violation;
use mtraj_core::transforms::MetamorphicRelation;
use mtraj_core::types::{RunConfig, Scene, Setting};

fn small_report() -> mtraj_core::SuiteReport {
    let cases = fixtures::generate(&FixtureSpec { cases: 12, seed: 3, setting: Setting::Short })
        .unwrap()
        .test_cases(Setting::Short)
        .unwrap();
    let mrs = [MetamorphicRelation::MirrorV, MetamorphicRelation::rescale(0.3).unwrap()];
    run_suite(&ConstantVelocitySut::default(), &cases, &mrs, &RunConfig { seed: 11, ..RunConfig::default() }, 2)
        .unwrap()
}

#[test]
fn report_round_trips_exactly() {
    let report = small_report();
    let dir = tempfile::tempdir().unwrap();
    write_report(&report, dir.path()).unwrap();
    assert_eq!(read_report(dir.path()).unwrap(), report);
}

#[test]
fn summary_carries_the_rate_table() {
    let dir = tempfile::tempdir().unwrap();
    write_report(&small_report(), dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("summary.json")).unwrap();
    for col in ["WVC", "BoN-ADE", "BoN-FDE", "Mean-ADE", "Mean-FDE", "mirror-v", "rescale:0.3"] {
        assert!(text.contains(col), "summary lacks {col}");
    }
    let lines = std::fs::read_to_string(dir.path().join("comparisons.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 12 * 2 * 8);
}

#[test]
fn stored_decisions_match_recomputed_ones() {
    let report = small_report();
    for case in &report.cases {
        for c in &case.comparisons {
            assert_eq!(c.violation, is_violation(c.p_value, report.config.p_threshold));
        }
        assert_eq!(case.violation_counter, case.comparisons.iter().filter(|c| c.violation).count());
    }
}

#[test]
fn sweep_is_order_free_and_recall_monotone() {
    let report = small_report();
    let rows = threshold_sweep(&report, LabelCriterion::MeanFde, &DEFAULT_SWEEP_THRESHOLDS).unwrap();
    assert_eq!(rows.len(), 6);
    assert!(rows.windows(2).all(|w| w[1].scores.recall >= w[0].scores.recall));
    let mut reversed = report.clone();
    reversed.cases.reverse();
    for c in &mut reversed.cases {
        c.comparisons.reverse();
    }
    assert_eq!(threshold_sweep(&reversed, LabelCriterion::MeanFde, &DEFAULT_SWEEP_THRESHOLDS).unwrap(), rows);
    let all = threshold_sweep(&report, LabelCriterion::MeanFde, &[1.0]).unwrap();
    assert_eq!(all[0].scores.recall, 1.0);
}

#[test]
fn written_dataset_loads_back_into_the_same_cases() {
    let fx = fixtures::generate(&FixtureSpec { cases: 9, seed: 8, setting: Setting::Short }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    fx.write(dir.path()).unwrap();
    let loaded = load_dataset(dir.path(), &Fixtures::window_spec(Setting::Short)).unwrap();
    assert_eq!(loaded, fx.test_cases(Setting::Short).unwrap());
}

#[test]
fn fixtures_are_byte_stable() {
    let spec = FixtureSpec { cases: 7, seed: 21, setting: Setting::Short };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    fixtures::generate(&spec).unwrap().write(a.path()).unwrap();
    fixtures::generate(&spec).unwrap().write(b.path()).unwrap();
    let read = |d: &std::path::Path| {
        let mut files = BTreeMap::new();
        for sub in ["", "scenes"] {
            for e in std::fs::read_dir(d.join(sub)).unwrap() {
                let p = e.unwrap().path();
                if p.is_file() {
                    files.insert(p.strip_prefix(d).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
                }
            }
        }
        files
    };
    assert_eq!(read(a.path()), read(b.path()));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn scenes_round_trip(w in 1usize..40, h in 1usize..40, classes in 1u16..=256, seed in any::<u64>()) {
        let cells: Vec<u8> = (0..w * h)
            .map(|i| ((seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) >> 33) % u64::from(classes)) as u8)
            .collect();
        let scene = Scene::new(w, h, cells, classes, 0.3).unwrap();
        let meta = SceneMeta { scene_id: "x".into(), num_classes: classes, class_names: vec!["a".into()], rescale_factor: 0.3 };
        let dir = tempfile::tempdir().unwrap();
        let (grid, side) = (dir.path().join("x.pgm"), dir.path().join("x.json"));
        save_scene(&scene, &meta, &grid, &side).unwrap();
        prop_assert_eq!(load_scene(&grid, &side).unwrap(), scene);
        prop_assert_eq!(mtraj_core::dataio::read_sidecar(&side).unwrap(), meta);
    }

    #[test]
    fn tracks_round_trip(raw in prop::collection::vec((0i64..1000, -1e6f64..1e6, -1e6f64..1e6), 1..30)) {
        let records: Vec<TrackRecord> = raw
            .iter()
            .enumerate()
            .map(|(i, &(frame, x, y))| TrackRecord { scene_id: "s,1".into(), agent_id: format!("a{i}"), frame, x, y })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tracks.csv");
        write_tracks(&path, &records).unwrap();
        prop_assert_eq!(read_tracks(&path).unwrap(), records);
    }
}
