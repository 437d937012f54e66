use proptest::prelude::*;
use tendonsim_core::datagen::{Episode, SampleRecord, Split};
use tendonsim_core::trajectory::TrajectoryFamily;
use tendonsim_estimators::window::{WindowPool, STD_FLOOR};
use tendonsim_estimators::{window_from_log, Normalizer, CHANNELS, HISTORY, STRIDE};

fn record(i: usize, theta_d: f64, theta: f64, theta_dot: f64, force: f64) -> SampleRecord {
    SampleRecord {
        t: i as f64 / 80.0,
        theta_d,
        theta,
        theta_dot,
        force,
        q: [0.0; 2],
        tip: [0.0; 2],
    }
}

fn ramp(n: usize) -> Vec<SampleRecord> {
    (0..n).map(|i| record(i, i as f64, -(i as f64), 0.5 * i as f64, 1.0)).collect()
}

#[test]
fn constant_episode_gives_identical_rows() {
    let recs: Vec<_> = (0..400).map(|i| record(i, 1.0, 1.0, 0.0, 2.0)).collect();
    let w = window_from_log(&recs, 250, HISTORY, STRIDE);
    assert_eq!(w.rows(), HISTORY);
    for r in 0..HISTORY {
        assert_eq!(w.row(r), &[1.0, 1.0, 0.0]);
    }
}

#[test]
fn advancing_four_records_shifts_one_row() {
    let recs = ramp(400);
    let a = window_from_log(&recs, 200, HISTORY, STRIDE);
    let b = window_from_log(&recs, 204, HISTORY, STRIDE);
    for r in 0..HISTORY - 1 {
        assert_eq!(a.row(r + 1), b.row(r));
    }
    assert_eq!(b.row(HISTORY - 1), &[204.0, -204.0, 102.0]);
}

#[test]
fn window_spans_1_45_seconds() {
    let recs = ramp(400);
    let end = 300;
    let w = window_from_log(&recs, end, HISTORY, STRIDE);
    let first = w.row(0)[0] as usize;
    let span = recs[end].t - recs[first].t;
    assert!((span - 29.0 / 20.0).abs() < 1e-12, "{span}");
}

#[test]
fn early_windows_repeat_the_first_record() {
    let recs = ramp(400);
    let w = window_from_log(&recs, 10, HISTORY, STRIDE);
    // Rows reach back 116 records; everything before index 0 is record 0.
    let expected: Vec<f64> = (0..HISTORY)
        .map(|r| (10i64 - 4 * (HISTORY as i64 - 1 - r as i64)).max(0) as f64)
        .collect();
    let got: Vec<f64> = (0..HISTORY).map(|r| w.row(r)[0]).collect();
    assert_eq!(got, expected);
    assert_eq!(w.row(0), w.row(20));
}

#[test]
fn normalizer_statistics_and_floor() {
    let ep = Episode {
        system_id: "s".into(),
        seed: 0,
        family: TrajectoryFamily::Ramp,
        blocked: false,
        split: Split::Train,
        records: (0..4).map(|i| record(i, i as f64, 3.0, 0.0, 2.0 * i as f64)).collect(),
    };
    let n = Normalizer::fit([&ep]).unwrap();
    assert_eq!(n.input_mean, [1.5, 3.0, 0.0]);
    assert!((n.input_std[0] - 1.25f64.sqrt()).abs() < 1e-15);
    // Zero-variance channels fall back to unit scale.
    assert_eq!(n.input_std[1], 1.0);
    assert_eq!(n.input_std[2], 1.0);
    assert_eq!(n.output_mean, 3.0);
    assert!((n.output_std - 5.0f64.sqrt()).abs() < 1e-15);
    assert!(n.is_valid());
    assert!(STD_FLOOR <= 1e-6);
}

#[test]
fn pool_materializes_the_same_windows() {
    let ep = Episode {
        system_id: "s".into(),
        seed: 0,
        family: TrajectoryFamily::Ramp,
        blocked: false,
        split: Split::Train,
        records: ramp(200),
    };
    let pool = WindowPool::new(vec![&ep], HISTORY, 3);
    assert_eq!(pool.len(), 67);
    let norm = Normalizer::identity();
    let mut buf: Vec<f64> = Vec::new();
    for &w in &pool.refs {
        pool.normalized(w, &norm, &mut buf);
        assert_eq!(buf, pool.window(w).values);
    }
}

proptest! {
    #[test]
    fn windows_have_full_shape_and_end_at_index(n in 1usize..300, frac in 0.0f64..1.0) {
        let recs = ramp(n);
        let t = ((n - 1) as f64 * frac) as usize;
        let w = window_from_log(&recs, t, HISTORY, STRIDE);
        prop_assert_eq!(w.values.len(), HISTORY * CHANNELS);
        prop_assert_eq!(w.row(HISTORY - 1)[0], t as f64);
        prop_assert!(w.is_finite());
        // Rows are non-decreasing in time.
        for r in 1..HISTORY {
            prop_assert!(w.row(r)[0] >= w.row(r - 1)[0]);
        }
    }
}
