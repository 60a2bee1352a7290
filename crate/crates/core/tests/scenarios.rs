use metalidar::analysis::{rotation_speed, track_rotation};
use metalidar::harness::{self, feature_of, track_options, Scenario, TableRow};

#[test]
fn same_seed_gives_identical_waveforms() {
    let c = Scenario::Fig2.config(None).unwrap();
    let grab = |seed| {
        let mut c = c.clone();
        c.seed = Some(seed);
        let prep = harness::prepare(&c).unwrap();
        let mut out = Vec::new();
        harness::execute(&prep, false, |f, _| {
            out.extend(f.records.iter().cloned());
            Ok(())
        })
        .unwrap();
        out
    };
    assert_eq!(grab(11), grab(11));
    assert_ne!(grab(11), grab(12));
}

#[test]
fn chopper_default_set_is_87_frames_at_1020_fps() {
    let c = Scenario::Fig5.config(None).unwrap();
    let s = harness::run(&c).unwrap();
    let series = &s.series[0];
    assert_eq!(series.len(), TableRow::Two.total_frames());
    assert_eq!(series.fps().round(), 1020.0);
    assert!((series.frame_period - 980e-6).abs() < 1e-12);
    let times = series.times();
    for w in times.windows(2) {
        assert!((w[1] - w[0] - series.frame_period).abs() < 1e-12);
    }
}

#[test]
fn tape_length_within_one_pixel() {
    let mut c = Scenario::Fig5.config(None).unwrap();
    c.scene.freeze_motion = true;
    c.frames = Some(1);
    let s = harness::run(&c).unwrap();
    let frame = s.first_frame(0).unwrap();
    let size = feature_of(frame, &c.analysis).unwrap().expect("tape visible");
    let pixel_arc = (14.0f64 / 70.0).to_radians() * size.depth;
    assert!((size.arc_length - 0.05).abs() <= pixel_arc, "{} m", size.arc_length);
}

#[test]
fn tracking_ignores_intensity_scale() {
    let mut c = Scenario::Fig5.config(Some(TableRow::Three)).unwrap();
    c.record_capacity_samples = None;
    c.frames = Some(40);
    let s = harness::run(&c).unwrap();
    let mut scaled = s.series[0].clone();
    for f in scaled.frames.iter_mut() {
        for p in f.pixels.iter_mut() {
            p.intensity *= 7.5;
        }
    }
    let opts = track_options(&c.analysis);
    let a = rotation_speed(&track_rotation(&s.series[0], &opts).unwrap(), None).unwrap();
    let b = rotation_speed(&track_rotation(&scaled, &opts).unwrap(), None).unwrap();
    assert!((a.hz - b.hz).abs() < 1e-6, "{} vs {}", a.hz, b.hz);
    assert!((a.hz - 92.71).abs() < 1.5);
}

#[test]
fn empty_scene_gives_all_miss_frame() {
    let mut c = Scenario::Fig2.config(None).unwrap();
    c.scene.bundled = None;
    let s = harness::run(&c).unwrap();
    assert_eq!(s.first_frame(0).unwrap().hits(), 0);
}
