//! synthesize -> fold -> extract -> assemble over randomized scenes.

use metalidar::calibration::{build_maps, CalibrationCurve};
use metalidar::optics::{DiffractionOrder, OpticsChain};
use metalidar::pipeline::{assemble, extract_tof, fold, AngleSource, ExtractOptions};
use metalidar::scanpattern::{raster_with, RasterOptions, RateReport, ReachPolicy};
use metalidar::scene::{Geometry, Scene, SceneObject};
use metalidar::signal::{synthesize_with_truth, DetectorId, DetectorSpec, LaserSpec, Radiometry};
use metalidar::{max_range, SPEED_OF_LIGHT};
use proptest::prelude::*;

fn object() -> impl Strategy<Value = SceneObject> {
    let geometry = prop_oneof![
        (0.1..1.0f64, 0.1..1.0f64).prop_map(|(a, b)| Geometry::Plane { half_extent: Some([a, b]) }),
        (0.05..0.5f64).prop_map(|r| Geometry::Sphere { radius: r }),
        (0.05..0.6f64).prop_map(|r| Geometry::Disk { radius: r }),
        (0.05..0.4f64, 0.05..0.4f64, 0.05..0.4f64).prop_map(|(a, b, c)| Geometry::Box { half_size: [a, b, c] }),
    ];
    (geometry, -40.0..40.0f64, -40.0..40.0f64, 1.0..25.0f64, 0.2..1.0f64, any::<bool>(), any::<bool>()).prop_map(
        |(geometry, th, ph, d, reflectivity, retro, face_origin)| {
            let u = metalidar::angles::unit_vector(th.to_radians(), ph.to_radians());
            SceneObject {
                id: String::new(),
                geometry,
                position: [d * u.x, d * u.y, d * u.z],
                normal: None,
                face_origin,
                reflectivity,
                retro,
                motion: None,
            }
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn noiseless_round_trip_recovers_every_visible_target(
        objects in prop::collection::vec(object(), 1..5),
        seed in any::<u64>(),
    ) {
        let objects: Vec<SceneObject> = objects
            .into_iter()
            .enumerate()
            .map(|(i, mut o)| { o.id = format!("obj{i}"); o })
            .collect();
        let scene = Scene { objects };
        let f_rep = 5e6;
        let maps = build_maps(&CalibrationCurve::default(), 1.0).unwrap();
        let pattern = raster_with((16, 16), (90.0, 90.0), f_rep, &maps, RasterOptions { center: (0.0, 0.0), policy: ReachPolicy::Blank }).unwrap();
        let laser = LaserSpec { f_rep, ..Default::default() };
        let det = [DetectorSpec { noise_sigma: 0.0, ..Default::default() }];
        let (records, truth) = synthesize_with_truth(
            &pattern, &scene, &OpticsChain::default(), &laser, Radiometry::default(), &det, RateReport::ideal(f_rep), seed,
        ).unwrap();
        let m = fold(&records[0]).unwrap();
        let tofs = extract_tof(&m, &ExtractOptions::default());
        let frame = assemble(&tofs, &pattern, AngleSource::Commanded, DetectorId::A, f_rep, 0.0).unwrap();
        let lattice = SPEED_OF_LIGHT / (2.0 * 3e9);
        for (k, (px, shot)) in frame.pixels.iter().zip(&truth).enumerate() {
            let seen = shot.beams.iter().filter(|b| !b.accepted_by.is_empty() && b.hit.is_some());
            let nearest = seen
                .filter(|b| b.order == DiffractionOrder::First)
                .filter_map(|b| b.hit)
                .map(|h| h.distance)
                .fold(f64::INFINITY, f64::min);
            if nearest.is_finite() && nearest < max_range(f_rep) - 0.1 {
                let d = px.depth;
                prop_assert!(d.is_some(), "pixel {k}: target at {nearest:.3} m missed");
                prop_assert!((d.unwrap() - nearest).abs() <= lattice, "pixel {k}: {} vs {nearest}", d.unwrap());
            } else if !nearest.is_finite() {
                prop_assert!(px.depth.is_none(), "pixel {k}: phantom at {:?}", px.depth);
            }
        }
    }
}
