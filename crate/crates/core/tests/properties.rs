use metalidar::analysis::divergence_regression;
use metalidar::calibration::{ms_to_spherical, polar_to_voltages, spherical_to_ms, voltages_to_polar};
use metalidar::optics::{divergence_after_ms, MetasurfaceSpec};
use metalidar::pipeline::fold_samples;
use metalidar::signal::{samples_per_period, WaveformRecord, DetectorId};
use proptest::prelude::*;

proptest! {
    #[test]
    fn spherical_ms_round_trip(theta in -1.55..1.55f64, phi in -1.55..1.55f64) {
        let ms = spherical_to_ms(theta, phi).unwrap();
        let (t, p) = ms_to_spherical(ms.alpha, ms.theta_ms).unwrap();
        prop_assert!((t - theta).abs() < 1e-9 && (p - phi).abs() < 1e-9);
    }

    #[test]
    fn polar_voltage_round_trip(vx in -5.0..5.0f64, vy in -5.0..5.0f64) {
        let (r, a) = voltages_to_polar(vx, vy);
        let (x, y) = polar_to_voltages(r, a);
        prop_assert!((x - vx).abs() < 1e-12 && (y - vy).abs() < 1e-12);
    }

    #[test]
    fn fold_is_a_pure_reshape(rows in 1usize..50, data in prop::collection::vec(-1.0f32..1.0, 600)) {
        let samples: Vec<f32> = data.iter().cycle().take(rows * 180).cloned().collect();
        let m = fold_samples(samples.clone(), 3e9, 3e9 / 180.0).unwrap();
        prop_assert_eq!(m.rows(), rows);
        prop_assert_eq!(m.flatten(), samples);
    }

    #[test]
    fn waveform_bytes_round_trip(samples in prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 0..300), t0 in 0.0..1.0f64) {
        let rec = WaveformRecord { n_pixels: samples.len(), samples, sample_rate: 3e9, f_rep: 3e9, t0, detector: DetectorId::A };
        let mut bytes = Vec::new();
        rec.write_to(&mut bytes).unwrap();
        prop_assert_eq!(WaveformRecord::read_from(&bytes[..]).unwrap(), rec);
    }

    #[test]
    fn divergence_loop_recovers_model(impact in 0.0..0.4e-3f64, spot in 20e-6..100e-6f64) {
        let ms = MetasurfaceSpec::default();
        let full = divergence_after_ms(spot, impact, &ms);
        let z = [0.055, 0.08, 0.13, 0.155];
        let data: Vec<(f64, f64)> = z.iter().map(|&z| (z, spot + 2.0 * z * (full / 2.0).tan())).collect();
        let fit = divergence_regression(&data).unwrap();
        prop_assert!((fit.slope / full - 1.0).abs() < 0.02);
    }
}

#[test]
fn integer_samples_per_period_for_table_rates() {
    assert_eq!(samples_per_period(3e9, 5e6).unwrap(), 600);
    assert_eq!(samples_per_period(3e9, 3e9 / 180.0).unwrap(), 180);
}
