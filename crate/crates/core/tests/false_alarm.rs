use metalidar::pipeline::{extract_row, ExtractOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

#[test]
fn noise_rows_rarely_trigger_at_five_sigma() {
    let rows = 100_000u64;
    let options = ExtractOptions::default();
    let alarms: usize = (0..rows)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(2024);
            rng.set_stream(r);
            let row: Vec<f32> = (0..600)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    (9e-4 * z) as f32
                })
                .collect();
            usize::from(extract_row(&row, 3e9, &options).tof.is_some())
        })
        .sum();
    let rate = alarms as f64 / rows as f64;
    assert!(rate < 1e-3, "false-alarm rate {rate}");
}
