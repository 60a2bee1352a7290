use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use clap::Args;
use metalidar::calibration::MapComponent;

use crate::manifest;
use crate::{ConfigSource, Failure};

/// Tolerated `|V(θ,φ) + V(-θ,-φ)|` about the zero-deflection voltage (V).
const ANTISYMMETRY_TOL: f64 = 1e-9;

#[derive(Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub source: ConfigSource,
}

pub fn run(args: &CalibrateArgs) -> Result<(), Failure> {
    let config = args.source.load()?;
    config.validate()?;
    let curve = config.curve()?;
    let maps = config.maps(&curve)?;
    let out = &config.output_dir;
    fs::create_dir_all(out)?;

    let cov = maps.coverage();
    let antisym = maps.max_antisymmetry_error();
    let monotonic = curve.is_monotonic();
    let mut report = String::new();
    let c = &curve.coefficients;
    let _ = writeln!(report, "curve: alpha = {:.6e} + {:.6e} V + {:.6e} V^2 + {:.6e} V^3 (deg)", c[0], c[1], c[2], c[3]);
    let _ = writeln!(report, "valid voltage: {:.4} .. {:.4} V", curve.valid_voltage.0, curve.valid_voltage.1);
    let _ = writeln!(report, "fit residual rms: {:.4e} deg", curve.residual_rms);
    let _ = writeln!(report, "monotonic: {monotonic}");
    let _ = writeln!(report, "grid: +/-{} deg at {} deg", maps.extent, maps.step);
    let _ = writeln!(report, "reachable cells: {:.2} %", 100.0 * cov.valid_fraction);
    let _ = writeln!(report, "cone reach: {:.2} deg", cov.max_cone_angle);
    let _ = writeln!(report, "reach along theta at phi = 0: +/-{:.2} deg", cov.max_axis_angle);
    let _ = writeln!(report, "antisymmetry error: {antisym:.3e} V");
    print!("{report}");

    let files = [
        (PathBuf::from("curve.txt"), curve.to_text()),
        (PathBuf::from("maps_vx.csv"), maps.to_csv_grid(MapComponent::Vx)),
        (PathBuf::from("maps_vy.csv"), maps.to_csv_grid(MapComponent::Vy)),
        (PathBuf::from("coverage.txt"), report),
    ];
    for (rel, text) in &files {
        fs::write(out.join(rel), text)?;
    }
    for e in manifest::entries(out, &files.map(|f| f.0))? {
        println!("{}  {}", e.sha256, e.path);
    }

    if !monotonic {
        return Err(Failure::Check("calibration curve is not monotonic".into()));
    }
    if antisym > ANTISYMMETRY_TOL {
        return Err(Failure::Check(format!(
            "voltage maps violate antisymmetry by {antisym:.3e} V (tolerance {ANTISYMMETRY_TOL:.0e} V)"
        )));
    }
    Ok(())
}
