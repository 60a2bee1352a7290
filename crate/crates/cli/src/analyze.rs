use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use metalidar::analysis::{self, DETECTABILITY_NOTE};
use metalidar::config::{AnalysisConfig, RunConfig};
use metalidar::harness;
use metalidar::optics::{divergence_after_ms, MetasurfaceSpec};
use metalidar::pipeline::{RangingFrame, TimeSeries};
use metalidar::signal::DetectorId;
use metalidar::{Error, Result};

use crate::manifest::Manifest;
use crate::Failure;

#[derive(Args)]
pub struct AnalyzeArgs {
    #[command(subcommand)]
    pub kind: Analysis,
}

/// A run directory written by `simulate`, or a single frame CSV.
#[derive(Args, Clone)]
pub struct FrameInput {
    /// Run directory containing manifest.json.
    #[arg(long, conflicts_with = "csv")]
    pub run: Option<PathBuf>,
    /// Frame CSV (pixel_index,theta_deg,phi_deg,depth_m,intensity).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Detector label within the run.
    #[arg(long, default_value = "A")]
    pub detector: String,
    /// Frame index within the run.
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    /// Raster shape of a CSV frame; runs take it from the manifest.
    #[arg(long, num_args = 2, value_names = ["NX", "NY"], requires = "csv")]
    pub grid: Option<Vec<usize>>,
}

#[derive(Subcommand)]
pub enum Analysis {
    /// Track the bright feature through a run and fit its rotation speed.
    Speed {
        /// Run directory containing manifest.json.
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value = "A")]
        detector: String,
        /// Overrides the configured expected speed used for the aliasing check.
        #[arg(long)]
        expected_hz: Option<f64>,
        /// Directory for track and residual CSVs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Largest extent of the bright feature within a depth window.
    Size {
        #[command(flatten)]
        input: FrameInput,
        /// Depth window (m); defaults to the run configuration.
        #[arg(long, num_args = 2, value_names = ["NEAR", "FAR"])]
        depth_window: Option<Vec<f64>>,
        /// Fraction of the peak intensity that counts as feature.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Depth-connected clusters of hits.
    Clusters {
        #[command(flatten)]
        input: FrameInput,
        /// Largest depth step between neighbours of one cluster (m).
        #[arg(long)]
        depth_step: Option<f64>,
        #[arg(long)]
        min_pixels: Option<usize>,
    },
    /// Full-angle divergence from beam diameters measured at several distances.
    Divergence {
        /// CSV of `distance_m,diameter_m` rows (a header line is allowed).
        #[arg(long, required_unless_present = "model")]
        data: Option<PathBuf>,
        /// Generate the dataset from the metasurface model instead.
        #[arg(long)]
        model: bool,
        /// Input spot diameter for the model (m).
        #[arg(long, default_value_t = 60e-6)]
        spot: f64,
        /// Impact radius on the metasurface for the model (m).
        #[arg(long, default_value_t = 0.2e-3)]
        impact: f64,
    },
    /// Frames captured while a target crosses the field of view.
    Detectability {
        /// Target speed (km/h).
        #[arg(long, default_value_t = 1234.0)]
        speed_kmh: f64,
        /// Target range (m).
        #[arg(long, default_value_t = 15.0)]
        range: f64,
        /// Field of view (deg).
        #[arg(long, default_value_t = 120.0)]
        fov: f64,
        /// Frame period (s).
        #[arg(long, default_value_t = 980e-6)]
        frame_period: f64,
        #[arg(long, default_value_t = 4)]
        min_events: u32,
    },
}

const MODEL_DISTANCES: [f64; 4] = [0.055, 0.08, 0.13, 0.155];

pub fn run(args: &AnalyzeArgs) -> std::result::Result<(), Failure> {
    match &args.kind {
        Analysis::Speed { run, detector, expected_hz, out } => speed(run, detector, *expected_hz, out.as_deref())?,
        Analysis::Size { input, depth_window, threshold } => {
            let (frame, mut a) = load_frame(input)?;
            if let Some(w) = depth_window {
                a.depth_window = Some([w[0], w[1]]);
            }
            if let Some(t) = threshold {
                a.feature_threshold = *t;
            }
            match harness::feature_of(&frame, &a)? {
                Some(s) => println!(
                    "feature: {:.4} m across {} pixels at {:.4} m",
                    s.arc_length, s.pixels, s.depth
                ),
                None => println!("no feature within the depth window"),
            }
        }
        Analysis::Clusters { input, depth_step, min_pixels } => {
            let (frame, mut a) = load_frame(input)?;
            if let Some(d) = depth_step {
                a.cluster_depth_step = *d;
            }
            if let Some(m) = min_pixels {
                a.cluster_min_pixels = *m;
            }
            let clusters = harness::clusters_of(&frame, &a);
            println!("cluster,pixels,median_depth_m,theta_deg,phi_deg,x_m,y_m,z_m");
            for (i, c) in clusters.iter().enumerate() {
                let [x, y, z] = c.centroid;
                println!(
                    "{i},{},{:.4},{:.3},{:.3},{x:.4},{y:.4},{z:.4}",
                    c.pixels.len(),
                    c.median_depth,
                    c.theta_deg,
                    c.phi_deg
                );
            }
        }
        Analysis::Divergence { data, model, spot, impact } => {
            let profiles = if *model {
                let full = divergence_after_ms(*spot, *impact, &MetasurfaceSpec::default());
                println!("model full angle: {:.4} deg", full.to_degrees());
                MODEL_DISTANCES
                    .iter()
                    .map(|&z| (z, spot + 2.0 * z * (full / 2.0).tan()))
                    .collect()
            } else {
                read_pairs(data.as_deref().expect("clap enforces --data or --model"))?
            };
            let fit = analysis::divergence_regression(&profiles)?;
            println!(
                "divergence: {:.4} deg full angle, waist {:.3e} m at z = 0, r^2 {:.5}{}",
                fit.slope_deg(),
                fit.intercept,
                fit.r_squared,
                if fit.negative_slope { " (beam narrows with distance)" } else { "" }
            );
        }
        Analysis::Detectability { speed_kmh, range, fov, frame_period, min_events } => {
            let d = analysis::detectability(speed_kmh / 3.6, *range, *fov, *frame_period, *min_events)?;
            println!("chord: {:.3} m", d.chord);
            println!("crossing time: {:.1} ms", d.crossing_time * 1e3);
            println!("frames during crossing: {}", d.n_events);
            println!(
                "max speed for {min_events} frames: {:.1} km/h ({:.2} Mm/h)",
                d.max_speed * 3.6,
                d.max_speed * 3.6 / 1e3
            );
            println!("note: {DETECTABILITY_NOTE}");
        }
    }
    Ok(())
}

fn run_config(run: &Path, manifest: &Manifest) -> Result<RunConfig> {
    RunConfig::load(&run.join(&manifest.config))
}

fn series_files(run: &Path, detector: &str) -> Result<Vec<(f64, PathBuf)>> {
    let path = run.join(format!("series_{detector}.csv"));
    let text = fs::read_to_string(&path)?;
    let bad = |n: usize, what: &str| Error::Config(format!("{}: line {n}: {what}", path.display()));
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad(n + 1, "expected 4 fields"));
        }
        if f[3].is_empty() {
            return Err(bad(n + 1, "frame CSV was not exported (export.frames = false)"));
        }
        let t = f[1].parse::<f64>().map_err(|_| bad(n + 1, "bad timestamp"))?;
        out.push((t, run.join(f[3])));
    }
    Ok(out)
}

fn read_frame(path: &Path, manifest: &Manifest, detector: DetectorId, t: f64) -> Result<RangingFrame> {
    let text = fs::read_to_string(path)?;
    let mut f = RangingFrame::from_csv(&text, detector, manifest.max_range_m)?;
    f.grid = manifest.grid.map(|[x, y]| (x, y));
    f.timestamp = t;
    Ok(f)
}

fn detector_id(label: &str) -> Result<DetectorId> {
    match label {
        "A" => Ok(DetectorId::A),
        "B" => Ok(DetectorId::B),
        _ => Err(Error::Config(format!("unknown detector {label:?} (A, B)"))),
    }
}

fn speed(run: &Path, detector: &str, expected_hz: Option<f64>, out: Option<&Path>) -> Result<()> {
    let manifest = Manifest::load(run)?;
    let mut a = run_config(run, &manifest)?.analysis;
    if expected_hz.is_some() {
        a.expected_hz = expected_hz;
    }
    let id = detector_id(detector)?;
    let frames = series_files(run, detector)?
        .iter()
        .map(|(t, p)| read_frame(p, &manifest, id, *t))
        .collect::<Result<Vec<_>>>()?;
    let series = TimeSeries {
        frames,
        frame_period: manifest.frame_period_s,
    };
    let (track, v) = harness::rotation_of(&series, &a)?;
    println!(
        "rotation: {:.3} +/- {:.3} Hz from {} of {} frames at {:.1} fps",
        v.hz,
        v.uncertainty,
        v.frames_used,
        series.len(),
        series.fps()
    );
    if v.aliasing_warning {
        println!("warning: frame rate is below twice the expected rotation speed");
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("track_{detector}.csv")), track.to_csv())?;
        let mut s = String::from("angle_rad,residual_rad\n");
        for (x, r) in &v.residuals {
            let _ = writeln!(s, "{x},{r}");
        }
        fs::write(dir.join(format!("residuals_{detector}.csv")), s)?;
    }
    Ok(())
}

fn load_frame(input: &FrameInput) -> Result<(RangingFrame, AnalysisConfig)> {
    let id = detector_id(&input.detector)?;
    match (&input.run, &input.csv) {
        (Some(run), _) => {
            let manifest = Manifest::load(run)?;
            let a = run_config(run, &manifest)?.analysis;
            let files = series_files(run, &input.detector)?;
            let (t, p) = files.get(input.frame).ok_or_else(|| {
                Error::Config(format!("frame {} not in run ({} frames)", input.frame, files.len()))
            })?;
            Ok((read_frame(p, &manifest, id, *t)?, a))
        }
        (None, Some(csv)) => {
            let text = fs::read_to_string(csv)?;
            let mut f = RangingFrame::from_csv(&text, id, f64::INFINITY)?;
            if let Some(g) = &input.grid {
                if g[0] * g[1] != f.pixels.len() {
                    return Err(Error::Config(format!(
                        "--grid {}x{} does not match {} pixels",
                        g[0],
                        g[1],
                        f.pixels.len()
                    )));
                }
                f.grid = Some((g[0], g[1]));
            }
            Ok((f, AnalysisConfig::default()))
        }
        (None, None) => Err(Error::Config("one of --run or --csv is required".into())),
    }
}

fn read_pairs(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = (f.len() == 2).then(|| (f[0].parse::<f64>(), f[1].parse::<f64>()));
        match parsed {
            Some((Ok(z), Ok(w))) => out.push((z, w)),
            _ if n == 0 => {}
            _ => return Err(Error::Config(format!("{}: line {}: expected distance,diameter", path.display(), n + 1))),
        }
    }
    Ok(out)
}
