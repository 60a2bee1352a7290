//! Run configuration: one TOML document with a section per module.
//!
//! ```toml
//! seed = 7
//! output_dir = "out/example"
//! frames = 1
//!
//! [laser]
//! f_rep = 5e6
//!
//! [calibration]
//! span = 4.3
//!
//! [pattern]
//! kind = "raster"
//! grid = [70, 70]
//! fov = [100.0, 100.0]
//! policy = "blank"
//!
//! [[detectors]]
//! id = "A"
//! na = { mode = "central_block", half_angle_deg = 0.5 }
//!
//! [scene]
//! bundled = "fig2_three_objects"
//! ```
//!
//! Omitted sections take their defaults. Bundled scenario files carry a
//! commented copy of every section they change.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calibration::{build_maps_over, CalibrationCurve, CalibrationMaps};
use crate::error::{Error, Result};
use crate::optics::OpticsChain;
use crate::pipeline::ExtractOptions;
use crate::scanpattern::{lissajous, random_access, raster_with, LissajousParams, RasterOptions, ReachPolicy, ScanPattern};
use crate::scene::{Scene, SceneObject};
use crate::signal::{samples_per_period, DetectorSpec, LaserSpec, Radiometry};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    /// Drive giving the full metasurface radius (V).
    pub v_half: f64,
    /// Half-width of the calibrated drive range (V).
    pub span: f64,
    /// Pre-fitted curve in text form, overriding `v_half`/`span`.
    pub curve_file: Option<PathBuf>,
    pub grid_step: f64,
    pub extent: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            v_half: 5.0,
            span: 4.3,
            curve_file: None,
            grid_step: crate::calibration::DEFAULT_GRID_STEP,
            extent: crate::calibration::DEFAULT_GRID_EXTENT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PatternConfig {
    /// Row-major grid; `fov` is the full span in degrees.
    Raster {
        grid: [usize; 2],
        fov: [f64; 2],
        #[serde(default)]
        center: [f64; 2],
        #[serde(default)]
        policy: ReachPolicy,
    },
    /// Amplitudes in degrees, angular frequencies in rad/s.
    Lissajous {
        a: f64,
        b: f64,
        omega_theta: f64,
        omega_phi: f64,
        #[serde(default)]
        psi: f64,
        duration: f64,
    },
    /// `[theta_deg, phi_deg]` points, one shot each.
    RandomAccess { points: Vec<[f64; 2]> },
    /// Pattern table in the text format of `ScanPattern::to_text`.
    File { path: PathBuf },
}

impl Default for PatternConfig {
    fn default() -> Self {
        PatternConfig::Raster {
            grid: [70, 70],
            fov: [100.0, 100.0],
            center: [0.0, 0.0],
            policy: ReachPolicy::Blank,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    /// Name of a bundled scene.
    pub bundled: Option<String>,
    pub file: Option<PathBuf>,
    /// Objects added to the bundled or file scene.
    pub objects: Vec<SceneObject>,
    /// Stop all motion.
    pub freeze_motion: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Polar origin for tracking, pixel coordinates; grid centre if unset.
    pub track_center: Option<[f64; 2]>,
    pub track_bins: usize,
    pub track_min_radius: f64,
    pub track_max_radius: Option<f64>,
    /// Depth band `[near, far]` (m) for tracking and feature size.
    pub depth_window: Option<[f64; 2]>,
    /// Expected rotation (Hz) for the aliasing guard.
    pub expected_hz: Option<f64>,
    /// Fraction of the brightest in-band intensity a feature pixel must reach.
    pub feature_threshold: f64,
    /// Largest depth step (m) between neighbours of one cluster.
    pub cluster_depth_step: f64,
    pub cluster_min_pixels: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            track_center: None,
            track_bins: 90,
            track_min_radius: 1.0,
            track_max_radius: None,
            depth_window: None,
            expected_hz: None,
            feature_threshold: 0.5,
            cluster_depth_step: 0.1,
            cluster_min_pixels: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExportConfig {
    pub waveforms: bool,
    pub frames: bool,
    pub point_clouds: bool,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self {
            waveforms: true,
            frames: true,
            point_clouds: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Noise seed; required for synthesis.
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    /// Frames to synthesize.
    pub frames: Option<usize>,
    /// Alternatively, fill a digitizer record of this many samples per
    /// detector with whole frames.
    pub record_capacity_samples: Option<f64>,
    /// Apply the deflector rate response (amplitude loss and pointing lag).
    pub rate_limits: bool,
    pub laser: LaserSpec,
    pub optics: OpticsChain,
    pub calibration: CalibrationConfig,
    pub pattern: PatternConfig,
    pub detectors: Vec<DetectorSpec>,
    pub radiometry: Radiometry,
    pub scene: SceneConfig,
    pub pipeline: ExtractOptions,
    pub analysis: AnalysisConfig,
    pub export: ExportConfig,
    /// Directory that relative paths resolve against; not serialized.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            output_dir: PathBuf::from("out"),
            frames: None,
            record_capacity_samples: None,
            rate_limits: true,
            laser: LaserSpec::default(),
            optics: OpticsChain::default(),
            calibration: CalibrationConfig::default(),
            pattern: PatternConfig::default(),
            detectors: vec![DetectorSpec::default()],
            radiometry: Radiometry::default(),
            scene: SceneConfig::default(),
            pipeline: ExtractOptions::default(),
            analysis: AnalysisConfig::default(),
            export: ExportConfig::default(),
            base_dir: None,
        }
    }
}

fn cfg(path: &str, e: impl std::fmt::Display) -> Error {
    Error::Config(format!("{path}: {e}"))
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg(&path.display().to_string(), e))?;
        let mut c = Self::from_toml_str(&text).map_err(|e| cfg(&path.display().to_string(), e))?;
        c.base_dir = path.parent().map(Path::to_path_buf);
        Ok(c)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    /// Checks cross-references and module invariants without building anything.
    pub fn validate(&self) -> Result<()> {
        self.laser.validate().map_err(|e| e.context("signal", "laser"))?;
        self.optics.validate().map_err(|e| e.context("optics", "optics"))?;
        if self.detectors.is_empty() {
            return Err(cfg("detectors", "at least one detector is required"));
        }
        for (i, d) in self.detectors.iter().enumerate() {
            d.validate().map_err(|e| e.context("signal", format!("detectors[{i}]")))?;
            samples_per_period(d.sample_rate, self.laser.f_rep)
                .map_err(|e| e.context("signal", format!("detectors[{i}].sample_rate")))?;
            if self.detectors[..i].iter().any(|o| o.id == d.id) {
                return Err(cfg(&format!("detectors[{i}].id"), "duplicate detector id"));
            }
        }
        let s = &self.scene;
        if let Some(name) = &s.bundled {
            if !crate::scene::BUNDLED_SCENES.contains(&name.as_str()) {
                return Err(cfg("scene.bundled", format!("unknown bundled scene {name:?}")));
            }
        }
        if let Some(f) = &s.file {
            if !self.resolve(f).exists() {
                return Err(cfg("scene.file", format!("{} not found", f.display())));
            }
        }
        if s.bundled.is_some() && s.file.is_some() {
            return Err(cfg("scene", "set either bundled or file, not both"));
        }
        if let PatternConfig::File { path } = &self.pattern {
            if !self.resolve(path).exists() {
                return Err(cfg("pattern.path", format!("{} not found", path.display())));
            }
        }
        if let Some(f) = &self.calibration.curve_file {
            if !self.resolve(f).exists() {
                return Err(cfg("calibration.curve_file", format!("{} not found", f.display())));
            }
        }
        if self.frames == Some(0) {
            return Err(cfg("frames", "must be at least 1"));
        }
        if !(self.pipeline.threshold_k > 0.0) {
            return Err(cfg("pipeline.threshold_k", "must be > 0"));
        }
        Ok(())
    }

    pub fn curve(&self) -> Result<CalibrationCurve> {
        let c = &self.calibration;
        let curve = match &c.curve_file {
            Some(f) => {
                let text = std::fs::read_to_string(self.resolve(f)).map_err(|e| cfg("calibration.curve_file", e))?;
                CalibrationCurve::from_text(&text)
            }
            None => CalibrationCurve::ideal_chain(c.v_half, c.span),
        };
        curve.map_err(|e| e.context("calibration", "calibration"))
    }

    pub fn maps(&self, curve: &CalibrationCurve) -> Result<CalibrationMaps> {
        build_maps_over(curve, self.calibration.grid_step, self.calibration.extent)
            .map_err(|e| e.context("calibration", "calibration.grid_step"))
    }

    pub fn scene(&self) -> Result<Scene> {
        let s = &self.scene;
        let mut scene = if let Some(name) = &s.bundled {
            Scene::bundled(name).map_err(|e| e.context("scene", "scene.bundled"))?
        } else if let Some(f) = &s.file {
            Scene::load(&self.resolve(f)).map_err(|e| e.context("scene", "scene.file"))?
        } else {
            Scene::default()
        };
        scene.objects.extend(s.objects.iter().cloned());
        if s.freeze_motion {
            for o in scene.objects.iter_mut() {
                o.motion = None;
            }
        }
        scene.validate().map_err(|e| e.context("scene", "scene.objects"))?;
        Ok(scene)
    }

    pub fn pattern(&self, maps: &CalibrationMaps) -> Result<ScanPattern> {
        let f_rep = self.laser.f_rep;
        let p = match &self.pattern {
            PatternConfig::Raster { grid, fov, center, policy } => raster_with(
                (grid[0], grid[1]),
                (fov[0], fov[1]),
                f_rep,
                maps,
                RasterOptions {
                    center: (center[0], center[1]),
                    policy: *policy,
                },
            ),
            PatternConfig::Lissajous {
                a,
                b,
                omega_theta,
                omega_phi,
                psi,
                duration,
            } => lissajous(
                &LissajousParams {
                    a: *a,
                    b: *b,
                    omega_theta: *omega_theta,
                    omega_phi: *omega_phi,
                    psi: *psi,
                    duration: *duration,
                    sample_rate: f_rep,
                },
                maps,
            ),
            PatternConfig::RandomAccess { points } => {
                let pts: Vec<(f64, f64, f64)> = points.iter().map(|p| (p[0], p[1], 1.0 / f_rep)).collect();
                random_access(&pts, maps)
            }
            PatternConfig::File { path } => std::fs::read_to_string(self.resolve(path))
                .map_err(Error::from)
                .and_then(|t| ScanPattern::from_text(&t)),
        };
        p.map_err(|e| e.context("scanpattern", "pattern"))
    }

    /// Frames to synthesize for a pattern of `pixels` shots.
    pub fn frame_count(&self, pixels: usize) -> Result<usize> {
        match (self.frames, self.record_capacity_samples) {
            (Some(n), _) => Ok(n),
            (None, Some(cap)) => {
                let n = samples_per_period(self.detectors[0].sample_rate, self.laser.f_rep)?;
                let frames = (cap / (pixels * n) as f64).floor() as usize;
                if frames == 0 {
                    Err(cfg("record_capacity_samples", "record holds less than one frame"))
                } else {
                    Ok(frames)
                }
            }
            (None, None) => Ok(1),
        }
    }
}
