//! Timed drive-voltage sequences and repointing-rate checks.
//!
//! Lissajous rates are written `omega_theta`, `omega_phi` (rad/s) to keep
//! `alpha` free for the deflection angle.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::calibration::{spherical_to_ms, CalibrationMaps};
use crate::error::{Error, Result};
use crate::optics::{transit_limits, AodSpec, ScanAxes};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternKind {
    Raster,
    Lissajous,
    RandomAccess,
    Line,
}

impl PatternKind {
    fn name(self) -> &'static str {
        match self {
            PatternKind::Raster => "raster",
            PatternKind::Lissajous => "lissajous",
            PatternKind::RandomAccess => "random_access",
            PatternKind::Line => "line",
        }
    }
}

/// What a generator does with a direction the calibration cannot reach.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReachPolicy {
    /// Fail with the list of offending samples.
    #[default]
    Error,
    /// Keep the pixel but gate the laser off; the drive is clamped to the
    /// edge of the reachable cone in the same azimuth.
    Blank,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanSample {
    /// Start time (s) relative to the pattern start.
    pub t: f64,
    pub v_x: f64,
    pub v_y: f64,
    /// Commanded azimuth (degrees).
    pub theta_deg: f64,
    /// Commanded elevation (degrees).
    pub phi_deg: f64,
    /// Whether the laser fires on this sample.
    pub fire: bool,
}

/// One frame of a scan; synthesis repeats it cyclically.
#[derive(Clone, Debug, PartialEq)]
pub struct ScanPattern {
    pub samples: Vec<ScanSample>,
    /// Repointing frequency (Hz).
    pub scan_rate: f64,
    /// `(n_x, n_y)` for rasters.
    pub grid: Option<(usize, usize)>,
    pub kind: PatternKind,
}

impl ScanPattern {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration of one pass through the pattern (s).
    pub fn frame_duration(&self) -> f64 {
        self.len() as f64 / self.scan_rate
    }

    pub fn frame_rate(&self) -> f64 {
        self.scan_rate / self.len() as f64
    }

    /// Checks ordering and, for uniform kinds, the sample spacing.
    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::Config("scan pattern has no samples".into()));
        }
        if !(self.scan_rate > 0.0 && self.scan_rate.is_finite()) {
            return Err(Error::domain("scan_rate", self.scan_rate, "> 0"));
        }
        if self.samples.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::Config("scan pattern times must increase strictly".into()));
        }
        if let Some((nx, ny)) = self.grid {
            if nx * ny != self.samples.len() {
                return Err(Error::Length(format!(
                    "grid {nx}x{ny} does not match {} samples",
                    self.samples.len()
                )));
            }
        }
        Ok(())
    }

    /// True when every step equals `1 / scan_rate` to within `rel_tol` of a step.
    pub fn is_uniform(&self, rel_tol: f64) -> bool {
        let dt = 1.0 / self.scan_rate;
        self.samples
            .iter()
            .enumerate()
            .all(|(k, s)| (s.t - k as f64 * dt).abs() <= rel_tol * dt)
    }

    /// Expands a dwell-based sequence into uniform shots at `rate`: each
    /// sample is held for the shots whose start falls inside its dwell.
    pub fn resample(&self, rate: f64) -> Result<ScanPattern> {
        self.validate()?;
        let total = self.frame_duration_from_times();
        let n = (total * rate).round() as usize;
        if n == 0 {
            return Err(Error::Config("pattern shorter than one shot".into()));
        }
        let mut out = Vec::with_capacity(n);
        let mut j = 0;
        for k in 0..n {
            let t = k as f64 / rate;
            while j + 1 < self.samples.len() && self.samples[j + 1].t <= t + 1e-15 {
                j += 1;
            }
            out.push(ScanSample { t, ..self.samples[j] });
        }
        Ok(ScanPattern {
            samples: out,
            scan_rate: rate,
            grid: None,
            kind: self.kind,
        })
    }

    /// End time of the last sample, assuming it lasts as long as the mean step.
    fn frame_duration_from_times(&self) -> f64 {
        let n = self.samples.len();
        if n == 1 {
            return 1.0 / self.scan_rate;
        }
        let last = self.samples[n - 1].t;
        last + (last - self.samples[0].t) / (n - 1) as f64
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# metalidar scan pattern v1\n");
        let _ = writeln!(s, "kind = {}", self.kind.name());
        let _ = writeln!(s, "scan_rate = {}", self.scan_rate);
        if let Some((nx, ny)) = self.grid {
            let _ = writeln!(s, "grid = {nx} {ny}");
        }
        s.push_str("# t v_x v_y theta_deg phi_deg fire\n");
        for p in &self.samples {
            let _ = writeln!(
                s,
                "{} {} {} {} {} {}",
                p.t, p.v_x, p.v_y, p.theta_deg, p.phi_deg, p.fire as u8
            );
        }
        s
    }

    /// Parses [`to_text`](Self::to_text) output. Body rows need `t v_x v_y`;
    /// the angle pair and the `fire` flag are optional (angles default to
    /// NaN, `fire` to 1).
    pub fn from_text(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut scan_rate = None;
        let mut grid = None;
        let mut samples = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |d: String| Error::format("scan pattern", format!("line {}: {d}", lineno + 1));
            if let Some((key, value)) = line.split_once('=') {
                let value = value.trim();
                match key.trim() {
                    "kind" => {
                        kind = Some(match value {
                            "raster" => PatternKind::Raster,
                            "lissajous" => PatternKind::Lissajous,
                            "random_access" => PatternKind::RandomAccess,
                            "line" => PatternKind::Line,
                            other => return Err(bad(format!("unknown kind `{other}`"))),
                        })
                    }
                    "scan_rate" => scan_rate = Some(value.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                    "grid" => {
                        let dims: Vec<usize> = value
                            .split_whitespace()
                            .map(|t| t.parse().map_err(|e: std::num::ParseIntError| bad(e.to_string())))
                            .collect::<Result<_>>()?;
                        match dims.as_slice() {
                            &[nx, ny] => grid = Some((nx, ny)),
                            _ => return Err(bad("grid needs two integers".into())),
                        }
                    }
                    other => return Err(bad(format!("unknown key `{other}`"))),
                }
                continue;
            }
            let cols: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>().map_err(|e| bad(e.to_string())))
                .collect::<Result<_>>()?;
            let (theta_deg, phi_deg, fire) = match cols.len() {
                3 => (f64::NAN, f64::NAN, true),
                5 => (cols[3], cols[4], true),
                6 => (cols[3], cols[4], cols[5] != 0.0),
                n => return Err(bad(format!("expected 3, 5 or 6 columns, got {n}"))),
            };
            samples.push(ScanSample {
                t: cols[0],
                v_x: cols[1],
                v_y: cols[2],
                theta_deg,
                phi_deg,
                fire,
            });
        }
        let pattern = ScanPattern {
            samples,
            scan_rate: scan_rate.ok_or_else(|| Error::format("scan pattern", "missing scan_rate"))?,
            grid,
            kind: kind.ok_or_else(|| Error::format("scan pattern", "missing kind"))?,
        };
        pattern.validate()?;
        Ok(pattern)
    }
}

/// Resolves one direction, recording it as unreachable or blanking it.
fn resolve(
    maps: &CalibrationMaps,
    index: usize,
    theta: f64,
    phi: f64,
    policy: ReachPolicy,
    bad: &mut Vec<(usize, f64, f64)>,
) -> (f64, f64, bool) {
    if let Some((vx, vy)) = maps.voltages(theta, phi) {
        return (vx, vy, true);
    }
    if policy == ReachPolicy::Error {
        bad.push((index, theta, phi));
    }
    let v0 = maps.zero_voltage();
    let r = maps.curve.max_radial_voltage().unwrap_or(0.0);
    let theta_ms = spherical_to_ms(
        theta.to_radians().clamp(-1.5, 1.5),
        phi.to_radians().clamp(-1.5, 1.5),
    )
    .map(|m| m.theta_ms)
    .unwrap_or(0.0);
    (v0 + r * theta_ms.cos(), v0 + r * theta_ms.sin(), false)
}

fn finish(bad: Vec<(usize, f64, f64)>) -> Result<()> {
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Unreachable { cells: bad })
    }
}

fn rate_check(scan_rate: f64) -> Result<()> {
    if scan_rate > 0.0 && scan_rate.is_finite() {
        Ok(())
    } else {
        Err(Error::domain("scan_rate", scan_rate, "> 0"))
    }
}

/// Raster parameters beyond the grid and field of view.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RasterOptions {
    /// Centre of the field (degrees).
    pub center: (f64, f64),
    pub policy: ReachPolicy,
}

impl Default for RasterOptions {
    fn default() -> Self {
        Self {
            center: (0.0, 0.0),
            policy: ReachPolicy::Error,
        }
    }
}

/// Row-major raster over pixel centres: `theta` varies along a row, rows step
/// in `phi`. `fov` is the full span `(theta, phi)` in degrees.
pub fn raster(grid: (usize, usize), fov: (f64, f64), scan_rate: f64, maps: &CalibrationMaps) -> Result<ScanPattern> {
    raster_with(grid, fov, scan_rate, maps, RasterOptions::default())
}

pub fn raster_with(
    grid: (usize, usize),
    fov: (f64, f64),
    scan_rate: f64,
    maps: &CalibrationMaps,
    options: RasterOptions,
) -> Result<ScanPattern> {
    let (nx, ny) = grid;
    if nx == 0 || ny == 0 {
        return Err(Error::Config(format!("raster grid {nx}x{ny} must be at least 1x1")));
    }
    rate_check(scan_rate)?;
    let mut bad = Vec::new();
    let mut samples = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let phi = options.center.1 + pixel_center(j, ny, fov.1);
        for i in 0..nx {
            let theta = options.center.0 + pixel_center(i, nx, fov.0);
            let k = j * nx + i;
            let (v_x, v_y, fire) = resolve(maps, k, theta, phi, options.policy, &mut bad);
            samples.push(ScanSample {
                t: k as f64 / scan_rate,
                v_x,
                v_y,
                theta_deg: theta,
                phi_deg: phi,
                fire,
            });
        }
    }
    finish(bad)?;
    Ok(ScanPattern {
        samples,
        scan_rate,
        grid: Some(grid),
        kind: if nx == 1 || ny == 1 {
            PatternKind::Line
        } else {
            PatternKind::Raster
        },
    })
}

/// Offset of pixel `i` of `n` from the field centre for a span of `span`.
pub fn pixel_center(i: usize, n: usize, span: f64) -> f64 {
    ((i as f64 + 0.5) / n as f64 - 0.5) * span
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LissajousParams {
    /// Azimuth amplitude (degrees).
    pub a: f64,
    /// Elevation amplitude (degrees).
    pub b: f64,
    pub omega_theta: f64,
    pub omega_phi: f64,
    pub psi: f64,
    pub duration: f64,
    pub sample_rate: f64,
}

/// `theta = A sin(omega_theta t + psi)`, `phi = B sin(omega_phi t)`.
pub fn lissajous(p: &LissajousParams, maps: &CalibrationMaps) -> Result<ScanPattern> {
    rate_check(p.sample_rate)?;
    if !(p.duration > 0.0) {
        return Err(Error::domain("lissajous duration", p.duration, "> 0"));
    }
    let n = ((p.duration * p.sample_rate).round() as usize).max(1);
    let mut bad = Vec::new();
    let samples = (0..n)
        .map(|k| {
            let t = k as f64 / p.sample_rate;
            let theta = p.a * (p.omega_theta * t + p.psi).sin();
            let phi = p.b * (p.omega_phi * t).sin();
            let (v_x, v_y, fire) = resolve(maps, k, theta, phi, ReachPolicy::Error, &mut bad);
            ScanSample {
                t,
                v_x,
                v_y,
                theta_deg: theta,
                phi_deg: phi,
                fire,
            }
        })
        .collect();
    finish(bad)?;
    Ok(ScanPattern {
        samples,
        scan_rate: p.sample_rate,
        grid: None,
        kind: PatternKind::Lissajous,
    })
}

/// Point list `(theta_deg, phi_deg, dwell_s)`; each point is held for its dwell.
pub fn random_access(points: &[(f64, f64, f64)], maps: &CalibrationMaps) -> Result<ScanPattern> {
    if points.is_empty() {
        return Err(Error::Config("random-access list is empty".into()));
    }
    let mut bad = Vec::new();
    let mut t = 0.0;
    let mut samples = Vec::with_capacity(points.len());
    for (k, &(theta, phi, dwell)) in points.iter().enumerate() {
        if !(dwell > 0.0) {
            return Err(Error::domain("dwell", dwell, "> 0"));
        }
        let (v_x, v_y, fire) = resolve(maps, k, theta, phi, ReachPolicy::Error, &mut bad);
        samples.push(ScanSample {
            t,
            v_x,
            v_y,
            theta_deg: theta,
            phi_deg: phi,
            fire,
        });
        t += dwell;
    }
    finish(bad)?;
    Ok(ScanPattern {
        scan_rate: points.len() as f64 / t,
        samples,
        grid: None,
        kind: PatternKind::RandomAccess,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanLimits {
    /// −3 dB repointing frequency, single axis (Hz).
    pub cutoff_1d: f64,
    /// −3 dB repointing frequency, two axes (Hz).
    pub cutoff_2d: f64,
    /// Acoustic transit time (s).
    pub transit_time: f64,
}

impl Default for ScanLimits {
    fn default() -> Self {
        Self::from_aod(&AodSpec::default())
    }
}

impl ScanLimits {
    pub fn from_aod(aod: &AodSpec) -> Self {
        Self {
            cutoff_1d: 10e6,
            cutoff_2d: 6e6,
            transit_time: transit_limits(aod).transit_time,
        }
    }

    pub fn cutoff(&self, axes: ScanAxes) -> f64 {
        match axes {
            ScanAxes::One => self.cutoff_1d,
            ScanAxes::Two => self.cutoff_2d,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub frequency: f64,
    /// Amplitude response `1 / sqrt(1 + (f/f_c)²)`.
    pub attenuation: f64,
    pub above_transit: bool,
    /// `f > f_c`, i.e. less than half the power is delivered.
    pub above_cutoff: bool,
    /// Steady-state pointing lag of a single-pole response, in shots:
    /// `f / (2π f_c)`.
    pub blur_shots: f64,
}

impl RateReport {
    /// No degradation.
    pub fn ideal(frequency: f64) -> Self {
        Self {
            frequency,
            attenuation: 1.0,
            above_transit: false,
            above_cutoff: false,
            blur_shots: 0.0,
        }
    }

    pub fn attenuation_db(&self) -> f64 {
        20.0 * self.attenuation.log10()
    }
}

/// First-order low-pass model of the repointing response at `frequency`.
pub fn rate_response(frequency: f64, limits: &ScanLimits, axes: ScanAxes) -> RateReport {
    let fc = limits.cutoff(axes);
    let x = frequency / fc;
    RateReport {
        frequency,
        attenuation: 1.0 / (1.0 + x * x).sqrt(),
        above_transit: frequency * limits.transit_time > 1.0,
        above_cutoff: frequency > fc,
        blur_shots: x / std::f64::consts::TAU,
    }
}

pub fn check_rate(pattern: &ScanPattern, limits: &ScanLimits, axes: ScanAxes) -> RateReport {
    rate_response(pattern.scan_rate, limits, axes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{build_maps, CalibrationCurve};

    fn maps() -> CalibrationMaps {
        build_maps(&CalibrationCurve::default(), 0.5).unwrap()
    }

    #[test]
    fn table_frame_rates() {
        let m = maps();
        let p = raster((70, 70), (60.0, 60.0), 5e6, &m).unwrap();
        assert!((p.frame_duration() - 0.98e-3).abs() < 1e-12);
        assert_eq!(p.frame_rate().round(), 1020.0);
        let p = raster((150, 150), (60.0, 60.0), 3e9 / 180.0, &m).unwrap();
        assert!((p.frame_duration() - 1.35e-3).abs() < 1e-12);
        assert_eq!(p.frame_rate().round(), 741.0);
        let p = raster((70, 70), (60.0, 60.0), 3e9 / 180.0, &m).unwrap();
        assert_eq!(p.frame_rate().round(), 3401.0);
        assert!(p.is_uniform(1e-9));
    }

    #[test]
    fn single_row_is_a_line() {
        let p = raster((16, 1), (40.0, 0.0), 1e6, &maps()).unwrap();
        assert_eq!(p.kind, PatternKind::Line);
        let vy0 = p.samples[0].v_y;
        assert!(p.samples.iter().all(|s| (s.v_y - vy0).abs() < 1e-12));
    }

    #[test]
    fn raster_reports_unreachable_cells() {
        let err = raster((4, 4), (150.0, 150.0), 1e6, &maps()).unwrap_err();
        match err {
            Error::Unreachable { cells } => {
                assert!(cells.iter().any(|c| c.0 == 0));
                assert!(cells.len() < 16);
            }
            e => panic!("{e}"),
        }
        let p = raster_with(
            (4, 4),
            (150.0, 150.0),
            1e6,
            &maps(),
            RasterOptions {
                policy: ReachPolicy::Blank,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(!p.samples[0].fire);
        assert!(p.samples[5].fire);
    }

    #[test]
    fn lissajous_examples() {
        let m = maps();
        let diag = lissajous(
            &LissajousParams {
                a: 30.0,
                b: 30.0,
                omega_theta: 1000.0,
                omega_phi: 1000.0,
                psi: 0.0,
                duration: 0.01,
                sample_rate: 1e5,
            },
            &m,
        )
        .unwrap();
        assert_eq!((diag.samples[0].theta_deg, diag.samples[0].phi_deg), (0.0, 0.0));
        assert!(diag.samples.iter().all(|s| (s.theta_deg - s.phi_deg).abs() < 1e-12));

        let w = 2.0 * std::f64::consts::PI * 100.0;
        let p = LissajousParams {
            a: 20.0,
            b: 35.0,
            omega_theta: 2.0 * w,
            omega_phi: 3.0 * w,
            psi: 0.4,
            duration: 0.01,
            sample_rate: 1e6,
        };
        let curve = lissajous(&p, &m).unwrap();
        let max_t = curve.samples.iter().fold(0.0_f64, |a, s| a.max(s.theta_deg.abs()));
        let max_p = curve.samples.iter().fold(0.0_f64, |a, s| a.max(s.phi_deg.abs()));
        assert!(max_t <= 20.0 && max_t > 19.999);
        assert!(max_p <= 35.0 && max_p > 34.999);
        // period 2π/w: 100 Hz → 10 ms = 10_000 samples
        let half = lissajous(&LissajousParams { duration: 0.02, ..p }, &m).unwrap();
        for k in (0..10_000).step_by(97) {
            let (a, b) = (&half.samples[k], &half.samples[k + 10_000]);
            assert!((a.theta_deg - b.theta_deg).abs() < 1e-9 && (a.phi_deg - b.phi_deg).abs() < 1e-9);
        }

        let too_wide = LissajousParams { a: 70.0, ..p };
        assert!(matches!(lissajous(&too_wide, &m), Err(Error::Unreachable { .. })));
    }

    #[test]
    fn random_access_examples() {
        let m = maps();
        let one = random_access(&[(10.0, 5.0, 2e-6)], &m).unwrap();
        assert_eq!(one.len(), 1);
        assert!((one.frame_duration() - 2e-6).abs() < 1e-18);

        let f = 1e6;
        let pts: Vec<_> = (0..8).map(|k| if k % 2 == 0 { (-20.0, 0.0, 1.0 / f) } else { (20.0, 0.0, 1.0 / f) }).collect();
        let sq = random_access(&pts, &m).unwrap();
        assert!(sq.samples.windows(2).all(|w| (w[0].v_x + w[1].v_x).abs() < 1e-9));
        let up = sq.resample(4.0 * f).unwrap();
        assert_eq!(up.len(), 32);
        assert_eq!(up.samples[3].v_x, sq.samples[0].v_x);
        assert_eq!(up.samples[4].v_x, sq.samples[1].v_x);

        let n = 90;
        let ring: Vec<_> = (0..n)
            .map(|k| {
                let a = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                let dir = crate::calibration::ms_to_spherical(30f64.to_radians(), a).unwrap();
                (dir.0.to_degrees(), dir.1.to_degrees(), 1e-6)
            })
            .collect();
        let ring = random_access(&ring, &m).unwrap();
        let r0 = ring.samples[0].v_x.hypot(ring.samples[0].v_y);
        for w in ring.samples.windows(2) {
            assert!((w[1].v_x.hypot(w[1].v_y) - r0).abs() < 1e-9);
            assert!((w[1].v_x - w[0].v_x).hypot(w[1].v_y - w[0].v_y) < 0.1 * r0);
        }
    }

    #[test]
    fn check_rate_examples() {
        let limits = ScanLimits::default();
        let r = rate_response(6e6, &limits, ScanAxes::Two);
        assert!((r.attenuation - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((r.attenuation_db() + 3.0103).abs() < 1e-3);
        let r = rate_response(10e6, &limits, ScanAxes::One);
        assert!((r.attenuation - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(!rate_response(3.33e6, &limits, ScanAxes::Two).above_cutoff);
        let fast = rate_response(40e6, &limits, ScanAxes::One);
        assert!(fast.above_cutoff && fast.above_transit && fast.attenuation > 0.0);
        let mut prev = 1.0;
        for k in 1..200 {
            let a = rate_response(k as f64 * 1e5, &limits, ScanAxes::Two).attenuation;
            assert!(a < prev);
            prev = a;
        }
    }

    #[test]
    fn generated_voltages_stay_in_range() {
        let m = maps();
        let (lo, hi) = m.curve.valid_voltage;
        let p = raster((41, 41), (80.0, 80.0), 1e6, &m).unwrap();
        assert!(p.samples.iter().all(|s| (lo..=hi).contains(&s.v_x) && (lo..=hi).contains(&s.v_y)));
    }

    #[test]
    fn text_round_trip() {
        let p = raster((5, 3), (20.0, 10.0), 2e6, &maps()).unwrap();
        let back = ScanPattern::from_text(&p.to_text()).unwrap();
        assert_eq!(p, back);
        let minimal = "kind = line\nscan_rate = 10\n0 0 0\n0.1 1 0\n";
        let q = ScanPattern::from_text(minimal).unwrap();
        assert_eq!(q.len(), 2);
        assert!(q.samples[1].fire && q.samples[1].theta_deg.is_nan());
        assert!(ScanPattern::from_text("kind = line\nscan_rate = 10\n0 0\n").is_err());
        assert!(ScanPattern::from_text("kind = line\nscan_rate = 10\n0 0 0\n0 1 1\n").is_err());
    }
}
