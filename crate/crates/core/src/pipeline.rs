//! Time-of-flight reconstruction: fold a record into shots × samples, take
//! the first difference of each row, pick the leading edge and convert it
//! to depth along the commanded direction.
//!
//! # Exports
//!
//! Frame CSV, one row per pixel, empty depth for a miss:
//!
//! ```text
//! pixel_index,theta_deg,phi_deg,depth_m,intensity
//! 0,-29.5,1,2.4013,0.0132
//! 1,-29.1,1,,0.0004
//! ```
//!
//! Point cloud, ASCII XYZI, hits only, space separated:
//!
//! ```text
//! -1.1828 0.0419 2.0487 0.0132
//! ```

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angles;
use crate::error::{Error, Result};
use crate::optics::OpticsChain;
use crate::scanpattern::ScanPattern;
use crate::signal::{samples_per_period, DetectorId, WaveformRecord};
use crate::SPEED_OF_LIGHT;

/// Scale from median absolute deviation to sigma for Gaussian noise.
const MAD_TO_SIGMA: f64 = 1.4826;

#[derive(Clone, Debug, PartialEq)]
pub struct FoldedMatrix {
    data: Vec<f32>,
    rows: usize,
    cols: usize,
    pub sample_rate: f64,
    pub f_rep: f64,
}

impl FoldedMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn flatten(self) -> Vec<f32> {
        self.data
    }
}

pub fn fold(record: &WaveformRecord) -> Result<FoldedMatrix> {
    fold_samples(record.samples.clone(), record.sample_rate, record.f_rep)
}

pub fn fold_samples(samples: Vec<f32>, sample_rate: f64, f_rep: f64) -> Result<FoldedMatrix> {
    let cols = samples_per_period(sample_rate, f_rep)?;
    if !samples.len().is_multiple_of(cols) {
        return Err(Error::Length(format!(
            "record of {} samples is not a multiple of {cols} samples per period",
            samples.len()
        )));
    }
    Ok(FoldedMatrix {
        rows: samples.len() / cols,
        cols,
        data: samples,
        sample_rate,
        f_rep,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Edge at the midpoint of the winning difference (raw sample lattice).
    None,
    /// Vertex of a parabola through the peak and its neighbours.
    #[default]
    Parabolic,
    /// Centre of mass of the peak and its neighbours.
    Centroid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractOptions {
    /// Detection threshold in multiples of the robust noise sigma of the derivative.
    pub threshold_k: f64,
    pub interpolation: Interpolation,
    /// Samples after the edge searched for the intensity maximum.
    pub intensity_window: usize,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            threshold_k: 5.0,
            interpolation: Interpolation::Parabolic,
            intensity_window: 16,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    /// Round-trip time (s), `None` for a miss.
    pub tof: Option<f64>,
    /// Peak amplitude after the edge above the row median; 0 for a miss.
    pub intensity: f64,
}

impl Detection {
    pub const MISS: Detection = Detection {
        tof: None,
        intensity: 0.0,
    };
}

fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (_, m, _) = values.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    let upper = *m;
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Leading edge of one row.
pub fn extract_row(row: &[f32], sample_rate: f64, options: &ExtractOptions) -> Detection {
    if row.len() < 3 {
        return Detection::MISS;
    }
    // diff[j] = row[j + 1] - row[j]
    let diff: Vec<f64> = row.windows(2).map(|w| w[1] as f64 - w[0] as f64).collect();
    let mut scratch = diff.clone();
    let center = median(&mut scratch);
    for v in scratch.iter_mut() {
        *v = (*v - center).abs();
    }
    let sigma = MAD_TO_SIGMA * median(&mut scratch);
    let threshold = center + options.threshold_k * sigma;

    let Some(start) = diff.iter().position(|&d| d > threshold && d > 0.0) else {
        return Detection::MISS;
    };
    let mut peak = start;
    for (j, &d) in diff.iter().enumerate().skip(start) {
        if d <= threshold {
            break;
        }
        if d > diff[peak] {
            peak = j;
        }
    }

    let delta = if peak == 0 || peak + 1 >= diff.len() {
        0.0
    } else {
        let (l, c, r) = (diff[peak - 1], diff[peak], diff[peak + 1]);
        match options.interpolation {
            Interpolation::None => 0.0,
            Interpolation::Parabolic => {
                let den = l - 2.0 * c + r;
                if den < 0.0 {
                    (0.5 * (l - r) / den).clamp(-0.5, 0.5)
                } else {
                    0.0
                }
            }
            Interpolation::Centroid => {
                let (l, r) = (l.max(0.0), r.max(0.0));
                ((r - l) / (l + c + r)).clamp(-0.5, 0.5)
            }
        }
    };
    // the difference diff[peak] straddles samples peak and peak + 1
    let edge = peak as f64 + 0.5 + delta;

    let mut values: Vec<f64> = row.iter().map(|&v| v as f64).collect();
    let baseline = median(&mut values);
    let hi = (peak + 1 + options.intensity_window).min(row.len());
    let top = row[peak..hi].iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v as f64));
    Detection {
        tof: Some(edge / sample_rate),
        intensity: (top - baseline).max(0.0),
    }
}

/// Per-row leading edges, in row order.
pub fn extract_tof(matrix: &FoldedMatrix, options: &ExtractOptions) -> Vec<Detection> {
    matrix
        .as_slice()
        .par_chunks(matrix.cols)
        .map(|row| extract_row(row, matrix.sample_rate, options))
        .collect()
}

/// Direction assigned to each pixel of a frame.
#[derive(Clone, Copy, Debug)]
pub enum AngleSource<'a> {
    /// The pattern's commanded angles (first-order beams).
    Commanded,
    /// The undeflected beam for each drive (zeroth-order beams).
    ZeroOrder(&'a OpticsChain),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pixel {
    pub theta_deg: f64,
    pub phi_deg: f64,
    /// Depth along the beam (m), `None` for a miss.
    pub depth: Option<f64>,
    pub intensity: f64,
}

impl Pixel {
    pub fn xyz(&self) -> Option<[f64; 3]> {
        self.depth.map(|d| {
            let u = angles::unit_vector(self.theta_deg.to_radians(), self.phi_deg.to_radians());
            [d * u.x, d * u.y, d * u.z]
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RangingFrame {
    pub pixels: Vec<Pixel>,
    /// `(n_x, n_y)`, row-major, when the pattern is a grid.
    pub grid: Option<(usize, usize)>,
    /// Start time of the frame (s).
    pub timestamp: f64,
    pub detector: DetectorId,
    pub max_range: f64,
}

impl RangingFrame {
    pub fn hits(&self) -> usize {
        self.pixels.iter().filter(|p| p.depth.is_some()).count()
    }

    pub fn pixel_at(&self, i: usize, j: usize) -> Option<&Pixel> {
        let (nx, ny) = self.grid?;
        (i < nx && j < ny).then(|| &self.pixels[j * nx + i])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("pixel_index,theta_deg,phi_deg,depth_m,intensity\n");
        for (i, p) in self.pixels.iter().enumerate() {
            let depth = p.depth.map(|d| format!("{d}")).unwrap_or_default();
            let _ = writeln!(s, "{i},{},{},{depth},{}", p.theta_deg, p.phi_deg, p.intensity);
        }
        s
    }

    pub fn from_csv(text: &str, detector: DetectorId, max_range: f64) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        if header.trim() != "pixel_index,theta_deg,phi_deg,depth_m,intensity" {
            return Err(Error::format("frame csv", format!("unexpected header {header:?}")));
        }
        let mut pixels = Vec::new();
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 5 {
                return Err(Error::format("frame csv", format!("line {}: expected 5 fields", n + 2)));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::format("frame csv", format!("line {}: {e}", n + 2)))
            };
            pixels.push(Pixel {
                theta_deg: num(f[1])?,
                phi_deg: num(f[2])?,
                depth: if f[3].is_empty() { None } else { Some(num(f[3])?) },
                intensity: num(f[4])?,
            });
        }
        Ok(RangingFrame {
            pixels,
            grid: None,
            timestamp: 0.0,
            detector,
            max_range,
        })
    }

    pub fn to_xyzi(&self) -> String {
        let mut s = String::new();
        for p in &self.pixels {
            if let Some([x, y, z]) = p.xyz() {
                let _ = writeln!(s, "{x} {y} {z} {}", p.intensity);
            }
        }
        s
    }
}

/// Builds a frame from per-shot detections of one pass over `pattern`.
pub fn assemble(
    detections: &[Detection],
    pattern: &ScanPattern,
    source: AngleSource<'_>,
    detector: DetectorId,
    f_rep: f64,
    timestamp: f64,
) -> Result<RangingFrame> {
    if detections.len() != pattern.len() {
        return Err(Error::Length(format!(
            "{} detections for a pattern of {} pixels",
            detections.len(),
            pattern.len()
        )));
    }
    let max_range = crate::max_range(f_rep);
    let pixels = detections
        .iter()
        .zip(&pattern.samples)
        .map(|(det, s)| {
            let (theta_deg, phi_deg) = match source {
                AngleSource::Commanded => (s.theta_deg, s.phi_deg),
                AngleSource::ZeroOrder(chain) => {
                    let b = chain.zero_order(s.v_x, s.v_y);
                    (b.direction_theta.to_degrees(), b.direction_phi.to_degrees())
                }
            };
            let depth = det
                .tof
                .map(|t| SPEED_OF_LIGHT * t / 2.0)
                .filter(|&d| s.fire && d > 0.0 && d <= max_range);
            Pixel {
                theta_deg,
                phi_deg,
                depth,
                intensity: if depth.is_some() { det.intensity } else { 0.0 },
            }
        })
        .collect();
    Ok(RangingFrame {
        pixels,
        grid: pattern.grid,
        timestamp,
        detector,
        max_range,
    })
}

/// Reconstructs one record covering exactly one pass over `pattern`.
pub fn reconstruct(
    record: &WaveformRecord,
    pattern: &ScanPattern,
    source: AngleSource<'_>,
    options: &ExtractOptions,
) -> Result<RangingFrame> {
    let m = fold(record)?;
    let det = extract_tof(&m, options);
    assemble(&det, pattern, source, record.detector, record.f_rep, record.t0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    pub frames: Vec<RangingFrame>,
    /// Seconds between frame starts.
    pub frame_period: f64,
}

impl TimeSeries {
    pub fn fps(&self) -> f64 {
        1.0 / self.frame_period
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.timestamp).collect()
    }
}

/// Frame rate of a pattern of `pixels` shots at `scan_rate`.
pub fn frame_rate(scan_rate: f64, pixels: usize) -> f64 {
    scan_rate / pixels as f64
}

/// Splits a record spanning several passes over `pattern` into frames.
pub fn frames(
    record: &WaveformRecord,
    pattern: &ScanPattern,
    source: AngleSource<'_>,
    options: &ExtractOptions,
) -> Result<TimeSeries> {
    let m = fold(record)?;
    let per_frame = pattern.len();
    if per_frame == 0 {
        return Err(Error::Config("empty scan pattern".into()));
    }
    let whole = m.rows() / per_frame;
    if m.rows() % per_frame != 0 {
        log::warn!(
            "dropping partial trailing frame: {} of {per_frame} shots",
            m.rows() % per_frame
        );
    }
    let det = extract_tof(&m, options);
    let period = per_frame as f64 / record.f_rep;
    let frames = (0..whole)
        .map(|k| {
            assemble(
                &det[k * per_frame..(k + 1) * per_frame],
                pattern,
                source,
                record.detector,
                record.f_rep,
                record.t0 + k as f64 * period,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TimeSeries {
        frames,
        frame_period: period,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step_row(n: usize, edge: usize, height: f32) -> Vec<f32> {
        (0..n).map(|i| if i >= edge { height } else { 0.0 }).collect()
    }

    #[test]
    fn fold_shapes_and_round_trip() {
        let m = fold_samples(vec![0.5; 600], 3e9, 5e6).unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 600));

        let data: Vec<f32> = (0..4900 * 600).map(|i| (i % 977) as f32).collect();
        let m = fold_samples(data.clone(), 3e9, 5e6).unwrap();
        assert_eq!((m.rows(), m.cols()), (4900, 600));
        assert_eq!(m.row(17)[3], data[17 * 600 + 3]);
        assert_eq!(m.flatten(), data);

        assert!(matches!(fold_samples(vec![0.0; 601], 3e9, 5e6), Err(Error::Length(_))));
    }

    #[test]
    fn clean_step_at_thirty_samples() {
        let row = step_row(600, 30, 1.0);
        for interp in [Interpolation::None, Interpolation::Parabolic, Interpolation::Centroid] {
            let o = ExtractOptions {
                interpolation: interp,
                ..Default::default()
            };
            let tof = extract_row(&row, 3e9, &o).tof.unwrap();
            // a hard step between samples 29 and 30 is centred at 29.5
            assert!((tof - 10e-9).abs() <= 1.0 / 3e9, "{tof}");
        }
    }

    #[test]
    fn flat_row_is_miss() {
        assert_eq!(extract_row(&[0.0; 600], 3e9, &ExtractOptions::default()), Detection::MISS);
    }

    #[test]
    fn first_echo_wins() {
        let mut row = vec![0.0_f32; 600];
        for (i, v) in row.iter_mut().enumerate() {
            if i >= 100 {
                *v += 0.2;
            }
            if i >= 300 {
                *v += 1.0;
            }
        }
        let d = extract_row(&row, 3e9, &ExtractOptions::default());
        let edge = d.tof.unwrap() * 3e9;
        assert!((edge - 99.5).abs() < 0.51, "{edge}");
    }

    #[test]
    fn interpolation_recovers_sub_sample_edges() {
        // Gaussian derivative centred between samples
        let sigma: f64 = 0.6;
        for k in 0..10 {
            let p = 200.0 + k as f64 * 0.1;
            let row: Vec<f32> = (0..600)
                .map(|i| (0.5 * (1.0 + libm::erf((i as f64 - p) / (sigma * 2f64.sqrt())))) as f32)
                .collect();
            for (interp, tol) in [(Interpolation::Parabolic, 0.2), (Interpolation::Centroid, 0.2), (Interpolation::None, 0.5)] {
                let o = ExtractOptions {
                    interpolation: interp,
                    ..Default::default()
                };
                let e = extract_row(&row, 3e9, &o).tof.unwrap() * 3e9;
                assert!((e - p).abs() <= tol + 1e-6, "{interp:?} {e} vs {p}");
            }
        }
    }

    #[test]
    fn intensity_is_height_above_baseline() {
        let row: Vec<f32> = (0..600).map(|i| 0.1 + if (50..60).contains(&i) { 0.7 } else { 0.0 }).collect();
        let d = extract_row(&row, 3e9, &ExtractOptions::default());
        assert!((d.intensity - 0.7).abs() < 1e-6);
    }

    #[test]
    fn frame_rates_of_table_rows() {
        assert!((frame_rate(3e9 / 180.0, 150 * 150) - 740.74).abs() < 0.01);
        assert!((frame_rate(5e6, 70 * 70) - 1020.4).abs() < 0.1);
        assert!((frame_rate(3e9 / 180.0, 70 * 70) - 3401.4).abs() < 0.1);
        assert!((70.0 * 70.0 / 5e6 - 980e-6_f64).abs() < 1e-9);
        assert!((70.0 * 70.0 / (3e9 / 180.0) - 294e-6_f64).abs() < 1e-9);
    }

    #[test]
    fn csv_round_trip_keeps_misses() {
        let frame = RangingFrame {
            pixels: vec![
                Pixel {
                    theta_deg: -1.5,
                    phi_deg: 2.0,
                    depth: Some(2.25),
                    intensity: 0.5,
                },
                Pixel {
                    theta_deg: 0.5,
                    phi_deg: 2.0,
                    depth: None,
                    intensity: 0.0,
                },
            ],
            grid: None,
            timestamp: 0.0,
            detector: DetectorId::A,
            max_range: 29.0,
        };
        let csv = frame.to_csv();
        assert!(csv.lines().nth(2).unwrap().contains(",,"));
        assert_eq!(RangingFrame::from_csv(&csv, DetectorId::A, 29.0).unwrap(), frame);
        assert_eq!(frame.to_xyzi().lines().count(), 1);
    }
}
