//! Post-processing of reconstructed frames: angular tracking of a rotating
//! bright feature, rotation speed, feature size, depth clustering, beam
//! divergence regression and a kinematic detectability estimate.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use nalgebra::{Matrix4, Vector4};
use rayon::prelude::*;

use crate::angles;
use crate::error::{Error, Result};
use crate::pipeline::{RangingFrame, TimeSeries};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackPoint {
    /// Mid-frame time (s).
    pub t: f64,
    /// Centre of the fitted Gaussian, in `[0, 2π)`.
    pub angle_center: f64,
    pub angle_sigma: f64,
    /// Coefficient of determination of the fit.
    pub fit_quality: f64,
    /// False when the profile was flat or the fit failed.
    pub valid: bool,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct AngularTrack {
    pub points: Vec<TrackPoint>,
}

impl AngularTrack {
    pub fn valid_points(&self) -> impl Iterator<Item = &TrackPoint> {
        self.points.iter().filter(|p| p.valid)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t_s,angle_rad,sigma_rad,fit_quality,valid\n");
        for p in &self.points {
            let _ = writeln!(s, "{},{},{},{},{}", p.t, p.angle_center, p.angle_sigma, p.fit_quality, p.valid);
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackOptions {
    /// Polar origin in pixel coordinates `(i, j)`; grid centre if `None`.
    pub center: Option<(f64, f64)>,
    pub bins: usize,
    /// Radial band used, in pixels.
    pub min_radius: f64,
    pub max_radius: Option<f64>,
    /// Only hits inside this depth band contribute (m).
    pub depth_window: Option<(f64, f64)>,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self {
            center: None,
            bins: 90,
            min_radius: 1.0,
            max_radius: None,
            depth_window: None,
        }
    }
}

/// Radially integrated intensity per angular bin, normalized to unit peak
/// above the median; `None` if the profile is flat.
pub fn angular_profile(frame: &RangingFrame, options: &TrackOptions) -> Result<Option<Vec<f64>>> {
    let (nx, ny) = frame
        .grid
        .ok_or_else(|| Error::Config("angular tracking needs a gridded frame".into()))?;
    let (cx, cy) = options
        .center
        .unwrap_or(((nx as f64 - 1.0) / 2.0, (ny as f64 - 1.0) / 2.0));
    let r_max = options.max_radius.unwrap_or(nx.min(ny) as f64 / 2.0);
    let n = options.bins.max(8);
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for j in 0..ny {
        for i in 0..nx {
            let (x, y) = (i as f64 - cx, j as f64 - cy);
            let r = x.hypot(y);
            if r < options.min_radius || r > r_max {
                continue;
            }
            let b = ((angles::wrap_two_pi(y.atan2(x)) / TAU * n as f64) as usize).min(n - 1);
            let p = &frame.pixels[j * nx + i];
            let inside = match (p.depth, options.depth_window) {
                (Some(d), Some((lo, hi))) => d >= lo && d <= hi,
                (Some(_), None) => true,
                (None, _) => false,
            };
            sum[b] += if inside { p.intensity } else { 0.0 };
            count[b] += 1;
        }
    }
    let mut profile: Vec<f64> = sum
        .iter()
        .zip(&count)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let mut sorted = profile.clone();
    sorted.sort_by(f64::total_cmp);
    let med = sorted[n / 2];
    for v in profile.iter_mut() {
        *v -= med;
    }
    let peak = profile.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut dev: Vec<f64> = profile.iter().map(|v| v.abs()).collect();
    dev.sort_by(f64::total_cmp);
    let mad = dev[n / 2];
    if !(peak > 0.0) || peak <= 3.0 * 1.4826 * mad {
        return Ok(None);
    }
    for v in profile.iter_mut() {
        *v /= peak;
    }
    Ok(Some(profile))
}

/// Least-squares fit of `a·exp(-(x-mu)²/2s²) + c`; returns `(a, mu, s, c, r²)`.
fn fit_gaussian(x: &[f64], y: &[f64], init: Vector4<f64>) -> Option<(Vector4<f64>, f64)> {
    let model = |p: &Vector4<f64>, xi: f64| {
        let z = (xi - p[1]) / p[2];
        p[0] * (-0.5 * z * z).exp() + p[3]
    };
    let cost = |p: &Vector4<f64>| x.iter().zip(y).map(|(&xi, &yi)| (yi - model(p, xi)).powi(2)).sum::<f64>();
    let mut p = init;
    let mut lambda = 1e-3;
    let mut c = cost(&p);
    for _ in 0..200 {
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for (&xi, &yi) in x.iter().zip(y) {
            let z = (xi - p[1]) / p[2];
            let g = (-0.5 * z * z).exp();
            let jac = Vector4::new(g, p[0] * g * z / p[2], p[0] * g * z * z / p[2], 1.0);
            jtj += jac * jac.transpose();
            jtr += jac * (yi - model(&p, xi));
        }
        let mut damped = jtj;
        for k in 0..4 {
            damped[(k, k)] *= 1.0 + lambda;
        }
        let Some(step) = damped.lu().solve(&jtr) else {
            lambda *= 10.0;
            continue;
        };
        let trial = p + step;
        let tc = if trial[2] > 0.0 { cost(&trial) } else { f64::INFINITY };
        if tc < c {
            let done = (c - tc) <= 1e-14 * c.max(1e-300);
            p = trial;
            c = tc;
            lambda = (lambda / 10.0).max(1e-12);
            if done {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let total = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    let r2 = if total > 0.0 { 1.0 - c / total } else { 0.0 };
    p.iter().all(|v| v.is_finite()).then_some((p, r2))
}

/// Fits a Gaussian to a circular profile, handling wrap by centring the peak.
pub fn fit_circular_gaussian(profile: &[f64]) -> Option<(f64, f64, f64)> {
    let n = profile.len();
    let step = TAU / n as f64;
    let peak = (0..n).max_by(|&a, &b| profile[a].total_cmp(&profile[b]))?;
    let half = n / 2;
    let x: Vec<f64> = (0..n).map(|k| (k as f64 - half as f64) * step).collect();
    let y: Vec<f64> = (0..n).map(|k| profile[(peak + n + k - half) % n]).collect();
    let above = y.iter().filter(|&&v| v >= 0.5 * y[half]).count().max(1);
    let sigma0 = (above as f64 * step / 2.355).max(step / 2.0);
    let (p, r2) = fit_gaussian(&x, &y, Vector4::new(y[half], 0.0, sigma0, 0.0))?;
    let sigma = p[2].abs();
    if p[0] <= 0.0 || sigma > PI / 2.0 || p[1].abs() > PI / 2.0 {
        return None;
    }
    let center = angles::wrap_two_pi((peak as f64 + 0.5) * step + p[1]);
    Some((center, sigma, r2))
}

pub fn track_rotation(series: &TimeSeries, options: &TrackOptions) -> Result<AngularTrack> {
    let points = series
        .frames
        .par_iter()
        .map(|f| {
            let t = f.timestamp + series.frame_period / 2.0;
            let fit = angular_profile(f, options)?.and_then(|p| fit_circular_gaussian(&p));
            Ok(match fit {
                Some((c, s, q)) => TrackPoint {
                    t,
                    angle_center: c,
                    angle_sigma: s,
                    fit_quality: q,
                    valid: true,
                },
                None => TrackPoint {
                    t,
                    angle_center: 0.0,
                    angle_sigma: 0.0,
                    fit_quality: 0.0,
                    valid: false,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AngularTrack { points })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeedEstimate {
    /// Revolutions per second; negative for clockwise rotation.
    pub hz: f64,
    /// One-sigma standard error of `hz`.
    pub uncertainty: f64,
    pub frames_used: usize,
    /// Frame rate below twice the expected speed.
    pub aliasing_warning: bool,
    /// `(unwrapped angle, residual)` pairs of the linear fit (rad).
    pub residuals: Vec<(f64, f64)>,
}

/// Linear fit of the unwrapped track angle against time.
pub fn rotation_speed(track: &AngularTrack, expected_hz: Option<f64>) -> Result<SpeedEstimate> {
    let pts: Vec<&TrackPoint> = track.valid_points().collect();
    if pts.len() < 2 {
        return Err(Error::Fit(format!("{} valid frames, need at least 2", pts.len())));
    }
    let mut unwrapped = Vec::with_capacity(pts.len());
    let mut prev = pts[0].angle_center;
    unwrapped.push(prev);
    for p in &pts[1..] {
        let mut d = p.angle_center - (prev % TAU);
        d = (d + PI).rem_euclid(TAU) - PI;
        if d.abs() > PI * (1.0 - 1e-9) {
            return Err(Error::Fit("per-frame advance reaches π; track is ambiguous".into()));
        }
        prev += d;
        unwrapped.push(prev);
    }
    let span = (unwrapped.last().unwrap() - unwrapped[0]).abs();
    let n = pts.len() as f64;
    let t: Vec<f64> = pts.iter().map(|p| p.t).collect();
    let tm = t.iter().sum::<f64>() / n;
    let am = unwrapped.iter().sum::<f64>() / n;
    let sxx: f64 = t.iter().map(|v| (v - tm).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Fit("track has no time span".into()));
    }
    let sxy: f64 = t.iter().zip(&unwrapped).map(|(a, b)| (a - tm) * (b - am)).sum();
    let slope = sxy / sxx;
    let static_track = span < 1e-9;
    if span < PI / 2.0 && !static_track {
        return Err(Error::Fit(format!("track spans {span:.3} rad, need a quarter revolution")));
    }
    let intercept = am - slope * tm;
    let residuals: Vec<(f64, f64)> = t
        .iter()
        .zip(&unwrapped)
        .map(|(ti, a)| (*a, a - (intercept + slope * ti)))
        .collect();
    let dof = (n - 2.0).max(1.0);
    let s2 = residuals.iter().map(|r| r.1 * r.1).sum::<f64>() / dof;
    let frame_rate = 1.0 / ((t.last().unwrap() - t[0]) / (n - 1.0));
    let aliasing_warning = expected_hz.is_some_and(|f| frame_rate < 2.0 * f.abs());
    if aliasing_warning {
        log::warn!("frame rate {frame_rate:.1} fps is below twice the expected {:.2} Hz", expected_hz.unwrap());
    }
    Ok(SpeedEstimate {
        hz: slope / TAU,
        uncertainty: (s2 / sxx).sqrt() / TAU,
        frames_used: pts.len(),
        aliasing_warning,
        residuals,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSize {
    /// Largest extent of the feature (m).
    pub arc_length: f64,
    pub pixels: usize,
    /// Median depth of the feature (m).
    pub depth: f64,
}

fn components(grid: (usize, usize), member: &[bool], linked: impl Fn(usize, usize) -> bool) -> Vec<Vec<usize>> {
    let (nx, ny) = grid;
    let mut label = vec![usize::MAX; member.len()];
    let mut out = Vec::new();
    for start in 0..member.len() {
        if !member[start] || label[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut comp = vec![start];
        label[start] = id;
        let mut k = 0;
        while k < comp.len() {
            let p = comp[k];
            k += 1;
            let (i, j) = (p % nx, p / nx);
            let mut nb = Vec::with_capacity(4);
            if i > 0 {
                nb.push(p - 1);
            }
            if i + 1 < nx {
                nb.push(p + 1);
            }
            if j > 0 {
                nb.push(p - nx);
            }
            if j + 1 < ny {
                nb.push(p + nx);
            }
            for q in nb {
                if member[q] && label[q] == usize::MAX && linked(p, q) {
                    label[q] = id;
                    comp.push(q);
                }
            }
        }
        out.push(comp);
    }
    out
}

fn median_of(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Extent of the largest 4-connected bright feature inside a depth band.
///
/// Pixels count when their depth lies in `depth_window` and their intensity
/// reaches `threshold_fraction` of the brightest pixel in the band. The
/// extent is the largest angular separation between member pixels plus one
/// pixel pitch, times the feature's median depth.
pub fn feature_size(frame: &RangingFrame, depth_window: (f64, f64), threshold_fraction: f64) -> Result<Option<FeatureSize>> {
    let grid = frame
        .grid
        .ok_or_else(|| Error::Config("feature size needs a gridded frame".into()))?;
    let in_band: Vec<bool> = frame
        .pixels
        .iter()
        .map(|p| p.depth.is_some_and(|d| d >= depth_window.0 && d <= depth_window.1))
        .collect();
    let top = frame
        .pixels
        .iter()
        .zip(&in_band)
        .filter(|(_, &b)| b)
        .map(|(p, _)| p.intensity)
        .fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Ok(None);
    }
    let member: Vec<bool> = frame
        .pixels
        .iter()
        .zip(&in_band)
        .map(|(p, &b)| b && p.intensity >= threshold_fraction * top)
        .collect();
    let Some(best) = components(grid, &member, |_, _| true).into_iter().max_by_key(|c| c.len()) else {
        return Ok(None);
    };
    let dirs: Vec<_> = best
        .iter()
        .map(|&k| {
            let p = &frame.pixels[k];
            angles::unit_vector(p.theta_deg.to_radians(), p.phi_deg.to_radians())
        })
        .collect();
    let mut widest: f64 = 0.0;
    for a in 0..dirs.len() {
        for b in a + 1..dirs.len() {
            widest = widest.max(angles::angle_between(&dirs[a], &dirs[b]));
        }
    }
    let pitch = grid_pitch(frame);
    let depth = median_of(best.iter().filter_map(|&k| frame.pixels[k].depth).collect());
    Ok(Some(FeatureSize {
        arc_length: (widest + pitch) * depth,
        pixels: best.len(),
        depth,
    }))
}

/// Angular spacing of neighbouring pixels along the first grid axis (rad).
fn grid_pitch(frame: &RangingFrame) -> f64 {
    let (nx, ny) = frame.grid.unwrap_or((frame.pixels.len(), 1));
    let (a, b) = if nx > 1 {
        (0, 1)
    } else if ny > 1 {
        (0, nx)
    } else {
        return 0.0;
    };
    let u = |k: usize| {
        let p = &frame.pixels[k];
        angles::unit_vector(p.theta_deg.to_radians(), p.phi_deg.to_radians())
    };
    angles::angle_between(&u(a), &u(b))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    pub pixels: Vec<usize>,
    /// Mean Cartesian position of member hits (m).
    pub centroid: [f64; 3],
    pub median_depth: f64,
    /// Mean commanded angles (degrees).
    pub theta_deg: f64,
    pub phi_deg: f64,
}

/// Groups hits into 4-connected regions whose neighbouring depths differ by
/// at most `depth_step`; regions smaller than `min_pixels` are dropped.
/// Largest first.
pub fn clusters(frame: &RangingFrame, depth_step: f64, min_pixels: usize) -> Vec<Cluster> {
    let grid = frame.grid.unwrap_or((frame.pixels.len(), 1));
    let member: Vec<bool> = frame.pixels.iter().map(|p| p.depth.is_some()).collect();
    let depth = |k: usize| frame.pixels[k].depth.unwrap_or(f64::NAN);
    let mut out: Vec<Cluster> = components(grid, &member, |a, b| (depth(a) - depth(b)).abs() <= depth_step)
        .into_iter()
        .filter(|c| c.len() >= min_pixels)
        .map(|c| {
            let n = c.len() as f64;
            let mut centroid = [0.0; 3];
            let (mut th, mut ph) = (0.0, 0.0);
            for &k in &c {
                let p = &frame.pixels[k];
                let xyz = p.xyz().expect("member pixels are hits");
                for (acc, v) in centroid.iter_mut().zip(xyz) {
                    *acc += v / n;
                }
                th += p.theta_deg / n;
                ph += p.phi_deg / n;
            }
            Cluster {
                median_depth: median_of(c.iter().map(|&k| depth(k)).collect()),
                pixels: c,
                centroid,
                theta_deg: th,
                phi_deg: ph,
            }
        })
        .collect();
    out.sort_by_key(|c| std::cmp::Reverse(c.pixels.len()));
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct DivergenceFit {
    /// Full-angle divergence (rad).
    pub slope: f64,
    /// Fitted beam diameter at z = 0 (m).
    pub intercept: f64,
    pub r_squared: f64,
    /// The waist shrinks with distance; `slope` is then negative.
    pub negative_slope: bool,
}

impl DivergenceFit {
    pub fn slope_deg(&self) -> f64 {
        self.slope.to_degrees()
    }
}

/// Regresses beam diameter against distance. A diameter growing at rate `s`
/// per metre corresponds to a full angle `2·atan(s/2)`.
pub fn divergence_regression(profiles: &[(f64, f64)]) -> Result<DivergenceFit> {
    if profiles.len() < 3 {
        return Err(Error::Fit(format!("{} distances, need at least 3", profiles.len())));
    }
    let n = profiles.len() as f64;
    let zm = profiles.iter().map(|p| p.0).sum::<f64>() / n;
    let wm = profiles.iter().map(|p| p.1).sum::<f64>() / n;
    let szz: f64 = profiles.iter().map(|p| (p.0 - zm).powi(2)).sum();
    if szz <= 1e-30 {
        return Err(Error::Fit("all profiles at the same distance".into()));
    }
    let szw: f64 = profiles.iter().map(|p| (p.0 - zm) * (p.1 - wm)).sum();
    let rate = szw / szz;
    let intercept = wm - rate * zm;
    let sst: f64 = profiles.iter().map(|p| (p.1 - wm).powi(2)).sum();
    let sse: f64 = profiles.iter().map(|p| (p.1 - intercept - rate * p.0).powi(2)).sum();
    let slope = 2.0 * (rate / 2.0).atan();
    if slope < 0.0 {
        log::warn!("negative divergence slope {slope:.3e} rad");
    }
    Ok(DivergenceFit {
        slope,
        intercept,
        r_squared: if sst > 0.0 { 1.0 - sse / sst } else { 1.0 },
        negative_slope: slope < 0.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detectability {
    /// Straight path across the field at `range` (m).
    pub chord: f64,
    pub crossing_time: f64,
    pub n_events: u64,
    /// Speed at which only `min_events` frames would still be captured (m/s).
    pub max_speed: f64,
}

/// Crossing a 120° field at 15 m and 1234 km/h gives 77 frames at 980 µs;
/// requiring 4 frames then allows about 23.7 Mm/h. A figure of 47 Mm/h
/// corresponds to requiring only 2 frames, not 4.
pub const DETECTABILITY_NOTE: &str = "max_speed = speed * n_events / min_events; 47 Mm/h corresponds to min_events = 2, while 4 events give about 23.7 Mm/h";

/// Frames captured while a target crosses the field of view.
pub fn detectability(target_speed: f64, range: f64, fov_deg: f64, frame_period: f64, min_events: u32) -> Result<Detectability> {
    for (name, v) in [("target_speed", target_speed), ("range", range), ("frame_period", frame_period)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::domain(name, v, "> 0"));
        }
    }
    if !(0.0..=360.0).contains(&fov_deg) {
        return Err(Error::domain("fov", fov_deg, "[0, 360] degrees"));
    }
    if min_events == 0 {
        return Err(Error::domain("min_events", 0.0, ">= 1"));
    }
    let chord = 2.0 * range * (fov_deg.to_radians() / 2.0).sin();
    let crossing_time = chord / target_speed;
    let n_events = (crossing_time / frame_period).floor() as u64;
    Ok(Detectability {
        chord,
        crossing_time,
        n_events,
        max_speed: target_speed * n_events as f64 / min_events as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::Pixel;
    use crate::signal::DetectorId;

    fn grid_frame(n: usize, span_deg: f64, f: impl Fn(f64, f64) -> (Option<f64>, f64)) -> RangingFrame {
        let mut pixels = Vec::new();
        for j in 0..n {
            for i in 0..n {
                let x = i as f64 - (n as f64 - 1.0) / 2.0;
                let y = j as f64 - (n as f64 - 1.0) / 2.0;
                let (depth, intensity) = f(x, y);
                pixels.push(Pixel {
                    theta_deg: crate::scanpattern::pixel_center(i, n, span_deg),
                    phi_deg: crate::scanpattern::pixel_center(j, n, span_deg),
                    depth,
                    intensity,
                });
            }
        }
        RangingFrame {
            pixels,
            grid: Some((n, n)),
            timestamp: 0.0,
            detector: DetectorId::A,
            max_range: 30.0,
        }
    }

    fn spot_series(hz: f64, fps: f64, frames: usize, scale: f64) -> TimeSeries {
        let frames = (0..frames)
            .map(|k| {
                let t = k as f64 / fps;
                let a = TAU * hz * (t + 0.5 / fps);
                let mut f = grid_frame(81, 10.0, |x, y| {
                    let (sx, sy) = (25.0 * a.cos(), 25.0 * a.sin());
                    let r2 = (x - sx).powi(2) + (y - sy).powi(2);
                    (Some(1.0), scale * (0.1 + (-r2 / 32.0).exp()))
                });
                f.timestamp = t;
                f
            })
            .collect();
        TimeSeries {
            frames,
            frame_period: 1.0 / fps,
        }
    }

    #[test]
    fn spot_at_one_hundred_hz() {
        let s = spot_series(100.0, 1020.0, 40, 1.0);
        let track = track_rotation(&s, &TrackOptions::default()).unwrap();
        assert!(track.points.iter().all(|p| p.valid));
        let step = TAU * 100.0 / 1020.0;
        for w in track.points.windows(2) {
            let d = (w[1].angle_center - w[0].angle_center).rem_euclid(TAU);
            assert!((d - step).abs() < 0.03, "{d} vs {step}");
        }
        let v = rotation_speed(&track, Some(100.0)).unwrap();
        assert!((v.hz - 100.0).abs() < 0.2, "{}", v.hz);
        assert!(!v.aliasing_warning);
    }

    #[test]
    fn speed_invariant_under_scaling_and_reversal() {
        let a = rotation_speed(&track_rotation(&spot_series(90.0, 1020.0, 30, 1.0), &TrackOptions::default()).unwrap(), None).unwrap();
        let b = rotation_speed(&track_rotation(&spot_series(90.0, 1020.0, 30, 37.0), &TrackOptions::default()).unwrap(), None).unwrap();
        assert!((a.hz - b.hz).abs() < 1e-9);
        let r = rotation_speed(&track_rotation(&spot_series(-90.0, 1020.0, 30, 1.0), &TrackOptions::default()).unwrap(), None).unwrap();
        assert!((r.hz + 90.0).abs() < 0.3, "{}", r.hz);
    }

    #[test]
    fn static_spot_has_zero_speed() {
        let v = rotation_speed(&track_rotation(&spot_series(0.0, 1000.0, 10, 1.0), &TrackOptions::default()).unwrap(), None).unwrap();
        assert!(v.hz.abs() < 1e-9);
    }

    #[test]
    fn flat_frames_are_flagged() {
        let mut s = spot_series(50.0, 1000.0, 12, 1.0);
        s.frames[3] = grid_frame(81, 10.0, |_, _| (Some(1.0), 0.5));
        s.frames[3].timestamp = 3.0 / 1000.0;
        let track = track_rotation(&s, &TrackOptions::default()).unwrap();
        assert!(!track.points[3].valid);
        assert_eq!(track.valid_points().count(), 11);
        let v = rotation_speed(&track, None).unwrap();
        assert_eq!(v.frames_used, 11);
        assert!((v.hz - 50.0).abs() < 0.2);
    }

    #[test]
    fn undersampled_rotation_is_refused_or_flagged() {
        let s = spot_series(100.0, 150.0, 20, 1.0);
        let track = track_rotation(&s, &TrackOptions::default()).unwrap();
        let v = rotation_speed(&track, Some(100.0)).unwrap();
        assert!(v.aliasing_warning);
        let s = spot_series(100.0, 200.0, 20, 1.0);
        let track = track_rotation(&s, &TrackOptions::default()).unwrap();
        assert!(rotation_speed(&track, Some(100.0)).is_err());
    }

    #[test]
    fn feature_size_of_bar_and_policies() {
        // 10 x 2 pixel bar, 0.2 degree pitch, at 0.7 m
        let f = grid_frame(50, 10.0, |x, y| {
            let bar = (-4.5..=4.5).contains(&x) && (-0.5..=0.5).contains(&y);
            if bar || (x > 22.0 && y > 22.0) {
                (Some(0.7), 2.0)
            } else {
                (Some(0.7), 0.3)
            }
        });
        let s = feature_size(&f, (0.6, 0.8), 0.5).unwrap().unwrap();
        assert_eq!(s.pixels, 20);
        let oracle = 10.0 * 0.2f64.to_radians() * 0.7;
        assert!((s.arc_length - oracle).abs() < 0.2f64.to_radians() * 0.7 * 0.1, "{}", s.arc_length);

        assert!(feature_size(&f, (2.0, 3.0), 0.5).unwrap().is_none());

        let full = grid_frame(1, 1.0, |_, _| (Some(1.0), 1.0));
        assert!(feature_size(&full, (0.0, 2.0), 0.5).unwrap().is_some());
    }

    #[test]
    fn line_feature_spans_field() {
        let n = 30;
        let pixels = (0..n)
            .map(|i| Pixel {
                theta_deg: crate::scanpattern::pixel_center(i, n, 30.0),
                phi_deg: 0.0,
                depth: Some(2.0),
                intensity: 1.0,
            })
            .collect();
        let f = RangingFrame {
            pixels,
            grid: Some((n, 1)),
            timestamp: 0.0,
            detector: DetectorId::A,
            max_range: 30.0,
        };
        let s = feature_size(&f, (1.0, 3.0), 0.5).unwrap().unwrap();
        assert!((s.arc_length - 30f64.to_radians() * 2.0).abs() < 1e-9);
    }

    #[test]
    fn clusters_split_on_depth_jumps() {
        let f = grid_frame(20, 20.0, |x, _| {
            if x < -3.0 {
                (Some(1.5), 1.0)
            } else if x > 3.0 {
                (Some(1.5 + 0.01 * x), 1.0)
            } else {
                (None, 0.0)
            }
        });
        let c = clusters(&f, 0.05, 5);
        assert_eq!(c.len(), 2);
        assert!(c.iter().all(|k| k.pixels.len() == 140));
    }

    #[test]
    fn divergence_recovers_cone() {
        let full = 4.5f64.to_radians();
        let z = [0.055, 0.08, 0.13, 0.155];
        let data: Vec<(f64, f64)> = z.iter().map(|&z| (z, 60e-6 + 2.0 * z * (full / 2.0).tan())).collect();
        let fit = divergence_regression(&data).unwrap();
        assert!((fit.slope_deg() - 4.5).abs() < 0.01);
        assert!((fit.intercept - 60e-6).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);

        let flat: Vec<(f64, f64)> = z.iter().map(|&z| (z, 1e-3)).collect();
        assert!(divergence_regression(&flat).unwrap().slope.abs() < 1e-12);

        let shrinking: Vec<(f64, f64)> = z.iter().map(|&z| (z, 1e-3 - z * 1e-3)).collect();
        assert!(divergence_regression(&shrinking).unwrap().negative_slope);

        assert!(divergence_regression(&data[..2]).is_err());
        assert!(divergence_regression(&[(0.1, 1.0), (0.1, 2.0), (0.1, 3.0)]).is_err());
    }

    #[test]
    fn detectability_examples() {
        let speed = 1234.0 / 3.6;
        let d = detectability(speed, 15.0, 120.0, 980e-6, 4).unwrap();
        assert!((d.chord - 25.98).abs() < 0.01);
        assert!((d.crossing_time - 0.0758).abs() < 0.0001);
        assert_eq!(d.n_events, 77);
        assert!((d.max_speed * 3.6 / 1e3 - 23.75).abs() < 0.05);
        let two = detectability(speed, 15.0, 120.0, 980e-6, 2).unwrap();
        assert!((two.max_speed * 3.6 / 1e3 - 47.5).abs() < 0.1);

        assert_eq!(detectability(speed, 15.0, 0.0, 980e-6, 4).unwrap().n_events, 0);
        let half = detectability(speed, 15.0, 120.0, 490e-6, 4).unwrap();
        assert!((half.n_events as i64 - 2 * d.n_events as i64).abs() <= 1);
    }
}
