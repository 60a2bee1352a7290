//! Voltage ↔ angle calibration chain.
//!
//! A cubic maps the drive voltage to the radial deflection angle `alpha`
//! (degrees). Two-axis drives are handled in polar form around the
//! zero-deflection voltage `v0`:
//!
//! ```text
//! r = |(V_x - v0, V_y - v0)|,  θ_MS = atan2(V_y - v0, V_x - v0)
//! θ = atan(tan α cos θ_MS),     φ = asin(sin α sin θ_MS)
//! ```
//!
//! Curves and maps serialize to plain text; see [`CalibrationCurve::to_text`]
//! and [`CalibrationMaps::to_csv_grid`].

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::angles::wrap_two_pi;
use crate::error::{Error, Result};

const BISECTION_MAX_ITER: usize = 50;
const BISECTION_TOL_V: f64 = 1e-10;

/// Cubic voltage-to-angle law, `alpha = c0 + c1 V + c2 V² + c3 V³` in degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCurve {
    pub coefficients: [f64; 4],
    pub valid_voltage: (f64, f64),
    pub valid_angle: (f64, f64),
    /// RMS of the fit residuals (degrees).
    pub residual_rms: f64,
}

impl Default for CalibrationCurve {
    /// The ideal chain for a ±5 V deflector, sampled over ±4.3 V.
    fn default() -> Self {
        Self::ideal_chain(5.0, 4.3).expect("ideal chain fit is well posed")
    }
}

/// Chebyshev–Lobatto nodes on `[-span, span]`.
fn lobatto(span: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |k| -span * (PI * k as f64 / (n - 1) as f64).cos())
}

/// Samples of the ideal AOD + metasurface chain, `alpha = asin(V / v_half)`.
pub fn ideal_chain_samples(v_half: f64, span: f64, n: usize) -> Vec<(f64, f64)> {
    lobatto(span, n)
        .map(|v| (v, (v / v_half).clamp(-1.0, 1.0).asin().to_degrees()))
        .collect()
}

/// Least-squares cubic fit of `(voltage, angle_deg)` samples.
pub fn fit_curve(samples: &[(f64, f64)]) -> Result<CalibrationCurve> {
    if samples.len() < 5 {
        return Err(Error::Fit(format!("need at least 5 samples, got {}", samples.len())));
    }
    if samples.iter().any(|(v, a)| !v.is_finite() || !a.is_finite()) {
        return Err(Error::Fit("non-finite sample".into()));
    }
    let has_neg = samples.iter().any(|s| s.1 < 0.0);
    let has_pos = samples.iter().any(|s| s.1 > 0.0);
    if !(has_neg && has_pos) {
        return Err(Error::Fit("samples must span both deflection signs".into()));
    }

    let scale = samples.iter().fold(0.0_f64, |m, s| m.max(s.0.abs()));
    if scale == 0.0 {
        return Err(Error::Fit("all sample voltages are zero".into()));
    }
    let n = samples.len();
    let a = DMatrix::from_fn(n, 4, |i, j| (samples[i].0 / scale).powi(j as i32));
    let b = DVector::from_iterator(n, samples.iter().map(|s| s.1));
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smin <= smax * 1e-12 {
        return Err(Error::Fit(format!("rank-deficient sample set (condition {:.3e})", smax / smin)));
    }
    let x = svd
        .solve(&b, smax * 1e-14)
        .map_err(|e| Error::Fit(e.to_string()))?;
    let coefficients = [x[0], x[1] / scale, x[2] / scale.powi(2), x[3] / scale.powi(3)];
    let residual = &a * &x - &b;
    let residual_rms = (residual.norm_squared() / n as f64).sqrt();

    let vmin = samples.iter().fold(f64::INFINITY, |m, s| m.min(s.0));
    let vmax = samples.iter().fold(f64::NEG_INFINITY, |m, s| m.max(s.0));
    let mut curve = CalibrationCurve {
        coefficients,
        valid_voltage: (vmin, vmax),
        valid_angle: (0.0, 0.0),
        residual_rms,
    };
    curve.valid_angle = (curve.eval(vmin), curve.eval(vmax));
    Ok(curve)
}

impl CalibrationCurve {
    /// Fit to the ideal chain of a deflector with half drive span `v_half`,
    /// sampled at 21 Lobatto nodes over `±span`.
    pub fn ideal_chain(v_half: f64, span: f64) -> Result<Self> {
        if !(span > 0.0 && span <= v_half) {
            return Err(Error::domain("calibration span", span, format!("(0, {v_half}]")));
        }
        fit_curve(&ideal_chain_samples(v_half, span, 21))
    }

    pub fn eval(&self, v: f64) -> f64 {
        let c = &self.coefficients;
        c[0] + v * (c[1] + v * (c[2] + v * c[3]))
    }

    pub fn derivative(&self, v: f64) -> f64 {
        let c = &self.coefficients;
        c[1] + v * (2.0 * c[2] + v * 3.0 * c[3])
    }

    /// True when the curve is strictly increasing over its valid voltage range.
    pub fn is_monotonic(&self) -> bool {
        let (a, b) = self.valid_voltage;
        let c = &self.coefficients;
        let mut min_slope = self.derivative(a).min(self.derivative(b));
        if c[3] != 0.0 {
            let vertex = -c[2] / (3.0 * c[3]);
            if vertex > a && vertex < b {
                min_slope = min_slope.min(self.derivative(vertex));
            }
        }
        b > a && min_slope > 0.0
    }

    pub fn check_monotonic(&self) -> Result<()> {
        if self.is_monotonic() {
            Ok(())
        } else {
            Err(Error::NonMonotonic {
                min: self.valid_voltage.0,
                max: self.valid_voltage.1,
            })
        }
    }

    /// Voltage producing `alpha_deg`, by bisection on the valid range.
    /// `None` outside the valid angle range.
    pub fn invert(&self, alpha_deg: f64) -> Option<f64> {
        let (mut lo, mut hi) = self.valid_voltage;
        let (flo, fhi) = (self.eval(lo) - alpha_deg, self.eval(hi) - alpha_deg);
        if flo > 0.0 || fhi < 0.0 || !alpha_deg.is_finite() {
            return None;
        }
        for _ in 0..BISECTION_MAX_ITER {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid) < alpha_deg {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < BISECTION_TOL_V {
                break;
            }
        }
        Some(0.5 * (lo + hi))
    }

    /// Voltage of zero deflection.
    pub fn zero_voltage(&self) -> Result<f64> {
        self.invert(0.0)
            .ok_or_else(|| Error::Fit("curve does not cross zero deflection".into()))
    }

    /// Largest radial drive about the zero voltage that keeps both axes in range.
    pub fn max_radial_voltage(&self) -> Result<f64> {
        let v0 = self.zero_voltage()?;
        Ok((self.valid_voltage.1 - v0).min(v0 - self.valid_voltage.0))
    }

    /// Largest deflection reachable in every azimuth (degrees).
    pub fn max_angle(&self) -> Result<f64> {
        Ok(self.eval(self.zero_voltage()? + self.max_radial_voltage()?))
    }

    pub fn to_text(&self) -> String {
        let c = &self.coefficients;
        let mut s = String::from("# metalidar calibration curve v1\n");
        let _ = writeln!(s, "coefficients = {} {} {} {}", c[0], c[1], c[2], c[3]);
        let _ = writeln!(s, "valid_voltage = {} {}", self.valid_voltage.0, self.valid_voltage.1);
        let _ = writeln!(s, "valid_angle = {} {}", self.valid_angle.0, self.valid_angle.1);
        let _ = writeln!(s, "residual_rms = {}", self.residual_rms);
        s.push_str("# voltage_v angle_deg\n");
        let (a, b) = self.valid_voltage;
        for i in 0..=20 {
            let v = a + (b - a) * i as f64 / 20.0;
            let _ = writeln!(s, "{v} {}", self.eval(v));
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut coefficients = None;
        let mut valid_voltage = None;
        let mut valid_angle = None;
        let mut residual_rms = 0.0;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |d: &str| Error::format("calibration curve", format!("line {}: {d}", lineno + 1));
            let nums = |s: &str| -> Result<Vec<f64>> {
                s.split_whitespace()
                    .map(|t| t.parse::<f64>().map_err(|e| bad(&e.to_string())))
                    .collect()
            };
            match line.split_once('=') {
                Some((key, value)) => {
                    let v = nums(value)?;
                    match (key.trim(), v.as_slice()) {
                        ("coefficients", &[a, b, c, d]) => coefficients = Some([a, b, c, d]),
                        ("valid_voltage", &[a, b]) => valid_voltage = Some((a, b)),
                        ("valid_angle", &[a, b]) => valid_angle = Some((a, b)),
                        ("residual_rms", &[a]) => residual_rms = a,
                        (k, _) => return Err(bad(&format!("unexpected entry `{k}`"))),
                    }
                }
                None => {
                    if nums(line)?.len() != 2 {
                        return Err(bad("expected `voltage angle` row"));
                    }
                }
            }
        }
        let missing = |k: &str| Error::format("calibration curve", format!("missing `{k}`"));
        let coefficients = coefficients.ok_or_else(|| missing("coefficients"))?;
        let valid_voltage = valid_voltage.ok_or_else(|| missing("valid_voltage"))?;
        let mut curve = CalibrationCurve {
            coefficients,
            valid_voltage,
            valid_angle: (0.0, 0.0),
            residual_rms,
        };
        curve.valid_angle = valid_angle.unwrap_or((curve.eval(valid_voltage.0), curve.eval(valid_voltage.1)));
        Ok(curve)
    }
}

/// Polar form of a centred drive. `(0, 0)` maps to `(0, 0)`.
pub fn voltages_to_polar(v_x: f64, v_y: f64) -> (f64, f64) {
    let r = v_x.hypot(v_y);
    if r == 0.0 {
        (0.0, 0.0)
    } else {
        (r, wrap_two_pi(v_y.atan2(v_x)))
    }
}

pub fn polar_to_voltages(r: f64, theta_ms: f64) -> (f64, f64) {
    let (s, c) = theta_ms.sin_cos();
    (r * c, r * s)
}

/// Metasurface-frame description of a direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MsAngles {
    pub theta_ms: f64,
    pub alpha: f64,
    /// Set for the on-axis direction, where `theta_ms` is undefined and reported as 0.
    pub degenerate: bool,
}

/// Azimuth/elevation (rad) to `(θ_MS, α)`.
pub fn spherical_to_ms(theta: f64, phi: f64) -> Result<MsAngles> {
    if theta.abs() >= FRAC_PI_2 {
        return Err(Error::domain("theta", theta, "(-π/2, π/2)"));
    }
    if phi.abs() >= FRAC_PI_2 {
        return Err(Error::domain("phi", phi, "(-π/2, π/2)"));
    }
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let (x, y, z) = (cp * st, sp, cp * ct);
    let rho = x.hypot(y);
    if rho == 0.0 {
        return Ok(MsAngles {
            theta_ms: 0.0,
            alpha: 0.0,
            degenerate: true,
        });
    }
    Ok(MsAngles {
        theta_ms: wrap_two_pi(y.atan2(x)),
        alpha: rho.atan2(z),
        degenerate: false,
    })
}

/// `(α, θ_MS)` (rad) to azimuth/elevation.
pub fn ms_to_spherical(alpha: f64, theta_ms: f64) -> Result<(f64, f64)> {
    if !(0.0..FRAC_PI_2).contains(&alpha) {
        return Err(Error::domain("alpha", alpha, "[0, π/2)"));
    }
    let (sa, ca) = alpha.sin_cos();
    let (s, c) = theta_ms.sin_cos();
    Ok(((sa * c).atan2(ca), (sa * s).asin()))
}

/// Precomputed drive voltages over an angular grid, plus the curve they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationMaps {
    pub curve: CalibrationCurve,
    /// Grid pitch (degrees).
    pub step: f64,
    /// Grid half-extent (degrees); the grid covers `[-extent, extent]` on both axes.
    pub extent: f64,
    /// Row-major over `phi` (rows) then `theta` (columns); `None` marks unreachable cells.
    pub cells: Vec<Option<(f64, f64)>>,
    zero_voltage: f64,
    max_radial: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapComponent {
    Vx,
    Vy,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoverageReport {
    pub valid_fraction: f64,
    /// Largest reachable deflection in every direction (degrees).
    pub max_cone_angle: f64,
    /// Largest reachable azimuth along the `phi = 0` row (degrees).
    pub max_axis_angle: f64,
}

pub const DEFAULT_GRID_STEP: f64 = 0.5;
pub const DEFAULT_GRID_EXTENT: f64 = 75.0;

pub fn build_maps(curve: &CalibrationCurve, grid_step: f64) -> Result<CalibrationMaps> {
    build_maps_over(curve, grid_step, DEFAULT_GRID_EXTENT)
}

pub fn build_maps_over(curve: &CalibrationCurve, grid_step: f64, extent: f64) -> Result<CalibrationMaps> {
    if !(grid_step > 0.0) {
        return Err(Error::domain("grid_step", grid_step, "> 0"));
    }
    if !(extent > 0.0 && extent < 90.0) {
        return Err(Error::domain("grid extent", extent, "(0, 90)"));
    }
    curve.check_monotonic()?;
    let zero_voltage = curve.zero_voltage()?;
    let max_radial = curve.max_radial_voltage()?;
    let mut maps = CalibrationMaps {
        curve: curve.clone(),
        step: grid_step,
        extent,
        cells: Vec::new(),
        zero_voltage,
        max_radial,
    };
    let n = maps.axis_len();
    let mut cells = Vec::with_capacity(n * n);
    for j in 0..n {
        let phi = maps.axis_value(j);
        for i in 0..n {
            cells.push(maps.solve(maps.axis_value(i), phi));
        }
    }
    maps.cells = cells;
    Ok(maps)
}

impl CalibrationMaps {
    pub fn axis_len(&self) -> usize {
        (self.extent / self.step).floor() as usize * 2 + 1
    }

    /// Angle (degrees) of grid index `i` along either axis.
    pub fn axis_value(&self, i: usize) -> f64 {
        let half = (self.axis_len() / 2) as f64;
        (i as f64 - half) * self.step
    }

    pub fn cell(&self, i_theta: usize, j_phi: usize) -> Option<(f64, f64)> {
        self.cells[j_phi * self.axis_len() + i_theta]
    }

    pub fn zero_voltage(&self) -> f64 {
        self.zero_voltage
    }

    fn solve(&self, theta_deg: f64, phi_deg: f64) -> Option<(f64, f64)> {
        let ms = spherical_to_ms(theta_deg.to_radians(), phi_deg.to_radians()).ok()?;
        if ms.degenerate {
            return Some((self.zero_voltage, self.zero_voltage));
        }
        let v = self.curve.invert(ms.alpha.to_degrees())?;
        let r = (v - self.zero_voltage).max(0.0);
        if r > self.max_radial {
            return None;
        }
        let (dx, dy) = polar_to_voltages(r, ms.theta_ms);
        Some((self.zero_voltage + dx, self.zero_voltage + dy))
    }

    /// Drive voltages for a direction (degrees), solved exactly through the
    /// curve. `None` outside the grid extent or the reachable cone.
    pub fn voltages(&self, theta_deg: f64, phi_deg: f64) -> Option<(f64, f64)> {
        let lim = self.extent + 1e-9;
        if theta_deg.abs() > lim || phi_deg.abs() > lim {
            return None;
        }
        self.solve(theta_deg, phi_deg)
    }

    /// Forward chain: the direction (degrees) a drive is calibrated to produce.
    pub fn angles(&self, v_x: f64, v_y: f64) -> Option<(f64, f64)> {
        let (r, theta_ms) = voltages_to_polar(v_x - self.zero_voltage, v_y - self.zero_voltage);
        if r > self.max_radial * (1.0 + 1e-12) {
            return None;
        }
        let alpha = self.curve.eval(self.zero_voltage + r).to_radians();
        let (t, p) = ms_to_spherical(alpha.max(0.0), theta_ms).ok()?;
        Some((t.to_degrees(), p.to_degrees()))
    }

    /// Largest `|V(θ,φ) - v0 + V(-θ,-φ) - v0|` over cells valid at both points.
    pub fn max_antisymmetry_error(&self) -> f64 {
        let n = self.axis_len();
        let v0 = self.zero_voltage;
        let mut worst = 0.0_f64;
        for j in 0..n {
            for i in 0..n {
                match (self.cell(i, j), self.cell(n - 1 - i, n - 1 - j)) {
                    (Some(a), Some(b)) => {
                        worst = worst.max((a.0 - v0 + b.0 - v0).abs()).max((a.1 - v0 + b.1 - v0).abs());
                    }
                    (None, None) => {}
                    _ => return f64::INFINITY,
                }
            }
        }
        worst
    }

    pub fn coverage(&self) -> CoverageReport {
        let valid = self.cells.iter().filter(|c| c.is_some()).count();
        let n = self.axis_len();
        let mid = n / 2;
        let max_axis_angle = (0..n)
            .filter(|&i| self.cell(i, mid).is_some())
            .map(|i| self.axis_value(i).abs())
            .fold(0.0, f64::max);
        CoverageReport {
            valid_fraction: valid as f64 / self.cells.len() as f64,
            max_cone_angle: self.curve.max_angle().unwrap_or(0.0),
            max_axis_angle,
        }
    }

    /// One voltage component as a CSV grid: a header row of `theta_deg`
    /// values, then one row per `phi_deg`. Unreachable cells are empty.
    pub fn to_csv_grid(&self, component: MapComponent) -> String {
        let n = self.axis_len();
        let mut s = String::from("phi_deg\\theta_deg");
        for i in 0..n {
            let _ = write!(s, ",{}", self.axis_value(i));
        }
        s.push('\n');
        for j in 0..n {
            let _ = write!(s, "{}", self.axis_value(j));
            for i in 0..n {
                match self.cell(i, j) {
                    Some((vx, vy)) => {
                        let v = if component == MapComponent::Vx { vx } else { vy };
                        let _ = write!(s, ",{v:.9}");
                    }
                    None => s.push(','),
                }
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_cubic_is_recovered() {
        let c = [0.3, 11.0, -0.2, 0.15];
        let samples: Vec<_> = (-10..=10)
            .map(|i| {
                let v = i as f64 * 0.45;
                (v, c[0] + c[1] * v + c[2] * v * v + c[3] * v * v * v)
            })
            .collect();
        let curve = fit_curve(&samples).unwrap();
        for (got, want) in curve.coefficients.iter().zip(c) {
            assert!((got - want).abs() < 1e-9, "{:?}", curve.coefficients);
        }
        assert!(curve.residual_rms < 1e-9);
        assert_eq!(curve.valid_voltage, (-4.5, 4.5));
    }

    #[test]
    fn ideal_chain_fit_is_monotonic_and_close() {
        let curve = CalibrationCurve::default();
        assert!(curve.is_monotonic());
        assert!(curve.residual_rms < 2.0);
        // dense oracle of the chain itself
        let mut worst = 0.0_f64;
        for i in 0..=8600 {
            let v = -4.3 + i as f64 * 1e-3;
            worst = worst.max((curve.eval(v) - (v / 5.0).asin().to_degrees()).abs());
        }
        assert!(worst < 0.5, "{worst}");
        assert!(curve.valid_angle.1 > 58.5 && curve.valid_angle.1 < 60.0);
    }

    #[test]
    fn zero_to_ten_volt_device() {
        let samples: Vec<_> = (0..=40)
            .map(|i| {
                let v = i as f64 * 0.25;
                (v, ((v - 5.0) / 5.0 * 60f64.to_radians().sin()).asin().to_degrees())
            })
            .collect();
        let curve = fit_curve(&samples).unwrap();
        assert!((curve.valid_angle.0 + 60.0).abs() < 1.5, "{:?}", curve.valid_angle);
        assert!((curve.valid_angle.1 - 60.0).abs() < 1.5);
        assert!((curve.zero_voltage().unwrap() - 5.0).abs() < 1e-6);
    }

    #[test]
    fn rank_deficient_fit_fails() {
        let samples = vec![(1.0, 1.0), (1.0, -1.0), (-1.0, 2.0), (-1.0, -2.0), (1.0, 0.5)];
        assert!(matches!(fit_curve(&samples), Err(Error::Fit(_))));
        assert!(fit_curve(&[(1.0, 1.0); 3]).is_err());
    }

    #[test]
    fn non_monotonic_curve_is_rejected() {
        let curve = CalibrationCurve {
            coefficients: [0.0, 1.0, 0.0, -1.0],
            valid_voltage: (-2.0, 2.0),
            valid_angle: (6.0, -6.0),
            residual_rms: 0.0,
        };
        assert!(matches!(build_maps(&curve, 1.0), Err(Error::NonMonotonic { .. })));
    }

    #[test]
    fn inversion_matches_evaluation() {
        let curve = CalibrationCurve::default();
        for i in -50..=50 {
            let a = curve.valid_angle.1 * i as f64 / 50.0;
            let v = curve.invert(a).unwrap();
            assert!((curve.eval(v) - a).abs() < 1e-6);
        }
        assert!(curve.invert(curve.valid_angle.1 + 0.1).is_none());
    }

    #[test]
    fn polar_examples() {
        let (r, t) = voltages_to_polar(3.0, 4.0);
        assert_eq!(r, 5.0);
        assert!((t - 0.927_295_218_001_612_2).abs() < 1e-15);
        assert_eq!(voltages_to_polar(0.0, 0.0), (0.0, 0.0));
        let (r, t) = voltages_to_polar(-1.0, 0.0);
        assert_eq!(r, 1.0);
        assert!((t - PI).abs() < 1e-15);
        let (x, y) = polar_to_voltages(5.0, 4f64.atan2(3.0));
        assert!((x - 3.0).abs() < 1e-14 && (y - 4.0).abs() < 1e-14);
        let (x, y) = polar_to_voltages(1.0, FRAC_PI_2);
        assert!(x.abs() < 1e-16 && (y - 1.0).abs() < 1e-15);
    }

    #[test]
    fn spherical_examples() {
        let d30 = 30f64.to_radians();
        let m = spherical_to_ms(d30, 0.0).unwrap();
        assert!(m.theta_ms.abs() < 1e-15 && (m.alpha - d30).abs() < 1e-15);
        let m = spherical_to_ms(0.0, d30).unwrap();
        assert!((m.theta_ms - FRAC_PI_2).abs() < 1e-15 && (m.alpha - d30).abs() < 1e-15);
        let m = spherical_to_ms(0.0, 0.0).unwrap();
        assert!(m.degenerate && m.alpha == 0.0);

        let (t, p) = ms_to_spherical(d30, 0.0).unwrap();
        assert!((t - d30).abs() < 1e-15 && p.abs() < 1e-15);
        let (t, p) = ms_to_spherical(d30, FRAC_PI_2).unwrap();
        assert!(t.abs() < 1e-15 && (p - d30).abs() < 1e-15);
        assert!(ms_to_spherical(FRAC_PI_2, 0.0).is_err());
    }

    #[test]
    fn spherical_matches_cosine_identity() {
        // cos α = cos φ cos θ; tan θ_MS = tan φ / sin θ
        for &(t, p) in &[(0.3_f64, 0.2_f64), (-0.7, 0.5), (1.1, -0.9), (-0.2, -1.2)] {
            let m = spherical_to_ms(t, p).unwrap();
            assert!((m.alpha.cos() - p.cos() * t.cos()).abs() < 1e-14);
            assert!((m.theta_ms.tan() - p.tan() / t.sin()).abs() < 1e-9 * m.theta_ms.tan().abs().max(1.0));
        }
    }

    #[test]
    fn maps_center_and_antisymmetry() {
        let curve = CalibrationCurve::default();
        let maps = build_maps(&curve, 0.5).unwrap();
        assert_eq!(maps.axis_len(), 301);
        let mid = maps.axis_len() / 2;
        let (vx, vy) = maps.cell(mid, mid).unwrap();
        assert!(vx.abs() < 1e-9 && vy.abs() < 1e-9);
        assert!(maps.max_antisymmetry_error() < 1e-12);
        // 30° on the theta axis: root of the cubic
        let i30 = mid + 60;
        assert_eq!(maps.axis_value(i30), 30.0);
        let (vx, vy) = maps.cell(i30, mid).unwrap();
        assert!((curve.eval(vx) - 30.0).abs() < 1e-6);
        assert!((vy - maps.zero_voltage()).abs() < 1e-15);
        // corners of the ±75° grid are outside the cone
        assert!(maps.cell(0, 0).is_none());
    }

    #[test]
    fn forward_chain_inverts_maps() {
        let maps = build_maps(&CalibrationCurve::default(), 1.0).unwrap();
        for &(t, p) in &[(10.0, -20.0), (-40.0, 15.0), (0.0, 55.0), (-3.0, -3.0)] {
            let (vx, vy) = maps.voltages(t, p).unwrap();
            let (t2, p2) = maps.angles(vx, vy).unwrap();
            assert!((t - t2).abs() < 1e-6 && (p - p2).abs() < 1e-6, "{t2} {p2}");
        }
        assert!(maps.voltages(80.0, 0.0).is_none());
    }

    #[test]
    fn text_round_trip() {
        let curve = CalibrationCurve::default();
        let back = CalibrationCurve::from_text(&curve.to_text()).unwrap();
        assert_eq!(curve, back);
        assert!(CalibrationCurve::from_text("coefficients = 1 2 3\n").is_err());
        assert!(CalibrationCurve::from_text("valid_voltage = -1 1\n").is_err());
    }

    #[test]
    fn csv_grid_shape() {
        let maps = build_maps_over(&CalibrationCurve::default(), 15.0, 75.0).unwrap();
        let csv = maps.to_csv_grid(MapComponent::Vx);
        let rows: Vec<_> = csv.lines().collect();
        assert_eq!(rows.len(), 12);
        assert!(rows.iter().all(|r| r.split(',').count() == 12));
        // the corner row starts with an unreachable cell
        assert!(rows[1].starts_with("-75,,"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn polar_round_trip(r in 0.0f64..10.0, t in 0.0f64..std::f64::consts::TAU) {
            let (x, y) = polar_to_voltages(r, t);
            let (r2, t2) = voltages_to_polar(x, y);
            prop_assert!((r2 - r).abs() < 1e-12);
            if r > 1e-6 {
                let d = (t2 - t + PI).rem_euclid(std::f64::consts::TAU) - PI;
                prop_assert!(d.abs() < 1e-12);
            }
        }

        #[test]
        fn ms_round_trip(a in 1e-6f64..85f64.to_radians(), t in 0.0f64..std::f64::consts::TAU) {
            let (th, ph) = ms_to_spherical(a, t).unwrap();
            let m = spherical_to_ms(th, ph).unwrap();
            prop_assert!((m.alpha - a).abs() < 1e-9);
            let d = (m.theta_ms - t + PI).rem_euclid(std::f64::consts::TAU) - PI;
            prop_assert!(d.abs() < 1e-9);
        }

        #[test]
        fn curve_inversion_round_trip(f in -1.0f64..1.0) {
            let curve = CalibrationCurve::default();
            let a = f * curve.valid_angle.1;
            let v = curve.invert(a).unwrap();
            prop_assert!((curve.eval(v) - a).abs() < 1e-6);
        }
    }
}
