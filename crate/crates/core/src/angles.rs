//! Direction conventions shared by the scene, calibration and optics code.
//!
//! The sensor looks along `+z`, `x` is horizontal and `y` is vertical. A
//! direction is described by its azimuth `theta` (rotation from `+z` toward
//! `+x`) and elevation `phi` (toward `+y`):
//!
//! ```text
//! d = (cos(phi) sin(theta), sin(phi), cos(phi) cos(theta))
//! ```
//!
//! This is the same parametrisation the two-axis calibration uses, so
//! `cos(alpha) = cos(phi) cos(theta)` where `alpha` is the angle to the axis.

use nalgebra::Vector3;

/// Unit vector for the given azimuth/elevation (radians).
pub fn unit_vector(theta: f64, phi: f64) -> Vector3<f64> {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    Vector3::new(cp * st, sp, cp * ct)
}

/// Azimuth/elevation (radians) of a direction. The input need not be normalised.
pub fn scan_angles(d: &Vector3<f64>) -> (f64, f64) {
    let n = d.norm();
    let theta = d.x.atan2(d.z);
    let phi = (d.y / n).clamp(-1.0, 1.0).asin();
    (theta, phi)
}

/// Angle between two directions, accurate for both tiny and near-antipodal pairs.
pub fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Angle of a direction from the optical axis.
pub fn off_axis_angle(d: &Vector3<f64>) -> f64 {
    angle_between(d, &Vector3::z())
}

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_two_pi(a: f64) -> f64 {
    let w = a.rem_euclid(std::f64::consts::TAU);
    // rem_euclid can return exactly TAU for tiny negative inputs
    if w >= std::f64::consts::TAU {
        0.0
    } else {
        w
    }
}
