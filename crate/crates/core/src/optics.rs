//! Deflection physics of the AOD + metasurface cascade.
//!
//! The metasurface imposes a radially parabolic phase whose gradient grows
//! linearly with the impact radius, `dΦ/dr = -k0 r / r_max`. The transmitted
//! transverse momentum is the incident one plus that gradient, so a spot at
//! radius `r` leaves at `sin(alpha) = r / r_max` for normal incidence.
//!
//! Sign convention: the gradient points toward `-r`, so light hitting the
//! surface at `+x` is steered toward `-x`. The drive-to-impact relay
//! (`OpticsChain::impact`) maps a positive drive voltage to the negative side
//! of the aperture, which makes a positive drive steer toward a positive angle.
//! This is the only place the sign is decided.
//!
//! Angles returned by [`deflect`] use a polar angle `theta_t` from
//! the axis and an azimuth `phi_t` for which the transverse direction is
//! `(sin(phi_t), cos(phi_t))`. [`BeamState`] reports the scan-angle convention
//! of [`crate::angles`] instead.

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::angles;
use crate::error::{Error, Result};

/// Phase law of the metasurface. Only the parabolic profile is implemented.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseProfile {
    #[default]
    Parabolic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetasurfaceSpec {
    /// Radius of the metasurface (m).
    pub r_max: f64,
    /// Design free-space wavelength (m).
    pub wavelength: f64,
    pub profile: PhaseProfile,
    /// Fraction of transmitted power in the deflected first order.
    pub first_order_efficiency: f64,
    /// Fraction left in the undeflected zeroth order.
    pub zero_order_fraction: f64,
    /// Fractional first-order power reduction at `r = r_max`.
    pub edge_efficiency_droop: f64,
    /// Overrides the diffraction-limited divergence floor (rad).
    pub divergence_floor: Option<f64>,
}

/// First-order efficiency that, combined with a 0.63 AOD, gives a 4 dB
/// single-axis budget for the centre beam.
pub const DEFAULT_MS_FIRST_ORDER: f64 = 0.398_107_170_553_497_3 / 0.63;

impl Default for MetasurfaceSpec {
    fn default() -> Self {
        Self {
            r_max: 0.5e-3,
            wavelength: 633e-9,
            profile: PhaseProfile::Parabolic,
            first_order_efficiency: DEFAULT_MS_FIRST_ORDER,
            zero_order_fraction: 0.10,
            edge_efficiency_droop: 0.30,
            divergence_floor: None,
        }
    }
}

impl MetasurfaceSpec {
    pub fn validate(&self) -> Result<()> {
        positive("metasurface.r_max", self.r_max)?;
        positive("metasurface.wavelength", self.wavelength)?;
        unit_interval("metasurface.first_order_efficiency", self.first_order_efficiency)?;
        unit_interval("metasurface.zero_order_fraction", self.zero_order_fraction)?;
        unit_interval("metasurface.edge_efficiency_droop", self.edge_efficiency_droop)?;
        let total = self.first_order_efficiency + self.zero_order_fraction;
        if total > 1.0 + 1e-12 {
            return Err(Error::domain(
                "metasurface.first_order_efficiency + zero_order_fraction",
                total,
                "<= 1",
            ));
        }
        Ok(())
    }

    /// Free-space wavenumber `2π/λ`.
    pub fn k0(&self) -> f64 {
        2.0 * PI / self.wavelength
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AodSpec {
    /// Maximum deflection per axis (rad).
    pub fov_half_angle: f64,
    /// Beam diameter inside the crystal (m).
    pub aperture: f64,
    /// Acoustic velocity (m/s).
    pub acoustic_velocity: f64,
    /// Diffraction efficiency into the first order of the first axis.
    pub first_order_efficiency: f64,
    /// Extra transmission factor of the second, orthogonal deflector.
    pub second_axis_efficiency: f64,
    /// Drive voltage range per axis (V).
    pub voltage_span: (f64, f64),
}

impl Default for AodSpec {
    fn default() -> Self {
        Self {
            fov_half_angle: 1f64.to_radians(),
            aperture: 3e-3,
            acoustic_velocity: 650.0,
            first_order_efficiency: 0.63,
            // 1.5 dB for the second axis
            second_axis_efficiency: 10f64.powf(-0.15),
            voltage_span: (-5.0, 5.0),
        }
    }
}

impl AodSpec {
    pub fn validate(&self) -> Result<()> {
        positive("aod.fov_half_angle", self.fov_half_angle)?;
        if self.fov_half_angle >= PI / 2.0 {
            return Err(Error::domain("aod.fov_half_angle", self.fov_half_angle, "(0, π/2)"));
        }
        positive("aod.aperture", self.aperture)?;
        positive("aod.acoustic_velocity", self.acoustic_velocity)?;
        for (name, v) in [
            ("aod.first_order_efficiency", self.first_order_efficiency),
            ("aod.second_axis_efficiency", self.second_axis_efficiency),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::domain(name, v, "(0, 1]"));
            }
        }
        if self.voltage_span.1 <= self.voltage_span.0 {
            return Err(Error::domain("aod.voltage_span.max", self.voltage_span.1, "> min"));
        }
        Ok(())
    }

    /// Half of the drive span; the drive at which the spot reaches the aperture edge.
    pub fn half_span(&self) -> f64 {
        0.5 * (self.voltage_span.1 - self.voltage_span.0)
    }

    /// Voltage corresponding to the undeflected beam.
    pub fn center_voltage(&self) -> f64 {
        0.5 * (self.voltage_span.1 + self.voltage_span.0)
    }

    /// Per-axis deflection angles (rad) for a drive.
    pub fn deflection(&self, v_x: f64, v_y: f64) -> (f64, f64) {
        let s = self.fov_half_angle / self.half_span();
        let c = self.center_voltage();
        ((v_x - c) * s, (v_y - c) * s)
    }

    /// Unit propagation vector after both deflectors.
    pub fn direction(&self, v_x: f64, v_y: f64) -> Vector3<f64> {
        let (ax, ay) = self.deflection(v_x, v_y);
        Vector3::new(ax.tan(), ay.tan(), 1.0).normalize()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiffractionOrder {
    Zero,
    First,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanAxes {
    One,
    #[default]
    Two,
}

impl ScanAxes {
    pub fn count(self) -> usize {
        match self {
            ScanAxes::One => 1,
            ScanAxes::Two => 2,
        }
    }
}

/// How the AOD output reaches the metasurface.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Incidence {
    /// A telecentric scan lens: the spot moves, the incidence stays normal and
    /// the zeroth order leaves on axis.
    #[default]
    Telecentric,
    /// The metasurface sits directly after the deflector: the beam arrives at
    /// the AOD angle and the zeroth order keeps scanning the narrow field.
    AodAngle,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamState {
    /// Radial impact coordinate on the metasurface (m).
    pub impact_r: f64,
    /// Angular impact coordinate (rad).
    pub impact_theta_ms: f64,
    /// Outgoing azimuth (rad).
    pub direction_theta: f64,
    /// Outgoing elevation (rad).
    pub direction_phi: f64,
    /// Full-angle divergence (rad).
    pub divergence: f64,
    /// Power relative to the laser output.
    pub power: f64,
    pub order: DiffractionOrder,
}

impl BeamState {
    pub fn direction(&self) -> Vector3<f64> {
        angles::unit_vector(self.direction_theta, self.direction_phi)
    }
}

/// Local phase retardation (rad) at radius `r`.
pub fn phase(r: f64, ms: &MetasurfaceSpec) -> Result<f64> {
    if !(0.0..=ms.r_max).contains(&r) {
        return Err(Error::domain("r", r, format!("[0, {}]", ms.r_max)));
    }
    Ok(match ms.profile {
        PhaseProfile::Parabolic => -ms.k0() * r * r / (2.0 * ms.r_max),
    })
}

/// Analytic radial phase gradient (rad/m).
pub fn phase_gradient(r: f64, ms: &MetasurfaceSpec) -> f64 {
    match ms.profile {
        PhaseProfile::Parabolic => -ms.k0() * r / ms.r_max,
    }
}

/// Transverse momentum (normalised to `k0`) after the metasurface.
fn transmitted_transverse(
    impact_r: f64,
    impact_theta_ms: f64,
    kx_in: f64,
    ky_in: f64,
    ms: &MetasurfaceSpec,
) -> Result<(f64, f64)> {
    if !(0.0..=ms.r_max).contains(&impact_r) {
        return Err(Error::OffAperture {
            impact_r,
            r_max: ms.r_max,
        });
    }
    let g = phase_gradient(impact_r, ms) / ms.k0();
    let (s, c) = impact_theta_ms.sin_cos();
    let kx = kx_in + g * c;
    let ky = ky_in + g * s;
    let ratio = kx.hypot(ky);
    if ratio > 1.0 + 1e-12 {
        return Err(Error::Evanescent { ratio });
    }
    Ok((kx, ky))
}

fn transverse_to_vector(kx: f64, ky: f64) -> Vector3<f64> {
    let kz = (1.0 - kx * kx - ky * ky).max(0.0).sqrt();
    Vector3::new(kx, ky, kz)
}

/// Generalized Snell deflection at the metasurface.
///
/// Incident angles use the same polar/azimuth convention as the output:
/// the incident transverse momentum is `k0 sin(θi) (sin φi, cos φi)`.
/// Returns `(theta_t, phi_t)`.
pub fn deflect(
    impact_r: f64,
    impact_theta_ms: f64,
    incident_theta: f64,
    incident_phi: f64,
    ms: &MetasurfaceSpec,
) -> Result<(f64, f64)> {
    let st = incident_theta.sin();
    let (kx, ky) = transmitted_transverse(
        impact_r,
        impact_theta_ms,
        st * incident_phi.sin(),
        st * incident_phi.cos(),
        ms,
    )?;
    let s = kx.hypot(ky).min(1.0);
    let phi_t = if s == 0.0 { 0.0 } else { kx.atan2(ky) };
    Ok((s.asin(), phi_t))
}

/// Inverse of [`deflect`] for normal incidence: the impact point `(r, θ_MS)`
/// that produces the outgoing `(theta_t, phi_t)`.
pub fn impact_for_direction(theta_t: f64, phi_t: f64, ms: &MetasurfaceSpec) -> Result<(f64, f64)> {
    if !(0.0..=PI / 2.0).contains(&theta_t) {
        return Err(Error::domain("theta_t", theta_t, "[0, π/2]"));
    }
    let s = theta_t.sin();
    let kx = s * phi_t.sin();
    let ky = s * phi_t.cos();
    let r = s * ms.r_max;
    let theta_ms = if s == 0.0 {
        0.0
    } else {
        angles::wrap_two_pi((-ky).atan2(-kx))
    };
    Ok((r, theta_ms))
}

/// Full-angle divergence (rad) introduced by a spot of diameter
/// `spot_diameter` centred at `impact_r`: the spread of local deflection
/// angles across the spot, floored at the diffraction limit.
///
/// A spot straddling the centre sees gradients of both signs, so the lower
/// edge is allowed to go negative.
pub fn divergence_after_ms(spot_diameter: f64, impact_r: f64, ms: &MetasurfaceSpec) -> f64 {
    let w = spot_diameter.max(f64::MIN_POSITIVE);
    let hi = ((impact_r + w / 2.0) / ms.r_max).min(1.0).asin();
    let lo = ((impact_r - w / 2.0) / ms.r_max).max(-1.0).asin();
    let floor = ms
        .divergence_floor
        .unwrap_or(ms.wavelength / (PI * w / 2.0));
    (hi - lo).max(floor)
}

fn aod_transmission(aod: &AodSpec, axes: ScanAxes) -> f64 {
    match axes {
        ScanAxes::One => aod.first_order_efficiency,
        ScanAxes::Two => aod.first_order_efficiency * aod.second_axis_efficiency,
    }
}

fn droop_factor(impact_r: f64, ms: &MetasurfaceSpec) -> f64 {
    let u = (impact_r / ms.r_max).clamp(0.0, 1.0);
    1.0 - ms.edge_efficiency_droop * u * u
}

/// Fraction of laser power carried by a diffraction order.
pub fn power_budget(
    order: DiffractionOrder,
    impact_r: f64,
    aod: &AodSpec,
    ms: &MetasurfaceSpec,
    axes: ScanAxes,
) -> f64 {
    let t = aod_transmission(aod, axes);
    match order {
        DiffractionOrder::Zero => t * ms.zero_order_fraction,
        DiffractionOrder::First => t * ms.first_order_efficiency * droop_factor(impact_r, ms),
    }
}

/// Where the laser power goes for one beam position.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PowerSplit {
    pub order0: f64,
    pub order1: f64,
    /// Light not diffracted into the used AOD order(s).
    pub aod_loss: f64,
    /// Metasurface absorption, scattering and higher orders.
    pub ms_loss: f64,
    /// First-order power lost to the radial efficiency droop.
    pub droop_loss: f64,
}

impl PowerSplit {
    pub fn total(&self) -> f64 {
        self.order0 + self.order1 + self.aod_loss + self.ms_loss + self.droop_loss
    }
}

pub fn power_split(impact_r: f64, aod: &AodSpec, ms: &MetasurfaceSpec, axes: ScanAxes) -> PowerSplit {
    let t = aod_transmission(aod, axes);
    let nominal_first = t * ms.first_order_efficiency;
    PowerSplit {
        order0: power_budget(DiffractionOrder::Zero, impact_r, aod, ms, axes),
        order1: power_budget(DiffractionOrder::First, impact_r, aod, ms, axes),
        aod_loss: 1.0 - t,
        ms_loss: t * (1.0 - ms.first_order_efficiency - ms.zero_order_fraction),
        droop_loss: nominal_first * (1.0 - droop_factor(impact_r, ms)),
    }
}

/// Power ratio in dB (negative for losses).
pub fn to_db(fraction: f64) -> f64 {
    10.0 * fraction.log10()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransitLimits {
    /// Acoustic transit time across the beam (s).
    pub transit_time: f64,
    /// `1 / transit_time` (Hz).
    pub nominal_scan_frequency: f64,
}

pub fn transit_limits(aod: &AodSpec) -> TransitLimits {
    let transit_time = aod.aperture / aod.acoustic_velocity;
    TransitLimits {
        transit_time,
        nominal_scan_frequency: 1.0 / transit_time,
    }
}

/// The complete beam-steering chain from drive voltages to outgoing beams.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OpticsChain {
    pub aod: AodSpec,
    pub metasurface: MetasurfaceSpec,
    pub incidence: Incidence,
    pub axes: ScanAxes,
    /// Spot diameter on the metasurface (m).
    pub spot_diameter: f64,
}

impl Default for OpticsChain {
    fn default() -> Self {
        Self {
            aod: AodSpec::default(),
            metasurface: MetasurfaceSpec::default(),
            incidence: Incidence::Telecentric,
            axes: ScanAxes::Two,
            spot_diameter: 50e-6,
        }
    }
}

impl OpticsChain {
    pub fn validate(&self) -> Result<()> {
        self.aod.validate()?;
        self.metasurface.validate()?;
        positive("optics.spot_diameter", self.spot_diameter)
    }

    /// Impact point `(r, θ_MS)` for a drive. The relay inverts the image: a
    /// drive of `center + half_span` on x lands at `x = -r_max`.
    pub fn impact(&self, v_x: f64, v_y: f64) -> (f64, f64) {
        let scale = -self.metasurface.r_max / self.aod.half_span();
        let c = self.aod.center_voltage();
        let (x, y) = ((v_x - c) * scale, (v_y - c) * scale);
        let r = x.hypot(y);
        let theta = if r == 0.0 { 0.0 } else { angles::wrap_two_pi(y.atan2(x)) };
        (r, theta)
    }

    fn incident_transverse(&self, v_x: f64, v_y: f64) -> (f64, f64) {
        match self.incidence {
            Incidence::Telecentric => (0.0, 0.0),
            Incidence::AodAngle => {
                let d = self.aod.direction(v_x, v_y);
                (d.x, d.y)
            }
        }
    }

    pub fn zero_order(&self, v_x: f64, v_y: f64) -> BeamState {
        let (r, theta_ms) = self.impact(v_x, v_y);
        let d = match self.incidence {
            Incidence::Telecentric => Vector3::z(),
            Incidence::AodAngle => self.aod.direction(v_x, v_y),
        };
        let (theta, phi) = angles::scan_angles(&d);
        BeamState {
            impact_r: r.min(self.metasurface.r_max),
            impact_theta_ms: theta_ms,
            direction_theta: theta,
            direction_phi: phi,
            // the zeroth order keeps the incoming beam quality
            divergence: self.metasurface.wavelength / (PI * self.spot_diameter / 2.0),
            power: power_budget(DiffractionOrder::Zero, r, &self.aod, &self.metasurface, self.axes),
            order: DiffractionOrder::Zero,
        }
    }

    pub fn first_order(&self, v_x: f64, v_y: f64) -> Result<BeamState> {
        let (r, theta_ms) = self.impact(v_x, v_y);
        let (kx_in, ky_in) = self.incident_transverse(v_x, v_y);
        let (kx, ky) = transmitted_transverse(r, theta_ms, kx_in, ky_in, &self.metasurface)?;
        let (theta, phi) = angles::scan_angles(&transverse_to_vector(kx, ky));
        Ok(BeamState {
            impact_r: r,
            impact_theta_ms: theta_ms,
            direction_theta: theta,
            direction_phi: phi,
            divergence: divergence_after_ms(self.spot_diameter, r, &self.metasurface),
            power: power_budget(DiffractionOrder::First, r, &self.aod, &self.metasurface, self.axes),
            order: DiffractionOrder::First,
        })
    }
}

fn positive(what: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(what, v, "> 0"))
    }
}

fn unit_interval(what: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::domain(what, v, "[0, 1]"))
    }
}
