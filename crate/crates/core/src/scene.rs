//! Synthetic 3-D world queried by ray casting.
//!
//! Every surface is described in a local frame whose `+z` axis is the surface
//! normal; `SceneObject::normal` gives that axis in world coordinates. Objects
//! with a `motion` rotate about `motion.axis` (world frame) through their
//! position.
//!
//! Scenes load from TOML:
//!
//! ```toml
//! [[objects]]
//! id = "board"
//! geometry = { type = "plane", half_extent = [0.2, 0.3] }
//! position = [0.0, 0.0, 2.0]
//! face_origin = true
//! reflectivity = 0.8
//! ```

use std::f64::consts::TAU;
use std::path::Path;

use nalgebra::{Rotation3, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::angles;
use crate::error::{Error, Result};

/// Closest accepted hit distance (m); avoids self-intersection at the origin.
const MIN_DISTANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Geometry {
    /// Flat surface through the origin of the local frame; unbounded unless
    /// `half_extent` limits it to a rectangle.
    Plane {
        #[serde(default)]
        half_extent: Option<[f64; 2]>,
    },
    /// Axis-aligned (in the local frame) box.
    Box { half_size: [f64; 3] },
    Disk { radius: f64 },
    Sphere { radius: f64 },
    /// Square board of `squares × squares` cells alternating between the
    /// object reflectivity and `dark_reflectivity`. The corner cell is light.
    Checkerboard {
        half_extent: f64,
        squares: usize,
        dark_reflectivity: f64,
    },
    /// Chopper wheel: solid hub inside `inner_radius`, `blades` sectors of
    /// angular duty `duty` out to `outer_radius`. Blade 0 starts at local
    /// azimuth 0.
    Chopper {
        inner_radius: f64,
        outer_radius: f64,
        #[serde(default = "default_blades")]
        blades: usize,
        #[serde(default = "default_duty")]
        duty: f64,
        #[serde(default)]
        tape: Option<Tape>,
    },
}

fn default_blades() -> usize {
    10
}

fn default_duty() -> f64 {
    0.5
}

/// Retroreflective strip centred on blade 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tape {
    pub inner_radius: f64,
    pub outer_radius: f64,
    /// Angular width (rad).
    pub width: f64,
    pub reflectivity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Motion {
    /// Rotation frequency (Hz); negative reverses the sense.
    pub frequency: f64,
    /// Phase at `t = 0` (rad).
    #[serde(default)]
    pub phase: f64,
    /// Rotation axis in world coordinates, right-handed.
    #[serde(default = "default_axis")]
    pub axis: [f64; 3],
}

fn default_axis() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

impl Motion {
    /// Rotation angle at time `t`, wrapped into `[0, 2π)`.
    pub fn phase_at(&self, t: f64) -> f64 {
        angles::wrap_two_pi(self.phase + TAU * (self.frequency * t).fract())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneObject {
    pub id: String,
    pub geometry: Geometry,
    pub position: [f64; 3],
    /// World direction of the local `+z` axis. Defaults to facing the sensor.
    #[serde(default)]
    pub normal: Option<[f64; 3]>,
    /// Point the normal back at the origin; overrides `normal`.
    #[serde(default)]
    pub face_origin: bool,
    #[serde(default = "default_reflectivity")]
    pub reflectivity: f64,
    #[serde(default)]
    pub retro: bool,
    #[serde(default)]
    pub motion: Option<Motion>,
}

fn default_reflectivity() -> f64 {
    0.8
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    pub distance: f64,
    pub reflectivity: f64,
    pub incidence_cosine: f64,
    /// Index of the object in the scene.
    pub object: usize,
    pub retro: bool,
}

/// Local-frame intersection before material lookup.
struct LocalHit {
    t: f64,
    point: Vector3<f64>,
    normal: Vector3<f64>,
}

impl SceneObject {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("object `{}`: {what}", self.id));
        if !(0.0..=1.0).contains(&self.reflectivity) {
            return Err(bad("reflectivity must be in [0, 1]"));
        }
        if self.position.iter().any(|v| !v.is_finite()) {
            return Err(bad("position must be finite"));
        }
        if let Some(n) = self.normal {
            if Vector3::from(n).norm() == 0.0 {
                return Err(bad("normal must be non-zero"));
            }
        }
        if self.face_origin && Vector3::from(self.position).norm() == 0.0 {
            return Err(bad("face_origin needs a position away from the origin"));
        }
        if let Some(m) = &self.motion {
            if Vector3::from(m.axis).norm() == 0.0 || !m.frequency.is_finite() {
                return Err(bad("motion needs a non-zero axis and finite frequency"));
            }
        }
        let positive = |v: f64| v > 0.0 && v.is_finite();
        match &self.geometry {
            Geometry::Plane { half_extent } => {
                if let Some(h) = half_extent {
                    if !(positive(h[0]) && positive(h[1])) {
                        return Err(bad("plane half_extent must be positive"));
                    }
                }
            }
            Geometry::Box { half_size } => {
                if !half_size.iter().all(|&v| positive(v)) {
                    return Err(bad("box half_size must be positive"));
                }
            }
            Geometry::Disk { radius } | Geometry::Sphere { radius } => {
                if !positive(*radius) {
                    return Err(bad("radius must be positive"));
                }
            }
            Geometry::Checkerboard {
                half_extent,
                squares,
                dark_reflectivity,
            } => {
                if !positive(*half_extent) || *squares == 0 || !(0.0..=1.0).contains(dark_reflectivity) {
                    return Err(bad("checkerboard needs positive size, squares and dark_reflectivity in [0, 1]"));
                }
            }
            Geometry::Chopper {
                inner_radius,
                outer_radius,
                blades,
                duty,
                tape,
            } => {
                if !(positive(*inner_radius) && outer_radius > inner_radius) {
                    return Err(bad("chopper radii must satisfy outer > inner > 0"));
                }
                if *blades == 0 || !(*duty > 0.0 && *duty <= 1.0) {
                    return Err(bad("chopper needs blades >= 1 and duty in (0, 1]"));
                }
                if let Some(tp) = tape {
                    if !(tp.inner_radius >= 0.0 && tp.outer_radius > tp.inner_radius && positive(tp.width))
                        || !(0.0..=1.0).contains(&tp.reflectivity)
                    {
                        return Err(bad("invalid tape"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Resting orientation: local `+z` to the configured normal.
    fn base_rotation(&self) -> UnitQuaternion<f64> {
        let n = if self.face_origin {
            -Vector3::from(self.position)
        } else {
            Vector3::from(self.normal.unwrap_or([0.0, 0.0, -1.0]))
        };
        let n = n.normalize();
        UnitQuaternion::rotation_between(&Vector3::z(), &n)
            .unwrap_or_else(|| UnitQuaternion::from_axis_angle(&Vector3::x_axis(), std::f64::consts::PI))
    }

    fn rotation_at(&self, t: f64) -> UnitQuaternion<f64> {
        let base = self.base_rotation();
        match &self.motion {
            Some(m) => {
                let axis = Unit::new_normalize(Vector3::from(m.axis));
                UnitQuaternion::from_axis_angle(&axis, m.phase_at(t)) * base
            }
            None => base,
        }
    }

    /// Nearest intersection with this object at time `t`.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, t: f64) -> Option<Hit> {
        let rot = self.rotation_at(t);
        let inv = rot.inverse();
        let o = inv * (origin - Vector3::from(self.position));
        let d = inv * dir;
        let local = intersect_local(&self.geometry, &o, &d)?;
        let (reflectivity, retro) = self.material(&local.point);
        Some(Hit {
            distance: local.t,
            reflectivity,
            incidence_cosine: local.normal.dot(&d).abs().min(1.0),
            object: usize::MAX,
            retro,
        })
    }

    fn material(&self, p: &Vector3<f64>) -> (f64, bool) {
        match &self.geometry {
            Geometry::Checkerboard {
                half_extent,
                squares,
                dark_reflectivity,
            } => {
                let cell = 2.0 * half_extent / *squares as f64;
                let i = (((p.x + half_extent) / cell).floor() as i64).clamp(0, *squares as i64 - 1);
                let j = (((p.y + half_extent) / cell).floor() as i64).clamp(0, *squares as i64 - 1);
                if (i + j) % 2 == 0 {
                    (self.reflectivity, self.retro)
                } else {
                    (*dark_reflectivity, false)
                }
            }
            Geometry::Chopper { blades, duty, tape: Some(tape), .. } => {
                let r = p.x.hypot(p.y);
                let center = std::f64::consts::PI * duty / *blades as f64;
                let psi = p.y.atan2(p.x);
                let dpsi = (psi - center + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI;
                if r >= tape.inner_radius && r <= tape.outer_radius && dpsi.abs() <= tape.width / 2.0 {
                    (tape.reflectivity, true)
                } else {
                    (self.reflectivity, self.retro)
                }
            }
            _ => (self.reflectivity, self.retro),
        }
    }
}

/// Crossing of the local `z = 0` plane.
fn plane_crossing(o: &Vector3<f64>, d: &Vector3<f64>) -> Option<(f64, Vector3<f64>)> {
    if d.z == 0.0 {
        return None;
    }
    let t = -o.z / d.z;
    if t <= MIN_DISTANCE {
        return None;
    }
    Some((t, o + d * t))
}

fn flat_hit(t: f64, p: Vector3<f64>) -> Option<LocalHit> {
    Some(LocalHit {
        t,
        point: p,
        normal: Vector3::z(),
    })
}

fn intersect_local(g: &Geometry, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<LocalHit> {
    match g {
        Geometry::Plane { half_extent } => {
            let (t, p) = plane_crossing(o, d)?;
            match half_extent {
                Some(h) if p.x.abs() > h[0] || p.y.abs() > h[1] => None,
                _ => flat_hit(t, p),
            }
        }
        Geometry::Checkerboard { half_extent, .. } => {
            let (t, p) = plane_crossing(o, d)?;
            if p.x.abs() > *half_extent || p.y.abs() > *half_extent {
                None
            } else {
                flat_hit(t, p)
            }
        }
        Geometry::Disk { radius } => {
            let (t, p) = plane_crossing(o, d)?;
            if p.x.hypot(p.y) > *radius {
                None
            } else {
                flat_hit(t, p)
            }
        }
        Geometry::Chopper {
            inner_radius,
            outer_radius,
            blades,
            duty,
            ..
        } => {
            let (t, p) = plane_crossing(o, d)?;
            let r = p.x.hypot(p.y);
            if r > *outer_radius {
                return None;
            }
            if r >= *inner_radius {
                let psi = angles::wrap_two_pi(p.y.atan2(p.x));
                let pos = (psi * *blades as f64 / TAU).fract();
                if pos >= *duty {
                    return None;
                }
            }
            flat_hit(t, p)
        }
        Geometry::Sphere { radius } => {
            let b = o.dot(d);
            let c = o.norm_squared() - radius * radius;
            let disc = b * b - c;
            if disc < 0.0 {
                return None;
            }
            let s = disc.sqrt();
            let t = if -b - s > MIN_DISTANCE { -b - s } else { -b + s };
            if t <= MIN_DISTANCE {
                return None;
            }
            let p = o + d * t;
            Some(LocalHit {
                t,
                point: p,
                normal: p / *radius,
            })
        }
        Geometry::Box { half_size } => {
            let mut t_near = f64::NEG_INFINITY;
            let mut t_far = f64::INFINITY;
            let mut axis_near = 0;
            let mut axis_far = 0;
            for k in 0..3 {
                if d[k] == 0.0 {
                    if o[k].abs() > half_size[k] {
                        return None;
                    }
                    continue;
                }
                let t1 = (-half_size[k] - o[k]) / d[k];
                let t2 = (half_size[k] - o[k]) / d[k];
                let (lo, hi) = if t1 < t2 { (t1, t2) } else { (t2, t1) };
                if lo > t_near {
                    t_near = lo;
                    axis_near = k;
                }
                if hi < t_far {
                    t_far = hi;
                    axis_far = k;
                }
            }
            if t_near > t_far {
                return None;
            }
            let (t, axis) = if t_near > MIN_DISTANCE {
                (t_near, axis_near)
            } else if t_far > MIN_DISTANCE {
                (t_far, axis_far)
            } else {
                return None;
            };
            let mut normal = Vector3::zeros();
            normal[axis] = 1.0;
            Some(LocalHit {
                t,
                point: o + d * t,
                normal,
            })
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    #[serde(default)]
    pub objects: Vec<SceneObject>,
}

/// Names of the scenes shipped with the crate.
pub const BUNDLED_SCENES: [&str; 4] = ["fig2_three_objects", "fig3_three_actors", "fig4_dual_zone", "fig5_chopper"];

impl Scene {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let scene: Scene = toml::from_str(text).map_err(|e| Error::Config(format!("scene: {e}")))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn bundled(name: &str) -> Result<Self> {
        let text = match name {
            "fig2_three_objects" => include_str!("../scenes/fig2_three_objects.toml"),
            "fig3_three_actors" => include_str!("../scenes/fig3_three_actors.toml"),
            "fig4_dual_zone" => include_str!("../scenes/fig4_dual_zone.toml"),
            "fig5_chopper" => include_str!("../scenes/fig5_chopper.toml"),
            other => return Err(Error::Config(format!("unknown bundled scene `{other}`"))),
        };
        Self::from_toml_str(text)
    }

    pub fn validate(&self) -> Result<()> {
        self.objects.iter().try_for_each(SceneObject::validate)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.objects.iter().position(|o| o.id == id)
    }

    /// The scene with every motion phase advanced to time `t`; casting the
    /// result at time 0 equals casting `self` at `t`.
    pub fn advance(&self, t: f64) -> Scene {
        let mut out = self.clone();
        for obj in &mut out.objects {
            if let Some(m) = &mut obj.motion {
                m.phase = m.phase_at(t);
            }
        }
        out
    }

    /// Nearest hit along a world-frame ray.
    pub fn cast_ray(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, t: f64) -> Option<Hit> {
        let dir = dir.normalize();
        self.objects
            .iter()
            .enumerate()
            .filter_map(|(i, o)| o.intersect(origin, &dir, t).map(|h| Hit { object: i, ..h }))
            .min_by(|a, b| a.distance.total_cmp(&b.distance))
    }

    /// Nearest hit along the direction `(theta, phi)` (rad) from `origin`.
    pub fn cast(&self, origin: &Vector3<f64>, theta: f64, phi: f64, t: f64) -> Option<Hit> {
        self.cast_ray(origin, &angles::unit_vector(theta, phi), t)
    }
}

/// Rotation taking the local frame of `obj` to world at time `t`.
pub fn object_rotation(obj: &SceneObject, t: f64) -> Rotation3<f64> {
    obj.rotation_at(t).to_rotation_matrix()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn origin() -> Vector3<f64> {
        Vector3::zeros()
    }

    fn obj(id: &str, geometry: Geometry, position: [f64; 3]) -> SceneObject {
        SceneObject {
            id: id.into(),
            geometry,
            position,
            normal: None,
            face_origin: false,
            reflectivity: 0.5,
            retro: false,
            motion: None,
        }
    }

    fn chopper_scene(freq: f64) -> Scene {
        Scene {
            objects: vec![
                SceneObject {
                    // local frame equal to world, so local azimuths read directly
                    normal: Some([0.0, 0.0, 1.0]),
                    motion: Some(Motion {
                        frequency: freq,
                        phase: 0.0,
                        axis: [0.0, 0.0, 1.0],
                    }),
                    ..obj(
                        "chopper",
                        Geometry::Chopper {
                            inner_radius: 0.02,
                            outer_radius: 0.075,
                            blades: 10,
                            duty: 0.5,
                            tape: Some(Tape {
                                inner_radius: 0.02,
                                outer_radius: 0.07,
                                width: 10f64.to_radians(),
                                reflectivity: 1.0,
                            }),
                        },
                        [0.0, 0.0, 0.7],
                    )
                },
                obj("wall", Geometry::Plane { half_extent: None }, [0.0, 0.0, 1.5]),
            ],
        }
    }

    #[test]
    fn plane_on_axis() {
        let s = Scene {
            objects: vec![obj("p", Geometry::Plane { half_extent: None }, [0.0, 0.0, 2.0])],
        };
        let h = s.cast(&origin(), 0.0, 0.0, 0.0).unwrap();
        assert!((h.distance - 2.0).abs() < 1e-15);
        assert!((h.incidence_cosine - 1.0).abs() < 1e-15);
        assert!(s.cast(&origin(), 0.0, 0.0, 0.0).is_some());
        let h = s.cast(&origin(), 0.5, 0.0, 0.0).unwrap();
        assert!((h.distance - 2.0 / 0.5f64.cos()).abs() < 1e-12);
        assert!((h.incidence_cosine - 0.5f64.cos()).abs() < 1e-12);
    }

    #[test]
    fn bundled_scenes_load() {
        for name in BUNDLED_SCENES {
            let s = Scene::bundled(name).unwrap();
            assert!(!s.objects.is_empty(), "{name}");
        }
        assert!(Scene::bundled("nope").is_err());
    }

    #[test]
    fn fig2_layout_is_hit_in_order() {
        let s = Scene::bundled("fig2_three_objects").unwrap();
        for (x, z, kind) in [(-0.4, 1.5, "square"), (-0.1, 2.4, "round"), (0.6, 3.5, "box")] {
            let theta = f64::atan2(x, z);
            let h = s.cast(&origin(), theta, 0.0, 0.0).unwrap();
            assert_eq!(s.objects[h.object].id, kind);
            assert!((h.distance - f64::hypot(x, z)).abs() < 0.05, "{kind}: {}", h.distance);
        }
    }

    #[test]
    fn chopper_period() {
        let s = chopper_scene(100.0);
        // tape centre at local azimuth 9°, radius 4.5 cm
        let target = |t: f64, s: &Scene| {
            let a = 9f64.to_radians();
            let p = Vector3::new(0.045 * a.cos(), 0.045 * a.sin(), 0.7);
            let (th, ph) = angles::scan_angles(&p);
            s.cast(&origin(), th, ph, t).unwrap()
        };
        let h0 = target(0.0, &s);
        assert!(h0.retro && (h0.distance - 0.7f64.hypot(0.045)).abs() < 1e-9);
        assert!(target(10e-3, &s).retro);
        // half a blade period later the same direction looks through a gap
        let gap = target(1.8e-3 / 3.6, &s);
        assert!(!gap.retro && gap.distance > 1.0);
    }

    #[test]
    fn advance_examples() {
        let s = chopper_scene(100.0);
        assert_eq!(s.advance(0.0), s);
        let m = s.advance(5e-3).objects[0].motion.clone().unwrap();
        assert!((m.phase - std::f64::consts::PI).abs() < 1e-12);
        let f = 92.71;
        let m = chopper_scene(f).advance(1.0 / f).objects[0].motion.clone().unwrap();
        let d = (m.phase + std::f64::consts::PI).rem_euclid(TAU) - std::f64::consts::PI;
        assert!(d.abs() < 1e-12, "{}", m.phase);
        assert!(s.advance(5e-3).objects[1].motion.is_none());
    }

    #[test]
    fn advance_matches_cast_time() {
        let s = chopper_scene(92.71);
        let later = s.advance(3.3e-3);
        for k in 0..50 {
            let th = (k as f64 * 0.23).sin() * 0.1;
            let ph = (k as f64 * 0.71).cos() * 0.1;
            let a = s.cast(&origin(), th, ph, 3.3e-3);
            let b = later.cast(&origin(), th, ph, 0.0);
            assert_eq!(a.map(|h| (h.object, h.retro)), b.map(|h| (h.object, h.retro)));
        }
    }

    #[test]
    fn chopper_occlusion_over_a_revolution() {
        let s = chopper_scene(0.0);
        let blades = 10.0;
        for deg in 0..360 {
            let a = (deg as f64 + 0.5).to_radians();
            let p = Vector3::new(0.05 * a.cos(), 0.05 * a.sin(), 0.7);
            let h = s.cast_ray(&origin(), &p, 0.0).unwrap();
            let open = (a * blades / TAU).fract() >= 0.5;
            assert_eq!(s.objects[h.object].id == "wall", open, "{deg}°");
        }
    }

    #[test]
    fn reversed_rotation() {
        let s = chopper_scene(-100.0);
        let m = s.objects[0].motion.as_ref().unwrap();
        assert!((m.phase_at(2.5e-3) - 1.5 * std::f64::consts::PI).abs() < 1e-12);
    }

    #[test]
    fn box_sphere_disk_distances() {
        let s = Scene {
            objects: vec![
                obj("box", Geometry::Box { half_size: [0.1, 0.1, 0.2] }, [0.0, 0.0, 3.0]),
                obj("sphere", Geometry::Sphere { radius: 0.5 }, [1.0, 0.0, 4.0]),
                obj("disk", Geometry::Disk { radius: 0.1 }, [-1.0, 0.0, 2.0]),
            ],
        };
        let h = s.cast(&origin(), 0.0, 0.0, 0.0).unwrap();
        assert!((h.distance - 2.8).abs() < 1e-12);
        let dir = Vector3::new(1.0, 0.0, 4.0);
        let h = s.cast_ray(&origin(), &dir, 0.0).unwrap();
        assert!((h.distance - (dir.norm() - 0.5)).abs() < 1e-12);
        assert!((h.incidence_cosine - 1.0).abs() < 1e-12);
        let h = s.cast_ray(&origin(), &Vector3::new(-1.0, 0.05, 2.0), 0.0).unwrap();
        assert_eq!(s.objects[h.object].id, "disk");
        assert!(s.cast_ray(&origin(), &Vector3::new(-1.0, 0.2, 2.0), 0.0).is_none());
    }

    #[test]
    fn checkerboard_alternates() {
        let s = Scene {
            objects: vec![SceneObject {
                retro: true,
                reflectivity: 0.9,
                ..obj(
                    "board",
                    Geometry::Checkerboard {
                        half_extent: 0.2,
                        squares: 4,
                        dark_reflectivity: 0.1,
                    },
                    [0.0, 0.0, 1.0],
                )
            }],
        };
        // default orientation faces the sensor, so local x points to world -x
        let a = s.cast_ray(&origin(), &Vector3::new(0.15, 0.15, 1.0), 0.0).unwrap();
        let b = s.cast_ray(&origin(), &Vector3::new(0.05, 0.15, 1.0), 0.0).unwrap();
        assert_ne!(a.reflectivity, b.reflectivity);
        assert_eq!(a.retro, a.reflectivity == 0.9);
    }

    #[test]
    fn invalid_objects_are_rejected() {
        let bad = "[[objects]]\nid='x'\ngeometry={type='sphere', radius=-1}\nposition=[0,0,1]\n";
        assert!(Scene::from_toml_str(bad).is_err());
        let bad = "[[objects]]\nid='x'\ngeometry={type='disk', radius=1}\nposition=[0,0,1]\nreflectivity=1.5\n";
        assert!(Scene::from_toml_str(bad).is_err());
        let bad = "[[objects]]\nid='x'\ngeometry={type='chopper', inner_radius=0.1, outer_radius=0.05}\nposition=[0,0,1]\n";
        assert!(Scene::from_toml_str(bad).is_err());
    }

    fn arb_object() -> impl Strategy<Value = SceneObject> {
        (
            0usize..4,
            -1.0f64..1.0,
            -1.0f64..1.0,
            1.0f64..6.0,
            0.05f64..0.5,
            -0.5f64..0.5,
            -0.5f64..0.5,
        )
            .prop_map(|(kind, x, y, z, size, nx, ny)| {
                let geometry = match kind {
                    0 => Geometry::Plane {
                        half_extent: Some([size, size * 1.5]),
                    },
                    1 => Geometry::Box {
                        half_size: [size, size * 0.7, size * 0.4],
                    },
                    2 => Geometry::Disk { radius: size },
                    _ => Geometry::Sphere { radius: size },
                };
                SceneObject {
                    normal: Some([nx, ny, -1.0]),
                    ..obj("o", geometry, [x, y, z])
                }
            })
    }

    proptest! {
        #[test]
        fn nearest_hit_is_minimum(objs in prop::collection::vec(arb_object(), 1..6), th in -0.4f64..0.4, ph in -0.4f64..0.4) {
            let s = Scene { objects: objs };
            let dir = angles::unit_vector(th, ph);
            let best = s
                .objects
                .iter()
                .filter_map(|o| o.intersect(&origin(), &dir, 0.0))
                .map(|h| h.distance)
                .fold(f64::INFINITY, f64::min);
            match s.cast(&origin(), th, ph, 0.0) {
                Some(h) => {
                    prop_assert!((h.distance - best).abs() < 1e-12);
                    prop_assert!(h.distance > 0.0 && (0.0..=1.0).contains(&h.incidence_cosine));
                }
                None => prop_assert!(best.is_infinite()),
            }
        }

        #[test]
        fn rotation_is_time_periodic(k in 0u32..50, t in 0.0f64..0.01, th in -0.1f64..0.1, ph in -0.1f64..0.1) {
            let f = 64.0;
            let s = chopper_scene(f);
            let a = s.cast(&origin(), th, ph, t).map(|h| (h.object, h.retro));
            let b = s.cast(&origin(), th, ph, t + k as f64 / f).map(|h| (h.object, h.retro));
            prop_assert_eq!(a, b);
        }
    }
}
