//! Detector waveform synthesis.
//!
//! Every shot fires one pulse along the zeroth- and first-order beams. Each
//! beam is cast into the scene; a hit returns an echo delayed by `2d/c`
//! with amplitude
//!
//! ```text
//! A = scale · P_beam · ρ · cos(i) / d^n · (retro ? g_retro : 1) · H(f)
//! ```
//!
//! rendered as a smoothed step (Gaussian edge of the configured 10–90 % rise
//! time), held for the pulse width, then decaying exponentially. An echo is
//! recorded by every detector whose acceptance cone contains the beam
//! direction. Echoes later than one period spill into the following shots,
//! so ranges beyond `c / (2 f_rep)` alias.
//!
//! # Waveform file format
//!
//! Little-endian, 48-byte header followed by `sample_count` `f32` samples:
//!
//! | offset | type    | field                          |
//! |--------|---------|--------------------------------|
//! | 0      | [u8; 4] | magic `MLWF`                   |
//! | 4      | u16     | version (1)                    |
//! | 6      | u8      | detector id (0 = A, 1 = B)     |
//! | 7      | u8      | reserved (0)                   |
//! | 8      | f64     | sample rate (Hz)               |
//! | 16     | f64     | pulse repetition rate (Hz)     |
//! | 24     | u64     | shots in the record            |
//! | 32     | f64     | start time t0 (s)              |
//! | 40     | u64     | sample count                   |

use std::io::{Read, Write};

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angles;
use crate::error::{Error, Result};
use crate::optics::{BeamState, DiffractionOrder, OpticsChain};
use crate::scanpattern::{RateReport, ScanPattern};
use crate::scene::{Hit, Scene};
use crate::SPEED_OF_LIGHT;

/// Ratio between the 10–90 % rise time and the sigma of a Gaussian edge.
const RISE_TO_SIGMA: f64 = 2.563;

pub const MAX_REPETITION_RATE: f64 = 250e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaserSpec {
    /// Pulse repetition rate (Hz).
    pub f_rep: f64,
    /// Amplitude scale (arbitrary units).
    pub pulse_energy_scale: f64,
    /// 10–90 % rise time of the detected edge (s).
    pub pulse_rise_time: f64,
    /// Flat top of the detected pulse (s).
    pub pulse_width: f64,
    /// Exponential decay constant after the flat top (s).
    pub decay_time: f64,
}

impl Default for LaserSpec {
    fn default() -> Self {
        Self {
            f_rep: 5e6,
            pulse_energy_scale: 1.0,
            pulse_rise_time: 330e-12,
            pulse_width: 1e-9,
            decay_time: 2e-9,
        }
    }
}

impl LaserSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_rep > 0.0 && self.f_rep <= MAX_REPETITION_RATE) {
            return Err(Error::domain("laser.f_rep", self.f_rep, "(0, 250 MHz]"));
        }
        for (name, v) in [
            ("laser.pulse_energy_scale", self.pulse_energy_scale),
            ("laser.pulse_rise_time", self.pulse_rise_time),
            ("laser.decay_time", self.decay_time),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(name, v, "> 0"));
            }
        }
        if !(self.pulse_width >= 0.0) {
            return Err(Error::domain("laser.pulse_width", self.pulse_width, ">= 0"));
        }
        Ok(())
    }

    /// Unambiguous range `c / (2 f_rep)` (m).
    pub fn max_range(&self) -> f64 {
        crate::max_range(self.f_rep)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Radiometry {
    /// Exponent `n` of the `1/d^n` falloff.
    pub distance_exponent: f64,
    /// Amplitude gain of retroreflective surfaces.
    pub retro_gain: f64,
}

impl Default for Radiometry {
    fn default() -> Self {
        Self {
            distance_exponent: 2.0,
            retro_gain: 10.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DetectorId {
    A,
    B,
}

impl DetectorId {
    pub fn code(self) -> u8 {
        match self {
            DetectorId::A => 0,
            DetectorId::B => 1,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(DetectorId::A),
            1 => Ok(DetectorId::B),
            c => Err(Error::format("waveform", format!("unknown detector id {c}"))),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DetectorId::A => "A",
            DetectorId::B => "B",
        }
    }
}

/// Angular acceptance of a detector, measured from the optical axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum NaMode {
    Full,
    /// Accepts everything outside a central cone.
    CentralBlock { half_angle_deg: f64 },
    /// Accepts only a central cone.
    Narrow { half_angle_deg: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSpec {
    pub id: DetectorId,
    /// Digitizer rate (samples/s).
    pub sample_rate: f64,
    /// RMS additive noise (amplitude units).
    pub noise_sigma: f64,
    pub na: NaMode,
}

/// Noise level giving a 20 dB amplitude SNR for a 0.8 Lambertian target at
/// 5 m on the centre first-order beam of the default two-axis chain.
pub const DEFAULT_NOISE_SIGMA: f64 = 9.0e-4;

impl Default for DetectorSpec {
    fn default() -> Self {
        Self {
            id: DetectorId::A,
            sample_rate: 3e9,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            // a small stop removes the on-axis zeroth order
            na: NaMode::CentralBlock { half_angle_deg: 0.5 },
        }
    }
}

impl DetectorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(Error::domain("detector.sample_rate", self.sample_rate, "> 0"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::domain("detector.noise_sigma", self.noise_sigma, ">= 0"));
        }
        match self.na {
            NaMode::Full => Ok(()),
            NaMode::CentralBlock { half_angle_deg } | NaMode::Narrow { half_angle_deg } => {
                if half_angle_deg > 0.0 && half_angle_deg < 90.0 {
                    Ok(())
                } else {
                    Err(Error::domain("detector.na.half_angle_deg", half_angle_deg, "(0, 90)"))
                }
            }
        }
    }

    /// Whether an echo returning along `dir` reaches this detector.
    pub fn accepts(&self, dir: &Vector3<f64>) -> bool {
        let alpha = angles::off_axis_angle(dir).to_degrees();
        match self.na {
            NaMode::Full => true,
            NaMode::CentralBlock { half_angle_deg } => alpha > half_angle_deg,
            NaMode::Narrow { half_angle_deg } => alpha <= half_angle_deg,
        }
    }
}

/// Samples per pulse period; the sample rate must be an integer multiple of `f_rep`.
pub fn samples_per_period(sample_rate: f64, f_rep: f64) -> Result<usize> {
    let n = sample_rate / f_rep;
    let rounded = n.round();
    if rounded < 1.0 || (n - rounded).abs() > 1e-6 * rounded {
        return Err(Error::Config(format!(
            "sample rate {sample_rate} Hz is not an integer multiple of f_rep {f_rep} Hz"
        )));
    }
    Ok(rounded as usize)
}

#[derive(Clone, Debug, PartialEq)]
pub struct WaveformRecord {
    pub samples: Vec<f32>,
    pub sample_rate: f64,
    pub f_rep: f64,
    pub n_pixels: usize,
    /// Time of the first sample (s).
    pub t0: f64,
    pub detector: DetectorId,
}

const MAGIC: &[u8; 4] = b"MLWF";
const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 48;

impl WaveformRecord {
    pub fn samples_per_period(&self) -> Result<usize> {
        samples_per_period(self.sample_rate, self.f_rep)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let header = self.header(self.samples.len());
        w.write_all(&header)?;
        write_samples(&mut w, &self.samples)
    }

    /// Header for a record of `sample_count` samples carrying this record's
    /// metadata; used to stream several frames into one file.
    pub fn header(&self, sample_count: usize) -> [u8; HEADER_LEN] {
        let mut header = [0u8; HEADER_LEN];
        header[0..4].copy_from_slice(MAGIC);
        header[4..6].copy_from_slice(&VERSION.to_le_bytes());
        header[6] = self.detector.code();
        header[8..16].copy_from_slice(&self.sample_rate.to_le_bytes());
        header[16..24].copy_from_slice(&self.f_rep.to_le_bytes());
        header[24..32].copy_from_slice(&(self.n_pixels as u64).to_le_bytes());
        header[32..40].copy_from_slice(&self.t0.to_le_bytes());
        header[40..48].copy_from_slice(&(sample_count as u64).to_le_bytes());
        header
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)?;
        if &header[0..4] != MAGIC {
            return Err(Error::format("waveform", "bad magic"));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != VERSION {
            return Err(Error::format("waveform", format!("unsupported version {version}")));
        }
        let f64_at = |o: usize| f64::from_le_bytes(header[o..o + 8].try_into().expect("8 bytes"));
        let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().expect("8 bytes"));
        let count = u64_at(40) as usize;
        let mut body = vec![0u8; count * 4];
        r.read_exact(&mut body)?;
        let samples = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        Ok(WaveformRecord {
            samples,
            sample_rate: f64_at(8),
            f_rep: f64_at(16),
            n_pixels: u64_at(24) as usize,
            t0: f64_at(32),
            detector: DetectorId::from_code(header[6])?,
        })
    }
}

/// Appends raw little-endian samples, as found after a record header.
pub fn write_samples<W: Write>(mut w: W, samples: &[f32]) -> Result<()> {
    let mut body = Vec::with_capacity(samples.len() * 4);
    for s in samples {
        body.extend_from_slice(&s.to_le_bytes());
    }
    w.write_all(&body)?;
    Ok(())
}

/// Both beams leaving the metasurface for one drive.
pub fn split_orders(v_x: f64, v_y: f64, chain: &OpticsChain) -> Result<(BeamState, BeamState)> {
    Ok((chain.zero_order(v_x, v_y), chain.first_order(v_x, v_y)?))
}

/// Echo amplitude for a hit on a beam of relative power `power`.
pub fn echo_amplitude(scale: f64, power: f64, hit: &Hit, radiometry: &Radiometry, attenuation: f64) -> f64 {
    let gain = if hit.retro { radiometry.retro_gain } else { 1.0 };
    scale * power * hit.reflectivity * hit.incidence_cosine / hit.distance.powf(radiometry.distance_exponent)
        * gain
        * attenuation
}

/// Echo shape in sample units.
#[derive(Clone, Copy, Debug)]
struct PulseShape {
    sigma: f64,
    width: f64,
    tau: f64,
}

impl PulseShape {
    fn new(laser: &LaserSpec, sample_rate: f64) -> Self {
        Self {
            sigma: laser.pulse_rise_time / RISE_TO_SIGMA * sample_rate,
            width: laser.pulse_width * sample_rate,
            tau: laser.decay_time * sample_rate,
        }
    }

    /// Value at `x` samples after the 50 % point of the leading edge.
    fn eval(&self, x: f64) -> f64 {
        let step = 0.5 * (1.0 + libm::erf(x / (std::f64::consts::SQRT_2 * self.sigma)));
        if x > self.width {
            step * (-(x - self.width) / self.tau).exp()
        } else {
            step
        }
    }

    /// Samples before and after the edge that an echo touches.
    fn support(&self) -> (f64, f64) {
        (6.0 * self.sigma + 1.0, self.width + 12.0 * self.tau + 1.0)
    }
}

/// Ground truth for one beam of one shot.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamEcho {
    pub order: DiffractionOrder,
    /// Actual beam direction (rad).
    pub theta: f64,
    pub phi: f64,
    pub hit: Option<Hit>,
    pub amplitude: f64,
    /// Round-trip delay (s).
    pub delay: f64,
    /// Indices into the synthesizer's detector list.
    pub accepted_by: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShotTruth {
    pub shot: u64,
    pub t: f64,
    /// Effective drive after the repointing lag.
    pub drive: (f64, f64),
    pub fire: bool,
    pub beams: Vec<BeamEcho>,
}

/// One frame of synthesized data: a record per detector plus ground truth.
#[derive(Clone, Debug)]
pub struct SynthFrame {
    pub index: usize,
    pub records: Vec<WaveformRecord>,
    pub truth: Vec<ShotTruth>,
}

/// Streaming synthesizer: frames must be produced in order so echoes and the
/// pointing lag carry across frame boundaries.
pub struct Synthesizer<'a> {
    pattern: &'a ScanPattern,
    scene: &'a Scene,
    chain: &'a OpticsChain,
    laser: &'a LaserSpec,
    radiometry: Radiometry,
    detectors: &'a [DetectorSpec],
    rate: RateReport,
    seeds: Vec<[u8; 32]>,
    n: usize,
    sample_rate: f64,
    next_frame: usize,
    drive: Option<(f64, f64)>,
    lag_gain: f64,
    carry: Vec<Vec<f64>>,
    /// Time of shot 0 (s).
    pub t_start: f64,
}

impl<'a> Synthesizer<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        pattern: &'a ScanPattern,
        scene: &'a Scene,
        chain: &'a OpticsChain,
        laser: &'a LaserSpec,
        radiometry: Radiometry,
        detectors: &'a [DetectorSpec],
        rate: RateReport,
        seed: u64,
    ) -> Result<Self> {
        laser.validate()?;
        pattern.validate()?;
        if detectors.is_empty() {
            return Err(Error::Config("at least one detector is required".into()));
        }
        for d in detectors {
            d.validate()?;
        }
        let sample_rate = detectors[0].sample_rate;
        if detectors.iter().any(|d| d.sample_rate != sample_rate) {
            return Err(Error::Config("all detectors must share one sample rate".into()));
        }
        let n = samples_per_period(sample_rate, laser.f_rep)?;
        if ((pattern.scan_rate - laser.f_rep) / laser.f_rep).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "pattern scan rate {} Hz must equal f_rep {} Hz (one pulse per direction)",
                pattern.scan_rate, laser.f_rep
            )));
        }
        if !pattern.is_uniform(1e-6) {
            return Err(Error::Config("pattern sample times must be uniform at 1/f_rep".into()));
        }
        let seeds = detectors
            .iter()
            .map(|d| {
                let mut s = [0u8; 32];
                s[..8].copy_from_slice(&seed.to_le_bytes());
                s[8] = d.id.code();
                s
            })
            .collect();
        let lag_gain = if rate.blur_shots > 0.0 {
            1.0 - (-1.0 / rate.blur_shots).exp()
        } else {
            1.0
        };
        Ok(Self {
            pattern,
            scene,
            chain,
            laser,
            radiometry,
            detectors,
            rate,
            seeds,
            n,
            sample_rate,
            next_frame: 0,
            drive: None,
            lag_gain,
            carry: vec![Vec::new(); detectors.len()],
            t_start: 0.0,
        })
    }

    pub fn samples_per_period(&self) -> usize {
        self.n
    }

    pub fn shots_per_frame(&self) -> usize {
        self.pattern.len()
    }

    fn beam_echo(&self, beam: BeamState, t: f64) -> BeamEcho {
        let dir = beam.direction();
        let hit = self.scene.cast_ray(&Vector3::zeros(), &dir, t);
        let (amplitude, delay) = match &hit {
            Some(h) => (
                echo_amplitude(self.laser.pulse_energy_scale, beam.power, h, &self.radiometry, self.rate.attenuation),
                2.0 * h.distance / SPEED_OF_LIGHT,
            ),
            None => (0.0, 0.0),
        };
        let accepted_by = if hit.is_some() {
            (0..self.detectors.len()).filter(|&i| self.detectors[i].accepts(&dir)).collect()
        } else {
            Vec::new()
        };
        BeamEcho {
            order: beam.order,
            theta: beam.direction_theta,
            phi: beam.direction_phi,
            hit,
            amplitude,
            delay,
            accepted_by,
        }
    }

    fn trace(&self, shot: u64, drive: (f64, f64), fire: bool) -> ShotTruth {
        let t = self.t_start + shot as f64 / self.laser.f_rep;
        let mut beams = Vec::with_capacity(2);
        if fire {
            beams.push(self.beam_echo(self.chain.zero_order(drive.0, drive.1), t));
            if let Ok(b) = self.chain.first_order(drive.0, drive.1) {
                beams.push(self.beam_echo(b, t));
            }
        }
        ShotTruth {
            shot,
            t,
            drive,
            fire,
            beams,
        }
    }

    /// Synthesizes the next frame.
    pub fn next_frame(&mut self) -> SynthFrame {
        let len = self.pattern.len();
        let frame = self.next_frame;
        self.next_frame += 1;
        let first_shot = (frame * len) as u64;

        let mut drives = Vec::with_capacity(len);
        for s in &self.pattern.samples {
            let target = (s.v_x, s.v_y);
            let d = match self.drive {
                None => target,
                Some(prev) => (
                    prev.0 + self.lag_gain * (target.0 - prev.0),
                    prev.1 + self.lag_gain * (target.1 - prev.1),
                ),
            };
            self.drive = Some(d);
            drives.push((d, s.fire));
        }

        let truth: Vec<ShotTruth> = drives
            .par_iter()
            .enumerate()
            .map(|(k, &(d, fire))| self.trace(first_shot + k as u64, d, fire))
            .collect();

        let total = len * self.n;
        let shape = PulseShape::new(self.laser, self.sample_rate);
        let (before, after) = shape.support();
        let (n, sample_rate) = (self.n, self.sample_rate);
        let mut records = Vec::with_capacity(self.detectors.len());
        for (di, det) in self.detectors.iter().enumerate() {
            let mut buf = vec![0.0_f64; total];
            let mut spill: Vec<f64> = Vec::new();
            let carry = std::mem::take(&mut self.carry[di]);
            for (i, c) in carry.iter().enumerate() {
                if i < total {
                    buf[i] += c;
                } else {
                    spill.resize(spill.len().max(i - total + 1), 0.0);
                    spill[i - total] += c;
                }
            }
            let pulses: Vec<(usize, Vec<f64>)> = truth
                .par_iter()
                .enumerate()
                .flat_map_iter(|(k, shot)| {
                    shot.beams
                        .iter()
                        .filter(|b| b.accepted_by.contains(&di))
                        .map(move |beam| {
                            let p = (k * n) as f64 + beam.delay * sample_rate;
                            let lo = (p - before).floor().max(0.0) as usize;
                            let hi = (p + after).ceil() as usize;
                            let v = (lo..=hi).map(|i| beam.amplitude * shape.eval(i as f64 - p)).collect();
                            (lo, v)
                        })
                })
                .collect();
            for (lo, v) in pulses {
                for (i, x) in (lo..).zip(v) {
                    if i < total {
                        buf[i] += x;
                    } else {
                        let j = i - total;
                        if spill.len() <= j {
                            spill.resize(j + 1, 0.0);
                        }
                        spill[j] += x;
                    }
                }
            }
            self.carry[di] = spill;

            let sigma = det.noise_sigma;
            let seed = self.seeds[di];
            let samples: Vec<f32> = buf
                .par_chunks(self.n)
                .enumerate()
                .flat_map_iter(|(k, row)| {
                    let mut rng = ChaCha8Rng::from_seed(seed);
                    rng.set_stream(first_shot + k as u64);
                    row.iter()
                        .map(move |&x| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            (x + sigma * z) as f32
                        })
                        .collect::<Vec<_>>()
                })
                .collect();

            records.push(WaveformRecord {
                samples,
                sample_rate: self.sample_rate,
                f_rep: self.laser.f_rep,
                n_pixels: len,
                t0: self.t_start + first_shot as f64 / self.laser.f_rep,
                detector: det.id,
            });
        }
        SynthFrame {
            index: frame,
            records,
            truth,
        }
    }
}

/// Synthesizes `n_frames` consecutive frames into one record per detector.
#[allow(clippy::too_many_arguments)]
pub fn synthesize(
    pattern: &ScanPattern,
    scene: &Scene,
    chain: &OpticsChain,
    laser: &LaserSpec,
    radiometry: Radiometry,
    detectors: &[DetectorSpec],
    rate: RateReport,
    seed: u64,
    n_frames: usize,
) -> Result<Vec<WaveformRecord>> {
    let mut synth = Synthesizer::new(pattern, scene, chain, laser, radiometry, detectors, rate, seed)?;
    let mut out: Vec<WaveformRecord> = Vec::new();
    for _ in 0..n_frames {
        let frame = synth.next_frame();
        if out.is_empty() {
            out = frame.records;
        } else {
            for (acc, r) in out.iter_mut().zip(frame.records) {
                acc.samples.extend_from_slice(&r.samples);
                acc.n_pixels += r.n_pixels;
            }
        }
    }
    Ok(out)
}

/// One frame with its ground truth.
#[allow(clippy::too_many_arguments)]
pub fn synthesize_with_truth(
    pattern: &ScanPattern,
    scene: &Scene,
    chain: &OpticsChain,
    laser: &LaserSpec,
    radiometry: Radiometry,
    detectors: &[DetectorSpec],
    rate: RateReport,
    seed: u64,
) -> Result<(Vec<WaveformRecord>, Vec<ShotTruth>)> {
    let mut synth = Synthesizer::new(pattern, scene, chain, laser, radiometry, detectors, rate, seed)?;
    let frame = synth.next_frame();
    Ok((frame.records, frame.truth))
}
