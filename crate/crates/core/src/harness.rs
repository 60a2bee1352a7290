//! Configured runs: build the calibration, pattern and scene from a
//! [`RunConfig`], stream synthesis frame by frame through the pipeline and
//! hand each frame to a caller-supplied sink.

use std::str::FromStr;
use std::time::{Duration, Instant};

use crate::analysis::{self, Cluster, FeatureSize, SpeedEstimate, TrackOptions};
use crate::calibration::{CalibrationCurve, CalibrationMaps};
use crate::config::{AnalysisConfig, PatternConfig, RunConfig};
use crate::error::{Error, Result};
use crate::optics::OpticsChain;
use crate::pipeline::{assemble, extract_tof, fold, AngleSource, RangingFrame, TimeSeries};
use crate::scanpattern::{check_rate, RateReport, ScanLimits, ScanPattern};
use crate::scene::Scene;
use crate::signal::{DetectorSpec, NaMode, ShotTruth, SynthFrame, Synthesizer};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scenario {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::Fig2, Scenario::Fig3, Scenario::Fig4, Scenario::Fig5];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Fig2 => "fig2",
            Scenario::Fig3 => "fig3",
            Scenario::Fig4 => "fig4",
            Scenario::Fig5 => "fig5",
        }
    }

    /// Commented configuration file shipped with the crate.
    pub fn config_text(self) -> &'static str {
        match self {
            Scenario::Fig2 => include_str!("../configs/fig2.toml"),
            Scenario::Fig3 => include_str!("../configs/fig3.toml"),
            Scenario::Fig4 => include_str!("../configs/fig4.toml"),
            Scenario::Fig5 => include_str!("../configs/fig5.toml"),
        }
    }

    /// The bundled configuration; `row` selects a parameter set for the
    /// chopper scenario and is rejected elsewhere.
    pub fn config(self, row: Option<TableRow>) -> Result<RunConfig> {
        let mut c = RunConfig::from_toml_str(self.config_text())?;
        if let Some(row) = row {
            if self != Scenario::Fig5 {
                return Err(Error::Config(format!("scenario {} has no parameter sets", self.name())));
            }
            row.apply(&mut c)?;
        }
        Ok(c)
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario {s:?} (fig2, fig3, fig4, fig5)")))
    }
}

/// The three velocimetry parameter sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TableRow {
    One,
    Two,
    Three,
}

impl TableRow {
    pub const ALL: [TableRow; 3] = [TableRow::One, TableRow::Two, TableRow::Three];

    pub fn from_index(n: u8) -> Result<Self> {
        match n {
            1 => Ok(TableRow::One),
            2 => Ok(TableRow::Two),
            3 => Ok(TableRow::Three),
            _ => Err(Error::Config(format!("parameter set {n} does not exist (1, 2, 3)"))),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            TableRow::One => 1,
            TableRow::Two => 2,
            TableRow::Three => 3,
        }
    }

    pub fn grid(self) -> usize {
        match self {
            TableRow::One => 150,
            TableRow::Two | TableRow::Three => 70,
        }
    }

    /// Pulse repetition rate (Hz); 16.67 MHz is taken as 3 GS/s / 180.
    pub fn f_rep(self) -> f64 {
        match self {
            TableRow::One | TableRow::Three => 3e9 / 180.0,
            TableRow::Two => 5e6,
        }
    }

    pub fn total_frames(self) -> usize {
        match self {
            TableRow::One => 63,
            TableRow::Two => 87,
            TableRow::Three => 290,
        }
    }

    pub fn apply(self, c: &mut RunConfig) -> Result<()> {
        c.laser.f_rep = self.f_rep();
        match &mut c.pattern {
            PatternConfig::Raster { grid, .. } => {
                *grid = [self.grid(), self.grid()];
                Ok(())
            }
            _ => Err(Error::Config("parameter sets apply to raster patterns only".into())),
        }
    }
}

/// Everything a run needs, built and validated.
pub struct Prepared {
    pub config: RunConfig,
    pub seed: u64,
    pub curve: CalibrationCurve,
    pub maps: CalibrationMaps,
    pub pattern: ScanPattern,
    pub scene: Scene,
    pub rate: RateReport,
    pub frames: usize,
}

pub fn prepare(config: &RunConfig) -> Result<Prepared> {
    config.validate()?;
    let seed = config
        .seed
        .ok_or_else(|| Error::Config("seed: required for synthesis runs".into()))?;
    let curve = config.curve()?;
    let maps = config.maps(&curve)?;
    let pattern = config.pattern(&maps)?;
    let scene = config.scene()?;
    let rate = if config.rate_limits {
        check_rate(&pattern, &ScanLimits::from_aod(&config.optics.aod), config.optics.axes)
    } else {
        RateReport::ideal(pattern.scan_rate)
    };
    if rate.above_cutoff {
        log::warn!(
            "repointing at {:.3} MHz is above the deflector cutoff; amplitude {:.2} dB",
            rate.frequency / 1e6,
            rate.attenuation_db()
        );
    }
    let frames = config.frame_count(pattern.len())?;
    Ok(Prepared {
        config: config.clone(),
        seed,
        curve,
        maps,
        pattern,
        scene,
        rate,
        frames,
    })
}

/// Narrow-aperture detectors see the undeflected beam, so their pixels take
/// the zeroth-order direction; all others use the commanded direction.
pub fn angle_source<'a>(detector: &DetectorSpec, chain: &'a OpticsChain) -> AngleSource<'a> {
    match detector.na {
        NaMode::Narrow { .. } => AngleSource::ZeroOrder(chain),
        _ => AngleSource::Commanded,
    }
}

#[derive(Clone, Debug)]
pub struct RunSummary {
    /// One series per configured detector, in configuration order.
    pub series: Vec<TimeSeries>,
    /// Per-shot ground truth for all frames, when requested.
    pub truth: Vec<ShotTruth>,
    pub rate: RateReport,
    pub synthesis_time: Duration,
    pub pipeline_time: Duration,
}

impl RunSummary {
    pub fn first_frame(&self, detector: usize) -> Option<&RangingFrame> {
        self.series.get(detector)?.frames.first()
    }
}

/// Runs synthesis and reconstruction frame by frame.
pub fn execute(
    prep: &Prepared,
    keep_truth: bool,
    mut sink: impl FnMut(&SynthFrame, &[RangingFrame]) -> Result<()>,
) -> Result<RunSummary> {
    let c = &prep.config;
    let mut synth = Synthesizer::new(
        &prep.pattern,
        &prep.scene,
        &c.optics,
        &c.laser,
        c.radiometry.clone(),
        &c.detectors,
        prep.rate,
        prep.seed,
    )
    .map_err(|e| e.context("signal", "laser/detectors/pattern"))?;
    let period = prep.pattern.len() as f64 / c.laser.f_rep;
    let mut series: Vec<TimeSeries> = c
        .detectors
        .iter()
        .map(|_| TimeSeries {
            frames: Vec::with_capacity(prep.frames),
            frame_period: period,
        })
        .collect();
    let mut truth = Vec::new();
    let (mut t_synth, mut t_pipe) = (Duration::ZERO, Duration::ZERO);
    for _ in 0..prep.frames {
        let t0 = Instant::now();
        let frame = synth.next_frame();
        t_synth += t0.elapsed();

        let t1 = Instant::now();
        let ranged = frame
            .records
            .iter()
            .zip(&c.detectors)
            .map(|(rec, det)| {
                let m = fold(rec)?;
                let tofs = extract_tof(&m, &c.pipeline);
                assemble(&tofs, &prep.pattern, angle_source(det, &c.optics), det.id, rec.f_rep, rec.t0)
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| e.context("pipeline", "pipeline"))?;
        t_pipe += t1.elapsed();

        sink(&frame, &ranged)?;
        for (s, f) in series.iter_mut().zip(ranged) {
            s.frames.push(f);
        }
        if keep_truth {
            truth.extend(frame.truth);
        }
    }
    Ok(RunSummary {
        series,
        truth,
        rate: prep.rate,
        synthesis_time: t_synth,
        pipeline_time: t_pipe,
    })
}

/// Prepares and runs a configuration in memory.
pub fn run(config: &RunConfig) -> Result<RunSummary> {
    let prep = prepare(config)?;
    execute(&prep, true, |_, _| Ok(()))
}

pub fn track_options(a: &AnalysisConfig) -> TrackOptions {
    TrackOptions {
        center: a.track_center.map(|c| (c[0], c[1])),
        bins: a.track_bins,
        min_radius: a.track_min_radius,
        max_radius: a.track_max_radius,
        depth_window: a.depth_window.map(|w| (w[0], w[1])),
    }
}

/// Tracks the bright feature through a series and fits its rotation speed.
pub fn rotation_of(series: &TimeSeries, a: &AnalysisConfig) -> Result<(analysis::AngularTrack, SpeedEstimate)> {
    let track = analysis::track_rotation(series, &track_options(a))?;
    let speed = analysis::rotation_speed(&track, a.expected_hz)?;
    Ok((track, speed))
}

pub fn feature_of(frame: &RangingFrame, a: &AnalysisConfig) -> Result<Option<FeatureSize>> {
    let w = a
        .depth_window
        .ok_or_else(|| Error::Config("analysis.depth_window: required for feature size".into()))?;
    analysis::feature_size(frame, (w[0], w[1]), a.feature_threshold)
}

pub fn clusters_of(frame: &RangingFrame, a: &AnalysisConfig) -> Vec<Cluster> {
    analysis::clusters(frame, a.cluster_depth_step, a.cluster_min_pixels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_configs_validate() {
        for s in Scenario::ALL {
            let c = s.config(None).unwrap();
            c.validate().unwrap();
            assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
        }
        for row in TableRow::ALL {
            let c = Scenario::Fig5.config(Some(row)).unwrap();
            let p = prepare(&c).unwrap();
            assert_eq!(p.frames, row.total_frames());
        }
        assert!(Scenario::Fig2.config(Some(TableRow::One)).is_err());
        assert!("fig9".parse::<Scenario>().is_err());
    }

    #[test]
    fn missing_seed_is_config_error() {
        let mut c = Scenario::Fig2.config(None).unwrap();
        c.seed = None;
        assert!(matches!(prepare(&c), Err(Error::Config(_))));
    }
}
