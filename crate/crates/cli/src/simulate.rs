use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use metalidar::harness::{self, Prepared};
use metalidar::pipeline::RangingFrame;
use metalidar::signal::{samples_per_period, write_samples, SynthFrame, WaveformRecord};
use metalidar::{max_range, Result};

use crate::manifest::{self, Manifest, RateSummary, Timing, MANIFEST_NAME};
use crate::{ConfigSource, Failure};

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub source: ConfigSource,
    /// Overrides the frame count.
    #[arg(long)]
    pub frames: Option<usize>,
}

/// Open outputs for one detector.
struct DetectorSink {
    label: String,
    waveform: Option<(PathBuf, BufWriter<File>)>,
    total_samples: usize,
    index: String,
}

pub fn run(args: &SimulateArgs) -> std::result::Result<(), Failure> {
    let t_start = Instant::now();
    let mut config = args.source.load()?;
    if let Some(n) = args.frames {
        config.frames = Some(n);
        config.record_capacity_samples = None;
    }
    let prep = harness::prepare(&config)?;
    let out = config.output_dir.clone();
    fs::create_dir_all(&out)?;

    let mut written: Vec<PathBuf> = Vec::new();
    let config_name = PathBuf::from("config.toml");
    let mut resolved = config.clone();
    resolved.seed = Some(prep.seed);
    resolved.frames = Some(prep.frames);
    resolved.record_capacity_samples = None;
    fs::write(out.join(&config_name), resolved.to_toml_string())?;
    written.push(config_name.clone());

    let mut sinks = open_sinks(&prep, &out)?;
    let t_export = std::cell::Cell::new(std::time::Duration::ZERO);
    let summary = harness::execute(&prep, false, |frame, ranged| {
        let t = Instant::now();
        let r = export_frame(&prep, &out, &mut sinks, &mut written, frame, ranged);
        t_export.set(t_export.get() + t.elapsed());
        r
    })?;

    for s in &mut sinks {
        if let Some((rel, mut w)) = s.waveform.take() {
            w.flush()?;
            written.push(rel);
        }
        let rel = PathBuf::from(format!("series_{}.csv", s.label));
        fs::write(out.join(&rel), &s.index)?;
        written.push(rel);
    }

    let c = &prep.config;
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: prep.seed,
        scenario: args.source.scenario.clone(),
        config: config_name.display().to_string(),
        frames: prep.frames,
        pixels: prep.pattern.len(),
        grid: prep.pattern.grid.map(|(x, y)| [x, y]),
        frame_period_s: prep.pattern.len() as f64 / c.laser.f_rep,
        f_rep_hz: c.laser.f_rep,
        max_range_m: max_range(c.laser.f_rep),
        detectors: c.detectors.iter().map(|d| d.id.label().to_string()).collect(),
        rate: RateSummary {
            repoint_hz: summary.rate.frequency,
            attenuation_db: summary.rate.attenuation_db(),
            above_cutoff: summary.rate.above_cutoff,
            blur_shots: summary.rate.blur_shots,
        },
        timing: Timing {
            synthesis_s: summary.synthesis_time.as_secs_f64(),
            pipeline_s: summary.pipeline_time.as_secs_f64(),
            export_s: t_export.get().as_secs_f64(),
            total_s: t_start.elapsed().as_secs_f64(),
        },
        files: manifest::entries(&out, &written)?,
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(out.join(MANIFEST_NAME), json + "\n")?;

    println!(
        "{} frame(s) of {} pixels at {:.1} fps -> {}",
        prep.frames,
        manifest.pixels,
        1.0 / manifest.frame_period_s,
        out.display()
    );
    for (s, series) in sinks.iter().zip(&summary.series) {
        let hits: usize = series.frames.iter().map(RangingFrame::hits).sum();
        println!("detector {}: {hits} hits", s.label);
    }
    println!(
        "synthesis {:.2} s, pipeline {:.2} s, total {:.2} s",
        manifest.timing.synthesis_s, manifest.timing.pipeline_s, manifest.timing.total_s
    );
    Ok(())
}

fn open_sinks(prep: &Prepared, out: &Path) -> Result<Vec<DetectorSink>> {
    let c = &prep.config;
    c.detectors
        .iter()
        .map(|d| {
            let label = d.id.label().to_string();
            if c.export.frames {
                fs::create_dir_all(out.join("frames").join(&label))?;
            }
            if c.export.point_clouds {
                fs::create_dir_all(out.join("clouds").join(&label))?;
            }
            let n = samples_per_period(d.sample_rate, c.laser.f_rep)?;
            let waveform = if c.export.waveforms {
                let rel = PathBuf::from(format!("waveform_{label}.bin"));
                Some((rel.clone(), BufWriter::new(File::create(out.join(rel))?)))
            } else {
                None
            };
            Ok(DetectorSink {
                label,
                waveform,
                total_samples: prep.frames * prep.pattern.len() * n,
                index: String::from("frame,timestamp_s,hits,file\n"),
            })
        })
        .collect()
}

fn export_frame(
    prep: &Prepared,
    out: &Path,
    sinks: &mut [DetectorSink],
    written: &mut Vec<PathBuf>,
    frame: &SynthFrame,
    ranged: &[RangingFrame],
) -> Result<()> {
    let export = &prep.config.export;
    for ((s, rec), f) in sinks.iter_mut().zip(&frame.records).zip(ranged) {
        if let Some((_, w)) = s.waveform.as_mut() {
            if frame.index == 0 {
                let meta = WaveformRecord {
                    samples: Vec::new(),
                    n_pixels: prep.frames * prep.pattern.len(),
                    ..rec.clone()
                };
                w.write_all(&meta.header(s.total_samples))?;
            }
            write_samples(&mut *w, &rec.samples)?;
        }
        let stem = format!("frame_{:05}", frame.index);
        let mut file = String::new();
        if export.frames {
            let rel = Path::new("frames").join(&s.label).join(format!("{stem}.csv"));
            fs::write(out.join(&rel), f.to_csv())?;
            file = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            written.push(rel);
        }
        if export.point_clouds {
            let rel = Path::new("clouds").join(&s.label).join(format!("{stem}.xyz"));
            fs::write(out.join(&rel), f.to_xyzi())?;
            written.push(rel);
        }
        s.index += &format!("{},{},{},{file}\n", frame.index, f.timestamp, f.hits());
    }
    Ok(())
}
