use std::fs::File;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FileEntry {
    /// Relative to the run directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Timing {
    pub synthesis_s: f64,
    pub pipeline_s: f64,
    pub export_s: f64,
    pub total_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RateSummary {
    pub repoint_hz: f64,
    pub attenuation_db: f64,
    pub above_cutoff: bool,
    pub blur_shots: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub scenario: Option<String>,
    /// Resolved configuration, relative to the run directory.
    pub config: String,
    pub frames: usize,
    pub pixels: usize,
    pub grid: Option<[usize; 2]>,
    pub frame_period_s: f64,
    pub f_rep_hz: f64,
    pub max_range_m: f64,
    pub detectors: Vec<String>,
    pub rate: RateSummary,
    pub timing: Timing,
    pub files: Vec<FileEntry>,
}

impl Manifest {
    pub fn load(run_dir: &Path) -> metalidar::Result<Self> {
        let path = run_dir.join(MANIFEST_NAME);
        let text = std::fs::read_to_string(&path)?;
        serde_json::from_str(&text)
            .map_err(|e| metalidar::Error::Config(format!("{}: {e}", path.display())))
    }
}

pub fn sha256_file(path: &Path) -> io::Result<(u64, String)> {
    let mut f = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    let mut total = 0u64;
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        total += n as u64;
    }
    Ok((total, hex::encode(hasher.finalize())))
}

pub fn entries(root: &Path, files: &[PathBuf]) -> io::Result<Vec<FileEntry>> {
    files
        .iter()
        .map(|rel| {
            let (bytes, sha256) = sha256_file(&root.join(rel))?;
            let path = rel
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            Ok(FileEntry { path, bytes, sha256 })
        })
        .collect()
}
