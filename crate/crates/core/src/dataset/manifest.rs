//! Line-delimited JSON manifests: one header line, then one record per step.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Detection;
use crate::sim::{CameraIntrinsics, DirectionCommand, EpisodeConfig, Pose, Vec2};

pub const MANIFEST_FORMAT: &str = "simrepr-manifest";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestHeader {
    pub format: String,
    pub version: u32,
    pub scene: String,
    pub seed: u64,
    pub episodes: usize,
    pub config: EpisodeConfig,
}

impl ManifestHeader {
    pub fn new(scene: &str, seed: u64, episodes: usize, config: EpisodeConfig) -> Self {
        Self { format: MANIFEST_FORMAT.into(), version: MANIFEST_VERSION, scene: scene.into(), seed, episodes, config }
    }

    pub fn camera(&self) -> &CameraIntrinsics {
        &self.config.camera
    }
}

/// One expert step. Image paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub episode: usize,
    pub step: usize,
    pub recovery: bool,
    pub scene: String,
    pub seed: u64,
    /// 16-bit millimeter depth PGM.
    pub depth: String,
    /// 8-bit class-id PGM.
    pub classes: String,
    pub detections: Vec<Detection>,
    pub command: DirectionCommand,
    /// Normalized expert action `[v, omega]`.
    pub action: [f64; 2],
    pub pose: Pose,
    pub pedestrians: Vec<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub header: ManifestHeader,
    pub records: Vec<Record>,
}

impl Manifest {
    pub fn to_writer(&self, w: impl Write) -> Result<()> {
        let mut w = BufWriter::new(w);
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn from_reader(r: impl std::io::Read) -> Result<Self> {
        let mut r = BufReader::new(r);
        let mut line = String::new();
        let mut offset = 0;
        let bad = |offset: usize, e: &dyn std::fmt::Display| Error::Malformed { format: "manifest", offset, message: e.to_string() };
        if r.read_line(&mut line)? == 0 {
            return Err(bad(0, &"missing header line"));
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| bad(0, &e))?;
        if value.get("format").and_then(|v| v.as_str()) != Some(MANIFEST_FORMAT) {
            return Err(bad(0, &"not a manifest header"));
        }
        let version = value.get("version").and_then(|v| v.as_u64()).ok_or_else(|| bad(0, &"header lacks a version"))?;
        if version != u64::from(MANIFEST_VERSION) {
            return Err(Error::Version { found: version as u32, expected: MANIFEST_VERSION });
        }
        let header: ManifestHeader = serde_json::from_value(value).map_err(|e| bad(0, &e))?;
        offset += line.len();
        let mut records = Vec::new();
        loop {
            line.clear();
            let n = r.read_line(&mut line)?;
            if n == 0 {
                break;
            }
            if !line.trim().is_empty() {
                records.push(serde_json::from_str(&line).map_err(|e| bad(offset, &e))?);
            }
            offset += n;
        }
        Ok(Self { header, records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_writer(std::fs::File::create(path)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }
}

pub fn write_manifest(m: &Manifest, path: &Path) -> Result<()> {
    m.save(path)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    Manifest::load(path)
}
