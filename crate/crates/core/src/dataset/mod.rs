//! Persistence and dataset assembly: every representation kind is derived
//! from one set of recorded expert runs.

pub mod codec;
pub mod manifest;

use std::ops::Range;
use std::path::Path;

use rayon::prelude::*;

pub use codec::*;
pub use manifest::{read_manifest, write_manifest, Manifest, ManifestHeader, Record, MANIFEST_FORMAT, MANIFEST_VERSION};

use crate::error::{Error, Result};
use crate::image::{PrimaryImage, ReprBundle, ReprKind};
use crate::net::Sample;
use crate::noise::NoiseParams;
use crate::repr::{build_bundle, quantize_mm, RawObservation};
use crate::rng::RngStream;
use crate::semantic::CategoryMap;
use crate::sim::{render, CameraIntrinsics, DirectionCommand, Episode, EpisodeConfig, Scene};

/// How to turn records into observations.
#[derive(Debug, Clone)]
pub struct ReprOptions {
    pub kind: ReprKind,
    pub noise: NoiseParams,
    pub seed: u64,
    /// Output `(width, height)`.
    pub size: (usize, usize),
    pub map: CategoryMap,
}

/// Noise stream for record `index`; independent of worker scheduling.
pub fn augment_stream(seed: u64, index: usize) -> RngStream {
    RngStream::new(seed).named("augment").substream(index as u64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Item {
    pub index: usize,
    pub bundle: ReprBundle,
    pub command: DirectionCommand,
    pub action: [f64; 2],
}

impl Item {
    pub fn to_sample(&self) -> Sample {
        Sample {
            primary: self.bundle.primary().normalized(),
            semantic: self.bundle.semantic().map(|s| s.data().iter().map(|&v| f32::from(v) / 255.0).collect()),
            command: self.command,
            target: [self.action[0] as f32, self.action[1] as f32],
        }
    }
}

pub fn image_paths(episode: usize, step: usize) -> (String, String) {
    (format!("images/e{episode:05}_s{step:04}_depth.pgm"), format!("images/e{episode:05}_s{step:04}_classes.pgm"))
}

/// Manifest for generated episodes. With `root`, the depth and class-id
/// images are rendered and written below it.
pub fn record_episodes(root: Option<&Path>, scene: &Scene, seed: u64, cfg: &EpisodeConfig, episodes: &[Episode]) -> Result<Manifest> {
    let mut records = Vec::new();
    for ep in episodes {
        for r in &ep.records {
            let (depth, classes) = image_paths(ep.index, r.step);
            records.push(Record {
                episode: ep.index,
                step: r.step,
                recovery: ep.recovery,
                scene: scene.name.clone(),
                seed,
                depth,
                classes,
                detections: r.detections.clone(),
                command: r.command,
                action: r.action.normalized(),
                pose: r.pose,
                pedestrians: r.pedestrians.clone(),
            });
        }
    }
    if let Some(root) = root {
        std::fs::create_dir_all(root.join("images"))?;
        records.par_iter().try_for_each(|rec| -> Result<()> {
            let raw = render_raw(scene, rec, &cfg.camera);
            write_depth_pgm(&raw.depth, &root.join(&rec.depth))?;
            write_gray_pgm(&raw.class_ids, &root.join(&rec.classes))
        })?;
    }
    Ok(Manifest { header: ManifestHeader::new(&scene.name, seed, episodes.len(), *cfg), records })
}

/// Re-renders a record's images; equal to what [`record_episodes`] wrote.
pub fn render_raw(scene: &Scene, rec: &Record, cam: &CameraIntrinsics) -> RawObservation {
    let frame = render(scene, &rec.pedestrians, &rec.pose, cam);
    RawObservation { depth: quantize_mm(&frame.depth), class_ids: frame.class_ids(scene), detections: rec.detections.clone() }
}

fn missing(rec: &Record, root: &Path, file: &str) -> impl Fn(Error) -> Error {
    let record = format!("episode {} step {}", rec.episode, rec.step);
    let path = root.join(file);
    move |e| match e {
        Error::Io(io) if io.kind() == std::io::ErrorKind::NotFound => Error::MissingAsset { record: record.clone(), path: path.clone() },
        other => other,
    }
}

/// Reads a record's images from disk.
pub fn load_raw(root: &Path, rec: &Record) -> Result<RawObservation> {
    let depth = read_depth_pgm(&root.join(&rec.depth)).map_err(missing(rec, root, &rec.depth))?;
    let class_ids = read_gray_pgm(&root.join(&rec.classes)).map_err(missing(rec, root, &rec.classes))?;
    Ok(RawObservation { depth, class_ids, detections: rec.detections.clone() })
}

/// Builds observations for `range` of `records`, in parallel, in order.
pub fn materialize_with<F>(records: &[Record], range: Range<usize>, load: F, opts: &ReprOptions) -> Result<Vec<Item>>
where
    F: Fn(&Record) -> Result<RawObservation> + Sync,
{
    range
        .into_par_iter()
        .map(|i| {
            let rec = &records[i];
            let raw = load(rec)?;
            let bundle = build_bundle(opts.kind, &raw, opts.size, &opts.noise, &opts.map, &augment_stream(opts.seed, i))?;
            Ok(Item { index: i, bundle, command: rec.command, action: rec.action })
        })
        .collect()
}

/// Every record of a manifest stored under `root`.
pub fn materialize(manifest: &Manifest, root: &Path, opts: &ReprOptions) -> Result<Vec<Item>> {
    materialize_with(&manifest.records, 0..manifest.records.len(), |r| load_raw(root, r), opts)
}

/// Training samples for every record, built in bounded chunks so only the
/// network-sized inputs stay in memory.
pub fn collect_samples<F>(records: &[Record], load: F, opts: &ReprOptions) -> Result<Vec<Sample>>
where
    F: Fn(&Record) -> Result<RawObservation> + Sync,
{
    const CHUNK: usize = 512;
    let n = records.len();
    let mut out = Vec::with_capacity(n);
    for start in (0..n).step_by(CHUNK) {
        let items = materialize_with(records, start..(start + CHUNK).min(n), &load, opts)?;
        out.extend(items.iter().map(Item::to_sample));
    }
    Ok(out)
}

/// Training samples from the images stored under `root`.
pub fn load_samples(manifest: &Manifest, root: &Path, opts: &ReprOptions) -> Result<Vec<Sample>> {
    collect_samples(&manifest.records, |r| load_raw(root, r), opts)
}

/// Training samples re-rendered from the manifest instead of read from
/// disk; identical to [`load_samples`].
pub fn render_samples(scene: &Scene, manifest: &Manifest, opts: &ReprOptions) -> Result<Vec<Sample>> {
    let cam = manifest.header.config.camera;
    collect_samples(&manifest.records, |r| Ok(render_raw(scene, r, &cam)), opts)
}

/// Writes a bundle's images as `<stem>_<part>.<ext>`; returns the file names.
pub fn write_bundle(bundle: &ReprBundle, dir: &Path, stem: &str) -> Result<Vec<String>> {
    let mut names = Vec::new();
    match bundle.primary() {
        PrimaryImage::Depth(d) => {
            names.push(format!("{stem}_depth.pgm"));
            write_depth_pgm(d, &dir.join(&names[0]))?;
        }
        PrimaryImage::Gray(g) => {
            names.push(format!("{stem}_seg.pgm"));
            write_gray_pgm(g, &dir.join(&names[0]))?;
        }
        PrimaryImage::Rgb(c) => {
            names.push(format!("{stem}_rgb.png"));
            write_rgb_png(c, &dir.join(&names[0]))?;
        }
    }
    if let Some(s) = bundle.semantic() {
        names.push(format!("{stem}_det.pgm"));
        write_gray_pgm(s, &dir.join(&names[1]))?;
    }
    Ok(names)
}
