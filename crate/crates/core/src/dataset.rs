//! On-disk dataset layout.
//!
//! A dataset is a directory:
//!
//! ```text
//! <dir>/
//!   manifest.json      provenance + per-sample metadata
//!   labels.bin         u16 little-endian, one per sample
//!   samples/000000.dgt one tensor container per sample
//! ```
//!
//! Raw capture datasets hold `[2, T, 2]` f32 frames (channel, time, re/im);
//! spectrogram datasets hold `[2, H, W]` f32 images. `labels.bin` duplicates
//! the labels in the manifest so bulk consumers can slurp labels without
//! JSON, and the two are cross-checked on read.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::container;
use crate::error::{Error, Result};
use crate::radar::IQFrame;
use crate::Tensor;

/// Everything needed to regenerate one raw capture.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FrameSampleMeta {
    pub file: String,
    pub label: u16,
    pub kind: String,
    pub distance_m: f64,
    pub scale_m: f64,
    pub speed_mps: f64,
    pub duration_s: f64,
    pub start_frac: f64,
    pub seed: u64,
}

/// Manifest of a raw I/Q capture dataset.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct FrameManifest {
    pub version: u32,
    pub fs_hz: f64,
    pub snr_db: Option<f64>,
    pub classes: Vec<String>,
    pub samples: Vec<FrameSampleMeta>,
}

/// Manifest of a derived spectrogram dataset.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SpecManifest {
    pub version: u32,
    /// Which time-frequency transform produced the images.
    pub transform: String,
    pub height: usize,
    pub width: usize,
    pub classes: Vec<String>,
    pub labels: Vec<u16>,
    pub files: Vec<String>,
}

pub const MANIFEST_VERSION: u32 = 1;

fn sample_rel_path(i: usize) -> String {
    format!("samples/{i:06}.dgt")
}

fn write_labels(dir: &Path, labels: &[u16]) -> Result<()> {
    let mut buf = Vec::with_capacity(labels.len() * 2);
    for l in labels {
        buf.extend_from_slice(&l.to_le_bytes());
    }
    let mut f = fs::File::create(dir.join("labels.bin"))?;
    f.write_all(&buf)?;
    Ok(())
}

fn read_labels(dir: &Path) -> Result<Vec<u16>> {
    let mut bytes = Vec::new();
    fs::File::open(dir.join("labels.bin"))?.read_to_end(&mut bytes)?;
    if bytes.len() % 2 != 0 {
        return Err(Error::BadDataset(format!(
            "labels.bin has odd length {}",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect())
}

fn prepare_dirs(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("samples"))?;
    Ok(())
}

fn write_manifest<M: Serialize>(dir: &Path, manifest: &M) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)?;
    let mut f = fs::File::create(dir.join("manifest.json"))?;
    f.write_all(json.as_bytes())?;
    f.write_all(b"\n")?;
    Ok(())
}

fn read_manifest<M: for<'de> Deserialize<'de>>(dir: &Path) -> Result<M> {
    let mut json = String::new();
    fs::File::open(dir.join("manifest.json"))?.read_to_string(&mut json)?;
    Ok(serde_json::from_str(&json)?)
}

/// Write raw captures to `dir`. `classes[label]` names each label.
pub fn write_frame_dataset(dir: &Path, frames: &[IQFrame], classes: &[String]) -> Result<()> {
    if frames.is_empty() {
        return Err(Error::EmptyDataset("no frames to write".into()));
    }
    let (fs_hz, snr_db) = (frames[0].fs_hz, frames[0].snr_db);
    for f in frames {
        if f.fs_hz != fs_hz || f.snr_db != snr_db {
            return Err(Error::BadDataset(
                "frames disagree on fs or SNR; one dataset = one capture setup".into(),
            ));
        }
        if usize::from(f.label) >= classes.len() {
            return Err(Error::BadDataset(format!(
                "label {} out of range for {} classes",
                f.label,
                classes.len()
            )));
        }
    }
    prepare_dirs(dir)?;
    let mut samples = Vec::with_capacity(frames.len());
    for (i, frame) in frames.iter().enumerate() {
        let rel = sample_rel_path(i);
        container::write_tensor(&dir.join(&rel), &frame.to_tensor())?;
        samples.push(FrameSampleMeta {
            file: rel,
            label: frame.label,
            kind: frame.spec.kind.to_string(),
            distance_m: frame.spec.distance_m,
            scale_m: frame.spec.scale_m,
            speed_mps: frame.spec.speed_mps,
            duration_s: frame.spec.duration_s,
            start_frac: frame.spec.start_frac,
            seed: frame.spec.seed,
        });
    }
    write_labels(dir, &frames.iter().map(|f| f.label).collect::<Vec<_>>())?;
    write_manifest(
        dir,
        &FrameManifest {
            version: MANIFEST_VERSION,
            fs_hz,
            snr_db,
            classes: classes.to_vec(),
            samples,
        },
    )
}

/// Read a raw capture dataset back as `[2, T, 2]` tensors plus labels.
pub fn read_frame_dataset(dir: &Path) -> Result<(FrameManifest, Vec<(Tensor<f32>, u16)>)> {
    let manifest: FrameManifest = read_manifest(dir)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::BadDataset(format!(
            "manifest version {} (supported: {MANIFEST_VERSION})",
            manifest.version
        )));
    }
    let labels = read_labels(dir)?;
    if labels.len() != manifest.samples.len() {
        return Err(Error::BadDataset(format!(
            "labels.bin has {} entries, manifest lists {} samples",
            labels.len(),
            manifest.samples.len()
        )));
    }
    let mut out = Vec::with_capacity(labels.len());
    for (meta, &label) in manifest.samples.iter().zip(&labels) {
        if meta.label != label {
            return Err(Error::BadDataset(format!(
                "label mismatch for {}: manifest {} vs labels.bin {}",
                meta.file, meta.label, label
            )));
        }
        let t: Tensor<f32> = container::read_tensor(&resolve(dir, &meta.file)?)?;
        let d = t.dims();
        if d.len() != 3 || d[0] != 2 || d[2] != 2 {
            return Err(Error::BadDataset(format!(
                "{}: expected [2, T, 2] frame, got {:?}",
                meta.file, d
            )));
        }
        out.push((t, label));
    }
    Ok((manifest, out))
}

/// Write spectrogram images (`[2, H, W]` each) to `dir`.
pub fn write_spec_dataset(
    dir: &Path,
    items: &[(Tensor<f32>, u16)],
    classes: &[String],
    transform: &str,
) -> Result<()> {
    if items.is_empty() {
        return Err(Error::EmptyDataset("no spectrograms to write".into()));
    }
    let d0 = items[0].0.dims().to_vec();
    if d0.len() != 3 || d0[0] != 2 {
        return Err(Error::BadDataset(format!(
            "expected [2, H, W] spectrograms, got {d0:?}"
        )));
    }
    for (t, label) in items {
        if t.dims() != &d0[..] {
            return Err(Error::BadDataset(format!(
                "inconsistent spectrogram shapes: {:?} vs {:?}",
                t.dims(),
                d0
            )));
        }
        if usize::from(*label) >= classes.len() {
            return Err(Error::BadDataset(format!(
                "label {label} out of range for {} classes",
                classes.len()
            )));
        }
    }
    prepare_dirs(dir)?;
    let mut files = Vec::with_capacity(items.len());
    for (i, (t, _)) in items.iter().enumerate() {
        let rel = sample_rel_path(i);
        container::write_tensor(&dir.join(&rel), t)?;
        files.push(rel);
    }
    let labels: Vec<u16> = items.iter().map(|(_, l)| *l).collect();
    write_labels(dir, &labels)?;
    write_manifest(
        dir,
        &SpecManifest {
            version: MANIFEST_VERSION,
            transform: transform.to_string(),
            height: d0[1],
            width: d0[2],
            classes: classes.to_vec(),
            labels,
            files,
        },
    )
}

/// Read a spectrogram dataset back.
pub fn read_spec_dataset(dir: &Path) -> Result<(SpecManifest, Vec<(Tensor<f32>, u16)>)> {
    let manifest: SpecManifest = read_manifest(dir)?;
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::BadDataset(format!(
            "manifest version {} (supported: {MANIFEST_VERSION})",
            manifest.version
        )));
    }
    if manifest.files.len() != manifest.labels.len() {
        return Err(Error::BadDataset(format!(
            "{} files vs {} labels in manifest",
            manifest.files.len(),
            manifest.labels.len()
        )));
    }
    let disk_labels = read_labels(dir)?;
    if disk_labels != manifest.labels {
        return Err(Error::BadDataset(
            "labels.bin disagrees with manifest labels".into(),
        ));
    }
    let want = [2, manifest.height, manifest.width];
    let mut out = Vec::with_capacity(manifest.files.len());
    for (file, &label) in manifest.files.iter().zip(&manifest.labels) {
        let t: Tensor<f32> = container::read_tensor(&resolve(dir, file)?)?;
        if t.dims() != want {
            return Err(Error::BadDataset(format!(
                "{file}: expected {want:?}, got {:?}",
                t.dims()
            )));
        }
        out.push((t, label));
    }
    Ok((manifest, out))
}

/// Joins a manifest-relative path, refusing anything that escapes `dir`.
fn resolve(dir: &Path, rel: &str) -> Result<PathBuf> {
    let p = Path::new(rel);
    if p.is_absolute() || p.components().any(|c| matches!(c, std::path::Component::ParentDir)) {
        return Err(Error::BadDataset(format!("sample path {rel:?} escapes the dataset")));
    }
    Ok(dir.join(p))
}
