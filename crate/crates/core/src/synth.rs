//! Synthetic contrast-distorted datasets with known severity.
//!
//! Sources are smooth procedural scenes. Each is distorted by a gamma
//! transfer `x^g` or a clipped mean shift `x + delta`. Each (content, kind,
//! level) gets a direction (darker or brighter) from the seed. The pseudo-MOS
//! depends only on severity.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::imgio::{DatasetManifest, DatasetRecord, Distortion, GrayImage, ImageError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("need at least 2 source images, got {0}")]
    TooFewSources(usize),
    #[error("severity level list is empty")]
    NoLevels,
    #[error("no distortion kinds requested")]
    NoKinds,
    #[error("invalid severity {0}")]
    BadLevel(f64),
    #[error("source content ids must be unique and nonempty")]
    BadContentId,
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

impl From<std::io::Error> for SynthError {
    fn from(e: std::io::Error) -> Self {
        SynthError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistortionKind {
    /// `x -> x^g`, `g > 0`.
    GammaTransfer { g: f64 },
    /// `x -> clamp(x + delta, 0, 1)`, `delta` in `[-1, 1]`.
    MeanShift { delta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistortionSpec {
    kind: DistortionKind,
}

impl DistortionSpec {
    pub fn gamma(g: f64) -> Option<Self> {
        (g.is_finite() && g > 0.0).then_some(Self {
            kind: DistortionKind::GammaTransfer { g },
        })
    }

    pub fn mean_shift(delta: f64) -> Option<Self> {
        (-1.0..=1.0).contains(&delta).then_some(Self {
            kind: DistortionKind::MeanShift { delta },
        })
    }

    pub fn kind(&self) -> DistortionKind {
        self.kind
    }

    /// `|ln g|` for gamma, `|delta|` for mean shift.
    pub fn severity(&self) -> f64 {
        match self.kind {
            DistortionKind::GammaTransfer { g } => g.ln().abs(),
            DistortionKind::MeanShift { delta } => delta.abs(),
        }
    }
}

pub fn apply_distortion(img: &GrayImage, spec: DistortionSpec) -> GrayImage {
    let data: Vec<f64> = match spec.kind {
        DistortionKind::GammaTransfer { g } => img.pixels().iter().map(|&x| x.powf(g)).collect(),
        DistortionKind::MeanShift { delta } => img
            .pixels()
            .iter()
            .map(|&x| (x + delta).clamp(0.0, 1.0))
            .collect(),
    };
    GrayImage::from_raw(img.width(), img.height(), data)
}

/// `1 + 8 / (1 + severity)`: 9 for an undistorted image, falling toward 1.
pub fn pseudo_mos(severity: f64) -> f64 {
    1.0 + 8.0 / (1.0 + severity)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Kind {
    Gamma,
    MeanShift,
}

impl Kind {
    pub fn tag(self) -> &'static str {
        match self {
            Kind::Gamma => "gamma",
            Kind::MeanShift => "meanshift",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gamma" => Some(Kind::Gamma),
            "meanshift" => Some(Kind::MeanShift),
            _ => None,
        }
    }

    fn distortion(self) -> Distortion {
        match self {
            Kind::Gamma => Distortion::GammaTransfer,
            Kind::MeanShift => Distortion::MeanShift,
        }
    }

    /// Distortion of the given severity pointing darker or brighter.
    pub fn spec(self, severity: f64, brighter: bool) -> Option<DistortionSpec> {
        if !(severity.is_finite() && severity >= 0.0) {
            return None;
        }
        match self {
            // g < 1 lifts every pixel
            Kind::Gamma => DistortionSpec::gamma(if brighter { (-severity).exp() } else { severity.exp() }),
            Kind::MeanShift => DistortionSpec::mean_shift(if brighter { severity } else { -severity }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceImage {
    pub content_id: String,
    pub image: GrayImage,
}

/// Spread of per-scene tone and range used by [`generate_sources`].
pub const DEFAULT_VARIATION: f64 = 0.05;

/// Procedural scenes with [`DEFAULT_VARIATION`].
pub fn generate_sources(count: usize, width: usize, height: usize, seed: u64) -> Vec<SourceImage> {
    generate_sources_with(count, width, height, seed, DEFAULT_VARIATION)
}

/// Procedural scenes: a few random plane waves plus soft blobs, rank-mapped
/// so that every scene starts from a near-uniform intensity histogram, then
/// bent by a per-scene tone curve and range. `variation` in `[0, 1]` scales
/// how far those per-scene settings wander; 0 gives identical histograms and
/// larger values make undistorted contents look more like mild contrast
/// changes of each other. Deterministic given `seed`.
pub fn generate_sources_with(
    count: usize,
    width: usize,
    height: usize,
    seed: u64,
    variation: f64,
) -> Vec<SourceImage> {
    let variation = variation.clamp(0.0, 1.0);
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            SourceImage {
                content_id: format!("{i:03}"),
                image: scene(&mut rng, width, height, variation),
            }
        })
        .collect()
}

fn scene(rng: &mut ChaCha8Rng, width: usize, height: usize, variation: f64) -> GrayImage {
    let waves: Vec<[f64; 4]> = (0..4)
        .map(|_| {
            let freq = rng.random_range(0.5..4.0);
            let angle = rng.random_range(0.0..PI);
            [freq * angle.cos(), freq * angle.sin(), rng.random_range(0.0..2.0 * PI), rng.random_range(0.3..1.0)]
        })
        .collect();
    let blobs: Vec<[f64; 4]> = (0..3)
        .map(|_| {
            [
                rng.random::<f64>(),
                rng.random::<f64>(),
                rng.random_range(0.05..0.25),
                rng.random_range(-1.5..1.5),
            ]
        })
        .collect();
    // Unit draws scaled afterwards so the random stream does not depend on
    // `variation`.
    let tone = (variation * 2.0 * (rng.random::<f64>() - 0.5)).exp();
    let lo = 0.05 + variation * 0.3 * (rng.random::<f64>() - 0.5);
    let hi = 0.95 + variation * 0.3 * (rng.random::<f64>() - 0.5);

    let (w, h) = (width as f64, height as f64);
    let mut raw = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let (u, v) = (x as f64 / w, y as f64 / h);
            let mut s = 0.0;
            for [fx, fy, phase, amp] in &waves {
                s += amp * (2.0 * PI * (fx * u + fy * v) + phase).cos();
            }
            for [cx, cy, r, amp] in &blobs {
                let d2 = (u - cx).powi(2) + (v - cy).powi(2);
                s += amp * (-d2 / (2.0 * r * r)).exp();
            }
            raw.push(s);
        }
    }
    let mut order: Vec<usize> = (0..raw.len()).collect();
    order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]));
    let n = raw.len() as f64;
    let mut data = vec![0.0; raw.len()];
    for (rank, &idx) in order.iter().enumerate() {
        let u = (rank as f64 + 0.5) / n;
        data[idx] = (lo + (hi - lo) * u.powf(tone)).clamp(0.0, 1.0);
    }
    GrayImage::from_raw(width, height, data)
}

/// File name of one generated image.
pub fn image_name(content_id: &str, kind: Kind, level: usize) -> String {
    format!("content_{content_id}_{}_{level}.pgm", kind.tag())
}

/// Distorts every source by every kind at every severity level and writes
/// the images plus `manifest.csv` into `out_dir`.
///
/// Records are ordered by source, then kind, then level. The CSV stores file
/// names relative to `out_dir`; the returned manifest holds the joined paths.
pub fn make_dataset(
    sources: &[SourceImage],
    kinds: &[Kind],
    levels: &[f64],
    seed: u64,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetManifest, SynthError> {
    let out_dir = out_dir.as_ref();
    if sources.len() < 2 {
        return Err(SynthError::TooFewSources(sources.len()));
    }
    if levels.is_empty() {
        return Err(SynthError::NoLevels);
    }
    if kinds.is_empty() {
        return Err(SynthError::NoKinds);
    }
    let mut ids: Vec<&str> = sources.iter().map(|s| s.content_id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() != sources.len()
        || ids
            .iter()
            .any(|id| id.is_empty() || id.contains([',', '/', '\\', '\n']))
    {
        return Err(SynthError::BadContentId);
    }
    for &s in levels {
        for &k in kinds {
            if k.spec(s, false).is_none() {
                return Err(SynthError::BadLevel(s));
            }
        }
    }
    fs::create_dir_all(out_dir)?;

    let jobs: Vec<(usize, Kind, usize)> = (0..sources.len())
        .flat_map(|s| kinds.iter().flat_map(move |&k| (0..levels.len()).map(move |l| (s, k, l))))
        .collect();

    let written: Vec<Result<DatasetRecord, SynthError>> = jobs
        .par_iter()
        .enumerate()
        .map(|(job, &(s, kind, l))| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(job as u64);
            let severity = levels[l];
            let spec = kind.spec(severity, rng.random::<bool>()).expect("levels validated");
            let src = &sources[s];
            let name = image_name(&src.content_id, kind, l);
            apply_distortion(&src.image, spec).save_pgm(out_dir.join(&name))?;
            Ok(DatasetRecord {
                image_path: PathBuf::from(name),
                mos: pseudo_mos(severity),
                distortion: kind.distortion(),
                content_id: src.content_id.clone(),
                severity: Some(severity),
            })
        })
        .collect();
    let records = written.into_iter().collect::<Result<Vec<_>, _>>()?;

    let relative = DatasetManifest::new(records);
    fs::write(out_dir.join("manifest.csv"), relative.to_csv())?;
    let mut joined = relative;
    for r in &mut joined.records {
        r.image_path = out_dir.join(&r.image_path);
    }
    Ok(joined)
}
