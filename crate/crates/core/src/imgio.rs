//! Image decoding, grayscale normalization and dataset manifests.
//!
//! Every image enters the pipeline as a [`GrayImage`] holding intensities in
//! `[0, 1]`: an 8-bit level `L` becomes `L / 255`, and RGB input is reduced
//! with BT.601 luma weights.

use std::fmt;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use thiserror::Error;

const PNG_SIGNATURE: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0d, 0x0a, 0x1a, 0x0a];

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("corrupt image file: {0}")]
    CorruptFile(String),
    #[error("image has a zero dimension")]
    ZeroDimension,
    #[error("intensity {value} at index {index} is outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("pixel buffer holds {actual} values, expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Row-major grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::ZeroDimension);
        }
        let expected = width
            .checked_mul(height)
            .ok_or_else(|| ImageError::CorruptFile("dimensions overflow".into()))?;
        if data.len() != expected {
            return Err(ImageError::LengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(ImageError::OutOfRange { index, value });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Image with every pixel set to `value`.
    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self, ImageError> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image from 8-bit levels, mapping `L` to `L / 255`.
    pub fn from_levels(width: usize, height: usize, levels: &[u8]) -> Result<Self, ImageError> {
        Self::new(
            width,
            height,
            levels.iter().map(|&l| f64::from(l) / 255.0).collect(),
        )
    }

    /// Trusted constructor for pixel ops whose outputs are in range by construction.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        debug_assert!(data.iter().all(|v| (0.0..=1.0).contains(v)));
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Quantizes to 8-bit levels with `round(x * 255)`.
    pub fn to_levels(&self) -> Vec<u8> {
        self.data.iter().map(|&v| to_level(v)).collect()
    }

    /// Writes a binary (P5) PGM with maxval 255.
    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        fs::write(path, self.encode_pgm())?;
        Ok(())
    }

    pub fn encode_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend(self.to_levels());
        out
    }
}

pub(crate) fn to_level(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Loads a PGM (P2/P5, maxval 255) or 8-bit PNG (gray or RGB) as a normalized grayscale image.
pub fn load_gray(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    let bytes = fs::read(path.as_ref())?;
    decode_gray(&bytes)
}

/// Decodes an in-memory PGM or PNG file.
pub fn decode_gray(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    if bytes.starts_with(&PNG_SIGNATURE) {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P2") {
        decode_pgm(bytes)
    } else {
        let magic: String = bytes
            .iter()
            .take(2)
            .map(|&b| if b.is_ascii_graphic() { b as char } else { '?' })
            .collect();
        Err(ImageError::UnsupportedFormat(format!(
            "unrecognized magic {magic:?}"
        )))
    }
}

struct PnmHeader {
    ascii: bool,
    width: usize,
    height: usize,
    /// Offset of the first byte after the single whitespace that ends the header.
    data_start: usize,
}

fn parse_pnm_header(bytes: &[u8]) -> Result<PnmHeader, ImageError> {
    let ascii = &bytes[..2] == b"P2";
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(ImageError::CorruptFile("truncated PGM header".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(ImageError::CorruptFile("expected a number in PGM header".into()));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::CorruptFile("header number out of range".into()))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(ImageError::CorruptFile("missing whitespace after maxval".into())),
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(ImageError::ZeroDimension);
    }
    if maxval != 255 {
        return Err(ImageError::UnsupportedFormat(format!(
            "PGM maxval {maxval} (only 255 is supported)"
        )));
    }
    Ok(PnmHeader {
        ascii,
        width,
        height,
        data_start: pos,
    })
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    let header = parse_pnm_header(bytes)?;
    let n = header
        .width
        .checked_mul(header.height)
        .ok_or_else(|| ImageError::CorruptFile("dimensions overflow".into()))?;
    let body = &bytes[header.data_start..];
    let levels: Vec<u8> = if header.ascii {
        let text = std::str::from_utf8(body)
            .map_err(|_| ImageError::CorruptFile("non-UTF-8 P2 raster".into()))?;
        let mut levels = Vec::with_capacity(n);
        for token in text.split_ascii_whitespace() {
            if levels.len() == n {
                break;
            }
            let level: u16 = token
                .parse()
                .map_err(|_| ImageError::CorruptFile(format!("bad sample {token:?}")))?;
            if level > 255 {
                return Err(ImageError::CorruptFile(format!("sample {level} exceeds maxval")));
            }
            levels.push(level as u8);
        }
        levels
    } else {
        body.iter().take(n).copied().collect()
    };
    if levels.len() < n {
        return Err(ImageError::CorruptFile(format!(
            "raster has {} samples, expected {n}",
            levels.len()
        )));
    }
    GrayImage::from_levels(header.width, header.height, &levels)
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage, ImageError> {
    let corrupt = |e: png::DecodingError| ImageError::CorruptFile(e.to_string());
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(corrupt)?;
    let (color, depth) = reader.output_color_type();
    if depth != png::BitDepth::Eight {
        return Err(ImageError::UnsupportedFormat(format!(
            "PNG bit depth {depth:?} (only 8-bit is supported)"
        )));
    }
    if !matches!(color, png::ColorType::Grayscale | png::ColorType::Rgb) {
        return Err(ImageError::UnsupportedFormat(format!(
            "PNG color type {color:?} (only gray and RGB are supported)"
        )));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| ImageError::CorruptFile("PNG too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(corrupt)?;
    let (width, height) = (info.width as usize, info.height as usize);
    if width == 0 || height == 0 {
        return Err(ImageError::ZeroDimension);
    }
    let stride = info.line_size;
    let mut data = Vec::with_capacity(width * height);
    for row in buf.chunks(stride).take(height) {
        match color {
            png::ColorType::Grayscale => {
                data.extend(row[..width].iter().map(|&l| f64::from(l) / 255.0))
            }
            _ => data.extend(row[..width * 3].chunks_exact(3).map(|p| {
                let luma = 0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1])
                    + 0.114 * f64::from(p[2]);
                (luma / 255.0).clamp(0.0, 1.0)
            })),
        }
    }
    GrayImage::new(width, height, data)
}

// ---------------------------------------------------------------------------
// Dataset manifests

#[derive(Debug, Error, PartialEq)]
pub enum ManifestError {
    #[error("manifest is missing column `{0}`")]
    MissingColumn(String),
    #[error("bad number on data row {0}")]
    BadNumber(usize),
    #[error("unknown distortion tag on data row {0}")]
    BadDistortion(usize),
    #[error("data row {0} has the wrong number of fields")]
    BadRow(usize),
    #[error("empty content_id on data row {0}")]
    EmptyContentId(usize),
    #[error("manifest has no data rows")]
    EmptyManifest,
    #[error("manifest needs at least 2 distinct content ids, found {0}")]
    TooFewContents(usize),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for ManifestError {
    fn from(e: std::io::Error) -> Self {
        ManifestError::Io(e.to_string())
    }
}

/// Distortion family of a dataset record.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Distortion {
    GammaTransfer,
    MeanShift,
    Other(String),
}

impl Distortion {
    /// Parses the manifest spelling: `gamma`, `meanshift` or `other:<tag>`.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gamma" => Some(Distortion::GammaTransfer),
            "meanshift" => Some(Distortion::MeanShift),
            _ => s
                .strip_prefix("other:")
                .filter(|tag| !tag.is_empty())
                .map(|tag| Distortion::Other(tag.to_string())),
        }
    }
}

impl fmt::Display for Distortion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distortion::GammaTransfer => f.write_str("gamma"),
            Distortion::MeanShift => f.write_str("meanshift"),
            Distortion::Other(tag) => write!(f, "other:{tag}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRecord {
    pub image_path: PathBuf,
    pub mos: f64,
    pub distortion: Distortion,
    /// Names the reference scene; train and test splits never share one.
    pub content_id: String,
    pub severity: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub records: Vec<DatasetRecord>,
}

impl DatasetManifest {
    pub fn new(records: Vec<DatasetRecord>) -> Self {
        Self { records }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Sorted, deduplicated content ids.
    pub fn content_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.records.iter().map(|r| r.content_id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Checks the precondition of every split-based operation.
    pub fn ensure_splittable(&self) -> Result<(), ManifestError> {
        match self.content_ids().len() {
            n if n < 2 => Err(ManifestError::TooFewContents(n)),
            _ => Ok(()),
        }
    }

    /// Serializes in the manifest CSV dialect; paths are written as stored.
    pub fn to_csv(&self) -> String {
        let with_severity = self.records.iter().any(|r| r.severity.is_some());
        let mut out = String::from("path,mos,distortion,content_id");
        if with_severity {
            out.push_str(",severity");
        }
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{}",
                r.image_path.display(),
                fmt_real(r.mos),
                r.distortion,
                r.content_id
            ));
            if with_severity {
                out.push(',');
                if let Some(s) = r.severity {
                    out.push_str(&fmt_real(s));
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), ManifestError> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// 17-significant-digit rendering used by every file format of this crate.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

/// Parses a manifest file. Relative image paths are resolved against the
/// manifest's own directory.
pub fn parse_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, ManifestError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let mut manifest = parse_manifest_str(&text)?;
    if let Some(base) = path.parent() {
        for r in &mut manifest.records {
            if r.image_path.is_relative() {
                r.image_path = base.join(&r.image_path);
            }
        }
    }
    Ok(manifest)
}

/// Parses manifest CSV text. Data rows are numbered from 1 in errors.
pub fn parse_manifest_str(text: &str) -> Result<DatasetManifest, ManifestError> {
    let mut lines = text
        .lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = match lines.next() {
        Some(h) => h.trim_start_matches('\u{feff}').split(',').map(str::trim).collect(),
        None => return Err(ManifestError::EmptyManifest),
    };
    let column = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| ManifestError::MissingColumn(name.to_string()))
    };
    let path_col = column("path")?;
    let mos_col = column("mos")?;
    let dist_col = column("distortion")?;
    let content_col = column("content_id")?;
    let severity_col = header.iter().position(|h| *h == "severity");

    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 1;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != header.len() {
            return Err(ManifestError::BadRow(row));
        }
        let mos: f64 = fields[mos_col]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or(ManifestError::BadNumber(row))?;
        let distortion =
            Distortion::parse(fields[dist_col]).ok_or(ManifestError::BadDistortion(row))?;
        let content_id = fields[content_col];
        if content_id.is_empty() {
            return Err(ManifestError::EmptyContentId(row));
        }
        let severity = match severity_col.map(|c| fields[c]) {
            None | Some("") => None,
            Some(s) => Some(
                s.parse()
                    .ok()
                    .filter(|v: &f64| v.is_finite())
                    .ok_or(ManifestError::BadNumber(row))?,
            ),
        };
        records.push(DatasetRecord {
            image_path: PathBuf::from(fields[path_col]),
            mos,
            distortion,
            content_id: content_id.to_string(),
            severity,
        });
    }
    if records.is_empty() {
        return Err(ManifestError::EmptyManifest);
    }
    Ok(DatasetManifest { records })
}
