//! Image sequences: PNG loading, bilinear resizing and procedural test missions.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::{DynamicImage, ImageBuffer, Rgb};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::tensor::Tensor3;

#[derive(Debug, Error)]
pub enum ImageIoError {
    #[error("directory not found: {0}")]
    MissingDirectory(PathBuf),
    #[error("no files in {dir} match pattern {pattern:?}")]
    NoMatches { dir: PathBuf, pattern: String },
    #[error("invalid filename pattern {0:?}: expected exactly one '*'")]
    BadPattern(String),
    #[error("{path}: cannot derive a frame index from the filename")]
    NoIndex { path: PathBuf },
    #[error("{path}: duplicate frame index {index}")]
    DuplicateIndex { path: PathBuf, index: u64 },
    #[error("{path}: dimensions {found:?} differ from {expected:?}")]
    InconsistentDimensions {
        path: PathBuf,
        expected: (u32, u32),
        found: (u32, u32),
    },
    #[error("{path}: cannot decode image: {reason}")]
    Undecodable { path: PathBuf, reason: String },
    #[error("target dimensions must be positive, got {0}x{1}")]
    ZeroTarget(usize, usize),
    #[error("unknown texture kind {0:?}")]
    UnknownTexture(String),
    #[error("unknown blob kind {0:?}")]
    UnknownBlob(String),
    #[error("invalid synthetic mission: {0}")]
    InvalidSpec(String),
    #[error("anomaly frame {index} out of range for a {len}-frame mission")]
    AnomalyOutOfRange { index: usize, len: usize },
    #[error("{path}: {reason}")]
    Labels { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: cannot encode image: {reason}")]
    Encode { path: PathBuf, reason: String },
}

pub type Result<T, E = ImageIoError> = std::result::Result<T, E>;

/// One timestamped image with pixels in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<T = f32> {
    pub id: usize,
    pub t: u64,
    pub pixels: Tensor3<T>,
}

impl<T: Scalar> Frame<T> {
    pub fn new(id: usize, t: u64, pixels: Tensor3<T>) -> Self {
        Self { id, t, pixels }
    }

    /// Mean over all pixels and channels.
    pub fn mean_intensity(&self) -> T {
        self.pixels.mean()
    }
}

/// Annotated interest level of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interest {
    Low,
    Medium,
    High,
}

impl Interest {
    pub fn as_str(self) -> &'static str {
        match self {
            Interest::Low => "low",
            Interest::Medium => "medium",
            Interest::High => "high",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Interest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Interest {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "low" => Ok(Interest::Low),
            "medium" => Ok(Interest::Medium),
            "high" => Ok(Interest::High),
            other => Err(format!("unknown interest level {other:?}")),
        }
    }
}

/// Per-frame annotations: terrain class and interest level.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabelTrack {
    pub terrain: Vec<usize>,
    pub interest: Vec<Interest>,
}

impl LabelTrack {
    pub fn len(&self) -> usize {
        self.terrain.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terrain.is_empty()
    }

    /// Number of terrain classes, `max + 1`.
    pub fn terrain_classes(&self) -> usize {
        self.terrain.iter().max().map_or(0, |&m| m + 1)
    }

    /// Checks one-entry-per-frame and that terrain labels cover `0..L` without gaps.
    pub fn validate(&self) -> Result<(), String> {
        if self.terrain.len() != self.interest.len() {
            return Err(format!(
                "{} terrain labels but {} interest labels",
                self.terrain.len(),
                self.interest.len()
            ));
        }
        let classes = self.terrain_classes();
        let mut seen = vec![false; classes];
        for &l in &self.terrain {
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(format!("terrain label {missing} never used (labels must be contiguous)"));
        }
        Ok(())
    }

    /// Reads a `frame_id,terrain,interest` CSV with a header row.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let err = |reason: String| ImageIoError::Labels {
            path: path.to_path_buf(),
            reason,
        };
        let mut reader = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
        let headers = reader.headers().map_err(|e| err(e.to_string()))?.clone();
        if headers.iter().map(str::trim).collect::<Vec<_>>() != ["frame_id", "terrain", "interest"] {
            return Err(err(format!("unexpected header {:?}", headers)));
        }
        let mut rows: Vec<(usize, usize, Interest)> = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| err(e.to_string()))?;
            let field = |i: usize| record.get(i).map(str::trim).unwrap_or("");
            let id = field(0)
                .parse()
                .map_err(|_| err(format!("row {}: bad frame_id {:?}", line + 1, field(0))))?;
            let terrain = field(1)
                .parse()
                .map_err(|_| err(format!("row {}: bad terrain {:?}", line + 1, field(1))))?;
            let interest = field(2)
                .parse()
                .map_err(|e| err(format!("row {}: {e}", line + 1)))?;
            rows.push((id, terrain, interest));
        }
        rows.sort_by_key(|r| r.0);
        for (expected, row) in rows.iter().enumerate() {
            if row.0 != expected {
                return Err(err(format!("frame ids must be 0..N, found {} at position {expected}", row.0)));
            }
        }
        let track = LabelTrack {
            terrain: rows.iter().map(|r| r.1).collect(),
            interest: rows.iter().map(|r| r.2).collect(),
        };
        track.validate().map_err(err)?;
        Ok(track)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("frame_id,terrain,interest\n");
        for (i, (t, interest)) in self.terrain.iter().zip(&self.interest).enumerate() {
            out.push_str(&format!("{i},{t},{interest}\n"));
        }
        out
    }
}

/// Procedural terrain patterns used by the synthetic mission generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TextureKind {
    Stripes,
    Checker,
    Blotches,
    Noise,
}

impl TextureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TextureKind::Stripes => "stripes",
            TextureKind::Checker => "checker",
            TextureKind::Blotches => "blotches",
            TextureKind::Noise => "noise",
        }
    }
}

impl FromStr for TextureKind {
    type Err = ImageIoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "stripes" => Ok(TextureKind::Stripes),
            "checker" | "checkerboard" => Ok(TextureKind::Checker),
            "blotches" => Ok(TextureKind::Blotches),
            "noise" => Ok(TextureKind::Noise),
            other => Err(ImageIoError::UnknownTexture(other.to_string())),
        }
    }
}

/// High-contrast disk superimposed on anomalous frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlobKind {
    Bright,
    Dark,
}

impl BlobKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BlobKind::Bright => "bright",
            BlobKind::Dark => "dark",
        }
    }
}

impl FromStr for BlobKind {
    type Err = ImageIoError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bright" | "blob" | "disk" => Ok(BlobKind::Bright),
            "dark" => Ok(BlobKind::Dark),
            other => Err(ImageIoError::UnknownBlob(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub segments: Vec<(TextureKind, usize)>,
    pub anomalies: Vec<(usize, BlobKind)>,
    pub height: usize,
    pub width: usize,
    pub noise_level: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn total_frames(&self) -> usize {
        self.segments.iter().map(|s| s.1).sum()
    }

    /// Parses `stripes:50,checker:50,noise:50`.
    pub fn parse_segments(s: &str) -> Result<Vec<(TextureKind, usize)>> {
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|part| {
                let (kind, count) = part.split_once(':').ok_or_else(|| {
                    ImageIoError::InvalidSpec(format!("segment {part:?} is not kind:count"))
                })?;
                let count = count.trim().parse::<usize>().map_err(|_| {
                    ImageIoError::InvalidSpec(format!("segment {part:?} has a bad frame count"))
                })?;
                Ok((kind.parse()?, count))
            })
            .collect()
    }

    /// Parses `75:bright,120:dark`; a bare index means a bright blob.
    pub fn parse_anomalies(s: &str) -> Result<Vec<(usize, BlobKind)>> {
        s.split(',')
            .filter(|p| !p.trim().is_empty())
            .map(|part| {
                let (index, kind) = match part.split_once(':') {
                    Some((i, k)) => (i, k.parse()?),
                    None => (part, BlobKind::Bright),
                };
                let index = index.trim().parse::<usize>().map_err(|_| {
                    ImageIoError::InvalidSpec(format!("anomaly {part:?} has a bad frame index"))
                })?;
                Ok((index, kind))
            })
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.segments.is_empty() {
            return Err(ImageIoError::InvalidSpec("no segments".into()));
        }
        if let Some(seg) = self.segments.iter().find(|s| s.1 == 0) {
            return Err(ImageIoError::InvalidSpec(format!(
                "segment {} has zero frames",
                seg.0.as_str()
            )));
        }
        if self.height == 0 || self.width == 0 {
            return Err(ImageIoError::ZeroTarget(self.height, self.width));
        }
        if !(self.noise_level >= 0.0 && self.noise_level.is_finite()) {
            return Err(ImageIoError::InvalidSpec(format!(
                "noise level {} must be finite and >= 0",
                self.noise_level
            )));
        }
        let len = self.total_frames();
        if let Some(&(index, _)) = self.anomalies.iter().find(|a| a.0 >= len) {
            return Err(ImageIoError::AnomalyOutOfRange { index, len });
        }
        Ok(())
    }
}

/// Renders a labeled synthetic mission. Pure in `spec`, including its seed.
pub fn generate_synthetic_mission(spec: &SynthSpec) -> Result<(Vec<Frame<f32>>, LabelTrack)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_level).expect("validated noise level");
    let (h, w) = (spec.height, spec.width);

    let mut frames = Vec::with_capacity(spec.total_frames());
    let mut labels = LabelTrack::default();
    for (terrain, &(kind, count)) in spec.segments.iter().enumerate() {
        for _ in 0..count {
            let id = frames.len();
            let mut base = render_texture(kind, h, w, &mut rng);
            let blob = spec.anomalies.iter().find(|a| a.0 == id).map(|a| a.1);
            if let Some(blob) = blob {
                draw_blob(&mut base, h, w, blob, &mut rng);
            }
            let pixels = Tensor3::from_fn(h, w, 3, |r, c, _| base[r * w + c]);
            let mut pixels = pixels;
            for v in pixels.as_mut_slice() {
                let n = if spec.noise_level > 0.0 {
                    noise.sample(&mut rng) as f32
                } else {
                    0.0
                };
                *v = (*v + n).clamp(0.0, 1.0);
            }
            frames.push(Frame::new(id, id as u64, pixels));
            labels.terrain.push(terrain);
            labels.interest.push(if blob.is_some() {
                Interest::High
            } else {
                Interest::Low
            });
        }
    }
    Ok((frames, labels))
}

/// Grayscale texture, row-major `h * w`.
fn render_texture(kind: TextureKind, h: usize, w: usize, rng: &mut impl Rng) -> Vec<f32> {
    let scale = (h.min(w) as f32 / 8.0).max(2.0);
    let mut out = vec![0.0f32; h * w];
    match kind {
        TextureKind::Stripes => {
            let period = scale * rng.random_range(0.9..1.1);
            let phase = rng.random_range(0.0..period);
            for r in 0..h {
                for c in 0..w {
                    let x = (c as f32 + phase) / period;
                    out[r * w + c] = 0.5 + 0.4 * (std::f32::consts::TAU * x).sin();
                }
            }
        }
        TextureKind::Checker => {
            let side = scale.round() as usize;
            let (dr, dc) = (rng.random_range(0..2 * side), rng.random_range(0..2 * side));
            for r in 0..h {
                for c in 0..w {
                    let on = (((r + dr) / side) + ((c + dc) / side)).is_multiple_of(2);
                    out[r * w + c] = if on { 0.8 } else { 0.2 };
                }
            }
        }
        TextureKind::Blotches => {
            // Bilinear upsampling of a coarse random lattice.
            let cells = 4usize;
            let lattice: Vec<f32> = (0..(cells + 1) * (cells + 1))
                .map(|_| rng.random_range(0.25..0.75))
                .collect();
            for r in 0..h {
                for c in 0..w {
                    let y = r as f32 / h as f32 * cells as f32;
                    let x = c as f32 / w as f32 * cells as f32;
                    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
                    let (fy, fx) = (y - y0 as f32, x - x0 as f32);
                    let at = |yy: usize, xx: usize| lattice[yy * (cells + 1) + xx];
                    let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1) * fx;
                    let bottom = at(y0 + 1, x0) * (1.0 - fx) + at(y0 + 1, x0 + 1) * fx;
                    out[r * w + c] = top * (1.0 - fy) + bottom * fy;
                }
            }
        }
        TextureKind::Noise => {
            for v in out.iter_mut() {
                *v = rng.random_range(0.0..1.0);
            }
        }
    }
    out
}

fn draw_blob(base: &mut [f32], h: usize, w: usize, kind: BlobKind, rng: &mut impl Rng) {
    let radius = (h.min(w) as f32 / 4.0).max(1.0);
    let r_lo = radius.ceil() as usize;
    let (my, mx) = (r_lo.min(h / 2), r_lo.min(w / 2));
    let cy = rng.random_range(my..=h - my) as f32;
    let cx = rng.random_range(mx..=w - mx) as f32;
    let value = match kind {
        BlobKind::Bright => 1.0,
        BlobKind::Dark => 0.0,
    };
    for r in 0..h {
        for c in 0..w {
            let (dy, dx) = (r as f32 + 0.5 - cy, c as f32 + 0.5 - cx);
            if dy * dy + dx * dx <= radius * radius {
                base[r * w + c] = value;
            }
        }
    }
}

/// Bilinear resize with half-pixel centers. `id` and `t` are preserved.
pub fn resize_frame<T: Scalar>(frame: &Frame<T>, target: (usize, usize)) -> Result<Frame<T>> {
    let (th, tw) = target;
    if th == 0 || tw == 0 {
        return Err(ImageIoError::ZeroTarget(th, tw));
    }
    let src = &frame.pixels;
    let (sh, sw, ch) = src.dims();
    if (sh, sw) == (th, tw) {
        return Ok(frame.clone());
    }
    let axis = |out: usize, n_out: usize, n_in: usize| -> (usize, usize, T) {
        let pos = (out as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5;
        let pos = pos.clamp(0.0, (n_in - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, T::lit(pos - lo as f64))
    };
    let rows: Vec<_> = (0..th).map(|r| axis(r, th, sh)).collect();
    let cols: Vec<_> = (0..tw).map(|c| axis(c, tw, sw)).collect();
    let one = T::one();
    let pixels = Tensor3::from_fn(th, tw, ch, |r, c, k| {
        let (r0, r1, fy) = rows[r];
        let (c0, c1, fx) = cols[c];
        let top = src.get(r0, c0, k) * (one - fx) + src.get(r0, c1, k) * fx;
        let bottom = src.get(r1, c0, k) * (one - fx) + src.get(r1, c1, k) * fx;
        (top * (one - fy) + bottom * fy).max(T::zero()).min(one)
    });
    Ok(Frame::new(frame.id, frame.t, pixels))
}

/// Splits a single-`*` pattern into prefix and suffix.
fn split_pattern(pattern: &str) -> Result<(&str, &str)> {
    let mut parts = pattern.split('*');
    match (parts.next(), parts.next(), parts.next()) {
        (Some(pre), Some(suf), None) => Ok((pre, suf)),
        _ => Err(ImageIoError::BadPattern(pattern.to_string())),
    }
}

/// Loads every file in `dir` matching `pattern` (one `*` wildcard), ordered by the
/// integer embedded in the wildcard portion of the name.
pub fn load_sequence(dir: &Path, pattern: &str) -> Result<Vec<Frame<f32>>> {
    let (prefix, suffix) = split_pattern(pattern)?;
    if !dir.is_dir() {
        return Err(ImageIoError::MissingDirectory(dir.to_path_buf()));
    }
    let io_err = |source| ImageIoError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut indexed: Vec<(u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let entry = entry.map_err(io_err)?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        if name.len() < prefix.len() + suffix.len()
            || !name.starts_with(prefix)
            || !name.ends_with(suffix)
        {
            continue;
        }
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let middle = &name[prefix.len()..name.len() - suffix.len()];
        let digits: String = middle
            .chars()
            .rev()
            .take_while(char::is_ascii_digit)
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        let index = digits
            .parse::<u64>()
            .map_err(|_| ImageIoError::NoIndex { path: path.clone() })?;
        indexed.push((index, path));
    }
    if indexed.is_empty() {
        return Err(ImageIoError::NoMatches {
            dir: dir.to_path_buf(),
            pattern: pattern.to_string(),
        });
    }
    indexed.sort();
    if let Some(pair) = indexed.windows(2).find(|p| p[0].0 == p[1].0) {
        return Err(ImageIoError::DuplicateIndex {
            path: pair[1].1.clone(),
            index: pair[1].0,
        });
    }

    let mut frames = Vec::with_capacity(indexed.len());
    let mut expected: Option<(u32, u32)> = None;
    for (i, (_, path)) in indexed.iter().enumerate() {
        let img = image::open(path).map_err(|e| ImageIoError::Undecodable {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        let dims = (img.width(), img.height());
        match expected {
            None => expected = Some(dims),
            Some(e) if e != dims => {
                return Err(ImageIoError::InconsistentDimensions {
                    path: path.clone(),
                    expected: e,
                    found: dims,
                })
            }
            Some(_) => {}
        }
        let pixels = decode_pixels(img, path)?;
        frames.push(Frame::new(i, i as u64, pixels));
    }
    Ok(frames)
}

fn decode_pixels(img: DynamicImage, path: &Path) -> Result<Tensor3<f32>> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let scale = 1.0 / 255.0;
    match img {
        DynamicImage::ImageLuma8(buf) => {
            let raw = buf.into_raw();
            Ok(Tensor3::from_fn(h, w, 3, |r, c, _| raw[r * w + c] as f32 * scale))
        }
        DynamicImage::ImageLumaA8(buf) => {
            let raw = buf.into_raw();
            Ok(Tensor3::from_fn(h, w, 3, |r, c, _| raw[(r * w + c) * 2] as f32 * scale))
        }
        DynamicImage::ImageRgb8(buf) => {
            let raw = buf.into_raw();
            Ok(Tensor3::from_fn(h, w, 3, |r, c, k| raw[(r * w + c) * 3 + k] as f32 * scale))
        }
        DynamicImage::ImageRgba8(buf) => {
            let raw = buf.into_raw();
            Ok(Tensor3::from_fn(h, w, 3, |r, c, k| raw[(r * w + c) * 4 + k] as f32 * scale))
        }
        other => Err(ImageIoError::Undecodable {
            path: path.to_path_buf(),
            reason: format!("unsupported pixel format {:?}, expected 8-bit gray or RGB", other.color()),
        }),
    }
}

/// Encodes a frame as an 8-bit RGB PNG (first three channels, or gray replicated).
pub fn save_png<T: Scalar>(frame: &Frame<T>, path: &Path) -> Result<()> {
    let (h, w, ch) = frame.pixels.dims();
    let mut buf: ImageBuffer<Rgb<u8>, Vec<u8>> = ImageBuffer::new(w as u32, h as u32);
    for (c, r, px) in buf.enumerate_pixels_mut() {
        let (r, c) = (r as usize, c as usize);
        let v = |k: usize| {
            let x = frame.pixels.get(r, c, k.min(ch - 1)).as_f64().clamp(0.0, 1.0);
            (x * 255.0).round() as u8
        };
        *px = Rgb([v(0), v(1), v(2)]);
    }
    buf.save(path).map_err(|e| ImageIoError::Encode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Writes `frame_00000.png`, ... and `labels.csv` into `dir`.
pub fn write_mission<T: Scalar>(dir: &Path, frames: &[Frame<T>], labels: &LabelTrack) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| ImageIoError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    for frame in frames {
        save_png(frame, &dir.join(format!("frame_{:05}.png", frame.id)))?;
    }
    let labels_path = dir.join("labels.csv");
    fs::write(&labels_path, labels.to_csv()).map_err(|source| ImageIoError::Io {
        path: labels_path,
        source,
    })
}

/// Filename pattern matching the files written by [`write_mission`].
pub const MISSION_PATTERN: &str = "frame_*.png";
