//! Frame-sequence datasets: CSV manifests, PGM frame directories, resizing.
//!
//! A clip is a directory of `frame_NNNNNN.pgm` files (binary P5, numbered from
//! 000001). Grayscale frames are 8-bit, depth frames 16-bit big-endian; both
//! are scaled into `[0, 1]` on load.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};

pub const MANIFEST_HEADER: &str = "clip_id,gray_path,depth_path,label,subject";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Modality {
    Grayscale,
    Depth,
}

impl Modality {
    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Grayscale => "gray",
            Modality::Depth => "depth",
        }
    }

    /// Sample ceiling used when writing frames of this modality.
    pub fn maxval(self) -> u16 {
        match self {
            Modality::Grayscale => 255,
            Modality::Depth => 65535,
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gray" | "grayscale" => Ok(Modality::Grayscale),
            "depth" => Ok(Modality::Depth),
            other => Err(Error::InvalidConfig(format!("unknown modality `{other}`"))),
        }
    }
}

/// One modality of one recorded clip. Frames are row-major `height × width`
/// buffers with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    pub clip_id: String,
    pub modality: Modality,
    pub width: usize,
    pub height: usize,
    pub frames: Vec<Vec<f64>>,
}

impl VideoClip {
    pub fn new(
        clip_id: impl Into<String>,
        modality: Modality,
        width: usize,
        height: usize,
        frames: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let clip_id = clip_id.into();
        if frames.is_empty() {
            return Err(Error::InvalidConfig(format!("clip `{clip_id}` has no frames")));
        }
        for frame in &frames {
            if frame.len() != width * height {
                return Err(Error::DimensionMismatch {
                    expected: width * height,
                    got: frame.len(),
                });
            }
            if frame.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidConfig(format!(
                    "clip `{clip_id}` has pixels outside [0, 1]"
                )));
            }
        }
        Ok(VideoClip {
            clip_id,
            modality,
            width,
            height,
            frames,
        })
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    #[inline]
    pub fn pixel(&self, t: usize, y: usize, x: usize) -> f64 {
        self.frames[t][y * self.width + x]
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub clip_id: String,
    pub gray_path: PathBuf,
    pub depth_path: Option<PathBuf>,
    pub label: String,
    pub subject: String,
}

impl ManifestEntry {
    pub fn path_for(&self, modality: Modality) -> Option<&Path> {
        match modality {
            Modality::Grayscale => Some(self.gray_path.as_path()),
            Modality::Depth => self.depth_path.as_deref(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.clip_id.as_str()) {
                return Err(Error::DuplicateClipId(e.clip_id.clone()));
            }
            if e.label.is_empty() || e.subject.is_empty() {
                return Err(Error::InvalidConfig(format!(
                    "clip `{}` has an empty label or subject",
                    e.clip_id
                )));
            }
        }
        Ok(DatasetManifest { entries })
    }

    pub fn get(&self, clip_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.clip_id == clip_id)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for e in &self.entries {
            let depth = e
                .depth_path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                e.clip_id,
                e.gray_path.display(),
                depth,
                e.label,
                e.subject
            ));
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text, &path.display().to_string())
}

pub fn parse_manifest(text: &str, origin: &str) -> Result<DatasetManifest> {
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: origin.to_string(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end_matches('\r') == MANIFEST_HEADER => {}
        _ => {
            return Err(parse_err(
                1,
                format!("expected header `{MANIFEST_HEADER}`"),
            ))
        }
    }
    let mut entries = Vec::new();
    for (idx, raw) in lines {
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(parse_err(
                idx + 1,
                format!("expected 5 fields, found {}", fields.len()),
            ));
        }
        entries.push(ManifestEntry {
            clip_id: fields[0].to_string(),
            gray_path: PathBuf::from(fields[1]),
            depth_path: (!fields[2].is_empty()).then(|| PathBuf::from(fields[2])),
            label: fields[3].to_string(),
            subject: fields[4].to_string(),
        });
    }
    DatasetManifest::new(entries)
}

/// Decoded P5 frame with samples already scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PgmFrame {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub data: Vec<f64>,
}

pub fn read_pgm(path: &Path) -> Result<PgmFrame> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|msg| Error::Pgm {
        path: path.to_path_buf(),
        msg,
    })
}

pub fn decode_pgm(bytes: &[u8]) -> std::result::Result<PgmFrame, String> {
    let mut pos = 0usize;
    let mut token = || -> std::result::Result<String, String> {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                }
                Some(c) if c.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err("unexpected end of header".into()),
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err("not a binary PGM (P5)".into());
    }
    let mut number = |what: &str| -> std::result::Result<usize, String> {
        token()?
            .parse::<usize>()
            .map_err(|_| format!("bad {what}"))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    // exactly one whitespace byte separates the header from the raster
    pos += 1;
    let (bytes_per_sample, scale) = match maxval {
        255 => (1, 255.0),
        65535 => (2, 65535.0),
        m => return Err(format!("unsupported maxval {m}")),
    };
    let n = width * height;
    let raster = bytes
        .get(pos..pos + n * bytes_per_sample)
        .ok_or_else(|| "truncated raster".to_string())?;
    let data = if bytes_per_sample == 1 {
        raster.iter().map(|&b| b as f64 / scale).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale)
            .collect()
    };
    Ok(PgmFrame {
        width,
        height,
        maxval: maxval as u16,
        data,
    })
}

/// Encodes `[0, 1]` samples as P5 with the given maxval (255 or 65535).
pub fn encode_pgm(width: usize, height: usize, maxval: u16, data: &[f64]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n{maxval}\n").into_bytes();
    let m = maxval as f64;
    for &v in data {
        let q = (v.clamp(0.0, 1.0) * m).round();
        if maxval > 255 {
            out.extend_from_slice(&(q as u16).to_be_bytes());
        } else {
            out.push(q as u8);
        }
    }
    out
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:06}.pgm")
}

fn frame_index(name: &str) -> Option<usize> {
    let digits = name.strip_prefix("frame_")?.strip_suffix(".pgm")?;
    if digits.len() != 6 || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

pub fn load_clip(dir: &Path, modality: Modality) -> Result<VideoClip> {
    let seq_err = |msg: String| Error::FrameSequence {
        dir: dir.to_path_buf(),
        msg,
    };
    let mut indexed = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if let Some(idx) = entry.file_name().to_str().and_then(frame_index) {
            indexed.push((idx, entry.path()));
        }
    }
    if indexed.is_empty() {
        return Err(seq_err("no frame_NNNNNN.pgm files".into()));
    }
    indexed.sort();
    for (expected, (idx, _)) in (1..).zip(&indexed) {
        if *idx != expected {
            return Err(seq_err(format!(
                "non-consecutive frame index: expected {expected:06}, found {idx:06}"
            )));
        }
    }
    let mut frames = Vec::with_capacity(indexed.len());
    let (mut width, mut height) = (0, 0);
    for (i, (_, path)) in indexed.iter().enumerate() {
        let frame = read_pgm(path)?;
        if i == 0 {
            width = frame.width;
            height = frame.height;
        } else if frame.width != width || frame.height != height {
            return Err(seq_err(format!(
                "frame {} is {}x{}, expected {width}x{height}",
                path.display(),
                frame.width,
                frame.height
            )));
        }
        frames.push(frame.data);
    }
    let clip_id = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    VideoClip::new(clip_id, modality, width, height, frames)
}

/// Writes the clip as `frame_%06d.pgm` files, 8-bit for grayscale, 16-bit
/// for depth.
pub fn write_clip(dir: &Path, clip: &VideoClip) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let maxval = clip.modality.maxval();
    for (i, frame) in clip.frames.iter().enumerate() {
        let path = dir.join(frame_file_name(i + 1));
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(&encode_pgm(clip.width, clip.height, maxval, frame))
            .map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Bilinear resize with pixel-center alignment, each frame independently.
pub fn resize_clip(clip: &VideoClip, out_w: usize, out_h: usize) -> Result<VideoClip> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidConfig(format!(
            "resize target {out_w}x{out_h} must be at least 1x1"
        )));
    }
    let xs = sample_taps(clip.width, out_w);
    let ys = sample_taps(clip.height, out_h);
    let frames = clip
        .frames
        .iter()
        .map(|src| {
            let mut dst = Vec::with_capacity(out_w * out_h);
            for &(y0, y1, fy) in &ys {
                for &(x0, x1, fx) in &xs {
                    let at = |y: usize, x: usize| src[y * clip.width + x];
                    let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                    let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                    dst.push((top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0));
                }
            }
            dst
        })
        .collect();
    Ok(VideoClip {
        clip_id: clip.clip_id.clone(),
        modality: clip.modality,
        width: out_w,
        height: out_h,
        frames,
    })
}

/// For every output coordinate: the two neighbouring source indices and the
/// weight of the second one.
fn sample_taps(len_in: usize, len_out: usize) -> Vec<(usize, usize, f64)> {
    let scale = len_in as f64 / len_out as f64;
    let last = (len_in - 1) as f64;
    (0..len_out)
        .map(|i| {
            let src = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, last);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(len_in - 1);
            (lo, hi, src - lo as f64)
        })
        .collect()
}
