//! Spatiotemporal block extraction.
//!
//! Blocks are flattened frame by frame, row-major inside each frame, so the
//! sample at frame `i`, row `r`, column `c` lands at `i·sx·sy + r·sx + c`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::seeded;
use crate::video_io::VideoClip;

/// Block size plus the stride used for dense placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockGeometry {
    pub sx: usize,
    pub sy: usize,
    pub st: usize,
    pub stride_x: usize,
    pub stride_y: usize,
    pub stride_t: usize,
}

impl BlockGeometry {
    pub fn new(
        sx: usize,
        sy: usize,
        st: usize,
        stride_x: usize,
        stride_y: usize,
        stride_t: usize,
    ) -> Result<Self> {
        let g = BlockGeometry {
            sx,
            sy,
            st,
            stride_x,
            stride_y,
            stride_t,
        };
        g.validate()?;
        Ok(g)
    }

    /// Block of the given size with strides of half the block (at least 1).
    pub fn with_half_strides(sx: usize, sy: usize, st: usize) -> Result<Self> {
        Self::new(
            sx,
            sy,
            st,
            (sx / 2).max(1),
            (sy / 2).max(1),
            (st / 2).max(1),
        )
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.sx,
            self.sy,
            self.st,
            self.stride_x,
            self.stride_y,
            self.stride_t,
        ];
        if all.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "block geometry values must be >= 1: {self:?}"
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sx * self.sy * self.st
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame_len(&self) -> usize {
        self.sx * self.sy
    }

    fn check_fits(&self, clip: &VideoClip) -> Result<()> {
        if clip.width < self.sx || clip.height < self.sy || clip.num_frames() < self.st {
            return Err(Error::ClipTooSmall {
                clip: clip.clip_id.clone(),
                sx: self.sx,
                sy: self.sy,
                st: self.st,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Origin {
    pub x: usize,
    pub y: usize,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub values: Vec<f64>,
    pub origin: Origin,
    pub source_clip: String,
}

/// Flattens `st` images (each `sy` rows of `sx` columns) into one vector.
pub fn flatten_block(block: &[Vec<Vec<f64>>]) -> Result<Vec<f64>> {
    let Some(first) = block.first() else {
        return Ok(Vec::new());
    };
    let sy = first.len();
    let sx = first.first().map_or(0, Vec::len);
    let mut out = Vec::with_capacity(block.len() * sx * sy);
    for frame in block {
        if frame.len() != sy {
            return Err(Error::DimensionMismatch {
                expected: sy,
                got: frame.len(),
            });
        }
        for row in frame {
            if row.len() != sx {
                return Err(Error::DimensionMismatch {
                    expected: sx,
                    got: row.len(),
                });
            }
            out.extend_from_slice(row);
        }
    }
    Ok(out)
}

/// Inverse of [`flatten_block`] for a known geometry.
pub fn unflatten_block(values: &[f64], sx: usize, sy: usize) -> Vec<Vec<Vec<f64>>> {
    values
        .chunks(sx * sy)
        .map(|frame| frame.chunks(sx).map(<[f64]>::to_vec).collect())
        .collect()
}

/// Copies the block at `origin` straight out of the clip in flattened order.
pub fn extract_block(clip: &VideoClip, geom: &BlockGeometry, origin: Origin) -> Patch {
    let mut values = Vec::with_capacity(geom.len());
    for t in origin.t..origin.t + geom.st {
        let frame = &clip.frames[t];
        for y in origin.y..origin.y + geom.sy {
            let row = y * clip.width;
            values.extend_from_slice(&frame[row + origin.x..row + origin.x + geom.sx]);
        }
    }
    Patch {
        values,
        origin,
        source_clip: clip.clip_id.clone(),
    }
}

pub fn sample_random_blocks(
    clip: &VideoClip,
    geom: &BlockGeometry,
    n: usize,
    seed: u64,
) -> Result<Vec<Patch>> {
    geom.validate()?;
    geom.check_fits(clip)?;
    let mut rng = seeded(seed);
    let (max_x, max_y, max_t) = (
        clip.width - geom.sx,
        clip.height - geom.sy,
        clip.num_frames() - geom.st,
    );
    Ok((0..n)
        .map(|_| {
            let origin = Origin {
                x: rng.random_range(0..=max_x),
                y: rng.random_range(0..=max_y),
                t: rng.random_range(0..=max_t),
            };
            extract_block(clip, geom, origin)
        })
        .collect())
}

/// Origins of the dense grid, ordered t-major, then y, then x.
pub fn dense_origins(
    width: usize,
    height: usize,
    frames: usize,
    geom: &BlockGeometry,
) -> Vec<Origin> {
    let axis = |len: usize, size: usize, stride: usize| -> Vec<usize> {
        if len < size {
            Vec::new()
        } else {
            (0..=len - size).step_by(stride).collect()
        }
    };
    let xs = axis(width, geom.sx, geom.stride_x);
    let ys = axis(height, geom.sy, geom.stride_y);
    let ts = axis(frames, geom.st, geom.stride_t);
    let mut out = Vec::with_capacity(xs.len() * ys.len() * ts.len());
    for &t in &ts {
        for &y in &ys {
            for &x in &xs {
                out.push(Origin { x, y, t });
            }
        }
    }
    out
}

pub fn dense_blocks(clip: &VideoClip, geom: &BlockGeometry) -> Result<Vec<Patch>> {
    geom.validate()?;
    geom.check_fits(clip)?;
    Ok(
        dense_origins(clip.width, clip.height, clip.num_frames(), geom)
            .into_iter()
            .map(|o| extract_block(clip, geom, o))
            .collect(),
    )
}

pub const CONTRAST_EPSILON: f64 = 1e-8;

/// Subtracts the mean and divides by `sqrt(var + 1e-8)` (population variance).
pub fn contrast_normalize_values(values: &[f64]) -> Vec<f64> {
    if values.is_empty() {
        return Vec::new();
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let scale = 1.0 / (var + CONTRAST_EPSILON).sqrt();
    let mut out: Vec<f64> = values.iter().map(|v| (v - mean) * scale).collect();
    // re-centre to absorb the rounding of the first subtraction
    let residual = out.iter().sum::<f64>() / n;
    out.iter_mut().for_each(|v| *v -= residual);
    out
}

pub fn contrast_normalize(patch: &Patch) -> Patch {
    Patch {
        values: contrast_normalize_values(&patch.values),
        origin: patch.origin,
        source_clip: patch.source_clip.clone(),
    }
}
