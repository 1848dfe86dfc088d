//! Synthetic two-activity dataset: a soft vertical bar translating left or
//! right across a noisy background, rendered in both modalities.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};
use crate::video_io::{write_clip, DatasetManifest, ManifestEntry, Modality, VideoClip};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Left,
    Right,
}

impl Direction {
    pub fn label(self) -> &'static str {
        match self {
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub subjects: usize,
    pub clips_per_subject: usize,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            subjects: 4,
            clips_per_subject: 10,
            width: 80,
            height: 60,
            frames: 30,
            seed: 0,
        }
    }
}

/// Intensity profile of a bar centred at `center` with logistic edges.
pub fn bar_profile(width: usize, center: f64, half_width: f64, softness: f64) -> Vec<f64> {
    (0..width)
        .map(|x| {
            let d = (x as f64 - center).abs() - half_width;
            1.0 / (1.0 + (d / softness).exp())
        })
        .collect()
}

/// Appearance of one rendered clip.
#[derive(Debug, Clone, PartialEq)]
pub struct BarScene {
    pub direction: Direction,
    pub start: f64,
    pub speed: f64,
    pub half_width: f64,
    pub softness: f64,
    pub foreground: f64,
    pub background: f64,
    pub noise: f64,
}

impl BarScene {
    pub fn center_at(&self, t: usize) -> f64 {
        let step = self.speed * t as f64;
        match self.direction {
            Direction::Left => self.start - step,
            Direction::Right => self.start + step,
        }
    }

    pub fn render(&self, clip_id: &str, modality: Modality, width: usize, height: usize, frames: usize, seed: u64) -> Result<VideoClip> {
        let mut rng = seeded(seed);
        let noise = Normal::new(0.0, self.noise.max(0.0))
            .map_err(|e| Error::InvalidConfig(format!("noise level: {e}")))?;
        let data = (0..frames)
            .map(|t| {
                let profile = bar_profile(width, self.center_at(t), self.half_width, self.softness);
                let mut frame = Vec::with_capacity(width * height);
                for _ in 0..height {
                    for &p in &profile {
                        let v = self.background + (self.foreground - self.background) * p + noise.sample(&mut rng);
                        frame.push(v.clamp(0.0, 1.0));
                    }
                }
                frame
            })
            .collect();
        VideoClip::new(clip_id, modality, width, height, data)
    }
}

/// Per-subject appearance varies; direction alternates within a subject.
fn scene(subject: usize, index: usize, spec: &SyntheticSpec, modality: Modality) -> BarScene {
    let mut rng = seeded(derive_seed(spec.seed, (subject * 1000 + index) as u64));
    let direction = if index % 2 == 0 { Direction::Left } else { Direction::Right };
    let speed = rng.random_range(1.2..2.2);
    let travel = speed * spec.frames.saturating_sub(1) as f64;
    let w = spec.width as f64;
    let slack = (w - travel).max(1.0);
    let offset = rng.random_range(0.0..slack);
    let start = match direction {
        Direction::Right => offset,
        Direction::Left => w - 1.0 - offset,
    };
    let subject_tone = 0.15 * (subject % 3) as f64;
    let (foreground, background) = match modality {
        // the bar is nearer the sensor than the wall behind it
        Modality::Depth => (0.25 + 0.1 * (subject % 2) as f64, 0.8),
        Modality::Grayscale => (0.85 - subject_tone, 0.2 + 0.5 * subject_tone),
    };
    BarScene {
        direction,
        start,
        speed,
        half_width: rng.random_range(3.0..5.0),
        softness: 0.8,
        foreground,
        background,
        noise: 0.02,
    }
}

/// Renders the dataset under `root` (`gray/<id>`, `depth/<id>`,
/// `manifest.csv`) and returns its manifest.
pub fn generate_dataset(root: &Path, spec: &SyntheticSpec) -> Result<DatasetManifest> {
    let mut entries = Vec::new();
    for subject in 0..spec.subjects {
        for index in 0..spec.clips_per_subject {
            let label = scene(subject, index, spec, Modality::Grayscale).direction.label();
            let clip_id = format!("s{subject}_{index:02}_{label}");
            let mut paths = Vec::new();
            for (m, modality) in [Modality::Grayscale, Modality::Depth].into_iter().enumerate() {
                let rel = PathBuf::from(modality.as_str()).join(&clip_id);
                let seed = derive_seed(spec.seed, (1 << 32) + (subject * 1000 + index) as u64 * 2 + m as u64);
                let clip = scene(subject, index, spec, modality).render(
                    &clip_id,
                    modality,
                    spec.width,
                    spec.height,
                    spec.frames,
                    seed,
                )?;
                write_clip(&root.join(&rel), &clip)?;
                paths.push(rel);
            }
            entries.push(ManifestEntry {
                clip_id,
                gray_path: paths[0].clone(),
                depth_path: Some(paths[1].clone()),
                label: label.to_string(),
                subject: format!("subject{subject}"),
            });
        }
    }
    let manifest = DatasetManifest::new(entries)?;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    manifest.write(&root.join("manifest.csv"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video_io::{load_clip, load_manifest};

    #[test]
    fn bar_moves_in_its_direction() {
        let spec = SyntheticSpec::default();
        for index in 0..4 {
            let s = scene(1, index, &spec, Modality::Grayscale);
            let first = s.center_at(0);
            let last = s.center_at(spec.frames - 1);
            match s.direction {
                Direction::Left => assert!(last < first),
                Direction::Right => assert!(last > first),
            }
            assert!(first >= 0.0 && first < spec.width as f64);
        }
    }

    #[test]
    fn profile_peaks_at_center() {
        let p = bar_profile(20, 10.0, 2.0, 0.5);
        assert!(p[10] > 0.95 && p[0] < 0.01 && p[19] < 0.01);
    }

    #[test]
    fn writes_loadable_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            subjects: 2,
            clips_per_subject: 2,
            width: 16,
            height: 12,
            frames: 5,
            seed: 9,
        };
        let manifest = generate_dataset(dir.path(), &spec).unwrap();
        assert_eq!(load_manifest(&dir.path().join("manifest.csv")).unwrap(), manifest);
        let e = &manifest.entries[3];
        for m in [Modality::Grayscale, Modality::Depth] {
            let clip = load_clip(&dir.path().join(e.path_for(m).unwrap()), m).unwrap();
            assert_eq!((clip.width, clip.height, clip.num_frames()), (16, 12, 5));
        }
        assert_eq!(manifest.entries.iter().filter(|e| e.label == "left").count(), 2);
    }
}
