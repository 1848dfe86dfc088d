//! Visual vocabulary (k-means over stacked ISA descriptors) and
//! bag-of-visual-words clip histograms.

use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::isa::IsaNetwork;
use crate::linalg::chunked_sum;
use crate::patch_sampling::dense_blocks;
use crate::rng::seeded;
use crate::video_io::{Modality, VideoClip};

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    pub centroids: Vec<Vec<f64>>,
}

impl Vocabulary {
    pub fn new(centroids: Vec<Vec<f64>>) -> Result<Self> {
        let dim = centroids.first().map_or(0, Vec::len);
        if centroids.is_empty() || dim == 0 {
            return Err(Error::InvalidConfig("vocabulary needs at least one non-empty word".into()));
        }
        if let Some(bad) = centroids.iter().find(|c| c.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: bad.len(),
            });
        }
        Ok(Vocabulary { centroids })
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.centroids[0].len()
    }

    /// Nearest word by Euclidean distance; ties go to the lowest index.
    pub fn assign(&self, feature: &[f64]) -> Result<usize> {
        if feature.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: feature.len(),
            });
        }
        Ok(nearest(&self.centroids, feature).0)
    }
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>], x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = squared_distance(c, x);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub vocabulary: Vocabulary,
    /// Within-cluster sum of squares after the initial assignment and after
    /// every Lloyd iteration.
    pub wcss_trace: Vec<f64>,
    pub iterations: usize,
}

fn assign_all(centroids: &[Vec<f64>], features: &[Vec<f64>]) -> (Vec<usize>, Vec<f64>, f64) {
    let (labels, dists): (Vec<usize>, Vec<f64>) =
        features.par_iter().map(|f| nearest(centroids, f)).unzip();
    let wcss = chunked_sum(dists.len(), 0.0, |r| dists[r].iter().sum::<f64>());
    (labels, dists, wcss)
}

fn kmeans_plus_plus(features: &[Vec<f64>], k: usize, rng: &mut impl Rng) -> Result<Vec<Vec<f64>>> {
    let mut centroids = vec![features[rng.random_range(0..features.len())].clone()];
    let mut d2: Vec<f64> = features
        .par_iter()
        .map(|f| squared_distance(f, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total = chunked_sum(d2.len(), 0.0, |r| d2[r].iter().sum::<f64>());
        if !(total > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "fewer than {k} distinct features; cannot build {k} distinct words"
            )));
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            acc += d;
            if d > 0.0 && acc >= target {
                pick = Some(i);
                break;
            }
        }
        // rounding can leave `acc` a hair below `target`
        let pick = pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).expect("total > 0"));
        let chosen = features[pick].clone();
        d2.par_iter_mut()
            .zip(features.par_iter())
            .for_each(|(d, f)| *d = d.min(squared_distance(f, &chosen)));
        centroids.push(chosen);
    }
    Ok(centroids)
}

/// k-means++ seeding followed by Lloyd iterations.
pub fn kmeans_fit(
    features: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansFit> {
    if k == 0 {
        return Err(Error::InvalidConfig("vocabulary size must be >= 1".into()));
    }
    if features.len() < k {
        return Err(Error::NotEnoughSamples {
            needed: k,
            got: features.len(),
        });
    }
    let dim = features[0].len();
    if let Some(bad) = features.iter().find(|f| f.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }

    let mut rng = seeded(seed);
    let mut centroids = kmeans_plus_plus(features, k, &mut rng)?;
    let (mut labels, mut dists, wcss) = assign_all(&centroids, features);
    let mut trace = vec![wcss];
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (f, &l) in features.iter().zip(&labels) {
            counts[l] += 1;
            sums[l].iter_mut().zip(f).for_each(|(s, v)| *s += v);
        }
        // empty clusters take the points farthest from their current centroid
        let mut taken = vec![false; features.len()];
        for c in 0..k {
            if counts[c] == 0 {
                let far = dists
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| !taken[*i])
                    .fold((0, f64::NEG_INFINITY), |best, (i, &d)| if d > best.1 { (i, d) } else { best })
                    .0;
                taken[far] = true;
                sums[c] = features[far].clone();
                counts[c] = 1;
            }
        }
        let mut movement = 0.0f64;
        for c in 0..k {
            let inv = 1.0 / counts[c] as f64;
            let updated: Vec<f64> = sums[c].iter().map(|s| s * inv).collect();
            movement = movement.max(squared_distance(&updated, &centroids[c]).sqrt());
            centroids[c] = updated;
        }
        let (l, d, wcss) = assign_all(&centroids, features);
        labels = l;
        dists = d;
        trace.push(wcss);
        if movement < tol {
            break;
        }
    }

    Ok(KMeansFit {
        vocabulary: Vocabulary::new(centroids)?,
        wcss_trace: trace,
        iterations,
    })
}

/// L1-normalised word counts of one clip in one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct BowHistogram {
    pub clip_id: String,
    pub modality: Modality,
    pub weights: Vec<f64>,
}

/// Stacked descriptors of every dense layer-2 block of the clip.
pub fn clip_descriptors(net: &IsaNetwork, clip: &VideoClip) -> Result<Vec<Vec<f64>>> {
    let blocks = dense_blocks(clip, &net.geometry.layer2).map_err(|e| match e {
        Error::ClipTooSmall { clip, .. } => Error::EmptyClip(clip),
        other => other,
    })?;
    if blocks.is_empty() {
        return Err(Error::EmptyClip(clip.clip_id.clone()));
    }
    net.extract_stacked_batch(&blocks)
}

pub fn histogram_from_descriptors(
    vocab: &Vocabulary,
    clip_id: &str,
    modality: Modality,
    descriptors: &[Vec<f64>],
) -> Result<BowHistogram> {
    if descriptors.is_empty() {
        return Err(Error::EmptyClip(clip_id.to_string()));
    }
    let mut counts = vec![0usize; vocab.len()];
    for d in descriptors {
        counts[vocab.assign(d)?] += 1;
    }
    let total = descriptors.len() as f64;
    Ok(BowHistogram {
        clip_id: clip_id.to_string(),
        modality,
        weights: counts.iter().map(|&c| c as f64 / total).collect(),
    })
}

pub fn encode_clip(net: &IsaNetwork, vocab: &Vocabulary, clip: &VideoClip) -> Result<BowHistogram> {
    let descriptors = clip_descriptors(net, clip)?;
    histogram_from_descriptors(vocab, &clip.clip_id, clip.modality, &descriptors)
}

pub fn write_histograms(path: &Path, histograms: &[BowHistogram]) -> Result<()> {
    let k = histograms.first().map_or(0, |h| h.weights.len());
    let mut out = String::from("clip_id,modality");
    for i in 0..k {
        out.push_str(&format!(",w{i}"));
    }
    out.push('\n');
    for h in histograms {
        if h.weights.len() != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: h.weights.len(),
            });
        }
        out.push_str(&h.clip_id);
        out.push(',');
        out.push_str(h.modality.as_str());
        for w in &h.weights {
            out.push(',');
            out.push_str(&crate::model_io::format_f64(*w));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_histograms(path: &Path) -> Result<Vec<BowHistogram>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let origin = path.display().to_string();
    let err = |line: usize, msg: String| Error::Parse {
        path: origin.clone(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l).unwrap_or_default();
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[0] != "clip_id" || cols[1] != "modality" {
        return Err(err(1, "expected header `clip_id,modality,w0,...`".into()));
    }
    let k = cols.len() - 2;
    let mut out = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != k + 2 {
            return Err(err(idx + 1, format!("expected {} fields, found {}", k + 2, fields.len())));
        }
        let weights = fields[2..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| err(idx + 1, format!("bad number `{f}`"))))
            .collect::<Result<Vec<_>>>()?;
        out.push(BowHistogram {
            clip_id: fields[0].to_string(),
            modality: fields[1].parse()?,
            weights,
        });
    }
    Ok(out)
}
