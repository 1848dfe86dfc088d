//! Pipeline configuration and its flat `key = value` file format.
//!
//! ```text
//! # comment
//! [isa]
//! layer1_filters = 300
//! [classifier]
//! grid_c = 0.03125, 0.125, 0.5
//! ```
//!
//! Keys are addressed as `section.key` when overridden from the command line.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::classifier::{log2_grid, DEFAULT_KKT_TOL};
use crate::error::{Error, Result};
use crate::isa::{IsaTrainConfig, PretrainConfig, StackGeometry};
use crate::patch_sampling::BlockGeometry;
use crate::video_io::Modality;

/// Which modality (or feature-level combination) feeds the classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModalitySelection {
    Gray,
    Depth,
    Fused,
}

impl ModalitySelection {
    pub fn modalities(self) -> &'static [Modality] {
        match self {
            ModalitySelection::Gray => &[Modality::Grayscale],
            ModalitySelection::Depth => &[Modality::Depth],
            ModalitySelection::Fused => &[Modality::Grayscale, Modality::Depth],
        }
    }
}

impl fmt::Display for ModalitySelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModalitySelection::Gray => "gray",
            ModalitySelection::Depth => "depth",
            ModalitySelection::Fused => "fused",
        })
    }
}

impl FromStr for ModalitySelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gray" | "grayscale" => Ok(ModalitySelection::Gray),
            "depth" => Ok(ModalitySelection::Depth),
            "fused" | "gray+depth" => Ok(ModalitySelection::Fused),
            other => Err(Error::InvalidConfig(format!(
                "unknown modality `{other}` (expected gray, depth or fused)"
            ))),
        }
    }
}

/// Clips the network and vocabulary are fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PretrainSet {
    /// Training-fold clips of the current split only.
    Train,
    /// Every clip in the manifest, labels ignored.
    All,
}

impl FromStr for PretrainSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(PretrainSet::Train),
            "all" => Ok(PretrainSet::All),
            other => Err(Error::InvalidConfig(format!(
                "unknown pretrain set `{other}` (expected train or all)"
            ))),
        }
    }
}

impl fmt::Display for PretrainSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PretrainSet::Train => "train",
            PretrainSet::All => "all",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Seeds {
    pub patch_sampling: u64,
    pub isa_layer1: u64,
    pub isa_layer2: u64,
    pub vocabulary: u64,
    pub grid_search: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub dataset_root: PathBuf,
    /// Relative paths resolve against `dataset_root`.
    pub manifest: PathBuf,
    pub modality: ModalitySelection,
    pub width: usize,
    pub height: usize,

    pub geometry: StackGeometry,
    pub layer1_samples: usize,
    pub layer2_samples: usize,

    pub whiten1_dim: usize,
    pub whiten2_dim: usize,
    pub whiten_eps: f64,

    pub layer1_filters: usize,
    pub layer1_group: usize,
    pub layer2_filters: usize,
    pub layer2_group: usize,
    pub isa_eps: f64,
    pub step_size: f64,
    pub step_decay: f64,
    pub max_iters: usize,
    pub rel_tol: f64,

    pub words: usize,
    pub kmeans_max_iter: usize,
    pub kmeans_tol: f64,
    pub max_descriptors: usize,

    pub grid_c: Vec<f64>,
    pub grid_gamma: Vec<f64>,
    pub folds: usize,
    pub kkt_tol: f64,

    pub pretrain_set: PretrainSet,
    /// Test subjects to evaluate; empty means every subject.
    pub splits: Vec<String>,

    pub seeds: Seeds,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            dataset_root: PathBuf::from("data"),
            manifest: PathBuf::from("manifest.csv"),
            modality: ModalitySelection::Gray,
            width: 80,
            height: 60,
            geometry: StackGeometry {
                layer1: BlockGeometry { sx: 16, sy: 16, st: 10, stride_x: 8, stride_y: 8, stride_t: 5 },
                layer2: BlockGeometry { sx: 20, sy: 20, st: 14, stride_x: 10, stride_y: 10, stride_t: 7 },
                grid: [2, 2, 2],
                sub_stride: [4, 4, 4],
            },
            layer1_samples: 20_000,
            layer2_samples: 10_000,
            whiten1_dim: 300,
            whiten2_dim: 200,
            whiten_eps: 0.1,
            layer1_filters: 300,
            layer1_group: 2,
            layer2_filters: 200,
            layer2_group: 2,
            isa_eps: 1e-4,
            step_size: IsaTrainConfig::default().step_size,
            step_decay: IsaTrainConfig::default().step_decay,
            max_iters: 1000,
            rel_tol: 1e-6,
            words: 100,
            kmeans_max_iter: 300,
            kmeans_tol: 1e-6,
            max_descriptors: 200_000,
            grid_c: log2_grid(-5, 15, 2),
            grid_gamma: log2_grid(-15, 3, 2),
            folds: 5,
            kkt_tol: DEFAULT_KKT_TOL,
            pretrain_set: PretrainSet::Train,
            splits: Vec::new(),
            seeds: Seeds {
                patch_sampling: 1,
                isa_layer1: 2,
                isa_layer2: 3,
                vocabulary: 4,
                grid_search: 5,
            },
            output_dir: PathBuf::from("out"),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("bad value `{value}` for `{key}`")))
}

fn parse_triple(key: &str, value: &str) -> Result<[usize; 3]> {
    let parts: Vec<usize> = value
        .split(',')
        .map(|p| parse_value(key, p))
        .collect::<Result<_>>()?;
    parts
        .try_into()
        .map_err(|_| Error::InvalidConfig(format!("`{key}` needs three comma-separated values")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|p| parse_value(key, p)).collect()
}

fn join<T: ToString>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

fn triple(v: [usize; 3]) -> String {
    format!("{}, {}, {}", v[0], v[1], v[2])
}

impl PipelineConfig {
    /// Every setting as `(section, key, value)` in file order.
    pub fn entries(&self) -> Vec<(&'static str, &'static str, String)> {
        let g = &self.geometry;
        vec![
            ("dataset", "root", self.dataset_root.display().to_string()),
            ("dataset", "manifest", self.manifest.display().to_string()),
            ("dataset", "modality", self.modality.to_string()),
            ("video_io", "width", self.width.to_string()),
            ("video_io", "height", self.height.to_string()),
            ("patch_sampling", "layer1_block", triple([g.layer1.sx, g.layer1.sy, g.layer1.st])),
            ("patch_sampling", "layer1_stride", triple([g.layer1.stride_x, g.layer1.stride_y, g.layer1.stride_t])),
            ("patch_sampling", "layer2_block", triple([g.layer2.sx, g.layer2.sy, g.layer2.st])),
            ("patch_sampling", "layer2_stride", triple([g.layer2.stride_x, g.layer2.stride_y, g.layer2.stride_t])),
            ("patch_sampling", "grid", triple(g.grid)),
            ("patch_sampling", "sub_stride", triple(g.sub_stride)),
            ("patch_sampling", "layer1_samples", self.layer1_samples.to_string()),
            ("patch_sampling", "layer2_samples", self.layer2_samples.to_string()),
            ("whitening", "layer1_dim", self.whiten1_dim.to_string()),
            ("whitening", "layer2_dim", self.whiten2_dim.to_string()),
            ("whitening", "eps", self.whiten_eps.to_string()),
            ("isa", "layer1_filters", self.layer1_filters.to_string()),
            ("isa", "layer1_group", self.layer1_group.to_string()),
            ("isa", "layer2_filters", self.layer2_filters.to_string()),
            ("isa", "layer2_group", self.layer2_group.to_string()),
            ("isa", "eps", self.isa_eps.to_string()),
            ("isa", "step_size", self.step_size.to_string()),
            ("isa", "step_decay", self.step_decay.to_string()),
            ("isa", "max_iters", self.max_iters.to_string()),
            ("isa", "rel_tol", self.rel_tol.to_string()),
            ("vocabulary", "words", self.words.to_string()),
            ("vocabulary", "max_iter", self.kmeans_max_iter.to_string()),
            ("vocabulary", "tol", self.kmeans_tol.to_string()),
            ("vocabulary", "max_descriptors", self.max_descriptors.to_string()),
            ("classifier", "grid_c", join(&self.grid_c)),
            ("classifier", "grid_gamma", join(&self.grid_gamma)),
            ("classifier", "folds", self.folds.to_string()),
            ("classifier", "kkt_tol", self.kkt_tol.to_string()),
            ("evaluation", "pretrain_set", self.pretrain_set.to_string()),
            ("evaluation", "splits", self.splits.join(", ")),
            ("seeds", "patch_sampling", self.seeds.patch_sampling.to_string()),
            ("seeds", "isa_layer1", self.seeds.isa_layer1.to_string()),
            ("seeds", "isa_layer2", self.seeds.isa_layer2.to_string()),
            ("seeds", "vocabulary", self.seeds.vocabulary.to_string()),
            ("seeds", "grid_search", self.seeds.grid_search.to_string()),
            ("output", "dir", self.output_dir.display().to_string()),
        ]
    }

    /// Sets one value addressed as `section.key`.
    pub fn set(&mut self, path: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let g = &mut self.geometry;
        match path {
            "dataset.root" => self.dataset_root = PathBuf::from(value),
            "dataset.manifest" => self.manifest = PathBuf::from(value),
            "dataset.modality" => self.modality = value.parse()?,
            "video_io.width" => self.width = parse_value(path, value)?,
            "video_io.height" => self.height = parse_value(path, value)?,
            "patch_sampling.layer1_block" => {
                [g.layer1.sx, g.layer1.sy, g.layer1.st] = parse_triple(path, value)?
            }
            "patch_sampling.layer1_stride" => {
                [g.layer1.stride_x, g.layer1.stride_y, g.layer1.stride_t] = parse_triple(path, value)?
            }
            "patch_sampling.layer2_block" => {
                [g.layer2.sx, g.layer2.sy, g.layer2.st] = parse_triple(path, value)?
            }
            "patch_sampling.layer2_stride" => {
                [g.layer2.stride_x, g.layer2.stride_y, g.layer2.stride_t] = parse_triple(path, value)?
            }
            "patch_sampling.grid" => g.grid = parse_triple(path, value)?,
            "patch_sampling.sub_stride" => g.sub_stride = parse_triple(path, value)?,
            "patch_sampling.layer1_samples" => self.layer1_samples = parse_value(path, value)?,
            "patch_sampling.layer2_samples" => self.layer2_samples = parse_value(path, value)?,
            "whitening.layer1_dim" => self.whiten1_dim = parse_value(path, value)?,
            "whitening.layer2_dim" => self.whiten2_dim = parse_value(path, value)?,
            "whitening.eps" => self.whiten_eps = parse_value(path, value)?,
            "isa.layer1_filters" => self.layer1_filters = parse_value(path, value)?,
            "isa.layer1_group" => self.layer1_group = parse_value(path, value)?,
            "isa.layer2_filters" => self.layer2_filters = parse_value(path, value)?,
            "isa.layer2_group" => self.layer2_group = parse_value(path, value)?,
            "isa.eps" => self.isa_eps = parse_value(path, value)?,
            "isa.step_size" => self.step_size = parse_value(path, value)?,
            "isa.step_decay" => self.step_decay = parse_value(path, value)?,
            "isa.max_iters" => self.max_iters = parse_value(path, value)?,
            "isa.rel_tol" => self.rel_tol = parse_value(path, value)?,
            "vocabulary.words" => self.words = parse_value(path, value)?,
            "vocabulary.max_iter" => self.kmeans_max_iter = parse_value(path, value)?,
            "vocabulary.tol" => self.kmeans_tol = parse_value(path, value)?,
            "vocabulary.max_descriptors" => self.max_descriptors = parse_value(path, value)?,
            "classifier.grid_c" => self.grid_c = parse_list(path, value)?,
            "classifier.grid_gamma" => self.grid_gamma = parse_list(path, value)?,
            "classifier.folds" => self.folds = parse_value(path, value)?,
            "classifier.kkt_tol" => self.kkt_tol = parse_value(path, value)?,
            "evaluation.pretrain_set" => self.pretrain_set = value.parse()?,
            "evaluation.splits" => {
                self.splits = parse_list::<String>(path, value)?
                    .into_iter()
                    .map(|s| s.trim().to_string())
                    .collect()
            }
            "seeds.patch_sampling" => self.seeds.patch_sampling = parse_value(path, value)?,
            "seeds.isa_layer1" => self.seeds.isa_layer1 = parse_value(path, value)?,
            "seeds.isa_layer2" => self.seeds.isa_layer2 = parse_value(path, value)?,
            "seeds.vocabulary" => self.seeds.vocabulary = parse_value(path, value)?,
            "seeds.grid_search" => self.seeds.grid_search = parse_value(path, value)?,
            "output.dir" => self.output_dir = PathBuf::from(value),
            other => return Err(Error::InvalidConfig(format!("unknown setting `{other}`"))),
        }
        Ok(())
    }

    /// Applies a config file on top of `self`.
    pub fn merge_str(&mut self, text: &str, origin: &str) -> Result<()> {
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_string(),
                line: idx + 1,
                msg: "expected `key = value`".into(),
            })?;
            let path = format!("{section}.{}", key.trim());
            self.set(&path, value).map_err(|e| Error::Parse {
                path: origin.to_string(),
                line: idx + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = PipelineConfig::default();
        cfg.merge_str(&text, &path.display().to_string())?;
        Ok(cfg)
    }

    pub fn manifest_path(&self) -> PathBuf {
        self.dataset_root.join(&self.manifest)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidConfig("frame size must be at least 1x1".into()));
        }
        if self.words == 0 {
            return Err(Error::InvalidConfig("vocabulary.words must be >= 1".into()));
        }
        if self.folds < 2 {
            return Err(Error::InvalidConfig("classifier.folds must be >= 2".into()));
        }
        if self.grid_c.is_empty() || self.grid_gamma.is_empty() {
            return Err(Error::InvalidConfig("classifier grids must not be empty".into()));
        }
        self.train_config(self.seeds.isa_layer1).validate()
    }

    fn train_config(&self, seed: u64) -> IsaTrainConfig {
        IsaTrainConfig {
            step_size: self.step_size,
            step_decay: self.step_decay,
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
            seed,
            eps: self.isa_eps,
        }
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        PretrainConfig {
            geometry: self.geometry,
            whiten1_dim: self.whiten1_dim,
            whiten2_dim: self.whiten2_dim,
            whiten_eps: self.whiten_eps,
            layer1_filters: self.layer1_filters,
            layer1_group: self.layer1_group,
            layer2_filters: self.layer2_filters,
            layer2_group: self.layer2_group,
            layer1_samples: self.layer1_samples,
            layer2_samples: self.layer2_samples,
            sample_seed: self.seeds.patch_sampling,
            layer1_train: self.train_config(self.seeds.isa_layer1),
            layer2_train: self.train_config(self.seeds.isa_layer2),
        }
    }
}

impl fmt::Display for PipelineConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut section = "";
        for (sec, key, value) in self.entries() {
            if sec != section {
                if !section.is_empty() {
                    writeln!(f)?;
                }
                writeln!(f, "[{sec}]")?;
                section = sec;
            }
            writeln!(f, "{key} = {value}")?;
        }
        Ok(())
    }
}
