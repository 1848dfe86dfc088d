//! Leave-one-person-out evaluation, modality fusion and report rendering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::sync::Mutex;

use rand::seq::index::sample;
use rayon::prelude::*;

use crate::classifier::{grid_search, train_multiclass};
use crate::config::{ModalitySelection, PipelineConfig, PretrainSet};
use crate::error::{Error, Result};
use crate::isa::{pretrain_network, IsaNetwork};
use crate::model_io::{format_f64, save_network, save_svm, save_vocabulary};
use crate::patch_sampling::BlockGeometry;
use crate::rng::{derive_seed, seeded};
use crate::video_io::{load_clip, resize_clip, DatasetManifest, ManifestEntry, VideoClip};
use crate::vocabulary::{
    clip_descriptors, histogram_from_descriptors, kmeans_fit, BowHistogram, Vocabulary,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub test_subject: String,
    pub train_clips: Vec<String>,
    pub test_clips: Vec<String>,
}

/// One split per distinct subject, ordered by subject name.
pub fn lopo_splits(manifest: &DatasetManifest) -> Result<Vec<Split>> {
    let subjects: BTreeSet<&str> = manifest.entries.iter().map(|e| e.subject.as_str()).collect();
    if subjects.len() < 2 {
        return Err(Error::TooFewSubjects(subjects.len()));
    }
    Ok(subjects
        .into_iter()
        .map(|s| {
            let (test, train): (Vec<&ManifestEntry>, Vec<&ManifestEntry>) =
                manifest.entries.iter().partition(|e| e.subject == s);
            Split {
                test_subject: s.to_string(),
                train_clips: train.iter().map(|e| e.clip_id.clone()).collect(),
                test_clips: test.iter().map(|e| e.clip_id.clone()).collect(),
            }
        })
        .collect())
}

/// Gray weights followed by depth weights, halved so the result sums to one.
pub fn fuse_histograms(gray: &BowHistogram, depth: &BowHistogram) -> Result<Vec<f64>> {
    if gray.clip_id != depth.clip_id {
        return Err(Error::ClipIdMismatch(gray.clip_id.clone(), depth.clip_id.clone()));
    }
    Ok(gray
        .weights
        .iter()
        .chain(&depth.weights)
        .map(|w| w / 2.0)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Pretrain,
    VocabularyFit,
    GridSearch,
    SvmTrain,
    Encode,
    Predict,
}

impl Stage {
    /// Stages whose output depends on the clips they read.
    pub fn is_fitting(self) -> bool {
        matches!(
            self,
            Stage::Pretrain | Stage::VocabularyFit | Stage::GridSearch | Stage::SvmTrain
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessEvent {
    /// Test subject of the split the access belongs to.
    pub split: String,
    pub stage: Stage,
    pub clip_id: String,
}

/// Observer for every clip a pipeline stage reads.
pub trait AccessAudit: Sync {
    fn record(&self, event: AccessEvent);
}

pub struct NoAudit;

impl AccessAudit for NoAudit {
    fn record(&self, _event: AccessEvent) {}
}

#[derive(Debug, Default)]
pub struct RecordingAudit {
    events: Mutex<Vec<AccessEvent>>,
}

impl RecordingAudit {
    pub fn events(&self) -> Vec<AccessEvent> {
        self.events.lock().expect("audit lock poisoned").clone()
    }

    /// Fitting-stage reads of a clip that belongs to its split's test fold.
    pub fn leaks(&self, splits: &[Split]) -> Vec<AccessEvent> {
        let tests: BTreeMap<&str, BTreeSet<&str>> = splits
            .iter()
            .map(|s| {
                (
                    s.test_subject.as_str(),
                    s.test_clips.iter().map(String::as_str).collect(),
                )
            })
            .collect();
        self.events()
            .into_iter()
            .filter(|e| {
                e.stage.is_fitting()
                    && tests
                        .get(e.split.as_str())
                        .is_some_and(|t| t.contains(e.clip_id.as_str()))
            })
            .collect()
    }
}

impl AccessAudit for RecordingAudit {
    fn record(&self, event: AccessEvent) {
        self.events.lock().expect("audit lock poisoned").push(event);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedClip {
    pub clip_id: String,
    pub reason: String,
}

/// Clips of the manifest loaded for every selected modality.
#[derive(Debug, Clone)]
pub struct ClipSet {
    pub selection: ModalitySelection,
    /// Entries whose clips were loaded; `clips[i][m]` is entry `i` in the
    /// `m`-th modality of the selection.
    pub entries: Vec<ManifestEntry>,
    pub clips: Vec<Vec<VideoClip>>,
    pub skipped: Vec<SkippedClip>,
}

impl ClipSet {
    pub fn manifest(&self) -> Result<DatasetManifest> {
        DatasetManifest::new(self.entries.clone())
    }

    fn index_of(&self) -> BTreeMap<&str, usize> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clip_id.as_str(), i))
            .collect()
    }
}

/// Loads, resizes and size-checks every clip. Clips too short or small for
/// one `min_block` are skipped with a reason; unreadable clips are errors.
pub fn load_clips(
    manifest: &DatasetManifest,
    root: &Path,
    selection: ModalitySelection,
    width: usize,
    height: usize,
    min_block: &BlockGeometry,
) -> Result<ClipSet> {
    let loaded: Vec<Result<std::result::Result<Vec<VideoClip>, SkippedClip>>> = manifest
        .entries
        .par_iter()
        .map(|entry| {
            let mut per_modality = Vec::new();
            for &m in selection.modalities() {
                let rel = entry.path_for(m).ok_or_else(|| {
                    Error::InvalidConfig(format!("clip `{}` has no {m} path", entry.clip_id))
                })?;
                let mut clip = load_clip(&root.join(rel), m)?;
                clip.clip_id = entry.clip_id.clone();
                if clip.width != width || clip.height != height {
                    clip = resize_clip(&clip, width, height)?;
                }
                if clip.width < min_block.sx || clip.height < min_block.sy || clip.num_frames() < min_block.st {
                    return Ok(Err(SkippedClip {
                        clip_id: entry.clip_id.clone(),
                        reason: format!(
                            "{m} clip is {}x{}x{}, smaller than one {}x{}x{} block",
                            clip.width,
                            clip.height,
                            clip.num_frames(),
                            min_block.sx,
                            min_block.sy,
                            min_block.st
                        ),
                    }));
                }
                per_modality.push(clip);
            }
            Ok(Ok(per_modality))
        })
        .collect();

    let mut set = ClipSet {
        selection,
        entries: Vec::new(),
        clips: Vec::new(),
        skipped: Vec::new(),
    };
    for (entry, result) in manifest.entries.iter().zip(loaded) {
        match result? {
            Ok(clips) => {
                set.entries.push(entry.clone());
                set.clips.push(clips);
            }
            Err(skip) => set.skipped.push(skip),
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prediction {
    pub clip_id: String,
    pub truth: String,
    pub predicted: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub test_subject: String,
    pub best_c: f64,
    pub best_gamma: f64,
    pub cv_accuracy: f64,
    pub predictions: Vec<Prediction>,
}

impl SplitResult {
    pub fn correct(&self) -> usize {
        self.predictions.iter().filter(|p| p.truth == p.predicted).count()
    }

    pub fn accuracy(&self) -> f64 {
        if self.predictions.is_empty() {
            0.0
        } else {
            self.correct() as f64 / self.predictions.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub modality: ModalitySelection,
    pub classes: Vec<String>,
    pub splits: Vec<SplitResult>,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<usize>>,
    pub overall_accuracy: f64,
    /// Mean over the splits whose test fold contains the class.
    pub per_class: Vec<Option<f64>>,
    pub skipped: Vec<SkippedClip>,
}

impl EvaluationReport {
    pub fn from_splits(
        modality: ModalitySelection,
        classes: Vec<String>,
        splits: Vec<SplitResult>,
        skipped: Vec<SkippedClip>,
    ) -> Result<Self> {
        let index: BTreeMap<&str, usize> =
            classes.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
        let lookup = |label: &str| {
            index
                .get(label)
                .copied()
                .ok_or_else(|| Error::Format(format!("label `{label}` is not a known class")))
        };
        let n = classes.len();
        let mut confusion = vec![vec![0usize; n]; n];
        let mut sums = vec![0.0; n];
        let mut counts = vec![0usize; n];
        for split in &splits {
            let mut hits = vec![(0usize, 0usize); n];
            for p in &split.predictions {
                let t = lookup(&p.truth)?;
                let q = lookup(&p.predicted)?;
                confusion[t][q] += 1;
                hits[t].1 += 1;
                if t == q {
                    hits[t].0 += 1;
                }
            }
            for (c, &(ok, total)) in hits.iter().enumerate() {
                if total > 0 {
                    sums[c] += ok as f64 / total as f64;
                    counts[c] += 1;
                }
            }
        }
        let trace: usize = (0..n).map(|i| confusion[i][i]).sum();
        let total: usize = confusion.iter().flatten().sum();
        let overall_accuracy = if total == 0 { 0.0 } else { trace as f64 / total as f64 };
        let per_class = sums
            .iter()
            .zip(&counts)
            .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
            .collect();
        Ok(EvaluationReport {
            modality,
            classes,
            splits,
            confusion,
            overall_accuracy,
            per_class,
            skipped,
        })
    }
}

/// Draws at most `max` items, keeping their original order.
fn subsample<T: Clone>(items: Vec<T>, max: usize, seed: u64) -> Vec<T> {
    if items.len() <= max {
        return items;
    }
    let mut picked = sample(&mut seeded(seed), items.len(), max).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| items[i].clone()).collect()
}

/// Network and vocabulary for one modality, fitted on the given clips.
pub struct ModalityModel {
    pub network: IsaNetwork,
    pub vocabulary: Vocabulary,
}

fn fit_modality(
    pretrain_clips: &[&VideoClip],
    vocab_clips: &[&VideoClip],
    cfg: &PipelineConfig,
) -> Result<(ModalityModel, Vec<Vec<Vec<f64>>>)> {
    let network = pretrain_network(pretrain_clips, &cfg.pretrain_config())?.network;
    let descriptors = vocab_clips
        .par_iter()
        .map(|c| clip_descriptors(&network, c))
        .collect::<Result<Vec<_>>>()?;
    let vocabulary = fit_vocabulary(&descriptors, cfg)?;
    Ok((ModalityModel { network, vocabulary }, descriptors))
}

/// k-means over a seeded subsample (at most `cfg.max_descriptors`) of the
/// pooled per-clip descriptors.
pub fn fit_vocabulary(per_clip: &[Vec<Vec<f64>>], cfg: &PipelineConfig) -> Result<Vocabulary> {
    let pool: Vec<Vec<f64>> = per_clip.iter().flatten().cloned().collect();
    let pool = subsample(pool, cfg.max_descriptors, derive_seed(cfg.seeds.vocabulary, 1));
    Ok(kmeans_fit(
        &pool,
        cfg.words,
        cfg.seeds.vocabulary,
        cfg.kmeans_max_iter,
        cfg.kmeans_tol,
    )?
    .vocabulary)
}

fn evaluate_split(
    set: &ClipSet,
    split: &Split,
    cfg: &PipelineConfig,
    audit: &dyn AccessAudit,
    artifact_dir: Option<&Path>,
) -> Result<SplitResult> {
    let index = set.index_of();
    let record = |stage, id: &str| {
        audit.record(AccessEvent {
            split: split.test_subject.clone(),
            stage,
            clip_id: id.to_string(),
        })
    };
    let position = |id: &String| {
        index
            .get(id.as_str())
            .copied()
            .ok_or_else(|| Error::Format(format!("clip `{id}` is not loaded")))
    };
    let train: Vec<usize> = split.train_clips.iter().map(position).collect::<Result<_>>()?;
    let test: Vec<usize> = split.test_clips.iter().map(position).collect::<Result<_>>()?;
    let pretrain: Vec<usize> = match cfg.pretrain_set {
        PretrainSet::Train => train.clone(),
        PretrainSet::All => (0..set.entries.len()).collect(),
    };

    let modalities = set.selection.modalities();
    let mut train_hist: Vec<Vec<BowHistogram>> = vec![Vec::new(); train.len()];
    let mut test_hist: Vec<Vec<BowHistogram>> = vec![Vec::new(); test.len()];
    for (m, &modality) in modalities.iter().enumerate() {
        for &i in &pretrain {
            record(Stage::Pretrain, &set.entries[i].clip_id);
        }
        for &i in &train {
            record(Stage::VocabularyFit, &set.entries[i].clip_id);
        }
        let pretrain_clips: Vec<&VideoClip> = pretrain.iter().map(|&i| &set.clips[i][m]).collect();
        let train_clips: Vec<&VideoClip> = train.iter().map(|&i| &set.clips[i][m]).collect();
        let (model, train_desc) = fit_modality(&pretrain_clips, &train_clips, cfg)?;

        for (slot, (&i, desc)) in train_hist.iter_mut().zip(train.iter().zip(&train_desc)) {
            record(Stage::Encode, &set.entries[i].clip_id);
            slot.push(histogram_from_descriptors(
                &model.vocabulary,
                &set.entries[i].clip_id,
                modality,
                desc,
            )?);
        }
        let encoded = test
            .par_iter()
            .map(|&i| {
                let desc = clip_descriptors(&model.network, &set.clips[i][m])?;
                histogram_from_descriptors(&model.vocabulary, &set.entries[i].clip_id, modality, &desc)
            })
            .collect::<Result<Vec<_>>>()?;
        for (&i, (slot, h)) in test.iter().zip(test_hist.iter_mut().zip(encoded)) {
            record(Stage::Encode, &set.entries[i].clip_id);
            slot.push(h);
        }

        if let Some(dir) = artifact_dir {
            let dir = dir.join(format!("split_{}", split.test_subject));
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            save_network(&dir.join(format!("network_{modality}.txt")), &model.network)?;
            save_vocabulary(&dir.join(format!("vocab_{modality}.txt")), &model.vocabulary)?;
        }
    }

    let features = |hists: &[BowHistogram]| -> Result<Vec<f64>> {
        match hists {
            [single] => Ok(single.weights.clone()),
            [gray, depth] => fuse_histograms(gray, depth),
            _ => Err(Error::Format("unexpected number of modalities".into())),
        }
    };
    let train_x: Vec<Vec<f64>> = train_hist.iter().map(|h| features(h)).collect::<Result<_>>()?;
    let train_y: Vec<String> = train.iter().map(|&i| set.entries[i].label.clone()).collect();

    for &i in &train {
        record(Stage::GridSearch, &set.entries[i].clip_id);
    }
    let search = grid_search(
        &train_x,
        &train_y,
        &cfg.grid_c,
        &cfg.grid_gamma,
        cfg.folds,
        cfg.seeds.grid_search,
        cfg.kkt_tol,
    )?;
    for &i in &train {
        record(Stage::SvmTrain, &set.entries[i].clip_id);
    }
    let svm = train_multiclass(&train_x, &train_y, search.best_c, search.best_gamma, cfg.kkt_tol)?;
    if let Some(dir) = artifact_dir {
        save_svm(&dir.join(format!("split_{}", split.test_subject)).join("svm.txt"), &svm)?;
    }

    let mut predictions = Vec::with_capacity(test.len());
    for (&i, hists) in test.iter().zip(&test_hist) {
        record(Stage::Predict, &set.entries[i].clip_id);
        predictions.push(Prediction {
            clip_id: set.entries[i].clip_id.clone(),
            truth: set.entries[i].label.clone(),
            predicted: svm.predict(&features(hists)?)?.to_string(),
        });
    }
    Ok(SplitResult {
        test_subject: split.test_subject.clone(),
        best_c: search.best_c,
        best_gamma: search.best_gamma,
        cv_accuracy: search.cv_accuracy,
        predictions,
    })
}

/// Runs every leave-one-person-out split (restricted to `cfg.splits` when
/// non-empty) and aggregates the predictions.
pub fn run_evaluation(
    set: &ClipSet,
    cfg: &PipelineConfig,
    audit: &dyn AccessAudit,
    artifact_dir: Option<&Path>,
) -> Result<EvaluationReport> {
    cfg.validate()?;
    let mut splits = lopo_splits(&set.manifest()?)?;
    if !cfg.splits.is_empty() {
        for wanted in &cfg.splits {
            if !splits.iter().any(|s| &s.test_subject == wanted) {
                return Err(Error::InvalidConfig(format!("no subject named `{wanted}`")));
            }
        }
        splits.retain(|s| cfg.splits.contains(&s.test_subject));
    }
    let results = splits
        .par_iter()
        .map(|s| evaluate_split(set, s, cfg, audit, artifact_dir))
        .collect::<Result<Vec<_>>>()?;
    let classes: Vec<String> = set
        .entries
        .iter()
        .map(|e| e.label.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    EvaluationReport::from_splits(set.selection, classes, results, set.skipped.clone())
}

const MODALITY_REFERENCES: [(ModalitySelection, &str, f64); 3] = [
    (ModalitySelection::Gray, "Grayscale", 60.0),
    (ModalitySelection::Depth, "Depth", 50.8),
    (ModalitySelection::Fused, "Grayscale & Depth", 61.3),
];

/// Published per-activity accuracies, keyed by normalised label aliases.
const ACTIVITY_REFERENCES: [(&[&str], f64); 10] = [
    (&["ask", "askingandaway", "askandaway"], 44.7),
    (&["call", "calledaway", "callaway"], 60.5),
    (&["carry", "carrying"], 73.7),
    (&["chat", "chatting"], 36.8),
    (&["deliver", "delivering"], 50.0),
    (&["eatchat", "eatandchat", "eatingandchatting"], 86.8),
    (&["haveguest", "havingguest"], 86.8),
    (&["seekhelp", "seekinghelp"], 68.4),
    (&["shakehands", "shakinghands"], 60.5),
    (&["show", "showing"], 44.7),
];

/// Lower-case alphanumerics only, so `Eat&Chat` and `eat_chat` match.
fn normalize_label(label: &str) -> String {
    label
        .chars()
        .filter(char::is_ascii_alphanumeric)
        .map(|c| c.to_ascii_lowercase())
        .collect()
}

pub fn activity_reference(label: &str) -> Option<f64> {
    let key = normalize_label(label);
    ACTIVITY_REFERENCES
        .iter()
        .find(|(aliases, _)| aliases.contains(&key.as_str()))
        .map(|&(_, v)| v)
}

fn percent(v: f64) -> String {
    format!("{:.1}%", 100.0 * v)
}

pub fn accuracy_text(report: &EvaluationReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Average accuracy, leave-one-person-out");
    let _ = writeln!(s, "{:<20} {:>10} {:>10}", "modality", "computed", "reference");
    for (sel, name, reference) in MODALITY_REFERENCES {
        let computed = if sel == report.modality {
            percent(report.overall_accuracy)
        } else {
            "-".to_string()
        };
        let _ = writeln!(s, "{name:<20} {computed:>10} {:>10}", format!("{reference:.1}%"));
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "Accuracy per activity ({})", report.modality);
    let _ = writeln!(s, "{:<20} {:>10} {:>10}", "activity", "computed", "reference");
    for (class, acc) in report.classes.iter().zip(&report.per_class) {
        let computed = acc.map_or_else(|| "n/a".to_string(), percent);
        let reference = activity_reference(class).map_or_else(|| "-".to_string(), |r| format!("{r:.1}%"));
        let _ = writeln!(s, "{class:<20} {computed:>10} {reference:>10}");
    }
    let _ = writeln!(s);
    let _ = writeln!(
        s,
        "Overall accuracy is trace/total of the pooled confusion matrix. Per-activity accuracy is the mean over splits whose test fold contains the activity; n/a means no split does."
    );
    s
}

pub fn confusion_csv(report: &EvaluationReport) -> String {
    let mut s = String::from("truth\\predicted");
    for c in &report.classes {
        s.push(',');
        s.push_str(c);
    }
    s.push('\n');
    for (class, row) in report.classes.iter().zip(&report.confusion) {
        s.push_str(class);
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    s
}

pub fn per_split_csv(report: &EvaluationReport) -> String {
    let mut s = String::from("test_subject,num_test,correct,accuracy,best_c,best_gamma,cv_accuracy\n");
    for r in &report.splits {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.test_subject,
            r.predictions.len(),
            r.correct(),
            format_f64(r.accuracy()),
            format_f64(r.best_c),
            format_f64(r.best_gamma),
            format_f64(r.cv_accuracy)
        );
    }
    s
}

pub fn predictions_csv(report: &EvaluationReport) -> String {
    let mut s = String::from("test_subject,clip_id,truth,predicted\n");
    for r in &report.splits {
        for p in &r.predictions {
            let _ = writeln!(s, "{},{},{},{}", r.test_subject, p.clip_id, p.truth, p.predicted);
        }
    }
    s
}

pub fn skipped_csv(skipped: &[SkippedClip]) -> String {
    let mut s = String::from("clip_id,reason\n");
    for k in skipped {
        let _ = writeln!(s, "{},\"{}\"", k.clip_id, k.reason.replace('"', "\"\""));
    }
    s
}

/// Writes `accuracy.txt`, `confusion.csv`, `per_split.csv` and
/// `predictions.csv` into `out_dir`.
pub fn render_reports(report: &EvaluationReport, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let files = [
        ("accuracy.txt", accuracy_text(report)),
        ("confusion.csv", confusion_csv(report)),
        ("per_split.csv", per_split_csv(report)),
        ("predictions.csv", predictions_csv(report)),
    ];
    for (name, body) in files {
        let path = out_dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}
