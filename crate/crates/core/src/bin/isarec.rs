use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use isarec::classifier::{grid_search, train_multiclass};
use isarec::config::{PipelineConfig, PretrainSet};
use isarec::evaluation::{
    fit_vocabulary, fuse_histograms, load_clips, render_reports, run_evaluation, skipped_csv, ClipSet, NoAudit,
    SkippedClip,
};
use isarec::isa::pretrain_network;
use isarec::model_io::{load_network, load_vocabulary, save_network, save_svm, save_vocabulary};
use isarec::synthetic::{generate_dataset, SyntheticSpec};
use isarec::video_io::{load_manifest, DatasetManifest, Modality, VideoClip};
use isarec::vocabulary::{clip_descriptors, histogram_from_descriptors, read_histograms, write_histograms};
use isarec::{Error, Result};

#[derive(Parser)]
#[command(name = "isarec", version, about = "Stacked ISA activity recognition for gray and depth video")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// Config file with `[section]` headers and `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dataset root holding the manifest and clip directories.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// gray, depth or fused.
    #[arg(long, global = true)]
    modality: Option<String>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "ISAREC_THREADS")]
    threads: Option<usize>,
    /// Override any setting, e.g. `--set isa.max_iters=200`.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train the two-layer network on unlabeled clips.
    Pretrain {
        /// Leave out this subject's clips.
        #[arg(long)]
        holdout: Option<String>,
    },
    /// Encode every clip as a word histogram, fitting a vocabulary if needed.
    Encode {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Subject excluded from vocabulary fitting.
        #[arg(long)]
        holdout: Option<String>,
    },
    /// Grid-search and train the classifier on histogram files.
    TrainSvm {
        /// One histogram CSV per modality; two are fused.
        #[arg(long, required = true)]
        histograms: Vec<PathBuf>,
        #[arg(long)]
        holdout: Option<String>,
    },
    /// Leave-one-person-out evaluation with reports.
    Evaluate(EvalArgs),
    /// Evaluation that also keeps every split's models.
    Pipeline(EvalArgs),
    /// Write the synthetic moving-bar dataset.
    Synth {
        #[arg(long, default_value_t = 4)]
        subjects: usize,
        #[arg(long, default_value_t = 10)]
        clips: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct EvalArgs {
    /// Comma-separated test subjects; default is every subject.
    #[arg(long)]
    splits: Option<String>,
    /// train or all.
    #[arg(long)]
    pretrain_set: Option<String>,
}

fn resolve(global: &GlobalArgs, eval: Option<&EvalArgs>) -> Result<PipelineConfig> {
    let mut cfg = match &global.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    for item in &global.overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("`--set {item}` needs SECTION.KEY=VALUE")))?;
        cfg.set(key.trim(), value)?;
    }
    if let Some(d) = &global.data {
        cfg.dataset_root = d.clone();
    }
    if let Some(m) = &global.modality {
        cfg.modality = m.parse()?;
    }
    if let Some(o) = &global.out {
        cfg.output_dir = o.clone();
    }
    if let Some(e) = eval {
        if let Some(s) = &e.splits {
            cfg.set("evaluation.splits", s)?;
        }
        if let Some(p) = &e.pretrain_set {
            cfg.pretrain_set = p.parse::<PretrainSet>()?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    fs::write(path, body).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn prepare_out(cfg: &PipelineConfig) -> Result<()> {
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::Io {
        path: cfg.output_dir.clone(),
        source: e,
    })?;
    write_file(&cfg.output_dir.join("resolved_config"), &cfg.to_string())
}

fn dataset(cfg: &PipelineConfig) -> Result<DatasetManifest> {
    if !cfg.dataset_root.is_dir() {
        return Err(Error::InvalidConfig(format!(
            "dataset root {} does not exist",
            cfg.dataset_root.display()
        )));
    }
    load_manifest(&cfg.manifest_path())
}

fn single_modality(cfg: &PipelineConfig, command: &str) -> Result<Modality> {
    match cfg.modality.modalities() {
        [m] => Ok(*m),
        _ => Err(Error::InvalidConfig(format!(
            "`{command}` works on one modality at a time; use gray or depth"
        ))),
    }
}

fn write_skipped(cfg: &PipelineConfig, skipped: &[SkippedClip]) -> Result<()> {
    for s in skipped {
        eprintln!("skipped {}: {}", s.clip_id, s.reason);
    }
    write_file(&cfg.output_dir.join("skipped.csv"), &skipped_csv(skipped))
}

fn clips_except<'a>(set: &'a ClipSet, holdout: Option<&str>) -> Vec<&'a VideoClip> {
    set.entries
        .iter()
        .zip(&set.clips)
        .filter(|(e, _)| Some(e.subject.as_str()) != holdout)
        .map(|(_, c)| &c[0])
        .collect()
}

fn check_holdout(manifest: &DatasetManifest, holdout: Option<&str>) -> Result<()> {
    match holdout {
        Some(h) if !manifest.entries.iter().any(|e| e.subject == h) => {
            Err(Error::InvalidConfig(format!("no subject named `{h}`")))
        }
        _ => Ok(()),
    }
}

fn cmd_pretrain(cfg: &PipelineConfig, holdout: Option<&str>) -> Result<()> {
    let modality = single_modality(cfg, "pretrain")?;
    let manifest = dataset(cfg)?;
    check_holdout(&manifest, holdout)?;
    let set = load_clips(&manifest, &cfg.dataset_root, cfg.modality, cfg.width, cfg.height, &cfg.geometry.layer2)?;
    write_skipped(cfg, &set.skipped)?;
    let clips = clips_except(&set, holdout);
    let out = pretrain_network(&clips, &cfg.pretrain_config())?;
    let path = cfg.output_dir.join(format!("network_{modality}.txt"));
    save_network(&path, &out.network)?;
    println!(
        "pretrained on {} clips: layer1 objective {:.6} -> {:.6}, layer2 {:.6} -> {:.6}; wrote {}",
        clips.len(),
        out.layer1_trace.first().copied().unwrap_or(f64::NAN),
        out.layer1_trace.last().copied().unwrap_or(f64::NAN),
        out.layer2_trace.first().copied().unwrap_or(f64::NAN),
        out.layer2_trace.last().copied().unwrap_or(f64::NAN),
        path.display()
    );
    Ok(())
}

fn cmd_encode(cfg: &PipelineConfig, network: &Path, vocab: Option<&Path>, holdout: Option<&str>) -> Result<()> {
    let modality = single_modality(cfg, "encode")?;
    let net = load_network(network)?;
    let manifest = dataset(cfg)?;
    check_holdout(&manifest, holdout)?;
    let set = load_clips(&manifest, &cfg.dataset_root, cfg.modality, cfg.width, cfg.height, &net.geometry.layer2)?;
    write_skipped(cfg, &set.skipped)?;

    let descriptors = set
        .clips
        .iter()
        .map(|c| clip_descriptors(&net, &c[0]))
        .collect::<Result<Vec<_>>>()?;
    let vocabulary = match vocab {
        Some(path) => load_vocabulary(path)?,
        None => {
            let training: Vec<Vec<Vec<f64>>> = set
                .entries
                .iter()
                .zip(&descriptors)
                .filter(|(e, _)| Some(e.subject.as_str()) != holdout)
                .map(|(_, d)| d.clone())
                .collect();
            let vocabulary = fit_vocabulary(&training, cfg)?;
            let path = cfg.output_dir.join(format!("vocab_{modality}.txt"));
            save_vocabulary(&path, &vocabulary)?;
            println!("fitted {} words on {} training clips; wrote {}", cfg.words, training.len(), path.display());
            vocabulary
        }
    };
    let histograms = set
        .entries
        .iter()
        .zip(&descriptors)
        .map(|(e, d)| histogram_from_descriptors(&vocabulary, &e.clip_id, modality, d))
        .collect::<Result<Vec<_>>>()?;
    let path = cfg.output_dir.join(format!("histograms_{modality}.csv"));
    write_histograms(&path, &histograms)?;
    println!("encoded {} clips; wrote {}", histograms.len(), path.display());
    Ok(())
}

fn cmd_train_svm(cfg: &PipelineConfig, files: &[PathBuf], holdout: Option<&str>) -> Result<()> {
    let manifest = load_manifest(&cfg.manifest_path())?;
    check_holdout(&manifest, holdout)?;
    let mut by_clip: BTreeMap<String, Vec<_>> = BTreeMap::new();
    let mut order = Vec::new();
    for file in files {
        for h in read_histograms(file)? {
            if !by_clip.contains_key(&h.clip_id) {
                order.push(h.clip_id.clone());
            }
            by_clip.entry(h.clip_id.clone()).or_default().push(h);
        }
    }
    let mut x = Vec::new();
    let mut y = Vec::new();
    for id in &order {
        let entry = manifest
            .get(id)
            .ok_or_else(|| Error::InvalidConfig(format!("clip `{id}` is not in the manifest")))?;
        if Some(entry.subject.as_str()) == holdout {
            continue;
        }
        let mut hists = by_clip[id].clone();
        hists.sort_by_key(|h| h.modality != Modality::Grayscale);
        x.push(match hists.as_slice() {
            [one] => one.weights.clone(),
            [gray, depth] if gray.modality != depth.modality => fuse_histograms(gray, depth)?,
            _ => return Err(Error::InvalidConfig(format!("clip `{id}` needs one histogram per modality"))),
        });
        y.push(entry.label.clone());
    }
    let search = grid_search(&x, &y, &cfg.grid_c, &cfg.grid_gamma, cfg.folds, cfg.seeds.grid_search, cfg.kkt_tol)?;
    let model = train_multiclass(&x, &y, search.best_c, search.best_gamma, cfg.kkt_tol)?;
    let path = cfg.output_dir.join("svm.txt");
    save_svm(&path, &model)?;
    println!(
        "C={} gamma={} cv_accuracy={:.4} over {} clips; wrote {}",
        search.best_c,
        search.best_gamma,
        search.cv_accuracy,
        x.len(),
        path.display()
    );
    Ok(())
}

fn cmd_evaluate(cfg: &PipelineConfig, keep_models: bool) -> Result<()> {
    let manifest = dataset(cfg)?;
    let set = load_clips(&manifest, &cfg.dataset_root, cfg.modality, cfg.width, cfg.height, &cfg.geometry.layer2)?;
    write_skipped(cfg, &set.skipped)?;
    let models = cfg.output_dir.join("splits");
    let report = run_evaluation(&set, cfg, &NoAudit, keep_models.then_some(models.as_path()))?;
    render_reports(&report, &cfg.output_dir)?;
    println!(
        "{} accuracy {:.1}% over {} splits; reports in {}",
        report.modality,
        100.0 * report.overall_accuracy,
        report.splits.len(),
        cfg.output_dir.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    }
    let eval = match &cli.command {
        Command::Evaluate(a) | Command::Pipeline(a) => Some(a),
        _ => None,
    };
    let cfg = resolve(&cli.global, eval)?;
    prepare_out(&cfg)?;
    match &cli.command {
        Command::Pretrain { holdout } => cmd_pretrain(&cfg, holdout.as_deref()),
        Command::Encode { network, vocab, holdout } => {
            cmd_encode(&cfg, network, vocab.as_deref(), holdout.as_deref())
        }
        Command::TrainSvm { histograms, holdout } => cmd_train_svm(&cfg, histograms, holdout.as_deref()),
        Command::Evaluate(_) => cmd_evaluate(&cfg, false),
        Command::Pipeline(_) => cmd_evaluate(&cfg, true),
        Command::Synth { subjects, clips, seed } => {
            let spec = SyntheticSpec {
                subjects: *subjects,
                clips_per_subject: *clips,
                width: cfg.width,
                height: cfg.height,
                seed: *seed,
                ..SyntheticSpec::default()
            };
            let manifest = generate_dataset(&cfg.output_dir, &spec)?;
            println!("wrote {} clips to {}", manifest.entries.len(), cfg.output_dir.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}
