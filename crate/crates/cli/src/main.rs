//! Command-line front end. Each subcommand reads and writes the formats of
//! `posetrain::io` and calls one library operation.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use posetrain::candidates::{enumerate_candidates, Heatmap};
use posetrain::dpmm::{detect_outliers, gibbs_cluster, project, Partition};
use posetrain::io::{self, ConfigMap, PoseRecord};
use posetrain::metrics::{pck_report, ReferenceLength};
use posetrain::model::{CandidatePose, DatasetSplit, Provenance, Skeleton};
use posetrain::pipeline::{
    derive_seed, pose_feature, positive_features, report_path, run_pipeline, CandidateMap, Estimator, FileEstimator,
    GroundTruth, IdentityEstimator, PipelineConfig, Scheme,
};
use posetrain::svm::{select_index, train, Label, TrainSet};
use posetrain::synth::{synth_corpus, SynthConfig};
use posetrain::{Error, Result};
use serde::{Deserialize, Serialize};

/// Minimum number of features `cluster` and `outliers` accept.
const MIN_CLUSTER_FEATURES: usize = 4;

#[derive(Parser)]
#[command(name = "posetrain", version, about = "Self-training of pose estimators from weakly labeled images")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Flat key = value configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus: split, ground truth and heatmaps.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
    /// Relational pose features of every record.
    Features {
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a correct-pose-selection SVM from annotations and background
    /// detections.
    TrainSvm {
        #[arg(long)]
        positives: PathBuf,
        #[arg(long)]
        negatives: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Enumerate candidate poses from heatmap files (`<image_id>.hm`).
    Candidates {
        /// A heatmap file or a directory of them.
        #[arg(long)]
        heatmaps: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        stage: u32,
    },
    /// Pick at most one candidate per image with a trained SVM.
    Select {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Decision value a candidate must exceed.
        #[arg(long)]
        margin: Option<f64>,
    },
    /// DP-mixture clustering of feature vectors.
    Cluster {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Bayes-factor outlier test of a clustering.
    Outliers {
        #[arg(long)]
        features: PathBuf,
        /// Output of `cluster`; clustered afresh when absent.
        #[arg(long)]
        partition: Option<PathBuf>,
        /// JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the self-training loop on a corpus written by `synth`.
    Pipeline {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        scheme: Option<Scheme>,
        #[arg(long)]
        iterations: Option<usize>,
        /// Exchange directory with `candidates_iter<t>/` from a re-trained
        /// estimator; the corpus heatmaps are used when absent.
        #[arg(long)]
        candidates_from: Option<PathBuf>,
    },
    /// PCK of estimated poses against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        est: PathBuf,
        /// Threshold as a fraction of the reference length.
        #[arg(long, default_value_t = 0.2)]
        frac: f64,
        #[arg(long, value_enum, default_value_t = Reference::Bbox)]
        reference: Reference,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Reference {
    /// Longer side of the ground-truth bounding box.
    Bbox,
    /// Head-to-neck segment.
    Head,
}

/// One line of a feature file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeatureRecord {
    image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    score: Option<f64>,
    feature: Vec<f64>,
}

/// One line of a partition file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClusterRecord {
    index: usize,
    image_id: String,
    cluster: usize,
}

struct Settings {
    synth: SynthConfig,
    pipeline: PipelineConfig,
}

fn settings(cli: &Cli) -> Result<Settings> {
    let mut synth = SynthConfig::default();
    let mut pipeline = PipelineConfig::default();
    if let Some(path) = &cli.config {
        let mut c = ConfigMap::load(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        synth.apply(&mut c)?;
        pipeline.apply(&mut c)?;
        c.finish()?;
    }
    if let Some(seed) = cli.seed {
        synth.seed = seed;
        pipeline = pipeline.with_seed(seed);
    }
    synth.validate()?;
    pipeline.validate()?;
    Ok(Settings { synth, pipeline })
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })
        })
        .collect()
}

fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut s = String::new();
    for r in rows {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    io::write_atomic(path, s.as_bytes())
}

fn with_path<T>(path: &Path, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Parse { line, msg } => Error::Parse { line, msg: format!("{}: {msg}", path.display()) },
        Error::Io(io) => Error::Format(format!("{}: {io}", path.display())),
        other => other,
    })
}

fn records(path: &Path) -> Result<Vec<PoseRecord>> {
    with_path(path, io::read_records(path))
}

/// Candidates grouped by image, in first-seen order within each image.
fn group_candidates(recs: &[PoseRecord]) -> Result<CandidateMap> {
    let mut out = CandidateMap::new();
    for r in recs {
        out.entry(r.image_id.clone()).or_default().push(r.to_candidate()?);
    }
    Ok(out)
}

fn heatmap_files(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.extension().is_some_and(|e| e == "hm"));
    files.sort();
    Ok(files)
}

fn image_id_of(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| Error::Format(format!("no image id in file name {}", path.display())))
}

fn read_heatmap_dir(path: &Path) -> Result<BTreeMap<String, Vec<Heatmap<f64>>>> {
    heatmap_files(path)?
        .into_iter()
        .map(|p| Ok((image_id_of(&p)?, with_path(&p, io::read_heatmaps(&p))?)))
        .collect()
}

fn cmd_synth(s: &Settings, out: &Path) -> Result<()> {
    let corpus = synth_corpus(&s.synth)?;
    std::fs::create_dir_all(out.join("heatmaps"))?;
    io::write_atomic(&out.join("split.json"), serde_json::to_string_pretty(&corpus.split)?.as_bytes())?;
    let fs: Vec<PoseRecord> = corpus.split.fs.iter().map(PoseRecord::from_annotation).collect();
    io::write_records(&out.join("annotations.jsonl"), &fs)?;
    let gt: Vec<PoseRecord> = corpus
        .ground_truth
        .iter()
        .map(|(id, sk)| PoseRecord {
            action: corpus.split.action_of(id),
            ..PoseRecord::from_skeleton(id.clone(), sk, Provenance::Annotation)
        })
        .collect();
    io::write_records(&out.join("ground_truth.jsonl"), &gt)?;
    for (id, maps) in &corpus.heatmaps {
        io::write_heatmaps(&out.join("heatmaps").join(format!("{id}.hm")), maps)?;
    }
    println!(
        "fs {} ws {} backgrounds {} heatmap files {}",
        corpus.split.fs.len(),
        corpus.split.ws.len(),
        corpus.split.backgrounds.len(),
        corpus.heatmaps.len()
    );
    Ok(())
}

fn cmd_features(s: &Settings, poses: &Path, out: &Path) -> Result<()> {
    let rows = records(poses)?
        .iter()
        .map(|r| {
            Ok(FeatureRecord {
                image_id: r.image_id.clone(),
                score: r.score,
                feature: pose_feature(&r.skeleton()?, &s.pipeline).combined(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_jsonl(out, &rows)?;
    println!("{} features of dimension {}", rows.len(), rows.first().map_or(0, |r| r.feature.len()));
    Ok(())
}

fn cmd_train_svm(s: &Settings, positives: &Path, negatives: &Path, out: &Path) -> Result<()> {
    let cfg = &s.pipeline;
    let mut ts = TrainSet::new();
    for (k, r) in records(positives)?.iter().enumerate() {
        for x in positive_features(&r.skeleton()?, derive_seed(cfg.seed, k as u64), cfg)? {
            ts.push(x, Label::Positive);
        }
    }
    for r in records(negatives)? {
        ts.push(pose_feature(&r.skeleton()?, cfg).combined(), Label::Negative);
    }
    let (model, report) = train(&ts, &cfg.svm)?;
    io::write_svm(out, &model)?;
    println!(
        "samples {} positives {} negatives {} epochs {} converged {} objective {:.6}",
        ts.len(),
        ts.count(Label::Positive),
        ts.count(Label::Negative),
        report.epochs.len(),
        report.converged,
        report.final_objective()
    );
    Ok(())
}

fn cmd_candidates(s: &Settings, heatmaps: &Path, out: &Path, stage: u32) -> Result<()> {
    let mut recs = Vec::new();
    let mut images = 0;
    for p in heatmap_files(heatmaps)? {
        let id = image_id_of(&p)?;
        let maps = with_path(&p, io::read_heatmaps::<f64>(&p))?;
        let cands = enumerate_candidates(&maps, &s.pipeline.candidates, &id, stage)?;
        recs.extend(cands.iter().map(PoseRecord::from_candidate));
        images += 1;
    }
    io::write_records(out, &recs)?;
    println!("{} candidates from {images} images", recs.len());
    Ok(())
}

fn cmd_select(s: &Settings, model: &Path, candidates: &Path, out: &Path, margin: Option<f64>) -> Result<()> {
    let cfg = &s.pipeline;
    let model = with_path(model, io::read_svm::<f64>(model))?;
    let margin = margin.unwrap_or(cfg.margin);
    let grouped = group_candidates(&records(candidates)?)?;
    let mut picked = Vec::new();
    for list in grouped.values() {
        let scored: Vec<_> = list.iter().map(|c| (c.clone(), pose_feature(&c.skeleton, cfg))).collect();
        if let Some(i) = select_index(&model, &scored, margin)? {
            picked.push(PoseRecord {
                provenance: Provenance::Svm,
                ..PoseRecord::from_candidate(&scored[i].0)
            });
        }
    }
    io::write_records(out, &picked)?;
    println!("selected {} of {} images", picked.len(), grouped.len());
    Ok(())
}

fn load_features(path: &Path) -> Result<Vec<FeatureRecord>> {
    let rows: Vec<FeatureRecord> = with_path(path, read_jsonl(path))?;
    if rows.len() < MIN_CLUSTER_FEATURES {
        return Err(Error::TooFewFeatures { got: rows.len(), need: MIN_CLUSTER_FEATURES });
    }
    Ok(rows)
}

/// Features as clustered: projected when the configuration asks for it.
fn clustering_input(s: &Settings, rows: &[FeatureRecord]) -> Result<Vec<Vec<f64>>> {
    let raw: Vec<&[f64]> = rows.iter().map(|r| r.feature.as_slice()).collect();
    let dim = raw[0].len();
    match s.pipeline.dpmm.pca_dim {
        Some(d) => Ok(project(&raw, d.min(dim).min(raw.len()))?.0),
        None => Ok(raw.iter().map(|f| f.to_vec()).collect()),
    }
}

fn cmd_cluster(s: &Settings, features: &Path, out: &Path) -> Result<()> {
    let rows = load_features(features)?;
    let x = clustering_input(s, &rows)?;
    let p = gibbs_cluster(&x, &s.pipeline.dpmm)?;
    let out_rows: Vec<ClusterRecord> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| ClusterRecord { index: i, image_id: r.image_id.clone(), cluster: p.cluster_of(i) })
        .collect();
    write_jsonl(out, &out_rows)?;
    println!("{} features in {} clusters, sizes {:?}", rows.len(), p.n_clusters(), p.sizes());
    Ok(())
}

fn cmd_outliers(s: &Settings, features: &Path, partition: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let rows = load_features(features)?;
    let x = clustering_input(s, &rows)?;
    let p = match partition {
        Some(path) => {
            let mut assigned: Vec<ClusterRecord> = with_path(path, read_jsonl(path))?;
            assigned.sort_by_key(|r| r.index);
            if assigned.len() != rows.len() || assigned.iter().enumerate().any(|(i, r)| r.index != i) {
                return Err(Error::Format(format!(
                    "{}: partition must list indices 0..{} once each",
                    path.display(),
                    rows.len()
                )));
            }
            Partition::from_labels(&assigned.iter().map(|r| r.cluster).collect::<Vec<_>>())
        }
        None => gibbs_cluster(&x, &s.pipeline.dpmm)?,
    };
    let scores: Vec<f64> = rows.iter().map(|r| r.score.unwrap_or(1.0)).collect();
    let report = detect_outliers(&x, &scores, &p, &s.pipeline.dpmm)?;
    print!("{report}");
    let ids: Vec<&str> = report.outlier_indices.iter().map(|&i| rows[i].image_id.as_str()).collect();
    println!("accepted {} outliers {} {:?}", report.accepted, ids.len(), ids);
    if let Some(out) = out {
        io::write_atomic(out, serde_json::to_string_pretty(&report)?.as_bytes())?;
    }
    Ok(())
}

fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    records(path)?.iter().map(|r| Ok((r.image_id.clone(), r.skeleton()?))).collect()
}

fn cmd_pipeline(
    s: &Settings,
    data: &Path,
    out: &Path,
    scheme: Option<Scheme>,
    iterations: Option<usize>,
    candidates_from: Option<&Path>,
) -> Result<()> {
    let mut cfg = s.pipeline.clone();
    if let Some(scheme) = scheme {
        cfg.scheme = scheme;
    }
    if let Some(n) = iterations {
        cfg.max_iterations = n;
    }
    cfg.exchange_dir = Some(out.to_path_buf());
    cfg.validate()?;

    let split_path = data.join("split.json");
    let split: DatasetSplit<f64> = serde_json::from_str(
        &std::fs::read_to_string(&split_path).map_err(|e| Error::Format(format!("{}: {e}", split_path.display())))?,
    )?;
    let gt_path = data.join("ground_truth.jsonl");
    let gt = if gt_path.is_file() { Some(read_ground_truth(&gt_path)?) } else { None };
    let mut estimator: Box<dyn Estimator> = match candidates_from {
        Some(dir) => Box::new(FileEstimator { dir: dir.to_path_buf() }),
        None => {
            let maps = read_heatmap_dir(&data.join("heatmaps"))?;
            let gen = &cfg.candidates;
            let cands = maps
                .iter()
                .map(|(id, m)| {
                    let action = split.action_of(id);
                    let list: Vec<CandidatePose<f64>> = enumerate_candidates(m, gen, id, 1)?
                        .into_iter()
                        .map(|c| c.with_action(action))
                        .collect();
                    Ok((id.clone(), list))
                })
                .collect::<Result<CandidateMap>>()?;
            Box::new(IdentityEstimator(cands))
        }
    };
    let states = run_pipeline(&split, estimator.as_mut(), &cfg, gt.as_ref())?;
    for st in &states[1..] {
        let r = st.reports.last();
        println!(
            "iteration {} accepted {} precision {} report {}",
            st.iteration,
            st.accepted_poses.len(),
            r.and_then(|r| r.precision).map_or_else(|| "-".into(), |p| format!("{p:.3}")),
            report_path(out, st.iteration).display()
        );
    }
    Ok(())
}

fn cmd_eval(gt: &Path, est: &Path, frac: f64, reference: Reference) -> Result<()> {
    let gt_recs = records(gt)?;
    let est_by_id: BTreeMap<String, Skeleton<f64>> =
        records(est)?.iter().map(|r| Ok((r.image_id.clone(), r.skeleton()?))).collect::<Result<_>>()?;
    let gt_sk: Vec<Skeleton<f64>> = gt_recs.iter().map(PoseRecord::skeleton).collect::<Result<_>>()?;
    let mut pairs = Vec::with_capacity(gt_recs.len());
    for (r, g) in gt_recs.iter().zip(&gt_sk) {
        let e = est_by_id
            .get(&r.image_id)
            .ok_or_else(|| Error::Format(format!("no estimate for image {:?}", r.image_id)))?;
        pairs.push((g, e, r.action));
    }
    let reference = match reference {
        Reference::Bbox => ReferenceLength::BboxMaxSide,
        Reference::Head => ReferenceLength::HeadSegment,
    };
    let report = pck_report(&pairs, frac, reference)?;
    print!("{report}");
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let s = settings(cli).map_err(|e| match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    })?;
    match &cli.cmd {
        Command::Synth { out } => cmd_synth(&s, out),
        Command::Features { poses, out } => cmd_features(&s, poses, out),
        Command::TrainSvm { positives, negatives, out } => cmd_train_svm(&s, positives, negatives, out),
        Command::Candidates { heatmaps, out, stage } => cmd_candidates(&s, heatmaps, out, *stage),
        Command::Select { model, candidates, out, margin } => cmd_select(&s, model, candidates, out, *margin),
        Command::Cluster { features, out } => cmd_cluster(&s, features, out),
        Command::Outliers { features, partition, out } => {
            cmd_outliers(&s, features, partition.as_deref(), out.as_deref())
        }
        Command::Pipeline { data, out, scheme, iterations, candidates_from } => {
            cmd_pipeline(&s, data, out, *scheme, *iterations, candidates_from.as_deref())
        }
        Command::Eval { gt, est, frac, reference } => cmd_eval(gt, est, *frac, *reference),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
