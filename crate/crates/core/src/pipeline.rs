//! Self-training loop: select correct candidate poses with CPS-SVMs (and,
//! for the clustering scheme, recover further poses by DP-mixture
//! clustering), then emit the augmented annotation set for re-training the
//! external estimator.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::{enumerate_candidates, CandidateGenConfig, Heatmap};
use crate::dpmm::{recover_poses, BasePrior, DpmmConfig, OutlierReport};
use crate::error::{Error, Result};
use crate::features::{relational_feature, PrFeature};
use crate::io::{self, ConfigMap, PoseRecord};
use crate::metrics::{pck_report, selection_stats, ImageEval, MetricsReport, ReferenceLength};
use crate::model::{ActionLabel, CandidatePose, DatasetSplit, Provenance, Skeleton};
use crate::svm::{mine_negatives, synthesize_positives, train, Label, SvmModel, SvmParams, TrainSet};

pub type CandidateMap = BTreeMap<String, Vec<CandidatePose<f64>>>;
pub type GroundTruth = BTreeMap<String, Skeleton<f64>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scheme {
    /// One shared SVM over all unlabeled and weakly labeled images.
    Semi,
    /// One SVM per action class.
    Weak,
    /// Per-action SVMs, then clustering of the rejected candidates.
    WeakC,
}

impl Scheme {
    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Semi => "semi",
            Scheme::Weak => "weak",
            Scheme::WeakC => "weakC",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "semi" => Ok(Scheme::Semi),
            "weak" => Ok(Scheme::Weak),
            "weakc" => Ok(Scheme::WeakC),
            _ => Err(Error::Config(format!("unknown scheme {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptedPose {
    pub image_id: String,
    pub skeleton: Skeleton<f64>,
    pub action: Option<ActionLabel>,
    pub provenance: Provenance,
    pub score: f64,
    /// Iteration that accepted the pose.
    pub iteration: usize,
}

#[derive(Debug, Clone)]
pub struct IterationState {
    pub iteration: usize,
    /// Append-only across iterations; at most one pose per image.
    pub accepted_poses: Vec<AcceptedPose>,
    pub general_model: Option<SvmModel<f64>>,
    pub per_action_models: BTreeMap<ActionLabel, SvmModel<f64>>,
    /// One report per completed iteration.
    pub reports: Vec<MetricsReport>,
    /// Clustering audit of the latest iteration (clustering scheme only).
    pub outlier_reports: BTreeMap<ActionLabel, OutlierReport>,
}

impl IterationState {
    /// State before any selection: only the annotations.
    pub fn initial() -> Self {
        IterationState {
            iteration: 0,
            accepted_poses: Vec::new(),
            general_model: None,
            per_action_models: BTreeMap::new(),
            reports: Vec::new(),
            outlier_reports: BTreeMap::new(),
        }
    }

    pub fn accepted_ids(&self) -> BTreeSet<&str> {
        self.accepted_poses.iter().map(|p| p.image_id.as_str()).collect()
    }

    pub fn accepted(&self, image_id: &str) -> Option<&AcceptedPose> {
        self.accepted_poses.iter().find(|p| p.image_id == image_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub scheme: Scheme,
    pub max_iterations: usize,
    /// PCP threshold for positive synthesis and evaluation.
    pub eps: f64,
    /// Synthesized positives per annotation (in addition to the annotation).
    pub n_positives: usize,
    /// Decision value a candidate must exceed to be selected.
    pub margin: f64,
    pub svm: SvmParams,
    pub dpmm: DpmmConfig,
    pub candidates: CandidateGenConfig,
    /// Best-scoring candidates kept per image.
    pub max_candidates_per_image: usize,
    /// Actions with fewer annotations use the general model.
    pub min_action_annotations: usize,
    /// Scale distances by torso length.
    pub normalize_features: bool,
    pub seed: u64,
    pub exchange_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            scheme: Scheme::WeakC,
            max_iterations: 2,
            eps: 0.7,
            n_positives: 10,
            margin: 0.0,
            svm: SvmParams::default(),
            dpmm: DpmmConfig::default(),
            candidates: CandidateGenConfig::default(),
            max_candidates_per_image: 20,
            min_action_annotations: 5,
            normalize_features: true,
            seed: 0,
            exchange_dir: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be at least 1".into()));
        }
        if !(self.eps > 0.0 && self.eps <= 1.0) {
            return Err(Error::Config(format!("eps must be in (0, 1], got {}", self.eps)));
        }
        if self.max_candidates_per_image == 0 {
            return Err(Error::Config("max_candidates_per_image must be at least 1".into()));
        }
        if !self.margin.is_finite() {
            return Err(Error::Config("margin must be finite".into()));
        }
        self.dpmm.validate()?;
        self.candidates.validate()
    }

    /// Overrides defaults from a flat configuration map.
    pub fn apply(&mut self, c: &mut ConfigMap) -> Result<()> {
        if let Some(s) = c.take::<String>("pipeline.scheme")? {
            self.scheme = s.parse()?;
        }
        c.take_into("pipeline.max_iterations", &mut self.max_iterations)?;
        c.take_into("pipeline.eps", &mut self.eps)?;
        c.take_into("pipeline.n_positives", &mut self.n_positives)?;
        c.take_into("pipeline.margin", &mut self.margin)?;
        c.take_into("pipeline.max_candidates_per_image", &mut self.max_candidates_per_image)?;
        c.take_into("pipeline.min_action_annotations", &mut self.min_action_annotations)?;
        c.take_into("pipeline.normalize_features", &mut self.normalize_features)?;
        c.take_into("svm.reg", &mut self.svm.reg)?;
        c.take_into("svm.tol", &mut self.svm.tol)?;
        c.take_opt("svm.max_iter", &mut self.svm.max_iter)?;
        c.take_into("svm.standardize", &mut self.svm.standardize)?;
        c.take_into("dpmm.gamma", &mut self.dpmm.gamma)?;
        c.take_into("dpmm.alpha", &mut self.dpmm.alpha)?;
        c.take_into("dpmm.gibbs_iters", &mut self.dpmm.gibbs_iters)?;
        c.take_into("dpmm.burn_in", &mut self.dpmm.burn_in)?;
        c.take_opt("dpmm.pca_dim", &mut self.dpmm.pca_dim)?;
        c.take_into("dpmm.small_cluster_max", &mut self.dpmm.small_cluster_max)?;
        let (mut kappa0, mut a0) = match self.dpmm.base {
            BasePrior::DataScaled { kappa0, a0 } | BasePrior::Fixed { kappa0, a0, .. } => (kappa0, a0),
        };
        c.take_into("dpmm.kappa0", &mut kappa0)?;
        c.take_into("dpmm.a0", &mut a0)?;
        let mu0 = c.take::<f64>("dpmm.mu0")?;
        let b0 = c.take::<f64>("dpmm.b0")?;
        self.dpmm.base = match (mu0, b0, self.dpmm.base) {
            (Some(mu0), Some(b0), _) => BasePrior::Fixed { mu0, kappa0, a0, b0 },
            (None, None, BasePrior::Fixed { mu0, b0, .. }) => BasePrior::Fixed { mu0, kappa0, a0, b0 },
            (None, None, BasePrior::DataScaled { .. }) => BasePrior::DataScaled { kappa0, a0 },
            _ => return Err(Error::Config("dpmm.mu0 and dpmm.b0 must be given together".into())),
        };
        c.take_into("candidates.threshold", &mut self.candidates.threshold)?;
        c.take_into("candidates.top_k", &mut self.candidates.top_k)?;
        c.take_into("candidates.beam", &mut self.candidates.beam)?;
        c.take_into("candidates.nms_radius", &mut self.candidates.nms_radius)?;
        Ok(())
    }

    /// Sets every seed-bearing component from one seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.dpmm.seed = seed;
        self
    }
}

/// Deterministic seed derivation (splitmix64 finalizer).
pub fn derive_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Feature vector used by the pipeline (configuration part only).
pub fn pose_feature(s: &Skeleton<f64>, cfg: &PipelineConfig) -> PrFeature<f64> {
    PrFeature {
        config: relational_feature(s, cfg.normalize_features),
        appearance: None,
    }
}

/// An annotation or accepted pose plus its synthesized neighbours, as
/// feature vectors.
pub fn positive_features(s: &Skeleton<f64>, seed: u64, cfg: &PipelineConfig) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![pose_feature(s, cfg).combined()];
    if cfg.n_positives > 0 {
        for p in synthesize_positives(s, cfg.eps, cfg.n_positives, seed)? {
            out.push(pose_feature(&p, cfg).combined());
        }
    }
    Ok(out)
}

fn train_model(pos: &[&Vec<f64>], neg: &[Vec<f64>], params: &SvmParams) -> Result<SvmModel<f64>> {
    let mut ts = TrainSet::new();
    for x in pos {
        ts.push((*x).clone(), Label::Positive);
    }
    for x in neg {
        ts.push(x.clone(), Label::Negative);
    }
    Ok(train(&ts, params)?.0)
}

/// Per-action CPS-SVMs, each retrained on the action's own positives plus
/// the shared negatives. Actions with fewer than `min_action_annotations`
/// annotations, and the `general` action, use the general model trained on
/// the whole positive pool; it is trained only when some action needs it
/// and returned alongside the map.
pub fn specialize_models(
    positives: &BTreeMap<ActionLabel, Vec<Vec<f64>>>,
    annotation_counts: &BTreeMap<ActionLabel, usize>,
    negatives: &[Vec<f64>],
    actions: &BTreeSet<ActionLabel>,
    cfg: &PipelineConfig,
) -> Result<(BTreeMap<ActionLabel, SvmModel<f64>>, Option<SvmModel<f64>>)> {
    if annotation_counts.values().all(|&n| n == 0) {
        return Err(Error::EmptyFullySupervised);
    }
    let falls_back = |a: ActionLabel| {
        a == ActionLabel::General || annotation_counts.get(&a).copied().unwrap_or(0) < cfg.min_action_annotations
    };
    let general = if actions.iter().any(|&a| falls_back(a)) {
        let pool: Vec<&Vec<f64>> = positives.values().flatten().collect();
        Some(train_model(&pool, negatives, &cfg.svm)?)
    } else {
        None
    };
    let models = actions
        .par_iter()
        .map(|&a| {
            if falls_back(a) {
                return Ok((a, general.clone().expect("trained when any action falls back")));
            }
            let pos: Vec<&Vec<f64>> = positives[&a].iter().collect();
            Ok((a, train_model(&pos, negatives, &cfg.svm)?))
        })
        .collect::<Result<_>>()?;
    Ok((models, general))
}

/// Candidates per image from per-image heatmaps, tagged with the image's
/// action where the split knows it.
pub fn candidates_from_heatmaps(
    heatmaps: &BTreeMap<String, Vec<Heatmap<f64>>>,
    split: &DatasetSplit<f64>,
    gen: &CandidateGenConfig,
    stage: u32,
) -> Result<CandidateMap> {
    heatmaps
        .par_iter()
        .map(|(id, maps)| {
            let action = split.action_of(id);
            let cands = enumerate_candidates(maps, gen, id, stage)?
                .into_iter()
                .map(|c| c.with_action(action))
                .collect();
            Ok((id.clone(), cands))
        })
        .collect()
}

struct Scored {
    cands: Vec<(CandidatePose<f64>, PrFeature<f64>)>,
}

fn capped(list: &[CandidatePose<f64>], cap: usize, cfg: &PipelineConfig) -> Scored {
    let mut order: Vec<usize> = (0..list.len()).collect();
    order.sort_by(|&a, &b| list[b].score.total_cmp(&list[a].score).then(a.cmp(&b)));
    order.truncate(cap);
    Scored {
        cands: order
            .into_iter()
            .map(|i| (list[i].clone(), pose_feature(&list[i].skeleton, cfg)))
            .collect(),
    }
}

/// One self-training iteration over the candidates of the current
/// estimator.
pub fn run_iteration(
    state: &IterationState,
    split: &DatasetSplit<f64>,
    candidates_in: &CandidateMap,
    cfg: &PipelineConfig,
    ground_truth: Option<&GroundTruth>,
) -> Result<IterationState> {
    cfg.validate()?;
    if split.fs.is_empty() {
        return Err(Error::EmptyFullySupervised);
    }
    let t = state.iteration + 1;

    let mut kind: HashMap<&str, Option<ActionLabel>> = HashMap::new();
    for w in &split.ws {
        kind.insert(&w.image_id, Some(w.action));
    }
    for u in &split.us {
        kind.insert(u, None);
    }
    let backgrounds: BTreeSet<&str> = split.backgrounds.iter().map(String::as_str).collect();

    // targets in a fixed order: WS, then US for the shared model
    let mut targets: Vec<(&str, Option<ActionLabel>)> = split.ws.iter().map(|w| (w.image_id.as_str(), Some(w.action))).collect();
    if cfg.scheme == Scheme::Semi {
        targets.extend(split.us.iter().map(|u| (u.as_str(), None)));
    }
    for id in candidates_in.keys() {
        match kind.get(id.as_str()) {
            Some(None) if cfg.scheme != Scheme::Semi => return Err(Error::MissingAction(id.clone())),
            None if !backgrounds.contains(id.as_str()) => {
                return Err(Error::Format(format!("candidates for image {id:?} outside WS, US and backgrounds")))
            }
            _ => {}
        }
    }

    let scored: BTreeMap<&str, Scored> = targets
        .par_iter()
        .filter_map(|&(id, _)| candidates_in.get(id).map(|l| (id, capped(l, cfg.max_candidates_per_image, cfg))))
        .collect();

    // negatives from background detections
    let bg_cands: Vec<CandidatePose<f64>> = split
        .backgrounds
        .iter()
        .filter_map(|b| candidates_in.get(b))
        .flat_map(|l| capped(l, cfg.max_candidates_per_image, cfg).cands.into_iter().map(|(c, _)| c))
        .collect();
    let negatives: Vec<Vec<f64>> = mine_negatives(&bg_cands, &split.backgrounds)?
        .par_iter()
        .map(|s| pose_feature(s, cfg).combined())
        .collect();

    // positives: annotations plus SVM-accepted poses, each with synthesized
    // neighbours; cluster-recovered poses are emitted but not fed back
    let mut sources: Vec<(Option<ActionLabel>, &Skeleton<f64>)> =
        split.fs.iter().map(|a| (Some(a.action), &a.skeleton)).collect();
    sources.extend(
        state
            .accepted_poses
            .iter()
            .filter(|p| p.provenance == Provenance::Svm)
            .map(|p| (p.action, &p.skeleton)),
    );
    let pos_sets: Vec<(Option<ActionLabel>, Vec<Vec<f64>>)> = sources
        .par_iter()
        .enumerate()
        .map(|(k, &(a, s))| Ok((a, positive_features(s, derive_seed(derive_seed(cfg.seed, t as u64), k as u64), cfg)?)))
        .collect::<Result<_>>()?;
    let (general, per_action_models) = if cfg.scheme == Scheme::Semi {
        let all_pos: Vec<&Vec<f64>> = pos_sets.iter().flat_map(|(_, v)| v).collect();
        (Some(train_model(&all_pos, &negatives, &cfg.svm)?), BTreeMap::new())
    } else {
        let mut by_action: BTreeMap<ActionLabel, Vec<Vec<f64>>> = BTreeMap::new();
        for (a, v) in &pos_sets {
            if let Some(a) = a {
                by_action.entry(*a).or_default().extend(v.iter().cloned());
            }
        }
        let mut counts: BTreeMap<ActionLabel, usize> = BTreeMap::new();
        for a in &split.fs {
            *counts.entry(a.action).or_default() += 1;
        }
        let actions: BTreeSet<ActionLabel> = split.ws.iter().map(|w| w.action).collect();
        let (models, general) = specialize_models(&by_action, &counts, &negatives, &actions, cfg)?;
        (general, models)
    };

    // SVM selection and per-candidate decisions
    let margin = cfg.margin;
    let decided: Vec<(&str, Option<ActionLabel>, Option<usize>, Vec<bool>)> = targets
        .par_iter()
        .filter_map(|&(id, a)| scored.get(id).map(|s| (id, a, s)))
        .map(|(id, a, s)| {
            let model = match (cfg.scheme, a) {
                (Scheme::Semi, _) | (_, None) => general.as_ref().expect("shared model is trained"),
                (_, Some(a)) => &per_action_models[&a],
            };
            let mut best: Option<(usize, f64, f64)> = None;
            let mut passed = Vec::with_capacity(s.cands.len());
            for (i, (c, f)) in s.cands.iter().enumerate() {
                let d = model.decision(&f.combined())?;
                let ok = d > margin;
                passed.push(ok);
                if ok && best.is_none_or(|(_, bs, bd)| c.score > bs || (c.score == bs && d > bd)) {
                    best = Some((i, c.score, d));
                }
            }
            Ok((id, a, best.map(|b| b.0), passed))
        })
        .collect::<Result<_>>()?;

    let mut svm_pick: BTreeMap<&str, &CandidatePose<f64>> = BTreeMap::new();
    for (id, _, pick, _) in &decided {
        if let Some(i) = pick {
            svm_pick.insert(id, &scored[id].cands[*i].0);
        }
    }

    // clustering of the SVM-rejected candidates, one chain per action
    let mut cluster_pick: BTreeMap<String, CandidatePose<f64>> = BTreeMap::new();
    let mut outlier_reports = BTreeMap::new();
    if cfg.scheme == Scheme::WeakC {
        let mut rejected: BTreeMap<ActionLabel, Vec<(CandidatePose<f64>, PrFeature<f64>)>> = BTreeMap::new();
        for (id, a, _, passed) in &decided {
            let a = a.expect("weak schemes only target labeled images");
            for ((c, f), ok) in scored[id].cands.iter().zip(passed) {
                if !ok {
                    rejected.entry(a).or_default().push((c.clone(), f.clone()));
                }
            }
        }
        let recovered: Vec<_> = rejected
            .into_par_iter()
            .map(|(a, cands)| {
                let dcfg = DpmmConfig {
                    seed: derive_seed(derive_seed(cfg.dpmm.seed, t as u64), a as u64),
                    ..cfg.dpmm.clone()
                };
                Ok((a, recover_poses(&cands, &dcfg)?))
            })
            .collect::<Result<_>>()?;
        for (a, rec) in recovered {
            if let Some(rec) = rec {
                for p in rec.poses {
                    cluster_pick.insert(p.image_id.clone(), p);
                }
                outlier_reports.insert(a, rec.report);
            }
        }
    }

    // append-only update; the SVM wins over clustering
    let mut accepted_poses = state.accepted_poses.clone();
    let already: BTreeSet<String> = state.accepted_ids().into_iter().map(str::to_string).collect();
    for &(id, a) in &targets {
        if already.contains(id) {
            continue;
        }
        let action = a.or_else(|| split.action_of(id));
        let (pose, provenance) = match (svm_pick.get(id), cluster_pick.get(id)) {
            (Some(p), _) => (*p, Provenance::Svm),
            (None, Some(p)) => (p, Provenance::Cluster),
            (None, None) => continue,
        };
        accepted_poses.push(AcceptedPose {
            image_id: id.to_string(),
            skeleton: pose.skeleton.clone(),
            action,
            provenance,
            score: pose.score,
            iteration: t,
        });
    }

    let mut next = IterationState {
        iteration: t,
        accepted_poses,
        general_model: general,
        per_action_models,
        reports: state.reports.clone(),
        outlier_reports,
    };
    if let Some(gt) = ground_truth {
        let report = evaluate(&next, &targets, &scored, gt, cfg.eps)?;
        next.reports.push(report);
    }
    if let Some(dir) = &cfg.exchange_dir {
        write_exchange(dir, split, &next, cfg)?;
    }
    Ok(next)
}

fn evaluate(
    state: &IterationState,
    targets: &[(&str, Option<ActionLabel>)],
    scored: &BTreeMap<&str, Scored>,
    gt: &GroundTruth,
    eps: f64,
) -> Result<MetricsReport> {
    let skeletons: BTreeMap<&str, Vec<Skeleton<f64>>> = scored
        .iter()
        .map(|(id, s)| (*id, s.cands.iter().map(|(c, _)| c.skeleton.clone()).collect()))
        .collect();
    let empty = Vec::new();
    let images: Vec<ImageEval<'_, f64>> = targets
        .iter()
        .map(|&(id, a)| ImageEval {
            image_id: id,
            action: a,
            gt: gt.get(id),
            candidates: skeletons.get(id).unwrap_or(&empty),
            selected: state.accepted(id).map(|p| &p.skeleton),
        })
        .collect();
    let mut report = selection_stats(&images, eps)?;
    let pairs: Vec<_> = images
        .iter()
        .filter_map(|img| Some((img.gt?, img.selected?, img.action)))
        .collect();
    if !pairs.is_empty() {
        let pck = pck_report(&pairs, 0.2, ReferenceLength::BboxMaxSide)?;
        report.pck = pck.pck;
        report.pck_per_action = pck.pck_per_action;
    }
    Ok(report)
}

/// `true` when the latest iteration accepted no new image or the
/// iteration cap is reached.
pub fn stop_check(prev: &IterationState, cur: &IterationState, cfg: &PipelineConfig) -> bool {
    if cur.iteration >= cfg.max_iterations {
        return true;
    }
    let before = prev.accepted_ids();
    cur.accepted_ids().iter().all(|id| before.contains(id))
}

/// Annotations plus accepted poses, as emitted for estimator re-training.
pub fn training_emission(split: &DatasetSplit<f64>, state: &IterationState) -> Vec<PoseRecord> {
    let mut out: Vec<PoseRecord> = split.fs.iter().map(PoseRecord::from_annotation).collect();
    out.extend(state.accepted_poses.iter().map(|p| PoseRecord {
        action: p.action,
        score: Some(p.score),
        ..PoseRecord::from_skeleton(p.image_id.clone(), &p.skeleton, p.provenance)
    }));
    out
}

/// Text audit of one iteration.
pub fn iteration_report(state: &IterationState, cfg: &PipelineConfig) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "scheme\t{}", cfg.scheme);
    let _ = writeln!(s, "iteration\t{}", state.iteration);
    let new = state.accepted_poses.iter().filter(|p| p.iteration == state.iteration);
    let (mut svm, mut cluster) = (0, 0);
    for p in new {
        match p.provenance {
            Provenance::Cluster => cluster += 1,
            _ => svm += 1,
        }
    }
    let _ = writeln!(s, "accepted_total\t{}", state.accepted_poses.len());
    let _ = writeln!(s, "accepted_new_svm\t{svm}");
    let _ = writeln!(s, "accepted_new_cluster\t{cluster}");
    if let Some(r) = state.reports.last() {
        let _ = writeln!(s, "\n{r}");
    }
    for (a, r) in &state.outlier_reports {
        let _ = writeln!(s, "\n[{a}] clusters {} accepted {}", r.initial, r.accepted);
        let _ = write!(s, "{r}");
    }
    s
}

pub fn annotations_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("annotations_iter{t}.jsonl"))
}

pub fn candidates_dir(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("candidates_iter{t}"))
}

pub fn report_path(dir: &Path, t: usize) -> PathBuf {
    dir.join(format!("report_iter{t}.txt"))
}

fn write_exchange(dir: &Path, split: &DatasetSplit<f64>, state: &IterationState, cfg: &PipelineConfig) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    io::write_records(&annotations_path(dir, state.iteration), &training_emission(split, state))?;
    io::write_atomic(&report_path(dir, state.iteration), iteration_report(state, cfg).as_bytes())
}

/// Writes one candidate file per image under `candidates_iter<t>/`.
pub fn write_candidates(dir: &Path, t: usize, cands: &CandidateMap) -> Result<()> {
    let d = candidates_dir(dir, t);
    std::fs::create_dir_all(&d)?;
    for (id, list) in cands {
        let recs: Vec<PoseRecord> = list.iter().map(PoseRecord::from_candidate).collect();
        io::write_records(&d.join(format!("{id}.jsonl")), &recs)?;
    }
    Ok(())
}

pub fn read_candidates(dir: &Path, t: usize) -> Result<CandidateMap> {
    let d = candidates_dir(dir, t);
    let mut out = CandidateMap::new();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&d)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.sort();
    for p in paths.into_iter().filter(|p| p.extension().is_some_and(|e| e == "jsonl")) {
        let recs = io::read_records(&p).map_err(|e| Error::Format(format!("{}: {e}", p.display())))?;
        for r in recs {
            out.entry(r.image_id.clone()).or_default().push(r.to_candidate()?);
        }
    }
    Ok(out)
}

/// Source of candidate poses for each iteration, i.e. the external
/// estimator re-trained on the previous emission.
pub trait Estimator {
    fn candidates(&mut self, iteration: usize) -> Result<CandidateMap>;
}

/// Replays one fixed candidate set every iteration.
pub struct IdentityEstimator(pub CandidateMap);

impl Estimator for IdentityEstimator {
    fn candidates(&mut self, _iteration: usize) -> Result<CandidateMap> {
        Ok(self.0.clone())
    }
}

/// Reads `candidates_iter<t>/` from an exchange directory, falling back to
/// the most recent earlier iteration present.
pub struct FileEstimator {
    pub dir: PathBuf,
}

impl Estimator for FileEstimator {
    fn candidates(&mut self, iteration: usize) -> Result<CandidateMap> {
        for t in (0..=iteration).rev() {
            if candidates_dir(&self.dir, t).is_dir() {
                return read_candidates(&self.dir, t);
            }
        }
        Err(Error::Format(format!(
            "no candidates_iter<t> directory at or below iteration {iteration} in {}",
            self.dir.display()
        )))
    }
}

/// Iterates until [`stop_check`] fires. The returned states start with the
/// initial state, so `states.len() - 1` iterations were executed.
pub fn run_pipeline(
    split: &DatasetSplit<f64>,
    estimator: &mut dyn Estimator,
    cfg: &PipelineConfig,
    ground_truth: Option<&GroundTruth>,
) -> Result<Vec<IterationState>> {
    cfg.validate()?;
    let mut states = vec![IterationState::initial()];
    loop {
        let prev = states.last().expect("non-empty");
        let cands = estimator.candidates(prev.iteration + 1)?;
        let next = run_iteration(prev, split, &cands, cfg, ground_truth)?;
        let stop = stop_check(prev, &next, cfg);
        states.push(next);
        if stop {
            return Ok(states);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{synth_corpus, SynthConfig};

    fn corpus() -> (crate::synth::SynthCorpus, CandidateMap) {
        let c = synth_corpus(&SynthConfig {
            n_actions: 2,
            poses_per_action: 16,
            n_backgrounds: 10,
            ..SynthConfig::default()
        })
        .unwrap();
        let cands = candidates_from_heatmaps(&c.heatmaps, &c.split, &CandidateGenConfig::default(), 1).unwrap();
        (c, cands)
    }

    fn quick(scheme: Scheme) -> PipelineConfig {
        PipelineConfig {
            scheme,
            dpmm: DpmmConfig {
                gibbs_iters: 200,
                burn_in: 50,
                ..DpmmConfig::default()
            },
            min_action_annotations: 5,
            ..PipelineConfig::default()
        }
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("weakC".parse::<Scheme>().unwrap(), Scheme::WeakC);
        assert_eq!("semi".parse::<Scheme>().unwrap(), Scheme::Semi);
        assert!("strong".parse::<Scheme>().is_err());
    }

    #[test]
    fn stop_rules() {
        let cfg = PipelineConfig::default();
        let mut a = IterationState::initial();
        let mut b = IterationState { iteration: 1, ..IterationState::initial() };
        assert!(stop_check(&a, &b, &cfg));
        b.accepted_poses.push(AcceptedPose {
            image_id: "x".into(),
            skeleton: crate::model::fixtures::upright(),
            action: None,
            provenance: Provenance::Svm,
            score: 1.0,
            iteration: 1,
        });
        assert!(!stop_check(&a, &b, &cfg));
        a.iteration = 1;
        b.iteration = 2;
        assert!(stop_check(&a, &b, &cfg));
    }

    #[test]
    fn nothing_clears_an_impossible_margin() {
        let (c, cands) = corpus();
        let cfg = PipelineConfig {
            margin: 1e9,
            ..quick(Scheme::Semi)
        };
        let next = run_iteration(&IterationState::initial(), &c.split, &cands, &cfg, None).unwrap();
        assert!(next.accepted_poses.is_empty());
        assert_eq!(next.iteration, 1);
    }

    #[test]
    fn unlabeled_images_need_the_shared_model() {
        let (mut c, mut cands) = corpus();
        let moved = c.split.ws.pop().unwrap();
        c.split.us.push(moved.image_id.clone());
        for l in cands.values_mut() {
            for x in l.iter_mut() {
                x.action = c.split.action_of(&x.image_id);
            }
        }
        let err = run_iteration(&IterationState::initial(), &c.split, &cands, &quick(Scheme::Weak), None).unwrap_err();
        assert!(matches!(err, Error::MissingAction(_)));
        run_iteration(&IterationState::initial(), &c.split, &cands, &quick(Scheme::Semi), None).unwrap();
    }

    #[test]
    fn acceptance_is_append_only_and_unique() {
        let (c, cands) = corpus();
        let cfg = quick(Scheme::WeakC);
        let states = run_pipeline(&c.split, &mut IdentityEstimator(cands), &cfg, Some(&c.ground_truth)).unwrap();
        assert!(states.len() >= 2);
        for w in states.windows(2) {
            assert!(w[0].accepted_poses.iter().zip(&w[1].accepted_poses).all(|(a, b)| a == b));
        }
        let last = states.last().unwrap();
        assert_eq!(last.accepted_ids().len(), last.accepted_poses.len());
        let ws: BTreeSet<&str> = c.split.ws.iter().map(|w| w.image_id.as_str()).collect();
        assert!(last.accepted_poses.iter().all(|p| ws.contains(p.image_id.as_str())));
    }

    #[test]
    fn small_actions_fall_back_to_general() {
        let (c, cands) = corpus();
        let cfg = PipelineConfig {
            min_action_annotations: 100,
            ..quick(Scheme::Weak)
        };
        let next = run_iteration(&IterationState::initial(), &c.split, &cands, &cfg, None).unwrap();
        let general = next.general_model.as_ref().unwrap();
        assert!(next.per_action_models.values().all(|m| m == general));
    }
}
