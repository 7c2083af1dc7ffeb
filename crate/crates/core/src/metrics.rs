//! PCP / PCK correctness, detection and selection rates, precision/recall.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActionLabel, Joint, Skeleton, LIMBS, NUM_JOINTS, NUM_LIMBS};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PcpResult {
    pub limbs: [bool; NUM_LIMBS],
    pub all_correct: bool,
}

/// A limb is correct when both estimated endpoints lie within
/// `eps * |gt limb|` of their ground-truth positions.
pub fn pcp_correct<T: Real>(gt: &Skeleton<T>, est: &Skeleton<T>, eps: f64) -> Result<PcpResult> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Config(format!("pcp eps must be in (0, 1], got {eps}")));
    }
    let eps = T::lit(eps);
    let mut limbs = [false; NUM_LIMBS];
    for (l, &(a, b)) in LIMBS.iter().enumerate() {
        let tol = eps * gt.limb_length(l);
        let ea = gt.get(a).dist(est.get(a));
        let eb = gt.get(b).dist(est.get(b));
        limbs[l] = ea <= tol && eb <= tol;
    }
    Ok(PcpResult {
        limbs,
        all_correct: limbs.iter().all(|&c| c),
    })
}

pub fn is_true_positive<T: Real>(gt: &Skeleton<T>, est: &Skeleton<T>, eps: f64) -> Result<bool> {
    Ok(pcp_correct(gt, est, eps)?.all_correct)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReferenceLength {
    /// Longer side of the tight ground-truth bounding box (PCK).
    BboxMaxSide,
    /// Head-to-neck segment (PCKh).
    HeadSegment,
}

impl ReferenceLength {
    pub fn of<T: Real>(self, gt: &Skeleton<T>) -> T {
        match self {
            ReferenceLength::BboxMaxSide => {
                let (lo, hi) = gt.bbox();
                (hi.x - lo.x).max(hi.y - lo.y)
            }
            ReferenceLength::HeadSegment => gt.get(Joint::Head).dist(gt.get(Joint::Neck)),
        }
    }
}

/// Joint `j` is correct when `|est_j - gt_j| <= frac * ref(gt)`.
pub fn pck_correct<T: Real>(
    gt: &Skeleton<T>,
    est: &Skeleton<T>,
    frac: f64,
    reference: ReferenceLength,
) -> Result<[bool; NUM_JOINTS]> {
    if !(frac > 0.0) {
        return Err(Error::Config(format!("pck fraction must be positive, got {frac}")));
    }
    let r = reference.of(gt);
    if !(r > T::zero()) {
        return Err(Error::DegenerateReference);
    }
    let tol = T::lit(frac) * r;
    Ok(std::array::from_fn(|j| {
        let joint = Joint::ALL[j];
        gt.get(joint).dist(est.get(joint)) <= tol
    }))
}

/// Table columns; bilateral joints are averaged.
pub const PCK_COLUMNS: [(&str, &[Joint]); 7] = [
    ("Head", &[Joint::Head, Joint::Neck]),
    ("Shoulder", &[Joint::LeftShoulder, Joint::RightShoulder]),
    ("Elbow", &[Joint::LeftElbow, Joint::RightElbow]),
    ("Wrist", &[Joint::LeftWrist, Joint::RightWrist]),
    ("Hip", &[Joint::LeftHip, Joint::RightHip]),
    ("Knee", &[Joint::LeftKnee, Joint::RightKnee]),
    ("Ankle", &[Joint::LeftAnkle, Joint::RightAnkle]),
];

/// Per-joint PCK rates over a set of evaluated poses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PckSummary {
    /// Indexed by joint name.
    pub per_joint: BTreeMap<String, f64>,
    pub mean: f64,
    pub count: usize,
}

impl PckSummary {
    fn from_hits(hits: &[usize; NUM_JOINTS], count: usize) -> Self {
        let rate = |h: usize| if count == 0 { 0.0 } else { h as f64 / count as f64 };
        let per_joint = Joint::ALL
            .iter()
            .map(|j| (j.name().to_string(), rate(hits[j.index()])))
            .collect();
        let mean = if count == 0 {
            0.0
        } else {
            hits.iter().sum::<usize>() as f64 / (count * NUM_JOINTS) as f64
        };
        PckSummary {
            per_joint,
            mean,
            count,
        }
    }

    pub fn rate(&self, j: Joint) -> f64 {
        self.per_joint[j.name()]
    }

    pub fn column(&self, joints: &[Joint]) -> f64 {
        joints.iter().map(|&j| self.rate(j)).sum::<f64>() / joints.len() as f64
    }
}

/// Counts behind precision (ATP∩STP / STP) and recall (ATP∩STP / CP∩ATP).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SelectionCounts {
    /// All true poses in the evaluated set, one per image.
    pub atp: usize,
    /// Poses selected as true ones.
    pub stp: usize,
    /// Selected poses that are true positives.
    pub atp_and_stp: usize,
    /// True poses present among the candidates.
    pub cp_and_atp: usize,
}

impl SelectionCounts {
    pub fn precision(&self) -> Option<f64> {
        (self.stp > 0).then(|| self.atp_and_stp as f64 / self.stp as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        (self.cp_and_atp > 0).then(|| self.atp_and_stp as f64 / self.cp_and_atp as f64)
    }

    pub fn detected_tp_rate(&self) -> f64 {
        rate(self.cp_and_atp, self.atp)
    }

    pub fn selected_tp_rate(&self) -> f64 {
        rate(self.atp_and_stp, self.atp)
    }
}

fn rate(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub pck: Option<PckSummary>,
    pub pck_per_action: BTreeMap<String, PckSummary>,
    pub counts: SelectionCounts,
    pub detected_tp_rate: f64,
    pub selected_tp_rate: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub per_action: BTreeMap<String, SelectionCounts>,
}

impl MetricsReport {
    fn set_counts(&mut self, counts: SelectionCounts) {
        self.counts = counts;
        self.detected_tp_rate = counts.detected_tp_rate();
        self.selected_tp_rate = counts.selected_tp_rate();
        self.precision = counts.precision();
        self.recall = counts.recall();
    }
}

/// One evaluated image for [`selection_stats`].
#[derive(Debug, Clone, Copy)]
pub struct ImageEval<'a, T> {
    pub image_id: &'a str,
    pub action: Option<ActionLabel>,
    pub gt: Option<&'a Skeleton<T>>,
    pub candidates: &'a [Skeleton<T>],
    pub selected: Option<&'a Skeleton<T>>,
}

fn count_image<T: Real>(img: &ImageEval<'_, T>, eps: f64, c: &mut SelectionCounts) -> Result<()> {
    c.atp += 1;
    if img.selected.is_some() {
        c.stp += 1;
    }
    if let Some(gt) = img.gt {
        let mut detected = false;
        for cand in img.candidates {
            if is_true_positive(gt, cand, eps)? {
                detected = true;
                break;
            }
        }
        if detected {
            c.cp_and_atp += 1;
        }
        if let Some(sel) = img.selected {
            if is_true_positive(gt, sel, eps)? {
                c.atp_and_stp += 1;
            }
        }
    }
    Ok(())
}

/// Detected/Selected TP rates and precision/recall over a set of images.
/// Matching is one person per image.
pub fn selection_stats<T: Real>(images: &[ImageEval<'_, T>], eps: f64) -> Result<MetricsReport> {
    let mut seen = HashSet::new();
    let mut total = SelectionCounts::default();
    let mut per_action: BTreeMap<String, SelectionCounts> = BTreeMap::new();
    for img in images {
        if !seen.insert(img.image_id) {
            return Err(Error::Format(format!("image {} evaluated twice", img.image_id)));
        }
        count_image(img, eps, &mut total)?;
        if let Some(a) = img.action {
            count_image(img, eps, per_action.entry(a.to_string()).or_default())?;
        }
    }
    let mut report = MetricsReport {
        per_action,
        ..MetricsReport::default()
    };
    report.set_counts(total);
    Ok(report)
}

/// PCK over `(gt, est, action)` triples, overall and per action.
pub fn pck_report<T: Real>(
    pairs: &[(&Skeleton<T>, &Skeleton<T>, Option<ActionLabel>)],
    frac: f64,
    reference: ReferenceLength,
) -> Result<MetricsReport> {
    let mut hits = [0usize; NUM_JOINTS];
    let mut per_action: HashMap<ActionLabel, ([usize; NUM_JOINTS], usize)> = HashMap::new();
    for (gt, est, action) in pairs {
        let ok = pck_correct(gt, est, frac, reference)?;
        for j in 0..NUM_JOINTS {
            hits[j] += ok[j] as usize;
        }
        if let Some(a) = action {
            let e = per_action.entry(*a).or_insert(([0; NUM_JOINTS], 0));
            for j in 0..NUM_JOINTS {
                e.0[j] += ok[j] as usize;
            }
            e.1 += 1;
        }
    }
    Ok(MetricsReport {
        pck: Some(PckSummary::from_hits(&hits, pairs.len())),
        pck_per_action: per_action
            .into_iter()
            .map(|(a, (h, n))| (a.to_string(), PckSummary::from_hits(&h, n)))
            .collect(),
        ..MetricsReport::default()
    })
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{:.1}", 100.0 * x))
}

impl fmt::Display for MetricsReport {
    /// Text table with Head..Ankle and Mean columns, followed by the
    /// selection statistics when any image was counted.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(pck) = &self.pck {
            let mut header = format!("{:<12}", "");
            for (name, _) in PCK_COLUMNS {
                let _ = write!(header, "{name:>9}");
            }
            writeln!(f, "{header}{:>9}", "Mean")?;
            let mut row_of = |label: &str, s: &PckSummary| -> fmt::Result {
                let mut row = format!("{label:<12}");
                for (_, joints) in PCK_COLUMNS {
                    let _ = write!(row, "{:>9.1}", 100.0 * s.column(joints));
                }
                writeln!(f, "{row}{:>9.1}", 100.0 * s.mean)
            };
            row_of("all", pck)?;
            for (a, s) in &self.pck_per_action {
                row_of(a, s)?;
            }
        }
        if self.counts.atp > 0 {
            let c = self.counts;
            writeln!(
                f,
                "images {}  detected_tp {:.1}%  selected_tp {:.1}%  precision {}  recall {}",
                c.atp,
                100.0 * self.detected_tp_rate,
                100.0 * self.selected_tp_rate,
                pct(self.precision),
                pct(self.recall)
            )?;
            writeln!(
                f,
                "counts ATP {}  STP {}  ATP&STP {}  CP&ATP {}",
                c.atp, c.stp, c.atp_and_stp, c.cp_and_atp
            )?;
        }
        Ok(())
    }
}
