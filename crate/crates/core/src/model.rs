//! Skeletons, candidate poses, action labels and dataset splits.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const NUM_JOINTS: usize = 14;
pub const NUM_LIMBS: usize = 13;

/// The 14 body keypoints, indexed in LSP order (right ankle first, head last).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Joint {
    RightAnkle = 0,
    RightKnee = 1,
    RightHip = 2,
    LeftHip = 3,
    LeftKnee = 4,
    LeftAnkle = 5,
    RightWrist = 6,
    RightElbow = 7,
    RightShoulder = 8,
    LeftShoulder = 9,
    LeftElbow = 10,
    LeftWrist = 11,
    Neck = 12,
    Head = 13,
}

impl Joint {
    pub const ALL: [Joint; NUM_JOINTS] = [
        Joint::RightAnkle,
        Joint::RightKnee,
        Joint::RightHip,
        Joint::LeftHip,
        Joint::LeftKnee,
        Joint::LeftAnkle,
        Joint::RightWrist,
        Joint::RightElbow,
        Joint::RightShoulder,
        Joint::LeftShoulder,
        Joint::LeftElbow,
        Joint::LeftWrist,
        Joint::Neck,
        Joint::Head,
    ];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Joint> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Joint::RightAnkle => "r_ankle",
            Joint::RightKnee => "r_knee",
            Joint::RightHip => "r_hip",
            Joint::LeftHip => "l_hip",
            Joint::LeftKnee => "l_knee",
            Joint::LeftAnkle => "l_ankle",
            Joint::RightWrist => "r_wrist",
            Joint::RightElbow => "r_elbow",
            Joint::RightShoulder => "r_shoulder",
            Joint::LeftShoulder => "l_shoulder",
            Joint::LeftElbow => "l_elbow",
            Joint::LeftWrist => "l_wrist",
            Joint::Neck => "neck",
            Joint::Head => "head",
        }
    }
}

impl fmt::Display for Joint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Joint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Joint::ALL
            .iter()
            .copied()
            .find(|j| j.name() == s)
            .ok_or_else(|| Error::UnknownJoint(s.to_string()))
    }
}

/// Kinematic tree. A single static table shared by every skeleton.
///
/// The torso is represented by the two neck-to-hip edges.
pub const LIMBS: [(Joint, Joint); NUM_LIMBS] = [
    (Joint::Head, Joint::Neck),
    (Joint::Neck, Joint::LeftShoulder),
    (Joint::Neck, Joint::RightShoulder),
    (Joint::LeftShoulder, Joint::LeftElbow),
    (Joint::LeftElbow, Joint::LeftWrist),
    (Joint::RightShoulder, Joint::RightElbow),
    (Joint::RightElbow, Joint::RightWrist),
    (Joint::Neck, Joint::LeftHip),
    (Joint::Neck, Joint::RightHip),
    (Joint::LeftHip, Joint::LeftKnee),
    (Joint::LeftKnee, Joint::LeftAnkle),
    (Joint::RightHip, Joint::RightKnee),
    (Joint::RightKnee, Joint::RightAnkle),
];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point<T> {
    pub x: T,
    pub y: T,
}

impl<T: Real> Point<T> {
    pub fn new(x: T, y: T) -> Self {
        Point { x, y }
    }

    pub fn dist(self, other: Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn midpoint(self, other: Self) -> Self {
        let half = T::lit(0.5);
        Point::new((self.x + other.x) * half, (self.y + other.y) * half)
    }
}

/// 14 keypoints in pixel coordinates, ordered by [`Joint`] index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Skeleton<T> {
    keypoints: [Point<T>; NUM_JOINTS],
}

impl<T: Real> Skeleton<T> {
    /// Builds a skeleton, rejecting non-finite coordinates.
    pub fn new(keypoints: [Point<T>; NUM_JOINTS]) -> Result<Self> {
        if let Some(j) = Joint::ALL.iter().find(|j| !keypoints[j.index()].is_finite()) {
            return Err(Error::NonFinite { joint: j.name() });
        }
        Ok(Skeleton { keypoints })
    }

    /// Builds a skeleton without checking coordinates. Used for ingested
    /// data that is validated later (see [`validate_split`]).
    pub fn new_unchecked(keypoints: [Point<T>; NUM_JOINTS]) -> Self {
        Skeleton { keypoints }
    }

    pub fn from_xy(xy: &[(T, T)]) -> Result<Self> {
        if xy.len() != NUM_JOINTS {
            return Err(Error::DimensionMismatch {
                expected: NUM_JOINTS,
                got: xy.len(),
            });
        }
        let mut kp = [Point::new(T::zero(), T::zero()); NUM_JOINTS];
        for (p, &(x, y)) in kp.iter_mut().zip(xy) {
            *p = Point::new(x, y);
        }
        Skeleton::new(kp)
    }

    #[inline]
    pub fn keypoints(&self) -> &[Point<T>; NUM_JOINTS] {
        &self.keypoints
    }

    #[inline]
    pub fn get(&self, j: Joint) -> Point<T> {
        self.keypoints[j.index()]
    }

    pub fn first_non_finite(&self) -> Option<Joint> {
        Joint::ALL
            .iter()
            .copied()
            .find(|j| !self.keypoints[j.index()].is_finite())
    }

    pub fn limb_length(&self, limb: usize) -> T {
        let (a, b) = LIMBS[limb];
        self.get(a).dist(self.get(b))
    }

    pub fn limb_lengths(&self) -> [T; NUM_LIMBS] {
        std::array::from_fn(|l| self.limb_length(l))
    }

    /// Neck to hip-midpoint distance.
    pub fn torso_length(&self) -> T {
        let hips = self.get(Joint::LeftHip).midpoint(self.get(Joint::RightHip));
        self.get(Joint::Neck).dist(hips)
    }

    pub fn map_points(&self, mut f: impl FnMut(Point<T>) -> Point<T>) -> Self {
        Skeleton {
            keypoints: self.keypoints.map(&mut f),
        }
    }

    pub fn translated(&self, dx: T, dy: T) -> Self {
        self.map_points(|p| Point::new(p.x + dx, p.y + dy))
    }

    pub fn cast<U: Real>(&self) -> Skeleton<U> {
        Skeleton {
            keypoints: self
                .keypoints
                .map(|p| Point::new(U::lit(p.x.as_f64()), U::lit(p.y.as_f64()))),
        }
    }

    /// Tight axis-aligned bounding box `(min, max)`.
    pub fn bbox(&self) -> (Point<T>, Point<T>) {
        let mut lo = self.keypoints[0];
        let mut hi = self.keypoints[0];
        for p in &self.keypoints[1..] {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }
}

/// The eight action classes. `parkour` parses as [`ActionLabel::Gymnastics`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionLabel {
    Athletics,
    Badminton,
    Baseball,
    Gymnastics,
    Soccer,
    Tennis,
    Volleyball,
    General,
}

impl ActionLabel {
    pub const ALL: [ActionLabel; 8] = [
        ActionLabel::Athletics,
        ActionLabel::Badminton,
        ActionLabel::Baseball,
        ActionLabel::Gymnastics,
        ActionLabel::Soccer,
        ActionLabel::Tennis,
        ActionLabel::Volleyball,
        ActionLabel::General,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionLabel::Athletics => "athletics",
            ActionLabel::Badminton => "badminton",
            ActionLabel::Baseball => "baseball",
            ActionLabel::Gymnastics => "gymnastics",
            ActionLabel::Soccer => "soccer",
            ActionLabel::Tennis => "tennis",
            ActionLabel::Volleyball => "volleyball",
            ActionLabel::General => "general",
        }
    }
}

impl fmt::Display for ActionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActionLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "parkour" {
            return Ok(ActionLabel::Gymnastics);
        }
        ActionLabel::ALL
            .iter()
            .copied()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::UnknownAction(s.to_string()))
    }
}

impl Serialize for ActionLabel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ActionLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Where an emitted pose came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    /// Human annotation from the fully-supervised set.
    Annotation,
    /// Raw estimator output.
    #[default]
    Candidate,
    /// Accepted by the correct-pose-selection SVM.
    Svm,
    /// Recovered by mixture clustering.
    Cluster,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Annotation => "annotation",
            Provenance::Candidate => "candidate",
            Provenance::Svm => "svm",
            Provenance::Cluster => "cluster",
        }
    }
}

/// A skeleton hypothesis produced by an estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePose<T> {
    pub skeleton: Skeleton<T>,
    pub score: T,
    pub image_id: String,
    /// Inference stage of origin, starting at 1.
    pub stage: u32,
    pub action: Option<ActionLabel>,
}

impl<T: Real> CandidatePose<T> {
    pub fn new(skeleton: Skeleton<T>, score: T, image_id: impl Into<String>) -> Self {
        CandidatePose {
            skeleton,
            score,
            image_id: image_id.into(),
            stage: 1,
            action: None,
        }
    }

    pub fn with_stage(mut self, stage: u32) -> Self {
        self.stage = stage;
        self
    }

    pub fn with_action(mut self, action: Option<ActionLabel>) -> Self {
        self.action = action;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotated<T> {
    pub image_id: String,
    pub skeleton: Skeleton<T>,
    pub action: ActionLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakImage {
    pub image_id: String,
    pub action: ActionLabel,
}

/// Fully-supervised, weakly-supervised and unsupervised images plus
/// person-free background images.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DatasetSplit<T> {
    pub fs: Vec<Annotated<T>>,
    pub ws: Vec<WeakImage>,
    pub us: Vec<String>,
    pub backgrounds: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SplitSet {
    Fs,
    Ws,
    Us,
    Background,
}

impl fmt::Display for SplitSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitSet::Fs => "FS",
            SplitSet::Ws => "WS",
            SplitSet::Us => "US",
            SplitSet::Background => "background",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    SharedImage {
        image_id: String,
        first: SplitSet,
        second: SplitSet,
    },
    NonFiniteAnnotation {
        image_id: String,
        joint: Joint,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SharedImage {
                image_id,
                first,
                second,
            } => write!(f, "image {image_id} appears in both {first} and {second}"),
            Violation::NonFiniteAnnotation { image_id, joint } => {
                write!(f, "annotation of {image_id} has non-finite {joint}")
            }
        }
    }
}

impl<T: Real> DatasetSplit<T> {
    pub fn ids(&self) -> impl Iterator<Item = (&str, SplitSet)> {
        self.fs
            .iter()
            .map(|a| (a.image_id.as_str(), SplitSet::Fs))
            .chain(self.ws.iter().map(|w| (w.image_id.as_str(), SplitSet::Ws)))
            .chain(self.us.iter().map(|u| (u.as_str(), SplitSet::Us)))
            .chain(
                self.backgrounds
                    .iter()
                    .map(|b| (b.as_str(), SplitSet::Background)),
            )
    }

    pub fn action_of(&self, image_id: &str) -> Option<ActionLabel> {
        self.ws
            .iter()
            .find(|w| w.image_id == image_id)
            .map(|w| w.action)
            .or_else(|| {
                self.fs
                    .iter()
                    .find(|a| a.image_id == image_id)
                    .map(|a| a.action)
            })
    }
}

/// Checks set disjointness and annotation finiteness. Returns one record per
/// breach; an empty list means the split is valid.
pub fn validate_split<T: Real>(split: &DatasetSplit<T>) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen: HashMap<&str, SplitSet> = HashMap::new();
    for (id, set) in split.ids() {
        match seen.get(id) {
            Some(&first) if first != set => out.push(Violation::SharedImage {
                image_id: id.to_string(),
                first,
                second: set,
            }),
            Some(_) => {}
            None => {
                seen.insert(id, set);
            }
        }
    }
    for a in &split.fs {
        if let Some(joint) = a.skeleton.first_non_finite() {
            out.push(Violation::NonFiniteAnnotation {
                image_id: a.image_id.clone(),
                joint,
            });
        }
    }
    out
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn joints_are_a_bijection() {
        for (i, j) in Joint::ALL.iter().enumerate() {
            assert_eq!(j.index(), i);
            assert_eq!(Joint::from_index(i), Some(*j));
            assert_eq!(j.name().parse::<Joint>().unwrap(), *j);
        }
        assert_eq!(Joint::from_index(14), None);
    }

    #[test]
    fn limbs_form_spanning_tree() {
        // 13 edges over 14 nodes, connected => tree.
        let mut parent: Vec<usize> = (0..NUM_JOINTS).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            if p[i] != i {
                let r = find(p, p[i]);
                p[i] = r;
            }
            p[i]
        }
        for (a, b) in LIMBS {
            let (ra, rb) = (find(&mut parent, a.index()), find(&mut parent, b.index()));
            assert_ne!(ra, rb, "cycle through {a}-{b}");
            parent[ra] = rb;
        }
        let root = find(&mut parent, 0);
        assert!((0..NUM_JOINTS).all(|i| find(&mut parent, i) == root));
    }

    #[test]
    fn action_labels_parse() {
        assert_eq!("parkour".parse::<ActionLabel>().unwrap(), ActionLabel::Gymnastics);
        for a in ActionLabel::ALL {
            assert_eq!(a.as_str().parse::<ActionLabel>().unwrap(), a);
        }
        assert!(matches!(
            "curling".parse::<ActionLabel>(),
            Err(Error::UnknownAction(_))
        ));
    }

    #[test]
    fn skeleton_rejects_nan() {
        let mut kp = *fixtures::upright::<f64>().keypoints();
        kp[Joint::LeftWrist.index()].x = f64::NAN;
        assert!(matches!(
            Skeleton::new(kp),
            Err(Error::NonFinite { joint: "l_wrist" })
        ));
    }

    fn split() -> DatasetSplit<f64> {
        DatasetSplit {
            fs: vec![Annotated {
                image_id: "img1".into(),
                skeleton: fixtures::upright(),
                action: ActionLabel::Tennis,
            }],
            ws: vec![WeakImage {
                image_id: "img7".into(),
                action: ActionLabel::Soccer,
            }],
            us: vec!["img9".into()],
            backgrounds: vec!["bg1".into()],
        }
    }

    #[test]
    fn disjoint_split_is_valid() {
        assert!(validate_split(&split()).is_empty());
    }

    #[test]
    fn shared_image_is_reported() {
        let mut s = split();
        s.fs.push(Annotated {
            image_id: "img7".into(),
            skeleton: fixtures::upright(),
            action: ActionLabel::Soccer,
        });
        let v = validate_split(&s);
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().contains("img7"));
    }

    #[test]
    fn nan_annotation_names_joint() {
        let mut s = split();
        let mut kp = *s.fs[0].skeleton.keypoints();
        kp[Joint::RightKnee.index()].y = f64::NAN;
        s.fs[0].skeleton = Skeleton::new_unchecked(kp);
        let v = validate_split(&s);
        assert_eq!(
            v,
            vec![Violation::NonFiniteAnnotation {
                image_id: "img1".into(),
                joint: Joint::RightKnee
            }]
        );
    }
}
