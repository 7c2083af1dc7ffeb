//! Line-delimited JSON pose records, one pose per line.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActionLabel, Annotated, CandidatePose, Point, Provenance, Skeleton, NUM_JOINTS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseRecord {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<ActionLabel>,
    pub keypoints: [[f64; 2]; NUM_JOINTS],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default)]
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage: Option<u32>,
}

impl PoseRecord {
    pub fn from_skeleton(image_id: impl Into<String>, s: &Skeleton<f64>, provenance: Provenance) -> Self {
        PoseRecord {
            image_id: image_id.into(),
            action: None,
            keypoints: s.keypoints().map(|p| [p.x, p.y]),
            score: None,
            provenance,
            stage: None,
        }
    }

    pub fn from_candidate(c: &CandidatePose<f64>) -> Self {
        PoseRecord {
            action: c.action,
            score: Some(c.score),
            stage: Some(c.stage),
            ..PoseRecord::from_skeleton(c.image_id.clone(), &c.skeleton, Provenance::Candidate)
        }
    }

    pub fn from_annotation(a: &Annotated<f64>) -> Self {
        PoseRecord {
            action: Some(a.action),
            ..PoseRecord::from_skeleton(a.image_id.clone(), &a.skeleton, Provenance::Annotation)
        }
    }

    pub fn skeleton(&self) -> Result<Skeleton<f64>> {
        Skeleton::new(self.keypoints.map(|[x, y]| Point::new(x, y)))
    }

    /// Missing scores read as 0 and missing stages as 1.
    pub fn to_candidate(&self) -> Result<CandidatePose<f64>> {
        Ok(CandidatePose::new(self.skeleton()?, self.score.unwrap_or(0.0), self.image_id.clone())
            .with_stage(self.stage.unwrap_or(1))
            .with_action(self.action))
    }
}

/// Parses records from text. Blank lines are skipped; errors name the
/// 1-based line.
pub fn parse_records(text: &str) -> Result<Vec<PoseRecord>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: PoseRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        rec.skeleton().map_err(|e| Error::Parse {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn format_records(records: &[PoseRecord]) -> Result<String> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    Ok(s)
}

pub fn read_records(path: &Path) -> Result<Vec<PoseRecord>> {
    parse_records(&std::fs::read_to_string(path)?)
}

pub fn write_records(path: &Path, records: &[PoseRecord]) -> Result<()> {
    super::write_atomic(path, format_records(records)?.as_bytes())
}
