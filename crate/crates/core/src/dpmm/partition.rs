use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Cluster assignment of `n` items with contiguous, non-empty clusters.
///
/// Cluster ids are canonical: clusters are numbered by the first item they
/// contain, so two partitions of the same items compare equal iff they group
/// the items identically.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Partition {
    assignments: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl Partition {
    /// Builds a partition from arbitrary labels, renumbering them canonically.
    pub fn from_labels<L: Copy + Eq + std::hash::Hash>(labels: &[L]) -> Self {
        let mut ids: HashMap<L, usize> = HashMap::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        let assignments = labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let next = ids.len();
                let k = *ids.entry(*l).or_insert(next);
                if k == members.len() {
                    members.push(Vec::new());
                }
                members[k].push(i);
                k
            })
            .collect();
        Partition {
            assignments,
            members,
        }
    }

    pub fn single_cluster(n: usize) -> Self {
        Partition::from_labels(&vec![0usize; n])
    }

    pub fn singletons(n: usize) -> Self {
        Partition::from_labels(&(0..n).collect::<Vec<_>>())
    }

    /// Number of clustered items.
    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn n_clusters(&self) -> usize {
        self.members.len()
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn members(&self, k: usize) -> &[usize] {
        &self.members[k]
    }

    pub fn clusters(&self) -> &[Vec<usize>] {
        &self.members
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.members.iter().map(Vec::len).collect()
    }

    pub fn cluster_of(&self, i: usize) -> usize {
        self.assignments[i]
    }

    /// Relabels clusters through `map` (old id -> new label) and canonicalizes.
    pub fn relabel(&self, map: impl Fn(usize) -> usize) -> Partition {
        let labels: Vec<usize> = self.assignments.iter().map(|&k| map(k)).collect();
        Partition::from_labels(&labels)
    }
}

impl fmt::Display for Partition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .members
            .iter()
            .map(|m| {
                let items: Vec<String> = m.iter().map(usize::to_string).collect();
                format!("{{{}}}", items.join(","))
            })
            .collect();
        f.write_str(&parts.join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_labels() {
        let a = Partition::from_labels(&[7, 7, 3, 9, 3]);
        let b = Partition::from_labels(&['x', 'x', 'y', 'z', 'y']);
        assert_eq!(a, b);
        assert_eq!(a.assignments(), &[0, 0, 1, 2, 1]);
        assert_eq!(a.sizes(), vec![2, 2, 1]);
        assert_eq!(a.sizes().iter().sum::<usize>(), a.len());
        assert_eq!(a.to_string(), "{0,1} {2,4} {3}");
    }

    #[test]
    fn relabel_merges() {
        let p = Partition::from_labels(&[0, 1, 2, 1]);
        let merged = p.relabel(|k| if k == 2 { 0 } else { k });
        assert_eq!(merged.n_clusters(), 2);
        assert_eq!(merged.members(0), &[0, 2]);
    }
}
