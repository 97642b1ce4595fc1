use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Combinatorics of one level: the real-line order of the landing family,
/// the itineraries of the next-level branches and the depth of every label.
///
/// Labels index `depths`. Itineraries are indexed by next-level branch label
/// (0 = central) and start with the label 0 of `T^{n+1}` itself.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CombinatoricsRecord {
    pub level: usize,
    pub ordering: Vec<usize>,
    pub itineraries: Vec<Vec<usize>>,
    pub depths: Vec<usize>,
}

impl CombinatoricsRecord {
    /// Canonical JSON: fixed field order, integers only.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }

    /// Number of landing intervals.
    pub fn landing_count(&self) -> usize {
        self.ordering.len()
    }

    /// Return times of the next-level branches under `G_n`.
    pub fn return_times(&self) -> Vec<usize> {
        self.itineraries.iter().map(Vec::len).collect()
    }

    /// Structural admissibility: the ordering is a permutation of the labels,
    /// every itinerary starts in `T^{n+1}`, stays out of it until it returns
    /// and is no longer than `return_cap`.
    pub fn check_admissible(&self, return_cap: usize) -> Result<()> {
        let m = self.ordering.len();
        let fail = |why: String| Error::NotRealized { deepest: 0, reason: why };
        if m == 0 || self.depths.len() != m {
            return Err(fail(format!("level {}: label set and depth map disagree", self.level)));
        }
        let mut seen = vec![false; m];
        for &l in &self.ordering {
            if l >= m || std::mem::replace(&mut seen[l], true) {
                return Err(fail(format!("level {}: ordering is not a permutation", self.level)));
            }
        }
        if self.itineraries.is_empty() {
            return Err(fail(format!("level {}: no central itinerary", self.level)));
        }
        for (i, it) in self.itineraries.iter().enumerate() {
            if it.is_empty() || it.len() > return_cap {
                return Err(fail(format!(
                    "level {}: itinerary {i} never returns within {return_cap}",
                    self.level
                )));
            }
            if it[0] != 0 || it[1..].iter().any(|&l| l == 0 || l >= m) {
                return Err(fail(format!("level {}: itinerary {i} is inconsistent", self.level)));
            }
        }
        Ok(())
    }
}

type Canonical = (Vec<usize>, Vec<usize>, Vec<Vec<usize>>);

fn canonical(rec: &CombinatoricsRecord, cutoff: usize, reflect: bool) -> Canonical {
    let keep = |l: usize| l == 0 || rec.depths.get(l).is_some_and(|&d| d <= cutoff);
    let mut ord: Vec<usize> = rec.ordering.iter().copied().filter(|&l| keep(l)).collect();
    if reflect {
        ord.reverse();
    }
    let mut relabel = vec![usize::MAX; rec.depths.len().max(1)];
    relabel[0] = 0;
    let mut next = 1;
    for &l in &ord {
        if l != 0 {
            relabel[l] = next;
            next += 1;
        }
    }
    let ord: Vec<usize> = ord.into_iter().map(|l| relabel[l]).collect();
    let mut its: Vec<Vec<usize>> = rec
        .itineraries
        .iter()
        .map(|it| it.iter().copied().filter(|&l| keep(l)).map(|l| relabel[l]).collect())
        .collect();
    let central = if its.is_empty() { Vec::new() } else { its.remove(0) };
    its.sort();
    (ord, central, its)
}

/// Whether two records coincide after deleting labels of depth greater than
/// `cutoff` and relabeling.
///
/// The relabeling fixes 0, commutes with itineraries and preserves the
/// real-line order up to the reflection `x -> -x`, under which an even map is
/// conjugate to itself.
pub fn essentially_equivalent(
    k1: &CombinatoricsRecord,
    k2: &CombinatoricsRecord,
    cutoff: usize,
) -> bool {
    let c1 = canonical(k1, cutoff, false);
    c1 == canonical(k2, cutoff, false) || c1 == canonical(k2, cutoff, true)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    Finite(usize),
    Unbounded,
}

/// Componentwise maxima over a sequence of records.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EssentialBound {
    pub branch_count_bound: Bound,
    pub depth_bound: Bound,
    pub return_time_bound: Bound,
    /// Some component grows strictly from each record to the next (at least
    /// three records): the combinatorics looks essentially unbounded.
    pub growing: bool,
}

pub fn essential_bound(records: &[CombinatoricsRecord]) -> EssentialBound {
    let branch: Vec<usize> = records.iter().map(|r| r.landing_count()).collect();
    let depth: Vec<usize> = records
        .iter()
        .map(|r| {
            r.itineraries
                .iter()
                .flatten()
                .map(|&l| r.depths.get(l).copied().unwrap_or(0))
                .max()
                .unwrap_or(0)
        })
        .collect();
    let ret: Vec<usize> =
        records.iter().map(|r| r.return_times().into_iter().max().unwrap_or(0)).collect();
    let max = |v: &[usize]| Bound::Finite(v.iter().copied().max().unwrap_or(0));
    let grows = |v: &[usize]| v.len() >= 3 && v.windows(2).all(|w| w[1] > w[0]);
    EssentialBound {
        branch_count_bound: max(&branch),
        depth_bound: max(&depth),
        return_time_bound: max(&ret),
        growing: grows(&branch) || grows(&depth) || grows(&ret),
    }
}
