//! Head/tail split, imbalance factor and per-class volume profile.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FdgError, Result};
use crate::linalg::{centered_volume, SampleMatrix, Volume};
use crate::ClassId;

pub const DEFAULT_HEAD_THRESHOLD: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassPartition {
    /// Classes by descending count, ties by ascending id.
    pub ordered_classes: Vec<ClassId>,
    /// Number of head classes.
    pub h: usize,
    /// Fraction of all samples held by the head classes.
    pub h_r: f64,
    pub threshold: f64,
    pub head: BTreeSet<ClassId>,
    pub tail: BTreeSet<ClassId>,
    pub counts: BTreeMap<ClassId, usize>,
}

impl ClassPartition {
    pub fn is_tail(&self, class: ClassId) -> bool {
        self.tail.contains(&class)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceProfile {
    pub imbalance_factor: f64,
    pub counts: BTreeMap<ClassId, usize>,
    pub semantic_scales: BTreeMap<ClassId, Volume>,
    /// Class ids by ascending volume, ties by ascending id.
    pub scale_ranking: Vec<ClassId>,
}

/// Picks the smallest head prefix whose sample share strictly exceeds `threshold`.
pub fn partition_head_tail(
    counts: &BTreeMap<ClassId, usize>,
    threshold: f64,
) -> Result<ClassPartition> {
    if counts.len() < 2 {
        return Err(FdgError::TooFewClasses {
            needed: 2,
            found: counts.len(),
        });
    }
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(FdgError::InvalidThreshold(threshold));
    }
    check_counts(counts)?;

    let mut ordered: Vec<(ClassId, usize)> = counts.iter().map(|(&c, &n)| (c, n)).collect();
    ordered.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let total: usize = ordered.iter().map(|(_, n)| n).sum();

    let mut cumulative = 0usize;
    let mut h = ordered.len();
    let mut h_r = 1.0;
    for (i, (_, n)) in ordered.iter().enumerate() {
        cumulative += n;
        let ratio = cumulative as f64 / total as f64;
        if ratio > threshold {
            h = i + 1;
            h_r = ratio;
            break;
        }
    }
    if h == ordered.len() {
        return Err(FdgError::NoTailClasses { head: h });
    }
    Ok(ClassPartition {
        ordered_classes: ordered.iter().map(|(c, _)| *c).collect(),
        h,
        h_r,
        threshold,
        head: ordered[..h].iter().map(|(c, _)| *c).collect(),
        tail: ordered[h..].iter().map(|(c, _)| *c).collect(),
        counts: counts.clone(),
    })
}

/// Largest class count over smallest.
pub fn imbalance_factor(counts: &BTreeMap<ClassId, usize>) -> Result<f64> {
    if counts.is_empty() {
        return Err(FdgError::TooFewClasses {
            needed: 1,
            found: 0,
        });
    }
    check_counts(counts)?;
    let max = counts.values().max().copied().unwrap_or(1);
    let min = counts.values().min().copied().unwrap_or(1);
    Ok(max as f64 / min as f64)
}

/// Per-class manifold volume ("semantic scale") and its ranking.
pub fn semantic_scale_profile(sets: &BTreeMap<ClassId, SampleMatrix>) -> Result<ImbalanceProfile> {
    let counts: BTreeMap<ClassId, usize> = sets.iter().map(|(&c, m)| (c, m.len())).collect();
    let imbalance_factor = imbalance_factor(&counts)?;
    let entries: Vec<(&ClassId, &SampleMatrix)> = sets.iter().collect();
    let semantic_scales = entries
        .par_iter()
        .map(|&(&class, m)| {
            centered_volume(m)
                .map(|v| (class, v))
                .map_err(|e| e.for_class(class))
        })
        .collect::<Result<BTreeMap<_, _>>>()?;
    let mut scale_ranking: Vec<ClassId> = semantic_scales.keys().copied().collect();
    scale_ranking.sort_by(|a, b| {
        semantic_scales[a]
            .value()
            .total_cmp(&semantic_scales[b].value())
            .then(a.cmp(b))
    });
    Ok(ImbalanceProfile {
        imbalance_factor,
        counts,
        semantic_scales,
        scale_ranking,
    })
}

fn check_counts(counts: &BTreeMap<ClassId, usize>) -> Result<()> {
    match counts.iter().find(|(_, &n)| n == 0) {
        Some((&class, _)) => Err(FdgError::ZeroCount { class }),
        None => Ok(()),
    }
}
