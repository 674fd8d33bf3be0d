//! Feature diversity gain of an augmented set relative to its base set.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{FdgError, Result};
use crate::linalg::{center, manifold_volume, SampleMatrix, Volume};
use crate::partition::ClassPartition;
use crate::ClassId;

/// Base volumes at or below this are treated as degenerate.
pub const DEGENERATE_VOLUME: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdgResult {
    /// Volume of the centered base set.
    pub v_base: Volume,
    /// Volume of the centered augmented set on its own.
    pub v_aug: Volume,
    /// Volume of the centered concatenation.
    pub v_joint: Volume,
    pub fdg: f64,
    pub lower_bound: f64,
    pub n_base: usize,
    pub n_aug: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFdgReport {
    pub per_class: BTreeMap<ClassId, FdgResult>,
    pub fdg_tail: f64,
}

/// Relative volume change from appending `aug` to `base`.
///
/// Both inputs are raw. The joint set is the concatenation of the raw columns,
/// centered by its own mean; base and augmentation are centered independently.
pub fn fdg(base: &SampleMatrix, aug: &SampleMatrix) -> Result<FdgResult> {
    if base.dim() != aug.dim() {
        return Err(FdgError::DimensionMismatch {
            expected: base.dim(),
            found: aug.dim(),
        });
    }
    if base.len() < 2 {
        return Err(FdgError::BaseTooSmall { found: base.len() });
    }
    let v_base = manifold_volume(&center(base))?;
    if v_base.value() <= DEGENERATE_VOLUME {
        return Err(FdgError::DegenerateBase {
            volume: v_base.value(),
        });
    }
    let lower_bound = fdg_lower_bound(base.len(), aug.len());
    if aug.is_empty() {
        return Ok(FdgResult {
            v_base,
            v_aug: manifold_volume(&center(aug))?,
            v_joint: v_base,
            fdg: 0.0,
            lower_bound,
            n_base: base.len(),
            n_aug: 0,
        });
    }
    let v_aug = manifold_volume(&center(aug))?;
    let v_joint = manifold_volume(&center(&base.concat(aug)?))?;
    Ok(FdgResult {
        v_base,
        v_aug,
        v_joint,
        fdg: (v_joint.value() - v_base.value()) / v_base.value(),
        lower_bound,
        n_base: base.len(),
        n_aug: aug.len(),
    })
}

/// `-n_aug / (n_base + n_aug)`.
pub fn fdg_lower_bound(n_base: usize, n_aug: usize) -> f64 {
    if n_aug == 0 {
        return 0.0;
    }
    -(n_aug as f64) / ((n_base + n_aug) as f64)
}

/// Per-class gain over the tail classes of `partition` and its unweighted mean.
///
/// Tail classes absent from `aug_by_class` count as unaugmented.
pub fn fdg_tail(
    base_by_class: &BTreeMap<ClassId, SampleMatrix>,
    aug_by_class: &BTreeMap<ClassId, SampleMatrix>,
    partition: &ClassPartition,
) -> Result<TailFdgReport> {
    if partition.tail.is_empty() {
        return Err(FdgError::EmptyTail);
    }
    let tail: Vec<ClassId> = partition.tail.iter().copied().collect();
    let per_class = tail
        .par_iter()
        .map(|&class| {
            let base = base_by_class
                .get(&class)
                .ok_or(FdgError::MissingClass(class))?;
            let result = match aug_by_class.get(&class) {
                Some(aug) => fdg(base, aug),
                None => fdg(base, &SampleMatrix::empty(base.dim())?),
            };
            result.map(|r| (class, r)).map_err(|e| e.for_class(class))
        })
        .collect::<Result<Vec<_>>>()?;
    let fdg_tail = per_class.iter().map(|(_, r)| r.fdg).sum::<f64>() / per_class.len() as f64;
    Ok(TailFdgReport {
        per_class: per_class.into_iter().collect(),
        fdg_tail,
    })
}
