//! Tail-class augmenters: mixing, patch pasting, variance transfer and feature fusion.
//!
//! Every augmenter is a pure function of its inputs, parameters and seed. The
//! drivers at the bottom of the module ([`augment_class`], [`augment_balanced`])
//! choose partners according to each scheme's pairing rule and label every
//! produced sample with the tail class.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FdgError, Result};
use crate::linalg::SampleMatrix;
use crate::partition::ClassPartition;
use crate::{seeded_rng, ClassId};

/// Samples per class, one column each.
pub type ClassSets = BTreeMap<ClassId, SampleMatrix>;

pub const DEFAULT_REMIX_KAPPA: f64 = 3.0;
pub const DEFAULT_MIX_ALPHA: f64 = 1.0;

/// Augmented samples each class needs to reach the largest class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalancePlan {
    pub quota: BTreeMap<ClassId, usize>,
}

impl BalancePlan {
    /// Drops every class not in `classes`.
    pub fn restricted_to(&self, classes: &BTreeSet<ClassId>) -> BalancePlan {
        BalancePlan {
            quota: self
                .quota
                .iter()
                .filter(|(c, _)| classes.contains(c))
                .map(|(&c, &q)| (c, q))
                .collect(),
        }
    }

    pub fn total(&self) -> usize {
        self.quota.values().sum()
    }
}

pub fn balance_plan(counts: &BTreeMap<ClassId, usize>) -> BalancePlan {
    let max = counts.values().max().copied().unwrap_or(0);
    BalancePlan {
        quota: counts.iter().map(|(&c, &n)| (c, max - n)).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingRule {
    /// Partners come from classes holding more than `kappa * n_t` samples.
    Remix3nt,
    /// Partners come from the head class nearest to the tail class.
    MostSimilarHead,
    /// Partners are drawn from the whole long-tailed dataset.
    LongtailBackground,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub tail_index: usize,
    pub partner_class: ClassId,
    pub partner_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairingPlan {
    pub tail_class: ClassId,
    pub rule: PairingRule,
    pub pairs: Vec<Pair>,
}

/// Pairs `count` tail samples (cycling through the tail class) with partners
/// drawn uniformly from the union of relative-head classes.
pub fn remix_pairs<R: Rng + ?Sized>(
    classes: &ClassSets,
    tail_class: ClassId,
    kappa: f64,
    count: usize,
    rng: &mut R,
) -> Result<PairingPlan> {
    let tail = classes
        .get(&tail_class)
        .ok_or(FdgError::MissingClass(tail_class))?;
    let n_t = tail.len();
    let limit = kappa * n_t as f64;
    let heads: Vec<(ClassId, usize)> = classes
        .iter()
        .filter(|(&c, m)| c != tail_class && m.len() as f64 > limit)
        .map(|(&c, m)| (c, m.len()))
        .collect();
    if heads.is_empty() {
        return Err(FdgError::NoRelativeHead {
            tail: tail_class,
            tail_count: n_t,
            kappa,
        });
    }
    let pairs = draw_pairs(n_t, &heads, count, rng);
    Ok(PairingPlan {
        tail_class,
        rule: PairingRule::Remix3nt,
        pairs,
    })
}

/// Background partners sampled in proportion to class counts.
pub fn background_pairs<R: Rng + ?Sized>(
    classes: &ClassSets,
    tail_class: ClassId,
    count: usize,
    rng: &mut R,
) -> Result<PairingPlan> {
    let tail = classes
        .get(&tail_class)
        .ok_or(FdgError::MissingClass(tail_class))?;
    let pool: Vec<(ClassId, usize)> = classes.iter().map(|(&c, m)| (c, m.len())).collect();
    Ok(PairingPlan {
        tail_class,
        rule: PairingRule::LongtailBackground,
        pairs: draw_pairs(tail.len(), &pool, count, rng),
    })
}

/// Partners drawn uniformly from a single head class.
pub fn similar_head_pairs<R: Rng + ?Sized>(
    classes: &ClassSets,
    tail_class: ClassId,
    head_class: ClassId,
    count: usize,
    rng: &mut R,
) -> Result<PairingPlan> {
    let tail = classes
        .get(&tail_class)
        .ok_or(FdgError::MissingClass(tail_class))?;
    let head = classes
        .get(&head_class)
        .ok_or(FdgError::MissingClass(head_class))?;
    Ok(PairingPlan {
        tail_class,
        rule: PairingRule::MostSimilarHead,
        pairs: draw_pairs(tail.len(), &[(head_class, head.len())], count, rng),
    })
}

fn draw_pairs<R: Rng + ?Sized>(
    n_tail: usize,
    partners: &[(ClassId, usize)],
    count: usize,
    rng: &mut R,
) -> Vec<Pair> {
    let total: usize = partners.iter().map(|(_, n)| n).sum();
    if n_tail == 0 || total == 0 {
        return Vec::new();
    }
    (0..count)
        .map(|i| {
            let mut k = rng.random_range(0..total);
            let mut partner = partners[0];
            for &p in partners {
                if k < p.1 {
                    partner = p;
                    break;
                }
                k -= p.1;
            }
            Pair {
                tail_index: i % n_tail,
                partner_class: partner.0,
                partner_index: k,
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub sample: Vec<f64>,
    pub label: ClassId,
    /// Set when the operation produced a sample with no tail content.
    pub degenerate: bool,
}

/// `lambda * tail + (1 - lambda) * head`, labelled with the tail class.
pub fn mix_interpolate(
    tail: &[f64],
    head: &[f64],
    lambda: f64,
    tail_label: ClassId,
) -> Result<LabeledSample> {
    if tail.len() != head.len() {
        return Err(FdgError::DimensionMismatch {
            expected: tail.len(),
            found: head.len(),
        });
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(FdgError::InvalidParameter(format!(
            "mixing weight {lambda} outside [0, 1]"
        )));
    }
    let sample = tail
        .iter()
        .zip(head)
        .map(|(t, h)| lambda * t + (1.0 - lambda) * h)
        .collect();
    Ok(LabeledSample {
        sample,
        label: tail_label,
        degenerate: lambda == 0.0,
    })
}

/// Layout of a flattened `height x width x channels` grid (row-major, channels last).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridShape {
    pub height: usize,
    pub width: usize,
    #[serde(default = "one")]
    pub channels: usize,
}

fn one() -> usize {
    1
}

impl GridShape {
    /// A single row holding every dimension.
    pub fn row(dim: usize) -> Self {
        Self {
            height: 1,
            width: dim,
            channels: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub top: usize,
    pub left: usize,
    pub height: usize,
    pub width: usize,
}

impl Region {
    pub fn area(&self) -> usize {
        self.height * self.width
    }
}

/// Copies `region` of `foreground` over `background`; the result carries the
/// foreground's (tail) label.
pub fn patch_paste(
    background: &[f64],
    foreground: &[f64],
    shape: GridShape,
    region: Region,
    foreground_label: ClassId,
) -> Result<LabeledSample> {
    if background.len() != shape.len() || foreground.len() != shape.len() {
        return Err(FdgError::ShapeMismatch(format!(
            "grids of {} and {} values do not match {}x{}x{}",
            background.len(),
            foreground.len(),
            shape.height,
            shape.width,
            shape.channels
        )));
    }
    if region.top + region.height > shape.height || region.left + region.width > shape.width {
        return Err(FdgError::RegionOutOfBounds {
            region: format!(
                "{}x{}@({},{})",
                region.height, region.width, region.top, region.left
            ),
            height: shape.height,
            width: shape.width,
        });
    }
    let mut sample = background.to_vec();
    let c = shape.channels;
    for row in region.top..region.top + region.height {
        let start = (row * shape.width + region.left) * c;
        let end = start + region.width * c;
        sample[start..end].copy_from_slice(&foreground[start..end]);
    }
    Ok(LabeledSample {
        sample,
        label: foreground_label,
        degenerate: region.area() == 0,
    })
}

/// CutMix-style box: area ratio `1 - lambda` with `lambda ~ Beta(alpha, alpha)`,
/// placed uniformly among positions that keep it inside the grid.
pub fn cutmix_region<R: Rng + ?Sized>(shape: GridShape, alpha: f64, rng: &mut R) -> Result<Region> {
    let lambda = beta(alpha)?.sample(rng);
    let cut = (1.0 - lambda).sqrt();
    let height = ((shape.height as f64 * cut).round() as usize).min(shape.height);
    let width = ((shape.width as f64 * cut).round() as usize).min(shape.width);
    let top = rng.random_range(0..=shape.height - height);
    let left = rng.random_range(0..=shape.width - width);
    Ok(Region {
        top,
        left,
        height,
        width,
    })
}

/// Head class whose mean is nearest (Euclidean) to `tail_mean`; ties go to the smaller id.
pub fn most_similar_head(
    tail_mean: &[f64],
    head_means: &BTreeMap<ClassId, Vec<f64>>,
) -> Result<ClassId> {
    let mut best: Option<(ClassId, f64)> = None;
    for (&class, mean) in head_means {
        if mean.len() != tail_mean.len() {
            return Err(FdgError::DimensionMismatch {
                expected: tail_mean.len(),
                found: mean.len(),
            });
        }
        let dist: f64 = mean
            .iter()
            .zip(tail_mean)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if best.is_none_or(|(_, d)| dist < d) {
            best = Some((class, dist));
        }
    }
    best.map(|(c, _)| c).ok_or(FdgError::EmptyHead)
}

/// Draws from a diagonal Gaussian with the tail mean and the donor's per-dimension variance.
pub fn variance_transfer<R: Rng + ?Sized>(
    tail: &SampleMatrix,
    donor: &SampleMatrix,
    count: usize,
    rng: &mut R,
) -> Result<SampleMatrix> {
    check_dims(tail, donor)?;
    if count == 0 {
        return SampleMatrix::empty(tail.dim());
    }
    if donor.len() < 2 {
        return Err(FdgError::DonorTooSmall { found: donor.len() });
    }
    let mean = tail.mean();
    let donor_mean = donor.mean();
    let n = donor.len() as f64;
    let sd: Vec<f64> = (0..donor.dim())
        .map(|i| {
            let ss: f64 = donor
                .columns()
                .map(|c| (c[i] - donor_mean[i]).powi(2))
                .sum();
            (ss / (n - 1.0)).sqrt()
        })
        .collect();
    if sd.iter().all(|&s| s == 0.0) {
        return Err(FdgError::DegenerateDonor);
    }
    let mut data = Vec::with_capacity(count * tail.dim());
    for _ in 0..count {
        for (m, s) in mean.iter().zip(&sd) {
            let z: f64 = StandardNormal.sample(rng);
            data.push(m + s * z);
        }
    }
    SampleMatrix::from_sample_major(tail.dim(), count, data)
}

/// `tail mean + (head sample - head mean)` for head samples drawn with replacement.
///
/// This is a mean/residual stand-in for a learned decomposition into
/// class-specific and class-generic features.
pub fn feature_fusion<R: Rng + ?Sized>(
    tail: &SampleMatrix,
    head: &SampleMatrix,
    count: usize,
    rng: &mut R,
) -> Result<SampleMatrix> {
    check_dims(tail, head)?;
    if head.is_empty() {
        return Err(FdgError::TooFewSamples {
            needed: 1,
            found: 0,
        });
    }
    let tail_mean = tail.mean();
    let head_mean = head.mean();
    let mut data = Vec::with_capacity(count * tail.dim());
    for _ in 0..count {
        let h = head.column(rng.random_range(0..head.len()));
        for i in 0..tail.dim() {
            data.push(tail_mean[i] + (h[i] - head_mean[i]));
        }
    }
    SampleMatrix::from_sample_major(tail.dim(), count, data)
}

fn check_dims(a: &SampleMatrix, b: &SampleMatrix) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(FdgError::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

fn beta(alpha: f64) -> Result<Beta<f64>> {
    Beta::new(alpha, alpha)
        .map_err(|e| FdgError::InvalidParameter(format!("beta alpha {alpha}: {e}")))
}

/// Augmentation scheme and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AugmenterKind {
    /// Head/tail interpolation with the tail label kept.
    RemixMix {
        #[serde(default = "default_alpha")]
        alpha: f64,
        #[serde(default = "default_kappa")]
        kappa: f64,
    },
    /// Tail patch pasted onto a background drawn from the whole dataset.
    PatchPaste {
        #[serde(default = "default_alpha")]
        alpha: f64,
        /// Grid layout of each sample; a single row when absent.
        #[serde(default)]
        shape: Option<GridShape>,
    },
    /// Tail mean with the nearest head class's per-dimension variance.
    VarianceTransfer,
    /// Tail mean plus residuals of the nearest head class.
    FeatureFusion,
}

fn default_alpha() -> f64 {
    DEFAULT_MIX_ALPHA
}

fn default_kappa() -> f64 {
    DEFAULT_REMIX_KAPPA
}

impl Default for AugmenterKind {
    fn default() -> Self {
        AugmenterKind::RemixMix {
            alpha: DEFAULT_MIX_ALPHA,
            kappa: DEFAULT_REMIX_KAPPA,
        }
    }
}

impl AugmenterKind {
    pub fn name(&self) -> &'static str {
        match self {
            AugmenterKind::RemixMix { .. } => "remix_mix",
            AugmenterKind::PatchPaste { .. } => "patch_paste",
            AugmenterKind::VarianceTransfer => "variance_transfer",
            AugmenterKind::FeatureFusion => "feature_fusion",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub method: AugmenterKind,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Augmented samples for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSet {
    pub class: ClassId,
    pub samples: SampleMatrix,
    pub provenance: Provenance,
    /// Samples flagged degenerate (empty paste region, zero mixing weight).
    pub degenerate: usize,
    pub fdg: Option<f64>,
}

/// Produces `count` augmented samples for `class`.
///
/// The random stream is derived from `(seed, class)`, so classes can be
/// generated independently and in any order.
pub fn augment_class(
    classes: &ClassSets,
    partition: &ClassPartition,
    class: ClassId,
    count: usize,
    kind: &AugmenterKind,
    seed: u64,
) -> Result<AugmentedSet> {
    let tail = classes.get(&class).ok_or(FdgError::MissingClass(class))?;
    let mut rng = seeded_rng(seed, u64::from(class));
    let provenance = Provenance {
        method: kind.clone(),
        seed,
        note: None,
    };
    let mut degenerate = 0;
    let samples = match kind {
        AugmenterKind::RemixMix { alpha, kappa } => {
            let dist = beta(*alpha)?;
            let plan = remix_pairs(classes, class, *kappa, count, &mut rng)?;
            let mut data = Vec::with_capacity(count * tail.dim());
            for pair in &plan.pairs {
                let lambda = dist.sample(&mut rng);
                let head = classes[&pair.partner_class].column(pair.partner_index);
                let mixed = mix_interpolate(tail.column(pair.tail_index), head, lambda, class)?;
                degenerate += usize::from(mixed.degenerate);
                data.extend(mixed.sample);
            }
            SampleMatrix::from_sample_major(tail.dim(), plan.pairs.len(), data)?
        }
        AugmenterKind::PatchPaste { alpha, shape } => {
            let shape = shape.unwrap_or(GridShape::row(tail.dim()));
            if shape.len() != tail.dim() {
                return Err(FdgError::ShapeMismatch(format!(
                    "grid {}x{}x{} does not hold {} values",
                    shape.height,
                    shape.width,
                    shape.channels,
                    tail.dim()
                )));
            }
            let plan = background_pairs(classes, class, count, &mut rng)?;
            let mut data = Vec::with_capacity(count * tail.dim());
            for pair in &plan.pairs {
                let region = cutmix_region(shape, *alpha, &mut rng)?;
                let bg = classes[&pair.partner_class].column(pair.partner_index);
                let out = patch_paste(bg, tail.column(pair.tail_index), shape, region, class)?;
                degenerate += usize::from(out.degenerate);
                data.extend(out.sample);
            }
            SampleMatrix::from_sample_major(tail.dim(), plan.pairs.len(), data)?
        }
        AugmenterKind::VarianceTransfer => {
            let donor = nearest_head(classes, partition, class)?;
            variance_transfer(tail, &classes[&donor], count, &mut rng)?
        }
        AugmenterKind::FeatureFusion => {
            let head = nearest_head(classes, partition, class)?;
            feature_fusion(tail, &classes[&head], count, &mut rng)?
        }
    };
    let note = match kind {
        AugmenterKind::FeatureFusion => {
            Some("mean/residual decomposition in place of a learned encoder".to_string())
        }
        _ => None,
    };
    Ok(AugmentedSet {
        class,
        samples,
        provenance: Provenance { note, ..provenance },
        degenerate,
        fdg: None,
    })
}

/// Runs [`augment_class`] for every class with a positive quota.
pub fn augment_balanced(
    classes: &ClassSets,
    partition: &ClassPartition,
    plan: &BalancePlan,
    kind: &AugmenterKind,
    seed: u64,
) -> Result<BTreeMap<ClassId, AugmentedSet>> {
    plan.quota
        .iter()
        .filter(|(_, &q)| q > 0)
        .map(|(&class, &q)| {
            augment_class(classes, partition, class, q, kind, seed)
                .map(|set| (class, set))
                .map_err(|e| e.for_class(class))
        })
        .collect()
}

/// Nearest head class to `class`, excluding `class` itself.
pub fn nearest_head(
    classes: &ClassSets,
    partition: &ClassPartition,
    class: ClassId,
) -> Result<ClassId> {
    let tail = classes.get(&class).ok_or(FdgError::MissingClass(class))?;
    let head_means: BTreeMap<ClassId, Vec<f64>> = partition
        .head
        .iter()
        .filter(|&&c| c != class)
        .filter_map(|c| classes.get(c).map(|m| (*c, m.mean().as_slice().to_vec())))
        .collect();
    most_similar_head(tail.mean().as_slice(), &head_means)
}
