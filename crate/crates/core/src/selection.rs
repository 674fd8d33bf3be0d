//! Targeted selection of augmented samples.
//!
//! A candidate pool is clustered with k-means; clusters are then added one at a
//! time, each step taking the cluster whose addition gives the largest (or
//! smallest) FDG against the base class. Sweeps repeat this, or plain seeded
//! augmentation, to build many augmented sets and keep a subset whose FDG
//! values are spread evenly.

use std::collections::BTreeMap;

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{
    augment_balanced, augment_class, balance_plan, AugmentedSet, AugmenterKind, ClassSets,
};
use crate::error::{FdgError, Result};
use crate::fdg::{fdg, fdg_tail, TailFdgReport, DEGENERATE_VOLUME};
use crate::linalg::{centered_volume, SampleMatrix};
use crate::partition::ClassPartition;
use crate::{seeded_rng, ClassId};

pub const DEFAULT_CLUSTERS: usize = 500;
pub const KMEANS_MAX_ITERS: usize = 100;
pub const KMEANS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSet {
    pub k: usize,
    /// Cluster id of each pool sample.
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub sizes: Vec<usize>,
    pub iterations: usize,
    /// Sum of squared distances to assigned centroids.
    pub distortion: f64,
}

impl ClusterSet {
    /// Pool indices in cluster `c`, ascending.
    pub fn members(&self, c: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == c)
            .map(|(i, _)| i)
            .collect()
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's algorithm from a k-means++ start.
pub fn kmeans(pool: &SampleMatrix, k: usize, seed: u64) -> Result<ClusterSet> {
    if k == 0 {
        return Err(FdgError::InvalidParameter("k must be at least 1".into()));
    }
    let n = pool.len();
    if n < k {
        return Err(FdgError::TooFewSamples { needed: k, found: n });
    }
    let mut rng = seeded_rng(seed, 0);
    let mut centroids = plus_plus_init(pool, k, &mut rng);
    let mut assignments = vec![0usize; n];
    let mut iterations = 0;
    loop {
        iterations += 1;
        for (i, point) in pool.columns().enumerate() {
            assignments[i] = nearest(point, &centroids).0;
        }
        repair_empty(pool, &mut assignments, &centroids, k);

        let updated = cluster_means(pool, &assignments, k);
        let movement = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        if movement < KMEANS_TOLERANCE || iterations >= KMEANS_MAX_ITERS {
            break;
        }
    }
    let mut sizes = vec![0usize; k];
    for &a in &assignments {
        sizes[a] += 1;
    }
    let distortion = pool
        .columns()
        .zip(&assignments)
        .map(|(p, &a)| sq_dist(p, &centroids[a]))
        .sum();
    Ok(ClusterSet {
        k,
        assignments,
        centroids,
        sizes,
        iterations,
        distortion,
    })
}

fn plus_plus_init<R: Rng + ?Sized>(pool: &SampleMatrix, k: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let n = pool.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![pool.column(first).to_vec()];
    let mut d2: Vec<f64> = pool
        .columns()
        .map(|p| sq_dist(p, &centroids[0]))
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut r = rng.random::<f64>() * total;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(i);
                    if r < w {
                        break;
                    }
                    r -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            // every remaining point coincides with a centroid
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[next] = true;
        let c = pool.column(next).to_vec();
        for (i, p) in pool.columns().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Gives each empty cluster the point farthest from its own centroid.
fn repair_empty(
    pool: &SampleMatrix,
    assignments: &mut [usize],
    centroids: &[Vec<f64>],
    k: usize,
) {
    let mut sizes = vec![0usize; k];
    for &a in assignments.iter() {
        sizes[a] += 1;
    }
    for empty in 0..k {
        if sizes[empty] > 0 {
            continue;
        }
        let mut donor: Option<(usize, f64)> = None;
        for (i, p) in pool.columns().enumerate() {
            let a = assignments[i];
            if sizes[a] < 2 {
                continue;
            }
            let d = sq_dist(p, &centroids[a]);
            if donor.is_none_or(|(_, best)| d > best) {
                donor = Some((i, d));
            }
        }
        if let Some((i, _)) = donor {
            sizes[assignments[i]] -= 1;
            assignments[i] = empty;
            sizes[empty] = 1;
        }
    }
}

fn cluster_means(pool: &SampleMatrix, assignments: &[usize], k: usize) -> Vec<Vec<f64>> {
    let d = pool.dim();
    let mut sums = vec![vec![0.0; d]; k];
    let mut sizes = vec![0usize; k];
    for (p, &a) in pool.columns().zip(assignments) {
        sizes[a] += 1;
        for (s, v) in sums[a].iter_mut().zip(p) {
            *s += v;
        }
    }
    for (s, &n) in sums.iter_mut().zip(&sizes) {
        if n > 0 {
            s.iter_mut().for_each(|v| *v /= n as f64);
        }
    }
    sums
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

impl Direction {
    fn prefers(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            Direction::Maximize => candidate > incumbent,
            Direction::Minimize => candidate < incumbent,
        }
    }
}

/// How candidate clusters are scored during greedy selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluation {
    /// Rebuild and factor the joint matrix for every candidate.
    #[default]
    Direct,
    /// Combine cached first and second moments; `d x d` factorization per candidate.
    Moments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPlan {
    pub direction: Direction,
    /// Sample count after which picks switch to the opposite direction.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub switch_after: Option<usize>,
    /// Cluster ids in pick order.
    pub picked: Vec<usize>,
    /// FDG of (picked so far) after each pick, untrimmed.
    pub step_fdg: Vec<f64>,
    /// Direction used at each pick.
    pub step_direction: Vec<Direction>,
    pub quota: usize,
    pub achieved_fdg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Selected pool indices, ascending.
    pub indices: Vec<usize>,
    pub samples: SampleMatrix,
    pub plan: SelectionPlan,
}

/// Greedy cluster-by-cluster selection of `quota` pool samples.
pub fn greedy_select(
    base: &SampleMatrix,
    clusters: &ClusterSet,
    pool: &SampleMatrix,
    quota: usize,
    direction: Direction,
) -> Result<Selection> {
    greedy_select_with(base, clusters, pool, quota, direction, None, Evaluation::Direct)
}

/// Like [`greedy_select`], but once `switch_after` samples have been picked the
/// remaining picks use the opposite direction.
pub fn greedy_select_with(
    base: &SampleMatrix,
    clusters: &ClusterSet,
    pool: &SampleMatrix,
    quota: usize,
    direction: Direction,
    switch_after: Option<usize>,
    evaluation: Evaluation,
) -> Result<Selection> {
    if pool.dim() != base.dim() {
        return Err(FdgError::DimensionMismatch {
            expected: base.dim(),
            found: pool.dim(),
        });
    }
    if clusters.assignments.len() != pool.len() {
        return Err(FdgError::InvalidParameter(format!(
            "cluster assignments cover {} samples, pool has {}",
            clusters.assignments.len(),
            pool.len()
        )));
    }
    if quota > pool.len() {
        return Err(FdgError::InsufficientPool {
            available: pool.len(),
            quota,
        });
    }
    // surfaces degenerate-base errors even when nothing gets picked
    fdg(base, &SampleMatrix::empty(base.dim())?)?;

    let members: Vec<Vec<usize>> = (0..clusters.k).map(|c| clusters.members(c)).collect();
    let scorer = match evaluation {
        Evaluation::Direct => None,
        Evaluation::Moments => Some(MomentScorer::new(base, pool, &members)?),
    };

    let mut picked: Vec<usize> = Vec::new();
    let mut chosen: Vec<usize> = Vec::new();
    let mut step_fdg = Vec::new();
    let mut step_direction = Vec::new();
    let mut remaining: Vec<usize> = (0..clusters.k).filter(|&c| !members[c].is_empty()).collect();

    while chosen.len() < quota {
        let dir = match switch_after {
            Some(s) if chosen.len() >= s => opposite(direction),
            _ => direction,
        };
        let scores = remaining
            .par_iter()
            .map(|&c| {
                let score = match &scorer {
                    Some(s) => s.fdg(&picked, c),
                    None => {
                        let mut idx = chosen.clone();
                        idx.extend_from_slice(&members[c]);
                        fdg(base, &pool.select_columns(&idx)).map(|r| r.fdg)
                    }
                };
                score.map(|s| (c, s))
            })
            .collect::<Result<Vec<_>>>()?;
        let (pos, &(best, best_fdg)) = scores
            .iter()
            .enumerate()
            .reduce(|a, b| if dir.prefers(b.1 .1, a.1 .1) { b } else { a })
            .expect("pool holds enough samples for the quota");
        remaining.remove(pos);
        picked.push(best);
        chosen.extend_from_slice(&members[best]);
        step_fdg.push(best_fdg);
        step_direction.push(dir);
    }

    let last_dir = step_direction.last().copied().unwrap_or(direction);
    let last_len = picked.last().map_or(0, |&c| members[c].len());
    trim(base, pool, &mut chosen, last_len, quota, last_dir);
    chosen.sort_unstable();
    let samples = pool.select_columns(&chosen);
    let achieved_fdg = fdg(base, &samples)?.fdg;
    Ok(Selection {
        indices: chosen,
        samples,
        plan: SelectionPlan {
            direction,
            switch_after,
            picked,
            step_fdg,
            step_direction,
            quota,
            achieved_fdg,
        },
    })
}

fn opposite(d: Direction) -> Direction {
    match d {
        Direction::Maximize => Direction::Minimize,
        Direction::Minimize => Direction::Maximize,
    }
}

/// Drops surplus samples from the last picked cluster: those nearest the base
/// mean when maximizing, farthest when minimizing.
fn trim(
    base: &SampleMatrix,
    pool: &SampleMatrix,
    chosen: &mut Vec<usize>,
    last_len: usize,
    quota: usize,
    dir: Direction,
) {
    let excess = chosen.len().saturating_sub(quota);
    if excess == 0 {
        return;
    }
    let mean = base.mean();
    let mean = mean.as_slice();
    // excess < last_len: the quota was unmet before the last cluster joined
    let mut last: Vec<(usize, f64)> = chosen[chosen.len() - last_len..]
        .iter()
        .map(|&i| (i, sq_dist(pool.column(i), mean)))
        .collect();
    last.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let drop: Vec<usize> = match dir {
        Direction::Maximize => last.iter().take(excess).map(|x| x.0).collect(),
        Direction::Minimize => last.iter().rev().take(excess).map(|x| x.0).collect(),
    };
    chosen.retain(|i| !drop.contains(i));
}

/// Cached sums for scoring `base + picked + candidate` without touching samples.
struct MomentScorer {
    n_base: usize,
    v_base: f64,
    base: Moments,
    clusters: Vec<Moments>,
}

#[derive(Clone)]
struct Moments {
    n: usize,
    sum: DVector<f64>,
    outer: DMatrix<f64>,
}

impl Moments {
    fn of(m: &SampleMatrix, idx: Option<&[usize]>) -> Moments {
        let d = m.dim();
        let mut sum = DVector::zeros(d);
        let mut outer = DMatrix::zeros(d, d);
        let mut n = 0;
        let mut add = |c: &[f64]| {
            let v = DVector::from_column_slice(c);
            outer.ger(1.0, &v, &v, 1.0);
            sum += v;
            n += 1;
        };
        match idx {
            Some(idx) => idx.iter().for_each(|&i| add(m.column(i))),
            None => m.columns().for_each(add),
        }
        Moments { n, sum, outer }
    }

    fn add(&mut self, other: &Moments) {
        self.n += other.n;
        self.sum += &other.sum;
        self.outer += &other.outer;
    }

    fn volume(&self) -> Result<f64> {
        let n = self.n as f64;
        let mean = &self.sum / n;
        let mut s = &self.outer / n - &mean * mean.transpose();
        for i in 0..s.nrows() {
            s[(i, i)] += 1.0;
        }
        let chol = Cholesky::new(s).ok_or(FdgError::NumericalFailure { side: "covariance" })?;
        let l = chol.l_dirty();
        let ln_det: f64 = (0..l.nrows()).map(|i| l[(i, i)].ln()).sum();
        Ok((ln_det / std::f64::consts::LN_2).max(0.0))
    }
}

impl MomentScorer {
    fn new(base: &SampleMatrix, pool: &SampleMatrix, members: &[Vec<usize>]) -> Result<Self> {
        let v_base = centered_volume(base)?.value();
        if v_base <= DEGENERATE_VOLUME {
            return Err(FdgError::DegenerateBase { volume: v_base });
        }
        Ok(Self {
            n_base: base.len(),
            v_base,
            base: Moments::of(base, None),
            clusters: members
                .iter()
                .map(|m| Moments::of(pool, Some(m)))
                .collect(),
        })
    }

    fn fdg(&self, picked: &[usize], candidate: usize) -> Result<f64> {
        let mut joint = self.base.clone();
        for &c in picked.iter().chain(std::iter::once(&candidate)) {
            joint.add(&self.clusters[c]);
        }
        debug_assert!(joint.n >= self.n_base);
        Ok((joint.volume()? - self.v_base) / self.v_base)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsampleRule {
    /// Evenly spaced ranks, both endpoints kept.
    #[default]
    Rank,
    /// The set nearest each of evenly spaced FDG values.
    Value,
}

/// Positions (into `sorted_fdg`, ascending) of the sets to keep.
pub fn subsample_indices(sorted_fdg: &[f64], m_keep: usize, rule: SubsampleRule) -> Result<Vec<usize>> {
    let n = sorted_fdg.len();
    if m_keep == 0 || m_keep > n {
        return Err(FdgError::InvalidParameter(format!(
            "cannot keep {m_keep} of {n} sets"
        )));
    }
    if m_keep == 1 {
        return Ok(vec![((n - 1) as f64 / 2.0).round() as usize]);
    }
    match rule {
        SubsampleRule::Rank => Ok((0..m_keep)
            .map(|i| ((i * (n - 1)) as f64 / (m_keep - 1) as f64).round() as usize)
            .collect()),
        SubsampleRule::Value => {
            let (lo, hi) = (sorted_fdg[0], sorted_fdg[n - 1]);
            let mut used = vec![false; n];
            let mut keep = Vec::with_capacity(m_keep);
            for i in 0..m_keep {
                let target = lo + (hi - lo) * i as f64 / (m_keep - 1) as f64;
                let best = (0..n)
                    .filter(|&j| !used[j])
                    .min_by(|&a, &b| {
                        (sorted_fdg[a] - target)
                            .abs()
                            .total_cmp(&(sorted_fdg[b] - target).abs())
                            .then(a.cmp(&b))
                    })
                    .expect("m_keep <= n");
                used[best] = true;
                keep.push(best);
            }
            keep.sort_unstable();
            Ok(keep)
        }
    }
}

/// Sorts `sets` by ascending FDG and keeps `m_keep` of them per `rule`.
pub fn uniform_subsample_by_fdg<T>(
    mut sets: Vec<T>,
    fdg_of: impl Fn(&T) -> f64,
    m_keep: usize,
    rule: SubsampleRule,
) -> Result<Vec<T>> {
    sets.sort_by(|a, b| fdg_of(a).total_cmp(&fdg_of(b)));
    let sorted: Vec<f64> = sets.iter().map(&fdg_of).collect();
    let keep = subsample_indices(&sorted, m_keep, rule)?;
    let mut out = Vec::with_capacity(keep.len());
    let mut keep = keep.into_iter().peekable();
    for (i, s) in sets.into_iter().enumerate() {
        if keep.peek() == Some(&i) {
            out.push(s);
            keep.next();
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMode {
    /// Independent seeded runs of the augmenter.
    #[default]
    Stochastic,
    /// Greedy selections over a grid of maximize/minimize mixtures.
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub mode: SweepMode,
    pub m_generate: usize,
    pub m_keep: usize,
    pub seed: u64,
    pub subsample: SubsampleRule,
    /// Clusters per tail class in greedy mode; clamped to the pool size.
    pub k: usize,
    /// Candidate pool size as a multiple of each class's quota (greedy mode).
    pub pool_factor: usize,
    pub evaluation: Evaluation,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            mode: SweepMode::Stochastic,
            m_generate: 100,
            m_keep: 50,
            seed: 0,
            subsample: SubsampleRule::Rank,
            k: DEFAULT_CLUSTERS,
            pool_factor: 3,
            evaluation: Evaluation::Direct,
        }
    }
}

/// One generated augmentation of every tail class.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSet {
    pub run: usize,
    pub seed: u64,
    /// Fraction of each class's quota picked while maximizing (greedy mode).
    pub max_fraction: Option<f64>,
    pub sets: BTreeMap<ClassId, AugmentedSet>,
    pub report: TailFdgReport,
}

impl SweepSet {
    pub fn fdg_tail(&self) -> f64 {
        self.report.fdg_tail
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub mode: SweepMode,
    /// Ascending by FDG_Tail.
    pub sets: Vec<SweepSet>,
}

/// Builds `m_generate` augmentations of the tail classes and keeps `m_keep`
/// of them with evenly spread FDG_Tail.
pub fn fdg_sweep(
    classes: &ClassSets,
    kind: &AugmenterKind,
    partition: &ClassPartition,
    config: &SweepConfig,
) -> Result<SweepResult> {
    if config.m_generate == 0 || config.m_keep == 0 || config.m_keep > config.m_generate {
        return Err(FdgError::InvalidParameter(format!(
            "cannot keep {} of {} generated sets",
            config.m_keep, config.m_generate
        )));
    }
    let counts: BTreeMap<ClassId, usize> = classes.iter().map(|(&c, m)| (c, m.len())).collect();
    let plan = balance_plan(&counts).restricted_to(&partition.tail);
    let generated = match config.mode {
        SweepMode::Stochastic => (0..config.m_generate)
            .into_par_iter()
            .map(|run| {
                let seed = config.seed.wrapping_add(run as u64);
                let sets = augment_balanced(classes, partition, &plan, kind, seed)?;
                finish_set(classes, partition, run, seed, None, sets)
            })
            .collect::<Result<Vec<_>>>()?,
        SweepMode::Greedy => greedy_sweep(classes, kind, partition, &plan.quota, config)?,
    };
    let sets = uniform_subsample_by_fdg(generated, SweepSet::fdg_tail, config.m_keep, config.subsample)?;
    Ok(SweepResult {
        mode: config.mode,
        sets,
    })
}

fn finish_set(
    classes: &ClassSets,
    partition: &ClassPartition,
    run: usize,
    seed: u64,
    max_fraction: Option<f64>,
    mut sets: BTreeMap<ClassId, AugmentedSet>,
) -> Result<SweepSet> {
    let aug: BTreeMap<ClassId, SampleMatrix> = sets
        .iter()
        .map(|(&c, s)| (c, s.samples.clone()))
        .collect();
    let report = fdg_tail(classes, &aug, partition)?;
    for (c, r) in &report.per_class {
        if let Some(s) = sets.get_mut(c) {
            s.fdg = Some(r.fdg);
        }
    }
    Ok(SweepSet {
        run,
        seed,
        max_fraction,
        sets,
        report,
    })
}

struct ClassPool {
    class: ClassId,
    quota: usize,
    pool: AugmentedSet,
    clusters: ClusterSet,
}

fn greedy_sweep(
    classes: &ClassSets,
    kind: &AugmenterKind,
    partition: &ClassPartition,
    quota: &BTreeMap<ClassId, usize>,
    config: &SweepConfig,
) -> Result<Vec<SweepSet>> {
    let pools = quota
        .iter()
        .filter(|(_, &q)| q > 0)
        .map(|(&class, &q)| {
            let size = q * config.pool_factor.max(1);
            let build = || {
                let pool = augment_class(classes, partition, class, size, kind, config.seed)?;
                let k = config.k.clamp(1, pool.samples.len());
                let clusters =
                    kmeans(&pool.samples, k, config.seed.wrapping_add(u64::from(class)))?;
                Ok(ClassPool {
                    class,
                    quota: q,
                    pool,
                    clusters,
                })
            };
            build().map_err(|e: FdgError| e.for_class(class))
        })
        .collect::<Result<Vec<_>>>()?;

    let m = config.m_generate;
    (0..m)
        .into_par_iter()
        .map(|run| {
            let fraction = if m == 1 { 0.5 } else { run as f64 / (m - 1) as f64 };
            let mut sets = BTreeMap::new();
            for p in &pools {
                let switch = (fraction * p.quota as f64).round() as usize;
                let sel = greedy_select_with(
                    &classes[&p.class],
                    &p.clusters,
                    &p.pool.samples,
                    p.quota,
                    Direction::Maximize,
                    Some(switch),
                    config.evaluation,
                )
                .map_err(|e| e.for_class(p.class))?;
                sets.insert(
                    p.class,
                    AugmentedSet {
                        class: p.class,
                        samples: sel.samples,
                        provenance: p.pool.provenance.clone(),
                        degenerate: 0,
                        fdg: None,
                    },
                );
            }
            finish_set(classes, partition, run, config.seed, Some(fraction), sets)
        })
        .collect()
}
