//! Synthetic long-tailed Gaussian data and a nearest-centroid harness.
//!
//! Each class is an isotropic Gaussian. Training data for tail classes only
//! covers a biased part of the class ("observed" distribution), while the
//! balanced test set is drawn from the full ("true") distribution. The
//! inverted-U experiment balances the tail classes three ways, with little,
//! moderate and excessive diversity gain, and scores each with a
//! nearest-centroid classifier.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{balance_plan, most_similar_head, ClassSets};
use crate::dataset::EmbeddingSet;
use crate::error::{FdgError, Result};
use crate::fdg::fdg_tail;
use crate::linalg::SampleMatrix;
use crate::partition::{imbalance_factor, partition_head_tail, DEFAULT_HEAD_THRESHOLD};
use crate::{seeded_rng, ClassId};

/// Radius, in standard deviations, of the observed region at fraction 1.
const OBSERVED_RADIUS: f64 = 3.0;
const MAX_REJECTIONS_PER_SAMPLE: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub num_classes: usize,
    pub dim: usize,
    pub imbalance_factor: f64,
    pub n_max: usize,
    /// Distance of each default class mean from the origin.
    pub separation: f64,
    /// Default per-class standard deviation.
    pub class_sd: f64,
    /// Explicit class means; overrides `separation`.
    pub means: Option<Vec<Vec<f64>>>,
    /// Explicit per-class standard deviations; overrides `class_sd`.
    pub sds: Option<Vec<f64>>,
    /// Share of the true spread visible in tail training data, in (0, 1].
    pub observed_fraction: f64,
    pub n_test_per_class: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            num_classes: 3,
            dim: 2,
            imbalance_factor: 100.0,
            n_max: 1000,
            separation: 2.0,
            class_sd: 1.0,
            means: None,
            sds: None,
            observed_fraction: 0.3,
            n_test_per_class: 2000,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// `round(n_max * IF^(-c / (C - 1)))` for `c = 0..C`.
    pub fn class_counts(&self) -> Vec<usize> {
        let c = self.num_classes;
        if c == 1 {
            return vec![self.n_max];
        }
        (0..c)
            .map(|i| {
                let e = -(i as f64) / (c - 1) as f64;
                (self.n_max as f64 * self.imbalance_factor.powf(e)).round() as usize
            })
            .collect()
    }

    pub fn class_means(&self) -> Vec<Vec<f64>> {
        if let Some(m) = &self.means {
            return m.clone();
        }
        let c = self.num_classes;
        (0..c)
            .map(|i| {
                let mut mean = vec![0.0; self.dim];
                if self.dim == 1 {
                    mean[0] = self.separation * i as f64;
                } else {
                    let angle = std::f64::consts::TAU * i as f64 / c as f64;
                    mean[0] = self.separation * angle.cos();
                    mean[1] = self.separation * angle.sin();
                }
                mean
            })
            .collect()
    }

    pub fn class_sds(&self) -> Vec<f64> {
        self.sds
            .clone()
            .unwrap_or_else(|| vec![self.class_sd; self.num_classes])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(FdgError::InvalidConfig(m));
        if self.num_classes == 0 || self.dim == 0 {
            return bad("num_classes and dim must be positive".into());
        }
        if !(self.imbalance_factor >= 1.0 && self.imbalance_factor.is_finite()) {
            return bad(format!("imbalance factor {} < 1", self.imbalance_factor));
        }
        if !(self.observed_fraction > 0.0 && self.observed_fraction <= 1.0) {
            return bad(format!(
                "observed fraction {} outside (0, 1]",
                self.observed_fraction
            ));
        }
        if self.n_test_per_class == 0 {
            return bad("n_test_per_class must be positive".into());
        }
        if let Some(min) = self.class_counts().into_iter().min() {
            if min < 2 {
                return bad(format!("smallest class would hold {min} samples"));
            }
        }
        let means = self.class_means();
        if means.len() != self.num_classes || means.iter().any(|m| m.len() != self.dim) {
            return bad("means must give one dim-length vector per class".into());
        }
        let sds = self.class_sds();
        if sds.len() != self.num_classes || sds.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return bad("sds must give one positive value per class".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LongTailData {
    pub train: EmbeddingSet,
    pub test: EmbeddingSet,
    pub counts: BTreeMap<ClassId, usize>,
    pub means: Vec<Vec<f64>>,
    pub sds: Vec<f64>,
    /// Classes whose training samples come from the restricted region.
    pub restricted: BTreeSet<ClassId>,
}

/// Draws a long-tailed training set and a balanced test set.
pub fn gen_longtail(config: &SynthConfig) -> Result<LongTailData> {
    config.validate()?;
    let counts: BTreeMap<ClassId, usize> = config
        .class_counts()
        .into_iter()
        .enumerate()
        .map(|(c, n)| (c as ClassId, n))
        .collect();
    let means = config.class_means();
    let sds = config.class_sds();
    let restricted = match partition_head_tail(&counts, DEFAULT_HEAD_THRESHOLD) {
        Ok(p) if config.observed_fraction < 1.0 => p.tail,
        _ => BTreeSet::new(),
    };

    let mut train = BTreeMap::new();
    let mut test = BTreeMap::new();
    for (&class, &n) in &counts {
        let c = class as usize;
        let mut rng = seeded_rng(config.seed, 2 * u64::from(class));
        let samples = if restricted.contains(&class) {
            let away = away_from_nearest(&means, c);
            observed_gaussian(&means[c], sds[c], &away, config.observed_fraction, n, &mut rng)?
        } else {
            gaussian(&means[c], sds[c], n, &mut rng)?
        };
        train.insert(class, samples);
        let mut rng = seeded_rng(config.seed, 2 * u64::from(class) + 1);
        test.insert(
            class,
            gaussian(&means[c], sds[c], config.n_test_per_class, &mut rng)?,
        );
    }
    Ok(LongTailData {
        train: EmbeddingSet::from_class_sets(&train)?,
        test: EmbeddingSet::from_class_sets(&test)?,
        counts,
        means,
        sds,
        restricted,
    })
}

/// Unit vector from the nearest other class mean towards class `c`.
fn away_from_nearest(means: &[Vec<f64>], c: usize) -> Vec<f64> {
    let d = means[c].len();
    let nearest = (0..means.len())
        .filter(|&j| j != c)
        .min_by(|&a, &b| {
            dist2(&means[a], &means[c])
                .total_cmp(&dist2(&means[b], &means[c]))
                .then(a.cmp(&b))
        });
    let mut dir: Vec<f64> = match nearest {
        Some(j) => means[c].iter().zip(&means[j]).map(|(a, b)| a - b).collect(),
        None => vec![0.0; d],
    };
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        dir.iter_mut().for_each(|v| *v /= norm);
    } else {
        dir = vec![0.0; d];
        dir[0] = 1.0;
    }
    dir
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn gaussian<R: Rng + ?Sized>(
    mean: &[f64],
    sd: f64,
    n: usize,
    rng: &mut R,
) -> Result<SampleMatrix> {
    let mut data = Vec::with_capacity(n * mean.len());
    for _ in 0..n {
        for m in mean {
            let z: f64 = StandardNormal.sample(rng);
            data.push(m + sd * z);
        }
    }
    SampleMatrix::from_sample_major(mean.len(), n, data)
}

/// Gaussian samples kept only inside a ball of radius `fraction * 3 sd`
/// around `mean + (1 - fraction) * sd * direction`.
fn observed_gaussian<R: Rng + ?Sized>(
    mean: &[f64],
    sd: f64,
    direction: &[f64],
    fraction: f64,
    n: usize,
    rng: &mut R,
) -> Result<SampleMatrix> {
    let shift: Vec<f64> = direction.iter().map(|u| (1.0 - fraction) * u).collect();
    let radius2 = (fraction * OBSERVED_RADIUS).powi(2);
    let mut data = Vec::with_capacity(n * mean.len());
    let mut z = vec![0.0; mean.len()];
    for _ in 0..n {
        let mut tries = 0;
        loop {
            z.iter_mut()
                .for_each(|v| *v = StandardNormal.sample(&mut *rng));
            if dist2(&z, &shift) <= radius2 {
                break;
            }
            tries += 1;
            if tries > MAX_REJECTIONS_PER_SAMPLE {
                return Err(FdgError::InvalidConfig(format!(
                    "observed fraction {fraction} leaves too little of the distribution to sample"
                )));
            }
        }
        data.extend(mean.iter().zip(&z).map(|(m, v)| m + sd * v));
    }
    SampleMatrix::from_sample_major(mean.len(), n, data)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class_accuracy: BTreeMap<ClassId, f64>,
    pub balanced_accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: BTreeMap<ClassId, BTreeMap<ClassId, usize>>,
}

/// Nearest-centroid classification of `test` using class means of `train`.
///
/// Equidistant centroids resolve to the smaller class id.
pub fn nearest_centroid_eval(train: &EmbeddingSet, test: &EmbeddingSet) -> Result<EvalReport> {
    if train.dim() != test.dim() {
        return Err(FdgError::DimensionMismatch {
            expected: train.dim(),
            found: test.dim(),
        });
    }
    let centroids: Vec<(ClassId, Vec<f64>)> = train
        .by_class()
        .into_iter()
        .map(|(c, m)| (c, m.mean().as_slice().to_vec()))
        .collect();
    let test_counts = test.counts();
    if let Some(&missing) = test_counts
        .keys()
        .find(|c| !centroids.iter().any(|(k, _)| k == *c))
    {
        return Err(FdgError::MissingClass(missing));
    }
    let mut confusion: BTreeMap<ClassId, BTreeMap<ClassId, usize>> = BTreeMap::new();
    for (x, &truth) in test.samples().columns().zip(test.labels()) {
        let mut best = (centroids[0].0, f64::INFINITY);
        for (c, mu) in &centroids {
            let d = dist2(x, mu);
            if d < best.1 {
                best = (*c, d);
            }
        }
        *confusion
            .entry(truth)
            .or_default()
            .entry(best.0)
            .or_insert(0) += 1;
    }
    let per_class_accuracy: BTreeMap<ClassId, f64> = test_counts
        .iter()
        .map(|(c, &n)| {
            let hits = confusion
                .get(c)
                .and_then(|row| row.get(c))
                .copied()
                .unwrap_or(0);
            (*c, hits as f64 / n as f64)
        })
        .collect();
    let balanced_accuracy =
        per_class_accuracy.values().sum::<f64>() / per_class_accuracy.len().max(1) as f64;
    Ok(EvalReport {
        per_class_accuracy,
        balanced_accuracy,
        confusion,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Jittered duplicates of the observed tail samples.
    Low,
    /// Fresh draws from the true tail distribution.
    Mid,
    /// True-distribution draws pushed towards the nearest head class.
    High,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Low, Regime::Mid, Regime::High];

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Low => "low",
            Regime::Mid => "mid",
            Regime::High => "high",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub synth: SynthConfig,
    /// Seeds `synth.seed .. synth.seed + seeds`.
    pub seeds: usize,
    /// Jitter standard deviation of the LOW regime, in class standard deviations.
    pub low_jitter: f64,
    /// Largest HIGH displacement as a multiple of the tail-to-head centroid distance.
    pub high_displacement: f64,
    pub threshold: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            synth: SynthConfig::default(),
            seeds: 10,
            low_jitter: 0.05,
            high_displacement: 2.0,
            threshold: DEFAULT_HEAD_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeOutcome {
    pub regime: Regime,
    pub seed: u64,
    pub fdg_tail: f64,
    pub balanced_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub imbalance_factor: f64,
    /// Accuracy of the unbalanced training set.
    pub baseline_accuracy: f64,
    pub regimes: Vec<RegimeOutcome>,
}

impl SeedOutcome {
    pub fn get(&self, regime: Regime) -> &RegimeOutcome {
        self.regimes
            .iter()
            .find(|r| r.regime == regime)
            .expect("every regime is run")
    }

    pub fn fdg_ordered(&self) -> bool {
        let (l, m, h) = self.triple(|r| r.fdg_tail);
        l < m && m < h
    }

    pub fn mid_best(&self) -> bool {
        let (l, m, h) = self.triple(|r| r.balanced_accuracy);
        m >= l && m >= h
    }

    fn triple(&self, f: impl Fn(&RegimeOutcome) -> f64) -> (f64, f64, f64) {
        (
            f(self.get(Regime::Low)),
            f(self.get(Regime::Mid)),
            f(self.get(Regime::High)),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub seeds: usize,
    pub fdg_ordered_seeds: usize,
    pub mid_best_seeds: usize,
    pub mean_fdg_tail: BTreeMap<Regime, f64>,
    pub mean_balanced_accuracy: BTreeMap<Regime, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub runs: Vec<SeedOutcome>,
    pub summary: ExperimentSummary,
}

impl ExperimentReport {
    /// Flat `(regime, seed, fdg_tail, balanced_accuracy)` rows.
    pub fn rows(&self) -> impl Iterator<Item = &RegimeOutcome> {
        self.runs.iter().flat_map(|s| s.regimes.iter())
    }
}

/// Runs every regime on every seed.
pub fn inverted_u_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.seeds == 0 {
        return Err(FdgError::InvalidConfig("seeds must be positive".into()));
    }
    if !(config.low_jitter >= 0.0 && config.high_displacement >= 0.0) {
        return Err(FdgError::InvalidConfig(
            "jitter and displacement must be non-negative".into(),
        ));
    }
    config.synth.validate()?;
    let runs = (0..config.seeds)
        .into_par_iter()
        .map(|i| run_seed(config, config.synth.seed.wrapping_add(i as u64)))
        .collect::<Result<Vec<_>>>()?;

    let n = runs.len() as f64;
    let mean_of = |f: &dyn Fn(&RegimeOutcome) -> f64| -> BTreeMap<Regime, f64> {
        Regime::ALL
            .iter()
            .map(|&r| (r, runs.iter().map(|s| f(s.get(r))).sum::<f64>() / n))
            .collect()
    };
    let summary = ExperimentSummary {
        seeds: runs.len(),
        fdg_ordered_seeds: runs.iter().filter(|s| s.fdg_ordered()).count(),
        mid_best_seeds: runs.iter().filter(|s| s.mid_best()).count(),
        mean_fdg_tail: mean_of(&|r| r.fdg_tail),
        mean_balanced_accuracy: mean_of(&|r| r.balanced_accuracy),
    };
    Ok(ExperimentReport {
        config: config.clone(),
        runs,
        summary,
    })
}

fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedOutcome> {
    let synth = SynthConfig {
        seed,
        ..config.synth.clone()
    };
    let data = gen_longtail(&synth)?;
    let counts = data.train.counts();
    let partition = partition_head_tail(&counts, config.threshold)?;
    let plan = balance_plan(&counts).restricted_to(&partition.tail);
    let base = data.train.by_class();
    let centroids: BTreeMap<ClassId, Vec<f64>> = base
        .iter()
        .map(|(&c, m)| (c, m.mean().as_slice().to_vec()))
        .collect();
    let head_means: BTreeMap<ClassId, Vec<f64>> = partition
        .head
        .iter()
        .map(|c| (*c, centroids[c].clone()))
        .collect();

    let baseline_accuracy = nearest_centroid_eval(&data.train, &data.test)?.balanced_accuracy;
    let mut regimes = Vec::with_capacity(3);
    for (r_idx, regime) in Regime::ALL.into_iter().enumerate() {
        let mut aug: ClassSets = BTreeMap::new();
        for (&class, &quota) in &plan.quota {
            let stream = 1000 + 10 * u64::from(class) + r_idx as u64;
            let mut rng = seeded_rng(seed, stream);
            let c = class as usize;
            let samples = match regime {
                Regime::Low => jitter_copies(
                    &base[&class],
                    config.low_jitter * data.sds[c],
                    quota,
                    &mut rng,
                )?,
                Regime::Mid => gaussian(&data.means[c], data.sds[c], quota, &mut rng)?,
                Regime::High => {
                    let head = most_similar_head(&centroids[&class], &head_means)?;
                    let shift: Vec<f64> = head_means[&head]
                        .iter()
                        .zip(&centroids[&class])
                        .map(|(h, t)| config.high_displacement * (h - t))
                        .collect();
                    displaced(&data.means[c], data.sds[c], &shift, quota, &mut rng)?
                }
            };
            aug.insert(class, samples);
        }
        let report = fdg_tail(&base, &aug, &partition)?;
        let mut balanced = base.clone();
        for (class, extra) in &aug {
            let joined = balanced[class].concat(extra)?;
            balanced.insert(*class, joined);
        }
        let train = EmbeddingSet::from_class_sets(&balanced)?;
        let eval = nearest_centroid_eval(&train, &data.test)?;
        regimes.push(RegimeOutcome {
            regime,
            seed,
            fdg_tail: report.fdg_tail,
            balanced_accuracy: eval.balanced_accuracy,
        });
    }
    Ok(SeedOutcome {
        seed,
        imbalance_factor: imbalance_factor(&counts)?,
        baseline_accuracy,
        regimes,
    })
}

fn jitter_copies<R: Rng + ?Sized>(
    observed: &SampleMatrix,
    sd: f64,
    n: usize,
    rng: &mut R,
) -> Result<SampleMatrix> {
    let mut data = Vec::with_capacity(n * observed.dim());
    for _ in 0..n {
        let src = observed.column(rng.random_range(0..observed.len()));
        for v in src {
            let z: f64 = StandardNormal.sample(rng);
            data.push(v + sd * z);
        }
    }
    SampleMatrix::from_sample_major(observed.dim(), n, data)
}

/// True-distribution draws shifted by `u * shift` with `u ~ U(0, 1)`.
fn displaced<R: Rng + ?Sized>(
    mean: &[f64],
    sd: f64,
    shift: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<SampleMatrix> {
    let base = gaussian(mean, sd, n, rng)?;
    let mut data = base.as_slice().to_vec();
    for col in data.chunks_exact_mut(mean.len()) {
        let u: f64 = rng.random();
        col.iter_mut().zip(shift).for_each(|(v, s)| *v += u * s);
    }
    SampleMatrix::from_sample_major(mean.len(), n, data)
}
