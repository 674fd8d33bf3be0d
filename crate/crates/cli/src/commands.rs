use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use fdg_core::augment::GridShape;
use fdg_core::io::{read_embeddings, write_embeddings, write_experiment_csv, write_json, Format};
use fdg_core::linalg::centered_volume;
use fdg_core::partition::DEFAULT_HEAD_THRESHOLD;
use fdg_core::selection::{greedy_select_with, Evaluation, SelectionPlan};
use fdg_core::synth::ExperimentSummary;
use fdg_core::{
    augment_balanced, balance_plan, fdg, fdg_sweep, fdg_tail, gen_longtail, imbalance_factor,
    inverted_u_experiment, kmeans, partition_head_tail, semantic_scale_profile, AugmenterKind,
    ClassId, ClassPartition, ClassSets, Direction, EmbeddingSet, ExperimentConfig, FdgError,
    FdgResult, ImbalanceProfile, SampleMatrix, SweepConfig, SynthConfig, Volume,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::report::{CliError, CliResult, Sink};

/// Values a subcommand needs besides its run configuration.
pub struct Ctx {
    pub sink: Sink,
    pub inputs: BTreeMap<&'static str, PathBuf>,
}

impl Ctx {
    fn emit<C: Serialize, R: Serialize>(
        self,
        command: &'static str,
        config: C,
        seed: Option<u64>,
        results: R,
    ) -> CliResult<()> {
        self.sink.emit(command, config, self.inputs, seed, results)
    }
}

fn output_format(path: &Path) -> CliResult<Format> {
    Format::from_path(path).map_err(|e| CliError::Usage(e.to_string()))
}

fn check_threshold(threshold: f64) -> CliResult<()> {
    if threshold > 0.0 && threshold < 1.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "threshold must lie strictly between 0 and 1, got {threshold}"
        )))
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VolumeConfig {
    pub by_class: bool,
}

#[derive(Serialize)]
struct VolumeResults {
    dim: usize,
    n: usize,
    volume: Volume,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_class: Option<BTreeMap<ClassId, Volume>>,
}

pub fn volume(ctx: Ctx, input: &Path, config: VolumeConfig) -> CliResult<()> {
    let set = read_embeddings(input)?;
    let volume = centered_volume(set.samples())?;
    let per_class = if config.by_class {
        Some(semantic_scale_profile(&set.by_class())?.semantic_scales)
    } else {
        None
    };
    let results = VolumeResults {
        dim: set.dim(),
        n: set.len(),
        volume,
        per_class,
    };
    ctx.emit("volume", config, None, results)
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FdgConfig {
    /// Restrict both files to this label.
    pub class: Option<ClassId>,
}

fn class_samples(set: &EmbeddingSet, class: Option<ClassId>) -> CliResult<SampleMatrix> {
    match class {
        None => Ok(set.samples().clone()),
        Some(c) => match set.by_class().remove(&c) {
            Some(m) => Ok(m),
            None => SampleMatrix::empty(set.dim()).map_err(Into::into),
        },
    }
}

pub fn fdg_cmd(ctx: Ctx, base: &Path, aug: &Path, config: FdgConfig) -> CliResult<()> {
    let base_set = read_embeddings(base)?;
    let aug_set = read_embeddings(aug)?;
    let base = class_samples(&base_set, config.class)?;
    if base.is_empty() {
        return Err(FdgError::MissingClass(config.class.unwrap_or_default()).into());
    }
    let result: FdgResult = fdg(&base, &class_samples(&aug_set, config.class)?)?;
    ctx.emit("fdg", config, None, result)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartitionConfig {
    pub threshold: f64,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_HEAD_THRESHOLD,
        }
    }
}

/// Accepts `{"class": count, ...}` or `[count, ...]` (class ids by position).
pub fn parse_counts(text: &str) -> CliResult<BTreeMap<ClassId, usize>> {
    let bad = |msg: String| CliError::Domain(FdgError::InvalidParameter(msg));
    let value: Value =
        serde_json::from_str(text).map_err(|e| bad(format!("counts file: {e}")))?;
    let count = |v: &Value| {
        v.as_u64()
            .map(|n| n as usize)
            .ok_or_else(|| bad(format!("count {v} is not a non-negative integer")))
    };
    match &value {
        Value::Array(items) => items
            .iter()
            .enumerate()
            .map(|(i, v)| Ok((i as ClassId, count(v)?)))
            .collect(),
        Value::Object(map) => map
            .iter()
            .map(|(k, v)| {
                let class = k
                    .parse::<ClassId>()
                    .map_err(|_| bad(format!("class id {k:?} is not an integer")))?;
                Ok((class, count(v)?))
            })
            .collect(),
        _ => Err(bad("counts must be a JSON object or array".into())),
    }
}

#[derive(Serialize)]
struct PartitionResults {
    imbalance_factor: f64,
    #[serde(flatten)]
    partition: ClassPartition,
}

pub fn partition(
    ctx: Ctx,
    counts: Option<&Path>,
    input: Option<&Path>,
    config: PartitionConfig,
) -> CliResult<()> {
    check_threshold(config.threshold)?;
    let counts = match (counts, input) {
        (Some(path), _) => parse_counts(&std::fs::read_to_string(path)?)?,
        (None, Some(path)) => read_embeddings(path)?.counts(),
        (None, None) => return Err(CliError::Usage("give --counts or --input".into())),
    };
    let partition = partition_head_tail(&counts, config.threshold)?;
    let results = PartitionResults {
        imbalance_factor: imbalance_factor(&counts)?,
        partition,
    };
    ctx.emit("partition", config, None, results)
}

#[derive(Serialize)]
struct ProfileResults {
    #[serde(flatten)]
    profile: ImbalanceProfile,
    /// Absent when every class would be head.
    partition: Option<ClassPartition>,
}

pub fn profile(ctx: Ctx, input: &Path, config: PartitionConfig) -> CliResult<()> {
    check_threshold(config.threshold)?;
    let set = read_embeddings(input)?;
    let profile = semantic_scale_profile(&set.by_class())?;
    let partition = match partition_head_tail(&profile.counts, config.threshold) {
        Ok(p) => Some(p),
        Err(FdgError::NoTailClasses { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    ctx.emit("profile", config, None, ProfileResults { profile, partition })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentConfig {
    pub augmenter: AugmenterKind,
    pub seed: u64,
    pub threshold: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            augmenter: AugmenterKind::default(),
            seed: 0,
            threshold: DEFAULT_HEAD_THRESHOLD,
        }
    }
}

/// Command-line overrides of the augmenter section.
#[derive(Debug, Clone, Default)]
pub struct AugmenterFlags {
    pub method: Option<String>,
    pub alpha: Option<f64>,
    pub kappa: Option<f64>,
    pub grid: Option<GridShape>,
}

impl AugmenterFlags {
    pub fn apply(&self, kind: &mut AugmenterKind) -> CliResult<()> {
        if let Some(method) = &self.method {
            let fresh = serde_json::json!({ "kind": method });
            *kind = serde_json::from_value(fresh)
                .map_err(|_| CliError::Usage(format!("unknown augmenter {method:?}")))?;
        }
        let name = kind.name();
        let misuse = |flag: &str| {
            CliError::Usage(format!("--{flag} does not apply to the {name} augmenter"))
        };
        if let Some(a) = self.alpha {
            match kind {
                AugmenterKind::RemixMix { alpha, .. } | AugmenterKind::PatchPaste { alpha, .. } => {
                    *alpha = a
                }
                _ => return Err(misuse("alpha")),
            }
        }
        if let Some(k) = self.kappa {
            match kind {
                AugmenterKind::RemixMix { kappa, .. } => *kappa = k,
                _ => return Err(misuse("kappa")),
            }
        }
        if let Some(g) = self.grid {
            match kind {
                AugmenterKind::PatchPaste { shape, .. } => *shape = Some(g),
                _ => return Err(misuse("grid")),
            }
        }
        Ok(())
    }
}

/// Parses `HxW` or `HxWxC`.
pub fn parse_grid(text: &str) -> Result<GridShape, String> {
    let parts: Vec<usize> = text
        .split('x')
        .map(|p| p.parse::<usize>().map_err(|_| format!("bad grid {text:?}, expected HxW or HxWxC")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [height, width] => Ok(GridShape {
            height,
            width,
            channels: 1,
        }),
        [height, width, channels] => Ok(GridShape {
            height,
            width,
            channels,
        }),
        _ => Err(format!("bad grid {text:?}, expected HxW or HxWxC")),
    }
}

fn split(set: &EmbeddingSet, threshold: f64) -> CliResult<(ClassSets, ClassPartition)> {
    let partition = partition_head_tail(&set.counts(), threshold)?;
    Ok((set.by_class(), partition))
}

#[derive(Serialize)]
struct AugmentClass {
    count: usize,
    degenerate: usize,
    fdg: f64,
}

#[derive(Serialize)]
struct AugmentResults {
    tail: BTreeSet<ClassId>,
    fdg_tail: f64,
    per_class: BTreeMap<ClassId, AugmentClass>,
    output: PathBuf,
}

pub fn augment(ctx: Ctx, input: &Path, output: &Path, config: AugmentConfig) -> CliResult<()> {
    check_threshold(config.threshold)?;
    let format = output_format(output)?;
    let set = read_embeddings(input)?;
    let (classes, partition) = split(&set, config.threshold)?;
    let plan = balance_plan(&set.counts()).restricted_to(&partition.tail);
    let sets = augment_balanced(&classes, &partition, &plan, &config.augmenter, config.seed)?;
    let aug: ClassSets = sets.iter().map(|(&c, s)| (c, s.samples.clone())).collect();
    let report = fdg_tail(&classes, &aug, &partition)?;
    let nonempty: ClassSets = aug.into_iter().filter(|(_, m)| !m.is_empty()).collect();
    if nonempty.is_empty() {
        return Err(FdgError::InvalidParameter("no tail class needs augmentation".into()).into());
    }
    write_embeddings(&EmbeddingSet::from_class_sets(&nonempty)?, output, format)?;
    let per_class = sets
        .iter()
        .map(|(&c, s)| {
            let entry = AugmentClass {
                count: s.samples.len(),
                degenerate: s.degenerate,
                fdg: report.per_class[&c].fdg,
            };
            (c, entry)
        })
        .collect();
    let results = AugmentResults {
        tail: partition.tail.clone(),
        fdg_tail: report.fdg_tail,
        per_class,
        output: output.to_path_buf(),
    };
    let seed = config.seed;
    ctx.emit("augment", config, Some(seed), results)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectConfig {
    pub direction: Direction,
    /// Clusters per class; clamped to the class's pool size.
    pub k: usize,
    pub seed: u64,
    pub threshold: f64,
    pub evaluation: Evaluation,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            direction: Direction::Maximize,
            k: fdg_core::selection::DEFAULT_CLUSTERS,
            seed: 0,
            threshold: DEFAULT_HEAD_THRESHOLD,
            evaluation: Evaluation::Direct,
        }
    }
}

#[derive(Serialize)]
struct SelectClass {
    /// Positions within this class's samples in the pool file.
    indices: Vec<usize>,
    plan: SelectionPlan,
}

#[derive(Serialize)]
struct SelectResults {
    fdg_tail: f64,
    per_class: BTreeMap<ClassId, SelectClass>,
    output: PathBuf,
}

pub fn select(
    ctx: Ctx,
    input: &Path,
    pool: &Path,
    output: &Path,
    config: SelectConfig,
) -> CliResult<()> {
    check_threshold(config.threshold)?;
    if config.k == 0 {
        return Err(CliError::Usage("k must be positive".into()));
    }
    let format = output_format(output)?;
    let set = read_embeddings(input)?;
    let pool_set = read_embeddings(pool)?;
    let (classes, partition) = split(&set, config.threshold)?;
    let plan = balance_plan(&set.counts()).restricted_to(&partition.tail);
    let mut pools = pool_set.by_class();

    let mut chosen = ClassSets::new();
    let mut per_class = BTreeMap::new();
    for (&class, &quota) in plan.quota.iter().filter(|(_, &q)| q > 0) {
        let annotate = |e: FdgError| CliError::Domain(FdgError::Class {
            class,
            source: Box::new(e),
        });
        let candidates = pools.remove(&class).ok_or_else(|| {
            annotate(FdgError::InsufficientPool {
                available: 0,
                quota,
            })
        })?;
        let k = config.k.min(candidates.len());
        let clusters = kmeans(&candidates, k, config.seed.wrapping_add(u64::from(class)))
            .map_err(annotate)?;
        let sel = greedy_select_with(
            &classes[&class],
            &clusters,
            &candidates,
            quota,
            config.direction,
            None,
            config.evaluation,
        )
        .map_err(annotate)?;
        chosen.insert(class, sel.samples);
        per_class.insert(
            class,
            SelectClass {
                indices: sel.indices,
                plan: sel.plan,
            },
        );
    }
    if chosen.is_empty() {
        return Err(FdgError::InvalidParameter("no tail class needs augmentation".into()).into());
    }
    let report = fdg_tail(&classes, &chosen, &partition)?;
    write_embeddings(&EmbeddingSet::from_class_sets(&chosen)?, output, format)?;
    let results = SelectResults {
        fdg_tail: report.fdg_tail,
        per_class,
        output: output.to_path_buf(),
    };
    let seed = config.seed;
    ctx.emit("select", config, Some(seed), results)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepRunConfig {
    pub augmenter: AugmenterKind,
    pub threshold: f64,
    pub sweep: SweepConfig,
}

impl Default for SweepRunConfig {
    fn default() -> Self {
        Self {
            augmenter: AugmenterKind::default(),
            threshold: DEFAULT_HEAD_THRESHOLD,
            sweep: SweepConfig::default(),
        }
    }
}

#[derive(Debug, Serialize)]
struct IndexEntry {
    rank: usize,
    file: String,
    run: usize,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_fraction: Option<f64>,
    fdg_tail: f64,
    per_class_fdg: BTreeMap<ClassId, f64>,
}

#[derive(Serialize)]
struct SweepResults {
    out_dir: PathBuf,
    sets: Vec<IndexEntry>,
}

pub fn sweep(
    ctx: Ctx,
    input: &Path,
    out_dir: &Path,
    format: Format,
    config: SweepRunConfig,
) -> CliResult<()> {
    check_threshold(config.threshold)?;
    let set = read_embeddings(input)?;
    let (classes, partition) = split(&set, config.threshold)?;
    let result = fdg_sweep(&classes, &config.augmenter, &partition, &config.sweep)?;
    std::fs::create_dir_all(out_dir)?;

    let mut index = Vec::with_capacity(result.sets.len());
    for (rank, s) in result.sets.iter().enumerate() {
        let aug: ClassSets = s
            .sets
            .iter()
            .filter(|(_, a)| !a.samples.is_empty())
            .map(|(&c, a)| (c, a.samples.clone()))
            .collect();
        let file = format!("set_{rank:03}.{}", format.extension());
        if !aug.is_empty() {
            write_embeddings(&EmbeddingSet::from_class_sets(&aug)?, &out_dir.join(&file), format)?;
        }
        index.push(IndexEntry {
            rank,
            file,
            run: s.run,
            seed: s.seed,
            max_fraction: s.max_fraction,
            fdg_tail: s.fdg_tail(),
            per_class_fdg: s.report.per_class.iter().map(|(&c, r)| (c, r.fdg)).collect(),
        });
    }
    write_json(&index, &out_dir.join("index.json"))?;
    let seed = config.sweep.seed;
    let results = SweepResults {
        out_dir: out_dir.to_path_buf(),
        sets: index,
    };
    ctx.emit("sweep", config, Some(seed), results)
}

#[derive(Serialize)]
struct GenResults {
    counts: BTreeMap<ClassId, usize>,
    test_per_class: usize,
    means: Vec<Vec<f64>>,
    sds: Vec<f64>,
    restricted: BTreeSet<ClassId>,
    train: PathBuf,
    test: PathBuf,
}

pub fn gen(ctx: Ctx, train: &Path, test: &Path, config: SynthConfig) -> CliResult<()> {
    let (train_format, test_format) = (output_format(train)?, output_format(test)?);
    let data = gen_longtail(&config)?;
    write_embeddings(&data.train, train, train_format)?;
    write_embeddings(&data.test, test, test_format)?;
    let results = GenResults {
        counts: data.counts,
        test_per_class: config.n_test_per_class,
        means: data.means,
        sds: data.sds,
        restricted: data.restricted,
        train: train.to_path_buf(),
        test: test.to_path_buf(),
    };
    let seed = config.seed;
    ctx.emit("gen", config, Some(seed), results)
}

#[derive(Serialize)]
struct ExperimentResults {
    summary: ExperimentSummary,
    runs: Vec<fdg_core::synth::SeedOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    csv: Option<PathBuf>,
}

pub fn experiment(ctx: Ctx, csv: Option<&Path>, config: ExperimentConfig) -> CliResult<()> {
    let report = inverted_u_experiment(&config)?;
    if let Some(path) = csv {
        write_experiment_csv(&report, path)?;
    }
    let results = ExperimentResults {
        summary: report.summary,
        runs: report.runs,
        csv: csv.map(Path::to_path_buf),
    };
    let seed = config.synth.seed;
    ctx.emit("experiment", config, Some(seed), results)
}
