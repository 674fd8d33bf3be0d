//! `fdg`: measure, augment and select long-tailed embedding datasets.
//!
//! Every subcommand writes a JSON report holding the effective configuration,
//! the results, library versions and the seed. Exit status is 0 on success, 1
//! when the computation fails and 2 for invalid usage.

mod commands;
mod report;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fdg_core::augment::GridShape;
use fdg_core::io::Format;
use fdg_core::selection::{Evaluation, SubsampleRule, SweepMode};
use fdg_core::{ClassId, Direction, ExperimentConfig, SynthConfig};

use crate::commands::{AugmenterFlags, Ctx};
use crate::report::{load_config, CliError, CliResult, Sink};

#[derive(Parser, Debug)]
#[command(name = "fdg", version, about = "Feature diversity gain toolkit for long-tailed data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration; command-line flags override its values
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Write the report to this file instead of stdout
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,

    /// Leave the timestamp out of the report
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Args, Debug)]
struct AugmenterArgs {
    /// Augmentation scheme
    #[arg(long, value_enum)]
    method: Option<Method>,

    /// Beta(alpha, alpha) parameter of the mixing weight or patch area
    #[arg(long)]
    alpha: Option<f64>,

    /// Relative-head factor of the remix pairing rule
    #[arg(long)]
    kappa: Option<f64>,

    /// Sample layout for patch pasting, HxW or HxWxC
    #[arg(long, value_parser = commands::parse_grid)]
    grid: Option<GridShape>,
}

impl AugmenterArgs {
    fn flags(&self) -> AugmenterFlags {
        AugmenterFlags {
            method: self.method.map(|m| m.as_str().to_string()),
            alpha: self.alpha,
            kappa: self.kappa,
            grid: self.grid,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Method {
    RemixMix,
    PatchPaste,
    VarianceTransfer,
    FeatureFusion,
}

impl Method {
    fn as_str(self) -> &'static str {
        match self {
            Method::RemixMix => "remix_mix",
            Method::PatchPaste => "patch_paste",
            Method::VarianceTransfer => "variance_transfer",
            Method::FeatureFusion => "feature_fusion",
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum DirectionArg {
    Maximize,
    Minimize,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum EvaluationArg {
    Direct,
    Moments,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ModeArg {
    Stochastic,
    Greedy,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum SubsampleArg {
    Rank,
    Value,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum FormatArg {
    Csv,
    FdgBin,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Manifold volume of a dataset, optionally per class
    Volume {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        by_class: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Feature diversity gain of an augmented set over a base set
    Fdg {
        #[arg(long)]
        base: PathBuf,
        #[arg(long)]
        aug: PathBuf,
        /// Only use samples with this label from both files
        #[arg(long)]
        class: Option<ClassId>,
        #[command(flatten)]
        common: Common,
    },
    /// Head/tail split and imbalance factor
    Partition {
        /// Class counts as a JSON object or array
        #[arg(long, required_unless_present = "input", conflicts_with = "input")]
        counts: Option<PathBuf>,
        /// Dataset whose labels give the counts
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Per-class volumes, their ranking and the head/tail split
    Profile {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Balance the tail classes with one augmentation scheme
    Augment {
        #[arg(long)]
        input: PathBuf,
        /// Augmented samples (.csv, .fdgb or .bin)
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        augmenter: AugmenterArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threshold: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Pick each tail class's quota from a candidate pool by greedy FDG
    Select {
        #[arg(long)]
        input: PathBuf,
        /// Labelled candidate samples
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_enum)]
        direction: Option<DirectionArg>,
        /// Clusters per class
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_enum)]
        evaluation: Option<EvaluationArg>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threshold: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Generate many augmented sets and keep an even spread of FDG
    Sweep {
        #[arg(long)]
        input: PathBuf,
        /// Directory for the kept sets and index.json
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value = "fdg-bin")]
        format: FormatArg,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        #[arg(long)]
        m_generate: Option<usize>,
        #[arg(long)]
        m_keep: Option<usize>,
        #[arg(long, value_enum)]
        subsample: Option<SubsampleArg>,
        /// Clusters per class in greedy mode
        #[arg(long)]
        k: Option<usize>,
        /// Candidate pool size as a multiple of the quota in greedy mode
        #[arg(long)]
        pool_factor: Option<usize>,
        #[arg(long, value_enum)]
        evaluation: Option<EvaluationArg>,
        #[command(flatten)]
        augmenter: AugmenterArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threshold: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Draw a synthetic long-tailed training set and a balanced test set
    Gen {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Compare low, mid and high FDG augmentation on synthetic data
    Experiment {
        /// Also write one (regime, seed, fdg_tail, balanced_accuracy) row per run
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        seeds: Option<usize>,
        #[command(flatten)]
        synth: SynthArgs,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    imbalance_factor: Option<f64>,
    #[arg(long)]
    n_max: Option<usize>,
    /// Share of the true spread visible in tail training data
    #[arg(long)]
    observed_fraction: Option<f64>,
    #[arg(long)]
    n_test: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

impl SynthArgs {
    fn apply(&self, c: &mut SynthConfig) {
        set(&mut c.num_classes, self.classes);
        set(&mut c.dim, self.dim);
        set(&mut c.imbalance_factor, self.imbalance_factor);
        set(&mut c.n_max, self.n_max);
        set(&mut c.observed_fraction, self.observed_fraction);
        set(&mut c.n_test_per_class, self.n_test);
        set(&mut c.seed, self.seed);
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn ctx(common: &Common, inputs: &[(&'static str, &Path)]) -> Ctx {
    Ctx {
        sink: Sink {
            path: common.report.clone(),
            timestamp: !common.no_timestamp,
        },
        inputs: inputs
            .iter()
            .map(|(k, p)| (*k, p.to_path_buf()))
            .collect::<BTreeMap<_, _>>(),
    }
}

fn evaluation(e: EvaluationArg) -> Evaluation {
    match e {
        EvaluationArg::Direct => Evaluation::Direct,
        EvaluationArg::Moments => Evaluation::Moments,
    }
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Volume {
            input,
            by_class,
            common,
        } => {
            let mut config: commands::VolumeConfig = load_config(common.config.as_deref())?;
            config.by_class |= by_class;
            commands::volume(ctx(&common, &[("input", &input)]), &input, config)
        }
        Command::Fdg {
            base,
            aug,
            class,
            common,
        } => {
            let mut config: commands::FdgConfig = load_config(common.config.as_deref())?;
            if class.is_some() {
                config.class = class;
            }
            let c = ctx(&common, &[("base", &base), ("aug", &aug)]);
            commands::fdg_cmd(c, &base, &aug, config)
        }
        Command::Partition {
            counts,
            input,
            threshold,
            common,
        } => {
            let mut config: commands::PartitionConfig = load_config(common.config.as_deref())?;
            set(&mut config.threshold, threshold);
            let mut inputs = Vec::new();
            if let Some(p) = &counts {
                inputs.push(("counts", p.as_path()));
            }
            if let Some(p) = &input {
                inputs.push(("input", p.as_path()));
            }
            let c = ctx(&common, &inputs);
            commands::partition(c, counts.as_deref(), input.as_deref(), config)
        }
        Command::Profile {
            input,
            threshold,
            common,
        } => {
            let mut config: commands::PartitionConfig = load_config(common.config.as_deref())?;
            set(&mut config.threshold, threshold);
            commands::profile(ctx(&common, &[("input", &input)]), &input, config)
        }
        Command::Augment {
            input,
            output,
            augmenter,
            seed,
            threshold,
            common,
        } => {
            let mut config: commands::AugmentConfig = load_config(common.config.as_deref())?;
            augmenter.flags().apply(&mut config.augmenter)?;
            set(&mut config.seed, seed);
            set(&mut config.threshold, threshold);
            commands::augment(ctx(&common, &[("input", &input)]), &input, &output, config)
        }
        Command::Select {
            input,
            pool,
            output,
            direction,
            k,
            evaluation: eval,
            seed,
            threshold,
            common,
        } => {
            let mut config: commands::SelectConfig = load_config(common.config.as_deref())?;
            if let Some(d) = direction {
                config.direction = match d {
                    DirectionArg::Maximize => Direction::Maximize,
                    DirectionArg::Minimize => Direction::Minimize,
                };
            }
            set(&mut config.k, k);
            set(&mut config.evaluation, eval.map(evaluation));
            set(&mut config.seed, seed);
            set(&mut config.threshold, threshold);
            let c = ctx(&common, &[("input", &input), ("pool", &pool)]);
            commands::select(c, &input, &pool, &output, config)
        }
        Command::Sweep {
            input,
            out_dir,
            format,
            mode,
            m_generate,
            m_keep,
            subsample,
            k,
            pool_factor,
            evaluation: eval,
            augmenter,
            seed,
            threshold,
            common,
        } => {
            let mut config: commands::SweepRunConfig = load_config(common.config.as_deref())?;
            augmenter.flags().apply(&mut config.augmenter)?;
            let s = &mut config.sweep;
            set(
                &mut s.mode,
                mode.map(|m| match m {
                    ModeArg::Stochastic => SweepMode::Stochastic,
                    ModeArg::Greedy => SweepMode::Greedy,
                }),
            );
            set(&mut s.m_generate, m_generate);
            set(&mut s.m_keep, m_keep);
            set(
                &mut s.subsample,
                subsample.map(|r| match r {
                    SubsampleArg::Rank => SubsampleRule::Rank,
                    SubsampleArg::Value => SubsampleRule::Value,
                }),
            );
            set(&mut s.k, k);
            set(&mut s.pool_factor, pool_factor);
            set(&mut s.evaluation, eval.map(evaluation));
            set(&mut s.seed, seed);
            set(&mut config.threshold, threshold);
            if config.sweep.m_keep == 0 || config.sweep.m_keep > config.sweep.m_generate {
                return Err(CliError::Usage(format!(
                    "--m-keep must be between 1 and --m-generate ({})",
                    config.sweep.m_generate
                )));
            }
            let format = match format {
                FormatArg::Csv => Format::Csv,
                FormatArg::FdgBin => Format::FdgBin,
            };
            let c = ctx(&common, &[("input", &input)]);
            commands::sweep(c, &input, &out_dir, format, config)
        }
        Command::Gen {
            train,
            test,
            synth,
            common,
        } => {
            let mut config: SynthConfig = load_config(common.config.as_deref())?;
            synth.apply(&mut config);
            commands::gen(ctx(&common, &[]), &train, &test, config)
        }
        Command::Experiment {
            csv,
            seeds,
            synth,
            common,
        } => {
            let mut config: ExperimentConfig = load_config(common.config.as_deref())?;
            synth.apply(&mut config.synth);
            set(&mut config.seeds, seeds);
            commands::experiment(ctx(&common, &[]), csv.as_deref(), config)
        }
    }
}

/// Sizes the global worker pool from `FDG_THREADS` (0 or unset: one per core).
fn init_threads() -> CliResult<()> {
    let threads = match std::env::var("FDG_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Usage(format!("FDG_THREADS must be a count, got {v:?}")))?,
        Err(_) => 0,
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match init_threads().and_then(|()| run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
