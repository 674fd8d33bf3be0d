//! Diversity measurement and augmentation selection for long-tailed datasets.
//!
//! The volume of a class is the log-determinant of its regularized sample
//! covariance; the feature diversity gain (FDG) of an augmented set is the
//! relative change in that volume once the augmented samples join the class.
//! On top of these sit head/tail partitioning, four augmentation schemes,
//! cluster-then-greedy selection of augmented sets with targeted FDG, a
//! synthetic long-tailed benchmark and the on-disk dataset formats.

pub mod augment;
pub mod dataset;
pub mod error;
pub mod fdg;
pub mod io;
pub mod linalg;
pub mod partition;
pub mod selection;
pub mod synth;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Version of this library, recorded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Integer class label.
pub type ClassId = u32;

/// Deterministic generator for one `(seed, stream)` pair.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub use augment::{
    augment_balanced, augment_class, balance_plan, AugmentedSet, AugmenterKind, BalancePlan,
    ClassSets,
};
pub use dataset::EmbeddingSet;
pub use error::{FdgError, Result};
pub use fdg::{fdg, fdg_lower_bound, fdg_tail, FdgResult, TailFdgReport};
pub use linalg::{center, manifold_volume, SampleMatrix, Volume};
pub use partition::{
    imbalance_factor, partition_head_tail, semantic_scale_profile, ClassPartition,
    ImbalanceProfile,
};
pub use selection::{
    fdg_sweep, greedy_select, kmeans, uniform_subsample_by_fdg, ClusterSet, Direction,
    SelectionPlan, SweepConfig, SweepMode, SweepResult,
};
pub use synth::{
    gen_longtail, inverted_u_experiment, nearest_centroid_eval, EvalReport, ExperimentConfig,
    ExperimentReport, SynthConfig,
};
