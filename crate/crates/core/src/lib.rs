//! Metric-learning embeddings shaped by auxiliary labels.
//!
//! An embedding network is trained with a triplet loss plus optional terms
//! that use a secondary label (expression, pose, ...) to impose geometry on
//! each identity's cluster: tight per-label mini-clusters ([`losses::pdm_loss`]),
//! label-to-label distances preserved across identities ([`losses::pdp_loss`]),
//! fixed label-to-label displacement vectors ([`losses::fbv_loss`]), a learned
//! label transfer map ([`losses::ce_loss`]), or a plain classification head
//! ([`losses::mtl_loss`]).

// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod math;
pub mod model;
mod rng;
pub mod sampling;
pub mod spaces;
pub mod training;

pub use data::{Dataset, Example, SplitSpec, SyntheticSpec};
pub use error::{Error, Result};
pub use eval::{EvaluationReport, GeometryDiagnostics, VerificationPairSet};
pub use losses::{LossKind, LossRecipe, LossTerm, RecipeDefaults};
pub use model::{CompositionNet, MlpNet, MlpSpec, ModelBundle, MtlHead};
pub use rng::Rng;
pub use sampling::{SamplerConfig, TupleBatch};
pub use spaces::{SpaceConfig, SpaceKind};
pub use training::{TrainConfig, TrainLog, TrainOutcome, ValidationCriterion};
