//! Set-level personalized ranking from implicit feedback.
//!
//! Items are ranked for a user by learning the probability that the
//! user's observed items, taken together as a set, are drawn from a
//! size-conditioned determinantal point process over a small
//! per-instance ground set. A matrix-factorization backbone supplies
//! per-item quality scores, a separately trained low-rank kernel
//! supplies category diversity, and the two are combined through the
//! quality/diversity decomposition of the DPP kernel.
//!
//! The modules follow the pipeline: [`data`] ingests and splits
//! interaction data, [`diversity`] learns the item kernel, [`sampling`]
//! builds epoch schedules of ground-set instances, [`dpp`] evaluates
//! subset probabilities, [`objectives`] turns them into losses and
//! gradients, [`model`] owns the parameters and the training loop, and
//! [`eval`] scores recommendation quality, category coverage, and
//! subset-probability trends. [`verify`] bundles the self-check oracles
//! behind the `lkp verify` command.

pub mod config;
pub mod data;
pub mod diversity;
pub mod dpp;
pub mod eval;
pub mod linalg;
pub mod model;
pub mod objectives;
pub mod rng;
pub mod sampling;
pub mod verify;

pub use data::InteractionDataset;
pub use diversity::DiversityKernel;
pub use dpp::{GroundSetInstance, ItemId, PersonalizedKernel, UserId};
pub use model::{EmbeddingTable, TrainConfig, TrainOutcome};
