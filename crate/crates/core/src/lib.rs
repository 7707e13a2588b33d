//! Shared-control grasp planning for telemanipulation.
//!
//! The operator's per-task intent is expanded into a distribution over task
//! combinations ([`intent`]), each embodiment's grasps are modeled as one
//! Gaussian class per combination ([`model`], fitted by [`em`]), and a robot
//! configuration is chosen by one of three controllers ([`controllers`]):
//! pure mimicry, pure intent matching, or an arbitration between the two
//! whose weights come from the KL divergence between the human and robot
//! grasp models ([`divergence`]).
//!
//! ```
//! use graspshare::intent::{powerset_target, IntentVector, TaskSet};
//!
//! let tasks = TaskSet::new(["use", "transfer", "handover"])?;
//! let target = powerset_target(&tasks, &IntentVector::new(vec![0.8, 0.3, 0.78])?)?;
//! let use_only = tasks.combination(&["use"])?;
//! assert!((target.get(use_only) - 0.1232).abs() < 1e-12);
//! # Ok::<(), graspshare::Error>(())
//! ```
//!
//! The guide under `book/` walks through each piece; its Rust snippets are
//! compiled and run as doctests of this crate.

pub mod bounds;
pub mod controllers;
pub mod divergence;
pub mod em;
pub mod error;
pub mod feature;
pub mod gaussian;
pub mod intent;
pub mod model;
pub mod optim;
pub mod replay;

pub use bounds::WorkspaceBounds;
pub use controllers::{solve, Mode, Solution, SolveRequest, SolverConfig};
pub use divergence::{kl_feature, kl_hand, kl_table, ArbitrationWeights, DivergenceConfig};
pub use em::{fit_em, Dataset, Demonstration, FitConfig};
pub use error::{Error, Result};
pub use feature::{FeatureVector, Features};
pub use gaussian::{class_likelihood, GaussianClass};
pub use intent::{estimate_intent, powerset_target, Combination, IntentVector, TargetVector, TaskSet};
pub use model::{load_model, save_model, GraspModel};
pub use replay::{replay, FrameContext, ReplayReport, Trajectory};

// mdbook cannot link against this crate, so each chapter is pulled in as
// a doc comment and its snippets run under `cargo test --doc`.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/intent.md")]
    mod intent {}
    #[doc = include_str!("../../../book/src/grasp-models.md")]
    mod grasp_models {}
    #[doc = include_str!("../../../book/src/divergence.md")]
    mod divergence {}
    #[doc = include_str!("../../../book/src/controllers.md")]
    mod controllers {}
    #[doc = include_str!("../../../book/src/cli-and-service.md")]
    mod cli_and_service {}
    #[doc = include_str!("../../../README.md")]
    mod readme {}
}
