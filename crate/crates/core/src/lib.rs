//! Conditional permutation importance with cross-fitting, baselines,
//! simulation scenarios and a benchmark harness.

pub mod bench;
pub mod condsampler;
pub mod data;
pub mod error;
pub mod inference;
pub mod learners;
pub mod linalg;
pub mod metrics;
pub mod rng;
pub mod simgen;
pub mod stats;

pub use condsampler::{Construction, SamplerConfig};
pub use data::{Dataset, Task};
pub use error::{Error, Result};
pub use inference::{CpiConfig, ImportanceReport, Method, VariableImportance, WaldMode};
pub use learners::{Learner, LearnerSpec};
pub use rng::Stream;
pub use simgen::{Scenario, ScenarioSpec};
