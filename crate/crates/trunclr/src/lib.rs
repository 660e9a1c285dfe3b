//! Linear regression from truncated samples when the truncation region is
//! an unknown union of intervals. The estimator first learns the survival
//! set from the observed responses plus a smooth reference sample, then
//! minimizes the perturbed negative log-likelihood with projected SGD,
//! aggregating several independent runs by majority vote.

pub mod error;
pub mod fixtures;
pub mod gauss;
pub mod interval;
pub mod likelihood;
pub mod model;
pub mod pipeline;
pub mod psgd;
pub mod set_learner;
pub mod stats;
pub mod trunc_gauss;
pub mod warm_start;

pub use error::{Error, Result};
pub use interval::IntervalUnion;
pub use model::{Dataset, FeatureDistSpec, TruncatedModel};
pub use pipeline::{EstimateReport, Mode, RunConfig};
