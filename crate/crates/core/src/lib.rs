//! Closed testing of all pairwise treatment comparisons in multi-arm trials.
//!
//! For `K` arms with known variances, every intersection of the pairwise
//! null hypotheses `mu_i = mu_j` is tested with the largest absolute
//! z-statistic against the equicoordinate quantile of its own correlation
//! matrix. The resulting closed procedure controls the family-wise error
//! strongly and is uniformly more powerful than Bonferroni.
//!
//! Modules, from the bottom up:
//!
//! - [`model`]: arms, comparison indexing, z-statistics and correlations
//! - [`mvn`]: multivariate normal rectangle probabilities and quantiles
//! - [`closed`]: critical-value tables, the closed test and comparators
//! - [`design`]: disjunctive power, the least favourable configuration,
//!   sample size
//! - [`spending`], [`sequential`]: error spending and group-sequential
//!   boundaries for every intersection
//! - [`combination`]: flexible designs with inverse-normal combination
//! - [`sim`]: replicated trial simulation
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix `f64`.

pub mod closed;
pub mod combination;
pub mod design;
pub mod error;
pub mod model;
pub mod mvn;
pub mod normal;
pub mod scalar;
pub mod sequential;
pub mod sim;
pub mod spending;
pub mod stats;
pub mod subsets;

pub use closed::{closed_test, closed_test_z, critical_values, ClosureDecision, Procedure};
pub use error::{Error, Result};
pub use model::{ComparisonSet, Sided};
pub use mvn::{equicoord_quantile, mvn_rect, Tail};
pub use scalar::Scalar;
pub use sequential::{gs_boundaries, gs_closed_test, joint_covariance};
pub use sim::{run_scenario, table1_report, ProcedureSpec};
pub use spending::SpendingFunction;

pub type TrialConfig = model::TrialConfig<f64>;
pub type CorrelationModel = model::CorrelationModel<f64>;
pub type ComparisonStats = model::ComparisonStats<f64>;
pub type Rectangle = mvn::Rectangle<f64>;
pub type MvnOptions = mvn::MvnOptions<f64>;
pub type QuantileOptions = mvn::QuantileOptions<f64>;
pub type ProbResult = mvn::ProbResult<f64>;
pub type CriticalValueTable = closed::CriticalValueTable<f64>;
pub type MeanConfig = design::MeanConfig<f64>;
pub type PowerResult = design::PowerResult<f64>;
pub type SampleSize = design::SampleSize<f64>;
pub type SpendingSchedule = spending::SpendingSchedule<f64>;
pub type BoundarySchedule = sequential::BoundarySchedule<f64>;
pub type StageData = sequential::StageData<f64>;
pub type GsDecision = sequential::GsDecision<f64>;
pub type CombinationWeights = combination::CombinationWeights<f64>;
pub type FlexibleDesign = combination::FlexibleDesign<f64>;
pub type StageObservation = combination::StageObservation<f64>;
pub type SimScenario = sim::SimScenario<f64>;
