pub mod approx;
pub mod budget;
pub mod cli;
pub mod error;
pub mod global;
pub mod ilp;
pub mod local;
pub mod mission;
pub mod scalar;
pub mod sim;

pub use budget::Budget;
pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default exact scalar.
pub type Rational = num_rational::Ratio<i128>;

pub type Model = ilp::IlpModel<Rational>;
pub type Workload = local::WorkloadInstance<Rational>;
pub type LocalSchedule = local::Schedule<Rational>;
pub type Cluster = global::ClusterSpec<Rational>;
pub type ClusterSchedule = global::GlobalSchedule<Rational>;
pub type Verdict = mission::MissionVerdict<Rational>;
