//! Discrete-time simulator and analysis library for robust cloud workload
//! scheduling under mixed genuine/malicious job arrivals.
//!
//! The library has two halves:
//!
//! - **Analysis** (exact rational arithmetic): feasible-configuration
//!   enumeration, capacity-region membership with exact margins, scanning
//!   vectors and the expected-arriving-weight formula, and the stability
//!   classifier.
//! - **Simulation** (integer counters, f64 weights): the centralized
//!   work-weighted scheduler, its decentralized per-server variant with six
//!   routing policies, a seeded workload generator, and a metrics pipeline
//!   with CSV export.
//!
//! Scenario files tie both halves together; see [`scenario`] and [`engine`].

pub mod capacity;
pub mod dist;
pub mod domain;
pub mod engine;
pub mod lp;
pub mod metrics;
pub mod rational;
pub mod rng;
pub mod routing;
pub mod scanning;
pub mod sched;
pub mod scenario;
pub mod workload;

pub use capacity::{enumerate_maximal_configs, membership, FeasibleSet, Margin, RegionVerdict, Stability};
pub use domain::{ArrivalSpec, Configuration, Job, LengthDistribution, ResourceVector, Truth, VmTypeSpec};
pub use engine::{analyze, run, run_adaptive, Simulation};
pub use scanning::{a_vector, classify, estimate_rates, optimal_alpha, scan_all, scan_none, AVector, ScanVector};
pub use scenario::Scenario;
pub use workload::WorkloadGenerator;
