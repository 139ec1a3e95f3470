// `!(v > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod experiments;
pub mod fairness;
pub mod inner;
pub mod joint;
pub mod model;
pub mod oracle;
pub mod outer;
pub mod scenario_gen;

pub use error::{Error, Result};
pub use fairness::{ExtReal, FairnessParam};
pub use inner::{InnerMethod, InnerSolution, SolverConfig};
pub use model::{AllocationResult, CostModel, Method, QuadraticUtility, Scenario, SurplusProfile};
pub use outer::{OuterConfig, SearchOutcome};
