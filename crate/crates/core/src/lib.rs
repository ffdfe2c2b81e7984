//! Physical visualization design: choose data structures, cache placement
//! and network shipping so that each interaction of an interface meets its
//! latency bound, and check the result against a brute-force evaluator.
//!
//! This crate is `no_std` and only needs `alloc`. File formats, the CLI, the
//! executor and calibration live in the `pvd` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod binding;
pub mod codec;
pub mod cost;
pub mod deploy;
pub mod interface;
pub mod optimizer;
pub mod oracle;
pub mod physical;
pub mod plan;
pub mod relation;
pub mod samples;
pub mod stats;
pub mod structures;
pub mod value;

pub use binding::{bind, enumerate_bindings, BindError, Binding, BoundValue};
pub use cost::{assess, Calibration, CostReport};
pub use deploy::{DeploymentModel, SiteId};
pub use interface::{validate_spec, Interaction, InteractionKind, InterfaceSpec};
pub use oracle::oracle_eval;
pub use physical::PhysicalPlan;
pub use plan::{PlanNode, Predicate};
pub use relation::{Database, Relation, Schema};
pub use value::{ColumnType, ScalarValue};
