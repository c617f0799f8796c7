//! Feature selection for reinforcement learning in factored MDPs.
//!
//! Structure learning with candidate parent sets, the superset test that
//! discards features, optimistic planning on a flattened model, and the
//! explore/exploit agents built from them.

pub mod domains;
pub mod estimator;
pub mod fmdp;
pub mod fsee;
pub mod harness;
pub mod planner;
pub mod superset;

pub use fmdp::{
    FactoredMdp, FeatureSpace, FeatureValueVector, FmdpError, NodeId, ParentSet, State, TabularMdp,
};
