//! Learning-path recommendation engine.
//!
//! The crate is split along the pipeline:
//!
//! * [`graph`] holds the prerequisite DAG and candidate selection around a
//!   central focus item.
//! * [`nn`] is a small hand-written differentiable kit (dense, LSTM,
//!   embedding, masked softmax, Adam) with analytic backward passes.
//! * [`kt`] is the embedding-DKT knowledge tracer built on top of [`nn`].
//! * [`sim`] contains the rule-based (KSS) and DKT-driven (KES) learner
//!   simulators behind one episodic contract.
//! * [`agent`] is the actor-critic recommender, the episode loop and the
//!   comparison baselines.
//! * [`data`] reads and writes session logs and builds dataset partitions.

pub mod agent;
pub mod data;
pub mod error;
pub mod graph;
pub mod kt;
pub mod metrics;
pub mod nn;
pub mod rngs;
pub mod sim;

pub use error::{Error, Result};
pub use graph::{ItemId, PrereqGraph, TargetSet};
pub use kt::{DktConfig, DktModel, InteractionRecord, KnowledgeLevel};
