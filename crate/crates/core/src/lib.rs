//! Evidential reasoning on tree-structured probabilistic inference networks.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: the network schema, validation and evidence.
//! - [`propagation`]: exact posteriors, link chaining, virtual links and
//!   depth-vector condensation, plus a brute-force enumeration oracle.
//! - [`strategies`]: decision rules, evaluation scores and the four control
//!   strategies as a session state machine.
//! - [`simulator`]: sampled cases, offline diagnosis and comparison reports.
//!
//! ```
//! use infernet::{fixtures, propagate_beliefs, Evidence, EvidenceValue};
//!
//! let net = fixtures::figure4();
//! let evidence = Evidence::new().with("N111", EvidenceValue::Hard(true)).unwrap();
//! let belief = propagate_beliefs(&net, &evidence).unwrap();
//! let p = belief.get(&net, "N1").unwrap();
//! assert!((p - 0.73 / 0.97).abs() < 1e-12);
//! ```

pub mod fixtures;
pub mod model;
pub mod propagation;
pub mod simulator;
pub mod strategies;

pub use model::{
    load_network, validate_network, Evidence, EvidenceValue, LinkCpt, LinkSpec, LoadError, Network,
    NetworkSpec, NodeId, NodeKind, NodeSpec, Thresholds, Violation, ViolationKind,
};
pub use propagation::{
    chain_links, enumerate_posterior, propagate_beliefs, transform_tree, virtual_links,
    BeliefState, DepthVector, LevelVector, PropagationError, VirtualTree,
};
pub use simulator::{
    compare_report, generate_dataset, run_trials, sample_case, ComparisonReport, Dataset,
    TrialResult,
};
pub use strategies::{
    decide, ev_discrimination, ev_info_gain, run_to_termination, Decision, EvScore, EvTiming, Goal,
    Mode, SessionState, Status, StrategySpec,
};
