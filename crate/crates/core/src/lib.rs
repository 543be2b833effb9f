//! Collaborative predictive blacklisting (CPB).
//!
//! Organizations contribute daily attack logs, a semi-trusted authority
//! clusters them by log similarity without ever seeing the raw logs, cluster
//! members share selected events with each other, and every organization runs
//! an EWMA forecaster over its (augmented) log to predict next-day attack
//! sources.
//!
//! The crate is organized around that pipeline:
//!
//! * [`corpus`] — attack events, /24 reduction, log parsing, sliding-window
//!   construction, and a synthetic corpus generator.
//! * [`predictor`] — EWMA forecasting, blacklist generation, and evaluation
//!   metrics.
//! * [`clustering`] — the organization-to-organization (O2O) similarity
//!   matrix and the agglomerative / k-means / k-NN back-ends.
//! * [`sharing`] — within-cluster sharing strategies (local, global,
//!   intersection, IP2IP correlated attacks).
//! * [`psi`] — two-party PSI-CA and PSI-DT protocols with plaintext oracles.
//! * [`server_aided`] — the PRP-labeled server-aided variant in which the
//!   authority intersects encrypted multisets and routes ciphertexts.
//! * [`sketch`] — Count-Min sketches and mask-based private aggregation.
//! * [`baselines`] — the time-series / Cross-Association and pairwise
//!   selection baselines the hybrid scheme is compared against.
//!
//! Data-parallel inner loops (pairwise similarity, per-organization
//! encryption, window sweeps) go through [`exec`], which runs on rayon when
//! the `parallel` feature (default) is enabled and falls back to sequential
//! iteration otherwise. Sequential variants of the hot entry points are
//! exported with a `_seq` suffix so the two paths can be benchmarked against
//! each other.

pub mod baselines;
pub mod clustering;
pub mod corpus;
pub mod exec;
pub mod predictor;
pub mod psi;
pub mod server_aided;
pub mod sharing;
pub mod sketch;
pub mod util;
