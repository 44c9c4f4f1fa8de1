//! neurq: an embeddable engine that compiles PREDICT-extended SQL into
//! jointly optimized relational + AI plans and executes them with
//! cross-query subplan sharing, dynamic batching, a unified multi-tier
//! cache, snapshot-consistent reads, and multi-tenant scheduling over
//! simulated AI engines.
//!
//! The crate is organized around the query pipeline:
//!
//! - [`catalog`] — versioned row storage, model catalog, tenant policies
//! - [`sql`] — parser, unparser, and binder for the extended dialect
//! - [`plan`] — logical plans, rewrite rules, plan fingerprints
//! - [`opt`] — physical plan search under bounded objectives
//! - [`cache`] — unified multi-tier cache with benefit-density eviction
//! - [`model`] — deterministic mock AI backends and cost accounting
//! - [`exec`] — shared execution graph, batching, engines, virtual time
//! - [`bench`] — workload generators and the benchmark runner

pub mod bench;
pub mod cache;
pub mod catalog;
pub mod session;
pub mod sql;
pub mod exec;
pub mod expr;
pub mod model;
pub mod opt;
pub mod par;
pub mod plan;
pub mod types;
