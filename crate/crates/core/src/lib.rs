//! Constrained, surrogate-assisted CMA-ES for expensive black-box problems.
//!
//! The crate is organised around a small number of building blocks:
//!
//! * [`cma`]: the (μ/μ_w, λ)-CMA-ES engine (sampling, ranking, updates, termination).
//! * [`constraints`]: adaptive penalization with rejection for sum-of-subset
//!   interval constraints.
//! * [`metamodel`]: locally weighted full-quadratic meta-models and the
//!   approximate ranking procedure that decides how many true evaluations a
//!   generation needs.
//! * [`ga`]: a real-coded genetic algorithm with elitism and repair, used as a
//!   baseline.
//! * [`well`]: a well-placement objective built on a synthetic reservoir proxy
//!   and net-present-value economics.
//! * [`harness`]: run configuration, seeded single runs, batches and
//!   optimizer comparisons with CSV outputs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(test, allow(clippy::needless_range_loop, clippy::manual_clamp))]

pub mod benchmarks;
pub mod cma;
pub mod constraints;
pub mod error;
pub mod ga;
pub mod harness;
pub mod metamodel;
pub mod optimizer;
pub mod problem;
pub mod rng;
pub mod stats;
pub mod well;

pub use error::{Error, Result};
