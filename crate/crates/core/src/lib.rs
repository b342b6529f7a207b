//! Desk-scale computing-continuum simulator with self-adaptive
//! orchestration agents.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod bayesnet;
pub mod composition;
pub mod error;
pub mod harness;
pub mod infrastructure;
pub mod rng;
pub mod scenario;
pub mod services;
pub mod sim;
