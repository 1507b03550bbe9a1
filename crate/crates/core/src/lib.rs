//! Simulation and optimal control of user activity and opinions on social
//! networks modelled as jump-diffusion SDEs driven by Hawkes processes.
//!
//! The crate is organized bottom-up:
//!
//! - [`network`]: topologies, model parameters and control problems;
//! - [`pointproc`]: Hawkes thinning, compensators, survival processes;
//! - [`sdesim`]: Euler simulation of the controlled SDEs and Monte-Carlo costs;
//! - [`hjb`]: backward coefficient ODEs, feedback policies, Itô verification;
//! - [`baselines`]: cross-entropy, finite-difference, greedy and constant policies;
//! - [`dynnet`]: link-creation processes on growing networks;
//! - [`harness`]: experiment configuration, orchestration and reports.

// `!(a > b)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod dynnet;
pub mod error;
pub mod harness;
pub mod hjb;
pub mod network;
pub mod pointproc;
pub mod rng;
pub mod sdesim;
pub mod stats;

pub use error::{Error, ErrorClass, Result};
