//! Eyes-closed safety kernels.
//!
//! Computes the set of joint configurations from which a controlled (internal)
//! system can stay safe from an adversarial external system even when
//! observations of the external system are lost. The pipeline is:
//!
//! 1. [`reach`]: forward reachable set of the external system, as the
//!    sub-zero level set of a grid value function.
//! 2. [`setops`]: project, inflate and extrude that set into the time-varying
//!    unsafe set of the internal system, represented by a signed distance.
//! 3. [`avoid`]: backward avoid tube of the internal system against the
//!    unsafe set (a variational inequality with a running minimum).
//! 4. [`kernel_runtime`]: the deployable safety filter built on the result.
//! 5. [`sim`]: closed-loop verification under observation loss.
//!
//! Per-node loops run on rayon when the `parallel` feature is enabled (the
//! default); see [`exec::Execution`].

pub mod avoid;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod grid;
pub mod hj_solver;
pub mod kernel_runtime;
pub mod reach;
pub mod setops;
pub mod sim;

pub use error::{Error, Result};
