//! Certificates of incremental stability and performance for smooth
//! nonlinear systems.
//!
//! The pipeline runs from a [`system::NonlinearSystem`] through an affine
//! parameter-varying embedding of its Jacobians ([`dpv::DpvEmbedding`]),
//! assembles vertex matrix inequalities ([`lmi`]), solves them with a small
//! self-contained interior-point SDP solver ([`sdp`]) and returns a
//! [`analysis::GainCertificate`]. The [`simulate`] module checks the
//! differential, incremental and general dissipation inequalities along
//! simulated trajectories.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod dpv;
pub mod dual;
pub mod error;
pub mod lmi;
pub mod report;
pub mod sdp;
pub mod simulate;
pub mod system;

pub use error::{Error, Result};
