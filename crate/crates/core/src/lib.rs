//! Secure state estimation for continuous-time LTI plants observed through
//! asynchronously sampled, partially compromised sensors.
//!
//! The pipeline is: a Jordan-form [`SystemModel`] is decomposed per sensor
//! ([`observability`]), each sensor runs a local observer on its observable
//! subspace ([`estimator`]), and local estimates are combined by an
//! entry-wise median ([`fusion`]). Measurements travel through an
//! adversarial channel and reordering buffer ([`threat`]). [`bounds`]
//! evaluates the theoretical error envelopes and [`benchmark`] packages the
//! IEEE 14-bus experiment, configuration and simulation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod bounds;
mod error;
pub mod estimator;
pub mod fusion;
pub mod linalg;
pub mod observability;
pub mod system;
pub mod threat;

pub use error::{Error, Result};
pub use linalg::{CMatrix, CVector, C64};
pub use system::{JordanBlock, SystemModel, TrueState};
pub use observability::{SensorDecomposition, SensorSubspace, SparseCertificate};
pub use estimator::{GainDesign, GainPolicy, LocalEstimator};
pub use fusion::{FusedEstimate, Fuser};
pub use threat::{AttackConfig, AttackMode, DelayBuffer, MeasurementTriple, SampleBatch, Tamper};
pub use bounds::BoundConstants;
