//! Core library for learning stable dynamical systems in port-Hamiltonian
//! form.  Everything in here is pure computation: no files, no threads, no
//! clocks (wall-clock timing in training histories is the one `std`-gated
//! extra).  The crate builds without `std` (but with `alloc`) so trained
//! models can run in embedded control loops.
//!
//! The pieces, roughly bottom-up:
//!
//! * [`autodiff`] — a small reverse-mode tape over vector-valued nodes.
//! * [`nets`] — feed-forward and fully input-convex networks built on it.
//! * [`phs`] — the model zoo: `ẋ = (J(x) − R(x)) ∇H(x) + G(x) u` with
//!   structural skew/PSD factorizations, plus unstructured baselines.
//! * [`ode`] — classical RK4 and an adaptive Tsitouras 5(4) integrator.
//! * [`train`] — Adam plus derivative-matching and rollout-matching fits.
//! * [`data`] — trajectory containers, the spinning-rigid-body benchmark,
//!   normalization, and noise injection.
//! * [`pod`] — proper orthogonal decomposition for field-valued data.
//! * [`verify`] — post-hoc stability certification and energy audits.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod autodiff;
pub mod data;
pub mod linalg;
pub(crate) mod math;
pub mod nets;
pub mod ode;
pub mod phs;
pub mod pod;
pub mod train;
pub mod verify;

pub use data::{Normalizer, Trajectory};
pub use ode::{IntegrationConfig, Solver};
pub use phs::{ModelKind, ModelSpec, PhsModel};
pub use pod::PodBasis;
pub use train::{TrainConfig, TrainHistory};
pub use verify::{StabilityReport, Verdict, VerifyConfig};
