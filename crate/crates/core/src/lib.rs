//! Preferential attachment with fitness.
//!
//! A growing graph attaches each new vertex to an old vertex `v` with
//! probability proportional to `f_v · d_v`, where `f_v` is an i.i.d. fitness
//! and `d_v` the current degree. This crate provides
//!
//! * [`fitness`]: fitness distributions (finite, countable, densities),
//! * [`theory`]: the occupation integral, `λ₀`, phase classification and limit laws,
//! * [`urn`]: generalized Pólya urns, their mean matrices and Perron pairs,
//! * [`graph`]: the growth simulator and its statistics collectors,
//! * [`coupling`]: truncation, discretization and coupled multi-chain runs,
//! * [`verify`]: statistical comparisons between simulation and theory.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`.

// `!(x > 0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupling;
pub mod fitness;
pub mod graph;
pub mod numerics;
pub mod sampling;
pub mod scalar;
pub mod schedule;
pub mod theory;
pub mod urn;
pub mod verify;

pub use scalar::Real;

pub type FitnessModel = fitness::FitnessModel<f64>;
pub type PhaseReport = theory::PhaseReport<f64>;
pub type LimitLaw = theory::LimitLaw<f64>;
pub type UrnSpec = urn::UrnSpec<f64>;
pub type PerronResult = urn::PerronResult<f64>;
pub type GrowthState = graph::GrowthState<f64>;
pub type EmpiricalSummary = graph::EmpiricalSummary;
pub type DiscretizationSpec = coupling::DiscretizationSpec<f64>;
pub type TruncationSpec = coupling::TruncationSpec<f64>;
pub type SumTree = sampling::SumTree<f64>;
