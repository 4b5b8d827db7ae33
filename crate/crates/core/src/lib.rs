//! Gradient-based detection of the dominant input directions of a
//! multivariate function, reduction of its domain to those directions, and
//! surrogate construction on the reduced coordinates.
//!
//! Every numerical type is generic over [`Real`] (`f32` or `f64`); the
//! `*64` aliases below name the double precision instantiations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod completion;
pub mod domain;
pub mod error;
pub mod geometry;
pub mod gradient;
pub mod linalg;
pub mod lp;
pub mod models;
pub mod rng;
pub mod scalar;
pub mod subspace;
pub mod surrogate;

pub use completion::{reveal_uniform, svt_complete, svt_complete_normalized, RevealedEntries, SvtParams, SvtResult};
pub use domain::Hyperrectangle;
pub use error::{Error, Result};
pub use geometry::{Membership, ReducedDesign, ReducedDomain, SamplerStats};
pub use gradient::{
    finite_difference_gradient, rms_directional_variation, sample_fd_gradients, sample_gradients,
    FdGradient, FdStep, SampledGradients,
};
pub use lp::{minimize_linear_over_box, LinearProgram, LpSolution, LpStatus};
pub use models::{KlExpansion, Model, PdeConfig, PdeModel, RidgeProfile, TestFunction};
pub use scalar::Real;
pub use subspace::{
    detect_subspace, estimate_c_hat, subspace_distance, suggest_truncation, ActiveSubspace,
    JacobianSamples, TruncationSuggestion,
};
pub use surrogate::{RbfConfig, RbfSurrogate};

pub type Hyperrectangle64 = Hyperrectangle<f64>;
pub type Hyperrectangle32 = Hyperrectangle<f32>;
pub type JacobianSamples64 = JacobianSamples<f64>;
pub type ActiveSubspace64 = ActiveSubspace<f64>;
pub type ActiveSubspace32 = ActiveSubspace<f32>;
pub type LinearProgram64 = LinearProgram<f64>;
pub type LpSolution64 = LpSolution<f64>;
pub type ReducedDomain64 = ReducedDomain<f64>;
pub type ReducedDesign64 = ReducedDesign<f64>;
pub type RevealedEntries64 = RevealedEntries<f64>;
pub type SvtParams64 = SvtParams<f64>;
pub type SvtResult64 = SvtResult<f64>;
pub type RbfSurrogate64 = RbfSurrogate<f64>;
pub type TestFunction64 = TestFunction<f64>;
pub type KlExpansion64 = KlExpansion<f64>;
pub type PdeModel64 = PdeModel<f64>;
