//! Zero-range process on Sierpinski gasket graphs, its Ornstein-Uhlenbeck
//! fluctuation limit, and the spectral machinery between them.
//!
//! Numerical types are generic over [`scalar::Scalar`] (exact rationals) or
//! [`scalar::Real`] (`f32`, `f64`); the aliases below fix the common choices.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod energy;
pub mod error;
pub mod gasket;
pub mod ou;
pub mod rng;
pub mod scalar;
pub mod spectrum;
pub mod stats;
pub mod verify;
pub mod zrp;

pub use error::{Error, Result};
pub use gasket::{build_gasket, GasketGraph, Vertex};
pub use zrp::{RateModel, ZrpConfiguration};

/// Exact rational scalar.
pub type Exact = num_rational::BigRational;

pub type Grid = energy::GridFunction<f64>;
pub type Grid32 = energy::GridFunction<f32>;
pub type ExactGrid = energy::GridFunction<Exact>;

pub type Coefficients = energy::SobolevCoefficients<f64>;
pub type Coefficients32 = energy::SobolevCoefficients<f32>;

pub type Basis = spectrum::SpectralBasis<f64>;
pub type Basis32 = spectrum::SpectralBasis<f32>;

pub type Ou = ou::OuParams<f64>;
pub type OuState = ou::OuState<f64>;
pub type Ou32 = ou::OuParams<f32>;
pub type OuState32 = ou::OuState<f32>;
