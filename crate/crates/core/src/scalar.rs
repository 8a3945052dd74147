//! Scalar abstractions.
//!
//! Graph-level linear algebra (energy forms, the discrete Laplacian, harmonic
//! extension) only needs field operations, so it is written against
//! [`Scalar`] and runs on exact rationals as well as floats. Anything that
//! needs square roots, exponentials or an eigensolver asks for [`Real`].

use std::fmt::Debug;

use nalgebra::RealField;
use num_traits::{FromPrimitive, Num, Signed};

/// Field-like scalar: floats or exact rationals.
pub trait Scalar: Clone + Debug + PartialOrd + Num + Signed + FromPrimitive + 'static {
    /// Lossy conversion for reporting.
    fn to_f64_lossy(&self) -> f64;

    fn from_u64_exact(v: u64) -> Self {
        Self::from_u64(v).expect("integer is representable")
    }
}

/// Floating point scalar usable by the eigensolver and the samplers.
pub trait Real: Scalar + Copy + num_traits::Float + RealField {
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite float")
    }
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn to_f64_lossy(&self) -> f64 {
                *self as f64
            }
        }

        impl Real for $t {}
    };
}

impl_real!(f32);
impl_real!(f64);

impl Scalar for num_rational::BigRational {
    fn to_f64_lossy(&self) -> f64 {
        num_traits::ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// `base^exp` by repeated multiplication, exact for rationals.
pub(crate) fn powu<T: Scalar>(base: T, exp: u32) -> T {
    let mut acc = T::one();
    for _ in 0..exp {
        acc = acc * base.clone();
    }
    acc
}
