//! Scalar abstraction shared by every numeric module.
//!
//! All geometry, network and flow computations are written against [`Real`]
//! so they run in `f32` or `f64`. The tolerance hooks scale the fixed
//! thresholds used throughout the crate to the precision of the type.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar usable by the coordination math: `f32` or `f64`.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display {
    /// Relative singular-value threshold for numerical rank.
    fn rank_rtol() -> Self;
    /// Margin a barycentric weight must clear to count as strictly positive.
    fn inside_tol() -> Self;
    /// Tolerance for weight identities (sum-to-one, vanishing fourth weight).
    fn weight_tol() -> Self;

    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    fn rank_rtol() -> Self {
        1e-9
    }
    fn inside_tol() -> Self {
        1e-12
    }
    fn weight_tol() -> Self {
        1e-9
    }
}

impl Real for f32 {
    fn rank_rtol() -> Self {
        1e-5
    }
    fn inside_tol() -> Self {
        1e-6
    }
    fn weight_tol() -> Self {
        1e-4
    }
}
