//! Scalar abstraction for the numeric kernels.
//!
//! Everything that is plain arithmetic (particle functionals, Laplace flows,
//! generating functions, boundary-value solvers) is written against [`Real`]
//! and instantiated at `f32` or `f64`. Concrete aliases live at the crate
//! root; the simulation engine itself is `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Convert an `f64` literal (always representable, possibly rounded).
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal converts to Real")
    }

    /// Convert a count.
    #[inline]
    fn of_usize(n: usize) -> Self {
        Self::from_usize(n).expect("usize converts to Real")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Compensated (Kahan-Neumaier) accumulator. The particle functionals sum
/// terms spanning several orders of magnitude (`e^{μx}` over the whole
/// occupied interval), where naive summation loses digits.
#[derive(Clone, Copy, Debug)]
pub struct KahanSum<F: Real> {
    sum: F,
    compensation: F,
}

impl<F: Real> Default for KahanSum<F> {
    fn default() -> Self {
        Self { sum: F::zero(), compensation: F::zero() }
    }
}

impl<F: Real> KahanSum<F> {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: F) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn total(&self) -> F {
        self.sum + self.compensation
    }
}
