//! Floating point abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar used throughout the crate: `f32` for bulk training and
/// storage, `f64` for geometry and gradient verification.
pub trait Real:
    'static
    + Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
{
    /// Lossy conversion from `f64`; panics only for non-representable
    /// values, which cannot occur for `f32`/`f64`.
    #[inline]
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable")
    }

    #[inline]
    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("usize is representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("float converts to f64")
    }

    #[inline]
    fn as_f32(self) -> f32 {
        self.to_f32().expect("float converts to f32")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Numerically stable `log(sum(exp(xs)))`. Returns `-inf` for an empty or
/// all `-inf` input.
pub fn log_sum_exp<T: Real>(xs: impl IntoIterator<Item = T> + Clone) -> T {
    let max = xs
        .clone()
        .into_iter()
        .fold(T::neg_infinity(), |m, x| if x > m { x } else { m });
    if max == T::neg_infinity() {
        return max;
    }
    let s: T = xs.into_iter().map(|x| (x - max).exp()).sum();
    max + s.ln()
}

/// Pairwise `log(exp(a) + exp(b))`.
#[inline]
pub fn log_add<T: Real>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        return b;
    }
    if b == T::neg_infinity() {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}
