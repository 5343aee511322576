//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type the engine computes in: `f32` or `f64`.
///
/// Persistence always goes through `f64`, which is exact for both.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossless for `f32`/`f64` inputs that came from this type.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("usize is representable in every Scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Euclidean norm.
pub fn l2_norm<S: Scalar>(values: &[S]) -> S {
    values.iter().map(|&v| v * v).sum::<S>().sqrt()
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Cosine similarity as `a·b / sqrt(|a|²|b|²)`; `None` when either side has zero norm.
///
/// Taking one square root of the product makes `cosine(v, v)` exactly 1.
pub fn cosine<S: Scalar>(a: &[S], b: &[S]) -> Option<S> {
    let na = dot(a, a);
    let nb = dot(b, b);
    if na == S::zero() || nb == S::zero() {
        return None;
    }
    Some(dot(a, b) / (na * nb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_cosine_is_exactly_one() {
        let v = [0.3_f64, -1.7, 2.2, 1e-3];
        assert_eq!(cosine(&v, &v), Some(1.0));
        let w = [0.3_f32, -1.7, 2.2];
        assert_eq!(cosine(&w, &w), Some(1.0));
    }

    #[test]
    fn zero_vector_has_no_cosine() {
        assert_eq!(cosine(&[0.0_f64, 0.0], &[1.0, 0.0]), None);
    }
}
