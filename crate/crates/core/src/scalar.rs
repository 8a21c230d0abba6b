use std::fmt::{Debug, Display};

use num_traits::{FromPrimitive, Num, ToPrimitive};

/// Numeric type the latency model and the ratio metrics are written against.
///
/// Only field operations and ordering are required, so exact rationals work
/// as well as floats.
pub trait Scalar:
    Num + Copy + PartialOrd + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    fn from_count(count: u64) -> Self {
        Self::from_u64(count).expect("count representable in scalar type")
    }

    /// Lossy conversion from a decimal literal. Exact types approximate.
    fn from_real(value: f64) -> Self {
        Self::from_f64(value).expect("value representable in scalar type")
    }

    fn to_real(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn is_negative(self) -> bool {
        self < Self::zero()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
impl Scalar for num_rational::Rational64 {}
