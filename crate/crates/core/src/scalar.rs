//! Numeric abstraction for money, rates and welfare.
//!
//! Geometry is integral (blocks, rounds, half-block progress) and never goes
//! through this trait. Everything priced in cost units is generic over
//! [`Scalar`], so the same mechanism code runs on exact rationals (the
//! default, required for the exact budget-balance checks) or on floats for
//! quick exploratory runs.

use std::cmp::Ordering;
use std::fmt::{Debug, Display};

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::{BigRational, Ratio};
use num_traits::{FromPrimitive, Signed, ToPrimitive, Zero};

/// Number type used for costs, rates, quotes and payments.
pub trait Scalar:
    Clone + Debug + Display + PartialOrd + Signed + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Whether equality on this type is exact (rationals) or approximate (floats).
    const EXACT: bool;

    fn from_ratio(numer: i64, denom: i64) -> Self;

    fn from_count(n: u64) -> Self {
        Self::from_u64(n).expect("count representable")
    }

    /// Fixed-point decimal rendering used at output boundaries.
    fn to_decimal(&self, places: usize) -> String;

    fn as_f64(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Total order used by the mechanisms; NaN sorts as equal.
    fn total_cmp(&self, other: &Self) -> Ordering {
        self.partial_cmp(other).unwrap_or(Ordering::Equal)
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn from_ratio(numer: i64, denom: i64) -> Self {
        Ratio::new(BigInt::from(numer), BigInt::from(denom))
    }

    fn to_decimal(&self, places: usize) -> String {
        render_rational(self.numer(), self.denom(), places)
    }
}

macro_rules! impl_float_scalar {
    ($f:ty) => {
        impl Scalar for $f {
            const EXACT: bool = false;

            fn from_ratio(numer: i64, denom: i64) -> Self {
                numer as $f / denom as $f
            }

            fn to_decimal(&self, places: usize) -> String {
                format!("{:.*}", places, self)
            }
        }
    };
}

impl_float_scalar!(f32);
impl_float_scalar!(f64);

/// Round-half-away-from-zero decimal rendering of `numer / denom`.
fn render_rational(numer: &BigInt, denom: &BigInt, places: usize) -> String {
    let scale = num_traits::pow(BigInt::from(10u32), places);
    let scaled = numer.abs() * &scale;
    let (mut q, r) = scaled.div_rem(denom);
    if r * BigInt::from(2u32) >= *denom {
        q += 1u32;
    }
    let negative = numer.is_negative() && !q.is_zero();
    let (int_part, frac_part) = q.div_rem(&scale);
    let mut out = String::new();
    if negative {
        out.push('-');
    }
    out.push_str(&int_part.to_string());
    if places > 0 {
        let frac = frac_part.to_string();
        out.push('.');
        for _ in frac.len()..places {
            out.push('0');
        }
        out.push_str(&frac);
    }
    out
}

/// A cost-per-block rate that may be unbounded.
///
/// Empty coalitions have an unbounded rate so that the first admission into
/// an idle vehicle always counts as an improvement.
#[derive(Clone, Debug, PartialEq)]
pub enum Rate<S> {
    Finite(S),
    Unbounded,
}

impl<S: Scalar> Rate<S> {
    /// `cost / demand`, unbounded when `demand` is zero.
    pub fn of(cost: &S, demand: u64) -> Self {
        if demand == 0 {
            Rate::Unbounded
        } else {
            Rate::Finite(cost.clone() / S::from_count(demand))
        }
    }

    pub fn finite(&self) -> Option<&S> {
        match self {
            Rate::Finite(v) => Some(v),
            Rate::Unbounded => None,
        }
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(self, Rate::Unbounded)
    }

    pub fn total_cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Rate::Finite(a), Rate::Finite(b)) => a.total_cmp(b),
            (Rate::Finite(_), Rate::Unbounded) => Ordering::Less,
            (Rate::Unbounded, Rate::Finite(_)) => Ordering::Greater,
            (Rate::Unbounded, Rate::Unbounded) => Ordering::Equal,
        }
    }

    pub fn lt(&self, other: &Self) -> bool {
        self.total_cmp(other) == Ordering::Less
    }

    pub fn to_decimal(&self, places: usize) -> String {
        match self {
            Rate::Finite(v) => v.to_decimal(places),
            Rate::Unbounded => "inf".to_string(),
        }
    }
}

impl<S: Scalar> PartialOrd for Rate<S> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.total_cmp(other))
    }
}
