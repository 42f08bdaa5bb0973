//! Double-double arithmetic (about 32 significant digits), used by the
//! finite-difference oracle so that cancellation in `f(x+h) - f(x-h)` does
//! not swamp the derivative.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DD {
    pub hi: f64,
    pub lo: f64,
}

const LN2: DD = DD { hi: std::f64::consts::LN_2, lo: 2.3190468138462996e-17 };

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DD {
    pub const ZERO: DD = DD { hi: 0.0, lo: 0.0 };
    pub const ONE: DD = DD { hi: 1.0, lo: 0.0 };

    pub const fn new(x: f64) -> DD {
        DD { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }

    fn mul_f64(self, b: f64) -> DD {
        let (p, e) = two_prod(self.hi, b);
        let (hi, lo) = quick_two_sum(p, e + self.lo * b);
        DD { hi, lo }
    }

    /// Multiplication by a power of two, exact barring over/underflow.
    fn scale(self, k: i32) -> DD {
        // split so that neither factor overflows on its own
        let half = k / 2;
        let (a, b) = (2f64.powi(half), 2f64.powi(k - half));
        DD { hi: self.hi * a * b, lo: self.lo * a * b }
    }

    pub fn exp(self) -> DD {
        if self.hi > 709.8 {
            return DD::new(f64::INFINITY);
        }
        if self.hi < -745.2 {
            return DD::ZERO;
        }
        if self.hi == 0.0 {
            return DD::ONE;
        }
        let k = (self.hi / LN2.hi).round();
        let r = (self - LN2.mul_f64(k)).scale(-10);
        // expm1(r) by Taylor series; |r| < 3.5e-4 so 10 terms are plenty
        let mut term = r;
        let mut sum = r;
        for n in 2..=10 {
            term = term * r / DD::new(n as f64);
            sum += term;
        }
        // (1 + s)^2 - 1 = 2s + s^2, applied once per halving
        for _ in 0..10 {
            sum = sum.mul_f64(2.0) + sum * sum;
        }
        (sum + DD::ONE).scale(k as i32)
    }

    pub fn ln(self) -> DD {
        if !(self.hi > 0.0) {
            return DD::new(f64::NAN);
        }
        let mut y = DD::new(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - DD::ONE;
        }
        y
    }
}

impl From<f64> for DD {
    fn from(x: f64) -> DD {
        DD::new(x)
    }
}

impl fmt::Display for DD {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e} + {:e}", self.hi, self.lo)
    }
}

impl PartialOrd for DD {
    fn partial_cmp(&self, other: &DD) -> Option<Ordering> {
        match self.hi.partial_cmp(&other.hi) {
            Some(Ordering::Equal) => self.lo.partial_cmp(&other.lo),
            ord => ord,
        }
    }
}

impl Neg for DD {
    type Output = DD;
    fn neg(self) -> DD {
        DD { hi: -self.hi, lo: -self.lo }
    }
}

impl Add for DD {
    type Output = DD;
    fn add(self, b: DD) -> DD {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        DD { hi, lo }
    }
}

impl Sub for DD {
    type Output = DD;
    fn sub(self, b: DD) -> DD {
        self + (-b)
    }
}

impl Mul for DD {
    type Output = DD;
    fn mul(self, b: DD) -> DD {
        let (p, e) = two_prod(self.hi, b.hi);
        let (hi, lo) = quick_two_sum(p, e + (self.hi * b.lo + self.lo * b.hi));
        DD { hi, lo }
    }
}

impl Div for DD {
    type Output = DD;
    fn div(self, b: DD) -> DD {
        let q1 = self.hi / b.hi;
        let r = self - b.mul_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f64(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        DD { hi, lo } + DD::new(q3)
    }
}

impl AddAssign for DD {
    fn add_assign(&mut self, b: DD) {
        *self = *self + b;
    }
}

impl SubAssign for DD {
    fn sub_assign(&mut self, b: DD) {
        *self = *self - b;
    }
}

impl MulAssign for DD {
    fn mul_assign(&mut self, b: DD) {
        *self = *self * b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dd(hi: f64, lo: f64) -> DD {
        DD { hi, lo }
    }

    fn rel(a: DD, b: DD) -> f64 {
        ((a - b).to_f64() / b.to_f64()).abs()
    }

    #[test]
    fn division_recovers_one_third() {
        let third = DD::ONE / DD::new(3.0);
        let back = third * DD::new(3.0);
        assert!((back - DD::ONE).to_f64().abs() < 1e-31);
    }

    #[test]
    fn exp_matches_reference_values() {
        // references from a 50-digit evaluation, split into hi + lo
        let e = dd(std::f64::consts::E, 1.4456468917292502e-16);
        assert!(rel(DD::ONE.exp(), e) < 1e-30);
        let e_10 = dd(22026.465794806718, -1.3780134700517372e-12);
        assert!(rel(DD::new(10.0).exp(), e_10) < 1e-30);
        let e_m7 = dd(0.0009118819655545162, -3.574480397859321e-20);
        assert!(rel(DD::new(-7.0).exp(), e_m7) < 1e-30);
    }

    #[test]
    fn ln_matches_reference_values() {
        assert!(rel(DD::new(2.0).ln(), LN2) < 1e-30);
        let ln10 = dd(std::f64::consts::LN_10, -2.1707562233822494e-16);
        assert!(rel(DD::new(10.0).ln(), ln10) < 1e-30);
        assert!(DD::ONE.ln().to_f64().abs() < 1e-31);
        assert!(DD::new(-1.0).ln().hi.is_nan());
    }

    #[test]
    fn exp_ln_round_trip() {
        for x in [1e-5, 0.3, 1.7, 42.0, 1e6, 3.5e-200] {
            let v = DD::new(x) + DD::new(x * 1e-17);
            assert!(rel(v.ln().exp(), v) < 1e-29, "{x}");
        }
        for x in [-30.0, -0.5, 1e-9, 2.5, 100.0] {
            let v = DD::new(x);
            assert!((v.exp().ln() - v).to_f64().abs() < 1e-29 * x.abs().max(1.0), "{x}");
        }
    }

    #[test]
    fn exp_extremes() {
        assert_eq!(DD::new(800.0).exp().hi, f64::INFINITY);
        assert_eq!(DD::new(-800.0).exp(), DD::ZERO);
        assert_eq!(DD::ZERO.exp(), DD::ONE);
    }

    #[test]
    fn ordering_uses_low_word() {
        assert!(dd(1.0, 1e-20) > DD::ONE);
        assert!(dd(1.0, -1e-20) < DD::ONE);
    }
}
