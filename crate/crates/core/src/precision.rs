//! Working precision selector and a minimal double-double type used for
//! products of non-negative matrices in the coding layer.

use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    Double,
    #[serde(rename = "dd")]
    DoubleDouble,
}

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi)/2`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

impl DoubleDouble {
    pub fn from_f64(x: f64) -> Self {
        DoubleDouble { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl Add for DoubleDouble {
    type Output = DoubleDouble;
    fn add(self, o: DoubleDouble) -> DoubleDouble {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        DoubleDouble { hi, lo }
    }
}

impl Mul for DoubleDouble {
    type Output = DoubleDouble;
    fn mul(self, o: DoubleDouble) -> DoubleDouble {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        DoubleDouble { hi, lo }
    }
}

/// 2x2 matrix over `T`, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2<T>(pub [T; 4]);

impl<T: Copy + Add<Output = T> + Mul<Output = T>> Mat2<T> {
    pub fn mul(&self, o: &Mat2<T>) -> Mat2<T> {
        let [a, b, c, d] = self.0;
        let [e, f, g, h] = o.0;
        Mat2([a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h])
    }

    pub fn trace(&self) -> T {
        self.0[0] + self.0[3]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dd_keeps_low_order_bits() {
        let one = DoubleDouble::from_f64(1.0);
        let tiny = DoubleDouble::from_f64(1e-20);
        let s = one + tiny;
        assert_eq!(s.hi, 1.0);
        assert_eq!(s.lo, 1e-20);
        let third = DoubleDouble::from_f64(1.0 / 3.0);
        let p = third * DoubleDouble::from_f64(3.0);
        // exact product of the double nearest 1/3 with 3
        assert!((p.hi - 1.0).abs() < 1e-16 && p.lo.abs() < 1e-16);
    }

    #[test]
    fn matrix_product_agrees_with_double() {
        let a = Mat2([1.0, 2.0, 0.5, 3.0]);
        let b = Mat2([0.25, 1.0, 1.0, 1.5]);
        let dd = |m: Mat2<f64>| Mat2(m.0.map(DoubleDouble::from_f64));
        let prod = dd(a).mul(&dd(b));
        for (x, y) in prod.0.iter().zip(a.mul(&b).0) {
            assert!((x.to_f64() - y).abs() < 1e-15);
        }
    }
}
