//! Double-double arithmetic (about 106 bits), enough to check f64 special
//! functions to 1e-12 with a wide margin.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DD {
    pub hi: f64,
    pub lo: f64,
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

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DD {
    pub const fn new(hi: f64, lo: f64) -> Self {
        Self { hi, lo }
    }

    pub fn from(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn recip(self) -> Self {
        DD::from(1.0) / self
    }

    pub fn powi(self, n: u32) -> Self {
        (0..n).fold(DD::from(1.0), |acc, _| acc * self)
    }

    /// Halves or doubles exactly.
    fn ldexp(self, k: i32) -> Self {
        let s = 2f64.powi(k);
        Self {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    pub fn exp(self) -> Self {
        // x = k ln2 + r, |r| ≤ ln2 / 2; then exp(r) = exp(r / 2^10)^(2^10).
        let k = (self.hi / LN_2.hi).round();
        let r = self - LN_2 * DD::from(k);
        let s = r.ldexp(-10);
        let mut term = DD::from(1.0);
        let mut sum = DD::from(1.0);
        for n in 1..=20 {
            term = term * s / DD::from(n as f64);
            sum = sum + term;
        }
        for _ in 0..10 {
            sum = sum * sum;
        }
        sum.ldexp(k as i32)
    }

    /// Natural log by Newton iteration on exp.
    pub fn ln(self) -> Self {
        assert!(self.hi > 0.0, "ln of non-positive value");
        let mut y = DD::from(self.hi.ln());
        for _ in 0..2 {
            y = y + self * (-y).exp() - DD::from(1.0);
        }
        y
    }
}

impl Add for DD {
    type Output = DD;
    fn add(self, o: DD) -> DD {
        let (s, e) = two_sum(self.hi, o.hi);
        let (t, f) = two_sum(self.lo, o.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        DD { hi, lo }
    }
}

impl Neg for DD {
    type Output = DD;
    fn neg(self) -> DD {
        DD {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for DD {
    type Output = DD;
    fn sub(self, o: DD) -> DD {
        self + (-o)
    }
}

impl Mul for DD {
    type Output = DD;
    fn mul(self, o: DD) -> DD {
        let (p, e) = two_prod(self.hi, o.hi);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = quick_two_sum(p, e);
        DD { hi, lo }
    }
}

impl Div for DD {
    type Output = DD;
    fn div(self, o: DD) -> DD {
        let q1 = self.hi / o.hi;
        let r = self - o * DD::from(q1);
        let q2 = r.hi / o.hi;
        let r = r - o * DD::from(q2);
        let q3 = r.hi / o.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        DD { hi, lo } + DD::from(q3)
    }
}

pub const LN_2: DD = DD::new(std::f64::consts::LN_2, 2.3190468138462996e-17);
pub const PI: DD = DD::new(std::f64::consts::PI, 1.2246467991473532e-16);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_ln_round_trip() {
        for &x in &[1e-3, 0.5, 1.0, 2.0, 10.0, 12345.678] {
            let d = DD::from(x);
            let back = d.ln().exp();
            assert!(((back - d).to_f64() / x).abs() < 1e-28, "{x}");
        }
        // ln 2 recovered from the stored constant.
        assert!((DD::from(2.0).ln() - LN_2).to_f64().abs() < 1e-31);
    }

    #[test]
    fn division() {
        let third = DD::from(1.0) / DD::from(3.0);
        assert!((third * DD::from(3.0) - DD::from(1.0)).to_f64().abs() < 1e-31);
    }
}
