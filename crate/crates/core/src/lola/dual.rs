//! Scalars for exact mixed second derivatives.
//!
//! A hyper-dual number `a + b·ε1 + c·ε2 + d·ε1ε2` with `ε1² = ε2² = 0`
//! carries `f`, `∂f/∂x`, `∂f/∂y` and `∂²f/∂x∂y` through any smooth
//! computation when `x` is seeded with `ε1` and `y` with `ε2`.

use core::ops::{Add, Div, Mul, Neg, Sub};

use crate::math;

pub(crate) trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(x: f64) -> Self;
    fn re(self) -> f64;
    fn exp(self) -> Self;
}

impl Scalar for f64 {
    fn constant(x: f64) -> Self {
        x
    }
    fn re(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        math::exp(self)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct HyperDual {
    pub re: f64,
    pub e1: f64,
    pub e2: f64,
    pub e12: f64,
}

impl HyperDual {
    pub fn new(re: f64, e1: f64, e2: f64, e12: f64) -> Self {
        HyperDual { re, e1, e2, e12 }
    }
}

impl Add for HyperDual {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        HyperDual::new(self.re + o.re, self.e1 + o.e1, self.e2 + o.e2, self.e12 + o.e12)
    }
}

impl Sub for HyperDual {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        HyperDual::new(self.re - o.re, self.e1 - o.e1, self.e2 - o.e2, self.e12 - o.e12)
    }
}

impl Mul for HyperDual {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        HyperDual::new(
            self.re * o.re,
            self.re * o.e1 + self.e1 * o.re,
            self.re * o.e2 + self.e2 * o.re,
            self.re * o.e12 + self.e1 * o.e2 + self.e2 * o.e1 + self.e12 * o.re,
        )
    }
}

impl Div for HyperDual {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        // 1/x has derivatives -1/x², and mixed part 2·x1·x2/x³ - x12/x².
        let inv = 1.0 / o.re;
        let inv2 = inv * inv;
        let recip = HyperDual::new(
            inv,
            -o.e1 * inv2,
            -o.e2 * inv2,
            2.0 * o.e1 * o.e2 * inv2 * inv - o.e12 * inv2,
        );
        self * recip
    }
}

impl Neg for HyperDual {
    type Output = Self;
    fn neg(self) -> Self {
        HyperDual::new(-self.re, -self.e1, -self.e2, -self.e12)
    }
}

impl Scalar for HyperDual {
    fn constant(x: f64) -> Self {
        HyperDual::new(x, 0.0, 0.0, 0.0)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn exp(self) -> Self {
        let e = math::exp(self.re);
        HyperDual::new(e, e * self.e1, e * self.e2, e * (self.e12 + self.e1 * self.e2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_partial_of_product_quotient() {
        // f(x, y) = exp(x*y) / (x + y) at (0.3, 0.7).
        let (x0, y0) = (0.3, 0.7);
        let x = HyperDual::new(x0, 1.0, 0.0, 0.0);
        let y = HyperDual::new(y0, 0.0, 1.0, 0.0);
        let f = (x * y).exp() / (x + y);
        let g = |x: f64, y: f64| libm::exp(x * y) / (x + y);
        let h = 1e-4;
        let fx = (g(x0 + h, y0) - g(x0 - h, y0)) / (2.0 * h);
        let fy = (g(x0, y0 + h) - g(x0, y0 - h)) / (2.0 * h);
        let fxy = (g(x0 + h, y0 + h) - g(x0 + h, y0 - h) - g(x0 - h, y0 + h) + g(x0 - h, y0 - h))
            / (4.0 * h * h);
        assert!((f.re - g(x0, y0)).abs() < 1e-12);
        assert!((f.e1 - fx).abs() < 1e-7);
        assert!((f.e2 - fy).abs() < 1e-7);
        assert!((f.e12 - fxy).abs() < 1e-6);
    }
}
