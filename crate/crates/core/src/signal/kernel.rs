//! Cardinal B-spline kernels `K^k`, the k-fold convolution power of the unit
//! indicator on `[0, 1)`.

use crate::error::SignalError;

#[derive(Debug, Clone, PartialEq)]
pub struct BSplineKernel {
    order: u32,
    /// `(-1)^j C(k, j)` for `j = 0..=k`.
    signed_binomials: Vec<f64>,
}

impl BSplineKernel {
    pub fn new(order: u32) -> Result<Self, SignalError> {
        if order == 0 {
            return Err(SignalError::ZeroKernelOrder);
        }
        let mut signed_binomials = Vec::with_capacity(order as usize + 1);
        let mut c = 1.0f64;
        for j in 0..=order {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            signed_binomials.push(sign * c);
            c = c * (order - j) as f64 / (j + 1) as f64;
        }
        Ok(Self {
            order,
            signed_binomials,
        })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    /// Support `[0, k]`.
    pub fn support(&self) -> (f64, f64) {
        (0.0, self.order as f64)
    }

    /// The integer knots `0, 1, ..., k`.
    pub fn breakpoints(&self) -> Vec<f64> {
        (0..=self.order).map(f64::from).collect()
    }

    /// Closed-form alternating sum; exactly zero outside `[0, k]`.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.sum_truncated_powers(x, self.order - 1)
    }

    /// Derivative of order `order` (`≤ k − 1`). At a knot the right limit is
    /// returned.
    pub fn derivative(&self, x: f64, order: u32) -> Result<f64, SignalError> {
        if order >= self.order {
            return Err(SignalError::DerivativeOrder {
                order,
                kernel_order: self.order,
            });
        }
        Ok(self.sum_truncated_powers(x, self.order - 1 - order))
    }

    /// Fills `out[m]` with the `m`-th derivative at `x` for `m < out.len()`
    /// (`out.len() ≤ k`), using the right limit at knots.
    #[inline]
    pub fn derivatives_into(&self, x: f64, out: &mut [f64]) {
        debug_assert!(out.len() <= self.order as usize);
        for (m, slot) in out.iter_mut().enumerate() {
            *slot = self.sum_truncated_powers(x, self.order - 1 - m as u32);
        }
    }

    /// `(1/p!) Σ_j (-1)^j C(k,j) (x − j)_+^p`.
    #[inline]
    fn sum_truncated_powers(&self, x: f64, power: u32) -> f64 {
        let k = self.order as f64;
        if !(0.0..=k).contains(&x) {
            return 0.0;
        }
        let top = (x.floor() as usize).min(self.order as usize);
        let mut acc = 0.0;
        for (j, c) in self.signed_binomials[..=top].iter().enumerate() {
            acc += c * truncated_power(x - j as f64, power);
        }
        acc / factorial(power)
    }
}

/// `d_+^p` with `d_+^0` the right-continuous unit step and `0_+^p = 0` for `p ≥ 1`.
#[inline]
fn truncated_power(d: f64, p: u32) -> f64 {
    if p == 0 {
        if d >= 0.0 {
            1.0
        } else {
            0.0
        }
    } else if d <= 0.0 {
        0.0
    } else {
        d.powi(p as i32)
    }
}

#[inline]
fn factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}
