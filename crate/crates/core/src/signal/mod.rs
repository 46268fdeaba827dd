//! Analytic input models `u(t) = z(t) · s(t)` and B-spline filter kernels.
//!
//! Everything here is declarative so that the set of times where an
//! integrand loses smoothness can always be enumerated exactly.

mod kernel;
mod shape;

use std::f64::consts::PI;

pub use kernel::BSplineKernel;
pub use shape::{
    cosine, ramp_kink, square, Harmonic, PeriodicShape, PiecewisePoly, Segment, ShapeBuilder,
    ShapeProfile, ShapeRegistry,
};

use crate::quadrature::GaussLegendre;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trig {
    Cos,
    Sin,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvelopeTerm {
    pub amplitude: f64,
    /// Radians per unit time.
    pub angular_frequency: f64,
    pub phase: f64,
    pub kind: Trig,
}

impl EnvelopeTerm {
    pub fn cos(amplitude: f64, angular_frequency: f64) -> Self {
        Self {
            amplitude,
            angular_frequency,
            phase: 0.0,
            kind: Trig::Cos,
        }
    }

    pub fn sin(amplitude: f64, angular_frequency: f64) -> Self {
        Self {
            amplitude,
            angular_frequency,
            phase: 0.0,
            kind: Trig::Sin,
        }
    }

    #[inline]
    fn eval(&self, t: f64) -> f64 {
        let arg = self.angular_frequency * t + self.phase;
        match self.kind {
            Trig::Cos => self.amplitude * arg.cos(),
            Trig::Sin => self.amplitude * arg.sin(),
        }
    }
}

/// Slowly varying envelope `z(t)`: a finite sum of sinusoids.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Envelope {
    pub terms: Vec<EnvelopeTerm>,
}

impl Envelope {
    pub fn new(terms: Vec<EnvelopeTerm>) -> Self {
        Self { terms }
    }

    /// `z(t) = c`.
    pub fn constant(c: f64) -> Self {
        Self::new(vec![EnvelopeTerm::cos(c, 0.0)])
    }

    /// `0.04 cos(t/12) − 0.06 sin(t/(4π))`.
    pub fn reference() -> Self {
        Self::new(vec![
            EnvelopeTerm::cos(0.04, 1.0 / 12.0),
            EnvelopeTerm::sin(-0.06, 1.0 / (4.0 * PI)),
        ])
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.terms.iter().map(|term| term.eval(t)).sum()
    }

    /// `Σ |amplitude|`, an upper bound on `|z|`.
    pub fn bound(&self) -> f64 {
        self.terms.iter().map(|t| t.amplitude.abs()).sum()
    }
}

#[derive(Debug, Clone)]
pub struct InputModel {
    pub envelope: Envelope,
    pub shape: PeriodicShape,
}

impl InputModel {
    pub fn new(envelope: Envelope, shape: PeriodicShape) -> Self {
        Self { envelope, shape }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.envelope.eval(t) * self.shape.eval(t)
    }
}

/// Sorted, deduplicated times in `[t0, t1]` where a filter integrand may lose
/// smoothness: shape breakpoints, the kernel knots `anchor − j·kernel_scale`
/// and, when `sample_width` is given, multiples of the sample width.
/// Both window endpoints are always included.
pub fn breakpoints_in(
    window: (f64, f64),
    shape: &PeriodicShape,
    kernel: &BSplineKernel,
    kernel_anchor: f64,
    kernel_scale: f64,
    sample_width: Option<f64>,
) -> Vec<f64> {
    let (t0, t1) = window;
    if t1 <= t0 {
        return vec![t0];
    }
    let mut pts = vec![t0, t1];
    pts.extend(shape.breakpoint_times(t0, t1));
    for j in 0..=kernel.order() {
        let t = kernel_anchor - j as f64 * kernel_scale;
        if t >= t0 && t <= t1 {
            pts.push(t);
        }
    }
    if let Some(w) = sample_width.filter(|w| *w > 0.0) {
        let first = (t0 / w).ceil() as i64;
        let last = (t1 / w).floor() as i64;
        pts.extend((first..=last).map(|i| i as f64 * w).filter(|t| *t >= t0 && *t <= t1));
    }
    sort_dedup(&mut pts, t0, t1);
    pts
}

/// Sorts and merges points closer than a relative tolerance; the window
/// endpoints survive merging unchanged.
pub(crate) fn sort_dedup(pts: &mut Vec<f64>, t0: f64, t1: f64) {
    pts.sort_by(|a, b| a.total_cmp(b));
    let tol = 1e-12 * t0.abs().max(t1.abs()).max(1.0);
    let mut out: Vec<f64> = Vec::with_capacity(pts.len());
    for &p in pts.iter() {
        match out.last() {
            Some(&last) if p - last <= tol => {
                if p == t1 {
                    *out.last_mut().unwrap() = t1;
                }
            }
            _ => out.push(p),
        }
    }
    if out.len() >= 2 && out[out.len() - 1] != t1 {
        let n = out.len();
        out[n - 1] = t1;
    }
    *pts = out;
}

/// `(∫_0^T s(σ)² dσ)^{1/2}` over one period by piecewise-exact quadrature.
pub fn shape_l2_norm(shape: &PeriodicShape) -> f64 {
    let period = shape.period();
    let rule = GaussLegendre::new(10).expect("10-point rule is supported");
    let mut edges: Vec<f64> = shape.breakpoints().iter().map(|b| b * period).collect();
    edges.push(0.0);
    edges.push(period);
    sort_dedup(&mut edges, 0.0, period);
    // Evaluate through the phase of the cell midpoint so that the right end
    // of a cell uses the cell's own segment.
    let mut total = 0.0;
    for pair in edges.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let phase_mid = shape.phase(0.5 * (a + b));
        let phase_a = phase_mid - 0.5 * (b - a) / period;
        let profile = shape.profile();
        let f = |t: f64| {
            let v = profile.eval_phase(phase_a + (t - a) / period);
            v * v
        };
        total += rule.composite(f, &[a, b], period / 64.0);
    }
    total.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envelope_values() {
        assert_eq!(Envelope::default().eval(3.7), 0.0);
        assert_eq!(Envelope::reference().eval(0.0), 0.04);
        let e = Envelope::new(vec![EnvelopeTerm::cos(2.0, PI)]);
        assert!((e.eval(1.0) + 2.0).abs() < 1e-15);
        assert!((Envelope::reference().bound() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn input_is_pointwise_product() {
        let u2 = InputModel::new(Envelope::reference(), cosine(1.0).unwrap());
        assert!((u2.eval(0.0) - 0.04 * std::f64::consts::SQRT_2).abs() < 1e-16);
        let zero = InputModel::new(Envelope::default(), square(1.0).unwrap());
        assert_eq!(zero.eval(0.3), 0.0);
        let id = InputModel::new(Envelope::constant(1.0), square(1.0).unwrap());
        assert_eq!(id.eval(0.25), 1.0);
    }

    #[test]
    fn breakpoints_kernel_only_for_harmonic_shape() {
        let k3 = BSplineKernel::new(3).unwrap();
        let s2 = cosine(1.0).unwrap();
        let pts = breakpoints_in((0.0, 3.0), &s2, &k3, 3.0, 1.0, None);
        assert_eq!(pts, vec![0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn breakpoints_include_shape_switches() {
        let k3 = BSplineKernel::new(3).unwrap();
        let s3 = square(1.0).unwrap();
        let pts = breakpoints_in((0.0, 3.0), &s3, &k3, 3.0, 1.0, None);
        assert_eq!(pts, vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0]);
    }

    #[test]
    fn breakpoints_degenerate_window() {
        let k3 = BSplineKernel::new(3).unwrap();
        let s3 = square(1.0).unwrap();
        assert_eq!(breakpoints_in((1.0, 1.0), &s3, &k3, 1.0, 1.0, Some(0.1)), vec![1.0]);
    }

    #[test]
    fn breakpoints_with_samples_are_sorted_and_unique() {
        let k3 = BSplineKernel::new(3).unwrap();
        let s1 = ramp_kink(1.0).unwrap();
        let pts = breakpoints_in((0.3, 2.7), &s1, &k3, 2.7, 1.0, Some(0.1));
        assert_eq!(pts.first(), Some(&0.3));
        assert_eq!(pts.last(), Some(&2.7));
        assert!(pts.windows(2).all(|w| w[1] - w[0] > 1e-9));
        // 0.3..2.7 step 0.1 plus 0.6-kink coincides with a sample multiple
        assert_eq!(pts.len(), 25);
    }

    #[test]
    fn unit_norms_of_reference_shapes() {
        for shape in [ramp_kink(1.0), cosine(1.0), square(1.0)] {
            let n = shape_l2_norm(&shape.unwrap());
            assert!((n - 1.0).abs() < 1e-12, "norm {n}");
        }
    }

    #[test]
    fn harmonic_norm_matches_trapezoid_oracle() {
        let s2 = cosine(1.0).unwrap();
        let m = 100_000;
        let h = 1.0 / m as f64;
        let trap: f64 = (0..m)
            .map(|i| {
                let a = s2.eval(i as f64 * h);
                let b = s2.eval((i + 1) as f64 * h);
                0.5 * h * (a * a + b * b)
            })
            .sum();
        assert!((shape_l2_norm(&s2) - trap.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn ramp_kink_norm_by_segment_antiderivatives() {
        // ∫ (a + bτ)² = a²τ + abτ² + b²τ³/3, evaluated per segment
        let anti = |a: f64, b: f64, t: f64| a * a * t + a * b * t * t + b * b * t.powi(3) / 3.0;
        let c = 1.0 / 0.03f64.sqrt();
        let first = anti(-0.3 * c, c, 0.6) - anti(-0.3 * c, c, 0.0);
        let second = anti(1.2 * c, -1.5 * c, 1.0) - anti(1.2 * c, -1.5 * c, 0.6);
        assert!((first - 0.6).abs() < 1e-12);
        assert!((second - 0.4).abs() < 1e-12);
        let n = shape_l2_norm(&ramp_kink(1.0).unwrap());
        assert!((n - (first + second).sqrt()).abs() < 1e-12);
    }
}
