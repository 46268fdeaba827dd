//! Periodic shapes `s(t)` and the registry of named builtin shapes.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::SignalError;

/// One period of a shape, expressed in phase `τ ∈ [0, 1)`.
///
/// Implementations must be pure and report every phase at which the profile
/// or its first derivative may be discontinuous.
pub trait ShapeProfile: fmt::Debug + Send + Sync {
    /// Short identifier, e.g. `piecewise` or `harmonic`.
    fn kind(&self) -> &'static str;

    fn eval_phase(&self, phase: f64) -> f64;

    /// Sorted phases in `[0, 1)` where smoothness may be lost.
    fn breakpoints(&self) -> &[f64];
}

/// A polynomial in phase valid on the half-open interval `[start, end)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    /// Ascending powers of `τ`.
    pub coeffs: Vec<f64>,
}

impl Segment {
    pub fn new(start: f64, end: f64, coeffs: Vec<f64>) -> Self {
        Self { start, end, coeffs }
    }

    #[inline]
    fn eval(&self, tau: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * tau + c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PiecewisePoly {
    segments: Vec<Segment>,
    starts: Vec<f64>,
}

impl PiecewisePoly {
    /// Segments must be ordered and tile `[0, 1)` exactly.
    pub fn new(segments: Vec<Segment>) -> Result<Self, SignalError> {
        if segments.is_empty() {
            return Err(SignalError::InvalidSegments("no segments".into()));
        }
        if segments[0].start != 0.0 {
            return Err(SignalError::InvalidSegments(format!(
                "first segment starts at {} instead of 0",
                segments[0].start
            )));
        }
        for (i, seg) in segments.iter().enumerate() {
            if !(seg.start < seg.end) || !seg.start.is_finite() || !seg.end.is_finite() {
                return Err(SignalError::InvalidSegments(format!(
                    "segment {i} is empty or inverted: [{}, {})",
                    seg.start, seg.end
                )));
            }
            if seg.coeffs.iter().any(|c| !c.is_finite()) {
                return Err(SignalError::InvalidSegments(format!(
                    "segment {i} has non-finite coefficients"
                )));
            }
            if let Some(next) = segments.get(i + 1) {
                if next.start != seg.end {
                    return Err(SignalError::InvalidSegments(format!(
                        "gap or overlap between segment {i} (ends {}) and segment {} (starts {})",
                        seg.end,
                        i + 1,
                        next.start
                    )));
                }
            }
        }
        let last = segments.last().map(|s| s.end).unwrap_or(0.0);
        if last != 1.0 {
            return Err(SignalError::InvalidSegments(format!(
                "last segment ends at {last} instead of 1"
            )));
        }
        let starts = segments.iter().map(|s| s.start).collect();
        Ok(Self { segments, starts })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }
}

impl ShapeProfile for PiecewisePoly {
    fn kind(&self) -> &'static str {
        "piecewise"
    }

    #[inline]
    fn eval_phase(&self, phase: f64) -> f64 {
        // Right segment wins at a shared endpoint.
        let idx = self.starts.partition_point(|&s| s <= phase).saturating_sub(1);
        self.segments[idx].eval(phase)
    }

    fn breakpoints(&self) -> &[f64] {
        &self.starts
    }
}

/// `amplitude · cos(2π · cycles · τ + phase)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Harmonic {
    pub amplitude: f64,
    pub cycles: u32,
    pub phase: f64,
}

impl ShapeProfile for Harmonic {
    fn kind(&self) -> &'static str {
        "harmonic"
    }

    #[inline]
    fn eval_phase(&self, phase: f64) -> f64 {
        self.amplitude * (2.0 * PI * self.cycles as f64 * phase + self.phase).cos()
    }

    fn breakpoints(&self) -> &[f64] {
        &[]
    }
}

/// A profile repeated with period `period`.
#[derive(Clone)]
pub struct PeriodicShape {
    period: f64,
    profile: Arc<dyn ShapeProfile>,
}

impl fmt::Debug for PeriodicShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicShape")
            .field("period", &self.period)
            .field("profile", &self.profile)
            .finish()
    }
}

impl PeriodicShape {
    pub fn new(period: f64, profile: Arc<dyn ShapeProfile>) -> Result<Self, SignalError> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(SignalError::InvalidPeriod(period));
        }
        Ok(Self { period, profile })
    }

    pub fn piecewise(period: f64, segments: Vec<Segment>) -> Result<Self, SignalError> {
        Self::new(period, Arc::new(PiecewisePoly::new(segments)?))
    }

    pub fn harmonic(period: f64, amplitude: f64, cycles: u32, phase: f64) -> Result<Self, SignalError> {
        Self::new(
            period,
            Arc::new(Harmonic {
                amplitude,
                cycles,
                phase,
            }),
        )
    }

    /// The constant shape `s ≡ 1`.
    pub fn unit(period: f64) -> Result<Self, SignalError> {
        Self::piecewise(period, vec![Segment::new(0.0, 1.0, vec![1.0])])
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn profile(&self) -> &dyn ShapeProfile {
        self.profile.as_ref()
    }

    /// Phase `mod(t, period) / period`, always in `[0, 1)`.
    #[inline]
    pub fn phase(&self, t: f64) -> f64 {
        let tau = t.rem_euclid(self.period) / self.period;
        if tau >= 1.0 {
            0.0
        } else {
            tau
        }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        self.profile.eval_phase(self.phase(t))
    }

    /// Breakpoint phases of one period.
    pub fn breakpoints(&self) -> &[f64] {
        self.profile.breakpoints()
    }

    /// Absolute breakpoint times falling in `[t0, t1]`.
    pub fn breakpoint_times(&self, t0: f64, t1: f64) -> Vec<f64> {
        let phases = self.breakpoints();
        let mut out = Vec::new();
        if phases.is_empty() || t1 < t0 {
            return out;
        }
        let first = (t0 / self.period).floor() as i64;
        let last = (t1 / self.period).floor() as i64;
        for p in first..=last {
            for &b in phases {
                let t = (p as f64 + b) * self.period;
                if t >= t0 && t <= t1 {
                    out.push(t);
                }
            }
        }
        out
    }
}

/// Builds a shape for a given PWM period.
pub type ShapeBuilder = fn(period: f64) -> Result<PeriodicShape, SignalError>;

/// Named shapes selectable from configuration.
#[derive(Clone)]
pub struct ShapeRegistry {
    builders: BTreeMap<String, ShapeBuilder>,
}

impl Default for ShapeRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl fmt::Debug for ShapeRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.builders.keys()).finish()
    }
}

impl ShapeRegistry {
    pub fn empty() -> Self {
        Self {
            builders: BTreeMap::new(),
        }
    }

    /// `s1`, `s2`, `s3` from the reference experiment plus `unit`.
    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register("s1", ramp_kink);
        reg.register("s2", cosine);
        reg.register("s3", square);
        reg.register("unit", PeriodicShape::unit);
        reg
    }

    pub fn register(&mut self, name: &str, builder: ShapeBuilder) {
        self.builders.insert(name.to_string(), builder);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.builders.keys().map(String::as_str)
    }

    pub fn build(&self, name: &str, period: f64) -> Result<PeriodicShape, SignalError> {
        let builder = self
            .builders
            .get(name)
            .ok_or_else(|| SignalError::UnknownShape(name.to_string()))?;
        builder(period)
    }
}

/// Piecewise-linear, continuous, with a kink at `τ = 0.6`; unit L² norm.
pub fn ramp_kink(period: f64) -> Result<PeriodicShape, SignalError> {
    let scale = 1.0 / 0.03f64.sqrt();
    PeriodicShape::piecewise(
        period,
        vec![
            Segment::new(0.0, 0.6, vec![-0.3 * scale, scale]),
            Segment::new(0.6, 1.0, vec![1.2 * scale, -1.5 * scale]),
        ],
    )
}

/// `√2 cos(2πτ)`.
pub fn cosine(period: f64) -> Result<PeriodicShape, SignalError> {
    PeriodicShape::harmonic(period, std::f64::consts::SQRT_2, 1, 0.0)
}

/// `+1` on the first half period, `-1` on the second.
pub fn square(period: f64) -> Result<PeriodicShape, SignalError> {
    PeriodicShape::piecewise(
        period,
        vec![
            Segment::new(0.0, 0.5, vec![1.0]),
            Segment::new(0.5, 1.0, vec![-1.0]),
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_at_origin() {
        let s2 = cosine(1.0).unwrap();
        assert_eq!(s2.eval(0.0), std::f64::consts::SQRT_2);
    }

    #[test]
    fn square_halves() {
        let s3 = square(1.0).unwrap();
        assert_eq!(s3.eval(0.25), 1.0);
        assert_eq!(s3.eval(0.75), -1.0);
        // right-continuous at the switch
        assert_eq!(s3.eval(0.5), -1.0);
        assert_eq!(s3.eval(1.0), 1.0);
    }

    #[test]
    fn ramp_kink_matches_independent_formula() {
        let s1 = ramp_kink(1.0).unwrap();
        assert!((s1.eval(0.6) - 0.3 / 0.03f64.sqrt()).abs() < 1e-14);
        // oracle written straight from the indicator-function definition
        let oracle = |t: f64| {
            let tau = t - t.floor();
            let a = if tau <= 0.6 { tau } else { 0.0 };
            let b = if tau > 0.6 { 1.5 * (1.0 - tau) } else { 0.0 };
            (a + b - 0.3) / 0.03f64.sqrt()
        };
        for i in 0..10_000 {
            let t = i as f64 * 3.0 / 10_000.0;
            assert!((s1.eval(t) - oracle(t)).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn rejects_bad_partitions() {
        let gap = vec![Segment::new(0.0, 0.4, vec![1.0]), Segment::new(0.5, 1.0, vec![1.0])];
        assert!(PiecewisePoly::new(gap).is_err());
        let short = vec![Segment::new(0.0, 0.9, vec![1.0])];
        assert!(PiecewisePoly::new(short).is_err());
        let late = vec![Segment::new(0.1, 1.0, vec![1.0])];
        assert!(PiecewisePoly::new(late).is_err());
        assert!(PiecewisePoly::new(vec![]).is_err());
        assert!(PeriodicShape::unit(0.0).is_err());
        assert!(PeriodicShape::unit(f64::NAN).is_err());
    }

    #[test]
    fn phase_handles_negative_times_and_periods() {
        let s = square(2.0).unwrap();
        assert_eq!(s.phase(-0.5), 0.75);
        assert_eq!(s.eval(0.5), 1.0);
        assert_eq!(s.eval(1.5), -1.0);
        assert!(s.phase(-1e-300) < 1.0);
    }

    #[test]
    fn breakpoint_times_replicate_per_period() {
        let s3 = square(1.0).unwrap();
        assert_eq!(s3.breakpoint_times(0.0, 2.0), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        assert!(cosine(1.0).unwrap().breakpoint_times(0.0, 5.0).is_empty());
    }

    #[test]
    fn registry_lookup() {
        let reg = ShapeRegistry::builtin();
        assert_eq!(reg.names().collect::<Vec<_>>(), vec!["s1", "s2", "s3", "unit"]);
        assert!(reg.build("s2", 1.0).is_ok());
        assert_eq!(
            reg.build("s9", 1.0).unwrap_err(),
            SignalError::UnknownShape("s9".into())
        );
    }
}
