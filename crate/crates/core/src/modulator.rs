//! Continuous-time second-order sigma-delta loop.
//!
//! Two cascaded integrators are driven by `u − ν`:
//!
//! ```text
//! T_s · dx1/dt = u(t) − ν(t)
//! T_s · dx2/dt = x1(t)
//! y            = c1·x1 + c2·x2
//! ```
//!
//! `ν` is latched from `y` at every sample boundary `j·T_s` and held for one
//! sample interval. Integrators are advanced with classical RK4 substeps
//! whose boundaries also land on every breakpoint of the input shape.

use std::io::{self, Write};

use crate::error::{ConfigError, DiagnosticsError, InstabilityDetected, SimulationError};
use crate::signal::{sort_dedup, InputModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerLevels {
    pub low: f64,
    pub high: f64,
}

impl QuantizerLevels {
    pub fn new(low: f64, high: f64) -> Self {
        Self { low, high }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.low + self.high)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModulatorConfig {
    /// `N = T_pwm / T_s`.
    pub oversampling_ratio: u32,
    pub pwm_period: f64,
    /// RK4 substeps per sample interval.
    pub substeps: u32,
    pub levels: QuantizerLevels,
    pub threshold: f64,
    /// `(c1, c2)` in `y = c1·x1 + c2·x2`.
    pub output_coeffs: (f64, f64),
    pub initial_state: (f64, f64),
    pub stability_bound: f64,
}

impl Default for ModulatorConfig {
    fn default() -> Self {
        Self {
            oversampling_ratio: 200,
            pwm_period: 1.0,
            substeps: 16,
            levels: QuantizerLevels::new(-1.0, 1.0),
            threshold: 0.0,
            output_coeffs: (1.5, 1.0),
            initial_state: (0.0, 0.0),
            stability_bound: 10.0,
        }
    }
}

impl ModulatorConfig {
    pub fn with_ratio(oversampling_ratio: u32) -> Self {
        Self {
            oversampling_ratio,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.oversampling_ratio == 0 {
            return Err(ConfigError::ZeroOversamplingRatio);
        }
        if self.substeps == 0 {
            return Err(ConfigError::ZeroSubsteps);
        }
        if !(self.pwm_period > 0.0 && self.pwm_period.is_finite()) {
            return Err(ConfigError::InvalidPwmPeriod(self.pwm_period));
        }
        let QuantizerLevels { low, high } = self.levels;
        if !low.is_finite() || !high.is_finite() {
            return Err(ConfigError::NonFinite("quantizer levels"));
        }
        if !(low < high) {
            return Err(ConfigError::InvalidLevels { low, high });
        }
        if !self.threshold.is_finite() {
            return Err(ConfigError::NonFinite("threshold"));
        }
        if !self.output_coeffs.0.is_finite() || !self.output_coeffs.1.is_finite() {
            return Err(ConfigError::NonFinite("output coefficients"));
        }
        if !self.initial_state.0.is_finite() || !self.initial_state.1.is_finite() {
            return Err(ConfigError::NonFinite("initial state"));
        }
        if !(self.stability_bound > 0.0) {
            return Err(ConfigError::InvalidStabilityBound(self.stability_bound));
        }
        Ok(())
    }

    /// `T_s = T_pwm / N`.
    pub fn sample_interval(&self) -> f64 {
        self.pwm_period / self.oversampling_ratio as f64
    }

    /// Start time of sample interval `j`.
    #[inline]
    pub fn sample_time(&self, j: usize) -> f64 {
        j as f64 * self.pwm_period / self.oversampling_ratio as f64
    }

    /// Number of sample intervals needed to cover `duration`.
    pub fn sample_count(&self, duration: f64) -> usize {
        let exact = duration * self.oversampling_ratio as f64 / self.pwm_period;
        let nearest = exact.round();
        if (exact - nearest).abs() <= 1e-9 * nearest.max(1.0) {
            nearest as usize
        } else {
            exact.ceil() as usize
        }
    }

    #[inline]
    pub fn output(&self, x1: f64, x2: f64) -> f64 {
        self.output_coeffs.0 * x1 + self.output_coeffs.1 * x2
    }
}

/// One-bit comparator: `high` when `y ≥ threshold`, otherwise `low`.
#[inline]
pub fn quantize(y: f64, cfg: &ModulatorConfig) -> f64 {
    if y >= cfg.threshold {
        cfg.levels.high
    } else {
        cfg.levels.low
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulatorState {
    pub x1: f64,
    pub x2: f64,
    /// Level held over the interval starting at `sample_index`.
    pub nu: f64,
    pub sample_index: usize,
}

impl ModulatorState {
    /// Initial state from the config with `ν` latched from `y(0)`.
    pub fn initial(cfg: &ModulatorConfig) -> Self {
        let (x1, x2) = cfg.initial_state;
        Self {
            x1,
            x2,
            nu: quantize(cfg.output(x1, x2), cfg),
            sample_index: 0,
        }
    }
}

/// Advances the loop across one sample interval with the latched `ν`, then
/// latches the next level.
pub fn step_sample_interval(
    state: &ModulatorState,
    input: &InputModel,
    cfg: &ModulatorConfig,
) -> Result<ModulatorState, InstabilityDetected> {
    let mut nodes = Vec::with_capacity(cfg.substeps as usize + 4);
    let (x1, x2) = integrate_interval(state, input, cfg, &mut nodes);
    let magnitude = x1.abs().max(x2.abs());
    if !(magnitude <= cfg.stability_bound) {
        return Err(InstabilityDetected {
            sample_index: state.sample_index,
            magnitude,
        });
    }
    Ok(ModulatorState {
        x1,
        x2,
        nu: quantize(cfg.output(x1, x2), cfg),
        sample_index: state.sample_index + 1,
    })
}

fn integrate_interval(
    state: &ModulatorState,
    input: &InputModel,
    cfg: &ModulatorConfig,
    nodes: &mut Vec<f64>,
) -> (f64, f64) {
    let ts = cfg.sample_interval();
    let inv_ts = 1.0 / ts;
    let t0 = cfg.sample_time(state.sample_index);
    let t1 = cfg.sample_time(state.sample_index + 1);
    let m = cfg.substeps as usize;

    nodes.clear();
    nodes.extend((0..=m).map(|i| t0 + (t1 - t0) * i as f64 / m as f64));
    let breaks = input.shape.breakpoint_times(t0, t1);
    if breaks.iter().any(|&b| b > t0 && b < t1) {
        nodes.extend(breaks);
        sort_dedup(nodes, t0, t1);
    }

    let nu = state.nu;
    let (mut x1, mut x2) = (state.x1, state.x2);
    for pair in nodes.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let h = b - a;
        // The input is smooth on the open substep; sample it strictly inside
        // at the ends so a breakpoint at `a` or `b` uses this substep's piece.
        let ua = input.eval(nudge_up(a, b));
        let um = input.eval(a + 0.5 * h);
        let ub = input.eval(nudge_down(b, a));
        let f1 = |u: f64| (u - nu) * inv_ts;

        let k1 = (f1(ua), x1 * inv_ts);
        let x1_b = x1 + 0.5 * h * k1.0;
        let k2 = (f1(um), x1_b * inv_ts);
        let x1_c = x1 + 0.5 * h * k2.0;
        let k3 = (f1(um), x1_c * inv_ts);
        let x1_d = x1 + h * k3.0;
        let k4 = (f1(ub), x1_d * inv_ts);

        x1 += h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        x2 += h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    }
    (x1, x2)
}

/// Smallest representable step from `a` toward `b`, so that a right-continuous
/// shape evaluated at `a` already uses the piece of the cell `(a, b)`.
#[inline]
fn nudge_up(a: f64, b: f64) -> f64 {
    let n = f64::from_bits(if a >= 0.0 { a.to_bits() + 1 } else { a.to_bits() - 1 });
    if a == 0.0 {
        return a;
    }
    n.min(b)
}

#[inline]
fn nudge_down(b: f64, a: f64) -> f64 {
    if b == 0.0 {
        return b;
    }
    let n = f64::from_bits(if b > 0.0 { b.to_bits() - 1 } else { b.to_bits() + 1 });
    n.max(a)
}

/// Recorded run of the loop.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub config: ModulatorConfig,
    pub duration: f64,
    /// `ν_j`, held over `[j·T_s, (j+1)·T_s)`.
    pub bitstream: Vec<f64>,
    /// `(x1, x2)` at each sample boundary, `bitstream.len() + 1` entries.
    pub sampled_states: Vec<(f64, f64)>,
    /// Level latched at the final boundary.
    pub final_level: f64,
    pub stable: bool,
    pub max_abs_state: f64,
}

impl SimulationTrace {
    pub fn sample_interval(&self) -> f64 {
        self.config.sample_interval()
    }

    /// Time covered by the recorded bitstream.
    pub fn covered_until(&self) -> f64 {
        self.config.sample_time(self.bitstream.len())
    }

    pub fn sample_time(&self, j: usize) -> f64 {
        self.config.sample_time(j)
    }

    /// `ν` at time `t` (right-continuous; past the end, the final latched level).
    pub fn level_at(&self, t: f64) -> f64 {
        let j = (t / self.sample_interval()).floor();
        if j < 0.0 {
            return self.bitstream.first().copied().unwrap_or(self.final_level);
        }
        self.bitstream
            .get(j as usize)
            .copied()
            .unwrap_or(self.final_level)
    }

    /// Writes `sample_index,t,x1,x2,nu`, one row per sample boundary.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "sample_index,t,x1,x2,nu")?;
        for (j, (x1, x2)) in self.sampled_states.iter().enumerate() {
            let nu = self.bitstream.get(j).copied().unwrap_or(self.final_level);
            writeln!(w, "{j},{},{x1},{x2},{nu}", self.sample_time(j))?;
        }
        Ok(())
    }
}

/// Runs the loop from the configured initial state for `duration`.
pub fn run(
    input: &InputModel,
    cfg: &ModulatorConfig,
    duration: f64,
) -> Result<SimulationTrace, SimulationError> {
    cfg.validate()?;
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(SimulationError::NonPositiveDuration);
    }
    let samples = cfg.sample_count(duration);
    let mut state = ModulatorState::initial(cfg);
    let mut bitstream = Vec::with_capacity(samples);
    let mut sampled_states = Vec::with_capacity(samples + 1);
    sampled_states.push((state.x1, state.x2));
    let mut max_abs_state = state.x1.abs().max(state.x2.abs());
    let mut nodes = Vec::with_capacity(cfg.substeps as usize + 4);

    for j in 0..samples {
        bitstream.push(state.nu);
        let (x1, x2) = integrate_interval(&state, input, cfg, &mut nodes);
        sampled_states.push((x1, x2));
        let magnitude = x1.abs().max(x2.abs());
        max_abs_state = max_abs_state.max(magnitude);
        if !(magnitude <= cfg.stability_bound) {
            let trace = SimulationTrace {
                config: cfg.clone(),
                duration,
                bitstream,
                sampled_states,
                final_level: quantize(cfg.output(x1, x2), cfg),
                stable: false,
                max_abs_state: if magnitude.is_nan() { f64::NAN } else { max_abs_state },
            };
            return Err(SimulationError::Unstable {
                sample_index: j,
                trace: Box::new(trace),
            });
        }
        state = ModulatorState {
            x1,
            x2,
            nu: quantize(cfg.output(x1, x2), cfg),
            sample_index: j + 1,
        };
    }

    Ok(SimulationTrace {
        config: cfg.clone(),
        duration,
        bitstream,
        sampled_states,
        final_level: state.nu,
        stable: true,
        max_abs_state,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    pub passed: bool,
    pub max_abs_state: f64,
    pub first_violation: Option<usize>,
}

pub fn check_stability(trace: &SimulationTrace, bound: f64) -> StabilityReport {
    let mut max_abs_state = 0.0f64;
    let mut first_violation = None;
    for (j, (x1, x2)) in trace.sampled_states.iter().enumerate() {
        let m = x1.abs().max(x2.abs());
        max_abs_state = max_abs_state.max(m);
        if first_violation.is_none() && !(m <= bound) {
            first_violation = Some(j);
        }
    }
    StabilityReport {
        passed: first_violation.is_none(),
        max_abs_state,
        first_violation,
    }
}

/// Sampled estimates of the iterated zero-mean primitives of `β = u − ν`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveDiagnostics {
    /// Normalized time `τ_j = t_j / T_pwm` of each sample boundary.
    pub tau: Vec<f64>,
    /// `x1(τ_j) / N`.
    pub beta_m1: Vec<f64>,
    /// Cumulative trapezoid integral of `beta_m1` in normalized time.
    pub beta_m2_raw: Vec<f64>,
    /// `(1/τ_j) ∫_0^{τ_j} x1`, with the first entry set to `x1(0)`.
    pub running_mean_x1: Vec<f64>,
}

impl PrimitiveDiagnostics {
    /// Final running mean of `x1`, the estimate of its long-run average.
    pub fn mean_x1(&self) -> f64 {
        self.running_mean_x1.last().copied().unwrap_or(0.0)
    }

    pub fn max_abs_beta_m2(&self) -> f64 {
        self.beta_m2_raw.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Running mean of `x1` at the boundary nearest to normalized time `tau`.
    pub fn running_mean_at(&self, tau: f64) -> Option<f64> {
        let idx = self.tau.partition_point(|&t| t < tau);
        let idx = match (idx, self.tau.get(idx)) {
            (0, _) => 0,
            (i, Some(&t)) if (t - tau).abs() <= (tau - self.tau[i - 1]).abs() => i,
            (i, _) => i - 1,
        };
        self.running_mean_x1.get(idx).copied()
    }
}

pub fn primitive_diagnostics(trace: &SimulationTrace) -> Result<PrimitiveDiagnostics, DiagnosticsError> {
    if !trace.stable {
        return Err(DiagnosticsError::UnstableTrace);
    }
    let n = trace.config.oversampling_ratio as f64;
    let dtau = 1.0 / n;
    let len = trace.sampled_states.len();
    let tau: Vec<f64> = (0..len).map(|j| j as f64 / n).collect();
    let x1: Vec<f64> = trace.sampled_states.iter().map(|s| s.0).collect();
    let beta_m1: Vec<f64> = x1.iter().map(|v| v / n).collect();

    let mut beta_m2_raw = Vec::with_capacity(len);
    let mut running_mean_x1 = Vec::with_capacity(len);
    let mut acc_beta = 0.0;
    let mut acc_x1 = 0.0;
    for j in 0..len {
        if j > 0 {
            acc_beta += 0.5 * dtau * (beta_m1[j - 1] + beta_m1[j]);
            acc_x1 += 0.5 * dtau * (x1[j - 1] + x1[j]);
            running_mean_x1.push(acc_x1 / tau[j]);
        } else {
            running_mean_x1.push(x1[0]);
        }
        beta_m2_raw.push(acc_beta);
    }
    Ok(PrimitiveDiagnostics {
        tau,
        beta_m1,
        beta_m2_raw,
        running_mean_x1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{Envelope, PeriodicShape};

    fn constant_input(c: f64) -> InputModel {
        InputModel::new(Envelope::constant(c), PeriodicShape::unit(1.0).unwrap())
    }

    #[test]
    fn quantizer_threshold_and_tie() {
        let cfg = ModulatorConfig {
            levels: QuantizerLevels::new(0.0, 1.0),
            threshold: 0.5,
            ..ModulatorConfig::default()
        };
        assert_eq!(quantize(0.7, &cfg), 1.0);
        assert_eq!(quantize(0.5, &cfg), 1.0);
        let cfg = ModulatorConfig::default();
        assert_eq!(quantize(-0.2, &cfg), -1.0);
    }

    #[test]
    fn zero_forcing_keeps_x1_constant() {
        let cfg = ModulatorConfig::with_ratio(37);
        let input = constant_input(1.0);
        let s = ModulatorState {
            x1: 0.3,
            x2: -0.2,
            nu: 1.0,
            sample_index: 5,
        };
        let next = step_sample_interval(&s, &input, &cfg).unwrap();
        assert!((next.x1 - 0.3).abs() < 1e-14);
        assert!((next.x2 - 0.1).abs() < 1e-14);
        assert_eq!(next.sample_index, 6);
    }

    #[test]
    fn constant_forcing_is_integrated_exactly() {
        for n in [1, 7, 200] {
            let cfg = ModulatorConfig::with_ratio(n);
            let s = ModulatorState {
                x1: 0.0,
                x2: 0.0,
                nu: 1.0,
                sample_index: 0,
            };
            let next = step_sample_interval(&s, &constant_input(0.0), &cfg).unwrap();
            assert!((next.x1 + 1.0).abs() < 1e-12);
            assert!((next.x2 + 0.5).abs() < 1e-12);
            // y = 1.5·(−1) + (−0.5) < 0
            assert_eq!(next.nu, -1.0);
        }
    }

    #[test]
    fn tiny_bound_trips_instability() {
        let cfg = ModulatorConfig {
            stability_bound: 1e-9,
            ..ModulatorConfig::default()
        };
        let s = ModulatorState::initial(&cfg);
        let err = step_sample_interval(&s, &constant_input(0.0), &cfg).unwrap_err();
        assert_eq!(err.sample_index, 0);
        let err = run(&constant_input(0.0), &cfg, 1.0).unwrap_err();
        match err {
            SimulationError::Unstable { sample_index, trace } => {
                assert_eq!(sample_index, 0);
                assert!(!trace.stable);
                assert_eq!(trace.bitstream.len(), 1);
                assert_eq!(trace.sampled_states.len(), 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let mut cfg = ModulatorConfig::with_ratio(0);
        assert_eq!(cfg.validate(), Err(ConfigError::ZeroOversamplingRatio));
        cfg = ModulatorConfig::default();
        cfg.substeps = 0;
        assert_eq!(cfg.validate(), Err(ConfigError::ZeroSubsteps));
        cfg = ModulatorConfig::default();
        cfg.levels = QuantizerLevels::new(1.0, 1.0);
        assert!(matches!(cfg.validate(), Err(ConfigError::InvalidLevels { .. })));
        cfg = ModulatorConfig::default();
        cfg.stability_bound = 0.0;
        assert!(cfg.validate().is_err());
        assert!(ModulatorConfig::default().validate().is_ok());
    }

    #[test]
    fn rejects_nonpositive_duration() {
        let cfg = ModulatorConfig::default();
        assert!(matches!(
            run(&constant_input(0.0), &cfg, 0.0),
            Err(SimulationError::NonPositiveDuration)
        ));
    }

    #[test]
    fn single_sample_run() {
        let cfg = ModulatorConfig::with_ratio(200);
        let trace = run(&constant_input(0.0), &cfg, cfg.sample_interval()).unwrap();
        assert_eq!(trace.bitstream.len(), 1);
        assert_eq!(trace.sampled_states.len(), 2);
    }

    #[test]
    fn sample_count_rounds_near_integers() {
        let cfg = ModulatorConfig::with_ratio(200);
        assert_eq!(cfg.sample_count(250.0), 50_000);
        assert_eq!(cfg.sample_count(0.0051), 2);
        assert_eq!(cfg.sample_count(0.005), 1);
    }

    #[test]
    fn stability_report() {
        let cfg = ModulatorConfig::default();
        let mut trace = run(&constant_input(0.0), &cfg, 0.05).unwrap();
        for s in trace.sampled_states.iter_mut() {
            *s = (0.0, 0.0);
        }
        let r = check_stability(&trace, 1.0);
        assert!(r.passed);
        assert_eq!(r.max_abs_state, 0.0);
        trace.sampled_states[4].0 = 11.0;
        let r = check_stability(&trace, 10.0);
        assert!(!r.passed);
        assert_eq!(r.first_violation, Some(4));
        assert_eq!(r.max_abs_state, 11.0);
    }

    #[test]
    fn diagnostics_of_zero_states() {
        let cfg = ModulatorConfig::default();
        let mut trace = run(&constant_input(0.0), &cfg, 0.05).unwrap();
        for s in trace.sampled_states.iter_mut() {
            *s = (0.0, 0.0);
        }
        let d = primitive_diagnostics(&trace).unwrap();
        assert!(d.beta_m1.iter().all(|v| *v == 0.0));
        assert!(d.beta_m2_raw.iter().all(|v| *v == 0.0));
        trace.stable = false;
        assert_eq!(primitive_diagnostics(&trace), Err(DiagnosticsError::UnstableTrace));
    }

    #[test]
    fn trace_csv_layout() {
        let cfg = ModulatorConfig::with_ratio(4);
        let trace = run(&constant_input(0.0), &cfg, 0.5).unwrap();
        let mut buf = Vec::new();
        trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "sample_index,t,x1,x2,nu");
        assert_eq!(lines.len(), 1 + 3);
        assert!(lines[1].starts_with("0,0,0,0,"));
        assert!(lines[2].starts_with("1,0.25,"));
    }
}
