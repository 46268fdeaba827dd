//! Convergence measurements: L² norms of the filtered error, sweeps over the
//! oversampling ratio, log-log slope fits and the oscillatory-integral check.

use rayon::prelude::*;

use crate::error::{AnalysisError, SimulationError};
use crate::filter::{error_signal, uniform_grid, DemodulationResult, QuadratureSpec};
use crate::modulator::{run, ModulatorConfig, SimulationTrace};
use crate::signal::{sort_dedup, BSplineKernel, InputModel, PeriodicShape};

/// Default norm window, chosen to skip the filter warm-up from rest.
pub const DEFAULT_NORM_WINDOW: (f64, f64) = (1.0, 250.0);

/// `(∫_{t0}^{t1} I(σ)² dσ)^{1/2}` by composite Simpson on the (uniform) output
/// grid; an odd interval count closes with one trapezoid cell on the right.
pub fn l2_error(result: &DemodulationResult, t0: f64, t1: f64) -> Result<f64, AnalysisError> {
    let tol = 1e-9 * t0.abs().max(t1.abs()).max(1.0);
    let idx: Vec<usize> = (0..result.grid.len())
        .filter(|&i| result.grid[i] >= t0 - tol && result.grid[i] <= t1 + tol)
        .collect();
    if idx.len() < 3 {
        return Err(AnalysisError::TooFewPoints {
            needed: 3,
            got: idx.len(),
        });
    }
    let first = result.grid[idx[0]];
    let last = result.grid[*idx.last().unwrap()];
    if (first - t0).abs() > tol || (last - t1).abs() > tol {
        return Err(AnalysisError::WindowNotCovered { t0, t1 });
    }
    let n = idx.len() - 1;
    let h = (last - first) / n as f64;
    for w in idx.windows(2) {
        let d = result.grid[w[1]] - result.grid[w[0]];
        if (d - h).abs() > 1e-6 * h {
            return Err(AnalysisError::NonUniformGrid);
        }
    }
    let sq = |k: usize| {
        let e = result.error[idx[k]];
        e * e
    };
    let simpson_intervals = if n.is_multiple_of(2) { n } else { n - 1 };
    let mut acc = 0.0;
    if simpson_intervals >= 2 {
        let mut s = sq(0) + sq(simpson_intervals);
        for k in 1..simpson_intervals {
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * sq(k);
        }
        acc += s * h / 3.0;
    }
    if simpson_intervals < n {
        acc += 0.5 * h * (sq(n - 1) + sq(n));
    }
    Ok(acc.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    /// Root-mean-square residual in decades.
    pub residual: f64,
}

/// Least squares of `log10(value)` against `log10(1/N)`.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<LogLogFit, AnalysisError> {
    if points.len() < 3 {
        return Err(AnalysisError::TooFewPoints {
            needed: 3,
            got: points.len(),
        });
    }
    if let Some(&(_, v)) = points.iter().find(|(n, v)| !(*v > 0.0) || !(*n > 0.0)) {
        return Err(AnalysisError::NonPositiveValue(v));
    }
    let xs: Vec<f64> = points.iter().map(|(n, _)| -n.log10()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, v)| v.log10()).collect();
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    Ok(LogLogFit {
        slope,
        residual: (ss / m).sqrt(),
    })
}

/// Everything needed to measure `‖I‖₂` for one input across several `N`.
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub label: String,
    pub input: InputModel,
    /// Demodulation shape `s` used in the filter.
    pub demod_shape: PeriodicShape,
    pub kernel: BSplineKernel,
    /// All fields but the oversampling ratio are held fixed.
    pub base: ModulatorConfig,
    pub ratios: Vec<u32>,
    pub duration: f64,
    pub grid_spacing: f64,
    pub norm_window: (f64, f64),
    pub quadrature: QuadratureSpec,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub ratio: u32,
    pub l2_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepFailure {
    pub ratio: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub label: String,
    /// Sorted by `N`.
    pub points: Vec<SweepPoint>,
    pub failures: Vec<SweepFailure>,
    /// `None` when fewer than three ratios succeeded.
    pub fit: Option<LogLogFit>,
}

impl SweepResult {
    pub fn fitted_slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    pub fn l2_at(&self, ratio: u32) -> Option<f64> {
        self.points.iter().find(|p| p.ratio == ratio).map(|p| p.l2_error)
    }
}

/// Simulates, demodulates and measures `‖I‖₂` for a single oversampling ratio.
pub fn measure_l2(spec: &SweepSpec, ratio: u32) -> Result<f64, AnalysisError> {
    let cfg = ModulatorConfig {
        oversampling_ratio: ratio,
        ..spec.base.clone()
    };
    let trace = run(&spec.input, &cfg, spec.duration)?;
    let result = demodulate(spec, &trace)?;
    l2_error(&result, spec.norm_window.0, spec.norm_window.1)
}

/// Error signal on the grid `[0, duration]` at the configured spacing.
pub fn demodulate(spec: &SweepSpec, trace: &SimulationTrace) -> Result<DemodulationResult, AnalysisError> {
    let grid = uniform_grid(0.0, spec.duration, spec.grid_spacing);
    Ok(error_signal(
        &spec.input,
        trace,
        &spec.demod_shape,
        &spec.kernel,
        &grid,
        &spec.quadrature,
    )?)
}

/// Runs every ratio (in parallel), records unstable ones as failures and fits
/// the slope on the rest.
pub fn convergence_sweep(spec: &SweepSpec) -> Result<SweepResult, AnalysisError> {
    let mut ratios = spec.ratios.clone();
    ratios.sort_unstable();
    ratios.dedup();
    if ratios.len() < 3 {
        return Err(AnalysisError::TooFewRatios(ratios.len()));
    }
    let outcomes: Vec<(u32, Result<f64, AnalysisError>)> = ratios
        .par_iter()
        .map(|&n| (n, measure_l2(spec, n)))
        .collect();
    let mut points = Vec::new();
    let mut failures = Vec::new();
    for (ratio, outcome) in outcomes {
        match outcome {
            Ok(l2_error) => points.push(SweepPoint { ratio, l2_error }),
            Err(AnalysisError::Simulation(SimulationError::Unstable { sample_index, .. })) => {
                failures.push(SweepFailure {
                    ratio,
                    reason: format!("unstable at sample {sample_index}"),
                })
            }
            Err(other) => return Err(other),
        }
    }
    let fit = if points.len() >= 3 {
        let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.ratio as f64, p.l2_error)).collect();
        Some(fit_loglog_slope(&xy)?)
    } else {
        None
    };
    Ok(SweepResult {
        label: spec.label.clone(),
        points,
        failures,
        fit,
    })
}

/// A bounded signal `β` of fast time, piecewise constant on cells of width
/// `sample_width`.
#[derive(Debug, Clone, PartialEq)]
pub struct FastSignal {
    pub samples: Vec<f64>,
    pub sample_width: f64,
}

impl FastSignal {
    pub fn new(samples: Vec<f64>, sample_width: f64) -> Self {
        Self {
            samples,
            sample_width,
        }
    }

    /// `β` of a modulator run in units of samples: cell `j` holds the mean of
    /// `u − ν` over sample interval `j`, i.e. the increment `x1(j+1) − x1(j)`.
    pub fn from_trace(trace: &SimulationTrace) -> Self {
        let samples = trace
            .sampled_states
            .windows(2)
            .map(|w| w[1].0 - w[0].0)
            .collect();
        Self::new(samples, 1.0)
    }

    /// Fast time covered by the samples.
    pub fn extent(&self) -> f64 {
        self.samples.len() as f64 * self.sample_width
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        let j = (s / self.sample_width).floor();
        if j < 0.0 {
            return 0.0;
        }
        self.samples.get(j as usize).copied().unwrap_or(0.0)
    }

    /// Sample average, the estimate of `β̄`.
    pub fn mean(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.samples.iter().sum::<f64>() / self.samples.len() as f64
        }
    }
}

/// Integrable weight `f` on a finite window.
#[derive(Debug, Clone)]
pub enum TestFunction {
    /// `1_[a, b)`.
    Indicator { start: f64, end: f64 },
    /// A periodic shape restricted to `[start, end)`.
    Shape {
        shape: PeriodicShape,
        start: f64,
        end: f64,
    },
    /// `σ ↦ K(shift − σ)`, supported on `[shift − k, shift]`.
    ShiftedKernel { kernel: BSplineKernel, shift: f64 },
}

impl TestFunction {
    pub fn support(&self) -> (f64, f64) {
        match self {
            Self::Indicator { start, end } | Self::Shape { start, end, .. } => (*start, *end),
            Self::ShiftedKernel { kernel, shift } => (shift - kernel.order() as f64, *shift),
        }
    }

    #[inline]
    pub fn eval(&self, sigma: f64) -> f64 {
        let (a, b) = self.support();
        if sigma < a || sigma > b {
            return 0.0;
        }
        match self {
            Self::Indicator { .. } => 1.0,
            Self::Shape { shape, .. } => shape.eval(sigma),
            Self::ShiftedKernel { kernel, shift } => kernel.eval(shift - sigma),
        }
    }

    fn breakpoints(&self) -> Vec<f64> {
        let (a, b) = self.support();
        let mut pts = vec![a, b];
        match self {
            Self::Indicator { .. } => {}
            Self::Shape { shape, .. } => pts.extend(shape.breakpoint_times(a, b)),
            Self::ShiftedKernel { kernel, shift } => {
                pts.extend(kernel.breakpoints().into_iter().map(|j| shift - j))
            }
        }
        pts
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiemannLebesgueRow {
    pub ratio: u32,
    /// `∫ β(Nσ) f(σ) dσ`.
    pub integral: f64,
    /// `β̄ ∫ f`, the limit as `N → ∞`.
    pub limit: f64,
}

impl RiemannLebesgueRow {
    pub fn deviation(&self) -> f64 {
        (self.integral - self.limit).abs()
    }
}

/// Evaluates `∫ β(Nσ) f(σ) dσ` exactly cell by cell for each ratio.
pub fn riemann_lebesgue_check(
    beta: &FastSignal,
    f: &TestFunction,
    ratios: &[u32],
    q: &QuadratureSpec,
) -> Result<Vec<RiemannLebesgueRow>, AnalysisError> {
    let (a, b) = f.support();
    let rule = q.rule();
    let mut f_edges = f.breakpoints();
    sort_dedup(&mut f_edges, a, b);
    let mass = rule.composite(|s| f.eval(s), &f_edges, f64::INFINITY);
    let limit = beta.mean() * mass;

    let mut rows = Vec::with_capacity(ratios.len());
    for &ratio in ratios {
        let n = ratio as f64;
        if n * b > beta.extent() * (1.0 + 1e-12) || a < 0.0 {
            return Err(AnalysisError::WindowNotCovered {
                t0: a * n,
                t1: b * n,
            });
        }
        let w = beta.sample_width / n;
        let mut edges = f_edges.clone();
        let first = (a / w).ceil() as i64;
        let last = (b / w).floor() as i64;
        edges.extend((first..=last).map(|i| i as f64 * w));
        sort_dedup(&mut edges, a, b);
        let mut integral = 0.0;
        for pair in edges.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let level = beta.eval(n * 0.5 * (lo + hi));
            if level != 0.0 {
                integral += level * rule.integrate(|s| f.eval(s), lo, hi);
            }
        }
        rows.push(RiemannLebesgueRow {
            ratio,
            integral,
            limit,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result_from(grid: Vec<f64>, error: Vec<f64>) -> DemodulationResult {
        let n = grid.len();
        DemodulationResult {
            grid,
            z_hat: error.clone(),
            z_hat_sd: vec![0.0; n],
            error,
        }
    }

    #[test]
    fn l2_of_constant() {
        let grid = uniform_grid(0.0, 250.0, 1.0 / 32.0);
        let err = vec![0.5; grid.len()];
        let r = result_from(grid, err);
        let got = l2_error(&r, 1.0, 250.0).unwrap();
        assert!((got - 0.5 * 249f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn l2_of_identity_ramp() {
        // even and odd interval counts
        for m in [1000usize, 1001] {
            let grid = uniform_grid(0.0, 1.0, 1.0 / m as f64);
            let err = grid.clone();
            let got = l2_error(&result_from(grid, err), 0.0, 1.0).unwrap();
            assert!((got - (1.0f64 / 3.0).sqrt()).abs() < 1e-8, "m={m}: {got}");
        }
    }

    #[test]
    fn l2_rejects_empty_or_uncovered_ranges() {
        let grid = uniform_grid(0.0, 10.0, 0.5);
        let r = result_from(grid.clone(), vec![1.0; grid.len()]);
        assert!(matches!(l2_error(&r, 20.0, 30.0), Err(AnalysisError::TooFewPoints { .. })));
        assert!(matches!(l2_error(&r, 5.0, 12.0), Err(AnalysisError::WindowNotCovered { .. })));
    }

    #[test]
    fn planted_power_laws() {
        for planted in [2.0, 1.5] {
            let pts: Vec<(f64, f64)> = [25.0, 50.0, 100.0, 200.0]
                .iter()
                .map(|&n| (n, 3.0 * (1.0f64 / n).powf(planted)))
                .collect();
            let fit = fit_loglog_slope(&pts).unwrap();
            assert!((fit.slope - planted).abs() < 1e-10);
            assert!(fit.residual < 1e-10);
        }
    }

    #[test]
    fn fit_preconditions() {
        assert!(matches!(
            fit_loglog_slope(&[(1.0, 1.0), (2.0, 0.5)]),
            Err(AnalysisError::TooFewPoints { .. })
        ));
        assert!(matches!(
            fit_loglog_slope(&[(1.0, 1.0), (2.0, 0.0), (4.0, 0.1)]),
            Err(AnalysisError::NonPositiveValue(_))
        ));
    }

    #[test]
    fn zero_beta_gives_zero_integrals() {
        let beta = FastSignal::new(vec![0.0; 1000], 1.0);
        let f = TestFunction::Indicator { start: 0.0, end: 1.0 };
        let rows = riemann_lebesgue_check(&beta, &f, &[10, 20, 40], &QuadratureSpec::default()).unwrap();
        assert!(rows.iter().all(|r| r.integral == 0.0 && r.limit == 0.0));
    }

    #[test]
    fn square_wave_cancels_over_whole_periods() {
        let samples = (0..2000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let beta = FastSignal::new(samples, 0.5);
        let f = TestFunction::Indicator { start: 0.0, end: 1.0 };
        let rows = riemann_lebesgue_check(&beta, &f, &[1, 3, 10, 100], &QuadratureSpec::default()).unwrap();
        for r in rows {
            assert!(r.integral.abs() < 1e-13, "N={} → {}", r.ratio, r.integral);
        }
    }

    #[test]
    fn beta_must_cover_the_scaled_window() {
        let beta = FastSignal::new(vec![1.0; 10], 1.0);
        let f = TestFunction::Indicator { start: 0.0, end: 1.0 };
        assert!(riemann_lebesgue_check(&beta, &f, &[20], &QuadratureSpec::default()).is_err());
    }
}
