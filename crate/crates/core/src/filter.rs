//! Demodulation integrals
//!
//! ```text
//! ẑ(t)    = ∫ u(σ) s(σ) K((t − σ)/T) / T dσ
//! ẑ_ΣΔ(t) = ∫ ν(σ) s(σ) K((t − σ)/T) / T dσ
//! I(t)    = ẑ(t) − ẑ_ΣΔ(t)
//! ```
//!
//! with `T` the period of the demodulation shape and the integration window
//! `[max(0, t − kT), t]`. Cells are delimited by every breakpoint of the
//! integrand so a fixed Gauss–Legendre rule per cell is enough.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::error::{FilterError, QuadratureError};
use crate::modulator::SimulationTrace;
use crate::quadrature::GaussLegendre;
use crate::signal::{breakpoints_in, sort_dedup, BSplineKernel, InputModel, PeriodicShape};

/// Per-cell Gauss–Legendre rule plus a cap on cell width.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureSpec {
    rule: GaussLegendre,
    cells_per_period: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self::new(5).expect("5-point rule is supported")
    }
}

impl QuadratureSpec {
    /// `points_per_cell` in `1..=16`; cells are at most 1/16 of a period wide.
    pub fn new(points_per_cell: usize) -> Result<Self, QuadratureError> {
        Ok(Self {
            rule: GaussLegendre::new(points_per_cell)?,
            cells_per_period: 16,
        })
    }

    pub fn with_cells_per_period(mut self, cells: usize) -> Result<Self, QuadratureError> {
        if cells == 0 {
            return Err(QuadratureError::ZeroCellsPerPeriod);
        }
        self.cells_per_period = cells;
        Ok(self)
    }

    pub fn points_per_cell(&self) -> usize {
        self.rule.points()
    }

    pub fn cells_per_period(&self) -> usize {
        self.cells_per_period
    }

    pub fn rule(&self) -> &GaussLegendre {
        &self.rule
    }

    fn max_width(&self, period: f64) -> f64 {
        period / self.cells_per_period as f64
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DemodulationResult {
    pub grid: Vec<f64>,
    pub z_hat: Vec<f64>,
    pub z_hat_sd: Vec<f64>,
    pub error: Vec<f64>,
}

impl DemodulationResult {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn max_abs_error(&self) -> f64 {
        self.error.iter().fold(0.0, |m, e| m.max(e.abs()))
    }

    /// Writes `t,z_hat,z_hat_sd,error`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,z_hat,z_hat_sd,error")?;
        for i in 0..self.grid.len() {
            writeln!(
                w,
                "{},{},{},{}",
                self.grid[i], self.z_hat[i], self.z_hat_sd[i], self.error[i]
            )?;
        }
        Ok(())
    }
}

/// Uniform grid `t0, t0 + h, ...` up to and including `t1`.
pub fn uniform_grid(t0: f64, t1: f64, spacing: f64) -> Vec<f64> {
    if !(spacing > 0.0) || t1 < t0 {
        return vec![t0];
    }
    let steps = ((t1 - t0) / spacing + 1e-9).floor() as usize;
    (0..=steps).map(|i| t0 + i as f64 * spacing).collect()
}

fn window(t: f64, kernel: &BSplineKernel, period: f64) -> (f64, f64) {
    ((t - kernel.order() as f64 * period).max(0.0), t)
}

/// Kernel weight `K((t − σ)/T)/T`.
#[inline]
fn weight(kernel: &BSplineKernel, t: f64, sigma: f64, period: f64) -> f64 {
    kernel.eval((t - sigma) / period) / period
}

pub fn filtered_input(
    input: &InputModel,
    shape: &PeriodicShape,
    kernel: &BSplineKernel,
    t: f64,
    q: &QuadratureSpec,
) -> Result<f64, FilterError> {
    if t < 0.0 {
        return Err(FilterError::NegativeTime(t));
    }
    let period = shape.period();
    let (lo, hi) = window(t, kernel, period);
    if hi <= lo {
        return Ok(0.0);
    }
    let mut edges = breakpoints_in((lo, hi), shape, kernel, t, period, None);
    edges.extend(input.shape.breakpoint_times(lo, hi));
    sort_dedup(&mut edges, lo, hi);
    let f = |sigma: f64| input.eval(sigma) * shape.eval(sigma) * weight(kernel, t, sigma, period);
    Ok(q.rule.composite(f, &edges, q.max_width(period)))
}

pub fn filtered_output(
    trace: &SimulationTrace,
    shape: &PeriodicShape,
    kernel: &BSplineKernel,
    t: f64,
    q: &QuadratureSpec,
) -> Result<f64, FilterError> {
    check_time(trace, t)?;
    let period = shape.period();
    let (lo, hi) = window(t, kernel, period);
    if hi <= lo {
        return Ok(0.0);
    }
    let edges = breakpoints_in((lo, hi), shape, kernel, t, period, Some(trace.sample_interval()));
    let max_width = q.max_width(period);
    let mut total = 0.0;
    for pair in edges.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let nu = trace.level_at(0.5 * (a + b));
        let f = |sigma: f64| shape.eval(sigma) * weight(kernel, t, sigma, period);
        total += nu * q.rule.composite(f, &[a, b], max_width);
    }
    Ok(total)
}

fn check_time(trace: &SimulationTrace, t: f64) -> Result<(), FilterError> {
    if t < 0.0 {
        return Err(FilterError::NegativeTime(t));
    }
    let end = trace.covered_until();
    if t > end * (1.0 + 1e-12) {
        return Err(FilterError::OutsideTrace { t, duration: end });
    }
    Ok(())
}

/// `(ẑ(t), ẑ_ΣΔ(t))` on one shared set of cells.
fn filtered_pair(
    input: &InputModel,
    trace: &SimulationTrace,
    shape: &PeriodicShape,
    kernel: &BSplineKernel,
    t: f64,
    q: &QuadratureSpec,
) -> (f64, f64) {
    let period = shape.period();
    let (lo, hi) = window(t, kernel, period);
    if hi <= lo {
        return (0.0, 0.0);
    }
    let mut edges = breakpoints_in((lo, hi), shape, kernel, t, period, Some(trace.sample_interval()));
    let extra = input.shape.breakpoint_times(lo, hi);
    if !extra.is_empty() {
        edges.extend(extra);
        sort_dedup(&mut edges, lo, hi);
    }
    let max_width = q.max_width(period);
    let mut z_hat = 0.0;
    let mut z_hat_sd = 0.0;
    for pair in edges.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let nu = trace.level_at(0.5 * (a + b));
        let (cell_u, cell_s) = q.rule.composite_pair(
            |sigma| {
                let sk = shape.eval(sigma) * weight(kernel, t, sigma, period);
                (input.eval(sigma) * sk, sk)
            },
            &[a, b],
            max_width,
        );
        z_hat += cell_u;
        z_hat_sd += nu * cell_s;
    }
    (z_hat, z_hat_sd)
}

/// Moments `∫ u s d^m` and `∫ s d^m`, `d = σ − c_j`, of every sample cell
/// `[j T_s, (j+1) T_s)` for `m < k`.
///
/// Inside one kernel piece `K((t − σ)/T)` is a polynomial of degree `k − 1` in
/// `d`, so a cell's contribution to `ẑ(t)` is an inner product of its moments
/// with the Taylor coefficients of the kernel at the cell centre. Cells that
/// straddle a knot or the window edge fall back to direct quadrature.
struct CellMoments {
    order: usize,
    input: Vec<f64>,
    shape: Vec<f64>,
}

impl CellMoments {
    fn new(
        input: &InputModel,
        trace: &SimulationTrace,
        shape: &PeriodicShape,
        kernel: &BSplineKernel,
        q: &QuadratureSpec,
    ) -> Self {
        let order = kernel.order() as usize;
        let cells = trace.bitstream.len();
        let max_width = q.max_width(shape.period());
        let rule = &q.rule;
        let mut input_m = vec![0.0; cells * order];
        let mut shape_m = vec![0.0; cells * order];
        let mut edges = Vec::new();
        for j in 0..cells {
            let a = trace.sample_time(j);
            let b = trace.sample_time(j + 1);
            let c = 0.5 * (a + b);
            edges.clear();
            edges.extend([a, b]);
            edges.extend(shape.breakpoint_times(a, b));
            edges.extend(input.shape.breakpoint_times(a, b));
            if edges.len() > 2 {
                sort_dedup(&mut edges, a, b);
            }
            let acc_u = &mut input_m[j * order..(j + 1) * order];
            let acc_s = &mut shape_m[j * order..(j + 1) * order];
            for pair in edges.windows(2) {
                let (lo, hi) = (pair[0], pair[1]);
                let pieces = ((hi - lo) / max_width).ceil().max(1.0) as usize;
                let h = (hi - lo) / pieces as f64;
                for p in 0..pieces {
                    let sub_lo = lo + h * p as f64;
                    let sub_hi = if p + 1 == pieces { hi } else { lo + h * (p + 1) as f64 };
                    let half = 0.5 * (sub_hi - sub_lo);
                    let mid = 0.5 * (sub_hi + sub_lo);
                    for (x, w) in rule.nodes().iter().zip(rule.weights()) {
                        let sigma = mid + half * x;
                        let sv = shape.eval(sigma) * w * half;
                        let uv = input.eval(sigma) * sv;
                        let d = sigma - c;
                        let mut pw = 1.0;
                        for m in 0..order {
                            acc_u[m] += uv * pw;
                            acc_s[m] += sv * pw;
                            pw *= d;
                        }
                    }
                }
            }
        }
        Self {
            order,
            input: input_m,
            shape: shape_m,
        }
    }

    fn pair(
        &self,
        input: &InputModel,
        trace: &SimulationTrace,
        shape: &PeriodicShape,
        kernel: &BSplineKernel,
        t: f64,
        q: &QuadratureSpec,
    ) -> (f64, f64) {
        let period = shape.period();
        let (lo, hi) = window(t, kernel, period);
        if hi <= lo {
            return (0.0, 0.0);
        }
        let ts = trace.sample_interval();
        let cells = trace.bitstream.len();
        let first = ((lo / ts).floor().max(0.0) as usize).min(cells);
        let last = ((hi / ts).ceil().max(0.0) as usize).min(cells);
        let eps = 1e-12 * (t / period).abs().max(1.0);
        let max_width = q.max_width(period);

        // Taylor factors (−1/T)^m / (m! T) turning K^(m) into d^m coefficients.
        let mut factors = [0.0f64; 16];
        let mut derivs = [0.0f64; 16];
        let order = self.order.min(16);
        let mut f = 1.0 / period;
        for (m, slot) in factors.iter_mut().take(order).enumerate() {
            *slot = f;
            f *= -1.0 / (period * (m + 1) as f64);
        }

        let mut z_hat = 0.0;
        let mut z_hat_sd = 0.0;
        for j in first..last {
            let a = trace.sample_time(j);
            let b = trace.sample_time(j + 1);
            let xa = (t - a) / period;
            let xb = (t - b) / period;
            let inside = a >= lo - eps * period && b <= hi + eps * period;
            let straddles = (xb + eps).ceil() < xa - eps;
            if inside && !straddles && self.order <= 16 {
                let xc = (t - 0.5 * (a + b)) / period;
                kernel.derivatives_into(xc, &mut derivs[..order]);
                let base = j * self.order;
                let mut cu = 0.0;
                let mut cs = 0.0;
                for m in 0..order {
                    let coef = derivs[m] * factors[m];
                    cu += coef * self.input[base + m];
                    cs += coef * self.shape[base + m];
                }
                z_hat += cu;
                z_hat_sd += trace.bitstream[j] * cs;
            } else {
                let (ca, cb) = (a.max(lo), b.min(hi));
                if cb <= ca {
                    continue;
                }
                let mut edges = breakpoints_in((ca, cb), shape, kernel, t, period, None);
                edges.extend(input.shape.breakpoint_times(ca, cb));
                sort_dedup(&mut edges, ca, cb);
                let (cu, cs) = q.rule.composite_pair(
                    |sigma| {
                        let sk = shape.eval(sigma) * weight(kernel, t, sigma, period);
                        (input.eval(sigma) * sk, sk)
                    },
                    &edges,
                    max_width,
                );
                z_hat += cu;
                z_hat_sd += trace.bitstream[j] * cs;
            }
        }
        (z_hat, z_hat_sd)
    }
}

fn checked_grid(trace: &SimulationTrace, grid: &[f64]) -> Result<Vec<f64>, FilterError> {
    let mut grid = grid.to_vec();
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup();
    for &t in &grid {
        check_time(trace, t)?;
    }
    Ok(grid)
}

fn assemble(grid: Vec<f64>, pairs: Vec<(f64, f64)>) -> DemodulationResult {
    let (z_hat, z_hat_sd): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let error = z_hat.iter().zip(&z_hat_sd).map(|(a, b)| a - b).collect();
    DemodulationResult {
        grid,
        z_hat,
        z_hat_sd,
        error,
    }
}

/// Pairs `ẑ` and `ẑ_ΣΔ` on `grid` (sorted and deduplicated first).
///
/// Uses precomputed per-sample cell moments; [`error_signal_direct`] computes
/// the same quantities by plain quadrature at every grid point.
pub fn error_signal(
    input: &InputModel,
    trace: &SimulationTrace,
    shape: &PeriodicShape,
    kernel: &BSplineKernel,
    grid: &[f64],
    q: &QuadratureSpec,
) -> Result<DemodulationResult, FilterError> {
    let grid = checked_grid(trace, grid)?;
    let moments = CellMoments::new(input, trace, shape, kernel, q);
    let pairs = grid
        .par_iter()
        .map(|&t| moments.pair(input, trace, shape, kernel, t, q))
        .collect();
    Ok(assemble(grid, pairs))
}

/// [`error_signal`] by direct per-point quadrature.
pub fn error_signal_direct(
    input: &InputModel,
    trace: &SimulationTrace,
    shape: &PeriodicShape,
    kernel: &BSplineKernel,
    grid: &[f64],
    q: &QuadratureSpec,
) -> Result<DemodulationResult, FilterError> {
    let grid = checked_grid(trace, grid)?;
    let pairs = grid
        .par_iter()
        .map(|&t| filtered_pair(input, trace, shape, kernel, t, q))
        .collect();
    Ok(assemble(grid, pairs))
}
