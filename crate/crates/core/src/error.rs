use thiserror::Error;

use crate::modulator::SimulationTrace;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignalError {
    #[error("kernel order must be at least 1")]
    ZeroKernelOrder,
    #[error("derivative of order {order} is not defined for a kernel of order {kernel_order}")]
    DerivativeOrder { order: u32, kernel_order: u32 },
    #[error("shape period must be positive and finite, got {0}")]
    InvalidPeriod(f64),
    #[error("invalid segment layout: {0}")]
    InvalidSegments(String),
    #[error("unknown shape `{0}`")]
    UnknownShape(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("Gauss-Legendre rules support 1..=16 points, got {0}")]
    UnsupportedPointCount(usize),
    #[error("cells per period must be at least 1")]
    ZeroCellsPerPeriod,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("oversampling ratio must be at least 1")]
    ZeroOversamplingRatio,
    #[error("substeps per sample must be at least 1")]
    ZeroSubsteps,
    #[error("PWM period must be positive and finite, got {0}")]
    InvalidPwmPeriod(f64),
    #[error("quantizer levels must satisfy low < high, got ({low}, {high})")]
    InvalidLevels { low: f64, high: f64 },
    #[error("stability bound must be positive, got {0}")]
    InvalidStabilityBound(f64),
    #[error("{0} must be finite")]
    NonFinite(&'static str),
}

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("duration must be positive")]
    NonPositiveDuration,
    /// The loop left the stability bound. The trace recorded up to and
    /// including the offending sample is kept.
    #[error("instability detected at sample {sample_index}")]
    Unstable {
        sample_index: usize,
        trace: Box<SimulationTrace>,
    },
}

/// Signalled by a single sample-interval step.
#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("instability detected at sample {sample_index} (|x| = {magnitude})")]
pub struct InstabilityDetected {
    pub sample_index: usize,
    pub magnitude: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("primitive diagnostics require a stable trace")]
    UnstableTrace,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("time {t} lies outside the trace [0, {duration}]")]
    OutsideTrace { t: f64, duration: f64 },
    #[error("filter time must be non-negative, got {0}")]
    NegativeTime(f64),
}

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("log-log fit requires positive values, got {0}")]
    NonPositiveValue(f64),
    #[error("grid does not cover [{t0}, {t1}]")]
    WindowNotCovered { t0: f64, t1: f64 },
    #[error("grid is not uniform on the norm window")]
    NonUniformGrid,
    #[error("sweep needs at least 3 distinct oversampling ratios, got {0}")]
    TooFewRatios(usize),
    #[error(transparent)]
    Simulation(#[from] SimulationError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
}
