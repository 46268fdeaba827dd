//! Simulation and filtered-error analysis for a continuous-time second-order
//! sigma-delta modulator.
//!
//! The crate is organised bottom-up:
//!
//! * [`signal`]: analytic inputs `u = z · s` and B-spline kernels `K^k`,
//! * [`quadrature`]: Gauss–Legendre rules over explicit breakpoints,
//! * [`modulator`]: the loop itself, traces and primitive diagnostics,
//! * [`filter`]: the demodulation integrals `ẑ`, `ẑ_ΣΔ` and the error `I(t)`,
//! * [`analysis`]: `‖I‖₂`, sweeps across `N` and log-log slope fits.

pub mod analysis;
pub mod error;
pub mod filter;
pub mod modulator;
pub mod quadrature;
pub mod signal;

pub use error::{
    AnalysisError, ConfigError, DiagnosticsError, FilterError, InstabilityDetected, QuadratureError,
    SignalError, SimulationError,
};
