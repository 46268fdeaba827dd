//! TOML experiment files.
//!
//! ```toml
//! presets = ["paper-u1"]
//!
//! [modulator]
//! oversampling_ratio = 200
//! substeps = 16
//!
//! [run]
//! duration = 250.0
//!
//! [[input]]
//! label = "ramp"
//! shape = "s1"
//! envelope = [{ kind = "cos", amplitude = 0.04, angular_frequency = 0.0833 }]
//! ```
//!
//! Every table rejects keys it does not know.

use std::path::{Path, PathBuf};

use ctsd::analysis::{SweepSpec, DEFAULT_NORM_WINDOW};
use ctsd::filter::QuadratureSpec;
use ctsd::modulator::{ModulatorConfig, QuantizerLevels};
use ctsd::signal::{
    BSplineKernel, Envelope, EnvelopeTerm, InputModel, PeriodicShape, Segment, ShapeRegistry, Trig,
};
use serde::Deserialize;

use crate::error::CliError;
use crate::presets::{InputCase, PresetRegistry};

pub const DEFAULT_RATIOS: [u32; 6] = [25, 50, 100, 200, 400, 800];
pub const DEFAULT_GRID_SPACING: f64 = 1.0 / 32.0;
pub const DEFAULT_DURATION: f64 = 250.0;
pub const DEFAULT_OUTPUT_DIR: &str = "results";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    #[serde(default)]
    pub presets: Vec<String>,
    #[serde(default)]
    pub modulator: RawModulator,
    #[serde(default)]
    pub filter: RawFilter,
    #[serde(default)]
    pub run: RawRun,
    #[serde(default)]
    pub sweep: RawSweep,
    #[serde(default)]
    pub output: RawOutput,
    #[serde(default)]
    pub input: Vec<RawInput>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawModulator {
    pub oversampling_ratio: Option<i64>,
    pub pwm_period: Option<f64>,
    pub substeps: Option<i64>,
    pub levels: Option<[f64; 2]>,
    pub threshold: Option<f64>,
    pub output_coeffs: Option<[f64; 2]>,
    pub initial_state: Option<[f64; 2]>,
    pub stability_bound: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFilter {
    pub kernel_order: Option<i64>,
    pub quadrature_points: Option<i64>,
    pub cells_per_period: Option<i64>,
    pub grid_spacing: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawRun {
    pub duration: Option<f64>,
    pub norm_window: Option<[f64; 2]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSweep {
    pub ratios: Option<Vec<i64>>,
    pub jobs: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    pub dir: Option<PathBuf>,
    pub svg: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawInput {
    pub label: String,
    #[serde(default)]
    pub envelope: Vec<RawTerm>,
    /// Name in the shape registry.
    pub shape: Option<String>,
    pub segments: Option<Vec<RawSegment>>,
    pub harmonic: Option<RawHarmonic>,
    /// Defaults to the input's own shape.
    pub demod_shape: Option<String>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RawTrig {
    Cos,
    Sin,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTerm {
    pub kind: RawTrig,
    pub amplitude: f64,
    pub angular_frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSegment {
    pub start: f64,
    pub end: f64,
    pub coeffs: Vec<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawHarmonic {
    pub amplitude: f64,
    pub cycles: u32,
    #[serde(default)]
    pub phase: f64,
}

/// A fully validated experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub inputs: Vec<InputCase>,
    pub modulator: ModulatorConfig,
    pub kernel: BSplineKernel,
    pub quadrature: QuadratureSpec,
    pub grid_spacing: f64,
    pub duration: f64,
    pub norm_window: (f64, f64),
    pub ratios: Vec<u32>,
    pub jobs: Option<usize>,
    pub output_dir: PathBuf,
    pub svg: bool,
}

impl Experiment {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::config(e.message().to_string()))?;
        resolve(raw, &PresetRegistry::builtin(), &ShapeRegistry::builtin())
    }

    /// The baseline experiment for the named presets.
    pub fn from_presets(names: &[&str]) -> Result<Self, CliError> {
        let raw = RawConfig {
            presets: names.iter().map(|s| s.to_string()).collect(),
            ..RawConfig::default()
        };
        resolve(raw, &PresetRegistry::builtin(), &ShapeRegistry::builtin())
    }

    pub fn sweep_spec(&self, case: &InputCase) -> SweepSpec {
        SweepSpec {
            label: case.label.clone(),
            input: case.input.clone(),
            demod_shape: case.demod_shape.clone(),
            kernel: self.kernel.clone(),
            base: self.modulator.clone(),
            ratios: self.ratios.clone(),
            duration: self.duration,
            grid_spacing: self.grid_spacing,
            norm_window: self.norm_window,
            quadrature: self.quadrature.clone(),
        }
    }
}

fn positive_int(value: i64, key: &str) -> Result<u32, CliError> {
    u32::try_from(value)
        .ok()
        .filter(|&v| v > 0)
        .ok_or_else(|| CliError::config(format!("{key} must be a positive integer, got {value}")))
}

fn positive_real(value: f64, key: &str) -> Result<f64, CliError> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(CliError::config(format!("{key} must be positive, got {value}")))
    }
}

pub fn resolve(
    raw: RawConfig,
    presets: &PresetRegistry,
    shapes: &ShapeRegistry,
) -> Result<Experiment, CliError> {
    let defaults = ModulatorConfig::default();
    let m = &raw.modulator;
    let oversampling_ratio = match m.oversampling_ratio {
        Some(n) => u32::try_from(n).map_err(|_| {
            CliError::config(format!("modulator.oversampling_ratio must be a positive integer, got {n}"))
        })?,
        None => defaults.oversampling_ratio,
    };
    let substeps = match m.substeps {
        Some(n) => positive_int(n, "modulator.substeps")?,
        None => defaults.substeps,
    };
    let modulator = ModulatorConfig {
        oversampling_ratio,
        pwm_period: m.pwm_period.unwrap_or(defaults.pwm_period),
        substeps,
        levels: m
            .levels
            .map(|[lo, hi]| QuantizerLevels::new(lo, hi))
            .unwrap_or(defaults.levels),
        threshold: m.threshold.unwrap_or(defaults.threshold),
        output_coeffs: m.output_coeffs.map(|[a, b]| (a, b)).unwrap_or(defaults.output_coeffs),
        initial_state: m.initial_state.map(|[a, b]| (a, b)).unwrap_or(defaults.initial_state),
        stability_bound: m.stability_bound.unwrap_or(defaults.stability_bound),
    };
    modulator.validate()?;

    let f = &raw.filter;
    let kernel = BSplineKernel::new(match f.kernel_order {
        Some(k) => positive_int(k, "filter.kernel_order")?,
        None => 3,
    })?;
    let mut quadrature = match f.quadrature_points {
        Some(p) => QuadratureSpec::new(positive_int(p, "filter.quadrature_points")? as usize)?,
        None => QuadratureSpec::default(),
    };
    if let Some(c) = f.cells_per_period {
        quadrature = quadrature.with_cells_per_period(positive_int(c, "filter.cells_per_period")? as usize)?;
    }
    let grid_spacing = positive_real(f.grid_spacing.unwrap_or(DEFAULT_GRID_SPACING), "filter.grid_spacing")?;

    let duration = raw.run.duration.unwrap_or(DEFAULT_DURATION);
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(CliError::config("run.duration: duration must be positive"));
    }
    let norm_window = match raw.run.norm_window {
        Some([a, b]) => (a, b),
        None => (DEFAULT_NORM_WINDOW.0, DEFAULT_NORM_WINDOW.1.min(duration)),
    };
    if !(norm_window.0 >= 0.0 && norm_window.0 < norm_window.1 && norm_window.1 <= duration) {
        return Err(CliError::config(format!(
            "run.norm_window [{}, {}] must be an interval inside [0, {duration}]",
            norm_window.0, norm_window.1
        )));
    }

    let ratios = match &raw.sweep.ratios {
        Some(list) => list
            .iter()
            .map(|&n| positive_int(n, "sweep.ratios entries"))
            .collect::<Result<Vec<_>, _>>()?,
        None => DEFAULT_RATIOS.to_vec(),
    };
    let jobs = raw
        .sweep
        .jobs
        .map(|j| positive_int(j, "sweep.jobs").map(|j| j as usize))
        .transpose()?;

    let mut inputs = Vec::new();
    for name in &raw.presets {
        let preset = presets.get(name).ok_or_else(|| {
            let known: Vec<&str> = presets.names().collect();
            CliError::config(format!("unknown preset `{name}` (known: {})", known.join(", ")))
        })?;
        inputs.push(preset.build(modulator.pwm_period, shapes)?);
    }
    for entry in raw.input {
        inputs.push(resolve_input(entry, modulator.pwm_period, shapes)?);
    }
    if inputs.is_empty() {
        return Err(CliError::config("no inputs: list `presets` or add an [[input]] table"));
    }
    for (i, case) in inputs.iter().enumerate() {
        if inputs[..i].iter().any(|c| c.label == case.label) {
            return Err(CliError::config(format!("duplicate input label `{}`", case.label)));
        }
    }

    Ok(Experiment {
        inputs,
        modulator,
        kernel,
        quadrature,
        grid_spacing,
        duration,
        norm_window,
        ratios,
        jobs,
        output_dir: raw.output.dir.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR)),
        svg: raw.output.svg.unwrap_or(true),
    })
}

fn resolve_input(entry: RawInput, period: f64, shapes: &ShapeRegistry) -> Result<InputCase, CliError> {
    let label = entry.label.trim().to_string();
    if label.is_empty() || label.contains([',', '/', '\\', '"']) {
        return Err(CliError::config(format!("input label `{}` is empty or has a reserved character", entry.label)));
    }
    let ctx = |e: ctsd::SignalError| CliError::config(format!("input `{label}`: {e}"));
    let shape = match (entry.shape, entry.segments, entry.harmonic) {
        (Some(name), None, None) => shapes.build(&name, period).map_err(ctx)?,
        (None, Some(segs), None) => PeriodicShape::piecewise(
            period,
            segs.into_iter()
                .map(|s| Segment::new(s.start, s.end, s.coeffs))
                .collect(),
        )
        .map_err(ctx)?,
        (None, None, Some(h)) => PeriodicShape::harmonic(period, h.amplitude, h.cycles, h.phase).map_err(ctx)?,
        _ => {
            return Err(CliError::config(format!(
                "input `{label}` needs exactly one of `shape`, `segments` or `harmonic`"
            )))
        }
    };
    let demod_shape = match entry.demod_shape {
        Some(name) => shapes.build(&name, period).map_err(ctx)?,
        None => shape.clone(),
    };
    let mut terms = Vec::with_capacity(entry.envelope.len());
    for t in entry.envelope {
        if !(t.amplitude.is_finite() && t.angular_frequency.is_finite() && t.phase.is_finite()) {
            return Err(CliError::config(format!("input `{label}`: envelope terms must be finite")));
        }
        terms.push(EnvelopeTerm {
            amplitude: t.amplitude,
            angular_frequency: t.angular_frequency,
            phase: t.phase,
            kind: match t.kind {
                RawTrig::Cos => Trig::Cos,
                RawTrig::Sin => Trig::Sin,
            },
        });
    }
    Ok(InputCase {
        label,
        input: InputModel::new(Envelope::new(terms), shape),
        demod_shape,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_defaults_are_the_baseline() {
        let exp = Experiment::from_toml(r#"presets = ["paper-u1"]"#).unwrap();
        assert_eq!(exp.modulator, ModulatorConfig::default());
        assert_eq!(exp.kernel.order(), 3);
        assert_eq!(exp.duration, 250.0);
        assert_eq!(exp.norm_window, (1.0, 250.0));
        assert_eq!(exp.grid_spacing, 1.0 / 32.0);
        assert_eq!(exp.ratios, DEFAULT_RATIOS);
        assert_eq!(exp.inputs[0].label, "u1");
    }

    #[test]
    fn unknown_keys_are_rejected_everywhere() {
        for text in [
            "presets = [\"paper-u1\"]\nbogus = 1",
            "presets = [\"paper-u1\"]\n[modulator]\nratio = 3",
            "presets = [\"paper-u1\"]\n[filter]\norder = 3",
            "presets = [\"paper-u1\"]\n[extra]\nx = 1",
            "[[input]]\nlabel = \"a\"\nshape = \"s1\"\ncolour = \"red\"",
            "[[input]]\nlabel = \"a\"\nshape = \"s1\"\nenvelope = [{ kind = \"cos\", amplitude = 1.0, angular_frequency = 0.0, offset = 1 }]",
        ] {
            let err = Experiment::from_toml(text).unwrap_err();
            assert_eq!(err.exit_code(), 1, "{text}");
            assert!(err.to_string().contains("unknown field"), "{err}");
        }
    }

    #[test]
    fn zero_ratio_is_a_config_error() {
        let err = Experiment::from_toml("presets = [\"paper-u1\"]\n[modulator]\noversampling_ratio = 0").unwrap_err();
        assert_eq!(err.exit_code(), 1);
        let err = Experiment::from_toml("presets = [\"paper-u1\"]\n[sweep]\nratios = [25, 0, 100]").unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn zero_duration_is_rejected() {
        let err = Experiment::from_toml("presets = [\"paper-u1\"]\n[run]\nduration = 0.0").unwrap_err();
        assert!(err.to_string().contains("duration must be positive"));
    }

    #[test]
    fn custom_inputs() {
        let exp = Experiment::from_toml(
            r#"
            [run]
            duration = 20.0

            [[input]]
            label = "tri"
            segments = [{ start = 0.0, end = 0.5, coeffs = [0.0, 2.0] }, { start = 0.5, end = 1.0, coeffs = [2.0, -2.0] }]
            envelope = [{ kind = "sin", amplitude = 0.1, angular_frequency = 0.5 }]

            [[input]]
            label = "h2"
            harmonic = { amplitude = 1.0, cycles = 2 }
            demod_shape = "s2"
            "#,
        )
        .unwrap();
        assert_eq!(exp.inputs.len(), 2);
        assert_eq!(exp.norm_window, (1.0, 20.0));
        assert!((exp.inputs[0].input.shape.eval(0.25) - 0.5).abs() < 1e-15);
        assert_eq!(exp.inputs[1].demod_shape.eval(0.0), 2f64.sqrt());
    }

    #[test]
    fn shape_choice_must_be_unique() {
        let err = Experiment::from_toml("[[input]]\nlabel = \"a\"\nshape = \"s1\"\nharmonic = { amplitude = 1.0, cycles = 1 }")
            .unwrap_err();
        assert!(err.to_string().contains("exactly one"));
        let err = Experiment::from_toml("[[input]]\nlabel = \"a\"\nshape = \"s9\"").unwrap_err();
        assert_eq!(err.exit_code(), 1);
    }

    #[test]
    fn misc_rejections() {
        for text in [
            "",
            "presets = [\"paper-u9\"]",
            "presets = [\"paper-u1\", \"paper-u1\"]",
            "presets = [\"paper-u1\"]\n[run]\nnorm_window = [1.0, 300.0]",
            "presets = [\"paper-u1\"]\n[filter]\ngrid_spacing = -1.0",
            "presets = [\"paper-u1\"]\n[modulator]\nlevels = [1.0, -1.0]",
            "presets = [\"paper-u1\"]\n[filter]\nquadrature_points = 40",
            "presets = [\"paper-u1\"]\n[filter]\nkernel_order = 0",
        ] {
            assert_eq!(Experiment::from_toml(text).unwrap_err().exit_code(), 1, "{text}");
        }
    }
}
