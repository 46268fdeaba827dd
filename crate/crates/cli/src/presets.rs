//! Named experiment inputs.

use std::collections::BTreeMap;

use ctsd::signal::{Envelope, InputModel, PeriodicShape, ShapeRegistry};
use ctsd::SignalError;

/// One input of an experiment, resolved against a PWM period.
#[derive(Debug, Clone)]
pub struct InputCase {
    pub label: String,
    pub input: InputModel,
    pub demod_shape: PeriodicShape,
}

pub trait Preset: Send + Sync {
    fn name(&self) -> &str;
    fn describe(&self) -> &str;
    fn build(&self, pwm_period: f64, shapes: &ShapeRegistry) -> Result<InputCase, SignalError>;
}

/// `u_i = z · s_i`, demodulated with `s_i` itself.
struct ReferenceInput {
    name: &'static str,
    label: &'static str,
    shape: &'static str,
    describe: &'static str,
}

impl Preset for ReferenceInput {
    fn name(&self) -> &str {
        self.name
    }

    fn describe(&self) -> &str {
        self.describe
    }

    fn build(&self, pwm_period: f64, shapes: &ShapeRegistry) -> Result<InputCase, SignalError> {
        let shape = shapes.build(self.shape, pwm_period)?;
        Ok(InputCase {
            label: self.label.to_string(),
            input: InputModel::new(Envelope::reference(), shape.clone()),
            demod_shape: shape,
        })
    }
}

pub struct PresetRegistry {
    presets: BTreeMap<String, Box<dyn Preset>>,
}

impl PresetRegistry {
    pub fn empty() -> Self {
        Self {
            presets: BTreeMap::new(),
        }
    }

    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register(Box::new(ReferenceInput {
            name: "paper-u1",
            label: "u1",
            shape: "s1",
            describe: "z · s1, piecewise-linear ramp with a kink",
        }));
        reg.register(Box::new(ReferenceInput {
            name: "paper-u2",
            label: "u2",
            shape: "s2",
            describe: "z · s2, √2 cos(2πτ)",
        }));
        reg.register(Box::new(ReferenceInput {
            name: "paper-u3",
            label: "u3",
            shape: "s3",
            describe: "z · s3, ±1 square wave",
        }));
        reg
    }

    pub fn register(&mut self, preset: Box<dyn Preset>) {
        self.presets.insert(preset.name().to_string(), preset);
    }

    pub fn get(&self, name: &str) -> Option<&dyn Preset> {
        self.presets.get(name).map(|p| p.as_ref())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.presets.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &dyn Preset> {
        self.presets.values().map(|p| p.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_presets() {
        let reg = PresetRegistry::builtin();
        assert_eq!(reg.names().collect::<Vec<_>>(), ["paper-u1", "paper-u2", "paper-u3"]);
        let shapes = ShapeRegistry::builtin();
        let case = reg.get("paper-u2").unwrap().build(1.0, &shapes).unwrap();
        assert_eq!(case.label, "u2");
        assert!((case.input.eval(0.0) - 0.04 * 2f64.sqrt()).abs() < 1e-15);
        assert!(reg.get("paper-u4").is_none());
    }
}
