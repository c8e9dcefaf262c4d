use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical constants of the shared object and its normal-force band.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EggParams {
    /// kg
    pub mass: f64,
    /// N·s/m
    pub damping: f64,
    /// N
    pub f_min: f64,
    /// N
    pub f_max: f64,
}

impl Default for EggParams {
    fn default() -> Self {
        Self {
            mass: 0.5,
            damping: 1.0,
            f_min: 0.1,
            f_max: 1.0,
        }
    }
}

impl EggParams {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.mass, self.damping, self.f_min, self.f_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("egg parameters"));
        }
        if self.mass <= 0.0 {
            return Err(Error::Config(format!("mass must be > 0, got {}", self.mass)));
        }
        if self.damping < 0.0 {
            return Err(Error::Config(format!(
                "damping must be >= 0, got {}",
                self.damping
            )));
        }
        if !(0.0 <= self.f_min && self.f_min < self.f_max) {
            return Err(Error::Config(format!(
                "force band must satisfy 0 <= f_min < f_max, got [{}, {}]",
                self.f_min, self.f_max
            )));
        }
        Ok(())
    }

    /// Normal-force setpoint for stabilizing controllers: the middle of the band.
    pub fn f_opt(&self) -> f64 {
        0.5 * (self.f_min + self.f_max)
    }

    /// Largest net force two in-band agents can produce without switching.
    pub fn net_force_bound(&self) -> f64 {
        self.f_max - self.f_min
    }
}

/// Number of integration steps in a trial of `duration` seconds at step `dt`.
pub fn step_count(duration: f64, dt: f64) -> usize {
    (duration / dt).round() as usize
}
