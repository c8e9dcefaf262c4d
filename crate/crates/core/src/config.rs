use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::DEFAULT_STABILIZATION_SLOPE;
use crate::params::EggParams;
use crate::trajectory::TrajectoryConfig;

/// Everything that determines a run. Defaults are the full-scale setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub population_size: usize,
    pub generations: u32,
    pub mutation_rate: f64,
    pub dt: f64,
    pub duration: f64,
    pub egg: EggParams,
    pub stabilization_slope: f64,
    pub effort_target: f64,
    pub switching_threshold: f64,
    pub trajectory_count: usize,
    pub freq_min_hz: f64,
    pub freq_max_hz: f64,
    pub ramp_s: f64,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let traj = TrajectoryConfig::default();
        Self {
            population_size: 500,
            generations: 100,
            mutation_rate: 0.05,
            dt: traj.dt_s,
            duration: traj.duration_s,
            egg: EggParams::default(),
            stabilization_slope: DEFAULT_STABILIZATION_SLOPE,
            effort_target: traj.effort_target,
            switching_threshold: traj.switching_threshold,
            trajectory_count: 10,
            freq_min_hz: traj.freq_min_hz,
            freq_max_hz: traj.freq_max_hz,
            ramp_s: traj.ramp_s,
            seed: 1,
            output_dir: None,
        }
    }
}

impl RunConfig {
    /// Laptop-sized run: 100 dyads for 40 generations.
    pub fn desk_scale(seed: u64) -> Self {
        Self {
            population_size: 100,
            generations: 40,
            seed,
            ..Self::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let config: Self = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn trajectory_config(&self) -> TrajectoryConfig {
        TrajectoryConfig {
            duration_s: self.duration,
            dt_s: self.dt,
            freq_min_hz: self.freq_min_hz,
            freq_max_hz: self.freq_max_hz,
            effort_target: self.effort_target,
            switching_threshold: self.switching_threshold,
            ramp_s: self.ramp_s,
            egg: self.egg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 {
            return Err(Error::Config("population_size must be > 0".into()));
        }
        if self.generations == 0 {
            return Err(Error::Config("generations must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return Err(Error::Config(format!(
                "mutation_rate must lie in [0, 1], got {}",
                self.mutation_rate
            )));
        }
        if !(self.stabilization_slope > 0.0 && self.stabilization_slope.is_finite()) {
            return Err(Error::Config("stabilization_slope must be > 0".into()));
        }
        if self.trajectory_count == 0 {
            return Err(Error::Config("trajectory_count must be > 0".into()));
        }
        self.trajectory_config().validate()
    }
}
