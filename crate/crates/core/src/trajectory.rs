//! Sum-of-sines reference trajectories.
//!
//! A trajectory is `r(t) = scale · w(t) · Σ Aᵢ sin(2π fᵢ t + φᵢ)` where `w` is a
//! raised-cosine ramp over the first `ramp_s` seconds. The ramp pins
//! `r(0) = ṙ(0) = 0` while leaving the sinusoidal content untouched afterwards.
//! Derivatives are evaluated in closed form.

use std::f64::consts::{PI, TAU};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{step_count, EggParams};
use crate::rng::{self, Rng};

pub const COMPONENT_COUNT: usize = 5;

/// Tolerance on `t` beyond the trial end, absorbing grid rounding.
const TIME_SLACK: f64 = 1e-9;

const MAX_DRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SineComponent {
    /// m
    pub amplitude: f64,
    /// Hz
    pub frequency: f64,
    /// rad
    pub phase: f64,
}

/// Reference position and its first two time derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RefSample {
    pub r: f64,
    pub dr: f64,
    pub ddr: f64,
}

/// Anything the simulator can track. Library trajectories implement it; tests
/// plug in simpler signals.
pub trait Reference: Sync {
    fn sample(&self, t: f64) -> Result<RefSample>;
    fn duration(&self) -> f64;
    fn id(&self) -> &str;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub duration_s: f64,
    pub dt_s: f64,
    pub freq_min_hz: f64,
    pub freq_max_hz: f64,
    /// RMS of the ideal net force every trajectory is scaled to, N.
    pub effort_target: f64,
    /// Minimum fraction of the trial the ideal force must leave the no-switch band.
    pub switching_threshold: f64,
    pub ramp_s: f64,
    pub egg: EggParams,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            duration_s: 20.0,
            dt_s: 0.01,
            freq_min_hz: 0.1,
            freq_max_hz: 0.5,
            effort_target: 1.0,
            switching_threshold: 0.3,
            ramp_s: 1.0,
            egg: EggParams::default(),
        }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration_s > 0.0) {
            return Err(Error::Config(format!(
                "duration must be > 0, got {}",
                self.duration_s
            )));
        }
        if !(self.dt_s > 0.0 && self.dt_s < self.duration_s) {
            return Err(Error::Config(format!("dt must be in (0, duration), got {}", self.dt_s)));
        }
        if !(self.effort_target > 0.0) {
            return Err(Error::Config(format!(
                "effort target must be > 0, got {}",
                self.effort_target
            )));
        }
        if !(0.0 < self.freq_min_hz && self.freq_min_hz <= self.freq_max_hz) {
            return Err(Error::Config("frequency band must satisfy 0 < min <= max".into()));
        }
        if !(self.switching_threshold > 0.0 && self.switching_threshold < 1.0) {
            return Err(Error::Config("switching threshold must lie in (0, 1)".into()));
        }
        if !(self.ramp_s >= 0.0 && self.ramp_s < self.duration_s) {
            return Err(Error::Config("ramp must lie in [0, duration)".into()));
        }
        self.egg.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    pub id: String,
    pub components: Vec<SineComponent>,
    pub scale: f64,
    pub duration_s: f64,
    pub dt_s: f64,
    #[serde(default = "default_ramp")]
    pub ramp_s: f64,
}

fn default_ramp() -> f64 {
    1.0
}

impl ReferenceTrajectory {
    pub fn new(
        id: impl Into<String>,
        components: Vec<SineComponent>,
        scale: f64,
        duration_s: f64,
        dt_s: f64,
        ramp_s: f64,
    ) -> Result<Self> {
        let traj = Self {
            id: id.into(),
            components,
            scale,
            duration_s,
            dt_s,
            ramp_s,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.len() != COMPONENT_COUNT {
            return Err(Error::Config(format!(
                "trajectory `{}` needs {COMPONENT_COUNT} components, has {}",
                self.id,
                self.components.len()
            )));
        }
        for c in &self.components {
            if !(c.amplitude > 0.0 && c.amplitude.is_finite()) {
                return Err(Error::Config(format!("amplitude must be > 0, got {}", c.amplitude)));
            }
            if !(c.frequency > 0.0 && c.frequency.is_finite() && c.phase.is_finite()) {
                return Err(Error::Config("component frequency/phase must be finite, frequency > 0".into()));
            }
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!("scale must be > 0, got {}", self.scale)));
        }
        if !(self.duration_s > 0.0 && self.dt_s > 0.0 && self.ramp_s >= 0.0) {
            return Err(Error::Config("duration, dt must be > 0 and ramp >= 0".into()));
        }
        Ok(())
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }

    /// Raised-cosine ramp and its derivatives.
    fn window(&self, t: f64) -> (f64, f64, f64) {
        if self.ramp_s <= 0.0 || t >= self.ramp_s {
            return (1.0, 0.0, 0.0);
        }
        let k = PI / self.ramp_s;
        let (s, c) = (k * t).sin_cos();
        (0.5 * (1.0 - c), 0.5 * k * s, 0.5 * k * k * c)
    }

    fn sines(&self, t: f64) -> (f64, f64, f64) {
        self.components.iter().fold((0.0, 0.0, 0.0), |acc, c| {
            let w = TAU * c.frequency;
            let (s, co) = (w * t + c.phase).sin_cos();
            (
                acc.0 + c.amplitude * s,
                acc.1 + c.amplitude * w * co,
                acc.2 - c.amplitude * w * w * s,
            )
        })
    }
}

impl Reference for ReferenceTrajectory {
    fn sample(&self, t: f64) -> Result<RefSample> {
        evaluate_reference(self, t)
    }

    fn duration(&self) -> f64 {
        self.duration_s
    }

    fn id(&self) -> &str {
        &self.id
    }
}

pub fn evaluate_reference(traj: &ReferenceTrajectory, t: f64) -> Result<RefSample> {
    if !(t >= 0.0 && t <= traj.duration_s + TIME_SLACK) {
        return Err(Error::TimeOutOfRange {
            t,
            duration: traj.duration_s,
        });
    }
    let (w, dw, ddw) = traj.window(t);
    let (s, ds, dds) = traj.sines(t);
    Ok(RefSample {
        r: traj.scale * w * s,
        dr: traj.scale * (dw * s + w * ds),
        ddr: traj.scale * (ddw * s + 2.0 * dw * ds + w * dds),
    })
}

/// Net force `m·r̈ + b·ṙ` that would track a reference perfectly, sampled at
/// the record times `t_k = (k + 1)·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdealForceProfile {
    pub dt: f64,
    pub samples: Vec<f64>,
}

impl IdealForceProfile {
    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }
}

pub(crate) fn rms(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

pub fn ideal_force<R: Reference + ?Sized>(
    traj: &R,
    egg: &EggParams,
    dt: f64,
) -> Result<IdealForceProfile> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be > 0, got {dt}")));
    }
    let n = step_count(traj.duration(), dt);
    let samples = (1..=n)
        .map(|k| {
            let s = traj.sample(k as f64 * dt)?;
            Ok(egg.mass * s.ddr + egg.damping * s.dr)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(IdealForceProfile { dt, samples })
}

/// Fraction of samples where the ideal force exceeds what two in-band agents
/// can deliver without switching roles.
pub fn violation_fraction(profile: &IdealForceProfile, egg: &EggParams) -> f64 {
    if profile.samples.is_empty() {
        return 0.0;
    }
    let bound = egg.net_force_bound();
    let over = profile.samples.iter().filter(|f| f.abs() > bound).count();
    over as f64 / profile.samples.len() as f64
}

pub fn requires_switching(profile: &IdealForceProfile, egg: &EggParams, threshold: f64) -> bool {
    violation_fraction(profile, egg) > threshold
}

fn draw_components(rng: &mut Rng, config: &TrajectoryConfig) -> Vec<SineComponent> {
    (0..COMPONENT_COUNT)
        .map(|_| {
            let frequency = rng.random_range(config.freq_min_hz..=config.freq_max_hz);
            // Amplitudes inversely proportional to ω keep velocity contributions comparable.
            let amplitude = rng.random_range(0.2..=1.0) / (TAU * frequency);
            SineComponent {
                amplitude,
                frequency,
                phase: 0.0,
            }
        })
        .collect()
}

/// Draws sum-of-sines candidates from `seed` until one, scaled to the effort
/// target, demands role switching often enough.
pub fn generate_trajectory(seed: u64, config: &TrajectoryConfig) -> Result<ReferenceTrajectory> {
    config.validate()?;
    let mut rng = rng::stream(seed, &[rng::STREAM_TRAJECTORY]);
    for _ in 0..MAX_DRAWS {
        let unit = ReferenceTrajectory::new(
            format!("traj-{seed:016x}"),
            draw_components(&mut rng, config),
            1.0,
            config.duration_s,
            config.dt_s,
            config.ramp_s,
        )?;
        let unit_rms = ideal_force(&unit, &config.egg, config.dt_s)?.rms();
        if !(unit_rms > 0.0) {
            continue;
        }
        let traj = ReferenceTrajectory {
            scale: config.effort_target / unit_rms,
            ..unit
        };
        let profile = ideal_force(&traj, &config.egg, config.dt_s)?;
        if requires_switching(&profile, &config.egg, config.switching_threshold) {
            return Ok(traj);
        }
    }
    Err(Error::TrajectoryRejected(MAX_DRAWS))
}

pub const HOLDOUT_ID: &str = "holdout";

/// Training rotation plus one held-out trajectory, all regenerated from the run seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLibrary {
    pub trajectories: Vec<ReferenceTrajectory>,
    pub holdout: ReferenceTrajectory,
}

impl TrajectoryLibrary {
    pub fn generate(run_seed: u64, count: usize, config: &TrajectoryConfig) -> Result<Self> {
        if count == 0 {
            return Err(Error::Config("trajectory count must be > 0".into()));
        }
        let trajectories = (0..count)
            .map(|i| {
                let seed = rng::derive_seed(run_seed, &[rng::STREAM_TRAJECTORY, i as u64]);
                Ok(generate_trajectory(seed, config)?.with_id(format!("traj-{i}")))
            })
            .collect::<Result<Vec<_>>>()?;
        let holdout_seed = rng::derive_seed(run_seed, &[rng::STREAM_HOLDOUT]);
        let holdout = generate_trajectory(holdout_seed, config)?.with_id(HOLDOUT_ID);
        Ok(Self {
            trajectories,
            holdout,
        })
    }

    pub fn get(&self, id: &str) -> Result<&ReferenceTrajectory> {
        if id == HOLDOUT_ID {
            return Ok(&self.holdout);
        }
        self.trajectories
            .iter()
            .find(|t| t.id == id)
            .ok_or_else(|| Error::UnknownTrajectory(id.to_string()))
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}
