//! The five minimization objectives scored on every trial.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::EggParams;
use crate::simulator::TrialRecord;
use crate::trajectory::rms;

pub const OBJECTIVE_COUNT: usize = 5;

/// Loss assigned to every objective of a numerically failed trial. Finite so
/// it survives JSON, and larger than any real score so it always ranks last.
pub const INVALID_LOSS: f64 = f64::MAX;

/// Default slope of the out-of-band penalty, 1/N.
pub const DEFAULT_STABILIZATION_SLOPE: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub tracking: f64,
    pub stabilization: f64,
    pub effort1: f64,
    pub effort2: f64,
    pub jerk: f64,
}

impl ObjectiveVector {
    pub const INVALID: Self = Self {
        tracking: INVALID_LOSS,
        stabilization: INVALID_LOSS,
        effort1: INVALID_LOSS,
        effort2: INVALID_LOSS,
        jerk: INVALID_LOSS,
    };

    pub fn to_array(&self) -> [f64; OBJECTIVE_COUNT] {
        [
            self.tracking,
            self.stabilization,
            self.effort1,
            self.effort2,
            self.jerk,
        ]
    }

    pub fn is_invalid(&self) -> bool {
        self.to_array().contains(&INVALID_LOSS)
    }
}

/// RMS tracking error normalized by the RMS of the reference, so an object
/// that never moves scores exactly 1.
pub fn tracking_loss(rec: &TrialRecord) -> Result<f64> {
    let ref_rms = rms(&rec.r);
    if !(ref_rms > 0.0) {
        return Err(Error::DegenerateReference);
    }
    Ok(rms(&rec.e) / ref_rms)
}

/// Per-step penalty `slope · distance outside [f_min, f_max]`, averaged.
pub fn stabilization_loss(rec: &TrialRecord, egg: &EggParams, slope: f64) -> f64 {
    if rec.f_n.is_empty() {
        return 0.0;
    }
    let total: f64 = rec
        .f_n
        .iter()
        .map(|&f| slope * (egg.f_min - f).max(f - egg.f_max).max(0.0))
        .sum();
    total / rec.f_n.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentSlot {
    First,
    Second,
}

/// RMS force of one agent.
pub fn effort(rec: &TrialRecord, agent: AgentSlot) -> f64 {
    match agent {
        AgentSlot::First => rms(&rec.f1),
        AgentSlot::Second => rms(&rec.f2),
    }
}

/// Sum over agents of the RMS second derivative of force, taken as the
/// backward difference of the recorded force rate.
pub fn jerk_loss(rec: &TrialRecord) -> f64 {
    let dt = rec.dt;
    let rms_diff = |rates: &[f64]| {
        let diffs: Vec<f64> = rates.windows(2).map(|w| (w[1] - w[0]) / dt).collect();
        rms(&diffs)
    };
    rms_diff(&rec.fdot1) + rms_diff(&rec.fdot2)
}

/// All five objectives. A record with a motionless reference scores its raw
/// RMS error as tracking loss, since the normalized form is undefined there.
pub fn score(rec: &TrialRecord, egg: &EggParams, slope: f64) -> ObjectiveVector {
    if !rec.valid || rec.is_empty() {
        return ObjectiveVector::INVALID;
    }
    let tracking = match tracking_loss(rec) {
        Ok(v) => v,
        Err(_) => rms(&rec.e),
    };
    let out = ObjectiveVector {
        tracking,
        stabilization: stabilization_loss(rec, egg, slope),
        effort1: effort(rec, AgentSlot::First),
        effort2: effort(rec, AgentSlot::Second),
        jerk: jerk_loss(rec),
    };
    if out.to_array().iter().all(|v| v.is_finite()) {
        out
    } else {
        ObjectiveVector::INVALID
    }
}
