//! One cooperative trial: role transitions with a refractory period, force-rate
//! integration with non-negative forces, RK4 object dynamics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::agents::{Controller, ControllerKind, ControllerLibrary, Dyad, DyadId, FeatureVector, Role, SwitchPolicy};
use crate::error::{Error, Result};
use crate::params::{step_count, EggParams};
use crate::trajectory::{RefSample, Reference};

/// Seconds during which an agent that just switched cannot switch again.
pub const REFRACTORY_S: f64 = 0.25;

/// Which side of the object an agent pushes from. Agent 2 sees kinematics mirrored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentIndex {
    First,
    Second,
}

/// Per-agent observation. Both agents share the normal-force entries; the
/// second agent perceives reference and error with the opposite sign.
#[allow(clippy::too_many_arguments)]
pub fn build_features(
    agent: AgentIndex,
    r: f64,
    dr: f64,
    ddr: f64,
    e: f64,
    de: f64,
    dde: f64,
    f_n: f64,
    df_n: f64,
) -> FeatureVector {
    let sign = match agent {
        AgentIndex::First => 1.0,
        AgentIndex::Second => -1.0,
    };
    FeatureVector::new(
        sign * r,
        sign * dr,
        sign * ddr,
        sign * e,
        sign * de,
        sign * dde,
        f_n,
        df_n,
    )
}

/// Advances `m·ẍ + b·ẋ = f` by one classical Runge–Kutta step with `f` held constant.
pub fn rk4_step(x: f64, v: f64, net_force: f64, egg: &EggParams, dt: f64) -> Result<(f64, f64)> {
    if !(x.is_finite() && v.is_finite() && net_force.is_finite()) {
        return Err(Error::NonFinite("object state"));
    }
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be > 0, got {dt}")));
    }
    let accel = |v: f64| (net_force - egg.damping * v) / egg.mass;
    let (k1x, k1v) = (v, accel(v));
    let v2 = v + 0.5 * dt * k1v;
    let (k2x, k2v) = (v2, accel(v2));
    let v3 = v + 0.5 * dt * k2v;
    let (k3x, k3v) = (v3, accel(v3));
    let v4 = v + dt * k3v;
    let (k4x, k4v) = (v4, accel(v4));
    let x = x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    let v = v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    if !(x.is_finite() && v.is_finite()) {
        return Err(Error::NonFinite("object state"));
    }
    Ok((x, v))
}

/// Initial condition of a trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitSpec {
    pub x: f64,
    pub v: f64,
    pub f1: f64,
    pub f2: f64,
    pub role1: Role,
    pub role2: Role,
}

impl InitSpec {
    /// Object at rest, both agents stabilizing at the band midpoint.
    pub fn standard(egg: &EggParams) -> Self {
        Self {
            x: 0.0,
            v: 0.0,
            f1: egg.f_opt(),
            f2: egg.f_opt(),
            role1: Role::Stabilize,
            role2: Role::Stabilize,
        }
    }
}

/// Mutable per-trial state. Dyads themselves stay immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub step: usize,
    pub x: f64,
    pub v: f64,
    pub forces: [f64; 2],
    pub roles: [Role; 2],
    /// Steps left before each agent may switch again.
    pub refractory: [u32; 2],
    prev_e: f64,
    prev_de: f64,
    prev_f_n: f64,
}

impl SimState {
    pub fn new(init: &InitSpec) -> Self {
        Self {
            step: 0,
            x: init.x,
            v: init.v,
            forces: [init.f1, init.f2],
            roles: [init.role1, init.role2],
            refractory: [0, 0],
            prev_e: 0.0,
            prev_de: 0.0,
            prev_f_n: init.f1.min(init.f2),
        }
    }

    pub fn time(&self, dt: f64) -> f64 {
        self.step as f64 * dt
    }

    pub fn f_n(&self) -> f64 {
        self.forces[0].min(self.forces[1])
    }

    pub fn refractory_s(&self, dt: f64) -> [f64; 2] {
        self.refractory.map(|k| k as f64 * dt)
    }

    /// Feature vectors for both agents at the current step. Error and force
    /// derivatives are backward differences and read 0 until history exists.
    pub fn features(&self, reference: &RefSample, dt: f64) -> (FeatureVector, FeatureVector, Derivs) {
        let e = reference.r - self.x;
        let de = if self.step >= 1 { (e - self.prev_e) / dt } else { 0.0 };
        let dde = if self.step >= 2 { (de - self.prev_de) / dt } else { 0.0 };
        let f_n = self.f_n();
        let df_n = if self.step >= 1 { (f_n - self.prev_f_n) / dt } else { 0.0 };
        let RefSample { r, dr, ddr } = *reference;
        let first = build_features(AgentIndex::First, r, dr, ddr, e, de, dde, f_n, df_n);
        let second = build_features(AgentIndex::Second, r, dr, ddr, e, de, dde, f_n, df_n);
        (first, second, Derivs { e, de })
    }
}

/// Tracking error and its rate at the current step, kept for the next
/// step's backward differences.
#[derive(Debug, Clone, Copy)]
pub struct Derivs {
    pub e: f64,
    pub de: f64,
}

/// A dyad with controller ids resolved against a library.
#[derive(Debug, Clone, Copy)]
pub struct ResolvedAgent<'a> {
    pub w_st: &'a SwitchPolicy,
    pub w_ts: &'a SwitchPolicy,
    pub c_s: &'a Controller,
    pub c_t: &'a Controller,
}

impl ResolvedAgent<'_> {
    fn policy(&self, role: Role) -> &SwitchPolicy {
        match role {
            Role::Stabilize => self.w_st,
            Role::Track => self.w_ts,
        }
    }

    fn controller(&self, role: Role) -> &Controller {
        match role {
            Role::Stabilize => self.c_s,
            Role::Track => self.c_t,
        }
    }
}

pub fn resolve<'a>(dyad: &'a Dyad, library: &'a ControllerLibrary) -> Result<[ResolvedAgent<'a>; 2]> {
    let one = |a: &'a crate::agents::Agent| -> Result<ResolvedAgent<'a>> {
        Ok(ResolvedAgent {
            w_st: &a.w_st,
            w_ts: &a.w_ts,
            c_s: library.get_kind(&a.c_s_id, ControllerKind::Stabilizing)?,
            c_t: library.get_kind(&a.c_t_id, ControllerKind::Tracking)?,
        })
    };
    Ok([one(&dyad.agent1)?, one(&dyad.agent2)?])
}

/// Values produced by one step, recorded at time `(step + 1)·dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub t: f64,
    pub r: f64,
    pub x: f64,
    pub e: f64,
    pub forces: [f64; 2],
    pub f_n: f64,
    /// Roles in force during the step.
    pub roles: [Role; 2],
    /// Applied force rates `(f_next − f) / dt`, after the non-negativity clamp.
    pub force_rates: [f64; 2],
}

/// How each agent picks its force rate within a step.
pub(crate) trait ForceLaw {
    /// Returns the role each agent occupies this step (after any transition).
    fn transition(&self, state: &SimState, theta: &[FeatureVector; 2]) -> Result<([Role; 2], [bool; 2])>;
    fn force_rate(&self, agent: usize, role: Role, theta: &FeatureVector) -> Result<f64>;
}

impl ForceLaw for [ResolvedAgent<'_>; 2] {
    fn transition(&self, state: &SimState, theta: &[FeatureVector; 2]) -> Result<([Role; 2], [bool; 2])> {
        let mut roles = state.roles;
        let mut switched = [false; 2];
        for i in 0..2 {
            if state.refractory[i] == 0 && self[i].policy(roles[i]).evaluate(&theta[i])? {
                roles[i] = roles[i].flipped();
                switched[i] = true;
            }
        }
        Ok((roles, switched))
    }

    fn force_rate(&self, agent: usize, role: Role, theta: &FeatureVector) -> Result<f64> {
        self[agent].controller(role).output(theta)
    }
}

pub(crate) fn advance<L: ForceLaw + ?Sized, R: Reference + ?Sized>(
    state: &SimState,
    law: &L,
    traj: &R,
    egg: &EggParams,
    dt: f64,
    refractory_steps: u32,
) -> Result<(SimState, StepOutput)> {
    let t = state.time(dt);
    let reference = traj.sample(t)?;
    let (th1, th2, d) = state.features(&reference, dt);
    let theta = [th1, th2];

    let (roles, switched) = law.transition(state, &theta)?;
    let mut refractory = state.refractory;
    for i in 0..2 {
        refractory[i] = if switched[i] {
            refractory_steps
        } else {
            refractory[i].saturating_sub(1)
        };
    }

    let mut forces = state.forces;
    let mut rates = [0.0; 2];
    for i in 0..2 {
        let commanded = law.force_rate(i, roles[i], &theta[i])?;
        let next = (forces[i] + commanded * dt).max(0.0);
        rates[i] = (next - forces[i]) / dt;
        forces[i] = next;
    }

    let (x, v) = rk4_step(state.x, state.v, forces[0] - forces[1], egg, dt)?;
    let next = SimState {
        step: state.step + 1,
        x,
        v,
        forces,
        roles,
        refractory,
        prev_e: d.e,
        prev_de: d.de,
        prev_f_n: state.f_n(),
    };
    let t_next = next.time(dt);
    let r_next = traj.sample(t_next.min(traj.duration()))?.r;
    let out = StepOutput {
        t: t_next,
        r: r_next,
        x,
        e: r_next - x,
        forces,
        f_n: next.f_n(),
        roles,
        force_rates: rates,
    };
    Ok((next, out))
}

pub fn refractory_steps(dt: f64) -> u32 {
    (REFRACTORY_S / dt).round() as u32
}

/// One step of the dyad loop: transitions, force rates, clamp, RK4, bookkeeping.
pub fn step_trial<R: Reference + ?Sized>(
    state: &SimState,
    agents: &[ResolvedAgent<'_>; 2],
    traj: &R,
    egg: &EggParams,
    dt: f64,
) -> Result<(SimState, StepOutput)> {
    advance(state, agents, traj, egg, dt, refractory_steps(dt))
}

/// Full time series of a trial.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trajectory_id: String,
    pub dyad_id: Option<DyadId>,
    pub dt: f64,
    /// False when the dynamics produced a non-finite value; arrays then stop at the failing step.
    pub valid: bool,
    pub t: Vec<f64>,
    pub r: Vec<f64>,
    pub x: Vec<f64>,
    pub e: Vec<f64>,
    pub f1: Vec<f64>,
    pub f2: Vec<f64>,
    pub f_n: Vec<f64>,
    pub role1: Vec<Role>,
    pub role2: Vec<Role>,
    pub fdot1: Vec<f64>,
    pub fdot2: Vec<f64>,
}

impl TrialRecord {
    fn with_capacity(trajectory_id: &str, dyad_id: Option<DyadId>, dt: f64, n: usize) -> Self {
        Self {
            trajectory_id: trajectory_id.to_string(),
            dyad_id,
            dt,
            valid: true,
            t: Vec::with_capacity(n),
            r: Vec::with_capacity(n),
            x: Vec::with_capacity(n),
            e: Vec::with_capacity(n),
            f1: Vec::with_capacity(n),
            f2: Vec::with_capacity(n),
            f_n: Vec::with_capacity(n),
            role1: Vec::with_capacity(n),
            role2: Vec::with_capacity(n),
            fdot1: Vec::with_capacity(n),
            fdot2: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, o: &StepOutput) {
        self.t.push(o.t);
        self.r.push(o.r);
        self.x.push(o.x);
        self.e.push(o.e);
        self.f1.push(o.forces[0]);
        self.f2.push(o.forces[1]);
        self.f_n.push(o.f_n);
        self.role1.push(o.roles[0]);
        self.role2.push(o.roles[1]);
        self.fdot1.push(o.force_rates[0]);
        self.fdot2.push(o.force_rates[1]);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn roles_numeric(&self) -> (Vec<u8>, Vec<u8>) {
        (
            self.role1.iter().map(|r| r.as_u8()).collect(),
            self.role2.iter().map(|r| r.as_u8()).collect(),
        )
    }

    /// Number of role changes per agent.
    pub fn switch_counts(&self) -> [usize; 2] {
        let count = |roles: &[Role]| roles.windows(2).filter(|w| w[0] != w[1]).count();
        [count(&self.role1), count(&self.role2)]
    }

    /// CSV with header `t,r,x,e,f1,f2,fN,role1,role2`, roles as 0 (S) / 1 (T).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "r", "x", "e", "f1", "f2", "fN", "role1", "role2"])?;
        for k in 0..self.len() {
            w.write_record(&[
                self.t[k].to_string(),
                self.r[k].to_string(),
                self.x[k].to_string(),
                self.e[k].to_string(),
                self.f1[k].to_string(),
                self.f2[k].to_string(),
                self.f_n[k].to_string(),
                self.role1[k].as_u8().to_string(),
                self.role2[k].as_u8().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn run<L: ForceLaw + ?Sized, R: Reference + ?Sized>(
    law: &L,
    traj: &R,
    egg: &EggParams,
    dt: f64,
    init: &InitSpec,
    steps: usize,
    dyad_id: Option<DyadId>,
) -> TrialRecord {
    let refractory = refractory_steps(dt);
    let mut record = TrialRecord::with_capacity(traj.id(), dyad_id, dt, steps);
    let mut state = SimState::new(init);
    for _ in 0..steps {
        match advance(&state, law, traj, egg, dt, refractory) {
            Ok((next, out)) => {
                record.push(&out);
                state = next;
            }
            Err(_) => {
                record.valid = false;
                break;
            }
        }
    }
    record
}

/// Trial runner bundling the fixed physical setup.
#[derive(Debug, Clone)]
pub struct Simulator {
    pub egg: EggParams,
    pub dt: f64,
    pub library: ControllerLibrary,
}

impl Simulator {
    pub fn new(egg: EggParams, dt: f64, library: ControllerLibrary) -> Result<Self> {
        egg.validate()?;
        library.validate()?;
        if !(dt > 0.0) {
            return Err(Error::Config(format!("dt must be > 0, got {dt}")));
        }
        Ok(Self { egg, dt, library })
    }

    /// Deterministic full trial. Numerical failure yields a record flagged invalid.
    pub fn simulate_trial<R: Reference + ?Sized>(
        &self,
        dyad: &Dyad,
        traj: &R,
        init: &InitSpec,
    ) -> Result<TrialRecord> {
        self.simulate_steps(dyad, traj, init, step_count(traj.duration(), self.dt))
    }

    /// Like [`Self::simulate_trial`] but stops after `steps` steps.
    pub fn simulate_steps<R: Reference + ?Sized>(
        &self,
        dyad: &Dyad,
        traj: &R,
        init: &InitSpec,
        steps: usize,
    ) -> Result<TrialRecord> {
        let agents = resolve(dyad, &self.library)?;
        Ok(run(&agents, traj, &self.egg, self.dt, init, steps, Some(dyad.id.clone())))
    }
}

/// Agent 1 runs `controller` in a fixed role; agent 2 holds a constant force.
struct Solo<'a> {
    controller: &'a Controller,
    role: Role,
}

impl ForceLaw for Solo<'_> {
    fn transition(&self, _: &SimState, _: &[FeatureVector; 2]) -> Result<([Role; 2], [bool; 2])> {
        Ok(([self.role, Role::Stabilize], [false; 2]))
    }

    fn force_rate(&self, agent: usize, _: Role, theta: &FeatureVector) -> Result<f64> {
        if agent == 0 {
            self.controller.output(theta)
        } else {
            Ok(0.0)
        }
    }
}

/// Runs a single controller against a partner frozen at `partner_force`.
/// Agent 1 starts at `own_force`.
pub fn solo_trial<R: Reference + ?Sized>(
    controller: &Controller,
    partner_force: f64,
    own_force: f64,
    traj: &R,
    egg: &EggParams,
    dt: f64,
) -> TrialRecord {
    let role = match controller.kind() {
        ControllerKind::Stabilizing => Role::Stabilize,
        ControllerKind::Tracking => Role::Track,
    };
    let law = Solo { controller, role };
    let init = InitSpec {
        x: 0.0,
        v: 0.0,
        f1: own_force,
        f2: partner_force,
        role1: role,
        role2: Role::Stabilize,
    };
    run(&law, traj, egg, dt, &init, step_count(traj.duration(), dt), None)
}

/// Length of the start-up window ignored by the stabilizer check.
pub const SOLO_TRANSIENT_S: f64 = 2.0;

/// Constant partner forces the stabilizer check is run against: low, middle
/// and high inside the allowed band.
pub fn stabilizer_partner_forces(egg: &EggParams) -> [f64; 3] {
    let span = egg.f_max - egg.f_min;
    [egg.f_min + 0.1 * span, egg.f_opt(), egg.f_min + 0.9 * span]
}

/// Tracking loss of a tracking controller pushing alone against a partner
/// frozen at `f_opt`.
pub fn solo_tracking_loss<R: Reference + ?Sized>(
    controller: &Controller,
    traj: &R,
    egg: &EggParams,
    dt: f64,
) -> Result<f64> {
    let rec = solo_trial(controller, egg.f_opt(), egg.f_opt(), traj, egg, dt);
    crate::objectives::tracking_loss(&rec)
}

/// Whether a stabilizing controller, starting from zero force against a
/// constant partner, keeps `f_N` inside `[f_min, f_max]` once the transient has passed.
pub fn stabilizer_holds_band<R: Reference + ?Sized>(
    controller: &Controller,
    partner_force: f64,
    traj: &R,
    egg: &EggParams,
    dt: f64,
) -> bool {
    let rec = solo_trial(controller, partner_force, 0.0, traj, egg, dt);
    rec.valid
        && rec
            .t
            .iter()
            .zip(&rec.f_n)
            .filter(|(t, _)| **t >= SOLO_TRANSIENT_S - 1e-9)
            .all(|(_, f)| (egg.f_min..=egg.f_max).contains(f))
}
