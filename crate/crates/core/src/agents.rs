//! Dyad genome: switching policies, controllers, roles.

use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::EggParams;
use crate::rng::Rng;

pub const FEATURE_COUNT: usize = 9;

/// Positions inside a [`FeatureVector`].
pub mod slot {
    pub const R: usize = 0;
    pub const DR: usize = 1;
    pub const DDR: usize = 2;
    pub const E: usize = 3;
    pub const DE: usize = 4;
    pub const DDE: usize = 5;
    pub const FN: usize = 6;
    pub const DFN: usize = 7;
    pub const BIAS: usize = 8;
}

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] =
    ["r", "dr", "ddr", "e", "de", "dde", "f_n", "df_n", "bias"];

const SPARSE_BIAS: f64 = 0.3;

/// What an agent observes each step: reference, error, normal force, their
/// derivatives, and a constant bias of 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector([f64; FEATURE_COUNT]);

impl FeatureVector {
    #[allow(clippy::too_many_arguments)]
    pub fn new(r: f64, dr: f64, ddr: f64, e: f64, de: f64, dde: f64, f_n: f64, df_n: f64) -> Self {
        Self([r, dr, ddr, e, de, dde, f_n, df_n, 1.0])
    }

    pub fn as_array(&self) -> &[f64; FEATURE_COUNT] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    fn dot(&self, w: &[f64; FEATURE_COUNT]) -> f64 {
        self.0.iter().zip(w).map(|(a, b)| a * b).sum()
    }
}

/// Unit-norm linear role-transition rule: fire when `w · θ > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SwitchPolicy {
    weights: [f64; FEATURE_COUNT],
}

impl TryFrom<Vec<f64>> for SwitchPolicy {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        let weights: [f64; FEATURE_COUNT] = v
            .try_into()
            .map_err(|v: Vec<f64>| Error::LengthMismatch(v.len(), FEATURE_COUNT))?;
        let p = normalize_policy(weights)?;
        // Stored unit vectors load bit-for-bit; anything else is renormalized.
        if (weights.iter().map(|w| w * w).sum::<f64>().sqrt() - 1.0).abs() < 1e-12 {
            Ok(Self { weights })
        } else {
            Ok(p)
        }
    }
}

impl From<SwitchPolicy> for Vec<f64> {
    fn from(p: SwitchPolicy) -> Self {
        p.weights.to_vec()
    }
}

impl SwitchPolicy {
    pub fn weights(&self) -> &[f64; FEATURE_COUNT] {
        &self.weights
    }

    pub fn norm(&self) -> f64 {
        l2(&self.weights)
    }

    pub fn evaluate(&self, theta: &FeatureVector) -> Result<bool> {
        evaluate_transition(self, theta)
    }

    pub fn negated(&self) -> Self {
        Self {
            weights: self.weights.map(|w| -w),
        }
    }
}

fn l2(w: &[f64]) -> f64 {
    w.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn normalize_policy(weights: [f64; FEATURE_COUNT]) -> Result<SwitchPolicy> {
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFinite("policy weights"));
    }
    let norm = l2(&weights);
    if norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(SwitchPolicy {
        weights: weights.map(|w| w / norm),
    })
}

/// Strict inequality: a policy sitting exactly on its hyperplane does not switch.
pub fn evaluate_transition(policy: &SwitchPolicy, theta: &FeatureVector) -> Result<bool> {
    if !theta.is_finite() {
        return Err(Error::NonFinite("feature vector"));
    }
    Ok(theta.dot(&policy.weights) > 0.0)
}

/// Sparse initial policy: one non-bias feature at ±1, bias at ±0.3, normalized.
pub fn make_sparse_policy(rng: &mut Rng) -> SwitchPolicy {
    let mut w = [0.0; FEATURE_COUNT];
    let feature = rng.random_range(0..slot::BIAS);
    w[feature] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    w[slot::BIAS] = if rng.random_bool(0.5) {
        SPARSE_BIAS
    } else {
        -SPARSE_BIAS
    };
    normalize_policy(w).expect("sparse policy has nonzero norm")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Stabilize = 0,
    Track = 1,
}

impl Role {
    pub fn as_u8(self) -> u8 {
        self as u8
    }

    pub fn flipped(self) -> Self {
        match self {
            Role::Stabilize => Role::Track,
            Role::Track => Role::Stabilize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    Stabilizing,
    Tracking,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControllerId(pub String);

impl fmt::Display for ControllerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ControllerId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Gains {
    /// `ḟ = K_I·(f_opt − f_N)`
    Stabilizing { k_i: f64, f_opt: f64 },
    /// `ḟ = K_I·e + K_P·ė + K_D·ë`
    Tracking { k_i: f64, k_p: f64, k_d: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ControllerSpec {
    id: ControllerId,
    #[serde(flatten)]
    gains: Gains,
}

/// Fixed linear force-rate law `ḟ = C · θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ControllerSpec", into = "ControllerSpec")]
pub struct Controller {
    id: ControllerId,
    gains: Gains,
    weights: [f64; FEATURE_COUNT],
}

impl TryFrom<ControllerSpec> for Controller {
    type Error = Error;

    fn try_from(spec: ControllerSpec) -> Result<Self> {
        Controller::new(spec.id, spec.gains)
    }
}

impl From<Controller> for ControllerSpec {
    fn from(c: Controller) -> Self {
        ControllerSpec {
            id: c.id,
            gains: c.gains,
        }
    }
}

impl Controller {
    pub fn new(id: impl Into<ControllerId>, gains: Gains) -> Result<Self> {
        let id = id.into();
        let mut weights = [0.0; FEATURE_COUNT];
        match gains {
            Gains::Stabilizing { k_i, f_opt } => {
                if !(k_i > 0.0 && k_i.is_finite() && f_opt.is_finite()) {
                    return Err(Error::Config(format!("stabilizer `{id}` needs K_I > 0")));
                }
                weights[slot::FN] = -k_i;
                weights[slot::BIAS] = k_i * f_opt;
            }
            Gains::Tracking { k_i, k_p, k_d } => {
                let gains = [k_i, k_p, k_d];
                if gains.iter().any(|g| !(g.is_finite() && *g >= 0.0)) || gains.iter().all(|&g| g == 0.0) {
                    return Err(Error::Config(format!(
                        "tracker `{id}` needs non-negative gains, not all zero"
                    )));
                }
                weights[slot::E] = k_i;
                weights[slot::DE] = k_p;
                weights[slot::DDE] = k_d;
            }
        }
        Ok(Self { id, gains, weights })
    }

    pub fn stabilizing(id: &str, k_i: f64, f_opt: f64) -> Result<Self> {
        Self::new(id, Gains::Stabilizing { k_i, f_opt })
    }

    pub fn tracking(id: &str, k_i: f64, k_p: f64, k_d: f64) -> Result<Self> {
        Self::new(id, Gains::Tracking { k_i, k_p, k_d })
    }

    pub fn id(&self) -> &ControllerId {
        &self.id
    }

    pub fn gains(&self) -> &Gains {
        &self.gains
    }

    pub fn weights(&self) -> &[f64; FEATURE_COUNT] {
        &self.weights
    }

    pub fn kind(&self) -> ControllerKind {
        match self.gains {
            Gains::Stabilizing { .. } => ControllerKind::Stabilizing,
            Gains::Tracking { .. } => ControllerKind::Tracking,
        }
    }

    pub fn output(&self, theta: &FeatureVector) -> Result<f64> {
        controller_output(self, theta)
    }
}

/// Force rate in N/s. Not clamped; the integrator enforces non-negative force.
pub fn controller_output(ctrl: &Controller, theta: &FeatureVector) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::NonFinite("feature vector"));
    }
    let out = theta.dot(&ctrl.weights);
    if !out.is_finite() {
        return Err(Error::NonFinite("controller output"));
    }
    Ok(out)
}

/// Stabilizer integral gains, 1/s.
pub const STABILIZER_GAINS: [f64; 5] = [0.5, 1.0, 2.0, 4.0, 8.0];

/// Tracking gains `(K_I, K_P, K_D)`. Each row places the three closed-loop
/// poles of `m·s³ + (b + K_D)·s² + K_P·s + K_I` at `−p` for
/// p ∈ {2.5, 3.5, 5, 7, 10} rad/s, with m = 0.5 kg and b = 1 N·s/m.
pub const TRACKING_GAINS: [(f64, f64, f64); 5] = [
    (7.8125, 9.375, 2.75),
    (21.4375, 18.375, 4.25),
    (62.5, 37.5, 6.5),
    (171.5, 73.5, 9.5),
    (500.0, 150.0, 14.0),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerLibrary {
    pub stabilizing: Vec<Controller>,
    pub tracking: Vec<Controller>,
}

impl ControllerLibrary {
    pub fn new(stabilizing: Vec<Controller>, tracking: Vec<Controller>) -> Result<Self> {
        let lib = Self {
            stabilizing,
            tracking,
        };
        lib.validate()?;
        Ok(lib)
    }

    /// The fixed library every run uses: five stabilizers and five trackers.
    pub fn standard(egg: &EggParams) -> Self {
        let f_opt = egg.f_opt();
        let stabilizing = STABILIZER_GAINS
            .iter()
            .enumerate()
            .map(|(i, &k)| Controller::stabilizing(&format!("S{i}"), k, f_opt).expect("valid gains"))
            .collect();
        let tracking = TRACKING_GAINS
            .iter()
            .enumerate()
            .map(|(i, &(ki, kp, kd))| {
                Controller::tracking(&format!("T{i}"), ki, kp, kd).expect("valid gains")
            })
            .collect();
        Self {
            stabilizing,
            tracking,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stabilizing.is_empty() {
            return Err(Error::EmptyLibrary(ControllerKind::Stabilizing));
        }
        if self.tracking.is_empty() {
            return Err(Error::EmptyLibrary(ControllerKind::Tracking));
        }
        let check = |list: &[Controller], expected: ControllerKind| {
            list.iter().try_for_each(|c| {
                if c.kind() == expected {
                    Ok(())
                } else {
                    Err(Error::ControllerKindMismatch {
                        id: c.id.0.clone(),
                        expected,
                        found: c.kind(),
                    })
                }
            })
        };
        check(&self.stabilizing, ControllerKind::Stabilizing)?;
        check(&self.tracking, ControllerKind::Tracking)
    }

    pub fn get(&self, id: &ControllerId) -> Result<&Controller> {
        self.stabilizing
            .iter()
            .chain(&self.tracking)
            .find(|c| &c.id == id)
            .ok_or_else(|| Error::UnknownController(id.0.clone()))
    }

    /// Looks up `id` and checks that it fills a slot of `kind`.
    pub fn get_kind(&self, id: &ControllerId, kind: ControllerKind) -> Result<&Controller> {
        let c = self.get(id)?;
        if c.kind() != kind {
            return Err(Error::ControllerKindMismatch {
                id: id.0.clone(),
                expected: kind,
                found: c.kind(),
            });
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub w_st: SwitchPolicy,
    pub w_ts: SwitchPolicy,
    pub c_s_id: ControllerId,
    pub c_t_id: ControllerId,
}

impl Agent {
    /// Policy consulted while holding `role`.
    pub fn policy_for(&self, role: Role) -> &SwitchPolicy {
        match role {
            Role::Stabilize => &self.w_st,
            Role::Track => &self.w_ts,
        }
    }

    pub fn validate(&self, library: &ControllerLibrary) -> Result<()> {
        library.get_kind(&self.c_s_id, ControllerKind::Stabilizing)?;
        library.get_kind(&self.c_t_id, ControllerKind::Tracking)?;
        Ok(())
    }
}

pub fn make_agent(rng: &mut Rng, library: &ControllerLibrary) -> Result<Agent> {
    library.validate()?;
    let w_st = make_sparse_policy(rng);
    let w_ts = make_sparse_policy(rng);
    let c_s = &library.stabilizing[rng.random_range(0..library.stabilizing.len())];
    let c_t = &library.tracking[rng.random_range(0..library.tracking.len())];
    Ok(Agent {
        w_st,
        w_ts,
        c_s_id: c_s.id.clone(),
        c_t_id: c_t.id.clone(),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DyadId(pub String);

impl DyadId {
    /// `<seed hex>-g<generation>-<index>`; unique across runs sharing an archive.
    pub fn new(seed: u64, generation: u32, index: usize) -> Self {
        Self(format!("{seed:x}-g{generation}-{index}"))
    }
}

impl fmt::Display for DyadId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Init,
    Crossover,
    Mutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lineage {
    pub generation: u32,
    pub parents: Vec<DyadId>,
    pub origin: Origin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dyad {
    #[serde(default)]
    pub id: DyadId,
    pub agent1: Agent,
    pub agent2: Agent,
    pub lineage: Lineage,
}

impl Dyad {
    pub fn agents(&self) -> [&Agent; 2] {
        [&self.agent1, &self.agent2]
    }

    pub fn validate(&self, library: &ControllerLibrary) -> Result<()> {
        self.agent1.validate(library)?;
        self.agent2.validate(library)
    }

    /// Key used to deduplicate archived genomes: weights rounded to 1e-9 plus controller ids.
    pub fn genome_key(&self) -> GenomeKey {
        let mut weights = Vec::with_capacity(4 * FEATURE_COUNT);
        let mut ids = Vec::with_capacity(4);
        for a in self.agents() {
            for p in [&a.w_st, &a.w_ts] {
                weights.extend(p.weights.iter().map(|w| (w * 1e9).round() as i64));
            }
            ids.push(a.c_s_id.clone());
            ids.push(a.c_t_id.clone());
        }
        GenomeKey { weights, ids }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GenomeKey {
    weights: Vec<i64>,
    ids: Vec<ControllerId>,
}
