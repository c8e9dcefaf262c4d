use rand::Rng as _;

use crate::agents::{
    make_agent, normalize_policy, Agent, ControllerLibrary, Dyad, DyadId, Lineage, Origin,
    SwitchPolicy, FEATURE_COUNT,
};
use crate::error::Result;
use crate::evolution::nsga::crowded_cmp;
use crate::evolution::Population;
use crate::rng::Rng;

/// A de-novo dyad: two agents with sparse policies and random controllers.
pub fn random_dyad(
    rng: &mut Rng,
    library: &ControllerLibrary,
    id: DyadId,
    generation: u32,
    origin: Origin,
) -> Result<Dyad> {
    Ok(Dyad {
        id,
        agent1: make_agent(rng, library)?,
        agent2: make_agent(rng, library)?,
        lineage: Lineage {
            generation,
            parents: Vec::new(),
            origin,
        },
    })
}

pub fn init_population(
    rng: &mut Rng,
    mu: usize,
    library: &ControllerLibrary,
    run_seed: u64,
) -> Result<Population> {
    let members = (0..mu)
        .map(|i| random_dyad(rng, library, DyadId::new(run_seed, 0, i), 0, Origin::Init))
        .collect::<Result<Vec<_>>>()?;
    Ok(Population::unranked(0, members))
}

/// Offspring drawn fresh from the initial distribution.
pub fn mutate(rng: &mut Rng, library: &ControllerLibrary, id: DyadId, generation: u32) -> Result<Dyad> {
    random_dyad(rng, library, id, generation, Origin::Mutation)
}

/// Normalized mean of two unit policies. Exactly opposite parents have no
/// mean direction; the child then keeps the first parent's policy.
pub fn average_policy(a: &SwitchPolicy, b: &SwitchPolicy) -> SwitchPolicy {
    let mut mean = [0.0; FEATURE_COUNT];
    for (m, (x, y)) in mean.iter_mut().zip(a.weights().iter().zip(b.weights())) {
        *m = 0.5 * (x + y);
    }
    normalize_policy(mean).unwrap_or(*a)
}

/// Agent-aligned crossover: each of the four policies is the normalized
/// mean of the parents' matching policies, and all four controllers come
/// from one parent picked with a fair coin.
pub fn crossover(a: &Dyad, b: &Dyad, rng: &mut Rng, id: DyadId, generation: u32) -> Dyad {
    let donor = if rng.random_bool(0.5) { a } else { b };
    let child_agent = |pa: &Agent, pb: &Agent, donor: &Agent| Agent {
        w_st: average_policy(&pa.w_st, &pb.w_st),
        w_ts: average_policy(&pa.w_ts, &pb.w_ts),
        c_s_id: donor.c_s_id.clone(),
        c_t_id: donor.c_t_id.clone(),
    };
    Dyad {
        id,
        agent1: child_agent(&a.agent1, &b.agent1, &donor.agent1),
        agent2: child_agent(&a.agent2, &b.agent2, &donor.agent2),
        lineage: Lineage {
            generation,
            parents: vec![a.id.clone(), b.id.clone()],
            origin: Origin::Crossover,
        },
    }
}

/// Binary tournament under the crowded-comparison order. An unranked
/// population degenerates to uniform choice.
pub fn tournament<'p>(pop: &'p Population, rng: &mut Rng) -> &'p Dyad {
    let n = pop.members.len();
    let i = rng.random_range(0..n);
    let j = rng.random_range(0..n);
    match (pop.fitness.get(i), pop.fitness.get(j)) {
        (Some(fi), Some(fj)) if crowded_cmp(fj.rank, fj.crowding, fi.rank, fi.crowding).is_lt() => {
            &pop.members[j]
        }
        _ => &pop.members[i],
    }
}
