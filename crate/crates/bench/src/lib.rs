//! Scenario builders shared by the benches.

use cmt_balance_core::{
    init_particles, ElementLoadArray, ElementProcessorMap, GlobalElementIndex, Mesh, RankState,
    RunConfig, RunConfigBuilder,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic element loads: integer particle counts up to 37 plus the
/// default fluid cost of 3.
pub fn synthetic_loads(nelgt: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..nelgt)
        .map(|_| 3.0 + rng.gen_range(0..=37) as f64)
        .collect()
}

/// Split a global load array along the uniform ownership map, the shape the
/// distributed partitioners start from on a fresh run.
pub fn uniform_local_loads(loads: &[f64], np: usize) -> Vec<ElementLoadArray> {
    let map = ElementProcessorMap::uniform(np, loads.len());
    (0..np)
        .map(|rank| {
            let (ids, vals) = match map.range(rank) {
                Some((s, e)) => (
                    (s..=e).map(GlobalElementIndex).collect(),
                    loads[s as usize - 1..e as usize].to_vec(),
                ),
                None => (Vec::new(), Vec::new()),
            };
            ElementLoadArray::new(ids, vals).unwrap()
        })
        .collect()
}

/// An initialized strip run: mesh, uniform ownership, and per-rank state with
/// all particles seeded into the default slab.
pub fn strip_scenario(
    nelgt: usize,
    np: usize,
    particles: usize,
) -> (RunConfig, Mesh, ElementProcessorMap, Vec<RankState>) {
    let mut b = RunConfigBuilder::default();
    b.elements = Some([nelgt, 1, 1]);
    b.np = Some(np);
    b.particles = Some(particles);
    let cfg = b.build().unwrap();
    let mesh = cfg.mesh().unwrap();
    let map = ElementProcessorMap::uniform(np, nelgt);
    let states = (0..np)
        .map(|rank| {
            let all =
                init_particles(&mesh, cfg.slab_lo, cfg.slab_hi, cfg.particles, cfg.seed).unwrap();
            RankState::initialize(rank, &map, &mesh, all)
        })
        .collect();
    (cfg, mesh, map, states)
}
