//! Lagrangian particles bound to mesh elements.
//!
//! Particles are created in an axis-aligned seeding slab, advected by a
//! divergence-along-x surrogate flow, and re-bound to elements after each
//! move. Binding owns the load model: an element's particle count is what
//! makes it expensive.

use crate::error::{Error, Result};
use crate::mesh::{locate_element, GlobalElementIndex, Mesh};
use crate::partition::ElementProcessorMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Number of scalar properties carried per particle.
pub const PAYLOAD_LEN: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Particle {
    pub id: u64,
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    /// Dynamic scalar properties (drag history, temperature, ...): carried
    /// through migration untouched.
    pub payload: Vec<f64>,
}

/// A set of particles plus their element bindings.
///
/// `bindings[i]` is the element containing `particles[i]`; the two vectors
/// move in lockstep. The x-coordinate of the seeding slab's left edge is kept
/// because the surrogate flow expands away from it.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParticleSet {
    pub particles: Vec<Particle>,
    pub bindings: Vec<GlobalElementIndex>,
    pub slab_left_x: f64,
}

impl ParticleSet {
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Particles bound to `element`, counted by a full scan.
    pub fn count_in(&self, element: GlobalElementIndex) -> usize {
        self.bindings.iter().filter(|&&b| b == element).count()
    }

    pub fn push(&mut self, particle: Particle, binding: GlobalElementIndex) {
        self.particles.push(particle);
        self.bindings.push(binding);
    }

    /// Remove and return the particle at `idx` with its binding. Order of the
    /// remaining particles is preserved only beyond already-removed slots, so
    /// callers removing several should walk indices descending.
    pub fn remove(&mut self, idx: usize) -> (Particle, GlobalElementIndex) {
        (self.particles.remove(idx), self.bindings.remove(idx))
    }
}

/// Seed `count` particles uniformly in the part of `[region_lo, region_hi]`
/// that lies inside the domain.
///
/// Each particle draws from its own seeded stream, so positions depend only on
/// `(seed, id)` and not on seeding order. Velocities start at zero.
pub fn init_particles(
    mesh: &Mesh,
    region_lo: [f64; 3],
    region_hi: [f64; 3],
    count: usize,
    seed: u64,
) -> Result<ParticleSet> {
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for a in 0..3 {
        if !(region_hi[a] >= region_lo[a]) {
            return Err(Error::invalid(format!(
                "seeding region is inverted on axis {a}"
            )));
        }
        lo[a] = region_lo[a].max(mesh.extent_lo[a]);
        hi[a] = region_hi[a].min(mesh.extent_hi[a]);
        if lo[a] > hi[a] {
            return Err(Error::invalid(
                "seeding region lies outside the domain".to_string(),
            ));
        }
    }
    let mut set = ParticleSet {
        particles: Vec::with_capacity(count),
        bindings: Vec::with_capacity(count),
        slab_left_x: region_lo[0],
    };
    for id in 0..count as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(id);
        let mut position = [0.0; 3];
        for a in 0..3 {
            position[a] = if hi[a] > lo[a] {
                rng.gen_range(lo[a]..hi[a])
            } else {
                lo[a]
            };
        }
        let binding = locate_element(mesh, position)?;
        set.push(
            Particle {
                id,
                position,
                velocity: [0.0; 3],
                payload: vec![0.0; PAYLOAD_LEN],
            },
            binding,
        );
    }
    Ok(set)
}

/// Advance particles one step of the expansion flow.
///
/// The flow stretches the field away from the slab's left edge:
/// `v_x = rate * (x - slab_left)` for particles to the right of the edge,
/// zero otherwise; y and z are quiescent. Positions clamp to the domain box,
/// so late-time particles accumulate at the right boundary. Bindings are NOT
/// updated here — callers follow up with [`rebin`].
pub fn advect(set: &mut ParticleSet, mesh: &Mesh, dt: f64, rate: f64) {
    let left = set.slab_left_x;
    for p in &mut set.particles {
        let vx = rate * (p.position[0] - left).max(0.0);
        p.velocity = [vx, 0.0, 0.0];
        p.position[0] += vx * dt;
        p.position = mesh.clamp(p.position);
    }
}

/// One entry per particle whose owning rank changed: `(id, from, to)`.
pub type MoveManifest = Vec<(u64, usize, usize)>;

/// Recompute all bindings from positions; report particles whose owning rank
/// changed under `map`.
pub fn rebin(
    set: &mut ParticleSet,
    mesh: &Mesh,
    map: &ElementProcessorMap,
) -> Result<MoveManifest> {
    let mut manifest = Vec::new();
    for i in 0..set.particles.len() {
        let new_binding = locate_element(mesh, set.particles[i].position)?;
        let old_rank = map.owner_of(set.bindings[i]);
        let new_rank = map.owner_of(new_binding);
        if old_rank != new_rank {
            manifest.push((set.particles[i].id, old_rank, new_rank));
        }
        set.bindings[i] = new_binding;
    }
    Ok(manifest)
}
