//! Rank-local state and element migration.
//!
//! Each rank owns a contiguous range of elements: their dynamic field blocks,
//! recomputable static geometry, and the particles bound to them. Migration
//! ships elements (with their particles riding in the same payload) to their
//! new owners over the rank ensemble, then requires an explicit static
//! reinitialization pass.
//!
//! Static geometry is deliberately *not* transferred. Received elements have
//! no geometry and every surviving stamp goes stale when ownership changes,
//! so a skipped [`reinitialize_static`] is caught by [`RankState::validate`]
//! instead of silently corrupting a run.

use std::collections::BTreeMap;

use crate::comm::RankEnsemble;
use crate::error::{Error, Result};
use crate::mesh::{GlobalElementIndex, Mesh};
use crate::particles::{Particle, ParticleSet};
use crate::partition::ElementProcessorMap;

/// Conserved-variable blocks carried per element.
pub const N_BLOCKS: usize = 5;

/// Payload format tag; bump on any wire layout change.
pub const PAYLOAD_FORMAT: u8 = 1;

/// Dynamic per-element data: `N_BLOCKS` blocks of `block_len` reals.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementFields {
    pub block_len: usize,
    /// Flat, block-major: `data[b * block_len + p]`.
    pub data: Vec<f64>,
}

impl ElementFields {
    /// Deterministic synthetic fill, distinguishable per element and block.
    pub fn synthetic(gid: GlobalElementIndex, block_len: usize) -> Self {
        let mut data = Vec::with_capacity(N_BLOCKS * block_len);
        for b in 0..N_BLOCKS {
            let base = (gid.get() as usize * N_BLOCKS + b) as f64;
            for p in 0..block_len {
                data.push(base + p as f64 / 1024.0);
            }
        }
        ElementFields { block_len, data }
    }
}

/// Recomputable geometry: the element's grid-point lattice, x then y then z
/// planes, stamped with the ownership generation it was computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticGeometry {
    pub coords: Vec<f64>,
    pub generation: u64,
}

/// Grid-point coordinates for one element; pure in (mesh, gid).
pub fn geometry_coords(mesh: &Mesh, gid: GlobalElementIndex) -> Vec<f64> {
    let n = mesh.n_per_axis;
    let lo = mesh.cell_lo(gid);
    let w = mesh.cell_widths();
    let mut coords = Vec::with_capacity(3 * n * n * n);
    for axis in 0..3 {
        for k in 0..n {
            for j in 0..n {
                for i in 0..n {
                    let t = [i, j, k][axis] as f64 / (n - 1) as f64;
                    coords.push(lo[axis] + t * w[axis]);
                }
            }
        }
    }
    coords
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElementData {
    pub fields: ElementFields,
    pub geometry: Option<StaticGeometry>,
}

/// Per-rank simulated-time accounting.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TimingStats {
    pub steps: u64,
    pub busy_time: f64,
}

impl TimingStats {
    pub fn record(&mut self, step_time: f64) {
        self.steps += 1;
        self.busy_time += step_time;
    }
}

/// Everything one rank holds: owned elements, bound particles, timing.
#[derive(Debug, Clone, PartialEq)]
pub struct RankState {
    pub rank: usize,
    owned: BTreeMap<u32, ElementData>,
    pub particles: ParticleSet,
    /// Bumped on every ownership change; geometry stamps must match.
    pub map_generation: u64,
    pub timing: TimingStats,
}

impl RankState {
    /// Build rank-local state from a map and the global particle set: owned
    /// elements get synthetic fields and fresh geometry, and the particles
    /// bound to them are kept (in their global order).
    pub fn initialize(
        rank: usize,
        map: &ElementProcessorMap,
        mesh: &Mesh,
        global_particles: ParticleSet,
    ) -> RankState {
        let block_len = mesh.n_per_axis.pow(3);
        let mut owned = BTreeMap::new();
        if let Some((start, end)) = map.range(rank) {
            for e in start..=end {
                let gid = GlobalElementIndex(e);
                owned.insert(
                    e,
                    ElementData {
                        fields: ElementFields::synthetic(gid, block_len),
                        geometry: Some(StaticGeometry {
                            coords: geometry_coords(mesh, gid),
                            generation: 0,
                        }),
                    },
                );
            }
        }
        let mut particles = ParticleSet {
            slab_left_x: global_particles.slab_left_x,
            ..Default::default()
        };
        for (p, b) in global_particles
            .particles
            .into_iter()
            .zip(global_particles.bindings)
        {
            if owned.contains_key(&b.get()) {
                particles.push(p, b);
            }
        }
        RankState {
            rank,
            owned,
            particles,
            map_generation: 0,
            timing: TimingStats::default(),
        }
    }

    pub fn element_count(&self) -> usize {
        self.owned.len()
    }

    pub fn particle_count(&self) -> usize {
        self.particles.len()
    }

    pub fn owns(&self, gid: GlobalElementIndex) -> bool {
        self.owned.contains_key(&gid.get())
    }

    /// Owned element indices in ascending order.
    pub fn owned_ids(&self) -> impl Iterator<Item = GlobalElementIndex> + '_ {
        self.owned.keys().map(|&e| GlobalElementIndex(e))
    }

    pub fn element(&self, gid: GlobalElementIndex) -> Option<&ElementData> {
        self.owned.get(&gid.get())
    }

    /// Consistency check: ownership matches `map`, every particle is bound to
    /// an owned element, and all geometry is present, current, and equal to a
    /// fresh recompute.
    pub fn validate(&self, map: &ElementProcessorMap, mesh: &Mesh) -> Result<()> {
        let expect: Vec<u32> = match map.range(self.rank) {
            Some((s, e)) => (s..=e).collect(),
            None => Vec::new(),
        };
        let have: Vec<u32> = self.owned.keys().copied().collect();
        if have != expect {
            return Err(Error::contract(format!(
                "rank {} owns {:?} but the map assigns {:?}",
                self.rank, have, expect
            )));
        }
        for b in &self.particles.bindings {
            if !self.owns(*b) {
                return Err(Error::contract(format!(
                    "rank {} holds a particle bound to foreign element {b}",
                    self.rank
                )));
            }
        }
        for (&e, data) in &self.owned {
            let gid = GlobalElementIndex(e);
            match &data.geometry {
                None => {
                    return Err(Error::contract(format!(
                        "element {e} on rank {} has no geometry (reinitialization skipped?)",
                        self.rank
                    )))
                }
                Some(g) => {
                    if g.generation != self.map_generation {
                        return Err(Error::contract(format!(
                            "element {e} geometry is generation {} but rank {} is at {} \
                             (reinitialization skipped?)",
                            g.generation, self.rank, self.map_generation
                        )));
                    }
                    if g.coords != geometry_coords(mesh, gid) {
                        return Err(Error::contract(format!(
                            "element {e} geometry does not match its recompute"
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Recompute geometry for every owned element and stamp it with the current
/// generation. Idempotent; must follow every migration.
pub fn reinitialize_static(state: &mut RankState, mesh: &Mesh) {
    let generation = state.map_generation;
    for (&e, data) in state.owned.iter_mut() {
        data.geometry = Some(StaticGeometry {
            coords: geometry_coords(mesh, GlobalElementIndex(e)),
            generation,
        });
    }
}

/// One element changing owner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ElementMove {
    pub element: GlobalElementIndex,
    pub from: usize,
    pub to: usize,
}

/// Ownership diff between two maps; derived from the maps alone.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TransferPlan {
    pub moves: Vec<ElementMove>,
}

impl TransferPlan {
    pub fn is_empty(&self) -> bool {
        self.moves.is_empty()
    }

    /// Moves leaving `rank`, in ascending element order.
    pub fn outgoing(&self, rank: usize) -> impl Iterator<Item = &ElementMove> + '_ {
        self.moves.iter().filter(move |m| m.from == rank)
    }
}

/// Diff two maps over the same mesh and rank count.
pub fn plan_transfers(
    old: &ElementProcessorMap,
    new: &ElementProcessorMap,
) -> Result<TransferPlan> {
    if old.np() != new.np() || old.nelgt() != new.nelgt() {
        return Err(Error::contract(format!(
            "cannot plan transfers between maps of shape {}/{} and {}/{}",
            old.np(),
            old.nelgt(),
            new.np(),
            new.nelgt()
        )));
    }
    let mut moves = Vec::new();
    for e in 1..=old.nelgt() as u32 {
        let gid = GlobalElementIndex(e);
        let from = old.owner_of(gid);
        let to = new.owner_of(gid);
        if from != to {
            moves.push(ElementMove {
                element: gid,
                from,
                to,
            });
        }
    }
    Ok(TransferPlan { moves })
}

/// What a migration actually shipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MigrationReport {
    pub elements_moved: usize,
    pub particles_moved: usize,
    pub bytes_moved: usize,
}

/// Ship every planned element (with its particles) to its new owner and
/// adopt `new` as the current map. All ranks' generations bump; geometry is
/// left for [`reinitialize_static`].
pub fn execute_migration(
    ens: &RankEnsemble,
    states: &mut [RankState],
    plan: &TransferPlan,
    new: &ElementProcessorMap,
) -> Result<MigrationReport> {
    assert_eq!(ens.np(), states.len(), "one state per rank");
    // Up-front plan validation keeps the collective phase infallible on the
    // send side: a bad plan must not leave peers stuck in a half-entered
    // exchange.
    for m in &plan.moves {
        if m.to >= states.len() {
            return Err(Error::contract(format!(
                "move of element {} targets rank {} out of range",
                m.element, m.to
            )));
        }
        if m.from == m.to {
            return Err(Error::contract(format!(
                "move of element {} has identical source and destination {}",
                m.element, m.from
            )));
        }
        if !states[m.from].owns(m.element) {
            return Err(Error::contract(format!(
                "plan moves element {} out of rank {}, which does not own it",
                m.element, m.from
            )));
        }
        if new.owner_of(m.element) != m.to {
            return Err(Error::contract(format!(
                "plan sends element {} to rank {} but the new map assigns rank {}",
                m.element,
                m.to,
                new.owner_of(m.element)
            )));
        }
    }

    let results = ens.run_with(
        states.iter_mut().collect::<Vec<_>>(),
        |ctx, state: &mut RankState| -> Result<MigrationReport> {
            let mut report = MigrationReport::default();
            let mut outbound: Vec<(usize, Vec<u8>)> = Vec::new();
            for m in plan.outgoing(ctx.rank()) {
                let payload = extract_element(state, m.element);
                report.elements_moved += 1;
                report.bytes_moved += payload.len();
                outbound.push((m.to, payload));
            }
            let inbound = ctx.route(outbound);
            for (_src, payload) in inbound {
                let particles = insert_element(state, &payload)?;
                report.particles_moved += particles;
            }
            state.map_generation += 1;
            // Ownership after the exchange must tile exactly as the new map
            // says; anything else means the plan and map disagreed.
            let expect: Vec<u32> = match new.range(state.rank) {
                Some((s, e)) => (s..=e).collect(),
                None => Vec::new(),
            };
            let have: Vec<u32> = state.owned.keys().copied().collect();
            if have != expect {
                return Err(Error::contract(format!(
                    "rank {} ended migration owning {:?}, expected {:?}",
                    state.rank, have, expect
                )));
            }
            Ok(report)
        },
    );
    let mut total = MigrationReport::default();
    for r in results {
        let r = r?;
        total.elements_moved += r.elements_moved;
        total.particles_moved += r.particles_moved;
        total.bytes_moved += r.bytes_moved;
    }
    Ok(total)
}

/// Pack an element and its bound particles; removes both from the state.
fn extract_element(state: &mut RankState, gid: GlobalElementIndex) -> Vec<u8> {
    let data = state.owned.remove(&gid.get()).expect("validated ownership");
    // Walk descending so removals do not shift pending indices.
    let mut particles = Vec::new();
    for i in (0..state.particles.len()).rev() {
        if state.particles.bindings[i] == gid {
            particles.push(state.particles.remove(i).0);
        }
    }
    particles.reverse(); // back to original order
    pack_element(gid, &data.fields, &particles)
}

/// Unpack an element payload into the state; returns its particle count.
fn insert_element(state: &mut RankState, payload: &[u8]) -> Result<usize> {
    let (gid, fields, particles) = unpack_element(payload)?;
    let n = particles.len();
    for p in particles {
        state.particles.push(p, gid);
    }
    state.owned.insert(
        gid.get(),
        ElementData {
            fields,
            geometry: None, // never transferred; owner must recompute
        },
    );
    Ok(n)
}

// --- wire format -----------------------------------------------------------
//
// All integers and reals little-endian. Layout:
//   u8  format tag
//   u32 element id
//   u32 block count, u32 block length, u32 particle count
//   f64 * (blocks * block length)
//   per particle: u64 id, f64*3 position, f64*3 velocity,
//                 u32 payload length, f64 * payload length
// Round-trips must be bit-exact; tests compare raw bit patterns.

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, at: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.at + n > self.buf.len() {
            return Err(Error::Payload(format!(
                "truncated payload: wanted {n} bytes at offset {}, have {}",
                self.at,
                self.buf.len() - self.at
            )));
        }
        let s = &self.buf[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn done(&self) -> Result<()> {
        if self.at == self.buf.len() {
            Ok(())
        } else {
            Err(Error::Payload(format!(
                "{} trailing bytes after payload",
                self.buf.len() - self.at
            )))
        }
    }
}

fn write_particle(out: &mut Vec<u8>, p: &Particle) {
    out.extend_from_slice(&p.id.to_le_bytes());
    for v in p.position.iter().chain(&p.velocity) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(p.payload.len() as u32).to_le_bytes());
    for v in &p.payload {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn read_particle(r: &mut Reader) -> Result<Particle> {
    let id = r.u64()?;
    let mut position = [0.0; 3];
    let mut velocity = [0.0; 3];
    for v in &mut position {
        *v = r.f64()?;
    }
    for v in &mut velocity {
        *v = r.f64()?;
    }
    let plen = r.u32()? as usize;
    let mut payload = Vec::with_capacity(plen);
    for _ in 0..plen {
        payload.push(r.f64()?);
    }
    Ok(Particle {
        id,
        position,
        velocity,
        payload,
    })
}

/// Serialize one element's dynamic state plus its particles.
pub fn pack_element(
    gid: GlobalElementIndex,
    fields: &ElementFields,
    particles: &[Particle],
) -> Vec<u8> {
    let mut out =
        Vec::with_capacity(13 + 8 * fields.data.len() + particles.len() * (8 + 48 + 4 + 8 * 8));
    out.push(PAYLOAD_FORMAT);
    out.extend_from_slice(&gid.get().to_le_bytes());
    out.extend_from_slice(&(N_BLOCKS as u32).to_le_bytes());
    out.extend_from_slice(&(fields.block_len as u32).to_le_bytes());
    out.extend_from_slice(&(particles.len() as u32).to_le_bytes());
    for v in &fields.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for p in particles {
        write_particle(&mut out, p);
    }
    out
}

/// Inverse of [`pack_element`]; rejects unknown tags and size mismatches.
pub fn unpack_element(buf: &[u8]) -> Result<(GlobalElementIndex, ElementFields, Vec<Particle>)> {
    let mut r = Reader::new(buf);
    let tag = r.u8()?;
    if tag != PAYLOAD_FORMAT {
        return Err(Error::Payload(format!(
            "unknown payload format tag {tag} (expected {PAYLOAD_FORMAT})"
        )));
    }
    let gid = GlobalElementIndex(r.u32()?);
    let n_blocks = r.u32()? as usize;
    if n_blocks != N_BLOCKS {
        return Err(Error::Payload(format!(
            "payload carries {n_blocks} blocks, expected {N_BLOCKS}"
        )));
    }
    let block_len = r.u32()? as usize;
    let n_particles = r.u32()? as usize;
    let mut data = Vec::with_capacity(n_blocks * block_len);
    for _ in 0..n_blocks * block_len {
        data.push(r.f64()?);
    }
    let mut particles = Vec::with_capacity(n_particles);
    for _ in 0..n_particles {
        particles.push(read_particle(&mut r)?);
    }
    r.done()?;
    Ok((gid, ElementFields { block_len, data }, particles))
}

/// Ownership-independent canonical bytes of the global logical state:
/// elements sorted by index with their field bits, then particles sorted by
/// id with position/velocity/payload bits and binding. Two state snapshots
/// are logically identical iff these bytes are equal.
pub fn canonical_state_bytes(states: &[RankState]) -> Vec<u8> {
    let mut elements: Vec<(u32, &ElementFields)> = states
        .iter()
        .flat_map(|s| s.owned.iter().map(|(&e, d)| (e, &d.fields)))
        .collect();
    elements.sort_by_key(|(e, _)| *e);
    let mut particles: Vec<(&Particle, GlobalElementIndex)> = states
        .iter()
        .flat_map(|s| {
            s.particles
                .particles
                .iter()
                .zip(s.particles.bindings.iter().copied())
        })
        .collect();
    particles.sort_by_key(|(p, _)| p.id);

    let mut out = Vec::new();
    for (e, fields) in elements {
        out.extend_from_slice(&e.to_le_bytes());
        out.extend_from_slice(&(fields.block_len as u32).to_le_bytes());
        for v in &fields.data {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }
    for (p, binding) in particles {
        write_particle(&mut out, p);
        out.extend_from_slice(&binding.get().to_le_bytes());
    }
    out
}
