//! Time-step orchestration: advect, rebin, cost, trigger, repartition,
//! migrate, trace.
//!
//! Each step runs SPMD over the rank ensemble: ranks advect their own
//! particles, rebind them to elements, hand off the ones that crossed into
//! foreign-owned elements, and report their simulated cost. The step's time
//! is the bulk-synchronous makespan (max over ranks). The trigger watches
//! that series; when it fires, the configured partitioner produces a new map
//! and migration moves elements (particles riding along) to match it.
//!
//! All timing is the cost model's unless `timing = wall`, so a run is a pure
//! function of its config — the trace CSV is byte-identical across repeats
//! and across both execution modes.

use std::collections::BTreeSet;
use std::path::Path;
use std::time::Instant;

use crate::comm::RankEnsemble;
use crate::config::{Algorithm, RunConfig, TimingMode};
use crate::error::{Error, Result};
use crate::load::{compute_element_load, ElementLoadArray, FluidLoadConstant};
use crate::mesh::{GlobalElementIndex, Mesh};
use crate::migration::{execute_migration, plan_transfers, reinitialize_static, RankState};
use crate::particles::{advect, init_particles, rebin, Particle};
use crate::partition::{
    partition_centralized, partition_distributed, partition_hybrid, ElementProcessorMap,
    PartitionConfig,
};
use crate::trigger::TriggerController;

/// One row of the run trace.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub step: u64,
    /// Makespan: the slowest rank's simulated cost this step.
    pub sim_time: f64,
    pub per_rank_load: Vec<f64>,
    /// max load / mean load; 1 is perfect balance.
    pub imbalance: f64,
    pub lb_event: bool,
    /// Simulated balancing cost, present exactly when `lb_event`.
    pub lb_overhead: Option<f64>,
    /// Fraction of elements holding at least one particle.
    pub spread: f64,
}

/// Simulated cost of one rank's step.
pub fn step_cost(rank_elements: usize, rank_particles: usize, cfg: &RunConfig) -> f64 {
    cfg.c_elem * rank_elements as f64 + cfg.c_part * rank_particles as f64
}

/// max/mean load ratio; a zero total (no load anywhere) counts as balanced.
pub fn imbalance(per_rank_loads: &[f64]) -> f64 {
    assert!(!per_rank_loads.is_empty(), "imbalance of zero ranks");
    let sum: f64 = per_rank_loads.iter().sum();
    if sum <= 0.0 {
        return 1.0;
    }
    let max = per_rank_loads
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    max / (sum / per_rank_loads.len() as f64)
}

/// Everything a finished run leaves behind.
#[derive(Debug)]
pub struct RunOutput {
    pub traces: Vec<StepTrace>,
    pub states: Vec<RankState>,
    pub map: ElementProcessorMap,
    pub mesh: Mesh,
    /// Steps at which a balancing event fired (excluding the compulsory one).
    pub lb_steps: Vec<u64>,
    /// Cost of the compulsory initial balance, if the policy performs one.
    pub initial_overhead: Option<f64>,
}

/// Repartition with the configured algorithm, migrate to the new map, and
/// price the whole event.
fn rebalance(
    ens: &RankEnsemble,
    states: &mut [RankState],
    old_map: &ElementProcessorMap,
    mesh: &Mesh,
    cfg: &RunConfig,
    pcfg: &PartitionConfig,
    fluid: FluidLoadConstant,
) -> Result<(ElementProcessorMap, f64)> {
    let t0 = Instant::now();
    let local_loads: Vec<ElementLoadArray> = states
        .iter()
        .map(|s| compute_element_load(s, fluid))
        .collect();
    let new_map = match cfg.algorithm {
        Algorithm::Centralized => {
            // Rank ranges are contiguous and ascending, so concatenation in
            // rank order is already global element order.
            let mut ids = Vec::with_capacity(old_map.nelgt());
            let mut loads = Vec::with_capacity(old_map.nelgt());
            for la in &local_loads {
                ids.extend_from_slice(&la.global_ids);
                loads.extend_from_slice(&la.loads);
            }
            partition_centralized(&ElementLoadArray::new(ids, loads)?, pcfg)?
        }
        Algorithm::Distributed => partition_distributed(ens, &local_loads, pcfg)?,
        Algorithm::Hybrid => partition_hybrid(ens, &local_loads, pcfg)?,
    };
    let plan = plan_transfers(old_map, &new_map)?;
    execute_migration(ens, states, &plan, &new_map)?;
    for s in states.iter_mut() {
        reinitialize_static(s, mesh);
        debug_assert!(s.validate(&new_map, mesh).is_ok());
    }
    let cost = match cfg.timing {
        TimingMode::Model => cfg.lb_overhead,
        TimingMode::Wall => t0.elapsed().as_secs_f64(),
    };
    Ok((new_map, cost))
}

/// Run the configured scenario start to finish.
pub fn run_simulation(cfg: &RunConfig) -> Result<RunOutput> {
    let mesh = cfg.mesh()?;
    let nelgt = mesh.nelgt();
    let pcfg = cfg.partition_config();
    let fluid = FluidLoadConstant::new(cfg.fluid_load)?;
    let global = init_particles(&mesh, cfg.slab_lo, cfg.slab_hi, cfg.particles, cfg.seed)?;

    let mut map = ElementProcessorMap::uniform(cfg.np, nelgt);
    let mut states: Vec<RankState> = (0..cfg.np)
        .map(|r| RankState::initialize(r, &map, &mesh, global.clone()))
        .collect();
    let ens = RankEnsemble::new(cfg.np, cfg.exec_mode);
    let mut ctl = TriggerController::new(cfg.trigger)?;

    let mut traces = Vec::with_capacity(cfg.steps as usize);
    let mut lb_steps = Vec::new();
    let mut initial_overhead = None;

    if ctl.balances_at_start() {
        let (m, cost) = rebalance(&ens, &mut states, &map, &mesh, cfg, &pcfg, fluid)?;
        map = m;
        ctl.record_initial_balance(cost);
        initial_overhead = Some(cost);
    }

    for step in 1..=cfg.steps {
        let rate = cfg.rate_at(step);
        let map_ref = &map;
        let mesh_ref = &mesh;
        let outcomes = ens.run_with(
            states.iter_mut().collect::<Vec<_>>(),
            move |ctx, state: &mut RankState| -> Result<(f64, Vec<u32>)> {
                advect(&mut state.particles, mesh_ref, cfg.dt, rate);
                let rebound = rebin(&mut state.particles, mesh_ref, map_ref);
                // Participate in the hand-off even if rebinding failed, so no
                // peer is left waiting; surface the error right after.
                let mut outbound: Vec<(usize, (Particle, u32))> = Vec::new();
                if rebound.is_ok() {
                    let particles = std::mem::take(&mut state.particles.particles);
                    let bindings = std::mem::take(&mut state.particles.bindings);
                    for (p, b) in particles.into_iter().zip(bindings) {
                        let owner = map_ref.owner_of(b);
                        if owner == ctx.rank() {
                            state.particles.push(p, b);
                        } else {
                            outbound.push((owner, (p, b.get())));
                        }
                    }
                }
                let inbound = ctx.route(outbound);
                rebound?;
                for (_src, (p, b)) in inbound {
                    state.particles.push(p, GlobalElementIndex(b));
                }
                let cost = step_cost(state.element_count(), state.particle_count(), cfg);
                state.timing.record(cost);
                let mut occupied: Vec<u32> =
                    state.particles.bindings.iter().map(|b| b.get()).collect();
                occupied.sort_unstable();
                occupied.dedup();
                Ok((cost, occupied))
            },
        );

        let mut per_rank_load = Vec::with_capacity(cfg.np);
        let mut occupied = BTreeSet::new();
        for r in outcomes {
            let (cost, occ) = r?;
            per_rank_load.push(cost);
            occupied.extend(occ);
        }
        let sim_time = per_rank_load
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let imb = imbalance(&per_rank_load);
        let spread = occupied.len() as f64 / nelgt as f64;

        let mut lb_event = false;
        let mut lb_overhead = None;
        if ctl.observe(step, sim_time) {
            let (m, cost) = rebalance(&ens, &mut states, &map, &mesh, cfg, &pcfg, fluid)?;
            map = m;
            ctl.record_rebalance(step, cost);
            lb_event = true;
            lb_overhead = Some(cost);
            lb_steps.push(step);
        }

        traces.push(StepTrace {
            step,
            sim_time,
            per_rank_load,
            imbalance: imb,
            lb_event,
            lb_overhead,
            spread,
        });
    }

    if let Some(path) = &cfg.out {
        write_trace(&traces, path)?;
    }
    Ok(RunOutput {
        traces,
        states,
        map,
        mesh,
        lb_steps,
        initial_overhead,
    })
}

/// Render the trace as CSV. Float formatting is Rust's shortest-round-trip
/// `Display`, so equal runs render byte-identically.
pub fn trace_csv(traces: &[StepTrace]) -> String {
    let mut out =
        String::from("step,sim_time,imbalance,max_load,mean_load,lb_event,lb_overhead,spread\n");
    for t in traces {
        let max = t
            .per_rank_load
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let mean = t.per_rank_load.iter().sum::<f64>() / t.per_rank_load.len() as f64;
        let overhead = t.lb_overhead.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            t.step, t.sim_time, t.imbalance, max, mean, t.lb_event as u8, overhead, t.spread
        ));
    }
    out
}

pub fn write_trace(traces: &[StepTrace], path: &Path) -> Result<()> {
    std::fs::write(path, trace_csv(traces))
        .map_err(|e| Error::Io(format!("writing {}: {e}", path.display())))
}

/// Total simulated time of a run: every step's makespan plus every balancing
/// charge, including the compulsory one.
pub fn total_sim_time(out: &RunOutput) -> f64 {
    out.traces.iter().map(|t| t.sim_time).sum::<f64>()
        + out.traces.iter().filter_map(|t| t.lb_overhead).sum::<f64>()
        + out.initial_overhead.unwrap_or(0.0)
}
