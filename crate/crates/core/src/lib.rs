//! Dynamic load balancing for particle-laden spectral-element simulations.
//!
//! The library models a bulk-synchronous solver whose per-rank cost is driven
//! by how many elements and particles each rank owns. It provides:
//!
//! * a structured hex mesh with a locality-preserving 1-D element ordering
//!   ([`mesh`]);
//! * particles bound to elements, advected by a kinematic expansion surrogate
//!   ([`particles`]);
//! * per-element load modeling ([`load`]) and three prefix-sum chain
//!   partitioners — centralized, distributed, hybrid ([`partition`]);
//! * element/particle migration with explicit static-data reinitialization
//!   ([`migration`]);
//! * fixed and adaptive rebalancing triggers ([`trigger`]);
//! * a deterministic logical-rank communication layer ([`comm`]) and the
//!   simulation driver plus trace output ([`driver`], [`config`]).
//!
//! Everything is deterministic given a seed: collectives are pure functions
//! of rank-indexed inputs, and timing comes from the cost model unless wall
//! clock is requested.

pub mod comm;
pub mod config;
pub mod driver;
pub mod error;
pub mod load;
pub mod mesh;
pub mod migration;
pub mod particles;
pub mod partition;
pub mod trigger;

pub use comm::{ExecMode, RankCtx, RankEnsemble};
pub use config::{Algorithm, RunConfig, RunConfigBuilder, TimingMode};
pub use driver::{
    imbalance, run_simulation, step_cost, total_sim_time, trace_csv, write_trace, RunOutput,
    StepTrace,
};
pub use error::{Error, Result};
pub use load::{calibrate_fluid_load, compute_element_load, ElementLoadArray, FluidLoadConstant};
pub use mesh::{build_mesh, locate_element, order_elements, GlobalElementIndex, Mesh};
pub use migration::{
    canonical_state_bytes, execute_migration, pack_element, plan_transfers, reinitialize_static,
    unpack_element, ElementData, ElementFields, ElementMove, MigrationReport, RankState,
    StaticGeometry, TransferPlan, N_BLOCKS,
};
pub use particles::{
    advect, init_particles, rebin, MoveManifest, Particle, ParticleSet, PAYLOAD_LEN,
};
pub use partition::{
    enforce_lelt, partition_centralized, partition_distributed, partition_distributed_with_raw,
    partition_hybrid, ElementProcessorMap, PartitionConfig, PrefixSum,
};
pub use trigger::{
    compulsory_initial_balance, fixed_trigger, rebal_estimate, AdaptiveConfig, AdaptiveController,
    TriggerController, TriggerPolicy,
};
