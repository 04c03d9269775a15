//! Observability analysis and a noiseless simulator for smart-inverter
//! grid probing on distribution feeders.
//!
//! Given a feeder model and a split of its buses into metered and
//! non-metered sets, this crate decides whether multi-slot probing can
//! recover the non-metered loads, produces the constructive
//! partition-and-matching certificate behind a positive answer, verifies
//! the claim numerically through the column rank of the stacked probing
//! Jacobian, and demonstrates recovery end to end with a noiseless
//! simulator, including ZIP coefficient estimation from single-slot data.
//!
//! The crate is organized along the pipeline:
//!
//! * [`feeder`]: feeder files, bus admittance matrix, partitions.
//! * [`powerflow`]: the bus output functions, their analytic Jacobians,
//!   and a Newton power-flow solver.
//! * [`identify`]: max-flow identifiability tests and certificates.
//! * [`pattern`] / [`rank`] / [`certify`]: structural and numeric rank
//!   verification of the stacked Jacobian.
//! * [`probing`] / [`zip`]: simulation, load recovery, and ZIP fitting.
//!
//! Data-parallel inner loops (rank trials, per-slot simulations) run on
//! rayon under the default `parallel` feature and fall back to sequential
//! execution without it.

pub mod certify;
pub mod error;
pub mod feeder;
pub mod identify;
pub mod matching;
pub mod par;
pub mod pattern;
pub mod powerflow;
pub mod probing;
pub mod rank;
pub mod zip;

pub use error::{Error, Result};
pub use feeder::{
    build_admittance, load_feeder, load_partition, parse_feeder, validate_partition,
    AdmittanceMatrix, Bus, BusPartition, FeederGraph, GraphPattern, Line,
};
pub use identify::{
    build_bipartite_grid_graph, max_useful_slots, search_min_slots, test_for_slots,
    test_single_slot, BipartiteGridGraph, DataMode, FlowNetwork, FlowResult,
    IdentifiabilityVerdict, MatchEdge,
};
pub use certify::{assign_coupling_equations, block_matching_check, BlockAssignment};
pub use pattern::{probing_jacobian_pattern, SparsityPattern};
pub use powerflow::{
    eval_outputs, jacobians, solve_power_flow, solve_power_flow_specs, BusOutputs, Injection,
    JacobianSet, StateVector, ZipModel,
};
pub use probing::{
    recover_loads, simulate_probing, LoadModel, ProbingDataset, ProbingPlan, RecoveryResult,
    SimulationResult,
};
pub use rank::{generic_rank, generic_rank_seq, numeric_rank_at_state, RankReport};
pub use zip::{fit_zip, vandermonde_conditioning, VandermondeDiagnostics, ZipFit};
