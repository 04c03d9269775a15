//! Noiseless probing simulator and the coupled load-recovery solver.
//!
//! The simulator solves one power flow per probing slot with the metered
//! buses pinned to their commanded setpoints and the non-metered buses at
//! their (unknown to the operator) loads, and records what the meters
//! would read. Recovery solves the stacked metering-plus-coupling system
//! for the per-slot states by damped Gauss-Newton and reads the loads off
//! the estimated states.

use crate::error::{Error, Result};
use crate::feeder::{build_admittance, BusPartition, FeederGraph};
use crate::identify::DataMode;
use crate::par;
use crate::powerflow::{
    eval_outputs, jacobians, solve_power_flow_specs, Injection, StateVector, ZipModel,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Commanded injections per slot for the metered buses (substation
/// excluded; it stays the slack).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbingPlan {
    pub slots: usize,
    /// Per slot: metered bus -> (p, q) setpoint. Missing buses inject zero.
    pub setpoints: Vec<BTreeMap<usize, (f64, f64)>>,
}

#[derive(Serialize, Deserialize)]
struct PlanFile {
    #[serde(rename = "T")]
    slots: usize,
    setpoints: Vec<Vec<PlanEntry>>,
}

#[derive(Serialize, Deserialize)]
struct PlanEntry {
    bus: usize,
    p: f64,
    q: f64,
}

impl ProbingPlan {
    /// Parses `{"T": int, "setpoints": [[{"bus", "p", "q"}]]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: PlanFile = serde_json::from_str(text)?;
        let setpoints = file
            .setpoints
            .into_iter()
            .map(|slot| slot.into_iter().map(|e| (e.bus, (e.p, e.q))).collect())
            .collect();
        Ok(ProbingPlan {
            slots: file.slots,
            setpoints,
        })
    }

    pub fn to_json(&self) -> String {
        let file = PlanFile {
            slots: self.slots,
            setpoints: self
                .setpoints
                .iter()
                .map(|slot| {
                    slot.iter()
                        .map(|(&bus, &(p, q))| PlanEntry { bus, p, q })
                        .collect()
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("plan serializes")
    }

    /// Default plan: slot-staggered perturbations of +-0.05 per-unit around
    /// zero at every controllable metered bus, distinct across slots.
    pub fn default_perturbations(partition: &BusPartition, slots: usize) -> Self {
        let controllable: Vec<usize> = partition
            .metered
            .iter()
            .copied()
            .filter(|&m| m != 0)
            .collect();
        let setpoints = (0..slots)
            .map(|t| {
                controllable
                    .iter()
                    .enumerate()
                    .map(|(i, &bus)| {
                        let sign = if (t + i) % 2 == 0 { 1.0 } else { -1.0 };
                        let scale = 1.0 + t as f64 * 0.25;
                        (bus, (0.05 * sign * scale, 0.02 * sign * scale))
                    })
                    .collect()
            })
            .collect();
        ProbingPlan { slots, setpoints }
    }

    pub fn validate(&self, partition: &BusPartition) -> Result<()> {
        if self.slots == 0 {
            return Err(Error::InvalidPlan("need at least one slot".into()));
        }
        if self.setpoints.len() != self.slots {
            return Err(Error::InvalidPlan(format!(
                "{} setpoint slots for T = {}",
                self.setpoints.len(),
                self.slots
            )));
        }
        for slot in &self.setpoints {
            for (&bus, &(p, q)) in slot {
                if bus == 0 {
                    return Err(Error::InvalidPlan(
                        "substation injections are not commandable".into(),
                    ));
                }
                if !partition.metered.contains(&bus) {
                    return Err(Error::InvalidPlan(format!("bus {bus} is not metered")));
                }
                if !p.is_finite() || !q.is_finite() {
                    return Err(Error::InvalidPlan(format!(
                        "non-finite setpoint at bus {bus}"
                    )));
                }
            }
        }
        if self.slots >= 2 && self.setpoints.iter().all(|s| s == &self.setpoints[0]) {
            return Err(Error::InvalidPlan(
                "all slots share one setpoint vector; probing degenerates".into(),
            ));
        }
        Ok(())
    }
}

/// Loads at the non-metered buses: constant power or ZIP per bus.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadModel {
    pub loads: BTreeMap<usize, Injection>,
}

#[derive(Serialize, Deserialize)]
struct LoadFile {
    loads: Vec<LoadEntry>,
}

#[derive(Serialize, Deserialize)]
struct LoadEntry {
    bus: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    zip_p: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    zip_q: Option<[f64; 3]>,
}

impl LoadModel {
    pub fn constant(pairs: impl IntoIterator<Item = (usize, f64, f64)>) -> Self {
        LoadModel {
            loads: pairs
                .into_iter()
                .map(|(bus, p, q)| (bus, Injection::Power { p, q }))
                .collect(),
        }
    }

    /// Parses `{"loads": [{"bus", "p", "q"} | {"bus", "zip_p": [a, b, g],
    /// "zip_q": [a, b, g]}]}`.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: LoadFile = serde_json::from_str(text)?;
        let mut loads = BTreeMap::new();
        for entry in file.loads {
            let injection = match (entry.p, entry.q, entry.zip_p, entry.zip_q) {
                (Some(p), Some(q), None, None) => Injection::Power { p, q },
                (None, None, Some(zp), Some(zq)) => Injection::Zip {
                    p: ZipModel {
                        alpha: zp[0],
                        beta: zp[1],
                        gamma: zp[2],
                    },
                    q: ZipModel {
                        alpha: zq[0],
                        beta: zq[1],
                        gamma: zq[2],
                    },
                },
                _ => {
                    return Err(Error::Parse(format!(
                        "load at bus {} must give either p/q or zip_p/zip_q",
                        entry.bus
                    )))
                }
            };
            loads.insert(entry.bus, injection);
        }
        Ok(LoadModel { loads })
    }

    pub fn validate(&self, partition: &BusPartition) -> Result<()> {
        for &bus in self.loads.keys() {
            if !partition.non_metered.contains(&bus) {
                return Err(Error::InvalidInput(format!(
                    "load given for bus {bus}, which is not non-metered"
                )));
            }
        }
        Ok(())
    }
}

/// What one metered bus reads during one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeterRecord {
    pub bus: usize,
    /// Squared voltage magnitude.
    pub u_sq: f64,
    /// Angle in radians; absent in non-phasor datasets.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    pub p: f64,
    pub q: f64,
}

/// Noiseless probing data: per slot, one record per metered bus
/// (substation included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbingDataset {
    pub mode: DataMode,
    pub slots: Vec<Vec<MeterRecord>>,
}

impl ProbingDataset {
    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    /// Single-slot view, for per-slot recovery of voltage-dependent loads.
    pub fn slot(&self, t: usize) -> ProbingDataset {
        ProbingDataset {
            mode: self.mode,
            slots: vec![self.slots[t].clone()],
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dataset serializes")
    }
}

/// Simulator output: the recorded dataset plus the true states behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    pub dataset: ProbingDataset,
    pub states: Vec<StateVector>,
}

/// Solves one power flow per slot and records the metered quantities
/// exactly. Slots are independent and run in parallel when the `parallel`
/// feature is enabled.
pub fn simulate_probing(
    feeder: &FeederGraph,
    partition: &BusPartition,
    loads: &LoadModel,
    plan: &ProbingPlan,
    mode: DataMode,
) -> Result<SimulationResult> {
    plan.validate(partition)?;
    loads.validate(partition)?;
    let y = build_admittance(feeder);
    let n = feeder.bus_count();
    let slack = Complex64::new(1.0, 0.0);

    let solved: Vec<Result<(Vec<MeterRecord>, StateVector)>> =
        par::map_indexed(plan.slots, |t| {
            let mut specs = Vec::with_capacity(n - 1);
            for bus in 1..n {
                let spec = if let Some(&(p, q)) = plan.setpoints[t].get(&bus) {
                    Injection::Power { p, q }
                } else if let Some(&injection) = loads.loads.get(&bus) {
                    injection
                } else {
                    Injection::Power { p: 0.0, q: 0.0 }
                };
                specs.push(spec);
            }
            let state = solve_power_flow_specs(&y, &specs, slack)?;
            let outputs = eval_outputs(&state, &y)?;
            let records = partition
                .metered
                .iter()
                .map(|&m| MeterRecord {
                    bus: m,
                    u_sq: outputs.u_sq[m],
                    theta: (mode == DataMode::Phasor).then(|| outputs.theta[m]),
                    p: outputs.p[m],
                    q: outputs.q[m],
                })
                .collect();
            Ok((records, state))
        });

    let mut slots = Vec::with_capacity(plan.slots);
    let mut states = Vec::with_capacity(plan.slots);
    for item in solved {
        let (records, state) = item?;
        slots.push(records);
        states.push(state);
    }
    Ok(SimulationResult {
        dataset: ProbingDataset { mode, slots },
        states,
    })
}

/// Load estimates and solver diagnostics from one recovery run.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryResult {
    /// Estimated state per slot, substation pinned at 1 + j0.
    pub states: Vec<StateVector>,
    /// Per non-metered bus: load estimate averaged across slots.
    pub loads: BTreeMap<usize, (f64, f64)>,
    /// Per non-metered bus: the per-slot load evaluations behind the
    /// average.
    pub per_slot_loads: BTreeMap<usize, Vec<(f64, f64)>>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

pub const RECOVERY_TOLERANCE: f64 = 1e-10;
pub const RECOVERY_MAX_ITERATIONS: usize = 100;
const RECOVERY_RANK_THRESHOLD: f64 = 1e-10;

struct RecoverySystem<'a> {
    y: &'a crate::feeder::AdmittanceMatrix,
    partition: &'a BusPartition,
    dataset: &'a ProbingDataset,
    mode: DataMode,
    n_buses: usize,
    slots: usize,
}

impl RecoverySystem<'_> {
    fn unknowns(&self) -> usize {
        2 * (self.n_buses - 1) * self.slots
    }

    fn rows_per_slot(&self) -> usize {
        let m = self.partition.metered.len();
        match self.mode {
            DataMode::Phasor => 4 * m,
            DataMode::NonPhasor => 3 * m,
        }
    }

    fn row_count(&self) -> usize {
        self.rows_per_slot() * self.slots
            + 2 * self.partition.non_metered.len() * (self.slots - 1).max(0)
    }

    fn states_from(&self, x: &DVector<f64>) -> Vec<StateVector> {
        let free = self.n_buses - 1;
        (0..self.slots)
            .map(|t| {
                let mut v_r = vec![1.0; self.n_buses];
                let mut v_i = vec![0.0; self.n_buses];
                for k in 1..self.n_buses {
                    v_r[k] = x[t * 2 * free + (k - 1)];
                    v_i[k] = x[t * 2 * free + free + (k - 1)];
                }
                StateVector { v_r, v_i }
            })
            .collect()
    }

    fn residual(&self, states: &[StateVector]) -> Result<DVector<f64>> {
        let mut r = DVector::zeros(self.row_count());
        let mut row = 0;
        let outputs = states
            .iter()
            .map(|s| eval_outputs(s, self.y))
            .collect::<Result<Vec<_>>>()?;
        for (t, out) in outputs.iter().enumerate() {
            for record in &self.dataset.slots[t] {
                let m = record.bus;
                r[row] = out.u_sq[m] - record.u_sq;
                row += 1;
                if self.mode == DataMode::Phasor {
                    let theta = record.theta.ok_or_else(|| {
                        Error::InvalidInput("phasor recovery needs angle data".into())
                    })?;
                    r[row] = out.theta[m] - theta;
                    row += 1;
                }
                r[row] = out.p[m] - record.p;
                row += 1;
                r[row] = out.q[m] - record.q;
                row += 1;
            }
        }
        for t in 0..self.slots.saturating_sub(1) {
            for &o in &self.partition.non_metered {
                r[row] = outputs[t].p[o] - outputs[t + 1].p[o];
                row += 1;
                r[row] = outputs[t].q[o] - outputs[t + 1].q[o];
                row += 1;
            }
        }
        debug_assert_eq!(row, self.row_count());
        Ok(r)
    }

    fn jacobian(&self, states: &[StateVector]) -> Result<DMatrix<f64>> {
        let free = self.n_buses - 1;
        let mut j = DMatrix::zeros(self.row_count(), self.unknowns());
        let jacs = states
            .iter()
            .map(|s| jacobians(s, self.y))
            .collect::<Result<Vec<_>>>()?;
        // Stacked column index for bus k (non-substation) at slot t.
        let col_of = |t: usize, stacked: usize| -> Option<usize> {
            let n = self.n_buses;
            if stacked == 0 || stacked == n {
                None
            } else if stacked < n {
                Some(t * 2 * free + stacked - 1)
            } else {
                Some(t * 2 * free + free + stacked - n - 1)
            }
        };
        let mut row = 0;
        for (t, jac) in jacs.iter().enumerate() {
            for record in &self.dataset.slots[t] {
                let m = record.bus;
                for &(c, v) in &jac.j_u.rows[m] {
                    if let Some(col) = col_of(t, c) {
                        j[(row, col)] = v;
                    }
                }
                row += 1;
                if self.mode == DataMode::Phasor {
                    for &(c, v) in &jac.j_theta.rows[m] {
                        if let Some(col) = col_of(t, c) {
                            j[(row, col)] = v;
                        }
                    }
                    row += 1;
                }
                for &(c, v) in &jac.j_p.rows[m] {
                    if let Some(col) = col_of(t, c) {
                        j[(row, col)] = v;
                    }
                }
                row += 1;
                for &(c, v) in &jac.j_q.rows[m] {
                    if let Some(col) = col_of(t, c) {
                        j[(row, col)] = v;
                    }
                }
                row += 1;
            }
        }
        for t in 0..self.slots.saturating_sub(1) {
            for &o in &self.partition.non_metered {
                for &(c, v) in &jacs[t].j_p.rows[o] {
                    if let Some(col) = col_of(t, c) {
                        j[(row, col)] = v;
                    }
                }
                for &(c, v) in &jacs[t + 1].j_p.rows[o] {
                    if let Some(col) = col_of(t + 1, c) {
                        j[(row, col)] = -v;
                    }
                }
                row += 1;
                for &(c, v) in &jacs[t].j_q.rows[o] {
                    if let Some(col) = col_of(t, c) {
                        j[(row, col)] = v;
                    }
                }
                for &(c, v) in &jacs[t + 1].j_q.rows[o] {
                    if let Some(col) = col_of(t + 1, c) {
                        j[(row, col)] = -v;
                    }
                }
                row += 1;
            }
        }
        Ok(j)
    }
}

/// Recovers the non-metered loads from a noiseless probing dataset by
/// damped Gauss-Newton from a flat start, with the substation voltage
/// fixed per slot.
///
/// Steps are solved by truncated SVD, so an isolated singular iterate
/// (the flat start is one for magnitude-only data) is stepped through.
/// A Jacobian still rank-deficient at the final iterate means the data
/// does not pin the states down locally, and is reported as
/// [`Error::RankDeficient`]; a plain failure to converge is returned in
/// the result for diagnosis.
pub fn recover_loads(
    feeder: &FeederGraph,
    partition: &BusPartition,
    dataset: &ProbingDataset,
    mode: DataMode,
) -> Result<RecoveryResult> {
    let slots = dataset.slot_count();
    if slots == 0 {
        return Err(Error::InvalidInput("dataset has no slots".into()));
    }
    if mode == DataMode::Phasor && dataset.mode == DataMode::NonPhasor {
        return Err(Error::InvalidInput(
            "phasor recovery requested on a non-phasor dataset".into(),
        ));
    }
    for slot in &dataset.slots {
        let mut buses: Vec<usize> = slot.iter().map(|r| r.bus).collect();
        buses.sort_unstable();
        if buses != partition.metered {
            return Err(Error::InvalidInput(
                "dataset buses do not match the metered set".into(),
            ));
        }
    }

    let y = build_admittance(feeder);
    let system = RecoverySystem {
        y: &y,
        partition,
        dataset,
        mode,
        n_buses: feeder.bus_count(),
        slots,
    };

    let mut x = DVector::zeros(system.unknowns());
    for t in 0..slots {
        let free = system.n_buses - 1;
        for k in 0..free {
            x[t * 2 * free + k] = 1.0;
        }
    }
    let mut states = system.states_from(&x);
    let mut residual = system.residual(&states)?;
    let mut residual_norm = residual.amax();
    let mut iterations = 0;
    let mut converged = residual_norm < RECOVERY_TOLERANCE;

    while !converged && iterations < RECOVERY_MAX_ITERATIONS {
        iterations += 1;
        let jac = system.jacobian(&states)?;
        let svd = jac.svd(true, true);
        let sigma_max = svd.singular_values.max();
        let sigma_min = svd.singular_values.min();
        let full_rank = svd.singular_values.len() == system.unknowns()
            && sigma_max > 0.0
            && sigma_min / sigma_max >= RECOVERY_RANK_THRESHOLD;
        if !full_rank {
            return Err(Error::RankDeficient {
                iteration: iterations,
                singular_ratio: if sigma_max > 0.0 {
                    sigma_min / sigma_max
                } else {
                    0.0
                },
            });
        }
        let step = svd
            .solve(&residual, 1e-14)
            .map_err(|e| Error::Internal(format!("least-squares solve failed: {e}")))?;

        // Backtracking on the residual norm.
        let mut alpha = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let candidate = &x - alpha * &step;
            let cand_states = system.states_from(&candidate);
            match system.residual(&cand_states) {
                Ok(r) => {
                    let norm = r.amax();
                    if norm < residual_norm {
                        x = candidate;
                        states = cand_states;
                        residual = r;
                        residual_norm = norm;
                        improved = true;
                        break;
                    }
                }
                Err(Error::ZeroVoltageBus { .. }) => {}
                Err(e) => return Err(e),
            }
            alpha *= 0.5;
        }
        if !improved {
            break;
        }
        converged = residual_norm < RECOVERY_TOLERANCE;
    }

    let mut per_slot_loads: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    let mut loads = BTreeMap::new();
    let outputs = states
        .iter()
        .map(|s| eval_outputs(s, &y))
        .collect::<Result<Vec<_>>>()?;
    for &o in &partition.non_metered {
        let series: Vec<(f64, f64)> = outputs.iter().map(|out| (out.p[o], out.q[o])).collect();
        let p_avg = series.iter().map(|&(p, _)| p).sum::<f64>() / slots as f64;
        let q_avg = series.iter().map(|&(_, q)| q).sum::<f64>() / slots as f64;
        per_slot_loads.insert(o, series);
        loads.insert(o, (p_avg, q_avg));
    }
    Ok(RecoveryResult {
        states,
        loads,
        per_slot_loads,
        residual_norm,
        converged,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::{parse_feeder, validate_partition};

    fn chain3() -> (FeederGraph, BusPartition) {
        let feeder = parse_feeder(
            r#"{
            "base": {"mva": 1.0, "kv": 12.47},
            "buses": [{"id": 0, "substation": true}, {"id": 1}, {"id": 2}],
            "lines": [
                {"from": 0, "to": 1, "y": [4.0, -8.0]},
                {"from": 1, "to": 2, "y": [5.0, -10.0]}
            ]
        }"#,
        )
        .unwrap();
        let partition = validate_partition(
            &feeder,
            &BusPartition {
                metered: vec![0, 2],
                non_metered: vec![1],
            },
        )
        .unwrap();
        (feeder, partition)
    }

    fn two_slot_plan() -> ProbingPlan {
        ProbingPlan {
            slots: 2,
            setpoints: vec![
                BTreeMap::from([(2, (0.05, 0.02))]),
                BTreeMap::from([(2, (-0.05, -0.02))]),
            ],
        }
    }

    #[test]
    fn zero_everything_gives_flat_dataset() {
        let (feeder, partition) = chain3();
        let plan = ProbingPlan {
            slots: 2,
            setpoints: vec![
                BTreeMap::from([(2, (0.0, 0.0))]),
                BTreeMap::from([(2, (0.0, 1e-12))]),
            ],
        };
        let sim = simulate_probing(
            &feeder,
            &partition,
            &LoadModel::default(),
            &plan,
            DataMode::Phasor,
        )
        .unwrap();
        for slot in &sim.dataset.slots {
            for record in slot {
                assert!((record.u_sq - 1.0).abs() < 1e-9);
                assert!(record.p.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn simulated_dataset_is_self_consistent() {
        let (feeder, partition) = chain3();
        let loads = LoadModel::constant([(1, -0.1, -0.05)]);
        let sim =
            simulate_probing(&feeder, &partition, &loads, &two_slot_plan(), DataMode::Phasor)
                .unwrap();
        let y = build_admittance(&feeder);
        for (t, slot) in sim.dataset.slots.iter().enumerate() {
            let out = eval_outputs(&sim.states[t], &y).unwrap();
            for record in slot {
                assert!((out.u_sq[record.bus] - record.u_sq).abs() < 1e-12);
                assert!((out.p[record.bus] - record.p).abs() < 1e-12);
            }
        }
        // Two distinct setpoints produce two distinct states.
        assert!(sim.states[0] != sim.states[1]);
    }

    #[test]
    fn round_trip_recovery_on_the_chain() {
        let (feeder, partition) = chain3();
        let loads = LoadModel::constant([(1, -0.1, -0.05)]);
        for mode in [DataMode::Phasor, DataMode::NonPhasor] {
            let sim =
                simulate_probing(&feeder, &partition, &loads, &two_slot_plan(), mode).unwrap();
            let result = recover_loads(&feeder, &partition, &sim.dataset, mode).unwrap();
            assert!(result.converged, "recovery converged in mode {mode:?}");
            let (p, q) = result.loads[&1];
            assert!((p + 0.1).abs() < 1e-6, "p recovered: {p}");
            assert!((q + 0.05).abs() < 1e-6, "q recovered: {q}");
            // Stationarity: per-slot estimates agree.
            let series = &result.per_slot_loads[&1];
            assert!((series[0].0 - series[1].0).abs() < 1e-8);
            assert!((series[0].1 - series[1].1).abs() < 1e-8);
        }
    }

    #[test]
    fn flat_dataset_recovers_zero_loads_immediately() {
        let (feeder, partition) = chain3();
        let plan = ProbingPlan {
            slots: 1,
            setpoints: vec![BTreeMap::from([(2, (0.0, 0.0))])],
        };
        let sim = simulate_probing(
            &feeder,
            &partition,
            &LoadModel::default(),
            &plan,
            DataMode::Phasor,
        )
        .unwrap();
        let result = recover_loads(&feeder, &partition, &sim.dataset, DataMode::Phasor).unwrap();
        assert!(result.converged);
        assert_eq!(result.iterations, 0);
        let (p, q) = result.loads[&1];
        assert_eq!((p, q), (0.0, 0.0));
    }

    #[test]
    fn underdetermined_setup_reports_rank_deficiency() {
        // Five non-metered buses behind a single metered bus (M < O/T): the
        // stacked system cannot pin the states down.
        let feeder = parse_feeder(
            r#"{
            "base": {"mva": 1.0, "kv": 12.47},
            "buses": [{"id": 0, "substation": true}, {"id": 1}, {"id": 2}, {"id": 3}, {"id": 4}, {"id": 5}],
            "lines": [
                {"from": 0, "to": 1, "y": [4.0, -8.0]},
                {"from": 1, "to": 2, "y": [4.0, -8.0]},
                {"from": 2, "to": 3, "y": [4.0, -8.0]},
                {"from": 3, "to": 4, "y": [4.0, -8.0]},
                {"from": 4, "to": 5, "y": [4.0, -8.0]}
            ]
        }"#,
        )
        .unwrap();
        let partition = validate_partition(
            &feeder,
            &BusPartition {
                metered: vec![0],
                non_metered: vec![1, 2, 3, 4, 5],
            },
        )
        .unwrap();
        let y = build_admittance(&feeder);
        let mut specs = vec![Injection::Power { p: 0.0, q: 0.0 }; 5];
        specs[2] = Injection::Power {
            p: -0.05,
            q: -0.02,
        };
        let state = solve_power_flow_specs(&y, &specs, Complex64::new(1.0, 0.0)).unwrap();
        let out = eval_outputs(&state, &y).unwrap();
        let record = MeterRecord {
            bus: 0,
            u_sq: out.u_sq[0],
            theta: Some(out.theta[0]),
            p: out.p[0],
            q: out.q[0],
        };
        let dataset = ProbingDataset {
            mode: DataMode::Phasor,
            slots: vec![vec![record.clone()], vec![record]],
        };
        let err = recover_loads(&feeder, &partition, &dataset, DataMode::Phasor).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { .. }), "got {err:?}");
    }

    #[test]
    fn plan_json_round_trip() {
        let plan = two_slot_plan();
        let text = plan.to_json();
        let back = ProbingPlan::from_json(&text).unwrap();
        assert_eq!(plan, back);
    }

    #[test]
    fn degenerate_plan_rejected() {
        let (_, partition) = chain3();
        let plan = ProbingPlan {
            slots: 2,
            setpoints: vec![
                BTreeMap::from([(2, (0.05, 0.02))]),
                BTreeMap::from([(2, (0.05, 0.02))]),
            ],
        };
        assert!(matches!(
            plan.validate(&partition).unwrap_err(),
            Error::InvalidPlan(_)
        ));
    }
}
