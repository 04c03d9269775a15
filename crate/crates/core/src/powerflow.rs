//! Nonlinear bus output functions (squared voltage magnitude, angle, active
//! and reactive injection), their analytic Jacobians in rectangular
//! coordinates, and a Newton power-flow solver for the probing simulator.

use crate::error::{Error, Result};
use crate::feeder::AdmittanceMatrix;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

/// Rectangular system state: stacked order [v_r; v_i], one entry per bus.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub v_r: Vec<f64>,
    pub v_i: Vec<f64>,
}

impl StateVector {
    /// Flat state: every bus at 1 + j0.
    pub fn flat(n_buses: usize) -> Self {
        StateVector {
            v_r: vec![1.0; n_buses],
            v_i: vec![0.0; n_buses],
        }
    }

    pub fn from_phasors(v: &[Complex64]) -> Self {
        StateVector {
            v_r: v.iter().map(|z| z.re).collect(),
            v_i: v.iter().map(|z| z.im).collect(),
        }
    }

    pub fn bus_count(&self) -> usize {
        self.v_r.len()
    }

    pub fn phasor(&self, bus: usize) -> Complex64 {
        Complex64::new(self.v_r[bus], self.v_i[bus])
    }

    pub fn phasors(&self) -> Vec<Complex64> {
        (0..self.bus_count()).map(|n| self.phasor(n)).collect()
    }

    /// Stacked [v_r; v_i] vector of length 2(N+1).
    pub fn stacked(&self) -> DVector<f64> {
        let n = self.bus_count();
        DVector::from_fn(2 * n, |i, _| {
            if i < n {
                self.v_r[i]
            } else {
                self.v_i[i - n]
            }
        })
    }

    pub fn from_stacked(x: &DVector<f64>) -> Self {
        let n = x.len() / 2;
        StateVector {
            v_r: (0..n).map(|i| x[i]).collect(),
            v_i: (0..n).map(|i| x[n + i]).collect(),
        }
    }
}

/// Outputs of the four bus functions at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct BusOutputs {
    /// Squared voltage magnitudes, per-unit^2.
    pub u_sq: Vec<f64>,
    /// Voltage angles, radians.
    pub theta: Vec<f64>,
    /// Active injections, per-unit.
    pub p: Vec<f64>,
    /// Reactive injections, per-unit.
    pub q: Vec<f64>,
}

/// One Jacobian stored by rows; columns are the stacked [v_r; v_i] order.
/// Entries exist at every structural position even when the value happens
/// to be zero there.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    pub ncols: usize,
    /// Per row: sorted (column, value) pairs.
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.rows[row]
            .binary_search_by_key(&col, |&(c, _)| c)
            .map(|idx| self.rows[row][idx].1)
            .unwrap_or(0.0)
    }

    /// Structural column positions of one row.
    pub fn row_pattern(&self, row: usize) -> Vec<usize> {
        self.rows[row].iter().map(|&(c, _)| c).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows(), self.ncols);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                m[(r, c)] = v;
            }
        }
        m
    }
}

/// Analytic Jacobians of the four output families with respect to
/// [v_r; v_i], each (N+1) x 2(N+1).
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianSet {
    pub j_u: SparseRows,
    pub j_theta: SparseRows,
    pub j_p: SparseRows,
    pub j_q: SparseRows,
}

fn injection_terms(state: &StateVector, y: &AdmittanceMatrix) -> (Vec<f64>, Vec<f64>) {
    let n = y.bus_count();
    // a_n = sum_m (G_nm v_r,m - B_nm v_i,m); b_n = sum_m (B_nm v_r,m + G_nm v_i,m)
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    for (row, col, ynm) in y.entries() {
        a[row] += ynm.re * state.v_r[col] - ynm.im * state.v_i[col];
        b[row] += ynm.im * state.v_r[col] + ynm.re * state.v_i[col];
    }
    (a, b)
}

/// Evaluates squared magnitudes, angles, and injections at a state.
///
/// Errors with [`Error::ZeroVoltageBus`] when any bus sits at exactly
/// v = 0, where the angle is undefined.
pub fn eval_outputs(state: &StateVector, y: &AdmittanceMatrix) -> Result<BusOutputs> {
    let n = y.bus_count();
    if state.bus_count() != n {
        return Err(Error::InvalidInput(format!(
            "state has {} buses, admittance has {n}",
            state.bus_count()
        )));
    }
    if let Some(bus) = (0..n).find(|&k| state.v_r[k] == 0.0 && state.v_i[k] == 0.0) {
        return Err(Error::ZeroVoltageBus { bus });
    }
    let (a, b) = injection_terms(state, y);
    let mut out = BusOutputs {
        u_sq: Vec::with_capacity(n),
        theta: Vec::with_capacity(n),
        p: Vec::with_capacity(n),
        q: Vec::with_capacity(n),
    };
    for k in 0..n {
        let (vr, vi) = (state.v_r[k], state.v_i[k]);
        out.u_sq.push(vr * vr + vi * vi);
        out.theta.push(vi.atan2(vr));
        out.p.push(vr * a[k] + vi * b[k]);
        out.q.push(vi * a[k] - vr * b[k]);
    }
    Ok(out)
}

/// Analytic Jacobians at a state. The u and theta blocks carry the
/// [I I] pattern; the p and q blocks carry the coupling pattern of the
/// admittance matrix repeated over both column halves.
pub fn jacobians(state: &StateVector, y: &AdmittanceMatrix) -> Result<JacobianSet> {
    let n = y.bus_count();
    if state.bus_count() != n {
        return Err(Error::InvalidInput(format!(
            "state has {} buses, admittance has {n}",
            state.bus_count()
        )));
    }
    if let Some(bus) = (0..n).find(|&k| state.v_r[k] == 0.0 && state.v_i[k] == 0.0) {
        return Err(Error::ZeroVoltageBus { bus });
    }
    let (a, b) = injection_terms(state, y);
    let ncols = 2 * n;
    let mut j_u = Vec::with_capacity(n);
    let mut j_theta = Vec::with_capacity(n);
    let mut j_p = Vec::with_capacity(n);
    let mut j_q = Vec::with_capacity(n);
    for k in 0..n {
        let (vr, vi) = (state.v_r[k], state.v_i[k]);
        let usq = vr * vr + vi * vi;
        j_u.push(vec![(k, 2.0 * vr), (n + k, 2.0 * vi)]);
        j_theta.push(vec![(k, -vi / usq), (n + k, vr / usq)]);

        let mut prow = Vec::new();
        let mut qrow = Vec::new();
        for (m, ynm) in y.row(k) {
            let (g, bb) = (ynm.re, ynm.im);
            let diag = if m == k { 1.0 } else { 0.0 };
            prow.push((m, diag * a[k] + vr * g + vi * bb));
            qrow.push((m, vi * g - vr * bb - diag * b[k]));
        }
        for (m, ynm) in y.row(k) {
            let (g, bb) = (ynm.re, ynm.im);
            let diag = if m == k { 1.0 } else { 0.0 };
            prow.push((n + m, diag * b[k] - vr * bb + vi * g));
            qrow.push((n + m, diag * a[k] - vi * bb - vr * g));
        }
        j_p.push(prow);
        j_q.push(qrow);
    }
    Ok(JacobianSet {
        j_u: SparseRows { ncols, rows: j_u },
        j_theta: SparseRows {
            ncols,
            rows: j_theta,
        },
        j_p: SparseRows { ncols, rows: j_p },
        j_q: SparseRows { ncols, rows: j_q },
    })
}

/// ZIP polynomial in the voltage magnitude: constant-impedance alpha,
/// constant-current beta, constant-power gamma.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ZipModel {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl ZipModel {
    /// Net injection drawn by the load at voltage magnitude `u`:
    /// -(alpha u^2 + beta u + gamma).
    pub fn injection(&self, u: f64) -> f64 {
        -(self.alpha * u * u + self.beta * u + self.gamma)
    }
}

/// Injection specification for one bus inside a power-flow solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Injection {
    /// Constant complex power (p, q).
    Power { p: f64, q: f64 },
    /// Voltage-dependent ZIP load, re-evaluated at each Newton iterate.
    Zip { p: ZipModel, q: ZipModel },
}

impl Injection {
    fn at_voltage(&self, u: f64) -> (f64, f64) {
        match self {
            Injection::Power { p, q } => (*p, *q),
            Injection::Zip { p, q } => (p.injection(u), q.injection(u)),
        }
    }
}

pub const PF_TOLERANCE: f64 = 1e-10;
pub const PF_MAX_ITERATIONS: usize = 50;

/// Newton power flow with constant (p, q) injections at buses 1..N and the
/// substation held at `slack_voltage`. Flat start, tolerance 1e-10 on the
/// injection mismatch, at most 50 iterations.
pub fn solve_power_flow(
    y: &AdmittanceMatrix,
    injections: &[(f64, f64)],
    slack_voltage: Complex64,
) -> Result<StateVector> {
    let specs: Vec<Injection> = injections
        .iter()
        .map(|&(p, q)| Injection::Power { p, q })
        .collect();
    solve_power_flow_specs(y, &specs, slack_voltage)
}

/// Newton power flow over injection specifications (constant power or ZIP)
/// for buses 1..N. ZIP injections are re-evaluated at each iterate's
/// voltage magnitude.
pub fn solve_power_flow_specs(
    y: &AdmittanceMatrix,
    specs: &[Injection],
    slack_voltage: Complex64,
) -> Result<StateVector> {
    let n = y.bus_count();
    if specs.len() != n - 1 {
        return Err(Error::InvalidInput(format!(
            "expected {} injection specs, got {}",
            n - 1,
            specs.len()
        )));
    }
    let mut state = StateVector {
        v_r: vec![slack_voltage.re; n],
        v_i: vec![slack_voltage.im; n],
    };
    let free = n - 1;
    let mut residual = f64::INFINITY;
    for iteration in 0..PF_MAX_ITERATIONS {
        let outputs = eval_outputs(&state, y)?;
        let mut mismatch = DVector::zeros(2 * free);
        for k in 1..n {
            let u = outputs.u_sq[k].sqrt();
            let (p_spec, q_spec) = specs[k - 1].at_voltage(u);
            mismatch[k - 1] = outputs.p[k] - p_spec;
            mismatch[free + k - 1] = outputs.q[k] - q_spec;
        }
        residual = mismatch.amax();
        if !residual.is_finite() {
            return Err(Error::PowerFlowDiverged {
                iterations: iteration,
                residual,
            });
        }
        if residual < PF_TOLERANCE {
            return Ok(state);
        }
        let jac = jacobians(&state, y)?;
        let mut j = DMatrix::zeros(2 * free, 2 * free);
        for k in 1..n {
            for &(c, v) in &jac.j_p.rows[k] {
                if let Some(col) = free_column(c, n) {
                    j[(k - 1, col)] = v;
                }
            }
            for &(c, v) in &jac.j_q.rows[k] {
                if let Some(col) = free_column(c, n) {
                    j[(free + k - 1, col)] = v;
                }
            }
        }
        let step = j.lu().solve(&mismatch).ok_or(Error::PowerFlowDiverged {
            iterations: iteration,
            residual,
        })?;
        for k in 1..n {
            state.v_r[k] -= step[k - 1];
            state.v_i[k] -= step[free + k - 1];
        }
    }
    Err(Error::PowerFlowDiverged {
        iterations: PF_MAX_ITERATIONS,
        residual,
    })
}

/// Maps a stacked column index over all buses to the reduced system that
/// excludes the substation entries.
fn free_column(col: usize, n_buses: usize) -> Option<usize> {
    let free = n_buses - 1;
    if col == 0 || col == n_buses {
        None
    } else if col < n_buses {
        Some(col - 1)
    } else {
        Some(free + col - n_buses - 1)
    }
}
