//! Structural and numeric column-rank verification.
//!
//! Structural full column rank is certified by a perfect matching from
//! pattern columns to rows. The numeric side fills the pattern with random
//! values (or evaluates the true Jacobian at given states) and counts
//! singular values above a relative threshold.

use crate::error::{Error, Result};
use crate::feeder::{build_admittance, BusPartition, FeederGraph};
use crate::identify::DataMode;
use crate::matching::maximum_matching_size;
use crate::par;
use crate::pattern::{probing_jacobian_pattern, RowKind, SparsityPattern};
use crate::powerflow::{jacobians, StateVector};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use serde::{Deserialize, Serialize};

/// Relative singular-value cutoff for numeric rank decisions.
pub const RANK_THRESHOLD: f64 = 1e-10;

/// Verdict of a rank check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    /// A perfect column-to-row matching exists on the pattern.
    pub structural_full_rank: bool,
    /// Best numeric rank observed across trials.
    pub numeric_rank: usize,
    /// Column count the matrix must reach for full column rank.
    pub required_rank: usize,
    /// Smallest-to-largest singular value ratio of the best trial.
    pub smallest_singular_ratio: f64,
}

impl RankReport {
    pub fn numeric_full_rank(&self) -> bool {
        self.numeric_rank == self.required_rank
    }
}

fn singular_rank(matrix: &DMatrix<f64>) -> (usize, f64) {
    if matrix.nrows() == 0 || matrix.ncols() == 0 {
        return (0, 1.0);
    }
    let sv = matrix.clone().singular_values();
    let sigma_max = sv.max();
    if sigma_max == 0.0 {
        return (0, 0.0);
    }
    let rank = sv.iter().filter(|&&s| s > RANK_THRESHOLD * sigma_max).count();
    (rank, sv.min() / sigma_max)
}

/// Fills the pattern with independent uniform(-1, 1) values, rejecting
/// magnitudes below 1e-3 to keep trials away from accidental
/// near-singularity.
fn random_fill(pattern: &SparsityPattern, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(pattern.nrows(), pattern.ncols());
    for &(r, c) in &pattern.nonzeros {
        let v = loop {
            let x: f64 = rng.random_range(-1.0..1.0);
            if x.abs() >= 1e-3 {
                break x;
            }
        };
        m[(r, c)] = v;
    }
    m
}

/// Structural matching test plus `trials` random numeric fills; the
/// numeric rank is the best across trials (trials run in parallel when the
/// `parallel` feature is enabled).
pub fn generic_rank(pattern: &SparsityPattern, trials: usize, seed: u64) -> Result<RankReport> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    let adj = pattern.col_adjacency();
    let structural_full_rank = maximum_matching_size(&adj, pattern.nrows()) == pattern.ncols();

    let outcomes = par::map_indexed(trials, |trial| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64));
        singular_rank(&random_fill(pattern, &mut rng))
    });
    let (numeric_rank, smallest_singular_ratio) = outcomes
        .into_iter()
        .max_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap())
        .unwrap_or((0, 0.0));
    Ok(RankReport {
        structural_full_rank,
        numeric_rank,
        required_rank: pattern.ncols(),
        smallest_singular_ratio,
    })
}

/// Sequential variant of [`generic_rank`]; same result for the same seed.
pub fn generic_rank_seq(pattern: &SparsityPattern, trials: usize, seed: u64) -> Result<RankReport> {
    if trials == 0 {
        return Err(Error::InvalidInput("trials must be >= 1".into()));
    }
    let adj = pattern.col_adjacency();
    let structural_full_rank = maximum_matching_size(&adj, pattern.nrows()) == pattern.ncols();
    let outcomes: Vec<(usize, f64)> = (0..trials)
        .map(|trial| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64));
            singular_rank(&random_fill(pattern, &mut rng))
        })
        .collect();
    let (numeric_rank, smallest_singular_ratio) = outcomes
        .into_iter()
        .max_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap())
        .unwrap_or((0, 0.0));
    Ok(RankReport {
        structural_full_rank,
        numeric_rank,
        required_rank: pattern.ncols(),
        smallest_singular_ratio,
    })
}

/// Assembles the true-valued stacked Jacobian at the given per-slot states
/// and reports its numeric column rank. Row order matches
/// [`probing_jacobian_pattern`]: metering rows slot by slot, then coupling
/// rows interface by interface.
pub fn numeric_rank_at_state(
    feeder: &FeederGraph,
    partition: &BusPartition,
    states: &[StateVector],
    mode: DataMode,
) -> Result<RankReport> {
    let slots = states.len();
    if slots == 0 {
        return Err(Error::InvalidInput("need at least one state".into()));
    }
    let n = feeder.bus_count();
    let y = build_admittance(feeder);
    let jacs = states
        .iter()
        .map(|state| jacobians(state, &y))
        .collect::<Result<Vec<_>>>()?;

    let gp = feeder.pattern();
    let pattern = probing_jacobian_pattern(partition, &gp, slots, mode)?;
    let adj = pattern.col_adjacency();
    let structural_full_rank = maximum_matching_size(&adj, pattern.nrows()) == pattern.ncols();

    let block = 2 * n;
    let mut matrix = DMatrix::zeros(pattern.nrows(), pattern.ncols());
    for (row, label) in pattern.rows.iter().enumerate() {
        match label.kind {
            RowKind::U | RowKind::Theta | RowKind::PInj | RowKind::QInj => {
                let jac = &jacs[label.slot];
                let source = match label.kind {
                    RowKind::U => &jac.j_u,
                    RowKind::Theta => &jac.j_theta,
                    RowKind::PInj => &jac.j_p,
                    _ => &jac.j_q,
                };
                for &(c, v) in &source.rows[label.bus] {
                    matrix[(row, label.slot * block + c)] = v;
                }
            }
            RowKind::PCouple | RowKind::QCouple => {
                let pick = |jac: &crate::powerflow::JacobianSet| {
                    if label.kind == RowKind::PCouple {
                        jac.j_p.rows[label.bus].clone()
                    } else {
                        jac.j_q.rows[label.bus].clone()
                    }
                };
                for &(c, v) in &pick(&jacs[label.slot]) {
                    matrix[(row, label.slot * block + c)] = v;
                }
                for &(c, v) in &pick(&jacs[label.slot + 1]) {
                    matrix[(row, (label.slot + 1) * block + c)] = -v;
                }
            }
        }
    }
    let (numeric_rank, smallest_singular_ratio) = singular_rank(&matrix);
    Ok(RankReport {
        structural_full_rank,
        numeric_rank,
        required_rank: pattern.ncols(),
        smallest_singular_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::{parse_feeder, validate_partition};
    use crate::pattern::{ColComponent, ColLabel, RowLabel};
    use num_complex::Complex64;

    fn diag_pattern(n: usize) -> SparsityPattern {
        let rows = (0..n)
            .map(|bus| RowLabel {
                kind: RowKind::U,
                bus,
                slot: 0,
            })
            .collect();
        let cols = (0..n)
            .map(|bus| ColLabel {
                comp: ColComponent::Vr,
                bus,
                slot: 0,
            })
            .collect();
        let nonzeros = (0..n).map(|i| (i, i)).collect();
        SparsityPattern::new(rows, cols, nonzeros).unwrap()
    }

    #[test]
    fn identity_pattern_is_full_rank() {
        let report = generic_rank(&diag_pattern(5), 2, 7).unwrap();
        assert!(report.structural_full_rank);
        assert_eq!(report.numeric_rank, 5);
        assert!(report.numeric_full_rank());
    }

    #[test]
    fn critical_entry_controls_the_matching() {
        // Columns 1 and 2 live on rows 1 and 2; column 3 reaches rows 2 and
        // 4, column 4 reaches rows 3 and 4. Removing the (4, 3) entry
        // funnels three columns into two rows.
        let rows: Vec<RowLabel> = (0..4)
            .map(|bus| RowLabel {
                kind: RowKind::U,
                bus,
                slot: 0,
            })
            .collect();
        let cols: Vec<ColLabel> = (0..4)
            .map(|bus| ColLabel {
                comp: ColComponent::Vr,
                bus,
                slot: 0,
            })
            .collect();
        let with_entry = vec![
            (0, 0),
            (0, 1),
            (1, 0),
            (1, 1),
            (1, 2),
            (3, 2),
            (2, 3),
            (3, 3),
        ];
        let full =
            SparsityPattern::new(rows.clone(), cols.clone(), with_entry.clone()).unwrap();
        let report = generic_rank(&full, 3, 11).unwrap();
        assert!(report.structural_full_rank);
        assert_eq!(report.numeric_rank, 4);

        let without: Vec<(usize, usize)> = with_entry
            .into_iter()
            .filter(|&pos| pos != (3, 2))
            .collect();
        let broken = SparsityPattern::new(rows, cols, without).unwrap();
        let report = generic_rank(&broken, 3, 11).unwrap();
        assert!(!report.structural_full_rank);
        assert_eq!(report.numeric_rank, 3);
    }

    #[test]
    fn parallel_and_sequential_agree() {
        let pat = diag_pattern(6);
        assert_eq!(
            generic_rank(&pat, 4, 99).unwrap(),
            generic_rank_seq(&pat, 4, 99).unwrap()
        );
    }

    fn chain3() -> (FeederGraph, BusPartition) {
        let feeder = parse_feeder(
            r#"{
            "base": {"mva": 1.0, "kv": 12.47},
            "buses": [{"id": 0, "substation": true}, {"id": 1}, {"id": 2}],
            "lines": [
                {"from": 0, "to": 1, "y": [1.0, -2.0]},
                {"from": 1, "to": 2, "y": [1.5, -3.0]}
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

    fn banded_state(seed: u64, n: usize) -> StateVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phasors: Vec<Complex64> = (0..n)
            .map(|_| {
                let mag: f64 = rng.random_range(0.9..1.1);
                let ang: f64 = rng.random_range(-0.3..0.3);
                Complex64::from_polar(mag, ang)
            })
            .collect();
        StateVector::from_phasors(&phasors)
    }

    #[test]
    fn certified_chain_has_full_rank_at_random_states() {
        let (feeder, partition) = chain3();
        let states = vec![banded_state(1, 3), banded_state(2, 3)];
        let report =
            numeric_rank_at_state(&feeder, &partition, &states, DataMode::Phasor).unwrap();
        assert!(report.structural_full_rank);
        assert_eq!(report.required_rank, 12);
        assert_eq!(report.numeric_rank, 12);
    }

    #[test]
    fn identical_states_lose_rank_when_outnumbered() {
        // Two non-metered buses against one metered bus: repeating the same
        // state gives the coupling rows nothing new to pin down.
        let feeder = parse_feeder(
            r#"{
            "base": {"mva": 1.0, "kv": 12.47},
            "buses": [{"id": 0, "substation": true}, {"id": 1}, {"id": 2}],
            "lines": [
                {"from": 0, "to": 1, "y": [1.0, -2.0]},
                {"from": 1, "to": 2, "y": [1.5, -3.0]}
            ]
        }"#,
        )
        .unwrap();
        let partition = validate_partition(
            &feeder,
            &BusPartition {
                metered: vec![0],
                non_metered: vec![1, 2],
            },
        )
        .unwrap();
        let state = banded_state(3, 3);
        let report = numeric_rank_at_state(
            &feeder,
            &partition,
            &[state.clone(), state],
            DataMode::Phasor,
        )
        .unwrap();
        assert!(report.numeric_rank < report.required_rank);
        assert!(report.required_rank <= 12);
    }
}
