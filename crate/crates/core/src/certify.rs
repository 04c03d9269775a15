//! Constructive rank certificates.
//!
//! Given a successful identifiability verdict, the coupling equations are
//! distributed over the per-slot diagonal blocks so that each block's
//! coupling rows cover every non-metered bus once, plus the buses outside
//! the block pair's subset a second time. Each block then admits an
//! explicit column-to-row matching, and the union of the per-block
//! matchings is a perfect column matching of the whole stacked pattern.

use crate::error::{Error, Result};
use crate::feeder::{BusPartition, GraphPattern};
use crate::identify::{DataMode, IdentifiabilityVerdict};
use crate::pattern::{ColComponent, ColLabel, RowKind, RowLabel};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// Which of the two coupling equations of a bus at an interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingKind {
    P,
    Q,
}

/// One physical coupling equation: bus `bus`, tying slots `interface` and
/// `interface + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CouplingEquation {
    pub interface: usize,
    pub bus: usize,
    pub kind: CouplingKind,
}

impl CouplingEquation {
    pub fn row_label(&self) -> RowLabel {
        RowLabel {
            kind: match self.kind {
                CouplingKind::P => RowKind::PCouple,
                CouplingKind::Q => RowKind::QCouple,
            },
            bus: self.bus,
            slot: self.interface,
        }
    }
}

/// Assignment of every coupling equation to one of its two adjacent blocks,
/// with the carried-over bookkeeping sets per block pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockAssignment {
    pub slots: usize,
    /// Equations assigned to each of the `slots` diagonal blocks, sorted.
    pub blocks: Vec<Vec<CouplingEquation>>,
    /// Cumulative subset unions carried from pair to pair, one per pair.
    pub carried: Vec<Vec<usize>>,
}

impl BlockAssignment {
    pub fn per_block_counts(&self) -> Vec<usize> {
        self.blocks.iter().map(Vec::len).collect()
    }
}

/// Distributes the coupling equations over the diagonal blocks following
/// the verdict's subset partition.
///
/// Block pair k (blocks 2k and 2k+1) ends up with coupling rows covering
/// every non-metered bus once plus the buses outside subset k a second
/// time. The final block is served entirely by equations left unused at
/// its left interface.
pub fn assign_coupling_equations(
    verdict: &IdentifiabilityVerdict,
    partition: &BusPartition,
) -> Result<BlockAssignment> {
    if !verdict.success {
        return Err(Error::InvalidInput(
            "coupling assignment needs a successful verdict".into(),
        ));
    }
    let slots = verdict.slots;
    if slots < 2 || slots % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "slot count must be even and >= 2, got {slots}"
        )));
    }
    let pairs = slots / 2;
    if verdict.partition.len() != pairs {
        return Err(Error::InvalidInput(format!(
            "verdict carries {} subsets, expected {pairs}",
            verdict.partition.len()
        )));
    }
    let classes: Vec<BTreeSet<usize>> = verdict
        .partition
        .iter()
        .map(|c| c.iter().copied().collect())
        .collect();
    let all_o: BTreeSet<usize> = partition.non_metered.iter().copied().collect();
    let mut covered: BTreeSet<usize> = BTreeSet::new();
    for class in &classes {
        for &bus in class {
            if !covered.insert(bus) {
                return Err(Error::InvalidInput(format!(
                    "bus {bus} appears in two subsets; verdict partition is invalid"
                )));
            }
        }
    }
    if covered != all_o {
        return Err(Error::InvalidInput(
            "verdict subsets do not partition the non-metered buses".into(),
        ));
    }

    let mut blocks: Vec<Vec<CouplingEquation>> = vec![Vec::new(); slots];
    let mut carried_sets: Vec<Vec<usize>> = Vec::with_capacity(pairs);
    let mut reached: BTreeSet<usize> = BTreeSet::new(); // union of subsets 0..k
    for k in 0..pairs {
        let block_a = 2 * k;
        let block_b = 2 * k + 1;
        let subset = &classes[k];
        let outside: BTreeSet<usize> = all_o.difference(subset).copied().collect();
        if !reached.is_subset(&outside) {
            return Err(Error::Internal(
                "carried buses re-entered a later subset".into(),
            ));
        }
        let fresh: Vec<usize> = outside.difference(&reached).copied().collect();

        // Block 2k: both equations carried for previously covered buses,
        // both fresh equations for the rest outside the subset, and the
        // active-power equation for the subset itself.
        if k > 0 {
            for &bus in &reached {
                for kind in [CouplingKind::P, CouplingKind::Q] {
                    blocks[block_a].push(CouplingEquation {
                        interface: block_a - 1,
                        bus,
                        kind,
                    });
                }
            }
        }
        for &bus in &fresh {
            for kind in [CouplingKind::P, CouplingKind::Q] {
                blocks[block_a].push(CouplingEquation {
                    interface: block_a,
                    bus,
                    kind,
                });
            }
        }
        for &bus in subset {
            blocks[block_a].push(CouplingEquation {
                interface: block_a,
                bus,
                kind: CouplingKind::P,
            });
        }

        // Block 2k+1: the unused equations at interface 2k, plus fresh
        // equations from interface 2k+1 when another pair follows.
        for &bus in &reached {
            for kind in [CouplingKind::P, CouplingKind::Q] {
                blocks[block_b].push(CouplingEquation {
                    interface: block_a,
                    bus,
                    kind,
                });
            }
        }
        for &bus in subset {
            blocks[block_b].push(CouplingEquation {
                interface: block_a,
                bus,
                kind: CouplingKind::Q,
            });
        }
        if k + 1 < pairs {
            for &bus in &fresh {
                for kind in [CouplingKind::P, CouplingKind::Q] {
                    blocks[block_b].push(CouplingEquation {
                        interface: block_b,
                        bus,
                        kind,
                    });
                }
            }
        } else if !fresh.is_empty() {
            // With an exact partition the last pair never has fresh buses.
            return Err(Error::Internal(
                "unassignable coupling equations at the last block".into(),
            ));
        }

        reached.extend(subset.iter().copied());
        carried_sets.push(reached.iter().copied().collect());
    }

    for block in &mut blocks {
        block.sort_unstable();
    }

    // Every interface equation must land in exactly one block.
    let mut seen: BTreeSet<CouplingEquation> = BTreeSet::new();
    for block in &blocks {
        for &eq in block {
            if !seen.insert(eq) {
                return Err(Error::Internal(format!(
                    "coupling equation assigned twice: {eq:?}"
                )));
            }
        }
    }
    let expected = all_o.len() * 2 * (slots - 1);
    if seen.len() != expected {
        return Err(Error::Internal(format!(
            "{} coupling equations assigned, expected {expected}",
            seen.len()
        )));
    }

    Ok(BlockAssignment {
        slots,
        blocks,
        carried: carried_sets,
    })
}

/// Result of checking the explicit per-block matchings.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCertificate {
    /// Whether each diagonal block admits the constructed matching.
    pub per_block: Vec<bool>,
    /// Assembled whole-pattern column matching when every block passes.
    pub global_matching: Option<Vec<(RowLabel, ColLabel)>>,
}

impl BlockCertificate {
    pub fn all_blocks_pass(&self) -> bool {
        self.per_block.iter().all(|&ok| ok)
    }
}

/// Verifies, block by block, the explicit column-to-row matching:
/// metered v_r columns to magnitude rows, metered v_i columns to angle
/// rows (phasor) or active-injection rows (non-phasor), non-metered v_r
/// columns to the block's first coupling row of the bus, v_i columns of
/// buses outside the pair's subset to their second coupling row, and v_i
/// columns of subset buses to metered injection rows through the
/// verdict's matching.
pub fn block_matching_check(
    assignment: &BlockAssignment,
    verdict: &IdentifiabilityVerdict,
    partition: &BusPartition,
    gp: &GraphPattern,
) -> BlockCertificate {
    let slots = assignment.slots;
    let pairs = slots / 2;
    let mode = verdict.mode;
    let all_o: Vec<usize> = partition.non_metered.clone();
    let mut per_block = Vec::with_capacity(slots);
    let mut global: Vec<(RowLabel, ColLabel)> = Vec::new();

    for block_idx in 0..slots {
        let k = block_idx / 2;
        let subset: BTreeSet<usize> = if k < pairs {
            verdict
                .partition
                .get(k)
                .map(|c| c.iter().copied().collect())
                .unwrap_or_default()
        } else {
            BTreeSet::new()
        };

        let mut ok = true;
        let mut pairs_here: Vec<(RowLabel, ColLabel)> = Vec::new();
        let mut used_rows: BTreeSet<RowLabel> = BTreeSet::new();
        let mut claim = |row: RowLabel, col: ColLabel, valid: bool| -> bool {
            valid && used_rows.insert(row) && {
                pairs_here.push((row, col));
                true
            }
        };

        for &m in &partition.metered {
            ok &= claim(
                RowLabel {
                    kind: RowKind::U,
                    bus: m,
                    slot: block_idx,
                },
                ColLabel {
                    comp: ColComponent::Vr,
                    bus: m,
                    slot: block_idx,
                },
                true,
            );
            let vi_row = match mode {
                DataMode::Phasor => RowLabel {
                    kind: RowKind::Theta,
                    bus: m,
                    slot: block_idx,
                },
                DataMode::NonPhasor => RowLabel {
                    kind: RowKind::PInj,
                    bus: m,
                    slot: block_idx,
                },
            };
            ok &= claim(
                vi_row,
                ColLabel {
                    comp: ColComponent::Vi,
                    bus: m,
                    slot: block_idx,
                },
                gp.contains(m, m),
            );
        }

        // Coupling rows of this block, grouped by bus.
        let mut by_bus: BTreeMap<usize, Vec<CouplingEquation>> = BTreeMap::new();
        for &eq in &assignment.blocks[block_idx] {
            by_bus.entry(eq.bus).or_default().push(eq);
        }
        for &o in &all_o {
            let eqs = by_bus.get(&o).cloned().unwrap_or_default();
            match eqs.first() {
                Some(eq) => {
                    ok &= claim(
                        eq.row_label(),
                        ColLabel {
                            comp: ColComponent::Vr,
                            bus: o,
                            slot: block_idx,
                        },
                        gp.contains(o, o),
                    );
                }
                None => ok = false,
            }
            if subset.contains(&o) {
                // Subset bus: the v_i column rides on the verdict matching.
                match verdict.matched_in_subset(k, o) {
                    Some(edge) => {
                        let row_kind = match (mode, edge.copy) {
                            (DataMode::Phasor, false) => RowKind::PInj,
                            (DataMode::Phasor, true) => RowKind::QInj,
                            (DataMode::NonPhasor, _) => RowKind::QInj,
                        };
                        ok &= claim(
                            RowLabel {
                                kind: row_kind,
                                bus: edge.m,
                                slot: block_idx,
                            },
                            ColLabel {
                                comp: ColComponent::Vi,
                                bus: o,
                                slot: block_idx,
                            },
                            gp.contains(edge.m, o),
                        );
                    }
                    None => ok = false,
                }
            } else {
                // Outside the subset: a second coupling row must exist.
                match eqs.get(1) {
                    Some(eq) => {
                        ok &= claim(
                            eq.row_label(),
                            ColLabel {
                                comp: ColComponent::Vi,
                                bus: o,
                                slot: block_idx,
                            },
                            gp.contains(o, o),
                        );
                    }
                    None => ok = false,
                }
            }
        }

        if ok {
            global.extend(pairs_here);
        }
        per_block.push(ok);
    }

    let all_pass = per_block.iter().all(|&b| b);
    BlockCertificate {
        per_block,
        global_matching: all_pass.then_some(global),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feeder::{parse_feeder, validate_partition, FeederGraph};
    use crate::identify::{test_for_slots, MatchEdge};
    use crate::pattern::probing_jacobian_pattern;

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

    #[test]
    fn chain_two_slot_assignment() {
        let (feeder, partition) = chain3();
        let verdict = test_for_slots(&feeder, &partition, DataMode::Phasor, 2).unwrap();
        let assignment = assign_coupling_equations(&verdict, &partition).unwrap();
        assert_eq!(assignment.per_block_counts(), vec![1, 1]);
        assert_eq!(
            assignment.blocks[0],
            vec![CouplingEquation {
                interface: 0,
                bus: 1,
                kind: CouplingKind::P
            }]
        );
        assert_eq!(
            assignment.blocks[1],
            vec![CouplingEquation {
                interface: 0,
                bus: 1,
                kind: CouplingKind::Q
            }]
        );
        assert_eq!(assignment.carried, vec![vec![1]]);
    }

    #[test]
    fn chain_blocks_admit_matchings() {
        let (feeder, partition) = chain3();
        let gp = feeder.pattern();
        for mode in [DataMode::Phasor, DataMode::NonPhasor] {
            let verdict = test_for_slots(&feeder, &partition, mode, 2).unwrap();
            let assignment = assign_coupling_equations(&verdict, &partition).unwrap();
            let cert = block_matching_check(&assignment, &verdict, &partition, &gp);
            assert_eq!(cert.per_block, vec![true, true]);

            // The assembled matching is a perfect column matching of the
            // stacked pattern.
            let pattern = probing_jacobian_pattern(&partition, &gp, 2, mode).unwrap();
            let matching = cert.global_matching.unwrap();
            assert_eq!(matching.len(), pattern.ncols());
            let mut rows_used = std::collections::BTreeSet::new();
            let mut cols_used = std::collections::BTreeSet::new();
            for (row_label, col_label) in matching {
                let r = pattern.row_of(row_label).expect("row exists");
                let c = pattern.col_of(col_label).expect("col exists");
                assert!(pattern.contains(r, c), "matched position is structural");
                assert!(rows_used.insert(r), "row used once");
                assert!(cols_used.insert(c), "col used once");
            }
        }
    }

    #[test]
    fn non_adjacent_match_fails_a_block() {
        let (_, partition) = chain3();
        // Star feeder where buses 1 and 2 both hang off the substation:
        // a claimed match of bus 1 onto bus 2 is not a feeder edge.
        let star = parse_feeder(
            r#"{
            "base": {"mva": 1.0, "kv": 12.47},
            "buses": [{"id": 0, "substation": true}, {"id": 1}, {"id": 2}],
            "lines": [
                {"from": 0, "to": 1, "y": [1.0, -2.0]},
                {"from": 0, "to": 2, "y": [1.0, -2.0]}
            ]
        }"#,
        )
        .unwrap();
        let verdict = IdentifiabilityVerdict {
            success: true,
            mode: DataMode::Phasor,
            slots: 2,
            flow_value: 1,
            t_max: 2,
            partition: vec![vec![1]],
            matchings: vec![MatchEdge {
                o: 1,
                m: 2,
                copy: false,
            }],
        };
        let assignment = assign_coupling_equations(&verdict, &partition).unwrap();
        let cert = block_matching_check(&assignment, &verdict, &partition, &star.pattern());
        assert!(!cert.all_blocks_pass());
        assert!(cert.global_matching.is_none());
    }

    #[test]
    fn missing_coverage_is_an_error() {
        let (feeder, partition) = chain3();
        let mut verdict = test_for_slots(&feeder, &partition, DataMode::Phasor, 2).unwrap();
        verdict.partition = vec![vec![]];
        verdict.matchings.clear();
        assert!(assign_coupling_equations(&verdict, &partition).is_err());
    }
}
