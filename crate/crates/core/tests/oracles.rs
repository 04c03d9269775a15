//! Independent-oracle checks: max flow against exhaustive cut enumeration,
//! the Newton power flow against a ladder sweep on radial feeders, and
//! certificate validity over random successful flows.

mod common;

use common::{banded_state, min_cut_value, random_feeder, random_partition, rng, sweep_power_flow};
use gridprobe_core::feeder::{build_admittance, validate_partition};
use gridprobe_core::identify::{test_for_slots, DataMode, FlowNetwork};
use gridprobe_core::powerflow::solve_power_flow;
use gridprobe_core::Error;
use num_complex::Complex64;
use rand::Rng;

#[test]
fn max_flow_matches_cut_enumeration_on_random_layered_networks() {
    let mut rng = rng(0x100);
    for _ in 0..50 {
        let o_count = rng.random_range(2..=5usize);
        let right_count = rng.random_range(2..=6usize);
        let source = 0usize;
        let sink = 1 + o_count + right_count;
        let mut net = FlowNetwork::new(sink + 1, source, sink);
        for i in 0..o_count {
            net.add_edge(source, 1 + i, rng.random_range(1..=2));
        }
        for i in 0..o_count {
            for j in 0..right_count {
                if rng.random_bool(0.45) {
                    net.add_edge(1 + i, 1 + o_count + j, 1);
                }
            }
        }
        let shared_cap = rng.random_range(1..=3);
        for j in 0..right_count {
            net.add_edge(1 + o_count + j, sink, shared_cap);
        }
        let flow = net.max_flow();
        assert_eq!(flow.value, min_cut_value(&net), "duality gap");
    }
}

#[test]
fn newton_agrees_with_ladder_sweep_on_radial_feeders() {
    let mut rng = rng(0x200);
    for case in 0..20 {
        let n = rng.random_range(3..=8usize);
        let feeder = random_feeder(&mut rng, n, false);
        let y = build_admittance(&feeder);
        let injections: Vec<(f64, f64)> = (1..n)
            .map(|_| {
                (
                    rng.random_range(-0.1..0.02),
                    rng.random_range(-0.05..0.01),
                )
            })
            .collect();
        let slack = Complex64::new(1.0, 0.0);
        let newton = solve_power_flow(&y, &injections, slack).expect("newton converges");
        let sweep = sweep_power_flow(&feeder, &injections, slack).expect("sweep converges");
        for k in 0..n {
            let delta = (newton.phasor(k) - sweep.phasor(k)).norm();
            assert!(delta < 1e-8, "case {case}: bus {k} differs by {delta:.3e}");
        }
    }
}

#[test]
fn certificates_from_random_successful_flows_are_valid() {
    let mut rng = rng(0x300);
    let mut successes = 0;
    let mut attempts = 0;
    while successes < 100 && attempts < 4000 {
        attempts += 1;
        let n = rng.random_range(3..=9usize);
        let feeder = random_feeder(&mut rng, n, true);
        let partition =
            validate_partition(&feeder, &random_partition(&mut rng, n, 0.35)).unwrap();
        let mode = if rng.random_bool(0.5) {
            DataMode::Phasor
        } else {
            DataMode::NonPhasor
        };
        let t = 2 * rng.random_range(1..=3usize);
        let verdict = test_for_slots(&feeder, &partition, mode, t).unwrap();
        if !verdict.success {
            continue;
        }
        successes += 1;

        // Subsets are disjoint, cover the non-metered set, and each class
        // matching is injective over grid-graph edges.
        let mut covered = std::collections::BTreeSet::new();
        for subset in &verdict.partition {
            for &bus in subset {
                assert!(covered.insert(bus), "bus {bus} in two subsets");
            }
        }
        let expected: std::collections::BTreeSet<usize> =
            partition.non_metered.iter().copied().collect();
        assert_eq!(covered, expected, "subsets must cover the non-metered set");
        assert_eq!(verdict.partition.len(), t / 2);

        let graph =
            gridprobe_core::build_bipartite_grid_graph(&feeder, &partition, mode);
        for subset in verdict.partition.iter() {
            let mut used = std::collections::BTreeSet::new();
            for &bus in subset {
                let edge = verdict
                    .matchings
                    .iter()
                    .find(|e| e.o == bus)
                    .expect("every subset bus is matched");
                assert!(
                    used.insert((edge.m, edge.copy)),
                    "metered node reused within a subset"
                );
                let o_idx = graph.o_buses.iter().position(|&b| b == bus).unwrap();
                let right_idx = graph
                    .right
                    .iter()
                    .position(|r| r.bus == edge.m && r.copy == edge.copy)
                    .unwrap();
                assert!(graph.has_edge(o_idx, right_idx), "match is a grid edge");
            }
        }
    }
    assert!(successes == 100, "found only {successes} successful flows");
}

#[test]
fn solver_errors_carry_diagnostics() {
    let mut rng = rng(0x400);
    let feeder = random_feeder(&mut rng, 4, false);
    let y = build_admittance(&feeder);
    let err = solve_power_flow(&y, &[(-50.0, 0.0); 3], Complex64::new(1.0, 0.0)).unwrap_err();
    match err {
        Error::PowerFlowDiverged { residual, .. } => assert!(residual > 1e-10),
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn eval_outputs_matches_complex_oracle_at_random_states() {
    let mut rng = rng(0x500);
    for _ in 0..30 {
        let n = rng.random_range(2..=9usize);
        let feeder = random_feeder(&mut rng, n, true);
        let y = build_admittance(&feeder);
        let state = banded_state(&mut rng, n);
        let out = gridprobe_core::eval_outputs(&state, &y).unwrap();
        let v = state.phasors();
        let current = y.mul_vec(&v);
        for k in 0..n {
            let s = v[k] * current[k].conj();
            assert!((out.p[k] - s.re).abs() < 1e-12);
            assert!((out.q[k] - s.im).abs() < 1e-12);
            assert!((out.u_sq[k] - v[k].norm_sqr()).abs() < 1e-12);
        }
    }
}

#[test]
fn lossless_network_conserves_active_power() {
    // Purely reactive lines: total active injection at any solution is zero.
    let text = r#"{
        "base": {"mva": 1.0, "kv": 12.47},
        "buses": [{"id": 0, "substation": true}, {"id": 1}, {"id": 2}, {"id": 3}],
        "lines": [
            {"from": 0, "to": 1, "y": [0.0, -8.0]},
            {"from": 1, "to": 2, "y": [0.0, -10.0]},
            {"from": 1, "to": 3, "y": [0.0, -6.0]}
        ]
    }"#;
    let feeder = gridprobe_core::parse_feeder(text).unwrap();
    let y = build_admittance(&feeder);
    let state = solve_power_flow(
        &y,
        &[(-0.08, -0.03), (0.05, -0.02), (-0.04, 0.01)],
        Complex64::new(1.0, 0.0),
    )
    .unwrap();
    let out = gridprobe_core::eval_outputs(&state, &y).unwrap();
    let total: f64 = out.p.iter().sum();
    assert!(total.abs() < 1e-10, "lossless feeder leaked {total:.3e}");
}
