//! Shared helpers for the integration and acceptance suites: a seeded
//! random feeder family, independent oracles (exhaustive certificate
//! search, cut enumeration, finite differences, ladder sweep), and random
//! operating states.

#![allow(dead_code)]

use gridprobe_core::feeder::{Bus, BusPartition, FeederGraph, Line};
use gridprobe_core::identify::{build_bipartite_grid_graph, DataMode, FlowNetwork};
use gridprobe_core::matching::has_perfect_matching;
use gridprobe_core::powerflow::StateVector;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random connected feeder: a random spanning tree plus optional extra
/// edges (making it meshed), with impedance-specified lines.
pub fn random_feeder(rng: &mut ChaCha8Rng, n_buses: usize, allow_mesh: bool) -> FeederGraph {
    let buses: Vec<Bus> = (0..n_buses)
        .map(|id| Bus {
            id,
            is_substation: id == 0,
            shunt: Complex64::ZERO,
        })
        .collect();
    let mut lines = Vec::new();
    let make_line = |from: usize, to: usize, rng: &mut ChaCha8Rng| {
        let r: f64 = rng.random_range(0.01..0.1);
        let x: f64 = rng.random_range(0.02..0.2);
        Line {
            from,
            to,
            series: Complex64::new(r, x).inv(),
            shunt_from: Complex64::ZERO,
            shunt_to: Complex64::ZERO,
        }
    };
    for k in 1..n_buses {
        let parent = rng.random_range(0..k);
        lines.push(make_line(parent, k, rng));
    }
    if allow_mesh && n_buses >= 4 {
        for _ in 0..2 {
            if rng.random_bool(0.3) {
                let a = rng.random_range(0..n_buses);
                let b = rng.random_range(0..n_buses);
                if a != b {
                    lines.push(make_line(a.min(b), a.max(b), rng));
                }
            }
        }
    }
    FeederGraph::new(buses, lines).expect("random feeder is valid")
}

/// Random partition with the substation always metered; roughly
/// `o_fraction` of the remaining buses are non-metered.
pub fn random_partition(rng: &mut ChaCha8Rng, n_buses: usize, o_fraction: f64) -> BusPartition {
    let mut metered = vec![0];
    let mut non_metered = Vec::new();
    for bus in 1..n_buses {
        if rng.random_bool(o_fraction) {
            non_metered.push(bus);
        } else {
            metered.push(bus);
        }
    }
    BusPartition {
        metered,
        non_metered,
    }
}

/// Exhaustive certificate search: does any split of the non-metered buses
/// into `t / 2` groups make every group perfectly matchable into the
/// metered side? Independent of the max-flow implementation.
pub fn brute_force_certifiable(
    feeder: &FeederGraph,
    partition: &BusPartition,
    mode: DataMode,
    t: usize,
) -> bool {
    assert!(t >= 2 && t % 2 == 0);
    let graph = build_bipartite_grid_graph(feeder, partition, mode);
    let o = graph.o_count();
    if o == 0 {
        return true;
    }
    if graph.adj.iter().any(|a| a.is_empty()) {
        return false;
    }
    let k = t / 2;
    let mut assign = vec![0usize; o];
    loop {
        let ok = (0..k).all(|class| {
            let members: Vec<Vec<usize>> = (0..o)
                .filter(|&i| assign[i] == class)
                .map(|i| graph.adj[i].clone())
                .collect();
            has_perfect_matching(&members, graph.right.len())
        });
        if ok {
            return true;
        }
        let mut i = 0;
        loop {
            if i == o {
                return false;
            }
            assign[i] += 1;
            if assign[i] < k {
                break;
            }
            assign[i] = 0;
            i += 1;
        }
    }
}

/// Exact minimum s-t cut by enumerating all source-side subsets. By
/// strong duality this equals the optimum of the max-flow linear program.
pub fn min_cut_value(net: &FlowNetwork) -> i64 {
    let n = net.node_count();
    let internal: Vec<usize> = (0..n)
        .filter(|&v| v != net.source && v != net.sink)
        .collect();
    assert!(internal.len() <= 20, "cut enumeration oracle kept small");
    let mut best = i64::MAX;
    for mask in 0u64..(1u64 << internal.len()) {
        let mut source_side = vec![false; n];
        source_side[net.source] = true;
        for (i, &v) in internal.iter().enumerate() {
            if mask & (1 << i) != 0 {
                source_side[v] = true;
            }
        }
        let mut capacity = 0i64;
        for e in 0..net.edge_count() {
            let (from, to, cap) = net.edge(e);
            if source_side[from] && !source_side[to] {
                capacity += cap;
            }
        }
        best = best.min(capacity);
    }
    best
}

/// Central finite differences of a vector function, step `h` per column.
pub fn central_difference(
    f: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
    h: f64,
) -> DMatrix<f64> {
    let fx = f(x);
    let mut jac = DMatrix::zeros(fx.len(), x.len());
    for col in 0..x.len() {
        let mut plus = x.clone();
        plus[col] += h;
        let mut minus = x.clone();
        minus[col] -= h;
        let diff = (f(&plus) - f(&minus)) / (2.0 * h);
        jac.set_column(col, &diff);
    }
    jac
}

/// Ladder (backward/forward sweep) power flow for radial feeders with
/// constant-power injections. Fixed-point iteration independent of the
/// Newton solver.
pub fn sweep_power_flow(
    feeder: &FeederGraph,
    injections: &[(f64, f64)],
    slack: Complex64,
) -> Option<StateVector> {
    let n = feeder.bus_count();
    assert_eq!(feeder.lines().len(), n - 1, "sweep oracle needs a radial feeder");
    // Orient the tree away from the substation.
    let mut children: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n];
    let mut parent_impedance = vec![Complex64::ZERO; n];
    let mut order = vec![0usize];
    let mut seen = vec![false; n];
    seen[0] = true;
    let mut head = 0;
    while head < order.len() {
        let u = order[head];
        head += 1;
        for line in feeder.lines() {
            let (a, b) = (line.from, line.to);
            let (u2, v) = if a == u {
                (a, b)
            } else if b == u {
                (b, a)
            } else {
                continue;
            };
            if !seen[v] {
                seen[v] = true;
                let z = line.series.inv();
                children[u2].push((v, z));
                parent_impedance[v] = z;
                order.push(v);
            }
        }
    }

    let s: Vec<Complex64> = std::iter::once(Complex64::ZERO)
        .chain(injections.iter().map(|&(p, q)| Complex64::new(p, q)))
        .collect();
    let shunts: Vec<Complex64> = feeder.buses().iter().map(|b| b.shunt).collect();
    let mut v = vec![slack; n];
    for _ in 0..200 {
        // Backward: current drawn by each subtree.
        let mut down = vec![Complex64::ZERO; n];
        for &node in order.iter().rev() {
            let mut current = shunts[node] * v[node] - (s[node] / v[node]).conj();
            for &(child, _) in &children[node] {
                current += down[child];
            }
            down[node] = current;
        }
        // Forward: propagate voltage drops.
        let mut max_change = 0.0f64;
        for &node in &order {
            for &(child, z) in &children[node] {
                let updated = v[node] - z * down[child];
                max_change = max_change.max((updated - v[child]).norm());
                v[child] = updated;
            }
        }
        if max_change < 1e-13 {
            return Some(StateVector::from_phasors(&v));
        }
    }
    None
}

/// Random state with voltage magnitudes in the [0.9, 1.1] band.
pub fn banded_state(rng: &mut ChaCha8Rng, n_buses: usize) -> StateVector {
    let phasors: Vec<Complex64> = (0..n_buses)
        .map(|_| {
            let mag: f64 = rng.random_range(0.9..1.1);
            let ang: f64 = rng.random_range(-0.3..0.3);
            Complex64::from_polar(mag, ang)
        })
        .collect();
    StateVector::from_phasors(&phasors)
}

/// First even value strictly greater than `t`.
pub fn next_even_after(t: usize) -> usize {
    if t % 2 == 0 {
        t + 2
    } else {
        t + 1
    }
}
