//! Probing-setup identifiability tests.
//!
//! A setup (feeder, metered/non-metered split, data mode) is certified for a
//! slot count T by solving a max-flow problem on a layered network built
//! from the metered/non-metered adjacencies of the feeder. A successful
//! flow is decomposed into per-subset matchings that constitute the
//! constructive certificate consumed by the rank-certification module.

use crate::error::{Error, Result};
use crate::feeder::{BusPartition, FeederGraph};
use serde::{Deserialize, Serialize};

/// Which quantities the metered buses record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataMode {
    /// Voltage magnitude and angle plus both injections.
    Phasor,
    /// Voltage magnitude plus both injections, no angle.
    NonPhasor,
}

/// One node on the metered side of the bipartite grid graph. In phasor
/// mode every metered bus appears twice: once as itself and once as a copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RightNode {
    pub bus: usize,
    pub copy: bool,
}

/// Bipartite graph between non-metered buses and the metered side, keeping
/// exactly the metered/non-metered feeder adjacencies (duplicated onto the
/// copies in phasor mode).
#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteGridGraph {
    /// Non-metered bus ids, sorted.
    pub o_buses: Vec<usize>,
    /// Metered-side nodes: the metered buses in order, then their copies
    /// when the mode is phasor.
    pub right: Vec<RightNode>,
    /// For each non-metered index, the adjacent right-node indices, sorted.
    pub adj: Vec<Vec<usize>>,
}

impl BipartiteGridGraph {
    pub fn o_count(&self) -> usize {
        self.o_buses.len()
    }

    pub fn has_edge(&self, o_idx: usize, right_idx: usize) -> bool {
        self.adj[o_idx].binary_search(&right_idx).is_ok()
    }
}

/// Builds the bipartite grid graph for a validated partition.
pub fn build_bipartite_grid_graph(
    feeder: &FeederGraph,
    partition: &BusPartition,
    mode: DataMode,
) -> BipartiteGridGraph {
    let metered = &partition.metered;
    let o_buses = partition.non_metered.clone();
    let mut right: Vec<RightNode> = metered
        .iter()
        .map(|&bus| RightNode { bus, copy: false })
        .collect();
    if mode == DataMode::Phasor {
        right.extend(metered.iter().map(|&bus| RightNode { bus, copy: true }));
    }
    let m_index: std::collections::BTreeMap<usize, usize> = metered
        .iter()
        .enumerate()
        .map(|(idx, &bus)| (bus, idx))
        .collect();
    let mut adj = vec![Vec::new(); o_buses.len()];
    for (o_idx, &o_bus) in o_buses.iter().enumerate() {
        for m_bus in feeder.neighbors(o_bus) {
            if let Some(&j) = m_index.get(&m_bus) {
                adj[o_idx].push(j);
                if mode == DataMode::Phasor {
                    adj[o_idx].push(metered.len() + j);
                }
            }
        }
        adj[o_idx].sort_unstable();
    }
    BipartiteGridGraph {
        o_buses,
        right,
        adj,
    }
}

/// Directed flow network with integer capacities.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    node_count: usize,
    pub source: usize,
    pub sink: usize,
    // Forward and reverse arcs interleaved: user edge e maps to arc 2e.
    arc_head: Vec<usize>,
    arc_cap: Vec<i64>,
    adj: Vec<Vec<usize>>,
}

/// Integral maximum flow and the per-edge flows achieving it.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowResult {
    pub value: i64,
    pub edge_flows: Vec<i64>,
}

impl FlowNetwork {
    pub fn new(node_count: usize, source: usize, sink: usize) -> Self {
        FlowNetwork {
            node_count,
            source,
            sink,
            arc_head: Vec::new(),
            arc_cap: Vec::new(),
            adj: vec![Vec::new(); node_count],
        }
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.arc_head.len() / 2
    }

    /// Adds a directed edge and returns its index.
    pub fn add_edge(&mut self, from: usize, to: usize, cap: i64) -> usize {
        assert!(cap >= 0, "capacities must be non-negative");
        let edge = self.edge_count();
        self.adj[from].push(2 * edge);
        self.adj[to].push(2 * edge + 1);
        self.arc_head.push(to);
        self.arc_cap.push(cap);
        self.arc_head.push(from);
        self.arc_cap.push(0);
        edge
    }

    pub fn edge(&self, index: usize) -> (usize, usize, i64) {
        (
            self.arc_head[2 * index + 1],
            self.arc_head[2 * index],
            self.arc_cap[2 * index],
        )
    }

    /// Shortest-augmenting-path maximum flow. Integral by construction and
    /// deterministic for a fixed edge insertion order.
    pub fn max_flow(&self) -> FlowResult {
        let mut residual = self.arc_cap.clone();
        let mut value = 0i64;
        loop {
            // BFS for the shortest residual path from source to sink.
            let mut parent_arc = vec![usize::MAX; self.node_count];
            let mut visited = vec![false; self.node_count];
            visited[self.source] = true;
            let mut queue = std::collections::VecDeque::from([self.source]);
            'bfs: while let Some(u) = queue.pop_front() {
                for &arc in &self.adj[u] {
                    let v = self.arc_head[arc];
                    if !visited[v] && residual[arc] > 0 {
                        visited[v] = true;
                        parent_arc[v] = arc;
                        if v == self.sink {
                            break 'bfs;
                        }
                        queue.push_back(v);
                    }
                }
            }
            if !visited[self.sink] {
                break;
            }
            let mut bottleneck = i64::MAX;
            let mut node = self.sink;
            while node != self.source {
                let arc = parent_arc[node];
                bottleneck = bottleneck.min(residual[arc]);
                node = self.arc_head[arc ^ 1];
            }
            let mut node = self.sink;
            while node != self.source {
                let arc = parent_arc[node];
                residual[arc] -= bottleneck;
                residual[arc ^ 1] += bottleneck;
                node = self.arc_head[arc ^ 1];
            }
            value += bottleneck;
        }
        let edge_flows = (0..self.edge_count())
            .map(|e| self.arc_cap[2 * e] - residual[2 * e])
            .collect();
        FlowResult { value, edge_flows }
    }
}

/// The layered test network: source -> non-metered -> metered side -> sink.
#[derive(Debug, Clone)]
pub struct ProbingFlowNetwork {
    pub network: FlowNetwork,
    /// (o index, right index, edge index) for the middle layer.
    layer2: Vec<(usize, usize, usize)>,
    o_count: usize,
}

impl ProbingFlowNetwork {
    /// Layer capacities: `source_cap` on source->O edges, 1 on O->right
    /// edges, `right_cap` shared by all right->sink edges.
    pub fn build(graph: &BipartiteGridGraph, source_cap: i64, right_cap: i64) -> Self {
        let o_count = graph.o_count();
        let right_count = graph.right.len();
        let source = 0usize;
        let sink = 1 + o_count + right_count;
        let mut network = FlowNetwork::new(sink + 1, source, sink);
        for o_idx in 0..o_count {
            network.add_edge(source, 1 + o_idx, source_cap);
        }
        let mut layer2 = Vec::new();
        for (o_idx, rights) in graph.adj.iter().enumerate() {
            for &right_idx in rights {
                let edge = network.add_edge(1 + o_idx, 1 + o_count + right_idx, 1);
                layer2.push((o_idx, right_idx, edge));
            }
        }
        for right_idx in 0..right_count {
            network.add_edge(1 + o_count + right_idx, sink, right_cap);
        }
        ProbingFlowNetwork {
            network,
            layer2,
            o_count,
        }
    }

    /// Flow-carrying middle-layer pairs (o index, right index).
    pub fn used_pairs(&self, flow: &FlowResult) -> Vec<(usize, usize)> {
        self.layer2
            .iter()
            .filter(|&&(_, _, e)| flow.edge_flows[e] > 0)
            .map(|&(o, r, _)| (o, r))
            .collect()
    }

    pub fn o_count(&self) -> usize {
        self.o_count
    }
}

/// One matched pair of the certificate: non-metered bus `o` assigned to
/// metered bus `m` (or to its copy in phasor mode).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchEdge {
    pub o: usize,
    pub m: usize,
    pub copy: bool,
}

/// Outcome of an identifiability test, including the constructive
/// partition-and-matching certificate on success.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifiabilityVerdict {
    pub success: bool,
    pub mode: DataMode,
    #[serde(rename = "T")]
    pub slots: usize,
    #[serde(rename = "flow")]
    pub flow_value: i64,
    #[serde(rename = "T_max")]
    pub t_max: usize,
    /// Non-metered bus ids per subset, one subset per slot pair.
    pub partition: Vec<Vec<usize>>,
    /// Flat list of matched pairs; subset membership follows `partition`.
    pub matchings: Vec<MatchEdge>,
}

impl IdentifiabilityVerdict {
    fn failure(mode: DataMode, slots: usize, flow_value: i64, t_max: usize) -> Self {
        IdentifiabilityVerdict {
            success: false,
            mode,
            slots,
            flow_value,
            t_max,
            partition: Vec::new(),
            matchings: Vec::new(),
        }
    }

    /// The matched metered-side node for a non-metered bus within subset
    /// `k`, when present.
    pub fn matched_in_subset(&self, k: usize, o_bus: usize) -> Option<&MatchEdge> {
        if !self.partition.get(k)?.contains(&o_bus) {
            return None;
        }
        self.matchings.iter().find(|e| e.o == o_bus)
    }
}

/// Largest slot count worth testing: one less than the maximum metered-side
/// node degree on the test network for phasor data, twice that for
/// non-phasor data. Clamped below at 2 because the test loop always starts
/// at T = 2.
pub fn max_useful_slots(feeder: &FeederGraph, partition: &BusPartition, mode: DataMode) -> usize {
    let o_set: std::collections::BTreeSet<usize> =
        partition.non_metered.iter().copied().collect();
    // Degree on the flow network counts the sink edge as well.
    let delta = partition
        .metered
        .iter()
        .map(|&m| feeder.neighbors(m).iter().filter(|b| o_set.contains(b)).count() + 1)
        .max()
        .unwrap_or(1);
    let bound = match mode {
        DataMode::Phasor => delta.saturating_sub(1),
        DataMode::NonPhasor => 2 * delta.saturating_sub(1),
    };
    bound.max(2)
}

/// Tests whether probing over `slots` slots is certified for the setup.
/// `slots` must be even and at least 2.
pub fn test_for_slots(
    feeder: &FeederGraph,
    partition: &BusPartition,
    mode: DataMode,
    slots: usize,
) -> Result<IdentifiabilityVerdict> {
    if slots < 2 || slots % 2 != 0 {
        return Err(Error::InvalidInput(format!(
            "slot count must be even and >= 2, got {slots}"
        )));
    }
    let graph = build_bipartite_grid_graph(feeder, partition, mode);
    let t_max = max_useful_slots(feeder, partition, mode);
    let pfn = ProbingFlowNetwork::build(&graph, 1, (slots / 2) as i64);
    let flow = pfn.network.max_flow();
    if flow.value != graph.o_count() as i64 {
        return Ok(IdentifiabilityVerdict::failure(
            mode, slots, flow.value, t_max,
        ));
    }
    let classes = extract_partition(&graph, &pfn, &flow, slots)?;
    let mut partition_out = Vec::with_capacity(classes.len());
    let mut matchings = Vec::new();
    for class in &classes {
        let mut buses: Vec<usize> = class.iter().map(|&(o_idx, _)| graph.o_buses[o_idx]).collect();
        buses.sort_unstable();
        partition_out.push(buses);
        for &(o_idx, right_idx) in class {
            let right = graph.right[right_idx];
            matchings.push(MatchEdge {
                o: graph.o_buses[o_idx],
                m: right.bus,
                copy: right.copy,
            });
        }
    }
    Ok(IdentifiabilityVerdict {
        success: true,
        mode,
        slots,
        flow_value: flow.value,
        t_max,
        partition: partition_out,
        matchings,
    })
}

/// Decomposes a successful flow into `slots / 2` subsets, each carrying a
/// matching of its non-metered buses into distinct metered-side nodes.
///
/// A metered-side node serving d non-metered buses forces those buses into
/// d distinct subsets, so the flow edges are spread over the subsets by a
/// second, size-balanced assignment flow: subset sizes differ by at most
/// one, which keeps the per-block coupling-equation counts uniform.
pub fn extract_partition(
    graph: &BipartiteGridGraph,
    pfn: &ProbingFlowNetwork,
    flow: &FlowResult,
    slots: usize,
) -> Result<Vec<Vec<(usize, usize)>>> {
    let o_count = pfn.o_count();
    let k_classes = slots / 2;
    let pairs = pfn.used_pairs(flow);
    if pairs.len() != o_count {
        return Err(Error::Internal(format!(
            "flow is not an assignment: {} used edges for {} non-metered buses",
            pairs.len(),
            o_count
        )));
    }
    let mut partners: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for &(o_idx, right_idx) in &pairs {
        partners.entry(right_idx).or_default().push(o_idx);
    }
    for list in partners.values_mut() {
        list.sort_unstable();
        if list.len() > k_classes {
            return Err(Error::Internal(
                "flow exceeds the per-node subset capacity".into(),
            ));
        }
    }

    // Balanced subset sizes: |O|/K rounded either way.
    let base = o_count / k_classes;
    let extra = o_count % k_classes;
    let sizes: Vec<i64> = (0..k_classes)
        .map(|k| (base + usize::from(k < extra)) as i64)
        .collect();

    // Transportation assignment: right node -> subset, one unit per pair,
    // exact subset sizes on the sink side.
    let right_ids: Vec<usize> = partners.keys().copied().collect();
    let source = 0usize;
    let sink = 1 + right_ids.len() + k_classes;
    let mut assign = FlowNetwork::new(sink + 1, source, sink);
    for (ri, &right_idx) in right_ids.iter().enumerate() {
        assign.add_edge(source, 1 + ri, partners[&right_idx].len() as i64);
    }
    let mut class_edges = Vec::new();
    for ri in 0..right_ids.len() {
        for k in 0..k_classes {
            let e = assign.add_edge(1 + ri, 1 + right_ids.len() + k, 1);
            class_edges.push((ri, k, e));
        }
    }
    for (k, &size) in sizes.iter().enumerate() {
        assign.add_edge(1 + right_ids.len() + k, sink, size);
    }
    let assign_flow = assign.max_flow();
    if assign_flow.value != o_count as i64 {
        return Err(Error::Internal(
            "balanced subset assignment is infeasible".into(),
        ));
    }

    let mut classes: Vec<Vec<(usize, usize)>> = vec![Vec::new(); k_classes];
    let mut cursor: std::collections::BTreeMap<usize, usize> = Default::default();
    for &(ri, k, e) in &class_edges {
        if assign_flow.edge_flows[e] > 0 {
            let right_idx = right_ids[ri];
            let next = cursor.entry(right_idx).or_insert(0);
            let o_idx = partners[&right_idx][*next];
            *next += 1;
            classes[k].push((o_idx, right_idx));
        }
    }
    for class in &mut classes {
        class.sort_unstable();
    }

    // Certificate sanity: every class is a matching on grid-graph edges
    // and the classes cover each non-metered bus exactly once.
    let mut covered = vec![0usize; o_count];
    for class in &classes {
        let mut used_right = std::collections::BTreeSet::new();
        for &(o_idx, right_idx) in class {
            covered[o_idx] += 1;
            if !graph.has_edge(o_idx, right_idx) {
                return Err(Error::Internal(
                    "matched pair is not a grid-graph edge".into(),
                ));
            }
            if !used_right.insert(right_idx) {
                return Err(Error::Internal(
                    "subset matching reuses a metered-side node".into(),
                ));
            }
        }
    }
    if covered.iter().any(|&c| c != 1) {
        return Err(Error::Internal(
            "subsets do not partition the non-metered buses".into(),
        ));
    }
    Ok(classes)
}

/// Runs the test loop T = 2, 4, ... up to the slot bound and returns the
/// first success, or the failure verdict at the bound.
pub fn search_min_slots(
    feeder: &FeederGraph,
    partition: &BusPartition,
    mode: DataMode,
) -> Result<IdentifiabilityVerdict> {
    let t_max = max_useful_slots(feeder, partition, mode);
    let mut slots = 2;
    let mut last = None;
    while slots <= t_max {
        let verdict = test_for_slots(feeder, partition, mode, slots)?;
        if verdict.success {
            return Ok(verdict);
        }
        last = Some(verdict);
        slots += 2;
    }
    Ok(last.unwrap_or_else(|| {
        // Bound below 2 never happens (clamped), but keep a sane fallback.
        IdentifiabilityVerdict::failure(mode, 2, 0, t_max)
    }))
}

/// Single-slot test. Phasor data: every non-metered bus must match one
/// unique metered bus. Non-phasor data: every non-metered bus must match
/// two unique metered buses, encoded as a source capacity of 2 with
/// unit-capacity metered nodes.
pub fn test_single_slot(
    feeder: &FeederGraph,
    partition: &BusPartition,
    mode: DataMode,
) -> Result<IdentifiabilityVerdict> {
    // Both variants match into the metered buses themselves (no copies).
    let graph = build_bipartite_grid_graph(feeder, partition, DataMode::NonPhasor);
    let (source_cap, target) = match mode {
        DataMode::Phasor => (1, graph.o_count() as i64),
        DataMode::NonPhasor => (2, 2 * graph.o_count() as i64),
    };
    let pfn = ProbingFlowNetwork::build(&graph, source_cap, 1);
    let flow = pfn.network.max_flow();
    let success = flow.value == target;
    let mut verdict = IdentifiabilityVerdict {
        success,
        mode,
        slots: 1,
        flow_value: flow.value,
        t_max: 1,
        partition: Vec::new(),
        matchings: Vec::new(),
    };
    if success {
        verdict.partition = vec![graph.o_buses.clone()];
        verdict.matchings = pfn
            .used_pairs(&flow)
            .into_iter()
            .map(|(o_idx, right_idx)| MatchEdge {
                o: graph.o_buses[o_idx],
                m: graph.right[right_idx].bus,
                copy: false,
            })
            .collect();
    }
    Ok(verdict)
}
