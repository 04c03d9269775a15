//! Feeder graph model, bus admittance construction, and probing-setup
//! validation.
//!
//! All electrical quantities are per-unit. Feeder files declare a power and
//! voltage base but computations never consume it.

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

/// A single bus. Bus 0 is always the substation.
#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: usize,
    pub is_substation: bool,
    /// Shunt admittance to ground, per-unit siemens.
    pub shunt: Complex64,
}

/// A distribution line between two buses.
#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Series admittance, per-unit.
    pub series: Complex64,
    /// Optional shunt half at the `from` end.
    pub shunt_from: Complex64,
    /// Optional shunt half at the `to` end.
    pub shunt_to: Complex64,
}

/// Validated feeder: connected, substation at bus 0, contiguous ids,
/// parallel lines already aggregated.
#[derive(Debug, Clone, PartialEq)]
pub struct FeederGraph {
    buses: Vec<Bus>,
    lines: Vec<Line>,
    /// Declared (MVA, kV) base from the file; carried through but never
    /// used in computations.
    base: (f64, f64),
}

/// Complex bus admittance matrix Y = G + jB, stored as explicit entries on
/// the structural pattern (graph adjacency plus diagonal). Entries stay in
/// the map even when one real component is numerically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    n_buses: usize,
    entries: BTreeMap<(usize, usize), Complex64>,
}

/// Structural nonzero pattern of the admittance matrix: for each bus, the
/// sorted set of buses it couples to (neighbors plus itself).
#[derive(Debug, Clone, PartialEq)]
pub struct GraphPattern {
    neighbors: Vec<Vec<usize>>,
}

/// Split of the buses into metered (M, substation included) and
/// non-metered (O) sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusPartition {
    pub metered: Vec<usize>,
    pub non_metered: Vec<usize>,
}

#[derive(Deserialize)]
struct FeederFile {
    #[allow(dead_code)]
    base: BaseSpec,
    buses: Vec<BusSpec>,
    lines: Vec<LineSpec>,
}

#[derive(Deserialize, Serialize)]
struct BaseSpec {
    mva: f64,
    kv: f64,
}

#[derive(Deserialize)]
struct BusSpec {
    id: usize,
    #[serde(default)]
    substation: bool,
    #[serde(default = "zero_pair")]
    shunt: [f64; 2],
}

#[derive(Deserialize)]
struct LineSpec {
    from: usize,
    to: usize,
    y: Option<[f64; 2]>,
    z: Option<[f64; 2]>,
    #[serde(default = "zero_pair")]
    shunt_from: [f64; 2],
    #[serde(default = "zero_pair")]
    shunt_to: [f64; 2],
}

fn zero_pair() -> [f64; 2] {
    [0.0, 0.0]
}

impl FeederGraph {
    /// Builds a feeder from bus and line lists, aggregating parallel lines
    /// and checking every structural invariant.
    pub fn new(mut buses: Vec<Bus>, lines: Vec<Line>) -> Result<Self> {
        if buses.len() < 2 {
            return Err(Error::InvalidFeeder("need at least 2 buses".into()));
        }
        buses.sort_by_key(|b| b.id);
        for (idx, bus) in buses.iter().enumerate() {
            if bus.id != idx {
                return Err(Error::InvalidFeeder(format!(
                    "bus ids must be contiguous 0..N, found gap at {}",
                    bus.id
                )));
            }
        }
        let subs: Vec<usize> = buses.iter().filter(|b| b.is_substation).map(|b| b.id).collect();
        match subs.as_slice() {
            [0] => {}
            [] => return Err(Error::InvalidFeeder("no substation bus".into())),
            [id] => {
                return Err(Error::InvalidFeeder(format!(
                    "substation must be bus 0, found bus {id}"
                )))
            }
            _ => {
                return Err(Error::InvalidFeeder(format!(
                    "exactly one substation expected, found {}",
                    subs.len()
                )))
            }
        }

        let n = buses.len();
        // Aggregate parallel lines by adding admittances; the unordered
        // pair keyed map also rejects self-loops up front.
        let mut agg: BTreeMap<(usize, usize), Line> = BTreeMap::new();
        for line in lines {
            if line.from == line.to {
                return Err(Error::InvalidFeeder(format!(
                    "self-loop at bus {}",
                    line.from
                )));
            }
            if line.from >= n || line.to >= n {
                return Err(Error::InvalidFeeder(format!(
                    "line ({}, {}) references unknown bus",
                    line.from, line.to
                )));
            }
            let key = (line.from.min(line.to), line.from.max(line.to));
            match agg.entry(key) {
                std::collections::btree_map::Entry::Vacant(e) => {
                    let mut l = line;
                    if l.from > l.to {
                        std::mem::swap(&mut l.from, &mut l.to);
                        std::mem::swap(&mut l.shunt_from, &mut l.shunt_to);
                    }
                    e.insert(l);
                }
                std::collections::btree_map::Entry::Occupied(mut e) => {
                    let existing = e.get_mut();
                    existing.series += line.series;
                    if line.from == existing.from {
                        existing.shunt_from += line.shunt_from;
                        existing.shunt_to += line.shunt_to;
                    } else {
                        existing.shunt_from += line.shunt_to;
                        existing.shunt_to += line.shunt_from;
                    }
                }
            }
        }
        let lines: Vec<Line> = agg.into_values().collect();
        for line in &lines {
            if line.series == Complex64::ZERO {
                return Err(Error::InvalidFeeder(format!(
                    "line ({}, {}) has zero series admittance",
                    line.from, line.to
                )));
            }
        }

        let feeder = FeederGraph {
            buses,
            lines,
            base: (1.0, 1.0),
        };
        if let Some(bus) = feeder.first_unreachable() {
            return Err(Error::InvalidFeeder(format!(
                "disconnected: bus {bus} unreachable from substation"
            )));
        }
        Ok(feeder)
    }

    fn first_unreachable(&self) -> Option<usize> {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for line in &self.lines {
            adj[line.from].push(line.to);
            adj[line.to].push(line.from);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.iter().position(|&s| !s)
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    /// Number of buses, N + 1.
    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    /// Sorted ids of buses adjacent to `bus`.
    pub fn neighbors(&self, bus: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .lines
            .iter()
            .filter_map(|l| {
                if l.from == bus {
                    Some(l.to)
                } else if l.to == bus {
                    Some(l.from)
                } else {
                    None
                }
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// Serializes back to the feeder file schema. Series admittances are
    /// written in admittance form regardless of how they were specified.
    pub fn to_json(&self) -> String {
        let buses: Vec<serde_json::Value> = self
            .buses
            .iter()
            .map(|b| {
                serde_json::json!({
                    "id": b.id,
                    "substation": b.is_substation,
                    "shunt": [b.shunt.re, b.shunt.im],
                })
            })
            .collect();
        let lines: Vec<serde_json::Value> = self
            .lines
            .iter()
            .map(|l| {
                let mut v = serde_json::json!({
                    "from": l.from,
                    "to": l.to,
                    "y": [l.series.re, l.series.im],
                });
                if l.shunt_from != Complex64::ZERO || l.shunt_to != Complex64::ZERO {
                    let obj = v.as_object_mut().unwrap();
                    obj.insert(
                        "shunt_from".into(),
                        serde_json::json!([l.shunt_from.re, l.shunt_from.im]),
                    );
                    obj.insert(
                        "shunt_to".into(),
                        serde_json::json!([l.shunt_to.re, l.shunt_to.im]),
                    );
                }
                v
            })
            .collect();
        let value = serde_json::json!({
            "base": { "mva": self.base.0, "kv": self.base.1 },
            "buses": buses,
            "lines": lines,
        });
        serde_json::to_string_pretty(&value).expect("feeder serializes")
    }

    /// Structural coupling pattern: adjacency plus diagonal.
    pub fn pattern(&self) -> GraphPattern {
        let n = self.bus_count();
        let mut neighbors = vec![Vec::new(); n];
        for (idx, entry) in neighbors.iter_mut().enumerate() {
            entry.push(idx);
        }
        for line in &self.lines {
            neighbors[line.from].push(line.to);
            neighbors[line.to].push(line.from);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }
        GraphPattern { neighbors }
    }
}

impl GraphPattern {
    pub fn bus_count(&self) -> usize {
        self.neighbors.len()
    }

    /// Buses structurally coupled to `bus` (including `bus` itself), sorted.
    pub fn coupled(&self, bus: usize) -> &[usize] {
        &self.neighbors[bus]
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.neighbors[row].binary_search(&col).is_ok()
    }
}

/// Loads and validates a feeder from the JSON schema:
/// `{"base": {"mva", "kv"}, "buses": [{"id", "substation", "shunt": [g, b]}],
///  "lines": [{"from", "to", "y": [g, b] | "z": [r, x]}]}`.
pub fn load_feeder(path: impl AsRef<Path>) -> Result<FeederGraph> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| Error::Parse(format!("{}: {e}", path.as_ref().display())))?;
    parse_feeder(&text)
}

/// Parses a feeder from JSON text; see [`load_feeder`].
pub fn parse_feeder(text: &str) -> Result<FeederGraph> {
    let file: FeederFile = serde_json::from_str(text)?;
    let buses = file
        .buses
        .into_iter()
        .map(|b| Bus {
            id: b.id,
            is_substation: b.substation,
            shunt: Complex64::new(b.shunt[0], b.shunt[1]),
        })
        .collect();
    let lines = file
        .lines
        .into_iter()
        .map(|l| {
            let series = match (l.y, l.z) {
                (Some(y), None) => Complex64::new(y[0], y[1]),
                (None, Some(z)) => {
                    let z = Complex64::new(z[0], z[1]);
                    if z == Complex64::ZERO {
                        return Err(Error::InvalidFeeder(format!(
                            "line ({}, {}) has zero impedance",
                            l.from, l.to
                        )));
                    }
                    z.inv()
                }
                (Some(_), Some(_)) => {
                    return Err(Error::Parse(format!(
                        "line ({}, {}) specifies both y and z",
                        l.from, l.to
                    )))
                }
                (None, None) => {
                    return Err(Error::Parse(format!(
                        "line ({}, {}) needs either y or z",
                        l.from, l.to
                    )))
                }
            };
            Ok(Line {
                from: l.from,
                to: l.to,
                series,
                shunt_from: Complex64::new(l.shunt_from[0], l.shunt_from[1]),
                shunt_to: Complex64::new(l.shunt_to[0], l.shunt_to[1]),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut feeder = FeederGraph::new(buses, lines)?;
    feeder.base = (file.base.mva, file.base.kv);
    Ok(feeder)
}

/// Standard admittance construction: off-diagonal Y_nm = -y_series(n, m),
/// diagonal Y_nn = sum of adjacent series admittances plus all shunts at n.
pub fn build_admittance(feeder: &FeederGraph) -> AdmittanceMatrix {
    let n = feeder.bus_count();
    let mut entries = BTreeMap::new();
    for bus in feeder.buses() {
        entries.insert((bus.id, bus.id), bus.shunt);
    }
    for line in feeder.lines() {
        let (a, b) = (line.from, line.to);
        *entries.get_mut(&(a, a)).unwrap() += line.series + line.shunt_from;
        *entries.get_mut(&(b, b)).unwrap() += line.series + line.shunt_to;
        entries.insert((a, b), -line.series);
        entries.insert((b, a), -line.series);
    }
    AdmittanceMatrix {
        n_buses: n,
        entries,
    }
}

impl AdmittanceMatrix {
    pub fn bus_count(&self) -> usize {
        self.n_buses
    }

    /// Y_nm; zero when (n, m) is outside the structural pattern.
    pub fn get(&self, n: usize, m: usize) -> Complex64 {
        self.entries.get(&(n, m)).copied().unwrap_or(Complex64::ZERO)
    }

    /// Stored entries in row-major order, including structural zeros.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        self.entries.iter().map(|(&(n, m), &y)| (n, m, y))
    }

    /// Structural entries in row `n`, sorted by column.
    pub fn row(&self, n: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        self.entries
            .range((n, 0)..=(n, usize::MAX))
            .map(|(&(_, m), &y)| (m, y))
    }

    /// y = Y x.
    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::ZERO; self.n_buses];
        for (&(n, m), &y) in &self.entries {
            out[n] += y * x[m];
        }
        out
    }

    pub fn off_diagonal_count(&self) -> usize {
        self.entries.keys().filter(|(n, m)| n != m).count()
    }

    /// Maximum |row sum|; zero (up to rounding) for a pure-line network.
    pub fn max_abs_row_sum(&self) -> f64 {
        let mut sums = vec![Complex64::ZERO; self.n_buses];
        for (&(n, _), &y) in &self.entries {
            sums[n] += y;
        }
        sums.iter().map(|s| s.norm()).fold(0.0, f64::max)
    }
}

/// Checks all partition invariants against the feeder and returns the
/// partition with both sides sorted.
pub fn validate_partition(
    feeder: &FeederGraph,
    partition: &BusPartition,
) -> Result<BusPartition> {
    let n = feeder.bus_count();
    let metered: BTreeSet<usize> = partition.metered.iter().copied().collect();
    let non_metered: BTreeSet<usize> = partition.non_metered.iter().copied().collect();
    if let Some(&bus) = metered.intersection(&non_metered).next() {
        return Err(Error::PartitionOverlap { bus });
    }
    if !metered.contains(&0) {
        return Err(Error::SubstationNotMetered);
    }
    if metered.len() + non_metered.len() != n {
        return Err(Error::PartitionCoverage(format!(
            "{} metered + {} non-metered != {} buses",
            metered.len(),
            non_metered.len(),
            n
        )));
    }
    if let Some(&bus) = metered.union(&non_metered).find(|&&b| b >= n) {
        return Err(Error::PartitionCoverage(format!("unknown bus {bus}")));
    }
    Ok(BusPartition {
        metered: metered.into_iter().collect(),
        non_metered: non_metered.into_iter().collect(),
    })
}

/// Loads a `{"metered": [...], "non_metered": [...]}` partition file and
/// validates it against the feeder.
pub fn load_partition(feeder: &FeederGraph, path: impl AsRef<Path>) -> Result<BusPartition> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| Error::Parse(format!("{}: {e}", path.as_ref().display())))?;
    let partition: BusPartition = serde_json::from_str(&text)?;
    validate_partition(feeder, &partition)
}
