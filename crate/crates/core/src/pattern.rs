//! Labeled sparsity patterns for the stacked probing Jacobian, plus a
//! Matrix-Market-style coordinate text format with a label header.

use crate::error::{Error, Result};
use crate::feeder::{BusPartition, GraphPattern};
use crate::identify::DataMode;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Equation family of one pattern row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    /// Squared-magnitude metering equation.
    U,
    /// Angle metering equation (phasor mode only).
    Theta,
    /// Active-injection metering equation.
    PInj,
    /// Reactive-injection metering equation.
    QInj,
    /// Active-power coupling equation between consecutive slots.
    PCouple,
    /// Reactive-power coupling equation between consecutive slots.
    QCouple,
}

impl RowKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RowKind::U => "u",
            RowKind::Theta => "theta",
            RowKind::PInj => "p",
            RowKind::QInj => "q",
            RowKind::PCouple => "p_couple",
            RowKind::QCouple => "q_couple",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "u" => RowKind::U,
            "theta" => RowKind::Theta,
            "p" => RowKind::PInj,
            "q" => RowKind::QInj,
            "p_couple" => RowKind::PCouple,
            "q_couple" => RowKind::QCouple,
            _ => return None,
        })
    }
}

/// Row label: equation kind, bus, and slot. For coupling rows `slot` is the
/// interface index t, meaning the row ties slots t and t + 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowLabel {
    pub kind: RowKind,
    pub bus: usize,
    pub slot: usize,
}

/// State component of one pattern column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColComponent {
    Vr,
    Vi,
}

impl ColComponent {
    pub fn as_str(self) -> &'static str {
        match self {
            ColComponent::Vr => "vr",
            ColComponent::Vi => "vi",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "vr" => ColComponent::Vr,
            "vi" => ColComponent::Vi,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ColLabel {
    pub comp: ColComponent,
    pub bus: usize,
    pub slot: usize,
}

/// Boolean matrix with labeled rows and columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsityPattern {
    pub rows: Vec<RowLabel>,
    pub cols: Vec<ColLabel>,
    /// Sorted (row, col) positions.
    pub nonzeros: Vec<(usize, usize)>,
    row_index: BTreeMap<RowLabel, usize>,
    col_index: BTreeMap<ColLabel, usize>,
}

impl SparsityPattern {
    pub fn new(
        rows: Vec<RowLabel>,
        cols: Vec<ColLabel>,
        mut nonzeros: Vec<(usize, usize)>,
    ) -> Result<Self> {
        nonzeros.sort_unstable();
        nonzeros.dedup();
        let row_index: BTreeMap<RowLabel, usize> =
            rows.iter().enumerate().map(|(i, &l)| (l, i)).collect();
        let col_index: BTreeMap<ColLabel, usize> =
            cols.iter().enumerate().map(|(i, &l)| (l, i)).collect();
        if row_index.len() != rows.len() || col_index.len() != cols.len() {
            return Err(Error::InvalidInput("duplicate pattern labels".into()));
        }
        if let Some(&(r, c)) = nonzeros
            .iter()
            .find(|&&(r, c)| r >= rows.len() || c >= cols.len())
        {
            return Err(Error::InvalidInput(format!(
                "nonzero ({r}, {c}) out of bounds"
            )));
        }
        Ok(SparsityPattern {
            rows,
            cols,
            nonzeros,
            row_index,
            col_index,
        })
    }

    pub fn nrows(&self) -> usize {
        self.rows.len()
    }

    pub fn ncols(&self) -> usize {
        self.cols.len()
    }

    pub fn row_of(&self, label: RowLabel) -> Option<usize> {
        self.row_index.get(&label).copied()
    }

    pub fn col_of(&self, label: ColLabel) -> Option<usize> {
        self.col_index.get(&label).copied()
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.nonzeros.binary_search(&(row, col)).is_ok()
    }

    /// Adjacency from columns to rows, the orientation used for the
    /// column-perfect-matching test.
    pub fn col_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.ncols()];
        for &(r, c) in &self.nonzeros {
            adj[c].push(r);
        }
        adj
    }

    /// Per-row nonzero counts.
    pub fn row_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.nrows()];
        for &(r, _) in &self.nonzeros {
            counts[r] += 1;
        }
        counts
    }

    /// Serializes to coordinate text with `%label` header lines (1-based
    /// indices, as in Matrix Market files).
    pub fn to_coordinate_text(&self) -> String {
        let mut out = String::new();
        out.push_str("%%MatrixMarket matrix coordinate pattern general\n");
        for (i, label) in self.rows.iter().enumerate() {
            let _ = writeln!(
                out,
                "%label row {} {} {} {}",
                i + 1,
                label.kind.as_str(),
                label.bus,
                label.slot
            );
        }
        for (i, label) in self.cols.iter().enumerate() {
            let _ = writeln!(
                out,
                "%label col {} {} {} {}",
                i + 1,
                label.comp.as_str(),
                label.bus,
                label.slot
            );
        }
        let _ = writeln!(
            out,
            "{} {} {}",
            self.nrows(),
            self.ncols(),
            self.nonzeros.len()
        );
        for &(r, c) in &self.nonzeros {
            let _ = writeln!(out, "{} {}", r + 1, c + 1);
        }
        out
    }

    /// Parses coordinate text. `%label` lines are applied when present;
    /// rows and columns without one get a placeholder label so that plain
    /// pattern files remain loadable.
    pub fn from_coordinate_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().peekable();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty pattern file".into()))?;
        if !header.starts_with("%%MatrixMarket") || !header.contains("coordinate") {
            return Err(Error::Parse(
                "expected a MatrixMarket coordinate header".into(),
            ));
        }
        let mut row_labels: BTreeMap<usize, RowLabel> = BTreeMap::new();
        let mut col_labels: BTreeMap<usize, ColLabel> = BTreeMap::new();
        let mut dims: Option<(usize, usize, usize)> = None;
        let mut nonzeros = Vec::new();
        for line in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("%label ") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                if parts.len() != 5 {
                    return Err(Error::Parse(format!("bad label line: {line}")));
                }
                let index: usize = parts[1]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad label index: {line}")))?;
                let bus: usize = parts[3]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad label bus: {line}")))?;
                let slot: usize = parts[4]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad label slot: {line}")))?;
                match parts[0] {
                    "row" => {
                        let kind = RowKind::parse(parts[2])
                            .ok_or_else(|| Error::Parse(format!("bad row kind: {line}")))?;
                        row_labels.insert(index - 1, RowLabel { kind, bus, slot });
                    }
                    "col" => {
                        let comp = ColComponent::parse(parts[2])
                            .ok_or_else(|| Error::Parse(format!("bad col component: {line}")))?;
                        col_labels.insert(index - 1, ColLabel { comp, bus, slot });
                    }
                    other => return Err(Error::Parse(format!("bad label side: {other}"))),
                }
                continue;
            }
            if line.starts_with('%') {
                continue;
            }
            let nums: Vec<usize> = line
                .split_whitespace()
                .map(|tok| tok.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::Parse(format!("bad coordinate line: {line}")))?;
            if dims.is_none() {
                if nums.len() != 3 {
                    return Err(Error::Parse("size line must have three fields".into()));
                }
                dims = Some((nums[0], nums[1], nums[2]));
            } else {
                if nums.len() < 2 || nums[0] == 0 || nums[1] == 0 {
                    return Err(Error::Parse(format!("bad coordinate line: {line}")));
                }
                nonzeros.push((nums[0] - 1, nums[1] - 1));
            }
        }
        let (nrows, ncols, nnz) =
            dims.ok_or_else(|| Error::Parse("missing size line".into()))?;
        if nonzeros.len() != nnz {
            return Err(Error::Parse(format!(
                "size line promises {nnz} entries, found {}",
                nonzeros.len()
            )));
        }
        let rows = (0..nrows)
            .map(|i| {
                row_labels.get(&i).copied().unwrap_or(RowLabel {
                    kind: RowKind::U,
                    bus: i,
                    slot: 0,
                })
            })
            .collect();
        let cols = (0..ncols)
            .map(|i| {
                col_labels.get(&i).copied().unwrap_or(ColLabel {
                    comp: ColComponent::Vr,
                    bus: i,
                    slot: 0,
                })
            })
            .collect();
        SparsityPattern::new(rows, cols, nonzeros)
    }
}

/// Builds the sparsity pattern of the stacked probing Jacobian for a
/// partition, coupling pattern, slot count, and data mode.
///
/// Metering rows per slot use the [I I] pattern for magnitudes (and angles
/// in phasor mode) and the coupling pattern over both column halves for the
/// injections. Coupling rows repeat the injection pattern of a non-metered
/// bus over the column blocks of two consecutive slots.
pub fn probing_jacobian_pattern(
    partition: &BusPartition,
    gp: &GraphPattern,
    slots: usize,
    mode: DataMode,
) -> Result<SparsityPattern> {
    if slots == 0 {
        return Err(Error::InvalidInput("slot count must be >= 1".into()));
    }
    let n = gp.bus_count();
    let block = 2 * n;
    let col_of = |slot: usize, comp: ColComponent, bus: usize| -> usize {
        slot * block
            + match comp {
                ColComponent::Vr => 0,
                ColComponent::Vi => n,
            }
            + bus
    };

    let mut cols = Vec::with_capacity(slots * block);
    for slot in 0..slots {
        for comp in [ColComponent::Vr, ColComponent::Vi] {
            for bus in 0..n {
                cols.push(ColLabel { comp, bus, slot });
            }
        }
    }

    let metering_kinds: &[RowKind] = match mode {
        DataMode::Phasor => &[RowKind::U, RowKind::Theta, RowKind::PInj, RowKind::QInj],
        DataMode::NonPhasor => &[RowKind::U, RowKind::PInj, RowKind::QInj],
    };

    let mut rows = Vec::new();
    let mut nonzeros = Vec::new();
    for slot in 0..slots {
        for &kind in metering_kinds {
            for &bus in &partition.metered {
                let row = rows.len();
                rows.push(RowLabel { kind, bus, slot });
                match kind {
                    RowKind::U | RowKind::Theta => {
                        nonzeros.push((row, col_of(slot, ColComponent::Vr, bus)));
                        nonzeros.push((row, col_of(slot, ColComponent::Vi, bus)));
                    }
                    _ => {
                        for &m in gp.coupled(bus) {
                            nonzeros.push((row, col_of(slot, ColComponent::Vr, m)));
                            nonzeros.push((row, col_of(slot, ColComponent::Vi, m)));
                        }
                    }
                }
            }
        }
    }
    for interface in 0..slots.saturating_sub(1) {
        for kind in [RowKind::PCouple, RowKind::QCouple] {
            for &bus in &partition.non_metered {
                let row = rows.len();
                rows.push(RowLabel {
                    kind,
                    bus,
                    slot: interface,
                });
                for slot in [interface, interface + 1] {
                    for &m in gp.coupled(bus) {
                        nonzeros.push((row, col_of(slot, ColComponent::Vr, m)));
                        nonzeros.push((row, col_of(slot, ColComponent::Vi, m)));
                    }
                }
            }
        }
    }
    SparsityPattern::new(rows, cols, nonzeros)
}
