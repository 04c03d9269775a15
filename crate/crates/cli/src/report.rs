//! Report serialization and table rendering. JSON reports are written
//! atomically and deterministically (sorted keys), so identical inputs and
//! seeds give byte-identical files.

use anyhow::{Context, Result};
use gridprobe_core::feeder::FeederGraph;
use gridprobe_core::identify::{DataMode, IdentifiabilityVerdict};
use gridprobe_core::probing::{ProbingDataset, RecoveryResult};
use gridprobe_core::zip::ZipFit;
use gridprobe_core::Error as CoreError;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub fn mode_str(mode: DataMode) -> &'static str {
    match mode {
        DataMode::Phasor => "phasor",
        DataMode::NonPhasor => "non_phasor",
    }
}

/// Writes the JSON report to `out` (atomically) or stdout, then prints the
/// table when `pretty` is set.
pub fn emit(value: &serde_json::Value, out: Option<&Path>, pretty: bool, table: String) -> Result<()> {
    let json = serde_json::to_string_pretty(value)?;
    match out {
        Some(path) => {
            let tmp = path.with_extension("tmp");
            std::fs::write(&tmp, format!("{json}\n"))
                .with_context(|| format!("writing {}", tmp.display()))?;
            std::fs::rename(&tmp, path)
                .with_context(|| format!("renaming into {}", path.display()))?;
        }
        None => println!("{json}"),
    }
    if pretty && !table.is_empty() {
        print!("{table}");
    }
    Ok(())
}

pub fn render_verdict(verdict: &IdentifiabilityVerdict) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{} probing, T = {}: {}\n",
        mode_str(verdict.mode),
        verdict.slots,
        if verdict.success {
            "certified"
        } else {
            "not certified (a failure here means not certified, not impossible)"
        }
    ));
    out.push_str(&format!(
        "flow {} / {} non-metered buses, T_max {}\n",
        verdict.flow_value,
        verdict.partition.iter().map(Vec::len).sum::<usize>(),
        verdict.t_max
    ));
    for (k, subset) in verdict.partition.iter().enumerate() {
        let pairs: Vec<String> = subset
            .iter()
            .filter_map(|&o| {
                verdict.matchings.iter().find(|e| e.o == o).map(|e| {
                    format!("{} -> {}{}", e.o, e.m, if e.copy { "'" } else { "" })
                })
            })
            .collect();
        out.push_str(&format!("subset {}: {}\n", k + 1, pairs.join(", ")));
    }
    out
}

pub fn recovery_report(
    dataset: &ProbingDataset,
    mode: DataMode,
    result: &RecoveryResult,
    truth: Option<&std::collections::BTreeMap<usize, (f64, f64)>>,
) -> serde_json::Value {
    let mut loads = Vec::new();
    let mut max_abs_error: Option<f64> = None;
    for (&bus, &(p_est, q_est)) in &result.loads {
        let mut entry = serde_json::json!({
            "bus": bus,
            "p_est": p_est,
            "q_est": q_est,
        });
        if let Some(truth) = truth {
            if let Some(&(p_true, q_true)) = truth.get(&bus) {
                let err = (p_est - p_true).abs().max((q_est - q_true).abs());
                max_abs_error = Some(max_abs_error.unwrap_or(0.0).max(err));
                let obj = entry.as_object_mut().unwrap();
                obj.insert("p_true".into(), serde_json::json!(p_true));
                obj.insert("q_true".into(), serde_json::json!(q_true));
                obj.insert("abs_error".into(), serde_json::json!(err));
            }
        }
        loads.push(entry);
    }
    let mut value = serde_json::json!({
        "mode": mode_str(mode),
        "T": dataset.slot_count(),
        "converged": result.converged,
        "iterations": result.iterations,
        "residual": result.residual_norm,
        "loads": loads,
    });
    if let Some(err) = max_abs_error {
        value
            .as_object_mut()
            .unwrap()
            .insert("max_abs_error".into(), serde_json::json!(err));
    }
    value
}

pub fn render_recovery(
    result: &RecoveryResult,
    truth: Option<&std::collections::BTreeMap<usize, (f64, f64)>>,
) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "recovery {} after {} iterations, residual {:.3e}\n",
        if result.converged {
            "converged"
        } else {
            "did not converge"
        },
        result.iterations,
        result.residual_norm
    ));
    out.push_str("bus        p_est        q_est");
    if truth.is_some() {
        out.push_str("       p_true       q_true    abs_error");
    }
    out.push('\n');
    for (&bus, &(p, q)) in &result.loads {
        out.push_str(&format!("{bus:<4} {p:>12.8} {q:>12.8}"));
        if let Some(truth) = truth {
            if let Some(&(pt, qt)) = truth.get(&bus) {
                let err = (p - pt).abs().max((q - qt).abs());
                out.push_str(&format!(" {pt:>12.8} {qt:>12.8} {err:>12.3e}"));
            }
        }
        out.push('\n');
    }
    out
}

/// Per-bus voltage-magnitude and injection series, the input format of
/// fit-zip.
#[derive(Debug, Serialize, Deserialize)]
pub struct SeriesFile {
    pub buses: Vec<SeriesEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SeriesEntry {
    pub bus: usize,
    pub u: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

/// Builds the fit-zip input series from recovered states: voltage
/// magnitudes and per-slot load estimates at every non-metered bus.
pub fn series_from(_feeder: &FeederGraph, result: &RecoveryResult) -> Result<serde_json::Value> {
    let mut buses = Vec::new();
    for (&bus, series) in &result.per_slot_loads {
        let u: Vec<f64> = result
            .states
            .iter()
            .map(|state| state.phasor(bus).norm())
            .collect();
        buses.push(SeriesEntry {
            bus,
            u,
            p: series.iter().map(|&(p, _)| p).collect(),
            q: series.iter().map(|&(_, q)| q).collect(),
        });
    }
    Ok(serde_json::to_value(SeriesFile { buses })?)
}

fn fit_to_json(fit: &Result<ZipFit, CoreError>) -> (serde_json::Value, bool) {
    match fit {
        Ok(fit) => (
            serde_json::json!({
                "alpha": fit.coefficients.alpha,
                "beta": fit.coefficients.beta,
                "gamma": fit.coefficients.gamma,
                "residual": fit.residual,
            }),
            false,
        ),
        Err(_) => (serde_json::Value::Null, true),
    }
}

pub fn zip_bus_report(
    entry: &SeriesEntry,
    fit_p: Result<ZipFit, CoreError>,
    fit_q: Result<ZipFit, CoreError>,
) -> serde_json::Value {
    let diag = gridprobe_core::vandermonde_conditioning(&entry.u).ok();
    let (p_json, p_bad) = fit_to_json(&fit_p);
    let (q_json, q_bad) = fit_to_json(&fit_q);
    let condition = diag
        .as_ref()
        .map(|d| d.condition)
        .filter(|c| c.is_finite());
    serde_json::json!({
        "bus": entry.bus,
        "p_fit": p_json,
        "q_fit": q_json,
        "determinant": diag.as_ref().and_then(|d| d.determinant),
        "condition": condition,
        "ill_posed": p_bad || q_bad,
    })
}

pub fn render_zip(value: &serde_json::Value) -> String {
    let mut out = String::new();
    out.push_str("bus   ill-posed   determinant     condition\n");
    if let Some(buses) = value["buses"].as_array() {
        for bus in buses {
            let det = bus["determinant"]
                .as_f64()
                .map(|d| format!("{d:.3e}"))
                .unwrap_or_else(|| "-".into());
            let cond = bus["condition"]
                .as_f64()
                .map(|c| format!("{c:.3e}"))
                .unwrap_or_else(|| "inf".into());
            out.push_str(&format!(
                "{:<5} {:<11} {det:>12} {cond:>13}\n",
                bus["bus"],
                bus["ill_posed"].as_bool().unwrap_or(false),
            ));
        }
    }
    out
}
