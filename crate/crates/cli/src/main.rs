//! Command-line entry point tying the probing pipeline together.
//!
//! Exit codes: 0 for a certified/successful outcome, 2 for a negative
//! verdict, 1 for errors.

mod report;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use gridprobe_core::certify::{assign_coupling_equations, block_matching_check};
use gridprobe_core::feeder::{load_feeder, load_partition, BusPartition, FeederGraph};
use gridprobe_core::identify::{
    search_min_slots, test_for_slots, test_single_slot, DataMode,
};
use gridprobe_core::pattern::{probing_jacobian_pattern, SparsityPattern};
use gridprobe_core::probing::{
    recover_loads, simulate_probing, LoadModel, ProbingDataset, ProbingPlan, RecoveryResult,
};
use gridprobe_core::rank::generic_rank;
use gridprobe_core::zip::fit_zip;
use gridprobe_core::Error as CoreError;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "gridprobe",
    about = "Probing identifiability tests, certificates, and a noiseless recovery simulator for distribution feeders",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test whether a probing setup is certified and emit the verdict.
    Check {
        #[arg(long)]
        feeder: PathBuf,
        #[arg(long)]
        partition: PathBuf,
        #[arg(long, value_parser = parse_mode)]
        mode: DataMode,
        /// Slot count to test: an integer or "auto" for the search loop.
        #[arg(long = "T", default_value = "auto")]
        t: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also emit the block certificate and a generic-rank report.
        #[arg(long)]
        certify: bool,
        #[arg(long, default_value_t = 4)]
        trials: usize,
        #[arg(long)]
        pretty: bool,
    },
    /// Simulate noiseless probing and write the dataset.
    Simulate {
        #[arg(long)]
        feeder: PathBuf,
        #[arg(long)]
        partition: PathBuf,
        #[arg(long, value_parser = parse_mode)]
        mode: DataMode,
        #[arg(long)]
        loads: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recover non-metered loads from a dataset (or simulate then recover).
    Recover {
        #[arg(long)]
        feeder: PathBuf,
        #[arg(long)]
        partition: PathBuf,
        #[arg(long, value_parser = parse_mode)]
        mode: DataMode,
        /// Existing dataset file; omit to simulate from --loads and --plan.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        loads: Option<PathBuf>,
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Recover each slot independently (voltage-dependent loads).
        #[arg(long)]
        per_slot: bool,
        /// Write per-bus voltage/power series usable by fit-zip.
        #[arg(long)]
        series_out: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        pretty: bool,
    },
    /// Fit ZIP coefficients per bus from a voltage/power series file.
    FitZip {
        #[arg(long)]
        series: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        pretty: bool,
    },
    /// Structural plus numeric rank of a pattern file.
    Rank {
        #[arg(long)]
        pattern: PathBuf,
        #[arg(long, default_value_t = 4)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        pretty: bool,
    },
}

fn parse_mode(s: &str) -> std::result::Result<DataMode, String> {
    match s {
        "phasor" => Ok(DataMode::Phasor),
        "non-phasor" | "non_phasor" => Ok(DataMode::NonPhasor),
        other => Err(format!(
            "unknown mode '{other}' (expected phasor or non-phasor)"
        )),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    let code = match run(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            1
        }
    };
    std::process::exit(code);
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Check {
            feeder,
            partition,
            mode,
            t,
            seed,
            out,
            certify,
            trials,
            pretty,
        } => cmd_check(
            &feeder, &partition, mode, &t, seed, out.as_deref(), certify, trials, pretty,
        ),
        Command::Simulate {
            feeder,
            partition,
            mode,
            loads,
            plan,
            out,
        } => cmd_simulate(&feeder, &partition, mode, &loads, &plan, out.as_deref()),
        Command::Recover {
            feeder,
            partition,
            mode,
            dataset,
            loads,
            plan,
            per_slot,
            series_out,
            out,
            pretty,
        } => cmd_recover(
            &feeder,
            &partition,
            mode,
            dataset.as_deref(),
            loads.as_deref(),
            plan.as_deref(),
            per_slot,
            series_out.as_deref(),
            out.as_deref(),
            pretty,
        ),
        Command::FitZip { series, out, pretty } => cmd_fit_zip(&series, out.as_deref(), pretty),
        Command::Rank {
            pattern,
            trials,
            seed,
            out,
            pretty,
        } => cmd_rank(&pattern, trials, seed, out.as_deref(), pretty),
    }
}

fn load_setup(feeder: &Path, partition: &Path) -> Result<(FeederGraph, BusPartition)> {
    let feeder = load_feeder(feeder).context("loading feeder")?;
    let partition = load_partition(&feeder, partition).context("loading partition")?;
    Ok((feeder, partition))
}

#[allow(clippy::too_many_arguments)]
fn cmd_check(
    feeder_path: &Path,
    partition_path: &Path,
    mode: DataMode,
    t_arg: &str,
    seed: u64,
    out: Option<&Path>,
    certify: bool,
    trials: usize,
    pretty: bool,
) -> Result<i32> {
    let (feeder, partition) = load_setup(feeder_path, partition_path)?;
    let verdict = match t_arg {
        "auto" => search_min_slots(&feeder, &partition, mode)?,
        value => {
            let requested: usize = value
                .parse()
                .map_err(|_| anyhow!("--T must be an integer or 'auto', got '{value}'"))?;
            if requested == 1 {
                test_single_slot(&feeder, &partition, mode)?
            } else {
                let slots = if requested % 2 == 1 {
                    eprintln!(
                        "warning: odd slot count {requested} rounded to {}",
                        requested + 1
                    );
                    requested + 1
                } else {
                    requested
                };
                test_for_slots(&feeder, &partition, mode, slots)?
            }
        }
    };

    let mut value = serde_json::to_value(&verdict)?;
    if certify {
        let obj = value.as_object_mut().expect("verdict is an object");
        obj.insert("seed".into(), serde_json::json!(seed));
        if verdict.success && verdict.slots >= 2 {
            let assignment = assign_coupling_equations(&verdict, &partition)?;
            let gp = feeder.pattern();
            let cert = block_matching_check(&assignment, &verdict, &partition, &gp);
            obj.insert(
                "certificate".into(),
                serde_json::json!({
                    "per_block_counts": assignment.per_block_counts(),
                    "block_matching": cert.per_block,
                    "all_blocks_pass": cert.all_blocks_pass(),
                }),
            );
            let pattern = probing_jacobian_pattern(&partition, &gp, verdict.slots, mode)?;
            let rank = generic_rank(&pattern, trials.max(1), seed)?;
            obj.insert("rank".into(), serde_json::to_value(&rank)?);
        }
    }
    report::emit(&value, out, pretty, report::render_verdict(&verdict))?;
    Ok(if verdict.success { 0 } else { 2 })
}

fn cmd_simulate(
    feeder_path: &Path,
    partition_path: &Path,
    mode: DataMode,
    loads_path: &Path,
    plan_path: &Path,
    out: Option<&Path>,
) -> Result<i32> {
    let (feeder, partition) = load_setup(feeder_path, partition_path)?;
    let loads = LoadModel::from_json(&std::fs::read_to_string(loads_path)?)
        .context("loading loads")?;
    let plan =
        ProbingPlan::from_json(&std::fs::read_to_string(plan_path)?).context("loading plan")?;
    let sim = simulate_probing(&feeder, &partition, &loads, &plan, mode)?;
    let value = serde_json::to_value(&sim.dataset)?;
    report::emit(&value, out, false, String::new())?;
    eprintln!(
        "simulated {} slots over {} metered buses",
        sim.dataset.slot_count(),
        partition.metered.len()
    );
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn cmd_recover(
    feeder_path: &Path,
    partition_path: &Path,
    mode: DataMode,
    dataset_path: Option<&Path>,
    loads_path: Option<&Path>,
    plan_path: Option<&Path>,
    per_slot: bool,
    series_out: Option<&Path>,
    out: Option<&Path>,
    pretty: bool,
) -> Result<i32> {
    let (feeder, partition) = load_setup(feeder_path, partition_path)?;

    // Ground-truth loads per bus per slot, when this run also simulates.
    let mut truth: Option<std::collections::BTreeMap<usize, (f64, f64)>> = None;
    let dataset: ProbingDataset = match (dataset_path, loads_path, plan_path) {
        (Some(path), _, _) => {
            ProbingDataset::from_json(&std::fs::read_to_string(path)?).context("loading dataset")?
        }
        (None, Some(loads_path), Some(plan_path)) => {
            let loads = LoadModel::from_json(&std::fs::read_to_string(loads_path)?)
                .context("loading loads")?;
            let plan = ProbingPlan::from_json(&std::fs::read_to_string(plan_path)?)
                .context("loading plan")?;
            let sim = simulate_probing(&feeder, &partition, &loads, &plan, mode)?;
            let y = gridprobe_core::build_admittance(&feeder);
            let mut map = std::collections::BTreeMap::new();
            for &o in &partition.non_metered {
                let mut p_sum = 0.0;
                let mut q_sum = 0.0;
                for state in &sim.states {
                    let outputs = gridprobe_core::eval_outputs(state, &y)?;
                    p_sum += outputs.p[o];
                    q_sum += outputs.q[o];
                }
                let slots = sim.states.len() as f64;
                map.insert(o, (p_sum / slots, q_sum / slots));
            }
            truth = Some(map);
            sim.dataset
        }
        _ => {
            return Err(anyhow!(
                "recover needs either --dataset or both --loads and --plan"
            ))
        }
    };

    // Advisory identifiability check before solving.
    let advisory = if dataset.slot_count() == 1 {
        test_single_slot(&feeder, &partition, mode)?
    } else {
        let t = dataset.slot_count() + dataset.slot_count() % 2;
        test_for_slots(&feeder, &partition, mode, t)?
    };
    if !advisory.success {
        eprintln!(
            "warning: setup is not certified for T = {} in {} mode; recovery may be ill-posed",
            dataset.slot_count(),
            report::mode_str(mode)
        );
    }

    let outcome = if per_slot {
        recover_per_slot(&feeder, &partition, &dataset, mode)
    } else {
        recover_loads(&feeder, &partition, &dataset, mode)
    };

    let result = match outcome {
        Ok(result) => result,
        Err(CoreError::RankDeficient {
            iteration,
            singular_ratio,
        }) => {
            let value = serde_json::json!({
                "converged": false,
                "rank_deficient": true,
                "iteration": iteration,
                "singular_ratio": singular_ratio,
                "T": dataset.slot_count(),
                "mode": report::mode_str(mode),
            });
            report::emit(
                &value,
                out,
                pretty,
                format!(
                    "rank-deficient Jacobian at iteration {iteration} (singular ratio {singular_ratio:.3e})\n"
                ),
            )?;
            return Ok(2);
        }
        Err(err) => return Err(err.into()),
    };

    if let Some(path) = series_out {
        let series = report::series_from(&feeder, &result)?;
        report::emit(&series, Some(path), false, String::new())?;
    }

    let value = report::recovery_report(&dataset, mode, &result, truth.as_ref());
    let table = report::render_recovery(&result, truth.as_ref());
    report::emit(&value, out, pretty, table)?;
    Ok(if result.converged { 0 } else { 2 })
}

/// Independent single-slot recoveries, one per slot, merged into one
/// result. Used when loads vary with voltage and the coupling equations do
/// not apply.
fn recover_per_slot(
    feeder: &FeederGraph,
    partition: &BusPartition,
    dataset: &ProbingDataset,
    mode: DataMode,
) -> gridprobe_core::Result<RecoveryResult> {
    let mut states = Vec::new();
    let mut per_slot_loads: std::collections::BTreeMap<usize, Vec<(f64, f64)>> =
        std::collections::BTreeMap::new();
    let mut residual_norm: f64 = 0.0;
    let mut converged = true;
    let mut iterations = 0;
    for t in 0..dataset.slot_count() {
        let slice = dataset.slot(t);
        let result = recover_loads(feeder, partition, &slice, mode)?;
        converged &= result.converged;
        residual_norm = residual_norm.max(result.residual_norm);
        iterations += result.iterations;
        states.extend(result.states);
        for (&bus, series) in &result.per_slot_loads {
            per_slot_loads.entry(bus).or_default().extend(series.iter().copied());
        }
    }
    let loads = per_slot_loads
        .iter()
        .map(|(&bus, series)| {
            let n = series.len() as f64;
            let p = series.iter().map(|&(p, _)| p).sum::<f64>() / n;
            let q = series.iter().map(|&(_, q)| q).sum::<f64>() / n;
            (bus, (p, q))
        })
        .collect();
    Ok(RecoveryResult {
        states,
        loads,
        per_slot_loads,
        residual_norm,
        converged,
        iterations,
    })
}

fn cmd_fit_zip(series_path: &Path, out: Option<&Path>, pretty: bool) -> Result<i32> {
    let series: report::SeriesFile =
        serde_json::from_str(&std::fs::read_to_string(series_path)?).context("loading series")?;
    let mut buses = Vec::new();
    for entry in &series.buses {
        let fit_p = fit_zip(&entry.u, &entry.p);
        let fit_q = fit_zip(&entry.u, &entry.q);
        buses.push(report::zip_bus_report(entry, fit_p, fit_q));
    }
    let value = serde_json::json!({ "buses": buses });
    let table = report::render_zip(&value);
    report::emit(&value, out, pretty, table)?;
    Ok(0)
}

fn cmd_rank(
    pattern_path: &Path,
    trials: usize,
    seed: u64,
    out: Option<&Path>,
    pretty: bool,
) -> Result<i32> {
    let text = std::fs::read_to_string(pattern_path).context("reading pattern")?;
    let pattern = SparsityPattern::from_coordinate_text(&text)?;
    let rank = generic_rank(&pattern, trials.max(1), seed)?;
    let mut value = serde_json::to_value(&rank)?;
    value
        .as_object_mut()
        .unwrap()
        .insert("seed".into(), serde_json::json!(seed));
    let table = format!(
        "pattern {}x{}: structural full rank {}, numeric rank {}/{}\n",
        pattern.nrows(),
        pattern.ncols(),
        rank.structural_full_rank,
        rank.numeric_rank,
        rank.required_rank
    );
    report::emit(&value, out, pretty, table)?;
    Ok(if rank.structural_full_rank && rank.numeric_full_rank() {
        0
    } else {
        2
    })
}
