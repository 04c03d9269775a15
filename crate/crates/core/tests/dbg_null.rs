mod common;
use gridprobe_core::feeder::{build_admittance, load_feeder, load_partition};
use gridprobe_core::identify::DataMode;
use gridprobe_core::powerflow::{jacobians, StateVector};
use gridprobe_core::probing::{recover_loads, simulate_probing, LoadModel, ProbingPlan};
use nalgebra::DMatrix;

fn reduced_jacobian(mode: DataMode) -> DMatrix<f64> {
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data");
    let feeder = load_feeder(format!("{root}/chain6.json")).unwrap();
    let partition = load_partition(&feeder, format!("{root}/chain6_partition.json")).unwrap();
    let y = build_admittance(&feeder);
    let n = feeder.bus_count();
    let state = StateVector::flat(n);
    let jac = jacobians(&state, &y).unwrap();
    let free = n - 1;
    let unknowns = 2 * free * 2;
    let fams: Vec<&gridprobe_core::powerflow::SparseRows> = match mode {
        DataMode::Phasor => vec![&jac.j_u, &jac.j_theta, &jac.j_p, &jac.j_q],
        DataMode::NonPhasor => vec![&jac.j_u, &jac.j_p, &jac.j_q],
    };
    let rows = fams.len() * partition.metered.len() * 2 + 2 * partition.non_metered.len();
    let mut j = DMatrix::<f64>::zeros(rows, unknowns);
    let col_of = |t: usize, stacked: usize| -> Option<usize> {
        if stacked == 0 || stacked == n { None }
        else if stacked < n { Some(t * 2 * free + stacked - 1) }
        else { Some(t * 2 * free + free + stacked - n - 1) }
    };
    let mut row = 0;
    for t in 0..2 {
        for &m in &partition.metered {
            for src in &fams {
                for &(c, v) in &src.rows[m] {
                    if let Some(col) = col_of(t, c) { j[(row, col)] = v; }
                }
                row += 1;
            }
        }
    }
    for &o in &partition.non_metered {
        for src in [&jac.j_p, &jac.j_q] {
            for &(c, v) in &src.rows[o] {
                if let Some(col) = col_of(0, c) { j[(row, col)] = v; }
                if let Some(col) = col_of(1, c) { j[(row, col)] = -v; }
            }
            row += 1;
        }
    }
    j
}

#[test]
fn dbg_flat_null_both_modes() {
    for mode in [DataMode::Phasor, DataMode::NonPhasor] {
        let j = reduced_jacobian(mode);
        let svd = j.clone().svd(false, true);
        let sv = &svd.singular_values;
        let min_idx = (0..sv.len()).min_by(|&a, &b| sv[a].partial_cmp(&sv[b]).unwrap()).unwrap();
        println!("{mode:?}: {}x{} sigma_min {:.3e}", j.nrows(), j.ncols(), sv[min_idx]);
        if sv[min_idx] < 1e-8 {
            let vt = svd.v_t.unwrap();
            let null: Vec<f64> = (0..j.ncols()).map(|c| vt[(min_idx, c)]).collect();
            for (i, chunk) in null.chunks(5).enumerate() {
                println!("  chunk{}: {:?}", i, chunk.iter().map(|x| (x * 1e4).round() / 1e4).collect::<Vec<_>>());
            }
        }
    }
    // And the real failing path:
    let root = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data");
    let feeder = load_feeder(format!("{root}/chain6.json")).unwrap();
    let partition = load_partition(&feeder, format!("{root}/chain6_partition.json")).unwrap();
    let loads = LoadModel::from_json(&std::fs::read_to_string(format!("{root}/chain6_loads.json")).unwrap()).unwrap();
    let plan = ProbingPlan::from_json(&std::fs::read_to_string(format!("{root}/chain6_plan.json")).unwrap()).unwrap();
    for mode in [DataMode::Phasor, DataMode::NonPhasor] {
        let sim = simulate_probing(&feeder, &partition, &loads, &plan, mode).unwrap();
        let r = recover_loads(&feeder, &partition, &sim.dataset, mode);
        println!("{mode:?} recover: {:?}", r.map(|x| (x.converged, x.iterations)));
    }
}
