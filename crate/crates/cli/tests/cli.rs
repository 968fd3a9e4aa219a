use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cachecast"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn csv_rows(path: PathBuf) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(Result::unwrap).collect()
}

#[test]
fn caching_lowers_the_final_cost_on_the_butterfly() {
    let mut psi = Vec::new();
    for scenario in ["no", "edge+peer"] {
        let dir = scratch(&format!("order-{scenario}"));
        let out = run(&dir, &["solve", "--topology", "butterfly", "--scenario", scenario, "--cache-cost", "none", "--B", "3.6"]);
        assert!(out.status.success());
        let trace = csv_rows(dir.join("solve_trace.csv"));
        let last: f64 = trace.last().unwrap()[1].parse().unwrap();
        assert_eq!(json(dir.join("solve_state.json"))["psi"].as_f64().unwrap(), last);
        psi.push(last);
    }
    assert!(psi[0] > psi[1], "{psi:?}");
}

#[test]
fn malformed_topology_is_reported() {
    let dir = scratch("malformed");
    std::fs::create_dir_all(&dir).unwrap();
    let topo = dir.join("bad.topo");
    std::fs::write(&topo, "nodes 3 1\nedge 1 2 two\n").unwrap();
    let out = run(&dir, &["solve", "--topology", topo.to_str().unwrap(), "--B", "1"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("parse topology") && err.contains("line 2"), "{err}");
}

#[test]
fn custom_topologies_need_a_frame_size() {
    let dir = scratch("no-b");
    std::fs::create_dir_all(&dir).unwrap();
    let topo = dir.join("line.topo");
    std::fs::write(&topo, "nodes 2 1\nedge 1 2 4\n").unwrap();
    let out = run(&dir, &["solve", "--topology", topo.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&dir, &["solve", "--topology", topo.to_str().unwrap(), "--B", "1"]);
    assert!(out.status.success());
}

#[test]
fn zero_iterations_report_the_initial_state() {
    let dir = scratch("zero-iters");
    let out = run(&dir, &["solve", "--max-iters", "0"]);
    // Not converged, but the files are still written.
    assert_eq!(out.status.code(), Some(2));
    let state = json(dir.join("solve_state.json"));
    assert_eq!(state["iterations"], 0);
    assert_eq!(state["converged"], false);
    assert_eq!(csv_rows(dir.join("solve_trace.csv")).len(), 1);
}

#[test]
fn butterfly_simulation_decodes_within_the_bound() {
    let dir = scratch("sim");
    let out = run(&dir, &["simulate", "--topology", "butterfly", "--symbols", "4", "--eps", "1", "--M", "10"]);
    assert!(out.status.success());
    let s = json(dir.join("simulate_summary.json"));
    assert_eq!(s["decode_exact"], true);
    assert_eq!(s["oracle_match"], true);
    assert!(s["psi_s"].as_f64().unwrap() <= s["psi_star"].as_f64().unwrap() * (1.0 + 1e-12));
    assert_eq!(s["frame_size"], 3.6);
    assert_eq!(s["frame_symbols"], 4);
    assert_eq!(s["modulus"], 37);
    assert_eq!(csv_rows(dir.join("simulate_ledger.csv")).len(), 10);
}

#[test]
fn zero_sparsity_sends_nothing_after_the_first_round() {
    let dir = scratch("eps0");
    let out = run(&dir, &["simulate", "--symbols", "4", "--eps", "0", "--M", "6", "--scenario", "all"]);
    assert!(out.status.success());
    let rows = csv_rows(dir.join("simulate_ledger.csv"));
    assert!(rows[0][1].parse::<usize>().unwrap() > 0);
    for r in &rows[1..] {
        assert_eq!(&r[1], "0", "{r:?}");
    }
}

#[test]
fn without_caching_every_round_costs_the_same() {
    let dir = scratch("no-cache");
    let out = run(&dir, &["simulate", "--topology", "service", "--symbols", "20", "--M", "5", "--scenario", "no"]);
    assert!(out.status.success());
    let rows = csv_rows(dir.join("simulate_ledger.csv"));
    for r in &rows {
        assert_eq!(&r[5], &rows[0][5]);
    }
    let s = json(dir.join("simulate_summary.json"));
    assert_eq!(s["cached_nodes"].as_array().unwrap().len(), 0);
}

#[test]
fn a_single_placement_run_warns() {
    let dir = scratch("place1");
    let out = run(&dir, &["place", "--topology", "service", "--runs", "1"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("single run"));
    let rows = csv_rows(dir.join("place.csv"));
    // Every node but the source.
    assert_eq!(rows.len(), 5);
    let summary = json(dir.join("place_summary.json"));
    assert_eq!(summary["runs"], 1);
}

#[test]
fn json_tables_mirror_the_csv_columns() {
    let (a, b) = (scratch("fmt-csv"), scratch("fmt-json"));
    let args = ["sweep", "--topology", "butterfly", "--grid", "2,3", "--scenarios", "no,peer"];
    assert!(run(&a, &args).status.success());
    let mut with_json = args.to_vec();
    with_json.extend(["--format", "json"]);
    assert!(run(&b, &with_json).status.success());
    let rows = csv_rows(a.join("sweep.csv"));
    let table = json(b.join("sweep.json"));
    let table = table.as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(table.len(), 4);
    for (r, j) in rows.iter().zip(table) {
        assert_eq!(r[0].parse::<f64>().unwrap(), j["frame_size"].as_f64().unwrap());
        assert_eq!(&r[1], j["scenario"].as_str().unwrap());
        assert!(j["psi_s"].is_null());
    }
}

#[test]
fn help_documents_every_output_field() {
    let out = Command::new(env!("CARGO_BIN_EXE_cachecast")).args(["simulate", "--help"]).output().unwrap();
    let help = String::from_utf8_lossy(&out.stdout);
    for field in ["symbols_sent", "psi_star", "decode_exact", "lyapunov", "unconverged_linear", "code_attempts"] {
        assert!(help.contains(field), "{field}");
    }
}
