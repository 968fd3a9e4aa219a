use std::path::PathBuf;

use cachecast::network::{fixture, FIXTURES};
use cachecast::optimizer::{self, avg_kappa, KktResidual, SolverConfig};
use cachecast::simulator::{self, compare_scenarios, preset_sparsity, SimConfig};
use cachecast::{load_topology, CostFamily, Field, Instance, Network, Scenario, Units};
use serde::Serialize;

use crate::args::{Common, PlaceArgs, SimulateArgs, SolveArgs, SweepArgs};
use crate::error::{stage, CliError, Result};
use crate::output::{json, table, Artifact};

/// Cache-cost coefficients used when `--cache-cost` gives none.
const LINEAR_DEFAULT: f64 = 10.0;
const QUADRATIC_DEFAULT: f64 = 5.0;

/// Exit status of a command that ran to completion.
pub const EXIT_OK: i32 = 0;
/// The solver stopped at its iteration budget.
pub const EXIT_UNCONVERGED: i32 = 2;
/// A simulated destination failed to reproduce a frame.
pub const EXIT_DECODE: i32 = 3;

/// Everything a command produced.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    /// One-line report for the terminal.
    pub summary: String,
    pub warnings: Vec<String>,
    pub status: i32,
}

/// Frame size used in the experiments on each built-in topology.
pub fn default_frame_size(topology: &str) -> Option<f64> {
    match topology {
        "butterfly" => Some(3.6),
        "service" => Some(5.0),
        "cdn" => Some(6.0),
        _ => None,
    }
}

struct Loaded {
    name: String,
    network: Network,
    frame_size: f64,
}

fn load(common: &Common) -> Result<Loaded> {
    let text = match fixture(&common.topology) {
        Some(text) => text.to_string(),
        None => {
            let path = PathBuf::from(&common.topology);
            std::fs::read_to_string(&path).map_err(|source| CliError::ReadTopology { path, source })?
        }
    };
    let network = load_topology(&text).map_err(stage("parse topology"))?;
    let frame_size = match (common.frame_size, default_frame_size(&common.topology)) {
        (Some(b), _) | (None, Some(b)) => b,
        (None, None) => {
            return Err(CliError::Usage(format!(
                "--B is required for topologies other than {}",
                FIXTURES.join(", ")
            )))
        }
    };
    Ok(Loaded { name: common.topology.clone(), network, frame_size })
}

fn instance(network: Network, frame_size: f64, eps: Option<f64>, rounds: usize) -> Result<Instance> {
    match eps {
        None => Instance::preset(network, frame_size, rounds),
        Some(eps) => Field::new(2).and_then(|f| Instance::new(network, frame_size, eps, rounds, f, Units::Raw)),
    }
    .map_err(stage("instance"))
}

fn solver_config(common: &Common) -> SolverConfig {
    SolverConfig { max_iters: common.max_iters, seed: common.seed, ..SolverConfig::default() }
}

#[derive(Serialize)]
struct TraceRow {
    iteration: usize,
    psi: f64,
    conservation: f64,
    stationarity: f64,
    lyapunov: f64,
}

#[derive(Serialize)]
struct NodeReport {
    node: usize,
    label: String,
    eligible: bool,
    kappa: f64,
    /// One potential per destination.
    potentials: Vec<f64>,
}

#[derive(Serialize)]
struct EdgeReport {
    from: String,
    to: String,
    rate: f64,
    /// One flow per destination.
    flows: Vec<f64>,
}

#[derive(Serialize)]
struct SolveSummary {
    topology: String,
    scenario: Scenario,
    cache_cost: CostFamily,
    frame_size: f64,
    sparsity: f64,
    rounds: usize,
    seed: u64,
    converged: bool,
    iterations: usize,
    psi: f64,
    last_decile_variation: f64,
    kkt: KktResidual,
    nodes: Vec<NodeReport>,
    edges: Vec<EdgeReport>,
}

pub fn solve(args: &SolveArgs) -> Result<Outcome> {
    let common = &args.common;
    let loaded = load(common)?;
    let family = args.cache_cost.family(LINEAR_DEFAULT, QUADRATIC_DEFAULT);
    let network = loaded.network.with_cache_cost(family).with_scenario(args.scenario);
    let inst = instance(network, loaded.frame_size, args.eps, common.rounds)?;
    let cfg = solver_config(common);
    let report = optimizer::solve(&inst, &cfg).map_err(stage("solve"))?;

    let trace: Vec<TraceRow> = report
        .trace
        .iter()
        .map(|p| TraceRow {
            iteration: p.iteration,
            psi: p.objective,
            conservation: p.conservation,
            stationarity: p.stationarity,
            lyapunov: p.lyapunov,
        })
        .collect();
    let net = &inst.network;
    let state = &report.state;
    let rates = optimizer::edge_loads(state, &inst, cfg.norm_exponent);
    let nodes = (0..net.node_count())
        .map(|i| NodeReport {
            node: i + 1,
            label: net.label(i).to_string(),
            eligible: net.cache_eligible(i),
            kappa: state.kappa[i],
            potentials: (0..state.terminals).map(|t| state.potential(t, i)).collect(),
        })
        .collect();
    let edges = net
        .edges()
        .iter()
        .enumerate()
        .map(|(k, e)| EdgeReport {
            from: net.label(e.from).to_string(),
            to: net.label(e.to).to_string(),
            rate: rates[k],
            flows: (0..state.terminals).map(|t| state.mu(t, k)).collect(),
        })
        .collect();
    let summary = SolveSummary {
        topology: loaded.name.clone(),
        scenario: args.scenario,
        cache_cost: family,
        frame_size: inst.frame_size,
        sparsity: inst.sparsity,
        rounds: inst.rounds,
        seed: common.seed,
        converged: report.converged,
        iterations: report.iterations,
        psi: report.objective,
        last_decile_variation: report.last_decile_variation(),
        kkt: report.kkt,
        nodes,
        edges,
    };
    let status = if report.converged { EXIT_OK } else { EXIT_UNCONVERGED };
    let line = format!(
        "solve {} ({}): psi = {} after {} iterations, kkt residual {}{}",
        loaded.name,
        args.scenario,
        report.objective,
        report.iterations,
        report.kkt.max(),
        if report.converged { "" } else { " (not converged)" }
    );
    Ok(Outcome {
        artifacts: vec![table("solve_trace", &trace, common.format)?, json("solve_state", &summary)?],
        summary: line,
        warnings: Vec::new(),
        status,
    })
}

#[derive(Serialize)]
struct LedgerRow {
    round: usize,
    symbols_sent: usize,
    symbols_cached: usize,
    communication: f64,
    caching: f64,
    total: f64,
}

#[derive(Serialize)]
struct SimEdge {
    from: String,
    to: String,
    rate: f64,
    peak: f64,
    symbols: usize,
}

#[derive(Serialize)]
struct SimulateSummary {
    topology: String,
    scenario: Scenario,
    cache_cost: CostFamily,
    frame_size: f64,
    frame_symbols: usize,
    sparsity_symbols: usize,
    rounds: usize,
    seed: u64,
    solver_converged: bool,
    solver_iterations: usize,
    psi: f64,
    modulus: u64,
    bits_per_symbol: f64,
    load_per_symbol: f64,
    cached_nodes: Vec<String>,
    edges: Vec<SimEdge>,
    code_attempts: usize,
    decode_exact: bool,
    oracle_match: bool,
    psi_s: f64,
    psi_star: f64,
}

pub fn simulate(args: &SimulateArgs) -> Result<Outcome> {
    let common = &args.common;
    let loaded = load(common)?;
    let family = args.cache_cost.family(LINEAR_DEFAULT, QUADRATIC_DEFAULT);
    let network = loaded.network.with_cache_cost(family).with_scenario(args.scenario);
    let inst = instance(network, loaded.frame_size, None, common.rounds)?;
    let cfg = solver_config(common);
    let report = optimizer::solve(&inst, &cfg).map_err(stage("solve"))?;

    let frame_symbols = args.symbols.unwrap_or(loaded.frame_size.ceil() as usize);
    if frame_symbols == 0 {
        return Err(CliError::Usage("--symbols must be positive".into()));
    }
    let sim = SimConfig {
        frame_symbols,
        sparsity: args.eps.unwrap_or_else(|| preset_sparsity(frame_symbols)),
        rounds: common.rounds,
        seed: common.seed,
    };
    let out = simulator::simulate(&inst, &report.state, cfg.norm_exponent, &sim).map_err(stage("simulate"))?;

    let net = &inst.network;
    let ledger: Vec<LedgerRow> = out
        .ledger
        .rounds
        .iter()
        .map(|r| LedgerRow {
            round: r.round,
            symbols_sent: r.edge_symbols.iter().sum(),
            symbols_cached: r.cache_symbols.iter().sum(),
            communication: r.communication,
            caching: r.caching,
            total: r.total(),
        })
        .collect();
    let exact = out.decode_exact && out.oracle_match;
    let summary = SimulateSummary {
        topology: loaded.name.clone(),
        scenario: args.scenario,
        cache_cost: family,
        frame_size: inst.frame_size,
        frame_symbols,
        sparsity_symbols: sim.sparsity,
        rounds: sim.rounds,
        seed: common.seed,
        solver_converged: report.converged,
        solver_iterations: report.iterations,
        psi: report.objective,
        modulus: out.modulus,
        bits_per_symbol: out.ledger.bits_per_symbol,
        load_per_symbol: out.ledger.load_per_symbol,
        cached_nodes: (0..net.node_count())
            .filter(|&i| out.placement.delta[i])
            .map(|i| net.label(i).to_string())
            .collect(),
        edges: net
            .edges()
            .iter()
            .enumerate()
            .map(|(k, e)| SimEdge {
                from: net.label(e.from).to_string(),
                to: net.label(e.to).to_string(),
                rate: out.placement.rates[k],
                peak: out.placement.peak[k],
                symbols: out.dims[k],
            })
            .collect(),
        code_attempts: out.code_attempts,
        decode_exact: out.decode_exact,
        oracle_match: out.oracle_match,
        psi_s: out.ledger.psi_s,
        psi_star: out.ledger.psi_star,
    };
    let mut warnings = Vec::new();
    if !report.converged {
        warnings.push(format!("solver stopped after {} iterations without converging", report.iterations));
    }
    let line = format!(
        "simulate {} ({}): {} rounds of {} symbols over GF({}), decode {}, psi_s = {} <= psi* = {}",
        loaded.name,
        args.scenario,
        sim.rounds,
        frame_symbols,
        out.modulus,
        if exact { "exact" } else { "FAILED" },
        out.ledger.psi_s,
        out.ledger.psi_star
    );
    Ok(Outcome {
        artifacts: vec![table("simulate_ledger", &ledger, common.format)?, json("simulate_summary", &summary)?],
        summary: line,
        warnings,
        status: if exact { EXIT_OK } else { EXIT_DECODE },
    })
}

#[derive(Serialize)]
struct PlaceRow {
    node: usize,
    label: String,
    destination: bool,
    linear: f64,
    quadratic: f64,
}

#[derive(Serialize)]
struct PlaceSummary {
    topology: String,
    frame_size: f64,
    sparsity: f64,
    rounds: usize,
    runs: usize,
    seed: u64,
    linear: CostFamily,
    quadratic: CostFamily,
    unconverged_linear: Vec<u64>,
    unconverged_quadratic: Vec<u64>,
}

pub fn place(args: &PlaceArgs) -> Result<Outcome> {
    let common = &args.common;
    if args.runs == 0 {
        return Err(CliError::Usage("--runs must be at least 1".into()));
    }
    let loaded = load(common)?;
    let cfg = solver_config(common);
    let linear = CostFamily::Linear { slope: args.linear };
    let quadratic = CostFamily::Quadratic { coeff: args.quadratic };
    let mut averages = Vec::with_capacity(2);
    for family in [linear, quadratic] {
        let inst = instance(loaded.network.with_cache_cost(family), loaded.frame_size, args.eps, common.rounds)?;
        averages.push(avg_kappa(&inst, &cfg, args.runs, common.parallelism()).map_err(stage("place"))?);
    }
    let net = &loaded.network;
    let rows: Vec<PlaceRow> = (0..net.node_count())
        .filter(|&i| i != net.source())
        .map(|i| PlaceRow {
            node: i + 1,
            label: net.label(i).to_string(),
            destination: net.is_destination(i),
            linear: averages[0].mean[i],
            quadratic: averages[1].mean[i],
        })
        .collect();
    let inst = instance(net.clone(), loaded.frame_size, args.eps, common.rounds)?;
    let summary = PlaceSummary {
        topology: loaded.name.clone(),
        frame_size: inst.frame_size,
        sparsity: inst.sparsity,
        rounds: inst.rounds,
        runs: args.runs,
        seed: common.seed,
        linear,
        quadratic,
        unconverged_linear: averages[0].unconverged.clone(),
        unconverged_quadratic: averages[1].unconverged.clone(),
    };
    let mut warnings = Vec::new();
    if args.runs == 1 {
        warnings.push("a single run was averaged; the reported values are one run's final caching variables".into());
    }
    let unconverged = averages[0].unconverged.len() + averages[1].unconverged.len();
    if unconverged > 0 {
        warnings.push(format!("{unconverged} of {} runs stopped before converging", 2 * args.runs));
    }
    let line = format!("place {}: mean caching variables over {} runs per cost family", loaded.name, args.runs);
    Ok(Outcome {
        artifacts: vec![table("place", &rows, common.format)?, json("place_summary", &summary)?],
        summary: line,
        warnings,
        status: EXIT_OK,
    })
}

#[derive(Serialize)]
struct SweepRow {
    frame_size: f64,
    scenario: Scenario,
    psi: f64,
    converged: bool,
    iterations: usize,
    psi_s: Option<f64>,
    psi_star: Option<f64>,
    decode_exact: Option<bool>,
}

pub fn sweep(args: &SweepArgs) -> Result<Outcome> {
    let common = &args.common;
    let loaded = load(common)?;
    let grid: Vec<f64> = if args.grid.is_empty() {
        // Rounded to micro-units so the grid prints cleanly.
        [0.6, 0.8, 1.0].iter().map(|f| (f * loaded.frame_size * 1e6).round() / 1e6).collect()
    } else {
        args.grid.clone()
    };
    if args.scenarios.is_empty() {
        return Err(CliError::Usage("--scenarios must name at least one scenario".into()));
    }
    let family = args.cache_cost.family(LINEAR_DEFAULT, QUADRATIC_DEFAULT);
    let network = loaded.network.with_cache_cost(family);
    let cfg = solver_config(common);
    let mut rows = Vec::new();
    for &b in &grid {
        let inst = instance(network.clone(), b, None, common.rounds)?;
        let sim = args.simulate.then(|| SimConfig::preset(&inst, common.seed));
        let results = compare_scenarios(&inst, &cfg, &args.scenarios, sim.as_ref(), common.parallelism())
            .map_err(stage("sweep"))?;
        rows.extend(results.into_iter().map(|r| SweepRow {
            frame_size: b,
            scenario: r.scenario,
            psi: r.psi,
            converged: r.converged,
            iterations: r.iterations,
            psi_s: r.psi_s,
            psi_star: r.psi_star,
            decode_exact: r.decode_exact,
        }));
    }
    let unconverged = rows.iter().filter(|r| !r.converged).count();
    let mut warnings = Vec::new();
    if unconverged > 0 {
        warnings.push(format!("{unconverged} of {} points stopped before converging", rows.len()));
    }
    let line = format!("sweep {}: {} frame sizes x {} scenarios", loaded.name, grid.len(), args.scenarios.len());
    Ok(Outcome { artifacts: vec![table("sweep", &rows, common.format)?], summary: line, warnings, status: EXIT_OK })
}
