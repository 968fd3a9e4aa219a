//! Round-by-round execution of the caching protocol.
//!
//! Round 1 runs the network code on full payloads and fills every cache.
//! From round 2 on, in-neighbors of a caching node send only the
//! compressed update message, the node rebuilds its output from the cache
//! and refreshes it, and every other node keeps receiving full payloads.
//! Each run is checked against a cache-free reference execution.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fnupd::{build_codec, UpdateCodec};
use crate::gf::Field;
use crate::lnc::{build_code, EdgeDims, NetworkCode};
use crate::network::{max_flow_assignment, Instance, Network, Scenario};
use crate::optimizer::{round, solve, FlowState, Placement, SolverConfig};
use crate::par::{map_indexed, Parallelism};

/// Frames `m(1) .. m(M)` over a prime field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSequence {
    pub modulus: u64,
    pub sparsity: usize,
    pub frames: Vec<Vec<u64>>,
}

impl FrameSequence {
    pub fn rounds(&self) -> usize {
        self.frames.len()
    }

    pub fn frame_len(&self) -> usize {
        self.frames.first().map_or(0, Vec::len)
    }

    /// Largest Hamming distance between consecutive frames.
    pub fn max_change(&self) -> usize {
        self.frames
            .windows(2)
            .map(|w| w[0].iter().zip(&w[1]).filter(|(a, b)| a != b).count())
            .max()
            .unwrap_or(0)
    }
}

/// `max(1, ⌈B / 100⌉)`: the 1% change rate used in the experiments.
pub fn preset_sparsity(frame_len: usize) -> usize {
    frame_len.div_ceil(100).max(1)
}

/// Uniform first frame, then each frame changes exactly `sparsity`
/// uniformly chosen positions by uniform nonzero amounts.
pub fn gen_frames(field: Field, frame_len: usize, sparsity: usize, rounds: usize, seed: u64) -> Result<FrameSequence> {
    if sparsity > frame_len {
        return Err(Error::InvalidInstance(format!("sparsity {sparsity} exceeds frame length {frame_len}")));
    }
    if rounds == 0 {
        return Err(Error::InvalidInstance("at least one round is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::with_capacity(rounds);
    frames.push((0..frame_len).map(|_| field.random(&mut rng)).collect::<Vec<u64>>());
    for r in 1..rounds {
        let mut next = frames[r - 1].clone();
        for pos in sample(&mut rng, frame_len, sparsity) {
            next[pos] = field.add(next[pos], field.random_nonzero(&mut rng));
        }
        frames.push(next);
    }
    Ok(FrameSequence { modulus: field.modulus(), sparsity, frames })
}

/// Symbol counts per edge from per-edge rates.
///
/// Rates are scaled by `symbols_per_unit` and rounded down, ignoring the
/// last hundredth of a symbol. While a destination's cut is short of
/// `frame_len`, one more symbol is routed to it along the augmenting path
/// that adds the fewest symbols, using edges with spare capacity whenever
/// such a path exists.
pub fn dims_from_rates(net: &Network, rates: &[f64], symbols_per_unit: f64, frame_len: usize) -> EdgeDims {
    let mut dims: Vec<usize> = rates.iter().map(|&r| (r * symbols_per_unit + 1e-2).floor().max(0.0) as usize).collect();
    let room: Vec<f64> = net.edges().iter().map(|e| e.capacity * symbols_per_unit).collect();
    for t in net.destination_nodes() {
        loop {
            let caps: Vec<f64> = dims.iter().map(|&d| d as f64).collect();
            let (value, flow) = max_flow_assignment(net, &caps, net.source(), t);
            if value + 1e-9 >= frame_len as f64 {
                break;
            }
            for k in saturated_arcs_on_cheapest_path(net, &dims, &flow, &room, t) {
                dims[k] += 1;
            }
        }
    }
    EdgeDims(dims)
}

/// Residual-graph path from the source to `target` that raises the fewest
/// edge dimensions; returns the edges it raises. Raising an edge past its
/// capacity costs more than any path of in-capacity raises.
fn saturated_arcs_on_cheapest_path(net: &Network, dims: &[usize], flow: &[f64], room: &[f64], target: usize) -> Vec<usize> {
    let over = net.edges().len() + 1;
    let mut dist = vec![usize::MAX; net.node_count()];
    // (edge, forward) used to reach each node.
    let mut via: Vec<Option<(usize, bool)>> = vec![None; net.node_count()];
    let mut heap = BinaryHeap::from([Reverse((0, net.source()))]);
    dist[net.source()] = 0;
    while let Some(Reverse((d, v))) = heap.pop() {
        if d > dist[v] {
            continue;
        }
        let forward = net.out_edges(v).iter().map(|&k| {
            let cost = if flow[k] + 0.5 < dims[k] as f64 {
                0
            } else if ((dims[k] + 1) as f64) < room[k] - 1e-9 {
                1
            } else {
                1 + over
            };
            (k, true, net.edge(k).to, cost)
        });
        let backward = net.in_edges(v).iter().filter(|&&k| flow[k] > 0.5).map(|&k| (k, false, net.edge(k).from, 0));
        for (k, dir, w, cost) in forward.chain(backward) {
            if d + cost < dist[w] {
                dist[w] = d + cost;
                via[w] = Some((k, dir));
                heap.push(Reverse((d + cost, w)));
            }
        }
    }
    let mut raised = Vec::new();
    let mut v = target;
    while let Some((k, forward)) = via[v] {
        if forward {
            if flow[k] + 0.5 >= dims[k] as f64 {
                raised.push(k);
            }
            v = net.edge(k).from;
        } else {
            v = net.edge(k).to;
        }
    }
    raised
}

/// A network code together with the update codecs of the caching nodes.
#[derive(Clone, Debug)]
pub struct Protocol {
    code: NetworkCode,
    delta: Vec<bool>,
    codecs: Vec<Option<UpdateCodec>>,
}

impl Protocol {
    pub fn code(&self) -> &NetworkCode {
        &self.code
    }

    pub fn delta(&self) -> &[bool] {
        &self.delta
    }

    pub fn codec(&self, node: usize) -> Option<&UpdateCodec> {
        self.codecs[node].as_ref()
    }

    /// Symbols stored by `node` when it caches its output.
    pub fn cache_len(&self, node: usize) -> usize {
        self.code.output_len(node)
    }
}

/// Builds one codec per node with `delta[i]` set.
pub fn build_protocol(net: &Network, code: NetworkCode, delta: &[bool], sparsity: usize, seed: u64) -> Result<Protocol> {
    if delta.len() != net.node_count() {
        return Err(Error::DimensionMismatch(format!("{} cache decisions for {} nodes", delta.len(), net.node_count())));
    }
    let mut codecs = Vec::with_capacity(delta.len());
    for (i, &cached) in delta.iter().enumerate() {
        codecs.push(if cached { Some(build_codec(net, &code, i, sparsity, sub_seed(seed, i as u64))?) } else { None });
    }
    Ok(Protocol { code, delta: delta.to_vec(), codecs })
}

fn sub_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stream.wrapping_mul(0xD1B5_4A32_D192_ED03)) ^ stream
}

/// Symbols moved and stored in one round.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundCost {
    pub round: usize,
    /// Symbols sent on each edge.
    pub edge_symbols: Vec<usize>,
    /// Symbols held in each node's cache during the round (0 if none).
    pub cache_symbols: Vec<usize>,
    pub communication: f64,
    pub caching: f64,
}

impl RoundCost {
    pub fn total(&self) -> f64 {
        self.communication + self.caching
    }
}

/// Realized costs of a run and the analytical bound they must respect.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub bits_per_symbol: f64,
    /// Load units per symbol used when evaluating the cost families.
    pub load_per_symbol: f64,
    pub rounds: Vec<RoundCost>,
    /// Sum of the per-round costs.
    pub psi_s: f64,
    /// Bound computed from the edge dimensions and the cache decisions.
    pub psi_star: f64,
}

impl CostLedger {
    pub fn edge_bits(&self, round: usize, edge: usize) -> f64 {
        self.rounds[round].edge_symbols[edge] as f64 * self.bits_per_symbol
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunOutcome {
    /// `decoded[d][r]`: output of the `d`-th destination in round `r`.
    pub decoded: Vec<Vec<Vec<u64>>>,
    /// Every destination reproduced every frame.
    pub decode_exact: bool,
    /// Every node's output matched the cache-free reference in every round.
    pub oracle_match: bool,
    pub ledger: CostLedger,
}

/// Runs all rounds of `frames` through `protocol`.
pub fn run(net: &Network, protocol: &Protocol, frames: &FrameSequence, load_per_symbol: f64) -> Result<RunOutcome> {
    let code = &protocol.code;
    let field = code.field();
    if frames.modulus != field.modulus() || frames.frame_len() != code.frame_len() {
        return Err(Error::DimensionMismatch(format!(
            "frames over GF({}) of length {} for a code over GF({}) of length {}",
            frames.modulus,
            frames.frame_len(),
            field.modulus(),
            code.frame_len()
        )));
    }
    let n = net.node_count();
    let destinations: Vec<usize> = net.destination_nodes().collect();
    let mut decoded = vec![Vec::with_capacity(frames.rounds()); destinations.len()];
    let mut cache: Vec<Option<Vec<u64>>> = vec![None; n];
    let mut rounds = Vec::with_capacity(frames.rounds());
    let mut oracle_match = true;

    for (r, frame) in frames.frames.iter().enumerate() {
        let reference = code.propagate(net, frame)?;
        let mut outputs: Vec<Vec<u64>> = vec![Vec::new(); n];
        let mut edge_symbols = vec![0; net.edges().len()];
        for &v in net.topo_order() {
            let codec = protocol.codecs[v].as_ref().filter(|_| r > 0);
            outputs[v] = match codec {
                Some(codec) => {
                    let mut syndrome = vec![0; codec.gamma()];
                    for (slot, &k) in codec.in_edges().iter().enumerate() {
                        let payload = code.edge_payload(k, &outputs[net.edge(k).from]);
                        for (acc, s) in syndrome.iter_mut().zip(codec.encode(slot, payload)?) {
                            *acc = field.add(*acc, s);
                        }
                        edge_symbols[k] = codec.gamma();
                    }
                    let stored = cache[v].as_ref().expect("cache filled in round 1");
                    codec.decode(&syndrome, stored)?
                }
                None if v == net.source() => code.coding(v).mul_vec(frame)?,
                None => {
                    let mut x = Vec::new();
                    for &k in net.in_edges(v) {
                        x.extend_from_slice(code.edge_payload(k, &outputs[net.edge(k).from]));
                        edge_symbols[k] = code.dims()[k];
                    }
                    code.coding(v).mul_vec(&x)?
                }
            };
            oracle_match &= outputs[v] == reference[v];
            if protocol.delta[v] {
                cache[v] = Some(outputs[v].clone());
            }
        }
        for (d, &t) in destinations.iter().enumerate() {
            decoded[d].push(outputs[t].clone());
        }
        let cache_symbols: Vec<usize> =
            (0..n).map(|i| if protocol.delta[i] && r > 0 { protocol.cache_len(i) } else { 0 }).collect();
        let communication = edge_symbols
            .iter()
            .enumerate()
            .map(|(k, &s)| net.edge(k).cost.eval_unchecked(s as f64 * load_per_symbol))
            .fold(0.0, |a, b| a + b);
        let caching = cache_symbols
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > 0)
            .map(|(i, &s)| net.cache_cost(i).eval_unchecked(s as f64 * load_per_symbol))
            .fold(0.0, |a, b| a + b);
        rounds.push(RoundCost { round: r + 1, edge_symbols, cache_symbols, communication, caching });
    }

    let decode_exact = decoded.iter().all(|seq| seq == &frames.frames);
    let psi_s = rounds.iter().map(RoundCost::total).sum();
    let psi_star = cost_bound(net, protocol, frames.sparsity, frames.rounds(), load_per_symbol);
    let ledger = CostLedger { bits_per_symbol: field.bits_per_symbol(), load_per_symbol, rounds, psi_s, psi_star };
    if psi_s > psi_star * (1.0 + 1e-12) + 1e-12 {
        return Err(Error::LedgerBound { realized: psi_s, bound: psi_star });
    }
    Ok(RunOutcome { decoded, decode_exact, oracle_match, ledger })
}

/// Full-size payloads in round 1, then `2ε`-symbol updates into caching
/// nodes and full payloads elsewhere.
fn cost_bound(net: &Network, protocol: &Protocol, sparsity: usize, rounds: usize, load_per_symbol: f64) -> f64 {
    let dims = protocol.code.dims();
    let link = |k: usize, symbols: usize| net.edge(k).cost.eval_unchecked(symbols as f64 * load_per_symbol);
    let first: f64 = (0..dims.len()).map(|k| link(k, dims[k])).sum();
    let mut later = 0.0;
    for i in 0..net.node_count() {
        if protocol.delta[i] {
            later += net.cache_cost(i).eval_unchecked(protocol.cache_len(i) as f64 * load_per_symbol);
            later += net.in_edges(i).iter().map(|&k| link(k, 2 * sparsity)).sum::<f64>();
        } else {
            later += net.in_edges(i).iter().map(|&k| link(k, dims[k])).sum::<f64>();
        }
    }
    first + rounds.saturating_sub(1) as f64 * later
}

/// Parameters of a simulated session.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Frame length in symbols.
    pub frame_symbols: usize,
    pub sparsity: usize,
    pub rounds: usize,
    pub seed: u64,
}

impl SimConfig {
    /// Symbols for the instance's frame size rounded up, 1% sparsity and
    /// the instance's round count.
    pub fn preset(inst: &Instance, seed: u64) -> Self {
        let frame_symbols = (inst.frame_size - 1e-9).ceil().max(1.0) as usize;
        SimConfig { frame_symbols, sparsity: preset_sparsity(frame_symbols), rounds: inst.rounds, seed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationReport {
    pub frame_size: f64,
    pub frame_symbols: usize,
    pub sparsity: usize,
    pub modulus: u64,
    pub placement: Placement,
    pub dims: Vec<usize>,
    pub code_attempts: usize,
    pub decode_exact: bool,
    pub oracle_match: bool,
    pub ledger: CostLedger,
}

/// Rounds `state`, sizes the edges from its rates and runs the protocol.
pub fn simulate(inst: &Instance, state: &FlowState, norm_exponent: u32, sim: &SimConfig) -> Result<SimulationReport> {
    let net = &inst.network;
    // With ε = 0 any field is admissible, but random codes rarely decode over GF(2).
    let field = Field::smallest_admissible(sim.frame_symbols, sim.sparsity.max(1))?;
    let placement = round(state, inst, norm_exponent, sub_seed(sim.seed, 1));
    let demand = inst.demand();
    let symbols_per_unit = sim.frame_symbols as f64 / demand;
    let dims = dims_from_rates(net, &placement.peak, symbols_per_unit, sim.frame_symbols);
    let code = build_code(net, field, sim.frame_symbols, &dims, sub_seed(sim.seed, 2))?;
    let code_attempts = code.attempts();
    let protocol = build_protocol(net, code, &placement.delta, sim.sparsity, sub_seed(sim.seed, 3))?;
    let frames = gen_frames(field, sim.frame_symbols, sim.sparsity, sim.rounds, sub_seed(sim.seed, 4))?;
    let outcome = run(net, &protocol, &frames, 1.0 / symbols_per_unit)?;
    Ok(SimulationReport {
        frame_size: inst.frame_size,
        frame_symbols: sim.frame_symbols,
        sparsity: sim.sparsity,
        modulus: field.modulus(),
        placement,
        dims: dims.0,
        code_attempts,
        decode_exact: outcome.decode_exact,
        oracle_match: outcome.oracle_match,
        ledger: outcome.ledger,
    })
}

/// One row of a scenario comparison.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub scenario: Scenario,
    /// Relaxed optimum reached by the solver.
    pub psi: f64,
    pub converged: bool,
    pub iterations: usize,
    pub kappa: Vec<f64>,
    /// Realized cost and bound of the simulated session, when requested.
    pub psi_s: Option<f64>,
    pub psi_star: Option<f64>,
    pub decode_exact: Option<bool>,
}

/// Solves (and optionally simulates) `inst` under each scenario.
pub fn compare_scenarios(
    inst: &Instance,
    cfg: &SolverConfig,
    scenarios: &[Scenario],
    sim: Option<&SimConfig>,
    par: Parallelism,
) -> Result<Vec<ScenarioResult>> {
    let rows = map_indexed(par, scenarios.len(), |s| {
        let scenario = scenarios[s];
        let local = inst.with_network(inst.network.with_scenario(scenario));
        let report = solve(&local, cfg)?;
        let simulated = sim.map(|sim| simulate(&local, &report.state, cfg.norm_exponent, sim)).transpose()?;
        Ok(ScenarioResult {
            scenario,
            psi: report.objective,
            converged: report.converged,
            iterations: report.iterations,
            kappa: report.state.kappa.clone(),
            psi_s: simulated.as_ref().map(|r| r.ledger.psi_s),
            psi_star: simulated.as_ref().map(|r| r.ledger.psi_star),
            decode_exact: simulated.as_ref().map(|r| r.decode_exact && r.oracle_match),
        })
    });
    rows.into_iter().collect()
}
