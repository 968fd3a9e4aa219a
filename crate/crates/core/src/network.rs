//! Multicast network model: a DAG with one source (node 1), `L` destinations
//! (the last `L` nodes), link cost families and per-node cache cost families.
//!
//! Topology documents are line oriented:
//!
//! ```text
//! # comment
//! nodes 7 2              # N nodes, the last L are destinations
//! label 2 n1             # optional display name
//! edge 1 2 2.0           # directed edge with capacity
//! edgecost 1 2 linear 3  # optional; links default to mm1 at their capacity
//! cache 4 linear 1.0     # node 4 has storage with the given cost family
//! edgenode 4             # node 4 is an "edge" cache site for scenarios
//! ```

use std::collections::VecDeque;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf::Field;

/// Slope reported for an mm1 link loaded at or above its capacity.
pub const BARRIER_SLOPE: f64 = 1e9;

const BUTTERFLY: &str = include_str!("../fixtures/butterfly.topo");
const SERVICE: &str = include_str!("../fixtures/service.topo");
const CDN: &str = include_str!("../fixtures/cdn.topo");

/// Built-in topology documents by name.
pub fn fixture(name: &str) -> Option<&'static str> {
    match name {
        "butterfly" => Some(BUTTERFLY),
        "service" => Some(SERVICE),
        "cdn" => Some(CDN),
        _ => None,
    }
}

pub const FIXTURES: [&str; 3] = ["butterfly", "service", "cdn"];

/// Convex, non-decreasing cost of carrying (or storing) a load per round.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CostFamily {
    /// `s / (c - s)` on `[0, c)`, the mean M/M/1 queue occupancy.
    Mm1 { capacity: f64 },
    Linear { slope: f64 },
    Quadratic { coeff: f64 },
    Zero,
}

impl CostFamily {
    /// Cost at load `s`. An mm1 link at or above capacity costs `+inf`.
    pub fn eval(&self, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Err(Error::NegativeLoad(s));
        }
        Ok(self.eval_unchecked(s))
    }

    /// Marginal cost at load `s`; an overloaded mm1 link reports [`BARRIER_SLOPE`].
    pub fn eval_deriv(&self, s: f64) -> Result<f64> {
        if s < 0.0 {
            return Err(Error::NegativeLoad(s));
        }
        Ok(self.deriv_unchecked(s))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, s: f64) -> f64 {
        match *self {
            CostFamily::Mm1 { capacity } => {
                if s < capacity {
                    s / (capacity - s)
                } else {
                    f64::INFINITY
                }
            }
            CostFamily::Linear { slope } => slope * s,
            CostFamily::Quadratic { coeff } => coeff * s * s,
            CostFamily::Zero => 0.0,
        }
    }

    #[inline]
    pub(crate) fn second_deriv_unchecked(&self, s: f64) -> f64 {
        match *self {
            CostFamily::Mm1 { capacity } => {
                if s < capacity {
                    2.0 * capacity / (capacity - s).powi(3)
                } else {
                    BARRIER_SLOPE
                }
            }
            CostFamily::Quadratic { coeff } => 2.0 * coeff,
            CostFamily::Linear { .. } | CostFamily::Zero => 0.0,
        }
    }

    #[inline]
    pub(crate) fn deriv_unchecked(&self, s: f64) -> f64 {
        match *self {
            CostFamily::Mm1 { capacity } => {
                if s < capacity {
                    capacity / ((capacity - s) * (capacity - s))
                } else {
                    BARRIER_SLOPE
                }
            }
            CostFamily::Linear { slope } => slope,
            CostFamily::Quadratic { coeff } => 2.0 * coeff * s,
            CostFamily::Zero => 0.0,
        }
    }

    fn parse(kind: &str, param: Option<f64>, line: usize) -> Result<Self> {
        let need = |what: &str| {
            param.ok_or_else(|| Error::Parse { line, message: format!("{what} needs a parameter") })
        };
        let family = match kind {
            "mm1" => CostFamily::Mm1 { capacity: need("mm1")? },
            "linear" => CostFamily::Linear { slope: need("linear")? },
            "quadratic" => CostFamily::Quadratic { coeff: need("quadratic")? },
            "zero" | "none" => CostFamily::Zero,
            other => {
                return Err(Error::Parse { line, message: format!("unknown cost family `{other}`") })
            }
        };
        match family {
            CostFamily::Mm1 { capacity: p }
            | CostFamily::Linear { slope: p }
            | CostFamily::Quadratic { coeff: p }
                if !(p.is_finite() && p >= 0.0) =>
            {
                Err(Error::Parse { line, message: format!("cost parameter {p} must be finite and >= 0") })
            }
            f => Ok(f),
        }
    }
}

impl fmt::Display for CostFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostFamily::Mm1 { capacity } => write!(f, "mm1 {capacity}"),
            CostFamily::Linear { slope } => write!(f, "linear {slope}"),
            CostFamily::Quadratic { coeff } => write!(f, "quadratic {coeff}"),
            CostFamily::Zero => write!(f, "zero"),
        }
    }
}

/// Which nodes may cache in an experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// No node caches.
    No,
    /// Only the nodes annotated `edgenode`.
    Edge,
    /// Only the destinations.
    Peer,
    /// Edge nodes and destinations.
    #[serde(rename = "edge+peer")]
    EdgePeer,
    /// Every node except the source.
    All,
}

impl Scenario {
    pub const COMPARED: [Scenario; 4] = [Scenario::No, Scenario::Edge, Scenario::Peer, Scenario::EdgePeer];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::No => "no",
            Scenario::Edge => "edge",
            Scenario::Peer => "peer",
            Scenario::EdgePeer => "edge+peer",
            Scenario::All => "all",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "no" | "none" => Ok(Scenario::No),
            "edge" => Ok(Scenario::Edge),
            "peer" => Ok(Scenario::Peer),
            "edge+peer" | "peer+edge" | "edge-peer" => Ok(Scenario::EdgePeer),
            "all" | "all-eligible" => Ok(Scenario::All),
            other => Err(format!("unknown scenario `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub capacity: f64,
    pub cost: CostFamily,
}

/// A validated multicast DAG. Node indices are zero-based internally; node 0
/// is the source and the last `destinations` nodes are the destinations.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Network {
    node_count: usize,
    destinations: usize,
    edges: Vec<Edge>,
    labels: Vec<String>,
    cache_cost: Vec<CostFamily>,
    cache_eligible: Vec<bool>,
    edge_site: Vec<bool>,
    #[serde(skip)]
    in_edges: Vec<Vec<usize>>,
    #[serde(skip)]
    out_edges: Vec<Vec<usize>>,
    #[serde(skip)]
    topo_order: Vec<usize>,
}

/// Unvalidated network under construction.
#[derive(Clone, Debug)]
pub struct NetworkBuilder {
    node_count: usize,
    destinations: usize,
    edges: Vec<Edge>,
    labels: Vec<String>,
    cache_cost: Vec<CostFamily>,
    cache_eligible: Vec<bool>,
    edge_site: Vec<bool>,
}

impl NetworkBuilder {
    pub fn new(node_count: usize, destinations: usize) -> Self {
        NetworkBuilder {
            node_count,
            destinations,
            edges: Vec::new(),
            labels: (0..node_count).map(|i| default_label(i, node_count, destinations)).collect(),
            cache_cost: vec![CostFamily::Zero; node_count],
            cache_eligible: vec![false; node_count],
            edge_site: vec![false; node_count],
        }
    }

    /// Adds an mm1 link; indices are zero-based.
    pub fn edge(mut self, from: usize, to: usize, capacity: f64) -> Self {
        self.edges.push(Edge { from, to, capacity, cost: CostFamily::Mm1 { capacity } });
        self
    }

    pub fn edge_with_cost(mut self, from: usize, to: usize, capacity: f64, cost: CostFamily) -> Self {
        self.edges.push(Edge { from, to, capacity, cost });
        self
    }

    pub fn cache(mut self, node: usize, cost: CostFamily) -> Self {
        self.cache_cost[node] = cost;
        self.cache_eligible[node] = true;
        self
    }

    pub fn edge_site(mut self, node: usize) -> Self {
        self.edge_site[node] = true;
        self
    }

    pub fn label(mut self, node: usize, label: impl Into<String>) -> Self {
        self.labels[node] = label.into();
        self
    }

    pub fn build(self) -> Result<Network> {
        let n = self.node_count;
        let l = self.destinations;
        if n < 2 {
            return Err(Error::InvalidNetwork("need at least two nodes".into()));
        }
        if l == 0 || l >= n {
            return Err(Error::InvalidNetwork(format!("{l} destinations among {n} nodes")));
        }
        let first_dest = n - l;
        let mut in_edges = vec![Vec::new(); n];
        let mut out_edges = vec![Vec::new(); n];
        let mut seen = std::collections::HashSet::new();
        for (k, e) in self.edges.iter().enumerate() {
            if e.from >= n || e.to >= n {
                return Err(Error::InvalidNetwork(format!(
                    "edge {} -> {} references a missing node",
                    e.from + 1,
                    e.to + 1
                )));
            }
            if e.from == e.to {
                return Err(Error::InvalidNetwork(format!("self loop at node {}", e.from + 1)));
            }
            if !(e.capacity.is_finite() && e.capacity > 0.0) {
                return Err(Error::InvalidNetwork(format!(
                    "edge {} -> {} has capacity {}",
                    e.from + 1,
                    e.to + 1,
                    e.capacity
                )));
            }
            if !seen.insert((e.from, e.to)) {
                return Err(Error::InvalidNetwork(format!(
                    "duplicate edge {} -> {}",
                    e.from + 1,
                    e.to + 1
                )));
            }
            if e.to == 0 {
                return Err(Error::InvalidNetwork("source has an incoming edge".into()));
            }
            if e.from >= first_dest {
                return Err(Error::InvalidNetwork(format!(
                    "destination has outgoing edge ({} -> {})",
                    e.from + 1,
                    e.to + 1
                )));
            }
            out_edges[e.from].push(k);
            in_edges[e.to].push(k);
        }

        // Kahn's algorithm; ties broken by node index for a stable order.
        let mut indeg: Vec<usize> = in_edges.iter().map(Vec::len).collect();
        let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut topo_order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            topo_order.push(v);
            for &k in &out_edges[v] {
                let w = self.edges[k].to;
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    ready.insert(w);
                }
            }
        }
        if topo_order.len() != n {
            return Err(Error::InvalidNetwork("cycle detected".into()));
        }

        let mut cache_eligible = self.cache_eligible;
        cache_eligible[0] = false;
        let net = Network {
            node_count: n,
            destinations: l,
            edges: self.edges,
            labels: self.labels,
            cache_cost: self.cache_cost,
            cache_eligible,
            edge_site: self.edge_site,
            in_edges,
            out_edges,
            topo_order,
        };
        let reach = net.reachable_from_source();
        if let Some(t) = net.destination_nodes().find(|&t| !reach[t]) {
            return Err(Error::InvalidNetwork(format!(
                "destination {} is unreachable from the source",
                t + 1
            )));
        }
        Ok(net)
    }
}

fn default_label(i: usize, n: usize, l: usize) -> String {
    if i == 0 {
        "s".into()
    } else if i >= n - l {
        format!("t{}", i - (n - l) + 1)
    } else {
        format!("{}", i + 1)
    }
}

impl Network {
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn destination_count(&self) -> usize {
        self.destinations
    }

    pub fn source(&self) -> usize {
        0
    }

    pub fn is_destination(&self, node: usize) -> bool {
        node >= self.node_count - self.destinations
    }

    pub fn destination_nodes(&self) -> impl Iterator<Item = usize> {
        self.node_count - self.destinations..self.node_count
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, k: usize) -> &Edge {
        &self.edges[k]
    }

    pub fn edge_index(&self, from: usize, to: usize) -> Option<usize> {
        self.out_edges[from].iter().copied().find(|&k| self.edges[k].to == to)
    }

    /// Incoming edge indices of `node`, in document order.
    pub fn in_edges(&self, node: usize) -> &[usize] {
        &self.in_edges[node]
    }

    /// Outgoing edge indices of `node`, in document order.
    pub fn out_edges(&self, node: usize) -> &[usize] {
        &self.out_edges[node]
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.topo_order
    }

    pub fn label(&self, node: usize) -> &str {
        &self.labels[node]
    }

    pub fn cache_cost(&self, node: usize) -> CostFamily {
        self.cache_cost[node]
    }

    pub fn cache_eligible(&self, node: usize) -> bool {
        self.cache_eligible[node]
    }

    pub fn eligible_mask(&self) -> &[bool] {
        &self.cache_eligible
    }

    pub fn is_edge_site(&self, node: usize) -> bool {
        self.edge_site[node]
    }

    /// Copy of this network whose cache-eligible set follows `scenario`.
    pub fn with_scenario(&self, scenario: Scenario) -> Network {
        let mut net = self.clone();
        for v in 0..self.node_count {
            net.cache_eligible[v] = v != 0
                && match scenario {
                    Scenario::No => false,
                    Scenario::Edge => self.edge_site[v],
                    Scenario::Peer => self.is_destination(v),
                    Scenario::EdgePeer => self.edge_site[v] || self.is_destination(v),
                    Scenario::All => true,
                };
        }
        net
    }

    /// Copy of this network where every node's cache cost is `family`.
    pub fn with_cache_cost(&self, family: CostFamily) -> Network {
        let mut net = self.clone();
        net.cache_cost.iter_mut().for_each(|c| *c = family);
        net
    }

    pub fn with_eligible(&self, mask: &[bool]) -> Network {
        assert_eq!(mask.len(), self.node_count);
        let mut net = self.clone();
        net.cache_eligible.copy_from_slice(mask);
        net.cache_eligible[0] = false;
        net
    }

    fn reachable_from_source(&self) -> Vec<bool> {
        let mut seen = vec![false; self.node_count];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &k in &self.out_edges[v] {
                let w = self.edges[k].to;
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    /// Canonical topology document; parsing it yields an equal network.
    pub fn to_topology(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "nodes {} {}", self.node_count, self.destinations);
        for v in 0..self.node_count {
            if self.labels[v] != default_label(v, self.node_count, self.destinations) {
                let _ = writeln!(out, "label {} {}", v + 1, self.labels[v]);
            }
        }
        for e in &self.edges {
            let _ = writeln!(out, "edge {} {} {}", e.from + 1, e.to + 1, e.capacity);
            if e.cost != (CostFamily::Mm1 { capacity: e.capacity }) {
                let _ = writeln!(out, "edgecost {} {} {}", e.from + 1, e.to + 1, e.cost);
            }
        }
        for v in 0..self.node_count {
            if self.cache_eligible[v] {
                let _ = writeln!(out, "cache {} {}", v + 1, self.cache_cost[v]);
            }
            if self.edge_site[v] {
                let _ = writeln!(out, "edgenode {}", v + 1);
            }
        }
        out
    }
}

/// How loads are measured in the optimizer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Units {
    /// Frame size and sparsity are already in link-capacity units.
    Raw,
    /// Symbols are converted to bits with `log2 q` bits per symbol.
    Bits,
}

/// A multicast session: a network plus the frame parameters.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Instance {
    pub network: Network,
    /// Frame size `B`.
    pub frame_size: f64,
    /// Update sparsity `ε`, in the same unit as `frame_size`.
    pub sparsity: f64,
    /// Number of rounds `M`.
    pub rounds: usize,
    pub field: Field,
    pub units: Units,
}

impl Instance {
    pub fn new(network: Network, frame_size: f64, sparsity: f64, rounds: usize, field: Field, units: Units) -> Result<Self> {
        if !(frame_size.is_finite() && frame_size > 0.0) {
            return Err(Error::InvalidInstance(format!("frame size {frame_size} must be positive")));
        }
        if !(sparsity >= 0.0 && sparsity <= frame_size) {
            return Err(Error::InvalidInstance(format!("sparsity {sparsity} outside [0, {frame_size}]")));
        }
        if rounds == 0 {
            return Err(Error::InvalidInstance("at least one round is required".into()));
        }
        let inst = Instance { network, frame_size, sparsity, rounds, field, units };
        let demand = inst.demand();
        for t in inst.network.destination_nodes() {
            let cut = min_cut(&inst.network, t);
            if demand >= cut {
                return Err(Error::InvalidInstance(format!(
                    "demand {demand} is not below the min-cut {cut} to destination {}",
                    inst.network.label(t)
                )));
            }
        }
        Ok(inst)
    }

    /// Preset used for the experiments: raw units and `ε = 1%` of `B`.
    pub fn preset(network: Network, frame_size: f64, rounds: usize) -> Result<Self> {
        Instance::new(network, frame_size, 0.01 * frame_size, rounds, Field::new(2)?, Units::Raw)
    }

    fn scale(&self) -> f64 {
        match self.units {
            Units::Raw => 1.0,
            Units::Bits => self.field.bits_per_symbol(),
        }
    }

    /// Rate each destination must receive per round (`B` in load units).
    pub fn demand(&self) -> f64 {
        self.frame_size * self.scale()
    }

    /// Load of a function-update message on one edge (`2ε` in load units).
    pub fn update_load(&self) -> f64 {
        2.0 * self.sparsity * self.scale()
    }

    pub fn with_network(&self, network: Network) -> Self {
        Instance { network, ..self.clone() }
    }
}

/// Parses and validates a topology document.
pub fn load_topology(text: &str) -> Result<Network> {
    let mut builder: Option<NetworkBuilder> = None;
    let mut edge_costs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        let err = |message: String| Error::Parse { line, message };
        let index = |pos: usize, b: &NetworkBuilder| -> Result<usize> {
            let raw = fields.get(pos).ok_or_else(|| err(format!("missing field {pos}")))?;
            let v: usize = raw.parse().map_err(|_| err(format!("bad node index `{raw}`")))?;
            if v == 0 || v > b.node_count {
                return Err(err(format!("node index {v} out of range 1..={}", b.node_count)));
            }
            Ok(v - 1)
        };
        let number = |pos: usize| -> Result<f64> {
            let raw = fields.get(pos).ok_or_else(|| err(format!("missing field {pos}")))?;
            raw.parse::<f64>().map_err(|_| err(format!("bad number `{raw}`")))
        };
        let arity = |lo: usize, hi: usize| -> Result<()> {
            if fields.len() < lo || fields.len() > hi {
                return Err(err(format!("`{}` takes {} to {} fields", fields[0], lo - 1, hi - 1)));
            }
            Ok(())
        };

        if fields[0] == "nodes" {
            arity(3, 3)?;
            if builder.is_some() {
                return Err(err("duplicate `nodes` line".into()));
            }
            let n: usize = fields[1].parse().map_err(|_| err(format!("bad node count `{}`", fields[1])))?;
            let l: usize =
                fields[2].parse().map_err(|_| err(format!("bad destination count `{}`", fields[2])))?;
            if n < 2 || l == 0 || l >= n {
                return Err(err(format!("invalid sizes N = {n}, L = {l}")));
            }
            builder = Some(NetworkBuilder::new(n, l));
            continue;
        }
        let b = builder.as_mut().ok_or_else(|| err("`nodes N L` must come first".into()))?;
        match fields[0] {
            "edge" => {
                arity(4, 4)?;
                let (from, to) = (index(1, b)?, index(2, b)?);
                let capacity = number(3)?;
                b.edges.push(Edge { from, to, capacity, cost: CostFamily::Mm1 { capacity } });
            }
            "edgecost" => {
                arity(4, 5)?;
                let (from, to) = (index(1, b)?, index(2, b)?);
                let param = if fields.len() == 5 { Some(number(4)?) } else { None };
                edge_costs.push((line, from, to, fields[3].to_string(), param));
            }
            "cache" => {
                arity(3, 4)?;
                let v = index(1, b)?;
                let param = if fields.len() == 4 { Some(number(3)?) } else { None };
                b.cache_cost[v] = CostFamily::parse(fields[2], param, line)?;
                b.cache_eligible[v] = true;
            }
            "edgenode" => {
                arity(2, 2)?;
                let v = index(1, b)?;
                b.edge_site[v] = true;
            }
            "label" => {
                arity(3, 3)?;
                let v = index(1, b)?;
                b.labels[v] = fields[2].to_string();
            }
            other => return Err(err(format!("unknown directive `{other}`"))),
        }
    }
    let mut b = builder.ok_or(Error::Parse { line: 0, message: "missing `nodes N L` line".into() })?;
    for (line, from, to, kind, param) in edge_costs {
        let e = b
            .edges
            .iter_mut()
            .find(|e| e.from == from && e.to == to)
            .ok_or(Error::Parse { line, message: format!("edgecost for missing edge {} -> {}", from + 1, to + 1) })?;
        let param = if kind == "mm1" { param.or(Some(e.capacity)) } else { param };
        e.cost = CostFamily::parse(&kind, param, line)?;
    }
    b.build()
}

/// Maximum flow from `source` to `sink` under per-edge capacities.
pub fn max_flow(net: &Network, capacity: &[f64], source: usize, sink: usize) -> f64 {
    max_flow_assignment(net, capacity, source, sink).0
}

/// Edmonds-Karp: the flow value and the per-edge flow achieving it.
pub fn max_flow_assignment(net: &Network, capacity: &[f64], source: usize, sink: usize) -> (f64, Vec<f64>) {
    assert_eq!(capacity.len(), net.edges().len());
    let n = net.node_count();
    // Residual arcs: 2k forward, 2k+1 backward.
    let mut residual: Vec<f64> = capacity.iter().flat_map(|&c| [c.max(0.0), 0.0]).collect();
    let mut adjacency = vec![Vec::new(); n];
    for (k, e) in net.edges().iter().enumerate() {
        adjacency[e.from].push(2 * k);
        adjacency[e.to].push(2 * k + 1);
    }
    let head = |arc: usize| {
        let e = &net.edges()[arc / 2];
        if arc.is_multiple_of(2) {
            e.to
        } else {
            e.from
        }
    };
    let mut total = 0.0;
    loop {
        let mut pred: Vec<Option<usize>> = vec![None; n];
        let mut visited = vec![false; n];
        visited[source] = true;
        let mut queue = VecDeque::from([source]);
        while let Some(v) = queue.pop_front() {
            if v == sink {
                break;
            }
            for &arc in &adjacency[v] {
                let w = head(arc);
                if !visited[w] && residual[arc] > 1e-12 {
                    visited[w] = true;
                    pred[w] = Some(arc);
                    queue.push_back(w);
                }
            }
        }
        if !visited[sink] {
            break;
        }
        let mut bottleneck = f64::INFINITY;
        let mut v = sink;
        while let Some(arc) = pred[v] {
            bottleneck = bottleneck.min(residual[arc]);
            v = head(arc ^ 1);
        }
        let mut v = sink;
        while let Some(arc) = pred[v] {
            residual[arc] -= bottleneck;
            residual[arc ^ 1] += bottleneck;
            v = head(arc ^ 1);
        }
        total += bottleneck;
    }
    let flow = (0..net.edges().len()).map(|k| residual[2 * k + 1]).collect();
    (total, flow)
}

/// Minimum source-to-`terminal` cut under the link capacities.
pub fn min_cut(net: &Network, terminal: usize) -> f64 {
    let caps: Vec<f64> = net.edges().iter().map(|e| e.capacity).collect();
    max_flow(net, &caps, 0, terminal)
}
