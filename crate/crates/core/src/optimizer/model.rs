//! The relaxed cost `Ψ(μ, κ)` and its derivatives.

use crate::network::{CostFamily, Instance};

use super::FlowState;

/// Precomputed view of an instance for fast objective evaluation.
#[derive(Clone, Debug)]
pub(crate) struct Model {
    pub exponent: i32,
    pub nodes: usize,
    pub edges: usize,
    pub terminals: usize,
    pub tail: Vec<usize>,
    pub head: Vec<usize>,
    pub edge_cost: Vec<CostFamily>,
    pub cache_cost: Vec<CostFamily>,
    pub eligible: Vec<bool>,
    pub in_edges: Vec<Vec<usize>>,
    pub out_edges: Vec<Vec<usize>>,
    /// Per-terminal node supply: `+B` at the source, `-B` at the terminal.
    pub theta: Vec<f64>,
    /// `f_e(2ε)` for every edge.
    pub update_cost: Vec<f64>,
    /// `M - 1`.
    pub later_rounds: f64,
    pub demand: f64,
}

/// Per-edge `σ̃` and per-node `σ̃_i` at some `μ`.
#[derive(Clone, Debug)]
pub(crate) struct Loads {
    pub edge: Vec<f64>,
    pub node: Vec<f64>,
}

/// `a * x` with `0 * inf = 0`, so pinned terms never poison the sum.
#[inline]
fn weighted(a: f64, x: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * x
    }
}

impl Model {
    pub fn new(inst: &Instance, exponent: u32) -> Self {
        let net = &inst.network;
        let nodes = net.node_count();
        let edges = net.edges().len();
        let terminals = net.destination_count();
        let demand = inst.demand();
        let mut theta = vec![0.0; terminals * nodes];
        for (t, node) in net.destination_nodes().enumerate() {
            theta[t * nodes + net.source()] = demand;
            theta[t * nodes + node] = -demand;
        }
        let u = inst.update_load();
        Model {
            exponent: exponent as i32,
            nodes,
            edges,
            terminals,
            tail: net.edges().iter().map(|e| e.from).collect(),
            head: net.edges().iter().map(|e| e.to).collect(),
            edge_cost: net.edges().iter().map(|e| e.cost).collect(),
            cache_cost: (0..nodes).map(|v| net.cache_cost(v)).collect(),
            eligible: net.eligible_mask().to_vec(),
            in_edges: (0..nodes).map(|v| net.in_edges(v).to_vec()).collect(),
            out_edges: (0..nodes).map(|v| net.out_edges(v).to_vec()).collect(),
            theta,
            update_cost: net.edges().iter().map(|e| e.cost.eval_unchecked(u)).collect(),
            later_rounds: (inst.rounds - 1) as f64,
            demand,
        }
    }

    /// `ℓⁿ` aggregate of the per-terminal flows on edge `e`, computed in
    /// max-factored form so large exponents cannot overflow.
    pub fn sigma_edge(&self, mu: &[f64], e: usize) -> f64 {
        let max = (0..self.terminals).map(|t| mu[t * self.edges + e]).fold(0.0, f64::max);
        if max <= 0.0 {
            return 0.0;
        }
        let sum: f64 = (0..self.terminals).map(|t| (mu[t * self.edges + e] / max).powi(self.exponent)).sum();
        max * sum.powf(1.0 / self.exponent as f64)
    }

    pub fn loads(&self, mu: &[f64]) -> Loads {
        let edge: Vec<f64> = (0..self.edges).map(|e| self.sigma_edge(mu, e)).collect();
        let mut node = vec![0.0; self.nodes];
        for (e, &s) in edge.iter().enumerate() {
            node[self.tail[e]] += s;
        }
        Loads { edge, node }
    }

    pub fn objective(&self, mu: &[f64], kappa: &[f64]) -> f64 {
        let loads = self.loads(mu);
        self.objective_with(&loads, kappa)
    }

    pub fn objective_with(&self, loads: &Loads, kappa: &[f64]) -> f64 {
        let link: Vec<f64> = (0..self.edges).map(|e| self.edge_cost[e].eval_unchecked(loads.edge[e])).collect();
        let first: f64 = link.iter().sum();
        let mut later = 0.0;
        for i in 0..self.nodes {
            if self.in_edges[i].is_empty() {
                continue;
            }
            let k = kappa[i];
            let carried: f64 = self.in_edges[i].iter().map(|&e| link[e]).sum();
            let updated: f64 = self.in_edges[i].iter().map(|&e| self.update_cost[e]).sum();
            let stored = self.cache_cost[i].eval_unchecked(loads.node[i]);
            later += weighted(1.0 - k, carried) + weighted(k, stored + updated);
        }
        first + weighted(self.later_rounds, later)
    }

    /// `(μ/σ̃)^(n-1)`. On an idle edge this is the one-sided derivative of
    /// `σ̃` as a single flow starts, which is 1.
    #[inline]
    fn share(&self, mu: f64, sigma: f64) -> f64 {
        if sigma <= 0.0 {
            1.0
        } else if mu > 0.0 {
            (mu / sigma).powi(self.exponent - 1)
        } else {
            0.0
        }
    }

    /// Marginal cost of `σ̃_e` with everything else fixed.
    #[inline]
    fn edge_weight(&self, loads: &Loads, kappa: &[f64], e: usize) -> f64 {
        let (i, j) = (self.tail[e], self.head[e]);
        let s = loads.edge[e];
        let link = self.edge_cost[e].deriv_unchecked(s) * (1.0 + self.later_rounds * (1.0 - kappa[j]));
        let store = weighted(self.later_rounds * kappa[i], self.cache_cost[i].deriv_unchecked(loads.node[i]));
        link + store
    }

    pub fn grad_mu_into(&self, mu: &[f64], kappa: &[f64], loads: &Loads, out: &mut [f64]) {
        for e in 0..self.edges {
            let w = self.edge_weight(loads, kappa, e);
            for t in 0..self.terminals {
                let idx = t * self.edges + e;
                out[idx] = weighted(self.share(mu[idx], loads.edge[e]), w);
            }
        }
    }

    pub fn grad_kappa_into(&self, loads: &Loads, out: &mut [f64]) {
        for i in 0..self.nodes {
            if self.in_edges[i].is_empty() {
                out[i] = 0.0;
                continue;
            }
            let swing: f64 = self.in_edges[i]
                .iter()
                .map(|&e| self.update_cost[e] - self.edge_cost[e].eval_unchecked(loads.edge[e]))
                .sum();
            out[i] = self.later_rounds * (self.cache_cost[i].eval_unchecked(loads.node[i]) + swing);
        }
    }

    /// Gershgorin bound on each row of the `μ`-Hessian: an upper estimate
    /// of the local curvature seen by every flow variable.
    pub fn curvature_into(&self, mu: &[f64], kappa: &[f64], loads: &Loads, out: &mut [f64]) {
        let n = self.exponent as f64;
        let m1 = self.later_rounds;
        let mut share_sum = vec![0.0; self.edges];
        for (e, sum) in share_sum.iter_mut().enumerate() {
            *sum = (0..self.terminals).map(|t| self.share(mu[t * self.edges + e], loads.edge[e])).sum();
        }
        let mut node_share = vec![0.0; self.nodes];
        for e in 0..self.edges {
            node_share[self.tail[e]] += share_sum[e];
        }
        for e in 0..self.edges {
            let (i, j) = (self.tail[e], self.head[e]);
            let s = loads.edge[e];
            let link2 = self.edge_cost[e].second_deriv_unchecked(s) * (1.0 + m1 * (1.0 - kappa[j]));
            let store2 = weighted(m1 * kappa[i], self.cache_cost[i].second_deriv_unchecked(loads.node[i]));
            let w = self.edge_weight(loads, kappa, e);
            for t in 0..self.terminals {
                let idx = t * self.edges + e;
                let r = self.share(mu[idx], s);
                let norm_curv = if s > 0.0 && mu[idx] > 0.0 {
                    let ratio = mu[idx] / s;
                    let diag = ratio.powi(self.exponent - 2) - r * r;
                    let off = r * (share_sum[e] - r);
                    (n - 1.0) / s * (diag.abs() + off)
                } else {
                    0.0
                };
                out[idx] = weighted(link2, r * share_sum[e]) + weighted(store2, r * node_share[i]) + weighted(w, norm_curv);
            }
        }
    }

    /// Net outflow `y_i^(t)` for every terminal and node.
    pub fn net_outflow_into(&self, mu: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for t in 0..self.terminals {
            for e in 0..self.edges {
                let f = mu[t * self.edges + e];
                out[t * self.nodes + self.tail[e]] += f;
                out[t * self.nodes + self.head[e]] -= f;
            }
        }
    }

    pub fn zero_state(&self) -> FlowState {
        FlowState {
            terminals: self.terminals,
            edges: self.edges,
            nodes: self.nodes,
            mu: vec![0.0; self.terminals * self.edges],
            kappa: vec![0.0; self.nodes],
            p: vec![0.0; self.terminals * self.nodes],
            lambda: vec![0.0; self.terminals * self.edges],
            gamma_lo: vec![0.0; self.nodes],
            gamma_hi: vec![0.0; self.nodes],
        }
    }
}
