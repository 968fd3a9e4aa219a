//! Random linear network code for the first (cache-free) round.
//!
//! Every node `i` applies a coding matrix `G_i` to the concatenation of its
//! incoming edge payloads `x_i` (in-edge order) and splits `y_i = G_i x_i`
//! across its out-edges (out-edge order). The source sees `x_1 = m`. A
//! destination's coding matrix is its decoding matrix, so its output is the
//! decoded frame and `A_t = I`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gf::{FMatrix, Field};
use crate::network::{max_flow, Network};

/// Default number of coefficient draws before giving up.
pub const RETRY_BUDGET: usize = 32;

/// Symbols carried per round on each edge, indexed like `Network::edges`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeDims(pub Vec<usize>);

impl EdgeDims {
    pub fn uniform(net: &Network, symbols: usize) -> Self {
        EdgeDims(vec![symbols; net.edges().len()])
    }

    /// Max-flow to `terminal` with the symbol counts as capacities.
    pub fn cut_to(&self, net: &Network, terminal: usize) -> usize {
        let caps: Vec<f64> = self.0.iter().map(|&d| d as f64).collect();
        max_flow(net, &caps, 0, terminal).round() as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkCode {
    field: Field,
    frame_len: usize,
    dims: Vec<usize>,
    endpoints: Vec<(usize, usize)>,
    /// Row offset of each edge inside its tail's output vector.
    out_offset: Vec<usize>,
    /// Column offset of each edge inside its head's input vector.
    in_offset: Vec<usize>,
    coding: Vec<FMatrix>,
    transfer: Vec<FMatrix>,
    attempts: usize,
}

impl NetworkCode {
    pub fn field(&self) -> Field {
        self.field
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Coefficient draws used before every destination could decode.
    pub fn attempts(&self) -> usize {
        self.attempts
    }

    /// `G_i`; for a destination this is the decoding matrix.
    pub fn coding(&self, node: usize) -> &FMatrix {
        &self.coding[node]
    }

    /// `A_i`, with `y_i = A_i m` in every round.
    pub fn transfer(&self, node: usize) -> &FMatrix {
        &self.transfer[node]
    }

    /// Output length of node `i` in symbols.
    pub fn output_len(&self, node: usize) -> usize {
        self.transfer[node].rows()
    }

    /// Block of the tail's `A` carried on edge `k`.
    pub fn edge_transfer(&self, k: usize) -> FMatrix {
        let start = self.out_offset[k];
        self.transfer[self.endpoints[k].0].select_rows(start..start + self.dims[k])
    }

    /// Block of the head's `G` that multiplies the payload of edge `k`.
    pub fn edge_coding(&self, k: usize) -> FMatrix {
        let start = self.in_offset[k];
        let cols: Vec<usize> = (start..start + self.dims[k]).collect();
        self.coding[self.endpoints[k].1].select_columns(&cols)
    }

    /// Slice of a tail output vector that travels on edge `k`.
    pub fn edge_payload<'a>(&self, k: usize, tail_output: &'a [u64]) -> &'a [u64] {
        let start = self.out_offset[k];
        &tail_output[start..start + self.dims[k]]
    }

    /// Cache-free forward pass: the output vector `y_i` of every node.
    pub fn propagate(&self, net: &Network, frame: &[u64]) -> Result<Vec<Vec<u64>>> {
        if frame.len() != self.frame_len {
            return Err(Error::DimensionMismatch(format!(
                "frame has {} symbols, code expects {}",
                frame.len(),
                self.frame_len
            )));
        }
        let mut outputs: Vec<Vec<u64>> = vec![Vec::new(); net.node_count()];
        for &v in net.topo_order() {
            let input = if v == net.source() {
                frame.to_vec()
            } else {
                let mut x = Vec::new();
                for &k in net.in_edges(v) {
                    x.extend_from_slice(self.edge_payload(k, &outputs[self.endpoints[k].0]));
                }
                x
            };
            outputs[v] = self.coding[v].mul_vec(&input)?;
        }
        Ok(outputs)
    }

    /// Runs one cache-free round and returns each destination's output.
    pub fn verify_decoding(&self, net: &Network, frame: &[u64]) -> Result<Vec<Vec<u64>>> {
        let outputs = self.propagate(net, frame)?;
        let decoded: Vec<Vec<u64>> = net.destination_nodes().map(|t| outputs[t].clone()).collect();
        for (t, out) in net.destination_nodes().zip(&decoded) {
            if out.as_slice() != frame {
                return Err(Error::DecodeMismatch { node: t + 1, round: 1 });
            }
        }
        Ok(decoded)
    }

    /// Plain-text dump of every `G_i` and `A_i`.
    pub fn debug_dump(&self, net: &Network) -> String {
        let mut out = String::new();
        for v in 0..net.node_count() {
            out.push_str(&format!("node {} G = {:?}\nnode {} A = {:?}\n", net.label(v), self.coding[v], net.label(v), self.transfer[v]));
        }
        out
    }
}

/// Draws a random code realizing `dims` that lets every destination decode
/// a `frame_len`-symbol frame.
pub fn build_code(net: &Network, field: Field, frame_len: usize, dims: &EdgeDims, seed: u64) -> Result<NetworkCode> {
    build_code_with_budget(net, field, frame_len, dims, seed, RETRY_BUDGET)
}

pub fn build_code_with_budget(
    net: &Network,
    field: Field,
    frame_len: usize,
    dims: &EdgeDims,
    seed: u64,
    budget: usize,
) -> Result<NetworkCode> {
    if dims.0.len() != net.edges().len() {
        return Err(Error::DimensionMismatch(format!(
            "{} edge dims for {} edges",
            dims.0.len(),
            net.edges().len()
        )));
    }
    for t in net.destination_nodes() {
        let cut = dims.cut_to(net, t);
        if cut < frame_len {
            return Err(Error::InfeasibleDims { node: t + 1, cut, needed: frame_len });
        }
    }

    let n = net.node_count();
    let endpoints: Vec<(usize, usize)> = net.edges().iter().map(|e| (e.from, e.to)).collect();
    let mut out_offset = vec![0; dims.0.len()];
    let mut in_offset = vec![0; dims.0.len()];
    let mut out_len = vec![0; n];
    let mut in_len = vec![0; n];
    for v in 0..n {
        for &k in net.out_edges(v) {
            out_offset[k] = out_len[v];
            out_len[v] += dims.0[k];
        }
        for &k in net.in_edges(v) {
            in_offset[k] = in_len[v];
            in_len[v] += dims.0[k];
        }
    }
    in_len[net.source()] = frame_len;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..budget {
        // Each retry reads its own stream so the outcome depends only on (seed, attempt).
        rng.set_stream(attempt as u64);
        rng.set_word_pos(0);
        let mut coding: Vec<FMatrix> = vec![FMatrix::zeros(field, 0, 0); n];
        let mut transfer: Vec<FMatrix> = vec![FMatrix::zeros(field, 0, frame_len); n];
        let mut decodable = true;
        for &v in net.topo_order() {
            let received = if v == net.source() {
                FMatrix::identity(field, frame_len)
            } else {
                let blocks: Vec<FMatrix> = net
                    .in_edges(v)
                    .iter()
                    .map(|&k| {
                        let start = out_offset[k];
                        transfer[endpoints[k].0].select_rows(start..start + dims.0[k])
                    })
                    .collect();
                let refs: Vec<&FMatrix> = blocks.iter().collect();
                FMatrix::vstack(field, frame_len, &refs)?
            };
            if net.is_destination(v) {
                match received.left_inverse() {
                    Some(decoder) => {
                        coding[v] = decoder;
                        transfer[v] = FMatrix::identity(field, frame_len);
                    }
                    None => {
                        decodable = false;
                        break;
                    }
                }
            } else {
                let g = FMatrix::random(field, out_len[v], in_len[v], &mut rng);
                transfer[v] = g.mul(&received)?;
                coding[v] = g;
            }
        }
        if decodable {
            return Ok(NetworkCode {
                field,
                frame_len,
                dims: dims.0.clone(),
                endpoints,
                out_offset,
                in_offset,
                coding,
                transfer,
                attempts: attempt + 1,
            });
        }
    }
    Err(Error::RetriesExhausted {
        attempts: budget,
        context: format!("no destination-decodable code over GF({})", field.modulus()),
    })
}
