//! Function-update codec for a caching node.
//!
//! A caching node `i` keeps last round's output `y_i = A m`. When the frame
//! changes by an `ε`-sparse `e`, each in-neighbor `ℓ` sends `H_ℓ y_ℓ` with
//! `H_ℓ = S C_ℓ` (`C_ℓ` the block of `G_i` for that in-edge). The node adds
//! the messages up to get `S A m'`, subtracts `S y_i` and recovers `A e` from
//! only `γ = min(2ε, rank A)` symbols per in-edge.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::gf::{update_code_bound, FMatrix, Field};
use crate::lnc::{NetworkCode, RETRY_BUDGET};
use crate::network::Network;

/// How the codec recovers `A e`.
#[derive(Clone, Debug, PartialEq)]
pub enum Recovery {
    /// `γ = rank A`: `A = R S A`, so `A e = R ρ` directly.
    Rank { r: FMatrix },
    /// `γ = 2ε < rank A`: exhaustive search over supports of size `≤ ε`.
    Sparse,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateCodec {
    node: usize,
    sparsity: usize,
    gamma: usize,
    a: FMatrix,
    s: FMatrix,
    sa: FMatrix,
    /// In-edge indices, aligned with `encoders`.
    in_edges: Vec<usize>,
    encoders: Vec<FMatrix>,
    recovery: Recovery,
}

/// Enumerates all `size`-subsets of `0..n` in lexicographic order.
pub(crate) fn for_each_subset(n: usize, size: usize, mut f: impl FnMut(&[usize]) -> bool) {
    if size > n {
        return;
    }
    let mut idx: Vec<usize> = (0..size).collect();
    loop {
        if !f(&idx) {
            return;
        }
        let mut i = size;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if idx[i] < n - size + i {
                idx[i] += 1;
                for j in i + 1..size {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Builds the codec for caching node `node` under `sparsity`-sparse updates.
pub fn build_codec(net: &Network, code: &NetworkCode, node: usize, sparsity: usize, seed: u64) -> Result<UpdateCodec> {
    if node == net.source() || net.in_edges(node).is_empty() {
        return Err(Error::InvalidInstance(format!("node {} has no in-neighbors to encode for it", node + 1)));
    }
    let field = code.field();
    let b = code.frame_len();
    if sparsity > 0 {
        let required = update_code_bound(b, sparsity).unwrap_or(u64::MAX);
        if field.modulus() < required {
            return Err(Error::FieldTooSmall { modulus: field.modulus(), required });
        }
    }
    let a = code.transfer(node).clone();
    let theta = a.rows();
    let rank = a.rank();
    let gamma = (2 * sparsity).min(rank);
    let in_edges = net.in_edges(node).to_vec();
    let blocks: Vec<FMatrix> = in_edges.iter().map(|&k| code.edge_coding(k)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..RETRY_BUDGET {
        let s = FMatrix::random(field, gamma, theta, &mut rng);
        let sa = s.mul(&a)?;
        let recovery = if gamma == rank {
            if sa.rank() != rank {
                continue;
            }
            Recovery::Rank { r: recovery_matrix(&a, &sa)? }
        } else {
            if !injective_on_supports(&a, &sa, (2 * sparsity).min(b)) {
                continue;
            }
            Recovery::Sparse
        };
        let encoders = blocks.iter().map(|c| s.mul(c)).collect::<Result<Vec<_>>>()?;
        return Ok(UpdateCodec { node, sparsity, gamma, a, s, sa, in_edges, encoders, recovery });
    }
    Err(Error::RetriesExhausted {
        attempts: RETRY_BUDGET,
        context: format!("no injective compression for node {} over GF({})", node + 1, field.modulus()),
    })
}

/// `R` with `R · (S A) = A`, solved row by row.
fn recovery_matrix(a: &FMatrix, sa: &FMatrix) -> Result<FMatrix> {
    let field = a.field();
    let sat = sa.transpose();
    let mut r = FMatrix::zeros(field, a.rows(), sa.rows());
    for i in 0..a.rows() {
        let row = sat
            .solve(a.row(i))?
            .ok_or_else(|| Error::DimensionMismatch("row of A outside the row space of S A".into()))?;
        for (j, v) in row.into_iter().enumerate() {
            r.set(i, j, v);
        }
    }
    Ok(r)
}

fn injective_on_supports(a: &FMatrix, sa: &FMatrix, size: usize) -> bool {
    let mut ok = true;
    for_each_subset(a.cols(), size, |t| {
        ok = sa.select_columns(t).rank() == a.select_columns(t).rank();
        ok
    });
    ok
}

impl UpdateCodec {
    pub fn node(&self) -> usize {
        self.node
    }

    /// Symbols per in-edge per round.
    pub fn gamma(&self) -> usize {
        self.gamma
    }

    pub fn compression(&self) -> &FMatrix {
        &self.s
    }

    pub fn recovery(&self) -> &Recovery {
        &self.recovery
    }

    pub fn in_edges(&self) -> &[usize] {
        &self.in_edges
    }

    /// `H_ℓ` for the `slot`-th in-edge.
    pub fn encoder(&self, slot: usize) -> &FMatrix {
        &self.encoders[slot]
    }

    /// Message sent by the in-neighbor on in-edge slot `slot`.
    pub fn encode(&self, slot: usize, payload: &[u64]) -> Result<Vec<u64>> {
        self.encoders[slot].mul_vec(payload)
    }

    /// Recovers the new output from the summed syndrome and last round's output.
    pub fn decode(&self, syndrome: &[u64], cache: &[u64]) -> Result<Vec<u64>> {
        let field = self.a.field();
        if syndrome.len() != self.gamma || cache.len() != self.a.rows() {
            return Err(Error::DimensionMismatch(format!(
                "syndrome {} / cache {} for gamma {} / theta {}",
                syndrome.len(),
                cache.len(),
                self.gamma,
                self.a.rows()
            )));
        }
        let s_cache = self.s.mul_vec(cache)?;
        let residual: Vec<u64> = syndrome.iter().zip(&s_cache).map(|(&x, &y)| field.sub(x, y)).collect();
        let delta = match &self.recovery {
            Recovery::Rank { r } => r.mul_vec(&residual)?,
            Recovery::Sparse => self.search_delta(&residual)?,
        };
        Ok(cache.iter().zip(&delta).map(|(&c, &d)| field.add(c, d)).collect())
    }

    fn search_delta(&self, residual: &[u64]) -> Result<Vec<u64>> {
        let b = self.a.cols();
        for size in 0..=self.sparsity.min(b) {
            let mut found: Option<Vec<u64>> = None;
            let mut failure = None;
            for_each_subset(b, size, |t| {
                let solution = match self.sa.select_columns(t).solve(residual) {
                    Ok(s) => s,
                    Err(e) => {
                        failure = Some(e);
                        return false;
                    }
                };
                if let Some(e_t) = solution {
                    let delta = self.a.select_columns(t).mul_vec(&e_t).expect("shapes agree");
                    match &found {
                        Some(prev) if *prev != delta => {
                            failure = Some(Error::AmbiguousDecode { node: self.node + 1 });
                            return false;
                        }
                        Some(_) => {}
                        None => found = Some(delta),
                    }
                }
                true
            });
            if let Some(e) = failure {
                return Err(e);
            }
            if let Some(delta) = found {
                return Ok(delta);
            }
        }
        Err(Error::NoConsistentSupport { node: self.node + 1, sparsity: self.sparsity })
    }
}

/// Smallest prime field admissible for `frame_len` symbols and `sparsity`.
pub fn admissible_field(frame_len: usize, sparsity: usize) -> Result<Field> {
    Field::smallest_admissible(frame_len, sparsity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lnc::{build_code, EdgeDims};
    use crate::network::load_topology;
    use rand::Rng;

    /// Single-edge network whose destination is the caching node; its `A` is
    /// overwritten through a relay so arbitrary `A` can be tested.
    fn relay_code(b: usize, q: u64, seed: u64) -> (Network, NetworkCode) {
        let doc = format!("nodes 3 1\nedge 1 2 {b}\nedge 2 3 {b}\n");
        let net = load_topology(&doc).unwrap();
        let field = Field::new(q).unwrap();
        let code = build_code(&net, field, b, &EdgeDims(vec![b, b]), seed).unwrap();
        (net, code)
    }

    fn sparse_error<R: Rng>(field: Field, b: usize, weight: usize, rng: &mut R) -> Vec<u64> {
        let mut e = vec![0; b];
        let mut placed = 0;
        while placed < weight {
            let i = rng.gen_range(0..b);
            if e[i] == 0 {
                e[i] = field.random_nonzero(rng);
                placed += 1;
            }
        }
        e
    }

    #[test]
    fn subsets_are_enumerated() {
        let mut seen = Vec::new();
        for_each_subset(4, 2, |t| {
            seen.push(t.to_vec());
            true
        });
        assert_eq!(seen.len(), 6);
        assert_eq!(seen[0], [0, 1]);
        assert_eq!(seen[5], [2, 3]);
        let mut empty = 0;
        for_each_subset(3, 0, |_| {
            empty += 1;
            true
        });
        assert_eq!(empty, 1);
    }

    #[test]
    fn zero_sparsity_sends_nothing() {
        let (net, code) = relay_code(4, 37, 1);
        let codec = build_codec(&net, &code, 1, 0, 0).unwrap();
        assert_eq!(codec.gamma(), 0);
        assert!(codec.encode(0, &[1, 2, 3, 4]).unwrap().is_empty());
        let cache = code.transfer(1).mul_vec(&[5, 6, 7, 8]).unwrap();
        assert_eq!(codec.decode(&[], &cache).unwrap(), cache);
    }

    #[test]
    fn four_symbols_one_sparse_uses_two() {
        let (net, code) = relay_code(4, 37, 2);
        assert_eq!(code.transfer(1).rank(), 4);
        let codec = build_codec(&net, &code, 1, 1, 3).unwrap();
        assert_eq!(codec.gamma(), 2);
        assert_eq!(codec.recovery(), &Recovery::Sparse);
    }

    #[test]
    fn rank_branch_for_low_rank_transfer() {
        // Node 2 forwards a single symbol, so rank A = 1 < 2ε = 4.
        let net = load_topology("nodes 3 1\nedge 1 2 1\nedge 2 3 1\nedge 1 3 4\n").unwrap();
        let field = Field::smallest_admissible(4, 2).unwrap();
        let code = build_code(&net, field, 4, &EdgeDims(vec![1, 1, 4]), 0).unwrap();
        assert_eq!(code.transfer(1).rank(), 1);
        let codec = build_codec(&net, &code, 1, 2, 0).unwrap();
        assert_eq!(codec.gamma(), 1);
        assert!(matches!(codec.recovery(), Recovery::Rank { .. }));
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let x: Vec<u64> = (0..4).map(|_| field.random(&mut rng)).collect();
            let e = sparse_error(field, 4, 2, &mut rng);
            let x2: Vec<u64> = x.iter().zip(&e).map(|(&a, &b)| field.add(a, b)).collect();
            let a = code.transfer(1);
            let cache = a.mul_vec(&x).unwrap();
            let syndrome = codec.encode(0, &code.edge_transfer(0).mul_vec(&x2).unwrap()).unwrap();
            assert_eq!(codec.decode(&syndrome, &cache).unwrap(), a.mul_vec(&x2).unwrap());
        }
    }

    #[test]
    fn field_bound_is_enforced() {
        let (net, code) = relay_code(4, 31, 1);
        let err = build_codec(&net, &code, 1, 1, 0).unwrap_err();
        assert_eq!(err, Error::FieldTooSmall { modulus: 31, required: 32 });
    }

    #[test]
    fn encoders_sum_to_s_a() {
        let net = load_topology(crate::network::fixture("butterfly").unwrap()).unwrap();
        let field = Field::smallest_admissible(4, 1).unwrap();
        let code = build_code(&net, field, 4, &EdgeDims::uniform(&net, 2), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for node in 1..net.node_count() {
            let codec = build_codec(&net, &code, node, 1, node as u64).unwrap();
            assert!(codec.gamma() <= code.coding(node).rank());
            for _ in 0..10 {
                let m: Vec<u64> = (0..4).map(|_| field.random(&mut rng)).collect();
                let outputs = code.propagate(&net, &m).unwrap();
                let mut total = vec![0; codec.gamma()];
                for (slot, &k) in codec.in_edges().iter().enumerate() {
                    let msg = codec.encode(slot, code.edge_payload(k, &outputs[net.edge(k).from])).unwrap();
                    total.iter_mut().zip(msg).for_each(|(t, v)| *t = field.add(*t, v));
                }
                let expected = codec.compression().mul(code.transfer(node)).unwrap().mul_vec(&m).unwrap();
                assert_eq!(total, expected);
                assert!(codec.encode(0, &vec![0; code.dims()[codec.in_edges()[0]]]).unwrap().iter().all(|&v| v == 0));
            }
        }
    }

    #[test]
    fn one_sparse_updates_decode_exactly() {
        let (net, code) = relay_code(4, 37, 5);
        let field = code.field();
        let codec = build_codec(&net, &code, 1, 1, 6).unwrap();
        let a = code.transfer(1);
        let p = code.edge_transfer(0);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for pos in 0..4 {
            for _ in 0..50 {
                let x: Vec<u64> = (0..4).map(|_| field.random(&mut rng)).collect();
                let mut x2 = x.clone();
                x2[pos] = field.add(x2[pos], field.random_nonzero(&mut rng));
                let cache = a.mul_vec(&x).unwrap();
                let syndrome = codec.encode(0, &p.mul_vec(&x2).unwrap()).unwrap();
                assert_eq!(codec.decode(&syndrome, &cache).unwrap(), a.mul_vec(&x2).unwrap());
            }
        }
        // e = 0 leaves the cache unchanged.
        let x = [1, 2, 3, 4];
        let cache = a.mul_vec(&x).unwrap();
        let syndrome = codec.encode(0, &p.mul_vec(&x).unwrap()).unwrap();
        assert_eq!(codec.decode(&syndrome, &cache).unwrap(), cache);
    }

    #[test]
    fn oversparse_errors_never_decode_silently_wrong() {
        let (net, code) = relay_code(4, 37, 5);
        let field = code.field();
        let codec = build_codec(&net, &code, 1, 1, 6).unwrap();
        let a = code.transfer(1);
        let p = code.edge_transfer(0);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut rejected = 0;
        for _ in 0..200 {
            let x: Vec<u64> = (0..4).map(|_| field.random(&mut rng)).collect();
            let e = sparse_error(field, 4, 2, &mut rng);
            let x2: Vec<u64> = x.iter().zip(&e).map(|(&u, &v)| field.add(u, v)).collect();
            let cache = a.mul_vec(&x).unwrap();
            let truth = a.mul_vec(&x2).unwrap();
            let syndrome = codec.encode(0, &p.mul_vec(&x2).unwrap()).unwrap();
            match codec.decode(&syndrome, &cache) {
                Ok(out) => {
                    // Only acceptable when some ≤ε-sparse update explains the
                    // syndrome; it then differs from the truth.
                    assert_ne!(out, truth);
                    let delta: Vec<u64> = out.iter().zip(&cache).map(|(&o, &c)| field.sub(o, c)).collect();
                    let weight_one = (0..4).any(|i| {
                        let col = a.select_columns(&[i]);
                        (1..field.modulus()).any(|v| col.mul_vec(&[v]).unwrap() == delta)
                    });
                    assert!(weight_one);
                }
                Err(Error::NoConsistentSupport { .. }) => rejected += 1,
                Err(e) => panic!("unexpected {e}"),
            }
        }
        assert!(rejected > 0);
    }
}
