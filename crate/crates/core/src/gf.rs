//! Prime-field scalars and dense matrices.
//!
//! Elements are stored as `u64` already reduced modulo `q`. The modulus is
//! capped below 2^32 so a product of two reduced elements fits in a `u64`
//! before reduction.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest admissible modulus (exclusive).
pub const MAX_MODULUS: u64 = 1 << 32;

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    if n.is_multiple_of(2) {
        return n == 2;
    }
    let mut d = 3u64;
    while d * d <= n {
        if n.is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// Smallest prime `>= n`.
pub fn next_prime(n: u64) -> u64 {
    let mut candidate = n.max(2);
    while !is_prime(candidate) {
        candidate += 1;
    }
    candidate
}

/// The field-size bound `2 eps B^(2 eps)` under which a sparse update code is
/// guaranteed to exist. Returns `None` on overflow.
pub fn update_code_bound(frame_len: usize, sparsity: usize) -> Option<u64> {
    if sparsity == 0 {
        return Some(0);
    }
    let exp = u32::try_from(2 * sparsity).ok()?;
    (frame_len as u64)
        .checked_pow(exp)?
        .checked_mul(2 * sparsity as u64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct Field {
    modulus: u64,
}

impl TryFrom<u64> for Field {
    type Error = Error;

    fn try_from(q: u64) -> Result<Self> {
        Field::new(q)
    }
}

impl From<Field> for u64 {
    fn from(f: Field) -> u64 {
        f.modulus
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "GF({})", self.modulus)
    }
}

impl Field {
    pub fn new(modulus: u64) -> Result<Self> {
        if modulus >= MAX_MODULUS {
            return Err(Error::ModulusTooLarge { modulus, max: MAX_MODULUS - 1 });
        }
        if !is_prime(modulus) {
            return Err(Error::NotPrime(modulus));
        }
        Ok(Field { modulus })
    }

    /// Smallest prime field admissible for frames of `frame_len` symbols with
    /// at most `sparsity` changed symbols per round.
    pub fn smallest_admissible(frame_len: usize, sparsity: usize) -> Result<Self> {
        let bound = update_code_bound(frame_len, sparsity).ok_or(Error::ModulusTooLarge {
            modulus: u64::MAX,
            max: MAX_MODULUS - 1,
        })?;
        if bound >= MAX_MODULUS {
            return Err(Error::ModulusTooLarge { modulus: bound, max: MAX_MODULUS - 1 });
        }
        Field::new(next_prime(bound.max(2)))
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    /// Bits carried by one symbol, `log2 q`.
    pub fn bits_per_symbol(&self) -> f64 {
        (self.modulus as f64).log2()
    }

    #[inline]
    pub fn reduce(&self, a: u64) -> u64 {
        a % self.modulus
    }

    #[inline]
    pub fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.modulus {
            s - self.modulus
        } else {
            s
        }
    }

    #[inline]
    pub fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.modulus - b
        }
    }

    #[inline]
    pub fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.modulus - a
        }
    }

    #[inline]
    pub fn mul(&self, a: u64, b: u64) -> u64 {
        (a * b) % self.modulus
    }

    pub fn pow(&self, mut base: u64, mut exp: u64) -> u64 {
        let mut acc = 1 % self.modulus;
        base %= self.modulus;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            exp >>= 1;
        }
        acc
    }

    /// Multiplicative inverse; panics on zero.
    pub fn inv(&self, a: u64) -> u64 {
        assert!(!a.is_multiple_of(self.modulus), "inverse of zero");
        self.pow(a, self.modulus - 2)
    }

    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        rng.gen_range(0..self.modulus)
    }

    pub fn random_nonzero<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        rng.gen_range(1..self.modulus)
    }
}

/// Dense row-major matrix over a prime field.
#[derive(Clone, PartialEq, Eq)]
pub struct FMatrix {
    field: Field,
    rows: usize,
    cols: usize,
    data: Vec<u64>,
}

impl fmt::Debug for FMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "FMatrix {}x{} over {}", self.rows, self.cols, self.field)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        Ok(())
    }
}

impl FMatrix {
    pub fn zeros(field: Field, rows: usize, cols: usize) -> Self {
        FMatrix { field, rows, cols, data: vec![0; rows * cols] }
    }

    pub fn identity(field: Field, n: usize) -> Self {
        let mut m = Self::zeros(field, n, n);
        for i in 0..n {
            m.data[i * n + i] = 1 % field.modulus();
        }
        m
    }

    /// Builds a matrix from row-major entries, reducing each modulo `q`.
    pub fn from_vec(field: Field, rows: usize, cols: usize, data: Vec<u64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        let data = data.into_iter().map(|x| field.reduce(x)).collect();
        Ok(FMatrix { field, rows, cols, data })
    }

    pub fn from_rows(field: Field, rows: &[Vec<u64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::from_vec(field, rows.len(), cols, rows.concat())
    }

    pub fn column(field: Field, v: &[u64]) -> Self {
        FMatrix { field, rows: v.len(), cols: 1, data: v.iter().map(|&x| field.reduce(x)).collect() }
    }

    pub fn random<R: Rng + ?Sized>(field: Field, rows: usize, cols: usize, rng: &mut R) -> Self {
        let data = (0..rows * cols).map(|_| field.random(rng)).collect();
        FMatrix { field, rows, cols, data }
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entries(&self) -> &[u64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> u64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: u64) {
        self.data[r * self.cols + c] = self.field.reduce(v);
    }

    pub fn row(&self, r: usize) -> &[u64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&x| x == 0)
    }

    fn check_field(&self, other: &FMatrix) -> Result<()> {
        if self.field != other.field {
            return Err(Error::DimensionMismatch(format!(
                "operands over {} and {}",
                self.field, other.field
            )));
        }
        Ok(())
    }

    pub fn mul(&self, other: &FMatrix) -> Result<FMatrix> {
        self.check_field(other)?;
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let f = self.field;
        let mut out = FMatrix::zeros(f, self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o = f.add(*o, f.mul(a, b));
                }
            }
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[u64]) -> Result<Vec<u64>> {
        if self.cols != v.len() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times vector of length {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let f = self.field;
        Ok((0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(v)
                    .fold(0, |acc, (&a, &x)| f.add(acc, f.mul(a, f.reduce(x))))
            })
            .collect())
    }

    pub fn add(&self, other: &FMatrix) -> Result<FMatrix> {
        self.check_field(other)?;
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} plus {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let f = self.field;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f.add(a, b)).collect();
        Ok(FMatrix { field: f, rows: self.rows, cols: self.cols, data })
    }

    pub fn transpose(&self) -> FMatrix {
        let mut out = FMatrix::zeros(self.field, self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn select_columns(&self, cols: &[usize]) -> FMatrix {
        let mut out = FMatrix::zeros(self.field, self.rows, cols.len());
        for r in 0..self.rows {
            for (j, &c) in cols.iter().enumerate() {
                out.data[r * cols.len() + j] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn select_rows(&self, range: std::ops::Range<usize>) -> FMatrix {
        FMatrix {
            field: self.field,
            rows: range.len(),
            cols: self.cols,
            data: self.data[range.start * self.cols..range.end * self.cols].to_vec(),
        }
    }

    /// Stacks matrices vertically. All parts must have `cols` columns.
    pub fn vstack(field: Field, cols: usize, parts: &[&FMatrix]) -> Result<FMatrix> {
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols != cols || p.field != field {
                return Err(Error::DimensionMismatch(format!(
                    "vstack of a {}x{} block into {cols} columns",
                    p.rows, p.cols
                )));
            }
            data.extend_from_slice(&p.data);
            rows += p.rows;
        }
        Ok(FMatrix { field, rows, cols, data })
    }

    /// Concatenates matrices horizontally. All parts must have `rows` rows.
    pub fn hstack(field: Field, rows: usize, parts: &[&FMatrix]) -> Result<FMatrix> {
        if parts.iter().any(|p| p.rows != rows || p.field != field) {
            return Err(Error::DimensionMismatch(format!("hstack into {rows} rows")));
        }
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut out = FMatrix::zeros(field, rows, cols);
        let mut offset = 0;
        for p in parts {
            for r in 0..rows {
                out.data[r * cols + offset..r * cols + offset + p.cols].copy_from_slice(p.row(r));
            }
            offset += p.cols;
        }
        Ok(out)
    }

    /// In-place reduced row echelon form. Pivots are taken on the first
    /// nonzero entry of each column, scanning rows top to bottom. Returns the
    /// pivot columns.
    fn reduce_rows(&mut self) -> Vec<usize> {
        let f = self.field;
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..self.cols {
            if r == self.rows {
                break;
            }
            let Some(p) = (r..self.rows).find(|&i| self.data[i * self.cols + c] != 0) else {
                continue;
            };
            if p != r {
                for k in 0..self.cols {
                    self.data.swap(p * self.cols + k, r * self.cols + k);
                }
            }
            let inv = f.inv(self.data[r * self.cols + c]);
            for k in c..self.cols {
                let v = &mut self.data[r * self.cols + k];
                *v = f.mul(*v, inv);
            }
            for i in 0..self.rows {
                if i == r {
                    continue;
                }
                let factor = self.data[i * self.cols + c];
                if factor == 0 {
                    continue;
                }
                for k in c..self.cols {
                    let sub = f.mul(factor, self.data[r * self.cols + k]);
                    let v = &mut self.data[i * self.cols + k];
                    *v = f.sub(*v, sub);
                }
            }
            pivots.push(c);
            r += 1;
        }
        pivots
    }

    pub fn rank(&self) -> usize {
        self.clone().reduce_rows().len()
    }

    /// Solves `self * x = b`. Returns `Ok(None)` when the system is
    /// inconsistent; free variables are set to zero.
    pub fn solve(&self, b: &[u64]) -> Result<Option<Vec<u64>>> {
        if b.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} system with right-hand side of length {}",
                self.rows,
                self.cols,
                b.len()
            )));
        }
        let aug = FMatrix::hstack(self.field, self.rows, &[self, &FMatrix::column(self.field, b)])?;
        let mut aug = aug;
        let pivots = aug.reduce_rows();
        if pivots.last() == Some(&self.cols) {
            return Ok(None);
        }
        let mut x = vec![0; self.cols];
        for (r, &c) in pivots.iter().enumerate() {
            x[c] = aug.get(r, self.cols);
        }
        Ok(Some(x))
    }

    /// A matrix `L` with `L * self = I`, when `self` has full column rank.
    pub fn left_inverse(&self) -> Option<FMatrix> {
        let f = self.field;
        let t = self.transpose();
        let mut out = FMatrix::zeros(f, self.cols, self.rows);
        let mut unit = vec![0; self.cols];
        for k in 0..self.cols {
            unit.iter_mut().for_each(|u| *u = 0);
            unit[k] = 1 % f.modulus();
            let row = t.solve(&unit).ok()??;
            out.data[k * self.rows..(k + 1) * self.rows].copy_from_slice(&row);
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand::Rng;

    fn gf(q: u64) -> Field {
        Field::new(q).unwrap()
    }

    #[test]
    fn rejects_composite_and_oversized_moduli() {
        assert_eq!(Field::new(15), Err(Error::NotPrime(15)));
        assert!(matches!(Field::new(1 << 33), Err(Error::ModulusTooLarge { .. })));
        assert!(Field::new(4_294_967_291).is_ok());
    }

    #[test]
    fn admissible_field_is_smallest_prime_above_bound() {
        // 2 * 1 * 4^2 = 32 -> 37
        assert_eq!(Field::smallest_admissible(4, 1).unwrap().modulus(), 37);
        // 2 * 2 * 8^4 = 16384 -> 16411
        assert_eq!(Field::smallest_admissible(8, 2).unwrap().modulus(), 16411);
        assert_eq!(Field::smallest_admissible(4, 0).unwrap().modulus(), 2);
        assert!(Field::smallest_admissible(64, 3).is_err());
    }

    #[test]
    fn inverse_roundtrip() {
        let f = gf(251);
        for a in 1..251 {
            assert_eq!(f.mul(a, f.inv(a)), 1);
        }
    }

    #[test]
    fn identity_product() {
        let f = gf(7);
        let x = FMatrix::from_rows(f, &[vec![3, 5], vec![6, 1]]).unwrap();
        assert_eq!(FMatrix::identity(f, 2).mul(&x).unwrap(), x);
    }

    #[test]
    fn product_mod_five() {
        let f = gf(5);
        let a = FMatrix::from_rows(f, &[vec![2, 3], vec![1, 4]]).unwrap();
        let b = FMatrix::column(f, &[1, 2]);
        assert_eq!(a.mul(&b).unwrap(), FMatrix::column(f, &[3, 4]));
    }

    #[test]
    fn zero_product() {
        let f = gf(11);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = FMatrix::random(f, 3, 4, &mut rng);
        assert!(FMatrix::zeros(f, 2, 3).mul(&x).unwrap().is_zero());
    }

    #[test]
    fn product_dimension_mismatch() {
        let f = gf(11);
        let a = FMatrix::zeros(f, 2, 3);
        assert!(matches!(a.mul(&a), Err(Error::DimensionMismatch(_))));
        let b = FMatrix::zeros(gf(13), 3, 2);
        assert!(matches!(a.mul(&b), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn rank_examples() {
        let f = gf(13);
        assert_eq!(FMatrix::identity(f, 5).rank(), 5);
        let m = FMatrix::from_rows(f, &[vec![1, 2, 3], vec![1, 2, 3], vec![0, 1, 4]]).unwrap();
        assert_eq!(m.rank(), 2);
        assert_eq!(FMatrix::zeros(f, 3, 3).rank(), 0);
    }

    /// Rank by exhaustive span enumeration: the size of the row space is q^rank.
    fn span_rank(m: &FMatrix) -> usize {
        let f = m.field();
        let q = f.modulus() as usize;
        let mut span = std::collections::HashSet::new();
        let combos = q.pow(m.rows() as u32);
        for code in 0..combos {
            let mut c = code;
            let mut v = vec![0u64; m.cols()];
            for r in 0..m.rows() {
                let coef = (c % q) as u64;
                c /= q;
                for (j, x) in v.iter_mut().enumerate() {
                    *x = f.add(*x, f.mul(coef, m.get(r, j)));
                }
            }
            span.insert(v);
        }
        let mut rank = 0;
        while q.pow(rank as u32) < span.len() {
            rank += 1;
        }
        rank
    }

    #[test]
    fn rank_matches_span_oracle() {
        let f = gf(3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let rows = rng.gen_range(1..5);
            let cols = rng.gen_range(1..5);
            let m = FMatrix::random(f, rows, cols, &mut rng);
            assert_eq!(m.rank(), span_rank(&m), "{m:?}");
        }
    }

    #[test]
    fn random_wide_matrices_are_full_rank() {
        // Full row rank fails with probability below 4/251 per draw.
        let f = gf(251);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let full = (0..200).filter(|_| FMatrix::random(f, 4, 8, &mut rng).rank() == 4).count();
        assert!(full >= 190, "{full}");
    }

    #[test]
    fn solve_examples() {
        let f = gf(17);
        let b = vec![4, 9, 16];
        assert_eq!(FMatrix::identity(f, 3).solve(&b).unwrap(), Some(b.clone()));
        assert_eq!(FMatrix::zeros(f, 3, 3).solve(&[0, 1, 0]).unwrap(), None);
        assert!(FMatrix::zeros(f, 3, 3).solve(&[1, 2]).is_err());
    }

    #[test]
    fn left_inverse_of_tall_matrix() {
        let f = gf(101);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = FMatrix::random(f, 6, 3, &mut rng);
        let l = a.left_inverse().unwrap();
        assert_eq!(l.mul(&a).unwrap(), FMatrix::identity(f, 3));
        let deficient = FMatrix::from_rows(f, &[vec![1, 2], vec![2, 4], vec![3, 6]]).unwrap();
        assert!(deficient.left_inverse().is_none());
    }

    fn matrix(q: u64, rows: usize, cols: usize) -> impl Strategy<Value = FMatrix> {
        proptest::collection::vec(0..q, rows * cols)
            .prop_map(move |v| FMatrix::from_vec(gf(q), rows, cols, v).unwrap())
    }

    proptest! {
        #[test]
        fn product_is_associative(a in matrix(31, 3, 4), b in matrix(31, 4, 2), c in matrix(31, 2, 3)) {
            let left = a.mul(&b).unwrap().mul(&c).unwrap();
            let right = a.mul(&b.mul(&c).unwrap()).unwrap();
            prop_assert_eq!(left, right);
        }

        #[test]
        fn product_distributes(a in matrix(31, 3, 4), b in matrix(31, 4, 2), c in matrix(31, 4, 2)) {
            let left = a.mul(&b.add(&c).unwrap()).unwrap();
            let right = a.mul(&b).unwrap().add(&a.mul(&c).unwrap()).unwrap();
            prop_assert_eq!(left, right);
        }

        #[test]
        fn rank_is_transpose_invariant(a in matrix(7, 4, 5)) {
            prop_assert_eq!(a.rank(), a.transpose().rank());
        }

        #[test]
        fn solve_roundtrip(a in matrix(13, 4, 5), x in proptest::collection::vec(0u64..13, 5)) {
            let b = a.mul_vec(&x).unwrap();
            let sol = a.solve(&b).unwrap().expect("consistent by construction");
            prop_assert_eq!(a.mul_vec(&sol).unwrap(), b);
        }
    }
}
