//! Dense GF(2) linear algebra on u64-packed rows.

use std::fmt;

const WORD: usize = 64;

fn words_for(bits: usize) -> usize {
    bits.div_ceil(WORD)
}

/// Fixed-length bit vector.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitVec {
    len: usize,
    words: Vec<u64>,
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        Self { len, words: vec![0; words_for(len)] }
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                v.set(i, true);
            }
        }
        v
    }

    pub fn from_indices(len: usize, ones: impl IntoIterator<Item = usize>) -> Self {
        let mut v = Self::zeros(len);
        for i in ones {
            v.set(i, true);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.len);
        (self.words[i / WORD] >> (i % WORD)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        debug_assert!(i < self.len);
        let mask = 1u64 << (i % WORD);
        if value {
            self.words[i / WORD] |= mask;
        } else {
            self.words[i / WORD] &= !mask;
        }
    }

    #[inline]
    pub fn toggle(&mut self, i: usize) {
        debug_assert!(i < self.len);
        self.words[i / WORD] ^= 1u64 << (i % WORD);
    }

    pub fn xor_assign(&mut self, other: &BitVec) {
        assert_eq!(self.len, other.len, "bit vector length mismatch");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn xor(&self, other: &BitVec) -> BitVec {
        let mut out = self.clone();
        out.xor_assign(other);
        out
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Number of positions set in both vectors.
    pub fn and_count(&self, other: &BitVec) -> usize {
        assert_eq!(self.len, other.len, "bit vector length mismatch");
        self.words.iter().zip(&other.words).map(|(a, b)| (a & b).count_ones() as usize).sum()
    }

    /// Parity of the bitwise AND.
    pub fn dot(&self, other: &BitVec) -> bool {
        assert_eq!(self.len, other.len, "bit vector length mismatch");
        self.words
            .iter()
            .zip(&other.words)
            .fold(0u32, |acc, (a, b)| acc ^ (a & b).count_ones())
            & 1
            == 1
    }

    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let tz = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(wi * WORD + tz)
            })
        })
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.get(i)).collect()
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = (0..self.len).map(|i| if self.get(i) { '1' } else { '0' }).collect();
        write!(f, "BitVec({s})")
    }
}

/// Row-major dense matrix over GF(2).
#[derive(Clone, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    stride: usize,
    data: Vec<u64>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let stride = words_for(cols);
        Self { rows, cols, stride, data: vec![0; rows * stride] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    /// Builds a matrix whose row `r` has ones at `supports[r]`.
    pub fn from_row_supports(cols: usize, supports: &[Vec<usize>]) -> Self {
        let mut m = Self::zeros(supports.len(), cols);
        for (r, support) in supports.iter().enumerate() {
            for &c in support {
                m.set(r, c, true);
            }
        }
        m
    }

    pub fn from_rows(cols: usize, rows: &[BitVec]) -> Self {
        let mut m = Self::zeros(rows.len(), cols);
        for (r, v) in rows.iter().enumerate() {
            assert_eq!(v.len(), cols, "row length mismatch");
            m.row_words_mut(r).copy_from_slice(v.words());
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        (self.data[r * self.stride + c / WORD] >> (c % WORD)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        let w = &mut self.data[r * self.stride + c / WORD];
        let mask = 1u64 << (c % WORD);
        if value {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    fn row_words(&self, r: usize) -> &[u64] {
        &self.data[r * self.stride..(r + 1) * self.stride]
    }

    fn row_words_mut(&mut self, r: usize) -> &mut [u64] {
        &mut self.data[r * self.stride..(r + 1) * self.stride]
    }

    pub fn row(&self, r: usize) -> BitVec {
        BitVec { len: self.cols, words: self.row_words(r).to_vec() }
    }

    fn xor_row_into(&mut self, src: usize, dst: usize) {
        let s = self.stride;
        let (a, b) = if src < dst {
            let (lo, hi) = self.data.split_at_mut(dst * s);
            (&lo[src * s..(src + 1) * s], &mut hi[..s])
        } else {
            let (lo, hi) = self.data.split_at_mut(src * s);
            (&hi[..s], &mut lo[dst * s..(dst + 1) * s])
        };
        for (d, v) in b.iter_mut().zip(a) {
            *d ^= v;
        }
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for w in 0..self.stride {
            self.data.swap(a * self.stride + w, b * self.stride + w);
        }
    }

    /// Matrix-vector product over GF(2).
    pub fn mul_vec(&self, x: &BitVec) -> BitVec {
        assert_eq!(x.len(), self.cols, "vector length must equal column count");
        let mut out = BitVec::zeros(self.rows);
        for r in 0..self.rows {
            let parity = self
                .row_words(r)
                .iter()
                .zip(x.words())
                .fold(0u32, |acc, (a, b)| acc ^ (a & b).count_ones());
            if parity & 1 == 1 {
                out.set(r, true);
            }
        }
        out
    }

    pub fn transpose(&self) -> BitMatrix {
        let mut t = BitMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in BitVec::ones(&self.row(r)).collect::<Vec<_>>() {
                t.set(c, r, true);
            }
        }
        t
    }
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BitMatrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("right-hand side is not in the column space")]
pub struct Infeasible;

/// Reduced row echelon form of `A` together with the row operations that produced it,
/// so that `A x = b` can be solved repeatedly.
#[derive(Clone, Debug)]
pub struct SolverHandle {
    rows: usize,
    cols: usize,
    /// Reduced matrix R = E·A.
    reduced: BitMatrix,
    /// Row-operation record E (rows × rows).
    ops: BitMatrix,
    pivots: Vec<usize>,
}

impl SolverHandle {
    pub fn new(a: &BitMatrix) -> Self {
        let rows = a.rows();
        let cols = a.cols();
        let mut reduced = a.clone();
        let mut ops = BitMatrix::identity(rows);
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..cols {
            if r == rows {
                break;
            }
            let Some(p) = (r..rows).find(|&i| reduced.get(i, c)) else {
                continue;
            };
            reduced.swap_rows(r, p);
            ops.swap_rows(r, p);
            for i in 0..rows {
                if i != r && reduced.get(i, c) {
                    reduced.xor_row_into(r, i);
                    ops.xor_row_into(r, i);
                }
            }
            pivots.push(c);
            r += 1;
        }
        Self { rows, cols, reduced, ops, pivots }
    }

    pub fn rank(&self) -> usize {
        self.pivots.len()
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Particular solution of `A x = b` with every free variable set to zero.
    pub fn solve(&self, b: &BitVec) -> Result<BitVec, Infeasible> {
        assert_eq!(b.len(), self.rows, "right-hand side length must equal row count");
        let c = self.ops.mul_vec(b);
        if (self.rank()..self.rows).any(|i| c.get(i)) {
            return Err(Infeasible);
        }
        let mut x = BitVec::zeros(self.cols);
        for (i, &p) in self.pivots.iter().enumerate() {
            if c.get(i) {
                x.set(p, true);
            }
        }
        Ok(x)
    }

    /// Basis of the null space, one vector per free column in ascending order.
    pub fn kernel_basis(&self) -> Vec<BitVec> {
        let mut is_pivot = vec![false; self.cols];
        for &p in &self.pivots {
            is_pivot[p] = true;
        }
        (0..self.cols)
            .filter(|&f| !is_pivot[f])
            .map(|f| {
                let mut v = BitVec::zeros(self.cols);
                v.set(f, true);
                for (i, &p) in self.pivots.iter().enumerate() {
                    if self.reduced.get(i, f) {
                        v.set(p, true);
                    }
                }
                v
            })
            .collect()
    }
}

pub fn rank(a: &BitMatrix) -> usize {
    SolverHandle::new(a).rank()
}

pub fn kernel_basis(a: &BitMatrix) -> Vec<BitVec> {
    SolverHandle::new(a).kernel_basis()
}

/// Incremental span membership via an echelon basis keyed by leading bit.
#[derive(Clone, Debug, Default)]
pub struct SpanBasis {
    len: usize,
    basis: Vec<(usize, BitVec)>,
}

impl SpanBasis {
    pub fn new(len: usize) -> Self {
        Self { len, basis: Vec::new() }
    }

    fn reduce(&self, v: &BitVec) -> BitVec {
        let mut v = v.clone();
        for (lead, b) in &self.basis {
            if v.get(*lead) {
                v.xor_assign(b);
            }
        }
        v
    }

    /// Adds `v`; returns false when it was already in the span.
    pub fn insert(&mut self, v: &BitVec) -> bool {
        assert_eq!(v.len(), self.len);
        let r = self.reduce(v);
        let Some(lead) = r.ones().next() else {
            return false;
        };
        for (_, b) in self.basis.iter_mut() {
            if b.get(lead) {
                b.xor_assign(&r);
            }
        }
        self.basis.push((lead, r));
        true
    }

    pub fn contains(&self, v: &BitVec) -> bool {
        self.reduce(v).is_zero()
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }
}
