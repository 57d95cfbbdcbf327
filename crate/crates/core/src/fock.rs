//! Words in the free semigroup and the truncated full Fock space.
//!
//! Basis order is graded-lexicographic, so the span of words of length
//! `<= m` is always a prefix of the basis (length `dim_of(n, m)`). Letters
//! are 0-based internally and 1-based in JSON.
//!
//! Creation operators annihilate the top degree. Products `A A*` of
//! analytic operators (lower triangular in degree) compress exactly to the
//! truncation; products `A* A` do not.

use crate::error::{Error, Result};
use crate::linalg::{zeros, CMat, C64};

pub type Word = Vec<usize>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruncatedFock {
    n: usize,
    depth: usize,
    powers: Vec<usize>,
    offsets: Vec<usize>,
}

pub fn dim_of(n: usize, depth: usize) -> usize {
    if n == 1 {
        depth + 1
    } else {
        (n.pow(depth as u32 + 1) - 1) / (n - 1)
    }
}

/// Default truncation used when a caller does not pick one.
pub fn default_depth(n: usize) -> usize {
    match n {
        1 => 8,
        2 => 6,
        _ => 4,
    }
}

pub fn enumerate_words(n: usize, depth: usize) -> Vec<Word> {
    TruncatedFock::new(n, depth).words()
}

pub fn word_to_json(w: &[usize]) -> serde_json::Value {
    serde_json::Value::Array(w.iter().map(|&i| serde_json::Value::from(i + 1)).collect())
}

pub fn word_from_json(v: &serde_json::Value, n: usize, field: &str) -> Result<Word> {
    let arr = v.as_array().ok_or_else(|| Error::parse(field, "word must be an array of letters"))?;
    arr.iter()
        .map(|x| match x.as_u64() {
            Some(i) if i >= 1 && (i as usize) <= n => Ok(i as usize - 1),
            _ => Err(Error::parse(field, format!("letters must be integers in 1..={n}"))),
        })
        .collect()
}

impl TruncatedFock {
    pub fn new(n: usize, depth: usize) -> Self {
        assert!(n >= 1, "need at least one generator");
        let powers: Vec<usize> = (0..=depth + 1).map(|k| n.pow(k as u32)).collect();
        let mut offsets = vec![0usize; depth + 2];
        for k in 0..=depth {
            offsets[k + 1] = offsets[k] + powers[k];
        }
        TruncatedFock { n, depth, powers, offsets }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn dim(&self) -> usize {
        self.offsets[self.depth + 1]
    }

    /// Dimension of the span of words of length `<= m`.
    pub fn dim_upto(&self, m: usize) -> usize {
        self.offsets[m.min(self.depth) + 1]
    }

    pub fn degree_range(&self, k: usize) -> std::ops::Range<usize> {
        self.offsets[k]..self.offsets[k + 1]
    }

    pub fn degree_of(&self, idx: usize) -> usize {
        match self.offsets.binary_search(&idx) {
            Ok(k) => k,
            Err(k) => k - 1,
        }
    }

    pub fn index_of(&self, w: &[usize]) -> Option<usize> {
        if w.len() > self.depth || w.iter().any(|&i| i >= self.n) {
            return None;
        }
        let pos = w.iter().fold(0usize, |acc, &i| acc * self.n + i);
        Some(self.offsets[w.len()] + pos)
    }

    pub fn word_at(&self, idx: usize) -> Word {
        let k = self.degree_of(idx);
        let mut pos = idx - self.offsets[k];
        let mut w = vec![0usize; k];
        for slot in w.iter_mut().rev() {
            *slot = pos % self.n;
            pos /= self.n;
        }
        w
    }

    pub fn words(&self) -> Vec<Word> {
        (0..self.dim()).map(|i| self.word_at(i)).collect()
    }

    /// Index of `g_i α`.
    pub fn prepend(&self, i: usize, idx: usize) -> Option<usize> {
        let k = self.degree_of(idx);
        (k < self.depth).then(|| self.offsets[k + 1] + i * self.powers[k] + (idx - self.offsets[k]))
    }

    /// Index of `α g_i`.
    pub fn append(&self, idx: usize, i: usize) -> Option<usize> {
        let k = self.degree_of(idx);
        (k < self.depth).then(|| self.offsets[k + 1] + (idx - self.offsets[k]) * self.n + i)
    }

    /// Index of the concatenation `a b`.
    pub fn concat(&self, a: usize, b: usize) -> Option<usize> {
        let (ka, kb) = (self.degree_of(a), self.degree_of(b));
        (ka + kb <= self.depth)
            .then(|| self.offsets[ka + kb] + (a - self.offsets[ka]) * self.powers[kb] + (b - self.offsets[kb]))
    }

    /// `(i, rest)` with `α = g_i rest`.
    pub fn split_first(&self, idx: usize) -> Option<(usize, usize)> {
        let k = self.degree_of(idx);
        if k == 0 {
            return None;
        }
        let pos = idx - self.offsets[k];
        let p = self.powers[k - 1];
        Some((pos / p, self.offsets[k - 1] + pos % p))
    }

    /// `(rest, i)` with `α = rest g_i`.
    pub fn split_last(&self, idx: usize) -> Option<(usize, usize)> {
        let k = self.degree_of(idx);
        if k == 0 {
            return None;
        }
        let pos = idx - self.offsets[k];
        Some((self.offsets[k - 1] + pos / self.n, pos % self.n))
    }

    /// Index of the reversed word.
    pub fn reverse(&self, idx: usize) -> usize {
        let mut w = self.word_at(idx);
        w.reverse();
        self.index_of(&w).expect("same length")
    }

    fn target(&self, side: Side, i: usize, idx: usize) -> Option<usize> {
        match side {
            Side::Left => self.prepend(i, idx),
            Side::Right => self.append(idx, i),
        }
    }

    pub fn creation(&self, side: Side, i: usize) -> CMat {
        let dim = self.dim();
        let mut s = zeros(dim, dim);
        for a in 0..dim {
            if let Some(b) = self.target(side, i, a) {
                s[(b, a)] = C64::new(1.0, 0.0);
            }
        }
        s
    }

    pub fn creation_operators(&self, side: Side) -> Vec<CMat> {
        (0..self.n).map(|i| self.creation(side, i)).collect()
    }

    pub fn degree_projection(&self, m: usize, cumulative: bool) -> CMat {
        let dim = self.dim();
        let mut p = zeros(dim, dim);
        let range = if cumulative { 0..self.offsets[m + 1] } else { self.degree_range(m) };
        for a in range {
            p[(a, a)] = C64::new(1.0, 0.0);
        }
        p
    }

    /// `e_0 ⊗ I_q`, shape `(dim q) x q`.
    pub fn vacuum(&self, q: usize) -> CMat {
        let mut v = zeros(self.dim() * q, q);
        for k in 0..q {
            v[(k, k)] = C64::new(1.0, 0.0);
        }
        v
    }

    /// `(X_i ⊗ I_q) v` without materializing the shift (X = S or R).
    pub fn shift(&self, side: Side, i: usize, v: &CMat, q: usize) -> CMat {
        let mut out = zeros(v.nrows(), v.ncols());
        for a in 0..self.dim() {
            if let Some(b) = self.target(side, i, a) {
                out.rows_mut(b * q, q).copy_from(&v.rows(a * q, q));
            }
        }
        out
    }

    /// `(X_i* ⊗ I_q) v`.
    pub fn shift_adj(&self, side: Side, i: usize, v: &CMat, q: usize) -> CMat {
        let mut out = zeros(v.nrows(), v.ncols());
        for a in 0..self.dim() {
            if let Some(b) = self.target(side, i, a) {
                out.rows_mut(a * q, q).copy_from(&v.rows(b * q, q));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{eye, operator_norm};
    use proptest::prelude::*;

    #[test]
    fn word_order_examples() {
        assert_eq!(enumerate_words(2, 1), vec![vec![], vec![0], vec![1]]);
        assert_eq!(
            enumerate_words(2, 2),
            vec![vec![], vec![0], vec![1], vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]
        );
        assert_eq!(enumerate_words(1, 3).len(), 4);
        assert_eq!(dim_of(2, 6), 127);
        assert_eq!(dim_of(3, 4), 121);
    }

    #[test]
    fn creation_examples() {
        let f = TruncatedFock::new(2, 3);
        let s = f.creation_operators(Side::Left);
        let r = f.creation_operators(Side::Right);
        let e1 = f.index_of(&[0]).unwrap();
        assert_eq!(s[0][(e1, 0)], C64::new(1.0, 0.0));
        let e12 = f.index_of(&[0, 1]).unwrap();
        assert_eq!(r[1][(e12, e1)], C64::new(1.0, 0.0));
        let safe = f.dim_upto(f.depth() - 1);
        for i in 0..2 {
            for j in 0..2 {
                let g = (s[i].adjoint() * &s[j]).view((0, 0), (safe, safe)).into_owned();
                let want = if i == j { eye(safe) } else { zeros(safe, safe) };
                assert!(operator_norm(&(g - want)) < 1e-14);
            }
        }
    }

    #[test]
    fn wandering_vacuum_below_top() {
        let f = TruncatedFock::new(3, 3);
        let s = f.creation_operators(Side::Left);
        let mut d = eye(f.dim());
        for si in &s {
            d -= si * si.adjoint();
        }
        let safe = f.dim_upto(2);
        let d = d.view((0, 0), (safe, safe)).into_owned();
        let p = f.degree_projection(0, false).view((0, 0), (safe, safe)).into_owned();
        assert!(operator_norm(&(d - p)) < 1e-14);
    }

    #[test]
    fn projections_resolve_identity() {
        let f = TruncatedFock::new(2, 4);
        let mut sum = zeros(f.dim(), f.dim());
        for m in 0..=4 {
            let p = f.degree_projection(m, false);
            assert_eq!(p.trace().re as usize, 2usize.pow(m as u32));
            sum += p;
        }
        assert!(operator_norm(&(sum - eye(f.dim()))) == 0.0);
        assert_eq!(f.degree_projection(0, true).trace().re, 1.0);
    }

    #[test]
    fn left_right_commute() {
        let f = TruncatedFock::new(2, 4);
        let safe = f.dim_upto(2);
        for i in 0..2 {
            for j in 0..2 {
                let a = f.creation(Side::Left, i) * f.creation(Side::Right, j);
                let b = f.creation(Side::Right, j) * f.creation(Side::Left, i);
                assert!(operator_norm(&(a - b).columns(0, safe).into_owned()) < 1e-15);
            }
        }
    }

    #[test]
    fn matrix_free_shift_matches_dense() {
        let f = TruncatedFock::new(2, 3);
        let mut rng = crate::linalg::rng_from_seed(1);
        let v = crate::linalg::complex_gaussian(f.dim() * 2, 3, &mut rng);
        for side in [Side::Left, Side::Right] {
            for i in 0..2 {
                let s = crate::linalg::kron(&f.creation(side, i), &eye(2));
                assert!(operator_norm(&(f.shift(side, i, &v, 2) - &s * &v)) < 1e-14);
                assert!(operator_norm(&(f.shift_adj(side, i, &v, 2) - s.adjoint() * &v)) < 1e-14);
            }
        }
    }

    #[test]
    fn word_json() {
        let v = word_to_json(&[0, 1, 0]);
        assert_eq!(v, serde_json::json!([1, 2, 1]));
        assert_eq!(word_from_json(&v, 2, "w").unwrap(), vec![0, 1, 0]);
        assert!(word_from_json(&serde_json::json!([3]), 2, "w").is_err());
        assert_eq!(word_from_json(&serde_json::json!([]), 2, "w").unwrap(), Vec::<usize>::new());
    }

    proptest! {
        #[test]
        fn index_word_bijection(n in 1usize..4, depth in 0usize..5) {
            let f = TruncatedFock::new(n, depth);
            for idx in 0..f.dim() {
                let w = f.word_at(idx);
                prop_assert_eq!(f.index_of(&w), Some(idx));
                if let Some((i, rest)) = f.split_first(idx) {
                    prop_assert_eq!(f.prepend(i, rest), Some(idx));
                }
                if let Some((rest, i)) = f.split_last(idx) {
                    prop_assert_eq!(f.append(rest, i), Some(idx));
                }
            }
        }

        #[test]
        fn concat_matches_words(n in 1usize..4, a in 0usize..40, b in 0usize..40) {
            let f = TruncatedFock::new(n, 4);
            let (a, b) = (a % f.dim(), b % f.dim());
            let mut w = f.word_at(a);
            w.extend(f.word_at(b));
            prop_assert_eq!(f.concat(a, b), f.index_of(&w));
        }
    }
}
