//! Truncated free power series `F(X) = Σ X_α ⊗ A_α` with matrix blocks.
//!
//! Coefficients are stored densely, one `p x q` block per word in graded
//! order, so word arithmetic is index arithmetic on [`TruncatedFock`].
//! Composition evaluates the inner tuple on the truncated left creation
//! operators and reads Fourier coefficients off the vacuum column.

mod realization;

pub use realization::{cross_gram, Realization};

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::fock::{dim_of, word_from_json, word_to_json, Side, TruncatedFock, Word};
use crate::linalg::{eye, hermitian_eigenvalues, kron, matrix_from_value, matrix_to_value, operator_norm, row_norm, zeros, CMat, C64};

#[derive(Clone, Debug, PartialEq)]
pub struct FreeSeries {
    n: usize,
    max_deg: usize,
    p: usize,
    q: usize,
    space: TruncatedFock,
    data: Vec<C64>,
}

/// Value of a truncated evaluation plus the extrapolated size of the
/// omitted tail (reported, never added).
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub value: CMat,
    pub tail_bound: f64,
}

/// A free holomorphic map known in closed form, evaluated on tuples of
/// square matrices. Each output has block shape `block_shape()`.
pub trait FreeMap {
    fn n_vars(&self) -> usize;
    fn n_outputs(&self) -> usize;
    fn block_shape(&self) -> (usize, usize);
    fn domain_radius(&self) -> f64;
    fn apply_tuple(&self, x: &[CMat]) -> Result<Vec<CMat>>;
}

#[derive(Clone, Copy, Debug)]
pub struct ComposeOptions {
    pub r_eval: f64,
    /// Degree of the result; defaults to the smallest inner truncation.
    pub depth: Option<usize>,
}

impl Default for ComposeOptions {
    fn default() -> Self {
        ComposeOptions { r_eval: 0.9, depth: None }
    }
}

impl FreeSeries {
    pub fn zero(n: usize, max_deg: usize, p: usize, q: usize) -> Self {
        let space = TruncatedFock::new(n, max_deg);
        let data = vec![C64::new(0.0, 0.0); space.dim() * p * q];
        FreeSeries { n, max_deg, p, q, space, data }
    }

    pub fn constant(n: usize, max_deg: usize, c: &CMat) -> Self {
        let mut f = Self::zero(n, max_deg, c.nrows(), c.ncols());
        f.set_coeff_at(0, c);
        f
    }

    /// Scalar series `Z_i`.
    pub fn variable(n: usize, max_deg: usize, i: usize) -> Self {
        let mut f = Self::zero(n, max_deg, 1, 1);
        f.set_coeff(&[i], &CMat::from_element(1, 1, C64::new(1.0, 0.0)));
        f
    }

    pub fn monomial(n: usize, max_deg: usize, word: &[usize], c: C64) -> Self {
        let mut f = Self::zero(n, max_deg, 1, 1);
        f.set_coeff(word, &CMat::from_element(1, 1, c));
        f
    }

    pub fn from_terms(n: usize, max_deg: usize, p: usize, q: usize, terms: &[(Word, CMat)]) -> Result<Self> {
        let mut f = Self::zero(n, max_deg, p, q);
        for (w, c) in terms {
            if c.nrows() != p || c.ncols() != q {
                return Err(Error::ShapeMismatch(format!("coefficient {}x{} in a {p}x{q} series", c.nrows(), c.ncols())));
            }
            let idx = f
                .space
                .index_of(w)
                .ok_or_else(|| Error::ShapeMismatch(format!("word {w:?} exceeds degree {max_deg} or has letters >= {n}")))?;
            f.add_coeff_at(idx, c);
        }
        Ok(f)
    }

    /// Components of `X ↦ X L` (`Φ_L`): component j is `Σ_i L_ij Z_i`.
    pub fn linear_tuple(l: &CMat, max_deg: usize) -> Vec<FreeSeries> {
        let n = l.nrows();
        (0..l.ncols())
            .map(|j| {
                let mut f = Self::zero(n, max_deg, 1, 1);
                for i in 0..n {
                    f.set_coeff(&[i], &CMat::from_element(1, 1, l[(i, j)]));
                }
                f
            })
            .collect()
    }

    pub fn identity_tuple(n: usize, max_deg: usize) -> Vec<FreeSeries> {
        Self::linear_tuple(&eye(n), max_deg)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn max_deg(&self) -> usize {
        self.max_deg
    }

    pub fn block_shape(&self) -> (usize, usize) {
        (self.p, self.q)
    }

    pub fn space(&self) -> &TruncatedFock {
        &self.space
    }

    fn block(&self, idx: usize) -> &[C64] {
        let s = self.p * self.q;
        &self.data[idx * s..(idx + 1) * s]
    }

    fn is_zero_at(&self, idx: usize) -> bool {
        self.block(idx).iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    pub fn coeff_at(&self, idx: usize) -> CMat {
        CMat::from_column_slice(self.p, self.q, self.block(idx))
    }

    pub fn coeff(&self, word: &[usize]) -> CMat {
        match self.space.index_of(word) {
            Some(idx) => self.coeff_at(idx),
            None => zeros(self.p, self.q),
        }
    }

    pub fn set_coeff_at(&mut self, idx: usize, c: &CMat) {
        let s = self.p * self.q;
        self.data[idx * s..(idx + 1) * s].copy_from_slice(c.as_slice());
    }

    pub fn add_coeff_at(&mut self, idx: usize, c: &CMat) {
        let s = self.p * self.q;
        for (dst, src) in self.data[idx * s..(idx + 1) * s].iter_mut().zip(c.as_slice()) {
            *dst += src;
        }
    }

    pub fn set_coeff(&mut self, word: &[usize], c: &CMat) {
        let idx = self.space.index_of(word).expect("word within truncation");
        self.set_coeff_at(idx, c);
    }

    /// Nonzero terms in graded order.
    pub fn terms(&self) -> Vec<(Word, CMat)> {
        (0..self.space.dim())
            .filter(|&i| !self.is_zero_at(i))
            .map(|i| (self.space.word_at(i), self.coeff_at(i)))
            .collect()
    }

    /// Highest degree carrying a nonzero coefficient (0 for the zero series).
    pub fn effective_degree(&self) -> usize {
        (0..=self.max_deg)
            .rev()
            .find(|&k| self.space.degree_range(k).any(|i| !self.is_zero_at(i)))
            .unwrap_or(0)
    }

    /// `(Σ_{|α|=k} ‖A_α‖_F²)^{1/2}`.
    pub fn degree_mass(&self, k: usize) -> f64 {
        if k > self.max_deg {
            return 0.0;
        }
        self.space.degree_range(k).map(|i| self.block(i).iter().map(|z| z.norm_sqr()).sum::<f64>()).sum::<f64>().sqrt()
    }

    /// `‖Σ_{|α|=k} A_α* A_α‖^{1/2}`, the norm of the degree-k part on the
    /// left creation operators.
    pub fn homogeneous_norm(&self, k: usize) -> f64 {
        if k > self.max_deg {
            return 0.0;
        }
        let mut g = zeros(self.q, self.q);
        for i in self.space.degree_range(k) {
            let a = self.coeff_at(i);
            g += a.adjoint() * &a;
        }
        hermitian_eigenvalues(&g).into_iter().fold(0.0_f64, f64::max).max(0.0).sqrt()
    }

    /// Scalar series of block entry `(i, j)`.
    pub fn entry_series(&self, i: usize, j: usize) -> FreeSeries {
        let mut out = Self::zero(self.n, self.max_deg, 1, 1);
        for idx in 0..self.space.dim() {
            out.data[idx] = self.block(idx)[j * self.p + i];
        }
        out
    }

    pub fn truncated(&self, max_deg: usize) -> FreeSeries {
        let mut out = Self::zero(self.n, max_deg, self.p, self.q);
        let upto = dim_of(self.n, max_deg.min(self.max_deg));
        let s = self.p * self.q;
        out.data[..upto * s].copy_from_slice(&self.data[..upto * s]);
        out
    }

    /// Truncated partial sum `Σ_{|α|≤maxDeg} X_α ⊗ A_α`.
    pub fn eval(&self, x: &[CMat]) -> Result<Evaluation> {
        if x.len() != self.n {
            return Err(Error::ShapeMismatch(format!("series in {} variables evaluated at a {}-tuple", self.n, x.len())));
        }
        let d = x[0].nrows();
        if x.iter().any(|m| m.nrows() != d || m.ncols() != d) {
            return Err(Error::ShapeMismatch("evaluation tuple must consist of equal square matrices".into()));
        }
        let top = self.effective_degree();
        let mut out = zeros(d * self.p, d * self.q);
        // depth-first over words, carrying X_α
        let mut stack: Vec<(usize, CMat)> = vec![(0, eye(d))];
        while let Some((idx, xa)) = stack.pop() {
            if !self.is_zero_at(idx) {
                if self.p == 1 && self.q == 1 {
                    out += &xa * self.block(idx)[0];
                } else {
                    out += kron(&xa, &self.coeff_at(idx));
                }
            }
            if self.space.degree_of(idx) < top {
                for i in 0..self.n {
                    let child = self.space.append(idx, i).expect("below truncation");
                    stack.push((child, &xa * &x[i]));
                }
            }
        }
        let rho = row_norm(x);
        let c_top = self.homogeneous_norm(self.max_deg);
        let tail_bound = if c_top == 0.0 {
            0.0
        } else if rho < 1.0 {
            c_top * rho.powi(self.max_deg as i32 + 1) / (1.0 - rho)
        } else {
            f64::INFINITY
        };
        Ok(Evaluation { value: out, tail_bound })
    }

    pub fn eval_value(&self, x: &[CMat]) -> Result<CMat> {
        Ok(self.eval(x)?.value)
    }

    /// Scalar-block evaluation at a point of C^n.
    pub fn eval_scalar(&self, z: &[C64]) -> Result<CMat> {
        let x: Vec<CMat> = z.iter().map(|&zi| CMat::from_element(1, 1, zi)).collect();
        self.eval_value(&x)
    }

    // word indices agree across truncations, so α indexes `fock` directly;
    // S_α e_γ = e_{αγ} and R_α e_γ = e_{γ rev(α)}
    fn placement(fock: &TruncatedFock, side: Side, key: usize, gamma: usize) -> Option<usize> {
        match side {
            Side::Left => fock.concat(key, gamma),
            Side::Right => fock.concat(gamma, key),
        }
    }

    fn placement_key(fock: &TruncatedFock, side: Side, alpha: usize) -> usize {
        match side {
            Side::Left => alpha,
            Side::Right => fock.reverse(alpha),
        }
    }

    /// `F(rS)` (left) or `F(rR)` (right) materialized on `fock ⊗ C^q → fock ⊗ C^p`.
    pub fn on_fock(&self, fock: &TruncatedFock, side: Side, r: f64) -> CMat {
        let dim = fock.dim();
        let mut out = zeros(dim * self.p, dim * self.q);
        let top = self.effective_degree().min(fock.depth());
        for alpha in 0..dim_of(self.n, top) {
            if self.is_zero_at(alpha) {
                continue;
            }
            let c = self.coeff_at(alpha) * C64::new(r.powi(self.space.degree_of(alpha) as i32), 0.0);
            let key = Self::placement_key(fock, side, alpha);
            for gamma in 0..dim {
                if let Some(t) = Self::placement(fock, side, key, gamma) {
                    out.view_mut((t * self.p, gamma * self.q), (self.p, self.q)).copy_from(&c);
                }
            }
        }
        out
    }

    /// `F(rS) v` (or `F(rR) v`) without materializing the operator.
    pub fn apply_on_fock(&self, fock: &TruncatedFock, side: Side, r: f64, v: &CMat) -> CMat {
        let dim = fock.dim();
        let mut out = zeros(dim * self.p, v.ncols());
        let top = self.effective_degree().min(fock.depth());
        for alpha in 0..dim_of(self.n, top) {
            if self.is_zero_at(alpha) {
                continue;
            }
            let c = self.coeff_at(alpha) * C64::new(r.powi(self.space.degree_of(alpha) as i32), 0.0);
            let key = Self::placement_key(fock, side, alpha);
            for gamma in 0..dim {
                if let Some(t) = Self::placement(fock, side, key, gamma) {
                    let add = &c * v.rows(gamma * self.q, self.q);
                    let mut dst = out.rows_mut(t * self.p, self.p);
                    dst += add;
                }
            }
        }
        out
    }

    /// Heuristic `1 / max_{k∈[maxDeg/2, maxDeg]} (Σ_{|α|=k} ‖A_α‖²)^{1/2k}`.
    pub fn hadamard_radius(&self) -> f64 {
        let lo = ((self.max_deg + 1) / 2).max(1);
        let mut worst = 0.0_f64;
        for k in lo..=self.max_deg {
            let m = self.degree_mass(k);
            if m > 0.0 {
                worst = worst.max(m.powf(1.0 / k as f64));
            }
        }
        if worst == 0.0 {
            f64::INFINITY
        } else {
            1.0 / worst
        }
    }

    /// Free partial derivative: each occurrence of `Z_i` is deleted in turn.
    pub fn partial_derivative(&self, i: usize) -> FreeSeries {
        let mut out = Self::zero(self.n, self.max_deg.saturating_sub(1), self.p, self.q);
        for idx in 1..self.space.dim() {
            if self.is_zero_at(idx) {
                continue;
            }
            let w = self.space.word_at(idx);
            let c = self.coeff_at(idx);
            for (pos, &letter) in w.iter().enumerate() {
                if letter == i {
                    let mut beta = w.clone();
                    beta.remove(pos);
                    let t = out.space.index_of(&beta).expect("shorter word fits");
                    out.add_coeff_at(t, &c);
                }
            }
        }
        out
    }

    /// Coefficient shift `B_β = A_{g_i β}`.
    pub fn left_quotient(&self, i: usize) -> FreeSeries {
        let mut out = Self::zero(self.n, self.max_deg.saturating_sub(1), self.p, self.q);
        for beta in 0..out.space.dim() {
            let src = self.space.index_of(&{
                let mut w = vec![i];
                w.extend(out.space.word_at(beta));
                w
            });
            if let Some(src) = src {
                out.set_coeff_at(beta, &self.coeff_at(src));
            }
        }
        out
    }

    fn check_same(&self, other: &FreeSeries) -> Result<()> {
        if self.n != other.n || self.p != other.p || self.q != other.q {
            return Err(Error::ShapeMismatch("series differ in variables or block shape".into()));
        }
        Ok(())
    }

    pub fn add(&self, other: &FreeSeries) -> Result<FreeSeries> {
        self.check_same(other)?;
        let deg = self.max_deg.min(other.max_deg);
        let mut out = self.truncated(deg);
        for (dst, src) in out.data.iter_mut().zip(&other.data) {
            *dst += src;
        }
        Ok(out)
    }

    pub fn sub(&self, other: &FreeSeries) -> Result<FreeSeries> {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, s: C64) -> FreeSeries {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|z| *z *= s);
        out
    }

    /// Product truncated at the smaller degree; blocks `(p,q) x (q,s)`.
    pub fn mul(&self, other: &FreeSeries) -> Result<FreeSeries> {
        if self.n != other.n || self.q != other.p {
            return Err(Error::ShapeMismatch(format!(
                "product of {}x{} and {}x{} series",
                self.p, self.q, other.p, other.q
            )));
        }
        let deg = self.max_deg.min(other.max_deg);
        let mut out = Self::zero(self.n, deg, self.p, other.q);
        let (ea, eb) = (self.effective_degree().min(deg), other.effective_degree().min(deg));
        for u in 0..dim_of(self.n, ea) {
            if self.is_zero_at(u) {
                continue;
            }
            let a = self.coeff_at(u);
            let ku = self.space.degree_of(u);
            for v in 0..dim_of(self.n, eb.min(deg - ku)) {
                if other.is_zero_at(v) {
                    continue;
                }
                let t = out.space.concat(u, v).expect("degree checked");
                out.add_coeff_at(t, &(&a * other.coeff_at(v)));
            }
        }
        Ok(out)
    }

    /// Maximum coefficient-block distance.
    pub fn max_coeff_diff(&self, other: &FreeSeries) -> f64 {
        let deg = self.max_deg.min(other.max_deg);
        (0..dim_of(self.n, deg)).map(|i| operator_norm(&(self.coeff_at(i) - other.coeff_at(i)))).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Value {
        let terms: Vec<Value> =
            self.terms().iter().map(|(w, c)| json!({"word": word_to_json(w), "coeff": matrix_to_value(c)})).collect();
        json!({"n": self.n, "maxDeg": self.max_deg, "blockShape": [self.p, self.q], "terms": terms})
    }

    pub fn from_json(v: &Value, field: &str) -> Result<Self> {
        let get_count = |key: &str| -> Result<usize> {
            v.get(key)
                .and_then(Value::as_u64)
                .map(|x| x as usize)
                .ok_or_else(|| Error::parse(format!("{field}.{key}"), "expected a nonnegative integer"))
        };
        let n = get_count("n")?;
        if n == 0 {
            return Err(Error::parse(format!("{field}.n"), "must be at least 1"));
        }
        let max_deg = get_count("maxDeg")?;
        let shape = v
            .get("blockShape")
            .and_then(Value::as_array)
            .filter(|a| a.len() == 2)
            .ok_or_else(|| Error::parse(format!("{field}.blockShape"), "expected [p, q]"))?;
        let p = shape[0].as_u64().filter(|&x| x > 0).ok_or_else(|| Error::parse(format!("{field}.blockShape"), "p must be positive"))? as usize;
        let q = shape[1].as_u64().filter(|&x| x > 0).ok_or_else(|| Error::parse(format!("{field}.blockShape"), "q must be positive"))? as usize;
        let terms = v.get("terms").and_then(Value::as_array).ok_or_else(|| Error::parse(format!("{field}.terms"), "expected an array"))?;
        let mut f = Self::zero(n, max_deg, p, q);
        for (k, t) in terms.iter().enumerate() {
            let tf = format!("{field}.terms[{k}]");
            let w = word_from_json(t.get("word").unwrap_or(&Value::Null), n, &format!("{tf}.word"))?;
            let c = matrix_from_value(t.get("coeff").unwrap_or(&Value::Null), &format!("{tf}.coeff"))?;
            if c.nrows() != p || c.ncols() != q {
                return Err(Error::parse(format!("{tf}.coeff"), format!("expected a {p}x{q} block")));
            }
            let idx = f.space.index_of(&w).ok_or_else(|| Error::parse(format!("{tf}.word"), format!("longer than maxDeg {max_deg}")))?;
            f.add_coeff_at(idx, &c);
        }
        Ok(f)
    }
}

/// Fourier coefficients `B_α = r^{-|α|} ⟨M (1 ⊗ ·), e_α ⊗ ·⟩` read off the
/// vacuum column of `M : fock ⊗ C^q → fock ⊗ C^p`, for `|α| ≤ depth`.
pub fn extract_coefficients(m: &CMat, fock: &TruncatedFock, r: f64, p: usize, q: usize, depth: usize) -> FreeSeries {
    extract_from_vacuum_column(&m.columns(0, q).into_owned(), fock, r, p, depth)
}

/// Same as [`extract_coefficients`] given only the `(dim p) x q` vacuum column.
pub fn extract_from_vacuum_column(col: &CMat, fock: &TruncatedFock, r: f64, p: usize, depth: usize) -> FreeSeries {
    let depth = depth.min(fock.depth());
    let q = col.ncols();
    let mut f = FreeSeries::zero(fock.n(), depth, p, q);
    for idx in 0..fock.dim_upto(depth) {
        let k = fock.degree_of(idx);
        let b = col.rows(idx * p, p).into_owned() * C64::new(r.powi(-(k as i32)), 0.0);
        f.set_coeff_at(idx, &b);
    }
    f
}

fn check_inner(phi: &[FreeSeries]) -> Result<usize> {
    let n = phi.first().ok_or_else(|| Error::ShapeMismatch("empty inner tuple".into()))?.n;
    if phi.iter().any(|f| f.n != n || f.block_shape() != (1, 1)) {
        return Err(Error::ShapeMismatch("inner tuple must be scalar series in a common set of variables".into()));
    }
    Ok(n)
}

fn inner_on_fock(phi: &[FreeSeries], opts: &ComposeOptions) -> Result<(TruncatedFock, Vec<CMat>)> {
    let n = check_inner(phi)?;
    let depth = opts.depth.unwrap_or_else(|| phi.iter().map(|f| f.max_deg).min().unwrap_or(0));
    let fock = TruncatedFock::new(n, depth);
    let y: Vec<CMat> = phi.iter().map(|f| f.on_fock(&fock, Side::Left, opts.r_eval)).collect();
    Ok((fock, y))
}

/// `F ∘ φ` for a series `F` in `m = φ.len()` variables.
pub fn compose(f: &FreeSeries, phi: &[FreeSeries], opts: &ComposeOptions) -> Result<FreeSeries> {
    if f.n != phi.len() {
        return Err(Error::ShapeMismatch(format!("outer series has {} variables, inner tuple {}", f.n, phi.len())));
    }
    let (fock, y) = inner_on_fock(phi, opts)?;
    let radius = f.hadamard_radius();
    let norm = row_norm(&y);
    if norm >= radius {
        return Err(Error::RangeViolation { norm, radius });
    }
    let dim = fock.dim();
    let (p, q) = f.block_shape();
    let top = f.effective_degree();
    // v_α = Y_α e_0, with Y_{g_i β} e_0 = Y_i (Y_β e_0)
    let mut vecs: Vec<CMat> = Vec::with_capacity(dim_of(f.n, top));
    let mut col = zeros(dim * p, q);
    for idx in 0..dim_of(f.n, top) {
        let v = match f.space.split_first(idx) {
            None => {
                let mut e0 = zeros(dim, 1);
                e0[(0, 0)] = C64::new(1.0, 0.0);
                e0
            }
            Some((i, rest)) => &y[i] * &vecs[rest],
        };
        if !f.is_zero_at(idx) {
            col += kron(&v, &f.coeff_at(idx));
        }
        vecs.push(v);
    }
    Ok(extract_from_vacuum_column(&col, &fock, opts.r_eval, p, fock.depth()))
}

/// `F ∘ φ` for a closed-form map `F`; one series per output of `F`.
pub fn compose_map(f: &dyn FreeMap, phi: &[FreeSeries], opts: &ComposeOptions) -> Result<Vec<FreeSeries>> {
    if f.n_vars() != phi.len() {
        return Err(Error::ShapeMismatch(format!("outer map has {} variables, inner tuple {}", f.n_vars(), phi.len())));
    }
    let (fock, y) = inner_on_fock(phi, opts)?;
    let radius = f.domain_radius();
    let norm = row_norm(&y);
    if norm >= radius {
        return Err(Error::RangeViolation { norm, radius });
    }
    let (p, q) = f.block_shape();
    let out = f.apply_tuple(&y)?;
    Ok(out.iter().map(|m| extract_coefficients(m, &fock, opts.r_eval, p, q, fock.depth())).collect())
}

/// `max_r ‖[F_1(rS) ... F_m(rS)]‖` on the truncation of the given depth.
pub fn sup_norm_estimate(f: &[FreeSeries], r_grid: &[f64], depth: usize) -> f64 {
    sup_norm_profile(f, r_grid, depth).into_iter().fold(0.0, f64::max)
}

/// The individual norms behind [`sup_norm_estimate`], one per grid point.
pub fn sup_norm_profile(f: &[FreeSeries], r_grid: &[f64], depth: usize) -> Vec<f64> {
    let fock = TruncatedFock::new(f[0].n, depth);
    r_grid
        .iter()
        .map(|&r| {
            let blocks: Vec<CMat> = f.iter().map(|fi| fi.on_fock(&fock, Side::Left, r)).collect();
            let g = blocks.iter().fold(zeros(blocks[0].nrows(), blocks[0].nrows()), |acc, b| acc + b * b.adjoint());
            hermitian_eigenvalues(&g).into_iter().fold(0.0_f64, f64::max).max(0.0).sqrt()
        })
        .collect()
}

/// `F'(0)` with entry `(i, j)` the coefficient of `Z_j` in `F_i`.
pub fn jacobian_at_zero(f: &[FreeSeries]) -> CMat {
    let n = f[0].n;
    CMat::from_fn(f.len(), n, |i, j| f[i].coeff(&[j])[(0, 0)])
}

