//! Transfer-function form
//! `F(X) = I ⊗ D + (I ⊗ C)(I - Σ X_i ⊗ A_i)^{-1}(Σ X_i ⊗ B_i)`,
//! i.e. `F_∅ = D` and `F_{α g_i} = C A_α B_i`.
//!
//! Both the characteristic function and the ball automorphisms have this
//! shape, which gives matrix-free Fock application and exact Gram
//! compressions `P (F̂* F̂) P` that no finite truncation of `F̂` provides.

use super::{FreeMap, FreeSeries};
use crate::error::{Error, Result};
use crate::fock::{Side, TruncatedFock};
use crate::linalg::{eye, frobenius, kron, operator_norm, row_matrix, solve, zeros, CMat, C64};

#[derive(Clone, Debug)]
pub struct Realization {
    d: CMat,
    c: CMat,
    a: Vec<CMat>,
    b: Vec<CMat>,
}

const STEIN_MAX_ITERS: usize = 200_000;

/// Stopping rule for the Stein iterations: the update drops to round-off,
/// or stops shrinking once it is already tiny (sums of many products
/// stagnate a few ulps above `ε‖W‖`).
struct StopRule {
    best: f64,
    stalled: usize,
    last: f64,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule { best: f64::INFINITY, stalled: 0, last: f64::INFINITY }
    }
}

impl StopRule {
    fn settled(&mut self, delta: f64, norm: f64) -> bool {
        let scale = norm.max(1.0);
        self.last = delta;
        if delta <= f64::EPSILON * scale {
            return true;
        }
        if delta < self.best {
            self.best = delta;
            self.stalled = 0;
        } else {
            self.stalled += 1;
        }
        self.stalled >= 64 && delta <= 1e-13 * scale
    }
}

/// `(I_dim ⊗ M) v` for `v` with block rows of height `M.ncols()`.
fn blockwise(m: &CMat, v: &CMat) -> CMat {
    let (p, q) = (m.nrows(), m.ncols());
    let blocks = v.nrows() / q;
    let mut out = zeros(blocks * p, v.ncols());
    for k in 0..blocks {
        out.rows_mut(k * p, p).copy_from(&(m * v.rows(k * q, q)));
    }
    out
}

impl Realization {
    pub fn new(d: CMat, c: CMat, a: Vec<CMat>, b: Vec<CMat>) -> Result<Self> {
        let (p, q, s) = (d.nrows(), d.ncols(), c.ncols());
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::ShapeMismatch("realization needs one A_i and one B_i per variable".into()));
        }
        if c.nrows() != p
            || a.iter().any(|m| m.nrows() != s || m.ncols() != s)
            || b.iter().any(|m| m.nrows() != s || m.ncols() != q)
        {
            return Err(Error::ShapeMismatch("inconsistent realization blocks".into()));
        }
        Ok(Realization { d, c, a, b })
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn block_shape(&self) -> (usize, usize) {
        (self.d.nrows(), self.d.ncols())
    }

    pub fn state_dim(&self) -> usize {
        self.c.ncols()
    }

    pub fn coefficient(&self, word: &[usize]) -> CMat {
        match word.split_last() {
            None => self.d.clone(),
            Some((&i, alpha)) => {
                let mut ca = self.c.clone();
                for &j in alpha {
                    ca = &ca * &self.a[j];
                }
                ca * &self.b[i]
            }
        }
    }

    pub fn to_series(&self, max_deg: usize) -> FreeSeries {
        let (p, q) = self.block_shape();
        let mut f = FreeSeries::zero(self.n(), max_deg, p, q);
        f.set_coeff_at(0, &self.d);
        if max_deg == 0 {
            return f;
        }
        let space = f.space().clone();
        // C A_α for |α| < maxDeg, in graded order
        let mut ca: Vec<CMat> = vec![self.c.clone()];
        for idx in 0..space.dim_upto(max_deg - 1) {
            if idx > 0 {
                let (rest, j) = space.split_last(idx).expect("nonempty word");
                ca.push(&ca[rest] * &self.a[j]);
            }
            for i in 0..self.n() {
                let t = space.append(idx, i).expect("below truncation");
                f.set_coeff_at(t, &(&ca[idx] * &self.b[i]));
            }
        }
        f
    }

    /// Dense evaluation at a tuple of `d x d` matrices.
    pub fn eval(&self, x: &[CMat]) -> Result<CMat> {
        if x.len() != self.n() {
            return Err(Error::ShapeMismatch(format!("map in {} variables evaluated at a {}-tuple", self.n(), x.len())));
        }
        let g = x[0].nrows();
        let s = self.state_dim();
        let (_, q) = self.block_shape();
        let mut m = eye(g * s);
        let mut rhs = zeros(g * s, g * q);
        for i in 0..self.n() {
            m -= kron(&x[i], &self.a[i]);
            rhs += kron(&x[i], &self.b[i]);
        }
        let w = solve(&m, &rhs)?;
        Ok(kron(&eye(g), &self.d) + kron(&eye(g), &self.c) * w)
    }

    /// `F(rS) v` or `F(rR) v` on the truncation, via the degree recursion
    /// `w_γ = u_γ + r A_i w_β` for `γ = g_i β` (left) or `γ = β g_i` (right).
    pub fn apply_on_fock(&self, fock: &TruncatedFock, side: Side, r: f64, v: &CMat) -> CMat {
        let s = self.state_dim();
        let rc = C64::new(r, 0.0);
        let mut w = zeros(fock.dim() * s, v.ncols());
        for i in 0..self.n() {
            w += fock.shift(side, i, &blockwise(&self.b[i], v), s) * rc;
        }
        for gamma in 1..fock.dim() {
            let (i, beta) = match side {
                Side::Left => fock.split_first(gamma).expect("nonempty"),
                Side::Right => {
                    let (beta, i) = fock.split_last(gamma).expect("nonempty");
                    (i, beta)
                }
            };
            let add = (&self.a[i] * w.rows(beta * s, s)) * rc;
            let mut dst = w.rows_mut(gamma * s, s);
            dst += add;
        }
        blockwise(&self.d, v) + blockwise(&self.c, &w)
    }

    /// Realization of the `j`-th column of `F`.
    pub fn column(&self, j: usize) -> Realization {
        Realization {
            d: self.d.columns(j, 1).into_owned(),
            c: self.c.clone(),
            a: self.a.clone(),
            b: self.b.iter().map(|b| b.columns(j, 1).into_owned()).collect(),
        }
    }

    /// Realization of the product `F G`, so `(FG)_w = Σ_{w=uv} F_u G_v`.
    pub fn product(&self, other: &Realization) -> Result<Realization> {
        if self.n() != other.n() || self.block_shape().1 != other.block_shape().0 {
            return Err(Error::ShapeMismatch("product of incompatible realizations".into()));
        }
        let (sf, sg) = (self.state_dim(), other.state_dim());
        let mut c = zeros(self.d.nrows(), sf + sg);
        c.columns_mut(0, sf).copy_from(&self.c);
        c.columns_mut(sf, sg).copy_from(&(&self.d * &other.c));
        let mut a = Vec::with_capacity(self.n());
        let mut b = Vec::with_capacity(self.n());
        for i in 0..self.n() {
            let mut ai = zeros(sf + sg, sf + sg);
            ai.view_mut((0, 0), (sf, sf)).copy_from(&self.a[i]);
            ai.view_mut((0, sf), (sf, sg)).copy_from(&(&self.b[i] * &other.c));
            ai.view_mut((sf, sf), (sg, sg)).copy_from(&other.a[i]);
            a.push(ai);
            let mut bi = zeros(sf + sg, other.d.ncols());
            bi.rows_mut(0, sf).copy_from(&(&self.b[i] * &other.d));
            bi.rows_mut(sf, sg).copy_from(&other.b[i]);
            b.push(bi);
        }
        Realization::new(&self.d * &other.d, c, a, b)
    }

    pub fn on_fock(&self, fock: &TruncatedFock, side: Side, r: f64) -> CMat {
        let q = self.block_shape().1;
        self.apply_on_fock(fock, side, r, &eye(fock.dim() * q))
    }

    /// Solution of `W = C* C + Σ A_i* W A_i` by fixed-point iteration.
    pub fn observability_gram(&self) -> Result<CMat> {
        let base = self.c.adjoint() * &self.c;
        let mut w = base.clone();
        let mut stop = StopRule::default();
        for _ in 0..STEIN_MAX_ITERS {
            let next = self.a.iter().fold(base.clone(), |acc, a| acc + a.adjoint() * &w * a);
            let delta = frobenius(&(&next - &w));
            w = next;
            if stop.settled(delta, frobenius(&w)) {
                return Ok(w);
            }
        }
        Err(Error::NoConvergence { iters: STEIN_MAX_ITERS, delta: stop.last })
    }

    /// Symbols `G(δ) = Σ_α F_α* F_{αδ}` for all `|δ| ≤ m`, graded order.
    pub fn gram_symbols(&self, m: usize) -> Result<Vec<CMat>> {
        let w = self.observability_gram()?;
        let space = TruncatedFock::new(self.n(), m);
        let mut g0 = self.d.adjoint() * &self.d;
        let mut h = self.d.adjoint() * &self.c;
        for i in 0..self.n() {
            g0 += self.b[i].adjoint() * &w * &self.b[i];
            h += self.b[i].adjoint() * &w * &self.a[i];
        }
        let mut out = vec![g0];
        if m == 0 {
            return Ok(out);
        }
        // H A_{δ'} for |δ'| < m
        let mut ha: Vec<CMat> = vec![h];
        for idx in 1..space.dim() {
            let (rest, l) = space.split_last(idx).expect("nonempty");
            out.push(&ha[rest] * &self.b[l]);
            if space.degree_of(idx) < m {
                ha.push(&ha[rest] * &self.a[l]);
            }
        }
        Ok(out)
    }

    /// Exact compression `P_{≤m} (F̂* F̂) P_{≤m}` where `F̂` is `F(S)` (left)
    /// or `F(R)` (right) on the full Fock space.
    pub fn exact_gram(&self, side: Side, m: usize) -> Result<CMat> {
        let sym = self.gram_symbols(m)?;
        let q = self.block_shape().1;
        let space = TruncatedFock::new(self.n(), m);
        let dim = space.dim();
        let mut out = zeros(dim * q, dim * q);
        for gp in 0..dim {
            let kg = space.degree_of(gp);
            for delta in 0..space.dim_upto(m - kg) {
                let gamma = match side {
                    Side::Left => space.concat(delta, gp),
                    Side::Right => space.concat(gp, space.reverse(delta)),
                }
                .expect("degree checked");
                out.view_mut((gamma * q, gp * q), (q, q)).copy_from(&sym[delta]);
                if delta != 0 {
                    out.view_mut((gp * q, gamma * q), (q, q)).copy_from(&sym[delta].adjoint());
                }
            }
        }
        Ok(out)
    }
}

/// `Σ_γ F_γ* G_γ`, i.e. the Gram `F̂(S)* Ĝ(S)` compressed to the vacuum,
/// from the cross Stein equation `W = C_F* C_G + Σ A_{F,i}* W A_{G,i}`.
pub fn cross_gram(f: &Realization, g: &Realization) -> Result<CMat> {
    if f.n() != g.n() || f.block_shape().0 != g.block_shape().0 {
        return Err(Error::ShapeMismatch("cross Gram of incompatible realizations".into()));
    }
    let base = f.c.adjoint() * &g.c;
    let mut w = base.clone();
    let mut stop = StopRule::default();
    let mut done = false;
    for _ in 0..STEIN_MAX_ITERS {
        let next = (0..f.n()).fold(base.clone(), |acc, i| acc + f.a[i].adjoint() * &w * &g.a[i]);
        let delta = frobenius(&(&next - &w));
        w = next;
        if stop.settled(delta, frobenius(&w)) {
            done = true;
            break;
        }
    }
    if !done {
        return Err(Error::NoConvergence { iters: STEIN_MAX_ITERS, delta: stop.last });
    }
    Ok((0..f.n()).fold(f.d.adjoint() * &g.d, |acc, i| acc + f.b[i].adjoint() * &w * &g.b[i]))
}

impl FreeMap for Realization {
    fn n_vars(&self) -> usize {
        self.n()
    }

    fn n_outputs(&self) -> usize {
        1
    }

    fn block_shape(&self) -> (usize, usize) {
        Realization::block_shape(self)
    }

    /// `1 / ‖col(A_i)‖`, below which the resolvent is a Neumann series.
    fn domain_radius(&self) -> f64 {
        let col: Vec<CMat> = self.a.iter().map(|a| a.adjoint()).collect();
        let norm = operator_norm(&row_matrix(&col));
        if norm == 0.0 {
            f64::INFINITY
        } else {
            1.0 / norm
        }
    }

    fn apply_tuple(&self, x: &[CMat]) -> Result<Vec<CMat>> {
        Ok(vec![self.eval(x)?])
    }
}
