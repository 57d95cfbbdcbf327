//! Noncommutative Poisson kernels `K_{T,r} h = Σ_α r^{|α|} Δ_{T,r} T_α* h ⊗ e_α`
//! and the transforms they induce.
//!
//! Kernel matrices use the Fock-major layout: row `α·d + k` holds the
//! `k`-th coordinate of the `e_α` component. The defect space is kept as
//! all of `C^d`, weighted by `Δ_{T,r}`.

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::fock::{dim_of, Side, TruncatedFock};
use crate::freeseries::{cross_gram, extract_from_vacuum_column, FreeSeries, Realization};
use crate::linalg::{eye, kron, operator_norm, psd_sqrt, rank_tol, row_gram, word_product, zeros, CMat, C64, CLAMP_TOL};
use crate::mobius::BallAutomorphism;
use crate::opmodel::RowContraction;

/// Rank cut used for defect ranks.
pub const RANK_TOL: f64 = 1e-8;

/// Largest Fock dimension the adaptive routines will materialize.
const MAX_VACUUM_DIM: usize = 1 << 21;

#[derive(Clone, Debug)]
pub struct PoissonKernel {
    t: RowContraction,
    r: f64,
    fock: TruncatedFock,
    delta: CMat,
    matrix: CMat,
}

impl PoissonKernel {
    pub fn new(t: &RowContraction, r: f64, depth: usize) -> Result<Self> {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::ConfigInvalid(format!("kernel parameter r = {r} is outside (0, 1]")));
        }
        let d = t.d();
        let fock = TruncatedFock::new(t.n(), depth);
        let delta = psd_sqrt(&(eye(d) - row_gram(t.entries()) * C64::new(r * r, 0.0)), CLAMP_TOL)?;
        let mut matrix = zeros(fock.dim() * d, d);
        // T_α* for α = β g_i is T_i* T_β*
        let mut adj: Vec<CMat> = Vec::with_capacity(fock.dim());
        adj.push(eye(d));
        for idx in 1..fock.dim() {
            let (beta, i) = fock.split_last(idx).expect("nonempty");
            adj.push(t.entries()[i].adjoint() * &adj[beta]);
        }
        for (idx, m) in adj.iter().enumerate() {
            let w = C64::new(r.powi(fock.degree_of(idx) as i32), 0.0);
            matrix.rows_mut(idx * d, d).copy_from(&((&delta * m) * w));
        }
        Ok(PoissonKernel { t: t.clone(), r, fock, delta, matrix })
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn delta(&self) -> &CMat {
        &self.delta
    }

    pub fn fock(&self) -> &TruncatedFock {
        &self.fock
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn contraction(&self) -> &RowContraction {
        &self.t
    }

    /// `‖K*K − I‖` on the truncation.
    pub fn isometry_defect(&self) -> f64 {
        let k = &self.matrix;
        operator_norm(&(k.adjoint() * k - eye(self.t.d())))
    }

    /// Geometric bound on the mass beyond the truncation degree.
    pub fn tail_bound(&self) -> f64 {
        let rho = self.r * self.t.row_norm();
        if rho >= 1.0 {
            return f64::INFINITY;
        }
        rho.powi(2 * (self.fock.depth() as i32 + 1)) / (1.0 - rho * rho)
    }

    /// `K*(f(S) ⊗ I)K` for a scalar series `f`, applied without forming `f(S)`.
    pub fn transform_series(&self, f: &FreeSeries) -> Result<CMat> {
        if f.block_shape() != (1, 1) || f.n() != self.t.n() {
            return Err(Error::ShapeMismatch("kernel transform needs a scalar series in the kernel's variables".into()));
        }
        let d = self.t.d();
        let mut w = zeros(self.matrix.nrows(), d);
        for (alpha, a) in f.terms() {
            let Some(key) = self.fock.index_of(&alpha) else { continue };
            for gamma in 0..self.fock.dim() {
                if let Some(t) = self.fock.concat(key, gamma) {
                    let add = self.matrix.rows(gamma * d, d) * a[(0, 0)];
                    let mut dst = w.rows_mut(t * d, d);
                    dst += add;
                }
            }
        }
        Ok(self.matrix.adjoint() * w)
    }

    /// `K*(S_α S_β* ⊗ I)K = ((S_α*⊗I)K)* ((S_β*⊗I)K)`.
    pub fn transform_monomial(&self, alpha: &[usize], beta: &[usize]) -> CMat {
        let a = self.shifted_adjoint(alpha);
        let b = self.shifted_adjoint(beta);
        a.adjoint() * b
    }

    fn shifted_adjoint(&self, word: &[usize]) -> CMat {
        let d = self.t.d();
        word.iter().fold(self.matrix.clone(), |v, &i| self.fock.shift_adj(Side::Left, i, &v, d))
    }

    /// `K*(g ⊗ I)K` for an operator `g` on the kernel's truncation.
    pub fn transform_operator(&self, g: &CMat) -> Result<CMat> {
        if g.nrows() != self.fock.dim() || g.ncols() != self.fock.dim() {
            return Err(Error::ShapeMismatch("operator does not act on the kernel's truncation".into()));
        }
        Ok(self.matrix.adjoint() * kron(g, &eye(self.t.d())) * &self.matrix)
    }
}

/// `z_λ = Σ_α λ̄_α e_α` on the truncation.
pub fn z_lambda(lambda: &[C64], fock: &TruncatedFock) -> CMat {
    let mut z = zeros(fock.dim(), 1);
    z[(0, 0)] = C64::new(1.0, 0.0);
    for idx in 1..fock.dim() {
        let (beta, i) = fock.split_last(idx).expect("nonempty");
        z[(idx, 0)] = z[(beta, 0)] * lambda[i].conj();
    }
    z
}

/// `u_λ = (1 − ‖λ‖²)^{1/2} z_λ`, the unit vector `K_λ(1)`.
pub fn u_lambda(lambda: &[C64], fock: &TruncatedFock) -> CMat {
    let s: f64 = lambda.iter().map(|z| z.norm_sqr()).sum();
    z_lambda(lambda, fock) * C64::new((1.0 - s).max(0.0).sqrt(), 0.0)
}

/// Direct route `Σ r^{|α|} A_α ⊗ T_α`.
pub fn poisson_transform_series(t: &RowContraction, f: &FreeSeries, r: f64) -> Result<CMat> {
    let scaled: Vec<CMat> = t.entries().iter().map(|m| m * C64::new(r, 0.0)).collect();
    f.eval_value(&scaled)
}

/// `P_T[S_α S_β*] = T_α T_β*`.
pub fn poisson_transform_monomial(t: &RowContraction, alpha: &[usize], beta: &[usize]) -> CMat {
    t.word(alpha) * t.word(beta).adjoint()
}

/// Largest depth `≤ want` whose Fock dimension stays within the budget.
fn capped_depth(n: usize, want: usize) -> usize {
    let mut k = want;
    while k > 0 && dim_of(n, k) > MAX_VACUUM_DIM {
        k -= 1;
    }
    k
}

/// Series of `Ψ_α` read off `Ψ̂_α e_∅`, propagated matrix-free on the truncation.
pub fn boundary_word_series(psi: &BallAutomorphism, word: &[usize], depth: usize) -> FreeSeries {
    let n = psi.n();
    let fock = TruncatedFock::new(n, depth);
    let real = psi.realization();
    let mut x = fock.vacuum(1);
    for &j in word.iter().rev() {
        let mut input = zeros(fock.dim() * n, 1);
        for g in 0..fock.dim() {
            input[(g * n + j, 0)] = x[(g, 0)];
        }
        x = real.apply_on_fock(&fock, Side::Left, 1.0, &input);
    }
    extract_from_vacuum_column(&x, &fock, 1.0, 1, depth)
}

/// `‖Ψ(T)_α Ψ(T)_β* − P_T[Ψ̂_α Ψ̂_β*]‖` with the right side expanded through
/// the Fourier series of `Ψ̂_α`, `Ψ̂_β` truncated at `depth`.
pub fn intertwining_defect_at(t: &RowContraction, psi: &BallAutomorphism, alpha: &[usize], beta: &[usize], depth: usize) -> Result<f64> {
    if t.n() != psi.n() {
        return Err(Error::ShapeMismatch("contraction and automorphism act on different balls".into()));
    }
    let y = psi.apply(t.entries())?;
    let lhs = word_product(&y, alpha) * word_product(&y, beta).adjoint();
    let fa = boundary_word_series(psi, alpha, depth).eval_value(t.entries())?;
    let fb = boundary_word_series(psi, beta, depth).eval_value(t.entries())?;
    Ok(operator_norm(&(lhs - fa * fb.adjoint())))
}

/// Degree at which the Fourier tails of `Ψ̂_α(T)` drop below `tol`
/// (the degree-k part is bounded by `‖λ‖^{k−|α|} ‖T‖^k`).
pub fn intertwining_depth(t: &RowContraction, psi: &BallAutomorphism, max_word: usize, tol: f64) -> usize {
    let rho = psi.lambda_norm() * t.row_norm();
    let mut k = max_word.max(1);
    if rho > 0.0 {
        while rho.powi(k as i32 + 1) / (1.0 - rho) > tol && k < 64 {
            k += 1;
        }
    }
    capped_depth(t.n(), k)
}

pub fn intertwining_defect(t: &RowContraction, psi: &BallAutomorphism, alpha: &[usize], beta: &[usize]) -> Result<f64> {
    let depth = intertwining_depth(t, psi, alpha.len().max(beta.len()), 1e-12);
    intertwining_defect_at(t, psi, alpha, beta, depth)
}

/// Largest intertwining defect over all `|α|, |β| ≤ max_len`, expanding
/// each `Ψ̂_α` once.
pub fn max_intertwining_defect(t: &RowContraction, psi: &BallAutomorphism, max_len: usize) -> Result<f64> {
    if t.n() != psi.n() {
        return Err(Error::ShapeMismatch("contraction and automorphism act on different balls".into()));
    }
    let depth = intertwining_depth(t, psi, max_len, 1e-12);
    let y = psi.apply(t.entries())?;
    let words = TruncatedFock::new(t.n(), max_len).words();
    let direct: Vec<CMat> = words.iter().map(|w| word_product(&y, w)).collect();
    let mut via_series = Vec::with_capacity(words.len());
    for w in &words {
        via_series.push(boundary_word_series(psi, w, depth).eval_value(t.entries())?);
    }
    let mut worst = 0.0_f64;
    for a in 0..words.len() {
        for b in 0..words.len() {
            let lhs = &direct[a] * direct[b].adjoint();
            worst = worst.max(operator_norm(&(lhs - &via_series[a] * via_series[b].adjoint())));
        }
    }
    Ok(worst)
}

/// Composition law on a monomial `S_α S_β*`: the boundary tuple of `Ψ∘Φ`
/// against `Ψ` applied to the boundary tuple of `Φ`, on degree `≤ depth`.
pub fn composition_defect(psi: &BallAutomorphism, phi: &BallAutomorphism, alpha: &[usize], beta: &[usize], depth: usize) -> Result<f64> {
    let fock = TruncatedFock::new(psi.n(), depth);
    let hat = psi.compose(phi)?.on_fock(&fock, Side::Left, 1.0);
    let lhs = word_product(&hat, alpha) * word_product(&hat, beta).adjoint();
    let y = psi.apply(&phi.on_fock(&fock, Side::Left, 1.0))?;
    let rhs = word_product(&y, alpha) * word_product(&y, beta).adjoint();
    Ok(operator_norm(&(lhs - rhs)))
}

#[derive(Clone, Debug)]
pub struct VoiculescuReport {
    pub depth: usize,
    pub safe_degree: usize,
    /// `‖P(Ψ̂*Ψ̂ − I)P‖` from the exact Gram of the boundary row.
    pub isometry_defect: f64,
    /// Numerical rank of `P(I − Ψ̂Ψ̂*)P`.
    pub rank_defect: usize,
    pub kernel_isometry_defect: f64,
    pub kernel_coisometry_defect: f64,
    pub kernel_depth: usize,
    pub generator_match_defect: Vec<f64>,
}

impl VoiculescuReport {
    pub fn kernel_unitarity_defect(&self) -> f64 {
        self.kernel_isometry_defect.max(self.kernel_coisometry_defect)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "depth": self.depth,
            "safeDegree": self.safe_degree,
            "isometryDefect": self.isometry_defect,
            "rankDefectOneMinusPsiPsiStar": self.rank_defect,
            "kernelUnitarityDefect": self.kernel_unitarity_defect(),
            "kernelIsometryDefect": self.kernel_isometry_defect,
            "kernelCoisometryDefect": self.kernel_coisometry_defect,
            "kernelDepth": self.kernel_depth,
            "generatorMatchDefect": self.generator_match_defect,
        })
    }
}

const KERNEL_MAX_LEVELS: usize = 20_000;

/// Scalar series `Δ_λ Σ λ̄_α Z_α`, whose Fock vector is `u_λ`.
fn u_lambda_realization(lambda: &[C64], delta: f64) -> Realization {
    let one = |z: C64| CMat::from_element(1, 1, z);
    let dl = C64::new(delta, 0.0);
    let conj: Vec<CMat> = lambda.iter().map(|l| one(l.conj())).collect();
    Realization::new(one(dl), one(dl), conj.clone(), conj).expect("scalar blocks")
}

/// Truncated shadow of the unitary Poisson kernel `K_{Ψ̂}`.
///
/// Ψ̂ is lower triangular in the degree grading, so its compressions to
/// `degree ≤ N` multiply exactly and `P(I − Ψ̂Ψ̂*)P = I − (PΨ̂P)(PΨ̂P)*`.
/// The co-isometry half needs `⟨Ψ̂_β u_λ, Ψ̂_α u_λ⟩` on the full Fock space;
/// those come from product realizations and a cross Stein equation.
pub fn voiculescu_check(psi: &BallAutomorphism, depth: usize, safe: usize) -> Result<VoiculescuReport> {
    if safe > depth {
        return Err(Error::ConfigInvalid(format!("safe degree {safe} exceeds truncation {depth}")));
    }
    let n = psi.n();
    let fock = TruncatedFock::new(n, depth);
    let dim = fock.dim();
    let m = fock.dim_upto(safe);
    let hat = psi.on_fock(&fock, Side::Left, 1.0);
    let real = psi.realization();

    let gram = real.exact_gram(Side::Left, safe)?;
    let isometry_defect = operator_norm(&(gram - eye(m * n)));

    let delta_sq = eye(dim) - hat.iter().fold(zeros(dim, dim), |acc, h| acc + h * h.adjoint());
    let rank_defect = rank_tol(&delta_sq.view((0, 0), (m, m)).into_owned(), RANK_TOL);

    // K*K = Σ_k H_k with H_0 = Δ², H_k = Σ_i Ψ̂_i H_{k-1} Ψ̂_i*
    let mut h = delta_sq.clone();
    let mut g = delta_sq;
    let mut levels = 0;
    loop {
        let tr: f64 = (0..dim).map(|a| h[(a, a)].re).sum();
        if tr.abs() < 1e-26 {
            break;
        }
        if levels >= KERNEL_MAX_LEVELS {
            return Err(Error::NoConvergence { iters: levels, delta: tr });
        }
        h = hat.iter().fold(zeros(dim, dim), |acc, p| acc + p * &h * p.adjoint());
        g += &h;
        levels += 1;
    }
    let g_minus = &g - eye(dim);
    let kernel_isometry_defect = operator_norm(&g_minus.view((0, 0), (m, m)).into_owned());

    let generator_match_defect = hat.iter().map(|p| operator_norm(&(p * &g_minus).view((0, 0), (m, m)).into_owned())).collect();

    let u = u_lambda_realization(psi.lambda(), psi.delta_lambda());
    let cols: Vec<Realization> = (0..n).map(|j| real.column(j)).collect();
    let safe_space = TruncatedFock::new(n, safe);
    let mut vectors: Vec<Realization> = Vec::with_capacity(m);
    for idx in 0..m {
        let word = safe_space.word_at(idx);
        let mut w = u.clone();
        for &j in word.iter().rev() {
            w = cols[j].product(&w)?;
        }
        vectors.push(w);
    }
    let mut co = zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let v = cross_gram(&vectors[a], &vectors[b])?[(0, 0)];
            co[(a, b)] = v;
            co[(b, a)] = v.conj();
        }
    }
    let kernel_coisometry_defect = operator_norm(&(co - eye(m)));

    Ok(VoiculescuReport {
        depth,
        safe_degree: safe,
        isometry_defect,
        rank_defect,
        kernel_isometry_defect,
        kernel_coisometry_defect,
        kernel_depth: levels,
        generator_match_defect,
    })
}
