//! Characteristic functions
//! `Θ_T(X) = −I ⊗ T + (I ⊗ Δ_T)(I − Σ X_i ⊗ T_i*)^{-1} [X_1 ⊗ I … X_n ⊗ I] (I ⊗ Δ_{T*})`,
//! their behavior under ball automorphisms, and curvature estimators.
//!
//! Values are kept uncompressed, as maps `G ⊗ K^(n) → G ⊗ K` with column
//! index `g·nd + i·d + k` and row index `g·d + k`. On the kernels of the
//! defects `Θ_T` is the unitary `−T: ker Δ_{T*} → ker Δ_T`, so identities
//! of the form `I − ΘΘ* = …` hold verbatim on the full spaces. Defect
//! ranges are materialized only where a map between two different defect
//! spaces is needed (`Ω`, `Ω_*`) and for the curvature formulas.

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::fock::{Side, TruncatedFock};
use crate::freeseries::Realization;
use crate::linalg::{
    eye, inverse, kron, operator_norm, psd_pinv, range_basis, rank_tol, rng_from_seed, row_matrix,
    sphere_point, solve, zeros, CMat, C64, RANK_TOL,
};
use crate::mobius::{apply_linear, BallAutomorphism};
use crate::opmodel::{DefectPair, RowContraction};
use crate::poisson::PoissonKernel;

/// Commutator bound for the commuting-tuple estimators.
pub const COMMUTE_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct CharFunction {
    t: RowContraction,
    defects: DefectPair,
    realization: Realization,
    basis_t: CMat,
    basis_t_star: CMat,
}

/// `Ω: D_{Ψ_λ(T)} → D_T` and `Ω_*: D_{Ψ_λ(T)*} → D_{T*}` in the
/// orthonormal range bases stored alongside.
#[derive(Clone, Debug)]
pub struct OmegaPair {
    pub omega: CMat,
    pub omega_star: CMat,
    pub basis_t: CMat,
    pub basis_psi: CMat,
    pub basis_t_star: CMat,
    pub basis_psi_star: CMat,
}

#[derive(Clone, Debug)]
pub struct KernelIdentity {
    pub residual: f64,
    pub rank: usize,
    pub safe_degree: usize,
}

#[derive(Clone, Debug)]
pub struct CurvatureReport {
    pub rank_delta_t: usize,
    pub trace_ratios: Vec<f64>,
    pub curv_estimate: f64,
    pub euler_ratios: Vec<f64>,
    pub euler_estimate: f64,
}

#[derive(Clone, Debug)]
pub struct ArvesonEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub samples: usize,
    pub r: f64,
}

fn to_domain(e: Error) -> Error {
    match e {
        Error::IllConditioned { cond } => Error::DomainViolation(format!("resolvent is ill-conditioned (condition {cond:.3e})")),
        other => other,
    }
}

/// `Σ_i X_i ⊗ (e_i^T ⊗ I_d)`, the row `[X_1 ⊗ I … X_n ⊗ I]`.
fn hat_row(x: &[CMat], d: usize) -> CMat {
    let n = x.len();
    let g = x[0].nrows();
    let mut out = zeros(g * d, g * n * d);
    for (i, xi) in x.iter().enumerate() {
        let mut e = zeros(d, n * d);
        e.view_mut((0, i * d), (d, d)).copy_from(&eye(d));
        out += kron(xi, &e);
    }
    out
}

impl CharFunction {
    pub fn new(t: &RowContraction) -> Result<Self> {
        let defects = t.defects()?;
        let (n, d) = (t.n(), t.d());
        let dt = CMat::from_fn(d, n * d, |r, c| -t.entries()[c / d][(r, c % d)]);
        let a = t.entries().iter().map(|ti| ti.adjoint()).collect();
        let b = (0..n).map(|j| defects.delta_t_star.rows(j * d, d).into_owned()).collect();
        let realization = Realization::new(dt, defects.delta_t.clone(), a, b)?;
        let basis_t = range_basis(&defects.delta_t, RANK_TOL);
        let basis_t_star = range_basis(&defects.delta_t_star, RANK_TOL);
        Ok(CharFunction { t: t.clone(), defects, realization, basis_t, basis_t_star })
    }

    pub fn contraction(&self) -> &RowContraction {
        &self.t
    }

    pub fn defects(&self) -> &DefectPair {
        &self.defects
    }

    /// `(d, n·d)` before compression.
    pub fn block_shape(&self) -> (usize, usize) {
        (self.t.d(), self.t.n() * self.t.d())
    }

    /// Transfer-function form: `D = −T`, `C = Δ_T`, `A_i = T_i*`, `B_i` the
    /// `i`-th block row of `Δ_{T*}`.
    pub fn realization(&self) -> &Realization {
        &self.realization
    }

    pub fn basis_t(&self) -> &CMat {
        &self.basis_t
    }

    pub fn basis_t_star(&self) -> &CMat {
        &self.basis_t_star
    }

    /// `Θ_T` as a map `D_{T*} → D_T` in the stored range bases.
    pub fn compressed_realization(&self) -> Realization {
        let (n, d) = (self.t.n(), self.t.d());
        let qt = self.basis_t.adjoint();
        let qs = &self.basis_t_star;
        let dc = -(&qt * self.t.row() * qs);
        let cc = &qt * &self.defects.delta_t;
        let a = self.t.entries().iter().map(|ti| ti.adjoint()).collect();
        let b = (0..n).map(|j| self.defects.delta_t_star.rows(j * d, d) * qs).collect();
        Realization::new(dc, cc, a, b).expect("consistent shapes")
    }

    /// Radius of the ball on which `Θ_T` is defined.
    pub fn domain_radius(&self) -> f64 {
        let norm = self.t.row_norm();
        if norm < 1.0 {
            1.0 / norm
        } else {
            1.0
        }
    }

    fn eval_unchecked(&self, x: &[CMat]) -> Result<CMat> {
        let (n, d) = (self.t.n(), self.t.d());
        if x.len() != n {
            return Err(Error::ShapeMismatch(format!("characteristic function in {n} variables at a {}-tuple", x.len())));
        }
        let g = x[0].nrows();
        if x.iter().any(|m| m.nrows() != g || m.ncols() != g) {
            return Err(Error::ShapeMismatch("tuple entries must be equal square matrices".into()));
        }
        let ig = eye(g);
        let mut m = eye(g * d);
        for (xi, ti) in x.iter().zip(self.t.entries()) {
            m -= kron(xi, &ti.adjoint());
        }
        let rhs = hat_row(x, d) * kron(&ig, &self.defects.delta_t_star);
        let w = solve(&m, &rhs).map_err(to_domain)?;
        Ok(kron(&ig, &self.defects.delta_t) * w - kron(&ig, &self.t.row()))
    }

    /// `Θ_T(X)`, a `(g·d) x (g·n·d)` matrix.
    pub fn eval(&self, x: &[CMat]) -> Result<CMat> {
        let radius = self.domain_radius();
        let norm = crate::linalg::row_norm(x);
        if norm >= radius {
            return Err(Error::DomainViolation(format!("‖X‖ = {norm:.6} is outside the ball of radius {radius:.6}")));
        }
        self.eval_unchecked(x)
    }

    /// `Θ_T(z)` at a scalar point, `d x nd`.
    pub fn eval_scalar(&self, z: &[C64]) -> Result<CMat> {
        let x: Vec<CMat> = z.iter().map(|&zi| CMat::from_element(1, 1, zi)).collect();
        self.eval(&x)
    }

    /// `Θ̃_T = Θ_T(R_1, …, R_n)` on the truncation. The truncated right
    /// creations are nilpotent, so the resolvent is a finite sum and `r = 1`
    /// is exact; `Θ̃_T` does not lower degree, so this is the compression
    /// `P_{≤N} Θ̃_T P_{≤N}`.
    pub fn boundary(&self, depth: usize) -> CMat {
        let fock = TruncatedFock::new(self.t.n(), depth);
        self.realization.on_fock(&fock, Side::Right, 1.0)
    }
}

pub fn char_eval(c: &CharFunction, x: &[CMat]) -> Result<CMat> {
    c.eval(x)
}

pub fn char_boundary(c: &CharFunction, depth: usize) -> CMat {
    c.boundary(depth)
}

/// Residuals of
/// `I − Θ(X)Θ(Y)* = Δ_T̃ (I − X̂T̃*)^{-1} (I − X̂Ŷ*) (I − T̃Ŷ*)^{-1} Δ_T̃` and of
/// `I − Θ(X)*Θ(Y) = Δ_T̃* (I − X̂*T̃)^{-1} (I − X̂*Ŷ) (I − T̃*Ŷ)^{-1} Δ_T̃*`,
/// with `T̃ = I ⊗ T` and `X̂ = [X_1 ⊗ I … X_n ⊗ I]`.
pub fn factorization_defect(c: &CharFunction, x: &[CMat], y: &[CMat]) -> Result<(f64, f64)> {
    let (tx, ty) = (c.eval(x)?, c.eval(y)?);
    let d = c.t.d();
    let g = x[0].nrows();
    let ig = eye(g);
    let tt = kron(&ig, &c.t.row());
    let (xh, yh) = (hat_row(x, d), hat_row(y, d));
    let dt = kron(&ig, &c.defects.delta_t);
    let ds = kron(&ig, &c.defects.delta_t_star);

    let small = eye(g * d);
    let left = &dt * inverse(&(&small - &xh * tt.adjoint())).map_err(to_domain)?;
    let right = inverse(&(&small - &tt * yh.adjoint())).map_err(to_domain)? * &dt;
    let rhs = left * (&small - &xh * yh.adjoint()) * right;
    let first = operator_norm(&(&small - &tx * ty.adjoint() - rhs));

    let big = eye(g * d * c.t.n());
    let left = &ds * inverse(&(&big - xh.adjoint() * &tt)).map_err(to_domain)?;
    let right = inverse(&(&big - tt.adjoint() * &yh)).map_err(to_domain)? * &ds;
    let rhs = left * (&big - xh.adjoint() * &yh) * right;
    let second = operator_norm(&(&big - tx.adjoint() * &ty - rhs));
    Ok((first, second))
}

/// `I − Θ̃Θ̃* = K K*` with `K` the Poisson kernel at `r = 1`, compared on
/// degrees `≤ N − 2`. Both sides are exact compressions: `Θ̃` does not
/// lower degree, so `P Θ̃Θ̃* P = (PΘ̃P)(PΘ̃P)*`.
pub fn defect_kernel_identity(c: &CharFunction, depth: usize) -> Result<KernelIdentity> {
    let d = c.t.d();
    let theta = c.boundary(depth);
    let kernel = PoissonKernel::new(&c.t, 1.0, depth)?;
    let safe_degree = depth.saturating_sub(2);
    let m = TruncatedFock::new(c.t.n(), depth).dim_upto(safe_degree) * d;
    let th = theta.rows(0, m);
    let lhs = eye(m) - &th * th.adjoint();
    let k = kernel.matrix().rows(0, m);
    let rhs = &k * k.adjoint();
    Ok(KernelIdentity { residual: operator_norm(&(&lhs - rhs)), rank: rank_tol(&lhs, RANK_TOL), safe_degree })
}

/// `Θ̃_λ* Θ̃_λ − I` on degrees `≤ m`, from the exact Gram of the boundary.
pub fn inner_defect(c: &CharFunction, m: usize) -> Result<f64> {
    let gram = c.compressed_realization().exact_gram(Side::Right, m)?;
    Ok(operator_norm(&(&gram - eye(gram.nrows()))))
}

fn lambda_col_kron(lambda: &[C64], d: usize) -> CMat {
    // λ* ⊗ I_d as an (nd) x d column
    let n = lambda.len();
    let mut out = zeros(n * d, d);
    for (i, l) in lambda.iter().enumerate() {
        out.view_mut((i * d, 0), (d, d)).copy_from(&(eye(d) * l.conj()));
    }
    out
}

impl OmegaPair {
    /// `max ‖Q*Q − I‖, ‖QQ* − I‖` over `Ω` and `Ω_*`; infinite when the
    /// defect ranks disagree.
    pub fn unitarity_defect(&self) -> f64 {
        [&self.omega, &self.omega_star]
            .iter()
            .map(|m| {
                if m.nrows() != m.ncols() {
                    return f64::INFINITY;
                }
                let k = m.nrows();
                operator_norm(&(m.adjoint() * *m - eye(k))).max(operator_norm(&(*m * m.adjoint() - eye(k))))
            })
            .fold(0.0, f64::max)
    }

    /// `Ω` as a partial isometry of `K`.
    pub fn omega_full(&self) -> CMat {
        &self.basis_t * &self.omega * self.basis_psi.adjoint()
    }

    /// `Ω_*` as a partial isometry of `K^(n)`.
    pub fn omega_star_full(&self) -> CMat {
        &self.basis_t_star * &self.omega_star * self.basis_psi_star.adjoint()
    }
}

/// `Ω Δ_{Ψ_λ(T)} h = Δ_T (I − λT*)^{-1} Δ_λ h` and
/// `Ω_* Δ_{Ψ_λ(T)*} y = Δ_{T*} (I − λ*T)^{-1} Δ_{λ*} y`, with `λ` the
/// point of `Ψ`.
pub fn omega_unitaries(t: &RowContraction, psi: &BallAutomorphism) -> Result<OmegaPair> {
    let (n, d) = (t.n(), t.d());
    if psi.n() != n {
        return Err(Error::ShapeMismatch("automorphism and tuple in different dimensions".into()));
    }
    let lambda = psi.lambda();
    let dt = t.defects()?;
    let pt = RowContraction::unchecked(psi.apply_psi_lambda(t.entries())?)?;
    let dp = pt.defects()?;

    let mut lt = zeros(d, d);
    for (ti, l) in t.entries().iter().zip(lambda) {
        lt += ti.adjoint() * *l;
    }
    let res = inverse(&(eye(d) - lt)).map_err(to_domain)?;
    let om_full = &dt.delta_t * res * C64::new(psi.delta_lambda(), 0.0) * psd_pinv(&dp.delta_t, RANK_TOL);

    let ls = lambda_col_kron(lambda, d) * t.row();
    let res = inverse(&(eye(n * d) - ls)).map_err(to_domain)?;
    let dls = kron(psi.delta_lambda_star(), &eye(d));
    let oms_full = &dt.delta_t_star * res * dls * psd_pinv(&dp.delta_t_star, RANK_TOL);

    let basis_t = range_basis(&dt.delta_t, RANK_TOL);
    let basis_psi = range_basis(&dp.delta_t, RANK_TOL);
    let basis_t_star = range_basis(&dt.delta_t_star, RANK_TOL);
    let basis_psi_star = range_basis(&dp.delta_t_star, RANK_TOL);
    Ok(OmegaPair {
        omega: basis_t.adjoint() * om_full * &basis_psi,
        omega_star: basis_t_star.adjoint() * oms_full * &basis_psi_star,
        basis_t,
        basis_psi,
        basis_t_star,
        basis_psi_star,
    })
}

/// Residual of `Θ_{Ψ(T)}(X) = −(I ⊗ Ω*) Θ_T(Ψ^{-1}(X)) (I ⊗ Ω_* U)` with
/// `U = [u_ij I]`, both sides cut down to the defect ranges of `Ψ(T)`.
pub fn cara_defect(t: &RowContraction, psi: &BallAutomorphism, x: &[CMat]) -> Result<f64> {
    let d = t.d();
    let g = x[0].nrows();
    let ig = eye(g);
    let moved = RowContraction::unchecked(psi.apply(t.entries())?)?;
    let cm = CharFunction::new(&moved)?;
    let lhs = cm.eval(x)?;
    let pt = &cm.basis_t * cm.basis_t.adjoint();
    let ps = &cm.basis_t_star * cm.basis_t_star.adjoint();
    let lhs = kron(&ig, &pt) * lhs * kron(&ig, &ps);

    let ct = CharFunction::new(t)?;
    let mid = ct.eval(&psi.invert()?.apply(x)?)?;
    let om = omega_unitaries(t, psi)?;
    let right = om.omega_star_full() * kron(psi.u(), &eye(d));
    let rhs = -(kron(&ig, &om.omega_full().adjoint()) * mid * kron(&ig, &right));
    Ok(operator_norm(&(lhs - rhs)))
}

/// At a scalar point `T = μ`, the coincidence reads
/// `(Ψ_μ ∘ Ψ_λ)(X) = −Ω Ψ_{Ψ_λ(μ)}(X) Ω_*^*`, with `Ω ∈ B(C)` and
/// `Ω_* ∈ B(C^n)`; returns the entrywise residual over the tuple.
pub fn formula_defect(mu: &[C64], lambda: &[C64], x: &[CMat]) -> Result<f64> {
    let psi_l = BallAutomorphism::psi(lambda.to_vec())?;
    let psi_m = BallAutomorphism::psi(mu.to_vec())?;
    let nu = psi_l.apply_psi_lambda(&crate::opmodel::scalar_tuple(mu))?;
    let psi_nu = BallAutomorphism::psi(nu.iter().map(|m| m[(0, 0)]).collect())?;
    let om = omega_unitaries(&RowContraction::unchecked(crate::opmodel::scalar_tuple(mu))?, &psi_l)?;
    let omega = om.omega_full()[(0, 0)];
    let lhs = psi_m.apply_psi_lambda(&psi_l.apply_psi_lambda(x)?)?;
    let rhs = apply_linear(&om.omega_star_full().adjoint(), &psi_nu.apply_psi_lambda(x)?)?;
    Ok(lhs
        .iter()
        .zip(&rhs)
        .map(|(a, b)| operator_norm(&(a + b * omega)))
        .fold(0.0, f64::max))
}

/// `Ψ_λ(T) Δ_{λ*} = Δ_λ (I − Tλ*)^{-1} (λ − T)` as `d x nd` rows.
pub fn dede_defect(t: &RowContraction, psi: &BallAutomorphism) -> Result<f64> {
    let (n, d) = (t.n(), t.d());
    let lambda = psi.lambda();
    let lhs = row_matrix(&psi.apply_psi_lambda(t.entries())?) * kron(psi.delta_lambda_star(), &eye(d));
    let mut tl = zeros(d, d);
    for (ti, l) in t.entries().iter().zip(lambda) {
        tl += ti * l.conj();
    }
    let lam_row = CMat::from_fn(d, n * d, |r, c| if r == c % d { lambda[c / d] } else { C64::new(0.0, 0.0) });
    let rhs = solve(&(eye(d) - tl), &(lam_row - t.row())).map_err(to_domain)? * C64::new(psi.delta_lambda(), 0.0);
    Ok(operator_norm(&(lhs - rhs)))
}

/// `I − λΨ_λ(T)* = Δ_λ (I − λT*)^{-1} Δ_λ`, the `X = 0` case of the
/// factorization of `I − Ψ_λ(X)Ψ_λ(Y)*`.
pub fn ident2_defect(t: &RowContraction, psi: &BallAutomorphism) -> Result<f64> {
    let d = t.d();
    let lambda = psi.lambda();
    let image = psi.apply_psi_lambda(t.entries())?;
    let mut lhs = eye(d);
    let mut lt = zeros(d, d);
    for ((p, ti), l) in image.iter().zip(t.entries()).zip(lambda) {
        lhs -= p.adjoint() * *l;
        lt += ti.adjoint() * *l;
    }
    let dl2 = psi.delta_lambda().powi(2);
    let rhs = inverse(&(eye(d) - lt)).map_err(to_domain)? * C64::new(dl2, 0.0);
    Ok(operator_norm(&(lhs - rhs)))
}

/// Coefficient masses `Σ_{|β|=k} ‖Θ_β‖²_HS` of the compressed `Θ_T`.
fn coefficient_masses(c: &CharFunction, max_k: usize) -> Vec<f64> {
    let (n, d) = (c.t.n(), c.t.d());
    let qs = &c.basis_t_star;
    let b: Vec<CMat> = (0..n).map(|j| c.defects.delta_t_star.rows(j * d, d) * qs).collect();
    let d0 = c.basis_t.adjoint() * c.t.row() * qs;
    let mut out = vec![d0.norm_squared()];
    // W_k = Σ_{|α|=k} T_α Δ_T² T_α*, with Q_T Q_T* absorbed by Δ_T
    let mut w = &c.defects.delta_t * &c.defects.delta_t;
    for _ in 1..=max_k {
        out.push(b.iter().map(|bi| (bi.adjoint() * &w * bi).trace().re).sum());
        w = c.t.entries().iter().fold(zeros(d, d), |acc, ti| acc + ti * &w * ti.adjoint());
    }
    out
}

/// Curvature and Euler characteristic sequences for `m = 1..=N−2`.
///
/// `trace[Θ̂Θ̂*(P_m ⊗ I)] = Σ_{k ≤ m} n^{m−k} Σ_{|β|=k} ‖Θ_β‖²_HS` since
/// `Θ̂` is multi-analytic, so each ratio is a partial sum of the
/// coefficient masses weighted by `n^{−k}`. The rank of
/// `(I − Θ̂Θ̂*)(P_{≤m} ⊗ I) = K (P_{≤m} K)*` equals `rank(P_{≤m} K)` because
/// `K` is injective on the range of `K*`.
pub fn curvature_report(t: &RowContraction, depth: usize) -> Result<CurvatureReport> {
    if depth < 3 {
        return Err(Error::ConfigInvalid(format!("curvature needs degree ≥ 3, got {depth}")));
    }
    let c = CharFunction::new(t)?;
    let (n, d) = (t.n(), t.d());
    let top = depth - 2;
    let masses = coefficient_masses(&c, top);
    let nf = n as f64;
    let mut trace_ratios = Vec::with_capacity(top);
    let mut partial = masses[0];
    for (k, m) in masses.iter().enumerate().skip(1) {
        partial += m / nf.powi(k as i32);
        trace_ratios.push(partial);
    }
    let kernel = PoissonKernel::new(t, 1.0, top)?;
    let fock = kernel.fock().clone();
    let euler_ratios = (1..=top)
        .map(|m| {
            let rows = fock.dim_upto(m) * d;
            let rank = rank_tol(&kernel.matrix().rows(0, rows).into_owned(), RANK_TOL);
            let denom: f64 = (0..m).map(|k| nf.powi(k as i32)).sum();
            rank as f64 / denom
        })
        .collect::<Vec<_>>();
    let rank_delta_t = c.defects.rank_t;
    let curv_estimate = rank_delta_t as f64 - trace_ratios.last().copied().unwrap_or(0.0);
    let euler_estimate = euler_ratios.last().copied().unwrap_or(0.0);
    Ok(CurvatureReport { rank_delta_t, trace_ratios, curv_estimate, euler_ratios, euler_estimate })
}

impl CurvatureReport {
    pub fn to_json(&self) -> Value {
        json!({
            "rankDeltaT": self.rank_delta_t,
            "traceRatios": self.trace_ratios,
            "curvEstimate": self.curv_estimate,
            "eulerRatios": self.euler_ratios,
            "eulerEstimate": self.euler_estimate,
        })
    }
}

impl KernelIdentity {
    pub fn to_json(&self) -> Value {
        json!({ "residual": self.residual, "rank": self.rank, "safeDegree": self.safe_degree })
    }
}

impl ArvesonEstimate {
    pub fn to_json(&self) -> Value {
        json!({ "estimate": self.estimate, "stderr": self.stderr, "samples": self.samples, "r": self.r })
    }
}

pub fn commutator_norm(t: &[CMat]) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..t.len() {
        for j in i + 1..t.len() {
            worst = worst.max(operator_norm(&(&t[i] * &t[j] - &t[j] * &t[i])));
        }
    }
    worst
}

/// Neumaier-compensated running sum.
#[derive(Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Monte Carlo average of `trace[I − Θ_T(z)Θ_T(z)*]` over `z = rξ`,
/// `ξ` uniform on the sphere, or over `z = Ψ^{-1}(rξ)` when `psi` is given.
pub fn arveson_curvature(
    t: &RowContraction,
    psi: Option<&BallAutomorphism>,
    r: f64,
    samples: usize,
    seed: u64,
) -> Result<ArvesonEstimate> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::ConfigInvalid(format!("radius r = {r} is outside (0, 1)")));
    }
    if samples < 2 {
        return Err(Error::ConfigInvalid("at least two samples are needed for a standard error".into()));
    }
    let norm = commutator_norm(t.entries());
    if norm > COMMUTE_TOL {
        return Err(Error::NotCommuting { norm });
    }
    let c = CharFunction::new(t)?;
    let inv = psi.map(|p| p.invert()).transpose()?;
    let d = t.d();
    let mut rng = rng_from_seed(seed);
    let (mut s1, mut s2) = (Compensated::default(), Compensated::default());
    for _ in 0..samples {
        let xi = sphere_point(t.n(), &mut rng);
        let mut z: Vec<C64> = xi.iter().map(|v| v * r).collect();
        if let Some(p) = &inv {
            z = p.apply_scalar(&z)?;
        }
        let th = c.eval_scalar(&z)?;
        let v = (eye(d) - &th * th.adjoint()).trace().re;
        s1.add(v);
        s2.add(v * v);
    }
    let k = samples as f64;
    let mean = s1.value() / k;
    let var = ((s2.value() - k * mean * mean) / (k - 1.0)).max(0.0);
    Ok(ArvesonEstimate { estimate: mean, stderr: (var / k).sqrt(), samples, r })
}

impl OmegaPair {
    pub fn to_json(&self) -> Value {
        json!({
            "omega": crate::linalg::matrix_to_value(&self.omega),
            "omegaStar": crate::linalg::matrix_to_value(&self.omega_star),
            "unitarityDefect": self.unitarity_defect(),
        })
    }
}
