//! Free holomorphic automorphisms of the noncommutative unit ball, kept in
//! the normal form `Ψ(X) = Ψ_λ(X) U` with
//! `Ψ_λ(X) = λ − Δ_λ (I − X λ*)^{-1} X Δ_{λ*}`.
//!
//! The identity is `(λ, U) = (0, −I)` since `Ψ_0 = −id`.

use rand::Rng;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::fock::{default_depth, Side, TruncatedFock};
use crate::freeseries::{compose_map, jacobian_at_zero, sup_norm_estimate, ComposeOptions, FreeMap, FreeSeries, Realization};
use crate::linalg::{
    eye, hermitian_eigenvalues, matrix_from_value, matrix_to_value, operator_norm, psd_sqrt, random_tuple_with_norm,
    rng_from_seed, row_matrix, row_norm, solve, tuple_from_row, unitarity_defect, zeros, CMat, C64, CLAMP_TOL,
};

/// Distance below which `λ` and `U + I` are snapped to exact zero.
pub const SNAP_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct BallAutomorphism {
    lambda: Vec<C64>,
    u: CMat,
    delta: f64,
    delta_star: CMat,
}

fn lambda_norm(lambda: &[C64]) -> f64 {
    lambda.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `Δ_{λ*} = (I − λ* λ)^{1/2}` for the row `λ`.
fn delta_star_of(lambda: &[C64]) -> Result<CMat> {
    let n = lambda.len();
    let m = CMat::from_fn(n, n, |i, j| if i == j { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) } - lambda[i].conj() * lambda[j]);
    psd_sqrt(&m, CLAMP_TOL)
}

/// Nearest unitary (polar factor).
fn polar_unitary(m: &CMat) -> CMat {
    let svd = m.clone().svd(true, true);
    svd.u.expect("u requested") * svd.v_t.expect("v requested")
}

/// Entry `j` of the result is `Σ_i L_ij X_i` (`Φ_L(X) = [X_1 … X_n] L`).
pub fn apply_linear(l: &CMat, x: &[CMat]) -> Result<Vec<CMat>> {
    if l.nrows() != x.len() {
        return Err(Error::ShapeMismatch(format!("{}x{} matrix applied to a {}-tuple", l.nrows(), l.ncols(), x.len())));
    }
    let d = x[0].nrows();
    Ok((0..l.ncols())
        .map(|j| x.iter().enumerate().fold(zeros(d, d), |acc, (i, xi)| acc + xi * l[(i, j)]))
        .collect())
}

impl BallAutomorphism {
    pub fn new(lambda: Vec<C64>, u: CMat) -> Result<Self> {
        let n = lambda.len();
        if n == 0 || u.nrows() != n || u.ncols() != n {
            return Err(Error::ShapeMismatch(format!("λ of length {n} with a {}x{} unitary", u.nrows(), u.ncols())));
        }
        let norm = lambda_norm(&lambda);
        if !(norm < 1.0 - 1e-12) {
            return Err(Error::DomainViolation(format!("‖λ‖ = {norm} is not inside the unit ball")));
        }
        let defect = unitarity_defect(&u);
        if defect > 1e-10 {
            return Err(Error::ContractViolation(format!("U is not unitary (defect {defect:.3e})")));
        }
        let lambda = if norm < SNAP_TOL { vec![C64::new(0.0, 0.0); n] } else { lambda };
        let u = if operator_norm(&(&u + eye(n))) <= SNAP_TOL { -eye(n) } else { u };
        let delta = (1.0 - lambda_norm(&lambda).powi(2)).sqrt();
        let delta_star = delta_star_of(&lambda)?;
        Ok(BallAutomorphism { lambda, u, delta, delta_star })
    }

    pub fn identity(n: usize) -> Self {
        Self::new(vec![C64::new(0.0, 0.0); n], -eye(n)).expect("valid normal form")
    }

    /// `Ψ_λ` itself (`U = I`).
    pub fn psi(lambda: Vec<C64>) -> Result<Self> {
        let n = lambda.len();
        Self::new(lambda, eye(n))
    }

    /// `Φ_V(X) = X V`, whose normal form is `(0, −V)`.
    pub fn unitary(v: &CMat) -> Result<Self> {
        Self::new(vec![C64::new(0.0, 0.0); v.nrows()], -v)
    }

    pub fn n(&self) -> usize {
        self.lambda.len()
    }

    pub fn lambda(&self) -> &[C64] {
        &self.lambda
    }

    pub fn u(&self) -> &CMat {
        &self.u
    }

    pub fn delta_lambda(&self) -> f64 {
        self.delta
    }

    pub fn delta_lambda_star(&self) -> &CMat {
        &self.delta_star
    }

    pub fn lambda_norm(&self) -> f64 {
        lambda_norm(&self.lambda)
    }

    pub fn is_identity(&self) -> bool {
        self.lambda.iter().all(|z| *z == C64::new(0.0, 0.0)) && self.u == -eye(self.n())
    }

    fn check_tuple(&self, x: &[CMat]) -> Result<usize> {
        if x.len() != self.n() {
            return Err(Error::ShapeMismatch(format!("automorphism of B^{} applied to a {}-tuple", self.n(), x.len())));
        }
        let d = x[0].nrows();
        if x.iter().any(|m| m.nrows() != d || m.ncols() != d) {
            return Err(Error::ShapeMismatch("tuple entries must be equal square matrices".into()));
        }
        Ok(d)
    }

    /// `Ψ_λ(X)` without the unitary factor.
    pub fn apply_psi_lambda(&self, x: &[CMat]) -> Result<Vec<CMat>> {
        let d = self.check_tuple(x)?;
        let mut xl = zeros(d, d);
        for (xi, li) in x.iter().zip(&self.lambda) {
            xl += xi * li.conj();
        }
        let nrm = operator_norm(&xl);
        if nrm >= 1.0 - 1e-10 {
            return Err(Error::DomainViolation(format!("‖X λ*‖ = {nrm:.6} leaves the domain of Ψ_λ")));
        }
        let xd = apply_linear(&self.delta_star, x)?;
        let rhs = row_matrix(&xd);
        let res = solve(&(eye(d) - xl), &rhs)?;
        let parts = tuple_from_row(&res, self.n());
        Ok(parts
            .into_iter()
            .zip(&self.lambda)
            .map(|(p, li)| eye(d) * *li - p * C64::new(self.delta, 0.0))
            .collect())
    }

    pub fn apply(&self, x: &[CMat]) -> Result<Vec<CMat>> {
        apply_linear(&self.u, &self.apply_psi_lambda(x)?)
    }

    pub fn apply_scalar(&self, z: &[C64]) -> Result<Vec<C64>> {
        let x: Vec<CMat> = z.iter().map(|&zi| CMat::from_element(1, 1, zi)).collect();
        Ok(self.apply(&x)?.iter().map(|m| m[(0, 0)]).collect())
    }

    /// Transfer-function form of the row `[Ψ_1 … Ψ_n]` (block shape `1 x n`).
    pub fn realization(&self) -> Realization {
        let n = self.n();
        let d = CMat::from_fn(1, n, |_, j| self.lambda[j]) * &self.u;
        let c = CMat::from_element(1, 1, C64::new(-self.delta, 0.0));
        let a = self.lambda.iter().map(|l| CMat::from_element(1, 1, l.conj())).collect();
        let b = (0..n).map(|i| self.delta_star.rows(i, 1).into_owned() * &self.u).collect();
        Realization::new(d, c, a, b).expect("consistent shapes")
    }

    /// Component series of `Ψ`, truncated at `max_deg`.
    pub fn series(&self, max_deg: usize) -> Vec<FreeSeries> {
        let row = self.realization().to_series(max_deg);
        (0..self.n()).map(|j| row.entry_series(0, j)).collect()
    }

    /// Boundary operators `Ψ_j(rS)` (or `Ψ_j(rR)`) on the truncation.
    pub fn on_fock(&self, fock: &TruncatedFock, side: Side, r: f64) -> Vec<CMat> {
        let row = self.realization().on_fock(fock, side, r);
        // output columns are interleaved as γ·n + j
        let n = self.n();
        (0..n)
            .map(|j| CMat::from_fn(row.nrows(), fock.dim(), |a, g| row[(a, g * n + j)]))
            .collect()
    }

    pub fn invert(&self) -> Result<BallAutomorphism> {
        let n = self.n();
        let u_star = self.u.adjoint();
        let me = self.clone();
        let map = ClosureMap::new(n, n, self.domain_radius(), move |x| me.apply_psi_lambda(&apply_linear(&u_star, x)?));
        recover_normal_form(&map)
    }

    /// Normal form of `self ∘ other`.
    pub fn compose(&self, other: &BallAutomorphism) -> Result<BallAutomorphism> {
        if self.n() != other.n() {
            return Err(Error::ShapeMismatch("automorphisms of different balls".into()));
        }
        let (outer, inner) = (self.clone(), other.clone());
        let map = ClosureMap::new(self.n(), self.n(), other.domain_radius(), move |x| outer.apply(&inner.apply(x)?));
        recover_normal_form(&map)
    }

    /// Extension to `B^N` with `λ∘ = (λ, 0)` and `U ⊕ I`.
    pub fn extend(&self, big_n: usize) -> Result<BallAutomorphism> {
        self.extend_with(big_n, &eye(big_n.saturating_sub(self.n())))
    }

    /// Extension with an explicit unitary on the new coordinates.
    pub fn extend_with(&self, big_n: usize, tail: &CMat) -> Result<BallAutomorphism> {
        let n = self.n();
        if big_n <= n || tail.nrows() != big_n - n {
            return Err(Error::ShapeMismatch(format!("cannot extend from {n} to {big_n} variables")));
        }
        let mut lambda = self.lambda.clone();
        lambda.resize(big_n, C64::new(0.0, 0.0));
        let mut u = zeros(big_n, big_n);
        u.view_mut((0, 0), (n, n)).copy_from(&self.u);
        u.view_mut((n, n), (big_n - n, big_n - n)).copy_from(tail);
        Self::new(lambda, u)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "n": self.n(),
            "lambda": self.lambda.iter().map(|z| json!([z.re, z.im])).collect::<Vec<_>>(),
            "U": matrix_to_value(&self.u),
        })
    }

    pub fn from_json(v: &Value, field: &str) -> Result<Self> {
        let n = v.get("n").and_then(Value::as_u64).ok_or_else(|| Error::parse(format!("{field}.n"), "expected a positive integer"))? as usize;
        let arr = v.get("lambda").and_then(Value::as_array).ok_or_else(|| Error::parse(format!("{field}.lambda"), "expected [[re, im], ...]"))?;
        if arr.len() != n {
            return Err(Error::parse(format!("{field}.lambda"), format!("expected {n} entries")));
        }
        let lambda = arr
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let pair = p.as_array().filter(|a| a.len() == 2);
                match pair.map(|a| (a[0].as_f64(), a[1].as_f64())) {
                    Some((Some(re), Some(im))) => Ok(C64::new(re, im)),
                    _ => Err(Error::parse(format!("{field}.lambda[{i}]"), "expected [re, im]")),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let u = matrix_from_value(v.get("U").unwrap_or(&Value::Null), &format!("{field}.U"))?;
        Self::new(lambda, u).map_err(|e| {
            let part = match e {
                Error::DomainViolation(_) => format!("{field}.lambda"),
                Error::ContractViolation(_) | Error::ShapeMismatch(_) => format!("{field}.U"),
                _ => field.to_string(),
            };
            Error::parse(part, e.to_string())
        })
    }
}

impl FreeMap for BallAutomorphism {
    fn n_vars(&self) -> usize {
        self.n()
    }

    fn n_outputs(&self) -> usize {
        self.n()
    }

    fn block_shape(&self) -> (usize, usize) {
        (1, 1)
    }

    fn domain_radius(&self) -> f64 {
        let l = self.lambda_norm();
        if l == 0.0 {
            f64::INFINITY
        } else {
            1.0 / l
        }
    }

    fn apply_tuple(&self, x: &[CMat]) -> Result<Vec<CMat>> {
        self.apply(x)
    }
}

type TupleFn = dyn Fn(&[CMat]) -> Result<Vec<CMat>>;

/// A scalar-block free map given by a closure on matrix tuples.
pub struct ClosureMap {
    n: usize,
    outputs: usize,
    radius: f64,
    f: Box<TupleFn>,
}

impl ClosureMap {
    pub fn new(n: usize, outputs: usize, radius: f64, f: impl Fn(&[CMat]) -> Result<Vec<CMat>> + 'static) -> Self {
        ClosureMap { n, outputs, radius, f: Box::new(f) }
    }
}

impl FreeMap for ClosureMap {
    fn n_vars(&self) -> usize {
        self.n
    }

    fn n_outputs(&self) -> usize {
        self.outputs
    }

    fn block_shape(&self) -> (usize, usize) {
        (1, 1)
    }

    fn domain_radius(&self) -> f64 {
        self.radius
    }

    fn apply_tuple(&self, x: &[CMat]) -> Result<Vec<CMat>> {
        (self.f)(x)
    }
}

/// Normal form `(λ, U)` of an automorphism given as a black box:
/// `b = Ψ(0) = λU` by scalar evaluation, the degree-1 coefficients
/// `M = −Δ_b U Δ_{b*}` from the depth-1 boundary compression, then
/// `U = −M Δ_{b*}^{-1} / Δ_b` and `λ = b U*`.
pub fn recover_normal_form(f: &dyn FreeMap) -> Result<BallAutomorphism> {
    let n = f.n_vars();
    if f.n_outputs() != n || f.block_shape() != (1, 1) {
        return Err(Error::ShapeMismatch("automorphisms map n scalar variables to n scalar outputs".into()));
    }
    let at_zero = f.apply_tuple(&vec![zeros(1, 1); n])?;
    let b: Vec<C64> = at_zero.iter().map(|m| m[(0, 0)]).collect();
    let nb = lambda_norm(&b);
    if nb >= 1.0 {
        return Err(Error::DomainViolation(format!("Ψ(0) has norm {nb}")));
    }
    let r = 0.5;
    let fock = TruncatedFock::new(n, 1);
    let s: Vec<CMat> = fock.creation_operators(Side::Left).into_iter().map(|m| m * C64::new(r, 0.0)).collect();
    let outs = f.apply_tuple(&s)?;
    let m = CMat::from_fn(n, n, |i, j| outs[j][(1 + i, 0)] / r);
    let db = (1.0 - nb * nb).sqrt();
    let dbs = delta_star_of(&b)?;
    let raw = -(m * crate::linalg::inverse(&dbs)?) / C64::new(db, 0.0);
    let defect = unitarity_defect(&raw);
    if defect > 1e-6 {
        return Err(Error::ContractViolation(format!("degree-1 part is not unitary (defect {defect:.3e})")));
    }
    let u = polar_unitary(&raw);
    let bmat = CMat::from_fn(1, n, |_, j| b[j]);
    let lam = bmat * u.adjoint();
    BallAutomorphism::new(lam.iter().copied().collect(), u)
}

/// The classical automorphism
/// `φ_a(z) = (a − Q_a z − s_a (I − Q_a) z) / (1 − ⟨z, a⟩)` of `B_n`.
pub fn scalar_mobius(a: &[C64], z: &[C64]) -> Result<Vec<C64>> {
    if a.len() != z.len() {
        return Err(Error::ShapeMismatch("points of different dimension".into()));
    }
    let (na, nz) = (lambda_norm(a), lambda_norm(z));
    if na >= 1.0 || nz >= 1.0 {
        return Err(Error::DomainViolation("points must lie in the open unit ball".into()));
    }
    let za: C64 = z.iter().zip(a).map(|(zi, ai)| zi * ai.conj()).sum();
    let aa = na * na;
    let sa = (1.0 - aa).sqrt();
    Ok(a.iter()
        .zip(z)
        .map(|(&ai, &zi)| {
            let q = if aa == 0.0 { C64::new(0.0, 0.0) } else { za / aa * ai };
            (ai - q - (zi - q) * sa) / (C64::new(1.0, 0.0) - za)
        })
        .collect())
}

/// Gleason factorization `F − F(a) = Σ_i Ψ_a(X)_i (H_i ∘ Ψ_a)(X)`, where
/// `H_i` is the `i`-th left quotient of `F ∘ Ψ_a`. The residual is
/// measured at random `X` with row norm up to `x_norm`, evaluating
/// `H_i` at `Ψ_a(X)`.
pub struct Gleason {
    pub h: Vec<FreeSeries>,
    pub residual: f64,
}

pub fn gleason_factorization(f: &FreeSeries, a: &[C64], depth: usize, x_norm: f64, samples: usize, seed: u64) -> Result<Gleason> {
    let n = f.n();
    if f.block_shape() != (1, 1) || a.len() != n {
        return Err(Error::ShapeMismatch("Gleason factorization needs a scalar series and a point of B_n".into()));
    }
    let psi_a = BallAutomorphism::psi(a.to_vec())?;
    let inner = psi_a.series(depth);
    let opts = ComposeOptions { r_eval: 0.9, depth: Some(depth) };
    let g = crate::freeseries::compose(f, &inner, &opts)?;
    let fa = f.eval_scalar(a)?[(0, 0)];
    let h: Vec<FreeSeries> = (0..n).map(|i| g.left_quotient(i)).collect();
    let mut rng = rng_from_seed(seed);
    let mut residual = 0.0_f64;
    for _ in 0..samples {
        let rad = x_norm * rng.random::<f64>();
        let x = random_tuple_with_norm(n, 3, rad, &mut rng);
        let y = psi_a.apply(&x)?;
        let mut rebuilt = eye(3) * fa;
        for i in 0..n {
            rebuilt += &y[i] * h[i].eval_value(&y)?;
        }
        residual = residual.max(operator_norm(&(f.eval_value(&x)? - rebuilt)));
    }
    Ok(Gleason { h, residual })
}

fn eval_tuple(f: &[FreeSeries], x: &[CMat]) -> Result<Vec<CMat>> {
    f.iter().map(|fi| fi.eval_value(x)).collect()
}

/// `‖Ψ_b(F(X))‖ − ‖Ψ_a(X)‖` with `b = F(a)`.
pub fn schwarz_pick_defect(f: &[FreeSeries], a: &[C64], x: &[CMat]) -> Result<f64> {
    let b: Vec<C64> = f.iter().map(|fi| fi.eval_scalar(a).map(|m| m[(0, 0)])).collect::<Result<_>>()?;
    if lambda_norm(&b) >= 1.0 {
        return Err(Error::DomainViolation(format!("F(a) has norm {}", lambda_norm(&b))));
    }
    let psi_b = BallAutomorphism::psi(b)?;
    let psi_a = BallAutomorphism::psi(a.to_vec())?;
    let lhs = row_norm(&psi_b.apply(&eval_tuple(f, x)?)?);
    let rhs = row_norm(&psi_a.apply(x)?);
    Ok(lhs - rhs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Rigidity {
    /// `F'(0)` unitary and `F(X) = X F'(0)^t`.
    UnitaryLinear,
    /// `F'(0)` isometric and `Φ_L ∘ F = id` for `L = (F'(0)*)^t`.
    IsometryLeftInvertible,
    None,
}

pub fn rigidity_check(f: &[FreeSeries], tol: f64) -> Result<Rigidity> {
    let n = f[0].n();
    let j = jacobian_at_zero(f);
    let iso = operator_norm(&(j.adjoint() * &j - eye(n)));
    if iso > tol {
        return Ok(Rigidity::None);
    }
    if f.len() == n {
        for (k, fk) in f.iter().enumerate() {
            for (w, c) in fk.terms() {
                if w.len() != 1 && operator_norm(&c) > 10.0 * tol {
                    return Err(Error::ContractViolation(format!(
                        "component {} has coefficient {:.3e} at word {:?} despite a unitary derivative",
                        k + 1,
                        operator_norm(&c),
                        w.iter().map(|i| i + 1).collect::<Vec<_>>()
                    )));
                }
            }
        }
        return Ok(Rigidity::UnitaryLinear);
    }
    // Φ_L ∘ F with L = conj(F'(0)): component k is Σ_i conj(J_ik) F_i
    let id = FreeSeries::identity_tuple(n, f[0].max_deg());
    for k in 0..n {
        let mut comp = FreeSeries::zero(n, f[0].max_deg(), 1, 1);
        for (i, fi) in f.iter().enumerate() {
            comp = comp.add(&fi.scale(j[(i, k)].conj()))?;
        }
        let err = comp.max_coeff_diff(&id[k]);
        if err > 10.0 * tol {
            return Err(Error::ContractViolation(format!("left inverse fails on component {} by {err:.3e}", k + 1)));
        }
    }
    Ok(Rigidity::IsometryLeftInvertible)
}

pub struct MaxPrinciple {
    pub interior_max: f64,
    pub sup_estimate: f64,
}

pub fn max_principle_probe(f: &FreeSeries, samples: usize, seed: u64) -> Result<MaxPrinciple> {
    let n = f.n();
    let mut rng = rng_from_seed(seed);
    let mut interior_max = 0.0_f64;
    for _ in 0..samples {
        let rad = 0.95 * rng.random::<f64>();
        let x = random_tuple_with_norm(n, 3, rad, &mut rng);
        interior_max = interior_max.max(operator_norm(&f.eval_value(&x)?));
    }
    let sup_estimate = sup_norm_estimate(std::slice::from_ref(f), &[0.5, 0.9, 0.99, 0.999], default_depth(n).min(f.max_deg().max(1)));
    Ok(MaxPrinciple { interior_max, sup_estimate })
}

/// Largest eigenvalue of `Σ_{α≠∅} A_α* A_α − (I − A_∅* A_∅)`; nonpositive
/// for every series bounded by one.
pub fn coefficient_bound_excess(f: &FreeSeries) -> f64 {
    let q = f.block_shape().1;
    let a0 = f.coeff(&[]);
    let mut g = a0.adjoint() * &a0 - eye(q);
    for (w, c) in f.terms() {
        if !w.is_empty() {
            g += c.adjoint() * &c;
        }
    }
    hermitian_eigenvalues(&g).into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// `f ∘ Ψ` as a series, composing through the closed form of `Ψ`.
pub fn precompose(f: &FreeSeries, psi: &BallAutomorphism, depth: usize) -> Result<FreeSeries> {
    let inner = psi.series(depth);
    crate::freeseries::compose(f, &inner, &ComposeOptions { r_eval: 0.9, depth: Some(depth) })
}

/// Series of `Ψ ∘ φ` for a closed-form automorphism and a series tuple.
pub fn postcompose(psi: &BallAutomorphism, phi: &[FreeSeries], opts: &ComposeOptions) -> Result<Vec<FreeSeries>> {
    compose_map(psi, phi, opts)
}
