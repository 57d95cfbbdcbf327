//! Row contractions and their model theory: defects, purity, the c.n.c.
//! part, the minimal isometric dilation and the Wold decomposition.

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::fock::{Side, TruncatedFock};
use crate::linalg::{
    eye, hermitian_eigen, hermitize, matrix_from_value, matrix_to_value, operator_norm, orth_complement, psd_sqrt,
    range_basis, rank_tol, row_gram, row_matrix, row_norm, singular_values, word_product, zeros, CMat, C64,
    CLAMP_TOL, RANK_TOL,
};

/// Slack allowed above row norm 1.
pub const ROW_NORM_SLACK: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq)]
pub struct RowContraction {
    t: Vec<CMat>,
}

#[derive(Clone, Debug)]
pub struct DefectPair {
    pub delta_t: CMat,
    pub delta_t_star: CMat,
    pub rank_t: usize,
    pub rank_t_star: usize,
}

/// Minimal isometric dilation on `K ⊕ (F²_N ⊗ D_{T*})`. The first `d`
/// coordinates are `K`; Fock index `γ` and defect coordinate `k` sit at
/// `d + γ s + k`.
#[derive(Clone, Debug)]
pub struct Dilation {
    pub v: Vec<CMat>,
    pub embed: CMat,
    pub safe_degree: usize,
    pub defect_dim: usize,
    d: usize,
    fock: TruncatedFock,
}

#[derive(Clone, Debug)]
pub struct WoldParts {
    pub wandering: CMat,
    pub pure: CMat,
    pub residual: CMat,
    pub multiplicity: usize,
}

impl RowContraction {
    pub fn new(t: Vec<CMat>) -> Result<Self> {
        let rc = Self::unchecked(t)?;
        let norm = rc.row_norm();
        if norm > 1.0 + ROW_NORM_SLACK {
            return Err(Error::ContractViolation(format!("row norm {norm:.12} exceeds 1")));
        }
        Ok(rc)
    }

    /// Shape checks only; for tuples whose contractivity is known by
    /// construction or irrelevant.
    pub fn unchecked(t: Vec<CMat>) -> Result<Self> {
        let d = t.first().ok_or_else(|| Error::ShapeMismatch("empty tuple".into()))?.nrows();
        if d == 0 || t.iter().any(|m| m.nrows() != d || m.ncols() != d) {
            return Err(Error::ShapeMismatch("tuple entries must be equal nonempty square matrices".into()));
        }
        Ok(RowContraction { t })
    }

    pub fn n(&self) -> usize {
        self.t.len()
    }

    pub fn d(&self) -> usize {
        self.t[0].nrows()
    }

    pub fn entries(&self) -> &[CMat] {
        &self.t
    }

    pub fn into_entries(self) -> Vec<CMat> {
        self.t
    }

    pub fn row(&self) -> CMat {
        row_matrix(&self.t)
    }

    pub fn row_norm(&self) -> f64 {
        row_norm(&self.t)
    }

    pub fn word(&self, w: &[usize]) -> CMat {
        word_product(&self.t, w)
    }

    /// `Φ_T(Y) = Σ T_i Y T_i*`.
    pub fn phi(&self, y: &CMat) -> CMat {
        self.t.iter().fold(zeros(self.d(), self.d()), |acc, ti| acc + ti * y * ti.adjoint())
    }

    pub fn defects(&self) -> Result<DefectPair> {
        let d = self.d();
        let delta_t = psd_sqrt(&hermitize(&(eye(d) - row_gram(&self.t))), CLAMP_TOL)?;
        let row = self.row();
        let delta_t_star = psd_sqrt(&hermitize(&(eye(d * self.n()) - row.adjoint() * &row)), CLAMP_TOL)?;
        Ok(DefectPair {
            rank_t: rank_tol(&delta_t, RANK_TOL),
            rank_t_star: rank_tol(&delta_t_star, RANK_TOL),
            delta_t,
            delta_t_star,
        })
    }

    /// `‖Φ^k(I)‖` for `k = 1..=k_max`.
    pub fn purity_profile(&self, k_max: usize) -> Vec<f64> {
        let mut q = eye(self.d());
        (0..k_max)
            .map(|_| {
                q = hermitize(&self.phi(&q));
                operator_norm(&q)
            })
            .collect()
    }

    /// Orthonormal basis of `N_T`, the eigenvalue-1 eigenspace of
    /// `lim Φ^k(I)`; empty exactly when `T` is c.n.c.
    pub fn cnc_subspace(&self, tol: f64, max_iter: usize) -> Result<CMat> {
        let mut q = eye(self.d());
        let mut delta = f64::INFINITY;
        for _ in 0..max_iter {
            let next = hermitize(&self.phi(&q));
            delta = operator_norm(&(&next - &q));
            q = next;
            if delta < tol {
                let (vals, vecs) = hermitian_eigen(&q);
                let keep: Vec<usize> = (0..vals.len()).filter(|&i| (vals[i] - 1.0).abs() <= tol.max(1e-9)).collect();
                let mut basis = zeros(self.d(), keep.len());
                for (c, &i) in keep.iter().enumerate() {
                    basis.set_column(c, &vecs.column(i));
                }
                return Ok(basis);
            }
        }
        Err(Error::NoConvergence { iters: max_iter, delta })
    }

    pub fn minimal_isometric_dilation(&self, depth: usize) -> Result<Dilation> {
        let (n, d) = (self.n(), self.d());
        let defects = self.defects()?;
        let q = range_basis(&defects.delta_t_star, RANK_TOL);
        let s = q.ncols();
        let fock = TruncatedFock::new(n, depth);
        let total = d + fock.dim() * s;
        let shifts = fock.creation_operators(Side::Left);
        let v = (0..n)
            .map(|i| {
                let mut vi = zeros(total, total);
                vi.view_mut((0, 0), (d, d)).copy_from(&self.t[i]);
                if s > 0 {
                    // vacuum ⊗ (coordinates of Δ_{T*} ι_i h in D_{T*})
                    let top = q.adjoint() * defects.delta_t_star.columns(i * d, d);
                    vi.view_mut((d, 0), (s, d)).copy_from(&top);
                    vi.view_mut((d, d), (fock.dim() * s, fock.dim() * s)).copy_from(&crate::linalg::kron(&shifts[i], &eye(s)));
                }
                vi
            })
            .collect();
        let mut embed = zeros(total, d);
        embed.view_mut((0, 0), (d, d)).copy_from(&eye(d));
        Ok(Dilation { v, embed, safe_degree: depth, defect_dim: s, d, fock })
    }

    pub fn to_json(&self) -> Value {
        json!({"n": self.n(), "d": self.d(), "entries": self.t.iter().map(matrix_to_value).collect::<Vec<_>>()})
    }

    /// Parses and validates (shape and row norm).
    pub fn from_json(v: &Value, field: &str) -> Result<Self> {
        let t = tuple_from_json(v, field)?;
        Self::new(t).map_err(|e| Error::parse(field, e.to_string()))
    }
}

/// `{"n","d","entries"}` without the contractivity check.
pub fn tuple_from_json(v: &Value, field: &str) -> Result<Vec<CMat>> {
    let n = v.get("n").and_then(Value::as_u64).ok_or_else(|| Error::parse(format!("{field}.n"), "expected a positive integer"))? as usize;
    let d = v.get("d").and_then(Value::as_u64).ok_or_else(|| Error::parse(format!("{field}.d"), "expected a positive integer"))? as usize;
    let entries = v
        .get("entries")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::parse(format!("{field}.entries"), "expected an array of matrices"))?;
    if n == 0 || entries.len() != n {
        return Err(Error::parse(format!("{field}.entries"), format!("expected {n} matrices")));
    }
    entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let f = format!("{field}.entries[{i}]");
            let m = matrix_from_value(e, &f)?;
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::parse(f, format!("expected a {d}x{d} matrix")));
            }
            Ok(m)
        })
        .collect()
}

impl Dilation {
    pub fn dim(&self) -> usize {
        self.v[0].nrows()
    }

    /// Orthonormal basis of `K ⊕ (F²_{≤N-1} ⊗ D_{T*})`, where the `V_i`
    /// act as exact isometries with orthogonal ranges.
    pub fn safe_basis(&self) -> CMat {
        let keep = self.d + self.fock.dim_upto(self.safe_degree.saturating_sub(1)) * self.defect_dim;
        let mut b = zeros(self.dim(), keep);
        b.view_mut((0, 0), (keep, keep)).copy_from(&eye(keep));
        b
    }

    /// `P_K V_α |_K`.
    pub fn compression(&self, w: &[usize]) -> CMat {
        self.embed.adjoint() * word_product(&self.v, w) * &self.embed
    }

    /// `max_{i,j} ‖P (V_i* V_j − δ_ij I) P‖` on the safe subspace.
    pub fn isometry_defect(&self) -> f64 {
        isometry_defect_on(&self.v, &self.safe_basis())
    }

    /// Rank of `span{V_α K : |α| ≤ N}` against the safe dimension.
    pub fn minimality(&self) -> (usize, usize) {
        let mut blocks = vec![self.embed.clone()];
        let mut frontier = vec![self.embed.clone()];
        for _ in 0..self.safe_degree {
            frontier = frontier.iter().flat_map(|b| self.v.iter().map(move |vi| vi * b)).collect();
            blocks.extend(frontier.iter().cloned());
        }
        let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
        let mut span = zeros(self.dim(), cols);
        let mut c = 0;
        for b in &blocks {
            span.columns_mut(c, b.ncols()).copy_from(b);
            c += b.ncols();
        }
        (rank_tol(&span, RANK_TOL), self.safe_basis().ncols())
    }

    pub fn to_json(&self) -> Value {
        json!({
            "n": self.v.len(),
            "d": self.dim(),
            "entries": self.v.iter().map(matrix_to_value).collect::<Vec<_>>(),
            "embed": matrix_to_value(&self.embed),
            "safeDegree": self.safe_degree,
            "defectDim": self.defect_dim,
        })
    }
}

pub fn isometry_defect_on(v: &[CMat], basis: &CMat) -> f64 {
    let mut worst = 0.0_f64;
    for (i, vi) in v.iter().enumerate() {
        for (j, vj) in v.iter().enumerate() {
            let mut g = basis.adjoint() * vi.adjoint() * vj * basis;
            if i == j {
                g -= eye(basis.ncols());
            }
            worst = worst.max(operator_norm(&g));
        }
    }
    worst
}

/// Wold decomposition of a row isometry, checked on `safe` (orthonormal
/// columns; the whole space when `None`).
pub fn wold_decomposition(v: &[CMat], safe: Option<&CMat>, tol: f64) -> Result<WoldParts> {
    let dim = v.first().ok_or_else(|| Error::ShapeMismatch("empty tuple".into()))?.nrows();
    let full = eye(dim);
    let defect = isometry_defect_on(v, safe.unwrap_or(&full));
    if defect > tol {
        return Err(Error::NotRowIsometry { defect });
    }
    let wandering = numerical_range(&(eye(dim) - row_gram(v)), tol);
    let mut pure = wandering.clone();
    while pure.ncols() > 0 {
        let mut stacked = zeros(dim, pure.ncols() * (v.len() + 1));
        stacked.columns_mut(0, pure.ncols()).copy_from(&pure);
        for (i, vi) in v.iter().enumerate() {
            stacked.columns_mut((i + 1) * pure.ncols(), pure.ncols()).copy_from(&(vi * &pure));
        }
        let next = range_basis(&stacked, RANK_TOL);
        if next.ncols() == pure.ncols() {
            break;
        }
        pure = next;
    }
    let residual = orth_complement(&pure, dim);
    Ok(WoldParts { multiplicity: wandering.ncols(), wandering, pure, residual })
}

/// Range basis with singular values above both `τ σ_max` and `tol`.
fn numerical_range(m: &CMat, tol: f64) -> CMat {
    let top = singular_values(m).first().copied().unwrap_or(0.0);
    if top <= tol {
        return zeros(m.nrows(), 0);
    }
    range_basis(m, RANK_TOL.max(tol / top))
}

/// Tuple of scalars `λ` viewed as a row contraction on `C`.
pub fn scalar_tuple(lambda: &[C64]) -> Vec<CMat> {
    lambda.iter().map(|&z| CMat::from_element(1, 1, z)).collect()
}
