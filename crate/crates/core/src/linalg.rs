//! Dense complex linear algebra: Hermitian square roots, norms, ranks,
//! guarded solves, and seeded random generators.
//!
//! Tuples of operators are kept as `Vec<CMat>`; the row operator
//! `[T_1 ... T_n]` is assembled on demand with [`row_matrix`], and the
//! space `K^(n)` uses the index `j*d + k`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub const CLAMP_TOL: f64 = 1e-12;
pub const RANK_TOL: f64 = 1e-8;
pub const MAX_COND: f64 = 1e12;

pub fn cx(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn eye(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn zeros(r: usize, c: usize) -> CMat {
    CMat::zeros(r, c)
}

pub fn scalar(z: C64) -> CMat {
    CMat::from_element(1, 1, z)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn frobenius(m: &CMat) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Largest singular value. Strongly rectangular inputs go through the Gram
/// matrix of the short side, which keeps the top singular value accurate.
pub fn operator_norm(m: &CMat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let (r, c) = (m.nrows(), m.ncols());
    if r >= 4 * c || c >= 4 * r {
        let g = if r >= c { m.adjoint() * m } else { m * m.adjoint() };
        let top = hermitian_eigenvalues(&g).into_iter().fold(0.0_f64, f64::max);
        return top.max(0.0).sqrt();
    }
    m.singular_values().iter().fold(0.0_f64, |a, &s| a.max(s))
}

pub fn singular_values(m: &CMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}

/// Number of singular values above `tau * sigma_max`.
pub fn rank_tol(m: &CMat, tau: f64) -> usize {
    let s = singular_values(m);
    match s.first() {
        None => 0,
        Some(&top) if top == 0.0 => 0,
        Some(&top) => s.iter().filter(|&&x| x > tau * top).count(),
    }
}

pub fn hermitian_eigenvalues(h: &CMat) -> Vec<f64> {
    let sym = hermitize(h);
    sym.symmetric_eigenvalues().iter().copied().collect()
}

/// Eigenpairs of a Hermitian matrix, eigenvalues ascending.
pub fn hermitian_eigen(h: &CMat) -> (Vec<f64>, CMat) {
    let eig = hermitize(h).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
    let mut vecs = zeros(h.nrows(), order.len());
    for (c, &i) in order.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (order.iter().map(|&i| eig.eigenvalues[i]).collect(), vecs)
}

pub fn hermitize(m: &CMat) -> CMat {
    (m + m.adjoint()).scale(0.5)
}

/// PSD square root by Hermitian eigendecomposition with eigenvalue clamping.
pub fn psd_sqrt(m: &CMat, clamp_tol: f64) -> Result<CMat> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch(format!("psd_sqrt of {}x{}", m.nrows(), m.ncols())));
    }
    let asym = frobenius(&(m - m.adjoint()));
    if asym > clamp_tol {
        return Err(Error::NotHermitian { asym });
    }
    let eig = hermitize(m).symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -clamp_tol {
        return Err(Error::NegativeSpectrum { min });
    }
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, &e) in eig.eigenvalues.iter().enumerate() {
        let s = if e < clamp_tol { 0.0 } else { e.sqrt() };
        scaled.column_mut(j).scale_mut(s);
    }
    Ok(hermitize(&(scaled * v.adjoint())))
}

/// Orthonormal basis (columns) of the range, keeping singular values above
/// `tau * sigma_max`.
pub fn range_basis(m: &CMat, tau: f64) -> CMat {
    let r = m.nrows();
    if m.ncols() == 0 || r == 0 {
        return zeros(r, 0);
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("u requested");
    let top = svd.singular_values.iter().copied().fold(0.0_f64, f64::max);
    if top == 0.0 {
        return zeros(r, 0);
    }
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > tau * top)
        .collect();
    let mut q = zeros(r, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        q.set_column(c, &u.column(i));
    }
    q
}

/// Orthonormal basis of the orthogonal complement of the span of `basis`
/// (assumed orthonormal) inside C^dim.
pub fn orth_complement(basis: &CMat, dim: usize) -> CMat {
    if basis.ncols() == 0 {
        return eye(dim);
    }
    // projection eigenvalues are 0 or 1, so an absolute cut is safe
    let p = eye(dim) - basis * basis.adjoint();
    let top = singular_values(&p).first().copied().unwrap_or(0.0);
    if top < 0.5 {
        return zeros(dim, 0);
    }
    range_basis(&p, 0.5 / top)
}

/// Moore-Penrose inverse of a Hermitian PSD matrix on its numerical range.
pub fn psd_pinv(m: &CMat, tau: f64) -> CMat {
    let eig = hermitize(m).symmetric_eigen();
    let top = eig.eigenvalues.iter().copied().fold(0.0_f64, |a, e| a.max(e.abs()));
    let v = &eig.eigenvectors;
    let mut scaled = v.clone();
    for (j, &e) in eig.eigenvalues.iter().enumerate() {
        let s = if top > 0.0 && e > tau * top { 1.0 / e } else { 0.0 };
        scaled.column_mut(j).scale_mut(s);
    }
    scaled * v.adjoint()
}

fn norm1(m: &CMat) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// LU inverse guarded by a 1-norm condition estimate.
pub fn inverse(a: &CMat) -> Result<CMat> {
    if !a.is_square() {
        return Err(Error::ShapeMismatch(format!("inverse of {}x{}", a.nrows(), a.ncols())));
    }
    let inv = a.clone().lu().try_inverse().ok_or(Error::IllConditioned { cond: f64::INFINITY })?;
    let cond = norm1(a) * norm1(&inv);
    if !cond.is_finite() || cond > MAX_COND {
        return Err(Error::IllConditioned { cond });
    }
    Ok(inv)
}

/// Solve `a x = b` by LU with partial pivoting.
pub fn solve(a: &CMat, b: &CMat) -> Result<CMat> {
    if a.nrows() != b.nrows() {
        return Err(Error::ShapeMismatch(format!("solve {}x{} with rhs {} rows", a.nrows(), a.ncols(), b.nrows())));
    }
    Ok(inverse(a)? * b)
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// `[T_1 ... T_n]` as a `d x nd` matrix.
pub fn row_matrix(t: &[CMat]) -> CMat {
    let d = t.first().map_or(0, |m| m.nrows());
    let mut out = zeros(d, d * t.len());
    for (j, tj) in t.iter().enumerate() {
        out.view_mut((0, j * tj.ncols()), (tj.nrows(), tj.ncols())).copy_from(tj);
    }
    out
}

/// Splits a `d x nd` row operator into its n blocks.
pub fn tuple_from_row(m: &CMat, n: usize) -> Vec<CMat> {
    let w = m.ncols() / n;
    (0..n).map(|j| m.columns(j * w, w).into_owned()).collect()
}

/// `Σ T_i T_i*`.
pub fn row_gram(t: &[CMat]) -> CMat {
    let d = t.first().map_or(0, |m| m.nrows());
    t.iter().fold(zeros(d, d), |acc, ti| acc + ti * ti.adjoint())
}

pub fn row_norm(t: &[CMat]) -> f64 {
    let g = row_gram(t);
    hermitian_eigenvalues(&g).into_iter().fold(0.0_f64, f64::max).max(0.0).sqrt()
}

/// `X_α = X_{i1} ... X_{ik}` for a word of 0-based letters.
pub fn word_product(x: &[CMat], word: &[usize]) -> CMat {
    let d = x[0].nrows();
    word.iter().fold(eye(d), |acc, &i| acc * &x[i])
}

pub fn tuple_diff(a: &[CMat], b: &[CMat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| operator_norm(&(x - y))).fold(0.0, f64::max)
}

pub fn unitarity_defect(u: &CMat) -> f64 {
    operator_norm(&(u.adjoint() * u - eye(u.ncols())))
}

pub fn complex_gaussian<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> CMat {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        cx(re * s, im * s)
    })
}

/// Haar unitary from QR of a complex Gaussian matrix, with the phases of
/// diag(R) moved into Q.
pub fn haar_unitary<R: Rng>(k: usize, rng: &mut R) -> CMat {
    let g = complex_gaussian(k, k, rng);
    let qr = g.qr();
    let (mut q, r) = (qr.q(), qr.r());
    for j in 0..k {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { cx(1.0, 0.0) };
        for i in 0..k {
            q[(i, j)] *= ph;
        }
    }
    q
}

/// Uniform point on the unit sphere of C^n.
pub fn sphere_point<R: Rng>(n: usize, rng: &mut R) -> Vec<C64> {
    loop {
        let g = complex_gaussian(n, 1, rng);
        let nrm = frobenius(&g);
        if nrm > 1e-300 {
            return g.iter().map(|z| z / nrm).collect();
        }
    }
}

/// Random point of the open ball with Euclidean norm drawn uniformly from
/// `[lo, hi]`.
pub fn ball_point<R: Rng>(n: usize, lo: f64, hi: f64, rng: &mut R) -> Vec<C64> {
    let rad = lo + (hi - lo) * rng.random::<f64>();
    sphere_point(n, rng).into_iter().map(|z| z * rad).collect()
}

pub fn random_tuple_with_norm<R: Rng>(n: usize, d: usize, target: f64, rng: &mut R) -> Vec<CMat> {
    let t: Vec<CMat> = (0..n).map(|_| complex_gaussian(d, d, rng)).collect();
    let s = row_norm(&t);
    if s == 0.0 || target == 0.0 {
        return vec![zeros(d, d); n];
    }
    t.into_iter().map(|m| m.scale(target / s)).collect()
}

/// Seeded row contraction with row norm exactly `target_norm`.
pub fn random_row_contraction(n: usize, d: usize, target_norm: f64, seed: u64) -> Vec<CMat> {
    let mut rng = rng_from_seed(seed);
    random_tuple_with_norm(n, d, target_norm, &mut rng)
}

pub fn random_hermitian_psd<R: Rng>(d: usize, rank: usize, rng: &mut R) -> CMat {
    let a = complex_gaussian(d, rank, rng);
    hermitize(&(&a * a.adjoint()))
}

/// Row-major JSON matrix `{"rows","cols","re","im"}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl MatrixJson {
    pub fn from_matrix(m: &CMat) -> Self {
        let mut re = Vec::with_capacity(m.len());
        let mut im = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                re.push(m[(i, j)].re);
                im.push(m[(i, j)].im);
            }
        }
        MatrixJson { rows: m.nrows(), cols: m.ncols(), re, im }
    }

    pub fn to_matrix(&self, field: &str) -> Result<CMat> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::parse(field, "rows and cols must be at least 1"));
        }
        let len = self.rows * self.cols;
        if self.re.len() != len {
            return Err(Error::parse(format!("{field}.re"), format!("expected {len} entries, got {}", self.re.len())));
        }
        if self.im.len() != len {
            return Err(Error::parse(format!("{field}.im"), format!("expected {len} entries, got {}", self.im.len())));
        }
        if self.re.iter().chain(&self.im).any(|x| !x.is_finite()) {
            return Err(Error::parse(field, "entries must be finite"));
        }
        Ok(CMat::from_fn(self.rows, self.cols, |i, j| cx(self.re[i * self.cols + j], self.im[i * self.cols + j])))
    }
}

pub fn matrix_to_value(m: &CMat) -> serde_json::Value {
    serde_json::to_value(MatrixJson::from_matrix(m)).expect("matrix serializes")
}

pub fn matrix_from_value(v: &serde_json::Value, field: &str) -> Result<CMat> {
    let mj: MatrixJson = serde_json::from_value(v.clone()).map_err(|e| Error::parse(field, e.to_string()))?;
    mj.to_matrix(field)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> CMat {
        CMat::from_fn(v.len(), v.len(), |i, j| if i == j { cx(v[i], 0.0) } else { cx(0.0, 0.0) })
    }

    #[test]
    fn sqrt_examples() {
        assert!(operator_norm(&(psd_sqrt(&eye(2), CLAMP_TOL).unwrap() - eye(2))) < 1e-14);
        let r = psd_sqrt(&diag(&[4.0, 0.0]), CLAMP_TOL).unwrap();
        assert!(operator_norm(&(r - diag(&[2.0, 0.0]))) < 1e-14);
        let r = psd_sqrt(&diag(&[1.0 - 0.36]), CLAMP_TOL).unwrap();
        assert!((r[(0, 0)].re - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sqrt_errors() {
        let mut m = eye(2);
        m[(0, 1)] = cx(1e-6, 0.0);
        assert!(matches!(psd_sqrt(&m, CLAMP_TOL), Err(Error::NotHermitian { .. })));
        assert!(matches!(psd_sqrt(&diag(&[1.0, -1e-6]), CLAMP_TOL), Err(Error::NegativeSpectrum { .. })));
        // tiny negative roundoff is clamped
        assert!(psd_sqrt(&diag(&[1.0, -1e-14]), CLAMP_TOL).is_ok());
    }

    #[test]
    fn norm_examples() {
        assert_eq!(operator_norm(&zeros(3, 3)), 0.0);
        let mut rng = rng_from_seed(3);
        let u = haar_unitary(5, &mut rng);
        assert!((operator_norm(&u) - 1.0).abs() < 1e-13);
        assert!(unitarity_defect(&u) < 1e-13);
        let mut m = zeros(2, 2);
        m[(0, 1)] = cx(2.0, 0.0);
        assert!((operator_norm(&m) - 2.0).abs() < 1e-14);
        // tall path agrees with the SVD path
        let a = complex_gaussian(40, 3, &mut rng);
        let s = a.singular_values().iter().copied().fold(0.0, f64::max);
        assert!((operator_norm(&a) - s).abs() < 1e-12 * s);
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_tol(&eye(3), 1e-8), 3);
        assert_eq!(rank_tol(&zeros(3, 3), 1e-8), 0);
    }

    #[test]
    fn row_contraction_generator() {
        assert!(random_row_contraction(1, 1, 0.0, 1)[0][(0, 0)] == cx(0.0, 0.0));
        let a = random_row_contraction(2, 4, 0.9, 11);
        let b = random_row_contraction(2, 4, 0.9, 11);
        assert_eq!(a, b);
        assert!((row_norm(&a) - 0.9).abs() < 1e-12);
        assert!((operator_norm(&row_matrix(&a)) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn ill_conditioned_solve() {
        let m = diag(&[1.0, 1e-14]);
        assert!(matches!(inverse(&m), Err(Error::IllConditioned { .. })));
        assert!(solve(&diag(&[2.0, 4.0]), &eye(2)).is_ok());
    }

    #[test]
    fn json_roundtrip_and_validation() {
        let mut rng = rng_from_seed(5);
        let m = complex_gaussian(2, 3, &mut rng);
        let v = matrix_to_value(&m);
        assert_eq!(matrix_from_value(&v, "m").unwrap(), m);
        let bad = serde_json::json!({"rows": 2, "cols": 2, "re": [1.0, 2.0, 3.0], "im": [0.0, 0.0, 0.0, 0.0]});
        match matrix_from_value(&bad, "point") {
            Err(Error::Parse { field, .. }) => assert_eq!(field, "point.re"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn range_and_complement() {
        let mut rng = rng_from_seed(9);
        let p = random_hermitian_psd(6, 2, &mut rng);
        let q = range_basis(&p, RANK_TOL);
        assert_eq!(q.ncols(), 2);
        let c = orth_complement(&q, 6);
        assert_eq!(c.ncols(), 4);
        assert!(operator_norm(&(q.adjoint() * &c)) < 1e-12);
    }
}
