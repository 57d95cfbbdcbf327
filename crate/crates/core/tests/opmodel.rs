use ncball::fock::{enumerate_words, Side, TruncatedFock};
use ncball::linalg::{
    ball_point, complex_gaussian, cx, eye, haar_unitary, hermitian_eigenvalues, max_abs, operator_norm, rng_from_seed,
    random_row_contraction, row_matrix, zeros, CMat,
};
use ncball::opmodel::{scalar_tuple, wold_decomposition, RowContraction};
use proptest::prelude::*;

fn diag(entries: &[f64]) -> CMat {
    let mut m = zeros(entries.len(), entries.len());
    for (i, &e) in entries.iter().enumerate() {
        m[(i, i)] = cx(e, 0.0);
    }
    m
}

#[test]
fn scalar_defect() {
    let t = RowContraction::new(scalar_tuple(&[cx(0.6, 0.0), cx(0.0, 0.0)])).unwrap();
    let d = t.defects().unwrap();
    assert!((d.delta_t[(0, 0)] - cx(0.8, 0.0)).norm() < 1e-14);
    assert_eq!(d.rank_t, 1);
    // Δ_{λ*}² = I − λ*λ has eigenvalues 0.64 and 1
    assert_eq!(d.rank_t_star, 2);
}

#[test]
fn creation_tuple_defect_is_vacuum_projection() {
    let fock = TruncatedFock::new(2, 4);
    let t = RowContraction::new(fock.creation_operators(Side::Left)).unwrap();
    let d = t.defects().unwrap();
    let mut vac = zeros(fock.dim(), fock.dim());
    vac[(0, 0)] = cx(1.0, 0.0);
    assert!(max_abs(&(d.delta_t - vac)) < 1e-12);
}

#[test]
fn isometry_has_zero_star_defect() {
    let mut rng = rng_from_seed(1);
    let t = RowContraction::new(vec![haar_unitary(3, &mut rng)]).unwrap();
    let d = t.defects().unwrap();
    assert!(max_abs(&d.delta_t_star) < 1e-7);
    assert_eq!(d.rank_t_star, 0);
}

#[test]
fn contractivity_is_enforced() {
    let err = RowContraction::new(scalar_tuple(&[cx(0.8, 0.0), cx(0.8, 0.0)])).unwrap_err();
    assert!(matches!(err, ncball::Error::ContractViolation(_)));
}

#[test]
fn scalar_defects_intertwine() {
    let mut rng = rng_from_seed(2);
    for _ in 0..100 {
        let lam = ball_point(3, 0.0, 0.999, &mut rng);
        let t = RowContraction::new(scalar_tuple(&lam)).unwrap();
        let d = t.defects().unwrap();
        let row = t.row();
        let a = &row * d.delta_t[(0, 0)];
        let b = &row * &d.delta_t_star;
        assert!(max_abs(&(a - b)) < 1e-12);
        let c = row.adjoint() * d.delta_t[(0, 0)];
        let e = &d.delta_t_star * row.adjoint();
        assert!(max_abs(&(c - e)) < 1e-12);
    }
}

#[test]
fn purity_profile_cases() {
    let t = RowContraction::new(random_row_contraction(2, 3, 0.7, 3)).unwrap();
    for (k, v) in t.purity_profile(20).iter().enumerate() {
        assert!(*v <= 0.49f64.powi(k as i32 + 1) * (1.0 + 1e-10));
    }
    let mut rng = rng_from_seed(4);
    let u = RowContraction::new(vec![haar_unitary(3, &mut rng)]).unwrap();
    assert!(u.purity_profile(10).iter().all(|v| (v - 1.0).abs() < 1e-12));
}

#[test]
fn cnc_subspace_cases() {
    let strict = RowContraction::new(random_row_contraction(2, 3, 0.6, 5)).unwrap();
    assert_eq!(strict.cnc_subspace(1e-10, 10_000).unwrap().ncols(), 0);

    let one = RowContraction::new(vec![eye(1)]).unwrap();
    assert_eq!(one.cnc_subspace(1e-10, 10_000).unwrap().ncols(), 1);

    let t = RowContraction::new(vec![diag(&[1.0, 0.5])]).unwrap();
    let b = t.cnc_subspace(1e-10, 10_000).unwrap();
    assert_eq!(b.ncols(), 1);
    assert!((b[(0, 0)].norm() - 1.0).abs() < 1e-10);
}

#[test]
fn cnc_reports_slow_convergence() {
    let t = RowContraction::new(vec![diag(&[1.0, 0.9999])]).unwrap();
    assert!(matches!(t.cnc_subspace(1e-10, 100), Err(ncball::Error::NoConvergence { .. })));
}

#[test]
fn dilation_of_zero_is_the_shift() {
    let t = RowContraction::new(vec![zeros(1, 1)]).unwrap();
    let dil = t.minimal_isometric_dilation(5).unwrap();
    assert_eq!(dil.dim(), 7);
    let mut shift = zeros(7, 7);
    for k in 0..6 {
        shift[(k + 1, k)] = cx(1.0, 0.0);
    }
    assert!(max_abs(&(&dil.v[0] - shift)) < 1e-14);
}

#[test]
fn dilation_of_isometry_is_itself() {
    let mut rng = rng_from_seed(6);
    let u = haar_unitary(2, &mut rng);
    let t = RowContraction::new(vec![u.clone()]).unwrap();
    let dil = t.minimal_isometric_dilation(3).unwrap();
    assert_eq!(dil.defect_dim, 0);
    assert!(max_abs(&(&dil.v[0] - u)) < 1e-14);
}

#[test]
fn dilation_compresses_to_words_of_t() {
    let t = RowContraction::new(random_row_contraction(2, 3, 0.9, 7)).unwrap();
    let dil = t.minimal_isometric_dilation(4).unwrap();
    for w in enumerate_words(2, 3) {
        assert!(max_abs(&(dil.compression(&w) - t.word(&w))) < 1e-10, "{w:?}");
    }
    assert!(dil.isometry_defect() < 1e-10);
    // V_i* embed = embed T_i*
    for i in 0..2 {
        let lhs = dil.v[i].adjoint() * &dil.embed;
        let rhs = &dil.embed * t.entries()[i].adjoint();
        assert!(max_abs(&(lhs - rhs)) < 1e-12);
    }
    let (rank, safe) = dil.minimality();
    assert_eq!(rank, safe);
}

#[test]
fn wold_of_shift_plus_unitary() {
    let mut rng = rng_from_seed(8);
    let u = haar_unitary(3, &mut rng);
    let fock = TruncatedFock::new(1, 6);
    let s = fock.creation(Side::Left, 0);
    let dim = fock.dim() + 3;
    let mut v = zeros(dim, dim);
    v.view_mut((0, 0), (7, 7)).copy_from(&s);
    v.view_mut((7, 7), (3, 3)).copy_from(&u);
    let mut safe = zeros(dim, dim - 1);
    for k in 0..6 {
        safe[(k, k)] = cx(1.0, 0.0);
    }
    for k in 0..3 {
        safe[(7 + k, 6 + k)] = cx(1.0, 0.0);
    }
    let parts = wold_decomposition(std::slice::from_ref(&v), Some(&safe), 1e-10).unwrap();
    assert_eq!(parts.multiplicity, 1);
    assert_eq!(parts.residual.ncols(), 3);
    // the residual compression is unitarily equivalent to U
    let w = parts.residual.adjoint() * &v * &parts.residual;
    assert!(operator_norm(&(w.adjoint() * &w - eye(3))) < 1e-10);
    let mut ev_w: Vec<_> = w.clone().eigenvalues().unwrap_or_else(|| panic!()).iter().map(|z| z.arg()).collect();
    let mut ev_u: Vec<_> = u.clone().eigenvalues().unwrap_or_else(|| panic!()).iter().map(|z| z.arg()).collect();
    ev_w.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev_u.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for (a, b) in ev_w.iter().zip(&ev_u) {
        assert!((a - b).abs() < 1e-8);
    }
}

#[test]
fn wold_of_unitary_has_no_wandering_part() {
    let mut rng = rng_from_seed(9);
    let u = haar_unitary(4, &mut rng);
    let parts = wold_decomposition(&[u], None, 1e-10).unwrap();
    assert_eq!(parts.multiplicity, 0);
    assert_eq!(parts.residual.ncols(), 4);
}

#[test]
fn wold_of_creation_tuple() {
    let fock = TruncatedFock::new(2, 6);
    let s = fock.creation_operators(Side::Left);
    let safe = eye(fock.dim()).columns(0, fock.dim_upto(5)).into_owned();
    let parts = wold_decomposition(&s, Some(&safe), 1e-10).unwrap();
    assert_eq!(parts.multiplicity, 1);
    assert!((parts.wandering[(0, 0)].norm() - 1.0).abs() < 1e-12);
    assert_eq!(parts.residual.ncols(), 0);
}

#[test]
fn wold_rejects_non_isometries() {
    let t = random_row_contraction(2, 3, 0.5, 10);
    assert!(matches!(wold_decomposition(&t, None, 1e-10), Err(ncball::Error::NotRowIsometry { .. })));
}

#[test]
fn row_contraction_json_round_trip() {
    let t = RowContraction::new(random_row_contraction(2, 2, 0.8, 11)).unwrap();
    let back = RowContraction::from_json(&t.to_json(), "t").unwrap();
    assert_eq!(back, t);
    let bad = serde_json::json!({"n": 1, "d": 1, "entries": [{"rows": 1, "cols": 1, "re": [2.0], "im": [0.0]}]});
    assert!(matches!(RowContraction::from_json(&bad, "t"), Err(ncball::Error::Parse { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn defect_squares(seed in any::<u64>(), n in 1usize..=3, d in 1usize..=4, s in 0.05f64..1.0) {
        let t = RowContraction::new(random_row_contraction(n, d, s, seed)).unwrap();
        let df = t.defects().unwrap();
        let gram = ncball::linalg::row_gram(t.entries());
        prop_assert!(max_abs(&(&df.delta_t * &df.delta_t - (eye(d) - gram))) < 1e-10);
        let row = row_matrix(t.entries());
        prop_assert!(max_abs(&(&df.delta_t_star * &df.delta_t_star - (eye(n * d) - row.adjoint() * row))) < 1e-10);
        prop_assert!(hermitian_eigenvalues(&df.delta_t).iter().all(|&e| e > -1e-12));
    }

    #[test]
    fn purity_profile_is_nonincreasing(seed in any::<u64>(), s in 0.1f64..1.0) {
        let mut rng = rng_from_seed(seed);
        let t = complex_gaussian(3, 3, &mut rng);
        let t = RowContraction::new(vec![t.scale(s / operator_norm(&t))]).unwrap();
        let p = t.purity_profile(15);
        for w in p.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }
}
