//! Named verification suites. Every check is a residual against a threshold;
//! a suite passes when all of its checks do.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::charfun::{
    arveson_curvature, cara_defect, curvature_report, dede_defect, defect_kernel_identity, factorization_defect,
    formula_defect, ident2_defect, inner_defect, omega_unitaries, CharFunction,
};
use crate::error::{Error, Result};
use crate::fock::{dim_of, enumerate_words, Side, TruncatedFock};
use crate::freeseries::{compose_map, jacobian_at_zero, ComposeOptions, FreeSeries};
use crate::linalg::{
    ball_point, complex_gaussian, cx, eye, haar_unitary, inverse, kron, max_abs, operator_norm, random_row_contraction,
    random_tuple_with_norm, rng_from_seed, row_matrix, tuple_diff, word_product, zeros, CMat, C64,
};
use crate::mobius::{
    gleason_factorization, max_principle_probe, recover_normal_form, rigidity_check, scalar_mobius, schwarz_pick_defect,
    BallAutomorphism, ClosureMap, Rigidity,
};
use crate::opmodel::{scalar_tuple, wold_decomposition, RowContraction};
use crate::poisson::{max_intertwining_defect, poisson_transform_monomial, poisson_transform_series, voiculescu_check, PoissonKernel};

pub const SUITES: [&str; 13] = [
    "involution",
    "defect-identities",
    "inner-charfun",
    "kernel-identity",
    "poisson-intertwine",
    "voiculescu",
    "cara",
    "group-gamma",
    "cartan-rigidity",
    "schwarz",
    "gleason",
    "dilation-wold",
    "curvature",
];

/// Largest Fock truncation the suites will build (number of words).
const FOCK_BUDGET: usize = 40_000;

#[derive(Clone, Debug)]
pub struct SuiteConfig {
    pub n: usize,
    pub d: usize,
    /// Truncation degree; `None` lets each suite use its own.
    pub degree: Option<usize>,
    /// Threshold for the exact algebraic identities (involution, defect
    /// factorizations, normal forms).
    pub tol: f64,
    pub seed: u64,
    pub trials: usize,
    pub r_grid: Vec<f64>,
    /// Monte Carlo sample count for the Arveson estimator.
    pub samples: usize,
    pub parallel: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            n: 2,
            d: 3,
            degree: None,
            tol: 1e-9,
            seed: 0,
            trials: 20,
            r_grid: vec![0.5, 0.9, 0.99],
            samples: 10_000,
            parallel: false,
        }
    }
}

impl SuiteConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Err(Error::ConfigInvalid(format!("{field}: {msg}")));
        if self.n == 0 {
            return bad("n", "must be at least 1".into());
        }
        if self.d == 0 {
            return bad("d", "must be at least 1".into());
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad("tol", format!("must be positive and finite, got {}", self.tol));
        }
        if self.trials == 0 {
            return bad("trials", "must be at least 1".into());
        }
        if self.r_grid.is_empty() {
            return bad("rGrid", "must not be empty".into());
        }
        if let Some(r) = self.r_grid.iter().find(|r| !(**r > 0.0 && **r < 1.0)) {
            return bad("rGrid", format!("radii must lie in (0, 1), got {r}"));
        }
        if self.samples < 2 {
            return bad("samples", "must be at least 2".into());
        }
        if let Some(deg) = self.degree {
            if deg < 3 {
                return bad("degree", format!("must be at least 3, got {deg}"));
            }
        }
        Ok(())
    }

    fn degree_or(&self, default: usize) -> usize {
        self.degree.unwrap_or(default)
    }
}

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub max_residual: f64,
    pub threshold: f64,
    pub pass: bool,
    /// Extra fields reported alongside the residual (ranks, truncations).
    pub detail: Map<String, Value>,
}

impl Check {
    fn new(name: &str, max_residual: f64, threshold: f64) -> Self {
        Check { name: name.into(), max_residual, threshold, pass: max_residual <= threshold, detail: Map::new() }
    }

    fn with(mut self, key: &str, value: Value) -> Self {
        self.detail.insert(key.into(), value);
        self
    }

    pub fn to_json(&self) -> Value {
        let mut m = Map::new();
        m.insert("name".into(), json!(self.name));
        m.insert("maxResidual".into(), json!(self.max_residual));
        m.insert("threshold".into(), json!(self.threshold));
        m.insert("pass".into(), json!(self.pass));
        for (k, v) in &self.detail {
            m.insert(k.clone(), v.clone());
        }
        Value::Object(m)
    }
}

#[derive(Clone, Debug)]
pub struct SuiteReport {
    pub suite_name: String,
    /// Suites that contributed checks (one entry unless `all`).
    pub groups: Vec<String>,
    pub checks: Vec<Check>,
    pub overall_pass: bool,
    pub wall_time: f64,
}

impl SuiteReport {
    pub fn to_json(&self) -> Value {
        json!({
            "suiteName": self.suite_name,
            "groups": self.groups,
            "checks": self.checks.iter().map(Check::to_json).collect::<Vec<_>>(),
            "overallPass": self.overall_pass,
            "wallTime": self.wall_time,
        })
    }
}

pub fn run_suite(name: &str, config: &SuiteConfig) -> Result<SuiteReport> {
    config.validate()?;
    let names: Vec<&str> = match name {
        "all" => SUITES.to_vec(),
        s if SUITES.contains(&s) => vec![s],
        other => return Err(Error::UnknownSuite(other.into())),
    };
    let start = Instant::now();
    let mut checks = Vec::new();
    for s in &names {
        let mut group = run_group(s, config)?;
        if name == "all" {
            for c in &mut group {
                c.name = format!("{s}: {}", c.name);
            }
        }
        checks.extend(group);
    }
    let overall_pass = checks.iter().all(|c| c.pass);
    Ok(SuiteReport {
        suite_name: name.into(),
        groups: names.iter().map(|s| s.to_string()).collect(),
        checks,
        overall_pass,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

fn run_group(name: &str, cfg: &SuiteConfig) -> Result<Vec<Check>> {
    match name {
        "involution" => involution(cfg),
        "defect-identities" => defect_identities(cfg),
        "inner-charfun" => inner_charfun(cfg),
        "kernel-identity" => kernel_identity(cfg),
        "poisson-intertwine" => poisson_intertwine(cfg),
        "voiculescu" => voiculescu(cfg),
        "cara" => cara(cfg),
        "group-gamma" => group_gamma(cfg),
        "cartan-rigidity" => cartan_rigidity(cfg),
        "schwarz" => schwarz(cfg),
        "gleason" => gleason(cfg),
        "dilation-wold" => dilation_wold(cfg),
        "curvature" => curvature(cfg),
        other => Err(Error::UnknownSuite(other.into())),
    }
}

// ---- trial driver ----

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn trial_seed(base: u64, salt: u64, t: usize) -> u64 {
    splitmix(splitmix(base ^ splitmix(salt)) ^ t as u64)
}

/// Runs `count` independent trials, each with its own seeded RNG, and
/// returns the componentwise maximum of their residual vectors. The result
/// does not depend on scheduling: trials are reduced in index order.
fn over_trials<F>(cfg: &SuiteConfig, count: usize, salt: u64, f: F) -> Result<Vec<f64>>
where
    F: Fn(&mut ChaCha8Rng) -> Result<Vec<f64>> + Sync,
{
    let run = |t: usize| {
        let mut rng = rng_from_seed(trial_seed(cfg.seed, salt, t));
        f(&mut rng)
    };
    let results: Vec<Result<Vec<f64>>> = if cfg.parallel && count > 1 {
        let workers = std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1).min(count);
        let mut slots: Vec<Option<Result<Vec<f64>>>> = (0..count).map(|_| None).collect();
        std::thread::scope(|s| {
            let handles: Vec<_> = (0..workers)
                .map(|w| {
                    let run = &run;
                    s.spawn(move || (w..count).step_by(workers).map(|t| (t, run(t))).collect::<Vec<_>>())
                })
                .collect();
            for h in handles {
                for (t, r) in h.join().expect("trial worker panicked") {
                    slots[t] = Some(r);
                }
            }
        });
        slots.into_iter().map(|s| s.expect("every trial ran")).collect()
    } else {
        (0..count).map(run).collect()
    };
    let mut worst: Vec<f64> = Vec::new();
    for r in results {
        let v = r?;
        if worst.is_empty() {
            worst = vec![0.0; v.len()];
        }
        for (w, x) in worst.iter_mut().zip(v) {
            // NaN counts as a failure
            *w = if x.is_nan() { f64::INFINITY } else { w.max(x) };
        }
    }
    Ok(worst)
}

fn heavy(cfg: &SuiteConfig, cap: usize) -> usize {
    cfg.trials.min(cap)
}

fn random_auto(n: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Result<BallAutomorphism> {
    BallAutomorphism::new(ball_point(n, lo, hi, rng), haar_unitary(n, rng))
}

fn strict(n: usize, d: usize, norm: f64, rng: &mut ChaCha8Rng) -> Result<RowContraction> {
    RowContraction::new(random_row_contraction(n, d, norm, rng.random()))
}

/// Deepest truncation of `F²` in `n` letters within the word budget.
fn budget_depth(n: usize, wanted: usize) -> usize {
    let mut k = wanted;
    while k > 1 && dim_of(n, k) > FOCK_BUDGET {
        k -= 1;
    }
    k
}


/// Scalar polynomial of degree 3 with `Σ|a_α| = scale`.
fn normalized_cubic(n: usize, max_deg: usize, scale: f64, with_constant: bool, rng: &mut ChaCha8Rng) -> FreeSeries {
    let words: Vec<_> = enumerate_words(n, 3).into_iter().filter(|w| with_constant || !w.is_empty()).collect();
    let coeffs: Vec<CMat> = words.iter().map(|_| complex_gaussian(1, 1, rng)).collect();
    let total: f64 = coeffs.iter().map(|c| c[(0, 0)].norm()).sum();
    let mut f = FreeSeries::zero(n, max_deg, 1, 1);
    for (w, c) in words.iter().zip(&coeffs) {
        f.set_coeff(w, &c.scale(scale / total));
    }
    f
}

fn relative(diff: f64, reference: f64) -> f64 {
    diff / reference.max(1.0)
}

// ---- automorphisms ----

fn involution(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let (n, d) = (cfg.n, cfg.d);
    let r = over_trials(cfg, cfg.trials, 1, |rng| {
        let psi = BallAutomorphism::psi(ball_point(n, 0.05, 0.95, rng))?;
        let x = random_tuple_with_norm(n, d, 0.95 * rng.random::<f64>(), rng);
        let twice = psi.apply(&psi.apply(&x)?)?;
        let g = random_auto(n, 0.05, 0.9, rng)?;
        let h = random_auto(n, 0.05, 0.9, rng)?;
        let back = g.invert()?.apply(&g.apply(&x)?)?;
        let composed = g.compose(&h)?.apply(&x)?;
        let nested = g.apply(&h.apply(&x)?)?;
        Ok(vec![tuple_diff(&twice, &x), tuple_diff(&back, &x), tuple_diff(&composed, &nested)])
    })?;
    Ok(vec![
        Check::new("psi_lambda(psi_lambda(X)) = X", r[0], cfg.tol),
        Check::new("inverse undoes the automorphism", r[1], cfg.tol),
        Check::new("composition matches nested application", r[2], cfg.tol),
    ])
}

/// `Δ_λ²(I − Xλ*)^{-1}(I − XY*)(I − λY*)^{-1}`.
fn defect_rhs(g: &BallAutomorphism, x: &[CMat], y: &[CMat]) -> Result<CMat> {
    let d = x[0].nrows();
    let lam = g.lambda();
    let xl = x.iter().zip(lam).fold(zeros(d, d), |acc, (xi, l)| acc + xi * l.conj());
    let ly = y.iter().zip(lam).fold(zeros(d, d), |acc, (yi, l)| acc + yi.adjoint() * *l);
    let xy = x.iter().zip(y).fold(zeros(d, d), |acc, (a, b)| acc + a * b.adjoint());
    let left = inverse(&(eye(d) - xl))?;
    let right = inverse(&(eye(d) - ly))?;
    Ok(left * (eye(d) - xy) * right * cx(g.delta_lambda().powi(2), 0.0))
}

fn defect_identities(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let (n, d) = (cfg.n, cfg.d);
    let r = over_trials(cfg, cfg.trials, 2, |rng| {
        let g = random_auto(n, 0.05, 0.9, rng)?;
        // half the trials probe the extended domain ‖X‖ < 1/‖λ‖
        let top = if rng.random::<bool>() { 0.98 / g.lambda_norm() } else { 0.95 };
        let x = random_tuple_with_norm(n, d, top * rng.random::<f64>(), rng);
        let y = random_tuple_with_norm(n, d, top * rng.random::<f64>(), rng);
        let (gx, gy) = (g.apply(&x)?, g.apply(&y)?);
        let lhs = eye(d) - gx.iter().zip(&gy).fold(zeros(d, d), |acc, (a, b)| acc + a * b.adjoint());
        let rhs = defect_rhs(&g, &x, &y)?;
        let first = relative(max_abs(&(lhs - &rhs)), operator_norm(&rhs));

        let lam = g.lambda().to_vec();
        let psi = BallAutomorphism::psi(lam.clone())?;
        let (px, py) = (row_matrix(&psi.apply(&x)?), row_matrix(&psi.apply(&y)?));
        let lhs = eye(n * d) - px.adjoint() * &py;
        let (rx, ry) = (row_matrix(&x), row_matrix(&y));
        let lk = kron(&CMat::from_fn(1, n, |_, j| lam[j]), &eye(d));
        let ds = kron(psi.delta_lambda_star(), &eye(d));
        let a = inverse(&(eye(n * d) - rx.adjoint() * &lk))?;
        let b = inverse(&(eye(n * d) - lk.adjoint() * &ry))?;
        let rhs = &ds * a * (eye(n * d) - rx.adjoint() * &ry) * b * &ds;
        let second = relative(max_abs(&(lhs - &rhs)), operator_norm(&rhs));

        let nf = recover_normal_form(&g)?;
        let dl = nf.lambda().iter().zip(g.lambda()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        let recover = dl.max(max_abs(&(nf.u() - g.u())));
        Ok(vec![first, second, recover])
    })?;
    Ok(vec![
        Check::new("I - Psi(X)Psi(Y)* factorization", r[0], cfg.tol),
        Check::new("I - Psi(X)*Psi(Y) factorization", r[1], cfg.tol),
        Check::new("normal form recovered from the map", r[2], 1e-10),
    ])
}

fn group_gamma(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let n = cfg.n;
    let gamma = |p: &BallAutomorphism, z: &[C64]| -> Result<Vec<C64>> {
        let w = scalar_mobius(p.lambda(), z)?;
        Ok((CMat::from_fn(1, n, |_, j| w[j]) * p.u()).iter().copied().collect())
    };
    let r = over_trials(cfg, cfg.trials, 8, |rng| {
        let g = random_auto(n, 0.1, 0.9, rng)?;
        let h = random_auto(n, 0.1, 0.9, rng)?;
        let gh = g.compose(&h)?;
        let mut worst = 0.0_f64;
        for _ in 0..50 {
            let z = ball_point(n, 0.0, 0.99, rng);
            let lhs = gamma(&gh, &z)?;
            let rhs = gamma(&g, &gamma(&h, &z)?)?;
            worst = worst.max(lhs.iter().zip(&rhs).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max));
        }
        let id = g.compose(&g.invert()?)?;
        let missed = if id.is_identity() && !g.is_identity() { 0.0 } else { 1.0 };
        Ok(vec![worst, missed])
    })?;
    Ok(vec![
        Check::new("Gamma(Psi o Phi) = Gamma(Psi) o Gamma(Phi) at 50 points", r[0], 1e-10),
        Check::new("Psi o Psi^-1 detected as the identity", r[1], 0.0),
    ])
}

fn cartan_rigidity(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let n = cfg.n;
    let r = over_trials(cfg, heavy(cfg, 5), 9, |rng| {
        let g = random_auto(n, 0.2, 0.8, rng)?;
        let b = g.apply_scalar(&vec![cx(0.0, 0.0); n])?;
        let back = BallAutomorphism::psi(b)?;
        let (bb, gg) = (back.clone(), g.clone());
        let radius = 1.0 / g.lambda_norm().max(1e-3);
        let map = ClosureMap::new(n, n, radius, move |x| bb.apply(&gg.apply(x)?));
        let series = compose_map(&map, &FreeSeries::identity_tuple(n, 4), &ComposeOptions::default())?;
        let mut high = 0.0;
        for s in &series {
            for (w, c) in s.terms() {
                if w.len() != 1 {
                    high += c[(0, 0)].norm_sqr();
                }
            }
        }
        let j = jacobian_at_zero(&series);
        let unitary = operator_norm(&(j.adjoint() * &j - eye(n)));

        let u = haar_unitary(n, rng);
        let lin = FreeSeries::linear_tuple(&u, 3);
        let found = matches!(rigidity_check(&lin, 1e-9)?, Rigidity::UnitaryLinear);
        let mut pert = lin.clone();
        pert[0] = pert[0].add(&FreeSeries::monomial(n, 3, &vec![0; 2], cx(1e-3, 0.0)))?;
        let caught = matches!(rigidity_check(&pert, 1e-9), Err(Error::ContractViolation(_)));
        let misclassified = if found && caught { 0.0 } else { 1.0 };
        Ok(vec![high.sqrt(), unitary, misclassified])
    })?;
    Ok(vec![
        Check::new("origin-fixing automorphism has no nonlinear terms", r[0], cfg.tol),
        Check::new("its derivative at 0 is unitary", r[1], cfg.tol),
        Check::new("unitary-derivative classification", r[2], 0.0),
    ])
}

fn schwarz(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let (n, d) = (cfg.n, cfg.d);
    let series_depth = budget_depth(n, 14);
    let r = over_trials(cfg, heavy(cfg, 5), 10, |rng| {
        let g = random_auto(n, 0.2, 0.6, rng)?;
        let f = g.series(series_depth);
        let a = ball_point(n, 0.0, 0.3, rng);
        let x = random_tuple_with_norm(n, d, 0.3, rng);
        let auto_defect = schwarz_pick_defect(&f, &a, &x)?.abs();

        // a tuple with Σ_α|a_α| ≤ 1/√n in each slot maps the ball into itself
        let scale = 0.99 / (n as f64).sqrt();
        let fs: Vec<FreeSeries> = (0..n).map(|_| normalized_cubic(n, 3, scale, true, rng)).collect();
        let x = random_tuple_with_norm(n, d, 0.95 * rng.random::<f64>(), rng);
        let pick = schwarz_pick_defect(&fs, &a, &x)?.max(0.0);

        let f0: Vec<FreeSeries> = (0..n).map(|_| normalized_cubic(n, 3, scale, false, rng)).collect();
        let lemma = schwarz_pick_defect(&f0, &vec![cx(0.0, 0.0); n], &x)?.max(0.0);

        let mp = max_principle_probe(&fs[0], 20, rng.random())?;
        let over = (mp.interior_max - mp.sup_estimate).max(0.0);
        Ok(vec![auto_defect, pick, lemma, over])
    })?;
    Ok(vec![
        Check::new("automorphisms are pseudo-hyperbolic isometries", r[0], 1e-6),
        Check::new("Schwarz-Pick contraction for ball maps", r[1], 1e-6),
        Check::new("Schwarz lemma for maps fixing 0", r[2], 1e-6),
        Check::new("interior values below the boundary sup", r[3], 1e-9),
    ])
}

fn gleason(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let n = cfg.n;
    let depth = budget_depth(n, cfg.degree_or(8));
    let r = over_trials(cfg, heavy(cfg, 3), 11, |rng| {
        let f = normalized_cubic(n, depth, 1.0, true, rng);
        let a = ball_point(n, 0.1, 0.32, rng);
        let gl = gleason_factorization(&f, &a, depth, 0.2, 20, rng.random())?;
        Ok(vec![gl.residual])
    })?;
    Ok(vec![Check::new("F - F(a) = sum Psi_a(X)_i H_i(Psi_a(X))", r[0], 1e-6).with("degree", json!(depth))])
}

// ---- Poisson transforms ----

fn poisson_intertwine(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let (n, d) = (cfg.n, cfg.d);
    let depth = budget_depth(n, 14);
    // keep the kernel tail (ρ^{2(N+1)}) below round-off
    let rho = 0.3_f64.min(1e-15_f64.powf(1.0 / (2.0 * (depth as f64 + 1.0))));
    let light = over_trials(cfg, heavy(cfg, 5), 5, |rng| {
        let t = strict(n, d, rho, rng)?;
        let k = PoissonKernel::new(&t, 1.0, depth)?;
        let mut mono = 0.0_f64;
        for a in enumerate_words(n, 2) {
            for b in enumerate_words(n, 2) {
                let oracle = t.word(&a) * t.word(&b).adjoint();
                mono = mono.max(max_abs(&(k.transform_monomial(&a, &b) - &oracle)));
                mono = mono.max(max_abs(&(poisson_transform_monomial(&t, &a, &b) - &oracle)));
            }
        }
        let t = strict(n, d, 0.5, rng)?;
        let f = normalized_cubic(n, 3, 1.0, true, rng);
        let k = PoissonKernel::new(&t, 0.8, depth)?;
        let route = max_abs(&(k.transform_series(&f)? - poisson_transform_series(&t, &f, 0.8)?));
        Ok(vec![mono, route])
    })?;
    let inter = over_trials(cfg, heavy(cfg, 3), 6, |rng| {
        let t = strict(n, d, 0.8, rng)?;
        let psi = random_auto(n, 0.1, 0.35, rng)?;
        Ok(vec![max_intertwining_defect(&t, &psi, 2)?])
    })?;
    Ok(vec![
        Check::new("P_T(S_a S_b*) = T_a T_b*", light[0], 1e-12).with("depth", json!(depth)),
        Check::new("kernel route equals the word sum", light[1], 1e-8),
        Check::new("Psi(T)_a Psi(T)_b* = P_T(Psi_a Psi_b*)", inter[0], 1e-8),
    ])
}

fn voiculescu(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let n = cfg.n;
    let depth = budget_depth(n, cfg.degree_or(7));
    let safe = depth.saturating_sub(3).max(1);
    let r = over_trials(cfg, heavy(cfg, 2), 7, |rng| {
        let mut lam = vec![cx(0.0, 0.0); n];
        lam[0] = cx(0.4, 0.0);
        if n > 1 {
            lam[1] = cx(0.2, 0.0);
        }
        let psi = BallAutomorphism::new(lam, haar_unitary(n, rng))?;
        let rep = voiculescu_check(&psi, depth, safe)?;
        let generator = rep.generator_match_defect.iter().copied().fold(0.0, f64::max);
        Ok(vec![rep.isometry_defect, rep.kernel_unitarity_defect(), generator, (rep.rank_defect as f64 - 1.0).abs()])
    })?;
    Ok(vec![
        Check::new("boundary tuple is a row isometry", r[0], 1e-6).with("depth", json!(depth)),
        Check::new("kernel K_Psi is unitary", r[1], 1e-6),
        Check::new("P_Psi(S_i) = Psi_i", r[2], 1e-6),
        Check::new("I - Psi Psi* has rank one", r[3], 0.0),
    ])
}

// ---- characteristic functions ----

fn inner_charfun(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let (n, d) = (cfg.n, cfg.d);
    let m = cfg.degree_or(6).saturating_sub(2);
    let r = over_trials(cfg, cfg.trials, 3, |rng| {
        let lam = ball_point(n, 0.2, 0.8, rng);
        let c = CharFunction::new(&RowContraction::new(scalar_tuple(&lam))?)?;
        let inner_lambda = inner_defect(&c, m)?;
        let t = strict(n, d, rng.random_range(0.2..0.9), rng)?;
        let c = CharFunction::new(&t)?;
        let inner_t = inner_defect(&c, m)?;
        let x = random_tuple_with_norm(n, 2, 0.99 * rng.random::<f64>(), rng);
        let y = random_tuple_with_norm(n, 2, 0.99 * rng.random::<f64>(), rng);
        let (a, b) = factorization_defect(&c, &x, &y)?;
        let t = strict(n, d, 0.7, rng)?;
        let c = CharFunction::new(&t)?;
        let x = random_tuple_with_norm(n, 2, 1.2, rng);
        let y = random_tuple_with_norm(n, 2, rng.random_range(0.5..1.2), rng);
        let (ea, eb) = factorization_defect(&c, &x, &y)?;
        Ok(vec![inner_lambda, inner_t, a.max(b), ea.max(eb)])
    })?;
    Ok(vec![
        Check::new("Theta_lambda is inner", r[0], 1e-9).with("degree", json!(m)),
        Check::new("Theta_T is inner for pure T", r[1], 1e-9),
        Check::new("I - Theta(X)Theta(Y)* factorization", r[2], 1e-9),
        Check::new("factorization on ||X|| < 1/||T||", r[3], 1e-8),
    ])
}

fn kernel_identity(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let (n, d) = (cfg.n, cfg.d);
    let depth = budget_depth(n, cfg.degree_or(6));
    let pure = over_trials(cfg, heavy(cfg, 4), 4, |rng| {
        let c = CharFunction::new(&strict(n, d, 0.9, rng)?)?;
        Ok(vec![defect_kernel_identity(&c, depth)?.residual])
    })?;
    let ranks = std::sync::Mutex::new(Vec::new());
    let lam = over_trials(cfg, heavy(cfg, 10), 12, |rng| {
        let lam = ball_point(n, 0.2, 0.7, rng);
        let c = CharFunction::new(&RowContraction::new(scalar_tuple(&lam))?)?;
        let k = defect_kernel_identity(&c, depth)?;
        ranks.lock().expect("rank log").push(k.rank);
        Ok(vec![k.residual, (k.rank as f64 - 1.0).abs()])
    })?;
    let mut ranks = ranks.into_inner().expect("rank log");
    ranks.sort_unstable();
    ranks.dedup();
    let rank = if ranks.len() == 1 { json!(ranks[0]) } else { json!(ranks) };
    Ok(vec![
        Check::new("I - Theta Theta* = K_T K_T* for pure T", pure[0], 1e-7).with("depth", json!(depth)),
        Check::new("I - Theta_l Theta_l* = K_l K_l*", lam[0], 1e-9),
        Check::new("I - Theta_l Theta_l* is a rank one projection", lam[1], 0.0).with("rank", rank),
    ])
}

fn cara(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let (n, d) = (cfg.n, cfg.d);
    let r = over_trials(cfg, cfg.trials, 13, |rng| {
        let t = strict(n, d, rng.random_range(0.2..0.8), rng)?;
        let psi = random_auto(n, 0.0, 0.9, rng)?;
        let x = random_tuple_with_norm(n, 2, rng.random_range(0.0..0.9), rng);
        let coincide = cara_defect(&t, &psi, &x)?;
        let unitary = omega_unitaries(&t, &psi)?.unitarity_defect();

        let mu = ball_point(n, 0.1, 0.8, rng);
        let lam = ball_point(n, 0.1, 0.8, rng);
        let x = random_tuple_with_norm(n, 2, rng.random_range(0.0..0.9), rng);
        let formula = formula_defect(&mu, &lam, &x)?;

        let t = strict(n, d, 0.85, rng)?;
        let psi = BallAutomorphism::psi(ball_point(n, 0.1, 0.9, rng))?;
        let aux = dede_defect(&t, &psi)?.max(ident2_defect(&t, &psi)?);
        Ok(vec![coincide, unitary, formula, aux])
    })?;
    Ok(vec![
        Check::new("Theta_Psi(T) coincides with Theta_T o Psi^-1", r[0], 1e-8),
        Check::new("Omega, Omega_* are unitary", r[1], 1e-9),
        Check::new("Psi_mu o Psi_lambda = -Omega Psi_nu Omega_*^*", r[2], 1e-9),
        Check::new("auxiliary defect identities", r[3], 1e-9),
    ])
}

// ---- dilations and curvature ----

fn dilation_wold(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let (n, d) = (cfg.n, cfg.d);
    let r = over_trials(cfg, heavy(cfg, 3), 14, |rng| {
        let t = strict(n, d, 0.9, rng)?;
        let dil = t.minimal_isometric_dilation(4)?;
        let mut comp = dil.isometry_defect();
        for w in enumerate_words(n, 3) {
            comp = comp.max(max_abs(&(dil.compression(&w) - t.word(&w))));
        }
        let g = random_auto(n, 0.1, 0.7, rng)?;
        let gv = g.apply(&dil.v)?;
        let gt = g.apply(t.entries())?;
        let mut moved = 0.0_f64;
        for w in enumerate_words(n, 2) {
            let lhs = dil.embed.adjoint() * word_product(&gv, &w) * &dil.embed;
            moved = moved.max(max_abs(&(lhs - word_product(&gt, &w))));
        }
        Ok(vec![comp, moved])
    })?;
    let wold = over_trials(cfg, heavy(cfg, 3), 15, |rng| {
        let u = haar_unitary(d, rng);
        let fock = TruncatedFock::new(1, 6);
        let s = fock.creation(Side::Left, 0);
        let k = fock.dim();
        let dim = k + d;
        let mut v = zeros(dim, dim);
        v.view_mut((0, 0), (k, k)).copy_from(&s);
        v.view_mut((k, k), (d, d)).copy_from(&u);
        // the top Fock vector is where the truncated shift stops being isometric
        let mut safe = zeros(dim, dim - 1);
        for i in 0..k - 1 {
            safe[(i, i)] = cx(1.0, 0.0);
        }
        for i in 0..d {
            safe[(k + i, k - 1 + i)] = cx(1.0, 0.0);
        }
        let parts = wold_decomposition(std::slice::from_ref(&v), Some(&safe), 1e-10)?;
        let counts = (parts.multiplicity as f64 - 1.0).abs() + (parts.residual.ncols() as f64 - d as f64).abs();
        if counts > 0.0 {
            return Ok(vec![counts, f64::INFINITY]);
        }
        let w = parts.residual.adjoint() * &v * &parts.residual;
        let ew: Vec<C64> = w.clone().eigenvalues().map(|e| e.iter().copied().collect()).unwrap_or_default();
        let eu: Vec<C64> = u.clone().eigenvalues().map(|e| e.iter().copied().collect()).unwrap_or_default();
        if ew.len() != d || eu.len() != d {
            return Ok(vec![0.0, f64::INFINITY]);
        }
        let near = |a: &[C64], b: &[C64]| a.iter().map(|p| b.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max);
        let spectral = near(&ew, &eu).max(near(&eu, &ew)).max(operator_norm(&(w.adjoint() * &w - eye(d))));
        Ok(vec![0.0, spectral])
    })?;
    Ok(vec![
        Check::new("P_H V_a|_H = T_a for |a| <= 3", r[0], 1e-10),
        Check::new("Psi(V) dilates Psi(T)", r[1], 1e-8),
        Check::new("Wold: shift multiplicity and unitary dimension", wold[0], 0.0),
        Check::new("Wold: unitary part recovered", wold[1], 1e-9),
    ])
}

fn arveson_oracle(lam: &[C64], r: f64) -> f64 {
    let s: f64 = lam.iter().map(|z| z.norm_sqr()).sum();
    let x = r * r * s;
    if lam.len() == 1 {
        (1.0 - s) * (1.0 - r * r) / (1.0 - x)
    } else {
        (1.0 - s) * (1.0 - r * r) * (-(1.0 - x).ln() / x)
    }
}

fn curvature(cfg: &SuiteConfig) -> Result<Vec<Check>> {
    let (n, d) = (cfg.n, cfg.d);
    let depth = cfg.degree_or(8);
    let hi = if n == 1 { 0.6 } else { 0.8 };
    let scalar = over_trials(cfg, heavy(cfg, 5), 16, |rng| {
        let lam = ball_point(n, 0.2, hi, rng);
        let rep = curvature_report(&RowContraction::new(scalar_tuple(&lam))?, depth)?;
        // the Euler normalization only reaches 0 for n ≥ 2
        let euler = if n > 1 { rep.euler_estimate.abs() } else { 0.0 };
        Ok(vec![rep.curv_estimate.abs(), euler])
    })?;

    // creation tuple on F²_{≤M}, kept within a few hundred dimensions
    let mut m = depth.saturating_sub(2).max(1);
    while m > 1 && dim_of(n, m) > 400 {
        m -= 1;
    }
    let fock = TruncatedFock::new(n, m);
    let creation = RowContraction::new(fock.creation_operators(Side::Left))?;
    let rep = curvature_report(&creation, depth.min(m + 2))?;
    let restricted = (rep.curv_estimate - 1.0).abs();

    let mut index = 0.0_f64;
    for k in 1..=d.max(2) {
        let j = CMat::from_fn(k, k, |a, b| if b == a + 1 { cx(1.0, 0.0) } else { cx(0.0, 0.0) });
        let t = RowContraction::new(vec![j])?;
        let dp = t.defects()?;
        let rep = curvature_report(&t, depth)?;
        index = index.max((rep.curv_estimate - (dp.rank_t as f64 - dp.rank_t_star as f64)).abs());
    }

    let an = if n == 1 { 1 } else { 2 };
    let mut rng = rng_from_seed(trial_seed(cfg.seed, 17, 0));
    let lam = ball_point(an, 0.2, 0.6, &mut rng);
    let t = RowContraction::new(scalar_tuple(&lam))?;
    let mut z = 0.0_f64;
    for (k, &r) in cfg.r_grid.iter().enumerate() {
        let est = arveson_curvature(&t, None, r, cfg.samples, trial_seed(cfg.seed, 18, k))?;
        let dev = (est.estimate - arveson_oracle(&lam, r)).abs();
        z = z.max(if est.stderr > 0.0 { dev / est.stderr } else if dev == 0.0 { 0.0 } else { f64::INFINITY });
    }

    Ok(vec![
        Check::new("curvature of a scalar point vanishes", scalar[0], 0.02).with("degree", json!(depth)),
        Check::new("Euler characteristic of a scalar point vanishes", scalar[1], 0.02),
        Check::new("restricted creation tuple has curvature 1", restricted, 0.02).with("truncation", json!(m)),
        Check::new("single-variable curvature equals the index", index, 1e-12),
        Check::new("Arveson estimator within 3 standard errors", z, 3.0).with("samples", json!(cfg.samples)),
    ])
}
