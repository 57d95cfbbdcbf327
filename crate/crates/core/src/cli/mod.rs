//! Command-line front end. `run` never prints: it returns the exit status
//! and the complete stdout/stderr text, so a failed validation leaves no
//! partial output behind.

pub mod output;
pub mod suites;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::charfun::{
    arveson_curvature, cara_defect, curvature_report, defect_kernel_identity, inner_defect, omega_unitaries, CharFunction,
};
use crate::error::{Error, Result};
use crate::freeseries::{sup_norm_estimate, FreeSeries};
use crate::linalg::{matrix_to_value, CMat};
use crate::mobius::BallAutomorphism;
use crate::opmodel::{tuple_from_json, wold_decomposition, RowContraction};
use crate::poisson::{max_intertwining_defect, poisson_transform_series, voiculescu_check, PoissonKernel};

pub use suites::{run_suite, Check, SuiteConfig, SuiteReport, SUITES};

#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

#[derive(Parser, Debug)]
#[command(name = "ncball", version, about = "Free holomorphic functions and model theory on the noncommutative unit ball")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Args, Debug)]
struct Opts {
    /// Number of variables
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Matrix (or Hilbert space) dimension
    #[arg(long, global = true)]
    d: Option<usize>,
    /// Truncation degree
    #[arg(long, global = true)]
    degree: Option<usize>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Radius for regularized transforms and the Arveson estimator
    #[arg(long, global = true)]
    r: Option<f64>,
    #[arg(long, global = true)]
    samples: Option<usize>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Primary input file (series, automorphism or tuple, per command)
    #[arg(long, global = true)]
    input: Option<PathBuf>,
    /// Tuple JSON to evaluate at
    #[arg(long, global = true)]
    point: Option<PathBuf>,
    /// Second automorphism (for compose)
    #[arg(long, global = true)]
    other: Option<PathBuf>,
    /// Automorphism JSON acting alongside a contraction
    #[arg(long, global = true)]
    auto: Option<PathBuf>,
    /// Scalar series JSON for Poisson transforms
    #[arg(long, global = true)]
    series: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    output: Format,
    /// Run suite trials on all cores (results are identical to serial runs)
    #[arg(long, global = true)]
    parallel: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate a free series at a matrix tuple
    Eval,
    /// Inspect or transform a free series
    Series {
        #[command(subcommand)]
        op: SeriesOp,
    },
    /// Automorphism algebra
    Auto {
        #[command(subcommand)]
        op: AutoOp,
    },
    /// Noncommutative Poisson kernels and transforms
    Poisson {
        #[command(subcommand)]
        op: PoissonOp,
    },
    /// Characteristic functions of row contractions
    Charfun {
        #[command(subcommand)]
        op: CharfunOp,
    },
    /// Curvature and Euler characteristic (or the Arveson estimator)
    Curvature {
        /// Monte Carlo Arveson curvature for commuting tuples
        #[arg(long)]
        arveson: bool,
    },
    /// Minimal isometric dilation of a row contraction
    Dilate,
    /// Wold decomposition of a row isometry
    Wold,
    /// Run a named verification suite
    Verify { suite: String },
}

#[derive(Subcommand, Debug)]
enum SeriesOp {
    /// Degree, Hadamard radius and sup-norm estimate
    Info,
    /// Free partial derivative in variable --index (1-based)
    Derivative {
        #[arg(long)]
        index: usize,
    },
    /// Left quotient by variable --index (1-based)
    Quotient {
        #[arg(long)]
        index: usize,
    },
    /// Component series of the automorphism in --input
    OfAuto,
}

#[derive(Subcommand, Debug)]
enum AutoOp {
    Apply,
    Compose,
    Invert,
    /// Extend to --n variables by (λ, 0) and U ⊕ I
    Extend,
}

#[derive(Subcommand, Debug)]
enum PoissonOp {
    /// Kernel K_{T,r} diagnostics
    Kernel,
    /// Transform of the scalar series in --series, by both routes
    Transform,
    /// Intertwining defect of Ψ(T) against the boundary transform
    Intertwine,
    /// Unitary kernel of the automorphism in --input
    Voiculescu,
}

#[derive(Subcommand, Debug)]
enum CharfunOp {
    Eval,
    /// I − ΘΘ* = KK* on the truncation
    Kernel,
    /// Θ*Θ − I from the exact Gram
    Inner,
    Omega,
    /// Coincidence of Θ_{Ψ(T)} with Θ_T ∘ Ψ^{-1}
    Cara,
}

pub fn run<I, S>(argv: I) -> Outcome
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let text = e.to_string();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    Outcome { code: 0, stdout: text, stderr: String::new() }
                }
                _ => Outcome { code: 2, stdout: String::new(), stderr: text },
            };
        }
    };
    let format = cli.opts.output;
    match dispatch(&cli) {
        Ok((value, ok)) => {
            let stdout = match format {
                Format::Json => output::to_json_string(&value),
                Format::Text => output::to_text(&value),
            };
            Outcome { code: if ok { 0 } else { 1 }, stdout, stderr: String::new() }
        }
        Err(e) => Outcome { code: exit_code(&e), stdout: String::new(), stderr: format!("error: {e}\n") },
    }
}

/// Input and configuration problems exit with 2; numerical breakdowns of a
/// well-formed request count as failed verification.
fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NoConvergence { .. } | Error::IllConditioned { .. } | Error::ContractViolation(_) => 1,
        _ => 2,
    }
}

fn read_json(path: Option<&Path>, flag: &str) -> Result<Value> {
    let path = path.ok_or_else(|| Error::parse(flag, format!("--{flag} <file> is required")))?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::parse(flag, format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(flag, format!("{}: {e}", path.display())))
}

fn tuple_value(t: &[CMat]) -> Value {
    json!({"n": t.len(), "d": t.first().map_or(0, |m| m.nrows()), "entries": t.iter().map(matrix_to_value).collect::<Vec<_>>()})
}

fn need<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::parse(flag, format!("--{flag} is required for this command")))
}

fn variable_index(index: usize, n: usize) -> Result<usize> {
    if index == 0 || index > n {
        return Err(Error::parse("index", format!("must lie in 1..={n}, got {index}")));
    }
    Ok(index - 1)
}

fn positive_radius(r: f64, flag: &str, allow_one: bool) -> Result<f64> {
    let ok = r > 0.0 && (r < 1.0 || (allow_one && r == 1.0));
    if !ok {
        let range = if allow_one { "(0, 1]" } else { "(0, 1)" };
        return Err(Error::parse(flag, format!("must lie in {range}, got {r}")));
    }
    Ok(r)
}

fn dispatch(cli: &Cli) -> Result<(Value, bool)> {
    let o = &cli.opts;
    let input = o.input.as_deref();
    let contraction = || RowContraction::from_json(&read_json(input, "input")?, "input");
    let automorphism = |p: Option<&Path>, flag: &str| BallAutomorphism::from_json(&read_json(p, flag)?, flag);
    let point = || tuple_from_json(&read_json(o.point.as_deref(), "point")?, "point");
    let done = |v: Value| Ok((v, true));

    match &cli.command {
        Command::Eval => {
            let f = FreeSeries::from_json(&read_json(input, "input")?, "input")?;
            let ev = f.eval(&point()?)?;
            done(json!({"value": matrix_to_value(&ev.value), "tailBound": ev.tail_bound}))
        }
        Command::Series { op } => {
            if let SeriesOp::OfAuto = op {
                let g = automorphism(input, "input")?;
                let deg = o.degree.unwrap_or(6);
                return done(json!({"components": g.series(deg).iter().map(FreeSeries::to_json).collect::<Vec<_>>()}));
            }
            let f = FreeSeries::from_json(&read_json(input, "input")?, "input")?;
            match op {
                SeriesOp::Info => {
                    let depth = o.degree.unwrap_or(f.max_deg().max(1));
                    let sup = sup_norm_estimate(std::slice::from_ref(&f), &[0.5, 0.9, 0.99], depth);
                    let (p, q) = f.block_shape();
                    done(json!({
                        "n": f.n(),
                        "maxDeg": f.max_deg(),
                        "blockShape": [p, q],
                        "effectiveDegree": f.effective_degree(),
                        "hadamardRadius": f.hadamard_radius(),
                        "supNormEstimate": sup,
                    }))
                }
                SeriesOp::Derivative { index } => done(f.partial_derivative(variable_index(*index, f.n())?).to_json()),
                SeriesOp::Quotient { index } => done(f.left_quotient(variable_index(*index, f.n())?).to_json()),
                SeriesOp::OfAuto => unreachable!("handled above"),
            }
        }
        Command::Auto { op } => {
            let g = automorphism(input, "input")?;
            match op {
                AutoOp::Apply => done(tuple_value(&g.apply(&point()?)?)),
                AutoOp::Compose => done(g.compose(&automorphism(o.other.as_deref(), "other")?)?.to_json()),
                AutoOp::Invert => done(g.invert()?.to_json()),
                AutoOp::Extend => done(g.extend(need(o.n, "n")?)?.to_json()),
            }
        }
        Command::Poisson { op } => match op {
            PoissonOp::Kernel => {
                let t = contraction()?;
                let r = positive_radius(o.r.unwrap_or(1.0), "r", true)?;
                let k = PoissonKernel::new(&t, r, o.degree.unwrap_or(6))?;
                done(json!({
                    "r": r,
                    "depth": k.fock().depth(),
                    "isometryDefect": k.isometry_defect(),
                    "tailBound": k.tail_bound(),
                }))
            }
            PoissonOp::Transform => {
                let t = contraction()?;
                let f = FreeSeries::from_json(&read_json(o.series.as_deref(), "series")?, "series")?;
                let r = positive_radius(o.r.unwrap_or(0.9), "r", true)?;
                let direct = poisson_transform_series(&t, &f, r)?;
                let k = PoissonKernel::new(&t, r, o.degree.unwrap_or(8))?;
                let via = k.transform_series(&f)?;
                let gap = crate::linalg::operator_norm(&(&via - &direct));
                done(json!({"value": matrix_to_value(&direct), "kernelRouteDifference": gap, "tailBound": k.tail_bound()}))
            }
            PoissonOp::Intertwine => {
                let t = contraction()?;
                let g = automorphism(o.auto.as_deref(), "auto")?;
                let len = o.degree.unwrap_or(2);
                done(json!({"maxWordLength": len, "maxDefect": max_intertwining_defect(&t, &g, len)?}))
            }
            PoissonOp::Voiculescu => {
                let g = automorphism(input, "input")?;
                let depth = o.degree.unwrap_or(7);
                done(voiculescu_check(&g, depth, depth.saturating_sub(3).max(1))?.to_json())
            }
        },
        Command::Charfun { op } => {
            let t = contraction()?;
            match op {
                CharfunOp::Eval => {
                    let c = CharFunction::new(&t)?;
                    done(json!({"value": matrix_to_value(&c.eval(&point()?)?)}))
                }
                CharfunOp::Kernel => done(defect_kernel_identity(&CharFunction::new(&t)?, o.degree.unwrap_or(6))?.to_json()),
                CharfunOp::Inner => {
                    let m = o.degree.unwrap_or(4);
                    done(json!({"degree": m, "innerDefect": inner_defect(&CharFunction::new(&t)?, m)?}))
                }
                CharfunOp::Omega => done(omega_unitaries(&t, &automorphism(o.auto.as_deref(), "auto")?)?.to_json()),
                CharfunOp::Cara => {
                    let g = automorphism(o.auto.as_deref(), "auto")?;
                    done(json!({"caraDefect": cara_defect(&t, &g, &point()?)?}))
                }
            }
        }
        Command::Curvature { arveson } => {
            if *arveson {
                let t = RowContraction::from_json(&read_json(input, "input")?, "input")?;
                let g = match &o.auto {
                    Some(p) => Some(automorphism(Some(p), "auto")?),
                    None => None,
                };
                let r = o.r.unwrap_or(0.99);
                done(arveson_curvature(&t, g.as_ref(), r, o.samples.unwrap_or(10_000), o.seed)?.to_json())
            } else {
                done(curvature_report(&contraction()?, o.degree.unwrap_or(8))?.to_json())
            }
        }
        Command::Dilate => {
            let dil = contraction()?.minimal_isometric_dilation(o.degree.unwrap_or(4))?;
            let mut v = dil.to_json();
            let (rank, safe) = dil.minimality();
            v["isometryDefect"] = json!(dil.isometry_defect());
            v["minimality"] = json!({"spanRank": rank, "safeDim": safe});
            done(v)
        }
        Command::Wold => {
            let v = tuple_from_json(&read_json(input, "input")?, "input")?;
            let parts = wold_decomposition(&v, None, o.tol.unwrap_or(1e-10))?;
            let unitary: Vec<CMat> = v.iter().map(|vi| parts.residual.adjoint() * vi * &parts.residual).collect();
            done(json!({
                "multiplicity": parts.multiplicity,
                "pureDim": parts.pure.ncols(),
                "residualDim": parts.residual.ncols(),
                "residualPart": if unitary.iter().all(|u| u.ncols() > 0) { tuple_value(&unitary) } else { Value::Null },
            }))
        }
        Command::Verify { suite } => {
            let mut cfg = SuiteConfig { seed: o.seed, parallel: o.parallel, degree: o.degree, ..SuiteConfig::default() };
            if let Some(n) = o.n {
                cfg.n = n;
            }
            if let Some(d) = o.d {
                cfg.d = d;
            }
            if let Some(tol) = o.tol {
                cfg.tol = tol;
            }
            if let Some(t) = o.trials {
                cfg.trials = t;
            }
            if let Some(s) = o.samples {
                cfg.samples = s;
            }
            if let Some(r) = o.r {
                cfg.r_grid = vec![r];
            }
            let report = run_suite(suite, &cfg)?;
            Ok((report.to_json(), report.overall_pass))
        }
    }
}
