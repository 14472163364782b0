//! Command-line front end.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::BigRational;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::chen_flow::{load_control, NumText, PolyControl};
use crate::error::{Error, Result};
use crate::free_lie::{build_free_algebra, load_quotient_algebra, Algebra, DualCovector};
use crate::linalg::Mat;
use crate::quadratic_r2s5::{
    certify, integrate, refinement_study, theta_consistency, CertifyRow, HeisenbergState, QuadraticParams, RefinementReport,
    order_estimate, DEFAULT_BLOWUP,
};
use crate::scalar::{parse_scalar, Mode, Scalar};
use crate::singularity::singularity_report;
use crate::strata::codim::compute;
use crate::strata::{
    catalog_examples, codim_report, concatenate, default_plan, equilibria, lift, normalize, system_of, verify_entry,
    CaseKind, CaseTag, ConcatenationPlan, EquilibriumSet, Leg, NormalForm, StratumLabel,
};

pub const DEFAULT_TOL: f64 = 1e-9;

#[derive(Parser, Debug)]
#[command(name = "carnot-singular", version, about = "Singular curves in Carnot groups")]
pub struct Cli {
    /// Arithmetic: exact rationals or f64.
    #[arg(long, value_enum, global = true, default_value_t = ModeArg::Exact)]
    pub mode: ModeArg,
    /// Float tolerance (ignored in exact mode).
    #[arg(long, global = true, default_value_t = DEFAULT_TOL)]
    pub tol: f64,
    /// Seed for sampled inputs.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Exact,
    Float,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Algebra inspection.
    #[command(subcommand)]
    Algebra(AlgebraCmd),
    /// Stratum and normal form of a covector.
    Classify(ClassifyArgs),
    /// Integral curve of a covector's system and its lift, as CSV.
    Trace(TraceArgs),
    /// Singularity check of a control, or of the built-in catalog.
    Verify(VerifyArgs),
    /// Tables.
    #[command(subcommand)]
    Report(ReportCmd),
    /// Integrate and certify the rank-2 step-5 quadratic system.
    R2s5(R2s5Args),
}

#[derive(Args, Debug, Clone)]
#[group(required = true, multiple = false)]
pub struct AlgebraSource {
    /// Free algebra of the given rank and step.
    #[arg(long, num_args = 2, value_names = ["RANK", "STEP"])]
    pub free: Option<Vec<usize>>,
    /// Algebra spec file (JSON).
    #[arg(long)]
    pub file: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum AlgebraCmd {
    /// Rank, step, layer dimensions and basis words.
    Info {
        #[command(flatten)]
        source: AlgebraSource,
        /// JSON summary instead of text.
        #[arg(long)]
        json: bool,
        /// Print the full spec file (structure constants) instead.
        #[arg(long, conflicts_with = "json")]
        spec: bool,
    },
}

#[derive(Args, Debug)]
pub struct ClassifyArgs {
    /// Covector file: JSON `{word: "p/q"}`.
    #[arg(long)]
    pub covector: PathBuf,
    #[command(flatten)]
    pub source: AlgebraSource,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PlanArg {
    /// Tree plan for branching drift sets, otherwise the curve from the origin.
    Auto,
    /// The curve from the origin over `[0, t1]`.
    Flow,
}

#[derive(Args, Debug)]
pub struct TraceArgs {
    /// Covector file: JSON `{word: "p/q"}`.
    #[arg(long)]
    pub covector: PathBuf,
    #[command(flatten)]
    pub source: AlgebraSource,
    /// End of the normalized time interval for a single curve.
    #[arg(long, default_value = "1")]
    pub t1: String,
    /// Row spacing in normalized time.
    #[arg(long, default_value_t = 1.0 / 16.0)]
    pub dt: f64,
    /// Which concatenation to trace.
    #[arg(long, value_enum, default_value_t = PlanArg::Auto)]
    pub plan: PlanArg,
    /// Truncation horizon of asymptotic legs.
    #[arg(long, default_value_t = crate::strata::plan::DEFAULT_HORIZON)]
    pub horizon: f64,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    /// Run the built-in catalog (all entries, or the named one).
    #[arg(long, num_args = 0..=1, default_missing_value = "all", conflicts_with_all = ["control", "free", "file"])]
    pub catalog: Option<String>,
    /// Control file: JSON `{pieces: [{duration, poly}]}`.
    #[arg(long, requires = "algebra")]
    pub control: Option<PathBuf>,
    /// Free algebra of the given rank and step.
    #[arg(long, num_args = 2, value_names = ["RANK", "STEP"], group = "algebra")]
    pub free: Option<Vec<usize>>,
    /// Algebra spec file (JSON).
    #[arg(long, group = "algebra")]
    pub file: Option<PathBuf>,
    /// Covector to test instead of the computed annihilator.
    #[arg(long, requires = "control")]
    pub covector: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum ReportCmd {
    /// Codimension bookkeeping per stratum.
    Codim {
        #[arg(value_enum)]
        case: CodimCase,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CodimCase {
    R2s3,
    R2s4,
    R3s3,
    R3s3Free,
}

impl CodimCase {
    pub fn tag(self) -> CaseTag {
        match self {
            CodimCase::R2s3 => CaseTag::new(CaseKind::R2S3, true),
            CodimCase::R2s4 => CaseTag::new(CaseKind::R2S4, true),
            CodimCase::R3s3 => CaseTag::new(CaseKind::R3S3, false),
            CodimCase::R3s3Free => CaseTag::new(CaseKind::R3S3, true),
        }
    }
}

#[derive(Args, Debug)]
pub struct R2s5Args {
    /// Parameter file: JSON `{word: "p/q"}` over the system's words.
    /// Random relation-respecting parameters from `--seed` when absent.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// Covector on free(2,5) to certify against instead of the one built from the parameters.
    #[arg(long)]
    pub covector: Option<PathBuf>,
    /// Integration horizon.
    #[arg(long, default_value_t = 1.0)]
    pub t1: f64,
    /// Finest step; the refinement study doubles it `levels - 1` times.
    #[arg(long, default_value_t = 0.0125)]
    pub dt: f64,
    /// Number of step sizes in the refinement study.
    #[arg(long, default_value_t = 4)]
    pub levels: u32,
    /// State norm at which integration stops (exit code 4).
    #[arg(long, default_value_t = DEFAULT_BLOWUP)]
    pub bound: f64,
    /// Residual report path; standard output when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

// ---------------------------------------------------------------------------

fn emit(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text)?,
        None => {
            let mut s = std::io::stdout().lock();
            s.write_all(text.as_bytes())?;
            s.flush()?;
        }
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    Ok(s)
}

fn load_algebra(free: &Option<Vec<usize>>, file: &Option<PathBuf>) -> Result<Algebra> {
    match (free, file) {
        (Some(rs), None) => build_free_algebra(rs[0], rs[1]),
        (None, Some(p)) => load_quotient_algebra(p),
        _ => Err(Error::Invalid("give exactly one of --free RANK STEP or --file PATH".into())),
    }
}

/// Covector file `{word: value}`; words need not be basis words.
pub fn load_covector(alg: &Algebra, path: &Path) -> Result<DualCovector<BigRational>> {
    let raw: BTreeMap<String, NumText> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let vals: Vec<(String, BigRational)> = raw.into_iter().map(|(w, v)| Ok((w, v.to_rational()?))).collect::<Result<_>>()?;
    let refs: Vec<(&str, BigRational)> = vals.iter().map(|(w, v)| (w.as_str(), v.clone())).collect();
    DualCovector::from_word_values(alg, &refs)
}

fn file_id(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn convert<F: Scalar>(l: &DualCovector<BigRational>) -> DualCovector<F> {
    DualCovector { alg: l.alg.clone(), coords: l.coords.iter().map(F::from_rational).collect() }
}

pub fn run(cli: &Cli) -> Result<()> {
    if !(cli.tol >= 0.0) {
        return Err(Error::Invalid(format!("tolerance must be non-negative, got {}", cli.tol)));
    }
    match &cli.command {
        Command::Algebra(AlgebraCmd::Info { source, json, spec }) => cmd_algebra_info(cli, source, *json, *spec),
        Command::Classify(a) => cmd_classify(cli, a),
        Command::Trace(a) => match cli.mode {
            ModeArg::Exact => cmd_trace::<BigRational>(cli, a),
            ModeArg::Float => cmd_trace::<f64>(cli, a),
        },
        Command::Verify(a) => cmd_verify(cli, a),
        Command::Report(ReportCmd::Codim { case, json }) => cmd_report_codim(cli, *case, *json),
        Command::R2s5(a) => cmd_r2s5(cli, a),
    }
}

// ---------------------------------------------------------------------------
// algebra
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct AlgebraSummary {
    rank: usize,
    step: usize,
    free: bool,
    dim: usize,
    layer_dims: Vec<usize>,
    basis: Vec<Vec<String>>,
}

pub fn cmd_algebra_info(cli: &Cli, src: &AlgebraSource, json: bool, spec: bool) -> Result<()> {
    let alg = load_algebra(&src.free, &src.file)?;
    if spec {
        return emit(&cli.out, &to_json(&alg.to_spec())?);
    }
    let s = AlgebraSummary {
        rank: alg.rank(),
        step: alg.step(),
        free: alg.is_free(),
        dim: alg.dim(),
        layer_dims: alg.layer_dims(),
        basis: (1..=alg.step()).map(|k| alg.layer_range(k).map(|i| alg.basis()[i].text.clone()).collect()).collect(),
    };
    if json {
        return emit(&cli.out, &to_json(&s)?);
    }
    let mut t = format!("rank {}\nstep {}\nfree {}\ndim {}\nlayer dims {:?}\n", s.rank, s.step, s.free, s.dim, s.layer_dims);
    for (k, words) in s.basis.iter().enumerate() {
        t.push_str(&format!("layer {}: {}\n", k + 1, words.join(" ")));
    }
    emit(&cli.out, &t)
}

// ---------------------------------------------------------------------------
// classify
// ---------------------------------------------------------------------------

#[derive(Serialize)]
pub struct StratumReport {
    pub lambda_id: String,
    pub case: String,
    #[serde(rename = "Lambda")]
    pub stratum: usize,
    #[serde(rename = "Xi")]
    pub xi: Option<usize>,
    #[serde(rename = "Xi_all")]
    pub xi_all: Vec<usize>,
    #[serde(rename = "N")]
    pub n: Vec<Vec<String>>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<String>>,
    pub b: Vec<String>,
    pub mu: String,
    pub equilibria: EquilibriumSet<String>,
    pub mode: Mode,
    /// Normal form data are exact rationals.
    pub exact_normal_form: bool,
    pub near_boundary: bool,
}

fn mat_text<F: Scalar>(m: &Mat<F>) -> Vec<Vec<String>> {
    (0..m.rows).map(|i| (0..m.cols).map(|j| m[(i, j)].to_text()).collect()).collect()
}

fn stratum_report<F: Scalar>(id: &str, label: &StratumLabel, form: &NormalForm<F>, exact: bool, tol: f64) -> StratumReport {
    StratumReport {
        lambda_id: id.to_string(),
        case: label.case.name().to_string(),
        stratum: label.lambda,
        xi: label.xi,
        xi_all: label.xi_all.clone(),
        n: mat_text(&form.n),
        p: mat_text(&form.p),
        b: form.b.iter().map(|x| x.to_text()).collect(),
        mu: form.mu.to_text(),
        equilibria: equilibria(&form.n, &form.b, tol).to_text(),
        mode: F::MODE,
        exact_normal_form: exact,
        near_boundary: label.near_boundary,
    }
}

pub fn cmd_classify(cli: &Cli, a: &ClassifyArgs) -> Result<()> {
    let alg = load_algebra(&a.source.free, &a.source.file)?;
    let case = CaseTag::of_algebra(&alg)?;
    let lambda = load_covector(&alg, &a.covector)?;
    let id = file_id(&a.covector);
    let report = match cli.mode {
        ModeArg::Exact => {
            let ns = normalize(&system_of(&lambda, case)?, 0.0)?;
            match &ns.exact {
                Some(f) => stratum_report(&id, &ns.label, f, true, 0.0),
                // irrational eigen data: exact label, float frame, flagged
                None => stratum_report(&id, &ns.label, &ns.float, false, cli.tol),
            }
        }
        ModeArg::Float => {
            let ns = normalize(&system_of(&lambda.to_f64(), case)?, cli.tol)?;
            stratum_report(&id, &ns.label, &ns.float, false, cli.tol)
        }
    };
    emit(&cli.out, &to_json(&report)?)
}

// ---------------------------------------------------------------------------
// trace
// ---------------------------------------------------------------------------

fn cmd_trace<F: Scalar>(cli: &Cli, a: &TraceArgs) -> Result<()> {
    let alg = load_algebra(&a.source.free, &a.source.file)?;
    let case = CaseTag::of_algebra(&alg)?;
    let lambda = load_covector(&alg, &a.covector)?;
    let tol = if F::MODE == Mode::Exact { 0.0 } else { cli.tol };
    let ns = normalize(&system_of(&convert::<F>(&lambda), case)?, tol)?;
    let form: NormalForm<F> = match (&ns.exact, F::MODE) {
        (Some(f), Mode::Exact) => map_form(f),
        (None, Mode::Exact) => {
            return Err(Error::Precondition(
                "normal form has irrational entries; rerun with --mode float".into(),
            ))
        }
        _ => map_form(&ns.float),
    };
    let t1: F = parse_scalar(&a.t1)?;
    let auto = default_plan(&ns.label, &form);
    let plan = match a.plan {
        PlanArg::Auto if auto.legs.len() > 1 => auto,
        _ => ConcatenationPlan::new(vec![Leg::Flow { z0: vec![F::zero(); form.b.len()], t0: F::zero(), t1 }]),
    }
    .with_resolution(a.dt)
    .with_horizon(a.horizon);
    let path = concatenate(&ns.label, &form, &plan)?;
    if F::MODE == Mode::Exact && !path.exact {
        return Err(Error::Precondition(
            "the curve is not polynomial in this stratum; rerun with --mode float".into(),
        ));
    }
    let fine = path.refined(a.dt)?;
    let lifted = lift(&alg, &fine, &form)?;
    let dim = form.b.len();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["t".to_string()];
    header.extend((1..=dim).map(|i| format!("z{i}")));
    header.extend(alg.basis().iter().map(|h| format!("g_{}", h.text)));
    w.write_record(&header)?;
    let mu = form.mu.to_f64();
    let mut tau = F::zero();
    for (k, z) in fine.vertices().iter().enumerate() {
        if k > 0 {
            tau = tau + fine.pieces[k - 1].0.clone();
        }
        let orig = form.to_original(z);
        let mut row = vec![fmt(tau.to_f64() / mu)];
        row.extend(orig.iter().map(|x| fmt(x.to_f64())));
        row.extend(lifted.points[k].log.coords.iter().map(|x| fmt(x.to_f64())));
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    emit(&cli.out, &String::from_utf8_lossy(&bytes))
}

fn fmt(x: f64) -> String {
    format!("{x:e}")
}

fn map_form<A: Scalar, F: Scalar>(f: &NormalForm<A>) -> NormalForm<F> {
    let m = |x: &A| F::from_rational(&x.to_rational());
    NormalForm { n: f.n.map(m), p: f.p.map(m), b: f.b.iter().map(m).collect(), mu: m(&f.mu) }
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

pub fn cmd_verify(cli: &Cli, a: &VerifyArgs) -> Result<()> {
    if let Some(name) = &a.catalog {
        let entries = catalog_examples()?;
        let chosen: Vec<_> = entries.iter().filter(|e| name == "all" || e.name == name).collect();
        if chosen.is_empty() {
            let names: Vec<&str> = entries.iter().map(|e| e.name).collect();
            return Err(Error::Invalid(format!("no catalog entry {name:?}; known: {}", names.join(", "))));
        }
        let reports = chosen.iter().map(|e| verify_entry(e)).collect::<Result<Vec<_>>>()?;
        emit(&cli.out, &to_json(&reports)?)?;
        let failed: Vec<&str> = reports.iter().filter(|r| !r.pass).map(|r| r.name.as_str()).collect();
        if !failed.is_empty() {
            return Err(Error::FixtureMismatch(format!("catalog entries failed: {}", failed.join(", "))));
        }
        return Ok(());
    }
    let path = a.control.as_ref().ok_or_else(|| Error::Invalid("give --catalog or --control".into()))?;
    let alg = load_algebra(&a.free, &a.file)?;
    let u = load_control(path)?;
    let lambda = a.covector.as_ref().map(|p| load_covector(&alg, p)).transpose()?;
    let id = file_id(path);
    let report = match cli.mode {
        ModeArg::Exact => singularity_report(&id, &alg, &u, lambda.as_ref(), 0.0)?,
        ModeArg::Float => {
            let uf: PolyControl<f64> = u.to_f64();
            let lf = lambda.map(|l| l.to_f64());
            singularity_report(&id, &alg, &uf, lf.as_ref(), cli.tol)?
        }
    };
    emit(&cli.out, &to_json(&report)?)
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

pub fn cmd_report_codim(cli: &Cli, case: CodimCase, json: bool) -> Result<()> {
    let tag = case.tag();
    // print the table even when it disagrees with the reference, then fail
    let checked = codim_report(tag);
    let table = compute(tag);
    let text = if json { to_json(&table)? } else { table.to_text() };
    emit(&cli.out, &text)?;
    checked.map(|_| ())
}

// ---------------------------------------------------------------------------
// r2s5
// ---------------------------------------------------------------------------

#[derive(Serialize)]
pub struct R2s5Report {
    pub params: BTreeMap<String, String>,
    pub t1: f64,
    pub mode: Mode,
    pub rows: Vec<CertifyRow>,
    pub order_estimate: Option<f64>,
    /// `sup |theta - int z1 z2'|` on the finest run.
    pub theta_consistency: f64,
    pub blown_up: bool,
}

pub fn load_params(path: &Path) -> Result<QuadraticParams> {
    let raw: BTreeMap<String, NumText> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let vals = raw.into_iter().map(|(w, v)| Ok((w, v.to_rational()?))).collect::<Result<BTreeMap<_, _>>>()?;
    QuadraticParams::new(&vals)
}

pub fn cmd_r2s5(cli: &Cli, a: &R2s5Args) -> Result<()> {
    if a.levels == 0 {
        return Err(Error::Invalid("--levels must be at least 1".into()));
    }
    let params = match &a.params {
        Some(p) => load_params(p)?,
        None => QuadraticParams::random(&mut ChaCha8Rng::seed_from_u64(cli.seed), 1),
    };
    let alg = build_free_algebra(2, 5)?;
    let lambda = match &a.covector {
        Some(p) => load_covector(&alg, p)?,
        None => params.covector(&alg)?,
    };
    let traj = integrate(&params, HeisenbergState::ORIGIN, a.t1, a.dt, a.bound)?;
    if let Some(p) = &cli.out {
        let f = std::fs::File::create(p)?;
        traj.write_csv(f)?;
    }
    let consistency = theta_consistency(&traj, &params);
    let mut report = R2s5Report {
        params: params.to_map(),
        t1: a.t1,
        mode: mode_of(cli.mode),
        rows: Vec::new(),
        order_estimate: None,
        theta_consistency: consistency,
        blown_up: traj.blown_up,
    };
    let write_report = |r: &R2s5Report| -> Result<()> { emit(&a.report, &to_json(r)?) };
    if traj.blown_up {
        write_report(&report)?;
        return Err(Error::BlowUp(format!(
            "state norm passed {:e} at t = {}",
            a.bound,
            traj.times.last().copied().unwrap_or(0.0)
        )));
    }
    let dts: Vec<f64> = (0..a.levels).rev().map(|k| a.dt * 2f64.powi(k as i32)).collect();
    let study: RefinementReport = match cli.mode {
        ModeArg::Float => refinement_study(&params, Some(&lambda), a.t1, &dts)?,
        ModeArg::Exact => exact_study(&params, &lambda, a.t1, &dts, a.bound)?,
    };
    report.rows = study.rows;
    report.order_estimate = study.order_estimate;
    write_report(&report)
}

fn mode_of(m: ModeArg) -> Mode {
    match m {
        ModeArg::Exact => Mode::Exact,
        ModeArg::Float => Mode::Float,
    }
}

/// Refinement study with the surrogate evaluated in rational arithmetic.
fn exact_study(
    params: &QuadraticParams,
    lambda: &DualCovector<BigRational>,
    t1: f64,
    dts: &[f64],
    bound: f64,
) -> Result<RefinementReport> {
    let mut rows = Vec::new();
    for &dt in dts {
        let traj = integrate(params, HeisenbergState::ORIGIN, t1, dt, bound)?;
        if traj.blown_up {
            return Err(Error::BlowUp(format!("state norm passed {bound:e} at dt = {dt}")));
        }
        rows.push(certify::<BigRational>(params, Some(lambda), &traj)?);
    }
    let order_estimate = order_estimate(&rows);
    Ok(RefinementReport { rows, order_estimate })
}
