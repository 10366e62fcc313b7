//! Command-line front end: generate instances, solve and certify them, emit
//! landscape reports, and run Monte Carlo sweeps.
//!
//! Exit codes: 0 success, 1 argument error, 2 i/o error.

use ampscape::error::{Error, Result};
use ampscape::experiments::{make_truth, run_sweep, ExperimentConfig, Method, TruthSpec, TruthStyle};
use ampscape::factored::{certification_scale, certify_factored, solve_factored, SolverConfig};
use ampscape::field::{FieldScalar, FieldTag};
use ampscape::io::{
    read_matrix_csv, read_observation_csv, write_iteration_log, write_matrix_csv,
    write_observation_csv, AnyMatrix, ReportRow, REPORT_HEADER,
};
use ampscape::landscape::theorem_slack;
use ampscape::losses::{LossFamily, LossSpec};
use ampscape::measurement::{
    gen_ensemble, observe, AnyEnsemble, Ensemble, EnsembleDist, EnsembleSpec, NoiseSpec,
};
use ampscape::phasecut::{build_phasecut, certify_phasecut, solve_phasecut, SphereProductPoint};
use ampscape::{CriticalityCertificate, TheoremKind};
use clap::{Args, Parser, Subcommand};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "ampscape", version, about = "Phase retrieval landscape toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a measurement ensemble, ground truth, and observations.
    Gen(GenArgs),
    /// Solve one instance and write the solution, iteration log, and
    /// certificate.
    Solve(SolveArgs),
    /// Certify second-order criticality of a candidate point.
    Certify(CertifyArgs),
    /// Evaluate a landscape theorem at a candidate point and emit a report
    /// row.
    LandscapeCheck(LandscapeArgs),
    /// Run a Monte Carlo sweep from a JSON config.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    n: usize,
    /// real | complex
    #[arg(long, default_value = "real")]
    field: String,
    /// gaussian | rademacher | complex-gaussian | spectral
    #[arg(long, default_value = "gaussian")]
    dist: String,
    /// Spectral eigenvalues (comma separated, nonincreasing), for
    /// --dist spectral.
    #[arg(long)]
    sigmas: Option<String>,
    /// Ground-truth rank.
    #[arg(long, default_value_t = 1)]
    rank: usize,
    /// Ground-truth norm.
    #[arg(long, default_value_t = 1.0)]
    norm: f64,
    /// gaussian | flat | spike | covariance-aligned (spectral dists)
    #[arg(long, default_value = "gaussian")]
    style: String,
    /// Noise level (0 = noiseless).
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output prefix: writes <out>_F.csv, <out>_truth.csv, <out>_obs.csv.
    #[arg(long)]
    out: String,
}

#[derive(Args)]
struct SolveArgs {
    /// quartic | amplitude | poisson
    #[arg(long)]
    loss: String,
    /// factored | phasecut
    #[arg(long, default_value = "factored")]
    method: String,
    #[arg(long)]
    p: usize,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// Smoothing delta; omit for the default heuristic.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Input prefix (expects <in>_F.csv and <in>_obs.csv).
    #[arg(long = "in")]
    input: String,
    /// Output prefix: writes <out>_X.csv, <out>_iters.csv, <out>_cert.json.
    #[arg(long)]
    out: String,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
    #[arg(long)]
    curv_tol: Option<f64>,
}

#[derive(Args)]
struct CertifyArgs {
    /// quartic | amplitude | poisson
    #[arg(long)]
    loss: String,
    /// factored | phasecut (phasecut certifies a sphere-product point U)
    #[arg(long, default_value = "factored")]
    method: String,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "in")]
    input: String,
    /// Candidate point (X for factored, U for phasecut), matrix CSV.
    #[arg(long)]
    x: String,
    #[arg(long)]
    grad_tol: Option<f64>,
    #[arg(long)]
    curv_tol: Option<f64>,
}

#[derive(Args)]
struct LandscapeArgs {
    /// quartic | amplitude | poisson | phasecut
    #[arg(long)]
    theorem: String,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Input prefix (expects <in>_F.csv, <in>_obs.csv, <in>_truth.csv).
    #[arg(long = "in")]
    input: String,
    /// Candidate point: X (d×p) for the factored theorems, U (n×p) for the
    /// phasecut theorem (X is then recovered through the ridge map).
    #[arg(long)]
    x: String,
    /// Report CSV destination; stdout when omitted.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON config mirroring ExperimentConfig.
    #[arg(long)]
    config: PathBuf,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Certify(a) => cmd_certify(a),
        Command::LandscapeCheck(a) => cmd_landscape(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

fn parse_field(s: &str) -> Result<FieldTag> {
    FieldTag::parse(s).ok_or_else(|| Error::InvalidArgument(format!("unknown field `{s}`")))
}

fn parse_loss(s: &str) -> Result<LossFamily> {
    LossFamily::parse(s).ok_or_else(|| Error::InvalidArgument(format!("unknown loss `{s}`")))
}

fn parse_method(s: &str) -> Result<Method> {
    Method::parse(s).ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
}

fn parse_style(s: &str) -> Result<TruthStyle> {
    match s.trim().to_ascii_lowercase().as_str() {
        "gaussian" => Ok(TruthStyle::Gaussian),
        "flat" => Ok(TruthStyle::Flat),
        "spike" => Ok(TruthStyle::Spike),
        "covariance-aligned" | "covariance_aligned" => Ok(TruthStyle::CovarianceAligned),
        other => Err(Error::InvalidArgument(format!("unknown truth style `{other}`"))),
    }
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let field = parse_field(&a.field)?;
    let dist = match a.dist.trim().to_ascii_lowercase().as_str() {
        "gaussian" => EnsembleDist::GaussianIid,
        "rademacher" => EnsembleDist::RademacherIid,
        "complex-gaussian" | "complex_gaussian" => EnsembleDist::ComplexGaussianIid,
        "spectral" => {
            let text = a.sigmas.as_deref().ok_or_else(|| {
                Error::InvalidArgument("--dist spectral needs --sigmas".into())
            })?;
            let sigmas: std::result::Result<Vec<f64>, _> =
                text.split(',').map(|t| t.trim().parse::<f64>()).collect();
            EnsembleDist::SpectralGaussian {
                sigmas: sigmas.map_err(|_| Error::InvalidArgument("bad --sigmas list".into()))?,
            }
        }
        other => return Err(Error::InvalidArgument(format!("unknown dist `{other}`"))),
    };
    let spec = EnsembleSpec { d: a.d, n: a.n, field, dist };
    let ens = gen_ensemble(&spec, a.seed)?;
    let style = parse_style(&a.style)?;
    let truth_spec = TruthSpec { rank: a.rank, norm: a.norm, style };
    match ens {
        AnyEnsemble::Real(e) => gen_write::<f64>(&a, &e, &truth_spec, &spec.dist),
        AnyEnsemble::Complex(e) => gen_write::<Complex64>(&a, &e, &truth_spec, &spec.dist),
    }
}

fn gen_write<S: FieldScalar>(
    a: &GenArgs,
    ens: &Ensemble<S>,
    truth_spec: &TruthSpec,
    dist: &EnsembleDist,
) -> Result<()> {
    let f = ens.rank1_matrix().ok_or_else(|| {
        Error::InvalidArgument("gen only writes rank-one ensembles to disk".into())
    })?;
    let truth = make_truth::<S>(ens.dim(), truth_spec, dist, a.seed ^ 0x7457)?;
    let noise = if a.sigma > 0.0 {
        NoiseSpec::GaussianIid { sigma: a.sigma }
    } else {
        NoiseSpec::None
    };
    let obs = observe(ens, &truth, &noise, a.seed ^ 0x0b5e)?;
    write_matrix_csv(Path::new(&format!("{}_F.csv", a.out)), f)?;
    write_matrix_csv(Path::new(&format!("{}_truth.csv", a.out)), &truth.xstar)?;
    write_observation_csv(Path::new(&format!("{}_obs.csv", a.out)), &obs.y, obs.eps.as_ref())?;
    println!(
        "wrote {0}_F.csv ({1}x{2}, {3}), {0}_truth.csv, {0}_obs.csv",
        a.out,
        ens.len(),
        ens.dim(),
        S::FIELD
    );
    Ok(())
}

fn load_instance(prefix: &str) -> Result<(AnyMatrix, DVector<f64>, Option<DVector<f64>>)> {
    let f = read_matrix_csv(Path::new(&format!("{prefix}_F.csv")))?;
    let (y, eps) = read_observation_csv(Path::new(&format!("{prefix}_obs.csv")))?;
    if f.shape().0 != y.len() {
        return Err(Error::dim("instance", f.shape().0, y.len()));
    }
    Ok((f, y, eps))
}

fn cmd_solve(a: SolveArgs) -> Result<()> {
    let loss = parse_loss(&a.loss)?;
    let method = parse_method(&a.method)?;
    let (f, y, _) = load_instance(&a.input)?;
    match f {
        AnyMatrix::Real(f) => solve_typed::<f64>(&a, loss, method, f, y),
        AnyMatrix::Complex(f) => solve_typed::<Complex64>(&a, loss, method, f, y),
    }
}

fn solver_config_from(a: &SolveArgs) -> SolverConfig {
    let mut config = SolverConfig::new(a.p, a.seed);
    if let Some(m) = a.max_iters {
        config.max_iters = m;
    }
    config.grad_tol = a.grad_tol;
    config.curv_tol = a.curv_tol;
    config
}

fn solve_typed<S: FieldScalar>(
    a: &SolveArgs,
    loss: LossFamily,
    method: Method,
    f: DMatrix<S>,
    y: DVector<f64>,
) -> Result<()> {
    let delta = a.delta.unwrap_or_else(|| LossSpec::default_delta(loss, &y));
    let spec = LossSpec::new(loss, delta, a.lambda)?;
    let config = solver_config_from(a);
    let (x, cert, trace) = match method {
        Method::Factored => {
            let ens = Ensemble::from_rank1(f)?;
            let out = solve_factored(&spec, &ens, &y, &config, None)?;
            (out.x, out.cert, out.trace)
        }
        Method::PhaseCut => {
            if loss != LossFamily::Amplitude {
                return Err(Error::InvalidArgument(
                    "the phasecut method reformulates the amplitude loss".into(),
                ));
            }
            let prob = build_phasecut(f, y.clone(), a.lambda)?;
            let out = solve_phasecut(&prob, &config)?;
            (prob.ridge_recover(&out.u), out.cert, out.trace)
        }
    };
    write_matrix_csv(Path::new(&format!("{}_X.csv", a.out)), &x)?;
    write_iteration_log(Path::new(&format!("{}_iters.csv", a.out)), &trace)?;
    let cert_json = serde_json::to_string_pretty(&cert)
        .map_err(|e| Error::Format(format!("certificate serialization: {e}")))?;
    std::fs::write(format!("{}_cert.json", a.out), format!("{cert_json}\n"))?;
    println!("{cert_json}");
    Ok(())
}

fn cmd_certify(a: CertifyArgs) -> Result<()> {
    let loss = parse_loss(&a.loss)?;
    let method = parse_method(&a.method)?;
    let (f, y, _) = load_instance(&a.input)?;
    let x = read_matrix_csv(Path::new(&a.x))?;
    let cert = match (f, x) {
        (AnyMatrix::Real(f), AnyMatrix::Real(x)) => {
            certify_typed::<f64>(&a, loss, method, f, y, x)?
        }
        (AnyMatrix::Complex(f), AnyMatrix::Complex(x)) => {
            certify_typed::<Complex64>(&a, loss, method, f, y, x)?
        }
        _ => return Err(Error::InvalidArgument("field mismatch between F and X".into())),
    };
    let json = serde_json::to_string_pretty(&cert)
        .map_err(|e| Error::Format(format!("certificate serialization: {e}")))?;
    println!("{json}");
    Ok(())
}

fn certify_typed<S: FieldScalar>(
    a: &CertifyArgs,
    loss: LossFamily,
    method: Method,
    f: DMatrix<S>,
    y: DVector<f64>,
    x: DMatrix<S>,
) -> Result<CriticalityCertificate> {
    let d = f.ncols();
    let scale = certification_scale(&y, a.lambda, d);
    let grad_tol = a.grad_tol.unwrap_or(1e-8 * scale);
    let curv_tol = a.curv_tol.unwrap_or(1e-6 * scale);
    match method {
        Method::Factored => {
            let delta = a.delta.unwrap_or_else(|| LossSpec::default_delta(loss, &y));
            let spec = LossSpec::new(loss, delta, a.lambda)?;
            let ens = Ensemble::from_rank1(f)?;
            certify_factored(&spec, &ens, &y, &x, grad_tol, curv_tol, a.seed)
        }
        Method::PhaseCut => {
            let prob = build_phasecut(f, y, a.lambda)?;
            let u = SphereProductPoint::new(x)?;
            Ok(certify_phasecut(&prob.mlam, &u, grad_tol, curv_tol, a.seed))
        }
    }
}

fn cmd_landscape(a: LandscapeArgs) -> Result<()> {
    let theorem = TheoremKind::parse(&a.theorem)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown theorem `{}`", a.theorem)))?;
    let (f, y, eps) = load_instance(&a.input)?;
    let truth = read_matrix_csv(Path::new(&format!("{}_truth.csv", a.input)))?;
    let x = read_matrix_csv(Path::new(&a.x))?;
    let row = match (f, truth, x) {
        (AnyMatrix::Real(f), AnyMatrix::Real(t), AnyMatrix::Real(x)) => {
            landscape_typed::<f64>(&a, theorem, f, y, eps, t, x)?
        }
        (AnyMatrix::Complex(f), AnyMatrix::Complex(t), AnyMatrix::Complex(x)) => {
            landscape_typed::<Complex64>(&a, theorem, f, y, eps, t, x)?
        }
        _ => return Err(Error::InvalidArgument("field mismatch between inputs".into())),
    };
    let text = format!("{REPORT_HEADER}\n{}\n", row.to_csv_row());
    match &a.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn landscape_typed<S: FieldScalar>(
    a: &LandscapeArgs,
    theorem: TheoremKind,
    f: DMatrix<S>,
    y: DVector<f64>,
    eps: Option<DVector<f64>>,
    xstar: DMatrix<S>,
    point: DMatrix<S>,
) -> Result<ReportRow> {
    let loss = match theorem {
        TheoremKind::Quartic => LossFamily::Quartic,
        TheoremKind::Amplitude | TheoremKind::PhaseCut => LossFamily::Amplitude,
        TheoremKind::Poisson => LossFamily::Poisson,
    };
    let spec = LossSpec::new(loss, a.delta, a.lambda)?;
    let ens = Ensemble::from_rank1(f.clone())?;
    let d = ens.dim();
    let scale = certification_scale(&y, a.lambda, d);
    let (x, cert) = match theorem {
        TheoremKind::PhaseCut => {
            let prob = build_phasecut(f, y.clone(), a.lambda)?;
            let u = SphereProductPoint::new(point)?;
            let cert =
                certify_phasecut(&prob.mlam, &u, 1e-8 * scale, 1e-6 * scale, a.seed);
            (prob.ridge_recover(&u), cert)
        }
        _ => {
            let cert =
                certify_factored(&spec, &ens, &y, &point, 1e-8 * scale, 1e-6 * scale, a.seed)?;
            (point, cert)
        }
    };
    let report = theorem_slack(theorem, &spec, &ens, &y, eps.as_ref(), &xstar, &x, None)?;
    let (nuclear_error, vector_error) = if xstar.ncols() == 1 {
        let xsv: DVector<S> = xstar.column(0).into_owned();
        let m = ampscape::landscape::recovery_metrics(&x, &xsv, None)?;
        (m.nuclear_error, m.vector_error)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(ReportRow {
        theorem: theorem.name().into(),
        seed: a.seed,
        d,
        n: ens.len(),
        p: x.ncols(),
        field: S::FIELD,
        loss: loss.name().into(),
        delta: a.delta,
        lambda: a.lambda,
        lhs: report.lhs,
        rhs: report.rhs,
        slack: report.slack,
        grad_norm: cert.grad_norm,
        min_curvature: cert.min_curvature,
        nuclear_error,
        vector_error,
    })
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let text = std::fs::read_to_string(&a.config)?;
    let cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidArgument(format!("config parse: {e}")))?;
    let out = run_sweep(&cfg)?;
    println!(
        "wrote {} ({} rows) and {} ({} certified, {} slack violations)",
        out.csv_path.display(),
        out.rows.len(),
        out.summary_path.display(),
        out.summary.certified_rows,
        out.summary.slack_violations
    );
    Ok(())
}
