//! Monte Carlo experiment runner: configurable sweeps over noise, rank, and
//! regularization grids, one CSV row per (grid point, trial), plus a summary
//! JSON with per-grid-point medians, success rates, and fitted log-log
//! slopes. Trials are seeded independently of scheduling, so reruns are
//! byte-identical.

use crate::error::{Error, Result};
use crate::factored::{solve_factored, SolverConfig};
use crate::field::{standard_matrix, FieldScalar};
use crate::io::{ReportRow, REPORT_HEADER};
use crate::landscape::{recovery_metrics, slack_scale, theorem_slack, TheoremKind};
use crate::losses::{LossFamily, LossSpec};
use crate::measurement::{
    gen_ensemble, observe, AnyEnsemble, Ensemble, EnsembleDist, EnsembleSpec, GroundTruth,
    NoiseSpec, SpectralCovariance,
};
use crate::phasecut::{build_phasecut, solve_phasecut};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

/// Multiplier standing in for the unspecified universal constant in the
/// spectral-ensemble regularization floor λ ≥ 4·(σ_{d+1} + (1/n)Σ_{m>d}σ_m).
pub const LAMBDA_FLOOR_FACTOR: f64 = 4.0;

/// Relative nuclear error below which a trial counts as exact recovery.
pub const DEFAULT_SUCCESS_REL_NUCLEAR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TruthStyle {
    /// Random Gaussian factor scaled to the requested norm.
    Gaussian,
    /// Maximally incoherent rank-1 signal (all entries equal).
    Flat,
    /// Maximally spiky rank-1 signal (a single coordinate).
    Spike,
    /// Gaussian draw with coordinate variances matching the spectral
    /// measurement covariance (spectral ensembles only): the canonical
    /// random signal of the Hilbert-space setting.
    CovarianceAligned,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TruthSpec {
    pub rank: usize,
    pub norm: f64,
    pub style: TruthStyle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Factored,
    PhaseCut,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Factored => "factored",
            Method::PhaseCut => "phasecut",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        match s.trim().to_ascii_lowercase().as_str() {
            "factored" => Some(Method::Factored),
            "phasecut" => Some(Method::PhaseCut),
            _ => None,
        }
    }
}

/// Solver knobs shared across the sweep (rank and seed are per grid point /
/// trial).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub max_iters: usize,
    pub grad_tol: Option<f64>,
    pub curv_tol: Option<f64>,
    pub init_step: f64,
    pub escape_radius: f64,
    pub escape_max_rounds: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            max_iters: 20_000,
            grad_tol: None,
            curv_tol: None,
            init_step: 1.0,
            escape_radius: 1.0,
            escape_max_rounds: 20,
        }
    }
}

impl SolverSettings {
    fn to_config(&self, p: usize, seed: u64) -> SolverConfig {
        SolverConfig {
            p,
            max_iters: self.max_iters,
            grad_tol: self.grad_tol,
            curv_tol: self.curv_tol,
            init_step: self.init_step,
            backtrack_shrink: 0.5,
            sufficient_decrease: 1e-4,
            escape_radius: self.escape_radius,
            escape_max_rounds: self.escape_max_rounds,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub ensemble: EnsembleSpec,
    pub truth: TruthSpec,
    pub loss: LossFamily,
    /// Smoothing δ; `None` applies the per-trial default heuristic.
    #[serde(default)]
    pub delta: Option<f64>,
    pub method: Method,
    #[serde(default)]
    pub solver: SolverSettings,
    /// Noise levels σ; empty means a single noiseless point.
    #[serde(default)]
    pub noise_grid: Vec<f64>,
    pub p_grid: Vec<usize>,
    pub lambda_grid: Vec<f64>,
    pub trials: usize,
    pub base_seed: u64,
    /// Output prefix: rows land in `<prefix>.csv`, the summary in
    /// `<prefix>_summary.json`.
    pub output_path: String,
    /// Effective dimension for the spectral-ensemble λ floor.
    #[serde(default)]
    pub effective_dim: Option<usize>,
    #[serde(default)]
    pub success_rel_nuclear: Option<f64>,
}

impl ExperimentConfig {
    pub fn noise_points(&self) -> Vec<f64> {
        if self.noise_grid.is_empty() {
            vec![0.0]
        } else {
            self.noise_grid.clone()
        }
    }

    /// The enforced λ floor for spectral ensembles, if applicable.
    pub fn lambda_floor(&self) -> Result<Option<f64>> {
        if let EnsembleDist::SpectralGaussian { sigmas } = &self.ensemble.dist {
            let d_eff = self.effective_dim.ok_or_else(|| {
                Error::InvalidArgument(
                    "spectral sweeps must set effective_dim for the lambda floor".into(),
                )
            })?;
            let cov = SpectralCovariance::new(sigmas.clone())?;
            Ok(Some(LAMBDA_FLOOR_FACTOR * cov.lambda_floor_terms(d_eff, self.ensemble.n)))
        } else {
            Ok(None)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be >= 1".into()));
        }
        if self.p_grid.is_empty() || self.lambda_grid.is_empty() {
            return Err(Error::InvalidArgument("p and lambda grids must be nonempty".into()));
        }
        if self.truth.rank == 0 {
            return Err(Error::InvalidArgument("truth rank must be >= 1".into()));
        }
        if self.truth.norm <= 0.0 || !self.truth.norm.is_finite() {
            return Err(Error::InvalidArgument("truth norm must be positive".into()));
        }
        if matches!(self.truth.style, TruthStyle::Flat | TruthStyle::Spike)
            && self.truth.rank != 1
        {
            return Err(Error::InvalidArgument("flat/spike truths are rank-1".into()));
        }
        if self.method == Method::PhaseCut {
            if self.loss != LossFamily::Amplitude {
                return Err(Error::InvalidArgument(
                    "the phasecut method reformulates the amplitude loss".into(),
                ));
            }
            if matches!(self.ensemble.dist, EnsembleDist::RealPartOfComplex) {
                return Err(Error::InvalidArgument(
                    "the phasecut method needs a rank-one ensemble".into(),
                ));
            }
        }
        if self.noise_points().iter().any(|s| *s < 0.0) {
            return Err(Error::InvalidArgument("noise levels must be >= 0".into()));
        }
        if let Some(floor) = self.lambda_floor()? {
            for l in &self.lambda_grid {
                if *l < floor * (1.0 - 1e-12) {
                    return Err(Error::InvalidArgument(format!(
                        "lambda {l} below the enforced spectral floor {floor}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One cell of the sweep grid.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GridPoint {
    pub index: usize,
    pub p: usize,
    pub lambda: f64,
    pub sigma: f64,
}

pub fn grid_points(cfg: &ExperimentConfig) -> Vec<GridPoint> {
    let mut out = Vec::new();
    let mut index = 0;
    for &p in &cfg.p_grid {
        for &lambda in &cfg.lambda_grid {
            for &sigma in &cfg.noise_points() {
                out.push(GridPoint { index, p, lambda, sigma });
                index += 1;
            }
        }
    }
    out
}

/// One row of sweep output. Wall time is kept out of the CSV so that reruns
/// are byte-identical.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub grid_index: usize,
    pub trial: u64,
    pub sigma: f64,
    pub report: ReportRow,
    pub certified: bool,
    pub iterations: usize,
    pub clamped_count: usize,
    pub wall_time_ms: f64,
    pub slack_scale: f64,
}

impl TrialRecord {
    pub fn csv_header() -> String {
        format!("{REPORT_HEADER},sigma,certified,iterations,clamped_count")
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.report.to_csv_row(),
            self.sigma,
            self.certified,
            self.iterations,
            self.clamped_count
        )
    }
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-trial seed stream: deterministic in (base seed, trial index), and
/// independent of the grid point so methods and noise levels pair up.
pub fn trial_seed_stream(base_seed: u64, trial: u64) -> [u64; 4] {
    let mut state = base_seed ^ trial.wrapping_mul(0xA076_1D64_78BD_642F).wrapping_add(1);
    [
        splitmix64(&mut state),
        splitmix64(&mut state),
        splitmix64(&mut state),
        splitmix64(&mut state),
    ]
}

/// Draw the ground-truth factor for a trial: a seeded Gaussian (optionally
/// covariance aligned), or the deterministic flat/spike vectors, scaled to
/// the requested norm.
pub fn make_truth<S: FieldScalar>(
    d: usize,
    spec: &TruthSpec,
    dist: &EnsembleDist,
    seed: u64,
) -> Result<GroundTruth<S>> {
    use rand::SeedableRng;
    let mut x = match spec.style {
        TruthStyle::Gaussian => {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            standard_matrix::<S, _>(d, spec.rank, &mut rng)
        }
        TruthStyle::Flat => DMatrix::<S>::from_element(d, 1, S::from_real(1.0)),
        TruthStyle::Spike => {
            let mut m = DMatrix::<S>::zeros(d, 1);
            m[(0, 0)] = S::from_real(1.0);
            m
        }
        TruthStyle::CovarianceAligned => {
            let sigmas = match dist {
                EnsembleDist::SpectralGaussian { sigmas } => sigmas,
                _ => {
                    return Err(Error::InvalidArgument(
                        "covariance_aligned truths need a spectral ensemble".into(),
                    ))
                }
            };
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut m = standard_matrix::<S, _>(d, spec.rank, &mut rng);
            for i in 0..d {
                for j in 0..spec.rank {
                    m[(i, j)] *= S::from_real(sigmas[i].sqrt());
                }
            }
            m
        }
    };
    let norm = x.norm();
    if norm == 0.0 {
        return Err(Error::InvalidArgument("degenerate ground truth draw".into()));
    }
    x *= S::from_real(spec.norm / norm);
    GroundTruth::new(x)
}

fn theorem_for(loss: LossFamily, method: Method) -> TheoremKind {
    match method {
        Method::PhaseCut => TheoremKind::PhaseCut,
        Method::Factored => match loss {
            LossFamily::Quartic => TheoremKind::Quartic,
            LossFamily::Amplitude => TheoremKind::Amplitude,
            LossFamily::Poisson => TheoremKind::Poisson,
        },
    }
}

/// Run one trial at one grid point. Deterministic in
/// (config.base_seed, trial_index); solver non-certification is recorded in
/// the row, not raised.
pub fn run_trial(
    cfg: &ExperimentConfig,
    gp: &GridPoint,
    trial_index: u64,
) -> Result<TrialRecord> {
    let seeds = trial_seed_stream(cfg.base_seed, trial_index);
    let ens = gen_ensemble(&cfg.ensemble, seeds[0])?;
    match ens {
        AnyEnsemble::Real(e) => run_trial_typed::<f64>(cfg, gp, trial_index, &e, seeds),
        AnyEnsemble::Complex(e) => run_trial_typed::<num_complex::Complex64>(cfg, gp, trial_index, &e, seeds),
    }
}

fn run_trial_typed<S: FieldScalar>(
    cfg: &ExperimentConfig,
    gp: &GridPoint,
    trial_index: u64,
    ens: &Ensemble<S>,
    seeds: [u64; 4],
) -> Result<TrialRecord> {
    let start = std::time::Instant::now();
    let truth = make_truth::<S>(ens.dim(), &cfg.truth, &cfg.ensemble.dist, seeds[1])?;
    let noise = if gp.sigma > 0.0 {
        NoiseSpec::GaussianIid { sigma: gp.sigma }
    } else {
        NoiseSpec::None
    };
    let obs = observe(ens, &truth, &noise, seeds[2])?;
    let delta = cfg.delta.unwrap_or_else(|| LossSpec::default_delta(cfg.loss, &obs.y));
    let spec = LossSpec::new(cfg.loss, delta, gp.lambda)?;
    let solver = cfg.solver.to_config(gp.p, seeds[3]);

    let (x, cert, iterations) = match cfg.method {
        Method::Factored => {
            let out = solve_factored(&spec, ens, &obs.y, &solver, None)?;
            (out.x, out.cert, out.trace.len())
        }
        Method::PhaseCut => {
            let f = ens.rank1_matrix().ok_or_else(|| {
                Error::PreconditionViolated("phasecut needs a rank-one ensemble".into())
            })?;
            let prob = build_phasecut(f.clone(), obs.y.clone(), gp.lambda)?;
            let out = solve_phasecut(&prob, &solver)?;
            (prob.ridge_recover(&out.u), out.cert, out.trace.len())
        }
    };

    let theorem = theorem_for(cfg.loss, cfg.method);
    let report = theorem_slack(
        theorem,
        &spec,
        ens,
        &obs.y,
        obs.eps.as_ref(),
        &truth.xstar,
        &x,
        None,
    )?
    .with_certificate(cert.clone());

    let (nuclear_error, vector_error) = if cfg.truth.rank == 1 {
        let xstar_vec: DVector<S> = truth.xstar.column(0).into_owned();
        let sigma_weights = match &cfg.ensemble.dist {
            EnsembleDist::SpectralGaussian { sigmas } => {
                Some(DVector::from_vec(sigmas.clone()))
            }
            _ => None,
        };
        let m = recovery_metrics(&x, &xstar_vec, sigma_weights.as_ref())?;
        (m.nuclear_error, m.vector_error)
    } else {
        (f64::NAN, f64::NAN)
    };

    let row = ReportRow {
        theorem: theorem.name().into(),
        seed: trial_index,
        d: ens.dim(),
        n: ens.len(),
        p: gp.p,
        field: S::FIELD,
        loss: cfg.loss.name().into(),
        delta,
        lambda: gp.lambda,
        lhs: report.lhs,
        rhs: report.rhs,
        slack: report.slack,
        grad_norm: cert.grad_norm,
        min_curvature: cert.min_curvature,
        nuclear_error,
        vector_error,
    };

    Ok(TrialRecord {
        grid_index: gp.index,
        trial: trial_index,
        sigma: gp.sigma,
        report: row,
        certified: cert.certified,
        iterations,
        clamped_count: obs.clamped.len(),
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
        slack_scale: slack_scale(&obs.y, &truth.xstar),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GridSummary {
    pub index: usize,
    pub p: usize,
    pub lambda: f64,
    pub sigma: f64,
    pub trials: usize,
    pub certified: usize,
    pub median_nuclear_error: f64,
    pub median_vector_error: f64,
    pub success_rate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SlopeFit {
    pub p: usize,
    /// Held-fixed second coordinate (λ for noise fits, σ for λ fits).
    pub fixed: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub method: String,
    pub loss: String,
    pub field: String,
    pub d: usize,
    pub n: usize,
    pub trials: usize,
    pub base_seed: u64,
    pub success_threshold_rel_nuclear: f64,
    pub effective_dim: Option<usize>,
    pub lambda_floor: Option<f64>,
    pub certified_rows: usize,
    pub total_rows: usize,
    /// Certified rows whose theorem slack fell below −1e-6·scale; the
    /// landscape claim demands this stays zero.
    pub slack_violations: usize,
    pub grid: Vec<GridSummary>,
    pub vector_error_vs_sigma: Vec<SlopeFit>,
    pub vector_error_vs_lambda: Vec<SlopeFit>,
    pub total_wall_time_ms: f64,
}

fn median(values: &mut Vec<f64>) -> f64 {
    values.retain(|v| v.is_finite());
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// Least-squares slope of ln(y) against ln(x).
pub fn loglog_slope(points: &[(f64, f64)]) -> Option<f64> {
    let clean: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if clean.len() < 2 {
        return None;
    }
    let n = clean.len() as f64;
    let mx = clean.iter().map(|(x, _)| x).sum::<f64>() / n;
    let my = clean.iter().map(|(_, y)| y).sum::<f64>() / n;
    let sxx: f64 = clean.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = clean.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

pub struct SweepOutput {
    pub rows: Vec<TrialRecord>,
    pub summary: SweepSummary,
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("AMPSCAPE_THREADS") {
        match v.trim().parse::<usize>() {
            Ok(k) if k >= 1 => builder = builder.num_threads(k),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "AMPSCAPE_THREADS must be a positive integer, got `{v}`"
                )))
            }
        }
    }
    builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))
}

/// Run the whole sweep, write `<prefix>.csv` and `<prefix>_summary.json`,
/// and return the rows and summary.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let grid = grid_points(cfg);
    let jobs: Vec<(GridPoint, u64)> = grid
        .iter()
        .flat_map(|gp| (0..cfg.trials as u64).map(move |t| (*gp, t)))
        .collect();

    let pool = thread_pool()?;
    let mut rows: Vec<TrialRecord> = pool.install(|| {
        jobs.par_iter()
            .map(|(gp, t)| run_trial(cfg, gp, *t))
            .collect::<Result<Vec<_>>>()
    })?;
    rows.sort_by_key(|r| (r.grid_index, r.trial));

    let threshold = cfg.success_rel_nuclear.unwrap_or(DEFAULT_SUCCESS_REL_NUCLEAR);
    let norm2 = cfg.truth.norm * cfg.truth.norm;

    let mut grid_summaries = Vec::with_capacity(grid.len());
    for gp in &grid {
        let in_cell: Vec<&TrialRecord> = rows.iter().filter(|r| r.grid_index == gp.index).collect();
        let mut nuc: Vec<f64> = in_cell.iter().map(|r| r.report.nuclear_error).collect();
        let mut vec_: Vec<f64> = in_cell.iter().map(|r| r.report.vector_error).collect();
        let success = in_cell
            .iter()
            .filter(|r| r.report.nuclear_error.is_finite() && r.report.nuclear_error <= threshold * norm2)
            .count();
        grid_summaries.push(GridSummary {
            index: gp.index,
            p: gp.p,
            lambda: gp.lambda,
            sigma: gp.sigma,
            trials: in_cell.len(),
            certified: in_cell.iter().filter(|r| r.certified).count(),
            median_nuclear_error: median(&mut nuc),
            median_vector_error: median(&mut vec_),
            success_rate: if in_cell.is_empty() { f64::NAN } else { success as f64 / in_cell.len() as f64 },
        });
    }

    // Log-log slopes of the median vector error along each axis.
    let mut sigma_fits = Vec::new();
    let mut lambda_fits = Vec::new();
    for &p in &cfg.p_grid {
        for &lambda in &cfg.lambda_grid {
            let pts: Vec<(f64, f64)> = grid_summaries
                .iter()
                .filter(|g| g.p == p && g.lambda == lambda && g.sigma > 0.0)
                .map(|g| (g.sigma, g.median_vector_error))
                .collect();
            if let Some(slope) = loglog_slope(&pts) {
                sigma_fits.push(SlopeFit { p, fixed: lambda, slope });
            }
        }
        for &sigma in &cfg.noise_points() {
            let pts: Vec<(f64, f64)> = grid_summaries
                .iter()
                .filter(|g| g.p == p && g.sigma == sigma && g.lambda > 0.0)
                .map(|g| (g.lambda, g.median_vector_error))
                .collect();
            if let Some(slope) = loglog_slope(&pts) {
                lambda_fits.push(SlopeFit { p, fixed: sigma, slope });
            }
        }
    }

    let slack_violations = rows
        .iter()
        .filter(|r| r.certified && r.report.slack < -1e-6 * r.slack_scale)
        .count();
    for r in rows.iter().filter(|r| r.certified && r.report.slack < -1e-6 * r.slack_scale) {
        eprintln!(
            "landscape violation: theorem={} trial={} grid={} slack={} scale={}",
            r.report.theorem, r.trial, r.grid_index, r.report.slack, r.slack_scale
        );
    }

    let summary = SweepSummary {
        method: cfg.method.name().into(),
        loss: cfg.loss.name().into(),
        field: cfg.ensemble.field.name().into(),
        d: cfg.ensemble.d,
        n: cfg.ensemble.n,
        trials: cfg.trials,
        base_seed: cfg.base_seed,
        success_threshold_rel_nuclear: threshold,
        effective_dim: cfg.effective_dim,
        lambda_floor: cfg.lambda_floor()?,
        certified_rows: rows.iter().filter(|r| r.certified).count(),
        total_rows: rows.len(),
        slack_violations,
        grid: grid_summaries,
        vector_error_vs_sigma: sigma_fits,
        vector_error_vs_lambda: lambda_fits,
        total_wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    };

    let csv_path = PathBuf::from(format!("{}.csv", cfg.output_path));
    let summary_path = PathBuf::from(format!("{}_summary.json", cfg.output_path));
    if let Some(parent) = csv_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut csv = TrialRecord::csv_header();
    csv.push('\n');
    for r in &rows {
        csv.push_str(&r.to_csv_row());
        csv.push('\n');
    }
    std::fs::write(&csv_path, csv)?;
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| Error::Format(format!("summary serialization: {e}")))?;
    std::fs::write(&summary_path, json + "\n")?;

    Ok(SweepOutput { rows, summary, csv_path, summary_path })
}
