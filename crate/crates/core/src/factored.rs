//! Minimize L_λ(X X*) over X ∈ F^{d×p} by gradient descent with
//! backtracking, escaping negative-curvature directions when the gradient
//! has converged, and certify second-order criticality of the result.

use crate::error::{Error, Result};
use crate::field::{re_dot, standard_matrix, FieldScalar, FieldTag};
use crate::linalg::extreme_eigs;
use crate::losses::{
    eval_terms, gradient_from_terms, hess_apply_from_terms, objective_value, LossFamily, LossSpec,
};
use crate::measurement::Ensemble;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Residual tolerance for the iterative smallest-eigenvalue estimate.
pub const CURVATURE_RESIDUAL_TOL: f64 = 1e-8;
/// Random restarts for the smallest-eigenvalue estimate.
pub const CURVATURE_RESTARTS: usize = 3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Optimization rank.
    pub p: usize,
    pub max_iters: usize,
    /// Gradient-norm target; `None` means 1e-8·scale with
    /// scale = (1/n)‖y‖² + λ·d.
    pub grad_tol: Option<f64>,
    /// Curvature tolerance; `None` means 1e-6·scale.
    pub curv_tol: Option<f64>,
    /// Largest (and first) backtracking step.
    pub init_step: f64,
    pub backtrack_shrink: f64,
    pub sufficient_decrease: f64,
    /// First trial length of a negative-curvature escape step.
    pub escape_radius: f64,
    pub escape_max_rounds: usize,
    pub seed: u64,
}

impl SolverConfig {
    pub fn new(p: usize, seed: u64) -> Self {
        SolverConfig {
            p,
            max_iters: 20_000,
            grad_tol: None,
            curv_tol: None,
            init_step: 1.0,
            backtrack_shrink: 0.5,
            sufficient_decrease: 1e-4,
            escape_radius: 1.0,
            escape_max_rounds: 20,
            seed,
        }
    }

    fn validate(&self, family: LossFamily, field: FieldTag) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidArgument("p must be >= 1".into()));
        }
        if field == FieldTag::Real {
            match family {
                LossFamily::Amplitude if self.p < 2 => {
                    return Err(Error::InvalidArgument(
                        "amplitude loss over the reals needs p >= 2".into(),
                    ));
                }
                LossFamily::Poisson if self.p < 3 => {
                    return Err(Error::InvalidArgument(
                        "poisson loss over the reals needs p >= 3".into(),
                    ));
                }
                _ => {}
            }
        }
        if !(self.backtrack_shrink > 0.0 && self.backtrack_shrink < 1.0) {
            return Err(Error::InvalidArgument("backtrack_shrink must lie in (0,1)".into()));
        }
        if self.init_step <= 0.0 || self.escape_radius <= 0.0 {
            return Err(Error::InvalidArgument("step parameters must be positive".into()));
        }
        Ok(())
    }
}

/// Tolerance scale (1/n)‖y‖² + λ·d used for the default certification
/// thresholds.
pub fn certification_scale(y: &DVector<f64>, lambda: f64, d: usize) -> f64 {
    y.norm_squared() / y.len().max(1) as f64 + lambda * d as f64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticalityCertificate {
    pub grad_norm: f64,
    /// Smallest value of the curvature form over unit directions (iterative
    /// estimate).
    pub min_curvature: f64,
    pub grad_tol: f64,
    pub curv_tol: f64,
    pub certified: bool,
}

impl CriticalityCertificate {
    fn assemble(grad_norm: f64, min_curvature: f64, grad_tol: f64, curv_tol: f64) -> Self {
        let certified = grad_norm <= grad_tol && min_curvature >= -curv_tol;
        CriticalityCertificate { grad_norm, min_curvature, grad_tol, curv_tol, certified }
    }
}

/// One accepted iteration of the solver.
#[derive(Debug, Clone)]
pub struct IterRecord {
    pub iter: usize,
    pub objective: f64,
    pub grad_norm: f64,
    pub step_size: f64,
}

#[derive(Debug, Clone)]
pub struct FactoredSolve<S: FieldScalar> {
    pub x: DMatrix<S>,
    pub trace: Vec<IterRecord>,
    pub cert: CriticalityCertificate,
    pub escapes: usize,
}

/// Default initialization: i.i.d. entries scaled so that
/// ‖X₀‖² = (Σ y_i²/n) / ((1/n) Σ tr A_i), matching the mean scale of the
/// data.
pub fn default_init<S: FieldScalar>(
    ens: &Ensemble<S>,
    y: &DVector<f64>,
    p: usize,
    rng: &mut ChaCha8Rng,
) -> DMatrix<S> {
    let mut x0 = standard_matrix::<S, _>(ens.dim(), p, rng);
    let trace_sum = ens.trace_sum();
    let target = if trace_sum > 0.0 { y.norm_squared() / trace_sum } else { 0.0 };
    let cur = x0.norm_squared();
    let scale = if cur > 0.0 { (target / cur).sqrt() } else { 0.0 };
    x0 *= S::from_real(scale);
    x0
}

/// Smallest curvature-form eigenvalue at X (with the loss terms already
/// evaluated there), together with the offending unit direction.
fn min_curvature_direction<S: FieldScalar>(
    spec: &LossSpec,
    ens: &Ensemble<S>,
    terms: &crate::losses::LossTerms<S>,
    x: &DMatrix<S>,
    rng: &mut ChaCha8Rng,
) -> (f64, DMatrix<S>) {
    let eigs = extreme_eigs(
        x.shape(),
        |v: &DMatrix<S>| hess_apply_from_terms(spec, ens, terms, x, v),
        None,
        CURVATURE_RESIDUAL_TOL,
        CURVATURE_RESTARTS,
        rng,
    );
    (eigs.min_value, eigs.min_vector)
}

/// Certify second-order criticality of X: gradient norm ‖2∇L_λ(XX*)X‖ and
/// an iterative smallest-eigenvalue estimate of the curvature form.
/// Deterministic given `seed`.
pub fn certify_factored<S: FieldScalar>(
    spec: &LossSpec,
    ens: &Ensemble<S>,
    y: &DVector<f64>,
    x: &DMatrix<S>,
    grad_tol: f64,
    curv_tol: f64,
    seed: u64,
) -> Result<CriticalityCertificate> {
    let terms = eval_terms(spec, ens, y, x)?;
    let grad = gradient_from_terms(spec, ens, &terms, x);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xce47);
    let (min_curv, _) = min_curvature_direction(spec, ens, &terms, x, &mut rng);
    Ok(CriticalityCertificate::assemble(grad.norm(), min_curv, grad_tol, curv_tol))
}

/// Gradient descent with backtracking line search and negative-curvature
/// escape. The objective never increases along accepted steps; the run ends
/// when the certificate holds or the budgets are exhausted (the latter
/// returns the best iterate with `certified = false`).
pub fn solve_factored<S: FieldScalar>(
    spec: &LossSpec,
    ens: &Ensemble<S>,
    y: &DVector<f64>,
    config: &SolverConfig,
    init: Option<DMatrix<S>>,
) -> Result<FactoredSolve<S>> {
    config.validate(spec.family, S::FIELD)?;
    if y.len() != ens.len() {
        return Err(Error::dim("solve_factored", ens.len(), y.len()));
    }
    let scale = certification_scale(y, spec.lambda, ens.dim());
    let grad_tol = config.grad_tol.unwrap_or(1e-8 * scale);
    let curv_tol = config.curv_tol.unwrap_or(1e-6 * scale);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut x = match init {
        Some(x0) => {
            if x0.nrows() != ens.dim() || x0.ncols() != config.p {
                return Err(Error::dim(
                    "solve_factored init",
                    format!("{}x{}", ens.dim(), config.p),
                    format!("{}x{}", x0.nrows(), x0.ncols()),
                ));
            }
            x0
        }
        None => default_init(ens, y, config.p, &mut rng),
    };

    let mut terms = eval_terms(spec, ens, y, &x)?;
    let mut trace: Vec<IterRecord> = Vec::new();
    let mut step = config.init_step;
    let mut escapes = 0usize;
    let mut cert = None;
    // Previous (x, grad) pair for the Barzilai-Borwein trial step.
    let mut prev: Option<(DMatrix<S>, DMatrix<S>)> = None;

    for iter in 0..config.max_iters {
        let grad = gradient_from_terms(spec, ens, &terms, &x);
        let gn = grad.norm();
        trace.push(IterRecord { iter, objective: terms.value, grad_norm: gn, step_size: step });

        if gn <= grad_tol {
            let (min_curv, dir) = min_curvature_direction(spec, ens, &terms, &x, &mut rng);
            if min_curv >= -curv_tol {
                cert = Some(CriticalityCertificate::assemble(gn, min_curv, grad_tol, curv_tol));
                break;
            }
            if escapes >= config.escape_max_rounds {
                cert = Some(CriticalityCertificate::assemble(gn, min_curv, grad_tol, curv_tol));
                break;
            }
            escapes += 1;
            match escape_step(spec, ens, y, &x, terms.value, &dir, min_curv, config) {
                Some((xn, tn)) => {
                    x = xn;
                    terms = eval_terms(spec, ens, y, &x)?;
                    debug_assert!(terms.value <= trace.last().unwrap().objective + 1e-12);
                    step = tn.max(1e-12);
                    prev = None;
                    continue;
                }
                None => {
                    // No decrease along the offending direction at any sampled
                    // length; report the honest (uncertified) curvature.
                    cert = Some(CriticalityCertificate::assemble(gn, min_curv, grad_tol, curv_tol));
                    break;
                }
            }
        }

        // Trial step: Barzilai-Borwein length when the secant pair is
        // informative, else the previous accepted step doubled.
        let mut t = match &prev {
            Some((xp, gp)) => {
                let dx = &x - xp;
                let dg = &grad - gp;
                let den = re_dot(&dx, &dg);
                if den > 0.0 {
                    (dx.norm_squared() / den).clamp(1e-16, 1e12)
                } else {
                    (step * 2.0).min(1e12)
                }
            }
            None => config.init_step,
        };

        // Backtracking along the negative gradient; first step satisfying
        // sufficient decrease is accepted.
        let mut accepted = false;
        while t > 1e-18 {
            let cand = &x - &grad * S::from_real(t);
            match objective_value(spec, ens, y, &cand) {
                Ok(v) if v <= terms.value - config.sufficient_decrease * t * gn * gn => {
                    prev = Some((x.clone(), grad.clone()));
                    x = cand;
                    terms = eval_terms(spec, ens, y, &x)?;
                    accepted = true;
                    break;
                }
                _ => t *= config.backtrack_shrink,
            }
        }
        if !accepted {
            // Gradient direction yields no decrease at machine scale: treat
            // as converged and fall through to certification.
            let (min_curv, _) = min_curvature_direction(spec, ens, &terms, &x, &mut rng);
            cert = Some(CriticalityCertificate::assemble(gn, min_curv, grad_tol, curv_tol));
            break;
        }
        step = t;
    }

    let cert = match cert {
        Some(c) => c,
        None => {
            // Budget exhausted: certify whatever we hold.
            let grad = gradient_from_terms(spec, ens, &terms, &x);
            let (min_curv, _) = min_curvature_direction(spec, ens, &terms, &x, &mut rng);
            CriticalityCertificate::assemble(grad.norm(), min_curv, grad_tol, curv_tol)
        }
    };

    Ok(FactoredSolve { x, trace, cert, escapes })
}

/// Line search along a negative-curvature direction, trying both signs.
fn escape_step<S: FieldScalar>(
    spec: &LossSpec,
    ens: &Ensemble<S>,
    y: &DVector<f64>,
    x: &DMatrix<S>,
    value: f64,
    dir: &DMatrix<S>,
    min_curv: f64,
    config: &SolverConfig,
) -> Option<(DMatrix<S>, f64)> {
    let mut t = config.escape_radius;
    while t > 1e-14 {
        for sign in [1.0, -1.0] {
            let cand = x + dir * S::from_real(sign * t);
            if let Ok(v) = objective_value(spec, ens, y, &cand) {
                let want = value - config.sufficient_decrease * 0.5 * min_curv.abs() * t * t;
                if v <= want {
                    return Some((cand, t));
                }
            }
        }
        t *= config.backtrack_shrink;
    }
    None
}

/// Brute-force curvature check used by tests and the soundness criterion:
/// the curvature form at `x` along `count` random unit directions.
pub fn random_direction_curvatures<S: FieldScalar>(
    spec: &LossSpec,
    ens: &Ensemble<S>,
    y: &DVector<f64>,
    x: &DMatrix<S>,
    count: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let terms = eval_terms(spec, ens, y, x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut v = standard_matrix::<S, _>(x.nrows(), x.ncols(), &mut rng);
        let nv = v.norm();
        if nv == 0.0 {
            continue;
        }
        v /= S::from_real(nv);
        out.push(crate::losses::hess_quadform_from_terms(spec, ens, &terms, x, &v));
    }
    Ok(out)
}
