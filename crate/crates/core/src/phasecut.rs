//! The sphere-product reformulation of the amplitude problem: eliminate X by
//! ridge regression, leaving min ⟨M_λ, U U*⟩ over matrices U with unit-norm
//! rows, where M_λ = λ·diag(y)(nλ I_n + F F*)⁻¹ diag(y) (pseudoinverse limit
//! at λ = 0). Certified points are Riemannian second-order critical points
//! on the product of spheres; X is recovered as R_λ U.

use crate::error::{Error, Result};
use crate::factored::{
    certification_scale, CriticalityCertificate, IterRecord, SolverConfig,
    CURVATURE_RESIDUAL_TOL, CURVATURE_RESTARTS,
};
use crate::field::{re_dot, standard_matrix, FieldScalar, FieldTag};
use crate::linalg::{extreme_eigs, hermitian_min_eig, hermitian_op_norm_dense};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Singular-value cutoff, relative to σ_max, for the λ = 0 pseudoinverse.
pub const PINV_REL_CUTOFF: f64 = 1e-12;

/// The assembled sphere-product problem.
#[derive(Debug, Clone)]
pub struct PhaseCutProblem<S: FieldScalar> {
    /// M_λ, Hermitian PSD n×n.
    pub mlam: DMatrix<S>,
    /// The ridge map R_λ = (nλ I_d + F*F)⁻¹ F* diag(y), d×n.
    pub ridge: DMatrix<S>,
    pub f: DMatrix<S>,
    pub y: DVector<f64>,
    pub lambda: f64,
}

/// A feasible point: every row of U has unit norm (within 1e-12).
#[derive(Debug, Clone)]
pub struct SphereProductPoint<S: FieldScalar> {
    pub u: DMatrix<S>,
}

impl<S: FieldScalar> SphereProductPoint<S> {
    pub fn new(u: DMatrix<S>) -> Result<Self> {
        for i in 0..u.nrows() {
            if (u.row(i).norm() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "row {i} of U has norm {} (must be 1)",
                    u.row(i).norm()
                )));
            }
        }
        Ok(SphereProductPoint { u })
    }

    /// Renormalize every row (the retraction); rows of zero norm are left
    /// untouched by convention.
    pub fn retract(mut u: DMatrix<S>) -> Self {
        for i in 0..u.nrows() {
            let norm = u.row(i).norm();
            if norm > 0.0 {
                for j in 0..u.ncols() {
                    u[(i, j)] /= S::from_real(norm);
                }
            }
        }
        SphereProductPoint { u }
    }
}

/// Project V onto the tangent space at U: per row, remove the component
/// along that row.
pub fn tangent_project<S: FieldScalar>(u: &DMatrix<S>, v: &mut DMatrix<S>) {
    for i in 0..u.nrows() {
        let mut inner = 0.0;
        for j in 0..u.ncols() {
            inner += (u[(i, j)].conjugate() * v[(i, j)]).real();
        }
        for j in 0..u.ncols() {
            v[(i, j)] -= u[(i, j)] * S::from_real(inner);
        }
    }
}

/// Build M_λ and the ridge map from (F, y, λ).
pub fn build_phasecut<S: FieldScalar>(
    f: DMatrix<S>,
    y: DVector<f64>,
    lambda: f64,
) -> Result<PhaseCutProblem<S>> {
    let (n, d) = f.shape();
    if y.len() != n {
        return Err(Error::dim("build_phasecut", n, y.len()));
    }
    if y.iter().any(|v| *v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument("y must be finite and nonnegative".into()));
    }
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }

    let dy = DMatrix::<S>::from_fn(n, n, |i, j| {
        if i == j { S::from_real(y[i]) } else { S::from_real(0.0) }
    });

    // M_λ is assembled in Gram form C*C so positive semidefiniteness is
    // structural, not a cancellation accident.
    let (mlam, ridge) = if lambda > 0.0 {
        let nl = S::from_real(n as f64 * lambda);
        // ridge: (nλ I_d + F*F)⁻¹ F* diag(y)
        let kd = DMatrix::<S>::identity(d, d) * nl + f.adjoint() * &f;
        let chol_d = nalgebra::Cholesky::new(kd)
            .ok_or_else(|| Error::InvalidArgument("nλI + F*F is not positive definite".into()))?;
        let ridge = chol_d.solve(&(f.adjoint() * &dy));
        // M_λ = λ diag(y)(nλ I_n + F F*)⁻¹ diag(y) = λ (L⁻¹ diag(y))*(L⁻¹ diag(y))
        let kn = DMatrix::<S>::identity(n, n) * nl + &f * f.adjoint();
        let chol_n = nalgebra::Cholesky::new(kn)
            .ok_or_else(|| Error::InvalidArgument("nλI + FF* is not positive definite".into()))?;
        let c = chol_n
            .l()
            .solve_lower_triangular(&dy)
            .ok_or_else(|| Error::InvalidArgument("singular Cholesky factor".into()))?;
        let m = c.adjoint() * &c * S::from_real(lambda);
        (m, ridge)
    } else {
        // λ = 0: M₀ = (1/n)(P⊥ diag(y))*(P⊥ diag(y)) with P⊥ = I − F F†,
        // ridge = F† diag(y); singular values below the relative cutoff are
        // treated as zero.
        let svd = f.clone().svd(true, true);
        let u = svd.u.as_ref().expect("svd with u");
        let vt = svd.v_t.as_ref().expect("svd with v_t");
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let cutoff = PINV_REL_CUTOFF * smax;
        let kept: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&k| svd.singular_values[k] > cutoff)
            .collect();
        let mut ridge = DMatrix::<S>::zeros(d, n);
        let mut proj_dy = DMatrix::<S>::zeros(n, n); // F F† diag(y)
        for &k in &kept {
            let uk = u.column(k);
            let vk = vt.row(k).adjoint();
            let uk_dy = uk.adjoint() * &dy;
            proj_dy += uk * &uk_dy;
            ridge += &vk * uk_dy * S::from_real(1.0 / svd.singular_values[k]);
        }
        let c = &dy - proj_dy;
        let m = c.adjoint() * &c * S::from_real(1.0 / n as f64);
        (m, ridge)
    };

    // Symmetrize and validate the PSD invariant.
    let mlam = (&mlam + mlam.adjoint()) * S::from_real(0.5);
    let op = hermitian_op_norm_dense(&mlam);
    if op > 0.0 && hermitian_min_eig(&mlam) < -1e-10 * op {
        return Err(Error::InvalidArgument("M_lambda failed the PSD check".into()));
    }

    Ok(PhaseCutProblem { mlam, ridge, f, y, lambda })
}

impl<S: FieldScalar> PhaseCutProblem<S> {
    pub fn n(&self) -> usize {
        self.f.nrows()
    }

    pub fn d(&self) -> usize {
        self.f.ncols()
    }

    /// ⟨M_λ, U U*⟩.
    pub fn objective(&self, u: &DMatrix<S>) -> f64 {
        re_dot(&(&self.mlam * u), u)
    }

    /// X = R_λ U.
    pub fn ridge_recover(&self, u: &SphereProductPoint<S>) -> DMatrix<S> {
        &self.ridge * &u.u
    }

    /// |⟨M_λ W, W⟩ − ((1/n)‖diag(y)W‖² − (1/n)‖F R_λ W‖² − λ‖R_λ W‖²)|,
    /// the residual of the exact elimination identity (zero for all W).
    pub fn quad_identity_residual(&self, w: &DMatrix<S>) -> Result<f64> {
        if w.nrows() != self.n() {
            return Err(Error::dim("quad_identity_residual", self.n(), w.nrows()));
        }
        let n = self.n() as f64;
        let lhs = re_dot(&(&self.mlam * w), w);
        let dyw = scale_rows(w, &self.y);
        let rw = &self.ridge * w;
        let frw = &self.f * &rw;
        let rhs = dyw.norm_squared() / n - frw.norm_squared() / n - self.lambda * rw.norm_squared();
        Ok((lhs - rhs).abs())
    }
}

/// Rows of W scaled by the entries of y (diag(y)·W).
fn scale_rows<S: FieldScalar>(w: &DMatrix<S>, y: &DVector<f64>) -> DMatrix<S> {
    let mut out = w.clone();
    for i in 0..w.nrows() {
        for j in 0..w.ncols() {
            out[(i, j)] *= S::from_real(y[i]);
        }
    }
    out
}

/// S(U) = M − Re(ddiag(M U U*)).
pub fn s_matrix<S: FieldScalar>(m: &DMatrix<S>, u: &SphereProductPoint<S>) -> DMatrix<S> {
    let mu = m * &u.u;
    let mut s = m.clone();
    for i in 0..m.nrows() {
        let mut diag = 0.0;
        for j in 0..u.u.ncols() {
            diag += (u.u[(i, j)].conjugate() * mu[(i, j)]).real();
        }
        s[(i, i)] -= S::from_real(diag);
    }
    s
}

/// The Riemannian gradient 2·P_tangent(S(U)U) (S(U)U is already tangent; the
/// projection guards against accumulated round-off).
pub fn riemannian_grad<S: FieldScalar>(m: &DMatrix<S>, u: &SphereProductPoint<S>) -> DMatrix<S> {
    let mut g = m * &u.u;
    tangent_project(&u.u, &mut g);
    g * S::from_real(2.0)
}

/// Left side of the second-order inequality at a critical point:
/// ⟨S(U), (c_F p − 2)·zz* + Re(D_z* U U* D_z) ∘ (U U*)⟩.
pub fn socp_inequality_value<S: FieldScalar>(
    s: &DMatrix<S>,
    u: &SphereProductPoint<S>,
    z: &DVector<S>,
) -> f64 {
    let n = u.u.nrows();
    let p = u.u.ncols();
    let cfp = (S::FIELD.c_f() * p) as f64;
    let gram = &u.u * u.u.adjoint(); // U U*
    let mut t = DMatrix::<S>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let zz = z[i] * z[j].conjugate();
            let a = (z[i].conjugate() * gram[(i, j)] * z[j]).real();
            t[(i, j)] = zz * S::from_real(cfp - 2.0) + gram[(i, j)] * S::from_real(a);
        }
    }
    re_dot(s, &t)
}

#[derive(Debug, Clone)]
pub struct PhaseCutSolve<S: FieldScalar> {
    pub u: SphereProductPoint<S>,
    pub trace: Vec<IterRecord>,
    pub cert: CriticalityCertificate,
    pub escapes: usize,
}

/// One cyclic pass of exact row-wise minimization: with the other rows
/// fixed, the optimal row i of min ⟨M, UU*⟩ is −w/‖w‖ for
/// w = (MU)_i − M_ii U_i. Monotone, and its fixed points are exactly the
/// first-order critical points (S(U)U = 0). Returns the new objective.
fn row_minimization_sweep<S: FieldScalar>(m: &DMatrix<S>, u: &mut DMatrix<S>) -> f64 {
    let n = u.nrows();
    let p = u.ncols();
    let mut mu = m * &*u;
    for i in 0..n {
        let mii = m[(i, i)].real();
        let mut w = vec![S::from_real(0.0); p];
        let mut wn2 = 0.0;
        for j in 0..p {
            let wj = mu[(i, j)] - u[(i, j)] * S::from_real(mii);
            wn2 += wj.modulus_squared();
            w[j] = wj;
        }
        let wn = wn2.sqrt();
        if wn <= 1e-300 {
            continue; // row already stationary; any unit row is optimal
        }
        let mut delta = vec![S::from_real(0.0); p];
        for j in 0..p {
            let new = w[j] * S::from_real(-1.0 / wn);
            delta[j] = new - u[(i, j)];
            u[(i, j)] = new;
        }
        // rank-one update of MU from the changed row
        for k in 0..n {
            let mki = m[(k, i)];
            for j in 0..p {
                mu[(k, j)] += mki * delta[j];
            }
        }
    }
    // objective from the maintained product (recomputed fresh next sweep)
    let mut obj = 0.0;
    for i in 0..n {
        for j in 0..p {
            obj += (u[(i, j)].conjugate() * mu[(i, j)]).real();
        }
    }
    obj
}

/// Certify Riemannian second-order criticality of U for min ⟨M, UU*⟩:
/// gradient norm ‖P_tangent(S(U)U)‖ and an iterative smallest-eigenvalue
/// estimate of V ↦ P_tangent(S(U)V) over the tangent space. Deterministic
/// given `seed`. (For p = 1 over the reals the tangent space is trivial and
/// both quantities are 0.)
pub fn certify_phasecut<S: FieldScalar>(
    m: &DMatrix<S>,
    u: &SphereProductPoint<S>,
    grad_tol: f64,
    curv_tol: f64,
    seed: u64,
) -> CriticalityCertificate {
    let s = s_matrix(m, u);
    let mut g = &s * &u.u;
    tangent_project(&u.u, &mut g);
    let grad_norm = g.norm();

    let min_curv = if S::FIELD.c_f() * u.u.ncols() <= 1 {
        0.0
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9c47);
        let uu = u.u.clone();
        let project = move |v: &mut DMatrix<S>| tangent_project(&uu, v);
        let eigs = extreme_eigs(
            u.u.shape(),
            |v: &DMatrix<S>| {
                let mut sv = &s * v;
                tangent_project(&u.u, &mut sv);
                sv
            },
            Some(&project),
            CURVATURE_RESIDUAL_TOL,
            CURVATURE_RESTARTS,
            &mut rng,
        );
        eigs.min_value
    };

    let certified = grad_norm <= grad_tol && min_curv >= -curv_tol;
    CriticalityCertificate { grad_norm, min_curvature: min_curv, grad_tol, curv_tol, certified }
}

/// Minimize ⟨M_λ, U U*⟩ over the product of spheres by projected gradient
/// descent with row-renormalization retraction, backtracking, and tangent
/// negative-curvature escape. The discrete case p = 1 over the reals is
/// handled by greedy single-row sign flips.
pub fn solve_phasecut<S: FieldScalar>(
    prob: &PhaseCutProblem<S>,
    config: &SolverConfig,
) -> Result<PhaseCutSolve<S>> {
    let p = config.p;
    if p == 0 {
        return Err(Error::InvalidArgument("p must be >= 1".into()));
    }
    if S::FIELD == FieldTag::Real && p < 2 {
        return solve_signs(prob, config);
    }

    let n = prob.n();
    let scale = certification_scale(&prob.y, prob.lambda, prob.d());
    let grad_tol = config.grad_tol.unwrap_or(1e-8 * scale);
    let curv_tol = config.curv_tol.unwrap_or(1e-6 * scale);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut u = SphereProductPoint::retract(standard_matrix::<S, _>(n, p, &mut rng));
    let m = &prob.mlam;
    let mut value = prob.objective(&u.u);
    let mut trace: Vec<IterRecord> = Vec::new();
    let mut escapes = 0usize;
    let mut cert = None;
    // Previous iterate for the inertial extrapolation, and the number of
    // iterations since the last restart.
    let mut u_prev: Option<DMatrix<S>> = None;
    let mut momentum_age = 0usize;

    for iter in 0..config.max_iters {
        let grad = riemannian_grad(m, &u);
        let gn = grad.norm();
        trace.push(IterRecord { iter, objective: value, grad_norm: gn, step_size: 1.0 });

        if gn <= grad_tol {
            let c = certify_phasecut(m, &u, grad_tol, curv_tol, config.seed ^ iter as u64);
            if c.certified || escapes >= config.escape_max_rounds {
                cert = Some(c);
                break;
            }
            escapes += 1;
            // Recompute the offending direction for the escape line search.
            let s = s_matrix(m, &u);
            let uu = u.u.clone();
            let project = move |v: &mut DMatrix<S>| tangent_project(&uu, v);
            let eigs = extreme_eigs(
                u.u.shape(),
                |v: &DMatrix<S>| {
                    let mut sv = &s * v;
                    tangent_project(&u.u, &mut sv);
                    sv
                },
                Some(&project),
                CURVATURE_RESIDUAL_TOL,
                CURVATURE_RESTARTS,
                &mut rng,
            );
            match escape_step_sphere(prob, &u, value, &eigs.min_vector, eigs.min_value, config) {
                Some((un, vn, _)) => {
                    u = un;
                    value = vn;
                    u_prev = None;
                    momentum_age = 0;
                    continue;
                }
                None => {
                    cert = Some(c);
                    break;
                }
            }
        }

        // Row-minimization sweep from an inertial extrapolation of the last
        // two iterates; when the extrapolated sweep is not a strict
        // improvement, restart from the plain sweep (monotone either way).
        let mut cand = match &u_prev {
            Some(up) => {
                let beta = momentum_age as f64 / (momentum_age as f64 + 3.0);
                SphereProductPoint::retract(&u.u + (&u.u - up) * S::from_real(beta)).u
            }
            None => u.u.clone(),
        };
        let cand_value = row_minimization_sweep(m, &mut cand);
        if cand_value < value {
            u_prev = Some(std::mem::replace(&mut u.u, cand));
            value = cand_value;
            momentum_age += 1;
        } else {
            let mut plain = u.u.clone();
            let plain_value = row_minimization_sweep(m, &mut plain);
            momentum_age = 0;
            if plain_value < value {
                u_prev = Some(std::mem::replace(&mut u.u, plain));
                value = plain_value;
            } else if gn > grad_tol {
                // Fall back to a backtracked projected-gradient step before
                // declaring a stall.
                let mut t = config.init_step;
                let mut moved = false;
                while t > 1e-18 {
                    let g_cand = SphereProductPoint::retract(&u.u - &grad * S::from_real(t));
                    let v = prob.objective(&g_cand.u);
                    if v <= value - config.sufficient_decrease * t * gn * gn {
                        u_prev = Some(std::mem::replace(&mut u.u, g_cand.u));
                        value = v;
                        moved = true;
                        break;
                    }
                    t *= config.backtrack_shrink;
                }
                if !moved {
                    cert = Some(certify_phasecut(m, &u, grad_tol, curv_tol, config.seed));
                    break;
                }
            }
        }
    }

    let cert = cert.unwrap_or_else(|| certify_phasecut(m, &u, grad_tol, curv_tol, config.seed));
    Ok(PhaseCutSolve { u, trace, cert, escapes })
}

fn escape_step_sphere<S: FieldScalar>(
    prob: &PhaseCutProblem<S>,
    u: &SphereProductPoint<S>,
    value: f64,
    dir: &DMatrix<S>,
    min_curv: f64,
    config: &SolverConfig,
) -> Option<(SphereProductPoint<S>, f64, f64)> {
    let mut t = config.escape_radius;
    while t > 1e-14 {
        for sign in [1.0, -1.0] {
            let cand = SphereProductPoint::retract(&u.u + dir * S::from_real(sign * t));
            let v = prob.objective(&cand.u);
            if v <= value - config.sufficient_decrease * 0.5 * min_curv.abs() * t * t {
                return Some((cand, v, t));
            }
        }
        t *= config.backtrack_shrink;
    }
    None
}

/// Greedy single-row sign flips for the discrete case U ∈ {±1}^n
/// (p = 1, F = R): flip the first row that strictly decreases the
/// objective, until none does.
fn solve_signs<S: FieldScalar>(
    prob: &PhaseCutProblem<S>,
    config: &SolverConfig,
) -> Result<PhaseCutSolve<S>> {
    let n = prob.n();
    let scale = certification_scale(&prob.y, prob.lambda, prob.d());
    let grad_tol = config.grad_tol.unwrap_or(1e-8 * scale);
    let curv_tol = config.curv_tol.unwrap_or(1e-6 * scale);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut u = SphereProductPoint::retract(standard_matrix::<S, _>(n, 1, &mut rng));
    let m = &prob.mlam;
    let mut value = prob.objective(&u.u);
    let mut trace = vec![IterRecord { iter: 0, objective: value, grad_norm: 0.0, step_size: 0.0 }];
    let flip_tol = 1e-14 * scale.max(1.0);

    'outer: for iter in 1..=config.max_iters {
        let mu = m * &u.u;
        for i in 0..n {
            // Flipping row i changes the objective by −4·u_i·(Mu)_i + 4·M_ii.
            let ui = u.u[(i, 0)];
            let delta = -4.0 * (ui.conjugate() * mu[(i, 0)]).real() + 4.0 * m[(i, i)].real();
            if delta < -flip_tol {
                u.u[(i, 0)] = -ui;
                value += delta;
                trace.push(IterRecord { iter, objective: value, grad_norm: 0.0, step_size: 1.0 });
                continue 'outer;
            }
        }
        break;
    }
    // Re-evaluate exactly (the incremental deltas accumulate round-off).
    let value = prob.objective(&u.u);
    if let Some(last) = trace.last_mut() {
        last.objective = value;
    }
    let cert = certify_phasecut(m, &u, grad_tol, curv_tol, config.seed);
    Ok(PhaseCutSolve { u, trace, cert, escapes: 0 })
}

/// Ground-truth directions U_* of F X_*: rows of F X_* normalized, with rows
/// of zero norm set to the first canonical basis vector.
pub fn ground_truth_directions<S: FieldScalar>(
    f: &DMatrix<S>,
    xstar: &DMatrix<S>,
) -> DMatrix<S> {
    let fx = f * xstar;
    let mut u = fx.clone();
    for i in 0..u.nrows() {
        let norm = u.row(i).norm();
        if norm > 0.0 {
            for j in 0..u.ncols() {
                u[(i, j)] /= S::from_real(norm);
            }
        } else {
            for j in 0..u.ncols() {
                u[(i, j)] = S::from_real(if j == 0 { 1.0 } else { 0.0 });
            }
        }
    }
    u
}
