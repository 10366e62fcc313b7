//! Dense and matrix-free linear algebra helpers.
//!
//! The matrix-free pieces treat F^{r×c} as a *real* vector space with inner
//! product Re⟨A, B⟩ (dimension c_F·r·c). Curvature operators arising from
//! the factored and sphere-product objectives are self-adjoint in this inner
//! product but only real-linear over C, so the Lanczos recurrence below runs
//! with real coefficients while the iterates stay in the native scalar type.

use crate::field::{re_dot, FieldScalar};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

/// Extreme Ritz values of a self-adjoint operator, found by Lanczos with
/// full reorthogonalization and random restarts.
#[derive(Debug, Clone)]
pub struct ExtremeEigs<S: FieldScalar> {
    pub min_value: f64,
    pub min_vector: DMatrix<S>,
    pub max_value: f64,
    /// ‖H v − θ v‖ for the returned minimal pair.
    pub min_residual: f64,
    pub converged: bool,
}

/// Lanczos for the smallest (and largest) eigenvalue of a self-adjoint
/// operator given by `apply`, over matrices of shape `shape`.
///
/// `project`, when given, restricts the iteration to a linear subspace
/// (e.g. a tangent space); it is applied to every generated vector so the
/// Krylov basis cannot drift out of the subspace.
///
/// Runs `restarts` independent starts and keeps the smallest Ritz value
/// whose residual passed `tol`·max(1, |θ|); `converged` reports whether the
/// winner met the tolerance.
pub fn extreme_eigs<S: FieldScalar, R: Rng + ?Sized>(
    shape: (usize, usize),
    mut apply: impl FnMut(&DMatrix<S>) -> DMatrix<S>,
    project: Option<&dyn Fn(&mut DMatrix<S>)>,
    tol: f64,
    restarts: usize,
    rng: &mut R,
) -> ExtremeEigs<S> {
    let (rows, cols) = shape;
    let real_dim = rows * cols * S::FIELD.c_f();
    let max_steps = real_dim.clamp(1, 160);

    let mut best: Option<ExtremeEigs<S>> = None;

    for _ in 0..restarts.max(1) {
        let mut v0 = crate::field::standard_matrix::<S, R>(rows, cols, rng);
        if let Some(p) = project {
            p(&mut v0);
        }
        let n0 = v0.norm();
        if n0 < 1e-300 {
            continue;
        }
        v0 /= S::from_real(n0);

        let result = lanczos_run(&mut apply, project, v0, max_steps, tol);
        best = Some(match best {
            None => result,
            Some(b) => merge_eigs(b, result),
        });
    }

    best.unwrap_or(ExtremeEigs {
        min_value: 0.0,
        min_vector: DMatrix::zeros(rows, cols),
        max_value: 0.0,
        min_residual: 0.0,
        converged: true,
    })
}

fn merge_eigs<S: FieldScalar>(a: ExtremeEigs<S>, b: ExtremeEigs<S>) -> ExtremeEigs<S> {
    let max_value = a.max_value.max(b.max_value);
    let (mut keep, other) = if a.min_value <= b.min_value { (a, b) } else { (b, a) };
    keep.max_value = max_value;
    keep.converged = keep.converged || other.converged && other.min_value >= keep.min_value;
    keep
}

fn lanczos_run<S: FieldScalar>(
    apply: &mut impl FnMut(&DMatrix<S>) -> DMatrix<S>,
    project: Option<&dyn Fn(&mut DMatrix<S>)>,
    v0: DMatrix<S>,
    max_steps: usize,
    tol: f64,
) -> ExtremeEigs<S> {
    let mut basis: Vec<DMatrix<S>> = vec![v0];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();

    let mut result: Option<(f64, f64, usize, Vec<f64>)> = None; // (min, max, steps, ritz vec coeffs)

    for step in 0..max_steps {
        let v = basis.last().unwrap().clone();
        let mut w = apply(&v);
        if let Some(p) = project {
            p(&mut w);
        }
        let alpha = re_dot(&w, &v);
        alphas.push(alpha);

        w -= v * S::from_real(alpha);
        if let Some(prev_beta) = betas.last() {
            let prev = &basis[basis.len() - 2];
            w -= prev * S::from_real(*prev_beta);
        }
        // Full reorthogonalization keeps the Ritz values trustworthy at the
        // small dimensions we target.
        for u in &basis {
            let c = re_dot(&w, u);
            w -= u * S::from_real(c);
        }

        let beta = w.norm();

        // Check convergence of the extreme Ritz pairs every few steps.
        let check = step == max_steps - 1 || beta < 1e-13 || step % 4 == 3;
        if check {
            let (theta_min, theta_max, coeffs) = tridiag_extremes(&alphas, &betas);
            let scale = theta_min.abs().max(theta_max.abs()).max(1.0);
            // Standard Lanczos residual estimate: |beta_k * (last Ritz coeff)|.
            let resid = beta * coeffs.last().map(|c| c.abs()).unwrap_or(1.0);
            result = Some((theta_min, theta_max, alphas.len(), coeffs));
            if resid <= tol * scale || beta < 1e-13 {
                break;
            }
        }

        if beta < 1e-13 {
            break;
        }
        betas.push(beta);
        basis.push(w / S::from_real(beta));
    }

    let (theta_min, theta_max, steps, coeffs) = result.unwrap_or_else(|| {
        let (a, b, c) = tridiag_extremes(&alphas, &betas);
        (a, b, alphas.len(), c)
    });

    // Assemble the Ritz vector for the smallest pair.
    let (rows, cols) = basis[0].shape();
    let mut vec_min = DMatrix::<S>::zeros(rows, cols);
    for (c, u) in coeffs.iter().zip(basis.iter().take(steps)) {
        vec_min += u * S::from_real(*c);
    }
    if let Some(p) = project {
        p(&mut vec_min);
    }
    let nv = vec_min.norm();
    if nv > 1e-300 {
        vec_min /= S::from_real(nv);
    }
    let hv = apply(&vec_min);
    let mut residual_vec = hv - &vec_min * S::from_real(theta_min);
    if let Some(p) = project {
        p(&mut residual_vec);
    }
    let min_residual = residual_vec.norm();
    let scale = theta_min.abs().max(theta_max.abs()).max(1.0);

    ExtremeEigs {
        min_value: theta_min,
        min_vector: vec_min,
        max_value: theta_max,
        min_residual,
        converged: min_residual <= tol * scale * 10.0,
    }
}

/// Eigen-extremes of the (small, real symmetric) Lanczos tridiagonal matrix,
/// plus the coefficient vector of the smallest eigenpair.
fn tridiag_extremes(alphas: &[f64], betas: &[f64]) -> (f64, f64, Vec<f64>) {
    let k = alphas.len();
    if k == 0 {
        return (0.0, 0.0, vec![]);
    }
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let mut idx_min = 0;
    let mut idx_max = 0;
    for i in 0..k {
        if eig.eigenvalues[i] < eig.eigenvalues[idx_min] {
            idx_min = i;
        }
        if eig.eigenvalues[i] > eig.eigenvalues[idx_max] {
            idx_max = i;
        }
    }
    let coeffs: Vec<f64> = eig.eigenvectors.column(idx_min).iter().copied().collect();
    (eig.eigenvalues[idx_min], eig.eigenvalues[idx_max], coeffs)
}

/// Operator norm of a Hermitian matrix by the iterative routine above
/// (largest eigenvalue magnitude), to relative accuracy `tol`.
pub fn hermitian_op_norm_iterative<S: FieldScalar, R: Rng + ?Sized>(
    m: &DMatrix<S>,
    tol: f64,
    rng: &mut R,
) -> f64 {
    let d = m.nrows();
    if d == 0 {
        return 0.0;
    }
    let eigs = extreme_eigs(
        (d, 1),
        |v: &DMatrix<S>| m * v,
        None,
        tol,
        3,
        rng,
    );
    eigs.min_value.abs().max(eigs.max_value.abs())
}

/// Nuclear norm of a Hermitian matrix: sum of absolute eigenvalues.
pub fn hermitian_nuclear_norm<S: FieldScalar>(m: &DMatrix<S>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    eig.eigenvalues.iter().map(|x| x.abs()).sum()
}

/// Smallest eigenvalue of a Hermitian matrix (dense).
pub fn hermitian_min_eig<S: FieldScalar>(m: &DMatrix<S>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Dense Hermitian operator norm (test oracle counterpart of the iterative
/// routine).
pub fn hermitian_op_norm_dense<S: FieldScalar>(m: &DMatrix<S>) -> f64 {
    let eig = SymmetricEigen::new(m.clone());
    eig.eigenvalues.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// Leading singular triple of a d×p matrix: (sigma, u, v) with X v = sigma u.
/// Computed from the smaller of the two Gram matrices for stability.
pub fn leading_singular_triple<S: FieldScalar>(
    x: &DMatrix<S>,
) -> (f64, DVector<S>, DVector<S>) {
    let (d, p) = x.shape();
    if p <= d {
        let gram = x.adjoint() * x; // p×p Hermitian PSD
        let eig = SymmetricEigen::new(gram);
        let mut idx = 0;
        for i in 0..p {
            if eig.eigenvalues[i] > eig.eigenvalues[idx] {
                idx = i;
            }
        }
        let sigma = eig.eigenvalues[idx].max(0.0).sqrt();
        let v: DVector<S> = eig.eigenvectors.column(idx).into_owned();
        let xv = x * &v;
        let u = if sigma > 1e-300 {
            &xv / S::from_real(sigma)
        } else {
            let mut e = DVector::<S>::zeros(d);
            e[0] = S::from_real(1.0);
            e
        };
        (sigma, u, v)
    } else {
        let gram = x * x.adjoint(); // d×d
        let eig = SymmetricEigen::new(gram);
        let mut idx = 0;
        for i in 0..d {
            if eig.eigenvalues[i] > eig.eigenvalues[idx] {
                idx = i;
            }
        }
        let sigma = eig.eigenvalues[idx].max(0.0).sqrt();
        let u: DVector<S> = eig.eigenvectors.column(idx).into_owned();
        let xhu = x.adjoint() * &u;
        let v = if sigma > 1e-300 {
            &xhu / S::from_real(sigma)
        } else {
            let mut e = DVector::<S>::zeros(p);
            e[0] = S::from_real(1.0);
            e
        };
        (sigma, u, v)
    }
}

/// Minimum-norm solution of the Hermitian PSD system G R = C via
/// eigendecomposition with relative cutoff.
pub fn psd_pinv_solve<S: FieldScalar>(
    g: &DMatrix<S>,
    c: &DMatrix<S>,
    rel_cutoff: f64,
) -> DMatrix<S> {
    let eig = SymmetricEigen::new(g.clone());
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cutoff = rel_cutoff * lmax.max(1e-300);
    // R = V diag(1/l) V^* C over eigenvalues above cutoff
    let vhc = eig.eigenvectors.adjoint() * c;
    let mut scaled = vhc;
    for (i, l) in eig.eigenvalues.iter().enumerate() {
        let inv = if *l > cutoff { 1.0 / *l } else { 0.0 };
        for j in 0..scaled.ncols() {
            scaled[(i, j)] *= S::from_real(inv);
        }
    }
    &eig.eigenvectors * scaled
}
