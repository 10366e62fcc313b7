//! The scalar loss family ℓ(b, υ), its δ-smoothing, and the resulting
//! objective L_λ(X X*) with gradient and curvature form in the factor X.
//!
//! Conventions: b is the lifted measurement ⟨A_i, X X*⟩ (so the quartic loss
//! is ½(b − υ²)², the amplitude loss (√b − υ)², the Poisson loss
//! b − υ² log b), and smoothing replaces ℓ(b, υ) by ℓ(b + δ, √(υ² + δ)).
//! Derivatives are always with respect to b. At b = 0 with δ = 0 the
//! amplitude and Poisson losses have ℓ' = −∞ whenever υ > 0; that is
//! reported as a `NonsmoothPoint` error by the matrix-level operations and
//! as explicit infinities by `derivatives`.

use crate::error::{Error, Result};
use crate::field::{re_dot, FieldScalar};
use crate::measurement::{Ensemble, EnsembleForm};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossFamily {
    Quartic,
    Amplitude,
    Poisson,
}

impl LossFamily {
    pub fn name(self) -> &'static str {
        match self {
            LossFamily::Quartic => "quartic",
            LossFamily::Amplitude => "amplitude",
            LossFamily::Poisson => "poisson",
        }
    }

    pub fn parse(s: &str) -> Option<LossFamily> {
        match s.trim().to_ascii_lowercase().as_str() {
            "quartic" => Some(LossFamily::Quartic),
            "amplitude" => Some(LossFamily::Amplitude),
            "poisson" => Some(LossFamily::Poisson),
            _ => None,
        }
    }
}

impl std::fmt::Display for LossFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Re Σ_k conj(b_{ik}) a_{ik} for row i of two equally shaped matrices.
fn re_dot_row<S: FieldScalar>(a: &DMatrix<S>, b: &DMatrix<S>, i: usize) -> f64 {
    (0..a.ncols())
        .map(|k| (b[(i, k)].conjugate() * a[(i, k)]).real())
        .sum()
}

/// Loss family plus smoothing δ ≥ 0 and trace regularization λ ≥ 0.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossSpec {
    pub family: LossFamily,
    pub delta: f64,
    pub lambda: f64,
}

impl LossSpec {
    pub fn new(family: LossFamily, delta: f64, lambda: f64) -> Result<Self> {
        if delta < 0.0 || !delta.is_finite() {
            return Err(Error::InvalidArgument(format!("delta must be >= 0, got {delta}")));
        }
        if lambda < 0.0 || !lambda.is_finite() {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
        }
        Ok(LossSpec { family, delta, lambda })
    }

    /// Default smoothing: δ = 1e-10·(median y)² for the nonsmooth families,
    /// δ = 0 for the quartic loss.
    pub fn default_delta(family: LossFamily, y: &DVector<f64>) -> f64 {
        match family {
            LossFamily::Quartic => 0.0,
            LossFamily::Amplitude | LossFamily::Poisson => {
                let mut v: Vec<f64> = y.iter().copied().collect();
                v.sort_by(f64::total_cmp);
                let med = if v.is_empty() { 0.0 } else { v[v.len() / 2] };
                1e-10 * med * med
            }
        }
    }

    pub fn with_default_delta(family: LossFamily, lambda: f64, y: &DVector<f64>) -> Result<Self> {
        Self::new(family, Self::default_delta(family, y), lambda)
    }

    /// Value and first two b-derivatives of the δ-smoothed loss at (b, υ).
    ///
    /// Infinite one-sided limits at b = 0, δ = 0 are returned as IEEE
    /// infinities rather than errors; matrix-level callers translate them.
    pub fn derivatives(&self, b: f64, upsilon: f64) -> Result<(f64, f64, f64)> {
        if b < 0.0 || !b.is_finite() {
            return Err(Error::InvalidArgument(format!("b must be >= 0, got {b}")));
        }
        if upsilon < 0.0 || !upsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("upsilon must be >= 0, got {upsilon}")));
        }
        let bb = b + self.delta;
        let uu2 = upsilon * upsilon + self.delta;
        Ok(match self.family {
            LossFamily::Quartic => {
                let r = bb - uu2;
                (0.5 * r * r, r, 1.0)
            }
            LossFamily::Amplitude => {
                let uu = uu2.sqrt();
                if bb == 0.0 {
                    // (√b − υ)² at b = 0 is υ²; ℓ'(0, υ) = lim_{b↓0} 1 − υ/√b.
                    if uu == 0.0 {
                        (0.0, 1.0, 0.0)
                    } else {
                        (uu2, f64::NEG_INFINITY, f64::INFINITY)
                    }
                } else {
                    let sb = bb.sqrt();
                    let r = sb - uu;
                    (r * r, 1.0 - uu / sb, uu / (2.0 * bb * sb))
                }
            }
            LossFamily::Poisson => {
                if bb == 0.0 {
                    if uu2 == 0.0 {
                        (0.0, 1.0, 0.0)
                    } else {
                        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY)
                    }
                } else {
                    (bb - uu2 * bb.ln(), 1.0 - uu2 / bb, uu2 / (bb * bb))
                }
            }
        })
    }
}

/// Per-measurement quantities at a point X, shared by the objective,
/// gradient, and curvature evaluations.
pub struct LossTerms<S: FieldScalar> {
    /// b_i = ⟨A_i, X X*⟩.
    pub b: DVector<f64>,
    /// ℓ'_i (finite at every index or the evaluation errored).
    pub lp: DVector<f64>,
    /// ℓ''_i with indices excluded from the curvature sum set to zero.
    pub lpp: DVector<f64>,
    /// (1/n) Σ ℓ_i + λ‖X‖².
    pub value: f64,
    /// F·X for rank-one ensembles.
    pub gx: Option<DMatrix<S>>,
    /// A_i·X for explicit-PSD ensembles.
    pub ax: Option<Vec<DMatrix<S>>>,
}

/// Evaluate all per-measurement terms of L_λ at X.
///
/// Errors with `NonsmoothPoint` when δ = 0 and some active b_i = 0 makes
/// the derivative −∞ (amplitude, Poisson with y_i > 0). Indices with
/// b_i = 0 are excluded from the ℓ'' sum, matching the second-order
/// characterization of critical points at δ = 0.
pub fn eval_terms<S: FieldScalar>(
    spec: &LossSpec,
    ens: &Ensemble<S>,
    y: &DVector<f64>,
    x: &DMatrix<S>,
) -> Result<LossTerms<S>> {
    let n = ens.len();
    if y.len() != n {
        return Err(Error::dim("eval_terms", n, y.len()));
    }
    let (b, gx, ax) = match ens.form() {
        EnsembleForm::Rank1(f) => {
            let g = f * x;
            let b = DVector::from_fn(n, |i, _| g.row(i).norm_squared());
            (b, Some(g), None)
        }
        EnsembleForm::Psd(mats) => {
            let ax: Vec<DMatrix<S>> = mats.iter().map(|a| a * x).collect();
            let b = DVector::from_fn(n, |i, _| re_dot(&ax[i], x).max(0.0));
            (b, None, Some(ax))
        }
    };

    let mut lp = DVector::zeros(n);
    let mut lpp = DVector::zeros(n);
    let mut sum = 0.0;
    for i in 0..n {
        let (v, d1, d2) = spec.derivatives(b[i], y[i])?;
        if !d1.is_finite() {
            return Err(Error::NonsmoothPoint { index: i });
        }
        sum += v;
        lp[i] = d1;
        lpp[i] = if spec.delta == 0.0 && b[i] <= 0.0 { 0.0 } else { d2 };
    }
    let value = sum / n as f64 + spec.lambda * x.norm_squared();
    Ok(LossTerms { b, lp, lpp, value, gx, ax })
}

/// Objective value L_λ(X X*) only.
pub fn objective_value<S: FieldScalar>(
    spec: &LossSpec,
    ens: &Ensemble<S>,
    y: &DVector<f64>,
    x: &DMatrix<S>,
) -> Result<f64> {
    Ok(eval_terms(spec, ens, y, x)?.value)
}

/// Euclidean gradient of X ↦ L_λ(X X*): grad = 2(∇L_λ(X X*))X with
/// ∇L_λ(Z) = (1/n) Σ ℓ'_i A_i + λ I.
pub fn gradient_from_terms<S: FieldScalar>(
    spec: &LossSpec,
    ens: &Ensemble<S>,
    terms: &LossTerms<S>,
    x: &DMatrix<S>,
) -> DMatrix<S> {
    let n = ens.len() as f64;
    let mut grad = match ens.form() {
        EnsembleForm::Rank1(f) => {
            let g = terms.gx.as_ref().expect("rank1 terms carry F·X");
            let mut scaled = g.clone();
            for i in 0..ens.len() {
                let w = S::from_real(terms.lp[i] / n);
                for j in 0..scaled.ncols() {
                    scaled[(i, j)] = g[(i, j)] * w;
                }
            }
            f.adjoint() * scaled
        }
        EnsembleForm::Psd(_) => {
            let ax = terms.ax.as_ref().expect("psd terms carry A_i·X");
            let mut acc = DMatrix::<S>::zeros(x.nrows(), x.ncols());
            for (i, axi) in ax.iter().enumerate() {
                acc += axi * S::from_real(terms.lp[i] / n);
            }
            acc
        }
    };
    grad += x * S::from_real(spec.lambda);
    grad * S::from_real(2.0)
}

/// (value, gradient) of X ↦ L_λ(X X*).
pub fn objective_grad<S: FieldScalar>(
    spec: &LossSpec,
    ens: &Ensemble<S>,
    y: &DVector<f64>,
    x: &DMatrix<S>,
) -> Result<(f64, DMatrix<S>)> {
    let terms = eval_terms(spec, ens, y, x)?;
    let grad = gradient_from_terms(spec, ens, &terms, x);
    Ok((terms.value, grad))
}

/// The curvature form
/// Q(Ẋ) = 2⟨∇L_λ(XX*), ẊẊ*⟩ + (1/n) Σ_{b_i>0} ℓ''_i ⟨A_i, XẊ* + ẊX*⟩²,
/// i.e. the second directional derivative of t ↦ L_λ((X+tẊ)(X+tẊ)*) at 0
/// wherever the objective is twice differentiable along Ẋ.
pub fn hess_quadform<S: FieldScalar>(
    spec: &LossSpec,
    ens: &Ensemble<S>,
    y: &DVector<f64>,
    x: &DMatrix<S>,
    xdot: &DMatrix<S>,
) -> Result<f64> {
    if xdot.shape() != x.shape() {
        return Err(Error::dim("hess_quadform", format!("{}x{}", x.nrows(), x.ncols()), format!("{}x{}", xdot.nrows(), xdot.ncols())));
    }
    let terms = eval_terms(spec, ens, y, x)?;
    Ok(hess_quadform_from_terms(spec, ens, &terms, x, xdot))
}

pub fn hess_quadform_from_terms<S: FieldScalar>(
    spec: &LossSpec,
    ens: &Ensemble<S>,
    terms: &LossTerms<S>,
    _x: &DMatrix<S>,
    xdot: &DMatrix<S>,
) -> f64 {
    let n = ens.len() as f64;
    let mut first = 0.0; // (1/n) Σ ℓ'_i ⟨A_i, ẊẊ*⟩
    let mut second = 0.0; // (1/n) Σ ℓ''_i c_i²,  c_i = ⟨A_i, XẊ* + ẊX*⟩
    match ens.form() {
        EnsembleForm::Rank1(f) => {
            let g = terms.gx.as_ref().expect("rank1 terms carry F·X");
            let w = f * xdot;
            for i in 0..ens.len() {
                first += terms.lp[i] * w.row(i).norm_squared();
                if terms.lpp[i] != 0.0 {
                    let c = 2.0 * re_dot_row(g, &w, i);
                    second += terms.lpp[i] * c * c;
                }
            }
        }
        EnsembleForm::Psd(_) => {
            let ax = terms.ax.as_ref().expect("psd terms carry A_i·X");
            let mats = match ens.form() {
                EnsembleForm::Psd(m) => m,
                _ => unreachable!(),
            };
            for i in 0..ens.len() {
                let axdot = &mats[i] * xdot;
                first += terms.lp[i] * re_dot(&axdot, xdot);
                if terms.lpp[i] != 0.0 {
                    let c = 2.0 * re_dot(&ax[i], xdot);
                    second += terms.lpp[i] * c * c;
                }
            }
        }
    }
    2.0 * (first / n + spec.lambda * xdot.norm_squared()) + second / n
}

/// Hessian-vector product: the self-adjoint map H with
/// Re⟨H[Ẋ], Ẋ⟩ = hess_quadform(Ẋ), used by the iterative curvature
/// certification.
pub fn hess_apply_from_terms<S: FieldScalar>(
    spec: &LossSpec,
    ens: &Ensemble<S>,
    terms: &LossTerms<S>,
    _x: &DMatrix<S>,
    v: &DMatrix<S>,
) -> DMatrix<S> {
    let n = ens.len() as f64;
    let mut out;
    match ens.form() {
        EnsembleForm::Rank1(f) => {
            let g = terms.gx.as_ref().expect("rank1 terms carry F·X");
            let w = f * v;
            // rows scaled by 2ℓ'_i/n plus curvature coupling 2ℓ''_i c_i/n · G_i
            let mut rows = DMatrix::<S>::zeros(w.nrows(), w.ncols());
            for i in 0..ens.len() {
                let mut coeff_g = 0.0;
                if terms.lpp[i] != 0.0 {
                    let c = 2.0 * re_dot_row(g, &w, i);
                    coeff_g = 2.0 * terms.lpp[i] * c / n;
                }
                let coeff_w = 2.0 * terms.lp[i] / n;
                for j in 0..w.ncols() {
                    rows[(i, j)] = w[(i, j)] * S::from_real(coeff_w) + g[(i, j)] * S::from_real(coeff_g);
                }
            }
            out = f.adjoint() * rows;
        }
        EnsembleForm::Psd(_) => {
            let ax = terms.ax.as_ref().expect("psd terms carry A_i·X");
            let mats = match ens.form() {
                EnsembleForm::Psd(m) => m,
                _ => unreachable!(),
            };
            out = DMatrix::<S>::zeros(v.nrows(), v.ncols());
            for i in 0..ens.len() {
                let axdot = &mats[i] * v;
                out += axdot * S::from_real(2.0 * terms.lp[i] / n);
                if terms.lpp[i] != 0.0 {
                    let c = 2.0 * re_dot(&ax[i], v);
                    out += &ax[i] * S::from_real(2.0 * terms.lpp[i] * c / n);
                }
            }
        }
    }
    out += v * S::from_real(2.0 * spec.lambda);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{random_unitary, standard_matrix};
    use crate::measurement::{gen_ensemble, AnyEnsemble, EnsembleDist, EnsembleSpec};
    use crate::field::FieldTag;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quartic_hand_values() {
        let spec = LossSpec::new(LossFamily::Quartic, 0.0, 0.0).unwrap();
        let (v, d1, d2) = spec.derivatives(3.0, 1.0).unwrap();
        assert_eq!((v, d1, d2), (2.0, 2.0, 1.0));
    }

    #[test]
    fn amplitude_hand_values() {
        let spec = LossSpec::new(LossFamily::Amplitude, 0.0, 0.0).unwrap();
        let (v, d1, d2) = spec.derivatives(4.0, 1.0).unwrap();
        assert_eq!((v, d1, d2), (1.0, 0.5, 0.0625));
        // nonsmooth marker at b = 0 with υ > 0, documented limit at υ = 0
        let (v0, d10, _) = spec.derivatives(0.0, 2.0).unwrap();
        assert_eq!(v0, 4.0);
        assert_eq!(d10, f64::NEG_INFINITY);
        let (_, d1z, _) = spec.derivatives(0.0, 0.0).unwrap();
        assert_eq!(d1z, 1.0);
    }

    #[test]
    fn poisson_hand_values() {
        let spec = LossSpec::new(LossFamily::Poisson, 0.0, 0.0).unwrap();
        let (_, d1, _) = spec.derivatives(2.0, 2f64.sqrt()).unwrap();
        assert_abs_diff_eq!(d1, 0.0, epsilon = 1e-15);
        let (v0, d10, _) = spec.derivatives(0.0, 1.0).unwrap();
        assert_eq!(v0, f64::INFINITY);
        assert_eq!(d10, f64::NEG_INFINITY);
        let (_, d1z, _) = spec.derivatives(0.0, 0.0).unwrap();
        assert_eq!(d1z, 1.0);
    }

    #[test]
    fn negative_arguments_rejected() {
        let spec = LossSpec::new(LossFamily::Quartic, 0.0, 0.0).unwrap();
        assert!(spec.derivatives(-1.0, 0.0).is_err());
        assert!(spec.derivatives(1.0, -0.5).is_err());
        assert!(LossSpec::new(LossFamily::Quartic, -1e-3, 0.0).is_err());
        assert!(LossSpec::new(LossFamily::Quartic, 0.0, -1.0).is_err());
    }

    #[test]
    fn smoothed_amplitude_matches_finite_difference() {
        let spec = LossSpec::new(LossFamily::Amplitude, 1e-6, 0.0).unwrap();
        let b = 4.0;
        let ups = 1.3;
        let h = 1e-5;
        let (_, d1, _) = spec.derivatives(b, ups).unwrap();
        let (vp, _, _) = spec.derivatives(b + h, ups).unwrap();
        let (vm, _, _) = spec.derivatives(b - h, ups).unwrap();
        let fd = (vp - vm) / (2.0 * h);
        assert!((d1 - fd).abs() <= 1e-6 * d1.abs().max(1.0), "d1={d1} fd={fd}");
    }

    /// The three b·ℓ'' identities that drive the landscape bounds.
    #[test]
    fn loss_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        use rand::Rng;
        for _ in 0..2000 {
            let b: f64 = 0.01 + 9.99 * rng.random::<f64>();
            let u: f64 = 3.0 * rng.random::<f64>();
            let q = LossSpec::new(LossFamily::Quartic, 0.0, 0.0).unwrap();
            let (_, d1, d2) = q.derivatives(b, u).unwrap();
            assert!((b * d2 - (d1 + u * u)).abs() <= 1e-12);
            let a = LossSpec::new(LossFamily::Amplitude, 0.0, 0.0).unwrap();
            let (_, d1, d2) = a.derivatives(b, u).unwrap();
            assert!((2.0 * b * d2 - (1.0 - d1)).abs() <= 1e-12);
            let p = LossSpec::new(LossFamily::Poisson, 0.0, 0.0).unwrap();
            let (_, d1, d2) = p.derivatives(b, u).unwrap();
            assert!((b * d2 - (1.0 - d1)).abs() <= 1e-12);
        }
    }

    #[test]
    fn objective_grad_hand_scalar_cases() {
        // Quartic, d=p=1, A=(1), y=(1), λ=0, x=2: value ½(4−1)² = 4.5, grad 2·3·2 = 12.
        let ens = Ensemble::from_rank1(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let y = DVector::from_element(1, 1.0);
        let spec = LossSpec::new(LossFamily::Quartic, 0.0, 0.0).unwrap();
        let x = DMatrix::from_element(1, 1, 2.0);
        let (v, g) = objective_grad(&spec, &ens, &y, &x).unwrap();
        assert_abs_diff_eq!(v, 4.5, epsilon = 1e-15);
        assert_abs_diff_eq!(g[(0, 0)], 12.0, epsilon = 1e-15);

        // Amplitude, x=4, y=1: value (4−1)² = 9, grad 2·(3/4)·4 = 6.
        let spec = LossSpec::new(LossFamily::Amplitude, 0.0, 0.0).unwrap();
        let x = DMatrix::from_element(1, 1, 4.0);
        let (v, g) = objective_grad(&spec, &ens, &y, &x).unwrap();
        assert_abs_diff_eq!(v, 9.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[(0, 0)], 6.0, epsilon = 1e-15);
    }

    #[test]
    fn hess_quadform_hand_scalar_case() {
        // f(x) = ½(x²−1)², f''(2) = 2(3·4−1) = 22.
        let ens = Ensemble::from_rank1(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let y = DVector::from_element(1, 1.0);
        let spec = LossSpec::new(LossFamily::Quartic, 0.0, 0.0).unwrap();
        let x = DMatrix::from_element(1, 1, 2.0);
        let xdot = DMatrix::from_element(1, 1, 1.0);
        let q = hess_quadform(&spec, &ens, &y, &x, &xdot).unwrap();
        assert_abs_diff_eq!(q, 22.0, epsilon = 1e-12);
        let zero = DMatrix::from_element(1, 1, 0.0);
        assert_eq!(hess_quadform(&spec, &ens, &y, &x, &zero).unwrap(), 0.0);
    }

    #[test]
    fn nonsmooth_point_detected() {
        let ens = Ensemble::from_rank1(DMatrix::from_element(1, 1, 1.0)).unwrap();
        let y = DVector::from_element(1, 1.0);
        let spec = LossSpec::new(LossFamily::Amplitude, 0.0, 0.0).unwrap();
        let x = DMatrix::from_element(1, 1, 0.0);
        match objective_grad(&spec, &ens, &y, &x) {
            Err(Error::NonsmoothPoint { index: 0 }) => {}
            other => panic!("expected NonsmoothPoint, got {other:?}"),
        }
    }

    #[test]
    fn objective_gauge_invariant_and_d2_nonneg() {
        let spec_ens = EnsembleSpec { d: 5, n: 18, field: FieldTag::Complex, dist: EnsembleDist::ComplexGaussianIid };
        let AnyEnsemble::Complex(ens) = gen_ensemble(&spec_ens, 4).unwrap() else { panic!() };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let xstar = standard_matrix::<num_complex::Complex64, _>(5, 1, &mut rng);
        let y = ens.alpha(&xstar).unwrap();
        for family in [LossFamily::Quartic, LossFamily::Amplitude, LossFamily::Poisson] {
            let spec = LossSpec::new(family, 1e-8, 0.3).unwrap();
            let x = standard_matrix::<num_complex::Complex64, _>(5, 3, &mut rng);
            let q = random_unitary::<num_complex::Complex64, _>(3, &mut rng);
            let (v1, _) = objective_grad(&spec, &ens, &y, &x).unwrap();
            let (v2, _) = objective_grad(&spec, &ens, &y, &(&x * q)).unwrap();
            assert!((v1 - v2).abs() <= 1e-10 * v1.abs().max(1.0));
            let terms = eval_terms(&spec, &ens, &y, &x).unwrap();
            assert!(terms.lpp.iter().all(|v| *v >= 0.0), "convexity in b");
        }
    }

    #[test]
    fn hess_quadform_is_bilinear_consistent() {
        let spec_ens = EnsembleSpec { d: 4, n: 15, field: FieldTag::Real, dist: EnsembleDist::GaussianIid };
        let AnyEnsemble::Real(ens) = gen_ensemble(&spec_ens, 21).unwrap() else { panic!() };
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let xstar = standard_matrix::<f64, _>(4, 1, &mut rng);
        let y = ens.alpha(&xstar).unwrap();
        let spec = LossSpec::new(LossFamily::Amplitude, 1e-8, 0.1).unwrap();
        let x = standard_matrix::<f64, _>(4, 2, &mut rng);
        let v1 = standard_matrix::<f64, _>(4, 2, &mut rng);
        let v2 = standard_matrix::<f64, _>(4, 2, &mut rng);
        let q = |v: &DMatrix<f64>| hess_quadform(&spec, &ens, &y, &x, v).unwrap();
        let lhs = q(&(&v1 + &v2)) + q(&(&v1 - &v2));
        let rhs = 2.0 * q(&v1) + 2.0 * q(&v2);
        assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
    }

    #[test]
    fn hess_apply_matches_quadform() {
        let spec_ens = EnsembleSpec { d: 4, n: 12, field: FieldTag::Complex, dist: EnsembleDist::ComplexGaussianIid };
        let AnyEnsemble::Complex(ens) = gen_ensemble(&spec_ens, 31).unwrap() else { panic!() };
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let xstar = standard_matrix::<num_complex::Complex64, _>(4, 1, &mut rng);
        let y = ens.alpha(&xstar).unwrap();
        for family in [LossFamily::Quartic, LossFamily::Amplitude, LossFamily::Poisson] {
            let spec = LossSpec::new(family, 1e-9, 0.05).unwrap();
            let x = standard_matrix::<num_complex::Complex64, _>(4, 2, &mut rng);
            let terms = eval_terms(&spec, &ens, &y, &x).unwrap();
            for _ in 0..4 {
                let v = standard_matrix::<num_complex::Complex64, _>(4, 2, &mut rng);
                let q = hess_quadform_from_terms(&spec, &ens, &terms, &x, &v);
                let hv = hess_apply_from_terms(&spec, &ens, &terms, &x, &v);
                let q2 = re_dot(&hv, &v);
                assert!((q - q2).abs() <= 1e-10 * q.abs().max(1.0), "q={q} q2={q2}");
            }
        }
    }
}
