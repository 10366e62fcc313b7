//! Measurement ensembles, the α/β maps, and noisy observations.
//!
//! An ensemble is the collection of PSD matrices A_1, …, A_n sensing the
//! lifted variable X X*: y_i ≈ ⟨A_i, X_* X_*^*⟩^{1/2}. In the rank-one case
//! A_i = f_i f_i^* the rows f_i^* are kept as a dense n×d matrix F and
//! α(X) = |F X| is the vector of row norms.

use crate::error::{Error, Result};
use crate::field::{re_dot, standard_matrix, FieldScalar, FieldTag};
use crate::linalg::{hermitian_min_eig, hermitian_op_norm_dense, hermitian_op_norm_iterative};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Relative tolerance below which a numerically negative ⟨A_i, XX*⟩ is
/// treated as exactly zero.
pub const INNER_CLAMP_REL_TOL: f64 = 1e-12;

/// How the measurement matrices are stored.
#[derive(Debug, Clone)]
pub enum EnsembleForm<S: FieldScalar> {
    /// A_i = f_i f_i^*, rows f_i^* stacked into F (n×d).
    Rank1(DMatrix<S>),
    /// Explicit Hermitian PSD matrices.
    Psd(Vec<DMatrix<S>>),
}

/// A fixed set of n PSD measurement matrices over F^d.
#[derive(Debug, Clone)]
pub struct Ensemble<S: FieldScalar> {
    d: usize,
    n: usize,
    form: EnsembleForm<S>,
}

impl<S: FieldScalar> Ensemble<S> {
    /// Rank-one ensemble from the stacked measurement matrix F (n×d).
    /// Zero rows are rejected (A_i must be nonzero).
    pub fn from_rank1(f: DMatrix<S>) -> Result<Self> {
        let (n, d) = f.shape();
        if n == 0 || d == 0 {
            return Err(Error::InvalidArgument(format!(
                "ensemble needs n, d >= 1, got n={n}, d={d}"
            )));
        }
        for i in 0..n {
            if f.row(i).norm() == 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "measurement vector {i} is zero"
                )));
            }
        }
        Ok(Ensemble { d, n, form: EnsembleForm::Rank1(f) })
    }

    /// Ensemble of explicit PSD matrices. Validates Hermitian symmetry,
    /// nonzeroness, and near-positive-semidefiniteness
    /// (λ_min ≥ −1e-10·‖A_i‖_op).
    pub fn from_psd(mats: Vec<DMatrix<S>>) -> Result<Self> {
        if mats.is_empty() {
            return Err(Error::InvalidArgument("ensemble needs n >= 1".into()));
        }
        let d = mats[0].nrows();
        if d == 0 {
            return Err(Error::InvalidArgument("ensemble needs d >= 1".into()));
        }
        for (i, a) in mats.iter().enumerate() {
            if a.shape() != (d, d) {
                return Err(Error::dim("from_psd", format!("{d}x{d}"), format!("{}x{}", a.nrows(), a.ncols())));
            }
            let norm = a.norm();
            if norm == 0.0 {
                return Err(Error::InvalidArgument(format!("measurement matrix {i} is zero")));
            }
            if (a - a.adjoint()).norm() > 1e-12 * norm {
                return Err(Error::InvalidArgument(format!("measurement matrix {i} is not Hermitian")));
            }
            let op = hermitian_op_norm_dense(a);
            if hermitian_min_eig(a) < -1e-10 * op {
                return Err(Error::InvalidArgument(format!(
                    "measurement matrix {i} is not PSD"
                )));
            }
        }
        let n = mats.len();
        Ok(Ensemble { d, n, form: EnsembleForm::Psd(mats) })
    }

    pub fn field(&self) -> FieldTag {
        S::FIELD
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn form(&self) -> &EnsembleForm<S> {
        &self.form
    }

    /// The stacked measurement matrix F, for rank-one ensembles.
    pub fn rank1_matrix(&self) -> Option<&DMatrix<S>> {
        match &self.form {
            EnsembleForm::Rank1(f) => Some(f),
            EnsembleForm::Psd(_) => None,
        }
    }

    /// The i-th measurement matrix, materialized.
    pub fn matrix(&self, i: usize) -> DMatrix<S> {
        match &self.form {
            EnsembleForm::Rank1(f) => {
                // A_i = f_i f_i^*, where f_i^* is row i of F.
                let row = f.row(i);
                let fi = row.adjoint(); // column vector f_i
                &fi * fi.adjoint()
            }
            EnsembleForm::Psd(mats) => mats[i].clone(),
        }
    }

    /// (1/n) Σ_i A_i, materialized densely.
    pub fn mean_matrix(&self) -> DMatrix<S> {
        let scale = S::from_real(1.0 / self.n as f64);
        match &self.form {
            EnsembleForm::Rank1(f) => f.adjoint() * f * scale,
            EnsembleForm::Psd(mats) => {
                let mut sum = DMatrix::<S>::zeros(self.d, self.d);
                for a in mats {
                    sum += a;
                }
                sum * scale
            }
        }
    }

    /// Σ_i tr A_i.
    pub fn trace_sum(&self) -> f64 {
        match &self.form {
            EnsembleForm::Rank1(f) => f.norm_squared(),
            EnsembleForm::Psd(mats) => mats
                .iter()
                .map(|a| (0..self.d).map(|j| a[(j, j)].real()).sum::<f64>())
                .sum(),
        }
    }

    fn check_x(&self, x: &DMatrix<S>, context: &'static str) -> Result<()> {
        if x.nrows() != self.d || x.ncols() == 0 {
            return Err(Error::dim(context, format!("{}xp, p>=1", self.d), format!("{}x{}", x.nrows(), x.ncols())));
        }
        Ok(())
    }

    /// β(X): the vector of inner products ⟨A_i, X X*⟩, clamped at zero.
    pub fn beta(&self, x: &DMatrix<S>) -> Result<DVector<f64>> {
        self.check_x(x, "beta")?;
        let out = match &self.form {
            EnsembleForm::Rank1(f) => {
                let g = f * x; // n×p
                DVector::from_fn(self.n, |i, _| g.row(i).norm_squared())
            }
            EnsembleForm::Psd(mats) => {
                let xn2 = x.norm_squared();
                DVector::from_fn(self.n, |i, _| {
                    let a = &mats[i];
                    let ax = a * x;
                    let b = re_dot(&ax, x);
                    if b < 0.0 {
                        debug_assert!(
                            b >= -INNER_CLAMP_REL_TOL * a.norm() * xn2,
                            "inner product {b} below clamp tolerance"
                        );
                        0.0
                    } else {
                        b
                    }
                })
            }
        };
        Ok(out)
    }

    /// α(X) = β(X)^{1/2} elementwise.
    pub fn alpha(&self, x: &DMatrix<S>) -> Result<DVector<f64>> {
        let mut b = self.beta(x)?;
        b.apply(|v| *v = v.sqrt());
        Ok(b)
    }

    /// Operator-norm deviation ‖(1/n) Σ_i A_i − target‖_op via the iterative
    /// extreme-eigenvalue routine (relative accuracy 1e-8).
    pub fn empirical_cov_deviation(&self, target: &DMatrix<S>) -> Result<f64> {
        if target.shape() != (self.d, self.d) {
            return Err(Error::dim("empirical_cov_deviation", format!("{0}x{0}", self.d), format!("{}x{}", target.nrows(), target.ncols())));
        }
        if (target - target.adjoint()).norm() > 1e-12 * target.norm().max(1.0) {
            return Err(Error::InvalidArgument("target must be Hermitian".into()));
        }
        let m = self.mean_matrix() - target;
        let mut rng = ChaCha8Rng::seed_from_u64(0x05ee_dc01);
        Ok(hermitian_op_norm_iterative(&m, 1e-9, &mut rng))
    }
}

/// Ground-truth factor X_* (d×r).
#[derive(Debug, Clone)]
pub struct GroundTruth<S: FieldScalar> {
    pub xstar: DMatrix<S>,
}

impl<S: FieldScalar> GroundTruth<S> {
    pub fn new(xstar: DMatrix<S>) -> Result<Self> {
        if xstar.ncols() < 1 {
            return Err(Error::InvalidArgument("ground truth needs rank >= 1".into()));
        }
        if xstar.iter().any(|v| !v.real().is_finite() || !v.im_part().is_finite()) {
            return Err(Error::InvalidArgument("ground truth has non-finite entries".into()));
        }
        Ok(GroundTruth { xstar })
    }

    pub fn rank(&self) -> usize {
        self.xstar.ncols()
    }
}

/// Observed data: nonnegative y, optionally the raw (pre-clamp) noise and
/// the ground truth that generated it.
#[derive(Debug, Clone)]
pub struct Observation<S: FieldScalar> {
    pub y: DVector<f64>,
    pub eps: Option<DVector<f64>>,
    pub truth: Option<GroundTruth<S>>,
    /// Indices where α(X_*) + ε was negative and y was clamped to zero.
    pub clamped: Vec<usize>,
}

impl<S: FieldScalar> Observation<S> {
    pub fn from_y(y: DVector<f64>) -> Result<Self> {
        if y.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidArgument("observations must be finite and nonnegative".into()));
        }
        Ok(Observation { y, eps: None, truth: None, clamped: Vec::new() })
    }

    /// ξ = y² − β(X_*), the quadratic-model noise, when the truth is known.
    pub fn xi(&self, ens: &Ensemble<S>) -> Result<Option<DVector<f64>>> {
        match &self.truth {
            None => Ok(None),
            Some(t) => {
                let b = ens.beta(&t.xstar)?;
                Ok(Some(DVector::from_fn(self.y.len(), |i, _| {
                    self.y[i] * self.y[i] - b[i]
                })))
            }
        }
    }
}

/// Noise model for `observe`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    None,
    GaussianIid { sigma: f64 },
    Custom { values: Vec<f64> },
}

/// y_i = max(α(X_*)_i + ε_i, 0); the raw ε is stored so theorem slacks can
/// use the model noise even when clamping occurred.
pub fn observe<S: FieldScalar>(
    ens: &Ensemble<S>,
    truth: &GroundTruth<S>,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<Observation<S>> {
    let alpha = ens.alpha(&truth.xstar)?;
    let n = ens.len();
    let eps: Option<DVector<f64>> = match noise {
        NoiseSpec::None => None,
        NoiseSpec::GaussianIid { sigma } => {
            if *sigma < 0.0 {
                return Err(Error::InvalidArgument("noise sigma must be >= 0".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Some(DVector::from_fn(n, |_, _| {
                let g: f64 = rng.sample(StandardNormal);
                sigma * g
            }))
        }
        NoiseSpec::Custom { values } => {
            if values.len() != n {
                return Err(Error::dim("observe", n, values.len()));
            }
            Some(DVector::from_column_slice(values))
        }
    };
    let mut clamped = Vec::new();
    let y = DVector::from_fn(n, |i, _| {
        let raw = alpha[i] + eps.as_ref().map_or(0.0, |e| e[i]);
        if raw < 0.0 {
            clamped.push(i);
            0.0
        } else {
            raw
        }
    });
    Ok(Observation { y, eps, truth: Some(truth.clone()), clamped })
}

/// Diagonal spectral covariance σ_1 ≥ σ_2 ≥ … ≥ 0 (the Hilbert-space
/// setting truncated to the first `len` eigendirections).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralCovariance {
    pub sigmas: Vec<f64>,
}

impl SpectralCovariance {
    pub fn new(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(Error::InvalidArgument("spectral covariance needs at least one eigenvalue".into()));
        }
        for w in sigmas.windows(2) {
            if w[1] > w[0] {
                return Err(Error::InvalidArgument("spectral eigenvalues must be nonincreasing".into()));
            }
        }
        if sigmas.iter().any(|s| *s < 0.0 || !s.is_finite()) {
            return Err(Error::InvalidArgument("spectral eigenvalues must be finite and >= 0".into()));
        }
        Ok(SpectralCovariance { sigmas })
    }

    pub fn dim(&self) -> usize {
        self.sigmas.len()
    }

    /// σ_{d+1} + (1/n) Σ_{m > d} σ_m, the regularization floor driver for
    /// effective dimension `d` (1-based index d+1; zero past the end).
    pub fn lambda_floor_terms(&self, d: usize, n: usize) -> f64 {
        let head = self.sigmas.get(d).copied().unwrap_or(0.0);
        let tail: f64 = self.sigmas.iter().skip(d).sum();
        head + tail / n as f64
    }
}

/// Entry distributions for generated ensembles.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EnsembleDist {
    /// Real i.i.d. N(0,1) entries.
    GaussianIid,
    /// Real i.i.d. ±1 entries.
    RademacherIid,
    /// Complex circularly symmetric entries with E|w|² = 1.
    ComplexGaussianIid,
    /// Rows with covariance diag(sigmas), real or complex per the field tag.
    SpectralGaussian { sigmas: Vec<f64> },
    /// Complex Gaussian vectors sensing a real signal: A_i = Re(f_i f_i^*),
    /// stored in PSD form over the reals.
    RealPartOfComplex,
}

impl EnsembleDist {
    pub fn name(&self) -> &'static str {
        match self {
            EnsembleDist::GaussianIid => "gaussian_iid",
            EnsembleDist::RademacherIid => "rademacher_iid",
            EnsembleDist::ComplexGaussianIid => "complex_gaussian_iid",
            EnsembleDist::SpectralGaussian { .. } => "spectral_gaussian",
            EnsembleDist::RealPartOfComplex => "real_part_of_complex",
        }
    }
}

/// What to generate: dimensions, field, and entry distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub d: usize,
    pub n: usize,
    pub field: FieldTag,
    pub dist: EnsembleDist,
}

/// A generated ensemble, tagged by its scalar field.
#[derive(Debug, Clone)]
pub enum AnyEnsemble {
    Real(Ensemble<f64>),
    Complex(Ensemble<Complex64>),
}

impl AnyEnsemble {
    pub fn field(&self) -> FieldTag {
        match self {
            AnyEnsemble::Real(_) => FieldTag::Real,
            AnyEnsemble::Complex(_) => FieldTag::Complex,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            AnyEnsemble::Real(e) => e.dim(),
            AnyEnsemble::Complex(e) => e.dim(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            AnyEnsemble::Real(e) => e.len(),
            AnyEnsemble::Complex(e) => e.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn rank1_iid<S: FieldScalar>(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Result<Ensemble<S>> {
    Ensemble::from_rank1(standard_matrix::<S, _>(n, d, rng))
}

fn spectral_rows<S: FieldScalar>(
    n: usize,
    sigmas: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<Ensemble<S>> {
    let d = sigmas.len();
    let scales: Vec<f64> = sigmas.iter().map(|s| s.sqrt()).collect();
    let mut f = DMatrix::<S>::zeros(n, d);
    for i in 0..n {
        for j in 0..d {
            f[(i, j)] = S::standard_sample(rng) * S::from_real(scales[j]);
        }
    }
    Ensemble::from_rank1(f)
}

/// Generate a measurement ensemble deterministically from `seed`.
pub fn gen_ensemble(spec: &EnsembleSpec, seed: u64) -> Result<AnyEnsemble> {
    if spec.d == 0 || spec.n == 0 {
        return Err(Error::InvalidArgument(format!(
            "ensemble spec needs d, n >= 1, got d={}, n={}",
            spec.d, spec.n
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match (&spec.dist, spec.field) {
        (EnsembleDist::GaussianIid, FieldTag::Real) => {
            Ok(AnyEnsemble::Real(rank1_iid::<f64>(spec.n, spec.d, &mut rng)?))
        }
        (EnsembleDist::RademacherIid, FieldTag::Real) => {
            let mut f = DMatrix::<f64>::zeros(spec.n, spec.d);
            for i in 0..spec.n {
                for j in 0..spec.d {
                    f[(i, j)] = if rng.random::<bool>() { 1.0 } else { -1.0 };
                }
            }
            Ok(AnyEnsemble::Real(Ensemble::from_rank1(f)?))
        }
        (EnsembleDist::ComplexGaussianIid, FieldTag::Complex) => {
            Ok(AnyEnsemble::Complex(rank1_iid::<Complex64>(spec.n, spec.d, &mut rng)?))
        }
        (EnsembleDist::SpectralGaussian { sigmas }, field) => {
            let cov = SpectralCovariance::new(sigmas.clone())?;
            if cov.dim() != spec.d {
                return Err(Error::InvalidArgument(format!(
                    "spectral covariance has {} eigenvalues but d={}",
                    cov.dim(),
                    spec.d
                )));
            }
            match field {
                FieldTag::Real => Ok(AnyEnsemble::Real(spectral_rows::<f64>(spec.n, sigmas, &mut rng)?)),
                FieldTag::Complex => {
                    Ok(AnyEnsemble::Complex(spectral_rows::<Complex64>(spec.n, sigmas, &mut rng)?))
                }
            }
        }
        (EnsembleDist::RealPartOfComplex, FieldTag::Real) => {
            let f = standard_matrix::<Complex64, _>(spec.n, spec.d, &mut rng);
            let mats: Vec<DMatrix<f64>> = (0..spec.n)
                .map(|i| {
                    let fi = f.row(i).adjoint(); // f_i as a column
                    let outer = &fi * fi.adjoint();
                    outer.map(|z| z.re)
                })
                .collect();
            Ok(AnyEnsemble::Real(Ensemble::from_psd(mats)?))
        }
        (dist, field) => Err(Error::InvalidArgument(format!(
            "distribution {} is not defined over the {} field",
            dist.name(),
            field
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::random_unitary;
    use approx::assert_abs_diff_eq;

    fn coordinate_ensemble() -> Ensemble<f64> {
        // f_1 = e_1, f_2 = e_2 in R^2.
        Ensemble::from_rank1(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0])).unwrap()
    }

    #[test]
    fn alpha_coordinate_projections() {
        let ens = coordinate_ensemble();
        let x = DMatrix::from_column_slice(2, 1, &[3.0, 4.0]);
        let a = ens.alpha(&x).unwrap();
        assert_eq!(a.as_slice(), &[3.0, 4.0]);
        let b = ens.beta(&x).unwrap();
        assert_eq!(b.as_slice(), &[9.0, 16.0]);
    }

    #[test]
    fn alpha_zero_matrix() {
        let ens = coordinate_ensemble();
        let x = DMatrix::from_element(2, 3, 0.0);
        assert_eq!(ens.alpha(&x).unwrap().as_slice(), &[0.0, 0.0]);
        assert_eq!(ens.beta(&x).unwrap().as_slice(), &[0.0, 0.0]);
    }

    #[test]
    fn alpha_dimension_mismatch_is_error() {
        let ens = coordinate_ensemble();
        let x = DMatrix::from_element(3, 1, 1.0);
        assert!(ens.alpha(&x).is_err());
    }

    #[test]
    fn alpha_matches_explicit_lift_oracle() {
        // Rank-1 row-norm evaluation vs. forming A_i = f_i f_i^* explicitly.
        let spec = EnsembleSpec { d: 4, n: 9, field: FieldTag::Complex, dist: EnsembleDist::ComplexGaussianIid };
        let AnyEnsemble::Complex(ens) = gen_ensemble(&spec, 3).unwrap() else { panic!() };
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x = standard_matrix::<Complex64, _>(4, 2, &mut rng);
        let lifted = Ensemble::from_psd((0..9).map(|i| ens.matrix(i)).collect()).unwrap();
        let a1 = ens.alpha(&x).unwrap();
        let a2 = lifted.alpha(&x).unwrap();
        for i in 0..9 {
            assert_abs_diff_eq!(a1[i], a2[i], epsilon = 1e-12 * (1.0 + a1[i]));
        }
        // β = α² elementwise.
        let b = ens.beta(&x).unwrap();
        for i in 0..9 {
            assert_abs_diff_eq!(b[i], a1[i] * a1[i], epsilon = 1e-12 * (1.0 + b[i]));
        }
    }

    #[test]
    fn alpha_gauge_invariance() {
        let spec = EnsembleSpec { d: 5, n: 12, field: FieldTag::Real, dist: EnsembleDist::GaussianIid };
        let AnyEnsemble::Real(ens) = gen_ensemble(&spec, 5).unwrap() else { panic!() };
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let x = standard_matrix::<f64, _>(5, 3, &mut rng);
        let q = random_unitary::<f64, _>(3, &mut rng);
        let a1 = ens.alpha(&x).unwrap();
        let a2 = ens.alpha(&(&x * q)).unwrap();
        assert!((a1 - a2).amax() < 1e-12 * (1.0 + x.norm()));
    }

    #[test]
    fn gen_is_deterministic() {
        let spec = EnsembleSpec { d: 2, n: 3, field: FieldTag::Real, dist: EnsembleDist::GaussianIid };
        let AnyEnsemble::Real(e1) = gen_ensemble(&spec, 7).unwrap() else { panic!() };
        let AnyEnsemble::Real(e2) = gen_ensemble(&spec, 7).unwrap() else { panic!() };
        assert_eq!(e1.rank1_matrix().unwrap(), e2.rank1_matrix().unwrap());
    }

    #[test]
    fn rademacher_support() {
        let spec = EnsembleSpec { d: 6, n: 20, field: FieldTag::Real, dist: EnsembleDist::RademacherIid };
        let AnyEnsemble::Real(e) = gen_ensemble(&spec, 11).unwrap() else { panic!() };
        for v in e.rank1_matrix().unwrap().iter() {
            assert!(*v == 1.0 || *v == -1.0);
        }
    }

    #[test]
    fn spectral_zero_eigenvalue_zeroes_coordinate() {
        let spec = EnsembleSpec {
            d: 2,
            n: 50,
            field: FieldTag::Real,
            dist: EnsembleDist::SpectralGaussian { sigmas: vec![1.0, 0.0] },
        };
        let AnyEnsemble::Real(e) = gen_ensemble(&spec, 13).unwrap() else { panic!() };
        let f = e.rank1_matrix().unwrap();
        for i in 0..50 {
            assert_eq!(f[(i, 1)], 0.0);
        }
    }

    #[test]
    fn spectral_nonincreasing_enforced() {
        let spec = EnsembleSpec {
            d: 2,
            n: 3,
            field: FieldTag::Real,
            dist: EnsembleDist::SpectralGaussian { sigmas: vec![0.5, 1.0] },
        };
        assert!(gen_ensemble(&spec, 1).is_err());
        assert!(SpectralCovariance::new(vec![]).is_err());
    }

    #[test]
    fn observe_noiseless_and_clamping() {
        let ens = coordinate_ensemble();
        let truth = GroundTruth::new(DMatrix::from_column_slice(2, 1, &[1.0, 2.0])).unwrap();
        let obs = observe(&ens, &truth, &NoiseSpec::None, 0).unwrap();
        assert_eq!(obs.y.as_slice(), &[1.0, 2.0]);
        assert!(obs.eps.is_none());

        // α_1 = 1 with ε_1 = −3: y clamps at 0, raw ε preserved.
        let obs = observe(&ens, &truth, &NoiseSpec::Custom { values: vec![-3.0, 0.5] }, 0).unwrap();
        assert_eq!(obs.y[0], 0.0);
        assert_eq!(obs.y[1], 2.5);
        assert_eq!(obs.eps.as_ref().unwrap()[0], -3.0);
        assert_eq!(obs.clamped, vec![0]);

        // ξ = y² − β(X_*) on demand
        let xi = obs.xi(&ens).unwrap().unwrap();
        assert_eq!(xi[0], 0.0 - 1.0);
        assert_eq!(xi[1], 2.5 * 2.5 - 4.0);
    }

    #[test]
    fn observe_gaussian_noise_concentrates() {
        let spec = EnsembleSpec { d: 3, n: 10_000, field: FieldTag::Real, dist: EnsembleDist::GaussianIid };
        let AnyEnsemble::Real(ens) = gen_ensemble(&spec, 2).unwrap() else { panic!() };
        let truth = GroundTruth::new(DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0])).unwrap();
        let sigma = 0.3;
        let obs = observe(&ens, &truth, &NoiseSpec::GaussianIid { sigma }, 99).unwrap();
        let obs2 = observe(&ens, &truth, &NoiseSpec::GaussianIid { sigma }, 99).unwrap();
        assert_eq!(obs.eps.as_ref().unwrap(), obs2.eps.as_ref().unwrap());
        let norm = obs.eps.as_ref().unwrap().norm();
        let expect = sigma * (10_000.0_f64).sqrt();
        // chi concentration: ‖ε‖ = σ√n + O(σ)
        assert!((norm - expect).abs() <= 3.0 * sigma, "norm={norm} expect={expect}");
    }

    #[test]
    fn cov_deviation_hand_cases() {
        // d=2, f_1=e_1, f_2=e_2: mean = I/2, deviation from I is 1/2.
        let ens = coordinate_ensemble();
        let id = DMatrix::<f64>::identity(2, 2);
        let dev = ens.empirical_cov_deviation(&id).unwrap();
        assert_abs_diff_eq!(dev, 0.5, epsilon = 1e-8);

        // f_i = sqrt(2)·e_i: exact isotropy.
        let f = DMatrix::from_row_slice(2, 2, &[2f64.sqrt(), 0.0, 0.0, 2f64.sqrt()]);
        let ens = Ensemble::from_rank1(f).unwrap();
        let dev = ens.empirical_cov_deviation(&id).unwrap();
        assert_abs_diff_eq!(dev, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn cov_deviation_gaussian_matches_dense_oracle() {
        let spec = EnsembleSpec { d: 20, n: 4000, field: FieldTag::Real, dist: EnsembleDist::GaussianIid };
        let AnyEnsemble::Real(ens) = gen_ensemble(&spec, 42).unwrap() else { panic!() };
        let id = DMatrix::<f64>::identity(20, 20);
        let dev = ens.empirical_cov_deviation(&id).unwrap();
        let dense = hermitian_op_norm_dense(&(ens.mean_matrix() - &id));
        assert!((dev - dense).abs() <= 1e-8 * dense.max(1.0));
        assert!(dev <= 0.5, "dev={dev}");
        assert!(dev > 0.01 && dev < 0.3, "expected O(sqrt(d/n)) magnitude, got {dev}");
    }

    #[test]
    fn real_part_of_complex_is_real_psd() {
        let spec = EnsembleSpec { d: 3, n: 5, field: FieldTag::Real, dist: EnsembleDist::RealPartOfComplex };
        let AnyEnsemble::Real(ens) = gen_ensemble(&spec, 8).unwrap() else { panic!() };
        assert!(matches!(ens.form(), EnsembleForm::Psd(_)));
        // PSD validation already ran in from_psd; spot-check one quadratic form.
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = standard_matrix::<f64, _>(3, 1, &mut rng);
        let b = ens.beta(&x).unwrap();
        assert!(b.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn spectral_empirical_covariance_close() {
        let sigmas = vec![1.0, 0.5, 0.25, 0.125];
        let spec = EnsembleSpec {
            d: 4,
            n: 100_000,
            field: FieldTag::Real,
            dist: EnsembleDist::SpectralGaussian { sigmas: sigmas.clone() },
        };
        let AnyEnsemble::Real(ens) = gen_ensemble(&spec, 77).unwrap() else { panic!() };
        let mean = ens.mean_matrix();
        let target = DMatrix::from_diagonal(&DVector::from_vec(sigmas.clone()));
        let dev = (mean - target).amax();
        assert!(dev <= 5e-2 * sigmas[0], "max entry deviation {dev}");
    }

    #[test]
    fn zero_measurement_rejected() {
        let f = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        assert!(Ensemble::from_rank1(f).is_err());
        let mats = vec![DMatrix::<f64>::zeros(2, 2)];
        assert!(Ensemble::from_psd(mats).is_err());
    }
}
