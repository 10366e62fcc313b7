//! Scalar field abstraction: all numerics are generic over `f64` (real
//! problems) and `Complex64` (complex problems).
//!
//! The field enters the landscape bounds through the constant `c_F`
//! (1 for the reals, 2 for the complex numbers), and through which
//! perturbation directions are admissible: curvature certificates for a
//! real problem must search real directions only, so real data is never
//! silently embedded into complex arithmetic.

use nalgebra::{ComplexField, DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Which scalar field a problem lives over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldTag {
    Real,
    Complex,
}

impl FieldTag {
    /// The constant c_F: 1 for real, 2 for complex.
    pub fn c_f(self) -> usize {
        match self {
            FieldTag::Real => 1,
            FieldTag::Complex => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FieldTag::Real => "real",
            FieldTag::Complex => "complex",
        }
    }

    pub fn parse(s: &str) -> Option<FieldTag> {
        match s.trim().to_ascii_lowercase().as_str() {
            "real" | "r" => Some(FieldTag::Real),
            "complex" | "c" => Some(FieldTag::Complex),
            _ => None,
        }
    }
}

impl std::fmt::Display for FieldTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Scalar type of a measurement/optimization problem.
///
/// `standard_sample` draws a zero-mean entry with  E|w|^2 = 1: N(0,1) over
/// the reals, circularly symmetric with variance 1/2 per component over the
/// complex numbers.
pub trait FieldScalar:
    ComplexField<RealField = f64> + Copy + Send + Sync + 'static
{
    const FIELD: FieldTag;

    fn standard_sample<R: Rng + ?Sized>(rng: &mut R) -> Self;

    fn from_re_im(re: f64, im: f64) -> Self;

    fn im_part(self) -> f64;
}

impl FieldScalar for f64 {
    const FIELD: FieldTag = FieldTag::Real;

    fn standard_sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }

    fn from_re_im(re: f64, _im: f64) -> Self {
        re
    }

    fn im_part(self) -> f64 {
        0.0
    }
}

impl FieldScalar for Complex64 {
    const FIELD: FieldTag = FieldTag::Complex;

    fn standard_sample<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * std::f64::consts::FRAC_1_SQRT_2, im * std::f64::consts::FRAC_1_SQRT_2)
    }

    fn from_re_im(re: f64, im: f64) -> Self {
        Complex64::new(re, im)
    }

    fn im_part(self) -> f64 {
        self.im
    }
}

/// Real inner product Re⟨A, B⟩ = Re tr(B* A) on matrices over F, under
/// which F^{d×p} is a real vector space of dimension c_F·d·p.
pub fn re_dot<S: FieldScalar>(a: &DMatrix<S>, b: &DMatrix<S>) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (y.conjugate() * *x).real())
        .sum()
}

/// Re⟨a, b⟩ for vectors.
pub fn re_dot_vec<S: FieldScalar>(a: &DVector<S>, b: &DVector<S>) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (y.conjugate() * *x).real())
        .sum()
}

/// Matrix with i.i.d. standard entries (E|w|^2 = 1), filled row-major so the
/// draw order is representation independent.
pub fn standard_matrix<S: FieldScalar, R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> DMatrix<S> {
    let mut m = DMatrix::<S>::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = S::standard_sample(rng);
        }
    }
    m
}

/// Haar-ish random unitary (QR of a standard Gaussian matrix); used by
/// gauge-invariance tests and direction sampling.
pub fn random_unitary<S: FieldScalar, R: Rng + ?Sized>(p: usize, rng: &mut R) -> DMatrix<S> {
    let g = standard_matrix::<S, R>(p, p, rng);
    let qr = g.qr();
    qr.q()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn c_f_constants() {
        assert_eq!(FieldTag::Real.c_f(), 1);
        assert_eq!(FieldTag::Complex.c_f(), 2);
        assert_eq!(<f64 as FieldScalar>::FIELD.c_f(), 1);
        assert_eq!(<Complex64 as FieldScalar>::FIELD.c_f(), 2);
    }

    #[test]
    fn complex_samples_have_unit_second_moment() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 200_000;
        let mean_sq: f64 = (0..n)
            .map(|_| Complex64::standard_sample(&mut rng).norm_sqr())
            .sum::<f64>()
            / n as f64;
        assert!((mean_sq - 1.0).abs() < 0.01, "E|w|^2 = {mean_sq}");
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = random_unitary::<Complex64, _>(4, &mut rng);
        let qhq = q.adjoint() * &q;
        let id = DMatrix::<Complex64>::identity(4, 4);
        assert!((qhq - id).norm() < 1e-12);
    }
}
