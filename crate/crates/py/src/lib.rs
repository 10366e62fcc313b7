//! Python bindings: measurement ensembles, the loss family, the factored and
//! sphere-product solvers with certificates, landscape slacks, and recovery
//! metrics. Matrices cross the boundary as lists of rows (floats for real
//! problems, complex numbers for complex ones).

use ampscape::error::Error;
use ampscape::experiments::{make_truth, TruthSpec, TruthStyle};
use ampscape::factored::{certification_scale, SolverConfig};
use ampscape::field::{FieldScalar, FieldTag};
use ampscape::landscape::{self, TheoremKind};
use ampscape::losses::{LossFamily, LossSpec};
use ampscape::measurement::{
    gen_ensemble, observe, AnyEnsemble, Ensemble, EnsembleDist, EnsembleSpec, NoiseSpec,
};
use ampscape::phasecut::{self, SphereProductPoint};
use ampscape::CriticalityCertificate;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn err_to_py(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_loss(s: &str) -> PyResult<LossFamily> {
    LossFamily::parse(s).ok_or_else(|| PyValueError::new_err(format!("unknown loss `{s}`")))
}

fn rows_to_matrix<S: FieldScalar>(rows: &[Vec<Complex64>]) -> PyResult<DMatrix<S>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(PyValueError::new_err("matrix must be nonempty"));
    }
    let (r, c) = (rows.len(), rows[0].len());
    let mut m = DMatrix::<S>::zeros(r, c);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != c {
            return Err(PyValueError::new_err("ragged matrix rows"));
        }
        for (j, z) in row.iter().enumerate() {
            if S::FIELD == FieldTag::Real && z.im != 0.0 {
                return Err(PyValueError::new_err(
                    "complex entry supplied to a real-field problem",
                ));
            }
            m[(i, j)] = S::from_re_im(z.re, z.im);
        }
    }
    Ok(m)
}

fn matrix_to_rows<S: FieldScalar>(py: Python<'_>, m: &DMatrix<S>) -> Py<PyAny> {
    let mut rows = Vec::with_capacity(m.nrows());
    for i in 0..m.nrows() {
        let row: Vec<Py<PyAny>> = (0..m.ncols())
            .map(|j| {
                let v = m[(i, j)];
                match S::FIELD {
                    FieldTag::Real => v.real().into_pyobject(py).unwrap().into_any().unbind(),
                    FieldTag::Complex => Complex64::new(v.real(), v.im_part())
                        .into_pyobject(py)
                        .unwrap()
                        .into_any()
                        .unbind(),
                }
            })
            .collect();
        rows.push(row);
    }
    rows.into_pyobject(py).unwrap().into_any().unbind()
}

fn cert_to_dict(py: Python<'_>, cert: &CriticalityCertificate) -> PyResult<Py<PyAny>> {
    let d = PyDict::new(py);
    d.set_item("grad_norm", cert.grad_norm)?;
    d.set_item("min_curvature", cert.min_curvature)?;
    d.set_item("grad_tol", cert.grad_tol)?;
    d.set_item("curv_tol", cert.curv_tol)?;
    d.set_item("certified", cert.certified)?;
    Ok(d.into_any().unbind())
}

/// Value and first two derivatives (in b) of the δ-smoothed loss.
#[pyfunction]
fn loss_derivatives(family: &str, delta: f64, b: f64, upsilon: f64) -> PyResult<(f64, f64, f64)> {
    let spec = LossSpec::new(parse_loss(family)?, delta, 0.0).map_err(err_to_py)?;
    spec.derivatives(b, upsilon).map_err(err_to_py)
}

/// A measurement ensemble over the real or complex field.
#[pyclass(name = "Ensemble")]
struct PyEnsemble {
    inner: AnyEnsemble,
}

fn solver_config(p: usize, seed: u64, max_iters: Option<usize>) -> SolverConfig {
    let mut config = SolverConfig::new(p, seed);
    if let Some(m) = max_iters {
        config.max_iters = m;
    }
    config
}

impl PyEnsemble {
    fn with_typed<R>(
        &self,
        real: impl FnOnce(&Ensemble<f64>) -> PyResult<R>,
        complex: impl FnOnce(&Ensemble<Complex64>) -> PyResult<R>,
    ) -> PyResult<R> {
        match &self.inner {
            AnyEnsemble::Real(e) => real(e),
            AnyEnsemble::Complex(e) => complex(e),
        }
    }
}

#[pymethods]
impl PyEnsemble {
    /// Generate an ensemble. dist: "gaussian" | "rademacher" |
    /// "complex_gaussian" | "spectral" (with sigmas) | "real_part_of_complex".
    #[staticmethod]
    #[pyo3(signature = (d, n, field, dist, seed, sigmas=None))]
    fn gen(
        d: usize,
        n: usize,
        field: &str,
        dist: &str,
        seed: u64,
        sigmas: Option<Vec<f64>>,
    ) -> PyResult<Self> {
        let field = FieldTag::parse(field)
            .ok_or_else(|| PyValueError::new_err(format!("unknown field `{field}`")))?;
        let dist = match dist {
            "gaussian" => EnsembleDist::GaussianIid,
            "rademacher" => EnsembleDist::RademacherIid,
            "complex_gaussian" => EnsembleDist::ComplexGaussianIid,
            "spectral" => EnsembleDist::SpectralGaussian {
                sigmas: sigmas
                    .ok_or_else(|| PyValueError::new_err("spectral needs sigmas"))?,
            },
            "real_part_of_complex" => EnsembleDist::RealPartOfComplex,
            other => return Err(PyValueError::new_err(format!("unknown dist `{other}`"))),
        };
        let spec = EnsembleSpec { d, n, field, dist };
        Ok(PyEnsemble { inner: gen_ensemble(&spec, seed).map_err(err_to_py)? })
    }

    #[getter]
    fn field(&self) -> &'static str {
        self.inner.field().name()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.len()
    }

    /// α(X): measurement magnitudes of the factor X (list of rows).
    fn alpha(&self, x: Vec<Vec<Complex64>>) -> PyResult<Vec<f64>> {
        self.with_typed(
            |e| Ok(e.alpha(&rows_to_matrix(&x)?).map_err(err_to_py)?.as_slice().to_vec()),
            |e| Ok(e.alpha(&rows_to_matrix(&x)?).map_err(err_to_py)?.as_slice().to_vec()),
        )
    }

    /// β(X) = α(X)² elementwise.
    fn beta(&self, x: Vec<Vec<Complex64>>) -> PyResult<Vec<f64>> {
        self.with_typed(
            |e| Ok(e.beta(&rows_to_matrix(&x)?).map_err(err_to_py)?.as_slice().to_vec()),
            |e| Ok(e.beta(&rows_to_matrix(&x)?).map_err(err_to_py)?.as_slice().to_vec()),
        )
    }

    /// ‖(1/n)Σ A_i − target‖_op by the iterative extreme-eigenvalue routine.
    fn empirical_cov_deviation(&self, target: Vec<Vec<Complex64>>) -> PyResult<f64> {
        self.with_typed(
            |e| e.empirical_cov_deviation(&rows_to_matrix(&target)?).map_err(err_to_py),
            |e| e.empirical_cov_deviation(&rows_to_matrix(&target)?).map_err(err_to_py),
        )
    }

    /// Draw a ground truth, observe y = max(α(X_*) + ε, 0), and return
    /// (xstar, y, eps).
    #[pyo3(signature = (rank, norm, style, sigma, seed))]
    fn observe(
        &self,
        py: Python<'_>,
        rank: usize,
        norm: f64,
        style: &str,
        sigma: f64,
        seed: u64,
    ) -> PyResult<(Py<PyAny>, Vec<f64>, Option<Vec<f64>>)> {
        let style = match style {
            "gaussian" => TruthStyle::Gaussian,
            "flat" => TruthStyle::Flat,
            "spike" => TruthStyle::Spike,
            other => return Err(PyValueError::new_err(format!("unknown style `{other}`"))),
        };
        let spec = TruthSpec { rank, norm, style };
        let noise =
            if sigma > 0.0 { NoiseSpec::GaussianIid { sigma } } else { NoiseSpec::None };
        // the CLI/sweep dist is only needed for covariance-aligned truths
        let dist = EnsembleDist::GaussianIid;
        self.with_typed(
            |e| {
                let truth = make_truth::<f64>(e.dim(), &spec, &dist, seed).map_err(err_to_py)?;
                let obs = observe(e, &truth, &noise, seed ^ 0xab5e).map_err(err_to_py)?;
                Ok((
                    matrix_to_rows(py, &truth.xstar),
                    obs.y.as_slice().to_vec(),
                    obs.eps.map(|v| v.as_slice().to_vec()),
                ))
            },
            |e| {
                let truth =
                    make_truth::<Complex64>(e.dim(), &spec, &dist, seed).map_err(err_to_py)?;
                let obs = observe(e, &truth, &noise, seed ^ 0xab5e).map_err(err_to_py)?;
                Ok((
                    matrix_to_rows(py, &truth.xstar),
                    obs.y.as_slice().to_vec(),
                    obs.eps.map(|v| v.as_slice().to_vec()),
                ))
            },
        )
    }

    /// Minimize L_λ(XX*) from a random start; returns (X, certificate).
    #[pyo3(signature = (y, loss, p, seed, delta=None, lambda=0.0, max_iters=None))]
    #[allow(clippy::too_many_arguments)]
    fn solve_factored(
        &self,
        py: Python<'_>,
        y: Vec<f64>,
        loss: &str,
        p: usize,
        seed: u64,
        delta: Option<f64>,
        lambda: f64,
        max_iters: Option<usize>,
    ) -> PyResult<(Py<PyAny>, Py<PyAny>)> {
        let family = parse_loss(loss)?;
        let yv = DVector::from_vec(y);
        let delta = delta.unwrap_or_else(|| LossSpec::default_delta(family, &yv));
        let spec = LossSpec::new(family, delta, lambda).map_err(err_to_py)?;
        let config = solver_config(p, seed, max_iters);
        self.with_typed(
            |e| {
                let out =
                    ampscape::solve_factored(&spec, e, &yv, &config, None).map_err(err_to_py)?;
                Ok((matrix_to_rows(py, &out.x), cert_to_dict(py, &out.cert)?))
            },
            |e| {
                let out =
                    ampscape::solve_factored(&spec, e, &yv, &config, None).map_err(err_to_py)?;
                Ok((matrix_to_rows(py, &out.x), cert_to_dict(py, &out.cert)?))
            },
        )
    }

    /// Certify second-order criticality of X for the factored problem.
    #[pyo3(signature = (y, x, loss, seed, delta=None, lambda=0.0, grad_tol=None, curv_tol=None))]
    #[allow(clippy::too_many_arguments)]
    fn certify_factored(
        &self,
        py: Python<'_>,
        y: Vec<f64>,
        x: Vec<Vec<Complex64>>,
        loss: &str,
        seed: u64,
        delta: Option<f64>,
        lambda: f64,
        grad_tol: Option<f64>,
        curv_tol: Option<f64>,
    ) -> PyResult<Py<PyAny>> {
        let family = parse_loss(loss)?;
        let yv = DVector::from_vec(y);
        let delta = delta.unwrap_or_else(|| LossSpec::default_delta(family, &yv));
        let spec = LossSpec::new(family, delta, lambda).map_err(err_to_py)?;
        let scale = certification_scale(&yv, lambda, self.inner.dim());
        let gt = grad_tol.unwrap_or(1e-8 * scale);
        let ct = curv_tol.unwrap_or(1e-6 * scale);
        self.with_typed(
            |e| {
                let cert =
                    ampscape::certify_factored(&spec, e, &yv, &rows_to_matrix(&x)?, gt, ct, seed)
                        .map_err(err_to_py)?;
                cert_to_dict(py, &cert)
            },
            |e| {
                let cert =
                    ampscape::certify_factored(&spec, e, &yv, &rows_to_matrix(&x)?, gt, ct, seed)
                        .map_err(err_to_py)?;
                cert_to_dict(py, &cert)
            },
        )
    }

    /// Evaluate a landscape theorem at (X, X_*); returns
    /// {"lhs", "rhs", "slack", "delta"}.
    #[pyo3(signature = (theorem, y, xstar, x, delta=0.0, lambda=0.0, eps=None))]
    #[allow(clippy::too_many_arguments)]
    fn theorem_slack(
        &self,
        py: Python<'_>,
        theorem: &str,
        y: Vec<f64>,
        xstar: Vec<Vec<Complex64>>,
        x: Vec<Vec<Complex64>>,
        delta: f64,
        lambda: f64,
        eps: Option<Vec<f64>>,
    ) -> PyResult<Py<PyAny>> {
        let kind = TheoremKind::parse(theorem)
            .ok_or_else(|| PyValueError::new_err(format!("unknown theorem `{theorem}`")))?;
        let family = match kind {
            TheoremKind::Quartic => LossFamily::Quartic,
            TheoremKind::Poisson => LossFamily::Poisson,
            _ => LossFamily::Amplitude,
        };
        let spec = LossSpec::new(family, delta, lambda).map_err(err_to_py)?;
        let yv = DVector::from_vec(y);
        let epsv = eps.map(DVector::from_vec);
        let report = self.with_typed(
            |e| {
                let rep = landscape::theorem_slack(
                    kind,
                    &spec,
                    e,
                    &yv,
                    epsv.as_ref(),
                    &rows_to_matrix(&xstar)?,
                    &rows_to_matrix(&x)?,
                    None,
                )
                .map_err(err_to_py)?;
                Ok((rep.lhs, rep.rhs, rep.slack, rep.delta))
            },
            |e| {
                let rep = landscape::theorem_slack(
                    kind,
                    &spec,
                    e,
                    &yv,
                    epsv.as_ref(),
                    &rows_to_matrix(&xstar)?,
                    &rows_to_matrix(&x)?,
                    None,
                )
                .map_err(err_to_py)?;
                Ok((rep.lhs, rep.rhs, rep.slack, rep.delta))
            },
        )?;
        let d = PyDict::new(py);
        d.set_item("lhs", report.0)?;
        d.set_item("rhs", report.1)?;
        d.set_item("slack", report.2)?;
        d.set_item("delta", report.3)?;
        Ok(d.into_any().unbind())
    }
}

/// The sphere-product reformulation min ⟨M_λ, UU*⟩ s.t. unit rows.
#[pyclass(name = "PhaseCut")]
struct PyPhaseCut {
    real: Option<phasecut::PhaseCutProblem<f64>>,
    complex: Option<phasecut::PhaseCutProblem<Complex64>>,
}

#[pymethods]
impl PyPhaseCut {
    /// Build M_λ and the ridge map from (F, y, λ). `field` tags F's entries.
    #[staticmethod]
    fn build(
        field: &str,
        f: Vec<Vec<Complex64>>,
        y: Vec<f64>,
        lambda: f64,
    ) -> PyResult<Self> {
        let field = FieldTag::parse(field)
            .ok_or_else(|| PyValueError::new_err(format!("unknown field `{field}`")))?;
        let yv = DVector::from_vec(y);
        match field {
            FieldTag::Real => Ok(PyPhaseCut {
                real: Some(
                    phasecut::build_phasecut(rows_to_matrix::<f64>(&f)?, yv, lambda)
                        .map_err(err_to_py)?,
                ),
                complex: None,
            }),
            FieldTag::Complex => Ok(PyPhaseCut {
                real: None,
                complex: Some(
                    phasecut::build_phasecut(rows_to_matrix::<Complex64>(&f)?, yv, lambda)
                        .map_err(err_to_py)?,
                ),
            }),
        }
    }

    /// Minimize over the product of spheres; returns (U, certificate).
    #[pyo3(signature = (p, seed, max_iters=None))]
    fn solve(
        &self,
        py: Python<'_>,
        p: usize,
        seed: u64,
        max_iters: Option<usize>,
    ) -> PyResult<(Py<PyAny>, Py<PyAny>)> {
        let config = solver_config(p, seed, max_iters);
        if let Some(prob) = &self.real {
            let out = phasecut::solve_phasecut(prob, &config).map_err(err_to_py)?;
            Ok((matrix_to_rows(py, &out.u.u), cert_to_dict(py, &out.cert)?))
        } else {
            let prob = self.complex.as_ref().expect("one field set");
            let out = phasecut::solve_phasecut(prob, &config).map_err(err_to_py)?;
            Ok((matrix_to_rows(py, &out.u.u), cert_to_dict(py, &out.cert)?))
        }
    }

    /// X = R_λ U.
    fn ridge_recover(&self, py: Python<'_>, u: Vec<Vec<Complex64>>) -> PyResult<Py<PyAny>> {
        if let Some(prob) = &self.real {
            let point = SphereProductPoint::new(rows_to_matrix(&u)?).map_err(err_to_py)?;
            Ok(matrix_to_rows(py, &prob.ridge_recover(&point)))
        } else {
            let prob = self.complex.as_ref().expect("one field set");
            let point = SphereProductPoint::new(rows_to_matrix(&u)?).map_err(err_to_py)?;
            Ok(matrix_to_rows(py, &prob.ridge_recover(&point)))
        }
    }

    /// Residual of the exact elimination identity at W (zero for all W).
    fn quad_identity_residual(&self, w: Vec<Vec<Complex64>>) -> PyResult<f64> {
        if let Some(prob) = &self.real {
            prob.quad_identity_residual(&rows_to_matrix(&w)?).map_err(err_to_py)
        } else {
            let prob = self.complex.as_ref().expect("one field set");
            prob.quad_identity_residual(&rows_to_matrix(&w)?).map_err(err_to_py)
        }
    }

    /// ⟨M_λ, U U*⟩.
    fn objective(&self, u: Vec<Vec<Complex64>>) -> PyResult<f64> {
        if let Some(prob) = &self.real {
            Ok(prob.objective(&rows_to_matrix(&u)?))
        } else {
            let prob = self.complex.as_ref().expect("one field set");
            Ok(prob.objective(&rows_to_matrix(&u)?))
        }
    }

    /// Certify Riemannian second-order criticality of U.
    #[pyo3(signature = (u, grad_tol, curv_tol, seed))]
    fn certify(
        &self,
        py: Python<'_>,
        u: Vec<Vec<Complex64>>,
        grad_tol: f64,
        curv_tol: f64,
        seed: u64,
    ) -> PyResult<Py<PyAny>> {
        if let Some(prob) = &self.real {
            let point = SphereProductPoint::new(rows_to_matrix(&u)?).map_err(err_to_py)?;
            let cert = phasecut::certify_phasecut(&prob.mlam, &point, grad_tol, curv_tol, seed);
            cert_to_dict(py, &cert)
        } else {
            let prob = self.complex.as_ref().expect("one field set");
            let point = SphereProductPoint::new(rows_to_matrix(&u)?).map_err(err_to_py)?;
            let cert = phasecut::certify_phasecut(&prob.mlam, &point, grad_tol, curv_tol, seed);
            cert_to_dict(py, &cert)
        }
    }
}

/// Best rank-1 readout of X against x_* (optionally Σ-weighted); returns
/// {"nuclear_error", "vector_error"}.
#[pyfunction]
#[pyo3(signature = (field, x, xstar, sigma=None))]
fn recovery_metrics(
    py: Python<'_>,
    field: &str,
    x: Vec<Vec<Complex64>>,
    xstar: Vec<Complex64>,
    sigma: Option<Vec<f64>>,
) -> PyResult<Py<PyAny>> {
    let field = FieldTag::parse(field)
        .ok_or_else(|| PyValueError::new_err(format!("unknown field `{field}`")))?;
    let sig = sigma.map(DVector::from_vec);
    let (nuc, vec_err) = match field {
        FieldTag::Real => {
            let xs = DVector::from_fn(xstar.len(), |i, _| {
                debug_assert_eq!(xstar[i].im, 0.0);
                xstar[i].re
            });
            let m = landscape::recovery_metrics(&rows_to_matrix::<f64>(&x)?, &xs, sig.as_ref())
                .map_err(err_to_py)?;
            (m.nuclear_error, m.vector_error)
        }
        FieldTag::Complex => {
            let xs = DVector::from_vec(xstar);
            let m =
                landscape::recovery_metrics(&rows_to_matrix::<Complex64>(&x)?, &xs, sig.as_ref())
                    .map_err(err_to_py)?;
            (m.nuclear_error, m.vector_error)
        }
    };
    let d = PyDict::new(py);
    d.set_item("nuclear_error", nuc)?;
    d.set_item("vector_error", vec_err)?;
    Ok(d.into_any().unbind())
}

/// Run a Monte Carlo sweep from a JSON config string; returns the paths of
/// the CSV and summary files.
#[pyfunction]
fn run_sweep(config_json: &str) -> PyResult<(String, String)> {
    let cfg: ampscape::experiments::ExperimentConfig = serde_json::from_str(config_json)
        .map_err(|e| PyValueError::new_err(format!("config parse: {e}")))?;
    let out = ampscape::experiments::run_sweep(&cfg).map_err(err_to_py)?;
    Ok((
        out.csv_path.to_string_lossy().into_owned(),
        out.summary_path.to_string_lossy().into_owned(),
    ))
}

#[pymodule]
fn ampscape_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEnsemble>()?;
    m.add_class::<PyPhaseCut>()?;
    m.add_function(wrap_pyfunction!(loss_derivatives, m)?)?;
    m.add_function(wrap_pyfunction!(recovery_metrics, m)?)?;
    m.add_function(wrap_pyfunction!(run_sweep, m)?)?;
    Ok(())
}
