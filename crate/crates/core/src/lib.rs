//! Phase retrieval and semidefinite low-rank matrix sensing toolkit built
//! around overparametrized nonconvex solvers: the quartic, nonsmooth
//! amplitude, and Poisson losses over factored matrices X X*, and a smooth
//! sphere-product reformulation that eliminates the signal by ridge
//! regression. Every solver certifies second-order criticality, and the
//! verifier module evaluates the slack of the corresponding landscape
//! inequalities at certified points.

pub mod error;
pub mod experiments;
pub mod factored;
pub mod field;
pub mod io;
pub mod landscape;
pub mod linalg;
pub mod losses;
pub mod measurement;
pub mod phasecut;

pub use error::{Error, Result};
pub use factored::{certify_factored, solve_factored, CriticalityCertificate, SolverConfig};
pub use field::{FieldScalar, FieldTag};
pub use landscape::{theorem_slack, LandscapeReport, TheoremKind};
pub use losses::{LossFamily, LossSpec};
pub use measurement::{
    gen_ensemble, observe, AnyEnsemble, Ensemble, EnsembleDist, EnsembleSpec, GroundTruth,
    NoiseSpec, Observation, SpectralCovariance,
};
pub use phasecut::{
    build_phasecut, certify_phasecut, solve_phasecut, PhaseCutProblem, SphereProductPoint,
};
