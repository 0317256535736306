//! Two distinct forced Leray solutions built from an unstable self-similar
//! eigenmode: background force, fixed-point construction of the
//! perturbation, physical-variable reconstruction and verification.

mod construction;
mod force;
mod physical;
mod trajectory;
mod verify;

pub use construction::{Construction, ConstructionConfig, ConstructionSummary, FixedPoint};
pub use force::{BackgroundForce, ForceConvention, SteadinessResidual};
pub use trajectory::{build_xlim, NormSample, Trajectory};
pub use physical::{box_extent, radial_quadrature, PhysicalNorms, PhysicalSample, SolutionPair};
pub use verify::{
    background_integrals, weak_terms, QuadratureRule, WeakTerms, cumulative_integral, energy_history, test_bank,
    verify_pair, weak_residuals, BackgroundIntegrals, Check, EnergyHistory, EnergySlack, Jet,
    SolutionReport, TestFunction, VerificationReport, VerifyOptions, WeakResidual,
};
