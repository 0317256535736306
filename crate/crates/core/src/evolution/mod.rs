//! Time integration of the linearized and nonlinear systems, growth fits and
//! propagator eigenmodes.

mod arnoldi;
mod dynamics;
mod growth;
mod ideal;
mod integrator;

pub use arnoldi::{propagator_eigs, ArnoldiConfig, EigenMode, EigenResult};
pub use dynamics::{
    explicit_frequency, rhs_leray_nonlinear, rhs_linear_ideal, rhs_linear_viscous, stabilizing_hyperdiffusion, Dynamics, EvolutionConfig, Source,
};
pub use growth::{
    measure_growth, measure_growth_with_state, random_solenoidal, state_norm, write_time_series, GrowthFit,
    TimeSample, MIN_R2,
};
pub use ideal::{ideal_rate, ideal_sup_rate, IdealSup};
pub use integrator::{Integrator, BLOW_UP};
