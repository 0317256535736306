//! Axisymmetric fields on staggered `(r, z)` grids.

mod field;
mod forms;
mod grid;
mod io;
mod norms;
mod ops;
mod projection;

pub use field::{
    AxiField, Derivatives, Frame, PairState, VectorField, B_THETA_CLASS, PHI_CLASS, PRESSURE_CLASS, U_R_CLASS,
    U_THETA_CLASS, U_Z_CLASS,
};
pub use forms::{advect, bilinear_b, pair_inner, sym_coupling, trilinear_b, trilinear_pair, Operand, Pair};
pub use grid::{GridDescriptor, GridRZ, ZClass, ZTopology, ZTransform};
pub use io::{read_snapshot, read_tagged_snapshot, write_radial_slice, write_snapshot, write_tagged_snapshot};
pub use norms::{l2_magnetic, l2_vector, l2_velocity, norms, seminorm_squared, NormTable, MAX_ORDER};
pub use ops::Recovered;
pub use projection::Projection;
