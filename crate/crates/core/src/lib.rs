//! Numerical toolkit for magneto-rotational instability of rotating MHD
//! steady states and for the construction of two distinct forced Leray
//! solutions from an unstable self-similar eigenmode.

pub mod axi_fields;
pub mod cli_io;
pub mod error;
pub mod evolution;
pub mod linalg;
pub mod nonuniqueness;
pub mod profiles;
pub mod radial_spectrum;
pub mod stencil;

pub use error::{Error, Result};
