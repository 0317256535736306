use nalgebra::DMatrix;

use super::field::{AxiField, PRESSURE_CLASS, U_Z_CLASS};
use super::grid::GridRZ;
use crate::error::{Error, Result};
use crate::linalg::{Tridiagonal, TridiagonalLu};

/// Per-slot factorizations of the discrete pressure operator `D G`, whose
/// axial part is the exact composition of the spectral derivatives.
#[derive(Debug, Clone)]
pub struct Projector {
    slots: Vec<SlotSolver>,
}

#[derive(Debug, Clone)]
struct SlotSolver {
    lu: TridiagonalLu,
    /// first row replaced by `p₀ = 0` (constant null space)
    pinned: bool,
}

impl Projector {
    fn build(grid: &GridRZ) -> Result<Self> {
        let pb = grid.basis(PRESSURE_CLASS);
        let ub = grid.basis(U_Z_CLASS);
        let mut slots = Vec::with_capacity(grid.n_z);
        for s in 0..grid.n_z {
            let round_trip = match pb.deriv[s] {
                Some((s2, f1)) => match ub.deriv[s2] {
                    Some((s3, f2)) if s3 == s => f1 * f2,
                    _ => 0.0,
                },
                None => 0.0,
            };
            let mut t: Tridiagonal = grid.lap_pressure.clone();
            for d in &mut t.diag {
                *d += round_trip;
            }
            let pinned = round_trip == 0.0;
            if pinned {
                t.diag[0] = 1.0;
                t.upper[0] = 0.0;
            }
            slots.push(SlotSolver {
                lu: t.factor()?,
                pinned,
            });
        }
        Ok(Self { slots })
    }
}

/// Projected velocity pair with its pressure and residual divergence.
#[derive(Debug, Clone)]
pub struct Projection {
    pub u_r: DMatrix<f64>,
    pub u_z: DMatrix<f64>,
    pub pressure: DMatrix<f64>,
    /// weighted L² norm of the divergence after projection
    pub residual: f64,
    /// weighted L² norm of the divergence before projection
    pub initial_divergence: f64,
}

impl GridRZ {
    fn projector(&self) -> Result<&Projector> {
        if let Some(p) = self.projector.get() {
            return Ok(p);
        }
        let p = Projector::build(self)?;
        Ok(self.projector.get_or_init(|| p))
    }

    /// Weighted `L²(2πr dr dz)` norm of a centre field (plain midpoint sum).
    pub fn centre_l2(&self, f: &DMatrix<f64>) -> f64 {
        let w = 2.0 * std::f64::consts::PI * self.dr * self.z_weight();
        let mut s = 0.0;
        for (i, &r) in self.r_c.iter().enumerate() {
            s += r * f.column(i).norm_squared();
        }
        (s * w).sqrt()
    }

    /// Leray projection of `(u_r, u_z)`: solves `D G p = div u` slot by slot and
    /// subtracts `G p`. The discrete divergence of the result vanishes to
    /// round-off.
    pub fn leray_project(&self, u_r: &DMatrix<f64>, u_z: &DMatrix<f64>) -> Result<Projection> {
        let proj = self.projector()?;
        let div = self.divergence(u_r, u_z, U_Z_CLASS);
        let initial_divergence = self.centre_l2(&div);
        let mut coef = self.to_spectral(&div, PRESSURE_CLASS);
        let mut row = vec![0.0; self.n_r];
        for (s, solver) in proj.slots.iter().enumerate() {
            for (i, v) in row.iter_mut().enumerate() {
                *v = coef[(s, i)];
            }
            if solver.pinned {
                row[0] = 0.0;
            }
            solver.lu.solve_in_place(&mut row);
            for (i, v) in row.iter().enumerate() {
                coef[(s, i)] = *v;
            }
        }
        let p = self.from_spectral(&coef, PRESSURE_CLASS);
        let u_r = u_r - self.grad_r(&p);
        let u_z = u_z - self.dz_of(&p, PRESSURE_CLASS);
        let residual = self.centre_l2(&self.divergence(&u_r, &u_z, U_Z_CLASS));
        if !residual.is_finite() {
            return Err(Error::SolveFailed(format!(
                "pressure solve produced non-finite output (divergence {initial_divergence:e} -> {residual:e})"
            )));
        }
        Ok(Projection {
            u_r,
            u_z,
            pressure: p,
            residual,
            initial_divergence,
        })
    }
}

impl AxiField {
    /// Projects the poloidal velocity in place and stores the pressure.
    pub fn project(&mut self) -> Result<f64> {
        let p = self.grid.leray_project(&self.u_r, &self.u_z)?;
        self.u_r = p.u_r;
        self.u_z = p.u_z;
        self.pressure = p.pressure;
        Ok(p.residual)
    }

    /// Weighted L² norm of the discrete velocity divergence.
    pub fn divergence_residual(&self) -> f64 {
        let g = &self.grid;
        g.centre_l2(&g.divergence(&self.u_r, &self.u_z, U_Z_CLASS))
    }
}
