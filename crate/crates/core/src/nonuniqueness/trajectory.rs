use serde::{Deserialize, Serialize};

use crate::axi_fields::{norms, AxiField};
use crate::error::{Error, Result};

/// States on a uniform `τ` grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub tau0: f64,
    pub dtau: f64,
    pub states: Vec<AxiField>,
}

/// One row of a norm history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormSample {
    pub tau: f64,
    pub l2: f64,
    pub h_n: f64,
}

impl Trajectory {
    pub fn new(tau0: f64, dtau: f64, states: Vec<AxiField>) -> Result<Self> {
        if states.is_empty() || !(dtau > 0.0) {
            return Err(Error::InvalidArgument("trajectory needs states and dtau > 0".into()));
        }
        Ok(Self { tau0, dtau, states })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn tau_end(&self) -> f64 {
        self.tau0 + (self.states.len() - 1) as f64 * self.dtau
    }

    pub fn taus(&self) -> Vec<f64> {
        (0..self.states.len()).map(|k| self.tau0 + k as f64 * self.dtau).collect()
    }

    /// Cubic Lagrange interpolation on the four nearest nodes.
    pub fn at(&self, tau: f64) -> Result<AxiField> {
        let slack = 1e-9 * self.dtau;
        if tau < self.tau0 - slack || tau > self.tau_end() + slack {
            return Err(Error::InvalidArgument(format!(
                "tau = {tau} outside [{}, {}]",
                self.tau0,
                self.tau_end()
            )));
        }
        let n = self.states.len();
        let s = ((tau - self.tau0) / self.dtau).clamp(0.0, (n - 1) as f64);
        let k = s.round() as usize;
        if (s - k as f64).abs() < 1e-12 || n == 1 {
            return Ok(self.states[k].clone());
        }
        let width = n.min(4);
        let start = (s.floor() as usize).saturating_sub(1).min(n - width);
        let nodes: Vec<f64> = (start..start + width).map(|j| j as f64).collect();
        let w = &crate::stencil::fornberg_weights(s, &nodes, 0)[0];
        let terms: Vec<(f64, &AxiField)> = w.iter().zip(&self.states[start..start + width]).map(|(c, x)| (*c, x)).collect();
        Ok(AxiField::combination(&terms))
    }

    /// `self − other` at every node; the grids in `τ` must agree.
    pub fn difference(&self, other: &Trajectory) -> Result<Trajectory> {
        if self.states.len() != other.states.len() || (self.tau0 - other.tau0).abs() > 1e-9 * self.dtau || (self.dtau - other.dtau).abs() > 1e-12 * self.dtau {
            return Err(Error::InvalidArgument("trajectories on different tau grids".into()));
        }
        let states = self
            .states
            .iter()
            .zip(&other.states)
            .map(|(a, b)| AxiField::combination(&[(1.0, a), (-1.0, b)]))
            .collect();
        Trajectory::new(self.tau0, self.dtau, states)
    }

    pub fn norm_history(&self, order: usize) -> Vec<NormSample> {
        self.states
            .iter()
            .enumerate()
            .map(|(k, x)| {
                let t = norms(x, order);
                NormSample {
                    tau: self.tau0 + k as f64 * self.dtau,
                    l2: t.l2(),
                    h_n: t.h_norm(order),
                }
            })
            .collect()
    }
}

/// `Ξ^lin(τ) = e^{aτ} η`.
pub fn build_xlim(eta: &AxiField, a: f64, tau: f64) -> AxiField {
    eta.scaled((a * tau).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::axi_fields::{Frame, GridRZ, ZTopology};

    fn eta() -> AxiField {
        let g = GridRZ::new(12, 8, 4.0, ZTopology::Truncated { z_max: 4.0 }).unwrap();
        let mut x = AxiField::zeros(&g, Frame::Similarity);
        x.u_theta = g.sample_centre(|r, z| r * (-(r * r + z * z)).exp());
        x.phi = g.sample_face(|r, z| r * r * (-(r * r + z * z)).exp());
        x
    }

    #[test]
    fn xlim_derivative_is_a_times_xlim() {
        // Richardson-extrapolated central difference
        let (e, a, tau) = (eta(), 0.3, -2.0);
        let d = |h: f64| {
            AxiField::combination(&[(0.5 / h, &build_xlim(&e, a, tau + h)), (-0.5 / h, &build_xlim(&e, a, tau - h))])
        };
        let (d1, d2) = (d(0.1), d(0.05));
        let rich = AxiField::combination(&[(4.0 / 3.0, &d2), (-1.0 / 3.0, &d1)]);
        let want = build_xlim(&e, a, tau).scaled(a);
        let err = AxiField::combination(&[(1.0, &rich), (-1.0, &want)]).max_abs();
        assert!(err < 1e-7 * want.max_abs(), "{err}");
    }

    #[test]
    fn interpolation_is_exact_on_cubics_and_rejects_extrapolation() {
        let e = eta();
        let p = |t: f64| 1.0 - 0.5 * t + 0.25 * t * t - 0.125 * t * t * t;
        let states = (0..9).map(|k| e.scaled(p(-1.0 + 0.25 * k as f64))).collect();
        let tr = Trajectory::new(-1.0, 0.25, states).unwrap();
        for tau in [-1.0, -0.9, -0.13, 0.6, 0.97, 1.0] {
            let x = tr.at(tau).unwrap();
            let want = e.scaled(p(tau));
            let err = AxiField::combination(&[(1.0, &x), (-1.0, &want)]).max_abs();
            assert!(err < 1e-13, "{tau} {err}");
        }
        assert!(tr.at(1.01).is_err());
        assert!(tr.at(-1.01).is_err());
    }

    #[test]
    fn difference_requires_matching_grids() {
        let e = eta();
        let a = Trajectory::new(0.0, 0.5, vec![e.clone(), e.scaled(2.0)]).unwrap();
        let b = Trajectory::new(0.0, 0.5, vec![e.scaled(0.5), e.clone()]).unwrap();
        let d = a.difference(&b).unwrap();
        assert!((d.states[1].max_abs() - e.max_abs()).abs() < 1e-15);
        let c = Trajectory::new(0.1, 0.5, vec![e.clone(), e]).unwrap();
        assert!(a.difference(&c).is_err());
    }
}
