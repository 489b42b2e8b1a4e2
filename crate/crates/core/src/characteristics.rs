//! Time integration of canonical characteristics.
//!
//! Besides `(q, p)` every characteristic carries the accumulated action
//! `∫ L̄ dt` and the tangent map `(∂q/∂q0, ∂p/∂q0)` used for caustic
//! detection and for the density Jacobian.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Vec2;
use crate::hamiltonian::Hamiltonian;
use crate::profiles::Mat2;

/// Time-stepping scheme for characteristics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Kick-drift-kick leapfrog; symplectic, second order.
    StormerVerlet,
    /// Classical fourth-order Runge-Kutta.
    #[default]
    Rk4,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Characteristic {
    pub q: Vec2,
    pub p: Vec2,
    /// Accumulated `∫ L̄ dt` plus whatever initial value was seeded.
    pub action: f64,
    /// `∂q/∂q0`
    pub dq: Mat2,
    /// `∂p/∂q0`
    pub dp: Mat2,
}

const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];

impl Characteristic {
    pub fn new(q: Vec2, p: Vec2) -> Self {
        Self {
            q,
            p,
            action: 0.0,
            dq: IDENTITY,
            dp: [[0.0; 2]; 2],
        }
    }

    /// Seeds a characteristic on the surface `p = M0(q)` with initial action
    /// `s0` and momentum-field Jacobian `∂M0/∂q`.
    pub fn on_surface(q: Vec2, p: Vec2, s0: f64, jacobian: Mat2) -> Self {
        Self {
            q,
            p,
            action: s0,
            dq: IDENTITY,
            dp: jacobian,
        }
    }

    /// `det ∂q/∂q0` restricted to the first `dim` axes.
    pub fn jacobian_det(&self, dim: usize) -> f64 {
        if dim == 1 {
            self.dq[0][0]
        } else {
            self.dq[0][0] * self.dq[1][1] - self.dq[0][1] * self.dq[1][0]
        }
    }

    fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.p).all(|x| x.is_finite())
            && self.action.is_finite()
            && self.dq.iter().flatten().chain(self.dp.iter().flatten()).all(|x| x.is_finite())
    }

    fn axpy(&self, a: f64, k: &Self) -> Self {
        let mut out = *self;
        for i in 0..2 {
            out.q[i] += a * k.q[i];
            out.p[i] += a * k.p[i];
            for j in 0..2 {
                out.dq[i][j] += a * k.dq[i][j];
                out.dp[i][j] += a * k.dp[i][j];
            }
        }
        out.action += a * k.action;
        out
    }
}

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

/// A configured canonical flow: Hamiltonian, nominal step and scheme.
#[derive(Clone, Copy, Debug)]
pub struct Flow<'a> {
    pub hamiltonian: &'a Hamiltonian,
    pub dt: f64,
    pub scheme: Integrator,
    /// Propagate the tangent map as well.
    pub tangent: bool,
}

impl<'a> Flow<'a> {
    pub fn new(hamiltonian: &'a Hamiltonian, dt: f64, scheme: Integrator) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::argument(format!("time step must be positive, got {dt}")));
        }
        Ok(Self {
            hamiltonian,
            dt,
            scheme,
            tangent: true,
        })
    }

    pub fn without_tangent(mut self) -> Self {
        self.tangent = false;
        self
    }

    fn rhs(&self, c: &Characteristic) -> Characteristic {
        let h = self.hamiltonian;
        let m = h.mass();
        let force = h.force(c.q);
        let mut d = Characteristic {
            q: h.velocity_map(c.p),
            p: force,
            action: h.lagrangian(c.q, c.p),
            dq: [[0.0; 2]; 2],
            dp: [[0.0; 2]; 2],
        };
        if self.tangent {
            let hess = h.potential_hessian(c.q);
            let hd = mat_mul(&hess, &c.dq);
            for i in 0..2 {
                for j in 0..2 {
                    d.dq[i][j] = c.dp[i][j] / m;
                    d.dp[i][j] = -hd[i][j];
                }
            }
        }
        d
    }

    fn rk4_step(&self, c: &Characteristic, h: f64) -> Characteristic {
        let k1 = self.rhs(c);
        let k2 = self.rhs(&c.axpy(0.5 * h, &k1));
        let k3 = self.rhs(&c.axpy(0.5 * h, &k2));
        let k4 = self.rhs(&c.axpy(h, &k3));
        let mut out = c.axpy(h / 6.0, &k1);
        out = out.axpy(h / 3.0, &k2);
        out = out.axpy(h / 3.0, &k3);
        out.axpy(h / 6.0, &k4)
    }

    fn verlet_step(&self, c: &Characteristic, h: f64) -> Characteristic {
        let ham = self.hamiltonian;
        let m = ham.mass();
        let l_start = ham.lagrangian(c.q, c.p);
        let mut out = *c;
        let f0 = ham.force(out.q);
        for k in 0..2 {
            out.p[k] += 0.5 * h * f0[k];
        }
        if self.tangent {
            let hd = mat_mul(&ham.potential_hessian(out.q), &out.dq);
            for i in 0..2 {
                for j in 0..2 {
                    out.dp[i][j] -= 0.5 * h * hd[i][j];
                }
            }
        }
        let v = ham.velocity_map(out.p);
        for k in 0..2 {
            out.q[k] += h * v[k];
        }
        if self.tangent {
            for i in 0..2 {
                for j in 0..2 {
                    out.dq[i][j] += h * out.dp[i][j] / m;
                }
            }
        }
        let f1 = ham.force(out.q);
        for k in 0..2 {
            out.p[k] += 0.5 * h * f1[k];
        }
        if self.tangent {
            let hd = mat_mul(&ham.potential_hessian(out.q), &out.dq);
            for i in 0..2 {
                for j in 0..2 {
                    out.dp[i][j] -= 0.5 * h * hd[i][j];
                }
            }
        }
        out.action += 0.5 * h * (l_start + ham.lagrangian(out.q, out.p));
        out
    }

    /// One step of signed size `h`.
    pub fn step(&self, c: &Characteristic, h: f64) -> Characteristic {
        match self.scheme {
            Integrator::Rk4 => self.rk4_step(c, h),
            Integrator::StormerVerlet => self.verlet_step(c, h),
        }
    }

    /// Number of equal steps used to cover `duration`.
    pub fn steps_for(&self, duration: f64) -> usize {
        ((duration.abs() / self.dt) - 1e-9).ceil().max(1.0) as usize
    }

    /// Advances by `duration` (negative values integrate backward) using
    /// equal steps no longer than the nominal `dt`.
    pub fn advance(&self, c: &Characteristic, duration: f64) -> Result<Characteristic> {
        if duration == 0.0 {
            return Ok(*c);
        }
        let n = self.steps_for(duration);
        let h = duration / n as f64;
        let mut cur = *c;
        for i in 0..n {
            cur = self.step(&cur, h);
            if !cur.is_finite() {
                return Err(Error::NumericalBlowup {
                    t: (i + 1) as f64 * h,
                    what: "characteristic left the finite range".into(),
                });
            }
        }
        Ok(cur)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn tangent_matches_finite_difference_of_flow() {
        let h = Hamiltonian::new(1, 1.3, crate::hamiltonian::Potential::Quartic { lambda: 0.8 }).unwrap();
        let flow = Flow::new(&h, 1e-3, Integrator::Rk4).unwrap();
        let eps = 1e-6;
        let base = flow.advance(&Characteristic::new([0.7, 0.0], [0.2, 0.0]), 1.5).unwrap();
        let plus = flow.advance(&Characteristic::new([0.7 + eps, 0.0], [0.2, 0.0]), 1.5).unwrap();
        let minus = flow.advance(&Characteristic::new([0.7 - eps, 0.0], [0.2, 0.0]), 1.5).unwrap();
        let dq_fd = (plus.q[0] - minus.q[0]) / (2.0 * eps);
        let dp_fd = (plus.p[0] - minus.p[0]) / (2.0 * eps);
        assert!((base.dq[0][0] - dq_fd).abs() < 1e-7);
        assert!((base.dp[0][0] - dp_fd).abs() < 1e-7);
    }

    #[test]
    fn verlet_conserves_energy_without_drift() {
        let h = Hamiltonian::harmonic(1, 1.0, 1.0).unwrap();
        let flow = Flow::new(&h, 1e-2, Integrator::StormerVerlet).unwrap();
        let c0 = Characteristic::new([1.0, 0.0], [0.0, 0.0]);
        let e0 = h.energy(c0.q, c0.p);
        let c = flow.advance(&c0, 100.0 * PI).unwrap();
        assert!((h.energy(c.q, c.p) - e0).abs() < 1e-4);
    }

    #[test]
    fn backward_undoes_forward() {
        let h = Hamiltonian::harmonic(1, 1.0, 2.0).unwrap();
        let flow = Flow::new(&h, 1e-3, Integrator::Rk4).unwrap();
        let c0 = Characteristic::new([0.3, 0.0], [-0.4, 0.0]);
        let back = flow.advance(&flow.advance(&c0, 1.7).unwrap(), -1.7).unwrap();
        assert!((back.q[0] - 0.3).abs() < 1e-12 && (back.p[0] + 0.4).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_step() {
        let h = Hamiltonian::free(1, 1.0).unwrap();
        assert!(Flow::new(&h, 0.0, Integrator::Rk4).is_err());
    }
}
