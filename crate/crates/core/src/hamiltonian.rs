//! Separable Hamiltonians `H(q, p) = |p|²/2m + V(q)`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::Vec2;
use crate::profiles::{Mat2, ScalarProfile, TabulatedField};

/// Potential catalog.
#[derive(Clone, Debug)]
pub enum Potential {
    Free,
    /// `½ m ω² |q|²`
    Harmonic { omega: f64 },
    /// `(λ/4) Σ_k q_k⁴`
    Quartic { lambda: f64 },
    /// `a Σ_k (q_k² - b²)²`
    DoubleWell { a: f64, b: f64 },
    /// Periodic samples on a grid, differentiated spectrally.
    Tabulated(Arc<TabulatedField>),
}

impl Potential {
    pub fn name(&self) -> &'static str {
        match self {
            Potential::Free => "free",
            Potential::Harmonic { .. } => "harmonic",
            Potential::Quartic { .. } => "quartic",
            Potential::DoubleWell { .. } => "double_well",
            Potential::Tabulated(_) => "tabulated",
        }
    }

    fn validate(&self, dim: usize) -> Result<()> {
        let finite = |key: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::scenario(format!("potential.{key}"), "must be finite"))
            }
        };
        match *self {
            Potential::Free => Ok(()),
            Potential::Harmonic { omega } => {
                finite("omega", omega)?;
                if omega > 0.0 {
                    Ok(())
                } else {
                    Err(Error::scenario(
                        "potential.omega",
                        format!("must be positive, got {omega}"),
                    ))
                }
            }
            Potential::Quartic { lambda } => {
                finite("lambda", lambda)?;
                if lambda >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::scenario(
                        "potential.lambda",
                        format!("must be non-negative, got {lambda}"),
                    ))
                }
            }
            Potential::DoubleWell { a, b } => {
                finite("a", a)?;
                finite("b", b)?;
                if a > 0.0 {
                    Ok(())
                } else {
                    Err(Error::scenario("potential.a", format!("must be positive, got {a}")))
                }
            }
            Potential::Tabulated(ref t) => {
                if t.grid().dim() == dim {
                    Ok(())
                } else {
                    Err(Error::scenario(
                        "potential",
                        format!(
                            "tabulated potential is {}D but the Hamiltonian is {dim}D",
                            t.grid().dim()
                        ),
                    ))
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Hamiltonian {
    dim: usize,
    mass: f64,
    potential: Potential,
}

impl Hamiltonian {
    pub fn new(dim: usize, mass: f64, potential: Potential) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::config(format!("dimension must be 1 or 2, got {dim}")));
        }
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::scenario(
                "hamiltonian.mass",
                format!("must be positive, got {mass}"),
            ));
        }
        potential.validate(dim)?;
        Ok(Self {
            dim,
            mass,
            potential,
        })
    }

    pub fn free(dim: usize, mass: f64) -> Result<Self> {
        Self::new(dim, mass, Potential::Free)
    }

    pub fn harmonic(dim: usize, mass: f64, omega: f64) -> Result<Self> {
        Self::new(dim, mass, Potential::Harmonic { omega })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn potential_kind(&self) -> &Potential {
        &self.potential
    }

    pub fn potential(&self, q: Vec2) -> f64 {
        let d = self.dim;
        match self.potential {
            Potential::Free => 0.0,
            Potential::Harmonic { omega } => {
                0.5 * self.mass * omega * omega * q[..d].iter().map(|x| x * x).sum::<f64>()
            }
            Potential::Quartic { lambda } => 0.25 * lambda * q[..d].iter().map(|x| x.powi(4)).sum::<f64>(),
            Potential::DoubleWell { a, b } => {
                a * q[..d].iter().map(|x| (x * x - b * b).powi(2)).sum::<f64>()
            }
            Potential::Tabulated(ref t) => t.value(q),
        }
    }

    /// `∇V(q)`.
    pub fn potential_gradient(&self, q: Vec2) -> Vec2 {
        let mut g = [0.0; 2];
        match self.potential {
            Potential::Free => {}
            Potential::Harmonic { omega } => {
                for k in 0..self.dim {
                    g[k] = self.mass * omega * omega * q[k];
                }
            }
            Potential::Quartic { lambda } => {
                for k in 0..self.dim {
                    g[k] = lambda * q[k].powi(3);
                }
            }
            Potential::DoubleWell { a, b } => {
                for k in 0..self.dim {
                    g[k] = 4.0 * a * q[k] * (q[k] * q[k] - b * b);
                }
            }
            Potential::Tabulated(ref t) => g = t.gradient(q),
        }
        g
    }

    /// `∂²V/∂q_i∂q_j`.
    pub fn potential_hessian(&self, q: Vec2) -> Mat2 {
        let mut h = [[0.0; 2]; 2];
        match self.potential {
            Potential::Free => {}
            Potential::Harmonic { omega } => {
                for k in 0..self.dim {
                    h[k][k] = self.mass * omega * omega;
                }
            }
            Potential::Quartic { lambda } => {
                for k in 0..self.dim {
                    h[k][k] = 3.0 * lambda * q[k] * q[k];
                }
            }
            Potential::DoubleWell { a, b } => {
                for k in 0..self.dim {
                    h[k][k] = 4.0 * a * (3.0 * q[k] * q[k] - b * b);
                }
            }
            Potential::Tabulated(ref t) => h = t.hessian(q),
        }
        h
    }

    pub fn kinetic(&self, p: Vec2) -> f64 {
        p[..self.dim].iter().map(|x| x * x).sum::<f64>() / (2.0 * self.mass)
    }

    pub fn energy(&self, q: Vec2, p: Vec2) -> f64 {
        self.kinetic(p) + self.potential(q)
    }

    /// `V_k = ∂H/∂p_k = p_k / m`.
    pub fn velocity_map(&self, p: Vec2) -> Vec2 {
        let mut v = [0.0; 2];
        for k in 0..self.dim {
            v[k] = p[k] / self.mass;
        }
        v
    }

    /// `-∂H/∂q_k = -∂V/∂q_k`.
    pub fn force(&self, q: Vec2) -> Vec2 {
        let g = self.potential_gradient(q);
        [-g[0], -g[1]]
    }

    /// `L̄ = p·∂H/∂p - H`, which is `|p|²/2m - V(q)` for the separable form.
    pub fn lagrangian(&self, q: Vec2, p: Vec2) -> f64 {
        self.kinetic(p) - self.potential(q)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::profiles::GaussianBump;
    use proptest::prelude::*;

    #[test]
    fn velocity_map_examples() {
        let h1 = Hamiltonian::free(1, 1.0).unwrap();
        assert_eq!(h1.velocity_map([3.0, 0.0]), [3.0, 0.0]);
        let h2 = Hamiltonian::free(1, 2.0).unwrap();
        assert_eq!(h2.velocity_map([3.0, 0.0]), [1.5, 0.0]);
        let h3 = Hamiltonian::free(2, 1.0).unwrap();
        assert_eq!(h3.velocity_map([1.0, -2.0]), [1.0, -2.0]);
    }

    #[test]
    fn force_examples() {
        let h = Hamiltonian::harmonic(1, 1.0, 1.0).unwrap();
        assert_eq!(h.force([0.5, 0.0])[0], -0.5);
        let f = Hamiltonian::free(2, 1.0).unwrap();
        assert_eq!(f.force([3.0, -1.0]), [0.0, 0.0]);
        let quartic = Hamiltonian::new(1, 1.0, Potential::Quartic { lambda: 1.0 }).unwrap();
        assert_eq!(quartic.force([2.0, 0.0])[0], -8.0);
    }

    #[test]
    fn lagrangian_examples() {
        let f = Hamiltonian::free(1, 1.0).unwrap();
        assert_eq!(f.lagrangian([0.0; 2], [1.0, 0.0]), 0.5);
        let h = Hamiltonian::harmonic(1, 1.0, 1.0).unwrap();
        assert_eq!(h.lagrangian([1.0, 0.0], [0.0, 0.0]), -0.5);
        assert_eq!(h.lagrangian([1.0, 0.0], [1.0, 0.0]), 0.0);
    }

    #[test]
    fn validation() {
        assert!(Hamiltonian::harmonic(1, 1.0, -1.0).is_err());
        assert!(Hamiltonian::free(1, 0.0).is_err());
        assert!(Hamiltonian::free(3, 1.0).is_err());
    }

    #[test]
    fn double_well_is_one_dimensional_in_1d() {
        let h = Hamiltonian::new(1, 1.0, Potential::DoubleWell { a: 1.0, b: 1.0 }).unwrap();
        assert_eq!(h.potential([1.0, 0.0]), 0.0);
        assert_eq!(h.potential([0.0, 0.0]), 1.0);
    }

    #[test]
    fn tabulated_force_matches_spectral_derivative() {
        let grid = Grid::line(24.0, 256).unwrap();
        let well = GaussianBump {
            dim: 1,
            amplitude: -2.0,
            center: [0.0; 2],
            width: 1.5,
        };
        let table = TabulatedField::new(grid.clone(), grid.sample(|q| well.value(q))).unwrap();
        let spectral = grid.spectral_derivative(table.samples(), 0, 1).unwrap();
        let h = Hamiltonian::new(1, 1.0, Potential::Tabulated(Arc::new(table))).unwrap();
        for (i, q) in grid.positions().into_iter().enumerate() {
            assert!((h.force(q)[0] + spectral[i]).abs() < 1e-10);
            assert!((h.force(q)[0] + well.gradient(q)[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let cases = [
            Potential::Harmonic { omega: 1.3 },
            Potential::Quartic { lambda: 0.7 },
            Potential::DoubleWell { a: 0.5, b: 1.2 },
        ];
        for pot in cases {
            let h = Hamiltonian::new(2, 1.7, pot).unwrap();
            let q = [0.4, -0.9];
            let fd = crate::profiles::fd_gradient(&|x| h.potential(x), q, 1e-5);
            let g = h.potential_gradient(q);
            assert!((fd[0] - g[0]).abs() < 1e-8 && (fd[1] - g[1]).abs() < 1e-8);
            let fd_h = crate::profiles::fd_gradient(&|x| h.potential_gradient(x)[0], q, 1e-5);
            let hh = h.potential_hessian(q);
            assert!((fd_h[0] - hh[0][0]).abs() < 1e-7 && (fd_h[1] - hh[0][1]).abs() < 1e-7);
        }
    }

    proptest! {
        #[test]
        fn lagrangian_is_kinetic_minus_potential(q in -3.0f64..3.0, p in -3.0f64..3.0, m in 0.1f64..5.0) {
            let h = Hamiltonian::new(1, m, Potential::DoubleWell { a: 0.3, b: 1.0 }).unwrap();
            let l = h.lagrangian([q, 0.0], [p, 0.0]);
            prop_assert!((l - (p * p / (2.0 * m) - h.potential([q, 0.0]))).abs() < 1e-14);
            prop_assert!((l - (2.0 * h.kinetic([p, 0.0]) - h.energy([q, 0.0], [p, 0.0]))).abs() < 1e-12);
        }
    }
}
