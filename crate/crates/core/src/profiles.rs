//! Analytic and tabulated scalar/vector fields on configuration space.
//!
//! These supply initial data (actions, densities, momentum fields) and
//! tabulated potentials to the solvers. Each profile can be evaluated at an
//! arbitrary point together with its first and second derivatives.

use std::f64::consts::PI;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{Grid, Vec2};
use crate::interp::HermiteTable;

pub type Mat2 = [[f64; 2]; 2];

/// A scalar field with derivatives.
pub trait ScalarProfile: Send + Sync {
    fn value(&self, q: Vec2) -> f64;
    fn gradient(&self, q: Vec2) -> Vec2;
    fn hessian(&self, q: Vec2) -> Mat2;
}

/// A vector (momentum) field with its Jacobian `∂M_i/∂q_j`.
pub trait MomentumProfile: Send + Sync {
    fn momentum(&self, q: Vec2) -> Vec2;
    fn jacobian(&self, q: Vec2) -> Mat2;
}

/// The gradient field `∇S` of a scalar profile.
#[derive(Clone)]
pub struct GradientOf(pub Arc<dyn ScalarProfile>);

impl MomentumProfile for GradientOf {
    fn momentum(&self, q: Vec2) -> Vec2 {
        self.0.gradient(q)
    }

    fn jacobian(&self, q: Vec2) -> Mat2 {
        self.0.hessian(q)
    }
}

/// `c + b·q + ½ qᵀ A q` with symmetric `A`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quadratic {
    pub constant: f64,
    pub linear: Vec2,
    pub curvature: Mat2,
}

impl Quadratic {
    pub fn zero() -> Self {
        Self {
            constant: 0.0,
            linear: [0.0; 2],
            curvature: [[0.0; 2]; 2],
        }
    }

    /// Plane-wave action `p0·q`.
    pub fn plane(p0: Vec2) -> Self {
        Self {
            linear: p0,
            ..Self::zero()
        }
    }

    /// Isotropic `½ a |q|²` (focusing for `a < 0`).
    pub fn isotropic(a: f64) -> Self {
        Self {
            curvature: [[a, 0.0], [0.0, a]],
            ..Self::zero()
        }
    }
}

impl ScalarProfile for Quadratic {
    fn value(&self, q: Vec2) -> f64 {
        let a = &self.curvature;
        self.constant
            + self.linear[0] * q[0]
            + self.linear[1] * q[1]
            + 0.5 * (a[0][0] * q[0] * q[0] + 2.0 * a[0][1] * q[0] * q[1] + a[1][1] * q[1] * q[1])
    }

    fn gradient(&self, q: Vec2) -> Vec2 {
        let a = &self.curvature;
        [
            self.linear[0] + a[0][0] * q[0] + a[0][1] * q[1],
            self.linear[1] + a[1][0] * q[0] + a[1][1] * q[1],
        ]
    }

    fn hessian(&self, _q: Vec2) -> Mat2 {
        self.curvature
    }
}

/// Affine momentum field `M(q) = b + A q`, not necessarily a gradient.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AffineMomentum {
    pub offset: Vec2,
    pub matrix: Mat2,
}

impl AffineMomentum {
    /// The rigid-rotation field `(-q2, q1)` scaled by `omega`.
    pub fn rotation(omega: f64) -> Self {
        Self {
            offset: [0.0; 2],
            matrix: [[0.0, -omega], [omega, 0.0]],
        }
    }
}

impl MomentumProfile for AffineMomentum {
    fn momentum(&self, q: Vec2) -> Vec2 {
        let a = &self.matrix;
        [
            self.offset[0] + a[0][0] * q[0] + a[0][1] * q[1],
            self.offset[1] + a[1][0] * q[0] + a[1][1] * q[1],
        ]
    }

    fn jacobian(&self, _q: Vec2) -> Mat2 {
        self.matrix
    }
}

/// Normalized Gaussian probability density with independent axes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianDensity {
    pub dim: usize,
    pub center: Vec2,
    pub sigma: Vec2,
}

impl GaussianDensity {
    pub fn new(dim: usize, center: Vec2, sigma: Vec2) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::argument(format!("dimension must be 1 or 2, got {dim}")));
        }
        if sigma[..dim].iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::argument("gaussian widths must be positive"));
        }
        Ok(Self { dim, center, sigma })
    }

    pub fn centered(dim: usize, sigma: f64) -> Self {
        Self {
            dim,
            center: [0.0; 2],
            sigma: [sigma; 2],
        }
    }

    fn log_derivs(&self, q: Vec2) -> (Vec2, Vec2) {
        // ∂ ln ρ and ∂² ln ρ per axis
        let mut g = [0.0; 2];
        let mut h = [0.0; 2];
        for k in 0..self.dim {
            let s2 = self.sigma[k] * self.sigma[k];
            g[k] = -(q[k] - self.center[k]) / s2;
            h[k] = -1.0 / s2;
        }
        (g, h)
    }
}

impl ScalarProfile for GaussianDensity {
    fn value(&self, q: Vec2) -> f64 {
        (0..self.dim)
            .map(|k| {
                let z = (q[k] - self.center[k]) / self.sigma[k];
                (-0.5 * z * z).exp() / (self.sigma[k] * (2.0 * PI).sqrt())
            })
            .product()
    }

    fn gradient(&self, q: Vec2) -> Vec2 {
        let rho = self.value(q);
        let (g, _) = self.log_derivs(q);
        [rho * g[0], rho * g[1]]
    }

    fn hessian(&self, q: Vec2) -> Mat2 {
        let rho = self.value(q);
        let (g, h) = self.log_derivs(q);
        [
            [rho * (g[0] * g[0] + h[0]), rho * g[0] * g[1]],
            [rho * g[0] * g[1], rho * (g[1] * g[1] + h[1])],
        ]
    }
}

/// Localized bump `a·exp(-|q - c|² / w²)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianBump {
    pub dim: usize,
    pub amplitude: f64,
    pub center: Vec2,
    pub width: f64,
}

impl ScalarProfile for GaussianBump {
    fn value(&self, q: Vec2) -> f64 {
        let r2: f64 = (0..self.dim).map(|k| (q[k] - self.center[k]).powi(2)).sum();
        self.amplitude * (-r2 / (self.width * self.width)).exp()
    }

    fn gradient(&self, q: Vec2) -> Vec2 {
        let v = self.value(q);
        let w2 = self.width * self.width;
        let mut g = [0.0; 2];
        for k in 0..self.dim {
            g[k] = -2.0 * (q[k] - self.center[k]) / w2 * v;
        }
        g
    }

    fn hessian(&self, q: Vec2) -> Mat2 {
        let v = self.value(q);
        let w2 = self.width * self.width;
        let mut h = [[0.0; 2]; 2];
        for i in 0..self.dim {
            for j in 0..self.dim {
                let di = q[i] - self.center[i];
                let dj = q[j] - self.center[j];
                let delta = if i == j { 1.0 } else { 0.0 };
                h[i][j] = v * (4.0 * di * dj / (w2 * w2) - 2.0 * delta / w2);
            }
        }
        h
    }
}

/// Uniform density over the whole periodic box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniformDensity {
    pub volume: f64,
}

impl ScalarProfile for UniformDensity {
    fn value(&self, _q: Vec2) -> f64 {
        1.0 / self.volume
    }

    fn gradient(&self, _q: Vec2) -> Vec2 {
        [0.0; 2]
    }

    fn hessian(&self, _q: Vec2) -> Mat2 {
        [[0.0; 2]; 2]
    }
}

/// A periodic field tabulated on a grid.
///
/// Derivative tables are built spectrally once; evaluation between nodes is
/// periodic Catmull-Rom interpolation of the value and derivative tables.
#[derive(Clone, Debug)]
pub struct TabulatedField {
    grid: Grid,
    value: HermiteTable,
    gradient: Vec<HermiteTable>,
    hessian: Vec<Vec<HermiteTable>>,
}

impl TabulatedField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        grid.check_len(values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("tabulated field has non-finite samples"));
        }
        let dim = grid.dim();
        let gradient = grid.gradient(&values)?;
        let mut hessian = Vec::with_capacity(dim);
        for i in 0..dim {
            let mut row = Vec::with_capacity(dim);
            for j in 0..dim {
                let h = if i == j {
                    grid.spectral_derivative(&values, i, 2)?
                } else {
                    grid.spectral_derivative(&gradient[j], i, 1)?
                };
                row.push(HermiteTable::new(&grid, h)?);
            }
            hessian.push(row);
        }
        let gradient = gradient
            .into_iter()
            .map(|g| HermiteTable::new(&grid, g))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            value: HermiteTable::new(&grid, values)?,
            grid,
            gradient,
            hessian,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        self.value.samples()
    }

    /// Gradient samples at the grid nodes (exact spectral values).
    pub fn gradient_samples(&self) -> Vec<&[f64]> {
        self.gradient.iter().map(|g| g.samples()).collect()
    }
}

impl ScalarProfile for TabulatedField {
    fn value(&self, q: Vec2) -> f64 {
        self.value.eval(&self.grid, q)
    }

    fn gradient(&self, q: Vec2) -> Vec2 {
        let mut g = [0.0; 2];
        for (k, gk) in g.iter_mut().enumerate().take(self.grid.dim()) {
            *gk = self.gradient[k].eval(&self.grid, q);
        }
        g
    }

    fn hessian(&self, q: Vec2) -> Mat2 {
        let mut h = [[0.0; 2]; 2];
        let d = self.grid.dim();
        for i in 0..d {
            for j in 0..d {
                h[i][j] = self.hessian[i][j].eval(&self.grid, q);
            }
        }
        h
    }
}

/// Central-difference check helper used by tests across the crate.
#[cfg(test)]
pub(crate) fn fd_gradient(f: &dyn Fn(Vec2) -> f64, q: Vec2, h: f64) -> Vec2 {
    let mut g = [0.0; 2];
    for k in 0..2 {
        let mut a = q;
        let mut b = q;
        a[k] += h;
        b[k] -= h;
        g[k] = (f(a) - f(b)) / (2.0 * h);
    }
    g
}
