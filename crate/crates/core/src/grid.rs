//! Uniform periodic lattices with Fourier-collocation calculus.
//!
//! A [`Grid`] samples the box `[-L/2, L/2)` on every axis with a power-of-two
//! number of points. Samples are stored row-major: the last axis is
//! contiguous, so a 2D index `(i0, i1)` maps to `i0 * n1 + i1`.

use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in (at most two-dimensional) configuration space.
///
/// One-dimensional problems keep the second component at zero.
pub type Vec2 = [f64; 2];

/// Largest supported configuration-space dimension.
pub const MAX_DIM: usize = 2;

struct AxisPlan {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// Uniform periodic sample lattice over configuration space.
#[derive(Clone)]
pub struct Grid {
    dim: usize,
    extent: [f64; MAX_DIM],
    points: [usize; MAX_DIM],
    plans: Arc<Vec<AxisPlan>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("dim", &self.dim)
            .field("extent", &&self.extent[..self.dim])
            .field("points", &&self.points[..self.dim])
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.extent == other.extent && self.points == other.points
    }
}

impl Grid {
    pub fn new(extent: &[f64], points: &[usize]) -> Result<Self> {
        let dim = extent.len();
        if dim == 0 || dim > MAX_DIM {
            return Err(Error::config(format!(
                "grid dimension must be 1 or 2, got {dim}"
            )));
        }
        if points.len() != dim {
            return Err(Error::config(format!(
                "grid has {dim} extents but {} point counts",
                points.len()
            )));
        }
        let mut ext = [0.0; MAX_DIM];
        let mut pts = [1usize; MAX_DIM];
        let mut planner = FftPlanner::new();
        let mut plans = Vec::with_capacity(dim);
        for axis in 0..dim {
            let (l, n) = (extent[axis], points[axis]);
            if !(l.is_finite() && l > 0.0) {
                return Err(Error::config(format!(
                    "extent on axis {axis} must be positive, got {l}"
                )));
            }
            if n < 2 || !n.is_power_of_two() {
                return Err(Error::config(format!(
                    "points on axis {axis} must be a power of two >= 2, got {n}"
                )));
            }
            ext[axis] = l;
            pts[axis] = n;
            plans.push(AxisPlan {
                forward: planner.plan_fft_forward(n),
                inverse: planner.plan_fft_inverse(n),
            });
        }
        Ok(Self {
            dim,
            extent: ext,
            points: pts,
            plans: Arc::new(plans),
        })
    }

    /// One-dimensional grid on `[-extent/2, extent/2)`.
    pub fn line(extent: f64, points: usize) -> Result<Self> {
        Self::new(&[extent], &[points])
    }

    /// Two-dimensional grid with identical axes.
    pub fn square(extent: f64, points: usize) -> Result<Self> {
        Self::new(&[extent, extent], &[points, points])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total number of samples.
    pub fn len(&self) -> usize {
        self.points[..self.dim].iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self, axis: usize) -> usize {
        self.points[axis]
    }

    pub fn extent(&self, axis: usize) -> f64 {
        self.extent[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extent[axis] / self.points[axis] as f64
    }

    /// Lower edge `-L/2` of an axis.
    pub fn origin(&self, axis: usize) -> f64 {
        -0.5 * self.extent[axis]
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.origin(axis) + i as f64 * self.spacing(axis)
    }

    pub fn coords(&self, axis: usize) -> Vec<f64> {
        (0..self.points[axis]).map(|i| self.coord(axis, i)).collect()
    }

    /// Volume element `Π dx_k` of one cell.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|k| self.spacing(k)).product()
    }

    /// Measure of the whole periodic box.
    pub fn volume(&self) -> f64 {
        self.extent[..self.dim].iter().product()
    }

    /// Flat index of a multi-index. Components beyond `dim` are ignored.
    pub fn index(&self, idx: [usize; MAX_DIM]) -> usize {
        if self.dim == 1 {
            idx[0]
        } else {
            idx[0] * self.points[1] + idx[1]
        }
    }

    pub fn multi_index(&self, flat: usize) -> [usize; MAX_DIM] {
        if self.dim == 1 {
            [flat, 0]
        } else {
            [flat / self.points[1], flat % self.points[1]]
        }
    }

    pub fn position(&self, flat: usize) -> Vec2 {
        let idx = self.multi_index(flat);
        let mut q = [0.0; MAX_DIM];
        for (k, qk) in q.iter_mut().enumerate().take(self.dim) {
            *qk = self.coord(k, idx[k]);
        }
        q
    }

    /// Sample positions in storage order.
    pub fn positions(&self) -> Vec<Vec2> {
        (0..self.len()).map(|i| self.position(i)).collect()
    }

    /// Evaluates `f` at every node.
    pub fn sample<T>(&self, f: impl Fn(Vec2) -> T) -> Vec<T> {
        (0..self.len()).map(|i| f(self.position(i))).collect()
    }

    /// Angular wavenumbers in FFT order: `0, 1, .., n/2 - 1, -n/2, .., -1` times `2π/L`.
    pub fn wavenumbers(&self, axis: usize) -> Vec<f64> {
        let n = self.points[axis];
        let scale = 2.0 * std::f64::consts::PI / self.extent[axis];
        (0..n)
            .map(|i| {
                let m = if i < n / 2 {
                    i as f64
                } else {
                    i as f64 - n as f64
                };
                m * scale
            })
            .collect()
    }

    /// Wraps a coordinate into `[-L/2, L/2)`.
    pub fn wrap(&self, axis: usize, x: f64) -> f64 {
        let l = self.extent[axis];
        let o = self.origin(axis);
        o + (x - o).rem_euclid(l)
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if n == self.len() {
            Ok(())
        } else {
            Err(Error::Shape {
                expected: self.len(),
                got: n,
            })
        }
    }

    fn stride(&self, axis: usize) -> usize {
        if self.dim == 2 && axis == 0 {
            self.points[1]
        } else {
            1
        }
    }

    /// In-place unnormalized DFT along one axis.
    pub(crate) fn fft_axis(&self, data: &mut [Complex64], axis: usize, inverse: bool) {
        let plan = &self.plans[axis];
        let fft = if inverse { &plan.inverse } else { &plan.forward };
        let n = self.points[axis];
        let stride = self.stride(axis);
        if stride == 1 {
            fft.process(data);
            return;
        }
        let lines = data.len() / n;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for line in 0..lines {
            // axis 0 of a 2D grid: line enumerates the contiguous axis
            for (j, b) in buf.iter_mut().enumerate() {
                *b = data[j * stride + line];
            }
            fft.process(&mut buf);
            for (j, b) in buf.iter().enumerate() {
                data[j * stride + line] = *b;
            }
        }
    }

    /// Forward transform over every axis.
    pub fn forward(&self, data: &mut [Complex64]) {
        for axis in 0..self.dim {
            self.fft_axis(data, axis, false);
        }
    }

    /// Inverse transform over every axis, normalized so that
    /// `inverse(forward(x)) == x`.
    pub fn inverse(&self, data: &mut [Complex64]) {
        for axis in 0..self.dim {
            self.fft_axis(data, axis, true);
        }
        let scale = 1.0 / self.len() as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }

    /// Multiplies each Fourier mode by `factor(k_axis)` along one axis.
    fn apply_axis_multiplier(
        &self,
        data: &mut [Complex64],
        axis: usize,
        factor: impl Fn(usize, f64) -> Complex64,
    ) {
        let k = self.wavenumbers(axis);
        let stride = self.stride(axis);
        let n = self.points[axis];
        for (flat, z) in data.iter_mut().enumerate() {
            let i = (flat / stride) % n;
            *z *= factor(i, k[i]);
        }
    }

    fn check_order(order: u32) -> Result<()> {
        if order == 1 || order == 2 {
            Ok(())
        } else {
            Err(Error::argument(format!(
                "derivative order must be 1 or 2, got {order}"
            )))
        }
    }

    fn check_axis(&self, axis: usize) -> Result<()> {
        if axis < self.dim {
            Ok(())
        } else {
            Err(Error::argument(format!(
                "axis {axis} out of range for a {}D grid",
                self.dim
            )))
        }
    }

    fn derivative_in_place(&self, data: &mut [Complex64], axis: usize, order: u32) {
        let n = self.points[axis];
        self.fft_axis(data, axis, false);
        self.apply_axis_multiplier(data, axis, |i, k| {
            // the Nyquist mode has no odd-order derivative on a real grid
            if order % 2 == 1 && i == n / 2 {
                return Complex64::new(0.0, 0.0);
            }
            let ik = Complex64::new(0.0, k);
            ik.powu(order) / n as f64
        });
        self.fft_axis(data, axis, true);
    }

    /// Fourier-collocation derivative of a real field along `axis`.
    pub fn spectral_derivative(&self, field: &[f64], axis: usize, order: u32) -> Result<Vec<f64>> {
        self.check_len(field.len())?;
        self.check_axis(axis)?;
        Self::check_order(order)?;
        let mut data: Vec<Complex64> = field.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.derivative_in_place(&mut data, axis, order);
        Ok(data.into_iter().map(|z| z.re).collect())
    }

    /// Fourier-collocation derivative of a complex field along `axis`.
    pub fn spectral_derivative_complex(
        &self,
        field: &[Complex64],
        axis: usize,
        order: u32,
    ) -> Result<Vec<Complex64>> {
        self.check_len(field.len())?;
        self.check_axis(axis)?;
        Self::check_order(order)?;
        let mut data = field.to_vec();
        self.derivative_in_place(&mut data, axis, order);
        Ok(data)
    }

    /// Spectral gradient, one component per axis.
    pub fn gradient(&self, field: &[f64]) -> Result<Vec<Vec<f64>>> {
        (0..self.dim)
            .map(|k| self.spectral_derivative(field, k, 1))
            .collect()
    }

    /// Spectral Laplacian.
    pub fn laplacian(&self, field: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; field.len()];
        for k in 0..self.dim {
            let d2 = self.spectral_derivative(field, k, 2)?;
            for (o, d) in out.iter_mut().zip(d2) {
                *o += d;
            }
        }
        Ok(out)
    }

    pub fn laplacian_complex(&self, field: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut out = vec![Complex64::new(0.0, 0.0); field.len()];
        for k in 0..self.dim {
            let d2 = self.spectral_derivative_complex(field, k, 2)?;
            for (o, d) in out.iter_mut().zip(d2) {
                *o += d;
            }
        }
        Ok(out)
    }

    /// Derivative of a field that is periodic up to an affine trend along `axis`.
    ///
    /// Each grid line is split into `c·x + periodic remainder`, with the slope
    /// `c` taken from the seam mismatch; the remainder is differentiated
    /// spectrally and the trend analytically. Linear fields are therefore
    /// differentiated exactly; fields that are already periodic and localized
    /// see a negligible slope.
    pub fn detrended_derivative(&self, field: &[f64], axis: usize, order: u32) -> Result<Vec<f64>> {
        self.check_len(field.len())?;
        self.check_axis(axis)?;
        Self::check_order(order)?;
        let n = self.points[axis];
        let stride = self.stride(axis);
        let h = self.spacing(axis);
        let span = self.extent[axis] - h;
        let lines = field.len() / n;
        let line_start = |line: usize| -> usize {
            if stride == 1 {
                line * n
            } else {
                line
            }
        };
        let mut slopes = vec![0.0; lines];
        let mut detrended = field.to_vec();
        for (line, slope) in slopes.iter_mut().enumerate() {
            let s0 = line_start(line);
            let first = field[s0];
            let last = field[s0 + (n - 1) * stride];
            let c = (last - first) / span;
            *slope = c;
            for j in 0..n {
                detrended[s0 + j * stride] -= c * (self.coord(axis, j) - self.origin(axis));
            }
        }
        let mut d = self.spectral_derivative(&detrended, axis, order)?;
        if order == 1 {
            for (line, &c) in slopes.iter().enumerate() {
                let s0 = line_start(line);
                for j in 0..n {
                    d[s0 + j * stride] += c;
                }
            }
        }
        Ok(d)
    }

    /// Periodic rectangle rule `Π dx_k · Σ f`.
    pub fn quadrature(&self, field: &[f64]) -> f64 {
        self.cell_volume() * field.iter().sum::<f64>()
    }

    pub fn quadrature_complex(&self, field: &[Complex64]) -> Complex64 {
        field.iter().sum::<Complex64>() * self.cell_volume()
    }

    /// `∫|f|²` evaluated from Fourier coefficients.
    pub fn spectral_energy(&self, field: &[Complex64]) -> Result<f64> {
        self.check_len(field.len())?;
        let mut data = field.to_vec();
        self.forward(&mut data);
        let sum: f64 = data.iter().map(|z| z.norm_sqr()).sum();
        Ok(sum * self.cell_volume() / self.len() as f64)
    }

    /// Translates a real field so that the result samples `f(q + delta·e_axis)`.
    pub fn spectral_shift(&self, field: &[f64], axis: usize, delta: f64) -> Result<Vec<f64>> {
        self.check_len(field.len())?;
        self.check_axis(axis)?;
        let n = self.points[axis];
        let mut data: Vec<Complex64> = field.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fft_axis(&mut data, axis, false);
        self.apply_axis_multiplier(&mut data, axis, |i, k| {
            if i == n / 2 {
                // keep the Nyquist mode real
                Complex64::new((k * delta).cos() / n as f64, 0.0)
            } else {
                Complex64::from_polar(1.0 / n as f64, k * delta)
            }
        });
        self.fft_axis(&mut data, axis, true);
        Ok(data.into_iter().map(|z| z.re).collect())
    }
}

/// Phase-space lattice for one degree of freedom: a q-axis times a p-axis.
///
/// Samples are stored with the p index contiguous: `iq * np + ip`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGrid {
    pub q: Grid,
    pub p: Grid,
}

impl PhaseGrid {
    pub fn new(q_extent: f64, q_points: usize, p_extent: f64, p_points: usize) -> Result<Self> {
        Ok(Self {
            q: Grid::line(q_extent, q_points)?,
            p: Grid::line(p_extent, p_points)?,
        })
    }

    pub fn len(&self) -> usize {
        self.q.len() * self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, iq: usize, ip: usize) -> usize {
        iq * self.p.len() + ip
    }

    /// `(q, p)` of a flat index.
    pub fn point(&self, flat: usize) -> (f64, f64) {
        let np = self.p.len();
        (self.q.coord(0, flat / np), self.p.coord(0, flat % np))
    }

    pub fn cell_area(&self) -> f64 {
        self.q.spacing(0) * self.p.spacing(0)
    }

    pub fn area(&self) -> f64 {
        self.q.extent(0) * self.p.extent(0)
    }

    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let (q, p) = self.point(i);
                f(q, p)
            })
            .collect()
    }

    pub fn quadrature(&self, field: &[f64]) -> f64 {
        self.cell_area() * field.iter().sum::<f64>()
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if n == self.len() {
            Ok(())
        } else {
            Err(Error::Shape {
                expected: self.len(),
                got: n,
            })
        }
    }
}

/// Quadrature rule tag. Only the periodic rectangle rule is implemented.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    #[default]
    PeriodicRectangle,
}

/// Numerical parameters shared by every tier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsConfig {
    pub hbar: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Density floor relative to `max ρ`; samples below it are masked.
    pub density_floor: f64,
    /// Caustic threshold on the characteristic-map Jacobian determinant.
    pub caustic_threshold: f64,
    pub quadrature: QuadratureRule,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            dt: 1e-3,
            t_end: 1.0,
            density_floor: 1e-12,
            caustic_threshold: 1e-3,
            quadrature: QuadratureRule::PeriodicRectangle,
        }
    }
}

impl NumericsConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::scenario(
                    format!("numerics.{name}"),
                    format!("must be positive, got {v}"),
                ))
            }
        };
        positive("hbar", self.hbar)?;
        positive("dt", self.dt)?;
        positive("caustic_threshold", self.caustic_threshold)?;
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(Error::scenario(
                "numerics.t_end",
                format!("must be non-negative, got {}", self.t_end),
            ));
        }
        if !(self.density_floor > 0.0 && self.density_floor < 1e-2) {
            return Err(Error::scenario(
                "numerics.density_floor",
                format!("must lie in (0, 1e-2), got {}", self.density_floor),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(matches!(Grid::line(1.0, 100), Err(Error::Config(_))));
        assert!(matches!(Grid::new(&[1.0, 1.0], &[64, 48]), Err(Error::Config(_))));
        assert!(Grid::new(&[1.0, 1.0, 1.0], &[4, 4, 4]).is_err());
    }

    #[test]
    fn derivative_of_sine() {
        let l = 7.0;
        let g = Grid::line(l, 64).unwrap();
        let f = g.sample(|q| (2.0 * PI * q[0] / l).sin());
        let want = g.sample(|q| 2.0 * PI / l * (2.0 * PI * q[0] / l).cos());
        let got = g.spectral_derivative(&f, 0, 1).unwrap();
        assert!(max_abs_diff(&got, &want) < 1e-12);
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let g = Grid::line(3.0, 32).unwrap();
        let d = g.spectral_derivative(&vec![2.5; 32], 0, 1).unwrap();
        assert!(d.iter().all(|x| x.abs() < 1e-14));
    }

    #[test]
    fn second_derivative_of_gaussian() {
        let g = Grid::line(40.0, 512).unwrap();
        let f = g.sample(|q| (-q[0] * q[0]).exp());
        let want = g.sample(|q| (4.0 * q[0] * q[0] - 2.0) * (-q[0] * q[0]).exp());
        let got = g.spectral_derivative(&f, 0, 2).unwrap();
        assert!(max_abs_diff(&got, &want) < 1e-10);
    }

    #[test]
    fn bad_order_is_rejected() {
        let g = Grid::line(1.0, 8).unwrap();
        assert!(g.spectral_derivative(&[0.0; 8], 0, 3).is_err());
        assert!(g.spectral_derivative(&[0.0; 7], 0, 1).is_err());
    }

    #[test]
    fn derivative_along_each_axis_2d() {
        let g = Grid::new(&[6.0, 8.0], &[32, 64]).unwrap();
        let f = g.sample(|q| (2.0 * PI * q[0] / 6.0).sin() * (2.0 * PI * q[1] / 8.0).cos());
        let d0 = g.spectral_derivative(&f, 0, 1).unwrap();
        let d1 = g.spectral_derivative(&f, 1, 1).unwrap();
        let w0 = g.sample(|q| {
            2.0 * PI / 6.0 * (2.0 * PI * q[0] / 6.0).cos() * (2.0 * PI * q[1] / 8.0).cos()
        });
        let w1 = g.sample(|q| {
            -2.0 * PI / 8.0 * (2.0 * PI * q[0] / 6.0).sin() * (2.0 * PI * q[1] / 8.0).sin()
        });
        assert!(max_abs_diff(&d0, &w0) < 1e-12);
        assert!(max_abs_diff(&d1, &w1) < 1e-12);
    }

    #[test]
    fn detrended_derivative_is_exact_on_linear_fields() {
        let g = Grid::square(5.0, 16).unwrap();
        let f = g.sample(|q| 3.0 * q[0] - 2.0 * q[1] + 0.5);
        let d0 = g.detrended_derivative(&f, 0, 1).unwrap();
        let d1 = g.detrended_derivative(&f, 1, 1).unwrap();
        assert!(d0.iter().all(|x| (x - 3.0).abs() < 1e-12));
        assert!(d1.iter().all(|x| (x + 2.0).abs() < 1e-12));
    }

    #[test]
    fn quadrature_examples() {
        let g = Grid::line(10.0, 64).unwrap();
        assert!((g.quadrature(&vec![1.0; 64]) - 10.0).abs() < 1e-13);

        let g = Grid::line(40.0, 512).unwrap();
        let norm = (2.0 * PI).sqrt();
        let gauss = g.sample(|q| (-0.5 * q[0] * q[0]).exp() / norm);
        assert!((g.quadrature(&gauss) - 1.0).abs() < 1e-12);
        let odd = g.sample(|q| q[0] * (-q[0] * q[0]).exp());
        assert!(g.quadrature(&odd).abs() < 1e-13);
    }

    #[test]
    fn spectral_shift_translates() {
        let g = Grid::line(30.0, 256).unwrap();
        let f = g.sample(|q| (-(q[0] - 1.0).powi(2)).exp());
        let shifted = g.spectral_shift(&f, 0, 0.37).unwrap();
        let want = g.sample(|q| (-(q[0] + 0.37 - 1.0).powi(2)).exp());
        assert!(max_abs_diff(&shifted, &want) < 1e-12);
    }

    #[test]
    fn numerics_validation() {
        assert!(NumericsConfig::default().validate().is_ok());
        let bad = NumericsConfig {
            hbar: -1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn periodic_field(g: &Grid, coeffs: &[(f64, f64)]) -> Vec<f64> {
            let l = g.extent(0);
            g.sample(|q| {
                coeffs
                    .iter()
                    .enumerate()
                    .map(|(m, (a, b))| {
                        let k = 2.0 * PI * (m as f64 + 1.0) / l;
                        a * (k * q[0]).cos() + b * (k * q[0]).sin()
                    })
                    .sum::<f64>()
            })
        }

        proptest! {
            #[test]
            fn derivative_integrates_to_zero(coeffs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..10), offset in -5.0f64..5.0) {
                let g = Grid::line(9.0, 64).unwrap();
                let f: Vec<f64> = periodic_field(&g, &coeffs).iter().map(|x| x + offset).collect();
                let d = g.spectral_derivative(&f, 0, 1).unwrap();
                prop_assert!(g.quadrature(&d).abs() < 1e-12);
            }

            #[test]
            fn derivative_commutes_with_cell_translation(coeffs in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..10), shift in 0usize..64) {
                let g = Grid::line(9.0, 64).unwrap();
                let f = periodic_field(&g, &coeffs);
                let rot: Vec<f64> = (0..64).map(|i| f[(i + shift) % 64]).collect();
                let d = g.spectral_derivative(&f, 0, 1).unwrap();
                let d_rot = g.spectral_derivative(&rot, 0, 1).unwrap();
                let want: Vec<f64> = (0..64).map(|i| d[(i + shift) % 64]).collect();
                prop_assert!(max_abs_diff(&d_rot, &want) < 1e-12);
            }

            #[test]
            fn parseval(re in prop::collection::vec(-1.0f64..1.0, 32), im in prop::collection::vec(-1.0f64..1.0, 32)) {
                let g = Grid::line(4.0, 32).unwrap();
                let f: Vec<Complex64> = re.iter().zip(&im).map(|(a, b)| Complex64::new(*a, *b)).collect();
                let direct = g.quadrature(&f.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>());
                let spectral = g.spectral_energy(&f).unwrap();
                prop_assert!((direct - spectral).abs() < 1e-12);
            }
        }
    }
}
