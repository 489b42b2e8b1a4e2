//! Interpolation on regular lattices.

use std::ops::{Add, Mul};

use crate::grid::{Grid, PhaseGrid, Vec2};

/// Cubic Hermite basis on `[0, 1]`: weights for `(f0, f1, d0, d1)`.
#[inline]
pub(crate) fn hermite_basis(u: f64) -> [f64; 4] {
    let u2 = u * u;
    let u3 = u2 * u;
    [
        2.0 * u3 - 3.0 * u2 + 1.0,
        -2.0 * u3 + 3.0 * u2,
        u3 - 2.0 * u2 + u,
        u3 - u2,
    ]
}

/// Cubic Hermite interpolation with slopes given per unit of `u`.
#[inline]
pub(crate) fn hermite(f0: f64, f1: f64, d0: f64, d1: f64, u: f64) -> f64 {
    let w = hermite_basis(u);
    w[0] * f0 + w[1] * f1 + w[2] * d0 + w[3] * d1
}

/// Derivative with respect to `u` of [`hermite`].
#[inline]
pub(crate) fn hermite_derivative(f0: f64, f1: f64, d0: f64, d1: f64, u: f64) -> f64 {
    let u2 = u * u;
    (6.0 * u2 - 6.0 * u) * (f0 - f1) + (3.0 * u2 - 4.0 * u + 1.0) * d0 + (3.0 * u2 - 2.0 * u) * d1
}

/// Catmull-Rom weights for samples at offsets `-1, 0, 1, 2`.
#[inline]
fn catmull_rom_weights(u: f64) -> [f64; 4] {
    let u2 = u * u;
    let u3 = u2 * u;
    [
        0.5 * (-u3 + 2.0 * u2 - u),
        0.5 * (3.0 * u3 - 5.0 * u2 + 2.0),
        0.5 * (-3.0 * u3 + 4.0 * u2 + u),
        0.5 * (u3 - u2),
    ]
}

/// Periodic Catmull-Rom interpolation of grid samples at an arbitrary point.
///
/// Accurate to third order in the spacing; positions are wrapped into the box.
pub fn periodic_cubic<T>(grid: &Grid, samples: &[T], q: Vec2) -> T
where
    T: Copy + Add<Output = T> + Mul<f64, Output = T>,
{
    let mut base = [0isize; 2];
    let mut w = [[0.0; 4]; 2];
    for axis in 0..grid.dim() {
        let x = (q[axis] - grid.origin(axis)) / grid.spacing(axis);
        let fl = x.floor();
        base[axis] = fl as isize;
        w[axis] = catmull_rom_weights(x - fl);
    }
    let wrap = |axis: usize, i: isize| -> usize {
        i.rem_euclid(grid.points(axis) as isize) as usize
    };
    if grid.dim() == 1 {
        let mut acc = samples[wrap(0, base[0] - 1)] * w[0][0];
        for j in 1..4 {
            acc = acc + samples[wrap(0, base[0] - 1 + j as isize)] * w[0][j];
        }
        return acc;
    }
    let n1 = grid.points(1);
    let mut acc: Option<T> = None;
    for a in 0..4 {
        let i0 = wrap(0, base[0] - 1 + a as isize);
        for b in 0..4 {
            let i1 = wrap(1, base[1] - 1 + b as isize);
            let term = samples[i0 * n1 + i1] * (w[0][a] * w[1][b]);
            acc = Some(match acc {
                Some(s) => s + term,
                None => term,
            });
        }
    }
    acc.expect("stencil is non-empty")
}

/// Spectral node derivatives of a periodic field for Hermite interpolation.
#[derive(Clone, Debug)]
pub struct HermiteTable {
    f: Vec<f64>,
    d0: Vec<f64>,
    d1: Vec<f64>,
    d01: Vec<f64>,
}

impl HermiteTable {
    pub fn new(grid: &Grid, f: Vec<f64>) -> crate::error::Result<Self> {
        let d0 = grid.spectral_derivative(&f, 0, 1)?;
        let (d1, d01) = if grid.dim() == 2 {
            (
                grid.spectral_derivative(&f, 1, 1)?,
                grid.spectral_derivative(&d0, 1, 1)?,
            )
        } else {
            (Vec::new(), Vec::new())
        };
        Ok(Self { f, d0, d1, d01 })
    }

    pub fn samples(&self) -> &[f64] {
        &self.f
    }

    /// Periodic cubic (1D) or bicubic (2D) Hermite interpolation; fourth
    /// order in the spacing.
    pub fn eval(&self, grid: &Grid, q: Vec2) -> f64 {
        let mut base = [0usize; 2];
        let mut u = [0.0; 2];
        for axis in 0..grid.dim() {
            let x = (q[axis] - grid.origin(axis)) / grid.spacing(axis);
            let fl = x.floor();
            u[axis] = x - fl;
            base[axis] = (fl as isize).rem_euclid(grid.points(axis) as isize) as usize;
        }
        let h0 = grid.spacing(0);
        let n0 = grid.points(0);
        let wu = hermite_basis(u[0]);
        if grid.dim() == 1 {
            let (i, j) = (base[0], (base[0] + 1) % n0);
            return wu[0] * self.f[i] + wu[1] * self.f[j] + h0 * (wu[2] * self.d0[i] + wu[3] * self.d0[j]);
        }
        let h1 = grid.spacing(1);
        let n1 = grid.points(1);
        let wv = hermite_basis(u[1]);
        let mut acc = 0.0;
        for (a, i) in [(0, base[0]), (1, (base[0] + 1) % n0)] {
            for (b, j) in [(0, base[1]), (1, (base[1] + 1) % n1)] {
                let k = i * n1 + j;
                acc += wu[a] * wv[b] * self.f[k]
                    + wu[a + 2] * wv[b] * self.d0[k] * h0
                    + wu[a] * wv[b + 2] * self.d1[k] * h1
                    + wu[a + 2] * wv[b + 2] * self.d01[k] * h0 * h1;
            }
        }
        acc
    }
}

/// Fourth-order centered first derivative of a line of samples, falling back
/// to lower-order stencils at the ends.
fn line_derivative(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![0.0; n];
    for i in 0..n {
        d[i] = if i >= 2 && i + 2 < n {
            (f[i - 2] - 8.0 * f[i - 1] + 8.0 * f[i + 1] - f[i + 2]) / (12.0 * h)
        } else if i >= 1 && i + 1 < n {
            (f[i + 1] - f[i - 1]) / (2.0 * h)
        } else if i == 0 && n > 1 {
            (f[1] - f[0]) / h
        } else if n > 1 {
            (f[n - 1] - f[n - 2]) / h
        } else {
            0.0
        };
    }
    d
}

/// Bicubic Hermite interpolant of phase-space samples.
///
/// Node derivatives `f_q`, `f_p` and `f_qp` come from fourth-order finite
/// differences, so the interpolant reproduces cubic data exactly. Evaluation
/// outside the sampled rectangle returns zero.
#[derive(Clone, Debug)]
pub struct Bicubic {
    q0: f64,
    p0: f64,
    dq: f64,
    dp: f64,
    nq: usize,
    np: usize,
    f: Vec<f64>,
    fq: Vec<f64>,
    fp: Vec<f64>,
    fqp: Vec<f64>,
}

impl Bicubic {
    pub fn new(grid: &PhaseGrid, samples: &[f64]) -> Self {
        let (nq, np) = (grid.q.len(), grid.p.len());
        let (dq, dp) = (grid.q.spacing(0), grid.p.spacing(0));
        assert_eq!(samples.len(), nq * np);
        let mut fp = vec![0.0; nq * np];
        for iq in 0..nq {
            let row = &samples[iq * np..(iq + 1) * np];
            fp[iq * np..(iq + 1) * np].copy_from_slice(&line_derivative(row, dp));
        }
        let column_derivative = |src: &[f64]| {
            let mut out = vec![0.0; nq * np];
            let mut col = vec![0.0; nq];
            for ip in 0..np {
                for iq in 0..nq {
                    col[iq] = src[iq * np + ip];
                }
                for (iq, v) in line_derivative(&col, dq).into_iter().enumerate() {
                    out[iq * np + ip] = v;
                }
            }
            out
        };
        let fq = column_derivative(samples);
        let fqp = column_derivative(&fp);
        Self {
            q0: grid.q.origin(0),
            p0: grid.p.origin(0),
            dq,
            dp,
            nq,
            np,
            f: samples.to_vec(),
            fq,
            fp,
            fqp,
        }
    }

    pub fn eval(&self, q: f64, p: f64) -> f64 {
        let x = (q - self.q0) / self.dq;
        let y = (p - self.p0) / self.dp;
        let (xmax, ymax) = ((self.nq - 1) as f64, (self.np - 1) as f64);
        if !(x >= 0.0 && x <= xmax && y >= 0.0 && y <= ymax) {
            return 0.0;
        }
        let i = (x.floor() as usize).min(self.nq - 2);
        let j = (y.floor() as usize).min(self.np - 2);
        let (u, v) = (x - i as f64, y - j as f64);
        let wu = hermite_basis(u);
        let wv = hermite_basis(v);
        let mut acc = 0.0;
        for (a, di) in [(0usize, 0usize), (1, 1)] {
            for (b, dj) in [(0usize, 0usize), (1, 1)] {
                let k = (i + di) * self.np + (j + dj);
                acc += wu[a] * wv[b] * self.f[k]
                    + wu[a + 2] * wv[b] * self.fq[k] * self.dq
                    + wu[a] * wv[b + 2] * self.fp[k] * self.dp
                    + wu[a + 2] * wv[b + 2] * self.fqp[k] * self.dq * self.dp;
            }
        }
        acc
    }
}
