//! Closed contours, circulation and winding numbers.
//!
//! A contour is a closed polyline, treated as a smooth periodic curve in its
//! vertex parameter: tangents are taken spectrally and line integrals use the
//! periodic trapezoid rule in that parameter. When advection stretches a
//! segment beyond twice the initial maximum, the curve is resampled at double
//! resolution by Fourier interpolation.

use std::f64::consts::PI;
use std::io::Write;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Vec2;
use crate::hamiltonian::Hamiltonian;
use crate::interp::periodic_cubic;
use crate::projection::QaRun;
use crate::quantum::{step_plan, Propagator, WaveFunction};

const MIN_VERTICES: usize = 64;
const MAX_VERTICES: usize = 1 << 16;

/// A closed curve; the last vertex connects back to the first.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Contour {
    pub points: Vec<Vec2>,
    pub t: f64,
    /// Segment length that triggers resampling; zero disables it.
    pub segment_limit: f64,
}

fn seg_len(a: Vec2, b: Vec2) -> f64 {
    ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
}

fn cross(o: Vec2, a: Vec2, b: Vec2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn segments_cross(a: Vec2, b: Vec2, c: Vec2, d: Vec2) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

impl Contour {
    pub fn new(points: Vec<Vec2>, t: f64) -> Result<Self> {
        if points.len() < MIN_VERTICES {
            return Err(Error::argument(format!(
                "a contour needs at least {MIN_VERTICES} vertices, got {}",
                points.len()
            )));
        }
        if points.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::argument("contour vertices must be finite"));
        }
        let n = points.len();
        for i in 0..n {
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                if segments_cross(points[i], points[(i + 1) % n], points[j], points[(j + 1) % n]) {
                    return Err(Error::argument("contour intersects itself"));
                }
            }
        }
        let c = Self {
            points,
            t,
            segment_limit: 0.0,
        };
        let limit = 2.0 * c.max_segment();
        Ok(Self {
            segment_limit: limit,
            ..c
        })
    }

    /// `n` equally spaced vertices on a circle, counter-clockwise.
    pub fn circle(center: Vec2, radius: f64, n: usize) -> Result<Self> {
        let points = (0..n)
            .map(|j| {
                let a = 2.0 * PI * j as f64 / n as f64;
                [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
            })
            .collect();
        Self::new(points, 0.0)
    }

    /// Same curve traversed in the opposite direction. A clockwise loop in
    /// the `(q, p)` plane has `∮ p dq` equal to the enclosed area.
    pub fn reversed(&self) -> Self {
        let mut c = self.clone();
        c.points.reverse();
        c
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_segment(&self) -> f64 {
        let n = self.points.len();
        (0..n).map(|i| seg_len(self.points[i], self.points[(i + 1) % n])).fold(0.0, f64::max)
    }

    fn needs_resampling(&self) -> bool {
        self.segment_limit > 0.0 && self.max_segment() > self.segment_limit
    }

    /// Doubles the vertex count by zero-padding the Fourier series of the curve.
    pub fn refine(&self) -> Result<Self> {
        let n = self.points.len();
        if 2 * n > MAX_VERTICES {
            return Err(Error::Advection {
                t: self.t,
                what: format!("contour would exceed {MAX_VERTICES} vertices"),
            });
        }
        let mut planner = FftPlanner::new();
        let mut z: Vec<Complex64> = self.points.iter().map(|p| Complex64::new(p[0], p[1])).collect();
        planner.plan_fft_forward(n).process(&mut z);
        let mut padded = vec![Complex64::new(0.0, 0.0); 2 * n];
        let half = n / 2;
        for k in 0..n {
            let target = if k < half { k } else if k > half || n % 2 == 1 { k + n } else { continue };
            padded[target] = z[k];
        }
        if n.is_multiple_of(2) {
            // split the Nyquist coefficient between +n/2 and -n/2
            padded[half] = 0.5 * z[half];
            padded[half + n] = 0.5 * z[half];
        }
        planner.plan_fft_inverse(2 * n).process(&mut padded);
        let points = padded.iter().map(|w| [w.re / n as f64, w.im / n as f64]).collect();
        Ok(Self {
            points,
            t: self.t,
            segment_limit: self.segment_limit,
        })
    }
}

/// `dq/ds` at every vertex for the parameter `s ∈ [0, 2π)`.
/// Derivative of periodic samples with respect to the loop parameter `s ∈ [0, 2π)`.
fn parameter_derivative(mut z: Vec<Complex64>) -> Vec<Complex64> {
    let n = z.len();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut z);
    for (k, c) in z.iter_mut().enumerate() {
        let m = if 2 * k < n {
            k as f64
        } else if 2 * k == n {
            0.0
        } else {
            k as f64 - n as f64
        };
        *c *= Complex64::new(0.0, m / n as f64);
    }
    planner.plan_fft_inverse(n).process(&mut z);
    z
}

fn spectral_tangent(points: &[Vec2]) -> Vec<Vec2> {
    let z = points.iter().map(|p| Complex64::new(p[0], p[1])).collect();
    parameter_derivative(z).iter().map(|w| [w.re, w.im]).collect()
}

/// `∮ F·dq` for field values given at the vertices.
fn line_integral(points: &[Vec2], values: &[Vec2]) -> f64 {
    let n = points.len();
    let tangent = spectral_tangent(points);
    let ds = 2.0 * PI / n as f64;
    ds * values
        .iter()
        .zip(&tangent)
        .map(|(f, t)| f[0] * t[0] + f[1] * t[1])
        .sum::<f64>()
}

/// Velocity along a contour at one time.
pub trait VelocityField {
    fn velocities(&self, points: &[Vec2], t: f64) -> Result<Vec<Vec2>>;
}

impl<F> VelocityField for F
where
    F: Fn(Vec2, f64) -> Option<Vec2>,
{
    fn velocities(&self, points: &[Vec2], t: f64) -> Result<Vec<Vec2>> {
        points
            .iter()
            .map(|&q| {
                self(q, t).ok_or_else(|| Error::Advection {
                    t,
                    what: format!("velocity undefined at ({:.6}, {:.6})", q[0], q[1]),
                })
            })
            .collect()
    }
}

fn shifted(points: &[Vec2], k: &[Vec2], a: f64) -> Vec<Vec2> {
    points.iter().zip(k).map(|(p, v)| [p[0] + a * v[0], p[1] + a * v[1]]).collect()
}

fn rk4_combine(points: &mut [Vec2], k: [&[Vec2]; 4], h: f64) {
    for (i, p) in points.iter_mut().enumerate() {
        for a in 0..2 {
            p[a] += h / 6.0 * (k[0][i][a] + 2.0 * k[1][i][a] + 2.0 * k[2][i][a] + k[3][i][a]);
        }
    }
}

fn check_finite(c: &Contour) -> Result<()> {
    if c.points.iter().flatten().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Advection {
            t: c.t,
            what: "contour vertex left the finite range".into(),
        })
    }
}

fn resample(c: &mut Contour) -> Result<()> {
    while c.needs_resampling() {
        *c = c.refine()?;
    }
    Ok(())
}

/// RK4 advection of every vertex from `c0.t` to `t` with steps of at most `dt`.
pub fn advect_contour(field: &dyn VelocityField, c0: &Contour, t: f64, dt: f64) -> Result<Contour> {
    let duration = t - c0.t;
    if duration < 0.0 {
        return Err(Error::argument("contours are only advected forward in time"));
    }
    let (n, h) = step_plan(duration, dt)?;
    let mut c = c0.clone();
    for _ in 0..n {
        let t0 = c.t;
        let k1 = field.velocities(&c.points, t0)?;
        let k2 = field.velocities(&shifted(&c.points, &k1, 0.5 * h), t0 + 0.5 * h)?;
        let k3 = field.velocities(&shifted(&c.points, &k2, 0.5 * h), t0 + 0.5 * h)?;
        let k4 = field.velocities(&shifted(&c.points, &k3, h), t0 + h)?;
        rk4_combine(&mut c.points, [&k1, &k2, &k3, &k4], h);
        c.t = t0 + h;
        check_finite(&c)?;
        resample(&mut c)?;
    }
    c.t = t;
    Ok(c)
}

/// A winding number change between consecutive samples.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WindingJump {
    pub t: f64,
    pub from: i64,
    pub to: i64,
    /// Contour vertex with the smallest amplitude at the jump.
    pub location: Vec2,
}

/// Circulation and winding sampled along an advected contour.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CirculationTrace {
    pub times: Vec<f64>,
    /// `None` where the contour crossed an undefined region.
    pub circulation: Vec<Option<f64>>,
    pub winding: Vec<Option<i64>>,
    pub residue: Vec<Option<f64>>,
    pub flags: Vec<Vec<String>>,
    pub jumps: Vec<WindingJump>,
    /// Requested times beyond the validity of the run were dropped.
    pub truncated: bool,
    pub vertices: Vec<usize>,
}

impl CirculationTrace {
    fn push(&mut self, t: f64, circulation: Option<f64>, vertices: usize) {
        self.times.push(t);
        self.circulation.push(circulation);
        self.winding.push(None);
        self.residue.push(None);
        self.flags.push(Vec::new());
        self.vertices.push(vertices);
    }

    /// `max |I(t) - I(0)|`, divided by `|I(0)|` unless that is below `1e-12`.
    pub fn relative_drift(&self) -> Option<f64> {
        let first = self.circulation.iter().flatten().next()?;
        let scale = if first.abs() > 1e-12 { first.abs() } else { 1.0 };
        Some(self.circulation.iter().flatten().map(|c| (c - first).abs()).fold(0.0, f64::max) / scale)
    }

    /// CSV with columns `t, circulation, winding, flags`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "circulation", "winding", "flags"])?;
        for i in 0..self.times.len() {
            w.write_record([
                format!("{:.12e}", self.times[i]),
                self.circulation[i].map(|c| format!("{c:.12e}")).unwrap_or_default(),
                self.winding[i].map(|k| k.to_string()).unwrap_or_default(),
                self.flags[i].join(";"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_times(times: &[f64], start: f64) -> Result<()> {
    if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::argument("sample times must be finite and non-decreasing"));
    }
    if times.first().is_some_and(|&t| t < start) {
        return Err(Error::argument("sample times must not precede the contour"));
    }
    Ok(())
}

/// `∮ p dq` along a phase-space contour carried by the canonical flow of a
/// one-dimensional Hamiltonian. Vertices are `(q, p)`.
pub fn poincare_invariant(h: &Hamiltonian, c0: &Contour, times: &[f64], dt: f64) -> Result<CirculationTrace> {
    if h.dim() != 1 {
        return Err(Error::argument("the phase-space contour needs a one-dimensional Hamiltonian"));
    }
    check_times(times, c0.t)?;
    let field = |x: Vec2, _t: f64| -> Option<Vec2> { Some([h.velocity_map([x[1], 0.0])[0], h.force([x[0], 0.0])[0]]) };
    let mut trace = CirculationTrace::default();
    let mut c = c0.clone();
    for &t in times {
        c = advect_contour(&field, &c, t, dt)?;
        let p: Vec<Vec2> = c.points.iter().map(|x| [x[1], 0.0]).collect();
        trace.push(t, Some(line_integral(&c.points, &p)), c.len());
    }
    Ok(trace)
}

/// `∮ M·dq` around a configuration-space contour.
pub fn circulation(field: &dyn Fn(Vec2) -> Option<Vec2>, c: &Contour) -> Result<f64> {
    let values = c
        .points
        .iter()
        .map(|&q| {
            field(q).ok_or_else(|| {
                Error::CirculationUndefined(format!("field undefined at ({:.6}, {:.6})", q[0], q[1]))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(line_integral(&c.points, &values))
}

/// Winding of a complex field around a contour with its rounding residue.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Winding {
    pub value: i64,
    pub residue: f64,
}

fn wrap_angle(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}

/// Phase accumulated by integrating `Im(ψ* ∂_s ψ)/|ψ|²` around the loop; the
/// residue is its distance from the nearest integer. A loop that resolves
/// the phase also agrees with the count of wrapped vertex-to-vertex steps.
fn winding_of(values: &[Complex64]) -> Result<Winding> {
    let n = values.len();
    let derivative = parameter_derivative(values.to_vec());
    let ds = 2.0 * PI / n as f64;
    let total: f64 = values.iter().zip(&derivative).map(|(z, dz)| (z.conj() * dz).im / z.norm_sqr()).sum::<f64>() * ds;
    let turns = total / (2.0 * PI);
    let value = turns.round();
    let steps: f64 = (0..n).map(|i| wrap_angle(values[(i + 1) % n].arg() - values[i].arg())).sum();
    let counted = (steps / (2.0 * PI)).round();
    let residue = if counted == value { (turns - value).abs() } else { (turns - counted).abs().max(0.5) };
    if residue >= 0.05 {
        return Err(Error::UnreliableWinding { residue });
    }
    Ok(Winding {
        value: value as i64,
        residue,
    })
}

/// Accumulated phase of `ψ` around `c` in turns. `|ψ|` must stay above
/// `amplitude_floor` on every vertex.
pub fn winding_number(psi: &dyn Fn(Vec2) -> Complex64, c: &Contour, amplitude_floor: f64) -> Result<Winding> {
    let values: Vec<Complex64> = c.points.iter().map(|&q| psi(q)).collect();
    if let Some(i) = values.iter().position(|z| !(z.norm() > amplitude_floor)) {
        let q = c.points[i];
        return Err(Error::SingularAmplitude {
            t: c.t,
            what: format!("|ψ| below {amplitude_floor} at ({:.6}, {:.6})", q[0], q[1]),
        });
    }
    winding_of(&values)
}

fn kelvin_field<'a>(run: &'a QaRun) -> impl VelocityField + 'a {
    struct QaVelocity<'a>(&'a QaRun);
    impl VelocityField for QaVelocity<'_> {
        fn velocities(&self, points: &[Vec2], t: f64) -> Result<Vec<Vec2>> {
            let snap = self.0.snapshot_at(t)?;
            let m = self.0.hamiltonian().mass();
            points
                .iter()
                .map(|&q| {
                    self.0.momentum_at(&snap, q).map(|p| [p[0] / m, p[1] / m]).ok_or_else(|| Error::Advection {
                        t,
                        what: format!("no characteristic reaches ({:.6}, {:.6})", q[0], q[1]),
                    })
                })
                .collect()
        }
    }
    QaVelocity(run)
}

/// Circulation of the QA momentum field along a contour moving with `M/m`.
///
/// Steps are twice the snapshot interval so that every RK4 stage lands on a
/// stored snapshot. Times beyond the caustic are dropped and flagged.
pub fn kelvin_trace_qa(run: &QaRun, c0: &Contour, times: &[f64]) -> Result<CirculationTrace> {
    if run.grid().dim() != 2 {
        return Err(Error::argument("Kelvin traces need a two-dimensional run"));
    }
    check_times(times, c0.t)?;
    let field = kelvin_field(run);
    let step = if run.snapshot_interval() > 0.0 { 2.0 * run.snapshot_interval() } else { 1e-3 };
    let valid = run.valid_until();
    let mut trace = CirculationTrace::default();
    let mut c = c0.clone();
    for &t in times {
        if t > valid * (1.0 + 1e-12) {
            trace.truncated = true;
            break;
        }
        c = advect_contour(&field, &c, t.min(valid), step)?;
        let snap = run.snapshot_at(t.min(valid))?;
        let value = circulation(&|q| run.momentum_at(&snap, q), &c);
        let undefined = value.is_err();
        trace.push(t, value.ok(), c.len());
        if undefined {
            trace.flags.last_mut().expect("just pushed").push("field_undefined".into());
        }
    }
    Ok(trace)
}

/// Samples `ψ` and the Madelung velocity `ħ Im(ψ*∇ψ)/(m|ψ|²)` off the grid.
struct MadelungSampler {
    psi: WaveFunction,
    gradient: Vec<Vec<Complex64>>,
    mass: f64,
    floor: f64,
}

impl MadelungSampler {
    fn new(psi: &WaveFunction, mass: f64, density_floor: f64) -> Result<Self> {
        let gradient = (0..2)
            .map(|a| psi.grid.spectral_derivative_complex(&psi.samples, a, 1))
            .collect::<Result<Vec<_>>>()?;
        let max = psi.samples.iter().map(|z| z.norm_sqr()).fold(0.0, f64::max);
        Ok(Self {
            psi: psi.clone(),
            gradient,
            mass,
            floor: density_floor * max,
        })
    }

    fn value(&self, q: Vec2) -> Complex64 {
        periodic_cubic(&self.psi.grid, &self.psi.samples, q)
    }

    fn masked(&self, q: Vec2) -> bool {
        self.value(q).norm_sqr() < self.floor
    }

    fn velocity(&self, q: Vec2) -> Vec2 {
        let z = self.value(q);
        let r = z.norm_sqr();
        if r == 0.0 {
            return [0.0; 2];
        }
        let g = &self.psi.grid;
        let c = self.psi.hbar / (self.mass * r);
        let v0 = (z.conj() * periodic_cubic(g, &self.gradient[0], q)).im * c;
        let v1 = (z.conj() * periodic_cubic(g, &self.gradient[1], q)).im * c;
        [v0, v1]
    }

    fn velocities(&self, points: &[Vec2]) -> Vec<Vec2> {
        points.iter().map(|&q| self.velocity(q)).collect()
    }
}

/// Circulation of `∇S` and winding of `ψ` along a contour carried by the
/// Madelung velocity of a Schrödinger (or classical-wave) run.
///
/// The wave function and the contour advance in lockstep: each contour RK4
/// step spans two propagator steps. Samples where the contour touches the
/// density mask are flagged and left undefined; winding changes between
/// defined samples are reported as jumps.
pub fn kelvin_trace_qt(
    h: &Hamiltonian,
    psi0: &WaveFunction,
    c0: &Contour,
    times: &[f64],
    dt: f64,
    nonlinear: f64,
    density_floor: f64,
) -> Result<CirculationTrace> {
    if psi0.grid.dim() != 2 {
        return Err(Error::argument("Kelvin traces need a two-dimensional wave function"));
    }
    check_times(times, c0.t)?;
    let mut psi = psi0.clone();
    let mut c = c0.clone();
    let mut trace = CirculationTrace::default();
    let mut sampler = MadelungSampler::new(&psi, h.mass(), density_floor)?;
    let mut last: Option<(i64, f64)> = None;
    for &t in times {
        let (n, h2) = step_plan(t - c.t, 2.0 * dt)?;
        if n > 0 {
            let mut prop = Propagator::new(h, &psi.grid, psi.hbar, 0.5 * h2)?.with_nonlinear(nonlinear, density_floor);
            for _ in 0..n {
                let k1 = sampler.velocities(&c.points);
                prop.step(&mut psi)?;
                let mid = MadelungSampler::new(&psi, h.mass(), density_floor)?;
                let k2 = mid.velocities(&shifted(&c.points, &k1, 0.5 * h2));
                let k3 = mid.velocities(&shifted(&c.points, &k2, 0.5 * h2));
                prop.step(&mut psi)?;
                sampler = MadelungSampler::new(&psi, h.mass(), density_floor)?;
                let k4 = sampler.velocities(&shifted(&c.points, &k3, h2));
                rk4_combine(&mut c.points, [&k1, &k2, &k3, &k4], h2);
                c.t += h2;
                check_finite(&c)?;
                resample(&mut c)?;
            }
        }
        c.t = t;
        psi.t = t;

        let masked = c.points.iter().any(|&q| sampler.masked(q));
        let circ = if masked {
            None
        } else {
            let v = sampler.velocities(&c.points);
            let momentum: Vec<Vec2> = v.iter().map(|u| [u[0] * h.mass(), u[1] * h.mass()]).collect();
            Some(line_integral(&c.points, &momentum))
        };
        trace.push(t, circ, c.len());
        let i = trace.times.len() - 1;
        if masked {
            trace.flags[i].push("mask".into());
            continue;
        }
        let values: Vec<Complex64> = c.points.iter().map(|&q| sampler.value(q)).collect();
        match winding_of(&values) {
            Ok(w) => {
                trace.winding[i] = Some(w.value);
                trace.residue[i] = Some(w.residue);
                if let Some((prev, _)) = last {
                    if prev != w.value {
                        let weakest = values
                            .iter()
                            .enumerate()
                            .min_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
                            .map(|(j, _)| c.points[j])
                            .expect("contour is non-empty");
                        trace.jumps.push(WindingJump {
                            t,
                            from: prev,
                            to: w.value,
                            location: weakest,
                        });
                    }
                }
                last = Some((w.value, t));
            }
            Err(Error::UnreliableWinding { residue }) => {
                trace.residue[i] = Some(residue);
                trace.flags[i].push("unreliable_winding".into());
            }
            Err(e) => return Err(e),
        }
    }
    Ok(trace)
}

/// `∂_p G_q - ∂_q G_p` of a phase-space one-form by central differences.
pub fn phase_space_vorticity(g: &dyn Fn(f64, f64) -> Vec2, q: f64, p: f64, eps: f64) -> f64 {
    let dgq_dp = (g(q, p + eps)[0] - g(q, p - eps)[0]) / (2.0 * eps);
    let dgp_dq = (g(q + eps, p)[1] - g(q - eps, p)[1]) / (2.0 * eps);
    dgq_dp - dgp_dq
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::characteristics::Integrator;
    use crate::grid::Grid;
    use crate::hamiltonian::Potential;
    use crate::profiles::{AffineMomentum, GaussianDensity, Quadratic};
    use crate::projection::{QaConfig, QaInitial};
    use crate::quantum::catalog;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn radii(c: &Contour, center: Vec2) -> (f64, f64) {
        c.points.iter().map(|p| seg_len(*p, center)).fold((f64::INFINITY, 0.0), |(lo, hi), r| (lo.min(r), hi.max(r)))
    }

    #[test]
    fn construction() {
        assert!(Contour::circle([0.0; 2], 1.0, 32).is_err());
        let mut bow: Vec<Vec2> = Contour::circle([0.0; 2], 1.0, 64).unwrap().points;
        bow.swap(10, 40);
        assert!(Contour::new(bow, 0.0).is_err());
        let dot = Contour::new(vec![[0.3, 0.3]; 64], 0.0).unwrap();
        assert_eq!(dot.segment_limit, 0.0);
    }

    #[test]
    fn refine_preserves_the_curve() {
        let c = Contour::circle([0.5, -0.2], 1.3, 64).unwrap();
        let f = c.refine().unwrap();
        assert_eq!(f.len(), 128);
        for (i, p) in c.points.iter().enumerate() {
            assert!(seg_len(*p, f.points[2 * i]) < 1e-12);
        }
        let (lo, hi) = radii(&f, [0.5, -0.2]);
        assert!((lo - 1.3).abs() < 1e-12 && (hi - 1.3).abs() < 1e-12);
    }

    #[test]
    fn advection_examples() {
        let c0 = Contour::circle([0.0; 2], 1.0, 128).unwrap();
        let still = advect_contour(&|_q: Vec2, _t: f64| Some([0.0; 2]), &c0, 1.0, 1e-2).unwrap();
        assert_eq!(still.points, c0.points);

        let rot = advect_contour(&|q: Vec2, _t: f64| Some([-q[1], q[0]]), &c0, 2.0, 1e-3).unwrap();
        let (lo, hi) = radii(&rot, [0.0; 2]);
        assert!((lo - 1.0).abs() < 1e-6 && (hi - 1.0).abs() < 1e-6);

        let h = Hamiltonian::harmonic(1, 1.0, 1.0).unwrap();
        let flow = |x: Vec2, _t: f64| Some([x[1], h.force([x[0], 0.0])[0]]);
        let c = advect_contour(&flow, &c0, PI, 1e-3).unwrap();
        let (lo, hi) = radii(&c, [0.0; 2]);
        assert!((lo - 1.0).abs() < 1e-6 && (hi - 1.0).abs() < 1e-6);
        // the harmonic flow maps (q, p) to (-q, -p) after half a period
        assert!(seg_len(c.points[0], [-1.0, 0.0]) < 1e-6);

        let nowhere = advect_contour(&|q: Vec2, _t: f64| if q[0] < 1.5 { Some([1.0, 0.0]) } else { None }, &c0, 1.0, 1e-2);
        assert!(matches!(nowhere, Err(Error::Advection { .. })));
    }

    #[test]
    fn shear_triggers_resampling() {
        let c0 = Contour::circle([0.0; 2], 1.0, 64).unwrap();
        let c = advect_contour(&|q: Vec2, _t: f64| Some([3.0 * q[1], 0.0]), &c0, 2.0, 1e-2).unwrap();
        assert!(c.len() > 64);
        assert!(c.max_segment() <= c.segment_limit);
    }

    #[test]
    fn poincare_examples() {
        let c0 = Contour::circle([0.0; 2], 1.0, 256).unwrap().reversed();
        let times: Vec<f64> = (0..=8).map(|k| k as f64 * PI / 4.0).collect();
        let osc = Hamiltonian::harmonic(1, 1.0, 1.0).unwrap();
        let trace = poincare_invariant(&osc, &c0, &times, 1e-3).unwrap();
        // Green's theorem oracle: enclosed area of the initial circle
        assert!((trace.circulation[0].unwrap() - PI).abs() < 1e-12);
        assert!(trace.relative_drift().unwrap() < 1e-6);

        let free = Hamiltonian::free(1, 1.0).unwrap();
        let trace = poincare_invariant(&free, &c0, &[0.0, 1.0, 2.0], 1e-3).unwrap();
        assert!(trace.circulation.iter().all(|c| (c.unwrap() - PI).abs() < 1e-6));

        let dot = Contour::new(vec![[0.4, -0.1]; 64], 0.0).unwrap();
        let trace = poincare_invariant(&osc, &dot, &[0.0, 1.0], 1e-3).unwrap();
        assert!(trace.circulation.iter().all(|c| c.unwrap() == 0.0));
    }

    fn vortex_field(q: Vec2) -> Option<Vec2> {
        let r2 = q[0] * q[0] + q[1] * q[1];
        Some([-q[1] / r2, q[0] / r2])
    }

    #[test]
    fn circulation_examples() {
        let unit = Contour::circle([0.0; 2], 1.0, 128).unwrap();
        let grad = |q: Vec2| Some([2.0 * q[0] + q[1].cos(), -q[0] * q[1].sin() + 3.0 * q[1] * q[1]]);
        assert!(circulation(&grad, &unit).unwrap().abs() < 1e-10);
        assert!((circulation(&vortex_field, &unit).unwrap() - 2.0 * PI).abs() < 1e-6);
        let aside = Contour::circle([3.0, 0.5], 1.0, 128).unwrap();
        assert!(circulation(&vortex_field, &aside).unwrap().abs() < 1e-6);
        let holes = |q: Vec2| if q[0] > 0.9 { None } else { Some([0.0; 2]) };
        assert!(matches!(circulation(&holes, &unit), Err(Error::CirculationUndefined(_))));
    }

    #[test]
    fn winding_examples() {
        let unit = Contour::circle([0.0; 2], 1.0, 64).unwrap();
        for k in 0..3u32 {
            let psi = move |q: Vec2| Complex64::new(q[0], q[1]).powu(k);
            assert_eq!(winding_number(&psi, &unit, 1e-8).unwrap().value, k as i64);
            assert_eq!(winding_number(&psi, &unit.refine().unwrap(), 1e-8).unwrap().value, k as i64);
        }
        let flat = |_q: Vec2| Complex64::from_polar(1.0, 0.7);
        assert_eq!(winding_number(&flat, &unit, 1e-8).unwrap().value, 0);
        let through = Contour::circle([1.0, 0.0], 1.0, 64).unwrap();
        let z = |q: Vec2| Complex64::new(q[0], q[1]);
        assert!(winding_number(&z, &through, 1e-8).is_err());
    }

    #[test]
    fn undersampled_winding_is_unreliable() {
        let unit = Contour::circle([0.0; 2], 1.0, 64).unwrap();
        // 40 turns per loop leaves fewer than two vertices per turn
        let fast = |q: Vec2| Complex64::from_polar(1.0, 40.0 * q[1].atan2(q[0]) + 0.3 * q[0]);
        // the samples alias exactly onto another winding, which no estimator can detect
        assert!(winding_number(&fast, &unit, 1e-8).map(|w| w.value != 40).unwrap_or(true));
        assert_eq!(winding_number(&fast, &unit.refine().unwrap().refine().unwrap(), 1e-8).unwrap().value, 40);
        // a loop grazing the zero of q1 + i q2 resolves the phase only on a fine polygon
        let z = |q: Vec2| Complex64::new(q[0], q[1]);
        let grazing = Contour::circle([1.02, 0.0], 1.0, 64).unwrap();
        assert!(winding_number(&z, &grazing, 1e-8).is_err());
    }

    #[test]
    fn symplectic_form_has_unit_vorticity() {
        let g = |_q: f64, p: f64| [p, 0.0];
        for (q, p) in [(0.0, 0.0), (1.3, -2.1), (-4.0, 0.7)] {
            assert!((phase_space_vorticity(&g, q, p, 1e-3) - 1.0).abs() < 1e-10);
        }
    }

    fn qa_run(initial: QaInitial, h: &Hamiltonian, t_end: f64) -> QaRun {
        let grid = Grid::square(8.0, 32).unwrap();
        let cfg = QaConfig {
            dt: 1e-3,
            integrator: Integrator::Rk4,
            seed_extent: 1.0,
            ..QaConfig::default()
        };
        QaRun::evolve(h, &grid, initial, t_end, &cfg).unwrap()
    }

    #[test]
    fn kelvin_in_qa() {
        let h = Hamiltonian::harmonic(2, 1.0, 1.0).unwrap();
        let s0 = Arc::new(Quadratic::isotropic(-0.3));
        let rho0 = Arc::new(GaussianDensity::centered(2, 1.0));
        let run = qa_run(QaInitial::from_action(s0, Some(rho0)), &h, 1.0);
        let c0 = Contour::circle([0.5, 0.2], 1.0, 128).unwrap();
        let trace = kelvin_trace_qa(&run, &c0, &[0.0, 0.5, 1.0]).unwrap();
        assert!(!trace.truncated);
        assert!(trace.circulation.iter().all(|c| c.unwrap().abs() < 1e-8));

        let only = kelvin_trace_qa(&run, &c0, &[0.0]).unwrap();
        let snap = run.snapshot_at(0.0).unwrap();
        let direct = circulation(&|q| run.momentum_at(&snap, q), &c0).unwrap();
        assert_eq!(only.circulation, vec![Some(direct)]);
    }

    #[test]
    fn kelvin_for_rigid_rotation() {
        let h = Hamiltonian::free(2, 1.0).unwrap();
        let run = qa_run(QaInitial::from_momentum(Arc::new(AffineMomentum::rotation(1.0))), &h, 0.5);
        let c0 = Contour::circle([0.0; 2], 1.0, 128).unwrap();
        let trace = kelvin_trace_qa(&run, &c0, &[0.0, 0.25, 0.5]).unwrap();
        // Stokes: vorticity 2 times the enclosed area
        for c in trace.circulation {
            assert!((c.unwrap() - 2.0 * PI).abs() < 1e-5);
        }
    }

    #[test]
    fn kelvin_trace_stops_at_the_caustic() {
        let h = Hamiltonian::free(2, 1.0).unwrap();
        let run = qa_run(QaInitial::from_action(Arc::new(Quadratic::isotropic(-1.0)), None), &h, 2.0);
        let c0 = Contour::circle([0.0; 2], 1.0, 64).unwrap();
        let trace = kelvin_trace_qa(&run, &c0, &[0.0, 0.5, 1.5]).unwrap();
        assert!(trace.truncated);
        assert_eq!(trace.times, vec![0.0, 0.5]);
    }

    #[test]
    fn kelvin_in_qt() {
        let g = Grid::square(12.0, 64).unwrap();
        let h = Hamiltonian::harmonic(2, 1.0, 1.0).unwrap();
        let c0 = Contour::circle([0.0; 2], 1.0, 64).unwrap();

        let blob = catalog::gaussian_packet(&g, [0.2, 0.0], 1.0, [0.3, 0.0], 0.0, 1.0).unwrap();
        let trace = kelvin_trace_qt(&h, &blob, &c0, &[0.0, 0.2, 0.4], 1e-3, 0.0, 1e-8).unwrap();
        assert!(trace.winding.iter().all(|w| *w == Some(0)));
        assert!(trace.circulation.iter().all(|c| c.unwrap().abs() < 1e-8));

        let vortex = catalog::vortex_2d(&g, 1, 1.0, 1.0).unwrap();
        let trace = kelvin_trace_qt(&h, &vortex, &c0, &[0.0, 0.2, 0.4], 1e-3, 0.0, 1e-8).unwrap();
        assert_eq!(trace.winding[0], Some(1));
        assert!(trace.winding.iter().flatten().all(|w| *w == 1));
        assert!(trace.residue.iter().flatten().all(|r| *r < 0.05));
        // Stokes consistency: circulation of ∇S is 2πħ times the winding
        assert!((trace.circulation[0].unwrap() - 2.0 * PI).abs() < 1e-3);
        let mut csv = Vec::new();
        trace.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 4);
    }

    #[test]
    fn quartic_hamiltonian_is_rejected_for_phase_contours_in_2d() {
        let h = Hamiltonian::new(2, 1.0, Potential::Quartic { lambda: 1.0 }).unwrap();
        let c0 = Contour::circle([0.0; 2], 1.0, 64).unwrap();
        assert!(poincare_invariant(&h, &c0, &[0.0], 1e-3).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn stokes_consistency(k in -3i64..=3, cx in -0.5f64..0.5, cy in -0.5f64..0.5, r in 0.8f64..1.6, hbar in 0.1f64..2.0) {
            // S = ħ k θ around the origin; e^{iS/ħ} winds k times when enclosed
            let c = Contour::circle([cx, cy], r, 128).unwrap();
            let field = move |q: Vec2| vortex_field(q).map(|v| [hbar * k as f64 * v[0], hbar * k as f64 * v[1]]);
            let psi = move |q: Vec2| Complex64::from_polar(1.0, k as f64 * q[1].atan2(q[0]));
            let w = winding_number(&psi, &c, 1e-8).unwrap();
            prop_assert_eq!(w.value, k);
            prop_assert!((circulation(&field, &c).unwrap() - 2.0 * PI * hbar * w.value as f64).abs() < 1e-6);
            prop_assert_eq!(winding_number(&psi, &c.refine().unwrap(), 1e-8).unwrap().value, k);
        }
    }
}
