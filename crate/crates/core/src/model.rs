//! Shared domain types: grids, fields, envelopes, probes and nonlinearities.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Debug;
use core::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;

use crate::math::{self, abs, cos, exp, log, sin, sqrt};
use crate::{Error, Result};

/// Uniform node-centered Cartesian grid.
///
/// Nodes sit at `x_min + i·dx` for `i < nx`, so both bounds are nodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Grid2D {
    pub fn new(
        nx: usize,
        ny: usize,
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
    ) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2x2 nodes, got {nx}x{ny}"
            )));
        }
        if !(x_max > x_min && y_max > y_min)
            || ![x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite())
        {
            return Err(Error::InvalidGrid(String::from(
                "bounds must be finite and increasing",
            )));
        }
        Ok(Grid2D {
            nx,
            ny,
            x_min,
            x_max,
            y_min,
            y_max,
        })
    }

    /// `n x n` nodes on `[-half, half]²`.
    pub fn square(n: usize, half: f64) -> Result<Self> {
        Self::new(n, n, -half, half, -half, half)
    }

    /// Grid with spacing `dx` in both directions whose node rows include
    /// `y_anchor` exactly.
    pub fn with_spacing(
        dx: f64,
        x_min: f64,
        nx: usize,
        y_lo: f64,
        y_hi: f64,
        y_anchor: f64,
    ) -> Result<Self> {
        let below = math::ceil((y_anchor - y_lo) / dx - 1e-9).max(0.0) as usize;
        let above = math::ceil((y_hi - y_anchor) / dx - 1e-9).max(0.0) as usize;
        let y_min = y_anchor - below as f64 * dx;
        let ny = below + above + 1;
        Self::new(
            nx,
            ny,
            x_min,
            x_min + (nx - 1) as f64 * dx,
            y_min,
            y_min + (ny - 1) as f64 * dx,
        )
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y_max - self.y_min) / (self.ny - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx()
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y_min + j as f64 * self.dy()
    }

    pub fn point(&self, i: usize, j: usize) -> [f64; 2] {
        [self.x(i), self.y(j)]
    }

    /// Row-major index, `y` outer and `x` inner.
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn has_square_cells(&self) -> bool {
        let (dx, dy) = (self.dx(), self.dy());
        abs(dx - dy) <= 1e-12 * dx
    }

    pub fn require_square_cells(&self) -> Result<()> {
        if self.has_square_cells() {
            Ok(())
        } else {
            Err(Error::InvalidGrid(format!(
                "cells are not square: dx = {}, dy = {}",
                self.dx(),
                self.dy()
            )))
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.x_min && p[0] <= self.x_max && p[1] >= self.y_min && p[1] <= self.y_max
    }
}

/// Real or complex sample type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Real,
    Complex,
}

/// Numeric sample stored in a field: `f64` or [`Complex64`].
pub trait Sample:
    Copy
    + Send
    + Sync
    + Default
    + PartialEq
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Mul<f64, Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + 'static
{
    const KIND: FieldKind;

    fn from_re(x: f64) -> Self;
    fn re(self) -> f64;
    fn norm_sqr(self) -> f64;

    fn abs(self) -> f64 {
        sqrt(self.norm_sqr())
    }

    fn powu(self, n: u32) -> Self {
        let mut acc = Self::from_re(1.0);
        let mut base = self;
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            e >>= 1;
        }
        acc
    }

    fn wrap(values: Vec<Self>) -> FieldData;
    fn view(data: &FieldData) -> Option<&[Self]>;
    fn view_mut(data: &mut FieldData) -> Option<&mut [Self]>;
}

impl Sample for f64 {
    const KIND: FieldKind = FieldKind::Real;

    fn from_re(x: f64) -> Self {
        x
    }
    fn re(self) -> f64 {
        self
    }
    fn norm_sqr(self) -> f64 {
        self * self
    }
    fn wrap(values: Vec<Self>) -> FieldData {
        FieldData::Real(values)
    }
    fn view(data: &FieldData) -> Option<&[Self]> {
        match data {
            FieldData::Real(v) => Some(v),
            FieldData::Complex(_) => None,
        }
    }
    fn view_mut(data: &mut FieldData) -> Option<&mut [Self]> {
        match data {
            FieldData::Real(v) => Some(v),
            FieldData::Complex(_) => None,
        }
    }
}

impl Sample for Complex64 {
    const KIND: FieldKind = FieldKind::Complex;

    fn from_re(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn re(self) -> f64 {
        self.re
    }
    fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }
    fn wrap(values: Vec<Self>) -> FieldData {
        FieldData::Complex(values)
    }
    fn view(data: &FieldData) -> Option<&[Self]> {
        match data {
            FieldData::Complex(v) => Some(v),
            FieldData::Real(_) => None,
        }
    }
    fn view_mut(data: &mut FieldData) -> Option<&mut [Self]> {
        match data {
            FieldData::Complex(v) => Some(v),
            FieldData::Real(_) => None,
        }
    }
}

/// Sample storage of a [`ScalarField2D`]. A real field never allocates an
/// imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldData {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

impl FieldData {
    pub fn len(&self) -> usize {
        match self {
            FieldData::Real(v) => v.len(),
            FieldData::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> FieldKind {
        match self {
            FieldData::Real(_) => FieldKind::Real,
            FieldData::Complex(_) => FieldKind::Complex,
        }
    }
}

/// A real or complex function sampled on a [`Grid2D`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField2D {
    pub grid: Grid2D,
    pub data: FieldData,
}

impl ScalarField2D {
    pub fn new(grid: Grid2D, data: FieldData) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::InvalidGrid(format!(
                "field has {} samples, grid has {} nodes",
                data.len(),
                grid.len()
            )));
        }
        Ok(ScalarField2D { grid, data })
    }

    pub fn zeros(grid: Grid2D, kind: FieldKind) -> Self {
        let data = match kind {
            FieldKind::Real => FieldData::Real(alloc::vec![0.0; grid.len()]),
            FieldKind::Complex => FieldData::Complex(alloc::vec![Complex64::default(); grid.len()]),
        };
        ScalarField2D { grid, data }
    }

    pub fn from_samples<T: Sample>(grid: Grid2D, values: Vec<T>) -> Result<Self> {
        Self::new(grid, T::wrap(values))
    }

    pub fn from_fn_real(grid: Grid2D, mut f: impl FnMut([f64; 2]) -> f64) -> Self {
        let mut v = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                v.push(f(grid.point(i, j)));
            }
        }
        ScalarField2D {
            grid,
            data: FieldData::Real(v),
        }
    }

    pub fn kind(&self) -> FieldKind {
        self.data.kind()
    }

    pub fn samples<T: Sample>(&self) -> Option<&[T]> {
        T::view(&self.data)
    }

    pub fn real(&self) -> Option<&[f64]> {
        self.samples::<f64>()
    }

    pub fn complex(&self) -> Option<&[Complex64]> {
        self.samples::<Complex64>()
    }

    /// Value at node `(i, j)` promoted to complex.
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        let k = self.grid.index(i, j);
        match &self.data {
            FieldData::Real(v) => Complex64::new(v[k], 0.0),
            FieldData::Complex(v) => v[k],
        }
    }

    /// Real part as a real field.
    pub fn re(&self) -> ScalarField2D {
        match &self.data {
            FieldData::Real(_) => self.clone(),
            FieldData::Complex(v) => ScalarField2D {
                grid: self.grid,
                data: FieldData::Real(v.iter().map(|z| z.re).collect()),
            },
        }
    }

    pub fn max_abs(&self) -> f64 {
        match &self.data {
            FieldData::Real(v) => v.iter().fold(0.0, |m, x| m.max(abs(*x))),
            FieldData::Complex(v) => sqrt(v.iter().fold(0.0, |m, z| m.max(z.norm_sqr()))),
        }
    }

    /// Pointwise `self - other`.
    pub fn sub(&self, other: &ScalarField2D) -> Result<ScalarField2D> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let data = match (&self.data, &other.data) {
            (FieldData::Real(a), FieldData::Real(b)) => {
                FieldData::Real(a.iter().zip(b).map(|(x, y)| x - y).collect())
            }
            (FieldData::Complex(a), FieldData::Complex(b)) => {
                FieldData::Complex(a.iter().zip(b).map(|(x, y)| x - y).collect())
            }
            _ => return Err(Error::KindMismatch),
        };
        Ok(ScalarField2D {
            grid: self.grid,
            data,
        })
    }

    /// Bilinear interpolation at an arbitrary point; zero outside the grid.
    pub fn sample_bilinear(&self, p: [f64; 2]) -> Complex64 {
        let g = &self.grid;
        let fx = (p[0] - g.x_min) / g.dx();
        let fy = (p[1] - g.y_min) / g.dy();
        if !(fx >= 0.0 && fy >= 0.0 && fx <= (g.nx - 1) as f64 && fy <= (g.ny - 1) as f64) {
            return Complex64::default();
        }
        let i = (math::floor(fx) as usize).min(g.nx - 2);
        let j = (math::floor(fy) as usize).min(g.ny - 2);
        let (tx, ty) = (fx - i as f64, fy - j as f64);
        let a = self.at(i, j) * (1.0 - tx) + self.at(i + 1, j) * tx;
        let b = self.at(i, j + 1) * (1.0 - tx) + self.at(i + 1, j + 1) * tx;
        a * (1.0 - ty) + b * ty
    }

    /// Tensor cubic Lagrange interpolation on the 4x4 neighbouring nodes;
    /// zero outside the grid.
    pub fn sample_cubic(&self, p: [f64; 2]) -> Complex64 {
        let g = &self.grid;
        if g.nx < 4 || g.ny < 4 {
            return self.sample_bilinear(p);
        }
        let fx = (p[0] - g.x_min) / g.dx();
        let fy = (p[1] - g.y_min) / g.dy();
        if !(fx >= 0.0 && fy >= 0.0 && fx <= (g.nx - 1) as f64 && fy <= (g.ny - 1) as f64) {
            return Complex64::default();
        }
        let i0 = (math::floor(fx) as usize).clamp(1, g.nx - 3) - 1;
        let j0 = (math::floor(fy) as usize).clamp(1, g.ny - 3) - 1;
        let wx = lagrange4(fx - i0 as f64);
        let wy = lagrange4(fy - j0 as f64);
        let mut acc = Complex64::default();
        for (b, wyb) in wy.iter().enumerate() {
            let mut row = Complex64::default();
            for (a, wxa) in wx.iter().enumerate() {
                row += self.at(i0 + a, j0 + b) * *wxa;
            }
            acc += row * *wyb;
        }
        acc
    }
}

/// Cubic Lagrange weights for nodes at 0, 1, 2, 3 evaluated at `t`.
pub(crate) fn lagrange4(t: f64) -> [f64; 4] {
    [
        -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0,
        t * (t - 2.0) * (t - 3.0) / 2.0,
        -t * (t - 1.0) * (t - 3.0) / 2.0,
        t * (t - 1.0) * (t - 2.0) / 6.0,
    ]
}

/// Pulse profile `χ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Envelope {
    /// `K exp(-s²/width2)`, truncated to zero for `|s| >= 4·sqrt(width2)`.
    Gaussian { width2: f64, amplitude: f64 },
    /// `K exp(1 - 1/(1 - (s/δ)²))` on `|s| < δ`, zero outside.
    Bump { delta: f64, amplitude: f64 },
}

impl Envelope {
    /// The Gaussian used in the numerical examples: `exp(-s²/0.02)`.
    pub const STANDARD: Envelope = Envelope::Gaussian {
        width2: 0.02,
        amplitude: 1.0,
    };

    pub fn amplitude(&self) -> f64 {
        match *self {
            Envelope::Gaussian { amplitude, .. } | Envelope::Bump { amplitude, .. } => amplitude,
        }
    }

    pub fn half_support(&self) -> f64 {
        match *self {
            Envelope::Gaussian { width2, .. } => 4.0 * sqrt(width2),
            Envelope::Bump { delta, .. } => delta,
        }
    }

    pub fn with_amplitude(self, k: f64) -> Envelope {
        match self {
            Envelope::Gaussian { width2, .. } => Envelope::Gaussian {
                width2,
                amplitude: k,
            },
            Envelope::Bump { delta, .. } => Envelope::Bump {
                delta,
                amplitude: k,
            },
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match *self {
            Envelope::Gaussian { width2, amplitude } => {
                if abs(s) >= self.half_support() {
                    0.0
                } else {
                    amplitude * exp(-s * s / width2)
                }
            }
            Envelope::Bump { delta, amplitude } => {
                let r2 = (s / delta) * (s / delta);
                if r2 >= 1.0 {
                    0.0
                } else {
                    amplitude * exp(1.0 - 1.0 / (1.0 - r2))
                }
            }
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        match *self {
            Envelope::Gaussian { width2, .. } => -2.0 * s / width2 * self.eval(s),
            Envelope::Bump { delta, .. } => {
                let r2 = (s / delta) * (s / delta);
                if r2 >= 1.0 {
                    0.0
                } else {
                    self.eval(s) * (-2.0 * s / (delta * delta)) / ((1.0 - r2) * (1.0 - r2))
                }
            }
        }
    }

    /// The non-negative `s` with `χ(s) = m`, for `0 < m <= K`.
    pub fn inverse(&self, m: f64) -> Option<f64> {
        let k = self.amplitude();
        if !(m > 0.0 && m <= k) {
            return None;
        }
        let l = log(m / k);
        let s = match *self {
            Envelope::Gaussian { width2, .. } => sqrt(-width2 * l),
            Envelope::Bump { delta, .. } => delta * sqrt(1.0 - 1.0 / (1.0 - l)),
        };
        (s < self.half_support()).then_some(s)
    }
}

/// Smooth transverse window applied to the probe: 1 for `|p| <= flat`,
/// rolling off to 0 at `|p| = flat + taper`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aperture {
    pub flat: f64,
    pub taper: f64,
}

impl Aperture {
    pub fn eval(&self, p: f64) -> f64 {
        1.0 - math::smoothstep5((abs(p) - self.flat) / self.taper)
    }
}

/// Incident probe `χ(φ) e^{iφ/h}` or `χ(φ) cos(φ/h)`, `φ = -t + x·ω`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSpec {
    pub h: f64,
    pub omega: [f64; 2],
    pub chi: Envelope,
    /// Exit time `T` at which the wave is measured.
    pub t_exit: f64,
    /// Time at which the Cauchy data is posed.
    pub t_start: f64,
    pub field_kind: FieldKind,
    pub aperture: Option<Aperture>,
}

impl ProbeSpec {
    /// Probe along `ω` with exit time `t_exit` and data posed at
    /// `t_start = -(R + δ) - margin`, the earliest time compatible with a
    /// nonlinearity supported in the disc of radius `R` about the origin.
    pub fn new(
        h: f64,
        omega: [f64; 2],
        chi: Envelope,
        t_exit: f64,
        field_kind: FieldKind,
        support_radius: f64,
    ) -> Self {
        let t_start = -(support_radius + chi.half_support()) - START_MARGIN;
        ProbeSpec {
            h,
            omega,
            chi,
            t_exit,
            t_start,
            field_kind,
            aperture: None,
        }
    }

    pub fn with_angle(mut self, theta: f64) -> Self {
        self.omega = [cos(theta), sin(theta)];
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = sqrt(self.omega[0] * self.omega[0] + self.omega[1] * self.omega[1]);
        if abs(n - 1.0) > 1e-12 {
            return Err(Error::InvalidProbe(format!("|omega| = {n}, expected 1")));
        }
        if !(self.h > 0.0) {
            return Err(Error::InvalidProbe(format!(
                "h = {} must be positive",
                self.h
            )));
        }
        if !(self.t_exit > self.t_start) {
            return Err(Error::InvalidProbe(String::from(
                "exit time must follow the start time",
            )));
        }
        let k = self.chi.amplitude();
        if !(k >= 0.0 && self.chi.half_support() > 0.0) {
            return Err(Error::InvalidProbe(String::from(
                "envelope must be non-negative with positive support",
            )));
        }
        Ok(())
    }

    /// Unit normal to `ω`, `(-ω_y, ω_x)`.
    pub fn normal(&self) -> [f64; 2] {
        [-self.omega[1], self.omega[0]]
    }

    pub fn delta(&self) -> f64 {
        self.chi.half_support()
    }

    pub fn phase(&self, t: f64, x: [f64; 2]) -> f64 {
        phase(t, x, self.omega)
    }

    fn window(&self, x: [f64; 2]) -> f64 {
        match self.aperture {
            None => 1.0,
            Some(a) => {
                let n = self.normal();
                a.eval(x[0] * n[0] + x[1] * n[1])
            }
        }
    }

    /// Free traveling wave and its time derivative at `(t, x)`, in complex
    /// form; the real probe is the real part of both.
    pub fn wave(&self, t: f64, x: [f64; 2]) -> (Complex64, Complex64) {
        let phi = self.phase(t, x);
        let c = self.chi.eval(phi);
        if c == 0.0 {
            return (Complex64::default(), Complex64::default());
        }
        let w = self.window(x);
        let e = Complex64::new(cos(phi / self.h), sin(phi / self.h));
        let dc = self.chi.derivative(phi);
        let u = e * (c * w);
        let ut = e * Complex64::new(-dc, -c / self.h) * w;
        (u, ut)
    }
}

/// Spacing between the start pulse band and the nonlinearity support.
pub const START_MARGIN: f64 = 0.02;

/// The linear phase `-t + x·ω`.
pub fn phase(t: f64, x: [f64; 2], omega: [f64; 2]) -> f64 {
    -t + x[0] * omega[0] + x[1] * omega[1]
}

/// Cauchy data `(u, u_t)` of the probe at `t0`.
///
/// `support` is the bounding disc `(center, radius)` of the nonlinearity; the
/// pulse band `|-t0 + x·ω| < δ` must stay clear of it.
pub fn cauchy_data(
    probe: &ProbeSpec,
    grid: &Grid2D,
    t0: f64,
    support: Option<([f64; 2], f64)>,
) -> Result<(ScalarField2D, ScalarField2D)> {
    probe.validate()?;
    let delta = probe.delta();
    if let Some((c, r)) = support {
        let center = c[0] * probe.omega[0] + c[1] * probe.omega[1];
        if abs(center - t0) < delta + r {
            return Err(Error::PulseOverlapsSupport { t0 });
        }
    }
    let mut u = Vec::with_capacity(grid.len());
    let mut ut = Vec::with_capacity(grid.len());
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let (a, b) = probe.wave(t0, grid.point(i, j));
            u.push(a);
            ut.push(b);
        }
    }
    match probe.field_kind {
        FieldKind::Complex => Ok((
            ScalarField2D::from_samples(*grid, u)?,
            ScalarField2D::from_samples(*grid, ut)?,
        )),
        FieldKind::Real => Ok((
            ScalarField2D::from_samples(*grid, u.iter().map(|z| z.re).collect::<Vec<f64>>())?,
            ScalarField2D::from_samples(*grid, ut.iter().map(|z| z.re).collect::<Vec<f64>>())?,
        )),
    }
}

/// Spatial coefficient `α(x)` of a nonlinearity term, compactly supported.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Zero,
    /// `A exp(-|x-c|²/σ²)` multiplied by a smooth taper that is 1 inside
    /// `0.8·radius` and 0 beyond `radius`.
    Gaussian {
        center: [f64; 2],
        sigma2: f64,
        amplitude: f64,
        radius: f64,
    },
    Sum(Vec<Profile>),
    /// Samples on a grid, interpolated bilinearly; must be real.
    Sampled(Box<ScalarField2D>),
    /// `inner` seen in a frame rotated by `theta`; see [`Profile::in_frame`].
    Rotated {
        inner: Box<Profile>,
        theta: f64,
    },
}

impl Profile {
    /// Centered Gaussian `exp(-|x|²/0.02)` supported in `|x| < 0.5`.
    pub fn standard_gaussian() -> Profile {
        Profile::Gaussian {
            center: [0.0, 0.0],
            sigma2: 0.02,
            amplitude: 1.0,
            radius: 0.5,
        }
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Gaussian {
                center,
                sigma2,
                amplitude,
                radius,
            } => {
                let dx = x[0] - center[0];
                let dy = x[1] - center[1];
                let r2 = dx * dx + dy * dy;
                if r2 >= radius * radius {
                    return 0.0;
                }
                let taper = 1.0 - math::smoothstep5((sqrt(r2) / radius - 0.8) / 0.2);
                amplitude * exp(-r2 / sigma2) * taper
            }
            Profile::Sum(parts) => parts.iter().map(|p| p.eval(x)).sum(),
            Profile::Sampled(field) => field.sample_bilinear(x).re,
            Profile::Rotated { inner, theta } => inner.eval(frame_to_lab(*theta, x)),
        }
    }

    /// Bounding disc `(center, radius)` of the support, `None` if zero.
    pub fn support(&self) -> Option<([f64; 2], f64)> {
        match self {
            Profile::Zero => None,
            Profile::Gaussian {
                center,
                radius,
                amplitude,
                ..
            } => (*amplitude != 0.0).then_some((*center, *radius)),
            Profile::Sum(parts) => parts.iter().filter_map(|p| p.support()).reduce(union_disc),
            Profile::Sampled(field) => sampled_support(field),
            Profile::Rotated { inner, theta } => {
                inner.support().map(|(c, r)| (lab_to_frame(*theta, c), r))
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.support().is_none()
    }

    /// The same coefficient expressed in the frame whose second axis is
    /// `ω(θ) = (cos θ, sin θ)` and whose first axis is `-n(θ)`, with
    /// `n(θ) = (-sin θ, cos θ)`. A probe along `(0, 1)` in that frame sees the
    /// medium as a probe along `ω(θ)` sees the original one.
    pub fn in_frame(&self, theta: f64) -> Profile {
        match self {
            Profile::Zero => Profile::Zero,
            Profile::Gaussian {
                center,
                sigma2,
                amplitude,
                radius,
            } => Profile::Gaussian {
                center: lab_to_frame(theta, *center),
                sigma2: *sigma2,
                amplitude: *amplitude,
                radius: *radius,
            },
            Profile::Sum(parts) => Profile::Sum(parts.iter().map(|p| p.in_frame(theta)).collect()),
            other => Profile::Rotated {
                inner: Box::new(other.clone()),
                theta,
            },
        }
    }

    pub fn sample(&self, grid: &Grid2D) -> ScalarField2D {
        ScalarField2D::from_fn_real(*grid, |x| self.eval(x))
    }
}

/// Lab coordinates of the frame point `ξ`: `x = ξ₁(-n) + ξ₂ω`.
pub fn frame_to_lab(theta: f64, xi: [f64; 2]) -> [f64; 2] {
    let (c, s) = (cos(theta), sin(theta));
    [xi[0] * s + xi[1] * c, -xi[0] * c + xi[1] * s]
}

/// Frame coordinates of the lab point `x`: `(−x·n, x·ω)`.
pub fn lab_to_frame(theta: f64, x: [f64; 2]) -> [f64; 2] {
    let (c, s) = (cos(theta), sin(theta));
    [x[0] * s - x[1] * c, x[0] * c + x[1] * s]
}

fn union_disc(a: ([f64; 2], f64), b: ([f64; 2], f64)) -> ([f64; 2], f64) {
    let (ex, ey) = (b.0[0] - a.0[0], b.0[1] - a.0[1]);
    let d = sqrt(ex * ex + ey * ey);
    if d + b.1 <= a.1 {
        return a;
    }
    if d + a.1 <= b.1 {
        return b;
    }
    let r = (d + a.1 + b.1) / 2.0;
    let t = (r - a.1) / d;
    (
        [
            a.0[0] + (b.0[0] - a.0[0]) * t,
            a.0[1] + (b.0[1] - a.0[1]) * t,
        ],
        r,
    )
}

fn sampled_support(field: &ScalarField2D) -> Option<([f64; 2], f64)> {
    let g = &field.grid;
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for j in 0..g.ny {
        for i in 0..g.nx {
            if field.at(i, j).norm_sqr() != 0.0 {
                let p = g.point(i, j);
                lo = [lo[0].min(p[0]), lo[1].min(p[1])];
                hi = [hi[0].max(p[0]), hi[1].max(p[1])];
            }
        }
    }
    if lo[0] > hi[0] {
        return None;
    }
    let c = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let (ex, ey) = (hi[0] - c[0], hi[1] - c[1]);
    let r = sqrt(ex * ex + ey * ey) + g.dx().max(g.dy());
    Some((c, r))
}

/// A real function of one variable.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarFn {
    /// `Σ c_i p^i`.
    Poly(Vec<f64>),
    /// Samples `values[i]` at `x0 + i·step`, cubic interpolation inside,
    /// linear extrapolation outside.
    Tabulated {
        x0: f64,
        step: f64,
        values: Vec<f64>,
    },
}

impl ScalarFn {
    pub fn constant(c: f64) -> ScalarFn {
        ScalarFn::Poly(alloc::vec![c])
    }

    pub fn identity() -> ScalarFn {
        ScalarFn::Poly(alloc::vec![0.0, 1.0])
    }

    pub fn tabulate(x0: f64, x1: f64, n: usize, f: impl Fn(f64) -> f64) -> ScalarFn {
        let step = (x1 - x0) / (n - 1) as f64;
        ScalarFn::Tabulated {
            x0,
            step,
            values: (0..n).map(|i| f(x0 + i as f64 * step)).collect(),
        }
    }

    pub fn eval(&self, p: f64) -> f64 {
        match self {
            ScalarFn::Poly(c) => c.iter().rev().fold(0.0, |acc, ci| acc * p + ci),
            ScalarFn::Tabulated { x0, step, values } => {
                let n = values.len();
                let f = (p - x0) / step;
                if n < 4 {
                    let i = (math::floor(f).max(0.0) as usize).min(n.saturating_sub(2));
                    let t = f - i as f64;
                    return values[i] * (1.0 - t) + values[(i + 1).min(n - 1)] * t;
                }
                if f <= 0.0 {
                    return values[0] + (values[1] - values[0]) * f;
                }
                if f >= (n - 1) as f64 {
                    return values[n - 1] + (values[n - 1] - values[n - 2]) * (f - (n - 1) as f64);
                }
                let i0 = (math::floor(f) as usize).clamp(1, n - 3) - 1;
                let w = lagrange4(f - i0 as f64);
                (0..4).map(|a| w[a] * values[i0 + a]).sum()
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ScalarFn::Poly(c) => c.iter().all(|x| *x == 0.0),
            ScalarFn::Tabulated { values, .. } => values.iter().all(|x| *x == 0.0),
        }
    }
}

/// How one nonlinearity term depends on `u`.
#[derive(Debug, Clone, PartialEq)]
pub enum Law {
    /// `f0(|u|²)·u`, odd in `u`.
    OddRadial(ScalarFn),
    /// `u^m`.
    Monomial(u32),
    /// `F(u)` for real `u`; complex states use `F(Re u)`.
    Real(ScalarFn),
}

impl Law {
    pub fn apply<T: Sample>(&self, u: T) -> T {
        match self {
            Law::OddRadial(f0) => u * f0.eval(u.norm_sqr()),
            Law::Monomial(m) => u.powu(*m),
            Law::Real(f) => T::from_re(f.eval(u.re())),
        }
    }

    pub fn is_odd(&self) -> bool {
        match self {
            Law::OddRadial(_) => true,
            Law::Monomial(m) => m % 2 == 1,
            Law::Real(_) => false,
        }
    }

    /// Scalar real-valued `F(u)`.
    pub fn eval_real(&self, u: f64) -> f64 {
        self.apply(u)
    }
}

/// One term `α(x)·F(u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Term {
    pub alpha: Profile,
    pub law: Law,
}

/// The closed forms of `f(x, u)` supported by the solver and the oracles.
#[derive(Debug, Clone, PartialEq)]
pub enum Variant {
    Zero,
    /// `α(x)·F0(u²)·u`.
    OddSeparated {
        alpha: Profile,
        f0: ScalarFn,
    },
    /// `Σ α_m(x) u^m`, `m >= 1`.
    Polynomial {
        terms: Vec<(u32, Profile)>,
    },
    /// `f0(x, p)·u` with `f0(x, p) = Σ α_j(x) g_j(p)`.
    OddGeneral {
        terms: Vec<(Profile, ScalarFn)>,
    },
    /// `α(x)·F(u)` for a tabulated, not necessarily odd, `F`.
    General {
        alpha: Profile,
        f: ScalarFn,
    },
}

/// Amplitude cutoff `κ(|u|²)`: 1 below `rho`, quintic roll-off to 0 at `2·rho`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cutoff {
    pub rho: f64,
}

impl Cutoff {
    /// `ρ = (2K)²` for probe amplitude `K`.
    pub fn for_amplitude(k: f64) -> Cutoff {
        Cutoff { rho: 4.0 * k * k }
    }

    pub fn eval(&self, u2: f64) -> f64 {
        if u2 <= self.rho {
            1.0
        } else {
            1.0 - math::smoothstep5((u2 - self.rho) / self.rho)
        }
    }
}

/// `f(x, u)` together with its amplitude cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearitySpec {
    pub variant: Variant,
    pub cutoff: Option<Cutoff>,
}

impl NonlinearitySpec {
    pub fn zero() -> Self {
        NonlinearitySpec {
            variant: Variant::Zero,
            cutoff: None,
        }
    }

    pub fn new(variant: Variant, amplitude: f64) -> Self {
        NonlinearitySpec {
            variant,
            cutoff: Some(Cutoff::for_amplitude(amplitude)),
        }
    }

    /// `α(x) u³` for real or `α(x) |u|² u` for complex states.
    pub fn cubic(alpha: Profile, amplitude: f64) -> Self {
        Self::new(
            Variant::OddSeparated {
                alpha,
                f0: ScalarFn::identity(),
            },
            amplitude,
        )
    }

    /// Flat list of `α·F` terms.
    pub fn terms(&self) -> Vec<Term> {
        match &self.variant {
            Variant::Zero => Vec::new(),
            Variant::OddSeparated { alpha, f0 } => {
                alloc::vec![Term {
                    alpha: alpha.clone(),
                    law: Law::OddRadial(f0.clone())
                }]
            }
            Variant::Polynomial { terms } => terms
                .iter()
                .map(|(m, a)| Term {
                    alpha: a.clone(),
                    law: Law::Monomial(*m),
                })
                .collect(),
            Variant::OddGeneral { terms } => terms
                .iter()
                .map(|(a, g)| Term {
                    alpha: a.clone(),
                    law: Law::OddRadial(g.clone()),
                })
                .collect(),
            Variant::General { alpha, f } => alloc::vec![Term {
                alpha: alpha.clone(),
                law: Law::Real(f.clone())
            }],
        }
    }

    pub fn is_odd(&self) -> bool {
        self.terms().iter().all(|t| t.law.is_odd())
    }

    pub fn is_zero(&self) -> bool {
        self.terms().iter().all(|t| t.alpha.is_zero())
    }

    /// Bounding disc of the union of all coefficient supports.
    pub fn support(&self) -> Option<([f64; 2], f64)> {
        self.terms()
            .iter()
            .filter_map(|t| t.alpha.support())
            .reduce(union_disc)
    }

    /// Radius `R` of the smallest origin-centered disc containing the support.
    pub fn support_radius(&self) -> f64 {
        self.support()
            .map(|(c, r)| sqrt(c[0] * c[0] + c[1] * c[1]) + r)
            .unwrap_or(0.0)
    }

    /// The same nonlinearity seen from the frame of [`Profile::in_frame`].
    pub fn in_frame(&self, theta: f64) -> NonlinearitySpec {
        let variant = match &self.variant {
            Variant::Zero => Variant::Zero,
            Variant::OddSeparated { alpha, f0 } => Variant::OddSeparated {
                alpha: alpha.in_frame(theta),
                f0: f0.clone(),
            },
            Variant::Polynomial { terms } => Variant::Polynomial {
                terms: terms.iter().map(|(m, a)| (*m, a.in_frame(theta))).collect(),
            },
            Variant::OddGeneral { terms } => Variant::OddGeneral {
                terms: terms
                    .iter()
                    .map(|(a, g)| (a.in_frame(theta), g.clone()))
                    .collect(),
            },
            Variant::General { alpha, f } => Variant::General {
                alpha: alpha.in_frame(theta),
                f: f.clone(),
            },
        };
        NonlinearitySpec {
            variant,
            cutoff: self.cutoff,
        }
    }

    /// `κ(|u|²)·f(x, u)`.
    pub fn eval<T: Sample>(&self, x: [f64; 2], u: T) -> T {
        let mut acc = T::default();
        for t in self.terms() {
            let a = t.alpha.eval(x);
            if a != 0.0 {
                acc += t.law.apply(u) * a;
            }
        }
        match self.cutoff {
            Some(c) => acc * c.eval(u.norm_sqr()),
            None => acc,
        }
    }
}

/// Transverse boundary treatment of the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Boundary {
    /// Homogeneous Dirichlet walls on all four sides.
    #[default]
    Dirichlet,
    /// Periodic in `x`, Dirichlet in `y`. Requires `ω = (0, ±1)` unless the
    /// probe carries an aperture.
    PeriodicX,
}

/// Finite-difference scheme of the solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Leapfrog with the 5-point Laplacian, second order in space and time.
    Standard,
    /// Eighth-order Laplacian with fourth-order modified-equation time
    /// stepping.
    #[default]
    HighOrder,
}

impl Scheme {
    /// Stencil radius in nodes.
    pub fn radius(&self) -> usize {
        match self {
            Scheme::Standard => 1,
            Scheme::HighOrder => 4,
        }
    }
}

/// Non-fatal findings of [`ExperimentConfig::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    LowResolution { points_per_wavelength: f64 },
}

/// Everything needed to run one probing experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub grid: Grid2D,
    pub probe: ProbeSpec,
    pub nonlinearity: NonlinearitySpec,
    pub cfl: f64,
    pub boundary: Boundary,
    pub scheme: Scheme,
}

/// Resolution below which configurations are rejected.
pub const MIN_POINTS_PER_WAVELENGTH: f64 = 6.0;
/// Resolution below which configurations produce a warning.
pub const WARN_POINTS_PER_WAVELENGTH: f64 = 15.0;

impl ExperimentConfig {
    pub fn points_per_wavelength(&self) -> f64 {
        2.0 * math::PI * self.probe.h / self.grid.dx()
    }

    pub fn band_halfwidth(&self) -> f64 {
        self.probe.delta()
    }

    pub fn validate(&self) -> Result<Vec<Warning>> {
        self.grid.require_square_cells()?;
        self.probe.validate()?;
        let mut warnings = Vec::new();
        let ppw = self.points_per_wavelength();
        if ppw < MIN_POINTS_PER_WAVELENGTH {
            return Err(Error::GridTooCoarse(format!(
                "{ppw:.2} points per wavelength"
            )));
        }
        if ppw < WARN_POINTS_PER_WAVELENGTH {
            warnings.push(Warning::LowResolution {
                points_per_wavelength: ppw,
            });
        }
        if !(self.cfl > 0.0 && self.cfl < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "cfl = {} outside (0, 1)",
                self.cfl
            )));
        }
        let limit = match self.scheme {
            Scheme::Standard => core::f64::consts::FRAC_1_SQRT_2,
            Scheme::HighOrder => 0.9,
        };
        if self.cfl > limit {
            return Err(Error::InvalidConfig(format!(
                "cfl = {} above the stability limit {limit}",
                self.cfl
            )));
        }
        if self.probe.field_kind == FieldKind::Complex
            && self
                .nonlinearity
                .terms()
                .iter()
                .any(|t| matches!(t.law, Law::Real(_)))
        {
            return Err(Error::WrongVariant("complex probes"));
        }
        let r = self.nonlinearity.support_radius();
        if !self.nonlinearity.is_zero() && self.probe.t_exit <= r + self.probe.delta() {
            return Err(Error::InvalidConfig(format!(
                "exit time {} must exceed R + δ = {}",
                self.probe.t_exit,
                r + self.probe.delta()
            )));
        }
        if self.boundary == Boundary::PeriodicX
            && self.probe.aperture.is_none()
            && abs(self.probe.omega[0]) > 1e-12
        {
            return Err(Error::InvalidConfig(String::from(
                "periodic x boundary needs a probe along the y axis or an aperture",
            )));
        }
        Ok(warnings)
    }
}
