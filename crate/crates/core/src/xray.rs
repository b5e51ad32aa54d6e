//! X-ray (Radon) transform in the plane and its filtered-backprojection
//! inverse.
//!
//! Angles `θ_j = jπ/n_angles` parametrize the line direction
//! `ω(θ) = (cos θ, sin θ)`; the signed offset `p` is measured along the
//! normal `n(θ) = (-sin θ, cos θ)`, so the line is `{p·n + σω : σ ∈ R}`.

use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64;

use crate::fft::fft;
use crate::math::{cos, floor, sin, PI};
use crate::model::{Grid2D, ScalarField2D};
use crate::{Error, Result};

/// Line integrals sampled on a uniform `(angle, offset)` lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    pub n_angles: usize,
    pub n_offsets: usize,
    /// Offsets are uniform on `[-l, l]`.
    pub l: f64,
    /// Row-major `(angle, offset)`.
    pub values: Vec<f64>,
}

impl Sinogram {
    pub fn zeros(n_angles: usize, n_offsets: usize, l: f64) -> Self {
        Sinogram {
            n_angles,
            n_offsets,
            l,
            values: vec![0.0; n_angles * n_offsets],
        }
    }

    pub fn angle(&self, j: usize) -> f64 {
        j as f64 * PI / self.n_angles as f64
    }

    pub fn offset_step(&self) -> f64 {
        2.0 * self.l / (self.n_offsets - 1) as f64
    }

    pub fn offset(&self, i: usize) -> f64 {
        -self.l + i as f64 * self.offset_step()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j * self.n_offsets..(j + 1) * self.n_offsets]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.values[j * self.n_offsets..(j + 1) * self.n_offsets]
    }

    /// Linear interpolation of row `j` at offset `p`; zero outside `[-l, l]`.
    pub fn interpolate(&self, j: usize, p: f64) -> f64 {
        interp_row(self.row(j), self.l, self.offset_step(), p)
    }
}

fn interp_row(row: &[f64], l: f64, dp: f64, p: f64) -> f64 {
    let f = (p + l) / dp;
    if f < 0.0 || f > (row.len() - 1) as f64 {
        return 0.0;
    }
    let i = (floor(f) as usize).min(row.len() - 2);
    let t = f - i as f64;
    row[i] * (1.0 - t) + row[i + 1] * t
}

/// Composite Simpson integral of `f(origin + σ·dir)` for `σ ∈ [s0, s1]`
/// with step at most `step`.
pub fn line_integral(
    f: impl Fn([f64; 2]) -> f64,
    origin: [f64; 2],
    dir: [f64; 2],
    s0: f64,
    s1: f64,
    step: f64,
) -> f64 {
    if s1 <= s0 {
        return 0.0;
    }
    let mut n = crate::math::ceil((s1 - s0) / step) as usize;
    n = n.max(2);
    if n % 2 == 1 {
        n += 1;
    }
    let h = (s1 - s0) / n as f64;
    let at = |k: usize| {
        let s = s0 + k as f64 * h;
        f([origin[0] + s * dir[0], origin[1] + s * dir[1]])
    };
    let mut acc = at(0) + at(n);
    for k in 1..n {
        acc += at(k) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * h / 3.0
}

/// Bounding box `[x0, x1] x [y0, y1]` of the nonzero samples.
fn nonzero_box(field: &ScalarField2D, values: &[f64]) -> Option<[usize; 4]> {
    let g = &field.grid;
    let mut b = [usize::MAX, 0, usize::MAX, 0];
    for j in 0..g.ny {
        for i in 0..g.nx {
            if values[g.index(i, j)] != 0.0 {
                b = [b[0].min(i), b[1].max(i), b[2].min(j), b[3].max(j)];
            }
        }
    }
    (b[0] != usize::MAX).then_some(b)
}

/// Forward transform by Simpson sampling with step `dx/2` and bilinear
/// interpolation.
pub fn radon_forward(
    field: &ScalarField2D,
    n_angles: usize,
    n_offsets: usize,
    l: f64,
) -> Result<Sinogram> {
    let values = field.real().ok_or(Error::KindMismatch)?;
    let g = field.grid;
    let mut sino = Sinogram::zeros(n_angles, n_offsets, l);
    let Some(b) = nonzero_box(field, values) else {
        return Ok(sino);
    };
    if b[0] < 2 || b[2] < 2 || b[1] + 2 >= g.nx || b[3] + 2 >= g.ny {
        return Err(Error::SupportLeak);
    }
    let (x0, x1) = (g.x(b[0] - 1), g.x(b[1] + 1));
    let (y0, y1) = (g.y(b[2] - 1), g.y(b[3] + 1));
    let center = [(x0 + x1) / 2.0, (y0 + y1) / 2.0];
    let radius = crate::math::sqrt((x1 - x0) * (x1 - x0) + (y1 - y0) * (y1 - y0)) / 2.0;
    let step = g.dx().min(g.dy()) / 2.0;
    let eval = |x: [f64; 2]| {
        if x[0] < x0 || x[0] > x1 || x[1] < y0 || x[1] > y1 {
            0.0
        } else {
            field.sample_bilinear(x).re
        }
    };
    let row_of = |j: usize, row: &mut [f64]| {
        let th = j as f64 * PI / n_angles as f64;
        let (w, n) = ([cos(th), sin(th)], [-sin(th), cos(th)]);
        let dp = 2.0 * l / (n_offsets - 1) as f64;
        for (i, r) in row.iter_mut().enumerate() {
            let p = -l + i as f64 * dp;
            let foot = [p * n[0], p * n[1]];
            // Parameter of the point on the line closest to the support center.
            let sc = (center[0] - foot[0]) * w[0] + (center[1] - foot[1]) * w[1];
            let dist2 = {
                let cx = foot[0] + sc * w[0] - center[0];
                let cy = foot[1] + sc * w[1] - center[1];
                cx * cx + cy * cy
            };
            if dist2 > radius * radius {
                *r = 0.0;
                continue;
            }
            let half = crate::math::sqrt(radius * radius - dist2);
            *r = line_integral(eval, foot, w, sc - half, sc + half, step);
        }
    };
    for_each_row(&mut sino.values, n_offsets, row_of);
    Ok(sino)
}

#[cfg(feature = "parallel")]
fn for_each_row(values: &mut [f64], width: usize, f: impl Fn(usize, &mut [f64]) + Sync) {
    use rayon::prelude::*;
    values
        .par_chunks_mut(width)
        .enumerate()
        .for_each(|(j, r)| f(j, r));
}

#[cfg(not(feature = "parallel"))]
fn for_each_row(values: &mut [f64], width: usize, f: impl Fn(usize, &mut [f64])) {
    for (j, r) in values.chunks_mut(width).enumerate() {
        f(j, r);
    }
}

/// Ramp-filters every row: discrete Ram-Lak kernel, apodized by a raised
/// cosine that vanishes at the offset Nyquist frequency.
pub fn ramp_filter(sino: &Sinogram) -> Sinogram {
    let n = sino.n_offsets;
    let dp = sino.offset_step();
    let len = (2 * n).next_power_of_two();
    let mut kernel = vec![Complex64::default(); len];
    kernel[0] = Complex64::new(1.0 / (4.0 * dp * dp), 0.0);
    for k in (1..n).step_by(2) {
        let v = -1.0 / (PI * PI * (k * k) as f64 * dp * dp);
        kernel[k] = Complex64::new(v, 0.0);
        kernel[len - k] = Complex64::new(v, 0.0);
    }
    fft(&mut kernel, false);
    for (m, h) in kernel.iter_mut().enumerate() {
        let f = m.min(len - m) as f64 / (len / 2) as f64;
        *h *= 0.5 * (1.0 + cos(PI * f)) * dp / len as f64;
    }
    let mut out = sino.clone();
    let filter_row = |j: usize, row: &mut [f64]| {
        let mut buf = vec![Complex64::default(); len];
        for (b, v) in buf.iter_mut().zip(sino.row(j)) {
            *b = Complex64::new(*v, 0.0);
        }
        fft(&mut buf, false);
        for (b, h) in buf.iter_mut().zip(&kernel) {
            *b *= h;
        }
        fft(&mut buf, true);
        for (r, b) in row.iter_mut().zip(&buf) {
            *r = b.re;
        }
    };
    for_each_row(&mut out.values, n, filter_row);
    out
}

/// Filtered backprojection onto `grid`.
pub fn radon_invert(sino: &Sinogram, grid: &Grid2D) -> Result<ScalarField2D> {
    let filtered = ramp_filter(sino);
    let mut image = vec![0.0; grid.len()];
    let nx = grid.nx;
    let dp = sino.offset_step();
    let weight = PI / sino.n_angles as f64;
    let trig: Vec<(f64, f64)> = (0..sino.n_angles)
        .map(|j| (cos(sino.angle(j)), sin(sino.angle(j))))
        .collect();
    let back_row = |jy: usize, row: &mut [f64]| {
        let y = grid.y(jy);
        for (ja, (c, s)) in trig.iter().enumerate() {
            let q = filtered.row(ja);
            for (i, v) in row.iter_mut().enumerate() {
                let p = -grid.x(i) * s + y * c;
                *v += interp_row(q, sino.l, dp, p);
            }
        }
        for v in row.iter_mut() {
            *v *= weight;
        }
    };
    for_each_row(&mut image, nx, back_row);
    ScalarField2D::new(*grid, crate::model::FieldData::Real(image))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FieldKind, Profile};

    #[test]
    fn gaussian_center_lines() {
        let grid = Grid2D::square(201, 1.0).unwrap();
        let alpha = Profile::standard_gaussian().sample(&grid);
        let sino = radon_forward(&alpha, 8, 201, 1.0).unwrap();
        let expected = crate::math::sqrt(0.02 * PI);
        for j in 0..8 {
            let v = sino.row(j)[100];
            assert!((v - expected).abs() < 2e-3 * expected, "angle {j}: {v}");
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let grid = Grid2D::square(33, 1.0).unwrap();
        let z = ScalarField2D::zeros(grid, FieldKind::Real);
        let s = radon_forward(&z, 4, 17, 1.0).unwrap();
        assert!(s.values.iter().all(|v| *v == 0.0));
        let back = radon_invert(&s, &grid).unwrap();
        assert_eq!(back.max_abs(), 0.0);
    }

    #[test]
    fn support_leak_detected() {
        let grid = Grid2D::square(33, 1.0).unwrap();
        let f = ScalarField2D::from_fn_real(grid, |x| if x[0] > 0.97 { 1.0 } else { 0.0 });
        assert_eq!(radon_forward(&f, 4, 17, 1.0), Err(Error::SupportLeak));
    }
}
