//! Chebyshev coefficients of odd nonlinearities, Fourier modes of general
//! ones, and the Abel transform pair linking the first coefficient to `f0`.
//!
//! For an odd nonlinearity `f0(p)·u`, the amplitude-`M` Chebyshev
//! coefficients are
//!
//! ```text
//! γ_k(M) = (2/π) ∫_0^π f0(M² cos²θ) cos θ cos kθ dθ,
//! ```
//!
//! so that `f0(M²q²)·q = Σ γ_k T_k(q)` on `[-1, 1]`. All integrals are taken
//! by the midpoint rule in the angle variable, which is exact for
//! polynomial `f0` once `n_quad` exceeds the degree.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{binomial, cos, powi, sin, PI};
use crate::model::{Law, NonlinearitySpec};
use crate::{Error, Result};

/// Default number of harmonics analysed.
pub const DEFAULT_K_MAX: usize = 9;

/// `γ_0 ..= γ_{k_max}` at a fixed amplitude `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevCoeffs {
    pub m: f64,
    pub coeffs: Vec<f64>,
}

impl ChebyshevCoeffs {
    pub fn k_max(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn get(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    /// `|γ_{k_max}|`, the size of the last retained coefficient.
    pub fn tail(&self) -> f64 {
        self.coeffs.last().map_or(0.0, |c| c.abs())
    }

    /// Largest `|γ_k|` over even `k`; zero up to rounding for odd `f0`.
    pub fn even_residual(&self) -> f64 {
        self.coeffs
            .iter()
            .step_by(2)
            .fold(0.0, |m, c| m.max(c.abs()))
    }
}

/// Midpoint nodes `θ_j = (j + 1/2)π/n` on `[0, π]`.
fn midpoints(n: usize, span: f64) -> impl Iterator<Item = f64> {
    let h = span / n as f64;
    (0..n).map(move |j| (j as f64 + 0.5) * h)
}

/// Chebyshev coefficients `γ_0 ..= γ_{k_max}` of `f0(M²q²)·q`.
///
/// `n_quad` is raised to at least `4·k_max`.
pub fn gamma_coeffs(
    f0: impl Fn(f64) -> f64,
    m: f64,
    k_max: usize,
    n_quad: usize,
) -> ChebyshevCoeffs {
    let n = n_quad.max(4 * k_max).max(8);
    let mut coeffs = vec![0.0; k_max + 1];
    for th in midpoints(n, PI) {
        let c = cos(th);
        let v = f0(m * m * c * c) * c;
        for (k, g) in coeffs.iter_mut().enumerate() {
            *g += v * cos(k as f64 * th);
        }
    }
    for g in &mut coeffs {
        *g *= 2.0 / n as f64;
    }
    ChebyshevCoeffs { m, coeffs }
}

/// Evaluates `γ_0/2 + Σ_{k>=1} γ_k T_k(q)` by the Clenshaw recurrence.
pub fn gamma_resum(coeffs: &ChebyshevCoeffs, q: f64) -> f64 {
    clenshaw(&coeffs.coeffs, q)
}

pub(crate) fn clenshaw(c: &[f64], q: f64) -> f64 {
    if c.is_empty() {
        return 0.0;
    }
    let (mut b1, mut b2) = (0.0, 0.0);
    for ck in c.iter().skip(1).rev() {
        let b0 = ck + 2.0 * q * b1 - b2;
        b2 = b1;
        b1 = b0;
    }
    c[0] / 2.0 + q * b1 - b2
}

/// Chebyshev coefficients `c_0 ..= c_m` of the monomial `q^m`.
pub fn monomial_to_cheb(m: u32) -> Vec<f64> {
    let mut c = vec![0.0; m as usize + 1];
    for j in (m % 2..=m).step_by(2) {
        let b = binomial(m, (m - j) / 2);
        c[j as usize] = if j == 0 {
            b / powi(2.0, m)
        } else {
            b / powi(2.0, m - 1)
        };
    }
    c
}

/// Fourier cosine modes `𝖿_0 ..= 𝖿_{k_max}` of `θ ↦ F(u + M cos θ)`,
/// `𝖿_k = (2/π) ∫_0^π F(u + M cos θ) cos kθ dθ`, at a fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierModeCoeffs {
    pub m: f64,
    pub u: f64,
    pub coeffs: Vec<f64>,
}

impl FourierModeCoeffs {
    pub fn get(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }
}

/// Coefficient of `cos kθ` in `(2/π)∫ cos^j θ cos kθ`, i.e. the Fourier mode
/// `k` of `cos^j θ`.
fn cos_power_mode(j: u32, k: u32) -> f64 {
    if k > j || (j - k) % 2 == 1 {
        return 0.0;
    }
    if k == 0 {
        2.0 * binomial(j, j / 2) / powi(2.0, j)
    } else {
        binomial(j, (j - k) / 2) / powi(2.0, j - 1)
    }
}

/// Fourier mode `𝖿_k` of `θ ↦ F(u + M cos θ)` for a single law; monomials
/// use the exact binomial expansion, other laws the midpoint rule with
/// `n_quad` nodes.
pub fn law_mode(law: &Law, k: usize, m: f64, u: f64, n_quad: usize) -> f64 {
    match law {
        Law::Monomial(deg) => (0..=*deg)
            .map(|j| {
                let c = cos_power_mode(j, k as u32);
                if c == 0.0 {
                    0.0
                } else {
                    binomial(*deg, j) * powi(u, deg - j) * powi(m, j) * c
                }
            })
            .sum(),
        _ => {
            let n = n_quad.max(4 * k).max(8);
            let s: f64 = midpoints(n, PI)
                .map(|th| law.eval_real(u + m * cos(th)) * cos(k as f64 * th))
                .sum();
            s * 2.0 / n as f64
        }
    }
}

/// Fourier modes `𝖿_0 ..= 𝖿_{k_max}` of a single law.
pub fn law_modes(law: &Law, m: f64, u: f64, k_max: usize, n_quad: usize) -> Vec<f64> {
    (0..=k_max)
        .map(|k| law_mode(law, k, m, u, n_quad))
        .collect()
}

/// `𝖿_k(x, M, u)` for the full nonlinearity at the point `x`.
pub fn fourier_mode_coeffs(
    spec: &NonlinearitySpec,
    x: [f64; 2],
    m: f64,
    u: f64,
    k_max: usize,
    n_quad: usize,
) -> FourierModeCoeffs {
    let mut coeffs = vec![0.0; k_max + 1];
    for t in spec.terms() {
        let a = t.alpha.eval(x);
        if a == 0.0 {
            continue;
        }
        for (c, v) in coeffs
            .iter_mut()
            .zip(law_modes(&t.law, m, u, k_max, n_quad))
        {
            *c += a * v;
        }
    }
    FourierModeCoeffs { m, u, coeffs }
}

/// First Chebyshev coefficient from `f0` through the Abel form
/// `γ_1(M) = (4/π) ∫_0^{π/2} f0(M² sin²θ) sin²θ dθ`.
pub fn abel_forward(f0: impl Fn(f64) -> f64, m: f64, n_quad: usize) -> f64 {
    let n = n_quad.max(8);
    let s: f64 = midpoints(n, PI / 2.0)
        .map(|th| {
            let s = sin(th);
            f0(m * m * s * s) * s * s
        })
        .sum();
    4.0 / PI * s * (PI / 2.0) / n as f64
}

/// Samples of `γ_1` on the uniform amplitude grid `M_i = i·m_max/(n-1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledGamma1 {
    pub m_max: f64,
    pub values: Vec<f64>,
}

impl SampledGamma1 {
    pub fn from_fn(m_max: f64, n: usize, g: impl Fn(f64) -> f64) -> Self {
        let step = m_max / (n - 1) as f64;
        SampledGamma1 {
            m_max,
            values: (0..n).map(|i| g(i as f64 * step)).collect(),
        }
    }

    pub fn step(&self) -> f64 {
        self.m_max / (self.values.len() - 1) as f64
    }

    /// Cubic interpolation, using that `γ_1` is even in `M`.
    pub fn eval(&self, m: f64) -> f64 {
        let n = self.values.len();
        let f = m.abs() / self.step();
        let at = |i: isize| -> f64 {
            let i = i.unsigned_abs();
            self.values[i.min(n - 1)]
        };
        let i = (crate::math::floor(f) as isize).min(n as isize - 2);
        let i0 = if i + 2 >= n as isize {
            n as isize - 4
        } else {
            i - 1
        };
        let t = f - i0 as f64;
        let w = crate::model::lagrange4(t);
        (0..4).map(|a| w[a] * at(i0 + a as isize)).sum()
    }
}

/// Number of angle nodes used by [`abel_invert`].
pub const ABEL_THETA_NODES: usize = 128;

/// Inverts the Abel relation: returns `f0(q²)` for each `q` in `q_grid`.
///
/// With `J(q) = ∫_0^{π/2} sin³θ γ_1(q sinθ) dθ` the inverse reads
/// `f0(q²) = (3 J(q) + q J'(q))/2`; `J'` is taken by fourth-order central
/// differences with step equal to the amplitude spacing, one-sided near the
/// top of the sampled range.
pub fn abel_invert(gamma1: &SampledGamma1, q_grid: &[f64]) -> Result<Vec<f64>> {
    if gamma1.values.len() < 4 {
        return Err(Error::InvalidConfig(alloc::string::String::from(
            "need at least 4 amplitude samples",
        )));
    }
    let m_max = gamma1.m_max;
    let eta = gamma1.step();
    let j = |q: f64| -> f64 {
        let n = ABEL_THETA_NODES;
        let s: f64 = midpoints(n, PI / 2.0)
            .map(|th| {
                let s = sin(th);
                s * s * s * gamma1.eval(q * s)
            })
            .sum();
        s * (PI / 2.0) / n as f64
    };
    q_grid
        .iter()
        .map(|&q| {
            if q.abs() > m_max * (1.0 + 1e-12) {
                return Err(Error::DomainTooSmall { q, max: m_max });
            }
            let q = q.abs();
            let jp = if q + 2.0 * eta <= m_max * (1.0 + 1e-12) {
                (-j(q + 2.0 * eta) + 8.0 * j(q + eta) - 8.0 * j(q - eta) + j(q - 2.0 * eta))
                    / (12.0 * eta)
            } else {
                (25.0 * j(q) - 48.0 * j(q - eta) + 36.0 * j(q - 2.0 * eta)
                    - 16.0 * j(q - 3.0 * eta)
                    + 3.0 * j(q - 4.0 * eta))
                    / (12.0 * eta)
            };
            Ok((3.0 * j(q) + q * jp) / 2.0)
        })
        .collect()
}
