//! Geometric-optics predictions of the probed wave, computed without the
//! main solver run.
//!
//! For a real probe `χ(φ) cos(φ/h)` the exit wave is expanded as
//!
//! ```text
//! u = Σ_k a0^(k) e^{ikφ/h} + u0^(0) + h (Σ_k a1^(k) e^{ikφ/h} + u1^(0)) + O(h²),
//! ```
//!
//! with `a^(-k) = conj(a^(k))`. For a nonlinearity with Fourier modes `𝖿_k`
//! the subprincipal amplitudes are `a1^(k) = -(i/(4k)) ∫ 𝖿_k ds` along the
//! characteristic through the exit point. Non-odd laws additionally excite
//! the non-oscillating mode `u0^(0)`, which is obtained from a nested
//! solve of the mode-averaged equation.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::cheb::law_mode;
use crate::fdtd::{step_size, Reaction, Solver, SolverSettings, SourceTerm};
use crate::math::{cos, sin, sqrt};
use crate::model::{
    ExperimentConfig, FieldKind, Grid2D, Law, NonlinearitySpec, ProbeSpec, Profile, ScalarField2D,
    Term, Variant,
};
use crate::{Complex64, Error, Result};

/// Angle nodes for Fourier modes of non-polynomial laws.
const MODE_QUAD: usize = 64;

/// `∫_{-∞}^0 α(x + σω) dσ`, by Simpson's rule with step at most `step` over
/// the part of the ray inside the support disc of `α`.
pub fn ray_integral(alpha: &Profile, x: [f64; 2], omega: [f64; 2], step: f64) -> f64 {
    let Some((c, r)) = alpha.support() else {
        return 0.0;
    };
    // |x + σω - c|² = r² ⇒ σ = -b ± sqrt(b² - (|x-c|² - r²))
    let d = [x[0] - c[0], x[1] - c[1]];
    let b = d[0] * omega[0] + d[1] * omega[1];
    let disc = b * b - (d[0] * d[0] + d[1] * d[1] - r * r);
    if disc <= 0.0 {
        return 0.0;
    }
    let s0 = -b - sqrt(disc);
    let s1 = (-b + sqrt(disc)).min(0.0);
    crate::xray::line_integral(|p| alpha.eval(p), x, omega, s0, s1, step)
}

/// Harmonic amplitudes of a real probe's expansion, stored for `k > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicLadder {
    pub probe: ProbeSpec,
    pub grid: Grid2D,
    /// Evaluation time.
    pub t: f64,
    /// Leading amplitudes `a0^(k)`, complex fields.
    pub a0: BTreeMap<u32, ScalarField2D>,
    /// Subprincipal amplitudes `a1^(k)`, complex fields.
    pub a1: BTreeMap<u32, ScalarField2D>,
    pub u0_zero: Option<ScalarField2D>,
    pub u1_zero: Option<ScalarField2D>,
}

fn conj_field(f: &ScalarField2D) -> ScalarField2D {
    match f.complex() {
        Some(v) => ScalarField2D {
            grid: f.grid,
            data: crate::model::FieldData::Complex(v.iter().map(|z| z.conj()).collect()),
        },
        None => f.clone(),
    }
}

impl HarmonicLadder {
    fn pick(map: &BTreeMap<u32, ScalarField2D>, k: i32) -> Option<ScalarField2D> {
        let f = map.get(&k.unsigned_abs())?;
        Some(if k < 0 { conj_field(f) } else { f.clone() })
    }

    /// `a0^(k)`, using `a^(-k) = conj(a^(k))` for negative `k`.
    pub fn leading(&self, k: i32) -> Option<ScalarField2D> {
        Self::pick(&self.a0, k)
    }

    /// `a1^(k)`, using `a^(-k) = conj(a^(k))` for negative `k`.
    pub fn subprincipal(&self, k: i32) -> Option<ScalarField2D> {
        Self::pick(&self.a1, k)
    }

    /// `max |a1^(k)|` for every stored `k`.
    pub fn subprincipal_maxima(&self) -> Vec<(u32, f64)> {
        self.a1.iter().map(|(k, f)| (*k, f.max_abs())).collect()
    }

    /// The assembled real exit field up to `O(h²)`.
    pub fn exit_field(&self) -> ScalarField2D {
        let g = &self.grid;
        let h = self.probe.h;
        let mut out = vec![0.0; g.len()];
        for j in 0..g.ny {
            for i in 0..g.nx {
                let n = g.index(i, j);
                let theta = self.probe.phase(self.t, g.point(i, j)) / h;
                let osc = |k: u32, a: Complex64| {
                    let kt = k as f64 * theta;
                    2.0 * (a * Complex64::new(cos(kt), sin(kt))).re
                };
                let mut v = 0.0;
                for (k, f) in &self.a0 {
                    v += osc(*k, f.at(i, j));
                }
                for (k, f) in &self.a1 {
                    v += h * osc(*k, f.at(i, j));
                }
                if let Some(z) = &self.u0_zero {
                    v += z.at(i, j).re;
                }
                if let Some(z) = &self.u1_zero {
                    v += h * z.at(i, j).re;
                }
                out[n] = v;
            }
        }
        ScalarField2D {
            grid: *g,
            data: crate::model::FieldData::Real(out),
        }
    }
}

fn require(config: &ExperimentConfig, kind: FieldKind) -> Result<()> {
    config.probe.validate()?;
    if config.probe.field_kind != kind {
        return Err(Error::KindMismatch);
    }
    Ok(())
}

/// Nodes where the probe envelope is nonzero at time `t`, with `χ(φ)`.
fn band_nodes(grid: &Grid2D, probe: &ProbeSpec, t: f64) -> Vec<(usize, usize, f64)> {
    let mut nodes = Vec::new();
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let m = probe.chi.eval(probe.phase(t, grid.point(i, j)));
            if m != 0.0 {
                nodes.push((i, j, m));
            }
        }
    }
    nodes
}

/// Exit wave of a complex probe through an odd nonlinearity
/// `f0(x, |u|²)·u`: `e^{iφ/h} χ (1 - i(h/2)·∫ f0(x + σω, χ²) dσ)` at `T`.
pub fn predict_complex_odd(config: &ExperimentConfig) -> Result<ScalarField2D> {
    require(config, FieldKind::Complex)?;
    let terms = odd_radial_terms(&config.nonlinearity)?;
    let (g, probe) = (&config.grid, &config.probe);
    let t = probe.t_exit;
    let step = g.dx();
    let mut out = vec![Complex64::default(); g.len()];
    for (i, j, m) in band_nodes(g, probe, t) {
        let x = g.point(i, j);
        let integral: f64 = terms
            .iter()
            .map(|(alpha, f0)| f0.eval(m * m) * ray_integral(alpha, x, probe.omega, step))
            .sum();
        let (u, _) = probe.wave(t, x);
        out[g.index(i, j)] = u * Complex64::new(1.0, -0.5 * probe.h * integral);
    }
    ScalarField2D::from_samples(*g, out)
}

fn odd_radial_terms(spec: &NonlinearitySpec) -> Result<Vec<(Profile, crate::model::ScalarFn)>> {
    spec.terms()
        .into_iter()
        .map(|Term { alpha, law }| match law {
            Law::OddRadial(f0) => Ok((alpha, f0)),
            _ => Err(Error::WrongVariant(
                "complex probes need f0(x, |u|²)·u terms",
            )),
        })
        .collect()
}

fn leading_ladder(config: &ExperimentConfig, t: f64) -> BTreeMap<u32, ScalarField2D> {
    let (g, probe) = (&config.grid, &config.probe);
    let mut a0 = vec![Complex64::default(); g.len()];
    for (i, j, m) in band_nodes(g, probe, t) {
        a0[g.index(i, j)] = Complex64::new(m / 2.0, 0.0);
    }
    let mut map = BTreeMap::new();
    map.insert(
        1,
        ScalarField2D {
            grid: *g,
            data: crate::model::FieldData::Complex(a0),
        },
    );
    map
}

/// Harmonic ladder of a real probe through an odd nonlinearity:
/// `a0^(1) = χ/2` and `a1^(k) = -(i/(4k))·χ·Xγ_k` for odd `k <= k_max`,
/// with `γ_k` the Chebyshev coefficients of `f0(x, M²q²)·q` at `M = χ(φ)`.
pub fn predict_real_odd(config: &ExperimentConfig, k_max: usize) -> Result<HarmonicLadder> {
    require(config, FieldKind::Real)?;
    if !config.nonlinearity.is_odd() {
        return Err(Error::WrongVariant(
            "the odd ladder needs an odd nonlinearity",
        ));
    }
    let (g, probe) = (&config.grid, &config.probe);
    let t = probe.t_exit;
    let terms = config.nonlinearity.terms();
    let nodes = band_nodes(g, probe, t);
    // X α_j for every band node, shared by all harmonics.
    let rays: Vec<Vec<f64>> = nodes
        .iter()
        .map(|&(i, j, _)| {
            terms
                .iter()
                .map(|tm| ray_integral(&tm.alpha, g.point(i, j), probe.omega, g.dx()))
                .collect()
        })
        .collect();
    let mut a1 = BTreeMap::new();
    for k in (1..=k_max).step_by(2) {
        let mut field = vec![Complex64::default(); g.len()];
        for (&(i, j, m), xa) in nodes.iter().zip(&rays) {
            // 𝖿_k(M, 0) = M·γ_k(M)
            let fk: f64 = terms
                .iter()
                .zip(xa)
                .map(|(tm, x)| {
                    if *x == 0.0 {
                        0.0
                    } else {
                        x * law_mode(&tm.law, k, m, 0.0, MODE_QUAD)
                    }
                })
                .sum();
            field[g.index(i, j)] = Complex64::new(0.0, -fk / (4.0 * k as f64));
        }
        a1.insert(
            k as u32,
            ScalarField2D {
                grid: *g,
                data: crate::model::FieldData::Complex(field),
            },
        );
    }
    Ok(HarmonicLadder {
        probe: *probe,
        grid: *g,
        t,
        a0: leading_ladder(config, t),
        a1,
        u0_zero: None,
        u1_zero: None,
    })
}

/// Accumulates `∫ 𝖿_k(x + σω, χ, v(T + σ, x + σω)) dσ` for every band node
/// while a nested solve for `v` runs.
struct CharacteristicSum<'a> {
    nodes: &'a [(usize, usize, f64)],
    terms: &'a [Term],
    support: Option<([f64; 2], f64)>,
    omega: [f64; 2],
    t_exit: f64,
    dt: f64,
    k_max: usize,
    /// `acc[n][k]`, `k = 0..=k_max`.
    acc: Vec<Vec<f64>>,
}

impl CharacteristicSum<'_> {
    fn observe(&mut self, t: f64, u: &[f64], grid: &Grid2D) {
        let Some((c, r)) = self.support else {
            return;
        };
        let sigma = t - self.t_exit;
        for (n, &(i, j, m)) in self.nodes.iter().enumerate() {
            let x0 = grid.point(i, j);
            let y = [x0[0] + sigma * self.omega[0], x0[1] + sigma * self.omega[1]];
            let (dx, dy) = (y[0] - c[0], y[1] - c[1]);
            if dx * dx + dy * dy >= r * r {
                continue;
            }
            let v = bilinear(u, grid, y);
            for tm in self.terms {
                let a = tm.alpha.eval(y);
                if a == 0.0 {
                    continue;
                }
                for k in 1..=self.k_max {
                    self.acc[n][k] += a * law_mode(&tm.law, k, m, v, MODE_QUAD) * self.dt;
                }
            }
        }
    }
}

fn bilinear(u: &[f64], g: &Grid2D, p: [f64; 2]) -> f64 {
    let fx = (p[0] - g.x_min) / g.dx();
    let fy = (p[1] - g.y_min) / g.dy();
    if !(fx >= 0.0 && fy >= 0.0 && fx <= (g.nx - 1) as f64 && fy <= (g.ny - 1) as f64) {
        return 0.0;
    }
    let i = (crate::math::floor(fx) as usize).min(g.nx - 2);
    let j = (crate::math::floor(fy) as usize).min(g.ny - 2);
    let (tx, ty) = (fx - i as f64, fy - j as f64);
    let at = |a: usize, b: usize| u[g.index(a, b)];
    let lo = at(i, j) * (1.0 - tx) + at(i + 1, j) * tx;
    let hi = at(i, j + 1) * (1.0 - tx) + at(i + 1, j + 1) * tx;
    lo * (1.0 - ty) + hi * ty
}

/// Zeroth-mode field, band nodes `(i, j, χ)` and the per-node sums for each `k`.
type ZerothMode = (ScalarField2D, Vec<(usize, usize, f64)>, Vec<Vec<f64>>);

/// Solves for the zeroth mode from zero data at `probe.t_start` to the exit
/// time, accumulating the characteristic sums of `𝖿_k`, `k <= k_max`.
fn nested_zeroth_mode(
    config: &ExperimentConfig,
    reaction: &Reaction,
    source: &SourceTerm,
    k_max: usize,
) -> Result<ZerothMode> {
    let (g, probe) = (&config.grid, &config.probe);
    let t_exit = probe.t_exit;
    let (_, dt) = step_size(probe.t_start, t_exit, config.cfl, g.dx());
    let settings = SolverSettings {
        scheme: config.scheme,
        boundary: config.boundary,
        blowup_limit: 10.0 * (probe.chi.amplitude() + 1.0),
        ..SolverSettings::default()
    };
    let zero = vec![0.0; g.len()];
    let mut solver = Solver::<f64>::new(
        *g,
        settings,
        reaction,
        source,
        probe.t_start,
        dt,
        &zero,
        &zero,
    )?;
    let nodes = band_nodes(g, probe, t_exit);
    let terms = config.nonlinearity.terms();
    let mut sum = CharacteristicSum {
        nodes: &nodes,
        terms: &terms,
        support: config.nonlinearity.support(),
        omega: probe.omega,
        t_exit,
        dt,
        k_max,
        acc: vec![vec![0.0; k_max + 1]; nodes.len()],
    };
    let mut observer = |t: f64, u: &[f64], grid: &Grid2D| sum.observe(t, u, grid);
    solver.run_to(t_exit, &[], Some(&mut observer))?;
    let acc = sum.acc;
    Ok((solver.field(), nodes, acc))
}

fn sums_to_ladder(
    config: &ExperimentConfig,
    nodes: &[(usize, usize, f64)],
    acc: &[Vec<f64>],
    ks: impl Iterator<Item = usize>,
) -> BTreeMap<u32, ScalarField2D> {
    let g = &config.grid;
    let mut a1 = BTreeMap::new();
    for k in ks {
        let mut field = vec![Complex64::default(); g.len()];
        for (&(i, j, _), s) in nodes.iter().zip(acc) {
            field[g.index(i, j)] = Complex64::new(0.0, -s[k] / (4.0 * k as f64));
        }
        a1.insert(
            k as u32,
            ScalarField2D {
                grid: *g,
                data: crate::model::FieldData::Complex(field),
            },
        );
    }
    a1
}

fn quadratic_alpha(spec: &NonlinearitySpec) -> Result<Profile> {
    match &spec.variant {
        Variant::Polynomial { terms } if terms.len() == 1 && terms[0].0 == 2 => {
            Ok(terms[0].1.clone())
        }
        Variant::Zero => Ok(Profile::Zero),
        _ => Err(Error::WrongVariant(
            "the quadratic ladder needs f = α(x)·u²",
        )),
    }
}

/// Ladder for `f = α(x)·u²` with a real probe.
///
/// `u0^(0)` solves `□v + αv² = -½αχ²(-t + x·ω)` from zero data;
/// `a1^(1) = -(i/2)∫ αχ u0^(0) ds` along characteristics; and
/// `a1^(2) = -(i/16)·χ²·Xα`. The source of the `u1^(0)` equation is
/// `-2αχ·Re a1^(1)`, which vanishes because `a1^(1)` is purely imaginary,
/// so `u1^(0) = 0`.
pub fn predict_quadratic(config: &ExperimentConfig) -> Result<HarmonicLadder> {
    require(config, FieldKind::Real)?;
    let alpha = quadratic_alpha(&config.nonlinearity)?;
    let (g, probe) = (&config.grid, &config.probe);
    let t = probe.t_exit;
    let plain = NonlinearitySpec {
        variant: Variant::Polynomial {
            terms: vec![(2, alpha.clone())],
        },
        cutoff: None,
    };
    let source = SourceTerm::Traveling {
        beta: alpha.clone(),
        omega: probe.omega,
        chi: probe.chi,
        power: 2,
        scale: -0.5,
    };
    let probe_cfg = ExperimentConfig {
        nonlinearity: plain.clone(),
        ..config.clone()
    };
    let (u0, nodes, acc) = nested_zeroth_mode(&probe_cfg, &Reaction::Local(plain), &source, 1)?;
    // 𝖿_1 = 2αχv, so the accumulated sum already carries the factor 2.
    let mut a1 = sums_to_ladder(config, &nodes, &acc, 1..=1);
    let mut second = vec![Complex64::default(); g.len()];
    for &(i, j, m) in &nodes {
        let xa = ray_integral(&alpha, g.point(i, j), probe.omega, g.dx());
        second[g.index(i, j)] = Complex64::new(0.0, -m * m * xa / 16.0);
    }
    a1.insert(
        2,
        ScalarField2D {
            grid: *g,
            data: crate::model::FieldData::Complex(second),
        },
    );
    Ok(HarmonicLadder {
        probe: *probe,
        grid: *g,
        t,
        a0: leading_ladder(config, t),
        a1,
        u0_zero: Some(u0),
        u1_zero: Some(ScalarField2D::zeros(*g, FieldKind::Real)),
    })
}

/// Amplitude of the top harmonic `m` of a polynomial nonlinearity:
/// `|a1^(m)| = 2^{1-m}/(4m) · χ^m · Xα_m` at the exit time.
pub fn predict_polynomial_top(config: &ExperimentConfig) -> Result<ScalarField2D> {
    require(config, FieldKind::Real)?;
    let Variant::Polynomial { terms } = &config.nonlinearity.variant else {
        return Err(Error::WrongVariant(
            "top-harmonic prediction needs a polynomial",
        ));
    };
    let (g, probe) = (&config.grid, &config.probe);
    let Some(&(m, _)) = terms.iter().max_by_key(|(m, _)| *m) else {
        return Ok(ScalarField2D::zeros(*g, FieldKind::Real));
    };
    let top: Vec<Profile> = terms
        .iter()
        .filter(|(d, _)| *d == m)
        .map(|(_, a)| a.clone())
        .collect();
    let scale = 2.0 * crate::math::powi(0.5, m) / (4.0 * m as f64);
    let mut out = vec![0.0; g.len()];
    for (i, j, chi) in band_nodes(g, probe, probe.t_exit) {
        let xa: f64 = top
            .iter()
            .map(|a| ray_integral(a, g.point(i, j), probe.omega, g.dx()))
            .sum();
        out[g.index(i, j)] = scale * crate::math::powi(chi, m) * xa;
    }
    Ok(ScalarField2D {
        grid: *g,
        data: crate::model::FieldData::Real(out),
    })
}

/// Ladder for an arbitrary nonlinearity with a real probe: `u0^(0)` solves
/// `□v + ½𝖿_0(x, χ(φ), v) = 0` from zero data and
/// `a1^(k) = -(i/(4k)) ∫ 𝖿_k(x, χ, u0^(0)) ds` along characteristics.
pub fn predict_general_nonodd(config: &ExperimentConfig, k_max: usize) -> Result<HarmonicLadder> {
    require(config, FieldKind::Real)?;
    let probe = &config.probe;
    let t = probe.t_exit;
    let reaction = Reaction::ZerothMode {
        spec: config.nonlinearity.clone(),
        probe: *probe,
    };
    let (u0, nodes, acc) = nested_zeroth_mode(config, &reaction, &SourceTerm::None, k_max)?;
    let a1 = sums_to_ladder(config, &nodes, &acc, 1..=k_max);
    Ok(HarmonicLadder {
        probe: *probe,
        grid: config.grid,
        t,
        a0: leading_ladder(config, t),
        a1,
        u0_zero: Some(u0),
        u1_zero: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Boundary, Envelope, Scheme};

    fn config(kind: FieldKind, nl: NonlinearitySpec) -> ExperimentConfig {
        let h = 0.02;
        let probe = ProbeSpec::new(h, [0.0, 1.0], Envelope::STANDARD, 1.4, kind, 0.5);
        let dx = 2.0 * crate::math::PI * h / 16.0;
        let grid =
            Grid2D::with_spacing(dx, -32.0 * dx, 64, probe.t_start - 0.7, 2.05, 1.4).unwrap();
        ExperimentConfig {
            grid,
            probe,
            nonlinearity: nl,
            cfl: 0.5,
            boundary: Boundary::PeriodicX,
            scheme: Scheme::HighOrder,
        }
    }

    fn center_column_max(f: &ScalarField2D) -> f64 {
        let i = f.grid.nx / 2;
        (0..f.grid.ny)
            .map(|j| f.at(i, j).norm())
            .fold(0.0, f64::max)
    }

    #[test]
    fn gaussian_ray_integral() {
        let a = Profile::standard_gaussian();
        let full = ray_integral(&a, [0.0, 2.0], [0.0, 1.0], 0.005);
        assert!((full - sqrt(0.02 * crate::math::PI)).abs() < 1e-5, "{full}");
        let half = ray_integral(&a, [0.0, 0.0], [0.0, 1.0], 0.005);
        assert!((half - full / 2.0).abs() < 1e-6);
        assert_eq!(ray_integral(&a, [0.6, 0.0], [0.0, 1.0], 0.005), 0.0);
    }

    #[test]
    fn complex_zero_is_free_wave() {
        let cfg = config(FieldKind::Complex, NonlinearitySpec::zero());
        let f = predict_complex_odd(&cfg).unwrap();
        let g = &cfg.grid;
        for j in (0..g.ny).step_by(7) {
            let (u, _) = cfg.probe.wave(cfg.probe.t_exit, g.point(5, j));
            assert_eq!(f.at(5, j), u);
        }
    }

    #[test]
    fn complex_cubic_subprincipal() {
        let cfg = config(
            FieldKind::Complex,
            NonlinearitySpec::cubic(Profile::standard_gaussian(), 1.0),
        );
        let f = predict_complex_odd(&cfg).unwrap();
        let g = &cfg.grid;
        let xa = sqrt(0.02 * crate::math::PI);
        let i = g.nx / 2;
        for j in 0..g.ny {
            let (u, _) = cfg.probe.wave(cfg.probe.t_exit, g.point(i, j));
            let m = u.norm();
            let sub = (f.at(i, j) - u) / cfg.probe.h;
            assert!((sub.norm() - 0.5 * m * m * m * xa).abs() < 1e-5);
            // rotated by -π/2 from the principal term
            if m > 0.1 {
                let r = sub / u;
                assert!(r.re.abs() < 1e-9 && r.im < 0.0);
            }
        }
    }

    #[test]
    fn real_cubic_ladder() {
        let cfg = config(
            FieldKind::Real,
            NonlinearitySpec::cubic(Profile::standard_gaussian(), 1.0),
        );
        let ladder = predict_real_odd(&cfg, 5).unwrap();
        let (a1, a3, a5) = (&ladder.a1[&1], &ladder.a1[&3], &ladder.a1[&5]);
        let g = &cfg.grid;
        for n in 0..g.len() {
            let (i, j) = (n % g.nx, n / g.nx);
            assert!((a3.at(i, j) * 9.0 - a1.at(i, j)).norm() < 1e-12);
            assert!(a5.at(i, j).norm() < 1e-12);
        }
        let neg = ladder.subprincipal(-1).unwrap();
        assert_eq!(neg.at(g.nx / 2, g.ny / 2), a1.at(g.nx / 2, g.ny / 2).conj());
        // Closed form for the assembled exit field.
        let exit = ladder.exit_field();
        let xa_at = |i: usize, j: usize| {
            ray_integral(
                &Profile::standard_gaussian(),
                g.point(i, j),
                [0.0, 1.0],
                g.dx(),
            )
        };
        let h = cfg.probe.h;
        for j in (0..g.ny).step_by(3) {
            for i in [g.nx / 2, g.nx / 2 + 9] {
                let phi = cfg.probe.phase(1.4, g.point(i, j));
                let chi = cfg.probe.chi.eval(phi);
                let expected = chi * cos(phi / h)
                    + h * xa_at(i, j)
                        * chi
                        * chi
                        * chi
                        * (0.375 * sin(phi / h) + sin(3.0 * phi / h) / 24.0);
                assert!((exit.at(i, j).re - expected).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn zero_nonlinearity_ladders() {
        let cfg = config(FieldKind::Real, NonlinearitySpec::zero());
        let ladder = predict_real_odd(&cfg, 3).unwrap();
        assert!(ladder.subprincipal_maxima().iter().all(|(_, m)| *m == 0.0));
        let free = ladder.exit_field();
        let g = &cfg.grid;
        for j in (0..g.ny).step_by(5) {
            let (u, _) = cfg.probe.wave(1.4, g.point(3, j));
            assert!((free.at(3, j).re - u.re).abs() < 1e-15);
        }
        let q = predict_quadratic(&ExperimentConfig {
            nonlinearity: NonlinearitySpec {
                variant: Variant::Polynomial {
                    terms: vec![(2, Profile::Zero)],
                },
                cutoff: None,
            },
            ..cfg.clone()
        })
        .unwrap();
        assert_eq!(q.u0_zero.unwrap().max_abs(), 0.0);
    }

    #[test]
    fn quadratic_paths_agree() {
        let nl = NonlinearitySpec::new(
            Variant::Polynomial {
                terms: vec![(2, Profile::standard_gaussian())],
            },
            1.0,
        );
        let cfg = config(FieldKind::Real, nl);
        let q = predict_quadratic(&cfg).unwrap();
        let general = predict_general_nonodd(&cfg, 2).unwrap();
        let (z1, z2) = (
            q.u0_zero.as_ref().unwrap(),
            general.u0_zero.as_ref().unwrap(),
        );
        let scale = z1.max_abs();
        assert!(scale > 1e-3);
        assert!(z1.sub(z2).unwrap().max_abs() < 1e-6 * scale);
        let d1 = q.a1[&1].sub(&general.a1[&1]).unwrap().max_abs();
        assert!(d1 < 1e-6 * q.a1[&1].max_abs().max(1e-12), "{d1}");
        // Second harmonic from the closed form and from the mode integral.
        let d2 = q.a1[&2].sub(&general.a1[&2]).unwrap().max_abs();
        assert!(d2 < 2e-3 * q.a1[&2].max_abs(), "{d2}");
        let top = predict_polynomial_top(&cfg).unwrap();
        let peak = center_column_max(&top);
        assert!((peak - center_column_max(&q.a1[&2])).abs() < 1e-9 * peak);
    }

    #[test]
    fn general_reduces_to_odd() {
        let cfg = config(
            FieldKind::Real,
            NonlinearitySpec::cubic(Profile::standard_gaussian(), 1.0),
        );
        let odd = predict_real_odd(&cfg, 3).unwrap();
        let general = predict_general_nonodd(&cfg, 3).unwrap();
        assert!(general.u0_zero.as_ref().unwrap().max_abs() < 1e-15);
        for k in [1u32, 3] {
            let d = odd.a1[&k].sub(&general.a1[&k]).unwrap().max_abs();
            assert!(d < 2e-3 * odd.a1[&k].max_abs(), "k = {k}: {d}");
        }
        assert!(general.a1[&2].max_abs() < 1e-15);
    }

    #[test]
    fn top_harmonic_of_cubic() {
        let cfg = config(
            FieldKind::Real,
            NonlinearitySpec::cubic(Profile::standard_gaussian(), 1.0),
        );
        let cfg = ExperimentConfig {
            nonlinearity: NonlinearitySpec::new(
                Variant::Polynomial {
                    terms: vec![(3, Profile::standard_gaussian())],
                },
                1.0,
            ),
            ..cfg
        };
        let top = predict_polynomial_top(&cfg).unwrap();
        let odd = predict_real_odd(&cfg, 3).unwrap();
        let d = top.sub(&odd.a1[&3].re()).unwrap();
        // a1^(3) is purely imaginary with modulus equal to the top amplitude.
        let im: Vec<f64> = odd.a1[&3]
            .complex()
            .unwrap()
            .iter()
            .map(|z| z.norm())
            .collect();
        let peak = top.max_abs();
        let dm = top
            .real()
            .unwrap()
            .iter()
            .zip(&im)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(dm < 1e-12 * peak.max(1.0));
        assert!(d.max_abs() > 0.0);
    }

    #[test]
    fn wrong_variants() {
        let cfg = config(
            FieldKind::Real,
            NonlinearitySpec::cubic(Profile::standard_gaussian(), 1.0),
        );
        assert!(matches!(
            predict_quadratic(&cfg),
            Err(Error::WrongVariant(_))
        ));
        let even = NonlinearitySpec::new(
            Variant::Polynomial {
                terms: vec![(2, Profile::standard_gaussian())],
            },
            1.0,
        );
        assert!(matches!(
            predict_real_odd(
                &ExperimentConfig {
                    nonlinearity: even,
                    ..cfg.clone()
                },
                3
            ),
            Err(Error::WrongVariant(_))
        ));
        assert!(matches!(
            predict_complex_odd(&cfg),
            Err(Error::KindMismatch)
        ));
    }
}
