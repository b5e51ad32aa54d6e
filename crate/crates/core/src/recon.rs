//! Recovery of the nonlinearity from exit measurements over many probe
//! directions.
//!
//! Every direction is simulated in the frame of [`Profile::in_frame`]: the
//! probe travels along `+y`, the medium is rotated, and `x` is periodic. The
//! frame column at `ξ_x` is the lab line with offset `p = -ξ_x` in the
//! direction `ω(θ)`, so one exit field per angle fills one sinogram row.
//!
//! By default the difference `u - u_L` is propagated back with the free
//! scheme from `T` to a time `t* ≈ 0` before harmonics are read
//! ("refocusing"). The `O(h)` exit harmonics of a localized coefficient are
//! narrow beams that spread over the distance `T`; backward free
//! propagation undoes that spreading, which the geometric-optics expansion
//! does not model, and also most of the scheme's dispersion.
//!
//! [`Profile::in_frame`]: crate::model::Profile::in_frame

use alloc::vec;
use alloc::vec::Vec;

use crate::cheb::{abel_invert, SampledGamma1};
use crate::fdtd::{exit_state, propagate_free, ExitState, Reaction};
use crate::harmonics::{demodulate, ExitTrace};
use crate::math::{abs, ceil, powi, round, sqrt};
use crate::model::{
    Boundary, Envelope, ExperimentConfig, FieldData, FieldKind, Grid2D, Law, NonlinearitySpec,
    ProbeSpec, ScalarField2D, Scheme, Variant,
};
use crate::xray::{radon_invert, Sinogram};
use crate::{Complex64, Error, Result};

/// Envelope levels below this fraction of `K` are not used.
pub const ENVELOPE_FLOOR: f64 = 0.05;

/// Shared simulation settings of the per-angle runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub h: f64,
    pub dx: f64,
    pub cfl: f64,
    pub scheme: Scheme,
    pub t_exit: f64,
    pub chi: Envelope,
    pub field_kind: FieldKind,
    /// Half-width of the periodic frame in `x`.
    pub half_width: f64,
    /// Back-propagate `u - u_L` to `t* ≈ 0` before extraction.
    pub refocus: bool,
}

impl Frame {
    /// `h = 0.01`, `T = 1.4`, the standard Gaussian envelope and the spacing of
    /// a 1024-node grid on `[-(T + δ + 0.2), T + δ + 0.2]`.
    pub fn desk(field_kind: FieldKind) -> Self {
        let chi = Envelope::STANDARD;
        let t_exit = 1.4;
        let reach = t_exit + chi.half_support() + 0.2;
        Frame {
            h: 0.01,
            dx: 2.0 * reach / 1023.0,
            cfl: 0.5,
            scheme: Scheme::HighOrder,
            t_exit,
            chi,
            field_kind,
            half_width: 0.65,
            refocus: true,
        }
    }

    /// Spacing giving `ppw` points per carrier wavelength.
    pub fn with_points_per_wavelength(mut self, ppw: f64) -> Self {
        self.dx = 2.0 * crate::math::PI * self.h / ppw;
        self
    }

    pub fn probe(&self, support_radius: f64) -> ProbeSpec {
        ProbeSpec::new(
            self.h,
            [0.0, 1.0],
            self.chi,
            self.t_exit,
            self.field_kind,
            support_radius,
        )
    }

    /// Frame grid: `nx` even, `y` from before the start band to past the exit
    /// band, with `y = T` on a node.
    pub fn grid(&self, support_radius: f64) -> Result<Grid2D> {
        let probe = self.probe(support_radius);
        let nx = 2 * ceil(self.half_width / self.dx) as usize;
        let d = probe.delta();
        Grid2D::with_spacing(
            self.dx,
            -((nx / 2) as f64) * self.dx,
            nx,
            probe.t_start - d - 0.05,
            self.t_exit + d + 0.05,
            self.t_exit,
        )
    }

    /// The experiment for probe direction `ω(θ)`, expressed in the frame.
    pub fn config(&self, nonlinearity: &NonlinearitySpec, theta: f64) -> Result<ExperimentConfig> {
        let r = nonlinearity.support_radius();
        if r >= self.half_width {
            return Err(Error::InvalidConfig(alloc::format!(
                "support radius {r} does not fit in the frame half-width {}",
                self.half_width
            )));
        }
        let config = ExperimentConfig {
            grid: self.grid(r)?,
            probe: self.probe(r),
            nonlinearity: nonlinearity.in_frame(theta),
            cfl: self.cfl,
            boundary: Boundary::PeriodicX,
            scheme: self.scheme,
        };
        config.validate()?;
        Ok(config)
    }
}

/// The linear run shared by all angles.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearReference {
    pub exit: ExitState,
    /// `u_L` at the extraction time.
    pub at_extraction: ScalarField2D,
    /// `T`, or `t*` when refocusing.
    pub time: f64,
}

impl LinearReference {
    pub fn compute(frame: &Frame, nonlinearity: &NonlinearitySpec) -> Result<Self> {
        let config = frame.config(nonlinearity, 0.0)?;
        let exit = exit_state(&config, &Reaction::None)?;
        let (time, at_extraction) = if frame.refocus {
            let t = refocus_time(&exit);
            (t, propagate_free(&exit, t)?)
        } else {
            (exit.t, exit.cur.clone())
        };
        Ok(LinearReference {
            exit,
            at_extraction,
            time,
        })
    }
}

/// The step-aligned time closest to zero.
fn refocus_time(state: &ExitState) -> f64 {
    state.t - round(state.t / state.dt) * state.dt
}

/// Exit data of one probe direction.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleMeasurement {
    pub theta: f64,
    pub probe: ProbeSpec,
    /// `u - u_L` at `time`.
    pub diff: ScalarField2D,
    pub time: f64,
    pub cutoff_engaged: bool,
}

/// Runs direction `θ` and returns `u - u_L`, refocused if the frame asks for it.
pub fn measure(
    frame: &Frame,
    nonlinearity: &NonlinearitySpec,
    theta: f64,
    linear: &LinearReference,
) -> Result<AngleMeasurement> {
    let config = frame.config(nonlinearity, theta)?;
    let probe = config.probe;
    if config.nonlinearity.is_zero() {
        // the reaction vanishes identically, so both runs coincide
        let diff = ScalarField2D::zeros(config.grid, frame.field_kind);
        return Ok(AngleMeasurement {
            theta,
            probe,
            diff,
            time: linear.time,
            cutoff_engaged: false,
        });
    }
    let u = exit_state(&config, &Reaction::Local(config.nonlinearity.clone()))?;
    let w = u.sub(&linear.exit)?;
    let diff = if frame.refocus {
        propagate_free(&w, linear.time)?
    } else {
        w.cur
    };
    Ok(AngleMeasurement {
        theta,
        probe,
        diff,
        time: linear.time,
        cutoff_engaged: u.cutoff_engaged,
    })
}

/// Which harmonics to read, and at which envelope offsets `τ >= 0`
/// (`s = T ± τ`, averaged over both signs).
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePlan {
    pub harmonics: Vec<usize>,
    pub taus: Vec<f64>,
}

impl SamplePlan {
    /// Union of two plans, so that one set of runs serves several routes.
    pub fn merge(&self, other: &SamplePlan) -> SamplePlan {
        let mut harmonics = self.harmonics.clone();
        harmonics.extend(&other.harmonics);
        harmonics.sort_unstable();
        harmonics.dedup();
        let mut taus = self.taus.clone();
        taus.extend(&other.taus);
        taus.sort_by(f64::total_cmp);
        taus.dedup_by(|a, b| abs(*a - *b) < 1e-12);
        SamplePlan { harmonics, taus }
    }

    pub fn k_index(&self, k: usize) -> Result<usize> {
        self.harmonics
            .iter()
            .position(|&q| q == k)
            .ok_or_else(|| Error::InvalidConfig(alloc::format!("harmonic {k} was not sampled")))
    }

    pub fn tau_index(&self, tau: f64) -> Result<usize> {
        self.taus
            .iter()
            .position(|&t| abs(t - tau) < 1e-12)
            .ok_or_else(|| {
                Error::InvalidConfig(alloc::format!("envelope offset {tau} was not sampled"))
            })
    }
}

/// Sine coefficients of `(u - u_L)/h` per harmonic, offset and column; for
/// complex probes the single "harmonic" is `X f0(χ²)` from
/// `-Im((Λ/u_L - 1)/(h/2))`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSamples {
    pub theta: f64,
    pub nx: usize,
    pub n_taus: usize,
    /// `values[(k_index·n_taus + tau_index)·nx + column]`.
    pub values: Vec<f64>,
}

impl AngleSamples {
    pub fn get(&self, k_index: usize, tau_index: usize, column: usize) -> f64 {
        self.values[(k_index * self.n_taus + tau_index) * self.nx + column]
    }
}

/// Reduces one measurement to the samples of `plan`.
pub fn sample(
    m: &AngleMeasurement,
    linear: &LinearReference,
    plan: &SamplePlan,
) -> Result<AngleSamples> {
    let g = m.diff.grid;
    let n_taus = plan.taus.len();
    let t_exit = m.probe.t_exit;
    let mut values = vec![0.0; plan.harmonics.len() * n_taus * g.nx];
    match m.diff.kind() {
        FieldKind::Real => {
            for i in 0..g.nx {
                let trace = ExitTrace::from_column(&m.diff, i, &m.probe, m.time)?;
                if trace.values.iter().all(|v| *v == 0.0) {
                    continue;
                }
                for (ki, &k) in plan.harmonics.iter().enumerate() {
                    let env = demodulate(&trace, k)?;
                    for (ti, &tau) in plan.taus.iter().enumerate() {
                        let v = symmetric(tau, |s| env.sin_at(&trace, t_exit + s));
                        values[(ki * n_taus + ti) * g.nx + i] = v;
                    }
                }
            }
        }
        FieldKind::Complex => {
            let w = m.diff.complex().ok_or(Error::KindMismatch)?;
            let l = linear.at_extraction.complex().ok_or(Error::KindMismatch)?;
            let floor = ENVELOPE_FLOOR * m.probe.chi.amplitude();
            let h = m.probe.h;
            for i in 0..g.nx {
                // X f0 along the column, as a function of s = y - time + T
                let ratio: Vec<f64> = (0..g.ny)
                    .map(|j| {
                        let n = g.index(i, j);
                        if l[n].norm() < floor {
                            0.0
                        } else {
                            -(w[n] / l[n]).im / (h / 2.0)
                        }
                    })
                    .collect();
                let s0 = g.y_min - m.time + t_exit;
                let at = |s: f64| {
                    let f = (s - s0) / g.dy();
                    let j = (crate::math::floor(f) as usize).min(g.ny - 2);
                    let t = f - j as f64;
                    ratio[j] * (1.0 - t) + ratio[j + 1] * t
                };
                for (ti, &tau) in plan.taus.iter().enumerate() {
                    values[ti * g.nx + i] = symmetric(tau, |s| at(t_exit + s));
                }
            }
        }
    }
    Ok(AngleSamples {
        theta: m.theta,
        nx: g.nx,
        n_taus,
        values,
    })
}

fn symmetric(tau: f64, f: impl Fn(f64) -> f64) -> f64 {
    if tau == 0.0 {
        f(0.0)
    } else {
        0.5 * (f(tau) + f(-tau))
    }
}

/// Simulates and samples all `n_angles` directions `θ_j = jπ/n_angles`.
pub fn acquire(
    frame: &Frame,
    nonlinearity: &NonlinearitySpec,
    n_angles: usize,
    plan: &SamplePlan,
) -> Result<(LinearReference, Vec<AngleSamples>)> {
    let linear = LinearReference::compute(frame, nonlinearity)?;
    let one = |j: usize| -> Result<AngleSamples> {
        let theta = j as f64 * crate::math::PI / n_angles as f64;
        let m = measure(frame, nonlinearity, theta, &linear)?;
        sample(&m, &linear, plan)
    };
    #[cfg(feature = "parallel")]
    let samples = {
        use rayon::prelude::*;
        (0..n_angles)
            .into_par_iter()
            .map(one)
            .collect::<Result<Vec<_>>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let samples = (0..n_angles).map(one).collect::<Result<Vec<_>>>()?;
    Ok((linear, samples))
}

/// Sinogram of `scale·sample(k_index, tau_index)`; the offset of frame column
/// `i` is `p = -x_i`.
pub fn sinogram(
    samples: &[AngleSamples],
    grid: &Grid2D,
    k_index: usize,
    tau_index: usize,
    scale: f64,
) -> Sinogram {
    let nx = grid.nx;
    let l = (nx / 2) as f64 * grid.dx();
    let mut sino = Sinogram::zeros(samples.len(), nx + 1, l);
    for (j, a) in samples.iter().enumerate() {
        let row = sino.row_mut(j);
        for (m, v) in row.iter_mut().enumerate() {
            // p_m = -l + m·dx = -x_i with x_i = -l + i·dx, i = nx - m (mod nx)
            let i = (nx - m) % nx;
            *v = scale * a.get(k_index, tau_index, i);
        }
    }
    sino
}

/// Recovery algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecoveryMode {
    /// Complex probe, `X f0(·, χ²)` from the phase-rotated subprincipal term.
    ComplexOdd,
    /// Real probe, all odd harmonics at the envelope peak, Chebyshev resummation.
    RealOddCheb,
    /// Real probe, first harmonic over envelope levels, Abel inversion.
    RealOddAbel,
    /// Real probe, top harmonic `m` of a polynomial.
    PolyTop { m: u32 },
}

/// Parameters of a recovery run.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryTask {
    pub mode: RecoveryMode,
    pub n_angles: usize,
    /// Envelope levels `M_l = l·K/(levels - 1)` for the Abel and complex modes.
    pub levels: usize,
    /// Highest odd harmonic used by the Chebyshev mode.
    pub k_max: usize,
    /// Points of the reported `p`-grid for the Chebyshev and Abel modes.
    pub p_points: usize,
    /// Reconstruction grid (lab frame).
    pub image: Grid2D,
    /// Disc radius for the error metrics.
    pub metric_radius: f64,
    pub truth: Option<NonlinearitySpec>,
}

impl RecoveryTask {
    pub fn new(mode: RecoveryMode) -> Self {
        RecoveryTask {
            mode,
            n_angles: 180,
            levels: 33,
            k_max: crate::cheb::DEFAULT_K_MAX,
            p_points: 16,
            image: Grid2D::square(101, 0.5).expect("static grid"),
            metric_radius: 0.25,
            truth: None,
        }
    }

    pub fn plan(&self, frame: &Frame) -> Result<SamplePlan> {
        let k_cap = resolvable_harmonic(frame);
        Ok(match self.mode {
            RecoveryMode::RealOddCheb => {
                let k_max = self.k_max.min(k_cap);
                if k_max < 3 {
                    return Err(Error::GridTooCoarse(alloc::format!(
                        "only harmonics up to {k_cap} are resolved"
                    )));
                }
                SamplePlan {
                    harmonics: (1..=k_max).step_by(2).collect(),
                    taus: vec![0.0],
                }
            }
            RecoveryMode::PolyTop { m } => {
                if m as usize > k_cap {
                    return Err(Error::GridTooCoarse(alloc::format!(
                        "harmonic {m} is not resolved"
                    )));
                }
                SamplePlan {
                    harmonics: vec![m as usize],
                    taus: vec![0.0],
                }
            }
            RecoveryMode::RealOddAbel | RecoveryMode::ComplexOdd => {
                let taus = self
                    .level_taus(&frame.chi)
                    .into_iter()
                    .map(|(_, t)| t)
                    .collect();
                SamplePlan {
                    harmonics: vec![1],
                    taus,
                }
            }
        })
    }

    /// `(M_l, τ_l)` for the usable levels `M_l >= ENVELOPE_FLOOR·K`.
    fn level_taus(&self, chi: &Envelope) -> Vec<(f64, f64)> {
        let k = chi.amplitude();
        (1..self.levels)
            .map(|l| l as f64 * k / (self.levels - 1) as f64)
            .filter(|m| *m >= ENVELOPE_FLOOR * k)
            .filter_map(|m| chi.inverse(m).map(|t| (m, t)))
            .collect()
    }
}

/// Highest harmonic the band-pass demodulation resolves on the frame grid.
pub fn resolvable_harmonic(frame: &Frame) -> usize {
    let k = crate::math::PI * frame.h / frame.dx - 0.75;
    if k < 1.0 {
        0
    } else {
        k as usize
    }
}

/// Relative L² and max errors on a centered disc.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub rel_l2: f64,
    pub max_err: f64,
}

/// Errors of `a` against `b` on `|x| <= radius`.
pub fn disc_metrics(a: &ScalarField2D, b: &ScalarField2D, radius: f64) -> Result<Metrics> {
    let (va, vb) = (
        a.real().ok_or(Error::KindMismatch)?,
        b.real().ok_or(Error::KindMismatch)?,
    );
    if a.grid != b.grid {
        return Err(Error::GridMismatch);
    }
    let g = &a.grid;
    let (mut num, mut den, mut max_err) = (0.0, 0.0, 0.0f64);
    for j in 0..g.ny {
        for i in 0..g.nx {
            let p = g.point(i, j);
            if p[0] * p[0] + p[1] * p[1] > radius * radius {
                continue;
            }
            let n = g.index(i, j);
            let d = va[n] - vb[n];
            num += d * d;
            den += vb[n] * vb[n];
            max_err = max_err.max(abs(d));
        }
    }
    let rel_l2 = if den > 0.0 {
        sqrt(num / den)
    } else {
        sqrt(num)
    };
    Ok(Metrics { rel_l2, max_err })
}

/// Result of a recovery.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredNonlinearity {
    pub mode: RecoveryMode,
    pub image: Grid2D,
    /// `K²`: values of `f0(x, p)` are only reported for `p` in `[0, K²]`.
    pub p_max: f64,
    /// Slices `(p, f0(·, p))` for the odd modes, increasing in `p`.
    pub f0: Vec<(f64, ScalarField2D)>,
    /// `α_m` for the polynomial mode.
    pub alpha: Option<ScalarField2D>,
    /// `(k, γ_k(·, K))` for the Chebyshev mode; `(1, X-ray inverted γ_1)`
    /// slices are not kept.
    pub gammas: Vec<(usize, ScalarField2D)>,
    pub metrics: Option<Metrics>,
}

impl RecoveredNonlinearity {
    /// `f0` at image node `(i, j)` and `p`, linearly interpolated between
    /// slices; `None` outside the recovered range.
    pub fn f0_at(&self, i: usize, j: usize, p: f64) -> Option<f64> {
        if !(p >= 0.0 && p <= self.p_max) || self.f0.is_empty() {
            return None;
        }
        let first = self.f0.first()?;
        let last = self.f0.last()?;
        if p < first.0 || p > last.0 {
            return None;
        }
        let n = self
            .f0
            .partition_point(|(q, _)| *q <= p)
            .clamp(1, self.f0.len() - 1);
        let ((p0, f0), (p1, f1)) = (&self.f0[n - 1], &self.f0[n]);
        let t = if p1 > p0 { (p - p0) / (p1 - p0) } else { 0.0 };
        Some(f0.at(i, j).re * (1.0 - t) + f1.at(i, j).re * t)
    }

    /// Least-squares factor `α(x)` of `f0(x, p) ≈ α(x)·g(p)` over the slices
    /// with `p` in `range`.
    pub fn separable_factor(
        &self,
        g: impl Fn(f64) -> f64,
        range: (f64, f64),
    ) -> Result<ScalarField2D> {
        let used: Vec<&(f64, ScalarField2D)> = self
            .f0
            .iter()
            .filter(|(p, _)| *p >= range.0 && *p <= range.1)
            .collect();
        let den: f64 = used.iter().map(|(p, _)| g(*p) * g(*p)).sum();
        if used.is_empty() || den == 0.0 {
            return Err(Error::InvalidConfig(
                "no recovered slices in the requested p range".into(),
            ));
        }
        let mut out = vec![0.0; self.image.len()];
        for (p, f) in used {
            let v = f.real().ok_or(Error::KindMismatch)?;
            let gp = g(*p);
            for (o, x) in out.iter_mut().zip(v) {
                *o += gp * x / den;
            }
        }
        ScalarField2D::new(self.image, FieldData::Real(out))
    }
}

/// `f0(x, p)` of an odd nonlinearity, `None` for non-odd laws.
pub fn truth_f0(spec: &NonlinearitySpec, x: [f64; 2], p: f64) -> Option<f64> {
    let mut acc = 0.0;
    for t in spec.terms() {
        let a = t.alpha.eval(x);
        acc += a * match &t.law {
            Law::OddRadial(g) => g.eval(p),
            Law::Monomial(m) if m % 2 == 1 => powi(p, (m - 1) / 2),
            _ => return None,
        };
    }
    Some(acc)
}

/// Top-degree coefficient `α_m` of a polynomial nonlinearity.
pub fn truth_alpha(spec: &NonlinearitySpec, m: u32) -> Option<crate::model::Profile> {
    match &spec.variant {
        Variant::Polynomial { terms } => {
            let parts: Vec<_> = terms
                .iter()
                .filter(|(d, _)| *d == m)
                .map(|(_, a)| a.clone())
                .collect();
            Some(crate::model::Profile::Sum(parts))
        }
        Variant::OddSeparated { alpha, f0 }
            if m == 3 && *f0 == crate::model::ScalarFn::identity() =>
        {
            Some(alpha.clone())
        }
        Variant::Zero => Some(crate::model::Profile::Zero),
        _ => None,
    }
}

fn check_angles(samples: &[AngleSamples]) -> Result<()> {
    if samples.len() < 2 {
        return Err(Error::InvalidConfig(
            "recovery needs at least two angles".into(),
        ));
    }
    Ok(())
}

/// Runs the simulations of `task` and recovers.
pub fn recover(
    frame: &Frame,
    nonlinearity: &NonlinearitySpec,
    task: &RecoveryTask,
) -> Result<RecoveredNonlinearity> {
    let kind_ok = match task.mode {
        RecoveryMode::ComplexOdd => frame.field_kind == FieldKind::Complex,
        _ => frame.field_kind == FieldKind::Real,
    };
    if !kind_ok {
        return Err(Error::KindMismatch);
    }
    let plan = task.plan(frame)?;
    let (linear, samples) = acquire(frame, nonlinearity, task.n_angles, &plan)?;
    let grid = linear.at_extraction.grid;
    recover_from_samples(&samples, &grid, frame, task, &plan)
}

/// Recovery from already sampled measurements taken with `task.plan(frame)`.
pub fn recover_from_samples(
    samples: &[AngleSamples],
    grid: &Grid2D,
    frame: &Frame,
    task: &RecoveryTask,
    plan: &SamplePlan,
) -> Result<RecoveredNonlinearity> {
    check_angles(samples)?;
    let mut out = match task.mode {
        RecoveryMode::ComplexOdd => recover_complex_odd(samples, grid, frame, task, plan)?,
        RecoveryMode::RealOddCheb => recover_real_odd_cheb(samples, grid, frame, task, plan)?,
        RecoveryMode::RealOddAbel => recover_real_odd_abel(samples, grid, frame, task, plan)?,
        RecoveryMode::PolyTop { m } => recover_poly_top(samples, grid, frame, task, plan, m)?,
    };
    out.metrics = metrics_against_truth(&out, task)?;
    Ok(out)
}

fn empty(mode: RecoveryMode, task: &RecoveryTask, k_amp: f64) -> RecoveredNonlinearity {
    RecoveredNonlinearity {
        mode,
        image: task.image,
        p_max: k_amp * k_amp,
        f0: Vec::new(),
        alpha: None,
        gammas: Vec::new(),
        metrics: None,
    }
}

/// `X f0(·, M_l²)` per level, inverted level by level.
pub fn recover_complex_odd(
    samples: &[AngleSamples],
    grid: &Grid2D,
    frame: &Frame,
    task: &RecoveryTask,
    plan: &SamplePlan,
) -> Result<RecoveredNonlinearity> {
    let k_amp = frame.chi.amplitude();
    let mut out = empty(RecoveryMode::ComplexOdd, task, k_amp);
    let levels = task.level_taus(&frame.chi);
    for (m, tau) in &levels {
        let sino = sinogram(samples, grid, 0, plan.tau_index(*tau)?, 1.0);
        out.f0.push((m * m, radon_invert(&sino, &task.image)?));
    }
    out.f0.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(out)
}

/// `Xγ_k(K) = 2k·A_k/K` at the envelope peak, inverted per `k`, then
/// `f0(x, K²q²) = Σ γ_k T_k(q)/q`.
pub fn recover_real_odd_cheb(
    samples: &[AngleSamples],
    grid: &Grid2D,
    frame: &Frame,
    task: &RecoveryTask,
    plan: &SamplePlan,
) -> Result<RecoveredNonlinearity> {
    let k_amp = frame.chi.amplitude();
    let mut out = empty(RecoveryMode::RealOddCheb, task, k_amp);
    let peak = plan.tau_index(0.0)?;
    let k_max = task.k_max.min(resolvable_harmonic(frame));
    for k in (1..=k_max).step_by(2) {
        let sino = sinogram(
            samples,
            grid,
            plan.k_index(k)?,
            peak,
            2.0 * k as f64 / k_amp,
        );
        out.gammas.push((k, radon_invert(&sino, &task.image)?));
    }
    let n = task.p_points.max(2);
    for l in 1..=n {
        let q = l as f64 / n as f64;
        let mut field = vec![0.0; task.image.len()];
        for (k, gamma) in &out.gammas {
            let tk = crate::math::cos(*k as f64 * libm::acos(q));
            let v = gamma.real().ok_or(Error::KindMismatch)?;
            for (f, g) in field.iter_mut().zip(v) {
                *f += g * tk / q;
            }
        }
        out.f0.push((
            k_amp * k_amp * q * q,
            ScalarField2D::new(task.image, FieldData::Real(field))?,
        ));
    }
    Ok(out)
}

/// `Xγ_1(M_l) = 2A_1/M_l` per level, inverted per level, then the Abel
/// inversion in `M` at every image node.
pub fn recover_real_odd_abel(
    samples: &[AngleSamples],
    grid: &Grid2D,
    frame: &Frame,
    task: &RecoveryTask,
    plan: &SamplePlan,
) -> Result<RecoveredNonlinearity> {
    let k_amp = frame.chi.amplitude();
    let mut out = empty(RecoveryMode::RealOddAbel, task, k_amp);
    let levels = task.level_taus(&frame.chi);
    if levels.len() < 4 {
        return Err(Error::InvalidConfig(
            "the Abel route needs at least four envelope levels".into(),
        ));
    }
    let mut gamma1: Vec<(f64, Vec<f64>)> = Vec::with_capacity(levels.len());
    let k1 = plan.k_index(1)?;
    for (m, tau) in &levels {
        let sino = sinogram(samples, grid, k1, plan.tau_index(*tau)?, 2.0 / m);
        let img = radon_invert(&sino, &task.image)?;
        gamma1.push((*m, img.real().ok_or(Error::KindMismatch)?.to_vec()));
    }
    // Uniform level grid from 0 to K; levels under the envelope floor are
    // filled by the even fit a + b·M² through the two lowest usable ones.
    let n_levels = task.levels;
    let step = k_amp / (n_levels - 1) as f64;
    let (m_a, m_b) = (gamma1[0].0, gamma1[1].0);
    let n_q = task.p_points.max(2);
    let q_grid: Vec<f64> = (1..=n_q).map(|l| k_amp * l as f64 / n_q as f64).collect();
    let mut slices = vec![vec![0.0; task.image.len()]; n_q];
    let mut column = vec![0.0; n_levels];
    for px in 0..task.image.len() {
        let (ga, gb) = (gamma1[0].1[px], gamma1[1].1[px]);
        let b = (gb - ga) / (m_b * m_b - m_a * m_a);
        let a = ga - b * m_a * m_a;
        for (l, c) in column.iter_mut().enumerate() {
            let m = l as f64 * step;
            *c = match gamma1.iter().find(|(lm, _)| abs(lm - m) < 1e-9 * k_amp) {
                Some((_, v)) => v[px],
                None => a + b * m * m,
            };
        }
        let sampled = SampledGamma1 {
            m_max: k_amp,
            values: column.clone(),
        };
        for (s, v) in slices.iter_mut().zip(abel_invert(&sampled, &q_grid)?) {
            s[px] = v;
        }
    }
    for (q, s) in q_grid.iter().zip(slices) {
        out.f0
            .push((q * q, ScalarField2D::new(task.image, FieldData::Real(s))?));
    }
    Ok(out)
}

/// `Xα_m = A_m·2m/(2^{1-m}K^m)` at the envelope peak, inverted.
pub fn recover_poly_top(
    samples: &[AngleSamples],
    grid: &Grid2D,
    frame: &Frame,
    task: &RecoveryTask,
    plan: &SamplePlan,
    m: u32,
) -> Result<RecoveredNonlinearity> {
    let k_amp = frame.chi.amplitude();
    let mut out = empty(RecoveryMode::PolyTop { m }, task, k_amp);
    let scale = 2.0 * m as f64 / (2.0 * powi(0.5, m) * powi(k_amp, m));
    let sino = sinogram(
        samples,
        grid,
        plan.k_index(m as usize)?,
        plan.tau_index(0.0)?,
        scale,
    );
    out.alpha = Some(radon_invert(&sino, &task.image)?);
    Ok(out)
}

fn metrics_against_truth(
    out: &RecoveredNonlinearity,
    task: &RecoveryTask,
) -> Result<Option<Metrics>> {
    let Some(truth) = &task.truth else {
        return Ok(None);
    };
    let image = task.image;
    if let (Some(alpha), RecoveryMode::PolyTop { m }) = (&out.alpha, out.mode) {
        let Some(profile) = truth_alpha(truth, m) else {
            return Ok(None);
        };
        return disc_metrics(alpha, &profile.sample(&image), task.metric_radius).map(Some);
    }
    // f0 over the slices with p in [0.1, 0.8]·K²
    let (lo, hi) = (0.1 * out.p_max, 0.8 * out.p_max);
    let (mut num, mut den, mut max_err) = (0.0, 0.0, 0.0f64);
    for (p, f) in out.f0.iter().filter(|(p, _)| *p >= lo && *p <= hi) {
        let v = f.real().ok_or(Error::KindMismatch)?;
        for j in 0..image.ny {
            for i in 0..image.nx {
                let x = image.point(i, j);
                if x[0] * x[0] + x[1] * x[1] > task.metric_radius * task.metric_radius {
                    continue;
                }
                let Some(t) = truth_f0(truth, x, *p) else {
                    return Ok(None);
                };
                let d = v[image.index(i, j)] - t;
                num += d * d;
                den += t * t;
                max_err = max_err.max(abs(d));
            }
        }
    }
    let rel_l2 = if den > 0.0 {
        sqrt(num / den)
    } else {
        sqrt(num)
    };
    Ok(Some(Metrics { rel_l2, max_err }))
}

/// First-harmonic profile along one frame column: `(M, 2A_1/(M·Xα))` for
/// `M = χ(s - T)` on the rising side `s <= T`, from the peak down to the
/// envelope floor. With `α` known this is `γ_1(M)/α`.
pub fn first_harmonic_profile(
    m: &AngleMeasurement,
    column: usize,
    x_alpha: f64,
) -> Result<Vec<(f64, f64)>> {
    let trace = ExitTrace::from_column(&m.diff, column, &m.probe, m.time)?;
    let env = demodulate(&trace, 1)?;
    let chi = m.probe.chi;
    let k = chi.amplitude();
    let t_exit = m.probe.t_exit;
    let mut out = Vec::new();
    let mut n = 0;
    loop {
        let tau = n as f64 * trace.ds;
        let level = chi.eval(tau);
        if level < ENVELOPE_FLOOR * k {
            break;
        }
        let a1 = symmetric(tau, |s| env.sin_at(&trace, t_exit + s));
        out.push((level, 2.0 * a1 / (level * x_alpha)));
        n += 1;
    }
    out.reverse();
    Ok(out)
}

/// Largest `M` at which a profile from [`first_harmonic_profile`] changes
/// sign, by linear interpolation.
pub fn zero_crossing(profile: &[(f64, f64)]) -> Option<f64> {
    profile
        .windows(2)
        .rev()
        .find(|w| w[0].1 == 0.0 || (w[0].1 < 0.0) != (w[1].1 < 0.0))
        .map(|w| {
            let ((m0, g0), (m1, g1)) = (w[0], w[1]);
            if g1 == g0 {
                m0
            } else {
                m0 - g0 * (m1 - m0) / (g1 - g0)
            }
        })
}

/// Complex subprincipal ratio `(Λ/u_L - 1)/(h/2)` at extraction time.
pub fn complex_subprincipal(
    m: &AngleMeasurement,
    linear: &LinearReference,
) -> Result<ScalarField2D> {
    let w = m.diff.complex().ok_or(Error::KindMismatch)?;
    let l = linear.at_extraction.complex().ok_or(Error::KindMismatch)?;
    let floor = ENVELOPE_FLOOR * m.probe.chi.amplitude();
    let h = m.probe.h;
    let v: Vec<Complex64> = w
        .iter()
        .zip(l)
        .map(|(a, b)| {
            if b.norm() < floor {
                Complex64::default()
            } else {
                a / b / (h / 2.0)
            }
        })
        .collect();
    ScalarField2D::from_samples(m.diff.grid, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Profile;

    fn small_frame(kind: FieldKind) -> Frame {
        Frame {
            h: 0.01,
            half_width: 0.62,
            ..Frame::desk(kind)
        }
        .with_points_per_wavelength(16.0)
    }

    fn offset_cubic() -> NonlinearitySpec {
        let alpha = Profile::Gaussian {
            center: [0.08, -0.05],
            sigma2: 0.02,
            amplitude: 1.0,
            radius: 0.5,
        };
        NonlinearitySpec::cubic(alpha, 1.0)
    }

    #[test]
    fn frame_offsets_match_lab_lines() {
        // column sinogram of the frame-sampled α equals its lab X-ray transform
        let frame = small_frame(FieldKind::Real);
        let nl = offset_cubic();
        let Variant::OddSeparated { alpha, .. } = &nl.variant else {
            unreachable!()
        };
        let n_angles = 6;
        let grid = frame.grid(nl.support_radius()).unwrap();
        let samples: Vec<AngleSamples> = (0..n_angles)
            .map(|j| {
                let theta = j as f64 * crate::math::PI / n_angles as f64;
                let a = alpha.in_frame(theta);
                let values = (0..grid.nx)
                    .map(|i| {
                        crate::oracle::ray_integral(&a, [grid.x(i), 5.0], [0.0, 1.0], grid.dx())
                    })
                    .collect();
                AngleSamples {
                    theta,
                    nx: grid.nx,
                    n_taus: 1,
                    values,
                }
            })
            .collect();
        let sino = sinogram(&samples, &grid, 0, 0, 1.0);
        let lab = crate::xray::radon_forward(
            &alpha.sample(&Grid2D::square(201, 0.7).unwrap()),
            n_angles,
            grid.nx + 1,
            sino.l,
        )
        .unwrap();
        let peak = lab.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in sino.values.iter().zip(&lab.values) {
            assert!((a - b).abs() < 2e-3 * peak, "{a} vs {b}");
        }
    }

    #[test]
    fn zero_nonlinearity_recovers_zero() {
        let frame = small_frame(FieldKind::Real);
        let nl = NonlinearitySpec {
            variant: Variant::Polynomial {
                terms: vec![(3, Profile::Zero)],
            },
            cutoff: None,
        };
        let mut task = RecoveryTask::new(RecoveryMode::PolyTop { m: 3 });
        task.n_angles = 4;
        task.image = Grid2D::square(21, 0.5).unwrap();
        let rec = recover(&frame, &nl, &task).unwrap();
        assert_eq!(rec.alpha.unwrap().max_abs(), 0.0);
    }

    #[test]
    fn zero_crossing_interpolates() {
        let profile = [(0.2, 1.0), (0.5, 0.5), (0.8, 0.1), (0.9, -0.1), (1.0, -0.3)];
        assert!((zero_crossing(&profile).unwrap() - 0.85).abs() < 1e-12);
        assert_eq!(zero_crossing(&[(0.1, 1.0), (1.0, 2.0)]), None);
    }

    #[test]
    fn out_of_range_p_is_marked() {
        let image = Grid2D::square(5, 0.5).unwrap();
        let f = ScalarField2D::from_fn_real(image, |_| 2.0);
        let rec = RecoveredNonlinearity {
            mode: RecoveryMode::RealOddAbel,
            image,
            p_max: 1.0,
            f0: vec![(0.25, f.clone()), (1.0, f)],
            alpha: None,
            gammas: Vec::new(),
            metrics: None,
        };
        assert_eq!(rec.f0_at(2, 2, 0.5), Some(2.0));
        assert_eq!(rec.f0_at(2, 2, 1.5), None);
        assert_eq!(rec.f0_at(2, 2, 0.1), None);
    }

    #[test]
    fn cubic_single_angle_harmonics() {
        // one direction: the refocused first and third harmonics at the
        // envelope peak follow 3/8·Xα and 1/24·Xα
        let frame = small_frame(FieldKind::Real);
        let nl = offset_cubic();
        let linear = LinearReference::compute(&frame, &nl).unwrap();
        let m = measure(&frame, &nl, 0.3, &linear).unwrap();
        let plan = SamplePlan {
            harmonics: vec![1, 3],
            taus: vec![0.0],
        };
        let s = sample(&m, &linear, &plan).unwrap();
        let grid = m.diff.grid;
        let a = nl.in_frame(0.3);
        let Variant::OddSeparated { alpha, .. } = &a.variant else {
            unreachable!()
        };
        let (mut worst1, mut worst3, mut peak) = (0.0f64, 0.0f64, 0.0f64);
        for i in 0..grid.nx {
            let xa = crate::oracle::ray_integral(alpha, [grid.x(i), 5.0], [0.0, 1.0], grid.dx());
            peak = peak.max(xa);
            worst1 = worst1.max((s.get(0, 0, i) - 0.375 * xa).abs());
            worst3 = worst3.max((s.get(1, 0, i) - xa / 24.0).abs());
        }
        assert!(worst1 < 0.05 * 0.375 * peak, "{worst1}");
        assert!(worst3 < 0.1 * peak / 24.0, "{worst3}");
    }
}
