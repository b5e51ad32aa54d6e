//! Explicit finite-difference time-domain solver for
//! `u_tt - Δu + κ(|u|²) f(x, u) = r(t, x)` on a uniform grid.
//!
//! Two schemes are available. [`Scheme::Standard`] is the classical leapfrog
//! with the 5-point Laplacian. [`Scheme::HighOrder`] pairs an eighth-order
//! Laplacian `L` with the fourth-order modified-equation update
//!
//! ```text
//! u⁺ = 2u - u⁻ + dt²·w + dt⁴/12·(L w + g_tt),   w = L u + g,   g = -κ f + r,
//! ```
//!
//! where `g_tt` is the backward second difference of the stored forcing.
//! Rows that carry no signal are skipped; rows at the edge of the active
//! window whose values fall below [`SolverSettings::flush`] are set to zero.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use crate::cheb::law_mode;
use crate::math::{ceil, floor, round};
use crate::model::{
    cauchy_data, Boundary, Cutoff, Envelope, ExperimentConfig, FieldKind, Grid2D, Law,
    NonlinearitySpec, ProbeSpec, Profile, Sample, ScalarField2D, Scheme,
};
use crate::{Complex64, Error, Result};

/// Default flush level relative to the probe amplitude; see
/// [`SolverSettings::flush`].
pub const FLUSH_RELATIVE: f64 = 1e-12;

const HIGH_ORDER: [f64; 5] = [
    -205.0 / 72.0,
    8.0 / 5.0,
    -1.0 / 5.0,
    8.0 / 315.0,
    -1.0 / 560.0,
];
const SECOND_ORDER: [f64; 2] = [-2.0, 1.0];

/// Angle nodes for Fourier modes of non-polynomial laws.
const MODE_QUAD: usize = 32;

/// The zero-order-in-`u` part of the right-hand side.
#[derive(Clone, Default)]
pub enum SourceTerm {
    #[default]
    None,
    /// `scale·β(x)·χ(-t + x·ω)^power`.
    Traveling {
        beta: Profile,
        omega: [f64; 2],
        chi: Envelope,
        power: u32,
        scale: f64,
    },
    /// Arbitrary `r(t, x)`, evaluated on every interior node.
    Field(Arc<dyn Fn(f64, [f64; 2]) -> f64 + Send + Sync>),
}

impl fmt::Debug for SourceTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SourceTerm::None => f.write_str("None"),
            SourceTerm::Traveling {
                beta,
                omega,
                chi,
                power,
                scale,
            } => f
                .debug_struct("Traveling")
                .field("beta", beta)
                .field("omega", omega)
                .field("chi", chi)
                .field("power", power)
                .field("scale", scale)
                .finish(),
            SourceTerm::Field(_) => f.write_str("Field(..)"),
        }
    }
}

/// The `u`-dependent part of the equation.
#[derive(Debug, Clone, Default)]
pub enum Reaction {
    #[default]
    None,
    /// `κ(|u|²)·f(x, u)`.
    Local(NonlinearitySpec),
    /// `½·𝖿_0(x, χ(φ), v)`: the nonlinearity averaged over the carrier phase
    /// of the probe, acting on the slowly varying state `v`. Real states only.
    ZerothMode {
        spec: NonlinearitySpec,
        probe: ProbeSpec,
    },
}

/// How the second time level is produced from `(u, u_t)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Start {
    /// Evaluate the probe's free wave at `t0 - dt`.
    Exact,
    /// Taylor expansion in time using the equation.
    Taylor,
}

/// Static solver options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub scheme: Scheme,
    pub boundary: Boundary,
    /// Runs abort with [`Error::NumericalBlowup`] once `max|u|` exceeds this.
    pub blowup_limit: f64,
    /// Rows at the edge of the active window whose magnitude is below this
    /// value are zeroed and no longer updated.
    pub flush: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            scheme: Scheme::HighOrder,
            boundary: Boundary::Dirichlet,
            blowup_limit: 1e6,
            flush: 1e-150,
        }
    }
}

/// Receives the state after every step (and once before the first one).
pub trait Observer<T> {
    fn observe(&mut self, t: f64, u: &[T], grid: &Grid2D);
}

impl<T, F: FnMut(f64, &[T], &Grid2D)> Observer<T> for F {
    fn observe(&mut self, t: f64, u: &[T], grid: &Grid2D) {
        self(t, u, grid)
    }
}

/// A field captured at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub field: ScalarField2D,
}

/// Result of [`Solver::run_to`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub snapshots: Vec<Snapshot>,
    pub dt: f64,
    pub steps: usize,
    /// `max|u|` after each step.
    pub max_abs: Vec<f64>,
    /// Whether `|u|²` exceeded the cutoff threshold anywhere the
    /// nonlinearity is active.
    pub cutoff_engaged: bool,
}

impl RunOutput {
    /// Snapshot closest to `t`.
    pub fn at(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots
            .iter()
            .min_by(|a, b| crate::math::abs(a.t - t).total_cmp(&crate::math::abs(b.t - t)))
    }
}

struct Laplacian {
    coeffs: &'static [f64],
    inv_dx2: f64,
    nx: usize,
    periodic: bool,
}

impl Laplacian {
    fn radius(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Writes `L src` on row `j` into `out`. `j` must be at least `radius`
    /// rows away from both ends.
    fn apply<T: Sample>(&self, src: &[T], j: usize, out: &mut [T]) {
        let (nx, r) = (self.nx, self.radius());
        let row = |k: usize| &src[k * nx..(k + 1) * nx];
        let c = row(j);
        let c0 = 2.0 * self.coeffs[0] * self.inv_dx2;
        for (o, v) in out[r..nx - r].iter_mut().zip(&c[r..nx - r]) {
            *o = *v * c0;
        }
        for m in 1..=r {
            let cm = self.coeffs[m] * self.inv_dx2;
            let (up, dn) = (row(j - m), row(j + m));
            for ((((o, a), b), u), d) in out[r..nx - r]
                .iter_mut()
                .zip(&c[r - m..nx - r - m])
                .zip(&c[r + m..nx - r + m])
                .zip(&up[r..nx - r])
                .zip(&dn[r..nx - r])
            {
                *o += (*a + *b + *u + *d) * cm;
            }
        }
        if self.periodic {
            for i in (0..r).chain(nx - r..nx) {
                let mut acc = c[i] * c0;
                for m in 1..=r {
                    let cm = self.coeffs[m] * self.inv_dx2;
                    acc += (c[(i + nx - m) % nx] + c[(i + m) % nx] + row(j - m)[i] + row(j + m)[i])
                        * cm;
                }
                out[i] = acc;
            }
        } else {
            out[..r].fill(T::default());
            out[nx - r..].fill(T::default());
        }
    }
}

enum SourceEval {
    None,
    Traveling {
        beta: Vec<f64>,
        omega: [f64; 2],
        chi: Envelope,
        power: u32,
        scale: f64,
    },
    Field(Arc<dyn Fn(f64, [f64; 2]) -> f64 + Send + Sync>),
}

/// Forcing `g = -κ f + r` on a rectangular box of nodes, with two levels of
/// history for `g_tt`.
struct Forcing<T> {
    rows: Range<usize>,
    cols: Range<usize>,
    alphas: Vec<Vec<f64>>,
    laws: Vec<Law>,
    cutoff: Option<Cutoff>,
    zeroth: Option<ProbeSpec>,
    source: SourceEval,
    /// `g` at the current, previous and second previous step.
    g: [Vec<T>; 3],
    filled: usize,
    cutoff_engaged: bool,
}

fn disc_box(
    grid: &Grid2D,
    c: [f64; 2],
    r: f64,
    rows: Range<usize>,
) -> (Range<usize>, Range<usize>) {
    let (dx, dy) = (grid.dx(), grid.dy());
    let clip = |v: f64, n: usize| v.max(0.0).min(n as f64) as usize;
    let i0 = clip(floor((c[0] - r - grid.x_min) / dx), grid.nx);
    let i1 = clip(ceil((c[0] + r - grid.x_min) / dx) + 1.0, grid.nx);
    let j0 = clip(floor((c[1] - r - grid.y_min) / dy), grid.ny).max(rows.start);
    let j1 = clip(ceil((c[1] + r - grid.y_min) / dy) + 1.0, grid.ny).min(rows.end);
    (j0..j1.max(j0), i0..i1.max(i0))
}

fn union(a: Range<usize>, b: Range<usize>) -> Range<usize> {
    if a.is_empty() {
        b
    } else if b.is_empty() {
        a
    } else {
        a.start.min(b.start)..a.end.max(b.end)
    }
}

impl<T: Sample> Forcing<T> {
    fn new(
        grid: &Grid2D,
        interior: Range<usize>,
        reaction: &Reaction,
        source: &SourceTerm,
    ) -> Result<Self> {
        let (spec, zeroth) = match reaction {
            Reaction::None => (None, None),
            Reaction::Local(s) => (Some(s), None),
            Reaction::ZerothMode { spec, probe } => {
                if T::KIND != FieldKind::Real {
                    return Err(Error::WrongVariant(
                        "complex states in the zeroth-mode reaction",
                    ));
                }
                (Some(spec), Some(*probe))
            }
        };
        let terms = spec.map(|s| s.terms()).unwrap_or_default();
        let (mut rows, mut cols) = (0..0, 0..0);
        if let Some((c, r)) = spec.and_then(|s| s.support()) {
            (rows, cols) = disc_box(grid, c, r, interior.clone());
        }
        match source {
            SourceTerm::None => {}
            SourceTerm::Traveling { beta, .. } => {
                if let Some((c, r)) = beta.support() {
                    let (br, bc) = disc_box(grid, c, r, interior.clone());
                    rows = union(rows, br);
                    cols = union(cols, bc);
                }
            }
            SourceTerm::Field(_) => {
                rows = interior.clone();
                cols = 0..grid.nx;
            }
        }
        let nodes = rows.len() * cols.len();
        let sample = |p: &Profile| {
            let mut v = Vec::with_capacity(nodes);
            for j in rows.clone() {
                for i in cols.clone() {
                    v.push(p.eval(grid.point(i, j)));
                }
            }
            v
        };
        let alphas = terms.iter().map(|t| sample(&t.alpha)).collect();
        let source = match source {
            SourceTerm::None => SourceEval::None,
            SourceTerm::Traveling {
                beta,
                omega,
                chi,
                power,
                scale,
            } => SourceEval::Traveling {
                beta: sample(beta),
                omega: *omega,
                chi: *chi,
                power: *power,
                scale: *scale,
            },
            SourceTerm::Field(f) => SourceEval::Field(f.clone()),
        };
        Ok(Forcing {
            rows,
            cols,
            alphas,
            laws: terms.into_iter().map(|t| t.law).collect(),
            cutoff: spec.and_then(|s| s.cutoff),
            zeroth,
            source,
            g: [
                vec![T::default(); nodes],
                vec![T::default(); nodes],
                vec![T::default(); nodes],
            ],
            filled: 0,
            cutoff_engaged: false,
        })
    }

    fn is_empty(&self) -> bool {
        self.g[0].is_empty()
    }

    /// Shifts the history and evaluates `g` at time `t` for the state `u`.
    fn advance(&mut self, grid: &Grid2D, t: f64, u: &[T]) {
        if self.is_empty() {
            return;
        }
        self.g.rotate_right(1);
        self.filled = (self.filled + 1).min(3);
        let bw = self.cols.len();
        let mut engaged = false;
        for (b, j) in self.rows.clone().enumerate() {
            for (a, i) in self.cols.clone().enumerate() {
                let k = b * bw + a;
                let x = grid.point(i, j);
                let v = u[grid.index(i, j)];
                let mut acc = T::default();
                match &self.zeroth {
                    None => {
                        for (alpha, law) in self.alphas.iter().zip(&self.laws) {
                            if alpha[k] != 0.0 {
                                acc += law.apply(v) * alpha[k];
                            }
                        }
                        if let Some(c) = self.cutoff {
                            let u2 = v.norm_sqr();
                            if u2 > c.rho && self.alphas.iter().any(|al| al[k] != 0.0) {
                                engaged = true;
                            }
                            acc = acc * c.eval(u2);
                        }
                    }
                    Some(probe) => {
                        let m = probe.chi.eval(probe.phase(t, x));
                        let vr = v.re();
                        let mut s = 0.0;
                        for (alpha, law) in self.alphas.iter().zip(&self.laws) {
                            if alpha[k] != 0.0 {
                                s += alpha[k] * law_mode(law, 0, m, vr, MODE_QUAD);
                            }
                        }
                        acc = T::from_re(0.5 * s);
                    }
                }
                let r = match &self.source {
                    SourceEval::None => 0.0,
                    SourceEval::Traveling {
                        beta,
                        omega,
                        chi,
                        power,
                        scale,
                    } => {
                        if beta[k] == 0.0 {
                            0.0
                        } else {
                            let c = chi.eval(crate::model::phase(t, x, *omega));
                            scale * beta[k] * crate::math::powi(c, *power)
                        }
                    }
                    SourceEval::Field(f) => f(t, x),
                };
                self.g[0][k] = T::from_re(r) - acc;
            }
        }
        self.cutoff_engaged |= engaged;
    }

    /// Adds `g` (current level) to row `j` of `out`.
    fn add_current(&self, j: usize, out: &mut [T]) {
        if !self.rows.contains(&j) {
            return;
        }
        let bw = self.cols.len();
        let b = j - self.rows.start;
        for (o, g) in out[self.cols.clone()]
            .iter_mut()
            .zip(&self.g[0][b * bw..(b + 1) * bw])
        {
            *o += *g;
        }
    }

    /// Adds `g_tt` by backward differences to row `j` of `out`.
    fn add_second_derivative(&self, j: usize, dt: f64, out: &mut [T]) {
        if self.filled < 3 || !self.rows.contains(&j) {
            return;
        }
        let bw = self.cols.len();
        let b = j - self.rows.start;
        let s = b * bw..(b + 1) * bw;
        let inv = 1.0 / (dt * dt);
        for (((o, g0), g1), g2) in out[self.cols.clone()]
            .iter_mut()
            .zip(&self.g[0][s.clone()])
            .zip(&self.g[1][s.clone()])
            .zip(&self.g[2][s])
        {
            *o += (*g0 - *g1 * 2.0 + *g2) * inv;
        }
    }
}

/// Leapfrog state: two time levels plus the scheme's work buffers.
pub struct Solver<T: Sample> {
    grid: Grid2D,
    settings: SolverSettings,
    lap: Laplacian,
    dt: f64,
    t0: f64,
    steps: usize,
    prev: Vec<T>,
    cur: Vec<T>,
    w: Vec<T>,
    w_rows: Range<usize>,
    active: Range<usize>,
    forcing: Forcing<T>,
}

impl<T: Sample> fmt::Debug for Solver<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Solver")
            .field("grid", &self.grid)
            .field("settings", &self.settings)
            .field("dt", &self.dt)
            .field("t", &self.time())
            .field("active", &self.active)
            .finish_non_exhaustive()
    }
}

/// Number of steps and step size covering `[t0, t_end]` with `dt <= cfl·dx`.
pub fn step_size(t0: f64, t_end: f64, cfl: f64, dx: f64) -> (usize, f64) {
    let n = (ceil((t_end - t0) / (cfl * dx) - 1e-9) as usize).max(1);
    (n, (t_end - t0) / n as f64)
}

impl<T: Sample> Solver<T> {
    fn build(
        grid: Grid2D,
        settings: SolverSettings,
        reaction: &Reaction,
        source: &SourceTerm,
        t0: f64,
        dt: f64,
    ) -> Result<Self> {
        grid.require_square_cells()?;
        let r = settings.scheme.radius();
        if grid.nx <= 2 * r + 1 || grid.ny <= 2 * r + 1 {
            return Err(Error::InvalidGrid(format!(
                "grid needs more than {} nodes per side",
                2 * r + 1
            )));
        }
        if !(dt != 0.0 && dt.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "time step {dt} must be finite and nonzero"
            )));
        }
        let coeffs: &'static [f64] = match settings.scheme {
            Scheme::Standard => &SECOND_ORDER,
            Scheme::HighOrder => &HIGH_ORDER,
        };
        let dx = grid.dx();
        let lap = Laplacian {
            coeffs,
            inv_dx2: 1.0 / (dx * dx),
            nx: grid.nx,
            periodic: settings.boundary == Boundary::PeriodicX,
        };
        let forcing = Forcing::new(&grid, r..grid.ny - r, reaction, source)?;
        Ok(Solver {
            grid,
            settings,
            lap,
            dt,
            t0,
            steps: 0,
            prev: vec![T::default(); grid.len()],
            cur: vec![T::default(); grid.len()],
            w: vec![T::default(); grid.len()],
            w_rows: 0..0,
            active: 0..0,
            forcing,
        })
    }

    /// Solver started from arbitrary Cauchy data `(u0, u1)` at `t0` by a
    /// Taylor expansion in time.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        grid: Grid2D,
        settings: SolverSettings,
        reaction: &Reaction,
        source: &SourceTerm,
        t0: f64,
        dt: f64,
        u0: &[T],
        u1: &[T],
    ) -> Result<Self> {
        if u0.len() != grid.len() || u1.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        let mut s = Self::build(grid, settings, reaction, source, t0, dt)?;
        s.cur.copy_from_slice(u0);
        s.zero_rim_cur();
        let mut u1 = u1.to_vec();
        s.zero_rim(&mut u1);
        s.taylor_start(&u1);
        s.finish_init();
        Ok(s)
    }

    /// Solver started from the probe's free wave at `probe.t_start`, with
    /// the previous level taken from the same free wave at `t_start - dt`.
    /// The step is sized so that `t_end` is reached exactly.
    pub fn from_probe(
        config: &ExperimentConfig,
        reaction: &Reaction,
        source: &SourceTerm,
        t_end: f64,
        start: Start,
    ) -> Result<Self> {
        config.validate()?;
        let probe = &config.probe;
        if T::KIND != probe.field_kind {
            return Err(Error::KindMismatch);
        }
        let t0 = probe.t_start;
        if !(t_end > t0) {
            return Err(Error::InvalidConfig(format!(
                "end time {t_end} precedes the start time {t0}"
            )));
        }
        let (_, dt) = step_size(t0, t_end, config.cfl, config.grid.dx());
        let settings = SolverSettings {
            scheme: config.scheme,
            boundary: config.boundary,
            blowup_limit: 10.0 * (probe.chi.amplitude() + 1.0),
            flush: FLUSH_RELATIVE * probe.chi.amplitude(),
        };
        let mut s = Self::build(config.grid, settings, reaction, source, t0, dt)?;
        let support = config.nonlinearity.support();
        let (u, ut) = cauchy_data(probe, &config.grid, t0, support)?;
        s.cur
            .copy_from_slice(u.samples::<T>().ok_or(Error::KindMismatch)?);
        s.zero_rim_cur();
        match start {
            Start::Exact => {
                let (p, _) = cauchy_data(probe, &config.grid, t0 - dt, None)?;
                s.prev
                    .copy_from_slice(p.samples::<T>().ok_or(Error::KindMismatch)?);
                let mut prev = core::mem::take(&mut s.prev);
                s.zero_rim(&mut prev);
                s.prev = prev;
            }
            Start::Taylor => {
                let mut u1 = ut.samples::<T>().ok_or(Error::KindMismatch)?.to_vec();
                s.zero_rim(&mut u1);
                s.taylor_start(&u1);
            }
        }
        s.finish_init();
        Ok(s)
    }

    fn zero_rim(&self, v: &mut [T]) {
        let (nx, ny, r) = (self.grid.nx, self.grid.ny, self.lap.radius());
        v[..r * nx].fill(T::default());
        v[(ny - r) * nx..].fill(T::default());
        if !self.lap.periodic {
            for row in v.chunks_mut(nx) {
                row[..r].fill(T::default());
                row[nx - r..].fill(T::default());
            }
        }
    }

    fn zero_rim_cur(&mut self) {
        let mut cur = core::mem::take(&mut self.cur);
        self.zero_rim(&mut cur);
        self.cur = cur;
    }

    fn interior(&self) -> Range<usize> {
        let r = self.lap.radius();
        r..self.grid.ny - r
    }

    /// `u(t0 - dt)` from `u`, `u_t` and the equation.
    fn taylor_start(&mut self, u1: &[T]) {
        let nx = self.grid.nx;
        let dt = self.dt;
        let interior = self.interior();
        self.forcing.advance(&self.grid, self.t0, &self.cur);
        // a = u_tt = L u + g
        let mut a = vec![T::default(); self.grid.len()];
        let mut lu1 = vec![T::default(); self.grid.len()];
        for j in interior.clone() {
            self.lap.apply(&self.cur, j, &mut a[j * nx..(j + 1) * nx]);
            self.forcing.add_current(j, &mut a[j * nx..(j + 1) * nx]);
            self.lap.apply(u1, j, &mut lu1[j * nx..(j + 1) * nx]);
        }
        let high = self.settings.scheme == Scheme::HighOrder;
        let mut la = vec![T::default(); nx];
        for j in interior {
            if high {
                self.lap.apply(&a, j, &mut la);
            }
            for i in 0..nx {
                let k = j * nx + i;
                let mut p = self.cur[k] - u1[k] * dt + a[k] * (dt * dt / 2.0);
                if high {
                    p = p - lu1[k] * (dt * dt * dt / 6.0) + la[i] * (dt * dt * dt * dt / 24.0);
                }
                self.prev[k] = p;
            }
        }
        self.zero_rim_prev();
        self.forcing.filled = 0;
    }

    fn zero_rim_prev(&mut self) {
        let mut prev = core::mem::take(&mut self.prev);
        self.zero_rim(&mut prev);
        self.prev = prev;
    }

    fn finish_init(&mut self) {
        let nx = self.grid.nx;
        let nonzero =
            |v: &[T], j: usize| v[j * nx..(j + 1) * nx].iter().any(|x| *x != T::default());
        let rows: Vec<usize> = (0..self.grid.ny)
            .filter(|&j| nonzero(&self.cur, j) || nonzero(&self.prev, j))
            .collect();
        self.active = match (rows.first(), rows.last()) {
            (Some(&a), Some(&b)) => a..b + 1,
            _ => 0..0,
        };
    }

    pub fn grid(&self) -> &Grid2D {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps_taken(&self) -> usize {
        self.steps
    }

    pub fn time(&self) -> f64 {
        self.t0 + self.steps as f64 * self.dt
    }

    /// Rows that may hold nonzero values.
    pub fn active_rows(&self) -> Range<usize> {
        self.active.clone()
    }

    pub fn current(&self) -> &[T] {
        &self.cur
    }

    pub fn field(&self) -> ScalarField2D {
        ScalarField2D {
            grid: self.grid,
            data: T::wrap(self.cur.clone()),
        }
    }

    pub fn previous_field(&self) -> ScalarField2D {
        ScalarField2D {
            grid: self.grid,
            data: T::wrap(self.prev.clone()),
        }
    }

    pub fn cutoff_engaged(&self) -> bool {
        self.forcing.cutoff_engaged
    }

    pub fn max_abs(&self) -> f64 {
        let nx = self.grid.nx;
        let m2 = self.cur[self.active.start * nx..self.active.end * nx]
            .iter()
            .fold(0.0f64, |m, v| {
                let a = v.norm_sqr();
                if a.is_nan() || a > m {
                    a
                } else {
                    m
                }
            });
        crate::math::sqrt(m2)
    }

    /// Discrete energy between the two stored levels:
    /// `Σ |∂_t⁺u|² + ½(|∇⁺u|² + |∇⁺u⁻|²)` times the cell area.
    pub fn energy(&self) -> f64 {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let dx = self.grid.dx();
        let periodic = self.lap.periodic;
        let grad2 = |v: &[T], i: usize, j: usize| -> f64 {
            let k = j * nx + i;
            let ex = if i + 1 < nx {
                (v[k + 1] - v[k]).norm_sqr()
            } else if periodic {
                (v[j * nx] - v[k]).norm_sqr()
            } else {
                v[k].norm_sqr()
            };
            let ey = if j + 1 < ny {
                (v[k + nx] - v[k]).norm_sqr()
            } else {
                v[k].norm_sqr()
            };
            (ex + ey) / (dx * dx)
        };
        let lo = self.active.start.saturating_sub(1);
        let hi = (self.active.end + 1).min(ny);
        let mut e = 0.0;
        for j in lo..hi {
            for i in 0..nx {
                let k = j * nx + i;
                e += (self.cur[k] - self.prev[k]).norm_sqr() / (self.dt * self.dt);
                e += 0.5 * (grad2(&self.cur, i, j) + grad2(&self.prev, i, j));
            }
        }
        e * dx * dx
    }

    /// Advances one step.
    pub fn step(&mut self) -> Result<()> {
        let t = self.time();
        let (nx, r) = (self.grid.nx, self.lap.radius());
        let interior = self.interior();
        let clip = |a: Range<usize>| {
            a.start.max(interior.start)..a.end.min(interior.end).max(a.start.max(interior.start))
        };
        let grow = |a: &Range<usize>, by: usize| {
            if a.is_empty() {
                a.clone()
            } else {
                a.start.saturating_sub(by)..a.end + by
            }
        };
        self.forcing.advance(&self.grid, t, &self.cur);
        let forced = if self.forcing.is_empty() {
            0..0
        } else {
            self.forcing.rows.clone()
        };
        let dt = self.dt;
        let (dt2, dt4) = (dt * dt, dt * dt * dt * dt / 12.0);
        let Solver {
            lap,
            prev,
            cur,
            w,
            forcing,
            w_rows,
            ..
        } = self;
        let (lap, forcing, cur_ref) = (&*lap, &*forcing, &*cur);
        let update_rows = match self.settings.scheme {
            Scheme::Standard => {
                let rows = clip(union(grow(&self.active, r), forced));
                for_rows(prev, nx, rows.clone(), |j, out, scratch| {
                    lap.apply(cur_ref, j, scratch);
                    forcing.add_current(j, scratch);
                    let c = &cur_ref[j * nx..(j + 1) * nx];
                    for ((o, cv), s) in out.iter_mut().zip(c).zip(scratch.iter()) {
                        *o = *cv * 2.0 - *o + *s * dt2;
                    }
                });
                rows
            }
            Scheme::HighOrder => {
                let rows_a = clip(union(grow(&self.active, r), forced));
                let stale = w_rows.clone();
                for j in stale.filter(|j| !rows_a.contains(j)) {
                    w[j * nx..(j + 1) * nx].fill(T::default());
                }
                *w_rows = rows_a.clone();
                for_rows(w, nx, rows_a.clone(), |j, out, _| {
                    lap.apply(cur_ref, j, out);
                    forcing.add_current(j, out);
                });
                let w_ref = &*w;
                let rows_b = clip(grow(&rows_a, r));
                for_rows(prev, nx, rows_b.clone(), |j, out, scratch| {
                    lap.apply(w_ref, j, scratch);
                    forcing.add_second_derivative(j, dt, scratch);
                    let c = &cur_ref[j * nx..(j + 1) * nx];
                    let wr = &w_ref[j * nx..(j + 1) * nx];
                    for (((o, cv), wv), s) in out.iter_mut().zip(c).zip(wr).zip(scratch.iter()) {
                        *o = *cv * 2.0 - *o + *wv * dt2 + *s * dt4;
                    }
                });
                rows_b
            }
        };
        core::mem::swap(&mut self.prev, &mut self.cur);
        self.steps += 1;
        self.active = union(self.active.clone(), update_rows);
        self.trim_active();
        let m = self.max_abs();
        if !(m <= self.settings.blowup_limit) {
            return Err(Error::NumericalBlowup {
                t: self.time(),
                max_abs: m,
            });
        }
        Ok(())
    }

    fn trim_active(&mut self) {
        let nx = self.grid.nx;
        let f2 = self.settings.flush * self.settings.flush;
        let small = |v: &[T], j: usize| v[j * nx..(j + 1) * nx].iter().all(|x| x.norm_sqr() < f2);
        while !self.active.is_empty() {
            let j = self.active.start;
            if !(small(&self.cur, j) && small(&self.prev, j)) {
                break;
            }
            self.cur[j * nx..(j + 1) * nx].fill(T::default());
            self.prev[j * nx..(j + 1) * nx].fill(T::default());
            self.active.start += 1;
        }
        while !self.active.is_empty() {
            let j = self.active.end - 1;
            if !(small(&self.cur, j) && small(&self.prev, j)) {
                break;
            }
            self.cur[j * nx..(j + 1) * nx].fill(T::default());
            self.prev[j * nx..(j + 1) * nx].fill(T::default());
            self.active.end -= 1;
        }
    }

    /// Steps until `t_end`, capturing the field at the requested times and
    /// calling `observer` after every step. `t_end - t` must be a whole
    /// number of steps; captures are taken at the nearest step.
    pub fn run_to(
        &mut self,
        t_end: f64,
        captures: &[f64],
        mut observer: Option<&mut dyn Observer<T>>,
    ) -> Result<RunOutput> {
        let t = self.time();
        let span = t_end - t;
        let n = round(span / self.dt);
        if n < 0.0 || crate::math::abs(n * self.dt - span) > 1e-9 * (1.0 + crate::math::abs(t_end))
        {
            return Err(Error::InvalidConfig(format!(
                "end time {t_end} is not a whole number of steps of {} from {t}",
                self.dt
            )));
        }
        let n = n as usize;
        let mut wanted: Vec<(usize, usize)> = Vec::with_capacity(captures.len());
        for (c, &tc) in captures.iter().enumerate() {
            let half = 0.5 * crate::math::abs(self.dt);
            if tc < t.min(t_end) - half || tc > t.max(t_end) + half {
                return Err(Error::InvalidConfig(format!(
                    "capture time {tc} outside [{t}, {t_end}]"
                )));
            }
            wanted.push((round((tc - t) / self.dt) as usize, c));
        }
        let mut snapshots: Vec<Option<Snapshot>> = vec![None; captures.len()];
        let mut max_abs = Vec::with_capacity(n);
        let take = |k: usize, s: &Self, snaps: &mut Vec<Option<Snapshot>>| {
            for &(step, c) in &wanted {
                if step == k {
                    snaps[c] = Some(Snapshot {
                        t: s.time(),
                        field: s.field(),
                    });
                }
            }
        };
        if let Some(o) = observer.as_deref_mut() {
            o.observe(self.time(), &self.cur, &self.grid);
        }
        take(0, self, &mut snapshots);
        for k in 1..=n {
            self.step()?;
            max_abs.push(self.max_abs());
            if let Some(o) = observer.as_deref_mut() {
                o.observe(self.time(), &self.cur, &self.grid);
            }
            take(k, self, &mut snapshots);
        }
        Ok(RunOutput {
            snapshots: snapshots.into_iter().flatten().collect(),
            dt: self.dt,
            steps: n,
            max_abs,
            cutoff_engaged: self.forcing.cutoff_engaged,
        })
    }
}

#[cfg(feature = "parallel")]
fn for_rows<T: Sample>(
    buf: &mut [T],
    nx: usize,
    rows: Range<usize>,
    f: impl Fn(usize, &mut [T], &mut [T]) + Sync,
) {
    use rayon::prelude::*;
    let start = rows.start;
    buf[rows.start * nx..rows.end * nx]
        .par_chunks_mut(nx)
        .enumerate()
        .for_each_init(
            || vec![T::default(); nx],
            |scratch, (k, row)| f(start + k, row, scratch),
        );
}

#[cfg(not(feature = "parallel"))]
fn for_rows<T: Sample>(
    buf: &mut [T],
    nx: usize,
    rows: Range<usize>,
    f: impl Fn(usize, &mut [T], &mut [T]),
) {
    let mut scratch = vec![T::default(); nx];
    for (k, row) in buf[rows.start * nx..rows.end * nx]
        .chunks_mut(nx)
        .enumerate()
    {
        f(rows.start + k, row, &mut scratch);
    }
}

/// Runs the experiment from `probe.t_start` to `probe.t_exit` with the
/// configured nonlinearity and returns the snapshots at `captures`.
pub fn run_experiment(config: &ExperimentConfig, captures: &[f64]) -> Result<RunOutput> {
    run_with(
        config,
        &Reaction::Local(config.nonlinearity.clone()),
        captures,
    )
}

/// The same experiment with `f ≡ 0`.
pub fn run_linear(config: &ExperimentConfig, captures: &[f64]) -> Result<RunOutput> {
    run_with(config, &Reaction::None, captures)
}

fn run_with(config: &ExperimentConfig, reaction: &Reaction, captures: &[f64]) -> Result<RunOutput> {
    let t_end = config.probe.t_exit;
    match config.probe.field_kind {
        FieldKind::Real => {
            Solver::<f64>::from_probe(config, reaction, &SourceTerm::None, t_end, Start::Exact)?
                .run_to(t_end, captures, None)
        }
        FieldKind::Complex => Solver::<Complex64>::from_probe(
            config,
            reaction,
            &SourceTerm::None,
            t_end,
            Start::Exact,
        )?
        .run_to(t_end, captures, None),
    }
}

/// The two stored time levels at the end of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExitState {
    pub t: f64,
    pub dt: f64,
    /// Field at `t - dt`.
    pub prev: ScalarField2D,
    /// Field at `t`.
    pub cur: ScalarField2D,
    pub settings: SolverSettings,
    pub cutoff_engaged: bool,
}

impl ExitState {
    /// Level-wise `self - other`; both must come from the same grid and step.
    pub fn sub(&self, other: &ExitState) -> Result<ExitState> {
        if crate::math::abs(self.t - other.t) > 1e-12
            || crate::math::abs(self.dt - other.dt) > 1e-15
        {
            return Err(Error::InvalidConfig(String::from(
                "exit states are at different times",
            )));
        }
        Ok(ExitState {
            t: self.t,
            dt: self.dt,
            prev: self.prev.sub(&other.prev)?,
            cur: self.cur.sub(&other.cur)?,
            settings: self.settings,
            cutoff_engaged: self.cutoff_engaged || other.cutoff_engaged,
        })
    }
}

fn final_state<T: Sample>(solver: Solver<T>) -> ExitState {
    ExitState {
        t: solver.time(),
        dt: solver.dt,
        cutoff_engaged: solver.cutoff_engaged(),
        prev: solver.previous_field(),
        cur: solver.field(),
        settings: solver.settings,
    }
}

fn run_state<T: Sample>(config: &ExperimentConfig, reaction: &Reaction) -> Result<ExitState> {
    let t_end = config.probe.t_exit;
    let mut s = Solver::<T>::from_probe(config, reaction, &SourceTerm::None, t_end, Start::Exact)?;
    s.run_to(t_end, &[], None)?;
    Ok(final_state(s))
}

/// Runs the experiment to the exit time with the given reaction and keeps
/// both final levels.
pub fn exit_state(config: &ExperimentConfig, reaction: &Reaction) -> Result<ExitState> {
    match config.probe.field_kind {
        FieldKind::Real => run_state::<f64>(config, reaction),
        FieldKind::Complex => run_state::<Complex64>(config, reaction),
    }
}

fn propagate<T: Sample>(state: &ExitState, t_target: f64) -> Result<ScalarField2D> {
    let prev = state.prev.samples::<T>().ok_or(Error::KindMismatch)?;
    let cur = state.cur.samples::<T>().ok_or(Error::KindMismatch)?;
    let grid = state.cur.grid;
    let forward = t_target >= state.t;
    let mut s = Solver::<T>::build(
        grid,
        state.settings,
        &Reaction::None,
        &SourceTerm::None,
        state.t,
        state.dt,
    )?;
    if forward {
        s.prev.copy_from_slice(prev);
        s.cur.copy_from_slice(cur);
    } else {
        // Leapfrog is reversible: step backwards from (u(t), u(t - dt)).
        s.t0 = state.t - state.dt;
        s.dt = -state.dt;
        s.prev.copy_from_slice(cur);
        s.cur.copy_from_slice(prev);
    }
    s.finish_init();
    let out = s.run_to(t_target, &[t_target], None)?;
    out.snapshots
        .into_iter()
        .next()
        .map(|snap| snap.field)
        .ok_or_else(|| Error::InvalidConfig(String::from("missing snapshot")))
}

/// Propagates a free wave given by its two final levels to `t_target`
/// (earlier or later) with the same scheme, without nonlinearity or source.
/// `t_target` must lie a whole number of steps away.
pub fn propagate_free(state: &ExitState, t_target: f64) -> Result<ScalarField2D> {
    match state.cur.kind() {
        FieldKind::Real => propagate::<f64>(state, t_target),
        FieldKind::Complex => propagate::<Complex64>(state, t_target),
    }
}

/// Both runs of an experiment at the exit time: `(u(T), u_L(T))`.
pub fn exit_pair(config: &ExperimentConfig) -> Result<(ScalarField2D, ScalarField2D)> {
    let u = exit_state(config, &Reaction::Local(config.nonlinearity.clone()))?;
    let ul = exit_state(config, &Reaction::None)?;
    Ok((u.cur, ul.cur))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{cos, sin, PI};
    use crate::model::Variant;

    fn small_config(kind: FieldKind, scheme: Scheme) -> ExperimentConfig {
        let grid = Grid2D::new(61, 361, -0.3, 0.3, -1.8, 1.8).unwrap();
        let h = 0.05;
        let mut probe = ProbeSpec::new(h, [0.0, 1.0], Envelope::STANDARD, 0.9, kind, 0.3);
        probe.t_exit = 0.5;
        ExperimentConfig {
            grid,
            probe,
            nonlinearity: NonlinearitySpec::zero(),
            cfl: 0.5,
            boundary: Boundary::PeriodicX,
            scheme,
        }
    }

    #[test]
    fn laplacian_of_quadratic_is_exact() {
        let grid = Grid2D::square(21, 1.0).unwrap();
        for (coeffs, r) in [(&HIGH_ORDER[..], 4), (&SECOND_ORDER[..], 1)] {
            let lap = Laplacian {
                coeffs,
                inv_dx2: 1.0 / (grid.dx() * grid.dx()),
                nx: 21,
                periodic: false,
            };
            let f: Vec<f64> = (0..grid.len())
                .map(|k| {
                    let p = grid.point(k % 21, k / 21);
                    p[0] * p[0] + 3.0 * p[1] * p[1]
                })
                .collect();
            let mut out = vec![0.0; 21];
            lap.apply(&f, 10, &mut out);
            for v in &out[r..21 - r] {
                assert!((v - 8.0).abs() < 1e-9, "{v}");
            }
        }
    }

    #[test]
    fn high_order_laplacian_converges_fast() {
        let err = |n: usize| {
            let grid = Grid2D::new(n, 9, 0.0, 1.0, 0.0, 8.0 / (n - 1) as f64).unwrap();
            let dx = grid.dx();
            let lap = Laplacian {
                coeffs: &HIGH_ORDER,
                inv_dx2: 1.0 / (dx * dx),
                nx: n,
                periodic: true,
            };
            let f: Vec<f64> = (0..grid.len())
                .map(|k| sin(2.0 * PI * (k % n) as f64 / n as f64))
                .collect();
            let wave = 2.0 * PI / (n as f64 * dx);
            let mut out = vec![0.0; n];
            lap.apply(&f, 4, &mut out);
            (0..n)
                .map(|i| (out[i] + wave * wave * f[4 * n + i]).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(16), err(32));
        assert!(e1 / e2 > 150.0, "{e1} {e2}");
    }

    #[test]
    fn free_wave_keeps_its_shape() {
        for scheme in [Scheme::HighOrder, Scheme::Standard] {
            let cfg = small_config(FieldKind::Complex, scheme);
            let out = run_linear(&cfg, &[cfg.probe.t_exit]).unwrap();
            let field = &out.snapshots[0].field;
            let mut err: f64 = 0.0;
            for j in 0..cfg.grid.ny {
                let x = cfg.grid.point(30, j);
                let (exact, _) = cfg.probe.wave(out.snapshots[0].t, x);
                err = err.max((field.at(30, j) - exact).norm());
            }
            let tol = if scheme == Scheme::HighOrder {
                2e-3
            } else {
                0.3
            };
            assert!(err < tol, "{scheme:?}: {err}");
        }
    }

    #[test]
    fn exact_and_taylor_start_agree() {
        let cfg = small_config(FieldKind::Real, Scheme::HighOrder);
        let t = cfg.probe.t_exit;
        let run = |start| {
            Solver::<f64>::from_probe(&cfg, &Reaction::None, &SourceTerm::None, t, start)
                .unwrap()
                .run_to(t, &[t], None)
                .unwrap()
                .snapshots
                .remove(0)
                .field
        };
        let d = run(Start::Exact)
            .sub(&run(Start::Taylor))
            .unwrap()
            .max_abs();
        assert!(d < 1e-4, "{d}");
    }

    #[test]
    fn energy_is_nearly_conserved_without_nonlinearity() {
        for scheme in [Scheme::HighOrder, Scheme::Standard] {
            let cfg = small_config(FieldKind::Real, scheme);
            let t = cfg.probe.t_exit;
            let mut s = Solver::<f64>::from_probe(
                &cfg,
                &Reaction::None,
                &SourceTerm::None,
                t,
                Start::Exact,
            )
            .unwrap();
            let e0 = s.energy();
            while s.time() < t - 1e-12 {
                s.step().unwrap();
            }
            let e1 = s.energy();
            assert!(((e1 - e0) / e0).abs() < 1e-4, "{scheme:?}: {e0} {e1}");
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let grid = Grid2D::square(41, 1.0).unwrap();
        let zero = vec![0.0; grid.len()];
        let spec = NonlinearitySpec::cubic(Profile::standard_gaussian(), 1.0);
        let mut s = Solver::new(
            grid,
            SolverSettings::default(),
            &Reaction::Local(spec),
            &SourceTerm::None,
            0.0,
            0.01,
            &zero,
            &zero,
        )
        .unwrap();
        let out = s.run_to(0.2, &[0.2], None).unwrap();
        assert_eq!(out.snapshots[0].field.max_abs(), 0.0);
    }

    #[test]
    fn source_drives_the_zero_state() {
        let grid = Grid2D::square(41, 1.0).unwrap();
        let zero = vec![0.0; grid.len()];
        let src = SourceTerm::Traveling {
            beta: Profile::standard_gaussian(),
            omega: [0.0, 1.0],
            chi: Envelope::STANDARD,
            power: 1,
            scale: 1.0,
        };
        let mut s = Solver::new(
            grid,
            SolverSettings::default(),
            &Reaction::None,
            &src,
            0.0,
            0.01,
            &zero,
            &zero,
        )
        .unwrap();
        let out = s.run_to(0.1, &[0.1], None).unwrap();
        assert!(out.snapshots[0].field.max_abs() > 1e-4);
    }

    #[test]
    fn oscillator_in_time() {
        // u = cos(t) is exact for u_tt + u = 0 with spatially constant data
        // far from the walls.
        let grid = Grid2D::square(61, 3.0).unwrap();
        let u0: Vec<f64> = (0..grid.len())
            .map(|k| {
                let p = grid.point(k % 61, k / 61);
                if p[0].abs() < 2.0 && p[1].abs() < 2.0 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let u1 = vec![0.0; grid.len()];
        let spec = NonlinearitySpec {
            variant: Variant::Polynomial {
                terms: vec![(
                    1,
                    Profile::Gaussian {
                        center: [0.0, 0.0],
                        sigma2: 1e9,
                        amplitude: 1.0,
                        radius: 10.0,
                    },
                )],
            },
            cutoff: None,
        };
        let mut s = Solver::new(
            grid,
            SolverSettings::default(),
            &Reaction::Local(spec),
            &SourceTerm::None,
            0.0,
            0.01,
            &u0,
            &u1,
        )
        .unwrap();
        let out = s.run_to(0.5, &[0.5], None).unwrap();
        let v = out.snapshots[0].field.at(30, 30).re;
        assert!((v - cos(0.5)).abs() < 1e-6, "{v}");
    }

    #[test]
    fn whole_steps_required() {
        let cfg = small_config(FieldKind::Real, Scheme::HighOrder);
        let t = cfg.probe.t_exit;
        let mut s =
            Solver::<f64>::from_probe(&cfg, &Reaction::None, &SourceTerm::None, t, Start::Exact)
                .unwrap();
        let bad = t - 0.3 * s.dt();
        assert!(matches!(
            s.run_to(bad, &[], None),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn backward_propagation_undoes_forward() {
        let cfg = small_config(FieldKind::Real, Scheme::HighOrder);
        let start = Solver::<f64>::from_probe(
            &cfg,
            &Reaction::None,
            &SourceTerm::None,
            cfg.probe.t_exit,
            Start::Exact,
        )
        .unwrap();
        let initial = start.field();
        let t0 = start.time();
        let end = exit_state(&cfg, &Reaction::None).unwrap();
        let back = propagate_free(&end, t0).unwrap();
        let d = back.sub(&initial).unwrap().max_abs();
        assert!(d < 1e-9, "{d}");
    }
}
