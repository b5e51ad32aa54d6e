//! The `nlwave` command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nlwave_core::fdtd::{run_experiment, run_linear};
use nlwave_core::harmonics::{extract_ak_band, extract_ak_debiased, WindowSpec};
use nlwave_core::model::Grid2D;
use nlwave_core::oracle::{
    predict_complex_odd, predict_general_nonodd, predict_polynomial_top, predict_quadratic,
    predict_real_odd, HarmonicLadder,
};
use nlwave_core::recon::{self, RecoveredNonlinearity};
use nlwave_core::xray::{radon_forward, radon_invert};
use serde_json::json;

use crate::config::{ConfigFile, ModeDto, RecoveryDto};
use crate::error::CliError;
use crate::io::{self, Axis, OutDir, TraceFile};
use crate::presets::{preset, PresetName, Scale};

#[derive(Debug, Parser)]
#[command(
    name = "nlwave",
    version,
    about = "Probe semilinear waves and recover the nonlinearity"
)]
pub struct Cli {
    /// Directory receiving all outputs.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "NLWAVE_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the FDTD solver and write the captured fields.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Run with the nonlinearity switched off.
        #[arg(long)]
        linear: bool,
    },
    /// Write the geometric-optics prediction of the exit wave.
    Oracle {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        mode: OracleMode,
        #[arg(long, default_value_t = nlwave_core::cheb::DEFAULT_K_MAX)]
        k_max: usize,
    },
    /// Harmonic coefficient `A_k` of `trace - linear` at `σ`.
    Extract {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        linear: PathBuf,
        #[arg(long)]
        k: usize,
        /// Center of the window (default: the exit time).
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// X-ray transform and its inverse.
    Radon {
        #[command(subcommand)]
        op: RadonOp,
    },
    /// Full pipeline: simulate all angles, extract, invert.
    Recover {
        #[arg(long, value_enum)]
        mode: ModeDto,
        #[arg(long)]
        config: PathBuf,
        /// Overrides the number of angles of the configuration.
        #[arg(long)]
        angles: Option<usize>,
    },
    /// Write a preset configuration file.
    Preset {
        #[arg(long, value_enum)]
        name: PresetName,
        #[arg(long, value_enum, default_value_t = Scale::Desk)]
        scale: Scale,
    },
    /// CSV cross-section of a field.
    Crosscut {
        #[arg(long)]
        field: PathBuf,
        /// `y` cuts vertically at `x = at`, `x` horizontally at `y = at`.
        #[arg(long, value_enum)]
        axis: Axis,
        #[arg(long)]
        at: f64,
    },
}

#[derive(Debug, Subcommand)]
pub enum RadonOp {
    Forward {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: String,
        #[arg(long, default_value_t = 180)]
        angles: usize,
        /// Default: one offset per grid column, plus one.
        #[arg(long)]
        offsets: Option<usize>,
        /// Offsets span `[-l, l]` (default: half the grid diagonal).
        #[arg(long)]
        l: Option<f64>,
    },
    Invert {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: String,
        /// Nodes per side of the square reconstruction grid.
        #[arg(long, default_value_t = 201)]
        n: usize,
        /// Half-width of the reconstruction grid (default: `l/√2`).
        #[arg(long)]
        half: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum OracleMode {
    ComplexOdd,
    RealOdd,
    Quadratic,
    PolyTop,
    General,
}

/// Parses `args` and runs; returns the process exit code. Errors go to
/// stderr as one JSON object.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let err = CliError::Usage(
                e.to_string()
                    .trim()
                    .trim_start_matches("error: ")
                    .to_string(),
            );
            eprintln!("{}", err.to_json());
            return err.exit_code();
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("{}", err.to_json());
            err.exit_code()
        }
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be positive".into()));
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let mut out = OutDir::create(&cli.out_dir)?;
    match &cli.command {
        Command::Simulate { config, linear } => simulate(&mut out, config, *linear),
        Command::Oracle {
            config,
            mode,
            k_max,
        } => oracle(&mut out, config, *mode, *k_max),
        Command::Extract {
            trace,
            linear,
            k,
            sigma,
        } => extract(&mut out, trace, linear, *k, *sigma),
        Command::Radon { op } => radon(&mut out, op),
        Command::Recover {
            mode,
            config,
            angles,
        } => recover(&mut out, config, *mode, *angles),
        Command::Preset { name, scale } => {
            let c = preset(*name, *scale);
            let file = format!("{}.json", name.as_str());
            let path = out.json(&file, &c)?;
            out.manifest(
                "preset",
                Some(c.hash()),
                json!({ "name": name.as_str(), "scale": scale }),
            )?;
            println!("{}", path.display());
            Ok(())
        }
        Command::Crosscut { field, axis, at } => {
            let (f, _) = io::read_field(field)?;
            let rows = io::crosscut(&f, *axis, *at);
            let name = match axis {
                Axis::X => "crosscut_x.csv",
                Axis::Y => "crosscut_y.csv",
            };
            let coord = match axis {
                Axis::X => "x",
                Axis::Y => "y",
            };
            out.csv(name, &[coord, "re", "im"], &rows)?;
            out.manifest(
                "crosscut",
                None,
                json!({ "field": field, "axis": coord, "at": at }),
            )
        }
    }
}

fn simulate(out: &mut OutDir, path: &Path, linear: bool) -> Result<(), CliError> {
    let file = ConfigFile::load(path)?;
    let (config, warnings) = file.experiment()?;
    for w in &warnings {
        eprintln!("warning: {w:?}");
    }
    let captures = file.capture_times();
    let run = if linear {
        run_linear(&config, &captures)?
    } else {
        run_experiment(&config, &captures)?
    };
    let prefix = if linear { "u_linear" } else { "u" };
    for (n, snap) in run.snapshots.iter().enumerate() {
        out.field(&format!("{prefix}_{n}"), &snap.field, Some(snap.t))?;
    }
    let times: Vec<f64> = run.snapshots.iter().map(|s| s.t).collect();
    out.manifest(
        "simulate",
        Some(file.hash()),
        json!({
            "linear": linear,
            "times": times,
            "dt": run.dt,
            "steps": run.steps,
            "cutoff_engaged": run.cutoff_engaged,
            "points_per_wavelength": config.points_per_wavelength(),
        }),
    )
}

fn write_ladder(out: &mut OutDir, ladder: &HarmonicLadder) -> Result<(), CliError> {
    for (k, f) in &ladder.a0 {
        out.field(&format!("a0_k{k}"), f, Some(ladder.t))?;
    }
    for (k, f) in &ladder.a1 {
        out.field(&format!("a1_k{k}"), f, Some(ladder.t))?;
    }
    if let Some(f) = &ladder.u0_zero {
        out.field("u0_zero", f, Some(ladder.t))?;
    }
    if let Some(f) = &ladder.u1_zero {
        out.field("u1_zero", f, Some(ladder.t))?;
    }
    out.field("exit_field", &ladder.exit_field(), Some(ladder.t))?;
    let rows: Vec<Vec<f64>> = ladder
        .subprincipal_maxima()
        .into_iter()
        .map(|(k, m)| vec![k as f64, m])
        .collect();
    out.csv("subprincipal_maxima.csv", &["k", "max_abs_a1"], &rows)?;
    Ok(())
}

fn oracle(out: &mut OutDir, path: &Path, mode: OracleMode, k_max: usize) -> Result<(), CliError> {
    let file = ConfigFile::load(path)?;
    let (config, _) = file.experiment()?;
    let t = config.probe.t_exit;
    match mode {
        OracleMode::ComplexOdd => {
            out.field("exit_field", &predict_complex_odd(&config)?, Some(t))?;
        }
        OracleMode::PolyTop => {
            out.field("top_harmonic", &predict_polynomial_top(&config)?, Some(t))?;
        }
        OracleMode::RealOdd => write_ladder(out, &predict_real_odd(&config, k_max)?)?,
        OracleMode::Quadratic => write_ladder(out, &predict_quadratic(&config)?)?,
        OracleMode::General => write_ladder(out, &predict_general_nonodd(&config, k_max)?)?,
    }
    let mode_name = mode.to_possible_value().map(|v| v.get_name().to_string());
    out.manifest(
        "oracle",
        Some(file.hash()),
        json!({ "mode": mode_name, "k_max": k_max }),
    )
}

fn extract(
    out: &mut OutDir,
    trace: &Path,
    linear: &Path,
    k: usize,
    sigma: Option<f64>,
) -> Result<(), CliError> {
    let t: TraceFile = io::read_json(trace)?;
    let l: TraceFile = io::read_json(linear)?;
    let (t, l) = (t.to_trace()?, l.to_trace()?);
    let sigma = sigma.unwrap_or(t.t_exit);
    let window = extract_ak_debiased(&t, &l, k, &WindowSpec::kaiser(sigma))?;
    let band = extract_ak_band(&t, &l, k, sigma)?;
    println!(
        "{}",
        json!({ "k": k, "sigma": sigma, "a_k": window, "a_k_band": band })
    );
    out.csv(
        "extract.csv",
        &["k", "sigma", "a_k", "a_k_band"],
        &[vec![k as f64, sigma, window, band]],
    )?;
    out.manifest(
        "extract",
        None,
        json!({ "trace": trace, "linear": linear, "k": k, "sigma": sigma }),
    )
}

fn radon(out: &mut OutDir, op: &RadonOp) -> Result<(), CliError> {
    match op {
        RadonOp::Forward {
            input,
            out: name,
            angles,
            offsets,
            l,
        } => {
            let (f, _) = io::read_field(input)?;
            let g = f.grid;
            let l = l.unwrap_or_else(|| {
                let (x, y) = (
                    g.x_min.abs().max(g.x_max.abs()),
                    g.y_min.abs().max(g.y_max.abs()),
                );
                (x * x + y * y).sqrt()
            });
            let n_offsets = offsets.unwrap_or(g.nx.max(g.ny) + 1);
            let sino = radon_forward(&f, *angles, n_offsets, l)?;
            out.sinogram(name, &sino)?;
            out.manifest(
                "radon forward",
                None,
                json!({ "in": input, "angles": angles, "offsets": n_offsets, "l": l }),
            )
        }
        RadonOp::Invert {
            input,
            out: name,
            n,
            half,
        } => {
            let sino = io::read_sinogram(input)?;
            let half = half.unwrap_or(sino.l / std::f64::consts::SQRT_2);
            let grid = Grid2D::square(*n, half)?;
            out.field(name, &radon_invert(&sino, &grid)?, None)?;
            out.manifest(
                "radon invert",
                None,
                json!({ "in": input, "n": n, "half": half }),
            )
        }
    }
}

fn recover(
    out: &mut OutDir,
    path: &Path,
    mode: ModeDto,
    angles: Option<usize>,
) -> Result<(), CliError> {
    let file = ConfigFile::load(path)?;
    let mut dto = file
        .recovery
        .clone()
        .unwrap_or_else(|| RecoveryDto::new(mode));
    dto.mode = mode;
    if let Some(n) = angles {
        dto.n_angles = n;
    }
    let frame = file.frame(&dto)?;
    let truth = file.nonlinearity();
    let task = dto.task(Some(truth.clone()))?;
    let rec = recon::recover(&frame, &truth, &task)?;
    write_recovery(out, &rec)?;
    let params = json!({
        "n_angles": dto.n_angles,
        "levels": dto.levels,
        "k_max": dto.k_max,
        "top_degree": dto.top_degree,
        "refocus": dto.refocus,
        "frame_half_width": dto.frame_half_width,
        "image_n": dto.image_n,
        "image_half": dto.image_half,
        "metric_radius": dto.metric_radius,
        "h": frame.h,
        "dx": frame.dx,
        "config_hash": file.hash(),
    });
    let mode_name = mode.to_possible_value().map(|v| v.get_name().to_string());
    let metrics = rec.metrics;
    out.json(
        "metrics.json",
        &json!({
            "mode": mode_name,
            "rel_l2": metrics.map(|m| m.rel_l2),
            "max_err": metrics.map(|m| m.max_err),
            "params": params,
        }),
    )?;
    out.manifest("recover", Some(file.hash()), params)
}

fn write_recovery(out: &mut OutDir, rec: &RecoveredNonlinearity) -> Result<(), CliError> {
    if let Some(a) = &rec.alpha {
        out.field("alpha", a, None)?;
    }
    for (k, g) in &rec.gammas {
        out.field(&format!("gamma_k{k}"), g, None)?;
    }
    for (n, (_, f)) in rec.f0.iter().enumerate() {
        out.field(&format!("f0_{n}"), f, None)?;
    }
    if !rec.f0.is_empty() {
        // p-profiles at the image center and at the node of largest |f0| on the top slice
        let g = rec.image;
        let center = (g.nx / 2, g.ny / 2);
        let top = rec.f0.last().map(|(_, f)| f).expect("nonempty");
        let peak = (0..g.len())
            .max_by(|a, b| {
                top.at(a % g.nx, a / g.nx)
                    .re
                    .abs()
                    .total_cmp(&top.at(b % g.nx, b / g.nx).re.abs())
            })
            .map(|n| (n % g.nx, n / g.nx))
            .unwrap_or(center);
        let rows: Vec<Vec<f64>> = rec
            .f0
            .iter()
            .map(|(p, f)| vec![*p, f.at(center.0, center.1).re, f.at(peak.0, peak.1).re])
            .collect();
        out.csv("f0_profiles.csv", &["p", "f0_center", "f0_peak"], &rows)?;
        let slices: Vec<Vec<f64>> = rec
            .f0
            .iter()
            .enumerate()
            .map(|(n, (p, _))| vec![n as f64, *p])
            .collect();
        out.csv("f0_slices.csv", &["index", "p"], &slices)?;
    }
    Ok(())
}
