//! On-disk formats.
//!
//! Fields and sinograms are raw little-endian `f64` arrays (`<stem>.bin`,
//! complex samples interleaved as `re, im`) next to a JSON header
//! (`<stem>.json`). Every command also writes `manifest.json` with the
//! configuration hash and the list of produced files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nlwave_core::harmonics::ExitTrace;
use nlwave_core::model::{FieldData, FieldKind, Grid2D, ScalarField2D};
use nlwave_core::xray::Sinogram;
use nlwave_core::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const FIELD_FORMAT: &str = "nlwave-field";
pub const SINOGRAM_FORMAT: &str = "nlwave-sinogram";
pub const TRACE_FORMAT: &str = "nlwave-trace";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub format: String,
    pub kind: String,
    pub nx: usize,
    pub ny: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinogramHeader {
    pub format: String,
    pub n_angles: usize,
    pub n_offsets: usize,
    pub l: f64,
}

/// A measurement line: samples at `s0 + n·ds` of the field on one line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFile {
    pub format: String,
    pub h: f64,
    pub t_exit: f64,
    pub s0: f64,
    pub ds: f64,
    /// Half-width of the pulse band.
    pub delta: f64,
    pub values: Vec<f64>,
}

impl TraceFile {
    pub fn from_trace(t: &ExitTrace) -> Self {
        TraceFile {
            format: TRACE_FORMAT.into(),
            h: t.h,
            t_exit: t.t_exit,
            s0: t.s0,
            ds: t.ds,
            delta: t.delta,
            values: t.values.clone(),
        }
    }

    pub fn to_trace(&self) -> Result<ExitTrace, CliError> {
        if self.format != TRACE_FORMAT {
            return Err(CliError::Format(format!(
                "expected {TRACE_FORMAT}, found {}",
                self.format
            )));
        }
        let trace = ExitTrace {
            s0: self.s0,
            ds: self.ds,
            values: self.values.clone(),
            h: self.h,
            omega: [0.0, 1.0],
            t_exit: self.t_exit,
            delta: self.delta,
        };
        trace.validate()?;
        Ok(trace)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: Option<String>,
    pub version: String,
    pub outputs: Vec<String>,
    pub params: serde_json::Value,
}

/// Collects the files written by one command.
#[derive(Debug)]
pub struct OutDir {
    pub root: PathBuf,
    pub written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(OutDir {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn note(&mut self, name: String) {
        if !self.written.contains(&name) {
            self.written.push(name);
        }
    }

    pub fn field(
        &mut self,
        stem: &str,
        field: &ScalarField2D,
        time: Option<f64>,
    ) -> Result<PathBuf, CliError> {
        let p = write_field(&self.root.join(stem), field, time)?;
        self.note(format!("{stem}.bin"));
        self.note(format!("{stem}.json"));
        Ok(p)
    }

    pub fn sinogram(&mut self, stem: &str, sino: &Sinogram) -> Result<PathBuf, CliError> {
        let p = write_sinogram(&self.root.join(stem), sino)?;
        self.note(format!("{stem}.bin"));
        self.note(format!("{stem}.json"));
        Ok(p)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let path = self.root.join(name);
        write_json(&path, value)?;
        self.note(name.into());
        Ok(path)
    }

    pub fn csv(
        &mut self,
        name: &str,
        header: &[&str],
        rows: &[Vec<f64>],
    ) -> Result<PathBuf, CliError> {
        let path = self.root.join(name);
        write_csv(&path, header, rows)?;
        self.note(name.into());
        Ok(path)
    }

    pub fn manifest(
        &mut self,
        command: &str,
        config_hash: Option<String>,
        params: serde_json::Value,
    ) -> Result<(), CliError> {
        let m = Manifest {
            command: command.into(),
            config_hash,
            version: env!("CARGO_PKG_VERSION").into(),
            outputs: self.written.clone(),
            params,
        };
        write_json(&self.root.join("manifest.json"), &m)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Accepts `<stem>`, `<stem>.bin` or `<stem>.json` and returns `<stem>`.
pub fn stem_of(path: &Path) -> PathBuf {
    match path.extension().and_then(|e| e.to_str()) {
        Some("bin") | Some("json") => path.with_extension(""),
        _ => path.to_path_buf(),
    }
}

fn write_f64s(path: &Path, values: impl Iterator<Item = f64>) -> Result<(), CliError> {
    let mut bytes = Vec::new();
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn read_f64s(path: &Path, expected: usize) -> Result<Vec<f64>, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    if bytes.len() != expected * 8 {
        return Err(CliError::Format(format!(
            "{}: {} bytes, expected {}",
            path.display(),
            bytes.len(),
            expected * 8
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

/// Writes `<stem>.bin` and `<stem>.json`; returns the `.bin` path.
pub fn write_field(
    stem: &Path,
    field: &ScalarField2D,
    time: Option<f64>,
) -> Result<PathBuf, CliError> {
    let g = field.grid;
    let kind = match field.kind() {
        FieldKind::Real => "real",
        FieldKind::Complex => "complex",
    };
    let header = FieldHeader {
        format: FIELD_FORMAT.into(),
        kind: kind.into(),
        nx: g.nx,
        ny: g.ny,
        x_min: g.x_min,
        x_max: g.x_max,
        y_min: g.y_min,
        y_max: g.y_max,
        time,
    };
    write_json(&with_ext(stem, "json"), &header)?;
    let bin = with_ext(stem, "bin");
    match &field.data {
        FieldData::Real(v) => write_f64s(&bin, v.iter().copied())?,
        FieldData::Complex(v) => write_f64s(&bin, v.iter().flat_map(|z| [z.re, z.im]))?,
    }
    Ok(bin)
}

pub fn read_field(path: &Path) -> Result<(ScalarField2D, FieldHeader), CliError> {
    let stem = stem_of(path);
    let header: FieldHeader = read_json(&with_ext(&stem, "json"))?;
    if header.format != FIELD_FORMAT {
        return Err(CliError::Format(format!(
            "expected {FIELD_FORMAT}, found {}",
            header.format
        )));
    }
    let grid = Grid2D::new(
        header.nx,
        header.ny,
        header.x_min,
        header.x_max,
        header.y_min,
        header.y_max,
    )?;
    let bin = with_ext(&stem, "bin");
    let data = match header.kind.as_str() {
        "real" => FieldData::Real(read_f64s(&bin, grid.len())?),
        "complex" => {
            let v = read_f64s(&bin, 2 * grid.len())?;
            FieldData::Complex(
                v.chunks_exact(2)
                    .map(|c| Complex64::new(c[0], c[1]))
                    .collect(),
            )
        }
        other => return Err(CliError::Format(format!("unknown field kind {other}"))),
    };
    Ok((ScalarField2D::new(grid, data)?, header))
}

pub fn write_sinogram(stem: &Path, sino: &Sinogram) -> Result<PathBuf, CliError> {
    let header = SinogramHeader {
        format: SINOGRAM_FORMAT.into(),
        n_angles: sino.n_angles,
        n_offsets: sino.n_offsets,
        l: sino.l,
    };
    write_json(&with_ext(stem, "json"), &header)?;
    let bin = with_ext(stem, "bin");
    write_f64s(&bin, sino.values.iter().copied())?;
    Ok(bin)
}

pub fn read_sinogram(path: &Path) -> Result<Sinogram, CliError> {
    let stem = stem_of(path);
    let header: SinogramHeader = read_json(&with_ext(&stem, "json"))?;
    if header.format != SINOGRAM_FORMAT {
        return Err(CliError::Format(format!(
            "expected {SINOGRAM_FORMAT}, found {}",
            header.format
        )));
    }
    let values = read_f64s(&with_ext(&stem, "bin"), header.n_angles * header.n_offsets)?;
    Ok(Sinogram {
        n_angles: header.n_angles,
        n_offsets: header.n_offsets,
        l: header.l,
        values,
    })
}

/// Plain CSV with a header line; values use the shortest round-trip format.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for r in rows {
        let line: Vec<String> = r.iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    f.write_all(out.as_bytes())
        .map_err(|e| CliError::io(path, e))
}

/// Cross-section of a field along `axis` through the node row or column
/// closest to `at`: rows of `(coordinate, re, im)`.
pub fn crosscut(field: &ScalarField2D, axis: Axis, at: f64) -> Vec<Vec<f64>> {
    let g = field.grid;
    match axis {
        Axis::Y => {
            let i = nearest(at, g.x_min, g.dx(), g.nx);
            (0..g.ny)
                .map(|j| {
                    let z = field.at(i, j);
                    vec![g.y(j), z.re, z.im]
                })
                .collect()
        }
        Axis::X => {
            let j = nearest(at, g.y_min, g.dy(), g.ny);
            (0..g.nx)
                .map(|i| {
                    let z = field.at(i, j);
                    vec![g.x(i), z.re, z.im]
                })
                .collect()
        }
    }
}

fn nearest(v: f64, lo: f64, step: f64, n: usize) -> usize {
    (((v - lo) / step).round().max(0.0) as usize).min(n - 1)
}

/// Direction of a cross-section: `y` is a vertical cut at fixed `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Axis {
    X,
    Y,
}
