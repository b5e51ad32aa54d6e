//! JSON experiment configuration.
//!
//! The file mirrors [`ExperimentConfig`] plus the capture times and an
//! optional recovery block. Conversion validates against the core model.

use nlwave_core::model::{
    Boundary, Cutoff, Envelope, ExperimentConfig, FieldKind, Grid2D, NonlinearitySpec, ProbeSpec,
    Profile, ScalarFn, Scheme, Variant, Warning,
};
use nlwave_core::recon::{Frame, RecoveryMode, RecoveryTask};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Margin added around `T + δ` by the enlarged lab domain.
pub const DOMAIN_MARGIN: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub grid: GridSpec,
    pub probe: ProbeDto,
    pub nonlinearity: NonlinearityDto,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    #[serde(default)]
    pub boundary: BoundaryDto,
    #[serde(default)]
    pub scheme: SchemeDto,
    /// Times at which `simulate` writes the field; empty means `[T]`.
    #[serde(default)]
    pub captures: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recovery: Option<RecoveryDto>,
}

fn default_cfl() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GridSpec {
    /// `n x n` nodes on `[-L, L]²` with `L = T + δ + 0.2`.
    Enlarged { n: usize },
    Explicit {
        nx: usize,
        ny: usize,
        x_min: f64,
        x_max: f64,
        y_min: f64,
        y_max: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KindDto {
    Real,
    Complex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeDto {
    pub h: f64,
    /// Direction angle `θ`, `ω = (cos θ, sin θ)`.
    #[serde(default = "default_angle")]
    pub angle: f64,
    pub envelope: EnvelopeDto,
    pub t_exit: f64,
    pub kind: KindDto,
}

fn default_angle() -> f64 {
    std::f64::consts::FRAC_PI_2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EnvelopeDto {
    Gaussian { width2: f64, amplitude: f64 },
    Bump { delta: f64, amplitude: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProfileDto {
    Zero,
    Gaussian {
        center: [f64; 2],
        sigma2: f64,
        amplitude: f64,
        radius: f64,
    },
    Sum {
        parts: Vec<ProfileDto>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScalarFnDto {
    /// `Σ c_i p^i`.
    Poly { coeffs: Vec<f64> },
    Tabulated {
        x0: f64,
        step: f64,
        values: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonomialDto {
    pub degree: u32,
    pub alpha: ProfileDto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddTermDto {
    pub alpha: ProfileDto,
    pub g: ScalarFnDto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum VariantDto {
    Zero,
    OddSeparated { alpha: ProfileDto, f0: ScalarFnDto },
    Polynomial { terms: Vec<MonomialDto> },
    OddGeneral { terms: Vec<OddTermDto> },
    General { alpha: ProfileDto, f: ScalarFnDto },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CutoffDto {
    /// `ρ = (2K)²` from the probe amplitude.
    #[default]
    Auto,
    Off,
    Rho {
        rho: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonlinearityDto {
    #[serde(flatten)]
    pub variant: VariantDto,
    #[serde(default)]
    pub cutoff: CutoffDto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryDto {
    #[default]
    Dirichlet,
    PeriodicX,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeDto {
    Standard,
    #[default]
    HighOrder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ModeDto {
    ComplexOdd,
    RealOddCheb,
    RealOddAbel,
    PolyTop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryDto {
    pub mode: ModeDto,
    #[serde(default = "default_angles")]
    pub n_angles: usize,
    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    /// Top degree for `poly_top`.
    #[serde(default = "default_top")]
    pub top_degree: u32,
    #[serde(default = "default_p_points")]
    pub p_points: usize,
    #[serde(default = "default_image_n")]
    pub image_n: usize,
    #[serde(default = "default_image_half")]
    pub image_half: f64,
    #[serde(default = "default_metric_radius")]
    pub metric_radius: f64,
    #[serde(default = "default_true")]
    pub refocus: bool,
    /// Half-width of the periodic simulation frame.
    #[serde(default = "default_frame_half_width")]
    pub frame_half_width: f64,
}

fn default_angles() -> usize {
    180
}
fn default_levels() -> usize {
    33
}
fn default_k_max() -> usize {
    nlwave_core::cheb::DEFAULT_K_MAX
}
fn default_top() -> u32 {
    3
}
fn default_p_points() -> usize {
    16
}
fn default_image_n() -> usize {
    101
}
fn default_image_half() -> f64 {
    0.5
}
fn default_metric_radius() -> f64 {
    0.25
}
fn default_true() -> bool {
    true
}
fn default_frame_half_width() -> f64 {
    0.65
}

impl RecoveryDto {
    pub fn new(mode: ModeDto) -> Self {
        RecoveryDto {
            mode,
            n_angles: default_angles(),
            levels: default_levels(),
            k_max: default_k_max(),
            top_degree: default_top(),
            p_points: default_p_points(),
            image_n: default_image_n(),
            image_half: default_image_half(),
            metric_radius: default_metric_radius(),
            refocus: true,
            frame_half_width: default_frame_half_width(),
        }
    }

    pub fn recovery_mode(&self) -> RecoveryMode {
        match self.mode {
            ModeDto::ComplexOdd => RecoveryMode::ComplexOdd,
            ModeDto::RealOddCheb => RecoveryMode::RealOddCheb,
            ModeDto::RealOddAbel => RecoveryMode::RealOddAbel,
            ModeDto::PolyTop => RecoveryMode::PolyTop { m: self.top_degree },
        }
    }

    pub fn task(&self, truth: Option<NonlinearitySpec>) -> Result<RecoveryTask, CliError> {
        let mut task = RecoveryTask::new(self.recovery_mode());
        task.n_angles = self.n_angles;
        task.levels = self.levels;
        task.k_max = self.k_max;
        task.p_points = self.p_points;
        task.image = Grid2D::square(self.image_n, self.image_half)?;
        task.metric_radius = self.metric_radius;
        task.truth = truth;
        Ok(task)
    }
}

impl From<EnvelopeDto> for Envelope {
    fn from(e: EnvelopeDto) -> Self {
        match e {
            EnvelopeDto::Gaussian { width2, amplitude } => Envelope::Gaussian { width2, amplitude },
            EnvelopeDto::Bump { delta, amplitude } => Envelope::Bump { delta, amplitude },
        }
    }
}

impl From<&ProfileDto> for Profile {
    fn from(p: &ProfileDto) -> Self {
        match p {
            ProfileDto::Zero => Profile::Zero,
            &ProfileDto::Gaussian {
                center,
                sigma2,
                amplitude,
                radius,
            } => Profile::Gaussian {
                center,
                sigma2,
                amplitude,
                radius,
            },
            ProfileDto::Sum { parts } => Profile::Sum(parts.iter().map(Profile::from).collect()),
        }
    }
}

impl From<&ScalarFnDto> for ScalarFn {
    fn from(f: &ScalarFnDto) -> Self {
        match f {
            ScalarFnDto::Poly { coeffs } => ScalarFn::Poly(coeffs.clone()),
            ScalarFnDto::Tabulated { x0, step, values } => ScalarFn::Tabulated {
                x0: *x0,
                step: *step,
                values: values.clone(),
            },
        }
    }
}

impl From<&VariantDto> for Variant {
    fn from(v: &VariantDto) -> Self {
        match v {
            VariantDto::Zero => Variant::Zero,
            VariantDto::OddSeparated { alpha, f0 } => Variant::OddSeparated {
                alpha: alpha.into(),
                f0: f0.into(),
            },
            VariantDto::Polynomial { terms } => Variant::Polynomial {
                terms: terms
                    .iter()
                    .map(|t| (t.degree, (&t.alpha).into()))
                    .collect(),
            },
            VariantDto::OddGeneral { terms } => Variant::OddGeneral {
                terms: terms
                    .iter()
                    .map(|t| ((&t.alpha).into(), (&t.g).into()))
                    .collect(),
            },
            VariantDto::General { alpha, f } => Variant::General {
                alpha: alpha.into(),
                f: f.into(),
            },
        }
    }
}

impl ConfigFile {
    pub fn envelope(&self) -> Envelope {
        self.probe.envelope.into()
    }

    pub fn field_kind(&self) -> FieldKind {
        match self.probe.kind {
            KindDto::Real => FieldKind::Real,
            KindDto::Complex => FieldKind::Complex,
        }
    }

    pub fn nonlinearity(&self) -> NonlinearitySpec {
        let variant = Variant::from(&self.nonlinearity.variant);
        let cutoff = match self.nonlinearity.cutoff {
            CutoffDto::Auto => Some(Cutoff::for_amplitude(self.envelope().amplitude())),
            CutoffDto::Off => None,
            CutoffDto::Rho { rho } => Some(Cutoff { rho }),
        };
        NonlinearitySpec { variant, cutoff }
    }

    /// Half-width `T + δ + 0.2` of the enlarged lab domain.
    pub fn enlarged_half_width(&self) -> f64 {
        self.probe.t_exit + self.envelope().half_support() + DOMAIN_MARGIN
    }

    pub fn grid(&self) -> Result<Grid2D, CliError> {
        Ok(match self.grid {
            GridSpec::Enlarged { n } => Grid2D::square(n, self.enlarged_half_width())?,
            GridSpec::Explicit {
                nx,
                ny,
                x_min,
                x_max,
                y_min,
                y_max,
            } => Grid2D::new(nx, ny, x_min, x_max, y_min, y_max)?,
        })
    }

    /// The validated core configuration and its warnings.
    pub fn experiment(&self) -> Result<(ExperimentConfig, Vec<Warning>), CliError> {
        let nonlinearity = self.nonlinearity();
        let probe = ProbeSpec::new(
            self.probe.h,
            [0.0, 1.0],
            self.envelope(),
            self.probe.t_exit,
            self.field_kind(),
            nonlinearity.support_radius(),
        )
        .with_angle(self.probe.angle);
        let config = ExperimentConfig {
            grid: self.grid()?,
            probe,
            nonlinearity,
            cfl: self.cfl,
            boundary: match self.boundary {
                BoundaryDto::Dirichlet => Boundary::Dirichlet,
                BoundaryDto::PeriodicX => Boundary::PeriodicX,
            },
            scheme: match self.scheme {
                SchemeDto::Standard => Scheme::Standard,
                SchemeDto::HighOrder => Scheme::HighOrder,
            },
        };
        let warnings = config.validate()?;
        Ok((config, warnings))
    }

    /// The per-angle simulation frame of the recovery pipeline: same `h`,
    /// spacing, envelope, exit time and scheme as the lab configuration.
    pub fn frame(&self, recovery: &RecoveryDto) -> Result<Frame, CliError> {
        let (config, _) = self.experiment()?;
        Ok(Frame {
            h: config.probe.h,
            dx: config.grid.dx(),
            cfl: config.cfl,
            scheme: config.scheme,
            t_exit: config.probe.t_exit,
            chi: config.probe.chi,
            field_kind: config.probe.field_kind,
            half_width: recovery.frame_half_width,
            refocus: recovery.refocus,
        })
    }

    pub fn capture_times(&self) -> Vec<f64> {
        if self.captures.is_empty() {
            vec![self.probe.t_exit]
        } else {
            self.captures.clone()
        }
    }

    /// SHA-256 of the canonical JSON form (object keys sorted).
    pub fn hash(&self) -> String {
        let value = serde_json::to_value(self).expect("configuration serializes");
        let bytes = serde_json::to_vec(&value).expect("value serializes");
        Sha256::digest(&bytes)
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let config: ConfigFile = serde_json::from_str(&text)?;
        config.experiment()?;
        Ok(config)
    }
}
