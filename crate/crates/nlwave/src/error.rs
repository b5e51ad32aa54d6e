use std::path::{Path, PathBuf};

use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] nlwave_core::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("bad file format: {0}")]
    Format(String),

    #[error("usage: {0}")]
    Usage(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => core_kind(e),
            CliError::Io { .. } => "io",
            CliError::Json(_) => "json",
            CliError::Format(_) => "format",
            CliError::Usage(_) => "usage",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    /// `{"error": {"kind": ..., "message": ...}}`.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Body<'a> {
            kind: &'a str,
            message: String,
        }
        #[derive(Serialize)]
        struct Wrapper<'a> {
            error: Body<'a>,
        }
        serde_json::to_string(&Wrapper {
            error: Body {
                kind: self.kind(),
                message: self.to_string(),
            },
        })
        .unwrap_or_else(|_| String::from("{\"error\":{\"kind\":\"internal\"}}"))
    }
}

fn core_kind(e: &nlwave_core::Error) -> &'static str {
    use nlwave_core::Error::*;
    match e {
        InvalidGrid(_) => "invalid_grid",
        InvalidProbe(_) => "invalid_probe",
        InvalidConfig(_) => "invalid_config",
        PulseOverlapsSupport { .. } => "pulse_overlaps_support",
        NumericalBlowup { .. } => "numerical_blowup",
        WrongVariant(_) => "wrong_variant",
        GridTooCoarse(_) => "grid_too_coarse",
        GridMismatch => "grid_mismatch",
        KindMismatch => "kind_mismatch",
        DivisionBand => "division_band",
        EnvelopeUnderflow { .. } => "envelope_underflow",
        DomainTooSmall { .. } => "domain_too_small",
        SupportLeak => "support_leak",
        _ => "core",
    }
}
