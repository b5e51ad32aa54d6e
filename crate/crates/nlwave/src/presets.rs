//! Ready-made configurations.
//!
//! `desk`: `N = 1024`, `h = 0.01`. `paper`: `h = 0.005` on `N = 2000`
//! (`4000` for `poly5_real`). Both use the enlarged lab domain `[-L, L]²`,
//! `L = T + δ + 0.2`, which gives about 15 points per carrier wavelength
//! (30 for `poly5_real` at `paper` scale).

use serde::{Deserialize, Serialize};

use crate::config::*;

pub const T_EXIT: f64 = 1.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum PresetName {
    FigSetup,
    CubicComplex,
    SepComplex,
    CubicReal,
    Poly5Real,
    QuadraticReal,
}

impl PresetName {
    pub const ALL: [PresetName; 6] = [
        PresetName::FigSetup,
        PresetName::CubicComplex,
        PresetName::SepComplex,
        PresetName::CubicReal,
        PresetName::Poly5Real,
        PresetName::QuadraticReal,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PresetName::FigSetup => "fig_setup",
            PresetName::CubicComplex => "cubic_complex",
            PresetName::SepComplex => "sep_complex",
            PresetName::CubicReal => "cubic_real",
            PresetName::Poly5Real => "poly5_real",
            PresetName::QuadraticReal => "quadratic_real",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Desk,
    Paper,
}

fn gaussian_alpha() -> ProfileDto {
    ProfileDto::Gaussian {
        center: [0.0, 0.0],
        sigma2: 0.02,
        amplitude: 1.0,
        radius: 0.5,
    }
}

fn poly(coeffs: &[f64]) -> ScalarFnDto {
    ScalarFnDto::Poly {
        coeffs: coeffs.to_vec(),
    }
}

pub fn preset(name: PresetName, scale: Scale) -> ConfigFile {
    let (h, n) = match (scale, name) {
        (Scale::Desk, _) => (0.01, 1024),
        (Scale::Paper, PresetName::Poly5Real) => (0.005, 4000),
        (Scale::Paper, _) => (0.005, 2000),
    };
    let kind = match name {
        PresetName::FigSetup | PresetName::CubicComplex | PresetName::SepComplex => {
            KindDto::Complex
        }
        _ => KindDto::Real,
    };
    let cubic = VariantDto::OddSeparated {
        alpha: gaussian_alpha(),
        f0: poly(&[0.0, 1.0]),
    };
    let variant = match name {
        PresetName::FigSetup | PresetName::CubicComplex | PresetName::CubicReal => cubic,
        PresetName::SepComplex => {
            let c = 1.5 * 3f64.sqrt();
            VariantDto::OddSeparated {
                alpha: gaussian_alpha(),
                f0: poly(&[c, -c]),
            }
        }
        PresetName::Poly5Real => VariantDto::OddSeparated {
            alpha: gaussian_alpha(),
            f0: poly(&[1.0, -1.9]),
        },
        PresetName::QuadraticReal => VariantDto::Polynomial {
            terms: vec![MonomialDto {
                degree: 2,
                alpha: gaussian_alpha(),
            }],
        },
    };
    let recovery = match name {
        PresetName::FigSetup => None,
        PresetName::CubicComplex | PresetName::SepComplex => {
            Some(RecoveryDto::new(ModeDto::ComplexOdd))
        }
        PresetName::CubicReal | PresetName::Poly5Real => {
            Some(RecoveryDto::new(ModeDto::RealOddCheb))
        }
        PresetName::QuadraticReal => {
            let mut r = RecoveryDto::new(ModeDto::PolyTop);
            r.top_degree = 2;
            // the zeroth harmonic spreads sideways
            r.frame_half_width = 1.25;
            Some(r)
        }
    };
    let captures = match name {
        PresetName::FigSetup => vec![0.0, T_EXIT],
        _ => Vec::new(),
    };
    ConfigFile {
        name: Some(name.as_str().into()),
        grid: GridSpec::Enlarged { n },
        probe: ProbeDto {
            h,
            angle: std::f64::consts::FRAC_PI_2,
            envelope: EnvelopeDto::Gaussian {
                width2: 0.02,
                amplitude: 1.0,
            },
            t_exit: T_EXIT,
            kind,
        },
        nonlinearity: NonlinearityDto {
            variant,
            cutoff: CutoffDto::Auto,
        },
        cfl: 0.5,
        boundary: BoundaryDto::Dirichlet,
        scheme: SchemeDto::HighOrder,
        captures,
        recovery,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate() {
        for name in PresetName::ALL {
            for scale in [Scale::Desk, Scale::Paper] {
                let c = preset(name, scale);
                let (cfg, _) = c.experiment().unwrap();
                let ppw = cfg.points_per_wavelength();
                assert!(ppw > 14.0, "{name:?} {scale:?}: {ppw}");
            }
        }
    }

    #[test]
    fn paper_and_desk_scales() {
        let p = preset(PresetName::CubicReal, Scale::Paper);
        assert_eq!(p.probe.h, 0.005);
        assert_eq!(p.grid, GridSpec::Enlarged { n: 2000 });
        assert_eq!(p.probe.t_exit, 1.4);
        let d = preset(PresetName::CubicReal, Scale::Desk);
        assert_eq!(d.probe.h, 0.01);
        assert_eq!(d.grid, GridSpec::Enlarged { n: 1024 });
        assert_eq!(d.nonlinearity, p.nonlinearity);
    }
}
