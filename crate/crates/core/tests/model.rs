use nlwave_core::model::*;
use nlwave_core::Error;
use proptest::prelude::*;

fn lab_grid() -> Grid2D {
    Grid2D::square(129, 2.0).unwrap()
}

#[test]
fn real_cauchy_velocity_matches_time_derivative() {
    let probe = ProbeSpec::new(
        0.05,
        [0.6, 0.8],
        Envelope::STANDARD,
        1.4,
        FieldKind::Real,
        0.5,
    );
    let grid = lab_grid();
    let t0 = probe.t_start;
    let eps = 1e-6;
    let (_, ut) = cauchy_data(&probe, &grid, t0, None).unwrap();
    let (a, _) = cauchy_data(&probe, &grid, t0 + eps, None).unwrap();
    let (b, _) = cauchy_data(&probe, &grid, t0 - eps, None).unwrap();
    let (a, b, ut) = (a.real().unwrap(), b.real().unwrap(), ut.real().unwrap());
    let scale = 1.0 / probe.h;
    for n in 0..grid.len() {
        let fd = (a[n] - b[n]) / (2.0 * eps);
        assert!((fd - ut[n]).abs() < 1e-5 * scale, "{fd} vs {}", ut[n]);
    }
}

#[test]
fn complex_cauchy_data_is_a_plane_wave() {
    let probe = ProbeSpec::new(
        0.05,
        [0.0, 1.0],
        Envelope::STANDARD,
        1.4,
        FieldKind::Complex,
        0.5,
    );
    let grid = lab_grid();
    let (u, _) = cauchy_data(&probe, &grid, 0.0, None).unwrap();
    let j = grid.ny / 2 + 3;
    let first = u.at(0, j);
    for i in 1..grid.nx {
        assert!((u.at(i, j) - first).norm() < 1e-14);
    }
    assert!((u.max_abs() - 1.0).abs() < 1e-3);
}

#[test]
fn overlapping_pulse_is_rejected() {
    let probe = ProbeSpec::new(
        0.05,
        [0.0, 1.0],
        Envelope::STANDARD,
        1.4,
        FieldKind::Real,
        0.5,
    );
    let support = Some(([0.0, 0.0], 0.5));
    let err = cauchy_data(&probe, &lab_grid(), 0.0, support).unwrap_err();
    assert!(matches!(err, Error::PulseOverlapsSupport { .. }));
    assert!(cauchy_data(&probe, &lab_grid(), probe.t_start, support).is_ok());
}

#[test]
fn coarse_grid_is_rejected() {
    let probe = ProbeSpec::new(
        0.01,
        [0.0, 1.0],
        Envelope::STANDARD,
        1.4,
        FieldKind::Real,
        0.5,
    );
    let config = ExperimentConfig {
        grid: Grid2D::square(101, 2.0).unwrap(),
        probe,
        nonlinearity: NonlinearitySpec::cubic(Profile::standard_gaussian(), 1.0),
        cfl: 0.5,
        boundary: Boundary::Dirichlet,
        scheme: Scheme::HighOrder,
    };
    assert!(matches!(config.validate(), Err(Error::GridTooCoarse(_))));
}

#[test]
fn periodic_boundary_needs_axis_probe() {
    let probe = ProbeSpec::new(
        0.05,
        [0.6, 0.8],
        Envelope::STANDARD,
        1.4,
        FieldKind::Real,
        0.5,
    );
    let config = ExperimentConfig {
        grid: Grid2D::square(257, 2.0).unwrap(),
        probe,
        nonlinearity: NonlinearitySpec::zero(),
        cfl: 0.5,
        boundary: Boundary::PeriodicX,
        scheme: Scheme::HighOrder,
    };
    assert!(matches!(config.validate(), Err(Error::InvalidConfig(_))));
}

#[test]
fn tabulated_function_follows_polynomial() {
    let f = ScalarFn::tabulate(0.0, 1.0, 41, |p| 1.5 * 3f64.sqrt() * (1.0 - p));
    let g = ScalarFn::Poly(vec![1.5 * 3f64.sqrt(), -1.5 * 3f64.sqrt()]);
    for n in 0..=20 {
        let p = n as f64 / 20.0;
        assert!((f.eval(p) - g.eval(p)).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn frame_maps_are_inverse(theta in 0.0..6.3f64, x in -2.0..2.0f64, y in -2.0..2.0f64) {
        let back = lab_to_frame(theta, frame_to_lab(theta, [x, y]));
        prop_assert!((back[0] - x).abs() < 1e-12 && (back[1] - y).abs() < 1e-12);
    }

    #[test]
    fn frame_second_axis_is_the_probe_direction(theta in 0.0..6.3f64, x in -1.0..1.0f64, y in -1.0..1.0f64) {
        let p = frame_to_lab(theta, [x, y]);
        let along = p[0] * theta.cos() + p[1] * theta.sin();
        prop_assert!((along - y).abs() < 1e-12);
    }

    #[test]
    fn rotated_profile_samples_the_lab_profile(
        theta in 0.0..3.2f64,
        cx in -0.2..0.2f64,
        cy in -0.2..0.2f64,
        x in -0.6..0.6f64,
        y in -0.6..0.6f64,
    ) {
        let alpha = Profile::Gaussian { center: [cx, cy], sigma2: 0.02, amplitude: 1.3, radius: 0.5 };
        let framed = alpha.in_frame(theta);
        let lab = alpha.eval(frame_to_lab(theta, [x, y]));
        prop_assert!((framed.eval([x, y]) - lab).abs() < 1e-12);
    }

    #[test]
    fn support_radius_is_rotation_invariant(theta in 0.0..6.3f64, cx in -0.3..0.3f64, cy in -0.3..0.3f64) {
        let alpha = Profile::Gaussian { center: [cx, cy], sigma2: 0.02, amplitude: 1.0, radius: 0.4 };
        let spec = NonlinearitySpec::cubic(alpha, 1.0);
        prop_assert!((spec.in_frame(theta).support_radius() - spec.support_radius()).abs() < 1e-12);
    }

    #[test]
    fn envelope_inverse_is_a_right_inverse(m in 1e-3..1.0f64, k in 0.5..2.0f64) {
        for chi in [Envelope::STANDARD.with_amplitude(k), Envelope::Bump { delta: 0.5, amplitude: k }] {
            let level = m * k;
            if let Some(s) = chi.inverse(level) {
                prop_assert!(s >= 0.0);
                prop_assert!((chi.eval(s) - level).abs() < 1e-10 * k);
            }
        }
    }
}
