use nlwave_core::cheb::*;
use nlwave_core::harmonics::subtract_linear;
use nlwave_core::model::*;
use nlwave_core::recon::SamplePlan;
use nlwave_core::xray::{radon_forward, radon_invert};
use proptest::prelude::*;

fn gaussian_at(c: [f64; 2], a: f64) -> Profile {
    Profile::Gaussian {
        center: c,
        sigma2: 0.02,
        amplitude: a,
        radius: 0.4,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chebyshev_coefficients_are_linear(a in -2.0..2.0f64, b in -2.0..2.0f64, m in 0.1..1.5f64) {
        let f = |p: f64| 1.0 + p;
        let g = |p: f64| p * p - 0.3 * p;
        let lhs = gamma_coeffs(|p| a * f(p) + b * g(p), m, 9, 64);
        let (cf, cg) = (gamma_coeffs(f, m, 9, 64), gamma_coeffs(g, m, 9, 64));
        for k in 0..=9 {
            prop_assert!((lhs.get(k) - a * cf.get(k) - b * cg.get(k)).abs() < 1e-12);
        }
    }

    #[test]
    fn resummation_reproduces_polynomials(
        c0 in -1.0..1.0f64,
        c1 in -1.0..1.0f64,
        c2 in -1.0..1.0f64,
        m in 0.2..1.5f64,
        q in 0.05..1.0f64,
    ) {
        let f0 = |p: f64| c0 + c1 * p + c2 * p * p;
        let coeffs = gamma_coeffs(f0, m, 9, 64);
        prop_assert!(coeffs.even_residual() < 1e-12);
        let expected = f0(m * m * q * q) * q;
        prop_assert!((gamma_resum(&coeffs, q) - expected).abs() < 1e-11);
    }

    #[test]
    fn first_coefficient_agrees_with_abel_form(c1 in -1.0..1.0f64, c2 in -1.0..1.0f64, m in 0.1..1.2f64) {
        let f0 = |p: f64| c1 * p + c2 * p * p;
        let direct = gamma_coeffs(f0, m, 3, 64).get(1);
        prop_assert!((abel_forward(f0, m, 256) - direct).abs() < 1e-10);
    }

    #[test]
    fn abel_inversion_is_linear(c in -3.0..3.0f64) {
        let base = SampledGamma1::from_fn(1.0, 128, |m| 0.75 * m * m);
        let scaled = SampledGamma1::from_fn(1.0, 128, |m| c * 0.75 * m * m);
        let q = [0.3, 0.6, 0.9];
        let (a, b) = (abel_invert(&base, &q).unwrap(), abel_invert(&scaled, &q).unwrap());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((c * x - y).abs() < 1e-9 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn monomial_expansion_sums_to_one(m in 1u32..9) {
        // T_k(1) = 1, so the coefficients of q^m sum to 1
        let s: f64 = monomial_to_cheb(m).iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-14);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn radon_transform_is_linear(a in -2.0..2.0f64, b in -2.0..2.0f64, cx in -0.2..0.2f64) {
        let grid = Grid2D::square(65, 1.0).unwrap();
        // same support for both terms, so the quadrature nodes coincide
        let narrow = Profile::Gaussian { center: [cx, 0.1], sigma2: 0.005, amplitude: 1.0, radius: 0.4 };
        let wide = gaussian_at([cx, 0.1], 1.0);
        let f = wide.sample(&grid);
        let g = narrow.sample(&grid);
        let combo = ScalarField2D::from_fn_real(grid, |x| a * wide.eval(x) + b * narrow.eval(x));
        let (sf, sg, sc) = (
            radon_forward(&f, 6, 65, 1.0).unwrap(),
            radon_forward(&g, 6, 65, 1.0).unwrap(),
            radon_forward(&combo, 6, 65, 1.0).unwrap(),
        );
        for ((x, y), z) in sf.values.iter().zip(&sg.values).zip(&sc.values) {
            prop_assert!((a * x + b * y - z).abs() < 1e-12);
        }
        let (bf, bc) = (radon_invert(&sf, &grid).unwrap(), radon_invert(&sc, &grid).unwrap());
        let back_g = radon_invert(&sg, &grid).unwrap();
        let (bf, bg, bc) = (bf.real().unwrap(), back_g.real().unwrap(), bc.real().unwrap());
        for n in 0..grid.len() {
            prop_assert!((a * bf[n] + b * bg[n] - bc[n]).abs() < 1e-10);
        }
    }

    #[test]
    fn centered_radial_function_has_identical_rows(amp in 0.1..3.0f64) {
        let grid = Grid2D::square(129, 1.0).unwrap();
        let f = gaussian_at([0.0, 0.0], amp).sample(&grid);
        let sino = radon_forward(&f, 12, 129, 1.0).unwrap();
        let peak = sino.row(0).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for j in 1..12 {
            for (x, y) in sino.row(0).iter().zip(sino.row(j)) {
                prop_assert!((x - y).abs() < 5e-3 * peak);
            }
        }
    }

    #[test]
    fn differencing_identities(a in -2.0..2.0f64, b in -2.0..2.0f64) {
        let grid = Grid2D::square(17, 1.0).unwrap();
        let f = ScalarField2D::from_fn_real(grid, |x| a * x[0] + b * x[1] * x[1]);
        let z = ScalarField2D::zeros(grid, FieldKind::Real);
        prop_assert_eq!(subtract_linear(&f, &f).unwrap().max_abs(), 0.0);
        prop_assert_eq!(subtract_linear(&f, &z).unwrap(), f.clone());
        let g = ScalarField2D::from_fn_real(grid, |x| b * x[0]);
        let lhs = subtract_linear(&f, &g).unwrap();
        let rhs = ScalarField2D::from_fn_real(grid, |x| a * x[0] + b * x[1] * x[1] - b * x[0]);
        prop_assert!(lhs.sub(&rhs).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn merged_plans_cover_both(k1 in 1usize..6, k2 in 1usize..6, t1 in 0.0..0.3f64, t2 in 0.0..0.3f64) {
        let a = SamplePlan { harmonics: vec![k1], taus: vec![t1] };
        let b = SamplePlan { harmonics: vec![k2, k1], taus: vec![t2] };
        let m = a.merge(&b);
        prop_assert!(m.k_index(k1).is_ok() && m.k_index(k2).is_ok());
        prop_assert!(m.tau_index(t1).is_ok() && m.tau_index(t2).is_ok());
        prop_assert!(m.harmonics.windows(2).all(|w| w[0] < w[1]));
    }
}
