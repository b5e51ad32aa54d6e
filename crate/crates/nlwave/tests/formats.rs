use nlwave::config::ConfigFile;
use nlwave::io::{read_field, read_sinogram, write_field, write_sinogram};
use nlwave::presets::{preset, PresetName, Scale};
use nlwave_core::model::{FieldData, Grid2D, ScalarField2D};
use nlwave_core::xray::Sinogram;
use nlwave_core::Complex64;
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        -1e3..1e3f64,
        Just(0.0),
        Just(-0.0)
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn fields_round_trip_bit_identical(
        nx in 2usize..9, ny in 2usize..9, complex in any::<bool>(),
        x0 in -3.0..0.0f64, y0 in -3.0..0.0f64, seed in prop::collection::vec(finite(), 162),
        time in prop::option::of(finite()),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let grid = Grid2D::new(nx, ny, x0, x0 + 1.5, y0, y0 + 2.0).unwrap();
        let n = grid.len();
        let data = if complex {
            FieldData::Complex((0..n).map(|k| Complex64::new(seed[2 * k], seed[2 * k + 1])).collect())
        } else {
            FieldData::Real(seed[..n].to_vec())
        };
        let field = ScalarField2D::new(grid, data).unwrap();
        let bin = write_field(&dir.path().join("f"), &field, time).unwrap();
        let (back, header) = read_field(&bin).unwrap();
        prop_assert_eq!(header.time.map(f64::to_bits), time.map(f64::to_bits));
        prop_assert_eq!(back.grid, field.grid);
        let bits = |f: &ScalarField2D| -> Vec<u64> {
            match &f.data {
                FieldData::Real(v) => v.iter().map(|x| x.to_bits()).collect(),
                FieldData::Complex(v) => v.iter().flat_map(|z| [z.re.to_bits(), z.im.to_bits()]).collect(),
            }
        };
        prop_assert_eq!(bits(&back), bits(&field));
    }

    #[test]
    fn sinograms_round_trip_bit_identical(
        n_angles in 1usize..7, n_offsets in 2usize..9, l in 0.1..5.0f64,
        seed in prop::collection::vec(finite(), 48),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let sino = Sinogram { n_angles, n_offsets, l, values: seed[..n_angles * n_offsets].to_vec() };
        write_sinogram(&dir.path().join("s"), &sino).unwrap();
        let back = read_sinogram(&dir.path().join("s.json")).unwrap();
        prop_assert_eq!(back.l.to_bits(), l.to_bits());
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        prop_assert_eq!(bits(&back.values), bits(&sino.values));
        prop_assert_eq!((back.n_angles, back.n_offsets), (n_angles, n_offsets));
    }
}

#[test]
fn config_hash_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    for name in PresetName::ALL {
        let c = preset(name, Scale::Desk);
        let path = dir.path().join("c.json");
        std::fs::write(&path, serde_json::to_string_pretty(&c).unwrap()).unwrap();
        let back = ConfigFile::load(&path).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(c.hash().len(), 64);
    }
    let a = preset(PresetName::CubicReal, Scale::Desk).hash();
    let b = preset(PresetName::CubicReal, Scale::Paper).hash();
    assert_ne!(a, b);
}

#[test]
fn truncated_binary_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let grid = Grid2D::square(4, 1.0).unwrap();
    let field = ScalarField2D::new(grid, FieldData::Real(vec![1.0; 16])).unwrap();
    let bin = write_field(&dir.path().join("f"), &field, None).unwrap();
    std::fs::write(&bin, [0u8; 24]).unwrap();
    let err = read_field(&bin).unwrap_err();
    assert_eq!(err.kind(), "format");
}
