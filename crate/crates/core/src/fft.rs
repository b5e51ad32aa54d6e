//! Radix-2 complex FFT.

use alloc::vec::Vec;

use num_complex::Complex64;

use crate::math::{cos, sin, PI};

/// In-place forward (`inverse = false`, `e^{-2πi jk/n}`) or unnormalized
/// inverse transform. `data.len()` must be a power of two.
pub(crate) fn fft(data: &mut [Complex64], inverse: bool) {
    let n = data.len();
    assert!(n.is_power_of_two(), "fft length {n} is not a power of two");
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            data.swap(i, j);
        }
    }
    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * PI / len as f64;
        let w_len = Complex64::new(cos(ang), sin(ang));
        for start in (0..n).step_by(len) {
            let mut w = Complex64::new(1.0, 0.0);
            for k in 0..len / 2 {
                let a = data[start + k];
                let b = data[start + k + len / 2] * w;
                data[start + k] = a + b;
                data[start + k + len / 2] = a - b;
                w *= w_len;
            }
        }
        len <<= 1;
    }
}

/// Real input zero-padded to `n` and transformed.
pub(crate) fn fft_real(values: &[f64], n: usize) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(n, Complex64::default());
    fft(&mut buf, false);
    buf
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_direct_dft() {
        let x: Vec<Complex64> = (0..16)
            .map(|i| Complex64::new(sin(i as f64 * 0.7), cos(i as f64 * 1.3)))
            .collect();
        let mut y = x.clone();
        fft(&mut y, false);
        for (k, yk) in y.iter().enumerate() {
            let mut s = Complex64::default();
            for (j, xj) in x.iter().enumerate() {
                let a = -2.0 * PI * (j * k) as f64 / 16.0;
                s += xj * Complex64::new(cos(a), sin(a));
            }
            assert!((s - yk).norm() < 1e-12);
        }
        fft(&mut y, true);
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b / 16.0).norm() < 1e-14);
        }
    }
}
