//! Elementary functions that work without `std`.

pub(crate) use libm::{ceil, cos, exp, fabs as abs, floor, log, round, sin, sqrt};

pub(crate) const PI: f64 = core::f64::consts::PI;

/// `x^n` for a non-negative integer power.
pub(crate) fn powi(x: f64, n: u32) -> f64 {
    let mut acc = 1.0;
    let mut base = x;
    let mut e = n;
    while e > 0 {
        if e & 1 == 1 {
            acc *= base;
        }
        base *= base;
        e >>= 1;
    }
    acc
}

/// Binomial coefficient as a float; exact for the small arguments used here.
pub(crate) fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut c = 1.0;
    for i in 0..k {
        c = c * f64::from(n - i) / f64::from(i + 1);
    }
    c
}

/// Quintic smoothstep: 0 for `x <= 0`, 1 for `x >= 1`, C² in between.
pub(crate) fn smoothstep5(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x >= 1.0 {
        1.0
    } else {
        x * x * x * (10.0 + x * (-15.0 + 6.0 * x))
    }
}
