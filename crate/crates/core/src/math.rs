//! Thin wrappers over `libm` so the crate builds without `std`.

pub(crate) use libm::{cosh, exp, fabs as abs, log as ln, log1p as ln_1p, pow as powf, sin, sinh, sqrt};

pub(crate) const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

pub(crate) fn gamma(x: f64) -> f64 {
    libm::tgamma(x)
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    exp(-0.5 * z * z) / SQRT_2PI
}

/// Standard normal distribution function, accurate in both tails.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / core::f64::consts::SQRT_2)
}
