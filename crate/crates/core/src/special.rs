//! Special functions needed by the Matérn kernel.

use core::f64::consts::{FRAC_PI_2, PI};

use crate::math::{abs, cosh, exp, gamma, ln, sin, sinh, sqrt};

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;
/// Euler–Mascheroni constant.
const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Modified Bessel function of the second kind `K_nu(x)` for real `nu >= 0`
/// and `x > 0`.
///
/// Uses Temme's series for `x < 2` and Steed's continued fraction otherwise,
/// evaluated at the fractional order `|mu| <= 1/2` and carried to `nu` by
/// forward recurrence (stable for `K`).
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    assert!(nu >= 0.0, "order must be nonnegative");
    if !(x > 0.0) {
        return f64::INFINITY;
    }
    let nl = libm::floor(nu + 0.5) as usize;
    let mu = nu - nl as f64;
    let (mut k_mu, mut k_mu1) = if x < 2.0 {
        temme_series(mu, x)
    } else {
        steed_fraction(mu, x)
    };
    for i in 1..=nl {
        let next = (mu + i as f64) * (2.0 / x) * k_mu1 + k_mu;
        k_mu = k_mu1;
        k_mu1 = next;
    }
    k_mu
}

/// `(gam1, gam2)` with `gam1 = (1/Γ(1-μ) - 1/Γ(1+μ)) / (2μ)` and
/// `gam2 = (1/Γ(1-μ) + 1/Γ(1+μ)) / 2`, plus `1/Γ(1+μ)` and `1/Γ(1-μ)`.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    let gampl = 1.0 / gamma(1.0 + mu);
    let gammi = 1.0 / gamma(1.0 - mu);
    if abs(mu) < 1e-2 {
        // Taylor coefficients of 1/Γ(1+x)
        let m2 = mu * mu;
        let gam1 = -EULER_GAMMA + m2 * (0.042_002_635_034_095_2 + m2 * 0.042_197_734_555_544_3);
        let gam2 = 1.0 + m2 * (-0.655_878_071_520_253_8 + m2 * 0.166_538_611_382_291_5);
        (gam1, gam2, gampl, gammi)
    } else {
        ((gammi - gampl) / (2.0 * mu), 0.5 * (gammi + gampl), gampl, gammi)
    }
}

fn temme_series(mu: f64, x: f64) -> (f64, f64) {
    let x2 = 0.5 * x;
    let pimu = PI * mu;
    let fact = if abs(pimu) < EPS { 1.0 } else { pimu / sin(pimu) };
    let d = -ln(x2);
    let e = mu * d;
    let fact2 = if abs(e) < EPS { 1.0 } else { sinh(e) / e };
    let (gam1, gam2, gampl, gammi) = temme_gammas(mu);
    let mut ff = fact * (gam1 * cosh(e) + gam2 * fact2 * d);
    let mut sum = ff;
    let ee = exp(e);
    let mut p = 0.5 * ee / gampl;
    let mut q = 0.5 / (ee * gammi);
    let mut c = 1.0;
    let dd = x2 * x2;
    let mut sum1 = p;
    let mu2 = mu * mu;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - mu2);
        c *= dd / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        sum1 += c * (p - fi * ff);
        if abs(del) < abs(sum) * EPS {
            break;
        }
    }
    (sum, sum1 * (2.0 / x))
}

fn steed_fraction(mu: f64, x: f64) -> (f64, f64) {
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25 - mu * mu;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if abs(dels / s) < EPS {
            break;
        }
    }
    h *= a1;
    let k_mu = sqrt(FRAC_PI_2 / x) * exp(-x) / s;
    let k_mu1 = k_mu * (mu + x + 0.5 - h) / x;
    (k_mu, k_mu1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_order_closed_form() {
        // K_{1/2}(x) = sqrt(pi / (2x)) e^{-x}
        for &x in &[0.05, 0.7, 1.9, 2.1, 5.0, 30.0] {
            let exact = sqrt(FRAC_PI_2 / x) * exp(-x);
            let got = bessel_k(0.5, x);
            assert!(abs(got - exact) <= 1e-13 * exact, "x={x}: {got} vs {exact}");
        }
    }

    #[test]
    fn three_halves_closed_form() {
        // K_{3/2}(x) = sqrt(pi / (2x)) e^{-x} (1 + 1/x)
        for &x in &[0.1, 1.0, 1.99, 2.0, 8.0] {
            let exact = sqrt(FRAC_PI_2 / x) * exp(-x) * (1.0 + 1.0 / x);
            let got = bessel_k(1.5, x);
            assert!(abs(got - exact) <= 1e-13 * exact);
        }
    }

    #[test]
    fn order_zero_reference() {
        // K_0(1) = 0.42102443824070833
        assert!(abs(bessel_k(0.0, 1.0) - 0.421_024_438_240_708_3) < 1e-14);
    }
}
