//! Sample-complexity diagnostics: the expansion horizon `t*` and the
//! optimization horizon `Y`.

use crate::confidence::BetaSchedule;
use crate::info_gain::GammaTable;
use crate::math::{ln, ln_1p, sqrt};
use crate::{Error, Result};

/// Default upper limit of the scans.
pub const DEFAULT_SCAN_CAP: usize = 1_000_000;

/// `C_1 = 8 / ln(1 + sigma^-2)`.
pub fn c1(noise_sd: f64) -> f64 {
    8.0 / ln_1p(1.0 / (noise_sd * noise_sd))
}

/// Smallest `t >= 1` with `t / (beta_t^2 gamma_{n t}) >= C_1 (closure + 1) / eps^2`,
/// where `gamma` is the safety information-gain table and `beta_t` comes
/// from `schedule`. `None` when no `t <= cap` qualifies. The table should
/// reach index `n_safety * cap`; beyond its end it saturates.
pub fn theorem1_tstar(
    schedule: &BetaSchedule,
    gamma: &GammaTable,
    closure_size: usize,
    n_safety: usize,
    epsilon: f64,
    cap: usize,
) -> Result<Option<usize>> {
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    if n_safety == 0 {
        return Err(Error::invalid("at least one safety function is required"));
    }
    let rhs = c1(schedule.noise_scale) * (closure_size as f64 + 1.0) / (epsilon * epsilon);
    if !rhs.is_finite() {
        return Ok(None);
    }
    Ok((1..=cap).find(|&t| {
        let beta = schedule.beta(t);
        t as f64 / (beta * beta * gamma.gamma(n_safety * t)) >= rhs
    }))
}

/// Average-regret bound after `y` optimization steps:
/// `(4 sqrt 2 / sqrt y) (B sqrt(gamma_y) + sigma sqrt(2 gamma_y (gamma_y + 1 + ln(1/delta))))`.
pub fn average_regret_bound(rkhs_bound: f64, noise_scale: f64, delta: f64, gamma_y: f64, y: usize) -> f64 {
    let inner = rkhs_bound * sqrt(gamma_y) + noise_scale * sqrt(2.0 * gamma_y * (gamma_y + 1.0 + ln(1.0 / delta)));
    4.0 * core::f64::consts::SQRT_2 / sqrt(y as f64) * inner
}

fn regret_bound_at(schedule: &BetaSchedule, y: usize) -> f64 {
    average_regret_bound(
        schedule.rkhs_bound,
        schedule.noise_scale,
        schedule.delta,
        schedule.gamma.gamma(y),
        y,
    )
}

/// Smallest `Y >= 1` whose average-regret bound is at most `zeta`, by linear
/// scan. `None` when no `Y <= cap` qualifies.
pub fn theorem2_y(schedule: &BetaSchedule, zeta: f64, cap: usize) -> Result<Option<usize>> {
    if !(zeta > 0.0) {
        return Err(Error::invalid("zeta must be positive"));
    }
    Ok((1..=cap).find(|&y| regret_bound_at(schedule, y) <= zeta))
}

/// Same quantity by bisection on `[1, cap]`. Agrees with [`theorem2_y`]
/// when the bound is non-increasing in `Y`.
pub fn theorem2_y_bisect(schedule: &BetaSchedule, zeta: f64, cap: usize) -> Result<Option<usize>> {
    if !(zeta > 0.0) {
        return Err(Error::invalid("zeta must be positive"));
    }
    if cap == 0 || regret_bound_at(schedule, cap) > zeta {
        return Ok(None);
    }
    let (mut lo, mut hi) = (1usize, cap);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if regret_bound_at(schedule, mid) <= zeta {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    Ok(Some(lo))
}
