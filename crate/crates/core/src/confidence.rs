//! Confidence-scaling schedule and running-intersection confidence
//! intervals.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::domain::GridMask;
use crate::info_gain::GammaTable;
use crate::math::{ln, sqrt};
use crate::{Error, Result};

/// Stand-in for an infinite bound. Callers usually pass something two orders
/// of magnitude above the largest function amplitude instead.
pub const DEFAULT_SENTINEL: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub enum GammaSource {
    Table(Arc<GammaTable>),
    Constant(f64),
}

impl GammaSource {
    pub fn gamma(&self, t: usize) -> f64 {
        match self {
            GammaSource::Table(table) => table.gamma(t),
            GammaSource::Constant(g) => {
                if t == 0 {
                    0.0
                } else {
                    *g
                }
            }
        }
    }
}

/// `beta_t = B + sigma * sqrt(2 (gamma_{t-1} + 1 + ln(1/delta)))`.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaSchedule {
    pub rkhs_bound: f64,
    pub noise_scale: f64,
    pub delta: f64,
    pub gamma: GammaSource,
}

impl BetaSchedule {
    pub fn new(rkhs_bound: f64, noise_scale: f64, delta: f64, gamma: GammaSource) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::invalid("delta must lie in (0, 1)"));
        }
        if !(rkhs_bound >= 0.0) || !(noise_scale >= 0.0) {
            return Err(Error::invalid("B and sigma must be nonnegative"));
        }
        Ok(BetaSchedule {
            rkhs_bound,
            noise_scale,
            delta,
            gamma,
        })
    }

    /// `beta_t` for `t >= 1`.
    pub fn beta(&self, t: usize) -> f64 {
        assert!(t >= 1, "beta is defined for t >= 1");
        compute_beta(self.rkhs_bound, self.noise_scale, self.delta, self.gamma.gamma(t - 1))
    }
}

/// The schedule formula with an explicit `gamma_{t-1}`.
pub fn compute_beta(rkhs_bound: f64, noise_scale: f64, delta: f64, gamma_prev: f64) -> f64 {
    rkhs_bound + noise_scale * sqrt(2.0 * (gamma_prev + 1.0 + ln(1.0 / delta)))
}

/// Lower and upper bounds for one monitored function.
#[derive(Debug, Clone, PartialEq)]
pub struct Intervals {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Points where an update would have crossed the bounds.
    pub contradictions: usize,
}

impl Intervals {
    fn unbounded(n: usize, sentinel: f64) -> Self {
        Intervals {
            lower: vec![-sentinel; n],
            upper: vec![sentinel; n],
            contradictions: 0,
        }
    }

    pub fn width(&self, x: usize) -> f64 {
        self.upper[x] - self.lower[x]
    }

    /// Intersects every interval with `[mean - beta*sd, mean + beta*sd]`.
    ///
    /// When the intersection would be empty the interval collapses to the
    /// midpoint of the crossed bounds, clipped into the previous interval so
    /// the bounds still move monotonically.
    pub fn intersect(&mut self, means: &[f64], variances: &[f64], beta: f64) {
        assert_eq!(means.len(), self.lower.len());
        assert_eq!(variances.len(), self.lower.len());
        for x in 0..self.lower.len() {
            let half = beta * sqrt(variances[x].max(0.0));
            let old_lo = self.lower[x];
            let old_hi = self.upper[x];
            let lo = old_lo.max(means[x] - half);
            let hi = old_hi.min(means[x] + half);
            if lo > hi {
                let mid = (0.5 * (lo + hi)).clamp(old_lo, old_hi);
                self.lower[x] = mid;
                self.upper[x] = mid;
                self.contradictions += 1;
            } else {
                self.lower[x] = lo;
                self.upper[x] = hi;
            }
        }
    }
}

/// Which monitored function an update refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FunctionId {
    Utility,
    Safety(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceState {
    pub safety: Vec<Intervals>,
    pub utility: Intervals,
    pub sentinel: f64,
}

impl ConfidenceState {
    pub fn intervals(&self, id: FunctionId) -> &Intervals {
        match id {
            FunctionId::Utility => &self.utility,
            FunctionId::Safety(i) => &self.safety[i],
        }
    }

    pub fn intervals_mut(&mut self, id: FunctionId) -> &mut Intervals {
        match id {
            FunctionId::Utility => &mut self.utility,
            FunctionId::Safety(i) => &mut self.safety[i],
        }
    }

    pub fn n_safety(&self) -> usize {
        self.safety.len()
    }

    /// Total contradiction count over all functions.
    pub fn contradictions(&self) -> usize {
        self.utility.contradictions + self.safety.iter().map(|s| s.contradictions).sum::<usize>()
    }

    /// Largest safety width at `x`, with the function that attains it.
    pub fn max_safety_width(&self, x: usize) -> (f64, usize) {
        self.safety
            .iter()
            .enumerate()
            .map(|(i, iv)| (iv.width(x), i))
            .fold((f64::NEG_INFINITY, 0), |b, c| if c.0 > b.0 { c } else { b })
    }
}

/// Safety intervals `[h_i, +inf)` on the seed points and unbounded
/// elsewhere; utility intervals unbounded everywhere.
pub fn init_confidence(seed_set: &GridMask, thresholds: &[f64], sentinel: f64) -> Result<ConfidenceState> {
    if seed_set.is_empty() {
        return Err(Error::EmptySeedSet);
    }
    if !(sentinel > 0.0) {
        return Err(Error::invalid("sentinel must be positive"));
    }
    let n = seed_set.universe();
    let safety = thresholds
        .iter()
        .map(|&h| {
            let mut iv = Intervals::unbounded(n, sentinel);
            for x in seed_set.iter() {
                iv.lower[x] = h;
            }
            iv
        })
        .collect();
    Ok(ConfidenceState {
        safety,
        utility: Intervals::unbounded(n, sentinel),
        sentinel,
    })
}

/// Intersects the intervals of `id` with the posterior band.
pub fn intersect_update(
    state: &mut ConfidenceState,
    id: FunctionId,
    means: &[f64],
    variances: &[f64],
    beta: f64,
) -> Result<()> {
    if !(beta > 0.0) {
        return Err(Error::invalid("beta must be positive"));
    }
    state.intervals_mut(id).intersect(means, variances, beta);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::exp;
    use proptest::prelude::*;

    #[test]
    fn beta_examples() {
        assert_eq!(compute_beta(1.0, 0.0, 0.3, 12.0), 1.0);
        assert!((compute_beta(0.0, 1.0, exp(-1.0), 0.0) - 2.0).abs() < 1e-15);
        let expected = 1.0 + 0.05 * sqrt(2.0 * (10.0 + 1.0 + ln(10.0)));
        assert!((compute_beta(1.0, 0.05, 0.1, 10.0) - expected).abs() < 1e-15);
    }

    #[test]
    fn schedule_uses_previous_gamma() {
        let s = BetaSchedule::new(0.0, 1.0, exp(-1.0), GammaSource::Constant(5.0)).unwrap();
        assert!((s.beta(1) - 2.0).abs() < 1e-15);
        assert!((s.beta(2) - sqrt(14.0)).abs() < 1e-14);
        assert!(BetaSchedule::new(1.0, 1.0, 0.0, GammaSource::Constant(1.0)).is_err());
        assert!(BetaSchedule::new(1.0, 1.0, 1.0, GammaSource::Constant(1.0)).is_err());
    }

    #[test]
    fn init_examples() {
        let seeds = GridMask::from_indices(4, [0]);
        let c = init_confidence(&seeds, &[0.0], 1e3).unwrap();
        assert_eq!(c.safety[0].lower[0], 0.0);
        assert_eq!(c.safety[0].upper[0], 1e3);
        assert_eq!(c.safety[0].lower[1], -1e3);
        assert_eq!(c.utility.lower[0], -1e3);
        assert_eq!(init_confidence(&GridMask::empty(4), &[0.0], 1e3), Err(Error::EmptySeedSet));
    }

    #[test]
    fn intersection_examples() {
        let mut iv = Intervals::unbounded(1, 1e6);
        iv.intersect(&[0.0], &[1.0], 2.0);
        assert_eq!((iv.lower[0], iv.upper[0]), (-2.0, 2.0));

        let mut iv = Intervals {
            lower: vec![-1.0],
            upper: vec![1.0],
            contradictions: 0,
        };
        iv.intersect(&[0.0], &[1.0], 3.0);
        assert_eq!((iv.lower[0], iv.upper[0]), (-1.0, 1.0));

        let mut iv = Intervals {
            lower: vec![0.0],
            upper: vec![1.0],
            contradictions: 0,
        };
        // Q = [0.5, 2] = 1.25 +- 0.75
        iv.intersect(&[1.25], &[0.75 * 0.75], 1.0);
        assert_eq!((iv.lower[0], iv.upper[0]), (0.5, 1.0));
        assert_eq!(iv.contradictions, 0);
    }

    #[test]
    fn contradiction_collapses_and_counts() {
        let mut iv = Intervals {
            lower: vec![0.0],
            upper: vec![1.0],
            contradictions: 0,
        };
        iv.intersect(&[3.0], &[1.0], 1.0); // Q = [2, 4]
        assert_eq!(iv.contradictions, 1);
        assert_eq!(iv.lower[0], iv.upper[0]);
        assert_eq!(iv.lower[0], 1.0);
    }

    #[test]
    fn rejects_nonpositive_beta() {
        let seeds = GridMask::from_indices(2, [0]);
        let mut c = init_confidence(&seeds, &[0.0], 10.0).unwrap();
        assert!(intersect_update(&mut c, FunctionId::Utility, &[0.0; 2], &[1.0; 2], 0.0).is_err());
    }

    proptest! {
        #[test]
        fn bounds_move_monotonically(
            steps in proptest::collection::vec((proptest::collection::vec(-3.0f64..3.0, 5), proptest::collection::vec(0.0f64..2.0, 5), 0.1f64..4.0), 1..30)
        ) {
            let mut iv = Intervals::unbounded(5, 100.0);
            for (means, vars, beta) in steps {
                let prev = iv.clone();
                iv.intersect(&means, &vars, beta);
                for x in 0..5 {
                    prop_assert!(iv.lower[x] <= iv.upper[x]);
                    prop_assert!(iv.lower[x] >= prev.lower[x]);
                    prop_assert!(iv.upper[x] <= prev.upper[x]);
                    prop_assert!(iv.width(x) <= prev.width(x));
                }
            }
        }
    }
}
