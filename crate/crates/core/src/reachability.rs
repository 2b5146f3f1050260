//! Brute-force reachability over known safety functions.
//!
//! `R_eps(S) = S ∪ ⋂_i {x : ∃ x' ∈ S, g_i(x') - eps - L_i d(x', x) >= h_i}`,
//! its `T`-fold iterate and its fixed point. Used as ground truth for the
//! expansion guarantees of the algorithms.

use alloc::vec::Vec;

use crate::domain::{GridDomain, GridFunction, GridMask};
use crate::safe_set::SafetySpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct ReachabilityQuery<'a> {
    pub domain: &'a GridDomain,
    pub safety: &'a [GridFunction],
    pub spec: &'a SafetySpec,
    pub epsilon: f64,
}

impl<'a> ReachabilityQuery<'a> {
    pub fn new(
        domain: &'a GridDomain,
        safety: &'a [GridFunction],
        spec: &'a SafetySpec,
        epsilon: f64,
    ) -> Result<Self> {
        if safety.len() != spec.n_safety() {
            return Err(Error::LengthMismatch {
                expected: spec.n_safety(),
                got: safety.len(),
            });
        }
        if safety.iter().any(|g| g.len() != domain.len()) {
            return Err(Error::invalid("safety function length differs from the domain"));
        }
        if !(epsilon >= 0.0) {
            return Err(Error::invalid("reachability slack must be nonnegative"));
        }
        Ok(ReachabilityQuery {
            domain,
            safety,
            spec,
            epsilon,
        })
    }

    /// Checks that every start point is truly safe.
    pub fn validate_start(&self, start: &GridMask) -> Result<()> {
        if start.is_empty() {
            return Err(Error::EmptySeedSet);
        }
        for x in start.iter() {
            for (g, &h) in self.safety.iter().zip(&self.spec.thresholds) {
                if g[x] < h {
                    return Err(Error::invalid(alloc::format!("start point {x} violates a safety threshold")));
                }
            }
        }
        Ok(())
    }

    fn certifies(&self, from: usize, to: usize, i: usize) -> bool {
        let d = self.domain.distance(from, to);
        let drop = if d == 0.0 { 0.0 } else { self.spec.lipschitz[i] * d };
        self.safety[i][from] - self.epsilon - drop >= self.spec.thresholds[i]
    }
}

/// One application of `R_eps`.
pub fn one_step_reach(q: &ReachabilityQuery<'_>, set: &GridMask) -> GridMask {
    let members: Vec<usize> = set.iter().collect();
    let mut out = set.clone();
    for x in 0..q.domain.len() {
        if set.contains(x) {
            continue;
        }
        let reached = (0..q.spec.n_safety()).all(|i| members.iter().any(|&z| q.certifies(z, x, i)));
        if reached {
            out.insert(x);
        }
    }
    out
}

/// `steps`-fold composition of [`one_step_reach`]. Stops early at a fixed
/// point.
pub fn reach_t(q: &ReachabilityQuery<'_>, start: &GridMask, steps: usize) -> GridMask {
    let mut cur = start.clone();
    for _ in 0..steps {
        let next = one_step_reach(q, &cur);
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

/// Fixed point of `R_eps` reached from `start`.
pub fn reach_closure(q: &ReachabilityQuery<'_>, start: &GridMask) -> GridMask {
    reach_t(q, start, q.domain.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::make_uniform_grid;
    use alloc::vec;

    fn hand() -> (GridDomain, Vec<GridFunction>, SafetySpec) {
        (
            make_uniform_grid(1, 3).unwrap(),
            vec![GridFunction::new(vec![1.0, 1.0, -1.0]).unwrap()],
            SafetySpec::new(vec![0.0], vec![2.0]).unwrap(),
        )
    }

    #[test]
    fn hand_example() {
        let (d, g, s) = hand();
        let q = ReachabilityQuery::new(&d, &g, &s, 0.0).unwrap();
        let s0 = GridMask::from_indices(3, [0]);
        assert_eq!(one_step_reach(&q, &s0), GridMask::from_indices(3, [0, 1]));
        // point 2 needs 1 - 2 * 0.5 = 0 >= 0 from point 1
        assert_eq!(reach_t(&q, &s0, 2), GridMask::full(3));
        assert_eq!(reach_closure(&q, &s0), GridMask::full(3));
        assert_eq!(reach_t(&q, &s0, 0), s0);
    }

    #[test]
    fn large_slack_blocks_everything() {
        let (d, g, s) = hand();
        let q = ReachabilityQuery::new(&d, &g, &s, 1.5).unwrap();
        let s0 = GridMask::from_indices(3, [0]);
        assert_eq!(one_step_reach(&q, &s0), s0);
    }

    #[test]
    fn full_start_is_fixed() {
        let (d, g, s) = hand();
        let q = ReachabilityQuery::new(&d, &g, &s, 0.0).unwrap();
        assert_eq!(reach_closure(&q, &GridMask::full(3)), GridMask::full(3));
    }

    #[test]
    fn disconnected_island_is_excluded() {
        let d = make_uniform_grid(1, 7).unwrap();
        let g = vec![GridFunction::new(vec![0.3, 0.25, 0.1, -0.1, 0.1, 0.25, 0.3]).unwrap()];
        // exact Lipschitz constant: the largest change is 0.2 over one grid step of 1/6
        let l = crate::domain::lipschitz_constant(&d, &g[0]).unwrap();
        assert!((l - 1.2).abs() < 1e-9);
        let s = SafetySpec::new(vec![0.0], vec![l]).unwrap();
        let q = ReachabilityQuery::new(&d, &g, &s, 0.0).unwrap();
        let closure = reach_closure(&q, &GridMask::from_indices(7, [0]));
        // from point 2 the certified radius is 0.1 / 1.2 < 1/6, so the chain
        // stops before the gap and the safe island {4, 5, 6} stays out
        assert_eq!(closure, GridMask::from_indices(7, [0, 1, 2]));
        assert!((4..7).all(|x| g[0][x] >= 0.0));
    }

    #[test]
    fn rejects_unsafe_start() {
        let (d, g, s) = hand();
        let q = ReachabilityQuery::new(&d, &g, &s, 0.0).unwrap();
        assert!(q.validate_start(&GridMask::from_indices(3, [2])).is_err());
        assert!(q.validate_start(&GridMask::empty(3)).is_err());
        assert!(q.validate_start(&GridMask::from_indices(3, [0, 1])).is_ok());
        assert!(ReachabilityQuery::new(&d, &g, &s, -1.0).is_err());
    }
}
