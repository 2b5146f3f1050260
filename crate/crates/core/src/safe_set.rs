//! Safe-set expansion and expander detection.
//!
//! Two certification rules are supported. The Lipschitz rule certifies `x'`
//! from a safe `x` when `l_i(x) - L_i d(x, x') >= h_i` for every safety
//! function. The GP-only rule certifies a point directly from its own lower
//! bounds, and judges expanders by a hypothetical noiseless observation of
//! the upper bound.

use alloc::vec;
use alloc::vec::Vec;

use crate::confidence::ConfidenceState;
use crate::domain::{GridDomain, GridMask};
use crate::gp::GpModel;
use crate::math::sqrt;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SafeSetVariant {
    #[default]
    Lipschitz,
    GpOnly,
}

/// Thresholds `h_i` and Lipschitz constants `L_i`, one per safety function.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetySpec {
    pub thresholds: Vec<f64>,
    pub lipschitz: Vec<f64>,
}

impl SafetySpec {
    pub fn new(thresholds: Vec<f64>, lipschitz: Vec<f64>) -> Result<Self> {
        if thresholds.len() != lipschitz.len() {
            return Err(Error::LengthMismatch {
                expected: thresholds.len(),
                got: lipschitz.len(),
            });
        }
        if thresholds.is_empty() {
            return Err(Error::invalid("at least one safety function is required"));
        }
        if thresholds.iter().any(|h| !h.is_finite()) {
            return Err(Error::NonFinite("safety threshold"));
        }
        if lipschitz.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::invalid("Lipschitz constants must be nonnegative"));
        }
        Ok(SafetySpec {
            thresholds,
            lipschitz,
        })
    }

    pub fn n_safety(&self) -> usize {
        self.thresholds.len()
    }
}

/// Whether expander counts must be exact or only tell zero from nonzero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CountMode {
    #[default]
    Membership,
    Exact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafeState {
    pub safe: GridMask,
    pub expanders: GridMask,
    pub expansion_counts: Vec<usize>,
    pub variant: SafeSetVariant,
}

impl SafeState {
    pub fn new(seed_set: &GridMask, variant: SafeSetVariant) -> Result<Self> {
        if seed_set.is_empty() {
            return Err(Error::EmptySeedSet);
        }
        let n = seed_set.universe();
        Ok(SafeState {
            safe: seed_set.clone(),
            expanders: GridMask::empty(n),
            expansion_counts: vec![0; n],
            variant,
        })
    }
}

/// Posterior models needed by the GP-only expander rule.
pub struct GpOnlyContext<'a> {
    pub models: &'a [GpModel],
    /// Confidence scaling currently applied to each safety model.
    pub betas: &'a [f64],
}

/// `L * d`, treating zero distance as zero even for infinite `L`.
#[inline]
fn lipschitz_drop(l: f64, d: f64) -> f64 {
    if d == 0.0 {
        0.0
    } else {
        l * d
    }
}

/// Recomputes `S_t` from `S_{t-1}` (held in `state.safe`) and the current
/// lower bounds. The result always contains `S_{t-1}`.
pub fn expand_safe(state: &mut SafeState, conf: &ConfidenceState, spec: &SafetySpec, domain: &GridDomain) {
    let n = domain.len();
    let prev = state.safe.clone();
    let prev_points: Vec<usize> = prev.iter().collect();
    let mut next = prev.clone();
    for x in 0..n {
        if prev.contains(x) {
            continue;
        }
        let certified = match state.variant {
            SafeSetVariant::Lipschitz => (0..spec.n_safety()).all(|i| {
                let lower = &conf.safety[i].lower;
                let (h, l) = (spec.thresholds[i], spec.lipschitz[i]);
                prev_points
                    .iter()
                    .any(|&z| lower[z] - lipschitz_drop(l, domain.distance(z, x)) >= h)
            }),
            SafeSetVariant::GpOnly => {
                (0..spec.n_safety()).all(|i| conf.safety[i].lower[x] >= spec.thresholds[i])
            }
        };
        if certified {
            next.insert(x);
        }
    }
    state.safe = next;
}

/// Recomputes `e_t` and `G_t` for the current safe set.
pub fn compute_expanders(
    state: &mut SafeState,
    conf: &ConfidenceState,
    spec: &SafetySpec,
    domain: &GridDomain,
    gp_only: Option<&GpOnlyContext<'_>>,
    mode: CountMode,
) -> Result<()> {
    let n = domain.len();
    let outside: Vec<usize> = (0..n).filter(|&x| !state.safe.contains(x)).collect();
    let mut counts = vec![0usize; n];
    match state.variant {
        SafeSetVariant::Lipschitz => {
            for x in state.safe.iter() {
                let mut count = 0;
                for &xp in &outside {
                    let d = domain.distance(x, xp);
                    let ok = (0..spec.n_safety()).all(|i| {
                        conf.safety[i].upper[x] - lipschitz_drop(spec.lipschitz[i], d) >= spec.thresholds[i]
                    });
                    if ok {
                        count += 1;
                        if mode == CountMode::Membership {
                            break;
                        }
                    }
                }
                counts[x] = count;
            }
        }
        SafeSetVariant::GpOnly => {
            let ctx = gp_only.ok_or_else(|| Error::invalid("GP-only expanders need the safety models"))?;
            if ctx.models.len() != spec.n_safety() || ctx.betas.len() != spec.n_safety() {
                return Err(Error::invalid("one model and one beta per safety function required"));
            }
            let mut columns: Vec<Vec<f64>> = vec![Vec::new(); spec.n_safety()];
            for x in state.safe.iter() {
                // hypothetical posterior after observing u_i(x) exactly at x
                for (i, model) in ctx.models.iter().enumerate() {
                    columns[i] = model.covariance_column(x, &outside);
                }
                let mut count = 0;
                for (k, &xp) in outside.iter().enumerate() {
                    let ok = (0..spec.n_safety()).all(|i| {
                        let model = &ctx.models[i];
                        let var_x = model.variance_at(x);
                        let iv = &conf.safety[i];
                        let (mean, var) = if var_x > 1e-12 * model.kernel().amplitude() {
                            let c = columns[i][k];
                            let gain = c / var_x;
                            (
                                model.mean_at(xp) + gain * (iv.upper[x] - model.mean_at(x)),
                                model.variance_at(xp) - c * gain,
                            )
                        } else {
                            (model.mean_at(xp), model.variance_at(xp))
                        };
                        let hypothetical = mean - ctx.betas[i] * sqrt(var.max(0.0));
                        iv.lower[xp].max(hypothetical) >= spec.thresholds[i]
                    });
                    if ok {
                        count += 1;
                        if mode == CountMode::Membership {
                            break;
                        }
                    }
                }
                counts[x] = count;
            }
        }
    }
    state.expanders = GridMask::from_indices(n, state.safe.iter().filter(|&x| counts[x] > 0));
    state.expansion_counts = counts;
    Ok(())
}

/// `max_{x in G} w_i(x)` for every safety function; `-inf` when `G` is empty.
pub fn expander_widths(state: &SafeState, conf: &ConfidenceState) -> Vec<f64> {
    conf.safety
        .iter()
        .map(|iv| state.expanders.iter().map(|x| iv.width(x)).fold(f64::NEG_INFINITY, f64::max))
        .collect()
}
