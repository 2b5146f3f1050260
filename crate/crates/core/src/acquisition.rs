//! Point-selection rules.
//!
//! Every rule scores a candidate set and returns the argmax. Ties are broken
//! by shuffling the candidates with a seeded generator and keeping the first
//! maximal one, so a selection is a pure function of its inputs.

use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::confidence::ConfidenceState;
use crate::domain::GridMask;
pub use crate::math::{normal_cdf, normal_pdf};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rule {
    MaxWidth,
    Ucb,
    Ei,
    Mpi,
    Cei,
}

impl Rule {
    pub fn name(&self) -> &'static str {
        match self {
            Rule::MaxWidth => "max_width",
            Rule::Ucb => "ucb",
            Rule::Ei => "ei",
            Rule::Mpi => "mpi",
            Rule::Cei => "cei",
        }
    }
}

impl core::str::FromStr for Rule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "max_width" => Rule::MaxWidth,
            "ucb" => Rule::Ucb,
            "ei" => Rule::Ei,
            "mpi" => Rule::Mpi,
            "cei" => Rule::Cei,
            other => return Err(Error::invalid(alloc::format!("unknown acquisition rule `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionChoice {
    pub index: usize,
    pub score: f64,
    pub rule: Rule,
    pub tie_break_seed: u64,
}

/// Argmax of `score` over `candidates` with the seeded tie-break.
pub fn argmax_with_ties(
    candidates: &GridMask,
    tie_break_seed: u64,
    mut score: impl FnMut(usize) -> f64,
) -> Option<(usize, f64)> {
    let mut order: Vec<usize> = candidates.iter().collect();
    if order.is_empty() {
        return None;
    }
    let mut rng = crate::rng_from_seed(tie_break_seed);
    order.shuffle(&mut rng);
    let mut best = (order[0], score(order[0]));
    for &i in &order[1..] {
        let s = score(i);
        if s > best.1 || (best.1.is_nan() && !s.is_nan()) {
            best = (i, s);
        }
    }
    Some(best)
}

fn choose(
    candidates: &GridMask,
    rule: Rule,
    tie_break_seed: u64,
    score: impl FnMut(usize) -> f64,
) -> Result<AcquisitionChoice> {
    let (index, score) =
        argmax_with_ties(candidates, tie_break_seed, score).ok_or(Error::EmptyCandidates(rule.name()))?;
    Ok(AcquisitionChoice {
        index,
        score,
        rule,
        tie_break_seed,
    })
}

/// Expander with the widest safety interval. Also returns the safety
/// function attaining that width.
pub fn select_expansion(
    conf: &ConfidenceState,
    expanders: &GridMask,
    tie_break_seed: u64,
) -> Result<(AcquisitionChoice, usize)> {
    let choice = choose(expanders, Rule::MaxWidth, tie_break_seed, |x| conf.max_safety_width(x).0)?;
    let (_, target) = conf.max_safety_width(choice.index);
    Ok((choice, target))
}

/// GP-UCB: argmax of `mean + beta * sd` over the safe set.
pub fn select_ucb(means: &[f64], sds: &[f64], safe: &GridMask, beta: f64, tie_break_seed: u64) -> Result<AcquisitionChoice> {
    if safe.is_empty() {
        return Err(Error::EmptySafeSet);
    }
    choose(safe, Rule::Ucb, tie_break_seed, |x| means[x] + beta * sds[x])
}

/// Closed-form expected improvement over `incumbent`.
pub fn expected_improvement(mean: f64, sd: f64, incumbent: f64) -> f64 {
    let diff = mean - incumbent;
    if !(sd > 0.0) {
        return diff.max(0.0);
    }
    let z = diff / sd;
    diff * normal_cdf(z) + sd * normal_pdf(z)
}

/// Probability of improving on `incumbent` by at least `xi`.
pub fn probability_of_improvement(mean: f64, sd: f64, incumbent: f64, xi: f64) -> f64 {
    let diff = mean - incumbent - xi;
    if !(sd > 0.0) {
        return if diff > 0.0 { 1.0 } else { 0.0 };
    }
    normal_cdf(diff / sd)
}

pub fn select_ei(
    means: &[f64],
    sds: &[f64],
    candidates: &GridMask,
    incumbent: f64,
    tie_break_seed: u64,
) -> Result<AcquisitionChoice> {
    if candidates.is_empty() {
        return Err(Error::EmptySafeSet);
    }
    choose(candidates, Rule::Ei, tie_break_seed, |x| expected_improvement(means[x], sds[x], incumbent))
}

pub fn select_mpi(
    means: &[f64],
    sds: &[f64],
    candidates: &GridMask,
    incumbent: f64,
    xi: f64,
    tie_break_seed: u64,
) -> Result<AcquisitionChoice> {
    if candidates.is_empty() {
        return Err(Error::EmptySafeSet);
    }
    if !(xi >= 0.0) {
        return Err(Error::invalid("improvement margin must be nonnegative"));
    }
    choose(candidates, Rule::Mpi, tie_break_seed, |x| {
        probability_of_improvement(means[x], sds[x], incumbent, xi)
    })
}

/// Posterior mean and standard deviation of one safety function.
#[derive(Debug, Clone, Copy)]
pub struct SafetyPosterior<'a> {
    pub means: &'a [f64],
    pub sds: &'a [f64],
    pub threshold: f64,
}

/// Product over constraints of `P[g_i(x) >= h_i]` under independent Gaussian
/// posteriors.
pub fn safety_probability(safety: &[SafetyPosterior<'_>], x: usize) -> f64 {
    safety
        .iter()
        .map(|s| {
            let (m, sd) = (s.means[x], s.sds[x]);
            if sd > 0.0 {
                normal_cdf((m - s.threshold) / sd)
            } else if m >= s.threshold {
                1.0
            } else {
                0.0
            }
        })
        .product()
}

/// Points whose safety probability is at least `1 - p_min`.
pub fn cei_admissible(safety: &[SafetyPosterior<'_>], domain_size: usize, p_min: f64) -> GridMask {
    let bar = 1.0 - p_min;
    GridMask::from_indices(domain_size, (0..domain_size).filter(|&x| safety_probability(safety, x) >= bar))
}

/// Outcome of a constrained-EI selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CeiChoice {
    pub choice: AcquisitionChoice,
    /// True when no point cleared the bar and a seed point was used instead.
    pub fallback: bool,
    pub admissible: usize,
}

/// Constrained EI: EI over points whose joint safety probability reaches
/// `1 - p_min`; falls back to the seed point with the highest safety
/// probability when nothing qualifies.
pub fn select_cei(
    means: &[f64],
    sds: &[f64],
    safety: &[SafetyPosterior<'_>],
    incumbent: f64,
    p_min: f64,
    seeds: &GridMask,
    tie_break_seed: u64,
) -> Result<CeiChoice> {
    if !(0.0..=1.0).contains(&p_min) {
        return Err(Error::invalid("p_min must lie in [0, 1]"));
    }
    let n = means.len();
    let admissible = cei_admissible(safety, n, p_min);
    if admissible.is_empty() {
        let choice = choose(seeds, Rule::Cei, tie_break_seed, |x| safety_probability(safety, x))?;
        return Ok(CeiChoice {
            choice,
            fallback: true,
            admissible: 0,
        });
    }
    let choice = choose(&admissible, Rule::Cei, tie_break_seed, |x| {
        expected_improvement(means[x], sds[x], incumbent)
    })?;
    Ok(CeiChoice {
        choice,
        fallback: false,
        admissible: admissible.len(),
    })
}
