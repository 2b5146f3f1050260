//! SafeOpt baseline: a single loop that samples the most uncertain point
//! among expanders and potential maximizers.

use super::engine::{feed_utility, noise_rng, observe_safety, recommend, tie_seed, Recorder, SafetyEngine, StepOutcome, UtilityModel};
use super::{Algorithm, Problem, RunConfig, RunObserver, Stage, StepSnapshot, Trace};
use crate::acquisition::argmax_with_ties;
use crate::confidence::{ConfidenceState, Intervals};
use crate::domain::GridMask;
use crate::gp::GpModel;
use crate::{Error, Result};

/// SafeOpt with absolute utility observations.
pub fn run_safeopt(problem: &Problem<'_>, config: &RunConfig) -> Result<Trace> {
    drive(problem, config, &mut ())
}

/// `M_t = {x in S : u^f(x) >= max_{x' in S} l^f(x')}`.
pub fn potential_maximizers(utility: &Intervals, safe: &GridMask) -> GridMask {
    let best_lower = safe.iter().map(|x| utility.lower[x]).fold(f64::NEG_INFINITY, f64::max);
    GridMask::from_indices(safe.universe(), safe.iter().filter(|&x| utility.upper[x] >= best_lower))
}

/// Largest width at `x` over the utility and every safety function.
fn max_width(conf: &ConfidenceState, x: usize) -> f64 {
    conf.max_safety_width(x).0.max(conf.utility.width(x))
}

pub(super) fn drive(problem: &Problem<'_>, config: &RunConfig, observer: &mut dyn RunObserver) -> Result<Trace> {
    config.validate()?;
    problem.validate()?;
    let inst = problem.instance;
    let mut safety = SafetyEngine::new(problem, config)?;
    let utility_schedule = config.utility_beta.schedule(&problem.gammas.utility)?;
    let mut utility = UtilityModel::Gp(GpModel::new(problem.tables.utility.clone(), inst.utility_noise)?);
    let mut rng = noise_rng(config.seed);
    let mut recorder = Recorder::new(Algorithm::SafeOpt, config.horizon);

    for t in 1..=config.horizon {
        let tie = tie_seed(config.seed, t);
        safety.refresh(t, problem, config)?;
        let utility_beta = utility_schedule.beta(t);
        let (means, variances) = utility.posterior();
        if t >= 2 {
            safety.conf.utility.intersect(&means, &variances, utility_beta);
        }
        let maximizers = potential_maximizers(&safety.conf.utility, &safety.state.safe);
        let candidates = maximizers.union(&safety.state.expanders);
        let (x, _) = argmax_with_ties(&candidates, tie, |x| max_width(&safety.conf, x))
            .ok_or(Error::EmptyCandidates("safeopt"))?;
        let stage = if safety.state.expanders.contains(x) {
            Stage::Expand
        } else {
            Stage::Optimize
        };
        observer.on_step(&StepSnapshot {
            t,
            stage,
            chosen: x,
            confidence: Some(&safety.conf),
            safe: Some(&safety.state),
            utility_mean: &means,
            utility_variance: &variances,
            utility_beta,
            safety_betas: &safety.betas,
        });
        let y_f = feed_utility(&mut utility, problem, x, x, &mut rng)?;
        let y_g = observe_safety(problem, x, &mut rng);
        safety.observe(x, &y_g)?;
        recorder.push(
            problem,
            StepOutcome {
                t,
                stage,
                x,
                target: None,
                y_f,
                y_g,
                safe_size: safety.state.safe.len(),
                expander_size: safety.state.expanders.len(),
                contradictions: safety.conf.contradictions(),
                fallback: false,
            },
            true,
        );
    }

    let (means, _) = utility.posterior();
    let recommended = recommend(&means, &safety.state.safe, tie_seed(config.seed, config.horizon + 1))?;
    Ok(recorder.finish(0, recommended, safety.state.safe.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn dominated_points_are_not_maximizers() {
        let iv = Intervals {
            lower: vec![0.0, 1.0, -5.0],
            upper: vec![2.0, 3.0, 0.5],
            contradictions: 0,
        };
        let safe = GridMask::full(3);
        assert_eq!(potential_maximizers(&iv, &safe), GridMask::from_indices(3, [0, 1]));
        let only = GridMask::from_indices(3, [2]);
        assert_eq!(potential_maximizers(&iv, &only), only);
    }
}
