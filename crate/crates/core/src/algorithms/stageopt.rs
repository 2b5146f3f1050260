//! StageOpt: expand the safe set first, then optimize inside it.

use super::engine::{
    feed_utility, noise_rng, observe_safety, recommend, std_devs, tie_seed, Recorder, SafetyEngine, StepOutcome,
    UtilityModel,
};
use super::{Algorithm, Feedback, Problem, RunConfig, RunObserver, Stage, StageSwitch, StepSnapshot, Trace};
use crate::acquisition::{select_ei, select_expansion, select_mpi, select_ucb, Rule};
use crate::domain::GridMask;
use crate::gp::GpModel;
use crate::preference::PreferenceGp;
use crate::Result;

/// StageOpt with absolute utility observations.
pub fn run_stageopt(problem: &Problem<'_>, config: &RunConfig) -> Result<Trace> {
    drive(problem, config, Feedback::Absolute, &mut ())
}

/// StageOpt where the utility is only observed through duels against the
/// previous point.
pub fn run_stageopt_dueling(problem: &Problem<'_>, config: &RunConfig) -> Result<Trace> {
    Algorithm::StageOptDueling.run(problem, config)
}

/// Tracks when stage one ends.
struct StageTracker {
    switch: StageSwitch,
    in_stage_one: bool,
    length: usize,
    unchanged: usize,
    last_size: usize,
}

impl StageTracker {
    fn new(switch: StageSwitch, start_size: usize) -> Self {
        StageTracker {
            switch,
            in_stage_one: true,
            length: 0,
            unchanged: 0,
            last_size: start_size,
        }
    }

    /// Updates the stage for iteration `t` given the fresh safe-set size,
    /// whether expanders exist and whether every expander width is below
    /// epsilon. Returns true while stage one continues.
    fn update(&mut self, t: usize, safe_size: usize, has_expanders: bool, epsilon_met: bool) -> bool {
        if safe_size == self.last_size {
            self.unchanged += 1;
        } else {
            self.unchanged = 0;
        }
        self.last_size = safe_size;
        if self.in_stage_one {
            let ended = !has_expanders
                || match self.switch {
                    StageSwitch::Fixed { t0 } => t > t0,
                    StageSwitch::EpsilonStop => epsilon_met,
                    StageSwitch::Plateau { window, cap } => self.unchanged >= window || t > cap,
                };
            if ended {
                self.in_stage_one = false;
            } else {
                self.length = t;
            }
        }
        self.in_stage_one
    }
}

#[allow(clippy::too_many_arguments)]
pub(super) fn select_stage_two(
    rule: Rule,
    means: &[f64],
    sds: &[f64],
    safe: &GridMask,
    beta: f64,
    incumbent: f64,
    margin: f64,
    tie: u64,
) -> Result<usize> {
    let choice = match rule {
        Rule::Ei => select_ei(means, sds, safe, incumbent, tie)?,
        Rule::Mpi => select_mpi(means, sds, safe, incumbent, margin, tie)?,
        _ => select_ucb(means, sds, safe, beta, tie)?,
    };
    Ok(choice.index)
}

pub(super) fn drive(
    problem: &Problem<'_>,
    config: &RunConfig,
    feedback: Feedback,
    observer: &mut dyn RunObserver,
) -> Result<Trace> {
    config.validate()?;
    problem.validate()?;
    let inst = problem.instance;
    let mut safety = SafetyEngine::new(problem, config)?;
    let utility_schedule = config.utility_beta.schedule(&problem.gammas.utility)?;
    let (algorithm, mut utility) = match feedback {
        Feedback::Absolute => (
            Algorithm::StageOpt,
            UtilityModel::Gp(GpModel::new(problem.tables.utility.clone(), inst.utility_noise)?),
        ),
        Feedback::Dueling(link) => (
            Algorithm::StageOptDueling,
            UtilityModel::Preference(PreferenceGp::new(problem.tables.utility.clone(), link)),
        ),
    };
    let absolute = matches!(feedback, Feedback::Absolute);
    let mut rng = noise_rng(config.seed);
    let mut recorder = Recorder::new(algorithm, config.horizon);
    let mut tracker = StageTracker::new(config.stage_switch, problem.start.len());
    let mut previous: Option<usize> = None;

    for t in 1..=config.horizon {
        let tie = tie_seed(config.seed, t);
        safety.refresh(t, problem, config)?;
        let utility_beta = utility_schedule.beta(t);
        let (means, variances) = utility.posterior();
        if absolute && t >= 2 {
            safety.conf.utility.intersect(&means, &variances, utility_beta);
        }
        let epsilon_met = safety.epsilon_met(config.epsilon);
        let stage_one = tracker.update(
            t,
            safety.state.safe.len(),
            !safety.state.expanders.is_empty(),
            epsilon_met,
        );
        let sds = std_devs(&variances);
        let (x, target) = if stage_one && !epsilon_met {
            let (choice, i) = select_expansion(&safety.conf, &safety.state.expanders, tie)?;
            (choice.index, Some(i))
        } else if stage_one {
            (select_ucb(&means, &sds, &safety.state.safe, utility_beta, tie)?.index, None)
        } else {
            let incumbent = if absolute {
                recorder.best_observed_value().unwrap_or(0.0)
            } else {
                safety.state.safe.iter().map(|x| means[x]).fold(f64::NEG_INFINITY, f64::max)
            };
            let x = select_stage_two(
                config.acquisition,
                &means,
                &sds,
                &safety.state.safe,
                utility_beta,
                incumbent,
                config.mpi_margin,
                tie,
            )?;
            (x, None)
        };
        let stage = if stage_one { Stage::Expand } else { Stage::Optimize };
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

        let opponent = match previous {
            Some(p) => p,
            None if absolute => x,
            None => safety.safest(problem.start, tie)?,
        };
        let y_f = feed_utility(&mut utility, problem, x, opponent, &mut rng)?;
        let y_g = observe_safety(problem, x, &mut rng);
        if stage_one || !config.freeze_safety_in_stage_two {
            safety.observe(x, &y_g)?;
        }
        previous = Some(x);
        recorder.push(
            problem,
            StepOutcome {
                t,
                stage,
                x,
                target,
                y_f,
                y_g,
                safe_size: safety.state.safe.len(),
                expander_size: safety.state.expanders.len(),
                contradictions: safety.conf.contradictions(),
                fallback: false,
            },
            absolute,
        );
    }

    let (means, _) = utility.posterior();
    let recommended = recommend(&means, &safety.state.safe, tie_seed(config.seed, config.horizon + 1))?;
    Ok(recorder.finish(tracker.length, recommended, safety.state.safe.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plateau_tracker() {
        let mut s = StageTracker::new(StageSwitch::Plateau { window: 2, cap: 10 }, 1);
        assert!(s.update(1, 1, true, false));
        assert!(!s.update(2, 1, true, false));
        assert_eq!(s.length, 1);
        assert!(!s.update(3, 5, true, false));

        let mut s = StageTracker::new(StageSwitch::Plateau { window: 100, cap: 3 }, 1);
        for t in 1..=3 {
            assert!(s.update(t, t + 1, true, false));
        }
        assert!(!s.update(4, 5, true, false));
        assert_eq!(s.length, 3);
    }

    #[test]
    fn fixed_and_epsilon_trackers() {
        let mut s = StageTracker::new(StageSwitch::Fixed { t0: 2 }, 1);
        assert!(s.update(1, 1, true, true));
        assert!(s.update(2, 1, true, false));
        assert!(!s.update(3, 1, true, false));

        let mut s = StageTracker::new(StageSwitch::EpsilonStop, 1);
        assert!(s.update(1, 1, true, false));
        assert!(!s.update(2, 2, true, true));

        let mut s = StageTracker::new(StageSwitch::Fixed { t0: 50 }, 1);
        assert!(!s.update(1, 1, false, true));
        assert_eq!(s.length, 0);
    }
}
