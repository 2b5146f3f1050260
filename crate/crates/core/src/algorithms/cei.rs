//! Constrained expected improvement baseline. Safety is enforced only per
//! step, through a bar on the posterior probability of feasibility.

use alloc::vec::Vec;

use super::engine::{noise_rng, observe_safety, recommend, std_devs, tie_seed, Recorder, StepOutcome};
use super::{Algorithm, Problem, RunConfig, RunObserver, Stage, StepSnapshot, Trace};
use crate::acquisition::{cei_admissible, select_cei, SafetyPosterior};
use crate::confidence::FunctionId;
use crate::domain::GridMask;
use crate::gp::GpModel;
use crate::synthetic::observe;
use crate::Result;

/// CEI with per-step bar `1 - cei_delta / T`.
pub fn run_cei(problem: &Problem<'_>, config: &RunConfig) -> Result<Trace> {
    drive(problem, config, &mut ())
}

fn safety_posteriors<'a>(models: &'a [GpModel], sds: &'a [Vec<f64>], thresholds: &[f64]) -> Vec<SafetyPosterior<'a>> {
    models
        .iter()
        .zip(sds)
        .zip(thresholds)
        .map(|((m, s), &h)| SafetyPosterior {
            means: m.mean(),
            sds: s,
            threshold: h,
        })
        .collect()
}

pub(super) fn drive(problem: &Problem<'_>, config: &RunConfig, observer: &mut dyn RunObserver) -> Result<Trace> {
    config.validate()?;
    problem.validate()?;
    let inst = problem.instance;
    let n = inst.domain.len();
    let p_min = config.cei_delta / config.horizon as f64;
    let mut utility = GpModel::new(problem.tables.utility.clone(), inst.utility_noise)?;
    let mut safety: Vec<GpModel> = problem
        .tables
        .safety
        .iter()
        .zip(&inst.safety_noise)
        .map(|(t, &v)| GpModel::new(t.clone(), v))
        .collect::<Result<_>>()?;
    let thresholds = &inst.spec.thresholds;
    let mut rng = noise_rng(config.seed);
    let mut recorder = Recorder::new(Algorithm::Cei, config.horizon);
    let no_betas: [f64; 0] = [];

    for t in 1..=config.horizon {
        let tie = tie_seed(config.seed, t);
        let means = utility.mean().to_vec();
        let variances: Vec<f64> = utility.raw_variance().iter().map(|v| v.max(0.0)).collect();
        let sds = std_devs(&variances);
        let safety_sds: Vec<Vec<f64>> = safety.iter().map(|m| m.std_devs()).collect();
        let posteriors = safety_posteriors(&safety, &safety_sds, thresholds);
        let incumbent = recorder.best_observed_value().unwrap_or(0.0);
        let choice = select_cei(&means, &sds, &posteriors, incumbent, p_min, problem.start, tie)?;
        let x = choice.choice.index;
        observer.on_step(&StepSnapshot {
            t,
            stage: Stage::Optimize,
            chosen: x,
            confidence: None,
            safe: None,
            utility_mean: &means,
            utility_variance: &variances,
            utility_beta: 0.0,
            safety_betas: &no_betas,
        });
        let y_f = observe(inst, FunctionId::Utility, x, &mut rng);
        let y_g = observe_safety(problem, x, &mut rng);
        utility.add_observation(x, y_f)?;
        for (m, &y) in safety.iter_mut().zip(&y_g) {
            m.add_observation(x, y)?;
        }
        recorder.push(
            problem,
            StepOutcome {
                t,
                stage: Stage::Optimize,
                x,
                target: None,
                y_f,
                y_g,
                safe_size: choice.admissible,
                expander_size: 0,
                contradictions: 0,
                fallback: choice.fallback,
            },
            true,
        );
    }

    let safety_sds: Vec<Vec<f64>> = safety.iter().map(|m| m.std_devs()).collect();
    let posteriors = safety_posteriors(&safety, &safety_sds, thresholds);
    let admissible = cei_admissible(&posteriors, n, p_min);
    let final_set: GridMask = if admissible.is_empty() {
        problem.start.clone()
    } else {
        admissible
    };
    let recommended = recommend(utility.mean(), &final_set, tie_seed(config.seed, config.horizon + 1))?;
    Ok(recorder.finish(0, recommended, final_set))
}
