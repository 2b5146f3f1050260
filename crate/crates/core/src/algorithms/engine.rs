//! Machinery shared by the safe drivers: safety models, confidence
//! intervals, the safe set and the per-step bookkeeping of a trace.

use alloc::vec;
use alloc::vec::Vec;

use super::{Algorithm, Problem, RunConfig, Stage, StepRecord, Trace};
use crate::acquisition::argmax_with_ties;
use crate::confidence::{init_confidence, BetaSchedule, ConfidenceState, FunctionId};
use crate::domain::GridMask;
use crate::gp::GpModel;
use crate::math::sqrt;
use crate::preference::{Link, PreferenceGp};
use crate::safe_set::{compute_expanders, expand_safe, expander_widths, GpOnlyContext, SafeSetVariant, SafeState};
use crate::synthetic::{duel, observe};
use crate::{Error, Result, Rng};

use super::mix_seed;

const NOISE_STREAM: u64 = 0x006E_6F69_7365;
const TIE_STREAM: u64 = 0x7469_6573;

pub(super) fn noise_rng(seed: u64) -> Rng {
    crate::rng_from_seed(mix_seed(seed, NOISE_STREAM))
}

pub(super) fn tie_seed(seed: u64, t: usize) -> u64 {
    mix_seed(mix_seed(seed, TIE_STREAM), t as u64)
}

pub(super) fn std_devs(variances: &[f64]) -> Vec<f64> {
    variances.iter().map(|v| sqrt(v.max(0.0))).collect()
}

/// Safety models with their confidence intervals and the safe set.
pub(super) struct SafetyEngine {
    pub models: Vec<GpModel>,
    pub schedules: Vec<BetaSchedule>,
    pub betas: Vec<f64>,
    pub conf: ConfidenceState,
    pub state: SafeState,
}

impl SafetyEngine {
    pub fn new(problem: &Problem<'_>, config: &RunConfig) -> Result<Self> {
        let inst = problem.instance;
        let models = problem
            .tables
            .safety
            .iter()
            .zip(&inst.safety_noise)
            .map(|(t, &v)| GpModel::new(t.clone(), v))
            .collect::<Result<Vec<_>>>()?;
        let schedules = problem
            .gammas
            .safety
            .iter()
            .map(|g| config.safety_beta.schedule(g))
            .collect::<Result<Vec<_>>>()?;
        Ok(SafetyEngine {
            betas: vec![0.0; models.len()],
            models,
            schedules,
            conf: init_confidence(problem.start, &inst.spec.thresholds, config.sentinel)?,
            state: SafeState::new(problem.start, config.variant)?,
        })
    }

    /// Brings `C_t`, `S_t` and `G_t` up to iteration `t`.
    pub fn refresh(&mut self, t: usize, problem: &Problem<'_>, config: &RunConfig) -> Result<()> {
        for (b, s) in self.betas.iter_mut().zip(&self.schedules) {
            *b = s.beta(t);
        }
        if t >= 2 {
            for (i, model) in self.models.iter().enumerate() {
                self.conf.safety[i].intersect(model.mean(), model.raw_variance(), self.betas[i]);
            }
        }
        let spec = &problem.instance.spec;
        let domain = &problem.instance.domain;
        expand_safe(&mut self.state, &self.conf, spec, domain);
        if self.state.safe.is_empty() {
            return Err(Error::EmptySafeSet);
        }
        let ctx = GpOnlyContext {
            models: &self.models,
            betas: &self.betas,
        };
        let ctx = (config.variant == SafeSetVariant::GpOnly).then_some(&ctx);
        compute_expanders(&mut self.state, &self.conf, spec, domain, ctx, config.count_mode)
    }

    /// True when every safety width over the expanders is below `epsilon`.
    pub fn epsilon_met(&self, epsilon: f64) -> bool {
        expander_widths(&self.state, &self.conf).iter().all(|&w| w < epsilon)
    }

    pub fn observe(&mut self, x: usize, ys: &[f64]) -> Result<()> {
        for (model, &y) in self.models.iter_mut().zip(ys) {
            model.add_observation(x, y)?;
        }
        Ok(())
    }

    /// The start point with the largest smallest safety lower bound.
    pub fn safest(&self, start: &GridMask, tie: u64) -> Result<usize> {
        argmax_with_ties(start, tie, |x| {
            self.conf.safety.iter().map(|iv| iv.lower[x]).fold(f64::INFINITY, f64::min)
        })
        .map(|(x, _)| x)
        .ok_or(Error::EmptySeedSet)
    }
}

/// Utility model for absolute or pairwise feedback.
pub(super) enum UtilityModel {
    Gp(GpModel),
    Preference(PreferenceGp),
}

impl UtilityModel {
    /// Posterior mean and variance over the grid.
    pub fn posterior(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            UtilityModel::Gp(m) => (m.mean().to_vec(), m.raw_variance().iter().map(|v| v.max(0.0)).collect()),
            UtilityModel::Preference(p) => {
                let n = p.mean().len();
                (p.mean().to_vec(), (0..n).map(|x| p.variance_at(x)).collect())
            }
        }
    }
}

/// Trace bookkeeping common to every driver.
pub(super) struct Recorder {
    algorithm: Algorithm,
    steps: Vec<StepRecord>,
    reward: f64,
    best_observed: Option<(usize, f64)>,
}

pub(super) struct StepOutcome {
    pub t: usize,
    pub stage: Stage,
    pub x: usize,
    pub target: Option<usize>,
    pub y_f: f64,
    pub y_g: Vec<f64>,
    pub safe_size: usize,
    pub expander_size: usize,
    pub contradictions: usize,
    pub fallback: bool,
}

impl Recorder {
    pub fn new(algorithm: Algorithm, horizon: usize) -> Self {
        Recorder {
            algorithm,
            steps: Vec::with_capacity(horizon),
            reward: f64::NEG_INFINITY,
            best_observed: None,
        }
    }

    pub fn push(&mut self, problem: &Problem<'_>, out: StepOutcome, absolute_utility: bool) {
        let inst = problem.instance;
        self.reward = self.reward.max(inst.utility[out.x]);
        if absolute_utility && self.best_observed.is_none_or(|(_, y)| out.y_f > y) {
            self.best_observed = Some((out.x, out.y_f));
        }
        self.steps.push(StepRecord {
            t: out.t,
            stage: out.stage,
            x: out.x,
            target: out.target,
            y_f: out.y_f,
            y_g: out.y_g,
            safe_size: out.safe_size,
            expander_size: out.expander_size,
            reward: self.reward,
            violation: !inst.is_safe(out.x),
            contradictions: out.contradictions,
            fallback: out.fallback,
        });
    }

    pub fn best_observed_value(&self) -> Option<f64> {
        self.best_observed.map(|(_, y)| y)
    }

    pub fn finish(self, stage_one_length: usize, recommended: usize, final_safe: GridMask) -> Trace {
        Trace {
            algorithm: self.algorithm,
            steps: self.steps,
            stage_one_length,
            recommended,
            best_observed: self.best_observed,
            final_safe,
        }
    }
}

/// Draws the safety observations at `x`, in function order.
pub(super) fn observe_safety(problem: &Problem<'_>, x: usize, rng: &mut Rng) -> Vec<f64> {
    (0..problem.instance.n_safety())
        .map(|i| observe(problem.instance, FunctionId::Safety(i), x, rng))
        .collect()
}

/// Feeds the utility feedback for `x` to the model and returns the recorded
/// value.
pub(super) fn feed_utility(
    model: &mut UtilityModel,
    problem: &Problem<'_>,
    x: usize,
    opponent: usize,
    rng: &mut Rng,
) -> Result<f64> {
    match model {
        UtilityModel::Gp(m) => {
            let y = observe(problem.instance, FunctionId::Utility, x, rng);
            m.add_observation(x, y)?;
            Ok(y)
        }
        UtilityModel::Preference(p) => {
            let link: Link = p.link();
            let won = duel(problem.instance, x, opponent, link, rng);
            if p.add_duel(x, opponent, won)? {
                p.fit()?;
            }
            Ok(if won { 1.0 } else { 0.0 })
        }
    }
}

/// Argmax of `mean` over `set` with the seeded tie-break.
pub(super) fn recommend(mean: &[f64], set: &GridMask, tie: u64) -> Result<usize> {
    argmax_with_ties(set, tie, |x| mean[x])
        .map(|(x, _)| x)
        .ok_or(Error::EmptySafeSet)
}
