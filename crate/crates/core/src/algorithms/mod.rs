//! Run drivers: StageOpt with absolute or pairwise utility feedback, the
//! interleaved SafeOpt baseline, the constrained-EI baseline and the
//! sample-complexity diagnostics.
//!
//! A run is strictly sequential. Given the same [`Problem`] and
//! [`RunConfig`] every driver returns the same [`Trace`].

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::acquisition::Rule;
use crate::confidence::{BetaSchedule, ConfidenceState, GammaSource};
use crate::domain::GridMask;
use crate::info_gain::{estimate_gamma, GammaTable};
use crate::preference::Link;
use crate::safe_set::{CountMode, SafeSetVariant, SafeState};
use crate::synthetic::{ModelTables, ProblemInstance};
use crate::{Error, Result};

pub mod bounds;
mod cei;
mod engine;
mod safeopt;
mod stageopt;

pub use cei::run_cei;
pub use safeopt::{potential_maximizers, run_safeopt};
pub use stageopt::{run_stageopt, run_stageopt_dueling};

/// When stage one hands over to stage two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StageSwitch {
    /// Stage one covers iterations `1..=t0`.
    Fixed { t0: usize },
    /// Stage one ends the first time every expander width is below epsilon.
    EpsilonStop,
    /// Stage one ends once `|S_t|` has not changed for `window` consecutive
    /// iterations, and never lasts past iteration `cap`.
    Plateau { window: usize, cap: usize },
}

impl Default for StageSwitch {
    fn default() -> Self {
        StageSwitch::Plateau { window: 10, cap: 80 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Feedback {
    #[default]
    Absolute,
    Dueling(Link),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    StageOpt,
    SafeOpt,
    Cei,
    StageOptDueling,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::StageOpt,
        Algorithm::SafeOpt,
        Algorithm::Cei,
        Algorithm::StageOptDueling,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::StageOpt => "stageopt",
            Algorithm::SafeOpt => "safeopt",
            Algorithm::Cei => "cei",
            Algorithm::StageOptDueling => "stageopt_dueling",
        }
    }

    /// Stable small integer used when deriving per-run seeds.
    pub fn code(&self) -> u64 {
        match self {
            Algorithm::StageOpt => 1,
            Algorithm::SafeOpt => 2,
            Algorithm::Cei => 3,
            Algorithm::StageOptDueling => 4,
        }
    }

    pub fn run(&self, problem: &Problem<'_>, config: &RunConfig) -> Result<Trace> {
        self.run_observed(problem, config, &mut ())
    }

    pub fn run_observed(
        &self,
        problem: &Problem<'_>,
        config: &RunConfig,
        observer: &mut dyn RunObserver,
    ) -> Result<Trace> {
        match self {
            Algorithm::StageOpt => stageopt::drive(problem, config, Feedback::Absolute, observer),
            Algorithm::StageOptDueling => {
                let link = match config.feedback {
                    Feedback::Dueling(link) => link,
                    Feedback::Absolute => Link::Logit,
                };
                stageopt::drive(problem, config, Feedback::Dueling(link), observer)
            }
            Algorithm::SafeOpt => safeopt::drive(problem, config, observer),
            Algorithm::Cei => cei::drive(problem, config, observer),
        }
    }
}

impl core::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .iter()
            .copied()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid(alloc::format!("unknown algorithm `{s}`")))
    }
}

/// Where `gamma_t` comes from in a confidence schedule.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum GammaChoice {
    /// Greedy estimate for the function's kernel and noise level.
    #[default]
    Estimated,
    Constant(f64),
}

/// Parameters of `beta_t = B + sigma sqrt(2 (gamma_{t-1} + 1 + ln(1/delta)))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaConfig {
    pub rkhs_bound: f64,
    pub noise_scale: f64,
    pub delta: f64,
    pub gamma: GammaChoice,
}

impl BetaConfig {
    pub fn schedule(&self, table: &Arc<GammaTable>) -> Result<BetaSchedule> {
        let gamma = match self.gamma {
            GammaChoice::Estimated => GammaSource::Table(table.clone()),
            GammaChoice::Constant(g) => GammaSource::Constant(g),
        };
        BetaSchedule::new(self.rkhs_bound, self.noise_scale, self.delta, gamma)
    }
}

pub const DEFAULT_RKHS_BOUND: f64 = 2.0;
pub const DEFAULT_NOISE_SCALE: f64 = 0.05;
pub const DEFAULT_DELTA: f64 = 0.1;
pub const DEFAULT_EPSILON: f64 = 0.02;
pub const DEFAULT_ZETA: f64 = 0.1;
pub const DEFAULT_HORIZON: usize = 100;

impl Default for BetaConfig {
    fn default() -> Self {
        BetaConfig {
            rkhs_bound: DEFAULT_RKHS_BOUND,
            noise_scale: DEFAULT_NOISE_SCALE,
            delta: DEFAULT_DELTA,
            gamma: GammaChoice::Estimated,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub horizon: usize,
    pub stage_switch: StageSwitch,
    /// Expansion accuracy.
    pub epsilon: f64,
    /// Optimization accuracy; only used by the diagnostics.
    pub zeta: f64,
    pub safety_beta: BetaConfig,
    pub utility_beta: BetaConfig,
    /// Stage-two rule: `ucb`, `ei` or `mpi`.
    pub acquisition: Rule,
    /// Improvement margin of the `mpi` rule.
    pub mpi_margin: f64,
    pub variant: SafeSetVariant,
    pub feedback: Feedback,
    pub count_mode: CountMode,
    /// Stops feeding safety observations to the models during stage two.
    pub freeze_safety_in_stage_two: bool,
    /// Failure probability spread over the horizon by the CEI baseline.
    pub cei_delta: f64,
    pub sentinel: f64,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            horizon: DEFAULT_HORIZON,
            stage_switch: StageSwitch::default(),
            epsilon: DEFAULT_EPSILON,
            zeta: DEFAULT_ZETA,
            safety_beta: BetaConfig::default(),
            utility_beta: BetaConfig::default(),
            acquisition: Rule::Ucb,
            mpi_margin: 0.01,
            variant: SafeSetVariant::Lipschitz,
            feedback: Feedback::Absolute,
            count_mode: CountMode::Membership,
            freeze_safety_in_stage_two: false,
            cei_delta: DEFAULT_DELTA,
            sentinel: crate::confidence::DEFAULT_SENTINEL,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::invalid("horizon must be at least 1"));
        }
        match self.stage_switch {
            StageSwitch::Fixed { t0 } if t0 == 0 || t0 > self.horizon => {
                return Err(Error::invalid("fixed stage switch needs 0 < T0 <= T"));
            }
            StageSwitch::Plateau { window, .. } if window == 0 => {
                return Err(Error::invalid("plateau window must be positive"));
            }
            _ => {}
        }
        if !(self.epsilon > 0.0) || !(self.zeta > 0.0) {
            return Err(Error::invalid("epsilon and zeta must be positive"));
        }
        if !matches!(self.acquisition, Rule::Ucb | Rule::Ei | Rule::Mpi) {
            return Err(Error::invalid("stage-two rule must be ucb, ei or mpi"));
        }
        if !(self.cei_delta > 0.0 && self.cei_delta < 1.0) {
            return Err(Error::invalid("CEI delta must lie in (0, 1)"));
        }
        for b in [&self.safety_beta, &self.utility_beta] {
            if !(b.delta > 0.0 && b.delta < 1.0) {
                return Err(Error::invalid("delta must lie in (0, 1)"));
            }
        }
        Ok(())
    }
}

/// Information-gain tables for the utility and each safety kernel.
#[derive(Debug, Clone)]
pub struct GammaTables {
    pub utility: Arc<GammaTable>,
    pub safety: Vec<Arc<GammaTable>>,
}

impl GammaTables {
    /// Estimates one table per function at the instance's noise levels.
    pub fn estimate(instance: &ProblemInstance, tables: &ModelTables, horizon: usize) -> Result<Self> {
        let floor = |v: f64| if v > 0.0 { v } else { 1e-12 };
        Ok(GammaTables {
            utility: Arc::new(estimate_gamma(&tables.utility, floor(instance.utility_noise), horizon)?),
            safety: tables
                .safety
                .iter()
                .zip(&instance.safety_noise)
                .map(|(t, &v)| estimate_gamma(t, floor(v), horizon).map(Arc::new))
                .collect::<Result<_>>()?,
        })
    }
}

/// Everything a run reads: ground truth, prior tables, information-gain
/// tables and the start set.
#[derive(Debug, Clone, Copy)]
pub struct Problem<'a> {
    pub instance: &'a ProblemInstance,
    pub tables: &'a ModelTables,
    pub gammas: &'a GammaTables,
    pub start: &'a GridMask,
}

impl<'a> Problem<'a> {
    pub fn validate(&self) -> Result<()> {
        if self.start.is_empty() {
            return Err(Error::EmptySeedSet);
        }
        if self.start.universe() != self.instance.domain.len() {
            return Err(Error::invalid("start set does not match the domain"));
        }
        if self.tables.safety.len() != self.instance.n_safety() || self.gammas.safety.len() != self.instance.n_safety()
        {
            return Err(Error::invalid("one prior and one gamma table per safety function required"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Expand,
    Optimize,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Expand => "expand",
            Stage::Optimize => "optimize",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub stage: Stage,
    pub x: usize,
    /// Safety function whose width drove an expansion step.
    pub target: Option<usize>,
    /// Noisy utility value, or 1/0 for a won/lost duel.
    pub y_f: f64,
    pub y_g: Vec<f64>,
    pub safe_size: usize,
    pub expander_size: usize,
    /// Best true utility among the points chosen so far.
    pub reward: f64,
    /// The chosen point violated a true safety threshold.
    pub violation: bool,
    /// Total confidence contradictions so far.
    pub contradictions: usize,
    /// CEI found no admissible point and fell back to a seed.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub algorithm: Algorithm,
    pub steps: Vec<StepRecord>,
    /// Number of stage-one iterations.
    pub stage_one_length: usize,
    /// Argmax of the utility posterior mean over the final safe set.
    pub recommended: usize,
    /// Best noisy utility observation and where it was taken.
    pub best_observed: Option<(usize, f64)>,
    pub final_safe: GridMask,
}

impl Trace {
    pub fn violations(&self) -> usize {
        self.steps.iter().filter(|s| s.violation).count()
    }

    pub fn final_reward(&self) -> f64 {
        self.steps.last().map_or(f64::NEG_INFINITY, |s| s.reward)
    }
}

/// State visible to an observer just before the chosen point is evaluated.
pub struct StepSnapshot<'a> {
    pub t: usize,
    pub stage: Stage,
    pub chosen: usize,
    /// Confidence intervals `C_t`; absent for CEI.
    pub confidence: Option<&'a ConfidenceState>,
    /// Safe set and expanders at `t`; absent for CEI.
    pub safe: Option<&'a SafeState>,
    /// Utility posterior after `t - 1` observations.
    pub utility_mean: &'a [f64],
    pub utility_variance: &'a [f64],
    pub utility_beta: f64,
    pub safety_betas: &'a [f64],
}

/// Per-step hook for invariant checks and diagnostics.
pub trait RunObserver {
    fn on_step(&mut self, snapshot: &StepSnapshot<'_>);
}

impl RunObserver for () {
    fn on_step(&mut self, _snapshot: &StepSnapshot<'_>) {}
}

impl<F: FnMut(&StepSnapshot<'_>)> RunObserver for F {
    fn on_step(&mut self, snapshot: &StepSnapshot<'_>) {
        self(snapshot)
    }
}

/// SplitMix64 finalizer applied to `a` combined with `b`.
pub fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.name().parse::<Algorithm>().unwrap(), a);
        }
        assert!("nope".parse::<Algorithm>().is_err());
    }

    #[test]
    fn config_validation() {
        let ok = RunConfig::default();
        assert!(ok.validate().is_ok());
        let mut c = ok.clone();
        c.stage_switch = StageSwitch::Fixed { t0: 0 };
        assert!(c.validate().is_err());
        c.stage_switch = StageSwitch::Fixed { t0: 101 };
        assert!(c.validate().is_err());
        c.stage_switch = StageSwitch::Fixed { t0: 100 };
        assert!(c.validate().is_ok());
        let mut c = ok.clone();
        c.epsilon = 0.0;
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.acquisition = Rule::Cei;
        assert!(c.validate().is_err());
    }

    #[test]
    fn seed_mixing_separates_neighbours() {
        assert_ne!(mix_seed(1, 2), mix_seed(2, 1));
        assert_ne!(mix_seed(0, 0), mix_seed(0, 1));
        assert_eq!(mix_seed(7, 9), mix_seed(7, 9));
    }
}
