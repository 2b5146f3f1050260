//! Synthetic benchmark problems: GP-sampled utility and safety functions on a
//! uniform grid, thresholds and safe seeds derived from grid statistics, and
//! the noisy and pairwise feedback oracles.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};

use crate::confidence::FunctionId;
use crate::domain::{lipschitz_constant, make_uniform_grid, GridDomain, GridFunction, GridMask};
use crate::gp::PriorSampler;
use crate::kernel::{KernelSpec, KernelTable};
use crate::math::sqrt;
use crate::preference::Link;
use crate::safe_set::SafetySpec;
use crate::{Error, Result, Rng};

/// Noise variance of every observation channel in the benchmark.
pub const DEFAULT_NOISE_VARIANCE: f64 = 0.0025;
pub const DEFAULT_POINTS_PER_AXIS: usize = 25;
pub const DEFAULT_NU: f64 = 1.2;
pub const DEFAULT_UTILITY_LENGTH_SCALE: f64 = 0.2;
pub const DEFAULT_AMPLITUDE_RATIO: f64 = 0.1;
pub const DEFAULT_SEEDS_PER_INSTANCE: usize = 10;
pub const MAX_GENERATION_RETRIES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    OneSafety,
    ThreeSafety,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::OneSafety => "one_safety",
            Scenario::ThreeSafety => "three_safety",
        }
    }

    /// Length scales of the safety kernels.
    pub fn safety_length_scales(&self) -> Vec<f64> {
        match self {
            Scenario::OneSafety => alloc::vec![0.2],
            Scenario::ThreeSafety => alloc::vec![0.2, 0.4, 0.8],
        }
    }
}

impl core::str::FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one_safety" => Ok(Scenario::OneSafety),
            "three_safety" => Ok(Scenario::ThreeSafety),
            other => Err(Error::invalid(format!("unknown scenario `{other}`"))),
        }
    }
}

/// How the safety-to-utility amplitude ratio is applied to the kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AmplitudeRatioMode {
    /// The ratio scales the prior standard deviation.
    #[default]
    StdDev,
    /// The ratio scales the prior variance.
    Variance,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    /// Dimension of the unit-cube grid.
    pub dim: usize,
    pub points_per_axis: usize,
    pub nu: f64,
    pub utility_length_scale: f64,
    /// Prior variance of the utility.
    pub utility_amplitude: f64,
    pub safety_length_scales: Vec<f64>,
    pub amplitude_ratio: f64,
    pub ratio_mode: AmplitudeRatioMode,
    pub noise_variance: f64,
    pub seeds_per_instance: usize,
}

impl ScenarioConfig {
    pub fn new(scenario: Scenario) -> Self {
        ScenarioConfig {
            scenario,
            dim: 2,
            points_per_axis: DEFAULT_POINTS_PER_AXIS,
            nu: DEFAULT_NU,
            utility_length_scale: DEFAULT_UTILITY_LENGTH_SCALE,
            utility_amplitude: 1.0,
            safety_length_scales: scenario.safety_length_scales(),
            amplitude_ratio: DEFAULT_AMPLITUDE_RATIO,
            ratio_mode: AmplitudeRatioMode::StdDev,
            noise_variance: DEFAULT_NOISE_VARIANCE,
            seeds_per_instance: DEFAULT_SEEDS_PER_INSTANCE,
        }
    }

    /// Prior variance of each safety function.
    pub fn safety_amplitude(&self) -> f64 {
        match self.ratio_mode {
            AmplitudeRatioMode::StdDev => self.utility_amplitude * self.amplitude_ratio * self.amplitude_ratio,
            AmplitudeRatioMode::Variance => self.utility_amplitude * self.amplitude_ratio,
        }
    }

    pub fn utility_kernel(&self) -> Result<KernelSpec> {
        KernelSpec::matern(self.nu, self.utility_length_scale, self.utility_amplitude)
    }

    pub fn safety_kernels(&self) -> Result<Vec<KernelSpec>> {
        let amp = self.safety_amplitude();
        self.safety_length_scales
            .iter()
            .map(|&l| KernelSpec::matern(self.nu, l, amp))
            .collect()
    }
}

/// Generation metadata carried by an instance.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceMetadata {
    pub scenario: Option<Scenario>,
    pub utility_kernel: KernelSpec,
    pub safety_kernels: Vec<KernelSpec>,
    pub rng_seed: u64,
    /// Number of draws needed before a seed candidate existed.
    pub attempts: usize,
}

/// Ground truth for one benchmark problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance {
    pub domain: Arc<GridDomain>,
    pub utility: GridFunction,
    pub safety: Vec<GridFunction>,
    pub spec: SafetySpec,
    /// Safe seed points; each benchmark run starts from one of them.
    pub seeds: Vec<usize>,
    /// Observation noise variance of the utility.
    pub utility_noise: f64,
    /// Observation noise variance of each safety function.
    pub safety_noise: Vec<f64>,
    pub metadata: InstanceMetadata,
}

impl ProblemInstance {
    /// Assembles an instance and checks its invariants.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        domain: Arc<GridDomain>,
        utility: GridFunction,
        safety: Vec<GridFunction>,
        spec: SafetySpec,
        seeds: Vec<usize>,
        utility_noise: f64,
        safety_noise: Vec<f64>,
        metadata: InstanceMetadata,
    ) -> Result<Self> {
        let inst = ProblemInstance {
            domain,
            utility,
            safety,
            spec,
            seeds,
            utility_noise,
            safety_noise,
            metadata,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.domain.len();
        if self.utility.len() != n || self.safety.iter().any(|g| g.len() != n) {
            return Err(Error::invalid("function length differs from the domain"));
        }
        if self.safety.len() != self.spec.n_safety() {
            return Err(Error::LengthMismatch {
                expected: self.spec.n_safety(),
                got: self.safety.len(),
            });
        }
        if self.safety_noise.len() != self.safety.len() {
            return Err(Error::LengthMismatch {
                expected: self.safety.len(),
                got: self.safety_noise.len(),
            });
        }
        if self.metadata.safety_kernels.len() != self.safety.len() {
            return Err(Error::invalid("one safety kernel per safety function required"));
        }
        if !(self.utility_noise >= 0.0) || self.safety_noise.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::invalid("noise variances must be nonnegative"));
        }
        if self.seeds.is_empty() {
            return Err(Error::EmptySeedSet);
        }
        for &s in &self.seeds {
            if s >= n {
                return Err(Error::invalid(format!("seed index {s} outside the domain")));
            }
            if !self.is_safe(s) {
                return Err(Error::invalid(format!("seed {s} violates a safety threshold")));
            }
        }
        Ok(())
    }

    pub fn n_safety(&self) -> usize {
        self.safety.len()
    }

    /// True when every safety function meets its threshold at `x`.
    pub fn is_safe(&self, x: usize) -> bool {
        self.safety.iter().zip(&self.spec.thresholds).all(|(g, &h)| g[x] >= h)
    }

    pub fn true_safe_set(&self) -> GridMask {
        GridMask::from_indices(self.domain.len(), (0..self.domain.len()).filter(|&x| self.is_safe(x)))
    }

    /// Singleton start set for seed slot `k`.
    pub fn seed_mask(&self, k: usize) -> GridMask {
        GridMask::from_indices(self.domain.len(), [self.seeds[k % self.seeds.len()]])
    }

    pub fn value(&self, id: FunctionId, x: usize) -> f64 {
        match id {
            FunctionId::Utility => self.utility[x],
            FunctionId::Safety(i) => self.safety[i][x],
        }
    }

    pub fn noise_variance(&self, id: FunctionId) -> f64 {
        match id {
            FunctionId::Utility => self.utility_noise,
            FunctionId::Safety(i) => self.safety_noise[i],
        }
    }

    /// Best utility value over `mask` and its location.
    pub fn best_in(&self, mask: &GridMask) -> Option<(usize, f64)> {
        mask.iter()
            .map(|x| (x, self.utility[x]))
            .fold(None, |b: Option<(usize, f64)>, c| match b {
                Some(b) if b.1 >= c.1 => Some(b),
                _ => Some(c),
            })
    }
}

/// Prior kernel tables the algorithms model each function with.
#[derive(Debug, Clone)]
pub struct ModelTables {
    pub utility: Arc<KernelTable>,
    pub safety: Vec<Arc<KernelTable>>,
}

impl ModelTables {
    pub fn from_specs(domain: &GridDomain, utility: &KernelSpec, safety: &[KernelSpec]) -> Result<Self> {
        Ok(ModelTables {
            utility: KernelTable::from_spec(utility, domain)?.shared(),
            safety: safety
                .iter()
                .map(|s| KernelTable::from_spec(s, domain).map(KernelTable::shared))
                .collect::<Result<_>>()?,
        })
    }

    /// Tables built from the kernels an instance was generated with.
    pub fn for_instance(instance: &ProblemInstance) -> Result<Self> {
        Self::from_specs(
            &instance.domain,
            &instance.metadata.utility_kernel,
            &instance.metadata.safety_kernels,
        )
    }
}

/// Generator for one scenario. Kernel tables and prior factors are built once
/// and reused for every instance.
#[derive(Debug, Clone)]
pub struct InstanceGenerator {
    config: ScenarioConfig,
    domain: Arc<GridDomain>,
    tables: ModelTables,
    utility_kernel: KernelSpec,
    safety_kernels: Vec<KernelSpec>,
    utility_sampler: PriorSampler,
    safety_samplers: Vec<PriorSampler>,
}

impl InstanceGenerator {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        if config.safety_length_scales.is_empty() {
            return Err(Error::invalid("at least one safety function is required"));
        }
        if config.seeds_per_instance == 0 {
            return Err(Error::invalid("at least one seed per instance is required"));
        }
        if !(config.noise_variance >= 0.0) {
            return Err(Error::invalid("noise variance must be nonnegative"));
        }
        let domain = Arc::new(make_uniform_grid(config.dim, config.points_per_axis)?);
        let utility_kernel = config.utility_kernel()?;
        let safety_kernels = config.safety_kernels()?;
        let tables = ModelTables::from_specs(&domain, &utility_kernel, &safety_kernels)?;
        let utility_sampler = PriorSampler::new(&tables.utility)?;
        let safety_samplers = tables
            .safety
            .iter()
            .map(|t| PriorSampler::new(t))
            .collect::<Result<_>>()?;
        Ok(InstanceGenerator {
            config,
            domain,
            tables,
            utility_kernel,
            safety_kernels,
            utility_sampler,
            safety_samplers,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn tables(&self) -> &ModelTables {
        &self.tables
    }

    /// Draws one instance. Functions are redrawn while no point clears every
    /// seed bar, up to [`MAX_GENERATION_RETRIES`] times.
    pub fn generate(&self, rng_seed: u64) -> Result<ProblemInstance> {
        let mut rng = crate::rng_from_seed(rng_seed);
        let n = self.domain.len();
        for attempt in 1..=MAX_GENERATION_RETRIES {
            let utility = self.utility_sampler.sample(&mut rng)?;
            let safety: Vec<GridFunction> = self
                .safety_samplers
                .iter()
                .map(|s| s.sample(&mut rng))
                .collect::<Result<_>>()?;
            let stats: Vec<(f64, f64)> = safety.iter().map(|g| (g.mean(), g.std_dev())).collect();
            let candidates: Vec<usize> = (0..n)
                .filter(|&x| safety.iter().zip(&stats).all(|(g, &(m, s))| g[x] > m + s))
                .collect();
            if candidates.is_empty() {
                continue;
            }
            let thresholds = stats.iter().map(|&(m, s)| m + 0.5 * s).collect();
            let lipschitz = safety
                .iter()
                .map(|g| lipschitz_constant(&self.domain, g))
                .collect::<Result<_>>()?;
            let spec = SafetySpec::new(thresholds, lipschitz)?;
            let seeds = draw_seeds(&candidates, self.config.seeds_per_instance, &mut rng);
            return ProblemInstance::new(
                self.domain.clone(),
                utility,
                safety,
                spec,
                seeds,
                self.config.noise_variance,
                alloc::vec![self.config.noise_variance; self.safety_samplers.len()],
                InstanceMetadata {
                    scenario: Some(self.config.scenario),
                    utility_kernel: self.utility_kernel.clone(),
                    safety_kernels: self.safety_kernels.clone(),
                    rng_seed,
                    attempts: attempt,
                },
            );
        }
        Err(Error::GenerationFailed(MAX_GENERATION_RETRIES))
    }
}

/// `count` seeds drawn uniformly without replacement; when there are fewer
/// candidates than requested the shuffled candidates are cycled.
fn draw_seeds(candidates: &[usize], count: usize, rng: &mut Rng) -> Vec<usize> {
    let mut shuffled = candidates.to_vec();
    shuffled.shuffle(rng);
    (0..count).map(|k| shuffled[k % shuffled.len()]).collect()
}

/// Instance of a default scenario from a seed.
pub fn make_instance(scenario: Scenario, rng_seed: u64) -> Result<ProblemInstance> {
    InstanceGenerator::new(ScenarioConfig::new(scenario))?.generate(rng_seed)
}

/// True value plus Gaussian noise with the instance's noise variance.
pub fn observe(instance: &ProblemInstance, id: FunctionId, x: usize, rng: &mut Rng) -> f64 {
    let value = instance.value(id, x);
    let var = instance.noise_variance(id);
    if var == 0.0 {
        return value;
    }
    let normal = Normal::new(0.0, sqrt(var)).expect("finite nonnegative scale");
    value + normal.sample(rng)
}

/// Bernoulli draw that `x_a` beats `x_b` with probability
/// `link(f(x_a), f(x_b))`.
pub fn duel(instance: &ProblemInstance, x_a: usize, x_b: usize, link: Link, rng: &mut Rng) -> bool {
    let p = link.prob(instance.utility[x_a], instance.utility[x_b]);
    rng.random::<f64>() < p
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::ln;

    fn gen(scenario: Scenario) -> InstanceGenerator {
        let mut cfg = ScenarioConfig::new(scenario);
        cfg.points_per_axis = 10;
        InstanceGenerator::new(cfg).unwrap()
    }

    #[test]
    fn one_safety_default_shape() {
        let inst = make_instance(Scenario::OneSafety, 3).unwrap();
        assert_eq!(inst.domain.len(), 625);
        assert_eq!(inst.n_safety(), 1);
        assert_eq!(inst.seeds.len(), 10);
        assert_eq!(inst.utility_noise, 0.0025);
    }

    #[test]
    fn three_safety_length_scales() {
        let cfg = ScenarioConfig::new(Scenario::ThreeSafety);
        let scales: Vec<f64> = cfg
            .safety_kernels()
            .unwrap()
            .iter()
            .map(|k| match k.length_scale {
                crate::kernel::LengthScale::Shared(l) => l,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(scales, [0.2, 0.4, 0.8]);
        assert!((cfg.safety_amplitude() - 0.01).abs() < 1e-15);
        let g = gen(Scenario::ThreeSafety);
        assert_eq!(g.generate(1).unwrap().n_safety(), 3);
    }

    #[test]
    fn variance_ratio_mode() {
        let mut cfg = ScenarioConfig::new(Scenario::OneSafety);
        cfg.ratio_mode = AmplitudeRatioMode::Variance;
        assert!((cfg.safety_amplitude() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn generation_is_deterministic() {
        let g = gen(Scenario::OneSafety);
        assert_eq!(g.generate(11).unwrap(), g.generate(11).unwrap());
        assert_ne!(g.generate(11).unwrap().utility, g.generate(12).unwrap().utility);
    }

    #[test]
    fn thresholds_and_seeds_follow_grid_statistics() {
        let g = gen(Scenario::ThreeSafety);
        for seed in 0..5 {
            let inst = g.generate(seed).unwrap();
            for (i, f) in inst.safety.iter().enumerate() {
                let (m, s) = (f.mean(), f.std_dev());
                assert!((inst.spec.thresholds[i] - (m + 0.5 * s)).abs() < 1e-12);
                for &x in &inst.seeds {
                    assert!(f[x] > m + s);
                }
                assert_eq!(inst.spec.lipschitz[i], lipschitz_constant(&inst.domain, f).unwrap());
            }
        }
    }

    #[test]
    fn noise_free_observation_is_exact() {
        let mut inst = gen(Scenario::OneSafety).generate(0).unwrap();
        inst.utility_noise = 0.0;
        let mut rng = crate::rng_from_seed(0);
        assert_eq!(observe(&inst, FunctionId::Utility, 4, &mut rng), inst.utility[4]);
    }

    #[test]
    fn observation_noise_moments() {
        let inst = gen(Scenario::OneSafety).generate(0).unwrap();
        let mut rng = crate::rng_from_seed(5);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| observe(&inst, FunctionId::Safety(0), 7, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1) as f64;
        assert!((var / 0.0025 - 1.0).abs() < 0.05);
        assert!((mean - inst.safety[0][7]).abs() < 3.0 * 0.05 / sqrt(n as f64));
    }

    #[test]
    fn duel_rates() {
        let inst = gen(Scenario::OneSafety).generate(0).unwrap();
        let (a, b) = (0, 9);
        let p = Link::Logit.prob(inst.utility[a], inst.utility[b]);
        let mut rng = crate::rng_from_seed(2);
        let n = 10_000;
        let wins = (0..n).filter(|_| duel(&inst, a, b, Link::Logit, &mut rng)).count();
        let rate = wins as f64 / n as f64;
        assert!((rate - p).abs() < 3.0 * sqrt(p * (1.0 - p) / n as f64));
        assert_eq!(Link::Logit.prob(inst.utility[a], inst.utility[a]), 0.5);
        assert!(Link::Logit.prob(ln(1e300), 0.0) > 1.0 - 1e-12);
    }

    #[test]
    fn seeds_cycle_when_candidates_are_scarce() {
        let mut rng = crate::rng_from_seed(0);
        let seeds = draw_seeds(&[4, 8], 5, &mut rng);
        assert_eq!(seeds.len(), 5);
        assert_eq!(seeds[0], seeds[2]);
        assert_ne!(seeds[0], seeds[1]);
    }

    #[test]
    fn invalid_instances_are_rejected() {
        let inst = gen(Scenario::OneSafety).generate(0).unwrap();
        let mut bad = inst.clone();
        let unsafe_point = (0..inst.domain.len()).find(|&x| !inst.is_safe(x)).unwrap();
        bad.seeds = alloc::vec![unsafe_point];
        assert!(bad.validate().is_err());
        let mut bad = inst.clone();
        bad.seeds.clear();
        assert_eq!(bad.validate(), Err(Error::EmptySeedSet));
    }
}
