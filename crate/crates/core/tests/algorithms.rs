mod common;

use common::{line_instance, Fixture};
use stageopt_core::algorithms::{Algorithm, Feedback, RunConfig, Stage, StageSwitch, StepSnapshot};
use stageopt_core::domain::GridMask;
use stageopt_core::kernel::KernelSpec;
use stageopt_core::preference::Link;
use stageopt_core::reachability::{reach_closure, ReachabilityQuery};
use stageopt_core::safe_set::SafeSetVariant;
use stageopt_core::synthetic::{InstanceGenerator, Scenario, ScenarioConfig};

fn matern() -> KernelSpec {
    KernelSpec::matern(1.2, 0.2, 1.0).unwrap()
}

/// Nine points on [0, 1], a concave safety function centred at 0.5 and a
/// utility peaking at 0.25.
fn parabola_fixture(noise: f64, horizon: usize) -> Fixture {
    let xs: Vec<f64> = (0..9).map(|i| i as f64 / 8.0).collect();
    let g = xs.iter().map(|x| 0.5 - (x - 0.5) * (x - 0.5)).collect();
    let f = xs.iter().map(|x| 1.0 - 4.0 * (x - 0.25) * (x - 0.25)).collect();
    let inst = line_instance(f, vec![g], vec![0.3], vec![4], noise, matern(), matern());
    Fixture::new(inst, horizon)
}

/// Small synthetic instance on a 7x7 grid.
fn grid_fixture(scenario: Scenario, seed: u64, horizon: usize) -> Fixture {
    let mut cfg = ScenarioConfig::new(scenario);
    cfg.points_per_axis = 7;
    let inst = InstanceGenerator::new(cfg).unwrap().generate(seed).unwrap();
    Fixture::new(inst, horizon)
}

#[test]
fn single_iteration_takes_one_expansion_step() {
    let fx = parabola_fixture(1e-8, 1);
    let config = RunConfig {
        horizon: 1,
        stage_switch: StageSwitch::Fixed { t0: 1 },
        ..RunConfig::default()
    };
    let trace = fx.run(Algorithm::StageOpt, &config, 0);
    assert_eq!(trace.steps.len(), 1);
    assert_eq!(trace.steps[0].stage, Stage::Expand);
    assert_eq!(trace.steps[0].x, 4);
    assert_eq!(trace.stage_one_length, 1);
    assert!(!trace.steps[0].violation);
}

#[test]
fn expansion_reaches_the_oracle_closure_on_a_line() {
    let horizon = 90;
    let fx = parabola_fixture(1e-8, horizon);
    let config = RunConfig {
        horizon,
        stage_switch: StageSwitch::Fixed { t0: horizon },
        ..RunConfig::default()
    };
    let trace = fx.run(Algorithm::StageOpt, &config, 0);
    let inst = &fx.instance;
    let q = ReachabilityQuery::new(&inst.domain, &inst.safety, &inst.spec, 0.0).unwrap();
    let closure = reach_closure(&q, &inst.seed_mask(0));
    assert_eq!(closure, GridMask::from_indices(9, 1..=7));
    assert_eq!(trace.final_safe, closure);
    assert_eq!(trace.violations(), 0);
}

#[test]
fn runs_are_deterministic_in_the_seed() {
    let fx = grid_fixture(Scenario::OneSafety, 3, 40);
    for algorithm in Algorithm::ALL {
        let config = RunConfig {
            horizon: 40,
            seed: 17,
            variant: SafeSetVariant::GpOnly,
            ..RunConfig::default()
        };
        let a = fx.run(algorithm, &config, 0);
        let b = fx.run(algorithm, &config, 0);
        assert_eq!(a, b, "{}", algorithm.name());
        let other = fx.run(algorithm, &RunConfig { seed: 18, ..config }, 0);
        assert_ne!(a.steps, other.steps, "{}", algorithm.name());
    }
}

#[test]
fn chosen_points_lie_in_the_current_safe_set() {
    for scenario in [Scenario::OneSafety, Scenario::ThreeSafety] {
        let fx = grid_fixture(scenario, 5, 40);
        for variant in [SafeSetVariant::Lipschitz, SafeSetVariant::GpOnly] {
            for algorithm in [Algorithm::StageOpt, Algorithm::SafeOpt, Algorithm::StageOptDueling] {
                let config = RunConfig {
                    horizon: 40,
                    variant,
                    seed: 2,
                    ..RunConfig::default()
                };
                let start = fx.instance.seed_mask(1);
                let mut previous: Option<GridMask> = None;
                let mut check = |s: &StepSnapshot<'_>| {
                    let state = s.safe.unwrap();
                    assert!(state.safe.contains(s.chosen), "{} picked {}", algorithm.name(), s.chosen);
                    assert!(state.expanders.is_subset(&state.safe));
                    if let Some(p) = &previous {
                        assert!(p.is_subset(&state.safe));
                    }
                    previous = Some(state.safe.clone());
                };
                algorithm.run_observed(&fx.problem(&start), &config, &mut check).unwrap();
            }
        }
    }
}

#[test]
fn intervals_only_shrink() {
    let fx = grid_fixture(Scenario::ThreeSafety, 8, 30);
    let config = RunConfig {
        horizon: 30,
        seed: 4,
        ..RunConfig::default()
    };
    let start = fx.instance.seed_mask(0);
    let mut previous: Option<Vec<(Vec<f64>, Vec<f64>)>> = None;
    let mut check = |s: &StepSnapshot<'_>| {
        let conf = s.confidence.unwrap();
        let now: Vec<_> = std::iter::once(&conf.utility)
            .chain(&conf.safety)
            .map(|iv| (iv.lower.clone(), iv.upper.clone()))
            .collect();
        if let Some(p) = &previous {
            for ((lo0, hi0), (lo1, hi1)) in p.iter().zip(&now) {
                for x in 0..lo0.len() {
                    assert!(lo1[x] >= lo0[x] && hi1[x] <= hi0[x] && lo1[x] <= hi1[x]);
                }
            }
        }
        previous = Some(now);
    };
    Algorithm::StageOpt
        .run_observed(&fx.problem(&start), &config, &mut check)
        .unwrap();
}

#[test]
fn stage_two_never_returns_to_expansion() {
    let fx = grid_fixture(Scenario::OneSafety, 9, 60);
    let config = RunConfig {
        horizon: 60,
        variant: SafeSetVariant::GpOnly,
        stage_switch: StageSwitch::Plateau { window: 5, cap: 30 },
        ..RunConfig::default()
    };
    let trace = fx.run(Algorithm::StageOpt, &config, 0);
    let first_two = trace.steps.iter().position(|s| s.stage == Stage::Optimize).unwrap();
    assert!(first_two <= 30);
    assert_eq!(trace.stage_one_length, first_two);
    assert!(trace.steps[first_two..].iter().all(|s| s.stage == Stage::Optimize));
}

#[test]
fn reward_is_the_running_best_true_utility() {
    let fx = grid_fixture(Scenario::OneSafety, 12, 30);
    for algorithm in Algorithm::ALL {
        let trace = fx.run(algorithm, &RunConfig { horizon: 30, ..RunConfig::default() }, 0);
        let mut best = f64::NEG_INFINITY;
        for s in &trace.steps {
            best = best.max(fx.instance.utility[s.x]);
            assert_eq!(s.reward, best);
        }
    }
}

#[test]
fn cei_without_active_constraints_admits_everything() {
    let fx = parabola_fixture(0.0025, 20);
    let mut inst = fx.instance.clone();
    inst.spec.thresholds = vec![-10.0];
    let fx = Fixture::new(inst, 20);
    let trace = fx.run(Algorithm::Cei, &RunConfig { horizon: 20, ..RunConfig::default() }, 0);
    assert!(trace.steps.iter().all(|s| s.safe_size == 9 && !s.fallback));
    assert_eq!(trace.final_safe, GridMask::full(9));
}

#[test]
fn cei_falls_back_to_the_seed_when_nothing_is_admissible() {
    let fx = parabola_fixture(0.0025, 5);
    let config = RunConfig {
        horizon: 5,
        cei_delta: 1e-12,
        ..RunConfig::default()
    };
    let trace = fx.run(Algorithm::Cei, &config, 0);
    assert!(trace.steps[0].fallback);
    assert_eq!(trace.steps[0].x, 4);
}

#[test]
fn dueling_finds_the_better_of_two_points() {
    let kernel = KernelSpec::matern(1.2, 0.2, 1.0).unwrap();
    let inst = line_instance(
        vec![0.0, 3.0],
        vec![vec![1.0, 1.0]],
        vec![0.0],
        vec![0],
        1e-6,
        kernel.clone(),
        kernel,
    );
    let fx = Fixture::new(inst, 50);
    let mut hits = 0;
    for seed in 0..10 {
        let config = RunConfig {
            horizon: 50,
            seed,
            feedback: Feedback::Dueling(Link::Logit),
            ..RunConfig::default()
        };
        let trace = fx.run(Algorithm::StageOptDueling, &config, 0);
        assert_eq!(trace.violations(), 0);
        assert!(trace.best_observed.is_none());
        hits += usize::from(trace.recommended == 1);
    }
    assert!(hits >= 9, "recommended the optimum in {hits} of 10 runs");
}

#[test]
fn invalid_configurations_are_rejected() {
    let fx = parabola_fixture(0.0025, 5);
    let start = fx.instance.seed_mask(0);
    let bad = [
        RunConfig { horizon: 0, ..RunConfig::default() },
        RunConfig {
            horizon: 5,
            stage_switch: StageSwitch::Fixed { t0: 6 },
            ..RunConfig::default()
        },
        RunConfig {
            horizon: 5,
            epsilon: 0.0,
            ..RunConfig::default()
        },
    ];
    for config in &bad {
        assert!(Algorithm::StageOpt.run(&fx.problem(&start), config).is_err());
    }
    let empty = GridMask::empty(9);
    assert!(Algorithm::SafeOpt
        .run(&fx.problem(&empty), &RunConfig { horizon: 5, ..RunConfig::default() })
        .is_err());
}
