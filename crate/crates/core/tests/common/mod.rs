#![allow(dead_code)]

use std::sync::Arc;

use stageopt_core::algorithms::{GammaTables, Problem, RunConfig, Trace};
use stageopt_core::domain::{lipschitz_constant, make_uniform_grid, GridFunction, GridMask};
use stageopt_core::kernel::KernelSpec;
use stageopt_core::safe_set::SafetySpec;
use stageopt_core::synthetic::{InstanceMetadata, ModelTables, ProblemInstance};

/// Instance on the uniform 1-D grid with one value per point, exact
/// Lipschitz constants and the given kernels.
pub fn line_instance(
    utility: Vec<f64>,
    safety: Vec<Vec<f64>>,
    thresholds: Vec<f64>,
    seeds: Vec<usize>,
    noise: f64,
    utility_kernel: KernelSpec,
    safety_kernel: KernelSpec,
) -> ProblemInstance {
    let n = utility.len();
    let domain = Arc::new(make_uniform_grid(1, n).unwrap());
    let safety: Vec<GridFunction> = safety.into_iter().map(|g| GridFunction::new(g).unwrap()).collect();
    let lipschitz = safety.iter().map(|g| lipschitz_constant(&domain, g).unwrap()).collect();
    let k = safety.len();
    ProblemInstance::new(
        domain,
        GridFunction::new(utility).unwrap(),
        safety,
        SafetySpec::new(thresholds, lipschitz).unwrap(),
        seeds,
        noise,
        vec![noise; k],
        InstanceMetadata {
            scenario: None,
            utility_kernel,
            safety_kernels: vec![safety_kernel; k],
            rng_seed: 0,
            attempts: 1,
        },
    )
    .unwrap()
}

/// Everything a run needs besides its configuration.
pub struct Fixture {
    pub instance: ProblemInstance,
    pub tables: ModelTables,
    pub gammas: GammaTables,
}

impl Fixture {
    pub fn new(instance: ProblemInstance, horizon: usize) -> Self {
        let tables = ModelTables::for_instance(&instance).unwrap();
        let gammas = GammaTables::estimate(&instance, &tables, horizon).unwrap();
        Fixture {
            instance,
            tables,
            gammas,
        }
    }

    pub fn problem<'a>(&'a self, start: &'a GridMask) -> Problem<'a> {
        Problem {
            instance: &self.instance,
            tables: &self.tables,
            gammas: &self.gammas,
            start,
        }
    }

    pub fn run(&self, algorithm: stageopt_core::algorithms::Algorithm, config: &RunConfig, seed_slot: usize) -> Trace {
        let start = self.instance.seed_mask(seed_slot);
        algorithm.run(&self.problem(&start), config).unwrap()
    }
}
