//! Benchmark sweeps: scenarios × instances × seeds × algorithms, run in a
//! worker pool and written as per-step, per-run and aggregate CSV files.
//!
//! Every run's seed is derived from the master seed and the run's
//! coordinates, and rows are emitted in coordinate order, so the output
//! does not depend on scheduling or on the number of workers.

use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use stageopt_core::algorithms::{mix_seed, Algorithm, GammaTables, Problem, RunConfig, Trace};
use stageopt_core::synthetic::{InstanceGenerator, ModelTables, ProblemInstance, Scenario, ScenarioConfig};

use crate::config::{Settings, DEFAULT_INSTANCES, DEFAULT_JOBS};

/// Exact header of the per-step file.
pub const RUNS_HEADER: &str = "run_id,scenario,instance_id,seed_id,algorithm,t,stage,x_index,y_f,y_g1,y_g2,y_g3,safe_size,expander_size,reward,violation,contradictions";
/// Most safety functions the per-step schema can hold.
pub const MAX_SAFETY_COLUMNS: usize = 3;

const SCENARIO_STREAM: u64 = 0x5C3A_0001;
const RUN_STREAM: u64 = 0x5C3A_0002;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkPlan {
    pub scenarios: Vec<Scenario>,
    pub algorithms: Vec<Algorithm>,
    pub instances: usize,
    pub seeds_per_instance: usize,
    /// Shared run settings; the seed field is replaced per run.
    pub run_config: RunConfig,
    pub master_seed: u64,
    pub jobs: usize,
    pub points_per_axis: usize,
}

impl Default for BenchmarkPlan {
    fn default() -> Self {
        BenchmarkPlan {
            scenarios: vec![Scenario::OneSafety],
            algorithms: vec![Algorithm::StageOpt, Algorithm::SafeOpt, Algorithm::Cei],
            instances: DEFAULT_INSTANCES,
            seeds_per_instance: stageopt_core::synthetic::DEFAULT_SEEDS_PER_INSTANCE,
            run_config: RunConfig::default(),
            master_seed: 0,
            jobs: DEFAULT_JOBS,
            points_per_axis: stageopt_core::synthetic::DEFAULT_POINTS_PER_AXIS,
        }
    }
}

impl BenchmarkPlan {
    pub fn from_settings(s: &Settings) -> Result<Self> {
        let d = BenchmarkPlan::default();
        let plan = BenchmarkPlan {
            scenarios: s.scenarios()?,
            algorithms: s.algorithms()?,
            instances: s.instances.unwrap_or(d.instances),
            seeds_per_instance: s.seeds.unwrap_or(d.seeds_per_instance),
            run_config: s.run_config()?,
            master_seed: s.seed.unwrap_or(d.master_seed),
            jobs: s.jobs.unwrap_or(d.jobs),
            points_per_axis: s.grid.unwrap_or(d.points_per_axis),
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scenarios.is_empty() || self.algorithms.is_empty() {
            bail!("a plan needs at least one scenario and one algorithm");
        }
        if self.instances == 0 || self.seeds_per_instance == 0 || self.jobs == 0 {
            bail!("instances, seeds and jobs must be positive");
        }
        self.run_config.validate().map_err(|e| anyhow!("{e}"))
    }

    pub fn total_runs(&self) -> usize {
        self.scenarios.len() * self.instances * self.seeds_per_instance * self.algorithms.len()
    }

    pub fn scenario_config(&self, scenario: Scenario) -> ScenarioConfig {
        let mut cfg = ScenarioConfig::new(scenario);
        cfg.points_per_axis = self.points_per_axis;
        cfg.seeds_per_instance = self.seeds_per_instance;
        cfg
    }

    /// Run coordinates in output order.
    pub fn keys(&self) -> Vec<RunKey> {
        let mut keys = Vec::with_capacity(self.total_runs());
        for &scenario in &self.scenarios {
            for instance in 0..self.instances {
                for seed_index in 0..self.seeds_per_instance {
                    for &algorithm in &self.algorithms {
                        keys.push(RunKey {
                            scenario,
                            instance,
                            seed_index,
                            algorithm,
                        });
                    }
                }
            }
        }
        keys
    }
}

fn scenario_code(s: Scenario) -> u64 {
    match s {
        Scenario::OneSafety => 1,
        Scenario::ThreeSafety => 3,
    }
}

/// Seed of instance `instance` of `scenario`.
pub fn instance_seed(master: u64, scenario: Scenario, instance: usize) -> u64 {
    mix_seed(mix_seed(mix_seed(master, SCENARIO_STREAM), scenario_code(scenario)), instance as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RunKey {
    pub scenario: Scenario,
    pub instance: usize,
    pub seed_index: usize,
    pub algorithm: Algorithm,
}

impl RunKey {
    pub fn run_id(&self) -> String {
        format!(
            "{}-{}-{}-{}",
            self.scenario.name(),
            self.instance,
            self.seed_index,
            self.algorithm.name()
        )
    }

    /// Seed of this run; independent of every other coordinate in the plan.
    pub fn seed(&self, master: u64) -> u64 {
        let mut s = mix_seed(master, RUN_STREAM);
        for part in [
            scenario_code(self.scenario),
            self.instance as u64,
            self.seed_index as u64,
            self.algorithm.code(),
        ] {
            s = mix_seed(s, part);
        }
        s
    }
}

/// One finished (or failed) run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub key: RunKey,
    pub seed: u64,
    pub start: Option<usize>,
    /// Largest true utility over the true safe set.
    pub best_safe: f64,
    pub true_safe_size: usize,
    pub result: Result<Trace, String>,
}

impl RunOutput {
    fn failed(key: RunKey, seed: u64, error: String) -> Self {
        RunOutput {
            key,
            seed,
            start: None,
            best_safe: f64::NAN,
            true_safe_size: 0,
            result: Err(error),
        }
    }
}

/// Runs `algorithm` from seed slot `seed_index` of a prepared instance.
pub fn execute_run(
    key: RunKey,
    instance: &ProblemInstance,
    tables: &ModelTables,
    gammas: &GammaTables,
    base: &RunConfig,
    seed: u64,
) -> RunOutput {
    let start = instance.seed_mask(key.seed_index);
    let problem = Problem {
        instance,
        tables,
        gammas,
        start: &start,
    };
    let config = RunConfig { seed, ..base.clone() };
    let result = key.algorithm.run(&problem, &config).map_err(|e| e.to_string());
    let safe = instance.true_safe_set();
    let first = start.iter().next();
    RunOutput {
        key,
        seed,
        start: first,
        best_safe: instance.best_in(&safe).map_or(f64::NAN, |(_, v)| v),
        true_safe_size: safe.len(),
        result,
    }
}

pub struct BenchResults {
    pub plan: BenchmarkPlan,
    pub runs: Vec<RunOutput>,
}

struct PreparedScenario {
    instances: Vec<Result<ProblemInstance, String>>,
    tables: ModelTables,
    gammas: Option<GammaTables>,
}

fn prepare(plan: &BenchmarkPlan, scenario: Scenario) -> Result<PreparedScenario> {
    let generator = InstanceGenerator::new(plan.scenario_config(scenario)).map_err(|e| anyhow!("{e}"))?;
    let instances: Vec<Result<ProblemInstance, String>> = (0..plan.instances)
        .into_par_iter()
        .map(|i| {
            generator
                .generate(instance_seed(plan.master_seed, scenario, i))
                .map_err(|e| e.to_string())
        })
        .collect();
    let tables = generator.tables().clone();
    // every instance of a scenario shares kernels and noise levels
    let gammas = match instances.iter().find_map(|r| r.as_ref().ok()) {
        Some(inst) => {
            Some(GammaTables::estimate(inst, &tables, plan.run_config.horizon).map_err(|e| anyhow!("{e}"))?)
        }
        None => None,
    };
    Ok(PreparedScenario {
        instances,
        tables,
        gammas,
    })
}

/// Runs every run of the plan on a pool of `plan.jobs` workers.
pub fn run_benchmark(plan: &BenchmarkPlan) -> Result<BenchResults> {
    plan.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.jobs)
        .build()
        .context("building the worker pool")?;
    pool.install(|| {
        let mut runs = Vec::with_capacity(plan.total_runs());
        for &scenario in &plan.scenarios {
            let prepared = prepare(plan, scenario)?;
            let keys: Vec<RunKey> = plan.keys().into_iter().filter(|k| k.scenario == scenario).collect();
            let outputs: Vec<RunOutput> = keys
                .into_par_iter()
                .map(|key| {
                    let seed = key.seed(plan.master_seed);
                    match (&prepared.instances[key.instance], &prepared.gammas) {
                        (Ok(inst), Some(gammas)) => {
                            execute_run(key, inst, &prepared.tables, gammas, &plan.run_config, seed)
                        }
                        (Err(e), _) => RunOutput::failed(key, seed, format!("instance generation: {e}")),
                        (Ok(_), None) => unreachable!("gamma tables exist whenever an instance does"),
                    }
                })
                .collect();
            runs.extend(outputs);
        }
        Ok(BenchResults {
            plan: plan.clone(),
            runs,
        })
    })
}

/// One line of the per-step file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub run_id: String,
    pub scenario: String,
    pub instance_id: usize,
    pub seed_id: usize,
    pub algorithm: String,
    pub t: usize,
    pub stage: String,
    pub x_index: usize,
    pub y_f: f64,
    pub y_g1: Option<f64>,
    pub y_g2: Option<f64>,
    pub y_g3: Option<f64>,
    pub safe_size: usize,
    pub expander_size: usize,
    pub reward: f64,
    pub violation: u8,
    pub contradictions: usize,
}

/// One line of the per-run file. Failed runs carry only their coordinates
/// and the error message.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub run_id: String,
    pub scenario: String,
    pub instance_id: usize,
    pub seed_id: usize,
    pub algorithm: String,
    pub run_seed: u64,
    pub start_index: Option<usize>,
    pub stage_one_length: Option<usize>,
    pub recommended: Option<usize>,
    pub final_reward: Option<f64>,
    pub best_safe_utility: Option<f64>,
    pub final_safe_size: Option<usize>,
    pub true_safe_size: Option<usize>,
    pub violations: Option<usize>,
    pub contradictions: Option<usize>,
    pub error: String,
}

impl RunOutput {
    pub fn step_rows(&self) -> Result<Vec<StepRow>> {
        let Ok(trace) = &self.result else {
            return Ok(Vec::new());
        };
        trace_rows(
            &self.key.run_id(),
            self.key.scenario.name(),
            self.key.instance,
            self.key.seed_index,
            trace,
        )
    }

    pub fn summary_row(&self) -> SummaryRow {
        let trace = self.result.as_ref().ok();
        SummaryRow {
            run_id: self.key.run_id(),
            scenario: self.key.scenario.name().to_string(),
            instance_id: self.key.instance,
            seed_id: self.key.seed_index,
            algorithm: self.key.algorithm.name().to_string(),
            run_seed: self.seed,
            start_index: self.start,
            stage_one_length: trace.map(|t| t.stage_one_length),
            recommended: trace.map(|t| t.recommended),
            final_reward: trace.map(|t| t.final_reward()),
            best_safe_utility: trace.map(|_| self.best_safe),
            final_safe_size: trace.map(|t| t.final_safe.len()),
            true_safe_size: trace.map(|_| self.true_safe_size),
            violations: trace.map(|t| t.violations()),
            contradictions: trace.map(|t| t.steps.last().map_or(0, |s| s.contradictions)),
            error: self.result.as_ref().err().cloned().unwrap_or_default(),
        }
    }
}

/// Per-step rows of one trace.
pub fn trace_rows(run_id: &str, scenario: &str, instance_id: usize, seed_id: usize, trace: &Trace) -> Result<Vec<StepRow>> {
    if trace.steps.iter().any(|s| s.y_g.len() > MAX_SAFETY_COLUMNS) {
        bail!("per-step schema holds at most {MAX_SAFETY_COLUMNS} safety functions");
    }
    Ok(trace
        .steps
        .iter()
        .map(|s| StepRow {
            run_id: run_id.to_string(),
            scenario: scenario.to_string(),
            instance_id,
            seed_id,
            algorithm: trace.algorithm.name().to_string(),
            t: s.t,
            stage: s.stage.name().to_string(),
            x_index: s.x,
            y_f: s.y_f,
            y_g1: s.y_g.first().copied(),
            y_g2: s.y_g.get(1).copied(),
            y_g3: s.y_g.get(2).copied(),
            safe_size: s.safe_size,
            expander_size: s.expander_size,
            reward: s.reward,
            violation: u8::from(s.violation),
            contradictions: s.contradictions,
        })
        .collect())
}

/// Per `(scenario, algorithm, t)` statistics over runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scenario: String,
    pub algorithm: String,
    pub t: usize,
    pub runs: usize,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub se_reward: f64,
    pub mean_safe_size: f64,
    pub se_safe_size: f64,
    /// Sum of per-step violation flags.
    pub violations: usize,
    /// Sum of the running contradiction counts.
    pub contradictions: usize,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups step rows by `(scenario, algorithm, t)` in first-seen order of
/// `(scenario, algorithm)` and increasing `t`.
pub fn aggregate<'a>(rows: impl IntoIterator<Item = &'a StepRow>) -> Vec<AggregateRow> {
    let mut groups: Vec<((String, String), Vec<Vec<&StepRow>>)> = Vec::new();
    for r in rows {
        let key = (r.scenario.clone(), r.algorithm.clone());
        let idx = match groups.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                groups.push((key, Vec::new()));
                groups.len() - 1
            }
        };
        let by_t = &mut groups[idx].1;
        if by_t.len() < r.t {
            by_t.resize_with(r.t, Vec::new);
        }
        by_t[r.t - 1].push(r);
    }
    let mut out = Vec::new();
    for ((scenario, algorithm), by_t) in groups {
        for (i, rows) in by_t.iter().enumerate() {
            if rows.is_empty() {
                continue;
            }
            let n = rows.len();
            let rewards: Vec<f64> = rows.iter().map(|r| r.reward).collect();
            let sizes: Vec<f64> = rows.iter().map(|r| r.safe_size as f64).collect();
            let (mean_reward, std_reward) = mean_sd(&rewards);
            let (mean_safe_size, std_size) = mean_sd(&sizes);
            out.push(AggregateRow {
                scenario: scenario.clone(),
                algorithm: algorithm.clone(),
                t: i + 1,
                runs: n,
                mean_reward,
                std_reward,
                se_reward: std_reward / (n as f64).sqrt(),
                mean_safe_size,
                se_safe_size: std_size / (n as f64).sqrt(),
                violations: rows.iter().map(|r| r.violation as usize).sum(),
                contradictions: rows.iter().map(|r| r.contradictions).sum(),
            });
        }
    }
    out
}

impl BenchResults {
    pub fn step_rows(&self) -> Result<Vec<StepRow>> {
        let mut rows = Vec::new();
        for r in &self.runs {
            rows.extend(r.step_rows()?);
        }
        Ok(rows)
    }

    pub fn summary_rows(&self) -> Vec<SummaryRow> {
        self.runs.iter().map(RunOutput::summary_row).collect()
    }

    /// Writes `runs.csv`, `summary.csv` and `aggregate.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let steps = self.step_rows()?;
        write_csv(&dir.join("runs.csv"), &steps)?;
        write_csv(&dir.join("summary.csv"), &self.summary_rows())?;
        write_csv(&dir.join("aggregate.csv"), &aggregate(&steps))?;
        Ok(())
    }
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Serializes rows to CSV text, header included.
pub fn csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let mut bytes = w.into_inner().map_err(|e| anyhow!("{e}"))?;
    bytes.flush()?;
    Ok(String::from_utf8(bytes)?)
}

/// Reads a per-step file; any header other than [`RUNS_HEADER`] is fatal.
pub fn read_step_rows(path: &Path) -> Result<Vec<StepRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let header: Vec<&str> = r.headers()?.iter().collect();
    if header.join(",") != RUNS_HEADER {
        bail!("{}: header does not match the per-step schema", path.display());
    }
    r.deserialize()
        .map(|row| row.with_context(|| format!("in {}", path.display())))
        .collect()
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregateRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    r.deserialize()
        .map(|row| row.with_context(|| format!("in {}", path.display())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_plan() -> BenchmarkPlan {
        BenchmarkPlan {
            instances: 1,
            seeds_per_instance: 1,
            algorithms: vec![Algorithm::StageOpt],
            points_per_axis: 6,
            run_config: RunConfig {
                horizon: 12,
                ..RunConfig::default()
            },
            ..BenchmarkPlan::default()
        }
    }

    fn row(t: usize, reward: f64, violation: u8) -> StepRow {
        StepRow {
            run_id: "r".into(),
            scenario: "one_safety".into(),
            instance_id: 0,
            seed_id: 0,
            algorithm: "stageopt".into(),
            t,
            stage: "expand".into(),
            x_index: 0,
            y_f: 0.0,
            y_g1: Some(0.0),
            y_g2: None,
            y_g3: None,
            safe_size: 2,
            expander_size: 1,
            reward,
            violation,
            contradictions: 1,
        }
    }

    #[test]
    fn header_matches_the_schema() {
        let text = csv_string(&[row(1, 0.0, 0)]).unwrap();
        assert_eq!(text.lines().next().unwrap(), RUNS_HEADER);
        assert!(text.lines().nth(1).unwrap().contains(",0.0,,,2,"));
    }

    #[test]
    fn single_run_plan_counts() {
        let res = run_benchmark(&tiny_plan()).unwrap();
        assert_eq!(res.runs.len(), 1);
        assert_eq!(res.step_rows().unwrap().len(), 12);
        assert_eq!(res.summary_rows().len(), 1);
        assert_eq!(res.summary_rows()[0].error, "");
    }

    #[test]
    fn aggregate_means_and_sums() {
        let mut a = row(1, 1.0, 1);
        let mut b = row(1, 3.0, 1);
        a.run_id = "a".into();
        b.run_id = "b".into();
        let agg = aggregate([&a, &b]);
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].mean_reward, 2.0);
        assert_eq!(agg[0].violations, 2);
        assert_eq!(agg[0].contradictions, 2);
        assert_eq!(agg[0].runs, 2);
        let single = aggregate([&a]);
        assert_eq!(single[0].mean_reward, 1.0);
        assert_eq!(single[0].std_reward, 0.0);
    }

    #[test]
    fn run_seeds_ignore_other_algorithms() {
        let key = RunKey {
            scenario: Scenario::OneSafety,
            instance: 3,
            seed_index: 2,
            algorithm: Algorithm::SafeOpt,
        };
        let mut plan = tiny_plan();
        plan.algorithms = vec![Algorithm::SafeOpt, Algorithm::Cei, Algorithm::StageOpt];
        assert_eq!(key.seed(7), key.seed(7));
        assert_ne!(key.seed(7), key.seed(8));
        let other = RunKey {
            algorithm: Algorithm::Cei,
            ..key
        };
        assert_ne!(key.seed(7), other.seed(7));
        assert_eq!(plan.keys().len(), plan.total_runs());
    }
}
