//! Implementations of the CLI subcommands.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use stageopt_core::algorithms::bounds::{theorem1_tstar, theorem2_y, DEFAULT_SCAN_CAP};
use stageopt_core::algorithms::{GammaChoice, GammaTables, Problem, RunConfig};
use stageopt_core::domain::GridMask;
use stageopt_core::info_gain::{estimate_gamma, GammaTable};
use stageopt_core::reachability::{reach_closure, reach_t, ReachabilityQuery};
use stageopt_core::synthetic::{InstanceGenerator, ModelTables, ProblemInstance};

use crate::bench::{
    aggregate, instance_seed, read_aggregate, read_step_rows, run_benchmark, trace_rows, write_csv, BenchmarkPlan,
    SummaryRow,
};
use crate::config::Settings;
use crate::instance_io::{load_instance, save_instance};
use crate::plot::render_svg;

fn core_err(e: stageopt_core::Error) -> anyhow::Error {
    anyhow!("{e}")
}

fn out_dir(s: &Settings) -> PathBuf {
    s.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}

/// Writes `instances` generated instances per scenario; returns the paths.
/// Instance `i` is the same instance `bench` uses under the same master seed.
pub fn gen(s: &Settings) -> Result<Vec<PathBuf>> {
    let plan = BenchmarkPlan::from_settings(s)?;
    let dir = out_dir(s);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut paths = Vec::new();
    for &scenario in &plan.scenarios {
        let generator = InstanceGenerator::new(plan.scenario_config(scenario)).map_err(core_err)?;
        for i in 0..plan.instances {
            let inst = generator
                .generate(instance_seed(plan.master_seed, scenario, i))
                .map_err(core_err)?;
            let path = dir.join(format!("{}_{i:03}.inst", scenario.name()));
            save_instance(&inst, &path)?;
            paths.push(path);
        }
    }
    Ok(paths)
}

/// Tables and gamma estimates for one instance at horizon `horizon`.
pub fn prepare_instance(inst: &ProblemInstance, horizon: usize) -> Result<(ModelTables, GammaTables)> {
    let tables = ModelTables::for_instance(inst).map_err(core_err)?;
    let gammas = GammaTables::estimate(inst, &tables, horizon).map_err(core_err)?;
    Ok((tables, gammas))
}

/// One run from an instance file; writes `runs.csv` and `summary.csv`.
pub fn run(s: &Settings, instance: &Path, seed_index: usize, instance_id: usize) -> Result<PathBuf> {
    let inst = load_instance(instance)?;
    let algorithms = s.algorithms()?;
    let [algorithm] = algorithms[..] else {
        bail!("`run` takes exactly one algorithm");
    };
    let config = s.run_config()?;
    let (tables, gammas) = prepare_instance(&inst, config.horizon)?;
    let start = inst.seed_mask(seed_index);
    let problem = Problem {
        instance: &inst,
        tables: &tables,
        gammas: &gammas,
        start: &start,
    };
    let trace = algorithm.run(&problem, &config).map_err(core_err)?;
    let scenario = inst.metadata.scenario.map_or("custom", |sc| sc.name());
    let run_id = format!("{scenario}-{instance_id}-{seed_index}-{}", algorithm.name());
    let dir = out_dir(s);
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    write_csv(
        &dir.join("runs.csv"),
        &trace_rows(&run_id, scenario, instance_id, seed_index, &trace)?,
    )?;
    let safe = inst.true_safe_set();
    let summary = SummaryRow {
        run_id,
        scenario: scenario.to_string(),
        instance_id,
        seed_id: seed_index,
        algorithm: algorithm.name().to_string(),
        run_seed: config.seed,
        start_index: start.iter().next(),
        stage_one_length: Some(trace.stage_one_length),
        recommended: Some(trace.recommended),
        final_reward: Some(trace.final_reward()),
        best_safe_utility: inst.best_in(&safe).map(|(_, v)| v),
        final_safe_size: Some(trace.final_safe.len()),
        true_safe_size: Some(safe.len()),
        violations: Some(trace.violations()),
        contradictions: Some(trace.steps.last().map_or(0, |st| st.contradictions)),
        error: String::new(),
    };
    write_csv(&dir.join("summary.csv"), &[summary])?;
    Ok(dir)
}

/// Full sweep; writes the three CSV files into the output directory.
pub fn bench(s: &Settings) -> Result<PathBuf> {
    let plan = BenchmarkPlan::from_settings(s)?;
    let results = run_benchmark(&plan)?;
    let dir = out_dir(s);
    results.write(&dir)?;
    Ok(dir)
}

fn indices(m: &GridMask) -> String {
    m.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
}

/// Reachability report for seed slot `seed_index`: the closure and, when
/// `steps` is given, the `steps`-fold iterate.
pub fn oracle(s: &Settings, instance: &Path, seed_index: usize, steps: Option<usize>) -> Result<String> {
    let inst = load_instance(instance)?;
    let eps = s.eps.unwrap_or(0.0);
    let q = ReachabilityQuery::new(&inst.domain, &inst.safety, &inst.spec, eps).map_err(core_err)?;
    let start = inst.seed_mask(seed_index);
    q.validate_start(&start).map_err(core_err)?;
    let closure = reach_closure(&q, &start);
    let truth = inst.true_safe_set();
    let mut out = String::new();
    writeln!(out, "epsilon {eps}")?;
    writeln!(out, "start {}", indices(&start))?;
    writeln!(out, "true_safe_size {}", truth.len())?;
    if let Some(t) = steps {
        let r = reach_t(&q, &start, t);
        writeln!(out, "reach_{t}_size {}", r.len())?;
        writeln!(out, "reach_{t} {}", indices(&r))?;
    }
    writeln!(out, "closure_size {}", closure.len())?;
    writeln!(out, "closure {}", indices(&closure))?;
    Ok(out)
}

/// Information-gain tables as CSV text: `t,utility,safety1,...`.
pub fn gamma(s: &Settings, instance: Option<&Path>) -> Result<String> {
    let inst = match instance {
        Some(p) => load_instance(p)?,
        None => {
            let plan = BenchmarkPlan::from_settings(s)?;
            let scenario = plan.scenarios[0];
            InstanceGenerator::new(plan.scenario_config(scenario))
                .map_err(core_err)?
                .generate(instance_seed(plan.master_seed, scenario, 0))
                .map_err(core_err)?
        }
    };
    let horizon = s.horizon.unwrap_or(RunConfig::default().horizon);
    let (_, g) = prepare_instance(&inst, horizon)?;
    let mut out = String::from("t,utility");
    for i in 1..=g.safety.len() {
        write!(out, ",safety{i}")?;
    }
    out.push('\n');
    for t in 0..=horizon {
        write!(out, "{t},{}", g.utility.gamma(t))?;
        for table in &g.safety {
            write!(out, ",{}", table.gamma(t))?;
        }
        out.push('\n');
    }
    Ok(out)
}

/// Expansion horizon `t*` and optimization horizon `Y` for an instance.
/// Information gain is tabulated up to `gamma_horizon` and held constant
/// beyond it.
pub fn bounds(s: &Settings, instance: &Path, seed_index: usize, gamma_horizon: usize) -> Result<String> {
    let inst = load_instance(instance)?;
    let config = s.run_config()?;
    let tables = ModelTables::for_instance(&inst).map_err(core_err)?;
    let floor = |v: f64| if v > 0.0 { v } else { 1e-12 };
    let table_for = |choice: GammaChoice, kernel, noise: f64| -> Result<Arc<GammaTable>> {
        Ok(Arc::new(match choice {
            GammaChoice::Constant(g) => GammaTable::constant(g, gamma_horizon),
            GammaChoice::Estimated => estimate_gamma(kernel, floor(noise), gamma_horizon).map_err(core_err)?,
        }))
    };
    let safety_tables = tables
        .safety
        .iter()
        .zip(&inst.safety_noise)
        .map(|(k, &v)| table_for(config.safety_beta.gamma, k, v))
        .collect::<Result<Vec<_>>>()?;
    let safety_table = safety_tables
        .iter()
        .max_by(|a, b| a.gamma(gamma_horizon).total_cmp(&b.gamma(gamma_horizon)))
        .expect("at least one safety function")
        .clone();
    let utility_table = table_for(config.utility_beta.gamma, &tables.utility, inst.utility_noise)?;

    let start = inst.seed_mask(seed_index);
    let q = ReachabilityQuery::new(&inst.domain, &inst.safety, &inst.spec, 0.0).map_err(core_err)?;
    let closure = reach_closure(&q, &start);
    let safety_schedule = config.safety_beta.schedule(&safety_table).map_err(core_err)?;
    let utility_schedule = config.utility_beta.schedule(&utility_table).map_err(core_err)?;
    let tstar = theorem1_tstar(
        &safety_schedule,
        &safety_table,
        closure.len(),
        inst.n_safety(),
        config.epsilon,
        DEFAULT_SCAN_CAP,
    )
    .map_err(core_err)?;
    let y = theorem2_y(&utility_schedule, config.zeta, DEFAULT_SCAN_CAP).map_err(core_err)?;
    let show = |v: Option<usize>| v.map_or_else(|| format!("none below {DEFAULT_SCAN_CAP}"), |v| v.to_string());
    let mut out = String::new();
    writeln!(out, "closure_size {}", closure.len())?;
    writeln!(out, "gamma_horizon {gamma_horizon}")?;
    writeln!(out, "epsilon {}", config.epsilon)?;
    writeln!(out, "zeta {}", config.zeta)?;
    writeln!(out, "t_star {}", show(tstar))?;
    writeln!(out, "Y {}", show(y))?;
    Ok(out)
}

/// Recomputes the aggregate file from one or more per-step files.
pub fn aggregate_files(inputs: &[PathBuf], out: &Path) -> Result<()> {
    let mut rows = Vec::new();
    for p in inputs {
        rows.extend(read_step_rows(p)?);
    }
    write_csv(out, &aggregate(&rows))
}

pub fn plot(aggregate_file: &Path, out: &Path) -> Result<()> {
    let rows = read_aggregate(aggregate_file)?;
    std::fs::write(out, render_svg(&rows)).with_context(|| format!("writing {}", out.display()))
}
