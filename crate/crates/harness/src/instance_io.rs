//! Self-describing text container for problem instances.
//!
//! ```text
//! stageopt-instance 1
//! [meta]
//! scenario one_safety
//! rng_seed 42
//! attempts 1
//! [grid]
//! dim 2
//! points 625
//! metric euclidean
//! [coords]
//! 0 0
//! 0 0.041666666666666664
//! ...
//! [utility]
//! kernel matern 1.2 shared 0.2 amplitude 1
//! noise 0.0025
//! values
//! 0.12
//! ...
//! [safety 1]
//! kernel ...
//! noise 0.0025
//! threshold -0.01
//! lipschitz 0.3
//! values
//! ...
//! [seeds]
//! 17 230 ...
//! ```
//!
//! Floats are written in Rust's shortest round-trip form, so reading a
//! written instance reproduces every value bit for bit.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, ensure, Context, Result};
use stageopt_core::domain::{GridDomain, GridFunction, Metric};
use stageopt_core::kernel::{KernelFamily, KernelSpec, LengthScale};
use stageopt_core::safe_set::SafetySpec;
use stageopt_core::synthetic::{InstanceMetadata, ProblemInstance, Scenario};

const MAGIC: &str = "stageopt-instance 1";

fn kernel_line(k: &KernelSpec) -> String {
    let mut s = String::from("kernel ");
    match k.family {
        KernelFamily::SquaredExponential => s.push_str("se"),
        KernelFamily::Matern { nu } => write!(s, "matern {nu}").unwrap(),
    }
    match &k.length_scale {
        LengthScale::Shared(l) => write!(s, " shared {l}").unwrap(),
        LengthScale::PerDim(ls) => {
            write!(s, " per_dim {}", ls.len()).unwrap();
            for l in ls {
                write!(s, " {l}").unwrap();
            }
        }
    }
    write!(s, " amplitude {}", k.amplitude).unwrap();
    s
}

fn push_values(out: &mut String, values: &[f64]) {
    out.push_str("values\n");
    for v in values {
        writeln!(out, "{v}").unwrap();
    }
}

/// Renders an instance in the text container format.
pub fn write_instance(inst: &ProblemInstance) -> Result<String> {
    let domain = &inst.domain;
    if !matches!(domain.metric(), Metric::Euclidean) {
        bail!("only Euclidean domains can be serialized");
    }
    let mut out = String::new();
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "[meta]")?;
    let scenario = inst.metadata.scenario.map_or("custom", |s| s.name());
    writeln!(out, "scenario {scenario}")?;
    writeln!(out, "rng_seed {}", inst.metadata.rng_seed)?;
    writeln!(out, "attempts {}", inst.metadata.attempts)?;
    writeln!(out, "[grid]")?;
    writeln!(out, "dim {}", domain.dim())?;
    writeln!(out, "points {}", domain.len())?;
    writeln!(out, "metric euclidean")?;
    writeln!(out, "[coords]")?;
    for p in domain.points() {
        let row: Vec<String> = p.iter().map(|c| c.to_string()).collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    writeln!(out, "[utility]")?;
    writeln!(out, "{}", kernel_line(&inst.metadata.utility_kernel))?;
    writeln!(out, "noise {}", inst.utility_noise)?;
    push_values(&mut out, inst.utility.values());
    for i in 0..inst.n_safety() {
        writeln!(out, "[safety {}]", i + 1)?;
        writeln!(out, "{}", kernel_line(&inst.metadata.safety_kernels[i]))?;
        writeln!(out, "noise {}", inst.safety_noise[i])?;
        writeln!(out, "threshold {}", inst.spec.thresholds[i])?;
        writeln!(out, "lipschitz {}", inst.spec.lipschitz[i])?;
        push_values(&mut out, inst.safety[i].values());
    }
    writeln!(out, "[seeds]")?;
    let seeds: Vec<String> = inst.seeds.iter().map(|s| s.to_string()).collect();
    writeln!(out, "{}", seeds.join(" "))?;
    Ok(out)
}

struct Section<'a> {
    name: &'a str,
    line: usize,
    body: Vec<(usize, &'a str)>,
}

fn split_sections(text: &str) -> Result<Vec<Section<'_>>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, first)) if first.trim() == MAGIC => {}
        _ => bail!("missing `{MAGIC}` header"),
    }
    let mut sections: Vec<Section<'_>> = Vec::new();
    for (no, raw) in lines {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            sections.push(Section {
                name,
                line: no + 1,
                body: Vec::new(),
            });
        } else {
            let current = sections
                .last_mut()
                .ok_or_else(|| anyhow!("line {}: content before the first section", no + 1))?;
            current.body.push((no + 1, line));
        }
    }
    Ok(sections)
}

fn parse_f64(token: &str, line: usize) -> Result<f64> {
    token
        .parse::<f64>()
        .with_context(|| format!("line {line}: `{token}` is not a number"))
}

fn parse_kernel(line: &str, no: usize) -> Result<KernelSpec> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    ensure!(tokens.first() == Some(&"kernel"), "line {no}: expected a kernel line");
    let mut rest = &tokens[1..];
    let family = match rest.first() {
        Some(&"se") => {
            rest = &rest[1..];
            KernelFamily::SquaredExponential
        }
        Some(&"matern") if rest.len() >= 2 => {
            let nu = parse_f64(rest[1], no)?;
            rest = &rest[2..];
            KernelFamily::Matern { nu }
        }
        _ => bail!("line {no}: unknown kernel family"),
    };
    let length_scale = match rest.first() {
        Some(&"shared") if rest.len() >= 2 => {
            let l = parse_f64(rest[1], no)?;
            rest = &rest[2..];
            LengthScale::Shared(l)
        }
        Some(&"per_dim") if rest.len() >= 2 => {
            let k: usize = rest[1].parse().with_context(|| format!("line {no}: bad dimension count"))?;
            ensure!(rest.len() >= 2 + k, "line {no}: too few length scales");
            let ls = rest[2..2 + k].iter().map(|t| parse_f64(t, no)).collect::<Result<_>>()?;
            rest = &rest[2 + k..];
            LengthScale::PerDim(ls)
        }
        _ => bail!("line {no}: missing length scale"),
    };
    ensure!(rest.len() == 2 && rest[0] == "amplitude", "line {no}: expected `amplitude <value>`");
    let amplitude = parse_f64(rest[1], no)?;
    KernelSpec::new(family, length_scale, amplitude).map_err(|e| anyhow!("line {no}: {e}"))
}

/// Key-value lines of a function section followed by its value table.
struct FunctionBlock {
    kernel: KernelSpec,
    noise: f64,
    threshold: Option<f64>,
    lipschitz: Option<f64>,
    values: Vec<f64>,
}

fn parse_function(sec: &Section<'_>) -> Result<FunctionBlock> {
    let mut kernel = None;
    let mut noise = None;
    let mut threshold = None;
    let mut lipschitz = None;
    let mut values = Vec::new();
    let mut in_values = false;
    for &(no, line) in &sec.body {
        if in_values {
            values.push(parse_f64(line, no)?);
            continue;
        }
        let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
        match key {
            "kernel" => kernel = Some(parse_kernel(line, no)?),
            "noise" => noise = Some(parse_f64(rest.trim(), no)?),
            "threshold" => threshold = Some(parse_f64(rest.trim(), no)?),
            "lipschitz" => lipschitz = Some(parse_f64(rest.trim(), no)?),
            "values" => in_values = true,
            other => bail!("line {no}: unknown key `{other}` in [{}]", sec.name),
        }
    }
    Ok(FunctionBlock {
        kernel: kernel.ok_or_else(|| anyhow!("[{}] has no kernel line", sec.name))?,
        noise: noise.ok_or_else(|| anyhow!("[{}] has no noise line", sec.name))?,
        threshold,
        lipschitz,
        values,
    })
}

fn key_values<'a>(sec: &Section<'a>) -> Result<Vec<(usize, &'a str, &'a str)>> {
    sec.body
        .iter()
        .map(|&(no, line)| {
            line.split_once(' ')
                .map(|(k, v)| (no, k, v.trim()))
                .ok_or_else(|| anyhow!("line {no}: expected `key value`"))
        })
        .collect()
}

/// Parses the text container format.
pub fn read_instance(text: &str) -> Result<ProblemInstance> {
    let sections = split_sections(text)?;
    let find = |name: &str| sections.iter().find(|s| s.name == name);

    let meta = find("meta").ok_or_else(|| anyhow!("missing [meta] section"))?;
    let mut scenario = None;
    let mut rng_seed = 0;
    let mut attempts = 0;
    for (no, k, v) in key_values(meta)? {
        match k {
            "scenario" if v == "custom" => scenario = None,
            "scenario" => scenario = Some(v.parse::<Scenario>().map_err(|e| anyhow!("line {no}: {e}"))?),
            "rng_seed" => rng_seed = v.parse().with_context(|| format!("line {no}: bad rng_seed"))?,
            "attempts" => attempts = v.parse().with_context(|| format!("line {no}: bad attempts"))?,
            other => bail!("line {no}: unknown key `{other}` in [meta]"),
        }
    }

    let grid = find("grid").ok_or_else(|| anyhow!("missing [grid] section"))?;
    let mut dim = 0usize;
    let mut points = 0usize;
    for (no, k, v) in key_values(grid)? {
        match k {
            "dim" => dim = v.parse().with_context(|| format!("line {no}: bad dim"))?,
            "points" => points = v.parse().with_context(|| format!("line {no}: bad point count"))?,
            "metric" => ensure!(v == "euclidean", "line {no}: unsupported metric `{v}`"),
            other => bail!("line {no}: unknown key `{other}` in [grid]"),
        }
    }
    let coords_sec = find("coords").ok_or_else(|| anyhow!("missing [coords] section"))?;
    ensure!(
        coords_sec.body.len() == points,
        "[coords] has {} rows, expected {points}",
        coords_sec.body.len()
    );
    let mut coords = Vec::with_capacity(points * dim);
    for &(no, line) in &coords_sec.body {
        let row: Vec<f64> = line.split_whitespace().map(|t| parse_f64(t, no)).collect::<Result<_>>()?;
        ensure!(row.len() == dim, "line {no}: expected {dim} coordinates");
        coords.extend(row);
    }
    let domain = Arc::new(GridDomain::new(dim, coords, Metric::Euclidean).map_err(|e| anyhow!("{e}"))?);

    let utility_sec = find("utility").ok_or_else(|| anyhow!("missing [utility] section"))?;
    let utility = parse_function(utility_sec)?;

    let mut safety_blocks = Vec::new();
    for i in 1.. {
        let name = format!("safety {i}");
        match find(&name) {
            Some(sec) => safety_blocks.push(parse_function(sec)?),
            None => break,
        }
    }
    ensure!(!safety_blocks.is_empty(), "no [safety 1] section");

    let seeds_sec = find("seeds").ok_or_else(|| anyhow!("missing [seeds] section"))?;
    let mut seeds = Vec::new();
    for &(no, line) in &seeds_sec.body {
        for t in line.split_whitespace() {
            seeds.push(t.parse().with_context(|| format!("line {no}: bad seed index `{t}`"))?);
        }
    }

    for s in &sections {
        let known = matches!(s.name, "meta" | "grid" | "coords" | "utility" | "seeds")
            || s.name
                .strip_prefix("safety ")
                .and_then(|i| i.parse::<usize>().ok())
                .is_some_and(|i| i >= 1 && i <= safety_blocks.len());
        ensure!(known, "line {}: unknown section [{}]", s.line, s.name);
    }

    let mut thresholds = Vec::new();
    let mut lipschitz = Vec::new();
    for (i, b) in safety_blocks.iter().enumerate() {
        thresholds.push(b.threshold.ok_or_else(|| anyhow!("[safety {}] has no threshold", i + 1))?);
        lipschitz.push(b.lipschitz.ok_or_else(|| anyhow!("[safety {}] has no lipschitz constant", i + 1))?);
    }
    let core = |e: stageopt_core::Error| anyhow!("{e}");
    ProblemInstance::new(
        domain,
        GridFunction::new(utility.values).map_err(core)?,
        safety_blocks
            .iter()
            .map(|b| GridFunction::new(b.values.clone()))
            .collect::<Result<_, _>>()
            .map_err(core)?,
        SafetySpec::new(thresholds, lipschitz).map_err(core)?,
        seeds,
        utility.noise,
        safety_blocks.iter().map(|b| b.noise).collect(),
        InstanceMetadata {
            scenario,
            utility_kernel: utility.kernel,
            safety_kernels: safety_blocks.into_iter().map(|b| b.kernel).collect(),
            rng_seed,
            attempts,
        },
    )
    .map_err(core)
}

pub fn save_instance(inst: &ProblemInstance, path: &Path) -> Result<()> {
    std::fs::write(path, write_instance(inst)?).with_context(|| format!("writing {}", path.display()))
}

pub fn load_instance(path: &Path) -> Result<ProblemInstance> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    read_instance(&text).with_context(|| format!("parsing {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use stageopt_core::synthetic::{InstanceGenerator, ScenarioConfig};

    fn small(scenario: Scenario) -> ProblemInstance {
        let mut cfg = ScenarioConfig::new(scenario);
        cfg.points_per_axis = 6;
        InstanceGenerator::new(cfg).unwrap().generate(9).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        for scenario in [Scenario::OneSafety, Scenario::ThreeSafety] {
            let inst = small(scenario);
            let text = write_instance(&inst).unwrap();
            let back = read_instance(&text).unwrap();
            assert_eq!(back, inst);
            for (a, b) in back.utility.values().iter().zip(inst.utility.values()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
            assert_eq!(write_instance(&back).unwrap(), text);
        }
    }

    #[test]
    fn per_dim_and_se_kernels_round_trip() {
        let mut inst = small(Scenario::OneSafety);
        inst.metadata.utility_kernel = KernelSpec::new(
            KernelFamily::SquaredExponential,
            LengthScale::PerDim(vec![0.1, 0.30000000000000004]),
            2.5,
        )
        .unwrap();
        inst.metadata.scenario = None;
        let back = read_instance(&write_instance(&inst).unwrap()).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn malformed_input_is_rejected() {
        let text = write_instance(&small(Scenario::OneSafety)).unwrap();
        assert!(read_instance("").is_err());
        assert!(read_instance(&text.replace("[seeds]", "[sedes]")).is_err());
        assert!(read_instance(&text.replace("threshold", "thresh")).is_err());
        assert!(read_instance(&text.replace("points 36", "points 35")).is_err());
        let unsafe_seed = text.replace("[seeds]\n", "[seeds]\n0 1 2 3 4 5 6 7 8 9 10 11 12 13 14 15 ");
        assert!(read_instance(&unsafe_seed).is_err());
    }
}
