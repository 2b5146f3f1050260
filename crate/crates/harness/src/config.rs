//! Flat key-value settings shared by the config file and the command line.
//! Every flag has a file key of the same name; flags win.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::Deserialize;
use stageopt_core::acquisition::Rule;
use stageopt_core::algorithms::{Algorithm, Feedback, GammaChoice, RunConfig, StageSwitch};
use stageopt_core::preference::Link;
use stageopt_core::safe_set::SafeSetVariant;
use stageopt_core::synthetic::Scenario;

pub const DEFAULT_INSTANCES: usize = 30;
pub const DEFAULT_JOBS: usize = 1;

#[derive(Debug, Clone, Default, PartialEq, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Flat TOML file with defaults for any of these keys
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Scenario name, or a comma-separated list for `bench`
    #[arg(long)]
    pub scenario: Option<String>,
    /// Algorithm name, or a comma-separated list for `bench`
    #[arg(long)]
    pub algorithm: Option<String>,
    /// Horizon
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub horizon: Option<usize>,
    /// Fixed length of the expansion stage
    #[arg(long = "T0")]
    #[serde(rename = "T0")]
    pub t0: Option<usize>,
    /// Expansion accuracy
    #[arg(long)]
    pub eps: Option<f64>,
    /// Optimization accuracy
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Failure probability of the confidence schedules and the CEI bar
    #[arg(long)]
    pub delta: Option<f64>,
    /// RKHS norm bound in the confidence schedules
    #[arg(long = "B")]
    #[serde(rename = "B")]
    pub rkhs_bound: Option<f64>,
    /// Noise scale in the confidence schedules
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Use this constant in place of the estimated information gain
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Safe-set rule: lipschitz or gp_only
    #[arg(long)]
    pub variant: Option<String>,
    /// Stage-two rule: ucb, ei or mpi
    #[arg(long)]
    pub acquisition: Option<String>,
    /// Utility feedback: absolute or dueling
    #[arg(long)]
    pub feedback: Option<String>,
    /// Stage switch: plateau, fixed or epsilon (T0 alone implies fixed)
    #[arg(long)]
    pub stage_switch: Option<String>,
    #[arg(long)]
    pub plateau_window: Option<usize>,
    #[arg(long)]
    pub plateau_cap: Option<usize>,
    /// Master seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory or file
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Instances per scenario
    #[arg(long)]
    pub instances: Option<usize>,
    /// Seeds per instance
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Grid points per axis of generated instances
    #[arg(long)]
    pub grid: Option<usize>,
}

macro_rules! overlay {
    ($hi:expr, $lo:expr, $($f:ident),*) => {
        Settings { config: $hi.config.clone(), $($f: $hi.$f.clone().or_else(|| $lo.$f.clone()),)* }
    };
}

impl Settings {
    /// `self` with every unset key taken from `lower`.
    pub fn over(&self, lower: &Settings) -> Settings {
        overlay!(
            self, lower, scenario, algorithm, horizon, t0, eps, zeta, delta, rkhs_bound, sigma, gamma, variant,
            acquisition, feedback, stage_switch, plateau_window, plateau_cap, seed, out, jobs, instances, seeds, grid
        )
    }

    pub fn from_toml(text: &str) -> Result<Settings> {
        toml::from_str(text).context("invalid config file")
    }

    pub fn from_file(path: &Path) -> Result<Settings> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Flags layered over the file named by `--config`, if any.
    pub fn resolve(&self) -> Result<Settings> {
        match &self.config {
            Some(path) => Ok(self.over(&Settings::from_file(path)?)),
            None => Ok(self.clone()),
        }
    }

    pub fn scenarios(&self) -> Result<Vec<Scenario>> {
        match &self.scenario {
            None => Ok(vec![Scenario::OneSafety]),
            Some(s) => split_list(s)
                .map(|name| name.parse::<Scenario>().map_err(|e| anyhow!("{e}")))
                .collect(),
        }
    }

    pub fn dueling(&self) -> Result<bool> {
        match self.feedback.as_deref() {
            None | Some("absolute") => Ok(false),
            Some("dueling") => Ok(true),
            Some(other) => bail!("unknown feedback `{other}`"),
        }
    }

    /// Algorithms to run. Dueling feedback turns `stageopt` into its
    /// dueling form.
    pub fn algorithms(&self) -> Result<Vec<Algorithm>> {
        let dueling = self.dueling()?;
        let names = self.algorithm.as_deref().unwrap_or("stageopt,safeopt,cei");
        let mut out = Vec::new();
        for name in split_list(names) {
            let mut a: Algorithm = name.parse().map_err(|e| anyhow!("{e}"))?;
            if dueling && a == Algorithm::StageOpt {
                a = Algorithm::StageOptDueling;
            }
            if !out.contains(&a) {
                out.push(a);
            }
        }
        if out.is_empty() {
            bail!("no algorithm selected");
        }
        Ok(out)
    }

    pub fn run_config(&self) -> Result<RunConfig> {
        let mut rc = RunConfig::default();
        if let Some(t) = self.horizon {
            rc.horizon = t;
        }
        let window = self.plateau_window.unwrap_or(10);
        let cap = self.plateau_cap.unwrap_or(80);
        rc.stage_switch = match (self.stage_switch.as_deref(), self.t0) {
            (None, Some(t0)) | (Some("fixed"), Some(t0)) => StageSwitch::Fixed { t0 },
            (Some("fixed"), None) => bail!("stage_switch = fixed needs T0"),
            (Some("epsilon"), _) => StageSwitch::EpsilonStop,
            (None | Some("plateau"), _) => StageSwitch::Plateau { window, cap },
            (Some(other), _) => bail!("unknown stage switch `{other}`"),
        };
        if let Some(e) = self.eps {
            rc.epsilon = e;
        }
        if let Some(z) = self.zeta {
            rc.zeta = z;
        }
        for beta in [&mut rc.safety_beta, &mut rc.utility_beta] {
            if let Some(d) = self.delta {
                beta.delta = d;
            }
            if let Some(b) = self.rkhs_bound {
                beta.rkhs_bound = b;
            }
            if let Some(s) = self.sigma {
                beta.noise_scale = s;
            }
            if let Some(g) = self.gamma {
                beta.gamma = GammaChoice::Constant(g);
            }
        }
        if let Some(d) = self.delta {
            rc.cei_delta = d;
        }
        rc.variant = match self.variant.as_deref() {
            None | Some("lipschitz") => SafeSetVariant::Lipschitz,
            Some("gp_only") => SafeSetVariant::GpOnly,
            Some(other) => bail!("unknown variant `{other}`"),
        };
        if let Some(a) = &self.acquisition {
            rc.acquisition = a.parse::<Rule>().map_err(|e| anyhow!("{e}"))?;
        }
        rc.feedback = if self.dueling()? {
            Feedback::Dueling(Link::Logit)
        } else {
            Feedback::Absolute
        };
        rc.seed = self.seed.unwrap_or(0);
        rc.validate().map_err(|e| anyhow!("{e}"))?;
        Ok(rc)
    }
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|p| !p.is_empty())
}
