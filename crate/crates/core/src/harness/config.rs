//! Experiment configuration, validation and expansion into runs.

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::baselines::Exp3EgParams;
use crate::error::{Error, Result};
use crate::mnl::MnlInstance;
use crate::policy::{PolicyConfig, Variant};

/// Largest horizon recorded at every step when the grid is `auto`.
pub const AUTO_DENSE_LIMIT: usize = 10_000;
/// Number of log-spaced points used by `auto` beyond the dense limit.
pub const AUTO_LOG_POINTS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_items: usize,
    pub max_size: usize,
    pub horizon: usize,
    pub trials: usize,
    pub policies: Vec<PolicySpec>,
    /// Exploration exponents swept for every `mnl-experiment-ucb` policy.
    #[serde(default)]
    pub alphas: Vec<f64>,
    pub master_seed: u64,
    pub instance_source: InstanceSource,
    #[serde(default)]
    pub metric_grid: MetricGrid,
    /// Time points at which running attraction estimates are kept in memory.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub snapshot_points: Vec<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyName {
    MnlExperimentUcb,
    MnlBanditEe,
    Exp3eg,
    /// Offers the true optimal assortment every step.
    Oracle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantName {
    Standard,
    KStar,
    General,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySpec {
    pub name: PolicyName,
    /// Name used in output files; defaults to a name derived from the policy.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub variant: Option<VariantName>,
    #[serde(default)]
    pub k_star: Option<usize>,
    #[serde(default)]
    pub b_bound: Option<f64>,
    #[serde(default)]
    pub exp3: Option<Exp3EgParams>,
}

impl PolicySpec {
    pub fn new(name: PolicyName) -> Self {
        PolicySpec {
            name,
            label: None,
            variant: None,
            k_star: None,
            b_bound: None,
            exp3: None,
        }
    }

    pub fn label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        match (self.name, self.variant) {
            (PolicyName::MnlExperimentUcb, Some(VariantName::KStar)) => {
                "MNLExperimentUCB-kstar".into()
            }
            (PolicyName::MnlExperimentUcb, Some(VariantName::General)) => {
                "MNLExperimentUCB-general".into()
            }
            (PolicyName::MnlExperimentUcb, _) => "MNLExperimentUCB".into(),
            (PolicyName::MnlBanditEe, _) => "MNLBanditEE".into(),
            (PolicyName::Exp3eg, _) => "EXP3EG".into(),
            (PolicyName::Oracle, _) => "Oracle".into(),
        }
    }

    fn variant(&self) -> Result<Variant> {
        Ok(match self.variant.unwrap_or(VariantName::Standard) {
            VariantName::Standard => Variant::Standard,
            VariantName::KStar => Variant::KStar {
                k_star: self
                    .k_star
                    .ok_or_else(|| Error::config("k-star variant needs k_star"))?,
            },
            VariantName::General => Variant::General {
                b_bound: self.b_bound,
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum InstanceSource {
    /// Fresh instance per trial with `v_i ~ U(v_range)` and `r_i ~ U(r_range)`.
    Random {
        v_range: (f64, f64),
        r_range: (f64, f64),
    },
    /// One fixed instance shared by every trial.
    File { path: PathBuf },
    /// Inline fixed instance.
    Fixed { v: Vec<f64>, r: Vec<f64> },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricGrid {
    /// Every step up to 10^4 steps, log-spaced beyond.
    #[default]
    Auto,
    EveryStep,
    LogSpaced(usize),
    Points(Vec<usize>),
}

impl MetricGrid {
    /// Sorted distinct time points in `1..=horizon`, always ending at `horizon`.
    pub fn resolve(&self, horizon: usize) -> Vec<usize> {
        let mut pts: BTreeSet<usize> = match self {
            MetricGrid::Auto if horizon <= AUTO_DENSE_LIMIT => (1..=horizon).collect(),
            MetricGrid::Auto => log_points(horizon, AUTO_LOG_POINTS),
            MetricGrid::EveryStep => (1..=horizon).collect(),
            MetricGrid::LogSpaced(k) => log_points(horizon, *k),
            MetricGrid::Points(p) => p
                .iter()
                .copied()
                .filter(|&t| (1..=horizon).contains(&t))
                .collect(),
        };
        pts.insert(horizon);
        pts.into_iter().collect()
    }
}

fn log_points(horizon: usize, k: usize) -> BTreeSet<usize> {
    let k = k.max(2);
    let top = (horizon as f64).ln();
    (0..k)
        .map(|j| (top * j as f64 / (k - 1) as f64).exp().round() as usize)
        .map(|t| t.clamp(1, horizon))
        .collect()
}

/// One (policy, α) combination of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub label: String,
    pub name: PolicyName,
    pub alpha: Option<f64>,
    pub policy: Option<PolicyConfig>,
    pub exp3: Exp3EgParams,
}

impl RunSpec {
    pub fn out_of_theory(&self) -> bool {
        self.policy.is_some_and(|p| p.is_out_of_theory())
    }
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::config("horizon must be at least 1"));
        }
        if self.trials < 1 {
            return Err(Error::config("trials must be at least 1"));
        }
        if self.n_items < 1 || self.max_size < 1 {
            return Err(Error::config("n_items and max_size must be at least 1"));
        }
        if self.policies.is_empty() {
            return Err(Error::config("no policies configured"));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers must be at least 1"));
        }
        match &self.instance_source {
            InstanceSource::Random { v_range, r_range } => {
                for (name, (lo, hi)) in [("v_range", v_range), ("r_range", r_range)] {
                    if !(lo.is_finite() && hi.is_finite() && *lo > 0.0 && hi >= lo) {
                        return Err(Error::config(format!(
                            "{name} = ({lo}, {hi}) is not a positive interval"
                        )));
                    }
                }
            }
            InstanceSource::File { .. } | InstanceSource::Fixed { .. } => {
                let m = self.fixed_instance()?.expect("fixed source");
                if m.n_items() != self.n_items {
                    return Err(Error::config(format!(
                        "instance has {} items but n_items = {}",
                        m.n_items(),
                        self.n_items
                    )));
                }
            }
        }
        let runs = self.runs()?;
        let mut seen = BTreeSet::new();
        for r in &runs {
            if !seen.insert((r.label.clone(), r.alpha.map(f64::to_bits))) {
                return Err(Error::config(format!(
                    "duplicate run {} alpha {:?}",
                    r.label, r.alpha
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn fixed_instance(&self) -> Result<Option<MnlInstance>> {
        match &self.instance_source {
            InstanceSource::Random { .. } => Ok(None),
            InstanceSource::File { path } => {
                MnlInstance::from_json_file(path).map(Some).map_err(|e| {
                    Error::config(format!("cannot load instance {}: {e}", path.display()))
                })
            }
            InstanceSource::Fixed { v, r } => MnlInstance::new(v.clone(), r.clone())
                .map(Some)
                .map_err(|e| Error::config(e.to_string())),
        }
    }

    /// Expands policies and the α grid into runs, in configuration order.
    pub fn runs(&self) -> Result<Vec<RunSpec>> {
        let mut out = Vec::new();
        for spec in &self.policies {
            let exp3 = spec.exp3.unwrap_or_default();
            match spec.name {
                PolicyName::MnlExperimentUcb => {
                    if self.alphas.is_empty() {
                        return Err(Error::config(
                            "mnl-experiment-ucb needs a nonempty alphas list",
                        ));
                    }
                    let variant = spec.variant()?;
                    if let Variant::KStar { k_star } = variant {
                        if k_star > self.max_size {
                            return Err(Error::config(format!(
                                "k_star {k_star} exceeds max_size {}",
                                self.max_size
                            )));
                        }
                    }
                    for &alpha in &self.alphas {
                        let policy = PolicyConfig::out_of_theory(alpha, variant)?;
                        out.push(RunSpec {
                            label: spec.label(),
                            name: spec.name,
                            alpha: Some(alpha),
                            policy: Some(policy),
                            exp3,
                        });
                    }
                }
                name => out.push(RunSpec {
                    label: spec.label(),
                    name,
                    alpha: None,
                    policy: None,
                    exp3,
                }),
            }
        }
        Ok(out)
    }
}
