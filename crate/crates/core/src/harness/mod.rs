//! Seeded experiment runner.
//!
//! Every (policy, α, trial) combination is an independent job. A trial draws
//! its instance from a stream keyed by `(master_seed, trial)`, so all
//! policies in a trial face the same instance, and its customers from a
//! second stream keyed the same way. Policy randomization uses a third stream
//! keyed by `(master_seed, trial, label)`. Jobs run on a rayon pool and are
//! merged back in configuration order, so the output does not depend on the
//! worker count.
//!
//! Regret accrues the expected gap `r* − R(S_t)` per step, where `r*` is the
//! best expected revenue over the feasible family. Estimation metrics use
//! the estimate frozen at the last completed epoch (zero before the first).

mod config;
mod output;

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{
    ExperimentConfig, InstanceSource, MetricGrid, PolicyName, PolicySpec, RunSpec, VariantName,
    AUTO_DENSE_LIMIT, AUTO_LOG_POINTS,
};
pub use output::{read_summary_csv, write_outputs, SummaryRow};

use crate::baselines::{Exp3Eg, MnlBanditEe};
use crate::epoch::run_epoch;
use crate::error::{Error, Result};
use crate::family::FeasibleFamily;
use crate::mnl::{Assortment, MnlInstance};
use crate::policy::{FinalEstimates, MnlExperimentUcb, OfferKind};
use crate::stats::RunningStats;

/// Version string written to manifests.
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// 64-bit seed derived from the master seed, a trial index and a stream tag.
pub fn derive_seed(master_seed: u64, trial: usize, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update((trial as u64).to_le_bytes());
    h.update(tag.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrialSeeds {
    pub instance: u64,
    pub customers: u64,
    pub policy: u64,
}

impl TrialSeeds {
    pub fn new(master_seed: u64, trial: usize, label: &str) -> Self {
        TrialSeeds {
            instance: derive_seed(master_seed, trial, "instance"),
            customers: derive_seed(master_seed, trial, "customers"),
            policy: derive_seed(master_seed, trial, &format!("policy:{label}")),
        }
    }
}

/// One epoch as seen by the harness.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub index: usize,
    /// First time step of the epoch.
    pub start: usize,
    pub length: usize,
    pub offered: Assortment,
    pub star: Assortment,
    pub kind: OfferKind,
    pub chunks: Vec<Assortment>,
    pub truncated: bool,
}

/// Running estimate kept at a requested time point.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: usize,
    pub completed_epochs: usize,
    pub v_hat: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub label: String,
    pub alpha: Option<f64>,
    pub trial: usize,
    pub seeds: TrialSeeds,
    pub instance_digest: String,
    pub v_true: Vec<f64>,
    pub r_true: Vec<f64>,
    pub r_star: f64,
    pub out_of_theory: bool,
    /// Time points of the series below.
    pub grid: Vec<usize>,
    pub offered_size: Vec<usize>,
    pub cum_regret: Vec<f64>,
    pub mse_v: Vec<Option<f64>>,
    pub mse_r: Vec<Option<f64>>,
    /// Attraction estimates at the horizon, if the policy has any.
    pub estimates: Option<FinalEstimates>,
    pub snapshots: Vec<Snapshot>,
    pub epochs: Vec<EpochLog>,
}

impl TrialResult {
    pub fn final_regret(&self) -> f64 {
        *self.cum_regret.last().expect("grid is never empty")
    }
}

/// Ground truth shared by the metric computations of one trial.
struct Truth<'a> {
    instance: &'a MnlInstance,
    family: &'a FeasibleFamily,
    family_revenue: Vec<f64>,
    r_star: f64,
    star: Assortment,
}

impl<'a> Truth<'a> {
    fn new(instance: &'a MnlInstance, family: &'a FeasibleFamily) -> Result<Self> {
        let (star, r_star) = family.argmax_revenue(instance.attractions(), instance.revenues())?;
        let family_revenue = family
            .enumerate()
            .iter()
            .map(|s| s.ratio_score(instance.revenues(), instance.attractions()))
            .collect();
        Ok(Truth {
            instance,
            family,
            family_revenue,
            r_star,
            star,
        })
    }

    fn gap(&self, offered: &Assortment) -> Result<f64> {
        Ok(self.r_star - self.instance.expected_revenue(offered)?)
    }

    fn mse_v(&self, v_hat: &[f64]) -> f64 {
        let v = self.instance.attractions();
        v_hat
            .iter()
            .zip(v)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / v.len() as f64
    }

    /// Mean squared error of plug-in revenues over the family.
    fn mse_r_plugin(&self, v_hat: &[f64]) -> f64 {
        let r = self.instance.revenues();
        self.mse_r_direct(
            self.family
                .enumerate()
                .iter()
                .map(|s| s.ratio_score(r, v_hat)),
        )
    }

    fn mse_r_direct(&self, estimates: impl Iterator<Item = f64>) -> f64 {
        let sse: f64 = estimates
            .zip(&self.family_revenue)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        sse / self.family_revenue.len() as f64
    }
}

type MetricPair = (Option<f64>, Option<f64>);

/// Accumulates regret and samples the metric series on the grid.
struct Recorder<'a> {
    grid: &'a [usize],
    snapshot_points: &'a [usize],
    next: usize,
    next_snap: usize,
    cum: f64,
    cached: Option<MetricPair>,
    offered_size: Vec<usize>,
    cum_regret: Vec<f64>,
    mse_v: Vec<Option<f64>>,
    mse_r: Vec<Option<f64>>,
}

impl<'a> Recorder<'a> {
    fn new(grid: &'a [usize], snapshot_points: &'a [usize]) -> Self {
        Recorder {
            grid,
            snapshot_points,
            next: 0,
            next_snap: 0,
            cum: 0.0,
            cached: None,
            offered_size: Vec::with_capacity(grid.len()),
            cum_regret: Vec::with_capacity(grid.len()),
            mse_v: Vec::with_capacity(grid.len()),
            mse_r: Vec::with_capacity(grid.len()),
        }
    }

    fn invalidate(&mut self) {
        self.cached = None;
    }

    /// Accrues step `t`; `metrics` is evaluated only when a grid point needs a
    /// fresh value.
    fn step(&mut self, t: usize, gap: f64, size: usize, metrics: impl FnOnce() -> MetricPair) {
        self.cum += gap;
        if self.grid.get(self.next) == Some(&t) {
            let m = *self.cached.get_or_insert_with(metrics);
            self.offered_size.push(size);
            self.cum_regret.push(self.cum);
            self.mse_v.push(m.0);
            self.mse_r.push(m.1);
            self.next += 1;
        }
    }

    /// True once per requested snapshot time.
    fn wants_snapshot(&mut self, t: usize) -> bool {
        while self
            .snapshot_points
            .get(self.next_snap)
            .is_some_and(|&p| p < t)
        {
            self.next_snap += 1;
        }
        if self.snapshot_points.get(self.next_snap) == Some(&t) {
            self.next_snap += 1;
            true
        } else {
            false
        }
    }
}

/// The trial's instance: drawn from the instance stream, or the fixed one.
pub fn trial_instance(config: &ExperimentConfig, trial: usize) -> Result<MnlInstance> {
    match &config.instance_source {
        InstanceSource::Random { v_range, r_range } => {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(config.master_seed, trial, "instance"));
            MnlInstance::random(config.n_items, *v_range, *r_range, &mut rng)
        }
        _ => Ok(config.fixed_instance()?.expect("fixed source")),
    }
}

enum Learner {
    Ucb(MnlExperimentUcb),
    Ee(MnlBanditEe),
}

impl Learner {
    fn estimate(&self) -> Vec<f64> {
        match self {
            Learner::Ucb(p) => p.state().running_estimate(),
            Learner::Ee(p) => p.estimate(),
        }
    }

    fn completed(&self) -> usize {
        match self {
            Learner::Ucb(p) => p.state().completed_epochs(),
            Learner::Ee(p) => p.state().completed_epochs(),
        }
    }
}

/// Runs one (policy, α, trial) job to the horizon.
pub fn run_trial(config: &ExperimentConfig, run: &RunSpec, trial: usize) -> Result<TrialResult> {
    let instance = trial_instance(config, trial)?;
    let family = FeasibleFamily::new(config.n_items, config.max_size)?;
    let grid = config.metric_grid.resolve(config.horizon);
    let mut snapshot_points = config.snapshot_points.clone();
    snapshot_points.sort_unstable();
    snapshot_points.dedup();
    run_trial_on(
        config,
        run,
        trial,
        &instance,
        &family,
        &grid,
        &snapshot_points,
    )
}

fn run_trial_on(
    config: &ExperimentConfig,
    run: &RunSpec,
    trial: usize,
    instance: &MnlInstance,
    family: &FeasibleFamily,
    grid: &[usize],
    snapshot_points: &[usize],
) -> Result<TrialResult> {
    let seeds = TrialSeeds::new(config.master_seed, trial, &run.label);
    let mut customers = ChaCha8Rng::seed_from_u64(seeds.customers);
    let mut policy_rng = ChaCha8Rng::seed_from_u64(seeds.policy);
    let truth = Truth::new(instance, family)?;
    let horizon = config.horizon;
    let revenues = instance.revenues();
    let mut rec = Recorder::new(grid, snapshot_points);
    let mut snapshots = Vec::new();
    let mut epochs = Vec::new();
    let mut estimates = None;

    match run.name {
        PolicyName::MnlExperimentUcb | PolicyName::MnlBanditEe => {
            let mut learner = match run.name {
                PolicyName::MnlExperimentUcb => Learner::Ucb(MnlExperimentUcb::new(
                    run.policy
                        .ok_or_else(|| Error::config("UCB run without policy config"))?,
                    config.n_items,
                )),
                _ => Learner::Ee(MnlBanditEe::new(config.n_items)),
            };
            let mut v_hat = learner.estimate();
            let mut t = 1;
            while t <= horizon {
                let ell = learner.completed() + 1;
                let (offered, probs, kind, star, chunks) = match &mut learner {
                    Learner::Ucb(p) => {
                        let s = p.select(family, revenues, &mut policy_rng)?;
                        (s.offered, s.selection_probs, s.kind, s.star, s.chunks)
                    }
                    Learner::Ee(p) => {
                        let (s, probs) = p.select(family, revenues)?;
                        (s.clone(), probs, OfferKind::Optimistic, s, Vec::new())
                    }
                };
                let gap = truth.gap(&offered)?;
                let (record, _) =
                    run_epoch(instance, &offered, &probs, ell, t, horizon, &mut customers)?;
                let end = t + record.length - 1;
                let size = offered.len();
                let metrics = |v: &[f64]| (Some(truth.mse_v(v)), Some(truth.mse_r_plugin(v)));
                for s in t..end {
                    rec.step(s, gap, size, || metrics(&v_hat));
                    if rec.wants_snapshot(s) {
                        snapshots.push(Snapshot {
                            t: s,
                            completed_epochs: learner.completed(),
                            v_hat: v_hat.clone(),
                        });
                    }
                }
                if !record.truncated {
                    match &mut learner {
                        Learner::Ucb(p) => p.observe(&record)?,
                        Learner::Ee(p) => p.observe(&record)?,
                    }
                    v_hat = learner.estimate();
                    rec.invalidate();
                }
                rec.step(end, gap, size, || metrics(&v_hat));
                if rec.wants_snapshot(end) {
                    snapshots.push(Snapshot {
                        t: end,
                        completed_epochs: learner.completed(),
                        v_hat: v_hat.clone(),
                    });
                }
                epochs.push(EpochLog {
                    index: ell,
                    start: t,
                    length: record.length,
                    offered,
                    star,
                    kind,
                    chunks,
                    truncated: record.truncated,
                });
                t = end + 1;
            }
            if learner.completed() > 0 {
                estimates = Some(FinalEstimates {
                    v_hat,
                    completed_epochs: learner.completed(),
                });
            }
        }
        PolicyName::Exp3eg => {
            let mut bandit = Exp3Eg::new(family.len(), run.exp3, instance.max_revenue())?;
            for t in 1..=horizon {
                let (arm, _) = bandit.select(&mut policy_rng);
                let offered = &family.enumerate()[arm];
                let gap = truth.gap(offered)?;
                let choice = instance.sample_choice(offered, &mut customers)?;
                let reward = if choice.is_no_purchase() {
                    0.0
                } else {
                    instance.revenue(choice.index())
                };
                bandit.update(arm, reward)?;
                rec.invalidate();
                rec.step(t, gap, offered.len(), || {
                    (
                        None,
                        Some(truth.mse_r_direct(bandit.mean_rewards().into_iter())),
                    )
                });
            }
        }
        PolicyName::Oracle => {
            let gap = truth.gap(&truth.star)?;
            for t in 1..=horizon {
                instance.sample_choice(&truth.star, &mut customers)?;
                rec.step(t, gap, truth.star.len(), || (None, None));
            }
        }
    }

    Ok(TrialResult {
        label: run.label.clone(),
        alpha: run.alpha,
        trial,
        seeds,
        instance_digest: instance.digest(),
        v_true: instance.attractions().to_vec(),
        r_true: revenues.to_vec(),
        r_star: truth.r_star,
        out_of_theory: run.out_of_theory(),
        grid: grid.to_vec(),
        offered_size: rec.offered_size,
        cum_regret: rec.cum_regret,
        mse_v: rec.mse_v,
        mse_r: rec.mse_r,
        estimates,
        snapshots,
        epochs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialFailure {
    pub label: String,
    pub alpha: Option<f64>,
    pub trial: usize,
    pub message: String,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    pub runs: Vec<RunSpec>,
    /// Completed trials ordered by run, then trial index.
    pub trials: Vec<TrialResult>,
    pub failures: Vec<TrialFailure>,
    pub summary: Vec<SummaryRow>,
    pub wall_clock_secs: f64,
    pub workers: usize,
}

impl ExperimentOutput {
    /// Completed trials of one run.
    pub fn trials_of<'a>(
        &'a self,
        label: &'a str,
        alpha: Option<f64>,
    ) -> impl Iterator<Item = &'a TrialResult> {
        self.trials
            .iter()
            .filter(move |t| t.label == label && t.alpha == alpha)
    }

    /// Summary row at the horizon for one run.
    pub fn final_summary(&self, label: &str, alpha: Option<f64>) -> Option<&SummaryRow> {
        self.summary
            .iter()
            .rev()
            .find(|r| r.policy == label && r.alpha == alpha)
    }
}

/// Runs every (policy, α, trial) job and aggregates across trials.
///
/// `workers` overrides the configured worker count; `None` in both places
/// means one worker per available core.
pub fn run_experiment(
    config: &ExperimentConfig,
    workers: Option<usize>,
) -> Result<ExperimentOutput> {
    config.validate()?;
    let runs = config.runs()?;
    let family = FeasibleFamily::new(config.n_items, config.max_size)?;
    let grid = config.metric_grid.resolve(config.horizon);
    let mut snapshot_points = config.snapshot_points.clone();
    snapshot_points.sort_unstable();
    snapshot_points.dedup();
    let instances = (0..config.trials)
        .map(|k| trial_instance(config, k))
        .collect::<Result<Vec<_>>>()?;

    let workers = workers
        .or(config.workers)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Internal(e.to_string()))?;

    let jobs: Vec<(usize, usize)> = (0..runs.len())
        .flat_map(|r| (0..config.trials).map(move |k| (r, k)))
        .collect();
    let started = Instant::now();
    let results: Vec<Result<TrialResult>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(r, k)| {
                run_trial_on(
                    config,
                    &runs[r],
                    k,
                    &instances[k],
                    &family,
                    &grid,
                    &snapshot_points,
                )
            })
            .collect()
    });
    let wall_clock_secs = started.elapsed().as_secs_f64();

    let mut trials = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (&(r, k), res) in jobs.iter().zip(results) {
        match res {
            Ok(t) => trials.push(t),
            Err(e) => {
                log::warn!("trial {k} of {} failed: {e}", runs[r].label);
                failures.push(TrialFailure {
                    label: runs[r].label.clone(),
                    alpha: runs[r].alpha,
                    trial: k,
                    message: e.to_string(),
                });
            }
        }
    }
    if trials.is_empty() {
        return Err(Error::State(format!(
            "all {} trials failed",
            failures.len()
        )));
    }
    if !failures.is_empty() {
        log::warn!(
            "{} trial(s) failed; aggregating over the rest",
            failures.len()
        );
    }
    let summary = aggregate(&runs, &trials, &grid);
    Ok(ExperimentOutput {
        config: config.clone(),
        runs,
        trials,
        failures,
        summary,
        wall_clock_secs,
        workers,
    })
}

/// Mean and sample standard deviation across trials at every grid point.
pub fn aggregate(runs: &[RunSpec], trials: &[TrialResult], grid: &[usize]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for run in runs {
        let group: Vec<&TrialResult> = trials
            .iter()
            .filter(|t| t.label == run.label && t.alpha == run.alpha)
            .collect();
        if group.is_empty() {
            continue;
        }
        for (g, &t) in grid.iter().enumerate() {
            let regret: RunningStats = group.iter().map(|tr| tr.cum_regret[g]).collect();
            let optional = |f: &dyn Fn(&TrialResult) -> Option<f64>| -> Option<RunningStats> {
                group
                    .iter()
                    .map(|tr| f(tr))
                    .collect::<Option<Vec<f64>>>()
                    .map(|xs| xs.into_iter().collect())
            };
            let mse_v = optional(&|tr| tr.mse_v[g]);
            let mse_r = optional(&|tr| tr.mse_r[g]);
            rows.push(SummaryRow {
                policy: run.label.clone(),
                alpha: run.alpha,
                t,
                mean_cum_regret: regret.mean(),
                sd_cum_regret: regret.sd(),
                mean_mse_v: mse_v.as_ref().map(RunningStats::mean),
                sd_mse_v: mse_v.as_ref().map(RunningStats::sd),
                mean_mse_r: mse_r.as_ref().map(RunningStats::mean),
                sd_mse_r: mse_r.as_ref().map(RunningStats::sd),
            });
        }
    }
    rows
}
