//! CSV and JSON writers. Missing values are written as empty fields.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExperimentOutput, CODE_VERSION};
use crate::error::Result;

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub policy: String,
    pub alpha: Option<f64>,
    pub t: usize,
    pub mean_cum_regret: f64,
    pub sd_cum_regret: f64,
    pub mean_mse_v: Option<f64>,
    pub sd_mse_v: Option<f64>,
    pub mean_mse_r: Option<f64>,
    pub sd_mse_r: Option<f64>,
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes `per_step.csv`, `estimates.csv`, `summary.csv`, `trials.csv` and
/// `manifest.json` into `dir`, creating it if needed.
pub fn write_outputs(out: &ExperimentOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;

    let mut w = csv::Writer::from_path(dir.join("per_step.csv"))?;
    w.write_record([
        "policy",
        "alpha",
        "trial",
        "t",
        "offered_size",
        "cum_regret",
        "mse_v",
        "mse_r",
    ])?;
    for tr in &out.trials {
        for (g, t) in tr.grid.iter().enumerate() {
            w.write_record([
                tr.label.clone(),
                opt(tr.alpha),
                tr.trial.to_string(),
                t.to_string(),
                tr.offered_size[g].to_string(),
                tr.cum_regret[g].to_string(),
                opt(tr.mse_v[g]),
                opt(tr.mse_r[g]),
            ])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("estimates.csv"))?;
    w.write_record(["policy", "alpha", "trial", "item", "v_true", "v_hat"])?;
    for tr in &out.trials {
        for (k, v) in tr.v_true.iter().enumerate() {
            let v_hat = tr.estimates.as_ref().map(|e| e.v_hat[k]);
            w.write_record([
                tr.label.clone(),
                opt(tr.alpha),
                tr.trial.to_string(),
                (k + 1).to_string(),
                v.to_string(),
                opt(v_hat),
            ])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record([
        "policy",
        "alpha",
        "t",
        "mean_cum_regret",
        "sd_cum_regret",
        "mean_mse_v",
        "sd_mse_v",
        "mean_mse_r",
        "sd_mse_r",
    ])?;
    for r in &out.summary {
        w.write_record([
            r.policy.clone(),
            opt(r.alpha),
            r.t.to_string(),
            r.mean_cum_regret.to_string(),
            r.sd_cum_regret.to_string(),
            opt(r.mean_mse_v),
            opt(r.sd_mse_v),
            opt(r.mean_mse_r),
            opt(r.sd_mse_r),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("trials.csv"))?;
    w.write_record([
        "policy",
        "alpha",
        "trial",
        "instance_digest",
        "completed_epochs",
        "r_star",
        "final_cum_regret",
    ])?;
    for tr in &out.trials {
        w.write_record([
            tr.label.clone(),
            opt(tr.alpha),
            tr.trial.to_string(),
            tr.instance_digest.clone(),
            tr.estimates
                .as_ref()
                .map(|e| e.completed_epochs.to_string())
                .unwrap_or_default(),
            tr.r_star.to_string(),
            tr.final_regret().to_string(),
        ])?;
    }
    w.flush()?;

    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest(out))?,
    )?;
    Ok(())
}

fn manifest(out: &ExperimentOutput) -> serde_json::Value {
    let runs: Vec<_> = out
        .runs
        .iter()
        .map(|r| {
            serde_json::json!({
                "policy": r.label,
                "alpha": r.alpha,
                "out_of_theory": r.out_of_theory(),
            })
        })
        .collect();
    let seeds: Vec<_> = out
        .trials
        .iter()
        .map(|t| {
            serde_json::json!({
                "policy": t.label,
                "alpha": t.alpha,
                "trial": t.trial,
                "seeds": t.seeds,
                "instance_digest": t.instance_digest,
            })
        })
        .collect();
    let mut flags = vec![
        "running estimate is the zero vector before the first completed epoch".to_string(),
        "MSE series use the estimate frozen at the last completed epoch".to_string(),
    ];
    if out.runs.iter().any(|r| r.name == super::PolicyName::Exp3eg) {
        flags.push(
            "EXP3EG exploration and learning-rate schedules are a stand-in; MSE_v is absent".into(),
        );
    }
    for r in out.runs.iter().filter(|r| r.out_of_theory()) {
        flags.push(format!(
            "{} alpha={} is outside [0, 0.5]",
            r.label,
            r.alpha.unwrap_or_default()
        ));
    }
    serde_json::json!({
        "code_version": CODE_VERSION,
        "config": out.config,
        "master_seed": out.config.master_seed,
        "workers": out.workers,
        "wall_clock_secs": out.wall_clock_secs,
        "runs": runs,
        "trial_seeds": seeds,
        "failures": out.failures,
        "approximation_flags": flags,
    })
}

/// Reads a `summary.csv` written by [`write_outputs`].
pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r
        .deserialize()
        .collect::<std::result::Result<Vec<SummaryRow>, _>>()?;
    Ok(rows)
}
