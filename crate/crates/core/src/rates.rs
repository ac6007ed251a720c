//! Log-log rate fits, the regret/estimation product and coverage of the
//! attraction error radius.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{
    run_experiment, ExperimentConfig, MetricGrid, PolicyName, PolicySpec, SummaryRow, TrialResult,
};

/// Allowed deviation of a fitted slope from its target.
pub const SLOPE_TOLERANCE: f64 = 0.15;
/// Largest allowed max/min ratio of the product across horizons.
pub const PARETO_RATIO_LIMIT: f64 = 3.0;

/// Least-squares line through `(ln T, ln metric)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_rate(series: &[(f64, f64)]) -> Result<RateFit> {
    if series.len() < 3 {
        return Err(Error::domain(format!(
            "need at least 3 points, got {}",
            series.len()
        )));
    }
    if let Some((t, m)) = series
        .iter()
        .find(|(t, m)| !(*t > 0.0 && *m > 0.0 && t.is_finite() && m.is_finite()))
    {
        return Err(Error::domain(format!("point ({t}, {m}) is not positive")));
    }
    let x: Vec<f64> = series.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = series.iter().map(|p| p.1.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::domain("all T values are equal"));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    };
    Ok(RateFit {
        x,
        y,
        slope,
        intercept,
        r_squared,
    })
}

/// `max_error · sqrt(regret)`.
pub fn pareto_product(regret: f64, max_error: f64) -> f64 {
    max_error * regret.max(0.0).sqrt()
}

/// `12 ln(2/δ) (L + 1)^{−(1−α)/2}`.
pub fn estimation_radius(delta: f64, alpha: f64, completed_epochs: usize) -> f64 {
    12.0 * (2.0 / delta).ln() * ((completed_epochs + 1) as f64).powf(-(1.0 - alpha) / 2.0)
}

/// Final estimates of one trial together with the truth.
#[derive(Debug, Clone, PartialEq)]
pub struct CoverageSample {
    pub v_true: Vec<f64>,
    pub v_hat: Vec<f64>,
    pub completed_epochs: usize,
}

/// Fraction of (trial, item) pairs whose error lies within the radius.
pub fn coverage_check(samples: &[CoverageSample], delta: f64, alpha: f64) -> f64 {
    let mut inside = 0usize;
    let mut total = 0usize;
    for s in samples {
        let radius = estimation_radius(delta, alpha, s.completed_epochs);
        for (h, v) in s.v_hat.iter().zip(&s.v_true) {
            total += 1;
            if (h - v).abs() <= radius {
                inside += 1;
            }
        }
    }
    if total == 0 {
        0.0
    } else {
        inside as f64 / total as f64
    }
}

/// Max/min ratio of a set of positive values (infinite if any is zero).
pub fn spread_ratio(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

/// Slope targets for a given α.
pub fn regret_slope_limit(alpha: f64) -> f64 {
    0.5f64.max(1.0 - alpha) + SLOPE_TOLERANCE
}

pub fn error_slope_target(alpha: f64) -> f64 {
    (alpha - 1.0) / 2.0
}

/// Metrics of one α at one horizon, averaged over trials.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatePoint {
    pub horizon: usize,
    pub mean_regret: f64,
    /// Mean over trials and items of `|v̂_i − v_i|`.
    pub mean_abs_error: f64,
    /// `max_{i<j}` of the trial-mean of `|(v̂_i − v̂_j) − (v_i − v_j)|`.
    pub max_pair_error: f64,
    pub product: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaRates {
    pub alpha: f64,
    pub points: Vec<RatePoint>,
    pub regret_fit: RateFit,
    pub error_fit: RateFit,
    pub product_ratio: f64,
    pub regret_slope_limit: f64,
    pub error_slope_target: f64,
    pub regret_pass: bool,
    pub error_pass: bool,
    pub pareto_pass: bool,
}

/// Rate points computed from trials that kept snapshots at each horizon.
pub fn rate_points(trials: &[&TrialResult], horizons: &[usize]) -> Result<Vec<RatePoint>> {
    let mut out = Vec::new();
    for &h in horizons {
        let mut regret = 0.0;
        let mut abs_err = 0.0;
        let mut abs_count = 0usize;
        let mut pair: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for tr in trials {
            let g =
                tr.grid.iter().position(|&t| t == h).ok_or_else(|| {
                    Error::State(format!("horizon {h} missing from the metric grid"))
                })?;
            let snap = tr
                .snapshots
                .iter()
                .find(|s| s.t == h)
                .ok_or_else(|| Error::State(format!("no estimate snapshot at t = {h}")))?;
            regret += tr.cum_regret[g];
            let v = &tr.v_true;
            let e = &snap.v_hat;
            for k in 0..v.len() {
                abs_err += (e[k] - v[k]).abs();
                abs_count += 1;
                for j in k + 1..v.len() {
                    *pair.entry((k, j)).or_default() += ((e[k] - e[j]) - (v[k] - v[j])).abs();
                }
            }
        }
        let n = trials.len() as f64;
        let mean_regret = regret / n;
        let max_pair_error = pair.values().map(|s| s / n).fold(0.0, f64::max);
        out.push(RatePoint {
            horizon: h,
            mean_regret,
            mean_abs_error: abs_err / abs_count as f64,
            max_pair_error,
            product: pareto_product(mean_regret, max_pair_error),
        });
    }
    Ok(out)
}

/// Fits and tolerance checks for one α.
pub fn analyze_alpha(alpha: f64, points: Vec<RatePoint>) -> Result<AlphaRates> {
    let regret_fit = fit_rate(
        &points
            .iter()
            .map(|p| (p.horizon as f64, p.mean_regret))
            .collect::<Vec<_>>(),
    )?;
    let error_fit = fit_rate(
        &points
            .iter()
            .map(|p| (p.horizon as f64, p.mean_abs_error))
            .collect::<Vec<_>>(),
    )?;
    let product_ratio = spread_ratio(&points.iter().map(|p| p.product).collect::<Vec<_>>());
    let limit = regret_slope_limit(alpha);
    let target = error_slope_target(alpha);
    Ok(AlphaRates {
        alpha,
        regret_pass: regret_fit.slope <= limit,
        error_pass: (error_fit.slope - target).abs() <= SLOPE_TOLERANCE,
        pareto_pass: product_ratio <= PARETO_RATIO_LIMIT,
        points,
        regret_fit,
        error_fit,
        product_ratio,
        regret_slope_limit: limit,
        error_slope_target: target,
    })
}

/// Runs the policy once per trial to the largest horizon, reading metrics
/// at every smaller horizon along the way, and fits rates for each α.
///
/// `base` supplies the instance source, problem size, trial count and seed;
/// its policies, α grid, horizon and metric grid are replaced.
pub fn rate_study(
    base: &ExperimentConfig,
    alphas: &[f64],
    horizons: &[usize],
    workers: Option<usize>,
) -> Result<Vec<AlphaRates>> {
    let mut horizons = horizons.to_vec();
    horizons.sort_unstable();
    horizons.dedup();
    let top = *horizons
        .last()
        .ok_or_else(|| Error::config("no horizons"))?;
    let mut config = base.clone();
    config.horizon = top;
    config.alphas = alphas.to_vec();
    config.policies = vec![PolicySpec::new(PolicyName::MnlExperimentUcb)];
    config.metric_grid = MetricGrid::Points(horizons.clone());
    config.snapshot_points = horizons.clone();
    let out = run_experiment(&config, workers)?;
    alphas
        .iter()
        .map(|&a| {
            let trials: Vec<&TrialResult> =
                out.trials.iter().filter(|t| t.alpha == Some(a)).collect();
            analyze_alpha(a, rate_points(&trials, &horizons)?)
        })
        .collect()
}

/// Per (policy, α) rate report derived from a summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRates {
    pub policy: String,
    pub alpha: Option<f64>,
    pub horizons: Vec<usize>,
    pub regret_fit: Option<RateFit>,
    /// Fit of the root mean squared attraction error.
    pub error_fit: Option<RateFit>,
    /// `rmse_v · sqrt(regret)` at each horizon.
    pub products: Vec<f64>,
    pub product_ratio: Option<f64>,
    pub regret_pass: Option<bool>,
    pub error_pass: Option<bool>,
    pub pareto_pass: Option<bool>,
    pub coverage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RatesReport {
    pub slope_tolerance: f64,
    pub pareto_ratio_limit: f64,
    pub delta: f64,
    pub series: Vec<SummaryRates>,
}

/// Horizons used for summary fits: the largest recorded `t` and its halvings,
/// down to five points, taking the nearest recorded time point.
fn fit_horizons(ts: &[usize]) -> Vec<usize> {
    let Some(&top) = ts.last() else {
        return Vec::new();
    };
    let mut out = Vec::new();
    for k in 0..5 {
        let target = top >> k;
        if target == 0 {
            break;
        }
        let nearest = *ts
            .iter()
            .min_by_key(|&&t| (t as i64 - target as i64).unsigned_abs())
            .expect("nonempty");
        if !out.contains(&nearest) {
            out.push(nearest);
        }
    }
    out.sort_unstable();
    out
}

/// Builds rate fits from `summary.csv` rows. `coverage` maps `(policy, α)` to
/// coverage samples when per-trial estimates are available.
pub fn rates_from_summary(
    rows: &[SummaryRow],
    coverage: &CoverageTable,
    delta: f64,
) -> RatesReport {
    let mut groups: BTreeMap<(String, Option<u64>), Vec<&SummaryRow>> = BTreeMap::new();
    let mut order = Vec::new();
    for r in rows {
        let key = (r.policy.clone(), r.alpha.map(f64::to_bits));
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    let series = order
        .into_iter()
        .map(|key| {
            let mut g = groups.remove(&key).expect("grouped");
            g.sort_by_key(|r| r.t);
            let ts: Vec<usize> = g.iter().map(|r| r.t).collect();
            let horizons = fit_horizons(&ts);
            let at = |t: usize| {
                g.iter()
                    .find(|r| r.t == t)
                    .expect("horizon taken from rows")
            };
            let regret_fit = fit_rate(
                &horizons
                    .iter()
                    .map(|&t| (t as f64, at(t).mean_cum_regret))
                    .collect::<Vec<_>>(),
            )
            .ok();
            let rmse: Option<Vec<f64>> = horizons
                .iter()
                .map(|&t| at(t).mean_mse_v.map(f64::sqrt))
                .collect();
            let error_fit = rmse.as_ref().and_then(|e| {
                fit_rate(
                    &horizons
                        .iter()
                        .zip(e)
                        .map(|(&t, &m)| (t as f64, m))
                        .collect::<Vec<_>>(),
                )
                .ok()
            });
            let products: Vec<f64> = rmse
                .as_ref()
                .map(|e| {
                    horizons
                        .iter()
                        .zip(e)
                        .map(|(&t, &m)| pareto_product(at(t).mean_cum_regret, m))
                        .collect()
                })
                .unwrap_or_default();
            let product_ratio = (!products.is_empty()).then(|| spread_ratio(&products));
            let alpha = key.1.map(f64::from_bits);
            let regret_pass = alpha.and_then(|a| {
                regret_fit
                    .as_ref()
                    .map(|f| f.slope <= regret_slope_limit(a))
            });
            let error_pass = alpha.and_then(|a| {
                error_fit
                    .as_ref()
                    .map(|f| (f.slope - error_slope_target(a)).abs() <= SLOPE_TOLERANCE)
            });
            let pareto_pass = alpha.and(product_ratio).map(|r| r <= PARETO_RATIO_LIMIT);
            let coverage = match (alpha, coverage.get(&key)) {
                (Some(a), Some(samples)) => Some(coverage_check(samples, delta, a)),
                _ => None,
            };
            SummaryRates {
                policy: key.0,
                alpha,
                horizons,
                regret_fit,
                error_fit,
                products,
                product_ratio,
                regret_pass,
                error_pass,
                pareto_pass,
                coverage,
            }
        })
        .collect();
    RatesReport {
        slope_tolerance: SLOPE_TOLERANCE,
        pareto_ratio_limit: PARETO_RATIO_LIMIT,
        delta,
        series,
    }
}

#[derive(serde::Deserialize)]
struct EstimateRow {
    policy: String,
    alpha: Option<f64>,
    trial: usize,
    #[allow(dead_code)]
    item: usize,
    v_true: f64,
    v_hat: Option<f64>,
}

#[derive(serde::Deserialize)]
struct TrialRow {
    policy: String,
    alpha: Option<f64>,
    trial: usize,
    completed_epochs: Option<usize>,
}

/// Coverage samples keyed by policy label and α bits.
pub type CoverageTable = BTreeMap<(String, Option<u64>), Vec<CoverageSample>>;

/// Coverage samples from `estimates.csv` and `trials.csv` in `dir`; empty if
/// either file is missing.
pub fn read_coverage_samples(dir: &Path) -> Result<CoverageTable> {
    let (est, trials) = (dir.join("estimates.csv"), dir.join("trials.csv"));
    let mut out = CoverageTable::new();
    if !est.exists() || !trials.exists() {
        return Ok(out);
    }
    let mut epochs = BTreeMap::new();
    for row in csv::Reader::from_path(trials)?.deserialize::<TrialRow>() {
        let row = row?;
        if let Some(l) = row.completed_epochs {
            epochs.insert((row.policy, row.alpha.map(f64::to_bits), row.trial), l);
        }
    }
    let mut per_trial: BTreeMap<(String, Option<u64>, usize), CoverageSample> = BTreeMap::new();
    for row in csv::Reader::from_path(est)?.deserialize::<EstimateRow>() {
        let row = row?;
        let Some(v_hat) = row.v_hat else { continue };
        let key = (row.policy, row.alpha.map(f64::to_bits), row.trial);
        let Some(&l) = epochs.get(&key) else { continue };
        let s = per_trial.entry(key).or_insert_with(|| CoverageSample {
            v_true: Vec::new(),
            v_hat: Vec::new(),
            completed_epochs: l,
        });
        s.v_true.push(row.v_true);
        s.v_hat.push(v_hat);
    }
    for ((p, a, _), s) in per_trial {
        out.entry((p, a)).or_default().push(s);
    }
    Ok(out)
}
