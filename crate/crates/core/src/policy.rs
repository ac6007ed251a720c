//! Epoch-based UCB policy with forced complement exploration.
//!
//! Each epoch the policy computes the optimistic assortment `S*` under the
//! current UCB indices. With a small, decaying probability it offers items
//! outside `S*` instead, which keeps every item observed often enough for
//! inverse-propensity-weighted (IPW) estimates of the attraction parameters
//! to be unbiased and consistent. The decay exponent `alpha` trades regret
//! against estimation accuracy.
//!
//! Three selection rules share one state container:
//!
//! * [`Variant::Standard`]: offer the full complement `[N] \ S*` with
//!   probability `1 / (2 ℓ^α)`.
//! * [`Variant::KStar`]: split the complement into chunks of at most `K*`
//!   items and offer each with probability `1 / (⌈N/K*⌉ ℓ^α)`.
//! * [`Variant::General`]: for attractions that may exceed the no-purchase
//!   weight; uses the wider UCB2 index and forces exploratory epochs on
//!   under-observed items.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::epoch::EpochRecord;
use crate::error::{Error, Result};
use crate::family::FeasibleFamily;
use crate::mnl::Assortment;

/// Multiplier in the UCB confidence radius.
pub const UCB_CONSTANT: f64 = 48.0;

/// `ln(√N · ℓ + 1)`.
pub fn confidence_log(n_items: usize, ell: usize) -> f64 {
    ((n_items as f64).sqrt() * ell as f64 + 1.0).ln()
}

/// `48 ln(√N · ℓ + 1)`: the radius numerator, and in the general variant
/// the number of epochs an item needs before it stops forcing exploration.
pub fn exploration_threshold(n_items: usize, ell: usize) -> f64 {
    UCB_CONSTANT * confidence_log(n_items, ell)
}

/// `v̄ + sqrt(v̄ · 48 ln(√N ℓ + 1) / T_i) + 48 ln(√N ℓ + 1) / T_i`, or the
/// initial value 1 when the item has never been offered.
pub fn ucb_index(v_bar: f64, t_i: u64, n_items: usize, ell: usize) -> f64 {
    if t_i == 0 {
        return 1.0;
    }
    let rad = exploration_threshold(n_items, ell) / t_i as f64;
    v_bar + (v_bar * rad).sqrt() + rad
}

/// Like [`ucb_index`] with the middle term scaled by `max(√v̄, v̄)` instead
/// of `√v̄`, for attractions that may exceed one.
pub fn ucb2_index(v_bar: f64, t_i: u64, n_items: usize, ell: usize) -> f64 {
    if t_i == 0 {
        return 1.0;
    }
    let rad = exploration_threshold(n_items, ell) / t_i as f64;
    v_bar + v_bar.sqrt().max(v_bar) * rad.sqrt() + rad
}

/// `1 / (2 ℓ^α)`.
pub fn exploration_prob(alpha: f64, ell: usize) -> f64 {
    1.0 / (2.0 * (ell as f64).powf(alpha))
}

/// `1 / (⌈N / K*⌉ ℓ^α)`.
pub fn chunk_exploration_prob(alpha: f64, ell: usize, n_items: usize, k_star: usize) -> f64 {
    1.0 / (n_items.div_ceil(k_star) as f64 * (ell as f64).powf(alpha))
}

/// Splits `complement` into runs of at most `k_star` items in ascending order.
pub fn partition_complement(complement: &Assortment, k_star: usize) -> Vec<Assortment> {
    complement
        .items()
        .chunks(k_star)
        .map(|c| Assortment::from_sorted_unchecked(c.to_vec()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum Variant {
    Standard,
    KStar {
        k_star: usize,
    },
    /// Relaxed attraction regime; `b_bound` is the assumed `max v_i / v0`,
    /// recorded for analysis only.
    General {
        b_bound: Option<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    alpha: f64,
    variant: Variant,
    complement_sampling: bool,
    out_of_theory: bool,
}

impl PolicyConfig {
    /// `alpha` must lie in `[0, 1/2]`.
    pub fn new(alpha: f64, variant: Variant) -> Result<Self> {
        if !(0.0..=0.5).contains(&alpha) {
            return Err(Error::config(format!("alpha = {alpha} outside [0, 0.5]")));
        }
        Self::build(alpha, variant, false)
    }

    pub fn standard(alpha: f64) -> Result<Self> {
        Self::new(alpha, Variant::Standard)
    }

    /// Accepts any finite `alpha >= 0`, flagging values above 1/2, which the
    /// regret guarantee does not cover.
    pub fn out_of_theory(alpha: f64, variant: Variant) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::config(format!(
                "alpha = {alpha} must be a nonnegative real"
            )));
        }
        Self::build(alpha, variant, alpha > 0.5)
    }

    fn build(alpha: f64, variant: Variant, out_of_theory: bool) -> Result<Self> {
        match variant {
            Variant::KStar { k_star: 0 } => return Err(Error::config("k_star must be at least 1")),
            Variant::General { b_bound: Some(b) } if b.is_nan() || b < 1.0 => {
                return Err(Error::config(format!("b_bound = {b} must be at least 1")))
            }
            _ => {}
        }
        Ok(PolicyConfig {
            alpha,
            variant,
            complement_sampling: true,
            out_of_theory,
        })
    }

    /// Disables the randomized branch so `S*` is always offered.
    pub fn without_complement_sampling(mut self) -> Self {
        self.complement_sampling = false;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn complement_sampling(&self) -> bool {
        self.complement_sampling
    }

    pub fn is_out_of_theory(&self) -> bool {
        self.out_of_theory
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OfferKind {
    Optimistic,
    Complement,
    /// Index of the complement chunk that was offered.
    ComplementChunk(usize),
    Exploratory,
}

/// Outcome of one assortment selection.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub offered: Assortment,
    /// Inclusion probability `P(i ∈ S_ℓ | S*_ℓ)` per item, indexed by `item - 1`.
    pub selection_probs: Vec<f64>,
    pub kind: OfferKind,
    pub star: Assortment,
    /// Complement chunks (k-star variant only; empty otherwise).
    pub chunks: Vec<Assortment>,
}

/// Running per-item statistics shared by all epoch-based UCB policies.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    n_items: usize,
    completed: usize,
    appearances: Vec<u64>,
    count_sums: Vec<u64>,
    v_bar: Vec<f64>,
    v_ucb: Vec<f64>,
    sum_v: Vec<f64>,
    last_star: Option<Assortment>,
    last_selection_probs: Vec<f64>,
}

impl PolicyState {
    pub fn new(n_items: usize) -> Self {
        PolicyState {
            n_items,
            completed: 0,
            appearances: vec![0; n_items],
            count_sums: vec![0; n_items],
            v_bar: vec![0.0; n_items],
            v_ucb: vec![1.0; n_items],
            sum_v: vec![0.0; n_items],
            last_star: None,
            last_selection_probs: Vec::new(),
        }
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Index ℓ of the epoch about to be played (completed epochs + 1).
    pub fn ell(&self) -> usize {
        self.completed + 1
    }

    /// Number L of completed epochs.
    pub fn completed_epochs(&self) -> usize {
        self.completed
    }

    /// `T_i`: completed epochs whose offer contained each item.
    pub fn appearances(&self) -> &[u64] {
        &self.appearances
    }

    /// Sample means `v̄_i` of the per-epoch counts (0 before the first offer).
    pub fn v_bar(&self) -> &[f64] {
        &self.v_bar
    }

    /// Current optimistic indices (UCB, or UCB2 in the general variant).
    pub fn v_ucb(&self) -> &[f64] {
        &self.v_ucb
    }

    /// IPW accumulators `SumV_i`.
    pub fn sum_v(&self) -> &[f64] {
        &self.sum_v
    }

    pub fn last_star(&self) -> Option<&Assortment> {
        self.last_star.as_ref()
    }

    pub fn last_selection_probs(&self) -> &[f64] {
        &self.last_selection_probs
    }

    /// `S*` under the current optimistic indices.
    pub fn optimistic_set(&self, family: &FeasibleFamily, revenues: &[f64]) -> Result<Assortment> {
        Ok(family.argmax_revenue(&self.v_ucb, revenues)?.0)
    }

    /// Chooses the assortment for epoch ℓ. Draws exactly one uniform from
    /// `rng` when complement sampling is enabled and none otherwise.
    pub fn select_assortment<R: Rng + ?Sized>(
        &mut self,
        config: &PolicyConfig,
        family: &FeasibleFamily,
        revenues: &[f64],
        rng: &mut R,
    ) -> Result<Selection> {
        let n = self.n_items;
        if family.n_items() != n || revenues.len() != n {
            return Err(Error::domain(format!(
                "policy tracks {n} items, family has {} and revenues {}",
                family.n_items(),
                revenues.len()
            )));
        }
        let ell = self.ell();
        let star = self.optimistic_set(family, revenues)?;
        let complement = star.complement(n);
        let mut selection = if !config.complement_sampling || complement.is_empty() {
            if config.complement_sampling {
                rng.random::<f64>();
            }
            Selection {
                selection_probs: indicator_probs(&star, n),
                offered: star.clone(),
                kind: OfferKind::Optimistic,
                star,
                chunks: Vec::new(),
            }
        } else {
            match config.variant {
                Variant::Standard | Variant::General { .. } => {
                    let a = exploration_prob(config.alpha, ell);
                    let probs = (1..=n)
                        .map(|i| if star.contains(i) { 1.0 - a } else { a })
                        .collect();
                    let (offered, kind) = if rng.random::<f64>() < a {
                        (complement, OfferKind::Complement)
                    } else {
                        (star.clone(), OfferKind::Optimistic)
                    };
                    Selection {
                        offered,
                        selection_probs: probs,
                        kind,
                        star,
                        chunks: Vec::new(),
                    }
                }
                Variant::KStar { k_star } => {
                    let a = chunk_exploration_prob(config.alpha, ell, n, k_star);
                    let chunks = partition_complement(&complement, k_star);
                    let m = chunks.len() as f64;
                    if m * a > 1.0 + 1e-12 {
                        return Err(Error::Internal(format!(
                            "{m} chunks with probability {a} each exceed one"
                        )));
                    }
                    let stay = (1.0 - m * a).max(0.0);
                    let probs = (1..=n)
                        .map(|i| if star.contains(i) { stay } else { a })
                        .collect();
                    let u = rng.random::<f64>();
                    let (offered, kind) = if u < m * a {
                        let j = ((u / a) as usize).min(chunks.len() - 1);
                        (chunks[j].clone(), OfferKind::ComplementChunk(j))
                    } else {
                        (star.clone(), OfferKind::Optimistic)
                    };
                    Selection {
                        offered,
                        selection_probs: probs,
                        kind,
                        star,
                        chunks,
                    }
                }
            }
        };

        if let Variant::General { .. } = config.variant {
            let thr = exploration_threshold(n, ell);
            let under = |i: usize| (self.appearances[i - 1] as f64) < thr;
            if selection.offered.iter().any(under) {
                let candidates =
                    Assortment::from_sorted_unchecked((1..=n).filter(|&i| under(i)).collect());
                selection.offered = family.largest_feasible_subset(&candidates);
                selection.selection_probs = vec![1.0; n];
                selection.kind = OfferKind::Exploratory;
            }
        }

        self.last_star = Some(selection.star.clone());
        self.last_selection_probs = selection.selection_probs.clone();
        Ok(selection)
    }

    /// Folds a completed epoch into the statistics and advances ℓ.
    pub fn observe_epoch(&mut self, config: &PolicyConfig, record: &EpochRecord) -> Result<()> {
        if record.truncated {
            return Err(Error::State(
                "truncated epochs carry no estimator update".into(),
            ));
        }
        if record.index != self.ell() {
            return Err(Error::State(format!(
                "record for epoch {} but policy is at epoch {}",
                record.index,
                self.ell()
            )));
        }
        if record.counts.len() != self.n_items || record.selection_probs.len() != self.n_items {
            return Err(Error::domain(
                "record does not match the policy's item count",
            ));
        }
        for i in record.offered.iter() {
            let p = record.selection_probs[i - 1];
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::domain(format!(
                    "offered item {i} has inclusion probability {p}"
                )));
            }
        }
        for i in record.offered.iter() {
            let k = i - 1;
            let c = record.counts[k];
            self.appearances[k] += 1;
            self.count_sums[k] += c;
            self.v_bar[k] = self.count_sums[k] as f64 / self.appearances[k] as f64;
            self.sum_v[k] += c as f64 / record.selection_probs[k];
        }
        self.completed += 1;
        let ell = self.completed;
        let index = match config.variant {
            Variant::General { .. } => ucb2_index,
            _ => ucb_index,
        };
        for k in 0..self.n_items {
            if self.appearances[k] > 0 {
                self.v_ucb[k] = index(self.v_bar[k], self.appearances[k], self.n_items, ell);
            }
        }
        Ok(())
    }

    /// `SumV_i / L`, or zeros before any epoch has completed.
    pub fn running_estimate(&self) -> Vec<f64> {
        if self.completed == 0 {
            return vec![0.0; self.n_items];
        }
        let l = self.completed as f64;
        self.sum_v.iter().map(|s| s / l).collect()
    }

    pub fn finalize(&self) -> Result<FinalEstimates> {
        if self.completed == 0 {
            return Err(Error::State("no completed epoch to estimate from".into()));
        }
        Ok(FinalEstimates {
            v_hat: self.running_estimate(),
            completed_epochs: self.completed,
        })
    }
}

fn indicator_probs(s: &Assortment, n: usize) -> Vec<f64> {
    (1..=n)
        .map(|i| if s.contains(i) { 1.0 } else { 0.0 })
        .collect()
}

/// Policy object bundling configuration and state.
#[derive(Debug, Clone)]
pub struct MnlExperimentUcb {
    config: PolicyConfig,
    state: PolicyState,
}

impl MnlExperimentUcb {
    pub fn new(config: PolicyConfig, n_items: usize) -> Self {
        MnlExperimentUcb {
            config,
            state: PolicyState::new(n_items),
        }
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn state(&self) -> &PolicyState {
        &self.state
    }

    pub fn select<R: Rng + ?Sized>(
        &mut self,
        family: &FeasibleFamily,
        revenues: &[f64],
        rng: &mut R,
    ) -> Result<Selection> {
        self.state
            .select_assortment(&self.config, family, revenues, rng)
    }

    pub fn observe(&mut self, record: &EpochRecord) -> Result<()> {
        self.state.observe_epoch(&self.config, record)
    }

    pub fn finalize(&self) -> Result<FinalEstimates> {
        self.state.finalize()
    }
}

/// Estimates returned at the end of a run: `v̂_i = SumV_L(i) / L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalEstimates {
    pub v_hat: Vec<f64>,
    pub completed_epochs: usize,
}

impl FinalEstimates {
    /// Plug-in revenue `Σ r_i v̂_i / (1 + Σ v̂_i)` over `s`.
    pub fn revenue_estimate(&self, revenues: &[f64], s: &Assortment) -> f64 {
        s.ratio_score(revenues, &self.v_hat)
    }
}

/// Pairwise differences of estimated attractions and plug-in revenues.
#[derive(Debug, Clone)]
pub struct AteEstimates<'a> {
    estimates: &'a FinalEstimates,
    family: &'a FeasibleFamily,
    revenue_hat: Vec<f64>,
}

/// Precomputes the plug-in revenue of every family member; differences are
/// then evaluated on demand.
pub fn ate_estimates<'a>(
    estimates: &'a FinalEstimates,
    revenues: &[f64],
    family: &'a FeasibleFamily,
) -> AteEstimates<'a> {
    let revenue_hat = family
        .enumerate()
        .iter()
        .map(|s| estimates.revenue_estimate(revenues, s))
        .collect();
    AteEstimates {
        estimates,
        family,
        revenue_hat,
    }
}

impl AteEstimates<'_> {
    /// `v̂_i − v̂_j` for 1-based items.
    pub fn item(&self, i: usize, j: usize) -> f64 {
        self.estimates.v_hat[i - 1] - self.estimates.v_hat[j - 1]
    }

    /// `R̂(S_a) − R̂(S_b)` for positions in the family enumeration.
    pub fn assortment(&self, a: usize, b: usize) -> f64 {
        self.revenue_hat[a] - self.revenue_hat[b]
    }

    pub fn revenue_estimates(&self) -> &[f64] {
        &self.revenue_hat
    }

    pub fn item_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.estimates.v_hat.len();
        (1..=n)
            .map(|i| (1..=n).map(|j| self.item(i, j)).collect())
            .collect()
    }

    /// Full `|S| × |S|` table; refused when it would exceed `cap` entries.
    pub fn assortment_matrix(&self, cap: u128) -> Result<Vec<Vec<f64>>> {
        let m = self.family.len();
        let count = (m as u128) * (m as u128);
        if count > cap {
            return Err(Error::Capacity { count, cap });
        }
        Ok((0..m)
            .map(|a| (0..m).map(|b| self.assortment(a, b)).collect())
            .collect())
    }
}
