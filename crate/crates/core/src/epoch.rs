//! Offer-until-no-purchase epochs.
//!
//! An epoch offers one assortment repeatedly until a customer declines to
//! purchase (or the horizon is reached). The terminal no-purchase step is
//! part of the epoch's length.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mnl::{Assortment, ChoiceOutcome, MnlInstance};
use crate::stats::RunningStats;

/// One finished (or horizon-truncated) epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch index ℓ.
    pub index: usize,
    pub offered: Assortment,
    /// Time steps consumed, including the terminal no-purchase step.
    pub length: usize,
    /// Purchases per item, indexed by `item - 1`; zero for items not offered.
    pub counts: Vec<u64>,
    /// Probability with which each item was included in the offer, indexed
    /// by `item - 1`.
    pub selection_probs: Vec<f64>,
    /// The horizon cut the epoch before any no-purchase occurred.
    pub truncated: bool,
}

impl EpochRecord {
    pub fn count(&self, item: usize) -> u64 {
        self.counts[item - 1]
    }

    pub fn purchases(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Runs one epoch starting at time step `t_now` (1-based).
///
/// Steps are sampled while `t <= horizon`; if the horizon is hit before a
/// no-purchase the record is flagged as truncated. Returns the record and
/// the per-step choices.
#[allow(clippy::too_many_arguments)]
pub fn run_epoch<R: Rng + ?Sized>(
    instance: &MnlInstance,
    offered: &Assortment,
    selection_probs: &[f64],
    index: usize,
    t_now: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<(EpochRecord, Vec<ChoiceOutcome>)> {
    if t_now > horizon {
        return Err(Error::domain(format!(
            "epoch starts at t = {t_now} past horizon {horizon}"
        )));
    }
    if offered.is_empty() {
        return Err(Error::domain("epoch offered an empty assortment"));
    }
    let n = instance.n_items();
    if selection_probs.len() != n {
        return Err(Error::domain(format!(
            "expected {n} selection probabilities, got {}",
            selection_probs.len()
        )));
    }
    let mut counts = vec![0u64; n];
    let mut log = Vec::new();
    let mut t = t_now;
    let mut truncated = true;
    while t <= horizon {
        let c = instance.sample_choice(offered, rng)?;
        log.push(c);
        t += 1;
        match c {
            ChoiceOutcome::NoPurchase => {
                truncated = false;
                break;
            }
            ChoiceOutcome::Purchase(i) => counts[i - 1] += 1,
        }
    }
    let record = EpochRecord {
        index,
        offered: offered.clone(),
        length: log.len(),
        counts,
        selection_probs: selection_probs.to_vec(),
        truncated,
    };
    Ok((record, log))
}

/// Empirical moments of repeated, untruncated epochs on a fixed assortment.
#[derive(Debug, Clone)]
pub struct EpochMoments {
    pub epochs: usize,
    pub length: RunningStats,
    /// Per-item statistics of the per-epoch purchase count, indexed by `item - 1`.
    pub count: Vec<RunningStats>,
    /// Per-item statistics of the squared per-epoch count.
    pub count_sq: Vec<RunningStats>,
    /// Per-item histogram of counts; `hist[i][m]` = epochs with count `m`.
    pub hist: Vec<Vec<u64>>,
}

impl EpochMoments {
    pub fn mean_length(&self) -> f64 {
        self.length.mean()
    }

    pub fn empirical_pmf(&self, item: usize, m: usize) -> f64 {
        let h = &self.hist[item - 1];
        h.get(m).copied().unwrap_or(0) as f64 / self.epochs as f64
    }
}

/// Runs `n_epochs` epochs on `offered` with no horizon and reports means
/// and standard errors of lengths and per-item counts.
pub fn epoch_count_distribution_check<R: Rng + ?Sized>(
    instance: &MnlInstance,
    offered: &Assortment,
    n_epochs: usize,
    rng: &mut R,
) -> Result<EpochMoments> {
    if n_epochs < 1_000 {
        return Err(Error::domain(format!(
            "need at least 1000 epochs, got {n_epochs}"
        )));
    }
    let n = instance.n_items();
    let probs = vec![1.0; n];
    let mut out = EpochMoments {
        epochs: n_epochs,
        length: RunningStats::new(),
        count: vec![RunningStats::new(); n],
        count_sq: vec![RunningStats::new(); n],
        hist: vec![Vec::new(); n],
    };
    for ell in 1..=n_epochs {
        let (rec, _) = run_epoch(instance, offered, &probs, ell, 1, usize::MAX, rng)?;
        out.length.push(rec.length as f64);
        for i in offered.iter() {
            let c = rec.count(i);
            out.count[i - 1].push(c as f64);
            out.count_sq[i - 1].push((c * c) as f64);
            let h = &mut out.hist[i - 1];
            if h.len() <= c as usize {
                h.resize(c as usize + 1, 0);
            }
            h[c as usize] += 1;
        }
    }
    Ok(out)
}
