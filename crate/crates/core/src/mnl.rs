//! Ground-truth multinomial logit (MNL) choice model.
//!
//! Items are numbered `1..=N`; index `0` is reserved for the no-purchase
//! option, whose attraction is fixed to `v0 = 1`. Internally parameters are
//! stored in `Vec`s at offset `item - 1`.

use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Attraction of the no-purchase option.
pub const NO_PURCHASE_ATTRACTION: f64 = 1.0;

/// Distinct items offered together, kept in ascending order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assortment(Vec<usize>);

impl Assortment {
    /// Builds an assortment over `1..=n_items`, sorting the indices.
    pub fn new(mut items: Vec<usize>, n_items: usize) -> Result<Self> {
        items.sort_unstable();
        if let Some(w) = items.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::domain(format!(
                "duplicate item {} in assortment",
                w[0]
            )));
        }
        if let Some(&bad) = items.iter().find(|&&i| i == 0 || i > n_items) {
            return Err(Error::domain(format!("item {bad} outside 1..={n_items}")));
        }
        Ok(Assortment(items))
    }

    /// Caller guarantees the items are sorted, distinct and 1-based.
    pub(crate) fn from_sorted_unchecked(items: Vec<usize>) -> Self {
        debug_assert!(items.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(items.first().is_none_or(|&i| i >= 1));
        Assortment(items)
    }

    pub fn empty() -> Self {
        Assortment(Vec::new())
    }

    /// Every item in `1..=n_items` not in `self`.
    pub fn complement(&self, n_items: usize) -> Assortment {
        let mut out = Vec::with_capacity(n_items.saturating_sub(self.len()));
        let mut it = self.0.iter().peekable();
        for i in 1..=n_items {
            if it.peek() == Some(&&i) {
                it.next();
            } else {
                out.push(i);
            }
        }
        Assortment(out)
    }

    pub fn items(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, item: usize) -> bool {
        self.0.binary_search(&item).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    /// `Σ num_i / (1 + Σ den_i)` over the assortment with 0-based slices.
    pub(crate) fn ratio_score(&self, numer_weights: &[f64], weights: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = NO_PURCHASE_ATTRACTION;
        for &i in &self.0 {
            num += numer_weights[i - 1] * weights[i - 1];
            den += weights[i - 1];
        }
        num / den
    }
}

impl fmt::Display for Assortment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, i) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{i}")?;
        }
        f.write_str("}")
    }
}

/// Outcome of one customer arrival.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChoiceOutcome {
    NoPurchase,
    Purchase(usize),
}

impl ChoiceOutcome {
    /// The chosen index with `0` standing for no purchase.
    pub fn index(self) -> usize {
        match self {
            ChoiceOutcome::NoPurchase => 0,
            ChoiceOutcome::Purchase(i) => i,
        }
    }

    pub fn is_no_purchase(self) -> bool {
        matches!(self, ChoiceOutcome::NoPurchase)
    }
}

/// MNL environment: attraction parameters and per-item revenues.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceFile", into = "InstanceFile")]
pub struct MnlInstance {
    v: Vec<f64>,
    r: Vec<f64>,
}

/// On-disk JSON layout: `{"n_items": N, "v": [...], "r": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    n_items: usize,
    v: Vec<f64>,
    r: Vec<f64>,
}

impl TryFrom<InstanceFile> for MnlInstance {
    type Error = Error;

    fn try_from(f: InstanceFile) -> Result<Self> {
        if f.v.len() != f.n_items {
            return Err(Error::domain(format!(
                "n_items = {} but v has {} entries",
                f.n_items,
                f.v.len()
            )));
        }
        MnlInstance::new(f.v, f.r)
    }
}

impl From<MnlInstance> for InstanceFile {
    fn from(m: MnlInstance) -> Self {
        InstanceFile {
            n_items: m.v.len(),
            v: m.v,
            r: m.r,
        }
    }
}

impl MnlInstance {
    pub fn new(v: Vec<f64>, r: Vec<f64>) -> Result<Self> {
        if v.is_empty() {
            return Err(Error::domain("instance needs at least one item"));
        }
        if v.len() != r.len() {
            return Err(Error::domain(format!(
                "v has {} entries but r has {}",
                v.len(),
                r.len()
            )));
        }
        if let Some((k, x)) = v
            .iter()
            .enumerate()
            .find(|(_, x)| !(x.is_finite() && **x > 0.0))
        {
            return Err(Error::domain(format!(
                "v_{} = {x} is not a positive real",
                k + 1
            )));
        }
        if let Some((k, x)) = r
            .iter()
            .enumerate()
            .find(|(_, x)| !(x.is_finite() && **x > 0.0))
        {
            return Err(Error::domain(format!(
                "r_{} = {x} is not a positive real",
                k + 1
            )));
        }
        Ok(MnlInstance { v, r })
    }

    /// Draws `v_i ~ U(v_range)` for all items, then `r_i ~ U(r_range)`, in
    /// index order, one uniform draw per parameter.
    pub fn random<R: Rng + ?Sized>(
        n_items: usize,
        v_range: (f64, f64),
        r_range: (f64, f64),
        rng: &mut R,
    ) -> Result<Self> {
        check_range("v_range", v_range)?;
        check_range("r_range", r_range)?;
        if n_items == 0 {
            return Err(Error::domain("n_items must be positive"));
        }
        let draw = |(lo, hi): (f64, f64), rng: &mut R| lo + (hi - lo) * rng.random::<f64>();
        let v: Vec<f64> = (0..n_items).map(|_| draw(v_range, rng)).collect();
        let r: Vec<f64> = (0..n_items).map(|_| draw(r_range, rng)).collect();
        MnlInstance::new(v, r)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn n_items(&self) -> usize {
        self.v.len()
    }

    /// Attraction of item `i`; `i = 0` gives `v0 = 1`.
    pub fn attraction(&self, i: usize) -> f64 {
        if i == 0 {
            NO_PURCHASE_ATTRACTION
        } else {
            self.v[i - 1]
        }
    }

    pub fn revenue(&self, i: usize) -> f64 {
        self.r[i - 1]
    }

    pub fn attractions(&self) -> &[f64] {
        &self.v
    }

    pub fn revenues(&self) -> &[f64] {
        &self.r
    }

    pub fn max_revenue(&self) -> f64 {
        self.r.iter().copied().fold(0.0, f64::max)
    }

    /// Whether `v_i <= v0` for every item (the standard regime).
    pub fn satisfies_standard_bound(&self) -> bool {
        self.satisfies_bound(1.0)
    }

    /// Whether `v_i <= bound * v0` for every item (the relaxed regime).
    pub fn satisfies_bound(&self, bound: f64) -> bool {
        self.v.iter().all(|&x| x <= bound * NO_PURCHASE_ATTRACTION)
    }

    fn check_assortment(&self, s: &Assortment) -> Result<()> {
        match s.items().last() {
            Some(&last) if last > self.n_items() => Err(Error::domain(format!(
                "item {last} outside 1..={}",
                self.n_items()
            ))),
            _ => Ok(()),
        }
    }

    /// `P(c = i | S)`; zero when `i` is neither `0` nor in `s`.
    pub fn choice_prob(&self, s: &Assortment, i: usize) -> Result<f64> {
        self.check_assortment(s)?;
        if i > self.n_items() {
            return Err(Error::domain(format!(
                "item {i} outside 0..={}",
                self.n_items()
            )));
        }
        if i != 0 && !s.contains(i) {
            return Ok(0.0);
        }
        let den = NO_PURCHASE_ATTRACTION + s.iter().map(|j| self.v[j - 1]).sum::<f64>();
        Ok(self.attraction(i) / den)
    }

    pub fn expected_revenue(&self, s: &Assortment) -> Result<f64> {
        self.check_assortment(s)?;
        Ok(s.ratio_score(&self.r, &self.v))
    }

    /// Samples one customer decision using exactly one uniform draw.
    ///
    /// The draw `u ∈ [0, 1)` is scaled by `1 + Σ v_j` and compared against the
    /// cumulative weights, no-purchase first and then items in ascending order.
    pub fn sample_choice<R: Rng + ?Sized>(
        &self,
        s: &Assortment,
        rng: &mut R,
    ) -> Result<ChoiceOutcome> {
        if s.is_empty() {
            return Err(Error::domain(
                "cannot sample a choice from an empty assortment",
            ));
        }
        self.check_assortment(s)?;
        let total = NO_PURCHASE_ATTRACTION + s.iter().map(|j| self.v[j - 1]).sum::<f64>();
        let u = rng.random::<f64>() * total;
        let mut acc = NO_PURCHASE_ATTRACTION;
        if u < acc {
            return Ok(ChoiceOutcome::NoPurchase);
        }
        for j in s.iter() {
            acc += self.v[j - 1];
            if u < acc {
                return Ok(ChoiceOutcome::Purchase(j));
            }
        }
        // u landed on the rounding sliver at the top of the range
        Ok(ChoiceOutcome::Purchase(*s.items().last().unwrap()))
    }

    /// Hex SHA-256 over the little-endian bytes of `v` then `r`.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for x in self.v.iter().chain(&self.r) {
            h.update(x.to_le_bytes());
        }
        hex::encode(&h.finalize()[..8])
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || hi < lo {
        return Err(Error::domain(format!(
            "{name} = [{lo}, {hi}] must have a positive lower bound and hi >= lo"
        )));
    }
    Ok(())
}
