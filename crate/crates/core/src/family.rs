//! The collection of offerable assortments and the optimistic revenue
//! maximization over it.
//!
//! The family is the set of subsets of `1..=N` with at most `K` items
//! (optionally including the empty set), which is downward-closed by
//! construction. Its members are enumerated once, in canonical order
//! (cardinality, then lexicographic), and cached.

use crate::error::{Error, Result};
use crate::mnl::Assortment;

/// Default ceiling on the number of assortments we are willing to enumerate.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

#[derive(Debug, Clone)]
pub struct FeasibleFamily {
    n_items: usize,
    max_size: usize,
    include_empty: bool,
    members: Vec<Assortment>,
}

/// Number of subsets of an `n`-set with between `lo` and `hi` elements.
pub fn count_subsets(n: usize, lo: usize, hi: usize) -> u128 {
    let hi = hi.min(n);
    let mut total: u128 = 0;
    let mut binom: u128 = 1; // C(n, 0)
    for k in 0..=hi {
        if k > 0 {
            binom = binom * (n - k + 1) as u128 / k as u128;
        }
        if k >= lo {
            total = total.saturating_add(binom);
        }
    }
    total
}

impl FeasibleFamily {
    /// Nonempty subsets of `1..=n_items` with at most `max_size` items.
    pub fn new(n_items: usize, max_size: usize) -> Result<Self> {
        Self::with_options(n_items, max_size, false, DEFAULT_ENUMERATION_CAP)
    }

    pub fn with_options(
        n_items: usize,
        max_size: usize,
        include_empty: bool,
        cap: u128,
    ) -> Result<Self> {
        let lo = if include_empty { 0 } else { 1 };
        let count = count_subsets(n_items, lo, max_size);
        if count > cap {
            return Err(Error::Capacity { count, cap });
        }
        let mut members = Vec::with_capacity(count as usize);
        if include_empty {
            members.push(Assortment::empty());
        }
        for k in 1..=max_size.min(n_items) {
            push_combinations(n_items, k, &mut members);
        }
        Ok(FeasibleFamily {
            n_items,
            max_size,
            include_empty,
            members,
        })
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn max_size(&self) -> usize {
        self.max_size
    }

    pub fn include_empty(&self) -> bool {
        self.include_empty
    }

    /// All members in canonical order.
    pub fn enumerate(&self) -> &[Assortment] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, s: &Assortment) -> bool {
        let in_range = s.items().last().is_none_or(|&i| i <= self.n_items);
        in_range && s.len() <= self.max_size && (self.include_empty || !s.is_empty())
    }

    /// Position of `s` in the canonical enumeration.
    pub fn index_of(&self, s: &Assortment) -> Option<usize> {
        if !self.contains(s) {
            return None;
        }
        let offset = if self.include_empty { 0 } else { 1 };
        let start = if s.is_empty() {
            0
        } else {
            (count_subsets(self.n_items, 0, s.len() - 1) as usize - offset).min(self.members.len())
        };
        self.members[start..]
            .iter()
            .position(|m| m == s)
            .map(|p| p + start)
    }

    /// Feasible set maximizing `Σ r_i w_i / (1 + Σ w_i)`.
    ///
    /// Ties go to the smaller set, then to the lexicographically smaller item
    /// sequence, which is the first maximizer in canonical order.
    pub fn argmax_revenue(&self, weights: &[f64], revenues: &[f64]) -> Result<(Assortment, f64)> {
        if weights.len() != self.n_items || revenues.len() != self.n_items {
            return Err(Error::domain(format!(
                "expected {} weights and revenues, got {} and {}",
                self.n_items,
                weights.len(),
                revenues.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
            return Err(Error::domain(format!(
                "weight {w} is not a nonnegative real"
            )));
        }
        let mut best: Option<(usize, f64)> = None;
        for (idx, s) in self.members.iter().enumerate() {
            let score = s.ratio_score(revenues, weights);
            match best {
                Some((_, b)) if score <= b => {}
                _ => best = Some((idx, score)),
            }
        }
        best.map(|(idx, score)| (self.members[idx].clone(), score))
            .ok_or_else(|| Error::domain("feasible family is empty"))
    }

    /// Lexicographically first feasible subset of `candidates` with the
    /// largest feasible size.
    pub fn largest_feasible_subset(&self, candidates: &Assortment) -> Assortment {
        let take = candidates.len().min(self.max_size);
        Assortment::from_sorted_unchecked(candidates.items()[..take].to_vec())
    }
}

/// Appends all `k`-subsets of `1..=n` in lexicographic order.
fn push_combinations(n: usize, k: usize, out: &mut Vec<Assortment>) {
    let mut idx: Vec<usize> = (1..=k).collect();
    loop {
        out.push(Assortment::from_sorted_unchecked(idx.clone()));
        // rightmost position that can still advance
        let Some(pos) = (0..k).rev().find(|&p| idx[p] < n - (k - 1 - p)) else {
            return;
        };
        idx[pos] += 1;
        for q in pos + 1..k {
            idx[q] = idx[q - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(items: &[usize], n: usize) -> Assortment {
        Assortment::new(items.to_vec(), n).unwrap()
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(FeasibleFamily::new(10, 5).unwrap().len(), 637);
        let two = FeasibleFamily::new(2, 2).unwrap();
        assert_eq!(
            two.enumerate(),
            &[set(&[1], 2), set(&[2], 2), set(&[1, 2], 2)]
        );
        let singles = FeasibleFamily::new(3, 1).unwrap();
        assert_eq!(singles.len(), 3);
        assert!(singles.enumerate().iter().all(|s| s.len() == 1));
        assert_eq!(
            FeasibleFamily::with_options(3, 3, true, 100).unwrap().len(),
            8
        );
    }

    #[test]
    fn canonical_order_is_cardinality_then_lex() {
        let f = FeasibleFamily::new(5, 3).unwrap();
        for w in f.enumerate().windows(2) {
            assert!((w[0].len(), w[0].items()) < (w[1].len(), w[1].items()));
        }
        for (k, s) in f.enumerate().iter().enumerate() {
            assert_eq!(f.index_of(s), Some(k));
        }
    }

    #[test]
    fn capacity_error_names_count() {
        match FeasibleFamily::new(40, 20) {
            Err(Error::Capacity { count, cap }) => {
                assert_eq!(cap, DEFAULT_ENUMERATION_CAP);
                assert_eq!(count, count_subsets(40, 1, 20));
            }
            other => panic!("expected capacity error, got {other:?}"),
        }
    }

    #[test]
    fn argmax_examples() {
        let f = FeasibleFamily::new(2, 2).unwrap();
        let (s, score) = f.argmax_revenue(&[1.0, 1.0], &[1.0, 0.5]).unwrap();
        assert_eq!(s, set(&[1], 2));
        assert_eq!(score, 0.5);

        let (s, score) = f.argmax_revenue(&[0.3, 2.0], &[0.0, 0.0]).unwrap();
        assert_eq!(s, set(&[1], 2));
        assert_eq!(score, 0.0);

        let one = FeasibleFamily::new(1, 1).unwrap();
        let (s, score) = one.argmax_revenue(&[0.8], &[1.3]).unwrap();
        assert_eq!(s, set(&[1], 1));
        assert!((score - 1.3 * 0.8 / 1.8).abs() < 1e-15);
    }

    #[test]
    fn argmax_rejects_bad_inputs() {
        let f = FeasibleFamily::new(2, 2).unwrap();
        assert!(f.argmax_revenue(&[1.0], &[1.0, 1.0]).is_err());
        assert!(f.argmax_revenue(&[-1.0, 1.0], &[1.0, 1.0]).is_err());
        let empty = FeasibleFamily::new(3, 0).unwrap();
        assert!(matches!(
            empty.argmax_revenue(&[1.0; 3], &[1.0; 3]),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn membership_and_largest_subset() {
        let f = FeasibleFamily::new(6, 3).unwrap();
        assert!(f.contains(&set(&[1, 4, 6], 6)));
        assert!(!f.contains(&set(&[1, 2, 4, 6], 6)));
        assert!(!f.contains(&Assortment::empty()));
        assert!(!f.contains(&set(&[7], 7)));
        assert_eq!(
            f.largest_feasible_subset(&set(&[2, 3, 5, 6], 6)),
            set(&[2, 3, 5], 6)
        );
        assert_eq!(f.largest_feasible_subset(&set(&[4], 6)), set(&[4], 6));
    }

    proptest! {
        #[test]
        fn membership_agrees_with_enumeration(n in 1usize..7, k in 0usize..7, mask in 0u32..128) {
            let f = FeasibleFamily::new(n, k).unwrap();
            let items: Vec<usize> = (1..=n).filter(|i| mask & (1 << (i - 1)) != 0).collect();
            let s = Assortment::new(items, n).unwrap();
            prop_assert_eq!(f.contains(&s), f.enumerate().contains(&s));
        }

        #[test]
        fn downward_closed(n in 1usize..7, k in 1usize..7, pick in 0usize..1000, drop in 0usize..7) {
            let f = FeasibleFamily::new(n, k).unwrap();
            let s = &f.enumerate()[pick % f.len()];
            if s.len() > 1 {
                let mut items = s.items().to_vec();
                items.remove(drop % items.len());
                prop_assert!(f.contains(&Assortment::new(items, n).unwrap()));
            }
        }

        #[test]
        fn returned_score_is_attained_and_stable(
            w in prop::collection::vec(0.0f64..3.0, 5),
            r in prop::collection::vec(0.0f64..2.0, 5),
        ) {
            let f = FeasibleFamily::new(5, 3).unwrap();
            let (s, score) = f.argmax_revenue(&w, &r).unwrap();
            let num: f64 = s.iter().map(|i| r[i - 1] * w[i - 1]).sum();
            let den: f64 = 1.0 + s.iter().map(|i| w[i - 1]).sum::<f64>();
            prop_assert!((num / den - score).abs() < 1e-12);
            prop_assert_eq!(f.argmax_revenue(&w, &r).unwrap().0, s);
        }
    }
}
