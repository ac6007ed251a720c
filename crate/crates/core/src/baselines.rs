//! Comparison policies.
//!
//! * [`MnlBanditEe`]: the epoch-based UCB policy that always offers the
//!   optimistic assortment. It shares the UCB machinery of
//!   [`crate::policy`] verbatim and estimates attractions by the sample
//!   means `v̄_i`.
//! * [`Exp3Eg`]: EXP3 with a forced-exploration mixture, treating every
//!   feasible assortment as an atomic arm and playing one arm per time step.
//!   It ignores the MNL structure entirely.
//!
//! The EXP3EG schedules are the usual anytime choices:
//!
//! ```text
//! γ_t = min(1, δ · t^(−α_exp) · |S|)
//! η_t = sqrt(ln|S| / (|S| · t))
//! p_t = (1 − γ_t) · softmax(log w) + γ_t / |S|
//! x̂   = reward / (reward_scale · p_t(arm)),   log w_arm += η_t · x̂
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::epoch::EpochRecord;
use crate::error::{Error, Result};
use crate::family::FeasibleFamily;
use crate::mnl::Assortment;
use crate::policy::{PolicyConfig, PolicyState};

/// The optimistic set under the state's UCB indices.
pub fn ee_select(
    state: &PolicyState,
    family: &FeasibleFamily,
    revenues: &[f64],
) -> Result<Assortment> {
    state.optimistic_set(family, revenues)
}

/// Epoch-based UCB without complement sampling.
#[derive(Debug, Clone)]
pub struct MnlBanditEe {
    config: PolicyConfig,
    state: PolicyState,
}

impl MnlBanditEe {
    pub fn new(n_items: usize) -> Self {
        let config = PolicyConfig::standard(0.0)
            .expect("alpha 0 is valid")
            .without_complement_sampling();
        MnlBanditEe {
            config,
            state: PolicyState::new(n_items),
        }
    }

    pub fn state(&self) -> &PolicyState {
        &self.state
    }

    /// Offered set and its (degenerate) inclusion probabilities.
    pub fn select(
        &mut self,
        family: &FeasibleFamily,
        revenues: &[f64],
    ) -> Result<(Assortment, Vec<f64>)> {
        let star = ee_select(&self.state, family, revenues)?;
        let probs = (1..=self.state.n_items())
            .map(|i| if star.contains(i) { 1.0 } else { 0.0 })
            .collect();
        Ok((star, probs))
    }

    pub fn observe(&mut self, record: &EpochRecord) -> Result<()> {
        self.state.observe_epoch(&self.config, record)
    }

    /// Sample-mean estimates `v̄_i` (zero for items never offered).
    pub fn estimate(&self) -> Vec<f64> {
        self.state.v_bar().to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Exp3EgParams {
    /// Exploration rate δ.
    pub delta: f64,
    /// Decay exponent of the exploration rate.
    pub decay: f64,
}

impl Default for Exp3EgParams {
    fn default() -> Self {
        Exp3EgParams {
            delta: 0.05,
            decay: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Exp3Eg {
    params: Exp3EgParams,
    log_weights: Vec<f64>,
    reward_scale: f64,
    step: u64,
    probs: Vec<f64>,
    reward_sums: Vec<f64>,
    pulls: Vec<u64>,
}

impl Exp3Eg {
    pub fn new(n_arms: usize, params: Exp3EgParams, reward_scale: f64) -> Result<Self> {
        if n_arms == 0 {
            return Err(Error::domain("EXP3EG needs at least one arm"));
        }
        if !(reward_scale > 0.0 && reward_scale.is_finite()) {
            return Err(Error::domain(format!(
                "reward scale {reward_scale} must be positive"
            )));
        }
        if !(params.delta >= 0.0 && params.decay >= 0.0) {
            return Err(Error::config(format!(
                "invalid EXP3EG parameters {params:?}"
            )));
        }
        let mut s = Exp3Eg {
            params,
            log_weights: vec![0.0; n_arms],
            reward_scale,
            step: 1,
            probs: Vec::new(),
            reward_sums: vec![0.0; n_arms],
            pulls: vec![0; n_arms],
        };
        s.probs = s.compute_probabilities();
        Ok(s)
    }

    pub fn n_arms(&self) -> usize {
        self.log_weights.len()
    }

    /// Current time step `t` (1-based).
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn gamma(&self) -> f64 {
        let n = self.n_arms() as f64;
        (self.params.delta * (self.step as f64).powf(-self.params.decay) * n).clamp(0.0, 1.0)
    }

    pub fn eta(&self) -> f64 {
        let n = self.n_arms() as f64;
        (n.ln() / (n * self.step as f64)).sqrt()
    }

    /// Weights normalized so the largest is one.
    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    /// Sampling distribution for the current step.
    pub fn probabilities(&self) -> &[f64] {
        &self.probs
    }

    fn compute_probabilities(&self) -> Vec<f64> {
        let n = self.n_arms() as f64;
        let gamma = self.gamma();
        let w = self.weights();
        let total: f64 = w.iter().sum();
        w.iter()
            .map(|x| (1.0 - gamma) * x / total + gamma / n)
            .collect()
    }

    /// Samples an arm with one uniform draw; returns its index and probability.
    pub fn select<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (usize, f64) {
        let total: f64 = self.probs.iter().sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        for (k, p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return (k, *p);
            }
        }
        let last = self.n_arms() - 1;
        (last, self.probs[last])
    }

    /// Importance-weighted reward estimate for the played arm.
    pub fn reward_estimate_ipw(&self, arm: usize, reward: f64) -> f64 {
        reward / (self.reward_scale * self.probs[arm])
    }

    /// Applies the reward observed for `arm` at the current step and advances `t`.
    pub fn update(&mut self, arm: usize, reward: f64) -> Result<()> {
        if arm >= self.n_arms() {
            return Err(Error::domain(format!("arm {arm} out of range")));
        }
        let x_hat = self.reward_estimate_ipw(arm, reward);
        self.log_weights[arm] += self.eta() * x_hat;
        // renormalize so the largest weight is exp(0)
        let max = self
            .log_weights
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        if max != 0.0 {
            self.log_weights.iter_mut().for_each(|w| *w -= max);
        }
        self.reward_sums[arm] += reward;
        self.pulls[arm] += 1;
        self.step += 1;
        self.probs = self.compute_probabilities();
        Ok(())
    }

    /// Empirical mean realized reward of each arm (zero if never played).
    pub fn mean_rewards(&self) -> Vec<f64> {
        self.reward_sums
            .iter()
            .zip(&self.pulls)
            .map(|(s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mnl::MnlInstance;
    use crate::stats::RunningStats;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ee_picks_best_at_initial_weights() {
        let family = FeasibleFamily::new(4, 2).unwrap();
        let revenues = [0.3, 1.2, 0.9, 0.5];
        let ee = MnlBanditEe::new(4);
        let (s, probs) = {
            let mut ee = ee.clone();
            ee.select(&family, &revenues).unwrap()
        };
        // brute force Σr/(1+|S|) with unit weights
        let best = family
            .enumerate()
            .iter()
            .max_by(|a, b| {
                let f = |s: &Assortment| {
                    s.iter().map(|i| revenues[i - 1]).sum::<f64>() / (1.0 + s.len() as f64)
                };
                f(a).partial_cmp(&f(b)).unwrap().then(b.cmp(a))
            })
            .unwrap();
        assert_eq!(&s, best);
        assert_eq!(s.items(), &[2, 3]);
        assert_eq!(probs, vec![0.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn forced_exploration_limit_is_uniform() {
        let e = Exp3Eg::new(637, Exp3EgParams::default(), 1.5).unwrap();
        assert_eq!(e.gamma(), 1.0);
        for p in e.probabilities() {
            assert!((p - 1.0 / 637.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_reward_keeps_weights_uniform() {
        let mut e = Exp3Eg::new(
            5,
            Exp3EgParams {
                delta: 0.01,
                decay: 0.5,
            },
            1.0,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let (arm, _) = e.select(&mut rng);
            e.update(arm, 0.0).unwrap();
        }
        assert!(e.weights().iter().all(|&w| w == 1.0));
        assert_eq!(e.step(), 1001);
    }

    #[test]
    fn probabilities_sum_to_one_under_learning() {
        let mut e = Exp3Eg::new(
            7,
            Exp3EgParams {
                delta: 0.01,
                decay: 0.5,
            },
            1.0,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5000 {
            let total: f64 = e.probabilities().iter().sum();
            assert!((total - 1.0).abs() < 1e-12);
            let (arm, _) = e.select(&mut rng);
            let reward = if arm == 3 { 1.0 } else { 0.1 };
            e.update(arm, reward).unwrap();
        }
        let p = e.probabilities();
        assert!(p[3] > 0.5, "best arm should dominate: {p:?}");
        assert!(e.weights().iter().all(|w| w.is_finite() && *w > 0.0));
    }

    #[test]
    fn ipw_reward_estimate_is_unbiased() {
        // fixed distribution, Bernoulli-free expected reward per arm
        let family = FeasibleFamily::new(3, 2).unwrap();
        let m = MnlInstance::new(vec![0.5, 0.8, 0.3], vec![1.0, 0.7, 1.4]).unwrap();
        let mut e = Exp3Eg::new(
            family.len(),
            Exp3EgParams {
                delta: 0.01,
                decay: 0.5,
            },
            1.4,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        // move off the uniform distribution a bit first
        for _ in 0..200 {
            let (arm, _) = e.select(&mut rng);
            let s = &family.enumerate()[arm];
            let c = m.sample_choice(s, &mut rng).unwrap();
            let r = if c.index() == 0 {
                0.0
            } else {
                m.revenue(c.index())
            };
            e.update(arm, r).unwrap();
        }
        let frozen = e.clone();
        let target = 2usize;
        let mut est = RunningStats::new();
        for _ in 0..200_000 {
            let mut probe = frozen.clone();
            let (arm, _) = probe.select(&mut rng);
            let x = if arm == target {
                let s = &family.enumerate()[arm];
                let c = m.sample_choice(s, &mut rng).unwrap();
                let r = if c.index() == 0 {
                    0.0
                } else {
                    m.revenue(c.index())
                };
                frozen.reward_estimate_ipw(arm, r)
            } else {
                0.0
            };
            est.push(x);
        }
        let expected = m.expected_revenue(&family.enumerate()[target]).unwrap() / 1.4;
        assert!(
            (est.mean() - expected).abs() < 3.0 * est.std_error(),
            "{} vs {}",
            est.mean(),
            expected
        );
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(Exp3Eg::new(0, Exp3EgParams::default(), 1.0).is_err());
        assert!(Exp3Eg::new(3, Exp3EgParams::default(), 0.0).is_err());
        let mut e = Exp3Eg::new(3, Exp3EgParams::default(), 1.0).unwrap();
        assert!(e.update(3, 1.0).is_err());
    }
}
