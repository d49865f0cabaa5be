//! Softmax model selection.
//!
//! Each candidate model is an arm. Pulling arm `m` means selecting nodes
//! under model `m`; its cost is the squared prediction error of whatever
//! gets delivered, normalized by the error model `m` itself expects. The
//! correct model scores 1 on average and wrong models score more.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::error::{Error, Result};
use crate::gaussian::{condition, ConditionalState, GaussianModel};

/// Denominators below this make the normalized cost meaningless.
pub const MIN_EXPECTED_ERROR: f64 = 1e-12;

/// Prediction error of one round's deliveries under one model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundCost {
    /// Normalized cost `sq_error / expected`.
    pub y: f64,
    /// `||x_D - E_m[x_D | z]||^2`.
    pub sq_error: f64,
    /// `E_m ||x_D - E_m[x_D | z]||^2 = Tr(Cov_m(x_D | z))`.
    pub expected: f64,
}

/// Scores deliveries against the predictions of an already-conditioned state.
pub fn round_cost_from_state(
    cond: &ConditionalState,
    delivered: &[(usize, f64)],
) -> Result<RoundCost> {
    if delivered.is_empty() {
        return Err(Error::NoObservation);
    }
    let mut sq_error = 0.0;
    let mut expected = 0.0;
    for &(node, value) in delivered {
        let l = cond.local_index(node).ok_or_else(|| Error::InvalidIndex {
            index: node,
            reason: "delivered node is already known".into(),
        })?;
        sq_error += (value - cond.cond_mean()[l]).powi(2);
        expected += cond.cond_cov()[(l, l)];
    }
    if expected < MIN_EXPECTED_ERROR {
        return Err(Error::DegenerateModel(expected));
    }
    Ok(RoundCost {
        y: sq_error / expected,
        sq_error,
        expected,
    })
}

/// Normalized prediction cost of a round under `model`, given the data
/// `known_idx`/`known_vals` held before the round.
pub fn round_cost(
    model: &GaussianModel,
    known_idx: &[usize],
    known_vals: &[f64],
    delivered_idx: &[usize],
    delivered_vals: &[f64],
) -> Result<f64> {
    if delivered_idx.len() != delivered_vals.len() {
        return Err(Error::Dimension("one value per delivered node".into()));
    }
    let cond = condition(model, known_idx, known_vals)?;
    let delivered: Vec<(usize, f64)> = delivered_idx
        .iter()
        .copied()
        .zip(delivered_vals.iter().copied())
        .collect();
    round_cost_from_state(&cond, &delivered).map(|c| c.y)
}

/// Running cost sample means and softmax temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditState {
    cost_sum: Vec<f64>,
    count: Vec<u64>,
    tau: f64,
    history: Vec<usize>,
}

impl BanditState {
    pub fn new(models: usize, tau: f64) -> Result<Self> {
        if models == 0 {
            return Err(Error::Config("at least one model is required".into()));
        }
        if !(tau > 0.0) {
            return Err(Error::Config(format!(
                "temperature must be positive, got {tau}"
            )));
        }
        Ok(Self {
            cost_sum: vec![0.0; models],
            count: vec![0; models],
            tau,
            history: Vec::new(),
        })
    }

    pub fn models(&self) -> usize {
        self.count.len()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn count(&self, m: usize) -> u64 {
        self.count[m]
    }

    /// Models chosen so far, one per round.
    pub fn history(&self) -> &[usize] {
        &self.history
    }

    /// Sample mean of arm `m`'s costs, if it has any.
    pub fn psi(&self, m: usize) -> Option<f64> {
        (self.count[m] > 0).then(|| self.cost_sum[m] / self.count[m] as f64)
    }

    pub fn all_explored(&self) -> bool {
        self.count.iter().all(|&c| c > 0)
    }

    /// `P_m ∝ exp(-psi_m / tau)`, evaluated with a max shift.
    pub fn softmax_probs(&self) -> Result<Vec<f64>> {
        let psi = (0..self.models())
            .map(|m| self.psi(m))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| Error::Contract("softmax needs a cost sample for every model".into()))?;
        Ok(softmax(&psi, self.tau))
    }

    /// Selection distribution in force at round `t`: one-hot while forced
    /// exploration lasts, softmax afterwards.
    pub fn selection_probs(&self, t: usize) -> Vec<f64> {
        match self.forced_arm(t) {
            Some(m) => {
                let mut p = vec![0.0; self.models()];
                p[m] = 1.0;
                p
            }
            None => self.softmax_probs().expect("all arms explored"),
        }
    }

    /// Round-robin for the first `M` rounds; after that, any arm still
    /// without a cost sample (its rounds delivered nothing) is retried,
    /// lowest index first.
    fn forced_arm(&self, t: usize) -> Option<usize> {
        if t < self.models() {
            return Some(t);
        }
        self.count.iter().position(|&c| c == 0)
    }

    /// Model to use in round `t`.
    pub fn select_model<R: Rng + ?Sized>(&self, t: usize, rng: &mut R) -> usize {
        if let Some(m) = self.forced_arm(t) {
            return m;
        }
        let probs = self.softmax_probs().expect("all arms explored");
        WeightedIndex::new(&probs)
            .expect("softmax weights are positive")
            .sample(rng)
    }

    pub fn record_selection(&mut self, m: usize) {
        self.history.push(m);
    }

    /// Adds one cost sample to arm `m`.
    pub fn update(&mut self, m: usize, cost: f64) -> Result<()> {
        if m >= self.models() {
            return Err(Error::InvalidIndex {
                index: m,
                reason: format!("only {} models", self.models()),
            });
        }
        if !(cost >= 0.0) {
            return Err(Error::Contract(format!(
                "cost must be non-negative, got {cost}"
            )));
        }
        self.cost_sum[m] += cost;
        self.count[m] += 1;
        Ok(())
    }
}

/// Boltzmann weights `exp(-cost / tau)`, normalized.
pub fn softmax(costs: &[f64], tau: f64) -> Vec<f64> {
    let best = costs.iter().copied().fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = costs.iter().map(|c| (-(c - best) / tau).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|v| v / total).collect()
}
