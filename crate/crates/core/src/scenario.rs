//! Scenario configuration: a flat TOML table mirroring [`Scenario`].
//!
//! ```toml
//! k = 100
//! rho = 0.95
//! channels = 4
//! mode = "aloha"
//! p = 0.2
//! stop_known = 75
//! runs = 100
//! seed = 1
//! ```
//!
//! Model numbers in the config (`model`, `true_model`, ...) are one-based.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::access::{uploading_probability, AccessMode};
use crate::engine::SelectionRule;
use crate::error::{Error, Result};
use crate::gaussian::{build_ar1_model, build_model_family, GaussianModel, FAMILY_SIZE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Polling,
    Aloha,
    /// Model selection over the candidate family; access is ALOHA.
    Bandit,
}

impl Mode {
    pub fn access(self) -> AccessMode {
        match self {
            Mode::Polling => AccessMode::Polling,
            Mode::Aloha | Mode::Bandit => AccessMode::Aloha,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Polling => "polling",
            Mode::Aloha => "aloha",
            Mode::Bandit => "bandit",
        })
    }
}

/// How many nodes are requested per round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum QPolicy {
    /// `N` for polling, `round(N/p)` for ALOHA; capped by the unknown count.
    #[default]
    Optimal,
    /// A fixed request size (still capped by `N` when polling).
    Fixed(usize),
}

impl TryFrom<String> for QPolicy {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        let s = s.trim();
        if s == "optimal" {
            return Ok(QPolicy::Optimal);
        }
        match s.strip_prefix("fixed:").map(|q| q.trim().parse::<usize>()) {
            Some(Ok(q)) if q > 0 => Ok(QPolicy::Fixed(q)),
            _ => Err(format!(
                "q_policy must be \"optimal\" or \"fixed:<q>\" with q > 0, got {s:?}"
            )),
        }
    }
}

impl From<QPolicy> for String {
    fn from(q: QPolicy) -> String {
        match q {
            QPolicy::Optimal => "optimal".into(),
            QPolicy::Fixed(q) => format!("fixed:{q}"),
        }
    }
}

/// Which nodes are requested in the very first round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FirstRound {
    /// Uniformly random nodes.
    #[default]
    Random,
    /// The same greedy selection as every later round.
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    /// Number of sensor nodes.
    pub k: usize,
    /// Correlation of the AR(1) model.
    pub rho: f64,
    /// Parallel channels.
    pub channels: usize,
    pub mode: Mode,
    /// Uploading probability, shared by all nodes.
    pub p: Option<f64>,
    /// Fading parameterization of the uploading probability; all three or none.
    pub threshold_snr: Option<f64>,
    pub avg_snr: Option<f64>,
    pub availability: Option<f64>,
    pub q_policy: QPolicy,
    pub selection: SelectionRule,
    pub first_round: FirstRound,
    /// Stop once this many measurements are in; defaults to `k`.
    pub stop_known: Option<usize>,
    pub max_rounds: usize,
    pub runs: usize,
    pub seed: u64,
    /// Model that generates the data (and, unless `assumed_model` is set,
    /// drives selection) in polling/ALOHA mode. 1 is the AR(1) model.
    pub model: usize,
    /// Model the base station believes in, when it differs from `model`.
    pub assumed_model: Option<usize>,
    /// Bandit arms: the first `models` members of the family.
    pub models: usize,
    pub true_model: usize,
    /// Wrong model used by the mismatched-model baseline.
    pub mismatch_model: usize,
    pub tau: f64,
    /// DCT columns per candidate covariance.
    pub dct_j: usize,
    pub noise: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            k: 100,
            rho: 0.95,
            channels: 4,
            mode: Mode::Aloha,
            p: None,
            threshold_snr: None,
            avg_snr: None,
            availability: None,
            q_policy: QPolicy::Optimal,
            selection: SelectionRule::Greedy,
            first_round: FirstRound::Random,
            stop_known: None,
            max_rounds: 120,
            runs: 100,
            seed: 1,
            model: 1,
            assumed_model: None,
            models: FAMILY_SIZE,
            true_model: 1,
            mismatch_model: 2,
            tau: 1.0,
            dct_j: 3,
            noise: 0.1,
        }
    }
}

/// Uploading probability used when the config gives none.
pub const DEFAULT_P: f64 = 0.2;

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// The shared uploading probability.
    pub fn upload_p(&self) -> f64 {
        match (self.threshold_snr, self.avg_snr, self.availability) {
            (Some(g), Some(gk), Some(w)) => uploading_probability(g, gk, w),
            _ => self.p.unwrap_or(DEFAULT_P),
        }
    }

    pub fn kbar(&self) -> usize {
        self.stop_known.unwrap_or(self.k)
    }

    /// Request size for a round with `remaining` unknown nodes.
    pub fn request_size(&self, remaining: usize) -> usize {
        let q = match (self.mode.access(), self.q_policy) {
            (AccessMode::Polling, QPolicy::Optimal) => self.channels,
            (AccessMode::Polling, QPolicy::Fixed(q)) => q.min(self.channels),
            (AccessMode::Aloha, QPolicy::Optimal) => {
                crate::access::optimal_q(self.channels, self.upload_p(), remaining)
            }
            (AccessMode::Aloha, QPolicy::Fixed(q)) => q,
        };
        q.min(remaining)
    }

    fn needs_family(&self) -> bool {
        self.mode == Mode::Bandit || self.model != 1 || self.assumed_model.is_some_and(|m| m != 1)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.k == 0 || self.channels == 0 || self.runs == 0 || self.max_rounds == 0 {
            return fail("k, channels, runs and max_rounds must be positive".into());
        }
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return fail(format!("rho must lie in (-1, 1), got {}", self.rho));
        }
        let fading = [self.threshold_snr, self.avg_snr, self.availability];
        let given = fading.iter().filter(|v| v.is_some()).count();
        if given != 0 && given != 3 {
            return fail("threshold_snr, avg_snr and availability go together".into());
        }
        if given == 3 {
            if self.p.is_some() {
                return fail("give either p or the fading parameters, not both".into());
            }
            let (g, gk, w) = (fading[0].unwrap(), fading[1].unwrap(), fading[2].unwrap());
            if !(g >= 0.0 && gk > 0.0 && (0.0..=1.0).contains(&w)) {
                return fail("need threshold_snr >= 0, avg_snr > 0, availability in [0, 1]".into());
            }
        }
        let p = self.upload_p();
        if !(p > 0.0 && p <= 1.0) {
            return fail(format!("uploading probability must lie in (0, 1], got {p}"));
        }
        if self.kbar() > self.k {
            return fail(format!("stop_known {} exceeds k = {}", self.kbar(), self.k));
        }
        if !(self.tau > 0.0) {
            return fail(format!("tau must be positive, got {}", self.tau));
        }
        if self.dct_j == 0 || !(self.noise > 0.0) {
            return fail("dct_j and noise must be positive".into());
        }
        if !(2..=FAMILY_SIZE).contains(&self.models) && self.mode == Mode::Bandit {
            return fail(format!(
                "bandit needs 2..={FAMILY_SIZE} models, got {}",
                self.models
            ));
        }
        let family_ok = |m: usize| (1..=FAMILY_SIZE).contains(&m);
        if !family_ok(self.model)
            || !self.assumed_model.is_none_or(family_ok)
            || !family_ok(self.mismatch_model)
        {
            return fail(format!("model numbers must lie in 1..={FAMILY_SIZE}"));
        }
        if self.mode == Mode::Bandit && !(1..=self.models).contains(&self.true_model) {
            return fail(format!("true_model must lie in 1..={}", self.models));
        }
        if self.needs_family() && self.k < self.dct_j + FAMILY_SIZE - 1 {
            return fail(format!(
                "k = {} is too small for the model family with dct_j = {}",
                self.k, self.dct_j
            ));
        }
        Ok(())
    }

    /// Candidate models; the first is the AR(1) model with this scenario's `rho`.
    pub fn family(&self) -> Result<Vec<GaussianModel>> {
        if self.k < self.dct_j + FAMILY_SIZE - 1 {
            return Ok(vec![build_ar1_model(self.k, self.rho)?]);
        }
        let mut family = build_model_family(self.k, self.dct_j, self.noise)?;
        family[0] = build_ar1_model(self.k, self.rho)?;
        Ok(family)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_config() {
        let s = Scenario::from_toml_str(
            r#"
            k = 50
            mode = "polling"
            p = 0.3
            q_policy = "fixed:3"
            selection = "topq"
            first_round = "greedy"
            stop_known = 40
            runs = 7
            seed = 99
            "#,
        )
        .unwrap();
        assert_eq!(s.k, 50);
        assert_eq!(s.mode, Mode::Polling);
        assert_eq!(s.q_policy, QPolicy::Fixed(3));
        assert_eq!(s.selection, SelectionRule::TopQ);
        assert_eq!(s.first_round, FirstRound::Greedy);
        assert_eq!(s.kbar(), 40);
        assert_eq!(s.channels, 4);
        let again = Scenario::from_toml_str(&s.to_toml_string()).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "k = 0",
            "rho = 1.0",
            "p = 0.0",
            "p = 1.5",
            "stop_known = 101",
            "tau = 0.0",
            "bogus = 3",
            "q_policy = \"fixed:0\"",
            "q_policy = \"sometimes\"",
            "threshold_snr = 1.0",
            "p = 0.2\nthreshold_snr = 1.0\navg_snr = 1.0\navailability = 1.0",
            "mode = \"bandit\"\nmodels = 1",
            "mode = \"bandit\"\ntrue_model = 6",
            "k = 5\nmode = \"bandit\"",
        ] {
            assert!(Scenario::from_toml_str(text).is_err(), "{text}");
        }
    }

    #[test]
    fn fading_parameters_set_p() {
        let s = Scenario::from_toml_str("threshold_snr = 2.0\navg_snr = 2.0\navailability = 0.5")
            .unwrap();
        assert!((s.upload_p() - 0.5 * (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(Scenario::default().upload_p(), DEFAULT_P);
    }

    #[test]
    fn request_sizes() {
        let mut s = Scenario::default();
        assert_eq!(s.request_size(100), 20);
        assert_eq!(s.request_size(3), 3);
        s.mode = Mode::Polling;
        assert_eq!(s.request_size(100), 4);
        assert_eq!(s.request_size(2), 2);
        s.q_policy = QPolicy::Fixed(9);
        assert_eq!(s.request_size(100), 4);
        s.mode = Mode::Aloha;
        assert_eq!(s.request_size(100), 9);
    }
}
