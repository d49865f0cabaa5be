//! Channel access: uploading probability under Rayleigh fading, sequential
//! polling over dedicated channels, multichannel slotted ALOHA, and the
//! closed-form throughput and round-count expressions.

use std::f64::consts::E;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AccessMode {
    /// Up to `N` requested nodes, each on its own channel.
    Polling,
    /// Requested nodes pick one of `N` channels at random; collisions lose.
    Aloha,
}

/// Per-node uploading probabilities, given directly or from fading
/// parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum UploadSpec {
    Direct(Vec<f64>),
    Fading {
        /// SNR threshold for decoding.
        threshold: f64,
        /// Average receive SNR of each node.
        avg_snr: Vec<f64>,
        /// Probability each node has a measurement ready.
        availability: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub channels: usize,
    pub mode: AccessMode,
    pub upload: UploadSpec,
}

impl ChannelConfig {
    /// Same uploading probability `p` for all `k` nodes.
    pub fn uniform(mode: AccessMode, channels: usize, p: f64, k: usize) -> Result<Self> {
        let cfg = Self {
            channels,
            mode,
            upload: UploadSpec::Direct(vec![p; k]),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::Config("at least one channel is required".into()));
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        match &self.upload {
            UploadSpec::Direct(p) => {
                if let Some(bad) = p.iter().find(|v| !unit(**v)) {
                    return Err(Error::Config(format!(
                        "uploading probability {bad} outside [0, 1]"
                    )));
                }
            }
            UploadSpec::Fading {
                threshold,
                avg_snr,
                availability,
            } => {
                if !(*threshold > 0.0) || avg_snr.iter().any(|g| !(*g > 0.0)) {
                    return Err(Error::Config("SNR parameters must be positive".into()));
                }
                if avg_snr.len() != availability.len() {
                    return Err(Error::Config("one SNR and availability per node".into()));
                }
                if availability.iter().any(|w| !unit(*w)) {
                    return Err(Error::Config("availability outside [0, 1]".into()));
                }
            }
        }
        Ok(())
    }

    /// Uploading probability of every node.
    pub fn node_probs(&self) -> Vec<f64> {
        match &self.upload {
            UploadSpec::Direct(p) => p.clone(),
            UploadSpec::Fading {
                threshold,
                avg_snr,
                availability,
            } => avg_snr
                .iter()
                .zip(availability)
                .map(|(&g, &w)| uploading_probability(*threshold, g, w))
                .collect(),
        }
    }
}

/// Probability that a requested node has a measurement (`availability`)
/// and its Rayleigh-faded SNR clears `threshold`: `exp(-threshold / avg_snr) * availability`.
pub fn uploading_probability(threshold: f64, avg_snr: f64, availability: f64) -> f64 {
    (-threshold / avg_snr).exp() * availability
}

/// One explicit draw of the upload event: availability coin, then a
/// unit-power circularly symmetric complex Gaussian channel gain.
pub fn fading_upload_event<R: Rng + ?Sized>(
    threshold: f64,
    avg_snr: f64,
    availability: f64,
    rng: &mut R,
) -> bool {
    if !rng.random_bool(availability.clamp(0.0, 1.0)) {
        return false;
    }
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    let gain = 0.5 * (re * re + im * im);
    avg_snr * gain >= threshold
}

/// What happened to one round's requests.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RoundOutcome {
    pub requested: Vec<usize>,
    /// Requested nodes that had a measurement and survived fading.
    pub responders: Vec<usize>,
    /// `(node, channel)` for each responder; ALOHA only.
    pub channel_choice: Vec<(usize, usize)>,
    pub delivered: Vec<usize>,
    /// Channels that carried two or more responders.
    pub collisions: Vec<usize>,
}

fn draw_responders<R: Rng + ?Sized>(
    requested: &[usize],
    probs: &[f64],
    rng: &mut R,
) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(requested.len());
    for &node in requested {
        let p = *probs.get(node).ok_or_else(|| Error::InvalidIndex {
            index: node,
            reason: format!("no uploading probability for {} nodes", probs.len()),
        })?;
        if rng.random_bool(p.clamp(0.0, 1.0)) {
            out.push(node);
        }
    }
    Ok(out)
}

/// Polling round: at most `channels` requests, one per dedicated channel.
pub fn polling_round<R: Rng + ?Sized>(
    requested: &[usize],
    channels: usize,
    probs: &[f64],
    rng: &mut R,
) -> Result<RoundOutcome> {
    if requested.len() > channels {
        return Err(Error::Contract(format!(
            "{} polling requests exceed {channels} channels",
            requested.len()
        )));
    }
    let responders = draw_responders(requested, probs, rng)?;
    Ok(RoundOutcome {
        requested: requested.to_vec(),
        delivered: responders.clone(),
        responders,
        ..Default::default()
    })
}

/// Multichannel slotted ALOHA round: every responder picks a channel
/// uniformly; only sole occupants are decoded.
pub fn aloha_round<R: Rng + ?Sized>(
    requested: &[usize],
    channels: usize,
    probs: &[f64],
    rng: &mut R,
) -> Result<RoundOutcome> {
    if channels == 0 {
        return Err(Error::Config("at least one channel is required".into()));
    }
    let responders = draw_responders(requested, probs, rng)?;
    let channel_choice: Vec<(usize, usize)> = responders
        .iter()
        .map(|&node| (node, rng.random_range(0..channels)))
        .collect();
    let mut load = vec![0usize; channels];
    for &(_, ch) in &channel_choice {
        load[ch] += 1;
    }
    let delivered = channel_choice
        .iter()
        .filter(|(_, ch)| load[*ch] == 1)
        .map(|(node, _)| *node)
        .collect();
    let collisions = (0..channels).filter(|&ch| load[ch] >= 2).collect();
    Ok(RoundOutcome {
        requested: requested.to_vec(),
        responders,
        channel_choice,
        delivered,
        collisions,
    })
}

/// Expected number of delivered measurements per round.
pub fn expected_successes(mode: AccessMode, channels: usize, p: f64, q: usize) -> f64 {
    let n = channels as f64;
    match mode {
        AccessMode::Polling => q.min(channels) as f64 * p,
        AccessMode::Aloha => {
            if q == 0 {
                return 0.0;
            }
            q as f64 * p * (1.0 - p / n).powi(q as i32 - 1)
        }
    }
}

/// Throughput-maximizing ALOHA request size `round(N / p)`, capped by the
/// number of unknown nodes and at least one.
pub fn optimal_q(channels: usize, p: f64, remaining: usize) -> usize {
    let q = (channels as f64 / p).round();
    let q = if q.is_finite() && q < usize::MAX as f64 {
        q as usize
    } else {
        usize::MAX
    };
    q.min(remaining).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoundsBound {
    /// `K / (N p)`.
    Polling,
    /// `K / (Q p (1 - p/N)^(Q-1))` for the given `Q`.
    AlohaExact { q: usize },
    /// `K / (N / e)`, the large-`N` limit at `Q = N/p`.
    AlohaApprox,
}

/// Lower bound on the mean number of rounds needed to collect `kbar`
/// measurements.
pub fn mean_rounds_bound(bound: RoundsBound, kbar: f64, channels: usize, p: f64) -> f64 {
    if kbar == 0.0 {
        return 0.0;
    }
    let n = channels as f64;
    match bound {
        RoundsBound::Polling => kbar / (n * p),
        RoundsBound::AlohaExact { q } => {
            kbar / expected_successes(AccessMode::Aloha, channels, p, q)
        }
        RoundsBound::AlohaApprox => kbar / (n / E),
    }
}

/// True iff optimized ALOHA out-delivers polling, i.e. `p < 1/e`.
pub fn crossover_check(p: f64) -> bool {
    p < (-1.0f64).exp()
}
