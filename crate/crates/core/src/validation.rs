//! Self-checks that reproduce the headline simulation results and compare
//! them against fixed tolerances. Used by the CLI `validate` command and
//! by the `--check` flag of the figure commands.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::access::{aloha_round, expected_successes, AccessMode};
use crate::engine::polling_order;
use crate::error::Result;
use crate::experiments::{
    run_bandit_scenario, run_scenario, sweep, BanditReport, ScenarioReport, SweepParam, SweepRow,
};
use crate::gaussian::build_ar1_model;
use crate::scenario::{FirstRound, Mode, Scenario};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

/// Relative tolerance on the polling stop round around `K / (N p)`.
pub const POLLING_ROUNDS_TOL: f64 = 0.05;
/// Accepted band for the mean ALOHA stop round at K=100, p=0.2, N=4, K̄=75.
pub const ALOHA_ROUNDS_RANGE: (f64, f64) = (49.7, 56.0);
pub const THROUGHPUT_TOL: f64 = 0.03;
pub const TAU20_FREQ_TOL: f64 = 0.07;

/// The sensing setup shared by the figure checks.
pub fn reference_scenario(mode: Mode, runs: usize, seed: u64) -> Scenario {
    Scenario {
        k: 100,
        rho: 0.95,
        channels: 4,
        p: Some(0.2),
        mode,
        runs,
        seed,
        ..Scenario::default()
    }
}

/// Stop-round checks for a polling or ALOHA report with `stop_known` set.
pub fn check_stop_rounds(report: &ScenarioReport) -> Check {
    let s = &report.scenario;
    let (mean, stopped) = report.mean_stop_round();
    let th = &report.theory;
    let all = stopped == s.runs;
    match s.mode {
        Mode::Polling => {
            let target = th.rounds_polling;
            let ok = all && (mean - target).abs() <= POLLING_ROUNDS_TOL * target;
            Check::new(
                "polling stop round",
                ok,
                format!(
                    "mean {mean:.3} over {stopped}/{} runs, closed form {target:.3} ± 5%",
                    s.runs
                ),
            )
        }
        _ => {
            let reference = s.k == 100 && s.channels == 4 && th.p == 0.2 && s.kbar() == 75;
            let (lo, hi) = if reference {
                ALOHA_ROUNDS_RANGE
            } else {
                (
                    th.rounds_aloha_exact,
                    th.rounds_aloha_exact * ALOHA_ROUNDS_RANGE.1 / ALOHA_ROUNDS_RANGE.0,
                )
            };
            let ok = all && mean >= lo && mean <= hi;
            Check::new(
                "aloha stop round",
                ok,
                format!(
                    "mean {mean:.3} over {stopped}/{} runs, accepted [{lo:.2}, {hi:.2}], bound {:.3}, approx {:.3}",
                    s.runs, th.rounds_aloha_exact, th.rounds_aloha_approx
                ),
            )
        }
    }
}

pub fn check_throughput(rounds: usize, seed: u64) -> Result<Check> {
    let (q, n, p) = (20usize, 4usize, 0.2);
    let requested: Vec<usize> = (0..q).collect();
    let probs = vec![p; q];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0usize;
    for _ in 0..rounds {
        total += aloha_round(&requested, n, &probs, &mut rng)?
            .delivered
            .len();
    }
    let mean = total as f64 / rounds as f64;
    let expect = expected_successes(AccessMode::Aloha, n, p, q);
    Ok(Check::new(
        "aloha throughput",
        (mean - expect).abs() <= THROUGHPUT_TOL * expect,
        format!("mean successes {mean:.4} vs {expect:.4} over {rounds} rounds"),
    ))
}

/// ALOHA must win where `p < 1/e` and polling where `p > 1/e`.
pub fn check_crossover(rows: &[SweepRow]) -> Check {
    let mut values: Vec<f64> = rows.iter().map(|r| r.value).collect();
    values.dedup();
    let mut bad = Vec::new();
    let mut detail = Vec::new();
    for v in values {
        let get = |m: Mode| {
            rows.iter()
                .find(|r| r.value == v && r.mode == m)
                .map(|r| r.mse_theory)
        };
        let (Some(poll), Some(aloha)) = (get(Mode::Polling), get(Mode::Aloha)) else {
            continue;
        };
        let ok = if crate::access::crossover_check(v) {
            aloha < poll
        } else {
            poll < aloha
        };
        detail.push(format!("p={v}: polling {poll:.4} aloha {aloha:.4}"));
        if !ok {
            bad.push(v);
        }
    }
    Check::new("crossover ordering", bad.is_empty(), detail.join("; "))
}

/// MSE after T rounds must fall strictly as channels are added.
pub fn check_channel_sweep(rows: &[SweepRow]) -> Check {
    let mut ok = true;
    for mode in [Mode::Polling, Mode::Aloha] {
        let mse: Vec<f64> = rows
            .iter()
            .filter(|r| r.mode == mode)
            .map(|r| r.mse_theory)
            .collect();
        ok &= mse
            .windows(2)
            .all(|w| w[1] < w[0] || (w[0] == 0.0 && w[1] == 0.0));
    }
    Check::new(
        "mse decreases with channels",
        ok,
        format!("{} rows", rows.len()),
    )
}

/// With every request delivered, every run polls nodes in the same order.
pub fn check_fixed_order(runs: usize, seed: u64) -> Result<Check> {
    let s = Scenario {
        mode: Mode::Polling,
        channels: 1,
        p: Some(1.0),
        first_round: FirstRound::Greedy,
        runs,
        seed,
        ..Scenario::default()
    };
    let report = run_scenario(&s)?;
    let order = polling_order(&build_ar1_model(s.k, s.rho)?);
    let same = report
        .runs
        .iter()
        .filter(|r| r.delivery_order == order)
        .count();
    Ok(Check::new(
        "pre-determined order",
        same == runs,
        format!("{same}/{runs} realizations follow the fixed order"),
    ))
}

/// Bandit checks: at small `tau` the true model is the per-round favourite
/// from round `2M` on; at large `tau` its mean frequency is near `1/M`.
pub fn check_bandit(report: &BanditReport) -> Check {
    let s = &report.scenario;
    let truth = s.true_model - 1;
    let from = 2 * s.models;
    let mean = report.mean_freq(truth, from);
    if s.tau <= 1.0 {
        let losing: Vec<usize> = report
            .curve
            .iter()
            .skip(from)
            .filter(|c| {
                c.model_freq
                    .iter()
                    .enumerate()
                    .any(|(m, &f)| m != truth && f >= c.model_freq[truth])
            })
            .map(|c| c.t)
            .collect();
        Check::new(
            "bandit favours true model",
            losing.is_empty(),
            format!(
                "tau {}: mean frequency {mean:.3}, rounds not led: {losing:?}",
                s.tau
            ),
        )
    } else {
        let target = 1.0 / s.models as f64;
        Check::new(
            "bandit near uniform",
            (mean - target).abs() <= TAU20_FREQ_TOL,
            format!(
                "tau {}: mean frequency {mean:.3}, target {target:.2} ± {TAU20_FREQ_TOL}",
                s.tau
            ),
        )
    }
}

/// Sensing under a wrong model never beats the correct model's MSE.
pub fn check_mismatch(report: &BanditReport) -> Check {
    let bad: Vec<usize> = report
        .mismatch
        .iter()
        .filter(|p| p.empirical_wrong < p.theory_correct)
        .map(|p| p.t)
        .collect();
    Check::new(
        "wrong model empirical mse above correct theory",
        bad.is_empty(),
        format!("{} rounds, violations at {bad:?}", report.mismatch.len()),
    )
}

/// Runs every reproduction check with `runs` Monte-Carlo sessions.
pub fn validate_all(runs: usize, seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for mode in [Mode::Polling, Mode::Aloha] {
        let mut s = reference_scenario(mode, runs, seed);
        s.stop_known = Some(75);
        s.max_rounds = 400;
        checks.push(check_stop_rounds(&run_scenario(&s)?));
    }
    checks.push(check_throughput(100_000, seed)?);

    let mut s = reference_scenario(Mode::Aloha, runs.min(100), seed);
    s.max_rounds = 75;
    checks.push(check_crossover(&sweep(
        &s,
        SweepParam::P,
        &[0.1, 0.2, 0.3, 0.45, 0.6],
    )?));
    checks.push(check_channel_sweep(&sweep(
        &s,
        SweepParam::Channels,
        &[1.0, 2.0, 4.0, 8.0],
    )?));
    checks.push(check_fixed_order(runs.min(100), seed)?);

    for tau in [1.0, 20.0] {
        let mut s = reference_scenario(Mode::Bandit, runs.min(200), seed);
        s.tau = tau;
        let report = run_bandit_scenario(&s)?;
        checks.push(check_bandit(&report));
        if tau == 1.0 {
            checks.push(check_mismatch(&report));
        }
    }
    Ok(checks)
}
