//! Monte-Carlo orchestration.
//!
//! Every run draws its own realization of the target from a generator
//! seeded by `(seed, run)`; access draws in round `t` use a generator seeded
//! by `(seed, run, t)`. Runs execute in parallel and are collected in run
//! order, so output depends only on the scenario.

use nalgebra::DVector;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::access::{
    aloha_round, expected_successes, mean_rounds_bound, polling_round, AccessMode, RoundOutcome,
    RoundsBound,
};
use crate::bandit::{round_cost_from_state, BanditState};
use crate::engine::{ingest_into, select_nodes, SensingState};
use crate::error::{Error, Result};
use crate::gaussian::{ConditionalState, GaussianModel};
use crate::scenario::{FirstRound, Mode, Scenario};

/// One round of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub run: usize,
    pub t: usize,
    /// Measurements held after this round's deliveries.
    pub known: usize,
    /// `Tr(Cov(u | z))` after the round, under the model being scored.
    pub mse_theory: f64,
    /// `||u - u_hat||^2` after the round.
    pub sqerr_actual: f64,
    pub requested: usize,
    pub delivered: usize,
    pub collided: usize,
    pub bandit: Option<BanditRound>,
}

/// Bandit-mode extras of a round.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditRound {
    /// Zero-based model chosen this round.
    pub model: usize,
    /// Normalized cost; `None` when nothing was delivered.
    pub cost: Option<f64>,
    /// `||x_D - x_hat_D||^2` under the chosen model (0 if nothing delivered).
    pub pred_sqerr: f64,
    /// Its expectation under the chosen model.
    pub pred_expected: f64,
    /// Selection distribution the model was drawn from.
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub records: Vec<RoundRecord>,
    /// Rounds needed to hold `stop_known` measurements, if reached.
    pub stop_round: Option<usize>,
    /// Delivered nodes in delivery order.
    pub delivery_order: Vec<usize>,
}

impl RunResult {
    pub fn last(&self) -> &RoundRecord {
        self.records.last().expect("a run has at least one round")
    }
}

/// Per-round averages across the runs that reached that round.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub t: usize,
    pub runs: usize,
    pub known: f64,
    pub mse_theory: f64,
    pub sqerr_actual: f64,
    pub delivered: f64,
    pub collided: f64,
    /// Bandit mode: fraction of runs that chose each model.
    pub model_freq: Vec<f64>,
    /// Bandit mode: mean prediction error of the round's deliveries.
    pub pred_sqerr: f64,
    pub pred_expected: f64,
}

/// Closed-form companions of a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theory {
    pub p: f64,
    pub q: usize,
    pub expected_successes: f64,
    pub rounds_polling: f64,
    pub rounds_aloha_exact: f64,
    pub rounds_aloha_approx: f64,
}

impl Theory {
    pub fn of(s: &Scenario) -> Self {
        let p = s.upload_p();
        let q = s.request_size(s.k);
        let kbar = s.kbar() as f64;
        let aloha_q = crate::access::optimal_q(s.channels, p, s.k);
        Self {
            p,
            q,
            expected_successes: expected_successes(s.mode.access(), s.channels, p, q),
            rounds_polling: mean_rounds_bound(RoundsBound::Polling, kbar, s.channels, p),
            rounds_aloha_exact: mean_rounds_bound(
                RoundsBound::AlohaExact { q: aloha_q },
                kbar,
                s.channels,
                p,
            ),
            rounds_aloha_approx: mean_rounds_bound(RoundsBound::AlohaApprox, kbar, s.channels, p),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub scenario: Scenario,
    pub runs: Vec<RunResult>,
    pub curve: Vec<CurvePoint>,
    pub theory: Theory,
}

impl ScenarioReport {
    /// Mean stop round over runs that reached `stop_known`, with their count.
    pub fn mean_stop_round(&self) -> (f64, usize) {
        let stops: Vec<usize> = self.runs.iter().filter_map(|r| r.stop_round).collect();
        let n = stops.len();
        (stops.iter().sum::<usize>() as f64 / n.max(1) as f64, n)
    }

    /// Mean over runs of the final theoretical MSE.
    pub fn final_mse_theory(&self) -> f64 {
        mean(self.runs.iter().map(|r| r.last().mse_theory))
    }

    pub fn final_sqerr(&self) -> f64 {
        mean(self.runs.iter().map(|r| r.last().sqerr_actual))
    }

    pub fn records(&self) -> impl Iterator<Item = &RoundRecord> {
        self.runs.iter().flat_map(|r| r.records.iter())
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for `(seed, run, stream)`.
pub fn stream_rng(seed: u64, run: usize, stream: u64) -> ChaCha8Rng {
    let h = splitmix(splitmix(splitmix(seed) ^ run as u64) ^ stream);
    ChaCha8Rng::seed_from_u64(h)
}

const REALIZATION_STREAM: u64 = u64::MAX;

fn access_round(
    s: &Scenario,
    requested: &[usize],
    probs: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<RoundOutcome> {
    match s.mode.access() {
        AccessMode::Polling => polling_round(requested, s.channels, probs, rng),
        AccessMode::Aloha => aloha_round(requested, s.channels, probs, rng),
    }
}

fn first_request(s: &Scenario, t: usize, q: usize, rng: &mut ChaCha8Rng) -> Option<Vec<usize>> {
    (t == 0 && s.first_round == FirstRound::Random).then(|| {
        let mut nodes = sample(rng, s.k, q).into_vec();
        nodes.sort_unstable();
        nodes
    })
}

fn model(family: &[GaussianModel], one_based: usize) -> Result<&GaussianModel> {
    family
        .get(one_based.wrapping_sub(1))
        .ok_or_else(|| Error::Config(format!("model {one_based} is not available")))
}

/// One data-aided sensing session under a single (possibly mismatched) model.
pub fn run_single(s: &Scenario, family: &[GaussianModel], run: usize) -> Result<RunResult> {
    let truth = model(family, s.model)?;
    let assumed = model(family, s.assumed_model.unwrap_or(s.model))?;
    let target = truth.sample(&mut stream_rng(s.seed, run, REALIZATION_STREAM));
    let mut state = SensingState::new(assumed, target)?;
    let probs = vec![s.upload_p(); s.k];
    let kbar = s.kbar();

    let mut records = Vec::new();
    let mut stop_round = None;
    for t in 0..s.max_rounds {
        let remaining = state.unknown_count();
        let q = s.request_size(remaining);
        let mut rng = stream_rng(s.seed, run, t as u64);
        let requested =
            first_request(s, t, q, &mut rng).unwrap_or_else(|| state.select_nodes(q, s.selection));
        let outcome = access_round(s, &requested, &probs, &mut rng)?;
        state.ingest_nodes(&outcome.delivered)?;
        records.push(RoundRecord {
            run,
            t,
            known: state.acc_idx().len(),
            mse_theory: state.mse_theory(),
            sqerr_actual: state.sqerr_actual(),
            requested: requested.len(),
            delivered: outcome.delivered.len(),
            collided: outcome.collisions.len(),
            bandit: None,
        });
        if state.acc_idx().len() >= kbar {
            stop_round = Some(t + 1);
            break;
        }
    }
    Ok(RunResult {
        records,
        stop_round,
        delivery_order: state.acc_idx().to_vec(),
    })
}

/// Runs all Monte-Carlo sessions of a polling or ALOHA scenario.
pub fn run_scenario(s: &Scenario) -> Result<ScenarioReport> {
    s.validate()?;
    if s.mode == Mode::Bandit {
        return Err(Error::Config(
            "use run_bandit_scenario for bandit mode".into(),
        ));
    }
    let family = s.family()?;
    let runs = (0..s.runs)
        .into_par_iter()
        .map(|run| run_single(s, &family, run))
        .collect::<Result<Vec<_>>>()?;
    Ok(ScenarioReport {
        curve: build_curve(&runs, 0),
        theory: Theory::of(s),
        scenario: s.clone(),
        runs,
    })
}

fn build_curve(runs: &[RunResult], models: usize) -> Vec<CurvePoint> {
    let horizon = runs.iter().map(|r| r.records.len()).max().unwrap_or(0);
    (0..horizon)
        .map(|t| {
            let at: Vec<&RoundRecord> = runs.iter().filter_map(|r| r.records.get(t)).collect();
            let n = at.len() as f64;
            let avg = |f: &dyn Fn(&RoundRecord) -> f64| at.iter().map(|r| f(r)).sum::<f64>() / n;
            let mut model_freq = vec![0.0; models];
            for b in at.iter().filter_map(|r| r.bandit.as_ref()) {
                model_freq[b.model] += 1.0 / n;
            }
            let bandit = |f: &dyn Fn(&BanditRound) -> f64| {
                avg(&|r: &RoundRecord| r.bandit.as_ref().map_or(f64::NAN, f))
            };
            CurvePoint {
                t,
                runs: at.len(),
                known: avg(&|r| r.known as f64),
                mse_theory: avg(&|r| r.mse_theory),
                sqerr_actual: avg(&|r| r.sqerr_actual),
                delivered: avg(&|r| r.delivered as f64),
                collided: avg(&|r| r.collided as f64),
                model_freq,
                pred_sqerr: bandit(&|b| b.pred_sqerr),
                pred_expected: bandit(&|b| b.pred_expected),
            }
        })
        .collect()
}

/// Parameter swept by [`sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    P,
    Channels,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub mode: Mode,
    pub mse_theory: f64,
    pub sqerr_actual: f64,
    pub known: f64,
    pub expected_successes: f64,
    /// Closed-form prediction that ALOHA beats polling at this `p`.
    pub aloha_predicted_better: bool,
}

/// Final MSE after `s.max_rounds` rounds for polling and ALOHA at every
/// value of `param`. Runs only stop early once every node is known.
pub fn sweep(s: &Scenario, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(values.len() * 2);
    for &value in values {
        for mode in [Mode::Polling, Mode::Aloha] {
            let mut sc = s.clone();
            sc.mode = mode;
            sc.stop_known = None;
            match param {
                SweepParam::P => {
                    sc.p = Some(value);
                    sc.threshold_snr = None;
                    sc.avg_snr = None;
                    sc.availability = None;
                }
                SweepParam::Channels => {
                    if value < 1.0 || value.fract() != 0.0 {
                        return Err(Error::Config(format!(
                            "channel count {value} is not a positive integer"
                        )));
                    }
                    sc.channels = value as usize;
                }
            }
            let report = run_scenario(&sc)?;
            rows.push(SweepRow {
                value,
                mode,
                mse_theory: report.final_mse_theory(),
                sqerr_actual: report.final_sqerr(),
                known: mean(report.runs.iter().map(|r| r.last().known as f64)),
                expected_successes: report.theory.expected_successes,
                aloha_predicted_better: crate::access::crossover_check(sc.upload_p()),
            });
        }
    }
    Ok(rows)
}

/// One model-selection session: the bandit picks a model each round and
/// nodes are selected and scored under it; every model conditions on the
/// shared pool of delivered data.
pub fn run_bandit_single(s: &Scenario, family: &[GaussianModel], run: usize) -> Result<RunResult> {
    let models = &family[..s.models];
    let truth_idx = s.true_model - 1;
    let target = models[truth_idx].sample(&mut stream_rng(s.seed, run, REALIZATION_STREAM));
    let mut states: Vec<ConditionalState> = models.iter().map(ConditionalState::prior).collect();
    let mut bandit = BanditState::new(s.models, s.tau)?;
    let probs = vec![s.upload_p(); s.k];
    let mut delivery_order = Vec::new();
    let mut records = Vec::with_capacity(s.max_rounds);
    let mut stop_round = None;

    for t in 0..s.max_rounds {
        let mut rng = stream_rng(s.seed, run, t as u64);
        let select_probs = bandit.selection_probs(t);
        let m = bandit.select_model(t, &mut rng);
        bandit.record_selection(m);

        let remaining = states[m].unknown_idx().len();
        let q = s.request_size(remaining);
        let requested = if q == 0 {
            Vec::new()
        } else {
            first_request(s, t, q, &mut rng)
                .unwrap_or_else(|| select_nodes(&states[m], q, s.selection))
        };
        let outcome = aloha_round(&requested, s.channels, &probs, &mut rng)?;
        let delivered: Vec<(usize, f64)> =
            outcome.delivered.iter().map(|&n| (n, target[n])).collect();

        let (cost, pred_sqerr, pred_expected) = if delivered.is_empty() {
            (None, 0.0, 0.0)
        } else {
            let c = round_cost_from_state(&states[m], &delivered)?;
            bandit.update(m, c.y)?;
            (Some(c.y), c.sq_error, c.expected)
        };
        for st in &mut states {
            ingest_into(st, &delivered)?;
        }
        delivery_order.extend(outcome.delivered.iter().copied());

        let truth = &states[truth_idx];
        records.push(RoundRecord {
            run,
            t,
            known: delivery_order.len(),
            mse_theory: truth.total_variance(),
            sqerr_actual: sq_error(&states[m], &target),
            requested: requested.len(),
            delivered: delivered.len(),
            collided: outcome.collisions.len(),
            bandit: Some(BanditRound {
                model: m,
                cost,
                pred_sqerr,
                pred_expected,
                probs: select_probs,
            }),
        });
        if stop_round.is_none() && delivery_order.len() >= s.kbar() {
            stop_round = Some(t + 1);
        }
    }
    Ok(RunResult {
        records,
        stop_round,
        delivery_order,
    })
}

fn sq_error(cond: &ConditionalState, target: &DVector<f64>) -> f64 {
    cond.unknown_idx()
        .iter()
        .zip(cond.cond_mean().iter())
        .map(|(&n, &e)| (target[n] - e).powi(2))
        .sum()
}

/// Mismatched-model comparison: theoretical MSE of sensing under the
/// correct model against the empirical error of sensing under a wrong one.
#[derive(Debug, Clone, PartialEq)]
pub struct MismatchPoint {
    pub t: usize,
    pub theory_correct: f64,
    pub empirical_correct: f64,
    pub empirical_wrong: f64,
    /// What the wrong model believes its own MSE to be.
    pub theory_wrong: f64,
}

#[derive(Debug, Clone)]
pub struct BanditReport {
    pub scenario: Scenario,
    pub runs: Vec<RunResult>,
    pub curve: Vec<CurvePoint>,
    pub mismatch: Vec<MismatchPoint>,
}

impl BanditReport {
    /// Mean over rounds `from..` of the fraction of runs choosing `model`.
    pub fn mean_freq(&self, model: usize, from: usize) -> f64 {
        mean(self.curve.iter().skip(from).map(|c| c.model_freq[model]))
    }
}

pub fn run_bandit_scenario(s: &Scenario) -> Result<BanditReport> {
    s.validate()?;
    if s.mode != Mode::Bandit {
        return Err(Error::Config(
            "run_bandit_scenario needs mode = \"bandit\"".into(),
        ));
    }
    let family = s.family()?;
    let runs = (0..s.runs)
        .into_par_iter()
        .map(|run| run_bandit_single(s, &family, run))
        .collect::<Result<Vec<_>>>()?;
    let curve = build_curve(&runs, s.models);
    let mismatch = mismatch_baseline(s)?;
    Ok(BanditReport {
        scenario: s.clone(),
        runs,
        curve,
        mismatch,
    })
}

/// Runs ALOHA sensing with the true model and with `s.mismatch_model`,
/// data always drawn from the true model.
pub fn mismatch_baseline(s: &Scenario) -> Result<Vec<MismatchPoint>> {
    let mut base = s.clone();
    base.mode = Mode::Aloha;
    base.model = s.true_model;
    base.assumed_model = None;
    base.stop_known = None;
    let correct = run_scenario(&base)?;
    base.assumed_model = Some(s.mismatch_model);
    let wrong = run_scenario(&base)?;
    Ok(correct
        .curve
        .iter()
        .zip(&wrong.curve)
        .map(|(c, w)| MismatchPoint {
            t: c.t,
            theory_correct: c.mse_theory,
            empirical_correct: c.sqerr_actual,
            empirical_wrong: w.sqerr_actual,
            theory_wrong: w.mse_theory,
        })
        .collect())
}
