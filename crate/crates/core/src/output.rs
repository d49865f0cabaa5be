//! CSV emission. Every file starts with a `# gdas-csv v1 <kind>` comment
//! line; floats carry 9 significant digits.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::experiments::{
    BanditReport, CurvePoint, MismatchPoint, RoundRecord, ScenarioReport, SweepRow,
};

pub const SCHEMA_VERSION: u32 = 1;

/// `v` with 9 significant digits in scientific notation.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v:.8e}")
    }
}

fn open(dir: &Path, name: &str, kind: &str) -> Result<(csv::Writer<File>, PathBuf)> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let mut file = File::create(&path)?;
    writeln!(file, "# gdas-csv v{SCHEMA_VERSION} {kind}")?;
    Ok((csv::Writer::from_writer(file), path))
}

fn record_row(r: &RoundRecord, models: usize) -> Vec<String> {
    let mut row = vec![
        r.run.to_string(),
        r.t.to_string(),
        r.known.to_string(),
        fmt_float(r.mse_theory),
        fmt_float(r.sqerr_actual),
        r.requested.to_string(),
        r.delivered.to_string(),
        r.collided.to_string(),
    ];
    if let Some(b) = &r.bandit {
        row.push((b.model + 1).to_string());
        row.push(b.cost.map(fmt_float).unwrap_or_default());
        row.push(fmt_float(b.pred_sqerr));
        row.push(fmt_float(b.pred_expected));
        row.extend(b.probs.iter().map(|&p| fmt_float(p)));
    } else if models > 0 {
        row.extend(std::iter::repeat_n(String::new(), 4 + models));
    }
    row
}

/// Writes per-run, per-round records sorted by `(run, t)`.
pub fn write_records<'a>(
    dir: &Path,
    name: &str,
    records: impl Iterator<Item = &'a RoundRecord>,
    models: usize,
) -> Result<PathBuf> {
    let (mut w, path) = open(dir, name, "records")?;
    let mut header: Vec<String> = [
        "run",
        "t",
        "known",
        "mse_theory",
        "sqerr_actual",
        "requested",
        "delivered",
        "collided",
    ]
    .map(String::from)
    .to_vec();
    if models > 0 {
        header.extend(["model", "cost", "pred_sqerr", "pred_expected"].map(String::from));
        header.extend((1..=models).map(|m| format!("p{m}")));
    }
    w.write_record(&header)?;
    let mut rows: Vec<&RoundRecord> = records.collect();
    rows.sort_by_key(|r| (r.run, r.t));
    for r in rows {
        w.write_record(record_row(r, models))?;
    }
    w.flush()?;
    Ok(path)
}

pub fn write_curve(dir: &Path, name: &str, curve: &[CurvePoint], models: usize) -> Result<PathBuf> {
    let (mut w, path) = open(dir, name, "curve")?;
    let mut header: Vec<String> = [
        "t",
        "runs",
        "known",
        "mse_theory",
        "sqerr_actual",
        "delivered",
        "collided",
    ]
    .map(String::from)
    .to_vec();
    if models > 0 {
        header.extend(["pred_sqerr", "pred_expected"].map(String::from));
        header.extend((1..=models).map(|m| format!("freq{m}")));
    }
    w.write_record(&header)?;
    for c in curve {
        let mut row = vec![
            c.t.to_string(),
            c.runs.to_string(),
            fmt_float(c.known),
            fmt_float(c.mse_theory),
            fmt_float(c.sqerr_actual),
            fmt_float(c.delivered),
            fmt_float(c.collided),
        ];
        if models > 0 {
            row.push(fmt_float(c.pred_sqerr));
            row.push(fmt_float(c.pred_expected));
            row.extend(c.model_freq.iter().map(|&f| fmt_float(f)));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(path)
}

/// `key,value` rows.
pub fn write_summary(dir: &Path, entries: &[(String, String)]) -> Result<PathBuf> {
    let (mut w, path) = open(dir, "summary.csv", "summary")?;
    w.write_record(["key", "value"])?;
    for (k, v) in entries {
        w.write_record([k, v])?;
    }
    w.flush()?;
    Ok(path)
}

pub fn scenario_summary(report: &ScenarioReport) -> Vec<(String, String)> {
    let s = &report.scenario;
    let th = &report.theory;
    let (stop, stopped) = report.mean_stop_round();
    vec![
        ("mode".into(), s.mode.to_string()),
        ("k".into(), s.k.to_string()),
        ("channels".into(), s.channels.to_string()),
        ("p".into(), fmt_float(th.p)),
        ("q".into(), th.q.to_string()),
        ("stop_known".into(), s.kbar().to_string()),
        ("runs".into(), s.runs.to_string()),
        ("seed".into(), s.seed.to_string()),
        ("runs_stopped".into(), stopped.to_string()),
        ("mean_stop_round".into(), fmt_float(stop)),
        (
            "expected_successes".into(),
            fmt_float(th.expected_successes),
        ),
        ("rounds_bound_polling".into(), fmt_float(th.rounds_polling)),
        (
            "rounds_bound_aloha_exact".into(),
            fmt_float(th.rounds_aloha_exact),
        ),
        (
            "rounds_bound_aloha_approx".into(),
            fmt_float(th.rounds_aloha_approx),
        ),
        (
            "final_mse_theory".into(),
            fmt_float(report.final_mse_theory()),
        ),
        ("final_sqerr_actual".into(), fmt_float(report.final_sqerr())),
    ]
}

pub fn write_sweep(dir: &Path, param: &str, rows: &[SweepRow]) -> Result<PathBuf> {
    let (mut w, path) = open(dir, "sweep.csv", &format!("sweep param={param}"))?;
    w.write_record([
        param,
        "mode",
        "mse_theory",
        "sqerr_actual",
        "known",
        "expected_successes",
        "aloha_predicted_better",
    ])?;
    for r in rows {
        w.write_record([
            fmt_float(r.value),
            r.mode.to_string(),
            fmt_float(r.mse_theory),
            fmt_float(r.sqerr_actual),
            fmt_float(r.known),
            fmt_float(r.expected_successes),
            r.aloha_predicted_better.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(path)
}

pub fn write_mismatch(dir: &Path, points: &[MismatchPoint]) -> Result<PathBuf> {
    let (mut w, path) = open(dir, "mismatch.csv", "mismatch")?;
    w.write_record([
        "t",
        "theory_correct",
        "empirical_correct",
        "empirical_wrong",
        "theory_wrong",
    ])?;
    for p in points {
        w.write_record([
            p.t.to_string(),
            fmt_float(p.theory_correct),
            fmt_float(p.empirical_correct),
            fmt_float(p.empirical_wrong),
            fmt_float(p.theory_wrong),
        ])?;
    }
    w.flush()?;
    Ok(path)
}

/// All files of a polling/ALOHA run.
pub fn write_scenario(dir: &Path, report: &ScenarioReport) -> Result<Vec<PathBuf>> {
    Ok(vec![
        write_records(dir, "run.csv", report.records(), 0)?,
        write_curve(dir, "run_curve.csv", &report.curve, 0)?,
        write_summary(dir, &scenario_summary(report))?,
    ])
}

/// All files of a bandit run.
pub fn write_bandit(dir: &Path, report: &BanditReport) -> Result<Vec<PathBuf>> {
    let s = &report.scenario;
    let records = report.runs.iter().flat_map(|r| r.records.iter());
    let mut summary = vec![
        ("k".to_string(), s.k.to_string()),
        ("channels".into(), s.channels.to_string()),
        ("p".into(), fmt_float(s.upload_p())),
        ("tau".into(), fmt_float(s.tau)),
        ("models".into(), s.models.to_string()),
        ("true_model".into(), s.true_model.to_string()),
        ("mismatch_model".into(), s.mismatch_model.to_string()),
        ("runs".into(), s.runs.to_string()),
        ("seed".into(), s.seed.to_string()),
    ];
    for m in 0..s.models {
        summary.push((
            format!("mean_freq{}_after_2m", m + 1),
            fmt_float(report.mean_freq(m, 2 * s.models)),
        ));
    }
    Ok(vec![
        write_records(dir, "bandit.csv", records, s.models)?,
        write_curve(dir, "bandit_curve.csv", &report.curve, s.models)?,
        write_mismatch(dir, &report.mismatch)?,
        write_summary(dir, &summary)?,
    ])
}
