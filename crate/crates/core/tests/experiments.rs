use std::fs;

use gdas_core::access::{expected_successes, AccessMode};
use gdas_core::experiments::{run_bandit_scenario, run_scenario, sweep, SweepParam};
use gdas_core::output::{self, fmt_float};
use gdas_core::scenario::{Mode, Scenario};

fn small(mode: Mode) -> Scenario {
    Scenario {
        k: 40,
        mode,
        runs: 12,
        max_rounds: 60,
        stop_known: Some(30),
        ..Scenario::default()
    }
}

fn read_all(dir: &std::path::Path) -> Vec<(String, String)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read_to_string(&p).unwrap(),
            )
        })
        .collect()
}

#[test]
fn csv_output_is_bit_identical_across_invocations() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let s = small(Mode::Aloha);
        output::write_scenario(dir.path(), &run_scenario(&s).unwrap()).unwrap();
        let bandit = Scenario {
            k: 30,
            mode: Mode::Bandit,
            runs: 4,
            max_rounds: 20,
            ..Scenario::default()
        };
        output::write_bandit(
            &dir.path().join("bandit"),
            &run_bandit_scenario(&bandit).unwrap(),
        )
        .unwrap();
    }
    assert_eq!(read_all(a.path()), read_all(b.path()));
    assert_eq!(
        read_all(&a.path().join("bandit")),
        read_all(&b.path().join("bandit"))
    );
    for (name, text) in read_all(a.path()) {
        assert!(text.starts_with("# gdas-csv v1 "), "{name}");
    }
}

#[test]
fn summary_means_equal_record_means() {
    let dir = tempfile::tempdir().unwrap();
    let report = run_scenario(&small(Mode::Polling)).unwrap();
    output::write_scenario(dir.path(), &report).unwrap();

    let text = fs::read_to_string(dir.path().join("run.csv")).unwrap();
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = rdr.headers().unwrap().clone();
    let col = |name: &str| header.iter().position(|h| h == name).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();

    let mut last: std::collections::BTreeMap<usize, (usize, f64, f64)> = Default::default();
    for r in &rows {
        let run: usize = r[col("run")].parse().unwrap();
        let t: usize = r[col("t")].parse().unwrap();
        let entry = last.entry(run).or_insert((0, 0.0, 0.0));
        if t >= entry.0 {
            *entry = (
                t,
                r[col("mse_theory")].parse().unwrap(),
                r[col("sqerr_actual")].parse().unwrap(),
            );
        }
    }
    let n = last.len() as f64;
    let mse: f64 = last.values().map(|v| v.1).sum::<f64>() / n;
    let sq: f64 = last.values().map(|v| v.2).sum::<f64>() / n;
    let stop: f64 = last.values().map(|v| (v.0 + 1) as f64).sum::<f64>() / n;

    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let get = |key: &str| -> f64 {
        summary
            .lines()
            .find_map(|l| l.strip_prefix(&format!("{key},")))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((get("final_mse_theory") - mse).abs() <= 1e-8 * mse.max(1.0));
    assert!((get("final_sqerr_actual") - sq).abs() <= 1e-8 * sq.max(1.0));
    assert_eq!(
        get("mean_stop_round"),
        fmt_float(stop).parse::<f64>().unwrap()
    );

    let curve = fs::read_to_string(dir.path().join("run_curve.csv")).unwrap();
    let first = curve.lines().nth(2).unwrap();
    let t0: Vec<f64> = rows
        .iter()
        .filter(|r| &r[col("t")] == "0")
        .map(|r| r[col("mse_theory")].parse().unwrap())
        .collect();
    let mean0 = t0.iter().sum::<f64>() / t0.len() as f64;
    assert_eq!(first.split(',').nth(3).unwrap(), fmt_float(mean0));
}

#[test]
fn stop_rounds_obey_wald_identity() {
    for mode in [Mode::Polling, Mode::Aloha] {
        let s = Scenario {
            mode,
            runs: 200,
            max_rounds: 400,
            stop_known: Some(75),
            ..Scenario::default()
        };
        let report = run_scenario(&s).unwrap();
        let (stop, n) = report.mean_stop_round();
        assert_eq!(n, s.runs);
        let at_stop = report
            .runs
            .iter()
            .map(|r| r.records[r.stop_round.unwrap() - 1].known as f64)
            .sum::<f64>()
            / n as f64;
        let per_round =
            expected_successes(mode.access(), s.channels, s.upload_p(), s.request_size(s.k));
        let rel = (at_stop - stop * per_round).abs() / at_stop;
        assert!(rel < 0.03, "{mode}: {at_stop} vs {stop} * {per_round}");
        assert!(at_stop >= 75.0);
    }
}

#[test]
fn mse_falls_with_more_channels() {
    let s = Scenario {
        runs: 30,
        max_rounds: 40,
        ..Scenario::default()
    };
    let rows = sweep(&s, SweepParam::Channels, &[1.0, 2.0, 4.0, 8.0]).unwrap();
    for mode in [Mode::Polling, Mode::Aloha] {
        let mse: Vec<f64> = rows
            .iter()
            .filter(|r| r.mode == mode)
            .map(|r| r.mse_theory)
            .collect();
        assert!(mse.windows(2).all(|w| w[1] < w[0]), "{mode}: {mse:?}");
    }
    assert!(sweep(&s, SweepParam::Channels, &[1.5]).is_err());
}

#[test]
fn records_are_coherent() {
    let report = run_scenario(&small(Mode::Aloha)).unwrap();
    for run in &report.runs {
        let mut known = 0;
        for (t, r) in run.records.iter().enumerate() {
            assert_eq!(r.t, t);
            known += r.delivered;
            assert_eq!(r.known, known);
            assert!(r.delivered + r.collided <= r.requested);
        }
        assert_eq!(run.delivery_order.len(), known);
        let stop = run.stop_round.unwrap();
        assert_eq!(stop, run.records.len());
        assert!(run.records[stop - 1].known >= 30);
        assert!(run.records[stop - 2].known < 30);
    }
    let p = expected_successes(AccessMode::Aloha, 4, 0.2, 20);
    assert!(p > 1.5 && p < 1.51);
}

#[test]
fn config_round_trips() {
    let s = Scenario {
        mode: Mode::Polling,
        p: Some(0.35),
        stop_known: Some(60),
        ..Scenario::default()
    };
    let text = s.to_toml_string();
    assert_eq!(Scenario::from_toml_str(&text).unwrap(), s);
    assert!(Scenario::from_toml_str("unknown_key = 3").is_err());
    assert!(Scenario::from_toml_str("p = 1.5").is_err());
}
