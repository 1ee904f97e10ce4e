//! The experiment driver behind `replicator run`.
//!
//! One ensemble is simulated to the horizon; mean tracking, the
//! Anderson-Darling sweep and the occupation/drift diagnostics observe it as
//! it runs. `tn_test` and `poc` run their own experiments afterwards.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use replicator_core::mean_field::{
    poc_experiment, tracked_samples, EmpiricalSnapshot, Ensemble, PocSettings,
};
use replicator_core::persistence::{
    capped_mean_h, drift_fit, face_equilibria, find_p, lyapunov_h, Occupation,
};
use replicator_core::stats::{
    ad_null_calibration, anderson_darling_statistic, reg_inc_beta, tn_null_calibration,
    tn_statistic, NullCalibration, DEFAULT_LEVELS,
};

use crate::config::{AdTest, Analysis, MeanTracking, Persistence, Poc, Resolved, TnTest};
use crate::error::{CliError, Within};
use crate::output::{
    self, histogram_csv, json, means_csv, occupation_csv, poc_csv, sample_csv, time_label,
    CertificateJson, OccupationJson, PocJson, TestReportJson,
};

/// Pass/fail of one analysis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestOutcome {
    pub analysis: &'static str,
    pub passed: bool,
    /// The quantity compared against `threshold`.
    pub metric: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub schema_version: u32,
    pub preset: Option<&'static str>,
    pub n: usize,
    pub t: f64,
    pub seed: u64,
    pub theoretical_s: Option<f64>,
    pub final_time: f64,
    pub final_mean: Vec<f64>,
    /// `|final mean_1 - s| / s`.
    pub relative_error: Option<f64>,
    pub tests: Vec<TestOutcome>,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: Summary,
    /// `(analysis name, report)` in config order.
    pub reports: Vec<(&'static str, Value)>,
}

impl RunOutcome {
    pub fn report(&self, name: &str) -> Option<&Value> {
        self.reports
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| v)
    }
}

/// Human-readable description of what `execute` would do.
pub fn plan(r: &Resolved, out: Option<&Path>) -> String {
    let run = &r.config.run;
    let steps = r.integrator.steps_for(run.t).unwrap_or(0);
    let snapshots =
        steps / run.snapshot_stride + 1 + u64::from(!steps.is_multiple_of(run.snapshot_stride));
    let mut s = String::new();
    let _ = writeln!(
        s,
        "model: d = {}, sigma = {}, delta = {}{}",
        r.params.dim(),
        r.params.sigma,
        r.params.delta,
        r.config
            .model
            .preset
            .map(|p| format!(" (preset {})", p.name()))
            .unwrap_or_default()
    );
    if let Some(sv) = r.theoretical_s {
        let _ = writeln!(s, "theoretical s = {sv:.4}");
    }
    let _ = writeln!(
        s,
        "ensemble: N = {}, T = {}, h = {}, {} steps ({} particle-steps), {} snapshots, seed {}",
        run.n,
        run.t,
        run.h,
        steps,
        steps as u128 * run.n as u128,
        snapshots,
        run.seed
    );
    for a in &r.config.analyses {
        let line = match a {
            Analysis::MeanTracking(m) => {
                format!("t >= {}, relative tolerance {}", m.t_min, m.tolerance)
            }
            Analysis::AdTest(ad) => format!(
                "every {} steps in [{}, {}], level {}, B = {}",
                ad.every,
                ad.t_min,
                ad.t_max.unwrap_or(run.t),
                ad.level,
                ad.b
            ),
            Analysis::TnTest(tn) => format!(
                "{} runs x {} particles at t = {:?}, B = {}",
                tn.runs, tn.particles, tn.times, tn.b
            ),
            Analysis::Poc(p) => format!(
                "N = {:?}, M = {}, T = {}, N_ref = {}",
                p.n_list,
                p.m,
                p.t,
                p.n_ref()
            ),
            Analysis::Persistence(p) => format!("eps = {:?}, t >= {}", p.eps, p.t_min),
        };
        let _ = writeln!(s, "analysis {}: {line}", a.name());
    }
    match out {
        Some(dir) => {
            let _ = writeln!(s, "artifacts: {}", dir.display());
        }
        None => s.push_str("artifacts: none\n"),
    }
    s
}

struct MeanAcc<'a> {
    cfg: &'a MeanTracking,
    k_min: u64,
    records: Vec<(f64, f64, f64)>,
}

#[derive(Serialize)]
struct MeanRecord {
    t: f64,
    mean_1: f64,
    relative_error: f64,
}

struct AdAcc<'a> {
    cfg: &'a AdTest,
    k_min: u64,
    k_max: u64,
    null: (f64, f64),
    calibration: NullCalibration,
    records: Vec<AdRecord>,
}

#[derive(Serialize)]
struct AdRecord {
    t: f64,
    statistic: f64,
    p_value: f64,
    reject: bool,
}

struct PersistAcc<'a> {
    cfg: &'a Persistence,
    k_min: u64,
    p: Vec<f64>,
    occupation: Occupation,
    h_series: Vec<f64>,
}

enum Acc<'a> {
    Mean(MeanAcc<'a>),
    Ad(AdAcc<'a>),
    Persist(PersistAcc<'a>, Option<CertificateJson>),
}

fn first_step(t: f64, h: f64) -> u64 {
    (t / h - 1e-9).ceil().max(0.0) as u64
}

fn last_step(t: f64, h: f64) -> u64 {
    (t / h + 1e-9).floor().max(0.0) as u64
}

/// Runs every analysis of `r`. With `out`, writes the artifact tree there.
pub fn execute(r: &Resolved, out: Option<&Path>) -> Result<RunOutcome, CliError> {
    let run = &r.config.run;
    let h = run.h;
    let s = r.theoretical_s;
    let null = s.map(|s| (s, 1.0 - s));
    if let Some(dir) = out {
        output::write_file(&dir.join("config.echo"), &r.config.to_toml())?;
    }

    let mut accs = Vec::new();
    for a in &r.config.analyses {
        match a {
            Analysis::MeanTracking(m) => accs.push(Acc::Mean(MeanAcc {
                cfg: m,
                k_min: first_step(m.t_min, h),
                records: Vec::new(),
            })),
            Analysis::AdTest(ad) => accs.push(Acc::Ad(AdAcc {
                cfg: ad,
                k_min: first_step(ad.t_min, h),
                k_max: last_step(ad.t_max.unwrap_or(run.t), h),
                null: null.expect("validated"),
                calibration: ad_null_calibration(run.n, ad.b, run.seed).within("stats")?,
                records: Vec::new(),
            })),
            Analysis::Persistence(p) => {
                let eq = face_equilibria(&r.params.payoff, r.params.sigma).within("persistence")?;
                let cert = find_p(&eq).within("persistence")?;
                let weights = cert
                    .as_ref()
                    .map(|c| c.p.clone())
                    .unwrap_or_else(|| vec![1.0; r.params.dim()]);
                accs.push(Acc::Persist(
                    PersistAcc {
                        cfg: p,
                        k_min: first_step(p.t_min, h),
                        p: weights,
                        occupation: Occupation::new(&p.eps),
                        h_series: Vec::new(),
                    },
                    cert.as_ref().map(CertificateJson::from),
                ));
            }
            Analysis::TnTest(_) | Analysis::Poc(_) => {}
        }
    }

    let steps = r.integrator.steps_for(run.t).within("sde_engine")?;
    let mut ensemble =
        Ensemble::new(run.n, &r.law, r.params.clone(), r.integrator).within("mean_field")?;
    let mut snapshots: Vec<EmpiricalSnapshot> = Vec::new();
    for k in 0..=steps {
        if k > 0 {
            ensemble.step().within("mean_field")?;
        }
        let t = ensemble.time();
        let is_snapshot = k % run.snapshot_stride == 0 || k == steps;
        if is_snapshot {
            let mut snap = ensemble.snapshot(run.keep_samples);
            if let Some(dir) = out {
                let label = time_label(snap.time);
                let snaps = dir.join("snapshots");
                output::write_file(
                    &snaps.join(format!("hist_t{label}.csv")),
                    &histogram_csv(&snap),
                )?;
                if let Some(text) = sample_csv(&snap) {
                    output::write_file(&snaps.join(format!("sample_t{label}.csv")), &text)?;
                }
            }
            snap.sample = None;
            snapshots.push(snap);
        }
        for acc in accs.iter_mut() {
            match acc {
                Acc::Mean(m) => {
                    if is_snapshot && k >= m.k_min {
                        let s = s.expect("validated");
                        let m1 = ensemble.empirical_mean()[0];
                        m.records.push((t, m1, (m1 - s).abs() / s));
                    }
                }
                Acc::Ad(ad) => {
                    if k % ad.cfg.every == 0 && k >= ad.k_min && k <= ad.k_max {
                        let sample = ensemble.coordinate(0);
                        let stat = anderson_darling_statistic(&sample, ad.null.0, ad.null.1)
                            .within("stats")?;
                        let report = ad.calibration.report(stat, &[ad.cfg.level]);
                        ad.records.push(AdRecord {
                            t,
                            statistic: stat,
                            p_value: report.p_value,
                            reject: report.reject[0].1,
                        });
                    }
                }
                Acc::Persist(p, _) => {
                    if k % p.cfg.every == 0 {
                        let states = (0..ensemble.len()).map(|i| ensemble.particle(i));
                        p.h_series
                            .push(capped_mean_h(states, &p.p, p.cfg.r, p.cfg.h_cap));
                        if k >= p.k_min {
                            for i in 0..ensemble.len() {
                                p.occupation.record(ensemble.particle(i));
                            }
                        }
                    }
                }
            }
        }
    }

    let mut tests = Vec::new();
    let mut reports: Vec<(&'static str, Value)> = Vec::new();
    let mut acc_iter = accs.into_iter();
    for a in &r.config.analyses {
        let (name, outcome, report) = match a {
            Analysis::MeanTracking(_) => match acc_iter.next() {
                Some(Acc::Mean(m)) => finish_mean(m, s.expect("validated")),
                _ => unreachable!(),
            },
            Analysis::AdTest(_) => match acc_iter.next() {
                Some(Acc::Ad(ad)) => finish_ad(ad),
                _ => unreachable!(),
            },
            Analysis::Persistence(_) => match acc_iter.next() {
                Some(Acc::Persist(p, cert)) => finish_persistence(p, cert, s),
                _ => unreachable!(),
            },
            Analysis::TnTest(tn) => run_tn(r, tn, null.expect("validated"))?,
            Analysis::Poc(p) => run_poc(r, p, out)?,
        };
        if let Some(dir) = out {
            output::write_file(
                &dir.join("reports").join(format!("{name}.json")),
                &json(&report),
            )?;
            if let Analysis::Persistence(_) = a {
                let rows: Vec<OccupationJson> = report["occupation"]
                    .as_array()
                    .into_iter()
                    .flatten()
                    .map(|v| OccupationJson {
                        eps: v["eps"].as_f64().unwrap_or(f64::NAN),
                        fraction: v["fraction"].as_f64().unwrap_or(f64::NAN),
                        oracle: None,
                    })
                    .collect();
                output::write_file(
                    &dir.join("reports").join("occupation.csv"),
                    &occupation_csv(&rows),
                )?;
            }
        }
        tests.push(outcome);
        reports.push((name, report));
    }

    let last = snapshots.last().expect("initial snapshot");
    let summary = Summary {
        schema_version: r.config.schema_version,
        preset: r.config.model.preset.map(|p| p.name()),
        n: run.n,
        t: run.t,
        seed: run.seed,
        theoretical_s: s,
        final_time: last.time,
        final_mean: last.mean.clone(),
        relative_error: s.map(|s| (last.mean[0] - s).abs() / s),
        passed: tests.iter().all(|t| t.passed),
        tests,
    };
    if let Some(dir) = out {
        output::write_file(
            &dir.join("snapshots").join("means.csv"),
            &means_csv(&snapshots),
        )?;
        output::write_file(&dir.join("summary.json"), &json(&summary))?;
    }
    Ok(RunOutcome { summary, reports })
}

type Finished = (&'static str, TestOutcome, Value);

fn finish_mean(m: MeanAcc<'_>, s: f64) -> Finished {
    let max = m.records.iter().map(|r| r.2).fold(0.0, f64::max);
    let passed = !m.records.is_empty() && max <= m.cfg.tolerance;
    let records: Vec<MeanRecord> = m
        .records
        .iter()
        .map(|&(t, mean_1, relative_error)| MeanRecord {
            t,
            mean_1,
            relative_error,
        })
        .collect();
    let report = serde_json::json!({
        "s": s,
        "t_min": m.cfg.t_min,
        "tolerance": m.cfg.tolerance,
        "max_relative_error": max,
        "passed": passed,
        "records": records,
    });
    (
        "mean_tracking",
        TestOutcome {
            analysis: "mean_tracking",
            passed,
            metric: max,
            threshold: m.cfg.tolerance,
        },
        report,
    )
}

fn finish_ad(ad: AdAcc<'_>) -> Finished {
    let total = ad.records.len();
    let accepted = ad.records.iter().filter(|r| !r.reject).count();
    let fraction = accepted as f64 / total.max(1) as f64;
    let passed = total > 0 && fraction >= ad.cfg.min_fraction;
    let report = serde_json::json!({
        "method": "AndersonDarling",
        "null_beta": [(ad.null.0), (ad.null.1)],
        "level": ad.cfg.level,
        "quantile": ad.calibration.quantile(ad.cfg.level),
        "B": ad.calibration.b(),
        "seed": ad.calibration.seed,
        "snapshots": total,
        "non_rejections": accepted,
        "non_rejection_fraction": fraction,
        "min_fraction": ad.cfg.min_fraction,
        "passed": passed,
        "records": ad.records,
    });
    (
        "ad_test",
        TestOutcome {
            analysis: "ad_test",
            passed,
            metric: fraction,
            threshold: ad.cfg.min_fraction,
        },
        report,
    )
}

/// `P(X1 < eps) + P(X1 > 1 - eps)` under `Beta(s, 1 - s)`.
pub fn ext_oracle(eps: f64, s: f64) -> f64 {
    if eps >= 0.5 {
        return 1.0;
    }
    reg_inc_beta(eps, s, 1.0 - s) + 1.0 - reg_inc_beta(1.0 - eps, s, 1.0 - s)
}

fn finish_persistence(
    p: PersistAcc<'_>,
    cert: Option<CertificateJson>,
    s: Option<f64>,
) -> Finished {
    let occupation: Vec<OccupationJson> = p
        .occupation
        .fractions()
        .into_iter()
        .map(|(eps, fraction)| OccupationJson {
            eps,
            fraction,
            oracle: s.map(|s| ext_oracle(eps, s)),
        })
        .collect();
    let drift = match drift_fit(&p.h_series, p.cfg.window) {
        Ok(d) => serde_json::json!({
            "alpha_hat": d.alpha_hat,
            "c_hat": d.c_hat,
            "points": d.points,
            "zero_variance": d.zero_variance,
            "contracting": d.contracting(),
        }),
        Err(e) => serde_json::json!({ "error": e.to_string() }),
    };
    let passed = cert.is_some();
    let rho = cert.as_ref().map_or(0.0, |c| c.rho);
    let center = vec![1.0 / p.p.len() as f64; p.p.len()];
    let report = serde_json::json!({
        "certificate": cert,
        "occupation": occupation,
        "occupation_samples": p.occupation.total,
        "drift": drift,
        "r": p.cfg.r,
        "h_cap": p.cfg.h_cap,
        "h_at_barycenter": lyapunov_h(&center, &p.p, p.cfg.r),
        "passed": passed,
    });
    (
        "persistence",
        TestOutcome {
            analysis: "persistence",
            passed,
            metric: rho,
            threshold: 0.0,
        },
        report,
    )
}

fn run_tn(r: &Resolved, tn: &TnTest, null: (f64, f64)) -> Result<Finished, CliError> {
    let samples = tracked_samples(
        tn.runs,
        tn.particles,
        &r.law,
        &r.params,
        &r.integrator,
        &tn.times,
        0,
    )
    .within("mean_field")?;
    let seed = r.config.run.seed;
    let cal = tn_null_calibration(tn.runs, null.0, null.1, tn.b, seed).within("stats")?;
    let mut levels = DEFAULT_LEVELS.to_vec();
    if !levels.iter().any(|l| (l - tn.level).abs() < 1e-12) {
        levels.push(tn.level);
    }
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut passed = true;
    let mut results = Vec::new();
    for (t, sample) in tn.times.iter().zip(&samples) {
        let stat = tn_statistic(sample, null.0, null.1).within("stats")?;
        let report = cal.report(stat, &levels);
        let rejected = report.rejects_at(tn.level).unwrap_or(true);
        passed &= !rejected;
        worst = worst.max(stat - cal.quantile(tn.level));
        results.push(serde_json::json!({ "t": t, "report": TestReportJson::from(&report) }));
    }
    let report = serde_json::json!({
        "null_beta": [(null.0), (null.1)],
        "runs": tn.runs,
        "particles": tn.particles,
        "level": tn.level,
        "passed": passed,
        "results": results,
    });
    Ok((
        "tn_test",
        TestOutcome {
            analysis: "tn_test",
            passed,
            // Largest `statistic - quantile`; negative means no rejection.
            metric: worst,
            threshold: 0.0,
        },
        report,
    ))
}

fn run_poc(r: &Resolved, p: &Poc, out: Option<&Path>) -> Result<Finished, CliError> {
    let settings = PocSettings {
        n_list: p.n_list.clone(),
        replications: p.m,
        t_end: p.t,
        n_ref: p.n_ref(),
        law: r.law.clone(),
        bootstrap: p.bootstrap,
    };
    let report = poc_experiment(&settings, &r.params, &r.integrator).within("mean_field")?;
    if let Some(dir) = out {
        output::write_file(&dir.join("reports").join("poc.csv"), &poc_csv(&report))?;
    }
    let [lo, hi] = p.slope_range;
    let passed = report.slope >= lo && report.slope <= hi;
    let mut value = serde_json::to_value(PocJson::from(&report)).expect("serializable");
    value["slope_range"] = serde_json::json!([lo, hi]);
    value["passed"] = Value::Bool(passed);
    Ok((
        "poc",
        TestOutcome {
            analysis: "poc",
            passed,
            metric: report.slope,
            threshold: hi,
        },
        value,
    ))
}
