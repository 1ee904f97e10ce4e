//! CSV/JSON rendering and artifact files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use replicator_core::mckean_vlasov::FixedPointReport;
use replicator_core::mean_field::{EmpiricalSnapshot, PocReport};
use replicator_core::persistence::PersistenceCertificate;
use replicator_core::sde::Trajectory;
use replicator_core::stats::{Calibration, TestReport};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// 17 significant digits.
pub fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

/// Plain decimal for moderate magnitudes, exponent form otherwise.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-4..1e15).contains(&a) {
        v.to_string()
    } else {
        format!("{v:e}")
    }
}

/// A time as used in file names: at most six decimals, trailing zeros cut.
pub fn time_label(t: f64) -> String {
    let s = format!("{t:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// `0.9 -> "0.90"`, `0.995 -> "0.995"`.
pub fn level_key(level: f64) -> String {
    let s = format!("{level}");
    match s.split_once('.') {
        Some((_, frac)) if frac.len() >= 2 => s,
        Some(_) => format!("{level:.2}"),
        None => format!("{level:.2}"),
    }
}

pub fn json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn csv<I>(header: &[String], rows: I) -> String
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut s = header.join(",");
    s.push('\n');
    for row in rows {
        s.push_str(&row.join(","));
        s.push('\n');
    }
    s
}

pub fn columns(prefix: &str, d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("{prefix}{i}")).collect()
}

pub fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Writes to `out`, or to stdout when `out` is `None`.
pub fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}

pub fn trajectory_csv(traj: &Trajectory) -> String {
    let d = traj.states.first().map_or(0, |x| x.dim());
    let mut header = vec!["t".to_string()];
    header.extend(columns("x", d));
    csv(
        &header,
        traj.times.iter().zip(&traj.states).map(|(t, x)| {
            let mut row = vec![sci(*t)];
            row.extend(x.coords().iter().map(|v| sci(*v)));
            row
        }),
    )
}

/// `t,mean_1,...,mean_d`
pub fn means_csv(snapshots: &[EmpiricalSnapshot]) -> String {
    let d = snapshots.first().map_or(0, |s| s.mean.len());
    let mut header = vec!["t".to_string()];
    header.extend(columns("mean_", d));
    csv(&header, snapshots.iter().map(means_row))
}

pub fn means_row(s: &EmpiricalSnapshot) -> Vec<String> {
    let mut row = vec![sci(s.time)];
    row.extend(s.mean.iter().map(|v| sci(*v)));
    row
}

/// `bin_lo,bin_hi,count`
pub fn histogram_csv(s: &EmpiricalSnapshot) -> String {
    let h = &s.histogram;
    csv(
        &["bin_lo".into(), "bin_hi".into(), "count".into()],
        (0..h.bins()).map(|b| {
            let (lo, hi) = h.edges(b);
            vec![lo.to_string(), hi.to_string(), h.counts[b].to_string()]
        }),
    )
}

/// One row per particle, `x1,...,xd`.
pub fn sample_csv(s: &EmpiricalSnapshot) -> Option<String> {
    let sample = s.sample.as_ref()?;
    let d = sample.first().map_or(0, |x| x.dim());
    Some(csv(
        &columns("x", d),
        sample
            .iter()
            .map(|x| x.coords().iter().map(|v| sci(*v)).collect()),
    ))
}

#[derive(Debug, Clone, Serialize)]
pub struct TestReportJson {
    pub method: &'static str,
    pub statistic: f64,
    pub n: usize,
    pub quantiles: BTreeMap<String, f64>,
    pub reject: BTreeMap<String, bool>,
    pub p_value: f64,
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
}

impl From<&TestReport> for TestReportJson {
    fn from(r: &TestReport) -> Self {
        let Calibration::MonteCarlo { b } = r.calibration;
        Self {
            method: r.method.name(),
            statistic: r.statistic,
            n: r.n,
            quantiles: r
                .quantiles
                .iter()
                .map(|(l, q)| (level_key(*l), *q))
                .collect(),
            reject: r.reject.iter().map(|(l, x)| (level_key(*l), *x)).collect(),
            p_value: r.p_value,
            b,
            seed: r.seed,
        }
    }
}

pub fn test_report_csv(r: &TestReport) -> String {
    let rows = r.quantiles.iter().zip(&r.reject).map(|((l, q), (_, rej))| {
        vec![
            r.method.name().to_string(),
            num(r.statistic),
            r.n.to_string(),
            level_key(*l),
            num(*q),
            rej.to_string(),
            num(r.p_value),
        ]
    });
    let header: Vec<String> = [
        "method",
        "statistic",
        "n",
        "level",
        "quantile",
        "reject",
        "p_value",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    csv(&header, rows)
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPointJson {
    /// `s` from the closed form, for two-type models.
    pub s: Option<f64>,
    pub alpha_star: Vec<f64>,
    pub iterations: usize,
    pub final_delta: f64,
    pub converged: bool,
    pub contraction_factor: Option<f64>,
}

impl FixedPointJson {
    pub fn new(s: Option<f64>, r: &FixedPointReport) -> Self {
        Self {
            s,
            alpha_star: r.alpha_star.as_slice().to_vec(),
            iterations: r.iterations,
            final_delta: r.final_delta,
            converged: r.converged,
            contraction_factor: r.contraction_factor,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumJson {
    /// Types present, counted from 1.
    pub support: Vec<usize>,
    pub point: Vec<f64>,
    /// Invasion rate of every type; zero on the support.
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CertificateJson {
    pub p: Vec<f64>,
    pub rho: f64,
    pub equilibria: Vec<EquilibriumJson>,
    /// Only point masses at equilibria were checked; for three or more
    /// types other boundary invariant measures may exist.
    pub point_masses_only: bool,
}

impl From<&PersistenceCertificate> for CertificateJson {
    fn from(c: &PersistenceCertificate) -> Self {
        Self {
            p: c.p.clone(),
            rho: c.rho,
            equilibria: c
                .equilibria
                .iter()
                .map(|e| EquilibriumJson {
                    support: e.support.iter().map(|i| i + 1).collect(),
                    point: e.point.coords().to_vec(),
                    rates: e.rates.clone(),
                })
                .collect(),
            point_masses_only: c.p.len() >= 3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OccupationJson {
    pub eps: f64,
    pub fraction: f64,
    /// `P(X1 < eps) + P(X1 > 1 - eps)` under the stationary Beta law.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<f64>,
}

pub fn occupation_csv(rows: &[OccupationJson]) -> String {
    csv(
        &["eps".into(), "fraction".into()],
        rows.iter().map(|r| vec![num(r.eps), num(r.fraction)]),
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct PocRowJson {
    pub n: usize,
    pub replications: usize,
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PocJson {
    pub n_ref: usize,
    pub slope: f64,
    pub intercept: f64,
    pub slope_ci: [f64; 2],
    pub rows: Vec<PocRowJson>,
}

impl From<&PocReport> for PocJson {
    fn from(r: &PocReport) -> Self {
        Self {
            n_ref: r.n_ref,
            slope: r.slope,
            intercept: r.intercept,
            slope_ci: [r.slope_ci.0, r.slope_ci.1],
            rows: r
                .rows
                .iter()
                .map(|row| PocRowJson {
                    n: row.n,
                    replications: row.replications,
                    mean: row.mean,
                    std_error: row.std_error,
                })
                .collect(),
        }
    }
}

/// `n,replications,mean,std_error`
pub fn poc_csv(r: &PocReport) -> String {
    csv(
        &[
            "n".into(),
            "replications".into(),
            "mean".into(),
            "std_error".into(),
        ],
        r.rows.iter().map(|row| {
            vec![
                row.n.to_string(),
                row.replications.to_string(),
                num(row.mean),
                num(row.std_error),
            ]
        }),
    )
}

/// `key,value` lines.
pub fn key_values(pairs: &[(&str, String)]) -> String {
    let mut s = String::from("key,value\n");
    for (k, v) in pairs {
        let _ = writeln!(s, "{k},{v}");
    }
    s
}
