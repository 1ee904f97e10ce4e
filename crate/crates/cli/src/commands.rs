use std::path::{Path, PathBuf};

use serde::Serialize;

use replicator_core::mckean_vlasov::{
    beta_s, dirichlet_fixed_point, solve_perturbation, DirichletParams,
};
use replicator_core::mean_field::{poc_experiment, Ensemble, InitLaw, PocSettings};
use replicator_core::persistence::{face_equilibria, find_p, Occupation};
use replicator_core::sde::{simulate_single_thinned, IntegratorConfig};
use replicator_core::simplex::{check_c2, InteractionSpec, ModelParams, SimplexPoint};
use replicator_core::stats::{ad_null_calibration, anderson_darling_with, tn_test, TestReport};

use crate::cli::{
    Cli, Command, FixedPointArgs, IntegrationArgs, Method, ModelArgs, PersistenceArgs, PerturbArgs,
    PocArgs, RunArgs, SimulateArgs, TestFitArgs,
};
use crate::config::{theory_s, ExperimentConfig, ModelConfig};
use crate::error::{CliError, Within, EXIT_CHECK, EXIT_OK};
use crate::output::{
    columns, csv, emit, json, key_values, num, occupation_csv, poc_csv, sci, test_report_csv,
    trajectory_csv, CertificateJson, FixedPointJson, Format, OccupationJson, PocJson,
    TestReportJson,
};
use crate::run::{execute, ext_oracle, plan};

/// Runs a parsed command line; returns the process exit status.
pub fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run(a) => run(&a),
        Command::Simulate(a) => simulate(&a),
        Command::FixedPoint(a) => fixed_point(&a),
        Command::Perturb(a) => perturb(&a),
        Command::TestFit(a) => test_fit(&a),
        Command::Poc(a) => poc(&a),
        Command::Persistence(a) => persistence(&a),
    }
}

fn run(a: &RunArgs) -> Result<i32, CliError> {
    let mut config = ExperimentConfig::load(&a.config)?;
    if let Some(seed) = a.common.seed {
        config.run.seed = seed;
    }
    let resolved = config.resolve()?;
    let out_dir = a
        .common
        .out
        .clone()
        .unwrap_or_else(|| default_out(&a.config));
    if a.dry_run {
        print!("{}", plan(&resolved, Some(&out_dir)));
        return Ok(EXIT_OK);
    }
    let outcome = execute(&resolved, Some(&out_dir))?;
    let s = &outcome.summary;
    let text = match a.common.format {
        Format::Json => json(s),
        Format::Csv => {
            let mut rows = vec![
                ("theoretical_s", opt(s.theoretical_s)),
                ("final_time", num(s.final_time)),
                ("final_mean_1", num(s.final_mean[0])),
                ("relative_error", opt(s.relative_error)),
            ];
            for t in &s.tests {
                rows.push((t.analysis, if t.passed { "pass" } else { "fail" }.into()));
            }
            key_values(&rows)
        }
    };
    emit(None, &text)?;
    Ok(if a.check && !s.passed {
        EXIT_CHECK
    } else {
        EXIT_OK
    })
}

fn default_out(config: &Path) -> PathBuf {
    let stem = config
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    PathBuf::from("out").join(stem)
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn parse_list(s: &str, what: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Config(format!("{what}: cannot parse {v:?}")))
        })
        .collect()
}

pub fn model_params(m: &ModelArgs) -> Result<ModelParams, CliError> {
    let payoff = match &m.payoff {
        Some(text) => Some(
            text.split(';')
                .map(|row| parse_list(row, "--payoff"))
                .collect::<Result<Vec<_>, _>>()?,
        ),
        None => None,
    };
    ModelConfig {
        preset: m.preset,
        payoff,
        sigma: m.sigma,
        delta: m.delta,
        ..ModelConfig::default()
    }
    .resolve()
}

fn init_law(text: &str) -> Result<InitLaw, CliError> {
    match text {
        "uic" => Ok(InitLaw::Uic),
        "lic" => Ok(InitLaw::Lic),
        other => match other.strip_prefix("beta:") {
            Some(rest) => match parse_list(rest, "--init")?[..] {
                [a, b] => Ok(InitLaw::BetaInit(a, b)),
                _ => Err(CliError::Config("--init beta:A,B needs two values".into())),
            },
            None => Err(CliError::Config(format!(
                "--init: expected uic, lic or beta:A,B, got {other:?}"
            ))),
        },
    }
}

fn integrator(i: &IntegrationArgs, seed: u64) -> Result<IntegratorConfig, CliError> {
    IntegratorConfig::new(i.h, i.scheme.into(), seed).map_err(|e| CliError::Config(e.to_string()))
}

fn simulate(a: &SimulateArgs) -> Result<i32, CliError> {
    let params = model_params(&a.model)?;
    let config = integrator(&a.integration, a.common.seed())?;
    let x0 =
        a.x0.as_deref()
            .map(|s| {
                parse_list(s, "--x0").and_then(|v| {
                    SimplexPoint::new(v).map_err(|e| CliError::Config(format!("--x0: {e}")))
                })
            })
            .transpose()?;
    if let Some(m) = &a.frozen_mean {
        let mean = parse_list(m, "--frozen-mean")?;
        let x0 = x0.unwrap_or_else(|| SimplexPoint::barycenter(params.dim()));
        let traj = simulate_single_thinned(&x0, &params, Some(&mean), a.t, &config, a.stride)
            .within("sde_engine")?;
        let text = match a.common.format {
            Format::Csv => trajectory_csv(&traj),
            Format::Json => json(&TrajectoryJson {
                t: traj.times.clone(),
                x: traj.states.iter().map(|x| x.coords().to_vec()).collect(),
            }),
        };
        emit(a.common.out.as_deref(), &text)?;
        return Ok(EXIT_OK);
    }
    let law = match x0 {
        Some(x) => InitLaw::Fixed(vec![x]),
        None => init_law(&a.integration.init)?,
    };
    let mut ensemble = Ensemble::new(a.particles, &law, params, config).within("mean_field")?;
    let d = ensemble.dim();
    let single = a.particles == 1;
    let mut times = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    ensemble
        .run(a.t, a.stride, |e| {
            times.push(e.time());
            rows.push(if single {
                e.particle(0).to_vec()
            } else {
                e.empirical_mean().to_vec()
            });
            Ok(())
        })
        .within("mean_field")?;
    let text = match a.common.format {
        Format::Csv => {
            let mut header = vec!["t".to_string()];
            header.extend(columns(if single { "x" } else { "mean_" }, d));
            csv(
                &header,
                times.iter().zip(&rows).map(|(t, row)| {
                    let mut r = vec![sci(*t)];
                    r.extend(row.iter().map(|v| sci(*v)));
                    r
                }),
            )
        }
        Format::Json if single => json(&TrajectoryJson { t: times, x: rows }),
        Format::Json => json(&MeansJson {
            t: times,
            mean: rows,
        }),
    };
    emit(a.common.out.as_deref(), &text)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct TrajectoryJson {
    t: Vec<f64>,
    x: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct MeansJson {
    t: Vec<f64>,
    mean: Vec<Vec<f64>>,
}

/// The fixed point of the mean-field map, plus `s` when it has a closed
/// form.
pub fn fixed_point_report(
    params: &ModelParams,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPointJson, CliError> {
    let s = if params.dim() == 2 {
        Some(beta_s(params).within("mckean_vlasov")?)
    } else {
        None
    };
    let mu0 = DirichletParams::new(vec![1.0; params.dim()]).within("mckean_vlasov")?;
    let report = dirichlet_fixed_point(params, &mu0, tol, max_iter).within("mckean_vlasov")?;
    Ok(FixedPointJson::new(s, &report))
}

fn fixed_point(a: &FixedPointArgs) -> Result<i32, CliError> {
    let params = model_params(&a.model)?;
    let r = fixed_point_report(&params, a.tol, a.max_iter)?;
    let text = match a.common.format {
        Format::Json => json(&r),
        Format::Csv => {
            let mut rows = vec![("s", opt(r.s))];
            let names: Vec<String> = columns("alpha_star_", r.alpha_star.len());
            for (k, v) in names.iter().zip(&r.alpha_star) {
                rows.push((k.as_str(), num(*v)));
            }
            rows.push(("iterations", r.iterations.to_string()));
            rows.push(("final_delta", num(r.final_delta)));
            rows.push(("converged", r.converged.to_string()));
            key_values(&rows)
        }
    };
    emit(a.common.out.as_deref(), &text)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
pub struct PerturbJson {
    pub delta_eff: f64,
    pub alpha: Vec<f64>,
    pub eps: Vec<f64>,
    pub alpha_hat: Vec<f64>,
}

pub fn perturb_report(params: &ModelParams, delta_eff: f64) -> Result<PerturbJson, CliError> {
    let InteractionSpec::MeanSkew(e) = &params.interaction else {
        return Err(CliError::Config(
            "perturb needs a mean-skew interaction".into(),
        ));
    };
    let eq = check_c2(&params.payoff, params.sigma).within("simplex_core")?;
    let (eps, hat) = solve_perturbation(&params.payoff, params.sigma, &eq.alpha, e, delta_eff)
        .within("mckean_vlasov")?;
    Ok(PerturbJson {
        delta_eff,
        alpha: eq.alpha.as_slice().to_vec(),
        eps,
        alpha_hat: hat.into_inner(),
    })
}

fn perturb(a: &PerturbArgs) -> Result<i32, CliError> {
    let params = model_params(&a.model)?;
    let r = perturb_report(&params, a.delta_eff)?;
    let text = match a.common.format {
        Format::Json => json(&r),
        Format::Csv => {
            let d = r.alpha.len();
            let mut header = vec!["type".to_string(), "alpha".into(), "alpha_hat".into()];
            header.push("eps".into());
            csv(
                &header,
                (0..d).map(|i| {
                    vec![
                        (i + 1).to_string(),
                        num(r.alpha[i]),
                        num(r.alpha_hat[i]),
                        r.eps.get(i).map(|v| num(*v)).unwrap_or_default(),
                    ]
                }),
            )
        }
    };
    emit(a.common.out.as_deref(), &text)?;
    Ok(EXIT_OK)
}

/// Reads one column of a CSV sample, skipping a header line.
pub fn read_sample(path: &Path, column: usize) -> Result<Vec<f64>, CliError> {
    if column == 0 {
        return Err(CliError::Config("--column counts from 1".into()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let field = line.split(',').nth(column - 1).ok_or_else(|| {
            CliError::Config(format!("{}:{}: no column {column}", path.display(), i + 1))
        })?;
        match field.trim().parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) if i == 0 => {}
            Err(_) => {
                return Err(CliError::Config(format!(
                    "{}:{}: not a number: {field:?}",
                    path.display(),
                    i + 1
                )))
            }
        }
    }
    if out.is_empty() {
        return Err(CliError::Config(format!(
            "{}: empty sample",
            path.display()
        )));
    }
    Ok(out)
}

pub fn test_fit_report(
    sample: &[f64],
    a: f64,
    b: f64,
    method: Method,
    b_reps: usize,
    seed: u64,
    levels: &[f64],
) -> Result<TestReport, CliError> {
    match method {
        Method::Tn => tn_test(sample, a, b, b_reps, seed, levels).within("stats"),
        Method::Ad => {
            let cal = ad_null_calibration(sample.len(), b_reps, seed).within("stats")?;
            anderson_darling_with(sample, a, b, &cal, levels).within("stats")
        }
    }
}

fn test_fit(a: &TestFitArgs) -> Result<i32, CliError> {
    let sample = read_sample(&a.input, a.column)?;
    let (pa, pb) = (a.null_beta[0], a.null_beta[1]);
    let report = test_fit_report(&sample, pa, pb, a.method, a.b, a.common.seed(), &a.levels)?;
    let text = match a.common.format {
        Format::Json => json(&TestReportJson::from(&report)),
        Format::Csv => test_report_csv(&report),
    };
    emit(a.common.out.as_deref(), &text)?;
    Ok(EXIT_OK)
}

fn poc(a: &PocArgs) -> Result<i32, CliError> {
    let params = model_params(&a.model)?;
    let config = integrator(&a.integration, a.common.seed())?;
    let max = a.n_list.iter().copied().max().unwrap_or(0);
    let settings = PocSettings {
        n_list: a.n_list.clone(),
        replications: a.m,
        t_end: a.t,
        n_ref: a
            .n_ref
            .unwrap_or((10 * max).max(replicator_core::mean_field::DEFAULT_N_REF)),
        law: init_law(&a.integration.init)?,
        bootstrap: a.bootstrap,
    };
    let report = poc_experiment(&settings, &params, &config).within("mean_field")?;
    let text = match a.common.format {
        Format::Json => json(&PocJson::from(&report)),
        Format::Csv => poc_csv(&report),
    };
    emit(a.common.out.as_deref(), &text)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct PersistenceJson {
    certificate: Option<CertificateJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    occupation: Option<Vec<OccupationJson>>,
}

fn persistence(a: &PersistenceArgs) -> Result<i32, CliError> {
    let params = model_params(&a.model)?;
    let eq = face_equilibria(&params.payoff, params.sigma).within("persistence")?;
    let cert = find_p(&eq).within("persistence")?;
    let occupation = if a.eps.is_empty() {
        None
    } else {
        if a.eps.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
            return Err(CliError::Config("--eps values must lie in (0, 1]".into()));
        }
        let config = integrator(&a.integration, a.common.seed())?;
        let law = init_law(&a.integration.init)?;
        let s = theory_s(&params);
        let k_min = (a.t_min / config.h - 1e-9).ceil().max(0.0) as u64;
        let every = a.every.max(1);
        let mut occ = Occupation::new(&a.eps);
        let mut ensemble =
            Ensemble::new(a.particles, &law, params.clone(), config).within("mean_field")?;
        let steps = config.steps_for(a.t).within("sde_engine")?;
        for k in 1..=steps {
            ensemble.step().within("mean_field")?;
            if k >= k_min && k % every == 0 {
                for i in 0..ensemble.len() {
                    occ.record(ensemble.particle(i));
                }
            }
        }
        if occ.total == 0 {
            return Err(CliError::Config(
                "--t-min leaves no recorded frames before --t".into(),
            ));
        }
        Some(
            occ.fractions()
                .into_iter()
                .map(|(eps, fraction)| OccupationJson {
                    eps,
                    fraction,
                    oracle: s.map(|s| ext_oracle(eps, s)),
                })
                .collect::<Vec<_>>(),
        )
    };
    let cert = cert.as_ref().map(CertificateJson::from);
    let text = match a.common.format {
        Format::Json => json(&PersistenceJson {
            certificate: cert,
            occupation,
        }),
        Format::Csv => match (&occupation, &cert) {
            (Some(rows), _) => occupation_csv(rows),
            (None, Some(c)) => {
                let mut header = columns("p_", c.p.len());
                header.push("rho".into());
                let mut row: Vec<String> = c.p.iter().map(|v| num(*v)).collect();
                row.push(num(c.rho));
                csv(&header, [row])
            }
            (None, None) => "p,rho\n".to_string(),
        },
    };
    emit(a.common.out.as_deref(), &text)?;
    Ok(EXIT_OK)
}
