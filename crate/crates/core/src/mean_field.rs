//! The N-particle interacting replicator system and the coupled
//! propagation-of-chaos experiment.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use core::sync::atomic::{AtomicUsize, Ordering};

use crate::math::{ln, sqrt};
use crate::par::{for_each_indexed, map_indices};
use crate::rng::{Domain, Stream, StreamKey};
use crate::sde::{
    em_step_in_place, log_abundance_of, log_step_in_place, IntegratorConfig, Interaction, Scheme,
    Workspace,
};
use crate::simplex::{effective_payoff, InteractionSpec, ModelParams, SimplexPoint};
use crate::stats::{sample_beta, sample_dirichlet};
use crate::{Error, Result};

pub const HISTOGRAM_BINS: usize = 100;
pub const DEFAULT_N_REF: usize = 100_000;

/// Initial law of the particles.
#[derive(Debug, Clone, PartialEq)]
pub enum InitLaw {
    /// `x₁ ~ Uniform(0, 1)` for `d = 2`; uniform on the simplex otherwise.
    Uic,
    /// `x₁ ~ Uniform(0.2, 0.4)`; `d = 2` only.
    Lic,
    /// One point shared by all particles, or one point per particle.
    Fixed(Vec<SimplexPoint>),
    /// `x₁ ~ Beta(a, b)`; `d = 2` only.
    BetaInit(f64, f64),
}

impl InitLaw {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Uic => "UIC",
            Self::Lic => "LIC",
            Self::Fixed(_) => "fixed",
            Self::BetaInit(..) => "beta",
        }
    }

    fn validate(&self, n: usize, d: usize) -> Result<()> {
        match self {
            Self::Lic | Self::BetaInit(..) if d != 2 => Err(Error::InvalidParameter(format!(
                "{} initial law needs d = 2",
                self.name()
            ))),
            Self::BetaInit(a, b) if !(*a > 0.0 && *b > 0.0) => Err(Error::InvalidParameter(
                "Beta initial law needs positive parameters".into(),
            )),
            Self::Fixed(points) => {
                if points.len() != 1 && points.len() != n {
                    return Err(Error::InvalidParameter(format!(
                        "fixed initial law needs 1 or {n} points, got {}",
                        points.len()
                    )));
                }
                match points.iter().find(|p| p.dim() != d) {
                    Some(p) => Err(Error::DimensionMismatch {
                        expected: d,
                        actual: p.dim(),
                    }),
                    None => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }

    fn draw(&self, i: usize, d: usize, stream: &mut Stream) -> SimplexPoint {
        let binary = |x1: f64| SimplexPoint::from_raw(vec![x1, 1.0 - x1]);
        match self {
            Self::Uic if d == 2 => binary(stream.uniform_open()),
            Self::Uic => sample_dirichlet(&vec![1.0; d], stream),
            Self::Lic => binary(0.2 + 0.2 * stream.uniform_open()),
            Self::BetaInit(a, b) => binary(sample_beta(*a, *b, stream)),
            Self::Fixed(points) => points[if points.len() == 1 { 0 } else { i }].clone(),
        }
    }
}

#[derive(Debug, Clone)]
struct Particle {
    x: Vec<f64>,
    /// Log-abundances, used only by the log scheme.
    y: Vec<f64>,
    stream: Stream,
    ws: Workspace,
    /// Frozen-mean copy driven by the same noise (coupled runs only) and the
    /// running maximum of its squared distance to `x`.
    shadow: Vec<f64>,
    sup_sq: f64,
}

/// N interacting replicators, each with its own noise stream.
#[derive(Debug, Clone)]
pub struct Ensemble {
    particles: Vec<Particle>,
    step_index: u64,
    params: ModelParams,
    config: IntegratorConfig,
    mean: Vec<f64>,
}

impl Ensemble {
    /// Draws `n` initial points from `law`. Streams are keyed by the
    /// configured seed and the particle index.
    pub fn new(
        n: usize,
        law: &InitLaw,
        params: ModelParams,
        config: IntegratorConfig,
    ) -> Result<Self> {
        Self::keyed(
            n,
            law,
            params,
            config,
            Domain::Ensemble,
            Domain::Initialization,
            0,
        )
    }

    fn keyed(
        n: usize,
        law: &InitLaw,
        params: ModelParams,
        config: IntegratorConfig,
        step_domain: Domain,
        init_domain: Domain,
        subkey: u64,
    ) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter(
                "ensemble needs at least one particle".into(),
            ));
        }
        let d = params.dim();
        law.validate(n, d)?;
        let seed = config.seed;
        let states = map_indices(n, |i| {
            let mut s = StreamKey::new(seed, init_domain)
                .subkey(subkey)
                .index(i as u64)
                .stream();
            law.draw(i, d, &mut s)
        });
        let streams = (0..n)
            .map(|i| {
                StreamKey::new(seed, step_domain)
                    .subkey(subkey)
                    .index(i as u64)
                    .stream()
            })
            .collect();
        Self::assemble(states, streams, params, config)
    }

    /// Independent replicate `replicate` of [`Ensemble::new`]: same law and
    /// parameters, disjoint noise and initialization streams.
    pub fn replicate(
        n: usize,
        law: &InitLaw,
        params: ModelParams,
        config: IntegratorConfig,
        replicate: u64,
    ) -> Result<Self> {
        Self::keyed(
            n,
            law,
            params,
            config,
            Domain::Ensemble,
            Domain::Initialization,
            replicate + 1,
        )
    }

    /// Builds an ensemble from explicit states; particle `k` draws its noise
    /// from the stream with id `stream_ids[k]`.
    pub fn from_states(
        states: Vec<SimplexPoint>,
        stream_ids: &[u64],
        params: ModelParams,
        config: IntegratorConfig,
    ) -> Result<Self> {
        if states.len() != stream_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: states.len(),
                actual: stream_ids.len(),
            });
        }
        let streams = stream_ids
            .iter()
            .map(|&id| {
                StreamKey::new(config.seed, Domain::Ensemble)
                    .index(id)
                    .stream()
            })
            .collect();
        Self::assemble(states, streams, params, config)
    }

    fn assemble(
        states: Vec<SimplexPoint>,
        streams: Vec<Stream>,
        params: ModelParams,
        config: IntegratorConfig,
    ) -> Result<Self> {
        let config = config.validated()?;
        let d = params.dim();
        if states.is_empty() {
            return Err(Error::InvalidParameter(
                "ensemble needs at least one particle".into(),
            ));
        }
        let log_scheme = config.scheme == Scheme::LogAbundanceEM;
        let mut particles = Vec::with_capacity(states.len());
        for (x, stream) in states.into_iter().zip(streams) {
            if x.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: x.dim(),
                });
            }
            if log_scheme && !x.is_interior() {
                return Err(Error::InvalidSimplexPoint(
                    "log-abundance scheme needs interior starting points".into(),
                ));
            }
            let y = if log_scheme {
                log_abundance_of(&x)
            } else {
                Vec::new()
            };
            particles.push(Particle {
                x: x.into_inner(),
                y,
                stream,
                ws: Workspace::new(d),
                shadow: Vec::new(),
                sup_sq: 0.0,
            });
        }
        let mut e = Self {
            particles,
            step_index: 0,
            params,
            config,
            mean: vec![0.0; d],
        };
        e.refresh_mean();
        Ok(e)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    pub fn time(&self) -> f64 {
        self.step_index as f64 * self.config.h
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.config
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.particles[i].x
    }

    pub fn particles(&self) -> Vec<SimplexPoint> {
        self.particles
            .iter()
            .map(|p| SimplexPoint::from_raw(p.x.clone()))
            .collect()
    }

    /// Coordinate `k` of every particle.
    pub fn coordinate(&self, k: usize) -> Vec<f64> {
        self.particles.iter().map(|p| p.x[k]).collect()
    }

    /// The empirical mean, summed in particle order.
    pub fn empirical_mean(&self) -> &[f64] {
        &self.mean
    }

    fn refresh_mean(&mut self) {
        let d = self.dim();
        let mut acc = vec![0.0; d];
        for p in &self.particles {
            for (a, v) in acc.iter_mut().zip(&p.x) {
                *a += v;
            }
        }
        let n = self.particles.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        self.mean = acc;
    }

    /// Advances every particle by one step.
    pub fn step(&mut self) -> Result<()> {
        let step = self.step_index + 1;
        let h = self.config.h;
        let sd = sqrt(h);
        let d = self.dim();
        let params = &self.params;
        let config = &self.config;
        let averaged: Option<Vec<Vec<f64>>> = match (&params.interaction, params.delta > 0.0) {
            (InteractionSpec::PairwiseKernel(k), true) => {
                let snapshot: Vec<&[f64]> = self.particles.iter().map(|p| p.x.as_slice()).collect();
                let n = snapshot.len() as f64;
                Some(map_indices(snapshot.len(), |i| {
                    let mut acc = vec![0.0; d];
                    let mut buf = vec![0.0; d];
                    for xj in &snapshot {
                        k.eval(snapshot[i], xj, &mut buf);
                        acc.iter_mut().zip(&buf).for_each(|(a, b)| *a += b);
                    }
                    acc.iter_mut().for_each(|a| *a /= n);
                    acc
                }))
            }
            _ => None,
        };
        let effective = match &params.interaction {
            InteractionSpec::MeanSkew(_) => Some(effective_payoff(params, &self.mean)?),
            InteractionSpec::PairwiseKernel(_) => None,
        };
        let mean = &self.mean;
        let failure = first_failure(&mut self.particles, |i, p| {
            let interaction = match (&averaged, &effective) {
                (Some(u), _) => Interaction::Averaged(&u[i]),
                (None, Some(m)) => Interaction::Effective(m),
                (None, None) => Interaction::Mean(mean),
            };
            p.stream.fill_scaled_normal(sd, &mut p.ws.dw);
            let stepped = match config.scheme {
                Scheme::DirectEM => em_step_in_place(
                    &mut p.x,
                    params,
                    interaction,
                    h,
                    &config.boundary,
                    &mut p.ws,
                ),
                Scheme::LogAbundanceEM => {
                    log_step_in_place(&mut p.y, &mut p.x, params, interaction, h, &mut p.ws)
                }
            };
            // Every interaction form receives a matching input, so only
            // non-finite states can fail.
            stepped.unwrap_or(false)
        });
        if let Some(particle) = failure {
            return Err(Error::IntegratorBlowup { step, particle });
        }
        self.step_index = step;
        self.refresh_mean();
        Ok(())
    }

    pub fn snapshot(&self, keep_sample: bool) -> EmpiricalSnapshot {
        let first = self.coordinate(0);
        EmpiricalSnapshot {
            time: self.time(),
            step: self.step_index,
            mean: self.mean.clone(),
            histogram: Histogram::unit(&first, HISTOGRAM_BINS),
            sample: keep_sample.then(|| self.particles()),
        }
    }

    /// Runs to `t_end`, calling `observer` on the initial state and after
    /// every `stride` steps (and the final step).
    pub fn run<F>(&mut self, t_end: f64, stride: u64, mut observer: F) -> Result<()>
    where
        F: FnMut(&Ensemble) -> Result<()>,
    {
        let steps = self.config.steps_for(t_end)?;
        let stride = stride.max(1);
        observer(self)?;
        for k in 1..=steps {
            self.step()?;
            if k % stride == 0 || k == steps {
                observer(self)?;
            }
        }
        Ok(())
    }
}

/// Runs `f` on every particle; returns the lowest index where `f` reported
/// a non-finite state.
fn first_failure<F>(particles: &mut [Particle], f: F) -> Option<usize>
where
    F: Fn(usize, &mut Particle) -> bool + Sync + Send,
{
    let failed = AtomicUsize::new(usize::MAX);
    for_each_indexed(particles, |i, p| {
        if !f(i, p) {
            failed.fetch_min(i, Ordering::Relaxed);
        }
    });
    Some(failed.into_inner()).filter(|&i| i != usize::MAX)
}

/// Equal-width bin counts on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn unit(values: &[f64], bins: usize) -> Self {
        let mut counts = vec![0u64; bins];
        for &v in values {
            let b = ((v * bins as f64) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Self { counts }
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn edges(&self, b: usize) -> (f64, f64) {
        let w = 1.0 / self.bins() as f64;
        (b as f64 * w, (b + 1) as f64 * w)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// The empirical measure at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalSnapshot {
    pub time: f64,
    pub step: u64,
    pub mean: Vec<f64>,
    /// Histogram of the first coordinate.
    pub histogram: Histogram,
    pub sample: Option<Vec<SimplexPoint>>,
}

/// Simulates `n` particles to `t_end`, recording a snapshot every `stride`
/// steps.
pub fn simulate_ensemble(
    n: usize,
    law: &InitLaw,
    params: &ModelParams,
    t_end: f64,
    config: &IntegratorConfig,
    stride: u64,
    keep_samples: bool,
) -> Result<Vec<EmpiricalSnapshot>> {
    let mut ensemble = Ensemble::new(n, law, params.clone(), *config)?;
    let mut out = Vec::new();
    ensemble.run(t_end, stride, |e| {
        out.push(e.snapshot(keep_samples));
        Ok(())
    })?;
    Ok(out)
}

/// Runs `runs` independent ensembles of `n` particles and records
/// coordinate `coord` of particle 0 at each of `times`. Returns one sample
/// (over runs) per requested time.
pub fn tracked_samples(
    runs: usize,
    n: usize,
    law: &InitLaw,
    params: &ModelParams,
    config: &IntegratorConfig,
    times: &[f64],
    coord: usize,
) -> Result<Vec<Vec<f64>>> {
    if times.is_empty() || runs == 0 {
        return Err(Error::InvalidParameter(
            "need at least one run and one time".into(),
        ));
    }
    if coord >= params.dim() {
        return Err(Error::DimensionMismatch {
            expected: params.dim(),
            actual: coord + 1,
        });
    }
    let steps: Vec<u64> = times
        .iter()
        .map(|&t| crate::math::round(t / config.h) as u64)
        .collect();
    let last = *steps.iter().max().expect("nonempty");
    let per_run = map_indices(runs, |r| -> Result<Vec<f64>> {
        let mut e = Ensemble::replicate(n, law, params.clone(), *config, r as u64)?;
        let mut out = vec![0.0; steps.len()];
        for k in 0..=last {
            if k > 0 {
                e.step()?;
            }
            for (o, &s) in out.iter_mut().zip(&steps) {
                if s == k {
                    *o = e.particle(0)[coord];
                }
            }
        }
        Ok(out)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok((0..steps.len())
        .map(|j| per_run.iter().map(|row| row[j]).collect())
        .collect())
}

/// A mean curve on a uniform time grid, linearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanCurve {
    pub dt: f64,
    pub values: Vec<Vec<f64>>,
}

impl MeanCurve {
    pub fn at(&self, t: f64) -> Vec<f64> {
        let last = self.values.len() - 1;
        let u = (t / self.dt).max(0.0);
        let k = (u as usize).min(last);
        if k == last {
            return self.values[last].clone();
        }
        let w = u - k as f64;
        self.values[k]
            .iter()
            .zip(&self.values[k + 1])
            .map(|(a, b)| a + w * (b - a))
            .collect()
    }

    /// The stored value at grid step `k`.
    pub fn at_step(&self, k: usize) -> &[f64] {
        &self.values[k.min(self.values.len() - 1)]
    }
}

/// Estimates the limiting mean curve from an independent run of size
/// `n_ref`, recorded at every step.
pub fn reference_mean_curve(
    n_ref: usize,
    law: &InitLaw,
    params: &ModelParams,
    t_end: f64,
    config: &IntegratorConfig,
) -> Result<MeanCurve> {
    let mut e = Ensemble::keyed(
        n_ref,
        law,
        params.clone(),
        *config,
        Domain::Reference,
        Domain::Reference,
        u64::MAX,
    )?;
    let mut values = Vec::new();
    e.run(t_end, 1, |e| {
        values.push(e.empirical_mean().to_vec());
        Ok(())
    })?;
    Ok(MeanCurve {
        dt: config.h,
        values,
    })
}

/// `(1/N) Σᵢ sup_t ‖X⁽ⁱ⁾_t − Ξ⁽ⁱ⁾_t‖²` for one coupled replication: the
/// interacting ensemble and frozen-curve copies share initial points and
/// Brownian increments.
pub fn coupled_sup_error(
    n: usize,
    law: &InitLaw,
    params: &ModelParams,
    t_end: f64,
    config: &IntegratorConfig,
    curve: &MeanCurve,
    subkey: u64,
) -> Result<f64> {
    if config.scheme != Scheme::DirectEM {
        return Err(Error::InvalidParameter(
            "the coupled experiment uses the direct scheme".into(),
        ));
    }
    let mut e = Ensemble::keyed(
        n,
        law,
        params.clone(),
        *config,
        Domain::Coupling,
        Domain::Initialization,
        subkey,
    )?;
    let steps = config.steps_for(t_end)?;
    if curve.values.len() < steps as usize + 1 {
        return Err(Error::InvalidParameter(
            "mean curve is shorter than the horizon".into(),
        ));
    }
    for p in e.particles.iter_mut() {
        p.shadow = p.x.clone();
    }
    let h = config.h;
    let sd = sqrt(h);
    let boundary = config.boundary;
    for k in 0..steps {
        let interacting = effective_payoff(params, &e.mean)?;
        let frozen = effective_payoff(params, curve.at_step(k as usize))?;
        let step = k + 1;
        let failure = first_failure(&mut e.particles, |_, p| {
            p.stream.fill_scaled_normal(sd, &mut p.ws.dw);
            let ok_x = em_step_in_place(
                &mut p.x,
                params,
                Interaction::Effective(&interacting),
                h,
                &boundary,
                &mut p.ws,
            );
            let ok_c = em_step_in_place(
                &mut p.shadow,
                params,
                Interaction::Effective(&frozen),
                h,
                &boundary,
                &mut p.ws,
            );
            let dist: f64 =
                p.x.iter()
                    .zip(&p.shadow)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum();
            p.sup_sq = p.sup_sq.max(dist);
            ok_x.unwrap_or(false) && ok_c.unwrap_or(false)
        });
        if let Some(particle) = failure {
            return Err(Error::IntegratorBlowup { step, particle });
        }
        e.step_index = step;
        e.refresh_mean();
    }
    Ok(e.particles.iter().map(|p| p.sup_sq).sum::<f64>() / n as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PocRow {
    pub n: usize,
    pub replications: usize,
    pub mean: f64,
    pub std_error: f64,
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PocReport {
    pub rows: Vec<PocRow>,
    pub n_ref: usize,
    /// Least-squares slope of `ln(mean error)` against `ln N`.
    pub slope: f64,
    pub intercept: f64,
    /// 95% percentile bootstrap interval for the slope, resampling
    /// replications within each `N`.
    pub slope_ci: (f64, f64),
}

/// Options of the propagation-of-chaos experiment.
#[derive(Debug, Clone)]
pub struct PocSettings {
    pub n_list: Vec<usize>,
    pub replications: usize,
    pub t_end: f64,
    pub n_ref: usize,
    pub law: InitLaw,
    pub bootstrap: usize,
}

pub fn poc_experiment(
    settings: &PocSettings,
    params: &ModelParams,
    config: &IntegratorConfig,
) -> Result<PocReport> {
    let n_list = &settings.n_list;
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) || n_list[0] == 0 {
        return Err(Error::InvalidParameter(
            "N values must be positive and strictly increasing".into(),
        ));
    }
    let max_n = *n_list.last().unwrap();
    if settings.n_ref < 10 * max_n {
        return Err(Error::InvalidParameter(format!(
            "reference size {} must be at least 10 x {max_n}",
            settings.n_ref
        )));
    }
    if settings.replications < 2 {
        return Err(Error::InvalidParameter(
            "need at least two replications".into(),
        ));
    }
    let curve = reference_mean_curve(
        settings.n_ref,
        &settings.law,
        params,
        settings.t_end,
        config,
    )?;
    let m = settings.replications;
    let mut rows = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let samples = map_indices(m, |r| {
            let subkey = ((n as u64) << 32) | r as u64;
            coupled_sup_error(
                n,
                &settings.law,
                params,
                settings.t_end,
                config,
                &curve,
                subkey,
            )
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
        let (mean, std_error) = mean_se(&samples);
        rows.push(PocRow {
            n,
            replications: m,
            mean,
            std_error,
            samples,
        });
    }
    let (slope, intercept) = fit_rows(&rows, |row| row.mean)?;
    let slope_ci = bootstrap_slope(&rows, settings.bootstrap, config.seed)?;
    Ok(PocReport {
        rows,
        n_ref: settings.n_ref,
        slope,
        intercept,
        slope_ci,
    })
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, sqrt(var / n))
}

/// Ordinary least squares `y = a + b x`; returns `(b, a)`.
pub fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let b = sxy / sxx;
    (b, my - b * mx)
}

fn fit_rows<F: Fn(&PocRow) -> f64>(rows: &[PocRow], value: F) -> Result<(f64, f64)> {
    if rows.len() < 2 {
        return Err(Error::InsufficientData(
            "slope needs at least two N values".into(),
        ));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for r in rows {
        let v = value(r);
        if !(v > 0.0) {
            return Err(Error::InsufficientData(format!(
                "mean error at N = {} is not positive",
                r.n
            )));
        }
        xs.push(ln(r.n as f64));
        ys.push(ln(v));
    }
    Ok(fit_line(&xs, &ys))
}

fn bootstrap_slope(rows: &[PocRow], b: usize, seed: u64) -> Result<(f64, f64)> {
    if b == 0 || rows.len() < 2 {
        return Ok((f64::NAN, f64::NAN));
    }
    let mut slopes: Vec<f64> = map_indices(b, |k| {
        let mut s = StreamKey::new(seed, Domain::Bootstrap)
            .subkey(0x706f63)
            .index(k as u64)
            .stream();
        let xs: Vec<f64> = rows.iter().map(|r| ln(r.n as f64)).collect();
        let ys: Vec<f64> = rows
            .iter()
            .map(|r| {
                let m = r.samples.len();
                let mean = (0..m).map(|_| r.samples[s.index_below(m)]).sum::<f64>() / m as f64;
                ln(mean)
            })
            .collect();
        fit_line(&xs, &ys).0
    })
    .into_iter()
    .filter(|v| v.is_finite())
    .collect();
    if slopes.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    slopes.sort_by(f64::total_cmp);
    Ok((
        crate::stats::quantile_sorted(&slopes, 0.025),
        crate::stats::quantile_sorted(&slopes, 0.975),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::{LinearSkewKernel, SkewMatrix};
    use alloc::sync::Arc;

    fn cfg(seed: u64) -> IntegratorConfig {
        IntegratorConfig {
            seed,
            ..Default::default()
        }
    }

    #[test]
    fn empirical_mean_examples() {
        let p = ModelParams::ps1();
        let e = Ensemble::new(
            3,
            &InitLaw::Fixed(vec![SimplexPoint::vertex(2, 0)]),
            p.clone(),
            cfg(0),
        )
        .unwrap();
        assert_eq!(e.empirical_mean(), &[1.0, 0.0]);
        let pts = vec![SimplexPoint::vertex(2, 0), SimplexPoint::vertex(2, 1)];
        let e = Ensemble::new(2, &InitLaw::Fixed(pts), p, cfg(0)).unwrap();
        assert_eq!(e.empirical_mean(), &[0.5, 0.5]);
    }

    #[test]
    fn init_laws() {
        let p = ModelParams::ps1();
        let e = Ensemble::new(2000, &InitLaw::Lic, p.clone(), cfg(3)).unwrap();
        assert!(e.coordinate(0).iter().all(|&v| (0.2..=0.4).contains(&v)));
        assert!((e.empirical_mean()[0] - 0.3).abs() < 0.01);
        let e = Ensemble::new(2000, &InitLaw::Uic, p.clone(), cfg(3)).unwrap();
        assert!((e.empirical_mean()[0] - 0.5).abs() < 0.03);
        assert!(Ensemble::new(
            3,
            &InitLaw::Fixed(vec![SimplexPoint::barycenter(2); 2]),
            p,
            cfg(0)
        )
        .is_err());
    }

    #[test]
    fn single_particle_matches_single_path() {
        let p = ModelParams::ps1().with_delta(0.0).unwrap();
        let x0 = SimplexPoint::new(vec![0.3, 0.7]).unwrap();
        let c = cfg(11);
        let mut e = Ensemble::new(1, &InitLaw::Fixed(vec![x0.clone()]), p.clone(), c).unwrap();
        for _ in 0..50 {
            e.step().unwrap();
        }
        let path = crate::sde::simulate_single(&x0, &p, None, 0.5, &c).unwrap();
        assert_eq!(e.particle(0), path.last().unwrap().coords());
    }

    #[test]
    fn relabeling_commutes_with_stepping() {
        let p = ModelParams::ps2();
        let pts: Vec<SimplexPoint> = [0.1, 0.4, 0.6, 0.85]
            .iter()
            .map(|&v| SimplexPoint::binary(v).unwrap())
            .collect();
        let perm = [2usize, 0, 3, 1];
        let mut a = Ensemble::from_states(pts.clone(), &[0, 1, 2, 3], p.clone(), cfg(5)).unwrap();
        let permuted: Vec<SimplexPoint> = perm.iter().map(|&i| pts[i].clone()).collect();
        let ids: Vec<u64> = perm.iter().map(|&i| i as u64).collect();
        let mut b = Ensemble::from_states(permuted, &ids, p, cfg(5)).unwrap();
        for _ in 0..20 {
            a.step().unwrap();
            b.step().unwrap();
        }
        for (k, &i) in perm.iter().enumerate() {
            for (u, v) in a.particle(i).iter().zip(b.particle(k)) {
                assert!((u - v).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn deterministic_synchronization() {
        let p = ModelParams::ps1().with_sigma(1e-300).unwrap();
        let mut e = Ensemble::new(
            16,
            &InitLaw::Fixed(vec![SimplexPoint::barycenter(2)]),
            p,
            cfg(1),
        )
        .unwrap();
        for _ in 0..10 {
            e.step().unwrap();
        }
        let first = e.particle(0).to_vec();
        assert!((0..16).all(|i| e.particle(i) == first.as_slice()));
    }

    #[test]
    fn mean_skew_matches_pairwise_kernel() {
        let base = ModelParams::ps1();
        let kernel =
            InteractionSpec::PairwiseKernel(Arc::new(LinearSkewKernel(SkewMatrix::standard(2))));
        let pair = ModelParams::new(base.payoff.clone(), base.sigma, base.delta, kernel).unwrap();
        let law = InitLaw::Uic;
        let mut a = Ensemble::new(48, &law, base, cfg(9)).unwrap();
        let mut b = Ensemble::new(48, &law, pair, cfg(9)).unwrap();
        for _ in 0..5 {
            a.step().unwrap();
            b.step().unwrap();
        }
        for i in 0..48 {
            for (u, v) in a.particle(i).iter().zip(b.particle(i)) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn snapshots_and_histogram() {
        let p = ModelParams::ps1();
        let snaps = simulate_ensemble(200, &InitLaw::Uic, &p, 1.0, &cfg(2), 25, true).unwrap();
        assert_eq!(snaps.len(), 5);
        for s in &snaps {
            assert_eq!(s.histogram.total(), 200);
            assert!((s.mean.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(s.sample.as_ref().unwrap().len(), 200);
        }
        assert!((snaps[4].time - 1.0).abs() < 1e-12);
        let h = Histogram::unit(&[0.0, 0.999, 1.0, 0.5], 100);
        assert_eq!(h.counts[0], 1);
        assert_eq!(h.counts[99], 2);
        assert_eq!(h.counts[50], 1);
    }

    #[test]
    fn coupling_is_exact_without_interaction() {
        let p = ModelParams::ps1().with_delta(0.0).unwrap();
        let c = cfg(4);
        let curve = reference_mean_curve(20, &InitLaw::Uic, &p, 0.5, &c).unwrap();
        let err = coupled_sup_error(10, &InitLaw::Uic, &p, 0.5, &c, &curve, 1).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn mean_curve_interpolates() {
        let c = MeanCurve {
            dt: 0.5,
            values: vec![vec![0.0, 1.0], vec![1.0, 0.0]],
        };
        assert_eq!(c.at(0.25), vec![0.5, 0.5]);
        assert_eq!(c.at(7.0), vec![1.0, 0.0]);
    }

    #[test]
    fn poc_rejects_small_reference() {
        let s = PocSettings {
            n_list: vec![10, 20],
            replications: 2,
            t_end: 0.1,
            n_ref: 100,
            law: InitLaw::Uic,
            bootstrap: 0,
        };
        assert!(poc_experiment(&s, &ModelParams::ps1(), &cfg(0)).is_err());
    }

    #[test]
    fn tracked_samples_follow_particle_zero() {
        let p = ModelParams::ps1();
        let c = cfg(3);
        let got = tracked_samples(3, 5, &InitLaw::Uic, &p, &c, &[0.0, 0.5], 0).unwrap();
        assert_eq!(got.len(), 2);
        for r in 0..3 {
            let mut e = Ensemble::replicate(5, &InitLaw::Uic, p.clone(), c, r).unwrap();
            assert_eq!(got[0][r as usize], e.particle(0)[0]);
            for _ in 0..50 {
                e.step().unwrap();
            }
            assert_eq!(got[1][r as usize], e.particle(0)[0]);
        }
    }

    #[test]
    fn line_fit() {
        let (b, a) = fit_line(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]);
        assert!((b - 2.0).abs() < 1e-15 && (a - 1.0).abs() < 1e-15);
    }
}
