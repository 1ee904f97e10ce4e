//! Euler–Maruyama discretization of the simplex SDE, and a log-abundance
//! integrator that stays strictly inside the simplex.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::{ceil, dot, exp};
use crate::rng::{Domain, StreamKey};
use crate::simplex::{
    project_tangent_into, InteractionSpec, ModelParams, PayoffMatrix, SimplexPoint, TangentVector,
};
use crate::{Error, Result};

pub const DEFAULT_STEP: f64 = 0.01;
pub const DEFAULT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    DirectEM,
    LogAbundanceEM,
}

/// What to do when a discrete step leaves the simplex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryPolicy {
    /// Raise coordinates below `floor` to `floor`, then renormalize.
    ClampRenormalize { floor: f64 },
}

impl Default for BoundaryPolicy {
    fn default() -> Self {
        Self::ClampRenormalize {
            floor: DEFAULT_FLOOR,
        }
    }
}

impl BoundaryPolicy {
    pub fn floor(&self) -> f64 {
        match *self {
            Self::ClampRenormalize { floor } => floor,
        }
    }

    /// Applies the policy in place. Returns `false` if a coordinate is not
    /// finite.
    pub fn apply(&self, x: &mut [f64]) -> bool {
        let floor = self.floor();
        let mut sum = 0.0;
        for v in x.iter_mut() {
            if !v.is_finite() {
                return false;
            }
            if *v < floor {
                *v = floor;
            }
            sum += *v;
        }
        x.iter_mut().for_each(|v| *v /= sum);
        true
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub h: f64,
    pub scheme: Scheme,
    pub boundary: BoundaryPolicy,
    pub seed: u64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            h: DEFAULT_STEP,
            scheme: Scheme::DirectEM,
            boundary: BoundaryPolicy::default(),
            seed: 0,
        }
    }
}

impl IntegratorConfig {
    pub fn new(h: f64, scheme: Scheme, seed: u64) -> Result<Self> {
        Self {
            h,
            scheme,
            seed,
            ..Self::default()
        }
        .validated()
    }

    pub fn with_floor(mut self, floor: f64) -> Result<Self> {
        self.boundary = BoundaryPolicy::ClampRenormalize { floor };
        self.validated()
    }

    pub fn validated(self) -> Result<Self> {
        if !(self.h > 0.0) || !self.h.is_finite() {
            return Err(Error::InvalidParameter(alloc::format!(
                "step size must be positive, got {}",
                self.h
            )));
        }
        let floor = self.boundary.floor();
        if !(floor > 0.0 && floor <= 1e-6) {
            return Err(Error::InvalidParameter(alloc::format!(
                "boundary floor must lie in (0, 1e-6], got {floor}"
            )));
        }
        Ok(self)
    }

    /// `⌈T/h⌉`, ignoring rounding noise in the ratio.
    pub fn steps_for(&self, t_end: f64) -> Result<u64> {
        if !(t_end >= self.h * (1.0 - 1e-12)) {
            return Err(Error::InvalidParameter(alloc::format!(
                "horizon {t_end} is shorter than one step"
            )));
        }
        Ok(ceil(t_end / self.h - 1e-9) as u64)
    }
}

/// Reusable per-particle buffers.
#[derive(Debug, Clone)]
pub(crate) struct Workspace {
    pub fitness: Vec<f64>,
    pub skew: Vec<f64>,
    pub drift: Vec<f64>,
    pub dw: Vec<f64>,
}

impl Workspace {
    pub fn new(d: usize) -> Self {
        Self {
            fitness: vec![0.0; d],
            skew: vec![0.0; d],
            drift: vec![0.0; d],
            dw: vec![0.0; d],
        }
    }
}

/// The unprojected fitness `Ãx + υ`, where `υ` is the interaction term.
/// `interaction` is either `Some(m)` (an empirical or frozen mean, used with
/// `MeanSkew`) or, for pairwise kernels, the already-averaged `Υ` value.
pub(crate) fn fitness_into(
    x: &[f64],
    params: &ModelParams,
    interaction: Interaction<'_>,
    ws_skew: &mut [f64],
    out: &mut [f64],
) -> Result<()> {
    if let Interaction::Effective(m) = interaction {
        m.mul_vec_into(x, out);
        return Ok(());
    }
    params.tilde_payoff().mul_vec_into(x, out);
    if params.delta == 0.0 {
        return Ok(());
    }
    match (interaction, &params.interaction) {
        (Interaction::Mean(m), InteractionSpec::MeanSkew(e)) => {
            e.mul_vec_into(x, ws_skew);
            let scale = params.delta * m[0];
            for (o, s) in out.iter_mut().zip(ws_skew.iter()) {
                *o += scale * s;
            }
        }
        (Interaction::Averaged(u), _) => {
            for (o, s) in out.iter_mut().zip(u) {
                *o += params.delta * s;
            }
        }
        (Interaction::None, _) => return Err(Error::MissingMean),
        (Interaction::Effective(_), _) => unreachable!("handled above"),
        (Interaction::Mean(_), InteractionSpec::PairwiseKernel(_)) => {
            return Err(Error::UnsupportedInteraction(
                "pairwise kernels need the averaged interaction term",
            ))
        }
    }
    Ok(())
}

/// The population input to the drift.
#[derive(Debug, Clone, Copy)]
pub enum Interaction<'a> {
    /// No population term; only valid when `δ = 0`.
    None,
    /// Mean of the population (MeanSkew).
    Mean(&'a [f64]),
    /// `(1/N) Σⱼ K(x, xⱼ)` computed by the caller.
    Averaged(&'a [f64]),
    /// The whole fitness matrix `Ã + δm₁E`, precomputed once per step.
    Effective(&'a PayoffMatrix),
}

impl<'a> From<Option<&'a [f64]>> for Interaction<'a> {
    fn from(m: Option<&'a [f64]>) -> Self {
        m.map_or(Interaction::None, Interaction::Mean)
    }
}

/// `Π_T[Ãx] + Π_T[υ]`.
pub fn drift(x: &SimplexPoint, params: &ModelParams, m: Option<&[f64]>) -> Result<TangentVector> {
    drift_with(x, params, m.into())
}

pub fn drift_with(
    x: &SimplexPoint,
    params: &ModelParams,
    interaction: Interaction<'_>,
) -> Result<TangentVector> {
    let d = params.dim();
    check_dim(d, x.dim())?;
    match interaction {
        Interaction::Mean(m) | Interaction::Averaged(m) => check_dim(d, m.len())?,
        Interaction::Effective(m) => check_dim(d, m.dim())?,
        Interaction::None => {}
    }
    let mut ws = Workspace::new(d);
    fitness_into(
        x.coords(),
        params,
        interaction,
        &mut ws.skew,
        &mut ws.fitness,
    )?;
    project_tangent_into(&ws.fitness, x.coords(), &mut ws.drift);
    Ok(TangentVector::from_raw(ws.drift))
}

/// `σ(x ∘ dW − ⟨x, dW⟩x)`.
pub fn diffusion_increment(x: &SimplexPoint, sigma: f64, dw: &[f64]) -> Result<TangentVector> {
    check_dim(x.dim(), dw.len())?;
    let mut out = vec![0.0; dw.len()];
    let xs = x.coords();
    let avg = dot(xs, dw);
    for ((o, &xi), &w) in out.iter_mut().zip(xs).zip(dw) {
        *o = sigma * xi * (w - avg);
    }
    Ok(TangentVector::from_raw(out))
}

/// One Euler–Maruyama step, writing the new state into `x`.
/// Returns `false` on a non-finite intermediate.
pub(crate) fn em_step_in_place(
    x: &mut [f64],
    params: &ModelParams,
    interaction: Interaction<'_>,
    h: f64,
    boundary: &BoundaryPolicy,
    ws: &mut Workspace,
) -> Result<bool> {
    fitness_into(x, params, interaction, &mut ws.skew, &mut ws.fitness)?;
    let fbar = dot(x, &ws.fitness);
    let wbar = dot(x, &ws.dw);
    let sigma = params.sigma;
    for ((xi, &f), &w) in x.iter_mut().zip(&ws.fitness).zip(&ws.dw) {
        *xi += *xi * ((f - fbar) * h + sigma * (w - wbar));
    }
    Ok(boundary.apply(x))
}

/// One log-abundance step: `y += (Φ̃(x) − σ²/2)h + σ dW` with
/// `Φ̃ = fitness + σ²x`, then shift by the maximum. `x` is updated to
/// `G(exp y)`.
pub(crate) fn log_step_in_place(
    y: &mut [f64],
    x: &mut [f64],
    params: &ModelParams,
    interaction: Interaction<'_>,
    h: f64,
    ws: &mut Workspace,
) -> Result<bool> {
    fitness_into(x, params, interaction, &mut ws.skew, &mut ws.fitness)?;
    let s2 = params.sigma * params.sigma;
    let mut max = f64::NEG_INFINITY;
    for (i, yi) in y.iter_mut().enumerate() {
        *yi += (ws.fitness[i] + s2 * x[i] - 0.5 * s2) * h + params.sigma * ws.dw[i];
        if !yi.is_finite() {
            return Ok(false);
        }
        max = max.max(*yi);
    }
    let mut sum = 0.0;
    for (yi, xi) in y.iter_mut().zip(x.iter_mut()) {
        *yi -= max;
        *xi = exp(*yi);
        sum += *xi;
    }
    x.iter_mut().for_each(|v| *v /= sum);
    Ok(true)
}

/// One Euler–Maruyama step from `x` with Brownian increment `dw`.
pub fn em_step(
    x: &SimplexPoint,
    params: &ModelParams,
    m: Option<&[f64]>,
    dw: &[f64],
    config: &IntegratorConfig,
) -> Result<SimplexPoint> {
    let d = params.dim();
    check_dim(d, x.dim())?;
    check_dim(d, dw.len())?;
    let mut ws = Workspace::new(d);
    ws.dw.copy_from_slice(dw);
    let mut out = x.coords().to_vec();
    if !em_step_in_place(
        &mut out,
        params,
        m.into(),
        config.h,
        &config.boundary,
        &mut ws,
    )? {
        return Err(Error::IntegratorBlowup {
            step: 0,
            particle: 0,
        });
    }
    Ok(SimplexPoint::from_raw(out))
}

/// Log-abundances representing `x`.
pub fn log_abundance_of(x: &SimplexPoint) -> Vec<f64> {
    x.coords().iter().map(|&v| crate::math::ln(v)).collect()
}

/// One log-abundance step; returns the new (max-shifted) log vector and its
/// projection onto the simplex.
pub fn log_abundance_step(
    y_log: &[f64],
    params: &ModelParams,
    m: Option<&[f64]>,
    dw: &[f64],
    config: &IntegratorConfig,
) -> Result<(Vec<f64>, SimplexPoint)> {
    let d = params.dim();
    check_dim(d, y_log.len())?;
    check_dim(d, dw.len())?;
    if y_log.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(
            "log-abundances must be finite".into(),
        ));
    }
    let mut y = y_log.to_vec();
    let mut x = project_logs(&y);
    let mut ws = Workspace::new(d);
    ws.dw.copy_from_slice(dw);
    if !log_step_in_place(&mut y, &mut x, params, m.into(), config.h, &mut ws)? {
        return Err(Error::IntegratorBlowup {
            step: 0,
            particle: 0,
        });
    }
    Ok((y, SimplexPoint::from_raw(x)))
}

/// `G(exp y)`, computed after shifting by the maximum.
pub fn project_logs(y: &[f64]) -> Vec<f64> {
    let max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut x: Vec<f64> = y.iter().map(|v| exp(v - max)).collect();
    let sum: f64 = x.iter().sum();
    x.iter_mut().for_each(|v| *v /= sum);
    x
}

/// A thinned path.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SimplexPoint>,
    pub stride: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> Option<&SimplexPoint> {
        self.states.last()
    }
}

/// Integrates one replicator with a fixed (frozen) population mean.
/// Every step is recorded; see [`simulate_single_thinned`] for thinning.
pub fn simulate_single(
    x0: &SimplexPoint,
    params: &ModelParams,
    frozen_mean: Option<&[f64]>,
    t_end: f64,
    config: &IntegratorConfig,
) -> Result<Trajectory> {
    simulate_single_thinned(x0, params, frozen_mean, t_end, config, 1)
}

pub fn simulate_single_thinned(
    x0: &SimplexPoint,
    params: &ModelParams,
    frozen_mean: Option<&[f64]>,
    t_end: f64,
    config: &IntegratorConfig,
    stride: u64,
) -> Result<Trajectory> {
    let config = config.validated()?;
    let d = params.dim();
    check_dim(d, x0.dim())?;
    if let Some(m) = frozen_mean {
        check_dim(d, m.len())?;
    } else if params.delta > 0.0 {
        return Err(Error::MissingMean);
    }
    let stride = stride.max(1);
    let steps = config.steps_for(t_end)?;
    let mut stream = StreamKey::new(config.seed, Domain::Ensemble).stream();
    let mut ws = Workspace::new(d);
    let mut x = x0.coords().to_vec();
    let mut y = match config.scheme {
        Scheme::LogAbundanceEM => {
            if !x0.is_interior() {
                return Err(Error::InvalidSimplexPoint(
                    "log-abundance scheme needs an interior start".into(),
                ));
            }
            log_abundance_of(x0)
        }
        Scheme::DirectEM => Vec::new(),
    };
    let mut times = vec![0.0];
    let mut states = vec![x0.clone()];
    for k in 1..=steps {
        stream.fill_normal(config.h, &mut ws.dw);
        let ok = match config.scheme {
            Scheme::DirectEM => em_step_in_place(
                &mut x,
                params,
                frozen_mean.into(),
                config.h,
                &config.boundary,
                &mut ws,
            )?,
            Scheme::LogAbundanceEM => log_step_in_place(
                &mut y,
                &mut x,
                params,
                frozen_mean.into(),
                config.h,
                &mut ws,
            )?,
        };
        if !ok {
            return Err(Error::IntegratorBlowup {
                step: k,
                particle: 0,
            });
        }
        if k % stride == 0 || k == steps {
            times.push(k as f64 * config.h);
            states.push(SimplexPoint::from_raw(x.clone()));
        }
    }
    Ok(Trajectory {
        times,
        states,
        stride,
    })
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::DimensionMismatch { expected, actual });
    }
    Ok(())
}
