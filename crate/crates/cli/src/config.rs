//! Experiment configuration files.
//!
//! A config is TOML with a `schema_version`, a `[model]` table, a `[run]`
//! table and a list of `[[analyses]]`. Unknown keys are rejected.
//!
//! ```toml
//! schema_version = 1
//!
//! [model]
//! preset = "ps1"
//!
//! [run]
//! n = 10000
//! t = 100.0
//! init_law = "uic"
//! seed = 1
//!
//! [[analyses]]
//! kind = "mean_tracking"
//! t_min = 30.0
//! ```

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use replicator_core::mckean_vlasov::beta_s;
use replicator_core::mean_field::InitLaw;
use replicator_core::sde::{IntegratorConfig, Scheme, DEFAULT_FLOOR, DEFAULT_STEP};
use replicator_core::simplex::{
    InteractionSpec, LinearSkewKernel, ModelParams, PayoffMatrix, SimplexPoint, SkewMatrix,
};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub model: ModelConfig,
    pub run: RunConfig,
    #[serde(default)]
    pub analyses: Vec<Analysis>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Ps1,
    Ps2,
}

impl Preset {
    pub fn params(self) -> ModelParams {
        match self {
            Self::Ps1 => ModelParams::ps1(),
            Self::Ps2 => ModelParams::ps2(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Ps1 => "ps1",
            Self::Ps2 => "ps2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionKind {
    /// Through the population mean of coordinate 1.
    #[default]
    MeanSkew,
    /// The same interaction evaluated as an O(N^2) pairwise average.
    Pairwise,
}

/// Either a preset or explicit numbers; explicit fields override the preset.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payoff: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default)]
    pub interaction: InteractionKind,
    /// Skew matrix `E`; defaults to `E_ij = 1` above the diagonal, `-1`
    /// below.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skew: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    #[default]
    DirectEm,
    LogAbundanceEm,
}

impl From<SchemeName> for Scheme {
    fn from(s: SchemeName) -> Self {
        match s {
            SchemeName::DirectEm => Scheme::DirectEM,
            SchemeName::LogAbundanceEm => Scheme::LogAbundanceEM,
        }
    }
}

/// `"uic"`, `"lic"`, `{ beta = [a, b] }` or `{ fixed = [x1, ..., xd] }`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitLawConfig {
    Uic,
    Lic,
    Beta([f64; 2]),
    Fixed(Vec<f64>),
}

impl InitLawConfig {
    pub fn law(&self) -> Result<InitLaw, CliError> {
        Ok(match self {
            Self::Uic => InitLaw::Uic,
            Self::Lic => InitLaw::Lic,
            Self::Beta([a, b]) => InitLaw::BetaInit(*a, *b),
            Self::Fixed(x) => InitLaw::Fixed(vec![SimplexPoint::new(x.clone())
                .map_err(|e| CliError::Config(format!("run.init_law.fixed: {e}")))?]),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Number of particles.
    pub n: usize,
    /// Horizon.
    pub t: f64,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default)]
    pub scheme: SchemeName,
    pub init_law: InitLawConfig,
    pub seed: u64,
    /// Steps between snapshots.
    #[serde(default = "default_stride")]
    pub snapshot_stride: u64,
    #[serde(default = "default_floor")]
    pub floor: f64,
    /// Also dump every particle's state at each snapshot.
    #[serde(default)]
    pub keep_samples: bool,
}

fn default_h() -> f64 {
    DEFAULT_STEP
}
fn default_stride() -> u64 {
    100
}
fn default_floor() -> f64 {
    DEFAULT_FLOOR
}
fn default_t_min() -> f64 {
    30.0
}
fn default_every() -> u64 {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Analysis {
    MeanTracking(MeanTracking),
    AdTest(AdTest),
    TnTest(TnTest),
    Poc(Poc),
    Persistence(Persistence),
}

impl Analysis {
    pub fn name(&self) -> &'static str {
        match self {
            Self::MeanTracking(_) => "mean_tracking",
            Self::AdTest(_) => "ad_test",
            Self::TnTest(_) => "tn_test",
            Self::Poc(_) => "poc",
            Self::Persistence(_) => "persistence",
        }
    }
}

/// Relative error of the coordinate-1 mean against `s` at every snapshot
/// with `t >= t_min`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanTracking {
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

fn default_tolerance() -> f64 {
    0.02
}

/// Anderson-Darling test of the ensemble's first coordinate against
/// `Beta(s, 1 - s)` every `every` steps in `[t_min, t_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdTest {
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    /// Defaults to the run horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default = "default_every")]
    pub every: u64,
    #[serde(default = "default_ad_level")]
    pub level: f64,
    /// Null replications for the Monte-Carlo calibration.
    #[serde(default = "default_ad_b")]
    pub b: usize,
    /// Required fraction of non-rejections.
    #[serde(default = "default_min_fraction")]
    pub min_fraction: f64,
}

fn default_ad_level() -> f64 {
    0.99
}
fn default_ad_b() -> usize {
    1000
}
fn default_min_fraction() -> f64 {
    0.60
}

/// `runs` independent systems of `particles` particles; particle 0 is
/// tracked and the `T_n` statistic is computed over runs at each time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TnTest {
    pub times: Vec<f64>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default = "default_particles")]
    pub particles: usize,
    #[serde(default = "default_tn_b")]
    pub b: usize,
    #[serde(default = "default_tn_level")]
    pub level: f64,
}

fn default_runs() -> usize {
    1000
}
fn default_particles() -> usize {
    500
}
fn default_tn_b() -> usize {
    5000
}
fn default_tn_level() -> f64 {
    0.90
}

/// Propagation-of-chaos scaling experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Poc {
    pub n_list: Vec<usize>,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_poc_t")]
    pub t: f64,
    /// Defaults to `max(10 * max(n_list), 100000)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_ref: Option<usize>,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    #[serde(default = "default_slope_range")]
    pub slope_range: [f64; 2],
}

fn default_m() -> usize {
    50
}
fn default_poc_t() -> f64 {
    10.0
}
fn default_bootstrap() -> usize {
    1000
}
fn default_slope_range() -> [f64; 2] {
    [-1.3, -0.7]
}

impl Poc {
    pub fn n_ref(&self) -> usize {
        self.n_ref.unwrap_or_else(|| {
            let max = self.n_list.iter().copied().max().unwrap_or(0);
            (10 * max).max(replicator_core::mean_field::DEFAULT_N_REF)
        })
    }
}

/// Persistence certificate, `Ext(eps)` occupation of the main run for
/// `t >= t_min`, and the capped-H drift fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Persistence {
    #[serde(default = "default_eps")]
    pub eps: Vec<f64>,
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    #[serde(default = "default_every")]
    pub every: u64,
    /// Lyapunov exponent scale `r`.
    #[serde(default = "default_r")]
    pub r: f64,
    #[serde(default = "default_h_cap")]
    pub h_cap: f64,
    /// Samples per averaging window of the drift fit.
    #[serde(default = "default_window")]
    pub window: usize,
}

fn default_eps() -> Vec<f64> {
    vec![0.01, 0.05]
}
fn default_r() -> f64 {
    1.0
}
fn default_h_cap() -> f64 {
    replicator_core::persistence::DEFAULT_H_CAP
}
fn default_window() -> usize {
    10
}

/// A validated config with its core-library counterparts.
#[derive(Debug, Clone)]
pub struct Resolved {
    /// The config with the preset expanded; this is what `config.echo`
    /// contains.
    pub config: ExperimentConfig,
    pub params: ModelParams,
    pub integrator: IntegratorConfig,
    pub law: InitLaw,
    /// `s` of the stationary `Beta(s, 1 - s)` law, for two-type models.
    pub theoretical_s: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is serializable")
    }

    pub fn resolve(&self) -> Result<Resolved, CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }
        let mut config = self.clone();
        let params = config.model.resolve()?;
        let run = &config.run;
        if run.n == 0 {
            return Err(CliError::Config("run.n: must be positive".into()));
        }
        if run.snapshot_stride == 0 {
            return Err(CliError::Config(
                "run.snapshot_stride: must be positive".into(),
            ));
        }
        let integrator = IntegratorConfig::new(run.h, run.scheme.into(), run.seed)
            .and_then(|c| c.with_floor(run.floor))
            .map_err(|e| CliError::Config(format!("run: {e}")))?;
        integrator
            .steps_for(run.t)
            .map_err(|e| CliError::Config(format!("run.t: {e}")))?;
        let law = run.init_law.law()?;
        let theoretical_s = theory_s(&params);
        for (i, a) in config.analyses.iter().enumerate() {
            validate_analysis(a, run, theoretical_s.is_some())
                .map_err(|msg| CliError::Config(format!("analyses[{i}] ({}): {msg}", a.name())))?;
        }
        // The Beta null needs d = 2; LIC and Beta initial laws too.
        if params.dim() != 2 && matches!(run.init_law, InitLawConfig::Lic | InitLawConfig::Beta(_))
        {
            return Err(CliError::Config(
                "run.init_law: lic and beta need a two-type model".into(),
            ));
        }
        config.model.fill_from(&params);
        Ok(Resolved {
            config,
            params,
            integrator,
            law,
            theoretical_s,
        })
    }
}

/// `s` for the mean-skew form of the model, when it is in the Beta regime.
pub fn theory_s(params: &ModelParams) -> Option<f64> {
    let mean_skew = match &params.interaction {
        InteractionSpec::MeanSkew(_) => params.clone(),
        InteractionSpec::PairwiseKernel(_) => ModelParams::with_standard_interaction(
            params.payoff.clone(),
            params.sigma,
            params.delta,
        )
        .ok()?,
    };
    beta_s(&mean_skew).ok().filter(|s| *s > 0.0 && *s < 1.0)
}

fn validate_analysis(a: &Analysis, run: &RunConfig, two_type: bool) -> Result<(), String> {
    let needs_beta = || {
        if two_type {
            Ok(())
        } else {
            Err("needs a two-type model in the Beta regime".to_string())
        }
    };
    let level_ok = |l: f64| {
        if l > 0.0 && l < 1.0 {
            Ok(())
        } else {
            Err(format!("level must lie in (0, 1), got {l}"))
        }
    };
    match a {
        Analysis::MeanTracking(m) => {
            needs_beta()?;
            if !(m.tolerance > 0.0) {
                return Err("tolerance must be positive".into());
            }
            if m.t_min > run.t {
                return Err("t_min exceeds the horizon".into());
            }
        }
        Analysis::AdTest(ad) => {
            needs_beta()?;
            level_ok(ad.level)?;
            if ad.every == 0 || ad.b == 0 {
                return Err("every and b must be positive".into());
            }
            if run.n < 8 {
                return Err("Anderson-Darling needs at least 8 particles".into());
            }
            if ad.t_min > ad.t_max.unwrap_or(run.t) || ad.t_min > run.t {
                return Err("empty time window".into());
            }
        }
        Analysis::TnTest(tn) => {
            needs_beta()?;
            level_ok(tn.level)?;
            if tn.times.is_empty() || tn.times.iter().any(|&t| !(t > 0.0)) {
                return Err("times must be nonempty and positive".into());
            }
            if tn.runs < 2 || tn.particles == 0 || tn.b < 1000 {
                return Err("need runs >= 2, particles >= 1 and b >= 1000".into());
            }
        }
        Analysis::Poc(p) => {
            if p.n_list.len() < 2 || p.n_list.windows(2).any(|w| w[0] >= w[1]) || p.n_list[0] == 0 {
                return Err("n_list must hold at least two increasing positive sizes".into());
            }
            if p.m < 2 {
                return Err("m must be at least 2".into());
            }
            if p.n_ref() < 10 * p.n_list[p.n_list.len() - 1] {
                return Err("n_ref must be at least 10 x max(n_list)".into());
            }
            if !(p.t > 0.0) || p.slope_range[0] > p.slope_range[1] {
                return Err("t must be positive and slope_range ordered".into());
            }
        }
        Analysis::Persistence(p) => {
            if p.eps.is_empty() || p.eps.iter().any(|&e| !(e > 0.0 && e <= 1.0)) {
                return Err("eps values must lie in (0, 1]".into());
            }
            if p.every == 0 || !(p.r > 0.0) || !(p.h_cap > 0.0) {
                return Err("every, r and h_cap must be positive".into());
            }
        }
    }
    Ok(())
}

impl ModelConfig {
    pub fn from_preset(preset: Preset) -> Self {
        Self {
            preset: Some(preset),
            ..Self::default()
        }
    }

    pub fn resolve(&self) -> Result<ModelParams, CliError> {
        let base = self.preset.map(Preset::params);
        let payoff = match (&self.payoff, &base) {
            (Some(rows), _) => PayoffMatrix::new(rows.clone())
                .map_err(|e| CliError::Config(format!("model.payoff: {e}")))?,
            (None, Some(p)) => p.payoff.clone(),
            (None, None) => {
                return Err(CliError::Config(
                    "model: give a preset or a payoff matrix".into(),
                ))
            }
        };
        let sigma = self
            .sigma
            .or(base.as_ref().map(|p| p.sigma))
            .ok_or_else(|| CliError::Config("model.sigma: missing".into()))?;
        let delta = self.delta.or(base.as_ref().map(|p| p.delta)).unwrap_or(0.0);
        let d = payoff.dim();
        let skew = match &self.skew {
            Some(rows) => SkewMatrix::new(rows.clone())
                .map_err(|e| CliError::Config(format!("model.skew: {e}")))?,
            None => SkewMatrix::standard(d),
        };
        let interaction = match self.interaction {
            InteractionKind::MeanSkew => InteractionSpec::MeanSkew(skew),
            InteractionKind::Pairwise => {
                InteractionSpec::PairwiseKernel(Arc::new(LinearSkewKernel(skew)))
            }
        };
        ModelParams::new(payoff, sigma, delta, interaction)
            .map_err(|e| CliError::Config(format!("model: {e}")))
    }

    /// Writes the resolved numbers back so the echo is self-contained.
    fn fill_from(&mut self, params: &ModelParams) {
        self.payoff = Some(params.payoff.rows());
        self.sigma = Some(params.sigma);
        self.delta = Some(params.delta);
        if let InteractionSpec::MeanSkew(e) = &params.interaction {
            self.skew = Some(e.rows());
        } else if self.skew.is_none() {
            self.skew = Some(SkewMatrix::standard(params.dim()).rows());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
[model]
preset = "ps1"
[run]
n = 100
t = 1.0
init_law = "uic"
seed = 7
"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.run.h, 0.01);
        assert_eq!(cfg.run.snapshot_stride, 100);
        assert_eq!(cfg.run.scheme, SchemeName::DirectEm);
        let r = cfg.resolve().unwrap();
        assert!((r.theoretical_s.unwrap() - 0.05 / 0.095).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = MINIMAL.replace("seed = 7", "seed = 7\nworkers = 3");
        let err = ExperimentConfig::from_toml(&bad).unwrap_err().to_string();
        assert!(err.contains("workers"), "{err}");
        let bad = format!("{MINIMAL}\n[[analyses]]\nkind = \"ad_test\"\nlevle = 0.99\n");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = format!("{MINIMAL}\n[[analyses]]\nkind = \"nonsense\"\n");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn errors_carry_the_line() {
        let bad = MINIMAL.replace("n = 100", "n = \"many\"");
        let err = ExperimentConfig::from_toml(&bad).unwrap_err().to_string();
        assert!(err.contains("line 6"), "{err}");
    }

    #[test]
    fn wrong_schema_version() {
        let cfg =
            ExperimentConfig::from_toml(&MINIMAL.replace("= 1\n[model]", "= 2\n[model]")).unwrap();
        assert!(matches!(cfg.resolve(), Err(CliError::Config(_))));
    }

    #[test]
    fn explicit_fields_override_preset() {
        let text = MINIMAL.replace("preset = \"ps1\"", "preset = \"ps1\"\ndelta = 0.0");
        let r = ExperimentConfig::from_toml(&text)
            .unwrap()
            .resolve()
            .unwrap();
        assert_eq!(r.params.delta, 0.0);
        assert_eq!(r.params.payoff.get(0, 1), 1.0);
    }

    #[test]
    fn init_law_forms() {
        for (src, want) in [
            ("\"lic\"", InitLaw::Lic),
            ("{ beta = [2.0, 3.0] }", InitLaw::BetaInit(2.0, 3.0)),
        ] {
            let text = MINIMAL.replace("\"uic\"", src);
            let r = ExperimentConfig::from_toml(&text)
                .unwrap()
                .resolve()
                .unwrap();
            assert_eq!(r.law, want);
        }
        let text = MINIMAL.replace("\"uic\"", "{ fixed = [0.25, 0.75] }");
        let r = ExperimentConfig::from_toml(&text)
            .unwrap()
            .resolve()
            .unwrap();
        assert!(matches!(r.law, InitLaw::Fixed(ref v) if v[0].coords() == [0.25, 0.75]));
    }

    #[test]
    fn echo_round_trips() {
        let text = format!(
            "{MINIMAL}\n[[analyses]]\nkind = \"mean_tracking\"\nt_min = 0.5\n[[analyses]]\nkind = \"poc\"\nn_list = [10, 20]\n"
        );
        let r = ExperimentConfig::from_toml(&text)
            .unwrap()
            .resolve()
            .unwrap();
        let echo = r.config.to_toml();
        let back = ExperimentConfig::from_toml(&echo).unwrap();
        assert_eq!(back, r.config);
        assert_eq!(
            back.model.payoff,
            Some(vec![vec![0.5, 1.0], vec![1.0, 0.5]])
        );
    }

    #[test]
    fn analyses_are_validated() {
        let three = MINIMAL.replace(
            "preset = \"ps1\"",
            "payoff = [[0, 1, 1], [1, 0, 1], [1, 1, 0]]\nsigma = 1.0",
        );
        let text = format!("{three}\n[[analyses]]\nkind = \"ad_test\"\n");
        let err = ExperimentConfig::from_toml(&text)
            .unwrap()
            .resolve()
            .unwrap_err()
            .to_string();
        assert!(err.contains("analyses[0] (ad_test)"), "{err}");
    }
}
