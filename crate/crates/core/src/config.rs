//! Run configuration files (TOML).
//!
//! ```toml
//! version = 1
//! seed = 7
//!
//! [scenario]
//! kind = "channels-example1"
//!
//! [flow]
//! kind = "directed"
//! alpha_source = "explicit"
//! alpha = 3.0
//!
//! [integrator]
//! h = 1e-3
//! horizon = 100.0
//!
//! [output]
//! dir = "out/example1"
//! ```
//!
//! `--override key=value` edits the parsed document before validation; the
//! value is read as a TOML value and falls back to a string.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{IntegratorSettings, StackedState};
use crate::game::{EngagementGraph, ExtendedPayoff, FnPayoff, Side, TwoNetworkGame};
use crate::graph::GraphSpec;
use crate::scenarios::{
    build_channel_game, build_quadratic_game, example1_reference, ChannelScenario, QuadraticGame,
};
use crate::sets::StrategySet;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("bad override `{0}`: expected key=value")]
    Override(String),
    #[error("unsupported config version {0} (expected {CONFIG_VERSION})")]
    Version(u32),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub integrator: IntegratorSettings,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Initial estimates; auxiliary states default to zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    #[serde(default)]
    pub z1: Option<Vec<f64>>,
    #[serde(default)]
    pub z2: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScenarioConfig {
    /// The five-channel power allocation game. Starts from the reference
    /// initial condition unless `initial` is given.
    ChannelsExample1 {
        #[serde(default)]
        params: ChannelScenario,
        #[serde(default)]
        initial: Option<InitialConfig>,
    },
    /// Quadratic game with inline matrices.
    Quadratic {
        game: QuadraticGame,
        first: GraphSpec,
        second: GraphSpec,
        /// Mutual engagement pairs; round-robin when omitted.
        #[serde(default)]
        engagement: Option<Vec<(usize, usize)>>,
        /// `[lo, hi]` for every coordinate of each network.
        bounds1: (f64, f64),
        bounds2: (f64, f64),
        #[serde(default)]
        initial: Option<InitialConfig>,
    },
    /// `Ũ ≡ 0`: only the consensus terms act.
    ZeroPayoff {
        first: GraphSpec,
        second: GraphSpec,
        #[serde(default = "one")]
        d1: usize,
        #[serde(default = "one")]
        d2: usize,
        #[serde(default)]
        initial: Option<InitialConfig>,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum FlowKind {
    #[default]
    Undirected,
    Directed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlphaSource {
    Explicit,
    DesignedFromBeta,
    DesignedAuto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KSource {
    /// Sampled estimate with the safety factor.
    Estimate,
    /// Hessian norm; quadratic scenarios only.
    Analytic,
    /// `k_value` as given.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    pub kind: FlowKind,
    pub alpha_source: Option<AlphaSource>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub k_source: Option<KSource>,
    pub k_value: Option<f64>,
    /// Pairs sampled by the Lipschitz estimator.
    pub k_samples: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            kind: FlowKind::Undirected,
            alpha_source: None,
            alpha: None,
            beta: None,
            k_source: None,
            k_value: None,
            k_samples: 4000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Sampled saddle inequalities at the terminal consensus point.
    pub saddle: bool,
    /// Extension properties of the game's payoffs.
    pub extension: bool,
    pub samples: usize,
    /// Grid points per axis for `verify saddle`.
    pub grid: usize,
    /// Allowed saddle-inequality violation.
    pub tol: f64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            saddle: false,
            extension: false,
            samples: 1000,
            grid: 41,
            tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

/// Reads a config file into a TOML document.
pub fn load_document(path: &Path) -> Result<toml::Table, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.parse::<toml::Table>().map_err(|e| ConfigError::Parse(e.to_string()))
}

/// Sets the dotted `key` of `doc` to `value`.
pub fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| ConfigError::Override(spec.into()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::Override(spec.into()));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    let mut table = doc;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::Invalid(format!("override `{key}`: `{part}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn from_document(doc: toml::Table) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_str(text: &str) -> Result<Self, ConfigError> {
        let doc = text.parse::<toml::Table>().map_err(|e| ConfigError::Parse(e.to_string()))?;
        Self::from_document(doc)
    }

    /// Loads `path` and applies the overrides in order.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut doc = load_document(path)?;
        for o in overrides {
            apply_override(&mut doc, o)?;
        }
        Self::from_document(doc)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.version != CONFIG_VERSION {
            return Err(ConfigError::Version(self.version));
        }
        self.integrator
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("integrator: {e}")))?;
        let f = &self.flow;
        let positive = |name: &str, v: Option<f64>| -> Result<(), ConfigError> {
            match v {
                Some(x) if x > 0.0 && x.is_finite() => Ok(()),
                Some(x) => invalid(format!("flow.{name} must be positive, got {x}")),
                None => invalid(format!("flow.{name} is required by flow.alpha_source")),
            }
        };
        if f.kind == FlowKind::Directed && f.alpha_source.is_none() {
            return invalid("directed flow requires flow.alpha_source");
        }
        match f.alpha_source {
            Some(AlphaSource::Explicit) => positive("alpha", f.alpha)?,
            Some(AlphaSource::DesignedFromBeta) => positive("beta", f.beta)?,
            Some(AlphaSource::DesignedAuto) if f.k_source.is_none() => {
                return invalid("designed-auto alpha requires flow.k_source");
            }
            _ => {}
        }
        if f.k_source == Some(KSource::Explicit) {
            positive("k_value", f.k_value)?;
        }
        if f.k_source == Some(KSource::Analytic) && !matches!(self.scenario, ScenarioConfig::Quadratic { .. }) {
            return invalid("flow.k_source = \"analytic\" is only available for quadratic scenarios");
        }
        if f.k_samples == 0 {
            return invalid("flow.k_samples must be at least 1");
        }
        if self.verify.grid < 2 {
            return invalid("verify.grid must be at least 2");
        }
        if self.verify.samples == 0 {
            return invalid("verify.samples must be at least 1");
        }
        if let ScenarioConfig::Quadratic { bounds1, bounds2, .. } = &self.scenario {
            for (name, (lo, hi)) in [("bounds1", bounds1), ("bounds2", bounds2)] {
                if !(lo < hi) {
                    return invalid(format!("scenario.{name} needs lo < hi"));
                }
            }
        }
        Ok(())
    }
}

/// A game ready to run, with everything the CLI needs around it.
#[derive(Debug, Clone)]
pub struct BuiltScenario {
    pub name: &'static str,
    pub game: TwoNetworkGame,
    pub initial: StackedState,
    /// Known network-level saddle, when available in closed form.
    pub saddle: Option<(Vec<f64>, Vec<f64>)>,
    /// Published reference point, for the channel game.
    pub published: Option<(Vec<f64>, Vec<f64>)>,
    /// Hessian norm for quadratic games.
    pub k_analytic: Option<f64>,
}

fn initial_state(
    game: &TwoNetworkGame,
    initial: &Option<InitialConfig>,
    seed: u64,
) -> Result<StackedState, ConfigError> {
    match initial {
        Some(i) => {
            let (a, b) = (game.n1() * game.d1(), game.n2() * game.d2());
            let s = StackedState {
                x1: i.x1.clone(),
                z1: i.z1.clone().unwrap_or_else(|| vec![0.0; a]),
                x2: i.x2.clone(),
                z2: i.z2.clone().unwrap_or_else(|| vec![0.0; b]),
                t: 0.0,
            };
            if !s.matches(game) {
                return invalid(format!(
                    "scenario.initial: expected x1/z1 of length {a} and x2/z2 of length {b}"
                ));
            }
            Ok(s)
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x1 = game.strategy_set(Side::First).power(game.n1()).sample(&mut rng);
            let x2 = game.strategy_set(Side::Second).power(game.n2()).sample(&mut rng);
            Ok(StackedState::new(x1, x2))
        }
    }
}

impl ScenarioConfig {
    pub fn build(&self, seed: u64) -> Result<BuiltScenario, ConfigError> {
        let err = |e: &dyn std::fmt::Display| ConfigError::Invalid(format!("scenario: {e}"));
        match self {
            ScenarioConfig::ChannelsExample1 { params, initial } => {
                let game = build_channel_game(params).map_err(|e| err(&e))?;
                let reference = example1_reference();
                let initial = match initial {
                    None => reference.initial.clone(),
                    some => initial_state(&game, some, seed)?,
                };
                Ok(BuiltScenario {
                    name: "channels-example1",
                    game,
                    initial,
                    saddle: None,
                    published: Some((reference.x_star.to_vec(), reference.y_star.to_vec())),
                    k_analytic: None,
                })
            }
            ScenarioConfig::Quadratic {
                game,
                first,
                second,
                engagement,
                bounds1,
                bounds2,
                initial,
            } => {
                let g1 = first.build().map_err(|e| err(&e))?;
                let g2 = second.build().map_err(|e| err(&e))?;
                let (n1, n2) = (g1.vertex_count(), g2.vertex_count());
                let eng = match engagement {
                    Some(pairs) => EngagementGraph::from_pairs(n1, n2, pairs).map_err(|e| err(&e))?,
                    None => EngagementGraph::round_robin(n1, n2),
                };
                let fixture = build_quadratic_game(
                    game,
                    g1,
                    g2,
                    eng,
                    StrategySet::cube(game.d1(), bounds1.0, bounds1.1),
                    StrategySet::cube(game.d2(), bounds2.0, bounds2.1),
                )
                .map_err(|e| err(&e))?;
                let initial = initial_state(&fixture.game, initial, seed)?;
                Ok(BuiltScenario {
                    name: "quadratic",
                    game: fixture.game,
                    initial,
                    saddle: Some(fixture.saddle),
                    published: None,
                    k_analytic: Some(fixture.k_analytic),
                })
            }
            ScenarioConfig::ZeroPayoff {
                first,
                second,
                d1,
                d2,
                initial,
            } => {
                if *d1 == 0 || *d2 == 0 {
                    return invalid("scenario: d1 and d2 must be positive");
                }
                let g1 = first.build().map_err(|e| err(&e))?;
                let g2 = second.build().map_err(|e| err(&e))?;
                let (n1, n2) = (g1.vertex_count(), g2.vertex_count());
                let zero = |n: usize, d: usize| -> Vec<std::sync::Arc<dyn ExtendedPayoff>> {
                    (0..n).map(|_| std::sync::Arc::new(FnPayoff::zero(d)) as _).collect()
                };
                let game = TwoNetworkGame::new(
                    g1,
                    g2,
                    EngagementGraph::round_robin(n1, n2),
                    StrategySet::cube(*d1, -1.0, 1.0),
                    StrategySet::cube(*d2, -1.0, 1.0),
                    zero(n1, *d1),
                    zero(n2, *d2),
                )
                .map_err(|e| err(&e))?
                .declare_liftable();
                let initial = initial_state(&game, initial, seed)?;
                Ok(BuiltScenario {
                    name: "zero-payoff",
                    game,
                    saddle: Some((vec![0.0; *d1], vec![0.0; *d2])),
                    initial,
                    published: None,
                    k_analytic: Some(0.0),
                })
            }
        }
    }
}
