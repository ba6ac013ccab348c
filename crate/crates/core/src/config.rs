//! Run configuration: a sectioned TOML file plus environment and flag
//! overrides.
//!
//! Precedence, highest first: command-line flags, `PGLAB_*` environment
//! variables, the config file, built-in defaults. Unset optional fields fall
//! back to the experiment's own defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::approximators::{OptimizerConfig, OptimizerKind};
use crate::distributions::ChainMode;
use crate::error::{Error, Result};
use crate::experiments::{Exp1Settings, Exp2Settings};
use crate::grid::{GridSpec, InitialDistMode};
use crate::training::Method;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    /// `"default"` for the built-in map, otherwise a path to an ASCII map.
    pub map: String,
    pub gamma: f64,
    pub chain_mode: ChainMode,
    /// `"uniform"` (all non-terminal states) or `"start"` (the S cell).
    pub d0: String,
    /// State dropped from the initial support in cases 3 and 4.
    pub excluded_state: Option<usize>,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self {
            map: "default".into(),
            gamma: 0.9,
            chain_mode: ChainMode::Restart,
            d0: "uniform".into(),
            excluded_state: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    /// Empty means the experiment's default method list.
    pub methods: Vec<Method>,
    /// Experiment 2 case ids; empty means all four.
    pub cases: Vec<usize>,
    /// Number of seeded runs.
    pub seeds: usize,
    /// Base seed; run `k` uses `seed + k`.
    pub seed: u64,
    /// Critic steps per policy update (overrides the case table).
    pub m: Option<usize>,
    /// Experiment 1 outer iterations.
    pub iterations: Option<usize>,
    /// Experiment 2 policy-update budget.
    pub policy_updates: Option<usize>,
    pub hidden: Option<Vec<usize>>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            methods: Vec::new(),
            cases: Vec::new(),
            seeds: 5,
            seed: 0,
            m: None,
            iterations: None,
            policy_updates: None,
            hidden: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimSection {
    pub lr_policy: Option<f64>,
    pub lr_value: Option<f64>,
    pub policy_optimizer: Option<OptimizerKind>,
    pub value_optimizer: Option<OptimizerKind>,
    pub robbins_monro: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("results") }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceSection {
    pub value_tol: Option<f64>,
    pub policy_tol: Option<f64>,
    pub entropy_tol: Option<f64>,
    pub entropy_window: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvSection,
    pub train: TrainSection,
    pub optim: OptimSection,
    pub output: OutputSection,
    pub tolerances: ToleranceSection,
}

/// Keys accepted by [`RunConfig::apply`]; each is also a `--flag` and a
/// `PGLAB_<KEY>` variable (upper case, `-` as `_`).
pub const OVERRIDE_KEYS: [&str; 11] = [
    "map",
    "gamma",
    "chain-mode",
    "method",
    "case",
    "seeds",
    "seed",
    "out",
    "m",
    "lr-policy",
    "lr-value",
];

pub fn env_var_name(key: &str) -> String {
    format!("PGLAB_{}", key.to_uppercase().replace('-', "_"))
}

fn parse_field<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse {value:?}")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .filter(|x| !x.trim().is_empty())
        .map(|x| parse_field(key, x))
        .collect()
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let field = e.message().split('`').nth(1).unwrap_or("file").to_string();
            Error::config(field, e.message().trim().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Canonical TOML form; loading it back gives an identical config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.env.gamma;
        if !(g > 0.0 && g < 1.0) {
            return Err(Error::config("env.gamma", format!("must be in (0, 1), got {g}")));
        }
        if !matches!(self.env.d0.as_str(), "uniform" | "start") {
            return Err(Error::config("env.d0", "must be \"uniform\" or \"start\""));
        }
        if self.env.map.trim().is_empty() {
            return Err(Error::config("env.map", "must name \"default\" or a map file"));
        }
        if self.train.seeds == 0 {
            return Err(Error::config("train.seeds", "must be >= 1"));
        }
        if let Some(c) = self.train.cases.iter().find(|c| !(1..=4).contains(*c)) {
            return Err(Error::config("train.cases", format!("case {c} is not in 1..=4")));
        }
        if self.train.m == Some(0) {
            return Err(Error::config("train.m", "must be >= 1"));
        }
        if self.train.iterations == Some(0) || self.train.policy_updates == Some(0) {
            return Err(Error::config("train.iterations", "iteration budgets must be >= 1"));
        }
        if let Some(h) = &self.train.hidden {
            if h.is_empty() || h.contains(&0) {
                return Err(Error::config("train.hidden", "needs at least one positive width"));
            }
        }
        for (field, v) in [("optim.lr_policy", self.optim.lr_policy), ("optim.lr_value", self.optim.lr_value)] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    return Err(Error::config(field, format!("must be finite and >= 0, got {v}")));
                }
            }
        }
        for (field, v) in [
            ("tolerances.value_tol", self.tolerances.value_tol),
            ("tolerances.policy_tol", self.tolerances.policy_tol),
            ("tolerances.entropy_tol", self.tolerances.entropy_tol),
        ] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(Error::config(field, format!("must be > 0, got {v}")));
                }
            }
        }
        Ok(())
    }

    /// Sets one override key (see [`OVERRIDE_KEYS`]) from its text form.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "map" => self.env.map = value.to_string(),
            "gamma" => self.env.gamma = parse_field(key, value)?,
            "chain-mode" => self.env.chain_mode = parse_field(key, value)?,
            "method" => self.train.methods = parse_list(key, value)?,
            "case" => self.train.cases = parse_list(key, value)?,
            "seeds" => self.train.seeds = parse_field(key, value)?,
            "seed" => self.train.seed = parse_field(key, value)?,
            "out" => self.output.dir = PathBuf::from(value),
            "m" => self.train.m = Some(parse_field(key, value)?),
            "lr-policy" => self.optim.lr_policy = Some(parse_field(key, value)?),
            "lr-value" => self.optim.lr_value = Some(parse_field(key, value)?),
            other => return Err(Error::config(other, "unknown override key")),
        }
        Ok(())
    }

    /// Applies every `PGLAB_*` variable `lookup` returns.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<()> {
        for key in OVERRIDE_KEYS {
            if let Some(v) = lookup(&env_var_name(key)) {
                self.apply(key, &v)?;
            }
        }
        Ok(())
    }

    /// Defaults, then `file`, then environment, then `flags`; validated.
    pub fn resolve(
        file: Option<&Path>,
        lookup: impl Fn(&str) -> Option<String>,
        flags: &[(&str, String)],
    ) -> Result<Self> {
        let mut cfg = match file {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply_env(lookup)?;
        for (k, v) in flags {
            cfg.apply(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        if self.env.map == "default" {
            Ok(GridSpec::default_map())
        } else {
            GridSpec::load(Path::new(&self.env.map))
        }
    }

    pub fn initial_mode(&self) -> InitialDistMode {
        match self.env.d0.as_str() {
            "start" => InitialDistMode::SingleStart,
            _ => InitialDistMode::UniformAll,
        }
    }

    fn optimizer(base: OptimizerConfig, kind: Option<OptimizerKind>, lr: Option<f64>, rm: bool) -> OptimizerConfig {
        OptimizerConfig {
            kind: kind.unwrap_or(base.kind),
            step_size: lr.unwrap_or(base.step_size),
            robbins_monro: rm || base.robbins_monro,
        }
    }

    pub fn exp1_settings(&self) -> Result<Exp1Settings> {
        let d = Exp1Settings::default();
        Ok(Exp1Settings {
            map: self.grid_spec()?,
            discount: self.env.gamma,
            initial: self.initial_mode(),
            runs: self.train.seeds,
            iterations: self.train.iterations.unwrap_or(d.iterations),
            hidden: self.train.hidden.clone().unwrap_or(d.hidden),
            value_optimizer: Self::optimizer(d.value_optimizer, self.optim.value_optimizer, self.optim.lr_value, false),
            policy_optimizer: Self::optimizer(
                d.policy_optimizer,
                self.optim.policy_optimizer,
                self.optim.lr_policy,
                self.optim.robbins_monro,
            ),
            value_tol: self.tolerances.value_tol.unwrap_or(d.value_tol),
            policy_tol: self.tolerances.policy_tol.unwrap_or(d.policy_tol),
            chain_mode: self.env.chain_mode,
            methods: if self.train.methods.is_empty() { d.methods } else { self.train.methods.clone() },
            ..d
        })
    }

    pub fn exp2_settings(&self) -> Result<Exp2Settings> {
        let d = Exp2Settings::default();
        Ok(Exp2Settings {
            map: self.grid_spec()?,
            discount: self.env.gamma,
            runs: self.train.seeds,
            policy_updates: self.train.policy_updates.unwrap_or(d.policy_updates),
            hidden: self.train.hidden.clone().unwrap_or(d.hidden),
            value_optimizer: Self::optimizer(d.value_optimizer, self.optim.value_optimizer, self.optim.lr_value, false),
            policy_optimizer: Self::optimizer(
                d.policy_optimizer,
                self.optim.policy_optimizer,
                self.optim.lr_policy,
                self.optim.robbins_monro,
            ),
            entropy_tol: self.tolerances.entropy_tol.unwrap_or(d.entropy_tol),
            entropy_window: self.tolerances.entropy_window.unwrap_or(d.entropy_window),
            policy_tol: self.tolerances.policy_tol.unwrap_or(d.policy_tol),
            excluded_state: self.env.excluded_state,
            cases: if self.train.cases.is_empty() { d.cases } else { self.train.cases.clone() },
            m_override: self.train.m,
            methods: if self.train.methods.is_empty() { d.methods } else { self.train.methods.clone() },
            chain_mode: self.env.chain_mode,
            ..d
        })
    }
}
