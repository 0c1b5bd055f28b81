//! Sectioned `key = value` configuration with per-value provenance.
//!
//! Precedence is flag > environment > file > default. Every key is known
//! in advance; unknown keys and malformed values are rejected with the key
//! path and, for file values, the line number.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use erfi_core::actuation::{InjectionConfig, InjectionMode, InjectionStrategy, StepResponseConfig};
use erfi_core::env::{
    DomainRandomization, EpisodeConfig, ObservationMode, TerrainKind, TerrainParams, MAX_COMMAND,
};
use erfi_core::harness::{PayloadSpec, SweepParam, SweepSpec, TrialSpec};
use erfi_core::policy::{PpoConfig, TrainConfig};
use erfi_core::rbd::{build_model, ModelParams, RobotModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Default,
    File { line: usize },
    Env(&'static str),
    Flag,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Default => f.write_str("default"),
            Source::File { line } => write!(f, "file line {line}"),
            Source::Env(name) => write!(f, "environment {name}"),
            Source::Flag => f.write_str("flag"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct ConfigError {
    pub file: Option<PathBuf>,
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(file) = &self.file {
            write!(f, "{}:", file.display())?;
        }
        if let Some(line) = self.line {
            write!(f, "{line}:")?;
        }
        if self.file.is_some() || self.line.is_some() {
            f.write_str(" ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "{key}: ")?;
        }
        f.write_str(&self.message)
    }
}

fn err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        file: None,
        line: None,
        key: Some(key.to_string()),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Float { min: f64, max: f64 },
    Int { min: u64 },
    Choice(&'static [&'static str]),
    /// Comma-separated positive integers.
    IntList,
    /// `default` or comma-separated numbers.
    Grid,
    Text,
}

const NON_NEGATIVE: Kind = Kind::Float {
    min: 0.0,
    max: f64::INFINITY,
};
const ANY: Kind = Kind::Float {
    min: f64::NEG_INFINITY,
    max: f64::INFINITY,
};
const UNIT: Kind = Kind::Float { min: 0.0, max: 1.0 };
const STRATEGIES: &[&str] = &["none", "rfi", "rao", "erfi-c", "erfi-50"];
const MODES: &[&str] = &["none", "rfi", "rao", "erfi-c"];
const TERRAINS: &[&str] = &["flat", "stairs", "rough"];
const PARAMS: &[&str] = &[
    "BASE_MASS_SCALE",
    "EXT_FORCE_N",
    "EXT_FORCE_DURATION_S",
    "EXT_TORQUE_NM",
    "FRICTION_MU",
    "GRAVITY_MS2",
    "KNEE_OFFSET_RAD",
    "PAYLOAD",
];

struct KeySpec {
    key: String,
    kind: Kind,
    default: String,
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn schema() -> Vec<KeySpec> {
    let spec = |key: &str, kind: Kind, default: String| KeySpec {
        key: key.to_string(),
        kind,
        default,
    };
    let episode = EpisodeConfig::default();
    let inj = InjectionConfig::default();
    let ppo = PpoConfig::default();
    let trial = TrialSpec::default();
    let step = StepResponseConfig::default();
    let pos = Kind::Float {
        min: f64::MIN_POSITIVE,
        max: f64::INFINITY,
    };
    let command = Kind::Float {
        min: -MAX_COMMAND,
        max: MAX_COMMAND,
    };
    let mut s = vec![
        spec("run.seed", Kind::Int { min: 0 }, "0".into()),
        spec("run.threads", Kind::Int { min: 0 }, "0".into()),
        spec("run.output_dir", Kind::Text, "runs".into()),
    ];
    for (k, v) in ModelParams::default().entries() {
        s.push(spec(&format!("model.{k}"), ANY, num(v)));
    }
    s.extend([
        spec("environment.max_duration", pos, num(episode.max_duration)),
        spec("environment.impedance_rate", pos, num(episode.impedance_rate)),
        spec("environment.decimation", Kind::Int { min: 1 }, episode.decimation.to_string()),
        spec("environment.kp", NON_NEGATIVE, num(episode.kp)),
        spec("environment.kd", NON_NEGATIVE, num(episode.kd)),
        spec("environment.action_scale", pos, num(episode.action_scale)),
        spec("environment.command_min", command, num(episode.command_range.0)),
        spec("environment.command_max", command, num(episode.command_range.1)),
        spec("environment.observation", Kind::Choice(&["blind", "perceptive"]), "blind".into()),
        spec("environment.terrain", Kind::Choice(TERRAINS), "flat".into()),
        spec("environment.friction", NON_NEGATIVE, num(episode.terrain.friction)),
        spec("environment.randomization", Kind::Choice(&["off", "baseline"]), "off".into()),
        spec("environment.reset_joint_noise", UNIT, num(episode.reset_joint_noise)),
        spec("injection.strategy", Kind::Choice(STRATEGIES), inj.strategy.name().into()),
        spec("injection.tau_lim_r", NON_NEGATIVE, num(inj.tau_lim_r)),
        spec("injection.tau_lim_o", NON_NEGATIVE, num(inj.tau_lim_o)),
        spec("injection.base_force_lim", NON_NEGATIVE, num(inj.base_force_lim)),
        spec("injection.base_torque_lim", NON_NEGATIVE, num(inj.base_torque_lim)),
        spec("trainer.num_envs", Kind::Int { min: 1 }, ppo.num_envs.to_string()),
        spec("trainer.horizon", Kind::Int { min: 1 }, ppo.horizon.to_string()),
        spec("trainer.epochs", Kind::Int { min: 1 }, ppo.epochs.to_string()),
        spec("trainer.minibatches", Kind::Int { min: 1 }, ppo.minibatches.to_string()),
        spec("trainer.clip", pos, num(ppo.clip)),
        spec("trainer.gamma", UNIT, num(ppo.gamma)),
        spec("trainer.lambda", UNIT, num(ppo.lambda)),
        spec("trainer.learning_rate", NON_NEGATIVE, num(ppo.learning_rate)),
        spec("trainer.entropy_coef", NON_NEGATIVE, num(ppo.entropy_coef)),
        spec("trainer.value_coef", NON_NEGATIVE, num(ppo.value_coef)),
        spec("trainer.max_grad_norm", pos, num(ppo.max_grad_norm)),
        spec("trainer.iterations", Kind::Int { min: 0 }, ppo.iterations.to_string()),
        spec(
            "trainer.hidden",
            Kind::IntList,
            ppo.hidden.iter().map(|h| h.to_string()).collect::<Vec<_>>().join(","),
        ),
        spec("trainer.initial_std", pos, num(ppo.initial_std)),
        spec("trainer.reward_scale", pos, num(ppo.reward_scale)),
        spec("sweep.param", Kind::Choice(PARAMS), "BASE_MASS_SCALE".into()),
        spec("sweep.grid", Kind::Grid, "default".into()),
        spec("sweep.trials", Kind::Int { min: 1 }, "50".into()),
        spec("sweep.terrain", Kind::Choice(TERRAINS), "flat".into()),
        spec("sweep.command", command, num(trial.command)),
        spec("sweep.budget", pos, num(trial.budget)),
        spec("sweep.threshold", ANY, num(trial.threshold)),
        spec("sweep.reset_noise", UNIT, num(trial.reset_noise)),
        spec("sweep.payload", Kind::Choice(&["off", "arm"]), "off".into()),
        spec("step_response.kp", NON_NEGATIVE, num(step.kp)),
        spec("step_response.kd", NON_NEGATIVE, num(step.kd)),
        spec("step_response.step", ANY, num(step.step)),
        spec("step_response.duration", pos, num(step.duration)),
        spec("step_response.dt", pos, num(step.dt)),
        spec("step_response.mode", Kind::Choice(MODES), "rfi".into()),
        spec("step_response.tau_lim_r", NON_NEGATIVE, "1".into()),
        spec("step_response.tau_lim_o", NON_NEGATIVE, "1".into()),
        spec("step_response.seeds", Kind::Int { min: 1 }, "100".into()),
    ]);
    s
}

fn check(kind: Kind, key: &str, value: &str) -> Result<String, ConfigError> {
    let v = value.trim();
    match kind {
        Kind::Float { min, max } => {
            let x: f64 = v
                .parse()
                .map_err(|_| err(key, format!("expected a number, got `{v}`")))?;
            if !x.is_finite() || x < min || x > max {
                return Err(err(key, format!("{x} outside [{min}, {max}]")));
            }
            if let Some(name) = key.strip_prefix("model.") {
                ModelParams::default()
                    .set(name, x)
                    .map_err(|e| err(key, e.to_string()))?;
            }
            Ok(v.to_string())
        }
        Kind::Int { min } => {
            let x: u64 = v
                .parse()
                .map_err(|_| err(key, format!("expected a non-negative integer, got `{v}`")))?;
            if x < min {
                return Err(err(key, format!("{x} is below {min}")));
            }
            Ok(v.to_string())
        }
        Kind::Choice(options) => {
            let norm = if key == "sweep.param" {
                v.to_ascii_uppercase()
            } else {
                v.to_ascii_lowercase()
            };
            if options.contains(&norm.as_str()) {
                Ok(norm)
            } else {
                Err(err(key, format!("`{v}` is not one of {}", options.join(", "))))
            }
        }
        Kind::IntList => {
            let items: Result<Vec<usize>, _> = v.split(',').map(|p| p.trim().parse::<usize>()).collect();
            match items {
                Ok(xs) if !xs.is_empty() && xs.iter().all(|&x| x > 0) => Ok(v.to_string()),
                _ => Err(err(key, format!("expected comma-separated positive integers, got `{v}`"))),
            }
        }
        Kind::Grid => {
            if v.eq_ignore_ascii_case("default") {
                return Ok("default".into());
            }
            let xs: Result<Vec<f64>, _> = v.split(',').map(|p| p.trim().parse::<f64>()).collect();
            match xs {
                Ok(xs) if !xs.is_empty() && xs.iter().all(|x| x.is_finite()) => {
                    if xs.windows(2).any(|w| w[0] >= w[1]) {
                        Err(err(key, "grid must be strictly increasing"))
                    } else {
                        Ok(v.to_string())
                    }
                }
                _ => Err(err(key, format!("expected `default` or comma-separated numbers, got `{v}`"))),
            }
        }
        Kind::Text => {
            if v.is_empty() {
                Err(err(key, "empty value"))
            } else {
                Ok(v.to_string())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub value: String,
    pub source: Source,
}

/// Fully resolved configuration: every known key has a value.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    entries: BTreeMap<String, Entry>,
    kinds: BTreeMap<String, Kind>,
    /// Section order for the snapshot.
    sections: Vec<String>,
}

/// One `key = value` assignment read from a file.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// Parses INI text. `#` and `;` start comments at the beginning of a line
/// or after whitespace.
pub fn parse_ini(text: &str) -> Result<Vec<Assignment>, ConfigError> {
    let mut section: Option<String> = None;
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let fail = |message: String| ConfigError {
            file: None,
            line: Some(line),
            key: None,
            message,
        };
        let mut content = raw;
        for marker in [" #", "\t#", " ;", "\t;"] {
            if let Some(p) = content.find(marker) {
                content = &content[..p];
            }
        }
        let content = content.trim();
        if content.is_empty() || content.starts_with('#') || content.starts_with(';') {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| fail(format!("malformed section header `{content}`")))?
                .trim();
            if name.is_empty() {
                return Err(fail("empty section name".into()));
            }
            section = Some(name.to_ascii_lowercase());
            continue;
        }
        let (k, v) = content
            .split_once('=')
            .ok_or_else(|| fail(format!("expected `key = value`, got `{content}`")))?;
        let k = k.trim().to_ascii_lowercase();
        if k.is_empty() {
            return Err(fail("missing key".into()));
        }
        let key = match &section {
            Some(s) => format!("{s}.{k}"),
            None => return Err(fail(format!("`{k}` appears before any [section]"))),
        };
        out.push(Assignment {
            key,
            value: v.trim().to_string(),
            line,
        });
    }
    Ok(out)
}

impl RunConfig {
    pub fn defaults() -> Self {
        let mut entries = BTreeMap::new();
        let mut kinds = BTreeMap::new();
        let mut sections: Vec<String> = Vec::new();
        for s in schema() {
            let section = s.key.split('.').next().unwrap().to_string();
            if !sections.contains(&section) {
                sections.push(section);
            }
            kinds.insert(s.key.clone(), s.kind);
            entries.insert(
                s.key,
                Entry {
                    value: s.default,
                    source: Source::Default,
                },
            );
        }
        Self {
            entries,
            kinds,
            sections,
        }
    }

    /// Sets `key` after checking it exists and its value is well-formed.
    pub fn set(&mut self, key: &str, value: &str, source: Source) -> Result<(), ConfigError> {
        let key = key.trim().to_ascii_lowercase();
        let kind = *self.kinds.get(&key).ok_or_else(|| {
            let hint = self
                .kinds
                .keys()
                .find(|k| near(k, &key))
                .map(|k| format!(" (did you mean `{k}`?)"))
                .unwrap_or_default();
            err(&key, format!("unknown key{hint}"))
        })?;
        let value = check(kind, &key, value).map_err(|mut e| {
            if let Source::File { line } = source {
                e.line = Some(line);
            }
            e
        })?;
        self.entries.insert(key, Entry { value, source });
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let with_file = |mut e: ConfigError| {
            e.file = Some(path.to_path_buf());
            e
        };
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            file: Some(path.to_path_buf()),
            line: None,
            key: None,
            message: format!("cannot read: {e}"),
        })?;
        for a in parse_ini(&text).map_err(with_file)? {
            self.set(&a.key, &a.value, Source::File { line: a.line })
                .map_err(|mut e| {
                    e.line = Some(a.line);
                    with_file(e)
                })?;
        }
        Ok(())
    }

    /// Defaults, then `file`, then environment values, then flag values.
    pub fn load(
        file: Option<&Path>,
        env: &[(&'static str, &str, Option<String>)],
        flags: &[(String, String)],
    ) -> Result<Self, ConfigError> {
        let mut c = Self::defaults();
        if let Some(path) = file {
            c.apply_file(path)?;
        }
        for (name, key, value) in env {
            if let Some(v) = value {
                c.set(key, v, Source::Env(name)).map_err(|mut e| {
                    e.message = format!("{} (from {name})", e.message);
                    e
                })?;
            }
        }
        for (k, v) in flags {
            c.set(k, v, Source::Flag)?;
        }
        Ok(c)
    }

    pub fn entry(&self, key: &str) -> &Entry {
        self.entries
            .get(key)
            .unwrap_or_else(|| panic!("`{key}` is not in the schema"))
    }

    pub fn get(&self, key: &str) -> &str {
        &self.entry(key).value
    }

    #[cfg(test)]
    pub fn source(&self, key: &str) -> Source {
        self.entry(key).source
    }

    pub fn f64(&self, key: &str) -> f64 {
        self.get(key).parse().expect("checked on insertion")
    }

    pub fn u64(&self, key: &str) -> u64 {
        self.get(key).parse().expect("checked on insertion")
    }

    pub fn usize(&self, key: &str) -> usize {
        self.get(key).parse().expect("checked on insertion")
    }

    /// Resolved configuration as INI text, each value annotated with where
    /// it came from. Loading it back reproduces this configuration.
    pub fn to_ini(&self) -> String {
        let mut out = String::new();
        for section in &self.sections {
            out += &format!("[{section}]\n");
            let prefix = format!("{section}.");
            for (k, e) in self.entries.iter().filter(|(k, _)| k.starts_with(&prefix)) {
                out += &format!("{} = {}  # {}\n", &k[prefix.len()..], e.value, e.source);
            }
            out.push('\n');
        }
        out
    }

    pub fn seed(&self) -> u64 {
        self.u64("run.seed")
    }

    /// Zero means every available core.
    pub fn threads(&self) -> usize {
        self.usize("run.threads")
    }

    pub fn model_params(&self) -> ModelParams {
        let mut p = ModelParams::default();
        for k in ModelParams::keys() {
            p.set(k, self.f64(&format!("model.{k}")))
                .expect("checked on insertion");
        }
        p
    }

    pub fn model(&self) -> Result<RobotModel, ConfigError> {
        build_model(&self.model_params()).map_err(|e| err("model", e.to_string()))
    }

    pub fn injection(&self) -> InjectionConfig {
        InjectionConfig {
            strategy: self.get("injection.strategy").parse().expect("checked on insertion"),
            tau_lim_r: self.f64("injection.tau_lim_r"),
            tau_lim_o: self.f64("injection.tau_lim_o"),
            base_force_lim: self.f64("injection.base_force_lim"),
            base_torque_lim: self.f64("injection.base_torque_lim"),
        }
    }

    pub fn strategy(&self) -> InjectionStrategy {
        self.injection().strategy
    }

    pub fn episode(&self) -> Result<EpisodeConfig, ConfigError> {
        let terrain_kind: TerrainKind = self.get("environment.terrain").parse().expect("checked");
        let e = EpisodeConfig {
            max_duration: self.f64("environment.max_duration"),
            impedance_rate: self.f64("environment.impedance_rate"),
            decimation: self.usize("environment.decimation"),
            injection: self.injection(),
            randomization: match self.get("environment.randomization") {
                "baseline" => DomainRandomization::baseline(),
                _ => DomainRandomization::disabled(),
            },
            terrain: TerrainParams {
                kind: terrain_kind,
                friction: self.f64("environment.friction"),
                ..TerrainParams::default()
            },
            command_range: (
                self.f64("environment.command_min"),
                self.f64("environment.command_max"),
            ),
            observation: match self.get("environment.observation") {
                "perceptive" => ObservationMode::Perceptive,
                _ => ObservationMode::Blind,
            },
            action_scale: self.f64("environment.action_scale"),
            kp: self.f64("environment.kp"),
            kd: self.f64("environment.kd"),
            reset_joint_noise: self.f64("environment.reset_joint_noise"),
            ..EpisodeConfig::default()
        };
        e.validate().map_err(|x| err("environment", x.to_string()))?;
        e.injection
            .validate()
            .map_err(|x| err("injection", x.to_string()))?;
        Ok(e)
    }

    pub fn train(&self) -> Result<TrainConfig, ConfigError> {
        let ppo = PpoConfig {
            num_envs: self.usize("trainer.num_envs"),
            horizon: self.usize("trainer.horizon"),
            epochs: self.usize("trainer.epochs"),
            minibatches: self.usize("trainer.minibatches"),
            clip: self.f64("trainer.clip"),
            gamma: self.f64("trainer.gamma"),
            lambda: self.f64("trainer.lambda"),
            learning_rate: self.f64("trainer.learning_rate"),
            entropy_coef: self.f64("trainer.entropy_coef"),
            value_coef: self.f64("trainer.value_coef"),
            max_grad_norm: self.f64("trainer.max_grad_norm"),
            iterations: self.usize("trainer.iterations"),
            hidden: self
                .get("trainer.hidden")
                .split(',')
                .map(|h| h.trim().parse().expect("checked on insertion"))
                .collect(),
            initial_std: self.f64("trainer.initial_std"),
            reward_scale: self.f64("trainer.reward_scale"),
        };
        ppo.validate().map_err(|e| err("trainer", e.to_string()))?;
        Ok(TrainConfig {
            episode: self.episode()?,
            ppo,
            strategy: self.strategy(),
            seed: self.seed(),
        })
    }

    pub fn sweep_param(&self) -> SweepParam {
        self.get("sweep.param").parse().expect("checked on insertion")
    }

    pub fn sweep(&self, model: &RobotModel) -> Result<SweepSpec, ConfigError> {
        let param = self.sweep_param();
        let grid = match self.get("sweep.grid") {
            "default" => param.default_grid(model),
            list => list
                .split(',')
                .map(|v| v.trim().parse().expect("checked on insertion"))
                .collect(),
        };
        let (lo, hi) = param.range(model);
        if let Some(v) = grid.iter().find(|v| **v < lo - 1e-9 || **v > hi + 1e-9) {
            return Err(err("sweep.grid", format!("{v} outside [{lo}, {hi}] for {param}")));
        }
        let spec = SweepSpec {
            param,
            grid,
            trials: self.usize("sweep.trials"),
            terrain: TerrainParams {
                kind: self.get("sweep.terrain").parse().expect("checked"),
                ..TerrainParams::default()
            },
            trial: TrialSpec {
                command: self.f64("sweep.command"),
                budget: self.f64("sweep.budget"),
                threshold: self.f64("sweep.threshold"),
                reset_noise: self.f64("sweep.reset_noise"),
                episode: self.episode()?,
            },
            payload: (self.get("sweep.payload") == "arm").then(|| PayloadSpec::arm(model)),
            seed: self.seed(),
        };
        spec.validate().map_err(|e| err("sweep", e.to_string()))?;
        Ok(spec)
    }

    pub fn step_response(&self) -> (StepResponseConfig, usize) {
        let mode = match self.get("step_response.mode") {
            "rfi" => InjectionMode::Rfi,
            "rao" => InjectionMode::Rao,
            "erfi-c" => InjectionMode::ErfiC,
            _ => InjectionMode::None,
        };
        (
            StepResponseConfig {
                kp: self.f64("step_response.kp"),
                kd: self.f64("step_response.kd"),
                step: self.f64("step_response.step"),
                duration: self.f64("step_response.duration"),
                dt: self.f64("step_response.dt"),
                mode,
                tau_lim_r: self.f64("step_response.tau_lim_r"),
                tau_lim_o: self.f64("step_response.tau_lim_o"),
                ..StepResponseConfig::default()
            },
            self.usize("step_response.seeds"),
        )
    }
}

/// One edit apart: a substitution, insertion, deletion or adjacent swap.
fn near(a: &str, b: &str) -> bool {
    let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
    if a.len() == b.len() {
        let diff: Vec<usize> = (0..a.len()).filter(|&i| a[i] != b[i]).collect();
        return diff.len() == 1
            || (diff.len() == 2 && diff[1] == diff[0] + 1 && a[diff[0]] == b[diff[1]] && a[diff[1]] == b[diff[0]]);
    }
    let (short, long) = if a.len() < b.len() { (&a, &b) } else { (&b, &a) };
    if long.len() - short.len() != 1 {
        return false;
    }
    let i = (0..short.len()).find(|&i| short[i] != long[i]).unwrap_or(short.len());
    short[i..] == long[i + 1..]
}
