//! Trial configuration files (TOML). Every physical quantity carries its
//! unit in the key name.

use std::path::{Path, PathBuf};

use gaitradar::pipeline::{Configuration, DEFAULT_SNR_DB};
use gaitradar::sim::{
    standard_layout, Focus, NodeGeometry, Pace, Protocol, RadarWaveform, Side, TrialScript, WalkerProfile,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {}: {source}", path.display())]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("invalid value for {field}: {reason}")]
    Field { field: String, reason: String },
    #[error("bad override {0:?}: expected key=value")]
    Override(String),
    #[error("configuration requires {required} nodes ({configuration} declares {found})")]
    NodeCount {
        configuration: Configuration,
        required: usize,
        found: usize,
    },
}

fn field(field: impl Into<String>, reason: impl ToString) -> ConfigError {
    ConfigError::Field {
        field: field.into(),
        reason: reason.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveformConfig {
    pub f0_ghz: f64,
    pub bandwidth_ghz: f64,
    pub chirp_time_us: f64,
    pub sample_rate_ksps: f64,
}

impl Default for WaveformConfig {
    fn default() -> Self {
        Self {
            f0_ghz: 23.0,
            bandwidth_ghz: 1.4,
            chirp_time_us: 625.0,
            sample_rate_ksps: 256.0,
        }
    }
}

impl WaveformConfig {
    pub fn build(&self) -> Result<RadarWaveform, ConfigError> {
        RadarWaveform::new(
            self.f0_ghz * 1e9,
            self.bandwidth_ghz * 1e9,
            self.chirp_time_us * 1e-6,
            self.sample_rate_ksps * 1e3,
        )
        .map_err(|e| field("waveform", e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    HealthyYoung,
    HealthyAged,
    Parkinsonian,
}

/// A preset walker with optional per-field overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkerConfig {
    pub preset: Preset,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride_time_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride_length_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duty_factor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub torso_height_m: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub foot_peak_velocity_mps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub right_foot_peak_velocity_mps: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub torso_velocity_modulation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub torso_jitter: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub asymmetry: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride_variability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub foot_reflectivity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limb_reflectivity: Option<f64>,
}

impl Default for WalkerConfig {
    fn default() -> Self {
        Self::preset(Preset::HealthyYoung)
    }
}

impl WalkerConfig {
    pub fn preset(preset: Preset) -> Self {
        Self {
            preset,
            stride_time_s: None,
            stride_length_m: None,
            duty_factor: None,
            torso_height_m: None,
            foot_peak_velocity_mps: None,
            right_foot_peak_velocity_mps: None,
            torso_velocity_modulation: None,
            torso_jitter: None,
            asymmetry: None,
            stride_variability: None,
            foot_reflectivity: None,
            limb_reflectivity: None,
        }
    }

    pub fn build(&self) -> Result<WalkerProfile, ConfigError> {
        let mut p = match self.preset {
            Preset::HealthyYoung => WalkerProfile::healthy_young(),
            Preset::HealthyAged => WalkerProfile::healthy_aged(),
            Preset::Parkinsonian => WalkerProfile::parkinsonian(),
        };
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut p.stride_time, self.stride_time_s);
        set(&mut p.stride_length, self.stride_length_m);
        set(&mut p.duty_factor, self.duty_factor);
        set(&mut p.torso_height, self.torso_height_m);
        set(&mut p.foot_peak_velocity, self.foot_peak_velocity_mps);
        set(&mut p.torso_velocity_modulation, self.torso_velocity_modulation);
        set(&mut p.torso_jitter, self.torso_jitter);
        set(&mut p.asymmetry, self.asymmetry);
        set(&mut p.stride_variability, self.stride_variability);
        set(&mut p.foot_reflectivity, self.foot_reflectivity);
        set(&mut p.limb_reflectivity, self.limb_reflectivity);
        if self.right_foot_peak_velocity_mps.is_some() {
            p.right_foot_peak_velocity = self.right_foot_peak_velocity_mps;
        }
        p.validate().map_err(|e| field("walker", e))?;
        Ok(p)
    }
}

/// One clinical test of the suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestConfig {
    pub name: String,
    pub protocol: Protocol,
    pub repetitions: u32,
    pub pace: Pace,
    #[serde(default = "default_path_length")]
    pub path_length_m: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_cap_s: Option<f64>,
}

fn default_path_length() -> f64 {
    3.0
}

impl TestConfig {
    pub fn script(&self) -> TrialScript {
        TrialScript {
            protocol: self.protocol,
            path_length: self.path_length_m,
            repetitions: self.repetitions,
            pace: self.pace,
            duration_cap: self.duration_cap_s,
        }
    }

    /// The five clinical tests.
    pub fn clinical_suite() -> Vec<TestConfig> {
        let names = ["tug", "walk_normal", "walk_slow", "walk_quick", "walk_2min"];
        TrialScript::clinical_tests()
            .into_iter()
            .zip(names)
            .map(|(s, name)| TestConfig {
                name: name.into(),
                protocol: s.protocol,
                repetitions: s.repetitions,
                pace: s.pace,
                path_length_m: s.path_length,
                duration_cap_s: s.duration_cap,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeConfig {
    pub id: u32,
    /// Walkway end the node stands at, 1 or 2.
    pub side: u8,
    pub focus: Focus,
    pub position_m: [f64; 3],
    pub boresight: [f64; 3],
    pub beamwidth_deg: f64,
}

impl NodeConfig {
    pub fn from_geometry(n: &NodeGeometry) -> Self {
        Self {
            id: n.id,
            side: match n.side {
                Side::One => 1,
                Side::Two => 2,
            },
            focus: n.focus,
            position_m: n.position,
            boresight: n.boresight,
            beamwidth_deg: n.beamwidth,
        }
    }

    pub fn build(&self) -> Result<NodeGeometry, ConfigError> {
        let side = match self.side {
            1 => Side::One,
            2 => Side::Two,
            s => return Err(field(format!("nodes[{}].side", self.id), format!("{s} is not 1 or 2"))),
        };
        NodeGeometry::new(self.id, side, self.focus, self.position_m, self.boresight, self.beamwidth_deg)
            .map_err(|e| field(format!("nodes[{}]", self.id), e))
    }
}

fn default_configuration() -> Configuration {
    Configuration::C5
}

fn default_snr() -> f64 {
    DEFAULT_SNR_DB
}

fn default_output() -> PathBuf {
    PathBuf::from("gaitradar-out")
}

fn default_lateral_offset() -> f64 {
    0.3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialConfig {
    #[serde(default = "default_configuration", with = "configuration_name")]
    pub configuration: Configuration,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_snr")]
    pub snr_db: f64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Directory of recordings laid out as `<test>/node<id>.gwiq`; when
    /// absent, trials are simulated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_dir: Option<PathBuf>,
    /// Sideways distance of the default nodes from the walking line.
    #[serde(default = "default_lateral_offset")]
    pub lateral_offset_m: f64,
    #[serde(default)]
    pub waveform: WaveformConfig,
    #[serde(default)]
    pub walker: WalkerConfig,
    #[serde(default = "TestConfig::clinical_suite")]
    pub tests: Vec<TestConfig>,
    /// Explicit node geometry. Defaults to the standard layout restricted to
    /// the nodes the configuration uses.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<NodeConfig>,
}

mod configuration_name {
    use gaitradar::pipeline::Configuration;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(c: &Configuration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(c.name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Configuration, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl Default for TrialConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config takes every default")
    }
}

/// Nodes of the standard layout that `config` uses.
pub fn layout_for(config: Configuration, path_length: f64, lateral_offset: f64) -> Vec<NodeGeometry> {
    let roles = config.roles();
    standard_layout(path_length, lateral_offset)
        .into_iter()
        .filter(|n| roles.contains(&(n.side, n.focus)))
        .collect()
}

impl TrialConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        Self::from_value(parse_value(text, origin)?, origin)
    }

    fn from_value(value: toml::Value, origin: &Path) -> Result<Self, ConfigError> {
        let cfg: TrialConfig = value.try_into().map_err(|e: toml::de::Error| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path` and applies `key=value` overrides (dotted keys, TOML
    /// values; bare words are taken as strings) before validating.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let origin = path.unwrap_or(Path::new("<defaults>"));
        let mut value = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
                    path: p.to_path_buf(),
                    source,
                })?;
                parse_value(&text, origin)?
            }
            None => toml::Value::Table(Default::default()),
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        Self::from_value(value, origin)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.waveform.build()?;
        self.walker.build()?;
        if !self.snr_db.is_finite() {
            return Err(field("snr_db", "must be finite"));
        }
        if self.tests.is_empty() {
            return Err(field("tests", "at least one test is required"));
        }
        let mut names = std::collections::BTreeSet::new();
        for t in &self.tests {
            if t.name.is_empty() || t.name.contains(['/', '\\']) || !names.insert(&t.name) {
                return Err(field("tests.name", format!("{:?} must be unique, non-empty and path-safe", t.name)));
            }
            t.script().validate().map_err(|e| field(format!("tests[{}]", t.name), e))?;
        }
        let required = self.configuration.roles().len();
        if !self.nodes.is_empty() && self.nodes.len() != required {
            return Err(ConfigError::NodeCount {
                configuration: self.configuration,
                required,
                found: self.nodes.len(),
            });
        }
        let mut ids = std::collections::BTreeSet::new();
        for n in &self.nodes {
            n.build()?;
            if !ids.insert(n.id) {
                return Err(field("nodes.id", format!("node {} declared twice", n.id)));
            }
        }
        Ok(())
    }

    /// Node geometry for a test's walkway.
    pub fn node_geometry(&self, test: &TestConfig) -> Result<Vec<NodeGeometry>, ConfigError> {
        if self.nodes.is_empty() {
            Ok(layout_for(self.configuration, test.path_length_m, self.lateral_offset_m))
        } else {
            self.nodes.iter().map(NodeConfig::build).collect()
        }
    }

    /// The configuration with machine-local paths cleared, as hashed into
    /// report provenance.
    pub fn canonical(&self) -> TrialConfig {
        TrialConfig {
            output_dir: PathBuf::new(),
            input_dir: None,
            ..self.clone()
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

fn parse_value(text: &str, origin: &Path) -> Result<toml::Value, ConfigError> {
    text.parse::<toml::Table>()
        .map(toml::Value::Table)
        .map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.message().to_string(),
        })
}

fn apply_override(root: &mut toml::Value, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(assignment.into()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::Override(assignment.into()));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.into()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().expect("split yields at least one part");
    let mut table = root;
    for part in parts {
        let toml::Value::Table(t) = table else {
            return Err(ConfigError::Override(assignment.into()));
        };
        table = t
            .entry(part)
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    match table {
        toml::Value::Table(t) => {
            t.insert(last.into(), value);
            Ok(())
        }
        _ => Err(ConfigError::Override(assignment.into())),
    }
}
