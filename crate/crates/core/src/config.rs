//! Operator configuration: a line-oriented `key = value` file with
//! `[section]` headers, overridden by command-line flags.
//!
//! ```text
//! # comment
//! [channel]
//! arm_km = 25
//! saturation_cap = none
//! [network]
//! dc1 = 127.0.0.1:7401
//! ```
//!
//! Every field has a default; [`AppConfig::source`] reports where each
//! value came from.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::qkd::channel::{
    DEFAULT_DARK_COUNT, DEFAULT_DETECTOR_EFFICIENCY, DEFAULT_F_EC, DEFAULT_LOSS_DB_PER_KM, DEFAULT_MISALIGNMENT,
    DEFAULT_PE_FRACTION, DEFAULT_REPETITION_RATE_HZ, DEFAULT_SATURATION_CAP,
};
use crate::qkd::finite_key::{DEFAULT_EPS_COR, DEFAULT_EPS_SEC};
use crate::qkd::{ChannelModel, SearchConstraints};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Default,
    File { line: usize },
    Flag,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Default => write!(f, "default"),
            Source::File { line } => write!(f, "file:{line}"),
            Source::Flag => write!(f, "flag"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Float,
    OptFloat,
    Uint,
    Bool,
    Text,
    FloatList,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::Float => "number",
            Kind::OptFloat => "number or `none`",
            Kind::Uint => "non-negative integer",
            Kind::Bool => "true/false",
            Kind::Text => "text",
            Kind::FloatList => "comma-separated numbers",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Float(f64),
    OptFloat(Option<f64>),
    Uint(u64),
    Bool(bool),
    Text(String),
    FloatList(Vec<f64>),
}

fn parse_value(kind: Kind, raw: &str) -> Option<Value> {
    let raw = raw.trim();
    let unq = raw.strip_prefix('"').and_then(|s| s.strip_suffix('"')).unwrap_or(raw);
    let float = |s: &str| s.trim().parse::<f64>().ok().filter(|v| v.is_finite());
    Some(match kind {
        Kind::Float => Value::Float(float(raw)?),
        Kind::OptFloat if raw.eq_ignore_ascii_case("none") => Value::OptFloat(None),
        Kind::OptFloat => Value::OptFloat(Some(float(raw)?)),
        // Integers may be written in float notation (`5e3`) if exact.
        Kind::Uint => Value::Uint(match raw.parse::<u64>() {
            Ok(v) => v,
            Err(_) => {
                let f = float(raw)?;
                if f < 0.0 || f.fract() != 0.0 || f > u64::MAX as f64 {
                    return None;
                }
                f as u64
            }
        }),
        Kind::Bool => Value::Bool(match raw {
            "true" | "yes" | "on" => true,
            "false" | "no" | "off" => false,
            _ => return None,
        }),
        Kind::Text => Value::Text(unq.to_string()),
        Kind::FloatList if unq.trim().is_empty() => Value::FloatList(Vec::new()),
        Kind::FloatList => Value::FloatList(unq.split(',').map(float).collect::<Option<Vec<_>>>()?),
    })
}

struct Field {
    key: &'static str,
    kind: Kind,
    doc: &'static str,
}

const fn field(key: &'static str, kind: Kind, doc: &'static str) -> Field {
    Field { key, kind, doc }
}

const FIELDS: &[Field] = &[
    field("channel.loss_db_per_km", Kind::Float, "fibre loss"),
    field("channel.detector_efficiency", Kind::Float, "relay detector efficiency"),
    field("channel.dark_count", Kind::Float, "dark count probability per gate"),
    field(
        "channel.misalignment",
        Kind::Float,
        "optical misalignment error (calibrated)",
    ),
    field(
        "channel.saturation_cap",
        Kind::OptFloat,
        "detector saturation, counts/s (calibrated)",
    ),
    field("channel.repetition_rate_hz", Kind::Float, "source repetition rate"),
    field("channel.arm_km", Kind::Float, "fibre length of each arm"),
    field(
        "protocol.n_pulses",
        Kind::Float,
        "pulses sent per link; 5.85e13 is the alternative reading",
    ),
    field("protocol.eps_sec", Kind::Float, "secrecy parameter"),
    field("protocol.eps_cor", Kind::Float, "correctness parameter"),
    field(
        "protocol.pe_fraction",
        Kind::Float,
        "sifted fraction disclosed for parameter estimation",
    ),
    field("protocol.f_ec", Kind::Float, "error-correction efficiency"),
    field(
        "protocol.capped",
        Kind::Bool,
        "bound the signal intensity by the saturation cap",
    ),
    field(
        "protocol.optimize_eps_split",
        Kind::Bool,
        "optimise the security-parameter split",
    ),
    field("protocol.population", Kind::Uint, "optimiser population"),
    field("protocol.generations", Kind::Uint, "optimiser generations"),
    field(
        "database.source",
        Kind::Text,
        "record directory or manifest; empty for synthetic",
    ),
    field("database.snapshot", Kind::Text, "cube snapshot path"),
    field("database.manifest", Kind::Text, "manifest path"),
    field("database.synthetic_n", Kind::Uint, "records in the synthetic database"),
    field("database.synthetic_max_bytes", Kind::Uint, "largest synthetic record"),
    field("keys.dir", Kind::Text, "pool directory"),
    field(
        "keys.reuse_keys",
        Kind::Bool,
        "use one distilled key for all three links",
    ),
    field("network.dc1", Kind::Text, "DC1 endpoint host:port"),
    field("network.dc2", Kind::Text, "DC2 endpoint host:port"),
    field("run.seed", Kind::Uint, "seed for every randomised step"),
    field("run.output_dir", Kind::Text, "output directory"),
    field("sweep.distances_km", Kind::FloatList, "total distances to sweep"),
    field("sweep.n_capped", Kind::Float, "pulses for the capped curve"),
    field("sweep.n_uncapped", Kind::Float, "pulses for the uncapped curve"),
    field("sweep.csv", Kind::Text, "curve output file"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSection {
    pub loss_db_per_km: f64,
    pub detector_efficiency: f64,
    pub dark_count: f64,
    pub misalignment: f64,
    pub saturation_cap: Option<f64>,
    pub repetition_rate_hz: f64,
    pub arm_km: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSection {
    pub n_pulses: f64,
    pub eps_sec: f64,
    pub eps_cor: f64,
    pub pe_fraction: f64,
    pub f_ec: f64,
    pub capped: bool,
    pub optimize_eps_split: bool,
    pub population: u64,
    pub generations: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatabaseSection {
    pub source: Option<PathBuf>,
    pub snapshot: PathBuf,
    pub manifest: PathBuf,
    pub synthetic_n: u64,
    pub synthetic_max_bytes: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeysSection {
    pub dir: PathBuf,
    pub reuse_keys: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSection {
    pub dc1: String,
    pub dc2: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub seed: u64,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSection {
    pub distances_km: Vec<f64>,
    pub n_capped: f64,
    pub n_uncapped: f64,
    pub csv: PathBuf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppConfig {
    pub channel: ChannelSection,
    pub protocol: ProtocolSection,
    pub database: DatabaseSection,
    pub keys: KeysSection,
    pub network: NetworkSection,
    pub run: RunSection,
    pub sweep: SweepSection,
    sources: BTreeMap<&'static str, Source>,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            channel: ChannelSection {
                loss_db_per_km: DEFAULT_LOSS_DB_PER_KM,
                detector_efficiency: DEFAULT_DETECTOR_EFFICIENCY,
                dark_count: DEFAULT_DARK_COUNT,
                misalignment: DEFAULT_MISALIGNMENT,
                saturation_cap: Some(DEFAULT_SATURATION_CAP),
                repetition_rate_hz: DEFAULT_REPETITION_RATE_HZ,
                arm_km: 25.0,
            },
            protocol: ProtocolSection {
                n_pulses: 5.85e12,
                eps_sec: DEFAULT_EPS_SEC,
                eps_cor: DEFAULT_EPS_COR,
                pe_fraction: DEFAULT_PE_FRACTION,
                f_ec: DEFAULT_F_EC,
                capped: true,
                optimize_eps_split: false,
                population: 64,
                generations: 600,
            },
            database: DatabaseSection {
                source: None,
                snapshot: "db.cube".into(),
                manifest: "db.manifest".into(),
                synthetic_n: 800,
                synthetic_max_bytes: 582,
            },
            keys: KeysSection {
                dir: "keys".into(),
                reuse_keys: false,
            },
            network: NetworkSection {
                dc1: "127.0.0.1:7401".into(),
                dc2: "127.0.0.1:7402".into(),
            },
            run: RunSection {
                seed: 1,
                output_dir: "out".into(),
            },
            sweep: SweepSection {
                distances_km: (0..=20).map(|i| 10.0 * i as f64).collect(),
                n_capped: 5.85e12,
                n_uncapped: 3.75e10,
                csv: "curve.csv".into(),
            },
            sources: FIELDS.iter().map(|f| (f.key, Source::Default)).collect(),
        }
    }
}

fn path_or_none(s: String) -> Option<PathBuf> {
    (!s.is_empty()).then(|| PathBuf::from(s))
}

impl AppConfig {
    /// Where the value of `key` (`section.name`) came from.
    pub fn source(&self, key: &str) -> Option<Source> {
        self.sources.get(key).copied()
    }

    pub fn keys() -> impl Iterator<Item = &'static str> {
        FIELDS.iter().map(|f| f.key)
    }

    fn assign(&mut self, key: &str, v: Value) {
        use Value::*;
        let c = &mut self.channel;
        let p = &mut self.protocol;
        let d = &mut self.database;
        match (key, v) {
            ("channel.loss_db_per_km", Float(x)) => c.loss_db_per_km = x,
            ("channel.detector_efficiency", Float(x)) => c.detector_efficiency = x,
            ("channel.dark_count", Float(x)) => c.dark_count = x,
            ("channel.misalignment", Float(x)) => c.misalignment = x,
            ("channel.saturation_cap", OptFloat(x)) => c.saturation_cap = x,
            ("channel.repetition_rate_hz", Float(x)) => c.repetition_rate_hz = x,
            ("channel.arm_km", Float(x)) => c.arm_km = x,
            ("protocol.n_pulses", Float(x)) => p.n_pulses = x,
            ("protocol.eps_sec", Float(x)) => p.eps_sec = x,
            ("protocol.eps_cor", Float(x)) => p.eps_cor = x,
            ("protocol.pe_fraction", Float(x)) => p.pe_fraction = x,
            ("protocol.f_ec", Float(x)) => p.f_ec = x,
            ("protocol.capped", Bool(x)) => p.capped = x,
            ("protocol.optimize_eps_split", Bool(x)) => p.optimize_eps_split = x,
            ("protocol.population", Uint(x)) => p.population = x,
            ("protocol.generations", Uint(x)) => p.generations = x,
            ("database.source", Text(x)) => d.source = path_or_none(x),
            ("database.snapshot", Text(x)) => d.snapshot = x.into(),
            ("database.manifest", Text(x)) => d.manifest = x.into(),
            ("database.synthetic_n", Uint(x)) => d.synthetic_n = x,
            ("database.synthetic_max_bytes", Uint(x)) => d.synthetic_max_bytes = x,
            ("keys.dir", Text(x)) => self.keys.dir = x.into(),
            ("keys.reuse_keys", Bool(x)) => self.keys.reuse_keys = x,
            ("network.dc1", Text(x)) => self.network.dc1 = x,
            ("network.dc2", Text(x)) => self.network.dc2 = x,
            ("run.seed", Uint(x)) => self.run.seed = x,
            ("run.output_dir", Text(x)) => self.run.output_dir = x.into(),
            ("sweep.distances_km", FloatList(x)) => self.sweep.distances_km = x,
            ("sweep.n_capped", Float(x)) => self.sweep.n_capped = x,
            ("sweep.n_uncapped", Float(x)) => self.sweep.n_uncapped = x,
            ("sweep.csv", Text(x)) => self.sweep.csv = x.into(),
            (k, v) => unreachable!("field table and setter disagree on {k} = {v:?}"),
        }
    }

    /// Sets one field from its textual form; returns the offender message
    /// on failure.
    fn set(&mut self, key: &str, raw: &str, source: Source) -> std::result::Result<(), String> {
        let Some(f) = FIELDS.iter().find(|f| f.key == key) else {
            return Err(format!("unknown key `{key}`"));
        };
        let v = parse_value(f.kind, raw)
            .ok_or_else(|| format!("`{key}` expects {}, got `{}`", f.kind.name(), raw.trim()))?;
        self.assign(f.key, v);
        self.sources.insert(f.key, source);
        Ok(())
    }

    fn check(&self) -> Vec<String> {
        let mut bad = Vec::new();
        let mut need = |ok: bool, key: &str, what: &str| {
            if !ok {
                bad.push(format!("`{key}` must be {what}"));
            }
        };
        let c = &self.channel;
        let p = &self.protocol;
        need(c.loss_db_per_km >= 0.0, "channel.loss_db_per_km", "≥ 0");
        need(
            c.detector_efficiency > 0.0 && c.detector_efficiency <= 1.0,
            "channel.detector_efficiency",
            "in (0, 1]",
        );
        need((0.0..1.0).contains(&c.dark_count), "channel.dark_count", "in [0, 1)");
        need(
            (0.0..0.5).contains(&c.misalignment),
            "channel.misalignment",
            "in [0, 0.5)",
        );
        need(
            c.saturation_cap.is_none_or(|s| s > 0.0),
            "channel.saturation_cap",
            "positive or none",
        );
        need(c.repetition_rate_hz > 0.0, "channel.repetition_rate_hz", "positive");
        need(c.arm_km >= 0.0, "channel.arm_km", "≥ 0");
        need(p.n_pulses >= 1.0, "protocol.n_pulses", "≥ 1");
        need(p.eps_sec > 0.0 && p.eps_sec < 1.0, "protocol.eps_sec", "in (0, 1)");
        need(p.eps_cor > 0.0 && p.eps_cor < 1.0, "protocol.eps_cor", "in (0, 1)");
        need(
            p.pe_fraction > 0.0 && p.pe_fraction < 1.0,
            "protocol.pe_fraction",
            "in (0, 1)",
        );
        need(p.f_ec >= 1.0, "protocol.f_ec", "≥ 1");
        need(p.population >= 4, "protocol.population", "≥ 4");
        need(self.database.synthetic_n >= 1, "database.synthetic_n", "≥ 1");
        need(
            self.database.synthetic_max_bytes >= 1,
            "database.synthetic_max_bytes",
            "≥ 1",
        );
        need(
            self.sweep.distances_km.iter().all(|&d| d >= 0.0),
            "sweep.distances_km",
            "non-negative",
        );
        need(
            self.sweep.n_capped >= 1.0 && self.sweep.n_uncapped >= 1.0,
            "sweep.n_capped/n_uncapped",
            "≥ 1",
        );
        bad
    }

    /// Channel with the configured constants at the configured arm length.
    pub fn channel_model(&self) -> ChannelModel {
        let c = &self.channel;
        ChannelModel {
            arm_km: [c.arm_km; 2],
            loss_db_per_km: c.loss_db_per_km,
            detector_efficiency: c.detector_efficiency,
            dark_count: c.dark_count,
            misalignment: c.misalignment,
            saturation_cap: c.saturation_cap,
            repetition_rate_hz: c.repetition_rate_hz,
        }
    }

    pub fn search_constraints(&self) -> SearchConstraints {
        let p = &self.protocol;
        SearchConstraints {
            saturation: p.capped,
            eps_sec: p.eps_sec,
            eps_cor: p.eps_cor,
            optimize_eps_split: p.optimize_eps_split,
            pe_fraction: p.pe_fraction,
            f_ec: p.f_ec,
            seed: self.run.seed,
            population: p.population as usize,
            generations: p.generations as usize,
        }
    }

    /// The effective configuration, one `key = value  # source` line per field.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        let mut section = "";
        for f in FIELDS {
            let (sec, name) = f.key.split_once('.').expect("dotted key");
            if sec != section {
                out.push_str(&format!("[{sec}]\n"));
                section = sec;
            }
            out.push_str(&format!(
                "{name} = {}  # {}; {}\n",
                self.render(f.key),
                self.sources[f.key],
                f.doc
            ));
        }
        out
    }

    fn render(&self, key: &str) -> String {
        let c = &self.channel;
        let p = &self.protocol;
        let d = &self.database;
        let path = |p: &PathBuf| p.display().to_string();
        match key {
            "channel.loss_db_per_km" => c.loss_db_per_km.to_string(),
            "channel.detector_efficiency" => c.detector_efficiency.to_string(),
            "channel.dark_count" => c.dark_count.to_string(),
            "channel.misalignment" => c.misalignment.to_string(),
            "channel.saturation_cap" => c.saturation_cap.map_or("none".into(), |v| v.to_string()),
            "channel.repetition_rate_hz" => c.repetition_rate_hz.to_string(),
            "channel.arm_km" => c.arm_km.to_string(),
            "protocol.n_pulses" => p.n_pulses.to_string(),
            "protocol.eps_sec" => p.eps_sec.to_string(),
            "protocol.eps_cor" => p.eps_cor.to_string(),
            "protocol.pe_fraction" => p.pe_fraction.to_string(),
            "protocol.f_ec" => p.f_ec.to_string(),
            "protocol.capped" => p.capped.to_string(),
            "protocol.optimize_eps_split" => p.optimize_eps_split.to_string(),
            "protocol.population" => p.population.to_string(),
            "protocol.generations" => p.generations.to_string(),
            "database.source" => d.source.as_ref().map(path).unwrap_or_default(),
            "database.snapshot" => path(&d.snapshot),
            "database.manifest" => path(&d.manifest),
            "database.synthetic_n" => d.synthetic_n.to_string(),
            "database.synthetic_max_bytes" => d.synthetic_max_bytes.to_string(),
            "keys.dir" => path(&self.keys.dir),
            "keys.reuse_keys" => self.keys.reuse_keys.to_string(),
            "network.dc1" => self.network.dc1.clone(),
            "network.dc2" => self.network.dc2.clone(),
            "run.seed" => self.run.seed.to_string(),
            "run.output_dir" => path(&self.run.output_dir),
            "sweep.distances_km" => self
                .sweep
                .distances_km
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(","),
            "sweep.n_capped" => self.sweep.n_capped.to_string(),
            "sweep.n_uncapped" => self.sweep.n_uncapped.to_string(),
            "sweep.csv" => path(&self.sweep.csv),
            _ => String::new(),
        }
    }
}

/// Parses `text`, then applies `flags` (`section.key`, value) on top.
/// All offenders are reported together.
pub fn parse_config(text: &str, flags: &[(String, String)]) -> Result<AppConfig> {
    let mut cfg = AppConfig::default();
    let mut bad = Vec::new();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.split_once('#').map_or(raw, |(a, _)| a).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            match rest.strip_suffix(']').map(str::trim) {
                Some(s) if !s.is_empty() && !s.contains(char::is_whitespace) => section = s.to_string(),
                _ => bad.push(format!("line {lineno}: malformed section header `{line}`")),
            }
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            bad.push(format!("line {lineno}: expected `key = value`, got `{line}`"));
            continue;
        };
        let k = k.trim();
        if k.is_empty() {
            bad.push(format!("line {lineno}: missing key"));
            continue;
        }
        if section.is_empty() {
            bad.push(format!("line {lineno}: `{k}` appears before any [section]"));
            continue;
        }
        let key = format!("{section}.{k}");
        if let Err(e) = cfg.set(&key, v, Source::File { line: lineno }) {
            bad.push(format!("line {lineno}: {e}"));
        }
    }
    for (k, v) in flags {
        if let Err(e) = cfg.set(k, v, Source::Flag) {
            bad.push(format!("flag: {e}"));
        }
    }
    if bad.is_empty() {
        bad = cfg.check();
    }
    if bad.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(bad.join("; ")))
    }
}
