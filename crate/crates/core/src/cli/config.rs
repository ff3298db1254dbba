//! Flat TOML experiment configuration with `--set key=value` overrides.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lab::ModelSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Reconstruct,
    Validate,
    Scaling,
    MpCompare,
    Insert,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Simulate,
        Command::Reconstruct,
        Command::Validate,
        Command::Scaling,
        Command::MpCompare,
        Command::Insert,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Reconstruct => "reconstruct",
            Command::Validate => "validate",
            Command::Scaling => "scaling",
            Command::MpCompare => "mp-compare",
            Command::Insert => "insert",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Command::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::ConfigParse(format!("unknown command `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "svg" => Ok(Format::Svg),
            other => Err(Error::ConfigParse(format!("formats: unknown format `{other}`"))),
        }
    }
}

/// Every key has a default, so an empty file is a valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub p: usize,
    /// Aspect ratio `n / p`.
    pub c: f64,
    pub seed: u64,
    pub model: ModelSpec,
    pub trials: usize,
    /// Half-width of the exclusion window.
    pub k: usize,
    pub c_universal: f64,
    pub epsilon: f64,
    /// Not recorded in artifacts, so runs into different directories match.
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
    pub formats: Vec<Format>,
    /// 1-based column for `insert`; `0` means the middle, `p / 2`.
    pub insert_index: usize,
    /// Subtract column means before forming the covariance.
    pub center: bool,
    /// Aspect ratios swept by `scaling`.
    pub c_values: Vec<f64>,
    /// Imaginary offset for density curves.
    pub eta: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            command: Command::Validate,
            p: 100,
            c: 2.0,
            seed: 0,
            model: "linear(1,10)".parse().expect("valid default model"),
            trials: 20,
            k: 2,
            c_universal: 1.0,
            epsilon: 0.5,
            output_dir: PathBuf::from("specrecon-out"),
            formats: vec![Format::Csv, Format::Json, Format::Svg],
            insert_index: 0,
            center: false,
            c_values: vec![2.0, 4.0, 8.0, 16.0],
            eta: crate::mp::DEFAULT_ETA,
        }
    }
}

const KEYS: [&str; 15] = [
    "command",
    "p",
    "c",
    "seed",
    "model",
    "trials",
    "k",
    "c_universal",
    "epsilon",
    "output_dir",
    "formats",
    "insert_index",
    "center",
    "c_values",
    "eta",
];

/// Line of the first `key = ...` assignment, for diagnostics.
fn key_line(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key)
            .map(|rest| rest.trim_start().starts_with('='))
            .unwrap_or(false)
    })
}

struct Ctx<'a> {
    text: &'a str,
}

impl Ctx<'_> {
    fn err(&self, key: &str, msg: impl fmt::Display) -> Error {
        match key_line(self.text, key) {
            Some(l) => Error::ConfigParse(format!("line {}: key `{key}`: {msg}", l + 1)),
            None => Error::ConfigParse(format!("key `{key}`: {msg}")),
        }
    }

    fn float(&self, key: &str, v: &toml::Value) -> Result<f64> {
        match v {
            toml::Value::Float(f) => Ok(*f),
            toml::Value::Integer(i) => Ok(*i as f64),
            other => Err(self.err(key, format!("expected a number, found {}", other.type_str()))),
        }
    }

    fn positive(&self, key: &str, v: &toml::Value) -> Result<f64> {
        let x = self.float(key, v)?;
        if x > 0.0 && x.is_finite() {
            Ok(x)
        } else {
            Err(self.err(key, format!("must be positive, got {x}")))
        }
    }

    fn uint(&self, key: &str, v: &toml::Value) -> Result<u64> {
        match v {
            toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
            toml::Value::Integer(i) => Err(self.err(key, format!("must be non-negative, got {i}"))),
            other => Err(self.err(key, format!("expected an integer, found {}", other.type_str()))),
        }
    }

    fn string<'v>(&self, key: &str, v: &'v toml::Value) -> Result<&'v str> {
        v.as_str()
            .ok_or_else(|| self.err(key, format!("expected a string, found {}", v.type_str())))
    }

    fn array<'v>(&self, key: &str, v: &'v toml::Value) -> Result<&'v [toml::Value]> {
        v.as_array()
            .map(|a| a.as_slice())
            .ok_or_else(|| self.err(key, format!("expected an array, found {}", v.type_str())))
    }
}

fn apply(cfg: &mut ExperimentConfig, table: &toml::Table, ctx: &Ctx<'_>) -> Result<()> {
    for (key, v) in table {
        match key.as_str() {
            "command" => {
                cfg.command = ctx.string(key, v)?.parse().map_err(|e: Error| ctx.err(key, e))?
            }
            "p" => {
                let p = ctx.uint(key, v)? as usize;
                if p < 3 {
                    return Err(ctx.err(key, format!("must be at least 3, got {p}")));
                }
                cfg.p = p;
            }
            "c" => cfg.c = ctx.positive(key, v)?,
            "seed" => cfg.seed = ctx.uint(key, v)?,
            "model" => {
                cfg.model = ctx.string(key, v)?.parse().map_err(|e: Error| ctx.err(key, e))?
            }
            "trials" => {
                let t = ctx.uint(key, v)? as usize;
                if t == 0 {
                    return Err(ctx.err(key, "must be at least 1"));
                }
                cfg.trials = t;
            }
            "k" => cfg.k = ctx.uint(key, v)? as usize,
            "c_universal" => cfg.c_universal = ctx.positive(key, v)?,
            "epsilon" => {
                let e = ctx.float(key, v)?;
                if !(e > 0.0 && e < 1.0) {
                    return Err(ctx.err(key, format!("must lie in (0, 1), got {e}")));
                }
                cfg.epsilon = e;
            }
            "output_dir" => cfg.output_dir = PathBuf::from(ctx.string(key, v)?),
            "formats" => {
                let mut f = ctx
                    .array(key, v)?
                    .iter()
                    .map(|x| ctx.string(key, x)?.parse::<Format>().map_err(|e| ctx.err(key, e)))
                    .collect::<Result<Vec<_>>>()?;
                f.sort();
                f.dedup();
                cfg.formats = f;
            }
            "insert_index" => cfg.insert_index = ctx.uint(key, v)? as usize,
            "center" => {
                cfg.center = v
                    .as_bool()
                    .ok_or_else(|| ctx.err(key, format!("expected a boolean, found {}", v.type_str())))?
            }
            "c_values" => {
                let vals = ctx
                    .array(key, v)?
                    .iter()
                    .map(|x| ctx.positive(key, x))
                    .collect::<Result<Vec<_>>>()?;
                if vals.len() < 2 {
                    return Err(ctx.err(key, "needs at least two values"));
                }
                cfg.c_values = vals;
            }
            "eta" => cfg.eta = ctx.positive(key, v)?,
            other => {
                let hint = KEYS
                    .iter()
                    .find(|k| k.starts_with(&other[..other.len().min(2)]))
                    .map(|k| format!(" (did you mean `{k}`?)"))
                    .unwrap_or_default();
                return Err(ctx.err(other, format!("unknown key{hint}")));
            }
        }
    }
    Ok(())
}

fn check_cross(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.insert_index > cfg.p {
        return Err(Error::ConfigParse(format!(
            "key `insert_index`: {} exceeds p = {}",
            cfg.insert_index, cfg.p
        )));
    }
    Ok(())
}

fn parse_table(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>().map_err(|e| Error::ConfigParse(e.to_string().trim().to_string()))
}

/// Parses a config file; missing keys take their defaults and unknown keys
/// are rejected.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_with_overrides(text, &[])
}

/// Parses `text`, then applies `key=value` overrides. Values are read as
/// TOML; anything that does not parse is taken as a bare string.
pub fn parse_with_overrides(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut table = parse_table(text)?;
    for item in overrides {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| Error::ConfigParse(format!("override `{item}` is not key=value")))?;
        let (k, v) = (k.trim(), v.trim());
        let value = format!("x = {v}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("x"))
            .unwrap_or_else(|| toml::Value::String(v.to_string()));
        table.insert(k.to_string(), value);
    }
    let mut cfg = ExperimentConfig::default();
    apply(&mut cfg, &table, &Ctx { text })?;
    check_cross(&cfg)?;
    Ok(cfg)
}

impl ExperimentConfig {
    /// Number of samples `round(c p)`.
    pub fn n(&self) -> usize {
        ((self.c * self.p as f64).round() as usize).max(1)
    }

    /// 0-based insertion column.
    pub fn insert_column(&self) -> usize {
        if self.insert_index == 0 {
            self.p / 2 - 1
        } else {
            self.insert_index - 1
        }
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    /// Canonical TOML text; parses back to an equal config.
    pub fn to_toml(&self) -> String {
        let mut t = toml::Table::new();
        t.insert("command".into(), self.command.as_str().into());
        t.insert("p".into(), (self.p as i64).into());
        t.insert("c".into(), self.c.into());
        t.insert("seed".into(), (self.seed as i64).into());
        t.insert("model".into(), self.model.to_string().into());
        t.insert("trials".into(), (self.trials as i64).into());
        t.insert("k".into(), (self.k as i64).into());
        t.insert("c_universal".into(), self.c_universal.into());
        t.insert("epsilon".into(), self.epsilon.into());
        t.insert("output_dir".into(), self.output_dir.to_string_lossy().into_owned().into());
        let formats: Vec<toml::Value> = self
            .formats
            .iter()
            .map(|f| toml::Value::from(match f {
                Format::Csv => "csv",
                Format::Json => "json",
                Format::Svg => "svg",
            }))
            .collect();
        t.insert("formats".into(), formats.into());
        t.insert("insert_index".into(), (self.insert_index as i64).into());
        t.insert("center".into(), self.center.into());
        let cv: Vec<toml::Value> = self.c_values.iter().map(|&c| c.into()).collect();
        t.insert("c_values".into(), cv.into());
        t.insert("eta".into(), self.eta.into());
        toml::to_string(&t).expect("table serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_default() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        assert_eq!(cfg.command, Command::Validate);
        assert_eq!((cfg.p, cfg.c, cfg.seed), (100, 2.0, 0));
    }

    #[test]
    fn negative_c_names_key() {
        let err = parse_config("p = 50\nc = -1\n").unwrap_err();
        let Error::ConfigParse(msg) = &err else { panic!("{err:?}") };
        assert!(msg.contains("`c`"), "{msg}");
        assert!(msg.contains("line 2"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = parse_config("trails = 3").unwrap_err();
        let Error::ConfigParse(msg) = err else { panic!() };
        assert!(msg.contains("trails") && msg.contains("trials"), "{msg}");
    }

    #[test]
    fn type_errors() {
        assert!(parse_config("p = \"ten\"").is_err());
        assert!(parse_config("epsilon = 1.5").is_err());
        assert!(parse_config("model = \"cubic(1)\"").is_err());
        assert!(parse_config("formats = [\"png\"]").is_err());
        assert!(parse_config("command = \"explode\"").is_err());
        assert!(parse_config("p = [").is_err());
        assert!(parse_config("p = 10\ninsert_index = 11").is_err());
    }

    #[test]
    fn round_trip() {
        let text = r#"
            command = "reconstruct"
            p = 200
            c = 2
            seed = 7
            model = "iid:geometric(1,50)"
            trials = 5
            formats = ["json", "csv"]
            c_values = [2, 4.5]
            center = true
        "#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.formats, vec![Format::Csv, Format::Json]);
        let again = parse_config(&cfg.to_toml()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(parse_config(&ExperimentConfig::default().to_toml()).unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn overrides() {
        let cfg = parse_with_overrides(
            "p = 50",
            &["c=4".into(), "model=identity".into(), "command = scaling".into()],
        )
        .unwrap();
        assert_eq!(cfg.c, 4.0);
        assert_eq!(cfg.model.to_string(), "identity");
        assert_eq!(cfg.command, Command::Scaling);
        assert!(parse_with_overrides("", &["nokey".into()]).is_err());
        assert!(parse_with_overrides("", &["bogus=1".into()]).is_err());
    }

    #[test]
    fn derived_values() {
        let cfg = parse_config("p = 200\nc = 2").unwrap();
        assert_eq!(cfg.n(), 400);
        assert_eq!(cfg.insert_column(), 99);
        let cfg = parse_config("p = 200\ninsert_index = 10").unwrap();
        assert_eq!(cfg.insert_column(), 9);
    }
}
