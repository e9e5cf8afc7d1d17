//! Run configuration: a flat TOML document with dotted keys
//! (`train.lr_seg = 0.003`), overlaid by command-line flags.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anet::data::{ShapeFamily, SynthSpec};
use anet::metrics::{Contexts, DEFAULT_ALPHA};
use anet::training::TrainConfig;
use anet::Split;
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

pub const CONFIG_ECHO: &str = "config.toml";
pub const DEFAULT_RESOLUTION: usize = 64;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub out: Option<PathBuf>,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub bench: BenchConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub manifest: Option<PathBuf>,
    pub camo: Option<PathBuf>,
    pub distractor: Option<PathBuf>,
    pub count: usize,
    pub height: usize,
    pub width: usize,
    pub alpha: f64,
    pub shape_family: ShapeFamily,
    pub clutter: f64,
    pub small_object_fraction: f64,
    pub non_camouflaged_fraction: f64,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        let s = SynthSpec::default();
        Self {
            manifest: None,
            camo: None,
            distractor: None,
            count: s.count,
            height: s.height,
            width: s.width,
            alpha: s.alpha,
            shape_family: s.shape_family,
            clutter: s.clutter,
            small_object_fraction: s.small_object_fraction,
            non_camouflaged_fraction: s.non_camouflaged_fraction,
            train_fraction: s.train_fraction,
            seed: s.seed,
        }
    }
}

impl DataConfig {
    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            count: self.count,
            height: self.height,
            width: self.width,
            alpha: self.alpha,
            shape_family: self.shape_family,
            clutter: self.clutter,
            small_object_fraction: self.small_object_fraction,
            non_camouflaged_fraction: self.non_camouflaged_fraction,
            train_fraction: self.train_fraction,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Registered backbone name for freshly initialized models.
    pub backbone: String,
    /// Start from (or evaluate) this checkpoint instead of a fresh model.
    pub checkpoint: Option<PathBuf>,
    /// Input resolution; when set alongside a checkpoint the two must agree.
    pub height: Option<usize>,
    pub width: Option<usize>,
    pub hidden_width: usize,
    /// Encoder channel widths; the backbone's default when unset.
    pub channels: Option<Vec<usize>>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            backbone: "reference".into(),
            checkpoint: None,
            height: None,
            width: None,
            hidden_width: anet::model::HeadConfig::default().hidden_width,
            channels: None,
        }
    }
}

impl ModelConfig {
    pub fn resolution(&self) -> (usize, usize) {
        (self.height.unwrap_or(DEFAULT_RESOLUTION), self.width.unwrap_or(DEFAULT_RESOLUTION))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MapKind {
    Raw,
    #[default]
    Fused,
}

impl MapKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MapKind::Raw => "raw",
            MapKind::Fused => "fused",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub contexts: Contexts,
    pub split: Split,
    pub map: MapKind,
    /// Significance level of the paired t-tests.
    pub alpha: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { contexts: Contexts::Both, split: Split::Test, map: MapKind::Fused, alpha: DEFAULT_ALPHA }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub count: usize,
    pub warmup: usize,
    pub reps: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { count: 50, warmup: 3, reps: 5 }
    }
}

/// A dotted key and the value a flag assigns to it.
pub type Override = (String, Value);

pub fn set<V: Into<Value>>(key: &str, value: V) -> Override {
    (key.to_string(), value.into())
}

pub fn set_path(key: &str, path: &Path) -> Override {
    set(key, path.display().to_string())
}

/// Parses `key=value`; the value is read as a TOML literal and falls back to
/// a bare string.
pub fn parse_assignment(text: &str) -> Result<Override> {
    let (key, raw) = text.split_once('=').with_context(|| format!("--set expects KEY=VALUE, got '{text}'"))?;
    let key = key.trim();
    if key.is_empty() {
        bail!("--set expects KEY=VALUE, got '{text}'");
    }
    let raw = raw.trim();
    let value = toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

fn insert_dotted(doc: &mut Table, key: &str, value: Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().unwrap_or_default();
    let mut table = doc;
    for part in parts {
        let entry = table.entry(part).or_insert_with(|| Value::Table(Table::new()));
        table = entry.as_table_mut().with_context(|| format!("config key '{key}': '{part}' is not a section"))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn dotted_keys(prefix: &str, table: &Table, out: &mut BTreeSet<String>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => dotted_keys(&key, t, out),
            _ => {
                out.insert(key);
            }
        }
    }
}

/// Reads the optional config file, applies the overrides in order and
/// rejects keys that no setting consumes.
pub fn load(file: Option<&Path>, overrides: &[Override]) -> Result<RunConfig> {
    let mut doc = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str::<Table>(&text).with_context(|| format!("parsing config {}", path.display()))?
        }
        None => Table::new(),
    };
    for (key, value) in overrides {
        insert_dotted(&mut doc, key, value.clone())?;
    }
    let cfg: RunConfig = Value::Table(doc.clone()).try_into().context("invalid configuration")?;

    let mut given = BTreeSet::new();
    dotted_keys("", &doc, &mut given);
    let mut known = BTreeSet::new();
    dotted_keys("", &to_table(&cfg)?, &mut known);
    if let Some(unknown) = given.iter().find(|k| !known.contains(*k)) {
        bail!("unknown config key '{unknown}'");
    }
    Ok(cfg)
}

fn to_table(cfg: &RunConfig) -> Result<Table> {
    match Value::try_from(cfg).context("serializing configuration")? {
        Value::Table(t) => Ok(t),
        _ => bail!("configuration did not serialize to a table"),
    }
}

/// The effective configuration as `section.key = value` lines, sorted.
pub fn render_flat(cfg: &RunConfig) -> Result<String> {
    fn walk(prefix: &str, table: &Table, out: &mut String) {
        for (k, v) in table {
            let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            match v {
                Value::Table(t) => walk(&key, t, out),
                _ => out.push_str(&format!("{key} = {v}\n")),
            }
        }
    }
    let mut out = String::new();
    walk("", &to_table(cfg)?, &mut out);
    Ok(out)
}

impl RunConfig {
    /// Every path the configuration refers to must exist.
    pub fn check_paths(&self) -> Result<()> {
        let paths = [
            ("data.manifest", &self.data.manifest),
            ("data.camo", &self.data.camo),
            ("data.distractor", &self.data.distractor),
            ("model.checkpoint", &self.model.checkpoint),
        ];
        for (key, path) in paths {
            if let Some(p) = path {
                if !p.exists() {
                    bail!("{key} = {} does not exist", p.display());
                }
            }
        }
        Ok(())
    }

    /// Creates the output directory and writes the effective configuration
    /// into it.
    pub fn prepare_out(&self) -> Result<Option<PathBuf>> {
        self.prepare_out_as(CONFIG_ECHO)
    }

    /// Same, with the echo under `echo` so several runs can share a directory.
    pub fn prepare_out_as(&self, echo: &str) -> Result<Option<PathBuf>> {
        let Some(out) = &self.out else {
            return Ok(None);
        };
        std::fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))?;
        let path = out.join(echo);
        std::fs::write(&path, render_flat(self)?).with_context(|| format!("writing {}", path.display()))?;
        Ok(Some(out.clone()))
    }

    pub fn require_out(&self) -> Result<PathBuf> {
        self.require_out_as(CONFIG_ECHO)
    }

    pub fn require_out_as(&self, echo: &str) -> Result<PathBuf> {
        match self.prepare_out_as(echo)? {
            Some(out) => Ok(out),
            None => bail!("no output directory: pass --out or set out"),
        }
    }

    pub fn require_manifest(&self) -> Result<&Path> {
        self.data.manifest.as_deref().context("no dataset: pass --manifest or set data.manifest")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_keys_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "train.lr_seg = 0.003\ndata.seed = 4\neval.contexts = \"fixed\"\n").unwrap();
        let cfg = load(Some(&path), &[set("data.seed", 9i64), parse_assignment("train.epochs_seg=7").unwrap()]).unwrap();
        assert_eq!(cfg.train.lr_seg, 0.003);
        assert_eq!(cfg.data.seed, 9);
        assert_eq!(cfg.train.epochs_seg, 7);
        assert_eq!(cfg.eval.contexts, Contexts::Fixed);
        assert_eq!(cfg.train.lr_cls, TrainConfig::default().lr_cls);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = load(None, &[parse_assignment("train.lr_sge=0.1").unwrap()]).unwrap_err();
        assert!(err.to_string().contains("train.lr_sge"), "{err}");
        assert!(load(None, &[parse_assignment("nope=1").unwrap()]).is_err());
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(load(None, &[parse_assignment("train.batch_size=two").unwrap()]).is_err());
        assert!(load(None, &[parse_assignment("data.shape_family=square").unwrap()]).is_err());
        assert!(parse_assignment("novalue").is_err());
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = load(None, &[parse_assignment("model.height=32").unwrap()]).unwrap();
        cfg.data.manifest = Some("d/manifest.txt".into());
        let text = render_flat(&cfg).unwrap();
        assert!(text.contains("train.lr_seg = 0.0001\n"), "{text}");
        assert!(text.lines().all(|l| l.contains(" = ")));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("echo.toml");
        std::fs::write(&path, &text).unwrap();
        assert_eq!(load(Some(&path), &[]).unwrap(), cfg);
    }

    #[test]
    fn missing_paths_fail() {
        let cfg = load(None, &[set("data.manifest", "/definitely/not/here")]).unwrap();
        assert!(cfg.check_paths().is_err());
    }
}
