//! Experiment configuration: an INI file with one section per concern,
//! overridable from the command line with `section.key=value`.
//!
//! ```ini
//! [run]
//! seed = 1                 ; required
//! seeds = 1,2,3            ; models trained per grid point (default: seed)
//! out = metrics.csv
//! checkpoint = model.hbnn  ; train only
//!
//! [data]
//! images = train-images-idx3-ubyte.gz
//! labels = train-labels-idx1-ubyte.gz
//! test_images = ...        ; optional; default: examples left out of the subset
//! test_labels = ...
//! n = 1000
//! test_limit = 5000        ; optional
//!
//! [model]
//! arch = mlp               ; mlp | stand_in
//! hidden = 256,256
//! input_u = 0              ; mlp input corruption bound, 0 disables
//!
//! [corruption]
//! scheme = hybrid          ; none | hybrid | dropout
//! structure = elementwise  ; elementwise | spatial_grid | channel
//! u = 0.45
//! fixed_p = 0.3            ; optional
//! normalize = false        ; default: true for dropout
//!
//! [train]
//! batch_size = 50
//! epochs = 150
//! lr = 0.01                ; or lr_schedule = 0:0.01,100:0.002
//! momentum_schedule = 0:0.9
//! weight_decay = 1e-5
//! eval_every = 150
//!
//! [sweep]
//! grid = 0.15,0.3,0.45,0.6,0.75
//! modes = sampled_u,fixed_p
//!
//! [sizes]
//! sizes = 10,100,1000
//! hybrid_u = 0.45
//! dropout_u = 0.65
//! steps = 3000             ; update budget per run
//!
//! [correlate]
//! probe = 500
//!
//! [expand]
//! input = table.csv
//! target = label
//! scheme = hb
//! u = 0.45
//! factor = 8
//! include_originals = false
//! fixed_p = 0.3            ; optional
//! ```

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use hybridboot_core::corruptor::{CorruptionSpec, MaskStructure, Scheme};
use hybridboot_core::expander::{ExpansionScheme, ExpansionSpec};
use hybridboot_core::nn::TrainConfig;
use ini::Ini;

use crate::error::{Error, Result};
use crate::experiments::{Arch, RunSpec};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Train,
    Sweep,
    Sizes,
    Gradnorm,
    Correlate,
    Expand,
}

impl Command {
    pub const ALL: [Command; 6] = [
        Command::Train,
        Command::Sweep,
        Command::Sizes,
        Command::Gradnorm,
        Command::Correlate,
        Command::Expand,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Train => "train",
            Command::Sweep => "sweep",
            Command::Sizes => "sizes",
            Command::Gradnorm => "gradnorm",
            Command::Correlate => "correlate",
            Command::Expand => "expand",
        }
    }

    fn needs_images(self) -> bool {
        self != Command::Expand
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Command {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown command `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepMode {
    SampledU,
    FixedP,
}

impl SweepMode {
    pub fn name(self) -> &'static str {
        match self {
            SweepMode::SampledU => "sampled_u",
            SweepMode::FixedP => "fixed_p",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataConfig {
    pub images: PathBuf,
    pub labels: PathBuf,
    pub test: Option<(PathBuf, PathBuf)>,
    pub n: usize,
    pub test_limit: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub grid: Vec<f64>,
    pub modes: Vec<SweepMode>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SizesConfig {
    pub sizes: Vec<usize>,
    pub hybrid_u: f64,
    pub dropout_u: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpandConfig {
    pub input: PathBuf,
    pub target: String,
    pub spec: ExpansionSpec,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub command: Command,
    pub seed: u64,
    pub seeds: Vec<u64>,
    pub out: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub data: Option<DataConfig>,
    pub run: RunSpec,
    pub sweep: SweepConfig,
    pub sizes: SizesConfig,
    pub probe: usize,
    pub expand: Option<ExpandConfig>,
}

/// Flat `section.key → value` view that remembers which keys were read.
struct Raw {
    values: BTreeMap<String, String>,
    used: RefCell<BTreeSet<String>>,
    base: PathBuf,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl Raw {
    fn get(&self, key: &str) -> Option<&str> {
        self.used.borrow_mut().insert(key.to_owned());
        self.values.get(key).map(|v| v.trim()).filter(|v| !v.is_empty())
    }

    fn parse<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|_| bad(format!("{key}: cannot parse `{v}`"))))
            .transpose()
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parse(key)?.unwrap_or(default))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|item| {
                        item.trim()
                            .parse::<T>()
                            .map_err(|_| bad(format!("{key}: cannot parse `{}`", item.trim())))
                    })
                    .collect()
            })
            .transpose()
    }

    fn schedule(&self, key: &str) -> Result<Option<Vec<(usize, f64)>>> {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|step| {
                        let parsed = step
                            .split_once(':')
                            .and_then(|(e, x)| Some((e.trim().parse().ok()?, x.trim().parse().ok()?)));
                        parsed.ok_or_else(|| bad(format!("{key}: expected epoch:value, got `{}`", step.trim())))
                    })
                    .collect()
            })
            .transpose()
    }

    fn path(&self, key: &str) -> Option<PathBuf> {
        self.get(key).map(|v| self.base.join(v))
    }

    fn unused(&self) -> Vec<String> {
        let used = self.used.borrow();
        self.values.keys().filter(|k| !used.contains(*k)).cloned().collect()
    }
}

fn level(key: &str, v: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(bad(format!("{key}: {v} is outside [0, 1]")))
    }
}

fn existing(key: &str, path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(bad(format!("{key}: {} does not exist", path.display())))
    }
}

/// Parses config text. Relative paths resolve against `base`; `overrides`
/// are `section.key=value` pairs applied after the file.
pub fn parse(command: Command, text: &str, base: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let ini = Ini::load_from_str(text).map_err(|e| bad(e.to_string()))?;
    let mut values = BTreeMap::new();
    for (section, props) in ini.iter() {
        for (k, v) in props.iter() {
            let key = match section {
                Some(s) => format!("{s}.{k}"),
                None => return Err(bad(format!("key `{k}` outside any section"))),
            };
            values.insert(key, v.to_owned());
        }
    }
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| bad(format!("override `{o}` is not section.key=value")))?;
        if !k.contains('.') {
            return Err(bad(format!("override key `{k}` needs a section")));
        }
        values.insert(k.trim().to_owned(), v.to_owned());
    }
    let raw = Raw {
        values,
        used: RefCell::default(),
        base: base.to_path_buf(),
    };
    let cfg = build(command, &raw)?;
    let unused = raw.unused();
    if !unused.is_empty() {
        return Err(bad(format!("unknown keys: {}", unused.join(", "))));
    }
    Ok(cfg)
}

pub fn load(command: Command, path: &Path, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse(command, &text, base, overrides)
}

fn build(command: Command, raw: &Raw) -> Result<ExperimentConfig> {
    let version: u32 = raw.or("run.version", CONFIG_VERSION)?;
    if version != CONFIG_VERSION {
        return Err(bad(format!("run.version {version} is not supported (expected {CONFIG_VERSION})")));
    }
    let seed: u64 = raw.parse("run.seed")?.ok_or_else(|| bad("run.seed is required"))?;
    let seeds = raw.list("run.seeds")?.unwrap_or_else(|| vec![seed]);
    if seeds.is_empty() {
        return Err(bad("run.seeds is empty"));
    }
    let out = raw.path("run.out");
    let checkpoint = raw.path("run.checkpoint");

    let images = raw.path("data.images");
    let labels = raw.path("data.labels");
    let test_images = raw.path("data.test_images");
    let test_labels = raw.path("data.test_labels");
    let n = raw.or("data.n", 1000usize)?;
    let test_limit = raw.parse("data.test_limit")?;
    let data = if command.needs_images() {
        let images = existing("data.images", images.ok_or_else(|| bad("data.images is required"))?)?;
        let labels = existing("data.labels", labels.ok_or_else(|| bad("data.labels is required"))?)?;
        let test = match (test_images, test_labels) {
            (Some(i), Some(l)) => Some((existing("data.test_images", i)?, existing("data.test_labels", l)?)),
            (None, None) => None,
            _ => return Err(bad("data.test_images and data.test_labels go together")),
        };
        Some(DataConfig {
            images,
            labels,
            test,
            n,
            test_limit,
        })
    } else {
        None
    };

    let arch = match raw.get("model.arch").unwrap_or("mlp") {
        "mlp" => Arch::Mlp {
            hidden: raw.list("model.hidden")?.unwrap_or_else(|| vec![256, 256]),
        },
        "stand_in" => Arch::StandIn,
        other => return Err(bad(format!("model.arch: unknown architecture `{other}`"))),
    };
    let input_u = level("model.input_u", raw.or("model.input_u", 0.0)?)?;

    let scheme = raw.get("corruption.scheme").unwrap_or("none");
    let structure: MaskStructure = raw.or("corruption.structure", MaskStructure::Elementwise)?;
    let u = level("corruption.u", raw.or("corruption.u", 0.45)?)?;
    let fixed_p = raw.parse::<f64>("corruption.fixed_p")?;
    let normalize = raw.parse::<bool>("corruption.normalize")?;
    let corruption = match scheme {
        "none" => None,
        other => {
            let scheme: Scheme = other.parse().map_err(|_| bad(format!("corruption.scheme: unknown `{other}`")))?;
            let mut spec = match scheme {
                Scheme::Hybrid => CorruptionSpec::hybrid(u),
                Scheme::Dropout => CorruptionSpec::dropout(u),
            }
            .with_structure(structure);
            if let Some(p) = fixed_p {
                spec = spec.with_fixed_p(level("corruption.fixed_p", p)?);
            }
            if let Some(norm) = normalize {
                spec = spec.with_normalize(norm);
            }
            spec.validate().map_err(|e| bad(format!("corruption: {e}")))?;
            Some(spec)
        }
    };
    let input_corruption = match (&arch, corruption) {
        (Arch::Mlp { .. }, Some(spec)) if input_u > 0.0 => Some(CorruptionSpec {
            u: input_u,
            structure: MaskStructure::Elementwise,
            ..spec
        }),
        _ => None,
    };

    let epochs = raw.or("train.epochs", 150usize)?;
    let lr = raw.parse::<f64>("train.lr")?;
    let lr_schedule = match (raw.schedule("train.lr_schedule")?, lr) {
        (Some(_), Some(_)) => return Err(bad("give train.lr or train.lr_schedule, not both")),
        (Some(s), None) => s,
        (None, lr) => vec![(0, lr.unwrap_or(0.01))],
    };
    let train = TrainConfig {
        batch_size: raw.or("train.batch_size", 50)?,
        epochs,
        lr_schedule,
        momentum_schedule: raw.schedule("train.momentum_schedule")?.unwrap_or_else(|| vec![(0, 0.9)]),
        weight_decay: raw.or("train.weight_decay", 1e-5)?,
        seed,
        eval_every: raw.or("train.eval_every", epochs.max(1))?,
    };
    train.validate().map_err(|e| bad(format!("train: {e}")))?;

    let grid: Vec<f64> = raw
        .list("sweep.grid")?
        .unwrap_or_else(|| vec![0.15, 0.3, 0.45, 0.6, 0.75]);
    for &g in &grid {
        level("sweep.grid", g)?;
    }
    let modes = match raw.list::<String>("sweep.modes")? {
        None => vec![SweepMode::SampledU, SweepMode::FixedP],
        Some(names) => names
            .iter()
            .map(|m| match m.as_str() {
                "sampled_u" => Ok(SweepMode::SampledU),
                "fixed_p" => Ok(SweepMode::FixedP),
                other => Err(bad(format!("sweep.modes: unknown mode `{other}`"))),
            })
            .collect::<Result<_>>()?,
    };
    if command == Command::Sweep && corruption.is_none() {
        return Err(bad("sweep needs corruption.scheme"));
    }

    let sizes = SizesConfig {
        sizes: raw.list("sizes.sizes")?.unwrap_or_else(|| vec![10, 100, 1000]),
        hybrid_u: level("sizes.hybrid_u", raw.or("sizes.hybrid_u", 0.45)?)?,
        dropout_u: level("sizes.dropout_u", raw.or("sizes.dropout_u", 0.65)?)?,
        steps: raw.or("sizes.steps", 3000)?,
    };
    let probe = raw.or("correlate.probe", 500usize)?;
    if probe < 2 {
        return Err(bad("correlate.probe must be at least 2"));
    }

    let expand_input = raw.path("expand.input");
    let expand_target = raw.get("expand.target").map(str::to_owned);
    let expansion_scheme: ExpansionScheme = raw.or("expand.scheme", ExpansionScheme::Hb)?;
    let mut expansion = ExpansionSpec::new(
        expansion_scheme,
        level("expand.u", raw.or("expand.u", 0.45)?)?,
        raw.or("expand.factor", 1usize)?,
    );
    expansion.include_originals = raw.or("expand.include_originals", false)?;
    expansion.fixed_p = raw
        .parse::<f64>("expand.fixed_p")?
        .map(|p| level("expand.fixed_p", p))
        .transpose()?;
    let expand = if command == Command::Expand {
        expansion.validate().map_err(|e| bad(format!("expand: {e}")))?;
        Some(ExpandConfig {
            input: existing("expand.input", expand_input.ok_or_else(|| bad("expand.input is required"))?)?,
            target: expand_target.ok_or_else(|| bad("expand.target is required"))?,
            spec: expansion,
        })
    } else {
        None
    };

    Ok(ExperimentConfig {
        command,
        seed,
        seeds,
        out,
        checkpoint,
        data,
        run: RunSpec {
            arch,
            corruption,
            input_corruption,
            train,
        },
        sweep: SweepConfig { grid, modes },
        sizes,
        probe,
        expand,
    })
}
