//! The CLI commands. Each validates its inputs, runs the experiment and
//! returns the metric rows; writing them out is left to the caller.

use hybridboot_core::corruptor::{CorruptionSpec, MaskStructure, Scheme};
use hybridboot_core::data::Dataset;
use hybridboot_core::expander::expand;
use hybridboot_core::metrics::filter_correlation;
use hybridboot_core::nn::{train, LayerSpec, Model};
use hybridboot_core::rng::streams;
use hybridboot_core::table::Table;
use hybridboot_core::Rng;

use crate::checkpoint;
use crate::config::{Command, DataConfig, ExperimentConfig, SweepMode};
use crate::csv_io::load_csv;
use crate::error::{Error, Result};
use crate::experiments::{prepare_split, probe_levels, run, step_budget, RunSpec, Split};
use crate::idx::load_idx;

pub const TRAIN_COLUMNS: &[&str] = &["epoch", "train_loss", "test_error", "test_logloss"];
pub const SWEEP_COLUMNS: &[&str] = &["mode", "level", "seed", "test_error", "test_logloss", "status"];
pub const SIZES_COLUMNS: &[&str] = &[
    "n",
    "scheme",
    "u",
    "seed",
    "batch_size",
    "epochs",
    "test_error",
    "test_logloss",
    "status",
];
pub const GRADNORM_COLUMNS: &[&str] = &[
    "seed",
    "batch",
    "example",
    "corruption_layer",
    "weight_layer",
    "p",
    "layer_norm",
    "final_norm",
];
pub const CORRELATE_COLUMNS: &[&str] = &[
    "seed",
    "layer",
    "filters",
    "active_filters",
    "median_abs_corr",
    "test_error",
    "status",
];

/// Header plus rows, all cells already formatted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Metrics {
    pub columns: &'static [&'static str],
    pub rows: Vec<Vec<String>>,
}

impl Metrics {
    fn new(columns: &'static [&'static str]) -> Self {
        Self {
            columns,
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_table(&self) -> Table {
        Table::new(
            self.columns.iter().map(|c| c.to_string()).collect(),
            self.rows.clone(),
            &[],
        )
        .expect("rows match the header")
    }

    /// Values of one column, in row order.
    pub fn column(&self, name: &str) -> Vec<&str> {
        let c = self.columns.iter().position(|&n| n == name).expect("known column");
        self.rows.iter().map(|r| r[c].as_str()).collect()
    }
}

pub enum Output {
    Metrics(Metrics),
    Table(Table),
}

impl Output {
    pub fn table(&self) -> Table {
        match self {
            Output::Metrics(m) => m.to_table(),
            Output::Table(t) => t.clone(),
        }
    }
}

fn status(e: &Error) -> String {
    match e.exit_code() {
        4 => format!("diverged: {e}"),
        _ => format!("error: {e}"),
    }
}

pub fn execute(cfg: &ExperimentConfig) -> Result<Output> {
    match cfg.command {
        Command::Train => cmd_train(cfg).map(Output::Metrics),
        Command::Sweep => cmd_sweep(cfg).map(Output::Metrics),
        Command::Sizes => cmd_sizes(cfg).map(Output::Metrics),
        Command::Gradnorm => cmd_gradnorm(cfg).map(Output::Metrics),
        Command::Correlate => cmd_correlate(cfg).map(Output::Metrics),
        Command::Expand => cmd_expand(cfg).map(Output::Table),
    }
}

/// Training pool and optional separate test set.
pub struct Source {
    pub pool: Dataset,
    pub test: Option<Dataset>,
}

pub fn load_source(data: &DataConfig) -> Result<Source> {
    let pool = load_idx(&data.images, &data.labels)?;
    let test = data.test.as_ref().map(|(i, l)| load_idx(i, l)).transpose()?;
    Ok(Source { pool, test })
}

fn data(cfg: &ExperimentConfig) -> &DataConfig {
    cfg.data.as_ref().expect("image commands carry a data section")
}

fn split(cfg: &ExperimentConfig, source: &Source, n: usize) -> Result<Split> {
    prepare_split(&source.pool, source.test.as_ref(), n, cfg.seed, data(cfg).test_limit)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<Metrics> {
    let source = load_source(data(cfg))?;
    let split = split(cfg, &source, data(cfg).n)?;
    let mut model = cfg
        .run
        .build(split.train.example_shape(), split.train.classes(), cfg.seed)?;
    let history = train(&mut model, &split.train, &cfg.run.train, Some(&split.test))?;
    if let Some(path) = &cfg.checkpoint {
        checkpoint::save(&model, path)?;
    }
    let mut m = Metrics::new(TRAIN_COLUMNS);
    for e in &history.epochs {
        m.push(vec![
            e.epoch.to_string(),
            e.train_loss.to_string(),
            fmt_opt(e.eval.map(|v| v.error_rate)),
            fmt_opt(e.eval.map(|v| v.logloss)),
        ]);
    }
    Ok(m)
}

/// The run spec for one sweep point: the configured corruption with its
/// level set either as the sampling bound or as a fixed level.
pub fn sweep_point(base: &RunSpec, mode: SweepMode, level: f64) -> RunSpec {
    let spec = base.corruption.expect("sweep requires corruption");
    let spec = match mode {
        SweepMode::SampledU => CorruptionSpec { u: level, fixed_p: None, ..spec },
        SweepMode::FixedP => CorruptionSpec {
            u: level,
            fixed_p: Some(level),
            ..spec
        },
    };
    base.with_corruption(Some(spec), base.input_corruption)
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<Metrics> {
    let source = load_source(data(cfg))?;
    let split = split(cfg, &source, data(cfg).n)?;
    let mut m = Metrics::new(SWEEP_COLUMNS);
    for &mode in &cfg.sweep.modes {
        for &level in &cfg.sweep.grid {
            let spec = sweep_point(&cfg.run, mode, level);
            for &seed in &cfg.seeds {
                let (err, ll, st) = match run(&spec, &split, seed) {
                    Ok(o) => (o.test.error_rate.to_string(), o.test.logloss.to_string(), "ok".to_string()),
                    Err(e) => (String::new(), String::new(), status(&e)),
                };
                m.push(vec![mode.name().into(), level.to_string(), seed.to_string(), err, ll, st]);
            }
        }
    }
    Ok(m)
}

/// Run spec for training on `n` examples with the given corruption at the
/// update budget `steps`.
pub fn size_point(base: &RunSpec, spec: CorruptionSpec, n: usize, steps: usize) -> RunSpec {
    let mut out = base.with_corruption(Some(spec), None);
    let (batch, epochs) = step_budget(base.train.batch_size, n, steps);
    out.train.batch_size = batch;
    out.train.epochs = epochs;
    out.train.eval_every = epochs;
    out.train.momentum_schedule.retain(|s| s.0 < epochs);
    out.train.lr_schedule.retain(|s| s.0 < epochs);
    out
}

pub fn cmd_sizes(cfg: &ExperimentConfig) -> Result<Metrics> {
    let source = load_source(data(cfg))?;
    let structure = cfg.run.corruption.map(|c| c.structure).unwrap_or(MaskStructure::Elementwise);
    let schemes = [
        (Scheme::Hybrid, CorruptionSpec::hybrid(cfg.sizes.hybrid_u)),
        (Scheme::Dropout, CorruptionSpec::dropout(cfg.sizes.dropout_u)),
    ];
    let mut m = Metrics::new(SIZES_COLUMNS);
    for &n in &cfg.sizes.sizes {
        let split = split(cfg, &source, n)?;
        for (scheme, spec) in schemes {
            let spec = size_point(&cfg.run, spec.with_structure(structure), n, cfg.sizes.steps);
            for &seed in &cfg.seeds {
                let (err, ll, st) = match run(&spec, &split, seed) {
                    Ok(o) => (o.test.error_rate.to_string(), o.test.logloss.to_string(), "ok".to_string()),
                    Err(e) => (String::new(), String::new(), status(&e)),
                };
                let u = spec.corruption.map(|c| c.u).unwrap_or(0.0);
                m.push(vec![
                    n.to_string(),
                    scheme.name().into(),
                    u.to_string(),
                    seed.to_string(),
                    spec.train.batch_size.to_string(),
                    spec.train.epochs.to_string(),
                    err,
                    ll,
                    st,
                ]);
            }
        }
    }
    Ok(m)
}

fn level_norm_rows(model: &Model, train_set: &Dataset, batch_size: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    let mut rows = Vec::new();
    for probe in probe_levels(model, train_set, batch_size, seed)? {
        for layer in &probe.layers {
            for (i, &example) in probe.examples.iter().enumerate() {
                rows.push(vec![
                    seed.to_string(),
                    probe.batch.to_string(),
                    example.to_string(),
                    layer.corruption_layer.to_string(),
                    layer.weight_layer.to_string(),
                    layer.levels[i].to_string(),
                    layer.norms[i].to_string(),
                    layer.final_norms[i].to_string(),
                ]);
            }
        }
    }
    Ok(rows)
}

pub fn cmd_gradnorm(cfg: &ExperimentConfig) -> Result<Metrics> {
    if cfg.run.corruption.is_none() && cfg.run.input_corruption.is_none() {
        return Err(Error::Config("gradnorm needs corruption.scheme".into()));
    }
    let source = load_source(data(cfg))?;
    let split = split(cfg, &source, data(cfg).n)?;
    let mut m = Metrics::new(GRADNORM_COLUMNS);
    for &seed in &cfg.seeds {
        let outcome = run(&cfg.run, &split, seed)?;
        for row in level_norm_rows(&outcome.model, &split.train, cfg.run.train.batch_size, seed)? {
            m.push(row);
        }
    }
    Ok(m)
}

pub fn cmd_correlate(cfg: &ExperimentConfig) -> Result<Metrics> {
    let probe_n = cfg.probe;
    let source = load_source(data(cfg))?;
    let split = split(cfg, &source, data(cfg).n)?;
    let conv_layers: Vec<usize> = cfg
        .run
        .layers(split.train.classes())
        .iter()
        .enumerate()
        .filter(|(_, l)| matches!(l, LayerSpec::Conv2d { .. }))
        .map(|(i, _)| i)
        .collect();
    if conv_layers.is_empty() {
        return Err(Error::Config("correlate needs a convolutional model (model.arch = stand_in)".into()));
    }
    let take: Vec<usize> = (0..probe_n.min(split.test.len())).collect();
    let probe = split.test.select(&take);
    let mut m = Metrics::new(CORRELATE_COLUMNS);
    for &seed in &cfg.seeds {
        match run(&cfg.run, &split, seed) {
            Ok(outcome) => {
                for &layer in &conv_layers {
                    let report = filter_correlation(&outcome.model, probe.examples(), layer)?;
                    m.push(vec![
                        seed.to_string(),
                        layer.to_string(),
                        report.filters.to_string(),
                        report.active_filters.len().to_string(),
                        report.median_abs_corr.to_string(),
                        outcome.test.error_rate.to_string(),
                        "ok".into(),
                    ]);
                }
            }
            Err(e) => {
                for &layer in &conv_layers {
                    m.push(vec![
                        seed.to_string(),
                        layer.to_string(),
                        String::new(),
                        String::new(),
                        String::new(),
                        String::new(),
                        status(&e),
                    ]);
                }
            }
        }
    }
    Ok(m)
}

pub fn cmd_expand(cfg: &ExperimentConfig) -> Result<Table> {
    let ex = cfg.expand.as_ref().expect("expand commands carry an expand section");
    let table = load_csv(&ex.input, &[])?;
    let table = table.with_target(&ex.target).map_err(|e| Error::Config(e.to_string()))?;
    Ok(expand(&table, &ex.spec, &Rng::new(cfg.seed, streams::EXPAND))?)
}
