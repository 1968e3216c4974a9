//! Desk-scale experiment runs shared by the CLI commands and the test
//! suites: split preparation, model construction, train-then-evaluate.

use hybridboot_core::corruptor::CorruptionSpec;
use hybridboot_core::data::{complement, standardize, stratified_indices, Dataset};
use hybridboot_core::nn::{arch, evaluate, grad_norm_by_level, train, Evaluation, History, LevelNorms, Model, TrainConfig};
use hybridboot_core::rng::streams;
use hybridboot_core::Rng;

use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub enum Arch {
    Mlp { hidden: Vec<usize> },
    StandIn,
}

/// Everything that defines one training run apart from the data.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSpec {
    pub arch: Arch,
    /// Corruption after every hidden layer.
    pub corruption: Option<CorruptionSpec>,
    /// Corruption of the raw input (MLP only).
    pub input_corruption: Option<CorruptionSpec>,
    pub train: TrainConfig,
}

impl RunSpec {
    pub fn layers(&self, classes: usize) -> Vec<hybridboot_core::nn::LayerSpec> {
        match &self.arch {
            Arch::Mlp { hidden } => arch::mlp(hidden, classes, self.input_corruption, self.corruption),
            Arch::StandIn => arch::stand_in(classes, self.corruption),
        }
    }

    pub fn build(&self, input_shape: &[usize], classes: usize, seed: u64) -> Result<Model> {
        Ok(Model::new(input_shape, self.layers(classes), seed)?)
    }

    /// Same run with both corruption slots replaced.
    pub fn with_corruption(&self, spec: Option<CorruptionSpec>, input: Option<CorruptionSpec>) -> Self {
        Self {
            corruption: spec,
            input_corruption: input,
            ..self.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
}

/// Draws a stratified training subset of size `n` from `source` (stream
/// `(data_seed, subset)`). The test set is `holdout` when given, else the
/// examples of `source` left out of the subset; `test_limit` keeps only its
/// first examples. Both sides are standardized with the training stats.
pub fn prepare_split(
    source: &Dataset,
    holdout: Option<&Dataset>,
    n: usize,
    data_seed: u64,
    test_limit: Option<usize>,
) -> Result<Split> {
    let mut rng = Rng::new(data_seed, streams::SUBSET);
    let picked = stratified_indices(source, n, &mut rng)?;
    let train = source.select(&picked);
    let test = match holdout {
        Some(ds) => ds.clone(),
        None => source.select(&complement(source.len(), &picked)),
    };
    let test = match test_limit {
        Some(limit) if limit < test.len() => test.select(&(0..limit).collect::<Vec<_>>()),
        _ => test,
    };
    let (train, stats) = standardize(&train, None)?;
    let (test, _) = standardize(&test, Some(&stats))?;
    Ok(Split { train, test })
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub model: Model,
    pub history: History,
    pub test: Evaluation,
}

/// Builds the model from `seed`, trains it with `spec.train`, and
/// evaluates on the test split.
pub fn run(spec: &RunSpec, split: &Split, seed: u64) -> Result<RunOutcome> {
    let mut model = spec.build(split.train.example_shape(), split.train.classes(), seed)?;
    let config = TrainConfig {
        seed,
        ..spec.train.clone()
    };
    let history = train(&mut model, &split.train, &config, None)?;
    let test = evaluate(&model, &split.test)?;
    Ok(RunOutcome { model, history, test })
}

/// Batch size and epoch count for a training set of `n` examples such that
/// roughly `steps` updates are taken; batches never exceed `n`.
pub fn step_budget(batch_size: usize, n: usize, steps: usize) -> (usize, usize) {
    let batch = batch_size.min(n).max(1);
    let per_epoch = n / batch;
    (batch, steps.div_ceil(per_epoch).max(1))
}

/// Corruption levels and gradient-contribution norms for one training
/// minibatch; `examples` are indices into the training set.
#[derive(Clone, Debug)]
pub struct ProbeBatch {
    pub batch: usize,
    pub examples: Vec<usize>,
    pub layers: Vec<LevelNorms>,
}

/// One corrupted pass per consecutive minibatch of `train_set` (the last
/// partial batch is skipped), batch `b` drawing from stream
/// `(seed, probe, b)`.
pub fn probe_levels(model: &Model, train_set: &Dataset, batch_size: usize, seed: u64) -> Result<Vec<ProbeBatch>> {
    let base = Rng::new(seed, streams::PROBE);
    let batch_size = batch_size.min(train_set.len());
    (0..train_set.len() / batch_size)
        .map(|b| {
            let examples: Vec<usize> = (b * batch_size..(b + 1) * batch_size).collect();
            let batch = train_set.select(&examples);
            let layers = grad_norm_by_level(model, batch.examples(), batch.labels(), &base.derive(&[b as u64]))?;
            Ok(ProbeBatch { batch: b, examples, layers })
        })
        .collect()
}
