//! Labelled datasets, stratified subsetting and channel standardization.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::sqrt;
use crate::{Error, Result, Rng, Tensor};

/// Examples (`N×C×H×W` or `N×F`) with integer class labels in `0..classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    examples: Tensor,
    labels: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(examples: Tensor, labels: Vec<usize>, classes: usize) -> Result<Self> {
        if examples.rank() < 2 || examples.batch_len() != labels.len() {
            return Err(Error::Dimension {
                left: examples.shape().to_vec(),
                right: vec![labels.len()],
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::InvalidConfig(alloc::format!(
                "label {bad} outside 0..{classes}"
            )));
        }
        Ok(Self {
            examples,
            labels,
            classes,
        })
    }

    pub fn examples(&self) -> &Tensor {
        &self.examples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn example_shape(&self) -> &[usize] {
        self.examples.example_shape()
    }

    /// Examples at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            examples: self.examples.gather(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Every example flattened to `N×F`.
    pub fn flattened(&self) -> Self {
        let n = self.len();
        let f = self.examples.example_len();
        Self {
            examples: self.examples.clone().reshape(vec![n, f]).expect("same length"),
            labels: self.labels.clone(),
            classes: self.classes,
        }
    }
}

/// Indices of a stratified sample of size `n`: each class gets
/// `floor(n/k)` examples and the remainder goes one each to the lowest
/// class indices. Classes are sampled without replacement and the result is
/// shuffled.
pub fn stratified_indices(ds: &Dataset, n: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    let k = ds.classes();
    if n > ds.len() {
        return Err(Error::InsufficientData(alloc::format!(
            "subset of {n} requested from {} examples",
            ds.len()
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &y) in ds.labels().iter().enumerate() {
        by_class[y].push(i);
    }
    let mut picked = Vec::with_capacity(n);
    for (class, members) in by_class.iter_mut().enumerate() {
        let quota = n / k + usize::from(class < n % k);
        if members.len() < quota {
            return Err(Error::InsufficientClass {
                class,
                available: members.len(),
                quota,
            });
        }
        // partial Fisher–Yates: the first `quota` slots are a uniform sample
        for i in 0..quota {
            let j = i + rng.below(members.len() - i);
            members.swap(i, j);
        }
        picked.extend_from_slice(&members[..quota]);
    }
    rng.shuffle(&mut picked);
    Ok(picked)
}

pub fn stratified_subset(ds: &Dataset, n: usize, rng: &mut Rng) -> Result<Dataset> {
    Ok(ds.select(&stratified_indices(ds, n, rng)?))
}

/// Complement of `indices` in `0..len`, ascending.
pub fn complement(len: usize, indices: &[usize]) -> Vec<usize> {
    let mut used = vec![false; len];
    for &i in indices {
        used[i] = true;
    }
    (0..len).filter(|&i| !used[i]).collect()
}

/// Per-channel mean and standard deviation. The channel axis is axis 1 of
/// the data tensor (the only feature axis for `N×F` data).
#[derive(Clone, Debug, PartialEq)]
pub struct StandardizeStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

fn channel_layout(t: &Tensor) -> (usize, usize, usize) {
    let shape = t.shape();
    let n = shape[0];
    let c = shape[1];
    let inner: usize = shape[2..].iter().product();
    (n, c, inner)
}

/// Centers and scales every channel. Without `stats` they are computed from
/// `ds` (population standard deviation); the stats actually applied are
/// returned.
pub fn standardize(ds: &Dataset, stats: Option<&StandardizeStats>) -> Result<(Dataset, StandardizeStats)> {
    let (n, c, inner) = channel_layout(ds.examples());
    let x = ds.examples().data();
    let stats = match stats {
        Some(s) => {
            if s.mean.len() != c || s.std.len() != c {
                return Err(Error::Dimension {
                    left: vec![c],
                    right: vec![s.mean.len()],
                });
            }
            if let Some(channel) = s.std.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::DegenerateChannel { channel });
            }
            s.clone()
        }
        None => {
            let count = (n * inner) as f64;
            let mut mean = vec![0.0; c];
            let mut std = vec![0.0; c];
            for ch in 0..c {
                let values = (0..n).flat_map(|i| {
                    let start = (i * c + ch) * inner;
                    x[start..start + inner].iter().copied()
                });
                let mu = values.clone().sum::<f64>() / count;
                let var = values.map(|v| (v - mu) * (v - mu)).sum::<f64>() / count;
                if var <= 0.0 {
                    return Err(Error::DegenerateChannel { channel: ch });
                }
                mean[ch] = mu;
                std[ch] = sqrt(var);
            }
            StandardizeStats { mean, std }
        }
    };
    let mut out = x.to_vec();
    for (idx, v) in out.iter_mut().enumerate() {
        let ch = (idx / inner) % c;
        *v = (*v - stats.mean[ch]) / stats.std[ch];
    }
    let examples = Tensor::new(ds.examples().shape().to_vec(), out)?;
    Ok((
        Dataset {
            examples,
            labels: ds.labels.clone(),
            classes: ds.classes,
        },
        stats,
    ))
}
