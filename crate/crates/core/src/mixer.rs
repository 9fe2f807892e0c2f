//! Random superposition of single-appliance windows into synthetic household
//! aggregates (Kirchhoff's current law on a shared supply).
//!
//! For every aggregate a set of distinct classes is drawn uniformly, each
//! chosen class contributes `f ~ U{f_min..=f_max}` recordings of itself, and
//! the currents are summed. Recordings are drawn without replacement while the
//! class has enough of them and with replacement otherwise.

use std::path::Path;

use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{NilmError, Result};
use crate::ingest::LabeledDataset;
use crate::io;
use crate::rng::{self, Rng};

/// Record indices per class, aligned with `LabeledDataset::class_names`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassIndex {
    pub buckets: Vec<Vec<usize>>,
}

impl ClassIndex {
    pub fn bucket(&self, class: usize) -> &[usize] {
        &self.buckets[class]
    }
}

pub fn build_class_index(dataset: &LabeledDataset) -> Result<ClassIndex> {
    if dataset.is_empty() {
        return Err(NilmError::invalid("cannot index an empty dataset"));
    }
    let mut buckets = vec![Vec::new(); dataset.n_classes()];
    for (i, r) in dataset.records.iter().enumerate() {
        let c = dataset
            .class_index(&r.label)
            .ok_or_else(|| NilmError::invalid(format!("unknown label {:?}", r.label)))?;
        buckets[c].push(i);
    }
    Ok(ClassIndex { buckets })
}

/// A uniformly random `n_comb`-subset of `0..n_classes`, ascending.
pub fn sample_combination(n_classes: usize, n_comb: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if n_comb > n_classes {
        return Err(NilmError::invalid(format!(
            "combination of {n_comb} from {n_classes} classes"
        )));
    }
    let mut picked = index::sample(rng, n_classes, n_comb).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSample {
    pub current: Vec<f64>,
    /// Voltage of the lowest-indexed constituent.
    pub voltage: Vec<f64>,
    /// Multi-hot, one entry per class.
    pub labels: Vec<u8>,
    /// Number of active classes.
    pub k: usize,
    /// Summed record indices, ascending, repeated when drawn more than once.
    pub constituents: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub f_min: usize,
    pub f_max: usize,
    pub samples_per_k: usize,
    pub rng_seed: u64,
    /// Standard deviation of additive Gaussian measurement noise.
    #[serde(default)]
    pub noise_std: f64,
}

impl Default for MixConfig {
    fn default() -> Self {
        Self {
            n_min: 1,
            n_max: 15,
            f_min: 1,
            f_max: 10,
            samples_per_k: 100,
            rng_seed: 0,
            noise_std: 0.0,
        }
    }
}

impl MixConfig {
    pub fn validate(&self, n_classes: usize) -> Result<()> {
        if self.n_min < 1 || self.n_min > self.n_max {
            return Err(NilmError::Config(format!(
                "n_min must satisfy 1 <= n_min <= n_max, got n_min={} n_max={}",
                self.n_min, self.n_max
            )));
        }
        if self.n_max > n_classes {
            return Err(NilmError::Config(format!(
                "n_max={} exceeds the {n_classes} available classes",
                self.n_max
            )));
        }
        if self.f_min < 1 || self.f_min > self.f_max {
            return Err(NilmError::Config(format!(
                "f_min must satisfy 1 <= f_min <= f_max, got f_min={} f_max={}",
                self.f_min, self.f_max
            )));
        }
        if !(self.noise_std >= 0.0) {
            return Err(NilmError::Config("noise_std must be non-negative".into()));
        }
        Ok(())
    }
}

fn draw_from_bucket(bucket: &[usize], count: usize, rng: &mut Rng) -> Vec<usize> {
    if bucket.len() >= count {
        index::sample(rng, bucket.len(), count)
            .into_iter()
            .map(|i| bucket[i])
            .collect()
    } else {
        (0..count)
            .map(|_| bucket[rng.random_range(0..bucket.len())])
            .collect()
    }
}

/// Superposes `f_i` recordings of every class in `combination`.
pub fn mix(
    dataset: &LabeledDataset,
    index: &ClassIndex,
    combination: &[usize],
    f_min: usize,
    f_max: usize,
    rng: &mut Rng,
) -> Result<AggregateSample> {
    if combination.is_empty() {
        return Err(NilmError::invalid("empty class combination"));
    }
    if f_min < 1 || f_min > f_max {
        return Err(NilmError::invalid(format!("bad duplication range {f_min}..={f_max}")));
    }
    let mut constituents = Vec::new();
    for &c in combination {
        let bucket = index
            .buckets
            .get(c)
            .filter(|b| !b.is_empty())
            .ok_or_else(|| NilmError::invalid(format!("class {c} has no recordings")))?;
        let f = rng.random_range(f_min..=f_max);
        constituents.extend(draw_from_bucket(bucket, f, rng));
    }
    constituents.sort_unstable();

    let first = &dataset.records[constituents[0]];
    let len = first.len();
    let mut current = vec![0.0; len];
    let mut labels = vec![0u8; dataset.n_classes()];
    for &i in &constituents {
        let r = &dataset.records[i];
        if r.len() != len {
            return Err(NilmError::invalid(format!(
                "record {i} has {} samples, expected {len}",
                r.len()
            )));
        }
        for (acc, x) in current.iter_mut().zip(&r.current) {
            *acc += x;
        }
        labels[dataset.class_index(&r.label).expect("indexed label")] = 1;
    }
    let k = labels.iter().filter(|&&l| l == 1).count();
    Ok(AggregateSample {
        current,
        voltage: first.voltage.clone(),
        labels,
        k,
        constituents,
    })
}

/// `samples_per_k` aggregates for every `k` in `n_min..=n_max`, ordered by k.
/// Each k draws from its own stream derived from `(rng_seed, k)`.
pub fn generate_dataset(dataset: &LabeledDataset, config: &MixConfig) -> Result<Vec<AggregateSample>> {
    config.validate(dataset.n_classes())?;
    let index = build_class_index(dataset)?;
    let noise = if config.noise_std > 0.0 {
        Some(Normal::new(0.0, config.noise_std).map_err(|e| NilmError::invalid(e.to_string()))?)
    } else {
        None
    };
    let per_k = (config.n_min..=config.n_max)
        .into_par_iter()
        .map(|k| {
            let mut rng = rng::derived(config.rng_seed, &[k as u64]);
            let mut noise_rng = rng::derived(config.rng_seed, &[k as u64, 0x6e6f697365]);
            (0..config.samples_per_k)
                .map(|_| {
                    let comb = sample_combination(dataset.n_classes(), k, &mut rng)?;
                    let mut s = mix(dataset, &index, &comb, config.f_min, config.f_max, &mut rng)?;
                    if let Some(n) = &noise {
                        for x in s.current.iter_mut() {
                            *x += n.sample(&mut noise_rng);
                        }
                    }
                    Ok(s)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per_k.into_iter().flatten().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn tag(self) -> u64 {
        self as u64 + 1
    }
}

/// Fractions of source recordings (and aggregates) per split.
pub const SPLIT_FRACTIONS: [f64; 3] = [0.7, 0.1, 0.2];

/// Partitions record indices per class into train/val/test before any mixing,
/// so no source window is shared across splits. Every class needs at least
/// three recordings; each split receives at least one.
pub fn split_records(dataset: &LabeledDataset, seed: u64) -> Result<[Vec<usize>; 3]> {
    let index = build_class_index(dataset)?;
    let mut out: [Vec<usize>; 3] = Default::default();
    for (c, bucket) in index.buckets.iter().enumerate() {
        let n = bucket.len();
        if n < 3 {
            return Err(NilmError::Data(format!(
                "class {:?} has {n} windows; at least 3 are needed to split",
                dataset.class_names[c]
            )));
        }
        let mut order = bucket.clone();
        let mut rng = rng::derived(seed, &[0x73706c6974, c as u64]);
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }
        let n_val = ((n as f64 * SPLIT_FRACTIONS[1]).round() as usize).max(1);
        let n_test = ((n as f64 * SPLIT_FRACTIONS[2]).round() as usize).max(1);
        let n_train = n - n_val - n_test;
        if n_train == 0 {
            return Err(NilmError::Data(format!(
                "class {:?} has too few windows for a training split",
                dataset.class_names[c]
            )));
        }
        out[0].extend_from_slice(&order[..n_train]);
        out[1].extend_from_slice(&order[n_train..n_train + n_val]);
        out[2].extend_from_slice(&order[n_train + n_val..]);
    }
    for part in out.iter_mut() {
        part.sort_unstable();
    }
    Ok(out)
}

/// A persisted set of aggregates, possibly spanning several splits.
///
/// On disk: `currents.bin` and `voltages.bin` hold row-major little-endian
/// f64 matrices (one row per aggregate), and `aggregates.json` carries
/// everything else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSet {
    pub artifact_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub class_names: Vec<String>,
    pub sample_rate: f64,
    pub window_len: usize,
    pub labels: Vec<Vec<u8>>,
    pub k: Vec<usize>,
    pub split: Vec<Split>,
    pub constituents: Vec<Vec<usize>>,
    pub config: serde_json::Value,
    #[serde(skip)]
    pub currents: Vec<f64>,
    #[serde(skip)]
    pub voltages: Vec<f64>,
}

pub const CURRENTS_FILE: &str = "currents.bin";
pub const VOLTAGES_FILE: &str = "voltages.bin";
pub const SIDECAR_FILE: &str = "aggregates.json";

impl AggregateSet {
    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    pub fn current(&self, row: usize) -> &[f64] {
        &self.currents[row * self.window_len..(row + 1) * self.window_len]
    }

    pub fn voltage(&self, row: usize) -> &[f64] {
        &self.voltages[row * self.window_len..(row + 1) * self.window_len]
    }

    pub fn rows_in(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.split[i] == split).collect()
    }

    pub fn push(&mut self, sample: AggregateSample, split: Split) -> Result<()> {
        if sample.current.len() != self.window_len {
            return Err(NilmError::invalid(format!(
                "aggregate of {} samples in a set of window length {}",
                sample.current.len(),
                self.window_len
            )));
        }
        self.currents.extend_from_slice(&sample.current);
        self.voltages.extend_from_slice(&sample.voltage);
        self.labels.push(sample.labels);
        self.k.push(sample.k);
        self.split.push(split);
        self.constituents.push(sample.constituents);
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        io::ensure_dir(dir)?;
        io::write_f64_file(&dir.join(CURRENTS_FILE), &self.currents)?;
        io::write_f64_file(&dir.join(VOLTAGES_FILE), &self.voltages)?;
        io::write_json(&dir.join(SIDECAR_FILE), self)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let mut set: AggregateSet = io::read_json(&dir.join(SIDECAR_FILE))?;
        set.currents = io::read_f64_file(&dir.join(CURRENTS_FILE))?;
        set.voltages = io::read_f64_file(&dir.join(VOLTAGES_FILE))?;
        let n = set.k.len();
        let expect = n * set.window_len;
        if set.currents.len() != expect || set.voltages.len() != expect {
            return Err(NilmError::Data(format!(
                "{}: expected {n} rows of {} samples",
                dir.display(),
                set.window_len
            )));
        }
        if set.labels.len() != n || set.split.len() != n || set.constituents.len() != n {
            return Err(NilmError::Data(format!("{}: inconsistent row counts", dir.display())));
        }
        for (i, (l, &k)) in set.labels.iter().zip(&set.k).enumerate() {
            let ones = l.iter().filter(|&&b| b == 1).count();
            if ones != k || l.len() != set.class_names.len() {
                return Err(NilmError::Data(format!("row {i}: label vector disagrees with k={k}")));
            }
        }
        Ok(set)
    }
}
