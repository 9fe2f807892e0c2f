//! Multi-label metrics: per-sample F1 averaged over samples, pooled
//! per-class F1, and per-k stress reports with confusion counts.
//!
//! A sample (or class) with no positives in either truth or prediction has
//! F1 = 1.0: an all-off sample predicted all-off is a correct prediction.

use std::path::Path;

use ndarray::{ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{NilmError, Result};
use crate::io;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn f1(&self) -> f64 {
        let denom = 2 * self.tp + self.fp + self.fn_;
        if denom == 0 {
            1.0
        } else {
            (2 * self.tp) as f64 / denom as f64
        }
    }

    fn add(&mut self, p: u8, t: u8) {
        match (p != 0, t != 0) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

pub fn confusion(pred: ArrayView1<u8>, truth: ArrayView1<u8>) -> Result<ConfusionCounts> {
    if pred.len() != truth.len() {
        return Err(NilmError::invalid(format!(
            "prediction length {} != truth length {}",
            pred.len(),
            truth.len()
        )));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.iter().zip(truth.iter()) {
        c.add(p, t);
    }
    Ok(c)
}

pub fn f1_sample(pred: ArrayView1<u8>, truth: ArrayView1<u8>) -> Result<f64> {
    Ok(confusion(pred, truth)?.f1())
}

fn check_shapes(pred: &ArrayView2<u8>, truth: &ArrayView2<u8>) -> Result<()> {
    if pred.dim() != truth.dim() {
        return Err(NilmError::invalid(format!(
            "prediction shape {:?} != truth shape {:?}",
            pred.dim(),
            truth.dim()
        )));
    }
    Ok(())
}

/// Per-sample F1 scores in row order.
pub fn f1_per_sample(pred: ArrayView2<u8>, truth: ArrayView2<u8>) -> Result<Vec<f64>> {
    check_shapes(&pred, &truth)?;
    pred.outer_iter()
        .zip(truth.outer_iter())
        .map(|(p, t)| f1_sample(p, t))
        .collect()
}

pub fn f1_mean(pred: ArrayView2<u8>, truth: ArrayView2<u8>) -> Result<f64> {
    if pred.nrows() == 0 {
        return Err(NilmError::invalid("f1_mean needs at least one sample"));
    }
    let scores = f1_per_sample(pred, truth)?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Column-pooled counts for each class.
pub fn per_class_counts(pred: ArrayView2<u8>, truth: ArrayView2<u8>) -> Result<Vec<ConfusionCounts>> {
    check_shapes(&pred, &truth)?;
    pred.axis_iter(Axis(1))
        .zip(truth.axis_iter(Axis(1)))
        .map(|(p, t)| confusion(p, t))
        .collect()
}

pub fn per_class_f1(pred: ArrayView2<u8>, truth: ArrayView2<u8>) -> Result<Vec<f64>> {
    Ok(per_class_counts(pred, truth)?.iter().map(ConfusionCounts::f1).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KGroup {
    pub k: usize,
    pub n_samples: usize,
    pub f1: f64,
    pub counts: ConfusionCounts,
}

/// Groups samples by number of active appliances, ascending in `k`. Only
/// values of `k` that occur are reported.
pub fn per_k_report(pred: ArrayView2<u8>, truth: ArrayView2<u8>, k_values: &[usize]) -> Result<Vec<KGroup>> {
    check_shapes(&pred, &truth)?;
    if k_values.len() != truth.nrows() {
        return Err(NilmError::invalid(format!(
            "{} k values for {} samples",
            k_values.len(),
            truth.nrows()
        )));
    }
    let max_k = k_values.iter().copied().max().unwrap_or(0);
    let mut sums = vec![0.0; max_k + 1];
    let mut groups: Vec<Option<KGroup>> = vec![None; max_k + 1];
    for (row, (p, t)) in pred.outer_iter().zip(truth.outer_iter()).enumerate() {
        let k = k_values[row];
        let active = t.iter().filter(|&&v| v != 0).count();
        if active != k {
            return Err(NilmError::invalid(format!(
                "sample {row}: k = {k} but truth has {active} active classes"
            )));
        }
        let c = confusion(p, t)?;
        sums[k] += c.f1();
        let g = groups[k].get_or_insert(KGroup {
            k,
            n_samples: 0,
            f1: 0.0,
            counts: ConfusionCounts::default(),
        });
        g.n_samples += 1;
        g.counts.merge(&c);
    }
    Ok(groups
        .into_iter()
        .flatten()
        .map(|mut g| {
            g.f1 = sums[g.k] / g.n_samples as f64;
            g
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassRow {
    pub class: String,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KRow {
    pub k: usize,
    pub n_samples: usize,
    pub f1: f64,
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub f1_mean: f64,
    pub n_samples: usize,
    pub per_class: Vec<ClassRow>,
    pub per_k: Vec<KRow>,
}

impl MetricsReport {
    pub fn compute(
        pred: ArrayView2<u8>,
        truth: ArrayView2<u8>,
        k_values: &[usize],
        class_names: &[String],
    ) -> Result<Self> {
        if class_names.len() != truth.ncols() {
            return Err(NilmError::invalid(format!(
                "{} class names for {} label columns",
                class_names.len(),
                truth.ncols()
            )));
        }
        let f1_mean = f1_mean(pred, truth)?;
        let per_class = per_class_counts(pred, truth)?
            .iter()
            .zip(class_names)
            .map(|(c, name)| ClassRow {
                class: name.clone(),
                f1: c.f1(),
                tp: c.tp,
                fp: c.fp,
                fn_: c.fn_,
            })
            .collect();
        let per_k = per_k_report(pred, truth, k_values)?
            .into_iter()
            .map(|g| KRow {
                k: g.k,
                n_samples: g.n_samples,
                f1: g.f1,
                tp: g.counts.tp,
                fp: g.counts.fp,
                tn: g.counts.tn,
                fn_: g.counts.fn_,
            })
            .collect();
        Ok(Self {
            f1_mean,
            n_samples: truth.nrows(),
            per_class,
            per_k,
        })
    }

    /// Writes `per_class.csv` and `per_k.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        write_rows(&dir.join(PER_CLASS_FILE), &self.per_class)?;
        write_rows(&dir.join(PER_K_FILE), &self.per_k)
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let csv_err = |e: csv::Error| NilmError::Data(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| NilmError::io(path, e))
}

/// Raw predictions persisted next to a report so it can be recomputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub artifact_version: u32,
    pub config_hash: String,
    pub seed: u64,
    pub class_names: Vec<String>,
    pub threshold: f64,
    pub k: Vec<usize>,
    pub truth: Vec<Vec<u8>>,
    pub pred: Vec<Vec<u8>>,
    pub probs: Vec<Vec<f64>>,
}

impl PredictionSet {
    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path)
    }

    pub fn report(&self) -> Result<MetricsReport> {
        let pred = crate::decomp::linalg::from_nested(&self.pred, self.class_names.len())?;
        let truth = crate::decomp::linalg::from_nested(&self.truth, self.class_names.len())?;
        MetricsReport::compute(pred.view(), truth.view(), &self.k, &self.class_names)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub f1_mean: f64,
    pub n_samples: usize,
    pub config_hash: String,
    pub seed: u64,
    pub artifact_version: u32,
}

pub const PER_CLASS_FILE: &str = "per_class.csv";
pub const PER_K_FILE: &str = "per_k.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const PREDICTIONS_FILE: &str = "predictions.json";

/// Writes the CSV reports and `summary.json` derived from `preds` into `dir`.
pub fn write_report(dir: &Path, preds: &PredictionSet) -> Result<MetricsReport> {
    io::ensure_dir(dir)?;
    let report = preds.report()?;
    report.write_csv(dir)?;
    let summary = Summary {
        f1_mean: report.f1_mean,
        n_samples: report.n_samples,
        config_hash: preds.config_hash.clone(),
        seed: preds.seed,
        artifact_version: preds.artifact_version,
    };
    io::write_json(&dir.join(SUMMARY_FILE), &summary)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn oracle_f1(p: &[u8], t: &[u8]) -> f64 {
        let tp = p.iter().zip(t).filter(|(a, b)| **a == 1 && **b == 1).count() as f64;
        let fp = p.iter().zip(t).filter(|(a, b)| **a == 1 && **b == 0).count() as f64;
        let fn_ = p.iter().zip(t).filter(|(a, b)| **a == 0 && **b == 1).count() as f64;
        if tp + fp + fn_ == 0.0 {
            1.0
        } else {
            2.0 * tp / (2.0 * tp + fp + fn_)
        }
    }

    fn random_bits(rng: &mut ChaCha8Rng, n: usize, c: usize) -> Array2<u8> {
        Array2::from_shape_fn((n, c), |_| rng.random_range(0..2u8))
    }

    #[test]
    fn sample_examples() {
        let f = f1_sample(array![1u8, 1, 1].view(), array![1u8, 0, 1].view()).unwrap();
        assert!((f - 0.8).abs() < 1e-15);
        let t = array![0u8, 1, 0, 1];
        assert_eq!(f1_sample(t.view(), t.view()).unwrap(), 1.0);
        let ones = Array2::<u8>::ones((1, 15));
        let zeros = Array2::<u8>::zeros((1, 15));
        assert_eq!(f1_sample(zeros.row(0), ones.row(0)).unwrap(), 0.0);
        assert_eq!(f1_sample(zeros.row(0), zeros.row(0)).unwrap(), 1.0);
        assert!(f1_sample(array![1u8].view(), array![1u8, 0].view()).is_err());
    }

    #[test]
    fn mean_examples() {
        let truth = array![[1u8, 0, 1], [0, 1, 0]];
        let pred = array![[1u8, 1, 1], [0, 1, 0]];
        assert!((f1_mean(pred.view(), truth.view()).unwrap() - 0.9).abs() < 1e-15);
        assert!(f1_mean(Array2::<u8>::zeros((0, 3)).view(), Array2::<u8>::zeros((0, 3)).view()).is_err());
    }

    #[test]
    fn mean_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let p = random_bits(&mut rng, 17, 6);
            let t = random_bits(&mut rng, 17, 6);
            let brute: f64 = (0..17)
                .map(|i| oracle_f1(p.row(i).as_slice().unwrap(), t.row(i).as_slice().unwrap()))
                .sum::<f64>()
                / 17.0;
            assert!((f1_mean(p.view(), t.view()).unwrap() - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn per_class_matches_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_bits(&mut rng, 20, 5);
        let t = random_bits(&mut rng, 20, 5);
        let got = per_class_f1(p.view(), t.view()).unwrap();
        for j in 0..5 {
            let pc: Vec<u8> = p.column(j).to_vec();
            let tc: Vec<u8> = t.column(j).to_vec();
            assert_eq!(got[j], oracle_f1(&pc, &tc));
        }
        let z = Array2::<u8>::zeros((4, 2));
        assert_eq!(per_class_f1(z.view(), z.view()).unwrap(), vec![1.0, 1.0]);
    }

    #[test]
    fn per_k_full_group() {
        let t = Array2::<u8>::ones((3, 4));
        let g = per_k_report(t.view(), t.view(), &[4, 4, 4]).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].f1, 1.0);
        assert_eq!(g[0].counts, ConfusionCounts { tp: 12, fp: 0, tn: 0, fn_: 0 });
    }

    #[test]
    fn per_k_rejects_wrong_k() {
        let t = array![[1u8, 0], [1, 1]];
        assert!(per_k_report(t.view(), t.view(), &[1, 1]).is_err());
    }

    #[test]
    fn per_k_filter_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t = random_bits(&mut rng, 60, 4);
        let p = random_bits(&mut rng, 60, 4);
        let k: Vec<usize> = t.outer_iter().map(|r| r.iter().map(|&v| v as usize).sum()).collect();
        let groups = per_k_report(p.view(), t.view(), &k).unwrap();
        let mut total = 0;
        for g in &groups {
            let rows: Vec<usize> = (0..60).filter(|&i| k[i] == g.k).collect();
            let ps = p.select(Axis(0), &rows);
            let ts = t.select(Axis(0), &rows);
            assert_eq!(g.n_samples, rows.len());
            assert!((g.f1 - f1_mean(ps.view(), ts.view()).unwrap()).abs() < 1e-12);
            assert_eq!(g.counts.total() as usize, rows.len() * 4);
            total += rows.len();
        }
        assert_eq!(total, 60);
    }

    #[test]
    fn report_roundtrips_through_predictions() {
        let t = array![[1u8, 0], [1, 1], [0, 0]];
        let p = array![[1u8, 1], [1, 0], [0, 0]];
        let names = vec!["a".to_string(), "b".to_string()];
        let set = PredictionSet {
            artifact_version: 1,
            config_hash: "h".into(),
            seed: 0,
            class_names: names.clone(),
            threshold: 0.5,
            k: vec![1, 2, 0],
            truth: t.outer_iter().map(|r| r.to_vec()).collect(),
            pred: p.outer_iter().map(|r| r.to_vec()).collect(),
            probs: vec![vec![0.0; 2]; 3],
        };
        let direct = MetricsReport::compute(p.view(), t.view(), &[1, 2, 0], &names).unwrap();
        assert_eq!(set.report().unwrap(), direct);
        let dir = tempfile::tempdir().unwrap();
        direct.write_csv(dir.path()).unwrap();
        let text = std::fs::read_to_string(dir.path().join("per_k.csv")).unwrap();
        assert!(text.starts_with("k,n_samples,f1,tp,fp,tn,fn\n"));
        let text = std::fs::read_to_string(dir.path().join("per_class.csv")).unwrap();
        assert!(text.starts_with("class,f1,tp,fp,fn\n"));
    }
}
