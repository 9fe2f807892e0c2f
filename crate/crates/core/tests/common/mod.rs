#![allow(dead_code)]

use std::path::Path;

use ndarray::Array2;
use nilm_fusion::model::{self, ClassifierParams, Mode, ResFfnConfig};
use nilm_fusion::rng;

/// Largest per-group discrepancy between analytic gradients and central
/// differences of the mean BCE, with dropout masks frozen from one draw.
/// Error metric: max |a - n| over the group divided by the group's largest
/// magnitude among both gradients.
pub fn gradient_check(cfg: ResFfnConfig, batch: usize, seed: u64, step: f64) -> Vec<(String, f64)> {
    let params = ClassifierParams::init(cfg, seed).unwrap();
    let mut r = rng::seeded(seed ^ 0xabc);
    let x = Array2::from_shape_fn((batch, cfg.input_dim), |_| rand::Rng::random_range(&mut r, -1.5..1.5));
    let y = Array2::from_shape_fn((batch, cfg.n_classes), |(i, j)| f64::from((i * 7 + j * 3) % 3 == 0));
    let (_, cache) = model::forward(&params, x.view(), Mode::Train, &mut r).unwrap();
    let masks = cache.masks();
    let analytic = model::backward(&params, &cache, y.view()).unwrap().values;

    let loss_at = |values: &[f64]| {
        let mut p = params.clone();
        p.values.copy_from_slice(values);
        let (z, _) = model::network::forward_with_masks(&p, x.view(), &masks).unwrap();
        model::bce_loss(z.view(), y.view()).unwrap()
    };
    let mut values = params.values.clone();
    let numeric: Vec<f64> = (0..values.len())
        .map(|i| {
            let orig = values[i];
            values[i] = orig + step;
            let up = loss_at(&values);
            values[i] = orig - step;
            let down = loss_at(&values);
            values[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect();

    params
        .layout()
        .groups()
        .into_iter()
        .map(|(name, range)| {
            let mut diff = 0.0f64;
            let mut scale = 0.0f64;
            for i in range {
                diff = diff.max((analytic[i] - numeric[i]).abs());
                scale = scale.max(analytic[i].abs()).max(numeric[i].abs());
            }
            let rel = if scale == 0.0 { 0.0 } else { diff / scale };
            (name, rel)
        })
        .collect()
}

pub fn toy_config(n_blocks: usize, dropout_p: f64) -> ResFfnConfig {
    ResFfnConfig {
        input_dim: 5,
        hidden_dim: 6,
        n_blocks,
        n_classes: 3,
        dropout_p,
        threshold: 0.5,
    }
}

/// Every regular file below `dir` with its contents, sorted by relative path.
pub fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
