//! Acceptance checks. Runs without the libtest harness so every criterion
//! prints one PASS/FAIL line; the process fails if any criterion does.
//!
//! NILM_PLAID_DIR: optional PLAID-style directory for the real-data desk run.

mod common;

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, Normal, Uniform};

use nilm_fusion::baseline::fryze_decompose;
use nilm_fusion::decomp::{self, linalg, FusionParams, IcaParams};
use nilm_fusion::eval::{self, MetricsReport};
use nilm_fusion::features::FeatureKind;
use nilm_fusion::ingest::{self, Mains};
use nilm_fusion::mixer::{self, MixConfig};
use nilm_fusion::model::ResFfnConfig;
use nilm_fusion::pipeline::{self, EvalInputs, MixSection, PlaidSource, RunConfig, SourceConfig, SyntheticSource};
use nilm_fusion::rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// ---------------------------------------------------------------- 1

fn gradients() -> Outcome {
    let t = Instant::now();
    let groups = common::gradient_check(common::toy_config(1, 0.2), 8, 5, 1e-5);
    let secs = t.elapsed().as_secs_f64();
    let (worst_name, worst) = groups
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(n, e)| (n.clone(), *e))
        .unwrap();
    outcome(
        worst < 1e-4 && secs < 10.0,
        format!("{} groups, worst {worst_name} rel {worst:.2e} (< 1e-4), {secs:.2}s (< 10s)", groups.len()),
    )
}

// ---------------------------------------------------------------- 2

fn abs_corr(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    (sab / (saa * sbb).sqrt()).abs()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn condition_number(a: &Array2<f64>) -> f64 {
    let m = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]]);
    let sv = m.singular_values();
    sv.max() / sv.min()
}

/// Best mean |corr| over all source-to-estimate assignments; the absolute
/// value absorbs the sign ambiguity.
fn matched_corr(sources: &Array2<f64>, est: &Array2<f64>) -> f64 {
    let k = sources.ncols();
    let cols = |m: &Array2<f64>| -> Vec<Vec<f64>> { m.columns().into_iter().map(|c| c.to_vec()).collect() };
    let (s, e) = (cols(sources), cols(est));
    let c: Vec<Vec<f64>> = (0..k).map(|i| (0..k).map(|j| abs_corr(&s[i], &e[j])).collect()).collect();
    permutations(k)
        .iter()
        .map(|p| (0..k).map(|i| c[i][p[i]]).sum::<f64>() / k as f64)
        .fold(0.0, f64::max)
}

fn ica_recovery() -> Outcome {
    let (m, k, trials) = (10_000, 4, 20);
    let t = Instant::now();
    let mut good = 0;
    let mut worst = f64::INFINITY;
    let mut failures = Vec::new();
    for trial in 0..trials {
        let mut r = rng::derived(2024, &[trial]);
        let uni = Uniform::new(-3f64.sqrt(), 3f64.sqrt()).unwrap();
        let unit = Uniform::new(-0.5, 0.5).unwrap();
        let sources = Array2::from_shape_fn((m, k), |(_, j)| {
            if j < 2 {
                uni.sample(&mut r)
            } else {
                // Laplace(0, 1/sqrt 2) by inverse CDF
                let u: f64 = unit.sample(&mut r);
                -u.signum() * (1.0 - 2.0 * u.abs()).ln() / 2f64.sqrt()
            }
        });
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mixing = loop {
            let a = Array2::from_shape_fn((k, k), |_| normal.sample(&mut r));
            if condition_number(&a) < 10.0 {
                break a;
            }
        };
        let x = sources.dot(&mixing.t());
        let (xc, _) = decomp::mean_center(x.view()).unwrap();
        let est = decomp::ica_fit(xc.view(), &IcaParams::new(k, r.random()))
            .and_then(|model| decomp::ica_transform(&model, xc.view()));
        match est {
            Ok(est) => {
                let c = matched_corr(&sources, &est);
                worst = worst.min(c);
                if c >= 0.95 {
                    good += 1;
                } else {
                    failures.push(format!("trial {trial}: {c:.3}"));
                }
            }
            Err(e) => failures.push(format!("trial {trial}: {e}")),
        }
    }
    let secs = t.elapsed().as_secs_f64();
    outcome(
        good >= 19 && secs < 30.0,
        format!(
            "{good}/{trials} trials with matched mean |corr| >= 0.95 (need 19), worst {worst:.4}, {secs:.2}s (< 30s){}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join(", ")) }
        ),
    )
}

// ---------------------------------------------------------------- 3

fn pca_identities() -> Outcome {
    let (m, n) = (500, 50);
    let mut r = rng::seeded(33);
    let normal = Normal::new(0.0, 1.0).unwrap();
    // correlated columns so the spectrum is not flat
    let z = Array2::from_shape_fn((m, n), |_| normal.sample(&mut r));
    let mix = Array2::from_shape_fn((n, n), |(i, j)| if i == j { 1.0 + i as f64 / 10.0 } else { 0.1 * normal.sample(&mut r) });
    let x = z.dot(&mix) + 4.0;
    let (xc, _) = decomp::mean_center(x.view()).unwrap();
    let model = decomp::pca_fit(xc.view(), n).unwrap();
    let w = &model.basis;

    let gram = w.t().dot(w) - Array2::<f64>::eye(n);
    let ortho = gram.iter().fold(0.0f64, |a, v| a.max(v.abs()));

    let proj = decomp::pca_transform(&model, xc.view()).unwrap();
    let var = linalg::column_variances(proj.view(), 1.0);
    let var_err = var
        .iter()
        .zip(&model.eigenvalues)
        .map(|(v, l)| (v - l).abs() / l.abs().max(1e-300))
        .fold(0.0f64, f64::max);

    let back = proj.dot(&w.t());
    let recon = (&back - &xc).iter().fold(0.0f64, |a, v| a.max(v.abs()));

    outcome(
        ortho < 1e-8 && var_err < 1e-8 && recon < 1e-10,
        format!("|WtW - I|max {ortho:.1e} (< 1e-8), variance vs eigenvalue rel {var_err:.1e} (< 1e-8), reconstruction {recon:.1e} (< 1e-10)"),
    )
}

// ---------------------------------------------------------------- 4

fn mixer_sums() -> Outcome {
    let bank = ingest::default_signature_bank();
    let ds = ingest::synth_dataset(&bank, 3, 0.05, 3000.0, Mains::default(), 8).unwrap();
    let n = ds.n_classes();
    let cfg = MixConfig {
        n_min: 1,
        n_max: n,
        f_min: 1,
        f_max: 10,
        samples_per_k: 1000usize.div_ceil(n),
        rng_seed: 4,
        noise_std: 0.0,
    };
    let samples = mixer::generate_dataset(&ds, &cfg).unwrap();
    let mut bad_sum = 0;
    let mut bad_label = 0;
    for s in samples.iter().take(1000) {
        let mut acc = vec![0.0; s.current.len()];
        for &i in &s.constituents {
            for (a, x) in acc.iter_mut().zip(&ds.records[i].current) {
                *a += x;
            }
        }
        if acc != s.current {
            bad_sum += 1;
        }
        let mut union = vec![0u8; n];
        for &i in &s.constituents {
            union[ds.class_index(&ds.records[i].label).unwrap()] = 1;
        }
        if union != s.labels || s.k != union.iter().filter(|&&u| u == 1).count() {
            bad_label += 1;
        }
    }
    let checked = samples.len().min(1000);
    outcome(
        checked == 1000 && bad_sum == 0 && bad_label == 0,
        format!("{checked} aggregates, {bad_sum} inexact sums, {bad_label} label mismatches"),
    )
}

// ---------------------------------------------------------------- 5

fn oracle_f1(tp: u64, fp: u64, fn_: u64) -> f64 {
    if tp + fp + fn_ == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    }
}

fn metrics_oracle() -> Outcome {
    let mut r = rng::seeded(55);
    let mut worst = 0.0f64;
    let mut structural = 0;
    for _ in 0..500 {
        let rows = r.random_range(1..40);
        let cols = r.random_range(1..12);
        let density: f64 = r.random_range(0.05..0.95);
        let truth = Array2::from_shape_fn((rows, cols), |_| u8::from(r.random_bool(density)));
        let pred = Array2::from_shape_fn((rows, cols), |_| u8::from(r.random_bool(density)));
        let k: Vec<usize> = truth.outer_iter().map(|row| row.iter().map(|&v| v as usize).sum()).collect();
        let names: Vec<String> = (0..cols).map(|c| format!("c{c}")).collect();
        let report = MetricsReport::compute(pred.view(), truth.view(), &k, &names).unwrap();

        let mut per_sample = Vec::new();
        for i in 0..rows {
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for j in 0..cols {
                match (pred[[i, j]], truth[[i, j]]) {
                    (1, 1) => tp += 1,
                    (1, 0) => fp += 1,
                    (0, 1) => fn_ += 1,
                    _ => {}
                }
            }
            per_sample.push(oracle_f1(tp, fp, fn_));
        }
        let mean = per_sample.iter().sum::<f64>() / rows as f64;
        worst = worst.max((mean - report.f1_mean).abs());
        worst = worst.max((mean - eval::f1_mean(pred.view(), truth.view()).unwrap()).abs());

        for (j, row) in report.per_class.iter().enumerate() {
            let (mut tp, mut fp, mut fn_) = (0, 0, 0);
            for i in 0..rows {
                match (pred[[i, j]], truth[[i, j]]) {
                    (1, 1) => tp += 1,
                    (1, 0) => fp += 1,
                    (0, 1) => fn_ += 1,
                    _ => {}
                }
            }
            worst = worst.max((oracle_f1(tp, fp, fn_) - row.f1).abs());
            if (row.tp, row.fp, row.fn_) != (tp, fp, fn_) {
                structural += 1;
            }
        }

        let mut ks: Vec<usize> = k.clone();
        ks.sort_unstable();
        ks.dedup();
        if ks != report.per_k.iter().map(|g| g.k).collect::<Vec<_>>() {
            structural += 1;
        }
        for g in &report.per_k {
            let members: Vec<usize> = (0..rows).filter(|&i| k[i] == g.k).collect();
            let f = members.iter().map(|&i| per_sample[i]).sum::<f64>() / members.len() as f64;
            worst = worst.max((f - g.f1).abs());
            let mut c = [0u64; 4];
            for &i in &members {
                for j in 0..cols {
                    c[usize::from(pred[[i, j]]) * 2 + usize::from(truth[[i, j]])] += 1;
                }
            }
            if g.n_samples != members.len() || [g.tn, g.fn_, g.fp, g.tp] != c {
                structural += 1;
            }
        }
    }
    outcome(
        worst <= 1e-12 && structural == 0,
        format!("500 instances, max |F1 - oracle| {worst:.1e} (<= 1e-12), {structural} count mismatches"),
    )
}

// ---------------------------------------------------------------- 6 and 8

struct DeskRun {
    kind: FeatureKind,
    report: MetricsReport,
}

fn desk_config(root: &Path, source: SourceConfig, kind: FeatureKind) -> RunConfig {
    let mut cfg = RunConfig {
        seed: 1,
        source,
        features: kind,
        fusion: FusionParams {
            k_ica: Some(12),
            r: Some(6),
            ..FusionParams::default()
        },
        mix: MixSection {
            n_max: 8,
            samples_per_k: 500,
            ..MixSection::default()
        },
        out_dir: root.join(kind.name()),
        ..RunConfig::default()
    };
    cfg.train.epochs = 150;
    cfg
}

fn desk_source() -> SourceConfig {
    SourceConfig::Synthetic(SyntheticSource {
        n_classes: Some(8),
        ..SyntheticSource::default()
    })
}

fn desk_runs(root: &Path, source: SourceConfig) -> Result<Vec<DeskRun>, String> {
    let mut runs = Vec::new();
    for kind in [FeatureKind::Icpc, FeatureKind::Pca, FeatureKind::Ica] {
        let cfg = desk_config(root, source.clone(), kind);
        let report = pipeline::cmd_generate(&cfg)
            .and_then(|_| pipeline::cmd_train(&cfg, false))
            .and_then(|_| pipeline::cmd_eval(&cfg, &EvalInputs::default()))
            .map_err(|e| format!("{}: {e}", kind.name()))?;
        runs.push(DeskRun { kind, report });
    }
    Ok(runs)
}

fn ordering(runs: &[DeskRun]) -> Outcome {
    let f1 = |k: FeatureKind| runs.iter().find(|r| r.kind == k).unwrap().report.f1_mean;
    let (icpc, pca, ica) = (f1(FeatureKind::Icpc), f1(FeatureKind::Pca), f1(FeatureKind::Ica));
    outcome(
        icpc >= 0.90 && icpc > pca && icpc > ica,
        format!("test F1 icpc {icpc:.4} (>= 0.90), pca {pca:.4}, ica {ica:.4}"),
    )
}

fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &p in &idx[i..=j] {
            out[p] = avg;
        }
        i = j + 1;
    }
    out
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn per_k_trends(root: &Path, runs: &[DeskRun]) -> Outcome {
    let report = &runs.iter().find(|r| r.kind == FeatureKind::Icpc).unwrap().report;
    let ks: Vec<f64> = report.per_k.iter().map(|g| g.k as f64).collect();
    let tp: Vec<f64> = report.per_k.iter().map(|g| g.tp as f64).collect();
    let tn: Vec<f64> = report.per_k.iter().map(|g| g.tn as f64).collect();
    let (rho_tp, rho_tn) = (spearman(&ks, &tp), spearman(&ks, &tn));

    let cfg = desk_config(root, desk_source(), FeatureKind::Icpc);
    let preds = eval::PredictionSet::load(&cfg.eval_dir().join(eval::PREDICTIONS_FILE)).unwrap();
    let n_max = cfg.mix.n_max;
    let mut distinct: Vec<&Vec<u8>> = preds
        .truth
        .iter()
        .zip(&preds.k)
        .filter(|(_, &k)| k == n_max)
        .map(|(t, _)| t)
        .collect();
    let top = distinct.len();
    distinct.sort();
    distinct.dedup();
    outcome(
        rho_tp >= 0.8 && rho_tn <= -0.8 && top > 0 && distinct.len() == 1,
        format!(
            "spearman(k, TP) {rho_tp:.3} (>= 0.8), spearman(k, TN) {rho_tn:.3} (<= -0.8), k={n_max}: {top} samples, {} distinct label vectors",
            distinct.len()
        ),
    )
}

// ---------------------------------------------------------------- 7

fn param_budget() -> Outcome {
    let n = ResFfnConfig::default().param_count();
    let rel = (n as f64 - 65_000.0).abs() / 65_000.0;
    outcome(rel <= 0.10, format!("{n} parameters, {:.2}% from 65000 (<= 10%)", rel * 100.0))
}

// ---------------------------------------------------------------- 9

fn fryze_identities() -> Outcome {
    let mut r = rng::seeded(99);
    let (mut recon, mut energy) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let spp = r.random_range(16..200);
        let periods = r.random_range(1..12);
        let n = spp * periods;
        let amp: f64 = r.random_range(10.0..400.0);
        let harmonics: Vec<(f64, f64, f64)> = (1..=r.random_range(1..8))
            .map(|h| (h as f64, r.random_range(0.0..5.0), r.random_range(0.0..std::f64::consts::TAU)))
            .collect();
        let w = std::f64::consts::TAU / spp as f64;
        let v: Vec<f64> = (0..n).map(|t| amp * (w * t as f64).sin()).collect();
        let i: Vec<f64> = (0..n)
            .map(|t| harmonics.iter().map(|(h, a, p)| a * (h * w * t as f64 + p).sin()).sum())
            .collect();
        let c = fryze_decompose(&v, &i).unwrap();
        let scale = i.iter().fold(0.0f64, |a, x| a.max(x.abs())).max(1.0);
        for ((x, a), b) in i.iter().zip(&c.active).zip(&c.non_active) {
            recon = recon.max((x - (a + b)).abs() / scale);
        }
        let sq = |s: &[f64]| s.iter().map(|x| x * x).sum::<f64>();
        let total = sq(&i);
        energy = energy.max((total - sq(&c.active) - sq(&c.non_active)).abs() / total);
    }
    outcome(
        recon <= 1e-12 && energy <= 1e-6,
        format!("100 signals, reconstruction {recon:.1e} (<= 1e-12 relative to peak), energy split {energy:.1e} (<= 1e-6)"),
    )
}

// ---------------------------------------------------------------- 10

const SMALL: &str = r#"{
  "seed": 21,
  "source": {"kind": "synthetic", "n_classes": 4, "records_per_class": 4},
  "mix": {"n_max": 4, "samples_per_k": 60},
  "train": {"epochs": 3, "batch_size": 32}
}"#;

fn cli_run(cfg: &Path, out: &Path) -> Result<(), String> {
    for cmd in ["generate", "train", "eval"] {
        let o = Command::new(env!("CARGO_BIN_EXE_nilm-fusion"))
            .args([cmd, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .env_remove("NILM_FUSION_THREADS")
            .output()
            .map_err(|e| e.to_string())?;
        if !o.status.success() {
            return Err(format!("{cmd}: {}", String::from_utf8_lossy(&o.stderr).trim()));
        }
    }
    Ok(())
}

fn determinism(root: &Path) -> Outcome {
    std::fs::create_dir_all(root).unwrap();
    let cfg = root.join("small.json");
    std::fs::write(&cfg, SMALL).unwrap();
    let (a, b) = (root.join("a"), root.join("b"));
    if let Err(e) = cli_run(&cfg, &a).and_then(|_| cli_run(&cfg, &b)) {
        return outcome(false, e);
    }
    let mut differing = Vec::new();
    let mut files = 0;
    for sub in ["dataset", "model", "eval"] {
        let (x, y) = (common::dir_contents(&a.join(sub)), common::dir_contents(&b.join(sub)));
        files += x.len();
        let names = |d: &[(String, Vec<u8>)]| d.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>();
        if names(&x) != names(&y) {
            differing.push(format!("{sub}/ file lists"));
            continue;
        }
        for ((n, p), (_, q)) in x.iter().zip(&y) {
            if p != q {
                differing.push(format!("{sub}/{n}"));
            }
        }
    }
    outcome(
        differing.is_empty() && files > 0,
        format!("{files} artifact files compared, differing: {}", if differing.is_empty() { "none".into() } else { differing.join(", ") }),
    )
}

// ----------------------------------------------------------------

fn report(results: &mut Vec<(String, bool)>, id: &str, o: Outcome) {
    println!("criterion {id}: {} - {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
    results.push((id.to_string(), o.pass));
}

fn main() {
    let tmp = tempfile::tempdir().unwrap();
    let root: PathBuf = tmp.path().to_path_buf();
    let mut results = Vec::new();

    report(&mut results, "1", gradients());
    report(&mut results, "2", ica_recovery());
    report(&mut results, "3", pca_identities());
    report(&mut results, "4", mixer_sums());
    report(&mut results, "5", metrics_oracle());

    let desk_root = root.join("desk");
    let desk = desk_runs(&desk_root, desk_source());
    match &desk {
        Ok(runs) => report(&mut results, "6", ordering(runs)),
        Err(e) => report(&mut results, "6", outcome(false, e.clone())),
    }
    match std::env::var_os("NILM_PLAID_DIR") {
        Some(dir) => {
            let source = SourceConfig::Plaid(PlaidSource {
                dir: PathBuf::from(dir),
                classes: Default::default(),
            });
            match desk_runs(&root.join("plaid"), source) {
                Ok(runs) => report(&mut results, "6 (plaid)", ordering(&runs)),
                Err(e) => report(&mut results, "6 (plaid)", outcome(false, e)),
            }
        }
        None => println!("criterion 6 (plaid): SKIP - set NILM_PLAID_DIR to a PLAID-style directory"),
    }

    report(&mut results, "7", param_budget());
    match &desk {
        Ok(runs) => report(&mut results, "8", per_k_trends(&desk_root, runs)),
        Err(e) => report(&mut results, "8", outcome(false, format!("desk run unavailable: {e}"))),
    }
    report(&mut results, "9", fryze_identities());
    report(&mut results, "10", determinism(&root.join("det")));

    let failed: Vec<&str> = results.iter().filter(|(_, p)| !p).map(|(id, _)| id.as_str()).collect();
    let passed = results.len() - failed.len();
    println!("acceptance: {passed}/{} passed", results.len());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
