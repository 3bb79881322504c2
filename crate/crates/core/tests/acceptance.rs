//! Acceptance checks. Each criterion prints one PASS/FAIL line; the process
//! exits nonzero if any fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use relative_uncertainty::conformal::{conformal_calibrate, conformal_predict_set, conformal_reject_score};
use relative_uncertainty::io::{run_config, DataSpec, ExperimentConfig};
use relative_uncertainty::lab::classifier::{train_classifier, Architecture, ClassifierModel, TrainConfig};
use relative_uncertainty::lab::gradient::{input_gradient, model_fd_gradient, perturb_input, Functional, ScoreKind};
use relative_uncertainty::lab::synth::{synth_generate, SynthConfig};
use relative_uncertainty::metrics::calibration::{calibrate_temperature, ece, temperature_grid};
use relative_uncertainty::metrics::report::SplitInfo;
use relative_uncertainty::metrics::risk::risk_coverage;
use relative_uncertainty::metrics::roc::{auroc, auroc_trapezoid, fpr_at_tpr, roc_curve, ScoredPopulation};
use relative_uncertainty::observer::oracle::{fit_d_matrix_oracle, random_feasible};
use relative_uncertainty::observer::{fit_d_matrix, objective_value, GroupedProbs};
use relative_uncertainty::scores::{bilinear_score, gini_score, hamming_matrix, rel_u_score};
use relative_uncertainty::tune::{
    evaluate_detector, fit_detector, make_split, AblationAxis, AblationSpec, DetectorOptions, ExperimentKind,
    ExperimentResult, GridSpec, Population, RunStatus, SplitSpec,
};
use relative_uncertainty::{
    softmax_with_temperature, DetectorConfig, LogitVector, Method, ProbVector, RelUMatrix,
};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn softmax(z: &[f64]) -> ProbVector {
    softmax_with_temperature(&LogitVector::new(z.to_vec()).unwrap(), 1.0).unwrap()
}

fn random_probs(rng: &mut ChaCha8Rng, c: usize, scale: f64) -> ProbVector {
    let z: Vec<f64> = (0..c).map(|_| rng.random::<f64>() * scale).collect();
    softmax(&z)
}

// 1. Closed-form observer matrix against projected gradient descent and
// random feasible points.
fn observer_optimality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let lambdas = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut worst_gap = 0.0f64;
    let mut random_checked = 0usize;
    for inst in 0..100 {
        let c = rng.random_range(2..=10);
        let n_pos = rng.random_range(10..=1000);
        let n_neg = rng.random_range(10..=1000);
        let scale = rng.random_range(0.5..8.0);
        let pos: Vec<ProbVector> = (0..n_pos).map(|_| random_probs(&mut rng, c, scale)).collect();
        let neg: Vec<ProbVector> = (0..n_neg).map(|_| random_probs(&mut rng, c, scale)).collect();
        let groups = GroupedProbs::new(pos, neg).map_err(|e| e.to_string())?;
        let lambda = lambdas[inst % lambdas.len()];

        let fitted = fit_d_matrix(&groups, lambda, 1.0).map_err(|e| e.to_string())?;
        let closed = objective_value(&fitted.solution(), &groups, lambda).map_err(|e| e.to_string())?;
        let oracle = fit_d_matrix_oracle(&groups, lambda, 1.0, 20_000, None, inst as u64).map_err(|e| e.to_string())?;
        let gap = (oracle.objective - closed).abs();
        worst_gap = worst_gap.max(gap);
        ensure(gap <= 1e-6, || {
            format!("instance {inst}: oracle {} vs closed form {closed} (C={c}, lambda={lambda})", oracle.objective)
        })?;

        for k in 0..10 {
            let d = random_feasible(c, 1.0, 10_000 + 10 * inst as u64 + k);
            let v = objective_value(&d, &groups, lambda).map_err(|e| e.to_string())?;
            ensure(v >= closed - 1e-12, || format!("instance {inst}: random point {v} beats {closed}"))?;
            random_checked += 1;
        }
    }
    Ok(format!("100 instances, max |oracle - closed| = {worst_gap:.2e}, {random_checked} random points"))
}

fn small_dataset(seed: u64) -> (relative_uncertainty::EvalDataset, ClassifierModel) {
    let cfg = SynthConfig::new(4, 4, 400, 10, 600, seed).with_confusion(0, 1, 2.0);
    let s = synth_generate(&cfg).unwrap();
    let (model, _) = train_classifier(&s.train, Architecture::LinearSoftmax, &TrainConfig::default()).unwrap();
    (model.infer(&s.test, 0, "synth").unwrap(), model)
}

// 2. The Hamming observer matrix gives the Gini score, and fallback Rel-U
// reports the same metrics as Doctor.
fn hamming_equals_gini() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let c = rng.random_range(2..=20);
        let scale = rng.random_range(0.1..20.0);
        let p = random_probs(&mut rng, c, scale);
        let h = bilinear_score(&p, &hamming_matrix(c)).map_err(|e| e.to_string())?;
        let fallback = RelUMatrix::hamming_fallback(c, 1.0, 0.0).map_err(|e| e.to_string())?;
        let r = rel_u_score(&p, &fallback).map_err(|e| e.to_string())?;
        let g = gini_score(&p);
        worst = worst.max((h - g).abs()).max((r - g).abs());
    }
    ensure(worst <= 1e-12, || format!("max |pDp - gini| = {worst:.2e}"))?;

    let (ds, model) = small_dataset(7);
    let pop = Population::matched(ds);
    let split = make_split(&pop.positive, 0.5, 3, true).map_err(|e| e.to_string())?;
    let tuning = pop.subset(&split.tuning);
    let evaluation = pop.subset(&split.evaluation);
    let info = SplitInfo {
        tuning_size: split.tuning.len(),
        evaluation_size: split.evaluation.len(),
        tuning_fraction: Some(0.5),
        stratified: Some(true),
    };
    let opts = DetectorOptions::default();
    let mut cells = 0;
    for (t, eps) in [(1.0, 0.0), (2.0, 0.0), (1.0, 1e-3), (0.5, 2e-3)] {
        let doctor = DetectorConfig::new(Method::GiniDoctor, t, eps, None).map_err(|e| e.to_string())?;
        let relu = DetectorConfig::new(Method::RelU, t, eps, Some(0.0)).map_err(|e| e.to_string())?;
        let fd = fit_detector(&doctor, &tuning, &opts).map_err(|e| e.to_string())?;
        let fr = fit_detector(&relu, &tuning, &opts).map_err(|e| e.to_string())?;
        let a = evaluate_detector(&fd, &evaluation, Some(&model), &opts, info.clone(), Some(3)).map_err(|e| e.to_string())?;
        let b = evaluate_detector(&fr, &evaluation, Some(&model), &opts, info.clone(), Some(3)).map_err(|e| e.to_string())?;
        ensure(a.metrics == b.metrics && a.n_positive == b.n_positive && a.n_negative == b.n_negative, || {
            format!("T={t} eps={eps}: fallback Rel-U metrics differ from Doctor")
        })?;
        cells += 1;
    }
    Ok(format!("10000 vectors, max gap {worst:.1e}; {cells} (T, eps) cells report identically"))
}

/// Independent reference: try every candidate threshold and keep the
/// smallest one whose TPR reaches the level.
fn sweep_fpr_at_tpr(pos: &[f64], neg: &[f64], level: f64) -> f64 {
    let mut thresholds: Vec<f64> = pos.iter().chain(neg).copied().collect();
    thresholds.push(f64::NEG_INFINITY);
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    for t in thresholds {
        let tp = pos.iter().filter(|&&s| s <= t).count();
        if tp as f64 / pos.len() as f64 >= level {
            return neg.iter().filter(|&&s| s <= t).count() as f64 / neg.len() as f64;
        }
    }
    1.0
}

fn pairwise_auroc(pos: &[f64], neg: &[f64]) -> f64 {
    let mut twice = 0u64;
    for p in pos {
        for n in neg {
            if n > p {
                twice += 2;
            } else if n == p {
                twice += 1;
            }
        }
    }
    twice as f64 / (2.0 * pos.len() as f64 * neg.len() as f64)
}

// 3. Threshold metrics against brute force, AUROC two ways, risk-coverage
// hand examples.
fn threshold_metrics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for inst in 0..1000 {
        let n_pos = rng.random_range(1..=250);
        let n_neg = rng.random_range(1..=250);
        // Coarse rounding forces ties.
        let digits = [1.0, 10.0, 100.0, 1e6][inst % 4];
        let mut draw = |shift: f64| ((rng.random::<f64>() + shift) * digits).round() / digits;
        let pos: Vec<f64> = (0..n_pos).map(|_| draw(0.0)).collect();
        let neg: Vec<f64> = (0..n_neg).map(|_| draw(0.3)).collect();
        let pop = ScoredPopulation::new(pos.clone(), neg.clone()).map_err(|e| e.to_string())?;
        for level in [0.5, 0.9, 0.95, 0.99, 1.0, rng.random_range(0.01..1.0)] {
            let got = fpr_at_tpr(&pop, level).map_err(|e| e.to_string())?;
            let want = sweep_fpr_at_tpr(&pos, &neg, level);
            ensure(got == want, || format!("instance {inst}, level {level}: {got} vs sweep {want}"))?;
        }
        let a = auroc(&pop);
        let trap = auroc_trapezoid(&roc_curve(&pop));
        let brute = pairwise_auroc(&pos, &neg);
        ensure((a - trap).abs() <= 1e-12 && (a - brute).abs() <= 1e-12, || {
            format!("instance {inst}: auroc {a}, trapezoid {trap}, pairwise {brute}")
        })?;
    }

    let rc = risk_coverage(&[0.1, 0.2, 0.3, 0.4], &[true, false, true, false]).map_err(|e| e.to_string())?;
    let pts: Vec<(f64, f64)> = rc.points.iter().map(|p| (p.coverage, p.risk)).collect();
    ensure(pts == vec![(0.25, 0.0), (0.5, 0.5), (0.75, 1.0 / 3.0), (1.0, 0.5)], || format!("curve {pts:?}"))?;
    let area = 0.25 * 0.5 / 2.0 + 0.25 * (0.5 + 1.0 / 3.0) / 2.0 + 0.25 * (1.0 / 3.0 + 0.5) / 2.0;
    ensure((rc.aurc - area).abs() <= 1e-15, || format!("aurc {} vs {area}", rc.aurc))?;
    let flat = risk_coverage(&[0.7; 5], &[true, false, true, true, false]).map_err(|e| e.to_string())?;
    ensure(flat.points.len() == 1 && flat.aurc == 0.4, || format!("constant scorer aurc {}", flat.aurc))?;
    let perfect = risk_coverage(&[0.1, 0.2, 0.8, 0.9], &[true, true, false, false]).map_err(|e| e.to_string())?;
    let area = 0.25 * (0.0 + 1.0 / 3.0) / 2.0 + 0.25 * (1.0 / 3.0 + 0.5) / 2.0;
    ensure((perfect.aurc - area).abs() <= 1e-15, || format!("ordered scorer aurc {}", perfect.aurc))?;
    Ok("1000 instances match the sweep exactly; AUROC three ways within 1e-12".into())
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

// 4. Input gradients of every log-score against central differences, and
// the zero-magnitude step is the identity.
fn input_gradients() -> Outcome {
    let (c, dim) = (5, 6);
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut d = Array2::zeros((c, c));
    for i in 0..c {
        for j in (i + 1)..c {
            let v: f64 = rng.random();
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    let kinds = [
        ("msp", ScoreKind::MspConfidence),
        ("gini", ScoreKind::Gini),
        ("entropy", ScoreKind::Entropy),
        ("rel-u", ScoreKind::Bilinear(d)),
    ];
    let normal = Normal::new(0.0, 1.5).unwrap();
    let mut worst = 0.0f64;
    let mut total = 0;
    for (arch_name, arch) in [("linear", Architecture::LinearSoftmax), ("mlp", Architecture::mlp(16))] {
        let data = synth_generate(&SynthConfig::new(c, dim, 500, 10, 10, 17)).map_err(|e| e.to_string())?;
        let cfg = TrainConfig { epochs: 50, ..TrainConfig::default() };
        let (model, _) = train_classifier(&data.train, arch, &cfg).map_err(|e| e.to_string())?;
        for (name, kind) in &kinds {
            let f = Functional::log_score(kind.clone(), 1.5).map_err(|e| e.to_string())?;
            let mut checked = 0;
            let mut attempts = 0;
            while checked < 100 {
                attempts += 1;
                ensure(attempts < 10_000, || format!("{arch_name}/{name}: too few usable points"))?;
                let x: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
                let trace = model.trace(&x).map_err(|e| e.to_string())?;
                // Stay away from ReLU kinks and argmax switches where the
                // functional is not differentiable.
                if trace.hidden_pre.iter().any(|a| a.abs() < 1e-3) {
                    continue;
                }
                let mut z = trace.logits.to_vec();
                z.sort_by(|a, b| b.total_cmp(a));
                if z[0] - z[1] < 1e-3 {
                    continue;
                }
                let ga = input_gradient(&model, &x, &f).map_err(|e| e.to_string())?;
                let gf = model_fd_gradient(&model, &x, &f).map_err(|e| e.to_string())?;
                let e = rel_err(&ga, &gf);
                worst = worst.max(e);
                ensure(e <= 1e-4, || format!("{arch_name}/{name}: relative error {e:.2e}"))?;

                let same = perturb_input(&model, &x, 0.0, &f).map_err(|e| e.to_string())?;
                ensure(same.iter().zip(&x).all(|(a, b)| a.to_bits() == b.to_bits()), || {
                    format!("{arch_name}/{name}: zero step moved the input")
                })?;
                checked += 1;
                total += 1;
            }
        }
    }
    Ok(format!("{total} points, max relative error {worst:.2e}; zero step bit-exact"))
}

fn benchmark_config(generator_seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::asymmetric_benchmark(generator_seed);
    cfg.protocol.methods = vec![Method::GiniDoctor, Method::RelU];
    cfg
}

fn mean_fpr95(result: &ExperimentResult, method: Method) -> Option<f64> {
    result.aggregates.iter().find(|a| a.method == method).and_then(|a| a.fpr95_mean)
}

fn all_ok(result: &ExperimentResult) -> Result<(), String> {
    match result.records.iter().find(|r| r.status != RunStatus::Ok) {
        Some(r) => Err(format!("seed {} {} failed: {:?}", r.seed, r.method, r.error)),
        None => Ok(()),
    }
}

// 5. On the asymmetric benchmark Rel-U beats Doctor and its matrix singles
// out the dominant confusion pair.
fn benchmark(results: &mut Vec<ExperimentResult>) -> Outcome {
    let result = run_config(&benchmark_config(0), Path::new(".")).map_err(|e| e.to_string())?;
    all_ok(&result)?;
    let doctor = mean_fpr95(&result, Method::GiniDoctor).ok_or("no Doctor aggregate")?;
    let relu = mean_fpr95(&result, Method::RelU).ok_or("no Rel-U aggregate")?;
    ensure(relu <= doctor, || format!("Rel-U FPR95 {relu:.4} > Doctor {doctor:.4}"))?;

    let confusion = result.confusion.as_ref().ok_or("no confusion matrix")?;
    let mut dominant = (0, 1, 0usize);
    for (i, row) in confusion.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            if i < j {
                let both = v + confusion[j][i];
                if both > dominant.2 {
                    dominant = (i, j, both);
                }
            }
        }
    }
    let mut hits = 0;
    let mut seeds = 0;
    for r in result.records.iter().filter(|r| r.method == Method::RelU) {
        seeds += 1;
        let obs = r.observer.as_ref().ok_or("Rel-U record without observer")?;
        let entries = obs.entries.as_ref().ok_or("observer without entries")?;
        let mut best = (0, 1, f64::NEG_INFINITY);
        for (i, row) in entries.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if i < j && v > best.2 {
                    best = (i, j, v);
                }
            }
        }
        if (best.0, best.1) == (dominant.0, dominant.1) {
            hits += 1;
        }
    }
    ensure(seeds == 10 && hits >= 8, || format!("largest D entry on the dominant pair for {hits}/{seeds} seeds"))?;
    results.push(result);
    Ok(format!(
        "FPR95 Rel-U {relu:.4} vs Doctor {doctor:.4}; pair ({}, {}) on top for {hits}/10 seeds",
        dominant.0, dominant.1
    ))
}

// 6. More tuning data does not hurt.
fn split_size_ablation(results: &mut Vec<ExperimentResult>) -> Outcome {
    let mut cfg = benchmark_config(0);
    cfg.protocol.kind = ExperimentKind::Ablation;
    cfg.protocol.ablation = Some(AblationSpec::new(AblationAxis::SplitSize, vec![0.1, 0.5]));
    let result = run_config(&cfg, Path::new(".")).map_err(|e| e.to_string())?;
    all_ok(&result)?;
    let at = |v: f64| {
        result
            .aggregates
            .iter()
            .find(|a| a.ablation_value == Some(v))
            .and_then(|a| a.fpr95_mean)
            .ok_or(format!("no aggregate for fraction {v}"))
    };
    let (small, large) = (at(0.1)?, at(0.5)?);
    ensure(large <= small, || format!("FPR95 at 50% {large:.4} > at 10% {small:.4}"))?;
    results.push(result);
    Ok(format!("FPR95 {small:.4} at 10% tuning, {large:.4} at 50%"))
}

fn calibrated_sample(n: usize, c: usize, sd: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sd).unwrap();
    let mut logits = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let z: Vec<f64> = (0..c).map(|_| normal.sample(&mut rng)).collect();
        let p = softmax(&z);
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut y = c - 1;
        for (k, v) in p.as_slice().iter().enumerate() {
            acc += v;
            if u < acc {
                y = k;
                break;
            }
        }
        logits.push(z);
        labels.push(y);
    }
    (logits, labels)
}

// 7. ECE on hand examples, and temperature scaling undoes a known logit
// scale.
fn calibration() -> Outcome {
    let pv = |v: &[f64]| ProbVector::new(v.to_vec()).unwrap();
    let e = ece(&[pv(&[0.9, 0.1]), pv(&[0.6, 0.4])], &[0, 1], 15).map_err(|e| e.to_string())?;
    // Two singleton bins: |1 - 0.9| and |0 - 0.6|, each weighted 1/2.
    ensure((e - 0.35).abs() <= 1e-12, || format!("two-bin example {e}"))?;
    let e = ece(&vec![pv(&[0.75, 0.25]); 4], &[0, 0, 0, 1], 15).map_err(|e| e.to_string())?;
    ensure(e.abs() <= 1e-12, || format!("matched-accuracy example {e}"))?;
    let e = ece(&[pv(&[1.0, 0.0]), pv(&[0.0, 1.0])], &[0, 0], 15).map_err(|e| e.to_string())?;
    ensure((e - 0.5).abs() <= 1e-12, || format!("confident-and-wrong example {e}"))?;

    let (z, y) = calibrated_sample(40_000, 5, 2.0, 707);
    let scaled: Vec<LogitVector> = z
        .iter()
        .map(|r| LogitVector::new(r.iter().map(|v| 2.0 * v).collect()).unwrap())
        .collect();
    let fit = calibrate_temperature(&scaled, &y).map_err(|e| e.to_string())?;
    let g = temperature_grid();
    let step = (g[1] / g[0]).ln();
    let off = (fit.temperature.ln() - 2f64.ln()).abs();
    ensure(off <= step, || format!("T* = {} is {off:.3} log-units from 2 (grid step {step:.3})", fit.temperature))?;
    Ok(format!("hand examples exact; T* = {:.3} for logits scaled by 2", fit.temperature))
}

// 8. Conformal sets cover at the nominal rate and the reject score is zero
// exactly on singleton sets.
fn conformal() -> Outcome {
    let mut coverages = Vec::new();
    let mut singletons = 0usize;
    for rep in 0..100u64 {
        let (zc, yc) = calibrated_sample(1000, 100, 1.5, 8000 + 2 * rep);
        let (zt, yt) = calibrated_sample(1000, 100, 1.5, 8001 + 2 * rep);
        let pc: Vec<ProbVector> = zc.iter().map(|z| softmax(z)).collect();
        let cal = conformal_calibrate(&pc, &yc, 0.1).map_err(|e| e.to_string())?;
        let mut covered = 0;
        for (z, &y) in zt.iter().zip(&yt) {
            let p = softmax(z);
            let set = conformal_predict_set(&p, &cal);
            if set.contains(&y) {
                covered += 1;
            }
            let reject = conformal_reject_score(&p, &cal);
            ensure((set.len() == 1) == (reject == 0.0), || {
                format!("set size {} with reject score {reject}", set.len())
            })?;
            singletons += usize::from(set.len() == 1);
        }
        coverages.push(covered as f64 / zt.len() as f64);
    }
    // Sharp predictions produce many singleton sets to exercise the
    // equivalence.
    let (zc, yc) = calibrated_sample(2000, 10, 6.0, 8800);
    let (zt, _) = calibrated_sample(2000, 10, 6.0, 8801);
    let pc: Vec<ProbVector> = zc.iter().map(|z| softmax(z)).collect();
    let cal = conformal_calibrate(&pc, &yc, 0.1).map_err(|e| e.to_string())?;
    for z in &zt {
        let p = softmax(z);
        let set = conformal_predict_set(&p, &cal);
        let reject = conformal_reject_score(&p, &cal);
        ensure((set.len() == 1) == (reject == 0.0), || {
            format!("set size {} with reject score {reject}", set.len())
        })?;
        singletons += usize::from(set.len() == 1);
    }
    let mean = coverages.iter().sum::<f64>() / coverages.len() as f64;
    ensure((0.88..=0.93).contains(&mean), || format!("mean coverage {mean:.4}"))?;
    Ok(format!("mean coverage {mean:.4} over 100 calibrations; {singletons} singleton sets score 0"))
}

fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::asymmetric_benchmark(5);
    if let DataSpec::Synth { synth, train, .. } = &mut cfg.data {
        synth.n_train = 600;
        synth.n_test = 1200;
        *train = Some(TrainConfig::default());
    }
    cfg.protocol.methods = Method::ALL.to_vec();
    cfg.protocol.grid = GridSpec {
        temperatures: vec![1.0, 2.0],
        epsilons: vec![0.0, 1e-3],
        lambdas: vec![0.25, 0.5],
    };
    cfg.protocol.split = SplitSpec::new(0.5, vec![0, 1, 2, 3], true).unwrap();
    cfg
}

fn read_dir_files(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| e.to_string())? {
        let entry = entry.map_err(|e| e.to_string())?;
        let name = entry.file_name().to_string_lossy().into_owned();
        out.push((name, fs::read(entry.path()).map_err(|e| e.to_string())?));
    }
    out.sort();
    Ok(out)
}

// 9. Reruns are byte-identical and no run evaluates on samples it was
// tuned on.
fn reproducibility(results: &[ExperimentResult]) -> Outcome {
    let cfg = small_config();
    let a = run_config(&cfg, Path::new(".")).map_err(|e| e.to_string())?;
    let b = run_config(&cfg, Path::new(".")).map_err(|e| e.to_string())?;
    all_ok(&a)?;
    let ja = serde_json::to_string(&a).map_err(|e| e.to_string())?;
    let jb = serde_json::to_string(&b).map_err(|e| e.to_string())?;
    ensure(ja == jb, || "library reruns differ".into())?;

    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg_path = tmp.path().join("config.json");
    fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["first", "second"] {
        let dir = tmp.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_relu"))
            .arg("--config")
            .arg(&cfg_path)
            .arg("--out-dir")
            .arg(&dir)
            .args(["experiment", "--plots"])
            .output()
            .map_err(|e| e.to_string())?;
        ensure(status.status.success(), || {
            format!("CLI run failed: {}", String::from_utf8_lossy(&status.stderr))
        })?;
        outputs.push(read_dir_files(&dir)?);
    }
    let names: Vec<&str> = outputs[0].iter().map(|(n, _)| n.as_str()).collect();
    ensure(outputs[0] == outputs[1] && names.len() >= 3, || format!("CLI outputs differ: {names:?}"))?;

    // Evaluation refuses samples seen during fitting, so a clean record is
    // also a disjointness check; the sizes must add up on top of that.
    let mut reports_checked = 0;
    for result in results.iter().chain([&a]) {
        for r in &result.records {
            let Some(report) = &r.report else { continue };
            let s = &report.split;
            ensure(s.tuning_size + s.evaluation_size == result.n_samples, || {
                format!("seed {} {}: split sizes do not add up", r.seed, r.method)
            })?;
            ensure(report.n_positive + report.n_negative == s.evaluation_size, || {
                format!("seed {} {}: evaluation on more than the held-out half", r.seed, r.method)
            })?;
        }
        all_ok(result)?;
        reports_checked += result.records.len();
    }
    Ok(format!(
        "library and CLI reruns identical ({} files); {reports_checked} runs evaluated only on held-out samples",
        names.len()
    ))
}

fn main() {
    let mut failures = 0;
    let mut results = Vec::new();
    let mut run = |id: u32, name: &str, budget: Duration, f: &mut dyn FnMut(&mut Vec<ExperimentResult>) -> Outcome| {
        let start = Instant::now();
        let outcome = f(&mut results);
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(msg) if elapsed > budget => Err(format!("{msg}; took {elapsed:.1?}, budget {budget:?}")),
            other => other,
        };
        match outcome {
            Ok(msg) => println!("PASS [{id}] {name}: {msg} ({elapsed:.1?})"),
            Err(msg) => {
                failures += 1;
                println!("FAIL [{id}] {name}: {msg} ({elapsed:.1?})");
            }
        }
    };
    let minute = Duration::from_secs(60);
    run(1, "observer matrix optimality", minute, &mut |_| observer_optimality());
    run(2, "hamming fallback equals gini", Duration::from_secs(5), &mut |_| hamming_equals_gini());
    run(3, "threshold metrics", minute, &mut |_| threshold_metrics());
    run(4, "input gradients", minute, &mut |_| input_gradients());
    run(5, "asymmetric benchmark", 5 * minute, &mut benchmark);
    run(6, "split-size ablation", 5 * minute, &mut split_size_ablation);
    run(7, "calibration", minute, &mut |_| calibration());
    run(8, "conformal coverage", minute, &mut |_| conformal());
    run(9, "reproducibility and split hygiene", 5 * minute, &mut |r| reproducibility(r));
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
