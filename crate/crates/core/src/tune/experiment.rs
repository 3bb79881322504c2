//! Multi-seed matched, mismatch and ablation runs.

use std::thread;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{DetectorConfig, EvalDataset, Method};
use crate::error::{Error, Result};
use crate::lab::classifier::ClassifierModel;
use crate::metrics::confusion_matrix;
use crate::metrics::report::{MetricsReport, SplitInfo};
use crate::observer::RelUMatrixFile;

use super::grid::{grid_search, GridSpec};
use super::pipeline::{evaluate_detector, fit_detector, Artifact, DetectorOptions, FittedDetector, Population};
use super::split::{make_split, make_splits, Split, SplitSpec};

/// Mixed into a split seed to draw the secondary subsample of a mismatch run.
const SECONDARY_STREAM: u64 = 0x7365_636f_6e64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Matched,
    Mismatch,
    Ablation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    #[serde(alias = "T")]
    Temperature,
    #[serde(alias = "eps")]
    Epsilon,
    Lambda,
    SplitSize,
}

/// One hyperparameter swept while the others stay pinned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationSpec {
    pub axis: AblationAxis,
    pub values: Vec<f64>,
    #[serde(default = "default_ablation_method")]
    pub method: Method,
    #[serde(default = "default_one")]
    pub temperature: f64,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_half")]
    pub lambda: f64,
    #[serde(default = "default_half")]
    pub tuning_fraction: f64,
}

fn default_ablation_method() -> Method {
    Method::RelU
}

fn default_one() -> f64 {
    1.0
}

fn default_half() -> f64 {
    0.5
}

impl AblationSpec {
    /// Pinned at `T = 1`, `ε = 0`, `λ = 0.5` and a half/half split.
    pub fn new(axis: AblationAxis, values: Vec<f64>) -> Self {
        Self {
            axis,
            values,
            method: default_ablation_method(),
            temperature: 1.0,
            epsilon: 0.0,
            lambda: 0.5,
            tuning_fraction: 0.5,
        }
    }

    /// Configuration and tuning fraction for one axis value.
    pub fn point(&self, value: f64) -> Result<(DetectorConfig, f64)> {
        let (mut t, mut e, mut l, mut f) = (self.temperature, self.epsilon, self.lambda, self.tuning_fraction);
        match self.axis {
            AblationAxis::Temperature => t = value,
            AblationAxis::Epsilon => e = value,
            AblationAxis::Lambda => l = value,
            AblationAxis::SplitSize => f = value,
        }
        let lambda = self.method.uses_lambda().then_some(l);
        let config = if self.method.uses_temperature() {
            DetectorConfig::new(self.method, t, e, lambda)?
        } else {
            DetectorConfig::identity(self.method)
        };
        Ok((config, f))
    }
}

/// Everything about a run except the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Protocol {
    pub kind: ExperimentKind,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub split: SplitSpec,
    /// Tuning fractions to sweep; defaults to the split's own fraction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fractions: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation: Option<AblationSpec>,
    #[serde(default)]
    pub detector: DetectorOptions,
    /// Threads used across seeds; results do not depend on it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Msp, Method::Odin, Method::GiniDoctor, Method::RelU]
}

impl Protocol {
    pub fn new(kind: ExperimentKind) -> Self {
        Self {
            kind,
            methods: default_methods(),
            grid: GridSpec::default(),
            split: SplitSpec::default(),
            fractions: None,
            ablation: None,
            detector: DetectorOptions::default(),
            workers: None,
        }
    }

    pub fn fractions(&self) -> Vec<f64> {
        self.fractions.clone().unwrap_or_else(|| vec![self.split.tuning_fraction])
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() && self.kind != ExperimentKind::Ablation {
            return Err(Error::Parameter("experiment lists no methods".into()));
        }
        self.grid.validate()?;
        self.split.validate()?;
        for &f in &self.fractions() {
            SplitSpec::new(f, self.split.seeds.clone(), self.split.stratify)?;
        }
        if self.kind == ExperimentKind::Ablation {
            let a = self
                .ablation
                .as_ref()
                .ok_or_else(|| Error::Parameter("ablation run needs an ablation section".into()))?;
            if a.values.is_empty() {
                return Err(Error::Parameter("ablation needs at least one value".into()));
            }
            for &v in &a.values {
                let (_, f) = a.point(v)?;
                SplitSpec::new(f, self.split.seeds.clone(), self.split.stratify)?;
            }
        }
        Ok(())
    }
}

/// Outcome of one (fraction, seed, method[, ablation value]) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub tuning_fraction: f64,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation_value: Option<f64>,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Selection metric of the chosen configuration on the tuning split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuning_fpr95: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<MetricsReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer: Option<RelUMatrixFile>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

/// Mean and sample standard deviation over the seeds that succeeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: Method,
    pub tuning_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ablation_value: Option<f64>,
    pub n_seeds: usize,
    pub n_effective: usize,
    pub fpr95_mean: Option<f64>,
    pub fpr95_std: Option<f64>,
    pub auroc_mean: Option<f64>,
    pub auroc_std: Option<f64>,
    pub aurc_mean: Option<f64>,
    pub aurc_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub protocol: Protocol,
    pub source: String,
    pub n_samples: usize,
    /// Confusion matrix of the whole matched dataset (rows are true labels).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<Vec<Vec<usize>>>,
    pub records: Vec<RunRecord>,
    pub aggregates: Vec<AggregateRow>,
}

/// `(mean, sample std)`; the spread of a single value is 0.
pub fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Some((mean, var.sqrt()))
}

fn aggregate(records: &[RunRecord]) -> Vec<AggregateRow> {
    let mut keys: Vec<(Method, f64, Option<f64>)> = Vec::new();
    for r in records {
        let key = (r.method, r.tuning_fraction, r.ablation_value);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(method, fraction, value)| {
            let group: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.method == method && r.tuning_fraction == fraction && r.ablation_value == value)
                .collect();
            let reports: Vec<&MetricsReport> = group.iter().filter_map(|r| r.report.as_ref()).collect();
            let stat = |f: &dyn Fn(&MetricsReport) -> f64| {
                let v: Vec<f64> = reports.iter().map(|r| f(r)).collect();
                mean_std(&v)
            };
            let fpr = stat(&|r| r.metrics.fpr95());
            let auroc = stat(&|r| r.metrics.auroc);
            let aurc = stat(&|r| r.metrics.aurc);
            AggregateRow {
                method,
                tuning_fraction: fraction,
                ablation_value: value,
                n_seeds: group.len(),
                n_effective: reports.len(),
                fpr95_mean: fpr.map(|s| s.0),
                fpr95_std: fpr.map(|s| s.1),
                auroc_mean: auroc.map(|s| s.0),
                auroc_std: auroc.map(|s| s.1),
                aurc_mean: aurc.map(|s| s.0),
                aurc_std: aurc.map(|s| s.1),
            }
        })
        .collect()
}

/// Runs `job` for every seed, on up to `workers` threads, and returns the
/// results in seed order.
fn for_each_seed<T, F>(seeds: &[u64], workers: Option<usize>, job: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync,
{
    let workers = workers
        .unwrap_or_else(|| thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, seeds.len().max(1));
    if workers == 1 {
        return seeds.iter().map(|&s| job(s)).collect();
    }
    let chunk = seeds.len().div_ceil(workers);
    thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|part| {
                let job = &job;
                scope.spawn(move || part.iter().map(|&s| job(s)).collect::<Vec<T>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("experiment worker panicked"))
            .collect()
    })
}

fn split_info(split: &Split, fraction: f64, stratified: bool) -> SplitInfo {
    SplitInfo {
        tuning_size: split.tuning.len(),
        evaluation_size: split.evaluation.len(),
        tuning_fraction: Some(fraction),
        stratified: Some(stratified),
    }
}

fn observer_of(fitted: &FittedDetector) -> Option<RelUMatrixFile> {
    match &fitted.artifact {
        Artifact::RelU(d) => Some(d.to_file(true, None)),
        _ => None,
    }
}

fn failed(seed: u64, fraction: f64, method: Method, value: Option<f64>, e: &Error) -> RunRecord {
    log::warn!("seed {seed}, {method}: {e}");
    RunRecord {
        seed,
        tuning_fraction: fraction,
        method,
        ablation_value: value,
        status: RunStatus::Failed,
        error: Some(e.to_string()),
        tuning_fpr95: None,
        report: None,
        observer: None,
    }
}

struct SeedContext<'a> {
    population: &'a Population,
    split: Split,
    fraction: f64,
    stratified: bool,
}

impl SeedContext<'_> {
    fn sides(&self) -> (Population, Population) {
        (
            self.population.subset(&self.split.tuning),
            self.population.subset(&self.split.evaluation),
        )
    }

    fn tuned(&self, method: Method, protocol: &Protocol, model: Option<&ClassifierModel>) -> RunRecord {
        let (tuning, evaluation) = self.sides();
        let seed = self.split.seed;
        let run = || -> Result<RunRecord> {
            let grid = grid_search(method, &tuning, &protocol.grid, model, &protocol.detector)?;
            let report = evaluate_detector(
                &grid.best,
                &evaluation,
                model,
                &protocol.detector,
                split_info(&self.split, self.fraction, self.stratified),
                Some(seed),
            )?;
            Ok(RunRecord {
                seed,
                tuning_fraction: self.fraction,
                method,
                ablation_value: None,
                status: RunStatus::Ok,
                error: None,
                tuning_fpr95: Some(grid.best_fpr95),
                observer: observer_of(&grid.best),
                report: Some(report),
            })
        };
        run().unwrap_or_else(|e| failed(seed, self.fraction, method, None, &e))
    }

    fn pinned(&self, config: &DetectorConfig, value: f64, protocol: &Protocol, model: Option<&ClassifierModel>) -> RunRecord {
        let (tuning, evaluation) = self.sides();
        let seed = self.split.seed;
        let run = || -> Result<RunRecord> {
            let fitted = fit_detector(config, &tuning, &protocol.detector)?;
            let report = evaluate_detector(
                &fitted,
                &evaluation,
                model,
                &protocol.detector,
                split_info(&self.split, self.fraction, self.stratified),
                Some(seed),
            )?;
            Ok(RunRecord {
                seed,
                tuning_fraction: self.fraction,
                method: config.method,
                ablation_value: Some(value),
                status: RunStatus::Ok,
                error: None,
                tuning_fpr95: None,
                observer: observer_of(&fitted),
                report: Some(report),
            })
        };
        run().unwrap_or_else(|e| failed(seed, self.fraction, config.method, Some(value), &e))
    }
}

fn finish(protocol: &Protocol, source: String, n_samples: usize, confusion: Option<Vec<Vec<usize>>>, records: Vec<RunRecord>) -> ExperimentResult {
    ExperimentResult {
        protocol: protocol.clone(),
        source,
        n_samples,
        confusion,
        aggregates: aggregate(&records),
        records,
    }
}

fn confusion_rows(dataset: &EvalDataset) -> Vec<Vec<usize>> {
    confusion_matrix(dataset).rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Per seed and tuning fraction: split, grid-search every method on the
/// tuning side, evaluate on the other side.
pub fn run_matched_experiment(
    model: Option<&ClassifierModel>,
    population: &Population,
    protocol: &Protocol,
) -> Result<ExperimentResult> {
    protocol.validate()?;
    let mut records = Vec::new();
    for fraction in protocol.fractions() {
        let spec = SplitSpec {
            tuning_fraction: fraction,
            ..protocol.split.clone()
        };
        let splits = make_splits(&population.positive, &spec)?;
        let per_seed = for_each_seed(&spec.seeds, protocol.workers, |seed| {
            let split = splits.iter().find(|s| s.seed == seed).expect("split per seed").clone();
            let ctx = SeedContext {
                population,
                split,
                fraction,
                stratified: spec.stratify,
            };
            protocol
                .methods
                .iter()
                .map(|&m| ctx.tuned(m, protocol, model))
                .collect::<Vec<_>>()
        });
        records.extend(per_seed.into_iter().flatten());
    }
    Ok(finish(
        protocol,
        population.dataset.source_tag.clone(),
        population.len(),
        Some(confusion_rows(&population.dataset)),
        records,
    ))
}

/// Draws as many secondary samples as there are primary samples, so both
/// sides of every split hold equal counts from each source. Primary
/// samples are the positives.
pub fn run_mismatch_experiment(
    model: Option<&ClassifierModel>,
    primary: &EvalDataset,
    secondary: &EvalDataset,
    protocol: &Protocol,
) -> Result<ExperimentResult> {
    protocol.validate()?;
    if secondary.len() < primary.len() {
        return Err(Error::Input(format!(
            "mismatch run needs at least {} secondary samples, got {}",
            primary.len(),
            secondary.len()
        )));
    }
    let mut records = Vec::new();
    for fraction in protocol.fractions() {
        let per_seed = for_each_seed(&protocol.split.seeds, protocol.workers, |seed| -> Result<Vec<RunRecord>> {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SECONDARY_STREAM);
            let mut picked = sample(&mut rng, secondary.len(), primary.len()).into_vec();
            picked.sort_unstable();
            let population = Population::mismatch(primary, &secondary.subset(&picked))?;
            let split = make_split(&population.positive, fraction, seed, true)?;
            split.check_partition(population.len())?;
            let ctx = SeedContext {
                population: &population,
                split,
                fraction,
                stratified: true,
            };
            Ok(protocol.methods.iter().map(|&m| ctx.tuned(m, protocol, model)).collect())
        });
        for r in per_seed {
            records.extend(r?);
        }
    }
    let source = format!("{}+{}", primary.source_tag, secondary.source_tag);
    Ok(finish(protocol, source, 2 * primary.len(), None, records))
}

/// One pinned configuration per axis value and seed; nothing is tuned.
pub fn run_ablation(
    model: Option<&ClassifierModel>,
    population: &Population,
    protocol: &Protocol,
) -> Result<ExperimentResult> {
    protocol.validate()?;
    let ablation = protocol
        .ablation
        .as_ref()
        .ok_or_else(|| Error::Parameter("ablation run needs an ablation section".into()))?;
    let mut records = Vec::new();
    for &value in &ablation.values {
        let (config, fraction) = ablation.point(value)?;
        let spec = SplitSpec {
            tuning_fraction: fraction,
            ..protocol.split.clone()
        };
        let splits = make_splits(&population.positive, &spec)?;
        let per_seed = for_each_seed(&spec.seeds, protocol.workers, |seed| {
            let split = splits.iter().find(|s| s.seed == seed).expect("split per seed").clone();
            let ctx = SeedContext {
                population,
                split,
                fraction,
                stratified: spec.stratify,
            };
            ctx.pinned(&config, value, protocol, model)
        });
        records.extend(per_seed);
    }
    Ok(finish(
        protocol,
        population.dataset.source_tag.clone(),
        population.len(),
        Some(confusion_rows(&population.dataset)),
        records,
    ))
}

/// Dispatches on the protocol's kind.
pub fn run_experiment(
    model: Option<&ClassifierModel>,
    primary: &EvalDataset,
    secondary: Option<&EvalDataset>,
    protocol: &Protocol,
) -> Result<ExperimentResult> {
    match protocol.kind {
        ExperimentKind::Matched => run_matched_experiment(model, &Population::matched(primary.clone()), protocol),
        ExperimentKind::Ablation => run_ablation(model, &Population::matched(primary.clone()), protocol),
        ExperimentKind::Mismatch => {
            let secondary =
                secondary.ok_or_else(|| Error::Parameter("mismatch run needs a secondary dataset".into()))?;
            run_mismatch_experiment(model, primary, secondary, protocol)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab::classifier::{train_classifier, Architecture, TrainConfig};
    use crate::lab::synth::{synth_generate, SynthConfig};

    fn setup() -> (EvalDataset, ClassifierModel) {
        let cfg = SynthConfig::new(3, 3, 300, 10, 300, 4).with_confusion(0, 1, 2.0);
        let s = synth_generate(&cfg).unwrap();
        let (model, _) = train_classifier(&s.train, Architecture::LinearSoftmax, &TrainConfig::default()).unwrap();
        (model.infer(&s.test, 0, "synth").unwrap(), model)
    }

    fn small(kind: ExperimentKind) -> Protocol {
        Protocol {
            grid: GridSpec {
                temperatures: vec![1.0, 2.0],
                epsilons: vec![0.0, 1e-3],
                lambdas: vec![0.0, 0.5, 1.0],
            },
            split: SplitSpec::new(0.5, vec![0, 1, 2], true).unwrap(),
            ..Protocol::new(kind)
        }
    }

    #[test]
    fn mean_std_values() {
        assert_eq!(mean_std(&[]), None);
        assert_eq!(mean_std(&[0.3, 0.3]), Some((0.3, 0.0)));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn matched_run_is_deterministic_and_worker_independent() {
        let (ds, model) = setup();
        let pop = Population::matched(ds);
        let mut p = small(ExperimentKind::Matched);
        p.workers = Some(1);
        let a = run_matched_experiment(Some(&model), &pop, &p).unwrap();
        p.workers = Some(3);
        let b = run_matched_experiment(Some(&model), &pop, &p).unwrap();
        assert_eq!(a.records, b.records);
        assert_eq!(a.aggregates, b.aggregates);
        assert_eq!(a.records.len(), 3 * 4);
        assert!(a.records.iter().all(|r| r.status == RunStatus::Ok));
        for row in &a.aggregates {
            assert_eq!((row.n_seeds, row.n_effective), (3, 3));
        }
    }

    #[test]
    fn identical_seeds_give_zero_spread() {
        let (ds, model) = setup();
        let pop = Population::matched(ds);
        let p = small(ExperimentKind::Matched);
        let r = run_matched_experiment(Some(&model), &pop, &p).unwrap();
        let one = r.records.iter().find(|x| x.seed == 1 && x.method == Method::Msp).unwrap().clone();
        let dup = vec![one.clone(), RunRecord { seed: 7, ..one }];
        let agg = aggregate(&dup);
        assert_eq!(agg[0].fpr95_std, Some(0.0));
    }

    #[test]
    fn failed_seed_is_reported() {
        let (ds, _) = setup();
        let pop = Population::matched(ds);
        let mut p = small(ExperimentKind::Matched);
        p.methods = vec![Method::Odin];
        p.grid.epsilons = vec![1e-3];
        // No model: every perturbed cell fails, so every seed fails.
        let r = run_matched_experiment(None, &pop, &p).unwrap();
        assert!(r.records.iter().all(|x| x.status == RunStatus::Failed && x.error.is_some()));
        assert_eq!(r.aggregates[0].n_effective, 0);
        assert_eq!(r.aggregates[0].fpr95_mean, None);
    }

    #[test]
    fn mismatch_with_copy_is_near_chance() {
        let (ds, model) = setup();
        let mut p = small(ExperimentKind::Mismatch);
        p.methods = vec![Method::Msp, Method::RelU];
        p.split.seeds = (0..10).collect();
        let r = run_mismatch_experiment(Some(&model), &ds, &ds, &p).unwrap();
        for row in &r.aggregates {
            assert!((row.auroc_mean.unwrap() - 0.5).abs() < 0.06, "{row:?}");
        }
        let rep = r.records[0].report.as_ref().unwrap();
        assert_eq!(rep.n_positive, rep.n_negative);
        let short = ds.subset(&[0, 1, 2]);
        assert!(matches!(run_mismatch_experiment(Some(&model), &ds, &short, &p), Err(Error::Input(_))));
    }

    #[test]
    fn ablation_lambda_half_matches_pinned_default() {
        let (ds, model) = setup();
        let pop = Population::matched(ds);
        let mut p = small(ExperimentKind::Ablation);
        p.ablation = Some(AblationSpec::new(AblationAxis::Lambda, vec![0.5]));
        let a = run_ablation(Some(&model), &pop, &p).unwrap();
        assert_eq!(a.aggregates.len(), 1);
        p.ablation = Some(AblationSpec::new(AblationAxis::Epsilon, vec![0.0]));
        let b = run_ablation(Some(&model), &pop, &p).unwrap();
        let strip = |r: &ExperimentResult| r.records.iter().map(|x| x.report.clone()).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn split_size_ablation_has_one_row_per_size() {
        let (ds, model) = setup();
        let pop = Population::matched(ds);
        let mut p = small(ExperimentKind::Ablation);
        p.ablation = Some(AblationSpec::new(AblationAxis::SplitSize, vec![0.1, 0.2, 0.33, 0.5]));
        let r = run_ablation(Some(&model), &pop, &p).unwrap();
        assert_eq!(r.aggregates.len(), 4);
        assert_eq!(r.records.len(), 12);
        assert_eq!(r.aggregates[2].tuning_fraction, 0.33);
    }

    #[test]
    fn protocol_json_defaults() {
        let p: Protocol = serde_json::from_str(r#"{"kind": "matched"}"#).unwrap();
        assert_eq!(p, Protocol::new(ExperimentKind::Matched));
        let a: AblationSpec = serde_json::from_str(r#"{"axis": "T", "values": [1.0]}"#).unwrap();
        assert_eq!(a.axis, AblationAxis::Temperature);
        assert!(Protocol::new(ExperimentKind::Ablation).validate().is_err());
    }
}
