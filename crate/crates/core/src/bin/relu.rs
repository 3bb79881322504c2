use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;

use relative_uncertainty::domain::{DetectorConfig, EvalDataset, Method};
use relative_uncertainty::error::{Error, Result};
use relative_uncertainty::io::matrix::write_text;
use relative_uncertainty::io::plot::heatmap_svg;
use relative_uncertainty::io::{
    emit_experiment, emit_report, load_dataset, load_features, load_matrix, load_model, read_json,
    render_experiment_plots, render_report_plots, run_config, save_labels, save_matrix, write_json, ExperimentConfig,
    ReportFormat,
};
use relative_uncertainty::lab::{synth_generate, train_classifier, Architecture, MlpDetectorConfig, SynthConfig, TrainConfig};
use relative_uncertainty::metrics::report::{MetricsReport, SplitInfo};
use relative_uncertainty::observer::{format_17, RelUMatrix};
use relative_uncertainty::tune::{
    check_disjoint, evaluate_detector, fit_detector, grid_search, make_split, metrics_from_scores, score_dataset,
    Artifact, DetectorFile, DetectorOptions, ExperimentResult, FittedDetector, GridSpec, Population,
};

#[derive(Parser)]
#[command(name = "relu", version, about = "Relative-uncertainty detectors for misclassification and mismatch")]
struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, env = "RELU_OUT_DIR", default_value = "relu-out")]
    out_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = FormatArg::Both)]
    format: FormatArg,
    /// Command-specific JSON config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    Both,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Both => ReportFormat::Both,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Ext {
    Csv,
    Npy,
}

impl Ext {
    fn as_str(self) -> &'static str {
        match self {
            Ext::Csv => "csv",
            Ext::Npy => "npy",
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Side {
    All,
    Tuning,
    Evaluation,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train/tune/test feature sets.
    Synth(SynthArgs),
    /// Train a classifier on features and labels.
    Train(TrainArgs),
    /// Run a classifier on features and write its logits.
    Infer(InferArgs),
    /// Fit a detector (observer matrix, conformal threshold or MLP).
    Fit(FitArgs),
    /// Score samples with a fitted detector.
    Score(ScoreArgs),
    /// Detection metrics from scores and labels.
    Evaluate(EvaluateArgs),
    /// Grid-search detectors on a tuning split and evaluate on the rest.
    Tune(TuneArgs),
    /// Run a matched, mismatch or ablation experiment.
    Experiment(ExperimentArgs),
    /// Render SVG figures from reports or detector files.
    Plot(PlotArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Use the built-in asymmetric-confusion benchmark.
    #[arg(long)]
    benchmark: bool,
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 5)]
    dim: usize,
    #[arg(long, default_value_t = 2000)]
    n_train: usize,
    #[arg(long, default_value_t = 1000)]
    n_tune: usize,
    #[arg(long, default_value_t = 2000)]
    n_test: usize,
    /// Class pair `a,b,strength` whose means are pulled together.
    #[arg(long, value_parser = parse_pair)]
    confusion: Vec<(usize, usize, f64)>,
    #[arg(long, value_enum, default_value_t = Ext::Csv)]
    ext: Ext,
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected a,b,strength, got '{s}'"));
    }
    let a = parts[0].trim().parse().map_err(|_| format!("bad class '{}'", parts[0]))?;
    let b = parts[1].trim().parse().map_err(|_| format!("bad class '{}'", parts[1]))?;
    let st = parts[2].trim().parse().map_err(|_| format!("bad strength '{}'", parts[2]))?;
    Ok((a, b, st))
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    labels: PathBuf,
    #[arg(long)]
    classes: Option<usize>,
    /// Hidden width; omit for a linear softmax model.
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long, value_enum, default_value_t = Ext::Csv)]
    ext: Ext,
}

/// A dataset on disk.
#[derive(Args, Clone)]
struct DataArgs {
    #[arg(long)]
    labels: PathBuf,
    /// Logits (or probabilities with `--probabilities`).
    #[arg(long)]
    outputs: Option<PathBuf>,
    #[arg(long)]
    probabilities: bool,
    #[arg(long)]
    features: Option<PathBuf>,
    /// Classifier, needed for input perturbation.
    #[arg(long)]
    model: Option<PathBuf>,
}

/// Optional seeded split of the dataset rows.
#[derive(Args, Clone)]
struct SplitArgs {
    #[arg(long, value_enum, default_value_t = Side::All)]
    side: Side,
    /// Split seed; defaults to `--seed`.
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long, default_value_t = 0.5)]
    tuning_fraction: f64,
    #[arg(long)]
    no_stratify: bool,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    method: Method,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = 0.0)]
    epsilon: f64,
    /// Defaults to the positive fraction of the tuning data.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Hidden widths of the MLP detector.
    #[arg(long)]
    hidden: Vec<usize>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    split: SplitArgs,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    detector: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    split: SplitArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// `id,score` file written by `score`.
    #[arg(long)]
    scores: PathBuf,
    /// Detector whose tuning rows must not be evaluated.
    #[arg(long)]
    detector: Option<PathBuf>,
    /// Method named in the report when no detector is given.
    #[arg(long, default_value = "MSP")]
    method: Method,
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Args)]
struct TuneArgs {
    #[arg(long = "method")]
    methods: Vec<Method>,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    split_seed: Option<u64>,
    #[arg(long, default_value_t = 0.5)]
    tuning_fraction: f64,
    #[arg(long)]
    no_stratify: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Run the built-in benchmark (generator seed `--seed`) instead of a config.
    #[arg(long)]
    benchmark: bool,
    /// Also render figures.
    #[arg(long)]
    plots: bool,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct PlotArgs {
    /// Experiment results, metrics reports or detector files.
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Provenance<'a> {
    command: &'a str,
    version: &'a str,
    status: &'a str,
    seed: u64,
    config: Option<String>,
    inputs: Vec<String>,
    outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exit_code: Option<i32>,
}

#[derive(Default)]
struct Trace {
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Trace {
    fn input(&mut self, p: &Path) {
        self.inputs.push(p.to_path_buf());
    }

    fn data(&mut self, d: &DataArgs) {
        for p in [Some(&d.labels), d.outputs.as_ref(), d.features.as_ref(), d.model.as_ref()].into_iter().flatten() {
            self.input(p);
        }
    }
}

fn read_config<T: DeserializeOwned>(cli: &Cli) -> Result<Option<T>> {
    cli.config.as_deref().map(read_json).transpose()
}

fn load_data(d: &DataArgs) -> Result<(EvalDataset, Option<relative_uncertainty::lab::ClassifierModel>)> {
    let model = d.model.as_deref().map(load_model).transpose()?;
    let ds = load_dataset(
        d.outputs.as_deref(),
        &d.labels,
        d.probabilities,
        d.features.as_deref(),
        model.as_ref(),
    )?;
    Ok((ds, model))
}

/// Rows of `population` on the requested side of the split.
fn select(population: Population, split: &SplitArgs, seed: u64) -> Result<Population> {
    if split.side == Side::All {
        return Ok(population);
    }
    let s = make_split(
        &population.positive,
        split.tuning_fraction,
        split.split_seed.unwrap_or(seed),
        !split.no_stratify,
    )?;
    s.check_partition(population.len())?;
    Ok(population.subset(if split.side == Side::Tuning { &s.tuning } else { &s.evaluation }))
}

fn run(cli: &Cli, trace: &mut Trace) -> Result<()> {
    let out = &cli.out_dir;
    let format: ReportFormat = cli.format.into();
    match &cli.command {
        Command::Synth(a) => {
            let cfg = match read_config::<SynthConfig>(cli)? {
                Some(c) => c,
                None if a.benchmark => SynthConfig::asymmetric_benchmark(cli.seed),
                None => {
                    let mut c = SynthConfig::new(a.classes, a.dim, a.n_train, a.n_tune, a.n_test, cli.seed);
                    for &(x, y, s) in &a.confusion {
                        c = c.with_confusion(x, y, s);
                    }
                    c
                }
            };
            let splits = synth_generate(&cfg)?;
            for (name, set) in [("train", &splits.train), ("tune", &splits.tune), ("test", &splits.test)] {
                let f = out.join(format!("{name}_features.{}", a.ext.as_str()));
                let l = out.join(format!("{name}_labels.{}", a.ext.as_str()));
                save_matrix(&f, &set.features)?;
                save_labels(&l, &set.labels)?;
                trace.outputs.extend([f, l]);
            }
            let p = out.join("synth_config.json");
            write_json(&p, &cfg)?;
            trace.outputs.push(p);
        }
        Command::Train(a) => {
            trace.input(&a.features);
            trace.input(&a.labels);
            let data = load_features(&a.features, &a.labels, a.classes)?;
            let mut cfg = read_config::<TrainConfig>(cli)?.unwrap_or(TrainConfig {
                seed: cli.seed,
                ..TrainConfig::default()
            });
            if let Some(e) = a.epochs {
                cfg.epochs = e;
            }
            if let Some(lr) = a.lr {
                cfg.learning_rate = lr;
            }
            let arch = a.hidden.map_or(Architecture::LinearSoftmax, Architecture::mlp);
            let (model, summary) = train_classifier(&data, arch, &cfg)?;
            let m = out.join("model.json");
            let s = out.join("train_summary.json");
            write_json(&m, &model.to_file())?;
            write_json(&s, &summary)?;
            trace.outputs.extend([m, s]);
        }
        Command::Infer(a) => {
            trace.input(&a.model);
            trace.input(&a.features);
            let model = load_model(&a.model)?;
            let logits = model.forward_batch(&load_matrix(&a.features)?)?;
            let p = out.join(format!("logits.{}", a.ext.as_str()));
            save_matrix(&p, &logits)?;
            trace.outputs.push(p);
        }
        Command::Fit(a) => {
            trace.data(&a.data);
            let mut options = read_config::<DetectorOptions>(cli)?.unwrap_or_default();
            if let Some(alpha) = a.alpha {
                options.conformal_alpha = alpha;
            }
            if !a.hidden.is_empty() {
                options.mlp.hidden = a.hidden.clone();
            }
            options.mlp = MlpDetectorConfig {
                seed: cli.seed,
                ..options.mlp
            };
            let config = if a.method.uses_temperature() {
                DetectorConfig::new(a.method, a.temperature, a.epsilon, a.lambda)?
            } else {
                DetectorConfig::identity(a.method)
            };
            let (ds, _) = load_data(&a.data)?;
            let tuning = select(Population::matched(ds), &a.split, cli.seed)?;
            let fitted = fit_detector(&config, &tuning, &options)?;
            let p = out.join("detector.json");
            write_json(&p, &fitted.to_file())?;
            trace.outputs.push(p);
            if let Artifact::RelU(d) = &fitted.artifact {
                let c = out.join("d_matrix.csv");
                write_text(&c, &d.to_csv())?;
                trace.outputs.push(c);
            }
        }
        Command::Score(a) => {
            trace.input(&a.detector);
            trace.data(&a.data);
            let fitted = FittedDetector::from_file(&read_json::<DetectorFile>(&a.detector)?)?;
            let (ds, model) = load_data(&a.data)?;
            let pop = select(Population::matched(ds), &a.split, cli.seed)?;
            let scores = score_dataset(&fitted, &pop.dataset, model.as_ref())?;
            let mut text = String::from("id,score\n");
            for (s, v) in pop.dataset.samples.iter().zip(&scores) {
                text.push_str(&format!("{},{}\n", s.id, format_17(*v)));
            }
            let p = out.join("scores.csv");
            write_text(&p, &text)?;
            trace.outputs.push(p);
        }
        Command::Evaluate(a) => {
            trace.input(&a.scores);
            trace.data(&a.data);
            let table = load_matrix(&a.scores)?;
            if table.ncols() != 2 {
                return Err(Error::Input(format!("{}: expected id,score columns", a.scores.display())));
            }
            let (ds, _) = load_data(&a.data)?;
            let ids: Vec<usize> = table.column(0).iter().map(|&v| v as usize).collect();
            if let Some(bad) = ids.iter().find(|&&i| i >= ds.len()) {
                return Err(Error::Input(format!("score id {bad} has no row in the dataset")));
            }
            let scores: Vec<f64> = table.column(1).to_vec();
            let evaluation = Population::matched(ds).subset(&ids);
            let fitted = match &a.detector {
                Some(p) => {
                    trace.input(p);
                    let f = FittedDetector::from_file(&read_json::<DetectorFile>(p)?)?;
                    if f.source == evaluation.dataset.source_tag {
                        check_disjoint(&f.fit_ids, &evaluation.dataset)?;
                    }
                    f
                }
                None => FittedDetector {
                    config: DetectorConfig::identity(a.method),
                    artifact: Artifact::None,
                    fit_ids: Vec::new(),
                    source: String::new(),
                },
            };
            let split = SplitInfo {
                tuning_size: fitted.fit_ids.len(),
                evaluation_size: evaluation.len(),
                tuning_fraction: None,
                stratified: None,
            };
            let report = metrics_from_scores(&fitted, &evaluation, &scores, &DetectorOptions::default(), split, None)?;
            trace.outputs.extend(emit_report(&report, out, "evaluation", format)?);
        }
        Command::Tune(a) => {
            trace.data(&a.data);
            let grid = read_config::<GridSpec>(cli)?.unwrap_or_default();
            let (ds, model) = load_data(&a.data)?;
            let pop = Population::matched(ds);
            let seed = a.split_seed.unwrap_or(cli.seed);
            let s = make_split(&pop.positive, a.tuning_fraction, seed, !a.no_stratify)?;
            s.check_partition(pop.len())?;
            let (tuning, evaluation) = (pop.subset(&s.tuning), pop.subset(&s.evaluation));
            let methods = if a.methods.is_empty() {
                vec![Method::Msp, Method::Odin, Method::GiniDoctor, Method::RelU]
            } else {
                a.methods.clone()
            };
            let options = DetectorOptions::default();
            for method in methods {
                let result = grid_search(method, &tuning, &grid, model.as_ref(), &options)?;
                let info = SplitInfo {
                    tuning_size: s.tuning.len(),
                    evaluation_size: s.evaluation.len(),
                    tuning_fraction: Some(a.tuning_fraction),
                    stratified: Some(!a.no_stratify),
                };
                let report = evaluate_detector(&result.best, &evaluation, model.as_ref(), &options, info, Some(seed))?;
                let tag = method.tag().to_ascii_lowercase();
                let g = out.join(format!("grid_{tag}.json"));
                let d = out.join(format!("detector_{tag}.json"));
                write_json(&g, &result.cells)?;
                write_json(&d, &result.best.to_file())?;
                trace.outputs.extend([g, d]);
                trace.outputs.extend(emit_report(&report, out, &format!("report_{tag}"), format)?);
            }
        }
        Command::Experiment(a) => {
            let (mut config, base) = match (&cli.config, a.benchmark) {
                (Some(p), _) => {
                    trace.input(p);
                    let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
                    (read_json::<ExperimentConfig>(p)?, base)
                }
                (None, true) => (ExperimentConfig::asymmetric_benchmark(cli.seed), PathBuf::from(".")),
                (None, false) => {
                    return Err(Error::Parameter("experiment needs --config or --benchmark".into()))
                }
            };
            if a.workers.is_some() {
                config.protocol.workers = a.workers;
            }
            let result = run_config(&config, &base)?;
            let c = out.join("experiment_config.json");
            write_json(&c, &config)?;
            trace.outputs.push(c);
            trace.outputs.extend(emit_experiment(&result, out, "experiment", format)?);
            if a.plots {
                trace.outputs.extend(render_experiment_plots(&result, out)?);
            }
        }
        Command::Plot(a) => {
            for p in &a.inputs {
                trace.input(p);
                let value: serde_json::Value = read_json(p)?;
                if value.get("records").is_some() {
                    let r: ExperimentResult = serde_json::from_value(value)?;
                    trace.outputs.extend(render_experiment_plots(&r, out)?);
                } else if value.get("metrics").is_some() {
                    let r: MetricsReport = serde_json::from_value(value)?;
                    trace.outputs.extend(render_report_plots(&[&r], out)?);
                } else if value.get("fit_ids").is_some() {
                    let f: DetectorFile = serde_json::from_value(value)?;
                    match f.observer {
                        Some(o) => {
                            let d = RelUMatrix::from_file(&o, None)?;
                            let rows: Vec<Vec<f64>> = d.entries().rows().into_iter().map(|r| r.to_vec()).collect();
                            let path = out.join("d_matrix.svg");
                            write_text(&path, &heatmap_svg("Learned D", &rows))?;
                            trace.outputs.push(path);
                        }
                        None => log::warn!("{} has no observer matrix; nothing to plot", p.display()),
                    }
                } else {
                    return Err(Error::Input(format!("{}: not a report or detector file", p.display())));
                }
            }
        }
    }
    Ok(())
}

fn name(c: &Command) -> &'static str {
    match c {
        Command::Synth(_) => "synth",
        Command::Train(_) => "train",
        Command::Infer(_) => "infer",
        Command::Fit(_) => "fit",
        Command::Score(_) => "score",
        Command::Evaluate(_) => "evaluate",
        Command::Tune(_) => "tune",
        Command::Experiment(_) => "experiment",
        Command::Plot(_) => "plot",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut trace = Trace::default();
    let outcome = run(&cli, &mut trace);
    let show = |ps: &[PathBuf]| ps.iter().map(|p| p.display().to_string()).collect::<Vec<_>>();
    let mut record = Provenance {
        command: name(&cli.command),
        version: env!("CARGO_PKG_VERSION"),
        status: "ok",
        seed: cli.seed,
        config: cli.config.as_ref().map(|p| p.display().to_string()),
        inputs: show(&trace.inputs),
        outputs: show(&trace.outputs),
        error: None,
        exit_code: None,
    };
    let code = match &outcome {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            record.status = "error";
            record.error = Some(e.to_string());
            record.exit_code = Some(e.exit_code());
            e.exit_code()
        }
    };
    println!("{}", serde_json::to_string(&record).expect("provenance serializes"));
    ExitCode::from(code as u8)
}
