//! Command-line front end: `train`, `infer`, `eval`, `gen`, `gradcheck`.
//!
//! Results go to standard output as TSV, diagnostics to standard error.
//! Exit codes: 0 success, 1 numerical failure, 2 usage or I/O failure.

use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::Settings;
use crate::corpus::{load_vectorized, save_vectorized, Label, LabeledDoc, SparseBow};
use crate::error::Error;
use crate::evaluation::{cross_validate, evaluate, infer_corpus, topic_sparsity, Metric, MetricReport};
use crate::inference::Prediction;
use crate::model::{load_model, save_model, Model, OutputParams, Task, TopicMatrix};
use crate::oracle::{run_gradcheck, sample_corpus, GradcheckConfig, SynthSpec};
use crate::training::TrainObserver;

pub const EXIT_NUMERICAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "bpslda", version, about = "Supervised topic models trained by back propagation through MAP inference")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a vectorized corpus; prints per-epoch mean loss.
    Train(TrainArgs),
    /// Infer topic proportions and predictions for each document.
    Infer(InferArgs),
    /// Score a model, or cross-validate training, on a labeled corpus.
    Eval(EvalArgs),
    /// Sample a synthetic corpus and its ground-truth model.
    Gen(GenArgs),
    /// Check analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat `key = value` config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (0 = one per core).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Fixed reduction order, so output is a pure function of the inputs.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Debug, Args)]
pub struct ModelFlags {
    #[arg(long)]
    pub num_topics: Option<usize>,
    #[arg(long, alias = "alpha")]
    pub dirichlet_alpha: Option<f64>,
    #[arg(long, alias = "beta")]
    pub dirichlet_beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub unroll_depth: Option<usize>,
    /// regression, classification or unsup.
    #[arg(long)]
    pub task: Option<String>,
    /// Number of classes; by default one past the largest class label.
    #[arg(long)]
    pub num_classes: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub minibatch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub mu_u: Option<f64>,
    #[arg(long)]
    pub mu0: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub running_average_start_epoch: Option<usize>,
    #[arg(long)]
    pub initial_step: Option<f64>,
    #[arg(long)]
    pub shrink: Option<f64>,
    #[arg(long)]
    pub line_search: Option<bool>,
    #[arg(long)]
    pub max_backtracks: Option<usize>,
    /// bregman_kl or squared_one_norm.
    #[arg(long)]
    pub divergence: Option<String>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Vectorized corpus: `<label> <id>:<count> ...` per line.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Vocabulary size; by default one past the largest term id.
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub hyper: ModelFlags,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub corpus: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Model to score; not needed with --folds.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub corpus: PathBuf,
    /// pr2, auc or sparsity.
    #[arg(long)]
    pub metric: String,
    /// Probability mass for the sparsity metric.
    #[arg(long, default_value_t = 0.9)]
    pub mass: f64,
    /// Cross-validate: train and score on each of k folds.
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub hyper: ModelFlags,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// regression, classification or unsup.
    #[arg(long, default_value = "regression")]
    pub task: String,
    #[arg(long, default_value_t = 1000)]
    pub num_docs: usize,
    #[arg(long, default_value_t = 50)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 5)]
    pub num_topics: usize,
    #[arg(long, default_value_t = 100)]
    pub words_per_doc: usize,
    #[arg(long, default_value_t = 2)]
    pub num_classes: usize,
    #[arg(long, alias = "alpha", default_value_t = 1.0)]
    pub dirichlet_alpha: f64,
    #[arg(long, alias = "beta", default_value_t = 1.0)]
    pub dirichlet_beta: f64,
    #[arg(long, default_value_t = 1.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Corpus output path.
    #[arg(long)]
    pub output: PathBuf,
    /// Ground-truth model output path.
    #[arg(long)]
    pub truth: PathBuf,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    pub h: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub tolerance: f64,
    /// Negates the analytic gradients, to confirm the check can fail.
    #[arg(long, hide = true)]
    pub inject_sign_flip: bool,
}

/// Failure of a command, carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_USAGE };
        Failure { code, message: e.to_string() }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::from(e).into()
    }
}

/// Prefixes I/O failures with the path involved.
fn at_path<T>(path: &Path, r: crate::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| match e {
        Error::Io(io) => usage(format!("{}: {io}", path.display())),
        other => other.into(),
    })
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: EXIT_USAGE, message: message.into() }
}

type CmdResult = std::result::Result<(), Failure>;

pub fn run(cli: Cli) -> CmdResult {
    match cli.command {
        Command::Train(args) => run_train(args),
        Command::Infer(args) => run_infer(args),
        Command::Eval(args) => run_eval(args),
        Command::Gen(args) => run_gen(args),
        Command::Gradcheck(args) => run_gradcheck_cmd(args),
    }
}

fn settings(common: &Common, hyper: Option<&ModelFlags>, train: Option<&TrainFlags>) -> Result<Settings, Failure> {
    let mut s = Settings::default();
    if let Some(path) = &common.config {
        at_path(path, s.apply_file(path))?;
    }
    let mut flags: Vec<(&str, Option<String>)> = vec![
        ("seed", common.seed.map(|v| v.to_string())),
        ("threads", common.threads.map(|v| v.to_string())),
    ];
    if common.deterministic {
        flags.push(("deterministic", Some("true".into())));
    }
    if let Some(h) = hyper {
        flags.extend([
            ("num_topics", h.num_topics.map(|v| v.to_string())),
            ("dirichlet_alpha", h.dirichlet_alpha.map(|v| v.to_string())),
            ("dirichlet_beta", h.dirichlet_beta.map(|v| v.to_string())),
            ("gamma", h.gamma.map(|v| v.to_string())),
            ("unroll_depth", h.unroll_depth.map(|v| v.to_string())),
            ("task", h.task.clone()),
        ]);
    }
    if let Some(t) = train {
        flags.extend([
            ("minibatch_size", t.minibatch_size.map(|v| v.to_string())),
            ("epochs", t.epochs.map(|v| v.to_string())),
            ("mu_u", t.mu_u.map(|v| v.to_string())),
            ("mu0", t.mu0.map(|v| v.to_string())),
            ("eps", t.eps.map(|v| v.to_string())),
            ("running_average_start_epoch", t.running_average_start_epoch.map(|v| v.to_string())),
            ("initial_step", t.initial_step.map(|v| v.to_string())),
            ("shrink", t.shrink.map(|v| v.to_string())),
            ("line_search", t.line_search.map(|v| v.to_string())),
            ("max_backtracks", t.max_backtracks.map(|v| v.to_string())),
            ("divergence", t.divergence.clone()),
        ]);
    }
    for (key, value) in flags {
        if let Some(value) = value {
            s.set(key, &value)?;
        }
    }
    Ok(s)
}

fn load_labeled(path: &Path, vocab_size: Option<usize>, s: &Settings, num_classes: Option<usize>) -> Result<(Vec<LabeledDoc>, Task), Failure> {
    at_path(path, s.load_corpus(path, vocab_size, num_classes))
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, Failure> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| usage(format!("cannot start worker threads: {e}")))?;
    Ok(pool.install(f))
}

struct EpochPrinter<W: Write> {
    out: W,
    error: Option<io::Error>,
}

impl<W: Write> TrainObserver for EpochPrinter<W> {
    fn on_epoch(&mut self, epoch: usize, mean_loss: f64, _phi: &TopicMatrix, _u: Option<&OutputParams>) {
        if self.error.is_none() {
            if let Err(e) = writeln!(self.out, "{}\t{mean_loss}", epoch + 1).and_then(|_| self.out.flush()) {
                self.error = Some(e);
            }
        }
    }
}

fn run_train(args: TrainArgs) -> CmdResult {
    let s = settings(&args.common, Some(&args.hyper), Some(&args.train))?;
    let (docs, task) = load_labeled(&args.corpus, args.vocab_size, &s, args.hyper.num_classes)?;
    let mut printer = EpochPrinter { out: io::stdout().lock(), error: None };
    let model = s.train(&docs, task, &mut printer)?;
    if let Some(e) = printer.error {
        return Err(e.into());
    }
    at_path(&args.model, save_model(&model, &args.model))?;
    Ok(())
}

fn write_row(out: &mut impl Write, index: usize, prediction: Option<&Prediction>, theta: &[f64]) -> io::Result<()> {
    write!(out, "{index}")?;
    for v in prediction.map_or(&[][..], |p| p.values()).iter().chain(theta) {
        write!(out, "\t{v}")?;
    }
    writeln!(out)
}

fn run_infer(args: InferArgs) -> CmdResult {
    let s = settings(&args.common, None, None)?;
    let model = at_path(&args.model, load_model(&args.model))?;
    let docs: Vec<SparseBow> = at_path(&args.corpus, load_vectorized(&args.corpus, Some(model.vocab_size())))?.into_iter().map(|d| d.bow).collect();
    let mda = s.train_config()?.mda;
    let results = with_pool(s.train.threads, || infer_corpus(&model, &docs, &mda))??;
    let mut out = BufWriter::new(io::stdout().lock());
    for (i, r) in results.iter().enumerate() {
        write_row(&mut out, i, r.prediction.as_ref(), &r.theta)?;
    }
    out.flush()?;
    Ok(())
}

fn run_eval(args: EvalArgs) -> CmdResult {
    let mut s = settings(&args.common, Some(&args.hyper), Some(&args.train))?;
    let metric = Metric::parse(&args.metric, args.mass)?;
    let report = match (args.folds, &args.model) {
        (Some(k), _) => {
            let (docs, task) = load_labeled(&args.corpus, args.vocab_size, &s, args.hyper.num_classes)?;
            if !task.is_supervised() {
                return Err(usage("--folds needs a supervised task"));
            }
            let hyper = s.hyperparams(task)?;
            metric.check(task)?;
            cross_validate(&docs, k, &s.train_config()?, &hyper, metric)?
        }
        (None, Some(path)) => {
            let model = at_path(path, load_model(path))?;
            let task = model.hyper.task;
            metric.check(task)?;
            s.task = task.name().into();
            let num_classes = match task {
                Task::Classification { num_classes } => Some(num_classes),
                _ => None,
            };
            let mda = s.train_config()?.mda;
            if let Metric::Sparsity(mass) = metric {
                let raw = at_path(&args.corpus, load_vectorized(&args.corpus, Some(model.vocab_size())))?;
                let bows: Vec<SparseBow> = raw.into_iter().map(|d| d.bow).collect();
                let results = with_pool(s.train.threads, || infer_corpus(&model, &bows, &mda))??;
                let thetas: Vec<Vec<f64>> = results.into_iter().map(|r| r.theta).collect();
                MetricReport { metric: metric.name().into(), value: topic_sparsity(&thetas, mass)?, n: thetas.len(), folds: Vec::new() }
            } else {
                let (docs, _) = load_labeled(&args.corpus, Some(model.vocab_size()), &s, num_classes)?;
                with_pool(s.train.threads, || evaluate(&model, &docs, metric, &mda))??
            }
        }
        (None, None) => return Err(usage("eval needs --model or --folds")),
    };
    let mut out = io::stdout().lock();
    report.write_tsv(&mut out)?;
    Ok(())
}

fn run_gen(args: GenArgs) -> CmdResult {
    let num_outputs = match args.task.as_str() {
        "classification" => args.num_classes,
        _ => 1,
    };
    let task = Task::from_name(&args.task, num_outputs)?;
    let mut spec = SynthSpec::new(args.num_docs, args.vocab_size, args.num_topics, args.words_per_doc, task, args.seed);
    spec.alpha = args.dirichlet_alpha;
    spec.beta = args.dirichlet_beta;
    spec.gamma = args.gamma;
    let corpus = sample_corpus(&spec)?;
    let docs = if task.is_supervised() {
        corpus.labeled()
    } else {
        corpus.docs.iter().map(|bow| LabeledDoc { bow: bow.clone(), label: Label::Class(0) }).collect()
    };
    at_path(&args.output, save_vectorized(&docs, &args.output))?;
    let hyper = Settings {
        num_topics: args.num_topics,
        dirichlet_alpha: args.dirichlet_alpha,
        dirichlet_beta: args.dirichlet_beta,
        gamma: args.gamma,
        ..Settings::default()
    }
    .hyperparams(task)?;
    at_path(&args.truth, save_model(&Model::new(hyper, corpus.phi, corpus.u)?, &args.truth))?;
    log::info!("wrote {} documents to {}", docs.len(), args.output.display());
    Ok(())
}

fn run_gradcheck_cmd(args: GradcheckArgs) -> CmdResult {
    let cfg = GradcheckConfig {
        seed: args.seed,
        h: args.h,
        tolerance: args.tolerance,
        flip_sign: args.inject_sign_flip,
        ..GradcheckConfig::default()
    };
    let report = run_gradcheck(&cfg)?;
    let mut out = io::stdout().lock();
    writeln!(out, "instances\t{}", report.instances)?;
    writeln!(out, "coordinates\t{}", report.coordinates)?;
    writeln!(out, "failures\t{}", report.failures)?;
    writeln!(out, "max_relative_error\t{:e}", report.max_relative_error())?;
    if let Some(w) = &report.worst {
        writeln!(
            out,
            "worst\t{}\tinstance {}\tcoordinate ({}, {})\tanalytic {:e}\tnumeric {:e}",
            w.gradient, w.instance, w.coordinate.0, w.coordinate.1, w.analytic, w.numeric
        )?;
    }
    if report.passed() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_NUMERICAL,
            message: format!("{} coordinates exceed relative error {:e}", report.failures, report.tolerance),
        })
    }
}
