//! Flat `key = value` run configuration. Keys are the `Hyperparams` and
//! `TrainConfig` field names; inference keys (`initial_step`, `shrink`,
//! `line_search`, `max_backtracks`, `divergence`) are accepted at top level.

use std::path::Path;
use std::str::FromStr;

use crate::corpus::{attach_labels, count_classes, load_vectorized, Label, LabeledDoc, SparseBow};
use crate::error::{Error, Result};
use crate::inference::Divergence;
use crate::model::{Hyperparams, Model, Task};
use crate::training::{train_supervised_observed, train_unsupervised_observed, TrainConfig, TrainObserver};

/// Everything a training run needs apart from the corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub num_topics: usize,
    pub dirichlet_alpha: f64,
    pub dirichlet_beta: f64,
    pub gamma: f64,
    pub unroll_depth: usize,
    /// `regression`, `classification` or `unsup`; the output count comes
    /// from the corpus.
    pub task: String,
    pub train: TrainConfig,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            num_topics: 10,
            dirichlet_alpha: 1.001,
            dirichlet_beta: 1.0001,
            gamma: 1.0,
            unroll_depth: 10,
            task: "regression".into(),
            train: TrainConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Invalid(format!("bad value {value:?} for {key}")))
}

pub fn parse_divergence(value: &str) -> Result<Divergence> {
    match value {
        "bregman_kl" | "kl" => Ok(Divergence::BregmanKl),
        "squared_one_norm" | "l1" => Ok(Divergence::SquaredOneNorm),
        other => Err(Error::Invalid(format!("unknown divergence {other:?}"))),
    }
}

impl Settings {
    /// Sets one key from its text value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        match key {
            "num_topics" => self.num_topics = parse(key, value)?,
            "dirichlet_alpha" => self.dirichlet_alpha = parse(key, value)?,
            "dirichlet_beta" => self.dirichlet_beta = parse(key, value)?,
            "gamma" => self.gamma = parse(key, value)?,
            "unroll_depth" => self.unroll_depth = parse(key, value)?,
            "task" => {
                Task::from_name(value, 1)?;
                self.task = value.to_owned();
            }
            "minibatch_size" => t.minibatch_size = parse(key, value)?,
            "epochs" => t.epochs = parse(key, value)?,
            "mu_u" => t.mu_u = parse(key, value)?,
            "mu0" => t.mu0 = parse(key, value)?,
            "eps" => t.eps = parse(key, value)?,
            "seed" => t.seed = parse(key, value)?,
            "running_average_start_epoch" => t.running_average_start_epoch = Some(parse(key, value)?),
            "deterministic" => t.deterministic = parse(key, value)?,
            "threads" => t.threads = parse(key, value)?,
            "initial_step" => t.mda.initial_step = parse(key, value)?,
            "shrink" => t.mda.shrink = parse(key, value)?,
            "line_search" => t.mda.line_search = parse(key, value)?,
            "max_backtracks" => t.mda.max_backtracks = parse(key, value)?,
            "divergence" => t.mda.divergence = parse_divergence(value)?,
            other => return Err(Error::Invalid(format!("unknown config key {other:?}"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`. Blank lines and `#`
    /// comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse { line: i + 1, msg: format!("expected key = value, found {line:?}") })?;
            let value = value.trim().trim_matches('"');
            self.set(key.trim(), value).map_err(|e| Error::Parse { line: i + 1, msg: e.to_string() })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        self.apply_text(&std::fs::read_to_string(path)?)
    }

    pub fn task(&self, num_outputs: usize) -> Result<Task> {
        Task::from_name(&self.task, num_outputs)
    }

    pub fn hyperparams(&self, task: Task) -> Result<Hyperparams> {
        Hyperparams::new(self.num_topics, self.dirichlet_alpha, self.dirichlet_beta, self.gamma, self.unroll_depth, task)
    }

    /// Training options with the unroll depth taken from the hyperparameters.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut cfg = self.train.clone();
        cfg.mda.unroll_depth = self.unroll_depth;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a vectorized corpus for the configured task. The class count
    /// defaults to one past the largest class label. Unsupervised corpora
    /// keep a placeholder label that is never read.
    pub fn load_corpus(&self, path: impl AsRef<Path>, vocab_size: Option<usize>, num_classes: Option<usize>) -> Result<(Vec<LabeledDoc>, Task)> {
        let raw = load_vectorized(path, vocab_size)?;
        if raw.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        let task = match self.task(1)? {
            Task::Classification { .. } => Task::Classification { num_classes: num_classes.map_or_else(|| count_classes(&raw), Ok)? },
            t => t,
        };
        if !task.is_supervised() {
            return Ok((raw.into_iter().map(|d| LabeledDoc { bow: d.bow, label: Label::Class(0) }).collect(), task));
        }
        Ok((attach_labels(raw, task)?, task))
    }

    /// Trains a supervised or unsupervised model, depending on `task`.
    pub fn train(&self, docs: &[LabeledDoc], task: Task, observer: &mut dyn TrainObserver) -> Result<Model> {
        let hyper = self.hyperparams(task)?;
        let cfg = self.train_config()?;
        log::info!("training on {} documents, {} topics, task {task}", docs.len(), hyper.num_topics);
        if task.is_supervised() {
            return Ok(train_supervised_observed(docs, &cfg, &hyper, observer)?.0);
        }
        let bows: Vec<SparseBow> = docs.iter().map(|d| d.bow.clone()).collect();
        let (phi, _) = train_unsupervised_observed(&bows, &cfg, &hyper, observer)?;
        Model::new(hyper, phi, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file() {
        let mut s = Settings::default();
        s.apply_text("# run\nnum_topics = 5\n\nmu0=0.1  # faster\ntask = classification\ndeterministic = true\ndivergence = squared_one_norm\n")
            .unwrap();
        assert_eq!(s.num_topics, 5);
        assert_eq!(s.train.mu0, 0.1);
        assert!(s.train.deterministic);
        assert_eq!(s.train.mda.divergence, Divergence::SquaredOneNorm);
        assert_eq!(s.task(3).unwrap(), Task::Classification { num_classes: 3 });
    }

    #[test]
    fn rejects_unknown_and_malformed() {
        let mut s = Settings::default();
        assert!(matches!(s.apply_text("topics = 5"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(s.apply_text("\nepochs"), Err(Error::Parse { line: 2, .. })));
        assert!(s.apply_text("epochs = many").is_err());
        assert!(s.apply_text("task = ranking").is_err());
    }

    #[test]
    fn later_values_win() {
        let mut s = Settings::default();
        s.apply_text("epochs = 3\nepochs = 7").unwrap();
        s.set("epochs", "9").unwrap();
        assert_eq!(s.train.epochs, 9);
    }
}
