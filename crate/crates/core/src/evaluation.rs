//! Held-out metrics (predictive R², AUC), the dominant-topic sparsity
//! diagnostic, corpus-level prediction and k-fold cross-validation.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;

use crate::corpus::{kfold_split, Label, LabeledDoc, SparseBow};
use crate::error::{Error, Result};
use crate::inference::{infer_theta, predict, MdaOptions, Prediction};
use crate::model::{Hyperparams, Model, Task};
use crate::training::{train_supervised, TrainConfig};

/// `1 - sum (y_o - y)^2 / sum (y_o - mean(y_o))^2`.
pub fn predictive_r2(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch(format!("{} targets, {} predictions", y_true.len(), y_pred.len())));
    }
    if y_true.len() < 2 {
        return Err(Error::Invalid("predictive R2 needs at least two documents".into()));
    }
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let sst: f64 = y_true.iter().map(|y| (y - mean) * (y - mean)).sum();
    if sst == 0.0 {
        return Err(Error::DegenerateTruth);
    }
    let sse: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p) * (y - p)).sum();
    Ok(1.0 - sse / sst)
}

/// Area under the ROC curve as the Mann-Whitney statistic; tied scores
/// share their average rank, which counts tied pairs as one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::DimensionMismatch(format!("{} scores, {} labels", scores.len(), labels.len())));
    }
    if let Some(bad) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::NonFinite(format!("score {bad}")));
    }
    let positives = labels.iter().filter(|&&l| l).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::OneClassOnly);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j+1 share their mean
        let mean_rank = (i + j + 2) as f64 / 2.0;
        rank_sum += mean_rank * order[i..=j].iter().filter(|&&d| labels[d]).count() as f64;
        i = j + 1;
    }
    let (p, n) = (positives as f64, negatives as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Mean over documents of the fraction of topics needed to cover `mass`
/// of each topic distribution.
pub fn topic_sparsity(thetas: &[Vec<f64>], mass: f64) -> Result<f64> {
    if thetas.is_empty() {
        return Err(Error::Invalid("topic sparsity of an empty set".into()));
    }
    if !(mass > 0.0 && mass < 1.0) {
        return Err(Error::Invalid(format!("mass must lie in (0, 1), got {mass}")));
    }
    let mut total = 0.0;
    for theta in thetas {
        let mut sorted = theta.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let mut covered = 0.0;
        let mut needed = sorted.len();
        for (m, p) in sorted.iter().enumerate() {
            covered += p;
            // rounding in the running sum must not demand an extra topic
            if covered >= mass - 1e-12 {
                needed = m + 1;
                break;
            }
        }
        total += needed as f64 / theta.len() as f64;
    }
    Ok(total / thetas.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    PredictiveR2,
    Auc,
    /// Dominant-topic sparsity at the given mass.
    Sparsity(f64),
}

impl Metric {
    pub fn parse(name: &str, mass: f64) -> Result<Metric> {
        match name {
            "pr2" => Ok(Metric::PredictiveR2),
            "auc" => Ok(Metric::Auc),
            "sparsity" => Ok(Metric::Sparsity(mass)),
            other => Err(Error::Invalid(format!("unknown metric {other:?} (expected pr2, auc or sparsity)"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Metric::PredictiveR2 => "pr2",
            Metric::Auc => "auc",
            Metric::Sparsity(_) => "sparsity",
        }
    }

    /// Rejects metric/task combinations that have no meaning.
    pub fn check(&self, task: Task) -> Result<()> {
        match (self, task) {
            (Metric::PredictiveR2, Task::Regression { output_dim: 1 }) => Ok(()),
            (Metric::Auc, Task::Classification { num_classes: 2 }) => Ok(()),
            (Metric::Sparsity(_), _) => Ok(()),
            (m, t) => Err(Error::Invalid(format!("metric {} is not defined for task {t}", m.name()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub metric: String,
    pub value: f64,
    pub n: usize,
    /// Per-fold `(value, n)` for cross-validation.
    pub folds: Vec<(f64, usize)>,
}

impl MetricReport {
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (i, (value, n)) in self.folds.iter().enumerate() {
            writeln!(out, "{}_fold{i}\t{value:?}\t{n}", self.metric)?;
        }
        writeln!(out, "{}\t{:?}\t{}", self.metric, self.value, self.n)
    }
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut buf = Vec::new();
        self.write_tsv(&mut buf).map_err(|_| fmt::Error)?;
        f.write_str(&String::from_utf8_lossy(&buf))
    }
}

/// `theta_L` and the prediction (if the model is supervised) for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct DocResult {
    pub theta: Vec<f64>,
    pub prediction: Option<Prediction>,
}

/// Runs inference (with the model's unroll depth) and the prediction head on
/// every document. Results are in input order regardless of threading.
pub fn infer_corpus(model: &Model, docs: &[SparseBow], mda: &MdaOptions) -> Result<Vec<DocResult>> {
    let v = model.vocab_size();
    if let Some(doc) = docs.iter().find(|d| d.vocab_size() > v) {
        return Err(Error::DimensionMismatch(format!("document vocabulary {} exceeds model vocabulary {v}", doc.vocab_size())));
    }
    let opts = MdaOptions { unroll_depth: model.hyper.unroll_depth, ..mda.clone() };
    docs.par_iter()
        .map(|doc| {
            let traj = infer_theta(doc, &model.phi, model.hyper.dirichlet_alpha, &opts)?;
            let theta = traj.theta().to_vec();
            let prediction = match &model.u {
                Some(u) => Some(predict(&theta, u, model.hyper.gamma, model.hyper.task)?),
                None => None,
            };
            Ok(DocResult { theta, prediction })
        })
        .collect()
}

fn score(metric: Metric, results: &[DocResult], labels: &[&Label]) -> Result<f64> {
    match metric {
        Metric::PredictiveR2 => {
            let mut truth = Vec::with_capacity(labels.len());
            for label in labels {
                match label {
                    Label::Real(y) => truth.push(y[0]),
                    Label::Class(_) => return Err(Error::Invalid("pr2 needs real-valued labels".into())),
                }
            }
            let pred: Vec<f64> = results.iter().map(|r| r.prediction.as_ref().map_or(f64::NAN, |p| p.values()[0])).collect();
            predictive_r2(&truth, &pred)
        }
        Metric::Auc => {
            let mut positive = Vec::with_capacity(labels.len());
            for label in labels {
                match label {
                    Label::Class(c) => positive.push(*c == 1),
                    Label::Real(_) => return Err(Error::Invalid("auc needs class labels".into())),
                }
            }
            let scores: Vec<f64> = results.iter().map(|r| r.prediction.as_ref().map_or(f64::NAN, |p| p.values()[1])).collect();
            auc(&scores, &positive)
        }
        Metric::Sparsity(mass) => {
            let thetas: Vec<Vec<f64>> = results.iter().map(|r| r.theta.clone()).collect();
            topic_sparsity(&thetas, mass)
        }
    }
}

/// Scores a trained model on labeled documents.
pub fn evaluate(model: &Model, docs: &[LabeledDoc], metric: Metric, mda: &MdaOptions) -> Result<MetricReport> {
    metric.check(model.hyper.task)?;
    if docs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let bows: Vec<SparseBow> = docs.iter().map(|d| d.bow.clone()).collect();
    let results = infer_corpus(model, &bows, mda)?;
    let labels: Vec<&Label> = docs.iter().map(|d| &d.label).collect();
    Ok(MetricReport { metric: metric.name().into(), value: score(metric, &results, &labels)?, n: docs.len(), folds: Vec::new() })
}

/// Trains on k-1 folds and scores the held-out fold, k times. The reported
/// value is the mean over folds; predictive R² uses each fold's own mean.
pub fn cross_validate(docs: &[LabeledDoc], k: usize, config: &TrainConfig, hyper: &Hyperparams, metric: Metric) -> Result<MetricReport> {
    metric.check(hyper.task)?;
    let folds = kfold_split(docs.len(), k, config.seed)?;
    let mut per_fold = Vec::with_capacity(k);
    for (i, held_out) in folds.iter().enumerate() {
        let mut is_held = vec![false; docs.len()];
        held_out.iter().for_each(|&d| is_held[d] = true);
        let train: Vec<LabeledDoc> = docs.iter().zip(&is_held).filter(|(_, &h)| !h).map(|(d, _)| d.clone()).collect();
        let test: Vec<LabeledDoc> = held_out.iter().map(|&d| docs[d].clone()).collect();
        let model = train_supervised(&train, config, hyper)?;
        let report = evaluate(&model, &test, metric, &config.mda)?;
        log::info!("fold {i}: {} = {}", report.metric, report.value);
        per_fold.push((report.value, report.n));
    }
    let mean = per_fold.iter().map(|(v, _)| v).sum::<f64>() / k as f64;
    Ok(MetricReport { metric: metric.name().into(), value: mean, n: docs.len(), folds: per_fold })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn r2_examples() {
        assert_eq!(predictive_r2(&[1.0, 2.0, 4.0], &[1.0, 2.0, 4.0]).unwrap(), 1.0);
        assert!(predictive_r2(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap().abs() < 1e-15);
        assert!((predictive_r2(&[0.0, 1.0, 2.0], &[0.0, 0.0, 0.0]).unwrap() + 1.5).abs() < 1e-15);
        assert!(matches!(predictive_r2(&[2.0, 2.0], &[1.0, 3.0]), Err(Error::DegenerateTruth)));
        assert!(predictive_r2(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(auc(&[0.5; 4], &[false, true, false, true]).unwrap(), 0.5);
        assert_eq!(auc(&[0.9, 0.8, 0.3], &[true, false, true]).unwrap(), 0.5);
        assert!(matches!(auc(&[0.1, 0.2], &[true, true]), Err(Error::OneClassOnly)));
    }

    #[test]
    fn auc_matches_pair_count() {
        let scores = [0.3, 0.3, 0.7, 0.1, 0.7, 0.5, 0.3];
        let labels = [true, false, true, false, false, true, true];
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    pairs += 1.0;
                    wins += if scores[i] > scores[j] { 1.0 } else if scores[i] == scores[j] { 0.5 } else { 0.0 };
                }
            }
        }
        assert!((auc(&scores, &labels).unwrap() - wins / pairs).abs() < 1e-15);
    }

    #[test]
    fn sparsity_examples() {
        assert!((topic_sparsity(&[vec![1.0, 0.0, 0.0]], 0.9).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((topic_sparsity(&[vec![0.1; 10]], 0.9).unwrap() - 0.9).abs() < 1e-15);
        assert!((topic_sparsity(&[vec![0.5, 0.4, 0.1]], 0.9).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        let mean = topic_sparsity(&[vec![1.0, 0.0], vec![0.5, 0.5]], 0.9).unwrap();
        assert!((mean - 0.75).abs() < 1e-15);
        assert!(topic_sparsity(&[], 0.9).is_err());
        assert!(topic_sparsity(&[vec![1.0]], 1.0).is_err());
    }

    #[test]
    fn metric_task_guard() {
        assert!(Metric::Auc.check(Task::Regression { output_dim: 1 }).is_err());
        assert!(Metric::PredictiveR2.check(Task::Classification { num_classes: 2 }).is_err());
        assert!(Metric::Sparsity(0.9).check(Task::Unsupervised).is_ok());
        assert!(Metric::parse("rmse", 0.9).is_err());
    }

    #[test]
    fn report_tsv() {
        let report = MetricReport { metric: "pr2".into(), value: 1.0, n: 3, folds: vec![(0.5, 2), (0.25, 1)] };
        assert_eq!(report.to_string(), "pr2_fold0\t0.5\t2\npr2_fold1\t0.25\t1\npr2\t1.0\t3\n");
    }

    proptest! {
        #[test]
        fn auc_is_rank_invariant(scores in prop::collection::vec(-5.0f64..5.0, 2..40), seed in any::<u64>(), a in 0.1f64..10.0, b in -5.0f64..5.0) {
            let labels: Vec<bool> = (0..scores.len()).map(|i| (seed >> (i % 64)) & 1 == 1).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let base = auc(&scores, &labels).unwrap();
            let affine: Vec<f64> = scores.iter().map(|s| a * s + b).collect();
            let exp: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
            prop_assert_eq!(auc(&affine, &labels).unwrap(), base);
            prop_assert_eq!(auc(&exp, &labels).unwrap(), base);
        }

        #[test]
        fn r2_is_shift_invariant(truth in prop::collection::vec(-10.0f64..10.0, 2..30), noise in prop::collection::vec(-1.0f64..1.0, 30), shift in -100.0f64..100.0) {
            prop_assume!(truth.iter().any(|&y| (y - truth[0]).abs() > 1e-3));
            let pred: Vec<f64> = truth.iter().zip(&noise).map(|(y, e)| y + e).collect();
            let base = predictive_r2(&truth, &pred).unwrap();
            let t2: Vec<f64> = truth.iter().map(|y| y + shift).collect();
            let p2: Vec<f64> = pred.iter().map(|y| y + shift).collect();
            prop_assert!((predictive_r2(&t2, &p2).unwrap() - base).abs() <= 1e-9);
        }

        #[test]
        fn sparsity_is_monotone_in_mass(raw in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 5), 1..10), m1 in 0.05f64..0.95, m2 in 0.05f64..0.95) {
            let thetas: Vec<Vec<f64>> = raw.iter().map(|r| { let s: f64 = r.iter().sum(); r.iter().map(|x| x / s).collect() }).collect();
            let (lo, hi) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
            prop_assert!(topic_sparsity(&thetas, hi).unwrap() >= topic_sparsity(&thetas, lo).unwrap());
        }
    }
}
