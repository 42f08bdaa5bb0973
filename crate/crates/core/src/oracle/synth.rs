//! Sampler for the generative model: topic proportions from a Dirichlet,
//! explicit per-word topic assignments, words from the assigned topic, and
//! labels from the Gaussian or softmax output model.

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{Label, LabeledDoc, SparseBow};
use crate::error::{Error, Result};
use crate::inference::softmax;
use crate::model::{sample_dirichlet, OutputParams, Task, TopicMatrix};

#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub num_docs: usize,
    pub vocab_size: usize,
    pub num_topics: usize,
    pub words_per_doc: usize,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub task: Task,
    pub seed: u64,
    /// Fixed ground-truth topics; drawn from `Dir(beta)` when absent.
    pub phi: Option<TopicMatrix>,
    /// Fixed ground-truth output weights; standard normal when absent.
    pub u: Option<OutputParams>,
}

impl SynthSpec {
    pub fn new(num_docs: usize, vocab_size: usize, num_topics: usize, words_per_doc: usize, task: Task, seed: u64) -> Self {
        SynthSpec {
            num_docs,
            vocab_size,
            num_topics,
            words_per_doc,
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            task,
            seed,
            phi: None,
            u: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_docs == 0 || self.vocab_size == 0 || self.num_topics == 0 || self.words_per_doc == 0 {
            return Err(Error::Invalid("synthetic corpus dimensions must be positive".into()));
        }
        for (name, value) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Invalid(format!("{name} must be positive, got {value}")));
            }
        }
        if let Some(phi) = &self.phi {
            let (v, k) = phi.view().dim();
            if v != self.vocab_size || k != self.num_topics {
                return Err(Error::DimensionMismatch(format!("fixed topics are {v}x{k}")));
            }
        }
        if let Some(u) = &self.u {
            if u.num_topics() != self.num_topics || u.num_outputs() != self.task.num_outputs() {
                return Err(Error::DimensionMismatch("fixed output weights do not match the task".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub docs: Vec<SparseBow>,
    /// Empty for the unsupervised task.
    pub labels: Vec<Label>,
    pub thetas: Vec<Vec<f64>>,
    pub phi: TopicMatrix,
    pub u: Option<OutputParams>,
}

impl SynthCorpus {
    pub fn labeled(&self) -> Vec<LabeledDoc> {
        self.docs
            .iter()
            .zip(&self.labels)
            .map(|(bow, label)| LabeledDoc { bow: bow.clone(), label: label.clone() })
            .collect()
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Draws a corpus. Global parameters come from stream 0 and document `d`
/// from stream `d + 1`, so each document is independent of the others.
pub fn sample_corpus(spec: &SynthSpec) -> Result<SynthCorpus> {
    spec.validate()?;
    let (v, k) = (spec.vocab_size, spec.num_topics);
    let mut global = stream(spec.seed, 0);
    let phi = match &spec.phi {
        Some(phi) => phi.clone(),
        None => {
            TopicMatrix::sample(&mut global, v, k, spec.beta)?
        }
    };
    let u = match (&spec.u, spec.task) {
        (_, Task::Unsupervised) => None,
        (Some(u), _) => Some(u.clone()),
        (None, task) => {
            let normal = Normal::new(0.0, 1.0).unwrap();
            Some(OutputParams::new(Array2::from_shape_fn((task.num_outputs(), k), |_| normal.sample(&mut global)))?)
        }
    };

    let topic_words: Vec<WeightedIndex<f64>> = (0..k)
        .map(|j| WeightedIndex::new(phi.column(j).iter().copied()).map_err(|e| Error::Invalid(e.to_string())))
        .collect::<Result<_>>()?;
    let noise = Normal::new(0.0, 1.0 / spec.gamma.sqrt()).map_err(|e| Error::Invalid(e.to_string()))?;

    let mut docs = Vec::with_capacity(spec.num_docs);
    let mut labels = Vec::new();
    let mut thetas = Vec::with_capacity(spec.num_docs);
    for d in 0..spec.num_docs {
        let mut rng = stream(spec.seed, d as u64 + 1);
        let theta = sample_dirichlet(&mut rng, spec.alpha, k);
        let topics = WeightedIndex::new(theta.iter().copied()).map_err(|e| Error::Invalid(e.to_string()))?;
        let mut counts = vec![0u32; v];
        for _ in 0..spec.words_per_doc {
            let z = topics.sample(&mut rng);
            counts[topic_words[z].sample(&mut rng)] += 1;
        }
        docs.push(SparseBow::from_dense(&counts));
        if let Some(u) = &u {
            let scores: Vec<f64> = u.weights.rows().into_iter().map(|row| row.iter().zip(&theta).map(|(a, b)| a * b).sum()).collect();
            labels.push(match spec.task {
                Task::Classification { .. } => {
                    let probs = softmax(&scores.iter().map(|s| spec.gamma * s).collect::<Vec<_>>());
                    let dist = WeightedIndex::new(probs).map_err(|e| Error::Invalid(e.to_string()))?;
                    Label::Class(dist.sample(&mut rng))
                }
                _ => Label::Real(scores.into_iter().map(|s| s + noise.sample(&mut rng)).collect()),
            });
        }
        thetas.push(theta);
    }
    Ok(SynthCorpus { docs, labels, thetas, phi, u })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TopicColumns;
    use ndarray::array;

    #[test]
    fn one_hot_truth_repeats_a_single_word() {
        let phi = TopicMatrix::new(array![[1.0 - 1e-300, 0.5], [1e-300, 0.5]]).unwrap();
        let mut spec = SynthSpec::new(5, 2, 2, 50, Task::Unsupervised, 1);
        spec.alpha = 1e-3;
        spec.phi = Some(phi);
        let corpus = sample_corpus(&spec).unwrap();
        let mut hits = 0;
        for (doc, theta) in corpus.docs.iter().zip(&corpus.thetas) {
            if theta[0] == 1.0 {
                assert_eq!(doc.ids(), &[0]);
                assert_eq!(doc.total_count(), 50);
                hits += 1;
            }
        }
        assert!(hits > 0);
        assert!(corpus.labels.is_empty() && corpus.u.is_none());
    }

    #[test]
    fn same_seed_same_corpus() {
        let mut spec = SynthSpec::new(20, 30, 4, 40, Task::Classification { num_classes: 3 }, 42);
        spec.beta = 0.2;
        let a = sample_corpus(&spec).unwrap();
        let b = sample_corpus(&spec).unwrap();
        assert_eq!(a.docs, b.docs);
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.thetas, b.thetas);
        spec.seed = 43;
        assert_ne!(sample_corpus(&spec).unwrap().docs, a.docs);
    }

    #[test]
    fn documents_do_not_depend_on_corpus_size() {
        let small = sample_corpus(&SynthSpec::new(3, 10, 2, 20, Task::Unsupervised, 5)).unwrap();
        let large = sample_corpus(&SynthSpec::new(8, 10, 2, 20, Task::Unsupervised, 5)).unwrap();
        assert_eq!(small.docs[..], large.docs[..3]);
    }

    #[test]
    fn word_frequencies_follow_the_mixture() {
        let n = 1_000_000;
        let spec = SynthSpec::new(1, 8, 3, n, Task::Unsupervised, 11);
        let corpus = sample_corpus(&spec).unwrap();
        let theta = &corpus.thetas[0];
        let dense = corpus.docs[0].to_dense();
        for (v, &c) in dense.iter().enumerate() {
            let expected: f64 = (0..3).map(|j| corpus.phi.entry(v, j) * theta[j]).sum();
            assert!((c / n as f64 - expected).abs() < 1e-2);
        }
    }

    #[test]
    fn regression_noise_is_centered() {
        let mut spec = SynthSpec::new(4000, 10, 3, 5, Task::Regression { output_dim: 1 }, 3);
        spec.gamma = 4.0;
        let corpus = sample_corpus(&spec).unwrap();
        let u = corpus.u.as_ref().unwrap();
        let residuals: Vec<f64> = corpus
            .labels
            .iter()
            .zip(&corpus.thetas)
            .map(|(label, theta)| {
                let Label::Real(y) = label else { unreachable!() };
                y[0] - u.weights.row(0).iter().zip(theta).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        let mean = residuals.iter().sum::<f64>() / residuals.len() as f64;
        let sigma = 0.5;
        assert!(mean.abs() < 3.0 * sigma / (residuals.len() as f64).sqrt());
    }

    #[test]
    fn dirichlet_draws_are_on_the_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for conc in [0.05, 1.0, 30.0] {
            let p = sample_dirichlet(&mut rng, conc, 7);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&x| x >= 0.0));
        }
    }

    #[test]
    fn rejects_mismatched_truth() {
        let mut spec = SynthSpec::new(2, 3, 2, 5, Task::Regression { output_dim: 1 }, 0);
        spec.u = Some(OutputParams::zeros(1, 3));
        assert!(matches!(sample_corpus(&spec), Err(Error::DimensionMismatch(_))));
    }
}
