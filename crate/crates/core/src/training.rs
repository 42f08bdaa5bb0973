//! Mini-batch training: SGD on the output weights, stochastic mirror descent
//! with per-column adaptive rates on the topic matrix, and running averages
//! of both. The unsupervised loop shares the same machinery.

use ndarray::{Array2, ShapeBuilder};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::{LabeledDoc, SparseBow};
use crate::error::{Error, Result};
use crate::gradients::{backprop_gathered, grad_u, prior_grad_phi, prior_loss, supervised_loss, unsup_gathered, SparsePhiGrad};
use crate::inference::{infer_gathered, multiplicative_update, predict, MdaOptions, SupportRows, ThetaTrajectory};
use crate::model::{normalize_in_place, Hyperparams, Model, OutputParams, Task, TopicColumns, TopicMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub minibatch_size: usize,
    pub epochs: usize,
    /// SGD rate for `U`.
    pub mu_u: f64,
    /// Base rate of the adaptive SMD step on `Phi`.
    pub mu0: f64,
    pub eps: f64,
    /// Inference settings; the unroll depth is taken from the hyperparameters.
    pub mda: MdaOptions,
    pub seed: u64,
    /// First epoch (0-based) whose updates enter the running average.
    /// `None` means `epochs / 2`.
    pub running_average_start_epoch: Option<usize>,
    pub deterministic: bool,
    /// Worker threads for per-document gradients; 0 uses the rayon default.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            minibatch_size: 100,
            epochs: 20,
            mu_u: 0.01,
            mu0: 0.01,
            eps: 1e-6,
            mda: MdaOptions::default(),
            seed: 0,
            running_average_start_epoch: None,
            deterministic: false,
            threads: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.minibatch_size == 0 || self.epochs == 0 {
            return Err(Error::Invalid("minibatch_size and epochs must be positive".into()));
        }
        for (name, value) in [("mu_u", self.mu_u), ("mu0", self.mu0), ("eps", self.eps)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::Invalid(format!("{name} must be positive, got {value}")));
            }
        }
        self.mda.validate()
    }

    pub fn average_start(&self) -> usize {
        self.running_average_start_epoch.unwrap_or(self.epochs / 2)
    }
}

/// Accumulated squared gradient norms per topic column and the update count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptState {
    pub sq_norms: Vec<f64>,
    pub t: u64,
}

impl AdaptState {
    pub fn new(num_topics: usize) -> Self {
        AdaptState { sq_norms: vec![0.0; num_topics], t: 0 }
    }

    /// Adds one mini-batch gradient (`V x K`) and advances `t`.
    pub fn accumulate(&mut self, grad: &Array2<f64>) {
        for (acc, col) in self.sq_norms.iter_mut().zip(grad.columns()) {
            *acc += col.iter().map(|g| g * g).sum::<f64>();
        }
        self.t += 1;
    }
}

/// `mu0 / (sqrt(sum_tau ||dphi_j||^2 / (t V)) + eps)`.
pub fn adaptive_lr(state: &AdaptState, j: usize, mu0: f64, eps: f64, vocab_size: usize) -> f64 {
    if state.t == 0 {
        return mu0 / eps;
    }
    let mean = state.sq_norms[j] / (state.t as f64 * vocab_size as f64);
    mu0 / (mean.sqrt() + eps)
}

/// `phi_j * exp(-mu * dphi_j)`, renormalized. Any entry that underflows to
/// zero is reported as a numerical failure, since topic entries must stay
/// strictly positive.
pub fn smd_update_column(phi_j: &[f64], delta: &[f64], mu: f64) -> Result<Vec<f64>> {
    if phi_j.len() != delta.len() {
        return Err(Error::DimensionMismatch(format!("column has {} entries, gradient {}", phi_j.len(), delta.len())));
    }
    let neg: Vec<f64> = delta.iter().map(|d| -d).collect();
    let mut next = multiplicative_update(phi_j, &neg, mu)?;
    if next.iter().any(|&p| p <= f64::MIN_POSITIVE) {
        return Err(Error::NonFinite(format!("topic entry underflowed in SMD update (rate {mu:e})")));
    }
    normalize_in_place(&mut next)?;
    Ok(next)
}

/// `avg <- ((t - 1) avg + current) / t`.
pub fn running_average(avg: &mut [f64], current: &[f64], t: u64) {
    let w = 1.0 / t as f64;
    for (a, &c) in avg.iter_mut().zip(current) {
        *a = (1.0 - w) * *a + w * c;
    }
}

/// Summary of one mini-batch, passed to observers after the update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStats {
    pub epoch: usize,
    pub batch: usize,
    /// Largest `|sum(theta) - 1|` over all iterates of all documents.
    pub theta_sum_error: f64,
    /// Smallest entry over all iterates of all documents.
    pub theta_min: f64,
}

/// Hooks into the training loop. All methods default to no-ops.
pub trait TrainObserver {
    /// After the parameter update of a mini-batch. `averaged` is the running
    /// average once it has started.
    fn on_batch(&mut self, _stats: &BatchStats, _phi: &TopicMatrix, _averaged: Option<&TopicMatrix>) {}
    /// After each epoch with the model that would be returned at this point.
    fn on_epoch(&mut self, _epoch: usize, _mean_loss: f64, _phi: &TopicMatrix, _u: Option<&OutputParams>) {}
}

pub struct NoopObserver;

impl TrainObserver for NoopObserver {}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    /// Mean per-document loss of each epoch plus the per-document share of the prior.
    pub epoch_losses: Vec<f64>,
    pub updates: u64,
    pub exhausted_line_searches: usize,
}

struct DocGrad {
    phi: SparsePhiGrad,
    u: Option<Array2<f64>>,
    loss: f64,
    theta_sum_error: f64,
    theta_min: f64,
    exhausted: usize,
}

fn trajectory_stats(traj: &ThetaTrajectory) -> (f64, f64) {
    let mut err: f64 = 0.0;
    let mut min = f64::INFINITY;
    for theta in traj.iterates() {
        err = err.max((theta.iter().sum::<f64>() - 1.0).abs());
        min = theta.iter().copied().fold(min, f64::min);
    }
    (err, min)
}

fn supervised_doc(doc: &LabeledDoc, phi: &TopicMatrix, u: &OutputParams, hyper: &Hyperparams, mda: &MdaOptions) -> Result<DocGrad> {
    let rows = SupportRows::gather(&doc.bow, phi)?;
    let traj = infer_gathered(&rows, hyper.dirichlet_alpha, mda)?;
    let theta = traj.theta();
    let target = doc.label.target(hyper.task.num_outputs());
    let prediction = predict(theta, u, hyper.gamma, hyper.task)?;
    let loss = supervised_loss(theta, u, &target, hyper.gamma, hyper.task)?;
    let gu = grad_u(theta, &target, &prediction, hyper.gamma)?;
    let bp = backprop_gathered(&rows, doc.bow.ids(), &traj, u, &target, hyper.dirichlet_alpha, hyper.gamma, hyper.task)?;
    let (theta_sum_error, theta_min) = trajectory_stats(&traj);
    Ok(DocGrad { phi: bp.phi, u: Some(gu), loss, theta_sum_error, theta_min, exhausted: traj.exhausted_line_searches() })
}

fn unsupervised_doc(doc: &SparseBow, phi: &TopicMatrix, hyper: &Hyperparams, mda: &MdaOptions) -> Result<DocGrad> {
    let rows = SupportRows::gather(doc, phi)?;
    let traj = infer_gathered(&rows, hyper.dirichlet_alpha, mda)?;
    let theta = traj.theta();
    let loss = -rows.mix(theta).iter().zip(&rows.counts).map(|(m, c)| c * m.ln()).sum::<f64>();
    let (theta_sum_error, theta_min) = trajectory_stats(&traj);
    Ok(DocGrad {
        phi: unsup_gathered(&rows, doc.ids(), theta),
        u: None,
        loss,
        theta_sum_error,
        theta_min,
        exhausted: traj.exhausted_line_searches(),
    })
}

/// Batch sums of the per-document quantities.
struct BatchSum {
    phi: Array2<f64>,
    u: Option<Array2<f64>>,
    loss: f64,
    theta_sum_error: f64,
    theta_min: f64,
    exhausted: usize,
}

impl BatchSum {
    fn new(v: usize, k: usize, c: Option<usize>) -> Self {
        BatchSum {
            phi: Array2::zeros((v, k).f()),
            u: c.map(|c| Array2::zeros((c, k))),
            loss: 0.0,
            theta_sum_error: 0.0,
            theta_min: f64::INFINITY,
            exhausted: 0,
        }
    }

    fn add(mut self, g: &DocGrad) -> Self {
        g.phi.add_to(&mut self.phi, 1.0);
        if let (Some(acc), Some(gu)) = (self.u.as_mut(), g.u.as_ref()) {
            *acc += gu;
        }
        self.loss += g.loss;
        self.theta_sum_error = self.theta_sum_error.max(g.theta_sum_error);
        self.theta_min = self.theta_min.min(g.theta_min);
        self.exhausted += g.exhausted;
        self
    }

    fn merge(mut self, other: BatchSum) -> Self {
        self.phi += &other.phi;
        if let (Some(a), Some(b)) = (self.u.as_mut(), other.u.as_ref()) {
            *a += b;
        }
        self.loss += other.loss;
        self.theta_sum_error = self.theta_sum_error.max(other.theta_sum_error);
        self.theta_min = self.theta_min.min(other.theta_min);
        self.exhausted += other.exhausted;
        self
    }
}

/// Per-document gradients over one mini-batch. In deterministic mode they
/// are collected in document order and summed sequentially.
fn batch_sum<D, F>(docs: &[&D], deterministic: bool, empty: impl Fn() -> BatchSum + Sync + Send, grad: F) -> Result<BatchSum>
where
    D: Sync,
    F: Fn(&D) -> Result<DocGrad> + Sync + Send,
{
    if deterministic {
        let grads: Vec<DocGrad> = docs.par_iter().map(|d| grad(d)).collect::<Result<_>>()?;
        Ok(grads.iter().fold(empty(), BatchSum::add))
    } else {
        docs.par_iter()
            .try_fold(&empty, |acc, d| grad(d).map(|g| acc.add(&g)))
            .try_reduce(&empty, |a, b| Ok(a.merge(b)))
    }
}

/// Running state shared by the supervised and unsupervised loops.
struct Smd {
    phi: TopicMatrix,
    u: Option<OutputParams>,
    adapt: AdaptState,
    phi_avg: Option<TopicMatrix>,
    u_avg: Option<OutputParams>,
    avg_steps: u64,
}

impl Smd {
    fn apply(&mut self, sum: &BatchSum, batch_len: usize, cfg: &TrainConfig, hyper: &Hyperparams, n_docs: usize) -> Result<()> {
        let scale = 1.0 / batch_len as f64;
        let mut dphi = prior_grad_phi(&self.phi, hyper.dirichlet_beta, n_docs);
        dphi.scaled_add(scale, &sum.phi);
        if let Some(bad) = dphi.iter().find(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("topic gradient entry {bad}")));
        }
        if let (Some(u), Some(du)) = (self.u.as_mut(), sum.u.as_ref()) {
            u.weights.scaled_add(-cfg.mu_u * scale, du);
            if u.weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::NonFinite("output weights after SGD update".into()));
            }
        }
        self.adapt.accumulate(&dphi);
        let v = self.phi.vocab_size();
        let entries = self.phi.entries_mut();
        for j in 0..hyper.num_topics {
            let mu = adaptive_lr(&self.adapt, j, cfg.mu0, cfg.eps, v);
            let col = entries.column(j).to_vec();
            let grad = dphi.column(j).to_vec();
            let next = smd_update_column(&col, &grad, mu)?;
            entries.column_mut(j).assign(&ndarray::ArrayView1::from(&next));
        }
        Ok(())
    }

    fn average(&mut self) -> Result<()> {
        self.avg_steps += 1;
        let t = self.avg_steps;
        match self.phi_avg.as_mut() {
            None => self.phi_avg = Some(self.phi.clone()),
            Some(avg) => {
                let current = self.phi.view();
                let entries = avg.entries_mut();
                for j in 0..current.ncols() {
                    let mut col = entries.column(j).to_vec();
                    running_average(&mut col, &current.column(j).to_vec(), t);
                    normalize_in_place(&mut col)?;
                    entries.column_mut(j).assign(&ndarray::ArrayView1::from(&col));
                }
            }
        }
        if let Some(u) = &self.u {
            match self.u_avg.as_mut() {
                None => self.u_avg = Some(u.clone()),
                Some(avg) => {
                    let current = u.weights.as_standard_layout();
                    let mut flat: Vec<f64> = avg.weights.iter().copied().collect();
                    running_average(&mut flat, current.as_slice().unwrap(), t);
                    avg.weights = Array2::from_shape_vec(avg.weights.raw_dim(), flat).expect("same shape");
                }
            }
        }
        Ok(())
    }

    fn result_phi(&self) -> &TopicMatrix {
        self.phi_avg.as_ref().unwrap_or(&self.phi)
    }

    fn result_u(&self) -> Option<&OutputParams> {
        self.u_avg.as_ref().or(self.u.as_ref())
    }
}

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Invalid(format!("cannot start worker threads: {e}")))
}

fn corpus_vocab_size<'a>(docs: impl Iterator<Item = &'a SparseBow>) -> Result<usize> {
    let mut v = None;
    for bow in docs {
        match v {
            None => v = Some(bow.vocab_size()),
            Some(size) if size != bow.vocab_size() => {
                return Err(Error::DimensionMismatch(format!(
                    "documents disagree on vocabulary size ({size} vs {})",
                    bow.vocab_size()
                )))
            }
            _ => {}
        }
    }
    v.ok_or(Error::EmptyCorpus)
}

/// Shared loop. `doc_grad` computes one document's gradient against the
/// current parameters.
fn run<D: Sync>(
    docs: &[D],
    vocab_size: usize,
    cfg: &TrainConfig,
    hyper: &Hyperparams,
    u0: Option<OutputParams>,
    observer: &mut dyn TrainObserver,
    doc_grad: impl Fn(&D, &TopicMatrix, Option<&OutputParams>, &MdaOptions) -> Result<DocGrad> + Sync + Send,
) -> Result<(Smd, TrainReport)> {
    cfg.validate()?;
    let k = hyper.num_topics;
    let mda = MdaOptions { unroll_depth: hyper.unroll_depth, ..cfg.mda.clone() };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = Smd {
        phi: TopicMatrix::sample(&mut rng, vocab_size, k, 1.0)?,
        u: u0,
        adapt: AdaptState::new(k),
        phi_avg: None,
        u_avg: None,
        avg_steps: 0,
    };
    let pool = thread_pool(cfg.threads)?;
    let c = state.u.as_ref().map(OutputParams::num_outputs);
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..docs.len()).collect();

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (batch, chunk) in order.chunks(cfg.minibatch_size).enumerate() {
            let wrap = |source: Error| Error::Training { epoch, batch, source: Box::new(source) };
            let members: Vec<&D> = chunk.iter().map(|&i| &docs[i]).collect();
            let (phi, u) = (&state.phi, state.u.as_ref());
            let sum = pool
                .install(|| batch_sum(&members, cfg.deterministic, || BatchSum::new(vocab_size, k, c), |d| doc_grad(d, phi, u, &mda)))
                .map_err(wrap)?;
            state.apply(&sum, chunk.len(), cfg, hyper, docs.len()).map_err(wrap)?;
            if epoch >= cfg.average_start() {
                state.average().map_err(wrap)?;
            }
            epoch_loss += sum.loss;
            report.updates += 1;
            report.exhausted_line_searches += sum.exhausted;
            let stats = BatchStats { epoch, batch, theta_sum_error: sum.theta_sum_error, theta_min: sum.theta_min };
            observer.on_batch(&stats, &state.phi, state.phi_avg.as_ref());
        }
        let mean = epoch_loss / docs.len() as f64 + prior_loss(&state.phi, hyper.dirichlet_beta, docs.len());
        log::info!("epoch {} mean loss {mean:.6}", epoch + 1);
        report.epoch_losses.push(mean);
        observer.on_epoch(epoch, mean, state.result_phi(), state.result_u());
    }
    if report.exhausted_line_searches > 0 {
        log::warn!("{} inference layers exhausted the line search", report.exhausted_line_searches);
    }
    Ok((state, report))
}

/// Supervised training (BP-sLDA). Returns the running-averaged model.
pub fn train_supervised(corpus: &[LabeledDoc], config: &TrainConfig, hyper: &Hyperparams) -> Result<Model> {
    train_supervised_observed(corpus, config, hyper, &mut NoopObserver).map(|(m, _)| m)
}

pub fn train_supervised_observed(
    corpus: &[LabeledDoc],
    config: &TrainConfig,
    hyper: &Hyperparams,
    observer: &mut dyn TrainObserver,
) -> Result<(Model, TrainReport)> {
    if !hyper.task.is_supervised() {
        return Err(Error::Invalid("supervised training needs a regression or classification task".into()));
    }
    let v = corpus_vocab_size(corpus.iter().map(|d| &d.bow))?;
    for doc in corpus {
        doc.label.check(hyper.task)?;
    }
    let c = hyper.task.num_outputs();
    let k = hyper.num_topics;
    // Since theta sums to one, starting every column of U at the mean
    // target is an intercept; for classification the start is zero.
    let u0 = match hyper.task {
        Task::Regression { .. } => {
            let mut mean = vec![0.0; c];
            for doc in corpus {
                for (m, y) in mean.iter_mut().zip(doc.label.target(c)) {
                    *m += y / corpus.len() as f64;
                }
            }
            OutputParams::new(Array2::from_shape_fn((c, k), |(r, _)| mean[r]))?
        }
        _ => OutputParams::zeros(c, k),
    };
    let (state, report) = run(corpus, v, config, hyper, Some(u0), observer, |doc, phi, u, mda| {
        supervised_doc(doc, phi, u.expect("supervised state has U"), hyper, mda)
    })?;
    let u = state.result_u().cloned();
    let model = Model::new(hyper.clone(), state.result_phi().clone(), u)?;
    Ok((model, report))
}

/// Unsupervised training (BP-LDA). Returns the running-averaged topics.
pub fn train_unsupervised(corpus: &[SparseBow], config: &TrainConfig, hyper: &Hyperparams) -> Result<TopicMatrix> {
    train_unsupervised_observed(corpus, config, hyper, &mut NoopObserver).map(|(p, _)| p)
}

pub fn train_unsupervised_observed(
    corpus: &[SparseBow],
    config: &TrainConfig,
    hyper: &Hyperparams,
    observer: &mut dyn TrainObserver,
) -> Result<(TopicMatrix, TrainReport)> {
    let v = corpus_vocab_size(corpus.iter())?;
    let (state, report) = run(corpus, v, config, hyper, None, observer, |doc, phi, _, mda| unsupervised_doc(doc, phi, hyper, mda))?;
    Ok((state.result_phi().clone(), report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;
    use crate::oracle::{sample_corpus, SynthSpec};
    use proptest::prelude::*;

    #[test]
    fn adaptive_lr_examples() {
        let state = AdaptState { sq_norms: vec![0.0, 0.0], t: 3 };
        assert_eq!(adaptive_lr(&state, 1, 0.01, 1e-6, 5), 0.01 / 1e-6);
        let state = AdaptState { sq_norms: vec![4.0 * 7.0], t: 4 };
        assert!((adaptive_lr(&state, 0, 0.5, 1e-6, 7) - 0.5 / (1.0 + 1e-6)).abs() < 1e-15);
        // doubling every gradient doubles the root-mean-square term
        let one = AdaptState { sq_norms: vec![9.0], t: 1 };
        let two = AdaptState { sq_norms: vec![36.0], t: 1 };
        let g = 3.0;
        assert!((adaptive_lr(&one, 0, 1.0, 0.1, 1) - 1.0 / (g + 0.1)).abs() < 1e-15);
        assert!((adaptive_lr(&two, 0, 1.0, 0.1, 1) - 1.0 / (2.0 * g + 0.1)).abs() < 1e-15);
    }

    #[test]
    fn smd_examples() {
        let phi = [0.2, 0.3, 0.5];
        let same = smd_update_column(&phi, &[0.0; 3], 3.0).unwrap();
        for (a, b) in same.iter().zip(&phi) {
            assert!((a - b).abs() < 1e-15);
        }
        let next = smd_update_column(&[0.5, 0.5], &[-(3.0f64.ln()), 0.0], 1.0).unwrap();
        assert!((next[0] - 0.75).abs() < 1e-15 && (next[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn smd_underflow_is_numerical_failure() {
        let err = smd_update_column(&[0.5, 0.5], &[1.0, 0.0], 1e6).unwrap_err();
        assert!(err.is_numerical());
    }

    #[test]
    fn running_average_examples() {
        let mut avg = vec![0.0, 0.0];
        running_average(&mut avg, &[3.0, 4.0], 1);
        assert_eq!(avg, vec![3.0, 4.0]);
        running_average(&mut avg, &[5.0, 0.0], 2);
        assert_eq!(avg, vec![4.0, 2.0]);
        let mut constant = vec![0.7];
        for t in 1..50 {
            running_average(&mut constant, &[0.7], t);
        }
        assert!((constant[0] - 0.7).abs() < 1e-15);
    }

    fn small_corpus(seed: u64, task: Task) -> Vec<LabeledDoc> {
        let mut spec = SynthSpec::new(60, 12, 3, 30, task, seed);
        spec.alpha = 0.5;
        spec.beta = 0.3;
        spec.gamma = 4.0;
        sample_corpus(&spec).unwrap().labeled()
    }

    fn hyper(task: Task) -> Hyperparams {
        Hyperparams::new(3, 1.001, 1.0001, 1.0, 5, task).unwrap()
    }

    fn small_config() -> TrainConfig {
        TrainConfig { minibatch_size: 16, epochs: 4, deterministic: true, threads: 1, ..Default::default() }
    }

    #[test]
    fn deterministic_runs_are_identical() {
        let task = Task::Classification { num_classes: 2 };
        let corpus = small_corpus(1, task);
        let cfg = TrainConfig { threads: 2, ..small_config() };
        let a = train_supervised(&corpus, &cfg, &hyper(task)).unwrap();
        let b = train_supervised(&corpus, &cfg, &hyper(task)).unwrap();
        assert_eq!(a, b);
        let single = train_supervised(&corpus, &TrainConfig { threads: 1, ..cfg }, &hyper(task)).unwrap();
        assert_eq!(a, single);
    }

    #[test]
    fn vanishing_rates_keep_initialization() {
        let doc = LabeledDoc { bow: SparseBow::new(4, vec![(0, 2), (3, 1)]).unwrap(), label: Label::Real(vec![1.5]) };
        let task = Task::Regression { output_dim: 1 };
        let cfg = TrainConfig { epochs: 1, mu_u: 1e-12, mu0: 1e-12, eps: 1e-3, seed: 9, ..small_config() };
        let model = train_supervised(&[doc], &cfg, &hyper(task)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let init = TopicMatrix::sample(&mut rng, 4, 3, 1.0).unwrap();
        let diff = (&model.phi.view() - &init.view()).iter().fold(0.0_f64, |m, d| m.max(d.abs()));
        assert!(diff <= 1e-6);
        let u = model.u.unwrap();
        assert!(u.weights.iter().all(|&w| (w - 1.5).abs() <= 1e-6));
    }

    #[test]
    fn batch_gradient_matches_sequential_reference() {
        let task = Task::Regression { output_dim: 1 };
        let corpus = small_corpus(2, task);
        let h = hyper(task);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let phi = TopicMatrix::sample(&mut rng, 12, 3, 1.0).unwrap();
        let u = OutputParams::new(Array2::from_shape_fn((1, 3), |(_, j)| j as f64 - 1.0)).unwrap();
        let mda = MdaOptions { unroll_depth: h.unroll_depth, ..Default::default() };
        let members: Vec<&LabeledDoc> = corpus[..10].iter().collect();
        let pool = thread_pool(3).unwrap();
        let sum = pool
            .install(|| batch_sum(&members, true, || BatchSum::new(12, 3, Some(1)), |d| supervised_doc(d, &phi, &u, &h, &mda)))
            .unwrap();
        let mut reference = Array2::<f64>::zeros((12, 3));
        for doc in &members {
            let g = supervised_doc(doc, &phi, &u, &h, &mda).unwrap();
            g.phi.add_to(&mut reference, 1.0);
        }
        assert_eq!(sum.phi, reference);
        let loose = pool
            .install(|| batch_sum(&members, false, || BatchSum::new(12, 3, Some(1)), |d| supervised_doc(d, &phi, &u, &h, &mda)))
            .unwrap();
        for (a, b) in loose.phi.iter().zip(reference.iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    struct SimplexWatch {
        worst_sum: f64,
        min_entry: f64,
        batches: usize,
    }

    impl TrainObserver for SimplexWatch {
        fn on_batch(&mut self, stats: &BatchStats, phi: &TopicMatrix, averaged: Option<&TopicMatrix>) {
            self.batches += 1;
            self.worst_sum = self.worst_sum.max(stats.theta_sum_error);
            self.min_entry = self.min_entry.min(stats.theta_min);
            for m in std::iter::once(phi).chain(averaged) {
                for col in m.view().columns() {
                    self.worst_sum = self.worst_sum.max((col.sum() - 1.0).abs());
                    self.min_entry = col.iter().copied().fold(self.min_entry, f64::min);
                }
            }
        }
    }

    #[test]
    fn parameters_stay_on_the_simplex() {
        let task = Task::Classification { num_classes: 2 };
        let corpus = small_corpus(3, task);
        let mut watch = SimplexWatch { worst_sum: 0.0, min_entry: f64::INFINITY, batches: 0 };
        let (_, report) = train_supervised_observed(&corpus, &small_config(), &hyper(task), &mut watch).unwrap();
        assert_eq!(watch.batches as u64, report.updates);
        assert!(watch.worst_sum <= 1e-9 && watch.min_entry > 0.0);
    }

    #[test]
    fn unsupervised_is_deterministic() {
        let docs = sample_corpus(&SynthSpec::new(60, 12, 3, 30, Task::Unsupervised, 4)).unwrap().docs;
        let h = hyper(Task::Unsupervised);
        let a = train_unsupervised(&docs, &small_config(), &h).unwrap();
        let b = train_unsupervised(&docs, &small_config(), &h).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_inputs() {
        let task = Task::Regression { output_dim: 1 };
        assert!(matches!(train_supervised(&[], &small_config(), &hyper(task)), Err(Error::EmptyCorpus)));
        let doc = LabeledDoc { bow: SparseBow::new(3, vec![(0, 1)]).unwrap(), label: Label::Class(0) };
        assert!(train_supervised(std::slice::from_ref(&doc), &small_config(), &hyper(task)).is_err());
        let cfg = TrainConfig { mu0: 0.0, ..small_config() };
        assert!(matches!(train_supervised(&[doc], &cfg, &hyper(Task::Classification { num_classes: 2 })), Err(Error::Invalid(_))));
    }

    #[test]
    fn exploding_rate_reports_batch() {
        let task = Task::Classification { num_classes: 2 };
        let corpus = small_corpus(5, task);
        let cfg = TrainConfig { mu0: 1e6, ..small_config() };
        match train_supervised(&corpus, &cfg, &hyper(task)) {
            Err(Error::Training { epoch, batch, source }) => {
                assert!(source.is_numerical());
                assert_eq!((epoch, batch), (0, 0));
            }
            other => panic!("expected a training failure, got {other:?}"),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn smd_output_is_on_simplex(seed in any::<u64>(), mu in 1e-3f64..10.0) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(2..30);
            let phi = crate::model::sample_dirichlet(&mut rng, 1.0, n).into_iter().map(|p| p.max(1e-12)).collect::<Vec<_>>();
            let delta: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let next = smd_update_column(&phi, &delta, mu).unwrap();
            prop_assert!((next.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(next.iter().all(|&p| p > 0.0));
        }
    }
}
