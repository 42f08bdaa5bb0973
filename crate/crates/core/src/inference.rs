//! MAP inference of per-document topic proportions by mirror descent on the
//! probability simplex, unrolled to a fixed depth, plus the prediction heads.
//!
//! The objective for a document with term counts `x` is
//!
//! ```text
//! f(theta) = -sum_v x_v ln (Phi theta)_v - (alpha - 1) sum_j ln theta_j
//! ```
//!
//! and one mirror-descent step with the generalized KL divergence is the
//! multiplicative update `theta <- theta * exp(-T grad f(theta)) / C`.
//! Only rows of `Phi` in the support of `x` are ever read, so a layer costs
//! `O(nTok * K)`.

use crate::corpus::SparseBow;
use crate::error::{Error, Result};
use crate::model::{OutputParams, Task, TopicColumns};

/// Lower bound applied to `theta` inside the `(alpha - 1) / theta` term
/// (never to stored iterates).
pub const THETA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Divergence {
    /// `Psi(a, b) = a' ln(a / b) - 1'a + 1'b`
    BregmanKl,
    /// `Psi(a, b) = ||a - b||_1^2 / 2`
    SquaredOneNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdaOptions {
    pub unroll_depth: usize,
    pub initial_step: f64,
    /// Step-size shrink factor of the backtracking line search, in (0, 1).
    pub shrink: f64,
    pub line_search: bool,
    pub max_backtracks: usize,
    pub divergence: Divergence,
}

impl Default for MdaOptions {
    fn default() -> Self {
        MdaOptions {
            unroll_depth: 10,
            initial_step: 1.0,
            shrink: 0.5,
            line_search: true,
            max_backtracks: 30,
            divergence: Divergence::BregmanKl,
        }
    }
}

impl MdaOptions {
    /// Constant step `step` at every layer, no line search.
    pub fn constant(unroll_depth: usize, step: f64) -> Self {
        MdaOptions { unroll_depth, initial_step: step, line_search: false, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return Err(Error::Invalid(format!("shrink must lie in (0, 1), got {}", self.shrink)));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return Err(Error::Invalid(format!("initial_step must be positive, got {}", self.initial_step)));
        }
        if self.max_backtracks == 0 {
            return Err(Error::Invalid("max_backtracks must be positive".into()));
        }
        Ok(())
    }
}

/// Iterates `theta_0 .. theta_L` and the accepted step sizes `T_1 .. T_L`,
/// kept for back propagation.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaTrajectory {
    iterates: Vec<Vec<f64>>,
    step_sizes: Vec<f64>,
    exhausted_line_searches: usize,
}

impl ThetaTrajectory {
    pub fn new(iterates: Vec<Vec<f64>>, step_sizes: Vec<f64>) -> Result<Self> {
        if iterates.len() != step_sizes.len() + 1 {
            return Err(Error::TrajectoryMismatch(format!(
                "{} iterates but {} step sizes",
                iterates.len(),
                step_sizes.len()
            )));
        }
        Ok(ThetaTrajectory { iterates, step_sizes, exhausted_line_searches: 0 })
    }

    pub fn depth(&self) -> usize {
        self.step_sizes.len()
    }

    pub fn num_topics(&self) -> usize {
        self.iterates[0].len()
    }

    pub fn iterates(&self) -> &[Vec<f64>] {
        &self.iterates
    }

    pub fn step_sizes(&self) -> &[f64] {
        &self.step_sizes
    }

    /// `theta_L`, the inference result.
    pub fn theta(&self) -> &[f64] {
        self.iterates.last().expect("trajectory always holds theta_0")
    }

    /// Layers whose line search hit `max_backtracks` and accepted the last trial.
    pub fn exhausted_line_searches(&self) -> usize {
        self.exhausted_line_searches
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    /// Regression mean `U theta_L`.
    Mean(Vec<f64>),
    /// Classification posterior `Softmax(gamma U theta_L)`.
    ClassPosterior(Vec<f64>),
}

impl Prediction {
    pub fn values(&self) -> &[f64] {
        match self {
            Prediction::Mean(v) | Prediction::ClassPosterior(v) => v,
        }
    }
}

/// Rows of `Phi` restricted to the support of one document, gathered once
/// per document (nTok * K reads).
#[derive(Debug, Clone)]
pub(crate) struct SupportRows {
    pub(crate) counts: Vec<f64>,
    /// Row-major `nTok x K`.
    pub(crate) rows: Vec<f64>,
    pub(crate) k: usize,
}

impl SupportRows {
    pub(crate) fn gather<P: TopicColumns + ?Sized>(x: &SparseBow, phi: &P) -> Result<Self> {
        if x.vocab_size() > phi.vocab_size() {
            return Err(Error::DimensionMismatch(format!(
                "document vocabulary {} exceeds topic matrix vocabulary {}",
                x.vocab_size(),
                phi.vocab_size()
            )));
        }
        let k = phi.num_topics();
        let mut rows = Vec::with_capacity(x.num_unique() * k);
        for &v in x.ids() {
            rows.extend((0..k).map(|j| phi.entry(v, j)));
        }
        Ok(SupportRows { counts: x.iter().map(|(_, c)| c).collect(), rows, k })
    }

    pub(crate) fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.k..(i + 1) * self.k]
    }

    /// `(Phi theta)_v` for every `v` in the support.
    pub(crate) fn mix(&self, theta: &[f64]) -> Vec<f64> {
        (0..self.counts.len())
            .map(|i| self.row(i).iter().zip(theta).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `Phi' (x / (Phi theta))`.
    pub(crate) fn back_mix(&self, ratio: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        for (i, &r) in ratio.iter().enumerate() {
            for (o, &p) in out.iter_mut().zip(self.row(i)) {
                *o += p * r;
            }
        }
        out
    }

    pub(crate) fn objective(&self, theta: &[f64], alpha: f64) -> Result<f64> {
        let mut value = 0.0;
        for (j, &t) in theta.iter().enumerate() {
            if !(t > 0.0) {
                return Err(Error::Domain(format!("theta[{j}] = {t} is not positive")));
            }
        }
        for (i, m) in self.mix(theta).into_iter().enumerate() {
            if !(m > 0.0) {
                return Err(Error::Domain(format!("(Phi theta) = {m} at support position {i}")));
            }
            value -= self.counts[i] * m.ln();
        }
        if alpha != 1.0 {
            value -= (alpha - 1.0) * theta.iter().map(|t| t.ln()).sum::<f64>();
        }
        Ok(value)
    }

    /// `-grad f(theta) = Phi'(x / Phi theta) + (alpha - 1) / max(theta, floor)`.
    pub(crate) fn descent_direction(&self, theta: &[f64], alpha: f64) -> Vec<f64> {
        let ratio: Vec<f64> = self.mix(theta).iter().zip(&self.counts).map(|(m, c)| c / m).collect();
        let mut dir = self.back_mix(&ratio);
        if alpha != 1.0 {
            for (d, &t) in dir.iter_mut().zip(theta) {
                *d += (alpha - 1.0) / t.max(THETA_FLOOR);
            }
        }
        dir
    }

    pub(crate) fn step(&self, theta: &[f64], alpha: f64, step: f64) -> Result<Vec<f64>> {
        let dir = self.descent_direction(theta, alpha);
        multiplicative_update(theta, &dir, step)
    }
}

/// `theta * exp(step * dir)`, renormalized, with the exponent shifted by its
/// maximum. Entries that underflow are held at the smallest positive normal.
pub(crate) fn multiplicative_update(theta: &[f64], dir: &[f64], step: f64) -> Result<Vec<f64>> {
    let exponent: Vec<f64> = dir.iter().map(|d| step * d).collect();
    let max = exponent.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::NonFinite(format!("mirror-descent exponent maximum is {max}")));
    }
    let mut next: Vec<f64> = theta
        .iter()
        .zip(&exponent)
        .map(|(&t, &z)| t * (z - max).exp())
        .collect();
    if next.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("mirror-descent update".into()));
    }
    let total: f64 = next.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NonFinite(format!("mirror-descent normalizer is {total}")));
    }
    for v in &mut next {
        *v = (*v / total).max(f64::MIN_POSITIVE);
    }
    Ok(next)
}

fn bregman(divergence: Divergence, a: &[f64], b: &[f64]) -> f64 {
    match divergence {
        Divergence::BregmanKl => a
            .iter()
            .zip(b)
            .map(|(&x, &y)| x * (x / y).ln() - x + y)
            .sum(),
        Divergence::SquaredOneNorm => {
            let l1: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
            0.5 * l1 * l1
        }
    }
}

/// MAP objective `f(theta)`, evaluated over the support of `x` only.
pub fn map_objective<P: TopicColumns + ?Sized>(
    theta: &[f64],
    x: &SparseBow,
    phi: &P,
    alpha: f64,
) -> Result<f64> {
    check_theta_dim(theta, phi)?;
    SupportRows::gather(x, phi)?.objective(theta, alpha)
}

/// Gradient of the MAP objective (with the `theta` floor inside `(alpha-1)/theta`).
pub fn map_gradient<P: TopicColumns + ?Sized>(
    theta: &[f64],
    x: &SparseBow,
    phi: &P,
    alpha: f64,
) -> Result<Vec<f64>> {
    check_theta_dim(theta, phi)?;
    let rows = SupportRows::gather(x, phi)?;
    Ok(rows.descent_direction(theta, alpha).into_iter().map(|d| -d).collect())
}

/// One mirror-descent step with step size `step`.
pub fn mda_step<P: TopicColumns + ?Sized>(
    theta_prev: &[f64],
    x: &SparseBow,
    phi: &P,
    alpha: f64,
    step: f64,
) -> Result<Vec<f64>> {
    check_theta_dim(theta_prev, phi)?;
    if let Some(j) = theta_prev.iter().position(|&t| !(t > 0.0)) {
        return Err(Error::Domain(format!("theta_prev[{j}] is not positive")));
    }
    SupportRows::gather(x, phi)?.step(theta_prev, alpha, step)
}

fn check_theta_dim<P: TopicColumns + ?Sized>(theta: &[f64], phi: &P) -> Result<()> {
    if theta.len() != phi.num_topics() {
        return Err(Error::DimensionMismatch(format!(
            "theta has {} entries, topic matrix has {} topics",
            theta.len(),
            phi.num_topics()
        )));
    }
    Ok(())
}

/// Runs `opts.unroll_depth` mirror-descent layers from the uniform
/// distribution, with backtracking line search when enabled.
pub fn infer_theta<P: TopicColumns + ?Sized>(
    x: &SparseBow,
    phi: &P,
    alpha: f64,
    opts: &MdaOptions,
) -> Result<ThetaTrajectory> {
    opts.validate()?;
    let rows = SupportRows::gather(x, phi)?;
    infer_gathered(&rows, alpha, opts)
}

pub(crate) fn infer_gathered(rows: &SupportRows, alpha: f64, opts: &MdaOptions) -> Result<ThetaTrajectory> {
    let k = rows.k;
    let depth = opts.unroll_depth;
    let mut iterates = Vec::with_capacity(depth + 1);
    let mut step_sizes = Vec::with_capacity(depth);
    let mut exhausted = 0;
    iterates.push(vec![1.0 / k as f64; k]);

    let mut step = opts.initial_step;
    for _ in 0..depth {
        let prev = iterates.last().unwrap();
        let next = if opts.line_search {
            step /= opts.shrink;
            let f_prev = rows.objective(prev, alpha)?;
            let grad: Vec<f64> = rows.descent_direction(prev, alpha).into_iter().map(|d| -d).collect();
            let mut backtracks = 0;
            loop {
                let candidate = multiplicative_update(prev, &grad.iter().map(|g| -g).collect::<Vec<_>>(), step)?;
                let accepted = match rows.objective(&candidate, alpha) {
                    Ok(f_next) => {
                        let linear: f64 = grad
                            .iter()
                            .zip(candidate.iter().zip(prev))
                            .map(|(g, (c, p))| g * (c - p))
                            .sum();
                        let bound = f_prev + linear + bregman(opts.divergence, &candidate, prev) / step;
                        f_next <= bound
                    }
                    Err(_) => false,
                };
                if accepted {
                    break candidate;
                }
                if backtracks == opts.max_backtracks {
                    exhausted += 1;
                    break candidate;
                }
                step *= opts.shrink;
                backtracks += 1;
            }
        } else {
            step = opts.initial_step;
            rows.step(prev, alpha, step)?
        };
        step_sizes.push(step);
        iterates.push(next);
    }
    Ok(ThetaTrajectory { iterates, step_sizes, exhausted_line_searches: exhausted })
}

pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

/// `U theta` for regression, `Softmax(gamma U theta)` for classification.
pub fn predict(theta: &[f64], u: &OutputParams, gamma: f64, task: Task) -> Result<Prediction> {
    if theta.len() != u.num_topics() {
        return Err(Error::DimensionMismatch(format!(
            "theta has {} entries, U has {} columns",
            theta.len(),
            u.num_topics()
        )));
    }
    let scores: Vec<f64> = u
        .weights
        .rows()
        .into_iter()
        .map(|row| row.iter().zip(theta).map(|(a, b)| a * b).sum())
        .collect();
    match task {
        Task::Regression { .. } => Ok(Prediction::Mean(scores)),
        Task::Classification { .. } => {
            let scaled: Vec<f64> = scores.iter().map(|s| gamma * s).collect();
            Ok(Prediction::ClassPosterior(softmax(&scaled)))
        }
        Task::Unsupervised => Err(Error::Invalid("unsupervised models have no prediction head".into())),
    }
}
