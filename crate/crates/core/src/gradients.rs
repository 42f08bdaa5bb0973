//! Gradients of the training objective: the output layer, back propagation
//! through the unrolled mirror-descent layers, the Dirichlet prior on
//! `Phi`, and the unsupervised likelihood gradient.

use ndarray::{Array2, ShapeBuilder};

use crate::corpus::SparseBow;
use crate::error::{Error, Result};
use crate::inference::{predict, Prediction, SupportRows, ThetaTrajectory, THETA_FLOOR};
use crate::model::{OutputParams, Task, TopicColumns};

/// Gradient with respect to `Phi` restricted to the rows in a document's
/// support. Rows outside the support are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePhiGrad {
    pub ids: Vec<usize>,
    /// Row-major `ids.len() x num_topics`.
    pub rows: Vec<f64>,
    pub num_topics: usize,
}

impl SparsePhiGrad {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.num_topics..(i + 1) * self.num_topics]
    }

    /// `dense += scale * self`.
    pub fn add_to(&self, dense: &mut Array2<f64>, scale: f64) {
        for (i, &v) in self.ids.iter().enumerate() {
            for (j, &g) in self.row(i).iter().enumerate() {
                dense[[v, j]] += scale * g;
            }
        }
    }

    pub fn to_dense(&self, vocab_size: usize) -> Array2<f64> {
        let mut dense = Array2::zeros((vocab_size, self.num_topics).f());
        self.add_to(&mut dense, 1.0);
        dense
    }
}

/// Result of back propagation for one document.
#[derive(Debug, Clone)]
pub struct Backprop {
    /// Likelihood part of the `Phi` gradient, summed over layers.
    pub phi: SparsePhiGrad,
    /// Projected sensitivities `xi_0 .. xi_L`.
    pub xi: Vec<Vec<f64>>,
}

/// `g` such that the loss gradient with respect to the pre-activation
/// `U theta` is `-g`: `gamma (y - y_hat)` for classification and
/// `(y - y_hat) / gamma` for regression.
pub fn output_residual(prediction: &Prediction, target: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let values = prediction.values();
    if values.len() != target.len() {
        return Err(Error::DimensionMismatch(format!(
            "prediction has {} outputs, target has {}",
            values.len(),
            target.len()
        )));
    }
    let scale = match prediction {
        Prediction::Mean(_) => 1.0 / gamma,
        Prediction::ClassPosterior(_) => gamma,
    };
    Ok(target.iter().zip(values).map(|(y, p)| scale * (y - p)).collect())
}

/// Per-document gradient of the loss with respect to `U`: `-g theta_L'`.
pub fn grad_u(theta: &[f64], target: &[f64], prediction: &Prediction, gamma: f64) -> Result<Array2<f64>> {
    let g = output_residual(prediction, target, gamma)?;
    Ok(Array2::from_shape_fn((g.len(), theta.len()), |(c, j)| -g[c] * theta[j]))
}

/// Per-document supervised loss, without the prior term.
pub fn supervised_loss(theta: &[f64], u: &OutputParams, target: &[f64], gamma: f64, task: Task) -> Result<f64> {
    let scores = match predict(theta, u, 1.0, Task::Regression { output_dim: u.num_outputs() })? {
        Prediction::Mean(s) => s,
        Prediction::ClassPosterior(_) => unreachable!(),
    };
    if scores.len() != target.len() {
        return Err(Error::DimensionMismatch(format!(
            "U has {} outputs, target has {}",
            scores.len(),
            target.len()
        )));
    }
    match task {
        Task::Regression { .. } => {
            let sq: f64 = target.iter().zip(&scores).map(|(y, s)| (y - s) * (y - s)).sum();
            Ok(sq / (2.0 * gamma))
        }
        Task::Classification { .. } => {
            let scaled: Vec<f64> = scores.iter().map(|s| gamma * s).collect();
            let max = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + scaled.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
            let dot: f64 = target.iter().zip(&scaled).map(|(y, s)| y * s).sum();
            Ok(lse - dot)
        }
        Task::Unsupervised => Err(Error::Invalid("unsupervised task has no supervised loss".into())),
    }
}

/// Negative log-likelihood `-sum_v x_v ln (Phi theta)_v` of one document.
pub fn unsupervised_loss<P: TopicColumns + ?Sized>(x: &SparseBow, phi: &P, theta: &[f64]) -> Result<f64> {
    let rows = SupportRows::gather(x, phi)?;
    let mut loss = 0.0;
    for (m, c) in rows.mix(theta).iter().zip(&rows.counts) {
        if !(*m > 0.0) {
            return Err(Error::Domain(format!("(Phi theta) = {m}")));
        }
        loss -= c * m.ln();
    }
    Ok(loss)
}

/// Prior term of the loss, `-(beta - 1) / n_docs * sum ln Phi`.
pub fn prior_loss<P: TopicColumns + ?Sized>(phi: &P, beta: f64, n_docs: usize) -> f64 {
    if beta == 1.0 {
        return 0.0;
    }
    let mut total = 0.0;
    for j in 0..phi.num_topics() {
        for v in 0..phi.vocab_size() {
            total += phi.entry(v, j).ln();
        }
    }
    -(beta - 1.0) / n_docs as f64 * total
}

/// Gradient of the prior term, `-(beta - 1) / (n_docs Phi)`, as a dense `V x K` matrix.
pub fn prior_grad_phi<P: TopicColumns + ?Sized>(phi: &P, beta: f64, n_docs: usize) -> Array2<f64> {
    let scale = -(beta - 1.0) / n_docs as f64;
    let mut grad = Array2::zeros((phi.vocab_size(), phi.num_topics()).f());
    if beta != 1.0 {
        for ((v, j), g) in grad.indexed_iter_mut() {
            *g = scale / phi.entry(v, j);
        }
    }
    grad
}

fn check_trajectory(traj: &ThetaTrajectory, k: usize) -> Result<()> {
    if traj.num_topics() != k {
        return Err(Error::TrajectoryMismatch(format!(
            "trajectory has {} topics, topic matrix has {k}",
            traj.num_topics()
        )));
    }
    if traj.iterates().iter().any(|t| t.len() != k) {
        return Err(Error::TrajectoryMismatch("iterates of unequal length".into()));
    }
    Ok(())
}

/// Back propagation of the supervised loss through the unrolled layers.
///
/// Returns the likelihood part of the `Phi` gradient; the prior part is
/// added once per mini-batch by the caller (see [`prior_grad_phi`]). Step
/// sizes recorded in the trajectory are treated as constants.
#[allow(clippy::too_many_arguments)]
pub fn backprop_phi<P: TopicColumns + ?Sized>(
    x: &SparseBow,
    phi: &P,
    traj: &ThetaTrajectory,
    u: &OutputParams,
    target: &[f64],
    alpha: f64,
    gamma: f64,
    task: Task,
) -> Result<Backprop> {
    let rows = SupportRows::gather(x, phi)?;
    backprop_gathered(&rows, x.ids(), traj, u, target, alpha, gamma, task)
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn backprop_gathered(
    rows: &SupportRows,
    ids: &[usize],
    traj: &ThetaTrajectory,
    u: &OutputParams,
    target: &[f64],
    alpha: f64,
    gamma: f64,
    task: Task,
) -> Result<Backprop> {
    let k = rows.k;
    check_trajectory(traj, k)?;
    if u.num_topics() != k {
        return Err(Error::DimensionMismatch(format!("U has {} columns, expected {k}", u.num_topics())));
    }
    let theta_l = traj.theta();
    let prediction = predict(theta_l, u, gamma, task)?;
    let g = output_residual(&prediction, target, gamma)?;

    // xi_L = -(U'g - (theta_L' U'g) 1)
    let mut utg = vec![0.0; k];
    for (c, row) in u.weights.rows().into_iter().enumerate() {
        for (o, w) in utg.iter_mut().zip(row) {
            *o += w * g[c];
        }
    }
    let mut xi = project(theta_l, &utg);
    xi.iter_mut().for_each(|v| *v = -*v);

    let n = ids.len();
    let depth = traj.depth();
    let mut grad_rows = vec![0.0; n * k];
    let mut xis = vec![Vec::new(); depth + 1];
    for layer in (1..=depth).rev() {
        let theta = &traj.iterates()[layer];
        let prev = &traj.iterates()[layer - 1];
        let step = traj.step_sizes()[layer - 1];

        let s: Vec<f64> = theta.iter().zip(&xi).map(|(t, x)| t * x).collect();
        let mix = rows.mix(prev);
        let ratio: Vec<f64> = mix.iter().zip(&rows.counts).map(|(m, c)| c / m).collect();
        let curv: Vec<f64> = ratio.iter().zip(&mix).map(|(r, m)| r / m).collect();
        let phi_s = rows.mix(&s);

        // Hessian of the objective at prev applied to s
        let weighted: Vec<f64> = phi_s.iter().zip(&curv).map(|(a, b)| a * b).collect();
        let mut hs = rows.back_mix(&weighted);
        if alpha != 1.0 {
            for ((h, &p), &sj) in hs.iter_mut().zip(prev).zip(&s) {
                if p >= THETA_FLOOR {
                    *h += (alpha - 1.0) / (p * p) * sj;
                }
            }
        }

        for i in 0..n {
            let a = ratio[i];
            let b = weighted[i];
            for j in 0..k {
                grad_rows[i * k + j] += step * (a * s[j] - b * prev[j]);
            }
        }

        let w: Vec<f64> = (0..k).map(|j| s[j] / prev[j] - step * hs[j]).collect();
        let next_xi = project(prev, &w);
        xis[layer] = std::mem::replace(&mut xi, next_xi);
    }
    xis[0] = xi;

    Ok(Backprop {
        phi: SparsePhiGrad { ids: ids.to_vec(), rows: grad_rows, num_topics: k },
        xi: xis,
    })
}

/// `w - (theta' w) 1`.
fn project(theta: &[f64], w: &[f64]) -> Vec<f64> {
    let dot: f64 = theta.iter().zip(w).map(|(a, b)| a * b).sum();
    w.iter().map(|v| v - dot).collect()
}

/// Gradient of the unsupervised negative log-likelihood with `theta` held
/// fixed: `-x_v theta_j / (Phi theta)_v` on the support of `x`.
pub fn grad_phi_unsup<P: TopicColumns + ?Sized>(x: &SparseBow, phi: &P, theta: &[f64]) -> Result<SparsePhiGrad> {
    let rows = SupportRows::gather(x, phi)?;
    if theta.len() != rows.k {
        return Err(Error::DimensionMismatch(format!("theta has {} entries, expected {}", theta.len(), rows.k)));
    }
    Ok(unsup_gathered(&rows, x.ids(), theta))
}

pub(crate) fn unsup_gathered(rows: &SupportRows, ids: &[usize], theta: &[f64]) -> SparsePhiGrad {
    let k = rows.k;
    let mut out = Vec::with_capacity(ids.len() * k);
    for (m, c) in rows.mix(theta).iter().zip(&rows.counts) {
        out.extend(theta.iter().map(|t| -c * t / m));
    }
    SparsePhiGrad { ids: ids.to_vec(), rows: out, num_topics: k }
}
