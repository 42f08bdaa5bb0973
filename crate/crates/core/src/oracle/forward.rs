//! Dense reference implementations of the forward pass and losses, written
//! directly from the definitions over every vocabulary row and generic over
//! the scalar type. `phi` is a row-major `V x K` slice.

use super::Real;
use crate::inference::THETA_FLOOR;
use crate::model::Task;

fn mixture<R: Real>(phi: &[R], k: usize, theta: &[R]) -> Vec<R> {
    phi.chunks(k)
        .map(|row| {
            let mut m = R::of(0.0);
            for (p, t) in row.iter().zip(theta) {
                m += *p * *t;
            }
            m
        })
        .collect()
}

pub fn dense_objective<R: Real>(phi: &[R], k: usize, x: &[f64], theta: &[R], alpha: f64) -> R {
    let mut f = R::of(0.0);
    for (m, &xv) in mixture(phi, k, theta).into_iter().zip(x) {
        if xv != 0.0 {
            f += -(R::of(xv) * m.ln());
        }
    }
    for &t in theta {
        f += -(R::of(alpha - 1.0) * t.ln());
    }
    f
}

/// Mirror descent with the given per-layer step sizes, from the uniform point.
/// Returns `theta_0 .. theta_L`.
pub fn dense_forward<R: Real>(phi: &[R], k: usize, x: &[f64], alpha: f64, steps: &[f64]) -> Vec<Vec<R>> {
    let mut iterates = vec![vec![R::of(1.0 / k as f64); k]];
    for &step in steps {
        let theta = iterates.last().unwrap();
        let mix = mixture(phi, k, theta);
        let mut exponent = vec![R::of(0.0); k];
        for (row, (&xv, m)) in phi.chunks(k).zip(x.iter().zip(&mix)) {
            let ratio = R::of(xv) / *m;
            for (e, p) in exponent.iter_mut().zip(row) {
                *e += *p * ratio;
            }
        }
        for (e, &t) in exponent.iter_mut().zip(theta) {
            let floored = if t < R::of(THETA_FLOOR) { R::of(THETA_FLOOR) } else { t };
            *e = R::of(step) * (*e + R::of(alpha - 1.0) / floored);
        }
        let max = exponent.iter().copied().fold(exponent[0], |a, b| if b > a { b } else { a });
        let unnorm: Vec<R> = theta.iter().zip(&exponent).map(|(&t, &e)| t * (e - max).exp()).collect();
        let mut total = R::of(0.0);
        for &u in &unnorm {
            total += u;
        }
        let next = unnorm
            .into_iter()
            .map(|u| {
                let t = u / total;
                if t < R::of(f64::MIN_POSITIVE) { R::of(f64::MIN_POSITIVE) } else { t }
            })
            .collect();
        iterates.push(next);
    }
    iterates
}

/// Supervised per-document loss; `u` is row-major `C x K`.
pub fn dense_loss<R: Real>(theta: &[R], u: &[R], target: &[f64], gamma: f64, task: Task) -> R {
    let k = theta.len();
    let scores: Vec<R> = u
        .chunks(k)
        .map(|row| {
            let mut s = R::of(0.0);
            for (w, t) in row.iter().zip(theta) {
                s += *w * *t;
            }
            s
        })
        .collect();
    match task {
        Task::Classification { .. } => {
            let mut total = R::of(0.0);
            for &s in &scores {
                total += (R::of(gamma) * s).exp();
            }
            let mut loss = total.ln();
            for (&s, &y) in scores.iter().zip(target) {
                loss += -(R::of(gamma * y) * s);
            }
            loss
        }
        _ => {
            let mut sq = R::of(0.0);
            for (&s, &y) in scores.iter().zip(target) {
                let r = R::of(y) - s;
                sq += r * r;
            }
            sq / R::of(2.0 * gamma)
        }
    }
}

/// `-sum_v x_v ln (Phi theta)_v` with `theta` fixed.
pub fn dense_nll<R: Real>(phi: &[R], k: usize, x: &[f64], theta: &[f64]) -> R {
    let theta: Vec<R> = theta.iter().map(|&t| R::of(t)).collect();
    dense_objective(phi, k, x, &theta, 1.0)
}

/// `-(beta - 1) / n_docs * sum ln Phi`.
pub fn dense_prior<R: Real>(phi: &[R], beta: f64, n_docs: usize) -> R {
    let mut total = R::of(0.0);
    for &p in phi {
        total += p.ln();
    }
    -(R::of((beta - 1.0) / n_docs as f64) * total)
}
