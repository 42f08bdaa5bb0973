//! Verification tools kept independent of the production code paths:
//! finite differences, a dense reference forward pass, exhaustive MAP search
//! on small simplices, and a sampler for the generative model.

mod brute;
pub mod dd;
mod forward;
mod gradcheck;
mod synth;

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

pub use brute::brute_map;
pub use dd::DD;
pub use crate::model::sample_dirichlet;
pub use forward::{dense_forward, dense_loss, dense_nll, dense_objective, dense_prior};
pub use gradcheck::{run_gradcheck, GradcheckConfig, GradcheckReport, Offender};
pub use synth::{sample_corpus, SynthCorpus, SynthSpec};

use crate::error::{Error, Result};

/// Scalar type the reference computations are generic over.
pub trait Real:
    Copy
    + Debug
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
{
    fn of(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
}

impl Real for f64 {
    fn of(x: f64) -> f64 {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn exp(self) -> f64 {
        f64::exp(self)
    }
    fn ln(self) -> f64 {
        f64::ln(self)
    }
}

impl Real for DD {
    fn of(x: f64) -> DD {
        DD::new(x)
    }
    fn to_f64(self) -> f64 {
        DD::to_f64(self)
    }
    fn exp(self) -> DD {
        DD::exp(self)
    }
    fn ln(self) -> DD {
        DD::ln(self)
    }
}

/// Central differences `(f(x + h e_i) - f(x - h e_i)) / 2h` in double precision.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, point: &[f64], h: f64) -> Result<Vec<f64>> {
    central_differences::<f64, _>(f, point, |_| h)
}

/// Central differences evaluated in the scalar type `R`, with the step for
/// coordinate `i` shrunk to `h * min(1, |x_i|)` so that small positive
/// entries (and their logarithms) are resolved. The perturbed points are
/// exact in double-double, so only truncation error remains.
pub fn fd_gradient_in<R: Real, F: Fn(&[R]) -> R>(f: F, point: &[f64], h: f64) -> Result<Vec<f64>> {
    central_differences(f, point, |x| if x == 0.0 { h } else { h * x.abs().min(1.0) })
}

fn central_differences<R: Real, F: Fn(&[R]) -> R>(f: F, point: &[f64], step: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    let mut x: Vec<R> = point.iter().map(|&p| R::of(p)).collect();
    let mut grad = Vec::with_capacity(point.len());
    for i in 0..point.len() {
        let h = step(point[i]);
        let base = x[i];
        x[i] = base + R::of(h);
        let up = f(&x);
        x[i] = base - R::of(h);
        let down = f(&x);
        x[i] = base;
        let g = ((up - down) / R::of(2.0 * h)).to_f64();
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("finite difference at coordinate {i}")));
        }
        grad.push(g);
    }
    Ok(grad)
}

/// `|a - b| / max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let g = fd_gradient(|x| x[0] * x[0], &[1.0], 1e-3).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-6);
        let g = fd_gradient(|x| 3.0 * x[0] * x[0] - x[0] * x[1] + 2.0 * x[1], &[0.5, -2.0], 1e-2).unwrap();
        assert!((g[0] - 5.0).abs() < 1e-12 && (g[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn linear_is_exact_for_any_step() {
        for h in [1e-8, 1e-3, 0.5, 10.0] {
            let g = fd_gradient(|x| 4.0 * x[0] - 0.25 * x[1] + 7.0, &[1.0, 2.0], h).unwrap();
            assert!((g[0] - 4.0).abs() < 1e-6 && (g[1] + 0.25).abs() < 1e-6, "h = {h}");
        }
    }

    #[test]
    fn double_double_removes_rounding_floor() {
        let f = |x: &[DD]| (x[0] * x[0] * x[0]).ln();
        let g = fd_gradient_in(f, &[0.7], 1e-6).unwrap();
        assert!((g[0] - 3.0 / 0.7).abs() < 1e-10);
    }

    #[test]
    fn non_finite_is_reported() {
        let err = fd_gradient(|x| x[0].ln(), &[0.0], 1e-3);
        assert!(matches!(err, Err(Error::NonFinite(_))));
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1e-10, 0.0), 1e-2);
        assert_eq!(relative_error(2.0, 1.0), 0.5);
    }
}
