//! Randomized comparison of every analytic gradient against central
//! differences of the dense reference implementations.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{dense_forward, dense_loss, dense_nll, dense_objective, dense_prior, fd_gradient_in, relative_error, sample_dirichlet, DD};
use crate::corpus::SparseBow;
use crate::error::Result;
use crate::gradients::{backprop_phi, grad_phi_unsup, grad_u, prior_grad_phi};
use crate::inference::{infer_theta, map_gradient, predict, MdaOptions};
use crate::model::{OutputParams, Task, TopicColumns, TopicMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub h: f64,
    pub tolerance: f64,
    /// Coordinates where both gradients are below this magnitude are skipped.
    pub threshold: f64,
    pub topics: Vec<usize>,
    pub vocab_sizes: Vec<usize>,
    pub depths: Vec<usize>,
    pub alphas: Vec<f64>,
    /// Negates the analytic back-propagated gradient. Exists to show the
    /// check can fail.
    pub flip_sign: bool,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            seed: 0,
            h: 1e-6,
            tolerance: 1e-6,
            threshold: 1e-8,
            topics: vec![2, 3, 5],
            vocab_sizes: vec![5, 10],
            depths: vec![1, 3, 5],
            alphas: vec![0.9, 1.001, 2.0],
            flip_sign: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Offender {
    pub instance: usize,
    pub gradient: &'static str,
    /// Row and column of the offending coordinate (column 0 for vectors).
    pub coordinate: (usize, usize),
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub instances: usize,
    pub coordinates: usize,
    pub failures: usize,
    pub worst: Option<Offender>,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.instances > 0
    }

    pub fn max_relative_error(&self) -> f64 {
        self.worst.as_ref().map_or(0.0, |w| w.relative_error)
    }

    fn record(&mut self, cfg: &GradcheckConfig, instance: usize, gradient: &'static str, cols: usize, analytic: &[f64], numeric: &[f64]) {
        for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
            if a.abs().max(n.abs()) <= cfg.threshold {
                continue;
            }
            self.coordinates += 1;
            let rel = relative_error(a, n);
            if rel > cfg.tolerance {
                self.failures += 1;
            }
            if self.worst.as_ref().is_none_or(|w| rel > w.relative_error) {
                self.worst = Some(Offender {
                    instance,
                    gradient,
                    coordinate: (i / cols, i % cols),
                    analytic: a,
                    numeric: n,
                    relative_error: rel,
                });
            }
        }
    }
}

struct Instance {
    phi: TopicMatrix,
    x: SparseBow,
    u: OutputParams,
    target: Vec<f64>,
    task: Task,
    alpha: f64,
    gamma: f64,
    depth: usize,
}

fn make_instance(rng: &mut ChaCha8Rng, k: usize, v: usize, depth: usize, alpha: f64, classification: bool) -> Result<Instance> {
    let columns: Vec<Vec<f64>> = (0..k).map(|_| sample_dirichlet(rng, 1.0, v)).collect();
    let phi = TopicMatrix::from_columns(&columns)?;
    let mut counts: Vec<u32> = (0..v).map(|_| if rng.random_bool(0.6) { rng.random_range(1..6) } else { 0 }).collect();
    if counts.iter().all(|&c| c == 0) {
        counts[rng.random_range(0..v)] = 1;
    }
    let (c, task) = if classification {
        let c = rng.random_range(2..4);
        (c, Task::Classification { num_classes: c })
    } else {
        (1, Task::Regression { output_dim: 1 })
    };
    let u = OutputParams::new(Array2::from_shape_fn((c, k), |_| rng.random_range(-2.0..2.0)))?;
    let target = if classification {
        let mut t = vec![0.0; c];
        t[rng.random_range(0..c)] = 1.0;
        t
    } else {
        vec![rng.random_range(-3.0..3.0)]
    };
    Ok(Instance {
        phi,
        x: SparseBow::from_dense(&counts),
        u,
        target,
        task,
        alpha,
        gamma: rng.random_range(0.5..2.0),
        depth,
    })
}

fn row_major(m: &Array2<f64>) -> Vec<f64> {
    m.rows().into_iter().flatten().copied().collect()
}

fn phi_row_major(phi: &TopicMatrix) -> Vec<f64> {
    let (v, k) = (phi.vocab_size(), phi.num_topics());
    (0..v).flat_map(|r| (0..k).map(move |j| (r, j))).map(|(r, j)| phi.entry(r, j)).collect()
}

const PRIOR_BETA: f64 = 1.5;
const PRIOR_DOCS: usize = 7;

fn check_instance(cfg: &GradcheckConfig, index: usize, inst: &Instance, report: &mut GradcheckReport) -> Result<()> {
    let (v, k) = (inst.phi.vocab_size(), inst.phi.num_topics());
    let x = inst.x.to_dense();
    let phi_flat = phi_row_major(&inst.phi);
    // Step sizes come from one line-search run and are then frozen, so both
    // the analytic and the numeric side differentiate the same fixed-step map.
    // Arbitrary constant steps can make the unrolled map chaotic near the
    // simplex boundary, where no finite difference is meaningful.
    let traj = infer_theta(&inst.x, &inst.phi, inst.alpha, &MdaOptions { unroll_depth: inst.depth, ..Default::default() })?;
    let steps = traj.step_sizes().to_vec();
    let theta = traj.theta().to_vec();

    // back propagation through the unrolled layers
    let bp = backprop_phi(&inst.x, &inst.phi, &traj, &inst.u, &inst.target, inst.alpha, inst.gamma, inst.task)?;
    let sign = if cfg.flip_sign { -1.0 } else { 1.0 };
    let analytic: Vec<f64> = row_major(&bp.phi.to_dense(v)).into_iter().map(|g| sign * g).collect();
    let u_dd: Vec<DD> = row_major(&inst.u.weights).into_iter().map(DD::new).collect();
    let numeric = fd_gradient_in(
        |p: &[DD]| {
            let theta_l = dense_forward(p, k, &x, inst.alpha, &steps).pop().unwrap();
            dense_loss(&theta_l, &u_dd, &inst.target, inst.gamma, inst.task)
        },
        &phi_flat,
        cfg.h,
    )?;
    report.record(cfg, index, "backprop_phi", k, &analytic, &numeric);

    // output layer with theta_L fixed
    let prediction = predict(&theta, &inst.u, inst.gamma, inst.task)?;
    let analytic = row_major(&grad_u(&theta, &inst.target, &prediction, inst.gamma)?);
    let theta_dd: Vec<DD> = theta.iter().map(|&t| DD::new(t)).collect();
    let numeric = fd_gradient_in(
        |w: &[DD]| dense_loss(&theta_dd, w, &inst.target, inst.gamma, inst.task),
        &row_major(&inst.u.weights),
        cfg.h,
    )?;
    report.record(cfg, index, "grad_u", k, &analytic, &numeric);

    // unsupervised likelihood with theta_L fixed
    let analytic = row_major(&grad_phi_unsup(&inst.x, &inst.phi, &theta)?.to_dense(v));
    let numeric = fd_gradient_in(|p: &[DD]| dense_nll(p, k, &x, &theta), &phi_flat, cfg.h)?;
    report.record(cfg, index, "grad_phi_unsup", k, &analytic, &numeric);

    let analytic = row_major(&prior_grad_phi(&inst.phi, PRIOR_BETA, PRIOR_DOCS));
    let numeric = fd_gradient_in(|p: &[DD]| dense_prior(p, PRIOR_BETA, PRIOR_DOCS), &phi_flat, cfg.h)?;
    report.record(cfg, index, "prior_grad_phi", k, &analytic, &numeric);

    // MAP objective at an interior point, coordinates unconstrained
    let phi_dd: Vec<DD> = phi_flat.iter().map(|&p| DD::new(p)).collect();
    let interior: Vec<f64> = (0..k).map(|j| 0.5 * theta[j] + 0.5 / k as f64).collect();
    let analytic = map_gradient(&interior, &inst.x, &inst.phi, inst.alpha)?;
    let numeric = fd_gradient_in(|t: &[DD]| dense_objective(&phi_dd, k, &x, t, inst.alpha), &interior, cfg.h)?;
    report.record(cfg, index, "map_gradient", 1, &analytic, &numeric);
    Ok(())
}

/// Runs every combination of topics, vocabulary size, depth, alpha and
/// task head once, each with its own random instance.
pub fn run_gradcheck(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let mut report = GradcheckReport { instances: 0, coordinates: 0, failures: 0, worst: None, tolerance: cfg.tolerance };
    let mut index = 0;
    for &k in &cfg.topics {
        for &v in &cfg.vocab_sizes {
            for &depth in &cfg.depths {
                for &alpha in &cfg.alphas {
                    for classification in [false, true] {
                        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                        rng.set_stream(index as u64);
                        let inst = make_instance(&mut rng, k, v, depth, alpha, classification)?;
                        check_instance(cfg, index, &inst, &mut report)?;
                        report.instances += 1;
                        index += 1;
                    }
                }
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_suite_passes() {
        let report = run_gradcheck(&GradcheckConfig::default()).unwrap();
        assert!(report.instances >= 100);
        assert!(report.passed(), "{:?}", report.worst);
    }

    #[test]
    fn sign_flip_is_caught() {
        let cfg = GradcheckConfig { flip_sign: true, ..Default::default() };
        let report = run_gradcheck(&cfg).unwrap();
        assert!(!report.passed());
        assert_eq!(report.worst.unwrap().gradient, "backprop_phi");
    }

    #[test]
    fn report_is_deterministic() {
        let cfg = GradcheckConfig { topics: vec![2], depths: vec![3], ..Default::default() };
        assert_eq!(run_gradcheck(&cfg).unwrap(), run_gradcheck(&cfg).unwrap());
    }
}
