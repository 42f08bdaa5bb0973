use crate::corpus::SparseBow;
use crate::error::{Error, Result};
use crate::model::TopicColumns;

/// Exhaustive minimization of the MAP objective over a simplex grid of
/// spacing `resolution`. Grid points are pulled into the interior by
/// `resolution / 10` so every logarithm stays finite.
pub fn brute_map<P: TopicColumns + ?Sized>(x: &SparseBow, phi: &P, alpha: f64, resolution: f64) -> Result<Vec<f64>> {
    let k = phi.num_topics();
    if k > 3 {
        return Err(Error::KTooLarge(k));
    }
    if !(resolution > 0.0 && resolution <= 1e-2) {
        return Err(Error::Invalid(format!("grid resolution must lie in (0, 1e-2], got {resolution}")));
    }
    if k == 1 {
        return Ok(vec![1.0]);
    }
    let n = (1.0 / resolution).round() as usize;
    let shift = resolution / 10.0;
    let scale = 1.0 / (1.0 + k as f64 * shift);
    let coord = |i: usize| (i as f64 / n as f64 + shift) * scale;

    let rows: Vec<(f64, Vec<f64>)> = x.iter().map(|(v, c)| (c, (0..k).map(|j| phi.entry(v, j)).collect())).collect();
    let eval = |theta: &[f64]| -> f64 {
        // one logarithm per point when the product stays representable
        let mut prod = 1.0;
        for (c, row) in &rows {
            let m: f64 = row.iter().zip(theta).map(|(a, b)| a * b).sum();
            prod *= m.powi(*c as i32);
        }
        let like = if prod > 1e-280 && prod.is_finite() {
            prod.ln()
        } else {
            rows.iter()
                .map(|(c, row)| c * row.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>().ln())
                .sum()
        };
        -like - (alpha - 1.0) * theta.iter().product::<f64>().ln()
    };

    if k == 2 {
        let mut best = (f64::INFINITY, Vec::new());
        for i in 0..=n {
            let theta = [coord(i), coord(n - i)];
            let f = eval(&theta);
            if f < best.0 {
                best = (f, theta.to_vec());
            }
        }
        return Ok(best.1);
    }

    // K = 3: maximize exp(-f) = prod_v m_v^c_v * (t0 t1 t2)^(alpha - 1) without
    // a logarithm per point. Along the inner index the mixture m_v is affine.
    // Points whose score leaves the normal range fall back to `eval`.
    let prior: Vec<f64> = (0..=n).map(|i| coord(i).powf(alpha - 1.0)).collect();
    let step = scale / n as f64;
    let mut best_f = f64::INFINITY;
    let mut best = Vec::new();
    let mut threshold = 0.0;
    let mut base = vec![0.0; rows.len()];
    let slope: Vec<f64> = rows.iter().map(|(_, r)| (r[1] - r[2]) * step).collect();
    for i in 0..=n {
        let t0 = coord(i);
        let rest = n - i;
        for (b, (_, r)) in base.iter_mut().zip(&rows) {
            *b = t0 * r[0] + coord(0) * r[1] + coord(rest) * r[2];
        }
        for j in 0..=rest {
            let jf = j as f64;
            let mut score = prior[i] * prior[j] * prior[rest - j];
            for ((b, d), (c, _)) in base.iter().zip(&slope).zip(&rows) {
                score *= (b + jf * d).powi(*c as i32);
            }
            if score > 1e-290 && score.is_finite() {
                if score > threshold {
                    let theta = [t0, coord(j), coord(rest - j)];
                    let f = eval(&theta);
                    if f < best_f {
                        best_f = f;
                        best = theta.to_vec();
                        threshold = (-f).exp();
                    }
                }
            } else {
                let theta = [t0, coord(j), coord(rest - j)];
                let f = eval(&theta);
                if f < best_f {
                    best_f = f;
                    best = theta.to_vec();
                    threshold = (-f).exp();
                }
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::map_objective;
    use crate::model::{RawTopics, TopicMatrix};
    use ndarray::Array2;

    #[test]
    fn identity_optimum_is_empirical() {
        let eye = Array2::eye(2);
        let x = SparseBow::new(2, vec![(0, 3), (1, 1)]).unwrap();
        let theta = brute_map(&x, &RawTopics(eye.view()), 1.0, 1e-3).unwrap();
        assert!((theta[0] - 0.75).abs() <= 1e-3 && (theta[1] - 0.25).abs() <= 1e-3);
    }

    #[test]
    fn strong_prior_pulls_to_uniform() {
        let phi = TopicMatrix::from_columns(&[vec![0.7, 0.2, 0.1], vec![0.1, 0.3, 0.6], vec![0.3, 0.4, 0.3]]).unwrap();
        let x = SparseBow::new(3, vec![(0, 4), (2, 1)]).unwrap();
        let theta = brute_map(&x, &phi, 100.0, 1e-2).unwrap();
        for t in theta {
            assert!((t - 1.0 / 3.0).abs() < 0.05);
        }
    }

    #[test]
    fn argmin_is_a_lower_envelope() {
        let phi = TopicMatrix::from_columns(&[vec![0.5, 0.3, 0.2], vec![0.2, 0.2, 0.6]]).unwrap();
        let x = SparseBow::new(3, vec![(0, 2), (1, 1), (2, 3)]).unwrap();
        let best = brute_map(&x, &phi, 1.3, 1e-2).unwrap();
        let f_best = map_objective(&best, &x, &phi, 1.3).unwrap();
        let scale = 1.0 / (1.0 + 2e-3);
        for i in 0..=100 {
            let t0 = (i as f64 / 100.0 + 1e-3) * scale;
            let t1 = ((100 - i) as f64 / 100.0 + 1e-3) * scale;
            assert!(map_objective(&[t0, t1], &x, &phi, 1.3).unwrap() >= f_best - 1e-12);
        }
    }

    #[test]
    fn three_topics_match_plain_scan() {
        let phi = TopicMatrix::from_columns(&[vec![0.6, 0.3, 0.099, 1e-3], vec![0.1, 0.1, 0.4, 0.4], vec![0.25; 4]]).unwrap();
        let x = SparseBow::new(4, vec![(0, 5), (2, 2), (3, 9)]).unwrap();
        for alpha in [0.7, 1.0, 2.5] {
            let best = brute_map(&x, &phi, alpha, 1e-2).unwrap();
            let f_best = map_objective(&best, &x, &phi, alpha).unwrap();
            let scale = 1.0 / (1.0 + 3e-3);
            let mut f_min = f64::INFINITY;
            for i in 0..=100 {
                for j in 0..=100 - i {
                    let t = [i, j, 100 - i - j].map(|c| (c as f64 / 100.0 + 1e-3) * scale);
                    f_min = f_min.min(map_objective(&t, &x, &phi, alpha).unwrap());
                }
            }
            assert!((f_best - f_min).abs() <= 1e-12 * f_min.abs(), "alpha {alpha}: {f_best} vs {f_min}");
        }
    }

    #[test]
    fn guards() {
        let phi = TopicMatrix::uniform(3, 4).unwrap();
        let x = SparseBow::new(3, vec![(0, 1)]).unwrap();
        assert!(matches!(brute_map(&x, &phi, 1.0, 1e-2), Err(Error::KTooLarge(4))));
        let phi = TopicMatrix::uniform(3, 2).unwrap();
        assert!(matches!(brute_map(&x, &phi, 1.0, 0.1), Err(Error::Invalid(_))));
    }
}
