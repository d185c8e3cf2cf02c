//! Dual coordinate descent for L2-regularized linear SVM (hinge loss) and
//! SVR (epsilon-insensitive loss).
//!
//! Both minimize `lambda/2 * |w|^2 + mean(loss)` over `w` including a bias
//! weight on an appended constant-1 feature. The coordinate order is a fresh
//! permutation per epoch from a seeded generator, so results are
//! reproducible bit for bit.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[inline]
fn dot_biased(w: &[f64], x: &[f32]) -> f64 {
    let d = x.len();
    let mut s = w[d];
    for (wi, &xi) in w[..d].iter().zip(x) {
        s += wi * f64::from(xi);
    }
    s
}

#[inline]
fn axpy_biased(w: &mut [f64], a: f64, x: &[f32]) {
    let d = x.len();
    for (wi, &xi) in w[..d].iter_mut().zip(x) {
        *wi += a * f64::from(xi);
    }
    w[d] += a;
}

fn sq_norm_biased(x: &[f32]) -> f64 {
    1.0 + x.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>()
}

/// SVM training stops once the spread of projected gradients over an epoch
/// falls to this value.
pub const SVM_PG_TOL: f64 = 1e-4;

/// Hinge-loss SVM; `y` holds +-1. Returns `d + 1` weights, bias last.
/// `epochs` caps the number of passes.
pub fn train_svm(x: &[Vec<f32>], y: &[f64], lambda: f64, epochs: usize, seed: u64) -> Vec<f64> {
    let n = x.len();
    let d = x.first().map_or(0, Vec::len);
    let c = 1.0 / (lambda * n as f64);
    let q: Vec<f64> = x.iter().map(|r| sq_norm_biased(r)).collect();
    let mut alpha = vec![0.0f64; n];
    let mut w = vec![0.0f64; d + 1];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        let (mut pg_max, mut pg_min) = (f64::NEG_INFINITY, f64::INFINITY);
        for &i in &order {
            let g = y[i] * dot_biased(&w, &x[i]) - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= c {
                g.max(0.0)
            } else {
                g
            };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / q[i]).clamp(0.0, c);
                axpy_biased(&mut w, (alpha[i] - old) * y[i], &x[i]);
            }
        }
        if pg_max - pg_min <= SVM_PG_TOL {
            break;
        }
    }
    w
}

/// Epsilon-insensitive SVR. Returns `d + 1` weights, bias last.
pub fn train_svr(x: &[Vec<f32>], y: &[f64], epsilon: f64, lambda: f64, epochs: usize, seed: u64) -> Vec<f64> {
    let n = x.len();
    let d = x.first().map_or(0, Vec::len);
    let c = 1.0 / (lambda * n as f64);
    let q: Vec<f64> = x.iter().map(|r| sq_norm_biased(r)).collect();
    let mut beta = vec![0.0f64; n];
    let mut w = vec![0.0f64; d + 1];
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let g = dot_biased(&w, &x[i]) - y[i];
            let (gp, gn) = (g + epsilon, g - epsilon);
            let qb = q[i] * beta[i];
            let z = if gp < qb {
                beta[i] - gp / q[i]
            } else if gn > qb {
                beta[i] - gn / q[i]
            } else {
                0.0
            };
            let z = z.clamp(-c, c);
            if z != beta[i] {
                axpy_biased(&mut w, z - beta[i], &x[i]);
                beta[i] = z;
            }
        }
    }
    w
}

/// `lambda/2 |w|^2 + mean(max(0, 1 - y f(x)))`.
pub fn svm_objective(w: &[f64], x: &[Vec<f32>], y: &[f64], lambda: f64) -> f64 {
    let reg = 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
    let loss: f64 = x.iter().zip(y).map(|(r, &t)| (1.0 - t * dot_biased(w, r)).max(0.0)).sum();
    reg + loss / x.len() as f64
}

/// `lambda/2 |w|^2 + mean(max(0, |f(x) - y| - epsilon))`.
pub fn svr_objective(w: &[f64], x: &[Vec<f32>], y: &[f64], epsilon: f64, lambda: f64) -> f64 {
    let reg = 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
    let loss: f64 = x
        .iter()
        .zip(y)
        .map(|(r, &t)| ((dot_biased(w, r) - t).abs() - epsilon).max(0.0))
        .sum();
    reg + loss / x.len() as f64
}

pub fn predict(w: &[f64], x: &[f32]) -> f64 {
    dot_biased(w, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    /// Averaged projected subgradient descent run for a long time; an
    /// independent reference for the optimum.
    fn reference_svm(x: &[Vec<f32>], y: &[f64], lambda: f64, iters: usize) -> Vec<f64> {
        let d = x[0].len();
        let n = x.len();
        let mut w = vec![0.0f64; d + 1];
        let mut avg = vec![0.0f64; d + 1];
        let radius = 1.0 / lambda.sqrt();
        for t in 1..=iters {
            let eta = 1.0 / (lambda * t as f64);
            let mut grad: Vec<f64> = w.iter().map(|v| lambda * v).collect();
            for (r, &yi) in x.iter().zip(y) {
                if yi * dot_biased(&w, r) < 1.0 {
                    for (g, v) in grad.iter_mut().zip(r.iter().map(|v| f64::from(*v)).chain([1.0])) {
                        *g -= yi * v / n as f64;
                    }
                }
            }
            for (wi, g) in w.iter_mut().zip(&grad) {
                *wi -= eta * g;
            }
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > radius {
                w.iter_mut().for_each(|v| *v *= radius / norm);
            }
            // average the second half of the trajectory
            if t > iters / 2 {
                let k = (t - iters / 2) as f64;
                for (a, v) in avg.iter_mut().zip(&w) {
                    *a += (v - *a) / k;
                }
            }
        }
        avg
    }

    fn reference_svr(x: &[Vec<f32>], y: &[f64], eps: f64, lambda: f64, iters: usize) -> Vec<f64> {
        let d = x[0].len();
        let n = x.len() as f64;
        let mut w = vec![0.0f64; d + 1];
        let mut avg = vec![0.0f64; d + 1];
        for t in 1..=iters {
            let eta = 1.0 / (lambda * t as f64);
            let mut grad: Vec<f64> = w.iter().map(|v| lambda * v).collect();
            for (r, &yi) in x.iter().zip(y) {
                let e = dot_biased(&w, r) - yi;
                if e.abs() > eps {
                    for (g, v) in grad.iter_mut().zip(r.iter().map(|v| f64::from(*v)).chain([1.0])) {
                        *g += e.signum() * v / n;
                    }
                }
            }
            for (wi, g) in w.iter_mut().zip(&grad) {
                *wi -= eta * g;
            }
            if t > iters / 2 {
                let k = (t - iters / 2) as f64;
                for (a, v) in avg.iter_mut().zip(&w) {
                    *a += (v - *a) / k;
                }
            }
        }
        avg
    }

    fn noisy_classes(seed: u64, n: usize, d: usize) -> (Vec<Vec<f32>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = if i % 2 == 0 { 1.0 } else { -1.0 };
            let row: Vec<f32> = (0..d)
                .map(|j| rng.random_range(-1.0..1.0f32) + if j == 0 { 0.4 * label as f32 } else { 0.0 })
                .collect();
            x.push(row);
            y.push(label);
        }
        // contradictory duplicates
        for i in 0..4 {
            x.push(x[i].clone());
            y.push(-y[i]);
        }
        (x, y)
    }

    #[test]
    fn separable_toy_set() {
        let x: Vec<Vec<f32>> = (0..20).map(|i| vec![if i % 2 == 0 { 1.0 + i as f32 * 0.1 } else { -1.0 - i as f32 * 0.1 }, 0.3]).collect();
        let y: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let w = train_svm(&x, &y, 1e-3, 50, 0);
        assert!(x.iter().zip(&y).all(|(r, &t)| t * predict(&w, r) > 0.0));
    }

    #[test]
    fn svm_matches_long_run_reference() {
        let (x, y) = noisy_classes(1, 40, 4);
        let lambda = 0.05;
        let w = train_svm(&x, &y, lambda, 50, 3);
        let r = reference_svm(&x, &y, lambda, 100_000);
        let (ours, reference) = (svm_objective(&w, &x, &y, lambda), svm_objective(&r, &x, &y, lambda));
        assert!(ours <= reference * 1.01, "{ours} vs {reference}");
    }

    #[test]
    fn stronger_regularization_shrinks_weights() {
        let (x, y) = noisy_classes(2, 30, 3);
        let norm = |w: &[f64]| w.iter().map(|v| v * v).sum::<f64>().sqrt();
        let small = train_svm(&x, &y, 1e-3, 50, 0);
        let large = train_svm(&x, &y, 1e3, 50, 0);
        assert!(norm(&large) < norm(&small));
    }

    #[test]
    fn svr_matches_long_run_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<Vec<f32>> = (0..50).map(|_| (0..3).map(|_| rng.random::<f32>()).collect()).collect();
        let y: Vec<f64> = x.iter().map(|r| (0.5 * r[0] as f64 - 0.2 * r[1] as f64 + 0.3 + rng.random_range(-0.1..0.1)).clamp(0.0, 1.0)).collect();
        let (eps, lambda) = (0.05, 0.05);
        let w = train_svr(&x, &y, eps, lambda, 200, 1);
        let r = reference_svr(&x, &y, eps, lambda, 100_000);
        let (ours, reference) = (svr_objective(&w, &x, &y, eps, lambda), svr_objective(&r, &x, &y, eps, lambda));
        assert!(ours <= reference * 1.01, "{ours} vs {reference}");
    }

    #[test]
    fn deterministic_under_seed() {
        let (x, y) = noisy_classes(3, 20, 3);
        assert_eq!(train_svm(&x, &y, 1e-3, 50, 9), train_svm(&x, &y, 1e-3, 50, 9));
        assert_eq!(train_svr(&x, &y, 0.1, 1e-3, 20, 9), train_svr(&x, &y, 0.1, 1e-3, 20, 9));
    }
}
