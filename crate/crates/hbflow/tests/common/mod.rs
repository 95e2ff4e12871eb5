//! Reference computations written independently of the library internals.
#![allow(dead_code)]

use hbflow::problems::{DiagonalNet, Problem, QuadraticProblem, RegressionData, TwoDModel};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `‖a − b‖ / max(‖b‖, floor)`.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    norm(&d) / norm(b).max(floor)
}

/// Coordinate-wise central differences of a scalar function.
pub fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let mut p = x.to_vec();
            let mut m = x.to_vec();
            p[i] += h;
            m[i] -= h;
            (f(&p) - f(&m)) / (2.0 * h)
        })
        .collect()
}

/// Jacobian of a vector field applied to `v`, by a fourth-order stencil
/// along `v` itself.
pub fn fd_jvp(f: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], v: &[f64], h: f64) -> Vec<f64> {
    let at = |s: f64| f(&x.iter().zip(v).map(|(a, b)| a + s * b).collect::<Vec<_>>());
    let (p1, m1, p2, m2) = (at(h), at(-h), at(2.0 * h), at(-2.0 * h));
    (0..x.len())
        .map(|i| (8.0 * (p1[i] - m1[i]) - (p2[i] - m2[i])) / (12.0 * h))
        .collect()
}

/// Full Hessian by central differences of the gradient.
pub fn fd_hessian(g: impl Fn(&[f64]) -> Vec<f64>, x: &[f64], h: f64) -> DMatrix<f64> {
    let d = x.len();
    let mut out = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut p = x.to_vec();
        let mut m = x.to_vec();
        p[j] += h;
        m[j] -= h;
        let (gp, gm) = (g(&p), g(&m));
        for i in 0..d {
            out[(i, j)] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    out
}

/// Straight-line heavy-ball recurrence.
pub fn reference_hb(grad: impl Fn(&[f64]) -> Vec<f64>, beta0: &[f64], eta: f64, mu: f64, n: usize) -> Vec<Vec<f64>> {
    let mut out = vec![beta0.to_vec()];
    let mut prev = beta0.to_vec();
    let mut cur = beta0.to_vec();
    for _ in 0..n {
        let g = grad(&cur);
        let next: Vec<f64> = (0..cur.len()).map(|i| cur[i] - eta * g[i] + mu * (cur[i] - prev[i])).collect();
        prev = cur;
        cur = next;
        out.push(cur.clone());
    }
    out
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Minimum-ℓ₁ interpolator by enumerating all size-`n` supports of an
/// `n × d` system (basic solutions of the ℓ₁ linear program).
pub fn min_l1_bruteforce(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<(Vec<f64>, f64)> {
    let (n, d) = x.shape();
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut support: Vec<usize> = (0..n).collect();
    loop {
        let sub = DMatrix::from_fn(n, n, |i, j| x[(i, support[j])]);
        if let Some(sol) = sub.lu().solve(y) {
            if sol.iter().all(|v| v.is_finite()) {
                let l1: f64 = sol.iter().map(|v| v.abs()).sum();
                if best.as_ref().is_none_or(|(_, b)| l1 < *b) {
                    let mut w = vec![0.0; d];
                    for (j, &s) in support.iter().enumerate() {
                        w[s] = sol[j];
                    }
                    best = Some((w, l1));
                }
            }
        }
        // next combination in lexicographic order
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if support[i] < d - n + i {
                break;
            }
        }
        support[i] += 1;
        for j in i + 1..n {
            support[j] = support[j - 1] + 1;
        }
    }
}

pub fn random_quadratic(rng: &mut ChaCha8Rng, d: usize) -> QuadraticProblem {
    let m = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    let a = &m * m.transpose() + DMatrix::identity(d, d) * 0.1;
    let a = (&a + a.transpose()) * 0.5;
    let b = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
    QuadraticProblem::new(a, b).expect("symmetric by construction")
}

pub fn random_regression(rng: &mut ChaCha8Rng, n: usize, d: usize) -> RegressionData {
    let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
    let y = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    RegressionData::new(x, y).expect("valid data")
}

/// The three analytic test problems with a matching random point.
pub fn problem_zoo(rng: &mut ChaCha8Rng) -> Vec<(Box<dyn Problem>, Vec<f64>)> {
    let two_d = TwoDModel::new(1.0, 0.6);
    let quad = random_quadratic(rng, 4);
    let net = DiagonalNet::new(random_regression(rng, 5, 3));
    vec![
        (Box::new(two_d), uniform_vec(rng, 2, -3.0, 3.0)),
        (Box::new(quad), uniform_vec(rng, 4, -3.0, 3.0)),
        (Box::new(net), uniform_vec(rng, 6, -1.5, 1.5)),
    ]
}

pub fn two_d() -> TwoDModel {
    TwoDModel::new(1.0, 0.6)
}

pub const BETA0: [f64; 2] = [2.8, 3.5];
