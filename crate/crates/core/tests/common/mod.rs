#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Random symmetric positive-definite matrix with eigenvalues roughly in
/// `[0.5, 0.5 + 2]`.
pub fn random_pd(p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::<f64>::from_fn(p, p, |_, _| StandardNormal.sample(rng));
    let mut s = &a * a.transpose() / p as f64;
    for i in 0..p {
        s[(i, i)] += 0.5;
    }
    (&s + s.transpose()) * 0.5
}

pub fn random_symmetric(p: usize, rng: &mut ChaCha8Rng, scale: f64) -> DMatrix<f64> {
    let mut m = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let v = scale * rng.random_range(-1.0..1.0);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn min_eig(a: &DMatrix<f64>) -> f64 {
    a.clone().symmetric_eigen().eigenvalues.min()
}

/// Proximal gradient on `½tr(T S T) - tr(T) + lambda * sum_{j != k} |T_jk|`,
/// iterated until successive iterates differ by less than `tol` (scaled by
/// the step). The caller checks that the result is positive definite, in
/// which case the semidefinite constraint is inactive and this is also the
/// constrained minimizer.
pub fn dtrace_oracle(sigma: &DMatrix<f64>, lambda: f64, tol: f64) -> DMatrix<f64> {
    let p = sigma.nrows();
    let lip = sigma.clone().symmetric_eigen().eigenvalues.max();
    let step = 1.0 / lip;
    let ident = DMatrix::<f64>::identity(p, p);
    let mut theta = DMatrix::<f64>::from_fn(p, p, |i, j| if i == j { 1.0 / sigma[(i, i)] } else { 0.0 });
    for _ in 0..2_000_000 {
        let grad = (sigma * &theta + &theta * sigma) * 0.5 - &ident;
        let mut next = &theta - grad * step;
        for i in 0..p {
            for j in 0..p {
                if i != j {
                    let v = next[(i, j)];
                    next[(i, j)] = v.signum() * (v.abs() - step * lambda).max(0.0);
                }
            }
        }
        let delta = max_abs_diff(&next, &theta) / step;
        theta = next;
        if delta < tol {
            break;
        }
    }
    theta
}

/// Smallest max-norm distance from a 2x2 symmetric matrix to the PSD cone,
/// by a coarse-to-fine search over the radius with an exact inner test: a
/// PSD point exists in the box of radius `t` iff the largest diagonal pair
/// `(a + t, c + t)` dominates the smallest achievable `|b|`.
pub fn psd_radius_2x2(a: f64, b: f64, c: f64) -> f64 {
    let feasible = |t: f64| {
        let d1 = a + t;
        let d2 = c + t;
        let off = (b.abs() - t).max(0.0);
        d1 >= 0.0 && d2 >= 0.0 && d1 * d2 >= off * off
    };
    let mut lo = 0.0;
    let mut hi = 1.0;
    while !feasible(hi) {
        hi *= 2.0;
    }
    if feasible(lo) {
        return 0.0;
    }
    // Grid refinement: 1000 points per level, five levels.
    for _ in 0..5 {
        let steps = 1000;
        let h = (hi - lo) / steps as f64;
        let first = (1..=steps).find(|&k| feasible(lo + k as f64 * h)).unwrap();
        hi = lo + first as f64 * h;
        lo = hi - h;
    }
    hi
}
