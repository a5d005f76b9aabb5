//! Bessel functions of the first kind and the positive roots of their
//! derivatives, as needed by the disk eigenbasis.
//!
//! The ascending power series loses digits to cancellation once x grows
//! (noise ~ 1e-16 e^x / sqrt(x)), so beyond x = 12 the evaluation switches to
//! the normalized downward recurrence, which stays at absolute accuracy
//! ~1e-15 for all arguments of interest here.

use crate::error::{Result, SlabError};

const SERIES_LIMIT: f64 = 12.0;

/// J_n(x) for x >= 0.
pub fn bessel_j(n: u32, x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x <= SERIES_LIMIT {
        bessel_j_series(n, x)
    } else {
        bessel_j_recurrence(n, x)
    }
}

fn bessel_j_series(n: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    // term_0 = (x/2)^n / n!
    let mut term = 1.0;
    for k in 1..=n {
        term *= half / k as f64;
    }
    let mut sum = term;
    let m2 = half * half;
    for k in 1..200 {
        term *= -m2 / (k as f64 * (k + n) as f64);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-30) {
            break;
        }
    }
    sum
}

/// Miller's algorithm: unnormalized downward recurrence, normalized with
/// J_0 + 2 sum_k J_{2k} = 1.
fn bessel_j_recurrence(n: u32, x: f64) -> f64 {
    if x == 0.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    let start = ((n as usize + 24 + (2.0 * x) as usize) | 1) + 1;
    let mut jp = 0.0_f64;
    let mut j = 1e-30_f64;
    let mut result = 0.0;
    let mut norm = 0.0;
    for k in (0..=start).rev() {
        let jm = 2.0 * (k as f64 + 1.0) / x * j - jp;
        jp = j;
        j = jm;
        if k % 2 == 0 {
            norm += if k == 0 { j } else { 2.0 * j };
        }
        if k == n as usize {
            result = j;
        }
        if j.abs() > 1e100 {
            jp /= 1e100;
            j /= 1e100;
            norm /= 1e100;
            result /= 1e100;
        }
    }
    result / norm
}

/// d/dx J_n(x).
pub fn bessel_j_prime(n: u32, x: f64) -> f64 {
    if n == 0 {
        -bessel_j(1, x)
    } else {
        0.5 * (bessel_j(n - 1, x) - bessel_j(n + 1, x))
    }
}

/// The `count` smallest positive roots of J_n'(x) = 0, strictly increasing.
///
/// Each root is located by a sign change of J_n' over a scan grid and then
/// refined by bisection; the residual |J_n'(root)| is checked against 1e-12.
pub fn bessel_prime_roots(n: u32, count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut roots = Vec::with_capacity(count);
    // J_n'(x) ~ c x^(n-1) near zero, so start the scan past the trivial
    // stationary point at the origin (n = 0 and n >= 2).
    let mut lo = 1e-3;
    let mut flo = bessel_j_prime(n, lo);
    let step = 0.02;
    let mut x = lo;
    while roots.len() < count {
        x += step;
        if x > 500.0 {
            return Err(SlabError::Config(format!(
                "failed to bracket root {} of J_{}'",
                roots.len() + 1,
                n
            )));
        }
        let fx = bessel_j_prime(n, x);
        if flo == 0.0 {
            roots.push(lo);
        } else if flo.signum() != fx.signum() {
            let root = bisect(|t| bessel_j_prime(n, t), lo, x);
            let residual = bessel_j_prime(n, root).abs();
            if residual >= 1e-12 {
                return Err(SlabError::QuadratureNonConvergence {
                    achieved: residual,
                    tolerance: 1e-12,
                });
            }
            roots.push(root);
        }
        lo = x;
        flo = fx;
    }
    Ok(roots)
}

fn bisect<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let fm = f(m);
        if fm == 0.0 || (b - a) < 1e-16 * m.abs() {
            return m;
        }
        if fa.signum() != fm.signum() {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    0.5 * (a + b)
}
