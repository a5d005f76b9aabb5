//! Dense complex helpers: Schur complements, determinants, condition
//! numbers and eigenvalues of small matrices.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Result, SlabError};

/// Determinant via LU with partial pivoting.
pub fn det(a: &DMatrix<Complex64>) -> Complex64 {
    a.clone().lu().determinant()
}

/// Solve A X = B.
pub fn solve(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    a.clone()
        .lu()
        .solve(b)
        .ok_or_else(|| SlabError::Config("singular linear system".into()))
}

/// Largest and smallest singular values.
pub fn extreme_singular_values(a: &DMatrix<Complex64>) -> (f64, f64) {
    let svd = a.clone().svd(false, false);
    let max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let min = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    (max, min)
}

/// 2-norm condition number (f64::INFINITY for singular input).
pub fn cond2(a: &DMatrix<Complex64>) -> f64 {
    let (max, min) = extreme_singular_values(a);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn sigma_min(a: &DMatrix<Complex64>) -> f64 {
    extreme_singular_values(a).1
}

/// Schur complement of the trailing block: given the partitioned matrix
/// [[A_bb, A_ba], [A_ab, A_aa]] with the leading `nb x nb` block A_bb,
/// returns A_bb - A_ba A_aa^{-1} A_ab.
pub fn schur_complement(full: &DMatrix<Complex64>, nb: usize) -> Result<DMatrix<Complex64>> {
    let n = full.nrows();
    assert_eq!(n, full.ncols());
    assert!(nb <= n);
    if nb == n {
        return Ok(full.clone());
    }
    let a_bb = full.view((0, 0), (nb, nb)).clone_owned();
    let a_ba = full.view((0, nb), (nb, n - nb)).clone_owned();
    let a_ab = full.view((nb, 0), (n - nb, nb)).clone_owned();
    let a_aa = full.view((nb, nb), (n - nb, n - nb)).clone_owned();
    let x = solve(&a_aa, &a_ab)?;
    Ok(a_bb - a_ba * x)
}

/// Eigenvalues of a small complex matrix via the characteristic polynomial
/// (Faddeev-LeVerrier) and Durand-Kerner iteration. Intended for the N x N
/// coupling matrices with N at most ~12.
pub fn small_eigenvalues(a: &DMatrix<Complex64>) -> Vec<Complex64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    match n {
        0 => return Vec::new(),
        1 => return vec![a[(0, 0)]],
        2 => {
            let tr = a[(0, 0)] + a[(1, 1)];
            let dt = a[(0, 0)] * a[(1, 1)] - a[(0, 1)] * a[(1, 0)];
            let disc = (tr * tr - 4.0 * dt).sqrt();
            return vec![0.5 * (tr + disc), 0.5 * (tr - disc)];
        }
        _ => {}
    }
    // char poly coefficients: p(x) = x^n + c_1 x^(n-1) + ... + c_n
    // Faddeev-LeVerrier: M_k = (M_{k-1} + c_{k-1} I) A, c_k = -tr(M_k)/k.
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    let mut m = a.clone();
    let mut c = -trace(&m);
    coeffs.push(c);
    for k in 2..=n {
        let mut shifted = m;
        for i in 0..n {
            shifted[(i, i)] += c;
        }
        m = shifted * a;
        c = -trace(&m) / (k as f64);
        coeffs.push(c);
    }
    durand_kerner(&coeffs)
}

fn trace(a: &DMatrix<Complex64>) -> Complex64 {
    (0..a.nrows()).map(|i| a[(i, i)]).sum()
}

/// All roots of a monic polynomial given by coefficients [1, c1, ..., cn].
fn durand_kerner(coeffs: &[Complex64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    let eval = |x: Complex64| -> Complex64 {
        let mut v = Complex64::new(0.0, 0.0);
        for &c in coeffs {
            v = v * x + c;
        }
        v
    };
    // radius bound: 1 + max |c_i|
    let radius = 1.0 + coeffs.iter().skip(1).map(|c| c.norm()).fold(0.0, f64::max);
    let mut roots: Vec<Complex64> = (0..n)
        .map(|i| {
            let angle = 2.0 * std::f64::consts::PI * (i as f64 + 0.25) / n as f64;
            radius * 0.7 * Complex64::new(angle.cos(), angle.sin())
        })
        .collect();
    for _ in 0..400 {
        let mut moved: f64 = 0.0;
        for i in 0..n {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if i != j {
                    denom *= roots[i] - roots[j];
                }
            }
            if denom.norm() < 1e-300 {
                continue;
            }
            let delta = eval(roots[i]) / denom;
            roots[i] -= delta;
            moved = moved.max(delta.norm());
        }
        if moved < 1e-14 * radius.max(1.0) {
            break;
        }
    }
    roots
}
