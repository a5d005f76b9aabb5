//! Closed-form small-h machinery: shape constants, the resonance-shift
//! function Pi, single-hole and N-hole resonance formulas, and the
//! leading-order Q law.
//!
//! Conventions. All formulas act on the dimensionless product kl; physical
//! frequencies divide by the thickness at the end. The shape enters through
//! two constants: (S0 1, 1) and the coupled-mode constant alpha. With
//! A = -(S0 1, 1) + alpha, the shift function is
//!
//!   Pi(eps) = A i eps + eps^2 / (2 pi),
//!
//! and a resonance of either parity near the Fabry-Perot point k_m satisfies
//!
//!   kl = k_m - 2 i Pi(eps_m) - (2 / k_m) Pi(eps_m) (2 Pi(eps_m) + eps_m^2/pi) + O(eps_m^3),
//!
//! with eps_m = k_m h / l. The alpha coefficient and the sign of the
//! second-order term are pinned by unit tests against the directly assembled
//! dispersion relation, which is the ground truth for both.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Result, SlabError};
use crate::gram::{S0Options, SingleGram};
use crate::linalg;
use crate::matching::{Assembly, Parity};

/// Validity guard fp * h / l < 0.2, i.e. eps_m = fp pi h / l < 0.2 pi.
pub const EPS_REGIME_LIMIT: f64 = 0.2 * std::f64::consts::PI;

/// Shape constants entering Pi.
#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct ShapeConstants {
    /// ( S0 1, 1 ): the static self-interaction of the constant mode.
    pub s0_one_one: f64,
    /// Coupled higher-mode constant <(I-P)^{-1} v, v>.
    pub alpha: f64,
    /// Truncation the constants were computed at.
    pub m_used: usize,
    /// |alpha(M) - alpha(M/2)|: Cauchy self-convergence indicator.
    pub alpha_convergence: f64,
}

fn alpha_at(s0: &DMatrix<f64>, eigenvalues: &[f64], m: usize) -> Result<f64> {
    // (I - P) with P_{m'm} = -lambda^{1/4}_{m'} lambda^{1/4}_m s0_{m'm}, m >= 1
    let mut ip = DMatrix::zeros(m, m);
    for a in 1..=m {
        for b in 1..=m {
            let w = eigenvalues[a].powf(0.25) * eigenvalues[b].powf(0.25);
            ip[(a - 1, b - 1)] = if a == b { 1.0 } else { 0.0 } + w * s0[(a, b)];
        }
    }
    let svd = ip.clone().svd(false, false);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let smin = svd
        .singular_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if smin == 0.0 || smax / smin >= 1e8 {
        return Err(SlabError::IllConditionedTruncation {
            cond: if smin == 0.0 { f64::INFINITY } else { smax / smin },
            limit: 1e8,
        });
    }
    let v = DVector::from_fn(m, |a, _| eigenvalues[a + 1].powf(0.25) * s0[(0, a + 1)]);
    let x = ip
        .lu()
        .solve(&v)
        .ok_or_else(|| SlabError::Config("singular (I - P) system".into()))?;
    Ok(x.dot(&v))
}

/// alpha and (S0 1, 1) from a Gram set, with the M vs M/2 Cauchy difference.
pub fn alpha_constant(gram: &SingleGram, m: usize) -> Result<ShapeConstants> {
    if m < 2 {
        return Err(SlabError::Config("alpha needs at least 2 modes".into()));
    }
    let eigenvalues = gram.basis().eigenvalues();
    if m >= eigenvalues.len() {
        return Err(SlabError::Config(format!(
            "alpha at M = {m} exceeds the {}-mode basis",
            eigenvalues.len() - 1
        )));
    }
    let alpha = alpha_at(gram.s0(), eigenvalues, m)?;
    let alpha_half = alpha_at(gram.s0(), eigenvalues, (m / 2).max(1))?;
    Ok(ShapeConstants {
        s0_one_one: gram.s0()[(0, 0)],
        alpha,
        m_used: m,
        alpha_convergence: (alpha - alpha_half).abs(),
    })
}

/// Shape constants for every hole of an assembly, at its basis truncation.
pub fn shape_constants_for(assembly: &Assembly, _opts: &S0Options) -> Result<Vec<ShapeConstants>> {
    assembly
        .grams
        .singles
        .iter()
        .map(|g| alpha_constant(g, g.basis().mode_count()))
        .collect()
}

/// Quadratic-form positivity witness: x^T (I-P)^{-1} x for a supplied x.
pub fn inverse_quadratic_form(gram: &SingleGram, m: usize, x: &[f64]) -> Result<f64> {
    if x.len() != m {
        return Err(SlabError::Config("witness vector length must equal M".into()));
    }
    let eigenvalues = gram.basis().eigenvalues();
    let mut ip = DMatrix::zeros(m, m);
    for a in 1..=m {
        for b in 1..=m {
            let w = eigenvalues[a].powf(0.25) * eigenvalues[b].powf(0.25);
            ip[(a - 1, b - 1)] = if a == b { 1.0 } else { 0.0 } + w * gram.s0()[(a, b)];
        }
    }
    let v = DVector::from_column_slice(x);
    let sol = ip
        .lu()
        .solve(&v)
        .ok_or_else(|| SlabError::Config("singular (I - P) system".into()))?;
    Ok(sol.dot(&v))
}

/// Pi(eps) = [-(S0 1,1) + alpha] i eps + eps^2/(2 pi).
pub fn pi_function(constants: &ShapeConstants, eps: Complex64) -> Complex64 {
    let a = -constants.s0_one_one + constants.alpha;
    Complex64::i() * a * eps + eps * eps / (2.0 * std::f64::consts::PI)
}

fn fp_value(m: usize, parity: Parity) -> f64 {
    parity.fp_index(m) as f64 * std::f64::consts::PI
}

/// kl for the dimensionless Fabry-Perot point k_m, to second order.
fn kl_from_pi(k_m: f64, eps_m: f64, pi_m: Complex64) -> Complex64 {
    Complex64::new(k_m, 0.0) - 2.0 * Complex64::i() * pi_m
        - (2.0 / k_m) * pi_m * (2.0 * pi_m + eps_m * eps_m / std::f64::consts::PI)
}

/// Single-hole resonance of per-parity index m: even modes sit near
/// (2m-1) pi / l, odd modes near 2m pi / l.
pub fn single_hole_asymptotic(
    constants: &ShapeConstants,
    l: f64,
    h: f64,
    m: usize,
    parity: Parity,
) -> Result<Complex64> {
    if m < 1 {
        return Err(SlabError::Config("mode index m starts at 1".into()));
    }
    let k_m = fp_value(m, parity);
    let eps_m = k_m * h / l;
    if eps_m >= EPS_REGIME_LIMIT {
        return Err(SlabError::OutOfRegime(format!(
            "eps_m = {eps_m:.3} >= {EPS_REGIME_LIMIT}"
        )));
    }
    let pi_m = pi_function(constants, Complex64::new(eps_m, 0.0));
    Ok(kl_from_pi(k_m, eps_m, pi_m) / l)
}

/// Inter-hole propagator matrix: zero diagonal, entries
/// e^{i k |C_ij|} / (2 pi k |C_ij|).
#[derive(Debug, Clone)]
pub struct CouplingMatrix {
    pub entries: DMatrix<Complex64>,
    pub k: Complex64,
    pub centers: Vec<[f64; 2]>,
}

pub fn coupling_matrix(centers: &[[f64; 2]], k: Complex64) -> Result<CouplingMatrix> {
    if k.norm() == 0.0 {
        return Err(SlabError::Config("coupling matrix needs k != 0".into()));
    }
    let n = centers.len();
    // A single hole has no inter-hole coupling: empty matrix.
    let dim = if n <= 1 { 0 } else { n };
    let mut entries = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            if i == j {
                continue;
            }
            let dist = (centers[i][0] - centers[j][0]).hypot(centers[i][1] - centers[j][1]);
            if dist == 0.0 {
                return Err(SlabError::Config(format!(
                    "holes {i} and {j} have coincident centers"
                )));
            }
            entries[(i, j)] =
                (Complex64::i() * k * dist).exp() / (2.0 * std::f64::consts::PI * k * dist);
        }
    }
    Ok(CouplingMatrix {
        entries,
        k,
        centers: centers.to_vec(),
    })
}

/// N-hole asymptotic prediction near the fp-th Fabry-Perot point.
#[derive(Debug, Clone, Serialize)]
pub struct MultiHolePrediction {
    /// Physical resonance frequencies, one per branch.
    pub values: Vec<Complex64>,
    pub parity: Parity,
    pub fp_index: usize,
    /// Identical-shape simplification (propagator eigenvalues in descending
    /// real part folded into Pi), when applicable.
    pub remark_form: Option<Vec<Complex64>>,
    /// The per-branch eigenvalue-tracking and the descending-real-part
    /// orderings disagreed (only meaningful for distinct shapes).
    pub selector_mismatch: bool,
    /// Branch selection was ambiguous at the 1e-12 level.
    pub degenerate: bool,
}

/// Resonances of an N-hole slab near fp_index * pi / l (parity inferred from
/// the parity of fp_index), through the perturbed coupling matrices.
pub fn multi_hole_asymptotic(
    constants: &[ShapeConstants],
    centers: &[[f64; 2]],
    l: f64,
    h: f64,
    fp_index: usize,
) -> Result<MultiHolePrediction> {
    if constants.is_empty() || constants.len() != centers.len() {
        return Err(SlabError::Config(
            "one ShapeConstants per hole center required".into(),
        ));
    }
    if fp_index < 1 {
        return Err(SlabError::Config("fp_index starts at 1".into()));
    }
    let (parity, m) = Parity::from_fp_index(fp_index);
    let n = constants.len();
    let k_m = fp_index as f64 * std::f64::consts::PI;
    let eps_m = k_m * h / l;
    if eps_m >= EPS_REGIME_LIMIT {
        return Err(SlabError::OutOfRegime(format!(
            "eps_m = {eps_m:.3} >= {EPS_REGIME_LIMIT}"
        )));
    }

    if n == 1 {
        return Ok(MultiHolePrediction {
            values: vec![single_hole_asymptotic(&constants[0], l, h, m, parity)?],
            parity,
            fp_index,
            remark_form: None,
            selector_mismatch: false,
            degenerate: false,
        });
    }

    let identical = constants
        .iter()
        .all(|c| (c.s0_one_one - constants[0].s0_one_one).abs() < 1e-12
            && (c.alpha - constants[0].alpha).abs() < 1e-12);

    let k_phys = Complex64::new(k_m / l, 0.0);
    let m_n = coupling_matrix(centers, k_phys)?;
    let eps_c = Complex64::new(eps_m, 0.0);
    let pis: Vec<Complex64> = constants.iter().map(|c| pi_function(c, eps_c)).collect();

    let mut values = Vec::with_capacity(n);
    let mut degenerate = false;
    let mut selector_mismatch = false;

    // Propagator eigenvalues ordered by descending real part drive both the
    // branch labelling and the identical-shape simplification.
    let mut mu_sorted = linalg::small_eigenvalues(&m_n.entries);
    mu_sorted.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap());

    for j in 0..n {
        // Shifted first-order point for branch j and its perturbed matrix.
        let k_mj = Complex64::new(k_m, 0.0) - 2.0 * Complex64::i() * pis[j];
        let mut m_tilde = DMatrix::<Complex64>::zeros(n, n);
        for i in 0..n {
            let pi_shifted = pi_function(&constants[i], k_mj * h / l);
            m_tilde[(i, i)] = -2.0 * pi_shifted - 2.0 * pis[j] * pis[i];
        }
        m_tilde += m_n.entries.map(|v| 2.0 * Complex64::i() * eps_m * eps_m * v);

        let eig = linalg::small_eigenvalues(&m_tilde);
        let target = -2.0 * pis[j];
        let lambda_j = if identical {
            // All diagonal shifts coincide: the branches differ only through
            // the propagator eigenvalues, labelled by descending real part.
            let mut by_re = eig.clone();
            by_re.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap());
            degenerate = true;
            by_re[j]
        } else {
            let mut dists: Vec<(f64, Complex64)> =
                eig.iter().map(|&e| ((e - target).norm(), e)).collect();
            dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            if dists.len() > 1 && (dists[1].0 - dists[0].0).abs() < 1e-12 {
                degenerate = true;
            }
            // Cross-check the descending-real-part selector.
            let mut by_re = eig.clone();
            by_re.sort_by(|a, b| b.re.partial_cmp(&a.re).unwrap());
            if (by_re[j] - dists[0].1).norm() > 1e-12 {
                selector_mismatch = true;
            }
            dists[0].1
        };
        let kl = Complex64::new(k_m, 0.0)
            + Complex64::i() * lambda_j
            + 0.5 * Complex64::i() * lambda_j * lambda_j;
        values.push(kl / l);
    }

    // Identical-shape simplification: fold the propagator eigenvalue into Pi
    // and reuse the single-hole second-order formula.
    let remark_form = if identical {
        let mut remark = Vec::with_capacity(n);
        for &mu in mu_sorted.iter() {
            let pi_jm = pis[0] - Complex64::i() * eps_m * eps_m * mu;
            remark.push(kl_from_pi(k_m, eps_m, pi_jm) / l);
        }
        Some(remark)
    } else {
        None
    };

    Ok(MultiHolePrediction {
        values,
        parity,
        fp_index,
        remark_form,
        selector_mismatch,
        degenerate,
    })
}

/// Leading-order quality factor: 1/(2 m h^2) for a single hole; for N
/// identical holes 1/((2 + 2 pi Im(lambda_j)) m h^2).
pub fn q_leading(m: usize, h: f64, lambda_j_im: Option<f64>) -> Result<f64> {
    if m < 1 || h <= 0.0 {
        return Err(SlabError::Config("q_leading needs m >= 1 and h > 0".into()));
    }
    let denom = match lambda_j_im {
        None => 2.0,
        Some(im) => 2.0 + 2.0 * std::f64::consts::PI * im,
    };
    if denom <= 0.0 {
        return Err(SlabError::OutOfRegime(format!(
            "coupling too strong for the leading Q law: denominator {denom:.3e}"
        )));
    }
    Ok(1.0 / (denom * m as f64 * h * h))
}
