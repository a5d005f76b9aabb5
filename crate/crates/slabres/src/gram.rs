//! Gram matrices of the half-space kernel e^{ikr}/(2 pi r) in the Neumann
//! eigenbasis of each aperture.
//!
//! The k-dependent matrix d(eps) on a single unit aperture is split as
//!
//!   d(eps) = s0 + remainder(eps),            remainder kernel (e^{i eps r} - 1)/(2 pi r)
//!   d(eps) = s0 + (i eps / 2 pi) E00 + eps^2 r0(eps),
//!
//! where only s0 carries the 1/r singularity. s0 is assembled once per
//! (shape, truncation, order) by an apex-polar inner integral (the polar
//! Jacobian cancels the singularity exactly) against a boundary-graded outer
//! rule, then memoized. The smooth remainder and cross-hole kernels are plain
//! tensor-quadrature sandwiches Phi^T K Phi over the basis rule, so every
//! evaluation at a new complex k reuses the cached node tables.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cache;
use crate::error::{Result, SlabError};
use crate::geometry::{EigenBasis, HoleShape};
use crate::quad::{graded_gauss, graded_panels, Gauss1D};

/// Quadrature controls for the singular s0 assembly.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct S0Options {
    /// Gauss points per graded outer panel.
    pub outer_p: usize,
    /// Grading depth of the outer rule toward the boundary.
    pub outer_levels: usize,
    /// Gauss points per angular panel of the inner apex-polar rule.
    pub theta_p: usize,
    /// Gauss points along each ray.
    pub rho_p: usize,
    /// Relative tolerance demanded of the enrichment estimate.
    pub tol: f64,
}

impl Default for S0Options {
    fn default() -> Self {
        S0Options {
            outer_p: 12,
            outer_levels: 5,
            theta_p: 10,
            rho_p: 14,
            tol: 1e-6,
        }
    }
}

impl S0Options {
    fn enriched(&self) -> Self {
        S0Options {
            outer_p: self.outer_p + 4,
            outer_levels: self.outer_levels + 1,
            theta_p: self.theta_p + 2,
            rho_p: self.rho_p + 4,
            tol: self.tol,
        }
    }

    fn hash_into(&self, h: &mut cache::Fnv) {
        h.write_u64(self.outer_p as u64);
        h.write_u64(self.outer_levels as u64);
        h.write_u64(self.theta_p as u64);
        h.write_u64(self.rho_p as u64);
    }
}

// ---------------------------------------------------------------------------
// smooth kernel profiles
// ---------------------------------------------------------------------------

/// (e^z - 1)/z with its removable singularity at z = 0.
fn g1(z: Complex64) -> Complex64 {
    if z.norm_sqr() < 0.25 {
        // sum z^n/(n+1)!
        let mut term = Complex64::new(1.0, 0.0);
        let mut sum = term;
        for n in 1..30 {
            term = term * z / (n as f64 + 1.0);
            sum += term;
            if term.norm_sqr() < 1e-34 {
                break;
            }
        }
        sum
    } else {
        (z.exp() - 1.0) / z
    }
}

/// (e^z - 1 - z)/z^2 with its removable singularity at z = 0.
fn g2(z: Complex64) -> Complex64 {
    if z.norm_sqr() < 0.25 {
        // sum z^n/(n+2)!
        let mut term = Complex64::new(0.5, 0.0);
        let mut sum = term;
        for n in 1..30 {
            term = term * z / (n as f64 + 2.0);
            sum += term;
            if term.norm_sqr() < 1e-34 {
                break;
            }
        }
        sum
    } else {
        (z.exp() - 1.0 - z) / (z * z)
    }
}

// ---------------------------------------------------------------------------
// singular s0 assembly
// ---------------------------------------------------------------------------

fn level_for(range: f64, scale: f64) -> usize {
    let s = scale.max(1e-13);
    if s >= range {
        return 2;
    }
    ((range / s).log2().ceil() as usize + 1).clamp(2, 26)
}

/// Inner integral over one triangle with apex `x`: angular panel sweep with
/// R(phi) = d / cos(phi), accumulating int phi_m along each ray (the polar
/// Jacobian has already cancelled the 1/r kernel).
#[allow(clippy::too_many_arguments)]
fn sweep_triangle(
    basis: &EigenBasis,
    x: [f64; 2],
    theta0: f64,
    d: f64,
    gauss_theta: &Gauss1D,
    panels_theta: &[(f64, f64)],
    gauss_rho: &Gauss1D,
    scratch: &mut [f64],
    out: &mut [f64],
) {
    for &(pa, pb) in panels_theta {
        for (phi, w_phi) in gauss_theta.mapped(pa, pb) {
            let r_max = d / phi.cos();
            let (s, c) = (theta0 + phi).sin_cos();
            for (rho, w_rho) in gauss_rho.mapped(0.0, r_max) {
                let p = [x[0] + rho * c, x[1] + rho * s];
                basis.evaluate_all_into(p, scratch);
                let w = w_phi * w_rho;
                for (o, v) in out.iter_mut().zip(scratch.iter()) {
                    *o += w * v;
                }
            }
        }
    }
}

/// u[m] = int_G phi_m(y)/|x-y| dS(y) for an interior point x of the square.
fn inner_potential_square(
    basis: &EigenBasis,
    x: [f64; 2],
    gauss_theta: &Gauss1D,
    gauss_rho: &Gauss1D,
    scratch: &mut [f64],
    out: &mut [f64],
) {
    out.iter_mut().for_each(|v| *v = 0.0);
    // Edges of (-1/2,1/2)^2 with outward normal angles 0, pi/2, pi, -pi/2.
    let edges = [
        (0.0, 0.5 - x[0], [0.5, -0.5], [0.5, 0.5]),
        (std::f64::consts::FRAC_PI_2, 0.5 - x[1], [0.5, 0.5], [-0.5, 0.5]),
        (std::f64::consts::PI, 0.5 + x[0], [-0.5, 0.5], [-0.5, -0.5]),
        (-std::f64::consts::FRAC_PI_2, 0.5 + x[1], [-0.5, -0.5], [0.5, -0.5]),
    ];
    for (theta0, d, a, b) in edges {
        let ang = |corner: [f64; 2]| -> f64 {
            let t = (corner[1] - x[1]).atan2(corner[0] - x[0]) - theta0;
            // wrap to (-pi, pi]
            let mut t = t % (2.0 * std::f64::consts::PI);
            if t > std::f64::consts::PI {
                t -= 2.0 * std::f64::consts::PI;
            } else if t <= -std::f64::consts::PI {
                t += 2.0 * std::f64::consts::PI;
            }
            t
        };
        let mut phi_a = ang(a);
        let mut phi_b = ang(b);
        if phi_a > phi_b {
            std::mem::swap(&mut phi_a, &mut phi_b);
        }
        let range = phi_b - phi_a;
        if range < 1e-15 || d <= 0.0 {
            continue;
        }
        let la = level_for(range, std::f64::consts::FRAC_PI_2 - phi_a.abs());
        let lb = level_for(range, std::f64::consts::FRAC_PI_2 - phi_b.abs());
        let panels = graded_panels(phi_a, phi_b, la, lb);
        sweep_triangle(
            basis, x, theta0, d, gauss_theta, &panels, gauss_rho, scratch, out,
        );
    }
}

/// Same for an interior point of the disk of radius 1/sqrt(pi).
fn inner_potential_disk(
    basis: &EigenBasis,
    x: [f64; 2],
    gauss_theta: &Gauss1D,
    gauss_rho: &Gauss1D,
    scratch: &mut [f64],
    out: &mut [f64],
) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let radius = 1.0 / std::f64::consts::PI.sqrt();
    let rho_x = x[0].hypot(x[1]);
    let theta_x = if rho_x > 0.0 { x[1].atan2(x[0]) } else { 0.0 };
    // gamma is the ray angle relative to the outward direction through x;
    // the chord length varies fastest near the tangential directions +-pi/2.
    let sigma = (radius * radius - rho_x * rho_x).max(1e-30).sqrt();
    let layer = (sigma / radius).min(1.0);
    let lv = level_for(std::f64::consts::FRAC_PI_2, layer);
    let segments = [
        (-std::f64::consts::PI, -std::f64::consts::FRAC_PI_2, 2usize, lv),
        (-std::f64::consts::FRAC_PI_2, 0.0, lv, 2usize),
        (0.0, std::f64::consts::FRAC_PI_2, 2usize, lv),
        (std::f64::consts::FRAC_PI_2, std::f64::consts::PI, lv, 2usize),
    ];
    for (ga, gb, la, lb) in segments {
        for (pa, pb) in graded_panels(ga, gb, la, lb) {
            for (gamma, w_g) in gauss_theta.mapped(pa, pb) {
                let cosg = gamma.cos();
                let t_max = -rho_x * cosg + (rho_x * rho_x * cosg * cosg + sigma * sigma).sqrt();
                let (s, c) = (theta_x + gamma).sin_cos();
                for (rho, w_rho) in gauss_rho.mapped(0.0, t_max) {
                    let p = [x[0] + rho * c, x[1] + rho * s];
                    basis.evaluate_all_into(p, scratch);
                    let w = w_g * w_rho;
                    for (o, v) in out.iter_mut().zip(scratch.iter()) {
                        *o += w * v;
                    }
                }
            }
        }
    }
}

/// Boundary-graded outer rule for the shape (reference path: no symmetry
/// folding; kept for cross-validation of the folded assembly).
#[cfg(test)]
fn outer_rule(shape: &HoleShape, opts: &S0Options) -> Vec<([f64; 2], f64)> {
    match shape {
        HoleShape::UnitSquare => {
            let (n1, w1) = graded_gauss(-0.5, 0.5, opts.outer_levels, opts.outer_levels, opts.outer_p);
            let mut out = Vec::with_capacity(n1.len() * n1.len());
            for (i, &xi) in n1.iter().enumerate() {
                for (j, &xj) in n1.iter().enumerate() {
                    out.push(([xi, xj], w1[i] * w1[j]));
                }
            }
            out
        }
        HoleShape::UnitDisk => {
            let radius = 1.0 / std::f64::consts::PI.sqrt();
            let (nr, wr) = graded_gauss(0.0, radius, 0, opts.outer_levels, opts.outer_p);
            let n_theta = 4 * opts.outer_p;
            let dtheta = 2.0 * std::f64::consts::PI / n_theta as f64;
            let mut out = Vec::with_capacity(nr.len() * n_theta);
            for it in 0..n_theta {
                let theta = (it as f64 + 0.5) * dtheta;
                let (s, c) = theta.sin_cos();
                for (i, &r) in nr.iter().enumerate() {
                    out.push(([r * c, r * s], wr[i] * r * dtheta));
                }
            }
            out
        }
        HoleShape::Custom(_) => Vec::new(),
    }
}

fn s0_singular_once(basis: &EigenBasis, opts: &S0Options) -> DMatrix<f64> {
    match basis.shape() {
        HoleShape::UnitSquare => s0_square_folded(basis, opts),
        HoleShape::UnitDisk => s0_disk_folded(basis, opts),
        HoleShape::Custom(_) => unreachable!("custom shapes use the node-cloud path"),
    }
}

/// Full-tensor assembly without symmetry folding (test oracle).
#[cfg(test)]
fn s0_singular_reference(basis: &EigenBasis, opts: &S0Options) -> DMatrix<f64> {
    let m1 = basis.eigenvalues().len();
    let shape = basis.shape().clone();
    let outer = outer_rule(&shape, opts);
    let gauss_theta = Gauss1D::new(opts.theta_p);
    let gauss_rho = Gauss1D::new(opts.rho_p);

    let chunks: Vec<DMatrix<f64>> = outer
        .par_chunks(128)
        .map(|chunk| {
            let mut local = DMatrix::zeros(m1, m1);
            let mut phi = vec![0.0; m1];
            let mut u = vec![0.0; m1];
            let mut scratch = vec![0.0; m1];
            for &(x, w) in chunk {
                basis.evaluate_all_into(x, &mut phi);
                match shape {
                    HoleShape::UnitSquare => inner_potential_square(
                        basis, x, &gauss_theta, &gauss_rho, &mut scratch, &mut u,
                    ),
                    HoleShape::UnitDisk => inner_potential_disk(
                        basis, x, &gauss_theta, &gauss_rho, &mut scratch, &mut u,
                    ),
                    HoleShape::Custom(_) => unreachable!(),
                }
                for a in 0..m1 {
                    let wa = w * phi[a];
                    for b in 0..m1 {
                        local[(a, b)] += wa * u[b];
                    }
                }
            }
            local
        })
        .collect();

    let mut s0 = DMatrix::zeros(m1, m1);
    for c in chunks {
        s0 += c;
    }
    s0 /= 2.0 * std::f64::consts::PI;
    // Kernel symmetry: enforce it exactly.
    let st = s0.transpose();
    (s0 + st) * 0.5
}

/// Square assembly folded over the D4 symmetry group: the inner potential is
/// computed on the octant 0 < x2 < x1 < 1/2 only, and every group image
/// contributes through the mode permutation/sign law
/// phi_{(p,q)}(g x) = (-1)^{p [s1<0] + q [s2<0]} phi_{(p,q) or (q,p)}(x).
fn s0_square_folded(basis: &EigenBasis, opts: &S0Options) -> DMatrix<f64> {
    use crate::geometry::ModeSymmetry;
    let m1 = basis.eigenvalues().len();
    // (p, q) -> mode index
    let mut lookup = HashMap::new();
    for m in 0..m1 {
        if let ModeSymmetry::Square { p, q } = basis.mode_symmetry(m) {
            lookup.insert((p, q), m);
        }
    }
    // 8 group elements: (swap, sign1, sign2)
    let mut elements: Vec<(Vec<usize>, Vec<f64>, bool, bool, bool)> = Vec::with_capacity(8);
    for swap in [false, true] {
        for neg1 in [false, true] {
            for neg2 in [false, true] {
                let mut perm = vec![0usize; m1];
                let mut sign = vec![1.0f64; m1];
                for m in 0..m1 {
                    let ModeSymmetry::Square { p, q } = basis.mode_symmetry(m) else {
                        unreachable!()
                    };
                    let target = if swap { (q, p) } else { (p, q) };
                    perm[m] = lookup[&target];
                    let mut s = 1.0;
                    if neg1 && p % 2 == 1 {
                        s = -s;
                    }
                    if neg2 && q % 2 == 1 {
                        s = -s;
                    }
                    sign[m] = s;
                }
                elements.push((perm, sign, swap, neg1, neg2));
            }
        }
    }

    // Octant rule: x1 graded toward the edge at 1/2; x2 graded toward the
    // x2 = x1 end with a depth adapted to the remaining edge distance.
    let (n1, w1) = graded_gauss(0.0, 0.5, 0, opts.outer_levels, opts.outer_p);
    let gauss_theta = Gauss1D::new(opts.theta_p);
    let gauss_rho = Gauss1D::new(opts.rho_p);

    let chunks: Vec<DMatrix<f64>> = n1
        .par_iter()
        .zip(w1.par_iter())
        .map(|(&x1, &wx1)| {
            let mut local = DMatrix::zeros(m1, m1);
            let mut phi = vec![0.0; m1];
            let mut u = vec![0.0; m1];
            let mut scratch = vec![0.0; m1];
            let mut phi_g = vec![0.0; m1];
            let mut u_g = vec![0.0; m1];
            let l2 = level_for(x1.max(1e-12), 0.5 - x1).min(opts.outer_levels + 1);
            let (n2, w2) = graded_gauss(0.0, x1, 0, l2, opts.outer_p);
            for (&x2, &wx2) in n2.iter().zip(&w2) {
                let x = [x1, x2];
                let w = wx1 * wx2;
                basis.evaluate_all_into(x, &mut phi);
                inner_potential_square(basis, x, &gauss_theta, &gauss_rho, &mut scratch, &mut u);
                for (perm, sign, _, _, _) in &elements {
                    for m in 0..m1 {
                        phi_g[m] = sign[m] * phi[perm[m]];
                        u_g[m] = sign[m] * u[perm[m]];
                    }
                    for a in 0..m1 {
                        let wa = w * phi_g[a];
                        for b in 0..m1 {
                            local[(a, b)] += wa * u_g[b];
                        }
                    }
                }
            }
            local
        })
        .collect();

    let mut s0 = DMatrix::zeros(m1, m1);
    for c in chunks {
        s0 += c;
    }
    s0 /= 2.0 * std::f64::consts::PI;
    let st = s0.transpose();
    (s0 + st) * 0.5
}

/// Disk assembly folded over the rotation group: the inner potential is
/// computed on one radial line and rotated images follow from the exact
/// covariance of the cos/sin mode pairs, making the angular outer sum exact
/// for trigonometric polynomials.
fn s0_disk_folded(basis: &EigenBasis, opts: &S0Options) -> DMatrix<f64> {
    use crate::geometry::ModeSymmetry;
    let m1 = basis.eigenvalues().len();
    // partner index of each (n >= 1) mode: same (n, alpha), opposite kind
    let mut partner = vec![usize::MAX; m1];
    let mut order = vec![0u32; m1];
    let mut is_sine = vec![false; m1];
    {
        let mut by_key: HashMap<(u32, u64, bool), usize> = HashMap::new();
        for m in 0..m1 {
            if let ModeSymmetry::Disk { n, alpha_bits, sine } = basis.mode_symmetry(m) {
                by_key.insert((n, alpha_bits, sine), m);
                order[m] = n;
                is_sine[m] = sine;
            }
        }
        for m in 0..m1 {
            if let ModeSymmetry::Disk { n, alpha_bits, sine } = basis.mode_symmetry(m) {
                partner[m] = if n == 0 {
                    m
                } else {
                    by_key[&(n, alpha_bits, !sine)]
                };
            }
        }
    }

    let radius = 1.0 / std::f64::consts::PI.sqrt();
    let (nr, wr) = graded_gauss(0.0, radius, 0, opts.outer_levels, opts.outer_p);
    let n_theta = 4 * opts.outer_p;
    let dtheta = 2.0 * std::f64::consts::PI / n_theta as f64;
    let gauss_theta = Gauss1D::new(opts.theta_p);
    let gauss_rho = Gauss1D::new(opts.rho_p);

    let chunks: Vec<DMatrix<f64>> = nr
        .par_iter()
        .zip(wr.par_iter())
        .map(|(&rho, &w_r)| {
            let mut local = DMatrix::zeros(m1, m1);
            let mut phi = vec![0.0; m1];
            let mut u = vec![0.0; m1];
            let mut scratch = vec![0.0; m1];
            let mut phi_g = vec![0.0; m1];
            let mut u_g = vec![0.0; m1];
            let x = [rho, 0.0];
            basis.evaluate_all_into(x, &mut phi);
            inner_potential_disk(basis, x, &gauss_theta, &gauss_rho, &mut scratch, &mut u);
            for j in 0..n_theta {
                let beta = (j as f64 + 0.5) * dtheta;
                let w = w_r * rho * dtheta;
                for m in 0..m1 {
                    let n = order[m];
                    if n == 0 {
                        phi_g[m] = phi[m];
                        u_g[m] = u[m];
                    } else {
                        let (c, s) = ((n as f64 * beta).cos(), (n as f64 * beta).sin());
                        let p = partner[m];
                        if !is_sine[m] {
                            phi_g[m] = c * phi[m] - s * phi[p];
                            u_g[m] = c * u[m] - s * u[p];
                        } else {
                            phi_g[m] = s * phi[p] + c * phi[m];
                            u_g[m] = s * u[p] + c * u[m];
                        }
                    }
                }
                for a in 0..m1 {
                    let wa = w * phi_g[a];
                    for b in 0..m1 {
                        local[(a, b)] += wa * u_g[b];
                    }
                }
            }
            local
        })
        .collect();

    let mut s0 = DMatrix::zeros(m1, m1);
    for c in chunks {
        s0 += c;
    }
    s0 /= 2.0 * std::f64::consts::PI;
    let st = s0.transpose();
    (s0 + st) * 0.5
}

/// Node-cloud fallback for custom shapes: product quadrature off the diagonal
/// plus an equivalent-disk correction for the singular self-cells. Accuracy
/// is O(sqrt(w)) in the cell weights, well below the analytic-shape paths.
fn s0_custom(basis: &EigenBasis) -> DMatrix<f64> {
    let q = basis.quadrature();
    let n = q.len();
    let m1 = basis.eigenvalues().len();
    let phi = basis.mode_values();
    let mut s0 = DMatrix::zeros(m1, m1);
    for a in 0..m1 {
        for b in a..m1 {
            let mut acc = 0.0;
            for i in 0..n {
                let xi = q.nodes[i];
                let mut row = 0.0;
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let r = (xi[0] - q.nodes[j][0]).hypot(xi[1] - q.nodes[j][1]);
                    row += q.weights[j] * phi[(j, b)] / r;
                }
                // equivalent-disk diagonal correction
                row += phi[(i, b)] * 2.0 * (std::f64::consts::PI * q.weights[i]).sqrt();
                acc += q.weights[i] * phi[(i, a)] * row;
            }
            let v = acc / (2.0 * std::f64::consts::PI);
            s0[(a, b)] = v;
            s0[(b, a)] = v;
        }
    }
    s0
}

// ---------------------------------------------------------------------------
// per-hole Gram set
// ---------------------------------------------------------------------------

/// k-independent singular Gram of one aperture plus cached node tables for
/// the smooth k-dependent remainders.
pub struct SingleGram {
    basis: Arc<EigenBasis>,
    s0: DMatrix<f64>,
    /// Relative enrichment estimate of the s0 quadrature error (None when
    /// the matrix came from the on-disk cache, which only stores converged
    /// matrices).
    s0_error_estimate: Option<f64>,
    /// Pairwise node distances of the basis rule.
    dist: DMatrix<f64>,
    /// w_i phi_m(x_i) over the basis rule.
    phiw: DMatrix<f64>,
    content_hash: u64,
}

impl SingleGram {
    /// Build (or fetch from the process-wide memo / disk cache) the Gram set
    /// for this basis.
    pub fn get(basis: &Arc<EigenBasis>, opts: &S0Options) -> Result<Arc<SingleGram>> {
        static MEMO: OnceLock<Mutex<HashMap<u64, Arc<SingleGram>>>> = OnceLock::new();
        let memo = MEMO.get_or_init(|| Mutex::new(HashMap::new()));
        let hash = Self::content_hash_for(basis, opts);
        if let Some(hit) = memo.lock().unwrap().get(&hash) {
            return Ok(hit.clone());
        }
        let built = Arc::new(Self::build(basis.clone(), opts, hash)?);
        memo.lock().unwrap().insert(hash, built.clone());
        Ok(built)
    }

    fn content_hash_for(basis: &EigenBasis, opts: &S0Options) -> u64 {
        let mut h = cache::Fnv::new();
        h.write_str(&basis.shape().cache_label());
        h.write_u64(basis.mode_count() as u64);
        h.write_u64(basis.quadrature().order as u64);
        opts.hash_into(&mut h);
        h.finish()
    }

    fn build(basis: Arc<EigenBasis>, opts: &S0Options, hash: u64) -> Result<SingleGram> {
        let (s0, estimate) = if matches!(basis.shape(), HoleShape::Custom(_)) {
            (s0_custom(&basis), None)
        } else if let Some(cached) = cache::load_matrix(hash) {
            if cached.nrows() == basis.eigenvalues().len() {
                (cached, None)
            } else {
                Self::compute_s0(&basis, opts)?
            }
        } else if let Some(slice) = Self::slice_from_larger(&basis, opts) {
            (slice, None)
        } else {
            let pair = Self::compute_s0(&basis, opts)?;
            cache::store_matrix(hash, &pair.0);
            pair
        };

        let q = basis.quadrature();
        let n = q.len();
        let dist = DMatrix::from_fn(n, n, |i, j| {
            (q.nodes[i][0] - q.nodes[j][0]).hypot(q.nodes[i][1] - q.nodes[j][1])
        });
        let m1 = basis.eigenvalues().len();
        let mut phiw = basis.mode_values().clone_owned();
        for i in 0..n {
            for m in 0..m1 {
                phiw[(i, m)] *= q.weights[i];
            }
        }
        Ok(SingleGram {
            basis,
            s0,
            s0_error_estimate: estimate,
            dist,
            phiw,
            content_hash: hash,
        })
    }

    fn compute_s0(basis: &EigenBasis, opts: &S0Options) -> Result<(DMatrix<f64>, Option<f64>)> {
        let base = s0_singular_once(basis, opts);
        let rich = s0_singular_once(basis, &opts.enriched());
        let scale = base.amax().max(1e-300);
        let mut err: f64 = 0.0;
        for (a, b) in base.iter().zip(rich.iter()) {
            err = err.max((a - b).abs());
        }
        let rel = err / scale;
        if rel > opts.tol {
            return Err(SlabError::QuadratureNonConvergence {
                achieved: rel,
                tolerance: opts.tol,
            });
        }
        Self::remember_largest(basis, opts, &rich);
        Ok((rich, Some(rel)))
    }

    /// The rows of s0 for a prefix of the mode list are independent of the
    /// truncation (same shape, same quadrature order), so a matrix computed
    /// at a larger M can be sliced instead of recomputed.
    fn slice_from_larger(basis: &EigenBasis, opts: &S0Options) -> Option<DMatrix<f64>> {
        let memo = Self::largest_memo();
        let key = Self::family_key(basis, opts);
        let guard = memo.lock().unwrap();
        let stored = guard.get(&key)?;
        let m1 = basis.eigenvalues().len();
        if stored.nrows() >= m1 {
            Some(stored.view((0, 0), (m1, m1)).clone_owned())
        } else {
            None
        }
    }

    fn remember_largest(basis: &EigenBasis, opts: &S0Options, s0: &DMatrix<f64>) {
        let memo = Self::largest_memo();
        let key = Self::family_key(basis, opts);
        let mut guard = memo.lock().unwrap();
        let replace = guard.get(&key).map(|m| m.nrows() < s0.nrows()).unwrap_or(true);
        if replace {
            guard.insert(key, s0.clone());
        }
    }

    fn largest_memo() -> &'static Mutex<HashMap<u64, DMatrix<f64>>> {
        static LARGEST: OnceLock<Mutex<HashMap<u64, DMatrix<f64>>>> = OnceLock::new();
        LARGEST.get_or_init(|| Mutex::new(HashMap::new()))
    }

    fn family_key(basis: &EigenBasis, opts: &S0Options) -> u64 {
        let mut h = cache::Fnv::new();
        h.write_str(&basis.shape().cache_label());
        h.write_u64(basis.quadrature().order as u64);
        opts.hash_into(&mut h);
        h.finish()
    }

    pub fn basis(&self) -> &Arc<EigenBasis> {
        &self.basis
    }

    /// The static Gram ( S0 phi_m', phi_m ): real, symmetric, positive.
    pub fn s0(&self) -> &DMatrix<f64> {
        &self.s0
    }

    pub fn s0_error_estimate(&self) -> Option<f64> {
        self.s0_error_estimate
    }

    pub fn content_hash(&self) -> u64 {
        self.content_hash
    }

    /// Gram of the smooth kernel (e^{i eps r} - 1)/(2 pi r): complex
    /// symmetric by construction, vanishing identically at eps = 0.
    pub fn remainder(&self, eps: Complex64) -> DMatrix<Complex64> {
        if eps == Complex64::new(0.0, 0.0) {
            let m1 = self.s0.nrows();
            return DMatrix::zeros(m1, m1);
        }
        let pref = Complex64::i() * eps / (2.0 * std::f64::consts::PI);
        self.sandwich(|r| pref * g1(Complex64::i() * eps * r))
    }

    /// Gram of (e^{i eps r} - 1 - i eps r)/(2 pi eps^2 r); the kernel limit
    /// at r = 0 is 0 and near r = 0 it behaves like -r/(4 pi).
    pub fn r0(&self, eps: Complex64) -> Result<DMatrix<Complex64>> {
        if eps == Complex64::new(0.0, 0.0) {
            return Err(SlabError::Config("r0 requires eps != 0".into()));
        }
        let pref = -1.0 / (2.0 * std::f64::consts::PI);
        Ok(self.sandwich(|r| pref * r * g2(Complex64::i() * eps * r)))
    }

    /// d(eps) = s0 + remainder(eps), entrywise.
    pub fn d(&self, eps: Complex64) -> Result<DMatrix<Complex64>> {
        if eps.norm() >= 1.0 {
            return Err(SlabError::OutOfRegime(format!(
                "|eps| = {:.3} >= 1 (kernel split is for eps = kh << 1)",
                eps.norm()
            )));
        }
        let mut d = self.remainder(eps);
        for (t, s) in d.iter_mut().zip(self.s0.iter()) {
            *t += s;
        }
        Ok(d)
    }

    fn sandwich<F: Fn(f64) -> Complex64 + Sync>(&self, kernel: F) -> DMatrix<Complex64> {
        let n = self.dist.nrows();
        let m1 = self.phiw.ncols();
        // K phiw, column block per mode; parallel over row stripes.
        let mut k = DMatrix::<Complex64>::zeros(n, n);
        {
            let dist = &self.dist;
            k.as_mut_slice()
                .par_chunks_mut(n)
                .zip(dist.as_slice().par_chunks(n))
                .for_each(|(col_out, col_in)| {
                    for (o, &r) in col_out.iter_mut().zip(col_in) {
                        *o = kernel(r);
                    }
                });
        }
        let phiw_c = self.phiw.map(|v| Complex64::new(v, 0.0));
        let tmp = &k * &phiw_c;
        let mut out = DMatrix::<Complex64>::zeros(m1, m1);
        phiw_c.tr_mul_to(&tmp, &mut out);
        // K is symmetric, so out is complex symmetric; tighten it exactly.
        for a in 0..m1 {
            for b in (a + 1)..m1 {
                let v = 0.5 * (out[(a, b)] + out[(b, a)]);
                out[(a, b)] = v;
                out[(b, a)] = v;
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// hole layout and cross-hole blocks
// ---------------------------------------------------------------------------

/// Search region in the lower half-plane.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct WavenumberBox {
    pub eps0: f64,
    pub k_max: f64,
    /// Admissible |Im(k)| depth.
    pub im_depth: f64,
}

impl Default for WavenumberBox {
    fn default() -> Self {
        WavenumberBox {
            eps0: 1e-2,
            k_max: 60.0,
            im_depth: 1.0,
        }
    }
}

impl WavenumberBox {
    pub fn contains(&self, k: Complex64) -> bool {
        k.re > 0.0
            && k.im < 0.0
            && k.im > -self.im_depth
            && k.norm() > self.eps0
            && k.norm() < self.k_max
    }
}

/// Hole centers, scale and search region.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct HoleLayout {
    pub centers: Vec<[f64; 2]>,
    pub h: f64,
    pub wavenumber_box: WavenumberBox,
}

impl HoleLayout {
    /// Validate the well-separation guard min |D_i - D_j| > 10 h diam(G).
    pub fn validate(&self, shapes: &[HoleShape]) -> Result<()> {
        if self.h <= 0.0 {
            return Err(SlabError::Config("h must be positive".into()));
        }
        if self.centers.len() != shapes.len() {
            return Err(SlabError::Config("one shape per hole center required".into()));
        }
        for i in 0..self.centers.len() {
            for j in (i + 1)..self.centers.len() {
                let dij = (self.centers[i][0] - self.centers[j][0])
                    .hypot(self.centers[i][1] - self.centers[j][1]);
                let guard = 10.0 * self.h * shapes[i].diameter().max(shapes[j].diameter());
                if dij <= guard {
                    return Err(SlabError::Config(format!(
                        "holes {i} and {j} are too close: |D_i - D_j| = {dij:.4} <= {guard:.4}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        (self.centers[i][0] - self.centers[j][0]).hypot(self.centers[i][1] - self.centers[j][1])
    }
}

/// Cached node tables for the cross-hole kernel between holes i and j.
pub struct CrossTable {
    /// rho_ab = |h (x_a - y_b) + D_i - D_j| over (nodes of i) x (nodes of j).
    dist: DMatrix<f64>,
    h: f64,
}

impl CrossTable {
    pub fn new(layout: &HoleLayout, basis_i: &EigenBasis, basis_j: &EigenBasis, i: usize, j: usize) -> Self {
        let qi = basis_i.quadrature();
        let qj = basis_j.quadrature();
        let di = layout.centers[i];
        let dj = layout.centers[j];
        let h = layout.h;
        let dist = DMatrix::from_fn(qi.len(), qj.len(), |a, b| {
            (h * (qi.nodes[a][0] - qj.nodes[b][0]) + di[0] - dj[0])
                .hypot(h * (qi.nodes[a][1] - qj.nodes[b][1]) + di[1] - dj[1])
        });
        CrossTable { dist, h }
    }

    /// d^{ij}(k): entry (m', m) pairs phi_{m',i} with phi_{m,j}.
    pub fn evaluate(&self, phiw_i: &DMatrix<f64>, phiw_j: &DMatrix<f64>, k: Complex64) -> DMatrix<Complex64> {
        let (ni, nj) = self.dist.shape();
        let pref = self.h / (2.0 * std::f64::consts::PI);
        let mut kmat = DMatrix::<Complex64>::zeros(ni, nj);
        kmat.as_mut_slice()
            .par_chunks_mut(ni)
            .zip(self.dist.as_slice().par_chunks(ni))
            .for_each(|(col_out, col_in)| {
                for (o, &r) in col_out.iter_mut().zip(col_in) {
                    *o = pref * (Complex64::i() * k * r).exp() / r;
                }
            });
        let pi_c = phiw_i.map(|v| Complex64::new(v, 0.0));
        let pj_c = phiw_j.map(|v| Complex64::new(v, 0.0));
        let tmp = &kmat * &pj_c;
        let mut out = DMatrix::<Complex64>::zeros(pi_c.ncols(), pj_c.ncols());
        pi_c.tr_mul_to(&tmp, &mut out);
        out
    }
}

/// Standalone cross-hole Gram (m', m) -> d^{ij}_{m'm}(k).
pub fn cross_gram(
    layout: &HoleLayout,
    basis_i: &Arc<EigenBasis>,
    basis_j: &Arc<EigenBasis>,
    i: usize,
    j: usize,
    k: Complex64,
    opts: &S0Options,
) -> Result<DMatrix<Complex64>> {
    if i == j {
        return Err(SlabError::Config("cross_gram requires i != j".into()));
    }
    let shapes: Vec<HoleShape> = vec![basis_i.shape().clone(), basis_j.shape().clone()];
    // Only the (i, j) pair distance matters here.
    let pair_layout = HoleLayout {
        centers: vec![layout.centers[i], layout.centers[j]],
        h: layout.h,
        wavenumber_box: layout.wavenumber_box,
    };
    pair_layout.validate(&shapes)?;
    let gi = SingleGram::get(basis_i, opts)?;
    let gj = SingleGram::get(basis_j, opts)?;
    let table = CrossTable::new(layout, basis_i, basis_j, i, j);
    Ok(table.evaluate(&gi.phiw, &gj.phiw, k))
}

/// Everything k-independent the dispersion assembly needs: per-hole Gram sets
/// and cross-hole node tables.
pub struct GramSet {
    pub layout: HoleLayout,
    pub singles: Vec<Arc<SingleGram>>,
    /// Cross tables for i < j.
    cross: HashMap<(usize, usize), CrossTable>,
}

impl GramSet {
    pub fn build(layout: HoleLayout, bases: &[Arc<EigenBasis>], opts: &S0Options) -> Result<Self> {
        let shapes: Vec<HoleShape> = bases.iter().map(|b| b.shape().clone()).collect();
        layout.validate(&shapes)?;
        let mut singles = Vec::with_capacity(bases.len());
        for b in bases {
            singles.push(SingleGram::get(b, opts)?);
        }
        let mut cross = HashMap::new();
        for i in 0..bases.len() {
            for j in (i + 1)..bases.len() {
                cross.insert((i, j), CrossTable::new(&layout, &bases[i], &bases[j], i, j));
            }
        }
        Ok(GramSet {
            layout,
            singles,
            cross,
        })
    }

    pub fn hole_count(&self) -> usize {
        self.singles.len()
    }

    /// d^{ij}(k) for i != j, using the cached i < j table and the
    /// reciprocity d^{ij}_{m'm} = d^{ji}_{mm'} for the swapped order.
    pub fn cross_d(&self, i: usize, j: usize, k: Complex64) -> DMatrix<Complex64> {
        if i < j {
            let t = &self.cross[&(i, j)];
            t.evaluate(&self.singles[i].phiw, &self.singles[j].phiw, k)
        } else {
            let t = &self.cross[&(j, i)];
            t.evaluate(&self.singles[j].phiw, &self.singles[i].phiw, k)
                .transpose()
        }
    }

    /// Combined content hash of every Gram cache in use.
    pub fn content_hash(&self) -> u64 {
        let mut h = cache::Fnv::new();
        for s in &self.singles {
            h.write_u64(s.content_hash());
        }
        h.finish()
    }
}

// ---------------------------------------------------------------------------

/// s0 Gram with default options (spec-level convenience entry point).
pub fn s0_gram(basis: &Arc<EigenBasis>) -> Result<DMatrix<f64>> {
    Ok(SingleGram::get(basis, &S0Options::default())?.s0().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::HoleShape;
    use approx::assert_abs_diff_eq;

    fn square_basis(m: usize) -> Arc<EigenBasis> {
        Arc::new(EigenBasis::build(&HoleShape::UnitSquare, m).unwrap())
    }

    fn disk_basis(m: usize) -> Arc<EigenBasis> {
        Arc::new(EigenBasis::build(&HoleShape::UnitDisk, m).unwrap())
    }

    /// Closed form for the square: (S0 1, 1) = (2/pi) ln(1+sqrt2) - (2/(3pi))(sqrt2 - 1).
    fn square_s0_00_exact() -> f64 {
        let s2 = std::f64::consts::SQRT_2;
        (2.0 / std::f64::consts::PI) * (1.0 + s2).ln()
            - (2.0 / (3.0 * std::f64::consts::PI)) * (s2 - 1.0)
    }

    #[test]
    fn square_s0_entry_00_matches_closed_form() {
        let g = SingleGram::get(&square_basis(4), &S0Options::default()).unwrap();
        let exact = square_s0_00_exact();
        let rel = (g.s0()[(0, 0)] - exact).abs() / exact;
        assert!(rel < 1e-6, "rel error {rel:.3e}");
        assert!(g.s0_error_estimate().unwrap_or(1.0) < 1e-6);
    }

    /// Independent oracle for the disk: the in-plane potential of the unit
    /// disk is u(rho) = 4 R E(rho/R), so (S0 1, 1) = (4 R^3 / (2 pi)) * 2 pi
    /// int_0^1 E(t) t dt, with E evaluated through the AGM.
    fn disk_s0_00_oracle() -> f64 {
        fn elliptic_e(m: f64) -> f64 {
            // complete elliptic integral of the second kind, modulus m = k
            if m == 0.0 {
                return std::f64::consts::FRAC_PI_2;
            }
            if (m - 1.0).abs() < 1e-15 {
                return 1.0;
            }
            let mut a = 1.0f64;
            let mut b = (1.0 - m * m).sqrt();
            let mut sum = 1.0 - 0.5 * m * m;
            let mut pow2 = 0.5;
            for _ in 0..60 {
                let c = 0.5 * (a - b);
                let an = 0.5 * (a + b);
                let bn = (a * b).sqrt();
                pow2 *= 2.0;
                sum -= pow2 * c * c;
                a = an;
                b = bn;
                if c.abs() < 1e-17 {
                    break;
                }
            }
            std::f64::consts::FRAC_PI_2 * sum / a
        }
        let radius = 1.0 / std::f64::consts::PI.sqrt();
        // 4 R^3 int_0^1 E(t) t dt * (2 pi / 2 pi)
        let g = Gauss1D::new(64);
        let integral: f64 = g
            .mapped(0.0, 1.0)
            .map(|(t, w)| w * elliptic_e(t) * t)
            .sum();
        4.0 * radius.powi(3) * integral
    }

    #[test]
    fn disk_s0_entry_00_matches_elliptic_oracle() {
        let g = SingleGram::get(&disk_basis(4), &S0Options::default()).unwrap();
        let oracle = disk_s0_00_oracle();
        let rel = (g.s0()[(0, 0)] - oracle).abs() / oracle;
        assert!(rel < 1e-5, "got {}, oracle {}, rel {rel:.3e}", g.s0()[(0, 0)], oracle);
    }

    #[test]
    fn s0_is_symmetric_and_positive_definite() {
        for basis in [square_basis(12), disk_basis(12)] {
            let g = SingleGram::get(&basis, &S0Options::default()).unwrap();
            let s0 = g.s0();
            assert_eq!(s0, &s0.transpose());
            let eig = s0.clone().symmetric_eigen();
            let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(min > 0.0, "smallest eigenvalue {min:.3e}");
        }
    }

    #[test]
    fn doubling_outer_order_moves_entries_below_tolerance() {
        let basis = square_basis(6);
        let base = s0_singular_once(&basis, &S0Options::default());
        let double = s0_singular_once(
            &basis,
            &S0Options {
                outer_p: 24,
                outer_levels: 6,
                theta_p: 20,
                rho_p: 28,
                tol: 1e-6,
            },
        );
        let scale = base.amax();
        let mut err: f64 = 0.0;
        for (a, b) in base.iter().zip(double.iter()) {
            err = err.max((a - b).abs());
        }
        assert!(err / scale < 1e-6, "rel drift {:.3e}", err / scale);
    }

    #[test]
    fn folded_assembly_matches_full_tensor_reference() {
        let opts = S0Options::default();
        for basis in [square_basis(8), disk_basis(8)] {
            let folded = s0_singular_once(&basis, &opts);
            let full = s0_singular_reference(&basis, &opts);
            let scale = full.amax();
            let mut err: f64 = 0.0;
            for (a, b) in folded.iter().zip(full.iter()) {
                err = err.max((a - b).abs());
            }
            assert!(
                err / scale < 1e-7,
                "{:?}: folded vs reference drift {:.3e}",
                basis.shape().cache_label(),
                err / scale
            );
        }
    }

    #[test]
    fn d_at_zero_equals_s0_exactly() {
        let g = SingleGram::get(&square_basis(5), &S0Options::default()).unwrap();
        let d = g.d(Complex64::new(0.0, 0.0)).unwrap();
        for (dv, sv) in d.iter().zip(g.s0().iter()) {
            assert_eq!(dv.re, *sv);
            assert_eq!(dv.im, 0.0);
        }
    }

    #[test]
    fn d_expansion_identity_holds_entrywise() {
        // d(eps) = s0 + (i eps / 2 pi) (int phi_m')(int phi_m) + eps^2 r0(eps)
        let g = SingleGram::get(&square_basis(6), &S0Options::default()).unwrap();
        let eps = Complex64::new(0.07, -0.013);
        let d = g.d(eps).unwrap();
        let r0 = g.r0(eps).unwrap();
        let q = g.basis().quadrature();
        let phi = g.basis().mode_values();
        let m1 = g.s0().nrows();
        let means: Vec<f64> = (0..m1)
            .map(|m| (0..q.len()).map(|i| q.weights[i] * phi[(i, m)]).sum())
            .collect();
        for a in 0..m1 {
            for b in 0..m1 {
                let lhs = d[(a, b)];
                let rhs = g.s0()[(a, b)]
                    + Complex64::i() * eps / (2.0 * std::f64::consts::PI) * means[a] * means[b]
                    + eps * eps * r0[(a, b)];
                assert_abs_diff_eq!((lhs - rhs).norm(), 0.0, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn d00_remainder_has_quadratic_slope() {
        let g = SingleGram::get(&square_basis(4), &S0Options::default()).unwrap();
        let mut errs = Vec::new();
        for &e in &[1e-2, 5e-3, 2.5e-3] {
            let eps = Complex64::new(e, 0.0);
            let d = g.d(eps).unwrap();
            let lead = g.s0()[(0, 0)] + Complex64::i() * eps / (2.0 * std::f64::consts::PI);
            errs.push((d[(0, 0)] - lead).norm());
        }
        let slope1 = (errs[0] / errs[1]).log2();
        let slope2 = (errs[1] / errs[2]).log2();
        assert!((slope1 - 2.0).abs() < 0.2, "slope {slope1}");
        assert!((slope2 - 2.0).abs() < 0.2, "slope {slope2}");
    }

    #[test]
    fn nonconstant_mode_remainders_are_quadratic_in_eps() {
        let g = SingleGram::get(&square_basis(6), &S0Options::default()).unwrap();
        for &e in &[1e-2, 2.5e-3] {
            let eps = Complex64::new(e, 0.0);
            let d = g.d(eps).unwrap();
            for a in 0..6 {
                for b in 0..6 {
                    if a == 0 && b == 0 {
                        continue;
                    }
                    let drift = (d[(a, b)] - Complex64::new(g.s0()[(a, b)], 0.0)).norm();
                    assert!(
                        drift / (e * e) < 1.0,
                        "entry ({a},{b}): drift {drift:.3e} not O(eps^2)"
                    );
                }
            }
        }
    }

    #[test]
    fn r0_entries_stay_bounded_as_eps_shrinks() {
        let g = SingleGram::get(&square_basis(5), &S0Options::default()).unwrap();
        let r_big = g.r0(Complex64::new(1e-2, 0.0)).unwrap();
        let r_small = g.r0(Complex64::new(1e-3, 0.0)).unwrap();
        for (a, b) in r_big.iter().zip(r_small.iter()) {
            assert!(a.norm() < 1.0 && b.norm() < 1.0);
        }
        // entry (0,0) difference is O(eps)
        let diff = (r_big[(0, 0)] - r_small[(0, 0)]).norm();
        assert!(diff < 0.01 * 9.0, "difference {diff:.3e}");
    }

    #[test]
    fn weighted_s0_norm_grows_sublinearly() {
        // lambda^(1/4)-weighted quadratic form: a bounded-operator witness.
        let basis = square_basis(40);
        let g = SingleGram::get(&basis, &S0Options::default()).unwrap();
        let norms: Vec<f64> = [10usize, 20, 40]
            .iter()
            .map(|&m| {
                let mut w = DMatrix::zeros(m, m);
                for a in 1..=m {
                    for b in 1..=m {
                        w[(a - 1, b - 1)] = basis.eigenvalue(a).powf(0.25)
                            * basis.eigenvalue(b).powf(0.25)
                            * g.s0()[(a, b)];
                    }
                }
                let svd = w.svd(false, false);
                svd.singular_values[0]
            })
            .collect();
        assert!(norms[0] <= norms[1] && norms[1] <= norms[2]);
        // Doubling M should not double the norm once in the tail.
        assert!(
            norms[2] / norms[1] < 1.6,
            "spectral norms {norms:?} grow too fast"
        );
        eprintln!("weighted s0 spectral norms at M=10,20,40: {norms:?}");
    }

    #[test]
    fn cross_gram_leading_term_and_reciprocity() {
        let basis = square_basis(4);
        let layout = HoleLayout {
            centers: vec![[0.0, 0.0], [1.0, 0.0]],
            h: 0.01,
            wavenumber_box: WavenumberBox::default(),
        };
        let k = Complex64::new(3.0, -0.05);
        let opts = S0Options::default();
        let d12 = cross_gram(&layout, &basis, &basis, 0, 1, k, &opts).unwrap();
        let d21 = cross_gram(&layout, &basis, &basis, 1, 0, k, &opts).unwrap();
        let m1 = d12.nrows();
        for a in 0..m1 {
            for b in 0..m1 {
                assert_abs_diff_eq!((d12[(a, b)] - d21[(b, a)]).norm(), 0.0, epsilon = 1e-12);
            }
        }
        // leading term of the (0,0) entry
        let eps = k * layout.h;
        let lead = eps / (2.0 * std::f64::consts::PI) * (Complex64::i() * k).exp() / k;
        assert!((d12[(0, 0)] - lead).norm() < 3.0 * eps.norm_sqr());
    }

    #[test]
    fn cross_gram_remainder_slopes() {
        let basis = square_basis(3);
        let k = Complex64::new(3.0, -0.05);
        let opts = S0Options::default();
        let mut lead_errs = Vec::new();
        let mut high_entries = Vec::new();
        let hs = [0.02, 0.01, 0.005];
        for &h in &hs {
            let layout = HoleLayout {
                centers: vec![[0.0, 0.0], [1.0, 0.0]],
                h,
                wavenumber_box: WavenumberBox::default(),
            };
            let d = cross_gram(&layout, &basis, &basis, 0, 1, k, &opts).unwrap();
            let eps = k * h;
            let lead = eps / (2.0 * std::f64::consts::PI) * (Complex64::i() * k).exp() / k;
            lead_errs.push((d[(0, 0)] - lead).norm());
            high_entries.push(d[(1, 2)].norm().max(d[(2, 1)].norm()).max(d[(0, 1)].norm()));
        }
        // The remainder is O(eps^2); for centrally symmetric shapes the
        // linear kernel term integrates to zero and the decay steepens to
        // cubic, so the check is one-sided.
        let slope_lead = (lead_errs[0] / lead_errs[2]).log2() / 2.0;
        assert!(slope_lead > 1.65, "remainder slope {slope_lead}");
        let slope_high = (high_entries[0] / high_entries[2]).log2() / 2.0;
        assert!(slope_high > 1.6, "higher-mode slope {slope_high}");
    }

    #[test]
    fn layout_separation_guard_rejects_close_holes() {
        let layout = HoleLayout {
            centers: vec![[0.0, 0.0], [0.1, 0.0]],
            h: 0.01,
            wavenumber_box: WavenumberBox::default(),
        };
        let shapes = vec![HoleShape::UnitSquare, HoleShape::UnitSquare];
        assert!(layout.validate(&shapes).is_err());
        let err = cross_gram(
            &layout,
            &square_basis(2),
            &square_basis(2),
            0,
            1,
            Complex64::new(3.0, -0.1),
            &S0Options::default(),
        )
        .unwrap_err();
        assert!(matches!(err, SlabError::Config(_)));
    }

    #[test]
    fn custom_shape_s0_roughly_matches_square() {
        // The node-cloud fallback is coarse; check it lands within a few
        // percent of the analytic square value.
        let basis = square_basis(2);
        let q = basis.quadrature();
        let file = serde_json::json!({
            "area": 1.0,
            "eigenvalues": basis.eigenvalues(),
            "quadrature": {"nodes": q.nodes, "weights": q.weights},
            "mode_values": (0..q.len()).map(|i| {
                (0..3).map(|m| basis.mode_values()[(i, m)]).collect::<Vec<_>>()
            }).collect::<Vec<_>>(),
        });
        let shape = crate::geometry::load_custom_shape(&file.to_string()).unwrap();
        let custom = Arc::new(EigenBasis::build(&shape, 2).unwrap());
        let g = SingleGram::get(&custom, &S0Options::default()).unwrap();
        let rel = (g.s0()[(0, 0)] - square_s0_00_exact()).abs() / square_s0_00_exact();
        assert!(rel < 0.05, "custom-shape fallback off by {rel:.3e}");
    }
}
