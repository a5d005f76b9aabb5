//! The truncated Fourier-matching system and its Schur-reduced dispersion
//! matrix.
//!
//! Unknowns are ordered (b_{0,1}, ..., b_{0,N}, a_{1,1..M}, ..., a_{N,1..M})
//! with the lambda^{1/4} weighting a_{m,j} = lambda_{m,j}^{1/4} b_{m,j}. The
//! b-rows keep the parity factor on the diagonal side, so the system stays
//! finite even where e^{i s_0 l} + 1 vanishes; the a-rows divide by their own
//! parity weight, whose modulus stays near 1 for m >= 1 because the
//! evanescent exponentials are tiny throughout the search region.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SlabError};
use crate::geometry::{EigenBasis, HoleShape};
use crate::gram::{GramSet, HoleLayout, S0Options, WavenumberBox};
use crate::linalg;

/// Midplane symmetry class of the sought field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    /// Fabry-Perot integer of the m-th mode of this parity: kl is near
    /// fp_index * pi, odd integers for even modes and vice versa.
    pub fn fp_index(&self, m: usize) -> usize {
        match self {
            Parity::Even => 2 * m - 1,
            Parity::Odd => 2 * m,
        }
    }

    /// Inverse of [`Parity::fp_index`].
    pub fn from_fp_index(fp: usize) -> (Parity, usize) {
        if fp % 2 == 1 {
            (Parity::Even, fp.div_ceil(2))
        } else {
            (Parity::Odd, fp / 2)
        }
    }
}

impl std::fmt::Display for Parity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Parity::Even => write!(f, "even"),
            Parity::Odd => write!(f, "odd"),
        }
    }
}

/// Slab geometry plus truncation controls.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SlabConfig {
    /// Slab thickness l.
    pub thickness: f64,
    /// Hole scale h (regime guard h < 0.2).
    pub h: f64,
    /// Hole centers and generating shapes.
    pub holes: Vec<([f64; 2], HoleShape)>,
    /// Number of non-constant modes kept per hole.
    pub truncation: usize,
    pub search_box: WavenumberBox,
}

pub const H_REGIME_LIMIT: f64 = 0.2;
pub const A_BLOCK_COND_LIMIT: f64 = 1e8;

impl SlabConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thickness <= 0.0 {
            return Err(SlabError::Config("thickness l must be positive".into()));
        }
        if !(self.h > 0.0 && self.h < H_REGIME_LIMIT) {
            return Err(SlabError::Config(format!(
                "h = {} outside the regime guard 0 < h < {H_REGIME_LIMIT}",
                self.h
            )));
        }
        if self.holes.is_empty() {
            return Err(SlabError::Config("at least one hole required".into()));
        }
        self.layout().validate(&self.shapes())
    }

    pub fn shapes(&self) -> Vec<HoleShape> {
        self.holes.iter().map(|(_, s)| s.clone()).collect()
    }

    pub fn layout(&self) -> HoleLayout {
        HoleLayout {
            centers: self.holes.iter().map(|(c, _)| *c).collect(),
            h: self.h,
            wavenumber_box: self.search_box,
        }
    }

    pub fn hole_count(&self) -> usize {
        self.holes.len()
    }
}

/// Axial wavenumber s_m = sqrt(k^2 - lambda_m / h^2) on the branch with
/// Im(s) >= 0 (ties resolved to Re(s) >= 0); s_0 = k exactly for lambda = 0.
pub fn axial_wavenumber(k: Complex64, lambda: f64, h: f64) -> Complex64 {
    debug_assert!(h > 0.0);
    if lambda == 0.0 {
        return k;
    }
    let z = k * k - Complex64::new(lambda / (h * h), 0.0);
    let mut s = z.sqrt();
    if s.im < 0.0 || (s.im == 0.0 && s.re < 0.0) {
        s = -s;
    }
    s
}

/// Truncated full matrix and its N x N Schur reduction at one frequency.
pub struct DispersionSystem {
    pub k: Complex64,
    pub parity: Parity,
    /// N(M+1) x N(M+1), b-block first.
    pub full: DMatrix<Complex64>,
    /// Schur complement onto the b block.
    pub reduced: DMatrix<Complex64>,
    /// Condition number of the diagonally rescaled a-block.
    pub a_block_cond: f64,
    pub hole_count: usize,
    pub truncation: usize,
}

/// Assembly context: bases and Gram sets for one slab configuration.
pub struct Assembly {
    pub config: SlabConfig,
    pub bases: Vec<Arc<EigenBasis>>,
    pub grams: GramSet,
}

impl Assembly {
    /// Build bases (shared between identical shapes) and Gram sets.
    pub fn new(config: SlabConfig, opts: &S0Options) -> Result<Self> {
        config.validate()?;
        let mut by_label: HashMap<String, Arc<EigenBasis>> = HashMap::new();
        let mut bases = Vec::with_capacity(config.holes.len());
        for (_, shape) in &config.holes {
            let label = shape.cache_label();
            let basis = match by_label.get(&label) {
                Some(b) => b.clone(),
                None => {
                    let b = Arc::new(EigenBasis::build(shape, config.truncation.max(1))?);
                    by_label.insert(label, b.clone());
                    b
                }
            };
            bases.push(basis);
        }
        let grams = GramSet::build(config.layout(), &bases, opts)?;
        Ok(Assembly { config, bases, grams })
    }

    /// Use pre-built bases (they must hold at least `truncation` modes).
    pub fn with_bases(config: SlabConfig, bases: Vec<Arc<EigenBasis>>, opts: &S0Options) -> Result<Self> {
        config.validate()?;
        if bases.len() != config.holes.len() {
            return Err(SlabError::Config("one basis per hole required".into()));
        }
        for (b, (_, shape)) in bases.iter().zip(&config.holes) {
            if b.mode_count() < config.truncation {
                return Err(SlabError::Config(format!(
                    "basis holds {} modes, truncation needs {}",
                    b.mode_count(),
                    config.truncation
                )));
            }
            if b.shape() != shape {
                return Err(SlabError::Config("basis shape mismatch".into()));
            }
        }
        let grams = GramSet::build(config.layout(), &bases, opts)?;
        Ok(Assembly { config, bases, grams })
    }

    /// Assemble the full system and reduce it at the configured truncation.
    pub fn dispersion(&self, k: Complex64, parity: Parity) -> Result<DispersionSystem> {
        self.dispersion_truncated(k, parity, self.config.truncation)
    }

    /// Assemble with an explicit truncation m_sys <= basis mode count
    /// (m_sys = 0 keeps only the leading coefficients).
    pub fn dispersion_truncated(&self, k: Complex64, parity: Parity, m_sys: usize) -> Result<DispersionSystem> {
        let n = self.config.hole_count();
        let l = self.config.thickness;
        let h = self.config.h;
        let eps = k * h;
        let m1 = m_sys + 1;
        let dim = n * m1;

        for basis in &self.bases {
            if basis.mode_count() < m_sys {
                return Err(SlabError::Config(format!(
                    "truncation {m_sys} exceeds basis mode count {}",
                    basis.mode_count()
                )));
            }
        }

        // Per-hole d(eps) (shared between identical Gram sets), axial factors
        // and parity weights.
        let mut d_self: Vec<Arc<DMatrix<Complex64>>> = Vec::with_capacity(n);
        let mut memo: HashMap<u64, Arc<DMatrix<Complex64>>> = HashMap::new();
        for g in &self.grams.singles {
            let key = g.content_hash();
            let entry = match memo.get(&key) {
                Some(m) => m.clone(),
                None => {
                    let d = Arc::new(g.d(eps)?);
                    memo.insert(key, d.clone());
                    d
                }
            };
            d_self.push(entry);
        }

        // num_m / den_m per hole and mode: even parity pairs the (e-1) factor
        // with source modes and (e+1) with the matched row; odd swaps them.
        let mut s_all: Vec<Vec<Complex64>> = Vec::with_capacity(n);
        let mut num: Vec<Vec<Complex64>> = Vec::with_capacity(n);
        let mut den: Vec<Vec<Complex64>> = Vec::with_capacity(n);
        for basis in &self.bases {
            let mut s_h = Vec::with_capacity(m1);
            let mut nm = Vec::with_capacity(m1);
            let mut dn = Vec::with_capacity(m1);
            for m in 0..m1 {
                let s = axial_wavenumber(k, basis.eigenvalue(m), h);
                let e = (Complex64::i() * s * l).exp();
                let (plus, minus) = (e + 1.0, e - 1.0);
                let (n_f, d_f) = match parity {
                    Parity::Even => (minus, plus),
                    Parity::Odd => (plus, minus),
                };
                if m >= 1 && d_f.norm() < 1e-14 {
                    return Err(SlabError::NearSingularWeight {
                        mode: m,
                        sign: if parity == Parity::Even { '+' } else { '-' },
                        magnitude: d_f.norm(),
                    });
                }
                s_h.push(s);
                nm.push(n_f);
                dn.push(d_f);
            }
            s_all.push(s_h);
            num.push(nm);
            den.push(dn);
        }

        // Cross blocks once per unordered pair; the reverse direction is the
        // transpose by kernel reciprocity.
        let mut cross: HashMap<(usize, usize), DMatrix<Complex64>> = HashMap::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let d_ij = self.grams.cross_d(i, j, k);
                cross.insert((j, i), d_ij.transpose());
                cross.insert((i, j), d_ij);
            }
        }

        let mut full = DMatrix::<Complex64>::zeros(dim, dim);
        let b_col = |i: usize| i;
        let a_col = |i: usize, m: usize| n + i * m_sys + (m - 1);

        for j in 0..n {
            for i in 0..n {
                let d_ij: &DMatrix<Complex64> = if i == j { &d_self[j] } else { &cross[&(i, j)] };
                let lam_i = self.bases[i].eigenvalues();
                let lam_j = self.bases[j].eigenvalues();

                // b-row of hole j against hole i unknowns
                let c00 = -Complex64::i() * eps * d_ij[(0, 0)];
                let delta = if i == j { den[j][0] } else { Complex64::new(0.0, 0.0) };
                full[(b_col(j), b_col(i))] = delta - num[j][0] * c00;
                for mp in 1..=m_sys {
                    let c_mp0 = -lam_i[mp].powf(-0.25)
                        * Complex64::i()
                        * s_all[i][mp]
                        * h
                        * num[i][mp]
                        * d_ij[(mp, 0)];
                    full[(b_col(j), a_col(i, mp))] = -c_mp0;
                }

                // a-rows of hole j
                for m in 1..=m_sys {
                    let c_0m = -lam_j[m].powf(0.25) * Complex64::i() * eps / den[j][m] * d_ij[(0, m)];
                    full[(a_col(j, m), b_col(i))] = -num[j][0] * c_0m;
                    for mp in 1..=m_sys {
                        let c_mpm = -lam_i[mp].powf(-0.25)
                            * lam_j[m].powf(0.25)
                            * Complex64::i()
                            * s_all[i][mp]
                            * h
                            * num[i][mp]
                            / den[j][m]
                            * d_ij[(mp, m)];
                        let diag = if i == j && mp == m {
                            Complex64::new(1.0, 0.0)
                        } else {
                            Complex64::new(0.0, 0.0)
                        };
                        full[(a_col(j, m), a_col(i, mp))] = diag - c_mpm;
                    }
                }
            }
        }

        // Conditioning of the diagonally rescaled a-block.
        let a_block_cond = if m_sys == 0 {
            1.0
        } else {
            let na = n * m_sys;
            let mut a_block = full.view((n, n), (na, na)).clone_owned();
            for r in 0..na {
                let scale = a_block[(r, r)].norm().max(1e-300);
                for c in 0..na {
                    a_block[(r, c)] /= scale;
                }
            }
            linalg::cond2(&a_block)
        };
        if a_block_cond >= A_BLOCK_COND_LIMIT {
            return Err(SlabError::IllConditionedTruncation {
                cond: a_block_cond,
                limit: A_BLOCK_COND_LIMIT,
            });
        }

        let reduced = linalg::schur_complement(&full, n)?;
        Ok(DispersionSystem {
            k,
            parity,
            full,
            reduced,
            a_block_cond,
            hole_count: n,
            truncation: m_sys,
        })
    }

    /// Schur-reduced N x N dispersion matrix.
    pub fn reduced_dispersion(&self, k: Complex64, parity: Parity) -> Result<DMatrix<Complex64>> {
        Ok(self.dispersion(k, parity)?.reduced)
    }

    /// det of the reduced dispersion matrix, the root-finding target.
    pub fn det_reduced(&self, k: Complex64, parity: Parity) -> Result<Complex64> {
        Ok(linalg::det(&self.reduced_dispersion(k, parity)?))
    }
}

/// One row of a truncation self-convergence study.
#[derive(Debug, Clone, Serialize)]
pub struct TruncationRow {
    pub truncation: usize,
    pub a_block_cond: f64,
    /// Row-major reduced matrix entries.
    pub reduced: Vec<Complex64>,
    /// Max entry difference against the previous row.
    pub cauchy_diff: Option<f64>,
}

/// Reduced-matrix entries, a-block condition numbers and Cauchy differences
/// across ascending truncations.
pub fn truncation_report(
    assembly: &Assembly,
    k: Complex64,
    parity: Parity,
    m_list: &[usize],
) -> Result<Vec<TruncationRow>> {
    if m_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SlabError::Config("M list must be strictly ascending".into()));
    }
    let mut rows: Vec<TruncationRow> = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let sys = assembly.dispersion_truncated(k, parity, m)?;
        let reduced: Vec<Complex64> = sys.reduced.transpose().as_slice().to_vec();
        let cauchy_diff = rows.last().map(|prev: &TruncationRow| {
            prev.reduced
                .iter()
                .zip(&reduced)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max)
        });
        rows.push(TruncationRow {
            truncation: m,
            a_block_cond: sys.a_block_cond,
            reduced,
            cauchy_diff,
        });
    }
    Ok(rows)
}
