//! Hole cross-sections and their Neumann-Laplacian eigenbases.
//!
//! The generating domain G of every hole has unit area. The square and the
//! disk carry analytic eigenpairs (cosine products, Bessel modes); custom
//! shapes supply an externally computed eigenpair table that is validated
//! against the same contract: lambda_0 = 0 < lambda_1 <= lambda_2 <= ...,
//! phi_0 = 1, and discrete orthonormality of the mode table.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bessel::{bessel_j, bessel_prime_roots};
use crate::error::{Result, SlabError};
use crate::quad::QuadratureRule;

pub const ORTHONORMALITY_TOL: f64 = 1e-8;

/// Default per-axis (square) / radial (disk) quadrature order.
pub const DEFAULT_BASIS_ORDER: usize = 32;

/// A hole cross-section of unit area containing the origin of its frame.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub enum HoleShape {
    /// (-1/2, 1/2)^2.
    UnitSquare,
    /// Disk of radius 1/sqrt(pi).
    UnitDisk,
    /// Externally supplied eigenpair table (see [`CustomShapeData`]).
    Custom(CustomShapeData),
}

impl HoleShape {
    /// Diameter of G (used by the hole-separation guard).
    pub fn diameter(&self) -> f64 {
        match self {
            HoleShape::UnitSquare => std::f64::consts::SQRT_2,
            HoleShape::UnitDisk => 2.0 / std::f64::consts::PI.sqrt(),
            HoleShape::Custom(c) => c.diameter(),
        }
    }

    /// True if the local-frame point lies in (the closure of) G.
    pub fn contains(&self, p: [f64; 2]) -> bool {
        const TOL: f64 = 1e-12;
        match self {
            HoleShape::UnitSquare => p[0].abs() <= 0.5 + TOL && p[1].abs() <= 0.5 + TOL,
            HoleShape::UnitDisk => p[0].hypot(p[1]) <= 1.0 / std::f64::consts::PI.sqrt() + TOL,
            HoleShape::Custom(c) => p[0].hypot(p[1]) <= 0.5 * c.diameter() + TOL,
        }
    }

    /// Stable identifier entering Gram-cache content hashes.
    pub fn cache_label(&self) -> String {
        match self {
            HoleShape::UnitSquare => "square".into(),
            HoleShape::UnitDisk => "disk".into(),
            HoleShape::Custom(c) => format!("custom-{:016x}", c.content_hash()),
        }
    }
}

/// Validated payload of a custom-shape input file.
///
/// The raw file carries {area, eigenvalues, quadrature, mode_values}; after
/// loading, coordinates are rescaled so the area is exactly 1 and the scale
/// factor is recorded.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CustomShapeData {
    pub eigenvalues: Vec<f64>,
    pub quadrature: QuadratureRule,
    /// mode_values[node][mode] = phi_mode(node).
    pub mode_values: Vec<Vec<f64>>,
    /// Linear factor applied to the input coordinates to normalize the area.
    pub area_rescale: f64,
}

impl CustomShapeData {
    fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.quadrature.nodes.iter().enumerate() {
            for b in self.quadrature.nodes.iter().skip(i + 1) {
                d = d.max((a[0] - b[0]).hypot(a[1] - b[1]));
            }
        }
        d
    }

    fn content_hash(&self) -> u64 {
        let mut h = crate::cache::Fnv::new();
        for &l in &self.eigenvalues {
            h.write_f64(l);
        }
        for n in &self.quadrature.nodes {
            h.write_f64(n[0]);
            h.write_f64(n[1]);
        }
        for row in &self.mode_values {
            for &v in row {
                h.write_f64(v);
            }
        }
        h.finish()
    }
}

/// Raw schema of the custom-shape JSON file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomShapeFile {
    area: f64,
    eigenvalues: Vec<f64>,
    quadrature: CustomQuadFile,
    mode_values: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomQuadFile {
    nodes: Vec<[f64; 2]>,
    weights: Vec<f64>,
}

/// Load and validate a custom shape description.
pub fn load_custom_shape(json: &str) -> Result<HoleShape> {
    let raw: CustomShapeFile = serde_json::from_str(json)?;
    if raw.area <= 0.0 {
        return Err(SlabError::Config("custom shape: area must be positive".into()));
    }
    if raw.quadrature.nodes.len() != raw.quadrature.weights.len() {
        return Err(SlabError::Config(
            "custom shape: node and weight counts differ".into(),
        ));
    }
    if raw.mode_values.len() != raw.quadrature.nodes.len() {
        return Err(SlabError::Config(
            "custom shape: mode_values must have one row per quadrature node".into(),
        ));
    }
    if raw.quadrature.weights.iter().any(|&w| w <= 0.0) {
        return Err(SlabError::Config("custom shape: weights must be positive".into()));
    }

    // Rescale coordinates so the area becomes exactly 1; eigenvalues scale by
    // the area and mode values by sqrt(area) to keep unit L2 norms.
    let scale = 1.0 / raw.area.sqrt();
    let nodes: Vec<[f64; 2]> = raw
        .quadrature
        .nodes
        .iter()
        .map(|n| [n[0] * scale, n[1] * scale])
        .collect();
    let weights: Vec<f64> = raw.quadrature.weights.iter().map(|&w| w / raw.area).collect();
    let eigenvalues: Vec<f64> = raw.eigenvalues.iter().map(|&l| l * raw.area).collect();
    let mode_values: Vec<Vec<f64>> = raw
        .mode_values
        .iter()
        .map(|row| row.iter().map(|&v| v * raw.area.sqrt()).collect())
        .collect();

    let wsum: f64 = weights.iter().sum();
    if (wsum - 1.0).abs() > 1e-10 {
        return Err(SlabError::Config(format!(
            "custom shape: weights sum to {wsum:.12}, expected area 1"
        )));
    }
    if eigenvalues.is_empty() || eigenvalues[0].abs() > 1e-12 {
        return Err(SlabError::Config("custom shape: lambda_0 must be 0".into()));
    }
    if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
        return Err(SlabError::Config("custom shape: eigenvalues must be ascending".into()));
    }
    if eigenvalues.len() > 1 && eigenvalues[1] <= 0.0 {
        return Err(SlabError::Config("custom shape: lambda_1 must be positive".into()));
    }
    let n_modes = eigenvalues.len();
    if mode_values.iter().any(|row| row.len() != n_modes) {
        return Err(SlabError::Config(
            "custom shape: mode_values rows must match eigenvalue count".into(),
        ));
    }
    for row in &mode_values {
        if (row[0] - 1.0).abs() > 1e-8 {
            return Err(SlabError::Config("custom shape: phi_0 must be identically 1".into()));
        }
    }

    let data = CustomShapeData {
        eigenvalues,
        quadrature: QuadratureRule {
            nodes,
            weights,
            order: 0,
        },
        mode_values,
        area_rescale: scale,
    };
    // Orthonormality contract.
    let basis = EigenBasis::from_custom(&data, n_modes - 1)?;
    let defect = basis.orthonormality_defect();
    if defect > ORTHONORMALITY_TOL {
        return Err(SlabError::Config(format!(
            "custom shape: mode table orthonormality defect {defect:.3e} exceeds {ORTHONORMALITY_TOL:.0e}"
        )));
    }
    Ok(HoleShape::Custom(data))
}

/// How a mode transforms under the shape's point symmetries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModeSymmetry {
    /// Cosine-product indices on the square.
    Square { p: u32, q: u32 },
    /// Angular order, radial cutoff (bit pattern) and cos/sin kind.
    Disk { n: u32, alpha_bits: u64, sine: bool },
    None,
}

/// Analytic descriptor of one eigenfunction.
#[derive(Debug, Clone, PartialEq)]
enum Mode {
    /// Cosine product on the centered unit square: indices (p, q).
    SquareProd { p: u32, q: u32 },
    /// Disk mode J_n(sqrt(pi) alpha r) x {cos, sin}(n theta), normalized.
    Disk {
        n: u32,
        alpha: f64,
        sine: bool,
        norm: f64,
    },
    /// Row of a custom mode table.
    Tabulated { column: usize },
}

/// The mode_count + 1 lowest Neumann eigenpairs of G plus a quadrature rule.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    shape: HoleShape,
    eigenvalues: Vec<f64>,
    modes: Vec<Mode>,
    quad: QuadratureRule,
    /// phi_m at the quadrature nodes, nodes x modes.
    mode_values: DMatrix<f64>,
    /// Largest 1D cosine index (square shapes), for the factor cache.
    max_square_index: u32,
}

fn square_factor(p: u32, x: f64) -> f64 {
    if p == 0 {
        1.0
    } else {
        std::f64::consts::SQRT_2 * (p as f64 * std::f64::consts::PI * (x + 0.5)).cos()
    }
}

impl EigenBasis {
    /// Build the basis with the default quadrature order.
    pub fn build(shape: &HoleShape, mode_count: usize) -> Result<Self> {
        Self::build_with_order(shape, mode_count, DEFAULT_BASIS_ORDER)
    }

    /// Build the `mode_count + 1` lowest eigenpairs, sorted ascending.
    ///
    /// Within degenerate eigenspaces the ordering is deterministic: square
    /// modes sort by (p^2 + q^2, q, p); disk modes by (lambda, n, cos before
    /// sin, radial index).
    pub fn build_with_order(shape: &HoleShape, mode_count: usize, order: usize) -> Result<Self> {
        if mode_count < 1 {
            return Err(SlabError::Config("mode_count must be at least 1".into()));
        }
        match shape {
            HoleShape::UnitSquare => Self::build_square(mode_count, order),
            HoleShape::UnitDisk => Self::build_disk(mode_count, order),
            HoleShape::Custom(data) => Self::from_custom(data, mode_count),
        }
    }

    fn build_square(mode_count: usize, order: usize) -> Result<Self> {
        let pi2 = std::f64::consts::PI * std::f64::consts::PI;
        // Enumerate (p, q) with p^2 + q^2 small enough to cover mode_count+1.
        let mut cand: Vec<(u64, u32, u32)> = Vec::new();
        let mut pmax = 2u32;
        loop {
            cand.clear();
            for p in 0..=pmax {
                for q in 0..=pmax {
                    cand.push(((p * p + q * q) as u64, q, p));
                }
            }
            cand.sort();
            // Enough candidates strictly inside the enumerated square?
            if cand.len() > mode_count && cand[mode_count].0 < (pmax * pmax) as u64 {
                break;
            }
            pmax += 2;
        }
        cand.truncate(mode_count + 1);
        let modes: Vec<Mode> = cand
            .iter()
            .map(|&(_, q, p)| Mode::SquareProd { p, q })
            .collect();
        let eigenvalues: Vec<f64> = cand.iter().map(|&(s, _, _)| pi2 * s as f64).collect();
        let quad = QuadratureRule::unit_square(order);
        Ok(Self::finish(HoleShape::UnitSquare, eigenvalues, modes, quad))
    }

    fn build_disk(mode_count: usize, order: usize) -> Result<Self> {
        let pi = std::f64::consts::PI;
        let quad = QuadratureRule::unit_disk(order);
        // Gather candidate (alpha, n, sine) triples until the lowest
        // mode_count eigenvalues are certainly covered.
        let per_n = mode_count + 1;
        let mut cand: Vec<(f64, u32, u8, u32)> = Vec::new(); // (lambda, n, sine, radial index)
        let mut n = 0u32;
        loop {
            let roots = bessel_prime_roots(n, per_n)?;
            let first_lambda = pi * roots[0] * roots[0];
            for (s, &alpha) in roots.iter().enumerate() {
                let lambda = pi * alpha * alpha;
                if n == 0 {
                    cand.push((lambda, n, 0, s as u32));
                } else {
                    cand.push((lambda, n, 0, s as u32));
                    cand.push((lambda, n, 1, s as u32));
                }
            }
            // The first root of J_n' grows with n; once it exceeds every
            // eigenvalue we still need, higher n cannot contribute.
            cand.sort_by(|a, b| {
                (a.0, a.1, a.2, a.3)
                    .partial_cmp(&(b.0, b.1, b.2, b.3))
                    .unwrap()
            });
            if cand.len() > mode_count && first_lambda > cand[mode_count - 1].0 && n >= 1 {
                break;
            }
            n += 1;
        }
        cand.truncate(mode_count);

        let mut eigenvalues = vec![0.0];
        let mut modes = vec![Mode::Disk {
            n: 0,
            alpha: 0.0,
            sine: false,
            norm: 1.0,
        }];
        for &(lambda, n, sine, s) in &cand {
            let alpha = (lambda / pi).sqrt();
            let _ = s;
            // Normalize numerically against the disk rule (the closed-form
            // constant is easy for the square but the paper leaves the disk
            // modes unnormalized).
            let raw = |p: [f64; 2]| {
                let r = p[0].hypot(p[1]);
                let theta = p[1].atan2(p[0]);
                let radial = bessel_j(n, pi.sqrt() * alpha * r);
                let ang = if sine == 1 {
                    (n as f64 * theta).sin()
                } else {
                    (n as f64 * theta).cos()
                };
                radial * ang
            };
            let norm2: f64 = quad
                .nodes
                .iter()
                .zip(&quad.weights)
                .map(|(&pt, &w)| {
                    let v = raw(pt);
                    w * v * v
                })
                .sum();
            eigenvalues.push(lambda);
            modes.push(Mode::Disk {
                n,
                alpha,
                sine: sine == 1,
                norm: 1.0 / norm2.sqrt(),
            });
        }
        Ok(Self::finish(HoleShape::UnitDisk, eigenvalues, modes, quad))
    }

    fn from_custom(data: &CustomShapeData, mode_count: usize) -> Result<Self> {
        if mode_count + 1 > data.eigenvalues.len() {
            return Err(SlabError::Config(format!(
                "custom shape provides {} eigenpairs, {} requested",
                data.eigenvalues.len(),
                mode_count + 1
            )));
        }
        let eigenvalues = data.eigenvalues[..=mode_count].to_vec();
        let modes: Vec<Mode> = (0..=mode_count).map(|column| Mode::Tabulated { column }).collect();
        let quad = data.quadrature.clone();
        let n = quad.len();
        let mode_values = DMatrix::from_fn(n, mode_count + 1, |i, m| data.mode_values[i][m]);
        Ok(EigenBasis {
            shape: HoleShape::Custom(data.clone()),
            eigenvalues,
            modes,
            quad,
            mode_values,
            max_square_index: 0,
        })
    }

    fn finish(shape: HoleShape, eigenvalues: Vec<f64>, modes: Vec<Mode>, quad: QuadratureRule) -> Self {
        let n = quad.len();
        let m1 = modes.len();
        let max_square_index = modes
            .iter()
            .map(|m| match m {
                Mode::SquareProd { p, q } => (*p).max(*q),
                _ => 0,
            })
            .max()
            .unwrap_or(0);
        assert!(
            (max_square_index as usize) < 32,
            "square truncation beyond the supported factor cache"
        );
        let mut basis = EigenBasis {
            shape,
            eigenvalues,
            modes,
            quad,
            mode_values: DMatrix::zeros(0, 0),
            max_square_index,
        };
        let mut values = DMatrix::zeros(n, m1);
        for (i, &pt) in basis.quad.nodes.iter().enumerate() {
            for m in 0..m1 {
                values[(i, m)] = basis.evaluate_analytic(m, pt);
            }
        }
        basis.mode_values = values;
        basis
    }

    /// Number of non-constant modes M (the basis holds M + 1 eigenpairs).
    pub fn mode_count(&self) -> usize {
        self.eigenvalues.len() - 1
    }

    pub fn shape(&self) -> &HoleShape {
        &self.shape
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvalue(&self, m: usize) -> f64 {
        self.eigenvalues[m]
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.quad
    }

    /// phi_m at the quadrature nodes (nodes x modes).
    pub fn mode_values(&self) -> &DMatrix<f64> {
        &self.mode_values
    }

    fn evaluate_analytic(&self, m: usize, p: [f64; 2]) -> f64 {
        match &self.modes[m] {
            Mode::SquareProd { p: ip, q } => square_factor(*ip, p[0]) * square_factor(*q, p[1]),
            Mode::Disk { n, alpha, sine, norm } => {
                if *alpha == 0.0 {
                    return 1.0;
                }
                let r = p[0].hypot(p[1]);
                let theta = p[1].atan2(p[0]);
                let radial = bessel_j(*n, std::f64::consts::PI.sqrt() * alpha * r);
                let ang = if *sine {
                    (*n as f64 * theta).sin()
                } else {
                    (*n as f64 * theta).cos()
                };
                norm * radial * ang
            }
            Mode::Tabulated { .. } => unreachable!("tabulated modes are looked up by node"),
        }
    }

    /// Evaluate every mode at a point, writing into `out` (length M + 1).
    ///
    /// Only available for analytic shapes; the singular quadrature relies on
    /// it to sample modes at arbitrary interior points.
    pub fn evaluate_all_into(&self, p: [f64; 2], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.eigenvalues.len());
        match &self.shape {
            HoleShape::UnitSquare => {
                const CAP: usize = 32;
                let pmax = self.max_square_index as usize;
                debug_assert!(pmax < CAP);
                let mut fx = [0.0; CAP];
                let mut fy = [0.0; CAP];
                for i in 0..=pmax {
                    fx[i] = square_factor(i as u32, p[0]);
                    fy[i] = square_factor(i as u32, p[1]);
                }
                for (slot, mode) in out.iter_mut().zip(&self.modes) {
                    if let Mode::SquareProd { p: ip, q } = mode {
                        *slot = fx[*ip as usize] * fy[*q as usize];
                    }
                }
            }
            HoleShape::UnitDisk => {
                let r = p[0].hypot(p[1]);
                let theta = p[1].atan2(p[0]);
                let root_pi = std::f64::consts::PI.sqrt();
                for (slot, mode) in out.iter_mut().zip(&self.modes) {
                    if let Mode::Disk { n, alpha, sine, norm } = mode {
                        if *alpha == 0.0 {
                            *slot = 1.0;
                        } else {
                            let radial = bessel_j(*n, root_pi * alpha * r);
                            let ang = if *sine {
                                (*n as f64 * theta).sin()
                            } else {
                                (*n as f64 * theta).cos()
                            };
                            *slot = norm * radial * ang;
                        }
                    }
                }
            }
            HoleShape::Custom(_) => {
                panic!("custom shapes do not support pointwise evaluation off their nodes")
            }
        }
    }

    /// Evaluate phi_m at a point of G.
    ///
    /// Analytic shapes evaluate anywhere in G; custom shapes only at their
    /// own quadrature nodes.
    pub fn evaluate(&self, m: usize, p: [f64; 2]) -> Result<f64> {
        if !self.shape.contains(p) {
            return Err(SlabError::Domain {
                point: p.to_vec(),
                what: "outside the generating domain G".into(),
            });
        }
        match &self.modes[m] {
            Mode::Tabulated { column } => {
                let idx = self
                    .quad
                    .nodes
                    .iter()
                    .position(|n| (n[0] - p[0]).abs() < 1e-12 && (n[1] - p[1]).abs() < 1e-12)
                    .ok_or_else(|| SlabError::Domain {
                        point: p.to_vec(),
                        what: "custom shapes evaluate only at their quadrature nodes".into(),
                    })?;
                Ok(self.mode_values[(idx, *column)])
            }
            _ => Ok(self.evaluate_analytic(m, p)),
        }
    }

    /// Symmetry descriptor of one mode, used by the singular quadrature to
    /// fold the outer integral over the shape's symmetry group.
    pub fn mode_symmetry(&self, m: usize) -> ModeSymmetry {
        match &self.modes[m] {
            Mode::SquareProd { p, q } => ModeSymmetry::Square { p: *p, q: *q },
            Mode::Disk { n, alpha, sine, .. } => ModeSymmetry::Disk {
                n: *n,
                alpha_bits: alpha.to_bits(),
                sine: *sine,
            },
            Mode::Tabulated { .. } => ModeSymmetry::None,
        }
    }

    /// Discrete Gram matrix of the modes under the quadrature rule.
    pub fn gram(&self) -> DMatrix<f64> {
        let n = self.quad.len();
        let m1 = self.eigenvalues.len();
        let mut weighted = self.mode_values.clone();
        for i in 0..n {
            let w = self.quad.weights[i];
            for m in 0..m1 {
                weighted[(i, m)] *= w;
            }
        }
        self.mode_values.transpose() * weighted
    }

    /// Max-norm deviation of the Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let g = self.gram();
        let m1 = self.eigenvalues.len();
        let mut defect: f64 = 0.0;
        for i in 0..m1 {
            for j in 0..m1 {
                let target = if i == j { 1.0 } else { 0.0 };
                defect = defect.max((g[(i, j)] - target).abs());
            }
        }
        defect
    }
}

/// Scaled mode h^-1 phi_m((x - center)/h) on the aperture center + h G.
pub fn scaled_mode(
    basis: &EigenBasis,
    m: usize,
    h: f64,
    center: [f64; 2],
    aperture_point: [f64; 2],
) -> Result<f64> {
    if h <= 0.0 {
        return Err(SlabError::Config("scale h must be positive".into()));
    }
    let local = [
        (aperture_point[0] - center[0]) / h,
        (aperture_point[1] - center[1]) / h,
    ];
    if !basis.shape().contains(local) {
        return Err(SlabError::Domain {
            point: aperture_point.to_vec(),
            what: "outside the aperture".into(),
        });
    }
    Ok(basis.evaluate(m, local)? / h)
}
