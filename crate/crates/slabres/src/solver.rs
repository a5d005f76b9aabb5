//! Resonance location in the lower half-plane: Fabry-Perot seeding, damped
//! Newton on the reduced determinant with deflation, argument-principle
//! counting and Q-factors.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::asymptotics;
use crate::error::{Result, SlabError};
use crate::gram::S0Options;
use crate::matching::{Assembly, Parity, SlabConfig};

pub const NEWTON_MAX_ITER: usize = 50;
pub const NEWTON_STEP_TOL: f64 = 1e-12;
pub const RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Direct,
    Asymptotic,
}

/// A located resonance frequency.
#[derive(Debug, Clone, Serialize)]
pub struct Resonance {
    pub k: Complex64,
    pub parity: Parity,
    /// Fabry-Perot integer: k * l is within sqrt(h) of fp_index * pi.
    pub fp_index: usize,
    /// Branch label 1..N (holes split the degenerate resonance into N).
    pub branch: usize,
    /// Q = -Re(k) / (2 Im(k)).
    pub q: f64,
    /// |det(reduced)| at k, scaled by the off-resonance determinant scale.
    pub residual: f64,
    pub provenance: Provenance,
    pub truncation: usize,
}

/// Q = -Re(k)/(2 Im(k)); requires Im(k) < 0.
pub fn quality_factor(k: Complex64) -> Result<f64> {
    if k.im >= 0.0 {
        return Err(SlabError::Domain {
            point: vec![k.re, k.im],
            what: "quality factor needs Im(k) < 0".into(),
        });
    }
    Ok(-k.re / (2.0 * k.im))
}

/// A starting point for the Newton polish.
#[derive(Debug, Clone, Serialize)]
pub struct Seed {
    /// Per-parity mode index m (1-based).
    pub m: usize,
    pub parity: Parity,
    pub fp_index: usize,
    /// Branch 1..N.
    pub branch: usize,
    pub k: Complex64,
}

/// Seeds for every (m, parity, branch): asymptotic predictions when the
/// regime guard allows them, otherwise the bare Fabry-Perot guess
/// k = fp pi / l - i (fp pi h)^2 / (pi l). Returns the seeds plus notices for
/// any (m, parity) skipped because the seed left the search box.
pub fn fabry_perot_seeds(
    config: &SlabConfig,
    m_range: std::ops::RangeInclusive<usize>,
    parities: &[Parity],
    constants: Option<&[asymptotics::ShapeConstants]>,
) -> Result<(Vec<Seed>, Vec<String>)> {
    config.validate()?;
    let l = config.thickness;
    let h = config.h;
    let n = config.hole_count();
    let mut seeds = Vec::new();
    let mut notices = Vec::new();
    for &parity in parities {
        for m in m_range.clone() {
            if m < 1 {
                return Err(SlabError::Config("mode index m starts at 1".into()));
            }
            let fp = parity.fp_index(m);
            if fp as f64 * h >= 0.2 {
                notices.push(format!(
                    "seed (m={m}, {parity}): fp h = {:.3} >= 0.2, outside the regime guard",
                    fp as f64 * h
                ));
                continue;
            }
            let centers: Vec<[f64; 2]> = config.holes.iter().map(|(c, _)| *c).collect();
            let predictions: Vec<Complex64> = match constants {
                Some(cs) if cs.len() == n => {
                    match asymptotics::multi_hole_asymptotic(cs, &centers, l, h, fp) {
                        Ok(pred) => pred.values,
                        Err(_) => fallback_seeds(fp, l, h, n),
                    }
                }
                _ => fallback_seeds(fp, l, h, n),
            };
            for (b, &k) in predictions.iter().enumerate() {
                if config.search_box.contains(k) {
                    seeds.push(Seed {
                        m,
                        parity,
                        fp_index: fp,
                        branch: b + 1,
                        k,
                    });
                } else {
                    notices.push(format!(
                        "seed (m={m}, {parity}, branch {}): k = {k} outside the search box, skipped",
                        b + 1
                    ));
                }
            }
        }
    }
    Ok((seeds, notices))
}

fn fallback_seeds(fp: usize, l: f64, h: f64, n: usize) -> Vec<Complex64> {
    let re = fp as f64 * std::f64::consts::PI / l;
    let im = -(fp as f64 * std::f64::consts::PI * h).powi(2) / (std::f64::consts::PI * l);
    vec![Complex64::new(re, im); n]
}

/// Scale for the residual: the off-resonance magnitude of det(reduced).
fn det_scale(assembly: &Assembly, k: Complex64) -> f64 {
    let l = assembly.config.thickness;
    let e = (Complex64::i() * k * l).exp();
    let per_row = (e + 1.0).norm().max((e - 1.0).norm()).max(1.0);
    per_row.powi(assembly.config.hole_count() as i32)
}

struct NewtonOutcome {
    k: Complex64,
    residual: f64,
}

/// Damped Newton on f, with the derivative by central differences at step
/// 1e-7 |k|.
fn newton_polish<F: FnMut(Complex64) -> Result<Complex64>>(
    mut f: F,
    seed: Complex64,
    scale: f64,
) -> Result<NewtonOutcome> {
    let mut k = seed;
    let mut trajectory = vec![k];
    let mut fk = f(k)?;
    for _ in 0..NEWTON_MAX_ITER {
        let delta = 1e-7 * k.norm().max(1e-12);
        let fp = (f(k + delta)? - f(k - delta)?) / (2.0 * delta);
        if fp.norm() == 0.0 {
            return Err(SlabError::RootNotFound {
                iterations: trajectory.len(),
                trajectory,
            });
        }
        let step = fk / fp;
        // damping: halve until |f| decreases
        let mut gamma = 1.0;
        let mut accepted = None;
        for _ in 0..7 {
            let cand = k - gamma * step;
            let fc = f(cand)?;
            if fc.norm() < fk.norm() {
                accepted = Some((cand, fc));
                break;
            }
            gamma *= 0.5;
        }
        let (k_new, f_new) = match accepted {
            Some(pair) => pair,
            None => {
                let cand = k - step;
                let fc = f(cand)?;
                (cand, fc)
            }
        };
        let dk = (k_new - k).norm();
        k = k_new;
        fk = f_new;
        trajectory.push(k);
        if dk < NEWTON_STEP_TOL * k.norm() && fk.norm() / scale < RESIDUAL_TOL {
            return Ok(NewtonOutcome {
                k,
                residual: fk.norm() / scale,
            });
        }
    }
    Err(SlabError::RootNotFound {
        iterations: NEWTON_MAX_ITER,
        trajectory,
    })
}

/// Polish one seed into a resonance and enforce the resonance invariants.
pub fn find_resonance(
    assembly: &Assembly,
    seed: Complex64,
    parity: Parity,
    fp_index: usize,
) -> Result<Resonance> {
    find_resonance_deflated(assembly, seed, parity, fp_index, &[])
}

/// Same, but with already-located roots divided out of the determinant so
/// Newton converges to the next branch.
pub fn find_resonance_deflated(
    assembly: &Assembly,
    seed: Complex64,
    parity: Parity,
    fp_index: usize,
    known_roots: &[Complex64],
) -> Result<Resonance> {
    let l = assembly.config.thickness;
    let h = assembly.config.h;
    let scale = det_scale(assembly, seed);
    let outcome = newton_polish(
        |k| {
            let mut v = assembly.det_reduced(k, parity)?;
            for &r in known_roots {
                v /= k - r;
            }
            Ok(v)
        },
        seed,
        if known_roots.is_empty() { scale } else { scale * 1e-3 },
    )?;
    let k = outcome.k;
    let _ = outcome.residual;
    if k.im >= 0.0 {
        return Err(SlabError::SpuriousRoot { k });
    }
    // Rouche disk invariant |k l - fp pi| <= sqrt(h)
    let dist = (k * l - Complex64::new(fp_index as f64 * std::f64::consts::PI, 0.0)).norm();
    if dist > h.sqrt() {
        return Err(SlabError::OutOfRegime(format!(
            "root k = {k} drifted out of the Rouche disk: |kl - {fp_index} pi| = {dist:.3e} > sqrt(h) = {:.3e}",
            h.sqrt()
        )));
    }
    // depth guard: Im(kl) within 10x of the asymptotic width
    let depth = 10.0 * (fp_index as f64 * std::f64::consts::PI * h / l).powi(2);
    if (k * l).im < -depth.max(1e-12) {
        return Err(SlabError::OutOfRegime(format!(
            "root k = {k} deeper than the width guard {depth:.3e}"
        )));
    }
    // residual of the undeflated determinant
    let residual = assembly.det_reduced(k, parity)?.norm() / det_scale(assembly, k);
    Ok(Resonance {
        k,
        parity,
        fp_index,
        branch: known_roots.len() + 1,
        q: quality_factor(k)?,
        residual,
        provenance: Provenance::Direct,
        truncation: assembly.config.truncation,
    })
}

/// Winding number of det(reduced) around the circle |k - center| = radius.
///
/// The node count doubles until every phase increment is below pi/4; if the
/// contour runs too close to a root (min |det| below 1e-3 of the max) the
/// radius is perturbed by +-10% and the count retried.
pub fn count_roots_in_disk(
    assembly: &Assembly,
    center: Complex64,
    radius: f64,
    parity: Parity,
) -> Result<usize> {
    let factors = [1.0, 1.1, 0.9, 1.21, 0.81];
    let mut last_ratio = f64::INFINITY;
    for fac in factors.iter() {
        let r = radius * fac;
        match winding_number(assembly, center, r, parity)? {
            WindingOutcome::Count(c) => return Ok(c),
            WindingOutcome::NearRoot(ratio) => {
                last_ratio = ratio;
            }
        }
    }
    Err(SlabError::ContourNearRoot {
        min_ratio: last_ratio,
        retries: factors.len() - 1,
    })
}

enum WindingOutcome {
    Count(usize),
    NearRoot(f64),
}

fn winding_number(
    assembly: &Assembly,
    center: Complex64,
    radius: f64,
    parity: Parity,
) -> Result<WindingOutcome> {
    let mut n = 16usize;
    loop {
        let mut values = Vec::with_capacity(n);
        for t in 0..n {
            let angle = 2.0 * std::f64::consts::PI * t as f64 / n as f64;
            let k = center + radius * Complex64::new(angle.cos(), angle.sin());
            values.push(assembly.det_reduced(k, parity)?);
        }
        let max = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let min = values.iter().map(|v| v.norm()).fold(f64::INFINITY, f64::min);
        if min < 1e-3 * max {
            return Ok(WindingOutcome::NearRoot(min / max));
        }
        let mut total = 0.0;
        let mut max_step: f64 = 0.0;
        for t in 0..n {
            let ratio = values[(t + 1) % n] / values[t];
            let darg = ratio.arg();
            max_step = max_step.max(darg.abs());
            total += darg;
        }
        if max_step < std::f64::consts::FRAC_PI_4 {
            let winding = total / (2.0 * std::f64::consts::PI);
            let count = winding.round();
            if (winding - count).abs() > 0.1 {
                return Ok(WindingOutcome::NearRoot(min / max));
            }
            if count < 0.0 {
                return Err(SlabError::Config(format!(
                    "negative winding number {count} (no poles expected)"
                )));
            }
            return Ok(WindingOutcome::Count(count as usize));
        }
        n *= 2;
        if n > 2048 {
            return Ok(WindingOutcome::NearRoot(min / max));
        }
    }
}

/// All resonances of one parity near fp_index * pi / l: the argument
/// principle fixes the count, asymptotic branch seeds start the Newton
/// polish and deflation separates coincident branches.
pub fn find_resonances_near(
    assembly: &Assembly,
    parity: Parity,
    m: usize,
    constants: Option<&[asymptotics::ShapeConstants]>,
) -> Result<Vec<Resonance>> {
    let fp = parity.fp_index(m);
    let l = assembly.config.thickness;
    let h = assembly.config.h;
    let center = Complex64::new(fp as f64 * std::f64::consts::PI / l, 0.0);
    let radius = h.sqrt() / l;
    let expected = count_roots_in_disk(assembly, center, radius, parity)?;
    if expected == 0 {
        return Ok(Vec::new());
    }
    let centers: Vec<[f64; 2]> = assembly.config.holes.iter().map(|(c, _)| *c).collect();
    let mut seeds: Vec<Complex64> = match constants {
        Some(cs) if cs.len() == assembly.config.hole_count() => {
            match asymptotics::multi_hole_asymptotic(cs, &centers, l, h, fp) {
                Ok(pred) => pred.values,
                Err(_) => fallback_seeds(fp, l, h, assembly.config.hole_count()),
            }
        }
        _ => fallback_seeds(fp, l, h, assembly.config.hole_count()),
    };
    seeds.truncate(expected);
    while seeds.len() < expected {
        seeds.push(center + Complex64::new(0.0, -0.1 * radius));
    }

    let mut found: Vec<Resonance> = Vec::new();
    for (idx, &seed) in seeds.iter().enumerate() {
        let known: Vec<Complex64> = found.iter().map(|r| r.k).collect();
        let mut attempt_seed = seed;
        let mut result = None;
        for jiggle in 0..4 {
            match find_resonance_deflated(assembly, attempt_seed, parity, fp, &known) {
                Ok(res) => {
                    // reject duplicates of already-found roots
                    if found
                        .iter()
                        .any(|f| (f.k - res.k).norm() < 1e-9 * res.k.norm())
                    {
                        attempt_seed =
                            seed + radius * 0.05 * Complex64::new(jiggle as f64 + 1.0, -1.0);
                        continue;
                    }
                    result = Some(res);
                    break;
                }
                Err(_) if jiggle + 1 < 4 => {
                    attempt_seed =
                        seed + radius * 0.05 * Complex64::new(-(jiggle as f64) - 1.0, -0.5);
                }
                Err(e) => return Err(e),
            }
        }
        let mut res = result.ok_or_else(|| SlabError::RootNotFound {
            iterations: NEWTON_MAX_ITER,
            trajectory: vec![seed],
        })?;
        res.branch = idx + 1;
        found.push(res);
    }
    Ok(found)
}

/// One sweep row: direct vs asymptotic resonance at a given (h, m, parity).
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub h: f64,
    pub fp_index: usize,
    pub parity: Parity,
    pub branch: usize,
    pub k_direct: Complex64,
    pub k_asymptotic: Complex64,
    pub deviation: f64,
    pub q_direct: f64,
    /// Q 2 m h^2 (tends to 1 for a single hole).
    pub q_scaled: f64,
    pub runtime_s: f64,
    /// Fitted decay order of the deviation against the previous h of the
    /// same (m, parity) series.
    pub convergence_order: Option<f64>,
}

/// Direct-vs-asymptotic sweep over hole scales.
pub fn resonance_sweep(
    template: &SlabConfig,
    h_values: &[f64],
    m_range: std::ops::RangeInclusive<usize>,
    parities: &[Parity],
    opts: &S0Options,
) -> Result<Vec<SweepRow>> {
    let mut rows: Vec<SweepRow> = Vec::new();
    for &parity in parities {
        for m in m_range.clone() {
            let mut prev: Option<(f64, f64)> = None; // (h, deviation)
            for &h in h_values {
                let mut config = template.clone();
                config.h = h;
                let assembly = Assembly::new(config, opts)?;
                let constants = asymptotics::shape_constants_for(&assembly, opts)?;
                let start = std::time::Instant::now();
                let found = find_resonances_near(&assembly, parity, m, Some(&constants))?;
                let runtime = start.elapsed().as_secs_f64();
                let fp = parity.fp_index(m);
                let centers: Vec<[f64; 2]> =
                    assembly.config.holes.iter().map(|(c, _)| *c).collect();
                let asym = asymptotics::multi_hole_asymptotic(
                    &constants,
                    &centers,
                    assembly.config.thickness,
                    h,
                    fp,
                )?;
                for res in &found {
                    let k_asym = nearest(&asym.values, res.k);
                    let deviation = (res.k - k_asym).norm();
                    let order = prev.map(|(ph, pd)| (pd / deviation).log2() / (ph / h).log2());
                    rows.push(SweepRow {
                        h,
                        fp_index: fp,
                        parity,
                        branch: res.branch,
                        k_direct: res.k,
                        k_asymptotic: k_asym,
                        deviation,
                        q_direct: res.q,
                        q_scaled: res.q * 2.0 * fp as f64 * h * h,
                        runtime_s: runtime,
                        convergence_order: order,
                    });
                }
                if let Some(first) = found.first() {
                    let k_asym = nearest(&asym.values, first.k);
                    prev = Some((h, (first.k - k_asym).norm()));
                }
            }
        }
    }
    Ok(rows)
}

fn nearest(candidates: &[Complex64], target: Complex64) -> Complex64 {
    candidates
        .iter()
        .copied()
        .min_by(|a, b| {
            (a - target)
                .norm()
                .partial_cmp(&(b - target).norm())
                .unwrap()
        })
        .unwrap_or(target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::HoleShape;
    use crate::gram::WavenumberBox;
    use approx::assert_abs_diff_eq;

    const PI: f64 = std::f64::consts::PI;

    fn assembly(h: f64, m: usize) -> Assembly {
        let config = SlabConfig {
            thickness: 1.0,
            h,
            holes: vec![([0.0, 0.0], HoleShape::UnitSquare)],
            truncation: m,
            search_box: WavenumberBox::default(),
        };
        Assembly::new(config, &S0Options::default()).unwrap()
    }

    #[test]
    fn quality_factor_definition() {
        let q = quality_factor(Complex64::new(1.0, -1.0)).unwrap();
        assert_abs_diff_eq!(q, 0.5, epsilon = 1e-15);
        assert!(quality_factor(Complex64::new(1.0, 0.0)).is_err());
        let q2 = quality_factor(Complex64::new(PI, -PI * PI * 1e-4)).unwrap();
        assert_abs_diff_eq!(q2, 1.0 / (2.0 * PI * 1e-4), epsilon = 1e-6);
    }

    #[test]
    fn seeds_land_near_fabry_perot_points() {
        let config = SlabConfig {
            thickness: 1.0,
            h: 0.01,
            holes: vec![([0.0, 0.0], HoleShape::UnitSquare)],
            truncation: 4,
            search_box: WavenumberBox::default(),
        };
        let (seeds, notices) =
            fabry_perot_seeds(&config, 1..=1, &[Parity::Even, Parity::Odd], None).unwrap();
        assert!(notices.is_empty());
        assert_eq!(seeds.len(), 2);
        let even = seeds.iter().find(|s| s.parity == Parity::Even).unwrap();
        let odd = seeds.iter().find(|s| s.parity == Parity::Odd).unwrap();
        assert_abs_diff_eq!(even.k.re, PI, epsilon = 1e-10);
        assert_abs_diff_eq!(odd.k.re, 2.0 * PI, epsilon = 1e-10);
        assert!(even.k.im < 0.0 && odd.k.im < 0.0);

        // thickness scaling: kl = pi
        let config2 = SlabConfig {
            thickness: 2.0,
            ..config
        };
        let (seeds2, _) = fabry_perot_seeds(&config2, 1..=1, &[Parity::Even], None).unwrap();
        assert_abs_diff_eq!(seeds2[0].k.re, PI / 2.0, epsilon = 1e-10);
    }

    #[test]
    fn newton_finds_the_first_even_resonance() {
        let asm = assembly(0.01, 8);
        let seed = Complex64::new(PI, -(PI * 0.01f64).powi(2) / PI);
        let res = find_resonance(&asm, seed, Parity::Even, 1).unwrap();
        assert!(res.k.im < 0.0);
        assert!(res.residual < RESIDUAL_TOL);
        assert_abs_diff_eq!(res.k.re, PI, epsilon = 0.1);
        // Im(kl) ~ -(pi h)^2/pi at leading order
        let width = (PI * 0.01f64).powi(2) / PI;
        assert!((res.k.im + width).abs() < 0.5 * width, "Im = {}", res.k.im);
        assert!(res.q > 0.0);
    }

    #[test]
    fn disk_count_is_one_per_parity_and_zero_off_resonance() {
        let asm = assembly(0.01, 6);
        let c_even =
            count_roots_in_disk(&asm, Complex64::new(PI, 0.0), 0.01f64.sqrt(), Parity::Even)
                .unwrap();
        assert_eq!(c_even, 1);
        let c_off =
            count_roots_in_disk(&asm, Complex64::new(1.5 * PI, 0.0), 0.25, Parity::Even).unwrap();
        assert_eq!(c_off, 0);
    }

    #[test]
    fn truncation_convergence_of_the_root_is_algebraic() {
        // The aperture flux has inverse-sqrt edge behavior, so the spectral
        // truncation converges algebraically (~1/M) and shell-wise (only
        // fully symmetric modes couple); assert the doubling shifts decay
        // across well-separated truncations and stay small.
        let seed = Complex64::new(PI, -(PI * 0.01f64).powi(2) / PI);
        let ks: Vec<Complex64> = [10usize, 20, 40]
            .iter()
            .map(|&m| {
                find_resonance(&assembly(0.01, m), seed, Parity::Even, 1)
                    .unwrap()
                    .k
            })
            .collect();
        let d1 = (ks[1] - ks[0]).norm();
        let d2 = (ks[2] - ks[1]).norm();
        assert!(d2 < d1, "shifts {d1:.3e} -> {d2:.3e} not decreasing");
        assert!(d2 < 5e-4 * ks[2].norm(), "shift {d2:.3e} too large");
    }

    #[test]
    fn roots_outside_the_rouche_disk_are_rejected() {
        let asm = assembly(0.01, 4);
        // Seed near the even resonance at pi but claim the fp index 2 pi:
        // Newton converges to the pi root, which violates |kl - 2 pi| <=
        // sqrt(h) and must be rejected.
        let seed = Complex64::new(PI, -(PI * 0.01f64).powi(2) / PI);
        let bad = find_resonance(&asm, seed, Parity::Even, 2);
        match bad {
            Err(SlabError::OutOfRegime(_)) | Err(SlabError::RootNotFound { .. }) => {}
            Ok(res) => panic!("expected rejection, got root {:?}", res.k),
            Err(e) => panic!("unexpected error {e}"),
        }
        // Any accepted resonance sits strictly below the real axis.
        let good = find_resonance(&asm, seed, Parity::Even, 1).unwrap();
        assert!(good.k.im < 0.0);
    }
}
