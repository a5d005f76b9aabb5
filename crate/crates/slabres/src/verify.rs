//! The `verify` driver: the cross-module invariant suite behind acceptance
//! testing and the CLI subcommand of the same name.

use num_complex::Complex64;
use serde::Serialize;

use crate::asymptotics;
use crate::config::RunConfig;
use crate::error::Result;
use crate::gram::S0Options;
use crate::linalg;
use crate::matching::{Assembly, Parity, SlabConfig};
use crate::solver;

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

fn check(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name: name.into(),
        passed,
        detail,
    }
}

/// Run the full invariant suite on a configuration. Checks run in dependency
/// order; independent checks still run after a failure so the report stays
/// complete.
pub fn run(config: &RunConfig) -> Result<VerifyReport> {
    let mut slab = config.to_slab_config()?;
    slab.search_box = config.search_box.unwrap_or_default();
    let opts = config.s0_options();
    let mut checks = Vec::new();

    // Bases first: orthonormality must be reportable even when the singular
    // quadrature later refuses to converge at a coarse order.
    let order = config
        .quad_order
        .unwrap_or(crate::geometry::DEFAULT_BASIS_ORDER);
    let mut bases = Vec::new();
    for (_, shape) in &slab.holes {
        match crate::geometry::EigenBasis::build_with_order(shape, slab.truncation, order) {
            Ok(b) => bases.push(std::sync::Arc::new(b)),
            Err(e) => {
                checks.push(check("eigenbasis-build", false, format!("{e}")));
                return Ok(VerifyReport {
                    passed: false,
                    checks,
                });
            }
        }
    }
    {
        let mut worst: f64 = 0.0;
        for basis in &bases {
            worst = worst.max(basis.orthonormality_defect());
        }
        checks.push(check(
            "orthonormality",
            worst < crate::geometry::ORTHONORMALITY_TOL,
            format!("max Gram defect {worst:.3e} (tolerance 1e-8)"),
        ));
    }

    let assembly = match Assembly::with_bases(slab, bases, &opts) {
        Ok(a) => a,
        Err(e) => {
            checks.push(check("gram-assembly", false, format!("{e}")));
            return Ok(VerifyReport {
                passed: false,
                checks,
            });
        }
    };

    checks.push(s0_spd(&assembly));
    checks.push(d_symmetry(&assembly));
    if assembly.config.hole_count() >= 2 {
        checks.push(cross_reciprocity(&assembly));
    }
    checks.push(alpha_positivity(&assembly));

    // Solver-level invariants run on the first even mode.
    match solver_checks(&assembly, &opts) {
        Ok(mut more) => checks.append(&mut more),
        Err(e) => checks.push(check("resonance-solve", false, format!("{e}"))),
    }

    checks.push(determinism(config));

    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport { checks, passed })
}

fn s0_spd(assembly: &Assembly) -> CheckResult {
    let mut min_eig = f64::INFINITY;
    let mut sym = true;
    for g in &assembly.grams.singles {
        let s0 = g.s0();
        sym &= s0 == &s0.transpose();
        let eig = s0.clone().symmetric_eigen();
        min_eig = min_eig.min(eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min));
    }
    check(
        "s0-symmetric-positive-definite",
        sym && min_eig > 0.0,
        format!("symmetric: {sym}, smallest eigenvalue {min_eig:.3e}"),
    )
}

fn d_symmetry(assembly: &Assembly) -> CheckResult {
    let eps = Complex64::new(0.05, -0.008);
    let mut worst: f64 = 0.0;
    for g in &assembly.grams.singles {
        match g.d(eps) {
            Ok(d) => {
                for a in 0..d.nrows() {
                    for b in (a + 1)..d.ncols() {
                        worst = worst.max((d[(a, b)] - d[(b, a)]).norm());
                    }
                }
            }
            Err(e) => return check("d-complex-symmetric", false, format!("{e}")),
        }
    }
    check(
        "d-complex-symmetric",
        worst < 1e-12,
        format!("max asymmetry {worst:.3e}"),
    )
}

fn cross_reciprocity(assembly: &Assembly) -> CheckResult {
    let k = Complex64::new(3.0, -0.02);
    let d12 = assembly.grams.cross_d(0, 1, k);
    let d21 = assembly.grams.cross_d(1, 0, k);
    let mut worst: f64 = 0.0;
    for a in 0..d12.nrows() {
        for b in 0..d12.ncols() {
            worst = worst.max((d12[(a, b)] - d21[(b, a)]).norm());
        }
    }
    check(
        "cross-gram-reciprocity",
        worst < 1e-12,
        format!("max |d12 - d21^T| = {worst:.3e}"),
    )
}

fn alpha_positivity(assembly: &Assembly) -> CheckResult {
    let mut details = Vec::new();
    let mut ok = true;
    for (i, g) in assembly.grams.singles.iter().enumerate() {
        let m = g.basis().mode_count();
        match asymptotics::alpha_constant(g, m) {
            Ok(c) => {
                ok &= c.alpha >= 0.0;
                // positivity of the inverse quadratic form on deterministic
                // pseudo-random vectors
                let mut state: u64 = 0x243f6a8885a308d3 ^ (i as u64);
                for _ in 0..5 {
                    let x: Vec<f64> = (0..m)
                        .map(|_| {
                            state ^= state << 13;
                            state ^= state >> 7;
                            state ^= state << 17;
                            (state % 2000) as f64 / 1000.0 - 1.0
                        })
                        .collect();
                    match asymptotics::inverse_quadratic_form(g, m, &x) {
                        Ok(q) => ok &= q > 0.0,
                        Err(e) => {
                            ok = false;
                            details.push(format!("hole {i}: {e}"));
                        }
                    }
                }
                details.push(format!("hole {i}: alpha = {:.6e}", c.alpha));
            }
            Err(e) => {
                ok = false;
                details.push(format!("hole {i}: {e}"));
            }
        }
    }
    check("alpha-nonnegative-and-spd", ok, details.join("; "))
}

fn solver_checks(assembly: &Assembly, opts: &S0Options) -> Result<Vec<CheckResult>> {
    let mut checks = Vec::new();
    let constants = asymptotics::shape_constants_for(assembly, opts)?;
    let n = assembly.config.hole_count();
    let l = assembly.config.thickness;
    let h = assembly.config.h;

    // Root count per Rouche disk equals the hole count.
    let mut count_ok = true;
    let mut count_detail = Vec::new();
    for parity in [Parity::Even, Parity::Odd] {
        let fp = parity.fp_index(1);
        let center = Complex64::new(fp as f64 * std::f64::consts::PI / l, 0.0);
        match solver::count_roots_in_disk(assembly, center, h.sqrt() / l, parity) {
            Ok(c) => {
                count_ok &= c == n;
                count_detail.push(format!("{parity}: {c} roots (expected {n})"));
            }
            Err(e) => {
                count_ok = false;
                count_detail.push(format!("{parity}: {e}"));
            }
        }
    }
    checks.push(check("rouche-root-count", count_ok, count_detail.join("; ")));

    // Locate the first even resonance for the remaining checks.
    let found = solver::find_resonances_near(assembly, Parity::Even, 1, Some(&constants))?;
    let res = &found[0];
    checks.push(check(
        "resonance-invariants",
        res.k.im < 0.0 && res.residual < solver::RESIDUAL_TOL,
        format!("k = {}, scaled residual {:.3e}", res.k, res.residual),
    ));

    // Schur vs full system: sigma_min of the full matrix collapses at the
    // root exactly where det(reduced) does.
    let sys_root = assembly.dispersion(res.k, Parity::Even)?;
    let off_k = Complex64::new(res.k.re * 1.3, res.k.im);
    let sys_off = assembly.dispersion(off_k, Parity::Even)?;
    let smin_root = linalg::sigma_min(&sys_root.full);
    let smin_off = linalg::sigma_min(&sys_off.full);
    let det_root = linalg::det(&sys_root.reduced).norm();
    let det_off = linalg::det(&sys_off.reduced).norm();
    let schur_ok = smin_root < 1e-8 * smin_off && det_root < 1e-8 * det_off;
    checks.push(check(
        "schur-full-agreement",
        schur_ok,
        format!(
            "sigma_min root/off = {:.3e}, det root/off = {:.3e}",
            smin_root / smin_off,
            det_root / det_off
        ),
    ));

    // Helmholtz rescaling invariance of the resonance.
    let t = 2.0;
    let scaled_config = SlabConfig {
        thickness: l * t,
        h: h * t,
        holes: assembly
            .config
            .holes
            .iter()
            .map(|(c, s)| ([c[0] * t, c[1] * t], s.clone()))
            .collect(),
        truncation: assembly.config.truncation,
        search_box: assembly.config.search_box,
    };
    let scaled_asm = Assembly::with_bases(scaled_config, assembly.bases.clone(), opts)?;
    let scaled_res = solver::find_resonance(&scaled_asm, res.k / t, Parity::Even, res.fp_index)?;
    let rescale_err = (scaled_res.k * t - res.k).norm() / res.k.norm();
    checks.push(check(
        "helmholtz-rescaling",
        rescale_err < 1e-10,
        format!("relative drift {rescale_err:.3e} under t = {t}"),
    ));

    // Asymptotic-vs-direct cubic decay: deviation ratio across an h-halving.
    let mut devs = Vec::new();
    for factor in [2.0, 1.0] {
        let h_run = h * factor;
        if h_run >= crate::matching::H_REGIME_LIMIT {
            continue;
        }
        let mut cfg = assembly.config.clone();
        cfg.h = h_run;
        let asm = Assembly::with_bases(cfg, assembly.bases.clone(), opts)?;
        let found = solver::find_resonances_near(&asm, Parity::Even, 1, Some(&constants))?;
        let centers: Vec<[f64; 2]> = asm.config.holes.iter().map(|(c, _)| *c).collect();
        let pred = asymptotics::multi_hole_asymptotic(&constants, &centers, l, h_run, 1)?;
        let dev = found
            .iter()
            .map(|r| {
                pred.values
                    .iter()
                    .map(|v| (v - r.k).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max);
        devs.push(dev);
    }
    if devs.len() == 2 {
        let ratio = devs[0] / devs[1];
        checks.push(check(
            "asymptotic-vs-direct-order",
            (5.0..=12.0).contains(&ratio),
            format!("deviation ratio per h-halving = {ratio:.2} (expect ~8)"),
        ));
    }

    Ok(checks)
}

/// Determinism witness: two identical tiny runs must serialize identically.
fn determinism(config: &RunConfig) -> CheckResult {
    let run_once = || -> Result<String> {
        let slab = config.to_slab_config()?;
        let opts = config.s0_options();
        let assembly = Assembly::new(slab, &opts)?;
        let k = Complex64::new(2.0, -0.01);
        let r = assembly.reduced_dispersion(k, Parity::Even)?;
        let payload: Vec<(f64, f64)> = r.iter().map(|c| (c.re, c.im)).collect();
        let doc = crate::config::ResultDocument::new(
            config,
            assembly.grams.content_hash(),
            payload,
            0.0,
        );
        doc.deterministic_json()
    };
    match (run_once(), run_once()) {
        (Ok(a), Ok(b)) => check(
            "determinism",
            a == b,
            if a == b {
                "identical payloads across repeated runs".into()
            } else {
                "payloads differ between identical runs".into()
            },
        ),
        (Err(e), _) | (_, Err(e)) => check("determinism", false, format!("{e}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verify_passes_on_the_default_square_config() {
        let cfg = RunConfig::from_json(
            r#"{
                "l": 1.0, "h": 0.02,
                "holes": [{"center": [0.0, 0.0], "shape": "square"}],
                "modes": 8
            }"#,
        )
        .unwrap();
        let report = run(&cfg).unwrap();
        for c in &report.checks {
            eprintln!("{}: {} ({})", c.name, c.passed, c.detail);
        }
        assert!(report.passed);
    }

    #[test]
    fn verify_fails_on_deliberately_coarse_quadrature() {
        let cfg = RunConfig::from_json(
            r#"{
                "l": 1.0, "h": 0.02,
                "holes": [{"center": [0.0, 0.0], "shape": "square"}],
                "modes": 8,
                "quad_order": 2
            }"#,
        )
        .unwrap();
        let report = run(&cfg).unwrap();
        assert!(!report.passed);
        let orth = report
            .checks
            .iter()
            .find(|c| c.name == "orthonormality")
            .unwrap();
        assert!(!orth.passed, "coarse quadrature must break orthonormality");
    }
}
