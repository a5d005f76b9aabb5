//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! (run with `cargo test --test acceptance -- --nocapture` for the report).
//!
//! Criterion 7's truncation-shift bound is asserted exactly as stated even
//! though the measured Galerkin convergence of this formulation is algebraic
//! (~1/M, driven by the inverse-sqrt edge behavior of the aperture flux), so
//! that test documents the measured shift and fails honestly; its companion
//! records the actual convergence behavior and the bounded conditioning.

use std::sync::{Arc, OnceLock};
use std::time::Instant;

use num_complex::Complex64;

use slabres::asymptotics;
use slabres::config::RunConfig;
use slabres::field;
use slabres::geometry::{EigenBasis, HoleShape, ORTHONORMALITY_TOL};
use slabres::gram::{S0Options, SingleGram, WavenumberBox};
use slabres::matching::{Assembly, Parity, SlabConfig};
use slabres::solver;

const PI: f64 = std::f64::consts::PI;

struct Fixture {
    square40: Arc<EigenBasis>,
    square20: Arc<EigenBasis>,
    disk20: Arc<EigenBasis>,
    square_gram40: Arc<SingleGram>,
    square_gram20: Arc<SingleGram>,
    disk_gram20: Arc<SingleGram>,
    square_s0_build_s: f64,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let opts = S0Options::default();
        let square40 = Arc::new(EigenBasis::build(&HoleShape::UnitSquare, 40).unwrap());
        let t0 = Instant::now();
        let square_gram40 = SingleGram::get(&square40, &opts).unwrap();
        let square_s0_build_s = t0.elapsed().as_secs_f64();
        let square20 = Arc::new(EigenBasis::build(&HoleShape::UnitSquare, 20).unwrap());
        let square_gram20 = SingleGram::get(&square20, &opts).unwrap();
        let disk20 = Arc::new(EigenBasis::build(&HoleShape::UnitDisk, 20).unwrap());
        let disk_gram20 = SingleGram::get(&disk20, &opts).unwrap();
        Fixture {
            square40,
            square20,
            disk20,
            square_gram40,
            square_gram20,
            disk_gram20,
            square_s0_build_s,
        }
    })
}

fn report(criterion: &str, passed: bool, detail: &str) {
    eprintln!(
        "[acceptance] {criterion}: {} - {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "{criterion} failed: {detail}");
}

fn single_square_config(h: f64, m: usize) -> SlabConfig {
    SlabConfig {
        thickness: 1.0,
        h,
        holes: vec![([0.0, 0.0], HoleShape::UnitSquare)],
        truncation: m,
        search_box: WavenumberBox::default(),
    }
}

fn assembly_for(basis: &Arc<EigenBasis>, config: SlabConfig) -> Assembly {
    let bases = vec![basis.clone(); config.holes.len()];
    Assembly::with_bases(config, bases, &S0Options::default()).unwrap()
}

#[test]
fn criterion_1_square_shape_constant() {
    let fx = fixture();
    let s2 = std::f64::consts::SQRT_2;
    let exact = (2.0 / PI) * (1.0 + s2).ln() - (2.0 / (3.0 * PI)) * (s2 - 1.0);
    let got = fx.square_gram40.s0()[(0, 0)];
    let rel = (got - exact).abs() / exact;
    let timing_ok = fx.square_s0_build_s < 30.0;
    report(
        "criterion 1 (square shape constant)",
        rel < 1e-5 && timing_ok,
        &format!(
            "s0(0,0) = {got:.9} vs closed form {exact:.9}, rel err {rel:.3e}, build {:.1} s",
            fx.square_s0_build_s
        ),
    );
}

#[test]
fn criterion_2_eigenbasis() {
    let fx = fixture();
    // Square spectrum: pi^2 (p^2 + q^2) in ascending order.
    let mut sums: Vec<u64> = Vec::new();
    for p in 0..12u64 {
        for q in 0..12u64 {
            sums.push(p * p + q * q);
        }
    }
    sums.sort_unstable();
    let mut square_ok = true;
    let mut worst: f64 = 0.0;
    for (m, &lambda) in fx.square40.eigenvalues().iter().enumerate() {
        let err = (lambda - PI * PI * sums[m] as f64).abs();
        worst = worst.max(err);
        square_ok &= err < 1e-12 * (1.0 + lambda);
    }

    // Disk lambda_1 against an independent bracketing oracle built on the
    // integral representation of J_1'.
    let j1_prime = |x: f64| {
        let j = |n: u32, x: f64| {
            // (1/pi) int_0^pi cos(n t - x sin t) dt, fine Simpson
            let steps = 4000usize;
            let hstep = PI / steps as f64;
            let f = |t: f64| ((n as f64) * t - x * t.sin()).cos();
            let mut acc = f(0.0) + f(PI);
            for i in 1..steps {
                acc += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * hstep);
            }
            acc * hstep / 3.0 / PI
        };
        0.5 * (j(0, x) - j(2, x))
    };
    let (mut lo, mut hi) = (1.5, 2.2);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if j1_prime(lo).signum() == j1_prime(mid).signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let alpha_oracle = 0.5 * (lo + hi);
    let lambda1_oracle = PI * alpha_oracle * alpha_oracle;
    let lambda1 = fx.disk20.eigenvalue(1);
    let disk_ok = (lambda1 - lambda1_oracle).abs() / lambda1_oracle < 1e-8
        && (lambda1 - 10.6499).abs() < 1e-3;

    // Orthonormality at M = 40 for both shapes.
    let disk40 = EigenBasis::build(&HoleShape::UnitDisk, 40).unwrap();
    let d_sq = fx.square40.orthonormality_defect();
    let d_dk = disk40.orthonormality_defect();
    let gram_ok = d_sq < ORTHONORMALITY_TOL && d_dk < ORTHONORMALITY_TOL;

    report(
        "criterion 2 (eigenbasis)",
        square_ok && disk_ok && gram_ok,
        &format!(
            "square spectrum dev {worst:.2e}; disk lambda_1 = {lambda1:.6} vs oracle {lambda1_oracle:.6}; Gram defects {d_sq:.2e}/{d_dk:.2e}"
        ),
    );
}

#[test]
fn criterion_3_asymptotic_vs_direct_cubic() {
    let fx = fixture();
    let start = Instant::now();
    let constants = vec![asymptotics::alpha_constant(&fx.square_gram20, 20).unwrap()];
    let mut all_ok = true;
    let mut detail = String::new();
    for parity in [Parity::Even, Parity::Odd] {
        let mut devs = Vec::new();
        for &h in &[0.02, 0.01, 0.005] {
            let asm = assembly_for(&fx.square20, single_square_config(h, 20));
            let found = solver::find_resonances_near(&asm, parity, 1, Some(&constants)).unwrap();
            let fp = parity.fp_index(1);
            let pred =
                asymptotics::multi_hole_asymptotic(&constants, &[[0.0, 0.0]], 1.0, h, fp).unwrap();
            devs.push((found[0].k - pred.values[0]).norm());
        }
        let r1 = devs[0] / devs[1];
        let r2 = devs[1] / devs[2];
        let ok = (5.0..=12.0).contains(&r1) && (5.0..=12.0).contains(&r2);
        all_ok &= ok;
        detail.push_str(&format!(
            "{parity}: deviations {:.3e}/{:.3e}/{:.3e}, ratios {r1:.2}, {r2:.2}; ",
            devs[0], devs[1], devs[2]
        ));
    }
    let elapsed = start.elapsed().as_secs_f64();
    all_ok &= elapsed < 600.0;
    detail.push_str(&format!("runtime {elapsed:.0} s"));
    report("criterion 3 (asymptotic-vs-direct O(eps^3))", all_ok, &detail);
}

#[test]
fn criterion_4_q_factor_law() {
    let fx = fixture();
    let h = 0.005;
    let mut detail = String::new();
    let mut ok = true;
    let mut q_square = Vec::new();
    let mut q_disk = Vec::new();
    for (basis, gram, qs) in [
        (&fx.square20, &fx.square_gram20, &mut q_square),
        (&fx.disk20, &fx.disk_gram20, &mut q_disk),
    ] {
        let constants = vec![asymptotics::alpha_constant(gram, 20).unwrap()];
        for fp in [1usize, 2] {
            let (parity, m) = Parity::from_fp_index(fp);
            let config = SlabConfig {
                thickness: 1.0,
                h,
                holes: vec![([0.0, 0.0], basis.shape().clone())],
                truncation: 20,
                search_box: WavenumberBox::default(),
            };
            let asm = assembly_for(basis, config);
            let res = solver::find_resonances_near(&asm, parity, m, Some(&constants)).unwrap();
            let scaled = res[0].q * 2.0 * fp as f64 * h * h;
            qs.push(res[0].q);
            ok &= (0.9..=1.1).contains(&scaled);
            detail.push_str(&format!(
                "{:?} fp={fp}: Q = {:.1}, Q 2mh^2 = {scaled:.4}; ",
                basis.shape().cache_label(),
                res[0].q
            ));
        }
    }
    for fp in 0..2 {
        let rel = (q_square[fp] - q_disk[fp]).abs() / q_square[fp];
        ok &= rel < 0.05;
        detail.push_str(&format!("shape gap fp={}: {:.2}%; ", fp + 1, rel * 100.0));
    }
    report("criterion 4 (Q-factor law)", ok, &detail);
}

#[test]
fn criterion_5_localization_and_counting() {
    let fx = fixture();
    let h = 0.01;
    let m_trunc = 12;
    let layouts: Vec<Vec<[f64; 2]>> = vec![
        vec![[0.0, 0.0]],
        vec![[0.0, 0.0], [1.0, 0.0]],
        vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
    ];
    let mut ok = true;
    let mut detail = String::new();
    for centers in &layouts {
        let n = centers.len();
        let config = SlabConfig {
            thickness: 1.0,
            h,
            holes: centers.iter().map(|c| (*c, HoleShape::UnitSquare)).collect(),
            truncation: m_trunc,
            search_box: WavenumberBox::default(),
        };
        let asm = assembly_for(&fx.square20, config);
        for parity in [Parity::Even, Parity::Odd] {
            let fp = parity.fp_index(1);
            let center = Complex64::new(fp as f64 * PI, 0.0);
            let count =
                solver::count_roots_in_disk(&asm, center, h.sqrt(), parity).unwrap();
            ok &= count == n;
            detail.push_str(&format!("N={n} {parity}: count {count}; "));
        }
        // Polish the even roots and check the localization invariants.
        let constants = vec![
            asymptotics::alpha_constant(&fx.square_gram20, 20).unwrap();
            n
        ];
        let found = solver::find_resonances_near(&asm, Parity::Even, 1, Some(&constants)).unwrap();
        ok &= found.len() == n;
        for r in &found {
            let dist = (r.k - Complex64::new(PI, 0.0)).norm();
            ok &= r.k.im < 0.0 && dist <= h.sqrt();
        }
    }
    report("criterion 5 (localization and counting)", ok, &detail);
}

#[test]
fn criterion_6_two_hole_splitting() {
    let fx = fixture();
    let h = 0.01;
    let config = SlabConfig {
        thickness: 1.0,
        h,
        holes: vec![
            ([0.0, 0.0], HoleShape::UnitSquare),
            ([1.0, 0.0], HoleShape::UnitSquare),
        ],
        truncation: 20,
        search_box: WavenumberBox::default(),
    };
    let asm = assembly_for(&fx.square20, config);
    let constants = vec![asymptotics::alpha_constant(&fx.square_gram20, 20).unwrap(); 2];
    let found = solver::find_resonances_near(&asm, Parity::Even, 1, Some(&constants)).unwrap();
    assert_eq!(found.len(), 2);
    let split_direct = (found[0].k - found[1].k).norm();
    let pred = asymptotics::multi_hole_asymptotic(
        &constants,
        &[[0.0, 0.0], [1.0, 0.0]],
        1.0,
        h,
        1,
    )
    .unwrap();
    let split_pred = (pred.values[0] - pred.values[1]).norm();
    let rel = (split_direct - split_pred).abs() / split_pred;
    report(
        "criterion 6 (two-hole splitting)",
        rel < 0.2,
        &format!(
            "direct {split_direct:.4e} vs eigenvalue prediction {split_pred:.4e} ({:.1}% apart)",
            rel * 100.0
        ),
    );
}

/// The truncation-shift bound exactly as specified. The measured Galerkin
/// convergence of the matching truncation is algebraic (~1/M; shift 20->40
/// is ~7e-5 at h = 0.01), so this criterion fails; the companion test below
/// documents the measured behavior.
#[test]
fn criterion_7a_truncation_shift_below_1e8_as_specified() {
    let fx = fixture();
    let h = 0.01;
    let seed = Complex64::new(PI, -(PI * h).powi(2) / PI);
    let asm20 = assembly_for(&fx.square20, single_square_config(h, 20));
    let asm40 = assembly_for(&fx.square40, single_square_config(h, 40));
    let k20 = solver::find_resonance(&asm20, seed, Parity::Even, 1).unwrap().k;
    let k40 = solver::find_resonance(&asm40, seed, Parity::Even, 1).unwrap().k;
    let shift = (k20 - k40).norm();
    report(
        "criterion 7a (truncation shift M=20 -> M=40 < 1e-8 |k|)",
        shift < 1e-8 * k40.norm(),
        &format!(
            "measured shift {shift:.3e} ({:.3e} relative); the matching truncation converges \
             algebraically (~1/M) because the aperture flux carries inverse-sqrt edge \
             singularities, so the 1e-8 spectral-accuracy bound is not attainable at any \
             admissible h",
            shift / k40.norm()
        ),
    );
}

#[test]
fn criterion_7b_truncation_behavior_and_conditioning() {
    let fx = fixture();
    let h = 0.01;
    let seed = Complex64::new(PI, -(PI * h).powi(2) / PI);
    let mut roots = Vec::new();
    for (basis, m) in [(&fx.square20, 10usize), (&fx.square20, 20), (&fx.square40, 40)] {
        let asm = assembly_for(basis, single_square_config(h, m));
        roots.push(solver::find_resonance(&asm, seed, Parity::Even, 1).unwrap().k);
    }
    let d1 = (roots[1] - roots[0]).norm();
    let d2 = (roots[2] - roots[1]).norm();
    let order = (d1 / d2).log2();

    let asm40 = assembly_for(&fx.square40, single_square_config(h, 40));
    let probe = Complex64::new(PI, -0.001);
    let mut conds = Vec::new();
    for m in [5usize, 10, 20, 40] {
        let sys = asm40.dispersion_truncated(probe, Parity::Even, m).unwrap();
        conds.push(sys.a_block_cond);
    }
    let cond_ok = conds.iter().all(|&c| c < 1e4);
    let decay_ok = d2 < d1;
    report(
        "criterion 7b (truncation behavior and a-block conditioning)",
        cond_ok && decay_ok,
        &format!(
            "shifts 10->20 = {d1:.3e}, 20->40 = {d2:.3e} (order {order:.2} per doubling); \
             a-block conds {conds:?}"
        ),
    );
}

#[test]
fn criterion_8_field_enhancement_exponents() {
    let template = single_square_config(0.01, 12);
    let h_values = [0.02, 0.01, 0.005];
    let opts = S0Options::default();
    let resonant = field::enhancement_exponents(&template, &h_values, 2, &opts).unwrap();
    let control = field::enhancement_control(&template, &h_values, 2, &opts).unwrap();
    let b0_ok = (resonant.slope_b0 + 1.0).abs() <= 0.15;
    let int_ok = (resonant.slope_interior + 2.0).abs() <= 0.2;
    // "no negative slope" for the control run, up to fit noise
    let ctrl_ok = control.slope_b0 >= -0.1 && control.slope_interior >= -0.1;
    report(
        "criterion 8 (field enhancement exponents)",
        b0_ok && int_ok && ctrl_ok,
        &format!(
            "resonant slopes b0 {:.3}, interior {:.3}; control slopes {:.3}, {:.3}",
            resonant.slope_b0, resonant.slope_interior, control.slope_b0, control.slope_interior
        ),
    );
}

#[test]
fn criterion_9_structural_invariants_suite() {
    let cfg = RunConfig::from_json(
        r#"{
            "l": 1.0, "h": 0.02,
            "holes": [{"center": [0.0, 0.0], "shape": "square"}],
            "modes": 12
        }"#,
    )
    .unwrap();
    let verdict = slabres::verify::run(&cfg).unwrap();
    let mut detail = String::new();
    for c in &verdict.checks {
        detail.push_str(&format!(
            "{}={}; ",
            c.name,
            if c.passed { "ok" } else { "FAIL" }
        ));
    }
    report("criterion 9 (structural invariants suite)", verdict.passed, &detail);
}
