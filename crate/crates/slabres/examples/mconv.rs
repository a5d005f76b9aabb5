//! Scratch: truncation convergence of alpha and of the first even resonance.
use num_complex::Complex64;
use slabres::asymptotics;
use slabres::geometry::HoleShape;
use slabres::gram::{S0Options, SingleGram, WavenumberBox};
use slabres::matching::{Assembly, Parity, SlabConfig};
use slabres::solver;
use std::sync::Arc;

fn main() {
    let opts = S0Options::default();
    let basis = Arc::new(slabres::geometry::EigenBasis::build(&HoleShape::UnitSquare, 60).unwrap());
    let gram = SingleGram::get(&basis, &opts).unwrap();
    for m in [5usize, 10, 20, 40, 60] {
        let c = asymptotics::alpha_constant(&gram, m).unwrap();
        println!("alpha(M={m:2}) = {:.9}", c.alpha);
    }
    let h = 0.01;
    for m in [10usize, 20, 40] {
        let config = SlabConfig {
            thickness: 1.0,
            h,
            holes: vec![([0.0, 0.0], HoleShape::UnitSquare)],
            truncation: m,
            search_box: WavenumberBox::default(),
        };
        let asm = Assembly::with_bases(config, vec![basis.clone()], &opts).unwrap();
        let seed = Complex64::new(std::f64::consts::PI, -(std::f64::consts::PI * h).powi(2) / std::f64::consts::PI);
        let r = solver::find_resonance(&asm, seed, Parity::Even, 1).unwrap();
        println!("k(M={m:2}) = {:.15} {:+.15e} i", r.k.re, r.k.im);
    }
}
