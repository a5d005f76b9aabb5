//! Resonances of a sound-hard slab with subwavelength cylindrical holes.
//!
//! The slab of thickness `l` is pierced by N cylindrical holes generated by
//! unit-area cross-sections scaled by `h << 1`. Matching the Fourier trace of
//! the field on each aperture against the half-space representation yields a
//! countable linear system in the modal coefficients; its Schur reduction to
//! the N leading coefficients is the dispersion matrix whose rank deficiency
//! marks a resonance. The crate solves that system directly (spectral
//! truncation + complex Newton) and through closed-form small-h asymptotics,
//! and cross-validates the two.
//!
//! Entry points: [`geometry::EigenBasis`] for eigenbases, [`gram`] for kernel
//! Gram matrices, [`matching`] for the dispersion system, [`solver`] for
//! resonances, [`asymptotics`] for the closed forms, [`field`] for forced
//! (incident-wave) solves, and [`config`] for the CLI layer.

pub mod asymptotics;
pub mod bessel;
pub mod cache;
pub mod config;
pub mod error;
pub mod field;
pub mod geometry;
pub mod gram;
pub mod linalg;
pub mod matching;
pub mod quad;
pub mod solver;
pub mod verify;

pub use error::{Result, SlabError};
