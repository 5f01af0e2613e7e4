//! Simulation library for sub-Nyquist signal acquisition and low-rate processing.
//!
//! The crate models two acquisition front-ends for spectrally sparse signals, the
//! chipping/integrate-and-dump sampler ([`rd`]) and the periodic-mixing channel
//! bank ([`mwc`]), together with the digital machinery that inverts them:
//! greedy sparse recovery ([`recovery`]), spectrum-slice band extraction and
//! carrier recovery ([`backdsp`]), and seeded experiment drivers
//! ([`experiments`]) that reproduce the reference mismatch, carrier-offset and
//! bit-error studies at desk scale.
//!
//! All generators and solvers are pure functions of their inputs and seeds;
//! trials parallelize with per-trial derived seeds and deterministic assembly.

pub mod backdsp;
pub mod experiments;
pub mod firdes;
pub mod mwc;
pub mod rd;
pub mod recovery;
pub mod signal;
pub mod spectral;

pub use num_complex::Complex64;
