//! Bimanual garment pre-dressing toolkit.
//!
//! Movement primitives are fitted to demonstrations and replayed under
//! kinematic limits ([`dmp`]), coupled across two arms with a maximum
//! inter-arm distance ([`bimanual`]), registered as named manipulation
//! primitives ([`primitives`]), and evaluated in simulated episodes against a
//! garment response model calibrated from measured outcome tables
//! ([`garment`], [`engine`]).

pub mod bimanual;
pub mod bridge;
pub mod cli;
pub mod dmp;
pub mod engine;
pub mod error;
pub mod garment;
pub mod primitives;
pub mod quat;
pub mod synth;

pub use error::{Error, Result};
