//! Classification engine for degenerate principal series of split
//! simply-laced p-adic groups.
//!
//! The pipeline is: root data and Weyl combinatorics ([`rootsys`]), exact
//! characters ([`charlat`]), exponent multisets ([`jacquet`]), reducibility
//! tests ([`classify`]), branching-rule saturation ([`branch`]) and
//! Iwahori-Hecke intertwiner kernels ([`hecke`]).

pub mod branch;
pub mod charlat;
pub mod classify;
pub mod error;
pub mod hecke;
pub mod jacquet;
pub mod rootsys;

pub use error::{Error, Result};
