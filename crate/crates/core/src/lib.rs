//! Randomness amplification from a two-block min-entropy source.
//!
//! The crate implements the full pipeline for turning two blocks of a weak
//! randomness source plus a pair of untrusted no-signalling devices into
//! near-uniform output bits:
//!
//! 1. [`trevisan`] — a seeded extractor (one-bit codes composed over a weak
//!    design from [`design`]) that converts the first source block into a
//!    seeded-randomness table ([`srs`]).
//! 2. [`device`], [`mdl`] — device behaviours (simulated honest quantum
//!    strategies, deterministic boxes, noise) and the measurement-dependent
//!    locality games that score them.
//! 3. [`eat`], [`estimation`] — finite-size entropy accumulation bounds and
//!    the concentration inequalities behind the abort rule.
//! 4. [`two_source`] — the inner-product two-source extractor and the
//!    parameter gate for its stronger composed form, used to fuse the device
//!    output with the second source block.
//! 5. [`protocol`] — the end-to-end run: scoring, abort decision, entropy
//!    certificate, and final extraction, with a machine-readable report.
//!
//! Conventions shared by every module live in [`bits`]; exhaustive
//! brute-force checkers used by the test suites live in [`oracle`].

pub mod bits;
pub mod design;
pub mod device;
pub mod eat;
pub mod error;
pub mod estimation;
pub mod field;
pub mod mdl;
pub mod oracle;
pub mod protocol;
pub mod srs;
pub mod trevisan;
pub mod two_source;

pub use error::{Error, Result};
