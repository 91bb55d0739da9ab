//! Desk-scale surrogates for the asymptotic limits: every statistical
//! tolerance and size guard used by the test suites lives here so that a
//! threshold is changed in exactly one place.

/// Hard ceiling on dense probability tables (cells).
pub const MAX_TABLE_CELLS: usize = 1 << 24;

/// Normalization tolerance for every pmf / kernel slice.
pub const NORM_TOL: f64 = 1e-12;

/// Tolerance for the exact information identities.
pub const IDENTITY_TOL: f64 = 1e-10;

/// TV tolerance for the interleaved super-law against the stationary block law.
pub const TV_INTERLEAVE: f64 = 0.02;

/// TV floor witnessing non-ergodicity of the naive super process.
pub const TV_NONERGODIC: f64 = 0.4;

/// Default slack for strong typicality.
pub const DEFAULT_EPSILON: f64 = 0.05;

/// Decoder candidate scan cap (rows).
pub const DECODER_ROW_CAP: usize = 1 << 20;

/// Default grid resolution (1/steps) for the exhaustive feedback oracle.
pub const ORACLE_GRID_STEPS: usize = 64;
