//! An executable untyped quantum λ-calculus with measurement.
//!
//! The calculus pairs a dense quantum memory with λ-terms in a linear-logic
//! discipline: `!` marks duplicable thunks, abstraction comes in a linear and
//! a non-linear flavor, and registers `rN` are placeholders for qubits held
//! in the memory. Reduction is probabilistic and acts on *multidistributions*
//! of (memory, term) programs; quantum rules fire only at surface positions
//! (never under a `!`, never inside a measurement branch).
//!
//! Crate layout:
//! - [`syntax`]: terms, parsing/printing, positions, validity.
//! - [`quantum`]: state vectors and the register-permutation operator algebra.
//! - [`program`]: programs as re-indexing classes, multidistributions.
//! - [`rewrite`]: root rules, redex enumeration, liftings and schedulers.
//! - [`analysis`]: termination probabilities, the brute-force oracle, and
//!   executable checks of the metatheorems (diamond, random descent,
//!   factorization, asymptotic completeness).
//! - [`cli`]: the `qlam` command-line frontend.

pub mod analysis;
pub mod cli;
pub mod program;
pub mod quantum;
pub mod rewrite;
pub mod syntax;

pub use program::{MultiDistribution, Program};
pub use quantum::QuantumState;
pub use rewrite::Engine;
pub use syntax::{GateTable, Position, Term};

/// Tolerance for state/probability equality checks.
pub const EPS: f64 = 1e-9;
/// Measurement branches below this probability are dropped: a zero-amplitude
/// branch has no normalizable post-state and multidistribution weights must
/// lie in (0, 1].
pub const DROP_EPS: f64 = 1e-12;
