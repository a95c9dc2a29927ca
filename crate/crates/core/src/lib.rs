//! Solver library for mixed packing-and-covering semidefinite programs.
//!
//! Given positive semidefinite matrices `{P_i}` (packing) and `{C_i}` (covering),
//! the decision problem asks for `x >= 0` with
//! `sum_i x_i P_i <= (1 + eps) sum_i x_i C_i` in the Loewner order, or a
//! certificate that `sum_i x_i C_i >= I`, `sum_i x_i P_i <= (1 - eps) I` is
//! infeasible. The optimization form minimizes `mu` subject to
//! `sum_i x_i P_i <= mu I` and `sum_i x_i C_i >= I`.
//!
//! The solver is a parallel-friendly matrix multiplicative-weights method whose
//! iteration count depends only polylogarithmically on the instance width
//! `rho = max_i lambda_max(C_i) / lambda_max(P_i)`. Two execution paths are
//! provided:
//!
//! - **exact**: dense eigendecompositions per iteration, with potential-function
//!   instrumentation (the default);
//! - **approximate**: polynomial matrix-exponential application, Lanczos
//!   termination checks, and Johnson-Lindenstrauss trace-product sketches.
//!
//! Core math is generic over the scalar type via [`Scalar`] (any `num-traits`
//! float); concrete `f64` aliases are exported at the crate root.
//!
//! Module map:
//!
//! - [`symmat`]: symmetric-matrix kernel (eigendecomposition, matrix exponential,
//!   trace products, Loewner-order checks);
//! - [`instance`]: problem data model, width and `mu` bounds, MPSDP-v1 file I/O;
//! - [`expo_oracle`]: approximate exponential application, Lanczos, JL sketches;
//! - [`decision`]: the core decision solver;
//! - [`optimize`]: optimization-to-decision binary search;
//! - [`lp`]: entrywise fast path for mixed positive linear programs;
//! - [`verify`]: certificate checking and executable matrix-inequality oracles;
//! - [`generate`]: seeded test-instance generators (backs the CLI `gen` command).

pub mod decision;
pub mod expo_oracle;
pub mod generate;
pub mod instance;
pub mod lp;
pub mod optimize;
pub mod scalar;
pub mod symmat;
pub mod verify;

mod error;

pub use error::Error;
pub use scalar::Scalar;

/// Default scalar type for the concrete aliases below.
pub type DefaultScalar = f64;

/// Dense symmetric matrix over `f64`.
pub type SymMat = symmat::SymMatrix<f64>;
/// Sparse symmetric matrix over `f64`.
pub type SparseSymMat = symmat::SparseSymMatrix<f64>;
/// Mixed packing/covering instance over `f64`.
pub type Instance = instance::MixedInstance<f64>;
/// Decision-solver configuration over `f64`.
pub type Config = decision::SolverConfig<f64>;
/// Decision-solver outcome over `f64`.
pub type Outcome = decision::DecisionOutcome<f64>;

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;
