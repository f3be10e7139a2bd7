//! Minimum cost network flow with linear and binary interdependencies.
//!
//! * [`instance`]: model types, validation, text format, merging and the
//!   structured transform.
//! * [`basis`]: forests, bases and the certificate matrix `D`.
//! * [`simplex`]: the generalized network simplex.
//! * [`oracle`]: a dense reference LP and a brute-force binary solver.
//! * [`approx`]: randomized rounding and branch and bound for the binary model.
//! * [`generator`]: seeded random instances.
//! * [`harness`]: repeated rounding trials and summary statistics.

pub mod approx;
pub mod basis;
pub mod generator;
pub mod harness;
pub mod instance;
pub mod linalg;
pub mod oracle;
pub mod simplex;

pub use basis::{build_cert, is_good, BasisState, CertMatrix, VarStatus, VariableRef};
pub use instance::{
    parse, serialize, validate, ArcRecord, Instance, Interdependence, ModelKind, NodeRecord,
};
pub use simplex::{solve, solve_from_basis, PricingRule, SolveOptions, SolveResult, SolveStatus};
