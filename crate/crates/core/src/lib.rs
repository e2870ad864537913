//! Reduced-basis surrogates for the smallest eigenvalue of parametrized
//! symmetric-definite pencils `A(w) x = λ B(w) x`.
//!
//! The surrogate is built greedily: at each selected parameter point the
//! smallest eigenvectors (and optionally their parameter derivatives) are
//! added to a subspace `V`, and the projected pencil `(VᵀAV, VᵀBV)` yields
//! an upper approximation of `λ₁(w)` together with a residual-based error
//! bound.

pub mod bounds;
pub mod compare;
pub mod eigcore;
pub mod error;
pub mod expr;
pub mod greedy;
pub mod linalg;
pub mod lu;
pub mod mtx;
pub mod par;
pub mod pencil;
pub mod problems;
pub mod reduction;
pub mod sensitivity;
pub mod sparse;
pub mod surrogate;

pub use error::{Error, Result};
pub use expr::Expr;
pub use linalg::Operator;
pub use pencil::AffinePencil;
