//! Sparse storage, direct factorization, Krylov and eigenvalue solvers.

pub mod eigen;
pub mod gmres;
pub mod lu;
pub mod ordering;
pub mod qz;
pub mod sparse;

pub use eigen::{generalized_eigs, EigenOptions, EigenPair};
pub use gmres::{gmres, ErrorMonitor, Identity, KrylovTrace, LinearOperator, Monitor, ResidualMonitor};
pub use lu::{factorize, Factorization};
pub use sparse::CsrMatrix;
