//! Taylor-Hood and hdG discretizations of the Stokes and elasticity problems.

pub mod assembly;
pub mod bdm;
pub mod element;
pub mod lagrange;
pub mod postprocess;
pub mod quadrature;
pub mod space;
pub mod system;

pub use assembly::{assemble_hdg, assemble_taylor_hood, Assembler, InterfaceCondition, LocalSystem};
pub use element::ElementMatrices;
pub use postprocess::velocity_l2_error;
pub use space::{build_space, Block, Entity, Scheme, Space};
pub use system::{BlockLayout, Constraint, ConstraintOrigin, Frame, LinearSystem, Rotation};
