//! Local polyharmonic smoothing-spline solver.

mod fit;
mod gcv;
mod kernel;
mod linalg;

pub use fit::{assemble_system, fit_local, LocalFrame, LocalSpline, SaddleSystem};
pub use gcv::{gcv_minimize, gcv_objective, GcvContext, GCV_RHO_HI, GCV_RHO_LO};
pub use kernel::{PhsKernel, RadialDerivs};
pub use linalg::{solve_sym_indef, HouseholderQr, PivotedQr};
