//! Classical simulator for quantum gradient descent and Newton's method on
//! the unit sphere, with sample-based Hamiltonian simulation, phase
//! estimation and classical reference solvers.

pub mod classical_ref;
pub mod csv_out;
pub mod descent;
pub mod error;
pub mod hamsim;
pub mod linalg;
pub mod rng;
pub mod state;
pub mod operators;
pub mod phase_estimation;
pub mod tensor_poly;
pub mod validate;

pub use error::{Error, Result};
pub use state::{DensityMatrix, QuantumState};
pub use tensor_poly::{load_problem, norm_bounds, AlgebraicForm, InhomogeneousTerm, NormBounds, PolynomialProblem};
