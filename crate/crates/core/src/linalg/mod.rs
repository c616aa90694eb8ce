//! Dense and sparse storage, the envelope Cholesky used for every SPD solve,
//! and symmetric eigen-solvers for the Karhunen-Loève problem.

mod cholesky;
mod dense;
mod eigen;
mod sparse;

pub use self::cholesky::{solve_spd, CholeskyFactor, CholeskySymbolic, SOLVE_RESIDUAL_TOL};
pub use self::dense::DenseMatrix;
pub use self::eigen::{subspace_largest, symmetric_eigen, EigenPairs};
pub use self::sparse::{SparseMatrix, SparsityPattern};
