//! Dense linear algebra, the ridge solver, and exact binary rank.

mod matrix;
mod rank;
mod ridge;

pub use matrix::{dot, Matrix, Vector};
pub use rank::binary_rank;
pub use ridge::{ridge_gradient, ridge_gradient_with, ridge_solve, ridge_solve_with, MAX_CONDITION};
