//! Constrained maximum likelihood and model comparison.

mod criteria;
mod fit;
mod nullspace;

pub use criteria::{
    aic, bic, compare_sequence, likelihood_ratio_test, Comparison, FitSummary, LrtResult,
    ModelComparison, ModelSummary,
};
pub use fit::{fit, fit_designs, FitOptions, FitResult};
pub use nullspace::{null_space_basis, NullSpace};
