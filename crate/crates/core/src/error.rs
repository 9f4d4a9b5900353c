use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("element cap exceeded: {requested} entries requested, cap is {cap}")]
    ElementCap { requested: usize, cap: usize },

    #[error("spectral norm {norm:.3e} exceeds the exponential cutoff {cutoff:.3e}")]
    ExpCutoff { norm: f64, cutoff: f64 },

    #[error("matrix is not positive semidefinite (eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("matrix is not Hermitian (defect {0:.3e})")]
    NotHermitian(f64),

    #[error("Q is singular: smallest singular value {0:.3e}")]
    SingularQ(f64),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("method precondition failed: {0}")]
    Precondition(String),

    #[error("term budget exceeded: {terms} terms, budget {budget}")]
    TermBudgetExceeded { terms: u64, budget: u64 },

    #[error("calibration budget exhausted after {rounds} rounds; best error {best_error:.3e} vs target {target:.3e}")]
    BudgetExhausted {
        rounds: usize,
        best_error: f64,
        target: f64,
    },

    #[error("integer overflow in Chebyshev coefficients at j = {0}")]
    CoefficientOverflow(usize),

    #[error("Chebyshev expansion needs j0 = {required}, budget allows {budget}")]
    ChebyshevBudget { required: usize, budget: usize },

    #[error("coefficient L1 norm {coeff_l1:.3e} loses all precision at target {epsilon:.1e}")]
    PrecisionLoss { coeff_l1: f64, epsilon: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("vectorization convention self-test failed (defect {0:.3e})")]
    SelfTest(f64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors that signal a desk-scale budget or feasibility limit
    /// rather than bad input or a numerical defect.
    pub fn is_budget(&self) -> bool {
        matches!(
            self,
            Error::ElementCap { .. }
                | Error::TermBudgetExceeded { .. }
                | Error::BudgetExhausted { .. }
                | Error::ChebyshevBudget { .. }
                | Error::PrecisionLoss { .. }
                | Error::CoefficientOverflow(_)
                | Error::ExpCutoff { .. }
                | Error::SingularQ(_)
        )
    }
}
