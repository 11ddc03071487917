use thiserror::Error;

pub type Result<T> = std::result::Result<T, MyoError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MyoError {
    /// det F <= 0 at a quadrature point. `cell` is filled in by assembly.
    #[error("non-positive Jacobian det F = {jacobian:e}{}", cell_suffix(*.cell))]
    NonPositiveJacobian { jacobian: f64, cell: Option<usize> },

    #[error("non-positive dilation D = {0:e}")]
    NonPositiveDilation(f64),

    #[error("inverted reference cell {cell}: det J_ref = {det:e}")]
    InvertedCell { cell: usize, det: f64 },

    #[error("gastrocnemius geometry infeasible: {0}")]
    GeometryInfeasible(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),

    #[error("Newton did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("probe series do not share a time grid: {0}")]
    GridMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error: {0}")]
    Io(String),
}

fn cell_suffix(cell: Option<usize>) -> String {
    match cell {
        Some(c) => format!(" in cell {c}"),
        None => String::new(),
    }
}

impl From<std::io::Error> for MyoError {
    fn from(e: std::io::Error) -> Self {
        MyoError::Io(e.to_string())
    }
}

impl MyoError {
    pub(crate) fn with_cell(self, cell: usize) -> Self {
        match self {
            MyoError::NonPositiveJacobian { jacobian, .. } => MyoError::NonPositiveJacobian {
                jacobian,
                cell: Some(cell),
            },
            other => other,
        }
    }
}
