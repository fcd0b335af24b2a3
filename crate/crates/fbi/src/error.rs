use thiserror::Error;

#[derive(Debug, Error)]
pub enum FbiError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("momentum {p:?} does not lie on the {grid:?} grid")]
    OffGrid { p: [f64; 2], grid: (usize, usize) },
    #[error("no magic angle found: {0}")]
    NotMagic(String),
    #[error("flat space has dimension {found}, expected {expected} at k index {k}")]
    FlatDimension { k: usize, found: usize, expected: usize },
    #[error("gauge fixing failed: {0}")]
    Gauge(String),
    #[error("G cutoff {g_cut} too large for plane-wave cutoff {basis_cut} (need at most {limit})")]
    Aliasing { g_cut: f64, basis_cut: f64, limit: f64 },
    #[error("Fock space too large: {modes} modes (limit {limit})")]
    TooManyModes { modes: usize, limit: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, FbiError>;
