use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Grid location attached to pointwise failures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub point: usize,
    /// Real coordinates (x1, y1, x2, y2, x3, y3) of the grid point.
    pub coords: [f64; 6],
}

impl std::fmt::Display for Location {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "point {} at (x1={:.6}, y1={:.6}, x2={:.6}, y2={:.6}, x3={:.6}, y3={:.6})",
            self.point,
            self.coords[0],
            self.coords[1],
            self.coords[2],
            self.coords[3],
            self.coords[4],
            self.coords[5]
        )
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("complex axis {0} out of range (expected 1, 2 or 3)")]
    AxisOutOfRange(usize),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("metric is singular at {0}")]
    SingularMetric(Location),
    #[error("metric determinant is not positive at {0}")]
    NonPositiveDeterminant(Location),
    #[error("metric is not positive definite at {0}")]
    MetricNotPositive(Location),
    #[error("metric is not Hermitian at {location} (deviation {deviation:e})")]
    NotHermitian { location: Location, deviation: f64 },
    #[error("the (2,2)-form is not positive at {0}")]
    PsiNotPositive(Location),
    #[error("tensor signature mismatch: expected {expected}, found {found}")]
    SignatureMismatch { expected: String, found: String },
    #[error("tensor rank {rank} exceeds the maximum of {max}")]
    RankOverflow { rank: usize, max: usize },
    #[error("derivative order {order} exceeds the guard {max}")]
    OrderGuard { order: usize, max: usize },
    #[error("bidegree ({p},{q}) is out of range")]
    BidegreeOverflow { p: usize, q: usize },
    #[error("source form is not closed (max |d Phi| = {residual:e})")]
    PhiNotClosed { residual: f64 },
    #[error("time step underflow at t = {t} (dt = {dt:e}); flow breakdown")]
    DtUnderflow { t: f64, dt: f64 },
    #[error("positivity lost at t = {t} after {retries} step halvings: {cause}")]
    PositivityLoss {
        t: f64,
        retries: usize,
        cause: Box<Error>,
    },
    #[error("right-hand sides disagree: relative discrepancy {discrepancy:e} > {tolerance:e}")]
    CrossCheck { discrepancy: f64, tolerance: f64 },
    #[error("time series is empty")]
    EmptySeries,
    #[error("time series is not increasing at sample {0}")]
    NonMonotoneTime(usize),
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("snapshot field `{field}`: {message}")]
    Snapshot { field: &'static str, message: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors that signal breakdown of the flow itself rather than bad input.
    pub fn is_breakdown(&self) -> bool {
        matches!(
            self,
            Error::DtUnderflow { .. }
                | Error::PositivityLoss { .. }
                | Error::PsiNotPositive(_)
                | Error::MetricNotPositive(_)
        )
    }
}
