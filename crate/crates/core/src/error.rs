use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("subdivision level {0} outside 0..=8")]
    SubdivisionOutOfRange(u32),

    #[error("degenerate triangle at face {face}")]
    DegenerateTriangle { face: usize },

    #[error("invalid metric at face {face}: {reason}")]
    InvalidMetric { face: usize, reason: String },

    #[error("field `{name}` has length {got}, expected {expected}")]
    FieldLength {
        name: String,
        expected: usize,
        got: usize,
    },

    #[error("fields live on different meshes")]
    MeshMismatch,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("eigensolver did not converge (residual {residual:e})")]
    EigenNonConvergence { residual: f64 },

    #[error("metric not positively curved at vertex {vertex} (K = {curvature:e})")]
    NotEmbeddableHere { vertex: usize, curvature: f64 },

    #[error("embedding did not converge after {iterations} iterations (best relative edge residual {residual:e})")]
    EmbeddingNonConvergence { iterations: usize, residual: f64 },

    #[error("curvature lost along the metric path at t = {t} (vertex {vertex})")]
    CurvatureLostAlongPath { t: f64, vertex: usize },

    #[error("rank-deficient quadric fit at vertex {vertex}")]
    RankDeficientFit { vertex: usize },

    #[error("hat metric not positively curved at vertex {vertex} (K = {curvature:e})")]
    NotAdmissibleHint { vertex: usize, curvature: f64 },

    #[error("linearized operator is near-singular on mean-zero functions (indicator {indicator:e}, beta {beta:e})")]
    KernelObstruction {
        indicator: f64,
        beta: f64,
        /// Near-null mean-zero field of the linearization.
        field: Vec<f64>,
    },

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        /// Best iterate reached.
        tau: Vec<f64>,
    },

    #[error("continuation stalled at t = {t} (last converged t = {last_t})")]
    ContinuationStalled {
        t: f64,
        last_t: f64,
        tau: Vec<f64>,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable name used in diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidMesh(_) => "InvalidMesh",
            Error::SubdivisionOutOfRange(_) => "SubdivisionOutOfRange",
            Error::DegenerateTriangle { .. } => "DegenerateTriangle",
            Error::InvalidMetric { .. } => "InvalidMetric",
            Error::FieldLength { .. } => "FieldLength",
            Error::MeshMismatch => "MeshMismatch",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::LinearSolve(_) => "LinearSolve",
            Error::EigenNonConvergence { .. } => "EigenNonConvergence",
            Error::NotEmbeddableHere { .. } => "NotEmbeddableHere",
            Error::EmbeddingNonConvergence { .. } => "EmbeddingNonConvergence",
            Error::CurvatureLostAlongPath { .. } => "CurvatureLostAlongPath",
            Error::RankDeficientFit { .. } => "RankDeficientFit",
            Error::NotAdmissibleHint { .. } => "NotAdmissibleHint",
            Error::KernelObstruction { .. } => "KernelObstruction",
            Error::NonConvergence { .. } => "NonConvergence",
            Error::ContinuationStalled { .. } => "ContinuationStalled",
            Error::Parse { .. } => "Parse",
            Error::Io(_) => "Io",
        }
    }

    /// True for errors caused by malformed input rather than numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidMesh(_)
                | Error::SubdivisionOutOfRange(_)
                | Error::InvalidMetric { .. }
                | Error::FieldLength { .. }
                | Error::MeshMismatch
                | Error::InvalidParameter(_)
                | Error::Parse { .. }
                | Error::Io(_)
        )
    }
}
