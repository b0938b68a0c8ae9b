use thiserror::Error;

/// Errors shared by all modules of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Mesh construction rejected its input (bad resolution, degenerate
    /// triangle, out-of-range vertex index, and similar).
    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    /// A hole could not be carved (not strictly inside the domain, or the
    /// remaining triangulation is disconnected).
    #[error("invalid hole: {0}")]
    InvalidHole(String),

    /// A nodal field was combined with a mesh it does not belong to.
    #[error("nodal field belongs to a different mesh")]
    MeshMismatch,

    /// A field evaluation or assembly input produced a non-finite value.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// Invalid boundary data, for example two clauses assigning different
    /// values to one vertex.
    #[error("invalid boundary data: {0}")]
    InvalidBoundaryData(String),

    /// Invalid material or solver parameters.
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    /// A linear or nonlinear solve failed (singular system, line search
    /// breakdown, non-descent direction).
    #[error("solver failure: {0}")]
    SolveFailed(String),

    /// Scenario configuration rejected during validation.
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    /// The per-step energy inequality was violated beyond tolerance.
    #[error("energy inequality violated at step {step}: slack {slack:.3e} below bound {bound:.3e}")]
    EnergyInequality { step: usize, slack: f64, bound: f64 },

    /// Another process holds the output directory lock.
    #[error("output directory {0} is locked by another run (stale .lock file?)")]
    OutputLocked(String),

    /// An output file expected by a reader is missing.
    #[error("missing run artifact: {0}")]
    MissingArtifact(String),

    /// Malformed run artifact (trace or snapshot that does not parse back).
    #[error("malformed run artifact: {0}")]
    MalformedArtifact(String),

    /// Environment configuration problem, e.g. an unparseable thread count.
    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
