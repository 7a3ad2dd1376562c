use thiserror::Error;

/// Failure classes of the laboratory. The CLI maps them to exit codes
/// through [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("ellipticity violated: {0}")]
    Ellipticity(String),

    #[error("coefficient J singular at node (x={x:.6}, theta={theta:.6}), condition number {cond:.3e}")]
    SingularJ { x: f64, theta: f64, cond: f64 },

    #[error("symbol admits no spectral cutting at (theta={theta:.6}, zeta={zeta})")]
    NoSpectralCutting { theta: f64, zeta: f64 },

    #[error("eigenvalue {re:.6e}{im:+.6e}i lies within the gap tolerance of the dividing curve")]
    EigenvalueOnContour { re: f64, im: f64 },

    #[error("contour does not separate the spectrum: eigenvalue {re:.6e}{im:+.6e}i outside both sectors and off the imaginary axis")]
    ContourNotSeparating { re: f64, im: f64 },

    #[error("contour under-resolved: quadrature/oracle mismatch {mismatch:.3e}")]
    ContourUnderResolved { mismatch: f64 },

    #[error("{what} dimension unresolved: singular-value gap ratio {gap:.3e} < 10")]
    RankUnresolved { what: String, gap: f64 },

    #[error("Calderón construction inconsistent: {0}")]
    Inconsistent(String),

    #[error("correction formula ill-conditioned: cond(P+ + P-*) = {0:.3e}")]
    IllConditioned(f64),

    #[error("signature undefined: J0 not skew-adjoint (defect {0:.3e})")]
    NotSkew(f64),

    #[error("Lagrangian check requires formally self-adjoint A (defect {0:.3e})")]
    NotSelfAdjoint(f64),

    #[error("{0}")]
    OracleInapplicable(String),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("singular boundary morphism T at side {side}, theta={theta:.6}")]
    SingularT { side: usize, theta: f64 },

    #[error("{0}")]
    Domain(String),

    #[error("sweep member s = {s} failed: {source}")]
    SweepMember { s: f64, source: Box<Error> },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// 2 for configuration problems, 3 for numerical-resolution problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ContourUnderResolved { .. }
            | Error::RankUnresolved { .. }
            | Error::IllConditioned(_)
            | Error::EigenvalueOnContour { .. }
            | Error::ContourNotSeparating { .. }
            | Error::Inconsistent(_) => 3,
            Error::SweepMember { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
