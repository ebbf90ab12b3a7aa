use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty domain: {0}")]
    EmptyDomain(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("coefficient data unavailable at p = {p}: {msg}")]
    Data { p: u64, msg: String },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("family is not orthogonal: members {i} and {j} have |m| = {m:.4}")]
    NotOrthogonal { i: usize, j: usize, m: f64 },

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("sigma = {sigma} rejected: {reason}")]
    SigmaWindow { sigma: f64, reason: String },

    #[error("solver failed: {msg} (last residual {residual:.3e})")]
    Solver { msg: String, residual: f64 },

    #[error("search failed: {0}")]
    Search(String),

    #[error("boundary sampling too coarse: {0}")]
    RefineStep(String),

    #[error("inconclusive certificate: {0}")]
    Inconclusive(String),

    #[error("root left the annulus at sigma = {sigma}")]
    AnnulusExit { sigma: f64 },

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping stage wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
