use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in input: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("graph error at node `{node}`: {reason}")]
    Graph { node: String, reason: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed file {path}: {reason}")]
    Format { path: String, reason: String },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn graph(node: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Graph {
            node: node.into(),
            reason: reason.into(),
        }
    }
}
