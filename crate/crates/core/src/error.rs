use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    /// Malformed input text. `line`/`column` are 1-based; 0 means unknown.
    #[error("{}{message}", location(*line, *column))]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("arithmetic error: {0}")]
    Arithmetic(String),
    /// A query references something outside the automaton or partition.
    #[error("domain error: {0}")]
    Domain(String),
    #[error("format error: {0}")]
    Format(String),
    /// A solution or scheduler does not fit the structure it claims to.
    #[error("consistency error: {0}")]
    Consistency(String),
    /// A checked invariant of the toolkit itself failed.
    #[error("internal soundness error: {0}")]
    Soundness(String),
}

fn location(line: usize, column: usize) -> String {
    match (line, column) {
        (0, _) => String::new(),
        (l, 0) => format!("line {l}: "),
        (l, c) => format!("line {l}, column {c}: "),
    }
}

impl Error {
    pub(crate) fn at(self, line: usize, column: usize) -> Error {
        match self {
            Error::Parse { message, .. } => Error::Parse {
                line,
                column,
                message,
            },
            other => other,
        }
    }
}
