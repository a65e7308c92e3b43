use coexsim_core::CoexError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid `{field}`: {reason}")]
    Field { field: String, reason: String },
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] CoexError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0} infeasible row(s)")]
    Infeasible(usize),
}

impl CliError {
    pub fn field(field: &str, reason: impl Into<String>) -> Self {
        CliError::Field {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    /// 1 for anything wrong with the input, 2 for failures while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) | CliError::Field { .. } | CliError::Validation(_) => 1,
            CliError::Core(_) | CliError::Io(_) | CliError::Infeasible(_) => 2,
        }
    }
}
