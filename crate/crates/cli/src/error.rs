use serde::Serialize;

/// Process exit codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(i32)]
pub enum ExitCode {
    Success = 0,
    Usage = 1,
    Io = 2,
    Numeric = 3,
}

impl ExitCode {
    pub fn kind(self) -> &'static str {
        match self {
            ExitCode::Success => "ok",
            ExitCode::Usage => "usage",
            ExitCode::Io => "io",
            ExitCode::Numeric => "numeric",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] akcs_core::Error),
    #[error("{0}")]
    Usage(String),
    /// A run completed but its own checks failed.
    #[error("{0}")]
    CheckFailed(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        use akcs_core::Error as E;
        match self {
            CliError::Usage(_) => ExitCode::Usage,
            CliError::CheckFailed(_) => ExitCode::Numeric,
            CliError::Core(e) if e.is_numeric() => ExitCode::Numeric,
            CliError::Core(E::Io(_) | E::Parse { .. } | E::Json(_)) => ExitCode::Io,
            CliError::Core(_) => ExitCode::Usage,
        }
    }

    /// The single-line JSON record printed on stderr.
    pub fn record(&self, command: &str) -> String {
        error_record(self.exit_code(), command, &self.to_string())
    }
}

#[derive(Serialize)]
struct Record<'a> {
    status: &'static str,
    code: i32,
    kind: &'static str,
    command: &'a str,
    message: &'a str,
}

pub fn error_record(code: ExitCode, command: &str, message: &str) -> String {
    // serde_json escapes newlines, so the record is always one line.
    serde_json::to_string(&Record {
        status: "error",
        code: code as i32,
        kind: code.kind(),
        command,
        message,
    })
    .expect("record serializes")
}
