use std::fmt;

/// Failures surfaced by the command line, each with a stable kind.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config { line: Option<usize>, detail: String },
    Data(String),
    Io(String),
    Core(dualseg::Error),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config { .. } => "config",
            CliError::Data(_) => "data",
            CliError::Io(_) => "io",
            CliError::Core(e) => e.kind(),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config { .. } => 2,
            _ => 1,
        }
    }

    /// `error kind=<kind> message="<escaped text>"`
    pub fn one_line(&self) -> String {
        let msg = self.to_string();
        let mut escaped = String::with_capacity(msg.len());
        for ch in msg.chars() {
            match ch {
                '"' => escaped.push_str("\\\""),
                '\\' => escaped.push_str("\\\\"),
                '\n' => escaped.push_str("\\n"),
                '\r' => {}
                c => escaped.push(c),
            }
        }
        format!("error kind={} message=\"{escaped}\"", self.kind())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Io(m) => f.write_str(m),
            CliError::Config { line: Some(l), detail } => write!(f, "line {l}: {detail}"),
            CliError::Config { line: None, detail } => f.write_str(detail),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<dualseg::Error> for CliError {
    fn from(e: dualseg::Error) -> Self {
        CliError::Core(e)
    }
}

/// Wraps a filesystem error with the path it concerns.
pub fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

pub type CliResult<T> = std::result::Result<T, CliError>;
