use std::fmt;
use std::path::Path;

/// A failed command: stable exit code plus a message for stderr.
///
/// | code | meaning |
/// |------|---------|
/// | 1 | I/O, malformed input file, anything else |
/// | 2 | configuration or parameter error |
/// | 3 | shape or schedule mismatch between inputs |
/// | 4 | solver divergence |
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Failure {
            code: 1,
            message: format!("{}: {err}", path.display()),
        }
    }

    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<mrsi_cs::Error> for Failure {
    fn from(err: mrsi_cs::Error) -> Self {
        use mrsi_cs::Error as E;
        let code = match &err {
            E::Config(_) | E::Parameter(_) => 2,
            E::Shape(_) | E::Schedule(_) => 3,
            E::Divergence { .. } => 4,
            E::Format(_) | E::TooLarge(_) | E::Io(_) | E::Json(_) => 1,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}
