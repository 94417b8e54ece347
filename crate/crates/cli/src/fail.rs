use epigame::{Error, ErrorClass};

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_INTEGRATION: i32 = 3;
pub const EXIT_PRECONDITION: i32 = 4;
/// Output could not be written.
pub const EXIT_IO: i32 = 1;

/// A command failure with its process exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn validation(message: String) -> Self {
        Self {
            code: EXIT_VALIDATION,
            message,
        }
    }

    pub fn precondition(message: String) -> Self {
        Self {
            code: EXIT_PRECONDITION,
            message,
        }
    }

    pub fn io(what: &str, err: std::io::Error) -> Self {
        Self {
            code: EXIT_IO,
            message: format!("{what}: {err}"),
        }
    }

    pub fn context(self, prefix: &str) -> Self {
        Self {
            code: self.code,
            message: format!("{prefix}: {}", self.message),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e.class() {
            ErrorClass::Validation => EXIT_VALIDATION,
            ErrorClass::Integration => EXIT_INTEGRATION,
            ErrorClass::Precondition => EXIT_PRECONDITION,
        };
        Self {
            code,
            message: format!("{}: {e}", e.name()),
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}
