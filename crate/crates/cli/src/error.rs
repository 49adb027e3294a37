use std::fmt;

/// Validation, configuration and usage problems.
pub const EXIT_VALIDATION: u8 = 2;
/// Failures raised while computing.
pub const EXIT_RUNTIME: u8 = 1;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub name: &'static str,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_VALIDATION, name: "InvalidConfig", message: message.into() }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Self { code: EXIT_VALIDATION, name: "InvalidParameter", message: message.into() }
    }

    /// Errors while loading user-supplied inputs count as validation errors.
    pub fn input(err: sparse_debias::Error) -> Self {
        Self { code: EXIT_VALIDATION, name: err.name(), message: err.to_string() }
    }
}

impl From<sparse_debias::Error> for CliError {
    fn from(err: sparse_debias::Error) -> Self {
        let code = if err.is_validation() { EXIT_VALIDATION } else { EXIT_RUNTIME };
        Self { code, name: err.name(), message: err.to_string() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        Self { code: EXIT_RUNTIME, name: "Io", message: err.to_string() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.name, self.message)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn core_errors_map_to_exit_codes() {
        let e: CliError = sparse_debias::Error::BadAlpha(2.0).into();
        assert_eq!((e.code, e.name), (EXIT_VALIDATION, "BadAlpha"));
        let e: CliError = sparse_debias::Error::RankDeficient.into();
        assert_eq!((e.code, e.name), (EXIT_RUNTIME, "RankDeficient"));
        assert!(e.to_string().starts_with("error[RankDeficient]: "));
    }
}
