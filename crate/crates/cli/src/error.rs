use gridform_core::Error;

/// Failure classes with stable exit codes.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Simulation(String),
    Degenerate(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Simulation(_) => 3,
            CliError::Degenerate(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Simulation(m) | CliError::Degenerate(m) => {
                f.write_str(m)
            }
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Config(_) | Error::Parameter(_) => CliError::Config(msg),
            Error::Degenerate(_) | Error::NoEquilibrium(_) | Error::DegenerateGrid(_) => {
                CliError::Degenerate(msg)
            }
            _ => CliError::Simulation(msg),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Simulation(format!("output error: {e}"))
    }
}
