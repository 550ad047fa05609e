use codesign_core::codesign::CodesignError;
use codesign_core::control::ControlError;
use codesign_core::geom::GeomError;
use codesign_core::ldm::LdmError;

/// Failure of a command; the variant selects the exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, configuration or input files (exit 1).
    Usage(String),
    /// The computation itself failed (exit 2).
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<GeomError> for CliError {
    fn from(e: GeomError) -> Self {
        match e {
            GeomError::DegenerateGradient { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<LdmError> for CliError {
    fn from(e: LdmError) -> Self {
        match e {
            LdmError::FitFailure(_) | LdmError::FlowDivergence { .. } | LdmError::RankDeficient { .. } => {
                CliError::Numerical(e.to_string())
            }
            LdmError::Geom(g) => g.into(),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<ControlError> for CliError {
    fn from(e: ControlError) -> Self {
        match &e {
            ControlError::Sim(s) if s.is_blowup() => CliError::Numerical(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<CodesignError> for CliError {
    fn from(e: CodesignError) -> Self {
        match e {
            CodesignError::Ldm(l) => l.into(),
            CodesignError::Control(c) => c.into(),
            CodesignError::Cma(c) => CliError::Numerical(c.to_string()),
            CodesignError::Invalid(m) => CliError::Usage(m),
            CodesignError::Serde(s) => CliError::Usage(s.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}
