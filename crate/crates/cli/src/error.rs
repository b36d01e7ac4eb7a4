use leadsynth::metrics::MetricError;
use leadsynth::record::RecordError;
use leadsynth::simgen::SimError;
use leadsynth::synth::SynthError;

/// Failure of a command, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable or malformed input; exit 2.
    Input(String),
    /// Lag models could not be trained; exit 3.
    Training(String),
    /// Synthesis or evaluation failed; exit 4.
    Synthesis(String),
    /// Anything else, including failed writes; exit 1.
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Training(_) => 3,
            CliError::Synthesis(_) => 4,
            CliError::Other(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let (kind, msg) = match self {
            CliError::Input(m) => ("input error", m),
            CliError::Training(m) => ("training error", m),
            CliError::Synthesis(m) => ("synthesis error", m),
            CliError::Other(m) => ("error", m),
        };
        write!(f, "{kind}: {msg}")
    }
}

impl From<RecordError> for CliError {
    fn from(e: RecordError) -> Self {
        match e {
            RecordError::Io(io) => CliError::Other(io.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidConfig(_) => CliError::Input(e.to_string()),
            other => CliError::Synthesis(other.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::InvalidConfig(_) | MetricError::Preprocess(_) | MetricError::Record(_) => {
                CliError::Input(e.to_string())
            }
            other => CliError::Synthesis(other.to_string()),
        }
    }
}
