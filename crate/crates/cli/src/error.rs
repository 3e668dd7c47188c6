use broomscan_core::analysis::AnalysisError;
use broomscan_core::dataset::DatasetError;
use broomscan_core::lstm::LstmError;
use broomscan_core::masking::MaskingError;
use broomscan_core::phenology::PhenologyError;
use broomscan_core::scene_store::SceneError;
use broomscan_core::synth::SynthError;
use broomscan_core::traits_mlp::MlpError;

/// Failure classes, each with its own process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("io error: {0}")]
    Io(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("stage {stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<CliError>,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
            CliError::Stage { source, .. } => source.exit_code(),
        }
    }

    pub fn in_stage(self, stage: &'static str) -> CliError {
        match self {
            CliError::Stage { .. } => self,
            other => CliError::Stage {
                stage,
                source: Box::new(other),
            },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> Self {
        match e {
            SceneError::Io { .. } => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<MlpError> for CliError {
    fn from(e: MlpError) -> Self {
        match e {
            MlpError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<PhenologyError> for CliError {
    fn from(e: PhenologyError) -> Self {
        match e {
            PhenologyError::Io(_) | PhenologyError::Network(_) => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<MaskingError> for CliError {
    fn from(e: MaskingError) -> Self {
        match e {
            MaskingError::Io(_) => CliError::Io(e.to_string()),
            MaskingError::VarianceTarget(_) => CliError::Config(e.to_string()),
            MaskingError::NonFinite | MaskingError::Eigen => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<LstmError> for CliError {
    fn from(e: LstmError) -> Self {
        match e {
            LstmError::Io(_) => CliError::Io(e.to_string()),
            LstmError::Config(_) => CliError::Config(e.to_string()),
            LstmError::Numeric(_) => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Io(_) => CliError::Io(e.to_string()),
            AnalysisError::NonFinite => CliError::Numeric(e.to_string()),
            AnalysisError::Repeats | AnalysisError::Grid(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        match e {
            DatasetError::Io { .. } => CliError::Io(e.to_string()),
            DatasetError::NonFinite { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::Config(_) => CliError::Config(e.to_string()),
            SynthError::Io { .. } => CliError::Io(e.to_string()),
            SynthError::Scene(s) => s.into(),
            SynthError::Mlp(m) => m.into(),
            SynthError::Phenology(p) => p.into(),
            SynthError::Dataset(d) => d.into(),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            CliError::Io(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_distinct_and_survive_context() {
        let codes = [
            CliError::Io(String::new()).exit_code(),
            CliError::Config(String::new()).exit_code(),
            CliError::Data(String::new()).exit_code(),
            CliError::Numeric(String::new()).exit_code(),
        ];
        assert_eq!(codes, [1, 2, 3, 4]);
        assert_eq!(CliError::Numeric("x".into()).in_stage("train").exit_code(), 4);
        assert_eq!(LstmError::Numeric("nan".into()).into_cli().exit_code(), 4);
    }

    trait IntoCli {
        fn into_cli(self) -> CliError;
    }

    impl<E: Into<CliError>> IntoCli for E {
        fn into_cli(self) -> CliError {
            self.into()
        }
    }
}
