use outlying_core::{analyze_all, Analysis, AnalysisConfig, TemporalBivariateDataset};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    Analysis(#[from] outlying_core::Error),
    #[error("results were computed from dataset {expected}, but the loaded dataset hashes to {found}")]
    DatasetMismatch { expected: String, found: String },
}

/// A dataset together with the results computed from it.
///
/// Construction checks that the results hash-link to the dataset, so every
/// handler can index results by the dataset's instances and timesteps.
#[derive(Debug)]
pub struct Session {
    dataset: TemporalBivariateDataset,
    analysis: Analysis,
    config: AnalysisConfig,
    result_hash: String,
}

impl Session {
    /// Run the full analysis.
    pub fn compute(dataset: TemporalBivariateDataset, config: &AnalysisConfig) -> Result<Self, SessionError> {
        let config = config.clone().with_workers(config.resolved_workers());
        let analysis = analyze_all(&dataset, &config)?;
        Ok(Self::link(dataset, analysis, config))
    }

    /// Adopt precomputed results, which must come from `dataset`.
    pub fn from_results(
        dataset: TemporalBivariateDataset,
        analysis: Analysis,
        workers: usize,
    ) -> Result<Self, SessionError> {
        let found = dataset.content_hash();
        if analysis.dataset.sha256 != found {
            return Err(SessionError::DatasetMismatch {
                expected: analysis.dataset.sha256.clone(),
                found,
            });
        }
        let config = analysis.config.clone().with_workers(workers);
        Ok(Self::link(dataset, analysis, config))
    }

    fn link(dataset: TemporalBivariateDataset, analysis: Analysis, config: AnalysisConfig) -> Self {
        let result_hash = analysis.result_hash();
        Session {
            dataset,
            analysis,
            config,
            result_hash,
        }
    }

    pub fn dataset(&self) -> &TemporalBivariateDataset {
        &self.dataset
    }

    pub fn analysis(&self) -> &Analysis {
        &self.analysis
    }

    /// Parameters the results were computed with, plus the resolved worker count.
    pub fn config(&self) -> &AnalysisConfig {
        &self.config
    }

    pub fn result_hash(&self) -> &str {
        &self.result_hash
    }
}
