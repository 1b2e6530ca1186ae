use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("iqr factor must be positive and finite, got {0}")]
    IqrFactor(f64),
    #[error("bin bracket must satisfy 1 <= min <= max, got [{min}, {max}]")]
    BinBracket { min: usize, max: usize },
    #[error("top-k must be at least 1")]
    TopK,
}

/// How per-timestep contributions fold into an instance's overall score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RankAggregate {
    #[default]
    Max,
    Sum,
}

impl std::fmt::Display for RankAggregate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RankAggregate::Max => "max",
            RankAggregate::Sum => "sum",
        })
    }
}

impl std::str::FromStr for RankAggregate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "max" => Ok(RankAggregate::Max),
            "sum" => Ok(RankAggregate::Sum),
            other => Err(format!("unknown aggregate `{other}` (expected max or sum)")),
        }
    }
}

/// Analysis parameters.
///
/// `workers` only controls scheduling and is not part of the serialized
/// result, so results are comparable across worker counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    /// Multiplier on the IQR for the upper fence. 3.0 gives "extreme" fences.
    pub iqr_factor: f64,
    pub bin_min: usize,
    pub bin_max: usize,
    /// Worker pool size; 0 resolves to the detected hardware concurrency.
    #[serde(skip)]
    pub workers: usize,
    pub rank_agg: RankAggregate,
    pub top_k: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            iqr_factor: 1.5,
            bin_min: 50,
            bin_max: 250,
            workers: 0,
            rank_agg: RankAggregate::Max,
            top_k: 5,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.iqr_factor.is_finite() && self.iqr_factor > 0.0) {
            return Err(ConfigError::IqrFactor(self.iqr_factor));
        }
        if self.bin_min < 1 || self.bin_min > self.bin_max {
            return Err(ConfigError::BinBracket {
                min: self.bin_min,
                max: self.bin_max,
            });
        }
        if self.top_k < 1 {
            return Err(ConfigError::TopK);
        }
        Ok(())
    }

    /// Worker count with `0` replaced by the hardware concurrency.
    pub fn resolved_workers(&self) -> usize {
        if self.workers == 0 {
            hardware_concurrency()
        } else {
            self.workers
        }
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }
}

pub fn hardware_concurrency() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}
