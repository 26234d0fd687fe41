use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::actitrac::ClusteringConfig;
use crate::classifier::ClassifierParams;
use crate::error::{Error, Result};
use crate::eventlog::{CohortPolicy, ColumnMap, MissingAttributes, Vocabulary, VocabularyPolicy};
use crate::overdx::FlagRule;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub events: Option<PathBuf>,
    pub attrs: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CohortConfig {
    pub min_distinct: usize,
    pub missing_attributes: MissingAttributes,
    /// Activity names accepted on ingest; the 13 sepsis treatments if unset.
    pub vocabulary: Option<Vec<String>>,
    pub strict_vocabulary: bool,
    pub columns: ColumnMap,
}

impl Default for CohortConfig {
    fn default() -> Self {
        let policy = CohortPolicy::default();
        CohortConfig {
            min_distinct: policy.min_distinct,
            missing_attributes: policy.missing_attributes,
            vocabulary: None,
            strict_vocabulary: false,
            columns: ColumnMap::default(),
        }
    }
}

impl CohortConfig {
    pub fn policy(&self) -> CohortPolicy {
        CohortPolicy {
            min_distinct: self.min_distinct,
            missing_attributes: self.missing_attributes,
        }
    }

    pub fn vocabulary(&self) -> Vocabulary {
        self.vocabulary
            .as_ref()
            .map_or_else(Vocabulary::sepsis, Vocabulary::new)
    }

    pub fn vocabulary_policy(&self) -> VocabularyPolicy {
        if self.strict_vocabulary {
            VocabularyPolicy::Strict
        } else {
            VocabularyPolicy::Extend
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsConfig {
    /// Yates correction on the mortality test.
    pub continuity_correction: bool,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig {
            continuity_correction: true,
        }
    }
}

/// Everything a run depends on besides its input files.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: PathsConfig,
    pub cohort: CohortConfig,
    pub clustering: ClusteringConfig,
    pub flag: FlagRule,
    pub stats: StatsConfig,
    pub classifier: ClassifierParams,
    pub synth: SynthConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cohort.min_distinct == 0 {
            return Err(Error::Config(
                "cohort.min_distinct must be at least 1".into(),
            ));
        }
        if self.classifier.folds < 2 {
            return Err(Error::Config("classifier.folds must be at least 2".into()));
        }
        self.clustering.validate()?;
        self.flag.validate()?;
        self.classifier.boost.validate()?;
        self.synth.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(RunConfig::from_json("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_json(r#"{"clustering": {"target": 0.9}}"#).unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");
        assert!(RunConfig::from_json(r#"{"colour": 1}"#).is_err());
    }

    #[test]
    fn values_are_validated() {
        assert!(RunConfig::from_json(r#"{"clustering": {"target_fitness": 1.5}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"flag": {"alpha": -0.1}}"#).is_err());
        let c = RunConfig::from_json(r#"{"flag": {"min_pos": 3}, "seed": 4}"#).unwrap();
        assert_eq!((c.flag.min_pos, c.seed), (3, 4));
    }

    #[test]
    fn round_trip() {
        let c = RunConfig::default();
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_json(&json).unwrap(), c);
    }
}
