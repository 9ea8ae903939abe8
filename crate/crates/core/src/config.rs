//! The full runtime configuration: ontology plus detector, calibration,
//! lexicon and template settings. Only `banks` and `tactics` are required.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agent::CalibrationParams;
use crate::detection::DetectionParams;
use crate::embedding::fnv1a64;
use crate::ontology::{ConfigError, OntologyDoc, SemanticKg};
use crate::reflection::{Lexicon, PromptTemplate, TemplateSet};

const DEFAULT_CONFIG: &str = include_str!("../../../config/default_tactics.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigDoc {
    #[serde(flatten)]
    pub ontology: OntologyDoc,
    #[serde(default)]
    pub detection: DetectionParams,
    #[serde(default)]
    pub calibration: CalibrationParams,
    #[serde(default)]
    pub lexicon: Lexicon,
    /// Replaces the built-in templates when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates: Option<Vec<PromptTemplate>>,
}

#[derive(Debug, Clone)]
pub struct Config {
    pub kg: Arc<SemanticKg>,
    pub detection: DetectionParams,
    pub calibration: CalibrationParams,
    pub lexicon: Lexicon,
    pub templates: TemplateSet,
    fingerprint: String,
}

impl Config {
    pub fn from_doc(doc: ConfigDoc) -> Result<Self, ConfigError> {
        let fingerprint = format!(
            "cfg-{:016x}",
            fnv1a64(serde_json::to_string(&doc).expect("config serializes").as_bytes())
        );
        let kg = Arc::new(SemanticKg::from_doc(doc.ontology)?);
        doc.calibration.validate()?;
        let lexicon = doc.lexicon.canonical()?;
        let templates = match doc.templates {
            Some(t) => TemplateSet::new(t, &lexicon, &kg)?,
            None => TemplateSet::builtin(&lexicon, &kg)?,
        };
        Ok(Self {
            kg,
            detection: doc.detection,
            calibration: doc.calibration,
            lexicon,
            templates,
            fingerprint,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let doc: ConfigDoc = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Syntax {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        Self::from_doc(doc)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Stable hash of the configuration document as loaded.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }
}

impl Default for Config {
    fn default() -> Self {
        Self::from_json(DEFAULT_CONFIG).expect("shipped config is valid")
    }
}
