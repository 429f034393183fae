//! Serde schema of the catalog document.
//!
//! ```json
//! {
//!   "items": [{"id": "i1", "label": "DJ", "properties": {"type": ["dj"]}}],
//!   "questions": [{"id": "Q1", "prompt": "...", "answers": [{"id": "dj"}, {"id": "band"}],
//!                  "properties": ["type"], "strategy": "ujs"}],
//!   "properties": [{"id": "type", "clone_of": "Q1", "parents": ["event"]}],
//!   "expert_tables": {
//!     "property_tables": [{"property": "type", "rows": [{"given": {"event": "wedding"},
//!                          "probs": ["1/3", "1/6", "1/3", "1/6"]}]}],
//!     "question_tables": [{"question": "Q1", "rows": [{"given": {"type": "band"}, "probs": [0.7, 0.3]}]}],
//!     "joint": [{"state": {"type": "dj", "event": "wedding"}, "p": "1/8"}]
//!   }
//! }
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::scalar::Prob;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CatalogDocument {
    pub items: Vec<ItemDoc>,
    pub questions: Vec<QuestionDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub properties: Vec<PropertyDoc>,
    #[serde(default, skip_serializing_if = "ExpertTablesDoc::is_empty")]
    pub expert_tables: ExpertTablesDoc,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ItemDoc {
    pub id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub label: String,
    /// Compatible values per property. Omitted properties are unconstrained.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub properties: BTreeMap<String, Vec<String>>,
    /// Compatible answers per question, overriding the property-derived ones.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub answers: BTreeMap<String, Vec<String>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Uniform joint over compatible (item, answer) pairs.
    Ujs,
    /// Uniform prior over items, mass spread over each item's compatible answers.
    Ups,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QuestionDoc {
    pub id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub prompt: String,
    pub answers: Vec<AnswerDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub properties: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevant_items: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevant_when: Option<RelevanceDoc>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AnswerDoc {
    pub id: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub label: String,
}

/// Marks a question as relevant only to items compatible with one of `values`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RelevanceDoc {
    pub property: String,
    pub values: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PropertyDoc {
    pub id: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<String>,
    /// Latent clone of a question: values mirror its answers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clone_of: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parents: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExpertTablesDoc {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub property_tables: Vec<PropertyTableDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub question_tables: Vec<QuestionTableDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<Vec<JointEntryDoc>>,
}

impl ExpertTablesDoc {
    pub fn is_empty(&self) -> bool {
        self.property_tables.is_empty() && self.question_tables.is_empty() && self.joint.is_none()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PropertyTableDoc {
    pub property: String,
    pub rows: Vec<RowDoc>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QuestionTableDoc {
    pub question: String,
    pub rows: Vec<RowDoc>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RowDoc {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub given: BTreeMap<String, String>,
    pub probs: Vec<Prob>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointEntryDoc {
    pub state: BTreeMap<String, String>,
    pub p: Prob,
}
