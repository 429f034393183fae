//! Catalogue knowledge base: items, questions, properties and the
//! compatibility relation between them.
//!
//! A [`Catalog`] is built once from a [`CatalogDocument`] and is immutable
//! afterwards. Compatibility is stored as boolean masks: per item and property
//! (`δ(i, c)`) and per item and question (`δ(i, q)`).

mod document;
mod feasible;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use document::{
    AnswerDoc, CatalogDocument, ExpertTablesDoc, ItemDoc, JointEntryDoc, PropertyDoc, PropertyTableDoc,
    QuestionDoc, QuestionTableDoc, RelevanceDoc, RowDoc, Strategy,
};
pub use feasible::{FeasibleSet, JointState};

use crate::error::{Error, Result};
use crate::scalar::{row_sums_to_one, Prob};
use crate::states::{flat_index, state_count, unflatten, Product};

/// Default cap on enumerated joint property states.
pub const DEFAULT_STATE_CAP: usize = 1_000_000;

macro_rules! index_type {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub usize);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

index_type!(
    /// Position of an item in the catalogue.
    ItemIdx
);
index_type!(
    /// Position of a question in the catalogue.
    QuestionIdx
);
index_type!(
    /// Position of a property in the catalogue.
    PropertyIdx
);

#[derive(Clone, Debug)]
pub struct LoadOptions {
    pub allow_unknown_keys: bool,
    pub state_cap: usize,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            allow_unknown_keys: false,
            state_cap: DEFAULT_STATE_CAP,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Item {
    pub id: String,
    pub label: String,
    property_compat: Vec<Vec<bool>>,
    answer_compat: Vec<Vec<bool>>,
}

#[derive(Clone, Debug)]
pub struct Answer {
    pub id: String,
    pub label: String,
}

/// How a question's answers depend on its attached properties.
#[derive(Clone, Debug, PartialEq)]
pub enum QuestionLink {
    /// Latent clone: the answer equals the property value.
    Identity,
    /// Explicit `P(q | attached state)`, one row per joint state of the
    /// attached properties in mixed-radix order.
    Table(Vec<Vec<Prob>>),
}

#[derive(Clone, Debug)]
pub struct Question {
    pub id: String,
    pub prompt: String,
    pub answers: Vec<Answer>,
    pub properties: Vec<PropertyIdx>,
    pub strategy: Option<Strategy>,
    pub link: QuestionLink,
    relevant: Option<Vec<bool>>,
}

impl Question {
    pub fn answer_index(&self, id: &str) -> Option<usize> {
        self.answers.iter().position(|a| a.id == id)
    }

    pub fn has_relevance(&self) -> bool {
        self.relevant.is_some()
    }

    pub fn is_relevant(&self, item: ItemIdx) -> bool {
        self.relevant.as_ref().is_none_or(|mask| mask[item.0])
    }
}

#[derive(Clone, Debug)]
pub struct Property {
    pub id: String,
    pub values: Vec<String>,
    pub parents: Vec<PropertyIdx>,
    pub clone_of: Option<QuestionIdx>,
}

impl Property {
    pub fn value_index(&self, id: &str) -> Option<usize> {
        self.values.iter().position(|v| v == id)
    }
}

/// Expert judgements on the property layer, as written in the document.
#[derive(Clone, Debug, Default)]
pub struct ExpertTables {
    /// Per property: rows of `P(c | parents)` in mixed-radix parent order.
    pub property_rows: Vec<Option<Vec<Vec<Prob>>>>,
    /// Optional flat `P'(c)` over full joint states (value index per property).
    pub joint: Option<Vec<(Vec<usize>, Prob)>>,
}

/// Non-fatal findings of catalogue validation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    ItemFreeAnswer { question: String, answer: String },
    ZeroVersatility { item: String, question: String },
    ItemFreeValue { property: String, value: String },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::ItemFreeAnswer { question, answer } => {
                write!(f, "answer `{answer}` of question `{question}` is compatible with no item")
            }
            Warning::ZeroVersatility { item, question } => {
                write!(f, "item `{item}` is compatible with no answer of question `{question}`")
            }
            Warning::ItemFreeValue { property, value } => {
                write!(f, "value `{value}` of property `{property}` is compatible with no item")
            }
        }
    }
}

/// Target of a versatility query.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Question(QuestionIdx),
    Property(PropertyIdx),
}

#[derive(Clone, Debug)]
pub struct Catalog {
    items: Vec<Item>,
    questions: Vec<Question>,
    properties: Vec<Property>,
    expert: ExpertTables,
    topo_order: Vec<PropertyIdx>,
    warnings: Vec<Warning>,
    item_ids: HashMap<String, ItemIdx>,
    question_ids: HashMap<String, QuestionIdx>,
    property_ids: HashMap<String, PropertyIdx>,
    state_cap: usize,
    document: CatalogDocument,
}

impl Catalog {
    pub fn load(path: impl AsRef<Path>, options: &LoadOptions) -> Result<Catalog> {
        let text = std::fs::read_to_string(path)?;
        Catalog::from_json_str(&text, options)
    }

    pub fn from_json_str(text: &str, options: &LoadOptions) -> Result<Catalog> {
        let mut unknown = Vec::new();
        let mut de = serde_json::Deserializer::from_str(text);
        let doc: CatalogDocument = serde_ignored::deserialize(&mut de, |path| unknown.push(path.to_string()))
            .map_err(|e| Error::Parse {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            })?;
        de.end().map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if !options.allow_unknown_keys {
            if let Some(path) = unknown.into_iter().next() {
                return Err(Error::UnknownKey(path));
            }
        }
        Catalog::from_document(doc, options)
    }

    pub fn from_document(doc: CatalogDocument, options: &LoadOptions) -> Result<Catalog> {
        Builder::new(&doc, options)?.build(doc.clone())
    }

    pub fn document(&self) -> &CatalogDocument {
        &self.document
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn questions(&self) -> &[Question] {
        &self.questions
    }

    pub fn properties(&self) -> &[Property] {
        &self.properties
    }

    pub fn item(&self, idx: ItemIdx) -> &Item {
        &self.items[idx.0]
    }

    pub fn question(&self, idx: QuestionIdx) -> &Question {
        &self.questions[idx.0]
    }

    pub fn property(&self, idx: PropertyIdx) -> &Property {
        &self.properties[idx.0]
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    pub fn n_questions(&self) -> usize {
        self.questions.len()
    }

    pub fn item_indices(&self) -> impl Iterator<Item = ItemIdx> {
        (0..self.items.len()).map(ItemIdx)
    }

    pub fn question_indices(&self) -> impl Iterator<Item = QuestionIdx> {
        (0..self.questions.len()).map(QuestionIdx)
    }

    pub fn property_indices(&self) -> impl Iterator<Item = PropertyIdx> {
        (0..self.properties.len()).map(PropertyIdx)
    }

    pub fn item_index(&self, id: &str) -> Result<ItemIdx> {
        self.item_ids.get(id).copied().ok_or_else(|| Error::Unknown {
            kind: "item",
            id: id.to_string(),
        })
    }

    pub fn question_index(&self, id: &str) -> Result<QuestionIdx> {
        self.question_ids.get(id).copied().ok_or_else(|| Error::Unknown {
            kind: "question",
            id: id.to_string(),
        })
    }

    pub fn property_index(&self, id: &str) -> Result<PropertyIdx> {
        self.property_ids.get(id).copied().ok_or_else(|| Error::Unknown {
            kind: "property",
            id: id.to_string(),
        })
    }

    /// Resolves `(question id, answer id)` to indices.
    pub fn answer_ref(&self, question: &str, answer: &str) -> Result<(QuestionIdx, usize)> {
        let q = self.question_index(question)?;
        let a = self.questions[q.0].answer_index(answer).ok_or_else(|| Error::UnknownAnswer {
            question: question.to_string(),
            answer: answer.to_string(),
        })?;
        Ok((q, a))
    }

    pub fn expert(&self) -> &ExpertTables {
        &self.expert
    }

    /// Properties ordered so that parents precede children.
    pub fn topo_order(&self) -> &[PropertyIdx] {
        &self.topo_order
    }

    pub fn warnings(&self) -> &[Warning] {
        &self.warnings
    }

    pub fn state_cap(&self) -> usize {
        self.state_cap
    }

    /// `δ(i, q)`.
    pub fn answer_compatible(&self, item: ItemIdx, question: QuestionIdx, answer: usize) -> bool {
        self.items[item.0].answer_compat[question.0][answer]
    }

    /// `δ(i, c)`.
    pub fn value_compatible(&self, item: ItemIdx, property: PropertyIdx, value: usize) -> bool {
        self.items[item.0].property_compat[property.0][value]
    }

    /// Value indices of `property` compatible with `item`.
    pub fn compatible_values(&self, item: ItemIdx, property: PropertyIdx) -> Vec<usize> {
        mask_indices(&self.items[item.0].property_compat[property.0])
    }

    /// `δ(i, c)` for a full joint state: the product of per-property indicators.
    pub fn state_compatible(&self, item: ItemIdx, state: &[usize]) -> bool {
        let compat = &self.items[item.0].property_compat;
        state.iter().zip(compat).all(|(&v, mask)| mask[v])
    }

    /// `δ(i, c_S)` for a partial assignment over `props`.
    pub fn partial_compatible(&self, item: ItemIdx, props: &[PropertyIdx], values: &[usize]) -> bool {
        props
            .iter()
            .zip(values)
            .all(|(p, &v)| self.items[item.0].property_compat[p.0][v])
    }

    /// Number of answers (or values) compatible with `item`.
    pub fn versatility(&self, item: ItemIdx, target: Target) -> usize {
        let item = &self.items[item.0];
        let mask = match target {
            Target::Question(q) => &item.answer_compat[q.0],
            Target::Property(p) => &item.property_compat[p.0],
        };
        mask.iter().filter(|&&b| b).count()
    }

    /// Versatility by string ids.
    pub fn versatility_by_id(&self, item: &str, target: &str) -> Result<usize> {
        let item = self.item_index(item)?;
        let target = match self.question_ids.get(target) {
            Some(&q) => Target::Question(q),
            None => Target::Property(self.property_index(target)?),
        };
        Ok(self.versatility(item, target))
    }

    /// `N(Q)`: number of compatible (item, answer) pairs.
    pub fn compatible_pairs(&self, question: QuestionIdx) -> usize {
        self.item_indices()
            .map(|i| self.versatility(i, Target::Question(question)))
            .sum()
    }

    /// Arity of each property, in catalogue order.
    pub fn radices(&self) -> Vec<usize> {
        self.properties.iter().map(|p| p.values.len()).collect()
    }

    pub fn radices_of(&self, props: &[PropertyIdx]) -> Vec<usize> {
        props.iter().map(|p| self.properties[p.0].values.len()).collect()
    }

    /// Enumerates `J*`, the joint property states compatible with at least one
    /// item, together with `N(c)`.
    pub fn feasible_joint_states(&self) -> Result<FeasibleSet> {
        FeasibleSet::enumerate(self)
    }

    /// Formats a partial assignment like `{C2=wedding}` for diagnostics.
    pub fn describe_state(&self, props: &[PropertyIdx], values: &[usize]) -> String {
        let parts: Vec<String> = props
            .iter()
            .zip(values)
            .map(|(p, &v)| {
                let prop = &self.properties[p.0];
                format!("{}={}", prop.id, prop.values[v])
            })
            .collect();
        format!("{{{}}}", parts.join(", "))
    }
}

fn mask_indices(mask: &[bool]) -> Vec<usize> {
    mask.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
}

struct Builder<'a> {
    doc: &'a CatalogDocument,
    options: &'a LoadOptions,
    question_ids: HashMap<String, QuestionIdx>,
    property_ids: HashMap<String, PropertyIdx>,
    properties: Vec<Property>,
    attached: Vec<Vec<PropertyIdx>>,
}

impl<'a> Builder<'a> {
    fn new(doc: &'a CatalogDocument, options: &'a LoadOptions) -> Result<Self> {
        if doc.items.is_empty() {
            return Err(Error::invalid("items", "catalogue must contain ≥1 item"));
        }
        let mut question_ids = HashMap::new();
        for (k, q) in doc.questions.iter().enumerate() {
            let loc = format!("questions[{k}]");
            if question_ids.insert(q.id.clone(), QuestionIdx(k)).is_some() {
                return Err(Error::invalid(loc, format!("duplicate question id `{}`", q.id)));
            }
            if q.answers.len() < 2 {
                return Err(Error::invalid(loc, format!("question `{}` needs at least 2 answers", q.id)));
            }
            let mut seen = HashSet::new();
            for a in &q.answers {
                if !seen.insert(a.id.as_str()) {
                    return Err(Error::invalid(loc, format!("duplicate answer id `{}`", a.id)));
                }
            }
        }
        Ok(Builder {
            doc,
            options,
            question_ids,
            property_ids: HashMap::new(),
            properties: Vec::new(),
            attached: Vec::new(),
        })
    }

    fn question_ref(&self, location: &str, id: &str) -> Result<QuestionIdx> {
        self.question_ids.get(id).copied().ok_or_else(|| Error::Dangling {
            location: location.to_string(),
            kind: "question",
            id: id.to_string(),
        })
    }

    fn property_ref(&self, location: &str, id: &str) -> Result<PropertyIdx> {
        self.property_ids.get(id).copied().ok_or_else(|| Error::Dangling {
            location: location.to_string(),
            kind: "property",
            id: id.to_string(),
        })
    }

    fn value_ref(&self, location: &str, prop: PropertyIdx, value: &str) -> Result<usize> {
        self.properties[prop.0].value_index(value).ok_or_else(|| Error::Dangling {
            location: location.to_string(),
            kind: "property value",
            id: format!("{}={}", self.properties[prop.0].id, value),
        })
    }

    fn build_properties(&mut self) -> Result<()> {
        let doc = self.doc;
        for (k, p) in doc.properties.iter().enumerate() {
            let loc = format!("properties[{k}]");
            if self.property_ids.contains_key(&p.id) {
                return Err(Error::invalid(loc, format!("duplicate property id `{}`", p.id)));
            }
            let clone_of = match &p.clone_of {
                Some(q) => Some(self.question_ref(&format!("{loc}.clone_of"), q)?),
                None => None,
            };
            let values = match clone_of {
                Some(q) => {
                    let answers: Vec<String> = doc.questions[q.0].answers.iter().map(|a| a.id.clone()).collect();
                    if !p.values.is_empty() && p.values != answers {
                        return Err(Error::invalid(
                            loc,
                            "a latent clone takes its values from the question's answers",
                        ));
                    }
                    answers
                }
                None => p.values.clone(),
            };
            if values.is_empty() {
                return Err(Error::invalid(loc, format!("property `{}` has no values", p.id)));
            }
            let mut seen = HashSet::new();
            for v in &values {
                if !seen.insert(v.as_str()) {
                    return Err(Error::invalid(loc, format!("duplicate value `{v}`")));
                }
            }
            self.property_ids.insert(p.id.clone(), PropertyIdx(k));
            self.properties.push(Property {
                id: p.id.clone(),
                values,
                parents: Vec::new(),
                clone_of,
            });
        }

        // Questions without declared properties get a latent clone.
        for (k, q) in doc.questions.iter().enumerate() {
            let loc = format!("questions[{k}].properties");
            if !q.properties.is_empty() {
                let mut props = Vec::new();
                for id in &q.properties {
                    let p = self.property_ref(&loc, id)?;
                    if props.contains(&p) {
                        return Err(Error::invalid(loc, format!("property `{id}` attached twice")));
                    }
                    props.push(p);
                }
                self.attached.push(props);
                continue;
            }
            let existing = self
                .properties
                .iter()
                .position(|p| p.clone_of == Some(QuestionIdx(k)));
            let idx = match existing {
                Some(p) => PropertyIdx(p),
                None => {
                    if self.property_ids.contains_key(&q.id) {
                        return Err(Error::invalid(
                            loc,
                            format!("cannot create latent clone `{}`: a property with that id exists", q.id),
                        ));
                    }
                    let idx = PropertyIdx(self.properties.len());
                    self.property_ids.insert(q.id.clone(), idx);
                    self.properties.push(Property {
                        id: q.id.clone(),
                        values: q.answers.iter().map(|a| a.id.clone()).collect(),
                        parents: Vec::new(),
                        clone_of: Some(QuestionIdx(k)),
                    });
                    idx
                }
            };
            self.attached.push(vec![idx]);
        }

        for (k, p) in doc.properties.iter().enumerate() {
            let loc = format!("properties[{k}].parents");
            let mut parents = Vec::new();
            for id in &p.parents {
                let parent = self.property_ref(&loc, id)?;
                if parent.0 == k || parents.contains(&parent) {
                    return Err(Error::invalid(loc, format!("invalid parent `{id}`")));
                }
                parents.push(parent);
            }
            self.properties[k].parents = parents;
        }
        Ok(())
    }

    fn topo_order(&self) -> Result<Vec<PropertyIdx>> {
        let n = self.properties.len();
        let mut indegree: Vec<usize> = self.properties.iter().map(|p| p.parents.len()).collect();
        let mut children = vec![Vec::new(); n];
        for (k, p) in self.properties.iter().enumerate() {
            for parent in &p.parents {
                children[parent.0].push(k);
            }
        }
        let mut ready: Vec<usize> = (0..n).filter(|&k| indegree[k] == 0).rev().collect();
        let mut order = Vec::with_capacity(n);
        while let Some(k) = ready.pop() {
            order.push(PropertyIdx(k));
            for &c in children[k].iter().rev() {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.push(c);
                }
            }
        }
        if order.len() < n {
            let stuck = (0..n).find(|&k| indegree[k] > 0).expect("cycle member");
            return Err(Error::Cycle(self.properties[stuck].id.clone()));
        }
        Ok(order)
    }

    fn parse_rows(
        &self,
        location: &str,
        table: &str,
        conditioning: &[PropertyIdx],
        width: usize,
        rows: &[RowDoc],
    ) -> Result<Vec<Vec<Prob>>> {
        let radices: Vec<usize> = conditioning.iter().map(|p| self.properties[p.0].values.len()).collect();
        let total = state_count(&radices).ok_or_else(|| Error::MalformedTable {
            table: table.to_string(),
            message: "too many conditioning states".into(),
        })?;
        let mut out: Vec<Option<Vec<Prob>>> = vec![None; total];
        for (r, row) in rows.iter().enumerate() {
            let loc = format!("{location}.rows[{r}]");
            if row.given.len() != conditioning.len() {
                return Err(Error::MalformedTable {
                    table: table.to_string(),
                    message: format!("{loc}: `given` must assign exactly the conditioning properties"),
                });
            }
            let mut digits = Vec::with_capacity(conditioning.len());
            for p in conditioning {
                let id = &self.properties[p.0].id;
                let value = row.given.get(id).ok_or_else(|| Error::MalformedTable {
                    table: table.to_string(),
                    message: format!("{loc}: missing `given.{id}`"),
                })?;
                digits.push(self.value_ref(&format!("{loc}.given.{id}"), *p, value)?);
            }
            if row.probs.len() != width {
                return Err(Error::MalformedTable {
                    table: table.to_string(),
                    message: format!("{loc}: expected {width} probabilities, got {}", row.probs.len()),
                });
            }
            if row.probs.iter().any(Prob::is_negative) {
                return Err(Error::MalformedTable {
                    table: table.to_string(),
                    message: format!("{loc}: negative probability"),
                });
            }
            if !row_sums_to_one(&row.probs) {
                return Err(Error::MalformedTable {
                    table: table.to_string(),
                    message: format!("{loc}: row does not sum to 1"),
                });
            }
            let slot = &mut out[flat_index(&digits, &radices)];
            if slot.is_some() {
                return Err(Error::MalformedTable {
                    table: table.to_string(),
                    message: format!("{loc}: duplicate row"),
                });
            }
            *slot = Some(row.probs.clone());
        }
        out.into_iter()
            .enumerate()
            .map(|(k, row)| {
                row.ok_or_else(|| {
                    let digits = unflatten(k, &radices);
                    let parts: Vec<String> = conditioning
                        .iter()
                        .zip(&digits)
                        .map(|(p, &v)| format!("{}={}", self.properties[p.0].id, self.properties[p.0].values[v]))
                        .collect();
                    Error::MalformedTable {
                        table: table.to_string(),
                        message: format!("missing row for {{{}}}", parts.join(", ")),
                    }
                })
            })
            .collect()
    }

    fn build(mut self, document: CatalogDocument) -> Result<Catalog> {
        let doc = self.doc;
        self.build_properties()?;
        let topo_order = self.topo_order()?;

        // Question links.
        let mut question_tables: HashMap<QuestionIdx, Vec<Vec<Prob>>> = HashMap::new();
        for (t, table) in doc.expert_tables.question_tables.iter().enumerate() {
            let loc = format!("expert_tables.question_tables[{t}]");
            let q = self.question_ref(&format!("{loc}.question"), &table.question)?;
            if question_tables.contains_key(&q) {
                return Err(Error::invalid(loc, format!("duplicate table for `{}`", table.question)));
            }
            let rows = self.parse_rows(
                &loc,
                &table.question,
                &self.attached[q.0],
                doc.questions[q.0].answers.len(),
                &table.rows,
            )?;
            question_tables.insert(q, rows);
        }

        let mut links = Vec::with_capacity(doc.questions.len());
        for (k, q) in doc.questions.iter().enumerate() {
            let link = match question_tables.remove(&QuestionIdx(k)) {
                Some(rows) => QuestionLink::Table(rows),
                None => {
                    let attached = &self.attached[k];
                    let answers: Vec<&str> = q.answers.iter().map(|a| a.id.as_str()).collect();
                    let identity = attached.len() == 1 && {
                        let prop = &self.properties[attached[0].0];
                        prop.clone_of == Some(QuestionIdx(k))
                            || prop.values.iter().map(String::as_str).eq(answers.iter().copied())
                    };
                    if !identity {
                        return Err(Error::MalformedTable {
                            table: q.id.clone(),
                            message: "question is not a latent clone and needs an entry in expert_tables.question_tables"
                                .into(),
                        });
                    }
                    QuestionLink::Identity
                }
            };
            links.push(link);
        }

        // Property tables.
        let mut property_rows: Vec<Option<Vec<Vec<Prob>>>> = vec![None; self.properties.len()];
        for (t, table) in doc.expert_tables.property_tables.iter().enumerate() {
            let loc = format!("expert_tables.property_tables[{t}]");
            let p = self.property_ref(&format!("{loc}.property"), &table.property)?;
            if property_rows[p.0].is_some() {
                return Err(Error::invalid(loc, format!("duplicate table for `{}`", table.property)));
            }
            let parents = self.properties[p.0].parents.clone();
            let width = self.properties[p.0].values.len();
            property_rows[p.0] = Some(self.parse_rows(&loc, &table.property, &parents, width, &table.rows)?);
        }

        let joint = match &doc.expert_tables.joint {
            None => None,
            Some(entries) => {
                if !doc.expert_tables.property_tables.is_empty() {
                    return Err(Error::invalid(
                        "expert_tables",
                        "give either a flat `joint` or factorized `property_tables`, not both",
                    ));
                }
                let mut seen = HashSet::new();
                let mut out = Vec::with_capacity(entries.len());
                for (e, entry) in entries.iter().enumerate() {
                    let loc = format!("expert_tables.joint[{e}]");
                    if entry.state.len() != self.properties.len() {
                        return Err(Error::invalid(loc, "joint states must assign every property"));
                    }
                    let mut state = Vec::with_capacity(self.properties.len());
                    for (k, prop) in self.properties.iter().enumerate() {
                        let value = entry.state.get(&prop.id).ok_or_else(|| {
                            Error::invalid(loc.clone(), format!("missing property `{}`", prop.id))
                        })?;
                        state.push(self.value_ref(&format!("{loc}.state.{}", prop.id), PropertyIdx(k), value)?);
                    }
                    if entry.p.is_negative() {
                        return Err(Error::invalid(loc, "negative probability"));
                    }
                    if !seen.insert(state.clone()) {
                        return Err(Error::invalid(loc, "duplicate joint state"));
                    }
                    out.push((state, entry.p.clone()));
                }
                Some(out)
            }
        };

        // Items.
        let mut item_ids = HashMap::new();
        let mut items = Vec::with_capacity(doc.items.len());
        for (k, it) in doc.items.iter().enumerate() {
            let loc = format!("items[{k}]");
            if item_ids.insert(it.id.clone(), ItemIdx(k)).is_some() {
                return Err(Error::invalid(loc, format!("duplicate item id `{}`", it.id)));
            }

            let mut explicit_answers: BTreeMap<QuestionIdx, Vec<bool>> = BTreeMap::new();
            for (qid, answers) in &it.answers {
                let aloc = format!("{loc}.answers.{qid}");
                // An empty list is legal: the item has zero versatility for `q`.
                let q = self.question_ref(&aloc, qid)?;
                let mut mask = vec![false; doc.questions[q.0].answers.len()];
                for a in answers {
                    let ai = doc.questions[q.0]
                        .answers
                        .iter()
                        .position(|x| &x.id == a)
                        .ok_or_else(|| Error::Dangling {
                            location: aloc.clone(),
                            kind: "answer",
                            id: a.clone(),
                        })?;
                    mask[ai] = true;
                }
                explicit_answers.insert(q, mask);
            }

            let mut property_compat: Vec<Vec<bool>> =
                self.properties.iter().map(|p| vec![true; p.values.len()]).collect();
            for (pid, values) in &it.properties {
                let ploc = format!("{loc}.properties.{pid}");
                let p = self.property_ref(&ploc, pid)?;
                if values.is_empty() {
                    return Err(Error::invalid(ploc, "compatible value set must be non-empty"));
                }
                let mut mask = vec![false; self.properties[p.0].values.len()];
                for v in values {
                    mask[self.value_ref(&ploc, p, v)?] = true;
                }
                property_compat[p.0] = mask;
            }
            for (p, prop) in self.properties.iter().enumerate() {
                if it.properties.contains_key(&prop.id) {
                    continue;
                }
                if let Some(mask) = prop.clone_of.and_then(|q| explicit_answers.get(&q)) {
                    property_compat[p] = mask.clone();
                }
            }

            let mut answer_compat = Vec::with_capacity(doc.questions.len());
            for (qk, q) in doc.questions.iter().enumerate() {
                if let Some(mask) = explicit_answers.get(&QuestionIdx(qk)) {
                    answer_compat.push(mask.clone());
                    continue;
                }
                let attached = &self.attached[qk];
                let mask = match &links[qk] {
                    QuestionLink::Identity => property_compat[attached[0].0].clone(),
                    QuestionLink::Table(rows) => {
                        let radices: Vec<usize> =
                            attached.iter().map(|p| self.properties[p.0].values.len()).collect();
                        let choices: Vec<Vec<usize>> =
                            attached.iter().map(|p| mask_indices(&property_compat[p.0])).collect();
                        let mut mask = vec![false; q.answers.len()];
                        for state in Product::new(&choices) {
                            let row = &rows[flat_index(&state, &radices)];
                            for (a, p) in row.iter().enumerate() {
                                if !p.is_zero() {
                                    mask[a] = true;
                                }
                            }
                        }
                        mask
                    }
                };
                answer_compat.push(mask);
            }

            items.push(Item {
                id: it.id.clone(),
                label: it.label.clone(),
                property_compat,
                answer_compat,
            });
        }

        // Questions.
        let mut questions = Vec::with_capacity(doc.questions.len());
        for ((k, q), link) in doc.questions.iter().enumerate().zip(links) {
            let loc = format!("questions[{k}]");
            let mut relevant: Option<Vec<bool>> = None;
            if let Some(ids) = &q.relevant_items {
                let mut mask = vec![false; items.len()];
                for id in ids {
                    let i = item_ids.get(id).ok_or_else(|| Error::Dangling {
                        location: format!("{loc}.relevant_items"),
                        kind: "item",
                        id: id.clone(),
                    })?;
                    mask[i.0] = true;
                }
                relevant = Some(mask);
            }
            if let Some(rel) = &q.relevant_when {
                let rloc = format!("{loc}.relevant_when");
                let p = self.property_ref(&rloc, &rel.property)?;
                let values = rel
                    .values
                    .iter()
                    .map(|v| self.value_ref(&rloc, p, v))
                    .collect::<Result<Vec<_>>>()?;
                let mask: Vec<bool> = items
                    .iter()
                    .map(|it| values.iter().any(|&v| it.property_compat[p.0][v]))
                    .collect();
                relevant = Some(match relevant {
                    Some(prev) => prev.iter().zip(&mask).map(|(a, b)| *a || *b).collect(),
                    None => mask,
                });
            }
            questions.push(Question {
                id: q.id.clone(),
                prompt: q.prompt.clone(),
                answers: q
                    .answers
                    .iter()
                    .map(|a| Answer {
                        id: a.id.clone(),
                        label: a.label.clone(),
                    })
                    .collect(),
                properties: self.attached[k].clone(),
                strategy: q.strategy,
                link,
                relevant,
            });
        }

        let warnings = collect_warnings(&items, &questions, &self.properties);

        Ok(Catalog {
            items,
            questions,
            properties: self.properties,
            expert: ExpertTables { property_rows, joint },
            topo_order,
            warnings,
            item_ids,
            question_ids: self.question_ids,
            property_ids: self.property_ids,
            state_cap: self.options.state_cap,
            document,
        })
    }
}

fn collect_warnings(items: &[Item], questions: &[Question], properties: &[Property]) -> Vec<Warning> {
    let mut warnings = Vec::new();
    for (qk, q) in questions.iter().enumerate() {
        for (a, answer) in q.answers.iter().enumerate() {
            if !items.iter().any(|it| it.answer_compat[qk][a]) {
                warnings.push(Warning::ItemFreeAnswer {
                    question: q.id.clone(),
                    answer: answer.id.clone(),
                });
            }
        }
    }
    for it in items {
        for (qk, q) in questions.iter().enumerate() {
            if !it.answer_compat[qk].iter().any(|&b| b) {
                warnings.push(Warning::ZeroVersatility {
                    item: it.id.clone(),
                    question: q.id.clone(),
                });
            }
        }
    }
    for (pk, p) in properties.iter().enumerate() {
        for (v, value) in p.values.iter().enumerate() {
            if !items.iter().any(|it| it.property_compat[pk][v]) {
                warnings.push(Warning::ItemFreeValue {
                    property: p.id.clone(),
                    value: value.clone(),
                });
            }
        }
    }
    warnings
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::toy;

    fn toy_catalog() -> Catalog {
        Catalog::from_json_str(toy::TOY_CATALOG, &LoadOptions::default()).unwrap()
    }

    #[test]
    fn loads_toy_catalogue() {
        let c = toy_catalog();
        assert_eq!(c.n_items(), 3);
        assert_eq!(c.n_questions(), 2);
        assert_eq!(c.properties().len(), 2);
        assert_eq!(c.question(QuestionIdx(0)).link, QuestionLink::Identity);
    }

    #[test]
    fn toy_versatilities() {
        let c = toy_catalog();
        assert_eq!(c.versatility_by_id("i1", "Q2").unwrap(), 4);
        assert_eq!(c.versatility_by_id("i2", "Q2").unwrap(), 2);
        assert_eq!(c.versatility_by_id("i3", "Q1").unwrap(), 1);
        assert_eq!(c.versatility_by_id("i3", "C2").unwrap(), 2);
        assert_eq!(c.compatible_pairs(QuestionIdx(1)), 8);
        assert!(c.versatility_by_id("i9", "Q1").is_err());
    }

    #[test]
    fn musician_answer_is_reported_item_free() {
        let c = toy_catalog();
        assert!(c.warnings().contains(&Warning::ItemFreeAnswer {
            question: "Q1".into(),
            answer: "musician".into(),
        }));
    }

    #[test]
    fn empty_item_list_is_rejected() {
        let err = Catalog::from_json_str(r#"{"items": [], "questions": []}"#, &LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("catalogue must contain ≥1 item"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected_unless_allowed() {
        let text = r#"{"items": [{"id": "a", "colour": "red"}], "questions": []}"#;
        let err = Catalog::from_json_str(text, &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::UnknownKey(ref p) if p.contains("colour")), "{err}");
        let opts = LoadOptions {
            allow_unknown_keys: true,
            ..LoadOptions::default()
        };
        assert!(Catalog::from_json_str(text, &opts).is_ok());
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = Catalog::from_json_str("{\n  \"items\": [,]\n}", &LoadOptions::default()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn dangling_references_are_located() {
        let text = r#"{"items": [{"id": "a", "properties": {"nope": ["x"]}}],
                       "questions": [{"id": "Q", "answers": [{"id": "y"}, {"id": "n"}]}]}"#;
        let err = Catalog::from_json_str(text, &LoadOptions::default()).unwrap_err();
        match err {
            Error::Dangling { location, id, .. } => {
                assert_eq!(location, "items[0].properties.nope");
                assert_eq!(id, "nope");
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn cyclic_property_graph_is_rejected() {
        let text = r#"{"items": [{"id": "a"}], "questions": [],
            "properties": [{"id": "A", "values": ["x"], "parents": ["B"]},
                           {"id": "B", "values": ["y"], "parents": ["A"]}]}"#;
        let err = Catalog::from_json_str(text, &LoadOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Cycle(_)), "{err}");
    }

    #[test]
    fn question_needs_two_answers() {
        let text = r#"{"items": [{"id": "a"}], "questions": [{"id": "Q", "answers": [{"id": "y"}]}]}"#;
        assert!(Catalog::from_json_str(text, &LoadOptions::default()).is_err());
    }

    #[test]
    fn soft_table_derives_answer_compatibility() {
        let text = r#"{
          "items": [{"id": "band", "properties": {"kind": ["band"]}},
                    {"id": "dj", "properties": {"kind": ["dj"]}}],
          "questions": [{"id": "Q", "answers": [{"id": "band"}, {"id": "musician"}, {"id": "dj"}],
                         "properties": ["kind"]}],
          "properties": [{"id": "kind", "values": ["band", "dj"]}],
          "expert_tables": {"question_tables": [{"question": "Q", "rows": [
              {"given": {"kind": "band"}, "probs": [0.7, 0.3, 0]},
              {"given": {"kind": "dj"}, "probs": [0, 0, 1]}]}]}
        }"#;
        let c = Catalog::from_json_str(text, &LoadOptions::default()).unwrap();
        let band = c.item_index("band").unwrap();
        assert!(c.answer_compatible(band, QuestionIdx(0), 1));
        assert!(!c.answer_compatible(band, QuestionIdx(0), 2));
        assert_eq!(c.versatility(band, Target::Question(QuestionIdx(0))), 2);
    }

    #[test]
    fn relevance_marker_resolves_to_items() {
        let text = r#"{
          "items": [{"id": "a", "properties": {"kind": ["musician"]}}, {"id": "b", "properties": {"kind": ["dj"]}}],
          "questions": [{"id": "instrument", "answers": [{"id": "guitar"}, {"id": "piano"}],
                         "relevant_when": {"property": "kind", "values": ["musician"]}}],
          "properties": [{"id": "kind", "values": ["musician", "dj"]}]
        }"#;
        let c = Catalog::from_json_str(text, &LoadOptions::default()).unwrap();
        let q = c.question(QuestionIdx(0));
        assert!(q.is_relevant(ItemIdx(0)));
        assert!(!q.is_relevant(ItemIdx(1)));
    }
}
