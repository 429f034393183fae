//! Runtime model shared by inference, question selection and the service.
//!
//! Both model families are flattened to a list of atoms. In the
//! property-free model an atom is an item; in the property model it is a
//! feasible `(item, joint state)` pair. Answers are conditionally
//! independent given an atom, so the posterior over atoms is a product of
//! per-answer likelihoods and the item posterior is its marginal.

use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ItemIdx, QuestionIdx, QuestionLink, Strategy};
use crate::elicitation::{elicit, ElicitOptions, ElicitedModel};
use crate::error::{Error, Result};
use crate::property_net::{item_prior_from_properties, PropertyModel};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelChoice {
    /// Property model when the catalogue declares anything beyond latent
    /// clones, property-free otherwise.
    #[default]
    Auto,
    PropertyFree,
    Properties,
}

impl FromStr for ModelChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(ModelChoice::Auto),
            "property-free" => Ok(ModelChoice::PropertyFree),
            "properties" => Ok(ModelChoice::Properties),
            other => Err(Error::invalid("model", format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Clone, Debug)]
pub enum ModelKind<T = f64> {
    PropertyFree(ElicitedModel<T>),
    Properties(PropertyModel<T>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Atom {
    pub item: ItemIdx,
    /// Index into the feasible set, for property models.
    pub state: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Model<T = f64> {
    catalog: Arc<Catalog>,
    kind: ModelKind<T>,
    atoms: Vec<Atom>,
    atom_items: Vec<ItemIdx>,
    atom_prior: Vec<T>,
    item_prior: Vec<T>,
}

/// Whether the catalogue needs the property layer to be represented.
pub fn needs_properties(catalog: &Catalog) -> bool {
    let expert = catalog.expert();
    expert.joint.is_some()
        || expert.property_rows.iter().any(Option::is_some)
        || catalog.properties().iter().any(|p| p.clone_of.is_none() || !p.parents.is_empty())
        || catalog.questions().iter().any(|q| matches!(q.link, QuestionLink::Table(_)))
}

impl<T: Scalar> Model<T> {
    pub fn build(catalog: Arc<Catalog>, choice: ModelChoice, options: &ElicitOptions) -> Result<Model<T>> {
        let use_properties = match choice {
            ModelChoice::Auto => needs_properties(&catalog),
            ModelChoice::PropertyFree => false,
            ModelChoice::Properties => true,
        };
        if use_properties {
            Model::properties(catalog)
        } else {
            Model::property_free(catalog, options)
        }
    }

    pub fn property_free(catalog: Arc<Catalog>, options: &ElicitOptions) -> Result<Model<T>> {
        if needs_properties(&catalog) {
            return Err(Error::Unsupported(
                "catalogue declares properties beyond latent clones; use the property model".into(),
            ));
        }
        let elicited = elicit::<T>(&catalog, options)?;
        let atoms: Vec<Atom> = catalog.item_indices().map(|item| Atom { item, state: None }).collect();
        let atom_prior = elicited.prior.0.clone();
        Ok(Model {
            atom_items: atoms.iter().map(|a| a.item).collect(),
            item_prior: atom_prior.clone(),
            atoms,
            atom_prior,
            kind: ModelKind::PropertyFree(elicited),
            catalog,
        })
    }

    pub fn properties(catalog: Arc<Catalog>) -> Result<Model<T>> {
        let net = PropertyModel::<T>::build(&catalog)?;
        let item_prior = item_prior_from_properties(&catalog, &net).0;
        let mut atoms = Vec::new();
        let mut atom_prior = Vec::new();
        for (item, state, mass) in net.atoms() {
            atoms.push(Atom { item, state: Some(state) });
            atom_prior.push(mass);
        }
        Ok(Model {
            atom_items: atoms.iter().map(|a| a.item).collect(),
            atoms,
            atom_prior,
            item_prior,
            kind: ModelKind::Properties(net),
            catalog,
        })
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn catalog_arc(&self) -> &Arc<Catalog> {
        &self.catalog
    }

    pub fn kind(&self) -> &ModelKind<T> {
        &self.kind
    }

    pub fn is_property_model(&self) -> bool {
        matches!(self.kind, ModelKind::Properties(_))
    }

    pub fn n_items(&self) -> usize {
        self.catalog.n_items()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom_items(&self) -> &[ItemIdx] {
        &self.atom_items
    }

    pub fn atom_prior(&self) -> &[T] {
        &self.atom_prior
    }

    pub fn item_prior(&self) -> &[T] {
        &self.item_prior
    }

    /// `P(answer | atom)` for `question`, ignoring relevance markers.
    pub fn likelihood(&self, atom: usize, question: QuestionIdx, answer: usize) -> T {
        let a = &self.atoms[atom];
        match &self.kind {
            ModelKind::PropertyFree(m) => m.table(question).get(a.item.0, answer).clone(),
            ModelKind::Properties(m) => m
                .answer_given_state(question, a.state.expect("property atoms carry a state"), answer)
                .clone(),
        }
    }

    /// Likelihood vector over atoms.
    pub fn answer_likelihoods(&self, question: QuestionIdx, answer: usize) -> Vec<T> {
        (0..self.atoms.len()).map(|k| self.likelihood(k, question, answer)).collect()
    }

    /// Item marginal of an atom distribution.
    pub fn marginalize(&self, atom_weights: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n_items()];
        for (item, w) in self.atom_items.iter().zip(atom_weights) {
            out[item.0] = out[item.0].clone() + w.clone();
        }
        out
    }

    pub fn to_f64(&self) -> Model<f64> {
        Model {
            catalog: self.catalog.clone(),
            kind: match &self.kind {
                ModelKind::PropertyFree(m) => ModelKind::PropertyFree(m.to_f64()),
                ModelKind::Properties(m) => ModelKind::Properties(m.to_f64()),
            },
            atoms: self.atoms.clone(),
            atom_items: self.atom_items.clone(),
            atom_prior: self.atom_prior.iter().map(Scalar::as_f64).collect(),
            item_prior: self.item_prior.iter().map(Scalar::as_f64).collect(),
        }
    }

    /// Inspection document for the built model.
    pub fn export(&self) -> ModelExport {
        let c = &self.catalog;
        let items: Vec<String> = c.items().iter().map(|i| i.id.clone()).collect();
        let questions = c
            .question_indices()
            .map(|q| {
                let question = c.question(q);
                let answers = question.answers.iter().map(|a| a.id.clone()).collect();
                let (conditioned_on, rows, strategy) = match &self.kind {
                    ModelKind::PropertyFree(m) => (
                        vec!["item".to_string()],
                        m.table(q)
                            .rows
                            .iter()
                            .zip(&items)
                            .map(|(r, id)| ExportRow {
                                given: vec![id.clone()],
                                probs: r.iter().map(Scalar::as_f64).collect(),
                            })
                            .collect(),
                        Some(m.strategies[q.0]),
                    ),
                    ModelKind::Properties(m) => {
                        let cpt = &m.cpts[q.0];
                        let names = cpt.properties.iter().map(|p| c.property(*p).id.clone()).collect();
                        let radices = c.radices_of(&cpt.properties);
                        let rows = cpt
                            .rows
                            .iter()
                            .enumerate()
                            .map(|(k, r)| {
                                let digits = crate::states::unflatten(k, &radices);
                                ExportRow {
                                    given: cpt
                                        .properties
                                        .iter()
                                        .zip(&digits)
                                        .map(|(p, v)| c.property(*p).values[*v].clone())
                                        .collect(),
                                    probs: r.iter().map(Scalar::as_f64).collect(),
                                }
                            })
                            .collect();
                        (names, rows, None)
                    }
                };
                QuestionExport {
                    id: question.id.clone(),
                    answers,
                    strategy,
                    conditioned_on,
                    rows,
                }
            })
            .collect();
        let joint = match &self.kind {
            ModelKind::PropertyFree(_) => None,
            ModelKind::Properties(m) => Some(
                m.feasible
                    .states()
                    .iter()
                    .enumerate()
                    .map(|(k, s)| JointExport {
                        state: s
                            .0
                            .iter()
                            .enumerate()
                            .map(|(p, v)| (c.properties()[p].id.clone(), c.properties()[p].values[*v].clone()))
                            .collect(),
                        p: m.prior.flat()[k].as_f64(),
                        compatible_items: m.feasible.compatible_items(k).iter().map(|i| items[i.0].clone()).collect(),
                    })
                    .collect(),
            ),
        };
        ModelExport {
            kind: if self.is_property_model() { "properties" } else { "property-free" }.into(),
            prior: items
                .iter()
                .zip(&self.item_prior)
                .map(|(id, p)| (id.clone(), p.as_f64()))
                .collect(),
            items,
            questions,
            joint,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelExport {
    pub kind: String,
    pub items: Vec<String>,
    pub prior: Vec<(String, f64)>,
    pub questions: Vec<QuestionExport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<Vec<JointExport>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionExport {
    pub id: String,
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<Strategy>,
    pub conditioned_on: Vec<String>,
    pub rows: Vec<ExportRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExportRow {
    pub given: Vec<String>,
    pub probs: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointExport {
    pub state: Vec<(String, String)>,
    pub p: f64,
    pub compatible_items: Vec<String>,
}
