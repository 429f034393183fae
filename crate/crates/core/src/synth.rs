//! Random catalogues and recorded sessions for testing and simulation.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{
    AnswerDoc, CatalogDocument, ExpertTablesDoc, ItemDoc, ItemIdx, PropertyDoc, PropertyTableDoc, QuestionDoc,
    QuestionIdx, QuestionTableDoc, RelevanceDoc, RowDoc, Strategy,
};
use crate::model::Model;
use crate::scalar::Prob;
use crate::sessions::SessionLog;
use crate::states::{state_count, unflatten};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogShape {
    pub items: usize,
    pub questions: usize,
    pub min_answers: usize,
    pub max_answers: usize,
    /// Probability that an item is compatible with each extra answer beyond
    /// its first one.
    pub extra_answer_rate: f64,
    /// Tag questions with a random strategy.
    pub random_strategies: bool,
}

impl Default for CatalogShape {
    fn default() -> Self {
        CatalogShape {
            items: 20,
            questions: 6,
            min_answers: 2,
            max_answers: 5,
            extra_answer_rate: 0.2,
            random_strategies: false,
        }
    }
}

fn random_subset<R: Rng>(rng: &mut R, width: usize, extra_rate: f64) -> Vec<usize> {
    let first = rng.gen_range(0..width);
    let mut out: Vec<usize> = (0..width).filter(|&k| k == first || rng.gen_bool(extra_rate)).collect();
    out.sort_unstable();
    out
}

/// A catalogue without declared properties: every item lists compatible
/// answers per question.
pub fn property_free_catalog<R: Rng>(rng: &mut R, shape: &CatalogShape) -> CatalogDocument {
    let questions: Vec<QuestionDoc> = (0..shape.questions)
        .map(|q| {
            let width = rng.gen_range(shape.min_answers..=shape.max_answers);
            QuestionDoc {
                id: format!("q{q}"),
                prompt: format!("Question {q}?"),
                answers: (0..width)
                    .map(|a| AnswerDoc {
                        id: format!("a{a}"),
                        label: String::new(),
                    })
                    .collect(),
                strategy: shape
                    .random_strategies
                    .then(|| if rng.gen_bool(0.5) { Strategy::Ujs } else { Strategy::Ups }),
                ..QuestionDoc::default()
            }
        })
        .collect();
    let items = (0..shape.items)
        .map(|i| ItemDoc {
            id: format!("item{i:04}"),
            label: String::new(),
            properties: BTreeMap::new(),
            answers: questions
                .iter()
                .map(|q| {
                    let subset = random_subset(rng, q.answers.len(), shape.extra_answer_rate);
                    (q.id.clone(), subset.into_iter().map(|a| q.answers[a].id.clone()).collect())
                })
                .collect(),
        })
        .collect();
    CatalogDocument {
        items,
        questions,
        properties: Vec::new(),
        expert_tables: ExpertTablesDoc::default(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyShape {
    pub max_items: usize,
    pub max_properties: usize,
    pub max_values: usize,
    pub max_questions: usize,
    /// Probability that a property takes each earlier property as a parent.
    pub parent_rate: f64,
    /// Probability that a question gets an explicit table rather than being
    /// a latent clone.
    pub soft_rate: f64,
    /// Skip the property tables so every property is uniform a priori.
    pub uniform_properties: bool,
    /// Probability that a question carries a relevance marker.
    pub relevance_rate: f64,
}

impl Default for PropertyShape {
    fn default() -> Self {
        PropertyShape {
            max_items: 6,
            max_properties: 4,
            max_values: 4,
            max_questions: 4,
            parent_rate: 0.4,
            soft_rate: 0.5,
            uniform_properties: false,
            relevance_rate: 0.0,
        }
    }
}

/// A row of small integer weights as exact fractions. Zeros appear with
/// probability `zero_rate`, but never in every cell.
fn random_row<R: Rng>(rng: &mut R, width: usize, zero_rate: f64) -> Vec<Prob> {
    let mut weights: Vec<i64> = (0..width)
        .map(|_| if rng.gen_bool(zero_rate) { 0 } else { rng.gen_range(1..=9) })
        .collect();
    if weights.iter().all(|&w| w == 0) {
        weights[rng.gen_range(0..width)] = rng.gen_range(1..=9);
    }
    let total: i64 = weights.iter().sum();
    weights.into_iter().map(|w| Prob::ratio(w, total)).collect()
}

fn table_rows<R: Rng>(rng: &mut R, conditioning: &[(String, Vec<String>)], width: usize, zero_rate: f64) -> Vec<RowDoc> {
    let radices: Vec<usize> = conditioning.iter().map(|(_, v)| v.len()).collect();
    let n_rows = state_count(&radices).expect("small tables");
    (0..n_rows)
        .map(|k| {
            let digits = unflatten(k, &radices);
            RowDoc {
                given: conditioning
                    .iter()
                    .zip(&digits)
                    .map(|((id, values), &v)| (id.clone(), values[v].clone()))
                    .collect(),
                probs: random_row(rng, width, zero_rate),
            }
        })
        .collect()
}

/// A small catalogue with latent properties, parent links, explicit
/// property tables and a mix of clone and soft questions.
pub fn property_catalog<R: Rng>(rng: &mut R, shape: &PropertyShape) -> CatalogDocument {
    let n_props = rng.gen_range(1..=shape.max_properties);
    let mut properties: Vec<PropertyDoc> = Vec::new();
    for p in 0..n_props {
        let width = rng.gen_range(2..=shape.max_values);
        let parents = (0..p)
            .filter(|_| rng.gen_bool(shape.parent_rate))
            .map(|k| format!("P{k}"))
            .collect();
        properties.push(PropertyDoc {
            id: format!("P{p}"),
            values: (0..width).map(|v| format!("v{v}")).collect(),
            clone_of: None,
            parents,
        });
    }
    let values_of = |id: &str, props: &[PropertyDoc]| -> Vec<String> {
        props.iter().find(|p| p.id == id).map(|p| p.values.clone()).unwrap_or_default()
    };

    let n_questions = rng.gen_range(1..=shape.max_questions);
    let mut questions = Vec::new();
    let mut question_tables = Vec::new();
    for q in 0..n_questions {
        let id = format!("Q{q}");
        let soft = rng.gen_bool(shape.soft_rate);
        let (attached, answers) = if soft {
            let mut chosen: Vec<usize> = (0..n_props).collect();
            chosen.shuffle(rng);
            chosen.truncate(rng.gen_range(1..=2.min(n_props)));
            chosen.sort_unstable();
            let width = rng.gen_range(2..=shape.max_values);
            (chosen.into_iter().map(|p| format!("P{p}")).collect::<Vec<_>>(), width)
        } else {
            // A clone-style question: answers mirror one property's values.
            let p = rng.gen_range(0..n_props);
            (vec![format!("P{p}")], properties[p].values.len())
        };
        let answer_docs: Vec<AnswerDoc> = if soft {
            (0..answers)
                .map(|a| AnswerDoc {
                    id: format!("a{a}"),
                    label: String::new(),
                })
                .collect()
        } else {
            values_of(&attached[0], &properties)
                .into_iter()
                .map(|v| AnswerDoc { id: v, label: String::new() })
                .collect()
        };
        if soft {
            let conditioning: Vec<(String, Vec<String>)> =
                attached.iter().map(|p| (p.clone(), values_of(p, &properties))).collect();
            question_tables.push(QuestionTableDoc {
                question: id.clone(),
                rows: table_rows(rng, &conditioning, answers, 0.3),
            });
        }
        let relevant_when = rng.gen_bool(shape.relevance_rate).then(|| {
            let p = &properties[rng.gen_range(0..n_props)];
            let mut values = p.values.clone();
            values.shuffle(rng);
            values.truncate(rng.gen_range(1..p.values.len()));
            RelevanceDoc {
                property: p.id.clone(),
                values,
            }
        });
        questions.push(QuestionDoc {
            id,
            prompt: String::new(),
            answers: answer_docs,
            properties: attached,
            strategy: None,
            relevant_items: None,
            relevant_when,
        });
    }

    let property_tables = if shape.uniform_properties {
        Vec::new()
    } else {
        properties
            .iter()
            .map(|p| {
                let conditioning: Vec<(String, Vec<String>)> =
                    p.parents.iter().map(|id| (id.clone(), values_of(id, &properties))).collect();
                PropertyTableDoc {
                    property: p.id.clone(),
                    rows: table_rows(rng, &conditioning, p.values.len(), 0.0),
                }
            })
            .collect()
    };

    let n_items = rng.gen_range(1..=shape.max_items);
    let items = (0..n_items)
        .map(|i| ItemDoc {
            id: format!("i{i}"),
            label: String::new(),
            properties: properties
                .iter()
                .map(|p| {
                    let subset = random_subset(rng, p.values.len(), 0.35);
                    (p.id.clone(), subset.into_iter().map(|v| p.values[v].clone()).collect())
                })
                .collect(),
            answers: BTreeMap::new(),
        })
        .collect();

    CatalogDocument {
        items,
        questions,
        properties,
        expert_tables: ExpertTablesDoc {
            property_tables,
            question_tables,
            joint: None,
        },
    }
}

/// A session drawn from the model, with the ground truth that produced it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSession {
    pub log: SessionLog,
    pub truth: ItemIdx,
    /// Items compatible with every recorded answer.
    pub compatible: Vec<ItemIdx>,
}

fn sample_index<R: Rng>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (k, w) in weights.iter().enumerate() {
        if u < *w {
            return k;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

/// Draws an atom from the prior and answers every question from the model's
/// likelihood. With probability `noise` an answer is replaced by a uniform
/// draw. Questions that do not apply to the drawn item are left unanswered.
pub fn sample_sessions<R: Rng>(model: &Model<f64>, rng: &mut R, count: usize, noise: f64) -> Vec<SyntheticSession> {
    let catalog = model.catalog();
    (0..count)
        .map(|s| {
            let atom = sample_index(rng, model.atom_prior());
            let truth = model.atoms()[atom].item;
            let mut answers = Vec::new();
            for q in catalog.question_indices() {
                let question = catalog.question(q);
                if !question.is_relevant(truth) {
                    continue;
                }
                let width = question.answers.len();
                let a = if noise > 0.0 && rng.gen_bool(noise) {
                    rng.gen_range(0..width)
                } else {
                    let lik: Vec<f64> = (0..width).map(|a| model.likelihood(atom, q, a)).collect();
                    sample_index(rng, &lik)
                };
                answers.push((q, a));
            }
            let compatible = catalog
                .item_indices()
                .filter(|i| answers.iter().all(|(q, a)| compatible_answer(model, *i, *q, *a)))
                .collect();
            SyntheticSession {
                log: SessionLog {
                    id: format!("s{s:05}"),
                    chosen: vec![truth],
                    answers,
                },
                truth,
                compatible,
            }
        })
        .collect()
}

fn compatible_answer(model: &Model<f64>, item: ItemIdx, question: QuestionIdx, answer: usize) -> bool {
    let q = model.catalog().question(question);
    !q.is_relevant(item) || model.catalog().answer_compatible(item, question, answer)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::catalog::{Catalog, LoadOptions};
    use crate::elicitation::ElicitOptions;
    use crate::model::ModelChoice;

    #[test]
    fn generated_catalogues_load() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let doc = property_catalog(&mut rng, &PropertyShape::default());
            let c = Catalog::from_document(doc, &LoadOptions::default()).unwrap();
            Model::<f64>::build(Arc::new(c), ModelChoice::Properties, &ElicitOptions::default()).unwrap();
        }
        let doc = property_free_catalog(&mut rng, &CatalogShape::default());
        let c = Catalog::from_document(doc, &LoadOptions::default()).unwrap();
        assert_eq!(c.n_items(), 20);
    }

    #[test]
    fn sessions_are_compatible_with_their_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let doc = property_free_catalog(&mut rng, &CatalogShape::default());
        let c = Arc::new(Catalog::from_document(doc, &LoadOptions::default()).unwrap());
        let m = Model::<f64>::build(c, ModelChoice::Auto, &ElicitOptions::default()).unwrap();
        for s in sample_sessions(&m, &mut rng, 50, 0.0) {
            assert!(s.compatible.contains(&s.truth));
            assert_eq!(s.log.answers.len(), 6);
        }
    }
}
