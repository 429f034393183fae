//! Sequential Bayesian updating, entropy and an enumeration oracle.

use serde::{Deserialize, Serialize};

use crate::catalog::{ItemIdx, QuestionIdx};
use crate::elicitation::ItemPrior;
use crate::error::{Error, Result};
use crate::model::{Model, ModelKind};
use crate::property_net::irrelevant_question_likelihood;
use crate::scalar::{normalize, Scalar};
use crate::states::{state_count, unflatten, Product};

/// What to do when an answer is incompatible with every remaining item.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContradictionMode {
    /// Flag the state and freeze the posterior.
    #[default]
    Strict,
    /// Ignore the offending answer.
    Soft,
}

impl std::str::FromStr for ContradictionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(ContradictionMode::Strict),
            "soft" => Ok(ContradictionMode::Soft),
            other => Err(Error::invalid("mode", format!("expected `strict` or `soft`, got `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub question: QuestionIdx,
    pub answer: usize,
    /// False when the answer was ignored (soft mode) or arrived after a
    /// contradiction.
    pub applied: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConversationState<T = f64> {
    pub answered: Vec<AnswerRecord>,
    pub atom_weights: Vec<T>,
    pub posterior: Vec<T>,
    /// Normalized entropy before any answer and after each one.
    pub entropy_trace: Vec<f64>,
    pub contradiction: bool,
}

impl<T: Scalar> ConversationState<T> {
    pub fn is_answered(&self, question: QuestionIdx) -> bool {
        self.answered.iter().any(|r| r.question == question)
    }

    pub fn entropy(&self) -> f64 {
        *self.entropy_trace.last().expect("trace starts with the prior entropy")
    }

    pub fn n_answered(&self) -> usize {
        self.answered.len()
    }
}

/// Normalized entropy `-Σ p log_n p` with `0 log 0 = 0`. Zero for `n <= 1`.
pub fn entropy<T: Scalar>(distribution: &[T], n: usize) -> f64 {
    if n <= 1 {
        return 0.0;
    }
    let base = (n as f64).ln();
    let h: f64 = distribution
        .iter()
        .map(Scalar::as_f64)
        .filter(|&p| p > 0.0)
        .map(|p| -p * p.ln())
        .sum();
    (h / base).max(0.0)
}

pub fn init_session<T: Scalar>(model: &Model<T>) -> ConversationState<T> {
    let posterior = model.item_prior().to_vec();
    ConversationState {
        answered: Vec::new(),
        atom_weights: model.atom_prior().to_vec(),
        entropy_trace: vec![entropy(&posterior, model.n_items())],
        posterior,
        contradiction: false,
    }
}

/// Per-atom likelihood of an answer given the current atom weights.
pub fn answer_likelihood<T: Scalar>(model: &Model<T>, weights: &[T], question: QuestionIdx, answer: usize) -> Result<Vec<T>> {
    let base = model.answer_likelihoods(question, answer);
    if model.catalog().question(question).has_relevance() {
        irrelevant_question_likelihood(model.catalog(), question, model.atom_items(), weights, &base)
    } else {
        Ok(base)
    }
}

fn check_answer<T: Scalar>(model: &Model<T>, state: &ConversationState<T>, question: QuestionIdx, answer: usize) -> Result<()> {
    let catalog = model.catalog();
    if question.0 >= catalog.n_questions() {
        return Err(Error::Unknown {
            kind: "question",
            id: question.to_string(),
        });
    }
    let q = catalog.question(question);
    if answer >= q.answers.len() {
        return Err(Error::UnknownAnswer {
            question: q.id.clone(),
            answer: answer.to_string(),
        });
    }
    if state.is_answered(question) {
        return Err(Error::RepeatedQuestion(q.id.clone()));
    }
    Ok(())
}

pub fn update<T: Scalar>(model: &Model<T>, state: &ConversationState<T>, question: QuestionIdx, answer: usize) -> Result<ConversationState<T>> {
    update_with(model, state, question, answer, ContradictionMode::Strict)
}

pub fn update_with<T: Scalar>(
    model: &Model<T>,
    state: &ConversationState<T>,
    question: QuestionIdx,
    answer: usize,
    mode: ContradictionMode,
) -> Result<ConversationState<T>> {
    check_answer(model, state, question, answer)?;
    let mut next = state.clone();
    let mut record = AnswerRecord {
        question,
        answer,
        applied: false,
    };
    if !state.contradiction {
        let lik = answer_likelihood(model, &state.atom_weights, question, answer)?;
        let raw: Vec<T> = state
            .atom_weights
            .iter()
            .zip(&lik)
            .map(|(w, l)| w.clone() * l.clone())
            .collect();
        match normalize(&raw) {
            Some(weights) => {
                next.posterior = model.marginalize(&weights);
                next.atom_weights = weights;
                record.applied = true;
            }
            None => {
                if mode == ContradictionMode::Strict {
                    next.contradiction = true;
                }
            }
        }
    }
    next.answered.push(record);
    next.entropy_trace.push(entropy(&next.posterior, model.n_items()));
    Ok(next)
}

/// Applies a list of answers in order.
pub fn update_all<T: Scalar>(model: &Model<T>, answers: &[(QuestionIdx, usize)], mode: ContradictionMode) -> Result<ConversationState<T>> {
    let mut state = init_session(model);
    for &(q, a) in answers {
        state = update_with(model, &state, q, a, mode)?;
    }
    Ok(state)
}

/// Batch posterior over items: the prior times the product of all answer
/// likelihoods, marginalized over atoms. `None` when the answers are jointly
/// impossible.
pub fn posterior_property_inference<T: Scalar>(model: &Model<T>, answers: &[(QuestionIdx, usize)]) -> Result<Option<ItemPrior<T>>> {
    let state = init_session(model);
    let mut seen = Vec::with_capacity(answers.len());
    for &(q, a) in answers {
        check_answer(model, &state, q, a)?;
        if seen.contains(&q) {
            return Err(Error::RepeatedQuestion(model.catalog().question(q).id.clone()));
        }
        seen.push(q);
    }
    let mut weights = model.atom_prior().to_vec();
    // Questions without relevance markers commute; those with markers depend
    // on the weights at the time they are asked, so they are applied in order.
    for &(q, a) in answers {
        let lik = answer_likelihood(model, &weights, q, a)?;
        for (w, l) in weights.iter_mut().zip(lik) {
            *w = w.clone() * l;
        }
        if weights.iter().all(|w| w.is_zero()) {
            return Ok(None);
        }
    }
    Ok(normalize(&weights).map(|w| ItemPrior(model.marginalize(&w))))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Retained {
    pub items: Vec<ItemIdx>,
    pub count: usize,
    pub contradiction: bool,
}

/// Items with positive posterior mass.
pub fn retained<T: Scalar>(state: &ConversationState<T>) -> Retained {
    let items: Vec<ItemIdx> = state
        .posterior
        .iter()
        .enumerate()
        .filter(|(_, p)| **p > T::zero())
        .map(|(i, _)| ItemIdx(i))
        .collect();
    Retained {
        count: items.len(),
        items,
        contradiction: state.contradiction,
    }
}

/// Largest `items × joint states × answer combinations` the oracle enumerates.
pub const ORACLE_CAP: usize = 100_000;

/// Explicit joint over `(item, property state, answers to the chosen
/// questions)`, built without reference to the atom representation.
#[derive(Clone, Debug)]
pub struct OracleTable<T = f64> {
    pub questions: Vec<QuestionIdx>,
    radices: Vec<usize>,
    /// One item mass vector per answer combination, mixed-radix order.
    pub joint: Vec<Vec<T>>,
}

impl<T: Scalar> OracleTable<T> {
    /// Conditions on one answer per question of the table; the answers must
    /// follow the table's question order.
    pub fn posterior(&self, answers: &[usize]) -> Option<Vec<T>> {
        normalize(&self.joint[crate::states::flat_index(answers, &self.radices)])
    }

    /// Conditions on answers to a subset of the table's questions.
    pub fn posterior_partial(&self, answers: &[(QuestionIdx, usize)]) -> Option<Vec<T>> {
        let n = self.joint.first().map_or(0, Vec::len);
        let mut mass = vec![T::zero(); n];
        for (k, cell) in self.joint.iter().enumerate() {
            let combo = unflatten(k, &self.radices);
            let matches = answers.iter().all(|(q, a)| {
                self.questions
                    .iter()
                    .position(|x| x == q)
                    .is_some_and(|pos| combo[pos] == *a)
            });
            if matches {
                for (m, c) in mass.iter_mut().zip(cell) {
                    *m = m.clone() + c.clone();
                }
            }
        }
        normalize(&mass)
    }
}

pub fn brute_force_table<T: Scalar>(model: &Model<T>, questions: &[QuestionIdx]) -> Result<OracleTable<T>> {
    let catalog = model.catalog();
    if questions.iter().any(|q| catalog.question(*q).has_relevance()) {
        return Err(Error::Unsupported(
            "the enumeration oracle does not handle questions with relevance markers".into(),
        ));
    }
    let n = catalog.n_items();
    let radices: Vec<usize> = questions.iter().map(|q| catalog.question(*q).answers.len()).collect();
    let combos = state_count(&radices).unwrap_or(usize::MAX);
    let joint_states = match model.kind() {
        ModelKind::PropertyFree(_) => 1,
        ModelKind::Properties(_) => state_count(&catalog.radices()).unwrap_or(usize::MAX),
    };
    let size = n.saturating_mul(joint_states).saturating_mul(combos);
    if size > ORACLE_CAP {
        return Err(Error::OracleTooLarge { size, cap: ORACLE_CAP });
    }

    let mut joint = vec![vec![T::zero(); n]; combos];
    let answer_choices: Vec<Vec<usize>> = radices.iter().map(|&r| (0..r).collect()).collect();
    match model.kind() {
        ModelKind::PropertyFree(m) => {
            for item in catalog.item_indices() {
                let prior = m.prior.get(item).clone();
                for (k, combo) in Product::new(&answer_choices).enumerate() {
                    let p = questions
                        .iter()
                        .zip(&combo)
                        .fold(prior.clone(), |acc, (q, a)| acc * m.table(*q).get(item.0, *a).clone());
                    joint[k][item.0] = joint[k][item.0].clone() + p;
                }
            }
        }
        ModelKind::Properties(m) => {
            let value_choices: Vec<Vec<usize>> = catalog.radices().iter().map(|&r| (0..r).collect()).collect();
            for state in Product::new(&value_choices) {
                let p_state = match m.feasible.position(&crate::catalog::JointState(state.clone())) {
                    Some(k) => m.prior.flat()[k].clone(),
                    None => T::zero(),
                };
                let compatible: Vec<ItemIdx> = catalog
                    .item_indices()
                    .filter(|i| catalog.state_compatible(*i, &state))
                    .collect();
                if compatible.is_empty() {
                    continue;
                }
                let share = p_state / T::count(compatible.len());
                for (k, combo) in Product::new(&answer_choices).enumerate() {
                    let p = questions
                        .iter()
                        .zip(&combo)
                        .fold(share.clone(), |acc, (q, a)| acc * m.cpts[q.0].prob(&state, *a).clone());
                    for item in &compatible {
                        joint[k][item.0] = joint[k][item.0].clone() + p.clone();
                    }
                }
            }
        }
    }
    Ok(OracleTable {
        questions: questions.to_vec(),
        radices,
        joint,
    })
}

/// Posterior over items by explicit enumeration of the full joint.
pub fn brute_force_oracle<T: Scalar>(model: &Model<T>, answers: &[(QuestionIdx, usize)]) -> Result<Option<Vec<T>>> {
    let questions: Vec<QuestionIdx> = answers.iter().map(|(q, _)| *q).collect();
    let table = brute_force_table(model, &questions)?;
    let values: Vec<usize> = answers.iter().map(|(_, a)| *a).collect();
    Ok(table.posterior(&values))
}
