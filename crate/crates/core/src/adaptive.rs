//! Question selection by conditional entropy and the conversation loop.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::{ItemIdx, QuestionIdx};
use crate::error::{Error, Result};
use crate::inference::{answer_likelihood, entropy, init_session, retained, update_with, ContradictionMode, ConversationState};
use crate::model::Model;
use crate::scalar::Scalar;

/// Slack used when comparing entropies.
const ENTROPY_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoppingConfig {
    /// Stop once the posterior is as concentrated as a uniform over this
    /// many items. `None` never stops on entropy.
    pub stop_s: Option<usize>,
    pub max_questions: Option<usize>,
    #[serde(default)]
    pub mode: ContradictionMode,
}

impl StoppingConfig {
    pub fn with_s(s: usize) -> Self {
        StoppingConfig {
            stop_s: Some(s),
            ..StoppingConfig::default()
        }
    }

    pub fn threshold(&self, n: usize) -> Result<Option<f64>> {
        self.stop_s.map(|s| stopping_threshold(s, n)).transpose()
    }
}

/// `-log_n(1/s)`: the normalized entropy of a uniform distribution over `s`
/// of `n` items.
pub fn stopping_threshold(s: usize, n: usize) -> Result<f64> {
    if s == 0 || s > n {
        return Err(Error::StopOutOfRange { s, n });
    }
    if n == 1 {
        return Ok(0.0);
    }
    Ok((s as f64).ln() / (n as f64).ln())
}

/// Expected posterior entropy after asking `question`.
pub fn conditional_entropy<T: Scalar>(model: &Model<T>, state: &ConversationState<T>, question: QuestionIdx) -> Result<f64> {
    let n = model.n_items();
    let mut h = 0.0;
    for answer in 0..model.catalog().question(question).answers.len() {
        let lik = answer_likelihood(model, &state.atom_weights, question, answer)?;
        let joint: Vec<T> = state
            .atom_weights
            .iter()
            .zip(&lik)
            .map(|(w, l)| w.clone() * l.clone())
            .collect();
        let items = model.marginalize(&joint);
        let p_answer = items.iter().fold(T::zero(), |acc, p| acc + p.clone());
        if p_answer.is_zero() {
            continue;
        }
        let posterior: Vec<T> = items.into_iter().map(|p| p / p_answer.clone()).collect();
        h += p_answer.as_f64() * entropy(&posterior, n);
    }
    Ok(h)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Threshold,
    Exhausted,
    MaxQuestions,
    Contradiction,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Threshold => "threshold",
            StopReason::Exhausted => "exhausted",
            StopReason::MaxQuestions => "max-questions",
            StopReason::Contradiction => "contradiction",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Decision {
    Ask { question: QuestionIdx, expected_entropy: f64 },
    Stop(StopReason),
}

/// Stop reason implied by the state alone, before looking at candidates.
pub fn stop_reason<T: Scalar>(model: &Model<T>, state: &ConversationState<T>, config: &StoppingConfig) -> Result<Option<StopReason>> {
    if state.contradiction {
        return Ok(Some(StopReason::Contradiction));
    }
    if let Some(threshold) = config.threshold(model.n_items())? {
        if state.entropy() <= threshold + ENTROPY_EPS {
            return Ok(Some(StopReason::Threshold));
        }
    }
    if config.max_questions.is_some_and(|max| state.n_answered() >= max) {
        return Ok(Some(StopReason::MaxQuestions));
    }
    Ok(None)
}

/// The unasked question with the lowest conditional entropy, earliest in
/// `unasked` on ties. Questions whose relevant items have no mass left are
/// skipped.
pub fn next_question<T: Scalar>(
    model: &Model<T>,
    state: &ConversationState<T>,
    unasked: &[QuestionIdx],
    config: &StoppingConfig,
) -> Result<Decision> {
    if let Some(reason) = stop_reason(model, state, config)? {
        return Ok(Decision::Stop(reason));
    }
    let mut best: Option<(QuestionIdx, f64)> = None;
    for &q in unasked {
        if state.is_answered(q) {
            continue;
        }
        let h = match conditional_entropy(model, state, q) {
            Ok(h) => h,
            Err(Error::NoRelevantMass(_)) => continue,
            Err(e) => return Err(e),
        };
        if best.is_none_or(|(_, b)| h < b - ENTROPY_EPS) {
            best = Some((q, h));
        }
    }
    Ok(match best {
        Some((question, expected_entropy)) => Decision::Ask {
            question,
            expected_entropy,
        },
        None => Decision::Stop(StopReason::Exhausted),
    })
}

/// Supplies answers to posed questions.
pub trait AnswerSource {
    /// `Ok(None)` when no answer is available; the question is then skipped.
    fn answer(&mut self, question: QuestionIdx) -> Result<Option<usize>>;
}

/// Answers looked up from a fixed list, as in replay of a recorded session.
#[derive(Clone, Debug, Default)]
pub struct RecordedAnswers(pub Vec<(QuestionIdx, usize)>);

impl AnswerSource for RecordedAnswers {
    fn answer(&mut self, question: QuestionIdx) -> Result<Option<usize>> {
        Ok(self.0.iter().find(|(q, _)| *q == question).map(|(_, a)| *a))
    }
}

impl<F: FnMut(QuestionIdx) -> Result<Option<usize>>> AnswerSource for F {
    fn answer(&mut self, question: QuestionIdx) -> Result<Option<usize>> {
        self(question)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub question: QuestionIdx,
    pub answer: usize,
    pub entropy: f64,
    pub nri: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub item: ItemIdx,
    pub id: String,
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transcript<T = f64> {
    pub steps: Vec<Step>,
    pub stop_reason: Option<StopReason>,
    pub ranked: Vec<RankedItem>,
    /// Questions selected but left unanswered by the source.
    pub skipped: Vec<QuestionIdx>,
    pub final_state: ConversationState<T>,
}

/// A conversation that failed midway, with what was collected so far.
#[derive(Debug)]
pub struct ConversationFailure<T = f64> {
    pub error: Error,
    pub partial: Transcript<T>,
}

impl<T> fmt::Display for ConversationFailure<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "conversation failed after {} answers: {}", self.partial.steps.len(), self.error)
    }
}

impl<T: fmt::Debug> std::error::Error for ConversationFailure<T> {}

/// Items by posterior descending, ties by id.
pub fn rank<T: Scalar>(model: &Model<T>, posterior: &[T]) -> Vec<RankedItem> {
    let catalog = model.catalog();
    let mut ranked: Vec<RankedItem> = posterior
        .iter()
        .enumerate()
        .map(|(i, p)| RankedItem {
            item: ItemIdx(i),
            id: catalog.item(ItemIdx(i)).id.clone(),
            probability: p.as_f64(),
        })
        .collect();
    ranked.sort_by(|a, b| {
        posterior[b.item.0]
            .partial_cmp(&posterior[a.item.0])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.id.cmp(&b.id))
    });
    ranked
}

/// How the next question is chosen.
#[derive(Clone, Debug)]
pub enum Selection {
    Adaptive,
    /// Fixed order; the stopping rule still applies.
    Static(Vec<QuestionIdx>),
}

pub fn run_conversation<T: Scalar>(
    model: &Model<T>,
    source: &mut dyn AnswerSource,
    config: &StoppingConfig,
) -> std::result::Result<Transcript<T>, ConversationFailure<T>> {
    run_with(model, source, config, &Selection::Adaptive)
}

pub fn run_with<T: Scalar>(
    model: &Model<T>,
    source: &mut dyn AnswerSource,
    config: &StoppingConfig,
    selection: &Selection,
) -> std::result::Result<Transcript<T>, ConversationFailure<T>> {
    let mut transcript = Transcript {
        steps: Vec::new(),
        stop_reason: None,
        ranked: Vec::new(),
        skipped: Vec::new(),
        final_state: init_session(model),
    };
    let order: Vec<QuestionIdx> = match selection {
        Selection::Adaptive => model.catalog().question_indices().collect(),
        Selection::Static(order) => order.clone(),
    };
    let fail = |error: Error, mut partial: Transcript<T>| {
        partial.ranked = rank(model, &partial.final_state.posterior);
        ConversationFailure { error, partial }
    };
    loop {
        let state = &transcript.final_state;
        let unasked: Vec<QuestionIdx> = order
            .iter()
            .copied()
            .filter(|q| !state.is_answered(*q) && !transcript.skipped.contains(q))
            .collect();
        let decision = match selection {
            Selection::Adaptive => next_question(model, state, &unasked, config),
            Selection::Static(_) => stop_reason(model, state, config).map(|r| match (r, unasked.first()) {
                (Some(reason), _) => Decision::Stop(reason),
                (None, Some(&question)) => Decision::Ask {
                    question,
                    expected_entropy: f64::NAN,
                },
                (None, None) => Decision::Stop(StopReason::Exhausted),
            }),
        };
        let decision = match decision {
            Ok(d) => d,
            Err(e) => return Err(fail(e, transcript)),
        };
        let question = match decision {
            Decision::Stop(reason) => {
                transcript.stop_reason = Some(reason);
                break;
            }
            Decision::Ask { question, .. } => question,
        };
        let answer = match source.answer(question) {
            Ok(Some(a)) => a,
            Ok(None) => {
                transcript.skipped.push(question);
                continue;
            }
            Err(e) => return Err(fail(Error::AnswerSource(e.to_string()), transcript)),
        };
        let next = match update_with(model, &transcript.final_state, question, answer, config.mode) {
            Ok(s) => s,
            Err(e) => return Err(fail(e, transcript)),
        };
        transcript.steps.push(Step {
            question,
            answer,
            entropy: next.entropy(),
            nri: retained(&next).count,
        });
        transcript.final_state = next;
    }
    transcript.ranked = rank(model, &transcript.final_state.posterior);
    Ok(transcript)
}
