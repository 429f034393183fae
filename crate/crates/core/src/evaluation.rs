//! Replay of recorded sessions and the metrics derived from it.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adaptive::{run_with, stopping_threshold, RecordedAnswers, Selection, StopReason, StoppingConfig};
use crate::catalog::ItemIdx;
use crate::error::{Error, Result};
use crate::inference::retained;
use crate::model::Model;
use crate::sessions::SessionLog;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    #[default]
    Adaptive,
    /// Catalogue order, as a fixed questionnaire would.
    Static,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub id: String,
    /// Normalized entropy before the first answer and after each one.
    pub entropy: Vec<f64>,
    /// Retained item count, same indexing as `entropy`.
    pub nri: Vec<usize>,
    pub questions_asked: usize,
    pub stop_reason: StopReason,
    /// Empty after a contradiction.
    pub retained: Vec<ItemIdx>,
    pub contradiction: bool,
    /// Fraction of the session's chosen items still retained.
    pub fi: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub step: usize,
    pub mean_entropy: f64,
    pub mean_nri: f64,
    /// Sessions still running at this step. Finished sessions contribute
    /// their final values to the means.
    pub sessions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayMetrics {
    pub n_items: usize,
    pub n_questions: usize,
    pub sessions: Vec<SessionMetrics>,
    pub curve: Vec<CurvePoint>,
    /// Mean FI over sessions that have a reference selection.
    pub mean_fi: Option<f64>,
    pub contradictions: usize,
}

/// `|retained ∩ reference| / |reference|`.
pub fn fraction_items_retained(retained: &[ItemIdx], reference: &[ItemIdx]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    let hits = reference.iter().filter(|r| retained.contains(r)).count();
    Ok(hits as f64 / reference.len() as f64)
}

fn replay_session(model: &Model<f64>, session: &SessionLog, config: &StoppingConfig, order: Order) -> Result<SessionMetrics> {
    let selection = match order {
        Order::Adaptive => Selection::Adaptive,
        Order::Static => Selection::Static(model.catalog().question_indices().collect()),
    };
    let mut source = RecordedAnswers(session.answers.clone());
    let transcript = run_with(model, &mut source, config, &selection).map_err(|f| f.error)?;
    let state = &transcript.final_state;
    let mut nri = vec![model.n_items()];
    nri.extend(transcript.steps.iter().map(|s| s.nri));
    let contradiction = state.contradiction;
    let kept = if contradiction {
        if let Some(last) = nri.last_mut() {
            *last = 0;
        }
        Vec::new()
    } else {
        retained(state).items
    };
    let fi = if session.chosen.is_empty() {
        None
    } else {
        Some(fraction_items_retained(&kept, &session.chosen)?)
    };
    Ok(SessionMetrics {
        id: session.id.clone(),
        entropy: state.entropy_trace.clone(),
        nri,
        questions_asked: transcript.steps.len(),
        stop_reason: transcript.stop_reason.unwrap_or(StopReason::Exhausted),
        retained: kept,
        contradiction,
        fi,
    })
}

/// Runs each recorded session through the conversation loop, answering
/// from the log and skipping questions it does not cover.
pub fn replay(model: &Model<f64>, sessions: &[SessionLog], config: &StoppingConfig, order: Order) -> Result<ReplayMetrics> {
    if sessions.is_empty() {
        return Err(Error::NoSessions);
    }
    let metrics = sessions
        .iter()
        .map(|s| replay_session(model, s, config, order))
        .collect::<Result<Vec<_>>>()?;
    let longest = metrics.iter().map(|m| m.entropy.len()).max().unwrap_or(1);
    let count = metrics.len() as f64;
    let curve = (0..longest)
        .map(|step| {
            let at = |v: &[f64]| v[step.min(v.len() - 1)];
            CurvePoint {
                step,
                mean_entropy: metrics.iter().map(|m| at(&m.entropy)).sum::<f64>() / count,
                mean_nri: metrics
                    .iter()
                    .map(|m| m.nri[step.min(m.nri.len() - 1)] as f64)
                    .sum::<f64>()
                    / count,
                sessions: metrics.iter().filter(|m| m.entropy.len() > step).count(),
            }
        })
        .collect();
    let fis: Vec<f64> = metrics.iter().filter_map(|m| m.fi).collect();
    Ok(ReplayMetrics {
        n_items: model.n_items(),
        n_questions: model.catalog().n_questions(),
        contradictions: metrics.iter().filter(|m| m.contradiction).count(),
        mean_fi: (!fis.is_empty()).then(|| fis.iter().sum::<f64>() / fis.len() as f64),
        sessions: metrics,
        curve,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub s: usize,
    pub threshold: f64,
    /// Mean final retained count over `n`.
    pub mean_nri_frac: f64,
    /// Mean number of questions asked over `m`.
    pub mean_nq_frac: f64,
    pub mean_fi: Option<f64>,
}

/// Replays the log once per stopping target `s`.
pub fn sweep_threshold(
    model: &Model<f64>,
    sessions: &[SessionLog],
    s_values: &[usize],
    base: &StoppingConfig,
    order: Order,
) -> Result<Vec<SweepPoint>> {
    let n = model.n_items() as f64;
    let m = model.catalog().n_questions().max(1) as f64;
    s_values
        .iter()
        .map(|&s| {
            let threshold = stopping_threshold(s, model.n_items())?;
            let config = StoppingConfig {
                stop_s: Some(s),
                ..*base
            };
            let metrics = replay(model, sessions, &config, order)?;
            let count = metrics.sessions.len() as f64;
            Ok(SweepPoint {
                s,
                threshold,
                mean_nri_frac: metrics.sessions.iter().map(|x| x.retained.len() as f64).sum::<f64>() / count / n,
                mean_nq_frac: metrics.sessions.iter().map(|x| x.questions_asked as f64).sum::<f64>() / count / m,
                mean_fi: metrics.mean_fi,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct PlotData<'a> {
    n_items: usize,
    n_questions: usize,
    questions: PlotSeries,
    threshold: ThresholdSeries,
    mean_fi: Option<f64>,
    contradictions: usize,
    sessions: &'a [SessionMetrics],
}

#[derive(Serialize)]
struct PlotSeries {
    step: Vec<usize>,
    mean_entropy: Vec<f64>,
    mean_nri: Vec<f64>,
}

#[derive(Serialize)]
struct ThresholdSeries {
    s: Vec<usize>,
    threshold: Vec<f64>,
    mean_nri_frac: Vec<f64>,
    mean_nq_frac: Vec<f64>,
}

/// Writes `curve_questions.csv` (step, mean_entropy, mean_nri, sessions),
/// `curve_threshold.csv` (s, threshold, mean_nri_frac, mean_nq_frac) and
/// `plot_data.json` into `dir`, creating it if needed.
pub fn emit_report(metrics: &ReplayMetrics, sweep: &[SweepPoint], dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;

    let questions_path = dir.join("curve_questions.csv");
    let mut w = csv::Writer::from_path(&questions_path)?;
    w.write_record(["step", "mean_entropy", "mean_nri", "sessions"])?;
    for p in &metrics.curve {
        w.write_record([
            p.step.to_string(),
            format!("{:.12}", p.mean_entropy),
            format!("{:.6}", p.mean_nri),
            p.sessions.to_string(),
        ])?;
    }
    w.flush()?;

    let threshold_path = dir.join("curve_threshold.csv");
    let mut w = csv::Writer::from_path(&threshold_path)?;
    w.write_record(["s", "threshold", "mean_nri_frac", "mean_nq_frac"])?;
    for p in sweep {
        w.write_record([
            p.s.to_string(),
            format!("{:.12}", p.threshold),
            format!("{:.12}", p.mean_nri_frac),
            format!("{:.12}", p.mean_nq_frac),
        ])?;
    }
    w.flush()?;

    let plot_path = dir.join("plot_data.json");
    let plot = PlotData {
        n_items: metrics.n_items,
        n_questions: metrics.n_questions,
        questions: PlotSeries {
            step: metrics.curve.iter().map(|p| p.step).collect(),
            mean_entropy: metrics.curve.iter().map(|p| p.mean_entropy).collect(),
            mean_nri: metrics.curve.iter().map(|p| p.mean_nri).collect(),
        },
        threshold: ThresholdSeries {
            s: sweep.iter().map(|p| p.s).collect(),
            threshold: sweep.iter().map(|p| p.threshold).collect(),
            mean_nri_frac: sweep.iter().map(|p| p.mean_nri_frac).collect(),
            mean_nq_frac: sweep.iter().map(|p| p.mean_nq_frac).collect(),
        },
        mean_fi: metrics.mean_fi,
        contradictions: metrics.contradictions,
        sessions: &metrics.sessions,
    };
    fs::write(&plot_path, serde_json::to_string_pretty(&plot)? + "\n")?;
    Ok(vec![questions_path, threshold_path, plot_path])
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::catalog::{Catalog, LoadOptions, QuestionIdx, Strategy};
    use crate::elicitation::ElicitOptions;
    use crate::model::ModelChoice;
    use crate::toy;

    fn toy_model() -> Model {
        let c = Arc::new(Catalog::from_json_str(toy::TOY_CATALOG, &LoadOptions::default()).unwrap());
        Model::build(c, ModelChoice::PropertyFree, &ElicitOptions::forced(Strategy::Ujs)).unwrap()
    }

    fn session(id: &str, chosen: &[usize], answers: &[(usize, usize)]) -> SessionLog {
        SessionLog {
            id: id.into(),
            chosen: chosen.iter().map(|&i| ItemIdx(i)).collect(),
            answers: answers.iter().map(|&(q, a)| (QuestionIdx(q), a)).collect(),
        }
    }

    #[test]
    fn dj_log_traces() {
        let m = toy_model();
        let metrics = replay(&m, &[session("s", &[0], &[(0, 0)])], &StoppingConfig::default(), Order::Adaptive).unwrap();
        let s = &metrics.sessions[0];
        assert_eq!(s.nri, vec![3, 1]);
        assert_eq!(s.entropy.len(), 2);
        assert!((s.entropy[0] - 1.5 * 2f64.ln() / 3f64.ln()).abs() < 1e-12);
        assert_eq!(s.entropy[1], 0.0);
        assert_eq!(s.fi, Some(1.0));
    }

    #[test]
    fn contradiction_counts_as_empty() {
        let m = toy_model();
        // Band, then children's party: no item fits both.
        let metrics = replay(&m, &[session("s", &[1], &[(0, 1), (1, 3)])], &StoppingConfig::default(), Order::Static).unwrap();
        let s = &metrics.sessions[0];
        assert!(s.contradiction);
        assert_eq!(s.stop_reason, StopReason::Contradiction);
        assert!(s.retained.is_empty());
        assert_eq!(s.fi, Some(0.0));
        assert_eq!(*s.nri.last().unwrap(), 0);
        assert_eq!(metrics.contradictions, 1);
    }

    #[test]
    fn empty_log_is_an_error() {
        assert!(matches!(replay(&toy_model(), &[], &StoppingConfig::default(), Order::Adaptive), Err(Error::NoSessions)));
    }

    #[test]
    fn fi_set_arithmetic() {
        let i = |k| ItemIdx(k);
        assert_eq!(fraction_items_retained(&[i(0)], &[i(0), i(1)]).unwrap(), 0.5);
        assert_eq!(fraction_items_retained(&[i(0), i(1), i(2)], &[i(0), i(1)]).unwrap(), 1.0);
        assert_eq!(fraction_items_retained(&[i(2)], &[i(0), i(1)]).unwrap(), 0.0);
        assert!(fraction_items_retained(&[i(2)], &[]).is_err());
    }

    #[test]
    fn sweep_extremes_on_toy() {
        let m = toy_model();
        let log: Vec<SessionLog> = (0..4)
            .map(|a| session(&format!("s{a}"), &[a.min(2)], &[(0, [0, 1, 3, 3][a]), (1, 2)]))
            .collect();
        let points = sweep_threshold(&m, &log, &[1, 3], &StoppingConfig::default(), Order::Adaptive).unwrap();
        assert!((points[0].mean_nri_frac - 1.0 / 3.0).abs() < 1e-12);
        assert!(points[0].mean_nq_frac <= 1.0);
        assert_eq!(points[1].mean_nq_frac, 0.0);
    }

    #[test]
    fn report_files_are_written_deterministically() {
        let m = toy_model();
        let log = vec![session("a", &[0], &[(0, 0)]), session("b", &[2], &[(1, 2), (0, 3)])];
        let metrics = replay(&m, &log, &StoppingConfig::default(), Order::Adaptive).unwrap();
        let sweep = sweep_threshold(&m, &log, &[1, 2, 3], &StoppingConfig::default(), Order::Adaptive).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("nested/report");
        let files = emit_report(&metrics, &sweep, &out).unwrap();
        let first: Vec<String> = files.iter().map(|f| fs::read_to_string(f).unwrap()).collect();
        assert!(first[0].starts_with("step,mean_entropy,mean_nri,sessions\n"));
        assert!(first[1].starts_with("s,threshold,mean_nri_frac,mean_nq_frac\n"));
        emit_report(&metrics, &sweep, &out).unwrap();
        let second: Vec<String> = files.iter().map(|f| fs::read_to_string(f).unwrap()).collect();
        assert_eq!(first, second);
        assert_eq!(replay(&m, &log, &StoppingConfig::default(), Order::Adaptive).unwrap(), metrics);
    }
}
