//! Recorded conversations.
//!
//! CSV with header `session_id,chosen_item,question_id,answer_id`. A row may
//! carry a chosen item, a question/answer pair, or both; rows of one session
//! need not be contiguous. Answers keep the order in which they appear.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::{Catalog, ItemIdx, QuestionIdx};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionLog {
    pub id: String,
    /// Items selected at the end of the conversation.
    pub chosen: Vec<ItemIdx>,
    pub answers: Vec<(QuestionIdx, usize)>,
}

#[derive(Debug, Deserialize, Serialize)]
struct Row {
    session_id: String,
    #[serde(default)]
    chosen_item: String,
    #[serde(default)]
    question_id: String,
    #[serde(default)]
    answer_id: String,
}

pub fn read_sessions_file(path: impl AsRef<Path>, catalog: &Catalog) -> Result<Vec<SessionLog>> {
    read_sessions(std::fs::File::open(path)?, catalog)
}

pub fn read_sessions<R: Read>(reader: R, catalog: &Catalog) -> Result<Vec<SessionLog>> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut sessions: Vec<SessionLog> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    let headers = csv.headers()?.clone();
    for raw in csv.records() {
        let raw = raw.map_err(|e| Error::Log {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = raw.position().map_or(0, |p| p.line() as usize);
        let bad = |message: String| Error::Log { line, message };
        let record: Row = raw.deserialize(Some(&headers)).map_err(|e| bad(e.to_string()))?;
        if record.session_id.is_empty() {
            return Err(bad("empty session_id".into()));
        }
        let k = *by_id.entry(record.session_id.clone()).or_insert_with(|| {
            sessions.push(SessionLog {
                id: record.session_id.clone(),
                ..SessionLog::default()
            });
            sessions.len() - 1
        });
        let session = &mut sessions[k];
        if !record.chosen_item.is_empty() {
            let item = catalog.item_index(&record.chosen_item).map_err(|e| bad(e.to_string()))?;
            if !session.chosen.contains(&item) {
                session.chosen.push(item);
            }
        }
        match (record.question_id.is_empty(), record.answer_id.is_empty()) {
            (true, true) => {}
            (false, false) => {
                let (q, a) = catalog
                    .answer_ref(&record.question_id, &record.answer_id)
                    .map_err(|e| bad(e.to_string()))?;
                match session.answers.iter().find(|(prev, _)| *prev == q) {
                    Some((_, prev)) if *prev == a => {}
                    Some(_) => {
                        return Err(bad(format!(
                            "session `{}` answers question `{}` twice",
                            session.id, record.question_id
                        )))
                    }
                    None => session.answers.push((q, a)),
                }
            }
            _ => return Err(bad("question_id and answer_id must be given together".into())),
        }
    }
    Ok(sessions)
}

pub fn write_sessions<W: Write>(writer: W, catalog: &Catalog, sessions: &[SessionLog]) -> Result<()> {
    let mut csv = csv::Writer::from_writer(writer);
    for s in sessions {
        let chosen: Vec<String> = s.chosen.iter().map(|i| catalog.item(*i).id.clone()).collect();
        let rows = chosen.len().max(s.answers.len()).max(1);
        for k in 0..rows {
            let (question_id, answer_id) = match s.answers.get(k) {
                Some((q, a)) => {
                    let question = catalog.question(*q);
                    (question.id.clone(), question.answers[*a].id.clone())
                }
                None => (String::new(), String::new()),
            };
            csv.serialize(Row {
                session_id: s.id.clone(),
                chosen_item: chosen.get(k).cloned().unwrap_or_default(),
                question_id,
                answer_id,
            })?;
        }
    }
    csv.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::LoadOptions;
    use crate::toy;

    fn toy() -> Catalog {
        Catalog::from_json_str(toy::TOY_CATALOG, &LoadOptions::default()).unwrap()
    }

    #[test]
    fn reads_interleaved_rows() {
        let text = "session_id,chosen_item,question_id,answer_id\n\
                    s1,i1,Q1,dj\n\
                    s2,,Q2,wedding\n\
                    s1,,Q2,birthday\n\
                    s2,i2,,\n";
        let sessions = read_sessions(text.as_bytes(), &toy()).unwrap();
        assert_eq!(sessions.len(), 2);
        assert_eq!(sessions[0].chosen, vec![ItemIdx(0)]);
        assert_eq!(sessions[0].answers, vec![(QuestionIdx(0), 0), (QuestionIdx(1), 2)]);
        assert_eq!(sessions[1].chosen, vec![ItemIdx(1)]);
    }

    #[test]
    fn malformed_rows_report_line_numbers() {
        let text = "session_id,chosen_item,question_id,answer_id\ns1,i1,Q1,dj\ns1,,Q1,bogus\n";
        match read_sessions(text.as_bytes(), &toy()).unwrap_err() {
            Error::Log { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
        let text = "session_id,chosen_item,question_id,answer_id\ns1,i1,Q1,\n";
        assert!(matches!(read_sessions(text.as_bytes(), &toy()), Err(Error::Log { line: 2, .. })));
    }

    #[test]
    fn write_then_read_round_trips() {
        let catalog = toy();
        let sessions = vec![
            SessionLog {
                id: "a".into(),
                chosen: vec![ItemIdx(2)],
                answers: vec![(QuestionIdx(1), 3), (QuestionIdx(0), 3)],
            },
            SessionLog {
                id: "b".into(),
                chosen: vec![ItemIdx(0), ItemIdx(1)],
                answers: vec![],
            },
        ];
        let mut buf = Vec::new();
        write_sessions(&mut buf, &catalog, &sessions).unwrap();
        assert_eq!(read_sessions(buf.as_slice(), &catalog).unwrap(), sessions);
    }
}
