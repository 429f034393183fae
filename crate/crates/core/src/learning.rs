//! Dirichlet-multinomial learning of property and question tables.
//!
//! Elicited rows become pseudo-counts scaled by an equivalent sample size;
//! observed (expected) counts are added and tables are replaced by the
//! posterior mean. Cells with elicited probability zero are logically
//! forbidden and stay at zero.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::catalog::{
    Catalog, CatalogDocument, PropertyIdx, PropertyTableDoc, QuestionIdx, QuestionLink, QuestionTableDoc, RowDoc,
};
use crate::error::{Error, Result};
use crate::model::{Model, ModelKind};
use crate::property_net::PropertyModel;
use crate::scalar::{normalize, sum, Prob, Scalar};
use crate::sessions::SessionLog;
use crate::states::unflatten;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "index")]
pub enum TableRef {
    /// `P(Q | attached properties)`.
    Question(QuestionIdx),
    /// `P(C | parents)`.
    Property(PropertyIdx),
}

impl TableRef {
    pub fn name(&self, catalog: &Catalog) -> String {
        match self {
            TableRef::Question(q) => format!("question:{}", catalog.question(*q).id),
            TableRef::Property(p) => format!("property:{}", catalog.property(*p).id),
        }
    }
}

impl fmt::Display for TableRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TableRef::Question(q) => write!(f, "question {q}"),
            TableRef::Property(p) => write!(f, "property {p}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirichletRow<T = f64> {
    pub alpha: Vec<T>,
    /// Cells that can never receive counts.
    pub frozen: Vec<bool>,
    /// Rows whose conditioning state is impossible; kept all-zero.
    pub infeasible: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirichletParams<T = f64> {
    pub target: TableRef,
    pub ess: T,
    pub rows: Vec<DirichletRow<T>>,
}

/// `α = ess × row` for every row of `table`. All-zero rows are treated as
/// infeasible conditioning states.
pub fn prior_to_pseudocounts<T: Scalar>(target: TableRef, table: &[Vec<T>], ess: T) -> Result<DirichletParams<T>> {
    if ess <= T::zero() {
        return Err(Error::InvalidEss(ess.as_f64()));
    }
    let rows = table
        .iter()
        .map(|row| DirichletRow {
            alpha: row.iter().map(|p| p.clone() * ess.clone()).collect(),
            frozen: row.iter().map(|p| p.is_zero()).collect(),
            infeasible: row.iter().all(|p| p.is_zero()),
        })
        .collect();
    Ok(DirichletParams { target, ess, rows })
}

/// One (possibly fractional) count for a cell of a table.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation<T = f64> {
    pub target: TableRef,
    pub row: usize,
    pub cell: usize,
    pub weight: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rejected<T = f64> {
    pub observation: Observation<T>,
    pub reason: String,
}

/// Adds the counts of `observations` addressed to `params.target`.
///
/// An observation on a frozen cell is an error, or is skipped and reported
/// when `lenient`.
pub fn update_from_log<T: Scalar>(
    params: &DirichletParams<T>,
    observations: &[Observation<T>],
    lenient: bool,
) -> Result<(DirichletParams<T>, Vec<Rejected<T>>)> {
    let mut out = params.clone();
    let mut rejected = Vec::new();
    for obs in observations.iter().filter(|o| o.target == params.target) {
        let reason = match out.rows.get(obs.row) {
            None => Some(format!("row {} out of range", obs.row)),
            Some(row) if obs.cell >= row.alpha.len() => Some(format!("cell {} out of range", obs.cell)),
            Some(row) if row.frozen[obs.cell] => Some(format!("cell ({}, {}) is logically forbidden", obs.row, obs.cell)),
            Some(_) if obs.weight < T::zero() => Some("negative weight".to_string()),
            Some(_) => None,
        };
        match reason {
            Some(reason) if lenient => rejected.push(Rejected {
                observation: obs.clone(),
                reason,
            }),
            Some(reason) => return Err(Error::ForbiddenCell(format!("{}: {reason}", obs.target))),
            None => {
                let a = &mut out.rows[obs.row].alpha[obs.cell];
                *a = a.clone() + obs.weight.clone();
            }
        }
    }
    Ok((out, rejected))
}

/// `α / Σα` row by row; infeasible rows stay all-zero.
pub fn posterior_mean_cpt<T: Scalar>(params: &DirichletParams<T>) -> Result<Vec<Vec<T>>> {
    params
        .rows
        .iter()
        .enumerate()
        .map(|(k, row)| {
            if row.infeasible {
                return Ok(vec![T::zero(); row.alpha.len()]);
            }
            normalize(&row.alpha).ok_or_else(|| Error::ZeroRow {
                table: params.target.to_string(),
                row: k,
            })
        })
        .collect()
}

/// Expected cell counts implied by recorded sessions.
///
/// For each session, the atoms of the chosen items are weighted by their
/// posterior given the session's answers. Each atom contributes its weight
/// to the row of every question answered and every property table, indexed
/// by the atom's joint state. Sessions choosing `k` items give weight `1/k`
/// to each. Answers to questions irrelevant for the chosen item are
/// ignored. Returns the observations and the ids of sessions that carry no
/// usable evidence (no chosen item, or answers impossible for it).
pub fn observations_from_sessions<T: Scalar>(
    catalog: &Catalog,
    model: &PropertyModel<T>,
    sessions: &[SessionLog],
) -> (Vec<Observation<T>>, Vec<String>) {
    let atoms = model.atoms();
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for session in sessions {
        if session.chosen.is_empty() {
            skipped.push(session.id.clone());
            continue;
        }
        let share = T::one() / T::count(session.chosen.len());
        let mut used = false;
        for &item in &session.chosen {
            // Answers to questions that do not apply to the item say nothing
            // about its properties.
            let answers: Vec<(QuestionIdx, usize)> = session
                .answers
                .iter()
                .copied()
                .filter(|(q, _)| catalog.question(*q).is_relevant(item))
                .collect();
            let weights: Vec<(usize, T)> = atoms
                .iter()
                .filter(|(i, _, _)| *i == item)
                .map(|(_, state, prior)| {
                    let w = answers.iter().fold(prior.clone(), |acc, (q, a)| {
                        acc * model.answer_given_state(*q, *state, *a).clone()
                    });
                    (*state, w)
                })
                .collect();
            let total = weights.iter().fold(T::zero(), |acc, (_, w)| acc + w.clone());
            if total.is_zero() {
                continue;
            }
            used = true;
            for (state, w) in weights {
                if w.is_zero() {
                    continue;
                }
                let weight = w / total.clone() * share.clone();
                let joint = &model.feasible.state(state).0;
                for (q, a) in &answers {
                    out.push(Observation {
                        target: TableRef::Question(*q),
                        row: model.cpts[q.0].row_index(joint),
                        cell: *a,
                        weight: weight.clone(),
                    });
                }
                if let Some(factors) = model.prior.factors() {
                    for f in factors {
                        out.push(Observation {
                            target: TableRef::Property(f.property),
                            row: f.row_index(joint),
                            cell: joint[f.property.0],
                            weight: weight.clone(),
                        });
                    }
                }
            }
        }
        if !used {
            skipped.push(session.id.clone());
        }
    }
    (out, skipped)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LearnOptions<T = f64> {
    pub ess: T,
    /// Overrides keyed by [`TableRef::name`], e.g. `property:C1`.
    pub per_table: BTreeMap<String, T>,
    pub lenient: bool,
}

impl<T: Scalar> Default for LearnOptions<T> {
    fn default() -> Self {
        LearnOptions {
            ess: T::one(),
            per_table: BTreeMap::new(),
            lenient: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct LearnOutcome<T = f64> {
    pub params: Vec<DirichletParams<T>>,
    pub tables: Vec<(TableRef, Vec<Vec<T>>)>,
    pub rejected: Vec<Rejected<T>>,
    pub skipped_sessions: Vec<String>,
}

/// Learns every factorized property table and every question table with an
/// explicit CPT. Latent-clone tables are one-hot and therefore fixed.
pub fn learn<T: Scalar>(model: &Model<T>, sessions: &[SessionLog], options: &LearnOptions<T>) -> Result<LearnOutcome<T>> {
    let catalog = model.catalog();
    let ModelKind::Properties(net) = model.kind() else {
        return Err(Error::Unsupported("learning needs the property model".into()));
    };
    let Some(factors) = net.prior.factors() else {
        return Err(Error::Unsupported(
            "learning needs factorized property tables, not a flat joint".into(),
        ));
    };
    let mut targets: Vec<(TableRef, Vec<Vec<T>>)> = factors
        .iter()
        .map(|f| (TableRef::Property(f.property), f.rows.clone()))
        .collect();
    for q in catalog.question_indices() {
        if matches!(catalog.question(q).link, QuestionLink::Table(_)) {
            targets.push((TableRef::Question(q), net.cpts[q.0].rows.clone()));
        }
    }
    let (observations, skipped_sessions) = observations_from_sessions(catalog, net, sessions);
    let mut params = Vec::new();
    let mut tables = Vec::new();
    let mut rejected = Vec::new();
    for (target, rows) in targets {
        let ess = options.per_table.get(&target.name(catalog)).unwrap_or(&options.ess).clone();
        let prior = prior_to_pseudocounts(target, &rows, ess)?;
        let (posterior, mut dropped) = update_from_log(&prior, &observations, options.lenient)?;
        rejected.append(&mut dropped);
        tables.push((target, posterior_mean_cpt(&posterior)?));
        params.push(posterior);
    }
    Ok(LearnOutcome {
        params,
        tables,
        rejected,
        skipped_sessions,
    })
}

/// The catalogue document with learned tables written into `expert_tables`.
///
/// Infeasible rows, which carry no mass, keep the expert's row (or a uniform
/// one) so the document stays loadable.
pub fn write_back<T: Scalar>(catalog: &Catalog, tables: &[(TableRef, Vec<Vec<T>>)]) -> Result<CatalogDocument> {
    let mut doc = catalog.document().clone();
    for (target, rows) in tables {
        let (props, width, name, fallback): (Vec<PropertyIdx>, usize, String, Option<Vec<Vec<Prob>>>) = match target {
            TableRef::Property(p) => {
                let prop = catalog.property(*p);
                (
                    prop.parents.clone(),
                    prop.values.len(),
                    prop.id.clone(),
                    catalog.expert().property_rows[p.0].clone(),
                )
            }
            TableRef::Question(q) => {
                let question = catalog.question(*q);
                let fallback = match &question.link {
                    QuestionLink::Table(rows) => Some(rows.clone()),
                    QuestionLink::Identity => None,
                };
                (question.properties.clone(), question.answers.len(), question.id.clone(), fallback)
            }
        };
        let radices = catalog.radices_of(&props);
        let docs: Vec<RowDoc> = rows
            .iter()
            .enumerate()
            .map(|(k, row)| {
                let digits = unflatten(k, &radices);
                let given = props
                    .iter()
                    .zip(&digits)
                    .map(|(p, v)| {
                        let prop = catalog.property(*p);
                        (prop.id.clone(), prop.values[*v].clone())
                    })
                    .collect();
                let probs = if sum(row).is_zero() {
                    match &fallback {
                        Some(f) => f[k].clone(),
                        None => vec![Prob::ratio(1, width as i64); width],
                    }
                } else {
                    row.iter().map(Scalar::to_prob).collect()
                };
                RowDoc { given, probs }
            })
            .collect();
        match target {
            TableRef::Property(_) => {
                doc.expert_tables.property_tables.retain(|t| t.property != name);
                doc.expert_tables.property_tables.push(PropertyTableDoc { property: name, rows: docs });
            }
            TableRef::Question(_) => {
                doc.expert_tables.question_tables.retain(|t| t.question != name);
                doc.expert_tables.question_tables.push(QuestionTableDoc { question: name, rows: docs });
            }
        }
    }
    Ok(doc)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::catalog::{ItemIdx, LoadOptions};
    use crate::elicitation::ElicitOptions;
    use crate::model::ModelChoice;
    use crate::scalar::Rational;
    use crate::toy;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    const C1: TableRef = TableRef::Property(PropertyIdx(0));

    fn obs(row: usize, cell: usize, weight: Rational) -> Observation<Rational> {
        Observation {
            target: C1,
            row,
            cell,
            weight,
        }
    }

    #[test]
    fn scaling_and_conjugate_update() {
        let p = prior_to_pseudocounts(C1, &[vec![r(1, 2), r(1, 2)]], r(4, 1)).unwrap();
        assert_eq!(p.rows[0].alpha, vec![r(2, 1), r(2, 1)]);
        let counts = [obs(0, 0, r(1, 1)), obs(0, 0, r(2, 1)), obs(0, 1, r(1, 1))];
        let (post, rejected) = update_from_log(&p, &counts, false).unwrap();
        assert!(rejected.is_empty());
        assert_eq!(post.rows[0].alpha, vec![r(5, 1), r(3, 1)]);
        assert_eq!(posterior_mean_cpt(&post).unwrap(), vec![vec![r(5, 8), r(3, 8)]]);
        assert_eq!(posterior_mean_cpt(&p).unwrap(), vec![vec![r(1, 2), r(1, 2)]]);
    }

    #[test]
    fn frozen_cells_never_move() {
        let row = vec![r(2, 3), r(1, 3), r(0, 1), r(0, 1)];
        let p = prior_to_pseudocounts(C1, &[row.clone()], r(3, 1)).unwrap();
        assert_eq!(p.rows[0].alpha, vec![r(2, 1), r(1, 1), r(0, 1), r(0, 1)]);
        assert_eq!(posterior_mean_cpt(&p).unwrap()[0], row);
        assert!(matches!(update_from_log(&p, &[obs(0, 2, r(1, 1))], false), Err(Error::ForbiddenCell(_))));
        let (post, rejected) = update_from_log(&p, &[obs(0, 2, r(1, 1)), obs(0, 1, r(1, 1))], true).unwrap();
        assert_eq!(rejected.len(), 1);
        assert_eq!(post.rows[0].alpha[2], r(0, 1));

        let one_hot = prior_to_pseudocounts(C1, &[vec![r(0, 1), r(1, 1)]], r(1, 1)).unwrap();
        let (post, _) = update_from_log(&one_hot, &[obs(0, 1, r(50, 1))], true).unwrap();
        assert_eq!(posterior_mean_cpt(&post).unwrap()[0], vec![r(0, 1), r(1, 1)]);
    }

    #[test]
    fn invalid_ess_and_zero_rows() {
        assert!(matches!(prior_to_pseudocounts(C1, &[vec![1.0]], 0.0), Err(Error::InvalidEss(_))));
        let params = DirichletParams {
            target: C1,
            ess: 1.0,
            rows: vec![DirichletRow {
                alpha: vec![0.0, 0.0],
                frozen: vec![false, false],
                infeasible: false,
            }],
        };
        assert!(matches!(posterior_mean_cpt(&params), Err(Error::ZeroRow { .. })));
    }

    #[test]
    fn empty_log_changes_nothing() {
        let p = prior_to_pseudocounts(C1, &[vec![r(1, 3), r(2, 3)]], r(7, 2)).unwrap();
        assert_eq!(update_from_log(&p, &[], false).unwrap().0, p);
    }

    #[test]
    fn learning_from_sessions_on_property_toy() {
        let c = Arc::new(Catalog::from_json_str(toy::TOY_PROPERTY_CATALOG, &LoadOptions::default()).unwrap());
        let m = Model::<Rational>::build(c.clone(), ModelChoice::Properties, &ElicitOptions::default()).unwrap();
        let wedding = c.answer_ref("Q2", "wedding").unwrap();
        let sessions = vec![SessionLog {
            id: "s".into(),
            chosen: vec![ItemIdx(1)],
            answers: vec![wedding],
        }];
        let options = LearnOptions {
            ess: r(1, 1),
            ..LearnOptions::default()
        };
        let outcome = learn(&m, &sessions, &options).unwrap();
        assert!(outcome.skipped_sessions.is_empty());
        let c2 = c.property_index("C2").unwrap();
        let (_, c2_table) = outcome.tables.iter().find(|(t, _)| *t == TableRef::Property(c2)).unwrap();
        // Prior row (2/3, 1/9, 1/9, 1/9) plus one wedding count, over 2.
        assert_eq!(c2_table[0], vec![r(5, 6), r(1, 18), r(1, 18), r(1, 18)]);

        let zero = learn(&m, &[], &options).unwrap();
        for ((target, rows), f) in zero.tables.iter().zip(match m.kind() {
            ModelKind::Properties(net) => net.prior.factors().unwrap(),
            _ => unreachable!(),
        }) {
            assert_eq!(*target, TableRef::Property(f.property));
            assert_eq!(rows, &f.rows);
        }

        let doc = write_back(&c, &outcome.tables).unwrap();
        let reloaded = Catalog::from_document(doc, &LoadOptions::default()).unwrap();
        let relearned = Model::<Rational>::properties(Arc::new(reloaded)).unwrap();
        assert!(relearned.is_property_model());
        assert_eq!(relearned.item_prior().len(), 3);
    }
}
