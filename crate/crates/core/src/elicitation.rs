//! Property-free elicitation of `P(I)` and `P(Q | I)` from compatibility alone.
//!
//! Two strategies fill the compatible cells of the joint `P(i, q)`:
//! the uniform joint strategy (every compatible pair gets `1/N(Q)`) and the
//! uniform prior strategy (every item gets `1/n`, spread evenly over its
//! compatible answers). Both imply `P(q | i) = δ(i, q) / v_Q(i)`.

use serde::Serialize;

use crate::catalog::{Catalog, ItemIdx, PropertyIdx, QuestionIdx, Strategy, Target};
use crate::error::{Error, Result};
use crate::scalar::{normalize, sum, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ItemPrior<T = f64>(pub Vec<T>);

impl<T: Scalar> ItemPrior<T> {
    pub fn uniform(n: usize) -> Self {
        ItemPrior(vec![T::one() / T::count(n); n])
    }

    pub fn probabilities(&self) -> &[T] {
        &self.0
    }

    pub fn get(&self, item: ItemIdx) -> &T {
        &self.0[item.0]
    }

    pub fn total(&self) -> T {
        sum(&self.0)
    }

    pub fn to_f64(&self) -> ItemPrior<f64> {
        ItemPrior(self.0.iter().map(Scalar::as_f64).collect())
    }
}

/// `P(i, q)` for one question, items by answers.
#[derive(Clone, Debug, PartialEq)]
pub struct JointTable<T = f64> {
    pub question: QuestionIdx,
    pub cells: Vec<Vec<T>>,
}

impl<T: Scalar> JointTable<T> {
    pub fn get(&self, item: ItemIdx, answer: usize) -> &T {
        &self.cells[item.0][answer]
    }

    pub fn total(&self) -> T {
        self.cells.iter().fold(T::zero(), |acc, row| acc + sum(row))
    }

    /// Row sums: the prior this joint implies.
    pub fn implied_prior(&self) -> ItemPrior<T> {
        ItemPrior(self.cells.iter().map(|row| sum(row)).collect())
    }

    /// Rows normalized to `P(q | i)`. Zero rows are kept and flagged.
    pub fn conditional(&self) -> ConditionalTable<T> {
        let mut rows = Vec::with_capacity(self.cells.len());
        let mut infeasible = Vec::with_capacity(self.cells.len());
        for row in &self.cells {
            match normalize(row) {
                Some(r) => {
                    rows.push(r);
                    infeasible.push(false);
                }
                None => {
                    rows.push(vec![T::zero(); row.len()]);
                    infeasible.push(true);
                }
            }
        }
        ConditionalTable {
            scope: Scope::Items,
            rows,
            infeasible,
        }
    }

    /// Unnormalized posterior `P(i) P(q | i) = P(i, q)` over items for one answer.
    pub fn answer_column(&self, answer: usize) -> Vec<T> {
        self.cells.iter().map(|row| row[answer].clone()).collect()
    }
}

/// What the rows of a [`ConditionalTable`] are conditioned on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Items,
    /// Joint states of these properties, mixed-radix order.
    States(Vec<PropertyIdx>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalTable<T = f64> {
    pub scope: Scope,
    pub rows: Vec<Vec<T>>,
    /// Rows whose conditioning state is impossible; these are all-zero.
    pub infeasible: Vec<bool>,
}

impl<T: Scalar> ConditionalTable<T> {
    pub fn row(&self, k: usize) -> &[T] {
        &self.rows[k]
    }

    pub fn get(&self, row: usize, col: usize) -> &T {
        &self.rows[row][col]
    }

    pub fn to_f64(&self) -> ConditionalTable<f64> {
        ConditionalTable {
            scope: self.scope.clone(),
            rows: self
                .rows
                .iter()
                .map(|r| r.iter().map(Scalar::as_f64).collect())
                .collect(),
            infeasible: self.infeasible.clone(),
        }
    }
}

/// `P(q | i) = δ(i, q) / v_Q(i)`; rows with zero versatility are flagged.
pub fn compatibility_conditional<T: Scalar>(catalog: &Catalog, question: QuestionIdx) -> ConditionalTable<T> {
    let q = catalog.question(question);
    let mut rows = Vec::with_capacity(catalog.n_items());
    let mut infeasible = Vec::with_capacity(catalog.n_items());
    for item in catalog.item_indices() {
        let v = catalog.versatility(item, Target::Question(question));
        let row = (0..q.answers.len())
            .map(|a| {
                if v > 0 && catalog.answer_compatible(item, question, a) {
                    T::one() / T::count(v)
                } else {
                    T::zero()
                }
            })
            .collect();
        rows.push(row);
        infeasible.push(v == 0);
    }
    ConditionalTable {
        scope: Scope::Items,
        rows,
        infeasible,
    }
}

/// Uniform joint strategy: `P(i, q) = δ(i, q) / N(Q)`.
pub fn elicit_ujs<T: Scalar>(catalog: &Catalog, question: QuestionIdx) -> Result<JointTable<T>> {
    let pairs = catalog.compatible_pairs(question);
    if pairs == 0 {
        return Err(Error::NoCompatiblePair(catalog.question(question).id.clone()));
    }
    let cell = T::one() / T::count(pairs);
    let width = catalog.question(question).answers.len();
    let cells = catalog
        .item_indices()
        .map(|i| {
            (0..width)
                .map(|a| {
                    if catalog.answer_compatible(i, question, a) {
                        cell.clone()
                    } else {
                        T::zero()
                    }
                })
                .collect()
        })
        .collect();
    Ok(JointTable { question, cells })
}

/// Uniform prior strategy: `P(i, q) = δ(i, q) / (n v_Q(i))`.
pub fn elicit_ups<T: Scalar>(catalog: &Catalog, question: QuestionIdx) -> Result<JointTable<T>> {
    check_versatile(catalog, question)?;
    let n = T::count(catalog.n_items());
    let width = catalog.question(question).answers.len();
    let cells = catalog
        .item_indices()
        .map(|i| {
            let v = T::count(catalog.versatility(i, Target::Question(question)));
            (0..width)
                .map(|a| {
                    if catalog.answer_compatible(i, question, a) {
                        T::one() / (n.clone() * v.clone())
                    } else {
                        T::zero()
                    }
                })
                .collect()
        })
        .collect();
    Ok(JointTable { question, cells })
}

fn check_versatile(catalog: &Catalog, question: QuestionIdx) -> Result<()> {
    let offending: Vec<String> = catalog
        .item_indices()
        .filter(|&i| catalog.versatility(i, Target::Question(question)) == 0)
        .map(|i| catalog.item(i).id.clone())
        .collect();
    if offending.is_empty() {
        Ok(())
    } else {
        Err(Error::ZeroVersatility {
            question: catalog.question(question).id.clone(),
            items: offending,
        })
    }
}

/// True when every item is compatible with exactly one answer.
pub fn is_single_answer(catalog: &Catalog, question: QuestionIdx) -> bool {
    catalog
        .item_indices()
        .all(|i| catalog.versatility(i, Target::Question(question)) == 1)
}

/// The property-free model: prior plus one `P(Q | I)` table per question.
#[derive(Clone, Debug, PartialEq)]
pub struct ElicitedModel<T = f64> {
    pub prior: ItemPrior<T>,
    pub tables: Vec<ConditionalTable<T>>,
    pub strategies: Vec<Strategy>,
}

impl<T: Scalar> ElicitedModel<T> {
    pub fn table(&self, question: QuestionIdx) -> &ConditionalTable<T> {
        &self.tables[question.0]
    }

    pub fn to_f64(&self) -> ElicitedModel<f64> {
        ElicitedModel {
            prior: self.prior.to_f64(),
            tables: self.tables.iter().map(ConditionalTable::to_f64).collect(),
            strategies: self.strategies.clone(),
        }
    }
}

/// Combines per-question strategies under conditional independence of the
/// questions given the item.
///
/// The prior is `∏_{Q ∈ UJS} v_Q(i) / N(Q)` renormalized over items, or
/// uniform when no question uses the joint strategy.
pub fn combine_questions<T: Scalar>(
    catalog: &Catalog,
    ujs: &[QuestionIdx],
    ups: &[QuestionIdx],
) -> Result<ElicitedModel<T>> {
    let m = catalog.n_questions();
    let mut strategies: Vec<Option<Strategy>> = vec![None; m];
    for (set, strategy) in [(ujs, Strategy::Ujs), (ups, Strategy::Ups)] {
        for q in set {
            if q.0 >= m {
                return Err(Error::Unknown {
                    kind: "question",
                    id: q.to_string(),
                });
            }
            if strategies[q.0].replace(strategy).is_some() {
                return Err(Error::invalid(
                    "combine_questions",
                    format!("question `{}` assigned twice", catalog.question(*q).id),
                ));
            }
        }
    }
    let strategies = strategies
        .into_iter()
        .enumerate()
        .map(|(k, s)| {
            s.ok_or_else(|| {
                Error::invalid(
                    "combine_questions",
                    format!("question `{}` has no strategy", catalog.question(QuestionIdx(k)).id),
                )
            })
        })
        .collect::<Result<Vec<_>>>()?;

    for &q in ups {
        check_versatile(catalog, q)?;
    }

    let prior = if ujs.is_empty() {
        ItemPrior::uniform(catalog.n_items())
    } else {
        let mut weights = vec![T::one(); catalog.n_items()];
        for &q in ujs {
            let pairs = catalog.compatible_pairs(q);
            if pairs == 0 {
                return Err(Error::NoCompatiblePair(catalog.question(q).id.clone()));
            }
            let pairs = T::count(pairs);
            for (i, w) in weights.iter_mut().enumerate() {
                let v = catalog.versatility(ItemIdx(i), Target::Question(q));
                *w = w.clone() * T::count(v) / pairs.clone();
            }
        }
        ItemPrior(normalize(&weights).ok_or(Error::ZeroPrior)?)
    };

    let tables = catalog
        .question_indices()
        .map(|q| compatibility_conditional(catalog, q))
        .collect();
    Ok(ElicitedModel {
        prior,
        tables,
        strategies,
    })
}

/// How questions without an explicit strategy tag are assigned.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ElicitOptions {
    pub default_strategy: Strategy,
    /// Strategy for untagged questions in the single-answer case.
    pub single_answer_strategy: Strategy,
    /// Overrides every tag when set.
    pub force: Option<Strategy>,
}

impl Default for ElicitOptions {
    fn default() -> Self {
        ElicitOptions {
            default_strategy: Strategy::Ups,
            single_answer_strategy: Strategy::Ups,
            force: None,
        }
    }
}

impl ElicitOptions {
    pub fn forced(strategy: Strategy) -> Self {
        ElicitOptions {
            force: Some(strategy),
            ..ElicitOptions::default()
        }
    }
}

/// Splits the catalogue's questions into (UJS, UPS) sets.
pub fn partition_questions(catalog: &Catalog, options: &ElicitOptions) -> (Vec<QuestionIdx>, Vec<QuestionIdx>) {
    let mut ujs = Vec::new();
    let mut ups = Vec::new();
    for q in catalog.question_indices() {
        let strategy = options.force.unwrap_or_else(|| {
            catalog.question(q).strategy.unwrap_or(if is_single_answer(catalog, q) {
                options.single_answer_strategy
            } else {
                options.default_strategy
            })
        });
        match strategy {
            Strategy::Ujs => ujs.push(q),
            Strategy::Ups => ups.push(q),
        }
    }
    (ujs, ups)
}

pub fn elicit<T: Scalar>(catalog: &Catalog, options: &ElicitOptions) -> Result<ElicitedModel<T>> {
    let (ujs, ups) = partition_questions(catalog, options);
    combine_questions(catalog, &ujs, &ups)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{Catalog, LoadOptions};
    use crate::scalar::Rational;
    use crate::toy;

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n.into(), d.into())
    }

    fn toy_catalog() -> Catalog {
        Catalog::from_json_str(toy::TOY_CATALOG, &LoadOptions::default()).unwrap()
    }

    #[test]
    fn ujs_joint_cells_are_one_eighth() {
        let c = toy_catalog();
        let q2 = c.question_index("Q2").unwrap();
        let joint = elicit_ujs::<Rational>(&c, q2).unwrap();
        let e = r(1, 8);
        let z = r(0, 1);
        assert_eq!(
            joint.cells,
            vec![
                vec![e.clone(), e.clone(), e.clone(), e.clone()],
                vec![e.clone(), e.clone(), z.clone(), z.clone()],
                vec![z.clone(), z.clone(), e.clone(), e.clone()],
            ]
        );
        assert_eq!(joint.implied_prior(), ItemPrior(vec![r(1, 2), r(1, 4), r(1, 4)]));
    }

    #[test]
    fn ups_joint_matches_table() {
        let c = toy_catalog();
        let q2 = c.question_index("Q2").unwrap();
        let joint = elicit_ups::<Rational>(&c, q2).unwrap();
        assert_eq!(joint.cells[0], vec![r(1, 12); 4]);
        assert_eq!(joint.cells[1], vec![r(1, 6), r(1, 6), r(0, 1), r(0, 1)]);
        assert_eq!(joint.cells[2], vec![r(0, 1), r(0, 1), r(1, 6), r(1, 6)]);
        assert_eq!(joint.implied_prior(), ItemPrior(vec![r(1, 3); 3]));
        // Unnormalized posterior after the wedding answer.
        assert_eq!(joint.answer_column(0), vec![r(1, 12), r(1, 6), r(0, 1)]);
    }

    #[test]
    fn ups_rejects_zero_versatility() {
        let text = r#"{"items": [{"id": "a", "answers": {"Q": ["y"]}}, {"id": "b", "answers": {"Q": []}}],
            "questions": [{"id": "Q", "answers": [{"id": "y"}, {"id": "n"}]}]}"#;
        let c = Catalog::from_json_str(text, &LoadOptions::default()).unwrap();
        match elicit_ups::<f64>(&c, QuestionIdx(0)) {
            Err(Error::ZeroVersatility { items, .. }) => assert_eq!(items, vec!["b".to_string()]),
            other => panic!("unexpected {other:?}"),
        }
        // The joint strategy accepts it and gives `b` no mass.
        let joint = elicit_ujs::<f64>(&c, QuestionIdx(0)).unwrap();
        assert_eq!(joint.implied_prior().0, vec![1.0, 0.0]);
        assert!(joint.conditional().infeasible[1]);
    }

    #[test]
    fn single_answer_case_is_identical_under_both_strategies() {
        let c = toy_catalog();
        let q1 = c.question_index("Q1").unwrap();
        let ujs = elicit_ujs::<Rational>(&c, q1).unwrap();
        let ups = elicit_ups::<Rational>(&c, q1).unwrap();
        assert_eq!(ujs, ups);
        let cond = ujs.conditional();
        assert_eq!(cond.rows[0], vec![r(1, 1), r(0, 1), r(0, 1), r(0, 1)]);
        assert_eq!(cond.rows[2], vec![r(0, 1), r(0, 1), r(0, 1), r(1, 1)]);
        assert_eq!(ujs.implied_prior(), ItemPrior(vec![r(1, 3); 3]));
    }

    #[test]
    fn combine_matches_table_priors() {
        let c = toy_catalog();
        let q1 = c.question_index("Q1").unwrap();
        let q2 = c.question_index("Q2").unwrap();
        let m = combine_questions::<Rational>(&c, &[q2], &[q1]).unwrap();
        assert_eq!(m.prior, ItemPrior(vec![r(1, 2), r(1, 4), r(1, 4)]));
        assert_eq!(m.table(q2).rows[1], vec![r(1, 2), r(1, 2), r(0, 1), r(0, 1)]);
        assert_eq!(m.table(q2).rows[0], vec![r(1, 4); 4]);

        let m = combine_questions::<Rational>(&c, &[], &[q1, q2]).unwrap();
        assert_eq!(m.prior, ItemPrior(vec![r(1, 3); 3]));

        let m = combine_questions::<Rational>(&c, &[q1, q2], &[]).unwrap();
        assert_eq!(m.prior, ItemPrior(vec![r(1, 2), r(1, 4), r(1, 4)]));
    }

    #[test]
    fn combine_rejects_overlapping_or_missing_sets() {
        let c = toy_catalog();
        let q1 = c.question_index("Q1").unwrap();
        let q2 = c.question_index("Q2").unwrap();
        assert!(combine_questions::<f64>(&c, &[q1], &[q1, q2]).is_err());
        assert!(combine_questions::<f64>(&c, &[q1], &[]).is_err());
    }

    #[test]
    fn untagged_single_answer_questions_default_to_ups() {
        let c = toy_catalog();
        let (ujs, ups) = partition_questions(&c, &ElicitOptions::default());
        assert_eq!(ujs, vec![c.question_index("Q2").unwrap()]);
        assert_eq!(ups, vec![c.question_index("Q1").unwrap()]);
        let opts = ElicitOptions {
            single_answer_strategy: Strategy::Ujs,
            ..ElicitOptions::default()
        };
        let (ujs, _) = partition_questions(&c, &opts);
        assert_eq!(ujs.len(), 2);
    }
}
