//! Property-layer model.
//!
//! Items are described by latent categorical properties; questions depend on
//! items only through the properties they are attached to. The joint prior
//! over property states is elicited from expert tables, revised so that
//! states compatible with no item carry zero mass, and spread uniformly over
//! the items compatible with each state: `P(i | c) = δ(i, c) / N(c)`.

use crate::catalog::{Catalog, FeasibleSet, ItemIdx, Property, PropertyIdx, QuestionIdx, QuestionLink};
use crate::elicitation::ItemPrior;
use crate::error::{Error, Result};
use crate::scalar::{normalize, sum, Scalar};
use crate::states::{flat_index, state_count};

/// `P(q | c_attached)` for one question.
#[derive(Clone, Debug, PartialEq)]
pub struct QuestionCpt<T = f64> {
    pub question: QuestionIdx,
    pub properties: Vec<PropertyIdx>,
    radices: Vec<usize>,
    pub rows: Vec<Vec<T>>,
    pub identity: bool,
}

impl<T: Scalar> QuestionCpt<T> {
    /// Row index for a full joint state (one value per catalogue property).
    pub fn row_index(&self, state: &[usize]) -> usize {
        let digits: Vec<usize> = self.properties.iter().map(|p| state[p.0]).collect();
        flat_index(&digits, &self.radices)
    }

    pub fn prob(&self, state: &[usize], answer: usize) -> &T {
        &self.rows[self.row_index(state)][answer]
    }

    pub fn to_f64(&self) -> QuestionCpt<f64> {
        QuestionCpt {
            question: self.question,
            properties: self.properties.clone(),
            radices: self.radices.clone(),
            rows: self.rows.iter().map(|r| r.iter().map(Scalar::as_f64).collect()).collect(),
            identity: self.identity,
        }
    }
}

/// A property created as the latent clone of a question.
#[derive(Clone, Debug)]
pub struct LatentClone<T = f64> {
    pub property: Property,
    pub cpt: QuestionCpt<T>,
    /// `δ(i, c) = δ(i, q)`, per item then value.
    pub compatibility: Vec<Vec<bool>>,
}

/// Builds the latent clone of `question`, to be stored at property slot `slot`.
pub fn latent_clone<T: Scalar>(catalog: &Catalog, question: QuestionIdx, slot: PropertyIdx) -> LatentClone<T> {
    let q = catalog.question(question);
    let width = q.answers.len();
    let rows = (0..width)
        .map(|c| (0..width).map(|a| if a == c { T::one() } else { T::zero() }).collect())
        .collect();
    LatentClone {
        property: Property {
            id: q.id.clone(),
            values: q.answers.iter().map(|a| a.id.clone()).collect(),
            parents: Vec::new(),
            clone_of: Some(question),
        },
        cpt: QuestionCpt {
            question,
            properties: vec![slot],
            radices: vec![width],
            rows,
            identity: true,
        },
        compatibility: catalog
            .item_indices()
            .map(|i| (0..width).map(|a| catalog.answer_compatible(i, question, a)).collect())
            .collect(),
    }
}

/// Validates an explicit `P(q | c_attached)` table for `question`.
pub fn soft_question_cpt<T: Scalar>(catalog: &Catalog, question: QuestionIdx, rows: &[Vec<T>]) -> Result<QuestionCpt<T>> {
    let q = catalog.question(question);
    let radices = catalog.radices_of(&q.properties);
    let malformed = |message: String| Error::MalformedTable {
        table: q.id.clone(),
        message,
    };
    let expected = state_count(&radices).ok_or_else(|| malformed("too many states".into()))?;
    if rows.len() != expected {
        return Err(malformed(format!("expected {expected} rows, got {}", rows.len())));
    }
    for (k, row) in rows.iter().enumerate() {
        if row.len() != q.answers.len() {
            return Err(malformed(format!("row {k} has {} entries, expected {}", row.len(), q.answers.len())));
        }
        if row.iter().any(|p| *p < T::zero()) {
            return Err(malformed(format!("row {k} has a negative entry")));
        }
        if !sum(row).near(&T::one()) {
            return Err(malformed(format!("row {k} sums to {:?}, not 1", sum(row).as_f64())));
        }
    }
    let identity = q.properties.len() == 1
        && rows.len() == q.answers.len()
        && rows
            .iter()
            .enumerate()
            .all(|(c, row)| row.iter().enumerate().all(|(a, p)| if a == c { p.is_one() } else { p.is_zero() }));
    Ok(QuestionCpt {
        question,
        properties: q.properties.clone(),
        radices,
        rows: rows.to_vec(),
        identity,
    })
}

/// The CPT the catalogue declares for `question`.
pub fn question_cpt<T: Scalar>(catalog: &Catalog, question: QuestionIdx) -> Result<QuestionCpt<T>> {
    let q = catalog.question(question);
    match &q.link {
        QuestionLink::Identity => Ok(latent_clone(catalog, question, q.properties[0]).cpt),
        QuestionLink::Table(rows) => {
            let rows: Vec<Vec<T>> = rows.iter().map(|r| r.iter().map(T::from_prob).collect()).collect();
            soft_question_cpt(catalog, question, &rows)
        }
    }
}

/// `P(c | parents)` for one property, one row per parent state.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorTable<T = f64> {
    pub property: PropertyIdx,
    pub parents: Vec<PropertyIdx>,
    parent_radices: Vec<usize>,
    pub rows: Vec<Vec<T>>,
    /// Parent states that appear in no feasible joint state.
    pub infeasible: Vec<bool>,
}

impl<T: Scalar> FactorTable<T> {
    pub fn row_index(&self, state: &[usize]) -> usize {
        let digits: Vec<usize> = self.parents.iter().map(|p| state[p.0]).collect();
        flat_index(&digits, &self.parent_radices)
    }

    pub fn row_for_parents(&self, parent_values: &[usize]) -> &[T] {
        &self.rows[flat_index(parent_values, &self.parent_radices)]
    }
}

/// Expert judgements on the property joint before feasibility revision.
#[derive(Clone, Debug, PartialEq)]
pub enum RawJointPrior<T = f64> {
    /// One table per property in catalogue order.
    Factorized(Vec<FactorTable<T>>),
    /// Flat `P'(c)` over full joint states; unlisted states have zero mass.
    Flat(Vec<(Vec<usize>, T)>),
}

impl<T: Scalar> RawJointPrior<T> {
    /// Reads the catalogue's expert tables; properties without a table get
    /// uniform rows.
    pub fn from_catalog(catalog: &Catalog) -> RawJointPrior<T> {
        let expert = catalog.expert();
        if let Some(joint) = &expert.joint {
            return RawJointPrior::Flat(joint.iter().map(|(s, p)| (s.clone(), T::from_prob(p))).collect());
        }
        let tables = catalog
            .property_indices()
            .map(|p| {
                let prop = catalog.property(p);
                let parent_radices = catalog.radices_of(&prop.parents);
                let n_rows = state_count(&parent_radices).expect("validated at load");
                let rows: Vec<Vec<T>> = match &expert.property_rows[p.0] {
                    Some(rows) => rows.iter().map(|r| r.iter().map(T::from_prob).collect()).collect(),
                    None => {
                        let u = T::one() / T::count(prop.values.len());
                        vec![vec![u; prop.values.len()]; n_rows]
                    }
                };
                FactorTable {
                    property: p,
                    parents: prop.parents.clone(),
                    parent_radices,
                    rows,
                    infeasible: vec![false; n_rows],
                }
            })
            .collect();
        RawJointPrior::Factorized(tables)
    }
}

/// Revised joint prior over the feasible states.
#[derive(Clone, Debug, PartialEq)]
pub struct PropertyJointPrior<T = f64> {
    factors: Option<Vec<FactorTable<T>>>,
    /// `P(c)` for each state of the feasible set, in its order.
    flat: Vec<T>,
}

impl<T: Scalar> PropertyJointPrior<T> {
    pub fn flat(&self) -> &[T] {
        &self.flat
    }

    pub fn factors(&self) -> Option<&[FactorTable<T>]> {
        self.factors.as_deref()
    }

    pub fn factor(&self, property: PropertyIdx) -> Option<&FactorTable<T>> {
        self.factors.as_ref().map(|f| &f[property.0])
    }

    /// Back to raw form, so revision can be reapplied.
    pub fn as_raw(&self, feasible: &FeasibleSet) -> RawJointPrior<T> {
        match &self.factors {
            Some(f) => RawJointPrior::Factorized(f.clone()),
            None => RawJointPrior::Flat(
                feasible
                    .states()
                    .iter()
                    .zip(&self.flat)
                    .map(|(s, p)| (s.0.clone(), p.clone()))
                    .collect(),
            ),
        }
    }

    /// `P(c | c_parents)` for `property`. With a flat joint the conditional
    /// is derived by marginalization; `None` if the parent state has no mass.
    pub fn conditional_row(
        &self,
        catalog: &Catalog,
        feasible: &FeasibleSet,
        property: PropertyIdx,
        parent_values: &[usize],
    ) -> Option<Vec<T>> {
        if let Some(factors) = &self.factors {
            let f = &factors[property.0];
            let row = f.row_for_parents(parent_values).to_vec();
            return if sum(&row).is_zero() { None } else { Some(row) };
        }
        let parents = &catalog.property(property).parents;
        let mut row = vec![T::zero(); catalog.property(property).values.len()];
        for (state, p) in feasible.states().iter().zip(&self.flat) {
            if parents.iter().zip(parent_values).all(|(q, &v)| state.0[q.0] == v) {
                row[state.0[property.0]] = row[state.0[property.0]].clone() + p.clone();
            }
        }
        normalize(&row)
    }
}

/// Zeroes the mass of infeasible property states and renormalizes.
///
/// Factorized tables are revised row by row: within each row of
/// `P(c | parents)`, values that never co-occur with that parent state in a
/// feasible joint state are zeroed and the row renormalized. The resulting
/// product is then renormalized over the feasible set. A flat joint is
/// renormalized globally.
pub fn revise_joint_prior<T: Scalar>(
    catalog: &Catalog,
    raw: &RawJointPrior<T>,
    feasible: &FeasibleSet,
) -> Result<PropertyJointPrior<T>> {
    if feasible.is_empty() {
        return Err(Error::ZeroPrior);
    }
    match raw {
        RawJointPrior::Flat(entries) => {
            let mut flat = vec![T::zero(); feasible.len()];
            for (state, p) in entries {
                if let Some(k) = feasible.position(&crate::catalog::JointState(state.clone())) {
                    flat[k] = p.clone();
                }
            }
            let flat = normalize(&flat).ok_or(Error::ZeroPrior)?;
            Ok(PropertyJointPrior { factors: None, flat })
        }
        RawJointPrior::Factorized(tables) => {
            let mut revised = Vec::with_capacity(tables.len());
            for table in tables {
                let width = catalog.property(table.property).values.len();
                let mut allowed = vec![vec![false; width]; table.rows.len()];
                for state in feasible.states() {
                    allowed[table.row_index(&state.0)][state.0[table.property.0]] = true;
                }
                let mut rows = Vec::with_capacity(table.rows.len());
                let mut infeasible = Vec::with_capacity(table.rows.len());
                for (k, (row, allowed)) in table.rows.iter().zip(&allowed).enumerate() {
                    if !allowed.iter().any(|&b| b) {
                        rows.push(vec![T::zero(); width]);
                        infeasible.push(true);
                        continue;
                    }
                    let masked: Vec<T> = row
                        .iter()
                        .zip(allowed)
                        .map(|(p, &ok)| if ok { p.clone() } else { T::zero() })
                        .collect();
                    let normalized = normalize(&masked).ok_or_else(|| {
                        let digits = crate::states::unflatten(k, &table.parent_radices);
                        Error::InfeasibleRow {
                            property: catalog.property(table.property).id.clone(),
                            state: catalog.describe_state(&table.parents, &digits),
                        }
                    })?;
                    rows.push(normalized);
                    infeasible.push(false);
                }
                revised.push(FactorTable {
                    property: table.property,
                    parents: table.parents.clone(),
                    parent_radices: table.parent_radices.clone(),
                    rows,
                    infeasible,
                });
            }
            let product: Vec<T> = feasible
                .states()
                .iter()
                .map(|state| {
                    catalog.topo_order().iter().fold(T::one(), |acc, p| {
                        let f = &revised[p.0];
                        acc * f.rows[f.row_index(&state.0)][state.0[p.0]].clone()
                    })
                })
                .collect();
            let flat = normalize(&product).ok_or(Error::ZeroPrior)?;
            Ok(PropertyJointPrior {
                factors: Some(revised),
                flat,
            })
        }
    }
}

/// The full property-layer model.
#[derive(Clone, Debug)]
pub struct PropertyModel<T = f64> {
    pub feasible: FeasibleSet,
    pub prior: PropertyJointPrior<T>,
    pub cpts: Vec<QuestionCpt<T>>,
}

impl<T: Scalar> PropertyModel<T> {
    pub fn build(catalog: &Catalog) -> Result<PropertyModel<T>> {
        let feasible = catalog.feasible_joint_states()?;
        let raw = RawJointPrior::from_catalog(catalog);
        let prior = revise_joint_prior(catalog, &raw, &feasible)?;
        let cpts = catalog
            .question_indices()
            .map(|q| question_cpt(catalog, q))
            .collect::<Result<Vec<_>>>()?;
        Ok(PropertyModel { feasible, prior, cpts })
    }

    /// Latent atoms `(item, feasible state)` with prior mass `P(c) / N(c)`.
    pub fn atoms(&self) -> Vec<(ItemIdx, usize, T)> {
        let mut out = Vec::new();
        for k in 0..self.feasible.len() {
            let share = self.prior.flat[k].clone() / T::count(self.feasible.item_count(k));
            for &item in self.feasible.compatible_items(k) {
                out.push((item, k, share.clone()));
            }
        }
        out
    }

    /// `P(i | c) = δ(i, c) / N(c)` for a feasible state.
    pub fn item_given_state(&self, catalog: &Catalog, state: usize, item: ItemIdx) -> T {
        if catalog.state_compatible(item, &self.feasible.state(state).0) {
            T::one() / T::count(self.feasible.item_count(state))
        } else {
            T::zero()
        }
    }

    /// `P(q | c)` for the given feasible state.
    pub fn answer_given_state(&self, question: QuestionIdx, state: usize, answer: usize) -> &T {
        self.cpts[question.0].prob(&self.feasible.state(state).0, answer)
    }

    pub fn to_f64(&self) -> PropertyModel<f64> {
        PropertyModel {
            feasible: self.feasible.clone(),
            prior: PropertyJointPrior {
                factors: self.prior.factors.as_ref().map(|fs| {
                    fs.iter()
                        .map(|f| FactorTable {
                            property: f.property,
                            parents: f.parents.clone(),
                            parent_radices: f.parent_radices.clone(),
                            rows: f.rows.iter().map(|r| r.iter().map(Scalar::as_f64).collect()).collect(),
                            infeasible: f.infeasible.clone(),
                        })
                        .collect()
                }),
                flat: self.prior.flat.iter().map(Scalar::as_f64).collect(),
            },
            cpts: self.cpts.iter().map(QuestionCpt::to_f64).collect(),
        }
    }
}

/// `P(c | c_parents, i)`: the conditional `P(c | c_parents)` renormalized over
/// the values of `property` compatible with `item`. Zero when the item is
/// incompatible with the parent state.
pub fn conditional_property_given_item<T: Scalar>(
    catalog: &Catalog,
    model: &PropertyModel<T>,
    property: PropertyIdx,
    value: usize,
    parent_values: &[usize],
    item: ItemIdx,
) -> Result<T> {
    let parents = &catalog.property(property).parents;
    if !catalog.partial_compatible(item, parents, parent_values) {
        return Ok(T::zero());
    }
    let incompatible = || Error::IncompatibleItem {
        item: catalog.item(item).id.clone(),
        property: catalog.property(property).id.clone(),
    };
    let row = model
        .prior
        .conditional_row(catalog, &model.feasible, property, parent_values)
        .ok_or_else(incompatible)?;
    let denominator = row
        .iter()
        .enumerate()
        .filter(|(c, _)| catalog.value_compatible(item, property, *c))
        .fold(T::zero(), |acc, (_, p)| acc + p.clone());
    if denominator.is_zero() {
        return Err(incompatible());
    }
    if !catalog.value_compatible(item, property, value) {
        return Ok(T::zero());
    }
    Ok(row[value].clone() / denominator)
}

/// `P(i) = Σ_{c: i ⊨ c} P(c) / N(c)`.
pub fn item_prior_from_properties<T: Scalar>(catalog: &Catalog, model: &PropertyModel<T>) -> ItemPrior<T> {
    let mut prior = vec![T::zero(); catalog.n_items()];
    for (item, _, mass) in model.atoms() {
        prior[item.0] = prior[item.0].clone() + mass;
    }
    ItemPrior(prior)
}

/// Per-atom likelihood of an answer to a question that matters only for
/// some items.
///
/// Atoms of relevant items keep `base` (their model likelihood). Atoms of
/// irrelevant items all get the predictive probability of the answer among
/// the relevant items under the current `weights`, which leaves the mass
/// ratio between the two groups unchanged.
pub fn irrelevant_question_likelihood<T: Scalar>(
    catalog: &Catalog,
    question: QuestionIdx,
    atom_items: &[ItemIdx],
    weights: &[T],
    base: &[T],
) -> Result<Vec<T>> {
    let q = catalog.question(question);
    if !q.has_relevance() {
        return Ok(base.to_vec());
    }
    let mut relevant_mass = T::zero();
    let mut predictive = T::zero();
    for ((item, w), l) in atom_items.iter().zip(weights).zip(base) {
        if q.is_relevant(*item) {
            relevant_mass = relevant_mass + w.clone();
            predictive = predictive + w.clone() * l.clone();
        }
    }
    if relevant_mass.is_zero() {
        return Err(Error::NoRelevantMass(q.id.clone()));
    }
    let shared = predictive / relevant_mass;
    Ok(atom_items
        .iter()
        .zip(base)
        .map(|(item, l)| if q.is_relevant(*item) { l.clone() } else { shared.clone() })
        .collect())
}
