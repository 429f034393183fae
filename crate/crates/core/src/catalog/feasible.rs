use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{Catalog, ItemIdx};
use crate::error::{Error, Result};
use crate::states::{state_count, Product};

/// One value index per property, in catalogue property order.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointState(pub Vec<usize>);

/// The feasible joint states `J*` with their compatible items.
#[derive(Clone, Debug)]
pub struct FeasibleSet {
    states: Vec<JointState>,
    items: Vec<Vec<ItemIdx>>,
    index: HashMap<JointState, usize>,
}

impl FeasibleSet {
    pub(super) fn enumerate(catalog: &Catalog) -> Result<FeasibleSet> {
        let cap = catalog.state_cap();
        let mut found: BTreeMap<Vec<usize>, Vec<ItemIdx>> = BTreeMap::new();
        for item in catalog.item_indices() {
            let choices: Vec<Vec<usize>> = catalog
                .property_indices()
                .map(|p| catalog.compatible_values(item, p))
                .collect();
            let radices: Vec<usize> = choices.iter().map(Vec::len).collect();
            match state_count(&radices) {
                Some(n) if n <= cap => {}
                _ => return Err(Error::EnumerationCap { cap }),
            }
            for state in Product::new(&choices) {
                found.entry(state).or_default().push(item);
                if found.len() > cap {
                    return Err(Error::EnumerationCap { cap });
                }
            }
        }
        let mut states = Vec::with_capacity(found.len());
        let mut items = Vec::with_capacity(found.len());
        let mut index = HashMap::with_capacity(found.len());
        for (k, (state, compatible)) in found.into_iter().enumerate() {
            let state = JointState(state);
            index.insert(state.clone(), k);
            states.push(state);
            items.push(compatible);
        }
        Ok(FeasibleSet { states, items, index })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[JointState] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &JointState {
        &self.states[k]
    }

    /// Items compatible with state `k`, in catalogue order.
    pub fn compatible_items(&self, k: usize) -> &[ItemIdx] {
        &self.items[k]
    }

    /// `N(c)` for state `k`.
    pub fn item_count(&self, k: usize) -> usize {
        self.items[k].len()
    }

    pub fn position(&self, state: &JointState) -> Option<usize> {
        self.index.get(state).copied()
    }

    pub fn contains(&self, state: &[usize]) -> bool {
        self.index.contains_key(&JointState(state.to_vec()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::LoadOptions;
    use crate::toy;

    #[test]
    fn toy_feasible_states() {
        let c = Catalog::from_json_str(toy::TOY_CATALOG, &LoadOptions::default()).unwrap();
        let f = c.feasible_joint_states().unwrap();
        assert_eq!(f.len(), 8);
        assert!((0..f.len()).all(|k| f.item_count(k) == 1));
        let c1 = c.property_index("C1").unwrap();
        let c2 = c.property_index("C2").unwrap();
        let state = |t: &str, e: &str| {
            let mut s = vec![0; 2];
            s[c1.0] = c.property(c1).value_index(t).unwrap();
            s[c2.0] = c.property(c2).value_index(e).unwrap();
            s
        };
        assert!(!f.contains(&state("musician", "wedding")));
        assert!(f.contains(&state("band", "corporate")));
        assert!(!f.contains(&state("band", "birthday")));
        for e in ["wedding", "corporate", "birthday", "kids_party"] {
            assert!(f.contains(&state("dj", e)));
        }
    }

    #[test]
    fn unconstrained_item_yields_full_product() {
        let text = r#"{"items": [{"id": "any"}], "questions": [],
            "properties": [{"id": "A", "values": ["a1", "a2"]}, {"id": "B", "values": ["b1", "b2", "b3"]}]}"#;
        let c = Catalog::from_json_str(text, &LoadOptions::default()).unwrap();
        assert_eq!(c.feasible_joint_states().unwrap().len(), 6);
    }

    #[test]
    fn enumeration_cap_is_enforced() {
        let text = r#"{"items": [{"id": "any"}], "questions": [],
            "properties": [{"id": "A", "values": ["a1", "a2"]}, {"id": "B", "values": ["b1", "b2", "b3"]}]}"#;
        let opts = LoadOptions {
            state_cap: 5,
            ..LoadOptions::default()
        };
        let c = Catalog::from_json_str(text, &opts).unwrap();
        assert!(matches!(c.feasible_joint_states(), Err(Error::EnumerationCap { cap: 5 })));
    }
}
