#![allow(dead_code)]

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use convrec::catalog::{CatalogDocument, JointEntryDoc};
use convrec::synth::{property_catalog, property_free_catalog, CatalogShape, PropertyShape};
use convrec::{Catalog, LoadOptions, Prob};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn catalog(doc: CatalogDocument) -> Arc<Catalog> {
    Arc::new(Catalog::from_document(doc, &LoadOptions::default()).expect("generated catalogue loads"))
}

pub fn small_shape() -> CatalogShape {
    CatalogShape {
        items: 6,
        questions: 3,
        min_answers: 2,
        max_answers: 4,
        extra_answer_rate: 0.35,
        random_strategies: true,
    }
}

pub fn small_property_free(seed: u64) -> Arc<Catalog> {
    let mut r = rng(seed);
    let mut shape = small_shape();
    shape.items = 2 + (seed % 5) as usize;
    catalog(property_free_catalog(&mut r, &shape))
}

pub fn small_property(seed: u64) -> Arc<Catalog> {
    let mut r = rng(seed);
    catalog(property_catalog(&mut r, &PropertyShape::default()))
}

/// Adds a flat joint with `P(c) ∝ N(c)` over the feasible states of a
/// catalogue whose properties are all latent clones.
pub fn with_count_proportional_joint(doc: &CatalogDocument) -> CatalogDocument {
    let c = Catalog::from_document(doc.clone(), &LoadOptions::default()).unwrap();
    let feasible = c.feasible_joint_states().unwrap();
    let counts: Vec<i64> = (0..feasible.len()).map(|k| feasible.item_count(k) as i64).collect();
    let total: i64 = counts.iter().sum();
    let joint = feasible
        .states()
        .iter()
        .zip(&counts)
        .map(|(state, &count)| JointEntryDoc {
            state: state
                .0
                .iter()
                .enumerate()
                .map(|(p, &v)| {
                    let prop = &c.properties()[p];
                    (prop.id.clone(), prop.values[v].clone())
                })
                .collect(),
            p: Prob::ratio(count, total),
        })
        .collect();
    let mut out = doc.clone();
    out.expert_tables.joint = Some(joint);
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
