//! Set-semantics relational operations over property and descriptor triples.
//!
//! Three relations are derived from an [`Ontology`]:
//!
//! * property triples `(entity, property, value)`,
//! * essential descriptor triples `(property, descriptor, value)`,
//! * contextual descriptor triples, same shape.
//!
//! Values stored in triples are already canonical (normalized), so all
//! equality tests below are exact string comparisons.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;
use thiserror::Error;

use crate::model::{DescriptorId, DescriptorKind, EntityId, Ontology, PropertyId};
use crate::similarity::normalize_label;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RelationalError {
    #[error("expected only {expected} tuples, found {found} tuple for `{descriptor}`")]
    KindMismatch {
        expected: DescriptorKind,
        found: DescriptorKind,
        descriptor: DescriptorId,
    },
    #[error("unknown property `{0}`")]
    UnknownProperty(PropertyId),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct PropertyTriple {
    pub entity: EntityId,
    pub property: PropertyId,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct DescriptorTriple {
    pub property: PropertyId,
    pub descriptor: DescriptorId,
    pub value: String,
    pub kind: DescriptorKind,
    pub source_count: u64,
}

/// A finite set of tuples, iterated in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct Relation<T: Ord> {
    tuples: BTreeSet<T>,
}

impl<T: Ord> Default for Relation<T> {
    fn default() -> Self {
        Self {
            tuples: BTreeSet::new(),
        }
    }
}

impl<T: Ord> Relation<T> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns `false` when the tuple was already present.
    pub fn insert(&mut self, tuple: T) -> bool {
        self.tuples.insert(tuple)
    }

    pub fn contains(&self, tuple: &T) -> bool {
        self.tuples.contains(tuple)
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.tuples.iter()
    }
}

impl<T: Ord + Clone> Relation<T> {
    pub fn union(&self, other: &Self) -> Self {
        self.tuples.union(&other.tuples).cloned().collect()
    }

    pub fn intersection(&self, other: &Self) -> Self {
        self.tuples.intersection(&other.tuples).cloned().collect()
    }
}

impl<T: Ord> FromIterator<T> for Relation<T> {
    fn from_iter<I: IntoIterator<Item = T>>(iter: I) -> Self {
        Self {
            tuples: iter.into_iter().collect(),
        }
    }
}

impl<T: Ord> IntoIterator for Relation<T> {
    type Item = T;
    type IntoIter = std::collections::btree_set::IntoIter<T>;

    fn into_iter(self) -> Self::IntoIter {
        self.tuples.into_iter()
    }
}

impl<'a, T: Ord> IntoIterator for &'a Relation<T> {
    type Item = &'a T;
    type IntoIter = std::collections::btree_set::Iter<'a, T>;

    fn into_iter(self) -> Self::IntoIter {
        self.tuples.iter()
    }
}

pub fn property_triples(ontology: &Ontology) -> Relation<PropertyTriple> {
    ontology
        .entities()
        .flat_map(|entity| {
            entity.properties().iter().map(|p| PropertyTriple {
                entity: entity.id().clone(),
                property: p.id().clone(),
                value: p.value().to_string(),
            })
        })
        .collect()
}

fn descriptor_triples(ontology: &Ontology, kind: Option<DescriptorKind>) -> Relation<DescriptorTriple> {
    ontology
        .entities()
        .flat_map(|e| e.properties())
        .flat_map(|p| {
            p.descriptors()
                .iter()
                .filter(move |d| kind.is_none_or(|k| d.kind() == k))
                .map(|d| DescriptorTriple {
                    property: p.id().clone(),
                    descriptor: d.id().clone(),
                    value: normalize_label(d.label()),
                    kind: d.kind(),
                    source_count: d.source_count(),
                })
        })
        .collect()
}

pub fn essential_triples(ontology: &Ontology) -> Relation<DescriptorTriple> {
    descriptor_triples(ontology, Some(DescriptorKind::Essential))
}

pub fn contextual_triples(ontology: &Ontology) -> Relation<DescriptorTriple> {
    descriptor_triples(ontology, Some(DescriptorKind::Contextual))
}

fn ensure_kind(relation: &Relation<DescriptorTriple>, expected: DescriptorKind) -> Result<(), RelationalError> {
    match relation.iter().find(|t| t.kind != expected) {
        Some(t) => Err(RelationalError::KindMismatch {
            expected,
            found: t.kind,
            descriptor: t.descriptor.clone(),
        }),
        None => Ok(()),
    }
}

/// `(property, value)` pairs of one entity.
pub fn project_property_values(
    relation: &Relation<PropertyTriple>,
    entity: &EntityId,
) -> BTreeSet<(PropertyId, String)> {
    relation
        .iter()
        .filter(|t| &t.entity == entity)
        .map(|t| (t.property.clone(), t.value.clone()))
        .collect()
}

fn project_descriptor_values(
    relation: &Relation<DescriptorTriple>,
    property: &PropertyId,
    kind: DescriptorKind,
) -> Result<BTreeSet<(DescriptorId, String)>, RelationalError> {
    ensure_kind(relation, kind)?;
    Ok(relation
        .iter()
        .filter(|t| &t.property == property)
        .map(|t| (t.descriptor.clone(), t.value.clone()))
        .collect())
}

pub fn project_essential_values(
    relation: &Relation<DescriptorTriple>,
    property: &PropertyId,
) -> Result<BTreeSet<(DescriptorId, String)>, RelationalError> {
    project_descriptor_values(relation, property, DescriptorKind::Essential)
}

pub fn project_contextual_values(
    relation: &Relation<DescriptorTriple>,
    property: &PropertyId,
) -> Result<BTreeSet<(DescriptorId, String)>, RelationalError> {
    project_descriptor_values(relation, property, DescriptorKind::Contextual)
}

/// Keyed outer union of an essential and a contextual relation on property.
///
/// Properties present in only one input keep their tuples.
pub fn join_descriptors(
    essential: &Relation<DescriptorTriple>,
    contextual: &Relation<DescriptorTriple>,
) -> Result<Relation<DescriptorTriple>, RelationalError> {
    ensure_kind(essential, DescriptorKind::Essential)?;
    ensure_kind(contextual, DescriptorKind::Contextual)?;
    let mut by_property: BTreeMap<&PropertyId, Vec<&DescriptorTriple>> = BTreeMap::new();
    for tuple in essential.iter().chain(contextual.iter()) {
        by_property.entry(&tuple.property).or_default().push(tuple);
    }
    Ok(by_property.into_values().flatten().cloned().collect())
}

/// Unordered, irreflexive pairs of keys that share at least one value.
fn pairs_sharing_value<'a, K: Ord + Clone + 'a>(rows: impl Iterator<Item = (&'a K, &'a str)>) -> BTreeSet<(K, K)> {
    let mut by_value: BTreeMap<&str, BTreeSet<&K>> = BTreeMap::new();
    for (key, value) in rows {
        by_value.entry(value).or_default().insert(key);
    }
    let mut pairs = BTreeSet::new();
    for keys in by_value.values() {
        let keys: Vec<&K> = keys.iter().copied().collect();
        for (i, a) in keys.iter().enumerate() {
            for b in &keys[i + 1..] {
                pairs.insert(((*a).clone(), (*b).clone()));
            }
        }
    }
    pairs
}

/// Entity pairs having equal values for some property.
pub fn select_matching_entities(relation: &Relation<PropertyTriple>) -> BTreeSet<(EntityId, EntityId)> {
    pairs_sharing_value(relation.iter().map(|t| (&t.entity, t.value.as_str())))
}

pub fn select_matching_by_contextual(
    relation: &Relation<DescriptorTriple>,
) -> Result<BTreeSet<(PropertyId, PropertyId)>, RelationalError> {
    ensure_kind(relation, DescriptorKind::Contextual)?;
    Ok(pairs_sharing_value(
        relation.iter().map(|t| (&t.property, t.value.as_str())),
    ))
}

pub fn select_matching_by_essential(
    relation: &Relation<DescriptorTriple>,
) -> Result<BTreeSet<(PropertyId, PropertyId)>, RelationalError> {
    ensure_kind(relation, DescriptorKind::Essential)?;
    Ok(pairs_sharing_value(
        relation.iter().map(|t| (&t.property, t.value.as_str())),
    ))
}

/// Every descriptor triple of one property, both kinds.
pub fn combined_description(
    ontology: &Ontology,
    property: &PropertyId,
) -> Result<Relation<DescriptorTriple>, RelationalError> {
    let found = ontology
        .property(property)
        .ok_or_else(|| RelationalError::UnknownProperty(property.clone()))?;
    Ok(found
        .descriptors()
        .iter()
        .map(|d| DescriptorTriple {
            property: found.id().clone(),
            descriptor: d.id().clone(),
            value: normalize_label(d.label()),
            kind: d.kind(),
            source_count: d.source_count(),
        })
        .collect())
}

pub fn relation_difference<T: Ord + Clone>(a: &Relation<T>, b: &Relation<T>) -> Relation<T> {
    a.tuples.difference(&b.tuples).cloned().collect()
}

/// Property triples of entity `a` whose `(local property, value)` does not
/// occur under entity `b`.
pub fn entity_property_difference(
    relation: &Relation<PropertyTriple>,
    a: &EntityId,
    b: &EntityId,
) -> Relation<PropertyTriple> {
    let present: BTreeSet<(&str, &str)> = relation
        .iter()
        .filter(|t| &t.entity == b)
        .map(|t| (t.property.local(), t.value.as_str()))
        .collect();
    relation
        .iter()
        .filter(|t| &t.entity == a && !present.contains(&(t.property.local(), t.value.as_str())))
        .cloned()
        .collect()
}
