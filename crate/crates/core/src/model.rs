//! Entities, properties and descriptors.
//!
//! An [`Ontology`] owns entities (top-level concepts), each entity owns
//! properties, and each property owns descriptors that are either
//! [`DescriptorKind::Essential`] or [`DescriptorKind::Contextual`]. Every node
//! is addressed by a canonical path id built from normalized labels, so the
//! same concept spelled `"Legal Liability"` and `" legal   liability"` lands on
//! the same id.
//!
//! Values are immutable once built; construct them with [`build_ontology`].

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::similarity::normalize_label;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("empty {what} label{context}")]
    EmptyLabel { what: &'static str, context: String },
    #[error("duplicate {what} id `{id}` after normalization")]
    DuplicateId { what: &'static str, id: String },
    #[error("descriptor `{descriptor}` has negative source count {count}")]
    NegativeSourceCount { descriptor: String, count: i64 },
    #[error("invalid {what} id `{text}`: {reason}")]
    InvalidId {
        what: &'static str,
        text: String,
        reason: String,
    },
    #[error("unknown descriptor type `{0}` (expected formal, essential or contextual)")]
    UnknownKind(String),
}

// Path components are normalized labels with `%` and `/` escaped, which keeps
// the `entity/property/descriptor` encoding injective.
fn encode_component(label: &str) -> String {
    normalize_label(label).replace('%', "%25").replace('/', "%2F")
}

fn decode_component(component: &str) -> String {
    component.replace("%2F", "/").replace("%2f", "/").replace("%25", "%")
}

fn parse_path(what: &'static str, text: &str, arity: usize) -> Result<String, ModelError> {
    let parts: Vec<&str> = text.split('/').collect();
    if parts.len() != arity {
        return Err(ModelError::InvalidId {
            what,
            text: text.to_string(),
            reason: format!("expected {arity} `/`-separated components, found {}", parts.len()),
        });
    }
    let mut encoded = Vec::with_capacity(arity);
    for part in parts {
        let component = encode_component(&decode_component(part));
        if component.is_empty() {
            return Err(ModelError::InvalidId {
                what,
                text: text.to_string(),
                reason: "empty path component".to_string(),
            });
        }
        encoded.push(component);
    }
    Ok(encoded.join("/"))
}

macro_rules! canonical_id {
    ($(#[$meta:meta])* $name:ident, $what:literal, $arity:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            /// Parses a `/`-separated path, normalizing every component.
            pub fn parse(text: &str) -> Result<Self, ModelError> {
                parse_path($what, text, $arity).map(Self)
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }

            /// Last path component, still escaped.
            pub fn local(&self) -> &str {
                self.0.rsplit('/').next().unwrap_or(&self.0)
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl FromStr for $name {
            type Err = ModelError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                Self::parse(s)
            }
        }
    };
}

canonical_id!(
    /// Canonical id of an entity: its normalized name.
    EntityId,
    "entity",
    1
);
canonical_id!(
    /// Canonical id of a property: `entity/property`.
    PropertyId,
    "property",
    2
);
canonical_id!(
    /// Canonical id of a descriptor: `entity/property/descriptor`.
    DescriptorId,
    "descriptor",
    3
);

impl EntityId {
    pub fn from_label(label: &str) -> Self {
        Self(encode_component(label))
    }
}

impl PropertyId {
    pub fn new(entity: &EntityId, label: &str) -> Self {
        Self(format!("{}/{}", entity.0, encode_component(label)))
    }

    pub fn entity(&self) -> EntityId {
        let (head, _) = self.0.split_once('/').expect("property id has two components");
        EntityId(head.to_string())
    }
}

impl DescriptorId {
    pub fn new(property: &PropertyId, label: &str) -> Self {
        Self(format!("{}/{}", property.0, encode_component(label)))
    }

    pub fn property(&self) -> PropertyId {
        let (head, _) = self.0.rsplit_once('/').expect("descriptor id has three components");
        PropertyId(head.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptorKind {
    /// Objective, documented characteristic. Tables label it "Formal".
    Essential,
    /// Characteristic that depends on social, cultural or situational context.
    Contextual,
}

impl DescriptorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DescriptorKind::Essential => "essential",
            DescriptorKind::Contextual => "contextual",
        }
    }
}

impl fmt::Display for DescriptorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DescriptorKind {
    type Err = ModelError;

    /// Accepts `formal` as a synonym of `essential`, case-insensitively.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match normalize_label(s).as_str() {
            "formal" | "essential" => Ok(DescriptorKind::Essential),
            "contextual" => Ok(DescriptorKind::Contextual),
            _ => Err(ModelError::UnknownKind(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Descriptor {
    id: DescriptorId,
    label: String,
    kind: DescriptorKind,
    source_count: u64,
}

impl Descriptor {
    pub fn id(&self) -> &DescriptorId {
        &self.id
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> DescriptorKind {
        self.kind
    }

    /// Number of corpus sources supporting the descriptor.
    pub fn source_count(&self) -> u64 {
        self.source_count
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Property {
    id: PropertyId,
    name: String,
    value: String,
    descriptors: Vec<Descriptor>,
}

impl Property {
    pub fn id(&self) -> &PropertyId {
        &self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Canonical property value; the normalized name unless overridden.
    pub fn value(&self) -> &str {
        &self.value
    }

    pub fn has_default_value(&self) -> bool {
        self.value == normalize_label(&self.name)
    }

    /// Descriptors in canonical id order.
    pub fn descriptors(&self) -> &[Descriptor] {
        &self.descriptors
    }

    pub fn descriptors_of(&self, kind: DescriptorKind) -> impl Iterator<Item = &Descriptor> {
        self.descriptors.iter().filter(move |d| d.kind == kind)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Entity {
    id: EntityId,
    name: String,
    properties: Vec<Property>,
}

impl Entity {
    pub fn id(&self) -> &EntityId {
        &self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Properties in canonical id order.
    pub fn properties(&self) -> &[Property] {
        &self.properties
    }

    pub fn property(&self, id: &PropertyId) -> Option<&Property> {
        self.properties
            .binary_search_by(|p| p.id.cmp(id))
            .ok()
            .map(|i| &self.properties[i])
    }

    pub fn descriptors(&self) -> impl Iterator<Item = &Descriptor> {
        self.properties.iter().flat_map(|p| p.descriptors.iter())
    }

    pub fn descriptor_count(&self) -> usize {
        self.properties.iter().map(|p| p.descriptors.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Ontology {
    name: String,
    entities: BTreeMap<EntityId, Entity>,
}

impl Ontology {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// Entities in canonical id order.
    pub fn entities(&self) -> impl ExactSizeIterator<Item = &Entity> {
        self.entities.values()
    }

    pub fn entity(&self, id: &EntityId) -> Option<&Entity> {
        self.entities.get(id)
    }

    pub fn property(&self, id: &PropertyId) -> Option<&Property> {
        self.entities.get(&id.entity())?.property(id)
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn property_count(&self) -> usize {
        self.entities().map(|e| e.properties.len()).sum()
    }

    pub fn descriptor_count(&self) -> usize {
        self.entities().map(Entity::descriptor_count).sum()
    }

    pub fn count_of(&self, kind: DescriptorKind) -> usize {
        self.entities()
            .flat_map(Entity::descriptors)
            .filter(|d| d.kind == kind)
            .count()
    }

    /// Converts back into raw records accepted by [`build_ontology`].
    pub fn to_raw(&self) -> Vec<RawEntity> {
        self.entities()
            .map(|e| RawEntity {
                name: e.name.clone(),
                properties: e
                    .properties
                    .iter()
                    .map(|p| RawProperty {
                        name: p.name.clone(),
                        value: (!p.has_default_value()).then(|| p.value.clone()),
                        descriptors: p
                            .descriptors
                            .iter()
                            .map(|d| RawDescriptor {
                                label: d.label.clone(),
                                kind: d.kind,
                                source_count: d.source_count as i64,
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect()
    }
}

/// Unvalidated entity record, as produced by the table parsers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawEntity {
    pub name: String,
    pub properties: Vec<RawProperty>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawProperty {
    pub name: String,
    pub value: Option<String>,
    pub descriptors: Vec<RawDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDescriptor {
    pub label: String,
    pub kind: DescriptorKind,
    pub source_count: i64,
}

fn require_label(what: &'static str, label: &str, context: &str) -> Result<String, ModelError> {
    let trimmed = label.trim();
    if normalize_label(trimmed).is_empty() {
        return Err(ModelError::EmptyLabel {
            what,
            context: if context.is_empty() {
                String::new()
            } else {
                format!(" under `{context}`")
            },
        });
    }
    Ok(trimmed.to_string())
}

/// Validates raw records and canonicalizes every id.
///
/// Fails on empty labels, negative source counts and on two nodes of the same
/// level whose labels normalize to the same id.
pub fn build_ontology(name: &str, raw: Vec<RawEntity>) -> Result<Ontology, ModelError> {
    let mut entities = BTreeMap::new();
    for raw_entity in raw {
        let entity_name = require_label("entity", &raw_entity.name, "")?;
        let entity_id = EntityId::from_label(&entity_name);

        let mut properties: BTreeMap<PropertyId, Property> = BTreeMap::new();
        for raw_property in raw_entity.properties {
            let property_name = require_label("property", &raw_property.name, entity_id.as_str())?;
            let property_id = PropertyId::new(&entity_id, &property_name);
            let value = match raw_property.value {
                Some(v) => {
                    let v = normalize_label(&v);
                    if v.is_empty() {
                        return Err(ModelError::EmptyLabel {
                            what: "property value",
                            context: format!(" under `{property_id}`"),
                        });
                    }
                    v
                }
                None => normalize_label(&property_name),
            };

            let mut descriptors: BTreeMap<DescriptorId, Descriptor> = BTreeMap::new();
            for raw_descriptor in raw_property.descriptors {
                let label = require_label("descriptor", &raw_descriptor.label, property_id.as_str())?;
                let id = DescriptorId::new(&property_id, &label);
                if raw_descriptor.source_count < 0 {
                    return Err(ModelError::NegativeSourceCount {
                        descriptor: id.to_string(),
                        count: raw_descriptor.source_count,
                    });
                }
                if descriptors.contains_key(&id) {
                    return Err(ModelError::DuplicateId {
                        what: "descriptor",
                        id: id.to_string(),
                    });
                }
                descriptors.insert(
                    id.clone(),
                    Descriptor {
                        id,
                        label,
                        kind: raw_descriptor.kind,
                        source_count: raw_descriptor.source_count as u64,
                    },
                );
            }

            if properties.contains_key(&property_id) {
                return Err(ModelError::DuplicateId {
                    what: "property",
                    id: property_id.to_string(),
                });
            }
            properties.insert(
                property_id.clone(),
                Property {
                    id: property_id,
                    name: property_name,
                    value,
                    descriptors: descriptors.into_values().collect(),
                },
            );
        }

        if entities.contains_key(&entity_id) {
            return Err(ModelError::DuplicateId {
                what: "entity",
                id: entity_id.to_string(),
            });
        }
        entities.insert(
            entity_id.clone(),
            Entity {
                id: entity_id,
                name: entity_name,
                properties: properties.into_values().collect(),
            },
        );
    }
    Ok(Ontology {
        name: name.to_string(),
        entities,
    })
}

/// Descriptors of one entity split by kind, each side in canonical id order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DescriptorPartition<'a> {
    pub essential: Vec<&'a Descriptor>,
    pub contextual: Vec<&'a Descriptor>,
}

impl<'a> DescriptorPartition<'a> {
    pub fn of_kind(&self, kind: DescriptorKind) -> &[&'a Descriptor] {
        match kind {
            DescriptorKind::Essential => &self.essential,
            DescriptorKind::Contextual => &self.contextual,
        }
    }
}

pub fn partition_descriptors(entity: &Entity) -> DescriptorPartition<'_> {
    let mut partition = DescriptorPartition::default();
    for descriptor in entity.descriptors() {
        match descriptor.kind {
            DescriptorKind::Essential => partition.essential.push(descriptor),
            DescriptorKind::Contextual => partition.contextual.push(descriptor),
        }
    }
    partition.essential.sort_by(|a, b| a.id.cmp(&b.id));
    partition.contextual.sort_by(|a, b| a.id.cmp(&b.id));
    partition
}
