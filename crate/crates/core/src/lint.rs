//! Optional curation hints for descriptor kinds.
//!
//! Essential descriptors tend to be documented, measurable and procedural;
//! contextual ones tend to be about perception, culture and public opinion.
//! These cue lists only flag a descriptor whose label carries cues of the
//! other kind and none of its own. They never change a descriptor's kind.

use std::collections::BTreeSet;

use crate::model::{Descriptor, DescriptorKind, Ontology};
use crate::similarity::normalize_label;

const ESSENTIAL_CUES: &[&str] = &[
    "audit",
    "audits",
    "certification",
    "code",
    "compliance",
    "contract",
    "contracts",
    "documentation",
    "framework",
    "frameworks",
    "law",
    "laws",
    "legal",
    "legislation",
    "mandatory",
    "policies",
    "policy",
    "procedure",
    "procedures",
    "regulation",
    "regulations",
    "regulatory",
    "standard",
    "standards",
];

const CONTEXTUAL_CUES: &[&str] = &[
    "attitudes",
    "cultural",
    "culture",
    "expectation",
    "expectations",
    "influence",
    "norms",
    "opinion",
    "perception",
    "perceptions",
    "public",
    "sentiment",
    "social",
    "societal",
    "trust",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KindHint {
    pub descriptor: String,
    pub declared: DescriptorKind,
    pub suggested: DescriptorKind,
    pub cues: Vec<String>,
}

fn cues<'a>(tokens: &BTreeSet<&'a str>, list: &[&str]) -> Vec<&'a str> {
    tokens.iter().copied().filter(|t| list.contains(t)).collect()
}

pub fn kind_hint(descriptor: &Descriptor) -> Option<KindHint> {
    let label = normalize_label(descriptor.label());
    let tokens: BTreeSet<&str> = label
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .collect();
    let essential = cues(&tokens, ESSENTIAL_CUES);
    let contextual = cues(&tokens, CONTEXTUAL_CUES);
    let (own, other, suggested) = match descriptor.kind() {
        DescriptorKind::Essential => (essential, contextual, DescriptorKind::Contextual),
        DescriptorKind::Contextual => (contextual, essential, DescriptorKind::Essential),
    };
    (own.is_empty() && !other.is_empty()).then(|| KindHint {
        descriptor: descriptor.id().to_string(),
        declared: descriptor.kind(),
        suggested,
        cues: other.into_iter().map(str::to_string).collect(),
    })
}

pub fn kind_hints(ontology: &Ontology) -> Vec<KindHint> {
    ontology
        .entities()
        .flat_map(|e| e.descriptors())
        .filter_map(kind_hint)
        .collect()
}
