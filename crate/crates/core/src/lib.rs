//! Ontology alignment with essential and contextual descriptors.
//!
//! Knowledge is modelled as entities owning properties, and properties owning
//! descriptors of two kinds: essential (objective, documented) and contextual
//! (situational, cultural). Two ontologies are aligned concept by concept,
//! once from essential descriptors alone and once from both kinds, and the
//! relative gain from adding contextual descriptors is reported.
//!
//! * [`model`]: the entity/property/descriptor hierarchy and canonical ids.
//! * [`relational`]: projections, join, selections and difference over triples.
//! * [`similarity`]: lexical scoring, expert overrides, log-weighted aggregation.
//! * [`alignment`]: descriptor matching and per-concept reports.
//! * [`formats`]: table, override, mapping and report files.
//! * [`cli`]: the `ctxalign` command.

pub mod alignment;
pub mod cli;
pub mod formats;
pub mod lint;
pub mod model;
pub mod relational;
pub mod similarity;

pub use alignment::{
    align_concept, align_ontologies, default_mapping, match_descriptors, AlignOptions, AlignmentMode, AlignmentReport,
    ConceptAlignmentRow, EntityMapping, ModeSelection, WeightBasis,
};
pub use model::{
    build_ontology, partition_descriptors, Descriptor, DescriptorId, DescriptorKind, Entity, EntityId, Ontology,
    Property, PropertyId,
};
pub use similarity::{
    aggregate_similarity, improvement, lexical_similarity, normalize_label, MatchedPair, SimilarityScore,
};
