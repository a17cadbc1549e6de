//! Concept-level alignment of two ontologies.
//!
//! For each mapped concept pair the engine matches descriptors of the same
//! kind one-to-one, then scores the concept twice: once from essential pairs
//! only and once from essential plus contextual pairs. The relative change
//! between the two is the improvement contributed by contextual descriptors.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{partition_descriptors, Descriptor, DescriptorKind, Entity, EntityId, Ontology, PropertyId};
use crate::similarity::{aggregate_similarity, improvement, normalize_label, MatchedPair, Scorer, SimilarityError};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlignmentError {
    #[error("mapping references unknown {side} entity `{id}`")]
    UnknownEntity { side: &'static str, id: EntityId },
    #[error("mapping is not injective: {side} entity `{id}` appears twice")]
    NotInjective { side: &'static str, id: EntityId },
}

/// One-to-one map from source to target entities.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityMapping {
    pairs: BTreeMap<EntityId, EntityId>,
}

impl EntityMapping {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (EntityId, EntityId)>) -> Result<Self, AlignmentError> {
        let mut mapping = Self::new();
        for (source, target) in pairs {
            mapping.insert(source, target)?;
        }
        Ok(mapping)
    }

    pub fn insert(&mut self, source: EntityId, target: EntityId) -> Result<(), AlignmentError> {
        if self.pairs.contains_key(&source) {
            return Err(AlignmentError::NotInjective {
                side: "source",
                id: source,
            });
        }
        if self.pairs.values().any(|t| t == &target) {
            return Err(AlignmentError::NotInjective {
                side: "target",
                id: target,
            });
        }
        self.pairs.insert(source, target);
        Ok(())
    }

    pub fn identity(ontology: &Ontology) -> Self {
        Self {
            pairs: ontology.entities().map(|e| (e.id().clone(), e.id().clone())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, source: &EntityId) -> Option<&EntityId> {
        self.pairs.get(source)
    }

    /// Pairs in source id order.
    pub fn iter(&self) -> impl Iterator<Item = (&EntityId, &EntityId)> {
        self.pairs.iter()
    }
}

/// Pairs entities whose normalized names are equal.
pub fn default_mapping(source: &Ontology, target: &Ontology) -> EntityMapping {
    let by_name: BTreeMap<String, &EntityId> = target.entities().map(|e| (normalize_label(e.name()), e.id())).collect();
    let mut used = BTreeSet::new();
    let mut mapping = EntityMapping::new();
    for entity in source.entities() {
        if let Some(target_id) = by_name.get(&normalize_label(entity.name())) {
            // Names map to ids injectively, so `used` only guards pathological input.
            if used.insert(*target_id) {
                mapping.pairs.insert(entity.id().clone(), (*target_id).clone());
            }
        }
    }
    mapping
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlignmentMode {
    EssentialOnly,
    Combined,
}

/// Which concept scores to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModeSelection {
    Essential,
    Combined,
    #[default]
    Both,
}

impl ModeSelection {
    pub fn modes(self) -> Vec<AlignmentMode> {
        match self {
            ModeSelection::Essential => vec![AlignmentMode::EssentialOnly],
            ModeSelection::Combined => vec![AlignmentMode::Combined],
            ModeSelection::Both => vec![AlignmentMode::EssentialOnly, AlignmentMode::Combined],
        }
    }

    fn includes(self, mode: AlignmentMode) -> bool {
        self.modes().contains(&mode)
    }
}

/// How the `src` weight of a matched pair is derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightBasis {
    /// Source-side descriptor count.
    #[default]
    Source,
    /// Mean of both sides' counts for matched pairs; source count otherwise.
    Mean,
}

impl fmt::Display for WeightBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WeightBasis::Source => "source",
            WeightBasis::Mean => "mean",
        })
    }
}

fn pair_weight(source: &Descriptor, target: Option<&Descriptor>, basis: WeightBasis) -> f64 {
    match (basis, target) {
        (WeightBasis::Mean, Some(t)) => (source.source_count() as f64 + t.source_count() as f64) / 2.0,
        _ => source.source_count() as f64,
    }
}

/// Greedy one-to-one matching of one descriptor kind.
///
/// Source descriptors are visited in canonical id order; each takes the
/// highest-scoring target not yet taken, ties going to the smallest target id.
/// Sources left without a target become unmatched pairs with `s = 0`.
pub fn match_descriptors(
    source: &Entity,
    target: &Entity,
    kind: DescriptorKind,
    scorer: &dyn Scorer,
    basis: WeightBasis,
) -> Vec<MatchedPair> {
    let sources = partition_descriptors(source);
    let targets = partition_descriptors(target);
    let candidates = targets.of_kind(kind);
    let mut taken = vec![false; candidates.len()];

    sources
        .of_kind(kind)
        .iter()
        .map(|src| {
            let mut best: Option<(usize, f64)> = None;
            for (i, candidate) in candidates.iter().enumerate() {
                if taken[i] {
                    continue;
                }
                let s = scorer.score(src, candidate).value();
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((i, s));
                }
            }
            match best {
                Some((i, s)) => {
                    taken[i] = true;
                    let tgt = candidates[i];
                    MatchedPair::matched(
                        src.id().clone(),
                        tgt.id().clone(),
                        kind,
                        crate::similarity::SimilarityScore::new(s).expect("scorer returned a valid score"),
                        pair_weight(src, Some(tgt), basis),
                    )
                }
                None => MatchedPair::unmatched(src.id().clone(), kind, pair_weight(src, None, basis)),
            }
        })
        .collect()
}

pub fn align_concept(
    source: &Entity,
    target: &Entity,
    mode: AlignmentMode,
    scorer: &dyn Scorer,
    basis: WeightBasis,
) -> Result<f64, SimilarityError> {
    let mut pairs = match_descriptors(source, target, DescriptorKind::Essential, scorer, basis);
    if mode == AlignmentMode::Combined {
        pairs.extend(match_descriptors(
            source,
            target,
            DescriptorKind::Contextual,
            scorer,
            basis,
        ));
    }
    aggregate_similarity(&pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairCounts {
    pub matched: usize,
    pub unmatched: usize,
}

impl PairCounts {
    fn of(pairs: &[MatchedPair]) -> Self {
        let matched = pairs.iter().filter(|p| p.is_matched()).count();
        Self {
            matched,
            unmatched: pairs.len() - matched,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    SEssential,
    SCombined,
    Improvement,
}

/// A metric that could not be computed for a row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowIssue {
    pub metric: Metric,
    pub message: String,
}

/// Scores restricted to the descriptors of one source property.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyScores {
    pub property: PropertyId,
    pub s_essential: Option<f64>,
    pub s_combined: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptAlignmentRow {
    pub concept: String,
    pub source: EntityId,
    pub target: EntityId,
    pub s_essential: Option<f64>,
    pub s_combined: Option<f64>,
    /// Relative improvement as a fraction (0.0704 for +7.04%).
    pub improvement: Option<f64>,
    pub essential: PairCounts,
    pub contextual: PairCounts,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub issues: Vec<RowIssue>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub properties: Vec<PropertyScores>,
}

impl ConceptAlignmentRow {
    pub fn is_undefined(&self) -> bool {
        !self.issues.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub tool: String,
    pub tool_version: String,
    pub source_ontology: String,
    pub target_ontology: String,
    pub modes: Vec<AlignmentMode>,
    pub similarity_source: String,
    pub weight_basis: WeightBasis,
    pub log_base: String,
    pub improvement_averaging: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub schema_version: u32,
    pub metadata: ReportMetadata,
    pub rows: Vec<ConceptAlignmentRow>,
    /// Mean of the defined row improvements, as a fraction.
    pub average_improvement: Option<f64>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl AlignmentReport {
    pub fn has_undefined_rows(&self) -> bool {
        self.rows.iter().any(ConceptAlignmentRow::is_undefined)
    }
}

/// Arithmetic mean of the given improvements, `None` when there are none.
pub fn mean_improvement(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(sum, n), v| (sum + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AlignOptions {
    pub modes: ModeSelection,
    pub weight_basis: WeightBasis,
    /// Score concept rows on the rayon pool. Output is identical either way.
    pub parallel: bool,
    /// Attach per-property scores to each row.
    pub property_detail: bool,
}

fn property_scores(source: &Entity, essential: &[MatchedPair], contextual: &[MatchedPair]) -> Vec<PropertyScores> {
    source
        .properties()
        .iter()
        .map(|p| {
            let of_property = |pairs: &[MatchedPair]| -> Vec<MatchedPair> {
                pairs
                    .iter()
                    .filter(|m| &m.source().property() == p.id())
                    .cloned()
                    .collect()
            };
            let ess = of_property(essential);
            let mut all = ess.clone();
            all.extend(of_property(contextual));
            PropertyScores {
                property: p.id().clone(),
                s_essential: aggregate_similarity(&ess).ok(),
                s_combined: aggregate_similarity(&all).ok(),
            }
        })
        .collect()
}

fn align_row(source: &Entity, target: &Entity, scorer: &dyn Scorer, options: &AlignOptions) -> ConceptAlignmentRow {
    let essential = match_descriptors(source, target, DescriptorKind::Essential, scorer, options.weight_basis);
    let contextual = match_descriptors(source, target, DescriptorKind::Contextual, scorer, options.weight_basis);
    let mut issues = Vec::new();

    let s_essential = if options.modes.includes(AlignmentMode::EssentialOnly) {
        match aggregate_similarity(&essential) {
            Ok(s) => Some(s),
            Err(e) => {
                issues.push(RowIssue {
                    metric: Metric::SEssential,
                    message: e.to_string(),
                });
                None
            }
        }
    } else {
        None
    };

    let s_combined = if options.modes.includes(AlignmentMode::Combined) {
        let mut all = essential.clone();
        all.extend(contextual.iter().cloned());
        match aggregate_similarity(&all) {
            Ok(s) => Some(s),
            Err(e) => {
                issues.push(RowIssue {
                    metric: Metric::SCombined,
                    message: e.to_string(),
                });
                None
            }
        }
    } else {
        None
    };

    let improvement = if options.modes == ModeSelection::Both {
        match (s_essential, s_combined) {
            (Some(f), Some(fc)) => match improvement(f, fc) {
                Ok(imp) => Some(imp),
                Err(e) => {
                    issues.push(RowIssue {
                        metric: Metric::Improvement,
                        message: e.to_string(),
                    });
                    None
                }
            },
            _ => {
                issues.push(RowIssue {
                    metric: Metric::Improvement,
                    message: "a concept similarity is undefined".into(),
                });
                None
            }
        }
    } else {
        None
    };

    ConceptAlignmentRow {
        concept: source.name().to_string(),
        source: source.id().clone(),
        target: target.id().clone(),
        s_essential,
        s_combined,
        improvement,
        essential: PairCounts::of(&essential),
        contextual: PairCounts::of(&contextual),
        issues,
        properties: if options.property_detail {
            property_scores(source, &essential, &contextual)
        } else {
            Vec::new()
        },
    }
}

/// Aligns every mapped concept pair and summarizes the improvements.
pub fn align_ontologies(
    source: &Ontology,
    target: &Ontology,
    mapping: &EntityMapping,
    scorer: &dyn Scorer,
    options: &AlignOptions,
) -> Result<AlignmentReport, AlignmentError> {
    let mut work = Vec::with_capacity(mapping.len());
    for (s, t) in mapping.iter() {
        let s_entity = source.entity(s).ok_or_else(|| AlignmentError::UnknownEntity {
            side: "source",
            id: s.clone(),
        })?;
        let t_entity = target.entity(t).ok_or_else(|| AlignmentError::UnknownEntity {
            side: "target",
            id: t.clone(),
        })?;
        work.push((s_entity, t_entity));
    }

    // Both paths preserve mapping order, which is source id order.
    let rows: Vec<ConceptAlignmentRow> = if options.parallel {
        work.par_iter().map(|(s, t)| align_row(s, t, scorer, options)).collect()
    } else {
        work.iter().map(|(s, t)| align_row(s, t, scorer, options)).collect()
    };

    let average_improvement = mean_improvement(rows.iter().filter_map(|r| r.improvement));
    let mut warnings: Vec<String> = rows
        .iter()
        .flat_map(|r| r.issues.iter().map(move |i| format!("{}: {}", r.concept, i.message)))
        .collect();
    if options.modes == ModeSelection::Both && !rows.is_empty() && average_improvement.is_none() {
        warnings.push("every row has an undefined improvement; no average reported".into());
    }

    Ok(AlignmentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        metadata: ReportMetadata {
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            source_ontology: source.name().to_string(),
            target_ontology: target.name().to_string(),
            modes: options.modes.modes(),
            similarity_source: scorer.name().to_string(),
            weight_basis: options.weight_basis,
            log_base: "natural".into(),
            improvement_averaging: "per-concept arithmetic mean".into(),
        },
        rows,
        average_improvement,
        warnings,
    })
}
