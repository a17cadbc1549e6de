//! Descriptor similarity and its aggregation into a concept score.
//!
//! A concept score is the weighted mean
//!
//! ```text
//!       Σ s_i · ln(1 + src_i)
//! S  =  ---------------------
//!         Σ ln(1 + src_i)
//! ```
//!
//! taken over essential and contextual matched pairs alike. The logarithm
//! base cancels in the ratio, so the natural log is used throughout.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

use crate::model::{Descriptor, DescriptorId, DescriptorKind};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimilarityError {
    #[error("similarity score {0} is outside [0, 1]")]
    OutOfRange(f64),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("undefined improvement: baseline similarity is zero")]
    UndefinedImprovement,
    #[error("improvement domain error: {0}")]
    Domain(String),
}

/// Trims, case-folds, collapses whitespace and applies NFC composition.
pub fn normalize_label(text: &str) -> String {
    let composed: String = text.nfc().collect();
    let folded = composed.to_lowercase();
    let mut out = String::with_capacity(folded.len());
    for token in folded.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(token);
    }
    out.nfc().collect()
}

/// A similarity value in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SimilarityScore(f64);

impl SimilarityScore {
    pub const ZERO: SimilarityScore = SimilarityScore(0.0);
    pub const ONE: SimilarityScore = SimilarityScore(1.0);

    pub fn new(value: f64) -> Result<Self, SimilarityError> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(SimilarityError::OutOfRange(value))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for SimilarityScore {
    type Error = SimilarityError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<SimilarityScore> for f64 {
    fn from(score: SimilarityScore) -> f64 {
        score.0
    }
}

impl fmt::Display for SimilarityScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Token-set Jaccard index over whitespace tokens of normalized text.
pub fn token_jaccard(a: &str, b: &str) -> f64 {
    let left: BTreeSet<&str> = a.split_whitespace().collect();
    let right: BTreeSet<&str> = b.split_whitespace().collect();
    let union = left.union(&right).count();
    if union == 0 {
        return 1.0;
    }
    left.intersection(&right).count() as f64 / union as f64
}

/// `1 - levenshtein / max(len)` over characters.
pub fn edit_similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - strsim::levenshtein(a, b) as f64 / longest as f64
}

/// Equal-weight blend of token Jaccard and normalized edit similarity,
/// computed on normalized labels.
///
/// Symmetric and deterministic; exactly 1 when the labels normalize to the
/// same text.
pub fn lexical_similarity(a: &str, b: &str) -> SimilarityScore {
    let a = normalize_label(a);
    let b = normalize_label(b);
    if a == b {
        return SimilarityScore::ONE;
    }
    let s = 0.5 * token_jaccard(&a, &b) + 0.5 * edit_similarity(&a, &b);
    SimilarityScore(s.clamp(0.0, 1.0))
}

/// Expert-supplied scores keyed by `(source, target)` descriptor ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OverrideTable {
    scores: BTreeMap<(DescriptorId, DescriptorId), SimilarityScore>,
}

impl OverrideTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the previous score if the key was already present.
    pub fn insert(
        &mut self,
        source: DescriptorId,
        target: DescriptorId,
        score: SimilarityScore,
    ) -> Option<SimilarityScore> {
        self.scores.insert((source, target), score)
    }

    pub fn get(&self, source: &DescriptorId, target: &DescriptorId) -> Option<SimilarityScore> {
        // Tuple keys need owned values for lookup; the table is small.
        self.scores.get(&(source.clone(), target.clone())).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DescriptorId, &DescriptorId, SimilarityScore)> {
        self.scores.iter().map(|((l, r), s)| (l, r, *s))
    }
}

/// Scores a source descriptor against a candidate target descriptor.
pub trait Scorer: Sync {
    fn score(&self, source: &Descriptor, target: &Descriptor) -> SimilarityScore;

    /// Short name recorded in report metadata.
    fn name(&self) -> &str;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalScorer;

impl Scorer for LexicalScorer {
    fn score(&self, source: &Descriptor, target: &Descriptor) -> SimilarityScore {
        lexical_similarity(source.label(), target.label())
    }

    fn name(&self) -> &str {
        "lexical"
    }
}

/// Override lookup with lexical fallback.
#[derive(Debug, Clone, Default)]
pub struct OverrideScorer {
    overrides: OverrideTable,
}

impl OverrideScorer {
    pub fn new(overrides: OverrideTable) -> Self {
        Self { overrides }
    }
}

impl Scorer for OverrideScorer {
    fn score(&self, source: &Descriptor, target: &Descriptor) -> SimilarityScore {
        resolve_similarity((source.id(), target.id()), &self.overrides, || {
            lexical_similarity(source.label(), target.label())
        })
    }

    fn name(&self) -> &str {
        "overrides+lexical"
    }
}

pub fn resolve_similarity(
    pair: (&DescriptorId, &DescriptorId),
    overrides: &OverrideTable,
    fallback: impl FnOnce() -> SimilarityScore,
) -> SimilarityScore {
    overrides.get(pair.0, pair.1).unwrap_or_else(fallback)
}

/// One source descriptor and its counterpart, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    source: DescriptorId,
    target: Option<DescriptorId>,
    kind: DescriptorKind,
    s: SimilarityScore,
    src: f64,
}

impl MatchedPair {
    pub fn matched(
        source: DescriptorId,
        target: DescriptorId,
        kind: DescriptorKind,
        s: SimilarityScore,
        src: f64,
    ) -> Self {
        Self {
            source,
            target: Some(target),
            kind,
            s,
            src: check_src(src),
        }
    }

    /// A source descriptor without counterpart; contributes `s = 0`.
    pub fn unmatched(source: DescriptorId, kind: DescriptorKind, src: f64) -> Self {
        Self {
            source,
            target: None,
            kind,
            s: SimilarityScore::ZERO,
            src: check_src(src),
        }
    }

    pub fn source(&self) -> &DescriptorId {
        &self.source
    }

    pub fn target(&self) -> Option<&DescriptorId> {
        self.target.as_ref()
    }

    pub fn kind(&self) -> DescriptorKind {
        self.kind
    }

    pub fn s(&self) -> SimilarityScore {
        self.s
    }

    /// Source-count weight basis.
    pub fn src(&self) -> f64 {
        self.src
    }

    pub fn is_matched(&self) -> bool {
        self.target.is_some()
    }

    fn order_key(&self, other: &Self) -> std::cmp::Ordering {
        self.kind
            .cmp(&other.kind)
            .then_with(|| self.source.cmp(&other.source))
            .then_with(|| self.target.cmp(&other.target))
            .then_with(|| self.s.0.total_cmp(&other.s.0))
            .then_with(|| self.src.total_cmp(&other.src))
    }
}

fn check_src(src: f64) -> f64 {
    assert!(
        src >= 0.0 && src.is_finite(),
        "source count must be finite and nonnegative, got {src}"
    );
    src
}

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(self) -> f64 {
        self.sum + self.compensation
    }
}

/// Weighted mean of `(score, weight)` terms, summed in the given order.
pub fn weighted_mean(terms: impl IntoIterator<Item = (f64, f64)>) -> Result<f64, SimilarityError> {
    let mut numerator = CompensatedSum::default();
    let mut denominator = CompensatedSum::default();
    let mut count = 0usize;
    for (score, weight) in terms {
        numerator.add(score * weight);
        denominator.add(weight);
        count += 1;
    }
    if count == 0 {
        return Err(SimilarityError::UndefinedMetric("no descriptor pairs".into()));
    }
    let denominator = denominator.total();
    if denominator <= 0.0 {
        return Err(SimilarityError::UndefinedMetric(
            "every descriptor pair has zero source weight".into(),
        ));
    }
    Ok(numerator.total() / denominator)
}

/// Aggregates pairs with an arbitrary weight function of `src`.
///
/// Pairs are summed in canonical order (kind, source id, target id), so the
/// result does not depend on how the input was assembled.
pub fn aggregate_with_weights(pairs: &[MatchedPair], weight: impl Fn(f64) -> f64) -> Result<f64, SimilarityError> {
    let mut ordered: Vec<&MatchedPair> = pairs.iter().collect();
    ordered.sort_by(|a, b| a.order_key(b));
    weighted_mean(ordered.into_iter().map(|p| (p.s.0, weight(p.src))))
}

/// Concept similarity with `ln(1 + src)` weights.
pub fn aggregate_similarity(pairs: &[MatchedPair]) -> Result<f64, SimilarityError> {
    aggregate_with_weights(pairs, f64::ln_1p)
}

/// Relative improvement `(combined - essential) / essential`.
pub fn improvement(s_essential: f64, s_combined: f64) -> Result<f64, SimilarityError> {
    if s_essential.is_nan() || s_combined.is_nan() {
        return Err(SimilarityError::Domain("similarity is NaN".into()));
    }
    if s_essential < 0.0 || s_combined < 0.0 {
        return Err(SimilarityError::Domain(format!(
            "similarities must be nonnegative, got {s_essential} and {s_combined}"
        )));
    }
    if s_essential == 0.0 {
        return Err(SimilarityError::UndefinedImprovement);
    }
    Ok((s_combined - s_essential) / s_essential)
}
