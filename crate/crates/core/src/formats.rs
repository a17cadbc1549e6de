//! File formats: descriptor tables, expert overrides, entity mappings,
//! alignment reports and the bundled reference results.
//!
//! All inputs are UTF-8. Descriptor tables are CSV with the header
//! `concept,property,descriptor,type,sources[,value]`, or a JSON array of
//! objects with the same keys. Overrides and mappings are JSON arrays.
//! Every parse error carries a 1-based locator.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::Deserialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::alignment::{AlignmentReport, EntityMapping};
use crate::model::{
    build_ontology, DescriptorId, DescriptorKind, EntityId, ModelError, Ontology, RawDescriptor, RawEntity, RawProperty,
};
use crate::similarity::{normalize_label, OverrideTable, SimilarityScore};

pub const TABLE_HEADER: [&str; 5] = ["concept", "property", "descriptor", "type", "sources"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Locator {
    /// Physical line in a CSV file.
    Line(u64),
    /// Element of a JSON array.
    Entry(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Location {
    pub at: Locator,
    pub field: Option<String>,
}

impl Location {
    fn line(line: u64, field: &str) -> Self {
        Self {
            at: Locator::Line(line),
            field: Some(field.to_string()),
        }
    }

    fn entry(index: usize, field: Option<&str>) -> Self {
        Self {
            at: Locator::Entry(index + 1),
            field: field.map(str::to_string),
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.at {
            Locator::Line(n) => write!(f, "line {n}")?,
            Locator::Entry(n) => write!(f, "entry {n}")?,
        }
        if let Some(field) = &self.field {
            write!(f, ", field `{field}`")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{location}: {message}")]
    Parse { location: Location, message: String },
    #[error("missing header; expected `{}`", TABLE_HEADER.join(","))]
    MissingHeader,
    #[error("line 1: bad header `{found}`; expected `{}[,value]`", TABLE_HEADER.join(","))]
    BadHeader { found: String },
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("checksum mismatch for `{file}`: expected {expected}, got {actual}")]
    Checksum {
        file: String,
        expected: String,
        actual: String,
    },
    #[error("bundled file `{0}` is missing")]
    MissingFile(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl FormatError {
    fn at(location: Location, message: impl Into<String>) -> Self {
        FormatError::Parse {
            location,
            message: message.into(),
        }
    }

    pub fn is_io(&self) -> bool {
        matches!(self, FormatError::Io { .. })
    }
}

/// Reads a file, wrapping failures with the path.
pub fn read_file(path: &Path) -> Result<Vec<u8>, FormatError> {
    fs::read(path).map_err(|source| FormatError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Csv,
    Json,
}

impl TableFormat {
    /// `.json` means JSON; anything else is read as CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => TableFormat::Json,
            _ => TableFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

/// One descriptor row, fields already checked.
struct TableRow {
    location: Location,
    concept: String,
    property: String,
    descriptor: String,
    kind: DescriptorKind,
    sources: i64,
    value: Option<String>,
}

fn parse_sources(text: &str, location: impl Fn() -> Location) -> Result<i64, FormatError> {
    let text = text.trim();
    let digits = text.strip_prefix('-').unwrap_or(text);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(FormatError::at(
            location(),
            format!("sources `{text}` is not a base-10 integer"),
        ));
    }
    let n: i64 = text
        .parse()
        .map_err(|_| FormatError::at(location(), format!("sources `{text}` is out of range")))?;
    if n < 0 {
        return Err(FormatError::at(
            location(),
            format!("sources must be nonnegative, got {n}"),
        ));
    }
    Ok(n)
}

fn check_label(text: &str, location: Location) -> Result<String, FormatError> {
    if normalize_label(text).is_empty() {
        let field = location.field.clone().unwrap_or_default();
        return Err(FormatError::at(location, format!("empty {field}")));
    }
    Ok(text.trim().to_string())
}

fn check_kind(text: &str, location: Location) -> Result<DescriptorKind, FormatError> {
    text.parse::<DescriptorKind>()
        .map_err(|e| FormatError::at(location, e.to_string()))
}

fn csv_rows(bytes: &[u8]) -> Result<Vec<TableRow>, FormatError> {
    let bytes = bytes.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(bytes);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(bytes);
    let mut records = reader.records();

    let header = match records.next() {
        None => return Err(FormatError::MissingHeader),
        Some(r) => r.map_err(|e| csv_error(e, 1))?,
    };
    let fields: Vec<&str> = header.iter().collect();
    let has_value = match fields.as_slice() {
        f if f == TABLE_HEADER => false,
        [head @ .., "value"] if head == TABLE_HEADER => true,
        _ => {
            return Err(FormatError::BadHeader {
                found: fields.join(","),
            })
        }
    };
    let width = fields.len();

    let mut rows = Vec::new();
    for record in records {
        let record = record.map_err(|e| csv_error(e, 0))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(FormatError::at(
                Location {
                    at: Locator::Line(line),
                    field: None,
                },
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        let loc = |field: &str| Location::line(line, field);
        let value = if has_value {
            let v = record[5].trim();
            (!v.is_empty()).then(|| v.to_string())
        } else {
            None
        };
        rows.push(TableRow {
            location: Location {
                at: Locator::Line(line),
                field: None,
            },
            concept: check_label(&record[0], loc("concept"))?,
            property: check_label(&record[1], loc("property"))?,
            descriptor: check_label(&record[2], loc("descriptor"))?,
            kind: check_kind(&record[3], loc("type"))?,
            sources: parse_sources(&record[4], || loc("sources"))?,
            value,
        });
    }
    Ok(rows)
}

fn csv_error(error: csv::Error, fallback_line: u64) -> FormatError {
    let line = error.position().map_or(fallback_line, |p| p.line());
    let message = match error.kind() {
        csv::ErrorKind::Utf8 { err, .. } => format!("invalid UTF-8 in field {}", err.field() + 1),
        _ => error.to_string(),
    };
    FormatError::at(
        Location {
            at: Locator::Line(line),
            field: None,
        },
        message,
    )
}

fn json_rows(bytes: &[u8]) -> Result<Vec<TableRow>, FormatError> {
    let entries: Vec<Value> = serde_json::from_slice(bytes)?;
    entries
        .iter()
        .enumerate()
        .map(|(i, entry)| {
            let loc = |field: &str| Location::entry(i, Some(field));
            let object = entry
                .as_object()
                .ok_or_else(|| FormatError::at(Location::entry(i, None), "expected an object"))?;
            let text = |field: &str| -> Result<&str, FormatError> {
                object
                    .get(field)
                    .and_then(Value::as_str)
                    .ok_or_else(|| FormatError::at(loc(field), "missing or not a string"))
            };
            let sources = match object.get("sources") {
                Some(Value::Number(n)) => parse_sources(&n.to_string(), || loc("sources"))?,
                Some(Value::String(s)) => parse_sources(s, || loc("sources"))?,
                _ => return Err(FormatError::at(loc("sources"), "missing or not an integer")),
            };
            let value = match object.get("value") {
                None | Some(Value::Null) => None,
                Some(Value::String(s)) if s.trim().is_empty() => None,
                Some(Value::String(s)) => Some(s.trim().to_string()),
                Some(_) => return Err(FormatError::at(loc("value"), "not a string")),
            };
            Ok(TableRow {
                location: Location::entry(i, None),
                concept: check_label(text("concept")?, loc("concept"))?,
                property: check_label(text("property")?, loc("property"))?,
                descriptor: check_label(text("descriptor")?, loc("descriptor"))?,
                kind: check_kind(text("type")?, loc("type"))?,
                sources,
                value,
            })
        })
        .collect()
}

struct PropertyAccumulator {
    name: String,
    value: Option<(String, Location)>,
    descriptors: Vec<RawDescriptor>,
}

fn rows_to_raw(rows: Vec<TableRow>) -> Result<Vec<RawEntity>, FormatError> {
    let mut entities: BTreeMap<String, (String, BTreeMap<String, PropertyAccumulator>)> = BTreeMap::new();
    let mut seen: BTreeMap<(String, String, String), Location> = BTreeMap::new();

    for row in rows {
        let entity_key = normalize_label(&row.concept);
        let property_key = normalize_label(&row.property);
        let descriptor_key = normalize_label(&row.descriptor);
        if let Some(first) = seen.get(&(entity_key.clone(), property_key.clone(), descriptor_key.clone())) {
            return Err(FormatError::at(
                row.location,
                format!("duplicate descriptor `{}` (first seen at {first})", row.descriptor),
            ));
        }
        seen.insert(
            (entity_key.clone(), property_key.clone(), descriptor_key),
            row.location.clone(),
        );

        let (_, properties) = entities
            .entry(entity_key)
            .or_insert_with(|| (row.concept.clone(), BTreeMap::new()));
        let property = properties.entry(property_key).or_insert_with(|| PropertyAccumulator {
            name: row.property.clone(),
            value: None,
            descriptors: Vec::new(),
        });
        if let Some(value) = row.value {
            match &property.value {
                Some((existing, first)) if normalize_label(existing) != normalize_label(&value) => {
                    let mut location = row.location.clone();
                    location.field = Some("value".into());
                    return Err(FormatError::at(
                        location,
                        format!(
                            "conflicting value `{value}` for property `{}` (`{existing}` at {first})",
                            row.property
                        ),
                    ));
                }
                Some(_) => {}
                None => property.value = Some((value, row.location.clone())),
            }
        }
        property.descriptors.push(RawDescriptor {
            label: row.descriptor,
            kind: row.kind,
            source_count: row.sources,
        });
    }

    Ok(entities
        .into_values()
        .map(|(name, properties)| RawEntity {
            name,
            properties: properties
                .into_values()
                .map(|p| RawProperty {
                    name: p.name,
                    value: p.value.map(|(v, _)| v),
                    descriptors: p.descriptors,
                })
                .collect(),
        })
        .collect())
}

/// Parses a descriptor table into a validated ontology named `name`.
pub fn parse_descriptor_table(name: &str, bytes: &[u8], format: TableFormat) -> Result<Ontology, FormatError> {
    let rows = match format {
        TableFormat::Csv => csv_rows(bytes)?,
        TableFormat::Json => json_rows(bytes)?,
    };
    Ok(build_ontology(name, rows_to_raw(rows)?)?)
}

fn kind_token(kind: DescriptorKind) -> &'static str {
    match kind {
        DescriptorKind::Essential => "Essential",
        DescriptorKind::Contextual => "Contextual",
    }
}

/// Serializes an ontology as a descriptor table.
///
/// Properties without descriptors have no row and are dropped. The `value`
/// column is written only when some property overrides its default value.
pub fn write_descriptor_table(ontology: &Ontology, format: TableFormat) -> Vec<u8> {
    let with_value = ontology
        .entities()
        .flat_map(|e| e.properties())
        .any(|p| !p.descriptors().is_empty() && !p.has_default_value());
    let rows = ontology.entities().flat_map(|e| {
        e.properties()
            .iter()
            .flat_map(move |p| p.descriptors().iter().map(move |d| (e, p, d)))
    });

    match format {
        TableFormat::Csv => {
            let mut writer = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            let mut header: Vec<&str> = TABLE_HEADER.to_vec();
            if with_value {
                header.push("value");
            }
            writer.write_record(&header).expect("in-memory write");
            for (e, p, d) in rows {
                let sources = d.source_count().to_string();
                let mut record = vec![e.name(), p.name(), d.label(), kind_token(d.kind()), sources.as_str()];
                if with_value {
                    record.push(p.value());
                }
                writer.write_record(&record).expect("in-memory write");
            }
            writer.into_inner().expect("in-memory flush")
        }
        TableFormat::Json => {
            let entries: Vec<Value> = rows
                .map(|(e, p, d)| {
                    let mut object = serde_json::json!({
                        "concept": e.name(),
                        "property": p.name(),
                        "descriptor": d.label(),
                        "type": kind_token(d.kind()),
                        "sources": d.source_count(),
                    });
                    if with_value {
                        object["value"] = Value::String(p.value().to_string());
                    }
                    object
                })
                .collect();
            let mut out = serde_json::to_vec_pretty(&entries).expect("serializable");
            out.push(b'\n');
            out
        }
    }
}

#[derive(Deserialize)]
struct OverrideEntry {
    left: String,
    right: String,
    s: f64,
}

pub fn parse_overrides(bytes: &[u8]) -> Result<OverrideTable, FormatError> {
    let entries: Vec<Value> = serde_json::from_slice(bytes)?;
    let mut table = OverrideTable::new();
    for (i, entry) in entries.into_iter().enumerate() {
        let entry: OverrideEntry =
            serde_json::from_value(entry).map_err(|e| FormatError::at(Location::entry(i, None), e.to_string()))?;
        let left = DescriptorId::parse(&entry.left)
            .map_err(|e| FormatError::at(Location::entry(i, Some("left")), e.to_string()))?;
        let right = DescriptorId::parse(&entry.right)
            .map_err(|e| FormatError::at(Location::entry(i, Some("right")), e.to_string()))?;
        let score =
            SimilarityScore::new(entry.s).map_err(|e| FormatError::at(Location::entry(i, Some("s")), e.to_string()))?;
        if table.insert(left.clone(), right.clone(), score).is_some() {
            return Err(FormatError::at(
                Location::entry(i, None),
                format!("duplicate override key ({left}, {right})"),
            ));
        }
    }
    Ok(table)
}

/// Override ids that name no descriptor in the source or target ontology.
pub fn dangling_override_ids(table: &OverrideTable, source: &Ontology, target: &Ontology) -> Vec<String> {
    let exists = |o: &Ontology, id: &DescriptorId| {
        o.property(&id.property())
            .is_some_and(|p| p.descriptors().iter().any(|d| d.id() == id))
    };
    let mut dangling = Vec::new();
    for (left, right, _) in table.iter() {
        if !exists(source, left) {
            dangling.push(format!("left id `{left}` not found in source ontology"));
        }
        if !exists(target, right) {
            dangling.push(format!("right id `{right}` not found in target ontology"));
        }
    }
    dangling
}

#[derive(Deserialize)]
struct MappingEntry {
    source: String,
    target: String,
}

pub fn parse_mapping(bytes: &[u8]) -> Result<EntityMapping, FormatError> {
    let entries: Vec<Value> = serde_json::from_slice(bytes)?;
    let mut mapping = EntityMapping::new();
    for (i, entry) in entries.into_iter().enumerate() {
        let entry: MappingEntry =
            serde_json::from_value(entry).map_err(|e| FormatError::at(Location::entry(i, None), e.to_string()))?;
        let source = EntityId::parse(&entry.source)
            .map_err(|e| FormatError::at(Location::entry(i, Some("source")), e.to_string()))?;
        let target = EntityId::parse(&entry.target)
            .map_err(|e| FormatError::at(Location::entry(i, Some("target")), e.to_string()))?;
        mapping
            .insert(source, target)
            .map_err(|e| FormatError::at(Location::entry(i, None), e.to_string()))?;
    }
    Ok(mapping)
}

/// Formats a fraction as a percentage with two decimals, without `-0.00`.
pub fn format_pct(fraction: f64) -> String {
    let text = format!("{:.2}", fraction * 100.0);
    if text == "-0.00" {
        "0.00".to_string()
    } else {
        text
    }
}

/// Label used for the summary record of a CSV report.
pub const CSV_AVERAGE_LABEL: &str = "average";

pub fn write_report(report: &AlignmentReport, format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(report).expect("report is serializable");
            out.push(b'\n');
            out
        }
        ReportFormat::Csv => {
            let mut writer = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
            writer
                .write_record(["concept", "s_essential", "s_combined", "improvement_pct"])
                .expect("in-memory write");
            for row in &report.rows {
                writer
                    .write_record([
                        row.concept.clone(),
                        opt(row.s_essential),
                        opt(row.s_combined),
                        row.improvement.map(format_pct).unwrap_or_default(),
                    ])
                    .expect("in-memory write");
            }
            writer
                .write_record([
                    CSV_AVERAGE_LABEL.to_string(),
                    String::new(),
                    String::new(),
                    report.average_improvement.map(format_pct).unwrap_or_default(),
                ])
                .expect("in-memory write");
            writer.into_inner().expect("in-memory flush")
        }
    }
}

pub fn parse_report(bytes: &[u8]) -> Result<AlignmentReport, FormatError> {
    Ok(serde_json::from_slice(bytes)?)
}

/// The bundled descriptor table for the concept Responsibility.
pub const RESPONSIBILITY_TABLE: &[u8] = include_bytes!("../data/responsibility.csv");
pub const RESPONSIBILITY_TABLE_NAME: &str = "responsibility.csv";

pub fn bundled_responsibility() -> Ontology {
    parse_descriptor_table("responsibility", RESPONSIBILITY_TABLE, TableFormat::Csv).expect("bundled table is valid")
}

const MANIFEST: &str = "reference.sha256";
const IMPROVEMENTS: &str = "reference_improvements.csv";
const LEVELS: &str = "reference_levels.csv";
const SUMMARY: &str = "reference_summary.csv";

const BUNDLE: [(&str, &[u8]); 4] = [
    (MANIFEST, include_bytes!("../data/reference.sha256")),
    (IMPROVEMENTS, include_bytes!("../data/reference_improvements.csv")),
    (LEVELS, include_bytes!("../data/reference_levels.csv")),
    (SUMMARY, include_bytes!("../data/reference_summary.csv")),
];

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ReferenceValue {
    pub concept: String,
    #[serde(alias = "improvement_pct", alias = "level_pct")]
    pub pct: f64,
    pub provenance: String,
}

/// Published per-concept results used by `report --compare-published`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceResults {
    /// Improvement per concept, in percent.
    pub improvements: Vec<ReferenceValue>,
    /// Level per concept, in percent.
    pub levels: Vec<ReferenceValue>,
    /// The headline average as stated, in percent.
    pub stated_average_improvement_pct: f64,
}

impl ReferenceResults {
    pub fn improvement_for(&self, concept: &str) -> Option<&ReferenceValue> {
        let key = normalize_label(concept);
        self.improvements.iter().find(|r| normalize_label(&r.concept) == key)
    }

    pub fn level_for(&self, concept: &str) -> Option<&ReferenceValue> {
        let key = normalize_label(concept);
        self.levels.iter().find(|r| normalize_label(&r.concept) == key)
    }

    /// Mean of the published per-concept improvements, in percent.
    pub fn rows_mean_improvement_pct(&self) -> f64 {
        crate::alignment::mean_improvement(self.improvements.iter().map(|r| r.pct)).unwrap_or(f64::NAN)
    }
}

fn verify_bundle(files: &BTreeMap<&str, &[u8]>) -> Result<(), FormatError> {
    let manifest = files
        .get(MANIFEST)
        .ok_or_else(|| FormatError::MissingFile(MANIFEST.into()))?;
    let manifest = std::str::from_utf8(manifest).map_err(|_| FormatError::Checksum {
        file: MANIFEST.into(),
        expected: "UTF-8 manifest".into(),
        actual: "invalid UTF-8".into(),
    })?;
    let mut listed = 0;
    for line in manifest.lines().filter(|l| !l.trim().is_empty()) {
        let (expected, file) = line
            .split_once(char::is_whitespace)
            .map(|(h, f)| (h, f.trim_start().trim_start_matches('*')))
            .ok_or_else(|| FormatError::Checksum {
                file: MANIFEST.into(),
                expected: "`<sha256>  <file>` lines".into(),
                actual: line.to_string(),
            })?;
        let bytes = files
            .get(file)
            .ok_or_else(|| FormatError::MissingFile(file.to_string()))?;
        let actual = hex::encode(Sha256::digest(bytes));
        if !actual.eq_ignore_ascii_case(expected) {
            return Err(FormatError::Checksum {
                file: file.to_string(),
                expected: expected.to_string(),
                actual,
            });
        }
        listed += 1;
    }
    for required in [IMPROVEMENTS, LEVELS, SUMMARY] {
        if !manifest.lines().any(|l| l.trim_end().ends_with(required)) {
            return Err(FormatError::Checksum {
                file: required.into(),
                expected: "an entry in the manifest".into(),
                actual: format!("{listed} entries without it"),
            });
        }
    }
    Ok(())
}

fn read_reference_csv(file: &str, bytes: &[u8]) -> Result<Vec<ReferenceValue>, FormatError> {
    let mut reader = csv::Reader::from_reader(bytes);
    reader
        .deserialize()
        .map(|r| {
            r.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                FormatError::at(
                    Location {
                        at: Locator::Line(line),
                        field: None,
                    },
                    format!("{file}: {e}"),
                )
            })
        })
        .collect()
}

fn decode_bundle(files: &BTreeMap<&str, &[u8]>) -> Result<ReferenceResults, FormatError> {
    verify_bundle(files)?;
    let improvements = read_reference_csv(IMPROVEMENTS, files[IMPROVEMENTS])?;
    let levels = read_reference_csv(LEVELS, files[LEVELS])?;

    #[derive(Deserialize)]
    struct SummaryRow {
        key: String,
        value: f64,
    }
    let mut reader = csv::Reader::from_reader(files[SUMMARY]);
    let mut stated = None;
    for row in reader.deserialize::<SummaryRow>() {
        let row = row.map_err(|e| {
            FormatError::at(
                Location {
                    at: Locator::Line(e.position().map_or(0, |p| p.line())),
                    field: None,
                },
                format!("{SUMMARY}: {e}"),
            )
        })?;
        if row.key == "stated_average_improvement_pct" {
            stated = Some(row.value);
        }
    }
    let stated_average_improvement_pct = stated.ok_or_else(|| {
        FormatError::at(
            Location {
                at: Locator::Line(1),
                field: Some("key".into()),
            },
            format!("{SUMMARY}: missing stated_average_improvement_pct"),
        )
    })?;
    Ok(ReferenceResults {
        improvements,
        levels,
        stated_average_improvement_pct,
    })
}

/// Loads the reference results compiled into the binary.
pub fn load_reference_results() -> Result<ReferenceResults, FormatError> {
    decode_bundle(&BUNDLE.into_iter().collect())
}

/// Loads the reference results from a directory holding the bundle files.
pub fn load_reference_results_from(dir: &Path) -> Result<ReferenceResults, FormatError> {
    let mut contents = BTreeMap::new();
    for (name, _) in BUNDLE {
        let path = dir.join(name);
        if !path.exists() {
            return Err(FormatError::MissingFile(path.display().to_string()));
        }
        contents.insert(name, read_file(&path)?);
    }
    let files = contents.iter().map(|(k, v)| (*k, v.as_slice())).collect();
    decode_bundle(&files)
}
