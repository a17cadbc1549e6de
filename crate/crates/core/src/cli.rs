//! Command-line front end.
//!
//! Exit codes: 0 success, 1 validation or parse error, 2 I/O error,
//! 3 undefined metric under `--strict`, 4 bad usage.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::alignment::{
    align_ontologies, default_mapping, mean_improvement, AlignOptions, AlignmentReport, ModeSelection, WeightBasis,
};
use crate::formats::{
    dangling_override_ids, format_pct, load_reference_results, parse_descriptor_table, parse_mapping, parse_overrides,
    parse_report, read_file, write_report, FormatError, ReportFormat, TableFormat,
};
use crate::lint::kind_hints;
use crate::model::{DescriptorKind, EntityId, Ontology, PropertyId};
use crate::relational::{
    combined_description, contextual_triples, entity_property_difference, essential_triples, join_descriptors,
    project_contextual_values, project_essential_values, project_property_values, property_triples,
    relation_difference, select_matching_by_contextual, select_matching_by_essential, select_matching_entities,
    DescriptorTriple, PropertyTriple, Relation,
};
use crate::similarity::{LexicalScorer, OverrideScorer, Scorer};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_UNDEFINED: i32 = 3;
pub const EXIT_USAGE: i32 = 4;

const TABLE_FORMAT_HELP: &str = "\
Descriptor tables are UTF-8 CSV with the header
  concept,property,descriptor,type,sources[,value]
where type is Formal, Essential or Contextual (case-insensitive) and sources
is a nonnegative base-10 integer. Files ending in .json are read as a JSON
array of objects with the same keys.";

#[derive(Debug, Parser)]
#[command(
    name = "ctxalign",
    version,
    about = "Ontology alignment with essential and contextual descriptors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse a descriptor table, check invariants and print counts.
    #[command(after_help = TABLE_FORMAT_HELP)]
    Validate(ValidateArgs),
    /// Align two descriptor tables and write a report.
    #[command(after_help = ALIGN_HELP)]
    Align(AlignArgs),
    /// Run one relational operation on parsed tables.
    #[command(subcommand)]
    Query(QueryCommand),
    /// Print a report as a table, optionally against the published results.
    Report(ReportArgs),
}

const ALIGN_HELP: &str = "\
Descriptor tables: CSV `concept,property,descriptor,type,sources[,value]` or a
JSON array of the same objects (by .json extension).
Mapping file: JSON array of {\"source\": <entity id>, \"target\": <entity id>};
without it, entities with equal normalized names are paired.
Overrides file: JSON array of {\"left\": <descriptor id>, \"right\": <descriptor id>,
\"s\": <score in [0,1]>}; ids are `entity/property/descriptor` paths.
Report CSV columns: concept,s_essential,s_combined,improvement_pct, followed by
an `average` record.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InputFormat {
    Csv,
    Json,
}

impl From<InputFormat> for TableFormat {
    fn from(f: InputFormat) -> Self {
        match f {
            InputFormat::Csv => TableFormat::Csv,
            InputFormat::Json => TableFormat::Json,
        }
    }
}

#[derive(Debug, Args)]
struct ValidateArgs {
    /// Descriptor table to check.
    file: PathBuf,
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<InputFormat>,
    /// Also print descriptor-kind curation hints.
    #[arg(long)]
    lint: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Essential,
    Combined,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum WeightArg {
    Source,
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct AlignArgs {
    /// Source descriptor table.
    #[arg(long)]
    source: PathBuf,
    /// Target descriptor table.
    #[arg(long)]
    target: PathBuf,
    /// Entity mapping file (JSON).
    #[arg(long)]
    mapping: Option<PathBuf>,
    /// Expert similarity overrides (JSON).
    #[arg(long)]
    overrides: Option<PathBuf>,
    /// Which concept scores to compute.
    #[arg(long, value_enum, default_value = "both")]
    mode: ModeArg,
    /// Weight basis for matched pairs: source-side count or mean of both sides.
    #[arg(long, value_enum, default_value = "source")]
    weight_basis: WeightArg,
    /// Report output path.
    #[arg(long)]
    out: PathBuf,
    /// Report format.
    #[arg(long, value_enum, default_value = "json")]
    format: OutFormat,
    /// Exit with code 3 when any row has an undefined metric.
    #[arg(long)]
    strict: bool,
    /// Treat override ids that match no descriptor as errors.
    #[arg(long)]
    deny_dangling: bool,
    /// Include per-property scores in the report.
    #[arg(long)]
    verbose: bool,
    /// Score concept rows in parallel.
    #[arg(long)]
    parallel: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RelationArg {
    Props,
    Essential,
    Contextual,
    Combined,
}

#[derive(Debug, Subcommand)]
enum QueryCommand {
    /// Property values of one entity.
    ProjectProps {
        file: PathBuf,
        #[arg(long)]
        entity: String,
    },
    /// Essential descriptor values of one property (`entity/property`).
    ProjectEssential {
        file: PathBuf,
        #[arg(long)]
        property: String,
    },
    /// Contextual descriptor values of one property (`entity/property`).
    ProjectContextual {
        file: PathBuf,
        #[arg(long)]
        property: String,
    },
    /// Entity pairs sharing a property value, across all given tables.
    SelectEntities {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Property pairs sharing an essential descriptor value.
    SelectEssential {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Property pairs sharing a contextual descriptor value.
    SelectContextual {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Essential and contextual descriptors combined, optionally for one property.
    Join {
        file: PathBuf,
        #[arg(long)]
        property: Option<String>,
    },
    /// Tuples of LEFT absent from RIGHT, or properties of one entity absent from another.
    Diff {
        left: PathBuf,
        #[arg(required_unless_present = "entity")]
        right: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "props")]
        relation: RelationArg,
        /// Compare two entities of LEFT instead of two tables.
        #[arg(long, requires = "against", conflicts_with = "right")]
        entity: Option<String>,
        #[arg(long, requires = "entity")]
        against: Option<String>,
    },
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// JSON report written by `align`.
    #[arg(long = "in")]
    input: PathBuf,
    /// Show the published per-concept results and averages alongside.
    #[arg(long)]
    compare_published: bool,
}

/// Failure carrying its exit code.
struct Failure {
    code: i32,
    message: String,
}

impl From<FormatError> for Failure {
    fn from(e: FormatError) -> Self {
        Failure {
            code: if e.is_io() { EXIT_IO } else { EXIT_INVALID },
            message: e.to_string(),
        }
    }
}

fn invalid(message: impl ToString) -> Failure {
    Failure {
        code: EXIT_INVALID,
        message: message.to_string(),
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: EXIT_IO,
        message: format!("{}: {e}", path.display()),
    }
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
    color: bool,
}

/// Runs the CLI against the process's stdout and stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    use std::io::IsTerminal;
    let color = std::io::stdout().is_terminal() && std::env::var_os("NO_COLOR").is_none();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock(), color)
}

pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write, color: bool) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{e}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{e}");
                    EXIT_USAGE
                }
            };
        }
    };
    let mut io = Io { out, err, color };
    let result = match cli.command {
        Command::Validate(args) => validate(args, &mut io),
        Command::Align(args) => align(args, &mut io),
        Command::Query(q) => query(q, &mut io),
        Command::Report(args) => report(args, &mut io),
    };
    match result {
        Ok(code) => code,
        Err(failure) => {
            if !failure.message.is_empty() {
                let _ = writeln!(io.err, "error: {}", failure.message);
            }
            failure.code
        }
    }
}

fn ontology_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn load_table(path: &Path, format: Option<InputFormat>) -> Result<Ontology, Failure> {
    let bytes = read_file(path)?;
    let format = format
        .map(TableFormat::from)
        .unwrap_or_else(|| TableFormat::from_path(path));
    parse_descriptor_table(&ontology_name(path), &bytes, format)
        .map_err(|e| invalid(format!("{}: {e}", path.display())))
}

fn plural(n: usize, one: &str, many: &str) -> String {
    format!("{n} {}", if n == 1 { one } else { many })
}

fn write_line(io: &mut Io<'_>, line: impl AsRef<str>) -> Result<(), Failure> {
    writeln!(io.out, "{}", line.as_ref()).map_err(|e| match e.kind() {
        // Reader went away (`| head`); stop quietly.
        std::io::ErrorKind::BrokenPipe => Failure {
            code: EXIT_OK,
            message: String::new(),
        },
        _ => Failure {
            code: EXIT_IO,
            message: e.to_string(),
        },
    })
}

fn validate(args: ValidateArgs, io: &mut Io<'_>) -> Result<i32, Failure> {
    let ontology = load_table(&args.file, args.format)?;
    write_line(
        io,
        format!(
            "{}, {}, {} essential, {} contextual",
            plural(ontology.entity_count(), "entity", "entities"),
            plural(ontology.property_count(), "property", "properties"),
            ontology.count_of(DescriptorKind::Essential),
            ontology.count_of(DescriptorKind::Contextual),
        ),
    )?;
    if args.lint {
        for hint in kind_hints(&ontology) {
            let _ = writeln!(
                io.err,
                "hint: `{}` is {} but reads {} (cues: {})",
                hint.descriptor,
                hint.declared,
                hint.suggested,
                hint.cues.join(", ")
            );
        }
    }
    Ok(EXIT_OK)
}

fn align(args: AlignArgs, io: &mut Io<'_>) -> Result<i32, Failure> {
    let source = load_table(&args.source, None)?;
    let target = load_table(&args.target, None)?;
    let mapping = match &args.mapping {
        Some(path) => parse_mapping(&read_file(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))?,
        None => default_mapping(&source, &target),
    };
    let scorer: Box<dyn Scorer> = match &args.overrides {
        Some(path) => {
            let table = parse_overrides(&read_file(path)?).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
            let dangling = dangling_override_ids(&table, &source, &target);
            if !dangling.is_empty() && args.deny_dangling {
                return Err(invalid(format!("{}: {}", path.display(), dangling.join("; "))));
            }
            for d in dangling {
                let _ = writeln!(io.err, "warning: {}: {d}", path.display());
            }
            Box::new(OverrideScorer::new(table))
        }
        None => Box::new(LexicalScorer),
    };
    let options = AlignOptions {
        modes: match args.mode {
            ModeArg::Essential => ModeSelection::Essential,
            ModeArg::Combined => ModeSelection::Combined,
            ModeArg::Both => ModeSelection::Both,
        },
        weight_basis: match args.weight_basis {
            WeightArg::Source => WeightBasis::Source,
            WeightArg::Mean => WeightBasis::Mean,
        },
        parallel: args.parallel,
        property_detail: args.verbose,
    };
    let report = align_ontologies(&source, &target, &mapping, scorer.as_ref(), &options).map_err(invalid)?;
    let format = match args.format {
        OutFormat::Json => ReportFormat::Json,
        OutFormat::Csv => ReportFormat::Csv,
    };
    std::fs::write(&args.out, write_report(&report, format)).map_err(|e| io_failure(&args.out, e))?;

    for warning in &report.warnings {
        let _ = writeln!(io.err, "warning: {warning}");
    }
    let average = report
        .average_improvement
        .map(|a| format!("{}%", signed_pct(a)))
        .unwrap_or_else(|| "n/a".into());
    write_line(
        io,
        format!(
            "aligned {}; average improvement {average}; report written to {}",
            plural(report.rows.len(), "concept", "concepts"),
            args.out.display()
        ),
    )?;
    if args.strict && report.has_undefined_rows() {
        let _ = writeln!(io.err, "error: undefined metrics present (--strict)");
        return Ok(EXIT_UNDEFINED);
    }
    Ok(EXIT_OK)
}

fn parse_entity(text: &str) -> Result<EntityId, Failure> {
    EntityId::parse(text).map_err(invalid)
}

fn parse_property(text: &str) -> Result<PropertyId, Failure> {
    PropertyId::parse(text).map_err(invalid)
}

fn property_lines(rel: &Relation<PropertyTriple>) -> Vec<String> {
    rel.iter()
        .map(|t| format!("{}\t{}\t{}", t.entity, t.property, t.value))
        .collect()
}

fn descriptor_lines(rel: &Relation<DescriptorTriple>) -> Vec<String> {
    rel.iter()
        .map(|t| {
            format!(
                "{}\t{}\t{}\t{}\t{}",
                t.property, t.descriptor, t.kind, t.source_count, t.value
            )
        })
        .collect()
}

fn pair_lines<A: std::fmt::Display, B: std::fmt::Display>(pairs: impl IntoIterator<Item = (A, B)>) -> Vec<String> {
    pairs.into_iter().map(|(a, b)| format!("{a}\t{b}")).collect()
}

fn load_all(files: &[PathBuf]) -> Result<Vec<Ontology>, Failure> {
    files.iter().map(|f| load_table(f, None)).collect()
}

fn union_of<T: Ord + Clone>(relations: impl IntoIterator<Item = Relation<T>>) -> Relation<T> {
    relations.into_iter().fold(Relation::new(), |acc, r| acc.union(&r))
}

fn query(command: QueryCommand, io: &mut Io<'_>) -> Result<i32, Failure> {
    let lines = match command {
        QueryCommand::ProjectProps { file, entity } => {
            let o = load_table(&file, None)?;
            pair_lines(project_property_values(&property_triples(&o), &parse_entity(&entity)?))
        }
        QueryCommand::ProjectEssential { file, property } => {
            let o = load_table(&file, None)?;
            pair_lines(project_essential_values(&essential_triples(&o), &parse_property(&property)?).map_err(invalid)?)
        }
        QueryCommand::ProjectContextual { file, property } => {
            let o = load_table(&file, None)?;
            pair_lines(
                project_contextual_values(&contextual_triples(&o), &parse_property(&property)?).map_err(invalid)?,
            )
        }
        QueryCommand::SelectEntities { files } => {
            let all = load_all(&files)?;
            pair_lines(select_matching_entities(&union_of(all.iter().map(property_triples))))
        }
        QueryCommand::SelectEssential { files } => {
            let all = load_all(&files)?;
            pair_lines(select_matching_by_essential(&union_of(all.iter().map(essential_triples))).map_err(invalid)?)
        }
        QueryCommand::SelectContextual { files } => {
            let all = load_all(&files)?;
            pair_lines(select_matching_by_contextual(&union_of(all.iter().map(contextual_triples))).map_err(invalid)?)
        }
        QueryCommand::Join { file, property } => {
            let o = load_table(&file, None)?;
            let rel = match property {
                Some(p) => combined_description(&o, &parse_property(&p)?).map_err(invalid)?,
                None => join_descriptors(&essential_triples(&o), &contextual_triples(&o)).map_err(invalid)?,
            };
            descriptor_lines(&rel)
        }
        QueryCommand::Diff {
            left,
            right,
            relation,
            entity,
            against,
        } => {
            let l = load_table(&left, None)?;
            match (entity, against, right) {
                (Some(a), Some(b), _) => property_lines(&entity_property_difference(
                    &property_triples(&l),
                    &parse_entity(&a)?,
                    &parse_entity(&b)?,
                )),
                (_, _, Some(right)) => {
                    let r = load_table(&right, None)?;
                    match relation {
                        RelationArg::Props => {
                            property_lines(&relation_difference(&property_triples(&l), &property_triples(&r)))
                        }
                        RelationArg::Essential => {
                            descriptor_lines(&relation_difference(&essential_triples(&l), &essential_triples(&r)))
                        }
                        RelationArg::Contextual => {
                            descriptor_lines(&relation_difference(&contextual_triples(&l), &contextual_triples(&r)))
                        }
                        RelationArg::Combined => {
                            let joined = |o: &Ontology| {
                                join_descriptors(&essential_triples(o), &contextual_triples(o)).map_err(invalid)
                            };
                            descriptor_lines(&relation_difference(&joined(&l)?, &joined(&r)?))
                        }
                    }
                }
                _ => {
                    return Err(Failure {
                        code: EXIT_USAGE,
                        message: "diff needs RIGHT or --entity/--against".into(),
                    })
                }
            }
        }
    };
    for line in lines {
        write_line(io, line)?;
    }
    Ok(EXIT_OK)
}

fn signed_pct(fraction: f64) -> String {
    let text = format_pct(fraction);
    if text.starts_with('-') {
        text
    } else {
        format!("+{text}")
    }
}

fn paint(io: &Io<'_>, text: String, positive: bool) -> String {
    if !io.color {
        return text;
    }
    let code = if positive { "32" } else { "31" };
    format!("\x1b[{code}m{text}\x1b[0m")
}

fn opt_score(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn report(args: ReportArgs, io: &mut Io<'_>) -> Result<i32, Failure> {
    let report: AlignmentReport = parse_report(&read_file(&args.input)?)?;
    let reference = if args.compare_published {
        Some(load_reference_results()?)
    } else {
        None
    };

    let width = report
        .rows
        .iter()
        .map(|r| r.concept.chars().count())
        .chain(std::iter::once("concept".len()))
        .max()
        .unwrap_or(7);

    let mut header = format!("{:<width$}  {:>8}  {:>8}  {:>8}", "concept", "S_f", "S_f,c", "Imp");
    if reference.is_some() {
        header.push_str(&format!("  {:>10}  {:>8}  {:>11}", "pub. Imp", "delta", "pub. level"));
    }
    write_line(io, header.trim_end())?;

    let mut matched_concepts = BTreeSet::new();
    for row in &report.rows {
        let imp = row
            .improvement
            .map(|i| paint(io, format!("{:>7}%", signed_pct(i)), i >= 0.0))
            .unwrap_or_else(|| format!("{:>8}", "n/a"));
        let mut line = format!(
            "{:<width$}  {:>8}  {:>8}  {}",
            row.concept,
            opt_score(row.s_essential),
            opt_score(row.s_combined),
            imp
        );
        if let Some(reference) = &reference {
            let published = reference.improvement_for(&row.concept);
            if let Some(p) = published {
                matched_concepts.insert(p.concept.clone());
            }
            let delta = match (row.improvement, published) {
                (Some(i), Some(p)) => match format!("{:+.2}", i * 100.0 - p.pct) {
                    zero if zero == "-0.00" => "+0.00".into(),
                    text => text,
                },
                _ => "-".into(),
            };
            line.push_str(&format!(
                "  {:>10}  {:>8}  {:>11}",
                published
                    .map(|p| format!("+{:.2}%", p.pct))
                    .unwrap_or_else(|| "-".into()),
                delta,
                reference
                    .level_for(&row.concept)
                    .map(|l| format!("{:.2}%", l.pct))
                    .unwrap_or_else(|| "-".into()),
            ));
        }
        write_line(io, line.trim_end())?;
    }

    let average = mean_improvement(report.rows.iter().filter_map(|r| r.improvement));
    write_line(
        io,
        format!(
            "average improvement: {}",
            average
                .map(|a| format!("{}%", signed_pct(a)))
                .unwrap_or_else(|| "n/a".into())
        ),
    )?;

    if let Some(reference) = &reference {
        let missing: Vec<&str> = reference
            .improvements
            .iter()
            .filter(|r| !matched_concepts.contains(&r.concept))
            .map(|r| r.concept.as_str())
            .collect();
        if !missing.is_empty() {
            write_line(
                io,
                format!("published concepts not in this report: {}", missing.join(", ")),
            )?;
        }
        let rows_mean = reference.rows_mean_improvement_pct();
        write_line(
            io,
            format!(
                "published per-concept improvements ({} rows) average: +{rows_mean:.2}%",
                reference.improvements.len()
            ),
        )?;
        write_line(
            io,
            format!(
                "published headline average: approximately +{:.2}% (not exactly recoverable from the {} published rows, which average +{rows_mean:.2}%)",
                reference.stated_average_improvement_pct,
                reference.improvements.len()
            ),
        )?;
    }
    Ok(EXIT_OK)
}
