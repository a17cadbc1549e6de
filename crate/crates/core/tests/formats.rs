mod common;

use std::path::Path;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ctxalign::formats::*;
use ctxalign::similarity::LexicalScorer;
use ctxalign::{align_ontologies, default_mapping, AlignOptions};

fn data_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/data"))
}

fn fixture(name: &str) -> Vec<u8> {
    read_file(&Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)).unwrap()
}

#[test]
fn bundled_table_matches_the_data_file() {
    let on_disk = read_file(&data_dir().join("responsibility.csv")).unwrap();
    let parsed = parse_descriptor_table("responsibility", &on_disk, TableFormat::Csv).unwrap();
    assert_eq!(parsed.to_raw(), bundled_responsibility().to_raw());
}

#[test]
fn reference_results_load_and_verify() {
    let r = load_reference_results().unwrap();
    assert_eq!(r.improvements.len(), 9);
    assert_eq!(r.levels.len(), 8);
    assert_eq!(r.improvement_for("Privacy").unwrap().pct, 7.04);
    assert_eq!(r.stated_average_improvement_pct, 4.36);
    assert!((r.rows_mean_improvement_pct() - 4.287777777777778).abs() < 1e-12);
    let from_dir = load_reference_results_from(data_dir()).unwrap();
    assert_eq!(from_dir.improvements, r.improvements);
}

#[test]
fn reference_bundle_detects_missing_and_tampered_files() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["reference.sha256", "reference_improvements.csv", "reference_levels.csv"] {
        std::fs::copy(data_dir().join(name), dir.path().join(name)).unwrap();
    }
    assert!(matches!(
        load_reference_results_from(dir.path()),
        Err(FormatError::MissingFile(_))
    ));

    let summary = read_file(&data_dir().join("reference_summary.csv")).unwrap();
    std::fs::write(dir.path().join("reference_summary.csv"), &summary).unwrap();
    load_reference_results_from(dir.path()).unwrap();

    let tampered = String::from_utf8(summary).unwrap().replace("4.36", "4.29");
    std::fs::write(dir.path().join("reference_summary.csv"), tampered).unwrap();
    match load_reference_results_from(dir.path()) {
        Err(FormatError::Checksum { file, .. }) => assert_eq!(file, "reference_summary.csv"),
        other => panic!("expected checksum error, got {other:?}"),
    }
}

#[test]
fn report_json_round_trips_byte_for_byte() {
    let bytes = fixture("published_improvements_report.json");
    let report = parse_report(&bytes).unwrap();
    assert_eq!(write_report(&report, ReportFormat::Json), bytes);

    let source = parse_descriptor_table("s", &fixture("ethics_source.csv"), TableFormat::Csv).unwrap();
    let target = parse_descriptor_table("t", &fixture("ethics_target.csv"), TableFormat::Csv).unwrap();
    let opts = AlignOptions {
        property_detail: true,
        ..AlignOptions::default()
    };
    let live = align_ontologies(
        &source,
        &target,
        &default_mapping(&source, &target),
        &LexicalScorer,
        &opts,
    )
    .unwrap();
    let json = write_report(&live, ReportFormat::Json);
    let again = write_report(&parse_report(&json).unwrap(), ReportFormat::Json);
    assert_eq!(String::from_utf8(again).unwrap(), String::from_utf8(json).unwrap());
}

#[test]
fn csv_report_layout() {
    let report = parse_report(&fixture("published_improvements_report.json")).unwrap();
    let text = String::from_utf8(write_report(&report, ReportFormat::Csv)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "concept,s_essential,s_combined,improvement_pct");
    assert_eq!(lines.len(), 11);
    assert!(lines.contains(&"Privacy,0.500000,0.535200,7.04"));
    assert_eq!(*lines.last().unwrap(), "average,,,4.29");
}

#[test]
fn percentage_formatting() {
    assert_eq!(format_pct(0.0256), "2.56");
    assert_eq!(format_pct(-0.0), "0.00");
    assert_eq!(format_pct(-1e-9), "0.00");
    assert_eq!(format_pct(-0.0125), "-1.25");
}

#[test]
fn table_errors_carry_locations() {
    let bad = b"concept,property,descriptor,type,sources\nR,P,D,Formal,-3\n";
    let err = parse_descriptor_table("t", bad, TableFormat::Csv)
        .unwrap_err()
        .to_string();
    assert!(err.contains("line 2") && err.contains("sources"), "{err}");
    let err = parse_descriptor_table("t", b"a,b\n", TableFormat::Csv).unwrap_err();
    assert!(matches!(err, FormatError::BadHeader { .. }));
    let err = parse_descriptor_table("t", b"", TableFormat::Csv).unwrap_err();
    assert!(matches!(err, FormatError::MissingHeader));
    let err = parse_descriptor_table("t", b"[{]", TableFormat::Json).unwrap_err();
    assert!(matches!(err, FormatError::Json(_)));
}

#[test]
fn overrides_and_mappings() {
    let table = parse_overrides(br#"[{"left": "a/p/x", "right": "b/p/y", "s": 0.5}]"#).unwrap();
    assert_eq!(table.len(), 1);
    assert!(parse_overrides(br#"[{"left": "a/p/x", "right": "b/p/y", "s": 1.5}]"#).is_err());
    let o = bundled_responsibility();
    let dangling = dangling_override_ids(&table, &o, &o);
    assert_eq!(dangling.len(), 2);
    assert!(dangling[0].contains("a/p/x") && dangling[1].contains("b/p/y"));
    let mapping = parse_mapping(br#"[{"source": "a", "target": "b"}]"#).unwrap();
    assert_eq!(mapping.len(), 1);
    assert!(parse_mapping(br#"[{"source": "a", "target": "b"}, {"source": "c", "target": "b"}]"#).is_err());
}

proptest! {
    #[test]
    fn tables_round_trip(seed in any::<u64>(), json in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let o = common::random_ontology(&mut rng, 20);
        let format = if json { TableFormat::Json } else { TableFormat::Csv };
        let written = write_descriptor_table(&o, format);
        let back = parse_descriptor_table(o.name(), &written, format).unwrap();
        // Rows are descriptors, so descriptor-less properties vanish.
        let mut want = o.to_raw();
        for e in &mut want {
            e.properties.retain(|p| !p.descriptors.is_empty());
        }
        want.retain(|e| !e.properties.is_empty());
        prop_assert_eq!(back.to_raw(), want);
        prop_assert_eq!(write_descriptor_table(&back, format), written);
    }
}
