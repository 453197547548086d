use std::fs;
use std::path::Path;

use enci_core::io::{
    grouped_csv_string, load_grouped_csv, load_table, read_manifest, save_grouped_csv,
    save_manifest_layout, save_table, GroupEntry, GroupManifest, MANIFEST_VERSION,
};
use enci_core::synth::{generate, MechanismKind, SynthSpec};
use enci_core::{EnciError, GroupedDataset};
use nalgebra::DMatrix;
use proptest::prelude::*;
use tempfile::tempdir;

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn parse_error(e: EnciError) -> (u64, String) {
    match e {
        EnciError::Parse { line, message, .. } => (line, message),
        other => panic!("expected a parse error, got {other}"),
    }
}

#[test]
fn two_by_two_fixture() {
    let dir = tempdir().unwrap();
    let p = write(dir.path(), "f.csv", "group,a,b\ng1,1,2\ng1,3,4\ng2,5,6\ng2,7,8.5\n");
    let d = load_grouped_csv(&p).unwrap();
    assert_eq!((d.n_groups(), d.n_vars()), (2, 2));
    assert_eq!(d.variables(), ["a", "b"]);
    assert_eq!(d.groups()[1][(1, 1)], 8.5);
}

#[test]
fn groups_keep_first_appearance_order() {
    let dir = tempdir().unwrap();
    let p = write(dir.path(), "f.csv", "a,group\n1,z\n2,a\n3,z\n4,a\n");
    let d = load_grouped_csv(&p).unwrap();
    assert_eq!(d.groups()[0].column(0).as_slice(), &[1.0, 3.0]);
    assert_eq!(d.groups()[1].column(0).as_slice(), &[2.0, 4.0]);
}

#[test]
fn string_cell_names_its_line() {
    let dir = tempdir().unwrap();
    let text = "group,a,b\n0,1,2\n0,1,3\n0,2,2\n1,4,4\n1,oops,5\n1,6,6\n";
    let p = write(dir.path(), "bad.csv", text);
    let err = load_grouped_csv(&p).unwrap_err();
    assert!(err.to_string().contains("line 6"), "{err}");
    let (line, msg) = parse_error(err);
    assert_eq!(line, 6);
    assert!(msg.contains("oops") && msg.contains("`a`"));

    // Provenance comments count as lines.
    let p = write(dir.path(), "bad2.csv", &format!("# seed=1\n{text}"));
    assert_eq!(parse_error(load_grouped_csv(&p).unwrap_err()).0, 7);
}

#[test]
fn distinct_error_messages() {
    let dir = tempdir().unwrap();
    let small = write(dir.path(), "small.csv", "group,a\n0,1\n0,2\n1,3\n");
    let no_group = write(dir.path(), "nogroup.csv", "a,b\n1,2\n");
    let ragged = write(dir.path(), "ragged.csv", "group,a\n0,1\n0\n");
    let inf = write(dir.path(), "inf.csv", "group,a\n0,1\n0,inf\n1,1\n1,2\n");
    let messages: Vec<String> = [&small, &no_group, &ragged, &inf]
        .iter()
        .map(|p| parse_error(load_grouped_csv(p).unwrap_err()).1)
        .collect();
    assert!(messages[0].contains("group `1` has 1 row(s)"));
    assert!(messages[1].contains("missing `group` column"));
    assert!(messages[2].contains("expected 2 fields"));
    assert!(messages[3].contains("non-finite"));

    write(dir.path(), "g0.csv", "a,b\n1,2\n3,4\n");
    write(dir.path(), "g1.csv", "a,c\n1,2\n3,4\n");
    let manifest = GroupManifest {
        format_version: MANIFEST_VERSION,
        variables: vec!["a".into(), "b".into()],
        groups: vec![
            GroupEntry { id: "0".into(), path: "g0.csv".into(), rows: None },
            GroupEntry { id: "1".into(), path: "g1.csv".into(), rows: None },
        ],
    };
    let mp = write(dir.path(), "m.json", &serde_json::to_string(&manifest).unwrap());
    let err = load_grouped_csv(&mp).unwrap_err();
    assert!(err.to_string().contains("g1.csv"));
    assert!(parse_error(err).1.contains("does not match manifest variables"));

    let mut dup = manifest.clone();
    dup.groups[1] = GroupEntry { id: "0".into(), path: "g0.csv".into(), rows: None };
    let mp = write(dir.path(), "dup.json", &serde_json::to_string(&dup).unwrap());
    assert!(parse_error(load_grouped_csv(&mp).unwrap_err()).1.contains("duplicate group id"));

    let mut missing = manifest.clone();
    missing.groups[1].path = "nope.csv".into();
    let mp = write(dir.path(), "missing.json", &serde_json::to_string(&missing).unwrap());
    assert!(matches!(load_grouped_csv(&mp).unwrap_err(), EnciError::Io { .. }));

    let mut version = manifest;
    version.format_version = 99;
    let mp = write(dir.path(), "v.json", &serde_json::to_string(&version).unwrap());
    assert!(read_manifest(&mp).is_err());
}

#[test]
fn manifest_row_ranges() {
    let dir = tempdir().unwrap();
    write(dir.path(), "all.csv", "x,y\n1,1\n2,4\n3,9\n4,16\n5,25\n");
    let manifest = GroupManifest {
        format_version: MANIFEST_VERSION,
        variables: vec!["x".into(), "y".into()],
        groups: vec![
            GroupEntry { id: "a".into(), path: "all.csv".into(), rows: Some([0, 2]) },
            GroupEntry { id: "b".into(), path: "all.csv".into(), rows: Some([2, 5]) },
        ],
    };
    let mp = write(dir.path(), "m.json", &serde_json::to_string_pretty(&manifest).unwrap());
    let d = load_grouped_csv(&mp).unwrap();
    assert_eq!(d.groups()[0].nrows(), 2);
    assert_eq!(d.groups()[1].column(1).as_slice(), &[9.0, 16.0, 25.0]);

    let mut bad = manifest;
    bad.groups[1].rows = Some([2, 9]);
    let mp = write(dir.path(), "bad.json", &serde_json::to_string(&bad).unwrap());
    assert!(parse_error(load_grouped_csv(&mp).unwrap_err()).1.contains("row range"));
}

#[test]
fn single_file_round_trip_with_provenance() {
    let dir = tempdir().unwrap();
    let data = generate(&SynthSpec { n_groups: 12, ..SynthSpec::pair(3, MechanismKind::Additive) })
        .unwrap()
        .dataset;
    let p = dir.path().join("d.csv");
    save_grouped_csv(&data, &p).unwrap();
    let back = load_grouped_csv(&p).unwrap();
    assert_eq!(back, data);
    let text = fs::read_to_string(&p).unwrap();
    assert!(text.lines().any(|l| l == "group,x,y"));
    assert_eq!(grouped_csv_string(&back).unwrap(), text);
}

#[test]
fn manifest_layout_round_trip() {
    let dir = tempdir().unwrap();
    let data = generate(&SynthSpec { n_groups: 5, ..SynthSpec::tsg(4, 4) }).unwrap().dataset;
    let mp = save_manifest_layout(&data, dir.path().join("out")).unwrap();
    let back = load_grouped_csv(&mp).unwrap();
    assert_eq!(back.groups(), data.groups());
    assert_eq!(back.variables(), data.variables());
    assert_eq!(back.provenance, data.provenance);
}

#[test]
fn writer_rejections() {
    let m = DMatrix::from_row_slice(2, 1, &[1.0, 2.0]);
    let reserved = GroupedDataset::new(vec!["group".into()], vec![m.clone(), m]).unwrap();
    assert!(grouped_csv_string(&reserved).is_err());
    let dir = tempdir().unwrap();
    let ok = generate(&SynthSpec { n_groups: 3, ..SynthSpec::pair(1, MechanismKind::Additive) }).unwrap().dataset;
    assert!(matches!(
        save_grouped_csv(&ok, dir.path().join("no/such/dir/f.csv")),
        Err(EnciError::Io { .. })
    ));
}

#[test]
fn plain_table_round_trip() {
    let dir = tempdir().unwrap();
    let m = DMatrix::from_row_slice(3, 2, &[0.1, -2.5e-8, 1.0 / 3.0, 7.0, 1e300, -0.0]);
    let names = vec!["u".to_string(), "v".to_string()];
    let p = dir.path().join("t.csv");
    let prov = [("seed".to_string(), "5".to_string())].into_iter().collect();
    save_table(&m, &names, &prov, &p).unwrap();
    let (back, back_names) = load_table(&p).unwrap();
    assert_eq!(back, m);
    assert_eq!(back_names, names);
}

fn arb_dataset() -> impl Strategy<Value = GroupedDataset> {
    (1usize..4, 2usize..5).prop_flat_map(|(p, n_groups)| {
        prop::collection::vec(
            (2usize..6).prop_flat_map(move |n| {
                prop::collection::vec(
                    prop_oneof![any::<f64>().prop_filter("finite", |v| v.is_finite()), -1e3f64..1e3],
                    n * p,
                )
                .prop_map(move |v| DMatrix::from_row_slice(n, p, &v))
            }),
            n_groups,
        )
        .prop_map(|groups| GroupedDataset::with_default_names(groups).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grouped_csv_round_trips_bit_exactly(data in arb_dataset()) {
        let dir = tempdir().unwrap();
        let p = dir.path().join("d.csv");
        save_grouped_csv(&data, &p).unwrap();
        let back = load_grouped_csv(&p).unwrap();
        prop_assert_eq!(back.variables(), data.variables());
        for (a, b) in back.groups().iter().zip(data.groups()) {
            prop_assert_eq!(a.shape(), b.shape());
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
