use std::fs;

use carr_core::data::{load, read_synthetic_csv, write_synthetic_csv, DatasetSpec, Split, SplitFile};
use carr_core::model::{InputSpec, ModelInput};
use carr_core::scm::{generate, SynthConfig};
use carr_core::Error;

#[test]
fn synthetic_csv_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    let samples = generate(&SynthConfig { beta: 0.3, n: 500, seed: 1, nc_cols: 2, ..SynthConfig::default() }).unwrap();
    write_synthetic_csv(&path, &samples).unwrap();
    let before = fs::read(&path).unwrap();
    let back = read_synthetic_csv(&path).unwrap();
    assert_eq!(back, samples);
    assert_eq!(fs::read(&path).unwrap(), before);

    let ds = load(&DatasetSpec::SyntheticCsv { path: path.clone() }, 0).unwrap();
    assert_eq!(ds.input_spec, InputSpec::Features { width: 17 });
    assert_eq!(ds.train.len() + ds.val.unwrap().len() + ds.test.unwrap().len(), 500);
}

#[test]
fn id_pairs_with_inferred_vocabulary() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    fs::write(&path, "user_id,item_id,label\n0,0,5\n1,1,3\n2,0,4\n0,1,1\n2,1,2\n").unwrap();
    let spec = DatasetSpec::IdPairs {
        files: vec![
            SplitFile { path: path.clone(), split: Split::Train },
            SplitFile { path: path.clone(), split: Split::TestOod },
        ],
        rating_threshold: Some(4.0),
        n_users: None,
        n_items: None,
    };
    let ds = load(&spec, 0).unwrap();
    assert_eq!(ds.input_spec, InputSpec::IdPairs { n_users: 3, n_items: 2 });
    let ood = ds.test_ood.unwrap();
    assert_eq!(ood.input, ModelInput::Ids(vec![(0, 0), (1, 1), (2, 0), (0, 1), (2, 1)]));
    assert_eq!(ood.labels, vec![1, 0, 1, 0, 0]);
}

#[test]
fn out_of_vocabulary_id_is_rejected_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    fs::write(&path, "user_id,item_id,label\n0,0,1\n3,1,0\n").unwrap();
    let spec = DatasetSpec::IdPairs {
        files: vec![SplitFile { path, split: Split::Train }],
        rating_threshold: None,
        n_users: Some(3),
        n_items: Some(2),
    };
    match load(&spec, 0) {
        Err(Error::Data { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a data error, got {other:?}"),
    }
}

#[test]
fn tabular_user_and_item_features_concatenate() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let mut text: String = (0..47).map(|i| format!("f_{i},")).collect();
    text.push_str("label\n");
    for r in 0..12 {
        let row: Vec<String> = (0..47).map(|c| format!("{}", (r * 47 + c) as f64 * 0.01)).collect();
        text.push_str(&format!("{},{}\n", row.join(","), r % 2));
    }
    fs::write(&path, text).unwrap();
    let spec = DatasetSpec::Tabular { files: vec![SplitFile { path, split: Split::Train }], width: Some(47) };
    let ds = load(&spec, 0).unwrap();
    assert_eq!(ds.input_spec, InputSpec::Features { width: 47 });
    match &ds.train.input {
        ModelInput::Features(m) => assert_eq!(m.cols(), 47),
        other => panic!("{other:?}"),
    }
}

#[test]
fn malformed_row_reports_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    fs::write(&path, "f_0,f_1,label\n0.1,0.2,1\n0.3,abc,0\n").unwrap();
    let spec = DatasetSpec::Tabular { files: vec![SplitFile { path, split: Split::Train }], width: None };
    match load(&spec, 0) {
        Err(Error::Data { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a data error, got {other:?}"),
    }
}

#[test]
fn loading_is_deterministic_and_leaves_files_alone() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    write_synthetic_csv(&path, &generate(&SynthConfig::default()).unwrap()).unwrap();
    let before = fs::read(&path).unwrap();
    let spec = DatasetSpec::SyntheticCsv { path: path.clone() };
    let a = load(&spec, 4).unwrap();
    let b = load(&spec, 4).unwrap();
    assert_eq!(a.train.labels, b.train.labels);
    assert_eq!(a.train.input, b.train.input);
    assert_eq!(fs::read(&path).unwrap(), before);
}
