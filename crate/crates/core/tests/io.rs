mod common;

use alphasne::divergence::Embedding;
use alphasne::evaluation::retrieval_auc;
use alphasne::io::*;
use alphasne::Error;
use std::path::Path;

#[test]
fn embedding_round_trip_is_exact() {
    let mut rng = common::rng(51);
    let coords = common::random_coords(25, 3, 1e-3, &mut rng);
    let emb = Embedding::new(coords).unwrap();
    let labels: Vec<usize> = (0..25).map(|i| i % 4).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.csv");
    save_embedding(&emb, Some(&labels), &path).unwrap();
    let (back, l) = load_embedding(&path).unwrap();
    assert_eq!(back.coords, emb.coords);
    assert_eq!(l.as_deref(), Some(labels.as_slice()));

    let again = dir.path().join("f.csv");
    save_embedding(&back, Some(&labels), &again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());

    save_embedding(&emb, None, &again).unwrap();
    let (_, l) = load_embedding(&again).unwrap();
    assert!(l.is_none());
}

#[test]
fn metrics_round_trip_without_estimation_keys() {
    let mut rng = common::rng(52);
    let x = common::random_coords(120, 4, 1.0, &mut rng);
    let y = common::random_coords(120, 2, 1.0, &mut rng);
    let curve = retrieval_auc(x.view(), y.view(), 20, 100).unwrap();
    let m = Metrics::new(&curve, None, Some(1.5), serde_json::json!({"seed": 3}));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    save_metrics(&m, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    for key in ["alpha_grid", "objectives", "selected_alpha"] {
        assert!(!text.contains(key), "{key} should be absent");
    }
    let back = load_metrics(&path).unwrap();
    assert_eq!(back, m);
    assert_eq!(back.curve.len(), 100);
}

#[test]
fn bundled_datasets_load() {
    let iris = load_bundled("iris").unwrap();
    assert_eq!((iris.n(), iris.dim()), (150, 4));
    let wine = load_bundled("wine").unwrap();
    assert_eq!((wine.n(), wine.dim()), (178, 13));
    assert!(wine.labels().is_some());
    assert!(load_bundled("mnist").is_err());
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn csv_files_with_and_without_header() {
    let dir = tempfile::tempdir().unwrap();
    let plain = write(dir.path(), "a.csv", "1,2,0\n3,4,1\n5,6,0\n");
    let d = load_csv(&plain, Some(&LabelColumn::Index(2))).unwrap();
    assert_eq!((d.n(), d.dim()), (3, 2));
    assert_eq!(d.labels().unwrap(), &[0, 1, 0]);

    let headed = write(dir.path(), "b.csv", "x,y,class\n1,2,a\n3,4,b\n5,6,a\n");
    let d = load_csv(&headed, Some(&LabelColumn::Name("class".into()))).unwrap();
    assert_eq!(d.labels().unwrap(), &[0, 1, 0]);
    assert!(load_csv(&headed, Some(&LabelColumn::Name("kind".into()))).is_err());
}

#[test]
fn malformed_csv_reports_location() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.csv", "x,y\n1,2\n3,oops\n");
    match load_csv(&bad, None) {
        Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (3, 2)),
        other => panic!("expected a parse error, got {other:?}"),
    }
    let ragged = write(dir.path(), "ragged.csv", "1,2\n3\n");
    assert!(matches!(load_csv(&ragged, None), Err(Error::Parse { line: 2, .. })));
    let missing = dir.path().join("none.csv");
    assert!(matches!(load_csv(&missing, None), Err(Error::Io { .. })));
}

#[test]
fn unwritable_destination_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = write(dir.path(), "file", "x");
    let emb = Embedding::new(ndarray::Array2::zeros((3, 2))).unwrap();
    let err = save_embedding(&emb, None, &blocker.join("e.csv")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err:?}");
}
