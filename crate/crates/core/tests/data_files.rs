use std::fs;
use std::path::PathBuf;

use rtmg_core::data_io::{
    compute_returns, load_joint_csv, read_daily_csv, validate, write_daily_csv, write_series_csv, IssueKind,
};
use rtmg_core::Error;

fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn close_file_yields_one_fewer_return() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "a.csv", "date,close,rv\n2020-01-02,100,1.1\n2020-01-03,101,0.9\n2020-01-06,100.5,1.3\n");
    let s = load_joint_csv(&p).unwrap();
    assert_eq!(s.len(), 2);
    assert_eq!(s.realized(), &[0.9, 1.3]);
    assert!((s.returns()[0] - 100.0 * (1.01f64).ln()).abs() < 1e-12);
}

#[test]
fn return_file_keeps_every_row() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "b.csv", "date,return,rv\n2020-01-02,0.5,1.1\n2020-01-03,-1.2,0.9\n2020-01-06,0.1,1.3\n");
    assert_eq!(load_joint_csv(&p).unwrap().len(), 3);
}

#[test]
fn zero_rv_and_duplicates_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(
        &dir,
        "c.csv",
        "date,return,rv\n2020-01-02,0.5,1.1\n2020-01-03,-1.2,0\n2020-01-03,0.1,1.3\n2020-02-03,0.1,1.3\n",
    );
    let report = validate(&read_daily_csv(&p).unwrap());
    assert!(!report.valid);
    let kinds: Vec<(usize, IssueKind)> = report.issues.iter().map(|i| (i.line, i.kind)).collect();
    assert!(kinds.contains(&(3, IssueKind::NonPositiveRv)));
    assert!(kinds.contains(&(4, IssueKind::DuplicateDate)));
    assert!(kinds.contains(&(5, IssueKind::Gap)));
    let json = report.to_json().unwrap();
    assert!(json.contains("non_positive_rv") && json.contains("\"line\": 3"));

    let err = load_joint_csv(&p).unwrap_err();
    assert!(matches!(err, Error::Schema { .. }));
    assert!(err.to_string().contains("line 3"));
}

#[test]
fn unparseable_rows_report_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(&dir, "d.csv", "date,return,rv\n2020-01-02,0.5,1.1\n2020-01-03,abc,0.9\n");
    match read_daily_csv(&p) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a parse error, got {other:?}"),
    }
    let p = write(&dir, "e.csv", "day,price,rv\n2020-01-02,0.5,1.1\n");
    assert!(matches!(read_daily_csv(&p), Err(Error::Schema { .. })));
}

#[test]
fn canonical_files_roundtrip_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let series = rtmg_core::sim::simulate_rtmg(&rtmg_core::model::ParamsRtmg::SIMULATION, 300, 100, 5).unwrap().series;
    let a = dir.path().join("a.csv");
    write_series_csv(&a, &series).unwrap();
    let table = read_daily_csv(&a).unwrap();
    assert!(validate(&table).valid);
    let b = dir.path().join("b.csv");
    write_daily_csv(&b, &table).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let back = load_joint_csv(&b).unwrap();
    assert_eq!(back.returns(), series.returns());
    assert_eq!(back.realized(), series.realized());
    assert_eq!(back.dates(), series.dates());
}

#[test]
fn cumulative_prices_roundtrip_returns() {
    let r = [0.3, -1.7, 2.2, 0.0, -0.45, 1.05];
    let mut closes = vec![250.0];
    for x in r {
        let last = *closes.last().unwrap();
        closes.push(last * (x / 100.0f64).exp());
    }
    let back = compute_returns(&closes).unwrap();
    for (a, b) in back.iter().zip(r) {
        assert!((a - b).abs() < 1e-12);
    }
}
