use std::collections::BTreeMap;

use proptest::prelude::*;
use solstep::io::{find_sessions, load_recordings, parse_readings, parse_window_csv, write_readings, write_session};
use solstep::Error;
use solstep_core::ingest::{group_streams, Placement};
use solstep_core::synthgen::{generate_dataset, DatasetSpec};
use solstep_core::DEFAULT_RATE_HZ;

const HEADER: &str = "device_id,placement,timestamp_s,adc_counts\n";

fn csv_line(err: Error) -> u64 {
    match err {
        Error::Csv { line, .. } => line,
        other => panic!("expected a CSV error, got {other:?}"),
    }
}

#[test]
fn two_rows_one_stream() {
    let text = format!("{HEADER}d1,LW,0.0,10\nd1,LW,0.05,20\n");
    let streams = parse_readings(text.as_bytes()).unwrap();
    assert_eq!(streams.len(), 1);
    assert_eq!(streams[0].device_id, "d1");
    assert_eq!(streams[0].placement, Placement::LeftWrist);
    assert_eq!(streams[0].readings.len(), 2);
    assert_eq!(streams[0].readings[1].adc_counts, 20);
}

#[test]
fn errors_name_the_line() {
    let over = format!("{HEADER}d1,LW,0.0,10\nd1,LW,0.1,1024\n");
    let err = parse_readings(over.as_bytes()).unwrap_err();
    assert!(err.to_string().contains("1024"));
    assert_eq!(csv_line(err), 3);

    let negative = format!("{HEADER}d1,LW,0.0,-1\n");
    assert_eq!(csv_line(parse_readings(negative.as_bytes()).unwrap_err()), 2);

    let dup = format!("{HEADER}d1,LW,0.0,10\nd2,RF,0.0,5\nd1,LW,0.0,11\n");
    let err = parse_readings(dup.as_bytes()).unwrap_err();
    assert!(err.to_string().contains("d1"), "{err}");
    assert_eq!(csv_line(err), 4);

    let back = format!("{HEADER}d1,LW,0.5,10\nd1,LW,0.4,10\n");
    assert_eq!(csv_line(parse_readings(back.as_bytes()).unwrap_err()), 3);

    let malformed = format!("{HEADER}d1,LW,0.0,10\nd1,LW,abc,10\n");
    assert_eq!(csv_line(parse_readings(malformed.as_bytes()).unwrap_err()), 3);

    let short = format!("{HEADER}d1,LW,0.0\n");
    assert_eq!(csv_line(parse_readings(short.as_bytes()).unwrap_err()), 2);

    let placement = format!("{HEADER}d1,XX,0.0,1\n");
    assert_eq!(csv_line(parse_readings(placement.as_bytes()).unwrap_err()), 2);

    let moved = format!("{HEADER}d1,LW,0.0,1\nd1,RW,0.1,1\n");
    assert_eq!(csv_line(parse_readings(moved.as_bytes()).unwrap_err()), 3);

    assert_eq!(csv_line(parse_readings(b"a,b,c,d\n").unwrap_err()), 1);
}

proptest! {
    /// Interleaving rows of several devices gives the same streams as
    /// grouping first and sorting each group.
    #[test]
    fn interleaved_devices_group_like_the_naive_oracle(
        lens in prop::collection::vec(1usize..20, 1..4),
        picks in prop::collection::vec(any::<u8>(), 0..80),
        counts in prop::collection::vec(0u16..=1023, 80),
    ) {
        let placements = [Placement::LeftWrist, Placement::RightFoot, Placement::LeftFoot];
        let mut next = vec![0usize; lens.len()];
        let mut rows = Vec::new();
        let mut pick = picks.iter().cycle();
        while next.iter().zip(&lens).any(|(n, l)| n < l) {
            let mut d = *pick.next().unwrap_or(&0) as usize % lens.len();
            while next[d] >= lens[d] {
                d = (d + 1) % lens.len();
            }
            let k = next[d];
            rows.push((format!("d{d}"), placements[d], k as f64 * 0.043 + d as f64 * 0.01, counts[(rows.len()) % 80]));
            next[d] += 1;
        }
        let mut text = HEADER.to_string();
        for (id, p, t, c) in &rows {
            text.push_str(&format!("{id},{},{t},{c}\n", p.code()));
        }
        let streams = parse_readings(text.as_bytes()).unwrap();

        let mut oracle: BTreeMap<String, Vec<(f64, u16)>> = BTreeMap::new();
        for (id, _, t, c) in &rows {
            oracle.entry(id.clone()).or_default().push((*t, *c));
        }
        prop_assert_eq!(streams.len(), oracle.len());
        for s in &streams {
            let mut expected = oracle[&s.device_id].clone();
            expected.sort_by(|a, b| a.0.total_cmp(&b.0));
            let got: Vec<(f64, u16)> = s.readings.iter().map(|r| (r.timestamp_s, r.adc_counts)).collect();
            prop_assert_eq!(got, expected);
        }
    }
}

#[test]
fn generated_session_round_trips() {
    let spec = DatasetSpec {
        n_subjects: 1,
        seconds_per_activity: 3.0,
        ..DatasetSpec::default()
    };
    let session = generate_dataset(&spec).unwrap().remove(0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.csv");
    write_readings(&path, &session.readings).unwrap();
    let parsed = parse_readings(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(parsed, group_streams(session.readings.clone()).unwrap());
}

#[test]
fn dataset_directory_loads_in_name_order() {
    let spec = DatasetSpec {
        n_subjects: 2,
        seconds_per_activity: 3.0,
        ..DatasetSpec::default()
    };
    let sessions = generate_dataset(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for s in &sessions {
        write_session(dir.path(), s).unwrap();
    }
    let found = find_sessions(dir.path()).unwrap();
    assert_eq!(found.len(), 2);
    assert!(found[0].readings.ends_with("S1_outdoor.csv"));
    let recs = load_recordings(&[dir.path().to_path_buf()], DEFAULT_RATE_HZ).unwrap();
    assert_eq!(recs[0], sessions[0].synchronize(DEFAULT_RATE_HZ).unwrap());
    assert_eq!(recs[1].manifest.subject_id, "S2");
}

#[test]
fn missing_manifest_names_its_path() {
    let spec = DatasetSpec {
        n_subjects: 1,
        seconds_per_activity: 2.0,
        ..DatasetSpec::default()
    };
    let session = generate_dataset(&spec).unwrap().remove(0);
    let dir = tempfile::tempdir().unwrap();
    let files = write_session(dir.path(), &session).unwrap();
    std::fs::remove_file(&files.manifest).unwrap();
    let err = find_sessions(dir.path()).unwrap_err();
    assert!(err.to_string().contains(&*files.manifest.to_string_lossy()), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn invalid_manifest_is_rejected() {
    let spec = DatasetSpec {
        n_subjects: 1,
        seconds_per_activity: 2.0,
        ..DatasetSpec::default()
    };
    let session = generate_dataset(&spec).unwrap().remove(0);
    let dir = tempfile::tempdir().unwrap();
    let files = write_session(dir.path(), &session).unwrap();
    let text = std::fs::read_to_string(&files.manifest).unwrap().replace("\"walk\"", "\"swim\"");
    std::fs::write(&files.manifest, text).unwrap();
    let err = load_recordings(&[dir.path().to_path_buf()], DEFAULT_RATE_HZ).unwrap_err();
    assert!(err.to_string().contains("swim"), "{err}");
}

#[test]
fn window_csv() {
    let w = parse_window_csv(b"LF,LW\n1.0,2.0\n1.5,2.5\n").unwrap();
    assert_eq!(w.placements, [Placement::LeftFoot, Placement::LeftWrist]);
    assert_eq!(w.values.row(1), [1.5, 2.5]);
    for bad in [&b"LF,XX\n1,2\n"[..], b"LF\n", b"LF,LF\n1,2\n", b"LF,LW\n1,x\n", b"LF,LW\n1\n", b"LF\nNaN\n"] {
        assert!(matches!(parse_window_csv(bad), Err(Error::Csv { .. })), "{:?}", String::from_utf8_lossy(bad));
    }
}
