use std::path::PathBuf;

use nversion::guard::{
    integrity_check, parse_maps, run_guard, GuardError, MapsSource, SegmentDictionary, ViolationKind,
};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn dict() -> SegmentDictionary {
    SegmentDictionary::load(&fixture("meituan.dict")).unwrap()
}

#[test]
fn clean_fixture_passes() {
    let mut calls = 0;
    let violations = run_guard(&MapsSource::File(fixture("clean.maps")), &dict(), |_| calls += 1).unwrap();
    assert!(violations.is_empty(), "{violations:?}");
    assert_eq!(calls, 0);
}

#[test]
fn lbe_injection_is_flagged() {
    let mut seen = Vec::new();
    let violations =
        run_guard(&MapsSource::File(fixture("lbe_injected.maps")), &dict(), |v| seen.push(v.clone())).unwrap();
    assert_eq!(seen, violations);
    assert_eq!(violations.len(), 1);
    assert_eq!(violations[0].kind, ViolationKind::UnknownSegment);
    assert_eq!(violations[0].segment.name, "/data/data/com.lbe.security.client/client.jar");
    assert_eq!(violations[0].expected_size, None);
}

#[test]
fn size_tampering_is_flagged() {
    let violations = run_guard(&MapsSource::File(fixture("size_tampered.maps")), &dict(), |_| {}).unwrap();
    assert_eq!(violations.len(), 1);
    assert_eq!(violations[0].kind, ViolationKind::SizeMismatch);
    assert_eq!(violations[0].segment.name, "/data/app-lib/com.sankuai.meituan-1/libmtguard.so");
    assert_eq!(violations[0].segment.size, 139264 + 4096);
    assert_eq!(violations[0].expected_size, Some(139264));
}

#[test]
fn malformed_fixture_names_the_line() {
    let err = run_guard(&MapsSource::File(fixture("malformed.maps")), &dict(), |_| {}).unwrap_err();
    assert!(matches!(err, GuardError::Parse { line: 2, .. }), "{err:?}");
}

#[test]
fn dictionary_recorded_from_clean_fixture_matches_shipped_one() {
    let records = parse_maps(&std::fs::read_to_string(fixture("clean.maps")).unwrap()).unwrap();
    assert_eq!(SegmentDictionary::from_records(&records), dict());
    assert!(integrity_check(&records, &dict()).is_empty());
}

#[test]
fn every_injected_fixture_is_caught() {
    for name in ["lbe_injected.maps", "size_tampered.maps"] {
        let records = parse_maps(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap();
        assert!(!integrity_check(&records, &dict()).is_empty(), "{name}");
    }
}
