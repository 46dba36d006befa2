//! End-to-end run against the committed golden outputs.
//! `UPDATE_GOLDEN=1 cargo test -p settle-cli --test golden` rewrites them.

mod common;

use std::time::{Duration, Instant};

use common::*;

#[test]
fn pipeline_matches_golden_files() {
    let work = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let results = run_pipeline(&work.path().join("single"), 1);
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(300), "single-threaded run took {elapsed:?}");
    let outputs = collect_outputs(&results);
    assert!(outputs.keys().any(|k| k.ends_with(".svg")));

    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        write_golden(&outputs);
    } else if let Some(diff) = golden_mismatch(&outputs) {
        panic!("{diff}");
    }

    let threaded = collect_outputs(&run_pipeline(&work.path().join("threaded"), 8));
    assert_eq!(outputs, threaded, "--threads 8 changed the output bytes");
}
