use std::io::Write;

use hjhomog::corpus::{run_all, CorpusOptions};

#[test]
fn acceptance_criteria() {
    let outcomes = run_all(&CorpusOptions::default()).expect("corpus runs");
    // bypass the harness capture so every line lands in the log
    let mut out = std::io::stdout().lock();
    for o in &outcomes {
        let _ = writeln!(out, "{}", o.line());
    }
    let _ = out.flush();
    let ids: Vec<u8> = outcomes.iter().map(|o| o.id).collect();
    assert_eq!(ids, (1..=9).collect::<Vec<u8>>());
    let failed: Vec<u8> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
