//! The twelve acceptance criteria, one line each.

use std::io::Write;

use wpr::checks::{run_all, CHECKS};

#[test]
fn acceptance_criteria() {
    let outcomes = run_all();
    assert_eq!(outcomes.len(), CHECKS.len());
    // written past the harness capture so the lines show on success too
    let mut out = std::io::stdout().lock();
    writeln!(out).unwrap();
    for (k, o) in outcomes.iter().enumerate() {
        writeln!(out, "{:>2}. {}", k + 1, o.summary_line()).unwrap();
    }
    drop(out);
    let failed: Vec<String> = outcomes.iter().filter(|o| !o.passed()).map(|o| o.report()).collect();
    for o in &outcomes {
        eprintln!("{}", o.report());
    }
    assert!(failed.is_empty(), "failed criteria:\n{}", failed.join("\n"));
}
