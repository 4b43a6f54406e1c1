//! Runs the acceptance checks and prints the full report for each.
//!
//! Run with `cargo run --release --example acceptance_report`.

fn main() {
    let outcomes = wpr::checks::run_all();
    for o in &outcomes {
        println!("{}\n", o.report());
    }
    let passed = outcomes.iter().filter(|o| o.passed()).count();
    println!("{passed} of {} checks passed", outcomes.len());
}
