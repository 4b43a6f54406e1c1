//! Closed-loop reference and load steps on the buck receivers with
//! margin-matched gains, written as CSV next to the printed metrics.
//!
//! Run with `cargo run --example closed_loop -- out_dir`.

use std::path::PathBuf;

use wpr::avgsim::{simulate, step_metrics};
use wpr::model::Converter;
use wpr::scenarios::{designed_margin_matched_gains, load_step, modified, original, reference_step, STEP_TIME};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from);
    let gains = designed_margin_matched_gains(Converter::Buck)?;
    for top in [original(Converter::Buck), modified(Converter::Buck)] {
        let c = gains.for_topology(top);
        for (name, s) in [("reference", reference_step(top, c)?), ("load", load_step(top, c)?)] {
            let ts = simulate(&s)?;
            let m = step_metrics(&ts, STEP_TIME, "v_o")?;
            let settle = m.settling_time.map_or("never".into(), |t| format!("{:.2} ms", t * 1e3));
            println!(
                "{top} {name} step: settling {settle}, overshoot {:.3} V, undershoot {:.3} V",
                m.overshoot, m.undershoot
            );
            if let Some(dir) = &out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(dir.join(format!("{top}_{name}.csv")), ts.to_csv())?;
            }
        }
    }
    Ok(())
}
