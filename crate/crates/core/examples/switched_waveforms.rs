//! Cycle-by-cycle simulation of the buck receivers, compared with the
//! averaged equilibrium.
//!
//! Run with `cargo run --example switched_waveforms`.

use wpr::model::{equilibrium, CircuitParams, ControlInput, Converter};
use wpr::scenarios::{modified, original};
use wpr::switched::{simulate_switched, SwitchSchedule, SwitchedOptions};

fn main() -> wpr::Result<()> {
    let p = CircuitParams::nominal();
    let u = ControlInput::nominal();
    let s = SwitchSchedule::from_control(&u);
    for top in [original(Converter::Buck), modified(Converter::Buck)] {
        let run = simulate_switched(top, &p, &s, 0.02, &SwitchedOptions::default())?;
        let eq = equilibrium(top, &p, &u)?;
        let means = &run.cycle_means;
        let last = means.len() - 1;
        println!("{top}: {} cycles", means.len());
        println!("  mean v_dc {:.4} V (averaged {:.4} V)", means.v_dc[last], eq.v_dc);
        println!("  mean v_o  {:.4} V (averaged {:.4} V)", means.v_o[last], eq.v_o);
        let modes = run.waveform.mode.as_ref().unwrap();
        let first: Vec<&str> = modes.iter().take(21).map(String::as_str).collect();
        println!("  states over the first period: {}", first.join(" "));
    }
    Ok(())
}
