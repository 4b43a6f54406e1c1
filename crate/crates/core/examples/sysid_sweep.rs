//! Sine-injection frequency response of the switched buck receivers against
//! the analytic transfer functions.
//!
//! Run with `cargo run --release --example sysid_sweep`.

use wpr::freq::{evaluate, log_grid};
use wpr::model::{CircuitParams, ControlInput, Converter};
use wpr::scenarios::{modified, original};
use wpr::switched::{extract_frequency_response, sysid_phase_deg, SwitchSchedule, SysidOptions};
use wpr::tf::closed_form_tf;

fn main() -> wpr::Result<()> {
    let p = CircuitParams::nominal();
    let u = ControlInput::nominal();
    let s = SwitchSchedule::from_control(&u);
    let grid = log_grid(30.0, 5000.0, 8);
    for top in [original(Converter::Buck), modified(Converter::Buck)] {
        let plant = closed_form_tf(top, &p, &u)?;
        let points = extract_frequency_response(top, &p, &s, &grid, &SysidOptions::default())?;
        let omegas: Vec<f64> = points.iter().map(|q| q.omega).collect();
        let analytic = evaluate(&plant, &omegas)?;
        let phase = sysid_phase_deg(&points);
        println!("{top}");
        println!("  {:>10} {:>10} {:>10} {:>10} {:>10}", "rad/s", "dB", "model dB", "deg", "model deg");
        for (k, q) in points.iter().enumerate() {
            println!(
                "  {:>10.1} {:>10.3} {:>10.3} {:>10.2} {:>10.2}",
                q.omega,
                20.0 * q.response.norm().log10(),
                20.0 * analytic.value[k].norm().log10(),
                phase[k],
                analytic.phase_deg[k]
            );
        }
    }
    Ok(())
}
