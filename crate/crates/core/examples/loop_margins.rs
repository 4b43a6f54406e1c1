//! Crossover, gain and phase margins of a PI loop around each buck receiver,
//! with the Nyquist verdict.
//!
//! Run with `cargo run --example loop_margins`.

use wpr::freq::{closed_loop_poles, loop_gain, margins};
use wpr::model::{CircuitParams, ControlInput, Converter};
use wpr::scenarios::{crossover_matched_gains, modified, original};
use wpr::tf::closed_form_tf;

fn show(label: &str, x: Option<f64>, unit: &str) -> String {
    x.map_or(format!("{label} unbounded"), |v| format!("{label} {v:.2} {unit}"))
}

fn main() -> wpr::Result<()> {
    let gains = crossover_matched_gains(Converter::Buck);
    for top in [original(Converter::Buck), modified(Converter::Buck)] {
        let plant = closed_form_tf(top, &CircuitParams::nominal(), &ControlInput::nominal())?;
        let c = gains.for_topology(top);
        let m = margins(&loop_gain(&plant, &c)?)?;
        println!("{top} with kp = {:.4e}, ki = {:.4}", c.kp, c.ki);
        println!(
            "  {}, {}, {}",
            show("crossover", m.crossover_rad_s, "rad/s"),
            show("PM", m.phase_margin_deg, "deg"),
            show("GM", m.gain_margin_db, "dB")
        );
        println!("  Nyquist: {} clockwise encirclements, stable = {}", m.encirclements_cw, m.nyquist_stable);
        let worst = closed_loop_poles(&plant, &c)?.max_real();
        println!("  slowest closed-loop pole real part {worst:.2}");
    }
    Ok(())
}
