//! Open-loop duty steps on both buck receivers: the diode rectifier answers
//! the wrong way first, the active rectifier does not.
//!
//! Run with `cargo run --example duty_step`.

use wpr::avgsim::{simulate, step_metrics};
use wpr::model::Rectifier;
use wpr::scenarios::{duty_step, STEP_TIME};

fn main() -> wpr::Result<()> {
    for rect in [Rectifier::OriginalDiode, Rectifier::ModifiedActive] {
        let s = duty_step(rect);
        let ts = simulate(&s)?;
        let m = step_metrics(&ts, STEP_TIME, "v_o")?;
        println!("{}:", s.topology);
        println!("  v_o {:.4} V -> {:.4} V", m.initial, m.final_value);
        println!("  wrong-way excursion {:.4} V, inverse response {}", m.wrong_way, m.inverse_response);
        println!("  settling {}", m.settling_time.map_or("never".into(), |t| format!("{:.2} ms", t * 1e3)));
    }
    Ok(())
}
