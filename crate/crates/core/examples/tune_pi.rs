//! PI design two ways: for a crossover frequency and for a margin pair.
//!
//! Run with `cargo run --example tune_pi`.

use wpr::freq::{loop_gain, margins};
use wpr::model::{CircuitParams, ControlInput, Topology};
use wpr::scenarios::{margin_targets, modified, original, CONVERTERS};
use wpr::tf::closed_form_tf;
use wpr::tune::{tune, TuneTarget};

fn main() -> wpr::Result<()> {
    let p = CircuitParams::nominal();
    let u = ControlInput::nominal();
    let crossover = TuneTarget::Crossover { omega_c: 300.0, kp_fixed: None };
    for top in Topology::ALL {
        let plant = closed_form_tf(top, &p, &u)?;
        let c = tune(&plant, &crossover)?;
        println!("{top}: ki = {:.4} puts the crossover at 300 rad/s", c.ki);
    }

    println!();
    for conv in CONVERTERS {
        let (gm_db, pm_deg) = margin_targets(conv);
        for top in [original(conv), modified(conv)] {
            let plant = closed_form_tf(top, &p, &u)?;
            match tune(&plant, &TuneTarget::MarginPair { gm_db, pm_deg }) {
                Ok(c) => {
                    let m = margins(&loop_gain(&plant, &c)?)?;
                    println!(
                        "{top}: GM {gm_db} dB / PM {pm_deg} deg -> kp = {:.4e}, ki = {:.4}, crossover {:.1} rad/s",
                        c.kp,
                        c.ki,
                        m.crossover_rad_s.unwrap_or(f64::NAN)
                    );
                }
                Err(e) => println!("{top}: {e}"),
            }
        }
    }
    Ok(())
}
