//! Zeros and poles of every receiver at the nominal operating point.
//!
//! Run with `cargo run --example rhp_zeros`.

use wpr::model::{CircuitParams, ControlInput, Topology};
use wpr::tf::{closed_form_rhp_zeros, closed_form_tf};

fn main() -> wpr::Result<()> {
    let p = CircuitParams::nominal();
    let u = ControlInput::nominal();
    for top in Topology::ALL {
        let g = closed_form_tf(top, &p, &u)?;
        println!("{top}: G(0) = {:+.4} V per unit duty", g.dc_gain());
        for z in g.zeros()?.roots {
            let tag = if z.re > 0.0 { "  right half plane" } else { "" };
            println!("  zero {:>12.3} {:+12.3}j{tag}", z.re, z.im);
        }
        for s in g.poles()?.roots {
            println!("  pole {:>12.3} {:+12.3}j", s.re, s.im);
        }
        let closed = closed_form_rhp_zeros(top, &p, &u)?;
        if !closed.is_empty() {
            println!("  closed-form RHP zeros agree: {}", closed.is_subset_of(&g.zeros()?, 1e-6));
        }
    }
    Ok(())
}
