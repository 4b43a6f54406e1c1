//! Reference operating points, compensator sets and time-domain scenarios
//! for the nominal receiver (`I = 1 A`, `f = 100 kHz`, `C_DC = 30 µF`,
//! `L = 77 µH`, `C_o = 40 µF`, `R = 7 Ω`, `D_DC-DC = 0.5`, `D = 0.51`).

use crate::avgsim::{Change, Scenario};
use crate::error::Result;
use crate::freq::PIGains;
use crate::model::{duty_for_output, equilibrium, CircuitParams, ControlInput, Converter, Rectifier, Topology};
use crate::tf::closed_form_tf;
use crate::tune::tune_margin_pair;

pub const CONVERTERS: [Converter; 3] = [Converter::Buck, Converter::BuckBoost, Converter::Boost];

pub fn original(c: Converter) -> Topology {
    Topology::new(c, Rectifier::OriginalDiode)
}

pub fn modified(c: Converter) -> Topology {
    Topology::new(c, Rectifier::ModifiedActive)
}

pub fn converter_slug(c: Converter) -> &'static str {
    match c {
        Converter::Buck => "buck",
        Converter::BuckBoost => "buck_boost",
        Converter::Boost => "boost",
    }
}

/// Compensators for the original and the modified receiver of one converter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainPair {
    pub original: PIGains,
    pub modified: PIGains,
}

impl GainPair {
    pub fn for_topology(&self, top: Topology) -> PIGains {
        if top.is_modified() {
            self.modified
        } else {
            self.original
        }
    }
}

fn g(kp: f64, ki: f64) -> PIGains {
    PIGains { kp, ki }
}

/// Published gains that put both loops' crossover at 300 rad/s.
pub fn crossover_matched_gains(c: Converter) -> GainPair {
    match c {
        Converter::Buck => GainPair { original: g(0.0027284, 17.1836), modified: g(0.0, 179.753) },
        Converter::BuckBoost => GainPair { original: g(0.0, 16.97), modified: g(0.0, 344.427) },
        Converter::Boost => GainPair { original: g(0.0, 67.64), modified: g(0.0, 685.335) },
    }
}

/// Gain and phase margin shared by both receivers of a converter.
pub fn margin_targets(c: Converter) -> (f64, f64) {
    match c {
        Converter::Buck => (20.0, 76.8),
        Converter::BuckBoost => (20.0, 72.9),
        Converter::Boost => (23.0, 64.1),
    }
}

/// Published margin-matched gains, as printed.
pub fn published_margin_matched_gains(c: Converter) -> GainPair {
    match c {
        Converter::Buck => GainPair { original: g(0.0, 6.64), modified: g(0.0732, 130.25) },
        Converter::BuckBoost => GainPair { original: g(0.0, 24.53), modified: g(0.0167, 228.36) },
        Converter::Boost => GainPair { original: g(0.002777, 305.88), modified: g(0.0, 745.744) },
    }
}

/// Margin-matched gains designed on the nominal linearisation.
pub fn designed_margin_matched_gains(c: Converter) -> Result<GainPair> {
    let (gm, pm) = margin_targets(c);
    let p = CircuitParams::nominal();
    let u = ControlInput::nominal();
    let original = tune_margin_pair(&closed_form_tf(original(c), &p, &u)?, gm, pm)?;
    let modified = tune_margin_pair(&closed_form_tf(modified(c), &p, &u)?, gm, pm)?;
    Ok(GainPair { original, modified })
}

/// Buck gains after the crossover is pushed up to about 1030 rad/s.
pub fn stress_gains() -> GainPair {
    GainPair { original: g(0.0, 66.0), modified: g(0.175, 325.0) }
}

pub const STEP_TIME: f64 = 0.01;

/// Open-loop step of the actuated duty: `D_DC-DC` 0.5 → 0.52 for the
/// original buck, `D` 0.53 → 0.58 for the modified buck.
pub fn duty_step(rect: Rectifier) -> Scenario {
    let p = CircuitParams::nominal();
    let (top, u, to) = match rect {
        Rectifier::OriginalDiode => (original(Converter::Buck), ControlInput::new(0.5, 0.51), 0.52),
        Rectifier::ModifiedActive => (modified(Converter::Buck), ControlInput::new(0.5, 0.53), 0.58),
    };
    Scenario::open_loop(top, p, u, 0.04).with_event(STEP_TIME, Change::DutyStep { duty: to })
}

fn regulated(top: Topology, p: CircuitParams, v_o: f64, gains: PIGains, duration: f64) -> Result<Scenario> {
    let u = duty_for_output(top, &p, &ControlInput::nominal(), v_o)?;
    let mut s = Scenario::open_loop(top, p, u, duration);
    s.gains = Some(gains);
    s.reference = Some(v_o);
    Ok(s)
}

/// Reference step levels used with each converter (V).
pub fn reference_levels(c: Converter) -> (f64, f64) {
    match c {
        Converter::Buck => (8.0, 8.8),
        Converter::BuckBoost => (4.0, 4.4),
        Converter::Boost => (2.0, 2.2),
    }
}

/// Output reference `from` → `to` at `R = 7 Ω`.
pub fn reference_step_between(top: Topology, gains: PIGains, from: f64, to: f64) -> Result<Scenario> {
    Ok(regulated(top, CircuitParams::nominal(), from, gains, 0.1)?
        .with_event(STEP_TIME, Change::ReferenceStep { reference: to }))
}

/// Output reference 8 V → 8.8 V at `R = 7 Ω`.
pub fn reference_step(top: Topology, gains: PIGains) -> Result<Scenario> {
    reference_step_between(top, gains, 8.0, 8.8)
}

/// Load 8.6 Ω → 7 Ω while regulating 8.8 V.
pub fn load_step(top: Topology, gains: PIGains) -> Result<Scenario> {
    Ok(regulated(top, CircuitParams::nominal().with_load(8.6), 8.8, gains, 0.1)?
        .with_event(STEP_TIME, Change::LoadStep { r_load: 7.0 }))
}

/// Gains switched from `from` to `to` at the nominal operating point,
/// followed 10 ms later by a 0.05 V reference nudge that excites the loop.
pub fn gain_step(top: Topology, from: PIGains, to: PIGains) -> Result<Scenario> {
    let p = CircuitParams::nominal();
    let u = ControlInput::nominal();
    let v_o = equilibrium(top, &p, &u)?.v_o;
    let mut s = Scenario::open_loop(top, p, u, 0.06);
    s.gains = Some(from);
    s.reference = Some(v_o);
    Ok(s.with_event(STEP_TIME, Change::GainStep { kp: to.kp, ki: to.ki })
        .with_event(GAIN_STEP_NUDGE_TIME, Change::ReferenceStep { reference: v_o + 0.05 }))
}

/// Time of the reference nudge in [`gain_step`].
pub const GAIN_STEP_NUDGE_TIME: f64 = 0.02;
