//! Acceptance checks shared by `wpr validate` and the acceptance test target.
//!
//! Each check compares measured quantities against published or derived
//! reference values and reports every comparison with its tolerance.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::avgsim::{linearized_step_response, simulate, step_metrics, Scenario, StepKind, StepMetrics};
use crate::error::Result;
use crate::freq::{closed_loop_poles, log_grid, loop_gain, margins, PIGains};
use crate::model::{
    derivative_raw, equilibrium, linearize, CircuitParams, ControlInput, Converter, Rectifier, StateVector, Topology,
};
use crate::scenarios::{self, converter_slug, modified, original, CONVERTERS};
use crate::switched::{
    extract_frequency_response, rectifier_current, simulate_switched, SwitchSchedule, SwitchedOptions, SysidOptions,
    SysidPoint,
};
use crate::tf::{closed_form_rhp_zeros, closed_form_tf, tf_from_state_space};
use crate::tune::tune_margin_pair;

/// Seed for every randomised check.
pub const SEED: u64 = 0x5eed_2024;

/// How a measurement is judged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Tolerance {
    Abs { tol: f64 },
    Rel { tol: f64 },
    AtLeast,
    AtMost,
    Flag,
}

impl Tolerance {
    pub fn accepts(&self, measured: f64, expected: f64) -> bool {
        if !measured.is_finite() {
            return false;
        }
        match *self {
            Tolerance::Abs { tol } => (measured - expected).abs() <= tol,
            Tolerance::Rel { tol } => {
                if expected == 0.0 {
                    measured == 0.0
                } else {
                    ((measured - expected) / expected).abs() <= tol
                }
            }
            Tolerance::AtLeast => measured >= expected,
            Tolerance::AtMost => measured <= expected,
            Tolerance::Flag => measured == expected,
        }
    }
}

impl fmt::Display for Tolerance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tolerance::Abs { tol } => write!(f, "±{tol}"),
            Tolerance::Rel { tol } => write!(f, "±{}%", tol * 100.0),
            Tolerance::AtLeast => f.write_str("at least"),
            Tolerance::AtMost => f.write_str("at most"),
            Tolerance::Flag => f.write_str("exact"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub label: String,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: Tolerance,
    pub passed: bool,
}

fn show(v: f64, tol: &Tolerance) -> String {
    match tol {
        Tolerance::Flag => (if v != 0.0 { "true" } else { "false" }).into(),
        _ if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e6) => format!("{v:.4e}"),
        _ => format!("{v:.6}"),
    }
}

impl fmt::Display for Measurement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "ok  " } else { "FAIL" };
        match self.tolerance {
            Tolerance::AtLeast | Tolerance::AtMost => write!(
                f,
                "{verdict} {}: measured {} (expected {} {})",
                self.label,
                show(self.measured, &self.tolerance),
                self.tolerance,
                show(self.expected, &self.tolerance)
            ),
            _ => write!(
                f,
                "{verdict} {}: measured {} expected {} ({})",
                self.label,
                show(self.measured, &self.tolerance),
                show(self.expected, &self.tolerance),
                self.tolerance
            ),
        }
    }
}

/// Result of one acceptance check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub id: String,
    pub title: String,
    pub measurements: Vec<Measurement>,
    /// Informational values that are not judged.
    pub notes: Vec<String>,
    /// Set when the check could not be evaluated.
    pub error: Option<String>,
}

impl CheckOutcome {
    fn new(id: &str, title: &str) -> Self {
        Self { id: id.into(), title: title.into(), measurements: Vec::new(), notes: Vec::new(), error: None }
    }

    pub fn passed(&self) -> bool {
        self.error.is_none() && !self.measurements.is_empty() && self.measurements.iter().all(|m| m.passed)
    }

    pub fn summary_line(&self) -> String {
        let failed = self.measurements.iter().filter(|m| !m.passed).count();
        let status = if self.passed() { "PASS" } else { "FAIL" };
        match &self.error {
            Some(e) => format!("[{status}] {}: {} (error: {e})", self.id, self.title),
            None => format!(
                "[{status}] {}: {} ({} of {} comparisons within tolerance)",
                self.id,
                self.title,
                self.measurements.len() - failed,
                self.measurements.len()
            ),
        }
    }

    pub fn check(&mut self, label: impl Into<String>, measured: f64, expected: f64, tolerance: Tolerance) -> bool {
        let passed = tolerance.accepts(measured, expected);
        self.measurements.push(Measurement { label: label.into(), measured, expected, tolerance, passed });
        passed
    }

    pub fn flag(&mut self, label: impl Into<String>, measured: bool, expected: bool) -> bool {
        self.check(label, measured as u8 as f64, expected as u8 as f64, Tolerance::Flag)
    }

    pub fn note(&mut self, text: impl Into<String>) {
        self.notes.push(text.into());
    }

    /// Full multi-line report.
    pub fn report(&self) -> String {
        let mut out = self.summary_line();
        for m in &self.measurements {
            out.push_str("\n    ");
            out.push_str(&m.to_string());
        }
        for n in &self.notes {
            out.push_str("\n    note: ");
            out.push_str(n);
        }
        out
    }
}

type CheckFn = fn(&mut CheckOutcome) -> Result<()>;

/// `(id, title, body)` for every acceptance check, in order.
pub const CHECKS: [(&str, &str, CheckFn); 12] = [
    ("rhp_zero_value", "buck original right-half-plane zero", rhp_zero_value),
    ("closed_form_equivalence", "closed-form vs state-space transfer functions and zeros", closed_form_equivalence),
    ("zero_elimination", "active rectifier removes zeros and keeps poles", zero_elimination),
    ("margin_regression", "margins of the crossover-matched loops", margin_regression),
    ("crossover_regression", "crossovers and margins of the margin-matched loops", crossover_regression),
    ("tuner_round_trip", "margin-pair tuner round trip", tuner_round_trip),
    ("inverse_response", "open-loop duty step signature", inverse_response),
    ("closed_loop_ratios", "reference and load step dynamics ratios", closed_loop_ratios),
    ("stability_stress", "raised-crossover stability stress test", stability_stress),
    ("switched_fidelity", "switched vs averaged fidelity and conduction averages", switched_fidelity),
    ("sysid_bode_fidelity", "sine-injection frequency response vs analytic", sysid_bode_fidelity),
    ("numerical_hygiene", "linearisation and integration step convergence", numerical_hygiene),
];

pub fn check_ids() -> Vec<&'static str> {
    CHECKS.iter().map(|c| c.0).collect()
}

pub fn run_check(id: &str) -> Option<CheckOutcome> {
    CHECKS.iter().find(|c| c.0 == id).map(|(id, title, body)| {
        let mut out = CheckOutcome::new(id, title);
        if let Err(e) = body(&mut out) {
            out.error = Some(e.to_string());
        }
        out
    })
}

pub fn run_all() -> Vec<CheckOutcome> {
    CHECKS.iter().map(|c| run_check(c.0).unwrap()).collect()
}

fn nominal() -> (CircuitParams, ControlInput) {
    (CircuitParams::nominal(), ControlInput::nominal())
}

fn rhp_zero_value(out: &mut CheckOutcome) -> Result<()> {
    let (p, u) = nominal();
    let top = original(Converter::Buck);
    let z = closed_form_tf(top, &p, &u)?.zeros()?;
    out.check("number of zeros", z.len() as f64, 1.0, Tolerance::Abs { tol: 0.0 });
    out.check("right-half-plane zeros", z.right_half_plane().len() as f64, 1.0, Tolerance::Abs { tol: 0.0 });
    let re = z.roots.first().map_or(f64::NAN, |r| r.re);
    out.check("zero (rad/s)", re, 1190.0, Tolerance::Rel { tol: 0.01 });
    let cf = closed_form_rhp_zeros(top, &p, &u)?;
    out.check("closed-form zero (rad/s)", cf.roots[0].re, 1190.0, Tolerance::Rel { tol: 0.01 });
    Ok(())
}

/// A random valid parameter set and operating point.
pub fn random_draw(rng: &mut impl Rng) -> (CircuitParams, ControlInput) {
    let log_uniform = |rng: &mut dyn rand::RngCore, lo: f64, hi: f64| (rng.gen_range(lo.ln()..hi.ln())).exp();
    let p = CircuitParams {
        i_ls_amplitude: log_uniform(rng, 0.2, 5.0),
        f_switch: log_uniform(rng, 2e4, 1e6),
        c_dc: log_uniform(rng, 5e-6, 200e-6),
        l: log_uniform(rng, 10e-6, 500e-6),
        c_o: log_uniform(rng, 5e-6, 200e-6),
        r_load: log_uniform(rng, 1.0, 100.0),
    };
    let u = ControlInput::new(rng.gen_range(0.1..0.9), rng.gen_range(0.505..0.99));
    (p, u)
}

fn closed_form_equivalence(out: &mut CheckOutcome) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst_coef = 0.0f64;
    let mut worst_zero = 0.0f64;
    let mut worst_pole_re = f64::NEG_INFINITY;
    let draws = 200;
    for _ in 0..draws {
        let (p, u) = random_draw(&mut rng);
        for top in Topology::ALL {
            let cf = closed_form_tf(top, &p, &u)?;
            let ss = tf_from_state_space(&linearize(top, &p, &u)?)?;
            worst_coef = worst_coef.max(cf.max_relative_mismatch(&ss));
            worst_pole_re = worst_pole_re.max(cf.poles()?.max_real());
            let numeric = cf.zeros()?;
            for z in closed_form_rhp_zeros(top, &p, &u)?.roots {
                let d = numeric.roots.iter().map(|w| (z - w).norm() / z.norm()).fold(f64::INFINITY, f64::min);
                worst_zero = worst_zero.max(d);
            }
        }
    }
    out.check("draws", draws as f64, 200.0, Tolerance::AtLeast);
    out.check("worst coefficient mismatch", worst_coef, 1e-9, Tolerance::AtMost);
    out.check("worst closed-form zero mismatch", worst_zero, 1e-6, Tolerance::AtMost);
    out.note(format!("largest open-loop pole real part over all draws: {worst_pole_re:.6e}"));
    Ok(())
}

fn zero_elimination(out: &mut CheckOutcome) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 0x3);
    let mut max_degree = 0usize;
    let mut worst_den = 0.0f64;
    let mut any_zero = 0usize;
    for _ in 0..200 {
        let (p, u) = random_draw(&mut rng);
        for c in CONVERTERS {
            let m = closed_form_tf(modified(c), &p, &u)?;
            let o = closed_form_tf(original(c), &p, &u)?;
            max_degree = max_degree.max(m.num_degree().unwrap_or(0));
            any_zero += m.zeros()?.len();
            let (mm, om) = (m.monic(), o.monic());
            let d = mm
                .den
                .iter()
                .zip(&om.den)
                .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()))
                .fold(0.0, f64::max);
            worst_den = worst_den.max(d);
        }
    }
    out.check("largest modified numerator degree", max_degree as f64, 0.0, Tolerance::Abs { tol: 0.0 });
    out.check("finite zeros of modified plants", any_zero as f64, 0.0, Tolerance::Abs { tol: 0.0 });
    out.check("worst denominator mismatch vs original", worst_den, 1e-12, Tolerance::AtMost);
    Ok(())
}

fn margin_regression(out: &mut CheckOutcome) -> Result<()> {
    let (p, u) = nominal();
    // (PM, GM dB, GM frequency)
    let reference = |top: Topology| match (top.converter, top.is_modified()) {
        (Converter::Buck, false) => (60.0, 13.0, 1250.0),
        (Converter::Buck, true) => (71.0, 49.0, 10000.0),
        (Converter::BuckBoost, false) => (78.0, 23.2, 3000.0),
        (Converter::BuckBoost, true) => (82.0, 37.5, 10000.0),
        (Converter::Boost, false) => (83.0, 34.9, 7050.0),
        (Converter::Boost, true) => (84.0, 37.5, 20800.0),
    };
    for top in Topology::ALL {
        let gains = scenarios::crossover_matched_gains(top.converter).for_topology(top);
        let m = margins(&loop_gain(&closed_form_tf(top, &p, &u)?, &gains)?)?;
        let (pm, gm, wg) = reference(top);
        let s = top.slug();
        let nan = f64::NAN;
        out.check(format!("{s} crossover (rad/s)"), m.crossover_rad_s.unwrap_or(nan), 300.0, Tolerance::Rel { tol: 0.1 });
        out.check(format!("{s} phase margin (deg)"), m.phase_margin_deg.unwrap_or(nan), pm, Tolerance::Abs { tol: 3.0 });
        out.check(format!("{s} gain margin (dB)"), m.gain_margin_db.unwrap_or(nan), gm, Tolerance::Abs { tol: 1.5 });
        out.check(format!("{s} gain margin frequency (rad/s)"), m.gain_margin_rad_s.unwrap_or(nan), wg, Tolerance::Rel {
            tol: 0.1,
        });
        out.flag(format!("{s} Nyquist stable"), m.nyquist_stable, true);
    }
    out.note("modified-receiver integral gains are 179.753, 344.427 and 685.335 (published with a misplaced thousands separator)");
    Ok(())
}

fn crossover_regression(out: &mut CheckOutcome) -> Result<()> {
    let (p, u) = nominal();
    let reference = |c: Converter| match c {
        Converter::Buck => (118.0, 480.0),
        Converter::BuckBoost => (430.0, 751.0),
        Converter::Boost => (1260.0, 1460.0),
    };
    for c in CONVERTERS {
        let (gm_t, pm_t) = margin_targets_of(c);
        let published = scenarios::published_margin_matched_gains(c);
        let designed = scenarios::designed_margin_matched_gains(c)?;
        let pair = [(original(c), published.original), (modified(c), designed.modified)];
        let mut crossovers = [0.0; 2];
        for (k, (top, gains)) in pair.into_iter().enumerate() {
            let m = margins(&loop_gain(&closed_form_tf(top, &p, &u)?, &gains)?)?;
            let s = top.slug();
            let wc = m.crossover_rad_s.unwrap_or(f64::NAN);
            crossovers[k] = wc;
            let want = if k == 0 { reference(c).0 } else { reference(c).1 };
            out.check(format!("{s} crossover (rad/s)"), wc, want, Tolerance::Rel { tol: 0.1 });
            out.check(format!("{s} gain margin (dB)"), m.gain_margin_db.unwrap_or(f64::NAN), gm_t, Tolerance::Abs { tol: 1.5 });
            out.check(format!("{s} phase margin (deg)"), m.phase_margin_deg.unwrap_or(f64::NAN), pm_t, Tolerance::Abs {
                tol: 3.0,
            });
        }
        let ratio = |g: PIGains| g.kp / g.ki;
        out.check(
            format!("{} modified kp/ki vs published (s)", converter_slug(c)),
            ratio(designed.modified),
            ratio(published.modified),
            Tolerance::Rel { tol: 0.05 },
        );
        out.flag(format!("{} modified crossover above original", converter_slug(c)), crossovers[1] > crossovers[0], true);
        out.note(format!(
            "{}: original uses published gains (kp={}, ki={}); modified uses designed gains (kp={:.6}, ki={:.4})",
            converter_slug(c),
            published.original.kp,
            published.original.ki,
            designed.modified.kp,
            designed.modified.ki
        ));
    }
    Ok(())
}

fn margin_targets_of(c: Converter) -> (f64, f64) {
    scenarios::margin_targets(c)
}

fn tuner_round_trip(out: &mut CheckOutcome) -> Result<()> {
    let (p, u) = nominal();
    for top in Topology::ALL {
        let (gm, pm) = margin_targets_of(top.converter);
        let plant = closed_form_tf(top, &p, &u)?;
        let gains = tune_margin_pair(&plant, gm, pm)?;
        let m = margins(&loop_gain(&plant, &gains)?)?;
        let s = top.slug();
        out.check(format!("{s} gain margin (dB)"), m.gain_margin_db.unwrap_or(f64::NAN), gm, Tolerance::Abs { tol: 0.1 });
        out.check(format!("{s} phase margin (deg)"), m.phase_margin_deg.unwrap_or(f64::NAN), pm, Tolerance::Abs { tol: 0.1 });
        out.note(format!("{s}: kp={:.6e} ki={:.6e}", gains.kp, gains.ki));
    }
    Ok(())
}

/// Open-loop small-signal duty step of the scenario's plant, linearised at
/// the pre-step operating point. Returns `(peak rise, final change)`.
fn linear_duty_step(s: &Scenario) -> Result<(f64, f64)> {
    let crate::avgsim::Change::DutyStep { duty } = s.events[0].change else {
        unreachable!("duty step scenario")
    };
    let delta = duty - s.control.active(s.topology);
    let plant = closed_form_tf(s.topology, &s.params, &s.control)?;
    let r = linearized_step_response(&plant, None, StepKind::Duty, delta, s.duration - s.events[0].time, 1e-6)?;
    let peak = r.y.iter().copied().fold(0.0, f64::max);
    Ok((peak, *r.y.last().unwrap()))
}

fn inverse_response(out: &mut CheckOutcome) -> Result<()> {
    let so = scenarios::duty_step(Rectifier::OriginalDiode);
    let sm = scenarios::duty_step(Rectifier::ModifiedActive);
    let mo = step_metrics(&simulate(&so)?, scenarios::STEP_TIME, "v_o")?;
    let mm = step_metrics(&simulate(&sm)?, scenarios::STEP_TIME, "v_o")?;
    out.flag("original buck inverse response", mo.inverse_response, true);
    out.flag("modified buck inverse response", mm.inverse_response, false);

    let (rise, fin) = linear_duty_step(&so)?;
    out.check("original buck initial rise (V)", rise, 0.4, Tolerance::Rel { tol: 0.3 });
    out.check("original buck drop from peak (V)", rise - fin, 0.76, Tolerance::Rel { tol: 0.3 });
    let (rise_m, fin_m) = linear_duty_step(&sm)?;
    out.check("modified buck net drop (V)", -fin_m, 0.26, Tolerance::Rel { tol: 0.3 });
    out.check("modified buck wrong-way rise (V)", rise_m, 0.0, Tolerance::Abs { tol: 1e-9 });
    out.note(format!(
        "nonlinear averaged model: original rise {:.4} V, drop from peak {:.4} V, net {:+.4} V; modified net {:+.4} V",
        mo.wrong_way,
        mo.wrong_way + mo.initial - mo.final_value,
        mo.final_value - mo.initial,
        mm.final_value - mm.initial
    ));
    out.note("magnitudes are measured on the small-signal model linearised before the step");
    Ok(())
}

fn closed_loop_metrics(top: Topology, gains: PIGains) -> Result<(StepMetrics, StepMetrics)> {
    let r = step_metrics(&simulate(&scenarios::reference_step(top, gains)?)?, scenarios::STEP_TIME, "v_o")?;
    let l = step_metrics(&simulate(&scenarios::load_step(top, gains)?)?, scenarios::STEP_TIME, "v_o")?;
    Ok((r, l))
}

fn closed_loop_ratios(out: &mut CheckOutcome) -> Result<()> {
    let gains = scenarios::designed_margin_matched_gains(Converter::Buck)?;
    let (ro, lo) = closed_loop_metrics(original(Converter::Buck), gains.original)?;
    let (rm, lm) = closed_loop_metrics(modified(Converter::Buck), gains.modified)?;
    let ts = |m: &StepMetrics| m.settling_time.unwrap_or(f64::INFINITY);
    out.check("settling time ratio original/modified", ts(&ro) / ts(&rm), 3.0, Tolerance::AtLeast);
    out.check("load-step undershoot ratio original/modified", lo.undershoot / lm.undershoot, 3.0, Tolerance::AtLeast);
    out.note(format!(
        "reference step: original settles in {:.2} ms (overshoot {:.3} V), modified in {:.2} ms (overshoot {:.3} V)",
        ts(&ro) * 1e3,
        ro.overshoot,
        ts(&rm) * 1e3,
        rm.overshoot
    ));
    out.note(format!("load step undershoot: original {:.3} V, modified {:.3} V", lo.undershoot, lm.undershoot));
    out.note(format!(
        "gains: original kp={:.4e} ki={:.4}, modified kp={:.4e} ki={:.4}",
        gains.original.kp, gains.original.ki, gains.modified.kp, gains.modified.ki
    ));
    Ok(())
}

fn stability_stress(out: &mut CheckOutcome) -> Result<()> {
    let (p, u) = nominal();
    let g = scenarios::stress_gains();
    let po = closed_form_tf(original(Converter::Buck), &p, &u)?;
    let pm = closed_form_tf(modified(Converter::Buck), &p, &u)?;
    let mo = margins(&loop_gain(&po, &g.original)?)?;
    let mm = margins(&loop_gain(&pm, &g.modified)?)?;
    let worst = |r: &crate::tf::RootSet| r.roots.iter().map(|z| z.re / z.norm()).fold(f64::NEG_INFINITY, f64::max);
    let co = closed_loop_poles(&po, &g.original)?;
    let cm = closed_loop_poles(&pm, &g.modified)?;
    out.check("original gain margin (dB)", mo.gain_margin_db.unwrap_or(f64::NAN), 0.0, Tolerance::Abs { tol: 2.0 });
    out.check("original max closed-loop Re(p)/|p|", worst(&co), -0.02, Tolerance::AtLeast);
    out.check("modified gain margin (dB)", mm.gain_margin_db.unwrap_or(f64::NAN), 6.0, Tolerance::AtLeast);
    out.check("modified max closed-loop Re(p)", cm.max_real(), 0.0, Tolerance::AtMost);
    out.flag("modified all poles in open left half plane", cm.max_real() < 0.0, true);
    out.flag("modified Nyquist stable", mm.nyquist_stable, true);
    out.note(format!(
        "crossovers: original {:.1} rad/s, modified {:.1} rad/s",
        mo.crossover_rad_s.unwrap_or(f64::NAN),
        mm.crossover_rad_s.unwrap_or(f64::NAN)
    ));
    Ok(())
}

/// RMS of `switched − averaged` over cycles after the first ten, relative to
/// the equilibrium value of each state. Returns the worst state.
pub fn switched_vs_averaged(top: Topology, p: &CircuitParams, u: &ControlInput, duration: f64) -> Result<f64> {
    let opts = SwitchedOptions { initial_state: Some(StateVector::ZERO), samples_per_cycle: 1 };
    let run = simulate_switched(top, p, &SwitchSchedule::from_control(u), duration, &opts)?;
    let half = p.period() / 2.0;
    let mut s = Scenario::open_loop(top, *p, *u, duration);
    s.initial_state = Some(StateVector::ZERO);
    s.step = Some(half / (half / crate::avgsim::default_step(p)).ceil());
    s.sample_interval = Some(half);
    let av = simulate(&s)?;
    let eq = equilibrium(top, p, u)?;
    let cm = &run.cycle_means;
    let mut worst = 0.0f64;
    for (a, b, scale) in [(&cm.v_dc, &av.v_dc, eq.v_dc), (&cm.i_l, &av.i_l, eq.i_l), (&cm.v_o, &av.v_o, eq.v_o)] {
        let n = a.len().min((b.len() - 1) / 2);
        let se: f64 = (10..n).map(|k| (a[k] - b[2 * k + 1]).powi(2)).sum();
        worst = worst.max((se / (n - 10) as f64).sqrt() / scale.abs());
    }
    Ok(worst)
}

/// Cycle average of the rectifier current by the midpoint rule.
pub fn numeric_conduction_average(p: &CircuitParams, d_rect: f64, n: usize) -> f64 {
    let s = SwitchSchedule { d_rect, d_dcdc: 0.5 };
    let h = p.period() / n as f64;
    (0..n).map(|k| rectifier_current((k as f64 + 0.5) * h, Rectifier::ModifiedActive, &s, p)).sum::<f64>() / n as f64
}

fn switched_fidelity(out: &mut CheckOutcome) -> Result<()> {
    let (p, u) = nominal();
    for top in Topology::ALL {
        let e = switched_vs_averaged(top, &p, &u, 0.02)?;
        out.check(format!("{} relative RMS deviation", top.slug()), e, 0.02, Tolerance::AtMost);
    }
    for d in [0.5, 0.6, 0.75, 0.9, 1.0] {
        let want = (1.0 - (2.0 * std::f64::consts::PI * d).cos()) * p.i_ls_amplitude / std::f64::consts::PI;
        let got = numeric_conduction_average(&p, d, 100_000);
        let tol = if want == 0.0 { Tolerance::Abs { tol: 1e-12 } } else { Tolerance::Rel { tol: 0.005 } };
        out.check(format!("conduction average at D={d} (A)"), got, want, tol);
    }
    out.note("runs start from a discharged circuit and last 20 ms; deviations are normalised by each state's equilibrium value");
    Ok(())
}

/// Sweep used for the fidelity comparison.
pub fn sysid_fidelity_grid() -> Vec<f64> {
    log_grid(30.0, 5000.0, 12)
}

/// Additional points above the fidelity band used for the phase-drop comparison.
pub fn sysid_extension_grid() -> Vec<f64> {
    log_grid(5000.0, 5e4, 6)[1..].to_vec()
}

fn sysid_bode_fidelity(out: &mut CheckOutcome) -> Result<()> {
    let (p, u) = nominal();
    let mut grid = sysid_fidelity_grid();
    let n_fid = grid.len();
    grid.extend(sysid_extension_grid());
    let mut by_top: Vec<Vec<SysidPoint>> = Vec::new();
    for c in [Rectifier::OriginalDiode, Rectifier::ModifiedActive] {
        let top = Topology::new(Converter::Buck, c);
        let pts = extract_frequency_response(top, &p, &SwitchSchedule::from_control(&u), &grid, &SysidOptions::default())?;
        let g = closed_form_tf(top, &p, &u)?;
        let (mut dm, mut dp) = (0.0f64, 0.0f64);
        let mut settled = true;
        for pt in &pts[..n_fid] {
            let a = g.at_jw(pt.omega);
            dm = dm.max((20.0 * (pt.response.norm() / a.norm()).log10()).abs());
            dp = dp.max((pt.response / a).arg().to_degrees().abs());
            settled &= pt.settled;
        }
        let s = top.slug();
        out.check(format!("{s} points in [30, 5000] rad/s"), n_fid as f64, 12.0, Tolerance::AtLeast);
        out.check(format!("{s} worst magnitude error (dB)"), dm, 1.0, Tolerance::AtMost);
        out.check(format!("{s} worst phase error (deg)"), dp, 5.0, Tolerance::AtMost);
        out.flag(format!("{s} all points settled"), settled, true);
        by_top.push(pts);
    }
    // per-frequency phase of original relative to modified, unwrapped along the sweep
    let mut diff: Vec<f64> = Vec::with_capacity(grid.len());
    for (a, b) in by_top[0].iter().zip(&by_top[1]) {
        let d = (a.response / b.response).arg().to_degrees();
        let d = match diff.last() {
            None => d,
            Some(prev) => d + 360.0 * ((prev - d) / 360.0).round(),
        };
        diff.push(d);
    }
    let drop = diff[0] - diff[diff.len() - 1];
    out.check("extra phase drop of original over modified (deg)", drop, 90.0, Tolerance::Abs { tol: 5.0 });
    let g_o = closed_form_tf(original(Converter::Buck), &p, &u)?;
    let g_m = closed_form_tf(modified(Converter::Buck), &p, &u)?;
    let rel = |w: f64| (g_o.at_jw(w) / g_m.at_jw(w)).arg().to_degrees();
    out.note(format!(
        "phase drop taken over {:.0}..{:.0} rad/s; analytic value {:.2} deg (over the 30..5000 band alone: {:.2} deg)",
        by_top[0][0].omega,
        by_top[0].last().unwrap().omega,
        rel(by_top[0][0].omega) - rel(by_top[0].last().unwrap().omega),
        rel(by_top[0][0].omega) - rel(by_top[0][n_fid - 1].omega)
    ));
    Ok(())
}

/// Worst relative entry error of `linearize` against central differences of
/// the averaged vector field.
pub fn linearization_error(top: Topology, p: &CircuitParams, u: &ControlInput) -> Result<f64> {
    let m = linearize(top, p, u)?;
    let x = equilibrium(top, p, u)?.to_array();
    let f = |x: &[f64; 3], u: &ControlInput| derivative_raw(top, p, u, x);
    let mut a_fd = [[0.0; 3]; 3];
    for j in 0..3 {
        let h = 1e-6 * x[j].abs().max(1e-3);
        let (mut xp, mut xm) = (x, x);
        xp[j] += h;
        xm[j] -= h;
        let (fp, fm) = (f(&xp, u), f(&xm, u));
        for i in 0..3 {
            a_fd[i][j] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    let d = u.active(top);
    let h = 1e-7;
    let up = u.with_active(top, d + h);
    let um = u.with_active(top, d - h);
    let (fp, fm) = (f(&x, &up), f(&x, &um));
    let b_fd: Vec<f64> = (0..3).map(|i| (fp[i] - fm[i]) / (2.0 * h)).collect();
    let scale_a = m.a.iter().flatten().fold(0.0f64, |s, v| s.max(v.abs()));
    let scale_b = m.b.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(f64::MIN_POSITIVE);
    let ea = (0..9).map(|k| (m.a[k / 3][k % 3] - a_fd[k / 3][k % 3]).abs()).fold(0.0, f64::max) / scale_a;
    let eb = (0..3).map(|i| (m.b[i] - b_fd[i]).abs()).fold(0.0, f64::max) / scale_b;
    Ok(ea.max(eb))
}

fn metric_values(m: &StepMetrics) -> [(&'static str, f64); 4] {
    [
        ("settling time", m.settling_time.unwrap_or(f64::NAN)),
        ("overshoot", m.overshoot),
        ("undershoot", m.undershoot),
        ("final value", m.final_value),
    ]
}

fn numerical_hygiene(out: &mut CheckOutcome) -> Result<()> {
    let (p, u) = nominal();
    let mut worst = 0.0f64;
    for top in Topology::ALL {
        worst = worst.max(linearization_error(top, &p, &u)?);
    }
    out.check("linearisation vs finite differences (relative)", worst, 1e-4, Tolerance::AtMost);

    let gains = scenarios::designed_margin_matched_gains(Converter::Buck)?;
    let mut cases: Vec<(String, Scenario)> = vec![
        ("original duty step".into(), scenarios::duty_step(Rectifier::OriginalDiode)),
        ("modified duty step".into(), scenarios::duty_step(Rectifier::ModifiedActive)),
    ];
    for top in [original(Converter::Buck), modified(Converter::Buck)] {
        let g = gains.for_topology(top);
        cases.push((format!("{} reference step", top.slug()), scenarios::reference_step(top, g)?));
        cases.push((format!("{} load step", top.slug()), scenarios::load_step(top, g)?));
    }
    let mut worst_change = 0.0f64;
    let mut worst_label = String::new();
    for (label, s) in cases {
        let h = crate::avgsim::default_step(&s.params);
        let mut fine = s.clone();
        fine.step = Some(h / 2.0);
        let a = step_metrics(&simulate(&s)?, scenarios::STEP_TIME, "v_o")?;
        let b = step_metrics(&simulate(&fine)?, scenarios::STEP_TIME, "v_o")?;
        for ((name, x), (_, y)) in metric_values(&a).into_iter().zip(metric_values(&b)) {
            // excursions below a microvolt are treated as absent
            let change = if x.abs().max(y.abs()) < 1e-6 { 0.0 } else { (x - y).abs() / x.abs().max(y.abs()) };
            if !(change <= worst_change) {
                worst_change = change;
                worst_label = format!("{label} {name}");
            }
        }
    }
    out.check("largest metric change when halving the step", worst_change, 0.005, Tolerance::AtMost);
    out.note(format!("largest change occurs in: {worst_label}"));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_rules() {
        assert!(Tolerance::Rel { tol: 0.01 }.accepts(1190.476, 1190.0));
        assert!(!Tolerance::Rel { tol: 0.01 }.accepts(793.65, 1190.0));
        assert!(Tolerance::AtLeast.accepts(3.2, 3.0));
        assert!(!Tolerance::AtMost.accepts(f64::NAN, 3.0));
        assert!(Tolerance::Flag.accepts(1.0, 1.0));
    }

    #[test]
    fn outcome_without_measurements_fails() {
        let o = CheckOutcome::new("x", "empty");
        assert!(!o.passed());
        assert!(o.summary_line().starts_with("[FAIL]"));
    }

    #[test]
    fn ids_are_unique() {
        let mut ids = check_ids();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), CHECKS.len());
        assert!(run_check("nope").is_none());
    }

    #[test]
    fn fast_checks_pass() {
        for id in ["rhp_zero_value", "margin_regression", "stability_stress"] {
            let o = run_check(id).unwrap();
            assert!(o.passed(), "{}", o.report());
        }
    }
}
