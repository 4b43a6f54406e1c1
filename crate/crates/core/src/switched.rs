//! Cycle-accurate switched simulation and sine-injection frequency-response
//! extraction.
//!
//! The receiver coil is an ideal sinusoidal current source `I sin(2πft)`.
//! Every switching edge of the rectifier and the converter falls on an
//! integration breakpoint, so each sub-interval is a linear circuit.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::model::{equilibrium, CircuitParams, ControlInput, Converter, Rectifier, StateVector, Topology};
use crate::ode::rk4_step;
use crate::series::TimeSeries;

/// Gate timing within one switching period. The rectifier gates rise at the
/// zero crossings of the coil current, half a period apart.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchSchedule {
    pub d_rect: f64,
    pub d_dcdc: f64,
}

impl SwitchSchedule {
    pub fn from_control(u: &ControlInput) -> Self {
        Self { d_rect: u.d_rect, d_dcdc: u.d_dcdc }
    }

    pub fn validate(&self, top: Topology) -> Result<()> {
        ControlInput::new(self.d_dcdc, self.d_rect).validate(top)
    }

    /// Rectifier turn-on instants within a period, as fractions of `T`.
    pub fn rectifier_rising_edges(&self) -> [f64; 2] {
        [0.0, 0.5]
    }
}

/// Discrete state of the bridge for the active rectifier: I and III
/// freewheel, II and IV deliver `|i_Ls|` to the DC link.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RectifierState {
    I,
    II,
    III,
    IV,
    Bridge,
}

impl RectifierState {
    pub fn label(&self) -> &'static str {
        match self {
            RectifierState::I => "I",
            RectifierState::II => "II",
            RectifierState::III => "III",
            RectifierState::IV => "IV",
            RectifierState::Bridge => "bridge",
        }
    }

    fn conducts(&self) -> bool {
        !matches!(self, RectifierState::I | RectifierState::III)
    }
}

fn phase_of(t: f64, p: &CircuitParams) -> f64 {
    let c = t * p.f_switch;
    c - c.floor()
}

pub fn rectifier_state(rect: Rectifier, theta: f64, d_rect: f64) -> RectifierState {
    match rect {
        Rectifier::OriginalDiode => RectifierState::Bridge,
        Rectifier::ModifiedActive => {
            if theta < d_rect - 0.5 {
                RectifierState::I
            } else if theta < 0.5 {
                RectifierState::II
            } else if theta < d_rect {
                RectifierState::III
            } else {
                RectifierState::IV
            }
        }
    }
}

/// Current delivered to the DC link at time `t` (A).
pub fn rectifier_current(t: f64, rect: Rectifier, s: &SwitchSchedule, p: &CircuitParams) -> f64 {
    let theta = phase_of(t, p);
    if rectifier_state(rect, theta, s.d_rect).conducts() {
        (p.i_ls_amplitude * (2.0 * PI * p.f_switch * t).sin()).abs()
    } else {
        0.0
    }
}

fn circuit_derivative(conv: Converter, p: &CircuitParams, on: bool, i_r: f64, x: &[f64; 3]) -> [f64; 3] {
    let [v_dc, i_l, v_o] = *x;
    let load = v_o / p.r_load;
    let (i_dc, di, i_out) = match (conv, on) {
        (Converter::Buck, true) => (i_l, v_dc - v_o, i_l),
        (Converter::Buck, false) => (0.0, -v_o, i_l),
        (Converter::BuckBoost, true) => (i_l, v_dc, 0.0),
        (Converter::BuckBoost, false) => (0.0, -v_o, i_l),
        (Converter::Boost, true) => (i_l, v_dc, 0.0),
        (Converter::Boost, false) => (i_l, v_dc - v_o, i_l),
    };
    [(i_r - i_dc) / p.c_dc, di / p.l, (i_out - load) / p.c_o]
}

/// Minimum number of integration sub-steps per switching period.
pub const SUBSTEPS_PER_CYCLE: usize = 400;

/// Step through one switching period starting at `t0 = n·T`. `visit` sees
/// every sub-step as `(t_start, t_end, x_start, x_end, converter_on, state)`.
fn run_cycle(
    top: Topology,
    p: &CircuitParams,
    s: &SwitchSchedule,
    t0: f64,
    x: &mut [f64; 3],
    extra_edges: &[f64],
    mut visit: impl FnMut(f64, f64, &[f64; 3], &[f64; 3], bool, RectifierState),
) {
    let period = p.period();
    let mut edges: Vec<f64> = vec![0.0, 1.0, 0.5, s.d_dcdc];
    if top.is_modified() {
        edges.push(s.d_rect - 0.5);
        edges.push(s.d_rect);
    }
    edges.extend(extra_edges.iter().copied().filter(|e| *e > 0.0 && *e < 1.0));
    edges.retain(|e| (0.0..=1.0).contains(e));
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let h_max = 1.0 / SUBSTEPS_PER_CYCLE as f64;
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a <= 1e-12 {
            continue;
        }
        let mid = 0.5 * (a + b);
        let on = mid < s.d_dcdc;
        let state = rectifier_state(top.rectifier, mid, s.d_rect);
        let conducting = state.conducts();
        let n = ((b - a) / h_max).ceil().max(1.0) as usize;
        let h = (b - a) * period / n as f64;
        let ta = t0 + a * period;
        let f = |t: f64, y: &[f64; 3]| {
            let i_r = if conducting { (p.i_ls_amplitude * (2.0 * PI * (t - t0) / period).sin()).abs() } else { 0.0 };
            circuit_derivative(top.converter, p, on, i_r, y)
        };
        for k in 0..n {
            let t = ta + k as f64 * h;
            let next = rk4_step(f, t, x, h);
            visit(t, t + h, x, &next, on, state);
            *x = next;
        }
    }
}

/// Options for [`simulate_switched`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchedOptions {
    /// Initial instantaneous state; defaults to the averaged equilibrium.
    pub initial_state: Option<StateVector>,
    /// Waveform samples per switching period.
    pub samples_per_cycle: usize,
}

impl Default for SwitchedOptions {
    fn default() -> Self {
        Self { initial_state: None, samples_per_cycle: 20 }
    }
}

/// Waveforms and per-period means of a switched run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchedRun {
    /// Instantaneous samples, with the discrete state in `mode`.
    pub waveform: TimeSeries,
    /// Period averages, time-stamped at the middle of each period.
    pub cycle_means: TimeSeries,
}

const RUNAWAY: f64 = 1e6;

pub fn simulate_switched(
    top: Topology,
    p: &CircuitParams,
    s: &SwitchSchedule,
    duration: f64,
    opts: &SwitchedOptions,
) -> Result<SwitchedRun> {
    p.validate()?;
    s.validate(top)?;
    ensure_finite("duration", duration)?;
    if duration <= 0.0 {
        return Err(Error::InvalidInput("duration must be positive".into()));
    }
    if opts.samples_per_cycle == 0 {
        return Err(Error::InvalidInput("samples_per_cycle must be positive".into()));
    }
    let x0 = match opts.initial_state {
        Some(x) => x,
        None => equilibrium(top, p, &ControlInput::new(s.d_dcdc, s.d_rect))?,
    };
    let period = p.period();
    let cycles = (duration / period).round().max(1.0) as usize;
    let m = opts.samples_per_cycle;
    let sample_edges: Vec<f64> = (1..m).map(|k| k as f64 / m as f64).collect();
    let duty = if top.is_modified() { s.d_rect } else { s.d_dcdc };
    let mut x = x0.to_array();

    let mut wave = TimeSeries { mode: Some(Vec::new()), ..Default::default() };
    let mut means = TimeSeries::default();
    let mut unstable = false;
    let push_sample = |wave: &mut TimeSeries, t: f64, x: &[f64; 3], label: String| {
        wave.push(t, x, duty, f64::NAN);
        wave.mode.as_mut().unwrap().push(label);
    };
    let label = |theta: f64| {
        let st = rectifier_state(top.rectifier, theta, s.d_rect);
        format!("{}-{}", st.label(), if theta < s.d_dcdc { "on" } else { "off" })
    };
    push_sample(&mut wave, 0.0, &x, label(0.0));
    for n in 0..cycles {
        let t0 = n as f64 * period;
        let mut acc = [0.0; 3];
        let mut samples: Vec<(f64, [f64; 3])> = Vec::with_capacity(m);
        run_cycle(top, p, s, t0, &mut x, &sample_edges, |ta, tb, xa, xb, _, _| {
            for i in 0..3 {
                acc[i] += 0.5 * (tb - ta) * (xa[i] + xb[i]);
            }
            let k = ((tb - t0) / period * m as f64).round();
            if ((tb - t0) / period * m as f64 - k).abs() < 1e-6 && k >= 1.0 {
                samples.push((tb, *xb));
            }
        });
        for (t, xs) in samples {
            let theta = phase_of(t, p);
            push_sample(&mut wave, t, &xs, label(theta));
        }
        let mean = [acc[0] / period, acc[1] / period, acc[2] / period];
        means.push(t0 + 0.5 * period, &mean, duty, f64::NAN);
        if x.iter().any(|v| !v.is_finite() || v.abs() > RUNAWAY) {
            unstable = true;
            break;
        }
    }
    wave.unstable = unstable;
    means.unstable = unstable;
    Ok(SwitchedRun { waveform: wave, cycle_means: means })
}

/// One identified frequency point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SysidPoint {
    /// Requested frequency (rad/s).
    pub omega_requested: f64,
    /// Frequency actually injected: `2πf/M` for an integer `M`.
    pub omega: f64,
    pub response: Complex64,
    /// Relative change of the mean output between the two measured periods.
    pub drift: f64,
    /// Periodic steady state was reached (drift below 0.1%) and the run stayed finite.
    pub settled: bool,
}

/// Identification settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SysidOptions {
    /// Perturbation amplitude as a fraction of the nominal actuated duty.
    pub relative_amplitude: f64,
    /// Perturbation periods averaged by the projection.
    pub measure_periods: usize,
    /// Minimum perturbation periods discarded before measuring.
    pub min_discard_periods: usize,
    /// Discard at least this many time constants of the slowest plant mode.
    pub decay_time_constants: f64,
}

impl Default for SysidOptions {
    fn default() -> Self {
        Self { relative_amplitude: 0.01, measure_periods: 2, min_discard_periods: 2, decay_time_constants: 12.0 }
    }
}

/// Perturbation-extracted frequency response of `v_o` to the actuated duty.
pub fn extract_frequency_response(
    top: Topology,
    p: &CircuitParams,
    s: &SwitchSchedule,
    omegas: &[f64],
    opts: &SysidOptions,
) -> Result<Vec<SysidPoint>> {
    p.validate()?;
    s.validate(top)?;
    let u = ControlInput::new(s.d_dcdc, s.d_rect);
    let nominal = u.active(top);
    let amplitude = opts.relative_amplitude * nominal;
    if !(amplitude > 0.0) || opts.measure_periods == 0 {
        return Err(Error::InvalidInput("perturbation amplitude and measured periods must be positive".into()));
    }
    let w_switch = 2.0 * PI * p.f_switch;
    for &w in omegas {
        ensure_finite("omega", w)?;
        if w <= 0.0 || w > 0.25 * w_switch {
            return Err(Error::InvalidInput(format!("perturbation frequency {w} rad/s must lie in (0, πf/2]")));
        }
    }
    let lin = crate::model::linearize(top, p, &u)?;
    let slowest = crate::tf::tf_from_state_space(&lin)?
        .poles()?
        .roots
        .iter()
        .map(|z| -z.re)
        .fold(f64::INFINITY, f64::min);
    if !(slowest > 0.0) {
        return Err(Error::Numerical("averaged plant is not asymptotically stable".into()));
    }
    let x0 = equilibrium(top, p, &u)?;
    omegas
        .par_iter()
        .map(|&w| sysid_point(top, p, s, x0, w, amplitude, slowest, opts))
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn sysid_point(
    top: Topology,
    p: &CircuitParams,
    s: &SwitchSchedule,
    x0: StateVector,
    omega_req: f64,
    amplitude: f64,
    slowest_decay: f64,
    opts: &SysidOptions,
) -> Result<SysidPoint> {
    let period = p.period();
    let m = (2.0 * PI * p.f_switch / omega_req).round().max(4.0) as usize;
    let omega = 2.0 * PI * p.f_switch / m as f64;
    let pert_period = m as f64 * period;
    let discard_periods = opts
        .min_discard_periods
        .max((opts.decay_time_constants / slowest_decay / pert_period).ceil() as usize);
    let total = discard_periods + opts.measure_periods;
    let nominal = if top.is_modified() { s.d_rect } else { s.d_dcdc };

    let mut x = x0.to_array();
    let mut y_acc = Complex64::new(0.0, 0.0);
    let mut u_acc = Complex64::new(0.0, 0.0);
    let mut means = vec![0.0; opts.measure_periods];
    let mut finite = true;
    'outer: for per in 0..total {
        let measuring = per >= discard_periods;
        for c in 0..m {
            let n = per * m + c;
            let t0 = n as f64 * period;
            let d = nominal + amplitude * (omega * (t0 + 0.5 * period)).sin();
            let mut sched = *s;
            if top.is_modified() {
                sched.d_rect = d.clamp(0.5, 1.0);
            } else {
                sched.d_dcdc = d;
            }
            let applied = if top.is_modified() { sched.d_rect } else { sched.d_dcdc } - nominal;
            let mut cyc_mean = 0.0;
            run_cycle(top, p, &sched, t0, &mut x, &[], |ta, tb, xa, xb, _, _| {
                let h = tb - ta;
                cyc_mean += 0.5 * h * (xa[2] + xb[2]);
                if measuring {
                    let ea = Complex64::from_polar(1.0, -omega * ta);
                    let eb = Complex64::from_polar(1.0, -omega * tb);
                    y_acc += 0.5 * h * (ea * xa[2] + eb * xb[2]);
                    u_acc += 0.5 * h * (ea + eb) * applied;
                }
            });
            if measuring {
                means[per - discard_periods] += cyc_mean;
            }
            if x.iter().any(|v| !v.is_finite() || v.abs() > RUNAWAY) {
                finite = false;
                break 'outer;
            }
        }
    }
    let response = if finite && u_acc.norm() > 0.0 { y_acc / u_acc } else { Complex64::new(f64::NAN, f64::NAN) };
    let drift = if means.len() >= 2 {
        let (a, b) = (means[0], means[means.len() - 1]);
        (b - a).abs() / a.abs().max(f64::MIN_POSITIVE)
    } else {
        0.0
    };
    Ok(SysidPoint { omega_requested: omega_req, omega, response, drift, settled: finite && drift < 1e-3 })
}

/// Unwrapped phase (degrees) of identified points, anchored so the lowest
/// frequency lies in `(−90°, 270°]`.
pub fn sysid_phase_deg(points: &[SysidPoint]) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(points.len());
    for pt in points {
        let ph = pt.response.arg().to_degrees();
        let v = match out.last() {
            None => {
                if ph <= -90.0 {
                    ph + 360.0
                } else {
                    ph
                }
            }
            Some(prev) => ph + 360.0 * ((prev - ph) / 360.0).round(),
        };
        out.push(v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const BUCK_M: Topology = Topology::new(Converter::Buck, Rectifier::ModifiedActive);
    const BUCK_O: Topology = Topology::new(Converter::Buck, Rectifier::OriginalDiode);

    fn cycle_average(d: f64) -> f64 {
        let p = CircuitParams::nominal();
        let s = SwitchSchedule { d_rect: d, d_dcdc: 0.5 };
        let n = 200_000;
        let h = p.period() / n as f64;
        (0..n).map(|k| rectifier_current((k as f64 + 0.5) * h, Rectifier::ModifiedActive, &s, &p)).sum::<f64>() / n as f64
    }

    #[test]
    fn conduction_averages() {
        assert!((cycle_average(0.5) - 2.0 / PI).abs() < 1e-6);
        assert!((cycle_average(0.75) - 1.0 / PI).abs() < 1e-6);
        assert!(cycle_average(1.0).abs() < 1e-12);
    }

    #[test]
    fn states_follow_the_schedule() {
        assert_eq!(rectifier_state(Rectifier::ModifiedActive, 0.05, 0.6), RectifierState::I);
        assert_eq!(rectifier_state(Rectifier::ModifiedActive, 0.2, 0.6), RectifierState::II);
        assert_eq!(rectifier_state(Rectifier::ModifiedActive, 0.55, 0.6), RectifierState::III);
        assert_eq!(rectifier_state(Rectifier::ModifiedActive, 0.7, 0.6), RectifierState::IV);
        assert_eq!(rectifier_state(Rectifier::OriginalDiode, 0.7, 0.6), RectifierState::Bridge);
        // rising edges sit on current zero crossings
        let p = CircuitParams::nominal();
        let s = SwitchSchedule { d_rect: 0.6, d_dcdc: 0.5 };
        for e in s.rectifier_rising_edges() {
            assert!((2.0 * PI * e).sin().abs() < 1e-15);
        }
        assert!(rectifier_current(0.0, Rectifier::OriginalDiode, &s, &p).abs() < 1e-15);
    }

    #[test]
    fn full_duty_from_rest_stays_at_rest() {
        let s = SwitchSchedule { d_rect: 1.0, d_dcdc: 0.5 };
        let opts = SwitchedOptions { initial_state: Some(StateVector::ZERO), samples_per_cycle: 4 };
        let run = simulate_switched(BUCK_M, &CircuitParams::nominal(), &s, 1e-3, &opts).unwrap();
        assert!(run.waveform.v_o.iter().chain(run.waveform.v_dc.iter()).all(|v| *v == 0.0));
    }

    #[test]
    fn steady_state_mean_near_equilibrium() {
        let p = CircuitParams::nominal();
        let u = ControlInput::nominal();
        let run = simulate_switched(BUCK_O, &p, &SwitchSchedule::from_control(&u), 2e-3, &SwitchedOptions::default())
            .unwrap();
        let eq = equilibrium(BUCK_O, &p, &u).unwrap();
        let last = *run.cycle_means.v_o.last().unwrap();
        assert!((last - eq.v_o).abs() / eq.v_o < 0.02, "{last} vs {}", eq.v_o);
        let modes = run.waveform.mode.as_ref().unwrap();
        assert_eq!(modes.len(), run.waveform.len());
        assert!(modes.iter().any(|m| m == "bridge-on") && modes.iter().any(|m| m == "bridge-off"));
    }

    #[test]
    fn sysid_rejects_fast_perturbation() {
        let p = CircuitParams::nominal();
        let s = SwitchSchedule::from_control(&ControlInput::nominal());
        assert!(extract_frequency_response(BUCK_M, &p, &s, &[3e5], &SysidOptions::default()).is_err());
    }

    #[test]
    fn phase_anchor() {
        let pt = |deg: f64| SysidPoint {
            omega_requested: 1.0,
            omega: 1.0,
            response: Complex64::from_polar(1.0, deg.to_radians()),
            drift: 0.0,
            settled: true,
        };
        let ph = sysid_phase_deg(&[pt(-179.0), pt(170.0), pt(10.0)]);
        assert!((ph[0] - 181.0).abs() < 1e-9);
        assert!((ph[1] - 170.0).abs() < 1e-9);
        assert!((ph[2] - 10.0).abs() < 1e-9);
    }
}
