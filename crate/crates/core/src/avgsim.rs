//! Closed-loop simulation of the nonlinear averaged models and step-response
//! metrics.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::freq::{closed_loop_poles, loop_gain, loop_polarity, PIGains};
use crate::model::{derivative_raw, equilibrium, CircuitParams, ControlInput, StateVector, Topology};
use crate::ode::{rk4_step, rk4_step_dyn};
use crate::series::TimeSeries;
use crate::tf::{closed_form_tf, TransferFunction};

/// A change applied during a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Change {
    ReferenceStep { reference: f64 },
    LoadStep { r_load: f64 },
    /// New nominal value of the actuated duty ratio.
    DutyStep { duty: f64 },
    GainStep { kp: f64, ki: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: f64,
    pub change: Change,
}

/// One simulation run. Without gains the run is open loop until a
/// [`Change::GainStep`] closes the loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub topology: Topology,
    pub params: CircuitParams,
    pub control: ControlInput,
    #[serde(default)]
    pub gains: Option<PIGains>,
    #[serde(default)]
    pub events: Vec<Event>,
    pub duration: f64,
    /// Output voltage set point; defaults to the initial equilibrium output.
    #[serde(default)]
    pub reference: Option<f64>,
    /// Defaults to the equilibrium of the initial inputs.
    #[serde(default)]
    pub initial_state: Option<StateVector>,
    /// Integration step; defaults to `min(1 µs, T/10)`.
    #[serde(default)]
    pub step: Option<f64>,
    /// Output sample spacing; defaults to ten default integration steps.
    #[serde(default)]
    pub sample_interval: Option<f64>,
}

/// Limits applied to the actuated duty ratio.
pub fn duty_limits(top: Topology) -> (f64, f64) {
    if top.is_modified() {
        (0.5, 1.0)
    } else {
        (1e-3, 1.0 - 1e-3)
    }
}

pub fn default_step(p: &CircuitParams) -> f64 {
    (1e-6f64).min(p.period() / 10.0)
}

/// Beyond this the state is treated as diverging.
const RUNAWAY: f64 = 1e6;

impl Scenario {
    pub fn open_loop(topology: Topology, params: CircuitParams, control: ControlInput, duration: f64) -> Self {
        Self {
            topology,
            params,
            control,
            gains: None,
            events: Vec::new(),
            duration,
            reference: None,
            initial_state: None,
            step: None,
            sample_interval: None,
        }
    }

    pub fn with_event(mut self, time: f64, change: Change) -> Self {
        self.events.push(Event { time, change });
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.control.validate(self.topology)?;
        ensure_finite("duration", self.duration)?;
        if self.duration <= 0.0 {
            return Err(Error::InvalidInput("duration must be positive".into()));
        }
        if let Some(g) = &self.gains {
            g.validate()?;
        }
        if let Some(r) = self.reference {
            ensure_finite("reference", r)?;
        }
        for w in self.events.windows(2) {
            if w[1].time < w[0].time {
                return Err(Error::InvalidInput("events must be in time order".into()));
            }
        }
        for e in &self.events {
            ensure_finite("event time", e.time)?;
            if e.time < 0.0 || e.time > self.duration {
                return Err(Error::InvalidInput(format!("event at {} s lies outside [0, {}]", e.time, self.duration)));
            }
            match e.change {
                Change::ReferenceStep { reference } => ensure_finite("reference", reference)?,
                Change::LoadStep { r_load } => self.params.with_load(r_load).validate()?,
                Change::DutyStep { duty } => self.control.with_active(self.topology, duty).validate(self.topology)?,
                Change::GainStep { kp, ki } => PIGains::new(kp, ki).map(|_| ())?,
            }
        }
        for (name, v) in [("step", self.step), ("sample_interval", self.sample_interval)] {
            if let Some(v) = v {
                ensure_finite(name, v)?;
                if v <= 0.0 {
                    return Err(Error::InvalidInput(format!("{name} must be positive")));
                }
            }
        }
        Ok(())
    }

    fn closes_loop(&self) -> bool {
        self.gains.is_some() || self.events.iter().any(|e| matches!(e.change, Change::GainStep { .. }))
    }
}

struct Loop {
    top: Topology,
    params: CircuitParams,
    control: ControlInput,
    gains: Option<PIGains>,
    reference: f64,
    sigma: f64,
    limits: (f64, f64),
}

impl Loop {
    /// Commanded duty, clamped duty, and whether the integrator should hold.
    fn actuation(&self, x: &[f64; 4]) -> (f64, f64, bool) {
        let nominal = self.control.active(self.top);
        let Some(g) = self.gains else {
            return (nominal, nominal, true);
        };
        let e = self.reference - x[2];
        let cmd = nominal + self.sigma * (g.kp * e + x[3]);
        let (lo, hi) = self.limits;
        let clamped = cmd.clamp(lo, hi);
        let push = self.sigma * e;
        let hold = (cmd > hi && push > 0.0) || (cmd < lo && push < 0.0);
        (cmd, clamped, hold)
    }

    fn derivative(&self, x: &[f64; 4]) -> [f64; 4] {
        let (_, duty, hold) = self.actuation(x);
        let u = self.control.with_active(self.top, duty);
        let d = derivative_raw(self.top, &self.params, &u, &[x[0], x[1], x[2]]);
        let dz = match self.gains {
            Some(g) if !hold => g.ki * (self.reference - x[2]),
            _ => 0.0,
        };
        [d[0], d[1], d[2], dz]
    }
}

/// Runs the scenario with fixed-step RK4.
pub fn simulate(s: &Scenario) -> Result<TimeSeries> {
    s.validate()?;
    let top = s.topology;
    let h = s.step.unwrap_or_else(|| default_step(&s.params));
    let sample = s.sample_interval.unwrap_or(10.0 * default_step(&s.params));
    let stride = (sample / h).round().max(1.0);
    if ((stride * h) - sample).abs() > 1e-6 * sample {
        return Err(Error::InvalidInput(format!("sample interval {sample} is not a multiple of the step {h}")));
    }
    let stride = stride as usize;
    let n_steps = (s.duration / h).round() as usize;

    let x0 = match s.initial_state {
        Some(x) => x,
        None => equilibrium(top, &s.params, &s.control)?,
    };
    let sigma = if s.closes_loop() {
        let plant = closed_form_tf(top, &s.params, &s.control)?;
        loop_polarity(&plant)? as f64
    } else {
        1.0
    };
    let mut lp = Loop {
        top,
        params: s.params,
        control: s.control,
        gains: s.gains,
        reference: s.reference.unwrap_or(x0.v_o),
        sigma,
        limits: duty_limits(top),
    };

    let mut x = [x0.v_dc, x0.i_l, x0.v_o, 0.0];
    let mut out = TimeSeries::default();
    let mut next_event = 0;
    for k in 0..=n_steps {
        let t = k as f64 * h;
        while next_event < s.events.len() && (s.events[next_event].time / h).round() as usize <= k {
            match s.events[next_event].change {
                Change::ReferenceStep { reference } => lp.reference = reference,
                Change::LoadStep { r_load } => lp.params = lp.params.with_load(r_load),
                Change::DutyStep { duty } => lp.control = lp.control.with_active(top, duty),
                Change::GainStep { kp, ki } => lp.gains = Some(PIGains::new(kp, ki)?),
            }
            next_event += 1;
        }
        let (cmd, duty, _) = lp.actuation(&x);
        if lp.gains.is_some() && cmd != duty {
            out.saturation_engaged = true;
        }
        if k % stride == 0 {
            out.push(t, &[x[0], x[1], x[2]], duty, lp.reference);
        }
        if k == n_steps {
            break;
        }
        x = rk4_step(|_, x| lp.derivative(x), t, &x, h);
        if x.iter().any(|v| !v.is_finite() || v.abs() > RUNAWAY) {
            out.unstable = true;
            break;
        }
    }
    Ok(out)
}

/// Step-response figures of merit. Excursions are in the channel's units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub initial: f64,
    pub final_value: f64,
    /// Time from the event until the channel stays within 2% of the step
    /// magnitude around its final value; `None` when it never settles.
    pub settling_time: Option<f64>,
    /// Peak above both the initial and the final value.
    pub overshoot: f64,
    /// Dip below both the initial and the final value.
    pub undershoot: f64,
    /// The channel first moves against its net change by more than 2% of it.
    pub inverse_response: bool,
    /// Largest excursion against the net change.
    pub wrong_way: f64,
    /// `reference − final` for `v_o`, zero for other channels.
    pub steady_state_error: f64,
}

pub fn step_metrics(ts: &TimeSeries, event_time: f64, channel: &str) -> Result<StepMetrics> {
    let y = ts.channel(channel).ok_or_else(|| Error::InvalidInput(format!("unknown channel `{channel}`")))?;
    let k0 = ts
        .index_at(event_time)
        .ok_or_else(|| Error::InvalidInput(format!("event time {event_time} precedes the series")))?;
    let y0 = y[k0];
    let post = &y[k0..];
    let tpost = &ts.t[k0..];
    let yf = *post.last().unwrap();
    let delta = yf - y0;
    let hi = post.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = post.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = y0.abs().max(yf.abs()).max(1.0);
    let negligible = delta.abs() <= 1e-9 * scale;
    let magnitude = if negligible { (hi - y0).abs().max((lo - y0).abs()) } else { delta.abs() };

    let band = 0.02 * magnitude;
    let settling_time = if magnitude == 0.0 {
        Some(0.0)
    } else {
        // the last tenth of the window must sit inside the band
        let tail = post.len() - post.len() / 10 - 1;
        if post[tail..].iter().any(|v| (v - yf).abs() > band) {
            None
        } else {
            let last_out = post.iter().rposition(|v| (v - yf).abs() > band);
            Some(match last_out {
                None => 0.0,
                Some(i) => tpost[(i + 1).min(post.len() - 1)] - event_time,
            })
        }
    };
    let wrong_way = if negligible {
        0.0
    } else if delta > 0.0 {
        (y0 - lo).max(0.0)
    } else {
        (hi - y0).max(0.0)
    };
    let steady_state_error = if channel == "v_o" { ts.reference.last().copied().unwrap_or(yf) - yf } else { 0.0 };
    Ok(StepMetrics {
        initial: y0,
        final_value: yf,
        settling_time,
        overshoot: (hi - y0.max(yf)).max(0.0),
        undershoot: (y0.min(yf) - lo).max(0.0),
        inverse_response: !negligible && wrong_way > 0.02 * delta.abs(),
        wrong_way,
        steady_state_error,
    })
}

/// Which input of the linear model receives the step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// Closed-loop reference step through `T/(1+T)`.
    Reference,
    /// Open-loop step of the actuated duty through the plant.
    Duty,
}

/// Small-signal step response (deviation from the operating point).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearStep {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    /// The response diverges (closed loop not strictly stable).
    pub unstable: bool,
}

/// Step response of the plant (open loop) or of the loop closed with `c`.
pub fn linearized_step_response(
    plant: &TransferFunction,
    c: Option<&PIGains>,
    kind: StepKind,
    amplitude: f64,
    duration: f64,
    dt: f64,
) -> Result<LinearStep> {
    ensure_finite("amplitude", amplitude)?;
    if !(duration > 0.0 && dt > 0.0 && dt.is_finite() && duration.is_finite()) {
        return Err(Error::InvalidInput("duration and dt must be positive".into()));
    }
    let (tf, unstable) = match kind {
        StepKind::Duty => (plant.clone(), plant.poles()?.max_real() >= 0.0),
        StepKind::Reference => {
            let c = c.ok_or_else(|| Error::InvalidInput("reference step needs PI gains".into()))?;
            let l = loop_gain(plant, c)?;
            (l.tf.feedback_unity(), closed_loop_poles(plant, c)?.max_real() >= 0.0)
        }
    };
    let mut out = step_response(&tf, amplitude, duration, dt)?;
    out.unstable |= unstable;
    Ok(out)
}

/// Step response of an arbitrary proper rational function, integrated in
/// controllable canonical form.
pub fn step_response(tf: &TransferFunction, amplitude: f64, duration: f64, dt: f64) -> Result<LinearStep> {
    let m = tf.monic();
    let n = m.den.len() - 1;
    if m.num.len() > n + 1 {
        return Err(Error::InvalidInput("transfer function must be proper".into()));
    }
    let mut b = vec![0.0; n + 1 - m.num.len()];
    b.extend_from_slice(&m.num);
    let a = &m.den;
    let d = b[0];
    // y = Σ c_k x_{n−k} + d·u with c_k = b_k − d·a_k
    let cvec: Vec<f64> = (1..=n).map(|k| b[k] - d * a[k]).collect();
    let output = |x: &[f64]| (1..=n).map(|k| cvec[k - 1] * x[n - k]).sum::<f64>() + d * amplitude;
    let f = |_: f64, x: &[f64]| {
        let mut dx = vec![0.0; n];
        if n > 0 {
            dx[..n - 1].copy_from_slice(&x[1..n]);
            dx[n - 1] = amplitude - (1..=n).map(|k| a[k] * x[n - k]).sum::<f64>();
        }
        dx
    };
    let steps = (duration / dt).round() as usize;
    let mut x = vec![0.0; n];
    let mut out = LinearStep { t: Vec::with_capacity(steps + 1), y: Vec::with_capacity(steps + 1), unstable: false };
    for k in 0..=steps {
        out.t.push(k as f64 * dt);
        out.y.push(output(&x));
        if k == steps {
            break;
        }
        x = rk4_step_dyn(f, k as f64 * dt, &x, dt);
        if x.iter().any(|v| !v.is_finite()) {
            out.unstable = true;
            break;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Converter, Rectifier};

    const BUCK_O: Topology = Topology::new(Converter::Buck, Rectifier::OriginalDiode);
    const BUCK_M: Topology = Topology::new(Converter::Buck, Rectifier::ModifiedActive);

    #[test]
    fn equilibrium_start_stays_put() {
        let s = Scenario::open_loop(BUCK_O, CircuitParams::nominal(), ControlInput::nominal(), 0.01);
        let ts = simulate(&s).unwrap();
        let x = equilibrium(BUCK_O, &s.params, &s.control).unwrap();
        assert!(ts.v_o.iter().all(|v| (v - x.v_o).abs() < 1e-6));
        assert!(ts.v_dc.iter().all(|v| (v - x.v_dc).abs() < 1e-6));
        assert!(!ts.unstable);
        assert_eq!(ts.len(), 1001);
    }

    #[test]
    fn closed_loop_holds_equilibrium_and_tracks() {
        let mut s = Scenario::open_loop(BUCK_M, CircuitParams::nominal(), ControlInput::nominal(), 0.05);
        s.gains = Some(PIGains::new(0.0, 179.753).unwrap());
        let x = equilibrium(BUCK_M, &s.params, &s.control).unwrap();
        let s = s.with_event(0.005, Change::ReferenceStep { reference: x.v_o * 0.98 });
        let ts = simulate(&s).unwrap();
        let m = step_metrics(&ts, 0.005, "v_o").unwrap();
        assert!(m.steady_state_error.abs() < 1e-3, "{m:?}");
        assert!(m.settling_time.is_some());
        assert!(!ts.saturation_engaged);
    }

    #[test]
    fn saturation_is_reported() {
        let mut s = Scenario::open_loop(BUCK_M, CircuitParams::nominal(), ControlInput::nominal(), 0.02);
        s.gains = Some(PIGains::new(0.0, 179.753).unwrap());
        // far above the reachable output
        let s = s.with_event(0.001, Change::ReferenceStep { reference: 50.0 });
        let ts = simulate(&s).unwrap();
        assert!(ts.saturation_engaged);
        assert!(ts.duty.iter().all(|d| (0.5..=1.0).contains(d)));
        assert!(!ts.unstable);
    }

    #[test]
    fn constant_series_metrics() {
        let mut ts = TimeSeries::default();
        for k in 0..100 {
            ts.push(k as f64 * 1e-3, &[1.0, 1.0, 2.0], 0.5, 2.0);
        }
        let m = step_metrics(&ts, 0.01, "v_o").unwrap();
        assert_eq!(m.settling_time, Some(0.0));
        assert_eq!(m.overshoot, 0.0);
        assert_eq!(m.undershoot, 0.0);
        assert!(!m.inverse_response);
    }

    #[test]
    fn first_order_settling_time() {
        // y = 1 − e^{−t/τ}; 2% band reached at τ·ln 50
        let tau = 0.01;
        let mut ts = TimeSeries::default();
        for k in 0..=20000 {
            let t = k as f64 * 1e-5;
            let y = 1.0 - (-t / tau).exp();
            ts.push(t, &[0.0, 0.0, y], 0.0, 1.0);
        }
        let m = step_metrics(&ts, 0.0, "v_o").unwrap();
        let want = tau * 50f64.ln();
        assert!((m.settling_time.unwrap() - want).abs() < 2e-4, "{m:?}");
        assert!(!m.inverse_response);
    }

    #[test]
    fn events_out_of_range_are_rejected() {
        let s = Scenario::open_loop(BUCK_O, CircuitParams::nominal(), ControlInput::nominal(), 0.01)
            .with_event(0.02, Change::DutyStep { duty: 0.6 });
        assert!(simulate(&s).is_err());
        let s = Scenario::open_loop(BUCK_O, CircuitParams::nominal(), ControlInput::nominal(), 0.01)
            .with_event(0.005, Change::DutyStep { duty: 1.2 });
        assert!(simulate(&s).is_err());
    }

    #[test]
    fn linear_step_of_first_order() {
        let tf = TransferFunction::new(vec![2.0], vec![1.0, 4.0]).unwrap();
        let r = step_response(&tf, 1.0, 6.0, 1e-3).unwrap();
        let y = *r.y.last().unwrap();
        assert!((y - 0.5).abs() < 1e-6);
        let t: f64 = 0.25;
        let k = (t / 1e-3) as usize;
        assert!((r.y[k] - 0.5 * (1.0 - (-4.0 * t).exp())).abs() < 1e-9);
    }

    #[test]
    fn unity_plant_integral_loop_has_no_steady_error() {
        let g = TransferFunction::constant(1.0).unwrap();
        let r = linearized_step_response(&g, Some(&PIGains::new(0.0, 50.0).unwrap()), StepKind::Reference, 1.0, 0.5, 1e-4)
            .unwrap();
        assert!((r.y.last().unwrap() - 1.0).abs() < 1e-9);
        assert!(!r.unstable);
    }
}
