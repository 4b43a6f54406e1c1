//! Randomised invariants of the models, analyses and simulators.

use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

use wpr::avgsim::{linearized_step_response, simulate, Change, Scenario, StepKind};
use wpr::checks::numeric_conduction_average;
use wpr::freq::{closed_loop_poles, evaluate, log_grid, loop_gain, margins, nyquist_count, PIGains};
use wpr::model::{
    averaged_derivative, equilibrium, linearize, source_current, CircuitParams, ControlInput, Converter, Rectifier,
    StateVector, Topology,
};
use wpr::poly;
use wpr::scenarios::{margin_targets, modified, original, CONVERTERS};
use wpr::switched::{
    extract_frequency_response, rectifier_current, rectifier_state, simulate_switched, SwitchSchedule, SwitchedOptions,
    SysidOptions,
};
use wpr::tf::{closed_form_rhp_zeros, closed_form_tf, tf_from_state_space};
use wpr::tune::{tune_crossover, tune_margin_pair};

fn log_uniform(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo.ln()..hi.ln()).prop_map(f64::exp)
}

fn params() -> impl Strategy<Value = CircuitParams> {
    (
        log_uniform(0.2, 5.0),
        log_uniform(2e4, 1e6),
        log_uniform(5e-6, 200e-6),
        log_uniform(10e-6, 500e-6),
        log_uniform(5e-6, 200e-6),
        log_uniform(1.0, 100.0),
    )
        .prop_map(|(i, f, c_dc, l, c_o, r)| CircuitParams::new(i, f, c_dc, l, c_o, r).unwrap())
}

fn control() -> impl Strategy<Value = ControlInput> {
    (0.1..0.9f64, 0.505..0.99f64).prop_map(|(d, dr)| ControlInput::new(d, dr))
}

fn topology() -> impl Strategy<Value = Topology> {
    (0..6usize).prop_map(|k| Topology::ALL[k])
}

fn nominal_plant(top: Topology) -> wpr::tf::TransferFunction {
    closed_form_tf(top, &CircuitParams::nominal(), &ControlInput::nominal()).unwrap()
}

/// Eigenvalues of the companion matrix of a polynomial in descending powers.
fn companion_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        m[(0, j)] = -coeffs[j + 1] / coeffs[0];
    }
    for i in 1..n {
        m[(i, i - 1)] = 1.0;
    }
    m.complex_eigenvalues().iter().copied().collect()
}

fn energy(p: &CircuitParams, v_dc: f64, i_l: f64, v_o: f64) -> f64 {
    0.5 * (p.c_dc * v_dc * v_dc + p.l * i_l * i_l + p.c_o * v_o * v_o)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn equilibrium_is_stationary(top in topology(), p in params(), u in control()) {
        let x = equilibrium(top, &p, &u).unwrap();
        let dx = averaged_derivative(top, &p, &u, &x).unwrap();
        let i_scale = source_current(top, &p, &u).abs().max(1e-12);
        prop_assert!((dx.v_dc * p.c_dc / i_scale).abs() < 1e-9);
        prop_assert!((dx.v_o * p.c_o / i_scale).abs() < 1e-9);
        prop_assert!((dx.i_l * p.l / x.v_dc.abs().max(x.v_o.abs()).max(1e-12)).abs() < 1e-9);
    }

    #[test]
    fn jacobian_matches_central_differences(top in topology(), p in params(), u in control()) {
        let x0 = equilibrium(top, &p, &u).unwrap();
        let m = linearize(top, &p, &u).unwrap();
        let f = |u: &ControlInput, x: [f64; 3]| averaged_derivative(top, &p, u, &StateVector::from_array(x)).unwrap().to_array();
        let mut worst = 0.0f64;
        let scale_a = m.a.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs()));
        for j in 0..3 {
            let mut xp = x0.to_array();
            let mut xm = x0.to_array();
            let h = 1e-6 * xp[j].abs().max(1e-3);
            xp[j] += h;
            xm[j] -= h;
            let (fp, fm) = (f(&u, xp), f(&u, xm));
            for i in 0..3 {
                worst = worst.max(((fp[i] - fm[i]) / (2.0 * h) - m.a[i][j]).abs() / scale_a);
            }
        }
        let d = u.active(top);
        let h = 1e-6;
        let up = u.with_active(top, d + h);
        let um = u.with_active(top, d - h);
        let (fp, fm) = (f(&up, x0.to_array()), f(&um, x0.to_array()));
        let scale_b = m.b.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
        for i in 0..3 {
            worst = worst.max(((fp[i] - fm[i]) / (2.0 * h) - m.b[i]).abs() / scale_b);
        }
        prop_assert!(worst < 1e-4, "relative Jacobian error {worst}");
    }

    #[test]
    fn diode_source_ignores_duties(c in 0..3usize, p in params(), u in control(), v in control()) {
        let top = original(CONVERTERS[c]);
        prop_assert_eq!(source_current(top, &p, &u), source_current(top, &p, &v));
    }

    #[test]
    fn active_source_falls_from_half_to_full_duty(p in params(), a in 0.5..1.0f64, b in 0.5..1.0f64) {
        let top = modified(Converter::Buck);
        let at = |d: f64| source_current(top, &p, &ControlInput::new(0.5, d));
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(at(lo) >= at(hi));
        prop_assert!(at(0.5) >= at(lo));
        prop_assert!(at(1.0).abs() < 1e-12 * at(0.5));
    }

    #[test]
    fn closed_form_agrees_with_state_space(top in topology(), p in params(), u in control()) {
        let cf = closed_form_tf(top, &p, &u).unwrap();
        let ss = tf_from_state_space(&linearize(top, &p, &u).unwrap()).unwrap();
        prop_assert!(cf.max_relative_mismatch(&ss) < 1e-9);
        prop_assert!(cf.poles().unwrap().max_real() < 0.0);
        let numeric = cf.zeros().unwrap();
        prop_assert!(closed_form_rhp_zeros(top, &p, &u).unwrap().is_subset_of(&numeric, 1e-6));
    }

    #[test]
    fn active_rectifier_removes_zeros_and_keeps_poles(c in 0..3usize, p in params(), u in control()) {
        let orig = closed_form_tf(original(CONVERTERS[c]), &p, &u).unwrap();
        let modi = closed_form_tf(modified(CONVERTERS[c]), &p, &u).unwrap();
        prop_assert_eq!(modi.num_degree(), Some(0));
        prop_assert!(modi.zeros().unwrap().is_empty());
        let (a, b) = (orig.monic().den, modi.monic().den);
        prop_assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(y.abs()));
        }
    }

    #[test]
    fn roots_match_companion_eigenvalues(coeffs in prop::collection::vec(-10.0..10.0f64, 3..7), lead in 0.5..5.0f64) {
        let mut c = vec![lead];
        c.extend(coeffs);
        let mut got = poly::roots(&c).unwrap();
        let mut want = companion_roots(&c);
        prop_assert_eq!(got.len(), want.len());
        let key = |z: &Complex64| (z.re, z.im);
        got.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        want.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
        for w in &want {
            let d = got.iter().map(|g| (g - w).norm()).fold(f64::INFINITY, f64::min);
            prop_assert!(d <= 1e-6 * w.norm().max(1.0), "root {w} missing from {got:?}");
        }
    }

    #[test]
    fn frequency_response_of_a_product(top in topology(), p in params(), u in control(), kp in 0.0..1e-3f64, ki in 1e-2..10.0f64) {
        let g = closed_form_tf(top, &p, &u).unwrap();
        let c = PIGains::new(kp, ki).unwrap();
        let grid = log_grid(1.0, 1e6, 50);
        let fg = evaluate(&g, &grid).unwrap();
        let fc = evaluate(&c.as_tf(), &grid).unwrap();
        let fl = evaluate(&g.series(&c.as_tf()), &grid).unwrap();
        for k in 0..grid.len() {
            let want = fg.value[k] * fc.value[k];
            prop_assert!((fl.value[k] - want).norm() <= 1e-10 * want.norm());
        }
    }

    #[test]
    fn charge_balance_per_cycle_in_steady_state(c in 0..3usize, modified_rect in any::<bool>()) {
        let top = if modified_rect { modified(CONVERTERS[c]) } else { original(CONVERTERS[c]) };
        let p = CircuitParams::nominal();
        let s = SwitchSchedule::from_control(&ControlInput::nominal());
        let m = 8;
        let run = simulate_switched(top, &p, &s, 0.03, &SwitchedOptions { initial_state: None, samples_per_cycle: m }).unwrap();
        let v = &run.waveform.v_dc;
        let n = v.len() - 1;
        let (a, b) = (v[n - m], v[n]);
        prop_assert!((b - a).abs() < 1e-3 * b.abs(), "v_dc moved from {a} to {b} over one cycle");
    }

    #[test]
    fn conduction_average_matches_closed_form(p in params(), d in 0.5..1.0f64) {
        let want = (1.0 - (2.0 * std::f64::consts::PI * d).cos()) * p.i_ls_amplitude / std::f64::consts::PI;
        let n = 100_000;
        let got = numeric_conduction_average(&p, d, n);
        // each of the two window edges can misplace one sample
        let edge = 2.0 * p.i_ls_amplitude * (2.0 * std::f64::consts::PI * d).sin().abs() / n as f64;
        prop_assert!((got - want).abs() <= 5e-3 * want + edge + 1e-12, "{got} vs {want}");
    }

    #[test]
    fn gate_edges_sit_on_coil_current_zeros(p in params(), d in 0.505..0.995f64) {
        let s = SwitchSchedule { d_rect: d, d_dcdc: 0.5 };
        for edge in s.rectifier_rising_edges() {
            let before = rectifier_state(Rectifier::ModifiedActive, (edge - 1e-9).rem_euclid(1.0), d);
            let after = rectifier_state(Rectifier::ModifiedActive, edge + 1e-9, d);
            prop_assert_ne!(before, after);
            let t = edge * p.period();
            prop_assert!((2.0 * std::f64::consts::PI * p.f_switch * t).sin().abs() < 1e-9);
            let i_after = rectifier_current(t + 1e-6 * p.period(), Rectifier::ModifiedActive, &s, &p);
            prop_assert_eq!(i_after, 0.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn nyquist_verdict_matches_closed_loop_poles(top in topology(), p in params(), u in control(), w in log_uniform(10.0, 1e4), g in log_uniform(0.1, 30.0), r in 0.0..1e-3f64) {
        let plant = closed_form_tf(top, &p, &u).unwrap();
        let base = tune_crossover(&plant, w, 0.0).unwrap();
        let c = PIGains::new(r * base.ki * g, base.ki * g).unwrap();
        let poles = closed_loop_poles(&plant, &c).unwrap();
        let edge = poles.roots.iter().map(|z| z.re.abs() / z.norm().max(1e-300)).fold(f64::INFINITY, f64::min);
        prop_assume!(edge > 1e-6);
        let (_, stable) = nyquist_count(&loop_gain(&plant, &c).unwrap().tf).unwrap();
        prop_assert_eq!(stable, poles.max_real() < 0.0);
    }

    #[test]
    fn integral_gain_scaling_shifts_margins(k in 0..6usize, w in log_uniform(30.0, 1000.0), g in log_uniform(1.1, 10.0)) {
        let plant = nominal_plant(Topology::ALL[k]);
        let base = tune_crossover(&plant, w, 0.0).unwrap();
        let m1 = margins(&loop_gain(&plant, &base).unwrap()).unwrap();
        let m2 = margins(&loop_gain(&plant, &PIGains::new(0.0, base.ki * g).unwrap()).unwrap()).unwrap();
        if let (Some(a), Some(b)) = (m1.gain_margin_db, m2.gain_margin_db) {
            prop_assert!((a - b - 20.0 * g.log10()).abs() < 1e-6, "GM {a} -> {b} for g = {g}");
        }
        if let (Some(a), Some(b)) = (m1.crossover_rad_s, m2.crossover_rad_s) {
            prop_assert!(b > a);
        }
    }

    #[test]
    fn crossover_tuning_round_trip(k in 0..6usize, w in log_uniform(20.0, 3000.0), kp_frac in 0.0..0.9f64) {
        let plant = nominal_plant(Topology::ALL[k]);
        let kp = kp_frac / plant.at_jw(w).norm();
        let c = tune_crossover(&plant, w, kp).unwrap();
        let l = loop_gain(&plant, &c).unwrap();
        prop_assert!((l.tf.at_jw(w).norm() - 1.0).abs() < 1e-9);
        let m = margins(&l).unwrap();
        if m.crossover_count == 1 {
            prop_assert!((m.crossover_rad_s.unwrap() / w - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn margin_pair_tuning_round_trip(k in 0..6usize, gm in 6.0..20.0f64, pm in 30.0..80.0f64) {
        let plant = nominal_plant(Topology::ALL[k]);
        if let Ok(c) = tune_margin_pair(&plant, gm, pm) {
            let m = margins(&loop_gain(&plant, &c).unwrap()).unwrap();
            prop_assert!((m.gain_margin_db.unwrap() - gm).abs() < 1e-6);
            prop_assert!((m.phase_margin_deg.unwrap() - pm).abs() <= 0.1 + 1e-9);
            prop_assert!(m.nyquist_stable);
        }
    }

    #[test]
    fn passive_network_loses_energy(top in topology(), u in control(), v_dc in 0.0..20.0f64, i_l in -2.0..2.0f64, v_o in 0.0..20.0f64) {
        let p = CircuitParams { i_ls_amplitude: 0.0, ..CircuitParams::nominal() };
        let s = Scenario { initial_state: Some(StateVector::new(v_dc, i_l, v_o)), ..Scenario::open_loop(top, p, u, 0.005) };
        let ts = simulate(&s).unwrap();
        let e: Vec<f64> = (0..ts.len()).map(|k| energy(&p, ts.v_dc[k], ts.i_l[k], ts.v_o[k])).collect();
        for w in e.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-18, "energy rose from {} to {}", w[0], w[1]);
        }
    }

    #[test]
    fn small_reference_steps_follow_the_linear_model(k in 0..6usize, frac in prop_oneof![-0.01..-0.002f64, 0.002..0.01f64]) {
        let top = Topology::ALL[k];
        let p = CircuitParams::nominal();
        let u = if top.is_modified() { ControlInput::new(0.5, 0.75) } else { ControlInput::nominal() };
        let plant = closed_form_tf(top, &p, &u).unwrap();
        let gains = tune_crossover(&plant, 300.0, 0.0).unwrap();
        let v0 = equilibrium(top, &p, &u).unwrap().v_o;
        let (t_step, span) = (0.005, 0.03);
        let mut s = Scenario::open_loop(top, p, u, t_step + span)
            .with_event(t_step, Change::ReferenceStep { reference: v0 * (1.0 + frac) });
        s.gains = Some(gains);
        s.reference = Some(v0);
        let ts = simulate(&s).unwrap();
        prop_assert!(!ts.unstable && !ts.saturation_engaged);
        let k0 = ts.index_at(t_step).unwrap();
        let amp = v0 * frac;
        let lin = linearized_step_response(&plant, Some(&gains), StepKind::Reference, amp, span, ts.step()).unwrap();
        let n = lin.y.len().min(ts.len() - k0);
        let se: f64 = (0..n).map(|j| (ts.v_o[k0 + j] - ts.v_o[k0] - lin.y[j]).powi(2)).sum();
        let rms = (se / n as f64).sqrt() / amp.abs();
        prop_assert!(rms < 0.02, "{top}: relative RMS {rms}");
    }
}

#[test]
fn active_rectifier_allows_faster_crossover_at_matched_margins() {
    let p = CircuitParams::nominal();
    let u = ControlInput::nominal();
    for c in CONVERTERS {
        let (gm, pm) = margin_targets(c);
        let crossover = |top: Topology| {
            let plant = closed_form_tf(top, &p, &u).unwrap();
            let gains = tune_margin_pair(&plant, gm, pm).unwrap();
            margins(&loop_gain(&plant, &gains).unwrap()).unwrap().crossover_rad_s.unwrap()
        };
        let (wo, wm) = (crossover(original(c)), crossover(modified(c)));
        assert!(wm > wo, "{c:?}: original {wo} rad/s, modified {wm} rad/s");
    }
}

#[test]
fn rhp_zero_adds_ninety_degrees_of_phase_lag() {
    let grid = [10.0, 1e6];
    let drop = |top: Topology| {
        let r = evaluate(&nominal_plant(top), &grid).unwrap();
        r.phase_deg[0] - r.phase_deg[1]
    };
    let extra = drop(original(Converter::Buck)) - drop(modified(Converter::Buck));
    assert!((extra - 90.0).abs() <= 5.0, "extra phase drop {extra}");
}

#[test]
fn sysid_is_linear_in_the_perturbation_amplitude() {
    let top = original(Converter::Buck);
    let p = CircuitParams::nominal();
    let s = SwitchSchedule::from_control(&ControlInput::nominal());
    let omegas = [100.0, 1000.0, 5000.0];
    let run = |a: f64| {
        let opts = SysidOptions { relative_amplitude: a, ..SysidOptions::default() };
        extract_frequency_response(top, &p, &s, &omegas, &opts).unwrap()
    };
    let (full, half) = (run(0.01), run(0.005));
    for (a, b) in full.iter().zip(&half) {
        let db = 20.0 * (a.response.norm() / b.response.norm()).log10();
        assert!(db.abs() < 0.2, "{} rad/s: {db} dB", a.omega);
    }
}
