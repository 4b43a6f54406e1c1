//! Data behind the published plots, one CSV per figure.
//!
//! Every file starts with `# reference:` and `# tolerance:` comment lines,
//! followed by `# measured:` lines where a figure has headline numbers.
//! Paired plots use the long layout `panel,x,original,modified`.

use super::config::RunConfig;
use super::run::sysid_rows;
use super::{Artifact, CliError, Format};
use crate::avgsim::{linearized_step_response, simulate, step_metrics, Change, Scenario, StepKind, StepMetrics};
use crate::checks::{sysid_extension_grid, sysid_fidelity_grid};
use crate::freq::{evaluate, log_grid, loop_gain, margins, MarginReport, PIGains};
use crate::model::{CircuitParams, ControlInput, Converter, Rectifier, Topology};
use crate::scenarios::{self, converter_slug, modified, original, CONVERTERS, STEP_TIME};
use crate::series::{fmt_num, TimeSeries};
use crate::switched::{extract_frequency_response, SwitchSchedule};
use crate::tf::{closed_form_tf, TransferFunction};

const LONG_HEADER: &str = "panel,x,original,modified";

/// One emitted figure.
#[derive(Debug, Clone, PartialEq)]
pub struct Figure {
    pub file: String,
    pub reference: String,
    pub tolerance: String,
    pub measured: Vec<String>,
    pub header: String,
    pub rows: Vec<String>,
}

impl Figure {
    fn new(file: impl Into<String>, reference: impl Into<String>, tolerance: impl Into<String>) -> Self {
        Self {
            file: file.into(),
            reference: reference.into(),
            tolerance: tolerance.into(),
            measured: Vec::new(),
            header: LONG_HEADER.into(),
            rows: Vec::new(),
        }
    }

    pub fn render(&self) -> String {
        let mut s = format!("# reference: {}\n# tolerance: {}\n", self.reference, self.tolerance);
        for m in &self.measured {
            s.push_str("# measured: ");
            s.push_str(m);
            s.push('\n');
        }
        s.push_str(&self.header);
        s.push('\n');
        for r in &self.rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    /// Appends one panel; the shorter trace is padded with `nan`.
    fn panel(&mut self, name: &str, xo: &[f64], yo: &[f64], xm: &[f64], ym: &[f64]) {
        let x = if xo.len() >= xm.len() { xo } else { xm };
        let at = |y: &[f64], k: usize| y.get(k).copied().unwrap_or(f64::NAN);
        for (k, xv) in x.iter().enumerate() {
            self.rows.push(format!("{name},{},{},{}", fmt_num(*xv), fmt_num(at(yo, k)), fmt_num(at(ym, k))));
        }
    }

    fn series_panel(&mut self, name: &str, channel: &str, o: &TimeSeries, m: &TimeSeries) {
        self.panel(name, &o.t, o.channel(channel).unwrap(), &m.t, m.channel(channel).unwrap());
    }
}

fn nominal() -> (CircuitParams, ControlInput) {
    (CircuitParams::nominal(), ControlInput::nominal())
}

fn plant(top: Topology) -> Result<TransferFunction, CliError> {
    let (p, u) = nominal();
    Ok(closed_form_tf(top, &p, &u)?)
}

fn bode_grid() -> Vec<f64> {
    log_grid(1.0, 1e6, 241)
}

fn bode_panels(fig: &mut Figure, prefix: &str, o: &TransferFunction, m: &TransferFunction) -> Result<(), CliError> {
    let w = bode_grid();
    let (ro, rm) = (evaluate(o, &w)?, evaluate(m, &w)?);
    fig.panel(&format!("{prefix}magnitude_db"), &w, &ro.magnitude_db(), &w, &rm.magnitude_db());
    fig.panel(&format!("{prefix}phase_deg"), &w, &ro.phase_deg, &w, &rm.phase_deg);
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or("none".into(), |x| format!("{x:.4}"))
}

fn describe(m: &MarginReport) -> String {
    format!(
        "crossover {} rad/s, PM {} deg, GM {} dB at {} rad/s, Nyquist stable {}",
        opt(m.crossover_rad_s),
        opt(m.phase_margin_deg),
        opt(m.gain_margin_db),
        opt(m.gain_margin_rad_s),
        m.nyquist_stable
    )
}

fn plant_bode() -> Result<Figure, CliError> {
    let mut f = Figure::new(
        "plant_bode.csv",
        "control-to-output Bode plots of all six receivers; the buck phase falls from 180 to -180 deg (original) and to -90 deg (modified)",
        "analytic curves; no tolerance",
    );
    for c in CONVERTERS {
        bode_panels(&mut f, &format!("{}_", converter_slug(c)), &plant(original(c))?, &plant(modified(c))?)?;
    }
    Ok(f)
}

fn pole_zero_map() -> Result<Figure, CliError> {
    let mut f = Figure::new(
        "pole_zero_map.csv",
        "original receivers carry right-half-plane zeros (buck at 1190 rad/s) that the modified receivers lack; poles are shared",
        "buck zero within 1%; denominators identical to 1e-12 relative",
    );
    f.header = "converter,receiver,kind,re,im".into();
    for c in CONVERTERS {
        for (label, top) in [("original", original(c)), ("modified", modified(c))] {
            let g = plant(top)?;
            for (kind, roots) in [("pole", g.poles()?), ("zero", g.zeros()?)] {
                for r in roots.roots {
                    f.rows.push(format!("{},{label},{kind},{},{}", converter_slug(c), fmt_num(r.re), fmt_num(r.im)));
                }
            }
        }
    }
    Ok(f)
}

fn bode_switched(cfg: &RunConfig) -> Result<Figure, CliError> {
    let mut f = Figure::new(
        "bode_switched_vs_analytic.csv",
        "sine-injection Bode plots of the switched receivers agree with the analytic transfer functions; buck phase drop is 90 deg smaller with the modified receiver",
        "1 dB and 5 deg over 30..5000 rad/s; phase-drop difference 90 +- 5 deg",
    );
    let sc = cfg.sysid.clone().unwrap_or_default();
    let opts = sc.options();
    let (p, u) = nominal();
    let s = SwitchSchedule::from_control(&u);
    for c in CONVERTERS {
        let mut default = sysid_fidelity_grid();
        if c == Converter::Buck {
            default.extend(sysid_extension_grid());
        }
        let omegas = sc.omegas(default)?;
        let mut rows = Vec::new();
        for top in [original(c), modified(c)] {
            let pts = extract_frequency_response(top, &p, &s, &omegas, &opts)?;
            rows.push(sysid_rows(&plant(top)?, &pts)?);
        }
        let w: Vec<f64> = rows[0].iter().map(|r| r.omega).collect();
        let col = |k: usize, g: fn(&super::run::SysidRow) -> f64| rows[k].iter().map(g).collect::<Vec<_>>();
        let slug = converter_slug(c);
        f.panel(&format!("{slug}_magnitude_db_switched"), &w, &col(0, |r| r.magnitude_db), &w, &col(1, |r| r.magnitude_db));
        f.panel(&format!("{slug}_magnitude_db_analytic"), &w, &col(0, |r| r.analytic_magnitude_db), &w, &col(1, |r| {
            r.analytic_magnitude_db
        }));
        f.panel(&format!("{slug}_phase_deg_switched"), &w, &col(0, |r| r.phase_deg), &w, &col(1, |r| r.phase_deg));
        f.panel(&format!("{slug}_phase_deg_analytic"), &w, &col(0, |r| r.analytic_phase_deg), &w, &col(1, |r| {
            r.analytic_phase_deg
        }));
        let worst = |k: usize| {
            rows[k].iter().fold((0.0f64, 0.0f64), |(dm, dp), r| {
                (dm.max((r.magnitude_db - r.analytic_magnitude_db).abs()), dp.max((r.phase_deg - r.analytic_phase_deg).abs()))
            })
        };
        let (wo, wm) = (worst(0), worst(1));
        f.measured.push(format!(
            "{slug}: worst deviation original {:.4} dB / {:.3} deg, modified {:.4} dB / {:.3} deg",
            wo.0, wo.1, wm.0, wm.1
        ));
    }
    Ok(f)
}

fn loop_panels(f: &mut Figure, c: Converter, g: PIGains, h: PIGains) -> Result<(MarginReport, MarginReport), CliError> {
    let lo = loop_gain(&plant(original(c))?, &g)?;
    let lm = loop_gain(&plant(modified(c))?, &h)?;
    bode_panels(f, "loop_", &lo.tf, &lm.tf)?;
    Ok((margins(&lo)?, margins(&lm)?))
}

fn crossover_matched(c: Converter) -> Result<Figure, CliError> {
    let reference = match c {
        Converter::Buck => "crossover 300 rad/s; PM 60 deg and GM 13 dB at 1250 rad/s (original), PM 71 deg and GM 49 dB at 10000 rad/s (modified); no encirclement of -1",
        Converter::BuckBoost => "crossover 300 rad/s; PM 78 deg and GM 23.2 dB at 3000 rad/s (original), PM 82 deg and GM 37.5 dB at 10000 rad/s (modified); no encirclement of -1",
        Converter::Boost => "crossover 300 rad/s; PM 83 deg and GM 34.9 dB at 7050 rad/s (original), PM 84 deg and GM 37.5 dB at 20800 rad/s (modified); no encirclement of -1",
    };
    let mut f = Figure::new(
        format!("loop_crossover_matched_{}.csv", converter_slug(c)),
        reference,
        "PM +-3 deg, GM +-1.5 dB, frequencies +-10%",
    );
    let gains = scenarios::crossover_matched_gains(c);
    let (mo, mm) = loop_panels(&mut f, c, gains.original, gains.modified)?;
    let w = bode_grid();
    let lo = loop_gain(&plant(original(c))?, &gains.original)?;
    let lm = loop_gain(&plant(modified(c))?, &gains.modified)?;
    let (ro, rm) = (evaluate(&lo.tf, &w)?, evaluate(&lm.tf, &w)?);
    let re = |v: &[num_complex::Complex64]| v.iter().map(|z| z.re).collect::<Vec<_>>();
    let im = |v: &[num_complex::Complex64]| v.iter().map(|z| z.im).collect::<Vec<_>>();
    f.panel("nyquist_real", &w, &re(&ro.value), &w, &re(&rm.value));
    f.panel("nyquist_imag", &w, &im(&ro.value), &w, &im(&rm.value));
    f.measured.push(format!("original (kp={}, ki={}): {}", gains.original.kp, gains.original.ki, describe(&mo)));
    f.measured.push(format!("modified (kp={}, ki={}): {}", gains.modified.kp, gains.modified.ki, describe(&mm)));
    Ok(f)
}

fn margin_matched(c: Converter) -> Result<Figure, CliError> {
    let (gm, pm) = scenarios::margin_targets(c);
    let (lo, hi) = scenarios::reference_levels(c);
    let crossovers = match c {
        Converter::Buck => (118, 480),
        Converter::BuckBoost => (430, 751),
        Converter::Boost => (1260, 1460),
    };
    let mut f = Figure::new(
        format!("margin_matched_{}.csv", converter_slug(c)),
        format!(
            "both loops at GM {gm} dB and PM {pm} deg; crossovers {} rad/s (original) and {} rad/s (modified); reference step {lo} V to {hi} V reaches the new value sooner with the modified receiver",
            crossovers.0, crossovers.1
        ),
        "crossovers +-10%, GM +-1.5 dB, PM +-3 deg",
    );
    let gains = scenarios::designed_margin_matched_gains(c)?;
    let (mo, mm) = loop_panels(&mut f, c, gains.original, gains.modified)?;
    let so = simulate(&scenarios::reference_step_between(original(c), gains.original, lo, hi)?)?;
    let sm = simulate(&scenarios::reference_step_between(modified(c), gains.modified, lo, hi)?)?;
    f.series_panel("v_o", "v_o", &so, &sm);
    f.measured.push(format!("original (kp={:.6e}, ki={:.6e}): {}", gains.original.kp, gains.original.ki, describe(&mo)));
    f.measured.push(format!("modified (kp={:.6e}, ki={:.6e}): {}", gains.modified.kp, gains.modified.ki, describe(&mm)));
    let (a, b) = (step_metrics(&so, STEP_TIME, "v_o")?, step_metrics(&sm, STEP_TIME, "v_o")?);
    f.measured.push(format!("settling time original {} s, modified {} s", opt(a.settling_time), opt(b.settling_time)));
    Ok(f)
}

fn metrics_line(label: &str, m: &StepMetrics) -> String {
    format!(
        "{label}: initial {:.4} V, final {:.4} V, settling {} s, overshoot {:.4} V, undershoot {:.4} V, inverse response {}",
        m.initial,
        m.final_value,
        opt(m.settling_time),
        m.overshoot,
        m.undershoot,
        m.inverse_response
    )
}

fn small_signal(s: &Scenario, x0: f64) -> Result<(Vec<f64>, Vec<f64>), CliError> {
    let Change::DutyStep { duty } = s.events[0].change else { unreachable!("duty step scenario") };
    let g = closed_form_tf(s.topology, &s.params, &s.control)?;
    let delta = duty - s.control.active(s.topology);
    let r = linearized_step_response(&g, None, StepKind::Duty, delta, s.duration - STEP_TIME, 1e-5)?;
    Ok((r.t.iter().map(|t| t + STEP_TIME).collect(), r.y.iter().map(|y| y + x0).collect()))
}

fn duty_step() -> Result<Figure, CliError> {
    let mut f = Figure::new(
        "duty_step.csv",
        "original buck, duty 0.5 to 0.52: rises 0.4 V then drops 0.76 V (inverse response); modified buck, D 0.53 to 0.58: monotone drop of 0.26 V",
        "magnitudes +-30%; inverse-response flags exact",
    );
    let (so, sm) = (scenarios::duty_step(Rectifier::OriginalDiode), scenarios::duty_step(Rectifier::ModifiedActive));
    let (to, tm) = (simulate(&so)?, simulate(&sm)?);
    f.series_panel("v_o", "v_o", &to, &tm);
    f.series_panel("duty", "duty", &to, &tm);
    let (mo, mm) = (step_metrics(&to, STEP_TIME, "v_o")?, step_metrics(&tm, STEP_TIME, "v_o")?);
    let (xo, yo) = small_signal(&so, mo.initial)?;
    let (xm, ym) = small_signal(&sm, mm.initial)?;
    f.panel("v_o_small_signal", &xo, &yo, &xm, &ym);
    f.measured.push(metrics_line("original", &mo));
    f.measured.push(metrics_line("modified", &mm));
    Ok(f)
}

fn closed_loop(file: &str, reference: &str, tolerance: &str, build: ScenarioFn, at: f64) -> Result<Figure, CliError> {
    let mut f = Figure::new(file, reference, tolerance);
    let gains = scenarios::designed_margin_matched_gains(Converter::Buck)?;
    let (top_o, top_m) = (original(Converter::Buck), modified(Converter::Buck));
    let to = simulate(&build(top_o, gains.original)?)?;
    let tm = simulate(&build(top_m, gains.modified)?)?;
    f.series_panel("v_o", "v_o", &to, &tm);
    f.series_panel("duty", "duty", &to, &tm);
    f.measured.push(metrics_line("original", &step_metrics(&to, at, "v_o")?));
    f.measured.push(metrics_line("modified", &step_metrics(&tm, at, "v_o")?));
    if to.unstable || tm.unstable {
        f.measured.push(format!("run cut short by divergence: original {}, modified {}", to.unstable, tm.unstable));
    }
    Ok(f)
}

type ScenarioFn = fn(Topology, PIGains) -> crate::Result<Scenario>;

fn gain_step_scenario(top: Topology, from: PIGains) -> crate::Result<Scenario> {
    scenarios::gain_step(top, from, scenarios::stress_gains().for_topology(top))
}

/// Renders every figure plus an index in the requested format.
pub fn render(cfg: &RunConfig, format: Format) -> Result<Vec<Artifact>, CliError> {
    let mut figs = vec![plant_bode()?, pole_zero_map()?, bode_switched(cfg)?];
    for c in CONVERTERS {
        figs.push(crossover_matched(c)?);
    }
    for c in CONVERTERS {
        figs.push(margin_matched(c)?);
    }
    figs.push(duty_step()?);
    figs.push(closed_loop(
        "reference_step.csv",
        "buck reference 8 V to 8.8 V: original settles in about 25 ms without overshoot, modified in about 5 ms with 0.2 V overshoot",
        "settling-time ratio original/modified at least 3",
        scenarios::reference_step,
        STEP_TIME,
    )?);
    figs.push(closed_loop(
        "load_step.csv",
        "buck load 8.6 to 7 ohm at 8.8 V: undershoot 1.6 V (original) vs 0.4 V (modified)",
        "undershoot ratio original/modified at least 3",
        scenarios::load_step,
        STEP_TIME,
    )?);
    figs.push(closed_loop(
        "gain_step.csv",
        "buck gains switched to raise the crossover to 1030 rad/s (a 0.05 V reference nudge follows 10 ms later): original (0, 66) oscillates and loses stability, modified (0.175, 325) stays stable",
        "original GM within 0 +- 2 dB; modified GM at least 6 dB with all closed-loop poles in the open left half plane",
        gain_step_scenario,
        scenarios::GAIN_STEP_NUDGE_TIME,
    )?);

    let mut out: Vec<Artifact> = figs.iter().map(|f| Artifact::new(f.file.clone(), f.render())).collect();
    out.push(index(&figs, format));
    Ok(out)
}

fn index(figs: &[Figure], format: Format) -> Artifact {
    match format {
        Format::Json => {
            let list: Vec<_> = figs
                .iter()
                .map(|f| serde_json::json!({"file": f.file, "reference": f.reference, "tolerance": f.tolerance, "measured": f.measured}))
                .collect();
            let mut s = serde_json::to_string_pretty(&list).expect("index serializes");
            s.push('\n');
            Artifact::new("index.json", s)
        }
        Format::Csv => {
            let mut s = String::from("file,reference,tolerance\n");
            for f in figs {
                s.push_str(&format!("{},\"{}\",\"{}\"\n", f.file, f.reference, f.tolerance));
            }
            Artifact::new("index.csv", s)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figures_carry_header_comments() {
        let f = pole_zero_map().unwrap();
        let text = f.render();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# reference: "));
        assert!(lines.next().unwrap().starts_with("# tolerance: "));
        assert_eq!(lines.next().unwrap(), "converter,receiver,kind,re,im");
        // three poles per plant; one, two and two zeros for the originals
        assert_eq!(f.rows.len(), 6 * 3 + 5);
    }

    #[test]
    fn padding_marks_missing_samples() {
        let mut f = Figure::new("x.csv", "r", "t");
        f.panel("p", &[0.0, 1.0], &[1.0, 2.0], &[0.0], &[3.0]);
        assert_eq!(f.rows[1], "p,1.00000000e0,2.00000000e0,nan");
    }
}
