//! Executes one analysis and shapes its report.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::config::{Analysis, BodeOf, Compensator, RunConfig};
use super::{flatten_csv, Artifact, CliError, Format};
use crate::avgsim::{simulate, step_metrics, Scenario, StepMetrics};
use crate::checks::sysid_fidelity_grid;
use crate::freq::{closed_loop_poles, evaluate, log_grid, loop_gain, loop_polarity, margins_with, nyquist_count};
use crate::freq::{MarginReport, PIGains};
use crate::model::{equilibrium, linearize, source_current, CircuitParams, ControlInput, LinearStateSpace, StateVector};
use crate::model::Topology;
use crate::series::{join_numbers, nullable, TimeSeries};
use crate::switched::{extract_frequency_response, simulate_switched, sysid_phase_deg, SwitchSchedule, SysidOptions};
use crate::tf::{closed_form_rhp_zeros, closed_form_tf, tf_from_state_space, RootSet, TransferFunction};
use crate::tune::{tune, TuneTarget};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub topology: Topology,
    pub params: CircuitParams,
    pub control: ControlInput,
    pub source_current: f64,
    pub equilibrium: StateVector,
    pub linearization: LinearStateSpace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfReport {
    pub topology: Topology,
    pub params: CircuitParams,
    pub control: ControlInput,
    pub closed_form: TransferFunction,
    pub state_space: TransferFunction,
    pub max_relative_mismatch: f64,
    pub dc_gain: f64,
    pub loop_polarity: i8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZerosReport {
    pub topology: Topology,
    pub params: CircuitParams,
    pub control: ControlInput,
    /// Numerator roots (rad/s).
    pub zeros: Vec<Complex64>,
    pub rhp_zeros: Vec<Complex64>,
    /// Right-half-plane zeros from their closed-form expressions.
    pub closed_form_rhp_zeros: Vec<Complex64>,
    pub poles: Vec<Complex64>,
}

/// One frequency point; `null` marks a value at a pole.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodePoint {
    pub omega: f64,
    #[serde(with = "nullable::scalar")]
    pub magnitude_db: f64,
    #[serde(with = "nullable::scalar")]
    pub phase_deg: f64,
    #[serde(with = "nullable::scalar")]
    pub real: f64,
    #[serde(with = "nullable::scalar")]
    pub imag: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodeReport {
    pub topology: Topology,
    pub of: BodeOf,
    pub gains: Option<PIGains>,
    pub loop_polarity: i8,
    pub points: Vec<BodePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NyquistReport {
    pub topology: Topology,
    pub gains: PIGains,
    pub loop_polarity: i8,
    pub encirclements_cw: i64,
    pub open_loop_rhp_poles: usize,
    pub closed_loop_stable: bool,
    pub closed_loop_poles: Vec<Complex64>,
    /// `T(jω)` for ω ≥ 0; the negative-frequency branch is its mirror image.
    pub points: Vec<BodePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginsReport {
    pub topology: Topology,
    pub gains: PIGains,
    pub tuned_for: Option<TuneTarget>,
    pub margins: MarginReport,
    pub closed_loop_poles: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub topology: Topology,
    pub target: TuneTarget,
    pub gains: PIGains,
    pub margins: MarginReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventMetrics {
    pub time: f64,
    pub v_o: StepMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateReport {
    pub scenario: Scenario,
    pub metrics: Vec<EventMetrics>,
    pub series: TimeSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchedReport {
    pub topology: Topology,
    pub params: CircuitParams,
    pub schedule: SwitchSchedule,
    pub waveform: TimeSeries,
    pub cycle_means: TimeSeries,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SysidRow {
    pub omega_requested: f64,
    pub omega: f64,
    pub magnitude_db: f64,
    pub phase_deg: f64,
    pub real: f64,
    pub imag: f64,
    pub analytic_magnitude_db: f64,
    pub analytic_phase_deg: f64,
    pub drift: f64,
    pub settled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SysidReport {
    pub topology: Topology,
    pub params: CircuitParams,
    pub schedule: SwitchSchedule,
    pub options: SysidOptions,
    pub points: Vec<SysidRow>,
}

/// Every report a run can emit, tagged by its analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "analysis", rename_all = "snake_case")]
pub enum Report {
    Model(ModelReport),
    Tf(TfReport),
    Zeros(ZerosReport),
    Bode(BodeReport),
    Nyquist(NyquistReport),
    Margins(MarginsReport),
    Tune(TuneReport),
    Simulate(SimulateReport),
    Switched(SwitchedReport),
    Sysid(SysidReport),
}

impl Report {
    pub fn analysis(&self) -> Analysis {
        match self {
            Report::Model(_) => Analysis::Model,
            Report::Tf(_) => Analysis::Tf,
            Report::Zeros(_) => Analysis::Zeros,
            Report::Bode(_) => Analysis::Bode,
            Report::Nyquist(_) => Analysis::Nyquist,
            Report::Margins(_) => Analysis::Margins,
            Report::Tune(_) => Analysis::Tune,
            Report::Simulate(_) => Analysis::Simulate,
            Report::Switched(_) => Analysis::Switched,
            Report::Sysid(_) => Analysis::Sysid,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }
}

fn point(omega: f64, v: Complex64, phase_deg: f64) -> BodePoint {
    BodePoint { omega, magnitude_db: 20.0 * v.norm().log10(), phase_deg, real: v.re, imag: v.im }
}

fn operating_point(cfg: &RunConfig) -> Result<(Topology, CircuitParams, ControlInput), CliError> {
    let top = cfg.topology()?;
    let p = cfg.params()?;
    let u = cfg.control(top, &p)?;
    Ok((top, p, u))
}

/// Gains from the config, tuning them first when a target is given.
fn resolve_gains(cfg: &RunConfig, plant: &TransferFunction) -> Result<Option<(PIGains, Option<TuneTarget>)>, CliError> {
    Ok(match cfg.compensator()? {
        Compensator::None => None,
        Compensator::Gains(g) => Some((g, None)),
        Compensator::Tune(t) => Some((tune(plant, &t)?, Some(t))),
    })
}

fn require_gains(
    cfg: &RunConfig,
    plant: &TransferFunction,
    what: &str,
) -> Result<(PIGains, Option<TuneTarget>), CliError> {
    resolve_gains(cfg, plant)?.ok_or_else(|| CliError::Config(format!("{what} needs `gains` or a `tune` target")))
}

pub fn run(analysis: Analysis, cfg: &RunConfig) -> Result<Report, CliError> {
    let (top, p, u) = operating_point(cfg)?;
    let plant = || closed_form_tf(top, &p, &u);
    let roots = |r: RootSet| r.roots;
    Ok(match analysis {
        Analysis::Model => Report::Model(ModelReport {
            topology: top,
            params: p,
            control: u,
            source_current: source_current(top, &p, &u),
            equilibrium: equilibrium(top, &p, &u)?,
            linearization: linearize(top, &p, &u)?,
        }),
        Analysis::Tf => {
            let cf = plant()?;
            let ss = tf_from_state_space(&linearize(top, &p, &u)?)?;
            Report::Tf(TfReport {
                topology: top,
                params: p,
                control: u,
                max_relative_mismatch: cf.max_relative_mismatch(&ss),
                dc_gain: cf.dc_gain(),
                loop_polarity: loop_polarity(&cf)?,
                closed_form: cf,
                state_space: ss,
            })
        }
        Analysis::Zeros => {
            let g = plant()?;
            let z = g.zeros()?;
            Report::Zeros(ZerosReport {
                topology: top,
                params: p,
                control: u,
                rhp_zeros: z.right_half_plane(),
                zeros: z.roots,
                closed_form_rhp_zeros: roots(closed_form_rhp_zeros(top, &p, &u)?),
                poles: roots(g.poles()?),
            })
        }
        Analysis::Bode => {
            let g = plant()?;
            let gains = resolve_gains(cfg, &g)?.map(|x| x.0);
            let of = cfg.bode_of.unwrap_or(if gains.is_some() { BodeOf::Loop } else { BodeOf::Plant });
            let tf = match (of, gains) {
                (BodeOf::Plant, _) => g.clone(),
                (BodeOf::Loop, Some(c)) => loop_gain(&g, &c)?.tf,
                (BodeOf::Loop, None) => {
                    return Err(CliError::Config("a loop-gain Bode plot needs `gains` or a `tune` target".into()))
                }
            };
            let o = cfg.grid()?;
            let r = evaluate(&tf, &log_grid(o.omega_min, o.omega_max, o.points))?;
            let points = (0..r.len()).map(|k| point(r.omega[k], r.value[k], r.phase_deg[k])).collect();
            Report::Bode(BodeReport { topology: top, of, gains, loop_polarity: loop_polarity(&g)?, points })
        }
        Analysis::Nyquist => {
            let g = plant()?;
            let (gains, _) = require_gains(cfg, &g, "nyquist")?;
            let l = loop_gain(&g, &gains)?;
            let (cw, stable) = nyquist_count(&l.tf)?;
            let o = cfg.grid()?;
            let r = evaluate(&l.tf, &log_grid(o.omega_min, o.omega_max, o.points))?;
            Report::Nyquist(NyquistReport {
                topology: top,
                gains,
                loop_polarity: l.polarity,
                encirclements_cw: cw,
                open_loop_rhp_poles: l.tf.poles()?.right_half_plane().len(),
                closed_loop_stable: stable,
                closed_loop_poles: roots(closed_loop_poles(&g, &gains)?),
                points: (0..r.len()).map(|k| point(r.omega[k], r.value[k], r.phase_deg[k])).collect(),
            })
        }
        Analysis::Margins => {
            let g = plant()?;
            let (gains, tuned_for) = require_gains(cfg, &g, "margins")?;
            Report::Margins(MarginsReport {
                topology: top,
                gains,
                tuned_for,
                margins: margins_with(&loop_gain(&g, &gains)?, &cfg.grid()?)?,
                closed_loop_poles: roots(closed_loop_poles(&g, &gains)?),
            })
        }
        Analysis::Tune => {
            let g = plant()?;
            let target = match cfg.compensator()? {
                Compensator::Tune(t) => t,
                _ => return Err(CliError::Config("tune needs a `tune` target".into())),
            };
            let gains = tune(&g, &target)?;
            Report::Tune(TuneReport {
                topology: top,
                target,
                gains,
                margins: margins_with(&loop_gain(&g, &gains)?, &cfg.grid()?)?,
            })
        }
        Analysis::Simulate => {
            let gains = match cfg.compensator()? {
                Compensator::Tune(_) => resolve_gains(cfg, &plant()?)?.map(|x| x.0),
                Compensator::Gains(g) => Some(g),
                Compensator::None => None,
            };
            let scenario = cfg.scenario(top, p, u, gains);
            let series = simulate(&scenario)?;
            let metrics = scenario
                .events
                .iter()
                .map(|e| Ok(EventMetrics { time: e.time, v_o: step_metrics(&series, e.time, "v_o")? }))
                .collect::<crate::Result<Vec<_>>>()?;
            Report::Simulate(SimulateReport { scenario, metrics, series })
        }
        Analysis::Switched => {
            let schedule = SwitchSchedule::from_control(&u);
            let duration = cfg.duration_s.unwrap_or(0.01);
            let run = simulate_switched(top, &p, &schedule, duration, &cfg.switched_options())?;
            Report::Switched(SwitchedReport {
                topology: top,
                params: p,
                schedule,
                waveform: run.waveform,
                cycle_means: run.cycle_means,
            })
        }
        Analysis::Sysid => {
            let sc = cfg.sysid.clone().unwrap_or_default();
            let options = sc.options();
            let omegas = sc.omegas(sysid_fidelity_grid())?;
            let schedule = SwitchSchedule::from_control(&u);
            let points = extract_frequency_response(top, &p, &schedule, &omegas, &options)?;
            Report::Sysid(SysidReport {
                topology: top,
                params: p,
                schedule,
                options,
                points: sysid_rows(&plant()?, &points)?,
            })
        }
        Analysis::Report => unreachable!("figures are rendered separately"),
    })
}

/// Identified points next to the analytic response at the injected frequencies.
pub fn sysid_rows(plant: &TransferFunction, points: &[crate::switched::SysidPoint]) -> Result<Vec<SysidRow>, CliError> {
    let phase = sysid_phase_deg(points);
    let omegas: Vec<f64> = points.iter().map(|p| p.omega).collect();
    let analytic = evaluate(plant, &omegas)?;
    Ok(points
        .iter()
        .enumerate()
        .map(|(k, pt)| SysidRow {
            omega_requested: pt.omega_requested,
            omega: pt.omega,
            magnitude_db: 20.0 * pt.response.norm().log10(),
            phase_deg: phase[k],
            real: pt.response.re,
            imag: pt.response.im,
            analytic_magnitude_db: 20.0 * analytic.value[k].norm().log10(),
            analytic_phase_deg: analytic.phase_deg[k],
            drift: pt.drift,
            settled: pt.settled,
        })
        .collect())
}

fn bode_csv(points: &[BodePoint]) -> String {
    let mut s = String::from("omega,magnitude_db,phase_deg,real,imag\n");
    for p in points {
        s.push_str(&join_numbers(&[p.omega, p.magnitude_db, p.phase_deg, p.real, p.imag]));
        s.push('\n');
    }
    s
}

/// Artifacts of a report in the requested format.
pub fn artifacts(report: &Report, format: Format) -> Vec<Artifact> {
    let name = report.analysis().name();
    if format == Format::Json {
        return vec![Artifact::new(format!("{name}.json"), report.to_json())];
    }
    let scalar = |v: serde_json::Value| Artifact::new(format!("{name}.csv"), flatten_csv(&v));
    match report {
        Report::Bode(r) => vec![Artifact::new("bode.csv", bode_csv(&r.points))],
        Report::Nyquist(r) => {
            let mut summary = r.clone();
            summary.points.clear();
            vec![
                Artifact::new("nyquist.csv", bode_csv(&r.points)),
                Artifact::new("nyquist_summary.csv", flatten_csv(&json_value(&summary))),
            ]
        }
        Report::Simulate(r) => {
            let mut out = vec![Artifact::new("simulate.csv", r.series.to_csv())];
            if !r.metrics.is_empty() {
                out.push(Artifact::new("simulate_metrics.csv", flatten_csv(&json_value(&r.metrics))));
            }
            out
        }
        Report::Switched(r) => vec![
            Artifact::new("switched.csv", r.waveform.to_csv()),
            Artifact::new("switched_cycle_means.csv", r.cycle_means.to_csv()),
        ],
        Report::Sysid(r) => {
            let mut s = String::from(
                "omega_requested,omega,magnitude_db,phase_deg,real,imag,analytic_magnitude_db,analytic_phase_deg,drift,settled\n",
            );
            for p in &r.points {
                s.push_str(&join_numbers(&[
                    p.omega_requested,
                    p.omega,
                    p.magnitude_db,
                    p.phase_deg,
                    p.real,
                    p.imag,
                    p.analytic_magnitude_db,
                    p.analytic_phase_deg,
                    p.drift,
                ]));
                s.push_str(if p.settled { ",true\n" } else { ",false\n" });
            }
            vec![Artifact::new("sysid.csv", s)]
        }
        other => vec![scalar(json_value(other))],
    }
}

fn json_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("reports serialize")
}
