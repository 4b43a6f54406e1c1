//! JSON run configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::CliError;
use crate::avgsim::{Change, Event, Scenario};
use crate::freq::{log_grid, MarginOptions, PIGains};
use crate::model::{duty_for_output, CircuitParams, ControlInput, StateVector, Topology};
use crate::switched::{SwitchedOptions, SysidOptions};
use crate::tune::TuneTarget;

/// Analysis performed by a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Analysis {
    Model,
    Tf,
    Zeros,
    Bode,
    Nyquist,
    Margins,
    Tune,
    Simulate,
    Switched,
    Sysid,
    Report,
}

impl Analysis {
    pub fn name(&self) -> &'static str {
        match self {
            Analysis::Model => "model",
            Analysis::Tf => "tf",
            Analysis::Zeros => "zeros",
            Analysis::Bode => "bode",
            Analysis::Nyquist => "nyquist",
            Analysis::Margins => "margins",
            Analysis::Tune => "tune",
            Analysis::Simulate => "simulate",
            Analysis::Switched => "switched",
            Analysis::Sysid => "sysid",
            Analysis::Report => "report",
        }
    }
}

/// A topology given either as a slug (`"buck_boost_modified"`) or as
/// `{"converter": ..., "rectifier": ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TopologySpec {
    Slug(String),
    Full(Topology),
}

impl TopologySpec {
    pub fn resolve(&self) -> Result<Topology, CliError> {
        match self {
            TopologySpec::Slug(s) => s.parse().map_err(CliError::Model),
            TopologySpec::Full(t) => Ok(*t),
        }
    }
}

/// Circuit parameters; omitted fields take the nominal values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    pub i_ls_amplitude: Option<f64>,
    pub f_switch_hz: Option<f64>,
    pub f_switch_rad_s: Option<f64>,
    pub c_dc: Option<f64>,
    pub l: Option<f64>,
    pub c_o: Option<f64>,
    pub r_load: Option<f64>,
}

impl ParamsConfig {
    pub fn resolve(&self) -> Result<CircuitParams, CliError> {
        let n = CircuitParams::nominal();
        let f_switch = match (self.f_switch_hz, self.f_switch_rad_s) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config("give the switching frequency in Hz or rad/s, not both".into()))
            }
            (Some(f), None) => f,
            (None, Some(w)) => w / (2.0 * std::f64::consts::PI),
            (None, None) => n.f_switch,
        };
        let p = CircuitParams {
            i_ls_amplitude: self.i_ls_amplitude.unwrap_or(n.i_ls_amplitude),
            f_switch,
            c_dc: self.c_dc.unwrap_or(n.c_dc),
            l: self.l.unwrap_or(n.l),
            c_o: self.c_o.unwrap_or(n.c_o),
            r_load: self.r_load.unwrap_or(n.r_load),
        };
        p.validate()?;
        Ok(p)
    }
}

/// Duty ratios; omitted fields take the nominal values. `output_voltage`
/// solves the actuated duty for that equilibrium output instead.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlConfig {
    pub d_dcdc: Option<f64>,
    pub d_rect: Option<f64>,
    pub output_voltage: Option<f64>,
}

/// Tuning target: a crossover (Hz or rad/s, optional fixed `kp`) or a
/// gain/phase margin pair.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneConfig {
    pub crossover_rad_s: Option<f64>,
    pub crossover_hz: Option<f64>,
    pub kp_fixed: Option<f64>,
    pub gm_db: Option<f64>,
    pub pm_deg: Option<f64>,
}

impl TuneConfig {
    pub fn target(&self) -> Result<TuneTarget, CliError> {
        let crossover = match (self.crossover_rad_s, self.crossover_hz) {
            (Some(_), Some(_)) => return Err(CliError::Config("give the crossover in Hz or rad/s, not both".into())),
            (Some(w), None) => Some(w),
            (None, Some(f)) => Some(2.0 * std::f64::consts::PI * f),
            (None, None) => None,
        };
        let t = match (crossover, self.gm_db, self.pm_deg) {
            (Some(omega_c), None, None) => TuneTarget::Crossover { omega_c, kp_fixed: self.kp_fixed },
            (None, Some(gm_db), Some(pm_deg)) if self.kp_fixed.is_none() => TuneTarget::MarginPair { gm_db, pm_deg },
            _ => {
                return Err(CliError::Config(
                    "tune needs either a crossover (with optional kp_fixed) or both gm_db and pm_deg".into(),
                ))
            }
        };
        t.validate()?;
        Ok(t)
    }
}

/// Frequency grid; bounds in rad/s or Hz.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub omega_min_rad_s: Option<f64>,
    pub omega_max_rad_s: Option<f64>,
    pub f_min_hz: Option<f64>,
    pub f_max_hz: Option<f64>,
    pub points: Option<usize>,
}

fn pick(rad: Option<f64>, hz: Option<f64>, default: f64, what: &str) -> Result<f64, CliError> {
    match (rad, hz) {
        (Some(_), Some(_)) => Err(CliError::Config(format!("give {what} in Hz or rad/s, not both"))),
        (Some(w), None) => Ok(w),
        (None, Some(f)) => Ok(2.0 * std::f64::consts::PI * f),
        (None, None) => Ok(default),
    }
}

impl GridConfig {
    pub fn options(&self) -> Result<MarginOptions, CliError> {
        let d = MarginOptions::default();
        let o = MarginOptions {
            omega_min: pick(self.omega_min_rad_s, self.f_min_hz, d.omega_min, "the lower grid bound")?,
            omega_max: pick(self.omega_max_rad_s, self.f_max_hz, d.omega_max, "the upper grid bound")?,
            points: self.points.unwrap_or(d.points),
        };
        if !(o.omega_min > 0.0 && o.omega_max > o.omega_min && o.omega_max.is_finite() && o.points >= 2) {
            return Err(CliError::Config("grid needs 0 < omega_min < omega_max and at least 2 points".into()));
        }
        Ok(o)
    }

    pub fn omegas(&self) -> Result<Vec<f64>, CliError> {
        let o = self.options()?;
        Ok(log_grid(o.omega_min, o.omega_max, o.points))
    }
}

/// Which response `bode` and `nyquist` evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BodeOf {
    Plant,
    Loop,
}

/// Sine-injection sweep settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SysidConfig {
    pub omegas_rad_s: Option<Vec<f64>>,
    pub grid: Option<GridConfig>,
    pub relative_amplitude: Option<f64>,
    pub measure_periods: Option<usize>,
    pub min_discard_periods: Option<usize>,
    pub decay_time_constants: Option<f64>,
}

impl SysidConfig {
    pub fn options(&self) -> SysidOptions {
        let d = SysidOptions::default();
        SysidOptions {
            relative_amplitude: self.relative_amplitude.unwrap_or(d.relative_amplitude),
            measure_periods: self.measure_periods.unwrap_or(d.measure_periods),
            min_discard_periods: self.min_discard_periods.unwrap_or(d.min_discard_periods),
            decay_time_constants: self.decay_time_constants.unwrap_or(d.decay_time_constants),
        }
    }

    pub fn omegas(&self, default: Vec<f64>) -> Result<Vec<f64>, CliError> {
        match (&self.omegas_rad_s, &self.grid) {
            (Some(_), Some(_)) => Err(CliError::Config("sysid takes omegas_rad_s or grid, not both".into())),
            (Some(w), None) => Ok(w.clone()),
            (None, Some(g)) => g.omegas(),
            (None, None) => Ok(default),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchedConfig {
    pub samples_per_cycle: Option<usize>,
}

/// A scheduled change; `kind` selects the change as in [`Change`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventConfig {
    pub time_s: f64,
    #[serde(flatten)]
    pub change: Change,
}

/// One run read from a JSON file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// When present it must match the subcommand.
    pub analysis: Option<Analysis>,
    pub topology: Option<TopologySpec>,
    #[serde(default)]
    pub params: ParamsConfig,
    #[serde(default)]
    pub control: ControlConfig,
    pub gains: Option<PIGains>,
    pub tune: Option<TuneConfig>,
    #[serde(default)]
    pub events: Vec<EventConfig>,
    pub duration_s: Option<f64>,
    pub reference: Option<f64>,
    pub initial_state: Option<StateVector>,
    pub step_s: Option<f64>,
    pub sample_interval_s: Option<f64>,
    pub grid: Option<GridConfig>,
    pub bode_of: Option<BodeOf>,
    pub sysid: Option<SysidConfig>,
    pub switched: Option<SwitchedConfig>,
    /// Output directory, overridden by `--out`.
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn check_analysis(&self, requested: Analysis) -> Result<(), CliError> {
        match self.analysis {
            Some(a) if a != requested => Err(CliError::Config(format!(
                "config is for `{}` but `{}` was requested",
                a.name(),
                requested.name()
            ))),
            _ => Ok(()),
        }
    }

    pub fn topology(&self) -> Result<Topology, CliError> {
        self.topology.as_ref().ok_or_else(|| CliError::Config("config needs a topology".into()))?.resolve()
    }

    pub fn params(&self) -> Result<CircuitParams, CliError> {
        self.params.resolve()
    }

    pub fn control(&self, top: Topology, p: &CircuitParams) -> Result<ControlInput, CliError> {
        let n = ControlInput::nominal();
        let base = ControlInput::new(self.control.d_dcdc.unwrap_or(n.d_dcdc), self.control.d_rect.unwrap_or(n.d_rect));
        let u = match self.control.output_voltage {
            None => base,
            Some(v) => {
                let explicit = if top.is_modified() { self.control.d_rect } else { self.control.d_dcdc };
                if explicit.is_some() {
                    return Err(CliError::Config(
                        "output_voltage sets the actuated duty; do not give it explicitly as well".into(),
                    ));
                }
                duty_for_output(top, p, &base, v)?
            }
        };
        u.validate(top)?;
        Ok(u)
    }

    /// Gains given directly, or the tune target when `tune` is present.
    pub fn compensator(&self) -> Result<Compensator, CliError> {
        match (&self.gains, &self.tune) {
            (Some(_), Some(_)) => Err(CliError::Config("give gains or a tune target, not both".into())),
            (Some(g), None) => {
                g.validate()?;
                Ok(Compensator::Gains(*g))
            }
            (None, Some(t)) => Ok(Compensator::Tune(t.target()?)),
            (None, None) => Ok(Compensator::None),
        }
    }

    pub fn grid(&self) -> Result<MarginOptions, CliError> {
        self.grid.clone().unwrap_or_default().options()
    }

    pub fn scenario(&self, top: Topology, p: CircuitParams, u: ControlInput, gains: Option<PIGains>) -> Scenario {
        Scenario {
            topology: top,
            params: p,
            control: u,
            gains,
            events: self.events.iter().map(|e| Event { time: e.time_s, change: e.change }).collect(),
            duration: self.duration_s.unwrap_or(0.05),
            reference: self.reference,
            initial_state: self.initial_state,
            step: self.step_s,
            sample_interval: self.sample_interval_s,
        }
    }

    pub fn switched_options(&self) -> SwitchedOptions {
        let d = SwitchedOptions::default();
        let c = self.switched.clone().unwrap_or_default();
        SwitchedOptions {
            initial_state: self.initial_state,
            samples_per_cycle: c.samples_per_cycle.unwrap_or(d.samples_per_cycle),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Compensator {
    None,
    Gains(PIGains),
    Tune(TuneTarget),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slug_and_struct_topologies() {
        let a = RunConfig::from_json(r#"{"topology": "boost_modified"}"#).unwrap();
        let b = RunConfig::from_json(r#"{"topology": {"converter": "boost", "rectifier": "modified_active"}}"#).unwrap();
        assert_eq!(a.topology().unwrap(), b.topology().unwrap());
        assert!(RunConfig::from_json(r#"{"topology": "flyback"}"#).unwrap().topology().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"topology": "buck_original", "gainz": {}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"params": {"c_dc_uf": 30}}"#).is_err());
    }

    #[test]
    fn frequency_units() {
        let c = RunConfig::from_json(r#"{"params": {"f_switch_rad_s": 628318.5307179586}}"#).unwrap();
        assert!((c.params().unwrap().f_switch - 1e5).abs() < 1e-6);
        let c = RunConfig::from_json(r#"{"params": {"f_switch_rad_s": 1e5, "f_switch_hz": 1e5}}"#).unwrap();
        assert!(c.params().is_err());
        let t = TuneConfig { crossover_hz: Some(100.0), ..Default::default() }.target().unwrap();
        assert!(matches!(t, TuneTarget::Crossover { omega_c, .. } if (omega_c - 628.3185307).abs() < 1e-6));
    }

    #[test]
    fn events_flatten_their_kind() {
        let c = RunConfig::from_json(r#"{"events": [{"time_s": 0.01, "kind": "duty_step", "duty": 0.52}]}"#).unwrap();
        assert_eq!(c.events[0].change, Change::DutyStep { duty: 0.52 });
    }

    #[test]
    fn gains_and_tune_are_exclusive() {
        let c = RunConfig::from_json(r#"{"gains": {"kp": 0, "ki": 1}, "tune": {"crossover_rad_s": 300}}"#).unwrap();
        assert!(c.compensator().is_err());
        let c = RunConfig::from_json(r#"{"tune": {"gm_db": 20}}"#).unwrap();
        assert!(c.compensator().is_err());
    }

    #[test]
    fn analysis_must_match() {
        let c = RunConfig::from_json(r#"{"analysis": "zeros"}"#).unwrap();
        assert!(c.check_analysis(Analysis::Zeros).is_ok());
        assert!(c.check_analysis(Analysis::Bode).is_err());
    }
}
