//! Cycle-averaged receiver models.
//!
//! The receiver coil behaves as a sinusoidal current source `I_Ls sin(2πft)`
//! feeding a rectifier, a DC-link capacitor `C_DC`, and a DC-DC converter
//! (buck, inverting buck-boost, or boost) driving `C_o ‖ R`.
//!
//! All six receivers share one averaged structure:
//!
//! ```text
//! dv_dc/dt = (i_src − α·i_l) / C_DC
//! di_l/dt  = (α·v_dc − β·v_o) / L
//! dv_o/dt  = (β·i_l − v_o/R) / C_o
//! ```
//!
//! with `(α, β) = (d, 1)` for the buck, `(d, 1−d)` for the buck-boost and
//! `(1, 1−d)` for the boost, where `d` is the converter duty ratio. The
//! rectifier sets the injected current `i_src`: `2·I_Ls/π` for the diode
//! bridge and `(1 − cos 2πD)·I_Ls/π` for the active rectifier.
//!
//! The buck-boost output is stored as the magnitude of its inverted voltage.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Default switching frequency when a configuration does not give one.
pub const DEFAULT_SWITCHING_HZ: f64 = 100e3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    /// Receiver coil current amplitude `I_Ls` (A).
    pub i_ls_amplitude: f64,
    /// Switching frequency `f` (Hz).
    pub f_switch: f64,
    /// DC-link capacitance (F).
    pub c_dc: f64,
    /// Converter inductance (H).
    pub l: f64,
    /// Output capacitance (F).
    pub c_o: f64,
    /// Load resistance (Ω).
    pub r_load: f64,
}

impl CircuitParams {
    pub fn new(i_ls_amplitude: f64, f_switch: f64, c_dc: f64, l: f64, c_o: f64, r_load: f64) -> Result<Self> {
        let p = Self { i_ls_amplitude, f_switch, c_dc, l, c_o, r_load };
        p.validate()?;
        Ok(p)
    }

    /// The reference receiver: 1 A, 100 kHz, 30 µF, 77 µH, 40 µF, 7 Ω.
    pub fn nominal() -> Self {
        Self {
            i_ls_amplitude: 1.0,
            f_switch: DEFAULT_SWITCHING_HZ,
            c_dc: 30e-6,
            l: 77e-6,
            c_o: 40e-6,
            r_load: 7.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("i_ls_amplitude", self.i_ls_amplitude),
            ("f_switch", self.f_switch),
            ("c_dc", self.c_dc),
            ("l", self.l),
            ("c_o", self.c_o),
            ("r_load", self.r_load),
        ] {
            ensure_finite(name, v)?;
            // a zero source amplitude leaves a passive network, which is allowed
            if v < 0.0 || (v == 0.0 && name != "i_ls_amplitude") {
                return Err(Error::InvalidInput(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        1.0 / self.f_switch
    }

    pub fn with_load(mut self, r_load: f64) -> Self {
        self.r_load = r_load;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Converter {
    Buck,
    BuckBoost,
    Boost,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rectifier {
    /// Passive full-bridge diode rectifier; the injected current is fixed.
    OriginalDiode,
    /// Two ground-referenced active switches with duty ratio `D ∈ [0.5, 1]`.
    ModifiedActive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Topology {
    pub converter: Converter,
    pub rectifier: Rectifier,
}

impl Topology {
    pub const ALL: [Topology; 6] = [
        Topology::new(Converter::Buck, Rectifier::OriginalDiode),
        Topology::new(Converter::Buck, Rectifier::ModifiedActive),
        Topology::new(Converter::BuckBoost, Rectifier::OriginalDiode),
        Topology::new(Converter::BuckBoost, Rectifier::ModifiedActive),
        Topology::new(Converter::Boost, Rectifier::OriginalDiode),
        Topology::new(Converter::Boost, Rectifier::ModifiedActive),
    ];

    pub const fn new(converter: Converter, rectifier: Rectifier) -> Self {
        Self { converter, rectifier }
    }

    pub fn is_modified(&self) -> bool {
        self.rectifier == Rectifier::ModifiedActive
    }

    /// The same converter with the other rectifier.
    pub fn counterpart(&self) -> Self {
        let rectifier = match self.rectifier {
            Rectifier::OriginalDiode => Rectifier::ModifiedActive,
            Rectifier::ModifiedActive => Rectifier::OriginalDiode,
        };
        Self { converter: self.converter, rectifier }
    }

    /// Short identifier such as `buck_original` or `boost_modified`.
    pub fn slug(&self) -> String {
        let c = match self.converter {
            Converter::Buck => "buck",
            Converter::BuckBoost => "buck_boost",
            Converter::Boost => "boost",
        };
        let r = match self.rectifier {
            Rectifier::OriginalDiode => "original",
            Rectifier::ModifiedActive => "modified",
        };
        format!("{c}_{r}")
    }
}

impl std::str::FromStr for Topology {
    type Err = Error;

    /// Parses the [`Topology::slug`] form.
    fn from_str(s: &str) -> Result<Self> {
        Topology::ALL
            .into_iter()
            .find(|t| t.slug() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown topology `{s}`")))
    }
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.slug())
    }
}

/// Duty ratios applied to the converter and the rectifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub d_dcdc: f64,
    pub d_rect: f64,
}

impl ControlInput {
    pub fn new(d_dcdc: f64, d_rect: f64) -> Self {
        Self { d_dcdc, d_rect }
    }

    /// Nominal operating point: `D_DC-DC = 0.5`, `D = 0.51`.
    pub fn nominal() -> Self {
        Self { d_dcdc: 0.5, d_rect: 0.51 }
    }

    /// Checks the ranges for `top`. Diode receivers ignore `d_rect`.
    pub fn validate(&self, top: Topology) -> Result<()> {
        ensure_finite("d_dcdc", self.d_dcdc)?;
        if self.d_dcdc <= 0.0 || self.d_dcdc >= 1.0 {
            return Err(Error::Singular(format!("d_dcdc must lie in (0, 1), got {}", self.d_dcdc)));
        }
        if top.is_modified() {
            ensure_finite("d_rect", self.d_rect)?;
            if !(0.5..=1.0).contains(&self.d_rect) {
                return Err(Error::InvalidInput(format!("d_rect must lie in [0.5, 1], got {}", self.d_rect)));
            }
        }
        Ok(())
    }

    /// The duty ratio a feedback loop actuates for `top`.
    pub fn active(&self, top: Topology) -> f64 {
        if top.is_modified() {
            self.d_rect
        } else {
            self.d_dcdc
        }
    }

    pub fn with_active(mut self, top: Topology, value: f64) -> Self {
        if top.is_modified() {
            self.d_rect = value;
        } else {
            self.d_dcdc = value;
        }
        self
    }
}

/// Cycle-averaged state `(⟨v_dc⟩, ⟨i_l⟩, ⟨v_o⟩)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateVector {
    pub v_dc: f64,
    pub i_l: f64,
    pub v_o: f64,
}

impl StateVector {
    pub const ZERO: Self = Self { v_dc: 0.0, i_l: 0.0, v_o: 0.0 };

    pub fn new(v_dc: f64, i_l: f64, v_o: f64) -> Self {
        Self { v_dc, i_l, v_o }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.v_dc, self.i_l, self.v_o]
    }

    pub fn from_array(x: [f64; 3]) -> Self {
        Self { v_dc: x[0], i_l: x[1], v_o: x[2] }
    }

    pub fn is_finite(&self) -> bool {
        self.v_dc.is_finite() && self.i_l.is_finite() && self.v_o.is_finite()
    }

    pub fn norm(&self) -> f64 {
        (self.v_dc * self.v_dc + self.i_l * self.i_l + self.v_o * self.v_o).sqrt()
    }
}

/// Linearised model `ẋ = A x + B u`, `y = C x + D u`, where `u` is the
/// actuated duty ratio and `y` is `v_o`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearStateSpace {
    pub a: [[f64; 3]; 3],
    pub b: [f64; 3],
    pub c: [f64; 3],
    pub d: f64,
}

/// Converter coupling coefficients `(α, β)` and their duty derivatives.
fn coupling(converter: Converter, d: f64) -> ((f64, f64), (f64, f64)) {
    match converter {
        Converter::Buck => ((d, 1.0), (1.0, 0.0)),
        Converter::BuckBoost => ((d, 1.0 - d), (1.0, -1.0)),
        Converter::Boost => ((1.0, 1.0 - d), (0.0, -1.0)),
    }
}

/// Average current the rectifier delivers to the DC link (A).
pub fn source_current(top: Topology, p: &CircuitParams, u: &ControlInput) -> f64 {
    match top.rectifier {
        Rectifier::OriginalDiode => 2.0 * p.i_ls_amplitude / PI,
        Rectifier::ModifiedActive => (1.0 - (2.0 * PI * u.d_rect).cos()) * p.i_ls_amplitude / PI,
    }
}

/// `∂i_src/∂D` for the active rectifier.
fn source_slope(p: &CircuitParams, d_rect: f64) -> f64 {
    2.0 * p.i_ls_amplitude * (2.0 * PI * d_rect).sin()
}

fn check_inputs(top: Topology, p: &CircuitParams, u: &ControlInput) -> Result<()> {
    p.validate()?;
    u.validate(top)
}

fn state_matrix(converter: Converter, p: &CircuitParams, d_dcdc: f64) -> [[f64; 3]; 3] {
    let ((alpha, beta), _) = coupling(converter, d_dcdc);
    [
        [0.0, -alpha / p.c_dc, 0.0],
        [alpha / p.l, 0.0, -beta / p.l],
        [0.0, beta / p.c_o, -1.0 / (p.r_load * p.c_o)],
    ]
}

fn derivative_unchecked(top: Topology, p: &CircuitParams, u: &ControlInput, x: &StateVector) -> StateVector {
    let ((alpha, beta), _) = coupling(top.converter, u.d_dcdc);
    let src = source_current(top, p, u);
    StateVector {
        v_dc: (src - alpha * x.i_l) / p.c_dc,
        i_l: (alpha * x.v_dc - beta * x.v_o) / p.l,
        v_o: (beta * x.i_l - x.v_o / p.r_load) / p.c_o,
    }
}

/// Time derivative of the averaged state.
pub fn averaged_derivative(top: Topology, p: &CircuitParams, u: &ControlInput, x: &StateVector) -> Result<StateVector> {
    check_inputs(top, p, u)?;
    if !x.is_finite() {
        return Err(Error::InvalidInput("state is not finite".into()));
    }
    Ok(derivative_unchecked(top, p, u, x))
}

/// Same as [`averaged_derivative`] on raw arrays, without validation.
/// Simulators call this in their inner loops.
pub(crate) fn derivative_raw(top: Topology, p: &CircuitParams, u: &ControlInput, x: &[f64; 3]) -> [f64; 3] {
    derivative_unchecked(top, p, u, &StateVector::from_array(*x)).to_array()
}

fn residual_norm(top: Topology, p: &CircuitParams, u: &ControlInput, x: &StateVector) -> f64 {
    derivative_unchecked(top, p, u, x).norm()
}

/// Steady state of the averaged model.
///
/// Uses the closed form `i_l = i_src/α`, `v_o = R·β·i_l`, `v_dc = β·v_o/α`,
/// then applies Newton corrections on the residual when rounding leaves it
/// above 1e-9.
pub fn equilibrium(top: Topology, p: &CircuitParams, u: &ControlInput) -> Result<StateVector> {
    check_inputs(top, p, u)?;
    let ((alpha, beta), _) = coupling(top.converter, u.d_dcdc);
    let src = source_current(top, p, u);
    let i_l = src / alpha;
    let v_o = p.r_load * beta * i_l;
    let v_dc = beta * v_o / alpha;
    let mut x = StateVector { v_dc, i_l, v_o };

    let a = state_matrix(top.converter, p, u.d_dcdc);
    for _ in 0..4 {
        if residual_norm(top, p, u, &x) < 1e-10 {
            break;
        }
        let f = derivative_unchecked(top, p, u, &x).to_array();
        let step = crate::linalg::solve3(&a, &[-f[0], -f[1], -f[2]])
            .ok_or_else(|| Error::Singular("state matrix is singular".into()))?;
        x = StateVector::new(x.v_dc + step[0], x.i_l + step[1], x.v_o + step[2]);
    }
    if !x.is_finite() {
        return Err(Error::Numerical("equilibrium is not finite".into()));
    }
    Ok(x)
}

/// Linearises around the equilibrium with respect to the actuated duty:
/// `D_DC-DC` for diode receivers and `D` for active-rectifier receivers.
pub fn linearize(top: Topology, p: &CircuitParams, u: &ControlInput) -> Result<LinearStateSpace> {
    let x = equilibrium(top, p, u)?;
    let a = state_matrix(top.converter, p, u.d_dcdc);
    let b = match top.rectifier {
        Rectifier::OriginalDiode => {
            let (_, (dalpha, dbeta)) = coupling(top.converter, u.d_dcdc);
            [
                -dalpha * x.i_l / p.c_dc,
                (dalpha * x.v_dc - dbeta * x.v_o) / p.l,
                dbeta * x.i_l / p.c_o,
            ]
        }
        Rectifier::ModifiedActive => [source_slope(p, u.d_rect) / p.c_dc, 0.0, 0.0],
    };
    Ok(LinearStateSpace { a, b, c: [0.0, 0.0, 1.0], d: 0.0 })
}

/// Finds the actuated duty ratio whose equilibrium output equals `v_o`,
/// keeping the other duty from `base`.
pub fn duty_for_output(top: Topology, p: &CircuitParams, base: &ControlInput, v_o: f64) -> Result<ControlInput> {
    p.validate()?;
    ensure_finite("v_o", v_o)?;
    if v_o <= 0.0 {
        return Err(Error::Infeasible(format!("target output {v_o} V must be positive")));
    }
    let i0 = 2.0 * p.i_ls_amplitude / PI;
    let out = match top.rectifier {
        Rectifier::OriginalDiode => {
            let k = v_o / (p.r_load * i0);
            let d = match top.converter {
                Converter::Buck => 1.0 / k,
                Converter::BuckBoost => 1.0 / (1.0 + k),
                Converter::Boost => 1.0 - k,
            };
            ControlInput { d_dcdc: d, d_rect: base.d_rect }
        }
        Rectifier::ModifiedActive => {
            let ((alpha, beta), _) = coupling(top.converter, base.d_dcdc);
            let src = v_o * alpha / (p.r_load * beta);
            let c = 1.0 - PI * src / p.i_ls_amplitude;
            if !(-1.0..=1.0).contains(&c) {
                return Err(Error::Infeasible(format!(
                    "{v_o} V needs {src:.6} A from the rectifier, above its {i0:.6} A maximum"
                )));
            }
            ControlInput { d_dcdc: base.d_dcdc, d_rect: 1.0 - c.acos() / (2.0 * PI) }
        }
    };
    out.validate(top).map_err(|e| Error::Infeasible(format!("{v_o} V is out of reach: {e}")))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BUCK_O: Topology = Topology::new(Converter::Buck, Rectifier::OriginalDiode);
    const BUCK_M: Topology = Topology::new(Converter::Buck, Rectifier::ModifiedActive);
    const BOOST_O: Topology = Topology::new(Converter::Boost, Rectifier::OriginalDiode);

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-12)
    }

    #[test]
    fn buck_original_equilibrium_has_zero_rate() {
        let p = CircuitParams::nominal();
        let u = ControlInput::new(0.5, 0.5);
        let x = StateVector::new(17.825, 1.2732, 8.9127);
        let r = averaged_derivative(BUCK_O, &p, &u, &x).unwrap();
        // four-digit state values, so the rate is small but not exactly zero
        assert!(r.v_dc.abs() < 5.0 && r.i_l.abs() < 500.0 && r.v_o.abs() < 5.0, "{r:?}");

        let eq = equilibrium(BUCK_O, &p, &u).unwrap();
        assert!(close(eq.v_dc, 17.825, 1e-4));
        assert!(close(eq.i_l, 1.2732, 1e-4));
        assert!(close(eq.v_o, 8.9127, 1e-4));
        assert!(averaged_derivative(BUCK_O, &p, &u, &eq).unwrap().norm() < 1e-9);
    }

    #[test]
    fn modified_full_duty_injects_nothing() {
        let p = CircuitParams::nominal();
        let u = ControlInput::new(0.5, 1.0);
        let r = averaged_derivative(BUCK_M, &p, &u, &StateVector::ZERO).unwrap();
        assert!(r.norm() < 1e-12);
        for top in Topology::ALL.iter().filter(|t| t.is_modified()) {
            let eq = equilibrium(*top, &p, &u).unwrap();
            assert!(eq.norm() < 1e-12, "{top}: {eq:?}");
        }
    }

    #[test]
    fn boost_original_rate_at_origin_is_source_only() {
        let p = CircuitParams::nominal();
        let r = averaged_derivative(BOOST_O, &p, &ControlInput::nominal(), &StateVector::ZERO).unwrap();
        assert!(close(r.v_dc, 2.0 / (PI * 30e-6), 1e-15));
        assert_eq!(r.i_l, 0.0);
        assert_eq!(r.v_o, 0.0);
    }

    #[test]
    fn buck_modified_equilibrium() {
        let p = CircuitParams::nominal();
        let eq = equilibrium(BUCK_M, &p, &ControlInput::new(0.5, 0.51)).unwrap();
        assert!(close(eq.v_dc, 17.807, 1e-4), "{eq:?}");
        assert!(close(eq.i_l, 1.2720, 1e-4));
        assert!(close(eq.v_o, 8.9037, 1e-4));
    }

    #[test]
    fn degenerate_duty_is_rejected() {
        let p = CircuitParams::nominal();
        for d in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(equilibrium(BUCK_O, &p, &ControlInput::new(d, 0.5)).is_err());
        }
        assert!(matches!(
            equilibrium(BUCK_M, &p, &ControlInput::new(0.5, 0.4)),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn slugs_parse_back() {
        for t in Topology::ALL {
            assert_eq!(t.slug().parse::<Topology>().unwrap(), t);
        }
        assert!("buck".parse::<Topology>().is_err());
    }

    #[test]
    fn bad_params_are_rejected() {
        assert!(CircuitParams::new(1.0, 1e5, 30e-6, 77e-6, 40e-6, 0.0).is_err());
        assert!(CircuitParams::new(-1.0, 1e5, 30e-6, 77e-6, 40e-6, 7.0).is_err());
        assert!(CircuitParams::new(0.0, 1e5, 30e-6, 77e-6, 40e-6, 7.0).is_ok());
        assert!(CircuitParams::new(1.0, f64::INFINITY, 30e-6, 77e-6, 40e-6, 7.0).is_err());
        let x = StateVector::new(f64::NAN, 0.0, 0.0);
        assert!(averaged_derivative(BUCK_O, &CircuitParams::nominal(), &ControlInput::nominal(), &x).is_err());
    }

    #[test]
    fn modified_gain_vanishes_at_half_duty() {
        let p = CircuitParams::nominal();
        let m = linearize(BUCK_M, &p, &ControlInput::new(0.5, 0.5)).unwrap();
        assert!(m.b.iter().all(|b| b.abs() < 1e-6 * 2.0 / 30e-6));
    }

    #[test]
    fn diode_source_ignores_duty() {
        let p = CircuitParams::nominal();
        let a = source_current(BUCK_O, &p, &ControlInput::new(0.3, 0.7));
        let b = source_current(BUCK_O, &p, &ControlInput::new(0.8, 0.9));
        assert_eq!(a, b);
    }

    #[test]
    fn active_source_decreases_on_upper_half() {
        let p = CircuitParams::nominal();
        let mut last = f64::INFINITY;
        for k in 0..=50 {
            let d = 0.5 + 0.01 * k as f64;
            let s = source_current(BUCK_M, &p, &ControlInput::new(0.5, d));
            assert!(s <= last + 1e-15);
            last = s;
        }
        assert!(last.abs() < 1e-12);
    }

    #[test]
    fn duty_for_output_inverts_equilibrium() {
        let p = CircuitParams::nominal();
        for top in Topology::ALL {
            let base = ControlInput::nominal();
            let v0 = equilibrium(top, &p, &base).unwrap().v_o;
            let target = 0.95 * v0;
            let u = duty_for_output(top, &p, &base, target).unwrap();
            let v = equilibrium(top, &p, &u).unwrap().v_o;
            assert!(close(v, target, 1e-10), "{top}: {v} vs {target}");
        }
        let err = duty_for_output(BUCK_M, &p, &ControlInput::nominal(), 20.0);
        assert!(matches!(err, Err(Error::Infeasible(_))));
    }
}
