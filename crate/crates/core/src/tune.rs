//! PI gain synthesis for a crossover target or a (gain margin, phase margin) pair.
//!
//! The margin-pair search is parametrised by the PI zero ratio `r = kp/ki`.
//! For fixed `r` the loop phase does not depend on `ki`, so the gain-margin
//! target fixes `ki` in closed form and only `r` is searched.

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::freq::{crossings, log_grid, loop_gain, loop_polarity, MarginOptions, PIGains};
use crate::tf::TransferFunction;

/// What the tuner should achieve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum TuneTarget {
    Crossover { omega_c: f64, kp_fixed: Option<f64> },
    MarginPair { gm_db: f64, pm_deg: f64 },
}

impl TuneTarget {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TuneTarget::Crossover { omega_c, kp_fixed } => {
                ensure_finite("omega_c", omega_c)?;
                if omega_c <= 0.0 {
                    return Err(Error::InvalidInput(format!("crossover must be positive, got {omega_c}")));
                }
                if let Some(kp) = kp_fixed {
                    ensure_finite("kp_fixed", kp)?;
                    if kp < 0.0 {
                        return Err(Error::InvalidInput(format!("kp_fixed must be nonnegative, got {kp}")));
                    }
                }
            }
            TuneTarget::MarginPair { gm_db, pm_deg } => {
                ensure_finite("gm_db", gm_db)?;
                ensure_finite("pm_deg", pm_deg)?;
                if gm_db <= 0.0 {
                    return Err(Error::InvalidInput(format!("gain margin target must be positive, got {gm_db}")));
                }
                if !(pm_deg > 0.0 && pm_deg < 90.0) {
                    return Err(Error::InvalidInput(format!("phase margin target must lie in (0, 90), got {pm_deg}")));
                }
            }
        }
        Ok(())
    }
}

pub fn tune(plant: &TransferFunction, target: &TuneTarget) -> Result<PIGains> {
    target.validate()?;
    match *target {
        TuneTarget::Crossover { omega_c, kp_fixed } => tune_crossover(plant, omega_c, kp_fixed.unwrap_or(0.0)),
        TuneTarget::MarginPair { gm_db, pm_deg } => tune_margin_pair(plant, gm_db, pm_deg),
    }
}

/// Gains placing `|T(jω_c)| = 1` with `kp` held fixed.
pub fn tune_crossover(plant: &TransferFunction, omega_c: f64, kp: f64) -> Result<PIGains> {
    TuneTarget::Crossover { omega_c, kp_fixed: Some(kp) }.validate()?;
    loop_polarity(plant)?;
    let g = plant.at_jw(omega_c).norm();
    if !(g.is_finite() && g > 0.0) {
        return Err(Error::TuneInfeasible(format!("plant magnitude at {omega_c} rad/s is {g}")));
    }
    let need = 1.0 / (g * g) - kp * kp;
    let tol = 1e-12 / (g * g);
    if need.abs() <= tol {
        return Err(Error::ZeroIntegralGain);
    }
    if need < 0.0 {
        return Err(Error::TuneInfeasible(format!(
            "kp = {kp} alone already exceeds unit loop gain at {omega_c} rad/s (|G| = {g:.6e})"
        )));
    }
    PIGains::new(kp, omega_c * need.sqrt())
}

const PM_ACCEPT_DEG: f64 = 0.1;

/// `(ki, pm)` matching the gain-margin target for PI zero ratio `r`.
fn pm_at_ratio(plant: &TransferFunction, r: f64, gm_db: f64, opts: &MarginOptions) -> Result<Option<(f64, f64)>> {
    let unit = loop_gain(plant, &PIGains { kp: r, ki: 1.0 })?;
    let Some((gm1, _)) = crossings(&unit.tf, opts)?.gain_margin else {
        return Ok(None);
    };
    let ki = 10f64.powf((gm1 - gm_db) / 20.0);
    let l = loop_gain(plant, &PIGains { kp: r * ki, ki })?;
    let c = crossings(&l.tf, opts)?;
    Ok(c.phase_margin.map(|pm| (ki, pm)))
}

/// Gains whose loop meets both margin targets. `kp = 0` is preferred when
/// it already lands within 0.1° of the phase target; otherwise the smallest
/// PI zero ratio that meets the target exactly is returned.
pub fn tune_margin_pair(plant: &TransferFunction, gm_db: f64, pm_deg: f64) -> Result<PIGains> {
    TuneTarget::MarginPair { gm_db, pm_deg }.validate()?;
    let opts = MarginOptions::default();
    if let Some((ki, pm)) = pm_at_ratio(plant, 0.0, gm_db, &opts)? {
        if (pm - pm_deg).abs() <= PM_ACCEPT_DEG {
            return PIGains::new(0.0, ki);
        }
    }

    // PI zero frequency 1/r swept from far above the plant dynamics to far below
    let roots: Vec<f64> = plant
        .poles()?
        .roots
        .iter()
        .chain(plant.zeros()?.roots.iter())
        .map(|z| z.norm())
        .filter(|n| *n > 0.0)
        .collect();
    let hi = roots.iter().copied().fold(1.0, f64::max);
    let lo = roots.iter().copied().fold(hi, f64::min);
    let ratios = log_grid(1e-3 / hi, 1e2 / lo, 241);

    let mut samples: Vec<(f64, f64, f64)> = Vec::new();
    let mut prev: Option<(f64, f64)> = pm_at_ratio(plant, 0.0, gm_db, &opts)?.map(|(_, pm)| (0.0, pm - pm_deg));
    for &r in &ratios {
        let cur = pm_at_ratio(plant, r, gm_db, &opts)?;
        let Some((ki, pm)) = cur else {
            prev = None;
            continue;
        };
        samples.push((r, ki, pm));
        let f = pm - pm_deg;
        if let Some((r0, f0)) = prev {
            if (f0 < 0.0) != (f < 0.0) || f == 0.0 {
                return refine_ratio(plant, r0, r, f0, gm_db, pm_deg, &opts);
            }
        }
        prev = Some((r, f));
    }
    let frontier: Vec<String> = samples
        .iter()
        .step_by(24)
        .map(|(r, ki, pm)| format!("(kp={:.4e}, ki={:.4e}, pm={:.2})", r * ki, ki, pm))
        .collect();
    Err(Error::TuneInfeasible(format!(
        "no PI gains give {gm_db} dB and {pm_deg} deg; achievable at that gain margin: {}",
        frontier.join(", ")
    )))
}

fn refine_ratio(
    plant: &TransferFunction,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    gm_db: f64,
    pm_deg: f64,
    opts: &MarginOptions,
) -> Result<PIGains> {
    let eval = |r: f64| -> Result<(f64, f64)> {
        pm_at_ratio(plant, r, gm_db, opts)?
            .map(|(ki, pm)| (ki, pm - pm_deg))
            .ok_or_else(|| Error::Numerical(format!("margin lost while refining r = {r}")))
    };
    let mut best = eval(b)?;
    let mut best_r = b;
    for _ in 0..100 {
        let m = if a == 0.0 { 0.5 * b } else { (a * b).sqrt() };
        let (ki, f) = eval(m)?;
        if f.abs() < best.1.abs() {
            best = (ki, f);
            best_r = m;
        }
        if f.abs() < 1e-9 || (b - a) <= 1e-12 * b {
            break;
        }
        if (f < 0.0) == (fa < 0.0) {
            a = m;
            fa = f;
        } else {
            b = m;
        }
    }
    PIGains::new(best_r * best.0, best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::freq::margins;
    use crate::model::{CircuitParams, ControlInput, Converter, Rectifier, Topology};
    use crate::tf::closed_form_tf;

    fn plant(c: Converter, r: Rectifier) -> TransferFunction {
        closed_form_tf(Topology::new(c, r), &CircuitParams::nominal(), &ControlInput::nominal()).unwrap()
    }

    #[test]
    fn crossover_with_fixed_kp() {
        let g = plant(Converter::Buck, Rectifier::OriginalDiode);
        let c = tune_crossover(&g, 300.0, 0.0027284).unwrap();
        assert!((c.ki - 17.1836).abs() / 17.1836 < 5e-3, "{c:?}");
        let l = loop_gain(&g, &c).unwrap();
        assert!((l.tf.at_jw(300.0).norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn crossover_boundary_cases() {
        let g = TransferFunction::new(vec![2.0], vec![1.0, 1.0]).unwrap();
        let w = 3f64.sqrt(); // |G(jw)| = 1
        assert_eq!(tune_crossover(&g, w, 1.0), Err(Error::ZeroIntegralGain));
        assert!(matches!(tune_crossover(&g, w, 2.0), Err(Error::TuneInfeasible(_))));
        assert!(tune_crossover(&g, -1.0, 0.0).is_err());
    }

    #[test]
    fn margin_pair_prefers_pure_integral() {
        let g = plant(Converter::Buck, Rectifier::OriginalDiode);
        let c = tune_margin_pair(&g, 20.0, 76.8).unwrap();
        assert_eq!(c.kp, 0.0);
        assert!((c.ki - 6.64).abs() < 0.05, "{c:?}");
    }

    #[test]
    fn margin_pair_round_trip_with_pi_zero() {
        let g = plant(Converter::Buck, Rectifier::ModifiedActive);
        let c = tune_margin_pair(&g, 20.0, 76.8).unwrap();
        assert!(c.kp > 0.0);
        let m = margins(&loop_gain(&g, &c).unwrap()).unwrap();
        assert!((m.gain_margin_db.unwrap() - 20.0).abs() < 0.1);
        assert!((m.phase_margin_deg.unwrap() - 76.8).abs() < 0.1);
        assert!((m.crossover_rad_s.unwrap() - 480.0).abs() < 5.0, "{m:?}");
    }

    #[test]
    fn impossible_pair_reports_frontier() {
        let g = TransferFunction::new(vec![1.0], vec![1.0, 3.0, 3.0, 1.0]).unwrap();
        match tune_margin_pair(&g, 1.0, 89.0) {
            Err(Error::TuneInfeasible(msg)) => assert!(msg.contains("achievable")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn target_ranges() {
        assert!(TuneTarget::MarginPair { gm_db: 0.0, pm_deg: 40.0 }.validate().is_err());
        assert!(TuneTarget::MarginPair { gm_db: 6.0, pm_deg: 95.0 }.validate().is_err());
    }
}
