//! Control-to-output transfer functions and their roots.
//!
//! [`closed_form_tf`] writes the six receiver transfer functions directly in
//! terms of the circuit parameters. [`tf_from_state_space`] derives the same
//! functions from any linearised model, so the two routes check each other.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::linalg::{dot3, matvec3, resolvent_expansion};
use crate::model::{CircuitParams, ControlInput, Converter, LinearStateSpace, Rectifier, Topology};
use crate::poly;

/// Ratio of two real polynomials in `s`, coefficients in descending powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferFunction {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

impl TransferFunction {
    pub fn new(num: Vec<f64>, den: Vec<f64>) -> Result<Self> {
        if num.iter().chain(den.iter()).any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("transfer function coefficients must be finite".into()));
        }
        let den = poly::trim(&den);
        if den.is_empty() {
            return Err(Error::InvalidInput("denominator is identically zero".into()));
        }
        let mut num = poly::trim(&num);
        if num.is_empty() {
            num.push(0.0);
        }
        Ok(Self { num, den })
    }

    pub fn constant(k: f64) -> Result<Self> {
        Self::new(vec![k], vec![1.0])
    }

    /// Numerator degree; `None` for the zero function.
    pub fn num_degree(&self) -> Option<usize> {
        poly::degree(&self.num)
    }

    pub fn den_degree(&self) -> usize {
        self.den.len() - 1
    }

    pub fn is_zero(&self) -> bool {
        self.num.iter().all(|c| *c == 0.0)
    }

    /// Copy scaled so the leading denominator coefficient is one.
    pub fn monic(&self) -> Self {
        let k = self.den[0];
        Self { num: poly::scale(&self.num, 1.0 / k), den: poly::scale(&self.den, 1.0 / k) }
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        poly::eval_complex(&self.num, s) / poly::eval_complex(&self.den, s)
    }

    pub fn at_jw(&self, omega: f64) -> Complex64 {
        self.eval(Complex64::new(0.0, omega))
    }

    /// `G(0)`; infinite when the denominator vanishes at the origin.
    pub fn dc_gain(&self) -> f64 {
        let n = *self.num.last().unwrap();
        let d = *self.den.last().unwrap();
        n / d
    }

    pub fn zeros(&self) -> Result<RootSet> {
        if self.is_zero() {
            return Ok(RootSet::default());
        }
        Ok(RootSet::new(poly::roots(&self.num)?))
    }

    pub fn poles(&self) -> Result<RootSet> {
        Ok(RootSet::new(poly::roots(&self.den)?))
    }

    pub fn series(&self, other: &Self) -> Self {
        Self { num: poly::mul(&self.num, &other.num), den: poly::mul(&self.den, &other.den) }
    }

    /// `T / (1 + T)` for unity negative feedback.
    pub fn feedback_unity(&self) -> Self {
        Self { num: self.num.clone(), den: poly::trim(&poly::add(&self.den, &self.num)) }
    }

    /// Largest coefficient mismatch after bringing both functions to monic
    /// form: `max_k |aₖ − bₖ| / max(|aₖ|, |bₖ|)`, ignoring pairs that are
    /// both exactly zero.
    pub fn max_relative_mismatch(&self, other: &Self) -> f64 {
        fn coef_err(a: &[f64], b: &[f64]) -> f64 {
            let n = a.len().max(b.len());
            let pad = |v: &[f64]| {
                let mut out = vec![0.0; n - v.len()];
                out.extend_from_slice(v);
                out
            };
            let (a, b) = (pad(a), pad(b));
            a.iter()
                .zip(b.iter())
                .map(|(x, y)| {
                    let m = x.abs().max(y.abs());
                    if m == 0.0 {
                        0.0
                    } else {
                        (x - y).abs() / m
                    }
                })
                .fold(0.0, f64::max)
        }
        let (a, b) = (self.monic(), other.monic());
        coef_err(&a.num, &b.num).max(coef_err(&a.den, &b.den))
    }
}

/// Roots of a polynomial, in rad/s.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RootSet {
    pub roots: Vec<Complex64>,
}

impl RootSet {
    pub fn new(mut roots: Vec<Complex64>) -> Self {
        roots.sort_by(|a, b| a.re.total_cmp(&b.re).then(b.im.total_cmp(&a.im)));
        Self { roots }
    }

    pub fn len(&self) -> usize {
        self.roots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roots.is_empty()
    }

    /// Roots with strictly positive real part, beyond `1e-9·max(1, |z|)`.
    pub fn right_half_plane(&self) -> Vec<Complex64> {
        self.roots.iter().copied().filter(|z| is_rhp(*z)).collect()
    }

    pub fn max_real(&self) -> f64 {
        self.roots.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Groups roots that agree to `rel_tol` into `(root, multiplicity)`.
    pub fn multiplicities(&self, rel_tol: f64) -> Vec<(Complex64, usize)> {
        let mut out: Vec<(Complex64, usize)> = Vec::new();
        for z in &self.roots {
            match out.iter_mut().find(|(r, _)| (r - z).norm() <= rel_tol * r.norm().max(1.0)) {
                Some((_, m)) => *m += 1,
                None => out.push((*z, 1)),
            }
        }
        out
    }

    /// True when every root of `self` lies within `rel_tol` of some root of `other`.
    pub fn is_subset_of(&self, other: &RootSet, rel_tol: f64) -> bool {
        self.roots
            .iter()
            .all(|z| other.roots.iter().any(|w| (z - w).norm() <= rel_tol * z.norm().max(1e-300)))
    }
}

pub fn is_rhp(z: Complex64) -> bool {
    z.re > 1e-9 * z.norm().max(1.0)
}

fn validated(top: Topology, p: &CircuitParams, u: &ControlInput) -> Result<()> {
    p.validate()?;
    u.validate(top)
}

/// The receiver's control-to-output transfer function in closed form, with
/// the raw scaling of its defining expression (including the `1/π` factors).
pub fn closed_form_tf(top: Topology, p: &CircuitParams, u: &ControlInput) -> Result<TransferFunction> {
    validated(top, p, u)?;
    let CircuitParams { i_ls_amplitude: i, c_dc, l, c_o, r_load: r, .. } = *p;
    let d = u.d_dcdc;
    let dd = d * d;
    let one_m = (1.0 - d) * (1.0 - d);
    let cubic = |c1: f64, c0: f64| vec![c_o * c_dc * l * r, c_dc * l, c1, c0];
    let (num, den) = match (top.converter, top.rectifier) {
        (Converter::Buck, Rectifier::OriginalDiode) => (
            poly::scale(&[c_dc * r, -dd], 2.0 * r * i),
            poly::scale(&cubic(c_o * r * dd + c_dc * r, dd), PI * dd),
        ),
        (Converter::BuckBoost, Rectifier::OriginalDiode) => (
            poly::scale(&[c_dc * l * d, -c_dc * r * one_m, dd], -2.0 * r * i),
            poly::scale(&cubic((c_o * dd + c_dc * one_m) * r, dd), PI * dd),
        ),
        (Converter::Boost, Rectifier::OriginalDiode) => (
            poly::scale(&[c_dc * l, -c_dc * r * one_m, 1.0], -2.0 * r * i),
            poly::scale(&cubic((c_o + c_dc * one_m) * r, 1.0), PI),
        ),
        (converter, Rectifier::ModifiedActive) => {
            let sin = (2.0 * PI * u.d_rect).sin();
            match converter {
                Converter::Buck => (vec![2.0 * d * i * r * sin], cubic(c_o * r * dd + c_dc * r, dd)),
                Converter::BuckBoost => {
                    (vec![2.0 * d * i * r * sin * (1.0 - d)], cubic((c_o * dd + c_dc * one_m) * r, dd))
                }
                Converter::Boost => (vec![2.0 * i * r * sin * (1.0 - d)], cubic((c_o + c_dc * one_m) * r, 1.0)),
            }
        }
    };
    TransferFunction::new(num, den)
}

/// `C·(sI − A)⁻¹·B + D` via the characteristic polynomial and adjugate.
pub fn tf_from_state_space(m: &LinearStateSpace) -> Result<TransferFunction> {
    for v in m.a.iter().flatten().chain(m.b.iter()).chain(m.c.iter()) {
        ensure_finite("state-space entry", *v)?;
    }
    let (ch, adj) = resolvent_expansion(&m.a);
    let den = vec![1.0, ch[0], ch[1], ch[2]];
    let num: Vec<f64> = std::iter::once(0.0)
        .chain(adj.iter().map(|mk| dot3(&m.c, &matvec3(mk, &m.b))))
        .collect();
    let num = poly::add(&num, &poly::scale(&den, m.d));
    TransferFunction::new(num, den)
}

/// Right-half-plane zeros from their closed-form expressions. The active
/// rectifier receivers have none.
pub fn closed_form_rhp_zeros(top: Topology, p: &CircuitParams, u: &ControlInput) -> Result<RootSet> {
    validated(top, p, u)?;
    if top.is_modified() {
        return Ok(RootSet::default());
    }
    let CircuitParams { c_dc, l, r_load: r, .. } = *p;
    let d = u.d_dcdc;
    let a = c_dc * r * (1.0 - d) * (1.0 - d);
    let pair = |disc: f64, denom: f64| {
        let sq = Complex64::new(disc, 0.0).sqrt();
        vec![(a + sq) / denom, (a - sq) / denom]
    };
    let roots = match top.converter {
        Converter::Buck => vec![Complex64::new(d * d / (c_dc * r), 0.0)],
        Converter::BuckBoost => pair(a * a - 4.0 * d.powi(3) * c_dc * l, 2.0 * c_dc * l * d),
        Converter::Boost => pair(a * a - 4.0 * c_dc * l, 2.0 * c_dc * l),
    };
    Ok(RootSet::new(roots))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::linearize;

    const BUCK_O: Topology = Topology::new(Converter::Buck, Rectifier::OriginalDiode);
    const BUCK_M: Topology = Topology::new(Converter::Buck, Rectifier::ModifiedActive);
    const BB_O: Topology = Topology::new(Converter::BuckBoost, Rectifier::OriginalDiode);
    const BOOST_O: Topology = Topology::new(Converter::Boost, Rectifier::OriginalDiode);

    #[test]
    fn buck_original_dc_gain_is_negative() {
        let p = CircuitParams::nominal();
        let g = closed_form_tf(BUCK_O, &p, &ControlInput::new(0.5, 0.5)).unwrap();
        // numerator 2RI(C_DC R s − D²) at s = 0
        let n0 = *g.num.last().unwrap();
        assert!((n0 / (-0.25) - 2.0 * 7.0).abs() < 1e-12);
        let gain = g.dc_gain();
        assert!((gain - (-2.0 * 7.0 / (PI * 0.25))).abs() < 1e-9);
    }

    #[test]
    fn buck_original_state_space_dc_gain_matches() {
        let p = CircuitParams::nominal();
        let u = ControlInput::new(0.5, 0.5);
        let m = linearize(BUCK_O, &p, &u).unwrap();
        // −C A⁻¹ B
        let x = crate::linalg::solve3(&m.a, &m.b).unwrap();
        let ss_gain = -dot3(&m.c, &x);
        let g = closed_form_tf(BUCK_O, &p, &u).unwrap().dc_gain();
        assert!((ss_gain - g).abs() < 1e-9 * g.abs());
    }

    #[test]
    fn buck_modified_has_constant_numerator() {
        let p = CircuitParams::nominal();
        let g = closed_form_tf(BUCK_M, &p, &ControlInput::nominal()).unwrap();
        assert_eq!(g.num_degree(), Some(0));
        let want = 2.0 * 0.5 * 7.0 * (2.0 * PI * 0.51).sin();
        assert!((g.num[0] - want).abs() < 1e-15);
        assert!(g.zeros().unwrap().is_empty());
    }

    #[test]
    fn boost_denominator_ends() {
        let p = CircuitParams::nominal();
        let g = closed_form_tf(BOOST_O, &p, &ControlInput::nominal()).unwrap().monic();
        let raw = closed_form_tf(BOOST_O, &p, &ControlInput::nominal()).unwrap();
        assert!((raw.den[3] - PI).abs() < 1e-15);
        assert!((raw.den[0] / PI - 40e-6 * 30e-6 * 77e-6 * 7.0).abs() < 1e-25);
        assert_eq!(g.den[0], 1.0);
    }

    #[test]
    fn zero_input_column_gives_zero_numerator() {
        let p = CircuitParams::nominal();
        let m = linearize(BUCK_M, &p, &ControlInput::new(0.5, 0.5)).unwrap();
        let mut m = m;
        m.b = [0.0; 3];
        let g = tf_from_state_space(&m).unwrap();
        assert!(g.is_zero());
    }

    #[test]
    fn diagonal_realisation_is_first_order() {
        // A = diag(−1, −2, −5), B = e₂, C = e₂ → 1/(s + 2)
        let m = LinearStateSpace {
            a: [[-1.0, 0.0, 0.0], [0.0, -2.0, 0.0], [0.0, 0.0, -5.0]],
            b: [0.0, 1.0, 0.0],
            c: [0.0, 1.0, 0.0],
            d: 0.0,
        };
        let g = tf_from_state_space(&m).unwrap();
        // (s+1)(s+5) / ((s+1)(s+2)(s+5))
        assert_eq!(g.num, vec![1.0, 6.0, 5.0]);
        assert_eq!(g.den, vec![1.0, 8.0, 17.0, 10.0]);
        let s = Complex64::new(0.3, 1.7);
        assert!((g.eval(s) - 1.0 / (s + 2.0)).norm() < 1e-14);
    }

    #[test]
    fn buck_zero_value() {
        let p = CircuitParams::nominal();
        let u = ControlInput::nominal();
        let z = closed_form_rhp_zeros(BUCK_O, &p, &u).unwrap();
        assert_eq!(z.len(), 1);
        assert!((z.roots[0].re - 0.25 / (30e-6 * 7.0)).abs() < 1e-9);
        let numeric = closed_form_tf(BUCK_O, &p, &u).unwrap().zeros().unwrap();
        assert!(z.is_subset_of(&numeric, 1e-9));
    }

    #[test]
    fn buck_boost_zeros_are_real_and_positive() {
        let p = CircuitParams::nominal();
        let u = ControlInput::nominal();
        let z = closed_form_tf(BB_O, &p, &u).unwrap().zeros().unwrap();
        assert_eq!(z.right_half_plane().len(), 2);
        assert!(z.roots.iter().all(|r| r.im == 0.0));
        assert!((z.roots[0].re - 5404.49).abs() < 0.1, "{z:?}");
        assert!((z.roots[1].re - 40050.05).abs() < 0.1);
    }

    #[test]
    fn boost_zeros_are_a_complex_rhp_pair() {
        let p = CircuitParams::nominal();
        let u = ControlInput::nominal();
        let z = closed_form_rhp_zeros(BOOST_O, &p, &u).unwrap();
        for r in &z.roots {
            assert!((r.re - 11363.636).abs() < 0.01);
            assert!((r.im.abs() - 17428.947).abs() < 0.01);
        }
        let numeric = closed_form_tf(BOOST_O, &p, &u).unwrap().zeros().unwrap();
        assert!(z.is_subset_of(&numeric, 1e-6));
    }

    #[test]
    fn multiplicities_group_repeated_roots() {
        let r = RootSet::new(vec![Complex64::new(1.0, 0.0), Complex64::new(1.0, 1e-12), Complex64::new(3.0, 0.0)]);
        let m = r.multiplicities(1e-9);
        assert_eq!(m.len(), 2);
        assert_eq!(m.iter().map(|x| x.1).max(), Some(2));
    }
}
