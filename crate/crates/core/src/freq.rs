//! Frequency responses, PI loop gains, stability margins and Nyquist counts.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::poly;
use crate::tf::{is_rhp, RootSet, TransferFunction};

/// PI compensator `kp + ki/s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PIGains {
    pub kp: f64,
    pub ki: f64,
}

impl PIGains {
    pub fn new(kp: f64, ki: f64) -> Result<Self> {
        let g = Self { kp, ki };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        ensure_finite("kp", self.kp)?;
        ensure_finite("ki", self.ki)?;
        if self.kp < 0.0 || self.ki < 0.0 {
            return Err(Error::InvalidInput(format!("PI gains must be nonnegative (kp={}, ki={})", self.kp, self.ki)));
        }
        if self.kp == 0.0 && self.ki == 0.0 {
            return Err(Error::InvalidInput("kp and ki cannot both be zero".into()));
        }
        Ok(())
    }

    /// `(kp·s + ki) / s`.
    pub fn as_tf(&self) -> TransferFunction {
        TransferFunction { num: poly::trim(&[self.kp, self.ki]), den: vec![1.0, 0.0] }
    }
}

/// Standard log-spaced grid.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && lo > 0.0 && hi > lo);
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|k| (a + (b - a) * k as f64 / (n - 1) as f64).exp()).collect()
}

/// Continuous phase of a rational function along the positive imaginary axis,
/// built from its roots so that it can be queried at any frequency.
#[derive(Debug, Clone)]
pub struct PhaseTrack {
    zeros: Vec<Complex64>,
    poles: Vec<Complex64>,
    offset_deg: f64,
}

fn factor_phase(r: Complex64, omega: f64) -> f64 {
    // arg(jω − r), continuous in ω for roots off the imaginary axis
    let y = omega - r.im;
    if r.re < 0.0 {
        y.atan2(-r.re)
    } else if r.re > 0.0 {
        PI - y.atan2(r.re)
    } else if y > 0.0 {
        PI / 2.0
    } else if y < 0.0 {
        -PI / 2.0
    } else {
        0.0
    }
}

impl PhaseTrack {
    pub fn new(tf: &TransferFunction) -> Result<Self> {
        let zeros = tf.zeros()?.roots;
        let poles = tf.poles()?.roots;
        let lead = tf.num[0] / tf.den[0];
        let gain_phase = if lead < 0.0 { PI } else { 0.0 };
        // low-frequency anchor: lowest-order coefficients and origin roots
        let low = |c: &[f64]| {
            let k = c.iter().rposition(|v| *v != 0.0).unwrap_or(0);
            (c[k], c.len() - 1 - k)
        };
        let (n0, nz) = low(&tf.num);
        let (d0, np) = low(&tf.den);
        let anchor = if n0 / d0 < 0.0 { PI } else { 0.0 } - (np as f64 - nz as f64) * PI / 2.0;
        let mut t = Self { zeros, poles, offset_deg: gain_phase.to_degrees() };
        let at_zero = t.raw_rad(0.0);
        let k = ((at_zero - anchor) / (2.0 * PI)).round();
        t.offset_deg -= k * 360.0;
        Ok(t)
    }

    fn raw_rad(&self, omega: f64) -> f64 {
        let eps = if omega == 0.0 { f64::MIN_POSITIVE } else { omega };
        let z: f64 = self.zeros.iter().map(|r| factor_phase(*r, eps)).sum();
        let p: f64 = self.poles.iter().map(|r| factor_phase(*r, eps)).sum();
        self.offset_deg.to_radians() + z - p
    }

    pub fn phase_deg(&self, omega: f64) -> f64 {
        self.raw_rad(omega).to_degrees()
    }
}

/// Sampled response `G(jω)` with unwrapped phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyResponse {
    pub omega: Vec<f64>,
    pub value: Vec<Complex64>,
    pub phase_deg: Vec<f64>,
    /// Grid points that sit on an imaginary-axis pole.
    pub singular: Vec<bool>,
}

impl FrequencyResponse {
    pub fn magnitude_db(&self) -> Vec<f64> {
        self.value.iter().map(|v| 20.0 * v.norm().log10()).collect()
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidInput("empty frequency grid".into()));
    }
    if grid.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidInput("frequencies must be finite and nonnegative".into()));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("frequency grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Evaluates `tf` at `s = jω` on the grid.
pub fn evaluate(tf: &TransferFunction, grid: &[f64]) -> Result<FrequencyResponse> {
    check_grid(grid)?;
    let track = PhaseTrack::new(tf)?;
    let den_scale: f64 = tf.den.iter().map(|c| c.abs()).sum();
    let mut out = FrequencyResponse {
        omega: grid.to_vec(),
        value: Vec::with_capacity(grid.len()),
        phase_deg: Vec::with_capacity(grid.len()),
        singular: Vec::with_capacity(grid.len()),
    };
    for &w in grid {
        let s = Complex64::new(0.0, w);
        let d = poly::eval_complex(&tf.den, s);
        let scale = tf.den.iter().fold(0.0, |acc, c| acc * w + c.abs()).max(den_scale * f64::MIN_POSITIVE);
        let singular = d.norm() <= 1e-13 * scale;
        let v = poly::eval_complex(&tf.num, s) / d;
        let principal = v.arg().to_degrees();
        let tracked = track.phase_deg(w);
        let phase = if v.norm() > 0.0 && v.norm().is_finite() {
            principal + 360.0 * ((tracked - principal) / 360.0).round()
        } else {
            tracked
        };
        out.value.push(v);
        out.phase_deg.push(phase);
        out.singular.push(singular);
    }
    Ok(out)
}

/// Loop gain `σ·C(s)·G(s)` with the polarity `σ` that makes its DC sign positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopGain {
    pub tf: TransferFunction,
    pub polarity: i8,
}

impl LoopGain {
    /// Wraps an arbitrary open-loop function with positive polarity.
    pub fn from_tf(tf: TransferFunction) -> Self {
        Self { tf, polarity: 1 }
    }
}

/// `sign(G(0))`; an error when the plant has no DC gain.
pub fn loop_polarity(plant: &TransferFunction) -> Result<i8> {
    let g0 = plant.dc_gain();
    if g0 == 0.0 || g0.is_nan() {
        return Err(Error::PolarityUndefined(g0));
    }
    Ok(if g0 > 0.0 { 1 } else { -1 })
}

pub fn loop_gain(plant: &TransferFunction, c: &PIGains) -> Result<LoopGain> {
    c.validate()?;
    let sigma = loop_polarity(plant)?;
    let tf = plant.series(&c.as_tf());
    let tf = TransferFunction { num: poly::scale(&tf.num, sigma as f64), den: tf.den };
    Ok(LoopGain { tf, polarity: sigma })
}

/// Roots of `1 + T(s)`.
pub fn closed_loop_poles(plant: &TransferFunction, c: &PIGains) -> Result<RootSet> {
    let l = loop_gain(plant, c)?;
    l.tf.feedback_unity().poles()
}

/// Options controlling the margin search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginOptions {
    pub omega_min: f64,
    pub omega_max: f64,
    pub points: usize,
}

impl Default for MarginOptions {
    fn default() -> Self {
        Self { omega_min: 1.0, omega_max: 1e6, points: 600 }
    }
}

/// Crossovers, margins and Nyquist verdict of a loop gain. `None` stands for
/// an unbounded quantity (no crossing inside the searched band).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub crossover_rad_s: Option<f64>,
    pub crossover_count: usize,
    pub phase_margin_deg: Option<f64>,
    pub gain_margin_db: Option<f64>,
    pub gain_margin_rad_s: Option<f64>,
    pub nyquist_stable: bool,
    pub encirclements_cw: i64,
    pub loop_polarity: i8,
    pub omega_min: f64,
    pub omega_max: f64,
}

fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if hi / lo - 1.0 < 1e-13 {
            return mid;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == (flo < 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    (lo * hi).sqrt()
}

pub fn margins(l: &LoopGain) -> Result<MarginReport> {
    margins_with(l, &MarginOptions::default())
}

/// Gain and phase crossings of a loop gain, without the Nyquist count.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Crossings {
    pub crossovers: Vec<f64>,
    pub phase_margin: Option<f64>,
    pub gain_margin: Option<(f64, f64)>,
}

pub fn margins_with(l: &LoopGain, opts: &MarginOptions) -> Result<MarginReport> {
    let c = crossings(&l.tf, opts)?;
    let (cw, stable) = nyquist_count(&l.tf)?;
    Ok(MarginReport {
        crossover_rad_s: c.crossovers.first().copied(),
        crossover_count: c.crossovers.len(),
        phase_margin_deg: c.phase_margin,
        gain_margin_db: c.gain_margin.map(|g| g.0),
        gain_margin_rad_s: c.gain_margin.map(|g| g.1),
        nyquist_stable: stable,
        encirclements_cw: cw,
        loop_polarity: l.polarity,
        omega_min: opts.omega_min,
        omega_max: opts.omega_max,
    })
}

pub(crate) fn crossings(tf: &TransferFunction, opts: &MarginOptions) -> Result<Crossings> {
    let grid = log_grid(opts.omega_min, opts.omega_max, opts.points.max(2));
    let track = PhaseTrack::new(tf)?;
    let log_mag = |w: f64| tf.at_jw(w).norm().ln();

    let mags: Vec<f64> = grid.iter().map(|w| log_mag(*w)).collect();
    let mut crossovers = Vec::new();
    for k in 0..grid.len() - 1 {
        let (a, b) = (mags[k], mags[k + 1]);
        if a == 0.0 {
            crossovers.push(grid[k]);
        } else if (a < 0.0) != (b < 0.0) && b != 0.0 {
            crossovers.push(bisect(grid[k], grid[k + 1], log_mag));
        }
    }
    if let Some(&b) = mags.last() {
        if b == 0.0 {
            crossovers.push(*grid.last().unwrap());
        }
    }
    let crossover = crossovers.first().copied();
    let phase_margin = crossover.map(|wc| {
        let ph = track.phase_deg(wc) + 180.0;
        ph - 360.0 * ((ph) / 360.0).round()
    });

    // −180° modulo 360 crossings
    let phases: Vec<f64> = grid.iter().map(|w| track.phase_deg(*w)).collect();
    let mut gm: Option<(f64, f64)> = None;
    for k in 0..grid.len() - 1 {
        let (a, b) = (phases[k], phases[k + 1]);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        // odd multiples of 180 inside [lo, hi]
        let first = ((lo - 180.0) / 360.0).ceil() as i64;
        let last = ((hi - 180.0) / 360.0).floor() as i64;
        for m in first..=last {
            let target = 180.0 + 360.0 * m as f64;
            if a == target && k > 0 {
                // already counted as the end of the previous interval
                continue;
            }
            let w = if a == target {
                grid[k]
            } else if b == target {
                grid[k + 1]
            } else {
                bisect(grid[k], grid[k + 1], |w| track.phase_deg(w) - target)
            };
            let g = -20.0 * tf.at_jw(w).norm().log10();
            if gm.is_none_or(|(best, _)| g < best) {
                gm = Some((g, w));
            }
        }
    }

    Ok(Crossings { crossovers, phase_margin, gain_margin: gm })
}

/// Clockwise encirclements of `−1` by `T` along the right-half-plane
/// D-contour (indented around poles at the origin), and whether the closed
/// loop `T/(1+T)` is stable.
pub fn nyquist_count(tf: &TransferFunction) -> Result<(i64, bool)> {
    let poles = tf.poles()?;
    let zeros = tf.zeros()?;
    let all: Vec<f64> =
        poles.roots.iter().chain(zeros.roots.iter()).map(|z| z.norm()).filter(|n| *n > 0.0).collect();
    let big = all.iter().copied().fold(1.0, f64::max);
    let small = all.iter().copied().fold(big, f64::min);
    for p in &poles.roots {
        if p.re == 0.0 && p.im != 0.0 || (p.re.abs() <= 1e-12 * p.norm() && p.norm() > 0.0) {
            return Err(Error::Numerical(format!("open-loop pole on the imaginary axis at {p}; contour indentation unsupported")));
        }
    }
    let open_rhp = poles.roots.iter().filter(|p| is_rhp(**p)).count() as i64;
    let r_big = 1e4 * big;
    let eps = 1e-6 * small;
    let f = |s: Complex64| Complex64::new(1.0, 0.0) + tf.eval(s);

    // contour pieces as maps from a parameter in [0, 1]
    let (la, lb) = (eps.ln(), r_big.ln());
    let piece = |k: usize, t: f64| match k {
        // −jR → −jε
        0 => Complex64::new(0.0, -(lb + (la - lb) * t).exp()),
        // small right semicircle −90° → 90°
        1 => Complex64::from_polar(eps, -PI / 2.0 + PI * t),
        // jε → jR
        2 => Complex64::new(0.0, (la + (lb - la) * t).exp()),
        // big semicircle 90° → −90° through +R
        _ => Complex64::from_polar(r_big, PI / 2.0 - PI * t),
    };
    // narrow resonances near the axis get extra seed points
    let mut marks: Vec<f64> = Vec::new();
    for z in poles.roots.iter().chain(zeros.roots.iter()).filter(|z| z.im > 0.0) {
        let width = z.re.abs().max(1e-9 * z.im);
        for j in -32..=32 {
            let w = z.im + 0.25 * j as f64 * width;
            if w > eps && w < r_big {
                marks.push((w.ln() - la) / (lb - la));
            }
        }
    }
    let mirrored: Vec<f64> = marks.iter().map(|t| 1.0 - t).collect();
    let mut total = 0.0;
    for k in 0..4 {
        let extra: &[f64] = match k {
            0 => &mirrored,
            2 => &marks,
            _ => &[],
        };
        total += arg_change(|t| f(piece(k, t)), extra)?;
    }
    let winding_ccw = (total / (2.0 * PI)).round() as i64;
    let cw = -winding_ccw;
    let z = cw + open_rhp;
    Ok((cw, z == 0))
}

/// Total argument change of `f` over `[0, 1]`, seeded on a uniform grid plus `extra`.
fn arg_change(f: impl Fn(f64) -> Complex64 + Copy, extra: &[f64]) -> Result<f64> {
    const SEED: usize = 512;
    let mut ts: Vec<f64> = (0..=SEED).map(|k| k as f64 / SEED as f64).collect();
    ts.extend(extra.iter().copied().filter(|t| *t > 0.0 && *t < 1.0));
    ts.sort_by(f64::total_cmp);
    ts.dedup();
    let mut total = 0.0;
    let mut prev = f(ts[0]);
    for w in ts.windows(2) {
        let cur = f(w[1]);
        total += refine(f, w[0], w[1], prev, cur, 0)?;
        prev = cur;
    }
    Ok(total)
}

fn refine(f: impl Fn(f64) -> Complex64 + Copy, a: f64, b: f64, fa: Complex64, fb: Complex64, depth: u32) -> Result<f64> {
    if !(fa.norm().is_finite() && fb.norm().is_finite()) || fa.norm() == 0.0 || fb.norm() == 0.0 {
        return Err(Error::Numerical("Nyquist contour passes through a closed-loop pole".into()));
    }
    let d = (fb / fa).arg();
    let m = 0.5 * (a + b);
    if d.abs() < 0.3 || depth > 40 {
        if depth > 40 {
            return Err(Error::Numerical("Nyquist contour refinement did not converge".into()));
        }
        // confirm with the midpoint
        let fm = f(m);
        let d1 = (fm / fa).arg();
        let d2 = (fb / fm).arg();
        if (d1 + d2 - d).abs() < 1e-9 {
            return Ok(d);
        }
        return Ok(refine(f, a, m, fa, fm, depth + 1)? + refine(f, m, b, fm, fb, depth + 1)?);
    }
    let fm = f(m);
    Ok(refine(f, a, m, fa, fm, depth + 1)? + refine(f, m, b, fm, fb, depth + 1)?)
}
