//! Real polynomials in descending-power form and their roots.
//!
//! Degrees 1 and 2 are solved in closed form. Cubics take one real root
//! (trigonometric/Cardano estimate, safeguarded Newton), deflate to a
//! quadratic, and polish every root with one complex Newton step against the
//! original cubic. Higher degrees use Aberth–Ehrlich simultaneous iteration.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Drops leading coefficients that are exactly zero.
pub fn trim(coeffs: &[f64]) -> Vec<f64> {
    let first = coeffs.iter().position(|c| *c != 0.0).unwrap_or(coeffs.len());
    coeffs[first..].to_vec()
}

pub fn degree(coeffs: &[f64]) -> Option<usize> {
    let t = trim(coeffs);
    if t.is_empty() {
        None
    } else {
        Some(t.len() - 1)
    }
}

pub fn eval(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, c| acc * x + c)
}

pub fn eval_complex(coeffs: &[f64], z: Complex64) -> Complex64 {
    coeffs.iter().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c)
}

/// `p(z)` and `p'(z)` by one Horner pass.
fn eval_with_derivative(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for c in coeffs {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = a.len().max(b.len());
    let mut out = vec![0.0; n];
    for (i, x) in a.iter().enumerate() {
        out[n - a.len() + i] += x;
    }
    for (i, y) in b.iter().enumerate() {
        out[n - b.len() + i] += y;
    }
    out
}

pub fn scale(a: &[f64], k: f64) -> Vec<f64> {
    a.iter().map(|c| c * k).collect()
}

/// `|p(z)| / Σ|aₖ||z|ᵏ`: the backward-error residual used to accept roots.
pub fn scaled_residual(coeffs: &[f64], z: Complex64) -> f64 {
    let r = z.norm();
    let mag = coeffs.iter().fold(0.0, |acc, c| acc * r + c.abs());
    if mag == 0.0 {
        return 0.0;
    }
    eval_complex(coeffs, z).norm() / mag
}

/// All complex roots of a real polynomial, counted with multiplicity.
///
/// A constant (or empty) polynomial has no roots. Exact trailing zeros yield
/// exact roots at the origin.
pub fn roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput("polynomial has non-finite coefficients".into()));
    }
    let mut p = trim(coeffs);
    let mut out = Vec::new();
    while p.len() > 1 && *p.last().unwrap() == 0.0 {
        p.pop();
        out.push(Complex64::new(0.0, 0.0));
    }
    match p.len() {
        0 | 1 => {}
        2 => out.push(Complex64::new(-p[1] / p[0], 0.0)),
        3 => out.extend(quadratic(p[0], p[1], p[2])),
        4 => out.extend(cubic(&p)),
        _ => out.extend(aberth(&p)?),
    }
    Ok(out)
}

/// Roots of `a s² + b s + c` without cancellation.
pub fn quadratic(a: f64, b: f64, c: f64) -> [Complex64; 2] {
    let disc = b * b - 4.0 * a * c;
    if disc >= 0.0 {
        let sq = disc.sqrt();
        let q = -0.5 * (b + b.signum() * sq);
        if q == 0.0 {
            // b = 0 and c = 0
            return [Complex64::new(0.0, 0.0); 2];
        }
        let r1 = q / a;
        let r2 = c / q;
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        [Complex64::new(lo, 0.0), Complex64::new(hi, 0.0)]
    } else {
        let re = -b / (2.0 * a);
        let im = (-disc).sqrt() / (2.0 * a.abs());
        [Complex64::new(re, im), Complex64::new(re, -im)]
    }
}

fn cubic(p: &[f64]) -> Vec<Complex64> {
    let (a, b, c) = (p[1] / p[0], p[2] / p[0], p[3] / p[0]);
    let monic = [1.0, a, b, c];
    let real = polish_real_root(&monic, cardano_real_root(a, b, c));
    // deflate: s³ + a s² + b s + c = (s − r)(s² + e s + f)
    let e = a + real;
    let f = b + real * e;
    let mut out = vec![Complex64::new(real, 0.0)];
    out.extend(quadratic(1.0, e, f));
    out.into_iter().map(|z| newton_polish(&monic, z)).collect()
}

/// One real root of `s³ + a s² + b s + c` (the largest when three exist).
fn cardano_real_root(a: f64, b: f64, c: f64) -> f64 {
    let shift = a / 3.0;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    let t = if disc > 0.0 {
        let sq = disc.sqrt();
        // choose the sign that avoids cancellation
        let u = (-q / 2.0 - q.signum() * sq).cbrt();
        if u == 0.0 {
            0.0
        } else {
            u - p / (3.0 * u)
        }
    } else if p == 0.0 {
        0.0
    } else {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        m * (arg.acos() / 3.0).cos()
    };
    t - shift
}

/// Newton on the real line with a bisection safeguard inside a Cauchy bracket.
fn polish_real_root(monic: &[f64; 4], guess: f64) -> f64 {
    let bound = 1.0 + monic[1..].iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let (mut lo, mut hi) = (-bound, bound);
    // the cubic is monic, so it is negative at -bound and positive at +bound
    let mut x = if guess.is_finite() { guess.clamp(lo, hi) } else { 0.0 };
    for _ in 0..200 {
        let f = eval(monic, x);
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let df = 3.0 * x * x + 2.0 * monic[1] * x + monic[2];
        let mut next = x - f / df;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs().max(1e-300) {
            return next;
        }
        x = next;
    }
    x
}

fn newton_polish(coeffs: &[f64], z: Complex64) -> Complex64 {
    let (p, dp) = eval_with_derivative(coeffs, z);
    if dp.norm() == 0.0 {
        return z;
    }
    let next = z - p / dp;
    if next.re.is_finite() && next.im.is_finite() && scaled_residual(coeffs, next) <= scaled_residual(coeffs, z) {
        next
    } else {
        z
    }
}

fn aberth(p: &[f64]) -> Result<Vec<Complex64>> {
    let n = p.len() - 1;
    let monic: Vec<f64> = p.iter().map(|c| c / p[0]).collect();
    // initial points on a circle sized by the geometric mean root magnitude
    let radius = monic[n].abs().powf(1.0 / n as f64).max(1e-12);
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(radius, 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / n as f64 + 0.4))
        .collect();
    for _ in 0..500 {
        let mut max_step = 0.0f64;
        for i in 0..n {
            let (pv, dpv) = eval_with_derivative(&monic, z[i]);
            if pv.norm() == 0.0 {
                continue;
            }
            let ratio = pv / dpv;
            let repulsion: Complex64 = (0..n).filter(|&j| j != i).map(|j| 1.0 / (z[i] - z[j])).sum();
            let step = ratio / (1.0 - ratio * repulsion);
            if step.re.is_finite() && step.im.is_finite() {
                z[i] -= step;
                max_step = max_step.max(step.norm() / z[i].norm().max(1e-300));
            }
        }
        if max_step < 1e-15 {
            break;
        }
    }
    let z: Vec<Complex64> = z.into_iter().map(|r| newton_polish(&monic, r)).collect();
    let worst = z.iter().map(|r| scaled_residual(&monic, *r)).fold(0.0, f64::max);
    if worst > 1e-8 {
        return Err(Error::Numerical(format!("root iteration stalled (residual {worst:e})")));
    }
    Ok(symmetrize(z))
}

/// Snaps near-real roots onto the real axis and pairs the rest as exact
/// conjugates, since the coefficients are real.
fn symmetrize(mut z: Vec<Complex64>) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(z.len());
    z.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let mut used = vec![false; z.len()];
    for i in 0..z.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let zi = z[i];
        if zi.im.abs() <= 1e-9 * zi.norm().max(1e-300) {
            out.push(Complex64::new(zi.re, 0.0));
            continue;
        }
        let partner = (0..z.len())
            .filter(|&j| !used[j])
            .min_by(|&a, &b| (z[a] - zi.conj()).norm().total_cmp(&(z[b] - zi.conj()).norm()));
        match partner {
            Some(j) if (z[j] - zi.conj()).norm() <= 1e-6 * zi.norm() => {
                used[j] = true;
                let re = 0.5 * (zi.re + z[j].re);
                let im = 0.5 * (zi.im.abs() + z[j].im.abs());
                out.push(Complex64::new(re, im));
                out.push(Complex64::new(re, -im));
            }
            _ => out.push(zi),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_roots(coeffs: &[f64], expected: &[Complex64]) {
        let mut got = roots(coeffs).unwrap();
        assert_eq!(got.len(), expected.len());
        for e in expected {
            let (idx, err) = got
                .iter()
                .enumerate()
                .map(|(i, g)| (i, (g - e).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            assert!(err <= 1e-9 * e.norm().max(1.0), "missing {e}, got {got:?}");
            got.remove(idx);
        }
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn low_degree_closed_forms() {
        assert!(roots(&[3.0]).unwrap().is_empty());
        assert!(roots(&[0.0, 0.0, 2.0]).unwrap().is_empty());
        assert_roots(&[2.0, -4.0], &[c(2.0, 0.0)]);
        assert_roots(&[1.0, -3.0, 2.0], &[c(1.0, 0.0), c(2.0, 0.0)]);
        assert_roots(&[1.0, 2.0, 5.0], &[c(-1.0, 2.0), c(-1.0, -2.0)]);
        assert_roots(&[1.0, 0.0, 0.0], &[c(0.0, 0.0), c(0.0, 0.0)]);
    }

    #[test]
    fn cubic_variants() {
        // (s−1)(s−2)(s−3)
        assert_roots(&[1.0, -6.0, 11.0, -6.0], &[c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)]);
        // (s+2)(s² + 2s + 5)
        assert_roots(&[1.0, 4.0, 9.0, 10.0], &[c(-2.0, 0.0), c(-1.0, 2.0), c(-1.0, -2.0)]);
        // triple root: only ~cbrt(eps) accuracy is achievable
        let triple = roots(&[1.0, -3.0, 3.0, -1.0]).unwrap();
        assert_eq!(triple.len(), 3);
        assert!(triple.iter().all(|r| (r - c(1.0, 0.0)).norm() < 1e-4));
        // badly scaled receiver-like cubic
        let p = [1.0, 3571.43, 4.329e8, 3.865e11];
        for r in roots(&p).unwrap() {
            assert!(scaled_residual(&p, r) < 1e-12, "{r}");
        }
    }

    #[test]
    fn quartic_by_aberth() {
        // (s+1)(s+2)(s² + s + 10)
        let p = mul(&mul(&[1.0, 1.0], &[1.0, 2.0]), &[1.0, 1.0, 10.0]);
        let im = (39.0f64).sqrt() / 2.0;
        assert_roots(&p, &[c(-1.0, 0.0), c(-2.0, 0.0), c(-0.5, im), c(-0.5, -im)]);
    }

    #[test]
    fn poly_arithmetic() {
        assert_eq!(add(&[1.0, 2.0], &[1.0, 0.0, 3.0]), vec![1.0, 1.0, 5.0]);
        assert_eq!(mul(&[1.0, 1.0], &[1.0, -1.0]), vec![1.0, 0.0, -1.0]);
        assert_eq!(eval(&[2.0, 0.0, -1.0], 3.0), 17.0);
        assert_eq!(degree(&[0.0, 0.0, 4.0]), Some(0));
        assert_eq!(degree(&[0.0]), None);
    }

    #[test]
    fn non_finite_is_rejected() {
        assert!(roots(&[1.0, f64::NAN]).is_err());
    }
}
