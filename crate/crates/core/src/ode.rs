//! Classical fixed-step Runge–Kutta integration.

/// One RK4 step of `ẋ = f(t, x)`.
pub fn rk4_step<const N: usize>(f: impl Fn(f64, &[f64; N]) -> [f64; N], t: f64, x: &[f64; N], h: f64) -> [f64; N] {
    let shift = |x: &[f64; N], k: &[f64; N], s: f64| {
        let mut out = *x;
        for i in 0..N {
            out[i] += s * k[i];
        }
        out
    };
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * h, &shift(x, &k1, 0.5 * h));
    let k3 = f(t + 0.5 * h, &shift(x, &k2, 0.5 * h));
    let k4 = f(t + h, &shift(x, &k3, h));
    let mut out = *x;
    for i in 0..N {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// RK4 step for a state whose size is only known at run time.
pub fn rk4_step_dyn(f: impl Fn(f64, &[f64]) -> Vec<f64>, t: f64, x: &[f64], h: f64) -> Vec<f64> {
    let shift = |k: &[f64], s: f64| x.iter().zip(k).map(|(a, b)| a + s * b).collect::<Vec<_>>();
    let k1 = f(t, x);
    let k2 = f(t + 0.5 * h, &shift(&k1, 0.5 * h));
    let k3 = f(t + 0.5 * h, &shift(&k2, 0.5 * h));
    let k4 = f(t + h, &shift(&k3, h));
    (0..x.len()).map(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_is_fourth_order() {
        let err = |h: f64| {
            let mut x = [1.0];
            let n = (1.0 / h).round() as usize;
            for k in 0..n {
                x = rk4_step(|_, x| [-x[0]], k as f64 * h, &x, h);
            }
            (x[0] - (-1f64).exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.5, "{ratio}");
    }

    #[test]
    fn dynamic_size_matches_fixed() {
        let f = |_: f64, x: &[f64; 2]| [x[1], -4.0 * x[0]];
        let a = rk4_step(f, 0.0, &[1.0, 0.5], 0.01);
        let b = rk4_step_dyn(|t, x| f(t, &[x[0], x[1]]).to_vec(), 0.0, &[1.0, 0.5], 0.01);
        assert_eq!(a.to_vec(), b);
    }

    #[test]
    fn harmonic_oscillator_keeps_energy() {
        let mut x = [1.0, 0.0];
        let h = 1e-3;
        for k in 0..6283 {
            x = rk4_step(|_, x| [x[1], -x[0]], k as f64 * h, &x, h);
        }
        assert!((x[0] * x[0] + x[1] * x[1] - 1.0).abs() < 1e-10);
    }
}
