//! Fixed-size 3×3 helpers; the models never need anything larger.

pub type Mat3 = [[f64; 3]; 3];

pub fn det3(a: &Mat3) -> f64 {
    a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
}

/// Solves `a·x = b` by Cramer's rule. `None` when `a` is singular.
pub fn solve3(a: &Mat3, b: &[f64; 3]) -> Option<[f64; 3]> {
    let det = det3(a);
    let scale = a.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if det == 0.0 || !det.is_finite() || det.abs() <= 1e-300 * scale.powi(3) {
        return None;
    }
    let mut x = [0.0; 3];
    for (col, xi) in x.iter_mut().enumerate() {
        let mut m = *a;
        for row in 0..3 {
            m[row][col] = b[row];
        }
        *xi = det3(&m) / det;
    }
    Some(x)
}

pub fn matmul3(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

pub fn matvec3(a: &Mat3, x: &[f64; 3]) -> [f64; 3] {
    [
        a[0][0] * x[0] + a[0][1] * x[1] + a[0][2] * x[2],
        a[1][0] * x[0] + a[1][1] * x[1] + a[1][2] * x[2],
        a[2][0] * x[0] + a[2][1] * x[1] + a[2][2] * x[2],
    ]
}

pub fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn trace(a: &Mat3) -> f64 {
    a[0][0] + a[1][1] + a[2][2]
}

/// Faddeev–LeVerrier expansion of `(sI − A)⁻¹`.
///
/// Returns `(char, adj)` with `det(sI − A) = s³ + c[0]s² + c[1]s + c[2]` and
/// `adj(sI − A) = adj[0]·s² + adj[1]·s + adj[2]`.
pub fn resolvent_expansion(a: &Mat3) -> ([f64; 3], [Mat3; 3]) {
    const I: Mat3 = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let add_scaled_identity = |m: Mat3, c: f64| {
        let mut m = m;
        for (i, row) in m.iter_mut().enumerate() {
            row[i] += c;
        }
        m
    };
    let m1 = I;
    let am1 = matmul3(a, &m1);
    let c2 = -trace(&am1);
    let m2 = add_scaled_identity(am1, c2);
    let am2 = matmul3(a, &m2);
    let c1 = -trace(&am2) / 2.0;
    let m3 = add_scaled_identity(am2, c1);
    let am3 = matmul3(a, &m3);
    let c0 = -trace(&am3) / 3.0;
    ([c2, c1, c0], [m1, m2, m3])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_recovers_known_vector() {
        let a = [[2.0, 1.0, 0.0], [1.0, 3.0, -1.0], [0.0, -1.0, 4.0]];
        let x = [1.0, -2.0, 0.5];
        let b = matvec3(&a, &x);
        let got = solve3(&a, &b).unwrap();
        for i in 0..3 {
            assert!((got[i] - x[i]).abs() < 1e-12);
        }
        assert!(solve3(&[[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]], &b).is_none());
    }

    #[test]
    fn characteristic_polynomial_of_diagonal() {
        let a = [[-1.0, 0.0, 0.0], [0.0, -2.0, 0.0], [0.0, 0.0, -3.0]];
        let (c, _) = resolvent_expansion(&a);
        // (s+1)(s+2)(s+3) = s³ + 6s² + 11s + 6
        assert_eq!(c, [6.0, 11.0, 6.0]);
    }
}
