//! Symmetric tridiagonal eigenvalues by Sturm bisection, and a pivoted
//! tridiagonal solver.

/// Number of eigenvalues strictly below `x` of the symmetric tridiagonal
/// matrix with diagonal `a` and off-diagonal `b` (`b.len() == a.len() - 1`).
pub fn sturm_count(a: &[f64], b: &[f64], x: f64) -> usize {
    let tiny = f64::MIN_POSITIVE.sqrt();
    let mut count = 0;
    let mut q = a[0] - x;
    if q == 0.0 {
        q = -tiny;
    }
    if q < 0.0 {
        count += 1;
    }
    for i in 1..a.len() {
        q = a[i] - x - b[i - 1] * b[i - 1] / q;
        if q == 0.0 {
            q = -tiny;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Gershgorin interval containing the spectrum.
pub fn gershgorin(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..a.len() {
        let mut r = 0.0;
        if i > 0 {
            r += b[i - 1].abs();
        }
        if i < b.len() {
            r += b[i].abs();
        }
        lo = lo.min(a[i] - r);
        hi = hi.max(a[i] + r);
    }
    (lo, hi)
}

/// The `j`-th smallest eigenvalue (0-based), bisected to `tol` absolute.
pub fn eigenvalue(a: &[f64], b: &[f64], j: usize, tol: f64) -> f64 {
    let (mut lo, mut hi) = gershgorin(a, b);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(a, b, mid) > j {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The `k` smallest eigenvalues in increasing order.
pub fn lowest_eigenvalues(a: &[f64], b: &[f64], k: usize, tol: f64) -> Vec<f64> {
    (0..k.min(a.len())).map(|j| eigenvalue(a, b, j, tol)).collect()
}

/// Solve `A x = d` for the tridiagonal `A` with sub-diagonal `l`, diagonal
/// `m`, super-diagonal `u`, by Gaussian elimination with partial pivoting.
pub fn solve(l: &[f64], m: &[f64], u: &[f64], d: &[f64]) -> Vec<f64> {
    let n = m.len();
    // Row i holds up to three entries at columns i, i+1, i+2 after pivoting.
    let mut c0 = m.to_vec();
    let mut c1: Vec<f64> = (0..n).map(|i| if i + 1 < n { u[i] } else { 0.0 }).collect();
    let mut c2 = vec![0.0; n];
    let mut rhs = d.to_vec();
    let mut sub: Vec<f64> = l.to_vec();
    for i in 0..n.saturating_sub(1) {
        // Candidate pivot rows: i (c0[i]) and i+1 (sub[i]).
        if sub[i].abs() > c0[i].abs() {
            // Swap rows i and i+1.
            let (a0, a1, a2) = (c0[i], c1[i], c2[i]);
            c0[i] = sub[i];
            c1[i] = c0[i + 1];
            c2[i] = c1[i + 1];
            sub[i] = a0;
            c0[i + 1] = a1;
            c1[i + 1] = a2;
            rhs.swap(i, i + 1);
        }
        let f = sub[i] / c0[i];
        c0[i + 1] -= f * c1[i];
        c1[i + 1] -= f * c2[i];
        rhs[i + 1] -= f * rhs[i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = rhs[i];
        if i + 1 < n {
            s -= c1[i] * x[i + 1];
        }
        if i + 2 < n {
            s -= c2[i] * x[i + 2];
        }
        x[i] = s / c0[i];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn discrete_laplacian_spectrum() {
        // -D² with Dirichlet ends: eigenvalues 4 sin²(jπ/(2(n+1))).
        let n = 50;
        let a = vec![2.0; n];
        let b = vec![-1.0; n - 1];
        let ev = lowest_eigenvalues(&a, &b, 4, 1e-14);
        for (j, e) in ev.iter().enumerate() {
            let exact = 4.0 * ((j + 1) as f64 * PI / (2.0 * (n + 1) as f64)).sin().powi(2);
            assert!((e - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn pivoted_solve() {
        let l = [1.0, 2.0, 0.5];
        let m = [1e-14, 3.0, 1.0, 5.0];
        let u = [1.0, -1.0, 4.0];
        let x = [1.0, -2.0, 0.5, 3.0];
        let d: Vec<f64> = (0..4)
            .map(|i| {
                let mut s = m[i] * x[i];
                if i > 0 {
                    s += l[i - 1] * x[i - 1];
                }
                if i < 3 {
                    s += u[i] * x[i + 1];
                }
                s
            })
            .collect();
        let y = solve(&l, &m, &u, &d);
        for i in 0..4 {
            assert!((y[i] - x[i]).abs() < 1e-12, "{y:?}");
        }
    }
}
