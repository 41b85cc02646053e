//! One-dimensional interface problem
//!
//! ```text
//! U'' - εH U' + f(U) = εℓ   on (-L, L),   U(±L) = ±1 + σ_±,   f(±1 + σ_±) = εℓ
//! ```
//!
//! solved with the multiplier `ℓ` as a bordered unknown and the phase
//! condition `U(0) = (U(L) + U(-L)) / 2`.

use std::f64::consts::SQRT_2;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::linalg::sparse::TripletBuilder;
use crate::linalg::tridiag;
use crate::{df, f, Error, Result};

/// Default half-length of the stretched domain.
pub const DEFAULT_L: f64 = 20.0;

/// Default grid spacing in the stretched variable.
pub const DEFAULT_H: f64 = 0.005;

const MAX_NEWTON: usize = 50;

/// `Θ(t) = tanh(t/√2)`.
pub fn heteroclinic_theta(t: f64) -> f64 {
    (t / SQRT_2).tanh()
}

/// `Θ'(t) = sech²(t/√2) / √2`.
pub fn heteroclinic_theta_prime(t: f64) -> f64 {
    let c = (t / SQRT_2).cosh();
    1.0 / (SQRT_2 * c * c)
}

/// `∫ Θ'² dt = 2√2/3`.
pub fn theta_prime_energy() -> f64 {
    2.0 * SQRT_2 / 3.0
}

/// Leading multiplier `ℓ₀ = -(H/2) ∫ Θ'²`.
pub fn multiplier_leading(h_mean: f64) -> f64 {
    -0.5 * h_mean * theta_prime_energy()
}

/// Far-field shifts `(σ_+, σ_-)` with `f(±1 + σ_±) = εℓ`.
pub fn far_field_roots(epsilon: f64, ell: f64) -> Result<(f64, f64)> {
    let c = epsilon * ell;
    let fold = 2.0 / (3.0 * 3f64.sqrt());
    if !(c.abs() < fold) {
        return Err(Error::NoFarFieldRoot(c));
    }
    let root = |seed: f64| {
        let mut u = seed;
        for _ in 0..100 {
            let step = (f(u) - c) / df(u);
            u -= step;
            if step.abs() <= 1e-16 {
                break;
            }
        }
        u
    };
    Ok((root(1.0) - 1.0, root(-1.0) + 1.0))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Profile1D {
    pub epsilon: f64,
    /// Mean curvature input (1 in the canonical scale).
    #[serde(rename = "H")]
    pub h_mean: f64,
    pub ell: f64,
    pub half_length: f64,
    pub t_grid: Vec<f64>,
    #[serde(rename = "U")]
    pub u: Vec<f64>,
    #[serde(rename = "dU")]
    pub du: Vec<f64>,
    pub sigma_plus: f64,
    pub sigma_minus: f64,
    pub residual_norm: f64,
    pub newton_iterations: usize,
    /// Estimated distance of the boundary values from the exponential plateau.
    pub plateau_error: f64,
    /// Set when the plateau error exceeds the solver tolerance.
    pub plateau_warning: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub epsilon: f64,
    #[serde(rename = "H")]
    pub h_mean: f64,
    pub ell: f64,
    pub sigma_plus: f64,
    pub sigma_minus: f64,
    pub residual_norm: f64,
}

impl Profile1D {
    pub fn spacing(&self) -> f64 {
        self.t_grid[1] - self.t_grid[0]
    }

    pub fn summary(&self) -> ProfileSummary {
        ProfileSummary {
            epsilon: self.epsilon,
            h_mean: self.h_mean,
            ell: self.ell,
            sigma_plus: self.sigma_plus,
            sigma_minus: self.sigma_minus,
            residual_norm: self.residual_norm,
        }
    }

    fn locate(&self, t: f64) -> (usize, f64) {
        let l = self.half_length;
        let h = self.spacing();
        let tc = t.clamp(-l, l);
        let n = self.t_grid.len() - 1;
        let i = (((tc + l) / h).floor() as usize).min(n - 1);
        (i, (tc - self.t_grid[i]) / h)
    }

    /// `U(t)` by cubic Hermite interpolation, constant beyond `±L`.
    pub fn value(&self, t: f64) -> f64 {
        let (i, x) = self.locate(t);
        let h = self.spacing();
        let (y0, y1, d0, d1) = (self.u[i], self.u[i + 1], self.du[i] * h, self.du[i + 1] * h);
        let x2 = x * x;
        let x3 = x2 * x;
        (2.0 * x3 - 3.0 * x2 + 1.0) * y0 + (x3 - 2.0 * x2 + x) * d0 + (-2.0 * x3 + 3.0 * x2) * y1 + (x3 - x2) * d1
    }

    /// `U'(t)` from the same Hermite interpolant, zero beyond `±L`.
    pub fn derivative(&self, t: f64) -> f64 {
        if t.abs() > self.half_length {
            return 0.0;
        }
        let (i, x) = self.locate(t);
        let h = self.spacing();
        let (y0, y1, d0, d1) = (self.u[i], self.u[i + 1], self.du[i] * h, self.du[i + 1] * h);
        let x2 = x * x;
        ((6.0 * x2 - 6.0 * x) * y0
            + (3.0 * x2 - 4.0 * x + 1.0) * d0
            + (-6.0 * x2 + 6.0 * x) * y1
            + (3.0 * x2 - 2.0 * x) * d1)
            / h
    }

    /// Plateau values `(1 + σ_+, -1 + σ_-)`.
    pub fn plateaus(&self) -> (f64, f64) {
        (1.0 + self.sigma_plus, -1.0 + self.sigma_minus)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,U,dU")?;
        for i in 0..self.t_grid.len() {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", self.t_grid[i], self.u[i], self.du[i])?;
        }
        Ok(())
    }
}

fn central_derivative(u: &[f64], h: f64) -> Vec<f64> {
    let n = u.len() - 1;
    (0..=n)
        .map(|i| {
            if i == 0 {
                (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h)
            } else if i == n {
                (3.0 * u[n] - 4.0 * u[n - 1] + u[n - 2]) / (2.0 * h)
            } else {
                (u[i + 1] - u[i - 1]) / (2.0 * h)
            }
        })
        .collect()
}

/// Solve on the default grid spacing.
pub fn solve_profile(epsilon: f64, h_mean: f64, half_length: f64, tol: f64) -> Result<Profile1D> {
    let intervals = 2 * ((half_length / DEFAULT_H).round() as usize);
    solve_profile_on_grid(epsilon, h_mean, half_length, tol, intervals)
}

/// Solve with `intervals` uniform cells on `[-L, L]` (rounded up to even).
pub fn solve_profile_on_grid(
    epsilon: f64,
    h_mean: f64,
    half_length: f64,
    tol: f64,
    intervals: usize,
) -> Result<Profile1D> {
    if !(0.0..=0.3).contains(&epsilon) {
        return Err(Error::Domain(format!("epsilon = {epsilon} outside [0, 0.3]")));
    }
    if !(half_length >= 15.0) {
        return Err(Error::Domain(format!("L = {half_length} must be at least 15")));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance {tol} must be positive")));
    }
    let n = intervals.max(16) + intervals % 2;
    let h = 2.0 * half_length / n as f64;
    let t_grid: Vec<f64> = (0..=n).map(|i| -half_length + i as f64 * h).collect();
    let ell0 = multiplier_leading(h_mean);

    if epsilon == 0.0 {
        let u: Vec<f64> = t_grid.iter().map(|&t| heteroclinic_theta(t)).collect();
        let du: Vec<f64> = t_grid.iter().map(|&t| heteroclinic_theta_prime(t)).collect();
        return Ok(Profile1D {
            epsilon,
            h_mean,
            ell: ell0,
            half_length,
            t_grid,
            u,
            du,
            sigma_plus: 0.0,
            sigma_minus: 0.0,
            // Θ is an exact solution; nothing was solved.
            residual_norm: 0.0,
            newton_iterations: 0,
            plateau_error: 0.0,
            plateau_warning: false,
        });
    }

    let c = n / 2;
    let dim = n + 2;
    let il = n + 1;
    let eh = epsilon * h_mean;

    let residual = |x: &[f64]| -> Result<(Vec<f64>, f64, f64)> {
        let ell = x[il];
        let (sp, sm) = far_field_roots(epsilon, ell)?;
        let mut r = vec![0.0; dim];
        r[0] = x[0] - (-1.0 + sm);
        for i in 1..n {
            r[i] = (x[i + 1] - 2.0 * x[i] + x[i - 1]) / (h * h) - eh * (x[i + 1] - x[i - 1]) / (2.0 * h) + f(x[i])
                - epsilon * ell;
        }
        r[n] = x[n] - (1.0 + sp);
        r[il] = x[c] - 0.5 * (x[0] + x[n]);
        Ok((r, sp, sm))
    };
    let sup = |r: &[f64]| r.iter().fold(0.0f64, |a, v| a.max(v.abs()));

    let mut x: Vec<f64> = t_grid.iter().map(|&t| heteroclinic_theta(t)).collect();
    x.push(ell0);
    let (sp0, sm0) = far_field_roots(epsilon, ell0)?;
    x[0] = -1.0 + sm0;
    x[n] = 1.0 + sp0;
    let (mut r, mut sp, mut sm) = residual(&x)?;
    let mut rn = sup(&r);
    let mut history = vec![rn];
    let mut iterations = 0;
    while rn > tol {
        if iterations >= MAX_NEWTON {
            return Err(Error::NewtonDiverged {
                iterations,
                residual: rn,
                history,
            });
        }
        iterations += 1;
        let mut jac = TripletBuilder::<f64>::with_capacity(dim, dim, 4 * dim + 4);
        jac.push(0, 0, 1.0);
        jac.push(0, il, -epsilon / df(-1.0 + sm));
        for i in 1..n {
            jac.push(i, i - 1, 1.0 / (h * h) + eh / (2.0 * h));
            jac.push(i, i, -2.0 / (h * h) + df(x[i]));
            jac.push(i, i + 1, 1.0 / (h * h) - eh / (2.0 * h));
            jac.push(i, il, -epsilon);
        }
        jac.push(n, n, 1.0);
        jac.push(n, il, -epsilon / df(1.0 + sp));
        jac.push(il, c, 1.0);
        jac.push(il, 0, -0.5);
        jac.push(il, n, -0.5);
        let lu = jac.build()?.factor()?;
        let neg: Vec<f64> = r.iter().map(|v| -v).collect();
        let dx = lu.solve(&neg);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + alpha * d).collect();
            if let Ok((rt, spt, smt)) = residual(&trial) {
                let nt = sup(&rt);
                if nt < rn || nt <= tol {
                    x = trial;
                    r = rt;
                    sp = spt;
                    sm = smt;
                    rn = nt;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        history.push(rn);
        if !accepted {
            return Err(Error::NewtonDiverged {
                iterations,
                residual: rn,
                history,
            });
        }
    }

    let ell = x[il];
    x.truncate(n + 1);
    let du = central_derivative(&x, h);
    let plateau_error = ((x[1] - x[0]).abs().max((x[n] - x[n - 1]).abs()) / h) / SQRT_2;
    Ok(Profile1D {
        epsilon,
        h_mean,
        ell,
        half_length,
        t_grid,
        u: x,
        du,
        sigma_plus: sp,
        sigma_minus: sm,
        residual_norm: rn,
        newton_iterations: iterations,
        plateau_error,
        plateau_warning: plateau_error > tol,
    })
}

/// Both sides of the solvability identity obtained by multiplying the
/// equation by `U'` and integrating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolvabilityCheck {
    /// `εℓ (U(L) - U(-L))` in the discrete (summation-by-parts) form.
    pub lhs: f64,
    /// `[U'²/2] - εH ∫U'² + ∫ f(U) U'` in the matching discrete form.
    pub rhs: f64,
    /// `|lhs - rhs|`; bounded by the Newton residual.
    pub discrete_defect: f64,
    /// Multiplier recovered from the identity alone.
    pub ell_identity: f64,
    /// Defect of the continuous identity `εℓ[U] = -εH∫U'² + [F̃(U)] + [U'²/2]`
    /// evaluated with trapezoid quadrature and the exact antiderivative
    /// `F̃(u) = u²/2 - u⁴/4`; second order in the grid spacing.
    pub continuous_defect: f64,
}

pub fn solvability_identity(p: &Profile1D) -> SolvabilityCheck {
    let u = &p.u;
    let n = u.len() - 1;
    let h = p.spacing();
    let e = p.epsilon;
    let a = |i: usize| u[i + 1] - u[i];
    let s_diff = (a(n - 1).powi(2) - a(0).powi(2)) / (2.0 * h * h);
    let mut s_drift = 0.0;
    let mut s_f = 0.0;
    for i in 1..n {
        let d = u[i + 1] - u[i - 1];
        s_drift -= e * p.h_mean * d * d / (4.0 * h);
        s_f += f(u[i]) * d / 2.0;
    }
    let jump = (u[n] + u[n - 1] - u[1] - u[0]) / 2.0;
    let lhs = e * p.ell * jump;
    let rhs = s_diff + s_drift + s_f;
    let ell_identity = if e > 0.0 { rhs / (e * jump) } else { p.ell };

    let ft = |v: f64| 0.5 * v * v - 0.25 * v.powi(4);
    let energy: f64 = (0..n).map(|i| 0.5 * h * (p.du[i].powi(2) + p.du[i + 1].powi(2))).sum();
    let cont_lhs = e * p.ell * (u[n] - u[0]);
    let cont_rhs = -e * p.h_mean * energy + ft(u[n]) - ft(u[0]) + 0.5 * (p.du[n].powi(2) - p.du[0].powi(2));
    SolvabilityCheck {
        lhs,
        rhs,
        discrete_defect: (lhs - rhs).abs(),
        ell_identity,
        continuous_defect: (cont_lhs - cont_rhs).abs(),
    }
}

/// The `k` lowest eigenvalues of `-∂_tt - f'(U)` with Dirichlet ends.
pub fn linearized_spectrum_1d(p: &Profile1D, k: usize) -> Vec<f64> {
    let n = p.u.len() - 1;
    let h = p.spacing();
    let a: Vec<f64> = (1..n).map(|i| 2.0 / (h * h) - df(p.u[i])).collect();
    let b = vec![-1.0 / (h * h); a.len() - 1];
    tridiag::lowest_eigenvalues(&a, &b, k, 1e-12)
}

/// Smooth cutoff equal to 1 on `|t| ≤ R/2` and 0 on `|t| ≥ R`.
pub fn cutoff(t: f64, r: f64) -> f64 {
    let psi = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    let a = psi(r - t.abs());
    let b = psi(t.abs() - 0.5 * r);
    if a + b == 0.0 {
        0.0
    } else {
        a / (a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoercivityEstimate {
    pub radius: f64,
    /// Minimum of the Rayleigh quotient subject to `∫ v U' χ_R = 0`.
    pub kappa: f64,
    /// Unconstrained minimum (the translation direction).
    pub unconstrained_min: f64,
    /// Second unconstrained eigenvalue.
    pub unconstrained_second: f64,
}

/// Constrained minimum of `∫ v'² - f'(U) v²` over `H¹(-R, R)` (natural
/// boundary conditions) subject to `∫ v U' χ_R = 0`.
///
/// The constrained eigenvalue is the root in `(λ₁, λ₂)` of the secular
/// function `d·(T - μ)⁻¹ d`, with `T` the mass-symmetrised tridiagonal
/// stiffness matrix and `d` the symmetrised constraint vector.
pub fn coercivity_constrained(p: &Profile1D, radius: f64) -> Result<CoercivityEstimate> {
    if !(radius > 0.0 && radius <= 0.5 * p.half_length + 1e-12) {
        return Err(Error::Domain(format!(
            "R = {radius} must lie in (0, L/2] with L = {}",
            p.half_length
        )));
    }
    let h = p.spacing();
    let idx: Vec<usize> = (0..p.t_grid.len())
        .filter(|&i| p.t_grid[i].abs() <= radius + 1e-12)
        .collect();
    let m = idx.len();
    let w: Vec<f64> = (0..m).map(|j| if j == 0 || j == m - 1 { 0.5 * h } else { h }).collect();
    let mut a = vec![0.0; m];
    let mut b = vec![0.0; m - 1];
    for j in 0..m {
        let deg = if j == 0 || j == m - 1 { 1.0 } else { 2.0 };
        a[j] = (deg / h - w[j] * df(p.u[idx[j]])) / w[j];
        if j + 1 < m {
            b[j] = (-1.0 / h) / (w[j] * w[j + 1]).sqrt();
        }
    }
    let d: Vec<f64> = (0..m)
        .map(|j| w[j].sqrt() * p.du[idx[j]] * cutoff(p.t_grid[idx[j]], radius))
        .collect();
    let l1 = tridiag::eigenvalue(&a, &b, 0, 1e-13);
    let l2 = tridiag::eigenvalue(&a, &b, 1, 1e-13);
    let secular = |mu: f64| {
        let diag: Vec<f64> = a.iter().map(|x| x - mu).collect();
        let y = tridiag::solve(&b, &diag, &b, &d);
        d.iter().zip(&y).map(|(x, y)| x * y).sum::<f64>()
    };
    let gap = (l2 - l1).max(1e-300);
    let (mut lo, mut hi) = (l1 + 1e-12 * gap, l2 - 1e-12 * gap);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if secular(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-13 * (1.0 + mid.abs()) {
            break;
        }
    }
    Ok(CoercivityEstimate {
        radius,
        kappa: 0.5 * (lo + hi),
        unconstrained_min: l1,
        unconstrained_second: l2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn theta_basics() {
        assert_eq!(heteroclinic_theta(0.0), 0.0);
        assert_abs_diff_eq!(heteroclinic_theta(60.0), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(heteroclinic_theta(-60.0), -1.0, epsilon = 1e-15);
        assert_eq!(multiplier_leading(0.0), 0.0);
        assert_eq!(multiplier_leading(2.0), 2.0 * multiplier_leading(1.0));
    }

    #[test]
    fn far_field() {
        assert_eq!(far_field_roots(0.1, 0.0).unwrap(), (0.0, 0.0));
        let (sp, sm) = far_field_roots(0.1, -0.4714).unwrap();
        assert!((f(1.0 + sp) - 0.1 * -0.4714).abs() < 1e-14);
        assert!((f(-1.0 + sm) - 0.1 * -0.4714).abs() < 1e-14);
        // f(1 + σ) ≈ -2σ, so σ_± ≈ -εℓ/2 at first order.
        assert!((sp + 0.1 * -0.4714 / 2.0).abs() < 1e-3);
        assert!((sm + 0.1 * -0.4714 / 2.0).abs() < 1e-3);
        assert!(matches!(far_field_roots(1.0, 0.5), Err(Error::NoFarFieldRoot(_))));
    }

    #[test]
    fn zero_epsilon_convention() {
        let p = solve_profile(0.0, 1.0, 20.0, 1e-10).unwrap();
        assert_eq!(p.ell, multiplier_leading(1.0));
        assert_eq!(p.u[p.u.len() / 2], 0.0);
    }

    #[test]
    fn domain_checks() {
        assert!(solve_profile(0.4, 1.0, 20.0, 1e-10).is_err());
        assert!(solve_profile(0.1, 1.0, 10.0, 1e-10).is_err());
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(cutoff(0.0, 10.0), 1.0);
        assert_eq!(cutoff(5.0, 10.0), 1.0);
        assert_eq!(cutoff(10.0, 10.0), 0.0);
        let mid = cutoff(7.5, 10.0);
        assert!(mid > 0.0 && mid < 1.0);
    }
}
