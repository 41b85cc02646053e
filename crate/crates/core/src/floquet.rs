//! Hill-equation monodromy and the discrete Fourier-Laplace transform for
//! periodic problems.
//!
//! Transform convention, for a lattice of period `T` and offset `σ ∈ [0, T)`:
//!
//! ```text
//! ĥ(σ, ζ) = Σ_k exp(-i (σ + kT) ζ / T) h(σ + kT),          ζ = μ + iν
//! h(s)    = (1/2π) ∫_0^{2π} exp(i s ζ / T) ĥ(s mod T, ζ) dμ
//! ```
//!
//! With `T = 1` this is the usual Floquet-Bloch pair. A `T`-periodic
//! operator `A` is carried to `Â(ζ) = e^{-iζx/T} A e^{iζx/T}` acting on
//! `T`-periodic functions.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::delaunay::GeneratingCurve;
use crate::{Error, Result};

/// Fundamental matrix at one period; rows are `(v, v')`, columns the
/// initial data `(1, 0)` and `(0, 1)`.
pub type Monodromy = [[f64; 2]; 2];

/// Minimum number of potential samples per period.
pub const MIN_SAMPLES: usize = 64;

/// Default tolerance on `|Δ ∓ 2|` for the parabolic class.
pub const DEFAULT_PARABOLIC_TOL: f64 = 1e-6;

/// Integrate `v'' + q v = 0` over one period.
///
/// `potential` holds `q` on the uniform periodic grid `s_i = i P / n`,
/// `i = 0..n` (the endpoint is not repeated). The RK4 midpoint values of `q`
/// come from six-point periodic Lagrange interpolation.
pub fn monodromy(potential: &[f64], s_period: f64) -> Result<Monodromy> {
    let n = potential.len();
    if n < MIN_SAMPLES {
        return Err(Error::GridTooCoarse(format!(
            "{n} potential samples per period, need at least {MIN_SAMPLES}"
        )));
    }
    if !(s_period > 0.0) {
        return Err(Error::Domain(format!("period {s_period} must be positive")));
    }
    let q = potential;
    let at = |i: isize| q[i.rem_euclid(n as isize) as usize];
    let mid: Vec<f64> = (0..n as isize)
        .map(|i| {
            (3.0 * at(i - 2) - 25.0 * at(i - 1) + 150.0 * at(i) + 150.0 * at(i + 1) - 25.0 * at(i + 2)
                + 3.0 * at(i + 3))
                / 256.0
        })
        .collect();
    let h = s_period / n as f64;
    let mut m = [[0.0; 2]; 2];
    for (col, init) in [[1.0, 0.0], [0.0, 1.0]].into_iter().enumerate() {
        let (mut v, mut w) = (init[0], init[1]);
        for i in 0..n {
            let (q0, qh, q1) = (q[i], mid[i], q[(i + 1) % n]);
            let (k1v, k1w) = (w, -q0 * v);
            let (v2, w2) = (v + 0.5 * h * k1v, w + 0.5 * h * k1w);
            let (k2v, k2w) = (w2, -qh * v2);
            let (v3, w3) = (v + 0.5 * h * k2v, w + 0.5 * h * k2w);
            let (k3v, k3w) = (w3, -qh * v3);
            let (v4, w4) = (v + h * k3v, w + h * k3w);
            let (k4v, k4w) = (w4, -q1 * v4);
            v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            w += h / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
        }
        m[0][col] = v;
        m[1][col] = w;
    }
    Ok(m)
}

pub fn discriminant(m: &Monodromy) -> f64 {
    m[0][0] + m[1][1]
}

pub fn determinant(m: &Monodromy) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// `|det M - 1|` relative to the size of the two products, which is the
/// best floating point can do for strongly hyperbolic monodromies.
pub fn relative_det_defect(m: &Monodromy) -> f64 {
    let scale = 1f64.max((m[0][0] * m[1][1]).abs()).max((m[0][1] * m[1][0]).abs());
    (determinant(m) - 1.0).abs() / scale
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Elliptic,
    Parabolic,
    Hyperbolic,
}

pub fn classify(delta: f64, parabolic_tol: f64) -> Classification {
    if (delta - 2.0).abs() <= parabolic_tol || (delta + 2.0).abs() <= parabolic_tol {
        Classification::Parabolic
    } else if delta.abs() < 2.0 {
        Classification::Elliptic
    } else {
        Classification::Hyperbolic
    }
}

/// Floquet exponents `μ` with `exp(μ P)` the eigenvalues of `M`.
///
/// The multipliers are the roots of `ρ² - Δρ + 1`: a Hill equation has no
/// first-order term, so `det M = 1` by Liouville's formula. The small root is
/// taken as the reciprocal of the large one, since both the cancellation in
/// `Δ/2 - √(Δ²/4 - 1)` and the computed determinant lose all accuracy once
/// `|Δ|` is large.
pub fn floquet_exponents(m: &Monodromy, s_period: f64) -> [Complex64; 2] {
    let half = 0.5 * discriminant(m);
    let disc = Complex64::new(half * half - 1.0, 0.0).sqrt();
    let plus = Complex64::new(half, 0.0) + disc;
    let minus = Complex64::new(half, 0.0) - disc;
    let (a, b) = if plus.norm() >= minus.norm() {
        (plus, plus.inv())
    } else {
        (minus.inv(), minus)
    };
    [a.ln() / s_period, b.ln() / s_period]
}

/// Rank of `M - I` for a parabolic monodromy at `Δ = 2`: 0 means two
/// periodic solutions, 1 a Jordan block (one periodic, one linearly growing).
pub fn rank_m_minus_identity(m: &Monodromy, tol: f64) -> usize {
    let d = [[m[0][0] - 1.0, m[0][1]], [m[1][0], m[1][1] - 1.0]];
    let big = d.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
    if big <= tol {
        0
    } else if (d[0][0] * d[1][1] - d[0][1] * d[1][0]).abs() <= tol * big {
        1
    } else {
        2
    }
}

#[derive(Debug, Clone)]
pub struct HillResult {
    pub mode_n: usize,
    /// `q_n(s_i) = τ² cosh(2σ(s_i)) - n²` on the curve nodes (one period).
    pub potential: Vec<f64>,
    pub monodromy: Monodromy,
    pub discriminant: f64,
    pub classification: Classification,
    pub floquet_exponents: [Complex64; 2],
    pub det_defect: f64,
    /// Rank of `M - I` when the mode is parabolic at `Δ = 2`.
    pub jordan_rank: Option<usize>,
}

/// Compact serializable view of a [`HillResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HillSummary {
    pub mode_n: usize,
    pub discriminant: f64,
    pub classification: Classification,
    /// `(re, im)` of both exponents.
    pub floquet_exponents: [[f64; 2]; 2],
    pub jordan_rank: Option<usize>,
}

impl HillResult {
    pub fn summary(&self) -> HillSummary {
        let e = self.floquet_exponents;
        HillSummary {
            mode_n: self.mode_n,
            discriminant: self.discriminant,
            classification: self.classification,
            floquet_exponents: [[e[0].re, e[0].im], [e[1].re, e[1].im]],
            jordan_rank: self.jordan_rank,
        }
    }
}

/// Hill analysis of angular mode `n` of the Jacobi operator.
pub fn hill_analyze(curve: &GeneratingCurve, mode_n: usize, parabolic_tol: f64) -> Result<HillResult> {
    let tau = curve.tau_value();
    let n2 = (mode_n * mode_n) as f64;
    let nodes = curve.intervals();
    let potential: Vec<f64> = curve.sigma[..nodes]
        .iter()
        .map(|s| tau * tau * (2.0 * s).cosh() - n2)
        .collect();
    let m = monodromy(&potential, curve.s_period)?;
    let delta = discriminant(&m);
    let classification = classify(delta, parabolic_tol);
    let jordan_rank = (classification == Classification::Parabolic && delta > 0.0)
        .then(|| rank_m_minus_identity(&m, 1e-6 * (1.0 + delta.abs())));
    Ok(HillResult {
        mode_n,
        potential,
        monodromy: m,
        discriminant: delta,
        classification,
        floquet_exponents: floquet_exponents(&m, curve.s_period),
        det_defect: relative_det_defect(&m),
        jordan_rank,
    })
}

/// Lattice samples `h(σ + kT)` for `k = k_min, k_min + 1, …`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedSequence {
    pub offset: f64,
    pub period: f64,
    pub k_min: i64,
    pub values: Vec<Complex64>,
}

impl WindowedSequence {
    /// Sample `h` on the lattice `σ + kT`, `k ∈ [k_min, k_max]`.
    pub fn sample(h: impl Fn(f64) -> Complex64, offset: f64, period: f64, k_min: i64, k_max: i64) -> Self {
        let values = (k_min..=k_max).map(|k| h(offset + k as f64 * period)).collect();
        Self {
            offset,
            period,
            k_min,
            values,
        }
    }

    pub fn point(&self, j: usize) -> f64 {
        self.offset + (self.k_min + j as i64) as f64 * self.period
    }
}

#[derive(Debug, Clone)]
pub struct TransformPair {
    pub sequence: WindowedSequence,
    /// Imaginary part `ν` of the integration path.
    pub nu: f64,
    /// Uniform grid on `[0, 2π)`.
    pub mu_grid: Vec<f64>,
    pub transform: Vec<Complex64>,
    /// Largest weighted sample `|e^{νs/T} h(s)|` at the two window edges.
    pub tail_estimate: f64,
    /// Set when the tail estimate exceeds the truncation tolerance.
    pub truncation_warning: bool,
}

/// Tail tolerance for the truncation warning.
pub const TRUNCATION_TOL: f64 = 1e-10;

/// Evaluate the truncated transform series on a uniform μ-grid at `Im ζ = ν`.
pub fn forward_transform(h: &WindowedSequence, nu: f64, mu_grid_size: usize) -> Result<TransformPair> {
    if mu_grid_size < h.values.len() {
        return Err(Error::Domain(format!(
            "mu grid of {mu_grid_size} points cannot resolve a window of {} samples",
            h.values.len()
        )));
    }
    let t = h.period;
    let mu_grid: Vec<f64> = (0..mu_grid_size)
        .map(|j| 2.0 * PI * j as f64 / mu_grid_size as f64)
        .collect();
    let transform = mu_grid
        .iter()
        .map(|&mu| {
            let zeta = Complex64::new(mu, nu);
            h.values
                .iter()
                .enumerate()
                .map(|(j, &v)| (Complex64::new(0.0, -h.point(j) / t) * zeta).exp() * v)
                .sum()
        })
        .collect();
    let weight = |j: usize| (nu * h.point(j) / t).exp() * h.values[j].norm();
    let tail_estimate = match h.values.len() {
        0 => 0.0,
        len => weight(0).max(weight(len - 1)),
    };
    Ok(TransformPair {
        sequence: h.clone(),
        nu,
        mu_grid,
        transform,
        tail_estimate,
        truncation_warning: tail_estimate > TRUNCATION_TOL,
    })
}

/// Trapezoid quadrature of the inversion formula at a lattice point of the pair.
pub fn inverse_transform(pair: &TransformPair, s: f64) -> Result<Complex64> {
    let t = pair.sequence.period;
    let shift = (s - pair.sequence.offset) / t;
    if (shift - shift.round()).abs() > 1e-9 {
        return Err(Error::Domain(format!(
            "s = {s} is not on the lattice {} + kT of this pair",
            pair.sequence.offset
        )));
    }
    let m = pair.mu_grid.len() as f64;
    Ok(pair
        .mu_grid
        .iter()
        .zip(&pair.transform)
        .map(|(&mu, &v)| (Complex64::new(0.0, s / t) * Complex64::new(mu, pair.nu)).exp() * v)
        .sum::<Complex64>()
        / m)
}

/// Both sides of the discrete Plancherel identity for transforms taken at
/// offsets uniformly spaced over one period:
/// `(1/2π) ∫∫ |ĥ|² dσ dμ` and `∫ |e^{νs/T} h(s)|² ds`, each with the same
/// rectangle rule in `σ`.
pub fn plancherel_sides(pairs: &[TransformPair]) -> (f64, f64) {
    if pairs.is_empty() {
        return (0.0, 0.0);
    }
    let t = pairs[0].sequence.period;
    let dsigma = t / pairs.len() as f64;
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for p in pairs {
        let m = p.mu_grid.len() as f64;
        lhs += dsigma * p.transform.iter().map(|v| v.norm_sqr()).sum::<f64>() / m;
        rhs += dsigma
            * p.sequence
                .values
                .iter()
                .enumerate()
                .map(|(j, v)| ((p.nu * p.sequence.point(j) / t).exp() * v.norm()).powi(2))
                .sum::<f64>();
    }
    (lhs, rhs)
}

/// Phase `e^{iζ/n}` carried by the forward z-coupling of a periodic grid with
/// `n` cells once the operator is conjugated by `e^{iζx/T}`.
pub fn bloch_phase(zeta: f64, cells: usize) -> Complex64 {
    Complex64::from_polar(1.0, zeta / cells as f64)
}

/// Conjugated periodic Hill stencil
/// `(e^{iζ/n} v_{j+1} - 2 v_j + e^{-iζ/n} v_{j-1}) / h² + q_j v_j`.
pub fn apply_conjugated_hill(q: &[f64], h: f64, zeta: f64, v: &[Complex64]) -> Vec<Complex64> {
    let n = v.len();
    let ph = bloch_phase(zeta, n);
    (0..n)
        .map(|j| {
            let up = v[(j + 1) % n];
            let down = v[(j + n - 1) % n];
            (ph * up - 2.0 * v[j] + ph.conj() * down) / (h * h) + q[j] * v[j]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn free_particle() {
        let m = monodromy(&vec![0.0; 128], 2.0 * PI).unwrap();
        assert_abs_diff_eq!(m[0][0], 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(m[0][1], 2.0 * PI, epsilon = 1e-12);
        assert_abs_diff_eq!(m[1][0], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(discriminant(&m), 2.0, epsilon = 1e-14);
        assert_eq!(rank_m_minus_identity(&m, 1e-8), 1);
    }

    #[test]
    fn constant_potentials() {
        let p = 3.7;
        let c: f64 = 2.3;
        let m = monodromy(&vec![c; 4096], p).unwrap();
        assert_abs_diff_eq!(discriminant(&m), 2.0 * (c.sqrt() * p).cos(), epsilon = 1e-10);
        let m = monodromy(&vec![-3.0; 4096], 2.0 * PI).unwrap();
        let expect = 2.0 * (2.0 * PI * 3f64.sqrt()).cosh();
        assert!((discriminant(&m) / expect - 1.0).abs() < 1e-9);
        assert_eq!(classify(discriminant(&m), 1e-6), Classification::Hyperbolic);
        assert!(relative_det_defect(&m) < 1e-10);
    }

    #[test]
    fn coarse_grid_rejected() {
        assert!(matches!(monodromy(&[1.0; 63], 1.0), Err(Error::GridTooCoarse(_))));
    }

    #[test]
    fn exponents_of_strongly_hyperbolic_monodromy_are_finite() {
        let m = [[1e30, 0.0], [0.0, 1e-30]];
        let [a, b] = floquet_exponents(&m, 1.0);
        assert_abs_diff_eq!(a.re, 30.0 * std::f64::consts::LN_10, epsilon = 1e-10);
        assert_abs_diff_eq!(b.re, -30.0 * std::f64::consts::LN_10, epsilon = 1e-10);
    }

    #[test]
    fn exponents_reproduce_multipliers() {
        let m = monodromy(&vec![0.5; 256], 2.0).unwrap();
        let [a, b] = floquet_exponents(&m, 2.0);
        let prod = (a * 2.0).exp() * (b * 2.0).exp();
        assert_abs_diff_eq!(prod.re, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(prod.im, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn delta_sequence_transform() {
        let seq = WindowedSequence {
            offset: 0.0,
            period: 1.0,
            k_min: 0,
            values: vec![Complex64::new(1.0, 0.0)],
        };
        let pair = forward_transform(&seq, 0.0, 16).unwrap();
        for v in &pair.transform {
            assert_abs_diff_eq!(v.norm(), 1.0, epsilon = 1e-15);
        }
    }
}
