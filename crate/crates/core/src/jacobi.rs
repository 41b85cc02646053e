//! Jacobi operator of the unduloid, the six geometric Jacobi fields and the
//! temperate-kernel count.
//!
//! In isothermal coordinates the Jacobi operator is
//! `𝒥 = λ⁻² (∂_s² + ∂_θ² + τ² cosh 2σ)` with `λ² = τ² e^{2σ}`.

use std::f64::consts::PI;

use faer::{Mat, Side};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::delaunay::{solve_generating_curve, DelaunayParameter, GeneratingCurve};
use crate::floquet::{hill_analyze, Classification, HillResult, HillSummary};
use crate::{Error, Result};

/// Minimum s-resolution accepted by [`apply_jacobi`].
pub const MIN_POINTS_PER_PERIOD: f64 = 32.0;

/// Default step in τ for the Delaunay-parameter field.
pub const DEFAULT_DTAU: f64 = 1e-3;

/// Uniform `(s, θ)` grid; `θ_k = 2πk / ntheta`, `s_j = s_start + j hs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGrid {
    pub s_start: f64,
    pub ns: usize,
    pub hs: f64,
    pub ntheta: usize,
}

impl SurfaceGrid {
    /// Grid centred on the neck spanning `periods` s-periods.
    pub fn centered(curve: &GeneratingCurve, periods: f64, points_per_period: usize, ntheta: usize) -> Self {
        let hs = curve.s_period / points_per_period as f64;
        let ns = (periods * points_per_period as f64).round() as usize + 1;
        Self {
            s_start: -0.5 * (ns - 1) as f64 * hs,
            ns,
            hs,
            ntheta,
        }
    }

    pub fn s(&self, j: usize) -> f64 {
        self.s_start + j as f64 * self.hs
    }

    pub fn theta(&self, k: usize) -> f64 {
        2.0 * PI * k as f64 / self.ntheta as f64
    }

    pub fn htheta(&self) -> f64 {
        2.0 * PI / self.ntheta as f64
    }

    pub fn len(&self) -> usize {
        self.ns * self.ntheta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, j: usize, k: usize) -> usize {
        j * self.ntheta + k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FieldKind {
    T1,
    T2,
    T3,
    R1,
    R2,
    D,
}

impl FieldKind {
    pub const ALL: [FieldKind; 6] = [
        FieldKind::T1,
        FieldKind::T2,
        FieldKind::T3,
        FieldKind::R1,
        FieldKind::R2,
        FieldKind::D,
    ];

    pub fn angular_mode(self) -> usize {
        match self {
            FieldKind::T3 | FieldKind::D => 0,
            _ => 1,
        }
    }

    pub fn growth_class(self) -> GrowthClass {
        match self {
            FieldKind::T1 | FieldKind::T2 | FieldKind::T3 => GrowthClass::Bounded,
            _ => GrowthClass::Linear,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GrowthClass {
    Bounded,
    Linear,
}

#[derive(Debug, Clone)]
pub struct JacobiField {
    pub kind: FieldKind,
    pub grid: SurfaceGrid,
    /// Row-major samples, `values[j * ntheta + k]`.
    pub values: Vec<f64>,
    pub angular_mode: usize,
    pub growth_class: GrowthClass,
}

/// Apply `𝒥` with second-order differences (one-sided at the s-ends, whose
/// values should be left out of norms).
pub fn apply_jacobi(curve: &GeneratingCurve, grid: &SurfaceGrid, field: &[f64]) -> Result<Vec<f64>> {
    if curve.s_period / grid.hs < MIN_POINTS_PER_PERIOD {
        return Err(Error::GridTooCoarse(format!(
            "{:.1} points per s-period, need at least {MIN_POINTS_PER_PERIOD}",
            curve.s_period / grid.hs
        )));
    }
    if grid.ns < 4 || grid.ntheta < 3 {
        return Err(Error::GridTooCoarse(format!("{} x {} grid", grid.ns, grid.ntheta)));
    }
    if field.len() != grid.len() {
        return Err(Error::Domain(format!(
            "field has {} samples, grid has {}",
            field.len(),
            grid.len()
        )));
    }
    let tau = curve.tau_value();
    let (ns, nt) = (grid.ns, grid.ntheta);
    let h2 = grid.hs * grid.hs;
    let ht2 = grid.htheta() * grid.htheta();
    let v = |j: usize, k: usize| field[grid.index(j, k)];
    let mut out = vec![0.0; field.len()];
    for j in 0..ns {
        let sigma = curve.state_at(grid.s(j))[0];
        let q = tau * tau * (2.0 * sigma).cosh();
        let lam2 = tau * tau * (2.0 * sigma).exp();
        for k in 0..nt {
            let dss = if j == 0 {
                (2.0 * v(0, k) - 5.0 * v(1, k) + 4.0 * v(2, k) - v(3, k)) / h2
            } else if j == ns - 1 {
                (2.0 * v(j, k) - 5.0 * v(j - 1, k) + 4.0 * v(j - 2, k) - v(j - 3, k)) / h2
            } else {
                (v(j + 1, k) - 2.0 * v(j, k) + v(j - 1, k)) / h2
            };
            let dtt = (v(j, (k + 1) % nt) - 2.0 * v(j, k) + v(j, (k + nt - 1) % nt)) / ht2;
            out[grid.index(j, k)] = (dss + dtt + q * v(j, k)) / lam2;
        }
    }
    Ok(out)
}

/// Sup norm over rows `1..ns-1` (the one-sided boundary rows are excluded).
pub fn interior_sup_norm(grid: &SurfaceGrid, values: &[f64]) -> f64 {
    (1..grid.ns - 1)
        .flat_map(|j| (0..grid.ntheta).map(move |k| (j, k)))
        .map(|(j, k)| values[grid.index(j, k)].abs())
        .fold(0.0, f64::max)
}

/// Curves re-solved at `τ ± dτ` and `τ ± dτ/2`, for differentiating the
/// surface in the Delaunay parameter.
#[derive(Debug, Clone)]
pub struct DelaunayVariation {
    pub dtau: f64,
    plus: GeneratingCurve,
    minus: GeneratingCurve,
    half_plus: GeneratingCurve,
    half_minus: GeneratingCurve,
}

impl DelaunayVariation {
    pub fn new(curve: &GeneratingCurve, dtau: f64) -> Result<Self> {
        let tau = curve.tau_value();
        if !(dtau > 0.0) || tau + dtau >= 1.0 || tau - dtau <= 0.0 {
            return Err(Error::Domain(format!("tau ± dtau = {tau} ± {dtau} leaves (0, 1)")));
        }
        let solve = |t: f64| -> Result<GeneratingCurve> {
            solve_generating_curve(DelaunayParameter::new(t)?, curve.ode_tolerance)
        };
        Ok(Self {
            dtau,
            plus: solve(tau + dtau)?,
            minus: solve(tau - dtau)?,
            half_plus: solve(tau + 0.5 * dtau)?,
            half_minus: solve(tau - 0.5 * dtau)?,
        })
    }

    /// `(∂_τ r, ∂_τ z)` at fixed `s`, Richardson-extrapolated.
    pub fn derivative(&self, s: f64) -> (f64, f64) {
        let rz = |c: &GeneratingCurve| {
            let q = c.point(s);
            (q.r, q.kappa)
        };
        let dtau = self.dtau;
        let ((rp, zp), (rm, zm)) = (rz(&self.plus), rz(&self.minus));
        let ((rhp, zhp), (rhm, zhm)) = (rz(&self.half_plus), rz(&self.half_minus));
        let coarse = ((rp - rm) / (2.0 * dtau), (zp - zm) / (2.0 * dtau));
        let fine = ((rhp - rhm) / dtau, (zhp - zhm) / dtau);
        ((4.0 * fine.0 - coarse.0) / 3.0, (4.0 * fine.1 - coarse.1) / 3.0)
    }

    /// `Φ^D = -∂_τX·N` at the point `s` of `curve`.
    pub fn phi_d(&self, curve: &GeneratingCurve, s: f64) -> f64 {
        let (nr, nz) = curve.point(s).normal_rz();
        let (dr, dz) = self.derivative(s);
        -(dr * nr + dz * nz)
    }
}

/// Sample the six geometric Jacobi fields.
///
/// `T_e = e·N`, `R_e = ((x·e) e₃ - (x·e₃) e)·N`, `D = -∂_τX·N`, with `N` the
/// normal toward the axis. `∂_τX` comes from [`DelaunayVariation`].
pub fn geometric_fields(curve: &GeneratingCurve, grid: &SurfaceGrid, dtau: f64) -> Result<Vec<JacobiField>> {
    let variation = DelaunayVariation::new(curve, dtau)?;
    let mut fields: Vec<JacobiField> = FieldKind::ALL
        .iter()
        .map(|&kind| JacobiField {
            kind,
            grid: *grid,
            values: vec![0.0; grid.len()],
            angular_mode: kind.angular_mode(),
            growth_class: kind.growth_class(),
        })
        .collect();
    for j in 0..grid.ns {
        let s = grid.s(j);
        let p = curve.point(s);
        let (nr, nz) = p.normal_rz();
        let (dr, dz) = variation.derivative(s);
        let phi_d = -(dr * nr + dz * nz);
        // x·e₁ = r cos θ, x·e₃ = κ; N = (n_r cos θ, n_r sin θ, n_z).
        let rot = p.r * nz - p.kappa * nr;
        for k in 0..grid.ntheta {
            let (st, ct) = grid.theta(k).sin_cos();
            let idx = grid.index(j, k);
            fields[0].values[idx] = nr * ct;
            fields[1].values[idx] = nr * st;
            fields[2].values[idx] = nz;
            fields[3].values[idx] = rot * ct;
            fields[4].values[idx] = rot * st;
            fields[5].values[idx] = phi_d;
        }
    }
    Ok(fields)
}

/// Angular Fourier content of a field.
#[derive(Debug, Clone)]
pub struct ModeDecomposition {
    /// `coefficients[j][m]` for `m = 0..=ntheta/2`, normalised so that
    /// `cos(mθ)` has coefficient 1/2 (1 for `m = 0`).
    pub coefficients: Vec<Vec<Complex64>>,
    /// Energy per angular mode summed over s, with `±m` combined.
    pub energy: Vec<f64>,
}

impl ModeDecomposition {
    pub fn fraction(&self, m: usize) -> f64 {
        let total: f64 = self.energy.iter().sum();
        if total == 0.0 {
            0.0
        } else {
            self.energy[m] / total
        }
    }
}

pub fn mode_decompose(field: &JacobiField) -> ModeDecomposition {
    let grid = &field.grid;
    let nt = grid.ntheta;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(nt);
    let half = nt / 2;
    let mut energy = vec![0.0; half + 1];
    let mut coefficients = Vec::with_capacity(grid.ns);
    let mut buf = vec![Complex64::new(0.0, 0.0); nt];
    for j in 0..grid.ns {
        for k in 0..nt {
            buf[k] = Complex64::new(field.values[grid.index(j, k)], 0.0);
        }
        fft.process(&mut buf);
        let row: Vec<Complex64> = buf[..=half].iter().map(|c| c / nt as f64).collect();
        for m in 0..=half {
            let e = buf[m].norm_sqr();
            // Real input: the -m coefficient mirrors +m except at 0 and Nyquist.
            energy[m] += if m == 0 || 2 * m == nt { e } else { 2.0 * e };
        }
        coefficients.push(row);
    }
    ModeDecomposition { coefficients, energy }
}

/// Per-mode row of the temperate count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeCount {
    pub hill: HillSummary,
    pub temperate: usize,
}

/// Count Jacobi fields of temperate growth through Hill discriminants.
pub fn temperate_kernel_count(
    curve: &GeneratingCurve,
    n_max: usize,
    parabolic_tol: f64,
) -> Result<(usize, Vec<ModeCount>, Vec<HillResult>)> {
    if n_max < 2 {
        return Err(Error::Domain(format!("n_max = {n_max} must be at least 2")));
    }
    let mut total = 0;
    let mut table = Vec::with_capacity(n_max + 1);
    let mut results = Vec::with_capacity(n_max + 1);
    for n in 0..=n_max {
        let hill = hill_analyze(curve, n, parabolic_tol)?;
        let temperate = match hill.classification {
            Classification::Elliptic => {
                return Err(Error::UnexpectedStabilityBand {
                    mode: n,
                    discriminant: hill.discriminant,
                })
            }
            Classification::Parabolic => {
                if n == 0 {
                    2
                } else {
                    4
                }
            }
            Classification::Hyperbolic => 0,
        };
        total += temperate;
        table.push(ModeCount {
            hill: hill.summary(),
            temperate,
        });
        results.push(hill);
    }
    Ok((total, table, results))
}

/// Condition number of the Gram matrix of the unit-normalised fields.
pub fn gram_condition(fields: &[JacobiField]) -> Result<f64> {
    let k = fields.len();
    let norms: Vec<f64> = fields
        .iter()
        .map(|f| f.values.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let g = Mat::<f64>::from_fn(k, k, |a, b| {
        fields[a]
            .values
            .iter()
            .zip(&fields[b].values)
            .map(|(x, y)| x * y)
            .sum::<f64>()
            / (norms[a] * norms[b])
    });
    let ev = g
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let (lo, hi) = (ev[0], ev[k - 1]);
    Ok(if lo <= 0.0 { f64::INFINITY } else { hi / lo })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_field() {
        let c = solve_generating_curve(DelaunayParameter::new(0.6).unwrap(), 1e-12).unwrap();
        let g = SurfaceGrid::centered(&c, 1.0, 64, 8);
        let out = apply_jacobi(&c, &g, &vec![0.0; g.len()]).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
        let coarse = SurfaceGrid::centered(&c, 1.0, 16, 8);
        assert!(apply_jacobi(&c, &coarse, &vec![0.0; coarse.len()]).is_err());
    }

    #[test]
    fn cylinder_sine_mode() {
        let c = solve_generating_curve(DelaunayParameter::cylinder(), 1e-12).unwrap();
        let mut prev = f64::INFINITY;
        for pts in [32, 64, 128] {
            let g = SurfaceGrid::centered(&c, 2.0, pts, 8);
            let field: Vec<f64> = (0..g.len()).map(|i| g.s(i / g.ntheta).sin()).collect();
            let r = interior_sup_norm(&g, &apply_jacobi(&c, &g, &field).unwrap());
            assert!(r < prev / 3.5);
            prev = r;
        }
    }

    #[test]
    fn neck_values_and_modes() {
        let c = solve_generating_curve(DelaunayParameter::new(0.6).unwrap(), 1e-12).unwrap();
        let g = SurfaceGrid::centered(&c, 2.0, 64, 16);
        let f = geometric_fields(&c, &g, DEFAULT_DTAU).unwrap();
        let j0 = (g.ns - 1) / 2;
        assert!(g.s(j0).abs() < 1e-12);
        assert!(f[2].values[g.index(j0, 0)].abs() < 1e-12);
        for field in &f {
            let d = mode_decompose(field);
            assert!(d.fraction(field.angular_mode) > 0.999);
        }
    }
}
