//! Delaunay unduloids: generating curve, curvatures, radial profile and
//! signed-distance queries.
//!
//! Canonical scale: the surface is `X(s, θ) = (τ e^σ cos θ, τ e^σ sin θ, κ)`
//! in isothermal coordinates, with mean curvature `k1 + k2 = 1`. The curve
//! satisfies
//!
//! ```text
//! σ'' = -τ² cosh σ sinh σ,   (σ')² + τ² cosh² σ = 1,   κ' = τ² e^σ cosh σ
//! ```
//!
//! with `σ(0) = -arccosh(1/τ)`, `σ'(0) = 0`, `κ(0) = 0`. The neck sits at
//! `s = 0`, `z = 0` and the bulge at half the period.

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Smallest Delaunay parameter accepted. Below it the period and the focal
/// radius at the neck degenerate.
pub const MIN_TAU: f64 = 0.02;

/// Delaunay parameter `τ ∈ (0, 1)`; `τ = 1` only through [`DelaunayParameter::cylinder`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DelaunayParameter(f64);

impl DelaunayParameter {
    pub fn new(tau: f64) -> Result<Self> {
        if !tau.is_finite() || tau <= 0.0 || tau >= 1.0 {
            return Err(Error::Domain(format!(
                "tau = {tau} must lie in the open interval (0, 1); use the cylinder constructor for tau = 1"
            )));
        }
        if tau < MIN_TAU {
            return Err(Error::Domain(format!(
                "tau = {tau} is below the supported minimum {MIN_TAU}"
            )));
        }
        Ok(Self(tau))
    }

    /// The unit cylinder, `τ = 1`.
    pub fn cylinder() -> Self {
        Self(1.0)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_cylinder(self) -> bool {
        self.0 == 1.0
    }
}

/// Neck radius `1 - √(1-τ²)`.
pub fn rho_neck(tau: f64) -> f64 {
    1.0 - (1.0 - tau * tau).max(0.0).sqrt()
}

/// Bulge radius `1 + √(1-τ²)`.
pub fn rho_bulge(tau: f64) -> f64 {
    1.0 + (1.0 - tau * tau).max(0.0).sqrt()
}

type State = [f64; 3];

#[inline]
fn rhs(tau2: f64, y: State) -> State {
    let (sh, ch) = (y[0].sinh(), y[0].cosh());
    [y[1], -tau2 * ch * sh, tau2 * y[0].exp() * ch]
}

#[inline]
fn rk4(tau2: f64, y: State, h: f64) -> State {
    let k1 = rhs(tau2, y);
    let k2 = rhs(tau2, add(y, k1, 0.5 * h));
    let k3 = rhs(tau2, add(y, k2, 0.5 * h));
    let k4 = rhs(tau2, add(y, k3, h));
    let mut out = y;
    for i in 0..3 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

#[inline]
fn add(y: State, k: State, h: f64) -> State {
    [y[0] + h * k[0], y[1] + h * k[1], y[2] + h * k[2]]
}

/// Fixed RK4 step used for a requested tolerance. The global error of the
/// scheme behaves like `C h⁴` with `C` of order one on this system.
pub fn step_for_tolerance(ode_tolerance: f64) -> f64 {
    (0.5 * ode_tolerance.powf(0.25)).clamp(1e-4, 0.02)
}

/// Point evaluation of the generating curve and its derivatives.
#[derive(Debug, Clone, Copy)]
pub struct CurvePoint {
    pub s: f64,
    pub sigma: f64,
    pub dsigma: f64,
    pub ddsigma: f64,
    pub kappa: f64,
    /// `r = τ e^σ` and its first two s-derivatives.
    pub r: f64,
    pub dr: f64,
    pub ddr: f64,
    /// `z' = κ'` and `z''`.
    pub dz: f64,
    pub ddz: f64,
}

impl CurvePoint {
    /// Conformal factor `λ = |∂_s X| = |∂_θ X| = r`, computed from the tangent.
    pub fn lambda(&self) -> f64 {
        self.dr.hypot(self.dz)
    }

    /// Unit normal in the meridian plane, pointing toward the axis: `(n_r, n_z)`.
    pub fn normal_rz(&self) -> (f64, f64) {
        let l = self.lambda();
        (-self.dz / l, self.dr / l)
    }

    /// Principal curvatures `(parallel, meridian)` from the fundamental forms,
    /// signed with respect to the inner normal.
    pub fn curvatures(&self) -> (f64, f64) {
        let l = self.lambda();
        let parallel = self.dz / (l * self.r);
        let meridian = (self.dr * self.ddz - self.ddr * self.dz) / (l * l * l);
        (parallel, meridian)
    }
}

/// One period of the generating curve on a uniform s-grid.
#[derive(Debug, Clone)]
pub struct GeneratingCurve {
    pub tau: DelaunayParameter,
    /// Uniform nodes covering `[0, s_period]` (both ends included).
    pub s_grid: Vec<f64>,
    pub sigma: Vec<f64>,
    pub dsigma: Vec<f64>,
    pub kappa: Vec<f64>,
    /// Minimal period of σ (nominal `2π` for the cylinder).
    pub s_period: f64,
    /// Axial period `κ(s_period)` (nominal `2π` for the cylinder).
    pub t_period: f64,
    pub ode_tolerance: f64,
    /// Grid spacing of `s_grid`.
    pub step: f64,
    /// `max |σ'² + τ² cosh² σ - 1|` over the nodes.
    pub energy_drift: f64,
    /// Half-width of the Fermi tube used by [`signed_distance`].
    pub tube_delta: f64,
    coarse: Vec<[f64; 3]>,
}

const COARSE_PER_PERIOD: usize = 512;

/// Integrate the generating curve over one period.
pub fn solve_generating_curve(tau: DelaunayParameter, ode_tolerance: f64) -> Result<GeneratingCurve> {
    if !(1e-14..=1e-6).contains(&ode_tolerance) {
        return Err(Error::Domain(format!(
            "ode_tolerance = {ode_tolerance:e} outside [1e-14, 1e-6]"
        )));
    }
    let t = tau.value();
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::Domain(format!("tau = {t} outside (0, 1]")));
    }
    if tau.is_cylinder() {
        return Ok(cylinder_curve(ode_tolerance));
    }
    let tau2 = t * t;
    let h0 = step_for_tolerance(ode_tolerance);
    let sigma0 = -(1.0 / t).acosh();

    // Pass 1: march until σ' changes sign with σ > 0 (the bulge), then bisect
    // on the partial step.
    let budget = (400.0 / h0).ceil() as usize;
    let mut y = [sigma0, 0.0, 0.0];
    let mut s = 0.0;
    let mut steps = 0usize;
    let s_half = loop {
        if steps >= budget {
            return Err(Error::PeriodNotFound { tau: t, steps });
        }
        let next = rk4(tau2, y, h0);
        steps += 1;
        if y[1] > 0.0 && next[1] <= 0.0 && next[0] > 0.0 {
            let (mut lo, mut hi) = (0.0, h0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if rk4(tau2, y, mid)[1] > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            break s + 0.5 * (lo + hi);
        }
        y = next;
        s += h0;
        if !y[0].is_finite() {
            return Err(Error::PeriodNotFound { tau: t, steps });
        }
    };

    // Pass 2: uniform grid with an even number of intervals so that the
    // bulge is a node.
    let s_period = 2.0 * s_half;
    let n = 2 * ((s_half / h0).ceil() as usize).max(16);
    let h = s_period / n as f64;
    let mut s_grid = Vec::with_capacity(n + 1);
    let mut sigma = Vec::with_capacity(n + 1);
    let mut dsigma = Vec::with_capacity(n + 1);
    let mut kappa = Vec::with_capacity(n + 1);
    let mut y = [sigma0, 0.0, 0.0];
    for i in 0..=n {
        s_grid.push(i as f64 * h);
        sigma.push(y[0]);
        dsigma.push(y[1]);
        kappa.push(y[2]);
        if i < n {
            y = rk4(tau2, y, h);
        }
    }
    let energy_drift = sigma
        .iter()
        .zip(&dsigma)
        .map(|(&sg, &ds)| (ds * ds + tau2 * sg.cosh().powi(2) - 1.0).abs())
        .fold(0.0, f64::max);
    let t_period = kappa[n];
    let mut curve = GeneratingCurve {
        tau,
        s_grid,
        sigma,
        dsigma,
        kappa,
        s_period,
        t_period,
        ode_tolerance,
        step: h,
        energy_drift,
        tube_delta: 0.0,
        coarse: Vec::new(),
    };
    curve.tube_delta = default_tube_delta(curve.max_abs_curvature());
    curve.build_coarse();
    Ok(curve)
}

fn cylinder_curve(ode_tolerance: f64) -> GeneratingCurve {
    let n = 256;
    let s_period = 2.0 * PI;
    let h = s_period / n as f64;
    let s_grid: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
    let mut curve = GeneratingCurve {
        tau: DelaunayParameter::cylinder(),
        kappa: s_grid.clone(),
        s_grid,
        sigma: vec![0.0; n + 1],
        dsigma: vec![0.0; n + 1],
        s_period,
        t_period: s_period,
        ode_tolerance,
        step: h,
        energy_drift: 0.0,
        tube_delta: default_tube_delta(1.0),
        coarse: Vec::new(),
    };
    curve.build_coarse();
    curve
}

/// Default tube half-width `min(0.3, 0.8 / max|k|)`.
pub fn default_tube_delta(max_abs_curvature: f64) -> f64 {
    (0.8 / max_abs_curvature).min(0.3)
}

impl GeneratingCurve {
    pub fn tau_value(&self) -> f64 {
        self.tau.value()
    }

    pub fn is_cylinder(&self) -> bool {
        self.tau.is_cylinder()
    }

    /// Number of intervals of the node grid.
    pub fn intervals(&self) -> usize {
        self.s_grid.len() - 1
    }

    /// Replace the Fermi tube half-width.
    pub fn with_tube_delta(mut self, delta: f64) -> Self {
        self.tube_delta = delta;
        self
    }

    /// `(σ, σ', κ)` at arbitrary `s`, using the periodic extension
    /// `κ(s + k s_period) = κ(s) + k T_period`.
    pub fn state_at(&self, s: f64) -> [f64; 3] {
        if self.is_cylinder() {
            return [0.0, 0.0, s];
        }
        let k = (s / self.s_period).floor();
        let local = s - k * self.s_period;
        let n = self.intervals();
        let i = ((local / self.step).round() as usize).min(n);
        let ds = local - self.s_grid[i];
        let y0 = [self.sigma[i], self.dsigma[i], self.kappa[i]];
        let tau = self.tau_value();
        let mut y = if ds == 0.0 { y0 } else { rk4(tau * tau, y0, ds) };
        y[2] += k * self.t_period;
        y
    }

    /// Full point evaluation with derivatives.
    pub fn point(&self, s: f64) -> CurvePoint {
        let [sigma, dsigma, kappa] = self.state_at(s);
        self.point_from_state(s, sigma, dsigma, kappa)
    }

    fn point_from_state(&self, s: f64, sigma: f64, dsigma: f64, kappa: f64) -> CurvePoint {
        let tau = self.tau_value();
        let tau2 = tau * tau;
        let (sh, ch) = (sigma.sinh(), sigma.cosh());
        let e = sigma.exp();
        let ddsigma = -tau2 * ch * sh;
        let r = tau * e;
        CurvePoint {
            s,
            sigma,
            dsigma,
            ddsigma,
            kappa,
            r,
            dr: r * dsigma,
            ddr: r * (dsigma * dsigma + ddsigma),
            dz: tau2 * e * ch,
            ddz: tau2 * e * e * dsigma,
        }
    }

    /// Point evaluation at node `i` (no interpolation step).
    pub fn node_point(&self, i: usize) -> CurvePoint {
        self.point_from_state(self.s_grid[i], self.sigma[i], self.dsigma[i], self.kappa[i])
    }

    /// Largest principal curvature magnitude over the nodes.
    pub fn max_abs_curvature(&self) -> f64 {
        (0..self.s_grid.len())
            .map(|i| {
                let (a, b) = self.node_point(i).curvatures();
                a.abs().max(b.abs())
            })
            .fold(0.0, f64::max)
    }

    fn build_coarse(&mut self) {
        let m = 3 * COARSE_PER_PERIOD;
        let ds = self.s_period / COARSE_PER_PERIOD as f64;
        self.coarse = (0..=m)
            .map(|j| {
                let s = -self.s_period + j as f64 * ds;
                let p = self.point(s);
                [s, p.r, p.kappa]
            })
            .collect();
    }

    pub fn summary(&self) -> CurveSummary {
        let tau = self.tau_value();
        CurveSummary {
            tau,
            s_period: self.s_period,
            t_period: self.t_period,
            rho_neck: rho_neck(tau),
            rho_bulge: rho_bulge(tau),
            energy_drift: self.energy_drift,
        }
    }

    /// CSV rows `s,sigma,dsigma,kappa` over one period.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "s,sigma,dsigma,kappa")?;
        for i in 0..self.s_grid.len() {
            writeln!(
                w,
                "{:.16e},{:.16e},{:.16e},{:.16e}",
                self.s_grid[i], self.sigma[i], self.dsigma[i], self.kappa[i]
            )?;
        }
        Ok(())
    }
}

/// JSON summary of a curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub tau: f64,
    pub s_period: f64,
    pub t_period: f64,
    pub rho_neck: f64,
    pub rho_bulge: f64,
    pub energy_drift: f64,
}

/// `(s_period, T_period)`.
pub fn period(curve: &GeneratingCurve) -> Result<(f64, f64)> {
    if curve.is_cylinder() {
        return Err(Error::CylinderPeriod);
    }
    Ok((curve.s_period, curve.t_period))
}

/// A point of the surface with its frame and curvatures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SurfaceSample {
    pub s: f64,
    pub theta: f64,
    pub position: [f64; 3],
    pub normal: [f64; 3],
    /// Curvature of the parallel circle.
    pub k1: f64,
    /// Curvature of the meridian.
    pub k2: f64,
    pub a_sq: f64,
    pub h: f64,
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Evaluate the canonical immersion at `(s, θ)`.
pub fn immerse(curve: &GeneratingCurve, s: f64, theta: f64) -> SurfaceSample {
    let p = curve.point(s);
    let (st, ct) = theta.sin_cos();
    let position = [p.r * ct, p.r * st, p.kappa];
    let xs = [p.dr * ct, p.dr * st, p.dz];
    let xt = [-p.r * st, p.r * ct, 0.0];
    let c = cross(xs, xt);
    let norm = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
    let mut normal = [c[0] / norm, c[1] / norm, c[2] / norm];
    // The axis must lie on the positive side.
    if normal[0] * ct + normal[1] * st > 0.0 {
        normal = [-normal[0], -normal[1], -normal[2]];
    }
    let (k1, k2) = p.curvatures();
    SurfaceSample {
        s,
        theta,
        position,
        normal,
        k1,
        k2,
        a_sq: k1 * k1 + k2 * k2,
        h: k1 + k2,
    }
}

/// Invert `κ(s) = z` and return the isothermal coordinate of the meridian
/// point at height `z` (not reduced modulo the period).
pub fn s_at_height(curve: &GeneratingCurve, z: f64) -> f64 {
    if curve.is_cylinder() {
        return z;
    }
    let k = (z / curve.t_period).floor();
    let z0 = z - k * curve.t_period;
    let n = curve.intervals();
    let i = match curve.kappa.binary_search_by(|v| v.total_cmp(&z0)) {
        Ok(i) => i.min(n - 1),
        Err(i) => i.saturating_sub(1).min(n - 1),
    };
    let p = curve.node_point(i);
    let mut s = curve.s_grid[i] + (z0 - p.kappa) / p.dz;
    for _ in 0..30 {
        let q = curve.point(s);
        let ds = (q.kappa - z0) / q.dz;
        s -= ds;
        if ds.abs() <= 1e-15 * (1.0 + s.abs()) {
            break;
        }
    }
    s + k * curve.s_period
}

/// Radial profile `ρ(z)` and `dρ/dz`.
pub fn profile_radius(curve: &GeneratingCurve, z: f64) -> (f64, f64) {
    let p = curve.point(s_at_height(curve, z));
    (p.r, p.dr / p.dz)
}

/// Result of a signed-distance query in the meridian half-plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FermiQuery {
    pub r: f64,
    pub z: f64,
    /// Positive on the axis side of the surface.
    pub t_signed: f64,
    /// Isothermal coordinate of the footpoint, on the same lift as `z`.
    pub foot_s: f64,
    pub within_tube: bool,
    /// Two footpoints at (numerically) equal distance; the smaller `s` is returned.
    pub ambiguous: bool,
}

/// Signed distance from `(r, z)` to the meridian of the surface.
pub fn signed_distance(curve: &GeneratingCurve, r: f64, z: f64) -> FermiQuery {
    let tp = curve.t_period;
    let k = (z / tp).floor();
    let z0 = z - k * tp;
    let d2 = |c: &[f64; 3]| (c[1] - r).powi(2) + (c[2] - z0).powi(2);

    let coarse = &curve.coarse;
    let mut best = f64::INFINITY;
    for c in coarse {
        best = best.min(d2(c));
    }
    let slack = (best.sqrt() + 0.05).powi(2);
    let mut found: Vec<(f64, f64)> = Vec::new();
    for j in 1..coarse.len() - 1 {
        let dj = d2(&coarse[j]);
        if dj <= d2(&coarse[j - 1]) && dj <= d2(&coarse[j + 1]) && dj <= slack {
            let s = refine_foot(curve, r, z0, coarse[j - 1][0], coarse[j + 1][0], coarse[j][0]);
            let p = curve.point(s);
            let d = (p.r - r).hypot(p.kappa - z0);
            found.push((d, s));
        }
    }
    if found.is_empty() {
        // Degenerate fallback: coarse minimum.
        let c = coarse
            .iter()
            .min_by(|a, b| d2(a).total_cmp(&d2(b)))
            .expect("coarse table is non-empty");
        found.push((d2(c).sqrt(), c[0]));
    }
    found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let (dist, mut foot) = found[0];
    let mut ambiguous = false;
    for &(d, s) in &found[1..] {
        if (d - dist).abs() <= 1e-9 * (1.0 + dist) && (s - foot).abs() > 1e-6 {
            ambiguous = true;
            foot = foot.min(s);
        }
    }
    let p = curve.point(foot);
    let (nr, nz) = p.normal_rz();
    let dot = (r - p.r) * nr + (z0 - p.kappa) * nz;
    let t_signed = if dist == 0.0 { 0.0 } else { dist.copysign(dot) };
    FermiQuery {
        r,
        z,
        t_signed,
        foot_s: foot + k * curve.s_period,
        within_tube: t_signed.abs() < curve.tube_delta,
        ambiguous,
    }
}

/// Minimize the squared distance on `[a, b]` starting from `s0`.
fn refine_foot(curve: &GeneratingCurve, r: f64, z: f64, a: f64, b: f64, s0: f64) -> f64 {
    let g = |s: f64| {
        let p = curve.point(s);
        let g = (p.r - r) * p.dr + (p.kappa - z) * p.dz;
        let dg = p.dr * p.dr + p.dz * p.dz + (p.r - r) * p.ddr + (p.kappa - z) * p.ddz;
        (g, dg)
    };
    let phi = |s: f64| {
        let p = curve.point(s);
        (p.r - r).powi(2) + (p.kappa - z).powi(2)
    };
    let (mut lo, mut hi) = (a, b);
    let (ga, _) = g(lo);
    let (gb, _) = g(hi);
    if ga <= 0.0 && gb >= 0.0 {
        let mut s = s0;
        for _ in 0..100 {
            let (gs, dgs) = g(s);
            if gs == 0.0 {
                break;
            }
            if gs < 0.0 {
                lo = s;
            } else {
                hi = s;
            }
            let mut next = s - gs / dgs;
            if !(dgs > 0.0) || next <= lo || next >= hi {
                next = 0.5 * (lo + hi);
            }
            let done = (next - s).abs() <= 1e-15 * (1.0 + s.abs()) || hi - lo <= 1e-15 * (1.0 + s.abs());
            s = next;
            if done {
                break;
            }
        }
        s
    } else {
        // No sign change: golden-section search on the distance itself.
        let gr = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = hi - gr * (hi - lo);
        let mut x2 = lo + gr * (hi - lo);
        let (mut f1, mut f2) = (phi(x1), phi(x2));
        for _ in 0..200 {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - gr * (hi - lo);
                f1 = phi(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + gr * (hi - lo);
                f2 = phi(x2);
            }
            if hi - lo < 1e-14 {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

/// Mean curvature of the parallel surface at signed distance `t`:
/// `Σ k_j / (1 - t k_j)`.
pub fn offset_mean_curvature(curve: &GeneratingCurve, s: f64, t: f64) -> Result<f64> {
    let (k1, k2) = curve.point(s).curvatures();
    let mut sum = 0.0;
    for (index, k) in [(1, k1), (2, k2)] {
        let value = t * k;
        if value.abs() >= 1.0 {
            return Err(Error::FocalDistance {
                index,
                value,
                curvature: k,
            });
        }
        sum += k / (1.0 - value);
    }
    Ok(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn curve(tau: f64) -> GeneratingCurve {
        solve_generating_curve(DelaunayParameter::new(tau).unwrap(), 1e-12).unwrap()
    }

    #[test]
    fn parameter_domain() {
        assert!(DelaunayParameter::new(0.0).is_err());
        assert!(DelaunayParameter::new(1.0).is_err());
        assert!(DelaunayParameter::new(0.019).is_err());
        assert!(DelaunayParameter::new(f64::NAN).is_err());
        assert!(DelaunayParameter::new(0.02).is_ok());
        assert!(solve_generating_curve(DelaunayParameter::new(0.5).unwrap(), 1e-3).is_err());
    }

    #[test]
    fn initial_data_closed_form() {
        let c = curve(0.6);
        // arccosh(1/τ) = ln((1 + √(1-τ²))/τ) = ln 3 at τ = 0.6.
        assert_abs_diff_eq!(c.sigma[0], -(3f64.ln()), epsilon = 1e-14);
        assert_eq!(c.dsigma[0], 0.0);
        assert_eq!(c.kappa[0], 0.0);
        assert!(c.energy_drift <= 1e-10, "drift {}", c.energy_drift);
    }

    #[test]
    fn periods_match_quadrature_oracle() {
        // Independent oracle: s_period = ∮ dσ / √(1 - τ² cosh² σ) and
        // T = ∮ τ² e^σ cosh σ dσ / √(1 - τ² cosh² σ), by adaptive quadrature.
        for (tau, sp, tp) in [
            (0.2, 12.064449969910935, 4.202008907936763),
            (0.6, 7.981211110659376, 5.105399772679149),
            (0.8, 7.003015211673436, 5.672333577795096),
        ] {
            let c = curve(tau);
            let (s, t) = period(&c).unwrap();
            assert_abs_diff_eq!(s, sp, epsilon = 1e-8);
            assert_abs_diff_eq!(t, tp, epsilon = 1e-8);
        }
    }

    #[test]
    fn cylinder_limit() {
        let c = solve_generating_curve(DelaunayParameter::cylinder(), 1e-12).unwrap();
        assert!(matches!(period(&c), Err(Error::CylinderPeriod)));
        let p = immerse(&c, 1.3, 0.7);
        assert_abs_diff_eq!(p.position[0].hypot(p.position[1]), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.k1, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.k2, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p.h, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(offset_mean_curvature(&c, 0.0, 0.5).unwrap(), 2.0, epsilon = 1e-15);
    }

    #[test]
    fn neck_and_bulge_radii() {
        let c = curve(0.6);
        assert_abs_diff_eq!(
            immerse(&c, 0.0, 0.3).position[0].hypot(immerse(&c, 0.0, 0.3).position[1]),
            0.2,
            epsilon = 1e-12
        );
        let (rho0, d0) = profile_radius(&c, 0.0);
        assert_abs_diff_eq!(rho0, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(d0, 0.0, epsilon = 1e-10);
        let (rho1, _) = profile_radius(&c, 0.5 * c.t_period);
        assert_abs_diff_eq!(rho1, 1.8, epsilon = 1e-10);
    }

    #[test]
    fn radial_ode_holds() {
        let c = curve(0.6);
        for j in 0..200 {
            let z = -3.0 + 0.05 * j as f64;
            let (rho, d) = profile_radius(&c, z);
            let lhs = 2.0 * rho / (1.0 + d * d).sqrt() - rho * rho;
            assert!((lhs - 0.36).abs() <= 1e-8, "z = {z}: {lhs}");
        }
    }

    #[test]
    fn mean_curvature_and_normal() {
        let c = curve(0.6);
        for i in 0..100 {
            let s = c.s_period * i as f64 / 100.0 + 0.01;
            for k in 0..16 {
                let p = immerse(&c, s, 2.0 * PI * k as f64 / 16.0);
                assert!((p.h - 1.0).abs() <= 1e-8);
                let n = p.normal;
                assert!(((n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt() - 1.0).abs() <= 1e-12);
                assert!(p.a_sq >= 0.5 * p.h * p.h);
            }
        }
    }

    #[test]
    fn signed_distance_examples() {
        let c = curve(0.6);
        let q = signed_distance(&c, 0.0, 0.0);
        assert_abs_diff_eq!(q.t_signed, 0.2, epsilon = 1e-10);
        assert_abs_diff_eq!(q.foot_s, 0.0, epsilon = 1e-7);
        let z0 = 0.7;
        let (rho, d) = profile_radius(&c, z0);
        assert!(signed_distance(&c, rho, z0).t_signed.abs() < 1e-10);
        let h = 1e-4;
        let q = signed_distance(&c, rho + h, z0);
        assert_abs_diff_eq!(q.t_signed, -h / (1.0 + d * d).sqrt(), epsilon = 1e-7);
    }

    #[test]
    fn ambiguous_footpoint_on_neck_plane() {
        let c = curve(0.6);
        let q = signed_distance(&c, 2.5, 0.0);
        assert!(q.ambiguous);
        assert!(q.foot_s < 0.0);
    }

    #[test]
    fn offset_curvature_expansion() {
        let c = curve(0.6);
        let s = 1.1;
        let p = immerse(&c, s, 0.0);
        let t = 0.01;
        let exact = offset_mean_curvature(&c, s, t).unwrap();
        let q = t * t * (p.k1.powi(3) + p.k2.powi(3));
        let diff = exact - (p.h + t * p.a_sq);
        assert!((diff - q).abs() <= 2.0 * t.powi(3) * (p.k1.powi(4) + p.k2.powi(4)));
        assert!(matches!(
            offset_mean_curvature(&c, 0.0, 0.3),
            Err(Error::FocalDistance { index: 1, .. })
        ));
    }
}
