//! Axisymmetric stationary Cahn–Hilliard solve on one axial period.
//!
//! Unknowns live on the nodes `r_i = i·hr` (`i = 0..=Nr`, the last column a
//! Dirichlet ring at `Rmax`) and `z_j = j·hz`. The Laplacian is written in
//! flux form with the area weights `∫ r dr` of each node's cell, so that the
//! weighted operator is symmetric; at `r = 0` the flux form reduces to the
//! symmetric-ghost limit `2 u_rr`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::delaunay::{profile_radius, rho_bulge, signed_distance, GeneratingCurve};
use crate::jacobi::DelaunayVariation;
use crate::linalg::sparse::TripletBuilder;
use crate::profile::{far_field_roots, Profile1D};
use crate::{df, f, Error, Result};

/// Minimum number of grid cells per interface width `ε`.
pub const CELLS_PER_EPSILON: f64 = 6.0;

/// Newton iteration cap.
pub const MAX_NEWTON: usize = 30;

pub const CONTAINER_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(rename = "Nr")]
    pub nr: usize,
    /// Number of z-intervals (half cell) or z-nodes (periodic full cell).
    #[serde(rename = "Nz")]
    pub nz: usize,
    #[serde(rename = "Rmax")]
    pub rmax: f64,
    #[serde(rename = "T_period")]
    pub t_period: f64,
    pub half_cell: bool,
}

impl GridSpec {
    /// Half-cell grid with `Rmax = ρ_bulge + 1` and at least
    /// `cells_per_eps` cells per `ε` in both directions.
    pub fn resolved(curve: &GeneratingCurve, epsilon: f64, cells_per_eps: f64) -> Self {
        let rmax = rho_bulge(curve.tau_value()) + 1.0;
        let h = epsilon / cells_per_eps;
        Self {
            nr: ((rmax / h).ceil() as usize).max(32),
            nz: ((0.5 * curve.t_period / h).ceil() as usize).max(32),
            rmax,
            t_period: curve.t_period,
            half_cell: true,
        }
    }

    /// Scale both grid dimensions by `factor` (rounded up).
    pub fn refined(&self, factor: f64) -> Self {
        Self {
            nr: (self.nr as f64 * factor).ceil() as usize,
            nz: (self.nz as f64 * factor).ceil() as usize,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.nr < 32 || self.nz < 32 {
            return Err(Error::Domain(format!(
                "Nr = {}, Nz = {} must be at least 32",
                self.nr, self.nz
            )));
        }
        if !(self.rmax > 0.0 && self.t_period > 0.0) {
            return Err(Error::Domain("Rmax and T_period must be positive".into()));
        }
        Ok(())
    }

    pub fn hr(&self) -> f64 {
        self.rmax / self.nr as f64
    }

    pub fn hz(&self) -> f64 {
        if self.half_cell {
            0.5 * self.t_period / self.nz as f64
        } else {
            self.t_period / self.nz as f64
        }
    }

    /// Number of radial nodes including the Dirichlet ring.
    pub fn nodes_r(&self) -> usize {
        self.nr + 1
    }

    pub fn nodes_z(&self) -> usize {
        if self.half_cell {
            self.nz + 1
        } else {
            self.nz
        }
    }

    pub fn len(&self) -> usize {
        self.nodes_r() * self.nodes_z()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Storage index of node `(i, j)` (z-major).
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nodes_r() + i
    }

    /// Index among the free (non-Dirichlet) nodes.
    pub fn free_index(&self, i: usize, j: usize) -> usize {
        j * self.nr + i
    }

    pub fn free_len(&self) -> usize {
        self.nr * self.nodes_z()
    }

    pub fn r(&self, i: usize) -> f64 {
        i as f64 * self.hr()
    }

    pub fn z(&self, j: usize) -> f64 {
        j as f64 * self.hz()
    }

    /// Radial area weight `∫ r dr` of node `i`'s cell.
    pub fn weight_r(&self, i: usize) -> f64 {
        let h2 = self.hr() * self.hr();
        if i == 0 {
            h2 / 8.0
        } else if i == self.nr {
            0.5 * self.nr as f64 * h2 - h2 / 8.0
        } else {
            i as f64 * h2
        }
    }

    /// Axial weight of node `j` (trapezoid on the half cell).
    pub fn weight_z(&self, j: usize) -> f64 {
        let hz = self.hz();
        if self.half_cell && (j == 0 || j == self.nz) {
            0.5 * hz
        } else {
            hz
        }
    }

    /// Radial flux coefficients `(k_-, k_+)` of node `i < Nr`:
    /// `(Δ_r u)_i = k_+ (u_{i+1} - u_i) - k_- (u_i - u_{i-1})`.
    pub fn radial_coefficients(&self, i: usize) -> (f64, f64) {
        let w = self.weight_r(i);
        let km = if i == 0 { 0.0 } else { (i as f64 - 0.5) / w };
        (km, (i as f64 + 0.5) / w)
    }

    /// Axial neighbours of node `j` as `(j', coefficient, wrap)` with
    /// `(Δ_z u)_j = Σ c (u_{j'} - u_j)`; `wrap` is `+1`/`-1` when the
    /// coupling crosses the periodic seam upward/downward.
    pub fn axial_neighbours(&self, j: usize) -> Vec<(usize, f64, i32)> {
        let c = 1.0 / (self.hz() * self.hz());
        if self.half_cell {
            if j == 0 {
                vec![(1, 2.0 * c, 0)]
            } else if j == self.nz {
                vec![(j - 1, 2.0 * c, 0)]
            } else {
                vec![(j - 1, c, 0), (j + 1, c, 0)]
            }
        } else {
            let n = self.nz;
            let up = if j + 1 == n { (0, c, 1) } else { (j + 1, c, 0) };
            let down = if j == 0 { (n - 1, c, -1) } else { (j - 1, c, 0) };
            vec![down, up]
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CHSolution {
    pub tau: f64,
    pub epsilon: f64,
    pub grid: GridSpec,
    /// Nodal values, z-major, Dirichlet ring included.
    pub u: Vec<f64>,
    pub ell: f64,
    /// Area-weighted mean of `u` over the free nodes.
    pub mass: f64,
    pub residual_norm: f64,
    pub curve_ref: String,
    pub sigma_plus: f64,
    pub sigma_minus: f64,
    pub newton_history: Vec<f64>,
}

/// Identifier of a generating curve for provenance in containers.
pub fn curve_ref(curve: &GeneratingCurve) -> String {
    format!("tau={:?};ode_tol={:e}", curve.tau_value(), curve.ode_tolerance)
}

impl CHSolution {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.u[self.grid.index(i, j)]
    }

    /// Mirror a half-cell solution about `z = T/2` into the periodic cell.
    pub fn full_cell(&self) -> CHSolution {
        if !self.grid.half_cell {
            return self.clone();
        }
        let g = self.grid;
        let full = GridSpec {
            nz: 2 * g.nz,
            half_cell: false,
            ..g
        };
        let mut u = vec![0.0; full.len()];
        for j in 0..full.nodes_z() {
            let src = if j <= g.nz { j } else { 2 * g.nz - j };
            for i in 0..g.nodes_r() {
                u[full.index(i, j)] = self.u[g.index(i, src)];
            }
        }
        CHSolution {
            grid: full,
            u,
            ..self.clone()
        }
    }

    /// Bilinear interpolation (clamped to the grid); half cells are
    /// extended by even reflection and periodicity.
    pub fn interpolate(&self, r: f64, z: f64) -> f64 {
        let g = self.grid;
        let t = g.t_period;
        let mut zz = z.rem_euclid(t);
        let hz = g.hz();
        let (j0, j1, x) = if g.half_cell {
            if zz > 0.5 * t {
                zz = t - zz;
            }
            let p = zz / hz;
            let j = (p.floor() as usize).min(g.nz - 1);
            (j, j + 1, p - j as f64)
        } else {
            let p = zz / hz;
            let j = (p.floor() as usize).min(g.nz - 1);
            (j, (j + 1) % g.nz, p - j as f64)
        };
        let pr = (r.max(0.0) / g.hr()).min(g.nr as f64);
        let i = (pr.floor() as usize).min(g.nr - 1);
        let y = pr - i as f64;
        let v = |ii: usize, jj: usize| self.u[g.index(ii, jj)];
        (1.0 - x) * ((1.0 - y) * v(i, j0) + y * v(i + 1, j0)) + x * ((1.0 - y) * v(i, j1) + y * v(i + 1, j1))
    }

    /// Centered `∂_z u` at every node (zero at the symmetry planes).
    pub fn dz(&self) -> Vec<f64> {
        let g = self.grid;
        let hz = g.hz();
        let mut out = vec![0.0; g.len()];
        for j in 0..g.nodes_z() {
            let (jm, jp) = if g.half_cell {
                if j == 0 || j == g.nz {
                    continue;
                }
                (j - 1, j + 1)
            } else {
                ((j + g.nz - 1) % g.nz, (j + 1) % g.nz)
            };
            for i in 0..g.nodes_r() {
                out[g.index(i, j)] = (self.u[g.index(i, jp)] - self.u[g.index(i, jm)]) / (2.0 * hz);
            }
        }
        out
    }

    /// Write the solution container: one JSON header line followed by the
    /// little-endian `f64` payload of `u`.
    pub fn encode<W: Write>(&self, mut w: W) -> Result<()> {
        let header = ContainerHeader {
            format_version: CONTAINER_VERSION,
            tau: self.tau,
            epsilon: self.epsilon,
            grid: self.grid,
            ell: self.ell,
            mass: self.mass,
            residual_norm: self.residual_norm,
            curve_ref: self.curve_ref.clone(),
            sigma_plus: self.sigma_plus,
            sigma_minus: self.sigma_minus,
            newton_history: self.newton_history.clone(),
            len: self.u.len(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        let mut buf = Vec::with_capacity(8 * self.u.len());
        for v in &self.u {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn decode<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::decode_bytes(&bytes)
    }

    pub fn decode_bytes(bytes: &[u8]) -> Result<Self> {
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Container("missing header terminator".into()))?;
        let header: ContainerHeader =
            serde_json::from_slice(&bytes[..nl]).map_err(|e| Error::Container(format!("header: {e}")))?;
        if header.format_version != CONTAINER_VERSION {
            return Err(Error::Container(format!(
                "unsupported format_version {}",
                header.format_version
            )));
        }
        let g = header.grid;
        if g.nr == 0 || g.nz == 0 || (!g.half_cell && g.nz < 2) {
            return Err(Error::Container("degenerate grid".into()));
        }
        let expected = (g.nr.checked_add(1))
            .and_then(|a| a.checked_mul(if g.half_cell { g.nz.checked_add(1)? } else { g.nz }))
            .ok_or_else(|| Error::Container("grid size overflows".into()))?;
        if header.len != expected {
            return Err(Error::Container(format!(
                "payload length {} does not match grid ({expected})",
                header.len
            )));
        }
        let payload = &bytes[nl + 1..];
        if payload.len() != 8 * expected {
            return Err(Error::Container(format!(
                "payload has {} bytes, expected {}",
                payload.len(),
                8 * expected
            )));
        }
        let u = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Ok(CHSolution {
            tau: header.tau,
            epsilon: header.epsilon,
            grid: g,
            u,
            ell: header.ell,
            mass: header.mass,
            residual_norm: header.residual_norm,
            curve_ref: header.curve_ref,
            sigma_plus: header.sigma_plus,
            sigma_minus: header.sigma_minus,
            newton_history: header.newton_history,
        })
    }

    /// CSV of `u` along `r` at node row `j`.
    pub fn write_radial_slice<W: Write>(&self, j: usize, mut w: W) -> std::io::Result<()> {
        writeln!(w, "r,u")?;
        for i in 0..self.grid.nodes_r() {
            writeln!(w, "{:.16e},{:.16e}", self.grid.r(i), self.at(i, j))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ContainerHeader {
    format_version: u32,
    tau: f64,
    epsilon: f64,
    grid: GridSpec,
    ell: f64,
    mass: f64,
    residual_norm: f64,
    curve_ref: String,
    sigma_plus: f64,
    sigma_minus: f64,
    newton_history: Vec<f64>,
    len: usize,
}

fn check_consistency(curve: &GeneratingCurve, grid: &GridSpec) -> Result<()> {
    grid.validate()?;
    if (grid.t_period - curve.t_period).abs() > 1e-12 * curve.t_period {
        return Err(Error::Consistency(format!(
            "grid period {} does not match curve period {}",
            grid.t_period, curve.t_period
        )));
    }
    let need = rho_bulge(curve.tau_value()) + 0.5;
    if grid.rmax < need {
        return Err(Error::Domain(format!(
            "Rmax = {} below rho_bulge + 0.5 = {need}",
            grid.rmax
        )));
    }
    Ok(())
}

/// Ansatz `U(clamp(t/ε, ±L))`, with the Dirichlet ring at `-1 + σ_-`.
///
/// Beyond `|t| = εL` the clamp returns the plateaus `±1 + σ_±` (positive
/// on the axis side); that band is the tube in which the profile is used.
pub fn initial_guess(curve: &GeneratingCurve, profile: &Profile1D, grid: &GridSpec) -> Result<Vec<f64>> {
    check_consistency(curve, grid)?;
    let eps = profile.epsilon;
    let (up, um) = profile.plateaus();
    let l = profile.half_length;
    let mut u = vec![0.0; grid.len()];
    for j in 0..grid.nodes_z() {
        let z = grid.z(j);
        for i in 0..grid.nodes_r() {
            let v = if i == grid.nr {
                um
            } else {
                let t = signed_distance(curve, grid.r(i), z).t_signed;
                if eps == 0.0 || t.abs() >= eps * l {
                    if t > 0.0 {
                        up
                    } else {
                        um
                    }
                } else {
                    profile.value(t / eps)
                }
            };
            u[grid.index(i, j)] = v;
        }
    }
    Ok(u)
}

/// `ε Δ u + f(u)/ε - ℓ` on the free nodes (zero on the Dirichlet ring),
/// with the ring value taken from `u`.
pub fn residual(u: &[f64], ell: f64, grid: &GridSpec, epsilon: f64) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    for j in 0..grid.nodes_z() {
        let nbz = grid.axial_neighbours(j);
        for i in 0..grid.nr {
            let k = grid.index(i, j);
            let (km, kp) = grid.radial_coefficients(i);
            let mut lap = kp * (u[k + 1] - u[k]);
            if i > 0 {
                lap -= km * (u[k] - u[k - 1]);
            }
            for &(jj, c, _) in &nbz {
                lap += c * (u[grid.index(i, jj)] - u[k]);
            }
            out[k] = epsilon * lap + f(u[k]) / epsilon - ell;
        }
    }
    out
}

/// Area-weighted mean of `u` over the free nodes.
pub fn mass(u: &[f64], grid: &GridSpec) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..grid.nodes_z() {
        let wz = grid.weight_z(j);
        for i in 0..grid.nr {
            let w = grid.weight_r(i) * wz;
            num += w * u[grid.index(i, j)];
            den += w;
        }
    }
    num / den
}

/// Jacobian `ε Δ + f'(u)/ε` on the free nodes.
pub fn jacobian_triplets(u: &[f64], grid: &GridSpec, epsilon: f64) -> TripletBuilder<f64> {
    let n = grid.free_len();
    let mut t = TripletBuilder::with_capacity(n, n, 5 * n);
    for j in 0..grid.nodes_z() {
        let nbz = grid.axial_neighbours(j);
        for i in 0..grid.nr {
            let row = grid.free_index(i, j);
            let (km, kp) = grid.radial_coefficients(i);
            let mut diag = -kp - km;
            if i + 1 < grid.nr {
                t.push(row, grid.free_index(i + 1, j), epsilon * kp);
            }
            if i > 0 {
                t.push(row, grid.free_index(i - 1, j), epsilon * km);
            }
            for &(jj, c, _) in &nbz {
                t.push(row, grid.free_index(i, jj), epsilon * c);
                diag -= c;
            }
            t.push(row, row, epsilon * diag + df(u[grid.index(i, j)]) / epsilon);
        }
    }
    t
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

/// Damped Newton for `(u, ℓ)` with the mass of `u0` held fixed.
pub fn newton_solve(
    u0: &[f64],
    curve: &GeneratingCurve,
    profile: &Profile1D,
    grid: &GridSpec,
    tol: f64,
) -> Result<CHSolution> {
    check_consistency(curve, grid)?;
    if !grid.half_cell {
        return Err(Error::Domain(
            "Newton solves run on the half cell; reconstruct the full cell afterwards".into(),
        ));
    }
    let eps = profile.epsilon;
    if !(eps > 0.0) {
        return Err(Error::Domain("epsilon must be positive for the 2D solve".into()));
    }
    let limit = 0.15 * (0.25 * curve.t_period).min(1.0);
    if eps > limit {
        return Err(Error::UnderResolved(format!(
            "epsilon = {eps} exceeds 0.15·min(1, T/4) = {limit}"
        )));
    }
    let (hr, hz) = (grid.hr(), grid.hz());
    if eps / hr < CELLS_PER_EPSILON || eps / hz < CELLS_PER_EPSILON {
        return Err(Error::UnderResolved(format!(
            "epsilon/hr = {:.3}, epsilon/hz = {:.3}; need at least {CELLS_PER_EPSILON}",
            eps / hr,
            eps / hz
        )));
    }
    if u0.len() != grid.len() {
        return Err(Error::Consistency(format!(
            "initial field has {} values, grid has {}",
            u0.len(),
            grid.len()
        )));
    }

    let nf = grid.free_len();
    let target = mass(u0, grid);
    let mut u = u0.to_vec();
    let mut ell = profile.ell;
    let set_ring = |u: &mut [f64], ell: f64| -> Result<(f64, f64)> {
        let (sp, sm) = far_field_roots(eps, ell)?;
        for j in 0..grid.nodes_z() {
            u[grid.index(grid.nr, j)] = -1.0 + sm;
        }
        Ok((sp, sm))
    };
    let (mut sp, mut sm) = set_ring(&mut u, ell)?;
    let mut r = residual(&u, ell, grid, eps);
    let mut rn = sup(&r);
    let mut history = vec![rn];

    // Mass-row weights over the free nodes.
    let mut wmass = vec![0.0; nf];
    let mut wsum = 0.0;
    for j in 0..grid.nodes_z() {
        for i in 0..grid.nr {
            let w = grid.weight_r(i) * grid.weight_z(j);
            wmass[grid.free_index(i, j)] = w;
            wsum += w;
        }
    }
    for w in &mut wmass {
        *w /= wsum;
    }
    let ring_coupling = eps * grid.radial_coefficients(grid.nr - 1).1;

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
        let lu = jacobian_triplets(&u, grid, eps).build()?.factor()?;
        // ∂R/∂ℓ: the constant -1 plus the ring's dependence on ℓ.
        let dg = eps / df(-1.0 + sm);
        let mut rhs = faer::Mat::<f64>::zeros(nf, 2);
        for j in 0..grid.nodes_z() {
            for i in 0..grid.nr {
                let fi = grid.free_index(i, j);
                rhs[(fi, 0)] = -r[grid.index(i, j)];
                let mut c = -1.0;
                if i + 1 == grid.nr {
                    c += ring_coupling * dg;
                }
                rhs[(fi, 1)] = c;
            }
        }
        lu.solve_mat(&mut rhs);
        let mres = crate::linalg::dot(&wmass, &free_values(&u, grid)) - target;
        let (mut wy, mut wz) = (0.0, 0.0);
        for k in 0..nf {
            wy += wmass[k] * rhs[(k, 0)];
            wz += wmass[k] * rhs[(k, 1)];
        }
        // δu = y - z δℓ with mass(δu) = -mres.
        let dell = (wy + mres) / wz;
        let du: Vec<f64> = (0..nf).map(|k| rhs[(k, 0)] - rhs[(k, 1)] * dell).collect();

        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..20 {
            let mut trial = u.clone();
            for j in 0..grid.nodes_z() {
                for i in 0..grid.nr {
                    trial[grid.index(i, j)] += alpha * du[grid.free_index(i, j)];
                }
            }
            let ell_t = ell + alpha * dell;
            if let Ok((spt, smt)) = set_ring(&mut trial, ell_t) {
                let rt = residual(&trial, ell_t, grid, eps);
                let nt = sup(&rt);
                if nt < rn || nt <= tol {
                    u = trial;
                    ell = ell_t;
                    r = rt;
                    rn = nt;
                    sp = spt;
                    sm = smt;
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
    Ok(CHSolution {
        tau: curve.tau_value(),
        epsilon: eps,
        grid: *grid,
        mass: mass(&u, grid),
        u,
        ell,
        residual_norm: rn,
        curve_ref: curve_ref(curve),
        sigma_plus: sp,
        sigma_minus: sm,
        newton_history: history,
    })
}

fn free_values(u: &[f64], grid: &GridSpec) -> Vec<f64> {
    let mut out = vec![0.0; grid.free_len()];
    for j in 0..grid.nodes_z() {
        for i in 0..grid.nr {
            out[grid.free_index(i, j)] = u[grid.index(i, j)];
        }
    }
    out
}

/// Initial guess followed by Newton.
pub fn solve(curve: &GeneratingCurve, profile: &Profile1D, grid: &GridSpec, tol: f64) -> Result<CHSolution> {
    let u0 = initial_guess(curve, profile, grid)?;
    newton_solve(&u0, curve, profile, grid, tol)
}

/// Signed distance of every node, with footpoints.
fn fermi_table(curve: &GeneratingCurve, grid: &GridSpec) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0); grid.len()];
    for j in 0..grid.nodes_z() {
        for i in 0..grid.nodes_r() {
            let q = signed_distance(curve, grid.r(i), grid.z(j));
            out[grid.index(i, j)] = (q.t_signed, q.foot_s);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnsatzReport {
    pub epsilon: f64,
    /// Tube half-width `δ = ε^{2/3}`.
    pub delta: f64,
    /// `sup_{|t| ≤ δ} |u - U(t/ε)|`.
    pub sup_error: f64,
    /// The same supremum over the tubes of half-width `δ/2` and `2δ`, for
    /// the sensitivity of the error to the tube constant.
    pub sup_error_half_delta: f64,
    pub sup_error_double_delta: f64,
    pub tube_nodes: usize,
    /// `sup_{|t| > δ} |u - (±1 + σ_±)|` over the free nodes.
    pub exterior_deviation: f64,
    /// `2 e^{-√2 δ/ε}`, the plateau gap of the profile at the tube edge.
    pub exterior_reference: f64,
}

/// Compare the solution with the stretched profile inside the tube.
pub fn validate_ansatz(sol: &CHSolution, profile: &Profile1D, curve: &GeneratingCurve) -> Result<AnsatzReport> {
    check_consistency(curve, &sol.grid)?;
    let eps = sol.epsilon;
    let delta = eps.powf(2.0 / 3.0);
    let g = sol.grid;
    let (up, um) = (1.0 + sol.sigma_plus, -1.0 + sol.sigma_minus);
    let table = fermi_table(curve, &g);
    let mut sup = [0.0f64; 3];
    let mut exterior = 0.0f64;
    let mut count = 0;
    for j in 0..g.nodes_z() {
        for i in 0..g.nr {
            let k = g.index(i, j);
            let t = table[k].0;
            if t.abs() <= 2.0 * delta {
                let e = (sol.u[k] - profile.value(t / eps)).abs();
                for (s, width) in sup.iter_mut().zip([0.5, 1.0, 2.0]) {
                    if t.abs() <= width * delta {
                        *s = s.max(e);
                    }
                }
            }
            if t.abs() <= delta {
                count += 1;
            } else {
                let plateau = if t > 0.0 { up } else { um };
                exterior = exterior.max((sol.u[k] - plateau).abs());
            }
        }
    }
    Ok(AnsatzReport {
        epsilon: eps,
        delta,
        sup_error: sup[1],
        sup_error_half_delta: sup[0],
        sup_error_double_delta: sup[2],
        tube_nodes: count,
        exterior_deviation: exterior,
        exterior_reference: 2.0 * (-std::f64::consts::SQRT_2 * delta / eps).exp(),
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn fit_exponent(x: &[f64], y: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).map(|(a, b)| (a.ln(), b.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Fitted rate `c` in `|u - plateau| ≈ C e^{-c x}`, `x = |r - ρ(z)|/ε`.
    pub rate: f64,
    pub prefactor: f64,
    pub points: usize,
    /// Range of `x` covered by the fit.
    pub x_range: (f64, f64),
    /// Set when fewer than three decades or fewer than ten points are usable.
    pub low_dynamic_range: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    /// Fit against the horizontal offset `(r - ρ(z))/ε`, `r > ρ(z)`.
    pub outer: DecayFit,
    /// Same on the axis side against `(ρ(z) - r)/ε` and `+1 + σ_+`.
    pub inner: DecayFit,
    /// Diagnostic fits against the Fermi distance `|t|/ε` instead of the
    /// horizontal offset.
    pub outer_normal: DecayFit,
    pub inner_normal: DecayFit,
}

/// Samples are only used at least this many interface widths from the
/// surface, where the linear far field governs the decay.
pub const DECAY_MIN_X: f64 = 1.0;

fn linear_fit(pts: &[(f64, f64)]) -> DecayFit {
    let n = pts.len();
    if n < 2 {
        return DecayFit {
            rate: f64::NAN,
            prefactor: f64::NAN,
            points: n,
            x_range: (f64::NAN, f64::NAN),
            low_dynamic_range: true,
        };
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let (ymin, ymax) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.1), a.1.max(p.1)));
    let (xmin, xmax) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |a, p| (a.0.min(p.0), a.1.max(p.0)));
    DecayFit {
        rate: -slope,
        prefactor: (my - slope * mx).exp(),
        points: n,
        x_range: (xmin, xmax),
        low_dynamic_range: n < 10 || (ymax - ymin) < 3.0 * std::f64::consts::LN_10,
    }
}

/// Exponential approach to the plateaus away from the interface, on both
/// sides of `r = ρ(z)`.
pub fn decay_check(sol: &CHSolution, curve: &GeneratingCurve) -> Result<DecayReport> {
    check_consistency(curve, &sol.grid)?;
    let g = sol.grid;
    let eps = sol.epsilon;
    let (up, um) = (1.0 + sol.sigma_plus, -1.0 + sol.sigma_minus);
    let mut outer = Vec::new();
    let mut inner = Vec::new();
    let mut outer_n = Vec::new();
    let mut inner_n = Vec::new();
    for j in 0..g.nodes_z() {
        let z = g.z(j);
        let (rho, _) = profile_radius(curve, z);
        for i in 0..g.nr {
            let r = g.r(i);
            let x = (r - rho) / eps;
            let u = sol.at(i, j);
            let (d, side) = if x > 0.0 {
                ((u - um).abs(), &mut outer)
            } else {
                ((u - up).abs(), &mut inner)
            };
            if d <= 1e-12 {
                continue;
            }
            if x.abs() >= DECAY_MIN_X {
                side.push((x.abs(), d.ln()));
            }
            let t = signed_distance(curve, r, z).t_signed / eps;
            if t.abs() >= DECAY_MIN_X {
                if x > 0.0 { &mut outer_n } else { &mut inner_n }.push((t.abs(), d.ln()));
            }
        }
    }
    Ok(DecayReport {
        outer: linear_fit(&outer),
        inner: linear_fit(&inner),
        outer_normal: linear_fit(&outer_n),
        inner_normal: linear_fit(&inner_n),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrespondenceField {
    T3,
    D,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrespondenceReport {
    pub which: CorrespondenceField,
    pub epsilon: f64,
    /// `sup |∂u - ε⁻¹ Φ V| / sup |ε⁻¹ Φ V|` over the tube.
    pub relative_error: f64,
    pub tube_nodes: usize,
}

/// Compare a discrete derivative of the solution with `ε⁻¹ Φ U'(t/ε)`.
///
/// For `T3` the derivative is `∂_z u`. For `D` it is `∂_τ u` at fixed
/// `(r, z)`, obtained from `perturbed` (same `Nr`, `Nz`, `Rmax`, parameter
/// `τ + Δτ`) by differencing at matching nodes of the scaled grid and
/// correcting for the change of period.
pub fn field_correspondence(
    sol: &CHSolution,
    perturbed: Option<&CHSolution>,
    curve: &GeneratingCurve,
    profile: &Profile1D,
    which: CorrespondenceField,
) -> Result<CorrespondenceReport> {
    check_consistency(curve, &sol.grid)?;
    let g = sol.grid;
    let eps = sol.epsilon;
    let delta = eps.powf(2.0 / 3.0);
    let dz = sol.dz();
    let derivative: Vec<f64> = match which {
        CorrespondenceField::T3 => dz.clone(),
        CorrespondenceField::D => {
            let p = perturbed.ok_or_else(|| Error::Missing("perturbed solution required for D".into()))?;
            let pg = p.grid;
            if pg.nr != g.nr || pg.nz != g.nz || pg.rmax != g.rmax || pg.half_cell != g.half_cell {
                return Err(Error::Consistency(
                    "perturbed solution must share Nr, Nz and Rmax".into(),
                ));
            }
            if p.epsilon != eps {
                return Err(Error::Consistency("perturbed solution has a different epsilon".into()));
            }
            let dtau = p.tau - sol.tau;
            if dtau == 0.0 {
                return Err(Error::Consistency("perturbed solution has the same tau".into()));
            }
            let dlogt = (pg.t_period - g.t_period) / (dtau * g.t_period);
            (0..g.len())
                .map(|k| {
                    let j = k / g.nodes_r();
                    (p.u[k] - sol.u[k]) / dtau - g.z(j) * dlogt * dz[k]
                })
                .collect()
        }
    };
    let variation = match which {
        CorrespondenceField::D => Some(DelaunayVariation::new(curve, crate::jacobi::DEFAULT_DTAU)?),
        CorrespondenceField::T3 => None,
    };
    let mut err = 0.0f64;
    let mut scale = 0.0f64;
    let mut count = 0;
    for j in 0..g.nodes_z() {
        for i in 0..g.nr {
            let q = signed_distance(curve, g.r(i), g.z(j));
            if q.t_signed.abs() > delta {
                continue;
            }
            let phi = match &variation {
                None => curve.point(q.foot_s).normal_rz().1,
                Some(v) => v.phi_d(curve, q.foot_s),
            };
            let model = phi * profile.derivative(q.t_signed / eps) / eps;
            let k = g.index(i, j);
            err = err.max((derivative[k] - model).abs());
            scale = scale.max(model.abs());
            count += 1;
        }
    }
    Ok(CorrespondenceReport {
        which,
        epsilon: eps,
        relative_error: err / scale,
        tube_nodes: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(half: bool) -> GridSpec {
        GridSpec {
            nr: 40,
            nz: 36,
            rmax: 2.8,
            t_period: 5.0,
            half_cell: half,
        }
    }

    #[test]
    fn constant_state_has_zero_residual() {
        let g = grid(true);
        let eps = 0.1;
        let (_, sm) = far_field_roots(eps, -0.47).unwrap();
        let c = -1.0 + sm;
        let u = vec![c; g.len()];
        let r = residual(&u, f(c) / eps, &g, eps);
        assert!(sup(&r) < 1e-13);
        let full = grid(false);
        let r = residual(&vec![c; full.len()], f(c) / eps, &full, eps);
        assert!(sup(&r) < 1e-13);
    }

    #[test]
    fn weights_cover_the_disc() {
        let g = grid(true);
        let total: f64 = (0..=g.nr).map(|i| g.weight_r(i)).sum();
        assert!((total - 0.5 * g.rmax * g.rmax).abs() < 1e-12);
        let tz: f64 = (0..g.nodes_z()).map(|j| g.weight_z(j)).sum();
        assert!((tz - 0.5 * g.t_period).abs() < 1e-12);
    }

    #[test]
    fn laplacian_is_exact_on_quadratics() {
        // The axisymmetric Laplacian of r² is 4, including at the axis.
        let g = grid(false);
        let u: Vec<f64> = (0..g.len()).map(|k| g.r(k % g.nodes_r()).powi(2)).collect();
        let r = residual(&u, 0.0, &g, 1.0);
        for j in 0..g.nodes_z() {
            for i in 0..g.nr {
                let k = g.index(i, j);
                let expect = 4.0 + f(u[k]);
                assert!((r[k] - expect).abs() < 1e-9, "{i} {j} {} {}", r[k], expect);
            }
        }
    }

    #[test]
    fn container_round_trip() {
        let g = grid(true);
        let sol = CHSolution {
            tau: 0.6,
            epsilon: 0.1,
            grid: g,
            u: (0..g.len()).map(|k| (k as f64).sin()).collect(),
            ell: -0.47,
            mass: 0.1,
            residual_norm: 1e-10,
            curve_ref: "tau=0.6".into(),
            sigma_plus: -0.02,
            sigma_minus: -0.02,
            newton_history: vec![1.0, 1e-3],
        };
        let mut buf = Vec::new();
        sol.encode(&mut buf).unwrap();
        let back = CHSolution::decode_bytes(&buf).unwrap();
        assert_eq!(back.u, sol.u);
        assert_eq!(back.grid, sol.grid);
        assert!(CHSolution::decode_bytes(&buf[..buf.len() - 1]).is_err());
        assert!(CHSolution::decode_bytes(b"{}").is_err());
    }

    #[test]
    fn full_cell_mirrors() {
        let g = grid(true);
        let sol = CHSolution {
            tau: 0.6,
            epsilon: 0.1,
            grid: g,
            u: (0..g.len()).map(|k| k as f64).collect(),
            ell: 0.0,
            mass: 0.0,
            residual_norm: 0.0,
            curve_ref: String::new(),
            sigma_plus: 0.0,
            sigma_minus: 0.0,
            newton_history: vec![],
        };
        let full = sol.full_cell();
        assert_eq!(full.grid.nodes_z(), 2 * g.nz);
        for j in 1..g.nz {
            for i in 0..g.nodes_r() {
                assert_eq!(full.at(i, j), full.at(i, 2 * g.nz - j));
            }
        }
    }
}
