//! Bloch decomposition of the linearized operator `ε Δ + f'(u)/ε` around a
//! periodic solution.
//!
//! For angular mode `m` and quasi-momentum `ζ` the operator is conjugated by
//! `e^{iζ z/T}`, which on the periodic grid turns every axial coupling into a
//! phase `e^{±iζ/N_z}`. Multiplying by the diagonal area weights `B` gives a
//! Hermitian matrix `S = B L`; eigenvalues of the pair `(S, B)` are computed
//! through the symmetric form `B^{-1/2} S B^{-1/2}`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chsolver::{CHSolution, GridSpec};
use crate::delaunay::{signed_distance, GeneratingCurve};
use crate::linalg::sparse::{SparseLu, SparseMatrix, TripletBuilder};
use crate::linalg::subspace::{smallest_magnitude, SubspaceOptions};
use crate::linalg::Scalar;
use crate::profile::Profile1D;
use crate::{df, Error, Result};

pub const DEFAULT_M_MAX: usize = 4;
pub const DEFAULT_ZETA_MIN: f64 = 0.2;
pub const FIT_ZETAS: [f64; 4] = [0.0, 0.05, 0.1, 0.15];
/// Multiple of the measured translation eigenvalue used as the zero threshold.
pub const TOL_ZERO_FACTOR: f64 = 20.0;
/// Required eigenpair certificate `‖(A - λB)v‖ / ‖Bv‖`.
pub const CERTIFICATE_TOL: f64 = 1e-8;
const HERMITIAN_TOL: f64 = 1e-12;
const RETRY_SHIFT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlochOperatorSpec {
    pub m: usize,
    pub zeta: f64,
}

impl BlochOperatorSpec {
    pub fn new(m: usize, zeta: f64, m_max: usize) -> Result<Self> {
        if m > m_max {
            return Err(Error::Domain(format!("m = {m} exceeds m_max = {m_max}")));
        }
        if !zeta.is_finite() {
            return Err(Error::Domain("zeta must be finite".into()));
        }
        Ok(Self {
            m,
            zeta: zeta.rem_euclid(2.0 * PI),
        })
    }
}

/// Assembled Bloch operator on one periodic cell.
#[derive(Debug, Clone)]
pub struct BlochMatrix {
    pub spec: BlochOperatorSpec,
    pub grid: GridSpec,
    /// First radial node carried as an unknown (1 when `v(0) = 0` is imposed).
    pub i0: usize,
    /// Unknowns sit at the half nodes `r_{i+1/2}` (the `m = 1` sector).
    pub staggered: bool,
    /// `S = B L`.
    pub s: SparseMatrix<Complex64>,
    /// Diagonal of `B`.
    pub b: Vec<f64>,
    pub hermiticity_defect: f64,
}

impl BlochMatrix {
    pub fn dim(&self) -> usize {
        self.b.len()
    }

    fn nri(&self) -> usize {
        if self.staggered {
            self.grid.nr - 1
        } else {
            self.grid.nr - self.i0
        }
    }

    /// Degree of freedom of radial index `i` (node `r_i`, or half node
    /// `r_{i+1/2}` when staggered) and axial node `j`.
    pub fn dof(&self, i: usize, j: usize) -> usize {
        j * self.nri() + (i - self.i0)
    }

    /// Radial and axial index of degree of freedom `k`.
    pub fn node(&self, k: usize) -> (usize, usize) {
        (k % self.nri() + self.i0, k / self.nri())
    }

    /// Radius of radial index `i`.
    pub fn radius(&self, i: usize) -> f64 {
        if self.staggered {
            (i as f64 + 0.5) * self.grid.hr()
        } else {
            self.grid.r(i)
        }
    }

    /// `C = B^{-1/2} S B^{-1/2}`.
    pub fn symmetric_form(&self, shift: f64) -> Result<SparseMatrix<Complex64>> {
        let n = self.dim();
        let sq: Vec<f64> = self.b.iter().map(|b| b.sqrt()).collect();
        let mut t = TripletBuilder::with_capacity(n, n, 5 * n);
        for (r, c, v) in self.s.entries() {
            t.push(r, c, v / (sq[r] * sq[c]));
        }
        if shift != 0.0 {
            for k in 0..n {
                t.push(k, k, Complex64::new(-shift, 0.0));
            }
        }
        t.build()
    }
}

fn full(sol: &CHSolution) -> CHSolution {
    if sol.grid.half_cell {
        sol.full_cell()
    } else {
        sol.clone()
    }
}

/// Assemble `B L` for the conjugated operator at `(m, ζ)`.
///
/// `m = 0` and `m ≥ 2` use the nodal flux-form radial operator of the
/// solver, with the centrifugal term `-m²/r²` and `v(0) = 0` for `m ≥ 2`.
/// The `m = 1` sector is discretized on the half nodes `r_{i+1/2}` as the
/// difference quotient of the nodal `m = 0` operator,
/// `(Lφ)_{i+1/2} = ((L₀u)_{i+1} - (L₀u)_i)/hr` for `φ = D₊u`, with the
/// divided difference of `f` as potential. This is a consistent
/// second-order discretization of `∂_rr + ∂_r/r - 1/r²`, self-adjoint for the
/// weights `r_{i+1/2}`, and it maps the difference quotient of the solution
/// onto the difference quotient of its residual, so the discrete
/// `x`-translation mode is exact up to the Newton tolerance.
pub fn assemble(sol: &CHSolution, spec: BlochOperatorSpec) -> Result<BlochMatrix> {
    let sol = full(sol);
    let g = sol.grid;
    g.validate()?;
    let eps = sol.epsilon;
    let staggered = spec.m == 1;
    let i0 = if spec.m >= 2 { 1 } else { 0 };
    let nri = if staggered { g.nr - 1 } else { g.nr - i0 };
    let n = nri * g.nodes_z();
    let phase = Complex64::from_polar(1.0, spec.zeta / g.nz as f64);
    let m2 = (spec.m * spec.m) as f64;
    let dof = |i: usize, j: usize| j * nri + (i - i0);
    let h2 = g.hr() * g.hr();
    let mut t = TripletBuilder::with_capacity(n, n, 5 * n);
    let mut b = vec![0.0; n];
    for j in 0..g.nodes_z() {
        let nbz = g.axial_neighbours(j);
        for i in i0..i0 + nri {
            let row = dof(i, j);
            // Radial weight, couplings (down, up) and diagonal part of Δ_r.
            let (wr, down, up, mut diag, potential) = if staggered {
                let (km0, kp0) = g.radial_coefficients(i);
                let (km1, kp1) = g.radial_coefficients(i + 1);
                let (a, c) = (sol.at(i + 1, j), sol.at(i, j));
                let divided = 1.0 - (a * a + a * c + c * c);
                let down = if i > 0 { km0 } else { 0.0 };
                let up = if i + 2 < g.nr { kp1 } else { 0.0 };
                ((i as f64 + 0.5) * h2, down, up, -km1 - kp0, divided)
            } else {
                let (km, kp) = g.radial_coefficients(i);
                let mut d = -kp - km;
                if i > 0 {
                    let r = g.r(i);
                    d -= m2 / (r * r);
                }
                let down = if i > i0 { km } else { 0.0 };
                let up = if i + 1 < g.nr { kp } else { 0.0 };
                (g.weight_r(i), down, up, d, df(sol.at(i, j)))
            };
            let w = wr * g.weight_z(j);
            b[row] = w;
            if up != 0.0 {
                t.push(row, dof(i + 1, j), Complex64::new(w * eps * up, 0.0));
            }
            if down != 0.0 {
                t.push(row, dof(i - 1, j), Complex64::new(w * eps * down, 0.0));
            }
            for &(jj, c, _) in &nbz {
                let ph = if jj == (j + 1) % g.nz { phase } else { phase.conj() };
                t.push(row, dof(i, jj), ph * (w * eps * c));
                diag -= c;
            }
            t.push(row, row, Complex64::new(w * (eps * diag + potential / eps), 0.0));
        }
    }
    let s = t.build()?;
    let defect = hermiticity_defect(&s);
    if defect > HERMITIAN_TOL {
        return Err(Error::Consistency(format!(
            "assembled operator not Hermitian (defect {defect:e})"
        )));
    }
    Ok(BlochMatrix {
        spec,
        grid: g,
        i0,
        staggered,
        s,
        b,
        hermiticity_defect: defect,
    })
}

/// `max |S_ij - conj(S_ji)| / max |S_ij|`.
pub fn hermiticity_defect<T: Scalar>(s: &SparseMatrix<T>) -> f64 {
    let map: HashMap<(usize, usize), T> = s.entries().map(|(r, c, v)| ((r, c), v)).collect();
    let mut scale = 0.0f64;
    let mut defect = 0.0f64;
    for (&(r, c), &v) in &map {
        scale = scale.max(v.modulus_sqr().sqrt());
        let w = map.get(&(c, r)).copied().unwrap_or(T::real(0.0));
        defect = defect.max((v - w.conjugate()).modulus_sqr().sqrt());
    }
    if scale == 0.0 {
        0.0
    } else {
        defect / scale
    }
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub value: f64,
    /// Eigenvector of the pair `(S, B)`.
    pub vector: Vec<Complex64>,
    /// `‖(S - λB)v‖ / ‖Bv‖`.
    pub certificate: f64,
}

#[derive(Debug, Clone)]
pub struct NearZero {
    /// Sorted by `|λ|`.
    pub pairs: Vec<EigenPair>,
    pub converged: bool,
    /// Set when the unshifted factorization was singular and the tiny
    /// retry shift was used.
    pub shifted: bool,
    pub iterations: usize,
}

impl NearZero {
    pub fn values(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.value).collect()
    }

    pub fn certified(&self) -> bool {
        self.pairs.iter().all(|p| p.certificate <= CERTIFICATE_TOL)
    }
}

fn factor_checked(c: &SparseMatrix<Complex64>) -> Option<SparseLu<Complex64>> {
    let lu = c.factor().ok()?;
    let n = c.nrows();
    let probe: Vec<Complex64> = (0..n)
        .map(|k| Complex64::new(1.0 + (k % 7) as f64, (k % 3) as f64))
        .collect();
    let x = lu.solve(&probe);
    x.iter().all(|v| v.re.is_finite() && v.im.is_finite()).then_some(lu)
}

fn matvec_block(c: &SparseMatrix<Complex64>, q: &Mat<Complex64>) -> Mat<Complex64> {
    let n = q.nrows();
    let mut out = Mat::<Complex64>::zeros(n, q.ncols());
    for j in 0..q.ncols() {
        let col: Vec<Complex64> = (0..n).map(|i| q[(i, j)]).collect();
        let y = c.matvec(&col);
        for i in 0..n {
            out[(i, j)] = y[i];
        }
    }
    out
}

/// The `k` eigenvalues of smallest modulus, by shift-invert subspace
/// iteration at shift 0.
pub fn eigenvalues_near_zero(op: &BlochMatrix, k: usize) -> Result<NearZero> {
    if k == 0 || k > 10 {
        return Err(Error::Domain(format!("k = {k} must lie in 1..=10")));
    }
    let c = op.symmetric_form(0.0)?;
    let (lu, shifted) = match factor_checked(&c) {
        Some(lu) => (lu, false),
        None => {
            let cs = op.symmetric_form(RETRY_SHIFT)?;
            let lu = factor_checked(&cs)
                .ok_or_else(|| Error::Linear("Bloch operator singular even after retry shift".into()))?;
            (lu, true)
        }
    };
    let n = op.dim();
    let mut opts = SubspaceOptions::new(k);
    opts.tol = 1e-11 * (1.0 + 1.0 / op.grid.hz().powi(2));
    opts.max_iter = 500;
    let res = smallest_magnitude::<Complex64>(n, opts, |m| lu.solve_mat(m), |q| matvec_block(&c, q), None)?;
    let sq: Vec<f64> = op.b.iter().map(|b| b.sqrt()).collect();
    let pairs = res
        .pairs
        .into_iter()
        .map(|p| {
            let v: Vec<Complex64> = p.vector.iter().zip(&sq).map(|(y, s)| y / s).collect();
            let sv = op.s.matvec(&v);
            let mut num = 0.0;
            let mut den = 0.0;
            for kk in 0..n {
                let bv = v[kk] * op.b[kk];
                num += (sv[kk] - bv * p.value).norm_sqr();
                den += bv.norm_sqr();
            }
            EigenPair {
                value: p.value,
                vector: v,
                certificate: (num / den).sqrt(),
            }
        })
        .collect();
    Ok(NearZero {
        pairs,
        converged: res.converged,
        shifted,
        iterations: res.iterations,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandEntry {
    pub m: usize,
    pub zeta: f64,
    pub eigenvalues: Vec<f64>,
    pub certificates: Vec<f64>,
    pub converged: bool,
    pub shifted: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BandFit {
    pub m: usize,
    /// `λ(ζ)` of the tracked band at the fit abscissae.
    pub samples: Vec<(f64, f64)>,
    /// Coefficient `a` in `λ(0) - λ(ζ) ≈ a ζ²`.
    pub a: f64,
    /// `|g(ζ_max) - a ζ_max²| / (a ζ_max²)` at the largest fit abscissa.
    pub residual_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdict {
    pub tol_zero: f64,
    /// `(m, λ)` of the translation mode identified at `ζ = 0`.
    pub translation_eigenvalues: Vec<(usize, f64)>,
    pub zero_modes: Vec<(usize, f64)>,
    pub temperate_count: usize,
    pub min_gap_off_zero: f64,
    /// Zero modes at `ζ = 0` occur for exactly `m ∈ {0, 1}`, and nowhere in
    /// `[ζ_min, 2π - ζ_min]`.
    pub zero_modes_as_predicted: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlochSpectrum {
    pub entries: Vec<BandEntry>,
    pub band_fits: Vec<BandFit>,
    pub verdict: Verdict,
}

impl BlochSpectrum {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let k = self.entries.iter().map(|e| e.eigenvalues.len()).max().unwrap_or(0);
        write!(w, "m,zeta")?;
        for j in 1..=k {
            write!(w, ",lambda{j}")?;
        }
        writeln!(w)?;
        for e in &self.entries {
            write!(w, "{},{:.16e}", e.m, e.zeta)?;
            for v in &e.eigenvalues {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn verdict_json(&self) -> serde_json::Value {
        serde_json::json!({
            "zero_modes": self.verdict.zero_modes,
            "band_fits": self.band_fits,
            "temperate_count": self.verdict.temperate_count,
            "min_gap_off_zero": self.verdict.min_gap_off_zero,
            "tol_zero": self.verdict.tol_zero,
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SweepOptions {
    pub k: usize,
    pub m_max: usize,
    pub zeta_min: f64,
    /// `tol_zero` is this multiple of the largest translation `|λ|`.
    pub tol_zero_factor: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            k: 4,
            m_max: DEFAULT_M_MAX,
            zeta_min: DEFAULT_ZETA_MIN,
            tol_zero_factor: TOL_ZERO_FACTOR,
        }
    }
}

/// Translation field for `m ∈ {0, 1}` on the dofs of `op`: `∂_z u` for
/// `m = 0`, the radial difference quotient `D₊u` for `m = 1`.
pub fn translation_field(sol: &CHSolution, op: &BlochMatrix) -> Option<Vec<f64>> {
    let sol = full(sol);
    let g = sol.grid;
    match op.spec.m {
        0 => {
            let dz = sol.dz();
            Some(
                (0..op.dim())
                    .map(|k| {
                        let (i, j) = op.node(k);
                        dz[g.index(i, j)]
                    })
                    .collect(),
            )
        }
        1 => {
            let hr = g.hr();
            Some(
                (0..op.dim())
                    .map(|k| {
                        let (i, j) = op.node(k);
                        (sol.at(i + 1, j) - sol.at(i, j)) / hr
                    })
                    .collect(),
            )
        }
        _ => None,
    }
}

/// `|⟨a, B v⟩| / (‖a‖_B ‖v‖_B)`.
fn b_overlap(b: &[f64], a: &[Complex64], v: &[Complex64]) -> f64 {
    let mut ip = Complex64::new(0.0, 0.0);
    let (mut na, mut nv) = (0.0, 0.0);
    for k in 0..b.len() {
        ip += a[k].conj() * v[k] * b[k];
        na += a[k].norm_sqr() * b[k];
        nv += v[k].norm_sqr() * b[k];
    }
    ip.norm() / (na * nv).sqrt()
}

struct Solved {
    m: usize,
    zeta: f64,
    near: NearZero,
    translation: Option<Vec<f64>>,
    b: Vec<f64>,
}

fn solve_point(sol: &CHSolution, m: usize, zeta: f64, opts: &SweepOptions) -> Result<Solved> {
    let spec = BlochOperatorSpec::new(m, zeta, opts.m_max)?;
    let op = assemble(sol, spec)?;
    let near = eigenvalues_near_zero(&op, opts.k)?;
    let translation = if zeta == 0.0 { translation_field(sol, &op) } else { None };
    Ok(Solved {
        m,
        zeta: spec.zeta,
        near,
        translation,
        b: op.b.clone(),
    })
}

/// Index of the pair with the largest `B`-overlap with `target`.
fn best_match(s: &Solved, target: &[Complex64]) -> usize {
    (0..s.near.pairs.len())
        .max_by(|&a, &b| {
            b_overlap(&s.b, target, &s.near.pairs[a].vector).total_cmp(&b_overlap(
                &s.b,
                target,
                &s.near.pairs[b].vector,
            ))
        })
        .unwrap_or(0)
}

/// Eigenvalues on `m_list × zeta_grid`, band fits for `m ∈ {0, 1}` on
/// [`FIT_ZETAS`], and the resulting verdict.
pub fn band_sweep(sol: &CHSolution, m_list: &[usize], zeta_grid: &[f64], opts: SweepOptions) -> Result<BlochSpectrum> {
    // (m, ζ, listed in the band table)
    let mut points: Vec<(usize, f64, bool)> = Vec::new();
    for &m in m_list {
        for &z in zeta_grid {
            points.push((m, z.rem_euclid(2.0 * PI), true));
        }
        if m <= 1 {
            for &z in &FIT_ZETAS {
                if !points.iter().any(|p| p.0 == m && p.1 == z) {
                    points.push((m, z, false));
                }
            }
        }
    }
    let solved: Vec<Solved> = points
        .par_iter()
        .map(|&(m, z, _)| solve_point(sol, m, z, &opts))
        .collect::<Result<Vec<_>>>()?;

    let entries: Vec<BandEntry> = solved
        .iter()
        .zip(&points)
        .filter(|(_, p)| p.2)
        .map(|(s, _)| BandEntry {
            m: s.m,
            zeta: s.zeta,
            eigenvalues: s.near.values(),
            certificates: s.near.pairs.iter().map(|p| p.certificate).collect(),
            converged: s.near.converged,
            shifted: s.near.shifted,
        })
        .collect();

    // Track the translation band from ζ = 0 by eigenvector continuity.
    let mut band_fits = Vec::new();
    let mut translation_eigenvalues = Vec::new();
    for m in [0usize, 1] {
        if !m_list.contains(&m) {
            continue;
        }
        let series: Vec<&Solved> = FIT_ZETAS
            .iter()
            .filter_map(|&z| solved.iter().find(|s| s.m == m && s.zeta == z))
            .collect();
        let Some(first) = series.first() else { continue };
        let Some(tfield) = &first.translation else { continue };
        let target: Vec<Complex64> = tfield.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let idx = best_match(first, &target);
        let lambda0 = first.near.pairs[idx].value;
        translation_eigenvalues.push((m, lambda0));
        let mut samples = vec![(0.0, lambda0)];
        let mut prev = first.near.pairs[idx].vector.clone();
        for s in &series[1..] {
            let j = best_match(s, &prev);
            samples.push((s.zeta, s.near.pairs[j].value));
            prev = s.near.pairs[j].vector.clone();
        }
        let (mut num, mut den) = (0.0, 0.0);
        for &(z, l) in &samples[1..] {
            let gz = lambda0 - l;
            num += gz * z * z;
            den += z.powi(4);
        }
        let a = num / den;
        let (zl, ll) = *samples.last().expect("non-empty");
        let residual_fraction = ((lambda0 - ll) - a * zl * zl).abs() / (a * zl * zl).abs();
        band_fits.push(BandFit {
            m,
            samples,
            a,
            residual_fraction,
        });
    }

    let tol_zero = opts.tol_zero_factor * translation_eigenvalues.iter().fold(0.0f64, |a, &(_, l)| a.max(l.abs()));
    let mut zero_modes = Vec::new();
    let mut temperate_count = 0;
    let mut at_zero = Vec::new();
    let mut off_zero_clean = true;
    let mut min_gap = f64::INFINITY;
    for e in &entries {
        let nz = e.eigenvalues.iter().filter(|l| l.abs() < tol_zero).count();
        if nz > 0 {
            zero_modes.push((e.m, e.zeta));
        }
        if e.zeta == 0.0 && nz > 0 {
            at_zero.push(e.m);
            let quadratic = band_fits
                .iter()
                .any(|f| f.m == e.m && f.a > 0.0 && f.residual_fraction < 0.05);
            if quadratic {
                temperate_count += nz * if e.m == 0 { 2 } else { 4 };
            }
        }
        let inside = e.zeta >= opts.zeta_min && e.zeta <= 2.0 * PI - opts.zeta_min;
        if inside {
            if nz > 0 {
                off_zero_clean = false;
            }
            if let Some(l) = e.eigenvalues.first() {
                min_gap = min_gap.min(l.abs());
            }
        }
    }
    at_zero.sort_unstable();
    at_zero.dedup();
    let zero_modes_as_predicted = off_zero_clean && at_zero == vec![0, 1];
    Ok(BlochSpectrum {
        entries,
        band_fits,
        verdict: Verdict {
            tol_zero,
            translation_eigenvalues,
            zero_modes,
            temperate_count,
            min_gap_off_zero: min_gap,
            zero_modes_as_predicted,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalCoercivity {
    pub epsilon: f64,
    /// Minimum of `⟨-Lφ, φ⟩ / ⟨φ, φ⟩` subject to the fiber constraints.
    pub kappa_2d: f64,
    /// `ε · kappa_2d`.
    pub scaled: f64,
    /// Unconstrained eigenvalue of `-L` closest to zero.
    pub unconstrained_nearest_zero: f64,
    pub converged: bool,
}

/// Constrained Rayleigh minimum of `-L̂(0, 0)` in the `m = 0` sector, with
/// one constraint `Σ_r φ V w_r = 0` per axial node, `V = U'(t/ε)`.
///
/// `-L ≥ -1/ε` since `f' ≤ 1`, so the constrained problem is shifted to
/// `-L + 2/ε`, which is positive definite, and solved by shift-invert
/// subspace iteration on the bordered saddle system.
pub fn fiberwise_orthogonal_coercivity(
    sol: &CHSolution,
    profile: &Profile1D,
    curve: &GeneratingCurve,
) -> Result<OrthogonalCoercivity> {
    let fsol = full(sol);
    let op = assemble(&fsol, BlochOperatorSpec { m: 0, zeta: 0.0 })?;
    let g = op.grid;
    let eps = fsol.epsilon;
    let n = op.dim();
    let nzc = g.nodes_z();
    let sq: Vec<f64> = op.b.iter().map(|b| b.sqrt()).collect();

    // K = -B^{-1/2} S B^{-1/2}, real.
    let shift = -2.0 / eps;
    let mut d = vec![vec![0.0; g.nr]; nzc];
    for j in 0..nzc {
        for i in 0..g.nr {
            let q = signed_distance(curve, g.r(i), g.z(j));
            let v = profile.derivative(q.t_signed / eps);
            // Constraint Σ φ V w_r; with φ = B^{-1/2} y this is Σ y V w_r / √(w_r w_z).
            d[j][i] = v * g.weight_r(i) / sq[op.dof(i, j)];
        }
        let norm = d[j].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for x in &mut d[j] {
                *x /= norm;
            }
        }
    }
    let mut kt = TripletBuilder::<f64>::with_capacity(n + nzc, n + nzc, 7 * n);
    let mut kmat = TripletBuilder::<f64>::with_capacity(n, n, 5 * n);
    for (r, c, v) in op.s.entries() {
        let x = -v.re / (sq[r] * sq[c]);
        kmat.push(r, c, x);
        kt.push(r, c, if r == c { x - shift } else { x });
    }
    for j in 0..nzc {
        for i in 0..g.nr {
            let k = op.dof(i, j);
            if d[j][i] != 0.0 {
                kt.push(k, n + j, d[j][i]);
                kt.push(n + j, k, d[j][i]);
            }
        }
    }
    let saddle = kt.build()?.factor()?;
    let kmat = kmat.build()?;
    let project = |y: &mut [f64]| {
        for j in 0..nzc {
            let mut ip = 0.0;
            for i in 0..g.nr {
                ip += d[j][i] * y[op.dof(i, j)];
            }
            for i in 0..g.nr {
                y[op.dof(i, j)] -= ip * d[j][i];
            }
        }
    };
    let mut opts = SubspaceOptions::new(1);
    opts.block = 12;
    opts.max_iter = 1000;
    opts.tol = 1e-8 / eps;
    let res = smallest_magnitude::<f64>(
        n,
        opts,
        |m| {
            let mut ext = Mat::<f64>::zeros(n + nzc, m.ncols());
            for c in 0..m.ncols() {
                for r in 0..n {
                    ext[(r, c)] = m[(r, c)];
                }
            }
            saddle.solve_mat(&mut ext);
            for c in 0..m.ncols() {
                for r in 0..n {
                    m[(r, c)] = ext[(r, c)];
                }
            }
        },
        |q| {
            let mut out = Mat::<f64>::zeros(n, q.ncols());
            for c in 0..q.ncols() {
                let mut col: Vec<f64> = (0..n).map(|r| q[(r, c)]).collect();
                project(&mut col);
                let mut y = kmat.matvec(&col);
                for (yy, cc) in y.iter_mut().zip(&col) {
                    *yy -= shift * cc;
                }
                project(&mut y);
                for r in 0..n {
                    out[(r, c)] = y[r];
                }
            }
            out
        },
        Some(&project),
    )?;
    let kappa = res.pairs[0].value + shift;

    let near = eigenvalues_near_zero(&op, 1)?;
    Ok(OrthogonalCoercivity {
        epsilon: eps,
        kappa_2d: kappa,
        scaled: kappa * eps,
        unconstrained_nearest_zero: -near.pairs[0].value,
        converged: res.converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyIdentity {
    /// `(ε/2) h''(z_j)` with `h = Σ_r φ² w_r`.
    pub lhs: Vec<f64>,
    /// `Σ_r [ε|∇_xφ|² - ε⁻¹f'(u)φ² + ε|∂_zφ|² + φ Lφ] w_r`.
    pub rhs: Vec<f64>,
    /// Same without the `φ Lφ` term (the form valid for kernel elements).
    pub rhs_kernel_form: Vec<f64>,
    /// `max_j |lhs - rhs| / max_j (sum of the magnitudes of the terms)`.
    pub relative_defect: f64,
}

/// Discrete check of the fiberwise energy identity for a test field given
/// on the full periodic cell (same layout as the solution, zero on the
/// Dirichlet ring).
pub fn energy_identity_probe(sol: &CHSolution, phi: &[f64]) -> Result<EnergyIdentity> {
    let fsol = full(sol);
    let g = fsol.grid;
    if phi.len() != g.len() {
        return Err(Error::Consistency(format!(
            "test field has {} values, grid has {}",
            phi.len(),
            g.len()
        )));
    }
    let eps = fsol.epsilon;
    let (hr, hz) = (g.hr(), g.hz());
    let nz = g.nodes_z();
    let p = |i: usize, j: usize| phi[g.index(i, j)];
    let h: Vec<f64> = (0..nz)
        .map(|j| (0..g.nr).map(|i| p(i, j).powi(2) * g.weight_r(i)).sum())
        .collect();
    let mut lhs = vec![0.0; nz];
    let mut rhs = vec![0.0; nz];
    let mut rhs_kernel = vec![0.0; nz];
    let mut scale = 0.0f64;
    let mut defect = 0.0f64;
    for j in 0..nz {
        let (jm, jp) = ((j + nz - 1) % nz, (j + 1) % nz);
        lhs[j] = 0.5 * eps * (h[jp] - 2.0 * h[j] + h[jm]) / (hz * hz);
        let mut grad = 0.0;
        let mut pot = 0.0;
        let mut axial = 0.0;
        let mut lphi = 0.0;
        for i in 0..g.nr {
            let w = g.weight_r(i);
            let dr = if i == 0 {
                0.0
            } else {
                (p(i + 1, j) - p(i - 1, j)) / (2.0 * hr)
            };
            let dzv = (p(i, jp) - p(i, jm)) / (2.0 * hz);
            let (km, kp) = g.radial_coefficients(i);
            let mut lap = kp * (p(i + 1, j) - p(i, j)) + (p(i, jp) - 2.0 * p(i, j) + p(i, jm)) / (hz * hz);
            if i > 0 {
                lap -= km * (p(i, j) - p(i - 1, j));
            }
            let fp = df(fsol.at(i, j));
            grad += eps * dr * dr * w;
            pot -= fp * p(i, j).powi(2) / eps * w;
            axial += eps * dzv * dzv * w;
            lphi += p(i, j) * (eps * lap + fp * p(i, j) / eps) * w;
        }
        rhs_kernel[j] = grad + pot + axial;
        rhs[j] = rhs_kernel[j] + lphi;
        scale = scale.max(lhs[j].abs() + grad.abs() + pot.abs() + axial.abs() + lphi.abs());
        defect = defect.max((lhs[j] - rhs[j]).abs());
    }
    Ok(EnergyIdentity {
        lhs,
        rhs,
        rhs_kernel_form: rhs_kernel,
        relative_defect: if scale == 0.0 { 0.0 } else { defect / scale },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_solution(eps: f64) -> CHSolution {
        let g = GridSpec {
            nr: 32,
            nz: 40,
            rmax: 2.0,
            t_period: 4.0,
            half_cell: false,
        };
        CHSolution {
            tau: 0.5,
            epsilon: eps,
            grid: g,
            u: vec![-1.0; g.len()],
            ell: 0.0,
            mass: -1.0,
            residual_norm: 0.0,
            curve_ref: String::new(),
            sigma_plus: 0.0,
            sigma_minus: 0.0,
            newton_history: vec![],
        }
    }

    #[test]
    fn zeta_is_reduced() {
        let s = BlochOperatorSpec::new(1, 2.0 * PI + 0.5, 4).unwrap();
        assert!((s.zeta - 0.5).abs() < 1e-15);
        assert!(BlochOperatorSpec::new(5, 0.0, 4).is_err());
    }

    #[test]
    fn hermitian_for_several_modes() {
        let sol = constant_solution(0.1);
        for (m, z) in [(0, 0.0), (1, 1.3), (3, PI), (2, 5.9)] {
            let op = assemble(&sol, BlochOperatorSpec::new(m, z, 4).unwrap()).unwrap();
            assert!(op.hermiticity_defect <= 1e-12);
        }
    }

    #[test]
    fn zeta_pi_changes_only_axial_couplings() {
        let sol = constant_solution(0.1);
        let a = assemble(&sol, BlochOperatorSpec::new(0, 0.0, 4).unwrap()).unwrap();
        let b = assemble(&sol, BlochOperatorSpec::new(0, PI, 4).unwrap()).unwrap();
        let ma: HashMap<(usize, usize), Complex64> = a.s.entries().map(|(r, c, v)| ((r, c), v)).collect();
        let nri = a.grid.nr;
        let ph = Complex64::from_polar(1.0, PI / a.grid.nz as f64);
        for (r, c, v) in b.s.entries() {
            let va = ma[&(r, c)];
            let axial = r / nri != c / nri;
            if axial {
                assert!((v - va * ph).norm() < 1e-12 * va.norm() || (v - va * ph.conj()).norm() < 1e-12 * va.norm());
            } else {
                assert!((v - va).norm() <= 1e-14 * va.norm().max(1.0));
            }
        }
    }

    #[test]
    fn constant_state_spectrum_is_negative() {
        // Around u ≡ -1 the operator is εΔ - 2/ε: all eigenvalues ≤ -2/ε.
        let eps = 0.5;
        let sol = constant_solution(eps);
        let op = assemble(&sol, BlochOperatorSpec::new(0, 0.7, 4).unwrap()).unwrap();
        let nz = eigenvalues_near_zero(&op, 2).unwrap();
        assert!(nz.converged);
        assert!(nz.certified());
        assert!(nz.pairs[0].value <= -2.0 / eps + 1e-9);
        // Lowest axial harmonic at ζ = 0.7 on a cell of length 4, plus the
        // lowest radial Dirichlet mode, bounds the magnitude from above.
        assert!(nz.pairs[0].value > -2.0 / eps - eps * 20.0);
    }

    #[test]
    fn zero_field_energy_identity() {
        let sol = constant_solution(0.1);
        let r = energy_identity_probe(&sol, &vec![0.0; sol.grid.len()]).unwrap();
        assert!(r.lhs.iter().all(|&x| x == 0.0));
        assert!(r.rhs.iter().all(|&x| x == 0.0));
        assert_eq!(r.relative_defect, 0.0);
    }
}
