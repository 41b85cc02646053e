//! Stage orchestration: geometry → Hill/Jacobi → profile → 2D solve →
//! diagnostics → Bloch, with every stage memoized in the content-hash cache.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde_json::json;
use unduloid::bloch::{band_sweep, fiberwise_orthogonal_coercivity, SweepOptions};
use unduloid::chsolver::{
    decay_check, field_correspondence, fit_exponent, solve, validate_ansatz, CHSolution, CorrespondenceField, GridSpec,
};
use unduloid::delaunay::{immerse, rho_bulge, rho_neck, solve_generating_curve, DelaunayParameter, GeneratingCurve};
use unduloid::jacobi::{
    apply_jacobi, geometric_fields, interior_sup_norm, temperate_kernel_count, SurfaceGrid, DEFAULT_DTAU,
};
use unduloid::profile::{
    coercivity_constrained, heteroclinic_theta, linearized_spectrum_1d, multiplier_leading, solvability_identity,
    solve_profile, Profile1D,
};

use crate::cache::{write_atomic, Cache, StageKey};
use crate::config::RunConfig;
use crate::report::*;

/// Acceptance thresholds applied by the report.
pub mod thresholds {
    pub const MEAN_CURVATURE: f64 = 1e-8;
    pub const ENERGY_DRIFT: f64 = 1e-10;
    pub const RADII: f64 = 1e-8;
    pub const PARABOLIC: f64 = 1e-8;
    pub const HYPERBOLIC_MARGIN: f64 = 0.01;
    pub const TEMPERATE_COUNT: f64 = 6.0;
    pub const JACOBI_ORDER: f64 = 1.8;
    pub const ELL_ORDER: f64 = 0.9;
    pub const IDENTITY_FACTOR: f64 = 10.0;
    pub const SPECTRUM_ZERO: f64 = 1e-4;
    pub const SPECTRUM_SECOND: f64 = 1.5;
    pub const SPECTRUM_SECOND_TOL: f64 = 1e-3;
    pub const COERCIVITY_1D: f64 = 1.0;
    pub const COERCIVITY_1D_SPREAD: f64 = 0.1;
    pub const ANSATZ_EXPONENT: f64 = 1.7;
    pub const DECAY_RANGE: (f64, f64) = (1.2, 1.45);
    pub const TRANSLATION_ERROR: f64 = 0.15;
    pub const TRANSLATION_ERROR_EPSILON: f64 = 0.05;
    pub const HALVING_RATIO: (f64, f64) = (0.35, 0.7);
    pub const BAND_RESIDUAL: f64 = 0.05;
    pub const COERCIVITY_2D: f64 = 0.5;
    pub const COERCIVITY_2D_SPREAD: f64 = 0.2;
}

use thresholds as th;

/// Sections computed by a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Scope {
    pub geometry: bool,
    pub hill: bool,
    pub jacobi: bool,
    pub profile: bool,
    pub solve: bool,
    pub bloch: bool,
}

impl Scope {
    pub const ALL: Scope = Scope {
        geometry: true,
        hill: true,
        jacobi: true,
        profile: true,
        solve: true,
        bloch: true,
    };
    pub const NONE: Scope = Scope {
        geometry: false,
        hill: false,
        jacobi: false,
        profile: false,
        solve: false,
        bloch: false,
    };
}

/// Samples for the stored generating curve and profile overlays.
const CURVE_SAMPLES: usize = 201;
const PROFILE_SAMPLES: usize = 321;
const PROFILE_PLOT_HALF_WIDTH: f64 = 8.0;

/// `H` in the canonical scale.
const MEAN_CURVATURE: f64 = 1.0;

pub struct Pipeline {
    pub config: RunConfig,
    pub cache: Cache,
    pub out_dir: PathBuf,
    curves: Mutex<HashMap<u64, Arc<GeneratingCurve>>>,
    profiles: Mutex<HashMap<u64, Arc<Profile1D>>>,
}

fn tag(x: f64) -> String {
    format!("{x}")
}

impl Pipeline {
    pub fn new(config: RunConfig, cache: Cache, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            config,
            cache,
            out_dir: out_dir.into(),
            curves: Mutex::new(HashMap::new()),
            profiles: Mutex::new(HashMap::new()),
        }
    }

    fn geometry_key(&self, tau: f64) -> StageKey {
        StageKey::new("geometry", &json!({"tau": tau, "ode": self.config.tolerances.ode}), &[])
    }

    fn profile_key(&self, eps: f64) -> StageKey {
        let g = &self.config.grid;
        StageKey::new(
            "profile",
            &json!({
                "epsilon": eps,
                "H": MEAN_CURVATURE,
                "L": g.profile_half_length,
                "h": g.profile_spacing,
                "tol": self.config.tolerances.profile,
                "coercivity_L": g.coercivity_half_length,
                "radii": g.coercivity_radii,
            }),
            &[],
        )
    }

    fn solve_key(&self, tau: f64, eps: f64) -> StageKey {
        StageKey::new(
            "solve",
            &json!({"cells_per_epsilon": self.config.grid.cells_per_epsilon, "newton": self.config.tolerances.newton}),
            &[&self.geometry_key(tau), &self.profile_key(eps)],
        )
    }

    /// Generating curve, memoized in memory.
    pub fn curve(&self, tau: f64) -> Result<Arc<GeneratingCurve>> {
        if let Some(c) = self.curves.lock().expect("curve memo").get(&tau.to_bits()) {
            return Ok(c.clone());
        }
        let c = Arc::new(solve_generating_curve(
            DelaunayParameter::new(tau)?,
            self.config.tolerances.ode,
        )?);
        self.curves.lock().expect("curve memo").insert(tau.to_bits(), c.clone());
        Ok(c)
    }

    /// 1D profile on the configured interval, memoized in memory.
    pub fn profile(&self, eps: f64) -> Result<Arc<Profile1D>> {
        if let Some(p) = self.profiles.lock().expect("profile memo").get(&eps.to_bits()) {
            return Ok(p.clone());
        }
        let g = &self.config.grid;
        let p = Arc::new(
            unduloid::profile::solve_profile_on_grid(
                eps,
                MEAN_CURVATURE,
                g.profile_half_length,
                self.config.tolerances.profile,
                intervals(g.profile_half_length, g.profile_spacing),
            )
            .with_context(|| format!("profile at epsilon = {eps}"))?,
        );
        self.profiles
            .lock()
            .expect("profile memo")
            .insert(eps.to_bits(), p.clone());
        Ok(p)
    }

    pub fn geometry_block(&self, tau: f64) -> Result<GeometryBlock> {
        let key = self.geometry_key(tau);
        if let Some(b) = self.cache.get_json("geometry", &key) {
            return Ok(b);
        }
        let curve = self.curve(tau)?;
        let summary = curve.summary();
        let mut h_err = 0.0f64;
        for i in 0..100 {
            let s = curve.s_period * i as f64 / 100.0;
            for k in 0..16 {
                let theta = 2.0 * std::f64::consts::PI * k as f64 / 16.0;
                h_err = h_err.max((immerse(&curve, s, theta).h - 1.0).abs());
            }
        }
        let samples = (0..CURVE_SAMPLES)
            .map(|i| {
                let p = curve.point(curve.s_period * i as f64 / (CURVE_SAMPLES - 1) as f64);
                [p.r, p.kappa]
            })
            .collect();
        let neck = curve.point(0.0).r;
        let bulge = curve.point(0.5 * curve.s_period).r;
        let block = GeometryBlock {
            tau,
            checks: vec![
                Check::at_most("max |H - 1| on 100x16 samples", h_err, th::MEAN_CURVATURE),
                Check::at_most("energy drift", summary.energy_drift, th::ENERGY_DRIFT),
                Check::at_most(
                    "|rho(0) - (1 - sqrt(1 - tau^2))|",
                    (neck - rho_neck(tau)).abs(),
                    th::RADII,
                ),
                Check::at_most(
                    "|rho(T/2) - (1 + sqrt(1 - tau^2))|",
                    (bulge - rho_bulge(tau)).abs(),
                    th::RADII,
                ),
            ],
            summary,
            max_mean_curvature_error: h_err,
            curve: samples,
        };
        self.cache.put_json("geometry", &key, &block)?;
        Ok(block)
    }

    pub fn hill_block(&self, tau: f64) -> Result<HillBlock> {
        let key = StageKey::new(
            "hill",
            &json!({"modes": self.config.grid.hill_modes, "parabolic": self.config.tolerances.parabolic}),
            &[&self.geometry_key(tau)],
        );
        if let Some(b) = self.cache.get_json("hill", &key) {
            return Ok(b);
        }
        let curve = self.curve(tau)?;
        let (count, table, _) =
            temperate_kernel_count(&curve, self.config.grid.hill_modes, self.config.tolerances.parabolic)?;
        let mut checks = Vec::new();
        for row in &table {
            let n = row.hill.mode_n;
            let d = row.hill.discriminant;
            checks.push(if n <= 1 {
                Check::at_most(format!("|Delta_{n} - 2|"), (d - 2.0).abs(), th::PARABOLIC)
            } else {
                Check::at_least(format!("Delta_{n} - 2"), d - 2.0, th::HYPERBOLIC_MARGIN)
            });
        }
        checks.push(Check::within(
            "temperate kernel count",
            count as f64,
            th::TEMPERATE_COUNT,
            th::TEMPERATE_COUNT,
        ));
        let block = HillBlock {
            tau,
            table,
            temperate_count: count,
            checks,
        };
        self.cache.put_json("hill", &key, &block)?;
        Ok(block)
    }

    pub fn jacobi_block(&self, tau: f64) -> Result<JacobiBlock> {
        let g = &self.config.grid;
        let key = StageKey::new(
            "jacobi",
            &json!({"periods": g.jacobi_periods, "grids": g.jacobi_grids, "dtau": DEFAULT_DTAU}),
            &[&self.geometry_key(tau)],
        );
        if let Some(b) = self.cache.get_json("jacobi", &key) {
            return Ok(b);
        }
        let curve = self.curve(tau)?;
        let mut kinds = Vec::new();
        let mut residuals: Vec<Vec<f64>> = Vec::new();
        for &[pts, ntheta] in &g.jacobi_grids {
            let grid = SurfaceGrid::centered(&curve, g.jacobi_periods, pts, ntheta);
            let fields = geometric_fields(&curve, &grid, DEFAULT_DTAU)?;
            if residuals.is_empty() {
                kinds = fields.iter().map(|f| f.kind).collect();
                residuals = vec![Vec::new(); fields.len()];
            }
            for (k, f) in fields.iter().enumerate() {
                residuals[k].push(interior_sup_norm(&grid, &apply_jacobi(&curve, &grid, &f.values)?));
            }
        }
        let spacing: Vec<f64> = g.jacobi_grids.iter().map(|p| 1.0 / p[0] as f64).collect();
        let mut fields = Vec::new();
        let mut checks = Vec::new();
        for (kind, res) in kinds.into_iter().zip(residuals) {
            let order = fit_exponent(&spacing, &res);
            checks.push(Check::at_least(
                format!("{kind:?} residual order"),
                order,
                th::JACOBI_ORDER,
            ));
            fields.push(JacobiFieldResiduals {
                kind,
                residuals: res,
                order,
            });
        }
        let block = JacobiBlock {
            tau,
            points_per_period: g.jacobi_grids.iter().map(|p| p[0]).collect(),
            fields,
            checks,
        };
        self.cache.put_json("jacobi", &key, &block)?;
        Ok(block)
    }

    pub fn reference_spectrum(&self) -> Result<ReferenceSpectrum> {
        let g = &self.config.grid;
        let key = StageKey::new(
            "reference-spectrum",
            &json!({"L": g.profile_half_length, "h": g.profile_spacing, "tol": self.config.tolerances.profile}),
            &[],
        );
        if let Some(b) = self.cache.get_json("reference-spectrum", &key) {
            return Ok(b);
        }
        let p = self.profile(0.0)?;
        let ev = linearized_spectrum_1d(&p, 2);
        let block = ReferenceSpectrum {
            checks: vec![
                Check::at_most("|lambda_0|", ev[0].abs(), th::SPECTRUM_ZERO),
                Check::at_most(
                    "|lambda_1 - 3/2|",
                    (ev[1] - th::SPECTRUM_SECOND).abs(),
                    th::SPECTRUM_SECOND_TOL,
                ),
            ],
            eigenvalues: ev,
        };
        self.cache.put_json("reference-spectrum", &key, &block)?;
        Ok(block)
    }

    pub fn profile_block(&self, eps: f64) -> Result<ProfileBlock> {
        let key = self.profile_key(eps);
        if let Some(b) = self.cache.get_json("profile", &key) {
            return Ok(b);
        }
        let g = &self.config.grid;
        let tol = self.config.tolerances.profile;
        let p = self.profile(eps)?;
        let identity = solvability_identity(&p);
        let wide = solve_profile(eps, MEAN_CURVATURE, g.coercivity_half_length, tol)
            .with_context(|| format!("coercivity profile at epsilon = {eps}"))?;
        let coercivity = g
            .coercivity_radii
            .iter()
            .map(|&r| coercivity_constrained(&wide, r))
            .collect::<unduloid::Result<Vec<_>>>()?;
        let mut checks = vec![Check::at_most(
            "solvability identity defect",
            identity.discrete_defect,
            th::IDENTITY_FACTOR * tol,
        )];
        if !coercivity.is_empty() {
            let kmin = coercivity.iter().map(|c| c.kappa).fold(f64::INFINITY, f64::min);
            let kmax = coercivity.iter().map(|c| c.kappa).fold(f64::NEG_INFINITY, f64::max);
            checks.push(Check::at_least(
                "constrained coercivity min kappa",
                kmin,
                th::COERCIVITY_1D,
            ));
            checks.push(Check::at_most(
                "constrained coercivity spread across R",
                (kmax - kmin) / kmin,
                th::COERCIVITY_1D_SPREAD,
            ));
        }
        let samples = (0..PROFILE_SAMPLES)
            .map(|i| {
                let t =
                    -PROFILE_PLOT_HALF_WIDTH + 2.0 * PROFILE_PLOT_HALF_WIDTH * i as f64 / (PROFILE_SAMPLES - 1) as f64;
                [t, p.value(t), heteroclinic_theta(t)]
            })
            .collect();
        let block = ProfileBlock {
            epsilon: eps,
            summary: p.summary(),
            ell_leading: multiplier_leading(MEAN_CURVATURE),
            newton_iterations: p.newton_iterations,
            identity,
            coercivity,
            samples,
            checks,
        };
        self.cache.put_json("profile", &key, &block)?;
        Ok(block)
    }

    /// Converged 2D solution from the cache or a fresh solve.
    pub fn solution(&self, tau: f64, eps: f64) -> Result<CHSolution> {
        let key = self.solve_key(tau, eps);
        if let Some(bytes) = self.cache.get_bytes("solution", &key, "uds") {
            if let Ok(sol) = CHSolution::decode_bytes(&bytes) {
                return Ok(sol);
            }
        }
        let curve = self.curve(tau)?;
        let profile = self.profile(eps)?;
        let grid = GridSpec::resolved(&curve, eps, self.config.grid.cells_per_epsilon);
        let sol = solve(&curve, &profile, &grid, self.config.tolerances.newton)
            .with_context(|| format!("2D solve at tau = {tau}, epsilon = {eps}"))?;
        let mut bytes = Vec::new();
        sol.encode(&mut bytes)?;
        self.cache.put_bytes("solution", &key, "uds", &bytes)?;
        Ok(sol)
    }

    fn solve_diagnostics(&self, tau: f64, eps: f64) -> Result<SolveDiagnostics> {
        let key = self.solve_key(tau, eps);
        let name = format!("solution_tau{}_eps{}.uds", tag(tau), tag(eps));
        let cached: Option<SolveDiagnostics> = self.cache.get_json("solve", &key);
        let sol = self.solution(tau, eps)?;
        let mut bytes = Vec::new();
        sol.encode(&mut bytes)?;
        write_atomic(&self.out_dir.join(&name), &bytes)?;
        if let Some(d) = cached {
            return Ok(d);
        }
        let d = SolveDiagnostics {
            grid: sol.grid,
            ell: sol.ell,
            mass: sol.mass,
            residual_norm: sol.residual_norm,
            newton_history: sol.newton_history.clone(),
            sigma_plus: sol.sigma_plus,
            sigma_minus: sol.sigma_minus,
            solution_file: name,
        };
        self.cache.put_json("solve", &key, &d)?;
        Ok(d)
    }

    fn field_diagnostics(&self, tau: f64, eps: f64) -> Result<FieldDiagnostics> {
        let key = StageKey::new("diagnostics", &json!({}), &[&self.solve_key(tau, eps)]);
        if let Some(d) = self.cache.get_json("diagnostics", &key) {
            return Ok(d);
        }
        let sol = self.solution(tau, eps)?;
        let curve = self.curve(tau)?;
        let profile = self.profile(eps)?;
        let d = FieldDiagnostics {
            ansatz: validate_ansatz(&sol, &profile, &curve)?,
            decay: decay_check(&sol, &curve)?,
            translation: field_correspondence(&sol, None, &curve, &profile, CorrespondenceField::T3)?,
        };
        self.cache.put_json("diagnostics", &key, &d)?;
        Ok(d)
    }

    fn bloch_block(&self, tau: f64, eps: f64) -> Result<BlochBlock> {
        let b = &self.config.bloch;
        let key = StageKey::new(
            "bloch",
            &json!({
                "m_max": b.m_max,
                "zeta_grid": b.zeta_grid,
                "zeta_min": b.zeta_min,
                "k": b.eigenvalues,
                "tol_zero_factor": self.config.tolerances.tol_zero_factor,
                "coercivity": b.coercivity,
            }),
            &[&self.solve_key(tau, eps)],
        );
        let bands_file = format!("bands_tau{}_eps{}.csv", tag(tau), tag(eps));
        let block = match self.cache.get_json::<BlochBlock>("bloch", &key) {
            Some(block) => block,
            None => {
                let sol = self.solution(tau, eps)?;
                let m_list: Vec<usize> = (0..=b.m_max).collect();
                let opts = SweepOptions {
                    k: b.eigenvalues,
                    m_max: b.m_max,
                    zeta_min: b.zeta_min,
                    tol_zero_factor: self.config.tolerances.tol_zero_factor,
                };
                let spectrum = band_sweep(&sol, &m_list, &b.zeta_grid, opts)?;
                let coercivity = if b.coercivity {
                    let curve = self.curve(tau)?;
                    let profile = self.profile(eps)?;
                    Some(fiberwise_orthogonal_coercivity(&sol, &profile, &curve)?)
                } else {
                    None
                };
                let block = BlochBlock {
                    spectrum,
                    coercivity,
                    bands_file: bands_file.clone(),
                };
                self.cache.put_json("bloch", &key, &block)?;
                block
            }
        };
        let mut csv = Vec::new();
        block.spectrum.write_csv(&mut csv)?;
        write_atomic(&self.out_dir.join(&bands_file), &csv)?;
        Ok(block)
    }

    fn solve_block(&self, tau: f64, eps: f64, scope: Scope) -> SolveBlock {
        let mut block = SolveBlock {
            tau,
            epsilon: eps,
            error: None,
            solve: None,
            diagnostics: None,
            bloch: None,
            checks: Vec::new(),
        };
        let run = |block: &mut SolveBlock| -> Result<()> {
            if scope.solve {
                let sd = self.solve_diagnostics(tau, eps)?;
                block.checks.push(Check::at_most(
                    "Newton residual",
                    sd.residual_norm,
                    self.config.tolerances.newton,
                ));
                block.solve = Some(sd);
                let d = self.field_diagnostics(tau, eps)?;
                block.checks.push(Check::within(
                    "far-field decay rate (outer)",
                    d.decay.outer.rate,
                    th::DECAY_RANGE.0,
                    th::DECAY_RANGE.1,
                ));
                block.checks.push(Check::within(
                    "far-field decay rate (inner)",
                    d.decay.inner.rate,
                    th::DECAY_RANGE.0,
                    th::DECAY_RANGE.1,
                ));
                if eps <= th::TRANSLATION_ERROR_EPSILON {
                    block.checks.push(Check::at_most(
                        "axial translation correspondence error",
                        d.translation.relative_error,
                        th::TRANSLATION_ERROR,
                    ));
                }
                block.diagnostics = Some(d);
            }
            if scope.bloch {
                let bl = self.bloch_block(tau, eps)?;
                let v = &bl.spectrum.verdict;
                block.checks.push(Check::holds(
                    "zero modes at zeta = 0 exactly for m in {0, 1}",
                    v.zero_modes_as_predicted,
                ));
                block
                    .checks
                    .push(Check::positive("min |lambda| off zeta = 0", v.min_gap_off_zero));
                for f in &bl.spectrum.band_fits {
                    block
                        .checks
                        .push(Check::positive(format!("band m={} curvature a", f.m), f.a));
                    block.checks.push(Check::at_most(
                        format!("band m={} fit residual", f.m),
                        f.residual_fraction,
                        th::BAND_RESIDUAL,
                    ));
                }
                block.checks.push(Check::within(
                    "Bloch temperate count",
                    v.temperate_count as f64,
                    th::TEMPERATE_COUNT,
                    th::TEMPERATE_COUNT,
                ));
                let cert = bl
                    .spectrum
                    .entries
                    .iter()
                    .filter_map(|e| e.certificates.first())
                    .fold(0.0f64, |a, &c| a.max(c));
                block.checks.push(Check::at_most(
                    "eigenpair certificate (nearest zero)",
                    cert,
                    self.config.tolerances.eig,
                ));
                if let Some(c) = &bl.coercivity {
                    block.checks.push(Check::at_least(
                        "orthogonal coercivity times epsilon",
                        c.scaled,
                        th::COERCIVITY_2D,
                    ));
                }
                block.bloch = Some(bl);
            }
            Ok(())
        };
        if let Err(e) = run(&mut block) {
            block.error = Some(format!("{e:#}"));
        }
        block
    }

    /// Run the stages in `scope` over the configured parameters.
    pub fn run(&self, scope: Scope) -> Result<VerificationReport> {
        std::fs::create_dir_all(&self.out_dir)
            .with_context(|| format!("creating output directory {}", self.out_dir.display()))?;
        let cfg = &self.config;
        let mut report = VerificationReport::empty(cfg.clone());
        let taus = &cfg.tau_list;
        let epss = &cfg.epsilon_list;
        if scope.geometry {
            report.geometry = taus
                .par_iter()
                .map(|&t| self.geometry_block(t))
                .collect::<Result<_>>()?;
        }
        if scope.hill {
            report.hill = taus.par_iter().map(|&t| self.hill_block(t)).collect::<Result<_>>()?;
        }
        if scope.jacobi {
            report.jacobi = taus.par_iter().map(|&t| self.jacobi_block(t)).collect::<Result<_>>()?;
        }
        if scope.profile {
            report.reference_spectrum = Some(self.reference_spectrum()?);
            report.profile = epss.par_iter().map(|&e| self.profile_block(e)).collect::<Result<_>>()?;
            if let Some(r) = profile_rates(&report.profile) {
                report.rates.push(r);
            }
        }
        if scope.solve || scope.bloch {
            let pairs: Vec<(f64, f64)> = taus.iter().flat_map(|&t| epss.iter().map(move |&e| (t, e))).collect();
            report.blocks = pairs.par_iter().map(|&(t, e)| self.solve_block(t, e, scope)).collect();
            for &t in taus {
                let blocks: Vec<&SolveBlock> = report.blocks.iter().filter(|b| b.tau == t).collect();
                report.rates.extend(solve_rates(t, &blocks));
            }
        }
        report.finalize();
        Ok(report)
    }

    /// Write `report.json` (or `<name>.json`) and the text summary.
    pub fn write_report(&self, report: &VerificationReport, name: &str) -> Result<(PathBuf, PathBuf)> {
        let json_path = self.out_dir.join(format!("{name}.json"));
        let txt_path = self.out_dir.join(format!("{name}.txt"));
        write_atomic(&json_path, report.to_json().as_bytes())?;
        write_atomic(&txt_path, report.summary().as_bytes())?;
        Ok((json_path, txt_path))
    }
}

fn intervals(half_length: f64, spacing: f64) -> usize {
    ((2.0 * half_length / spacing).round() as usize).max(2)
}

fn sorted_by_epsilon<T: Clone>(items: impl Iterator<Item = (f64, T)>) -> (Vec<f64>, Vec<T>) {
    let mut v: Vec<(f64, T)> = items.collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v.into_iter().unzip()
}

fn profile_rates(blocks: &[ProfileBlock]) -> Option<RateBlock> {
    let (eps, err): (Vec<f64>, Vec<f64>) = sorted_by_epsilon(
        blocks
            .iter()
            .filter(|b| b.epsilon > 0.0)
            .map(|b| (b.epsilon, (b.summary.ell - b.ell_leading).abs())),
    );
    if eps.len() < 2 {
        return None;
    }
    let order = fit_exponent(&eps, &err);
    Some(RateBlock {
        tau: None,
        epsilons: eps,
        values: err,
        quantity: "|ell - ell_0|".into(),
        checks: vec![Check::at_least("multiplier convergence order", order, th::ELL_ORDER)],
    })
}

fn solve_rates(tau: f64, blocks: &[&SolveBlock]) -> Vec<RateBlock> {
    let mut out = Vec::new();
    let (eps, sup): (Vec<f64>, Vec<f64>) = sorted_by_epsilon(
        blocks
            .iter()
            .filter_map(|b| b.diagnostics.as_ref().map(|d| (b.epsilon, d.ansatz.sup_error))),
    );
    if eps.len() >= 2 {
        let p = fit_exponent(&eps, &sup);
        out.push(RateBlock {
            tau: Some(tau),
            epsilons: eps,
            values: sup,
            quantity: "ansatz sup error".into(),
            checks: vec![Check::at_least("ansatz error exponent", p, th::ANSATZ_EXPONENT)],
        });
    }
    let (eps, err): (Vec<f64>, Vec<f64>) = sorted_by_epsilon(blocks.iter().filter_map(|b| {
        b.diagnostics
            .as_ref()
            .map(|d| (b.epsilon, d.translation.relative_error))
    }));
    let mut checks = Vec::new();
    for i in 0..eps.len() {
        for j in 0..eps.len() {
            if (eps[i] * 2.0 - eps[j]).abs() <= 1e-12 * eps[j] && eps[i] <= th::TRANSLATION_ERROR_EPSILON {
                checks.push(Check::within(
                    format!("translation error ratio eps {} -> {}", eps[i], eps[j] / 2.0),
                    err[i] / err[j],
                    th::HALVING_RATIO.0,
                    th::HALVING_RATIO.1,
                ));
            }
        }
    }
    if !checks.is_empty() {
        out.push(RateBlock {
            tau: Some(tau),
            epsilons: eps,
            values: err,
            quantity: "translation correspondence error".into(),
            checks,
        });
    }
    let (eps, kappa): (Vec<f64>, Vec<f64>) = sorted_by_epsilon(blocks.iter().filter_map(|b| {
        b.bloch
            .as_ref()
            .and_then(|bl| bl.coercivity.as_ref())
            .map(|c| (b.epsilon, c.scaled))
    }));
    if eps.len() >= 2 {
        let lo = kappa.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = kappa.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        out.push(RateBlock {
            tau: Some(tau),
            epsilons: eps,
            values: kappa,
            quantity: "orthogonal coercivity times epsilon".into(),
            checks: vec![Check::at_most(
                "coercivity spread across epsilon",
                (hi - lo) / lo,
                th::COERCIVITY_2D_SPREAD,
            )],
        });
    }
    out
}

/// Output directory: the command-line override or the configured one,
/// relative paths in the configuration resolved against its directory.
pub fn resolve_out_dir(config: &RunConfig, config_path: Option<&Path>, cli: Option<&Path>) -> PathBuf {
    if let Some(p) = cli {
        return p.to_path_buf();
    }
    let dir = &config.output.directory;
    match config_path.and_then(|p| p.parent()) {
        Some(base) if dir.is_relative() && !base.as_os_str().is_empty() => base.join(dir),
        _ => dir.clone(),
    }
}
