//! Report types, threshold checks and the plain-text summary.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use unduloid::bloch::{BlochSpectrum, OrthogonalCoercivity};
use unduloid::chsolver::{AnsatzReport, CorrespondenceReport, DecayReport, GridSpec};
use unduloid::delaunay::CurveSummary;
use unduloid::jacobi::{FieldKind, ModeCount};
use unduloid::profile::{CoercivityEstimate, ProfileSummary, SolvabilityCheck};

use crate::config::RunConfig;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Serialize non-finite floats as `null` and read `null` back as NaN, so
/// reports stay valid JSON whatever a diagnostic returns.
mod lenient {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

/// Acceptance bound attached to a measured value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bound {
    AtMost { value: f64 },
    AtLeast { value: f64 },
    Above { value: f64 },
    Within { lo: f64, hi: f64 },
}

impl Bound {
    pub fn admits(self, x: f64) -> bool {
        match self {
            Bound::AtMost { value } => x <= value,
            Bound::AtLeast { value } => x >= value,
            Bound::Above { value } => x > value,
            Bound::Within { lo, hi } => x >= lo && x <= hi,
        }
    }
}

impl std::fmt::Display for Bound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Bound::AtMost { value } => write!(f, "<= {value:e}"),
            Bound::AtLeast { value } => write!(f, ">= {value:e}"),
            Bound::Above { value } => write!(f, "> {value}"),
            Bound::Within { lo, hi } => write!(f, "in [{lo}, {hi}]"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    #[serde(with = "lenient")]
    pub measured: f64,
    pub bound: Bound,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, measured: f64, bound: Bound) -> Self {
        Self {
            name: name.into(),
            measured,
            bound,
            pass: measured.is_finite() && bound.admits(measured),
        }
    }

    pub fn at_most(name: impl Into<String>, measured: f64, value: f64) -> Self {
        Self::new(name, measured, Bound::AtMost { value })
    }

    pub fn at_least(name: impl Into<String>, measured: f64, value: f64) -> Self {
        Self::new(name, measured, Bound::AtLeast { value })
    }

    pub fn positive(name: impl Into<String>, measured: f64) -> Self {
        Self::new(name, measured, Bound::Above { value: 0.0 })
    }

    pub fn within(name: impl Into<String>, measured: f64, lo: f64, hi: f64) -> Self {
        Self::new(name, measured, Bound::Within { lo, hi })
    }

    pub fn holds(name: impl Into<String>, condition: bool) -> Self {
        Self::at_least(name, if condition { 1.0 } else { 0.0 }, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryBlock {
    pub tau: f64,
    pub summary: CurveSummary,
    pub max_mean_curvature_error: f64,
    /// Generating curve `(r, z)` over one period.
    pub curve: Vec<[f64; 2]>,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HillBlock {
    pub tau: f64,
    pub table: Vec<ModeCount>,
    pub temperate_count: usize,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobiFieldResiduals {
    pub kind: FieldKind,
    /// Sup norm of `𝒥Φ` on each grid of the ladder.
    pub residuals: Vec<f64>,
    pub order: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JacobiBlock {
    pub tau: f64,
    pub points_per_period: Vec<usize>,
    pub fields: Vec<JacobiFieldResiduals>,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileBlock {
    pub epsilon: f64,
    pub summary: ProfileSummary,
    pub ell_leading: f64,
    pub newton_iterations: usize,
    pub identity: SolvabilityCheck,
    pub coercivity: Vec<CoercivityEstimate>,
    /// `(t, U(t), Θ(t))` samples.
    pub samples: Vec<[f64; 3]>,
    pub checks: Vec<Check>,
}

/// Spectrum of the linearization about the heteroclinic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSpectrum {
    pub eigenvalues: Vec<f64>,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub grid: GridSpec,
    pub ell: f64,
    pub mass: f64,
    pub residual_norm: f64,
    pub newton_history: Vec<f64>,
    pub sigma_plus: f64,
    pub sigma_minus: f64,
    /// Solution container written next to the report.
    pub solution_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDiagnostics {
    pub ansatz: AnsatzReport,
    pub decay: DecayReport,
    pub translation: CorrespondenceReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BlochBlock {
    pub spectrum: BlochSpectrum,
    pub coercivity: Option<OrthogonalCoercivity>,
    pub bands_file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveBlock {
    pub tau: f64,
    pub epsilon: f64,
    pub error: Option<String>,
    pub solve: Option<SolveDiagnostics>,
    pub diagnostics: Option<FieldDiagnostics>,
    pub bloch: Option<BlochBlock>,
    pub checks: Vec<Check>,
}

/// Fits across the ε list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateBlock {
    /// `None` for the 1D profile rates.
    pub tau: Option<f64>,
    pub epsilons: Vec<f64>,
    pub values: Vec<f64>,
    pub quantity: String,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerificationReport {
    pub schema_version: u32,
    pub tool_version: String,
    /// Full configuration, tolerances included.
    pub config: RunConfig,
    pub geometry: Vec<GeometryBlock>,
    pub hill: Vec<HillBlock>,
    pub jacobi: Vec<JacobiBlock>,
    pub reference_spectrum: Option<ReferenceSpectrum>,
    pub profile: Vec<ProfileBlock>,
    pub blocks: Vec<SolveBlock>,
    pub rates: Vec<RateBlock>,
    pub passed: usize,
    pub failed: usize,
    pub all_pass: bool,
}

impl VerificationReport {
    pub fn empty(config: RunConfig) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            geometry: Vec::new(),
            hill: Vec::new(),
            jacobi: Vec::new(),
            reference_spectrum: None,
            profile: Vec::new(),
            blocks: Vec::new(),
            rates: Vec::new(),
            passed: 0,
            failed: 0,
            all_pass: true,
        }
    }

    /// Every check with a label naming its block.
    pub fn checks(&self) -> Vec<(String, &Check)> {
        let mut out = Vec::new();
        for b in &self.geometry {
            out.extend(b.checks.iter().map(|c| (format!("geometry tau={}", b.tau), c)));
        }
        for b in &self.hill {
            out.extend(b.checks.iter().map(|c| (format!("hill tau={}", b.tau), c)));
        }
        for b in &self.jacobi {
            out.extend(b.checks.iter().map(|c| (format!("jacobi tau={}", b.tau), c)));
        }
        if let Some(r) = &self.reference_spectrum {
            out.extend(r.checks.iter().map(|c| ("profile reference".to_string(), c)));
        }
        for b in &self.profile {
            out.extend(b.checks.iter().map(|c| (format!("profile eps={}", b.epsilon), c)));
        }
        for b in &self.blocks {
            out.extend(
                b.checks
                    .iter()
                    .map(|c| (format!("block tau={} eps={}", b.tau, b.epsilon), c)),
            );
        }
        for r in &self.rates {
            let label = match r.tau {
                Some(t) => format!("rates tau={t} {}", r.quantity),
                None => format!("rates {}", r.quantity),
            };
            out.extend(r.checks.iter().map(|c| (label.clone(), c)));
        }
        out
    }

    /// Recount checks; block errors count as failures.
    pub fn finalize(&mut self) {
        let (mut passed, mut failed) = (0, 0);
        for (_, c) in self.checks() {
            if c.pass {
                passed += 1;
            } else {
                failed += 1;
            }
        }
        failed += self.blocks.iter().filter(|b| b.error.is_some()).count();
        self.passed = passed;
        self.failed = failed;
        self.all_pass = failed == 0;
    }

    /// Deterministic pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "unduloid verification report (tool {})", self.tool_version);
        let _ = writeln!(
            s,
            "tau_list = {:?}, epsilon_list = {:?}",
            self.config.tau_list, self.config.epsilon_list
        );
        for b in &self.geometry {
            let g = &b.summary;
            let _ = writeln!(
                s,
                "geometry tau={}: T = {:.10}, neck {:.10}, bulge {:.10}",
                b.tau, g.t_period, g.rho_neck, g.rho_bulge
            );
        }
        for b in &self.hill {
            let deltas: Vec<String> = b.table.iter().map(|m| format!("{:.4}", m.hill.discriminant)).collect();
            let _ = writeln!(
                s,
                "hill tau={}: discriminants [{}], temperate count {}",
                b.tau,
                deltas.join(", "),
                b.temperate_count
            );
        }
        for b in &self.profile {
            let _ = writeln!(
                s,
                "profile eps={}: ell = {:.10} (leading {:.10})",
                b.epsilon, b.summary.ell, b.ell_leading
            );
        }
        for b in &self.blocks {
            if let Some(e) = &b.error {
                let _ = writeln!(s, "block tau={} eps={}: ERROR {e}", b.tau, b.epsilon);
                continue;
            }
            if let Some(sd) = &b.solve {
                let _ = writeln!(
                    s,
                    "solve tau={} eps={}: grid {}x{}, ell = {:.10}, residual {:.2e}",
                    b.tau, b.epsilon, sd.grid.nr, sd.grid.nz, sd.ell, sd.residual_norm
                );
            }
            if let Some(bl) = &b.bloch {
                let v = &bl.spectrum.verdict;
                let _ = writeln!(
                    s,
                    "bloch tau={} eps={}: temperate count {}, min gap {:.4e}, zero modes as predicted: {}",
                    b.tau, b.epsilon, v.temperate_count, v.min_gap_off_zero, v.zero_modes_as_predicted
                );
            }
        }
        let _ = writeln!(s);
        for (label, c) in self.checks() {
            let _ = writeln!(
                s,
                "{} {label}: {} = {:.6e} ({})",
                if c.pass { "PASS" } else { "FAIL" },
                c.name,
                c.measured,
                c.bound
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{} passed, {} failed: {}",
            self.passed,
            self.failed,
            if self.all_pass { "ALL PASS" } else { "FAILURES" }
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bounds() {
        assert!(Check::at_most("a", 1.0, 1.0).pass);
        assert!(!Check::at_least("a", 0.5, 1.0).pass);
        assert!(Check::within("a", 1.3, 1.2, 1.45).pass);
        assert!(!Check::within("a", f64::NAN, 1.2, 1.45).pass);
        assert!(Check::holds("a", true).pass);
        assert!(!Check::positive("a", 0.0).pass);
    }

    #[test]
    fn nan_survives_round_trip() {
        let c = Check::at_most("x", f64::NAN, 1.0);
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("null"));
        let back: Check = serde_json::from_str(&s).unwrap();
        assert!(back.measured.is_nan() && !back.pass);
    }

    #[test]
    fn empty_report_passes() {
        let mut r = VerificationReport::empty(RunConfig::default());
        r.finalize();
        assert!(r.all_pass);
        assert_eq!(r.to_json(), r.to_json());
    }
}
