//! Run configuration: a TOML file with sections, checked against the schema
//! with line/column positions in every error.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use unduloid::delaunay::MIN_TAU;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default = "default_tau_list")]
    pub tau_list: Vec<f64>,
    #[serde(default = "default_epsilon_list")]
    pub epsilon_list: Vec<f64>,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub bloch: BlochConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    /// Cells per interface width in both directions of the 2D grid.
    pub cells_per_epsilon: f64,
    /// Half length `L` of the 1D profile interval.
    pub profile_half_length: f64,
    /// Spacing of the 1D profile grid.
    pub profile_spacing: f64,
    /// Half length used for the 1D coercivity estimates (needs `R ≤ L/2`).
    pub coercivity_half_length: f64,
    pub coercivity_radii: Vec<f64>,
    /// Highest angular mode of the Hill table.
    pub hill_modes: usize,
    /// Periods covered by the Jacobi residual grids.
    pub jacobi_periods: f64,
    /// `(points per period, angular points)` of the Jacobi refinement ladder.
    pub jacobi_grids: Vec<[usize; 2]>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            cells_per_epsilon: 6.0,
            profile_half_length: 20.0,
            profile_spacing: 0.005,
            coercivity_half_length: 40.0,
            coercivity_radii: vec![10.0, 15.0, 20.0],
            hill_modes: 8,
            jacobi_periods: 2.0,
            jacobi_grids: vec![[64, 16], [128, 32], [256, 64]],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub ode: f64,
    pub newton: f64,
    pub profile: f64,
    /// Eigenpair certificate bound.
    pub eig: f64,
    pub parabolic: f64,
    /// `tol_zero` is this multiple of the largest translation eigenvalue.
    pub tol_zero_factor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            ode: 1e-12,
            newton: 1e-9,
            profile: 1e-10,
            eig: 1e-8,
            parabolic: 1e-6,
            tol_zero_factor: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BlochConfig {
    pub m_max: usize,
    pub zeta_grid: Vec<f64>,
    pub zeta_min: f64,
    /// Eigenvalues per `(m, ζ)`.
    pub eigenvalues: usize,
    /// Run the fibrewise orthogonal coercivity estimate.
    pub coercivity: bool,
}

pub fn default_zeta_grid() -> Vec<f64> {
    vec![0.0, 0.2, 0.8, 1.6, PI, 2.0 * PI - 1.6, 2.0 * PI - 0.8, 2.0 * PI - 0.2]
}

impl Default for BlochConfig {
    fn default() -> Self {
        Self {
            m_max: 4,
            zeta_grid: default_zeta_grid(),
            zeta_min: 0.2,
            eigenvalues: 4,
            coercivity: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub cache: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            cache: true,
        }
    }
}

fn default_tau_list() -> Vec<f64> {
    vec![0.6]
}

fn default_epsilon_list() -> Vec<f64> {
    vec![0.1]
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tau_list: default_tau_list(),
            epsilon_list: default_epsilon_list(),
            grid: GridConfig::default(),
            tolerances: Tolerances::default(),
            bloch: BlochConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

/// Configuration error with a 1-based source position when one is known.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub source_name: String,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "{}:{l}:{c}: {}", self.source_name, self.message),
            (Some(l), None) => write!(f, "{}:{l}: {}", self.source_name, self.message),
            _ => write!(f, "{}: {}", self.source_name, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// 1-based line and column of byte offset `pos`.
fn line_col(src: &str, pos: usize) -> (usize, usize) {
    let pos = pos.min(src.len());
    let before = &src[..pos];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

/// Position of `key = …` inside `[section]` (top level for `None`).
fn locate_key(src: &str, section: Option<&str>, key: &str) -> Option<(usize, usize)> {
    let mut current: Option<String> = None;
    for (n, raw) in src.lines().enumerate() {
        let line = raw.trim_start();
        let indent = raw.len() - line.len();
        if let Some(rest) = line.strip_prefix('[') {
            current = rest.split(']').next().map(|s| s.trim().to_string());
            continue;
        }
        if current.as_deref() != section {
            continue;
        }
        if let Some(rest) = line.strip_prefix(key) {
            if rest.trim_start().starts_with('=') {
                return Some((n + 1, indent + 1));
            }
        }
    }
    None
}

impl RunConfig {
    /// Parse and validate a configuration held in memory.
    pub fn parse(src: &str, source_name: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(src).map_err(|e| {
            let (line, column) = match e.span() {
                Some(span) => {
                    let (l, c) = line_col(src, span.start);
                    (Some(l), Some(c))
                }
                None => (None, None),
            };
            ConfigError {
                source_name: source_name.to_string(),
                line,
                column,
                message: e.message().trim().to_string(),
            }
        })?;
        cfg.validate().map_err(|(section, key, message)| {
            let pos = locate_key(src, section, key);
            ConfigError {
                source_name: source_name.to_string(),
                line: pos.map(|p| p.0),
                column: pos.map(|p| p.1),
                message,
            }
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let name = path.display().to_string();
        let src = std::fs::read_to_string(path).map_err(|e| ConfigError {
            source_name: name.clone(),
            line: None,
            column: None,
            message: format!("cannot read configuration: {e}"),
        })?;
        Self::parse(&src, &name)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    /// Schema check; failures name the section and key they refer to.
    pub fn validate(&self) -> Result<(), (Option<&'static str>, &'static str, String)> {
        if self.schema_version != SCHEMA_VERSION {
            return Err((
                None,
                "schema_version",
                format!(
                    "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                    self.schema_version
                ),
            ));
        }
        for &t in &self.tau_list {
            if !(MIN_TAU..1.0).contains(&t) {
                return Err((None, "tau_list", format!("tau = {t} outside [{MIN_TAU}, 1)")));
            }
        }
        for &e in &self.epsilon_list {
            if !(e > 0.0 && e <= 0.3) {
                return Err((None, "epsilon_list", format!("epsilon = {e} outside (0, 0.3]")));
            }
        }
        let g = &self.grid;
        let positive: [(&'static str, f64); 5] = [
            ("cells_per_epsilon", g.cells_per_epsilon),
            ("profile_half_length", g.profile_half_length),
            ("profile_spacing", g.profile_spacing),
            ("coercivity_half_length", g.coercivity_half_length),
            ("jacobi_periods", g.jacobi_periods),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err((Some("grid"), key, format!("{key} must be positive, got {v}")));
            }
        }
        if g.hill_modes < 2 {
            return Err((Some("grid"), "hill_modes", "hill_modes must be at least 2".into()));
        }
        if g.jacobi_grids.len() < 2 {
            return Err((
                Some("grid"),
                "jacobi_grids",
                "at least two Jacobi grids are needed for an order fit".into(),
            ));
        }
        if let Some(&r) = g
            .coercivity_radii
            .iter()
            .find(|&&r| !(r > 0.0 && r <= 0.5 * g.coercivity_half_length))
        {
            return Err((
                Some("grid"),
                "coercivity_radii",
                format!("radius {r} outside (0, coercivity_half_length / 2]"),
            ));
        }
        let t = &self.tolerances;
        let tols: [(&'static str, f64); 6] = [
            ("ode", t.ode),
            ("newton", t.newton),
            ("profile", t.profile),
            ("eig", t.eig),
            ("parabolic", t.parabolic),
            ("tol_zero_factor", t.tol_zero_factor),
        ];
        for (key, v) in tols {
            if !(v > 0.0 && v.is_finite()) {
                return Err((
                    Some("tolerances"),
                    key,
                    format!("tolerance {key} must be positive, got {v}"),
                ));
            }
        }
        let b = &self.bloch;
        if b.eigenvalues == 0 || b.eigenvalues > 10 {
            return Err((Some("bloch"), "eigenvalues", "eigenvalues must lie in 1..=10".into()));
        }
        if b.zeta_grid.is_empty() {
            return Err((Some("bloch"), "zeta_grid", "zeta_grid must not be empty".into()));
        }
        if let Some(z) = b.zeta_grid.iter().find(|z| !z.is_finite()) {
            return Err((Some("bloch"), "zeta_grid", format!("non-finite zeta {z}")));
        }
        if !(b.zeta_min >= 0.0 && b.zeta_min < PI) {
            return Err((
                Some("bloch"),
                "zeta_min",
                format!("zeta_min = {} outside [0, π)", b.zeta_min),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        let back = RunConfig::parse(&cfg.to_toml(), "default").unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn minimal_file() {
        let cfg = RunConfig::parse("schema_version = 1\n", "min").unwrap();
        assert_eq!(cfg.tau_list, vec![0.6]);
        assert_eq!(cfg.bloch.zeta_grid.len(), 8);
    }

    #[test]
    fn syntax_error_has_position() {
        let e = RunConfig::parse("schema_version = 1\ntau_list = [0.6,\n", "bad.toml").unwrap_err();
        assert_eq!(e.line, Some(2));
        assert!(e.to_string().starts_with("bad.toml:2:"));
    }

    #[test]
    fn unknown_key_rejected() {
        let e = RunConfig::parse("schema_version = 1\n[grid]\ncells = 4\n", "x").unwrap_err();
        assert_eq!(e.line, Some(3));
    }

    #[test]
    fn semantic_error_points_at_key() {
        let src = "schema_version = 1\n\n[tolerances]\n  newton = -1e-9\n";
        let e = RunConfig::parse(src, "x").unwrap_err();
        assert_eq!((e.line, e.column), (Some(4), Some(3)));
        assert!(e.message.contains("newton"));
        let e = RunConfig::parse("schema_version = 1\ntau_list = [1.2]\n", "x").unwrap_err();
        assert_eq!(e.line, Some(2));
    }

    #[test]
    fn empty_tau_list_is_valid() {
        let cfg = RunConfig::parse("schema_version = 1\ntau_list = []\n", "x").unwrap();
        assert!(cfg.tau_list.is_empty());
    }

    proptest::proptest! {
        #[test]
        fn valid_configs_round_trip(
            taus in proptest::collection::vec(MIN_TAU..0.999f64, 0..5),
            eps in proptest::collection::vec(0.001f64..0.3, 1..4),
            cells in 1.0f64..20.0,
            newton in 1e-14f64..1e-3,
            zetas in proptest::collection::vec(0.0..std::f64::consts::TAU, 1..9),
            m_max in 0usize..8,
            dir in "[a-z][a-z0-9_/]{0,12}",
        ) {
            let mut cfg = RunConfig { tau_list: taus, epsilon_list: eps, ..RunConfig::default() };
            cfg.grid.cells_per_epsilon = cells;
            cfg.tolerances.newton = newton;
            cfg.bloch.zeta_grid = zetas;
            cfg.bloch.m_max = m_max;
            cfg.output.directory = dir.into();
            let back = RunConfig::parse(&cfg.to_toml(), "generated").unwrap();
            proptest::prop_assert_eq!(cfg, back);
        }
    }
}
