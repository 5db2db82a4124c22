//! Experiment configuration: a single structured-text file with
//! `[grid]`, `[problem]`, `[diagnostics]` and optional `[decomposition]`
//! sections. Every cross-field constraint (CFL, causality budget, exponent
//! range, release-time alignment) is validated here with field-level
//! messages; nothing is silently clamped.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decomposition::DecompositionConfig;
use crate::exponents::{self, Q};
use crate::grid::{cfl_limit, make_grid, GridMode, GridSpec};
use crate::solver::{causality_budget, InitialData, ProblemSpec, RunConfig, Scheme};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("failed to parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration:\n{}", violations.join("\n"))]
    Invalid { violations: Vec<String> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub mode: String,
    #[serde(default = "default_d")]
    pub d: u32,
    pub h: f64,
    pub extent: f64,
    pub dt: f64,
}

fn default_d() -> u32 {
    3
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub p: f64,
    #[serde(default = "default_true")]
    pub nonlinear: bool,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    pub data: String,
    #[serde(default = "default_one")]
    pub amplitude: f64,
    #[serde(default = "default_one")]
    pub width: f64,
    #[serde(default)]
    pub center: Option<[f64; 3]>,
    pub support_radius: f64,
    pub t_end: f64,
}

fn default_true() -> bool {
    true
}
fn default_one() -> f64 {
    1.0
}
fn default_scheme() -> String {
    "conservative".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    #[serde(default = "default_observe")]
    pub observe_every: usize,
    #[serde(default)]
    pub cone_offsets: Vec<f64>,
    #[serde(default)]
    pub shell: Option<[f64; 2]>,
    #[serde(default)]
    pub window: Option<[f64; 2]>,
    /// Diagnostic reach entering the causality budget; defaults to the
    /// largest diagnostic offset plus one.
    #[serde(default)]
    pub margin: Option<f64>,
    #[serde(default = "default_polar")]
    pub sphere_polar: usize,
    #[serde(default = "default_azimuth")]
    pub sphere_azimuth: usize,
    #[serde(default)]
    pub kappa: Option<f64>,
}

fn default_observe() -> usize {
    10
}
fn default_polar() -> usize {
    32
}
fn default_azimuth() -> usize {
    64
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            observe_every: default_observe(),
            cone_offsets: Vec::new(),
            shell: None,
            window: None,
            margin: None,
            sphere_polar: default_polar(),
            sphere_azimuth: default_azimuth(),
            kappa: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionSection {
    pub release_times: Vec<f64>,
    pub r1: f64,
    pub r2: f64,
    #[serde(default)]
    pub layer: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub grid: GridSection,
    pub problem: ProblemSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub decomposition: Option<DecompositionSection>,
}

/// Fully validated experiment description.
#[derive(Debug, Clone)]
pub struct Validated {
    pub grid: GridSpec,
    pub problem: ProblemSpec,
    pub run: RunConfig,
    pub diagnostics: DiagnosticsSection,
    pub decomposition: Option<DecompositionConfig>,
    /// Raw text the config was parsed from (digested into manifests).
    pub source: String,
}

pub fn parse_config_str(text: &str) -> Result<Validated, ConfigError> {
    let file: ConfigFile = toml::from_str(text)?;
    validate(file, text.to_string())
}

pub fn parse_config(path: &std::path::Path) -> Result<Validated, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

fn validate(file: ConfigFile, source: String) -> Result<Validated, ConfigError> {
    let mut violations = Vec::new();

    let mode = match file.grid.mode.as_str() {
        "radial" => Some(GridMode::Radial { d: file.grid.d }),
        "cartesian3d" => {
            if file.grid.d != 3 {
                violations.push(format!(
                    "grid.d: cartesian3d mode is three-dimensional, got d = {}",
                    file.grid.d
                ));
            }
            Some(GridMode::Cartesian3d)
        }
        other => {
            violations.push(format!(
                "grid.mode: unknown mode {other:?} (radial | cartesian3d)"
            ));
            None
        }
    };

    let grid = mode.and_then(|mode| match make_grid(mode, file.grid.h, file.grid.extent, file.grid.dt) {
        Ok(g) => Some(g),
        Err(crate::grid::GridError::Cfl { dt, limit, .. }) => {
            violations.push(format!(
                "grid.dt: dt = {dt} exceeds the CFL limit {limit} (= {} * h)",
                cfl_limit(mode)
            ));
            None
        }
        Err(e) => {
            violations.push(format!("grid: {e}"));
            None
        }
    });

    let scheme = match file.problem.scheme.parse::<Scheme>() {
        Ok(s) => Some(s),
        Err(_) => {
            violations.push(format!(
                "problem.scheme: unknown scheme {:?} (leapfrog | conservative)",
                file.problem.scheme
            ));
            None
        }
    };

    // exponent range for nonlinear problems, reported with exact bounds
    let d = file.grid.d;
    if file.problem.nonlinear && (3..=5).contains(&d) {
        let lower = exponents::lower_exponent(d);
        let upper = exponents::critical_exponent(d).expect("d in 3..=5");
        let p = file.problem.p;
        if p <= q_to_f64(lower) {
            violations.push(format!(
                "problem.p: p must exceed 1+6/d = {} (got p = {p})",
                exponents::display_q(lower)
            ));
        }
        if p >= q_to_f64(upper) {
            violations.push(format!(
                "problem.p: p must stay below p_e = 1+4/(d-2) = {} (got p = {p})",
                exponents::display_q(upper)
            ));
        }
    }

    let data = match (file.problem.data.as_str(), mode) {
        ("zero", _) => Some(InitialData::Zero),
        ("gaussian-odd", Some(GridMode::Radial { .. })) => Some(InitialData::GaussianOdd {
            amplitude: file.problem.amplitude,
            width: file.problem.width,
        }),
        ("compact-bump", Some(GridMode::Radial { .. })) => Some(InitialData::CompactBump {
            amplitude: file.problem.amplitude,
            radius: file.problem.width,
        }),
        ("offset-bumps", Some(GridMode::Cartesian3d)) => Some(InitialData::OffsetBumps {
            amplitude: file.problem.amplitude,
            width: file.problem.width,
            center: file.problem.center.unwrap_or([1.2, 0.6, 0.0]),
        }),
        (name, Some(m)) => {
            violations.push(format!(
                "problem.data: family {name:?} is not available in mode {m:?}"
            ));
            None
        }
        (_, None) => None,
    };

    // causality budget
    let margin = file.diagnostics.margin.unwrap_or_else(|| {
        let mut m = 0.0f64;
        for &c in &file.diagnostics.cone_offsets {
            m = m.max(c);
        }
        if let Some([_, s2]) = file.diagnostics.shell {
            m = m.max(s2);
        }
        if let Some([_, w2]) = file.diagnostics.window {
            m = m.max(w2);
        }
        if let Some(dec) = &file.decomposition {
            m = m.max(dec.r2);
        }
        m + 1.0
    });
    if let Some(g) = &grid {
        let max_t = causality_budget(g, file.problem.support_radius, margin);
        if file.problem.t_end > max_t + 1e-9 {
            violations.push(format!(
                "problem.t_end: {} exceeds the causality budget {max_t} \
                 (= (extent {} - support {} - margin {margin}) / 2)",
                file.problem.t_end,
                g.extent(),
                file.problem.support_radius
            ));
        }
    }

    if let Some([s1, s2]) = file.diagnostics.shell {
        if s1 >= s2 {
            violations.push(format!(
                "diagnostics.shell: requires R1 < R2, got ({s1}, {s2})"
            ));
        }
    }
    if let Some([w1, w2]) = file.diagnostics.window {
        if w1 >= w2 {
            violations.push(format!(
                "diagnostics.window: requires R1 < R2, got ({w1}, {w2})"
            ));
        }
    }
    if let Some(k) = file.diagnostics.kappa {
        if k < 0.0 {
            violations.push(format!("diagnostics.kappa: must be >= 0, got {k}"));
        }
    }

    let mut decomposition = None;
    if let Some(dec) = &file.decomposition {
        if dec.r1 >= dec.r2 {
            violations.push(format!(
                "decomposition: requires r1 < r2, got ({}, {})",
                dec.r1, dec.r2
            ));
        }
        if dec.r2 <= 0.0 {
            violations.push(format!(
                "decomposition.r2: must be positive, got {}",
                dec.r2
            ));
        }
        for &t in &dec.release_times {
            if t > file.problem.t_end {
                violations.push(format!(
                    "decomposition.release_times: T = {t} beyond t_end = {}",
                    file.problem.t_end
                ));
            }
            if t < 1.0_f64.max(dec.r2) {
                violations.push(format!(
                    "decomposition.release_times: T = {t} below max(1, r2) = {}",
                    1.0_f64.max(dec.r2)
                ));
            }
            let lvl = t / file.grid.dt;
            if (lvl - lvl.round()).abs() > 1e-9 {
                violations.push(format!(
                    "decomposition.release_times: T = {t} is not a multiple of dt = {}",
                    file.grid.dt
                ));
            }
        }
        if file.problem.nonlinear && (3..=5).contains(&d) {
            // mixed-norm pair from the interpolation lemma formulas
            let (df, p) = (d as f64, file.problem.p);
            let a = df * p - df - 2.0;
            let qq = a / 2.0;
            let rr = 2.0 * a / (df * p - 2.0 * p - df);
            if violations.is_empty() {
                decomposition = Some(DecompositionConfig {
                    r1: dec.r1,
                    r2: dec.r2,
                    release_times: dec.release_times.clone(),
                    layer: dec.layer.unwrap_or(3.0 * file.grid.h),
                    observe_every: file.diagnostics.observe_every,
                    strichartz_q: qq,
                    strichartz_r: rr,
                });
            }
        } else {
            violations.push(
                "decomposition: requires a nonlinear problem with p in the admissible range"
                    .into(),
            );
        }
    }

    if !violations.is_empty() {
        return Err(ConfigError::Invalid { violations });
    }

    let grid = grid.expect("validated above");
    let problem = ProblemSpec {
        p: file.problem.p,
        nonlinear: file.problem.nonlinear,
        scheme: scheme.expect("validated above"),
        data: data.expect("validated above"),
        r_support: file.problem.support_radius,
    };
    let run = RunConfig {
        t_end: file.problem.t_end,
        observe_every: file.diagnostics.observe_every,
        margin,
    };
    Ok(Validated {
        grid,
        problem,
        run,
        diagnostics: file.diagnostics,
        decomposition,
        source,
    })
}

fn q_to_f64(v: Q) -> f64 {
    exponents::to_f64(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[grid]
mode = "radial"
d = 3
h = 0.04
extent = 24.0
dt = 0.02

[problem]
p = 4.0
data = "gaussian-odd"
support_radius = 4.0
t_end = 6.0

[diagnostics]
cone_offsets = [0.0, 2.0]
shell = [0.0, 2.0]
"#;

    #[test]
    fn minimal_config_is_valid() {
        let v = parse_config_str(MINIMAL).unwrap();
        assert_eq!(v.grid.n, 601);
        assert!(v.problem.nonlinear);
        assert_eq!(v.problem.scheme, Scheme::Conservative);
        // margin defaults to max offset + 1
        assert!((v.run.margin - 3.0).abs() < 1e-12);
    }

    #[test]
    fn p_at_lower_bound_names_the_limit() {
        let bad = MINIMAL.replace("p = 4.0", "p = 3.0");
        let err = parse_config_str(&bad).unwrap_err();
        match err {
            ConfigError::Invalid { violations } => {
                assert!(
                    violations.iter().any(|v| v.contains("p must exceed 1+6/d = 3")),
                    "{violations:?}"
                );
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn cfl_violation_names_the_limit() {
        let bad = MINIMAL.replace("dt = 0.02", "dt = 0.05");
        let err = parse_config_str(&bad).unwrap_err();
        match err {
            ConfigError::Invalid { violations } => {
                assert!(
                    violations.iter().any(|v| v.contains("CFL limit")),
                    "{violations:?}"
                );
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn budget_violation_reports_numbers() {
        let bad = MINIMAL.replace("t_end = 6.0", "t_end = 11.0");
        let err = parse_config_str(&bad).unwrap_err();
        match err {
            ConfigError::Invalid { violations } => {
                assert!(
                    violations.iter().any(|v| v.contains("causality budget")),
                    "{violations:?}"
                );
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn decomposition_constraints() {
        let with_dec = format!(
            "{MINIMAL}\n[decomposition]\nrelease_times = [4.0]\nr1 = 0.0\nr2 = 2.0\n"
        );
        let v = parse_config_str(&with_dec).unwrap();
        let dec = v.decomposition.unwrap();
        assert!((dec.strichartz_q - 3.5).abs() < 1e-12);
        assert!((dec.strichartz_r - 14.0).abs() < 1e-12);

        let bad = with_dec.replace("release_times = [4.0]", "release_times = [7.0]");
        assert!(matches!(
            parse_config_str(&bad),
            Err(ConfigError::Invalid { .. })
        ));
        let bad = with_dec.replace("r2 = 2.0", "r2 = -1.0");
        assert!(matches!(
            parse_config_str(&bad),
            Err(ConfigError::Invalid { .. })
        ));
    }

    #[test]
    fn unknown_fields_rejected() {
        let bad = format!("{MINIMAL}\nbogus_key = 1\n");
        assert!(matches!(parse_config_str(&bad), Err(ConfigError::Parse(_))));
    }
}
