//! Run configuration: JSON schema, defaulting and validation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anisotropy::{Anisotropy, AnisotropyKind};
use crate::cli::raster::{read_pgm, RasterError};
use crate::energy::DoubleWell;
use crate::grid::{Boundary, Point};
use crate::optimizer::{
    eps_band, ContinuationSchedule, DensitySpec, Domain, DomainShape, MaskImage, MinimizeConfig, Problem, Stage,
    DEFAULT_INIT_CELLS,
};
use crate::profile::DEFAULT_ETA;

/// Overrides `output_dir` when set.
pub const OUTPUT_DIR_ENV: &str = "PHASEPART_OUTPUT_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Partition,
    Isoperimetric,
    WeightedIsoperimetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeConfig {
    Square {},
    Disk {
        center: Point,
        radius: f64,
    },
    Triangle {
        vertices: [Point; 3],
    },
    Hexagon {
        center: Point,
        radius: f64,
    },
    /// PGM image; nonzero pixels are inside. Relative paths resolve against
    /// the config file directory.
    MaskFile {
        path: PathBuf,
    },
}

impl Default for ShapeConfig {
    fn default() -> Self {
        ShapeConfig::Square {}
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    #[serde(default)]
    pub shape: ShapeConfig,
    #[serde(default)]
    pub origin: Point,
    #[serde(default = "one")]
    pub side: f64,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            shape: ShapeConfig::Square {},
            origin: [0.0, 0.0],
            side: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensityConfig {
    Disk {
        center: Point,
        radius: f64,
        inside: f64,
        #[serde(default = "one")]
        outside: f64,
    },
}

impl DensityConfig {
    fn spec(&self) -> DensitySpec {
        match *self {
            DensityConfig::Disk {
                center,
                radius,
                inside,
                outside,
            } => DensitySpec::Disk {
                center,
                radius,
                inside,
                outside,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    pub n: usize,
    pub eps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n0: usize,
    pub stages: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    /// Explicit stages; exclusive with `generator`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stages: Option<Vec<StageConfig>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default = "default_grad_tol")]
    pub grad_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step0: Option<f64>,
    #[serde(default)]
    pub eps_override: bool,
    /// Side of the lattice the random start is drawn on.
    #[serde(default = "default_init_cells")]
    pub init_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemKind,
    /// Filled from `fractions` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phases: Option<usize>,
    #[serde(default)]
    pub domain: DomainConfig,
    #[serde(default)]
    pub boundary: Boundary,
    #[serde(default = "default_anisotropy")]
    pub anisotropy: AnisotropyKind,
    #[serde(default)]
    pub well: DoubleWell,
    /// Share of the (weighted) domain mass per phase; a single entry in the
    /// isoperimetric modes.
    pub fractions: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<DensityConfig>,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Label image (PGM) to warm-start from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warm_start: Option<PathBuf>,
    #[serde(default = "default_eta")]
    pub eta: f64,
}

fn one() -> f64 {
    1.0
}
fn default_max_iters() -> usize {
    MinimizeConfig::default().max_iters
}
fn default_grad_tol() -> f64 {
    MinimizeConfig::default().grad_tol
}
fn default_init_cells() -> usize {
    DEFAULT_INIT_CELLS
}
fn default_anisotropy() -> AnisotropyKind {
    AnisotropyKind::Euclidean {}
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_eta() -> f64 {
    DEFAULT_ETA
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Syntax { path: String, message: String },
    #[error("fractions: mass fractions must sum to 1 (got {sum})")]
    FractionSum { sum: f64 },
    #[error("{path}: value {value} out of range, expected {expected}")]
    OutOfRange { path: String, value: f64, expected: String },
    #[error("{path}: eps = {eps} outside the admissible band [1/N, 4/N] = [{lo}, {hi}] for N = {n}; set schedule.eps_override to bypass")]
    EpsBand {
        path: String,
        eps: f64,
        n: usize,
        lo: f64,
        hi: f64,
    },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

impl ConfigError {
    fn invalid(path: &str, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            path: path.to_string(),
            message: message.into(),
        }
    }

    fn range(path: &str, value: f64, expected: &str) -> Self {
        ConfigError::OutOfRange {
            path: path.to_string(),
            value,
            expected: expected.to_string(),
        }
    }
}

/// All problems found in one config.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

impl From<ConfigError> for ConfigErrors {
    fn from(e: ConfigError) -> Self {
        ConfigErrors(vec![e])
    }
}

/// Parse, fill defaults and validate.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Syntax {
        path: match e.path().to_string().as_str() {
            "." => "<root>".to_string(),
            p => p.to_string(),
        },
        message: e.inner().to_string(),
    })?;
    if cfg.phases.is_none() {
        cfg.phases = Some(cfg.fractions.len());
    }
    let errors = validate(&cfg);
    if errors.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(errors))
    }
}

pub fn validate(cfg: &RunConfig) -> Vec<ConfigError> {
    let mut errs = Vec::new();
    let f = &cfg.fractions;
    for (i, &x) in f.iter().enumerate() {
        if !(x > 0.0 && x <= 1.0) {
            errs.push(ConfigError::range(&format!("fractions[{i}]"), x, "(0, 1]"));
        }
    }
    match cfg.problem {
        ProblemKind::Partition => {
            if f.len() < 2 {
                errs.push(ConfigError::invalid(
                    "fractions",
                    "partition mode needs at least two phases",
                ));
            }
            let sum: f64 = f.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                errs.push(ConfigError::FractionSum { sum });
            }
        }
        ProblemKind::Isoperimetric | ProblemKind::WeightedIsoperimetric => {
            if f.len() != 1 {
                errs.push(ConfigError::invalid(
                    "fractions",
                    "isoperimetric modes take exactly one mass fraction",
                ));
            }
        }
    }
    if let Some(p) = cfg.phases {
        if p != f.len() {
            errs.push(ConfigError::invalid(
                "phases",
                format!("{p} phases but {} fractions", f.len()),
            ));
        }
    }
    match (cfg.problem, &cfg.density) {
        (ProblemKind::WeightedIsoperimetric, None) => {
            errs.push(ConfigError::invalid(
                "density",
                "weighted_isoperimetric requires a density",
            ));
        }
        (
            _,
            Some(DensityConfig::Disk {
                radius,
                inside,
                outside,
                ..
            }),
        ) => {
            if !(*radius > 0.0) {
                errs.push(ConfigError::range("density.radius", *radius, "> 0"));
            }
            for (name, v) in [("density.inside", inside), ("density.outside", outside)] {
                if !(*v > 0.0 && v.is_finite()) {
                    errs.push(ConfigError::range(name, *v, "finite and > 0"));
                }
            }
        }
        _ => {}
    }
    if let Err(e) = cfg.anisotropy.validate() {
        errs.push(ConfigError::invalid("anisotropy", e.to_string()));
    }
    if let Err(e) = cfg.well.validate() {
        errs.push(ConfigError::invalid("well", e));
    }
    if !(0.0..=0.5).contains(&cfg.eta) {
        errs.push(ConfigError::range("eta", cfg.eta, "[0, 0.5]"));
    }
    let d = &cfg.domain;
    if !(d.side > 0.0 && d.side.is_finite()) {
        errs.push(ConfigError::range("domain.side", d.side, "> 0"));
    }
    match &d.shape {
        ShapeConfig::Disk { radius, .. } | ShapeConfig::Hexagon { radius, .. } if !(*radius > 0.0) => {
            errs.push(ConfigError::range("domain.shape.radius", *radius, "> 0"));
        }
        _ => {}
    }
    if !matches!(d.shape, ShapeConfig::Square {}) && cfg.boundary == Boundary::Periodic {
        errs.push(ConfigError::invalid(
            "boundary",
            "periodic boundaries require the square domain",
        ));
    }
    validate_schedule(&cfg.schedule, d.side, &mut errs);
    errs
}

fn validate_schedule(s: &ScheduleConfig, side: f64, errs: &mut Vec<ConfigError>) {
    if s.init_cells == 0 {
        errs.push(ConfigError::range("schedule.init_cells", 0.0, ">= 1"));
    }
    if !(s.grad_tol >= 0.0) {
        errs.push(ConfigError::range("schedule.grad_tol", s.grad_tol, ">= 0"));
    }
    if let Some(t) = s.step0 {
        if !(t > 0.0 && t.is_finite()) {
            errs.push(ConfigError::range("schedule.step0", t, "> 0"));
        }
    }
    match (&s.stages, &s.generator) {
        (Some(_), Some(_)) | (None, None) => errs.push(ConfigError::invalid(
            "schedule",
            "give exactly one of `stages` and `generator`",
        )),
        (None, Some(g)) => {
            if g.n0 < 3 {
                errs.push(ConfigError::range("schedule.generator.n0", g.n0 as f64, ">= 3"));
            }
            if g.stages == 0 {
                errs.push(ConfigError::range("schedule.generator.stages", 0.0, ">= 1"));
            }
        }
        (Some(stages), None) => {
            if stages.is_empty() {
                errs.push(ConfigError::invalid(
                    "schedule.stages",
                    "at least one stage is required",
                ));
            }
            for (i, st) in stages.iter().enumerate() {
                let path = format!("schedule.stages[{i}]");
                if st.n < 3 {
                    errs.push(ConfigError::range(&format!("{path}.n"), st.n as f64, ">= 3"));
                    continue;
                }
                if !(st.eps > 0.0 && st.eps.is_finite()) {
                    errs.push(ConfigError::range(&format!("{path}.eps"), st.eps, "> 0"));
                    continue;
                }
                let (lo, hi) = eps_band(st.n, side);
                let slack = 1e-12 * hi;
                if !s.eps_override && !(st.eps >= lo - slack && st.eps <= hi + slack) {
                    errs.push(ConfigError::EpsBand {
                        path: format!("{path}.eps"),
                        eps: st.eps,
                        n: st.n,
                        lo,
                        hi,
                    });
                }
                if i > 0 && (st.n < stages[i - 1].n || st.eps > stages[i - 1].eps) {
                    errs.push(ConfigError::invalid(
                        &path,
                        "N must not decrease and eps must not increase across stages",
                    ));
                }
            }
        }
    }
}

impl RunConfig {
    pub fn schedule(&self) -> ContinuationSchedule {
        let minimize = MinimizeConfig {
            max_iters: self.schedule.max_iters,
            grad_tol: self.schedule.grad_tol,
            step0: self.schedule.step0,
        };
        let mut s = match (&self.schedule.stages, self.schedule.generator) {
            (Some(stages), _) => ContinuationSchedule {
                stages: stages.iter().map(|s| Stage { n: s.n, eps: s.eps }).collect(),
                seed: self.seed,
                minimize,
                eps_override: false,
                init_cells: DEFAULT_INIT_CELLS,
            },
            (None, Some(g)) => ContinuationSchedule::geometric(g.n0, g.stages, self.domain.side, self.seed, minimize),
            (None, None) => ContinuationSchedule {
                stages: Vec::new(),
                seed: self.seed,
                minimize,
                eps_override: false,
                init_cells: DEFAULT_INIT_CELLS,
            },
        };
        s.eps_override = self.schedule.eps_override;
        s.init_cells = self.schedule.init_cells;
        s
    }

    /// Effective output directory, honouring [`OUTPUT_DIR_ENV`].
    pub fn output_dir(&self) -> PathBuf {
        match std::env::var_os(OUTPUT_DIR_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.output_dir.clone(),
        }
    }

    /// Build the solver problem; files are resolved against `base_dir`.
    pub fn problem(&self, base_dir: &Path) -> Result<Problem, ConfigErrors> {
        let resolve = |p: &Path| {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base_dir.join(p)
            }
        };
        let raster = |key: &str, e: RasterError| ConfigError::invalid(key, e.to_string());
        let shape = match &self.domain.shape {
            ShapeConfig::Square {} => DomainShape::Square,
            ShapeConfig::Disk { center, radius } => DomainShape::Disk {
                center: *center,
                radius: *radius,
            },
            ShapeConfig::Triangle { vertices } => DomainShape::Triangle { vertices: *vertices },
            ShapeConfig::Hexagon { center, radius } => DomainShape::Hexagon {
                center: *center,
                radius: *radius,
            },
            ShapeConfig::MaskFile { path } => {
                let img = read_pgm(&resolve(path)).map_err(|e| raster("domain.shape.path", e))?;
                DomainShape::Image(Arc::new(MaskImage {
                    width: img.width,
                    height: img.height,
                    inside: img.bottom_up().iter().map(|&p| p > 0).collect(),
                }))
            }
        };
        let domain = Domain {
            shape,
            origin: self.domain.origin,
            side: self.domain.side,
            boundary: self.boundary,
        };
        let warm_start = match &self.warm_start {
            None => None,
            Some(path) => {
                let img = read_pgm(&resolve(path)).map_err(|e| raster("warm_start", e))?;
                Some(
                    img.to_labels(&domain)
                        .map_err(|e| ConfigError::invalid("warm_start", e.to_string()))?,
                )
            }
        };
        let aniso =
            Anisotropy::new(self.anisotropy.clone()).map_err(|e| ConfigError::invalid("anisotropy", e.to_string()))?;
        Ok(Problem {
            domain,
            aniso,
            well: self.well,
            fractions: self.fractions.clone(),
            density: self.density.map(|d| d.spec()),
            weighted_mass: self.problem == ProblemKind::WeightedIsoperimetric,
            warm_start,
            eta: self.eta,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anisotropy::EllipticFactor;
    use proptest::prelude::*;

    const MINIMAL: &str = r#"{
        "problem": "isoperimetric",
        "fractions": [0.14285714285714285],
        "schedule": {"stages": [{"n": 101, "eps": 0.02}]}
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.phases, Some(1));
        assert_eq!(cfg.domain, DomainConfig::default());
        assert_eq!(cfg.boundary, Boundary::Neumann);
        assert_eq!(cfg.anisotropy, AnisotropyKind::Euclidean {});
        assert_eq!(cfg.well, DoubleWell::Quartic {});
        assert_eq!(cfg.seed, 0);
        assert_eq!(cfg.eta, DEFAULT_ETA);
        assert_eq!(cfg.output_dir, PathBuf::from("out"));
        assert_eq!(cfg.schedule.max_iters, 5000);
        assert!(!cfg.schedule.eps_override);
    }

    #[test]
    fn fractions_must_sum_to_one() {
        let text = r#"{"problem": "partition", "fractions": [0.5, 0.3, 0.3],
            "schedule": {"stages": [{"n": 101, "eps": 0.02}]}}"#;
        let err = parse_config(text).unwrap_err();
        assert!(err.0.iter().any(|e| matches!(e, ConfigError::FractionSum { .. })));
        assert!(err.to_string().contains("mass fractions must sum to 1"));
    }

    #[test]
    fn eps_outside_band() {
        let text = r#"{"problem": "isoperimetric", "fractions": [0.2],
            "schedule": {"stages": [{"n": 100, "eps": 0.1}]}}"#;
        let err = parse_config(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[1/N, 4/N]"), "{msg}");
        assert!(msg.contains("schedule.stages[0].eps"), "{msg}");
        let ok = text.replace(
            "\"n\": 100, \"eps\": 0.1}]",
            "\"n\": 100, \"eps\": 0.1}], \"eps_override\": true",
        );
        parse_config(&ok).unwrap();
    }

    #[test]
    fn unknown_key_reports_path() {
        let text = r#"{"problem": "isoperimetric", "fractions": [0.2],
            "schedule": {"stages": [{"n": 101, "eps": 0.02, "width": 3}]}}"#;
        let err = parse_config(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("schedule.stages[0]"), "{msg}");
        assert!(msg.contains("width"), "{msg}");
    }

    #[test]
    fn collects_several_errors() {
        let text = r#"{"problem": "weighted_isoperimetric", "fractions": [1.5],
            "eta": 0.9, "schedule": {}}"#;
        let err = parse_config(text).unwrap_err();
        assert!(err.0.len() >= 4, "{err}");
    }

    #[test]
    fn periodic_needs_square() {
        let text = r#"{"problem": "isoperimetric", "fractions": [0.2], "boundary": "periodic",
            "domain": {"shape": {"kind": "disk", "center": [0.5, 0.5], "radius": 0.4}},
            "schedule": {"stages": [{"n": 101, "eps": 0.02}]}}"#;
        assert!(parse_config(text).unwrap_err().to_string().contains("periodic"));
    }

    #[test]
    fn band_scales_with_side() {
        let text = r#"{"problem": "isoperimetric", "fractions": [0.02], "domain": {"origin": [-2, -2], "side": 4},
            "schedule": {"stages": [{"n": 101, "eps": 0.08}]}}"#;
        parse_config(text).unwrap();
    }

    fn arb_aniso() -> impl Strategy<Value = AnisotropyKind> {
        prop_oneof![
            Just(AnisotropyKind::Euclidean {}),
            (1.1f64..4.0, 1e-8f64..1e-3).prop_map(|(p, delta)| AnisotropyKind::Lp { p, delta }),
            (0.1f64..3.0, 0.1f64..3.0).prop_map(|(a, b)| AnisotropyKind::Elliptic { a, b }),
            (-3.0f64..3.0).prop_map(|theta| AnisotropyKind::RotatedL1 { theta, delta: 1e-6 }),
            (0.1f64..3.0, 0.1f64..3.0, -3.0f64..3.0).prop_map(|(a, b, theta)| AnisotropyKind::ProductRoot {
                factors: vec![
                    EllipticFactor { a, b, theta },
                    EllipticFactor { a: b, b: a, theta: 0.0 }
                ]
            }),
        ]
    }

    fn arb_config() -> impl Strategy<Value = RunConfig> {
        (
            prop::collection::vec(1u32..20, 1..5),
            arb_aniso(),
            any::<u64>(),
            prop::bool::ANY,
            prop::collection::vec((5usize..400, 1.0f64..4.0), 1..4),
            0.0f64..0.5,
        )
            .prop_map(|(weights, anisotropy, seed, periodic, raw_stages, eta)| {
                let total: u32 = weights.iter().sum();
                let mut fractions: Vec<f64> = weights.iter().map(|&w| w as f64 / total as f64).collect();
                let problem = if fractions.len() == 1 {
                    fractions[0] = 0.3;
                    ProblemKind::Isoperimetric
                } else {
                    ProblemKind::Partition
                };
                let mut ns: Vec<usize> = raw_stages.iter().map(|s| s.0).collect();
                ns.sort_unstable();
                let mut stages: Vec<StageConfig> = ns
                    .iter()
                    .zip(&raw_stages)
                    .map(|(&n, &(_, c))| StageConfig { n, eps: c / n as f64 })
                    .collect();
                for i in 1..stages.len() {
                    stages[i].eps = stages[i].eps.min(stages[i - 1].eps).max(1.0 / stages[i].n as f64);
                }
                RunConfig {
                    problem,
                    phases: Some(fractions.len()),
                    domain: DomainConfig::default(),
                    boundary: if periodic {
                        Boundary::Periodic
                    } else {
                        Boundary::Neumann
                    },
                    anisotropy,
                    well: DoubleWell::Quartic {},
                    fractions,
                    density: None,
                    schedule: ScheduleConfig {
                        stages: Some(stages),
                        generator: None,
                        max_iters: 100,
                        grad_tol: 1e-3,
                        step0: None,
                        eps_override: true,
                        init_cells: 8,
                    },
                    seed,
                    output_dir: PathBuf::from("out"),
                    warm_start: None,
                    eta,
                }
            })
    }

    proptest! {
        #[test]
        fn config_round_trip(cfg in arb_config()) {
            let text = serde_json::to_string_pretty(&cfg).unwrap();
            let back = parse_config(&text).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(back, cfg);
        }
    }
}
