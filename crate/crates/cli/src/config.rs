//! Strict JSON run configuration. Every section has defaults, so an empty
//! object (or no file at all) is a valid configuration.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use deltasl::rules::RuleSum;
use serde::Deserialize;

/// A configuration problem, reported with the offending key (dotted path).
#[derive(Debug)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            key: key.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum CoefficientSpec {
    One(String),
    Sum(Vec<String>),
}

impl Default for CoefficientSpec {
    fn default() -> Self {
        Self::One("zero".into())
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum TGrid {
    Points(Vec<f64>),
    Linspace(Linspace),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Linspace {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Default for TGrid {
    fn default() -> Self {
        Self::Linspace(Linspace {
            start: 0.0,
            stop: 1.0,
            points: 101,
        })
    }
}

impl TGrid {
    pub fn points(&self) -> Vec<f64> {
        match self {
            Self::Points(p) => p.clone(),
            Self::Linspace(l) if l.points == 1 => vec![l.start],
            Self::Linspace(l) => (0..l.points)
                .map(|i| {
                    if i + 1 == l.points {
                        l.stop
                    } else {
                        l.start + (l.stop - l.start) * i as f64 / (l.points - 1) as f64
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProblemConfig {
    pub potential: CoefficientSpec,
    pub weight: CoefficientSpec,
    pub grid_points: usize,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            potential: CoefficientSpec::default(),
            weight: CoefficientSpec::One("const:1".into()),
            grid_points: deltasl::DEFAULT_GRID_POINTS,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumConfig {
    pub count: usize,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self { count: 3 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SurfaceConfig {
    pub t_grid: TGrid,
    pub r_list: Vec<f64>,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self {
            t_grid: TGrid::default(),
            r_list: vec![1e-3, 5e-4],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructConfig {
    /// Surface CSV/JSON path or a closed-form candidate.
    pub surface: Option<String>,
    pub delta: f64,
    pub smoothing: usize,
    /// Ground-truth potential for the round-trip report.
    pub truth: Option<CoefficientSpec>,
}

impl Default for ReconstructConfig {
    fn default() -> Self {
        Self {
            surface: None,
            delta: 0.05,
            smoothing: 0,
            truth: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateConfig {
    pub candidate: Option<String>,
    /// Sampling grid for closed-form candidates.
    pub t_grid: Option<TGrid>,
    pub r_list: Option<Vec<f64>>,
    pub sample_range: [f64; 2],
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            candidate: None,
            t_grid: None,
            r_list: None,
            sample_range: [0.1, 0.9],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeakstarConfig {
    pub t: f64,
    pub r: f64,
    pub n_list: Vec<usize>,
}

impl Default for WeakstarConfig {
    fn default() -> Self {
        Self {
            t: 0.5,
            r: 0.1,
            n_list: vec![4, 8, 16, 32, 64],
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub spectrum: SpectrumConfig,
    pub fef_surface: SurfaceConfig,
    pub reconstruct: ReconstructConfig,
    pub validate_fef: ValidateConfig,
    pub weakstar: WeakstarConfig,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
}

/// A coefficient after path resolution.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficient {
    Rules(RuleSum),
    Csv(PathBuf),
}

impl fmt::Display for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Rules(r) => write!(f, "{r}"),
            Self::Csv(p) => write!(f, "csv:{}", p.display()),
        }
    }
}

/// `λ₁ - a r sin²(πt)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SineLaw {
    pub lambda1: f64,
    pub a: f64,
}

impl SineLaw {
    pub fn eval(&self, t: f64, r: f64) -> f64 {
        self.lambda1 - self.a * r * (PI * t).sin().powi(2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SurfaceSource {
    File(PathBuf),
    SineLaw(SineLaw),
}

/// Parses `sine-law:<lambda1>,<a>`; `lambda1` may be `pi^2`.
fn parse_sine_law(s: &str) -> Option<Result<SineLaw, String>> {
    let args = s.strip_prefix("sine-law:")?;
    let parts: Vec<&str> = args.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Some(Err(format!("`{s}`: expected sine-law:<lambda1>,<a>")));
    }
    let lambda1 = match parts[0] {
        "pi^2" => Ok(PI * PI),
        v => v.parse::<f64>().map_err(|e| format!("`{v}`: {e}")),
    };
    let a = parts[1].parse::<f64>().map_err(|e| format!("`{}`: {e}", parts[1]));
    Some(match (lambda1, a) {
        (Ok(lambda1), Ok(a)) if lambda1.is_finite() && a.is_finite() => Ok(SineLaw { lambda1, a }),
        (Err(e), _) | (_, Err(e)) => Err(e),
        _ => Err(format!("`{s}`: arguments must be finite")),
    })
}

/// Everything a command needs, with paths resolved against the config
/// file's directory.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub potential: Coefficient,
    pub weight: Coefficient,
    pub grid_points: usize,
    pub spectrum_count: usize,
    pub surface_t: Vec<f64>,
    pub surface_r: Vec<f64>,
    pub reconstruct_source: Option<SurfaceSource>,
    pub delta: f64,
    pub smoothing: usize,
    pub truth: Option<Coefficient>,
    pub candidate: Option<SurfaceSource>,
    pub validate_t: Option<Vec<f64>>,
    pub validate_r: Option<Vec<f64>>,
    pub sample_range: (f64, f64),
    pub weakstar: WeakstarConfig,
    pub output_dir: PathBuf,
    pub threads: Option<usize>,
}

pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let key = e.path().to_string();
        let message = e.into_inner().to_string();
        ConfigError::new(key, message)
    })
}

pub fn load(path: Option<&Path>) -> Result<(RunConfig, PathBuf), ConfigError> {
    match path {
        None => Ok((RunConfig::default(), PathBuf::from("."))),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| ConfigError::new("--config", format!("{}: {e}", p.display())))?;
            let base = p
                .parent()
                .filter(|d| !d.as_os_str().is_empty())
                .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
            Ok((parse(&text)?, base))
        }
    }
}

fn resolve_path(base: &Path, key: &str, p: &str) -> Result<PathBuf, ConfigError> {
    let path = base.join(p);
    if !path.is_file() {
        return Err(ConfigError::new(key, format!("file `{}` not found", path.display())));
    }
    Ok(path)
}

fn coefficient(base: &Path, key: &str, spec: &CoefficientSpec) -> Result<Coefficient, ConfigError> {
    match spec {
        CoefficientSpec::One(s) if s.ends_with(".csv") => Ok(Coefficient::Csv(resolve_path(base, key, s)?)),
        CoefficientSpec::One(s) => RuleSum::parse(&[s])
            .map(Coefficient::Rules)
            .map_err(|e| ConfigError::new(key, e.to_string())),
        CoefficientSpec::Sum(v) => RuleSum::parse(v)
            .map(Coefficient::Rules)
            .map_err(|e| ConfigError::new(key, e.to_string())),
    }
}

/// Surface files may be produced by an earlier step of the same pipeline,
/// so their existence is checked by [`SurfaceSource::require`] when used.
pub fn surface_source(base: &Path, key: &str, s: &str) -> Result<SurfaceSource, ConfigError> {
    match parse_sine_law(s) {
        Some(law) => law.map(SurfaceSource::SineLaw).map_err(|e| ConfigError::new(key, e)),
        None => Ok(SurfaceSource::File(base.join(s))),
    }
}

impl SurfaceSource {
    pub fn require(&self, key: &str) -> Result<&Self, ConfigError> {
        match self {
            Self::File(p) if !p.is_file() => Err(ConfigError::new(
                key,
                format!("file `{}` not found", p.display()),
            )),
            _ => Ok(self),
        }
    }
}

fn t_grid(key: &str, grid: &TGrid) -> Result<Vec<f64>, ConfigError> {
    if let TGrid::Linspace(l) = grid {
        if l.points == 0 {
            return Err(ConfigError::new(key, "t grid is empty"));
        }
    }
    let t = grid.points();
    if t.is_empty() {
        return Err(ConfigError::new(key, "t grid is empty"));
    }
    if t.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(ConfigError::new(key, "t values must lie in [0, 1]"));
    }
    if t.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ConfigError::new(key, "t values must be strictly increasing"));
    }
    Ok(t)
}

fn r_list(key: &str, r: &[f64]) -> Result<Vec<f64>, ConfigError> {
    if let Some(v) = r.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
        return Err(ConfigError::new(key, format!("coupling {v} must be finite and >= 0")));
    }
    Ok(r.to_vec())
}

impl RunConfig {
    pub fn resolve(&self, base: &Path) -> Result<Resolved, ConfigError> {
        if self.problem.grid_points < 5 {
            return Err(ConfigError::new("problem.grid_points", "need at least 5 grid points"));
        }
        if self.spectrum.count == 0 {
            return Err(ConfigError::new("spectrum.count", "must be at least 1"));
        }
        let rc = &self.reconstruct;
        if !(rc.delta > 0.0 && rc.delta < 0.5) {
            return Err(ConfigError::new("reconstruct.delta", "must lie in (0, 0.5)"));
        }
        let [lo, hi] = self.validate_fef.sample_range;
        if !(0.0 < lo && lo <= hi && hi < 1.0) {
            return Err(ConfigError::new(
                "validate_fef.sample_range",
                "need 0 < lo <= hi < 1",
            ));
        }
        let ws = &self.weakstar;
        if !(ws.t > 0.0 && ws.t < 1.0) {
            return Err(ConfigError::new("weakstar.t", "must lie in (0, 1)"));
        }
        if !(ws.r >= 0.0 && ws.r.is_finite()) {
            return Err(ConfigError::new("weakstar.r", "must be finite and >= 0"));
        }
        if ws.n_list.is_empty() || ws.n_list.contains(&0) {
            return Err(ConfigError::new("weakstar.n_list", "need positive bump indices"));
        }
        if self.threads == Some(0) {
            return Err(ConfigError::new("threads", "must be at least 1"));
        }

        Ok(Resolved {
            potential: coefficient(base, "problem.potential", &self.problem.potential)?,
            weight: coefficient(base, "problem.weight", &self.problem.weight)?,
            grid_points: self.problem.grid_points,
            spectrum_count: self.spectrum.count,
            surface_t: t_grid("fef_surface.t_grid", &self.fef_surface.t_grid)?,
            surface_r: r_list("fef_surface.r_list", &self.fef_surface.r_list)?,
            reconstruct_source: rc
                .surface
                .as_deref()
                .map(|s| surface_source(base, "reconstruct.surface", s))
                .transpose()?,
            delta: rc.delta,
            smoothing: rc.smoothing,
            truth: rc
                .truth
                .as_ref()
                .map(|t| coefficient(base, "reconstruct.truth", t))
                .transpose()?,
            candidate: self
                .validate_fef
                .candidate
                .as_deref()
                .map(|s| surface_source(base, "validate_fef.candidate", s))
                .transpose()?,
            validate_t: self
                .validate_fef
                .t_grid
                .as_ref()
                .map(|g| t_grid("validate_fef.t_grid", g))
                .transpose()?,
            validate_r: self
                .validate_fef
                .r_list
                .as_deref()
                .map(|r| r_list("validate_fef.r_list", r))
                .transpose()?,
            sample_range: (lo, hi),
            weakstar: ws.clone(),
            output_dir: self.output_dir.as_ref().map_or_else(|| PathBuf::from("."), |d| base.join(d)),
            threads: self.threads,
        })
    }
}
