//! Run configuration files (TOML) and the bundled example configurations.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::domain::{DomainKind, DomainSpec};
use crate::eigen::EigenOptions;
use crate::error::{Error, Result};
use crate::optimizer::{InitPhi, InnerParams, ObjectiveSpec, Potential, RieszMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Adaptive,
    Uniform,
}

/// How marked elements are refined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Refinement {
    /// One newest-vertex bisection of each marked element plus closure.
    #[default]
    Single,
    /// All three edges of each marked element bisected plus closure.
    AllEdges,
}

/// What the optimizer state carries to a refined mesh besides `φ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Restart {
    /// Keep `μ` and `β`.
    Continue,
    /// Keep `μ`, reset `β` to `β_0`.
    #[default]
    ResetPenalty,
    /// Reset both to their initial values.
    Cold,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AfemParams {
    /// Number of meshes in the adaptive loop.
    pub k: usize,
    /// Dörfler parameters `θ_0..θ_l`.
    pub thetas: Vec<f64>,
    pub mode: Mode,
    pub refinement: Refinement,
    pub vertex_budget: Option<usize>,
    pub estimator_tol: Option<f64>,
    /// Outer iterations per mesh in uniform mode (defaults to `inner.n`).
    pub uniform_iterations: Option<usize>,
    pub restart: Restart,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputParams {
    pub directory: PathBuf,
    /// Write a VTK snapshot every this many meshes (0 disables).
    pub vtk_every: usize,
    pub csv: bool,
    pub png: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub domain: DomainSpec,
    pub objective: ObjectiveSpec,
    pub afem: AfemParams,
    pub inner: InnerParams,
    pub init_phi: InitPhi,
    pub eigensolver: EigenOptions,
    pub outputs: OutputParams,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    name: Option<String>,
    domain: RawDomain,
    objective: RawObjective,
    afem: RawAfem,
    inner: RawInner,
    init_phi: RawInit,
    #[serde(default)]
    eigensolver: RawEigen,
    #[serde(default)]
    outputs: RawOutputs,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    resolution: Option<usize>,
    #[serde(default)]
    snap_boundary: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vertices: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    segments: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObjective {
    indices: Vec<usize>,
    weights: Vec<f64>,
    gamma: f64,
    epsilon: f64,
    alpha: f64,
    volume_fraction: f64,
    #[serde(default)]
    potential: RawPotential,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawPotential {
    #[default]
    DoubleWell,
    DoubleObstacle,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAfem {
    k: usize,
    thetas: Vec<f64>,
    #[serde(default)]
    mode: Mode,
    #[serde(default)]
    refinement: Refinement,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vertex_budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    estimator_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    uniform_iterations: Option<usize>,
    #[serde(default)]
    restart: Restart,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInner {
    n: usize,
    m: usize,
    mu0: f64,
    beta0: f64,
    gamma_tilde: f64,
    xi: f64,
    zeta: f64,
    #[serde(default)]
    gradient_mass: RawRiesz,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawRiesz {
    #[default]
    Consistent,
    Lumped,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInit {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEigen {
    #[serde(default = "default_tol")]
    tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_iter: Option<usize>,
    #[serde(default = "default_dense")]
    dense_threshold: usize,
    #[serde(default = "default_eigen_seed")]
    seed: u64,
}

fn default_tol() -> f64 {
    EigenOptions::default().tol
}

fn default_dense() -> usize {
    EigenOptions::default().dense_threshold
}

fn default_eigen_seed() -> u64 {
    EigenOptions::default().seed
}

impl Default for RawEigen {
    fn default() -> Self {
        RawEigen { tol: default_tol(), max_iter: None, dense_threshold: default_dense(), seed: default_eigen_seed() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutputs {
    #[serde(default = "default_dir")]
    directory: PathBuf,
    #[serde(default = "one")]
    vtk_every: usize,
    #[serde(default = "yes")]
    csv: bool,
    #[serde(default = "yes")]
    png: bool,
}

fn default_dir() -> PathBuf {
    PathBuf::from("runs")
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

impl Default for RawOutputs {
    fn default() -> Self {
        RawOutputs { directory: default_dir(), vtk_every: 1, csv: true, png: true }
    }
}

fn need<T: Copy>(v: Option<T>, path: &str, kind: &str) -> Result<T> {
    v.ok_or_else(|| Error::config(path, format!("required for domain kind `{kind}`")))
}

fn positive(v: f64, path: &str) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::config(path, format!("must be positive, got {v}")))
    }
}

impl RawDomain {
    fn build(self) -> Result<DomainSpec> {
        let k = self.kind.as_str();
        let allowed: &[&str] = match k {
            "unit_square" | "l_shape" => &["resolution"],
            "rectangle" => &["resolution", "x", "y"],
            "polygon" => &["resolution", "vertices"],
            "circle" => &["radius", "segments"],
            "annulus" => &["r1", "r2", "segments"],
            "dumbbell" => &["half_width", "segments"],
            other => return Err(Error::config("domain.kind", format!("unknown domain kind `{other}`"))),
        };
        let present = [
            ("resolution", self.resolution.is_some()),
            ("x", self.x.is_some()),
            ("y", self.y.is_some()),
            ("vertices", self.vertices.is_some()),
            ("radius", self.radius.is_some()),
            ("r1", self.r1.is_some()),
            ("r2", self.r2.is_some()),
            ("half_width", self.half_width.is_some()),
            ("segments", self.segments.is_some()),
        ];
        for (key, is_set) in present {
            if is_set && !allowed.contains(&key) {
                return Err(Error::config(format!("domain.{key}"), format!("not used by domain kind `{k}`")));
            }
        }
        let kind = match k {
            "unit_square" => DomainKind::UnitSquare,
            "l_shape" => DomainKind::LShape,
            "rectangle" => DomainKind::Rectangle { x: need(self.x, "domain.x", k)?, y: need(self.y, "domain.y", k)? },
            "polygon" => DomainKind::Polygon {
                vertices: self.vertices.clone().ok_or_else(|| Error::config("domain.vertices", "required for polygon"))?,
            },
            "circle" => DomainKind::Circle {
                radius: need(self.radius, "domain.radius", k)?,
                segments: need(self.segments, "domain.segments", k)?,
            },
            "annulus" => DomainKind::Annulus {
                r1: need(self.r1, "domain.r1", k)?,
                r2: need(self.r2, "domain.r2", k)?,
                segments: need(self.segments, "domain.segments", k)?,
            },
            _ => DomainKind::Dumbbell {
                half_width: need(self.half_width, "domain.half_width", k)?,
                segments: need(self.segments, "domain.segments", k)?,
            },
        };
        let resolution = if allowed.contains(&"resolution") { need(self.resolution, "domain.resolution", k)? } else { 0 };
        let spec = DomainSpec { kind, resolution, snap_boundary: self.snap_boundary };
        spec.validate().map_err(|e| Error::config("domain", e.to_string()))?;
        Ok(spec)
    }

    fn from_spec(spec: &DomainSpec) -> Self {
        let mut raw = RawDomain {
            kind: String::new(),
            resolution: None,
            snap_boundary: spec.snap_boundary,
            x: None,
            y: None,
            vertices: None,
            radius: None,
            r1: None,
            r2: None,
            half_width: None,
            segments: None,
        };
        match &spec.kind {
            DomainKind::UnitSquare => raw.kind = "unit_square".into(),
            DomainKind::LShape => raw.kind = "l_shape".into(),
            DomainKind::Rectangle { x, y } => {
                raw.kind = "rectangle".into();
                raw.x = Some(*x);
                raw.y = Some(*y);
            }
            DomainKind::Polygon { vertices } => {
                raw.kind = "polygon".into();
                raw.vertices = Some(vertices.clone());
            }
            DomainKind::Circle { radius, segments } => {
                raw.kind = "circle".into();
                raw.radius = Some(*radius);
                raw.segments = Some(*segments);
            }
            DomainKind::Annulus { r1, r2, segments } => {
                raw.kind = "annulus".into();
                raw.r1 = Some(*r1);
                raw.r2 = Some(*r2);
                raw.segments = Some(*segments);
            }
            DomainKind::Dumbbell { half_width, segments } => {
                raw.kind = "dumbbell".into();
                raw.half_width = Some(*half_width);
                raw.segments = Some(*segments);
            }
        }
        if matches!(
            spec.kind,
            DomainKind::UnitSquare | DomainKind::LShape | DomainKind::Rectangle { .. } | DomainKind::Polygon { .. }
        ) {
            raw.resolution = Some(spec.resolution);
        }
        raw
    }
}

impl RawConfig {
    fn build(self) -> Result<RunConfig> {
        let domain = self.domain.build()?;

        let o = self.objective;
        let potential = match o.potential {
            RawPotential::DoubleWell => Potential::DoubleWell,
            RawPotential::DoubleObstacle => Potential::DoubleObstacle,
        };
        if o.indices.is_empty() || o.indices.len() > 3 {
            return Err(Error::config("objective.indices", "must list 1 to 3 eigenvalue indices"));
        }
        if o.indices[0] == 0 || o.indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("objective.indices", "must be positive and strictly increasing"));
        }
        if o.weights.len() != o.indices.len() {
            return Err(Error::config("objective.weights", "needs one weight per index"));
        }
        let objective = ObjectiveSpec {
            indices: o.indices,
            weights: o.weights,
            gamma: positive(o.gamma, "objective.gamma")?,
            epsilon: positive(o.epsilon, "objective.epsilon")?,
            alpha: positive(o.alpha, "objective.alpha")?,
            volume_fraction: o.volume_fraction,
            potential,
        };
        if !(objective.volume_fraction > 0.0 && objective.volume_fraction < 1.0) {
            return Err(Error::config(
                "objective.volume_fraction",
                format!("must lie in (0,1), got {}", objective.volume_fraction),
            ));
        }

        let a = self.afem;
        if a.k == 0 {
            return Err(Error::config("afem.k", "must be at least 1"));
        }
        if a.thetas.len() != objective.indices.len() + 1 {
            return Err(Error::config(
                "afem.thetas",
                format!("needs {} values (one per estimator)", objective.indices.len() + 1),
            ));
        }
        for (j, &t) in a.thetas.iter().enumerate() {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::config(format!("afem.thetas[{j}]"), format!("must lie in (0,1], got {t}")));
            }
        }
        if let Some(tol) = a.estimator_tol {
            positive(tol, "afem.estimator_tol")?;
        }
        if a.uniform_iterations == Some(0) {
            return Err(Error::config("afem.uniform_iterations", "must be at least 1"));
        }

        let i = self.inner;
        if i.n == 0 {
            return Err(Error::config("inner.n", "must be at least 1"));
        }
        if i.m == 0 {
            return Err(Error::config("inner.m", "must be at least 1"));
        }
        if !i.mu0.is_finite() {
            return Err(Error::config("inner.mu0", "must be finite"));
        }
        if !(i.xi > 0.0 && i.xi < 1.0) {
            return Err(Error::config("inner.xi", format!("must lie in (0,1), got {}", i.xi)));
        }
        let inner = InnerParams {
            outer_iterations: i.n,
            flow_steps: i.m,
            mu0: i.mu0,
            beta0: positive(i.beta0, "inner.beta0")?,
            gamma_tilde: positive(i.gamma_tilde, "inner.gamma_tilde")?,
            xi: i.xi,
            zeta: positive(i.zeta, "inner.zeta")?,
            riesz: match i.gradient_mass {
                RawRiesz::Consistent => RieszMap::Consistent,
                RawRiesz::Lumped => RieszMap::Lumped,
            },
        };

        let init_phi = match self.init_phi.kind.as_str() {
            "constant" => {
                let c = self.init_phi.value.ok_or_else(|| Error::config("init_phi.value", "required for constant"))?;
                if !(0.0..=1.0).contains(&c) {
                    return Err(Error::config("init_phi.value", format!("must lie in [0,1], got {c}")));
                }
                InitPhi::Constant(c)
            }
            "random" => InitPhi::Random {
                seed: self.init_phi.seed.ok_or_else(|| Error::config("init_phi.seed", "required for random"))?,
            },
            "cosine" => InitPhi::Cosine,
            other => return Err(Error::config("init_phi.kind", format!("unknown initializer `{other}`"))),
        };

        let e = self.eigensolver;
        let eigensolver = EigenOptions {
            tol: positive(e.tol, "eigensolver.tol")?,
            max_iter: e.max_iter,
            dense_threshold: e.dense_threshold,
            seed: e.seed,
        };

        Ok(RunConfig {
            name: self.name.unwrap_or_else(|| "run".into()),
            domain,
            objective,
            afem: AfemParams {
                k: a.k,
                thetas: a.thetas,
                mode: a.mode,
                refinement: a.refinement,
                vertex_budget: a.vertex_budget,
                estimator_tol: a.estimator_tol,
                uniform_iterations: a.uniform_iterations,
                restart: a.restart,
            },
            inner,
            init_phi,
            eigensolver,
            outputs: OutputParams {
                directory: self.outputs.directory,
                vtk_every: self.outputs.vtk_every,
                csv: self.outputs.csv,
                png: self.outputs.png,
            },
        })
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::config("", e.to_string()))?;
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let mut path = e.path().to_string();
        let msg = e.inner().message().to_string();
        if let Some(field) = msg.strip_prefix("missing field `").and_then(|s| s.split('`').next()) {
            path = if path == "." || path.is_empty() { field.to_string() } else { format!("{path}.{field}") };
        }
        Error::config(path, msg)
    })?;
    raw.build()
}

impl RunConfig {
    pub fn to_toml(&self) -> String {
        let raw = RawConfig {
            name: Some(self.name.clone()),
            domain: RawDomain::from_spec(&self.domain),
            objective: RawObjective {
                indices: self.objective.indices.clone(),
                weights: self.objective.weights.clone(),
                gamma: self.objective.gamma,
                epsilon: self.objective.epsilon,
                alpha: self.objective.alpha,
                volume_fraction: self.objective.volume_fraction,
                potential: match self.objective.potential {
                    Potential::DoubleWell => RawPotential::DoubleWell,
                    Potential::DoubleObstacle => RawPotential::DoubleObstacle,
                },
            },
            afem: RawAfem {
                k: self.afem.k,
                thetas: self.afem.thetas.clone(),
                mode: self.afem.mode,
                refinement: self.afem.refinement,
                vertex_budget: self.afem.vertex_budget,
                estimator_tol: self.afem.estimator_tol,
                uniform_iterations: self.afem.uniform_iterations,
                restart: self.afem.restart,
            },
            inner: RawInner {
                n: self.inner.outer_iterations,
                m: self.inner.flow_steps,
                mu0: self.inner.mu0,
                beta0: self.inner.beta0,
                gamma_tilde: self.inner.gamma_tilde,
                xi: self.inner.xi,
                zeta: self.inner.zeta,
                gradient_mass: match self.inner.riesz {
                    RieszMap::Consistent => RawRiesz::Consistent,
                    RieszMap::Lumped => RawRiesz::Lumped,
                },
            },
            init_phi: match self.init_phi {
                InitPhi::Constant(c) => RawInit { kind: "constant".into(), value: Some(c), seed: None },
                InitPhi::Random { seed } => RawInit { kind: "random".into(), value: None, seed: Some(seed) },
                InitPhi::Cosine => RawInit { kind: "cosine".into(), value: None, seed: None },
            },
            eigensolver: RawEigen {
                tol: self.eigensolver.tol,
                max_iter: self.eigensolver.max_iter,
                dense_threshold: self.eigensolver.dense_threshold,
                seed: self.eigensolver.seed,
            },
            outputs: RawOutputs {
                directory: self.outputs.directory.clone(),
                vtk_every: self.outputs.vtk_every,
                csv: self.outputs.csv,
                png: self.outputs.png,
            },
        };
        toml::to_string(&raw).expect("config serializes")
    }

    /// Outer iterations per mesh for the configured mode.
    pub fn iterations_per_mesh(&self) -> usize {
        match self.afem.mode {
            Mode::Adaptive => self.inner.outer_iterations,
            Mode::Uniform => self.afem.uniform_iterations.unwrap_or(self.inner.outer_iterations),
        }
    }

    /// Replaces the seed of a random initial field.
    pub fn with_seed(mut self, seed: u64) -> Self {
        if let InitPhi::Random { .. } = self.init_phi {
            self.init_phi = InitPhi::Random { seed };
        }
        self
    }
}

pub const BUNDLED: &[(&str, &str)] = &[
    ("example1a", include_str!("../configs/example1a.toml")),
    ("example1b", include_str!("../configs/example1b.toml")),
    ("example2", include_str!("../configs/example2.toml")),
    ("example3a", include_str!("../configs/example3a.toml")),
    ("example3b", include_str!("../configs/example3b.toml")),
    ("example4a", include_str!("../configs/example4a.toml")),
    ("example4b", include_str!("../configs/example4b.toml")),
    ("example5a", include_str!("../configs/example5a.toml")),
    ("example5b", include_str!("../configs/example5b.toml")),
    ("example6a", include_str!("../configs/example6a.toml")),
    ("example6b", include_str!("../configs/example6b.toml")),
    ("example6c", include_str!("../configs/example6c.toml")),
    ("example7a", include_str!("../configs/example7a.toml")),
    ("example7b", include_str!("../configs/example7b.toml")),
];

pub fn bundled_text(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn bundled(name: &str) -> Result<RunConfig> {
    let text = bundled_text(name).ok_or_else(|| Error::config("", format!("no bundled config named `{name}`")))?;
    parse_config(text)
}

/// Loads a bundled config by name, or else the file at `name_or_path`.
pub fn load_config(name_or_path: &str) -> Result<RunConfig> {
    match bundled_text(name_or_path) {
        Some(text) => parse_config(text),
        None => parse_config(&std::fs::read_to_string(name_or_path)?),
    }
}
