//! Experiment configuration: the TOML schema and its resolution into
//! runnable checks. Every error carries the line and the field it refers to.

use motc::diffusion::{InitialLaw, SimConfig};
use motc::field::ScalarField;
use motc::geometry::{BoundaryProfile, DriftField, ManifoldKind, ModelManifold};
use motc::linalg::{Point, Vector};
use motc::pathlaw::PathDensity;
use motc::transport::{Method, SolverOptions};
use motc::verify::{CheckOptions, ContractionInput, NonconvexInput, SffOptions};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::sync::Arc;
use toml::Spanned;

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    /// 1-based line in the source, when known.
    pub line: Option<usize>,
    /// Dotted path of the offending field, e.g. `checks[1].f`.
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: field `{}`: {}", self.field, self.message),
            None => write!(f, "field `{}`: {}", self.field, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

type CResult<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: Option<String>,
    pub description: Option<String>,
    /// Output directory; `--out` takes precedence.
    pub out: Option<String>,
    pub manifold: Spanned<ManifoldSpec>,
    pub drift: Option<Spanned<DriftSpec>>,
    /// Diffusion coefficient `psi` of the generator `psi^2 (Δ + Z)`.
    pub psi: Option<Spanned<String>>,
    pub sim: Spanned<SimSpec>,
    #[serde(default)]
    pub solver: Option<Spanned<SolverSpec>>,
    #[serde(default)]
    pub points: BTreeMap<String, Spanned<Vec<f64>>>,
    #[serde(default)]
    pub measures: BTreeMap<String, Spanned<MeasureSpec>>,
    #[serde(default)]
    pub profiles: BTreeMap<String, Spanned<ProfileSpec>>,
    #[serde(default)]
    pub functions: BTreeMap<String, Spanned<String>>,
    #[serde(default)]
    pub densities: BTreeMap<String, Spanned<DensitySpec>>,
    #[serde(default)]
    pub checks: Vec<Spanned<CheckSpec>>,
    #[serde(default)]
    pub ensembles: Vec<Spanned<EnsembleSpec>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldSpec {
    pub kind: String,
    pub dim: usize,
    pub radius: Option<f64>,
    pub angle: Option<f64>,
    pub inner: Option<f64>,
    pub outer: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSpec {
    pub kind: String,
    pub rate: Option<f64>,
    /// A vector for `linear-potential`, a number for `height-potential`.
    pub coef: Option<toml::Value>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    #[serde(rename = "T")]
    pub t: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    #[serde(default)]
    pub seed: u64,
    pub hitting_radius: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub method: Option<String>,
    pub max_exact_entries: Option<usize>,
    pub gap_target: Option<f64>,
    pub bootstrap: Option<usize>,
    pub bootstrap_atoms: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    pub points: Vec<Vec<f64>>,
    /// Uniform when omitted.
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub sigma: f64,
    pub gamma: f64,
    pub k: f64,
    pub r: f64,
    /// Boundary injectivity radius; taken from the manifold when omitted.
    pub inj: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySpec {
    pub kind: String,
    pub f: Option<String>,
    pub times: Option<Vec<f64>>,
    pub factors: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    #[serde(rename = "type")]
    pub kind: String,
    pub label: Option<String>,
    pub at: Option<String>,
    pub f: Option<String>,
    pub start: Option<String>,
    pub density: Option<String>,
    pub x: Option<String>,
    pub y: Option<String>,
    pub mu: Option<String>,
    pub nu: Option<String>,
    pub pair: Option<Vec<String>>,
    pub profile: Option<String>,
    pub p: Option<f64>,
    pub h: Option<f64>,
    pub c_mu: Option<f64>,
    #[serde(rename = "T")]
    pub t: Option<f64>,
    pub n_steps: Option<usize>,
    pub n_paths: Option<usize>,
    pub grid_refinement: Option<bool>,
    pub power_scale: Option<bool>,
    pub t0: Option<f64>,
    pub levels: Option<usize>,
    pub steps_per_t: Option<usize>,
    pub order: Option<usize>,
    pub tolerance: Option<f64>,
    pub radius: Option<f64>,
}

impl CheckSpec {
    fn present(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        macro_rules! mark {
            ($($field:ident => $key:literal),*) => { $(if self.$field.is_some() { v.push($key); })* };
        }
        mark!(at => "at", f => "f", start => "start", density => "density", x => "x", y => "y", mu => "mu", nu => "nu",
            pair => "pair", profile => "profile", p => "p", h => "h", c_mu => "c_mu", t => "T", n_steps => "n_steps",
            n_paths => "n_paths", grid_refinement => "grid_refinement", power_scale => "power_scale", t0 => "t0",
            levels => "levels", steps_per_t => "steps_per_t", order => "order", tolerance => "tolerance", radius => "radius");
        v
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    /// A point or measure name.
    pub start: String,
    /// File name inside the output directory.
    pub file: String,
    /// `motc1` or `csv`; inferred from the extension when omitted.
    pub format: Option<String>,
    /// `full` (default) or `endpoint`.
    pub record: Option<String>,
    pub n_paths: Option<usize>,
}

/// Check types with the fields each accepts beyond `type` and `label`.
pub const CHECK_TYPES: &[(&str, &[&str])] = &[
    ("endpoint-talagrand", &["at", "f", "T", "n_steps", "n_paths", "power_scale"]),
    ("pathspace-talagrand", &["start", "density", "T", "n_steps", "n_paths", "grid_refinement"]),
    ("marginal-contraction", &["x", "y", "mu", "nu", "p", "T", "n_steps", "n_paths", "grid_refinement", "power_scale"]),
    ("composite", &["mu", "density", "c_mu", "T", "n_steps", "n_paths", "grid_refinement", "power_scale"]),
    ("variable-coefficient", &["start", "density", "pair", "T", "n_steps", "n_paths", "grid_refinement"]),
    ("nonconvex", &["f", "profile", "start", "density", "pair", "T", "n_steps", "n_paths", "grid_refinement"]),
    ("logsobolev", &["at", "f", "T", "n_steps", "n_paths"]),
    ("poincare", &["at", "f", "T", "n_steps", "n_paths"]),
    ("gradient-estimate", &["at", "f", "h", "T", "n_steps", "n_paths"]),
    ("sff-asymptotics", &["at", "f", "p", "t0", "levels", "steps_per_t", "n_paths", "order", "tolerance", "radius"]),
    ("variance-expansion", &["at", "f", "t0", "levels", "steps_per_t", "n_paths", "order", "radius"]),
    ("profile-constants", &["profile", "T"]),
];

/// A check ready to run.
#[derive(Clone, Debug)]
pub struct ResolvedCheck {
    pub label: String,
    pub kind: String,
    pub task: Task,
    pub opts: CheckOptions,
}

#[derive(Clone, Debug)]
pub enum Task {
    EndpointTalagrand { o: Point, f: ScalarField },
    PathspaceTalagrand { start: InitialLaw, density: PathDensity },
    Contraction { input: ContractionInput, p: f64 },
    Composite { points: Vec<Point>, masses: Vec<f64>, density: PathDensity, c_mu: Option<f64> },
    VariableCoefficient { start: InitialLaw, density: PathDensity, pair: Option<(Point, Point)> },
    Nonconvex(NonconvexInput),
    LogSobolev { o: Point, f: ScalarField },
    Poincare { o: Point, f: ScalarField },
    Gradient { o: Point, f: ScalarField, h: f64 },
    Sff { o: Point, f: ScalarField, opts: SffOptions },
    Variance { o: Point, f: ScalarField, opts: SffOptions },
    ProfileConstants { name: String, profile: Arc<BoundaryProfile>, t: f64 },
}

#[derive(Clone, Debug)]
pub struct EnsembleJob {
    pub start: InitialLaw,
    pub file: String,
    pub csv: bool,
    pub full: bool,
    pub sim: SimConfig,
}

/// A validated experiment.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub name: String,
    pub out: Option<String>,
    pub manifold: ModelManifold,
    pub sim: SimConfig,
    pub checks: Vec<ResolvedCheck>,
    pub ensembles: Vec<EnsembleJob>,
}

/// Settings from the command line that override the file.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
}

fn line_of(src: &str, offset: usize) -> usize {
    src[..offset.min(src.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Key on a line such as `  n_steps = 3`, or the header of `[a.b]`.
fn key_on_line(line: &str) -> Option<String> {
    let t = line.trim();
    if t.starts_with('[') {
        return Some(t.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    }
    let (k, _) = t.split_once('=')?;
    Some(k.trim().trim_matches('"').to_string())
}

/// Dotted path of the table containing `line` (1-based), with the index of
/// arrays of tables.
fn table_path(src: &str, line: usize) -> String {
    let lines: Vec<&str> = src.lines().collect();
    for i in (0..line.min(lines.len())).rev() {
        let t = lines[i].trim();
        if let Some(name) = t.strip_prefix("[[").and_then(|s| s.split("]]").next()) {
            let name = name.trim();
            let idx = lines[..i].iter().filter(|l| l.trim().strip_prefix("[[").and_then(|s| s.split("]]").next()).map(str::trim) == Some(name)).count();
            return format!("{name}[{idx}]");
        }
        if let Some(name) = t.strip_prefix('[').and_then(|s| s.split(']').next()) {
            return name.trim().to_string();
        }
    }
    String::new()
}

fn join(table: &str, key: &str) -> String {
    match (table.is_empty(), key.is_empty()) {
        (true, _) => key.to_string(),
        (_, true) => table.to_string(),
        _ => format!("{table}.{key}"),
    }
}

fn from_toml_error(src: &str, e: &toml::de::Error) -> ConfigError {
    let message = e.message().trim().to_string();
    match e.span() {
        Some(span) => {
            let line = line_of(src, span.start);
            let text = src.lines().nth(line - 1).unwrap_or("");
            let key = key_on_line(text).unwrap_or_default();
            let table = table_path(src, line);
            let field = if text.trim_start().starts_with('[') { key } else { join(&table, &key) };
            ConfigError { line: Some(line), field, message }
        }
        None => ConfigError { line: None, field: String::new(), message },
    }
}

/// Locates fields inside spanned tables of one source text.
struct Locator<'a> {
    src: &'a str,
}

impl Locator<'_> {
    /// Error at `field` of the table whose span starts at `span`: the line
    /// of `field = ...` before the next table header, else the table line.
    fn at(&self, span: Range<usize>, field: &str, message: impl Into<String>) -> ConfigError {
        let first = line_of(self.src, span.start);
        let table = table_path(self.src, first);
        let line = self
            .src
            .lines()
            .enumerate()
            .skip(first - 1)
            .enumerate()
            .take_while(|(k, (_, l))| *k == 0 || !l.trim_start().starts_with('['))
            .find(|(_, (_, l))| !l.trim_start().starts_with('[') && key_on_line(l).as_deref() == Some(field))
            .map(|(_, (i, _))| i + 1)
            .unwrap_or(first);
        ConfigError { line: Some(line), field: join(&table, field), message: message.into() }
    }

    fn entry(&self, span: Range<usize>, table: &str, name: &str, message: impl Into<String>) -> ConfigError {
        ConfigError { line: Some(line_of(self.src, span.start)), field: format!("{table}.{name}"), message: message.into() }
    }
}

pub fn parse(src: &str) -> CResult<ExperimentConfig> {
    toml::from_str(src).map_err(|e| from_toml_error(src, &e))
}

/// Parses and resolves a configuration text.
pub fn load(src: &str, ov: Overrides) -> CResult<Experiment> {
    let cfg = parse(src)?;
    Resolver::new(src, &cfg, ov)?.resolve()
}

struct Resolver<'a> {
    loc: Locator<'a>,
    cfg: &'a ExperimentConfig,
    m: ModelManifold,
    sim: SimConfig,
    solver: SolverOptions,
    profiles: BTreeMap<String, Arc<BoundaryProfile>>,
    points: BTreeMap<String, Point>,
}

fn need<T: Clone>(v: &Option<T>, loc: &Locator, span: Range<usize>, field: &str, what: &str) -> CResult<T> {
    v.clone().ok_or_else(|| loc.at(span, field, format!("`{field}` is required for {what}")))
}

impl<'a> Resolver<'a> {
    fn new(src: &'a str, cfg: &'a ExperimentConfig, ov: Overrides) -> CResult<Self> {
        let loc = Locator { src };
        let m = build_manifold(&loc, cfg)?;
        let s = cfg.sim.get_ref();
        let mut sim = SimConfig::new(s.t, s.n_steps, s.n_paths, ov.seed.unwrap_or(s.seed));
        sim.hitting_radius = s.hitting_radius;
        sim.validate().map_err(|e| loc.at(cfg.sim.span(), "T", e.to_string()))?;
        let solver = build_solver(&loc, cfg.solver.as_ref(), sim.seed)?;
        let mut profiles = BTreeMap::new();
        for (name, p) in &cfg.profiles {
            let s = p.get_ref();
            let inj = match s.inj {
                Some(v) => v,
                None => m.boundary_injectivity_radius().map_err(|e| loc.entry(p.span(), "profiles", name, e.to_string()))?,
            };
            let prof = BoundaryProfile::for_boundary_injectivity(s.sigma, s.gamma, s.k, s.r, m.dim(), inj)
                .map_err(|e| loc.entry(p.span(), "profiles", name, e.to_string()))?;
            profiles.insert(name.clone(), Arc::new(prof));
        }
        let mut points = BTreeMap::new();
        points.insert("base".to_string(), m.base_point());
        for (name, p) in &cfg.points {
            if name == "base" {
                return Err(loc.entry(p.span(), "points", name, "`base` is reserved for the base point of the manifold"));
            }
            let x = m.point(p.get_ref()).map_err(|e| loc.entry(p.span(), "points", name, e.to_string()))?;
            points.insert(name.clone(), x);
        }
        Ok(Self { loc, cfg, m, sim, solver, profiles, points })
    }

    fn resolve(self) -> CResult<Experiment> {
        let mut checks = Vec::with_capacity(self.cfg.checks.len());
        for (i, c) in self.cfg.checks.iter().enumerate() {
            checks.push(self.check(i, c)?);
        }
        let mut labels = BTreeMap::new();
        for (c, spec) in checks.iter().zip(&self.cfg.checks) {
            if labels.insert(c.label.clone(), ()).is_some() {
                return Err(self.loc.at(spec.span(), "label", format!("duplicate check label `{}`", c.label)));
            }
        }
        let mut ensembles = Vec::new();
        for e in &self.cfg.ensembles {
            ensembles.push(self.ensemble(e)?);
        }
        Ok(Experiment {
            name: self.cfg.name.clone().unwrap_or_else(|| "experiment".into()),
            out: self.cfg.out.clone(),
            manifold: self.m,
            sim: self.sim,
            checks,
            ensembles,
        })
    }

    fn function(&self, span: Range<usize>, field: &str, src: &str) -> CResult<ScalarField> {
        let text = match self.cfg.functions.get(src) {
            Some(f) => f.get_ref().as_str(),
            None => src,
        };
        let f = ScalarField::parse_with(text, &self.profiles).map_err(|e| self.loc.at(span.clone(), field, e.to_string()))?;
        f.validate_for(&self.m).map_err(|e| self.loc.at(span, field, e.to_string()))?;
        Ok(f)
    }

    fn point(&self, span: Range<usize>, field: &str, name: &str) -> CResult<Point> {
        self.points.get(name).copied().ok_or_else(|| {
            let known: Vec<&str> = self.points.keys().map(String::as_str).collect();
            self.loc.at(span, field, format!("unknown point `{name}` (known: {})", known.join(", ")))
        })
    }

    fn measure(&self, span: Range<usize>, field: &str, name: &str) -> CResult<(Vec<Point>, Vec<f64>)> {
        let Some(spec) = self.cfg.measures.get(name) else {
            let known: Vec<&str> = self.cfg.measures.keys().map(String::as_str).collect();
            return Err(self.loc.at(span, field, format!("unknown measure `{name}` (known: {})", known.join(", "))));
        };
        let s = spec.get_ref();
        let err = |msg: String| self.loc.entry(spec.span(), "measures", name, msg);
        if s.points.is_empty() {
            return Err(err("a measure needs at least one point".into()));
        }
        let points = s.points.iter().map(|c| self.m.point(c)).collect::<motc::Result<Vec<_>>>().map_err(|e| err(e.to_string()))?;
        let weights = match &s.weights {
            Some(w) if w.len() != points.len() => return Err(err(format!("{} weights for {} points", w.len(), points.len()))),
            Some(w) if w.iter().any(|v| !(*v >= 0.0)) || !(w.iter().sum::<f64>() > 0.0) => {
                return Err(err("weights must be nonnegative with a positive sum".into()))
            }
            Some(w) => {
                let total: f64 = w.iter().sum();
                w.iter().map(|v| v / total).collect()
            }
            None => vec![1.0 / points.len() as f64; points.len()],
        };
        Ok((points, weights))
    }

    fn start(&self, span: Range<usize>, field: &str, name: &str) -> CResult<InitialLaw> {
        if self.points.contains_key(name) {
            return Ok(InitialLaw::Dirac(self.point(span, field, name)?));
        }
        if self.cfg.measures.contains_key(name) {
            let (points, weights) = self.measure(span, field, name)?;
            return Ok(InitialLaw::Atoms { points, weights });
        }
        Err(self.loc.at(span, field, format!("`{name}` is neither a point nor a measure")))
    }

    fn density(&self, span: Range<usize>, field: &str, name: &str) -> CResult<PathDensity> {
        let Some(spec) = self.cfg.densities.get(name) else {
            let known: Vec<&str> = self.cfg.densities.keys().map(String::as_str).collect();
            return Err(self.loc.at(span, field, format!("unknown density `{name}` (known: {})", known.join(", "))));
        };
        let s = spec.get_ref();
        let sp = spec.span();
        match s.kind.as_str() {
            "endpoint" => {
                if s.times.is_some() || s.factors.is_some() {
                    return Err(self.loc.at(sp, "times", "an endpoint density takes only `f`"));
                }
                let f = need(&s.f, &self.loc, sp.clone(), "f", "an endpoint density")?;
                Ok(PathDensity::endpoint(self.function(sp, "f", &f)?))
            }
            "window" => {
                if s.f.is_some() {
                    return Err(self.loc.at(sp, "f", "a window density takes `times` and `factors`"));
                }
                let times = need(&s.times, &self.loc, sp.clone(), "times", "a window density")?;
                let factors = need(&s.factors, &self.loc, sp.clone(), "factors", "a window density")?;
                let fs = factors.iter().map(|f| self.function(sp.clone(), "factors", f)).collect::<CResult<Vec<_>>>()?;
                PathDensity::window(times, fs).map_err(|e| self.loc.at(sp, "times", e.to_string()))
            }
            other => Err(self.loc.at(sp, "kind", format!("unknown density kind `{other}` (expected endpoint or window)"))),
        }
    }

    fn check(&self, i: usize, spec: &Spanned<CheckSpec>) -> CResult<ResolvedCheck> {
        let c = spec.get_ref();
        let sp = spec.span();
        let loc = &self.loc;
        let Some((_, allowed)) = CHECK_TYPES.iter().find(|(k, _)| *k == c.kind) else {
            let names: Vec<&str> = CHECK_TYPES.iter().map(|(k, _)| *k).collect();
            return Err(loc.at(sp, "type", format!("unknown check type `{}` (expected one of {})", c.kind, names.join(", "))));
        };
        if let Some(extra) = c.present().into_iter().find(|f| !allowed.contains(f)) {
            return Err(loc.at(sp, extra, format!("`{extra}` does not apply to check type `{}`", c.kind)));
        }
        let what = format!("check type `{}`", c.kind);
        let req = |v: &Option<String>, field: &str| need(v, loc, sp.clone(), field, &what);

        let mut sim = self.sim;
        if let Some(t) = c.t {
            sim.t = t;
        }
        if let Some(n) = c.n_steps {
            sim.n_steps = n;
        }
        if let Some(n) = c.n_paths {
            sim.n_paths = n;
        }
        sim.validate().map_err(|e| loc.at(sp.clone(), "T", e.to_string()))?;
        let mut opts = CheckOptions::new(sim);
        opts.solver = self.solver.clone();
        if let Some(g) = c.grid_refinement {
            opts.grid_refinement = g;
        }
        if let Some(p) = c.power_scale {
            opts.power_scale = p;
        }

        let pair = |names: &Option<Vec<String>>| -> CResult<Option<(Point, Point)>> {
            match names.as_deref() {
                None => Ok(None),
                Some([a, b]) => Ok(Some((self.point(sp.clone(), "pair", a)?, self.point(sp.clone(), "pair", b)?))),
                Some(_) => Err(loc.at(sp.clone(), "pair", "`pair` takes exactly two point names")),
            }
        };
        let profile = |name: &str| -> CResult<Arc<BoundaryProfile>> {
            self.profiles.get(name).cloned().ok_or_else(|| loc.at(sp.clone(), "profile", format!("unknown profile `{name}`")))
        };
        let at_f = || -> CResult<(Point, ScalarField)> {
            let at = req(&c.at, "at")?;
            let f = req(&c.f, "f")?;
            Ok((self.point(sp.clone(), "at", &at)?, self.function(sp.clone(), "f", &f)?))
        };
        let sff = |default_order: usize| -> CResult<SffOptions> {
            let mut s = SffOptions::geometric(
                c.t0.unwrap_or(0.0256),
                c.levels.unwrap_or(5),
                c.steps_per_t.unwrap_or(32),
                c.n_paths.unwrap_or(self.sim.n_paths),
                self.sim.seed,
            );
            s.order = c.order.unwrap_or(default_order);
            s.radius = c.radius;
            if let Some(p) = c.p {
                s.p = p;
            }
            if let Some(t) = c.tolerance {
                s.tolerance = t;
            }
            Ok(s)
        };

        let task = match c.kind.as_str() {
            "endpoint-talagrand" => {
                let (o, f) = at_f()?;
                Task::EndpointTalagrand { o, f }
            }
            "logsobolev" => {
                let (o, f) = at_f()?;
                Task::LogSobolev { o, f }
            }
            "poincare" => {
                let (o, f) = at_f()?;
                Task::Poincare { o, f }
            }
            "gradient-estimate" => {
                let (o, f) = at_f()?;
                Task::Gradient { o, f, h: c.h.unwrap_or(1e-3) }
            }
            "pathspace-talagrand" => Task::PathspaceTalagrand {
                start: self.start(sp.clone(), "start", &req(&c.start, "start")?)?,
                density: self.density(sp.clone(), "density", &req(&c.density, "density")?)?,
            },
            "marginal-contraction" => {
                let input = match (&c.x, &c.y, &c.mu, &c.nu) {
                    (Some(x), Some(y), None, None) => {
                        ContractionInput::Points { x: self.point(sp.clone(), "x", x)?, y: self.point(sp.clone(), "y", y)? }
                    }
                    (None, None, Some(mu), Some(nu)) => {
                        ContractionInput::Measures { mu: self.measure(sp.clone(), "mu", mu)?, nu: self.measure(sp.clone(), "nu", nu)? }
                    }
                    _ => return Err(loc.at(sp, "x", "marginal-contraction takes either `x` and `y` or `mu` and `nu`")),
                };
                Task::Contraction { input, p: c.p.unwrap_or(2.0) }
            }
            "composite" => {
                let (points, masses) = self.measure(sp.clone(), "mu", &req(&c.mu, "mu")?)?;
                Task::Composite {
                    points,
                    masses,
                    density: self.density(sp.clone(), "density", &req(&c.density, "density")?)?,
                    c_mu: c.c_mu,
                }
            }
            "variable-coefficient" => Task::VariableCoefficient {
                start: self.start(sp.clone(), "start", &req(&c.start, "start")?)?,
                density: self.density(sp.clone(), "density", &req(&c.density, "density")?)?,
                pair: pair(&c.pair)?,
            },
            "nonconvex" => {
                let prof = c.profile.as_deref().map(profile).transpose()?;
                let f = match (&c.f, &c.profile) {
                    (Some(f), _) => self.function(sp.clone(), "f", f)?,
                    (None, Some(name)) => ScalarField::profile(name, prof.clone().expect("resolved above")),
                    (None, None) => return Err(loc.at(sp, "f", "nonconvex needs a conformal factor `f` or a `profile`")),
                };
                Task::Nonconvex(NonconvexInput {
                    f,
                    profile: prof,
                    start: self.start(sp.clone(), "start", &req(&c.start, "start")?)?,
                    density: self.density(sp.clone(), "density", &req(&c.density, "density")?)?,
                    pair: pair(&c.pair)?,
                })
            }
            "sff-asymptotics" => {
                let (o, f) = at_f()?;
                Task::Sff { o, f, opts: sff(1)? }
            }
            "variance-expansion" => {
                let (o, f) = at_f()?;
                Task::Variance { o, f, opts: sff(2)? }
            }
            "profile-constants" => {
                let name = req(&c.profile, "profile")?;
                Task::ProfileConstants { profile: profile(&name)?, name, t: sim.t }
            }
            _ => unreachable!("check types are matched above"),
        };
        Ok(ResolvedCheck { label: c.label.clone().unwrap_or_else(|| format!("{}-{}", i + 1, c.kind)), kind: c.kind.clone(), task, opts })
    }

    fn ensemble(&self, e: &Spanned<EnsembleSpec>) -> CResult<EnsembleJob> {
        let s = e.get_ref();
        let sp = e.span();
        let start = self.start(sp.clone(), "start", &s.start)?;
        let csv = match s.format.as_deref() {
            Some("csv") => true,
            Some("motc1") => false,
            None => s.file.ends_with(".csv"),
            Some(other) => return Err(self.loc.at(sp, "format", format!("unknown format `{other}` (expected motc1 or csv)"))),
        };
        let full = match s.record.as_deref() {
            None | Some("full") => true,
            Some("endpoint") => false,
            Some(other) => return Err(self.loc.at(sp, "record", format!("unknown record mode `{other}` (expected full or endpoint)"))),
        };
        if s.file.is_empty() || s.file.contains("..") || s.file.starts_with('/') {
            return Err(self.loc.at(sp, "file", "file must be a relative name inside the output directory"));
        }
        let mut sim = self.sim;
        if let Some(n) = s.n_paths {
            sim.n_paths = n;
        }
        Ok(EnsembleJob { start, file: s.file.clone(), csv, full, sim })
    }
}

fn build_manifold(loc: &Locator, cfg: &ExperimentConfig) -> CResult<ModelManifold> {
    let spec = cfg.manifold.get_ref();
    let sp = cfg.manifold.span();
    let req = |v: Option<f64>, field: &str| need(&v, loc, sp.clone(), field, &format!("manifold kind `{}`", spec.kind));
    let allowed: &[&str] = match spec.kind.as_str() {
        "euclidean" | "halfspace" => &[],
        "sphere" | "hyperbolic" | "ball" => &["radius"],
        "spherical-cap" => &["radius", "angle"],
        "annulus" => &["inner", "outer"],
        other => {
            return Err(loc.at(
                sp,
                "kind",
                format!("unknown manifold kind `{other}` (expected euclidean, sphere, hyperbolic, halfspace, ball, spherical-cap or annulus)"),
            ))
        }
    };
    for (field, v) in [("radius", spec.radius), ("angle", spec.angle), ("inner", spec.inner), ("outer", spec.outer)] {
        if v.is_some() && !allowed.contains(&field) {
            return Err(loc.at(sp, field, format!("`{field}` does not apply to manifold kind `{}`", spec.kind)));
        }
    }
    let kind = match spec.kind.as_str() {
        "euclidean" => ManifoldKind::Euclidean,
        "halfspace" => ManifoldKind::HalfSpace,
        "sphere" => ManifoldKind::Sphere { radius: spec.radius.unwrap_or(1.0) },
        "hyperbolic" => ManifoldKind::Hyperbolic { radius: spec.radius.unwrap_or(1.0) },
        "ball" => ManifoldKind::Ball { radius: spec.radius.unwrap_or(1.0) },
        "spherical-cap" => ManifoldKind::SphericalCap { radius: spec.radius.unwrap_or(1.0), angle: req(spec.angle, "angle")? },
        _ => ManifoldKind::Annulus { inner: req(spec.inner, "inner")?, outer: req(spec.outer, "outer")? },
    };
    let mut m = ModelManifold::new(kind, spec.dim).map_err(|e| loc.at(sp.clone(), "dim", e.to_string()))?;
    if let Some(d) = &cfg.drift {
        let drift = build_drift(loc, d, m.dim())?;
        m = m.with_drift(drift).map_err(|e| loc.at(d.span(), "kind", e.to_string()))?;
    }
    if let Some(psi) = &cfg.psi {
        let f = ScalarField::parse(psi.get_ref()).map_err(|e| psi_error(loc, psi.span(), e.to_string()))?;
        m = m.with_psi(f).map_err(|e| psi_error(loc, psi.span(), e.to_string()))?;
    }
    Ok(m)
}

fn psi_error(loc: &Locator, span: Range<usize>, message: String) -> ConfigError {
    ConfigError { line: Some(line_of(loc.src, span.start)), field: "psi".into(), message }
}

fn build_drift(loc: &Locator, d: &Spanned<DriftSpec>, dim: usize) -> CResult<DriftField> {
    let s = d.get_ref();
    let sp = d.span();
    let what = format!("drift kind `{}`", s.kind);
    let number = |v: &toml::Value| v.as_float().or_else(|| v.as_integer().map(|i| i as f64));
    Ok(match s.kind.as_str() {
        "zero" => DriftField::Zero,
        "radial-linear" => DriftField::RadialLinear { rate: need(&s.rate, loc, sp, "rate", &what)? },
        "linear-potential" => {
            let v = need(&s.coef, loc, sp.clone(), "coef", &what)?;
            let coefs: Option<Vec<f64>> = v.as_array().and_then(|a| a.iter().map(number).collect());
            match coefs {
                Some(c) if c.len() == dim => DriftField::LinearPotential { coef: Vector::from_slice(&c) },
                _ => return Err(loc.at(sp, "coef", format!("expected an array of {dim} numbers"))),
            }
        }
        "height-potential" => {
            let v = need(&s.coef, loc, sp.clone(), "coef", &what)?;
            DriftField::HeightPotential { coef: number(&v).ok_or_else(|| loc.at(sp, "coef", "expected a number"))? }
        }
        other => {
            return Err(loc.at(
                sp,
                "kind",
                format!("unknown drift kind `{other}` (expected zero, radial-linear, linear-potential or height-potential)"),
            ))
        }
    })
}

fn build_solver(loc: &Locator, spec: Option<&Spanned<SolverSpec>>, seed: u64) -> CResult<SolverOptions> {
    let mut o = SolverOptions { seed, ..SolverOptions::default() };
    let Some(spec) = spec else { return Ok(o) };
    let s = spec.get_ref();
    if let Some(m) = &s.method {
        o.method = match m.as_str() {
            "auto" => Method::Auto,
            "exact" => Method::Exact,
            "entropic" => Method::Entropic,
            other => return Err(loc.at(spec.span(), "method", format!("unknown method `{other}` (expected auto, exact or entropic)"))),
        };
    }
    if let Some(v) = s.max_exact_entries {
        o.max_exact_entries = v;
    }
    if let Some(v) = s.gap_target {
        o.gap_target = Some(v);
    }
    if let Some(v) = s.bootstrap {
        o.bootstrap = v;
    }
    if let Some(v) = s.bootstrap_atoms {
        o.bootstrap_atoms = v;
    }
    Ok(o)
}

/// Sets the dotted `path` (array elements by index) of a TOML document.
pub fn set_path(doc: &mut toml::Table, path: &str, value: toml::Value) -> std::result::Result<(), String> {
    let parts: Vec<&str> = path.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("malformed parameter path `{path}`"));
    }
    let mut cur: &mut toml::Value = doc.get_mut(parts[0]).ok_or_else(|| format!("`{}` is not set in the config", parts[0]))?;
    if parts.len() == 1 {
        *cur = value;
        return Ok(());
    }
    for (i, part) in parts.iter().enumerate().skip(1) {
        let last = i == parts.len() - 1;
        cur = match cur {
            toml::Value::Table(t) => {
                if last {
                    t.insert(part.to_string(), value);
                    return Ok(());
                }
                t.get_mut(*part).ok_or_else(|| format!("`{}` is not set in the config", parts[..=i].join(".")))?
            }
            toml::Value::Array(a) => {
                let idx: usize = part.parse().map_err(|_| format!("`{part}` is not an array index in `{path}`"))?;
                let len = a.len();
                let slot = a.get_mut(idx).ok_or_else(|| format!("index {idx} out of range ({len} entries) in `{path}`"))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(format!("`{}` is not a table or array", parts[..i].join("."))),
        };
    }
    unreachable!("the loop returns on the last segment")
}

/// Parses a sweep value as a TOML literal, falling back to a bare string.
pub fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
