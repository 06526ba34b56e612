//! Experiment configuration.
//!
//! The file is TOML: `[section]` headers and `key = value` lines. Unknown keys
//! are rejected, and every name that refers to something else (region names,
//! field names) is resolved by [`ExperimentConfig::validate`] before anything
//! runs.

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::Deserialize;
use thiserror::Error;
use tptkit::analysis::Surface;
use tptkit::model::{check_disjoint, BoundingBox};
use tptkit::{build_model, DiffusionModel, Grid, ModelDescriptor, Region};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] tptkit::Error),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub regions: RegionsSection,
    #[serde(rename = "region")]
    pub region_defs: Vec<RegionDef>,
    pub grid: GridSection,
    pub simulate: SimulateSection,
    pub tpp: TppSection,
    #[serde(default)]
    pub analyze: AnalyzeSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub family: String,
    pub beta: Option<f64>,
    pub shear: Option<f64>,
}

/// Which defined regions play the roles of A and B.
#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct RegionsSection {
    pub a: String,
    pub b: String,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(tag = "shape", rename_all = "lowercase", deny_unknown_fields)]
pub enum RegionDef {
    Interval { name: String, lo: f64, hi: f64 },
    Disk { name: String, center: [f64; 2], radius: f64, atoms: usize },
}

impl RegionDef {
    pub fn name(&self) -> &str {
        match self {
            RegionDef::Interval { name, .. } | RegionDef::Disk { name, .. } => name,
        }
    }

    fn build(&self) -> tptkit::Result<Region> {
        match self {
            RegionDef::Interval { name, lo, hi } => Region::interval(name, *lo, *hi),
            RegionDef::Disk { name, center, radius, atoms } => Region::disk(name, *center, *radius, *atoms),
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// One `[lo, hi]` pair per dimension.
    #[serde(rename = "box")]
    pub bounds: Vec<[f64; 2]>,
    /// Nodes per axis.
    pub resolution: Vec<usize>,
    /// Nodes per axis of the histogram grid for empirical densities.
    pub histogram: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub dt: f64,
    /// Steps per stream.
    pub steps: usize,
    pub seed: u64,
    #[serde(default = "one")]
    pub n_streams: usize,
    /// Start of every stream; defaults to the centre of A.
    pub x0: Option<Vec<f64>>,
    /// Stream 0 is written in full when set.
    #[serde(default)]
    pub record_trajectory: bool,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TppSection {
    pub dt_max: f64,
    pub n_paths: usize,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    /// Paths written in full (the first ones of the ensemble).
    #[serde(default)]
    pub record_paths: usize,
}

fn default_max_steps() -> usize {
    50_000_000
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeSection {
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, rename = "surface")]
    pub surfaces: Vec<SurfaceDef>,
    /// Probe points for the Monte Carlo committor check.
    #[serde(default)]
    pub mc_probes: Vec<Vec<f64>>,
    #[serde(default = "default_mc_samples")]
    pub mc_samples: usize,
}

fn default_mc_samples() -> usize {
    1000
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Empirical vs analytic, in standard errors.
    pub stderr_factor: f64,
    /// Empirical rate vs quadrature rate, relative.
    pub rate: f64,
    /// Identities between two quadratures (ν_R = ν, same mass), relative.
    pub identity: f64,
    /// `1/ν_R = T_AB + T_BA`, relative.
    pub time_sum: f64,
    /// Quadrature times vs hitting-time solves, relative.
    pub hitting: f64,
    /// Normalized L1 distance of densities.
    pub density_l1: f64,
    /// Boundary measures compared on test functions, relative.
    pub measure: f64,
    /// Relative discrete divergence of `J_R`.
    pub divergence: f64,
    /// Surface fluxes vs ν_R, relative.
    pub flux: f64,
    /// `max|q̃ − (1 − q)|` for reversible models.
    pub reversibility: f64,
    /// Significance level of K-S tests.
    pub ks_alpha: f64,
    /// Empirical η_A^- mass on the far endpoint of a 1D region.
    pub far_mass: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            stderr_factor: 3.0,
            rate: 0.15,
            identity: 0.01,
            time_sum: 0.10,
            hitting: 0.02,
            density_l1: 0.10,
            measure: 0.05,
            divergence: 1e-2,
            flux: 0.05,
            reversibility: 1e-3,
            ks_alpha: 0.01,
            far_mass: 1e-3,
        }
    }
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SurfaceDef {
    Circle { center: [f64; 2], radius: f64, n: usize },
    Point { x: f64 },
}

impl SurfaceDef {
    pub fn surface(&self) -> Surface {
        match *self {
            SurfaceDef::Circle { center, radius, n } => Surface::Circle { center, radius, n },
            SurfaceDef::Point { x } => Surface::Point { x, normal: 1.0 },
        }
    }
}

/// Fields that can be dumped.
pub const FIELD_NAMES: [&str; 8] = ["rho", "q", "q_tilde", "rho_r", "current", "u_b", "u_a", "v_b"];

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    #[serde(default = "default_fields")]
    pub fields: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            formats: default_formats(),
            fields: default_fields(),
        }
    }
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

fn default_fields() -> Vec<String> {
    ["q", "q_tilde", "rho_r"].iter().map(|s| s.to_string()).collect()
}

#[derive(Clone, Copy, Debug, Deserialize, PartialEq, Eq, PartialOrd, Ord, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Binary,
}

/// Model, regions and grid built from a validated config.
pub struct Resolved {
    pub model: DiffusionModel,
    pub a: Region,
    pub b: Region,
    pub domain: BoundingBox,
    pub grid: Grid,
    pub hist: Grid,
    pub x0: tptkit::Point,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &std::path::Path) -> Result<(Self, String), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Ok((Self::parse(&text)?, text))
    }

    /// Checks every cross-reference and builds the objects the pipeline needs.
    pub fn validate(&self) -> Result<Resolved, ConfigError> {
        let dim = self.grid.bounds.len();
        if !(1..=2).contains(&dim) {
            return invalid(format!("grid.box must have 1 or 2 [lo, hi] pairs, got {dim}"));
        }
        if self.grid.resolution.len() != dim {
            return invalid(format!("grid.resolution needs {dim} entries"));
        }
        let domain = if dim == 1 {
            BoundingBox::new_1d(self.grid.bounds[0][0], self.grid.bounds[0][1])
        } else {
            BoundingBox::new_2d(
                [self.grid.bounds[0][0], self.grid.bounds[1][0]],
                [self.grid.bounds[0][1], self.grid.bounds[1][1]],
            )
        };
        for k in 0..dim {
            if !(domain.lo[k] < domain.hi[k]) {
                return invalid(format!("grid.box axis {k} is empty"));
            }
        }
        let desc = ModelDescriptor {
            family: self.model.family.clone(),
            beta: self.model.beta,
            shear: self.model.shear,
            domain: Some(domain),
        };
        let model = build_model(&desc)?;
        if model.dim() != dim {
            return invalid(format!(
                "model {} is {}-dimensional but grid.box has {dim} axes",
                self.model.family,
                model.dim()
            ));
        }

        let mut names = BTreeSet::new();
        for r in &self.region_defs {
            if !names.insert(r.name()) {
                return invalid(format!("region {} defined twice", r.name()));
            }
        }
        let lookup = |role: &str, name: &str| -> Result<Region, ConfigError> {
            match self.region_defs.iter().find(|r| r.name() == name) {
                Some(def) => Ok(def.build()?),
                None => invalid(format!("regions.{role} = {name:?} does not name a [[region]]")),
            }
        };
        let a = lookup("a", &self.regions.a)?;
        let b = lookup("b", &self.regions.b)?;
        if a.dim() != dim || b.dim() != dim {
            return invalid("region dimension differs from grid.box");
        }
        check_disjoint(&a, &b)?;

        let nodes = |r: &[usize]| if dim == 1 { [r[0], 1] } else { [r[0], r[1]] };
        let grid = Grid::with_regions(&domain, nodes(&self.grid.resolution), &a, &b)?;
        let hist_res = match &self.grid.histogram {
            Some(h) if h.len() != dim => return invalid(format!("grid.histogram needs {dim} entries")),
            Some(h) => nodes(h),
            None => nodes(&self.grid.resolution),
        };
        let hist = Grid::with_regions(&domain, hist_res, &a, &b)?;

        let s = &self.simulate;
        if !(s.dt > 0.0) {
            return invalid("simulate.dt must be positive");
        }
        if s.n_streams == 0 {
            return invalid("simulate.n_streams must be at least 1");
        }
        let x0 = match &s.x0 {
            Some(v) if v.len() != dim => return invalid(format!("simulate.x0 needs {dim} entries")),
            Some(v) => point(v),
            None => a.center(),
        };
        if !domain.contains(&x0) {
            return invalid("simulate.x0 lies outside grid.box");
        }
        if !(self.tpp.dt_max > 0.0) {
            return invalid("tpp.dt_max must be positive");
        }
        if self.tpp.record_paths > self.tpp.n_paths {
            return invalid("tpp.record_paths exceeds tpp.n_paths");
        }
        for p in &self.analyze.mc_probes {
            if p.len() != dim {
                return invalid(format!("analyze.mc_probes entries need {dim} coordinates"));
            }
        }
        for s in &self.analyze.surfaces {
            match (s, dim) {
                (SurfaceDef::Circle { .. }, 2) | (SurfaceDef::Point { .. }, 1) => {}
                _ => return invalid("analyze.surface kind does not match the dimension"),
            }
        }
        for f in &self.output.fields {
            if !FIELD_NAMES.contains(&f.as_str()) {
                return invalid(format!(
                    "output.fields: unknown field {f:?} (known: {})",
                    FIELD_NAMES.join(", ")
                ));
            }
        }
        if self.output.formats.is_empty() {
            return invalid("output.formats is empty");
        }
        Ok(Resolved {
            model,
            a,
            b,
            domain,
            grid,
            hist,
            x0,
        })
    }
}

pub fn point(v: &[f64]) -> tptkit::Point {
    [v[0], v.get(1).copied().unwrap_or(0.0)]
}
