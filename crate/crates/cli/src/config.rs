//! Experiment configuration: TOML (or a previous `meta.json`) overlaid by flags,
//! then completed with per-experiment presets.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use specpol::dynamics::reference_mu;
use specpol::residual::GridSpec;
use specpol::C64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Experiment {
    Blaschke1,
    Blaschke2,
    SobolevSweep,
    NormalitySweep,
    KernelBlaschke,
    TrajectoryPipeline,
    LemmaCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MapName {
    Blaschke1,
    Blaschke2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SpaceName {
    L2,
    Sobolev,
    HardyDual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Snapshots {
    Equispaced,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum KernelName {
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AutoCov {
    #[serde(rename = "auto-cov")]
    AutoCov,
}

/// Gaussian bandwidth: a number or the covariance heuristic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CSq {
    Value(f64),
    Auto(AutoCov),
}

fn parse_c_sq(s: &str) -> Result<CSq, String> {
    if s == "auto-cov" {
        return Ok(CSq::Auto(AutoCov::AutoCov));
    }
    s.parse::<f64>()
        .map(CSq::Value)
        .map_err(|_| format!("expected a number or \"auto-cov\", got {s:?}"))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct GridArgs {
    #[arg(long = "grid_re_min", allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub re_min: Option<f64>,
    #[arg(long = "grid_re_max", allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub re_max: Option<f64>,
    #[arg(long = "grid_im_min", allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub im_min: Option<f64>,
    #[arg(long = "grid_im_max", allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub im_max: Option<f64>,
    #[arg(long = "grid_n_re")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_re: Option<usize>,
    #[arg(long = "grid_n_im")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_im: Option<usize>,
}

impl GridArgs {
    pub fn spec(&self) -> GridSpec {
        let d = GridSpec::default();
        GridSpec {
            re_min: self.re_min.unwrap_or(d.re_min),
            re_max: self.re_max.unwrap_or(d.re_max),
            im_min: self.im_min.unwrap_or(d.im_min),
            im_max: self.im_max.unwrap_or(d.im_max),
            n_re: self.n_re.unwrap_or(d.n_re),
            n_im: self.n_im.unwrap_or(d.n_im),
        }
    }

    fn fill(&mut self) {
        let g = self.spec();
        *self = Self {
            re_min: Some(g.re_min),
            re_max: Some(g.re_max),
            im_min: Some(g.im_min),
            im_max: Some(g.im_max),
            n_re: Some(g.n_re),
            n_im: Some(g.n_im),
        };
    }
}

/// Every field is optional on input; [`Config::resolve`] fills the gaps from the
/// experiment preset, and the resolved form is what `meta.json` records.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub experiment: Option<Experiment>,

    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub map: Option<MapName>,
    #[arg(long = "mu_re", allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_re: Option<f64>,
    #[arg(long = "mu_im", allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu_im: Option<f64>,

    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub space: Option<SpaceName>,
    /// Sobolev exponent.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[arg(long = "radius_r")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius_r: Option<f64>,
    /// Literal Fourier band for the weighted sums (no tail check).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub band: Option<usize>,
    /// Sweep values of the Sobolev exponent.
    #[arg(long = "s_values", value_delimiter = ',', allow_hyphen_values = true)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_values: Option<Vec<f64>>,

    /// Dictionary size.
    #[arg(long = "N")]
    #[serde(rename = "N", skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Number of snapshots (quadrature nodes for weighted spaces).
    #[arg(long = "M")]
    #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snapshots: Option<Snapshots>,
    #[arg(long = "fourier_pi_scaling")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fourier_pi_scaling: Option<bool>,

    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelName>,
    /// Gaussian bandwidth c², or "auto-cov".
    #[arg(long = "c_sq", value_parser = parse_c_sq)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_sq: Option<CSq>,
    #[arg(long = "rank_r")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank_r: Option<usize>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,

    /// Trajectory CSV; the pipeline samples a synthetic double well when absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stride: Option<usize>,
    /// Length of the synthetic trajectory before subsampling.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
    #[arg(long = "n_clusters")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_clusters: Option<usize>,

    #[command(flatten)]
    pub grid: GridArgs,

    #[arg(long = "output_dir")]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    /// Ignored on input; written into `meta.json`.
    #[arg(skip)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub versions: Option<Value>,
}

/// A field-precise configuration problem.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn set<T>(slot: &mut Option<T>, v: T) {
    if slot.is_none() {
        *slot = Some(v);
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

impl Config {
    /// Reads TOML, or JSON when the extension is `.json` (so `meta.json` loads back).
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let field = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::new(&field, e.to_string()))?;
        if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| ConfigError::new(&field, e.to_string()))
        } else {
            toml::from_str(&text).map_err(|e| ConfigError::new(&field, e.message().to_string()))
        }
    }

    /// Fields set in `flags` win.
    pub fn overlay(self, flags: &Config) -> Self {
        let mut base = serde_json::to_value(self).expect("config serializes");
        let over = serde_json::to_value(flags).expect("config serializes");
        merge(&mut base, over);
        serde_json::from_value(base).expect("merged config deserializes")
    }

    pub fn mu(&self) -> C64 {
        C64::new(self.mu_re.unwrap_or(0.0), self.mu_im.unwrap_or(0.0))
    }

    /// Fills preset defaults and checks every numeric precondition.
    pub fn resolve(mut self) -> Result<Self, ConfigError> {
        let exp = self
            .experiment
            .ok_or_else(|| ConfigError::new("experiment", "required"))?;
        use Experiment::*;
        let map = match exp {
            Blaschke2 => MapName::Blaschke2,
            _ => MapName::Blaschke1,
        };
        set(&mut self.map, map);
        if self.map == Some(MapName::Blaschke1) && self.mu_re.is_none() && self.mu_im.is_none() {
            let mu = reference_mu();
            self.mu_re = Some(mu.re);
            self.mu_im = Some(mu.im);
        }
        if self.mu_re.is_none() && self.mu_im.is_none() {
            return Err(ConfigError::new(
                "mu_re",
                "blaschke2 has no default parameter; set mu_re and mu_im",
            ));
        }
        set(&mut self.mu_re, 0.0);
        set(&mut self.mu_im, 0.0);

        match exp {
            Blaschke1 | Blaschke2 => {
                let two = exp == Blaschke2;
                set(&mut self.space, SpaceName::HardyDual);
                set(&mut self.n, if two { 50 } else { 41 });
                set(&mut self.m, if two { 10_000 } else { 1000 });
                if self.space == Some(SpaceName::HardyDual) {
                    set(&mut self.radius_r, if two { 0.755 } else { 0.75 });
                }
                if self.space == Some(SpaceName::Sobolev) {
                    set(&mut self.s, -1.0);
                }
                set(&mut self.epsilon, 1e-2);
                self.grid.fill();
            }
            SobolevSweep | NormalitySweep => {
                self.space = Some(SpaceName::Sobolev);
                set(&mut self.s_values, (-6..=2).map(f64::from).collect());
                set(&mut self.n, 41);
                set(&mut self.m, 1000);
                if exp == SobolevSweep {
                        set(&mut self.epsilon, 1e-2);
                    self.grid.fill();
                }
            }
            KernelBlaschke => {
                set(&mut self.kernel, KernelName::Gaussian);
                set(&mut self.c_sq, CSq::Value(0.01));
                set(&mut self.m, 1000);
                set(&mut self.rank_r, 100);
                set(&mut self.epsilon, 1e-2);
                self.grid.fill();
            }
            TrajectoryPipeline => {
                set(&mut self.kernel, KernelName::Gaussian);
                set(&mut self.c_sq, CSq::Auto(AutoCov::AutoCov));
                set(&mut self.rank_r, 50);
                set(&mut self.n_clusters, 2);
                set(&mut self.epsilon, 5e-2);
                if self.trajectory.is_some() {
                    set(&mut self.stride, 1);
                } else {
                    set(&mut self.steps, 10_000);
                    set(&mut self.stride, 5);
                }
                self.grid.fill();
            }
            LemmaCheck => {
                set(&mut self.m, 2000);
                set(&mut self.rank_r, 10);
            }
        }
        if matches!(exp, Blaschke1 | Blaschke2 | SobolevSweep | KernelBlaschke | LemmaCheck)
            && self.m.is_some()
        {
            set(&mut self.snapshots, Snapshots::Equispaced);
        }
        set(&mut self.seed, 0);
        set(&mut self.output_dir, PathBuf::from("specpol-out"));
        self.versions = None;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let mu = self.mu();
        if !(mu.re.is_finite() && mu.im.is_finite()) {
            return Err(ConfigError::new("mu_re", "must be finite"));
        }
        match self.map {
            Some(MapName::Blaschke1) if mu.norm() >= 1.0 => {
                return Err(ConfigError::new("mu_re", format!("|μ| = {} must be < 1", mu.norm())));
            }
            Some(MapName::Blaschke2) if mu.norm() >= 1.0 / 3.0 => {
                return Err(ConfigError::new(
                    "mu_re",
                    format!("|μ| = {} must be < 1/3 for blaschke2", mu.norm()),
                ));
            }
            _ => {}
        }
        if let Some(n) = self.n {
            if n == 0 {
                return Err(ConfigError::new("N", "must be positive"));
            }
        }
        if let Some(m) = self.m {
            if m < 2 {
                return Err(ConfigError::new("M", "must be at least 2"));
            }
        }
        if let Some(r) = self.radius_r {
            if !(r > 0.0 && r < 1.0) {
                return Err(ConfigError::new("radius_r", format!("{r} must lie in (0, 1)")));
            }
        }
        if let Some(s) = self.s {
            if !s.is_finite() {
                return Err(ConfigError::new("s", "must be finite"));
            }
        }
        if let Some(v) = &self.s_values {
            if v.is_empty() || v.iter().any(|s| !s.is_finite()) {
                return Err(ConfigError::new("s_values", "must be a nonempty list of finite values"));
            }
        }
        if let Some(CSq::Value(c)) = self.c_sq {
            if !(c > 0.0 && c.is_finite()) {
                return Err(ConfigError::new("c_sq", format!("{c} must be positive")));
            }
        }
        if self.rank_r == Some(0) {
            return Err(ConfigError::new("rank_r", "must be positive"));
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                return Err(ConfigError::new("epsilon", format!("{e} must be positive")));
            }
        }
        if self.stride == Some(0) {
            return Err(ConfigError::new("stride", "must be positive"));
        }
        if self.n_clusters == Some(0) {
            return Err(ConfigError::new("n_clusters", "must be positive"));
        }
        if let Some(steps) = self.steps {
            if steps < 2 {
                return Err(ConfigError::new("steps", "must be at least 2"));
            }
        }
        if self.grid.n_re.is_some() {
            self.grid
                .spec()
                .validate()
                .map_err(|e| ConfigError::new("grid", e.to_string()))?;
        }
        Ok(())
    }
}
