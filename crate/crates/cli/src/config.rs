//! Run configuration: one JSON document per run.

use brownresnick::limit::{ConvergenceOptions, MaximaMode};
use brownresnick::m3::{Lattice, Ring};
use brownresnick::report::DEFAULT_THRESHOLDS;
use brownresnick::simulate::StopSettings;
use brownresnick::variogram::{Point, VarianceProfile, Variogram};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Cdf,
    VerifyMargins,
    VerifyStationarity,
    VerifyLaplace,
    ConvergeThm17,
    ConvergeThm22,
    ConvergeAniso,
    M3Extract,
    M3Drift,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Cdf => "cdf",
            Command::VerifyMargins => "verify-margins",
            Command::VerifyStationarity => "verify-stationarity",
            Command::VerifyLaplace => "verify-laplace",
            Command::ConvergeThm17 => "converge-thm17",
            Command::ConvergeThm22 => "converge-thm22",
            Command::ConvergeAniso => "converge-aniso",
            Command::M3Extract => "m3-extract",
            Command::M3Drift => "m3-drift",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub ks_level: f64,
    pub se_multiplier: f64,
    /// Floor of the bivariate tolerance in convergence runs.
    pub abs_tol: f64,
    pub laplace_tol: f64,
    pub maxima_mode: MaximaMode,
}

impl Default for Tolerances {
    fn default() -> Self {
        let c = ConvergenceOptions::default();
        Self {
            ks_level: c.ks_level,
            se_multiplier: c.se_multiplier,
            abs_tol: c.abs_tol,
            laplace_tol: 1e-10,
            maxima_mode: c.mode,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Outputs {
    /// Also write samples.csv for verification commands.
    pub samples_csv: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anisotropy {
    pub weights: Vec<f64>,
    pub alphas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaplaceOptions {
    #[serde(default = "ten")]
    pub shifts: usize,
    #[serde(default = "five")]
    pub max_sites: usize,
}

impl Default for LaplaceOptions {
    fn default() -> Self {
        Self { shifts: 10, max_sites: 5 }
    }
}

fn ten() -> usize {
    10
}

fn five() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkProbe {
    pub band: (f64, f64),
    pub offsets: Vec<Point>,
    /// Poisson streams; defaults to `replicates`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub streams: Option<usize>,
    #[serde(default = "thirty")]
    pub min_atoms: usize,
    #[serde(default = "max_atoms")]
    pub max_atoms: usize,
}

fn thirty() -> usize {
    30
}

fn max_atoms() -> usize {
    200_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftOptions {
    pub radii: Vec<f64>,
    pub threshold: f64,
    #[serde(default)]
    pub ring: Ring,
    #[serde(default = "vanishing_tol")]
    pub vanishing_tol: f64,
}

fn vanishing_tol() -> f64 {
    0.01
}

fn default_thresholds() -> Vec<f64> {
    DEFAULT_THRESHOLDS.to_vec()
}

/// A run configuration. Fields not used by the chosen command are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub replicates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variogram: Option<Variogram>,
    #[serde(default)]
    pub profile: VarianceProfile,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sites: Option<Vec<Point>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lattice: Option<Lattice>,
    #[serde(default = "default_thresholds")]
    pub thresholds: Vec<f64>,
    /// Site pairs whose bivariate law is compared with the closed form.
    #[serde(default)]
    pub pairs: Vec<[usize; 2]>,
    #[serde(default)]
    pub stop: StopSettings,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub outputs: Outputs,
    /// Not part of the resolved config: it cannot affect results.
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,

    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift_pairs: Option<[[usize; 2]; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alt_profile: Option<VarianceProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cdf_thresholds: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anisotropy: Option<Anisotropy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub laplace: Option<LaplaceOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mark_probe: Option<MarkProbe>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<DriftOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_grid: Option<Vec<f64>>,
}

/// An input problem located by a JSON pointer.
#[derive(Debug, Clone, PartialEq)]
pub struct InputError {
    pub pointer: String,
    pub message: String,
}

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.pointer, self.message)
    }
}

fn at(pointer: &str, message: impl Into<String>) -> InputError {
    InputError {
        pointer: pointer.into(),
        message: message.into(),
    }
}

/// Converts a serde path ("a.b[0].c") into a JSON pointer ("/a/b/0/c").
fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{key}")),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => {}
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

/// Parses and validates a config. `seed` overrides the seed in the document.
pub fn parse(text: &str, seed: Option<u64>) -> Result<RunConfig, InputError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = pointer_of(e.path());
        let inner = e.into_inner();
        // serde_json appends the position; the pointer already locates the error.
        let msg = inner.to_string();
        let msg = match msg.rfind(" at line ") {
            Some(i) if inner.line() > 0 => msg[..i].to_string(),
            _ => msg,
        };
        at(&pointer, msg)
    })?;
    if seed.is_some() {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn seed(&self) -> u64 {
        self.seed.expect("validated")
    }

    fn validate(&self) -> Result<(), InputError> {
        if self.seed.is_none() {
            return Err(at("/seed", "a seed is required (in the config or via --seed)"));
        }
        if self.replicates == 0 {
            return Err(at("/replicates", "must be at least 1"));
        }
        if self.thresholds.is_empty() {
            return Err(at("/thresholds", "must be non-empty"));
        }
        let t = &self.tolerances;
        if !(t.ks_level > 0.0 && t.ks_level < 1.0) {
            return Err(at("/tolerances/ks_level", "must lie in (0, 1)"));
        }
        if !(t.se_multiplier > 0.0) {
            return Err(at("/tolerances/se_multiplier", "must be positive"));
        }
        if !(t.abs_tol >= 0.0) {
            return Err(at("/tolerances/abs_tol", "must be non-negative"));
        }
        if !(t.laplace_tol > 0.0) {
            return Err(at("/tolerances/laplace_tol", "must be positive"));
        }
        use Command::*;
        let name = self.command.name();
        let need = |present: bool, pointer: &str| if present { Ok(()) } else { Err(at(pointer, format!("required by `{name}`"))) };
        match self.command {
            Simulate | VerifyMargins | Cdf => {
                need(self.variogram.is_some(), "/variogram")?;
                need(self.sites.is_some(), "/sites")?;
            }
            VerifyStationarity => {
                need(self.variogram.is_some(), "/variogram")?;
                need(self.sites.is_some(), "/sites")?;
                need(self.shift_pairs.is_some(), "/shift_pairs")?;
            }
            VerifyLaplace => need(self.variogram.is_some(), "/variogram")?,
            ConvergeThm17 | ConvergeThm22 => {
                need(self.variogram.is_some(), "/variogram")?;
                need(self.sites.is_some(), "/sites")?;
                need(self.n.is_some(), "/n")?;
            }
            ConvergeAniso => {
                need(self.anisotropy.is_some(), "/anisotropy")?;
                need(self.sites.is_some(), "/sites")?;
                need(self.n.is_some(), "/n")?;
            }
            M3Extract => {
                need(self.variogram.is_some(), "/variogram")?;
                need(self.lattice.is_some(), "/lattice")?;
            }
            M3Drift => {
                need(self.variogram.is_some(), "/variogram")?;
                need(self.drift.is_some(), "/drift")?;
            }
        }
        if self.command == Cdf {
            need(self.cdf_thresholds.is_some(), "/cdf_thresholds")?;
        }
        if let Some(sites) = &self.sites {
            if sites.is_empty() {
                return Err(at("/sites", "must be non-empty"));
            }
        }
        if let Some(l) = &self.lattice {
            l.validate().map_err(|e| at("/lattice", e.to_string()))?;
        }
        Ok(())
    }

    pub fn convergence_options(&self) -> ConvergenceOptions {
        ConvergenceOptions {
            ks_level: self.tolerances.ks_level,
            se_multiplier: self.tolerances.se_multiplier,
            abs_tol: self.tolerances.abs_tol,
            mode: self.tolerances.maxima_mode,
        }
    }
}
