//! TOML run configuration: parsing, validation, conversion to [`RunConfig`],
//! and the annotated template printed by `init-config`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::chem::{PropagationRoute, VUpdate};
use crate::error::{Error, Result};
use crate::model::{Discretization, DomainSpec, ModelParams};
use crate::pic::AssignmentOrder;
use crate::simulator::{InitialData, ResamplePolicy, RunConfig};
use crate::spectral::KernelFlavor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub dim: usize,
    pub length: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Vec<f64>>,
}

/// Filter scale: a number, `"h"` (equal to the grid size) or `"optimal"` (`H^{8/13}`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum H0Spec {
    Value(f64),
    Named(String),
}

impl H0Spec {
    pub fn resolve(&self, h: usize) -> Result<f64> {
        match self {
            H0Spec::Value(v) => Ok(*v),
            H0Spec::Named(s) if s == "h" => Ok(h as f64),
            H0Spec::Named(s) if s == "optimal" => Ok((h as f64).powf(8.0 / 13.0)),
            H0Spec::Named(s) => {
                Err(Error::Config(format!("discretization.h0: expected a number, \"h\" or \"optimal\", got \"{s}\"")))
            }
        }
    }
}

fn default_h0() -> H0Spec {
    H0Spec::Named("h".into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationSection {
    /// Grid size per axis.
    pub grid: usize,
    #[serde(default = "default_h0")]
    pub h0: H0Spec,
    pub tau: f64,
    pub t_final: f64,
    pub particles: usize,
}

fn quartic() -> AssignmentOrder {
    AssignmentOrder::Quartic4
}
fn linear() -> AssignmentOrder {
    AssignmentOrder::Linear2
}
fn implicit() -> VUpdate {
    VUpdate::Implicit
}
fn lattice() -> KernelFlavor {
    KernelFlavor::Lattice
}
fn aliased() -> KernelFlavor {
    KernelFlavor::Aliased
}
fn auto() -> PropagationRoute {
    PropagationRoute::Auto
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsSection {
    #[serde(default = "quartic")]
    pub deposit_order: AssignmentOrder,
    #[serde(default = "linear")]
    pub interp_order: AssignmentOrder,
    #[serde(default = "implicit")]
    pub v_update: VUpdate,
    #[serde(default = "lattice")]
    pub kernel: KernelFlavor,
    #[serde(default)]
    pub filter: bool,
    #[serde(default = "aliased")]
    pub filter_flavor: KernelFlavor,
    #[serde(default = "auto")]
    pub route: PropagationRoute,
    #[serde(default)]
    pub neutral_growth: bool,
    #[serde(default)]
    pub allow_zero_params: bool,
}

impl Default for NumericsSection {
    fn default() -> Self {
        Self {
            deposit_order: quartic(),
            interp_order: linear(),
            v_update: implicit(),
            kernel: lattice(),
            filter: false,
            filter_flavor: aliased(),
            route: auto(),
            neutral_growth: false,
            allow_zero_params: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plot_grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitialSection {
    Benchmark2d,
    Benchmark3d,
    Custom { u: String, v: String, m: String, w: String },
}

fn default_reference_grid() -> usize {
    256
}
fn default_reference_dt() -> f64 {
    1e-3
}
fn default_target() -> usize {
    crate::diagnostics::COMPARISON_GRID
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    #[serde(default = "default_reference_grid")]
    pub reference_grid: usize,
    #[serde(default = "default_reference_dt")]
    pub reference_dt: f64,
    /// Report times; defaults to four equal intervals up to `t_final`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    #[serde(default = "default_target")]
    pub comparison_grid: usize,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self {
            reference_grid: default_reference_grid(),
            reference_dt: default_reference_dt(),
            times: None,
            comparison_grid: default_target(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSection {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub resolutions: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison_grid: Option<usize>,
}

/// The whole configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: u64,
    pub model: ModelParams,
    pub domain: DomainSection,
    pub discretization: DiscretizationSection,
    #[serde(default)]
    pub numerics: NumericsSection,
    #[serde(default)]
    pub resample: ResamplePolicy,
    #[serde(default)]
    pub output: OutputSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub compare: CompareSection,
    #[serde(default)]
    pub convergence: ConvergenceSection,
}

impl ConfigFile {
    /// Parses TOML text; errors carry the line and column of the problem.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        cfg.to_run_config()?;
        Ok(cfg)
    }

    /// Reads a TOML file, or the `config` entry of a run manifest (`.json`).
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            let v: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let inner = v
                .get("config")
                .and_then(|c| c.as_str())
                .ok_or_else(|| Error::Config(format!("{}: manifest has no `config` entry", path.display())))?;
            return Self::parse(inner).map_err(|e| Error::Config(format!("{} (embedded config): {e}", path.display())));
        }
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration always serializes")
    }

    pub fn initial_data(&self) -> Result<InitialData> {
        Ok(match &self.initial {
            InitialSection::Benchmark2d => InitialData::Benchmark2d,
            InitialSection::Benchmark3d => InitialData::Benchmark3d,
            InitialSection::Custom { u, v, m, w } => {
                let field = |name: &str, src: &str| {
                    src.parse().map_err(|e: Error| Error::Config(format!("initial.{name}: {e}")))
                };
                InitialData::Custom { u: field("u", u)?, v: field("v", v)?, m: field("m", m)?, w: field("w", w)? }
            }
        })
    }

    pub fn to_run_config(&self) -> Result<RunConfig> {
        let wrap = |e: Error| match e {
            Error::InvalidParameter(m) => Error::Config(m),
            other => other,
        };
        let d = &self.domain;
        let domain =
            DomainSpec::new(d.dim, d.length, d.origin.clone().unwrap_or_else(|| vec![0.0; d.dim])).map_err(wrap)?;
        let disc_s = &self.discretization;
        let h0 = disc_s.h0.resolve(disc_s.grid)?;
        let disc = Discretization::new(disc_s.grid, h0, disc_s.tau, disc_s.t_final, disc_s.particles, domain.length)
            .map_err(wrap)?;
        if let Some(dim) = self.initial_data()?.dim() {
            if dim != domain.dim {
                return Err(Error::Config(format!("initial data `{}` needs domain.dim = {dim}", self.initial_kind())));
            }
        }
        let n = &self.numerics;
        let cfg = RunConfig {
            params: self.model,
            domain,
            disc,
            seed: self.seed,
            deposit_order: n.deposit_order,
            interp_order: n.interp_order,
            v_update: n.v_update,
            kernel: n.kernel,
            filter: n.filter,
            filter_flavor: n.filter_flavor,
            route: n.route,
            resample: self.resample,
            snapshot_every: self.output.snapshot_every,
            plot_grid: self.output.plot_grid.unwrap_or(if d.dim == 2 { 128 } else { 32 }),
            plot_order: AssignmentOrder::Linear2,
            neutral_growth: n.neutral_growth,
            allow_zero_params: n.allow_zero_params,
            output_dir: self.output.dir.clone(),
        };
        cfg.validate().map_err(wrap)?;
        Ok(cfg)
    }

    fn initial_kind(&self) -> &'static str {
        match self.initial {
            InitialSection::Benchmark2d => "benchmark2d",
            InitialSection::Benchmark3d => "benchmark3d",
            InitialSection::Custom { .. } => "custom",
        }
    }
}

/// Annotated starting configuration for `dim` = 2 or 3.
pub fn template(dim: usize) -> String {
    let (grid, plot, kind, origin) =
        if dim == 3 { (32, 32, "benchmark3d", "[0.0, 0.0, 0.0]") } else { (64, 128, "benchmark2d", "[0.0, 0.0]") };
    format!(
        r#"# sipfw run configuration.
# Units: lengths in domain units (the box is [origin, origin + length]^dim),
# times in model time units, rates per unit time, diffusivities length^2/time.
# Unknown keys are rejected.

seed = 7

[model]
chi = 0.4      # haptotactic sensitivity
d_u = 0.01     # cell diffusivity
d_m = 0.01     # MDE diffusivity
d_w = 0.01     # oxygen diffusivity
alpha = 5.0    # ECM degradation rate per unit MDE
beta = 0.01    # MDE decay rate
gamma = 5.0    # oxygen production per unit ECM

[domain]
dim = {dim}
length = 6.0
origin = {origin}

[discretization]
grid = {grid}         # H, nodes per axis (even)
h0 = "h"          # filter scale: a number, "h" (= grid) or "optimal" (grid^(8/13))
tau = 0.001       # time step, at most 0.5
t_final = 0.1
particles = 16384

[numerics]
deposit_order = "quartic4"   # linear2 | quartic4
interp_order = "linear2"
v_update = "implicit"        # implicit | explicit_kernel
kernel = "lattice"           # lattice | aliased | theoretical
filter = false               # Gaussian low-pass at scale h0 every step
filter_flavor = "aliased"
route = "auto"               # auto | physical | spectral
neutral_growth = false       # freeze particle weights
allow_zero_params = false    # accept zero model constants

[resample]
kind = "off"                 # off | every (steps = N) | ratio_above (threshold = r)

[output]
snapshot_every = 50          # steps; 0 keeps only first and last
plot_grid = {plot}

[initial]
kind = "{kind}"              # benchmark2d | benchmark3d | custom (u, v, m, w expressions in x1, x2, x3)

[compare]
reference_grid = 256
reference_dt = 0.001
comparison_grid = 16
"#
    )
}
