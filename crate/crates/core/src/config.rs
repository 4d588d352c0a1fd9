//! Run configuration in TOML.
//!
//! ```toml
//! [domain]
//! r0 = 1.0
//! grid = 257
//! r_confine = 0.6          # needed by confine, extend and sweep
//!
//! [external]
//! a_phi = { kind = "linear", slope = -2.0 }
//! a_3 = { kind = "ramp", amplitude = 3.0, width = 0.4 }   # or { kind = "tabulated", file = "a3.csv" }
//!
//! [pinch]
//! mode = "theta-a"
//!
//! [[species]]
//! name = "electrons"
//! mass = 1.0
//! charge = -1.0
//! [species.ansatz]
//! kind = "product"
//! amplitude = 0.03
//! k = 3
//! e0 = 1.5
//! f_window = { kind = "below", edge = 0.0, width = 0.3 }
//! g_window = { kind = "bump", lo = -1.0, hi = 1.0 }
//! ```
//!
//! `[quadrature]`, `[solver]`, `[audit]`, `[sweep]` and `[output]` are optional.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::confinement::{PinchMode, PinchSpec};
use crate::densities::QuadratureSpec;
use crate::error::{Error, Result};
use crate::model::{ExternalComponent, ExternalPotential, Species};
use crate::profile::{AxisRule, RadialGrid, RadialProfile};
use crate::solver::SolverOptions;
use crate::verify::SamplePlan;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub r0: f64,
    #[serde(default = "default_grid")]
    pub grid: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_confine: Option<f64>,
}

fn default_grid() -> usize {
    257
}

/// One external component as written in the file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ExternalSpec {
    #[default]
    Zero,
    Linear {
        slope: f64,
    },
    Ramp {
        amplitude: f64,
        width: f64,
    },
    /// Two-column `r,value` file, relative to the config file; `#` starts a comment.
    Tabulated {
        file: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExternalConfig {
    pub a_phi: ExternalSpec,
    pub a_3: ExternalSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinchConfig {
    pub mode: PinchMode,
}

/// Scan of external field strengths for the confine verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
    /// Scale a reference field at the confinement threshold (homogeneous `b*` for θ modes,
    /// `a₃(R₀)` ramp for z modes) instead of the configured external potential.
    pub relative: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            min: 0.0,
            max: 2.0,
            steps: 41,
            relative: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainConfig,
    #[serde(default)]
    pub quadrature: QuadratureSpec,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub external: ExternalConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pinch: Option<PinchConfig>,
    #[serde(default)]
    pub audit: SamplePlan,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub species: Vec<Species>,
    /// Directory that relative file references resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    /// Parses and validates; parse errors carry the line and column.
    pub fn from_toml(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.base_dir = base_dir.into();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot serialize config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.domain;
        if !(d.r0 > 0.0 && d.r0.is_finite()) {
            return Err(Error::config(format!(
                "domain.r0 must be positive, got {}",
                d.r0
            )));
        }
        if d.grid < 4 {
            return Err(Error::config(format!(
                "domain.grid must be at least 4, got {}",
                d.grid
            )));
        }
        if let Some(r) = d.r_confine {
            if !(r > 0.0 && r < d.r0) {
                return Err(Error::config(format!(
                    "domain.r_confine must lie in (0, {}), got {r}",
                    d.r0
                )));
            }
        }
        if self.species.is_empty() {
            return Err(Error::config("species list is empty"));
        }
        for s in &self.species {
            s.validate()?;
        }
        self.quadrature.validate()?;
        self.solver.validate()?;
        self.audit.validate()?;
        let sw = &self.sweep;
        if !(sw.steps >= 2 && sw.min.is_finite() && sw.max > sw.min) {
            return Err(Error::config("sweep needs steps >= 2 and min < max"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<RadialGrid> {
        RadialGrid::uniform(self.domain.r0, self.domain.grid)
    }

    fn component(&self, spec: &ExternalSpec, axis: AxisRule) -> Result<ExternalComponent> {
        Ok(match spec {
            ExternalSpec::Zero => ExternalComponent::Zero,
            ExternalSpec::Linear { slope } => ExternalComponent::Linear { slope: *slope },
            ExternalSpec::Ramp { amplitude, width } => ExternalComponent::Ramp {
                amplitude: *amplitude,
                width: *width,
            },
            ExternalSpec::Tabulated { file } => {
                let (r, v) = read_table(&self.base_dir.join(file))?;
                if *r.last().unwrap_or(&0.0) < self.domain.r0 {
                    return Err(Error::config(format!(
                        "{} does not reach r0 = {}",
                        file.display(),
                        self.domain.r0
                    )));
                }
                let grid = RadialGrid::from_nodes(r)?;
                ExternalComponent::Profile(RadialProfile::new(grid, v, axis)?)
            }
        })
    }

    pub fn external_potential(&self) -> Result<ExternalPotential> {
        ExternalPotential::new(
            self.component(&self.external.a_phi, AxisRule::Free)?,
            self.component(&self.external.a_3, AxisRule::ZeroSlope)?,
        )
    }

    pub fn pinch_spec(&self) -> Result<PinchSpec> {
        let mode = self
            .pinch
            .ok_or_else(|| Error::config("this mode needs a [pinch] section"))?
            .mode;
        Ok(PinchSpec {
            mode,
            r_confine: self.r_confine()?,
        })
    }

    pub fn r_confine(&self) -> Result<f64> {
        self.domain
            .r_confine
            .ok_or_else(|| Error::config("this mode needs domain.r_confine"))
    }

    /// SHA-256 of the canonical serialization plus every referenced table file.
    pub fn hash(&self) -> Result<String> {
        let mut h = Sha256::new();
        h.update(self.to_toml()?.as_bytes());
        for spec in [&self.external.a_phi, &self.external.a_3] {
            if let ExternalSpec::Tabulated { file } = spec {
                let bytes = std::fs::read(self.base_dir.join(file))
                    .map_err(|e| Error::config(format!("cannot read {}: {e}", file.display())))?;
                h.update(&bytes);
            }
        }
        Ok(format!("{:x}", h.finalize()))
    }
}

fn read_table(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
    let (mut r, mut v) = (Vec::new(), Vec::new());
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Option<Vec<f64>> = cols.iter().map(|c| c.parse().ok()).collect();
        match parsed.as_deref() {
            Some([a, b]) => {
                r.push(*a);
                v.push(*b);
            }
            // a header row is allowed before any data
            None if r.is_empty() => {}
            _ => {
                return Err(Error::config(format!(
                    "{}:{}: expected two numbers 'r,value'",
                    path.display(),
                    lineno + 1
                )));
            }
        }
    }
    Ok((r, v))
}
