//! Confinement thresholds for θ- and z-pinches.
//!
//! With `u_α(r) = √((𝓔₀ + |q|ξ(r))² - m²)` the largest momentum a particle of species α can have,
//!
//! ```text
//! a_φ(r) = max_α u_α(r)/|q_α| + ζ(r)
//! a₃(r)  = max_α (|𝓖₀^α| + u_α(r))/|q_α| + ξ(r)
//! ```
//!
//! If the external potential dominates these thresholds on `[R, R₀]` and every ansatz vanishes on
//! the matching side of 𝓕 (θ-pinch) or 𝓖 (z-pinch), no particle can sit at `r ≥ R`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bounds::EnvelopePair;
use crate::densities::{DensityKernelInput, DensityQuadrature};
use crate::error::{Error, Result};
use crate::model::{ExternalPotential, ProductAnsatz, Species, Window};
use crate::profile::{AxisRule, RadialGrid, RadialProfile};
use crate::solver::{cumulative_moments, PotentialState};

/// The four confinement options.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PinchMode {
    /// `A_φᵉˣᵗ ≤ -a_φ`; negative species vanish for `𝓕 ≥ 0`, positive ones for `𝓕 ≤ 0`.
    #[serde(rename = "theta-a")]
    ThetaA,
    /// `A_φᵉˣᵗ ≥ a_φ`; negative species vanish for `𝓕 ≤ 0`, positive ones for `𝓕 ≥ 0`.
    #[serde(rename = "theta-b")]
    ThetaB,
    /// `A₃ᵉˣᵗ ≥ a₃`; negative species vanish for `𝓖 ≤ 𝓖₀`, positive ones for `𝓖 ≥ 𝓖₀`.
    #[serde(rename = "z-a")]
    ZA,
    /// `A₃ᵉˣᵗ ≤ -a₃`; negative species vanish for `𝓖 ≥ 𝓖₀`, positive ones for `𝓖 ≤ 𝓖₀`.
    #[serde(rename = "z-b")]
    ZB,
}

impl PinchMode {
    pub fn is_theta(&self) -> bool {
        matches!(self, PinchMode::ThetaA | PinchMode::ThetaB)
    }

    /// True when a species of charge `q` must have its support below the cutoff.
    fn support_below(&self, q: f64) -> bool {
        match self {
            PinchMode::ThetaA | PinchMode::ZB => q < 0.0,
            PinchMode::ThetaB | PinchMode::ZA => q > 0.0,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PinchMode::ThetaA => "theta-a",
            PinchMode::ThetaB => "theta-b",
            PinchMode::ZA => "z-a",
            PinchMode::ZB => "z-b",
        }
    }
}

impl std::str::FromStr for PinchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theta-a" => Ok(PinchMode::ThetaA),
            "theta-b" => Ok(PinchMode::ThetaB),
            "z-a" => Ok(PinchMode::ZA),
            "z-b" => Ok(PinchMode::ZB),
            other => Err(Error::config(format!("unknown pinch mode '{other}'"))),
        }
    }
}

/// Confinement target: mode and radius `R` with `0 < R < R₀`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinchSpec {
    pub mode: PinchMode,
    pub r_confine: f64,
}

impl PinchSpec {
    pub fn validate(&self, r0: f64) -> Result<()> {
        if !(self.r_confine > 0.0 && self.r_confine < r0) {
            return Err(Error::config(format!(
                "confinement radius {} must lie in (0, {r0})",
                self.r_confine
            )));
        }
        Ok(())
    }
}

fn momentum_bound(s: &Species, xi: f64) -> Result<f64> {
    let e0 = s.ansatz.cutoff_energy();
    if e0 < s.mass {
        return Err(Error::config(format!(
            "species '{}': cutoff energy {e0} below the rest mass {}",
            s.name, s.mass
        )));
    }
    let top = e0 + s.charge.abs() * xi;
    Ok((top * top - s.mass * s.mass).sqrt())
}

/// `a_φ(r)`.
pub fn threshold_a_phi(species: &[Species], pair: &EnvelopePair, r: f64) -> Result<f64> {
    let xi = pair.xi(r);
    let mut best = 0.0f64;
    for s in species {
        best = best.max(momentum_bound(s, xi)? / s.charge.abs());
    }
    Ok(best + pair.zeta(r))
}

/// The 𝓖 cutoff `𝓖₀` of each species for a z-pinch mode, read off the ansatz support.
pub fn g_cutoffs(species: &[Species], mode: PinchMode) -> Vec<f64> {
    species
        .iter()
        .map(|s| {
            let (lo, hi) = s.ansatz.g_support();
            if mode.support_below(s.charge) {
                hi
            } else {
                lo
            }
        })
        .collect()
}

/// `a₃(r)` with the 𝓖 cutoffs of `mode`.
pub fn threshold_a_3(
    species: &[Species],
    pair: &EnvelopePair,
    r: f64,
    mode: PinchMode,
) -> Result<f64> {
    let xi = pair.xi(r);
    let mut best = 0.0f64;
    for (s, g0) in species.iter().zip(g_cutoffs(species, mode)) {
        best = best.max((g0.abs() + momentum_bound(s, xi)?) / s.charge.abs());
    }
    Ok(best + xi)
}

/// Rejects species whose ansatz support does not sit on the side required by `mode`.
pub fn validate_mode(species: &[Species], mode: PinchMode) -> Result<()> {
    for s in species {
        let below = mode.support_below(s.charge);
        let (lo, hi) = if mode.is_theta() {
            s.ansatz.f_support()
        } else {
            s.ansatz.g_support()
        };
        let var = if mode.is_theta() { "F" } else { "G" };
        if mode.is_theta() {
            let ok = if below { hi <= 0.0 } else { lo >= 0.0 };
            if !ok {
                return Err(Error::config(format!(
                    "species '{}' (charge {}) must vanish for {var} {} 0 in mode {}",
                    s.name,
                    s.charge,
                    if below { ">=" } else { "<=" },
                    mode.name()
                )));
            }
        } else if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::config(format!(
                "species '{}' needs a bounded {var} support to define the cutoff in mode {}",
                s.name,
                mode.name()
            )));
        }
    }
    Ok(())
}

/// Radii where the confinement inequality is checked: `R` and every grid node in `[R, R₀]`.
fn check_points(grid: &RadialGrid, r_confine: f64) -> Vec<f64> {
    std::iter::once(r_confine)
        .chain(grid.nodes().iter().copied().filter(|&r| r > r_confine))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfinementVerdict {
    pub mode: PinchMode,
    pub r_confine: f64,
    pub pass: bool,
    /// Smallest margin of the mode's inequality, in potential units; negative means violated.
    pub worst_margin: f64,
    pub worst_r: f64,
    /// False for the diagnostic variant that uses computed potentials instead of envelopes.
    pub certified: bool,
}

fn margin(mode: PinchMode, ext: &ExternalPotential, r: f64, a_phi: f64, a_3: f64) -> f64 {
    match mode {
        PinchMode::ThetaA => -a_phi - ext.a_phi.value(r),
        PinchMode::ThetaB => ext.a_phi.value(r) - a_phi,
        PinchMode::ZA => ext.a_3.value(r) - a_3,
        PinchMode::ZB => -a_3 - ext.a_3.value(r),
    }
}

fn verdict_from(
    spec: &PinchSpec,
    points: &[f64],
    certified: bool,
    mut margin_at: impl FnMut(f64) -> Result<f64>,
) -> Result<ConfinementVerdict> {
    let mut worst = (f64::INFINITY, spec.r_confine);
    for &r in points {
        let m = margin_at(r)?;
        if m < worst.0 {
            worst = (m, r);
        }
    }
    Ok(ConfinementVerdict {
        mode: spec.mode,
        r_confine: spec.r_confine,
        pass: worst.0 >= 0.0,
        worst_margin: worst.0,
        worst_r: worst.1,
        certified,
    })
}

/// Checks the mode's inequality with the envelope thresholds on `[R, R₀]`.
pub fn check_confinement(
    ext: &ExternalPotential,
    spec: &PinchSpec,
    species: &[Species],
    pair: &EnvelopePair,
    grid: &RadialGrid,
) -> Result<ConfinementVerdict> {
    spec.validate(grid.r0())?;
    validate_mode(species, spec.mode)?;
    let points = check_points(grid, spec.r_confine);
    verdict_from(spec, &points, true, |r| {
        let (ap, a3) = if spec.mode.is_theta() {
            (threshold_a_phi(species, pair, r)?, 0.0)
        } else {
            (0.0, threshold_a_3(species, pair, r, spec.mode)?)
        };
        Ok(margin(spec.mode, ext, r, ap, a3))
    })
}

/// Diagnostic variant with `|φ(r)|, |A_φ(r)|, |A₃(r)|` of a computed state in place of ξ and ζ.
/// Not a certificate.
pub fn check_confinement_sharp(
    ext: &ExternalPotential,
    spec: &PinchSpec,
    species: &[Species],
    state: &PotentialState,
) -> Result<ConfinementVerdict> {
    let grid = state.grid();
    spec.validate(grid.r0())?;
    validate_mode(species, spec.mode)?;
    let g0 = g_cutoffs(species, spec.mode);
    let points = check_points(grid, spec.r_confine);
    verdict_from(spec, &points, false, |r| {
        let phi = state.phi.value(r).abs();
        let (mut ap, mut a3) = (0.0f64, 0.0f64);
        for (s, g0) in species.iter().zip(&g0) {
            let u = momentum_bound(s, phi)?;
            ap = ap.max(u / s.charge.abs());
            a3 = a3.max((g0.abs() + u) / s.charge.abs());
        }
        ap += state.a_phi.value(r).abs();
        a3 += state.a_3.value(r).abs();
        Ok(margin(spec.mode, ext, r, ap, a3))
    })
}

/// `sup_{[R, R₀]} a_φ(r)/r`: the smallest `|b|` for which `A_φᵉˣᵗ = b r` confines.
pub fn homogeneous_b_threshold(
    species: &[Species],
    pair: &EnvelopePair,
    r_confine: f64,
    grid: &RadialGrid,
) -> Result<f64> {
    if !(r_confine > 0.0) {
        return Err(Error::config("confinement radius must be positive"));
    }
    let mut best = 0.0f64;
    for r in check_points(grid, r_confine) {
        best = best.max(threshold_a_phi(species, pair, r)? / r);
    }
    Ok(best)
}

/// Radius of the momentum ball outside of which every f vanishes: `max_α u_α(R₀)`.
pub fn support_speed_bound(species: &[Species], pair: &EnvelopePair, r0: f64) -> Result<f64> {
    let xi = pair.xi(r0);
    species
        .iter()
        .try_fold(0.0f64, |m, s| Ok(m.max(momentum_bound(s, xi)?)))
}

/// Particles per unit length `∫∫ f dv d(x₁, x₂)` of each species.
pub fn slice_numbers(
    state: &PotentialState,
    species: &[Species],
    ext: &ExternalPotential,
    quad: &DensityQuadrature,
) -> Result<Vec<f64>> {
    let grid = state.grid();
    let x = grid.nodes();
    species
        .iter()
        .map(|s| {
            let mut dens = Vec::with_capacity(x.len());
            for (i, &r) in x.iter().enumerate() {
                let input = DensityKernelInput {
                    r,
                    a: state.phi.values()[i],
                    b: state.a_phi.values()[i] + ext.a_phi.value(r),
                    c: state.a_3.values()[i] + ext.a_3.value(r),
                };
                // g₁ = 4π q n
                dens.push(quad.eval_species(s, &input)?[0] / (4.0 * PI * s.charge));
            }
            let n = RadialProfile::new(grid.clone(), dens, AxisRule::Free)?;
            let [p, ..] = cumulative_moments(&n);
            Ok(2.0 * PI * p[x.len() - 1])
        })
        .collect()
}

/// Builtin product ansatz whose window placement suits `mode` for a species of charge `q`.
///
/// θ modes cut 𝓕 at 0 with a step of width `f_width` and use the symmetric 𝓖 bump `[-g_half, g_half]`;
/// z modes use the 𝓖 bump alone, whose edges serve as `𝓖₀`.
pub fn pinch_preset(
    mode: PinchMode,
    q: f64,
    amplitude: f64,
    e0: f64,
    f_width: f64,
    g_half: f64,
) -> ProductAnsatz {
    let f_window = if !mode.is_theta() {
        Window::Unbounded
    } else if mode.support_below(q) {
        Window::Below {
            edge: 0.0,
            width: f_width,
        }
    } else {
        Window::Above {
            edge: 0.0,
            width: f_width,
        }
    };
    ProductAnsatz {
        amplitude,
        k: 3,
        e0,
        e_window: Window::Above {
            edge: 0.0,
            width: 0.5,
        },
        f_window,
        g_window: Window::Bump {
            lo: -g_half,
            hi: g_half,
        },
        nontrivial: true,
    }
}
