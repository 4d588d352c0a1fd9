//! Source kernels `g₁ = 4πρ`, `g₂ = 4πj_φ`, `g₃ = 4πj₃` as functions of `(r, φ, A_φᵗᵒᵗ, A₃ᵗᵒᵗ)`,
//! and the constants `c₁`, `c₂` of the a priori estimate `|g_i| ≤ c₁ + c₂|φ|`.
//!
//! For one species with `a = φ(r)`, `b = A_φᵗᵒᵗ(r)`, `c = A₃ᵗᵒᵗ(r)`:
//!
//! ```text
//! g = 4π q ∫d𝓖 ∫d𝓔 ∫₀^{2π}dθ (𝓔 - qa, W sin θ, 𝓖 - qc) η(𝓔, r W sin θ + r q b, 𝓖)
//! W = √((𝓔 - qa)² - (𝓖 - qc)² - m²),   𝓔 ≥ √(m² + (𝓖 - qc)²) + qa
//! ```
//!
//! The energy integral is taken in `t = √(𝓔 - 𝓔_min)`, which removes the square-root endpoint
//! behaviour of `W` and makes the integrand smooth in `t`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Ansatz, Species};
use crate::quad::{panels, GaussLegendre};

/// Node counts for the nested density quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureSpec {
    /// Trapezoid nodes for θ ∈ [0, 2π).
    pub n_theta: usize,
    /// Gauss-Legendre nodes per energy panel.
    pub n_energy: usize,
    /// Gauss-Legendre nodes per 𝓖 panel.
    pub n_g: usize,
    /// Relative change allowed when all node counts are doubled.
    pub guard: f64,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            n_theta: 128,
            n_energy: 16,
            n_g: 16,
            guard: 1e-5,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_theta < 4 || self.n_energy < 4 || self.n_g < 4 {
            return Err(Error::config(format!(
                "quadrature node counts must be at least 4, got θ={} 𝓔={} 𝓖={}",
                self.n_theta, self.n_energy, self.n_g
            )));
        }
        if !(self.guard > 0.0 && self.guard.is_finite()) {
            return Err(Error::config("quadrature guard must be positive"));
        }
        Ok(())
    }

    pub fn doubled(&self) -> QuadratureSpec {
        QuadratureSpec {
            n_theta: 2 * self.n_theta,
            n_energy: 2 * self.n_energy,
            n_g: 2 * self.n_g,
            guard: self.guard,
        }
    }
}

/// Arguments `(r, a, b, c)` of the kernels: radius, φ, A_φᵗᵒᵗ and A₃ᵗᵒᵗ at that radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityKernelInput {
    pub r: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Prepared rules for repeated kernel evaluations.
#[derive(Debug, Clone)]
pub struct DensityQuadrature {
    spec: QuadratureSpec,
    gl_e: GaussLegendre,
    gl_g: GaussLegendre,
    half_sines: Vec<f64>,
    n_zero: usize,
}

impl DensityQuadrature {
    pub fn new(spec: QuadratureSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_theta;
        // nodes θ_j = 2πj/n with 0 < θ_j < π; the mirrors 2π - θ_j are implied
        let half_sines = (1..n.div_ceil(2))
            .map(|j| (2.0 * PI * j as f64 / n as f64).sin())
            .collect();
        Ok(DensityQuadrature {
            spec,
            gl_e: GaussLegendre::new(spec.n_energy),
            gl_g: GaussLegendre::new(spec.n_g),
            half_sines,
            n_zero: if n % 2 == 0 { 2 } else { 1 },
        })
    }

    pub fn spec(&self) -> &QuadratureSpec {
        &self.spec
    }

    /// `(g₁, g₂, g₃)` of a single species.
    pub fn eval_species(&self, species: &Species, input: &DensityKernelInput) -> Result<[f64; 3]> {
        let DensityKernelInput { r, a, b, c } = *input;
        let (m, q) = (species.mass, species.charge);
        let ansatz: &Ansatz = &species.ansatz;
        let e0 = ansatz.cutoff_energy();
        let top = e0 - q * a;
        if !(top > m) {
            return Ok([0.0; 3]);
        }
        let d_max = (top * top - m * m).sqrt();
        let (s_lo, s_hi) = ansatz.g_support();
        let g_lo = (q * c - d_max).max(s_lo);
        let g_hi = (q * c + d_max).min(s_hi);
        if !(g_hi > g_lo) {
            return Ok([0.0; 3]);
        }
        let e_floor = ansatz.energy_floor();
        let mut g_breaks = ansatz.g_breakpoints();
        let floor_rel = e_floor - q * a;
        if floor_rel > m {
            let d = (floor_rel * floor_rel - m * m).sqrt();
            g_breaks.extend([q * c - d, q * c + d]);
        }
        g_breaks.push(q * c);
        let e_breaks = ansatz.energy_breakpoints();
        let dtheta = 2.0 * PI / self.spec.n_theta as f64;
        let (rqb, mut g1, mut g2, mut g3) = (r * q * b, 0.0, 0.0, 0.0);
        let mut t_cuts = Vec::with_capacity(e_breaks.len());
        for (glo, ghi) in panels(g_lo, g_hi, &g_breaks) {
            for (g, wg) in self.gl_g.mapped(glo, ghi) {
                let d = g - q * c;
                let s = (m * m + d * d).sqrt();
                let e_min = s + q * a;
                let t_lo = (e_floor - e_min).max(0.0).sqrt();
                let t_hi = (e0 - e_min).max(0.0).sqrt();
                if !(t_hi > t_lo) {
                    continue;
                }
                t_cuts.clear();
                t_cuts.extend(
                    e_breaks
                        .iter()
                        .filter(|&&e| e > e_min)
                        .map(|&e| (e - e_min).sqrt()),
                );
                let mut tp = panels(t_lo, t_hi, &t_cuts);
                if tp.len() == 1 {
                    let mid = 0.5 * (t_lo + t_hi);
                    tp = vec![(t_lo, mid), (mid, t_hi)];
                }
                let (mut a1, mut a2, mut a3) = (0.0, 0.0, 0.0);
                for (tlo, thi) in tp {
                    for (t, wt) in self.gl_e.mapped(tlo, thi) {
                        let e = e_min + t * t;
                        let w = t * (2.0 * s + t * t).sqrt();
                        let (s0, s1) =
                            ansatz.theta_sums(e, g, r * w, rqb, &self.half_sines, self.n_zero);
                        // dE = 2t dt
                        let jac = wt * 2.0 * t * dtheta;
                        a1 += jac * (e - q * a) * s0;
                        a2 += jac * w * s1;
                        a3 += jac * s0;
                    }
                }
                g1 += wg * a1;
                g2 += wg * a2;
                g3 += wg * d * a3;
            }
        }
        let k = 4.0 * PI * q;
        let out = [k * g1, k * g2, k * g3];
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::Evaluation { r, a, b, c })
        }
    }

    /// `(g₁, g₂, g₃)` summed over species.
    pub fn eval(&self, species: &[Species], input: &DensityKernelInput) -> Result<[f64; 3]> {
        let mut g = [0.0; 3];
        for s in species {
            let gs = self.eval_species(s, input)?;
            for i in 0..3 {
                g[i] += gs[i];
            }
        }
        Ok(g)
    }
}

/// `(g₁, g₂, g₃)` at one input; builds the rules on every call.
pub fn eval_g(
    species: &[Species],
    input: &DensityKernelInput,
    spec: &QuadratureSpec,
) -> Result<[f64; 3]> {
    DensityQuadrature::new(*spec)?.eval(species, input)
}

/// `(∫|𝓔| η* d(𝓔,𝓖), ∫ η* d(𝓔,𝓖))` for one ansatz.
fn majorant_moments(ansatz: &Ansatz) -> Result<(f64, f64)> {
    match ansatz {
        Ansatz::Product(p) => {
            let (e_lo, _) = p.e_window.support();
            let (g_lo, g_hi) = p.g_window.support();
            if !(e_lo.is_finite() && g_lo.is_finite() && g_hi.is_finite()) {
                return Err(Error::config(
                    "majorant is not integrable: energy or 𝓖 support unbounded",
                ));
            }
            if p.amplitude == 0.0 || e_lo >= p.e0 {
                return Ok((0.0, 0.0));
            }
            let gl = GaussLegendre::new(24);
            let k = p.k as i32;
            let mut breaks = p.e_window.breakpoints();
            breaks.push(0.0);
            let (mut m1, mut m0) = (0.0, 0.0);
            for (a, b) in panels(e_lo, p.e0, &breaks) {
                for (e, w) in gl.mapped(a, b) {
                    let v = (p.e0 - e).powi(k) * p.e_window.eval(e, k);
                    m1 += w * e.abs() * v;
                    m0 += w * v;
                }
            }
            let mut gi = 0.0;
            for (a, b) in panels(g_lo, g_hi, &p.g_window.breakpoints()) {
                gi += gl.integrate(a, b, |g| p.g_window.eval(g, k));
            }
            Ok((p.amplitude * m1 * gi, p.amplitude * m0 * gi))
        }
        Ansatz::Tabulated(t) => {
            // η* is the cell maximum over each (𝓔, 𝓖) cell: integrate piecewise constants exactly
            let ng = t.g_nodes.len();
            let (mut m1, mut m0) = (0.0, 0.0);
            for i in 0..t.e_nodes.len() - 1 {
                let (ea, eb) = (t.e_nodes[i], t.e_nodes[i + 1]);
                let abs_moment = if ea >= 0.0 {
                    0.5 * (eb * eb - ea * ea)
                } else if eb <= 0.0 {
                    0.5 * (ea * ea - eb * eb)
                } else {
                    0.5 * (ea * ea + eb * eb)
                };
                for j in 0..ng - 1 {
                    let v = [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)]
                        .iter()
                        .map(|&(a, b)| t.majorant[a * ng + b])
                        .fold(0.0, f64::max);
                    let dg = t.g_nodes[j + 1] - t.g_nodes[j];
                    m1 += v * abs_moment * dg;
                    m0 += v * (eb - ea) * dg;
                }
            }
            Ok((m1, m0))
        }
    }
}

/// `c₁ = 8π² Σ |q| ∫|𝓔| η* d(𝓔,𝓖)`, `c₂ = 8π² Σ q² ∫ η* d(𝓔,𝓖)`.
pub fn constants_c1_c2(species: &[Species]) -> Result<(f64, f64)> {
    let (mut c1, mut c2) = (0.0, 0.0);
    for s in species {
        let (m1, m0) = majorant_moments(&s.ansatz)?;
        c1 += s.charge.abs() * m1;
        c2 += s.charge * s.charge * m0;
    }
    let k = 8.0 * PI * PI;
    Ok((k * c1, k * c2))
}

/// Outcome of the order-doubling check of the density quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuardReport {
    /// Largest change of any `g_i` under doubling, relative to the largest `|g₁|`.
    pub max_relative_change: f64,
    pub guard: f64,
    pub pass: bool,
}

/// Evaluates the kernels at `inputs` with `spec` and with every node count doubled.
pub fn check_guard(
    species: &[Species],
    inputs: &[DensityKernelInput],
    spec: &QuadratureSpec,
) -> Result<GuardReport> {
    let coarse = DensityQuadrature::new(*spec)?;
    let fine = DensityQuadrature::new(spec.doubled())?;
    let mut scale = 0.0f64;
    let mut diff = 0.0f64;
    for input in inputs {
        let a = coarse.eval(species, input)?;
        let b = fine.eval(species, input)?;
        scale = scale.max(b[0].abs());
        for i in 0..3 {
            diff = diff.max((a[i] - b[i]).abs());
        }
    }
    let rel = if scale > 0.0 { diff / scale } else { diff };
    Ok(GuardReport {
        max_relative_change: rel,
        guard: spec.guard,
        pass: rel <= spec.guard,
    })
}
