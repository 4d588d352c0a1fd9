//! The fixed-point operator 𝓜 on potential triples and its Picard iteration.
//!
//! ```text
//! φ̃(r)   = -∫₀^r (ln r - ln s) s g₁(s) ds
//! Ã_φ(r) = -(1/r) ∫₀^r s ∫₀^s g₂(σ) dσ ds = -(r/2 ∫₀^r g₂ - 1/(2r) ∫₀^r σ² g₂)
//! Ã₃(r)  = -∫₀^r (ln r - ln s) s g₃(s) ds
//! ```
//!
//! with `g_i(s)` evaluated at `(s, φ(s), A_φᵗᵒᵗ(s), A₃ᵗᵒᵗ(s))`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::EnvelopePair;
use crate::densities::{constants_c1_c2, DensityKernelInput, DensityQuadrature, QuadratureSpec};
use crate::error::{Error, Result};
use crate::model::{ExternalPotential, Species};
use crate::profile::{AxisRule, RadialGrid, RadialProfile};
use crate::quad::GaussLegendre;

/// The unknown `(φ, A_φ, A₃)` of the fixed-point problem, on one shared grid.
#[derive(Debug, Clone)]
pub struct PotentialState {
    pub phi: RadialProfile,
    pub a_phi: RadialProfile,
    pub a_3: RadialProfile,
}

impl PotentialState {
    pub fn zeros(grid: &RadialGrid) -> Self {
        PotentialState {
            phi: RadialProfile::zeros(grid),
            a_phi: RadialProfile::zeros(grid),
            a_3: RadialProfile::zeros(grid),
        }
    }

    pub fn from_values(
        grid: &RadialGrid,
        phi: Vec<f64>,
        a_phi: Vec<f64>,
        a_3: Vec<f64>,
    ) -> Result<Self> {
        Ok(PotentialState {
            phi: RadialProfile::new(grid.clone(), phi, AxisRule::ZeroSlope)?,
            a_phi: RadialProfile::new(grid.clone(), a_phi, AxisRule::ZeroSlope)?,
            a_3: RadialProfile::new(grid.clone(), a_3, AxisRule::ZeroSlope)?,
        })
    }

    pub fn grid(&self) -> &RadialGrid {
        self.phi.grid()
    }

    pub fn components(&self) -> [&RadialProfile; 3] {
        [&self.phi, &self.a_phi, &self.a_3]
    }

    /// Sup norm of the difference over all three components.
    pub fn distance(&self, other: &PotentialState) -> f64 {
        self.components()
            .iter()
            .zip(other.components())
            .flat_map(|(a, b)| {
                a.values()
                    .iter()
                    .zip(b.values())
                    .map(|(x, y)| (x - y).abs())
            })
            .fold(0.0, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.components()
            .iter()
            .map(|p| p.sup_norm())
            .fold(0.0, f64::max)
    }

    pub fn scaled(&self, s: f64) -> PotentialState {
        PotentialState {
            phi: self.phi.scaled(s),
            a_phi: self.a_phi.scaled(s),
            a_3: self.a_3.scaled(s),
        }
    }

    /// `self + ω (other - self)`.
    fn blend(&self, other: &PotentialState, omega: f64) -> Result<PotentialState> {
        let mix = |a: &RadialProfile, b: &RadialProfile| -> Vec<f64> {
            a.values()
                .iter()
                .zip(b.values())
                .map(|(x, y)| x + omega * (y - x))
                .collect()
        };
        PotentialState::from_values(
            self.grid(),
            mix(&self.phi, &other.phi),
            mix(&self.a_phi, &other.a_phi),
            mix(&self.a_3, &other.a_3),
        )
    }
}

/// Node values of `(g₁, g₂, g₃)` induced by `state`.
pub fn evaluate_sources(
    state: &PotentialState,
    species: &[Species],
    ext: &ExternalPotential,
    quad: &DensityQuadrature,
) -> Result<[Vec<f64>; 3]> {
    let x = state.grid().nodes();
    let rows: Vec<[f64; 3]> = (0..x.len())
        .into_par_iter()
        .map(|i| {
            let r = x[i];
            let input = DensityKernelInput {
                r,
                a: state.phi.values()[i],
                b: state.a_phi.values()[i] + ext.a_phi.value(r),
                c: state.a_3.values()[i] + ext.a_3.value(r),
            };
            quad.eval(species, &input)
        })
        .collect::<Result<_>>()?;
    let mut out = [vec![0.0; x.len()], vec![0.0; x.len()], vec![0.0; x.len()]];
    for (i, g) in rows.iter().enumerate() {
        for c in 0..3 {
            out[c][i] = g[c];
        }
    }
    Ok(out)
}

/// `∫₀^h t^p ln t dt` for `p ≥ 0`.
fn log_moment(h: f64, p: usize) -> f64 {
    let q = (p + 1) as f64;
    h.powf(q) / q * (h.ln() - 1.0 / q)
}

/// Cumulative integrals of a spline-interpolated source at every node.
///
/// Returns `(∫₀^r s g, ∫₀^r s ln s g, ∫₀^r g, ∫₀^r s² g)`.
pub(crate) fn cumulative_moments(g: &RadialProfile) -> [Vec<f64>; 4] {
    let x = g.grid().nodes();
    let n = x.len();
    let gl = GaussLegendre::new(8);
    let mut out = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut acc = [0.0; 4];
    for i in 0..n - 1 {
        let (ri, h) = (x[i], x[i + 1] - x[i]);
        let c = g.panel_poly(i);
        // ∫₀^h t^p dt for p up to 5
        let mono: [f64; 6] = std::array::from_fn(|p| h.powi(p as i32 + 1) / (p + 1) as f64);
        let mut m = [0.0; 4];
        for (p, &cp) in c.iter().enumerate() {
            // s = rᵢ + t
            m[0] += cp * (ri * mono[p] + mono[p + 1]);
            m[2] += cp * mono[p];
            m[3] += cp * (ri * ri * mono[p] + 2.0 * ri * mono[p + 1] + mono[p + 2]);
        }
        m[1] = if ri == 0.0 {
            c.iter()
                .enumerate()
                .map(|(p, &cp)| cp * log_moment(h, p + 1))
                .sum()
        } else {
            gl.mapped(0.0, h)
                .map(|(t, w)| {
                    let s = ri + t;
                    w * s * s.ln() * (c[0] + t * (c[1] + t * (c[2] + t * c[3])))
                })
                .sum()
        };
        for k in 0..4 {
            acc[k] += m[k];
            out[k][i + 1] = acc[k];
        }
    }
    out
}

/// 𝓜 applied to prescribed source node values instead of the ones induced by a state.
pub fn apply_m_with_sources(
    grid: &RadialGrid,
    g1: &[f64],
    g2: &[f64],
    g3: &[f64],
) -> Result<PotentialState> {
    let x = grid.nodes();
    let spline = |g: &[f64]| RadialProfile::new(grid.clone(), g.to_vec(), AxisRule::Free);
    let [p1, l1, _, _] = cumulative_moments(&spline(g1)?);
    let [_, _, z0, z2] = cumulative_moments(&spline(g2)?);
    let [p3, l3, _, _] = cumulative_moments(&spline(g3)?);
    let n = x.len();
    let (mut phi, mut a_phi, mut a_3) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    for i in 1..n {
        let r = x[i];
        let lr = r.ln();
        phi[i] = -(lr * p1[i] - l1[i]);
        a_3[i] = -(lr * p3[i] - l3[i]);
        a_phi[i] = -(0.5 * r * z0[i] - z2[i] / (2.0 * r));
    }
    PotentialState::from_values(grid, phi, a_phi, a_3)
}

/// One application of 𝓜.
pub fn apply_m(
    state: &PotentialState,
    species: &[Species],
    ext: &ExternalPotential,
    quad: &DensityQuadrature,
) -> Result<PotentialState> {
    let [g1, g2, g3] = evaluate_sources(state, species, ext, quad)?;
    apply_m_with_sources(state.grid(), &g1, &g2, &g3)
}

/// Stopping and damping parameters of the Picard iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Under-relaxation factor ω ∈ (0, 1]; 1 is plain Picard iteration.
    pub relaxation: f64,
    /// Retain every iterate in the log for envelope checks.
    pub keep_iterates: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-10,
            max_iter: 200,
            relaxation: 1.0,
            keep_iterates: false,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::config("solver tolerance must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter must be at least 1"));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::config("relaxation factor must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// History of one Picard solve.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct IterationLog {
    /// `‖P^{k+1} - P^k‖_∞` per sweep.
    pub deltas: Vec<f64>,
    /// Smallest envelope margin `min(ξ - |φ^k|, ξ - |A₃^k|, ζ - |A_φ^k|)` per iterate, k ≥ 1.
    pub envelope_margins: Vec<f64>,
    /// `‖𝓜(P) - P‖_∞` of the returned state.
    pub residual: f64,
    pub converged: bool,
    pub c1: f64,
    pub c2: f64,
    /// `P⁰, P¹, …`, kept when requested.
    #[serde(skip)]
    pub iterates: Vec<PotentialState>,
}

impl IterationLog {
    pub fn iterations(&self) -> usize {
        self.deltas.len()
    }

    pub fn last_delta(&self) -> f64 {
        self.deltas.last().copied().unwrap_or(0.0)
    }

    /// Successive ratios `δ_{k+1} / δ_k`.
    pub fn ratios(&self) -> Vec<f64> {
        self.deltas.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

fn envelope_margin(state: &PotentialState, pair: &EnvelopePair, terms: Option<usize>) -> f64 {
    let x = state.grid().nodes();
    let mut margin = f64::INFINITY;
    for (i, &r) in x.iter().enumerate() {
        let (xi, zeta) = match terms {
            Some(m) => (pair.xi_partial(r, m), pair.zeta_partial(r, m)),
            None => (pair.xi(r), pair.zeta(r)),
        };
        margin = margin
            .min(xi - state.phi.values()[i].abs())
            .min(xi - state.a_3.values()[i].abs())
            .min(zeta - state.a_phi.values()[i].abs());
    }
    margin
}

/// Picard iteration `P^{k+1} = 𝓜(P^k)` from the zero state.
///
/// Stops at the first `P^k` with `‖𝓜(P^k) - P^k‖_∞ ≤ tol` and returns that `P^k`, so the returned
/// state carries a certified residual.
pub fn picard_solve(
    species: &[Species],
    ext: &ExternalPotential,
    grid: &RadialGrid,
    quad: &QuadratureSpec,
    opts: &SolverOptions,
) -> Result<(PotentialState, IterationLog)> {
    opts.validate()?;
    if species.is_empty() {
        return Err(Error::config("species list is empty"));
    }
    let rules = DensityQuadrature::new(*quad)?;
    let (c1, c2) = constants_c1_c2(species)?;
    let pair = EnvelopePair::new(c1, c2)?;
    let mut log = IterationLog {
        c1,
        c2,
        ..IterationLog::default()
    };
    let mut state = PotentialState::zeros(grid);
    if opts.keep_iterates {
        log.iterates.push(state.clone());
    }
    for k in 0..opts.max_iter {
        let next = apply_m(&state, species, ext, &rules)?;
        let delta = next.distance(&state);
        log.deltas.push(delta);
        if delta <= opts.tol {
            log.residual = delta;
            log.converged = true;
            return Ok((state, log));
        }
        state = if opts.relaxation == 1.0 {
            next
        } else {
            state.blend(&next, opts.relaxation)?
        };
        log.envelope_margins
            .push(envelope_margin(&state, &pair, Some(k + 1)));
        if opts.keep_iterates {
            log.iterates.push(state.clone());
        }
    }
    log.residual = log.last_delta();
    Err(Error::IterationLimit { log: Box::new(log) })
}

/// One bound violation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeViolation {
    /// Iterate index; `None` for the limit envelope check.
    pub iterate: Option<usize>,
    pub component: String,
    pub r: f64,
    pub value: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeVerdict {
    pub pass: bool,
    /// Smallest `bound - |value|` seen.
    pub min_margin: f64,
    pub violations: Vec<EnvelopeViolation>,
}

/// Absolute slack allowed on top of every envelope.
pub const ENVELOPE_SLACK: f64 = 1e-12;

fn check_one(
    state: &PotentialState,
    pair: &EnvelopePair,
    iterate: Option<usize>,
    verdict: &mut EnvelopeVerdict,
) {
    let x = state.grid().nodes();
    for (i, &r) in x.iter().enumerate() {
        let (xi, zeta) = match iterate {
            Some(k) => (pair.xi_partial(r, k), pair.zeta_partial(r, k)),
            None => (pair.xi(r), pair.zeta(r)),
        };
        let items = [
            ("phi", state.phi.values()[i], xi),
            ("A_3", state.a_3.values()[i], xi),
            ("A_phi", state.a_phi.values()[i], zeta),
        ];
        for (name, v, bound) in items {
            let margin = bound - v.abs();
            verdict.min_margin = verdict.min_margin.min(margin);
            if margin < -ENVELOPE_SLACK {
                verdict.violations.push(EnvelopeViolation {
                    iterate,
                    component: name.into(),
                    r,
                    value: v,
                    bound,
                });
            }
        }
    }
}

/// Checks `|φ|, |A₃| ≤ ξ` and `|A_φ| ≤ ζ` at every node.
///
/// Iterate `k` of `iterates` (with `iterates[0]` the zero state) is held to the k-term partial
/// sums; `limit` states are held to the full envelopes.
pub fn check_envelopes(
    iterates: &[PotentialState],
    limit: &[&PotentialState],
    pair: &EnvelopePair,
) -> EnvelopeVerdict {
    let mut verdict = EnvelopeVerdict {
        pass: true,
        min_margin: f64::INFINITY,
        violations: vec![],
    };
    for (k, s) in iterates.iter().enumerate() {
        check_one(s, pair, Some(k), &mut verdict);
    }
    for s in limit {
        check_one(s, pair, None, &mut verdict);
    }
    verdict.pass = verdict.violations.is_empty();
    verdict
}

/// Finite-difference Lipschitz quotient `‖𝓜(P + εD) - 𝓜(P)‖_∞ / ‖εD‖_∞`.
pub fn lipschitz_estimate(
    state: &PotentialState,
    direction: &PotentialState,
    eps: f64,
    species: &[Species],
    ext: &ExternalPotential,
    quad: &DensityQuadrature,
) -> Result<f64> {
    let shifted = state.blend(
        &PotentialState::from_values(
            state.grid(),
            add(state.phi.values(), direction.phi.values(), 1.0),
            add(state.a_phi.values(), direction.a_phi.values(), 1.0),
            add(state.a_3.values(), direction.a_3.values(), 1.0),
        )?,
        eps,
    )?;
    let d = shifted.distance(state);
    if d == 0.0 {
        return Ok(0.0);
    }
    let a = apply_m(state, species, ext, quad)?;
    let b = apply_m(&shifted, species, ext, quad)?;
    Ok(a.distance(&b) / d)
}

fn add(a: &[f64], b: &[f64], s: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Ansatz, ProductAnsatz, Window};

    fn species(amp: f64, q: f64, m: f64) -> Species {
        Species::new(
            "s",
            m,
            q,
            Ansatz::Product(ProductAnsatz {
                amplitude: amp,
                k: 3,
                e0: 1.5 * m,
                e_window: Window::Above {
                    edge: 0.0,
                    width: 0.5,
                },
                f_window: Window::Unbounded,
                g_window: Window::Bump { lo: -1.0, hi: 1.0 },
                nontrivial: true,
            }),
        )
        .unwrap()
    }

    #[test]
    fn constant_sources_give_closed_forms() {
        let grid = RadialGrid::uniform(1.3, 41).unwrap();
        let n = grid.len();
        let c = 0.75;
        let p = apply_m_with_sources(&grid, &vec![c; n], &vec![c; n], &vec![c; n]).unwrap();
        for (i, &r) in grid.nodes().iter().enumerate() {
            assert!((p.phi.values()[i] + c * r * r / 4.0).abs() < 1e-12);
            assert!((p.a_phi.values()[i] + c * r * r / 3.0).abs() < 1e-12);
            assert!((p.a_3.values()[i] + c * r * r / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn polynomial_sources_integrate_exactly() {
        // g₁ = s²: φ = -r⁴/16, and g₂ = s: A_φ = -(r³/4 - r³/8) = -r³/8
        let grid = RadialGrid::uniform(1.0, 33).unwrap();
        let g1: Vec<f64> = grid.nodes().iter().map(|r| r * r).collect();
        let g2: Vec<f64> = grid.nodes().to_vec();
        let z = vec![0.0; grid.len()];
        let p = apply_m_with_sources(&grid, &g1, &g2, &z).unwrap();
        for (i, &r) in grid.nodes().iter().enumerate() {
            assert!((p.phi.values()[i] + r.powi(4) / 16.0).abs() < 1e-13);
            assert!((p.a_phi.values()[i] + r.powi(3) / 8.0).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_ansatz_converges_immediately() {
        let grid = RadialGrid::uniform(1.0, 17).unwrap();
        let sp = vec![species(0.0, 1.0, 1.0)];
        let (state, log) = picard_solve(
            &sp,
            &ExternalPotential::none(),
            &grid,
            &QuadratureSpec::default(),
            &SolverOptions::default(),
        )
        .unwrap();
        assert_eq!(log.iterations(), 1);
        assert_eq!(state.sup_norm(), 0.0);
        let pair = EnvelopePair::new(log.c1, log.c2).unwrap();
        assert!(check_envelopes(&[], &[&state], &pair).pass);
    }

    #[test]
    fn iteration_limit_carries_the_log() {
        let grid = RadialGrid::uniform(1.0, 17).unwrap();
        let sp = vec![species(2.0, -1.0, 1.0)];
        let opts = SolverOptions {
            max_iter: 2,
            ..SolverOptions::default()
        };
        let quad = QuadratureSpec {
            n_theta: 8,
            n_energy: 6,
            n_g: 6,
            guard: 1e-6,
        };
        match picard_solve(&sp, &ExternalPotential::none(), &grid, &quad, &opts) {
            Err(Error::IterationLimit { log }) => {
                assert_eq!(log.iterations(), 2);
                assert!(log.deltas.iter().all(|d| *d >= 0.0));
            }
            other => panic!("expected iteration limit, got {other:?}"),
        }
    }

    #[test]
    fn converged_state_is_a_fixed_point_within_envelopes() {
        let grid = RadialGrid::uniform(1.0, 33).unwrap();
        let sp = vec![species(0.03, -1.0, 1.0), species(0.005, 1.0, 2.0)];
        let quad = QuadratureSpec {
            n_theta: 16,
            n_energy: 8,
            n_g: 8,
            guard: 1e-6,
        };
        let opts = SolverOptions {
            keep_iterates: true,
            ..SolverOptions::default()
        };
        let (state, log) =
            picard_solve(&sp, &ExternalPotential::none(), &grid, &quad, &opts).unwrap();
        let rules = DensityQuadrature::new(quad).unwrap();
        let again = apply_m(&state, &sp, &ExternalPotential::none(), &rules).unwrap();
        assert!(again.distance(&state) <= 1e-10);
        let pair = EnvelopePair::new(log.c1, log.c2).unwrap();
        let verdict = check_envelopes(&log.iterates, &[&state], &pair);
        assert!(verdict.pass, "{:?}", verdict.violations.first());
        let at_bound = PotentialState::from_values(
            &grid,
            grid.nodes().iter().map(|&r| 10.0 * pair.xi(r)).collect(),
            grid.nodes().iter().map(|&r| 10.0 * pair.zeta(r)).collect(),
            grid.nodes().iter().map(|&r| -10.0 * pair.xi(r)).collect(),
        )
        .unwrap();
        let flagged = check_envelopes(&[], &[&at_bound], &pair);
        assert!(!flagged.pass && flagged.violations.len() == 3 * (grid.len() - 1));
        // regularity at the axis
        for p in state.components() {
            assert_eq!(p.values()[0], 0.0);
            assert!(p.derivative(0.0).abs() < 1e-12);
        }
    }

    #[test]
    fn relaxed_iteration_reaches_the_same_state() {
        let grid = RadialGrid::uniform(1.0, 17).unwrap();
        let sp = vec![species(0.03, -1.0, 1.0), species(0.005, 1.0, 2.0)];
        let quad = QuadratureSpec {
            n_theta: 8,
            n_energy: 6,
            n_g: 6,
            guard: 1e-6,
        };
        let plain = picard_solve(
            &sp,
            &ExternalPotential::none(),
            &grid,
            &quad,
            &SolverOptions::default(),
        )
        .unwrap()
        .0;
        let opts = SolverOptions {
            relaxation: 0.7,
            ..SolverOptions::default()
        };
        let relaxed = picard_solve(&sp, &ExternalPotential::none(), &grid, &quad, &opts)
            .unwrap()
            .0;
        assert!(plain.distance(&relaxed) < 1e-9);
    }

    #[test]
    fn lipschitz_quotient_is_finite() {
        let grid = RadialGrid::uniform(1.0, 17).unwrap();
        let sp = vec![species(0.03, -1.0, 1.0)];
        let rules = DensityQuadrature::new(QuadratureSpec {
            n_theta: 8,
            n_energy: 6,
            n_g: 6,
            guard: 1e-6,
        })
        .unwrap();
        let p = PotentialState::zeros(&grid);
        let d = PotentialState::from_values(
            &grid,
            grid.nodes().iter().map(|r| r * r).collect(),
            grid.nodes().iter().map(|r| 0.5 * r * r).collect(),
            grid.nodes().iter().map(|r| -r * r).collect(),
        )
        .unwrap();
        let l = lipschitz_estimate(&p, &d, 1e-4, &sp, &ExternalPotential::none(), &rules).unwrap();
        assert!(l.is_finite() && l > 0.0);
    }
}
