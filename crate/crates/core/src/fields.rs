//! Electromagnetic fields of a potential state, radial Maxwell residuals and vacuum tails.
//!
//! With `A_r = 0` and dependence on `r` only:
//!
//! ```text
//! E_r = -φ',   B_φ = -A₃',   B₃ = (1/r)(r A_φ)' = A_φ/r + A_φ'
//! -(1/r)(r φ')' = 4πρ,   -((1/r)(r A_φ)')' = 4π j_φ,   -(1/r)(r A₃')' = 4π j₃
//! ```
//!
//! `E_φ = E₃ = B_r = 0` and `j_r = 0` hold by construction and are not stored.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::densities::DensityQuadrature;
use crate::error::{Error, Result};
use crate::model::{ExternalComponent, ExternalPotential, Species};
use crate::profile::{AxisRule, RadialGrid, RadialProfile};
use crate::solver::{cumulative_moments, evaluate_sources, PotentialState};

/// Radial field and source profiles on the state grid.
#[derive(Debug, Clone)]
pub struct FieldProfiles {
    pub e_r: RadialProfile,
    pub b_phi: RadialProfile,
    pub b_3: RadialProfile,
    pub b_phi_ext: RadialProfile,
    pub b_3_ext: RadialProfile,
    pub rho: RadialProfile,
    pub j_phi: RadialProfile,
    pub j_3: RadialProfile,
}

/// `(B_φ, B₃)` of one `(A_φ, A₃)` pair given as value/derivative closures.
fn magnetic(r: f64, a_phi: (f64, f64), a_3: (f64, f64)) -> (f64, f64) {
    let b_phi = -a_3.1;
    // l'Hôpital on the axis: A_φ/r → A_φ'(0)
    let b_3 = if r == 0.0 {
        2.0 * a_phi.1
    } else {
        a_phi.0 / r + a_phi.1
    };
    (b_phi, b_3)
}

/// Internal magnetic field `(B_φ, B₃)` at `r`.
pub fn internal_magnetic(state: &PotentialState, r: f64) -> (f64, f64) {
    magnetic(r, state.a_phi.eval(r), state.a_3.eval(r))
}

/// External magnetic field `(B_φᵉˣᵗ, B₃ᵉˣᵗ)` at `r`.
pub fn external_magnetic(ext: &ExternalPotential, r: f64) -> (f64, f64) {
    magnetic(r, ext.a_phi.eval(r), ext.a_3.eval(r))
}

impl FieldProfiles {
    /// Fields of `state` and `ext` with densities `g_i / 4π` from the given source node values.
    pub fn from_sources(
        state: &PotentialState,
        ext: &ExternalPotential,
        g: &[Vec<f64>; 3],
    ) -> Result<Self> {
        let grid = state.grid();
        let x = grid.nodes();
        let mut cols: [Vec<f64>; 5] = std::array::from_fn(|_| Vec::with_capacity(x.len()));
        for &r in x {
            let (bp, b3) = internal_magnetic(state, r);
            let (bpe, b3e) = external_magnetic(ext, r);
            for (c, v) in cols
                .iter_mut()
                .zip([-state.phi.derivative(r), bp, b3, bpe, b3e])
            {
                c.push(v);
            }
        }
        let prof = |v: Vec<f64>| RadialProfile::new(grid.clone(), v, AxisRule::Free);
        let dens = |v: &Vec<f64>| prof(v.iter().map(|g| g / (4.0 * PI)).collect());
        let [e_r, b_phi, b_3, b_phi_ext, b_3_ext] = cols;
        Ok(FieldProfiles {
            e_r: prof(e_r)?,
            b_phi: prof(b_phi)?,
            b_3: prof(b_3)?,
            b_phi_ext: prof(b_phi_ext)?,
            b_3_ext: prof(b_3_ext)?,
            rho: dens(&g[0])?,
            j_phi: dens(&g[1])?,
            j_3: dens(&g[2])?,
        })
    }

    pub fn grid(&self) -> &RadialGrid {
        self.rho.grid()
    }
}

/// Fields of a converged state, with densities evaluated by the kernel quadrature.
pub fn reconstruct_fields(
    state: &PotentialState,
    ext: &ExternalPotential,
    species: &[Species],
    quad: &DensityQuadrature,
) -> Result<FieldProfiles> {
    let g = evaluate_sources(state, species, ext, quad)?;
    FieldProfiles::from_sources(state, ext, &g)
}

/// Sup-norm residuals of the three radial Maxwell equations at interior nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeResiduals {
    pub poisson: f64,
    pub a_phi: f64,
    pub a_3: f64,
}

impl OdeResiduals {
    pub fn max(&self) -> f64 {
        self.poisson.max(self.a_phi).max(self.a_3)
    }
}

/// Conservative second-order differences of the three radial equations.
pub fn ode_residuals(state: &PotentialState, fields: &FieldProfiles) -> OdeResiduals {
    let x = state.grid().nodes();
    let (phi, ap, a3) = (state.phi.values(), state.a_phi.values(), state.a_3.values());
    let (rho, jp, j3) = (
        fields.rho.values(),
        fields.j_phi.values(),
        fields.j_3.values(),
    );
    let mut res = OdeResiduals {
        poisson: 0.0,
        a_phi: 0.0,
        a_3: 0.0,
    };
    for i in 1..x.len() - 1 {
        let (hm, hp) = (x[i] - x[i - 1], x[i + 1] - x[i]);
        let (rm, rp) = (0.5 * (x[i] + x[i - 1]), 0.5 * (x[i + 1] + x[i]));
        let span = 0.5 * (hm + hp);
        // -(1/r)(r u')'
        let radial = |u: &[f64]| {
            -(rp * (u[i + 1] - u[i]) / hp - rm * (u[i] - u[i - 1]) / hm) / (x[i] * span)
        };
        res.poisson = res.poisson.max((radial(phi) - 4.0 * PI * rho[i]).abs());
        res.a_3 = res.a_3.max((radial(a3) - 4.0 * PI * j3[i]).abs());
        // B₃ at half nodes, then -B₃'
        let b_p = (x[i + 1] * ap[i + 1] - x[i] * ap[i]) / (hp * rp);
        let b_m = (x[i] * ap[i] - x[i - 1] * ap[i - 1]) / (hm * rm);
        res.a_phi = res
            .a_phi
            .max((-(b_p - b_m) / span - 4.0 * PI * jp[i]).abs());
    }
    res
}

/// Source-free continuation of the potentials beyond the outer radius.
///
/// For `r ≥ R₀`: `φ = φ(R₀) - 4πa ln(r/R₀)`, `A₃ = A₃(R₀) - 4πb ln(r/R₀)`, `A_φ = -2πc r + β/r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VacuumExtension {
    /// `∫₀^R s ρ ds`.
    pub a: f64,
    /// `∫₀^R s j₃ ds`.
    pub b: f64,
    /// `∫₀^R j_φ ds`.
    pub c: f64,
    pub r_match: f64,
    /// `φ(r) + 4πa ln r` on the tail.
    pub phi_const: f64,
    /// `A₃(r) + 4πb ln r` on the tail.
    pub a3_const: f64,
    /// Coefficient of the homogeneous `1/r` solution in the `A_φ` tail.
    pub beta: f64,
    /// `|value jump|` of `(φ, A_φ, A₃)` at the match point.
    pub value_jumps: [f64; 3],
    /// `|derivative jump|` against the integral-form derivative of the interior solution.
    pub derivative_jumps: [f64; 3],
    /// `|derivative jump|` against the spline derivative (interpolation diagnostic only).
    pub spline_derivative_jumps: [f64; 3],
}

impl VacuumExtension {
    pub fn phi(&self, r: f64) -> f64 {
        self.phi_const - 4.0 * PI * self.a * r.ln()
    }

    pub fn a_3(&self, r: f64) -> f64 {
        self.a3_const - 4.0 * PI * self.b * r.ln()
    }

    pub fn a_phi(&self, r: f64) -> f64 {
        -2.0 * PI * self.c * r + self.beta / r
    }

    /// Derivatives `(φ', A_φ', A₃')` of the tails.
    pub fn derivatives(&self, r: f64) -> [f64; 3] {
        [
            -4.0 * PI * self.a / r,
            -2.0 * PI * self.c - self.beta / (r * r),
            -4.0 * PI * self.b / r,
        ]
    }
}

/// Largest density magnitude accepted as vacuum.
pub const VACUUM_FLOOR: f64 = 1e-12;

/// Moments of the sources and matched log/linear tails beyond `R₀`.
pub fn extend_vacuum(
    state: &PotentialState,
    fields: &FieldProfiles,
    r_confine: f64,
) -> Result<VacuumExtension> {
    let grid = state.grid();
    let x = grid.nodes();
    let r0 = grid.r0();
    if !(r_confine > 0.0 && r_confine <= r0) {
        return Err(Error::config(format!(
            "confinement radius {r_confine} outside (0, {r0}]"
        )));
    }
    for (name, p) in [
        ("rho", &fields.rho),
        ("j_phi", &fields.j_phi),
        ("j_3", &fields.j_3),
    ] {
        for (&r, &v) in x.iter().zip(p.values()) {
            if r >= r_confine && v.abs() > VACUUM_FLOOR {
                return Err(Error::Precondition(format!(
                    "{name} = {v:e} at r = {r} beyond the confinement radius {r_confine}"
                )));
            }
        }
    }
    let n = x.len() - 1;
    let [p_rho, ..] = cumulative_moments(&fields.rho);
    let [p_j3, ..] = cumulative_moments(&fields.j_3);
    let [_, _, z0, z2] = cumulative_moments(&fields.j_phi);
    let (a, b, c) = (p_rho[n], p_j3[n], z0[n]);
    let (phi0, ap0, a30) = (
        state.phi.values()[n],
        state.a_phi.values()[n],
        state.a_3.values()[n],
    );
    let ln_r0 = r0.ln();
    let ext = VacuumExtension {
        a,
        b,
        c,
        r_match: r0,
        phi_const: phi0 + 4.0 * PI * a * ln_r0,
        a3_const: a30 + 4.0 * PI * b * ln_r0,
        beta: r0 * (ap0 + 2.0 * PI * c * r0),
        value_jumps: [0.0; 3],
        derivative_jumps: [0.0; 3],
        spline_derivative_jumps: [0.0; 3],
    };
    // interior derivatives from the integral representation of 𝓜
    let interior = [
        -4.0 * PI * a / r0,
        -2.0 * PI * (z0[n] + z2[n] / (r0 * r0)),
        -4.0 * PI * b / r0,
    ];
    let spline = [
        state.phi.derivative(r0),
        state.a_phi.derivative(r0),
        state.a_3.derivative(r0),
    ];
    let tail = ext.derivatives(r0);
    let values = [ext.phi(r0), ext.a_phi(r0), ext.a_3(r0)];
    let mut out = ext;
    for k in 0..3 {
        out.value_jumps[k] = (values[k] - [phi0, ap0, a30][k]).abs();
        out.derivative_jumps[k] = (tail[k] - interior[k]).abs();
        out.spline_derivative_jumps[k] = (tail[k] - spline[k]).abs();
    }
    Ok(out)
}

/// B₃ of a linear external `A_φ = b r`, i.e. `2b`; `None` for other components.
pub fn homogeneous_field_strength(component: &ExternalComponent) -> Option<f64> {
    match component {
        ExternalComponent::Linear { slope } => Some(2.0 * slope),
        ExternalComponent::Zero => Some(0.0),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::apply_m_with_sources;

    fn grid(n: usize) -> RadialGrid {
        RadialGrid::uniform(1.0, n).unwrap()
    }

    #[test]
    fn zero_state_has_zero_fields() {
        let g = grid(17);
        let s = PotentialState::zeros(&g);
        let z = vec![0.0; g.len()];
        let f =
            FieldProfiles::from_sources(&s, &ExternalPotential::none(), &[z.clone(), z.clone(), z])
                .unwrap();
        for p in [
            &f.e_r,
            &f.b_phi,
            &f.b_3,
            &f.b_phi_ext,
            &f.b_3_ext,
            &f.rho,
            &f.j_phi,
            &f.j_3,
        ] {
            assert_eq!(p.sup_norm(), 0.0);
        }
        assert_eq!(ode_residuals(&s, &f).max(), 0.0);
    }

    #[test]
    fn homogeneous_external_field_is_constant() {
        let g = grid(33);
        let s = PotentialState::zeros(&g);
        let z = vec![0.0; g.len()];
        let b = 0.7;
        let f = FieldProfiles::from_sources(
            &s,
            &ExternalPotential::homogeneous(b),
            &[z.clone(), z.clone(), z],
        )
        .unwrap();
        for &v in f.b_3_ext.values() {
            assert!((v - 2.0 * b).abs() < 1e-15);
        }
        assert_eq!(f.b_phi_ext.sup_norm(), 0.0);
        assert_eq!(
            homogeneous_field_strength(&ExternalComponent::Linear { slope: b }),
            Some(2.0 * b)
        );
    }

    #[test]
    fn manufactured_quadratic_solution_has_no_residual() {
        let g = grid(41);
        let n = g.len();
        let c = 1.7;
        // an azimuthal current vanishes linearly on the axis: g₂ = C r gives A_φ = -C r³/8
        let src = [
            vec![c; n],
            g.nodes().iter().map(|r| c * r).collect(),
            vec![c; n],
        ];
        let s = apply_m_with_sources(&g, &src[0], &src[1], &src[2]).unwrap();
        for (&r, &a) in g.nodes().iter().zip(s.a_phi.values()) {
            assert!((a + c * r.powi(3) / 8.0).abs() < 1e-13);
        }
        let f = FieldProfiles::from_sources(&s, &ExternalPotential::none(), &src).unwrap();
        let res = ode_residuals(&s, &f);
        assert!(res.poisson < 1e-10 && res.a_3 < 1e-10, "{res:?}");
        assert!(res.a_phi < 1e-10, "{res:?}");
        for (&r, &e) in g.nodes().iter().zip(f.e_r.values()) {
            assert!((e - c * r / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn vacuum_tail_matches_and_moments_are_exact() {
        // ρ = (1 - (r/R)²)² on [0, R], zero beyond: ∫₀^R s ρ ds = R²/6
        let g = grid(201);
        let rr = 0.6;
        let bump = |r: f64| {
            if r < rr {
                (1.0 - (r / rr).powi(2)).powi(2)
            } else {
                0.0
            }
        };
        let g1: Vec<f64> = g.nodes().iter().map(|&r| 4.0 * PI * bump(r)).collect();
        let g2: Vec<f64> = g1.iter().map(|v| 0.5 * v).collect();
        let g3: Vec<f64> = g1.iter().map(|v| -0.25 * v).collect();
        let s = apply_m_with_sources(&g, &g1, &g2, &g3).unwrap();
        let f = FieldProfiles::from_sources(&s, &ExternalPotential::none(), &[g1, g2, g3]).unwrap();
        let v = extend_vacuum(&s, &f, rr).unwrap();
        assert!((v.a - rr * rr / 6.0).abs() < 1e-6);
        assert!((v.b + 0.25 * rr * rr / 6.0).abs() < 1e-6);
        for k in 0..3 {
            assert!(
                v.value_jumps[k] <= 1e-10 && v.derivative_jumps[k] <= 1e-10,
                "{v:?}"
            );
        }
        // the interior solution already follows the log law outside the sources
        let ln_const: Vec<f64> = g
            .nodes()
            .iter()
            .filter(|&&r| r >= 0.8)
            .map(|&r| s.phi.value(r) + 4.0 * PI * v.a * r.ln())
            .collect();
        let spread = ln_const.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - ln_const.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(spread < 1e-6, "{spread}");
        // tails
        let c0 = v.phi(1.0) + 4.0 * PI * v.a * 1.0f64.ln();
        for r in [1.5, 2.0, 3.0] {
            assert!((v.phi(r) + 4.0 * PI * v.a * r.ln() - c0).abs() < 1e-12);
            assert!((v.a_phi(r) + 2.0 * PI * v.c * r - v.beta / r).abs() < 1e-12);
        }
    }

    #[test]
    fn unconfined_sources_are_rejected() {
        let g = grid(17);
        let n = g.len();
        let s = PotentialState::zeros(&g);
        let src = [vec![1.0; n], vec![0.0; n], vec![0.0; n]];
        let f = FieldProfiles::from_sources(&s, &ExternalPotential::none(), &src).unwrap();
        assert!(matches!(
            extend_vacuum(&s, &f, 0.5),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn vector_potential_is_divergence_free() {
        // A = A_φ(r) e_φ + A₃(r) e₃ on a Cartesian patch, centred differences
        let a_phi = |r: f64| 0.3 * r * r - 0.1 * r.powi(4);
        let ax = |x: f64, y: f64| {
            let r = x.hypot(y);
            -y / r * a_phi(r)
        };
        let ay = |x: f64, y: f64| {
            let r = x.hypot(y);
            x / r * a_phi(r)
        };
        for h in [1e-2, 5e-3] {
            let mut worst: f64 = 0.0;
            for i in 1..10 {
                for j in 1..10 {
                    let (x, y) = (0.07 * i as f64, 0.05 * j as f64 - 0.2);
                    let div =
                        (ax(x + h, y) - ax(x - h, y) + ay(x, y + h) - ay(x, y - h)) / (2.0 * h);
                    worst = worst.max(div.abs());
                }
            }
            assert!(worst <= 10.0 * h * h, "h={h}: {worst}");
        }
    }
}
