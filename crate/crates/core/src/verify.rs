//! Characteristics in frozen fields and the stationarity audit.
//!
//! The characteristic system is `ẋ = v̂`, `v̇ = q(E + v̂ × Bᵗᵒᵗ)` with `v̂ = v/√(m² + |v|²)`, and a
//! particle that reaches `r = R₀` is reflected by `v ↦ v - 2 v_r e_r`. The fields are derived from
//! the same spline potentials the invariants are evaluated with, so (𝓔, 𝓕, 𝓖) are exact invariants
//! of the traced flow and any drift measures integration error alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{external_magnetic, internal_magnetic};
use crate::model::{invariants_unchecked, ExternalPotential, Invariants, PhaseState, Species};
use crate::ode::{hermite, Dopri5, State};
use crate::solver::PotentialState;

/// Wall refinement target `|r - R₀|`.
pub const WALL_TOL: f64 = 1e-12;

/// Sampled path of one characteristic.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhaseState>,
    /// Times of wall reflections.
    pub reflections: Vec<f64>,
}

struct Tracer<'a> {
    species: &'a Species,
    potentials: &'a PotentialState,
    ext: &'a ExternalPotential,
    r0: f64,
}

fn to_state(p: &PhaseState) -> State {
    [p.x[0], p.x[1], p.x[2], p.v[0], p.v[1], p.v[2]]
}

fn to_phase(y: &State) -> PhaseState {
    PhaseState::new([y[0], y[1], y[2]], [y[3], y[4], y[5]])
}

#[inline]
fn radius(y: &State) -> f64 {
    y[0].hypot(y[1])
}

impl Tracer<'_> {
    fn rhs(&self, y: &State) -> State {
        let m = self.species.mass;
        let q = self.species.charge;
        let gamma_m = (m * m + y[3] * y[3] + y[4] * y[4] + y[5] * y[5]).sqrt();
        let vh = [y[3] / gamma_m, y[4] / gamma_m, y[5] / gamma_m];
        let r = radius(y);
        let (bp_i, b3_i) = internal_magnetic(self.potentials, r);
        let (bp_e, b3_e) = external_magnetic(self.ext, r);
        let (b_phi, b_3) = (bp_i + bp_e, b3_i + b3_e);
        let e_r = -self.potentials.phi.derivative(r);
        let (c, s) = if r > 0.0 {
            (y[0] / r, y[1] / r)
        } else {
            (1.0, 0.0)
        };
        let e = [e_r * c, e_r * s, 0.0];
        let b = [-b_phi * s, b_phi * c, b_3];
        [
            vh[0],
            vh[1],
            vh[2],
            q * (e[0] + vh[1] * b[2] - vh[2] * b[1]),
            q * (e[1] + vh[2] * b[0] - vh[0] * b[2]),
            q * (e[2] + vh[0] * b[1] - vh[1] * b[0]),
        ]
    }

    /// Radial speed `dr/dt`.
    fn r_dot(&self, y: &State) -> f64 {
        let r = radius(y);
        let d = self.rhs(y);
        if r > 0.0 {
            (y[0] * d[0] + y[1] * d[1]) / r
        } else {
            0.0
        }
    }

    fn reflect(y: &State) -> State {
        to_state(&to_phase(y).reflected())
    }

    /// Step size `h* ∈ (0, h]` at which the exact step from `(t, y)` lands on the wall.
    fn wall_hit(
        &self,
        ode: &Dopri5,
        t: f64,
        y: &State,
        dy: &State,
        h: f64,
        y1: &State,
        dy1: &State,
    ) -> Option<(f64, State)> {
        let rhs = |_t: f64, z: &State| self.rhs(z);
        let g_exact = |hh: f64| -> (f64, State) {
            let z = ode.step(&rhs, t, y, dy, hh).y;
            (radius(&z) - self.r0, z)
        };
        // first outward crossing of the Hermite path
        const SCAN: usize = 32;
        let herm_r = |s: f64| {
            hermite(y, dy, y1, dy1, h, s, 0).hypot(hermite(y, dy, y1, dy1, h, s, 1)) - self.r0
        };
        let mut lo = 0.0;
        let mut hi = h;
        for j in 1..=SCAN {
            let s = j as f64 / SCAN as f64;
            if herm_r(s) > 0.0 {
                hi = s * h;
                break;
            }
            lo = s * h;
        }
        let (mut g_lo, _) = if lo == 0.0 {
            (radius(y) - self.r0, *y)
        } else {
            g_exact(lo)
        };
        let (mut g_hi, mut z_hi) = g_exact(hi);
        if g_lo > 0.0 || g_hi <= 0.0 {
            lo = 0.0;
            g_lo = radius(y) - self.r0;
            hi = h;
            (g_hi, z_hi) = (radius(y1) - self.r0, *y1);
            if g_lo > 0.0 {
                return None;
            }
        }
        if g_hi.abs() <= WALL_TOL {
            return Some((hi, z_hi));
        }
        // safeguarded Newton on the exact step
        let mut x = lo - g_lo * (hi - lo) / (g_hi - g_lo);
        for _ in 0..200 {
            let (g, z) = g_exact(x);
            if g.abs() <= WALL_TOL {
                return Some((x, z));
            }
            if g > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            let slope = self.r_dot(&z);
            let newton = x - g / slope;
            x = if slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            if hi - lo <= f64::EPSILON * hi {
                return Some((x, g_exact(x).1));
            }
        }
        Some((x, g_exact(x).1))
    }

    /// Integrates on `[0, horizon]`, calling `observe(t, y)` at the start, after every accepted
    /// step and after every reflection. Returns the reflection times.
    fn trace(
        &self,
        y0: State,
        horizon: f64,
        ode: &Dopri5,
        mut observe: impl FnMut(f64, &State),
    ) -> Result<Vec<f64>> {
        let rhs = |_t: f64, z: &State| self.rhs(z);
        let mut reflections = Vec::new();
        let mut t = 0.0;
        let mut y = y0;
        if radius(&y) >= self.r0 && self.r_dot(&y) > 0.0 {
            y = Self::reflect(&y);
            reflections.push(0.0);
        }
        observe(t, &y);
        let mut dy = self.rhs(&y);
        let mut h = ode.initial_h(&y, &dy, horizon);
        let mut steps = 0usize;
        while t < horizon {
            steps += 1;
            if steps > ode.max_steps {
                return Err(Error::Integration {
                    t,
                    reason: format!("more than {} steps", ode.max_steps),
                });
            }
            let last = h >= horizon - t;
            let hh = if last { horizon - t } else { h };
            let trial = ode.step(&rhs, t, &y, &dy, hh);
            if !(trial.err <= 1.0) {
                h = Dopri5::next_h(
                    hh,
                    if trial.err.is_finite() {
                        trial.err
                    } else {
                        1e6
                    },
                );
                Dopri5::check_h(h, t)?;
                continue;
            }
            if radius(&trial.y) > self.r0 {
                match self.wall_hit(ode, t, &y, &dy, hh, &trial.y, &trial.dy) {
                    Some((h_star, z)) => {
                        t += h_star;
                        y = Self::reflect(&z);
                        dy = self.rhs(&y);
                        reflections.push(t);
                        observe(t, &y);
                    }
                    None => {
                        // started marginally outside: reflect if outbound, else shorten the step
                        if self.r_dot(&y) > 0.0 {
                            y = Self::reflect(&y);
                            dy = self.rhs(&y);
                            reflections.push(t);
                        } else {
                            h = 0.25 * hh;
                            Dopri5::check_h(h, t)?;
                        }
                    }
                }
                continue;
            }
            t = if last { horizon } else { t + hh };
            y = trial.y;
            dy = trial.dy;
            observe(t, &y);
            h = Dopri5::next_h(hh, trial.err);
        }
        Ok(reflections)
    }
}

fn tracer<'a>(
    species: &'a Species,
    potentials: &'a PotentialState,
    ext: &'a ExternalPotential,
) -> Tracer<'a> {
    Tracer {
        species,
        potentials,
        ext,
        r0: potentials.grid().r0(),
    }
}

/// Integrates the characteristic through `start` over `[0, horizon]`.
pub fn integrate_characteristic(
    species: &Species,
    start: &PhaseState,
    potentials: &PotentialState,
    ext: &ExternalPotential,
    horizon: f64,
    ode: &Dopri5,
) -> Result<Trajectory> {
    let tr = tracer(species, potentials, ext);
    let r = start.r();
    if !(r <= tr.r0 * (1.0 + 1e-12)) {
        return Err(Error::Domain { r, r0: tr.r0 });
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::config(format!(
            "horizon must be finite and nonnegative, got {horizon}"
        )));
    }
    let mut out = Trajectory::default();
    out.reflections = tr.trace(to_state(start), horizon, ode, |t, y| {
        out.times.push(t);
        out.states.push(to_phase(y));
    })?;
    Ok(out)
}

/// How the audit draws and integrates characteristics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplePlan {
    pub n_trajectories: usize,
    pub horizon: f64,
    pub seed: u64,
    /// Pass threshold for every drift measure.
    pub tolerance: f64,
    pub rtol: f64,
    pub atol: f64,
    /// Share of starts drawn in the outer 5% of the radius.
    pub near_wall_fraction: f64,
    /// Relative φ perturbation of the control run; `None` skips it.
    pub control_perturbation: Option<f64>,
}

impl Default for SamplePlan {
    fn default() -> Self {
        SamplePlan {
            n_trajectories: 100,
            horizon: 50.0,
            seed: 0,
            tolerance: 1e-6,
            rtol: 1e-10,
            atol: 1e-10,
            near_wall_fraction: 0.1,
            control_perturbation: Some(0.01),
        }
    }
}

impl SamplePlan {
    pub fn validate(&self) -> Result<()> {
        if self.n_trajectories == 0 {
            return Err(Error::config("audit needs at least one trajectory"));
        }
        for (name, v) in [
            ("horizon", self.horizon),
            ("tolerance", self.tolerance),
            ("rtol", self.rtol),
            ("atol", self.atol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!(
                    "audit {name} must be positive, got {v}"
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.near_wall_fraction) {
            return Err(Error::config("near_wall_fraction must lie in [0, 1]"));
        }
        if let Some(p) = self.control_perturbation {
            if !(p != 0.0 && p.is_finite()) {
                return Err(Error::config(
                    "control perturbation must be finite and nonzero",
                ));
            }
        }
        Ok(())
    }

    pub fn integrator(&self) -> Dopri5 {
        Dopri5 {
            rtol: self.rtol,
            atol: self.atol,
            ..Dopri5::default()
        }
    }
}

/// Drift record of one characteristic; invariant drifts are `|Δ·|/(1 + |·|)`, the f drift is
/// divided by the largest starting value of f in the sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryDrift {
    pub species: usize,
    pub r_start: f64,
    pub f_start: f64,
    pub energy: f64,
    pub angular: f64,
    pub axial: f64,
    /// `|Δf|` over the f scale: the larger of the peak starting f and the η* level.
    pub f: f64,
    pub reflections: usize,
    /// Largest `r - R₀` seen at a sample.
    pub wall_excess: f64,
    pub control_energy: f64,
    pub control_f: f64,
}

impl TrajectoryDrift {
    pub fn max(&self) -> f64 {
        self.energy.max(self.angular).max(self.axial).max(self.f)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlReport {
    pub perturbation: f64,
    pub max_energy_drift: f64,
    pub max_f_drift: f64,
    pub max_drift: f64,
    /// True when the control exceeds the pass threshold, i.e. the audit can tell the fields apart.
    pub detected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub plan: SamplePlan,
    pub grid_len: usize,
    pub r0: f64,
    pub in_support: usize,
    pub max_energy_drift: f64,
    pub max_angular_drift: f64,
    pub max_axial_drift: f64,
    pub max_f_drift: f64,
    pub max_drift: f64,
    pub worst_trajectory: usize,
    pub reflections: usize,
    pub max_wall_excess: f64,
    pub pass: bool,
    pub control: Option<ControlReport>,
    pub trajectories: Vec<TrajectoryDrift>,
}

/// Largest momentum allowed by the energy cutoff at radius `r`.
fn local_speed_bound(species: &Species, potentials: &PotentialState, r: f64) -> f64 {
    let e = species.ansatz.cutoff_energy() - species.charge * potentials.phi.value(r);
    let m = species.mass;
    if e > m {
        (e * e - m * m).sqrt()
    } else {
        0.0
    }
}

fn draw_start(
    rng: &mut ChaCha8Rng,
    species: &Species,
    potentials: &PotentialState,
    ext: &ExternalPotential,
    r_lo: f64,
    r_hi: f64,
) -> PhaseState {
    const TRIES: usize = 400;
    let mut fallback = None;
    for _ in 0..TRIES {
        // uniform in area on the annulus
        let u: f64 = rng.gen();
        let r = (r_lo * r_lo + u * (r_hi * r_hi - r_lo * r_lo)).sqrt();
        let angle = rng.gen::<f64>() * std::f64::consts::TAU;
        let umax = local_speed_bound(species, potentials, r).max(1e-3 * species.mass);
        let z: f64 = rng.gen_range(-1.0..1.0);
        let phi = rng.gen::<f64>() * std::f64::consts::TAU;
        let s = (1.0 - z * z).sqrt();
        let mag = umax * rng.gen::<f64>().cbrt();
        let v = [mag * s * phi.cos(), mag * s * phi.sin(), mag * z];
        let p = PhaseState::new([r * angle.cos(), r * angle.sin(), 0.0], v);
        let inv = invariants_unchecked(species, potentials, ext, &p);
        if species.ansatz.eval(inv.energy, inv.angular, inv.axial) > 0.0 {
            return p;
        }
        fallback.get_or_insert(p);
    }
    fallback.expect("at least one draw")
}

/// Largest `η*` over the energies a particle can have in the given potential, sampled on a
/// lattice. Used as the f scale so that starts near the edge of a thin support do not inflate
/// the relative f drift.
fn f_level(species: &Species, potentials: &PotentialState) -> f64 {
    const N: usize = 64;
    let a = &species.ansatz;
    let e_lo = a
        .energy_floor()
        .max(species.mass - species.charge.abs() * potentials.phi.sup_norm());
    let e_hi = a.cutoff_energy();
    let (g_lo, g_hi) = a.g_support();
    if !(e_lo < e_hi && g_lo.is_finite() && g_hi.is_finite()) {
        return 0.0;
    }
    let mut m = 0.0f64;
    for i in 0..=N {
        let e = e_lo + (e_hi - e_lo) * i as f64 / N as f64;
        for j in 0..=N {
            m = m.max(a.majorant(e, g_lo + (g_hi - g_lo) * j as f64 / N as f64));
        }
    }
    m
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + b.abs())
}

/// Traces `plan.n_trajectories` characteristics and reports the largest drifts.
///
/// Starts are stratified in `r²` over `[0, R₀]` and cycle through the species; a share
/// `near_wall_fraction` is drawn in `[0.95 R₀, R₀]`. Momenta are uniform in the ball allowed by the
/// energy cutoff and rejection-sampled into the support of f when possible.
pub fn audit_stationarity(
    potentials: &PotentialState,
    ext: &ExternalPotential,
    species: &[Species],
    plan: &SamplePlan,
) -> Result<AuditReport> {
    plan.validate()?;
    if species.is_empty() {
        return Err(Error::config("audit needs at least one species"));
    }
    let r0 = potentials.grid().r0();
    let n = plan.n_trajectories;
    let n_wall = ((n as f64) * plan.near_wall_fraction).round() as usize;
    let n_core = n - n_wall;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let starts: Vec<(usize, PhaseState)> = (0..n)
        .map(|i| {
            let a = i % species.len();
            let (lo, hi) = if i < n_core {
                let w = 1.0 / n_core as f64;
                (r0 * (i as f64 * w).sqrt(), r0 * ((i + 1) as f64 * w).sqrt())
            } else {
                (0.95 * r0, r0)
            };
            (
                a,
                draw_start(&mut rng, &species[a], potentials, ext, lo, hi),
            )
        })
        .collect();

    let f_of =
        |a: usize, inv: &Invariants| species[a].ansatz.eval(inv.energy, inv.angular, inv.axial);
    let f_scale = starts
        .iter()
        .map(|(a, p)| f_of(*a, &invariants_unchecked(&species[*a], potentials, ext, p)))
        .chain(species.iter().map(|s| f_level(s, potentials)))
        .fold(0.0f64, f64::max);
    let f_scale = if f_scale > 0.0 { f_scale } else { 1.0 };
    let delta = plan.control_perturbation.unwrap_or(0.0);
    let ode = plan.integrator();

    let drifts: Vec<TrajectoryDrift> = starts
        .par_iter()
        .map(|(a, p)| -> Result<TrajectoryDrift> {
            let sp = &species[*a];
            let tr = tracer(sp, potentials, ext);
            let inv0 = invariants_unchecked(sp, potentials, ext, p);
            let f0 = f_of(*a, &inv0);
            let q_phi = |y: &State| sp.charge * potentials.phi.value(radius(y));
            let ctrl_e0 = inv0.energy + delta * q_phi(&to_state(p));
            let ctrl_f0 = sp.ansatz.eval(ctrl_e0, inv0.angular, inv0.axial);
            let mut d = TrajectoryDrift {
                species: *a,
                r_start: p.r(),
                f_start: f0,
                energy: 0.0,
                angular: 0.0,
                axial: 0.0,
                f: 0.0,
                reflections: 0,
                wall_excess: f64::NEG_INFINITY,
                control_energy: 0.0,
                control_f: 0.0,
            };
            let refl = tr.trace(to_state(p), plan.horizon, &ode, |_t, y| {
                let inv = invariants_unchecked(sp, potentials, ext, &to_phase(y));
                d.energy = d.energy.max(rel(inv.energy, inv0.energy));
                d.angular = d.angular.max(rel(inv.angular, inv0.angular));
                d.axial = d.axial.max(rel(inv.axial, inv0.axial));
                d.f = d.f.max((f_of(*a, &inv) - f0).abs() / f_scale);
                d.wall_excess = d.wall_excess.max(radius(y) - r0);
                if delta != 0.0 {
                    let ce = inv.energy + delta * q_phi(y);
                    d.control_energy = d.control_energy.max(rel(ce, ctrl_e0));
                    let cf = sp.ansatz.eval(ce, inv.angular, inv.axial);
                    d.control_f = d.control_f.max((cf - ctrl_f0).abs() / f_scale);
                }
            })?;
            d.reflections = refl.len();
            Ok(d)
        })
        .collect::<Result<_>>()?;

    let fold = |g: fn(&TrajectoryDrift) -> f64| drifts.iter().map(g).fold(0.0f64, f64::max);
    let (worst_trajectory, max_drift) = drifts
        .iter()
        .enumerate()
        .map(|(i, d)| (i, d.max()))
        .fold((0, 0.0f64), |b, x| if x.1 > b.1 { x } else { b });
    let control = plan.control_perturbation.map(|p| {
        let e = fold(|d| d.control_energy);
        let f = fold(|d| d.control_f);
        ControlReport {
            perturbation: p,
            max_energy_drift: e,
            max_f_drift: f,
            max_drift: e.max(f),
            detected: e.max(f) > plan.tolerance,
        }
    });
    Ok(AuditReport {
        plan: *plan,
        grid_len: potentials.grid().len(),
        r0,
        in_support: drifts.iter().filter(|d| d.f_start > 0.0).count(),
        max_energy_drift: fold(|d| d.energy),
        max_angular_drift: fold(|d| d.angular),
        max_axial_drift: fold(|d| d.axial),
        max_f_drift: fold(|d| d.f),
        max_drift,
        worst_trajectory,
        reflections: drifts.iter().map(|d| d.reflections).sum(),
        max_wall_excess: drifts
            .iter()
            .map(|d| d.wall_excess)
            .fold(f64::NEG_INFINITY, f64::max),
        pass: max_drift <= plan.tolerance,
        control,
        trajectories: drifts,
    })
}
