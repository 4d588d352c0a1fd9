//! Run orchestration behind the `cylvm` binary: one function per mode, each writing its artifacts
//! into the output directory and returning a pass/fail verdict.
//!
//! Every artifact carries the config hash; CSV files start with a `# config_hash: …` line. Reports
//! hold no timings, so identical configs give byte-identical files.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::bounds::EnvelopePair;
use crate::config::{RunConfig, SweepConfig};
use crate::confinement::{
    check_confinement, check_confinement_sharp, homogeneous_b_threshold, slice_numbers,
    support_speed_bound, threshold_a_3, ConfinementVerdict, PinchMode, PinchSpec,
};
use crate::densities::{
    check_guard, constants_c1_c2, DensityKernelInput, DensityQuadrature, GuardReport,
};
use crate::error::{Error, Result};
use crate::fields::{
    extend_vacuum, ode_residuals, reconstruct_fields, FieldProfiles, OdeResiduals, VacuumExtension,
    VACUUM_FLOOR,
};
use crate::model::{ExternalComponent, ExternalPotential};
use crate::profile::RadialGrid;
use crate::solver::{
    check_envelopes, picard_solve, EnvelopeVerdict, PotentialState, SolverOptions,
};
use crate::verify::{audit_stationarity, AuditReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Solve,
    Verify,
    Confine,
    Extend,
    Sweep,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "solve" => Ok(Mode::Solve),
            "verify" => Ok(Mode::Verify),
            "confine" => Ok(Mode::Confine),
            "extend" => Ok(Mode::Extend),
            "sweep" => Ok(Mode::Sweep),
            other => Err(Error::config(format!(
                "unknown mode '{other}' (solve, verify, confine, extend, sweep)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub pass: bool,
    pub files: Vec<PathBuf>,
    /// One-line human summary.
    pub summary: String,
}

pub const PROFILE_HEADER: &str = "r,phi,Aphi,A3,rho,jphi,j3,Er,Bphi,B3,xi,zeta";

/// A converged run with its fields.
pub struct Solved {
    pub grid: RadialGrid,
    pub ext: ExternalPotential,
    pub pair: EnvelopePair,
    pub state: PotentialState,
    pub fields: FieldProfiles,
    pub iterations: usize,
    pub residual: f64,
    pub deltas: Vec<f64>,
    pub ratios: Vec<f64>,
    pub envelopes: EnvelopeVerdict,
}

pub fn solve(cfg: &RunConfig) -> Result<Solved> {
    let grid = cfg.grid()?;
    let ext = cfg.external_potential()?;
    let opts = SolverOptions {
        keep_iterates: true,
        ..cfg.solver
    };
    let (state, log) = picard_solve(&cfg.species, &ext, &grid, &cfg.quadrature, &opts)?;
    let pair = EnvelopePair::new(log.c1, log.c2)?;
    let envelopes = check_envelopes(&log.iterates, &[&state], &pair);
    let rules = DensityQuadrature::new(cfg.quadrature)?;
    let fields = reconstruct_fields(&state, &ext, &cfg.species, &rules)?;
    Ok(Solved {
        grid,
        ext,
        pair,
        iterations: log.iterations(),
        residual: log.residual,
        ratios: log.ratios(),
        deltas: log.deltas,
        envelopes,
        state,
        fields,
    })
}

/// Row `i` of the profile table, columns as in [`PROFILE_HEADER`].
pub fn profile_row(s: &Solved, i: usize) -> [f64; 12] {
    let r = s.grid.nodes()[i];
    let f = &s.fields;
    [
        r,
        s.state.phi.values()[i],
        s.state.a_phi.values()[i],
        s.state.a_3.values()[i],
        f.rho.values()[i],
        f.j_phi.values()[i],
        f.j_3.values()[i],
        f.e_r.values()[i],
        f.b_phi.values()[i],
        f.b_3.values()[i],
        s.pair.xi(r),
        s.pair.zeta(r),
    ]
}

/// Profiles CSV with the fixed column set; potentials and fields are the self-consistent parts.
pub fn profiles_csv(hash: &str, s: &Solved) -> String {
    let mut out = format!("# config_hash: {hash}\n{PROFILE_HEADER}\n");
    for i in 0..s.grid.len() {
        let row = profile_row(s, i);
        let cols: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
        let _ = writeln!(out, "{}", cols.join(","));
    }
    out
}

#[derive(Serialize)]
struct Tagged<'a, T: Serialize> {
    config_hash: &'a str,
    mode: &'a str,
    #[serde(flatten)]
    body: T,
}

fn write_file(out: &Path, name: &str, text: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    std::fs::create_dir_all(out)?;
    let path = out.join(name);
    std::fs::write(&path, text)?;
    files.push(path);
    Ok(())
}

fn write_json<T: Serialize>(
    out: &Path,
    name: &str,
    hash: &str,
    mode: &str,
    body: T,
    files: &mut Vec<PathBuf>,
) -> Result<()> {
    let text = serde_json::to_string_pretty(&Tagged {
        config_hash: hash,
        mode,
        body,
    })
    .map_err(|e| Error::config(format!("cannot serialize report: {e}")))?;
    write_file(out, name, &(text + "\n"), files)
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub grid_len: usize,
    pub r0: f64,
    pub iterations: usize,
    pub residual: f64,
    pub deltas: Vec<f64>,
    pub ratios: Vec<f64>,
    pub c1: f64,
    pub c2: f64,
    pub envelopes: EnvelopeVerdict,
    pub maxwell_residuals: OdeResiduals,
    pub quadrature_guard: GuardReport,
    pub sup_phi: f64,
    pub sup_a_phi: f64,
    pub sup_a_3: f64,
    pub pass: bool,
}

/// Kernel inputs at up to 17 nodes of the converged state, for the order-doubling check.
fn guard_inputs(s: &Solved) -> Vec<DensityKernelInput> {
    let x = s.grid.nodes();
    let stride = (x.len() / 16).max(1);
    (0..x.len())
        .step_by(stride)
        .map(|i| {
            let r = x[i];
            DensityKernelInput {
                r,
                a: s.state.phi.values()[i],
                b: s.state.a_phi.values()[i] + s.ext.a_phi.value(r),
                c: s.state.a_3.values()[i] + s.ext.a_3.value(r),
            }
        })
        .collect()
}

pub fn solve_report(cfg: &RunConfig, s: &Solved) -> Result<SolveReport> {
    let quadrature_guard = check_guard(&cfg.species, &guard_inputs(s), &cfg.quadrature)?;
    let pass = s.residual <= cfg.solver.tol && s.envelopes.pass && quadrature_guard.pass;
    Ok(SolveReport {
        grid_len: s.grid.len(),
        r0: s.grid.r0(),
        iterations: s.iterations,
        residual: s.residual,
        deltas: s.deltas.clone(),
        ratios: s.ratios.clone(),
        c1: s.pair.c1,
        c2: s.pair.c2,
        envelopes: s.envelopes.clone(),
        maxwell_residuals: ode_residuals(&s.state, &s.fields),
        quadrature_guard,
        sup_phi: s.state.phi.sup_norm(),
        sup_a_phi: s.state.a_phi.sup_norm(),
        sup_a_3: s.state.a_3.sup_norm(),
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfineReport {
    pub verdict: ConfinementVerdict,
    /// Same inequality with the computed potentials in place of the envelopes; diagnostic only.
    pub sharp: ConfinementVerdict,
    /// `b* = sup a_φ/r` for θ modes, `a₃(R₀)` for z modes.
    pub threshold: f64,
    pub support_speed_bound: f64,
    /// Particles per unit length of each species; all must be positive for a nontrivial state.
    pub slice_numbers: Vec<f64>,
    /// Largest `|ρ|, |j_φ|, |j₃|` at nodes with `r ≥ R` in the converged state.
    pub outer_source_max: f64,
    pub pass: bool,
}

fn mode_threshold(
    cfg: &RunConfig,
    spec: &PinchSpec,
    pair: &EnvelopePair,
    grid: &RadialGrid,
) -> Result<f64> {
    if spec.mode.is_theta() {
        homogeneous_b_threshold(&cfg.species, pair, spec.r_confine, grid)
    } else {
        threshold_a_3(&cfg.species, pair, grid.r0(), spec.mode)
    }
}

fn outer_source_max(s: &Solved, r_confine: f64) -> f64 {
    let mut m = 0.0f64;
    for p in [&s.fields.rho, &s.fields.j_phi, &s.fields.j_3] {
        for (&r, &v) in s.grid.nodes().iter().zip(p.values()) {
            if r >= r_confine {
                m = m.max(v.abs());
            }
        }
    }
    m
}

pub fn confine_report(cfg: &RunConfig) -> Result<ConfineReport> {
    let spec = cfg.pinch_spec()?;
    let grid = cfg.grid()?;
    let ext = cfg.external_potential()?;
    let (c1, c2) = constants_c1_c2(&cfg.species)?;
    let pair = EnvelopePair::new(c1, c2)?;
    let verdict = check_confinement(&ext, &spec, &cfg.species, &pair, &grid)?;
    let s = solve(cfg)?;
    let sharp = check_confinement_sharp(&ext, &spec, &cfg.species, &s.state)?;
    let rules = DensityQuadrature::new(cfg.quadrature)?;
    let slice = slice_numbers(&s.state, &cfg.species, &ext, &rules)?;
    let outer = outer_source_max(&s, spec.r_confine);
    Ok(ConfineReport {
        threshold: mode_threshold(cfg, &spec, &pair, &grid)?,
        support_speed_bound: support_speed_bound(&cfg.species, &pair, grid.r0())?,
        pass: verdict.pass && outer <= VACUUM_FLOOR,
        verdict,
        sharp,
        slice_numbers: slice,
        outer_source_max: outer,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExtendReport {
    pub extension: VacuumExtension,
    /// Spread of `φ + 4πa ln r` and `A₃ + 4πb ln r` over 200 radii in `[R₀, 3R₀]`.
    pub log_law_spread: [f64; 2],
    pub pass: bool,
}

/// Relative tolerance on the derivative jumps at the match point.
pub const MATCH_TOL: f64 = 1e-8;

pub fn extend_report(cfg: &RunConfig, s: &Solved) -> Result<ExtendReport> {
    let ext = extend_vacuum(&s.state, &s.fields, cfg.r_confine()?)?;
    let r0 = s.grid.r0();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for i in 0..200 {
        let r = r0 * (1.0 + 2.0 * i as f64 / 199.0);
        let c = [
            ext.phi(r) + 4.0 * PI * ext.a * r.ln(),
            ext.a_3(r) + 4.0 * PI * ext.b * r.ln(),
        ];
        for k in 0..2 {
            lo[k] = lo[k].min(c[k]);
            hi[k] = hi[k].max(c[k]);
        }
    }
    let spread = [hi[0] - lo[0], hi[1] - lo[1]];
    let scale = 1.0 + s.state.sup_norm() / r0;
    let pass = ext
        .derivative_jumps
        .iter()
        .chain(&ext.value_jumps)
        .all(|&j| j <= MATCH_TOL * scale)
        && spread.iter().all(|&d| d <= MATCH_TOL * scale);
    Ok(ExtendReport {
        extension: ext,
        log_law_spread: spread,
        pass,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub scale: f64,
    /// Slope of `A_φᵉˣᵗ` (θ modes) or amplitude of `A₃ᵉˣᵗ` (z modes) for relative sweeps;
    /// the scale factor itself otherwise.
    pub field: f64,
    pub pass: bool,
    pub worst_margin: f64,
    pub worst_r: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub sweep: SweepConfig,
    pub threshold: f64,
    /// Smallest scale from which every verdict passes.
    pub flip_scale: Option<f64>,
    /// Verdicts fail up to one point and pass from there on.
    pub monotone: bool,
    pub rows: Vec<SweepRow>,
    pub pass: bool,
}

fn sweep_external(
    cfg: &RunConfig,
    spec: &PinchSpec,
    base: &ExternalPotential,
    threshold: f64,
    scale: f64,
) -> (ExternalPotential, f64) {
    let sw = &cfg.sweep;
    if !sw.relative {
        return (base.scaled(scale), scale);
    }
    match spec.mode {
        PinchMode::ThetaA | PinchMode::ThetaB => {
            let sign = if spec.mode == PinchMode::ThetaA {
                -1.0
            } else {
                1.0
            };
            let b = sign * scale * threshold;
            (
                ExternalPotential {
                    a_phi: ExternalComponent::Linear { slope: b },
                    a_3: base.a_3.clone(),
                },
                b,
            )
        }
        PinchMode::ZA | PinchMode::ZB => {
            let sign = if spec.mode == PinchMode::ZA {
                1.0
            } else {
                -1.0
            };
            let width = match base.a_3 {
                ExternalComponent::Ramp { width, .. } if width <= spec.r_confine => width,
                _ => spec.r_confine,
            };
            let amp = sign * scale * threshold;
            (
                ExternalPotential {
                    a_phi: base.a_phi.clone(),
                    a_3: ExternalComponent::Ramp {
                        amplitude: amp,
                        width,
                    },
                },
                amp,
            )
        }
    }
}

pub fn sweep_report(cfg: &RunConfig) -> Result<SweepReport> {
    let spec = cfg.pinch_spec()?;
    let grid = cfg.grid()?;
    let base = cfg.external_potential()?;
    let (c1, c2) = constants_c1_c2(&cfg.species)?;
    let pair = EnvelopePair::new(c1, c2)?;
    let threshold = mode_threshold(cfg, &spec, &pair, &grid)?;
    let sw = cfg.sweep;
    let mut rows = Vec::with_capacity(sw.steps);
    for i in 0..sw.steps {
        let scale = sw.min + (sw.max - sw.min) * i as f64 / (sw.steps - 1) as f64;
        let (ext, field) = sweep_external(cfg, &spec, &base, threshold, scale);
        let v = check_confinement(&ext, &spec, &cfg.species, &pair, &grid)?;
        rows.push(SweepRow {
            scale,
            field,
            pass: v.pass,
            worst_margin: v.worst_margin,
            worst_r: v.worst_r,
        });
    }
    let first_pass = rows.iter().position(|r| r.pass);
    let monotone = first_pass.is_none_or(|k| rows[k..].iter().all(|r| r.pass));
    let flip_scale = first_pass.filter(|_| monotone).map(|k| rows[k].scale);
    let step = (sw.max - sw.min) / (sw.steps - 1) as f64;
    // relative sweeps must flip within one step of scale 1 when 1 is in range
    let located = !sw.relative
        || !(sw.min..=sw.max).contains(&1.0)
        || flip_scale.is_some_and(|s| (s - 1.0).abs() <= step + 1e-12);
    Ok(SweepReport {
        sweep: sw,
        threshold,
        flip_scale,
        monotone,
        pass: monotone && located,
        rows,
    })
}

fn sweep_csv(hash: &str, rep: &SweepReport) -> String {
    let mut out = format!("# config_hash: {hash}\nscale,field,pass,worst_margin,worst_r\n");
    for r in &rep.rows {
        let _ = writeln!(
            out,
            "{:e},{:e},{},{:e},{:e}",
            r.scale, r.field, r.pass, r.worst_margin, r.worst_r
        );
    }
    out
}

/// Runs `mode` and writes its artifacts into `out`.
pub fn run(cfg: &RunConfig, mode: Mode, out: &Path) -> Result<RunOutcome> {
    let hash = cfg.hash()?;
    let mut files = Vec::new();
    let (pass, summary) = match mode {
        Mode::Solve => {
            let s = solve(cfg)?;
            let rep = solve_report(cfg, &s)?;
            write_file(out, "profiles.csv", &profiles_csv(&hash, &s), &mut files)?;
            let summary = format!(
                "solve: {} iterations, residual {:.2e}, envelope margin {:.2e}, guard {:.2e}",
                rep.iterations,
                rep.residual,
                rep.envelopes.min_margin,
                rep.quadrature_guard.max_relative_change
            );
            let pass = rep.pass;
            write_json(out, "solve_report.json", &hash, "solve", rep, &mut files)?;
            (pass, summary)
        }
        Mode::Verify => {
            let s = solve(cfg)?;
            let rep: AuditReport = audit_stationarity(&s.state, &s.ext, &cfg.species, &cfg.audit)?;
            let summary = format!(
                "verify: {} trajectories, max drift {:.2e} (tolerance {:.1e}), control {:.2e}",
                rep.trajectories.len(),
                rep.max_drift,
                rep.plan.tolerance,
                rep.control.as_ref().map_or(0.0, |c| c.max_drift)
            );
            let pass = rep.pass;
            write_json(out, "audit.json", &hash, "verify", rep, &mut files)?;
            (pass, summary)
        }
        Mode::Confine => {
            let rep = confine_report(cfg)?;
            let summary = format!(
                "confine ({}): worst margin {:.3e} at r = {:.4}, outer sources {:.2e}",
                rep.verdict.mode.name(),
                rep.verdict.worst_margin,
                rep.verdict.worst_r,
                rep.outer_source_max
            );
            let pass = rep.pass;
            write_json(
                out,
                "confine_report.json",
                &hash,
                "confine",
                rep,
                &mut files,
            )?;
            (pass, summary)
        }
        Mode::Extend => {
            let s = solve(cfg)?;
            let rep = extend_report(cfg, &s)?;
            let e = &rep.extension;
            let summary = format!(
                "extend: a = {:.4e}, b = {:.4e}, c = {:.4e}, beta = {:.4e}",
                e.a, e.b, e.c, e.beta
            );
            let pass = rep.pass;
            write_json(out, "extension.json", &hash, "extend", rep, &mut files)?;
            (pass, summary)
        }
        Mode::Sweep => {
            let rep = sweep_report(cfg)?;
            write_file(out, "sweep.csv", &sweep_csv(&hash, &rep), &mut files)?;
            let summary = format!(
                "sweep: threshold {:.4e}, flip at scale {}",
                rep.threshold,
                rep.flip_scale
                    .map_or("none".to_string(), |s| format!("{s:.4}"))
            );
            let pass = rep.pass;
            write_json(out, "sweep_report.json", &hash, "sweep", rep, &mut files)?;
            (pass, summary)
        }
    };
    Ok(RunOutcome {
        pass,
        files,
        summary,
    })
}

/// Process exit status for a run result: 0 pass, 1 verdict fail, 2 config error, 3 numerical failure.
pub fn exit_code(result: &Result<RunOutcome>) -> i32 {
    match result {
        Ok(o) if o.pass => 0,
        Ok(_) => 1,
        Err(e) if e.is_config() => 2,
        Err(_) => 3,
    }
}
