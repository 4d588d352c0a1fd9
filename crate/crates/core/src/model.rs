//! Species, ansatz functions of the invariants, external potentials and phase-space points.
//!
//! Natural Gaussian units with `c = 1`. A particle of species α at position `x` with
//! momentum `v` carries the three invariants
//!
//! ```text
//! 𝓔 = √(m² + |v|²) + q φ(r)
//! 𝓕 = r (v_φ + q A_φᵗᵒᵗ(r))
//! 𝓖 = v₃ + q A₃ᵗᵒᵗ(r)
//! ```
//!
//! and its phase-space density is `f = η(𝓔, 𝓕, 𝓖)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::{AxisRule, RadialProfile};
use crate::solver::PotentialState;

/// One-dimensional C¹ polynomial window used as a factor of the builtin ansatz.
///
/// Every window takes values in `[0, 1]` and is `C^{k-1}` for smoothness exponent `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Window {
    /// Identically one.
    Unbounded,
    /// `(4 (x-lo)(hi-x) / (hi-lo)²)^k` on `]lo, hi[`, zero elsewhere.
    Bump { lo: f64, hi: f64 },
    /// One for `x ≤ edge - width`, zero for `x ≥ edge`, polynomial step in between.
    Below { edge: f64, width: f64 },
    /// Zero for `x ≤ edge`, one for `x ≥ edge + width`, polynomial step in between.
    Above { edge: f64, width: f64 },
}

/// Step polynomial `p(t) = t^k (k + 1 - k t)`: `p(0) = p'(0) = 0`, `p(1) = 1`, `p'(1) = 0`.
#[inline]
fn step(t: f64, k: i32) -> (f64, f64) {
    let kf = k as f64;
    let tk1 = t.powi(k - 1);
    (
        tk1 * t * (kf + 1.0 - kf * t),
        kf * (kf + 1.0) * tk1 * (1.0 - t),
    )
}

impl Window {
    pub fn validate(&self, what: &str) -> Result<()> {
        let ok = match *self {
            Window::Unbounded => true,
            Window::Bump { lo, hi } => lo.is_finite() && hi.is_finite() && hi > lo,
            Window::Below { edge, width } | Window::Above { edge, width } => {
                edge.is_finite() && width.is_finite() && width > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid {what} window {self:?}")))
        }
    }

    #[inline]
    pub fn eval(&self, x: f64, k: i32) -> f64 {
        match *self {
            Window::Unbounded => 1.0,
            Window::Bump { lo, hi } => {
                if x <= lo || x >= hi {
                    0.0
                } else {
                    let w = hi - lo;
                    (4.0 * (x - lo) * (hi - x) / (w * w)).powi(k)
                }
            }
            Window::Below { edge, width } => {
                if x >= edge {
                    0.0
                } else if x <= edge - width {
                    1.0
                } else {
                    step((edge - x) / width, k).0
                }
            }
            Window::Above { edge, width } => {
                if x <= edge {
                    0.0
                } else if x >= edge + width {
                    1.0
                } else {
                    step((x - edge) / width, k).0
                }
            }
        }
    }

    /// Value and derivative.
    pub fn eval_d(&self, x: f64, k: i32) -> (f64, f64) {
        match *self {
            Window::Unbounded => (1.0, 0.0),
            Window::Bump { lo, hi } => {
                if x <= lo || x >= hi {
                    (0.0, 0.0)
                } else {
                    let w2 = (hi - lo) * (hi - lo);
                    let u = 4.0 * (x - lo) * (hi - x) / w2;
                    let du = 4.0 * (hi + lo - 2.0 * x) / w2;
                    (u.powi(k), k as f64 * u.powi(k - 1) * du)
                }
            }
            Window::Below { edge, width } => {
                if x >= edge {
                    (0.0, 0.0)
                } else if x <= edge - width {
                    (1.0, 0.0)
                } else {
                    let (p, dp) = step((edge - x) / width, k);
                    (p, -dp / width)
                }
            }
            Window::Above { edge, width } => {
                if x <= edge {
                    (0.0, 0.0)
                } else if x >= edge + width {
                    (1.0, 0.0)
                } else {
                    let (p, dp) = step((x - edge) / width, k);
                    (p, dp / width)
                }
            }
        }
    }

    /// `sup |w'|`.
    pub fn max_slope(&self, k: i32) -> f64 {
        let kf = k as f64;
        match *self {
            Window::Unbounded => 0.0,
            Window::Bump { lo, hi } => {
                let y = (1.0 / (2.0 * kf - 1.0)).sqrt();
                2.0 * kf * y * (1.0 - y * y).powi(k - 1) * 2.0 / (hi - lo)
            }
            Window::Below { width, .. } | Window::Above { width, .. } => {
                (kf + 1.0) * ((kf - 1.0) / kf).powi(k - 1) / width
            }
        }
    }

    /// Closed support interval `[lo, hi]` (possibly infinite ends).
    pub fn support(&self) -> (f64, f64) {
        match *self {
            Window::Unbounded => (f64::NEG_INFINITY, f64::INFINITY),
            Window::Bump { lo, hi } => (lo, hi),
            Window::Below { edge, .. } => (f64::NEG_INFINITY, edge),
            Window::Above { edge, .. } => (edge, f64::INFINITY),
        }
    }

    /// Points where the window loses smoothness.
    pub fn breakpoints(&self) -> Vec<f64> {
        match *self {
            Window::Unbounded => vec![],
            Window::Bump { lo, hi } => vec![lo, hi],
            Window::Below { edge, width } => vec![edge - width, edge],
            Window::Above { edge, width } => vec![edge, edge + width],
        }
    }
}

/// Builtin product family `η = amp · (𝓔₀-𝓔)₊^k · w_E(𝓔) · w_F(𝓕) · w_G(𝓖)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductAnsatz {
    pub amplitude: f64,
    /// Smoothness exponent, at least 2.
    pub k: u32,
    /// Cutoff energy 𝓔₀.
    pub e0: f64,
    /// Lower energy window; must have a finite lower edge so that η* is integrable.
    #[serde(default = "default_energy_window")]
    pub e_window: Window,
    #[serde(default = "default_unbounded")]
    pub f_window: Window,
    pub g_window: Window,
    /// Require the positivity box of the nontriviality condition.
    #[serde(default = "default_true")]
    pub nontrivial: bool,
}

fn default_energy_window() -> Window {
    Window::Above {
        edge: 0.0,
        width: 0.5,
    }
}

fn default_unbounded() -> Window {
    Window::Unbounded
}

fn default_true() -> bool {
    true
}

impl ProductAnsatz {
    #[inline]
    fn energy_factor(&self, e: f64) -> f64 {
        if e >= self.e0 {
            return 0.0;
        }
        (self.e0 - e).powi(self.k as i32) * self.e_window.eval(e, self.k as i32)
    }

    fn energy_factor_d(&self, e: f64) -> (f64, f64) {
        if e >= self.e0 {
            return (0.0, 0.0);
        }
        let k = self.k as i32;
        let d = self.e0 - e;
        let (w, dw) = self.e_window.eval_d(e, k);
        let p = d.powi(k);
        let dp = -(k as f64) * d.powi(k - 1);
        (p * w, dp * w + p * dw)
    }

    #[inline]
    pub fn eval(&self, e: f64, f: f64, g: f64) -> f64 {
        let k = self.k as i32;
        let base = self.energy_factor(e);
        if base == 0.0 {
            return 0.0;
        }
        self.amplitude * base * self.f_window.eval(f, k) * self.g_window.eval(g, k)
    }

    pub fn gradient(&self, e: f64, f: f64, g: f64) -> [f64; 3] {
        let k = self.k as i32;
        let (pe, dpe) = self.energy_factor_d(e);
        let (wf, dwf) = self.f_window.eval_d(f, k);
        let (wg, dwg) = self.g_window.eval_d(g, k);
        let a = self.amplitude;
        [a * dpe * wf * wg, a * pe * dwf * wg, a * pe * wf * dwg]
    }

    pub fn majorant(&self, e: f64, g: f64) -> f64 {
        self.amplitude * self.energy_factor(e) * self.g_window.eval(g, self.k as i32)
    }

    pub fn grad_majorant(&self, e: f64, g: f64) -> f64 {
        let k = self.k as i32;
        let (pe, dpe) = self.energy_factor_d(e);
        let (wg, dwg) = self.g_window.eval_d(g, k);
        self.amplitude * (dpe.abs() * wg + pe * self.f_window.max_slope(k) * wg + pe * dwg.abs())
    }

    fn validate(&self, mass: f64) -> Result<()> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::config(
                "ansatz amplitude must be a nonnegative finite number",
            ));
        }
        if self.k < 2 {
            return Err(Error::config(format!(
                "smoothness exponent must be at least 2, got {}",
                self.k
            )));
        }
        if !self.e0.is_finite() {
            return Err(Error::config("cutoff energy must be finite"));
        }
        self.e_window.validate("energy")?;
        self.f_window.validate("F")?;
        self.g_window.validate("G")?;
        let (elo, _) = self.e_window.support();
        if !elo.is_finite() {
            return Err(Error::config(
                "energy window needs a finite lower edge: the majorant is not integrable otherwise",
            ));
        }
        let (glo, ghi) = self.g_window.support();
        if !(glo.is_finite() && ghi.is_finite()) {
            return Err(Error::config(
                "G window needs finite support: the majorant is not integrable otherwise",
            ));
        }
        if self.nontrivial && self.amplitude > 0.0 {
            let k = self.k as i32;
            if self.e0 <= mass {
                return Err(Error::config(format!(
                    "nontrivial ansatz needs cutoff energy above the rest mass ({} <= {mass})",
                    self.e0
                )));
            }
            // positivity of the energy factor just above the rest mass
            let e_probe = mass + 1e-9 * (self.e0 - mass).max(1e-300);
            if self.e_window.eval(e_probe.max(mass), k) <= 0.0
                && self.e_window.eval(0.5 * (mass + self.e0), k) <= 0.0
            {
                return Err(Error::config("energy window vanishes above the rest mass"));
            }
            let (flo, fhi) = self.f_window.support();
            let option1 = flo < 0.0 && fhi >= 0.0;
            let option2 = flo <= 0.0 && fhi > 0.0;
            if !(option1 || option2) {
                return Err(Error::config(
                    "F window must contain a neighbourhood on one side of 0",
                ));
            }
            if !(glo < 0.0 && ghi > 0.0) {
                return Err(Error::config("G window must contain 0 in its interior"));
            }
        }
        Ok(())
    }
}

/// User-tabulated ansatz on a tensor grid with user-supplied majorant tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedAnsatz {
    pub e_nodes: Vec<f64>,
    pub f_nodes: Vec<f64>,
    pub g_nodes: Vec<f64>,
    /// Row-major `[ie][if][ig]`.
    pub values: Vec<f64>,
    /// Cutoff energy; all tabulated values from one node below `e0` upward must vanish.
    pub e0: f64,
    /// η* on `[ie][ig]`.
    pub majorant: Vec<f64>,
    /// η# on `[ie][ig]`.
    pub grad_majorant: Vec<f64>,
    #[serde(default = "default_true")]
    pub nontrivial: bool,
}

/// Catmull-Rom cubic Hermite weights for `x` in a table axis: up to four `(index, weight)` pairs.
fn hermite_weights(nodes: &[f64], x: f64) -> Option<[(usize, f64); 4]> {
    let n = nodes.len();
    if x < nodes[0] || x > nodes[n - 1] {
        return None;
    }
    let i = nodes
        .partition_point(|&v| v <= x)
        .saturating_sub(1)
        .min(n - 2);
    let h = nodes[i + 1] - nodes[i];
    let t = (x - nodes[i]) / h;
    let (t2, t3) = (t * t, t * t * t);
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    // slot s holds node i - 1 + s
    let base = i as isize - 1;
    let mut w = [(0usize, 0.0); 4];
    for (s, slot) in w.iter_mut().enumerate() {
        slot.0 = (base + s as isize).clamp(0, n as isize - 1) as usize;
    }
    let mut add = |idx: usize, v: f64| w[(idx as isize - base) as usize].1 += v;
    add(i, h00);
    add(i + 1, h01);
    // centered slope at node i, one-sided at the table edge
    let (a, b) = (i.saturating_sub(1), i + 1);
    let s = h10 * h / (nodes[b] - nodes[a]);
    add(a, -s);
    add(b, s);
    let (a, b) = (i, (i + 2).min(n - 1));
    let s = h11 * h / (nodes[b] - nodes[a]);
    add(a, -s);
    add(b, s);
    Some(w)
}

impl TabulatedAnsatz {
    #[inline]
    fn idx(&self, ie: usize, jf: usize, kg: usize) -> usize {
        (ie * self.f_nodes.len() + jf) * self.g_nodes.len() + kg
    }

    pub fn eval(&self, e: f64, f: f64, g: f64) -> f64 {
        if e >= self.e0 {
            return 0.0;
        }
        let (Some(we), Some(wf), Some(wg)) = (
            hermite_weights(&self.e_nodes, e),
            hermite_weights(&self.f_nodes, f),
            hermite_weights(&self.g_nodes, g),
        ) else {
            return 0.0;
        };
        let mut s = 0.0;
        for &(ie, a) in &we {
            if a == 0.0 {
                continue;
            }
            for &(jf, b) in &wf {
                if b == 0.0 {
                    continue;
                }
                for &(kg, c) in &wg {
                    s += a * b * c * self.values[self.idx(ie, jf, kg)];
                }
            }
        }
        s.max(0.0)
    }

    fn cell_max(&self, table: &[f64], e: f64, g: f64) -> f64 {
        let (ne, ng) = (self.e_nodes.len(), self.g_nodes.len());
        if e < self.e_nodes[0]
            || e > self.e_nodes[ne - 1]
            || g < self.g_nodes[0]
            || g > self.g_nodes[ng - 1]
        {
            return 0.0;
        }
        let i = self
            .e_nodes
            .partition_point(|&v| v <= e)
            .saturating_sub(1)
            .min(ne - 2);
        let j = self
            .g_nodes
            .partition_point(|&v| v <= g)
            .saturating_sub(1)
            .min(ng - 2);
        [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)]
            .iter()
            .map(|&(a, b)| table[a * ng + b])
            .fold(0.0, f64::max)
    }

    pub fn majorant(&self, e: f64, g: f64) -> f64 {
        self.cell_max(&self.majorant, e, g)
    }

    pub fn grad_majorant(&self, e: f64, g: f64) -> f64 {
        self.cell_max(&self.grad_majorant, e, g)
    }

    /// Range of node values spanned by nonzero table entries along one axis, widened by one cell.
    fn axis_support(&self, axis: usize) -> (f64, f64) {
        let nodes = match axis {
            0 => &self.e_nodes,
            1 => &self.f_nodes,
            _ => &self.g_nodes,
        };
        let (ne, nf, ng) = (self.e_nodes.len(), self.f_nodes.len(), self.g_nodes.len());
        let mut lo = usize::MAX;
        let mut hi = 0;
        for ie in 0..ne {
            for jf in 0..nf {
                for kg in 0..ng {
                    if self.values[self.idx(ie, jf, kg)] != 0.0 {
                        let i = [ie, jf, kg][axis];
                        lo = lo.min(i);
                        hi = hi.max(i);
                    }
                }
            }
        }
        if lo == usize::MAX {
            return (0.0, 0.0);
        }
        (
            nodes[lo.saturating_sub(1)],
            nodes[(hi + 1).min(nodes.len() - 1)],
        )
    }

    fn validate(&self, mass: f64) -> Result<()> {
        let axes = [
            ("E", &self.e_nodes),
            ("F", &self.f_nodes),
            ("G", &self.g_nodes),
        ];
        for (name, nodes) in axes {
            if nodes.len() < 5 {
                return Err(Error::config(format!(
                    "tabulated ansatz needs at least 5 {name} nodes"
                )));
            }
            if nodes
                .windows(2)
                .any(|w| !(w[1] > w[0]) || !w[0].is_finite() || !w[1].is_finite())
            {
                return Err(Error::config(format!(
                    "tabulated {name} nodes must be finite and increasing"
                )));
            }
        }
        let (ne, nf, ng) = (self.e_nodes.len(), self.f_nodes.len(), self.g_nodes.len());
        if self.values.len() != ne * nf * ng {
            return Err(Error::config(format!(
                "tabulated ansatz has {} values, expected {}",
                self.values.len(),
                ne * nf * ng
            )));
        }
        if self.majorant.len() != ne * ng || self.grad_majorant.len() != ne * ng {
            return Err(Error::config(
                "majorant tables must have one value per (E, G) node",
            ));
        }
        if self
            .values
            .iter()
            .chain(&self.majorant)
            .chain(&self.grad_majorant)
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::config(
                "tabulated values and majorants must be finite and nonnegative",
            ));
        }
        // two zero layers on every face keep the extension by zero C¹
        for ie in 0..ne {
            for jf in 0..nf {
                for kg in 0..ng {
                    let edge = |i: usize, n: usize| i < 2 || i + 2 >= n;
                    if (edge(ie, ne) || edge(jf, nf) || edge(kg, ng))
                        && self.values[self.idx(ie, jf, kg)] != 0.0
                    {
                        return Err(Error::config(
                            "tabulated ansatz must vanish on the two outermost layers",
                        ));
                    }
                }
            }
        }
        // with E_c the last node ≤ e0, zeros from E_{c-1} upward make η vanish on [E_c, ∞) with
        // zero slope, so the hard cutoff at e0 is C¹
        let c = self
            .e_nodes
            .partition_point(|&v| v <= self.e0)
            .saturating_sub(1);
        for ie in c.saturating_sub(1)..ne {
            for jf in 0..nf {
                for kg in 0..ng {
                    if self.values[self.idx(ie, jf, kg)] != 0.0 {
                        return Err(Error::config("tabulated ansatz must vanish from one node below the cutoff energy upward"));
                    }
                }
            }
        }
        if self.nontrivial && self.values.iter().all(|&v| v == 0.0) {
            return Err(Error::config(
                "nontrivial tabulated ansatz has no positive entries",
            ));
        }
        let _ = mass;
        self.validate_majorants()
    }

    /// Deterministic sample check of `η ≤ η*` and `|∇η| ≤ η#`.
    fn validate_majorants(&self) -> Result<()> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eed);
        let span = |v: &[f64]| (v[0], v[v.len() - 1]);
        let (e_lo, e_hi) = span(&self.e_nodes);
        let (f_lo, f_hi) = span(&self.f_nodes);
        let (g_lo, g_hi) = span(&self.g_nodes);
        let scale = self.values.iter().fold(0.0f64, |m, &v| m.max(v));
        for _ in 0..4000 {
            let e = rng.gen_range(e_lo..e_hi);
            let f = rng.gen_range(f_lo..f_hi);
            let g = rng.gen_range(g_lo..g_hi);
            let v = self.eval(e, f, g);
            if v > self.majorant(e, g) + 1e-12 * scale {
                return Err(Error::config(format!(
                    "majorant η* violated at (𝓔, 𝓕, 𝓖) = ({e}, {f}, {g})"
                )));
            }
            let h = 1e-6;
            let grad = [
                (self.eval(e + h, f, g) - self.eval(e - h, f, g)) / (2.0 * h),
                (self.eval(e, f + h, g) - self.eval(e, f - h, g)) / (2.0 * h),
                (self.eval(e, f, g + h) - self.eval(e, f, g - h)) / (2.0 * h),
            ];
            let norm = grad.iter().map(|x| x * x).sum::<f64>().sqrt();
            let bound = self
                .grad_majorant(e, g)
                .max(self.grad_majorant(e - h, g))
                .max(self.grad_majorant(e + h, g));
            if norm > bound + 1e-6 * (1.0 + scale) {
                return Err(Error::config(format!(
                    "gradient majorant η# violated at (𝓔, 𝓕, 𝓖) = ({e}, {f}, {g})"
                )));
            }
        }
        Ok(())
    }
}

/// An ansatz function η of the three invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Ansatz {
    Product(ProductAnsatz),
    Tabulated(TabulatedAnsatz),
}

impl Ansatz {
    #[inline]
    pub fn eval(&self, e: f64, f: f64, g: f64) -> f64 {
        match self {
            Ansatz::Product(p) => p.eval(e, f, g),
            Ansatz::Tabulated(t) => t.eval(e, f, g),
        }
    }

    /// ∇η; finite differences for tabulated data.
    pub fn gradient(&self, e: f64, f: f64, g: f64) -> [f64; 3] {
        match self {
            Ansatz::Product(p) => p.gradient(e, f, g),
            Ansatz::Tabulated(t) => {
                let h = 1e-7;
                [
                    (t.eval(e + h, f, g) - t.eval(e - h, f, g)) / (2.0 * h),
                    (t.eval(e, f + h, g) - t.eval(e, f - h, g)) / (2.0 * h),
                    (t.eval(e, f, g + h) - t.eval(e, f, g - h)) / (2.0 * h),
                ]
            }
        }
    }

    /// η*(𝓔, 𝓖) ≥ |η(𝓔, 𝓕, 𝓖)| for all 𝓕.
    pub fn majorant(&self, e: f64, g: f64) -> f64 {
        match self {
            Ansatz::Product(p) => p.majorant(e, g),
            Ansatz::Tabulated(t) => t.majorant(e, g),
        }
    }

    /// η#(𝓔, 𝓖) ≥ |∇η(𝓔, 𝓕, 𝓖)| for all 𝓕.
    pub fn grad_majorant(&self, e: f64, g: f64) -> f64 {
        match self {
            Ansatz::Product(p) => p.grad_majorant(e, g),
            Ansatz::Tabulated(t) => t.grad_majorant(e, g),
        }
    }

    pub fn cutoff_energy(&self) -> f64 {
        match self {
            Ansatz::Product(p) => p.e0,
            Ansatz::Tabulated(t) => t.e0,
        }
    }

    /// Lowest energy at which η can be nonzero.
    pub fn energy_floor(&self) -> f64 {
        match self {
            Ansatz::Product(p) => p.e_window.support().0,
            Ansatz::Tabulated(t) => t.axis_support(0).0,
        }
    }

    /// Closed 𝓕-interval outside of which η vanishes.
    pub fn f_support(&self) -> (f64, f64) {
        match self {
            Ansatz::Product(p) => p.f_window.support(),
            Ansatz::Tabulated(t) => t.axis_support(1),
        }
    }

    /// Closed 𝓖-interval outside of which η vanishes.
    pub fn g_support(&self) -> (f64, f64) {
        match self {
            Ansatz::Product(p) => p.g_window.support(),
            Ansatz::Tabulated(t) => t.axis_support(2),
        }
    }

    pub fn energy_breakpoints(&self) -> Vec<f64> {
        match self {
            Ansatz::Product(p) => p.e_window.breakpoints(),
            Ansatz::Tabulated(t) => t.e_nodes.clone(),
        }
    }

    pub fn g_breakpoints(&self) -> Vec<f64> {
        match self {
            Ansatz::Product(p) => p.g_window.breakpoints(),
            Ansatz::Tabulated(t) => t.g_nodes.clone(),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Ansatz::Product(p) => p.amplitude == 0.0,
            Ansatz::Tabulated(t) => t.values.iter().all(|&v| v == 0.0),
        }
    }

    pub fn nontrivial(&self) -> bool {
        match self {
            Ansatz::Product(p) => p.nontrivial && p.amplitude > 0.0,
            Ansatz::Tabulated(t) => t.nontrivial,
        }
    }

    /// `(Σ_j η(𝓔, 𝓕_j, 𝓖), Σ_j sin θ_j η(𝓔, 𝓕_j, 𝓖))` over trapezoid nodes with `𝓕_j = r W sin θ_j + r q b`.
    ///
    /// `half_sines` holds `sin θ_j` for the nodes with `0 < θ_j < π`, each paired with its mirror
    /// `2π - θ_j`; `n_zero` nodes have `sin θ_j = 0`. Pairing makes the sine moment of an
    /// 𝓕-independent η vanish exactly. The θ-independent product factors are hoisted out of the loop.
    #[inline]
    pub fn theta_sums(
        &self,
        e: f64,
        g: f64,
        rw: f64,
        rqb: f64,
        half_sines: &[f64],
        n_zero: usize,
    ) -> (f64, f64) {
        match self {
            Ansatz::Product(p) => {
                let base = p.majorant(e, g);
                if base == 0.0 {
                    return (0.0, 0.0);
                }
                let k = p.k as i32;
                let w = |f: f64| p.f_window.eval(f, k);
                let (s0, s1) = pair_sums(w, rw, rqb, half_sines, n_zero);
                (base * s0, base * s1)
            }
            Ansatz::Tabulated(t) => pair_sums(|f| t.eval(e, f, g), rw, rqb, half_sines, n_zero),
        }
    }

    pub fn validate(&self, mass: f64) -> Result<()> {
        match self {
            Ansatz::Product(p) => p.validate(mass),
            Ansatz::Tabulated(t) => t.validate(mass),
        }
    }
}

#[inline]
fn pair_sums(
    w: impl Fn(f64) -> f64,
    rw: f64,
    rqb: f64,
    half_sines: &[f64],
    n_zero: usize,
) -> (f64, f64) {
    let mut s0 = n_zero as f64 * w(rqb);
    let mut s1 = 0.0;
    for &s in half_sines {
        let (plus, minus) = (w(rqb + rw * s), w(rqb - rw * s));
        s0 += plus + minus;
        s1 += s * (plus - minus);
    }
    (s0, s1)
}

/// One particle population.
impl From<ProductAnsatz> for Ansatz {
    fn from(p: ProductAnsatz) -> Self {
        Ansatz::Product(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Species {
    #[serde(default)]
    pub name: String,
    pub mass: f64,
    pub charge: f64,
    pub ansatz: Ansatz,
}

impl Species {
    pub fn new(name: impl Into<String>, mass: f64, charge: f64, ansatz: Ansatz) -> Result<Self> {
        let s = Species {
            name: name.into(),
            mass,
            charge,
            ansatz,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::config(format!(
                "species '{}': mass must be positive",
                self.name
            )));
        }
        if !(self.charge != 0.0 && self.charge.is_finite()) {
            return Err(Error::config(format!(
                "species '{}': charge must be nonzero",
                self.name
            )));
        }
        self.ansatz
            .validate(self.mass)
            .map_err(|e| Error::config(format!("species '{}': {e}", self.name)))
    }
}

/// One component (A_φᵉˣᵗ or A₃ᵉˣᵗ) of the external vector potential.
#[derive(Debug, Clone)]
pub enum ExternalComponent {
    Zero,
    /// `slope · r`; the homogeneous axial field `B₃ᵉˣᵗ = 2·slope` when used for A_φ.
    Linear {
        slope: f64,
    },
    /// `amplitude · p(r / width)` with the C² step `p(t) = 6t⁵ - 15t⁴ + 10t³`, constant past `width`.
    Ramp {
        amplitude: f64,
        width: f64,
    },
    Profile(RadialProfile),
}

impl ExternalComponent {
    /// Value and radial derivative.
    #[inline]
    pub fn eval(&self, r: f64) -> (f64, f64) {
        match self {
            ExternalComponent::Zero => (0.0, 0.0),
            ExternalComponent::Linear { slope } => (slope * r, *slope),
            ExternalComponent::Ramp { amplitude, width } => {
                let t = (r / width).clamp(0.0, 1.0);
                let p = t * t * t * (10.0 + t * (-15.0 + 6.0 * t));
                let dp = if r < *width {
                    30.0 * t * t * (1.0 - t) * (1.0 - t) / width
                } else {
                    0.0
                };
                (amplitude * p, amplitude * dp)
            }
            ExternalComponent::Profile(p) => p.eval(r),
        }
    }

    #[inline]
    pub fn value(&self, r: f64) -> f64 {
        self.eval(r).0
    }

    pub fn second_derivative(&self, r: f64) -> f64 {
        match self {
            ExternalComponent::Zero | ExternalComponent::Linear { .. } => 0.0,
            ExternalComponent::Ramp { amplitude, width } => {
                if r >= *width {
                    0.0
                } else {
                    let t = (r / width).max(0.0);
                    amplitude * 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t) / (width * width)
                }
            }
            ExternalComponent::Profile(p) => p.second_derivative(r),
        }
    }

    pub fn scaled(&self, s: f64) -> ExternalComponent {
        match self {
            ExternalComponent::Zero => ExternalComponent::Zero,
            ExternalComponent::Linear { slope } => ExternalComponent::Linear { slope: slope * s },
            ExternalComponent::Ramp { amplitude, width } => ExternalComponent::Ramp {
                amplitude: amplitude * s,
                width: *width,
            },
            ExternalComponent::Profile(p) => ExternalComponent::Profile(p.scaled(s)),
        }
    }
}

/// External potential `A^ext = A_φᵉˣᵗ e_φ + A₃ᵉˣᵗ e₃` with `A_rᵉˣᵗ = 0`.
#[derive(Debug, Clone)]
pub struct ExternalPotential {
    pub a_phi: ExternalComponent,
    pub a_3: ExternalComponent,
}

impl Default for ExternalPotential {
    fn default() -> Self {
        ExternalPotential {
            a_phi: ExternalComponent::Zero,
            a_3: ExternalComponent::Zero,
        }
    }
}

impl ExternalPotential {
    pub fn new(a_phi: ExternalComponent, a_3: ExternalComponent) -> Result<Self> {
        let ext = ExternalPotential { a_phi, a_3 };
        ext.validate()?;
        Ok(ext)
    }

    pub fn none() -> Self {
        Self::default()
    }

    /// Homogeneous axial field: `A_φᵉˣᵗ = b r`.
    pub fn homogeneous(b: f64) -> Self {
        ExternalPotential {
            a_phi: ExternalComponent::Linear { slope: b },
            a_3: ExternalComponent::Zero,
        }
    }

    /// Checks `A_φᵉˣᵗ(0) = A₃ᵉˣᵗ(0) = (A₃ᵉˣᵗ)'(0) = 0`.
    pub fn validate(&self) -> Result<()> {
        for (name, c) in [("A_phi", &self.a_phi), ("A_3", &self.a_3)] {
            if let ExternalComponent::Ramp { amplitude, width } = c {
                if !(amplitude.is_finite() && *width > 0.0 && width.is_finite()) {
                    return Err(Error::config(format!(
                        "external {name} ramp needs finite amplitude and positive width"
                    )));
                }
            }
            if let ExternalComponent::Linear { slope } = c {
                if !slope.is_finite() {
                    return Err(Error::config(format!(
                        "external {name} slope must be finite"
                    )));
                }
            }
            let (v0, _) = c.eval(0.0);
            let scale = match c {
                ExternalComponent::Profile(p) => p.sup_norm(),
                _ => 0.0,
            };
            if v0.abs() > 1e-12 * (1.0 + scale) {
                return Err(Error::config(format!(
                    "external {name} must vanish on the axis, got {v0}"
                )));
            }
        }
        match &self.a_3 {
            ExternalComponent::Linear { slope } if *slope != 0.0 => {
                return Err(Error::config(
                    "external A_3 must have zero slope on the axis; a linear A_3 (constant B_phi) is not admissible",
                ));
            }
            ExternalComponent::Profile(p) => {
                let x = p.grid().nodes();
                let v = p.values();
                let dd = (v[1] - v[0]) / x[1];
                let scale = 1.0 + p.sup_norm() / p.grid().r0();
                if dd.abs() > 1e-3 * scale || p.axis_rule() != AxisRule::ZeroSlope {
                    return Err(Error::config(
                        "tabulated external A_3 must have zero slope on the axis",
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> ExternalPotential {
        ExternalPotential {
            a_phi: self.a_phi.scaled(s),
            a_3: self.a_3.scaled(s),
        }
    }
}

/// A point `(x, v)` in phase space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseState {
    pub x: [f64; 3],
    pub v: [f64; 3],
}

impl PhaseState {
    pub fn new(x: [f64; 3], v: [f64; 3]) -> Self {
        PhaseState { x, v }
    }

    /// State at radius `r` on the `x₁` axis with cylindrical momentum components.
    pub fn from_cylindrical(r: f64, angle: f64, v_r: f64, v_phi: f64, v_3: f64) -> Self {
        let (s, c) = angle.sin_cos();
        PhaseState {
            x: [r * c, r * s, 0.0],
            v: [v_r * c - v_phi * s, v_r * s + v_phi * c, v_3],
        }
    }

    #[inline]
    pub fn r(&self) -> f64 {
        self.x[0].hypot(self.x[1])
    }

    /// Unit vectors `(e_r, e_φ)` in the transverse plane; `e_r = e₁` on the axis.
    #[inline]
    pub fn basis(&self) -> ([f64; 2], [f64; 2]) {
        let r = self.r();
        if r == 0.0 {
            ([1.0, 0.0], [0.0, 1.0])
        } else {
            let (c, s) = (self.x[0] / r, self.x[1] / r);
            ([c, s], [-s, c])
        }
    }

    /// `(v_r, v_φ, v₃)`.
    #[inline]
    pub fn v_cyl(&self) -> (f64, f64, f64) {
        let (er, ephi) = self.basis();
        (
            self.v[0] * er[0] + self.v[1] * er[1],
            self.v[0] * ephi[0] + self.v[1] * ephi[1],
            self.v[2],
        )
    }

    /// `r v_φ = x₁ v₂ - x₂ v₁`, smooth through the axis.
    #[inline]
    pub fn r_v_phi(&self) -> f64 {
        self.x[0] * self.v[1] - self.x[1] * self.v[0]
    }

    pub fn speed(&self) -> f64 {
        (self.v[0] * self.v[0] + self.v[1] * self.v[1] + self.v[2] * self.v[2]).sqrt()
    }

    /// Specular reflection `v ↦ v - 2 v_r e_r`.
    pub fn reflected(&self) -> PhaseState {
        let (er, _) = self.basis();
        let vr = self.v[0] * er[0] + self.v[1] * er[1];
        PhaseState {
            x: self.x,
            v: [
                self.v[0] - 2.0 * vr * er[0],
                self.v[1] - 2.0 * vr * er[1],
                self.v[2],
            ],
        }
    }

    /// Rotation by `angle` about the x₃ axis.
    pub fn rotated(&self, angle: f64) -> PhaseState {
        let (s, c) = angle.sin_cos();
        let rot = |a: [f64; 3]| [c * a[0] - s * a[1], s * a[0] + c * a[1], a[2]];
        PhaseState {
            x: rot(self.x),
            v: rot(self.v),
        }
    }
}

/// The triple (𝓔, 𝓕, 𝓖).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Invariants {
    pub energy: f64,
    pub angular: f64,
    pub axial: f64,
}

/// `(φ, A_φᵗᵒᵗ, A₃ᵗᵒᵗ)` at radius `r`.
#[inline]
pub fn total_potentials(
    potentials: &PotentialState,
    ext: &ExternalPotential,
    r: f64,
) -> (f64, f64, f64) {
    (
        potentials.phi.value(r),
        potentials.a_phi.value(r) + ext.a_phi.value(r),
        potentials.a_3.value(r) + ext.a_3.value(r),
    )
}

/// Invariants without the domain check; used along trajectories that may graze the wall.
#[inline]
pub fn invariants_unchecked(
    species: &Species,
    potentials: &PotentialState,
    ext: &ExternalPotential,
    state: &PhaseState,
) -> Invariants {
    let r = state.r();
    let (phi, a_phi, a_3) = total_potentials(potentials, ext, r);
    let q = species.charge;
    let v2 = state.v.iter().map(|x| x * x).sum::<f64>();
    Invariants {
        energy: (species.mass * species.mass + v2).sqrt() + q * phi,
        angular: state.r_v_phi() + r * q * a_phi,
        axial: state.v[2] + q * a_3,
    }
}

/// (𝓔, 𝓕, 𝓖) of `state` for `species` in the given internal and external potentials.
pub fn invariants(
    species: &Species,
    potentials: &PotentialState,
    ext: &ExternalPotential,
    state: &PhaseState,
) -> Result<Invariants> {
    let r = state.r();
    let r0 = potentials.phi.grid().r0();
    if !(r <= r0 * (1.0 + 1e-12)) {
        return Err(Error::Domain { r, r0 });
    }
    Ok(invariants_unchecked(species, potentials, ext, state))
}

/// η(𝓔, 𝓕, 𝓖) for `species`.
#[inline]
pub fn eval_ansatz(species: &Species, e: f64, f: f64, g: f64) -> f64 {
    species.ansatz.eval(e, f, g)
}

/// `f(x, v) = η(𝓔(x, v), 𝓕(x, v), 𝓖(x, v))`. There is no x₃ argument: f is x₃-independent.
pub fn eval_f(
    species: &Species,
    potentials: &PotentialState,
    ext: &ExternalPotential,
    state: &PhaseState,
) -> Result<f64> {
    let inv = invariants(species, potentials, ext, state)?;
    Ok(eval_ansatz(species, inv.energy, inv.angular, inv.axial))
}
