//! A priori envelopes ξ and ζ for the potentials, and a product-integration Volterra solver.
//!
//! ```text
//! ξ(r) = Σ_{k≥1} c₁ c₂^{k-1} r^{2k} / (4^k (k!)²)        = (c₁/c₂)(I₀(√c₂ r) - 1)
//! ζ(r) = Σ_{k≥1} c₁ c₂^{k-1} r^{2k} / ((1 - 1/(4k²)) 4^k (k!)²)
//! ```
//!
//! ξ is the solution of `ξ(r) = c₁r²/4 + c₂ ∫₀^r (ln r - ln s) s ξ(s) ds`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::profile::{AxisRule, RadialGrid, RadialProfile};
use crate::quad::GaussLegendre;

const SERIES_RTOL: f64 = 1e-16;
const MAX_TERMS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvelopeRule {
    #[default]
    Series,
    Bessel,
}

/// The constants `(c₁, c₂)` and the rule used to evaluate ξ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePair {
    pub c1: f64,
    pub c2: f64,
    #[serde(default)]
    pub rule: EnvelopeRule,
    /// Truncation order; `None` sums until the next term is negligible.
    #[serde(default)]
    pub order: Option<usize>,
}

impl EnvelopePair {
    pub fn new(c1: f64, c2: f64) -> Result<Self> {
        if !(c1 >= 0.0 && c2 >= 0.0 && c1.is_finite() && c2.is_finite()) {
            return Err(Error::config(format!(
                "envelope constants must be finite and nonnegative, got ({c1}, {c2})"
            )));
        }
        Ok(EnvelopePair {
            c1,
            c2,
            rule: EnvelopeRule::Series,
            order: None,
        })
    }

    pub fn with_rule(mut self, rule: EnvelopeRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn with_order(mut self, order: usize) -> Self {
        self.order = Some(order);
        self
    }

    pub fn xi(&self, r: f64) -> f64 {
        match (self.rule, self.order) {
            (EnvelopeRule::Bessel, None) => {
                if self.c2 == 0.0 {
                    self.c1 * r * r / 4.0
                } else {
                    self.c1 / self.c2 * i0m1(self.c2.sqrt() * r)
                }
            }
            (_, order) => series(self.c1, self.c2, r, order.unwrap_or(MAX_TERMS), false),
        }
    }

    pub fn zeta(&self, r: f64) -> f64 {
        series(self.c1, self.c2, r, self.order.unwrap_or(MAX_TERMS), true)
    }

    /// Sum of the first `m` terms of ξ; bounds `|φᵐ|` and `|A₃ᵐ|` for the m-th Picard iterate.
    pub fn xi_partial(&self, r: f64, m: usize) -> f64 {
        series(self.c1, self.c2, r, m, false)
    }

    /// Sum of the first `m` terms of ζ; bounds `|A_φᵐ|` for the m-th Picard iterate.
    pub fn zeta_partial(&self, r: f64, m: usize) -> f64 {
        series(self.c1, self.c2, r, m, true)
    }
}

pub fn xi(r: f64, pair: &EnvelopePair) -> f64 {
    pair.xi(r)
}

pub fn zeta(r: f64, pair: &EnvelopePair) -> f64 {
    pair.zeta(r)
}

fn series(c1: f64, c2: f64, r: f64, max_terms: usize, weaker: bool) -> f64 {
    let x = r * r / 4.0;
    let mut term = c1 * x;
    let mut sum = 0.0;
    for k in 1..=max_terms {
        let kf = k as f64;
        let t = if weaker {
            term / (1.0 - 1.0 / (4.0 * kf * kf))
        } else {
            term
        };
        sum += t;
        let next = term * c2 * x / ((kf + 1.0) * (kf + 1.0));
        if next <= SERIES_RTOL * sum || next == 0.0 {
            break;
        }
        term = next;
    }
    sum
}

/// `I₀(x) - 1` by its power series, without the cancellation of the leading 1.
pub fn i0m1(x: f64) -> f64 {
    let y = x * x / 4.0;
    let mut term = y;
    let mut sum = 0.0;
    for k in 1..MAX_TERMS {
        sum += term;
        let kf = (k + 1) as f64;
        term *= y / (kf * kf);
        if term <= SERIES_RTOL * sum {
            break;
        }
    }
    sum
}

/// Modified Bessel function `I₀(x)`.
pub fn i0(x: f64) -> f64 {
    1.0 + i0m1(x)
}

/// Cubic Lagrange stencil for panel `[r_{i-1}, r_i]`: the four nodes ending at `i`, or the first
/// four nodes for the start-up panels.
fn stencil(i: usize) -> std::ops::RangeInclusive<usize> {
    let lo = i.max(3) - 3;
    lo..=lo + 3
}

fn lagrange(xs: &[f64], j: usize, s: f64) -> f64 {
    let mut v = 1.0;
    for (m, &xm) in xs.iter().enumerate() {
        if m != j {
            v *= (s - xm) / (xs[j] - xm);
        }
    }
    v
}

/// Monomial coefficients (ascending) of the j-th Lagrange basis polynomial.
fn lagrange_monomial(xs: &[f64], j: usize) -> Vec<f64> {
    let mut c = vec![1.0];
    for (m, &xm) in xs.iter().enumerate() {
        if m == j {
            continue;
        }
        let d = xs[j] - xm;
        let mut next = vec![0.0; c.len() + 1];
        for (p, &cp) in c.iter().enumerate() {
            next[p + 1] += cp / d;
            next[p] -= cp * xm / d;
        }
        c = next;
    }
    c
}

/// Per-node weights `(∫ s L_j, ∫ s ln s L_j)` over panel `[r_{i-1}, r_i]`.
fn panel_weights(x: &[f64], i: usize, gl: &GaussLegendre) -> Vec<(usize, f64, f64)> {
    let idx: Vec<usize> = stencil(i).collect();
    let xs: Vec<f64> = idx.iter().map(|&j| x[j]).collect();
    let (a, b) = (x[i - 1], x[i]);
    idx.iter()
        .enumerate()
        .map(|(jj, &j)| {
            if a == 0.0 {
                // exact moments: ∫₀^h s^{q} = h^{q+1}/(q+1), ∫₀^h s^{q} ln s = h^{q+1}/(q+1) (ln h - 1/(q+1))
                let c = lagrange_monomial(&xs, jj);
                let (mut w1, mut w2) = (0.0, 0.0);
                for (p, &cp) in c.iter().enumerate() {
                    let q1 = (p + 2) as f64;
                    let hq = b.powf(q1) / q1;
                    w1 += cp * hq;
                    w2 += cp * hq * (b.ln() - 1.0 / q1);
                }
                (j, w1, w2)
            } else {
                let (mut w1, mut w2) = (0.0, 0.0);
                for (s, w) in gl.mapped(a, b) {
                    let l = lagrange(&xs, jj, s);
                    w1 += w * s * l;
                    w2 += w * s * s.ln() * l;
                }
                (j, w1, w2)
            }
        })
        .collect()
}

/// `∫₀^{r_i} (ln r_i - ln s) s p(s) ds` at every node for node values `p`, by product integration
/// of piecewise cubic Lagrange interpolants.
pub fn log_kernel_integrals(grid: &RadialGrid, p: &[f64]) -> Vec<f64> {
    let x = grid.nodes();
    let gl = GaussLegendre::new(16);
    let mut out = vec![0.0; x.len()];
    let (mut i1, mut i2) = (0.0, 0.0);
    for i in 1..x.len() {
        for (j, w1, w2) in panel_weights(x, i, &gl) {
            i1 += w1 * p[j];
            i2 += w2 * p[j];
        }
        out[i] = x[i].ln() * i1 - i2;
    }
    out
}

/// Solves `ξ(r) = c₁r²/4 + c₂ ∫₀^r (ln r - ln s) s ξ(s) ds` by implicit product-integration
/// marching on `grid`. Independent of the series evaluation.
pub fn volterra_oracle(c1: f64, c2: f64, grid: &RadialGrid) -> Result<RadialProfile> {
    EnvelopePair::new(c1, c2)?;
    let x = grid.nodes();
    let n = x.len();
    let gl = GaussLegendre::new(16);
    let weights: Vec<Vec<(usize, f64, f64)>> = (1..n).map(|i| panel_weights(x, i, &gl)).collect();
    let mut xi = vec![0.0; n];
    // start-up block: the first three panels share the stencil 0..=3, so ξ₁..ξ₃ are coupled
    let nb = 3.min(n - 1);
    let mut mat = vec![vec![0.0; nb + 1]; nb];
    for (row, i) in (1..=nb).enumerate() {
        let lr = x[i].ln();
        mat[row][row] = 1.0;
        mat[row][nb] = c1 * x[i] * x[i] / 4.0;
        for panel in &weights[..i] {
            for &(j, w1, w2) in panel {
                if j >= 1 {
                    mat[row][j - 1] -= c2 * (lr * w1 - w2);
                }
            }
        }
    }
    for (j, v) in solve_dense(mat).into_iter().enumerate() {
        xi[j + 1] = v;
    }
    let (mut i1, mut i2) = (0.0, 0.0);
    for panel in &weights[..nb] {
        for &(j, w1, w2) in panel {
            i1 += w1 * xi[j];
            i2 += w2 * xi[j];
        }
    }
    for i in nb + 1..n {
        let lr = x[i].ln();
        let (mut k1, mut k2) = (i1, i2);
        let mut diag = 0.0;
        for &(j, w1, w2) in &weights[i - 1] {
            if j == i {
                diag = lr * w1 - w2;
            } else {
                k1 += w1 * xi[j];
                k2 += w2 * xi[j];
            }
        }
        xi[i] = (c1 * x[i] * x[i] / 4.0 + c2 * (lr * k1 - k2)) / (1.0 - c2 * diag);
        for &(j, w1, w2) in &weights[i - 1] {
            i1 += w1 * xi[j];
            i2 += w2 * xi[j];
        }
    }
    RadialProfile::new(grid.clone(), xi, AxisRule::ZeroSlope)
}

/// Gaussian elimination with partial pivoting on an augmented `k × (k+1)` system.
fn solve_dense(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let k = a.len();
    for c in 0..k {
        let p = (c..k)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap_or(c);
        a.swap(c, p);
        for r in c + 1..k {
            let f = a[r][c] / a[c][c];
            for cc in c..=k {
                a[r][cc] -= f * a[c][cc];
            }
        }
    }
    let mut x = vec![0.0; k];
    for r in (0..k).rev() {
        let s: f64 = (r + 1..k).map(|c| a[r][c] * x[c]).sum();
        x[r] = (a[r][k] - s) / a[r][r];
    }
    x
}
