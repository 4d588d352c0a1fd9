//! Radial grids and C² cubic-spline profiles on `[0, R₀]`.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Strictly increasing radial nodes `0 = r₀ < r₁ < … < r_n = R₀`.
#[derive(Debug, Clone)]
pub struct RadialGrid {
    nodes: Arc<[f64]>,
}

impl RadialGrid {
    pub fn uniform(r0: f64, n: usize) -> Result<Self> {
        if !(r0 > 0.0 && r0.is_finite()) {
            return Err(Error::config(format!(
                "outer radius must be positive, got {r0}"
            )));
        }
        if n < 4 {
            return Err(Error::config(format!(
                "grid needs at least 4 nodes, got {n}"
            )));
        }
        let h = r0 / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        nodes[n - 1] = r0;
        Ok(RadialGrid {
            nodes: nodes.into(),
        })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 4 {
            return Err(Error::config("grid needs at least 4 nodes"));
        }
        if nodes[0] != 0.0 {
            return Err(Error::config("grid must start at r = 0"));
        }
        if nodes
            .windows(2)
            .any(|w| !(w[1] > w[0]) || !w[1].is_finite())
        {
            return Err(Error::config(
                "grid nodes must be finite and strictly increasing",
            ));
        }
        Ok(RadialGrid {
            nodes: nodes.into(),
        })
    }

    #[inline]
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    #[inline]
    pub fn r0(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Index `i` of the panel `[r_i, r_{i+1}]` containing `r` (clamped to the end panels).
    #[inline]
    pub fn locate(&self, r: f64) -> usize {
        let n = self.nodes.len();
        let i = self.nodes.partition_point(|&x| x <= r);
        i.saturating_sub(1).min(n - 2)
    }

    pub fn same_as(&self, other: &RadialGrid) -> bool {
        Arc::ptr_eq(&self.nodes, &other.nodes) || self.nodes == other.nodes
    }

    /// Grid refined by splitting each panel into `factor` equal sub-panels.
    pub fn refined(&self, factor: usize) -> RadialGrid {
        let factor = factor.max(1);
        let mut out = Vec::with_capacity((self.len() - 1) * factor + 1);
        for w in self.nodes.windows(2) {
            for j in 0..factor {
                out.push(w[0] + (w[1] - w[0]) * j as f64 / factor as f64);
            }
        }
        out.push(self.r0());
        RadialGrid { nodes: out.into() }
    }
}

/// Slope condition imposed by the spline at `r = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AxisRule {
    /// f'(0) = 0, as for every potential produced by the fixed-point map.
    ZeroSlope,
    /// Slope estimated from the data by a one-sided cubic.
    Free,
}

/// Values of a scalar function on a [`RadialGrid`], interpolated by a clamped cubic spline.
#[derive(Debug, Clone)]
pub struct RadialProfile {
    grid: RadialGrid,
    values: Vec<f64>,
    second: Vec<f64>,
    axis: AxisRule,
}

impl RadialProfile {
    pub fn new(grid: RadialGrid, values: Vec<f64>, axis: AxisRule) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::config(format!(
                "profile has {} values for {} grid nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::config(format!(
                "non-finite profile value at node {i}"
            )));
        }
        let second = spline_second_derivatives(grid.nodes(), &values, axis);
        Ok(RadialProfile {
            grid,
            values,
            second,
            axis,
        })
    }

    pub fn zeros(grid: &RadialGrid) -> Self {
        let n = grid.len();
        RadialProfile {
            grid: grid.clone(),
            values: vec![0.0; n],
            second: vec![0.0; n],
            axis: AxisRule::ZeroSlope,
        }
    }

    pub fn from_fn(grid: &RadialGrid, axis: AxisRule, f: impl Fn(f64) -> f64) -> Result<Self> {
        let values = grid.nodes().iter().map(|&r| f(r)).collect();
        Self::new(grid.clone(), values, axis)
    }

    #[inline]
    pub fn grid(&self) -> &RadialGrid {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn axis_rule(&self) -> AxisRule {
        self.axis
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Cubic coefficients `[a, b, c, d]` of panel `i` in the local variable `t = r - r_i`.
    #[inline]
    pub fn panel_poly(&self, i: usize) -> [f64; 4] {
        let x = self.grid.nodes();
        let h = x[i + 1] - x[i];
        let (y0, y1) = (self.values[i], self.values[i + 1]);
        let (m0, m1) = (self.second[i], self.second[i + 1]);
        let b = (y1 - y0) / h - h * (2.0 * m0 + m1) / 6.0;
        [y0, b, 0.5 * m0, (m1 - m0) / (6.0 * h)]
    }

    /// Value and first derivative at `r`; outside `[0, R₀]` the end panels are extended.
    #[inline]
    pub fn eval(&self, r: f64) -> (f64, f64) {
        let i = self.grid.locate(r);
        let [a, b, c, d] = self.panel_poly(i);
        let t = r - self.grid.nodes()[i];
        (
            a + t * (b + t * (c + t * d)),
            b + t * (2.0 * c + 3.0 * d * t),
        )
    }

    #[inline]
    pub fn value(&self, r: f64) -> f64 {
        self.eval(r).0
    }

    #[inline]
    pub fn derivative(&self, r: f64) -> f64 {
        self.eval(r).1
    }

    pub fn second_derivative(&self, r: f64) -> f64 {
        let i = self.grid.locate(r);
        let [_, _, c, d] = self.panel_poly(i);
        2.0 * c + 6.0 * d * (r - self.grid.nodes()[i])
    }

    pub fn scaled(&self, s: f64) -> RadialProfile {
        RadialProfile {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * s).collect(),
            second: self.second.iter().map(|v| v * s).collect(),
            axis: self.axis,
        }
    }
}

/// Derivative at `x[k0]` of the cubic through `x[k0..k0+4]` (or fewer points on tiny grids).
fn one_sided_slope(x: &[f64], y: &[f64], at: usize, idx: &[usize]) -> f64 {
    let x0 = x[at];
    let mut s = 0.0;
    for &j in idx {
        let lj = if j == at {
            idx.iter()
                .filter(|&&k| k != at)
                .map(|&k| 1.0 / (x0 - x[k]))
                .sum::<f64>()
        } else {
            let num: f64 = idx
                .iter()
                .filter(|&&k| k != j && k != at)
                .map(|&k| x0 - x[k])
                .product();
            let den: f64 = idx
                .iter()
                .filter(|&&k| k != j)
                .map(|&k| x[j] - x[k])
                .product();
            num / den
        };
        s += lj * y[j];
    }
    s
}

fn spline_second_derivatives(x: &[f64], y: &[f64], axis: AxisRule) -> Vec<f64> {
    let n = x.len();
    let s0 = match axis {
        AxisRule::ZeroSlope => 0.0,
        AxisRule::Free => one_sided_slope(x, y, 0, &[0, 1, 2, 3]),
    };
    let sn = one_sided_slope(x, y, n - 1, &[n - 4, n - 3, n - 2, n - 1]);

    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    diag[0] = 2.0 * h[0];
    sup[0] = h[0];
    rhs[0] = 6.0 * ((y[1] - y[0]) / h[0] - s0);
    for i in 1..n - 1 {
        sub[i] = h[i - 1];
        diag[i] = 2.0 * (h[i - 1] + h[i]);
        sup[i] = h[i];
        rhs[i] = 6.0 * ((y[i + 1] - y[i]) / h[i] - (y[i] - y[i - 1]) / h[i - 1]);
    }
    sub[n - 1] = h[n - 2];
    diag[n - 1] = 2.0 * h[n - 2];
    rhs[n - 1] = 6.0 * (sn - (y[n - 1] - y[n - 2]) / h[n - 2]);

    // Thomas algorithm
    for i in 1..n {
        let w = sub[i] / diag[i - 1];
        diag[i] -= w * sup[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    let mut m = vec![0.0; n];
    m[n - 1] = rhs[n - 1] / diag[n - 1];
    for i in (0..n - 1).rev() {
        m[i] = (rhs[i] - sup[i] * m[i + 1]) / diag[i];
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_cubics_exactly() {
        let grid = RadialGrid::uniform(2.0, 11).unwrap();
        let f = |r: f64| 1.0 - 0.5 * r * r + 0.25 * r * r * r;
        let p = RadialProfile::from_fn(&grid, AxisRule::ZeroSlope, f).unwrap();
        for k in 0..=40 {
            let r = 2.0 * k as f64 / 40.0;
            assert!((p.value(r) - f(r)).abs() < 1e-12);
            let d = -r + 0.75 * r * r;
            assert!((p.derivative(r) - d).abs() < 1e-11);
        }
    }

    #[test]
    fn fourth_order_on_smooth_data() {
        let err = |n: usize| {
            let grid = RadialGrid::uniform(1.0, n).unwrap();
            let p =
                RadialProfile::from_fn(&grid, AxisRule::ZeroSlope, |r| (2.0 * r).cos()).unwrap();
            (0..200)
                .map(|k| k as f64 / 199.0)
                .map(|r| (p.value(r) - (2.0 * r).cos()).abs())
                .fold(0.0, f64::max)
        };
        let order = (err(33) / err(65)).log2();
        assert!(order > 3.5, "observed order {order}");
    }

    #[test]
    fn nonuniform_grid_and_locate() {
        let grid = RadialGrid::from_nodes(vec![0.0, 0.1, 0.3, 0.35, 0.8, 1.0]).unwrap();
        assert_eq!(grid.locate(0.0), 0);
        assert_eq!(grid.locate(0.31), 2);
        assert_eq!(grid.locate(1.0), 4);
        assert_eq!(grid.locate(1.5), 4);
        let p = RadialProfile::from_fn(&grid, AxisRule::Free, |r| 3.0 * r - 1.0).unwrap();
        assert!((p.value(0.55) - 0.65).abs() < 1e-12);
        assert!((p.derivative(0.9) - 3.0).abs() < 1e-11);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(RadialGrid::from_nodes(vec![0.0, 0.2, 0.2, 1.0]).is_err());
        assert!(RadialGrid::from_nodes(vec![0.1, 0.2, 0.3, 1.0]).is_err());
        assert!(RadialGrid::uniform(-1.0, 10).is_err());
        let g = RadialGrid::uniform(1.0, 5).unwrap();
        assert!(RadialProfile::new(g.clone(), vec![0.0; 4], AxisRule::Free).is_err());
        assert!(RadialProfile::new(g, vec![0.0, f64::NAN, 0.0, 0.0, 0.0], AxisRule::Free).is_err());
    }

    #[test]
    fn refinement_keeps_coarse_nodes() {
        let g = RadialGrid::uniform(1.0, 5).unwrap();
        let f = g.refined(10);
        assert_eq!(f.len(), 41);
        for (i, &r) in g.nodes().iter().enumerate() {
            assert!((f.nodes()[10 * i] - r).abs() < 1e-15);
        }
    }
}
