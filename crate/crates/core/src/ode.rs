//! Dormand–Prince 5(4) with per-step error control, specialised to the 6-dimensional
//! phase-space state `(x, v)`.

use crate::error::{Error, Result};

pub type State = [f64; 6];

/// Tolerances and step limits of the adaptive integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Dopri5 {
            rtol: 1e-10,
            atol: 1e-10,
            max_steps: 2_000_000,
        }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// fifth-order weights are the last row of A (FSAL); E = b5 - b4
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Result of one trial step.
pub struct Trial {
    pub y: State,
    pub dy: State,
    /// Weighted RMS error estimate; the step is acceptable when `≤ 1`.
    pub err: f64,
}

impl Dopri5 {
    /// One step of size `h` from `(t, y)` with `dy = rhs(t, y)` already known.
    pub fn step(
        &self,
        rhs: &impl Fn(f64, &State) -> State,
        t: f64,
        y: &State,
        dy: &State,
        h: f64,
    ) -> Trial {
        let mut k = [[0.0; 6]; 7];
        k[0] = *dy;
        for s in 1..7 {
            let mut ys = *y;
            for (j, kj) in k.iter().enumerate().take(s) {
                let a = A[s][j];
                if a != 0.0 {
                    for i in 0..6 {
                        ys[i] += h * a * kj[i];
                    }
                }
            }
            if s == 6 {
                k[6] = rhs(t + h, &ys);
                let mut sq = 0.0;
                for i in 0..6 {
                    let e: f64 = (0..7).map(|j| E[j] * k[j][i]).sum::<f64>() * h;
                    let sc = self.atol + self.rtol * y[i].abs().max(ys[i].abs());
                    sq += (e / sc).powi(2);
                }
                return Trial {
                    y: ys,
                    dy: k[6],
                    err: (sq / 6.0).sqrt(),
                };
            }
            k[s] = rhs(t + C[s] * h, &ys);
        }
        unreachable!()
    }

    pub fn next_h(h: f64, err: f64) -> f64 {
        let fac = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h * fac
    }

    /// Initial step guess from the local scales of `y` and `dy`.
    pub fn initial_h(&self, y: &State, dy: &State, span: f64) -> f64 {
        let mut d0 = 0.0f64;
        let mut d1 = 0.0f64;
        for i in 0..6 {
            let sc = self.atol + self.rtol * y[i].abs();
            d0 = d0.max((y[i] / sc).abs());
            d1 = d1.max((dy[i] / sc).abs());
        }
        let h = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        h.min(span).min(1e-2 * span.max(1.0)).max(1e-12)
    }

    /// Guards against step-size collapse.
    pub fn check_h(h: f64, t: f64) -> Result<()> {
        if !(h.is_finite() && h > 1e-14 * (1.0 + t.abs())) {
            return Err(Error::Integration {
                t,
                reason: format!("step size collapsed to {h:e}"),
            });
        }
        Ok(())
    }
}

/// Cubic Hermite interpolant of component `i` on a step, at fraction `s ∈ [0, 1]`.
pub fn hermite(y0: &State, d0: &State, y1: &State, d1: &State, h: f64, s: f64, i: usize) -> f64 {
    let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    let h10 = s * (1.0 - s) * (1.0 - s);
    let h01 = s * s * (3.0 - 2.0 * s);
    let h11 = s * s * (s - 1.0);
    h00 * y0[i] + h * h10 * d0[i] + h01 * y1[i] + h * h11 * d1[i]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn integrate(ode: &Dopri5, rhs: impl Fn(f64, &State) -> State, y0: State, t_end: f64) -> State {
        let (mut t, mut y) = (0.0, y0);
        let mut dy = rhs(t, &y);
        let mut h = ode.initial_h(&y, &dy, t_end);
        while t < t_end {
            h = h.min(t_end - t);
            let tr = ode.step(&rhs, t, &y, &dy, h);
            if tr.err <= 1.0 {
                t += h;
                y = tr.y;
                dy = tr.dy;
            }
            h = Dopri5::next_h(h, tr.err);
        }
        y
    }

    #[test]
    fn harmonic_oscillator_period() {
        let ode = Dopri5::default();
        let rhs = |_t: f64, y: &State| [y[1], -y[0], 0.0, 0.0, 0.0, 0.0];
        let y = integrate(
            &ode,
            rhs,
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            20.0 * std::f64::consts::PI,
        );
        assert!((y[0] - 1.0).abs() < 1e-8 && y[1].abs() < 1e-8);
    }

    #[test]
    fn fifth_order_on_a_fixed_step() {
        // one step on y' = y: local error scales like h⁶
        let ode = Dopri5::default();
        let rhs = |_t: f64, y: &State| *y;
        let err = |h: f64| {
            let y0 = [1.0; 6];
            (ode.step(&rhs, 0.0, &y0, &y0, h).y[0] - h.exp()).abs()
        };
        let p = (err(0.2) / err(0.1)).log2();
        assert!((p - 6.0).abs() < 0.3, "local order {p}");
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let f = |t: f64| 1.0 + 2.0 * t - t * t + 0.5 * t * t * t;
        let df = |t: f64| 2.0 - 2.0 * t + 1.5 * t * t;
        let (a, h) = (0.3, 0.7);
        let y0 = [f(a), 0., 0., 0., 0., 0.];
        let y1 = [f(a + h), 0., 0., 0., 0., 0.];
        let d0 = [df(a), 0., 0., 0., 0., 0.];
        let d1 = [df(a + h), 0., 0., 0., 0., 0.];
        for s in [0.0, 0.25, 0.6, 1.0] {
            assert!((hermite(&y0, &d0, &y1, &d1, h, s, 0) - f(a + s * h)).abs() < 1e-14);
        }
    }

    #[test]
    fn collapse_is_reported() {
        assert!(Dopri5::check_h(1e-20, 1.0).is_err());
        assert!(Dopri5::check_h(f64::NAN, 1.0).is_err());
        assert!(Dopri5::check_h(1e-3, 1.0).is_ok());
    }
}
