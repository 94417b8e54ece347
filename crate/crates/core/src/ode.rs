//! Dormand–Prince 5(4) explicit Runge–Kutta with embedded error control.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5 {
    pub rtol: f64,
    pub atol: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            h_min: 1e-12,
            h_max: f64::INFINITY,
            max_steps: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

impl Dopri5 {
    pub fn new(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }

    /// Integrates `y' = f(t, y)` from `t0`, landing exactly on every time in
    /// `stops` (strictly increasing, all `> t0`).
    ///
    /// After each accepted step `project` may modify the state in place
    /// (e.g. to restore an invariant) and `observe(t, y, at_stop)` is called.
    pub fn solve<F, P, O>(
        &self,
        mut f: F,
        t0: f64,
        y0: &[f64],
        stops: &[f64],
        mut project: P,
        mut observe: O,
    ) -> Result<Stats>
    where
        F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
        P: FnMut(f64, &mut [f64]) -> Result<()>,
        O: FnMut(f64, &[f64], bool) -> Result<()>,
    {
        let dim = y0.len();
        let mut y = y0.to_vec();
        let mut t = t0;
        let mut stats = Stats::default();
        let Some(&t_end) = stops.last() else {
            return Ok(stats);
        };

        let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; dim]);
        let mut tmp = vec![0.0; dim];
        let mut y_new = vec![0.0; dim];

        f(t, &y, &mut k[0])?;
        stats.evaluations += 1;
        let mut h = self.initial_step(&y, &k[0], t_end - t0);
        let mut next_stop = 0;

        while next_stop < stops.len() {
            if stats.accepted + stats.rejected >= self.max_steps {
                return Err(Error::StepSizeUnderflow {
                    t,
                    h,
                    state: y.clone(),
                });
            }
            let target = stops[next_stop];
            let mut hits_stop = false;
            let mut step = h.min(self.h_max);
            if t + step >= target - 1e-12 * target.abs().max(1.0) {
                step = target - t;
                hits_stop = true;
            }
            if step < self.h_min && !hits_stop {
                return Err(Error::StepSizeUnderflow {
                    t,
                    h: step,
                    state: y.clone(),
                });
            }

            let stages: [(f64, &[f64]); 5] = [
                (C2, &[A21]),
                (C3, &[A31, A32]),
                (C4, &[A41, A42, A43]),
                (C5, &[A51, A52, A53, A54]),
                (1.0, &[A61, A62, A63, A64, A65]),
            ];
            for (s, (c, a)) in stages.iter().enumerate() {
                for d in 0..dim {
                    let mut acc = 0.0;
                    for (m, coef) in a.iter().enumerate() {
                        acc += coef * k[m][d];
                    }
                    tmp[d] = y[d] + step * acc;
                }
                f(t + c * step, &tmp, &mut k[s + 1])?;
            }
            for d in 0..dim {
                y_new[d] = y[d]
                    + step
                        * (A71 * k[0][d] + A73 * k[2][d] + A74 * k[3][d] + A75 * k[4][d]
                            + A76 * k[5][d]);
            }
            f(t + step, &y_new, &mut k[6])?;
            stats.evaluations += 6;

            let mut err = 0.0;
            for d in 0..dim {
                let e = step
                    * (E1 * k[0][d] + E3 * k[2][d] + E4 * k[3][d] + E5 * k[4][d] + E6 * k[5][d]
                        + E7 * k[6][d]);
                let scale = self.atol + self.rtol * y[d].abs().max(y_new[d].abs());
                err += (e / scale).powi(2);
            }
            let err = (err / dim as f64).sqrt();

            if err <= 1.0 {
                t = if hits_stop { target } else { t + step };
                std::mem::swap(&mut y, &mut y_new);
                project(t, &mut y)?;
                stats.accepted += 1;
                if hits_stop {
                    next_stop += 1;
                }
                observe(t, &y, hits_stop)?;
                f(t, &y, &mut k[0])?;
                stats.evaluations += 1;
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                // a step shortened to land on a stop says little about the
                // admissible size, so keep the longer proposal
                h = if hits_stop { h.max(step * factor) } else { step * factor };
            } else {
                stats.rejected += 1;
                let factor = if err.is_finite() {
                    (0.9 * err.powf(-0.2)).clamp(0.1, 1.0)
                } else {
                    0.1
                };
                h = step * factor;
                if h < self.h_min {
                    return Err(Error::StepSizeUnderflow {
                        t,
                        h,
                        state: y.clone(),
                    });
                }
            }
        }
        Ok(stats)
    }

    fn initial_step(&self, y: &[f64], dy: &[f64], span: f64) -> f64 {
        let (mut d0, mut d1) = (0.0, 0.0);
        for (a, b) in y.iter().zip(dy) {
            let sc = self.atol + self.rtol * a.abs();
            d0 += (a / sc).powi(2);
            d1 += (b / sc).powi(2);
        }
        let (d0, d1) = (d0.sqrt(), d1.sqrt());
        let h = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        h.min(span).min(self.h_max).max(self.h_min)
    }
}
