//! Dormand–Prince 5(4) integrator with step-size control and dense output.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
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
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];
const D: [f64; 7] = [
    -12715105075.0 / 11282082432.0,
    0.0,
    87487479700.0 / 32700410799.0,
    -10690763975.0 / 1880347072.0,
    701980252875.0 / 199316789632.0,
    -1453857185.0 / 822651844.0,
    69997945.0 / 29380423.0,
];

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub max_steps: usize,
    /// Components excluded from the error norm (trailing quadrature states).
    pub controlled: Option<usize>,
    /// Abort when any component exceeds this magnitude.
    pub blowup: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-14,
            h_init: 1e-6,
            max_steps: 200_000,
            controlled: None,
            blowup: 1e15,
        }
    }
}

/// One accepted step with its continuous extension.
#[derive(Clone, Debug)]
struct Segment {
    t0: f64,
    h: f64,
    r: [Vec<f64>; 5],
}

/// Piecewise quartic dense output over the integration interval.
#[derive(Clone, Debug, Default)]
pub struct DenseOutput {
    segments: Vec<Segment>,
}

impl DenseOutput {
    pub fn t_start(&self) -> f64 {
        self.segments.first().map_or(0.0, |s| s.t0)
    }

    pub fn t_end(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.t0 + s.h)
    }

    pub fn steps(&self) -> usize {
        self.segments.len()
    }

    /// State at `t`, clamped to the integration interval.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let i = self
            .segments
            .partition_point(|s| s.t0 + s.h < t)
            .min(self.segments.len() - 1);
        let s = &self.segments[i];
        let th = ((t - s.t0) / s.h).clamp(0.0, 1.0);
        let th1 = 1.0 - th;
        (0..s.r[0].len())
            .map(|j| {
                s.r[0][j] + th * (s.r[1][j] + th1 * (s.r[2][j] + th * (s.r[3][j] + th1 * s.r[4][j])))
            })
            .collect()
    }
}

/// Integrates `y' = f(t, y)` from `t0` to `t1 > t0`.
pub fn dopri5<F>(f: F, t0: f64, y0: &[f64], t1: f64, opts: OdeOptions) -> Result<(Vec<f64>, DenseOutput)>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let m = y0.len();
    let mc = opts.controlled.unwrap_or(m).min(m);
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; m]; 7];
    let mut tmp = vec![0.0; m];
    let mut y1 = vec![0.0; m];
    let mut h = opts.h_init.min(t1 - t0);
    let mut dense = DenseOutput::default();
    f(t, &y, &mut k[0]);
    let mut steps = 0;
    while t < t1 {
        if steps >= opts.max_steps {
            return Err(Error::Integration {
                message: "step budget exhausted".into(),
                radius: t,
            });
        }
        steps += 1;
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }
        for s in 1..7 {
            for j in 0..m {
                let mut acc = y[j];
                for (q, a) in A[s].iter().enumerate().take(s) {
                    acc += h * a * k[q][j];
                }
                tmp[j] = acc;
            }
            if s == 6 {
                y1.copy_from_slice(&tmp);
            }
            f(t + C[s] * h, &tmp, &mut k[s]);
        }
        let mut err = 0.0;
        for j in 0..mc {
            let e: f64 = (0..7).map(|s| E[s] * k[s][j]).sum::<f64>() * h;
            let sc = opts.atol + opts.rtol * y[j].abs().max(y1[j].abs());
            err += (e / sc) * (e / sc);
        }
        let err = (err / mc.max(1) as f64).sqrt();
        if !err.is_finite() {
            h *= 0.2;
            if h < 1e-15 * t.abs().max(1.0) {
                return Err(Error::Integration {
                    message: "non-finite state".into(),
                    radius: t,
                });
            }
            continue;
        }
        if err <= 1.0 {
            let mut r: [Vec<f64>; 5] = Default::default();
            r[0] = y.clone();
            r[1] = (0..m).map(|j| y1[j] - y[j]).collect();
            r[2] = (0..m).map(|j| h * k[0][j] - r[1][j]).collect();
            r[3] = (0..m).map(|j| r[1][j] - h * k[6][j] - r[2][j]).collect();
            r[4] = (0..m)
                .map(|j| h * (0..7).map(|s| D[s] * k[s][j]).sum::<f64>())
                .collect();
            dense.segments.push(Segment { t0: t, h, r });
            t = if last { t1 } else { t + h };
            y.copy_from_slice(&y1);
            let k6 = k[6].clone();
            k[0] = k6;
            if y.iter().any(|v| v.abs() > opts.blowup) {
                return Err(Error::Integration {
                    message: "solution blew up".into(),
                    radius: t,
                });
            }
        }
        let fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
        h *= fac;
        if h < 1e-15 * t.abs().max(1.0) {
            return Err(Error::Integration {
                message: "step size underflow".into(),
                radius: t,
            });
        }
    }
    Ok((y, dense))
}
