//! Adaptive Dormand-Prince 5(4) integrator for complex vector ODEs.
//!
//! Output times are hit exactly by clipping the step; the step size carries
//! over between output intervals.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Multiply `atol` by the current 2-norm of the state. Keeps relative
    /// accuracy for states whose norm decays by many orders of magnitude.
    pub atol_scaled_by_norm: bool,
    pub max_steps: usize,
    pub initial_step: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            atol_scaled_by_norm: true,
            max_steps: 50_000_000,
            initial_step: None,
        }
    }
}

impl OdeOptions {
    pub fn with_tolerances(rtol: f64, atol: f64) -> Self {
        Self {
            rtol,
            atol,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

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
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn norm2(y: &[Complex64]) -> f64 {
    y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Integrates `dy/dt = f(t, y)` from `(t0, y0)` and calls `output(t, y)` at
/// every time of `t_grid`. The callback may rescale `y` in place (only
/// meaningful for linear systems).
pub fn integrate<F, O>(
    mut f: F,
    t0: f64,
    y0: &[Complex64],
    t_grid: &[f64],
    opts: &OdeOptions,
    mut output: O,
) -> Result<OdeStats>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
    O: FnMut(f64, &mut [Complex64]) -> Result<()>,
{
    if !(opts.rtol > 0.0) || !(opts.atol > 0.0) {
        return Err(Error::InvalidParameter("ODE tolerances must be positive".into()));
    }
    if let Some(&first) = t_grid.first() {
        if first < t0 {
            return Err(Error::InvalidParameter(format!("output time {first} precedes start {t0}")));
        }
    }
    if t_grid.windows(2).any(|w| !(w[1] >= w[0])) {
        return Err(Error::InvalidParameter("output times must be non-decreasing".into()));
    }

    let n = y0.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut y = y0.to_vec();
    let mut ynew = vec![zero; n];
    let mut tmp = vec![zero; n];
    let mut k: [Vec<Complex64>; 7] = std::array::from_fn(|_| vec![zero; n]);
    let mut stats = OdeStats::default();
    let mut t = t0;

    f(t, &y, &mut k[0]);
    stats.evaluations += 1;

    let err_scale = |y: &[Complex64], opts: &OdeOptions| {
        if opts.atol_scaled_by_norm {
            opts.atol * norm2(y).max(f64::MIN_POSITIVE)
        } else {
            opts.atol
        }
    };

    let mut h = match opts.initial_step {
        Some(h) => h,
        None => {
            let a = err_scale(&y, opts);
            let d0 = rms(&y, &y, a, opts.rtol, &y);
            let d1 = rms(&k[0], &y, a, opts.rtol, &y);
            let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
            h0.max(1e-12)
        }
    };

    for &t_out in t_grid {
        while t < t_out {
            if stats.accepted + stats.rejected >= opts.max_steps {
                return Err(Error::TooManySteps(opts.max_steps));
            }
            let remaining = t_out - t;
            let last = h >= remaining;
            let hs = if last { remaining } else { h };
            if hs <= 1e-14 * t.abs().max(1.0) && !last {
                return Err(Error::StepSizeUnderflow { t });
            }

            macro_rules! stage {
                ($dst:expr, $ts:expr, [$(($a:expr, $ki:expr)),*]) => {{
                    for i in 0..n {
                        let mut acc = zero;
                        $( acc += k[$ki][i] * $a; )*
                        tmp[i] = y[i] + acc * hs;
                    }
                    let (_, rest) = k.split_at_mut($dst);
                    f($ts, &tmp, &mut rest[0]);
                }};
            }
            stage!(1, t + C2 * hs, [(A21, 0)]);
            stage!(2, t + C3 * hs, [(A31, 0), (A32, 1)]);
            stage!(3, t + C4 * hs, [(A41, 0), (A42, 1), (A43, 2)]);
            stage!(4, t + C5 * hs, [(A51, 0), (A52, 1), (A53, 2), (A54, 3)]);
            stage!(5, t + hs, [(A61, 0), (A62, 1), (A63, 2), (A64, 3), (A65, 4)]);
            for i in 0..n {
                ynew[i] = y[i]
                    + (k[0][i] * A71 + k[2][i] * A73 + k[3][i] * A74 + k[4][i] * A75 + k[5][i] * A76) * hs;
            }
            {
                let (_, rest) = k.split_at_mut(6);
                f(t + hs, &ynew, &mut rest[0]);
            }
            stats.evaluations += 6;

            for i in 0..n {
                tmp[i] = (k[0][i] * E1 + k[2][i] * E3 + k[3][i] * E4 + k[4][i] * E5 + k[5][i] * E6 + k[6][i] * E7)
                    * hs;
            }
            let a = err_scale(&y, opts);
            let err = rms(&tmp, &y, a, opts.rtol, &ynew);
            if !err.is_finite() {
                stats.rejected += 1;
                h = hs * 0.2;
                continue;
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                stats.accepted += 1;
                t = if last { t_out } else { t + hs };
                std::mem::swap(&mut y, &mut ynew);
                k.swap(0, 6);
                // a clipped final step should not shrink the carried size
                h = if last { h.max(hs * fac) } else { hs * fac };
            } else {
                stats.rejected += 1;
                h = hs * fac.min(1.0);
            }
        }
        let before = norm2(&y);
        output(t, &mut y)?;
        let after = norm2(&y);
        if after != before {
            // the callback rescaled the state; the derivative is linear in y
            if before > 0.0 {
                let s = after / before;
                k[0].iter_mut().for_each(|v| *v *= s);
            } else {
                f(t, &y, &mut k[0]);
                stats.evaluations += 1;
            }
        }
    }
    Ok(stats)
}

fn rms(e: &[Complex64], y: &[Complex64], atol: f64, rtol: f64, ynew: &[Complex64]) -> f64 {
    let n = e.len().max(1) as f64;
    let s: f64 = e
        .iter()
        .zip(y.iter().zip(ynew))
        .map(|(ei, (yi, zi))| {
            let sc = atol + rtol * yi.norm().max(zi.norm());
            (ei.norm() / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}
