//! Dormand-Prince 5(4) integrator with a domain guard.
//!
//! The right-hand side may refuse a state (for the coflow: leaving the cone
//! of stable forms). Such a trial step is rejected and retried with a
//! quarter of the step, so the integrator stops by step underflow at the
//! boundary of the domain rather than stepping across it.

use crate::error::{Error, Result};

pub trait OdeSystem {
    fn dim(&self) -> usize;

    /// Writes `dy/dt` at `(t, y)` into `dy`; returns `false` when `y` lies
    /// outside the domain.
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> bool;
}

#[derive(Clone, Copy, Debug)]
pub struct Options {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: Option<f64>,
    pub max_step: f64,
    pub max_steps: usize,
}

impl Options {
    pub fn with_tol(tol: f64) -> Self {
        Options {
            rtol: tol,
            atol: tol,
            initial_step: None,
            max_step: f64::INFINITY,
            max_steps: 1_000_000,
        }
    }
}

/// Returned by the step observer after each accepted step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepControl {
    /// Continue with at most this step length.
    Continue(f64),
    Stop,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Stop {
    Completed,
    /// The step length fell below the resolution of `t`; the last attempted
    /// step was `h`. `boundary` is set when the last rejection came from the
    /// domain guard rather than the error estimate.
    StepUnderflow { h: f64, boundary: bool },
    Observer,
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub t: f64,
    pub y: Vec<f64>,
    pub accepted: usize,
    pub rejected: usize,
    pub stop: Stop,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];

const A: [[f64; 6]; 7] = [
    [0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
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

/// Integrates from `(t0, y0)` towards `t1` (either direction). `observe` is
/// called with `(t, y, dy/dt)` at `t0` and after every accepted step.
pub fn dopri5<S: OdeSystem>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t1: f64,
    opts: &Options,
    mut observe: impl FnMut(f64, &[f64], &[f64]) -> StepControl,
) -> Result<Outcome> {
    let n = sys.dim();
    if y0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: y0.len(),
        });
    }
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k = vec![vec![0.0; n]; 7];
    if !sys.rhs(t, &y, &mut k[0]) {
        return Err(Error::ToleranceFailure("initial state outside the domain".into()));
    }
    let mut cap = match observe(t, &y, &k[0]) {
        StepControl::Continue(c) => c,
        StepControl::Stop => {
            return Ok(Outcome { t, y, accepted: 0, rejected: 0, stop: Stop::Observer });
        }
    };
    let scale0: f64 = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let slope0: f64 = k[0].iter().map(|v| v.abs()).fold(0.0, f64::max);
    let mut h = opts.initial_step.unwrap_or_else(|| {
        if slope0 > 0.0 {
            (0.01 * (scale0.max(opts.atol)) / slope0).max(1e-10)
        } else {
            1e-3
        }
    });
    let mut ynew = vec![0.0; n];
    let mut stage = vec![0.0; n];
    let (mut accepted, mut rejected) = (0usize, 0usize);
    let mut last_rejected = false;
    let mut boundary_hit = false;
    loop {
        let remaining = (t1 - t).abs();
        if remaining == 0.0 {
            return Ok(Outcome { t, y, accepted, rejected, stop: Stop::Completed });
        }
        if accepted + rejected >= opts.max_steps {
            return Err(Error::ToleranceFailure(format!(
                "step budget of {} exhausted at t = {t}",
                opts.max_steps
            )));
        }
        h = h.min(opts.max_step).min(cap);
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        if h <= 4.0 * f64::EPSILON * t.abs().max(1e-3) {
            let stop = Stop::StepUnderflow { h, boundary: boundary_hit };
            return Ok(Outcome { t, y, accepted, rejected, stop });
        }
        let hs = dir * h;
        let mut inside = true;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += A[s][j] * kj[i];
                }
                stage[i] = y[i] + hs * acc;
            }
            let (_, tail) = k.split_at_mut(s);
            if !sys.rhs(t + C[s] * hs, &stage, &mut tail[0]) {
                inside = false;
                break;
            }
            if s == 6 {
                ynew.copy_from_slice(&stage);
            }
        }
        let mut err = f64::INFINITY;
        if inside {
            let mut kend = vec![0.0; n];
            if sys.rhs(t + hs, &ynew, &mut kend) {
                err = 0.0;
                for i in 0..n {
                    let mut e = 0.0;
                    for s in 0..6 {
                        e += E[s] * k[s][i];
                    }
                    e += E[6] * kend[i];
                    let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
                    err = err.max((hs * e).abs() / sc);
                }
                if err.is_nan() {
                    err = f64::INFINITY;
                }
                k[6] = kend;
            } else {
                inside = false;
            }
        }
        if !inside {
            rejected += 1;
            last_rejected = true;
            boundary_hit = true;
            h *= 0.25;
            continue;
        }
        if err <= 1.0 {
            t = if last { t1 } else { t + hs };
            std::mem::swap(&mut y, &mut ynew);
            k.swap(0, 6);
            accepted += 1;
            boundary_hit = false;
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= if last_rejected { fac.min(1.0) } else { fac };
            last_rejected = false;
            match observe(t, &y, &k[0]) {
                StepControl::Continue(c) => cap = c,
                StepControl::Stop => {
                    return Ok(Outcome { t, y, accepted, rejected, stop: Stop::Observer });
                }
            }
        } else {
            rejected += 1;
            last_rejected = true;
            boundary_hit = false;
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Decay;
    impl OdeSystem for Decay {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> bool {
            dy[0] = -y[0];
            dy[1] = y[0] - 2.0 * y[1];
            true
        }
    }

    struct Riccati;
    impl OdeSystem for Riccati {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> bool {
            dy[0] = y[0] * y[0];
            y[0].is_finite() && y[0] < 1e12
        }
    }

    #[test]
    fn linear_system_matches_exact_solution() {
        let out = dopri5(&Decay, 0.0, &[1.0, 0.0], 3.0, &Options::with_tol(1e-11), |_, _, _| {
            StepControl::Continue(f64::INFINITY)
        })
        .unwrap();
        assert_eq!(out.stop, Stop::Completed);
        assert_eq!(out.t, 3.0);
        let e = (-3.0f64).exp();
        assert!((out.y[0] - e).abs() < 1e-10);
        assert!((out.y[1] - (e - (-6.0f64).exp())).abs() < 1e-10);
    }

    #[test]
    fn backward_integration() {
        let out = dopri5(&Decay, 0.0, &[1.0, 0.0], -1.0, &Options::with_tol(1e-11), |_, _, _| {
            StepControl::Continue(f64::INFINITY)
        })
        .unwrap();
        assert!((out.y[0] - 1f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn blow_up_ends_in_step_underflow() {
        let out = dopri5(&Riccati, 0.0, &[1.0], 2.0, &Options::with_tol(1e-10), |_, _, _| {
            StepControl::Continue(f64::INFINITY)
        })
        .unwrap();
        assert!(matches!(out.stop, Stop::StepUnderflow { .. }));
        assert!((out.t - 1.0).abs() < 1e-6);
    }
}
